//! Small dense-vector helpers on `f64` slices.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

pub fn neg(a: &[f64]) -> Vec<f64> {
    scale(a, -1.0)
}

/// Row-major square matrix times vector.
pub fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d).map(|i| dot(&m[i * d..(i + 1) * d], v)).collect()
}

/// Orthonormal pair `(e1, e2)` spanning the plane of `a` and `b`.
///
/// `e1` is along `a` (or `b` when `a` vanishes); `e2` is the normalized part of
/// `b` orthogonal to `e1`, or an arbitrary unit vector orthogonal to `e1` when
/// the two inputs are parallel.
pub fn plane_frame(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = a.len();
    let na = norm(a);
    let nb = norm(b);
    let e1 = if na > 0.0 {
        scale(a, 1.0 / na)
    } else if nb > 0.0 {
        scale(b, 1.0 / nb)
    } else {
        let mut e = vec![0.0; d];
        e[0] = 1.0;
        e
    };
    let p = dot(b, &e1);
    let perp = sub(b, &scale(&e1, p));
    let np = norm(&perp);
    let e2 = if np > 1e-14 * nb.max(1.0) {
        scale(&perp, 1.0 / np)
    } else {
        // any unit vector orthogonal to e1
        let k = (0..d)
            .min_by(|&i, &j| e1[i].abs().partial_cmp(&e1[j].abs()).unwrap())
            .unwrap_or(0);
        let mut c = vec![0.0; d];
        if d > 1 {
            c[k] = 1.0;
        }
        let q = sub(&c, &scale(&e1, dot(&c, &e1)));
        let nq = norm(&q);
        if nq > 0.0 {
            scale(&q, 1.0 / nq)
        } else {
            q
        }
    };
    (e1, e2)
}
