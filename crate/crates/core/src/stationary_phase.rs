//! Local stationary-phase algebra for the configuration surface.
//!
//! Near the base pair `x⁰ = (0, 0', 1)`, `y⁰ = (√3/2, 0', 1/2)` the surface
//! `{|x| = |y| = 1, x·y = 1/2}` is parametrized by `(u₁, u', v') ∈ R^{2d-3}`.
//! [`chart`] is the quadratic (cubic-error) chart; [`exact_chart`] lies on the
//! surface exactly and backs every finite-difference oracle here.
//!
//! Vector layout for gradients and Hessians: `[u₁, u'₁..u'_{d-2}, v'₁..v'_{d-2}]`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::special::sphere_area;
use crate::vecmath::{dot, norm, sub};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Radius of the chart validity window.
pub const CHART_WINDOW: f64 = 0.1;

/// Chart coordinates `(u₁, u', v')`; the ambient dimension is `u'.len() + 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalCoords {
    pub u1: f64,
    pub u_prime: Vec<f64>,
    pub v_prime: Vec<f64>,
}

impl LocalCoords {
    pub fn new(u1: f64, u_prime: Vec<f64>, v_prime: Vec<f64>) -> Result<Self> {
        if u_prime.len() != v_prime.len() {
            return Err(precondition("u' and v' must have equal length"));
        }
        let c = Self { u1, u_prime, v_prime };
        if c.magnitude() >= CHART_WINDOW {
            return Err(precondition(format!("|coords| = {} outside chart window", c.magnitude())));
        }
        Ok(c)
    }

    pub fn zero(d: usize) -> Self {
        Self { u1: 0.0, u_prime: vec![0.0; d - 2], v_prime: vec![0.0; d - 2] }
    }

    pub fn dim(&self) -> usize {
        self.u_prime.len() + 2
    }

    pub fn magnitude(&self) -> f64 {
        (self.u1 * self.u1 + dot(&self.u_prime, &self.u_prime) + dot(&self.v_prime, &self.v_prime)).sqrt()
    }

    /// Flattened `[u₁, u', v']`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.u1];
        v.extend_from_slice(&self.u_prime);
        v.extend_from_slice(&self.v_prime);
        v
    }

    /// Inverse of [`LocalCoords::to_vec`]; no window check.
    pub fn from_slice(v: &[f64]) -> Self {
        let k = (v.len() - 1) / 2;
        Self { u1: v[0], u_prime: v[1..1 + k].to_vec(), v_prime: v[1 + k..].to_vec() }
    }

    fn check_window(&self) -> Result<()> {
        if self.magnitude() >= CHART_WINDOW {
            return Err(precondition("coordinates outside chart window"));
        }
        Ok(())
    }
}

/// Chart image with constraint residuals `(|x| - 1, |y| - 1, |x - y| - 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartPointPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub residuals: [f64; 3],
}

fn residuals(x: &[f64], y: &[f64]) -> [f64; 3] {
    [norm(x) - 1.0, norm(y) - 1.0, norm(&sub(x, y)) - 1.0]
}

/// `v₁` from the quadratic implicit solve of `x(u)·y(v) = 1/2`.
pub fn chart_v1(c: &LocalCoords) -> f64 {
    let uu = dot(&c.u_prime, &c.u_prime);
    let vv = dot(&c.v_prime, &c.v_prime);
    let uv = dot(&c.u_prime, &c.v_prime);
    0.5 * c.u1 - SQRT3 / 4.0 * c.u1 * c.u1 - SQRT3 / 12.0 * uu - vv / SQRT3 + uv / SQRT3
}

/// Quadratic chart: `x = (u, 1 - |u|²/2)` and `y` from the second-order
/// parametrization with `v₁` substituted.
pub fn chart(c: &LocalCoords) -> Result<ChartPointPair> {
    c.check_window()?;
    let d = c.dim();
    let uu = c.u1 * c.u1 + dot(&c.u_prime, &c.u_prime);
    let up2 = dot(&c.u_prime, &c.u_prime);
    let uv = dot(&c.u_prime, &c.v_prime);
    let mut x = vec![0.0; d];
    x[0] = c.u1;
    x[1..d - 1].copy_from_slice(&c.u_prime);
    x[d - 1] = 1.0 - uu / 2.0;
    let mut y = vec![0.0; d];
    y[0] = SQRT3 / 2.0 + chart_v1(c);
    y[1..d - 1].copy_from_slice(&c.v_prime);
    y[d - 1] = 0.5 - SQRT3 / 2.0 * c.u1 - 0.25 * c.u1 * c.u1 + 0.25 * up2 - uv;
    let residuals = residuals(&x, &y);
    Ok(ChartPointPair { x, y, residuals })
}

/// Chart landing exactly on the surface.
///
/// `x = (u₁, u', √(1 - |u|²))`; `y = (y₁, v', y_d)` where `(y₁, y_d)` is the
/// intersection of the circle `y₁² + y_d² = 1 - |v'|²` with the line
/// `x₁y₁ + x_d y_d = 1/2 - u'·v'` on the branch through `y⁰`.
pub fn exact_chart(c: &LocalCoords) -> Result<ChartPointPair> {
    let d = c.dim();
    let uu = c.u1 * c.u1 + dot(&c.u_prime, &c.u_prime);
    let vv = dot(&c.v_prime, &c.v_prime);
    if uu >= 1.0 || vv >= 1.0 {
        return Err(precondition("coordinates leave the unit ball"));
    }
    let mut x = vec![0.0; d];
    x[0] = c.u1;
    x[1..d - 1].copy_from_slice(&c.u_prime);
    x[d - 1] = (1.0 - uu).sqrt();
    let rho2 = 1.0 - vv;
    let cc = 0.5 - dot(&c.u_prime, &c.v_prime);
    let (n1, nd) = (x[0], x[d - 1]);
    let m2 = n1 * n1 + nd * nd;
    let disc = rho2 - cc * cc / m2;
    if disc < 0.0 {
        return Err(precondition("no real partner point for these coordinates"));
    }
    let h = (disc / m2).sqrt();
    // p0 = c n / |n|², tangent (-n_d, n_1); the branch with y₁ > 0 subtracts h·tangent.
    let mut y = vec![0.0; d];
    y[0] = cc * n1 / m2 + h * nd;
    y[d - 1] = cc * nd / m2 - h * n1;
    y[1..d - 1].copy_from_slice(&c.v_prime);
    let residuals = residuals(&x, &y);
    Ok(ChartPointPair { x, y, residuals })
}

/// `s = t/a₁ - a₂t²/a₁³`, the quadratic-order inverse of `a₁s + a₂s² = t`.
pub fn implicit_solve_check(a1: f64, a2: f64, t: f64) -> Result<f64> {
    if a1 == 0.0 {
        return Err(precondition("a1 must be nonzero"));
    }
    Ok(t / a1 - a2 * t * t / (a1 * a1 * a1))
}

/// Exact phase `x·ξ + y·η` on the surface.
pub fn exact_phase(c: &LocalCoords, xi: &[f64], eta: &[f64]) -> Result<f64> {
    let p = exact_chart(c)?;
    Ok(dot(&p.x, xi) + dot(&p.y, eta))
}

fn check_dims(c: &LocalCoords, xi: &[f64], eta: &[f64]) -> Result<usize> {
    let d = c.dim();
    if xi.len() != d || eta.len() != d {
        return Err(precondition("frequency dimension does not match coordinates"));
    }
    Ok(d)
}

/// Closed-form gradient of the quadratic phase `Ū·(ξ, η)`.
pub fn phase_gradient(c: &LocalCoords, xi: &[f64], eta: &[f64]) -> Result<Vec<f64>> {
    c.check_window()?;
    let d = check_dims(c, xi, eta)?;
    let (x1, xd, e1, ed) = (xi[0], xi[d - 1], eta[0], eta[d - 1]);
    let u1 = c.u1;
    let mut g = vec![x1 - u1 * xd + 0.5 * e1 - SQRT3 / 2.0 * u1 * e1 - SQRT3 / 2.0 * ed - 0.5 * u1 * ed];
    for k in 0..d - 2 {
        let (u, v) = (c.u_prime[k], c.v_prime[k]);
        g.push(xi[1 + k] - u * xd - u * e1 / (2.0 * SQRT3) + v * e1 / SQRT3 + 0.5 * u * ed - v * ed);
    }
    for k in 0..d - 2 {
        let (u, v) = (c.u_prime[k], c.v_prime[k]);
        g.push(-2.0 / SQRT3 * v * e1 + u * e1 / SQRT3 + eta[1 + k] - u * ed);
    }
    Ok(g)
}

/// Central-difference gradient of the exact phase with one Richardson step.
pub fn numerical_gradient(c: &LocalCoords, xi: &[f64], eta: &[f64], h: f64) -> Result<Vec<f64>> {
    check_dims(c, xi, eta)?;
    let base = c.to_vec();
    let n = base.len();
    let f = |v: &[f64]| exact_phase(&LocalCoords::from_slice(v), xi, eta);
    let mut g = Vec::with_capacity(n);
    for i in 0..n {
        let cd = |step: f64| -> Result<f64> {
            let mut p = base.clone();
            let mut m = base.clone();
            p[i] += step;
            m[i] -= step;
            Ok((f(&p)? - f(&m)?) / (2.0 * step))
        };
        let (a, b) = (cd(h)?, cd(h / 2.0)?);
        g.push((4.0 * b - a) / 3.0);
    }
    Ok(g)
}

fn check_step(h: f64) -> Result<()> {
    if !(1e-4..=1e-2).contains(&h) {
        return Err(precondition("finite-difference step must lie in [1e-4, 1e-2]"));
    }
    Ok(())
}

/// Second central differences of the exact phase at the base point, with a
/// Richardson step from `h` to `h/2`. Row-major `(2d-3) × (2d-3)`.
pub fn hessian_fd(xi: &[f64], eta: &[f64], h: f64) -> Result<Vec<f64>> {
    check_step(h)?;
    let d = xi.len();
    if eta.len() != d || d < 2 {
        return Err(precondition("xi and eta must share a dimension ≥ 2"));
    }
    let n = 2 * d - 3;
    let f = |v: &[f64]| exact_phase(&LocalCoords::from_slice(v), xi, eta);
    let at = |i: usize, si: f64, j: usize, sj: f64| -> Result<f64> {
        let mut v = vec![0.0; n];
        v[i] += si;
        v[j] += sj;
        f(&v)
    };
    let f0 = f(&vec![0.0; n])?;
    let second = |i: usize, j: usize, s: f64| -> Result<f64> {
        if i == j {
            Ok((at(i, s, i, 0.0)? - 2.0 * f0 + at(i, -s, i, 0.0)?) / (s * s))
        } else {
            Ok((at(i, s, j, s)? - at(i, s, j, -s)? - at(i, -s, j, s)? + at(i, -s, j, -s)?) / (4.0 * s * s))
        }
    };
    let mut hm = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = (4.0 * second(i, j, h / 2.0)? - second(i, j, h)?) / 3.0;
            hm[i * n + j] = v;
            hm[j * n + i] = v;
        }
    }
    Ok(hm)
}

/// Residual `(ξ₁ + η₁/2 - (√3/2)η_d, ξ', η')` of the critical-point conditions.
pub fn critical_residual(xi: &[f64], eta: &[f64]) -> Vec<f64> {
    let d = xi.len();
    let mut r = vec![xi[0] + 0.5 * eta[0] - SQRT3 / 2.0 * eta[d - 1]];
    r.extend_from_slice(&xi[1..d - 1]);
    r.extend_from_slice(&eta[1..d - 1]);
    r
}

/// Whether the base point is critical for `(ξ, η)` up to `tol · (|ξ| + |η|)`.
pub fn is_admissible(xi: &[f64], eta: &[f64], tol: f64) -> bool {
    let scale = (norm(xi) + norm(eta)).max(1.0);
    norm(&critical_residual(xi, eta)) <= tol * scale
}

/// Explicit rotation by `π/3` in the `(e₁, e_d)` plane, counterclockwise.
pub fn rotate_pi3_in_first_last(eta: &[f64]) -> Vec<f64> {
    let d = eta.len();
    let mut g = eta.to_vec();
    g[0] = 0.5 * eta[0] - SQRT3 / 2.0 * eta[d - 1];
    g[d - 1] = SQRT3 / 2.0 * eta[0] + 0.5 * eta[d - 1];
    g
}

/// Closed-form Hessian of the phase at the base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianClosedForm {
    pub d: usize,
    /// The `u₁u₁` entry `-ξ_d - (√3/2)η₁ - η_d/2`.
    pub corner: f64,
    /// The `(u'_k, v'_k)` block, repeated `d - 2` times.
    pub block: [[f64; 2]; 2],
    /// `corner · det(block)^{d-2}`, signed.
    pub determinant: f64,
    /// `|corner| · |(2/√3)(η₁ξ_d - ξ₁η_d)|^{d-2}`.
    pub determinant_factored: f64,
    /// `|corner| · (2/√3)^{d-2} (|ξ||η| sin∠(ξ, η))^{d-2}`.
    pub determinant_sin_form: f64,
}

impl HessianClosedForm {
    /// The full matrix in the `[u₁, u', v']` layout.
    pub fn matrix(&self) -> Vec<f64> {
        let d = self.d;
        let n = 2 * d - 3;
        let k = d - 2;
        let mut m = vec![0.0; n * n];
        m[0] = self.corner;
        for i in 0..k {
            let (a, b) = (1 + i, 1 + k + i);
            m[a * n + a] = self.block[0][0];
            m[a * n + b] = self.block[0][1];
            m[b * n + a] = self.block[1][0];
            m[b * n + b] = self.block[1][1];
        }
        m
    }
}

/// The Hessian entries hold for every `(ξ, η)`; the factored determinant
/// forms use the critical-point conditions, so non-admissible input is rejected.
pub fn hessian_closed_form(xi: &[f64], eta: &[f64]) -> Result<HessianClosedForm> {
    let d = xi.len();
    if eta.len() != d || d < 2 {
        return Err(precondition("xi and eta must share a dimension ≥ 2"));
    }
    if !is_admissible(xi, eta, 1e-10) {
        return Err(precondition("(xi, eta) does not satisfy the critical-point conditions"));
    }
    let (x1, xd, e1, ed) = (xi[0], xi[d - 1], eta[0], eta[d - 1]);
    let corner = -xd - SQRT3 / 2.0 * e1 - 0.5 * ed;
    let off = e1 / SQRT3 - ed;
    let block = [[-xd - e1 / (2.0 * SQRT3) + 0.5 * ed, off], [off, -2.0 / SQRT3 * e1]];
    let det2 = block[0][0] * block[1][1] - block[0][1] * block[1][0];
    let k = (d - 2) as i32;
    let determinant = corner * det2.powi(k);
    let determinant_factored = corner.abs() * (2.0 / SQRT3 * (e1 * xd - x1 * ed)).abs().powi(k);
    let (nx, ne) = (norm(xi), norm(eta));
    let sin = if nx > 0.0 && ne > 0.0 {
        let c = (dot(xi, eta) / (nx * ne)).clamp(-1.0, 1.0);
        (1.0 - c * c).sqrt()
    } else {
        0.0
    };
    let determinant_sin_form = corner.abs() * (2.0 / SQRT3 * nx * ne * sin).powi(k);
    Ok(HessianClosedForm { d, corner, block, determinant, determinant_factored, determinant_sin_form })
}

/// Admissibility residual, first factor and closed determinant for a pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalData {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub residual_vector: Vec<f64>,
    /// `|-ξ_d - (√3/2)η₁ - η_d/2|`.
    pub first_factor: f64,
    /// `None` unless the pair is admissible.
    pub hessian_det_closed: Option<f64>,
}

pub fn critical_data(xi: &[f64], eta: &[f64]) -> CriticalData {
    let d = xi.len();
    let first_factor = (-xi[d - 1] - SQRT3 / 2.0 * eta[0] - 0.5 * eta[d - 1]).abs();
    CriticalData {
        xi: xi.to_vec(),
        eta: eta.to_vec(),
        residual_vector: critical_residual(xi, eta),
        first_factor,
        hessian_det_closed: hessian_closed_form(xi, eta).ok().map(|h| h.determinant),
    }
}

/// A seeded admissible pair of unit size: `ξ' = η' = 0` and
/// `η_d = (2/√3)(ξ₁ + η₁/2)`.
pub fn random_admissible_pair(d: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let x1: f64 = rng.random_range(-1.0..1.0);
    let xd: f64 = rng.random_range(-1.0..1.0);
    let e1: f64 = rng.random_range(-1.0..1.0);
    let ed = 2.0 / SQRT3 * (x1 + 0.5 * e1);
    let mut xi = vec![0.0; d];
    let mut eta = vec![0.0; d];
    xi[0] = x1;
    xi[d - 1] = xd;
    eta[0] = e1;
    eta[d - 1] = ed;
    let s = norm(&xi) + norm(&eta);
    (xi.iter().map(|v| v / s).collect(), eta.iter().map(|v| v / s).collect())
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(m: &[f64], n: usize) -> f64 {
    let mut a = m.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap())
            .unwrap();
        if a[piv * n + col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        for r in col + 1..n {
            let f = a[r * n + col] / p;
            for k in col..n {
                a[r * n + k] -= f * a[col * n + k];
            }
        }
    }
    det
}

/// Result of the annulus singular-integral estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaIntResult {
    pub d: usize,
    pub rho: f64,
    pub value: f64,
    pub stderr: f64,
    /// `value / rho^{d-1}`.
    pub ratio: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Stratified Monte Carlo for
/// `∫_{ρ ≤ |ξ| < 2ρ} |ξ + gη|^{-1} sin∠(ξ, η)^{-(d-2)} dξ`,
/// with `gη` the rotation of `η` by `π/3` in `span{ξ, η}` minimizing `|ξ + gη|`.
///
/// In polar coordinates about `η`, `dξ = r^{d-1} sin^{d-2}θ dr dθ dω_{d-2}`, so
/// the angular singularity cancels against the polar weight and the integral
/// becomes `|S^{d-2}| ∫ |w|^{d-2} / |w - P| dA(w)` over the lower half-annulus
/// in the plane, with `w = r e^{-iθ}` and `P = |η| e^{-2πi/3}`. The remaining
/// point singularity at `P` has its own stratum sampled in polar coordinates
/// centred on `P`, which cancels `1/|w - P|` against the area element.
pub fn lemma_int_quadrature(eta: &[f64], rho: f64, d: usize, mc_samples: usize, seed: u64) -> Result<LemmaIntResult> {
    if d < 3 {
        return Err(precondition("lemma_int_quadrature needs d ≥ 3"));
    }
    if eta.len() != d {
        return Err(precondition("eta has the wrong dimension"));
    }
    let h = norm(eta);
    if !(rho > 0.0) || h < rho / 2.0 || h > 2.0 * rho {
        return Err(precondition("|eta| must lie in [rho/2, 2 rho]"));
    }
    if mc_samples < 100_000 {
        return Err(precondition("lemma_int_quadrature needs at least 1e5 samples"));
    }
    let p = (h * (-2.0 * PI / 3.0).cos(), h * (-2.0 * PI / 3.0).sin());
    let eps = rho / 4.0;
    let theta_s = 0.2;
    let dm2 = d as i32 - 2;
    let in_half_annulus = |wx: f64, wy: f64| {
        let r = wx.hypot(wy);
        wy <= 0.0 && r >= rho && r < 2.0 * rho
    };
    let near_p = |wx: f64, wy: f64| (wx - p.0).hypot(wy - p.1) < eps;

    // (measure, mean, variance) per stratum
    let strata_sizes = [mc_samples / 4, mc_samples / 4, mc_samples - 2 * (mc_samples / 4)];
    let mut estimates = Vec::new();
    for (k, &n) in strata_sizes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(k as u64));
        let measure = match k {
            0 => 2.0 * PI * eps,
            1 => rho * 2.0 * theta_s,
            _ => rho * (PI - 2.0 * theta_s),
        };
        let (mut s1, mut s2, mut hits) = (0.0, 0.0, 0usize);
        for _ in 0..n {
            let val = match k {
                0 => {
                    let s = eps * rng.random::<f64>();
                    let a = 2.0 * PI * rng.random::<f64>();
                    let (wx, wy) = (p.0 + s * a.cos(), p.1 + s * a.sin());
                    if in_half_annulus(wx, wy) {
                        wx.hypot(wy).powi(dm2)
                    } else {
                        0.0
                    }
                }
                _ => {
                    let r = rho * (1.0 + rng.random::<f64>());
                    let u = rng.random::<f64>();
                    let th = if k == 1 {
                        if u < 0.5 { 2.0 * theta_s * u } else { PI - 2.0 * theta_s * (1.0 - u) }
                    } else {
                        theta_s + (PI - 2.0 * theta_s) * u
                    };
                    let (wx, wy) = (r * th.cos(), -r * th.sin());
                    if near_p(wx, wy) {
                        0.0
                    } else {
                        r.powi(dm2 + 1) / (wx - p.0).hypot(wy - p.1)
                    }
                }
            };
            if val != 0.0 {
                hits += 1;
            }
            s1 += val;
            s2 += val * val;
        }
        if n < 100 {
            return Err(Error::StratumUnderflow(format!("stratum {k} has only {n} samples")));
        }
        if k == 0 && hits == 0 && near_p_meets_annulus(p, eps, rho) {
            return Err(Error::StratumUnderflow("singular stratum received no samples".into()));
        }
        let nf = n as f64;
        let mean = s1 / nf;
        let var = (s2 / nf - mean * mean).max(0.0) / (nf - 1.0);
        estimates.push((measure * mean, measure * measure * var));
    }
    let area = sphere_area(d - 2);
    let value = area * estimates.iter().map(|e| e.0).sum::<f64>();
    let stderr = area * estimates.iter().map(|e| e.1).sum::<f64>().sqrt();
    Ok(LemmaIntResult {
        d,
        rho,
        value,
        stderr,
        ratio: value / rho.powi(d as i32 - 1),
        samples: mc_samples,
        seed,
    })
}

fn near_p_meets_annulus(p: (f64, f64), eps: f64, rho: f64) -> bool {
    let r = p.0.hypot(p.1);
    r + eps > rho && r - eps < 2.0 * rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecmath::scale;

    fn random_coords(d: usize, radius: f64, rng: &mut ChaCha8Rng) -> LocalCoords {
        let v: Vec<f64> = (0..2 * d - 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = norm(&v);
        LocalCoords::from_slice(&scale(&v, radius / n))
    }

    #[test]
    fn chart_base_point() {
        for d in 2..=5 {
            let p = chart(&LocalCoords::zero(d)).unwrap();
            let mut x0 = vec![0.0; d];
            x0[d - 1] = 1.0;
            assert_eq!(p.x, x0);
            assert!((p.y[0] - SQRT3 / 2.0).abs() < 1e-15 && (p.y[d - 1] - 0.5).abs() < 1e-15);
            assert!(p.residuals.iter().all(|r| r.abs() < 1e-15));
            let e = exact_chart(&LocalCoords::zero(d)).unwrap();
            assert!(norm(&sub(&e.y, &p.y)) < 1e-15);
        }
    }

    #[test]
    fn chart_residuals_are_cubic() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for d in 2..=4 {
            for _ in 0..10_000 {
                let r = rng.random_range(1e-3..0.099);
                let c = random_coords(d, r, &mut rng);
                let p = chart(&c).unwrap();
                let m = c.magnitude();
                assert!(p.residuals.iter().all(|x| x.abs() <= 10.0 * m.powi(3)), "d={d} {c:?} {:?}", p.residuals);
            }
            let c = random_coords(d, 1e-2, &mut rng);
            assert!(chart(&c).unwrap().residuals.iter().all(|x| x.abs() <= 1e-5));
        }
    }

    #[test]
    fn exact_chart_is_on_surface_and_matches_to_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in 2..=4 {
            for _ in 0..200 {
                let c = random_coords(d, rng.random_range(1e-3..0.09), &mut rng);
                let e = exact_chart(&c).unwrap();
                assert!(e.residuals.iter().all(|r| r.abs() < 1e-14));
                let q = chart(&c).unwrap();
                let m = c.magnitude();
                assert!(norm(&sub(&e.x, &q.x)) <= 10.0 * m.powi(3));
                assert!(norm(&sub(&e.y, &q.y)) <= 10.0 * m.powi(3));
            }
        }
    }

    #[test]
    fn v1_along_u1_axis() {
        let h = 0.05;
        let c = LocalCoords::new(h, vec![0.0; 2], vec![0.0; 2]).unwrap();
        assert_eq!(chart_v1(&c), h / 2.0 - SQRT3 / 4.0 * h * h);
    }

    #[test]
    fn window_violation() {
        assert!(LocalCoords::new(0.2, vec![], vec![]).is_err());
        let c = LocalCoords { u1: 0.2, u_prime: vec![], v_prime: vec![] };
        assert!(chart(&c).is_err());
    }

    #[test]
    fn implicit_solve_examples() {
        assert_eq!(implicit_solve_check(1.0, 0.0, 0.3).unwrap(), 0.3);
        let t = 1e-2;
        let s = implicit_solve_check(SQRT3, 4.0, t).unwrap();
        assert!((SQRT3 * s + 4.0 * s * s - t).abs() <= 1e-5);
        let (a1, a2) = (1.7, -0.4);
        let s = implicit_solve_check(a1, a2, -t).unwrap();
        assert_eq!(s, -t / a1 - a2 * t * t / (a1 * a1 * a1));
        assert!(implicit_solve_check(0.0, 1.0, t).is_err());
    }

    #[test]
    fn implicit_solve_residual_is_cubic() {
        for &t in &[1e-1, 1e-2, 1e-3] {
            let s = implicit_solve_check(SQRT3, 4.0, t).unwrap();
            let res = SQRT3 * s + 4.0 * s * s - t;
            assert!(res.abs() <= 20.0 * t.powi(3), "t={t} res={res}");
        }
    }

    #[test]
    fn gradient_examples() {
        for d in 2..=4 {
            let mut xi = vec![0.0; d];
            xi[0] = 1.0;
            let g = phase_gradient(&LocalCoords::zero(d), &xi, &vec![0.0; d]).unwrap();
            assert_eq!(g[0], 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
            let (xi, eta) = random_admissible_pair(d, &mut rng);
            let g = phase_gradient(&LocalCoords::zero(d), &xi, &eta).unwrap();
            assert!(norm(&g) < 1e-15);
        }
    }

    #[test]
    fn closed_gradient_matches_exact_phase_near_base() {
        // The closed form is the gradient of the quadratic phase, so it agrees
        // with the exact phase to first order in |coords|.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for d in 2..=4 {
            for _ in 0..20 {
                let xi: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let eta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let c = random_coords(d, 1e-3, &mut rng);
                let a = phase_gradient(&c, &xi, &eta).unwrap();
                let b = numerical_gradient(&c, &xi, &eta, 1e-4).unwrap();
                assert!(norm(&sub(&a, &b)) < 1e-4, "d={d}");
            }
        }
    }

    #[test]
    fn hessian_examples() {
        for d in 2..=4 {
            let mut xi = vec![0.0; d];
            xi[d - 1] = 1.0;
            let h = hessian_closed_form(&xi, &vec![0.0; d]).unwrap();
            let expected = if d == 2 { 1.0 } else { 0.0 };
            assert_eq!(h.determinant.abs(), expected);
        }
        let mut x = vec![0.0; 3];
        x[0] = 1.0;
        assert!(hessian_closed_form(&x, &vec![0.0; 3]).is_err());
    }

    #[test]
    fn determinant_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for d in 2..=5 {
            for _ in 0..50 {
                let (xi, mut eta) = random_admissible_pair(d, &mut rng);
                let h = hessian_closed_form(&xi, &eta).unwrap();
                let scale = h.determinant_factored.max(1e-300);
                assert!((h.determinant.abs() - h.determinant_factored).abs() <= 1e-10 * scale.max(1.0));
                assert!((h.determinant_sin_form - h.determinant_factored).abs() <= 1e-10);
                assert!((determinant(&h.matrix(), 2 * d - 3) - h.determinant).abs() < 1e-12);
                // η₁ = 0 family.
                eta[0] = 0.0;
                eta[d - 1] = 2.0 * xi[0] / SQRT3;
                let h = hessian_closed_form(&xi, &eta).unwrap();
                assert!((h.determinant_sin_form - h.determinant.abs()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn first_factor_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for d in 2..=5 {
            for _ in 0..100 {
                let (xi, eta) = random_admissible_pair(d, &mut rng);
                let cd = critical_data(&xi, &eta);
                let v = crate::vecmath::add(&xi, &rotate_pi3_in_first_last(&eta));
                assert!((cd.first_factor - norm(&v)).abs() < 1e-12);
                assert!(cd.hessian_det_closed.is_some());
            }
        }
    }

    #[test]
    fn hessian_fd_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for d in 2..=4 {
            for _ in 0..20 {
                let (xi, eta) = random_admissible_pair(d, &mut rng);
                let n = 2 * d - 3;
                let fd = hessian_fd(&xi, &eta, 1e-3).unwrap();
                let cf = hessian_closed_form(&xi, &eta).unwrap().matrix();
                assert!(norm(&sub(&fd, &cf)) < 1e-6, "d={d}");
                let _ = n;
            }
        }
        assert!(hessian_fd(&[1.0, 0.0], &[0.0, 0.0], 0.5).is_err());
    }

    #[test]
    fn gradient_zero_iff_admissible() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for d in 2..=4 {
            for i in 0..40 {
                let (xi, eta) = if i % 2 == 0 {
                    random_admissible_pair(d, &mut rng)
                } else {
                    let xi: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let eta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                    (xi, eta)
                };
                let g = numerical_gradient(&LocalCoords::zero(d), &xi, &eta, 1e-3).unwrap();
                let zero = norm(&g) <= 1e-8 * (norm(&xi) + norm(&eta));
                let adm = norm(&critical_residual(&xi, &eta)) <= 1e-10;
                assert_eq!(zero, adm, "d={d} grad={g:?}");
            }
        }
    }

    #[test]
    fn lemma_int_homogeneity_and_positivity() {
        for d in 3..=4 {
            let mut ratios = Vec::new();
            for &rho in &[8.0, 16.0] {
                let mut eta = vec![0.0; d];
                eta[0] = rho;
                let r = lemma_int_quadrature(&eta, rho, d, 200_000, 1).unwrap();
                assert!(r.value > 0.0);
                ratios.push(r.ratio);
            }
            assert!((ratios[0] / ratios[1] - 1.0).abs() < 0.05);
        }
        assert!(lemma_int_quadrature(&[1.0, 0.0], 1.0, 2, 200_000, 0).is_err());
        assert!(lemma_int_quadrature(&[10.0, 0.0, 0.0], 1.0, 3, 200_000, 0).is_err());
    }

    /// Plain Monte Carlo over the d-dimensional annulus with the integrand as
    /// written (explicit angle factor, both rotations tried).
    fn lemma_int_brute(eta: &[f64], rho: f64, n: usize, seed: u64) -> f64 {
        use rand_distr::{Distribution, StandardNormal};
        let d = eta.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vol = sphere_area(d - 1) * ((2.0 * rho).powi(d as i32) - rho.powi(d as i32)) / d as f64;
        let mut acc = 0.0;
        for _ in 0..n {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let u: f64 = rng.random();
            let r = (rho.powi(d as i32) + u * ((2.0 * rho).powi(d as i32) - rho.powi(d as i32))).powf(1.0 / d as f64);
            let xi = scale(&v, r / norm(&v));
            let (sum, nx, ne, sin) = crate::config_surface::rotated_sum_geometry(&xi, eta);
            let _ = (nx, ne);
            acc += 1.0 / (sum * sin.powi(d as i32 - 2));
        }
        vol * acc / n as f64
    }

    #[test]
    fn lemma_int_matches_brute_force() {
        for d in 3..=4 {
            let mut eta = vec![0.0; d];
            eta[0] = 8.0;
            let strat = lemma_int_quadrature(&eta, 8.0, d, 400_000, 2).unwrap();
            let brute = lemma_int_brute(&eta, 8.0, 2_000_000, 3);
            assert!((strat.value / brute - 1.0).abs() < 0.05, "d={d}: {} vs {brute}", strat.value);
        }
    }
}
