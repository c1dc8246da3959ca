//! Fourier transform of the configuration surface measure
//!
//! `σ` is the normalized surface measure on `{(x, y) ∈ R^{2d} : |x| = |y| = |x - y| = 1}`,
//! i.e. the push-forward of Haar probability measure on `O(d)` under
//! `g ↦ (g x⁰, g y⁰)` for one fixed unit equilateral pair `(x⁰, y⁰)`. Its
//! transform is
//!
//! ```text
//! σ̂(ξ, η) = ∫ exp(-2πi (x·ξ + y·η)) dσ(x, y).
//! ```
//!
//! Three evaluators are provided. [`sigma_hat_mc`] samples Haar rotations and
//! is the reference oracle. [`sigma_hat_quad`] fixes `x` on `S^{d-1}`; the
//! partners `y = x/2 + (√3/2) w` with `w` uniform on the unit sphere of `x^⊥`
//! integrate in closed form to [`sphere_ft`]`(d - 1, (√3/2)|η - (x·η)x|)`, and
//! the remaining sphere integral is done by deterministic product quadrature.
//! [`sigma_hat_planar`] is the `d = 2` closed form `½ Σ± J₀(2π|ξ + R±η|)`.
//!
//! Because `-I ∈ O(d)`, `σ̂` is real; imaginary parts are returned as
//! diagnostics only.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{precondition, Error, Result};
use crate::fit::{fit_loglog, DecayFitReport};
use crate::special::{bessel_j0, gauss_legendre_on, sphere_ft};
use crate::vecmath::{add, dot, norm, plane_frame, scale, sub};

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

/// Minimum quadrature nodes per great circle per unit of `|ξ| + |η|`.
pub const NODES_PER_UNIT_FREQUENCY: f64 = 16.0;
/// Fixed node floor added on top of the per-frequency requirement.
pub const NODE_FLOOR: usize = 16;

/// A frequency pair `(ξ, η) ∈ R^d × R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqPair {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

impl FreqPair {
    pub fn new(xi: Vec<f64>, eta: Vec<f64>) -> Result<Self> {
        if xi.len() != eta.len() {
            return Err(precondition("xi and eta differ in dimension"));
        }
        if xi.len() < 2 {
            return Err(precondition("dimension must be at least 2"));
        }
        if xi.iter().chain(&eta).any(|v| !v.is_finite()) {
            return Err(precondition("frequency entries must be finite"));
        }
        Ok(Self { xi, eta })
    }

    pub fn zero(d: usize) -> Self {
        Self { xi: vec![0.0; d], eta: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    pub fn zeta(&self) -> Vec<f64> {
        add(&self.xi, &self.eta)
    }

    /// `|ξ| + |η|`, the quantity the node budget is scaled by.
    pub fn magnitude(&self) -> f64 {
        norm(&self.xi) + norm(&self.eta)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { xi: scale(&self.xi, s), eta: scale(&self.eta, s) }
    }

    /// `(-ξ, ξ + η)`, the pair related to `(ξ, η)` by relabelling the triangle.
    pub fn triangle_partner(&self) -> Self {
        Self { xi: scale(&self.xi, -1.0), eta: self.zeta() }
    }

    /// `(gξ, gη)` for a row-major `d × d` matrix `g`.
    pub fn rotated(&self, g: &[f64]) -> Self {
        use crate::vecmath::mat_vec;
        Self { xi: mat_vec(g, &self.xi), eta: mat_vec(g, &self.eta) }
    }
}

/// The base unit equilateral pair `(x⁰, y⁰)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub d: usize,
    pub base_x0: Vec<f64>,
    pub base_y0: Vec<f64>,
}

impl SurfaceSpec {
    /// `x⁰ = (0, …, 0, 1)`, `y⁰ = (√3/2, 0, …, 0, 1/2)`.
    pub fn standard(d: usize) -> Self {
        assert!(d >= 2);
        let mut x0 = vec![0.0; d];
        x0[d - 1] = 1.0;
        let mut y0 = vec![0.0; d];
        y0[0] = SQRT3_2;
        y0[d - 1] = 0.5;
        Self { d, base_x0: x0, base_y0: y0 }
    }

    pub fn with_base(x0: Vec<f64>, y0: Vec<f64>) -> Result<Self> {
        let d = x0.len();
        if d < 2 || y0.len() != d {
            return Err(precondition("base pair must share a dimension ≥ 2"));
        }
        let checks = [norm(&x0), norm(&y0), norm(&sub(&x0, &y0))];
        if checks.iter().any(|c| (c - 1.0).abs() > 1e-12) {
            return Err(precondition("base pair is not a unit equilateral pair"));
        }
        Ok(Self { d, base_x0: x0, base_y0: y0 })
    }
}

/// Node and sample budgets; echoed in every output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Nodes per great circle for the deterministic sphere rule.
    pub sphere_nodes: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl QuadratureSpec {
    /// Smallest even node count that passes the guard for `|ξ| + |η| = freq`.
    pub fn for_frequency(freq: f64, mc_samples: usize, seed: u64) -> Self {
        let need = required_nodes(freq).max(32);
        Self { sphere_nodes: need + need % 2, mc_samples, seed }
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { sphere_nodes: 64, mc_samples: 100_000, seed: 0 }
    }
}

fn required_nodes(freq: f64) -> usize {
    (NODES_PER_UNIT_FREQUENCY * freq).ceil() as usize + NODE_FLOOR
}

/// A complex value with an optional per-component standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub re: f64,
    pub im: f64,
    /// Zero for deterministic evaluators.
    pub stderr_re: f64,
    pub stderr_im: f64,
}

impl SigmaEstimate {
    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }

    /// Larger of the two component standard errors.
    pub fn stderr(&self) -> f64 {
        self.stderr_re.max(self.stderr_im)
    }

    pub fn dist(&self, other: &Self) -> f64 {
        (self.re - other.re).hypot(self.im - other.im)
    }
}

/// Haar-distributed element of `O(d)`, row-major.
///
/// Gram–Schmidt on the columns of a Gaussian matrix is the QR factorization with
/// a positive diagonal in `R`, which makes `Q` exactly Haar on `O(d)`.
pub fn haar_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    for j in 0..d {
        for k in 0..j {
            let p = dot(&cols[j], &cols[k]);
            let (left, right) = cols.split_at_mut(j);
            for (a, b) in right[0].iter_mut().zip(&left[k]) {
                *a -= p * b;
            }
        }
        let n = norm(&cols[j]);
        for a in cols[j].iter_mut() {
            *a /= n;
        }
    }
    let mut g = vec![0.0; d * d];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..d {
            g[i * d + j] = c[i];
        }
    }
    g
}

/// Monte Carlo oracle: average of `exp(-2πi(g x⁰·ξ + g y⁰·η))` over Haar `g`.
pub fn sigma_hat_mc(pair: &FreqPair, spec: &QuadratureSpec) -> Result<SigmaEstimate> {
    sigma_hat_mc_with_base(pair, spec, &SurfaceSpec::standard(pair.dim()))
}

pub fn sigma_hat_mc_with_base(
    pair: &FreqPair,
    spec: &QuadratureSpec,
    surface: &SurfaceSpec,
) -> Result<SigmaEstimate> {
    let d = pair.dim();
    if surface.d != d {
        return Err(precondition("surface and frequency dimensions differ"));
    }
    if spec.mc_samples < 1000 {
        return Err(precondition("Monte Carlo oracle needs at least 1000 samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.mc_samples;
    let (mut sc, mut ss, mut sc2, mut ss2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let g = haar_orthogonal(d, &mut rng);
        // (g x⁰)·ξ = x⁰·(gᵀξ)
        let mut phase = 0.0;
        for i in 0..d {
            for j in 0..d {
                phase += g[i * d + j] * (surface.base_x0[j] * pair.xi[i] + surface.base_y0[j] * pair.eta[i]);
            }
        }
        let a = -2.0 * PI * phase;
        let (s, c) = a.sin_cos();
        sc += c;
        ss += s;
        sc2 += c * c;
        ss2 += s * s;
    }
    let nf = n as f64;
    let (mc, ms) = (sc / nf, ss / nf);
    let var_c = (sc2 / nf - mc * mc).max(0.0) * nf / (nf - 1.0);
    let var_s = (ss2 / nf - ms * ms).max(0.0) * nf / (nf - 1.0);
    Ok(SigmaEstimate {
        re: mc,
        im: ms,
        stderr_re: (var_c / nf).sqrt(),
        stderr_im: (var_s / nf).sqrt(),
    })
}

/// Deterministic product quadrature for `σ̂(ξ, η)`.
///
/// Refuses when `spec.sphere_nodes < 16 (|ξ| + |η|) + 16`.
pub fn sigma_hat_quad(pair: &FreqPair, spec: &QuadratureSpec) -> Result<SigmaEstimate> {
    sigma_hat_quad_with(pair, spec, sphere_ft)
}

/// [`sigma_hat_quad`] with a caller-supplied inner sphere transform.
pub fn sigma_hat_quad_with<F>(pair: &FreqPair, spec: &QuadratureSpec, inner: F) -> Result<SigmaEstimate>
where
    F: Fn(usize, f64) -> f64,
{
    let d = pair.dim();
    if d > 6 {
        return Err(precondition("dimension above 6 is not supported"));
    }
    let freq = pair.magnitude();
    let required = required_nodes(freq);
    if spec.sphere_nodes < required || spec.sphere_nodes < 4 {
        return Err(Error::NyquistRefusal { nodes: spec.sphere_nodes, required, freq });
    }
    let a = add(&pair.xi, &scale(&pair.eta, 0.5));
    let eta2 = dot(&pair.eta, &pair.eta);
    let inner_of = |x_dot_eta: f64| {
        let perp2 = (eta2 - x_dot_eta * x_dot_eta).max(0.0);
        inner(d - 1, SQRT3_2 * perp2.sqrt())
    };
    let m = spec.sphere_nodes;

    if d == 2 {
        let (mut re, mut im) = (0.0, 0.0);
        for j in 0..m {
            let t = 2.0 * PI * j as f64 / m as f64;
            let (s, c) = t.sin_cos();
            let xa = c * a[0] + s * a[1];
            let xe = c * pair.eta[0] + s * pair.eta[1];
            let w = inner_of(xe);
            let (ps, pc) = (-2.0 * PI * xa).sin_cos();
            re += pc * w;
            im += ps * w;
        }
        return Ok(SigmaEstimate { re: re / m as f64, im: im / m as f64, stderr_re: 0.0, stderr_im: 0.0 });
    }

    // x = cosθ e1 + sinθ (cosφ e2 + sinφ ω), dω_{d-1} = sin^{d-2}θ dθ · sin^{d-3}φ dφ · dω_{d-3}.
    let (e1, e2) = plane_frame(&a, &pair.eta);
    let amag = dot(&a, &e1);
    let h1 = dot(&pair.eta, &e1);
    let h2 = dot(&pair.eta, &e2);
    let (thetas, wt) = gauss_legendre_on(m / 2, 0.0, PI);
    let (phis, wp): (Vec<f64>, Vec<f64>) = if d == 3 {
        ((0..m).map(|j| 2.0 * PI * j as f64 / m as f64).collect(), vec![1.0; m])
    } else {
        let (p, w) = gauss_legendre_on(m / 2, 0.0, PI);
        let w = p.iter().zip(&w).map(|(p, w)| w * p.sin().powi(d as i32 - 3)).collect();
        (p, w)
    };
    let cos_phi: Vec<f64> = phis.iter().map(|p| p.cos()).collect();
    let norm_phi: f64 = wp.iter().sum();
    let (mut re, mut im, mut norm_theta) = (0.0, 0.0, 0.0);
    for (th, w) in thetas.iter().zip(&wt) {
        let (st, ct) = th.sin_cos();
        let wtheta = w * st.powi(d as i32 - 2);
        norm_theta += wtheta;
        let mut inner_sum = 0.0;
        for (cp, wphi) in cos_phi.iter().zip(&wp) {
            inner_sum += wphi * inner_of(h1 * ct + h2 * st * cp);
        }
        let (ps, pc) = (-2.0 * PI * amag * ct).sin_cos();
        re += wtheta * pc * inner_sum;
        im += wtheta * ps * inner_sum;
    }
    let z = norm_theta * norm_phi;
    Ok(SigmaEstimate { re: re / z, im: im / z, stderr_re: 0.0, stderr_im: 0.0 })
}

/// Closed form in the plane: `σ̂(ξ, η) = ½ [J₀(2π|ξ + R₊η|) + J₀(2π|ξ + R₋η|)]`,
/// with `R±` the rotations by `±π/3`.
pub fn sigma_hat_planar(pair: &FreqPair) -> Result<f64> {
    if pair.dim() != 2 {
        return Err(precondition("planar closed form needs d = 2"));
    }
    let (xi, eta) = (&pair.xi, &pair.eta);
    let (c, s) = (0.5, SQRT3_2);
    let mut acc = 0.0;
    for sign in [1.0, -1.0] {
        let rx = c * eta[0] - sign * s * eta[1];
        let ry = sign * s * eta[0] + c * eta[1];
        acc += bessel_j0(2.0 * PI * (xi[0] + rx).hypot(xi[1] + ry));
    }
    Ok(0.5 * acc)
}

/// `σ̂(ξ, η)` through the cheapest accurate route: the planar closed form
/// for `d = 2`, otherwise quadrature with an automatically scaled node budget.
pub fn sigma_hat_auto(pair: &FreqPair) -> Result<f64> {
    if pair.dim() == 2 {
        return sigma_hat_planar(pair);
    }
    let spec = QuadratureSpec::for_frequency(pair.magnitude(), 1000, 0);
    Ok(sigma_hat_quad(pair, &spec)?.re)
}

/// `|ξ + gη|` minimized over the two in-plane rotations `g` of `η` by `π/3`
/// within `span{ξ, η}`, together with `|ξ|`, `|η|` and `sin∠(ξ, η)`.
pub fn rotated_sum_geometry(xi: &[f64], eta: &[f64]) -> (f64, f64, f64, f64) {
    let nx = norm(xi);
    let ne = norm(eta);
    let (e1, e2) = plane_frame(xi, eta);
    let (al, be) = (dot(eta, &e1), dot(eta, &e2));
    let (c, s) = (0.5, SQRT3_2);
    let best = [1.0, -1.0]
        .iter()
        .map(|sg| {
            let r1 = al * c - sg * be * s;
            let r2 = sg * al * s + be * c;
            (nx + r1).hypot(r2)
        })
        .fold(f64::INFINITY, f64::min);
    let sin = if nx > 0.0 && ne > 0.0 { be.abs() / ne } else { 0.0 };
    (best, nx, ne, sin)
}

/// `|ξ + g_{π/3}η|^{-1/2} |ξ|^{-(d-2)/2} |η|^{-(d-2)/2} (sin∠(ξ, η))^{-(d-2)/2}`.
///
/// Defined for nonzero, non-parallel pairs with `max(|ξ|,|η|) / min ≤ 4`.
/// Returns `+∞` on the ray where `ξ + g_{π/3}η = 0`.
pub fn sigma_hat_bound(pair: &FreqPair) -> Result<f64> {
    let d = pair.dim() as f64;
    let (sum, nx, ne, sin) = rotated_sum_geometry(&pair.xi, &pair.eta);
    if nx == 0.0 || ne == 0.0 {
        return Err(Error::OutsideDomain("zero frequency".into()));
    }
    if nx.max(ne) / nx.min(ne) > 4.0 {
        return Err(Error::OutsideDomain("|xi| and |eta| not comparable".into()));
    }
    if sin < 1e-12 {
        return Err(Error::OutsideDomain("xi and eta are parallel".into()));
    }
    if sum == 0.0 {
        return Ok(f64::INFINITY);
    }
    let e = (d - 2.0) / 2.0;
    Ok(sum.powf(-0.5) * (nx * ne * sin).powf(-e))
}

/// Least-squares decay slope of `|σ̂(Rξ, Rη)|` along a unit direction.
pub fn decay_exponent_fit(direction: &FreqPair, r_grid: &[f64], spec: &QuadratureSpec) -> Result<DecayFitReport> {
    if (norm(&direction.xi) - 1.0).abs() > 1e-9 || (norm(&direction.eta) - 1.0).abs() > 1e-9 {
        return Err(precondition("direction must have |xi| = |eta| = 1"));
    }
    if r_grid.len() < 4 {
        return Err(precondition("decay fit needs at least 4 radii"));
    }
    let values = r_grid
        .iter()
        .map(|&r| sigma_hat_quad(&direction.scaled(r), spec).map(|v| v.abs()))
        .collect::<Result<Vec<_>>>()?;
    fit_loglog(r_grid, &values)
}

/// Specification of a decay-fit run as accepted by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFitSpec {
    pub d: usize,
    pub dir_seed: u64,
    pub r_grid: Vec<f64>,
}

/// A seeded generic unit direction: `ξ`, `η` unit with the angle between them
/// drawn in `[π/4, 3π/4]`, away from the parallel and `ξ + gη = 0` cases.
pub fn generic_direction(d: usize, seed: u64) -> FreqPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = haar_orthogonal(d, &mut rng);
    let angle = PI / 4.0 + (PI / 2.0) * rand::Rng::random::<f64>(&mut rng);
    let mut xi = vec![0.0; d];
    xi[0] = 1.0;
    let mut eta = vec![0.0; d];
    eta[0] = angle.cos();
    eta[1] = angle.sin();
    FreqPair { xi, eta }.rotated(&g)
}

/// A seeded pair with `|ξ|, |η| ≤ max_norm`.
pub fn random_pair(d: usize, max_norm: f64, rng: &mut ChaCha8Rng) -> FreqPair {
    use rand::Rng;
    let draw = |rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let r = max_norm * rng.random::<f64>();
        scale(&v, r / norm(&v))
    };
    let xi = draw(rng);
    let eta = draw(rng);
    FreqPair { xi, eta }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(xi: &[f64], eta: &[f64]) -> FreqPair {
        FreqPair::new(xi.to_vec(), eta.to_vec()).unwrap()
    }

    #[test]
    fn haar_matrices_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 2..=5 {
            let g = haar_orthogonal(d, &mut rng);
            for i in 0..d {
                for j in 0..d {
                    let p: f64 = (0..d).map(|k| g[k * d + i] * g[k * d + j]).sum();
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((p - e).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn base_pair_is_equilateral() {
        for d in 2..=6 {
            let s = SurfaceSpec::standard(d);
            assert!(SurfaceSpec::with_base(s.base_x0.clone(), s.base_y0.clone()).is_ok());
        }
        assert!(SurfaceSpec::with_base(vec![1.0, 0.0], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn normalization_at_origin() {
        for d in 2..=6 {
            let z = FreqPair::zero(d);
            let q = sigma_hat_quad(&z, &QuadratureSpec::default()).unwrap();
            assert!((q.re - 1.0).abs() < 1e-12 && q.im.abs() < 1e-12, "d={d}");
            let m = sigma_hat_mc(&z, &QuadratureSpec { mc_samples: 1000, ..Default::default() }).unwrap();
            assert_eq!((m.re, m.im), (1.0, 0.0));
        }
    }

    #[test]
    fn planar_circle_case_matches_trapezoid() {
        // ξ = (R, 0), η = 0: the transform of the unit circle.
        for &r in &[0.7, 3.0, 9.5] {
            let m = 4096;
            let trap: f64 = (0..m)
                .map(|j| (2.0 * PI * r * (2.0 * PI * j as f64 / m as f64).cos()).cos())
                .sum::<f64>()
                / m as f64;
            let p = pair(&[r, 0.0], &[0.0, 0.0]);
            assert!((sigma_hat_planar(&p).unwrap() - trap).abs() < 1e-12);
            let q = sigma_hat_quad(&p, &QuadratureSpec::for_frequency(r, 1000, 0)).unwrap();
            assert!((q.re - trap).abs() < 1e-10);
        }
    }

    #[test]
    fn planar_closed_form_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let p = random_pair(2, 12.0, &mut rng);
            let q = sigma_hat_quad(&p, &QuadratureSpec::for_frequency(p.magnitude(), 1000, 0)).unwrap();
            assert!((q.re - sigma_hat_planar(&p).unwrap()).abs() < 1e-10);
            assert!(q.im.abs() < 1e-10);
        }
    }

    #[test]
    fn quadrature_agrees_with_oracle_d3() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = haar_orthogonal(3, &mut rng);
        let p = pair(&[4.0, 0.0, 0.0], &[1.0, 3.0, 2.0f64.sqrt() * 1.5]).rotated(&g);
        let p = FreqPair { eta: scale(&p.eta, 4.0 / norm(&p.eta)), ..p };
        let spec = QuadratureSpec { mc_samples: 100_000, ..QuadratureSpec::for_frequency(8.0, 100_000, 9) };
        let q = sigma_hat_quad(&p, &spec).unwrap();
        let m = sigma_hat_mc(&p, &spec).unwrap();
        assert!((q.re - m.re).abs() <= 3.0 * m.stderr_re + 1e-12, "{q:?} vs {m:?}");
        assert!((q.im - m.im).abs() <= 3.0 * m.stderr_im + 1e-12);
    }

    #[test]
    fn nyquist_guard_refuses() {
        let p = pair(&[10.0, 0.0, 0.0], &[0.0, 10.0, 0.0]);
        let spec = QuadratureSpec { sphere_nodes: 300, ..Default::default() };
        assert!(matches!(sigma_hat_quad(&p, &spec), Err(Error::NyquistRefusal { .. })));
    }

    #[test]
    fn symmetries_of_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for d in 2..=4 {
            for _ in 0..5 {
                let p = random_pair(d, 6.0, &mut rng);
                let spec = QuadratureSpec::for_frequency(2.0 * p.magnitude(), 1000, 0);
                let v = sigma_hat_quad(&p, &spec).unwrap();
                let w = sigma_hat_quad(&p.triangle_partner(), &spec).unwrap();
                assert!(v.dist(&w) < 1e-9, "triangle symmetry d={d}");
                let c = sigma_hat_quad(&p.scaled(-1.0), &spec).unwrap();
                assert!((c.re - v.re).abs() < 1e-9 && (c.im + v.im).abs() < 1e-9);
                let g = haar_orthogonal(d, &mut rng);
                let r = sigma_hat_quad(&p.rotated(&g), &spec).unwrap();
                assert!(v.dist(&r) < 1e-9, "rotation invariance d={d}");
            }
        }
    }

    #[test]
    fn bound_reduces_in_the_plane() {
        let p = pair(&[3.0, 0.0], &[1.0, 2.0]);
        let (sum, ..) = rotated_sum_geometry(&p.xi, &p.eta);
        assert!((sigma_hat_bound(&p).unwrap() - sum.powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn bound_scaling_identity() {
        use rand::Rng;
        for d in 2..=5 {
            let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
            let p = generic_direction(d, rng.random_range(0..1000)).scaled(5.0);
            let ratio = sigma_hat_bound(&p.scaled(2.0)).unwrap() / sigma_hat_bound(&p).unwrap();
            let expected = 2f64.powf(-(d as f64 - 2.0) - 0.5);
            assert!((ratio - expected).abs() < 1e-12, "d={d}");
        }
    }

    #[test]
    fn bound_domain_errors() {
        assert!(matches!(sigma_hat_bound(&pair(&[1.0, 0.0, 0.0], &[2.0, 0.0, 0.0])), Err(Error::OutsideDomain(_))));
        assert!(matches!(sigma_hat_bound(&pair(&[0.0, 0.0, 0.0], &[2.0, 1.0, 0.0])), Err(Error::OutsideDomain(_))));
        assert!(matches!(sigma_hat_bound(&pair(&[10.0, 0.0, 0.0], &[0.0, 1.0, 0.0])), Err(Error::OutsideDomain(_))));
    }

    #[test]
    fn decay_fit_shift_invariance() {
        let dir = generic_direction(3, 4);
        let r1 = [4.0, 8.0, 16.0, 32.0];
        let r2: Vec<f64> = r1.iter().map(|r| 2.0 * r).collect();
        let spec = QuadratureSpec::for_frequency(128.0, 1000, 0);
        let a = decay_exponent_fit(&dir, &r1, &spec).unwrap();
        let vals = a.values.clone();
        let b = crate::fit::fit_loglog(&r2, &vals).unwrap();
        assert!((a.slope - b.slope).abs() < 1e-12);
        assert!(decay_exponent_fit(&dir.scaled(2.0), &r1, &spec).is_err());
    }
}
