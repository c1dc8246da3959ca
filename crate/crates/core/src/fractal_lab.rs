//! Grid Frostman measures on the unit torus and the triple-correlation
//! configuration integral evaluated on the spatial and frequency sides.
//!
//! A [`GridMeasure`] places atoms of mass `w_k` at `k/N`, `k ∈ {0..N-1}^d`. Its
//! spectrum on `Z^d` is the discrete Fourier transform of the weight array and
//! is periodic with period `N`. Frequency-side sums use one period, the open box
//! `(-N/2, N/2)^d`, which is the spectrum of the band-limited interpolant of the
//! grid density. Spatial-side integrals are periodic as well.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config_surface::{haar_orthogonal, sigma_hat_auto, FreqPair, QuadratureSpec, SurfaceSpec};
use crate::error::{precondition, Error, Result};
use crate::fit::{fit_loglog, DecayFitReport};
use crate::vecmath::mat_vec;

/// Mass conservation tolerance for every produced measure.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Spectral values below this magnitude are FFT roundoff and are stored as zero.
pub const SPECTRUM_FLUSH: f64 = 1e-14;

/// Points in the default side-length grid.
pub const DEFAULT_T_POINTS: usize = 32;

/// Largest grid the tools accept per dimension.
pub fn max_grid(d: usize) -> usize {
    match d {
        1 => 4096,
        2 => 64,
        3 => 16,
        _ => 8,
    }
}

/// Self-similar construction: each retained cell splits into `base^d`
/// subcells, of which those listed in `keep_pattern` are retained.
///
/// Subcell `c = (c_0, .., c_{d-1})` has linear index `Σ c_i base^i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CantorSpec {
    pub d: usize,
    pub base: usize,
    pub keep_pattern: Vec<usize>,
    pub depth: u32,
}

impl CantorSpec {
    pub fn new(d: usize, base: usize, mut keep_pattern: Vec<usize>, depth: u32) -> Result<Self> {
        if !(1..=4).contains(&d) {
            return Err(precondition("CantorSpec supports 1 ≤ d ≤ 4"));
        }
        if base < 2 || !base.is_power_of_two() {
            return Err(precondition("base must be a power of two"));
        }
        let cells = base.pow(d as u32);
        keep_pattern.sort_unstable();
        keep_pattern.dedup();
        if keep_pattern.is_empty() {
            return Err(precondition("keep pattern is empty"));
        }
        if keep_pattern.iter().any(|&k| k >= cells) {
            return Err(precondition(format!("keep index out of range for {cells} subcells")));
        }
        Ok(Self { d, base, keep_pattern, depth })
    }

    /// Keep pattern from a bit mask over the `base^d` subcells.
    pub fn from_mask(d: usize, base: usize, mask: u64, depth: u32) -> Result<Self> {
        let cells = base.checked_pow(d as u32).filter(|&c| c <= 64);
        let Some(cells) = cells else {
            return Err(precondition("mask form needs base^d ≤ 64"));
        };
        if cells < 64 && mask >> cells != 0 {
            return Err(precondition("mask has bits beyond the subcell count"));
        }
        let keep = (0..cells).filter(|i| mask >> i & 1 == 1).collect();
        Self::new(d, base, keep, depth)
    }

    pub fn mask(&self) -> Option<u64> {
        (self.base.pow(self.d as u32) <= 64).then(|| self.keep_pattern.iter().fold(0u64, |m, &k| m | 1 << k))
    }

    /// Similarity dimension `log_base #keep`.
    pub fn s_nominal(&self) -> f64 {
        (self.keep_pattern.len() as f64).ln() / (self.base as f64).ln()
    }

    /// Lebesgue measure on the torus.
    pub fn uniform(d: usize, depth: u32) -> Self {
        Self::new(d, 2, (0..1 << d).collect(), depth).unwrap()
    }

    /// Unit mass at the origin.
    pub fn point_mass(d: usize, depth: u32) -> Self {
        Self::new(d, 2, vec![0], depth).unwrap()
    }

    /// The diagonal pattern in the plane: subcells `(0, 0)` and `(1, 1)`, `s = 1`.
    pub fn diagonal(depth: u32) -> Self {
        Self::new(2, 2, vec![0, 3], depth).unwrap()
    }

    /// The battery patterns: `(1, 1/2)`, `(1, 1)`, `(2, 1/2)`, `(2, 1)`, `(2, 3/2)`,
    /// `(d, d)` and the even-parity `(4, 3)` dust. `depth` is in base-2 levels
    /// and is halved for base-4 patterns.
    pub fn standard(d: usize, s: f64, depth: u32) -> Result<Self> {
        let is = |v: f64| (s - v).abs() < 1e-9;
        let base4 = |keep: Vec<usize>| Self::new(d, 4, keep, depth.div_ceil(2));
        match d {
            1 if is(0.5) => base4(vec![0, 3]),
            2 if is(0.5) => base4(vec![0, 15]),
            2 if is(1.0) => Ok(Self::diagonal(depth)),
            2 if is(1.5) => base4((0..16).filter(|k| k % 4 == 0 || k % 4 == 3).collect()),
            4 if is(3.0) => Self::new(4, 2, (0..16usize).filter(|k| k.count_ones() % 2 == 0).collect(), depth),
            _ if is(d as f64) => Ok(Self::uniform(d, depth)),
            _ => Err(precondition(format!("no standard pattern for d = {d}, s = {s}"))),
        }
    }
}

/// Nonnegative weights on the `N^d` cell lattice, atoms at `k/N`.
///
/// Linear index `Σ k_i N^i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    pub d: usize,
    pub n: usize,
    pub weights: Vec<f64>,
    pub s_nominal: f64,
    pub c_mu_estimate: f64,
    pub base: usize,
    pub keep_pattern: Vec<usize>,
    pub depth: u32,
    /// Set on measures produced by [`mollify`].
    pub mollified_delta: Option<f64>,
}

impl GridMeasure {
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.weights.len() != self.n.pow(self.d as u32) {
            return Err(Error::Format("weight array length does not match N^d".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Format("negative or NaN weight".into()));
        }
        let m = self.total_mass();
        if (m - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Format(format!("total mass {m} differs from 1")));
        }
        Ok(())
    }

    /// Density value `N^d w_k` of cell `k`.
    pub fn density(&self, k: usize) -> f64 {
        self.weights[k] * (self.n as f64).powi(self.d as i32)
    }

    pub fn sup_density(&self) -> f64 {
        self.weights.iter().fold(0.0f64, |a, &w| a.max(w)) * (self.n as f64).powi(self.d as i32)
    }
}

fn unravel(mut idx: usize, n: usize, d: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(d);
    for _ in 0..d {
        out.push(idx % n);
        idx /= n;
    }
    out
}

fn ravel(k: &[usize], n: usize) -> usize {
    k.iter().rev().fold(0, |acc, &c| acc * n + c)
}

/// Iterate the keep pattern `depth` times, then spread mass evenly over the
/// `N / base^depth` fine cells inside each retained cell.
pub fn build_cantor(spec: &CantorSpec, n: usize) -> Result<GridMeasure> {
    let d = spec.d;
    if !n.is_power_of_two() {
        return Err(precondition("N must be a power of two"));
    }
    if n > max_grid(d) {
        return Err(precondition(format!("N = {n} exceeds the desk-scale limit {} for d = {d}", max_grid(d))));
    }
    let levels = spec.base.checked_pow(spec.depth).filter(|&c| c <= n);
    let Some(coarse) = levels else {
        return Err(precondition(format!("N = {n} is too small for depth {} in base {}", spec.depth, spec.base)));
    };
    // Corner coordinates (in units of 1/coarse) of the retained cells.
    let mut cells: Vec<Vec<usize>> = vec![vec![0; d]];
    for _ in 0..spec.depth {
        let mut next = Vec::with_capacity(cells.len() * spec.keep_pattern.len());
        for c in &cells {
            for &k in &spec.keep_pattern {
                let sub = unravel(k, spec.base, d);
                next.push(c.iter().zip(&sub).map(|(a, b)| a * spec.base + b).collect());
            }
        }
        cells = next;
    }
    let fine = n / coarse;
    let per_cell = fine.pow(d as u32);
    let mass = 1.0 / (cells.len() * per_cell) as f64;
    let mut weights = vec![0.0; n.pow(d as u32)];
    for c in &cells {
        for j in 0..per_cell {
            let off = unravel(j, fine, d);
            let k: Vec<usize> = c.iter().zip(&off).map(|(a, o)| a * fine + o).collect();
            weights[ravel(&k, n)] += mass;
        }
    }
    let mut mu = GridMeasure {
        d,
        n,
        weights,
        s_nominal: spec.s_nominal(),
        c_mu_estimate: 0.0,
        base: spec.base,
        keep_pattern: spec.keep_pattern.clone(),
        depth: spec.depth,
        mollified_delta: None,
    };
    mu.c_mu_estimate = ball_condition_scan(&mu, &default_radii(n))?.c_mu;
    Ok(mu)
}

/// Dyadic radii `2/N, 4/N, .., ≤ 1/2`.
pub fn default_radii(n: usize) -> Vec<f64> {
    let mut r = 2.0 / n as f64;
    let mut out = Vec::new();
    while r <= 0.5 + 1e-12 {
        out.push(r);
        r *= 2.0;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallScan {
    pub radii: Vec<f64>,
    /// `sup_x μ(B(x, r))` over centres at cells of positive mass.
    pub sup_mass: Vec<f64>,
    /// `max_r sup_x μ(B(x, r)) / r^s` with `s = s_nominal`.
    pub c_mu: f64,
    /// Log-log slope of `sup_mass` in `r`; `None` with fewer than 4 radii.
    pub exponent: Option<f64>,
}

fn ball_offsets(d: usize, n: usize, r: f64) -> Vec<Vec<i64>> {
    let m = (r * n as f64).floor() as i64;
    let side = (2 * m + 1) as usize;
    let lim = (r * n as f64) * (r * n as f64) + 1e-9;
    (0..side.pow(d as u32))
        .map(|i| unravel(i, side, d).into_iter().map(|c| c as i64 - m).collect::<Vec<i64>>())
        .filter(|o| o.iter().map(|c| (c * c) as f64).sum::<f64>() <= lim)
        .collect()
}

/// Frostman ball condition on `[0, 1)^d`, without wrap-around.
pub fn ball_condition_scan(mu: &GridMeasure, radii: &[f64]) -> Result<BallScan> {
    let (d, n) = (mu.d, mu.n);
    let lo = 2.0 / n as f64;
    if radii.is_empty() || radii.iter().any(|&r| r < lo - 1e-12 || r > 0.5 + 1e-12) {
        return Err(precondition(format!("radii must lie in [{lo}, 1/2]")));
    }
    let centres: Vec<Vec<usize>> =
        (0..mu.weights.len()).filter(|&k| mu.weights[k] > 0.0).map(|k| unravel(k, n, d)).collect();
    let mut sup_mass = Vec::with_capacity(radii.len());
    for &r in radii {
        let offs = ball_offsets(d, n, r);
        let best = centres
            .par_iter()
            .map(|c| {
                let mut acc = 0.0;
                'o: for o in &offs {
                    let mut idx = 0usize;
                    for i in (0..d).rev() {
                        let v = c[i] as i64 + o[i];
                        if v < 0 || v >= n as i64 {
                            continue 'o;
                        }
                        idx = idx * n + v as usize;
                    }
                    acc += mu.weights[idx];
                }
                acc
            })
            .reduce(|| 0.0, f64::max);
        sup_mass.push(best);
    }
    let c_mu = radii.iter().zip(&sup_mass).map(|(r, m)| m / r.powf(mu.s_nominal)).fold(0.0, f64::max);
    let mut pairs: Vec<(f64, f64)> = radii.iter().copied().zip(sup_mass.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let (rs, ms): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let exponent = fit_loglog(&rs, &ms).ok().map(|f| f.slope);
    Ok(BallScan { radii: radii.to_vec(), sup_mass, c_mu, exponent })
}

/// `μ̂` on one period of the frequency lattice, stored in DFT order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumGrid {
    pub d: usize,
    pub n: usize,
    pub s_nominal: f64,
    pub values: Vec<Complex64>,
}

impl SpectrumGrid {
    /// `μ̂(ξ)`, periodic in each coordinate.
    pub fn get(&self, xi: &[i64]) -> Complex64 {
        let n = self.n as i64;
        let idx = xi.iter().rev().fold(0usize, |acc, &c| acc * self.n + c.rem_euclid(n) as usize);
        self.values[idx]
    }

    pub fn check_invariants(&self) -> Result<()> {
        let tol = 1e-12;
        if (self.values[0] - Complex64::new(1.0, 0.0)).norm() > tol {
            return Err(Error::Format(format!("mu_hat(0) = {} is not 1", self.values[0])));
        }
        for (i, v) in self.values.iter().enumerate() {
            if v.norm() > 1.0 + tol {
                return Err(Error::Format(format!("|mu_hat| = {} exceeds 1", v.norm())));
            }
            let k: Vec<i64> = unravel(i, self.n, self.d).into_iter().map(|c| -(c as i64)).collect();
            if (self.get(&k) - v.conj()).norm() > tol {
                return Err(Error::Format("spectrum is not Hermitian".into()));
            }
        }
        Ok(())
    }

    /// Frequencies with every coordinate in `(-N/2, N/2)`.
    pub fn open_box(&self) -> Vec<Vec<i64>> {
        open_box(self.d, self.n)
    }
}

fn open_box(d: usize, n: usize) -> Vec<Vec<i64>> {
    let h = (n / 2) as i64;
    let side = (2 * h - 1) as usize;
    (0..side.pow(d as u32)).map(|i| unravel(i, side, d).into_iter().map(|c| c as i64 - (h - 1)).collect()).collect()
}

fn in_open_box(v: &[i64], n: usize) -> bool {
    let h = (n / 2) as i64;
    v.iter().all(|c| c.abs() < h)
}

fn norm2(v: &[i64]) -> i64 {
    v.iter().map(|c| c * c).sum()
}

/// In-place multidimensional FFT over the `N^d` array (linear index `Σ k_i N^i`).
fn fft_nd(data: &mut [Complex64], n: usize, d: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..d {
        let stride = n.pow(axis as u32);
        for start in 0..data.len() {
            if (start / stride) % n != 0 {
                continue;
            }
            for j in 0..n {
                line[j] = data[start + j * stride];
            }
            fft.process(&mut line);
            for j in 0..n {
                data[start + j * stride] = line[j];
            }
        }
    }
}

/// `μ̂(ξ) = Σ_k w_k e^{-2πi k·ξ/N}` on the integer lattice.
pub fn grid_fourier(mu: &GridMeasure) -> Result<SpectrumGrid> {
    let mut values: Vec<Complex64> = mu.weights.iter().map(|&w| Complex64::new(w, 0.0)).collect();
    fft_nd(&mut values, mu.n, mu.d, false);
    for v in values.iter_mut() {
        if v.re.abs() < SPECTRUM_FLUSH {
            v.re = 0.0;
        }
        if v.im.abs() < SPECTRUM_FLUSH {
            v.im = 0.0;
        }
    }
    let spec = SpectrumGrid { d: mu.d, n: mu.n, s_nominal: mu.s_nominal, values };
    spec.check_invariants()?;
    Ok(spec)
}

/// `Σ_{R ≤ |ξ| < 2R} |μ̂(ξ)|²` over the lattice.
pub fn annulus_energy(spec: &SpectrumGrid, r: f64) -> Result<f64> {
    if r < 2.0 || r > spec.n as f64 / 4.0 {
        return Err(precondition(format!("annulus radius must lie in [2, N/4 = {}]", spec.n / 4)));
    }
    let (lo, hi) = (r * r, 4.0 * r * r);
    let h = (spec.n / 2) as i64;
    let side = spec.n;
    let mut acc = 0.0;
    for i in 0..side.pow(spec.d as u32) {
        let xi: Vec<i64> = unravel(i, side, spec.d).into_iter().map(|c| c as i64 - h).collect();
        let q = norm2(&xi) as f64;
        if q >= lo && q < hi {
            acc += spec.get(&xi).norm_sqr();
        }
    }
    Ok(acc)
}

/// Annulus radii at the self-similarity ratio: powers of `base` from 2 up to
/// `N / (2 base)`. For `base = 2` these are `2, 4, .., N/4`.
pub fn default_annulus_radii(n: usize, base: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = base as f64;
    while r < 2.0 {
        r *= base as f64;
    }
    while r <= n as f64 / (2.0 * base as f64) {
        out.push(r);
        r *= base as f64;
    }
    out
}

pub fn annulus_energy_fit(spec: &SpectrumGrid, radii: &[f64]) -> Result<DecayFitReport> {
    let e = radii.iter().map(|&r| annulus_energy(spec, r)).collect::<Result<Vec<_>>>()?;
    fit_loglog(radii, &e)
}

/// Unnormalized bump `(1 - |x|²/δ²)³` on `|x| < δ`.
pub fn bump_profile(r2_over_delta2: f64) -> f64 {
    if r2_over_delta2 >= 1.0 {
        0.0
    } else {
        (1.0 - r2_over_delta2).powi(3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifyReport {
    pub measure: GridMeasure,
    pub delta: f64,
    pub sup_density: f64,
    /// `sup_density · δ^{d - s}`; bounded across δ for a Frostman measure.
    pub scaled_sup: f64,
}

/// Periodic convolution with the discretized bump of radius `δ`, normalized
/// to unit discrete mass.
pub fn mollify(mu: &GridMeasure, delta: f64) -> Result<MollifyReport> {
    let (d, n) = (mu.d, mu.n);
    if delta < 2.0 / n as f64 - 1e-12 {
        return Err(precondition(format!("delta = {delta} is below the grid resolution 2/N = {}", 2.0 / n as f64)));
    }
    if delta > 0.5 {
        return Err(precondition("delta must not exceed 1/2"));
    }
    let dn = delta * n as f64;
    let kernel: Vec<(Vec<i64>, f64)> = ball_offsets(d, n, delta)
        .into_iter()
        .map(|o| {
            let r2 = o.iter().map(|c| (c * c) as f64).sum::<f64>() / (dn * dn);
            (o, bump_profile(r2))
        })
        .filter(|(_, w)| *w > 0.0)
        .collect();
    let ksum: f64 = kernel.iter().map(|k| k.1).sum();
    let n_i = n as i64;
    let weights: Vec<f64> = (0..mu.weights.len())
        .into_par_iter()
        .map(|k| {
            let c = unravel(k, n, d);
            let mut acc = 0.0;
            for (o, w) in &kernel {
                let mut idx = 0usize;
                for i in (0..d).rev() {
                    idx = idx * n + (c[i] as i64 - o[i]).rem_euclid(n_i) as usize;
                }
                acc += w * mu.weights[idx];
            }
            acc / ksum
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
    let mut out = GridMeasure { weights, mollified_delta: Some(delta), ..mu.clone() };
    let total: f64 = out.total_mass();
    if (total - 1.0).abs() > MASS_TOLERANCE {
        let corr = 1.0 / total;
        out.weights.iter_mut().for_each(|w| *w *= corr);
    }
    let sup_density = out.sup_density();
    Ok(MollifyReport {
        scaled_sup: sup_density * delta.powf(d as f64 - mu.s_nominal),
        measure: out,
        delta,
        sup_density,
    })
}

/// Log-log slope of `‖μ_δ‖_∞` against `δ`; the Frostman prediction is `s - d`.
pub fn mollified_sup_fit(mu: &GridMeasure, deltas: &[f64]) -> Result<DecayFitReport> {
    let mut ds = deltas.to_vec();
    ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sups = ds.iter().map(|&dl| mollify(mu, dl).map(|r| r.sup_density)).collect::<Result<Vec<_>>>()?;
    fit_loglog(&ds, &sups)
}

/// Dyadic δ values from `2/N` to `1/4`.
pub fn default_deltas(n: usize) -> Vec<f64> {
    default_radii(n).into_iter().filter(|&r| r <= 0.25 + 1e-12).collect()
}

/// Budget for the σ̂ evaluations behind the frequency-side sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaEval {
    /// Refuse when the quadrature guard asks for more nodes than this.
    pub max_nodes: usize,
}

impl Default for SigmaEval {
    fn default() -> Self {
        Self { max_nodes: 2048 }
    }
}

/// Rotation-invariant key of a lattice pair: `(|ξ|², |η|², ξ·η)`.
type PairKey = (i64, i64, i64);

fn pair_key(xi: &[i64], eta: &[i64]) -> PairKey {
    (norm2(xi), norm2(eta), xi.iter().zip(eta).map(|(a, b)| a * b).sum())
}

/// `σ̂(tξ, tη)` for any lattice pair with the given key, evaluated on the
/// representative `ξ = (|ξ|, 0, ..)`, `η` in the first coordinate plane.
pub fn sigma_for_key(d: usize, key: (i64, i64, i64), t: f64, eval: &SigmaEval) -> Result<f64> {
    let (a, b, c) = (key.0 as f64, key.1 as f64, key.2 as f64);
    let mut xi = vec![0.0; d];
    let mut eta = vec![0.0; d];
    if a > 0.0 {
        let ra = a.sqrt();
        xi[0] = t * ra;
        eta[0] = t * c / ra;
        if d > 1 {
            eta[1] = t * (b - c * c / a).max(0.0).sqrt();
        }
    } else {
        eta[0] = t * b.sqrt();
    }
    let pair = FreqPair { xi, eta };
    if d > 2 {
        let need = QuadratureSpec::for_frequency(pair.magnitude(), 0, 0).sphere_nodes;
        if need > eval.max_nodes {
            return Err(Error::NyquistRefusal { nodes: eval.max_nodes, required: need, freq: pair.magnitude() });
        }
    }
    sigma_hat_auto(&pair)
}

const KEY_CHUNK: usize = 64;

/// Group `μ̂(ξ)μ̂(η)μ̂(-ξ-η)` by pair key. `accept(ξ, η)` selects pairs and
/// `fold` maps a product into the per-key accumulator.
fn grouped_products<A, F, G>(spec: &SpectrumGrid, accept: F, init: A, fold: G) -> (Vec<(PairKey, A)>, usize)
where
    A: Clone + Send + Sync + MergeAcc,
    F: Fn(&[i64], &[i64]) -> bool + Sync,
    G: Fn(&mut A, Complex64, &[i64], &[i64]) + Sync,
{
    let pts = spec.open_box();
    let vals: Vec<Complex64> = pts.iter().map(|p| spec.get(p)).collect();
    let chunks: Vec<(HashMap<PairKey, A>, usize)> = pts
        .par_chunks(KEY_CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut map: HashMap<PairKey, A> = HashMap::new();
            let mut count = 0usize;
            let mut zeta = vec![0i64; spec.d];
            for (j, xi) in chunk.iter().enumerate() {
                let mx = vals[ci * KEY_CHUNK + j];
                if mx == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for (eta, &me) in pts.iter().zip(&vals) {
                    if me == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for k in 0..spec.d {
                        zeta[k] = -xi[k] - eta[k];
                    }
                    if !in_open_box(&zeta, spec.n) || !accept(xi, eta) {
                        continue;
                    }
                    let m = mx * me * spec.get(&zeta);
                    if m == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    count += 1;
                    fold(map.entry(pair_key(xi, eta)).or_insert_with(|| init.clone()), m, xi, eta);
                }
            }
            (map, count)
        })
        .collect();
    let mut total: HashMap<PairKey, A> = HashMap::new();
    let mut pairs = 0;
    for (map, count) in chunks {
        pairs += count;
        let mut entries: Vec<(PairKey, A)> = map.into_iter().collect();
        entries.sort_by_key(|e| e.0);
        for (k, v) in entries {
            match total.get_mut(&k) {
                Some(acc) => acc.merge(&v),
                None => {
                    total.insert(k, v);
                }
            }
        }
    }
    let mut out: Vec<(PairKey, A)> = total.into_iter().collect();
    out.sort_by_key(|e| e.0);
    (out, pairs)
}

trait MergeAcc {
    fn merge(&mut self, other: &Self);
}

impl MergeAcc for Complex64 {
    fn merge(&mut self, other: &Self) {
        *self += other;
    }
}

impl MergeAcc for (Complex64, f64) {
    fn merge(&mut self, other: &Self) {
        self.0 += other.0;
        self.1 += other.1;
    }
}

impl MergeAcc for Vec<f64> {
    fn merge(&mut self, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            *a += b;
        }
    }
}

/// Uniform side-length grid on `[t0, 1]` with `points` nodes.
pub fn t_grid(t0: f64, points: usize) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&t0) || points < 2 {
        return Err(precondition("need 0 ≤ t0 < 1 and at least 2 t points"));
    }
    Ok((0..points).map(|i| t0 + (1.0 - t0) * i as f64 / (points - 1) as f64).collect())
}

fn check_t_grid(ts: &[f64]) -> Result<()> {
    if ts.len() < 2 || ts.iter().any(|t| !(0.0..=1.0).contains(t)) || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(precondition("t grid must be ascending in [0, 1] with at least 2 points"));
    }
    Ok(())
}

/// Trapezoid weights on an ascending grid.
fn trapezoid_weights(ts: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; ts.len()];
    for i in 0..ts.len() - 1 {
        let h = ts[i + 1] - ts[i];
        w[i] += h / 2.0;
        w[i + 1] += h / 2.0;
    }
    w
}

/// `∫ f t^{d-1} dt` by the trapezoid rule, with the Euler–Maclaurin end
/// correction magnitude as error estimate.
fn t_integral(ts: &[f64], f: &[f64], d: usize) -> (f64, f64) {
    let g: Vec<f64> = ts.iter().zip(f).map(|(t, v)| v * t.powi(d as i32 - 1)).collect();
    let w = trapezoid_weights(ts);
    let total = g.iter().zip(&w).map(|(a, b)| a * b).sum();
    let n = ts.len();
    let h = (ts[n - 1] - ts[0]) / (n - 1) as f64;
    let (da, db) = ((g[1] - g[0]) / (ts[1] - ts[0]), (g[n - 1] - g[n - 2]) / (ts[n - 1] - ts[n - 2]));
    (total, (h * h / 12.0 * (db - da)).abs())
}

/// Frequency-side estimate of the configuration mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuEstimate {
    /// `∫ ν(t) t^{d-1} dt` over the t grid.
    pub total_mass: f64,
    /// Imaginary part of the same sum; zero up to rounding.
    pub imag_part: f64,
    pub t_grid: Vec<f64>,
    /// Per-t value `ν(t) = Re Σ μ̂(ξ)μ̂(η)μ̂(-ξ-η)σ̂(-tξ, -tη)`.
    pub densities: Vec<f64>,
    pub t0: f64,
    pub delta: Option<f64>,
    pub tail_r: f64,
    /// t-rule error estimate plus the σ̂ quadrature allowance.
    pub quadrature_error: f64,
    pub pairs: usize,
    pub keys: usize,
}

/// Absolute σ̂ error allowance per evaluation.
pub const SIGMA_ABS_ERROR: f64 = 1e-8;

/// Configuration integral on the frequency side, pairs with `|ξ|, |η| ≤ r_cut`.
pub fn triple_correlation_freq(spec: &SpectrumGrid, ts: &[f64], r_cut: f64, eval: &SigmaEval) -> Result<NuEstimate> {
    check_t_grid(ts)?;
    if r_cut > spec.n as f64 / 2.0 || r_cut < 0.0 {
        return Err(precondition(format!("R_cut must lie in [0, N/2 = {}]", spec.n / 2)));
    }
    let rc2 = r_cut * r_cut + 1e-9;
    let (groups, pairs) = grouped_products(
        spec,
        |xi, eta| norm2(xi) as f64 <= rc2 && norm2(eta) as f64 <= rc2,
        (Complex64::new(0.0, 0.0), 0.0),
        |acc, m, _, _| {
            acc.0 += m;
            acc.1 += m.norm();
        },
    );
    let abs_weight: f64 = groups.iter().map(|g| g.1 .1).sum();
    let mut densities = Vec::with_capacity(ts.len());
    let mut imags = Vec::with_capacity(ts.len());
    for &t in ts {
        let sig = groups.par_iter().map(|(k, _)| sigma_for_key(spec.d, *k, t, eval)).collect::<Result<Vec<f64>>>()?;
        let (mut re, mut im) = (0.0, 0.0);
        for ((_, (w, _)), s) in groups.iter().zip(&sig) {
            re += w.re * s;
            im += w.im * s;
        }
        densities.push(re);
        imags.push(im);
    }
    let (total_mass, t_err) = t_integral(ts, &densities, spec.d);
    let (imag_part, _) = t_integral(ts, &imags, spec.d);
    let sigma_err = SIGMA_ABS_ERROR * abs_weight * t_integral(ts, &vec![1.0; ts.len()], spec.d).0;
    Ok(NuEstimate {
        total_mass,
        imag_part,
        t_grid: ts.to_vec(),
        densities,
        t0: ts[0],
        delta: None,
        tail_r: r_cut,
        quadrature_error: t_err + sigma_err,
        pairs,
        keys: groups.len(),
    })
}

/// Spatial-side estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialEstimate {
    pub value: f64,
    pub t_grid: Vec<f64>,
    pub densities: Vec<f64>,
    pub rotation_samples: usize,
    pub seed: u64,
}

/// Periodic multilinear interpolation of the grid density at `p`.
fn interp_density(mu: &GridMeasure, p: &[f64]) -> f64 {
    let (d, n) = (mu.d, mu.n);
    let nf = n as f64;
    let mut base = [0usize; 4];
    let mut frac = [0.0f64; 4];
    for i in 0..d {
        let s = (p[i] * nf).rem_euclid(nf);
        let f = s.floor();
        base[i] = f as usize % n;
        frac[i] = s - f;
    }
    let mut acc = 0.0;
    for corner in 0..1usize << d {
        let mut w = 1.0;
        let mut idx = 0usize;
        for i in (0..d).rev() {
            let bit = corner >> i & 1;
            w *= if bit == 1 { frac[i] } else { 1.0 - frac[i] };
            idx = idx * n + (base[i] + bit) % n;
        }
        if w != 0.0 {
            acc += w * mu.weights[idx];
        }
    }
    acc * nf.powi(d as i32)
}

/// Leg pairs `(x, y)` sampled from σ: uniform angles with both orientations
/// in the plane, Haar rotations of `(x⁰, y⁰)` otherwise.
pub fn sigma_samples(d: usize, samples: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    if d == 2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let offset: f64 = rng.random();
        let mut out = Vec::with_capacity(2 * samples);
        for j in 0..samples {
            let a = 2.0 * PI * (j as f64 + offset) / samples as f64;
            let x = vec![a.cos(), a.sin()];
            for sgn in [1.0, -1.0] {
                let b = a + sgn * PI / 3.0;
                out.push((x.clone(), vec![b.cos(), b.sin()]));
            }
        }
        return out;
    }
    let base = SurfaceSpec::standard(d);
    (0..samples)
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64);
            let g = haar_orthogonal(d, &mut rng);
            (mat_vec(&g, &base.base_x0), mat_vec(&g, &base.base_y0))
        })
        .collect()
}

/// `∫_{t0}^1 t^{d-1} ∫ μ_δ(z) E_σ[μ_δ(z + tx) μ_δ(z + ty)] dz dt` on the
/// torus, `z` over the grid and shifted points interpolated multilinearly.
pub fn triple_correlation_space(mu_delta: &GridMeasure, t0: f64, rotation_samples: usize, seed: u64) -> Result<SpatialEstimate> {
    if let Some(delta) = mu_delta.mollified_delta {
        if t0 < 2.0 * delta - 1e-12 {
            return Err(precondition(format!("t0 = {t0} must be at least 2 delta = {}", 2.0 * delta)));
        }
    }
    spatial_integral(mu_delta, t0, rotation_samples, seed)
}

/// [`triple_correlation_space`] without the `t0 ≥ 2δ` precondition.
fn spatial_integral(mu_delta: &GridMeasure, t0: f64, rotation_samples: usize, seed: u64) -> Result<SpatialEstimate> {
    if mu_delta.d > 4 {
        return Err(precondition("spatial oracle supports d ≤ 4"));
    }
    if rotation_samples == 0 {
        return Err(precondition("rotation_samples must be positive"));
    }
    let ts = t_grid(t0, DEFAULT_T_POINTS)?;
    let (d, n) = (mu_delta.d, mu_delta.n);
    let legs = sigma_samples(d, rotation_samples, seed);
    let zs: Vec<(Vec<f64>, f64)> = (0..mu_delta.weights.len())
        .filter(|&k| mu_delta.weights[k] > 0.0)
        .map(|k| (unravel(k, n, d).into_iter().map(|c| c as f64 / n as f64).collect(), mu_delta.density(k)))
        .collect();
    let cell = (n as f64).powi(-(d as i32));
    let densities: Vec<f64> = ts
        .par_iter()
        .map(|&t| {
            let mut acc = 0.0;
            let mut p = vec![0.0; d];
            let mut q = vec![0.0; d];
            for (x, y) in &legs {
                let mut inner = 0.0;
                for (z, fz) in &zs {
                    for i in 0..d {
                        p[i] = z[i] + t * x[i];
                        q[i] = z[i] + t * y[i];
                    }
                    let a = interp_density(mu_delta, &p);
                    if a == 0.0 {
                        continue;
                    }
                    inner += fz * a * interp_density(mu_delta, &q);
                }
                acc += inner;
            }
            acc * cell / legs.len() as f64
        })
        .collect();
    let (value, _) = t_integral(&ts, &densities, d);
    Ok(SpatialEstimate { value, t_grid: ts, densities, rotation_samples, seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailScanReport {
    pub d: usize,
    pub n: usize,
    pub t: f64,
    pub s_nominal: f64,
    pub r_grid: Vec<f64>,
    /// `Σ_{|ξ|, |η| > R} |μ̂(ξ)μ̂(η)μ̂(-ξ-η)σ̂(-tξ, -tη)|`.
    pub values: Vec<f64>,
    /// `-(3s - 2d - 3)/2`.
    pub predicted_slope: f64,
    pub fit: Option<DecayFitReport>,
    /// `ok`, or `zero_tail` when every tail sum vanishes.
    pub status: String,
    pub note: Option<String>,
}

/// Tail sums of the absolute triple series for each `R` and their log-log slope.
pub fn tail_bound_scan(spec: &SpectrumGrid, r_list: &[f64], t: f64, eval: &SigmaEval) -> Result<TailScanReport> {
    if r_list.is_empty() || r_list.iter().any(|&r| r < 0.0 || r > spec.n as f64 / 2.0) {
        return Err(precondition(format!("R values must lie in [0, N/2 = {}]", spec.n / 2)));
    }
    if r_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(precondition("R values must be strictly ascending"));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(precondition("t must lie in (0, 1]"));
    }
    let r2: Vec<f64> = r_list.iter().map(|r| r * r).collect();
    let k = r2.len();
    let (groups, _) = grouped_products(
        spec,
        |xi, eta| norm2(xi).min(norm2(eta)) as f64 > r2[0],
        vec![0.0; k],
        |acc, m, xi, eta| {
            let q = norm2(xi).min(norm2(eta)) as f64;
            let a = m.norm();
            for (slot, &lim) in acc.iter_mut().zip(&r2) {
                if q > lim {
                    *slot += a;
                }
            }
        },
    );
    let sig = groups.par_iter().map(|(key, _)| sigma_for_key(spec.d, *key, t, eval)).collect::<Result<Vec<f64>>>()?;
    let mut values = vec![0.0; k];
    for ((_, acc), s) in groups.iter().zip(&sig) {
        for (v, a) in values.iter_mut().zip(acc) {
            *v += a * s.abs();
        }
    }
    let (d, s) = (spec.d as f64, spec.s_nominal);
    let fit = fit_loglog(r_list, &values).ok();
    let status = if values.iter().all(|&v| v == 0.0) { "zero_tail" } else { "ok" };
    let note = (spec.d >= 4).then(|| {
        format!("d = {} probed at the desk-scale grid N = {}; the large-d regime is not reachable here", spec.d, spec.n)
    });
    Ok(TailScanReport {
        d: spec.d,
        n: spec.n,
        t,
        s_nominal: s,
        r_grid: r_list.to_vec(),
        values,
        predicted_slope: -(3.0 * s - 2.0 * d - 3.0) / 2.0,
        fit,
        status: status.into(),
        note,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityRow {
    pub delta: f64,
    pub spatial: f64,
    pub nu_freq: f64,
    pub abs_diff: f64,
    /// Quadrature error of `nu_freq` plus its disagreement with the spatial side.
    pub numerical_error: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub t0: f64,
    pub rows: Vec<PositivityRow>,
    /// `nu_freq > 3 · numerical_error` at the smallest δ.
    pub positive: bool,
    pub verdict: String,
}

/// Both sides of the configuration integral along a descending δ list.
pub fn positivity_report(
    mu: &GridMeasure,
    delta_list: &[f64],
    t0: f64,
    rotation_samples: usize,
    seed: u64,
    eval: &SigmaEval,
) -> Result<PositivityReport> {
    if delta_list.is_empty() || delta_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(precondition("delta list must be nonempty and strictly descending"));
    }
    let ts = t_grid(t0, DEFAULT_T_POINTS)?;
    let mut rows = Vec::new();
    for &delta in delta_list {
        let m = mollify(mu, delta)?.measure;
        let spatial = spatial_integral(&m, t0, rotation_samples, seed)?.value;
        let warning = (t0 < 2.0 * delta - 1e-12)
            .then(|| format!("t0 = {t0} < 2 delta; the spatial side is outside its nondegeneracy range"));
        let spec = grid_fourier(&m)?;
        let mut nu = triple_correlation_freq(&spec, &ts, mu.n as f64 / 2.0, eval)?;
        nu.delta = Some(delta);
        let abs_diff = (nu.total_mass - spatial).abs();
        rows.push(PositivityRow {
            delta,
            spatial,
            nu_freq: nu.total_mass,
            abs_diff,
            numerical_error: nu.quadrature_error + nu.imag_part.abs() + abs_diff,
            warning,
        });
    }
    let last = rows.last().unwrap();
    let positive = last.nu_freq > 3.0 * last.numerical_error;
    let verdict = if positive { format!("nu > 0 at cutoff t0 = {t0}") } else { "not positive within numerical error".into() };
    Ok(PositivityReport { t0, rows, positive, verdict })
}

/// JSON header stored beside the raw weight array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureHeader {
    pub format: String,
    pub version: String,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub s_nominal: f64,
    pub keep_pattern: Vec<usize>,
    pub base: usize,
    pub depth: u32,
    pub c_mu_estimate: f64,
    pub mollified_delta: Option<f64>,
    /// `sha256:<hex>` of the little-endian `f64` payload.
    pub checksum: String,
    pub data_file: String,
}

const HEADER_FORMAT: &str = "eqtri-grid-measure";

fn checksum(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

/// Header path for a weight file: same stem, `.json` extension.
pub fn header_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Write `bin` (raw little-endian `f64` weights) and its JSON header.
pub fn save_measure(mu: &GridMeasure, bin: &Path) -> Result<PathBuf> {
    mu.check_invariants()?;
    let bytes: Vec<u8> = mu.weights.iter().flat_map(|w| w.to_le_bytes()).collect();
    let header = MeasureHeader {
        format: HEADER_FORMAT.into(),
        version: crate::ARTIFACT_VERSION.into(),
        d: mu.d,
        n: mu.n,
        s_nominal: mu.s_nominal,
        keep_pattern: mu.keep_pattern.clone(),
        base: mu.base,
        depth: mu.depth,
        c_mu_estimate: mu.c_mu_estimate,
        mollified_delta: mu.mollified_delta,
        checksum: checksum(&bytes),
        data_file: bin.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string(),
    };
    let hp = header_path(bin);
    if hp == bin {
        return Err(precondition("weight file must not have a .json extension"));
    }
    fs::write(bin, &bytes)?;
    fs::write(&hp, serde_json::to_string_pretty(&header)?)?;
    Ok(hp)
}

/// Load from either the header or the weight file, verifying the checksum.
pub fn load_measure(path: &Path) -> Result<GridMeasure> {
    let hp = if path.extension().is_some_and(|e| e == "json") { path.to_path_buf() } else { header_path(path) };
    let header: MeasureHeader = serde_json::from_str(&fs::read_to_string(&hp)?)?;
    if header.format != HEADER_FORMAT {
        return Err(Error::Format(format!("unexpected header format {:?}", header.format)));
    }
    let bin = hp.with_file_name(&header.data_file);
    let bytes = fs::read(&bin)?;
    if checksum(&bytes) != header.checksum {
        return Err(Error::Format("checksum mismatch".into()));
    }
    if bytes.len() != 8 * header.n.pow(header.d as u32) {
        return Err(Error::Format("payload length does not match header".into()));
    }
    let weights = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mu = GridMeasure {
        d: header.d,
        n: header.n,
        weights,
        s_nominal: header.s_nominal,
        c_mu_estimate: header.c_mu_estimate,
        base: header.base,
        keep_pattern: header.keep_pattern,
        depth: header.depth,
        mollified_delta: header.mollified_delta,
    };
    mu.check_invariants()?;
    Ok(mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_dft(mu: &GridMeasure, xi: &[i64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &w) in mu.weights.iter().enumerate() {
            let c = unravel(k, mu.n, mu.d);
            let ph: f64 = c.iter().zip(xi).map(|(a, b)| *a as f64 * *b as f64).sum::<f64>() / mu.n as f64;
            acc += Complex64::from_polar(w, -2.0 * PI * ph);
        }
        acc
    }

    #[test]
    fn cantor_basics() {
        let u = build_cantor(&CantorSpec::uniform(2, 3), 8).unwrap();
        assert!(u.weights.iter().all(|&w| (w - 1.0 / 64.0).abs() < 1e-15));
        assert_eq!(u.s_nominal, 2.0);
        let p = build_cantor(&CantorSpec::new(1, 2, vec![0], 4).unwrap(), 16).unwrap();
        assert_eq!(p.weights[0], 1.0);
        assert_eq!(p.s_nominal, 0.0);
        let diag = build_cantor(&CantorSpec::diagonal(5), 32).unwrap();
        assert_eq!(diag.s_nominal, 1.0);
        assert_eq!(diag.weights.iter().filter(|&&w| w > 0.0).count(), 32);
        assert!(build_cantor(&CantorSpec::diagonal(6), 32).is_err());
        assert!(CantorSpec::new(2, 2, vec![], 1).is_err());
        assert!(CantorSpec::new(2, 2, vec![4], 1).is_err());
        assert!(CantorSpec::from_mask(2, 2, 0b1001, 3).unwrap() == CantorSpec::diagonal(3));
        let half = CantorSpec::standard(1, 0.5, 10).unwrap();
        assert!((half.s_nominal() - 0.5).abs() < 1e-15);
        assert!((CantorSpec::standard(2, 1.5, 4).unwrap().s_nominal() - 1.5).abs() < 1e-15);
        assert!((CantorSpec::standard(4, 3.0, 3).unwrap().s_nominal() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn ball_scan_examples() {
        let u = build_cantor(&CantorSpec::uniform(2, 6), 64).unwrap();
        let e = ball_condition_scan(&u, &default_radii(64)).unwrap().exponent.unwrap();
        assert!((e - 2.0).abs() < 0.1, "{e}");
        let diag = build_cantor(&CantorSpec::diagonal(5), 64).unwrap();
        let e = ball_condition_scan(&diag, &default_radii(64)).unwrap().exponent.unwrap();
        assert!((e - 1.0).abs() < 0.2, "{e}");
        let p = build_cantor(&CantorSpec::point_mass(2, 5), 32).unwrap();
        let e = ball_condition_scan(&p, &default_radii(32)).unwrap().exponent.unwrap();
        assert!(e.abs() < 0.05);
        assert!(ball_condition_scan(&p, &[0.01]).is_err());
    }

    #[test]
    fn fourier_matches_direct_sum() {
        let mu = build_cantor(&CantorSpec::standard(2, 1.5, 4).unwrap(), 16).unwrap();
        let spec = grid_fourier(&mu).unwrap();
        for xi in [[0i64, 0], [1, -3], [-8, 5], [7, 7]] {
            assert!((spec.get(&xi) - brute_dft(&mu, &xi)).norm() < 1e-13);
        }
        let u = build_cantor(&CantorSpec::uniform(1, 4), 16).unwrap();
        let s = grid_fourier(&u).unwrap();
        for xi in [3i64, 8, -5] {
            let direct = brute_dft(&u, &[xi]);
            assert!((s.get(&[xi]) - direct).norm() < 1e-14);
        }
        assert_eq!(s.get(&[8]), Complex64::new(0.0, 0.0));
        let p = build_cantor(&CantorSpec::point_mass(2, 3), 8).unwrap();
        let s = grid_fourier(&p).unwrap();
        assert!(s.values.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn annulus_energy_examples() {
        let p = build_cantor(&CantorSpec::point_mass(2, 5), 32).unwrap();
        let s = grid_fourier(&p).unwrap();
        let e = annulus_energy(&s, 4.0).unwrap();
        let count = (-8i64..8).flat_map(|a| (-8i64..8).map(move |b| a * a + b * b)).filter(|&q| (16..64).contains(&q)).count();
        assert!((e - count as f64).abs() < 1e-9);
        assert!(annulus_energy(&s, 1.0).is_err());
        let diag = build_cantor(&CantorSpec::diagonal(6), 64).unwrap();
        let f = annulus_energy_fit(&grid_fourier(&diag).unwrap(), &default_annulus_radii(64, 2)).unwrap();
        assert!((f.slope - 1.0).abs() < 0.3, "{}", f.slope);
    }

    #[test]
    fn mollify_examples() {
        let u = build_cantor(&CantorSpec::uniform(2, 5), 32).unwrap();
        let m = mollify(&u, 0.125).unwrap();
        assert!((m.measure.total_mass() - 1.0).abs() <= MASS_TOLERANCE);
        assert!(m.sup_density / u.sup_density() <= 1.0 + 1e-6);
        let p = build_cantor(&CantorSpec::point_mass(2, 6), 64).unwrap();
        let f = mollified_sup_fit(&p, &default_deltas(64)).unwrap();
        assert!((f.slope + 2.0).abs() < 0.3, "{}", f.slope);
        let diag = build_cantor(&CantorSpec::diagonal(6), 64).unwrap();
        let f = mollified_sup_fit(&diag, &default_deltas(64)).unwrap();
        assert!((f.slope + 1.0).abs() < 0.3, "{}", f.slope);
        assert!(mollify(&u, 0.01).is_err());
    }

    #[test]
    fn triple_freq_point_mass_matches_brute_force() {
        let p = build_cantor(&CantorSpec::point_mass(2, 2), 4).unwrap();
        let spec = grid_fourier(&p).unwrap();
        let eval = SigmaEval::default();
        let ts = [0.25, 0.5, 1.0];
        let nu = triple_correlation_freq(&spec, &ts, 2.0, &eval).unwrap();
        let pts = open_box(2, 4);
        for (i, &t) in ts.iter().enumerate() {
            let mut direct = 0.0;
            for xi in &pts {
                for eta in &pts {
                    let z: Vec<i64> = xi.iter().zip(eta).map(|(a, b)| -a - b).collect();
                    if !in_open_box(&z, 4) {
                        continue;
                    }
                    let pair = FreqPair {
                        xi: xi.iter().map(|&c| -t * c as f64).collect(),
                        eta: eta.iter().map(|&c| -t * c as f64).collect(),
                    };
                    direct += crate::config_surface::sigma_hat_planar(&pair).unwrap();
                }
            }
            assert!((nu.densities[i] - direct).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn triple_freq_is_real_and_positive_for_uniform() {
        let u = build_cantor(&CantorSpec::uniform(2, 5), 32).unwrap();
        let nu = triple_correlation_freq(&grid_fourier(&u).unwrap(), &t_grid(0.0, 32).unwrap(), 16.0, &SigmaEval::default())
            .unwrap();
        assert!(nu.total_mass > 0.0);
        assert!((nu.total_mass - 0.5).abs() < 1e-3);
        let diag = mollify(&build_cantor(&CantorSpec::diagonal(4), 16).unwrap(), 0.25).unwrap().measure;
        let nu = triple_correlation_freq(&grid_fourier(&diag).unwrap(), &t_grid(0.25, 32).unwrap(), 8.0, &SigmaEval::default())
            .unwrap();
        assert!(nu.imag_part.abs() <= 1e-6 * nu.total_mass.abs());
    }

    #[test]
    fn sigma_key_is_rotation_invariant() {
        let eval = SigmaEval::default();
        let a = sigma_for_key(3, pair_key(&[1, 2, 0], &[0, -1, 2]), 0.7, &eval).unwrap();
        let pair = FreqPair { xi: vec![0.7, 1.4, 0.0], eta: vec![0.0, -0.7, 1.4] };
        let b = crate::config_surface::sigma_hat_auto(&pair).unwrap();
        assert!((a - b).abs() < 1e-10);
        let tight = SigmaEval { max_nodes: 32 };
        assert!(matches!(sigma_for_key(3, (100, 100, 0), 1.0, &tight), Err(Error::NyquistRefusal { .. })));
    }

    #[test]
    fn spatial_examples() {
        let u = mollify(&build_cantor(&CantorSpec::uniform(2, 4), 16).unwrap(), 0.125).unwrap().measure;
        let s = triple_correlation_space(&u, 0.25, 16, 1).unwrap();
        assert!(s.value > 0.0);
        let p = mollify(&build_cantor(&CantorSpec::point_mass(2, 4), 16).unwrap(), 0.125).unwrap().measure;
        assert_eq!(triple_correlation_space(&p, 0.25, 16, 1).unwrap().value, 0.0);
        assert!(triple_correlation_space(&p, 0.1, 16, 1).is_err());
    }

    #[test]
    fn tail_scan_is_nonincreasing() {
        let m = build_cantor(&CantorSpec::diagonal(4), 16).unwrap();
        let spec = grid_fourier(&m).unwrap();
        let r = tail_bound_scan(&spec, &[1.0, 2.0, 3.0, 4.0, 5.0], 0.5, &SigmaEval::default()).unwrap();
        assert!(r.values.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(r.predicted_slope, -(3.0 - 4.0 - 3.0) / 2.0);
    }

    #[test]
    fn persistence_round_trip() {
        let dir = std::env::temp_dir().join(format!("eqtri-fl-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let mu = build_cantor(&CantorSpec::diagonal(3), 8).unwrap();
        let bin = dir.join("m.bin");
        let hp = save_measure(&mu, &bin).unwrap();
        assert_eq!(load_measure(&hp).unwrap(), mu);
        assert_eq!(load_measure(&bin).unwrap(), mu);
        let mut bytes = fs::read(&bin).unwrap();
        bytes[3] ^= 1;
        fs::write(&bin, bytes).unwrap();
        assert!(load_measure(&hp).is_err());
        fs::remove_dir_all(dir).ok();
    }
}
