//! Run records and the acceptance battery.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config_surface::{
    decay_exponent_fit, generic_direction, random_pair, sigma_hat_mc, sigma_hat_quad, sigma_hat_quad_with, FreqPair,
    QuadratureSpec,
};
use crate::error::{Error, Result};
use crate::ff_triangles::{equilateral_census_with_budget, FFSubset, PrimeField};
use crate::fit::fit_loglog;
use crate::fractal_lab::{
    annulus_energy_fit, ball_condition_scan, build_cantor, default_annulus_radii, default_deltas, default_radii,
    grid_fourier, mollified_sup_fit, mollify, positivity_report, t_grid, tail_bound_scan, triple_correlation_freq,
    triple_correlation_space, CantorSpec, SigmaEval,
};
use crate::special::sphere_ft;
use crate::stationary_phase::{
    critical_data, critical_residual, determinant, hessian_closed_form, hessian_fd, numerical_gradient,
    random_admissible_pair, rotate_pi3_in_first_last, lemma_int_quadrature, LocalCoords,
};
use crate::vecmath::{add, norm};
use crate::ARTIFACT_VERSION;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// At least one acceptance criterion failed.
    pub const CRITERION_FAILED: i32 = 1;
    pub const PARSE_ERROR: i32 = 2;
    pub const PRECONDITION: i32 = 3;
    pub const BUDGET_ABORT: i32 = 4;
    pub const IO_ERROR: i32 = 5;
}

/// Exit code and machine-readable status for an error.
pub fn classify(err: &Error) -> (i32, &'static str) {
    match err {
        Error::BudgetExceeded { .. } => (exit::BUDGET_ABORT, "budget_abort"),
        Error::NyquistRefusal { .. } => (exit::PRECONDITION, "nyquist_refusal"),
        Error::Precondition(_) | Error::OutsideDomain(_) | Error::StratumUnderflow(_) => {
            (exit::PRECONDITION, "precondition_violation")
        }
        Error::Io(_) | Error::Format(_) => (exit::IO_ERROR, "io_error"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?}; expected csv or json")),
        }
    }
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    /// Module parameters as parsed, including seeds and node or sample budgets.
    pub params: Value,
    pub output: Option<String>,
    pub format: Format,
    pub version: String,
}

impl RunConfig {
    pub fn new(subcommand: &str, params: Value, output: Option<String>, format: Format) -> Self {
        Self { subcommand: subcommand.into(), params, output, format, version: ARTIFACT_VERSION.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    /// `ok`, `budget_abort`, `nyquist_refusal`, `precondition_violation`,
    /// `io_error` or `criteria_failed`.
    pub status: String,
    pub payload: Value,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
}

impl RunReport {
    pub fn ok(config: RunConfig, payload: Value, wall_time_s: f64, warnings: Vec<String>) -> Self {
        Self { config, status: "ok".into(), payload, wall_time_s, warnings }
    }

    pub fn refused(config: RunConfig, err: &Error, wall_time_s: f64) -> Self {
        let (_, status) = classify(err);
        Self {
            config,
            status: status.into(),
            payload: json!({ "error": err.to_string() }),
            wall_time_s,
            warnings: vec![err.to_string()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Quick,
    Full,
}

impl FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "quick" => Ok(Profile::Quick),
            "full" => Ok(Profile::Full),
            "" => Err("profile must not be empty; expected quick or full".into()),
            other => Err(format!("unknown profile {other:?}; expected quick or full")),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Quick => "quick",
            Profile::Full => "full",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub measured: Value,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    /// One line, `PASS` or `FAIL` first.
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} {:<28} {:>7.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceSummary {
    pub profile: Profile,
    pub version: String,
    pub results: Vec<CriterionResult>,
    pub passed: usize,
    pub failed: usize,
    pub note: String,
}

fn timed(id: u32, name: &str, f: impl FnOnce() -> Result<(bool, Value, String)>) -> CriterionResult {
    let start = Instant::now();
    let (passed, measured, detail) = match f() {
        Ok(v) => v,
        Err(e) => (false, json!({ "error": e.to_string() }), format!("error: {e}")),
    };
    CriterionResult { id, name: name.into(), passed, measured, detail, seconds: start.elapsed().as_secs_f64() }
}

/// `σ̂(0, 0) = 1` and the partner identity on seeded pairs.
pub fn criterion_1(_profile: Profile) -> CriterionResult {
    timed(1, "sigma normalization/symmetry", || {
        let mut worst_norm = 0.0f64;
        let mut worst_sym = 0.0f64;
        let mut fails = 0;
        let mut total = 0;
        for d in 2..=4 {
            let zero = sigma_hat_quad(&FreqPair::zero(d), &QuadratureSpec::default())?;
            worst_norm = worst_norm.max((zero.re - 1.0).abs().max(zero.im.abs()));
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + d as u64);
            for _ in 0..50 {
                let p = random_pair(d, 16.0, &mut rng);
                let q = p.triangle_partner();
                let need = p.magnitude().max(q.magnitude());
                let spec = QuadratureSpec::for_frequency(need, 0, 0);
                let (a, b) = (sigma_hat_quad(&p, &spec)?, sigma_hat_quad(&q, &spec)?);
                let diff = a.dist(&b);
                let tol = (3.0 * a.stderr().max(b.stderr())).max(1e-4);
                worst_sym = worst_sym.max(diff);
                total += 1;
                if diff > tol {
                    fails += 1;
                }
            }
        }
        let passed = worst_norm <= 1e-8 && fails == 0;
        Ok((
            passed,
            json!({ "max_norm_error": worst_norm, "max_symmetry_gap": worst_sym, "pairs": total, "violations": fails }),
            format!("|σ̂(0,0)-1| = {worst_norm:.1e}, max symmetry gap {worst_sym:.1e} over {total} pairs"),
        ))
    })
}

/// Radii of the baseline decay fit.
pub const DECAY_RADII: [f64; 5] = [4.0, 8.0, 16.0, 32.0, 64.0];

/// Log-log slopes of `|σ̂(Rξ, Rη)|` on 5 generic directions for d = 3, 4.
pub fn criterion_2(_profile: Profile) -> CriterionResult {
    timed(2, "baseline decay exponent", || {
        let spec = QuadratureSpec::for_frequency(2.0 * DECAY_RADII[4], 0, 0);
        let mut all_ok = true;
        let mut measured = serde_json::Map::new();
        let mut detail = Vec::new();
        for d in 3..=4 {
            let target = -(d as f64 - 1.0) / 2.0;
            let mut slopes = Vec::new();
            for seed in 0..5 {
                let dir = generic_direction(d, 7000 + seed);
                slopes.push(decay_exponent_fit(&dir, &DECAY_RADII, &spec)?.slope);
            }
            all_ok &= slopes.iter().all(|s| (s - target).abs() <= 0.15);
            // Degenerate ray ξ ∥ η, where the baseline exponent is attained.
            let mut xi = vec![0.0; d];
            xi[0] = 1.0;
            let parallel = decay_exponent_fit(&FreqPair { xi: xi.clone(), eta: xi }, &DECAY_RADII, &spec)?.slope;
            let mean = slopes.iter().sum::<f64>() / 5.0;
            detail.push(format!("d={d}: mean slope {mean:.2} (target {target:.1}±0.15), parallel ray {parallel:.2}"));
            measured.insert(
                format!("d{d}"),
                json!({ "slopes": slopes, "target": target, "parallel_ray_slope": parallel,
                        "generic_stationary_phase_rate": -(2.0 * d as f64 - 3.0) / 2.0 }),
            );
        }
        Ok((all_ok, Value::Object(measured), detail.join("; ")))
    })
}

/// Quadrature against Monte Carlo with the given inner sphere transform.
pub fn criterion_3_with<F>(profile: Profile, inner: F) -> CriterionResult
where
    F: Fn(usize, f64) -> f64 + Copy,
{
    timed(3, "quadrature vs Monte Carlo", || {
        let per_d = match profile {
            Profile::Quick => 10,
            Profile::Full => 20,
        };
        let (mut agree, mut total) = (0, 0);
        let mut worst = 0.0f64;
        for d in 2..=4 {
            let mut rng = ChaCha8Rng::seed_from_u64(3000 + d as u64);
            for i in 0..per_d {
                let p = random_pair(d, 4.0, &mut rng);
                let spec = QuadratureSpec::for_frequency(p.magnitude(), 100_000, 31 * d as u64 + i);
                let q = sigma_hat_quad_with(&p, &spec, inner)?;
                let m = sigma_hat_mc(&p, &spec)?;
                let z = q.dist(&m) / m.stderr().max(1e-300);
                worst = worst.max(z);
                total += 1;
                if z <= 3.0 {
                    agree += 1;
                }
            }
        }
        let frac = agree as f64 / total as f64;
        Ok((
            frac >= 0.95,
            json!({ "agreeing": agree, "pairs": total, "fraction": frac, "max_z": worst, "mc_samples": 100_000 }),
            format!("{agree}/{total} pairs within 3 stderr ({:.0}%), max z {worst:.2}", 100.0 * frac),
        ))
    })
}

pub fn criterion_3(profile: Profile) -> CriterionResult {
    criterion_3_with(profile, sphere_ft)
}

/// Gradient/critical-point equivalence, Hessian determinant, first factor.
pub fn criterion_4(_profile: Profile) -> CriterionResult {
    timed(4, "stationary-phase algebra", || {
        let mut worst_det = 0.0f64;
        let mut worst_ff = 0.0f64;
        let mut mismatches = 0;
        let mut checked = 0;
        for d in 2..=4 {
            let n = 2 * d - 3;
            let mut rng = ChaCha8Rng::seed_from_u64(4000 + d as u64);
            for _ in 0..50 {
                let (xi, eta) = random_admissible_pair(d, &mut rng);
                let closed = hessian_closed_form(&xi, &eta)?;
                let fd = determinant(&hessian_fd(&xi, &eta, 1e-3)?, n);
                let rel = (fd - closed.determinant).abs() / closed.determinant.abs().max(1e-12);
                worst_det = worst_det.max(rel);
                let cd = critical_data(&xi, &eta);
                worst_ff = worst_ff.max((cd.first_factor - norm(&add(&xi, &rotate_pi3_in_first_last(&eta)))).abs());
                // Perturb half of the pairs off the critical set.
                for perturb in [false, true] {
                    let mut x2 = xi.clone();
                    if perturb {
                        x2[0] += 0.1;
                    }
                    let g = numerical_gradient(&LocalCoords::zero(d), &x2, &eta, 1e-3)?;
                    let grad_zero = norm(&g) <= 1e-8;
                    let critical = norm(&critical_residual(&x2, &eta)) <= 1e-10;
                    checked += 1;
                    if grad_zero != critical {
                        mismatches += 1;
                    }
                }
            }
        }
        let passed = worst_det <= 1e-4 && worst_ff <= 1e-12 && mismatches == 0;
        Ok((
            passed,
            json!({ "max_det_rel_error": worst_det, "max_first_factor_gap": worst_ff,
                    "gradient_checks": checked, "gradient_mismatches": mismatches }),
            format!("det rel err {worst_det:.1e}, first-factor gap {worst_ff:.1e}, {mismatches}/{checked} gradient mismatches"),
        ))
    })
}

/// Annulus integral scaling in ρ for d = 3, 4.
pub fn criterion_5(profile: Profile) -> CriterionResult {
    timed(5, "annulus integral scaling", || {
        let samples = match profile {
            Profile::Quick => 200_000,
            Profile::Full => 1_000_000,
        };
        let rhos = [8.0, 16.0, 32.0, 64.0];
        let mut ok = true;
        let mut measured = serde_json::Map::new();
        let mut detail = Vec::new();
        for d in 3..=4 {
            let mut values = Vec::new();
            let mut ratios = Vec::new();
            for (i, &rho) in rhos.iter().enumerate() {
                let mut eta = vec![0.0; d];
                eta[0] = rho;
                let r = lemma_int_quadrature(&eta, rho, d, samples, 500 + i as u64)?;
                values.push(r.value);
                ratios.push(r.ratio);
            }
            let spread = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            let slope = fit_loglog(&rhos, &values)?.slope;
            let target = d as f64 - 1.0;
            ok &= spread < 3.0 && (slope - target).abs() <= 0.2;
            detail.push(format!("d={d}: exponent {slope:.3} (target {target}), ratio spread {spread:.3}"));
            measured.insert(format!("d{d}"), json!({ "ratios": ratios, "exponent": slope, "spread": spread }));
        }
        Ok((ok, Value::Object(measured), detail.join("; ")))
    })
}

/// Ball condition, annulus energy and mollified sup-norm exponents.
pub fn criterion_6(_profile: Profile) -> CriterionResult {
    timed(6, "Frostman battery", || {
        let mut ok = true;
        let mut measured = Vec::new();
        let mut detail = Vec::new();
        for (d, s, n) in [(1usize, 0.5f64, 4096usize), (2, 1.0, 64)] {
            let cs = CantorSpec::standard(d, s, n.trailing_zeros())?;
            let mu = build_cantor(&cs, n)?;
            let ball = ball_condition_scan(&mu, &default_radii(n))?.exponent.unwrap_or(f64::NAN);
            let energy = annulus_energy_fit(&grid_fourier(&mu)?, &default_annulus_radii(n, cs.base))?.slope;
            let sup = mollified_sup_fit(&mu, &default_deltas(n))?.slope;
            let df = d as f64;
            ok &= (ball - s).abs() <= 0.2 && (energy - (df - s)).abs() <= 0.3 && (sup - (s - df)).abs() <= 0.3;
            detail.push(format!("d={d} s={s}: ball {ball:.2}, energy {energy:.2}, sup {sup:.2}"));
            measured.push(json!({ "d": d, "s": s, "N": n, "ball_exponent": ball,
                                  "energy_exponent": energy, "sup_exponent": sup }));
        }
        Ok((ok, Value::Array(measured), detail.join("; ")))
    })
}

/// Mollification scale for the oracle comparison.
pub const ORACLE_DELTA: f64 = 0.125;

/// Frequency side against the spatial side for the planar diagonal Cantor measure.
pub fn criterion_7(_profile: Profile) -> CriterionResult {
    timed(7, "triple-correlation oracle", || {
        let n = 16;
        let t0 = 0.25;
        let mu = mollify(&build_cantor(&CantorSpec::diagonal(4), n)?, ORACLE_DELTA)?.measure;
        let space = triple_correlation_space(&mu, t0, 64, 7)?.value;
        let freq = triple_correlation_freq(&grid_fourier(&mu)?, &t_grid(t0, 32)?, n as f64 / 2.0, &SigmaEval::default())?;
        let rel = (freq.total_mass - space).abs() / space.abs();
        Ok((
            rel <= 0.10,
            json!({ "spatial": space, "frequency": freq.total_mass, "relative_gap": rel, "delta": ORACLE_DELTA }),
            format!("spatial {space:.5}, frequency {:.5}, relative gap {rel:.2e}", freq.total_mass),
        ))
    })
}

/// Positivity for the uniform measure and the δ trend of `|ν - I|`.
pub fn criterion_8(_profile: Profile) -> CriterionResult {
    timed(8, "positivity sanity", || {
        let mu = build_cantor(&CantorSpec::uniform(2, 5), 32)?;
        let rep = positivity_report(&mu, &[0.25, 0.125, 0.0625], 0.25, 64, 11, &SigmaEval::default())?;
        let monotone = rep.rows.windows(2).all(|w| {
            let noise = (w[0].numerical_error - w[0].abs_diff).max(0.0) + (w[1].numerical_error - w[1].abs_diff).max(0.0);
            w[1].abs_diff <= w[0].abs_diff + noise
        });
        let last = rep.rows.last().unwrap();
        let diffs: Vec<String> = rep.rows.iter().map(|r| format!("{:.1e}", r.abs_diff)).collect();
        Ok((
            rep.positive && monotone,
            json!({ "rows": rep.rows, "positive": rep.positive, "monotone": monotone }),
            format!("nu = {:.5} vs error {:.1e}; |nu - I| along delta: [{}]", last.nu_freq, last.numerical_error, diffs.join(", ")),
        ))
    })
}

/// Exhaustive finite-field censuses.
pub fn criterion_9(_profile: Profile) -> CriterionResult {
    timed(9, "finite-field exactness", || {
        let budget = 2_000_000_000u128;
        let f5 = PrimeField::new(5)?;
        let c5 = equilateral_census_with_budget(&FFSubset::full_space(f5, 2)?, budget)?;
        let c13 = equilateral_census_with_budget(&FFSubset::full_space(PrimeField::new(13)?, 2)?, budget)?;
        let c54 = equilateral_census_with_budget(&FFSubset::full_space(f5, 4)?, budget)?;
        let realized: Vec<u64> = (1..5).filter(|r| c54.counts_by_side.get(r).copied().unwrap_or(0) > 0).collect();
        let passed = c5.total == 0 && c13.total > 0 && realized.len() == 4;
        Ok((
            passed,
            json!({ "f5_2": c5.total, "f13_2": c13.total, "f5_4_by_side": c54.counts_by_side, "f5_4_realized": realized }),
            format!("F_5^2: {}, F_13^2: {}, F_5^4 classes realized {:?}", c5.total, c13.total, realized),
        ))
    })
}

/// Radii for the tail scan at `N = 8`.
pub const TAIL_RADII: [f64; 5] = [1.0, 1.5, 2.0, 2.5, 3.0];

/// Sign of the tail slope at d = 4 for `s = 4` and `s = 3`.
pub fn criterion_10(_profile: Profile) -> CriterionResult {
    timed(10, "tail exponent sign", || {
        let mut measured = serde_json::Map::new();
        let mut slopes = Vec::new();
        for s in [4.0, 3.0] {
            let mu = build_cantor(&CantorSpec::standard(4, s, 3)?, 8)?;
            let r = tail_bound_scan(&grid_fourier(&mu)?, &TAIL_RADII, 1.0, &SigmaEval::default())?;
            let slope = r.fit.as_ref().map(|f| f.slope);
            slopes.push(slope);
            measured.insert(format!("s{s}"), json!({ "values": r.values, "slope": slope, "predicted": r.predicted_slope, "status": r.status }));
        }
        let uniform_negative = slopes[0].is_some_and(|s| s < 0.0);
        let three_nonneg = slopes[1].is_some_and(|s| s >= 0.0);
        let fmt = |s: Option<f64>| s.map_or("undefined (zero tail)".to_string(), |v| format!("{v:.3}"));
        Ok((
            uniform_negative && three_nonneg,
            Value::Object(measured),
            format!(
                "s=4 slope {} (want < 0), s=3 slope {} (want ≥ 0); d = 4 probed at N = 8 only",
                fmt(slopes[0]),
                fmt(slopes[1])
            ),
        ))
    })
}

pub fn criterion(id: u32, profile: Profile) -> Option<CriterionResult> {
    Some(match id {
        1 => criterion_1(profile),
        2 => criterion_2(profile),
        3 => criterion_3(profile),
        4 => criterion_4(profile),
        5 => criterion_5(profile),
        6 => criterion_6(profile),
        7 => criterion_7(profile),
        8 => criterion_8(profile),
        9 => criterion_9(profile),
        10 => criterion_10(profile),
        _ => return None,
    })
}

pub fn acceptance_suite(profile: Profile) -> AcceptanceSummary {
    let results: Vec<CriterionResult> = (1..=10).filter_map(|i| criterion(i, profile)).collect();
    let passed = results.iter().filter(|r| r.passed).count();
    AcceptanceSummary {
        profile,
        version: ARTIFACT_VERSION.into(),
        failed: results.len() - passed,
        passed,
        results,
        note: "the existence of s0(d, c_mu) < d for d >= 4 is not reproducible at desk scale; \
               criterion 10 is its sign surrogate at N = 8"
            .into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_parsing() {
        assert_eq!("quick".parse::<Profile>().unwrap(), Profile::Quick);
        assert!("".parse::<Profile>().is_err());
        assert!("slow".parse::<Profile>().is_err());
        assert!("xml".parse::<Format>().is_err());
    }

    #[test]
    fn error_classification_is_distinct() {
        let codes = [
            classify(&Error::Precondition("x".into())).0,
            classify(&Error::BudgetExceeded { needed: 2, budget: 1 }).0,
            exit::PARSE_ERROR,
        ];
        assert!(codes.iter().all(|&c| c != 0));
        assert_ne!(codes[0], codes[1]);
        assert_ne!(codes[0], codes[2]);
        assert_ne!(codes[1], codes[2]);
    }

    #[test]
    fn refused_report_keeps_config() {
        let cfg = RunConfig::new("sigma-hat", json!({ "d": 3 }), None, Format::Json);
        let r = RunReport::refused(cfg.clone(), &Error::NyquistRefusal { nodes: 8, required: 64, freq: 3.0 }, 0.0);
        assert_eq!(r.status, "nyquist_refusal");
        assert_eq!(r.config, cfg);
    }
}
