//! One handler per subcommand. Each returns a JSON payload and, for
//! table-shaped results, the rows to write as CSV.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use eqtri_core::config_surface::{
    decay_exponent_fit, generic_direction, sigma_hat_auto, sigma_hat_mc, sigma_hat_planar, sigma_hat_quad,
};
use eqtri_core::ff_triangles::{
    equilateral_census_with_budget, obstruction_check, primes_up_to, threshold_experiment, SearchStatus,
};
use eqtri_core::fractal_lab::{
    build_cantor, grid_fourier, load_measure, mollify, positivity_report, save_measure, t_grid, tail_bound_scan,
    triple_correlation_freq, triple_correlation_space, SigmaEval,
};
use eqtri_core::reports::{acceptance_suite, criterion, exit, AcceptanceSummary, Format};
use eqtri_core::stationary_phase::{
    critical_data, critical_residual, determinant, hessian_closed_form, hessian_fd, lemma_int_quadrature,
    numerical_gradient, random_admissible_pair,
};
use eqtri_core::{CantorSpec, Error, FFSubset, FreqPair, GridMeasure, LocalCoords, PrimeField, QuadratureSpec, Result};

use crate::args::*;
use crate::{field, Table};

pub struct Outcome {
    pub payload: Value,
    pub table: Option<Table>,
    pub warnings: Vec<String>,
    /// Overrides `ok` in the run record.
    pub status: Option<&'static str>,
    pub exit_code: i32,
}

impl Outcome {
    fn new(payload: Value, table: Option<Table>) -> Self {
        Self { payload, table, warnings: Vec::new(), status: None, exit_code: exit::OK }
    }
}

fn params(v: &impl Serialize) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

/// Subcommand name, echoed parameters and default output format.
pub fn describe(cmd: &Command) -> (&'static str, Value, Format) {
    use Format::{Csv, Json};
    match cmd {
        Command::FfCensus(a) => ("ff-census", params(a), Csv),
        Command::FfObstruction(a) => ("ff-obstruction", params(a), Csv),
        Command::FfThreshold(a) => ("ff-threshold", params(a), Csv),
        Command::SigmaHat(a) => ("sigma-hat", params(a), Json),
        Command::DecayFit(a) => ("decay-fit", params(a), Csv),
        Command::FractalBuild(a) => ("fractal-build", params(a), Json),
        Command::TripleCorr(a) => ("triple-corr", params(a), Json),
        Command::TailScan(a) => ("tail-scan", params(a), Csv),
        Command::Positivity(a) => ("positivity", params(a), Csv),
        Command::SpVerify(a) => ("sp-verify", params(a), Json),
        Command::LemmaInt(a) => ("lemma-int", params(a), Json),
        Command::Accept(a) => ("accept", params(a), Json),
    }
}

pub fn run(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::FfCensus(a) => ff_census(a),
        Command::FfObstruction(a) => ff_obstruction(a),
        Command::FfThreshold(a) => ff_threshold(a),
        Command::SigmaHat(a) => sigma_hat(a),
        Command::DecayFit(a) => decay_fit(a),
        Command::FractalBuild(a) => fractal_build(a),
        Command::TripleCorr(a) => triple_corr(a),
        Command::TailScan(a) => tail_scan(a),
        Command::Positivity(a) => positivity(a),
        Command::SpVerify(a) => sp_verify(a),
        Command::LemmaInt(a) => lemma_int(a),
        Command::Accept(a) => accept(a),
    }
}

fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}

fn ff_census(a: &FfCensus) -> Result<Outcome> {
    let field_q = PrimeField::new(a.q)?;
    let subset = match a.size {
        Some(size) => FFSubset::random(field_q, a.d, size, &mut ChaCha8Rng::seed_from_u64(a.seed))?,
        None => FFSubset::full_space(field_q, a.d)?,
    };
    let census = equilateral_census_with_budget(&subset, a.budget)?;
    let rows = census
        .counts_by_side
        .iter()
        .map(|(r, c)| vec![field(a.q), field(a.d), field(subset.len()), field(*r), field(*c)])
        .collect();
    let table = Table { header: vec!["q", "d", "set_size", "side_class", "count"], rows };
    let payload = json!({
        "q": a.q, "d": a.d, "set_size": subset.len(),
        "realized_classes": census.realized_classes(),
        "census": census,
    });
    Ok(Outcome::new(payload, Some(table)))
}

fn ff_obstruction(a: &FfObstruction) -> Result<Outcome> {
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut aborted = Vec::new();
    for q in primes_up_to(a.qmax) {
        if q == 2 {
            rows.push(vec![field(2), field(a.d), String::new(), String::new(), "skipped_even_prime".into()]);
            reports.push(json!({ "q": 2, "d": a.d, "status": "skipped_even_prime" }));
            continue;
        }
        let r = obstruction_check(PrimeField::new(q)?, a.d, a.budget)?;
        if r.status == SearchStatus::Aborted {
            aborted.push(q);
        }
        rows.push(vec![
            field(r.q),
            field(r.d),
            field(r.sqrt3_exists),
            r.full_space_triangle_exists.map(field).unwrap_or_default(),
            field(serde_json::to_value(r.status)?),
        ]);
        reports.push(serde_json::to_value(&r)?);
    }
    let table = Table {
        header: vec!["q", "d", "sqrt3_exists", "full_space_triangle_exists", "status"],
        rows,
    };
    let mut out = Outcome::new(json!({ "rows": reports }), Some(table));
    if !aborted.is_empty() {
        out.warnings.push(format!("search aborted by budget for q in {aborted:?}"));
        out.status = Some("budget_abort");
        out.exit_code = exit::BUDGET_ABORT;
    }
    Ok(out)
}

fn ff_threshold(a: &FfThreshold) -> Result<Outcome> {
    let rows = threshold_experiment(PrimeField::new(a.q)?, a.d, &a.sizes, a.trials, a.seed, a.budget)?;
    let table = Table {
        header: vec!["q", "d", "size", "trials", "seed", "mean_fraction", "threshold", "above_threshold"],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    field(a.q),
                    field(a.d),
                    field(r.size),
                    field(r.trials),
                    field(r.seed),
                    field(r.mean_fraction),
                    field(r.threshold),
                    field(r.above_threshold),
                ]
            })
            .collect(),
    };
    Ok(Outcome::new(json!({ "q": a.q, "d": a.d, "rows": rows }), Some(table)))
}

fn freq_pair(d: usize, xi: &[f64], eta: &[f64]) -> Result<FreqPair> {
    if xi.len() != d || eta.len() != d {
        return Err(precondition(format!("--xi and --eta need exactly {d} entries")));
    }
    FreqPair::new(xi.to_vec(), eta.to_vec())
}

fn quad_spec(nodes: Option<usize>, freq: f64, samples: usize, seed: u64) -> QuadratureSpec {
    match nodes {
        Some(n) => QuadratureSpec { sphere_nodes: n, mc_samples: samples, seed },
        None => QuadratureSpec::for_frequency(freq, samples, seed),
    }
}

fn sigma_hat(a: &SigmaHat) -> Result<Outcome> {
    let pair = freq_pair(a.d, &a.xi, &a.eta)?;
    let spec = quad_spec(a.nodes, pair.magnitude(), a.samples, a.seed);
    let (re, im, stderr) = match a.method {
        SigmaMethod::Quad => {
            let v = sigma_hat_quad(&pair, &spec)?;
            (v.re, v.im, 0.0)
        }
        SigmaMethod::Mc => {
            let v = sigma_hat_mc(&pair, &spec)?;
            (v.re, v.im, v.stderr())
        }
        SigmaMethod::Planar => (sigma_hat_planar(&pair)?, 0.0, 0.0),
        SigmaMethod::Auto => (sigma_hat_auto(&pair)?, 0.0, 0.0),
    };
    let payload = json!({
        "xi": pair.xi, "eta": pair.eta, "method": a.method,
        "re": re, "im": im, "stderr": stderr,
        "quadrature": spec,
    });
    let table = Table {
        header: vec!["d", "method", "re", "im", "stderr", "nodes", "samples", "seed"],
        rows: vec![vec![
            field(a.d),
            field(serde_json::to_value(a.method)?),
            field(re),
            field(im),
            field(stderr),
            field(spec.sphere_nodes),
            field(spec.mc_samples),
            field(spec.seed),
        ]],
    };
    Ok(Outcome::new(payload, Some(table)))
}

fn decay_fit(a: &DecayFit) -> Result<Outcome> {
    let direction = match (&a.xi, &a.eta) {
        (Some(xi), Some(eta)) => freq_pair(a.d, xi, eta)?,
        _ => {
            if a.d < 2 {
                return Err(precondition("dimension must be at least 2"));
            }
            generic_direction(a.d, a.dir_seed)
        }
    };
    let r_max = a.radii.iter().cloned().fold(0.0, f64::max);
    let spec = quad_spec(a.nodes, r_max * direction.magnitude(), 0, 0);
    let fit = decay_exponent_fit(&direction, &a.radii, &spec)?;
    let table = Table {
        header: vec!["r", "abs_sigma_hat", "fitted_slope"],
        rows: fit
            .r_grid
            .iter()
            .zip(&fit.values)
            .map(|(r, v)| vec![field(*r), field(*v), field(fit.slope)])
            .collect(),
    };
    let payload = json!({
        "direction": direction, "sphere_nodes": spec.sphere_nodes,
        "predicted_slope": -((a.d as f64) - 1.0) / 2.0,
        "fit": fit,
    });
    Ok(Outcome::new(payload, Some(table)))
}

fn measure_summary(mu: &GridMeasure) -> Value {
    json!({
        "d": mu.d, "N": mu.n, "base": mu.base, "keep_pattern": mu.keep_pattern, "depth": mu.depth,
        "s_nominal": mu.s_nominal, "c_mu_estimate": mu.c_mu_estimate,
        "total_mass": mu.total_mass(), "mollified_delta": mu.mollified_delta,
    })
}

fn fractal_build(a: &FractalBuild) -> Result<Outcome> {
    let spec = CantorSpec::from_mask(a.d, a.base, a.keep, a.depth)?;
    let mu = build_cantor(&spec, a.n)?;
    let mut payload = measure_summary(&mu);
    if let Some(bin) = &a.save {
        let header = save_measure(&mu, bin)?;
        payload["header"] = json!(header.display().to_string());
        payload["data_file"] = json!(bin.display().to_string());
    }
    let table = Table {
        header: vec!["d", "N", "base", "depth", "s_nominal", "c_mu_estimate", "total_mass"],
        rows: vec![vec![
            field(mu.d),
            field(mu.n),
            field(mu.base),
            field(mu.depth),
            field(mu.s_nominal),
            field(mu.c_mu_estimate),
            field(mu.total_mass()),
        ]],
    };
    Ok(Outcome::new(payload, Some(table)))
}

fn load(input: &MeasureIn) -> Result<(GridMeasure, SigmaEval)> {
    Ok((load_measure(&input.measure)?, SigmaEval { max_nodes: input.max_nodes }))
}

fn triple_corr(a: &TripleCorr) -> Result<Outcome> {
    let (mu, eval) = load(&a.input)?;
    let mu = match a.delta {
        Some(delta) => mollify(&mu, delta)?.measure,
        None => mu,
    };
    let spectrum = grid_fourier(&mu)?;
    let ts = t_grid(a.t0, a.t_points)?;
    let nu = triple_correlation_freq(&spectrum, &ts, a.rcut, &eval)?;
    let spatial = match a.spatial {
        Some(rotations) => Some(triple_correlation_space(&mu, a.t0, rotations, a.seed)?),
        None => None,
    };
    let mut warnings = Vec::new();
    if nu.imag_part.abs() > nu.quadrature_error.max(1e-12) {
        warnings.push(format!("imaginary residue {:.3e} exceeds the error estimate", nu.imag_part));
    }
    let table = Table {
        header: vec!["t", "nu_density"],
        rows: nu.t_grid.iter().zip(&nu.densities).map(|(t, v)| vec![field(*t), field(*v)]).collect(),
    };
    let payload = json!({ "measure": measure_summary(&mu), "frequency": nu, "spatial": spatial });
    let mut out = Outcome::new(payload, Some(table));
    out.warnings = warnings;
    Ok(out)
}

fn tail_scan(a: &TailScan) -> Result<Outcome> {
    let (mu, eval) = load(&a.input)?;
    let report = tail_bound_scan(&grid_fourier(&mu)?, &a.radii, a.t, &eval)?;
    let table = Table {
        header: vec!["r", "tail_sum", "predicted_slope", "status"],
        rows: report
            .r_grid
            .iter()
            .zip(&report.values)
            .map(|(r, v)| vec![field(*r), field(*v), field(report.predicted_slope), report.status.clone()])
            .collect(),
    };
    let mut out = Outcome::new(serde_json::to_value(&report)?, Some(table));
    out.warnings.extend(report.note.clone());
    Ok(out)
}

fn positivity(a: &Positivity) -> Result<Outcome> {
    let (mu, eval) = load(&a.input)?;
    let report = positivity_report(&mu, &a.deltas, a.t0, a.rotations, a.seed, &eval)?;
    let table = Table {
        header: vec!["delta", "spatial", "nu_freq", "abs_diff", "numerical_error", "warning"],
        rows: report
            .rows
            .iter()
            .map(|r| {
                vec![
                    field(r.delta),
                    field(r.spatial),
                    field(r.nu_freq),
                    field(r.abs_diff),
                    field(r.numerical_error),
                    r.warning.clone().unwrap_or_default(),
                ]
            })
            .collect(),
    };
    let mut out = Outcome::new(serde_json::to_value(&report)?, Some(table));
    out.warnings.extend(report.rows.iter().filter_map(|r| r.warning.clone()));
    Ok(out)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sp_verify(a: &SpVerify) -> Result<Outcome> {
    if a.d < 2 {
        return Err(precondition("sp-verify needs d ≥ 2"));
    }
    let n = 2 * a.d - 3;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut rows = Vec::with_capacity(a.pairs);
    let mut records = Vec::with_capacity(a.pairs);
    let (mut worst_det, mut worst_grad) = (0.0f64, 0.0f64);
    for i in 0..a.pairs {
        let (xi, eta) = random_admissible_pair(a.d, &mut rng);
        let closed = hessian_closed_form(&xi, &eta)?;
        let fd = determinant(&hessian_fd(&xi, &eta, a.h)?, n);
        let rel = (fd - closed.determinant).abs() / closed.determinant.abs().max(1e-12);
        let grad = norm(&numerical_gradient(&LocalCoords::zero(a.d), &xi, &eta, a.h)?);
        let residual = norm(&critical_residual(&xi, &eta));
        worst_det = worst_det.max(rel);
        worst_grad = worst_grad.max(grad);
        let cd = critical_data(&xi, &eta);
        rows.push(vec![
            field(i),
            field(cd.first_factor),
            field(closed.determinant),
            field(fd),
            field(rel),
            field(grad),
            field(residual),
        ]);
        records.push(json!({ "critical": cd, "det_fd": fd, "det_rel_error": rel, "gradient_norm": grad }));
    }
    let table = Table {
        header: vec!["pair", "first_factor", "det_closed", "det_fd", "det_rel_error", "gradient_norm", "residual_norm"],
        rows,
    };
    let payload = json!({
        "d": a.d, "pairs": a.pairs, "seed": a.seed, "h": a.h,
        "max_det_rel_error": worst_det, "max_gradient_norm": worst_grad, "records": records,
    });
    Ok(Outcome::new(payload, Some(table)))
}

fn lemma_int(a: &LemmaInt) -> Result<Outcome> {
    let mut results = Vec::with_capacity(a.rho.len());
    for (i, &rho) in a.rho.iter().enumerate() {
        let mut eta = vec![0.0; a.d.max(1)];
        eta[0] = a.eta_ratio * rho;
        results.push(lemma_int_quadrature(&eta, rho, a.d, a.samples, a.seed + i as u64)?);
    }
    let table = Table {
        header: vec!["d", "rho", "value", "stderr", "ratio", "samples", "seed"],
        rows: results
            .iter()
            .map(|r| {
                vec![field(r.d), field(r.rho), field(r.value), field(r.stderr), field(r.ratio), field(r.samples), field(r.seed)]
            })
            .collect(),
    };
    let mut payload = json!({ "results": results, "predicted_exponent": a.d as f64 - 1.0 });
    if results.len() >= 4 {
        let values: Vec<f64> = results.iter().map(|r| r.value).collect();
        if let Ok(fit) = eqtri_core::fit::fit_loglog(&a.rho, &values) {
            payload["fit"] = serde_json::to_value(fit)?;
        }
    }
    Ok(Outcome::new(payload, Some(table)))
}

fn accept(a: &Accept) -> Result<Outcome> {
    let summary = match &a.criteria {
        None => acceptance_suite(a.profile),
        Some(ids) => {
            let mut results = Vec::with_capacity(ids.len());
            for &id in ids {
                results.push(criterion(id, a.profile).ok_or_else(|| precondition(format!("no criterion {id}")))?);
            }
            let passed = results.iter().filter(|r| r.passed).count();
            AcceptanceSummary {
                profile: a.profile,
                version: eqtri_core::ARTIFACT_VERSION.into(),
                failed: results.len() - passed,
                passed,
                results,
                note: String::new(),
            }
        }
    };
    for r in &summary.results {
        eprintln!("{}", r.line());
    }
    let table = Table {
        header: vec!["id", "name", "passed", "seconds", "detail"],
        rows: summary
            .results
            .iter()
            .map(|r| vec![field(r.id), r.name.clone(), field(r.passed), field(r.seconds), r.detail.clone()])
            .collect(),
    };
    let failed = summary.failed;
    let mut out = Outcome::new(serde_json::to_value(&summary)?, Some(table));
    if failed > 0 {
        out.status = Some("criteria_failed");
        out.exit_code = exit::CRITERION_FAILED;
    }
    Ok(out)
}
