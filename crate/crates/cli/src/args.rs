use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use eqtri_core::reports::{Format, Profile};

#[derive(Debug, Parser)]
#[command(name = "eqtri", version, about = "Equilateral-triangle configuration laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub out: Out,
}

#[derive(Debug, Args, Clone)]
pub struct Out {
    /// Output format; tables default to csv, single documents to json.
    #[arg(long, global = true)]
    pub format: Option<Format>,
    /// Write here instead of stdout. CSV runs also write `<output>.run.json`.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count equilateral triples in a subset of F_q^d.
    FfCensus(FfCensus),
    /// sqrt(3) obstruction sweep over primes up to --qmax.
    FfObstruction(FfObstruction),
    /// Side-class coverage of random subsets against the size threshold.
    FfThreshold(FfThreshold),
    /// Evaluate the Fourier transform of the configuration measure.
    SigmaHat(SigmaHat),
    /// Log-log decay fit along a ray.
    DecayFit(DecayFit),
    /// Build a Cantor grid measure and persist it.
    FractalBuild(FractalBuild),
    /// Frequency-side configuration integral, optionally with the spatial oracle.
    TripleCorr(TripleCorr),
    /// Tail sums of the absolute triple series.
    TailScan(TailScan),
    /// Positivity table along a descending delta list.
    Positivity(Positivity),
    /// Check the stationary-phase algebra on admissible pairs.
    SpVerify(SpVerify),
    /// Annulus singular-integral estimates.
    LemmaInt(LemmaInt),
    /// Run the acceptance battery.
    Accept(Accept),
}

#[derive(Debug, Args, Serialize)]
pub struct FfCensus {
    #[arg(long)]
    pub q: u64,
    #[arg(long)]
    pub d: usize,
    /// Random subset size; the full space when omitted.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum (anchor, pair) visits before aborting.
    #[arg(long, default_value_t = eqtri_core::ff_triangles::DEFAULT_TRIPLE_BUDGET)]
    pub budget: u128,
}

#[derive(Debug, Args, Serialize)]
pub struct FfObstruction {
    #[arg(long)]
    pub qmax: u64,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = eqtri_core::ff_triangles::DEFAULT_TRIPLE_BUDGET)]
    pub budget: u128,
}

#[derive(Debug, Args, Serialize)]
pub struct FfThreshold {
    #[arg(long)]
    pub q: u64,
    #[arg(long)]
    pub d: usize,
    #[arg(long, num_args = 1.., required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = eqtri_core::ff_triangles::DEFAULT_TRIPLE_BUDGET)]
    pub budget: u128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMethod {
    Quad,
    Mc,
    Planar,
    Auto,
}

#[derive(Debug, Args, Serialize)]
pub struct SigmaHat {
    #[arg(long)]
    pub d: usize,
    #[arg(long, num_args = 1.., allow_negative_numbers = true, required = true)]
    pub xi: Vec<f64>,
    #[arg(long, num_args = 1.., allow_negative_numbers = true, required = true)]
    pub eta: Vec<f64>,
    #[arg(long, value_enum, default_value_t = SigmaMethod::Quad)]
    pub method: SigmaMethod,
    /// Nodes per great circle; chosen from the frequency when omitted.
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct DecayFit {
    #[arg(long)]
    pub d: usize,
    /// Seed of the generic direction; ignored when --xi and --eta are given.
    #[arg(long, default_value_t = 0)]
    pub dir_seed: u64,
    #[arg(long, num_args = 1.., allow_negative_numbers = true, requires = "eta")]
    pub xi: Option<Vec<f64>>,
    #[arg(long, num_args = 1.., allow_negative_numbers = true, requires = "xi")]
    pub eta: Option<Vec<f64>>,
    #[arg(long, num_args = 1.., default_values_t = [4.0, 8.0, 16.0, 32.0, 64.0])]
    pub radii: Vec<f64>,
    #[arg(long)]
    pub nodes: Option<usize>,
}

fn parse_mask(s: &str) -> Result<u64, String> {
    let (digits, radix) = if let Some(b) = s.strip_prefix("0b") {
        (b, 2)
    } else if let Some(h) = s.strip_prefix("0x") {
        (h, 16)
    } else {
        (s, 10)
    };
    u64::from_str_radix(digits, radix).map_err(|e| format!("bad mask {s:?}: {e}"))
}

#[derive(Debug, Args, Serialize)]
pub struct FractalBuild {
    #[arg(long)]
    pub d: usize,
    /// Bit mask over the base^d subcells (decimal, 0b or 0x); bit i keeps subcell i.
    #[arg(long, value_parser = parse_mask)]
    pub keep: u64,
    #[arg(long, default_value_t = 2)]
    pub base: usize,
    #[arg(long)]
    pub depth: u32,
    #[arg(long)]
    pub n: usize,
    /// Weight file to write; the JSON header goes beside it.
    #[arg(long)]
    pub save: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MeasureIn {
    /// Header (.json) or weight file of a persisted measure.
    #[arg(long)]
    pub measure: PathBuf,
    /// Largest quadrature node count before refusing.
    #[arg(long, default_value_t = 2048)]
    pub max_nodes: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TripleCorr {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: MeasureIn,
    #[arg(long)]
    pub rcut: f64,
    #[arg(long, default_value_t = 0.25)]
    pub t0: f64,
    /// Mollify at this scale first.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 32)]
    pub t_points: usize,
    /// Also run the spatial oracle with this many rotation samples.
    #[arg(long)]
    pub spatial: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct TailScan {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: MeasureIn,
    #[arg(long, num_args = 1.., required = true)]
    pub radii: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct Positivity {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: MeasureIn,
    #[arg(long, num_args = 1.., required = true)]
    pub deltas: Vec<f64>,
    #[arg(long, default_value_t = 0.25)]
    pub t0: f64,
    #[arg(long, default_value_t = 64)]
    pub rotations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SpVerify {
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 50)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-3)]
    pub h: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct LemmaInt {
    #[arg(long)]
    pub d: usize,
    #[arg(long, num_args = 1.., default_values_t = [8.0, 16.0, 32.0, 64.0])]
    pub rho: Vec<f64>,
    /// |eta| as a multiple of rho.
    #[arg(long, default_value_t = 1.0)]
    pub eta_ratio: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct Accept {
    #[arg(long)]
    pub profile: Profile,
    /// Subset of criteria to run; all when omitted.
    #[arg(long, num_args = 1..)]
    pub criteria: Option<Vec<u32>>,
}
