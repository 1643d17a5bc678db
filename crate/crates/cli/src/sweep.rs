//! Row evaluation for each experiment.
//!
//! Rows are computed independently on the rayon pool and collected in grid
//! order. A row that fails keeps its key columns and carries the error text;
//! the rest of the sweep carries on.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use phaseconv_core::mixed::{
    bound_from_decomposition, epsilon_schedule, exact_mixed_fidelity_small, figure_of_merit_mixed_bound_with,
    typical_decomposition_capped, ClassFidelity,
};
use phaseconv_core::u1::{
    figure_of_merit_closed, figure_of_merit_exact_with, figure_of_merit_mc_with, posterior_tv_distance, GammaSampler,
    PosteriorSpec, RateVerdict, SamplingMode,
};
use phaseconv_core::zd::{canonical_coeffs, linear_fit, outcome_distribution_from};
use phaseconv_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Experiment, SweepConfig, SCHEMA_VERSION};

/// One output cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// A configured resource cap (FFT length, class count, dense dimension) was hit.
    ResourceCap,
    Failure,
}

impl ErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::ResourceCap => "resource-cap",
            ErrorKind::Failure => "failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub kind: ErrorKind,
    pub message: String,
}

impl From<Error> for RowError {
    fn from(e: Error) -> Self {
        let kind = if e.is_resource_cap() { ErrorKind::ResourceCap } else { ErrorKind::Failure };
        Self { kind, message: e.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub cells: Vec<Cell>,
    pub error: Option<RowError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub version: String,
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    /// Experiment-specific summaries (schedule verdict, slope fit, ...).
    pub extra: BTreeMap<String, Value>,
    /// Only present with `--timing`; omitted by default to keep output reproducible.
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub metadata: Metadata,
}

impl SweepResult {
    /// 0 success, 2 some rows failed, 3 some row hit a resource cap.
    pub fn exit_code(&self) -> i32 {
        let kinds = self.rows.iter().filter_map(|r| r.error.as_ref().map(|e| e.kind));
        kinds.fold(0, |code, k| code.max(if k == ErrorKind::ResourceCap { 3 } else { 2 }))
    }

    pub fn failed_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Fixed column layout per experiment.
pub fn columns(config: &SweepConfig) -> Vec<String> {
    let base: &[&str] = match config.experiment {
        Experiment::U1Fom | Experiment::U1Rates => &["N", "M", "f_exact", "f_closed", "gap"],
        Experiment::U1Posterior => &["N", "mass", "tv_gauss", "var_exact", "var_model"],
        Experiment::Zd => &["d", "N", "success_prob", "failure_prob", "epsilon", "max_dev"],
        Experiment::MixedBound => &["N", "M", "epsilon", "delta", "classes", "bound", "f_closed"],
        Experiment::MixedOracle => &["M", "gamma", "f_exact", "bound", "delta", "epsilon"],
    };
    let mut cols: Vec<String> = base.iter().map(|s| s.to_string()).collect();
    if config.methods.mc {
        match config.experiment {
            Experiment::U1Fom => cols.extend(["f_mc".into(), "stderr".into()]),
            Experiment::U1Posterior => cols.push("var_mc".into()),
            _ => {}
        }
    }
    cols
}

type RowResult = Result<Vec<Cell>, Error>;

/// Runs every row of the sweep on the current rayon pool.
pub fn run_sweep(config: &SweepConfig) -> SweepResult {
    let columns = columns(config);
    let width = columns.len();
    let keys = row_keys(config);
    let rows: Vec<Row> = keys
        .par_iter()
        .map(|key| {
            let outcome = match config.experiment {
                Experiment::U1Fom | Experiment::U1Rates => u1_fom_row(config, key[0], key[1]),
                Experiment::U1Posterior => u1_posterior_row(config, key[0]),
                Experiment::Zd => zd_row(config, key[1]),
                Experiment::MixedBound => mixed_bound_row(config, key[0], key[1]),
                Experiment::MixedOracle => mixed_oracle_row(config, key[0], config.gammas[key[1] as usize]),
            };
            finish_row(config, key, outcome, width)
        })
        .collect();

    let mut extra = BTreeMap::new();
    match config.experiment {
        Experiment::U1Rates => rate_summary(config, &rows, &mut extra),
        Experiment::Zd => {
            extra.insert("fit".into(), slope_fit(&rows));
        }
        _ => {}
    }
    if let Some(m) = &config.m_schedule {
        extra.insert("m_schedule".into(), Value::String(m.label()));
    }

    SweepResult {
        columns,
        rows,
        metadata: Metadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            schema_version: SCHEMA_VERSION,
            experiment: config.experiment.name().to_string(),
            seed: config.seed,
            config_hash: config.config_hash.clone(),
            extra,
            wall_time_s: None,
        },
    }
}

/// Grid keys in output order. For most experiments `[N, M]`; for zd `[d, N]`;
/// for mixed-oracle `[M, gamma index]`.
fn row_keys(config: &SweepConfig) -> Vec<[u64; 2]> {
    match config.experiment {
        Experiment::Zd => {
            let d = config.zd_probs.as_ref().map_or(0, Vec::len) as u64;
            config.n_grid.iter().map(|&n| [d, n]).collect()
        }
        Experiment::U1Posterior => config.n_grid.iter().map(|&n| [n, 0]).collect(),
        Experiment::MixedOracle => {
            let ms = match &config.m_schedule {
                Some(crate::config::MSchedule::List(ms)) => ms.clone(),
                _ => Vec::new(),
            };
            ms.iter().flat_map(|&m| (0..config.gammas.len() as u64).map(move |g| [m, g])).collect()
        }
        _ => {
            let schedule = config.m_schedule.as_ref().expect("validated");
            config.n_grid.iter().enumerate().map(|(i, &n)| [n, schedule.m_at(i, n)]).collect()
        }
    }
}

fn key_cells(config: &SweepConfig, key: &[u64; 2]) -> Vec<Cell> {
    match config.experiment {
        Experiment::U1Posterior => vec![Cell::Int(key[0])],
        Experiment::MixedOracle => vec![Cell::Int(key[0]), Cell::Float(config.gammas[key[1] as usize])],
        _ => vec![Cell::Int(key[0]), Cell::Int(key[1])],
    }
}

fn finish_row(config: &SweepConfig, key: &[u64; 2], outcome: RowResult, width: usize) -> Row {
    let mut cells = key_cells(config, key);
    match outcome {
        Ok(metrics) => {
            cells.extend(metrics);
            debug_assert_eq!(cells.len(), width);
            Row { cells, error: None }
        }
        Err(e) => {
            log::warn!("row {key:?} failed: {e}");
            cells.resize(width, Cell::Empty);
            Row { cells, error: Some(e.into()) }
        }
    }
}

fn opt(x: Option<f64>) -> Cell {
    x.map_or(Cell::Empty, Cell::Float)
}

/// Independent, order-free RNG seed for one row.
fn row_seed(seed: u64, key: &[u64; 2]) -> u64 {
    let mut z = seed ^ key[0].wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ key[1].rotate_left(32);
    // splitmix64 finaliser
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn u1_fom_row(config: &SweepConfig, n: u64, m: u64) -> RowResult {
    let source = config.source.as_ref().expect("validated");
    let target = config.pure_target().expect("validated");
    let opts = config.convolution();
    let rates = config.experiment == Experiment::U1Rates;
    let f_exact = if config.methods.exact || rates {
        Some(figure_of_merit_exact_with(source, n, target, m, &opts)?)
    } else {
        None
    };
    let f_closed = if config.methods.closed || rates {
        Some(figure_of_merit_closed(source.variance(), n, target.variance(), m)?)
    } else {
        None
    };
    let gap = f_exact.zip(f_closed).map(|(a, b)| (a - b).abs());
    let mut cells = vec![opt(f_exact), opt(f_closed), opt(gap)];
    if config.methods.mc && !rates {
        let seed = row_seed(config.seed, &[n, m]);
        let mc = figure_of_merit_mc_with(source, n, target, m, config.mc_draws, seed, &opts, config.caps.grid_points)?;
        cells.extend([Cell::Float(mc.estimate), Cell::Float(mc.stderr)]);
    }
    Ok(cells)
}

fn u1_posterior_row(config: &SweepConfig, n: u64) -> RowResult {
    let source = config.source.as_ref().expect("validated");
    let spec = PosteriorSpec::with_options(source, n, &config.convolution())?;
    let a = spec.fourier_coeffs();
    let mass = spec.cdf(PI);
    // ∫γ² p(γ)dγ for the cosine series, term by term
    let var_exact = a[0] * PI * PI / 3.0
        + a.iter()
            .enumerate()
            .skip(1)
            .map(|(k, ak)| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                4.0 * sign * ak / (k * k) as f64
            })
            .sum::<f64>();
    let grid = config.caps.grid_points.unwrap_or_else(|| 8192usize.max(16 * a.len()));
    let (tv, var_model) = match spec.gauss() {
        Some(g) => (Some(posterior_tv_distance(&spec, grid)?), Some(1.0 / (4.0 * g.variance()))),
        None => (None, None),
    };
    let mut cells = vec![Cell::Float(mass), opt(tv), Cell::Float(var_exact), opt(var_model)];
    if config.methods.mc {
        let sampler = GammaSampler::new(&spec, SamplingMode::Exact, config.caps.grid_points);
        let mut rng = ChaCha8Rng::seed_from_u64(row_seed(config.seed, &[n, 0]));
        let draws: Vec<f64> = (0..config.mc_draws).map(|_| sampler.sample(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() as f64 - 1.0);
        cells.push(Cell::Float(var));
    }
    Ok(cells)
}

fn zd_row(config: &SweepConfig, n: u64) -> RowResult {
    let p = config.zd_probs.as_ref().expect("validated");
    let coeffs = canonical_coeffs(p, n)?;
    let dist = outcome_distribution_from(&coeffs, 0);
    let failure: f64 = dist.iter().skip(1).sum();
    Ok(vec![
        Cell::Float(dist[0]),
        Cell::Float(failure),
        Cell::Float(coeffs.epsilon),
        Cell::Float(coeffs.max_deviation_from_flat()),
    ])
}

fn mixed_bound_row(config: &SweepConfig, n: u64, m: u64) -> RowResult {
    let source = config.source.as_ref().expect("validated");
    let target = config.target.as_ref().expect("validated");
    let bound = figure_of_merit_mixed_bound_with(source, n, target, m, &config.convolution(), config.caps.classes)?;
    let closed = figure_of_merit_closed(source.variance(), n, target.mixed_variance(), m)?;
    Ok(vec![
        Cell::Float(bound.epsilon),
        Cell::Float(bound.residual_mass),
        Cell::Int(bound.classes as u64),
        Cell::Float(bound.value),
        Cell::Float(closed),
    ])
}

fn mixed_oracle_row(config: &SweepConfig, m: u64, gamma: f64) -> RowResult {
    let target = config.target.as_ref().expect("validated");
    let epsilon = match config.epsilon {
        Some(e) => e,
        None => epsilon_schedule(m)?,
    };
    let exact = exact_mixed_fidelity_small(target, m as u32, gamma, config.caps.dense_dim)?;
    let dec = typical_decomposition_capped(target, m, epsilon, config.caps.classes)?;
    let bound = bound_from_decomposition(target, &dec, gamma, ClassFidelity::Exact);
    Ok(vec![Cell::Float(exact), Cell::Float(bound), Cell::Float(dec.residual_mass), Cell::Float(epsilon)])
}

fn float_at(row: &Row, i: usize) -> Option<f64> {
    match row.cells.get(i) {
        Some(Cell::Float(x)) => Some(*x),
        _ => None,
    }
}

/// Same verdict rule as the library's rate analysis, applied to whichever
/// rows succeeded.
fn rate_summary(config: &SweepConfig, rows: &[Row], extra: &mut BTreeMap<String, Value>) {
    let values: Vec<f64> = rows.iter().filter_map(|r| float_at(r, 2)).collect();
    let complete = values.len() == rows.len() && !rows.is_empty();
    let increasing = values.windows(2).all(|w| w[1] > w[0]);
    let terminal = values.last().copied().unwrap_or(0.0);
    let verdict = if complete && increasing && terminal > config.threshold {
        RateVerdict::Converges
    } else {
        RateVerdict::Plateaus
    };
    let label = match verdict {
        RateVerdict::Converges => "converges",
        RateVerdict::Plateaus => "plateaus",
    };
    extra.insert("verdict".into(), Value::String(label.into()));
    extra.insert("threshold".into(), json!(config.threshold));
}

/// Least-squares slope of ln(failure) against N over the rows where the
/// failure probability is still representable.
fn slope_fit(rows: &[Row]) -> Value {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut epsilon = None;
    for row in rows {
        if let (Some(Cell::Int(n)), Some(fail), Some(eps)) = (row.cells.get(1), float_at(row, 3), float_at(row, 4)) {
            epsilon = Some(eps);
            if fail > 0.0 && fail.is_finite() {
                xs.push(*n as f64);
                ys.push(fail.ln());
            }
        }
    }
    let Some(eps) = epsilon.filter(|_| xs.len() >= 2) else {
        return Value::Null;
    };
    let (slope, intercept) = linear_fit(&xs, &ys);
    let predicted = 2.0 * eps.ln();
    json!({
        "slope": slope,
        "predicted_slope": predicted,
        "prefactor": intercept.exp(),
        "relative_error": ((slope - predicted) / predicted).abs(),
        "points": xs.len(),
    })
}
