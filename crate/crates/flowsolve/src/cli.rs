//! Config-driven experiment runner behind the `flowsolve` binary:
//! solver-by-budget sweeps and convergence-order studies, emitted as CSV
//! rows with a stable schema.
//!
//! Initial states are standard-normal draws from a ChaCha8 stream cipher (a
//! counter-based generator): the config seed keys the cipher and the trial
//! index selects the stream, so every (solver, budget) cell sees the same
//! per-trial noise and repeated runs are byte-identical. Exact target draws
//! for distribution metrics use the same cipher on a disjoint stream range.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Deserialize;

use crate::core::{make_shifted_schedule, make_uniform_schedule, State, TimeSchedule, VelocityField};
use crate::fields::{load_grid_field, AffineField, GaussianMixtureField, GridField, PolyTimeField};
use crate::metrics::{self, ConvergenceResult, Norm};
use crate::solvers::{sample, Method, SolverConfig};
use crate::{Error, Result};

/// Exact CSV header emitted by both runners.
pub const CSV_HEADER: &str = "solver,order,corrector,schedule,nfe,trial_count,metric,value,elapsed_ms";

/// Uniform steps of the dense fallback reference when a field has no
/// closed-form solution.
pub const DENSE_REFERENCE_STEPS: usize = 1000;

/// Velocity-field selection, mirrored from the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    PolyTime {
        coeffs: Vec<f64>,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Affine {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        std: f64,
    },
    Grid {
        path: String,
    },
}

fn default_dim() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    #[default]
    Uniform,
    Shifted { shift: f64 },
}

impl ScheduleSpec {
    fn build(&self, intervals: usize) -> Result<TimeSchedule> {
        match self {
            ScheduleSpec::Uniform => make_uniform_schedule(intervals),
            ScheduleSpec::Shifted { shift } => make_shifted_schedule(intervals, *shift),
        }
    }

    fn label(&self) -> String {
        match self {
            ScheduleSpec::Uniform => "uniform".into(),
            ScheduleSpec::Shifted { shift } => format!("shifted:{shift}"),
        }
    }
}

/// One solver entry of the sweep list.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub method: Method,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default)]
    pub corrector: bool,
}

fn default_order() -> usize {
    1
}

impl SolverSpec {
    /// Short human name, also used for plot legends.
    pub fn label(&self) -> String {
        match self.method {
            Method::Flow => {
                if self.corrector {
                    format!("flow-s{}-corr", self.order)
                } else {
                    format!("flow-s{}", self.order)
                }
            }
            m => m.name().to_string(),
        }
    }

    /// Schedule intervals affordable under an evaluation budget.
    pub fn intervals_for_budget(&self, nfe: usize) -> usize {
        (nfe / self.method.evals_per_step()).max(1)
    }

    fn csv_order(&self) -> usize {
        if self.method == Method::Flow {
            self.order
        } else {
            0
        }
    }

    fn csv_corrector(&self) -> bool {
        self.method == Method::Flow && self.corrector
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    EndpointRmse,
    GaussianW2,
    EnergyDistance,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::EndpointRmse => "endpoint_rmse",
            MetricKind::GaussianW2 => "gaussian_w2",
            MetricKind::EnergyDistance => "energy_distance",
        }
    }

    fn needs_target_distribution(&self) -> bool {
        matches!(self, MetricKind::GaussianW2 | MetricKind::EnergyDistance)
    }
}

fn default_metrics() -> Vec<MetricKind> {
    vec![MetricKind::EndpointRmse]
}

/// A full experiment description, loaded from one JSON document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub field: FieldSpec,
    pub solvers: Vec<SolverSpec>,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    /// Evaluation budgets for sweeps; schedule interval counts for
    /// convergence runs.
    pub nfe: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricKind>,
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return Err(Error::InvalidArgument("config: no solvers listed".into()));
        }
        if self.nfe.is_empty() {
            return Err(Error::InvalidArgument("config: nfe list is empty".into()));
        }
        if self.nfe.contains(&0) {
            return Err(Error::InvalidArgument("config: nfe entries must be >= 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("config: trials must be >= 1".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::InvalidArgument("config: metrics list is empty".into()));
        }
        for spec in &self.solvers {
            // Surface order-range errors at config time.
            SolverConfig::new(spec.method, spec.order, spec.corrector, make_uniform_schedule(1)?)?;
        }
        if self.metrics.iter().any(MetricKind::needs_target_distribution)
            && !matches!(self.field, FieldSpec::GaussianMixture { .. })
        {
            return Err(Error::InvalidArgument(
                "config: distribution metrics need a gaussian_mixture field".into(),
            ));
        }
        Ok(())
    }

    pub fn build_field(&self) -> Result<BuiltField> {
        Ok(match &self.field {
            FieldSpec::PolyTime { coeffs, dim } => {
                BuiltField::Poly(PolyTimeField::new(coeffs.clone(), *dim)?)
            }
            FieldSpec::Affine { matrix, offset } => {
                BuiltField::Affine(AffineField::new(matrix.clone(), offset.clone())?)
            }
            FieldSpec::GaussianMixture { weights, means, std } => BuiltField::Mixture(
                GaussianMixtureField::new(weights.clone(), means.clone(), *std)?,
            ),
            FieldSpec::Grid { path } => BuiltField::Grid(load_grid_field(Path::new(path))?),
        })
    }
}

/// A constructed field plus enough identity to pick the right reference.
pub enum BuiltField {
    Poly(PolyTimeField),
    Affine(AffineField),
    Mixture(GaussianMixtureField),
    Grid(GridField),
}

impl BuiltField {
    pub fn as_dyn(&self) -> &dyn VelocityField {
        match self {
            BuiltField::Poly(f) => f,
            BuiltField::Affine(f) => f,
            BuiltField::Mixture(f) => f,
            BuiltField::Grid(f) => f,
        }
    }

    pub fn has_exact_reference(&self) -> bool {
        matches!(self, BuiltField::Poly(_) | BuiltField::Affine(_))
    }

    /// Endpoint at t = 0 for a trajectory starting at `x0`, t = 1: closed
    /// form where available, dense RK-3 otherwise.
    pub fn reference_endpoint(&self, x0: &State) -> Result<State> {
        match self {
            BuiltField::Poly(f) => Ok(f.exact_endpoint(x0, 1.0, 0.0)),
            BuiltField::Affine(f) => f.exact_endpoint(x0, 1.0, 0.0),
            BuiltField::Mixture(_) | BuiltField::Grid(_) => {
                let cfg = SolverConfig::new(
                    Method::Rk3,
                    1,
                    false,
                    make_uniform_schedule(DENSE_REFERENCE_STEPS)?,
                )?;
                Ok(sample(&cfg, self.as_dyn(), x0)?.endpoint().clone())
            }
        }
    }
}

/// One emitted CSV row.
#[derive(Debug, Clone)]
pub struct CsvRow {
    pub solver: String,
    pub order: usize,
    pub corrector: bool,
    pub schedule: String,
    pub nfe: usize,
    pub trial_count: usize,
    pub metric: String,
    pub value: f64,
    pub elapsed_ms: u128,
}

impl CsvRow {
    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.solver,
            self.order,
            self.corrector,
            self.schedule,
            self.nfe,
            self.trial_count,
            self.metric,
            self.value,
            self.elapsed_ms
        )
    }
}

/// Serializes rows under the fixed header.
pub fn csv_document(rows: &[CsvRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_line());
        out.push('\n');
    }
    out
}

/// Runner knobs that are not part of the experiment description.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Record wall-clock per cell in the `elapsed_ms` column. Off by
    /// default so repeated runs stay byte-identical.
    pub timing: bool,
    /// Print a progress counter to stderr.
    pub progress: bool,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<CsvRow>,
    /// Cells whose trajectories failed; their rows carry NaN values.
    pub failed_cells: usize,
}

/// Standard-normal initial states, one per trial. Seed keys the cipher,
/// trial index selects the stream.
pub fn initial_states(seed: u64, trials: usize, dim: usize) -> Vec<State> {
    (0..trials)
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial as u64);
            State::new((0..dim).map(|_| rng.sample(StandardNormal)).collect())
                .expect("normal draws are finite")
        })
        .collect()
}

/// Exact draws from the mixture target, on streams disjoint from the
/// initial-noise streams.
fn target_samples(mix: &GaussianMixtureField, seed: u64, trials: usize) -> Vec<State> {
    (0..trials)
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((1u64 << 33) + trial as u64);
            let pick: f64 = rng.random();
            let z: Vec<f64> = (0..mix.dim()).map(|_| rng.sample(StandardNormal)).collect();
            State::new(mix.target_sample(pick, &z).expect("dim matches"))
                .expect("target draws are finite")
        })
        .collect()
}

fn moments(samples: &[State]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = samples.len() as f64;
    let d = samples[0].dim();
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, &v) in mean.iter_mut().zip(s.as_slice()) {
            *m += v / n;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for s in samples {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (s.as_slice()[i] - mean[i]) * (s.as_slice()[j] - mean[j]) / n;
            }
        }
    }
    (mean, cov)
}

/// Endpoints of one (solver, interval-count) cell, trials in parallel.
fn run_cell(
    spec: &SolverSpec,
    schedule: &TimeSchedule,
    field: &dyn VelocityField,
    x_inits: &[State],
) -> Result<Vec<State>> {
    let cfg = SolverConfig::new(spec.method, spec.order, spec.corrector, schedule.clone())?;
    x_inits
        .par_iter()
        .map(|x0| Ok(sample(&cfg, field, x0)?.endpoint().clone()))
        .collect()
}

fn rms(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    (values.map(|v| v * v).sum::<f64>() / n as f64).sqrt()
}

/// Runs the full (solver x budget) sweep and produces one row per selected
/// metric per cell, in grid order. A failing cell is reported on stderr,
/// marked with NaN values, and does not stop the sweep.
pub fn run_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SweepOutcome> {
    cfg.validate()?;
    let field = cfg.build_field()?;
    let dim = field.as_dyn().dim();
    let x_inits = initial_states(cfg.seed, cfg.trials, dim);
    // Reference failures poison the cells that need them, not the run.
    let references: Vec<Result<State>> = x_inits
        .par_iter()
        .map(|x0| field.reference_endpoint(x0))
        .collect();
    if let Some(Err(e)) = references.iter().find(|r| r.is_err()) {
        eprintln!("warning: reference trajectory failed: {e}");
    }

    let needs_target = cfg.metrics.iter().any(MetricKind::needs_target_distribution);
    let target = if needs_target {
        match &field {
            BuiltField::Mixture(mix) => Some((
                mix.target_mean(),
                mix.target_covariance(),
                target_samples(mix, cfg.seed, cfg.trials),
            )),
            _ => unreachable!("validated: distribution metrics imply a mixture field"),
        }
    } else {
        None
    };

    let total = cfg.solvers.len() * cfg.nfe.len();
    let mut done = 0usize;
    let mut rows = Vec::new();
    let mut failed_cells = 0usize;

    for spec in &cfg.solvers {
        for &nfe in &cfg.nfe {
            done += 1;
            if opts.progress {
                eprintln!("[{done}/{total}] {} nfe={nfe}", spec.label());
            }
            let started = Instant::now();
            let intervals = spec.intervals_for_budget(nfe);
            let endpoints = cfg
                .schedule
                .build(intervals)
                .and_then(|s| run_cell(spec, &s, field.as_dyn(), &x_inits));
            let mut cell_failed = false;
            let mut values: Vec<(MetricKind, f64)> = Vec::new();
            match &endpoints {
                Ok(endpoints) => {
                    for metric in &cfg.metrics {
                        let v: Result<f64> = match metric {
                            MetricKind::EndpointRmse => {
                                let mut acc = Ok(Vec::with_capacity(endpoints.len()));
                                for (e, r) in endpoints.iter().zip(&references) {
                                    match (r, &mut acc) {
                                        (Ok(r), Ok(errs)) => errs.push(
                                            metrics::endpoint_error(e, r, Norm::L2)
                                                .expect("dims match by construction"),
                                        ),
                                        (Err(err), _) => {
                                            acc = Err(Error::InvalidState(format!(
                                                "reference trajectory failed: {err}"
                                            )));
                                            break;
                                        }
                                        _ => {}
                                    }
                                }
                                acc.map(|errs| rms(errs.iter().copied(), errs.len()))
                            }
                            MetricKind::GaussianW2 => {
                                let (t_mean, t_cov, _) = target.as_ref().unwrap();
                                let (mean, cov) = moments(endpoints);
                                metrics::gaussian_w2(&mean, &cov, t_mean, t_cov)
                            }
                            MetricKind::EnergyDistance => {
                                let (_, _, samples) = target.as_ref().unwrap();
                                metrics::energy_distance(endpoints, samples)
                            }
                        };
                        match v {
                            Ok(v) => values.push((*metric, v)),
                            Err(e) => {
                                eprintln!(
                                    "warning: cell {} nfe={nfe} metric {} failed: {e}",
                                    spec.label(),
                                    metric.name()
                                );
                                cell_failed = true;
                                values.push((*metric, f64::NAN));
                            }
                        }
                    }
                }
                Err(e) => {
                    eprintln!("warning: cell {} nfe={nfe} failed: {e}", spec.label());
                    cell_failed = true;
                    values = cfg.metrics.iter().map(|m| (*m, f64::NAN)).collect();
                }
            }
            if cell_failed {
                failed_cells += 1;
            }
            let elapsed_ms = if opts.timing {
                started.elapsed().as_millis()
            } else {
                0
            };
            for (metric, value) in values {
                rows.push(CsvRow {
                    solver: spec.method.name().into(),
                    order: spec.csv_order(),
                    corrector: spec.csv_corrector(),
                    schedule: cfg.schedule.label(),
                    nfe,
                    trial_count: cfg.trials,
                    metric: metric.name().into(),
                    value,
                    elapsed_ms,
                });
            }
        }
    }
    Ok(SweepOutcome { rows, failed_cells })
}

#[derive(Debug)]
pub struct ConvergenceOutcome {
    pub rows: Vec<CsvRow>,
    pub fits: Vec<(SolverSpec, ConvergenceResult)>,
}

/// Convergence study: the `nfe` list is read as schedule interval counts
/// (at least four, in geometric progression), the field must have a
/// closed-form reference, and each solver gets a fitted order.
pub fn run_convergence(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ConvergenceOutcome> {
    cfg.validate()?;
    if cfg.nfe.len() < 4 {
        return Err(Error::InvalidArgument(
            "config: convergence needs at least 4 interval counts".into(),
        ));
    }
    let ratio = cfg.nfe[1] as f64 / cfg.nfe[0] as f64;
    for w in cfg.nfe.windows(2) {
        let r = w[1] as f64 / w[0] as f64;
        if r <= 1.0 || (r - ratio).abs() > 1e-9 * ratio {
            return Err(Error::InvalidArgument(
                "config: convergence interval counts must be a geometric progression".into(),
            ));
        }
    }
    let field = cfg.build_field()?;
    if !field.has_exact_reference() {
        return Err(Error::InvalidArgument(
            "config: convergence needs a field with a closed-form solution (poly_time or affine)"
                .into(),
        ));
    }
    let dim = field.as_dyn().dim();
    let x_inits = initial_states(cfg.seed, cfg.trials, dim);
    let references: Vec<State> = x_inits
        .iter()
        .map(|x0| field.reference_endpoint(x0))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for spec in &cfg.solvers {
        if opts.progress {
            eprintln!("fitting {}", spec.label());
        }
        let started = Instant::now();
        let mut errors = Vec::with_capacity(cfg.nfe.len());
        for &intervals in &cfg.nfe {
            let schedule = cfg.schedule.build(intervals)?;
            let endpoints = run_cell(spec, &schedule, field.as_dyn(), &x_inits)?;
            let mean_err = endpoints
                .iter()
                .zip(&references)
                .map(|(e, r)| metrics::endpoint_error(e, r, Norm::L2).expect("dims match"))
                .sum::<f64>()
                / endpoints.len() as f64;
            errors.push(mean_err);
        }
        let fit = metrics::fit_order(&cfg.nfe, &errors)?;
        let elapsed_ms = if opts.timing {
            started.elapsed().as_millis()
        } else {
            0
        };
        for (&n, &e) in cfg.nfe.iter().zip(&errors) {
            rows.push(CsvRow {
                solver: spec.method.name().into(),
                order: spec.csv_order(),
                corrector: spec.csv_corrector(),
                schedule: cfg.schedule.label(),
                nfe: n,
                trial_count: cfg.trials,
                metric: "endpoint_l2".into(),
                value: e,
                elapsed_ms,
            });
        }
        for (name, value) in [("conv_slope", fit.slope), ("conv_r2", fit.r_squared)] {
            rows.push(CsvRow {
                solver: spec.method.name().into(),
                order: spec.csv_order(),
                corrector: spec.csv_corrector(),
                schedule: cfg.schedule.label(),
                nfe: 0,
                trial_count: cfg.trials,
                metric: name.into(),
                value,
                elapsed_ms,
            });
        }
        fits.push((*spec, fit));
    }
    Ok(ConvergenceOutcome { rows, fits })
}
