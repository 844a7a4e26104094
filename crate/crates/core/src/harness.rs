//! Synthetic experiments: data generation, ground truth, the repeated
//! calibrate-and-bound protocol, and row aggregation.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaCdf};

use crate::bound::{min_over_thresholds, worst_case_quantile_with, worst_case_tail_prob_with, SolveOptions};
use crate::calibration::{calibrate_problems, stream_rng, nontail_cdf, Bandwidth, CalibrationConfig, Setting};
use crate::error::{invalid, Error, Result};
use crate::evtbaseline::{mean_excess_curve, pot_upper_bound, suggest_threshold};
use crate::model::{BoundResult, Objective, Status, TailSample, ThresholdSpec};
use crate::par;
use crate::stats::{normal_cdf, normal_quantile};

/// Data-generating distribution. Gamma uses (shape, scale), not rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistSpec {
    Gamma { shape: f64, scale: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Pareto { shape: f64, scale: f64 },
}

impl DistSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            DistSpec::Gamma { shape, scale } => shape > 0.0 && scale > 0.0,
            DistSpec::Lognormal { mu, sigma } => mu.is_finite() && sigma > 0.0,
            DistSpec::Pareto { shape, scale } => shape > 0.0 && scale > 0.0,
        };
        if ok && self.params().iter().all(|p| p.is_finite()) {
            Ok(())
        } else {
            invalid(format!("invalid distribution parameters: {self:?}"))
        }
    }

    fn params(&self) -> [f64; 2] {
        match *self {
            DistSpec::Gamma { shape, scale } => [shape, scale],
            DistSpec::Lognormal { mu, sigma } => [mu, sigma],
            DistSpec::Pareto { shape, scale } => [shape, scale],
        }
    }

    pub fn label(&self) -> String {
        match *self {
            DistSpec::Gamma { shape, scale } => format!("gamma({shape},{scale})"),
            DistSpec::Lognormal { mu, sigma } => format!("lognormal({mu},{sigma})"),
            DistSpec::Pareto { shape, scale } => format!("pareto({shape},{scale})"),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            DistSpec::Gamma { shape, scale } => {
                let g = Gamma::new(shape, scale).expect("validated");
                (0..n).map(|_| g.sample(rng)).collect()
            }
            DistSpec::Lognormal { mu, sigma } => (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    (mu + sigma * z).exp()
                })
                .collect(),
            DistSpec::Pareto { shape, scale } => (0..n)
                .map(|_| {
                    let u: f64 = rng.gen();
                    scale * (1.0 - u).powf(-1.0 / shape)
                })
                .collect(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.sf(x)
    }

    pub fn sf(&self, x: f64) -> f64 {
        match *self {
            DistSpec::Gamma { shape, scale } => {
                if x <= 0.0 {
                    1.0
                } else {
                    GammaCdf::new(shape, 1.0 / scale).expect("validated").sf(x)
                }
            }
            DistSpec::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    1.0
                } else {
                    normal_cdf(-(x.ln() - mu) / sigma)
                }
            }
            DistSpec::Pareto { shape, scale } => {
                if x <= scale {
                    1.0
                } else {
                    (scale / x).powf(shape)
                }
            }
        }
    }

    /// Inverse CDF. Gamma is inverted by bisection on the regularised
    /// incomplete gamma function, to relative precision ~1e-14.
    pub fn quantile(&self, p: f64) -> f64 {
        assert!(p > 0.0 && p < 1.0, "quantile level must lie in (0,1)");
        match *self {
            DistSpec::Gamma { shape, scale } => {
                let g = GammaCdf::new(shape, 1.0 / scale).expect("validated");
                let mut hi = scale * shape.max(1.0);
                while g.cdf(hi) < p {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if g.cdf(mid) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * hi {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
            DistSpec::Lognormal { mu, sigma } => (mu + sigma * normal_quantile(p)).exp(),
            DistSpec::Pareto { shape, scale } => scale * (1.0 - p).powf(-1.0 / shape),
        }
    }
}

/// `n` draws from a ChaCha8 stream seeded with `seed`.
pub fn sample_distribution(spec: &DistSpec, n: usize, seed: u64) -> Result<TailSample> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TailSample::new(spec.draw(n, &mut rng))
}

/// Objective as written in experiment configs: intervals may be given by
/// true-distribution quantile levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// `P(q_lhs ≤ X ≤ q_rhs)` with true quantiles; `rhs = 1` means `+∞`.
    QuantileInterval { lhs: f64, rhs: f64 },
    TailInterval { lo: f64, hi: f64 },
    Quantile { p: f64 },
}

impl ObjectiveSpec {
    pub fn resolve(&self, dist: &DistSpec) -> Result<Objective> {
        match *self {
            ObjectiveSpec::QuantileInterval { lhs, rhs } => {
                if !(lhs > 0.0 && lhs < rhs && rhs <= 1.0) {
                    return invalid("need 0 < lhs < rhs ≤ 1");
                }
                let hi = if rhs == 1.0 { f64::INFINITY } else { dist.quantile(rhs) };
                Ok(Objective::TailInterval { lo: dist.quantile(lhs), hi })
            }
            ObjectiveSpec::TailInterval { lo, hi } => Ok(Objective::TailInterval { lo, hi }),
            ObjectiveSpec::Quantile { p } => Ok(Objective::Quantile { p }),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            ObjectiveSpec::QuantileInterval { lhs, rhs } => format!("P(q{lhs}<=X<=q{rhs})"),
            ObjectiveSpec::TailInterval { lo, hi } => format!("P({lo}<=X<={hi})"),
            ObjectiveSpec::Quantile { p } => format!("q{p}"),
        }
    }
}

/// Exact value of the objective under `dist`.
pub fn true_quantity(dist: &DistSpec, objective: &Objective) -> f64 {
    match *objective {
        Objective::TailInterval { lo, hi } => (dist.sf(lo) - dist.sf(hi)).max(0.0),
        Objective::Quantile { p } => dist.quantile(p),
    }
}

/// What one experiment row runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Dro { setting: Setting, thresholds: ThresholdSpec },
    /// GPD fit above the mean-excess threshold, capped at the interval's left end.
    Pot,
}

impl Method {
    pub fn setting_label(&self) -> String {
        match self {
            Method::Dro { setting, .. } => setting.label(),
            Method::Pot => "POT".into(),
        }
    }

    pub fn threshold_label(&self) -> String {
        match self {
            Method::Dro { thresholds, .. } => {
                let v: Vec<String> = thresholds.levels.iter().map(|l| l.to_string()).collect();
                match thresholds.kind {
                    crate::model::ThresholdKind::QuantileOfSample => format!("pct[{}]", v.join(";")),
                    crate::model::ThresholdKind::Absolute => format!("abs[{}]", v.join(";")),
                }
            }
            Method::Pot => "mean-excess".into(),
        }
    }
}

fn default_alpha() -> f64 {
    0.05
}

fn default_b() -> usize {
    500
}

fn default_bandwidth() -> Bandwidth {
    Bandwidth::Auto
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub distribution: DistSpec,
    pub n: usize,
    pub reps: usize,
    pub objective: ObjectiveSpec,
    /// One output row per entry.
    pub methods: Vec<Method>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(rename = "bootstrap_B", default = "default_b")]
    pub bootstrap_b: usize,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: Bandwidth,
    #[serde(default)]
    pub seed: u64,
}

/// Repetitions allowed to fail before a row is marked invalid.
pub const MAX_FAILURE_RATE: f64 = 0.02;

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        if self.reps < 1 {
            return invalid("reps must be at least 1");
        }
        if self.n < 50 {
            return invalid("n must be at least 50");
        }
        if self.methods.is_empty() {
            return invalid("no methods given");
        }
        let obj = self.objective.resolve(&self.distribution)?;
        for m in &self.methods {
            match m {
                Method::Dro { setting, thresholds } => {
                    thresholds.validate()?;
                    if setting.order > 2 {
                        return invalid("shape order must be 0, 1 or 2");
                    }
                }
                Method::Pot => {
                    if !matches!(obj, Objective::TailInterval { .. }) {
                        return invalid("the POT baseline only bounds tail interval probabilities");
                    }
                }
            }
        }
        self.calibration(0).validate()
    }

    fn calibration(&self, seed: u64) -> CalibrationConfig {
        CalibrationConfig { alpha: self.alpha, bootstrap_b: self.bootstrap_b, bandwidth: self.bandwidth, seed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepOutcome {
    Ok,
    /// Calibrated set was empty: no bound, counted as not covering.
    Infeasible,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub row: usize,
    pub rep: usize,
    pub bound: f64,
    pub covered: bool,
    pub outcome: RepOutcome,
    /// Threshold that produced the bound (POT: the fitted `u`).
    pub threshold: f64,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub distribution: String,
    pub objective: String,
    pub setting: String,
    pub thresholds: String,
    pub truth: f64,
    pub reps: usize,
    pub failed: usize,
    pub infeasible: usize,
    pub relative_ratio: f64,
    pub relative_ratio_hw: Option<f64>,
    pub upper_bound: f64,
    pub upper_bound_hw: Option<f64>,
    pub coverage: f64,
    pub coverage_hw: Option<f64>,
    pub valid: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub rows: Vec<ExperimentRow>,
    pub records: Vec<RepRecord>,
    pub elapsed_s: f64,
}

/// Data stream and bootstrap seed for repetition `rep`. Both derive from
/// `(seed, rep)` alone, so repetitions can run in any order.
pub fn rep_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    stream_rng(seed, rep as u64)
}

fn dro_bound(sample: &Arc<TailSample>, setting: Setting, thresholds: &ThresholdSpec, objective: Objective, calib: &CalibrationConfig) -> Result<BoundResult> {
    let levels = thresholds.resolve(sample)?;
    let problems = calibrate_problems(sample.clone(), &levels, setting, objective, calib)?;
    let opts = SolveOptions::default();
    let results: Vec<BoundResult> = problems
        .iter()
        .map(|p| match objective {
            Objective::TailInterval { .. } => worst_case_tail_prob_with(p, &opts),
            Objective::Quantile { p: level } => worst_case_quantile_with(p, level, nontail_cdf(sample, p.a), &opts),
        })
        .collect::<Result<_>>()?;
    min_over_thresholds(results)
}

fn run_rep(config: &ExperimentConfig, objective: Objective, truth: f64, rep: usize) -> Vec<RepRecord> {
    let mut rng = rep_rng(config.seed, rep);
    let sample = Arc::new(TailSample::new(config.distribution.draw(config.n, &mut rng)).expect("finite draws"));
    let calib = config.calibration(rng.next_u64());
    config
        .methods
        .iter()
        .enumerate()
        .map(|(row, m)| {
            let mut rec = RepRecord { row, rep, bound: f64::NAN, covered: false, outcome: RepOutcome::Failed, threshold: f64::NAN, note: None };
            let res: Result<(f64, f64, Status)> = match m {
                Method::Dro { setting, thresholds } => dro_bound(&sample, *setting, thresholds, objective, &calib).map(|b| (b.reported, b.threshold_used, b.status)),
                Method::Pot => {
                    let Objective::TailInterval { lo, hi } = objective else { unreachable!("validated") };
                    suggest_threshold(&mean_excess_curve(&sample), lo)
                        .ok_or_else(|| Error::Degenerate("no admissible POT threshold".into()))
                        .and_then(|c| pot_upper_bound(&sample, c.u, lo, hi, config.alpha).map(|b| (b.upper, c.u, Status::Optimal)))
                }
            };
            match res {
                Ok((_, thr, Status::Infeasible)) => {
                    rec.outcome = RepOutcome::Infeasible;
                    rec.threshold = thr;
                }
                Ok((v, thr, Status::Optimal | Status::Unbounded)) if !v.is_nan() => {
                    rec.outcome = RepOutcome::Ok;
                    rec.bound = v;
                    rec.threshold = thr;
                    rec.covered = v >= truth;
                }
                Ok((_, thr, st)) => {
                    rec.threshold = thr;
                    rec.note = Some(format!("solver status {st:?}"));
                }
                Err(e) => rec.note = Some(e.to_string()),
            }
            rec
        })
        .collect()
}

/// Mean and the 1.96·sd/√k half-width (`None` when `k < 2`).
pub fn mean_half_width(v: &[f64]) -> (f64, Option<f64>) {
    let k = v.len();
    if k == 0 {
        return (f64::NAN, None);
    }
    let m = v.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return (m, None);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1) as f64;
    (m, Some(1.96 * var.sqrt() / (k as f64).sqrt()))
}

fn aggregate(config: &ExperimentConfig, truth: f64, row: usize, recs: &[&RepRecord]) -> ExperimentRow {
    let failed = recs.iter().filter(|r| r.outcome == RepOutcome::Failed).count();
    let infeasible = recs.iter().filter(|r| r.outcome == RepOutcome::Infeasible).count();
    let bounds: Vec<f64> = recs.iter().filter(|r| r.outcome == RepOutcome::Ok).map(|r| r.bound).collect();
    let cover: Vec<f64> = recs.iter().filter(|r| r.outcome != RepOutcome::Failed).map(|r| if r.covered { 1.0 } else { 0.0 }).collect();
    let (ub, ub_hw) = mean_half_width(&bounds);
    let (coverage, coverage_hw) = mean_half_width(&cover);
    let m = &config.methods[row];
    ExperimentRow {
        distribution: config.distribution.label(),
        objective: config.objective.label(),
        setting: m.setting_label(),
        thresholds: m.threshold_label(),
        truth,
        reps: recs.len(),
        failed,
        infeasible,
        relative_ratio: ub / truth,
        relative_ratio_hw: ub_hw.map(|h| h / truth),
        upper_bound: ub,
        upper_bound_hw: ub_hw,
        coverage,
        coverage_hw,
        valid: (failed as f64) <= MAX_FAILURE_RATE * recs.len() as f64,
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment_with(config, par::is_parallel())
}

/// As [`run_experiment`], choosing whether repetitions run on the thread pool.
/// Output is identical either way.
pub fn run_experiment_with(config: &ExperimentConfig, parallel: bool) -> Result<ExperimentOutput> {
    config.validate()?;
    let start = Instant::now();
    let objective = config.objective.resolve(&config.distribution)?;
    let truth = true_quantity(&config.distribution, &objective);
    let job = |rep: usize| run_rep(config, objective, truth, rep);
    let per_rep = if parallel { par::map_indexed(config.reps, job) } else { par::map_indexed_seq(config.reps, job) };
    let records: Vec<RepRecord> = per_rep.into_iter().flatten().collect();
    let rows = (0..config.methods.len())
        .map(|row| {
            let recs: Vec<&RepRecord> = records.iter().filter(|r| r.row == row).collect();
            aggregate(config, truth, row, &recs)
        })
        .collect();
    for r in records.iter().filter(|r| r.outcome == RepOutcome::Failed) {
        log::warn!("row {} rep {} failed: {}", r.row, r.rep, r.note.as_deref().unwrap_or("?"));
    }
    Ok(ExperimentOutput { rows, records, elapsed_s: start.elapsed().as_secs_f64() })
}

/// CSV with a fixed header matching the [`ExperimentRow`] fields; missing
/// half-widths are empty cells.
pub fn write_rows_csv<W: Write>(rows: &[ExperimentRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::Io(e.to_string()))
}

pub fn write_records_csv<W: Write>(records: &[RepRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::Io(e.to_string()))
}
