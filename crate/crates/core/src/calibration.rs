//! Data-driven calibration of the shape parameters and moment sets.
//!
//! Density and slope at the threshold come from bootstrapped Gaussian kernel
//! estimates; moment sets come from the χ² limit of the sample mean
//! (ellipsoid) or the Kolmogorov band of the empirical survival function
//! (rectangle). The family-wise level is split by Bonferroni.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::model::{DroProblem, MomentSet, MomentSpec, Objective, PiecewisePoly, SetBlock, ShapeSpec, TailSample};
use crate::par;
use crate::stats::{chi2_quantile, kolmogorov_quantile, sd, sorted_quantile};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    /// Silverman's rule `1.06·σ̂·n^{−1/5}`, recomputed on every resample.
    Auto,
    Fixed(f64),
}

impl Serialize for Bandwidth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bandwidth::Auto => s.serialize_str("auto"),
            Bandwidth::Fixed(h) => s.serialize_f64(*h),
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(h) if h > 0.0 => Ok(Bandwidth::Fixed(h)),
            Raw::Num(h) => Err(serde::de::Error::custom(format!("bandwidth must be positive, got {h}"))),
            Raw::Name(s) if s == "auto" => Ok(Bandwidth::Auto),
            Raw::Name(s) => Err(serde::de::Error::custom(format!("unknown bandwidth {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub alpha: f64,
    #[serde(rename = "bootstrap_B", default = "default_b")]
    pub bootstrap_b: usize,
    #[serde(default = "default_bw")]
    pub bandwidth: Bandwidth,
    #[serde(default)]
    pub seed: u64,
}

fn default_b() -> usize {
    500
}

fn default_bw() -> Bandwidth {
    Bandwidth::Auto
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { alpha: 0.05, bootstrap_b: 500, bandwidth: Bandwidth::Auto, seed: 0 }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid("alpha must lie in (0,1)");
        }
        if self.bootstrap_b < 100 {
            return invalid("bootstrap_B must be at least 100");
        }
        Ok(())
    }
}

pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len().max(1) as f64;
    let s = if values.len() > 1 { sd(values) } else { 0.0 };
    // a constant sample has no spread; fall back to unit scale
    let s = if s > 0.0 { s } else { 1.0 };
    1.06 * s * n.powf(-0.2)
}

fn resolve(values: &[f64], bw: Bandwidth) -> f64 {
    match bw {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Auto => silverman_bandwidth(values),
    }
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Gaussian kernel density estimate at `x`.
pub fn kde_density(values: &[f64], x: f64, bw: Bandwidth) -> f64 {
    let h = resolve(values, bw);
    let s: f64 = values.iter().map(|&v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum();
    s * INV_SQRT_2PI / (values.len() as f64 * h)
}

/// Derivative of [`kde_density`] with respect to `x`.
pub fn kde_density_derivative(values: &[f64], x: f64, bw: Bandwidth) -> f64 {
    let h = resolve(values, bw);
    let s: f64 = values
        .iter()
        .map(|&v| {
            let u = (x - v) / h;
            -u * (-0.5 * u * u).exp()
        })
        .sum();
    s * INV_SQRT_2PI / (values.len() as f64 * h * h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    Ellipsoid,
    Rectangle,
}

/// Confidence levels for each calibrated ingredient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetSplit {
    pub moment_level: f64,
    /// Upper percentile for η (monotone tails).
    pub eta_level: f64,
    /// Lower/upper percentiles for the density interval (convex tails).
    pub density_lo: f64,
    pub density_hi: f64,
    /// Confidence level of the slope bound ν.
    pub nu_level: f64,
}

pub fn bonferroni_split(alpha: f64, order: u8, m: usize, _kind: SetKind) -> BudgetSplit {
    let m = m.max(1) as f64;
    match order {
        0 => BudgetSplit { moment_level: 1.0 - alpha, eta_level: 1.0, density_lo: 0.0, density_hi: 1.0, nu_level: 1.0 },
        1 => {
            let l = 1.0 - alpha / (m + 1.0);
            BudgetSplit { moment_level: l, eta_level: l, density_lo: 0.0, density_hi: 1.0, nu_level: 1.0 }
        }
        _ => {
            let k = 2.0 * m + 1.0;
            BudgetSplit {
                moment_level: 1.0 - alpha / k,
                eta_level: 1.0,
                density_lo: alpha / (2.0 * k),
                density_hi: 1.0 - alpha / (2.0 * k),
                nu_level: 1.0 - alpha / k,
            }
        }
    }
}

/// Independent RNG stream for resample `b`.
pub fn stream_rng(seed: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b);
    rng
}

fn resample(values: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = values.len();
    let mut out: Vec<f64> = (0..n).map(|_| values[rng.gen_range(0..n)]).collect();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Minimum number of sample points at or above `a` for shape calibration.
pub const MIN_TAIL_POINTS: usize = 30;

pub fn calibrate_shape(sample: &TailSample, a: f64, order: u8, split: &BudgetSplit, config: &CalibrationConfig) -> Result<ShapeSpec> {
    config.validate()?;
    if order == 0 {
        return Ok(ShapeSpec::None);
    }
    let tail = sample.count_at_least(a);
    if tail < MIN_TAIL_POINTS {
        return Err(Error::TooFewTailPoints { got: tail, need: MIN_TAIL_POINTS });
    }
    let values = sample.values();
    let boot = par::map_indexed(config.bootstrap_b, |b| {
        let mut rng = stream_rng(config.seed, b as u64);
        let xs = resample(values, &mut rng);
        let d = kde_density(&xs, a, config.bandwidth);
        let dd = if order == 2 { kde_density_derivative(&xs, a, config.bandwidth) } else { 0.0 };
        (d, dd)
    });
    let dens = sorted(boot.iter().map(|p| p.0).collect());
    if order == 1 {
        let eta = sorted_quantile(&dens, split.eta_level).max(0.0);
        return Ok(ShapeSpec::Monotone { eta });
    }
    let slopes = sorted(boot.iter().map(|p| p.1).collect());
    let eta_hi = sorted_quantile(&dens, split.density_hi).max(0.0);
    let eta_lo = sorted_quantile(&dens, split.density_lo).max(0.0).min(eta_hi);
    let nu = (-sorted_quantile(&slopes, 1.0 - split.nu_level)).max(0.0);
    if nu == 0.0 && eta_hi == 0.0 {
        return Err(Error::Degenerate("density and slope at the threshold both estimate to zero".into()));
    }
    Ok(ShapeSpec::Convex { eta_lo, eta_hi, nu })
}

/// Generator values `g(x_i)` for every sample point, as an `n × d` matrix.
fn generator_matrix(values: &[f64], generators: &[PiecewisePoly]) -> DMatrix<f64> {
    DMatrix::from_fn(values.len(), generators.len(), |i, j| generators[j].eval(values[i]))
}

fn mean_cov(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows() as f64;
    let mu = DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n));
    let mut centered = m.clone();
    for mut row in centered.row_iter_mut() {
        row -= mu.transpose();
    }
    let cov = centered.transpose() * &centered / (n - 1.0);
    (mu, cov)
}

/// Ridge-regularises a covariance that is not numerically positive definite.
fn regularise(mut cov: DMatrix<f64>) -> DMatrix<f64> {
    let d = cov.nrows();
    let min_eig = cov.clone().symmetric_eigenvalues().min();
    let trace = cov.trace();
    if cov.clone().cholesky().is_none() || min_eig <= 1e-12 * trace.max(f64::MIN_POSITIVE) {
        let eps = 1e-8 * if trace > 0.0 { trace } else { 1.0 };
        log::warn!("singular moment covariance; adding ridge {eps:e}");
        for i in 0..d {
            cov[(i, i)] += eps;
        }
    }
    cov
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// Power generators `x^j 𝕀(x ≥ a)` for `j < d`.
pub fn power_generators(a: f64, d: usize) -> Vec<PiecewisePoly> {
    (0..d).map(|j| PiecewisePoly::monomial_tail(j, a)).collect()
}

/// Ellipsoid `{y : (y − μ)ᵀΣ⁻¹(y − μ) ≤ r}` with `r = χ²_d(level)/n`.
pub fn calibrate_ellipsoid(sample: &TailSample, a: f64, generators: &[PiecewisePoly], level: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>, f64)> {
    if generators.is_empty() {
        return invalid("need at least one generator");
    }
    if sample.count_at_least(a) == 0 {
        return invalid(format!("no sample points at or above {a}"));
    }
    let m = generator_matrix(sample.values(), generators);
    let (mu, cov) = mean_cov(&m);
    let cov = regularise(cov);
    let r = chi2_quantile(level, generators.len()) / sample.n() as f64;
    Ok((mu.iter().copied().collect(), to_rows(&cov), r))
}

pub fn ellipsoid_spec(sample: &TailSample, a: f64, generators: Vec<PiecewisePoly>, level: f64) -> Result<MomentSpec> {
    let (mu, sigma, r) = calibrate_ellipsoid(sample, a, &generators, level)?;
    Ok(MomentSpec { generators, set: MomentSet::single(SetBlock::Ellipsoid { mu, sigma, r }) })
}

/// Largest number of interior points used in a rectangle set.
pub const MAX_KS_POINTS: usize = 50;

/// Evenly spaced order statistics strictly above `a` (at most [`MAX_KS_POINTS`]).
pub fn ks_points(sample: &TailSample, a: f64) -> Vec<f64> {
    let above: Vec<f64> = sample.values().iter().copied().filter(|&x| x > a).collect();
    let mut pts: Vec<f64> = if above.len() <= MAX_KS_POINTS {
        above
    } else {
        let k = MAX_KS_POINTS;
        (1..=k).map(|i| above[(i * above.len()).div_ceil(k) - 1]).collect()
    };
    pts.dedup();
    pts
}

/// Rectangle from the Kolmogorov band on survival indicators at `a` and at
/// selected sample points above `a`.
pub fn calibrate_rectangle(sample: &TailSample, a: f64, level: f64) -> Result<MomentSpec> {
    let z = kolmogorov_quantile(level) / (sample.n() as f64).sqrt();
    rectangle_with_halfwidth(sample, a, z)
}

pub fn rectangle_with_halfwidth(sample: &TailSample, a: f64, z: f64) -> Result<MomentSpec> {
    if sample.count_at_least(a) == 0 {
        return invalid(format!("no sample points at or above {a}"));
    }
    let n = sample.n() as f64;
    let mut generators = vec![PiecewisePoly::indicator(a, f64::INFINITY)];
    generators.extend(ks_points(sample, a).into_iter().map(|x| PiecewisePoly::indicator(x, f64::INFINITY)));
    let freq: Vec<f64> = generators.iter().map(|g| sample.count_at_least(g.start()) as f64 / n).collect();
    let lo = freq.iter().map(|f| (f - z).clamp(0.0, 1.0)).collect();
    let hi = freq.iter().map(|f| (f + z).clamp(0.0, 1.0)).collect();
    Ok(MomentSpec { generators, set: MomentSet::single(SetBlock::Rectangle { lo, hi }) })
}

/// Per-resample statistics (sorted) of the bootstrap for the set radius:
/// the max over thresholds of `n(μ̂_b − μ̂)ᵀΣ̂⁻¹(μ̂_b − μ̂)` (ellipsoid) or of
/// `√n·sup_{x ≥ a_i}|Ŝ_b(x) − Ŝ(x)|` (rectangle).
pub fn bootstrap_statistics(
    sample: &TailSample,
    thresholds: &[f64],
    generators: &[Vec<PiecewisePoly>],
    kind: SetKind,
    config: &CalibrationConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let values = sample.values();
    let n = values.len();
    let nf = n as f64;
    // per-threshold empirical mean and inverse covariance
    let prep: Vec<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> = match kind {
        SetKind::Ellipsoid => {
            if generators.len() != thresholds.len() {
                return invalid("one generator list per threshold");
            }
            generators
                .iter()
                .map(|g| {
                    let m = generator_matrix(values, g);
                    let (mu, cov) = mean_cov(&m);
                    let inv = regularise(cov).try_inverse().ok_or_else(|| Error::Degenerate("covariance not invertible".into()))?;
                    Ok((m, mu, inv))
                })
                .collect::<Result<_>>()?
        }
        SetKind::Rectangle => Vec::new(),
    };
    let stats = par::map_indexed(config.bootstrap_b, |b| {
        let mut rng = stream_rng(config.seed, b as u64);
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        match kind {
            SetKind::Ellipsoid => prep
                .iter()
                .map(|(m, mu, inv)| {
                    let mut mb = DVector::zeros(mu.len());
                    for &i in &idx {
                        mb += m.row(i).transpose();
                    }
                    let diff = mb / nf - mu;
                    nf * (diff.transpose() * inv * &diff)[(0, 0)]
                })
                .fold(0.0, f64::max),
            SetKind::Rectangle => {
                let xb = sorted(idx.iter().map(|&i| values[i]).collect());
                thresholds.iter().map(|&a| ks_sup(values, &xb, a)).fold(0.0, f64::max) * nf.sqrt()
            }
        }
    });
    Ok(sorted(stats))
}

/// `sup_{x ≥ a} |Ŝ_b(x) − Ŝ(x)|` for survival functions of sorted samples,
/// evaluated on both sides of every jump.
fn ks_sup(orig: &[f64], boot: &[f64], a: f64) -> f64 {
    let n = orig.len() as f64;
    let ge = |v: &[f64], t: f64| (v.len() - v.partition_point(|&x| x < t)) as f64;
    let gt = |v: &[f64], t: f64| (v.len() - v.partition_point(|&x| x <= t)) as f64;
    let mut best: f64 = 0.0;
    for &t in orig.iter().chain(boot).filter(|&&t| t >= a).chain(std::iter::once(&a)) {
        best = best.max((ge(orig, t) - ge(boot, t)).abs()).max((gt(orig, t) - gt(boot, t)).abs());
    }
    best / n
}

/// Set radius from the bootstrap: `r = z/n` for an ellipsoid, half-width
/// `z/√n` for a rectangle, where `z` is the `delta`-quantile statistic.
pub fn bootstrap_radius(
    sample: &TailSample,
    thresholds: &[f64],
    generators: &[Vec<PiecewisePoly>],
    delta: f64,
    kind: SetKind,
    config: &CalibrationConfig,
) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return invalid("delta must lie in (0,1]");
    }
    let stats = bootstrap_statistics(sample, thresholds, generators, kind, config)?;
    let z = sorted_quantile(&stats, delta);
    let n = sample.n() as f64;
    Ok(match kind {
        SetKind::Ellipsoid => z / n,
        SetKind::Rectangle => z / n.sqrt(),
    })
}

/// Constraint setting of an experiment: shape order and moment-set family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Setting {
    pub order: u8,
    pub set: SetKind,
    /// Number of power generators for ellipsoid sets.
    #[serde(default = "default_d")]
    pub dim: usize,
}

fn default_d() -> usize {
    2
}

impl Setting {
    pub fn new(order: u8, set: SetKind) -> Self {
        Self { order, set, dim: 2 }
    }

    pub fn label(&self) -> String {
        let s = match self.set {
            SetKind::Ellipsoid => "chi2",
            SetKind::Rectangle => "KS",
        };
        format!("({},{})", self.order, s)
    }
}

/// Calibrates one problem per threshold with a joint `1 − α` guarantee.
pub fn calibrate_problems(
    sample: Arc<TailSample>,
    thresholds: &[f64],
    setting: Setting,
    objective: Objective,
    config: &CalibrationConfig,
) -> Result<Vec<DroProblem>> {
    config.validate()?;
    let m = thresholds.len();
    if m == 0 {
        return invalid("no thresholds");
    }
    let split = bonferroni_split(config.alpha, setting.order, m, setting.set);
    let gens: Vec<Vec<PiecewisePoly>> = thresholds.iter().map(|&a| power_generators(a, setting.dim)).collect();
    let ellipsoid_r = if setting.set == SetKind::Ellipsoid && m > 1 {
        Some(bootstrap_radius(&sample, thresholds, &gens, split.moment_level, SetKind::Ellipsoid, config)?)
    } else {
        None
    };
    thresholds
        .iter()
        .zip(gens)
        .map(|(&a, g)| {
            let shape = calibrate_shape(&sample, a, setting.order, &split, config)?;
            let moments = match setting.set {
                SetKind::Ellipsoid => {
                    let mut spec = ellipsoid_spec(&sample, a, g, split.moment_level)?;
                    if let (Some(r0), Some(SetBlock::Ellipsoid { r, .. })) = (ellipsoid_r, spec.set.blocks.first_mut()) {
                        *r = r0;
                    }
                    spec
                }
                // the Kolmogorov band is simultaneous in x, hence over all thresholds
                SetKind::Rectangle => calibrate_rectangle(&sample, a, split.moment_level)?,
            };
            let mut p = DroProblem::new(a, shape, moments, objective)?;
            p.sample = Some(sample.clone());
            Ok(p)
        })
        .collect()
}

/// Empirical `P(X < a)`, the non-tail part of a quantile level.
pub fn nontail_cdf(sample: &TailSample, a: f64) -> f64 {
    sample.count_below(a) as f64 / sample.n() as f64
}
