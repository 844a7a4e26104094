//! Immutable data types shared by every other module.

mod piecewise;

pub use piecewise::{
    binom, poly_add, poly_degree, poly_derivative, poly_eval, poly_mul, poly_scale_arg,
    poly_shift, PiecewisePoly, DEFAULT_MAX_DEGREE,
};

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailSample {
    values: Vec<f64>,
}

impl TailSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return invalid("sample needs at least two observations");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("sample values must be finite");
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Order statistic at 1-based index ⌈qn⌉.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.n();
        let k = ((q * n as f64).ceil() as usize).clamp(1, n);
        self.values[k - 1]
    }

    pub fn count_at_least(&self, x: f64) -> usize {
        self.n() - self.values.partition_point(|&v| v < x)
    }

    pub fn count_above(&self, x: f64) -> usize {
        self.n() - self.values.partition_point(|&v| v <= x)
    }

    pub fn count_below(&self, x: f64) -> usize {
        self.values.partition_point(|&v| v < x)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.n() as f64
    }

    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        let ss: f64 = self.values.iter().map(|v| (v - m).powi(2)).sum();
        (ss / (self.n() - 1) as f64).sqrt()
    }

    /// Reads a single-column CSV; a non-numeric first row is treated as a header.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
            let field = rec.get(0).unwrap_or("").trim();
            if field.is_empty() {
                continue;
            }
            match field.parse::<f64>() {
                Ok(v) => values.push(v),
                Err(_) if i == 0 => continue,
                Err(_) => return Err(Error::Io(format!("row {}: cannot parse {field:?}", i + 1))),
            }
        }
        Self::new(values)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref()).map_err(|e| Error::Io(e.to_string()))?;
        Self::from_csv_reader(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    QuantileOfSample,
    Absolute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub kind: ThresholdKind,
    pub levels: Vec<f64>,
}

impl ThresholdSpec {
    pub fn quantiles(levels: Vec<f64>) -> Self {
        Self { kind: ThresholdKind::QuantileOfSample, levels }
    }

    pub fn absolute(levels: Vec<f64>) -> Self {
        Self { kind: ThresholdKind::Absolute, levels }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return invalid("at least one threshold level is required");
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("threshold levels must be strictly increasing");
        }
        if self.kind == ThresholdKind::QuantileOfSample
            && self.levels.iter().any(|&q| !(q > 0.0 && q < 1.0))
        {
            return invalid("quantile levels must lie in (0,1)");
        }
        Ok(())
    }

    pub fn resolve(&self, sample: &TailSample) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(match self.kind {
            ThresholdKind::Absolute => self.levels.clone(),
            ThresholdKind::QuantileOfSample => self.levels.iter().map(|&q| sample.quantile(q)).collect(),
        })
    }
}

/// Shape order with its boundary parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "order")]
pub enum ShapeSpec {
    #[serde(rename = "0")]
    None,
    #[serde(rename = "1")]
    Monotone { eta: f64 },
    #[serde(rename = "2")]
    Convex { eta_lo: f64, eta_hi: f64, nu: f64 },
}

impl ShapeSpec {
    pub fn order(&self) -> u8 {
        match self {
            ShapeSpec::None => 0,
            ShapeSpec::Monotone { .. } => 1,
            ShapeSpec::Convex { .. } => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        match *self {
            ShapeSpec::None => Ok(()),
            ShapeSpec::Monotone { eta } if ok(eta) => Ok(()),
            ShapeSpec::Convex { eta_lo, eta_hi, nu } if ok(eta_lo) && ok(eta_hi) && ok(nu) && eta_lo <= eta_hi => {
                Ok(())
            }
            _ => invalid(format!("shape parameters invalid: {self:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetBlock {
    /// `{y : (y-μ)ᵀ Σ⁻¹ (y-μ) ≤ r}`.
    Ellipsoid { mu: Vec<f64>, sigma: Vec<Vec<f64>>, r: f64 },
    Rectangle { lo: Vec<f64>, hi: Vec<f64> },
}

impl SetBlock {
    pub fn dim(&self) -> usize {
        match self {
            SetBlock::Ellipsoid { mu, .. } => mu.len(),
            SetBlock::Rectangle { lo, .. } => lo.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SetBlock::Ellipsoid { mu, sigma, r } => {
                let d = mu.len();
                if d == 0 || sigma.len() != d || sigma.iter().any(|row| row.len() != d) {
                    return invalid("ellipsoid dimensions disagree");
                }
                if !(*r > 0.0 && r.is_finite()) {
                    return invalid("ellipsoid radius must be positive");
                }
                let m = sigma_matrix(sigma);
                if (&m - m.transpose()).abs().max() > 1e-10 * (1.0 + m.abs().max()) {
                    return invalid("Σ must be symmetric");
                }
                if m.cholesky().is_none() {
                    return invalid("Σ must be positive definite");
                }
                Ok(())
            }
            SetBlock::Rectangle { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return invalid("rectangle dimensions disagree");
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
                    return invalid("rectangle needs finite lo ≤ hi");
                }
                Ok(())
            }
        }
    }

    /// Largest value coordinate `i` can take inside the block.
    pub fn coordinate_max(&self, i: usize) -> f64 {
        match self {
            SetBlock::Ellipsoid { mu, sigma, r } => mu[i] + (r * sigma[i][i]).sqrt(),
            SetBlock::Rectangle { hi, .. } => hi[i],
        }
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        match self {
            SetBlock::Ellipsoid { mu, sigma, r } => {
                let m = sigma_matrix(sigma);
                let d = DVector::from_iterator(mu.len(), y.iter().zip(mu).map(|(a, b)| a - b));
                match m.cholesky() {
                    Some(ch) => d.dot(&ch.solve(&d)) <= r * (1.0 + tol) + tol,
                    None => false,
                }
            }
            SetBlock::Rectangle { lo, hi } => {
                y.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
            }
        }
    }
}

pub(crate) fn sigma_matrix(sigma: &[Vec<f64>]) -> DMatrix<f64> {
    let d = sigma.len();
    DMatrix::from_fn(d, d, |i, j| sigma[i][j])
}

/// Product of blocks; coordinates are concatenated in block order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub blocks: Vec<SetBlock>,
}

impl MomentSet {
    pub fn single(block: SetBlock) -> Self {
        Self { blocks: vec![block] }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(SetBlock::dim).sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.blocks.iter().try_for_each(SetBlock::validate)
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        let mut off = 0;
        self.blocks.iter().all(|b| {
            let d = b.dim();
            let ok = b.contains(&y[off..off + d], tol);
            off += d;
            ok
        })
    }

    pub fn coordinate_max(&self, mut i: usize) -> f64 {
        for b in &self.blocks {
            if i < b.dim() {
                return b.coordinate_max(i);
            }
            i -= b.dim();
        }
        f64::INFINITY
    }

    /// Enlarges the set: ellipsoid radii times `factor`, rectangle half-widths times `factor`.
    pub fn inflated(&self, factor: f64) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| match b {
                SetBlock::Ellipsoid { mu, sigma, r } => {
                    SetBlock::Ellipsoid { mu: mu.clone(), sigma: sigma.clone(), r: r * factor }
                }
                SetBlock::Rectangle { lo, hi } => {
                    let (lo, hi) = lo
                        .iter()
                        .zip(hi)
                        .map(|(l, h)| {
                            let c = 0.5 * (l + h);
                            let w = 0.5 * (h - l) * factor;
                            (c - w, c + w)
                        })
                        .unzip();
                    SetBlock::Rectangle { lo, hi }
                }
            })
            .collect();
        Self { blocks }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSpec {
    pub generators: Vec<PiecewisePoly>,
    pub set: MomentSet,
}

impl MomentSpec {
    pub fn validate(&self, a: f64) -> Result<()> {
        if self.generators.is_empty() {
            return invalid("at least one generator is required");
        }
        let g1 = &self.generators[0];
        if *g1 != PiecewisePoly::indicator(a, f64::INFINITY) {
            return invalid("first generator must be 𝕀(x ≥ a)");
        }
        for g in &self.generators {
            if g.start() < a && g.coefficients().iter().zip(g.breakpoints()).any(|(c, &b)| b < a && c.iter().any(|&v| v != 0.0)) {
                return invalid("generators must vanish below the threshold");
            }
        }
        if self.set.dim() != self.generators.len() {
            return invalid("moment set dimension must equal the number of generators");
        }
        self.set.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    /// `P(L ≤ X ≤ R)`; `R` may be `+∞`.
    TailInterval { lo: f64, hi: f64 },
    Quantile { p: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroProblem {
    #[serde(skip)]
    pub sample: Option<Arc<TailSample>>,
    pub a: f64,
    pub shape: ShapeSpec,
    pub moments: MomentSpec,
    pub objective: Objective,
}

impl DroProblem {
    pub fn new(a: f64, shape: ShapeSpec, moments: MomentSpec, objective: Objective) -> Result<Self> {
        let p = Self { sample: None, a, shape, moments, objective };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() {
            return invalid("threshold must be finite");
        }
        self.shape.validate()?;
        self.moments.validate(self.a)?;
        match self.objective {
            Objective::TailInterval { lo, hi } => {
                if !(self.a <= lo && lo <= hi) || lo.is_nan() {
                    return Err(Error::Precondition(format!(
                        "interval [{lo}, {hi}] must satisfy a={} ≤ L ≤ R",
                        self.a
                    )));
                }
            }
            Objective::Quantile { p } => {
                if !(p > 0.0 && p < 1.0) {
                    return invalid("quantile level must lie in (0,1)");
                }
            }
        }
        Ok(())
    }

    /// Largest value of `E[𝕀(X ≥ a)]` allowed by the moment set (capped at 1).
    pub fn mass_cap(&self) -> f64 {
        self.moments.set.coordinate_max(0).clamp(0.0, 1.0)
    }

    pub fn with_objective(&self, objective: Objective) -> Self {
        Self { objective, ..self.clone() }
    }
}

/// Validates the inputs and resolves the thresholds; returns one problem per threshold.
pub fn build_problems(
    sample: Arc<TailSample>,
    thr: &ThresholdSpec,
    shapes: &[ShapeSpec],
    moments: &[MomentSpec],
    objective: Objective,
) -> Result<Vec<DroProblem>> {
    let thresholds = thr.resolve(&sample)?;
    if shapes.len() != thresholds.len() || moments.len() != thresholds.len() {
        return invalid("one shape and one moment spec per threshold");
    }
    let top = thresholds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if let Objective::TailInterval { lo, .. } = objective {
        if lo < top {
            return Err(Error::Precondition(format!("objective region starts at {lo}, below threshold {top}")));
        }
    }
    thresholds
        .iter()
        .zip(shapes.iter().zip(moments))
        .map(|(&a, (shape, m))| {
            if sample.count_at_least(a) == 0 {
                return invalid(format!("no sample points at or above threshold {a}"));
            }
            let mut p = DroProblem::new(a, *shape, m.clone(), objective)?;
            p.sample = Some(sample.clone());
            Ok(p)
        })
        .collect()
}

/// Single-threshold convenience wrapper around [`build_problems`].
pub fn build_problem(
    sample: Arc<TailSample>,
    thr: &ThresholdSpec,
    shape: ShapeSpec,
    moments: MomentSpec,
    objective: Objective,
) -> Result<DroProblem> {
    if thr.levels.len() != 1 {
        return invalid("build_problem takes exactly one threshold");
    }
    Ok(build_problems(sample, thr, &[shape], &[moments], objective)?.remove(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Unbounded,
    Infeasible,
    NumericalFailure,
}

/// Multipliers of the specialised dual: κ, λ, u, λ₁, λ₂, δ₁, δ₂.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DualRecord {
    pub kappa: f64,
    pub lambda: Vec<f64>,
    pub u: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub delta1: f64,
    pub delta2: f64,
    /// Multipliers on equality (singleton) coordinates.
    pub free: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub gap: f64,
    pub backend: String,
    pub cuts: usize,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    /// Optimal value; `+∞` when unbounded, `-∞` when infeasible, NaN on failure.
    pub value: f64,
    /// Value reported to users: clipped to `[0, mass cap]` for probabilities.
    pub reported: f64,
    pub status: Status,
    pub threshold_used: f64,
    pub dual: Option<DualRecord>,
    pub diagnostics: Diagnostics,
    pub runtime_ms: f64,
}

impl BoundResult {
    pub fn failed(threshold: f64, note: impl Into<String>) -> Self {
        Self {
            value: f64::NAN,
            reported: f64::NAN,
            status: Status::NumericalFailure,
            threshold_used: threshold,
            dual: None,
            diagnostics: Diagnostics { note: Some(note.into()), ..Default::default() },
            runtime_ms: 0.0,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "value": json_num(self.reported),
            "raw_value": json_num(self.value),
            "status": self.status,
            "threshold_used": self.threshold_used,
            "dual": self.dual,
            "gap": self.diagnostics.gap,
            "iterations": self.diagnostics.iterations,
            "backend": self.diagnostics.backend,
            "note": self.diagnostics.note,
            "runtime_ms": self.runtime_ms,
        })
    }
}

/// JSON has no infinities; encode them as strings.
pub fn json_num(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else if v.is_nan() {
        serde_json::json!("nan")
    } else if v > 0.0 {
        serde_json::json!("inf")
    } else {
        serde_json::json!("-inf")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ellipsoid_spec(a: f64) -> MomentSpec {
        MomentSpec {
            generators: vec![PiecewisePoly::indicator(a, f64::INFINITY), PiecewisePoly::monomial_tail(1, a)],
            set: MomentSet::single(SetBlock::Ellipsoid {
                mu: vec![0.3, 30.0],
                sigma: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                r: 7.378,
            }),
        }
    }

    #[test]
    fn quantile_threshold_is_order_statistic() {
        let s = Arc::new(TailSample::new((1..=100).map(f64::from).collect()).unwrap());
        let thr = ThresholdSpec::quantiles(vec![0.7]);
        assert_eq!(thr.resolve(&s).unwrap(), vec![70.0]);
    }

    #[test]
    fn interval_below_threshold_is_rejected() {
        let s = Arc::new(TailSample::new((1..=100).map(f64::from).collect()).unwrap());
        let thr = ThresholdSpec::quantiles(vec![0.7]);
        let obj = Objective::TailInterval { lo: 50.0, hi: 90.0 };
        let r = build_problem(s, &thr, ShapeSpec::None, ellipsoid_spec(70.0), obj);
        assert!(r.is_err());
    }

    #[test]
    fn unit_covariance_ellipsoid_accepted() {
        let s = Arc::new(TailSample::new((1..=100).map(f64::from).collect()).unwrap());
        let thr = ThresholdSpec::quantiles(vec![0.7]);
        let shape = ShapeSpec::Convex { eta_lo: 0.005, eta_hi: 0.02, nu: 0.001 };
        let obj = Objective::TailInterval { lo: 90.0, hi: 95.0 };
        let p = build_problem(s, &thr, shape, ellipsoid_spec(70.0), obj).unwrap();
        match &p.moments.set.blocks[0] {
            SetBlock::Ellipsoid { sigma, r, .. } => {
                assert_eq!(sigma, &vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
                assert!((r - 7.378).abs() < 1e-12);
            }
            _ => panic!("expected ellipsoid"),
        }
    }

    #[test]
    fn non_pd_sigma_is_rejected() {
        let mut spec = ellipsoid_spec(0.0);
        spec.set = MomentSet::single(SetBlock::Ellipsoid {
            mu: vec![0.3, 1.0],
            sigma: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
            r: 1.0,
        });
        let obj = Objective::TailInterval { lo: 1.0, hi: 2.0 };
        assert!(DroProblem::new(0.0, ShapeSpec::None, spec, obj).is_err());
    }

    #[test]
    fn empty_tail_is_rejected() {
        let s = Arc::new(TailSample::new(vec![1.0, 2.0, 3.0]).unwrap());
        let thr = ThresholdSpec::absolute(vec![10.0]);
        let obj = Objective::TailInterval { lo: 11.0, hi: 12.0 };
        let spec = MomentSpec {
            generators: vec![PiecewisePoly::indicator(10.0, f64::INFINITY)],
            set: MomentSet::single(SetBlock::Rectangle { lo: vec![0.0], hi: vec![0.1] }),
        };
        assert!(build_problem(s, &thr, ShapeSpec::None, spec, obj).is_err());
    }

    #[test]
    fn csv_with_and_without_header() {
        let with = TailSample::from_csv_reader("x\n3\n1\n2\n".as_bytes()).unwrap();
        let without = TailSample::from_csv_reader("3\n1\n2\n".as_bytes()).unwrap();
        assert_eq!(with, without);
        assert_eq!(with.values(), &[1.0, 2.0, 3.0]);
    }
}
