//! Large-threshold behaviour of the convex-tail closed forms.
//!
//! With `β = F̄(a)`, `η = f(a)` and `ν = −f′(a)` taken from a known
//! distribution, the closed forms can be compared against the truth at a
//! finite threshold and against their limits as `a → ∞`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::bound::{closed_form_qstar, closed_form_zstar, ClosedFormParams};
use crate::error::{invalid, Error, Result};
use crate::model::TailSample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeMode {
    /// `b = a + x·u(a)`.
    Probability,
    /// `1 − p = x·β`.
    Quantile,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRegime {
    pub xi: f64,
    pub mode: RegimeMode,
    pub x: f64,
}

impl TailRegime {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi >= 0.0) || !self.xi.is_finite() {
            return invalid("ξ must be finite and ≥ 0 (use endpoint_transform for ξ < 0)");
        }
        let ok = match self.mode {
            RegimeMode::Probability => self.x >= 0.0,
            RegimeMode::Quantile => {
                let lo = quantile_x_min(self.xi);
                self.x > lo && self.x <= 1.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!("x = {} outside the feasible range for {:?}", self.x, self.mode)))
        }
    }
}

/// Left end of the open range of `x` with a finite quantile bound.
pub fn quantile_x_min(xi: f64) -> f64 {
    if xi > 0.0 {
        1.0 - 1.0 / (2.0 * (xi + 1.0))
    } else {
        0.5
    }
}

/// Branch of the Fréchet probability limit; `upper` selects `x ≥ 1/(ξ+1)`.
fn frechet_prob_branch(xi: f64, x: f64, upper: bool) -> f64 {
    let tail = (1.0 + xi * x).powf(1.0 / xi);
    if upper {
        (1.0 - 1.0 / (2.0 * (xi + 1.0))) * tail
    } else {
        (1.0 - x + 0.5 * (xi + 1.0) * x * x) * tail
    }
}

fn gumbel_prob_branch(x: f64, upper: bool) -> f64 {
    if upper {
        0.5 * x.exp()
    } else {
        (1.0 - x + 0.5 * x * x) * x.exp()
    }
}

/// `lim z*/F̄(b)` for `b = a + x·u(a)`.
pub fn limit_ratio_prob(regime: &TailRegime) -> Result<f64> {
    if regime.mode != RegimeMode::Probability {
        return invalid("probability regime expected");
    }
    regime.validate()?;
    let (xi, x) = (regime.xi, regime.x);
    Ok(if xi > 0.0 {
        frechet_prob_branch(xi, x, x >= 1.0 / (xi + 1.0))
    } else {
        gumbel_prob_branch(x, x >= 1.0)
    })
}

/// Both branches at the split point, for continuity checks.
pub fn branch_values_at_split(xi: f64) -> (f64, f64) {
    if xi > 0.0 {
        let s = 1.0 / (xi + 1.0);
        (frechet_prob_branch(xi, s, false), frechet_prob_branch(xi, s, true))
    } else {
        (gumbel_prob_branch(1.0, false), gumbel_prob_branch(1.0, true))
    }
}

/// `lim z*/F̄(2a)` for a Fréchet-domain tail.
pub fn limit_ratio_double(xi: f64) -> Result<f64> {
    if !(xi > 0.0) {
        return invalid("needs ξ > 0; the ratio diverges for ξ = 0");
    }
    Ok((1.0 - 1.0 / (2.0 * (xi + 1.0))) * 2f64.powf(1.0 / xi))
}

/// `lim q*/q` for `1 − p = x·β`.
pub fn limit_ratio_quantile(regime: &TailRegime) -> Result<f64> {
    if regime.mode != RegimeMode::Quantile {
        return invalid("quantile regime expected");
    }
    regime.validate()?;
    let (xi, x) = (regime.xi, regime.x);
    if xi == 0.0 {
        return Ok(1.0);
    }
    let rad = (1.0 - 2.0 * (1.0 - x) * (xi + 1.0)).max(0.0);
    Ok(x.powf(xi) * (xi / (xi + 1.0) * (1.0 - rad.sqrt()) + 1.0))
}

/// Maps a sample with finite right endpoint `x_F` to `1/(x_F − X)`; a
/// threshold `a` maps to [`endpoint_threshold`].
pub fn endpoint_transform(sample: &TailSample, x_f: f64) -> Result<TailSample> {
    if let Some(&bad) = sample.values().iter().find(|&&v| v >= x_f) {
        return Err(Error::Precondition(format!("value {bad} is not below the endpoint {x_f}")));
    }
    TailSample::new(sample.values().iter().map(|&v| 1.0 / (x_f - v)).collect())
}

pub fn endpoint_threshold(a: f64, x_f: f64) -> f64 {
    1.0 / (x_f - a)
}

/// A distribution with analytic survival function, density and density slope.
#[derive(Clone, Copy, Debug)]
pub enum AnalyticTail {
    /// `F̄(x) = (x/scale)^{−α}` for `x ≥ scale`.
    Pareto { alpha: f64, scale: f64 },
    Normal { mean: f64, sd: f64 },
    Custom { sf: fn(f64) -> f64, pdf: fn(f64) -> f64, dpdf: fn(f64) -> f64 },
}

impl AnalyticTail {
    pub fn sf(&self, x: f64) -> f64 {
        match *self {
            AnalyticTail::Pareto { alpha, scale } => (x / scale).max(1.0).powf(-alpha),
            AnalyticTail::Normal { mean, sd } => Normal::new(mean, sd).unwrap().sf(x),
            AnalyticTail::Custom { sf, .. } => sf(x),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            AnalyticTail::Pareto { alpha, scale } if x >= scale => alpha / scale * (x / scale).powf(-alpha - 1.0),
            AnalyticTail::Pareto { .. } => 0.0,
            AnalyticTail::Normal { mean, sd } => Normal::new(mean, sd).unwrap().pdf(x),
            AnalyticTail::Custom { pdf, .. } => pdf(x),
        }
    }

    pub fn dpdf(&self, x: f64) -> f64 {
        match *self {
            AnalyticTail::Pareto { alpha, scale } if x >= scale => {
                -alpha * (alpha + 1.0) / (scale * scale) * (x / scale).powf(-alpha - 2.0)
            }
            AnalyticTail::Pareto { .. } => 0.0,
            AnalyticTail::Normal { mean, sd } => -(x - mean) / (sd * sd) * self.pdf(x),
            AnalyticTail::Custom { dpdf, .. } => dpdf(x),
        }
    }

    /// Inverse survival function.
    pub fn isf(&self, s: f64) -> f64 {
        match *self {
            AnalyticTail::Pareto { alpha, scale } => scale * s.powf(-1.0 / alpha),
            AnalyticTail::Normal { mean, sd } => Normal::new(mean, sd).unwrap().inverse_cdf(1.0 - s),
            AnalyticTail::Custom { sf, .. } => {
                // bracket then bisect on the decreasing survival function
                let (mut lo, mut hi) = (-1.0f64, 1.0f64);
                while sf(lo) < s {
                    lo *= 2.0;
                }
                while sf(hi) > s {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if sf(mid) > s {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// `(β, η, ν)` at the threshold `a`.
    pub fn params_at(&self, a: f64) -> (f64, f64, f64) {
        (self.sf(a), self.pdf(a), -self.dpdf(a))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteRatio {
    /// Closed-form bound over the truth.
    pub ratio: f64,
    /// `(bound − truth)/truth`.
    pub relative_error: f64,
    pub bound: f64,
    pub truth: f64,
}

impl FiniteRatio {
    fn new(bound: f64, truth: f64) -> Self {
        Self { ratio: bound / truth, relative_error: (bound - truth) / truth, bound, truth }
    }
}

/// `z*(a, b)` against `F̄(b)` at a finite threshold.
pub fn finite_a_ratio(dist: &AnalyticTail, a: f64, b: f64) -> Result<FiniteRatio> {
    let (beta, eta, nu) = dist.params_at(a);
    let z = closed_form_zstar(&ClosedFormParams { a, b, beta, eta, nu })?;
    Ok(FiniteRatio::new(z, dist.sf(b)))
}

/// `q*` against the true quantile for `1 − p = x·F̄(a)`.
pub fn finite_a_quantile_ratio(dist: &AnalyticTail, a: f64, x: f64) -> Result<FiniteRatio> {
    let (beta, eta, nu) = dist.params_at(a);
    let p = 1.0 - x * beta;
    let q = closed_form_qstar(a, p, beta, eta, nu)?;
    Ok(FiniteRatio::new(q, dist.isf(x * beta)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prob(xi: f64, x: f64) -> f64 {
        limit_ratio_prob(&TailRegime { xi, mode: RegimeMode::Probability, x }).unwrap()
    }

    fn quant(xi: f64, x: f64) -> f64 {
        limit_ratio_quantile(&TailRegime { xi, mode: RegimeMode::Quantile, x }).unwrap()
    }

    #[test]
    fn limit_examples() {
        assert!((prob(0.7, 0.0) - 1.0).abs() < 1e-15);
        assert!((prob(1.0, 1.0) - 1.5).abs() < 1e-15);
        assert!((limit_ratio_double(1.0).unwrap() - 1.5).abs() < 1e-15);
        assert!((prob(0.0, 1.0) - std::f64::consts::E / 2.0).abs() < 1e-15);
        assert!((quant(0.5, 1.0) - 1.0).abs() < 1e-15);
        let want = 0.8 * (0.5 * (1.0 - 0.2f64.sqrt()) + 1.0);
        assert!((quant(1.0, 0.8) - want).abs() < 1e-15);
        assert!((want - 1.0211).abs() < 1e-4);
        assert_eq!(quant(0.0, 0.7), 1.0);
        assert!(limit_ratio_quantile(&TailRegime { xi: 1.0, mode: RegimeMode::Quantile, x: 0.7 }).is_err());
    }

    #[test]
    fn branches_meet_at_split() {
        for &xi in &[0.0, 0.1, 0.5, 1.0, 2.0, 7.0] {
            let (l, u) = branch_values_at_split(xi);
            assert!((l - u).abs() <= 1e-12, "ξ={xi}: {l} vs {u}");
        }
    }

    #[test]
    fn double_threshold_limit_decreases_to_one() {
        let xs: Vec<f64> = (1..200).map(|i| 0.05 * i as f64).collect();
        let vals: Vec<f64> = xs.iter().map(|&x| limit_ratio_double(x).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
        assert!((limit_ratio_double(1e6).unwrap() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn quantile_limit_matches_pareto_at_finite_a() {
        let d = AnalyticTail::Pareto { alpha: 1.0, scale: 1.0 };
        let r = finite_a_quantile_ratio(&d, 1e3, 0.8).unwrap();
        assert!((r.ratio - quant(1.0, 0.8)).abs() < 1e-9, "{}", r.ratio);
    }

    #[test]
    fn finite_ratios() {
        let pareto = AnalyticTail::Pareto { alpha: 1.0, scale: 1.0 };
        for &a in &[1e3, 1e4, 1e5] {
            let r = finite_a_ratio(&pareto, a, 2.0 * a).unwrap();
            assert!((r.ratio - 1.5).abs() < 0.075);
        }
        let normal = AnalyticTail::Normal { mean: 0.0, sd: 1.0 };
        assert!(finite_a_ratio(&normal, 2.0, 2.0).unwrap().relative_error.abs() < 1e-12);
        let rs: Vec<f64> = (1..=12).map(|a| finite_a_ratio(&normal, a as f64, 2.0 * a as f64).unwrap().ratio).collect();
        assert!(rs.windows(2).all(|w| w[1] > w[0]));
        assert!(rs[11] > 1e10);
    }

    #[test]
    fn endpoint_transform_examples() {
        let s = TailSample::new(vec![0.0, 0.5, 0.9]).unwrap();
        let t = endpoint_transform(&s, 1.0).unwrap();
        let want = [1.0, 2.0, 10.0];
        assert!(t.values().iter().zip(want).all(|(v, w)| (v - w).abs() < 1e-12));
        assert!(endpoint_transform(&s, 0.9).is_err());
        assert_eq!(endpoint_threshold(0.5, 1.0), 2.0);
    }
}
