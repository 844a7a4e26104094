//! Global minimisation of a univariate polynomial on an interval or half-line.

use crate::model::{poly_degree, poly_derivative, poly_eval};

#[derive(Clone, Debug, PartialEq)]
pub enum NonnegCheck {
    Nonnegative { min: f64, argmin: f64 },
    Violation { x: f64, value: f64, unbounded: bool },
}

impl NonnegCheck {
    pub fn is_nonnegative(&self) -> bool {
        matches!(self, NonnegCheck::Nonnegative { .. })
    }
}

/// Cauchy bound: every real root has `|t| ≤ 1 + max |cᵢ/c_d|`.
fn root_bound(c: &[f64]) -> f64 {
    let d = poly_degree(c);
    let lead = c[d];
    1.0 + c[..d].iter().map(|v| (v / lead).abs()).fold(0.0, f64::max)
}

/// All real roots of `c` in `[lo, hi]` (finite), by recursive isolation
/// between critical points followed by bisection.
pub fn real_roots(c: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let d = poly_degree(c);
    if d == 0 {
        return vec![];
    }
    if d == 1 {
        let r = -c[0] / c[1];
        return if r >= lo && r <= hi { vec![r] } else { vec![] };
    }
    let crit = real_roots(&poly_derivative(&c[..=d]), lo, hi);
    let mut knots = vec![lo];
    knots.extend(crit);
    knots.push(hi);
    let mut roots = Vec::new();
    for w in knots.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (mut fa, fb) = (poly_eval(c, a), poly_eval(c, b));
        if fa == 0.0 {
            roots.push(a);
            continue;
        }
        if fa.signum() == fb.signum() {
            continue;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let fm = poly_eval(c, m);
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        roots.push(0.5 * (a + b));
    }
    if poly_eval(c, hi) == 0.0 {
        roots.push(hi);
    }
    roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * (1.0 + y.abs()));
    roots
}

/// Checks `p(t) ≥ 0` for `t ∈ [lo, hi]` (`hi` may be `+∞`).
pub fn check_poly_nonneg(c: &[f64], lo: f64, hi: f64) -> NonnegCheck {
    let d = poly_degree(c);
    let mut cands = vec![lo];
    if d == 0 {
        let v = c.first().copied().unwrap_or(0.0);
        return if v < 0.0 {
            NonnegCheck::Violation { x: lo, value: v, unbounded: false }
        } else {
            NonnegCheck::Nonnegative { min: v, argmin: lo }
        };
    }
    let upper = if hi.is_finite() {
        hi
    } else {
        let dr = poly_derivative(&c[..=d]);
        let rb = if d >= 2 { root_bound(&dr) } else { 0.0 };
        lo.abs().max(rb) + lo.max(0.0) + 1.0
    };
    if hi.is_finite() {
        cands.push(hi);
    }
    cands.extend(real_roots(&poly_derivative(&c[..=d]), lo, upper));
    let (mut argmin, mut min) = (lo, f64::INFINITY);
    for &t in &cands {
        let v = poly_eval(c, t);
        if v < min {
            min = v;
            argmin = t;
        }
    }
    if hi.is_infinite() && c[d] < 0.0 {
        // unbounded below; report a probe beyond every root of p and p'
        let probe = upper.max(lo + root_bound(&c[..=d]) + 1.0) * 2.0;
        return NonnegCheck::Violation { x: probe, value: poly_eval(c, probe), unbounded: true };
    }
    if min < 0.0 {
        NonnegCheck::Violation { x: argmin, value: min, unbounded: false }
    } else {
        NonnegCheck::Nonnegative { min, argmin }
    }
}
