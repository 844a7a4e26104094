//! Univariate polynomials and right-open piecewise polynomials on a half-line.
//!
//! Coefficients are stored in ascending degree. Each piece is expressed in the
//! local variable `t = x - b_i`, where `b_i` is the left breakpoint of the
//! piece; this keeps coefficients well scaled when breakpoints are far from 0.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DEFAULT_MAX_DEGREE: usize = 4;

pub fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

pub fn poly_eval(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * t + ci)
}

pub fn poly_derivative(c: &[f64]) -> Vec<f64> {
    if c.len() <= 1 {
        return vec![0.0];
    }
    c.iter().enumerate().skip(1).map(|(k, &ck)| k as f64 * ck).collect()
}

/// Coefficients of `q(t) = p(t + d)`.
pub fn poly_shift(c: &[f64], d: f64) -> Vec<f64> {
    let n = c.len();
    let mut out = vec![0.0; n];
    for (k, &ck) in c.iter().enumerate() {
        if ck == 0.0 {
            continue;
        }
        let mut dp = 1.0;
        for j in (0..=k).rev() {
            // term ck * C(k, j) * t^j * d^(k-j)
            out[j] += ck * binom(k, j) * dp;
            dp *= d;
        }
    }
    out
}

/// Coefficients of `q(t) = p(s t)`.
pub fn poly_scale_arg(c: &[f64], s: f64) -> Vec<f64> {
    let mut f = 1.0;
    c.iter()
        .map(|&ck| {
            let v = ck * f;
            f *= s;
            v
        })
        .collect()
}

pub fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0))
        .collect()
}

pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Index of the highest nonzero coefficient (0 for the zero polynomial).
pub fn poly_degree(c: &[f64]) -> usize {
    c.iter().rposition(|&v| v != 0.0).unwrap_or(0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePoly {
    breakpoints: Vec<f64>,
    coefficients: Vec<Vec<f64>>,
}

impl PiecewisePoly {
    pub fn new(breakpoints: Vec<f64>, coefficients: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != coefficients.len() {
            return invalid("piecewise polynomial needs one coefficient vector per breakpoint");
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return invalid("breakpoints must be finite");
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("breakpoints must be strictly increasing");
        }
        if coefficients.iter().any(|c| c.is_empty() || c.iter().any(|v| !v.is_finite())) {
            return invalid("coefficients must be nonempty and finite");
        }
        Ok(Self { breakpoints, coefficients })
    }

    pub fn zero(a: f64) -> Self {
        Self { breakpoints: vec![a], coefficients: vec![vec![0.0]] }
    }

    pub fn constant(a: f64, c: f64) -> Self {
        Self { breakpoints: vec![a], coefficients: vec![vec![c]] }
    }

    /// `𝕀(lo ≤ x ≤ hi)`; pass `f64::INFINITY` for a half-line.
    pub fn indicator(lo: f64, hi: f64) -> Self {
        if hi.is_infinite() {
            Self::constant(lo, 1.0)
        } else {
            assert!(hi > lo, "indicator needs lo < hi");
            Self { breakpoints: vec![lo, hi], coefficients: vec![vec![1.0], vec![0.0]] }
        }
    }

    /// `x^k 𝕀(x ≥ a)`.
    pub fn monomial_tail(k: usize, a: f64) -> Self {
        let c = (0..=k).map(|j| binom(k, j) * a.powi((k - j) as i32)).collect();
        Self { breakpoints: vec![a], coefficients: vec![c] }
    }

    /// `(x - a)_+^k`, convenient for transformed generators.
    pub fn ramp_power(k: usize, a: f64) -> Self {
        let mut c = vec![0.0; k + 1];
        c[k] = 1.0;
        Self { breakpoints: vec![a], coefficients: vec![c] }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn n_pieces(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn start(&self) -> f64 {
        self.breakpoints[0]
    }

    /// Piece `i` covers `[lo, hi)`, with `hi = +∞` for the last piece.
    pub fn piece_bounds(&self, i: usize) -> (f64, f64) {
        let hi = self.breakpoints.get(i + 1).copied().unwrap_or(f64::INFINITY);
        (self.breakpoints[i], hi)
    }

    pub fn degree(&self) -> usize {
        self.coefficients.iter().map(|c| poly_degree(c)).max().unwrap_or(0)
    }

    fn piece_index(&self, x: f64) -> Option<usize> {
        if x < self.breakpoints[0] {
            return None;
        }
        Some(self.breakpoints.partition_point(|&b| b <= x) - 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.piece_index(x) {
            None => 0.0,
            Some(i) => poly_eval(&self.coefficients[i], x - self.breakpoints[i]),
        }
    }

    /// Value of the piece to the left of `x` (limit from below).
    pub fn eval_left(&self, x: f64) -> f64 {
        let i = self.breakpoints.partition_point(|&b| b < x);
        if i == 0 {
            return 0.0;
        }
        poly_eval(&self.coefficients[i - 1], x - self.breakpoints[i - 1])
    }

    /// Local coefficients of the polynomial valid around `x`, re-centred at `x`.
    pub fn local_at(&self, x: f64) -> Vec<f64> {
        match self.piece_index(x) {
            None => vec![0.0],
            Some(i) => poly_shift(&self.coefficients[i], x - self.breakpoints[i]),
        }
    }

    /// Same function on a finer breakpoint set (points below the start add zero pieces).
    pub fn refine(&self, extra: &[f64]) -> Self {
        let mut bps: Vec<f64> = self.breakpoints.iter().chain(extra.iter()).copied().collect();
        bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bps.dedup();
        let coefficients = bps.iter().map(|&b| self.local_at(b)).collect();
        Self { breakpoints: bps, coefficients }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            coefficients: self
                .coefficients
                .iter()
                .map(|c| c.iter().map(|v| v * s).collect())
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let a = self.refine(&other.breakpoints);
        let b = other.refine(&self.breakpoints);
        let coefficients = a
            .coefficients
            .iter()
            .zip(&b.coefficients)
            .map(|(x, y)| poly_add(x, y))
            .collect();
        Self { breakpoints: a.breakpoints, coefficients }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let a = self.refine(&other.breakpoints);
        let b = other.refine(&self.breakpoints);
        let coefficients = a
            .coefficients
            .iter()
            .zip(&b.coefficients)
            .map(|(x, y)| poly_mul(x, y))
            .collect();
        Self { breakpoints: a.breakpoints, coefficients }
    }

    pub fn derivative(&self) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            coefficients: self.coefficients.iter().map(|c| poly_derivative(c)).collect(),
        }
    }

    /// Exact integral over `[lo, hi]`; `hi` may be infinite only if the last piece vanishes.
    pub fn integrate(&self, lo: f64, hi: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n_pieces() {
            let (pl, ph) = self.piece_bounds(i);
            let l = pl.max(lo);
            let h = ph.min(hi);
            if h <= l {
                continue;
            }
            let c = &self.coefficients[i];
            if h.is_infinite() {
                if c.iter().any(|&v| v != 0.0) {
                    return f64::INFINITY;
                }
                continue;
            }
            let prim = |t: f64| {
                c.iter()
                    .enumerate()
                    .map(|(k, &ck)| ck * t.powi(k as i32 + 1) / (k + 1) as f64)
                    .sum::<f64>()
            };
            total += prim(h - pl) - prim(l - pl);
        }
        total
    }

    fn integrate_once(&self, a: f64) -> Self {
        let base = if self.breakpoints[0] > a { self.refine(&[a]) } else { self.clone() };
        let mut coefficients = Vec::with_capacity(base.n_pieces());
        let mut carry = 0.0;
        for i in 0..base.n_pieces() {
            let c = &base.coefficients[i];
            let mut p = vec![carry];
            p.extend(c.iter().enumerate().map(|(k, &ck)| ck / (k + 1) as f64));
            if let Some(&next) = base.breakpoints.get(i + 1) {
                carry = poly_eval(&p, next - base.breakpoints[i]);
            }
            coefficients.push(p);
        }
        Self { breakpoints: base.breakpoints, coefficients }
    }

    /// `order`-fold antiderivative from `a`: value (and first derivative for
    /// order 2) vanish at `a`, and the result is continuous everywhere.
    pub fn antiderivative(&self, a: f64, order: usize, max_degree: usize) -> Result<Self> {
        if !(1..=2).contains(&order) {
            return invalid("antiderivative order must be 1 or 2");
        }
        let nonzero_below = (0..self.n_pieces())
            .any(|i| self.breakpoints[i] < a && self.coefficients[i].iter().any(|&v| v != 0.0));
        if nonzero_below {
            return Err(Error::Precondition(format!("function must vanish below the threshold {a}")));
        }
        let got = self.degree() + order;
        if got > max_degree {
            return Err(Error::DegreeOverflow { got, max: max_degree });
        }
        let trimmed = self.restrict_from(a);
        let mut out = trimmed.integrate_once(a);
        if order == 2 {
            out = out.integrate_once(a);
        }
        Ok(out.trim())
    }

    /// Drops pieces entirely left of `a` and starts the function at `a`.
    pub fn restrict_from(&self, a: f64) -> Self {
        if self.breakpoints[0] >= a {
            return self.clone();
        }
        let mut bps = vec![a];
        bps.extend(self.breakpoints.iter().copied().filter(|&b| b > a));
        let coefficients = bps.iter().map(|&b| self.local_at(b)).collect();
        Self { breakpoints: bps, coefficients }
    }

    /// Removes trailing zero coefficients (keeps at least one per piece).
    pub fn trim(mut self) -> Self {
        for c in &mut self.coefficients {
            let d = poly_degree(c);
            c.truncate(d + 1);
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_and_scale_roundtrip() {
        let p = vec![1.0, -2.0, 0.5, 3.0];
        let q = poly_shift(&p, 1.5);
        for &t in &[-1.0, 0.0, 0.7, 2.0] {
            assert!((poly_eval(&q, t) - poly_eval(&p, t + 1.5)).abs() < 1e-12);
        }
        let r = poly_scale_arg(&p, 2.0);
        assert!((poly_eval(&r, 0.3) - poly_eval(&p, 0.6)).abs() < 1e-12);
    }

    #[test]
    fn eval_uses_right_piece_at_breakpoints() {
        let h = PiecewisePoly::indicator(1.0, 2.0);
        assert_eq!(h.eval(0.999), 0.0);
        assert_eq!(h.eval(1.0), 1.0);
        assert_eq!(h.eval(2.0), 0.0);
        assert_eq!(h.eval_left(2.0), 1.0);
    }

    #[test]
    fn interval_indicator_first_antiderivative() {
        let (l, r) = (1.0, 3.0);
        let h = PiecewisePoly::indicator(l, r);
        let ht = h.antiderivative(0.0, 1, 4).unwrap();
        for &x in &[0.0, 0.5, 1.0, 2.2, 3.0, 7.5] {
            let want = if x < l { 0.0 } else if x <= r { x - l } else { r - l };
            assert!((ht.eval(x) - want).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn interval_indicator_second_antiderivative() {
        let (l, r) = (1.0, 3.0);
        let h = PiecewisePoly::indicator(l, r);
        let hh = h.antiderivative(0.0, 2, 4).unwrap();
        for &x in &[0.0, 0.5, 1.0, 2.2, 3.0, 7.5] {
            let want = if x < l {
                0.0
            } else if x <= r {
                0.5 * (x - l).powi(2)
            } else {
                (r - l) * (x - (r + l) / 2.0)
            };
            assert!((hh.eval(x) - want).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn power_generator_antiderivative() {
        let a = 1.3;
        for i in 1..=3usize {
            let g = PiecewisePoly::monomial_tail(i - 1, a);
            let gt = g.antiderivative(a, 1, 4).unwrap();
            for &x in &[a, 1.7, 4.0] {
                let want = (x.powi(i as i32) - a.powi(i as i32)) / i as f64;
                assert!((gt.eval(x) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn double_integral_of_monomial() {
        let a = 0.8;
        for k in 0..=2usize {
            let g = PiecewisePoly::monomial_tail(k, a).antiderivative(a, 2, 4).unwrap();
            for &x in &[a, 1.1, 3.0] {
                let kk = k as i32;
                let want = ((x.powi(kk + 2) - a.powi(kk + 2)) / (k + 2) as f64
                    - a.powi(kk + 1) * (x - a))
                    / (k + 1) as f64;
                assert!((g.eval(x) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn degree_overflow_is_rejected() {
        let g = PiecewisePoly::monomial_tail(3, 0.0);
        assert!(matches!(g.antiderivative(0.0, 2, 4), Err(Error::DegreeOverflow { .. })));
    }

    #[test]
    fn integrate_matches_closed_form() {
        let p = PiecewisePoly::indicator(0.0, 2.0).mul(&PiecewisePoly::monomial_tail(1, 0.0));
        assert!((p.integrate(0.0, f64::INFINITY) - 2.0).abs() < 1e-12);
    }
}
