//! Exchange method for the semi-infinite dual.
//!
//! The master problem keeps the linear and second-order cone structure of
//! the dual but enforces `p_y(x) ≥ 0` only on a finite working set of points.
//! The most violated point of each piece is added until the constraint holds
//! everywhere up to the tolerance.

use super::cones::Cone;
use super::dual::DualProgram;
use super::ipm::{self, ConeProgram, IpmSettings, IpmStatus};
use super::polycheck::{check_poly_nonneg, NonnegCheck};
use crate::model::{poly_degree, poly_eval, poly_scale_arg, Status};

/// A point of the working set: piece index and local scaled coordinate
/// `t = (x − lo)/width`; `t = ∞` is the leading-coefficient cut of the tail.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutPoint {
    pub piece: usize,
    pub t: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct CuttingSettings {
    /// Violation tolerance relative to the scale of the objective.
    pub tol: f64,
    pub max_cuts: usize,
    /// Box on every dual variable that keeps early masters bounded.
    pub box_bound: f64,
    pub ipm: IpmSettings,
}

impl Default for CuttingSettings {
    fn default() -> Self {
        Self { tol: 1e-9, max_cuts: 500, box_bound: 1e6, ipm: IpmSettings::default() }
    }
}

#[derive(Clone, Debug)]
pub struct CuttingResult {
    /// Moment-side status: `Unbounded` when no dual point satisfies the cuts,
    /// `Infeasible` when the dual runs into the box.
    pub status: Status,
    pub value: f64,
    pub y: Vec<f64>,
    pub cuts: usize,
    pub rounds: usize,
    pub max_violation: f64,
    pub ipm_iterations: usize,
}

fn width(dp: &DualProgram, piece: usize) -> f64 {
    let p = &dp.pieces[piece];
    if p.hi.is_finite() {
        p.hi - p.lo
    } else {
        dp.tail_scale
    }
}

/// Normalised row `f·(base + coeffᵀy)`; returns `(f, f·base, f·coeff)`.
fn cut_row(dp: &DualProgram, cp: CutPoint) -> (f64, f64, Vec<f64>) {
    let p = &dp.pieces[cp.piece];
    let w = width(dp, cp.piece);
    let k = p.degree();
    if cp.t.is_infinite() {
        let f = w.powi(k as i32);
        let lead = |c: &[f64]| c.get(k).copied().unwrap_or(0.0) * f;
        return (f, lead(&p.base), p.terms.iter().map(|c| lead(c)).collect());
    }
    let f = (1.0 + cp.t).powi(-(k as i32));
    let x = cp.t * w;
    let ev = |c: &[f64]| if c.is_empty() { 0.0 } else { f * poly_eval(c, x) };
    (f, ev(&p.base), p.terms.iter().map(|c| ev(c)).collect())
}

/// Worst point of `p_y` on each piece in the normalised scale, if negative.
pub fn most_violated(dp: &DualProgram, y: &[f64]) -> Vec<(CutPoint, f64)> {
    let mut out = Vec::new();
    for (i, p) in dp.pieces.iter().enumerate() {
        let w = width(dp, i);
        let q = poly_scale_arg(&p.combine(y), w);
        let hi = if p.hi.is_finite() { 1.0 } else { f64::INFINITY };
        let k = p.degree();
        match check_poly_nonneg(&q, 0.0, hi) {
            NonnegCheck::Nonnegative { .. } => {}
            NonnegCheck::Violation { x, unbounded, .. } => {
                let t = if unbounded { f64::INFINITY } else { x };
                let v = if unbounded {
                    q[poly_degree(&q)].min(-f64::MIN_POSITIVE)
                } else {
                    poly_eval(&q, t) * (1.0 + t).powi(-(k as i32))
                };
                out.push((CutPoint { piece: i, t }, v));
            }
        }
    }
    out
}

/// Builds the finite master problem over the working set.
fn master(dp: &DualProgram, points: &[CutPoint], box_bound: Option<f64>) -> (ConeProgram, Vec<f64>) {
    let nv = dp.n_vars();
    let mut g = Vec::new();
    let mut h = Vec::new();
    for &i in &dp.nonneg {
        let mut row = vec![0.0; nv];
        row[i] = -1.0;
        g.push(row);
        h.push(0.0);
    }
    let mut factors = Vec::with_capacity(points.len());
    for &cp in points {
        let (f, b, c) = cut_row(dp, cp);
        g.push(c.iter().map(|v| -v).collect());
        h.push(b);
        factors.push(f);
    }
    if let Some(m) = box_bound {
        for i in 0..nv {
            for s in [1.0, -1.0] {
                let mut row = vec![0.0; nv];
                row[i] = s;
                g.push(row);
                h.push(m);
            }
        }
    }
    let mut cones = vec![Cone::NonNeg(g.len())];
    for soc in &dp.socs {
        let mut row = vec![0.0; nv];
        row[soc.head] = -1.0;
        g.push(row);
        h.push(0.0);
        for t in &soc.tail {
            let mut row = vec![0.0; nv];
            for &(j, w) in t {
                row[j] -= w;
            }
            g.push(row);
            h.push(0.0);
        }
        cones.push(Cone::Soc(1 + soc.tail.len()));
    }
    (ConeProgram { c: dp.objective.clone(), g, h, cones }, factors)
}

fn initial_points(dp: &DualProgram) -> Vec<CutPoint> {
    let mut pts = Vec::new();
    for (i, p) in dp.pieces.iter().enumerate() {
        if p.hi.is_finite() {
            pts.extend([0.0, 0.5, 1.0].map(|t| CutPoint { piece: i, t }));
        } else {
            pts.extend([0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 64.0, f64::INFINITY].map(|t| CutPoint { piece: i, t }));
        }
    }
    pts
}

pub fn cutting_plane_solve(dp: &DualProgram, settings: &CuttingSettings) -> CuttingResult {
    let mut points = initial_points(dp);
    let n0 = points.len();
    let scale = dp.objective.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut rounds = 0;
    let mut iters = 0;
    loop {
        rounds += 1;
        let (prog, _) = master(dp, &points, Some(settings.box_bound));
        let sol = ipm::solve(&prog, &settings.ipm);
        iters += sol.iterations;
        let base = CuttingResult {
            status: Status::Optimal,
            value: sol.pcost,
            y: sol.x.clone(),
            cuts: points.len() - n0,
            rounds,
            max_violation: 0.0,
            ipm_iterations: iters,
        };
        match sol.status {
            IpmStatus::Optimal => {}
            IpmStatus::PrimalInfeasible => {
                return CuttingResult { status: Status::Unbounded, value: f64::INFINITY, ..base }
            }
            IpmStatus::DualInfeasible => {
                return CuttingResult { status: Status::Infeasible, value: f64::NEG_INFINITY, ..base }
            }
            _ => return CuttingResult { status: Status::NumericalFailure, value: f64::NAN, ..base },
        }
        let viol = most_violated(dp, &sol.x);
        let worst = viol.iter().map(|v| -v.1).fold(0.0, f64::max);
        let done = worst <= settings.tol * scale;
        // a repeated point means the master cannot make further progress
        let fresh: Vec<CutPoint> = viol
            .iter()
            .filter(|(cp, v)| {
                -v > settings.tol * scale
                    && !points.iter().any(|q| q.piece == cp.piece && (q.t == cp.t || (q.t - cp.t).abs() <= 1e-12 * (1.0 + cp.t.abs())))
            })
            .map(|v| v.0)
            .collect();
        let at_box = sol.x.iter().any(|v| v.abs() >= 0.999 * settings.box_bound);
        if done || fresh.is_empty() {
            let status = if at_box { Status::Infeasible } else if done || worst <= 1e-7 * scale { Status::Optimal } else { Status::NumericalFailure };
            let value = if at_box { f64::NEG_INFINITY } else { base.value };
            return CuttingResult { status, value, max_violation: worst, ..base };
        }
        if points.len() - n0 + fresh.len() > settings.max_cuts {
            return CuttingResult { status: Status::NumericalFailure, max_violation: worst, ..base };
        }
        points.extend(fresh);
    }
}

/// Dual restricted to finitely many support points `xs ≥ a`; its conic dual
/// is the moment problem over distributions on `xs`.
#[derive(Clone, Debug)]
pub struct DiscreteSolution {
    pub status: Status,
    pub value: f64,
    /// Primal weights `(x_i, w_i)`.
    pub weights: Vec<(f64, f64)>,
    pub y: Vec<f64>,
}

pub fn solve_discretized(dp: &DualProgram, xs: &[f64], settings: &IpmSettings) -> DiscreteSolution {
    let points: Vec<CutPoint> = xs
        .iter()
        .map(|&x| {
            let i = dp.piece_index(x);
            CutPoint { piece: i, t: (x - dp.pieces[i].lo) / width(dp, i) }
        })
        .collect();
    let (prog, factors) = master(dp, &points, None);
    let sol = ipm::solve(&prog, settings);
    let off = dp.nonneg.len();
    let weights = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| (x, sol.z.get(off + i).copied().unwrap_or(0.0) * factors[i]))
        .collect();
    let (status, value) = match sol.status {
        IpmStatus::Optimal => (Status::Optimal, sol.dcost),
        IpmStatus::PrimalInfeasible => (Status::Unbounded, f64::INFINITY),
        IpmStatus::DualInfeasible => (Status::Infeasible, f64::NEG_INFINITY),
        _ => (Status::NumericalFailure, f64::NAN),
    };
    DiscreteSolution { status, value, weights, y: sol.x }
}
