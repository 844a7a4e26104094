//! Bound engine: closed forms, the full solve pipeline, quantile search,
//! multi-threshold combination, a primal grid oracle and sensitivity.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::conic::cones::Cone;
use crate::conic::cutting::{cutting_plane_solve, solve_discretized, CuttingSettings};
use crate::conic::dual::{dualize, fill_u, DualProgram, VarRole};
use crate::conic::ipm::{self, IpmSettings, IpmStatus};
use crate::conic::sos::{solve_sos, sos_reformulate};
use crate::error::{invalid, Error, Result};
use crate::model::{
    BoundResult, Diagnostics, DroProblem, MomentSet, MomentSpec, Objective, PiecewisePoly, SetBlock, ShapeSpec, Status,
};
use crate::transform::{to_moment_problem, MomentProblem};

/// Parameters of the convex-tail instance with known density `η`, slope `ν`
/// and tail mass `β` at `a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormParams {
    pub a: f64,
    pub b: f64,
    pub beta: f64,
    pub eta: f64,
    pub nu: f64,
}

impl ClosedFormParams {
    pub fn mu(&self) -> f64 {
        self.eta / self.nu
    }

    pub fn sigma(&self) -> f64 {
        2.0 * self.beta / self.nu
    }

    pub fn validate(&self) -> Result<()> {
        check_premise(self.beta, self.eta, self.nu)?;
        if !(self.b >= self.a) {
            return Err(Error::Precondition(format!("b = {} must be ≥ a = {}", self.b, self.a)));
        }
        Ok(())
    }

    /// The convex-tail DRO instance these parameters describe: `η̲ = η̄ = η`,
    /// the single generator `𝕀(x ≥ a)` pinned to `β`, objective `P(X ≥ b)`.
    pub fn problem(&self) -> Result<DroProblem> {
        let moments = MomentSpec {
            generators: vec![PiecewisePoly::indicator(self.a, f64::INFINITY)],
            set: MomentSet::single(SetBlock::Rectangle { lo: vec![self.beta], hi: vec![self.beta] }),
        };
        DroProblem::new(
            self.a,
            ShapeSpec::Convex { eta_lo: self.eta, eta_hi: self.eta, nu: self.nu },
            moments,
            Objective::TailInterval { lo: self.b, hi: f64::INFINITY },
        )
    }
}

fn check_premise(beta: f64, eta: f64, nu: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 1.0) || !(eta >= 0.0) || !(nu > 0.0) {
        return invalid("need β ∈ (0,1], η ≥ 0, ν > 0");
    }
    if eta * eta >= 2.0 * beta * nu {
        return Err(Error::Precondition(format!(
            "closed form needs η² < 2βν (η²={}, 2βν={})",
            eta * eta,
            2.0 * beta * nu
        )));
    }
    Ok(())
}

/// Worst-case `P(X ≥ b)` over convex tails with `f(a) = η`, `f′(a) ≥ −ν`, `P(X ≥ a) = β`.
pub fn closed_form_zstar(p: &ClosedFormParams) -> Result<f64> {
    p.validate()?;
    let (mu, sigma, d) = (p.mu(), p.sigma(), p.b - p.a);
    Ok(if mu <= d {
        0.5 * p.nu * (sigma - mu * mu)
    } else {
        0.5 * p.nu * (sigma - 2.0 * d * mu + d * d)
    })
}

/// Worst-case upper `p`-quantile for the same class; `+∞` once the tail can
/// hide mass at infinity.
pub fn closed_form_qstar(a: f64, p: f64, beta: f64, eta: f64, nu: f64) -> Result<f64> {
    check_premise(beta, eta, nu)?;
    if !(p < 1.0) || p < 1.0 - beta {
        return Err(Error::Precondition(format!("need 1−β ≤ p < 1, got p = {p}")));
    }
    // a few ulps of slack so the boundary level itself stays finite
    if p > 1.0 - beta + eta * eta / (2.0 * nu) + 4.0 * f64::EPSILON {
        return Ok(f64::INFINITY);
    }
    let mu = eta / nu;
    let sigma = 2.0 * beta / nu;
    let rad = (mu * mu - sigma + 2.0 * (1.0 - p) / nu).max(0.0);
    Ok(a + mu - rad.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Interior point on the SOS program, cutting plane if that fails.
    Auto,
    Sos,
    CuttingPlane,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub backend: Backend,
    pub ipm: IpmSettings,
    pub cutting: CuttingSettings,
    /// Writes the SOS cone program as JSON before solving.
    pub dump: Option<PathBuf>,
    /// Bisection tolerance of quantile searches, in units of the problem's length scale.
    pub quantile_tol: f64,
    /// Runs the grid oracle after each solve and flags gaps above 10⁻⁴.
    pub check_gap: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            backend: Backend::Auto,
            ipm: IpmSettings::default(),
            cutting: CuttingSettings::default(),
            dump: None,
            quantile_tol: 1e-9,
            check_gap: false,
        }
    }
}

impl SolveOptions {
    pub fn with_backend(backend: Backend) -> Self {
        Self { backend, ..Self::default() }
    }
}

fn status_of(s: IpmStatus) -> Status {
    match s {
        IpmStatus::Optimal => Status::Optimal,
        // no SOS certificate: the moment problem is unbounded
        IpmStatus::PrimalInfeasible => Status::Unbounded,
        IpmStatus::DualInfeasible => Status::Infeasible,
        _ => Status::NumericalFailure,
    }
}

fn special_value(status: Status, v: f64) -> f64 {
    match status {
        Status::Optimal => v,
        Status::Unbounded => f64::INFINITY,
        Status::Infeasible => f64::NEG_INFINITY,
        Status::NumericalFailure => f64::NAN,
    }
}

fn dump_program(dp: &DualProgram, path: &PathBuf) -> Result<()> {
    let sp = sos_reformulate(dp)?;
    let text = serde_json::to_string_pretty(&sp).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::Io(e.to_string()))
}

/// Solves a moment problem; `value` is the raw (unclipped) dual optimum.
pub fn solve_moment_problem(mp: &MomentProblem, opts: &SolveOptions) -> Result<BoundResult> {
    let start = Instant::now();
    let dp = dualize(mp)?;
    if let Some(path) = &opts.dump {
        dump_program(&dp, path)?;
    }
    let mut out = BoundResult::failed(mp.a, "");
    out.diagnostics.note = None;
    let mut done = false;
    if opts.backend != Backend::CuttingPlane {
        let sol = solve_sos(&dp, &opts.ipm)?;
        let status = status_of(sol.status);
        out.status = status;
        out.value = special_value(status, sol.value);
        out.diagnostics = Diagnostics {
            iterations: sol.iterations,
            gap: sol.gap,
            backend: "sos".into(),
            cuts: 0,
            note: sol.inaccurate.then(|| "reduced accuracy".to_string()),
        };
        if status == Status::Optimal {
            let mut rec = dp.record(&sol.y);
            fill_u(mp, &dp, &sol.y, &mut rec);
            out.dual = Some(rec);
        }
        done = status != Status::NumericalFailure && !(sol.inaccurate && opts.backend == Backend::Auto);
    }
    if !done {
        let r = cutting_plane_solve(&dp, &opts.cutting);
        out.status = r.status;
        out.value = special_value(r.status, r.value);
        out.diagnostics = Diagnostics {
            iterations: r.ipm_iterations,
            gap: r.max_violation,
            backend: "cutting_plane".into(),
            cuts: r.cuts,
            note: None,
        };
        out.dual = (r.status == Status::Optimal).then(|| {
            let mut rec = dp.record(&r.y);
            fill_u(mp, &dp, &r.y, &mut rec);
            rec
        });
    }
    if opts.check_gap && out.status == Status::Optimal {
        let span = mp.constraints.iter().chain([&mp.objective]).flat_map(|p| p.breakpoints().iter().copied()).fold(mp.a, f64::max);
        let x_max = mp.a + 100.0 * (span - mp.a).max(1.0);
        if let Ok(g) = primal_grid_oracle(mp, 2000, x_max) {
            if g.status == Status::Optimal && out.value - g.value > 1e-4 * out.value.abs().max(1.0) {
                out.diagnostics.note = Some(format!("conservative (weak-duality) bound: grid primal {:.6e}", g.value));
            }
        }
    }
    out.reported = out.value;
    out.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(out)
}

/// Worst-case `P(L ≤ X ≤ R)` over the problem's ambiguity set.
pub fn worst_case_tail_prob(problem: &DroProblem) -> Result<BoundResult> {
    worst_case_tail_prob_with(problem, &SolveOptions::default())
}

pub fn worst_case_tail_prob_with(problem: &DroProblem, opts: &SolveOptions) -> Result<BoundResult> {
    if !matches!(problem.objective, Objective::TailInterval { .. }) {
        return invalid("worst_case_tail_prob needs an interval objective");
    }
    let mp = to_moment_problem(problem)?;
    let mut res = solve_moment_problem(&mp, opts)?;
    res.threshold_used = problem.a;
    let cap = problem.mass_cap();
    res.reported = match res.status {
        Status::Optimal => res.value.clamp(0.0, cap),
        Status::Unbounded => cap,
        _ => f64::NAN,
    };
    Ok(res)
}

/// Natural length scale of a problem, used to start the quantile bracket.
pub fn length_unit(problem: &DroProblem) -> f64 {
    let beta = problem.mass_cap();
    let u = match problem.shape {
        ShapeSpec::Monotone { eta } if eta > 0.0 => beta / eta,
        ShapeSpec::Convex { eta_hi, nu, .. } if nu > 0.0 && eta_hi > 0.0 => eta_hi / nu,
        _ => problem.sample.as_ref().map(|s| s.std_dev()).unwrap_or(0.0),
    };
    if u.is_finite() && u > 0.0 {
        u
    } else {
        problem.a.abs().max(1.0)
    }
}

/// Robust upper `p`-quantile: the smallest `q ≥ a` whose worst-case
/// exceedance probability is at most `1 − p`.
pub fn worst_case_quantile(problem: &DroProblem, p: f64, nontail_cdf_at_a: f64) -> Result<BoundResult> {
    worst_case_quantile_with(problem, p, nontail_cdf_at_a, &SolveOptions::default())
}

pub fn worst_case_quantile_with(
    problem: &DroProblem,
    p: f64,
    nontail_cdf_at_a: f64,
    opts: &SolveOptions,
) -> Result<BoundResult> {
    if !(p > 0.0 && p < 1.0) {
        return invalid("quantile level must lie in (0,1)");
    }
    let start = Instant::now();
    let a = problem.a;
    let target = 1.0 - p;
    let mut iterations = 0usize;
    let finish = |value: f64, status: Status, iterations: usize, note: Option<String>| BoundResult {
        value,
        reported: value,
        status,
        threshold_used: a,
        dual: None,
        diagnostics: Diagnostics { iterations, gap: 0.0, backend: "bisection".into(), cuts: 0, note },
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    if p <= nontail_cdf_at_a {
        return Ok(finish(a, Status::Optimal, 0, Some("p below the non-tail mass".into())));
    }
    // returns Some(true) when q is already beyond the robust quantile
    let mut below = |q: f64| -> Result<Option<bool>> {
        let r = worst_case_tail_prob_with(&problem.with_objective(Objective::TailInterval { lo: q, hi: f64::INFINITY }), opts)?;
        iterations += r.diagnostics.iterations;
        Ok(match r.status {
            Status::Optimal | Status::Unbounded => Some(r.reported <= target),
            _ => None,
        })
    };
    match below(a)? {
        Some(true) => return Ok(finish(a, Status::Optimal, iterations, None)),
        Some(false) => {}
        None => return Ok(finish(f64::NAN, Status::NumericalFailure, iterations, Some("solver failed at q = a".into()))),
    }
    let unit = length_unit(problem);
    let mut lo = a;
    let mut step = unit;
    let mut hi = None;
    for _ in 0..60 {
        let q = a + step;
        match below(q)? {
            Some(true) => {
                hi = Some(q);
                break;
            }
            Some(false) => lo = q,
            None => {
                let note = format!("solver failed while bracketing at q = {q}; treated as unbounded");
                return Ok(finish(f64::INFINITY, Status::Unbounded, iterations, Some(note)));
            }
        }
        step *= 2.0;
    }
    let Some(mut hi) = hi else {
        return Ok(finish(f64::INFINITY, Status::Unbounded, iterations, Some("no finite quantile: mass can escape to infinity".into())));
    };
    let tol = opts.quantile_tol * unit;
    while hi - lo > tol.max(4.0 * f64::EPSILON * hi.abs()) {
        let mid = 0.5 * (lo + hi);
        match below(mid)? {
            Some(true) => hi = mid,
            Some(false) => lo = mid,
            None => return Ok(finish(f64::NAN, Status::NumericalFailure, iterations, Some(format!("solver failed at q = {mid}")))),
        }
    }
    Ok(finish(hi, Status::Optimal, iterations, None))
}

/// Smallest usable bound among per-threshold results.
pub fn min_over_thresholds(results: Vec<BoundResult>) -> Result<BoundResult> {
    results
        .into_iter()
        .filter(|r| matches!(r.status, Status::Optimal | Status::Unbounded) && !r.reported.is_nan())
        .min_by(|x, y| x.reported.partial_cmp(&y.reported).unwrap())
        .ok_or_else(|| Error::Solver("every threshold failed".into()))
}

/// Solves one problem per threshold and keeps the smallest bound.
pub fn multi_threshold_bound(problems: &[DroProblem]) -> Result<BoundResult> {
    multi_threshold_bound_with(problems, &SolveOptions::default())
}

pub fn multi_threshold_bound_with(problems: &[DroProblem], opts: &SolveOptions) -> Result<BoundResult> {
    if problems.is_empty() {
        return invalid("no problems given");
    }
    let results = crate::par::map_indexed(problems.len(), |i| worst_case_tail_prob_with(&problems[i], opts));
    min_over_thresholds(results.into_iter().filter_map(|r| r.ok()).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridOracle {
    pub status: Status,
    /// `E_Q[H]` of the optimal grid distribution.
    pub value: f64,
    pub weights: Vec<(f64, f64)>,
}

/// Geometric grid on `[a, x_max]` with `n` points, denser near `a`.
pub fn geometric_grid(a: f64, x_max: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![a];
    }
    let ratio = 1e3f64.powf(1.0 / (n as f64 - 2.0).max(1.0));
    let denom = ratio.powi(n as i32 - 1) - 1.0;
    (0..n).map(|i| a + (x_max - a) * (ratio.powi(i as i32) - 1.0) / denom).collect()
}

/// Geometric grid plus every breakpoint of `H` and `G` below `x_max`, each
/// with a neighbour just to its left. Extremal measures sit on breakpoints,
/// and at a jump only the left neighbour sees the left limit.
pub fn oracle_grid(mp: &MomentProblem, grid_size: usize, x_max: f64) -> Vec<f64> {
    let mut xs = geometric_grid(mp.a, x_max, grid_size);
    for f in std::iter::once(&mp.objective).chain(&mp.constraints) {
        for &b in f.breakpoints() {
            if b > mp.a && b <= x_max {
                xs.push(b);
                xs.push(b - 1e-9 * b.abs().max(1.0));
            }
        }
    }
    xs.retain(|&x| x >= mp.a);
    xs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    xs.dedup();
    xs
}

/// Best discrete distribution on [`oracle_grid`]: a lower bound on the optimum.
pub fn primal_grid_oracle(mp: &MomentProblem, grid_size: usize, x_max: f64) -> Result<GridOracle> {
    if grid_size == 0 || !(x_max >= mp.a) {
        return invalid("grid needs at least one point and x_max ≥ a");
    }
    let dp = dualize(mp)?;
    let xs = oracle_grid(mp, grid_size, x_max);
    let sol = solve_discretized(&dp, &xs, &IpmSettings::default());
    let weights: Vec<(f64, f64)> = sol.weights.into_iter().map(|(x, w)| (x, w.max(0.0))).collect();
    let value = match sol.status {
        Status::Optimal => mp.expectations(&weights).0,
        s => special_value(s, 0.0),
    };
    Ok(GridOracle { status: sol.status, value, weights })
}

/// Moment problem with every singleton parameter (mass first) moved by `ρ·dr`.
pub fn perturbed(mp: &MomentProblem, rho: f64, dr: &[f64]) -> Result<MomentProblem> {
    if dr.len() != 1 + mp.set.dim() {
        return invalid(format!("direction needs {} entries (mass first)", 1 + mp.set.dim()));
    }
    let mut out = mp.clone();
    out.mass += rho * dr[0];
    let mut j = 1;
    for b in &mut out.set.blocks {
        match b {
            SetBlock::Rectangle { lo, hi } => {
                for k in 0..lo.len() {
                    if lo[k] != hi[k] {
                        return Err(Error::Precondition("sensitivity needs an equality (singleton) moment set".into()));
                    }
                    lo[k] += rho * dr[j];
                    hi[k] = lo[k];
                    j += 1;
                }
            }
            SetBlock::Ellipsoid { .. } => {
                return Err(Error::Precondition("sensitivity needs an equality (singleton) moment set".into()))
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sensitivity {
    pub value: f64,
    /// `min drᵀy` over the dual optimal face.
    pub derivative: f64,
    pub y: Vec<f64>,
}

/// First-order change of the optimal value along `dr` (mass first, then the
/// set coordinates), from the auxiliary program over the optimal dual face.
pub fn sensitivity(mp: &MomentProblem, dr: &[f64]) -> Result<Sensitivity> {
    perturbed(mp, 0.0, dr)?;
    let dp = dualize(mp)?;
    let settings = IpmSettings::default();
    let base = solve_sos(&dp, &settings)?;
    if base.status != IpmStatus::Optimal {
        return Err(Error::Solver(format!("base problem not solved to optimality: {:?}", base.status)));
    }
    let v = base.value;
    // direction as an objective over the dual variables
    let mut obj = vec![0.0; dp.n_vars()];
    obj[0] = dr[0];
    for (i, role) in dp.roles.iter().enumerate() {
        if let VarRole::Equal(j) = role {
            obj[i] = dr[j + 1];
        }
    }
    if obj.iter().all(|&c| c == 0.0) {
        return Ok(Sensitivity { value: v, derivative: 0.0, y: base.y });
    }
    let sp = sos_reformulate(&dp)?;
    let mut prog = sp.cone.clone();
    let n = prog.c.len();
    let mut row = dp.objective.clone();
    row.resize(n, 0.0);
    // slack at the solver's own tolerance: the minimiser over a curved face
    // moves like √eps, so anything looser biases the derivative
    let eps = 1e-10 * v.abs().max(1.0);
    prog.g.insert(0, row);
    prog.h.insert(0, v + eps);
    prog.cones.insert(0, Cone::NonNeg(1));
    prog.c = obj.clone();
    prog.c.resize(n, 0.0);
    let sol = ipm::solve(&prog, &settings);
    match sol.status {
        IpmStatus::Optimal => {
            let y: Vec<f64> = sol.x[..dp.n_vars()].to_vec();
            Ok(Sensitivity { value: v, derivative: sol.pcost, y })
        }
        IpmStatus::DualInfeasible => Err(Error::Solver("unbounded optimal face along the direction".into())),
        s => {
            // fall back to the multipliers of the base solve
            log::warn!("auxiliary sensitivity program ended with {s:?}; using base multipliers");
            let d = obj.iter().zip(&base.y).map(|(c, y)| c * y).sum();
            Ok(Sensitivity { value: v, derivative: d, y: base.y })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cf(b: f64) -> ClosedFormParams {
        ClosedFormParams { a: 0.0, b, beta: 0.1, eta: 0.2, nu: 0.5 }
    }

    fn closed_form_problem(a: f64, b: f64, beta: f64, eta: f64, nu: f64) -> DroProblem {
        ClosedFormParams { a, b, beta, eta, nu }.problem().unwrap()
    }

    #[test]
    fn closed_form_examples() {
        assert!((closed_form_zstar(&cf(1.0)).unwrap() - 0.06).abs() < 1e-15);
        assert!((closed_form_zstar(&cf(0.2)).unwrap() - 0.07).abs() < 1e-15);
        assert!((closed_form_zstar(&cf(0.0)).unwrap() - 0.1).abs() < 1e-15);
        // radicand is 0 up to rounding of 0.94, and √ amplifies that to ~1e-8
        assert!((closed_form_qstar(0.0, 0.94, 0.1, 0.2, 0.5).unwrap() - 0.4).abs() < 1e-7);
        assert_eq!(closed_form_qstar(0.0, 0.96, 0.1, 0.2, 0.5).unwrap(), f64::INFINITY);
        assert!((closed_form_qstar(0.0, 0.9, 0.1, 0.2, 0.5).unwrap()).abs() < 1e-12);
        assert!(closed_form_qstar(0.0, 0.8, 0.1, 0.2, 0.5).is_err());
        assert!(closed_form_zstar(&ClosedFormParams { eta: 1.0, ..cf(1.0) }).is_err());
    }

    #[test]
    fn pipeline_matches_closed_form() {
        for &b in &[0.0, 0.1, 0.2, 0.35, 0.4, 1.0, 3.0] {
            let r = worst_case_tail_prob(&closed_form_problem(0.0, b, 0.1, 0.2, 0.5)).unwrap();
            let z = closed_form_zstar(&cf(b)).unwrap();
            assert_eq!(r.status, Status::Optimal);
            assert!((r.value - z).abs() <= 1e-6 * z, "b={b}: {} vs {z}", r.value);
        }
    }

    #[test]
    fn backends_agree_on_closed_form() {
        let p = closed_form_problem(1.0, 1.3, 0.2, 0.3, 0.7);
        let s = worst_case_tail_prob_with(&p, &SolveOptions::with_backend(Backend::Sos)).unwrap();
        let c = worst_case_tail_prob_with(&p, &SolveOptions::with_backend(Backend::CuttingPlane)).unwrap();
        assert_eq!(c.status, Status::Optimal);
        assert!((s.value - c.value).abs() <= 1e-6 * s.value, "{} vs {}", s.value, c.value);
    }

    #[test]
    fn quantile_matches_closed_form() {
        let prob = closed_form_problem(0.0, 0.0, 0.1, 0.2, 0.5);
        for &p in &[0.9, 0.91, 0.93, 0.95] {
            let r = worst_case_quantile(&prob, p, 0.9).unwrap();
            let q = closed_form_qstar(0.0, p, 0.1, 0.2, 0.5).unwrap();
            if q.is_infinite() {
                assert_eq!(r.value, f64::INFINITY);
            } else {
                assert!((r.value - q).abs() <= 1e-6 * q.max(1e-3), "p={p}: {} vs {q}", r.value);
            }
        }
        assert_eq!(worst_case_quantile(&prob, 0.5, 0.9).unwrap().value, 0.0);
    }

    #[test]
    fn multi_threshold_takes_minimum() {
        let ps = vec![closed_form_problem(0.0, 0.3, 0.1, 0.2, 0.5), closed_form_problem(0.1, 0.3, 0.08, 0.15, 0.5)];
        let r = multi_threshold_bound(&ps).unwrap();
        let each: Vec<f64> = ps.iter().map(|p| worst_case_tail_prob(p).unwrap().reported).collect();
        assert!((r.reported - each.iter().copied().fold(f64::INFINITY, f64::min)).abs() < 1e-12);
    }

    #[test]
    fn grid_oracle_below_dual() {
        let prob = closed_form_problem(0.0, 0.2, 0.1, 0.2, 0.5);
        let mp = to_moment_problem(&prob).unwrap();
        let g = primal_grid_oracle(&mp, 400, 10.0).unwrap();
        assert_eq!(g.status, Status::Optimal);
        assert!(g.value <= 0.07 + 1e-7);
        assert!(g.value > 0.06);
        let single = primal_grid_oracle(&mp, 1, 0.0).unwrap();
        assert!(single.status != Status::Optimal || single.value.abs() < 1e-9);
    }

    #[test]
    fn sensitivity_scaling_and_zero() {
        let mp = to_moment_problem(&closed_form_problem(0.0, 0.2, 0.1, 0.2, 0.5)).unwrap();
        let zero = sensitivity(&mp, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(zero.derivative, 0.0);
        let mu = [1.0, 0.2, 0.1];
        let s = sensitivity(&mp, &mu).unwrap();
        assert!((s.derivative - s.value).abs() < 1e-6 * s.value, "{} vs {}", s.derivative, s.value);
    }
}
