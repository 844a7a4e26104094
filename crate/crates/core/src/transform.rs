//! Reduction of the shape-constrained problem to a moment problem on `[a, ∞)`.
//!
//! For a monotone tail the density is `f = η(1 − Q)` for a probability measure
//! `Q`, and for a convex tail `−f′ = ν(1 − Q)`. Integrating the objective and
//! generators once or twice from `a` turns expectations under the unknown
//! distribution into expectations under `Q`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{DroProblem, MomentSet, Objective, PiecewisePoly, SetBlock, ShapeSpec, DEFAULT_MAX_DEGREE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentProblem {
    pub a: f64,
    pub objective: PiecewisePoly,
    pub constraints: Vec<PiecewisePoly>,
    pub set: MomentSet,
    /// η for a monotone tail, ν for a convex tail, 1 otherwise.
    pub scale: f64,
    /// Total mass of the measure (1 for probability problems).
    pub mass: f64,
    /// When true the measure may also put mass strictly below `a`, where the
    /// objective and all constraints vanish (untransformed problems).
    pub mass_below: bool,
    pub order: u8,
}

impl MomentProblem {
    pub fn validate(&self) -> Result<()> {
        if self.constraints.len() != self.set.dim() {
            return invalid("set dimension must equal the number of constraint functions");
        }
        self.set.validate()
    }

    /// Expectations `(E_Q[H], E_Q[G])` of a discrete measure.
    pub fn expectations(&self, q: &[(f64, f64)]) -> (f64, Vec<f64>) {
        let h = q.iter().map(|&(x, w)| w * self.objective.eval(x)).sum();
        let g = self
            .constraints
            .iter()
            .map(|g| q.iter().map(|&(x, w)| w * g.eval(x)).sum())
            .collect();
        (h, g)
    }

    /// Same problem with `H` multiplied by `c`.
    pub fn with_objective_scaled(&self, c: f64) -> Self {
        Self { objective: self.objective.scale(c), ..self.clone() }
    }
}

pub fn objective_function(obj: &Objective) -> Result<PiecewisePoly> {
    match *obj {
        Objective::TailInterval { lo, hi } if hi > lo => Ok(PiecewisePoly::indicator(lo, hi)),
        Objective::TailInterval { lo, .. } => Ok(PiecewisePoly::zero(lo)),
        Objective::Quantile { .. } => invalid("quantile objectives are solved by bisection over intervals"),
    }
}

pub fn to_moment_problem(problem: &DroProblem) -> Result<MomentProblem> {
    problem.validate()?;
    let a = problem.a;
    let h = objective_function(&problem.objective)?;
    let g = &problem.moments.generators;
    let integrate = |p: &PiecewisePoly, order: usize, s: f64| -> Result<PiecewisePoly> {
        Ok(p.antiderivative(a, order, DEFAULT_MAX_DEGREE)?.scale(s))
    };
    let mp = match problem.shape {
        ShapeSpec::None => MomentProblem {
            a,
            objective: h,
            constraints: g.clone(),
            set: problem.moments.set.clone(),
            scale: 1.0,
            mass: 1.0,
            mass_below: true,
            order: 0,
        },
        ShapeSpec::Monotone { eta } => MomentProblem {
            a,
            objective: integrate(&h, 1, eta)?,
            constraints: g.iter().map(|gj| integrate(gj, 1, eta)).collect::<Result<_>>()?,
            set: problem.moments.set.clone(),
            scale: eta,
            mass: 1.0,
            mass_below: false,
            order: 1,
        },
        ShapeSpec::Convex { eta_lo, eta_hi, nu } => {
            let mut constraints = vec![PiecewisePoly::ramp_power(1, a).scale(nu)];
            for gj in g {
                constraints.push(integrate(gj, 2, nu)?);
            }
            let mut blocks = vec![SetBlock::Rectangle { lo: vec![eta_lo], hi: vec![eta_hi] }];
            blocks.extend(problem.moments.set.blocks.iter().cloned());
            MomentProblem {
                a,
                objective: integrate(&h, 2, nu)?,
                constraints,
                set: MomentSet { blocks },
                scale: nu,
                mass: 1.0,
                mass_below: false,
                order: 2,
            }
        }
    };
    mp.validate()?;
    Ok(mp)
}

/// Density on `[a, ∞)` corresponding to a finitely supported `Q`.
pub fn recover_density(q: &[(f64, f64)], shape: &ShapeSpec, a: f64) -> Result<PiecewisePoly> {
    if q.iter().any(|&(x, w)| x < a || w < 0.0 || !x.is_finite()) {
        return invalid("Q must be a nonnegative measure supported on [a, ∞)");
    }
    let mut pts: Vec<(f64, f64)> = q.to_vec();
    pts.sort_by(|l, r| l.0.partial_cmp(&r.0).unwrap());
    let mut bps = vec![a];
    bps.extend(pts.iter().map(|p| p.0).filter(|&x| x > a));
    bps.dedup();
    let coefficients: Vec<Vec<f64>> = match *shape {
        ShapeSpec::Monotone { eta } => bps
            .iter()
            .map(|&b| {
                let below: f64 = pts.iter().filter(|p| p.0 <= b).map(|p| p.1).sum();
                vec![eta * (1.0 - below)]
            })
            .collect(),
        ShapeSpec::Convex { nu, .. } => bps
            .iter()
            .map(|&b| {
                let above = pts.iter().filter(|p| p.0 > b);
                let c0: f64 = above.clone().map(|p| p.1 * (p.0 - b)).sum();
                let c1: f64 = above.map(|p| p.1).sum();
                vec![nu * c0, -nu * c1]
            })
            .collect(),
        ShapeSpec::None => return invalid("no density is implied without a shape constraint"),
    };
    PiecewisePoly::new(bps, coefficients)
}
