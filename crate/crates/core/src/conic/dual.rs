//! Semi-infinite dual of a moment problem.
//!
//! For `max E_Q[H] s.t. E_Q[G] ∈ S` the dual is
//! `min mass·κ + σ_S(y) s.t. κ + yᵀG(x) − H(x) ≥ 0 for x ≥ a`, where `σ_S` is
//! the support function of `S`. Ellipsoid blocks contribute `λ + vᵀμ` with
//! `‖√r Lᵀv‖ ≤ λ` (Σ = LLᵀ); rectangle coordinates contribute
//! `λ₁μ̄ − λ₂μ̲` with `λ₁, λ₂ ≥ 0`, or a free multiplier when `μ̲ = μ̄`.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{poly_degree, poly_eval, sigma_matrix, DualRecord, SetBlock};
use crate::transform::MomentProblem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarRole {
    Kappa,
    /// SOC head of ellipsoid block `b`.
    Lambda(usize),
    /// Multiplier of constraint coordinate `j` inside an ellipsoid block.
    Ellip(usize),
    Upper(usize),
    Lower(usize),
    Equal(usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SocBlock {
    pub block: usize,
    pub head: usize,
    /// Tail entries as sparse linear forms in the dual variables.
    pub tail: Vec<Vec<(usize, f64)>>,
}

/// One polynomial piece of the semi-infinite constraint on `[lo, hi)`;
/// coefficients are in `x − lo`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyPiece {
    pub lo: f64,
    pub hi: f64,
    pub base: Vec<f64>,
    /// Coefficient polynomial for each dual variable (empty when absent).
    pub terms: Vec<Vec<f64>>,
}

impl PolyPiece {
    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .filter(|t| !t.is_empty())
            .map(|t| poly_degree(t))
            .chain(std::iter::once(poly_degree(&self.base)))
            .max()
            .unwrap_or(0)
    }

    /// Local coefficients of `p_y` on this piece.
    pub fn combine(&self, y: &[f64]) -> Vec<f64> {
        let k = self.degree();
        let mut out = vec![0.0; k + 1];
        for (r, v) in self.base.iter().enumerate().take(k + 1) {
            out[r] += v;
        }
        for (j, t) in self.terms.iter().enumerate() {
            for (r, v) in t.iter().enumerate().take(k + 1) {
                out[r] += y[j] * v;
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualProgram {
    pub a: f64,
    pub roles: Vec<VarRole>,
    pub nonneg: Vec<usize>,
    pub objective: Vec<f64>,
    pub socs: Vec<SocBlock>,
    pub pieces: Vec<PolyPiece>,
    /// Structural case 1–4 ((D,set) = (1,χ²), (1,KS), (2,χ²), (2,KS)), else `None`.
    pub case: Option<u8>,
    pub order: u8,
    /// Length unit used to rescale the unbounded last piece.
    pub tail_scale: f64,
}

impl DualProgram {
    pub fn n_vars(&self) -> usize {
        self.roles.len()
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        self.objective.iter().zip(y).map(|(c, v)| c * v).sum()
    }

    pub fn piece_index(&self, x: f64) -> usize {
        self.pieces.partition_point(|p| p.lo <= x).saturating_sub(1)
    }

    /// `p_y(x)` split into constant part and per-variable coefficients.
    pub fn row_at(&self, x: f64) -> (f64, Vec<f64>) {
        let p = &self.pieces[self.piece_index(x)];
        let t = x - p.lo;
        let coeffs = p.terms.iter().map(|c| if c.is_empty() { 0.0 } else { poly_eval(c, t) }).collect();
        (poly_eval(&p.base, t), coeffs)
    }

    pub fn eval(&self, y: &[f64], x: f64) -> f64 {
        let (b, c) = self.row_at(x);
        b + c.iter().zip(y).map(|(u, v)| u * v).sum::<f64>()
    }

    /// Maps a solution vector to the named multipliers (`u` is filled by [`fill_u`]).
    pub fn record(&self, y: &[f64]) -> DualRecord {
        let mut rec = DualRecord::default();
        let mut rect_seen = 0usize;
        for (i, role) in self.roles.iter().enumerate() {
            match role {
                VarRole::Kappa => rec.kappa = y[i],
                VarRole::Lambda(_) => rec.lambda.push(y[i]),
                VarRole::Ellip(_) => {}
                VarRole::Upper(_) => {
                    if self.order == 2 && rect_seen == 0 {
                        rec.delta1 = y[i];
                    } else {
                        rec.lambda1.push(y[i]);
                    }
                }
                VarRole::Lower(_) => {
                    if self.order == 2 && rect_seen == 0 {
                        rec.delta2 = y[i];
                        rect_seen += 1;
                    } else {
                        rec.lambda2.push(y[i]);
                    }
                }
                VarRole::Equal(j) => {
                    if self.order == 2 && *j == 0 {
                        rec.delta1 = y[i];
                        rect_seen += 1;
                    } else {
                        rec.free.push(y[i]);
                    }
                }
            }
        }
        rec
    }
}

pub fn dualize(mp: &MomentProblem) -> Result<DualProgram> {
    mp.validate()?;
    let a = mp.a;
    let mut roles = vec![VarRole::Kappa];
    let mut objective = vec![mp.mass];
    let mut nonneg = Vec::new();
    if mp.mass_below {
        nonneg.push(0);
    }
    let mut socs = Vec::new();
    // multiplier of constraint coordinate j as a sparse combination of variables
    let mut coord_mult: Vec<Vec<(usize, f64)>> = vec![Vec::new(); mp.constraints.len()];
    let mut coord = 0usize;
    let mut n_rect_blocks = 0;
    let mut n_ellip_blocks = 0;
    for (bi, block) in mp.set.blocks.iter().enumerate() {
        match block {
            SetBlock::Ellipsoid { mu, sigma, r } => {
                n_ellip_blocks += 1;
                let d = mu.len();
                let head = roles.len();
                roles.push(VarRole::Lambda(bi));
                objective.push(1.0);
                let first = roles.len();
                for (k, &m) in mu.iter().enumerate() {
                    roles.push(VarRole::Ellip(coord + k));
                    objective.push(m);
                    coord_mult[coord + k].push((first + k, 1.0));
                }
                let chol = sigma_matrix(sigma)
                    .cholesky()
                    .ok_or_else(|| crate::Error::Invalid("Σ not positive definite".into()))?;
                let l = chol.l();
                let sr = r.sqrt();
                // tail_i = √r Σ_j L[j][i] v_j
                let tail = (0..d)
                    .map(|i| (0..d).filter(|&j| l[(j, i)] != 0.0).map(|j| (first + j, sr * l[(j, i)])).collect())
                    .collect();
                socs.push(SocBlock { block: bi, head, tail });
                coord += d;
            }
            SetBlock::Rectangle { lo, hi } => {
                n_rect_blocks += 1;
                for k in 0..lo.len() {
                    let j = coord + k;
                    if lo[k] == hi[k] {
                        coord_mult[j].push((roles.len(), 1.0));
                        roles.push(VarRole::Equal(j));
                        objective.push(lo[k]);
                    } else {
                        coord_mult[j].push((roles.len(), 1.0));
                        nonneg.push(roles.len());
                        roles.push(VarRole::Upper(j));
                        objective.push(hi[k]);
                        coord_mult[j].push((roles.len(), -1.0));
                        nonneg.push(roles.len());
                        roles.push(VarRole::Lower(j));
                        objective.push(-lo[k]);
                    }
                }
                coord += lo.len();
            }
        }
    }
    let nv = roles.len();

    // common breakpoints from a
    let mut bps = vec![a];
    bps.extend(mp.objective.breakpoints().iter().copied().filter(|&b| b > a));
    for g in &mp.constraints {
        bps.extend(g.breakpoints().iter().copied().filter(|&b| b > a));
    }
    bps.sort_by(|x, y| x.partial_cmp(y).unwrap());
    bps.dedup();
    let pieces = bps
        .iter()
        .enumerate()
        .map(|(i, &lo)| {
            let hi = bps.get(i + 1).copied().unwrap_or(f64::INFINITY);
            let base: Vec<f64> = mp.objective.local_at(lo).iter().map(|v| -v).collect();
            let mut terms = vec![Vec::new(); nv];
            terms[0] = vec![1.0];
            for (j, g) in mp.constraints.iter().enumerate() {
                let local = g.local_at(lo);
                for &(var, w) in &coord_mult[j] {
                    let t = &mut terms[var];
                    if t.len() < local.len() {
                        t.resize(local.len(), 0.0);
                    }
                    for (r, v) in local.iter().enumerate() {
                        t[r] += w * v;
                    }
                }
            }
            PolyPiece { lo, hi, base, terms }
        })
        .collect::<Vec<_>>();
    if pieces.is_empty() {
        return invalid("no polynomial pieces");
    }
    let last = pieces.last().unwrap().lo;
    let tail_scale = if last > a { last - a } else { 1.0 };
    let case = match (mp.order, n_rect_blocks, n_ellip_blocks) {
        (1, 0, 1) => Some(1),
        (1, 1, 0) => Some(2),
        (2, 1, 1) => Some(3),
        (2, 2, 0) => Some(4),
        _ => None,
    };
    Ok(DualProgram { a, roles, nonneg, objective, socs, pieces, case, order: mp.order, tail_scale })
}

/// Symmetric square root of Σ, used to report `u`.
pub fn sym_sqrt(sigma: &[Vec<f64>]) -> nalgebra::DMatrix<f64> {
    let eig = SymmetricEigen::new(sigma_matrix(sigma));
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * nalgebra::DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Fills `record.u` with `√r Σ^{1/2} v` for each ellipsoid block.
pub fn fill_u(mp: &MomentProblem, dp: &DualProgram, y: &[f64], rec: &mut DualRecord) {
    rec.u.clear();
    for soc in &dp.socs {
        if let SetBlock::Ellipsoid { sigma, r, .. } = &mp.set.blocks[soc.block] {
            let first = soc.head + 1;
            let d = sigma.len();
            let v = nalgebra::DVector::from_iterator(d, (0..d).map(|k| y[first + k]));
            let u = sym_sqrt(sigma) * v * r.sqrt();
            rec.u.extend(u.iter().copied());
        }
    }
}
