//! Sum-of-squares reformulation of the piecewise nonnegativity constraint.
//!
//! A polynomial `p` of degree `k` is nonnegative on `[a, ∞)` iff
//! `p(a + s²) = zᵀVz` for some `V ⪰ 0` with `z = (1, s, …, s^k)`, and on
//! `[b, c]` iff `(1 + s²)^k p((b + c s²)/(1 + s²)) = zᵀWz`. Matching
//! coefficients gives linear identities on the anti-diagonal sums of `V`/`W`.
//! Each Gram matrix is parametrised over the null space of those identities,
//! so the resulting cone program has inequality rows only.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::cones::{smat, svec_len, svec_pos, Cone};
use super::dual::DualProgram;
use super::ipm::{self, ConeProgram, IpmSettings, IpmStatus};
use crate::error::{Error, Result};
use crate::model::{binom, poly_scale_arg, DEFAULT_MAX_DEGREE};

/// Right-hand sides `Σ_{r=l}^{k} C(r,l) y_r a^{r−l}`, `l = 0..=k`, for `[a, ∞)`.
pub fn halfline_identity_rhs(y: &[f64], a: f64) -> Vec<f64> {
    let k = y.len() - 1;
    (0..=k)
        .map(|l| (l..=k).map(|r| binom(r, l) * y[r] * a.powi((r - l) as i32)).sum())
        .collect()
}

/// Right-hand sides `Σ_m Σ_r C(r,m) C(k−r,l−m) y_r b^{r−m} c^m` for `[b, c]`.
#[allow(clippy::needless_range_loop)]
pub fn interval_identity_rhs(y: &[f64], b: f64, c: f64) -> Vec<f64> {
    let k = y.len() - 1;
    (0..=k)
        .map(|l| {
            let mut s = 0.0;
            for m in 0..=l {
                for r in m..=k {
                    if k - r < l - m {
                        continue;
                    }
                    s += binom(r, m) * binom(k - r, l - m) * y[r] * b.powi((r - m) as i32) * c.powi(m as i32);
                }
            }
            s
        })
        .collect()
}

/// Anti-diagonal sums `Σ_{i+j=l} V_ij`, `l = 0..=2k`.
pub fn antidiagonal_sums(v: &DMatrix<f64>) -> Vec<f64> {
    let p = v.nrows();
    let mut out = vec![0.0; 2 * p - 1];
    for i in 0..p {
        for j in 0..p {
            out[i + j] += v[(i, j)];
        }
    }
    out
}

/// Affine parametrisation `svec(V) = A_T·T + A_t·t` of all Gram matrices of
/// order `k+1` whose even anti-diagonal sums equal `T` and odd ones vanish.
#[derive(Clone, Debug)]
struct GramParam {
    p: usize,
    a_t: DMatrix<f64>,
    a_free: DMatrix<f64>,
}

impl GramParam {
    fn new(k: usize) -> Self {
        let p = k + 1;
        let len = svec_len(p);
        let mut frees = Vec::new();
        for l in 0..=2 * k {
            let lo = l.saturating_sub(k);
            let canon = l / 2;
            for i in lo..canon {
                frees.push((l, i));
            }
        }
        let mut a_t = DMatrix::zeros(len, k + 1);
        let mut a_free = DMatrix::zeros(len, frees.len());
        let sq2 = std::f64::consts::SQRT_2;
        for l in 0..=2 * k {
            let lo = l.saturating_sub(k);
            let canon = l / 2;
            let cj = l - canon;
            let mult_c = if canon == cj { 1.0 } else { 2.0 };
            let fc = if canon == cj { 1.0 } else { sq2 };
            let idx_c = svec_pos(p, cj, canon);
            if l % 2 == 0 {
                a_t[(idx_c, l / 2)] = fc / mult_c;
            }
            for i in lo..canon {
                let q = frees.iter().position(|&f| f == (l, i)).unwrap();
                let j = l - i;
                // off-diagonal free entry: contributes 2·t to the sum
                a_free[(svec_pos(p, j, i), q)] = sq2;
                a_free[(idx_c, q)] = -fc * 2.0 / mult_c;
            }
        }
        Self { p, a_t, a_free }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PieceBlock {
    pub order: usize,
    pub row_offset: usize,
    pub halfline: bool,
    /// Local coordinate is `t = (x − lo)/width`.
    pub width: f64,
}

/// Cone program produced from a dual program, plus bookkeeping to map back.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SosProgram {
    pub cone: ConeProgram,
    pub n_dual: usize,
    pub blocks: Vec<PieceBlock>,
}

pub fn sos_reformulate(dp: &DualProgram) -> Result<SosProgram> {
    let nv = dp.n_vars();
    let mut rows_g: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut h: Vec<f64> = Vec::new();
    let mut cones = Vec::new();

    if !dp.nonneg.is_empty() {
        for &i in &dp.nonneg {
            rows_g.push(vec![(i, -1.0)]);
            h.push(0.0);
        }
        cones.push(Cone::NonNeg(dp.nonneg.len()));
    }
    for soc in &dp.socs {
        rows_g.push(vec![(soc.head, -1.0)]);
        h.push(0.0);
        for t in &soc.tail {
            rows_g.push(t.iter().map(|&(j, w)| (j, -w)).collect());
            h.push(0.0);
        }
        cones.push(Cone::Soc(1 + soc.tail.len()));
    }

    let mut blocks = Vec::new();
    let mut n_free = 0usize;
    let mut params: Vec<(GramParam, usize)> = Vec::new();
    for piece in &dp.pieces {
        let k = piece.degree();
        if k > DEFAULT_MAX_DEGREE {
            return Err(Error::DegreeOverflow { got: k, max: DEFAULT_MAX_DEGREE });
        }
        let halfline = piece.hi.is_infinite();
        let width = if halfline { dp.tail_scale } else { piece.hi - piece.lo };
        let gp = GramParam::new(k);
        let rhs = |c: &[f64]| -> Vec<f64> {
            let mut q = poly_scale_arg(c, width);
            q.resize(k + 1, 0.0);
            q.truncate(k + 1);
            if halfline {
                halfline_identity_rhs(&q, 0.0)
            } else {
                interval_identity_rhs(&q, 0.0, 1.0)
            }
        };
        let t_base = nalgebra::DVector::from_vec(rhs(&piece.base));
        let h_block = &gp.a_t * t_base;
        let mut cols: Vec<(usize, nalgebra::DVector<f64>)> = Vec::new();
        for (j, term) in piece.terms.iter().enumerate() {
            if term.is_empty() || term.iter().all(|&v| v == 0.0) {
                continue;
            }
            cols.push((j, &gp.a_t * nalgebra::DVector::from_vec(rhs(term))));
        }
        let off = h.len();
        for r in 0..svec_len(gp.p) {
            let mut row = Vec::new();
            for (j, col) in &cols {
                if col[r] != 0.0 {
                    row.push((*j, -col[r]));
                }
            }
            for q in 0..gp.a_free.ncols() {
                let v = gp.a_free[(r, q)];
                if v != 0.0 {
                    row.push((nv + n_free + q, -v));
                }
            }
            rows_g.push(row);
            h.push(h_block[r]);
        }
        blocks.push(PieceBlock { order: gp.p, row_offset: off, halfline, width });
        cones.push(Cone::Psd(gp.p));
        let nf = gp.a_free.ncols();
        params.push((gp, n_free));
        n_free += nf;
    }

    let n = nv + n_free;
    let mut c = dp.objective.clone();
    c.resize(n, 0.0);
    let g = rows_g
        .into_iter()
        .map(|row| {
            let mut dense = vec![0.0; n];
            for (j, v) in row {
                dense[j] += v;
            }
            dense
        })
        .collect();
    Ok(SosProgram { cone: ConeProgram { c, g, h, cones }, n_dual: nv, blocks })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SosSolution {
    pub status: IpmStatus,
    /// Dual (upper-bound) objective.
    pub value: f64,
    /// Conic-dual objective: the moment-side value.
    pub moment_value: f64,
    pub y: Vec<f64>,
    pub grams: Vec<Vec<Vec<f64>>>,
    pub min_eig: f64,
    pub identity_residual: f64,
    pub iterations: usize,
    pub gap: f64,
    pub inaccurate: bool,
}

pub fn solve_sos(dp: &DualProgram, settings: &IpmSettings) -> Result<SosSolution> {
    let sp = sos_reformulate(dp)?;
    let sol = ipm::solve(&sp.cone, settings);
    let y: Vec<f64> = sol.x.iter().take(sp.n_dual).copied().collect();
    let mut grams = Vec::new();
    let mut min_eig = f64::INFINITY;
    let mut resid: f64 = 0.0;
    if sol.status == IpmStatus::Optimal {
        // recompute slacks exactly from x so the certificate matches y
        for (blk, piece) in sp.blocks.iter().zip(&dp.pieces) {
            let len = svec_len(blk.order);
            let s: Vec<f64> = (0..len)
                .map(|r| {
                    let row = &sp.cone.g[blk.row_offset + r];
                    sp.cone.h[blk.row_offset + r] - row.iter().zip(&sol.x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            let v = smat(&s, blk.order);
            let e = SymmetricEigen::new(v.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            let scale = v.abs().max().max(1.0);
            min_eig = min_eig.min(e / scale);
            let sums = antidiagonal_sums(&v);
            let k = blk.order - 1;
            let mut q = poly_scale_arg(&piece.combine(&y), blk.width);
            q.resize(k + 1, 0.0);
            let t = if blk.halfline { halfline_identity_rhs(&q, 0.0) } else { interval_identity_rhs(&q, 0.0, 1.0) };
            for (l, sum) in sums.iter().enumerate() {
                let want = if l % 2 == 0 { t[l / 2] } else { 0.0 };
                resid = resid.max((sum - want).abs() / scale);
            }
            grams.push((0..blk.order).map(|i| (0..blk.order).map(|j| v[(i, j)]).collect()).collect());
        }
    }
    Ok(SosSolution {
        status: sol.status,
        value: sol.pcost,
        moment_value: sol.dcost,
        y,
        grams,
        min_eig,
        identity_residual: resid,
        iterations: sol.iterations,
        gap: sol.gap,
        inaccurate: sol.inaccurate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::dual::{DualProgram, PolyPiece, VarRole};

    #[test]
    fn halfline_identity_at_l0_is_value_at_a() {
        let y = [0.3, -1.2, 0.7, 0.25];
        let a = 1.7;
        let rhs = halfline_identity_rhs(&y, a);
        let p_a: f64 = y.iter().enumerate().map(|(r, v)| v * a.powi(r as i32)).sum();
        assert!((rhs[0] - p_a).abs() < 1e-12);
        // every coefficient of p(a + s²) in s^{2l}
        let shifted = crate::model::poly_shift(&y, a);
        for l in 0..y.len() {
            assert!((rhs[l] - shifted[l]).abs() < 1e-12);
        }
    }

    #[test]
    fn interval_identity_matches_expansion() {
        // (1+s²)^k p((b + c s²)/(1+s²)) evaluated at a few s
        let y = [0.5, -0.2, 1.1];
        let (b, c) = (0.4, 2.5);
        let k = 2;
        let rhs = interval_identity_rhs(&y, b, c);
        for &s in &[0.0, 0.3, 1.0, 2.2] {
            let x = (b + c * s * s) / (1.0 + s * s);
            let lhs = (1.0 + s * s).powi(k) * crate::model::poly_eval(&y, x);
            let rhs_v: f64 = rhs.iter().enumerate().map(|(l, v)| v * s.powi(2 * l as i32)).sum();
            assert!((lhs - rhs_v).abs() < 1e-10);
        }
    }

    #[test]
    fn half_line_square_certificate() {
        // x² − 2x + 1 on [0, ∞): p(s²) = (s² − 1)², Gram over (1, s, s²)
        let v = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0]);
        let sums = antidiagonal_sums(&v);
        let rhs = halfline_identity_rhs(&[1.0, -2.0, 1.0], 0.0);
        assert_eq!(sums, vec![rhs[0], 0.0, rhs[1], 0.0, rhs[2]]);
        assert!(SymmetricEigen::new(v).eigenvalues.min() >= -1e-12);
    }

    fn fixed_poly_program(coeffs: Vec<f64>) -> DualProgram {
        // variable κ only; constraint p(x) + κ·0 ≥ 0 expressed via a dummy
        // κ with objective 0 so feasibility of the fixed polynomial decides.
        DualProgram {
            a: 0.0,
            roles: vec![VarRole::Kappa],
            nonneg: vec![0],
            objective: vec![1.0],
            socs: vec![],
            pieces: vec![PolyPiece { lo: 0.0, hi: f64::INFINITY, base: coeffs, terms: vec![vec![0.0]] }],
            case: None,
            order: 0,
            tail_scale: 1.0,
        }
    }

    #[test]
    fn perfect_square_has_certificate() {
        let sol = solve_sos(&fixed_poly_program(vec![1.0, -2.0, 1.0]), &IpmSettings::default()).unwrap();
        assert_eq!(sol.status, IpmStatus::Optimal);
        assert!(sol.min_eig >= -1e-8);
        assert!(sol.identity_residual <= 1e-8);
    }

    #[test]
    fn decreasing_line_has_no_certificate() {
        let sol = solve_sos(&fixed_poly_program(vec![1.0, -1.0]), &IpmSettings::default()).unwrap();
        assert_eq!(sol.status, IpmStatus::PrimalInfeasible);
    }

    #[test]
    fn gram_parametrisation_hits_targets() {
        for k in 0..=4 {
            let gp = GramParam::new(k);
            let t: Vec<f64> = (0..=k).map(|i| 1.0 + i as f64).collect();
            let free: Vec<f64> = (0..gp.a_free.ncols()).map(|q| 0.1 * q as f64 - 0.2).collect();
            let sv = &gp.a_t * nalgebra::DVector::from_vec(t.clone()) + &gp.a_free * nalgebra::DVector::from_vec(free);
            let v = smat(sv.as_slice(), k + 1);
            let sums = antidiagonal_sums(&v);
            for (l, s) in sums.iter().enumerate() {
                let want = if l % 2 == 0 { t[l / 2] } else { 0.0 };
                assert!((s - want).abs() < 1e-12, "k={k} l={l}");
            }
        }
    }
}
