//! Dense primal-dual interior-point method for
//!
//! ```text
//! minimize cᵀx  subject to  G x + s = h,  s ∈ K
//! maximize −hᵀz subject to  Gᵀz + c = 0,  z ∈ K*
//! ```
//!
//! on products of nonnegative, second-order and PSD cones. The iteration runs
//! on the homogeneous self-dual embedding with Nesterov–Todd scaling and a
//! Mehrotra predictor-corrector, so infeasibility and unboundedness come out
//! as certificates instead of diverging iterates. Each Newton system is
//! reduced to the `n × n` matrix `GᵀW⁻¹W⁻ᵀG` and factored by Cholesky.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cones::{self, dot, norm, Cone, Scaling};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeProgram {
    pub c: Vec<f64>,
    /// Row-major `m × n`.
    pub g: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub cones: Vec<Cone>,
}

impl ConeProgram {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.h.len()
    }

    pub fn check_dims(&self) -> Result<(), String> {
        let m: usize = self.cones.iter().map(Cone::dim).sum();
        if m != self.h.len() || self.g.len() != m {
            return Err(format!("cone dimension {m} vs {} rows", self.h.len()));
        }
        if self.g.iter().any(|r| r.len() != self.c.len()) {
            return Err("G has inconsistent row lengths".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpmStatus {
    Optimal,
    /// Certificate `z ⪰ 0, Gᵀz = 0, hᵀz < 0` found.
    PrimalInfeasible,
    /// Certificate `Gx ⪯ 0, cᵀx < 0` found.
    DualInfeasible,
    MaxIterations,
    NumericalError,
}

#[derive(Clone, Copy, Debug)]
pub struct IpmSettings {
    pub max_iter: usize,
    pub feastol: f64,
    pub abstol: f64,
    pub reltol: f64,
    /// Looser tolerances accepted when progress stalls.
    pub feastol_inacc: f64,
    pub reltol_inacc: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self {
            max_iter: 200,
            feastol: 1e-10,
            abstol: 1e-11,
            reltol: 1e-10,
            feastol_inacc: 1e-7,
            reltol_inacc: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IpmSolution {
    pub status: IpmStatus,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub z: Vec<f64>,
    pub pcost: f64,
    pub dcost: f64,
    pub gap: f64,
    pub pres: f64,
    pub dres: f64,
    pub iterations: usize,
    pub inaccurate: bool,
}

struct Layout {
    cones: Vec<Cone>,
    offsets: Vec<usize>,
    degree: usize,
}

impl Layout {
    fn new(cones: &[Cone]) -> Self {
        let mut offsets = Vec::with_capacity(cones.len());
        let mut off = 0;
        for c in cones {
            offsets.push(off);
            off += c.dim();
        }
        let degree = cones.iter().map(Cone::degree).sum();
        Self { cones: cones.to_vec(), offsets, degree }
    }

    fn blocks(&self) -> impl Iterator<Item = (usize, &Cone, std::ops::Range<usize>)> {
        self.cones.iter().enumerate().map(move |(k, c)| {
            let o = self.offsets[k];
            (k, c, o..o + c.dim())
        })
    }

    fn identity(&self, m: usize) -> Vec<f64> {
        let mut e = vec![0.0; m];
        for (_, c, r) in self.blocks() {
            cones::identity(c, &mut e[r]);
        }
        e
    }

    fn max_violation(&self, x: &[f64]) -> f64 {
        self.blocks().map(|(_, c, r)| cones::max_violation(c, &x[r])).fold(f64::NEG_INFINITY, f64::max)
    }

    fn jprod(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for (_, c, r) in self.blocks() {
            cones::jprod(c, &u[r.clone()], &v[r.clone()], &mut out[r]);
        }
        out
    }

    fn jdiv(&self, lambda: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for (_, c, r) in self.blocks() {
            cones::jdiv(c, &lambda[r.clone()], &u[r.clone()], &mut out[r]);
        }
        out
    }

    fn max_step(&self, lambda: &[f64], d: &[f64]) -> f64 {
        self.blocks()
            .map(|(_, c, r)| cones::max_step(c, &lambda[r.clone()], &d[r]))
            .fold(f64::INFINITY, f64::min)
    }
}

struct Scalings {
    w: Vec<Scaling>,
    lambda: Vec<f64>,
}

impl Scalings {
    fn apply(&self, layout: &Layout, v: &[f64], op: fn(&Scaling, &[f64], &mut [f64])) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (k, _, r) in layout.blocks() {
            op(&self.w[k], &v[r.clone()], &mut out[r]);
        }
        out
    }
}

fn scalings(layout: &Layout, s: &[f64], z: &[f64]) -> Option<Scalings> {
    let mut w = Vec::with_capacity(layout.cones.len());
    let mut lambda = vec![0.0; s.len()];
    for (_, c, r) in layout.blocks() {
        let (sc, l) = cones::nt_scaling(c, &s[r.clone()], &z[r.clone()])?;
        lambda[r].copy_from_slice(&l);
        w.push(sc);
    }
    Some(Scalings { w, lambda })
}

/// Factored reduced KKT system for one scaling.
struct Kkt {
    ghat: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    hmat: DMatrix<f64>,
}

impl Kkt {
    fn new(layout: &Layout, g: &DMatrix<f64>, sc: &Scalings) -> Option<Self> {
        let (m, n) = g.shape();
        let mut ghat = DMatrix::zeros(m, n);
        let mut col = vec![0.0; m];
        for j in 0..n {
            let gj: Vec<f64> = g.column(j).iter().copied().collect();
            for (k, _, r) in layout.blocks() {
                sc.w[k].apply_winvt(&gj[r.clone()], &mut col[r]);
            }
            ghat.column_mut(j).copy_from_slice(&col);
        }
        let hmat = ghat.transpose() * &ghat;
        let scale = (0..n).map(|i| hmat[(i, i)]).fold(0.0f64, f64::max).max(1e-300);
        let mut reg = 0.0;
        for _ in 0..8 {
            let mut hm = hmat.clone();
            if reg > 0.0 {
                for i in 0..n {
                    hm[(i, i)] += reg;
                }
            }
            if let Some(chol) = hm.cholesky() {
                return Some(Self { ghat, chol, hmat });
            }
            reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
        }
        None
    }

    /// Solves `Gᵀdz = bx`, `G dx − WᵀW dz = bz`; returns `(dx, W dz)`.
    fn solve(&self, layout: &Layout, sc: &Scalings, bx: &[f64], bz: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let wbz = DVector::from_vec(sc.apply(layout, bz, Scaling::apply_winvt));
        let rhs = DVector::from_column_slice(bx) + self.ghat.transpose() * &wbz;
        let mut dx = self.chol.solve(&rhs);
        for _ in 0..2 {
            let res = &rhs - &self.hmat * &dx;
            dx += self.chol.solve(&res);
        }
        let wdz = &self.ghat * &dx - wbz;
        (dx.iter().copied().collect(), wdz.iter().copied().collect())
    }
}

pub fn solve(prog: &ConeProgram, settings: &IpmSettings) -> IpmSolution {
    if let Err(msg) = prog.check_dims() {
        log::error!("cone program malformed: {msg}");
        return failure(prog, 0);
    }
    let n = prog.n();
    let m = prog.m();
    let layout = Layout::new(&prog.cones);
    let g = DMatrix::from_fn(m, n, |i, j| prog.g[i][j]);
    let c = &prog.c;
    let h = &prog.h;
    let resx0 = norm(c).max(1.0);
    let resz0 = norm(h).max(1.0);
    let e = layout.identity(m);

    // Initial point from the identity-scaled least-squares system.
    let (mut x, mut s, mut z) = {
        let ones = Scalings {
            w: layout
                .cones
                .iter()
                .map(|c| cones::nt_scaling(c, &cone_e(c), &cone_e(c)).unwrap().0)
                .collect(),
            lambda: e.clone(),
        };
        let kkt = match Kkt::new(&layout, &g, &ones) {
            Some(k) => k,
            None => return failure(prog, 0),
        };
        let (x0, wz) = kkt.solve(&layout, &ones, &vec![0.0; n], h);
        let s0: Vec<f64> = wz.iter().map(|v| -v).collect();
        let mc: Vec<f64> = c.iter().map(|v| -v).collect();
        let (_, z0) = kkt.solve(&layout, &ones, &mc, &vec![0.0; m]);
        (x0, s0, z0)
    };
    let shift = |v: &mut Vec<f64>| {
        let a = layout.max_violation(v);
        if a >= -1e-8 * (1.0 + norm(v)) {
            let t = 1.0 + a.max(0.0);
            for (vi, ei) in v.iter_mut().zip(&e) {
                *vi += t * ei;
            }
        }
    };
    shift(&mut s);
    shift(&mut z);
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let mut best: Option<IpmSolution> = None;
    let mut stall = 0usize;

    for iter in 0..=settings.max_iter {
        let gx: Vec<f64> = (&g * DVector::from_column_slice(&x)).iter().copied().collect();
        let gtz: Vec<f64> = (g.transpose() * DVector::from_column_slice(&z)).iter().copied().collect();
        let cx = dot(c, &x);
        let hz = dot(h, &z);
        let sz = dot(&s, &z);
        let rx: Vec<f64> = gtz.iter().zip(c).map(|(a, b)| a + b * tau).collect();
        let rz: Vec<f64> = (0..m).map(|i| s[i] + gx[i] - h[i] * tau).collect();
        let rt = kappa + cx + hz;
        let mu = (sz + tau * kappa) / (layout.degree as f64 + 1.0);

        let pcost = cx / tau;
        let dcost = -hz / tau;
        let gap = sz / (tau * tau);
        let pres = norm(&rz) / tau / resz0;
        let dres = norm(&rx) / tau / resx0;
        let relgap = if pcost < 0.0 {
            gap / -pcost
        } else if dcost > 0.0 {
            gap / dcost
        } else {
            f64::INFINITY
        };
        let cur = IpmSolution {
            status: IpmStatus::Optimal,
            x: x.iter().map(|v| v / tau).collect(),
            s: s.iter().map(|v| v / tau).collect(),
            z: z.iter().map(|v| v / tau).collect(),
            pcost,
            dcost,
            gap,
            pres,
            dres,
            iterations: iter,
            inaccurate: false,
        };
        if pres <= settings.feastol
            && dres <= settings.feastol
            && (gap <= settings.abstol || relgap <= settings.reltol || (pcost - dcost).abs() <= settings.abstol)
        {
            return cur;
        }
        // infeasibility certificates
        if hz < 0.0 {
            let pinf = norm(&gtz) / resx0 / (-hz);
            if pinf <= settings.feastol {
                return IpmSolution {
                    status: IpmStatus::PrimalInfeasible,
                    x: vec![f64::NAN; n],
                    s: vec![f64::NAN; m],
                    z: z.iter().map(|v| v / -hz).collect(),
                    pcost: f64::INFINITY,
                    dcost: f64::INFINITY,
                    iterations: iter,
                    ..cur
                };
            }
        }
        if cx < 0.0 {
            let r: Vec<f64> = gx.iter().zip(&s).map(|(a, b)| a + b).collect();
            let dinf = norm(&r) / resz0 / (-cx);
            if dinf <= settings.feastol {
                return IpmSolution {
                    status: IpmStatus::DualInfeasible,
                    x: x.iter().map(|v| v / -cx).collect(),
                    s: s.iter().map(|v| v / -cx).collect(),
                    z: vec![f64::NAN; m],
                    pcost: f64::NEG_INFINITY,
                    dcost: f64::NEG_INFINITY,
                    iterations: iter,
                    ..cur
                };
            }
        }
        let score = pres.max(dres).max(relgap.min(gap));
        let better = match &best {
            None => true,
            Some(b) => score < b.pres.max(b.dres).max(rel(b).min(b.gap)),
        };
        if better {
            best = Some(cur.clone());
            stall = 0;
        } else {
            stall += 1;
        }
        if iter == settings.max_iter || stall > 8 {
            break;
        }

        let sc = match scalings(&layout, &s, &z) {
            Some(v) => v,
            None => break,
        };
        let kkt = match Kkt::new(&layout, &g, &sc) {
            Some(k) => k,
            None => break,
        };
        let lambda = &sc.lambda;
        let mc: Vec<f64> = c.iter().map(|v| -v).collect();
        let (x1, wz1) = kkt.solve(&layout, &sc, &mc, h);
        let z1 = sc.apply(&layout, &wz1, Scaling::apply_winv);
        let denom = dot(c, &x1) + dot(h, &z1) - kappa / tau;

        // One Newton direction for given complementarity targets `ds_t`, `dk_t`.
        let direction = |eta: f64, ds_t: &[f64], dk_t: f64| {
            let bx: Vec<f64> = rx.iter().map(|v| -eta * v).collect();
            let wl = sc.apply(&layout, &layout.jdiv(lambda, ds_t), Scaling::apply_wt);
            let bz: Vec<f64> = (0..m).map(|i| -eta * rz[i] - wl[i]).collect();
            let (x2, wz2) = kkt.solve(&layout, &sc, &bx, &bz);
            let z2 = sc.apply(&layout, &wz2, Scaling::apply_winv);
            let dtau = (-eta * rt - dk_t / tau - dot(c, &x2) - dot(h, &z2)) / denom;
            let dx: Vec<f64> = x2.iter().zip(&x1).map(|(a, b)| a + dtau * b).collect();
            let wdz: Vec<f64> = wz2.iter().zip(&wz1).map(|(a, b)| a + dtau * b).collect();
            let dsw: Vec<f64> = layout.jdiv(lambda, ds_t).iter().zip(&wdz).map(|(a, b)| a - b).collect();
            let dkappa = (dk_t - kappa * dtau) / tau;
            (dx, wdz, dsw, dtau, dkappa)
        };
        let step_len = |wdz: &[f64], dsw: &[f64], dtau: f64, dkappa: f64| {
            let mut a = layout.max_step(lambda, dsw).min(layout.max_step(lambda, wdz));
            if dtau < 0.0 {
                a = a.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-kappa / dkappa);
            }
            a
        };

        let ll = layout.jprod(lambda, lambda);
        let ds_aff: Vec<f64> = ll.iter().map(|v| -v).collect();
        let (_, wdz_a, dsw_a, dtau_a, dkappa_a) = direction(1.0, &ds_aff, -tau * kappa);
        let alpha_aff = step_len(&wdz_a, &dsw_a, dtau_a, dkappa_a).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3);

        let corr = layout.jprod(&dsw_a, &wdz_a);
        let ds_c: Vec<f64> = (0..m).map(|i| -ll[i] - corr[i] + sigma * mu * e[i]).collect();
        let dk_c = -tau * kappa - dtau_a * dkappa_a + sigma * mu;
        let (dx, wdz, dsw, dtau, dkappa) = direction(1.0 - sigma, &ds_c, dk_c);
        let alpha = (0.99 * step_len(&wdz, &dsw, dtau, dkappa)).min(1.0);
        if !(alpha > 1e-14) || dx.iter().any(|v| !v.is_finite()) {
            break;
        }
        let dz = sc.apply(&layout, &wdz, Scaling::apply_winv);
        let ds = sc.apply(&layout, &dsw, Scaling::apply_wt);
        for i in 0..n {
            x[i] += alpha * dx[i];
        }
        for i in 0..m {
            s[i] += alpha * ds[i];
            z[i] += alpha * dz[i];
        }
        tau += alpha * dtau;
        kappa += alpha * dkappa;
        if !(tau > 0.0 && kappa > 0.0) {
            break;
        }
        // keep the embedding well scaled
        let nrm = (tau + kappa).max(1e-300);
        if !(1e-8..=1e8).contains(&nrm) {
            for v in x.iter_mut().chain(s.iter_mut()).chain(z.iter_mut()) {
                *v /= nrm;
            }
            tau /= nrm;
            kappa /= nrm;
        }
    }

    match best {
        Some(mut b)
            if b.pres <= settings.feastol_inacc
                && b.dres <= settings.feastol_inacc
                && (rel(&b) <= settings.reltol_inacc || b.gap <= settings.feastol_inacc) =>
        {
            b.inaccurate = true;
            b
        }
        Some(mut b) => {
            b.status = if b.iterations >= settings.max_iter {
                IpmStatus::MaxIterations
            } else {
                IpmStatus::NumericalError
            };
            b
        }
        None => failure(prog, 0),
    }
}

fn rel(b: &IpmSolution) -> f64 {
    if b.pcost < 0.0 {
        b.gap / -b.pcost
    } else if b.dcost > 0.0 {
        b.gap / b.dcost
    } else {
        f64::INFINITY
    }
}

fn cone_e(c: &Cone) -> Vec<f64> {
    let mut v = vec![0.0; c.dim()];
    cones::identity(c, &mut v);
    v
}

fn failure(prog: &ConeProgram, iterations: usize) -> IpmSolution {
    IpmSolution {
        status: IpmStatus::NumericalError,
        x: vec![f64::NAN; prog.n()],
        s: vec![f64::NAN; prog.m()],
        z: vec![f64::NAN; prog.m()],
        pcost: f64::NAN,
        dcost: f64::NAN,
        gap: f64::NAN,
        pres: f64::NAN,
        dres: f64::NAN,
        iterations,
        inaccurate: false,
    }
}
