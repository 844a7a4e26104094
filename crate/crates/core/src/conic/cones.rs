//! Nonnegative orthant, second-order cone and PSD cone (svec storage), with
//! Nesterov–Todd scaling and the Jordan-algebra helpers the IPM needs.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "size", rename_all = "snake_case")]
pub enum Cone {
    NonNeg(usize),
    Soc(usize),
    /// Order `p` symmetric matrix stored as svec of length p(p+1)/2.
    Psd(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::NonNeg(k) | Cone::Soc(k) => k,
            Cone::Psd(p) => p * (p + 1) / 2,
        }
    }

    pub fn degree(&self) -> usize {
        match *self {
            Cone::NonNeg(k) => k,
            Cone::Soc(_) => 1,
            Cone::Psd(p) => p,
        }
    }
}

/// svec index of entry (i, j) with i ≥ j, column-major lower triangle.
fn svec_index(p: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    j * p - j * (j + 1) / 2 + i
}

pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let p = m.nrows();
    let mut out = vec![0.0; p * (p + 1) / 2];
    for j in 0..p {
        for i in j..p {
            let f = if i == j { 1.0 } else { SQRT2 };
            out[svec_index(p, i, j)] = f * 0.5 * (m[(i, j)] + m[(j, i)]);
        }
    }
    out
}

pub fn smat(v: &[f64], p: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(p, p);
    for j in 0..p {
        for i in j..p {
            let x = v[svec_index(p, i, j)];
            if i == j {
                m[(i, i)] = x;
            } else {
                m[(i, j)] = x / SQRT2;
                m[(j, i)] = x / SQRT2;
            }
        }
    }
    m
}

pub fn svec_len(p: usize) -> usize {
    p * (p + 1) / 2
}

/// Index of the diagonal entry (i, i) in svec storage.
pub fn svec_diag(p: usize, i: usize) -> usize {
    svec_index(p, i, i)
}

pub fn svec_pos(p: usize, i: usize, j: usize) -> usize {
    svec_index(p, i, j)
}

pub fn identity(cone: &Cone, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    match *cone {
        Cone::NonNeg(_) => out.iter_mut().for_each(|v| *v = 1.0),
        Cone::Soc(_) => out[0] = 1.0,
        Cone::Psd(p) => (0..p).for_each(|i| out[svec_diag(p, i)] = 1.0),
    }
}

/// Smallest `t` such that `x + t e` lies on the boundary of the cone, i.e.
/// negative when `x` is interior.
pub fn max_violation(cone: &Cone, x: &[f64]) -> f64 {
    match *cone {
        Cone::NonNeg(_) => -x.iter().copied().fold(f64::INFINITY, f64::min),
        Cone::Soc(_) => norm(&x[1..]) - x[0],
        Cone::Psd(p) => -min_eig(&smat(x, p)),
    }
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jordan product `u ∘ v`.
pub fn jprod(cone: &Cone, u: &[f64], v: &[f64], out: &mut [f64]) {
    match *cone {
        Cone::NonNeg(_) => {
            for i in 0..u.len() {
                out[i] = u[i] * v[i];
            }
        }
        Cone::Soc(_) => {
            out[0] = dot(u, v);
            for i in 1..u.len() {
                out[i] = u[0] * v[i] + v[0] * u[i];
            }
        }
        Cone::Psd(p) => {
            let um = smat(u, p);
            let vm = smat(v, p);
            let w = (&um * &vm + &vm * &um) * 0.5;
            out.copy_from_slice(&svec(&w));
        }
    }
}

/// Solves `λ ∘ x = u` for `x`, where `λ` is a scaled point (diagonal for PSD).
pub fn jdiv(cone: &Cone, lambda: &[f64], u: &[f64], out: &mut [f64]) {
    match *cone {
        Cone::NonNeg(_) => {
            for i in 0..u.len() {
                out[i] = u[i] / lambda[i];
            }
        }
        Cone::Soc(_) => {
            let l0 = lambda[0];
            let det = l0 * l0 - dot(&lambda[1..], &lambda[1..]);
            let x0 = (l0 * u[0] - dot(&lambda[1..], &u[1..])) / det;
            out[0] = x0;
            for i in 1..u.len() {
                out[i] = (u[i] - x0 * lambda[i]) / l0;
            }
        }
        Cone::Psd(p) => {
            for j in 0..p {
                for i in j..p {
                    let k = svec_index(p, i, j);
                    let li = lambda[svec_diag(p, i)];
                    let lj = lambda[svec_diag(p, j)];
                    out[k] = 2.0 * u[k] / (li + lj);
                }
            }
        }
    }
}

/// Largest step `α ≥ 0` keeping `λ + α d` in the cone (λ interior, scaled).
pub fn max_step(cone: &Cone, lambda: &[f64], d: &[f64]) -> f64 {
    match *cone {
        Cone::NonNeg(_) => lambda
            .iter()
            .zip(d)
            .filter(|(_, &di)| di < 0.0)
            .map(|(l, di)| -l / di)
            .fold(f64::INFINITY, f64::min),
        Cone::Soc(_) => soc_step(lambda, d),
        Cone::Psd(p) => {
            let mut m = smat(d, p);
            for i in 0..p {
                for j in 0..p {
                    let s = (lambda[svec_diag(p, i)] * lambda[svec_diag(p, j)]).sqrt();
                    m[(i, j)] /= s;
                }
            }
            let e = min_eig(&m);
            if e < 0.0 {
                -1.0 / e
            } else {
                f64::INFINITY
            }
        }
    }
}

fn soc_step(x: &[f64], d: &[f64]) -> f64 {
    // (x0 + α d0)² − ‖x1 + α d1‖² = A α² + 2 B α + C
    let a = d[0] * d[0] - dot(&d[1..], &d[1..]);
    let b = x[0] * d[0] - dot(&x[1..], &d[1..]);
    let c = (x[0] * x[0] - dot(&x[1..], &x[1..])).max(0.0);
    let mut best = f64::INFINITY;
    if d[0] < 0.0 {
        best = -x[0] / d[0];
    }
    if a.abs() < 1e-300 {
        if b < 0.0 {
            best = best.min(-c / (2.0 * b));
        }
        return best;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return best;
    }
    let sq = disc.sqrt();
    let q = -(b + b.signum() * sq);
    let roots = [q / a, if q != 0.0 { c / q } else { f64::INFINITY }];
    for r in roots {
        if r > 0.0 && r.is_finite() {
            best = best.min(r);
        }
    }
    best
}

/// Nesterov–Todd scaling for one cone.
#[derive(Clone, Debug)]
pub enum Scaling {
    NonNeg { d: Vec<f64> },
    Soc { beta: f64, w: Vec<f64> },
    Psd { p: usize, r: DMatrix<f64>, rinv: DMatrix<f64> },
}

/// Builds the scaling `W` with `W z = W⁻ᵀ s = λ`; returns `None` if a point
/// is not strictly interior.
pub fn nt_scaling(cone: &Cone, s: &[f64], z: &[f64]) -> Option<(Scaling, Vec<f64>)> {
    match *cone {
        Cone::NonNeg(_) => {
            if s.iter().chain(z).any(|&v| !(v > 0.0)) {
                return None;
            }
            let d: Vec<f64> = s.iter().zip(z).map(|(a, b)| (a / b).sqrt()).collect();
            let lambda = s.iter().zip(z).map(|(a, b)| (a * b).sqrt()).collect();
            Some((Scaling::NonNeg { d }, lambda))
        }
        Cone::Soc(k) => {
            let sn = s[0] * s[0] - dot(&s[1..], &s[1..]);
            let zn = z[0] * z[0] - dot(&z[1..], &z[1..]);
            if !(sn > 0.0 && zn > 0.0 && s[0] > 0.0 && z[0] > 0.0) {
                return None;
            }
            let (sq, zq) = (sn.sqrt(), zn.sqrt());
            let sb: Vec<f64> = s.iter().map(|v| v / sq).collect();
            let zb: Vec<f64> = z.iter().map(|v| v / zq).collect();
            let gamma = ((1.0 + dot(&sb, &zb)) / 2.0).sqrt();
            let mut w = vec![0.0; k];
            w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
            for i in 1..k {
                w[i] = (sb[i] - zb[i]) / (2.0 * gamma);
            }
            // W = β(2vvᵀ − J) with v the hyperbolic square root of w
            let f = (2.0 * (w[0] + 1.0)).sqrt();
            w[0] += 1.0;
            w.iter_mut().for_each(|x| *x /= f);
            let beta = (sq / zq).sqrt();
            let sc = Scaling::Soc { beta, w };
            let mut lambda = vec![0.0; k];
            sc.apply_w(z, &mut lambda);
            Some((sc, lambda))
        }
        Cone::Psd(p) => {
            let ls = smat(s, p).cholesky()?.l();
            let lz = smat(z, p).cholesky()?.l();
            let m = lz.transpose() * &ls;
            let svd = m.svd(true, true);
            let u = svd.u?;
            let vt = svd.v_t?;
            let sig = svd.singular_values;
            if sig.iter().any(|&x| !(x > 0.0)) {
                return None;
            }
            let isq = DMatrix::from_diagonal(&sig.map(|x| 1.0 / x.sqrt()));
            let r = &ls * vt.transpose() * &isq;
            let rinv = &isq * u.transpose() * lz.transpose();
            let mut lambda = vec![0.0; svec_len(p)];
            for i in 0..p {
                lambda[svec_diag(p, i)] = sig[i];
            }
            Some((Scaling::Psd { p, r, rinv }, lambda))
        }
    }
}

impl Scaling {
    /// `W v`.
    pub fn apply_w(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::NonNeg { d } => {
                for i in 0..v.len() {
                    out[i] = v[i] * d[i];
                }
            }
            Scaling::Soc { beta, w } => {
                let t = dot(w, v);
                out[0] = beta * (2.0 * w[0] * t - v[0]);
                for i in 1..v.len() {
                    out[i] = beta * (2.0 * w[i] * t + v[i]);
                }
            }
            Scaling::Psd { p, r, .. } => {
                let m = r.transpose() * smat(v, *p) * r;
                out.copy_from_slice(&svec(&m));
            }
        }
    }

    /// `Wᵀ v`.
    pub fn apply_wt(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Psd { p, r, .. } => {
                let m = r * smat(v, *p) * r.transpose();
                out.copy_from_slice(&svec(&m));
            }
            _ => self.apply_w(v, out),
        }
    }

    /// `W⁻¹ v`.
    pub fn apply_winv(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::NonNeg { d } => {
                for i in 0..v.len() {
                    out[i] = v[i] / d[i];
                }
            }
            Scaling::Soc { beta, w } => {
                // (1/β)(2 J w wᵀ J − J) v
                let jw0 = w[0];
                let t = jw0 * v[0] - dot(&w[1..], &v[1..]);
                out[0] = (2.0 * jw0 * t - v[0]) / beta;
                for i in 1..v.len() {
                    out[i] = (-2.0 * w[i] * t + v[i]) / beta;
                }
            }
            Scaling::Psd { p, rinv, .. } => {
                let m = rinv.transpose() * smat(v, *p) * rinv;
                out.copy_from_slice(&svec(&m));
            }
        }
    }

    /// `W⁻ᵀ v`.
    pub fn apply_winvt(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Scaling::Psd { p, rinv, .. } => {
                let m = rinv * smat(v, *p) * rinv.transpose();
                out.copy_from_slice(&svec(&m));
            }
            _ => self.apply_winv(v, out),
        }
    }
}
