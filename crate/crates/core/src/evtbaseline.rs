//! Peaks-over-threshold baseline: GPD fit by maximum likelihood, a
//! delta-method upper bound for tail interval probabilities, and the mean
//! excess plot used to choose the threshold.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::TailSample;
use crate::stats::normal_quantile;

pub const MIN_EXCESSES: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    pub xi_hat: f64,
    pub sigma_hat: f64,
    /// Inverse observed information, order `(ξ, σ)`.
    pub covariance: [[f64; 2]; 2],
    pub n_exceed: usize,
    pub threshold: f64,
    pub loglik: f64,
    pub iterations: usize,
    /// `ξ̂ ≤ −0.5`: the usual asymptotics (and the delta method) do not apply.
    pub irregular: bool,
}

/// `(1 + 1/ξ)·log(1 + ξy)` and its partial derivatives in `ξ` and `y`.
fn phi(xi: f64, y: f64) -> (f64, f64, f64) {
    let t = xi * y;
    let dy = (xi + 1.0) / (1.0 + t);
    if t.abs() < 1e-4 {
        // φ = y + Σ_k c_k ξ^k with c_k = (−1)^{k+1}(y^k/k − y^{k+1}/(k+1))
        let (mut v, mut dv) = (y, 0.0);
        let mut yk = y;
        let mut xk = 1.0;
        for k in 1..=6 {
            let kf = k as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let c = sign * (yk / kf - yk * y / (kf + 1.0));
            dv += kf * c * xk;
            xk *= xi;
            v += c * xk;
            yk *= y;
        }
        (v, dv, dy)
    } else {
        let l = t.ln_1p();
        ((1.0 + 1.0 / xi) * l, -l / (xi * xi) + (1.0 + 1.0 / xi) * y / (1.0 + t), dy)
    }
}

/// GPD log-likelihood; `−∞` outside the support.
pub fn gpd_loglik(excesses: &[f64], xi: f64, sigma: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let mut s = -(excesses.len() as f64) * sigma.ln();
    for &x in excesses {
        let y = x / sigma;
        if 1.0 + xi * y <= 0.0 {
            return f64::NEG_INFINITY;
        }
        s -= phi(xi, y).0;
    }
    s
}

/// Gradient of [`gpd_loglik`] in `(ξ, σ)`.
pub fn gpd_gradient(excesses: &[f64], xi: f64, sigma: f64) -> [f64; 2] {
    let mut g = [0.0, -(excesses.len() as f64) / sigma];
    for &x in excesses {
        let y = x / sigma;
        let (_, dxi, dy) = phi(xi, y);
        g[0] -= dxi;
        g[1] += dy * y / sigma;
    }
    g
}

fn hessian(excesses: &[f64], xi: f64, sigma: f64) -> Matrix2<f64> {
    let hx = 1e-5;
    let hs = 1e-5 * sigma;
    let gp = gpd_gradient(excesses, xi + hx, sigma);
    let gm = gpd_gradient(excesses, xi - hx, sigma);
    let sp = gpd_gradient(excesses, xi, sigma + hs);
    let sm = gpd_gradient(excesses, xi, sigma - hs);
    let hxx = (gp[0] - gm[0]) / (2.0 * hx);
    let hss = (sp[1] - sm[1]) / (2.0 * hs);
    let hxs = 0.5 * ((gp[1] - gm[1]) / (2.0 * hx) + (sp[0] - sm[0]) / (2.0 * hs));
    Matrix2::new(hxx, hxs, hxs, hss)
}

/// Maximum-likelihood GPD fit by damped Newton with backtracking.
pub fn fit_gpd_mle(excesses: &[f64]) -> Result<GpdFit> {
    if excesses.len() < MIN_EXCESSES {
        return Err(Error::TooFewTailPoints { got: excesses.len(), need: MIN_EXCESSES });
    }
    if excesses.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return invalid("excesses must be positive and finite");
    }
    let n = excesses.len() as f64;
    let m = excesses.iter().sum::<f64>() / n;
    let v = excesses.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    // method of moments start, pulled into a safe range
    let mut xi = (0.5 * (1.0 - m * m / v)).clamp(-0.4, 0.9);
    let mut sigma = (0.5 * m * (1.0 + m * m / v)).max(1e-3 * m);
    let xmax = excesses.iter().copied().fold(0.0, f64::max);
    if 1.0 + xi * xmax / sigma <= 0.0 {
        xi = 0.0;
        sigma = m;
    }
    let mut ll = gpd_loglik(excesses, xi, sigma);
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..500 {
        iterations = it + 1;
        let g = gpd_gradient(excesses, xi, sigma);
        if (g[0].abs() + g[1].abs() * sigma) / n < 1e-11 {
            converged = true;
            break;
        }
        let h = hessian(excesses, xi, sigma);
        let newton = (-h).try_inverse().filter(|_| h[(0, 0)] < 0.0 && h.determinant() > 0.0).map(|inv| inv * nalgebra::Vector2::new(g[0], g[1]));
        // gradient step in (ξ, log σ) when the Hessian is not negative definite
        let dir = newton.unwrap_or_else(|| nalgebra::Vector2::new(g[0] / n, g[1] * sigma * sigma / n));
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let (nx, ns) = (xi + step * dir[0], sigma + step * dir[1]);
            if ns > 0.0 && nx > -1.0 {
                let nl = gpd_loglik(excesses, nx, ns);
                if nl.is_finite() && nl >= ll - 1e-12 * ll.abs() {
                    xi = nx;
                    sigma = ns;
                    moved = nl > ll || step * (dir[0].abs() + dir[1].abs() / sigma) < 1e-15;
                    ll = nl;
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            let g = gpd_gradient(excesses, xi, sigma);
            converged = (g[0].abs() + g[1].abs() * sigma) / n < 1e-7;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence(format!("GPD likelihood did not converge (ξ={xi}, σ={sigma})")));
    }
    let info = -hessian(excesses, xi, sigma);
    let cov = info.try_inverse().ok_or_else(|| Error::Degenerate("singular observed information".into()))?;
    Ok(GpdFit {
        xi_hat: xi,
        sigma_hat: sigma,
        covariance: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
        n_exceed: excesses.len(),
        threshold: 0.0,
        loglik: ll,
        iterations,
        irregular: xi <= -0.5,
    })
}

/// Fits the excesses of `sample` over `u`.
pub fn fit_above(sample: &TailSample, u: f64) -> Result<GpdFit> {
    let ex: Vec<f64> = sample.values().iter().filter(|&&x| x > u).map(|&x| x - u).collect();
    let mut fit = fit_gpd_mle(&ex)?;
    fit.threshold = u;
    Ok(fit)
}

/// GPD survival `Ḡ(y) = (1 + ξy/σ)^{−1/ξ}`.
pub fn gpd_sf(y: f64, xi: f64, sigma: f64) -> f64 {
    if y <= 0.0 {
        return 1.0;
    }
    if y.is_infinite() {
        return 0.0;
    }
    let t = xi * y / sigma;
    if t <= -1.0 {
        return 0.0;
    }
    if xi == 0.0 {
        (-y / sigma).exp()
    } else {
        (-t.ln_1p() / xi).exp()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PotBound {
    pub estimate: f64,
    pub se: f64,
    pub upper: f64,
    pub fit: GpdFit,
}

/// Point estimate `ζ[Ḡ(L−u) − Ḡ(R−u)]` with `ζ = N_u/n`, plus a one-sided
/// delta-method bound at level `1 − α` (clipped to `[0, 1]`).
pub fn pot_upper_bound(sample: &TailSample, u: f64, lo: f64, hi: f64, alpha: f64) -> Result<PotBound> {
    if !(lo >= u && hi >= lo) {
        return Err(Error::Precondition(format!("need u ≤ L ≤ R, got u={u}, L={lo}, R={hi}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid("alpha must lie in (0,1)");
    }
    let fit = fit_above(sample, u)?;
    if fit.irregular {
        return Err(Error::Degenerate(format!("ξ̂ = {} ≤ −0.5: delta method invalid", fit.xi_hat)));
    }
    let n = sample.n() as f64;
    let zeta = fit.n_exceed as f64 / n;
    let prob = |xi: f64, sigma: f64, zeta: f64| zeta * (gpd_sf(lo - u, xi, sigma) - gpd_sf(hi - u, xi, sigma));
    let (xi, sigma) = (fit.xi_hat, fit.sigma_hat);
    let estimate = prob(xi, sigma, zeta);
    let hx = 1e-6;
    let hs = 1e-6 * sigma;
    let d_xi = (prob(xi + hx, sigma, zeta) - prob(xi - hx, sigma, zeta)) / (2.0 * hx);
    let d_sigma = (prob(xi, sigma + hs, zeta) - prob(xi, sigma - hs, zeta)) / (2.0 * hs);
    let d_zeta = estimate / zeta;
    let c = fit.covariance;
    let var = d_xi * d_xi * c[0][0] + 2.0 * d_xi * d_sigma * c[0][1] + d_sigma * d_sigma * c[1][1]
        + d_zeta * d_zeta * zeta * (1.0 - zeta) / n;
    let se = var.max(0.0).sqrt();
    let upper = (estimate + normal_quantile(1.0 - alpha) * se).clamp(0.0, 1.0);
    Ok(PotBound { estimate, se, upper, fit })
}

/// `e(u) = mean(x − u | x > u)`.
pub fn mean_excess(values: &[f64], u: f64) -> Option<f64> {
    let ex: Vec<f64> = values.iter().filter(|&&x| x > u).map(|&x| x - u).collect();
    (!ex.is_empty()).then(|| ex.iter().sum::<f64>() / ex.len() as f64)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeanExcessPoint {
    pub u: f64,
    pub mean_excess: f64,
    pub exceedances: usize,
}

/// Mean excess at every order statistic with at least 10 exceedances.
pub fn mean_excess_curve(sample: &TailSample) -> Vec<MeanExcessPoint> {
    let v = sample.values();
    let n = v.len();
    // suffix sums give each point in O(1)
    let mut suffix = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + v[i];
    }
    let mut out: Vec<MeanExcessPoint> = Vec::new();
    for i in 0..n {
        let u = v[i];
        if out.last().is_some_and(|p| p.u == u) {
            continue;
        }
        let first_above = v.partition_point(|&x| x <= u);
        let k = n - first_above;
        if k < 10 {
            break;
        }
        out.push(MeanExcessPoint { u, mean_excess: suffix[first_above] / k as f64 - u, exceedances: k });
    }
    out
}

fn r_squared(pts: &[MeanExcessPoint]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 3 {
        return 0.0;
    }
    let mx = pts.iter().map(|p| p.u).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.mean_excess).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.u - mx) * (p.mean_excess - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.u - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.mean_excess - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return if syy == 0.0 { 1.0 } else { 0.0 };
    }
    sxy * sxy / (sxx * syy)
}

/// Least-squares slope of the mean excess against `u` over `pts`.
pub fn mean_excess_slope(pts: &[MeanExcessPoint]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.u).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.mean_excess).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.u - mx) * (p.mean_excess - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.u - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Smallest `u` whose downstream linear fit reaches `R² ≥ 0.98`.
    Linearity,
    /// No candidate reached the cut-off; the best `R²` was taken.
    BestFit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub u: f64,
    pub r2: f64,
    pub rule: ThresholdRule,
}

pub const R2_CUTOFF: f64 = 0.98;

/// Automated reading of the mean excess plot. Candidates have at least
/// [`MIN_EXCESSES`] exceedances and lie at or below `max_u`.
pub fn suggest_threshold(curve: &[MeanExcessPoint], max_u: f64) -> Option<ThresholdChoice> {
    let mut best: Option<ThresholdChoice> = None;
    for (i, p) in curve.iter().enumerate() {
        if p.exceedances < MIN_EXCESSES || p.u > max_u {
            continue;
        }
        let r2 = r_squared(&curve[i..]);
        if r2 >= R2_CUTOFF {
            return Some(ThresholdChoice { u: p.u, r2, rule: ThresholdRule::Linearity });
        }
        if best.is_none_or(|b| r2 > b.r2) {
            best = Some(ThresholdChoice { u: p.u, r2, rule: ThresholdRule::BestFit });
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, Pareto};

    #[test]
    fn exponential_limit_loglik() {
        let x = [0.5, 1.0, 2.0, 0.1];
        let m = x.iter().sum::<f64>() / 4.0;
        let want = -4.0 * m.ln() - 4.0;
        assert!((gpd_loglik(&x, 0.0, m) - want).abs() < 1e-12);
        // series and closed form agree across the switch
        assert!((gpd_loglik(&x, 2e-5, m) - gpd_loglik(&x, 2e-5 * (1.0 + 1e-9), m)).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x: Vec<f64> = (1..=50).map(|i| (i as f64 * 0.37).sin().abs() * 3.0 + 0.01).collect();
        for &(xi, s) in &[(0.3, 1.2), (1e-7, 0.9), (-0.2, 2.0), (5e-5, 1.0)] {
            let g = gpd_gradient(&x, xi, s);
            let h = 1e-6;
            let fx = (gpd_loglik(&x, xi + h, s) - gpd_loglik(&x, xi - h, s)) / (2.0 * h);
            let fs = (gpd_loglik(&x, xi, s + h) - gpd_loglik(&x, xi, s - h)) / (2.0 * h);
            assert!((g[0] - fx).abs() < 1e-4 * fx.abs().max(1.0), "ξ={xi}: {} vs {fx}", g[0]);
            assert!((g[1] - fs).abs() < 1e-4 * fs.abs().max(1.0));
        }
    }

    #[test]
    fn large_sample_fits() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let e: Vec<f64> = (0..100_000).map(|_| Exp::new(1.0).unwrap().sample(&mut rng)).collect();
        let f = fit_gpd_mle(&e).unwrap();
        assert!(f.xi_hat.abs() < 0.02 && (f.sigma_hat - 1.0).abs() < 0.02, "{f:?}");
        let p: Vec<f64> = (0..100_000).map(|_| Pareto::new(1.0, 1.5).unwrap().sample(&mut rng) - 1.0).filter(|&v| v > 0.0).collect();
        let f = fit_gpd_mle(&p).unwrap();
        assert!((f.xi_hat - 2.0 / 3.0).abs() < 0.03, "{f:?}");
        let g = gpd_gradient(&p, f.xi_hat, f.sigma_hat);
        assert!((g[0].abs() + g[1].abs() * f.sigma_hat) / p.len() as f64 <= 1e-6);
    }

    #[test]
    fn fit_is_scale_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..400).map(|_| Pareto::new(1.0, 3.0).unwrap().sample(&mut rng) - 1.0).filter(|&v| v > 0.0).collect();
        let a = fit_gpd_mle(&x).unwrap();
        let y: Vec<f64> = x.iter().map(|v| v * 7.5).collect();
        let b = fit_gpd_mle(&y).unwrap();
        assert!((a.xi_hat - b.xi_hat).abs() < 1e-6);
        assert!((b.sigma_hat / a.sigma_hat - 7.5).abs() < 1e-5);
    }

    #[test]
    fn pot_bound_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = TailSample::new((0..500).map(|_| Exp::new(1.0).unwrap().sample(&mut rng)).collect()).unwrap();
        let u = s.quantile(0.8);
        let zero = pot_upper_bound(&s, u, 3.0, 3.0, 0.05).unwrap();
        assert_eq!(zero.estimate, 0.0);
        let b = pot_upper_bound(&s, u, 3.0, 4.0, 0.05).unwrap();
        assert!(b.upper >= b.estimate && b.se > 0.0);
        let med = pot_upper_bound(&s, u, 3.0, 4.0, 0.5).unwrap();
        assert!((med.upper - med.estimate).abs() < 1e-12);
        assert!(pot_upper_bound(&s, u, u - 1.0, 4.0, 0.05).is_err());
    }

    #[test]
    fn mean_excess_examples() {
        assert_eq!(mean_excess(&[1.0, 2.0], 1.0), Some(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = TailSample::new((0..20_000).map(|_| Exp::new(1.0).unwrap().sample(&mut rng)).collect()).unwrap();
        let c = mean_excess_curve(&e);
        let mid: Vec<_> = c.iter().filter(|p| p.u < 3.0).collect();
        assert!(mid.iter().all(|p| (p.mean_excess - 1.0).abs() < 0.1));
        let p = TailSample::new((0..200_000).map(|_| Pareto::new(1.0, 3.0).unwrap().sample(&mut rng)).collect()).unwrap();
        let c = mean_excess_curve(&p);
        let body: Vec<MeanExcessPoint> = c.into_iter().filter(|q| q.u >= 1.2 && q.u <= 4.0).collect();
        assert!((mean_excess_slope(&body) - 0.5).abs() < 0.1, "{}", mean_excess_slope(&body));
        let choice = suggest_threshold(&mean_excess_curve(&e), f64::INFINITY).unwrap();
        assert!(choice.r2 > 0.0 && choice.u >= e.values()[0]);
    }
}
