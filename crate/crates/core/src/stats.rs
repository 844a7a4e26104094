//! Distribution functions used by calibration and the POT baseline.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

pub fn chi2_quantile(level: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64).expect("positive dof").inverse_cdf(level)
}

pub fn normal_quantile(level: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(level)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Limiting distribution of √n·sup|Fₙ − F|: `1 − 2 Σ (−1)^{k−1} e^{−2k²x²}`.
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut s = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (1.0 - 2.0 * s).clamp(0.0, 1.0)
}

pub fn kolmogorov_quantile(level: f64) -> f64 {
    assert!(level > 0.0 && level < 1.0);
    let (mut lo, mut hi) = (0.1, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_cdf(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Order statistic at 1-based index ⌈qB⌉ of an unsorted slice (q=0 gives the minimum).
pub fn empirical_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted_quantile(&v, q)
}

pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n−1); 0 for fewer than two points.
pub fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}
