//! Small statistics helpers for the experiments: tail frequencies with
//! censoring, least-squares lines, Kolmogorov-Smirnov against a continuous law.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::empirical::CompensatedSum;

/// Empirical probability of an event over `n` replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub count: u64,
    pub n: u64,
    pub estimate: f64,
    /// Binomial standard error `sqrt(p(1-p)/n)`.
    pub stderr: f64,
    /// No success observed: the estimate is only `< 1/n`.
    pub censored: bool,
}

impl TailEstimate {
    pub fn new(count: u64, n: u64) -> Self {
        assert!(n > 0 && count <= n);
        let p = count as f64 / n as f64;
        TailEstimate {
            count,
            n,
            estimate: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
            censored: count == 0,
        }
    }

    /// `1/n` when censored, the estimate otherwise.
    pub fn upper(&self) -> f64 {
        if self.censored {
            1.0 / self.n as f64
        } else {
            self.estimate
        }
    }

    /// `ln p`, never taken at zero: censored cells give `ln(1/n)`.
    pub fn ln_upper(&self) -> f64 {
        self.upper().ln()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<CompensatedSum>().value() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).collect::<CompensatedSum>().value() / (xs.len() as f64 - 1.0)
}

pub fn skewness(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Fitted line `y = intercept + slope x` with the slope's 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub points: usize,
    pub ci95: [f64; 2],
}

impl LineFit {
    pub fn excludes_zero(&self) -> bool {
        self.ci95[0] > 0.0 || self.ci95[1] < 0.0
    }
}

/// Ordinary least squares; needs at least three points for an interval.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_stderr, half) = if n > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        let se = (rss / (n as f64 - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, n as f64 - 2.0).expect("positive dof").inverse_cdf(0.975);
        (se, t * se)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Some(LineFit {
        slope,
        intercept,
        slope_stderr,
        points: n,
        ci95: [slope - half, slope + half],
    })
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").cdf(x)
}

/// Kolmogorov-Smirnov distance of a sample to a continuous cdf.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the one-sample KS statistic with Stephens'
/// small-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Sample covariance matrix of row vectors.
pub fn covariance<const D: usize>(rows: &[[f64; D]]) -> [[f64; D]; D] {
    let n = rows.len() as f64;
    let means: [f64; D] = std::array::from_fn(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n);
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            rows.iter().map(|r| (r[i] - means[i]) * (r[j] - means[j])).sum::<f64>() / (n - 1.0)
        })
    })
}
