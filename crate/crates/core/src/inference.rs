//! Least-squares estimation for the bifurcating autoregression, residual
//! variance and sister correlation, the asymmetry statistic and its test, and
//! the asymptotic covariance matrices.

use nalgebra::{Matrix2, Matrix4};
use serde::Serialize;

use crate::empirical::CompensatedSum;
use crate::error::{BmcError, Result};
use crate::exact::bounds::{evaluate_bound, BoundFamily, BoundScope, BoundSpec};
use crate::simulate::TreePopulation;
use crate::tree::tree_size;

/// `B_r` at or below this is a degenerate design.
pub const DESIGN_TOL: f64 = 1e-12;
/// `sigma2_hat` at or below this is treated as zero.
pub const VARIANCE_TOL: f64 = 1e-14;
/// `|rho_hat|` may exceed 1 by this much from rounding before it is an error.
pub const RHO_SLACK: f64 = 1e-9;

/// `(a0, b0, a1, b1)` and the design moments of `T_r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeastSquares {
    pub depth: u32,
    pub theta_hat: [f64; 4],
    /// `M_{T_r}(x) / |T_r|`.
    pub a_r: f64,
    /// `M_{T_r}(x^2)/|T_r| - a_r^2`.
    pub b_r: f64,
}

fn check_depth(pop: &TreePopulation, r: u32) -> Result<()> {
    if pop.depth() < r + 1 {
        return Err(BmcError::InsufficientDepth {
            needed: r + 1,
            available: pop.depth(),
        });
    }
    Ok(())
}

/// Design moments `(A_r, B_r)` over `T_r`.
pub fn design_moments(pop: &TreePopulation, r: u32) -> Result<(f64, f64)> {
    if pop.depth() < r {
        return Err(BmcError::InsufficientDepth {
            needed: r,
            available: pop.depth(),
        });
    }
    let n = tree_size(r) as f64;
    let xs = &pop.values()[..tree_size(r) as usize];
    let a = xs.iter().copied().collect::<CompensatedSum>().value() / n;
    let m2 = xs.iter().map(|x| x * x).collect::<CompensatedSum>().value() / n;
    Ok((a, (m2 - a * a).max(0.0)))
}

/// Regression of each daughter on its mother over the mothers of `T_r`;
/// needs the population observed on `T_{r+1}`.
pub fn least_squares(pop: &TreePopulation, r: u32) -> Result<LeastSquares> {
    check_depth(pop, r)?;
    let (a_r, b_r) = design_moments(pop, r)?;
    if b_r <= DESIGN_TOL {
        return Err(BmcError::DegenerateDesign(b_r));
    }
    let n = tree_size(r) as f64;
    let mut sums = [(); 4].map(|_| CompensatedSum::new());
    for i in 1..=tree_size(r) {
        let (x, y, z) = pop.triangle(i);
        sums[0].add(y);
        sums[1].add(z);
        sums[2].add(x * y);
        sums[3].add(x * z);
    }
    let [my, mz, mxy, mxz] = sums.map(|s| s.value() / n);
    let alpha0 = (mxy - a_r * my) / b_r;
    let alpha1 = (mxz - a_r * mz) / b_r;
    Ok(LeastSquares {
        depth: r,
        theta_hat: [alpha0, my - alpha0 * a_r, alpha1, mz - alpha1 * a_r],
        a_r,
        b_r,
    })
}

/// Raw residual moments `(sum e0^2 + e1^2, sum e0 e1)` over the mothers of `T_r`.
fn residual_sums(pop: &TreePopulation, theta: [f64; 4], r: u32) -> (f64, f64) {
    let [a0, b0, a1, b1] = theta;
    let mut sq = CompensatedSum::new();
    let mut cross = CompensatedSum::new();
    for i in 1..=tree_size(r) {
        let (x, y, z) = pop.triangle(i);
        let e0 = y - a0 * x - b0;
        let e1 = z - a1 * x - b1;
        sq.add(e0 * e0 + e1 * e1);
        cross.add(e0 * e1);
    }
    (sq.value(), cross.value())
}

/// `sigma2_hat = (1/(2|T_r|)) sum (e0^2 + e1^2)`.
pub fn residual_variance(pop: &TreePopulation, theta: [f64; 4], r: u32) -> Result<f64> {
    check_depth(pop, r)?;
    Ok(residual_sums(pop, theta, r).0 / (2.0 * tree_size(r) as f64))
}

/// `(sigma2_hat, rho_hat)` with `rho_hat = sum e0 e1 / (|T_r| sigma2_hat)`.
/// A `rho_hat` within [`RHO_SLACK`] outside `[-1, 1]` is clipped; the flag
/// says whether that happened.
pub fn residual_moments_checked(pop: &TreePopulation, theta: [f64; 4], r: u32) -> Result<(f64, f64, bool)> {
    check_depth(pop, r)?;
    let n = tree_size(r) as f64;
    let (sq, cross) = residual_sums(pop, theta, r);
    let sigma2 = sq / (2.0 * n);
    if sigma2 <= VARIANCE_TOL {
        return Err(BmcError::ZeroVariance(sigma2));
    }
    let rho = cross / (n * sigma2);
    if rho.abs() > 1.0 + RHO_SLACK {
        return Err(BmcError::InvalidParameter(format!("rho_hat = {rho} outside [-1, 1]")));
    }
    let clipped = rho.abs() > 1.0;
    Ok((sigma2, rho.clamp(-1.0, 1.0), clipped))
}

pub fn residual_moments(pop: &TreePopulation, theta: [f64; 4], r: u32) -> Result<(f64, f64)> {
    residual_moments_checked(pop, theta, r).map(|(s, p, _)| (s, p))
}

/// First two moments of the stationary law of the tagged lineage.
pub fn stationary_moments(theta: [f64; 4], sigma2: f64) -> Result<(f64, f64)> {
    let [a0, b0, a1, b1] = theta;
    if !(a0.abs() < 1.0 && a1.abs() < 1.0) {
        return Err(BmcError::InvalidParameter(format!("slopes ({a0}, {a1}) need modulus < 1")));
    }
    let mu1 = 0.5 * (b0 + b1) / (1.0 - 0.5 * (a0 + a1));
    let s = 0.5 * (a0 * a0 + a1 * a1);
    let mu2 = ((a0 * b0 + a1 * b1) * mu1 + 0.5 * (b0 * b0 + b1 * b1) + sigma2) / (1.0 - s);
    Ok((mu1, mu2))
}

/// `(|T|/(2 sigma2)) {(da)^2 (mu2 - mu1^2) + (da mu1 + db)^2}` from its parts.
pub fn chi_square_from_parts(theta: [f64; 4], sigma2: f64, mu1: f64, mu2: f64, size: f64) -> Result<f64> {
    if !(sigma2 > VARIANCE_TOL) {
        return Err(BmcError::ZeroVariance(sigma2));
    }
    let var = mu2 - mu1 * mu1;
    if !(var > DESIGN_TOL) {
        return Err(BmcError::DegenerateVariance(var));
    }
    let da = theta[0] - theta[2];
    let db = theta[1] - theta[3];
    let shift = da * mu1 + db;
    Ok(size / (2.0 * sigma2) * (da * da * var + shift * shift))
}

/// Everything estimated from one tree at depth `r`. Fields that cannot be
/// computed (degenerate design, zero residual variance) are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorReport {
    pub depth: u32,
    pub theta_hat: Option<[f64; 4]>,
    pub sigma2_hat: Option<f64>,
    pub rho_hat: Option<f64>,
    pub mu1_hat: Option<f64>,
    pub mu2_hat: Option<f64>,
    pub a_r: f64,
    pub b_r: f64,
    pub chi1: Option<f64>,
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

impl EstimatorReport {
    /// Estimates from the population observed on `T_{r+1}`.
    pub fn from_population(pop: &TreePopulation, r: u32) -> Result<Self> {
        check_depth(pop, r)?;
        let (a_r, b_r) = design_moments(pop, r)?;
        let mut report = EstimatorReport {
            depth: r,
            theta_hat: None,
            sigma2_hat: None,
            rho_hat: None,
            mu1_hat: None,
            mu2_hat: None,
            a_r,
            b_r,
            chi1: None,
            degenerate: b_r <= DESIGN_TOL,
            warnings: Vec::new(),
        };
        if report.degenerate {
            report.warnings.push(format!("degenerate design: B_r = {b_r:e}"));
            return Ok(report);
        }
        let ls = least_squares(pop, r)?;
        report.theta_hat = Some(ls.theta_hat);
        let sigma2 = residual_variance(pop, ls.theta_hat, r)?;
        report.sigma2_hat = Some(sigma2);
        match residual_moments_checked(pop, ls.theta_hat, r) {
            Ok((_, rho, clipped)) => {
                report.rho_hat = Some(rho);
                if clipped {
                    report.warnings.push("rho_hat clipped to [-1, 1]".into());
                }
            }
            Err(e) => report.warnings.push(format!("rho_hat undefined: {e}")),
        }
        match stationary_moments(ls.theta_hat, sigma2) {
            Ok((m1, m2)) => {
                report.mu1_hat = Some(m1);
                report.mu2_hat = Some(m2);
                match chi_square_statistic(&report) {
                    Ok(chi) => report.chi1 = Some(chi),
                    Err(e) => report.warnings.push(format!("chi statistic undefined: {e}")),
                }
            }
            Err(e) => report.warnings.push(format!("stationary moments undefined: {e}")),
        }
        Ok(report)
    }

    /// The four estimated slopes and intercepts, or the reason they are missing.
    pub fn theta(&self) -> Result<[f64; 4]> {
        self.theta_hat.ok_or(BmcError::DegenerateDesign(self.b_r))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// The asymmetry statistic of a report.
pub fn chi_square_statistic(report: &EstimatorReport) -> Result<f64> {
    let theta = report.theta()?;
    let sigma2 = report.sigma2_hat.ok_or(BmcError::ZeroVariance(0.0))?;
    let (mu1, mu2) = match (report.mu1_hat, report.mu2_hat) {
        (Some(a), Some(b)) => (a, b),
        _ => stationary_moments(theta, sigma2)?,
    };
    chi_square_from_parts(theta, sigma2, mu1, mu2, tree_size(report.depth) as f64)
}

/// Decision of the asymmetry test against the chi-square law with two degrees
/// of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymmetryDecision {
    pub level: f64,
    pub threshold: f64,
    pub statistic: f64,
    pub reject: bool,
}

/// `1 - level` quantile of chi-square(2): `-2 ln(level)`.
pub fn chi2_two_quantile(level: f64) -> f64 {
    -2.0 * level.ln()
}

pub fn asymmetry_test(chi: f64, level: f64) -> Result<AsymmetryDecision> {
    if !(level > 0.0 && level < 1.0) {
        return Err(BmcError::InvalidParameter(format!("level {level} not in (0, 1)")));
    }
    let threshold = chi2_two_quantile(level);
    Ok(AsymmetryDecision {
        level,
        threshold,
        statistic: chi,
        reject: chi > threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticCovariance {
    pub k: [[f64; 2]; 2],
    pub sigma_prime: [[f64; 4]; 4],
    pub sigma_dprime: [[f64; 2]; 2],
}

fn to_rows<const N: usize>(m: impl Fn(usize, usize) -> f64) -> [[f64; N]; N] {
    std::array::from_fn(|i| std::array::from_fn(|j| m(i, j)))
}

impl AsymptoticCovariance {
    pub fn k_matrix(&self) -> Matrix2<f64> {
        Matrix2::from_fn(|i, j| self.k[i][j])
    }

    pub fn sigma_prime_matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| self.sigma_prime[i][j])
    }

    pub fn sigma_dprime_matrix(&self) -> Matrix2<f64> {
        Matrix2::from_fn(|i, j| self.sigma_dprime[i][j])
    }

    /// Symmetric, with all leading principal minors positive.
    pub fn is_positive_definite(&self) -> bool {
        let sym2 = |m: &Matrix2<f64>| (m - m.transpose()).abs().max() <= 1e-12 * m.abs().max();
        let sp = self.sigma_prime_matrix();
        let sym4 = (sp - sp.transpose()).abs().max() <= 1e-12 * sp.abs().max();
        let minors_positive = |n: usize, m: &nalgebra::DMatrix<f64>| {
            (1..=n).all(|k| m.view((0, 0), (k, k)).determinant() > 0.0)
        };
        let dyn2 = |m: Matrix2<f64>| nalgebra::DMatrix::from_fn(2, 2, |i, j| m[(i, j)]);
        sym2(&self.k_matrix())
            && sym2(&self.sigma_dprime_matrix())
            && sym4
            && minors_positive(2, &dyn2(self.k_matrix()))
            && minors_positive(2, &dyn2(self.sigma_dprime_matrix()))
            && minors_positive(4, &nalgebra::DMatrix::from_fn(4, 4, |i, j| sp[(i, j)]))
    }
}

/// `K`, `Sigma' = sigma2 [[K, rho K], [rho K, K]]` and `Sigma'' = 2 sigma2 (1 - rho) K`.
pub fn asymptotic_covariance(theta: [f64; 4], sigma2: f64, rho: f64) -> Result<AsymptoticCovariance> {
    let (mu1, mu2) = stationary_moments(theta, sigma2)?;
    let var = mu2 - mu1 * mu1;
    if !(var > DESIGN_TOL) {
        return Err(BmcError::DegenerateVariance(var));
    }
    let k = [[1.0 / var, -mu1 / var], [-mu1 / var, mu2 / var]];
    let sigma_prime = to_rows::<4>(|i, j| {
        let w = if (i < 2) == (j < 2) { 1.0 } else { rho };
        sigma2 * w * k[i % 2][j % 2]
    });
    let sigma_dprime = to_rows::<2>(|i, j| 2.0 * sigma2 * (1.0 - rho) * k[i][j]);
    Ok(AsymptoticCovariance {
        k,
        sigma_prime,
        sigma_dprime,
    })
}

/// Noise setting of the estimator deviation bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviationSetting {
    Gaussian,
    Bounded,
}

/// Constants of a deviation bound; the bounds fix them only up to the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationConstants {
    pub c: f64,
    pub c_prime: f64,
    pub c_double_prime: f64,
}

impl Default for DeviationConstants {
    fn default() -> Self {
        DeviationConstants {
            c: 1.0,
            c_prime: 1.0,
            c_double_prime: 1.0,
        }
    }
}

/// Bound on `P(|theta_hat - theta| > delta)` at depth `r`.
pub fn estimator_deviation_bound(
    alpha: f64,
    delta: f64,
    r: u32,
    setting: DeviationSetting,
    constants: DeviationConstants,
) -> Result<f64> {
    let family = match setting {
        DeviationSetting::Gaussian => BoundFamily::EstimatorDevGaussian,
        DeviationSetting::Bounded => BoundFamily::EstimatorDevBounded,
    };
    let spec = BoundSpec::new(family, BoundScope::Tree, alpha)
        .with_c(constants.c)
        .with_c_prime(constants.c_prime)
        .with_c_double_prime(constants.c_double_prime)
        .with_delta(delta);
    Ok(evaluate_bound(&spec, u64::from(r))?.value)
}
