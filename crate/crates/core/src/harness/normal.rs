//! Normal approximations: the martingale CLT for a conditionally centered
//! functional and the joint CLT of the least-squares estimator.

use serde_json::{json, Value};

use super::config::{ExperimentConfig, ExperimentSpec};
use super::stats::{covariance, fit_line, ks_distance, ks_pvalue, mean, normal_cdf, skewness, variance, TailEstimate};
use super::{cell, replication_seed, tree, try_replicate, Csv};
use crate::empirical::sum_tree;
use crate::error::{BmcError, Result};
use crate::inference::{asymmetry_test, asymptotic_covariance, EstimatorReport};
use crate::tree::tree_size;

pub(crate) fn clt(config: &ExperimentConfig) -> Result<(String, Value)> {
    let ExperimentSpec::Clt {
        depth,
        replications,
        pf2,
        min_pvalue,
        variance_tolerance,
    } = &config.experiment
    else {
        unreachable!()
    };
    let model = config.model()?;
    let func = config.functional(&model)?;
    if !func.conditionally_centered {
        return Err(BmcError::UnsupportedFunctional(format!(
            "the martingale CLT needs Pf = 0; `{}` is not conditionally centered",
            func.f.name()
        )));
    }
    let s2 = match pf2 {
        Some(v) => *v,
        None => func.require_pf2()?,
    };
    let r = *depth;
    let scale = (tree_size(r) as f64 * s2).sqrt();
    let z: Vec<f64> = try_replicate(*replications, |k| {
        let pop = tree(&model, r + func.extra_depth(), replication_seed(config.seed, "clt", k))?;
        Ok(sum_tree(&pop, &func.f, r)? / scale)
    })?;

    let mut csv = Csv::new(&["x", "estimate", "stderr", "censored", "normal_cdf"]);
    let mut sorted = z.clone();
    sorted.sort_by(f64::total_cmp);
    for step in 0..=24 {
        let x = -3.0 + 0.25 * step as f64;
        let count = sorted.partition_point(|v| *v <= x) as u64;
        let t = TailEstimate::new(count, z.len() as u64);
        csv.push(&[cell(x), cell(t.estimate), cell(t.stderr), cell(false), cell(normal_cdf(x))]);
    }
    if z.len() < 2 {
        let summary = json!({
            "replications": z.len(),
            "insufficient_replications": true,
            "verdicts": {"normal": false, "unit_variance": false},
        });
        return Ok((csv.finish(), summary));
    }
    let d = ks_distance(&z, normal_cdf);
    let p = ks_pvalue(d, z.len());
    let var = variance(&z);
    let summary = json!({
        "replications": z.len(),
        "insufficient_replications": false,
        "depth": r,
        "pf2": s2,
        "ks_distance": d,
        "ks_pvalue": p,
        "mean": mean(&z),
        "variance": var,
        "variance_stderr": (2.0 / (z.len() as f64 - 1.0)).sqrt(),
        "skewness": skewness(&z),
        "verdicts": {
            "normal": p > *min_pvalue,
            "unit_variance": (var - 1.0).abs() <= *variance_tolerance,
        },
    });
    Ok((csv.finish(), summary))
}

fn frobenius(a: &[[f64; 4]; 4]) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn estimator_clt(config: &ExperimentConfig) -> Result<(String, Value)> {
    let ExperimentSpec::EstimatorClt {
        depths,
        replications,
        level,
        frobenius_tolerance,
    } = &config.experiment
    else {
        unreachable!()
    };
    let model = config.model()?;
    let params = *model
        .as_bar()
        .ok_or_else(|| BmcError::InvalidParameter("estimator-clt needs a BAR model".into()))?;
    let (sigma2, rho) = params.effective_noise_moments();
    let theta = params.theta();
    let target = asymptotic_covariance(theta, sigma2, rho)?;

    let mut csv = Csv::new(&["r", "quantity", "i", "j", "estimate", "stderr", "censored", "target"]);
    let mut per_depth = Vec::new();
    let mut errors = Vec::new();
    for &r in depths {
        let label = format!("estimator-clt/r{r}");
        let reports: Vec<EstimatorReport> = try_replicate(*replications, |k| {
            let pop = tree(&model, r + 1, replication_seed(config.seed, &label, k))?;
            EstimatorReport::from_population(&pop, r)
        })?;
        let root = (tree_size(r) as f64).sqrt();
        let rows: Vec<[f64; 4]> = reports
            .iter()
            .filter_map(|rep| rep.theta_hat)
            .map(|t| std::array::from_fn(|k| root * (t[k] - theta[k])))
            .collect();
        let degenerate = reports.len() - rows.len();
        if rows.len() < 2 {
            return Err(BmcError::DegenerateDesign(0.0));
        }
        let cov = covariance(&rows);
        let diff: [[f64; 4]; 4] = std::array::from_fn(|i| std::array::from_fn(|j| cov[i][j] - target.sigma_prime[i][j]));
        let rel = frobenius(&diff) / frobenius(&target.sigma_prime);
        let m = rows.len() as f64;
        let se = |i: usize, j: usize| ((cov[i][i] * cov[j][j] + cov[i][j] * cov[i][j]) / (m - 1.0)).sqrt();
        let mut cross_max = 0.0f64;
        for i in 0..4 {
            for j in 0..4 {
                if (i < 2) != (j < 2) {
                    cross_max = cross_max.max(cov[i][j].abs() / se(i, j));
                }
                csv.push(&[
                    cell(r),
                    "cov".into(),
                    cell(i),
                    cell(j),
                    cell(cov[i][j]),
                    cell(se(i, j)),
                    cell(false),
                    cell(target.sigma_prime[i][j]),
                ]);
            }
        }
        let chis: Vec<f64> = reports.iter().filter_map(|rep| rep.chi1).collect();
        let rejections = chis
            .iter()
            .map(|c| asymmetry_test(*c, *level).map(|d| d.reject as u64))
            .sum::<Result<u64>>()?;
        let rate = if chis.is_empty() {
            None
        } else {
            let t = TailEstimate::new(rejections, chis.len() as u64);
            csv.push(&[
                cell(r),
                "reject_rate".into(),
                String::new(),
                String::new(),
                cell(t.estimate),
                cell(t.stderr),
                cell(t.censored),
                cell(level),
            ]);
            Some(t)
        };
        errors.push(rel);
        per_depth.push(json!({
            "r": r,
            "used": rows.len(),
            "degenerate": degenerate,
            "relative_frobenius_error": rel,
            "cross_block_max_z": cross_max,
            "chi_available": chis.len(),
            "reject_rate": rate,
        }));
    }
    let last = *errors.last().expect("nonempty depths");
    // sampling error ~ sqrt(2/N) swamps the bias between neighbouring depths,
    // so the trend is the least-squares slope over the grid
    let trend = if depths.len() >= 2 {
        let x: Vec<f64> = depths.iter().map(|&r| f64::from(r)).collect();
        fit_line(&x, &errors).map(|f| f.slope)
    } else {
        None
    };
    let summary = json!({
        "theta": theta,
        "sigma2": sigma2,
        "rho": rho,
        "sigma_prime": target.sigma_prime,
        "level": level,
        "by_depth": per_depth,
        "error_slope_in_r": trend,
        "verdicts": {
            "frobenius_within_tolerance": last <= *frobenius_tolerance,
            "error_nonincreasing_in_r": trend.map(|s| s <= 0.0),
        },
    });
    Ok((csv.finish(), summary))
}
