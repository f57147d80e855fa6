//! Moderate-deviation curves and superexponential-convergence trends of the
//! permuted averages, the bracket and the estimators.

use serde_json::{json, Value};

use super::config::{model_alpha, ExperimentConfig, ExperimentSpec, ResolvedFunctional, SuperexpTarget};
use super::stats::TailEstimate;
use super::{cell, permuted_tree, replication_seed, tree, try_replicate, Csv};
use crate::empirical::{permuted_means_on_grid, CompensatedSum};
use crate::error::{BmcError, Result};
use crate::exact::bounds::{speed_sequence, SpeedSequence, SpeedSetting};
use crate::functional::FunctionalKind;
use crate::inference::{least_squares, residual_moments};
use crate::kernels::Model;
use crate::tree::tree_size;

fn speed_report(model: &Model, func: Option<&ResolvedFunctional>, gamma: f64) -> Result<SpeedSequence> {
    let bounded = func.is_some_and(|f| f.sup_abs.is_some());
    let setting = if bounded {
        SpeedSetting::H1 {
            alpha: model_alpha(model)?,
        }
    } else {
        SpeedSetting::Hh2
    };
    speed_sequence(gamma, setting, 20)
}

/// `(n / b_n^2) ln p`, with censored cells at `ln(1/N)`.
fn normalized_log(n: u64, b: f64, t: &TailEstimate) -> f64 {
    n as f64 / (b * b) * t.ln_upper()
}

pub(crate) fn mdp(config: &ExperimentConfig) -> Result<(String, Value)> {
    let ExperimentSpec::Mdp {
        n_grid,
        x_grid,
        replications,
        gamma,
        pf2,
    } = &config.experiment
    else {
        unreachable!()
    };
    let model = config.model()?;
    let func = config.functional(&model)?;
    if func.kind() == FunctionalKind::Triangle && !func.conditionally_centered {
        return Err(BmcError::UnsupportedFunctional("triangle functionals need Pf = 0".into()));
    }
    let speed = speed_report(&model, Some(&func), *gamma)?;
    let b = |n: u64| (n as f64).powf(*gamma);
    let n_max = *n_grid.last().expect("validated");
    let sums: Vec<Vec<f64>> = try_replicate(*replications, |k| {
        let (pop, pi) = permuted_tree(&model, &func, n_max, replication_seed(config.seed, "mdp", k))?;
        let means = permuted_means_on_grid(&pop, &func.f, &pi, n_grid)?;
        Ok(means.iter().zip(n_grid).map(|(m, &n)| m * n as f64).collect())
    })?;
    let s2 = pf2.or(func.pf2);

    let mut csv = Csv::new(&["n", "x", "b_n", "count", "estimate", "stderr", "censored", "l_hat", "reference"]);
    let mut curves = Vec::new();
    for &x in x_grid {
        let mut l = Vec::new();
        let mut censored = Vec::new();
        for (j, &n) in n_grid.iter().enumerate() {
            let count = sums.iter().filter(|s| s[j] / b(n) >= x).count() as u64;
            let t = TailEstimate::new(count, *replications);
            let lh = normalized_log(n, b(n), &t);
            let reference = s2.map(|v| -x.max(0.0).powi(2) / (2.0 * v));
            csv.push(&[
                cell(n),
                cell(x),
                cell(b(n)),
                cell(t.count),
                cell(t.estimate),
                cell(t.stderr),
                cell(t.censored),
                cell(lh),
                reference.map(cell).unwrap_or_default(),
            ]);
            l.push(lh);
            censored.push(t.censored);
        }
        curves.push((x, l, censored));
    }
    // fixed n: nonincreasing in x wherever uncensored
    let monotone_in_x = (0..n_grid.len()).all(|j| {
        let column: Vec<f64> = curves.iter().filter(|c| !c.2[j]).map(|c| c.1[j]).collect();
        column.windows(2).all(|w| w[1] <= w[0] + 1e-12)
    });
    let at_zero = curves.iter().find(|c| c.0 == 0.0);
    let zero_tends_to_zero = at_zero.map(|c| {
        !c.2.iter().any(|v| *v) && c.1.windows(2).all(|w| w[1].abs() < w[0].abs())
    });
    let small_x = curves.iter().find(|c| c.0 > 0.0);
    let small_x_decreasing = small_x.map(|c| {
        let kept: Vec<f64> = c.1.iter().zip(&c.2).filter(|(_, z)| !**z).map(|(v, _)| *v).collect();
        kept.len() >= 2 && kept.windows(2).all(|w| w[1] < w[0])
    });
    let cond_led = match func.sup_abs {
        Some(sup) => json!(b(n_grid[0]) > sup),
        None => json!("not checked: unbounded functional"),
    };
    let summary = json!({
        "gamma": gamma,
        "pf2": s2,
        "speed": speed,
        "cond_led_bounded": cond_led,
        "curves": curves.iter().map(|(x, l, c)| json!({"x": x, "l_hat": l, "censored": c})).collect::<Vec<_>>(),
        "verdicts": {
            "monotone_in_x": monotone_in_x,
            "x0_tends_to_zero": zero_tends_to_zero,
            "small_x_decreasing_in_n": small_x_decreasing,
        },
    });
    Ok((csv.finish(), summary))
}

pub(crate) fn superexp(config: &ExperimentConfig) -> Result<(String, Value)> {
    let ExperimentSpec::Superexp {
        n_grid,
        depths,
        replications,
        gamma,
        delta,
        target,
        floor,
    } = &config.experiment
    else {
        unreachable!()
    };
    let model = config.model()?;
    let b = |n: u64| (n as f64).powf(*gamma);
    // per replication, the deviation |Z_n - z| at each grid point
    let (grid, deviations, func): (Vec<u64>, Vec<Vec<f64>>, Option<ResolvedFunctional>) = match target {
        SuperexpTarget::MeanFunctional | SuperexpTarget::Bracket => {
            let func = config.functional(&model)?;
            let n_max = *n_grid.last().expect("validated");
            let (pf2_fn, z) = if *target == SuperexpTarget::Bracket {
                (
                    Some(func.pf2_fn.clone().ok_or_else(|| {
                        BmcError::UnsupportedFunctional("no closed form for Pf^2".into())
                    })?),
                    func.require_pf2()?,
                )
            } else {
                (None, 0.0)
            };
            let devs = try_replicate(*replications, |k| {
                let (pop, pi) = permuted_tree(&model, &func, n_max, replication_seed(config.seed, "superexp", k))?;
                match &pf2_fn {
                    None => {
                        let means = permuted_means_on_grid(&pop, &func.f, &pi, n_grid)?;
                        Ok(means.iter().map(|m| (m - z).abs()).collect())
                    }
                    Some(g) => {
                        let mut acc = CompensatedSum::new();
                        let mut out = Vec::with_capacity(n_grid.len());
                        let mut done = 0usize;
                        for &n in n_grid {
                            for &i in &pi.images()[done..n as usize] {
                                acc.add(g.eval1(pop.at(i)));
                            }
                            done = n as usize;
                            out.push((acc.value() / n as f64 - z).abs());
                        }
                        Ok(out)
                    }
                }
            })?;
            (n_grid.clone(), devs, Some(func))
        }
        SuperexpTarget::ThetaHat | SuperexpTarget::Sigma2Rho => {
            let params = *model
                .as_bar()
                .ok_or_else(|| BmcError::InvalidParameter("estimator targets need a BAR model".into()))?;
            let theta = params.theta();
            let (s2, rho) = params.effective_noise_moments();
            let mut by_depth = Vec::new();
            for &r in depths {
                let label = format!("superexp/r{r}");
                let d: Vec<f64> = try_replicate(*replications, |k| {
                    let pop = tree(&model, r + 1, replication_seed(config.seed, &label, k))?;
                    let ls = match least_squares(&pop, r) {
                        Ok(ls) => ls,
                        // an undefined estimate counts as a deviation
                        Err(BmcError::DegenerateDesign(_)) => return Ok(f64::INFINITY),
                        Err(e) => return Err(e),
                    };
                    Ok(match target {
                        SuperexpTarget::ThetaHat => {
                            (0..4).map(|k| (ls.theta_hat[k] - theta[k]).abs()).fold(0.0, f64::max)
                        }
                        _ => match residual_moments(&pop, ls.theta_hat, r) {
                            Ok((s, p)) => (s - s2).abs().max((p - rho).abs()),
                            Err(BmcError::ZeroVariance(_)) => f64::INFINITY,
                            Err(e) => return Err(e),
                        },
                    })
                })?;
                by_depth.push(d);
            }
            let grid: Vec<u64> = depths.iter().map(|&r| tree_size(r)).collect();
            // transpose to per-replication rows
            let rows = (0..*replications as usize)
                .map(|k| by_depth.iter().map(|d| d[k]).collect())
                .collect();
            (grid, rows, None)
        }
    };
    let speed = speed_report(&model, func.as_ref(), *gamma)?;

    let mut csv = Csv::new(&["n", "delta", "count", "estimate", "stderr", "censored", "l_hat"]);
    let mut values = Vec::new();
    let mut censored = Vec::new();
    for (j, &n) in grid.iter().enumerate() {
        let count = deviations.iter().filter(|d| d[j] > *delta).count() as u64;
        let t = TailEstimate::new(count, *replications);
        let l = normalized_log(n, b(n), &t);
        csv.push(&[
            cell(n),
            cell(delta),
            cell(t.count),
            cell(t.estimate),
            cell(t.stderr),
            cell(t.censored),
            cell(l),
        ]);
        values.push(l);
        censored.push(t.censored);
    }
    // censored cells may only form a tail: once below 1/N the estimate is an upper bound
    let first_censored = censored.iter().position(|c| *c).unwrap_or(censored.len());
    let censored_tail_only = censored[first_censored..].iter().all(|c| *c);
    let uncensored = &values[..first_censored];
    let strictly_decreasing = uncensored.windows(2).all(|w| w[1] < w[0]);
    let below_floor = *censored.last().unwrap() || *values.last().unwrap() <= *floor;
    let fully_censored = censored.iter().all(|c| *c);
    let summary = json!({
        "target": target,
        "gamma": gamma,
        "delta": delta,
        "floor": floor,
        "speed": speed,
        "l_hat": values,
        "censored": censored,
        "verdicts": {
            "strictly_decreasing": strictly_decreasing && censored_tail_only,
            "consistent_with_minus_infinity": strictly_decreasing && censored_tail_only && below_floor,
            "fully_censored": fully_censored,
            "any_censored": first_censored < censored.len(),
        },
    });
    Ok((csv.finish(), summary))
}
