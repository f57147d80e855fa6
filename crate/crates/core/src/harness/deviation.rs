//! Tail frequencies of empirical averages against the polynomial and
//! exponential deviation bounds.

use serde_json::{json, Value};

use super::config::{model_alpha, AverageScope, ExperimentConfig, ExperimentSpec};
use super::stats::{fit_line, variance, LineFit, TailEstimate};
use super::{cell, replicate, replication_seed, tree, Csv};
use crate::empirical::{mean_generation, mean_tree};
use crate::error::{BmcError, Result};
use crate::exact::bounds::{evaluate_bound, BoundFamily, BoundScope, BoundSpec};
use crate::tree::{layer_size, tree_size};

struct Cell {
    r: u32,
    delta: f64,
    size: f64,
    tail: TailEstimate,
}

fn fit_on_uncensored(cells: &[&Cell], x: impl Fn(&Cell) -> f64) -> Option<LineFit> {
    let kept: Vec<&&Cell> = cells.iter().filter(|c| !c.tail.censored).collect();
    let xs: Vec<f64> = kept.iter().map(|c| x(c)).collect();
    let ys: Vec<f64> = kept.iter().map(|c| c.tail.estimate.ln()).collect();
    fit_line(&xs, &ys)
}

pub(crate) fn run(config: &ExperimentConfig) -> Result<(String, Value)> {
    let ExperimentSpec::Deviation {
        depths,
        replications,
        deltas,
        delta_sd,
        scope,
        bound,
        alpha,
    } = &config.experiment
    else {
        unreachable!()
    };
    let model = config.model()?;
    let func = config.functional(&model)?;
    if let Some(m) = func.stationary_mean {
        if m.abs() > 1e-10 {
            return Err(BmcError::NotCentered(m));
        }
    }
    let n = *replications;
    let extra = func.extra_depth();

    // one independent batch of trees per depth
    let mut averages = Vec::with_capacity(depths.len());
    for &r in depths {
        let label = format!("deviation/r{r}");
        let values: Vec<f64> = replicate(n, |k| -> Result<f64> {
            let pop = tree(&model, r + extra, replication_seed(config.seed, &label, k))?;
            match scope {
                AverageScope::Tree => mean_tree(&pop, &func.f, r),
                AverageScope::Generation => mean_generation(&pop, &func.f, r),
            }
        })
        .into_iter()
        .collect::<Result<_>>()?;
        averages.push(values);
    }
    let sds: Vec<f64> = averages
        .iter()
        .map(|v| if v.len() > 1 { variance(v).sqrt() } else { 0.0 })
        .collect();
    let deltas: Vec<f64> = match delta_sd {
        Some(rule) => {
            let at = depths.iter().position(|&r| r == rule.depth).expect("validated");
            let d = rule.multiple * sds[at];
            if !(d > 0.0) {
                return Err(BmcError::DegenerateVariance(sds[at]));
            }
            vec![d]
        }
        None => deltas.clone(),
    };

    let alpha = match alpha {
        Some(a) => *a,
        None => model_alpha(&model)?,
    };
    let bound_scope = match scope {
        AverageScope::Tree => BoundScope::Tree,
        AverageScope::Generation => BoundScope::Generation,
    };
    let size = |r: u32| match scope {
        AverageScope::Tree => tree_size(r) as f64,
        AverageScope::Generation => layer_size(r) as f64,
    };

    let mut cells = Vec::new();
    for &delta in &deltas {
        for (idx, &r) in depths.iter().enumerate() {
            let count = averages[idx].iter().filter(|v| v.abs() > delta).count() as u64;
            cells.push(Cell {
                r,
                delta,
                size: size(r),
                tail: TailEstimate::new(count, n),
            });
        }
    }

    let mut csv = Csv::new(&[
        "r", "delta", "size", "count", "estimate", "stderr", "censored", "bound_shape", "bound", "regime",
    ]);
    let mut per_delta = Vec::new();
    let mut all_below = true;
    for &delta in &deltas {
        let row: Vec<&Cell> = cells.iter().filter(|c| c.delta == delta).collect();
        let poly = fit_on_uncensored(&row, |c| c.r as f64);
        let expo = fit_on_uncensored(&row, |c| c.size);
        let c_prime = match expo {
            Some(f) if f.slope < 0.0 => -f.slope / (delta * delta),
            _ => 1.0,
        };
        let spec = BoundSpec::new(*bound, bound_scope, alpha.max(0.0).min(1.0 - 1e-12))
            .with_delta(delta)
            .with_c_prime(c_prime);
        let shapes = row
            .iter()
            .map(|c| evaluate_bound(&spec, u64::from(c.r)))
            .collect::<Result<Vec<_>>>()?;
        let c_star = row
            .iter()
            .zip(&shapes)
            .map(|(c, s)| c.tail.estimate / s.value)
            .fold(0.0, f64::max);
        let mut below = true;
        for (c, s) in row.iter().zip(&shapes) {
            let b = c_star * s.value;
            below &= c.tail.estimate <= b * (1.0 + 1e-12);
            csv.push(&[
                cell(c.r),
                cell(c.delta),
                cell(c.size),
                cell(c.tail.count),
                cell(c.tail.estimate),
                cell(c.tail.stderr),
                cell(c.tail.censored),
                cell(s.value),
                cell(b),
                serde_json::to_value(s.regime).unwrap().as_str().unwrap().to_string(),
            ]);
        }
        all_below &= below;
        per_delta.push(json!({
            "delta": delta,
            "c_star": c_star,
            "c_prime": if *bound == BoundFamily::Expoineq { json!(c_prime) } else { Value::Null },
            "regime": shapes.first().map(|s| serde_json::to_value(s.regime).unwrap()),
            "fit_vs_r": poly,
            "log2_slope_vs_r": poly.map(|f| f.slope / std::f64::consts::LN_2),
            "fit_vs_size": expo,
            "censored_points": row.iter().filter(|c| c.tail.censored).count(),
            "below_fitted_bound": below,
        }));
    }
    let first = &per_delta[0];
    let expo_negative = first["fit_vs_size"]["slope"].as_f64().is_some_and(|s| s < 0.0)
        && first["fit_vs_size"]["ci95"][1].as_f64().is_some_and(|u| u < 0.0);
    let summary = json!({
        "alpha": alpha,
        "deltas": deltas,
        "depths": depths,
        "sd_by_depth": sds,
        "fits": per_delta,
        "verdicts": {
            "below_fitted_bound": all_below,
            "exponential_slope_negative": expo_negative,
        },
    });
    Ok((csv.finish(), summary))
}
