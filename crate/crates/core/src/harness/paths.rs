//! Single-trajectory diagnostics: the LIL envelope, the endpoint almost-sure
//! CLT and the strong law along the permuted order.

use serde_json::{json, Value};

use super::config::{ExperimentConfig, ExperimentSpec};
use super::stats::normal_cdf;
use super::{cell, permuted_tree, replication_seed, tree, try_replicate, Csv};
use crate::empirical::{cumulative_tree_sums, eval_at, permuted_means_on_grid, CompensatedSum};
use crate::error::{BmcError, Result};
use crate::seed::PERMUTATION_STREAM;
use crate::tree::{generation, sample_permutation, tree_size};

/// `S_r = M / sqrt(2 |T_r| loglog|T_r| s2)`; zero when the sum is.
pub fn lil_statistic(sum: f64, size: u64, s2: f64) -> f64 {
    if sum == 0.0 {
        return 0.0;
    }
    let n = size as f64;
    sum / (2.0 * n * n.ln().ln() * s2).sqrt()
}

pub(crate) fn lil(config: &ExperimentConfig) -> Result<(String, Value)> {
    let ExperimentSpec::Lil {
        depth,
        replications,
        epsilon,
        window,
        min_fraction,
        pf2,
    } = &config.experiment
    else {
        unreachable!()
    };
    let model = config.model()?;
    let func = config.functional(&model)?;
    let s2 = match pf2 {
        Some(v) => *v,
        None => func.require_pf2()?,
    };
    if s2 <= 0.0 {
        return Err(BmcError::DegenerateVariance(s2));
    }
    let first = depth - window;
    let paths: Vec<Vec<f64>> = try_replicate(*replications, |k| {
        let pop = tree(&model, depth + func.extra_depth(), replication_seed(config.seed, "lil", k))?;
        let sums = cumulative_tree_sums(&pop, &func.f, *depth)?;
        Ok((2..=*depth)
            .map(|r| lil_statistic(sums[r as usize], tree_size(r), s2))
            .collect())
    })?;

    let mut csv = Csv::new(&["replication", "r", "s_r"]);
    let mut tail_max = Vec::with_capacity(paths.len());
    for (k, path) in paths.iter().enumerate() {
        for (j, s) in path.iter().enumerate() {
            csv.push(&[cell(k), cell(j + 2), cell(s)]);
        }
        let tail = &path[(first - 2) as usize..];
        tail_max.push(tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }
    let inside = tail_max.iter().filter(|m| **m <= 1.0 + epsilon).count();
    let fraction = inside as f64 / tail_max.len() as f64;
    let summary = json!({
        "pf2": s2,
        "window": [first, depth],
        "epsilon": epsilon,
        "tail_max": tail_max,
        "fraction_within": fraction,
        "verdicts": {
            "envelope": fraction >= *min_fraction,
        },
    });
    Ok((csv.finish(), summary))
}

/// Log-weighted occupation measure of `M_n / V_n`, `V_n = s sqrt(n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AscltMeasure {
    /// `M_n / V_n` for `n = 1..=N`.
    pub ratios: Vec<f64>,
    /// `1 - V_n^2 / V_{n+1}^2 = 1/(n+1)`.
    pub weights: Vec<f64>,
    /// `ln V_N^2`.
    pub log_vn2: f64,
}

impl AscltMeasure {
    pub fn new(partial_sums: &[f64], s2: f64) -> Result<Self> {
        let n = partial_sums.len();
        let log_vn2 = (s2 * n as f64).ln();
        if !(log_vn2 > 0.0) {
            return Err(BmcError::DegenerateVariance(s2 * n as f64));
        }
        let s = s2.sqrt();
        let ratios = partial_sums
            .iter()
            .enumerate()
            .map(|(j, m)| if *m == 0.0 { 0.0 } else { m / (s * ((j + 1) as f64).sqrt()) })
            .collect();
        let weights = (1..=n).map(|j| 1.0 / (j as f64 + 1.0)).collect();
        Ok(AscltMeasure {
            ratios,
            weights,
            log_vn2,
        })
    }

    /// `sum of weights / ln V_N^2`.
    pub fn normalization(&self) -> f64 {
        self.weights.iter().copied().collect::<CompensatedSum>().value() / self.log_vn2
    }

    /// `F(x)` with the `1/ln V_N^2` prefactor, as printed.
    pub fn cdf_raw(&self, x: f64) -> f64 {
        let mass: CompensatedSum = self
            .ratios
            .iter()
            .zip(&self.weights)
            .filter(|(r, _)| **r <= x)
            .map(|(_, w)| *w)
            .collect();
        mass.value() / self.log_vn2
    }

    /// `F(x)` rescaled to total mass one.
    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_raw(x) / self.normalization()
    }
}

fn asclt_grid() -> Vec<f64> {
    (0..=800).map(|i| -4.0 + i as f64 * 0.01).collect()
}

pub(crate) fn asclt(config: &ExperimentConfig) -> Result<(String, Value)> {
    let ExperimentSpec::Asclt {
        n,
        replications,
        tolerance,
        pf2,
    } = &config.experiment
    else {
        unreachable!()
    };
    let model = config.model()?;
    let func = config.functional(&model)?;
    let s2 = match pf2 {
        Some(v) => *v,
        None => func.require_pf2()?,
    };
    let grid = asclt_grid();
    let measures: Vec<AscltMeasure> = try_replicate(*replications, |k| {
        let (pop, pi) = permuted_tree(&model, &func, *n, replication_seed(config.seed, "asclt", k))?;
        let mut acc = CompensatedSum::new();
        let sums: Vec<f64> = pi.images()[..*n as usize]
            .iter()
            .map(|&i| {
                acc.add(eval_at(&pop, &func.f, i));
                acc.value()
            })
            .collect();
        AscltMeasure::new(&sums, s2)
    })?;

    let mut csv = Csv::new(&["replication", "x", "f_raw", "f_normalized", "phi"]);
    let mut sup_norm = Vec::new();
    let mut sup_raw = Vec::new();
    for (k, m) in measures.iter().enumerate() {
        let (mut d, mut d_raw) = (0.0f64, 0.0f64);
        for &x in &grid {
            let (fr, fnorm, phi) = (m.cdf_raw(x), m.cdf(x), normal_cdf(x));
            d = d.max((fnorm - phi).abs());
            d_raw = d_raw.max((fr - phi).abs());
            csv.push(&[cell(k), cell(format!("{x:.2}")), cell(fr), cell(fnorm), cell(phi)]);
        }
        sup_norm.push(d);
        sup_raw.push(d_raw);
    }
    let summary = json!({
        "n": n,
        "pf2": s2,
        "normalization": measures.iter().map(AscltMeasure::normalization).collect::<Vec<_>>(),
        "sup_distance": sup_norm,
        "sup_distance_raw": sup_raw,
        "tolerance": tolerance,
        "verdicts": {
            "within_tolerance": sup_norm.iter().all(|d| d <= tolerance),
        },
    });
    Ok((csv.finish(), summary))
}

pub(crate) fn slln(config: &ExperimentConfig) -> Result<(String, Value)> {
    let ExperimentSpec::Slln {
        n_grid,
        replications,
        tolerance,
    } = &config.experiment
    else {
        unreachable!()
    };
    let model = config.model()?;
    let func = config.functional(&model)?;
    let n_max = *n_grid.last().expect("validated");
    let r = generation(n_max)?;
    let runs: Vec<(Vec<f64>, f64)> = try_replicate(*replications, |k| {
        let seed = replication_seed(config.seed, "slln", k);
        let (pop, pi) = permuted_tree(&model, &func, n_max, seed)?;
        let means = permuted_means_on_grid(&pop, &func.f, &pi, n_grid)?;
        // a second, independent ordering of the same tree
        let other = sample_permutation(r, &mut seed.child(1).stream(PERMUTATION_STREAM));
        let alt = permuted_means_on_grid(&pop, &func.f, &other, &[n_max])?[0];
        Ok((means, alt))
    })?;

    let mut csv = Csv::new(&["replication", "n", "mean", "abs_mean"]);
    let mut finals = Vec::new();
    let mut differences = Vec::new();
    for (k, (means, alt)) in runs.iter().enumerate() {
        for (m, n) in means.iter().zip(n_grid) {
            csv.push(&[cell(k), cell(n), cell(m), cell(m.abs())]);
        }
        let last = *means.last().unwrap();
        finals.push(last);
        differences.push((last - alt).abs());
    }
    let clt_scale = 1.0 / (n_max as f64).sqrt();
    let summary = json!({
        "final_means": finals,
        "tolerance": tolerance,
        "clt_scale": clt_scale,
        "permutation_differences": differences,
        "stationary_mean": func.stationary_mean,
        "verdicts": {
            "converges": finals.iter().all(|m| m.abs() <= *tolerance),
            "permutation_independent": differences.iter().all(|d| *d <= 2.0 * clt_scale),
        },
    });
    Ok((csv.finish(), summary))
}
