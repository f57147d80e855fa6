//! Stationary law and geometric-ergodicity constants of a finite mean kernel.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{BmcError, Result};
use crate::kernels::ALPHA_FLOOR;

const STOCHASTIC_TOL: f64 = 1e-12;

fn check_stochastic(q: &DMatrix<f64>) -> Result<()> {
    if !q.is_square() || q.nrows() == 0 {
        return Err(BmcError::InvalidParameter("transition matrix must be square".into()));
    }
    for (x, row) in q.row_iter().enumerate() {
        if row.iter().any(|v| *v < 0.0 || !v.is_finite()) || (row.sum() - 1.0).abs() > STOCHASTIC_TOL {
            return Err(BmcError::InvalidParameter(format!("row {x} is not a probability vector")));
        }
    }
    Ok(())
}

/// Irreducible and aperiodic iff some power `Q^k`, `k <= m^2`, is entrywise
/// positive.
pub fn is_primitive(q: &DMatrix<f64>) -> bool {
    let m = q.nrows();
    let pattern = q.map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let mut power = pattern.clone();
    for _ in 0..m * m {
        if power.iter().all(|v| *v > 0.0) {
            return true;
        }
        power = (&power * &pattern).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    }
    false
}

/// Unique `mu` with `mu Q = mu`, `sum mu = 1`.
pub fn stationary_distribution(q: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_stochastic(q)?;
    if !is_primitive(q) {
        return Err(BmcError::NotErgodic);
    }
    let m = q.nrows();
    // (Q^T - I) mu = 0 with the last equation replaced by sum(mu) = 1
    let mut a = q.transpose() - DMatrix::identity(m, m);
    let mut b = DVector::zeros(m);
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    b[m - 1] = 1.0;
    let mut mu = a
        .lu()
        .solve(&b)
        .ok_or_else(|| BmcError::NotErgodic)?;
    // a few power steps polish the residual
    for _ in 0..4 {
        let next = q.transpose() * &mu;
        let s = next.sum();
        mu = next / s;
    }
    let residual = (q.transpose() * &mu - &mu).amax();
    if residual > 1e-12 {
        return Err(BmcError::InvalidParameter(format!(
            "stationary residual {residual} above tolerance"
        )));
    }
    Ok(mu.iter().copied().collect())
}

/// Spectral radius of `Q - 1 mu`, i.e. the second largest eigenvalue modulus
/// of `Q`, from `||D^k||^(1/k)` with `k = 2^60` reached by normalized squaring.
pub fn second_eigenvalue_modulus(q: &DMatrix<f64>, mu: &[f64]) -> f64 {
    let m = q.nrows();
    let ones = DVector::from_element(m, 1.0);
    let mu_row = DVector::from_column_slice(mu).transpose();
    let mut d = q - ones * mu_row;
    let mut log_norm = 0.0f64;
    let mut k = 1.0f64;
    let norm = d.amax();
    if norm == 0.0 {
        return 0.0;
    }
    d /= norm;
    log_norm += norm.ln();
    for _ in 0..60 {
        let sq = &d * &d;
        let n = sq.amax();
        if n == 0.0 || !n.is_finite() {
            return 0.0;
        }
        d = sq / n;
        log_norm = 2.0 * log_norm + n.ln();
        k *= 2.0;
        // underflow of the rate itself: below every useful floor
        if log_norm / k < -700.0 {
            return 0.0;
        }
    }
    (log_norm / k).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErgodicityMode {
    /// `|Q^r f(x)| <= alpha^r g(x)`, pointwise dominator.
    H1Geometric,
    /// `|Q^r f(x)| <= c alpha^r`, uniform constant.
    H2Uniform,
}

/// Certified geometric decay `|Q^r f(x)| <= c alpha^r` for all `r <= horizon`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErgodicityEstimate {
    pub alpha: f64,
    pub c: f64,
    pub horizon: u32,
    pub mode: ErgodicityMode,
}

/// Ergodicity rate and constant for a centered functional `f` (given as a
/// table) under the mean kernel `q`.
pub fn ergodicity_constants(q: &DMatrix<f64>, f: &[f64], horizon: u32) -> Result<ErgodicityEstimate> {
    let mu = stationary_distribution(q)?;
    let mean: f64 = mu.iter().zip(f).map(|(a, b)| a * b).sum();
    if mean.abs() > 1e-10 {
        return Err(BmcError::NotCentered(mean));
    }
    let raw = second_eigenvalue_modulus(q, &mu);
    if raw >= 1.0 - 1e-9 {
        return Err(BmcError::NotGeometricallyErgodic(raw));
    }
    let alpha = raw.max(ALPHA_FLOOR);
    let scale = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    // values at rounding level count as exact zeros
    let noise = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut v = DVector::from_column_slice(f);
    let mut iterates = Vec::with_capacity(horizon as usize + 1);
    for _ in 0..=horizon {
        iterates.push(v.clone());
        v = q * v;
    }
    let mut c = 0.0f64;
    for (r, it) in iterates.iter().enumerate() {
        let w = alpha.powi(r as i32);
        for val in it.iter() {
            if val.abs() > noise {
                c = c.max(val.abs() / w);
            }
        }
    }
    let c = c.max(scale);
    for (r, it) in iterates.iter().enumerate() {
        let bound = c * alpha.powi(r as i32) + noise;
        if it.iter().any(|val| val.abs() > bound * (1.0 + 1e-12)) {
            return Err(BmcError::InvalidParameter(format!(
                "ergodicity certificate fails at r = {r}"
            )));
        }
    }
    Ok(ErgodicityEstimate {
        alpha,
        c,
        horizon,
        mode: ErgodicityMode::H2Uniform,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8])
    }

    #[test]
    fn stationary_examples() {
        let mu = stationary_distribution(&two_state()).unwrap();
        assert!((mu[0] - 2.0 / 3.0).abs() < 1e-14 && (mu[1] - 1.0 / 3.0).abs() < 1e-14);
        let u = DMatrix::from_element(3, 3, 1.0 / 3.0);
        let mu = stationary_distribution(&u).unwrap();
        assert!(mu.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-14));
        let f = [1.0, 5.0, -2.0];
        let mean: f64 = mu.iter().zip(&f).map(|(a, b)| a * b).sum();
        let centered: f64 = mu.iter().zip(&f).map(|(a, b)| a * (b - mean)).sum();
        assert!(centered.abs() < 1e-14);
    }

    #[test]
    fn periodic_and_reducible_chains_are_rejected() {
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(stationary_distribution(&swap), Err(BmcError::NotErgodic));
        let absorbing = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 0.5]);
        assert_eq!(stationary_distribution(&absorbing), Err(BmcError::NotErgodic));
    }

    #[test]
    fn two_state_rate_is_trace_minus_one() {
        let est = ergodicity_constants(&two_state(), &[1.0, -2.0], 30).unwrap();
        assert!((est.alpha - 0.7).abs() < 1e-9, "{}", est.alpha);
        // Q^r f = 0.7^r f for this eigenvector
        assert!((est.c - 2.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_chain_mixes_in_one_step() {
        let u = DMatrix::from_element(2, 2, 0.5);
        let est = ergodicity_constants(&u, &[1.5, -1.5], 10).unwrap();
        assert_eq!(est.alpha, ALPHA_FLOOR);
        assert_eq!(est.c, 1.5);
        assert!(matches!(
            ergodicity_constants(&u, &[1.0, 0.0], 10),
            Err(BmcError::NotCentered(_))
        ));
    }

    #[test]
    fn certificate_holds_for_a_rotation_like_chain() {
        // complex second eigenvalues
        let q = DMatrix::from_row_slice(3, 3, &[0.1, 0.8, 0.1, 0.1, 0.1, 0.8, 0.8, 0.1, 0.1]);
        let mu = stationary_distribution(&q).unwrap();
        let raw = [1.0, 0.0, -1.0];
        let mean: f64 = mu.iter().zip(&raw).map(|(a, b)| a * b).sum();
        let f: Vec<f64> = raw.iter().map(|v| v - mean).collect();
        let est = ergodicity_constants(&q, &f, 40).unwrap();
        // eigenvalues 1 and -0.35 +- 0.606i, modulus 0.7
        assert!((est.alpha - 0.7).abs() < 1e-9, "{}", est.alpha);
        let mut v = DVector::from_column_slice(&f);
        for r in 0..=40 {
            assert!(v.amax() <= est.c * est.alpha.powi(r) * (1.0 + 1e-9) + 1e-12);
            v = &q * v;
        }
    }
}
