//! Evaluators for the moment, deviation and exponential rate bounds, and the
//! speed-sequence diagnostics used by the moderate deviation experiments.
//!
//! The constants `c`, `c'`, `c''` are inputs: the bounds only fix them up to
//! "a constant that may differ line by line", so callers fit them.

use serde::{Deserialize, Serialize};

use crate::error::{BmcError, Result};
use crate::kernels::ALPHA_FLOOR;
use crate::tree::{generation, layer_size, tree_size};

/// Tolerance for landing exactly on a regime boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundFamily {
    Moment2,
    Moment4,
    Probaineq,
    Expoineq,
    EstimatorDevGaussian,
    EstimatorDevBounded,
}

impl BoundFamily {
    pub const ALL: [BoundFamily; 6] = [
        Self::Moment2,
        Self::Moment4,
        Self::Probaineq,
        Self::Expoineq,
        Self::EstimatorDevGaussian,
        Self::EstimatorDevBounded,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundScope {
    Generation,
    Tree,
    /// Indexed by the prefix length `n`, through `r_n = floor(log2 n)`.
    PermutedN,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    pub family: BoundFamily,
    pub scope: BoundScope,
    pub alpha: f64,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default = "one")]
    pub c_prime: f64,
    #[serde(default = "one")]
    pub c_double_prime: f64,
    #[serde(default = "one")]
    pub delta: f64,
}

fn one() -> f64 {
    1.0
}

impl BoundSpec {
    pub fn new(family: BoundFamily, scope: BoundScope, alpha: f64) -> Self {
        BoundSpec {
            family,
            scope,
            alpha,
            c: 1.0,
            c_prime: 1.0,
            c_double_prime: 1.0,
            delta: 1.0,
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_c_prime(mut self, c_prime: f64) -> Self {
        self.c_prime = c_prime;
        self
    }

    pub fn with_c_double_prime(mut self, c: f64) -> Self {
        self.c_double_prime = c;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0 && self.alpha < 1.0) {
            return Err(BmcError::InvalidParameter(format!("alpha = {} not in [0, 1)", self.alpha)));
        }
        for (name, v) in [
            ("c", self.c),
            ("c_prime", self.c_prime),
            ("c_double_prime", self.c_double_prime),
            ("delta", self.delta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(BmcError::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        if matches!(self.family, BoundFamily::EstimatorDevGaussian | BoundFamily::EstimatorDevBounded)
            && self.scope != BoundScope::Tree
        {
            return Err(BmcError::InvalidParameter(
                "estimator deviation bounds are stated on the whole tree".into(),
            ));
        }
        Ok(())
    }
}

/// Which branch of a case split was used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Alpha2BelowHalf,
    Alpha2AtHalf,
    Alpha2AboveHalf,
    AlphaBelowHalf,
    AlphaAtHalf,
    AlphaBetween,
    AlphaAtSqrtHalf,
    AlphaAboveSqrtHalf,
    /// `1/2 < alpha < sqrt(2)/2` for the bounded estimator bound, which the
    /// case split leaves out; evaluated with the `alpha < 1/2` formula.
    Uncovered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundValue {
    pub value: f64,
    /// Natural log of the bound; finite even where `value` underflows.
    pub ln_value: f64,
    pub regime: Regime,
}

impl BoundValue {
    fn from_ln(ln_value: f64, regime: Regime) -> Self {
        BoundValue {
            value: ln_value.exp(),
            ln_value,
            regime,
        }
    }
}

fn square_regime(alpha: f64) -> Regime {
    let a2 = alpha * alpha;
    if (a2 - 0.5).abs() <= BOUNDARY_TOL {
        Regime::Alpha2AtHalf
    } else if a2 < 0.5 {
        Regime::Alpha2BelowHalf
    } else {
        Regime::Alpha2AboveHalf
    }
}

fn five_way_regime(alpha: f64) -> Regime {
    if (alpha - 0.5).abs() <= BOUNDARY_TOL {
        Regime::AlphaAtHalf
    } else if (alpha - SQRT_HALF).abs() <= BOUNDARY_TOL {
        Regime::AlphaAtSqrtHalf
    } else if alpha < 0.5 {
        Regime::AlphaBelowHalf
    } else if alpha < SQRT_HALF {
        Regime::AlphaBetween
    } else {
        Regime::AlphaAboveSqrtHalf
    }
}

/// Size, exponent and polynomial factor of a scope at index `x`
/// (`x = r`, or `x = n` for the permuted scope).
struct Geometry {
    size: f64,
    k: f64,
    ell: f64,
}

fn depth_index(x: u64) -> Result<u32> {
    match u32::try_from(x) {
        Ok(r) if r <= 62 => Ok(r),
        _ => Err(BmcError::OutOfRange(format!("r = {x}"))),
    }
}

fn geometry(scope: BoundScope, x: u64) -> Result<Geometry> {
    Ok(match scope {
        BoundScope::Generation => {
            let r = depth_index(x)?;
            Geometry {
                size: layer_size(r) as f64,
                k: r as f64,
                ell: r.max(1) as f64,
            }
        }
        BoundScope::Tree => {
            let r = depth_index(x)?;
            Geometry {
                size: tree_size(r) as f64,
                k: r as f64 + 1.0,
                ell: r.max(1) as f64,
            }
        }
        BoundScope::PermutedN => {
            let rn = generation(x)?;
            Geometry {
                size: x as f64,
                k: rn as f64 + 1.0,
                ell: rn.max(1) as f64,
            }
        }
    })
}

/// `c{(1/2)^{hk}, l^h (1/2)^{hk}, alpha^{2hk}}` on the log scale, `h = order/2`.
fn ln_moment(spec: &BoundSpec, g: &Geometry, half_order: f64) -> BoundValue {
    let a = spec.alpha.max(ALPHA_FLOOR);
    let regime = square_regime(a);
    let ln_half = -std::f64::consts::LN_2;
    let ln = spec.c.ln()
        + match regime {
            Regime::Alpha2BelowHalf => half_order * g.k * ln_half,
            Regime::Alpha2AtHalf => half_order * (g.ell.ln() + g.k * ln_half),
            _ => 2.0 * half_order * g.k * a.ln(),
        };
    BoundValue::from_ln(ln, regime)
}

/// Value of the bound at `x` (`r` for generation and tree scopes, `n` for the
/// permuted scope), with the regime it was evaluated in. Polynomial factors
/// use `max(r, 1)` so the bound stays positive at `r = 0`.
pub fn evaluate_bound(spec: &BoundSpec, x: u64) -> Result<BoundValue> {
    spec.validate()?;
    let g = geometry(spec.scope, x)?;
    let a = spec.alpha.max(ALPHA_FLOOR);
    let (c1, c2, d) = (spec.c_prime, spec.c_double_prime, spec.delta);
    let (n, k) = (g.size, g.k);
    // (1/alpha^2)^k
    let inv_a2k = (-2.0 * k * a.ln()).exp();
    let out = match spec.family {
        BoundFamily::Moment2 => ln_moment(spec, &g, 1.0),
        BoundFamily::Moment4 | BoundFamily::EstimatorDevGaussian => ln_moment(spec, &g, 2.0),
        BoundFamily::Probaineq => {
            let m = ln_moment(spec, &g, 1.0);
            BoundValue::from_ln(m.ln_value - 2.0 * d.ln(), m.regime)
        }
        BoundFamily::Expoineq if spec.scope == BoundScope::Generation => {
            let regime = square_regime(a);
            let ln = match regime {
                Regime::Alpha2BelowHalf => -c1 * d * d * n,
                Regime::Alpha2AtHalf => -c1 * n / g.ell,
                _ => -c1 * d * d * inv_a2k,
            };
            BoundValue::from_ln(ln, regime)
        }
        BoundFamily::Expoineq => {
            let regime = five_way_regime(a);
            let ln = match regime {
                Regime::AlphaBelowHalf => c2.ln() - c1 * d * d * n,
                Regime::AlphaAtHalf => -c1 * d * d * n + 2.0 * c1 * d * k,
                Regime::AlphaBetween => std::f64::consts::LN_2 - c1 * d * d * n,
                Regime::AlphaAtSqrtHalf => -c1 * d * d * n / k,
                _ => -c1 * d * d * inv_a2k,
            };
            BoundValue::from_ln(ln, regime)
        }
        BoundFamily::EstimatorDevBounded => {
            let regime = match (five_way_regime(a), square_regime(a)) {
                (Regime::AlphaAtHalf, _) => Regime::AlphaAtHalf,
                (_, Regime::Alpha2AtHalf) => Regime::Alpha2AtHalf,
                (_, Regime::Alpha2AboveHalf) => Regime::Alpha2AboveHalf,
                (Regime::AlphaBelowHalf, _) => Regime::AlphaBelowHalf,
                _ => Regime::Uncovered,
            };
            let ln = c2.ln()
                + match regime {
                    Regime::AlphaBelowHalf | Regime::Uncovered => -c1 * n,
                    Regime::Alpha2AboveHalf => -c1 * inv_a2k,
                    Regime::AlphaAtHalf => -c1 * n + 2.0 * c1 * d * k,
                    _ => -c1 * n / k,
                };
            BoundValue::from_ln(ln, regime)
        }
    };
    Ok(out)
}

/// Settings for the admissibility of a speed `b_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "setting", rename_all = "kebab-case")]
pub enum SpeedSetting {
    /// Gaussian estimator setting: `b_n/sqrt(n log n) -> 0`.
    Hh2,
    /// Bounded setting with ergodicity rate `alpha`.
    H1 { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Limit {
    Zero,
    Infinity,
}

/// A ratio expected to tend to 0 or infinity, sampled at `n = 2^k`.
#[derive(Debug, Clone, Serialize)]
pub struct SpeedCheck {
    pub name: String,
    pub target: Limit,
    pub grid: Vec<u64>,
    pub ratios: Vec<f64>,
    /// The second half of the grid is strictly monotone in the right direction.
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeedSequence {
    pub gamma: f64,
    pub setting: SpeedSetting,
    pub checks: Vec<SpeedCheck>,
}

impl SpeedSequence {
    pub fn b(&self, n: u64) -> f64 {
        (n as f64).powf(self.gamma)
    }

    pub fn valid(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn check(&self, name: &str) -> Option<&SpeedCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn speed_check(name: &str, target: Limit, horizon: u32, ratio: impl Fn(u64) -> f64) -> SpeedCheck {
    let grid: Vec<u64> = (1..=horizon).map(|k| 1u64 << k).collect();
    let ratios: Vec<f64> = grid.iter().map(|&n| ratio(n)).collect();
    let tail = &ratios[ratios.len() / 2..];
    let holds = tail.windows(2).all(|w| match target {
        Limit::Zero => w[1] < w[0],
        Limit::Infinity => w[1] > w[0],
    });
    SpeedCheck {
        name: name.into(),
        target,
        grid,
        ratios,
        holds,
    }
}

/// `b_n = n^gamma` with a monotone-tail diagnostic over `n = 2^1..2^horizon`
/// for each condition of the chosen setting.
pub fn speed_sequence(gamma: f64, setting: SpeedSetting, horizon: u32) -> Result<SpeedSequence> {
    if !(gamma > 0.5 && gamma < 1.0) {
        return Err(BmcError::InvalidParameter(format!("gamma = {gamma} not in (1/2, 1)")));
    }
    if !(4..=62).contains(&horizon) {
        return Err(BmcError::InvalidParameter(format!("horizon 2^{horizon} outside 2^4..2^62")));
    }
    let b = move |n: u64| (n as f64).powf(gamma);
    let mut checks = vec![speed_check("b_n/sqrt(n)", Limit::Infinity, horizon, |n| {
        b(n) / (n as f64).sqrt()
    })];
    match setting {
        SpeedSetting::Hh2 => checks.push(speed_check("b_n/sqrt(n log n)", Limit::Zero, horizon, |n| {
            let x = n as f64;
            b(n) / (x * x.ln()).sqrt()
        })),
        SpeedSetting::H1 { alpha } => {
            if !(alpha.is_finite() && (0.0..1.0).contains(&alpha)) {
                return Err(BmcError::InvalidParameter(format!("alpha = {alpha} not in [0, 1)")));
            }
            let a = alpha.max(ALPHA_FLOOR);
            checks.push(match square_regime(a) {
                Regime::Alpha2BelowHalf => speed_check("b_n/n", Limit::Zero, horizon, |n| b(n) / n as f64),
                Regime::Alpha2AtHalf => speed_check("b_n log n/n", Limit::Zero, horizon, |n| {
                    let x = n as f64;
                    b(n) * x.ln() / x
                }),
                _ => speed_check("b_n alpha^(r_n+1)/sqrt(n)", Limit::Zero, horizon, |n| {
                    let rn = 63 - n.leading_zeros() as i32;
                    b(n) * a.powi(rn + 1) / (n as f64).sqrt()
                }),
            });
        }
    }
    Ok(SpeedSequence { gamma, setting, checks })
}
