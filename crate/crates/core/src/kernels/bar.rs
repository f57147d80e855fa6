//! First-order bifurcating autoregression:
//! `X_2n = a0 X_n + b0 + e_2n`, `X_2n+1 = a1 X_n + b1 + e_2n+1`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{BmcError, Result};
use crate::functional::Functional;
use crate::seed::StreamRng;

/// Lower clamp applied to the ergodicity rate by bound evaluators.
pub const ALPHA_FLOOR: f64 = 1e-9;

/// Law of the noise pair `(e_2n, e_2n+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum NoiseFamily {
    /// Centered bivariate normal with covariance `sigma2 [[1, rho], [rho, 1]]`.
    Gaussian,
    /// The gaussian pair conditioned on `[-bound, bound]^2`.
    TruncatedGaussian { bound: f64 },
    /// Independent uniforms on `[-half_width, half_width]`; `sigma2` and `rho`
    /// are ignored, see [`BarParams::effective_noise_moments`].
    UniformBox { half_width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum InitialLaw {
    PointMass { x0: f64 },
    Gaussian { mean: f64, var: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarParams {
    pub alpha0: f64,
    pub beta0: f64,
    pub alpha1: f64,
    pub beta1: f64,
    /// Noise variance; `0` switches the noise off entirely.
    pub sigma2: f64,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_noise")]
    pub noise: NoiseFamily,
    #[serde(default = "default_initial")]
    pub initial: InitialLaw,
}

fn default_noise() -> NoiseFamily {
    NoiseFamily::Gaussian
}

fn default_initial() -> InitialLaw {
    InitialLaw::PointMass { x0: 0.0 }
}

/// Polynomial `c[0] + c[1] x + c[2] x^2 + ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().skip(1).all(|c| *c == 0.0)
    }

    pub fn to_functional(&self, name: &str) -> Functional {
        let p = self.clone();
        Functional::single(name, move |x| p.eval(x))
    }
}

/// Named polynomial and residual functionals on mother-daughters triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarFunctional {
    X,
    X2,
    Y,
    Z,
    Xy,
    Xz,
    /// `y - a0 x - b0`
    Residual0,
    /// `z - a1 x - b1`
    Residual1,
    Residual0Sq,
    Residual1Sq,
    Residual0Residual1,
}

impl BarFunctional {
    pub const ALL: [BarFunctional; 11] = [
        BarFunctional::X,
        BarFunctional::X2,
        BarFunctional::Y,
        BarFunctional::Z,
        BarFunctional::Xy,
        BarFunctional::Xz,
        BarFunctional::Residual0,
        BarFunctional::Residual1,
        BarFunctional::Residual0Sq,
        BarFunctional::Residual1Sq,
        BarFunctional::Residual0Residual1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BarFunctional::X => "x",
            BarFunctional::X2 => "x2",
            BarFunctional::Y => "y",
            BarFunctional::Z => "z",
            BarFunctional::Xy => "xy",
            BarFunctional::Xz => "xz",
            BarFunctional::Residual0 => "residual0",
            BarFunctional::Residual1 => "residual1",
            BarFunctional::Residual0Sq => "residual0_sq",
            BarFunctional::Residual1Sq => "residual1_sq",
            BarFunctional::Residual0Residual1 => "residual0_residual1",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        BarFunctional::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| BmcError::UnsupportedFunctional(name.to_string()))
    }

    /// The functional as a triangle function, residuals taken at `params`.
    pub fn to_functional(self, params: &BarParams) -> Functional {
        let BarParams {
            alpha0: a0,
            beta0: b0,
            alpha1: a1,
            beta1: b1,
            ..
        } = *params;
        let name = self.name();
        match self {
            BarFunctional::X => Functional::single(name, |x| x),
            BarFunctional::X2 => Functional::single(name, |x| x * x),
            BarFunctional::Y => Functional::triangle(name, |_, y, _| y),
            BarFunctional::Z => Functional::triangle(name, |_, _, z| z),
            BarFunctional::Xy => Functional::triangle(name, |x, y, _| x * y),
            BarFunctional::Xz => Functional::triangle(name, |x, _, z| x * z),
            BarFunctional::Residual0 => Functional::triangle(name, move |x, y, _| y - a0 * x - b0),
            BarFunctional::Residual1 => Functional::triangle(name, move |x, _, z| z - a1 * x - b1),
            BarFunctional::Residual0Sq => Functional::triangle(name, move |x, y, _| {
                let e = y - a0 * x - b0;
                e * e
            }),
            BarFunctional::Residual1Sq => Functional::triangle(name, move |x, _, z| {
                let e = z - a1 * x - b1;
                e * e
            }),
            BarFunctional::Residual0Residual1 => Functional::triangle(name, move |x, y, z| {
                (y - a0 * x - b0) * (z - a1 * x - b1)
            }),
        }
    }
}

impl BarParams {
    pub fn gaussian(alpha0: f64, beta0: f64, alpha1: f64, beta1: f64, sigma2: f64, rho: f64) -> Self {
        BarParams {
            alpha0,
            beta0,
            alpha1,
            beta1,
            sigma2,
            rho,
            noise: NoiseFamily::Gaussian,
            initial: default_initial(),
        }
    }

    pub fn with_initial(mut self, initial: InitialLaw) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_noise(mut self, noise: NoiseFamily) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(BmcError::InvalidParameter(msg));
        for (name, a) in [("alpha0", self.alpha0), ("alpha1", self.alpha1)] {
            if !(a.abs() < 1.0) {
                return bad(format!("{name} = {a} must lie in (-1, 1)"));
            }
        }
        if !self.beta0.is_finite() || !self.beta1.is_finite() {
            return bad("intercepts must be finite".into());
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return bad(format!("sigma2 = {} must be >= 0", self.sigma2));
        }
        if !(self.rho.abs() < 1.0) {
            return bad(format!("rho = {} must lie in (-1, 1)", self.rho));
        }
        match self.noise {
            NoiseFamily::Gaussian => {}
            NoiseFamily::TruncatedGaussian { bound } if !(bound > 0.0) => {
                return bad(format!("truncation bound {bound} must be > 0"))
            }
            NoiseFamily::UniformBox { half_width } if !(half_width > 0.0) => {
                return bad(format!("half width {half_width} must be > 0"))
            }
            _ => {}
        }
        if let InitialLaw::Gaussian { var, .. } = self.initial {
            if !(var >= 0.0) {
                return bad(format!("initial variance {var} must be >= 0"));
            }
        }
        Ok(())
    }

    /// `(a0, b0, a1, b1)`.
    pub fn theta(&self) -> [f64; 4] {
        [self.alpha0, self.beta0, self.alpha1, self.beta1]
    }

    /// Ergodicity rate `max(|a0|, |a1|)`.
    pub fn alpha(&self) -> f64 {
        self.alpha0.abs().max(self.alpha1.abs())
    }

    /// `alpha` clamped below at [`ALPHA_FLOOR`], as used by bound evaluators.
    pub fn bound_alpha(&self) -> f64 {
        self.alpha().max(ALPHA_FLOOR)
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self.noise, NoiseFamily::Gaussian) || self.sigma2 == 0.0
    }

    fn noise(&self, rng: &mut StreamRng) -> (f64, f64) {
        if self.sigma2 == 0.0 {
            return (0.0, 0.0);
        }
        let sd = self.sigma2.sqrt();
        let tail = (1.0 - self.rho * self.rho).sqrt();
        let gaussian_pair = |rng: &mut StreamRng| {
            let z0: f64 = rng.sample(StandardNormal);
            let z1: f64 = rng.sample(StandardNormal);
            (sd * z0, sd * (self.rho * z0 + tail * z1))
        };
        match self.noise {
            NoiseFamily::Gaussian => gaussian_pair(rng),
            NoiseFamily::TruncatedGaussian { bound } => loop {
                let (e0, e1) = gaussian_pair(rng);
                if e0.abs() <= bound && e1.abs() <= bound {
                    break (e0, e1);
                }
            },
            NoiseFamily::UniformBox { half_width } => (
                rng.random_range(-half_width..=half_width),
                rng.random_range(-half_width..=half_width),
            ),
        }
    }

    /// One kernel draw: the daughters of a mother at `x`.
    pub fn sample_daughters(&self, x: f64, rng: &mut StreamRng) -> (f64, f64) {
        let (e0, e1) = self.noise(rng);
        (
            self.alpha0 * x + self.beta0 + e0,
            self.alpha1 * x + self.beta1 + e1,
        )
    }

    pub fn sample_initial(&self, rng: &mut StreamRng) -> f64 {
        match self.initial {
            InitialLaw::PointMass { x0 } => x0,
            InitialLaw::Gaussian { mean, var } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + var.sqrt() * z
            }
        }
    }

    /// Actual variance and correlation of the noise pair, `(sigma2, rho)`.
    ///
    /// Gaussian: the declared values. Uniform box: `(h^2/3, 0)`. Truncated
    /// gaussian: moments of the normal pair conditioned on the square,
    /// computed by composite Simpson quadrature.
    pub fn effective_noise_moments(&self) -> (f64, f64) {
        if self.sigma2 == 0.0 {
            return (0.0, 0.0);
        }
        match self.noise {
            NoiseFamily::Gaussian => (self.sigma2, self.rho),
            NoiseFamily::UniformBox { half_width } => (half_width * half_width / 3.0, 0.0),
            NoiseFamily::TruncatedGaussian { bound } => {
                truncated_moments(self.sigma2, self.rho, bound)
            }
        }
    }

    /// Closed-form conditional expectation `Pf(x)` of a named functional.
    pub fn conditional_moment(&self, f: BarFunctional) -> Poly {
        let (a0, b0, a1, b1) = (self.alpha0, self.beta0, self.alpha1, self.beta1);
        let (s2, rho) = self.effective_noise_moments();
        match f {
            BarFunctional::X => Poly(vec![0.0, 1.0]),
            BarFunctional::X2 => Poly(vec![0.0, 0.0, 1.0]),
            BarFunctional::Y => Poly(vec![b0, a0]),
            BarFunctional::Z => Poly(vec![b1, a1]),
            BarFunctional::Xy => Poly(vec![0.0, b0, a0]),
            BarFunctional::Xz => Poly(vec![0.0, b1, a1]),
            BarFunctional::Residual0 | BarFunctional::Residual1 => Poly(vec![0.0]),
            BarFunctional::Residual0Sq | BarFunctional::Residual1Sq => Poly(vec![s2]),
            BarFunctional::Residual0Residual1 => Poly(vec![rho * s2]),
        }
    }

    pub fn conditional_moment_by_name(&self, name: &str) -> Result<Poly> {
        Ok(self.conditional_moment(BarFunctional::parse(name)?))
    }
}

fn simpson_weights(n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| {
            if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            }
        })
        .collect()
}

fn truncated_moments(sigma2: f64, rho: f64, bound: f64) -> (f64, f64) {
    let n = 400;
    let h = 2.0 * bound / n as f64;
    let w = simpson_weights(n);
    let det = sigma2 * sigma2 * (1.0 - rho * rho);
    let (mut mass, mut second, mut cross) = (0.0, 0.0, 0.0);
    for i in 0..=n {
        let u = -bound + i as f64 * h;
        for j in 0..=n {
            let v = -bound + j as f64 * h;
            let q = sigma2 * (u * u - 2.0 * rho * u * v + v * v) / det;
            let d = w[i] * w[j] * (-0.5 * q).exp();
            mass += d;
            second += d * u * u;
            cross += d * u * v;
        }
    }
    let var = second / mass;
    (var, (cross / mass) / var)
}
