//! T-transition probabilities: the kernel drawing both daughters of a mother.

pub mod bar;
pub mod finite;

use rand::Rng;

pub use bar::{BarFunctional, BarParams, InitialLaw, NoiseFamily, Poly, ALPHA_FLOOR};
pub use finite::FiniteKernel;

use crate::seed::StreamRng;

/// Sampling interface shared by every kernel. Each kernel carries its own
/// initial law for the root.
pub trait BifurcatingKernel: Send + Sync {
    fn sample_initial(&self, rng: &mut StreamRng) -> f64;

    /// Joint draw of `(X_2n, X_2n+1)` given `X_n = x`.
    fn sample_daughters(&self, x: f64, rng: &mut StreamRng) -> (f64, f64);

    /// One step of the mean kernel `Q`: a kernel draw followed by a fair coin
    /// choosing which daughter to follow.
    fn sample_lineage_step(&self, x: f64, rng: &mut StreamRng) -> f64 {
        let (y, z) = self.sample_daughters(x, rng);
        if rng.random::<bool>() {
            z
        } else {
            y
        }
    }
}

impl BifurcatingKernel for BarParams {
    fn sample_initial(&self, rng: &mut StreamRng) -> f64 {
        BarParams::sample_initial(self, rng)
    }

    fn sample_daughters(&self, x: f64, rng: &mut StreamRng) -> (f64, f64) {
        BarParams::sample_daughters(self, x, rng)
    }
}

impl BifurcatingKernel for FiniteKernel {
    fn sample_initial(&self, rng: &mut StreamRng) -> f64 {
        self.sample_initial_state(rng) as f64
    }

    fn sample_daughters(&self, x: f64, rng: &mut StreamRng) -> (f64, f64) {
        let (y, z) = self.sample_daughter_states(x as usize, rng);
        (y as f64, z as f64)
    }
}

/// Either kernel family, as selected by a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Bar(BarParams),
    Finite(FiniteKernel),
}

impl Model {
    pub fn tag(&self) -> &'static str {
        match self {
            Model::Bar(_) => "bar",
            Model::Finite(_) => "finite",
        }
    }

    pub fn as_bar(&self) -> Option<&BarParams> {
        match self {
            Model::Bar(p) => Some(p),
            Model::Finite(_) => None,
        }
    }

    pub fn as_finite(&self) -> Option<&FiniteKernel> {
        match self {
            Model::Finite(k) => Some(k),
            Model::Bar(_) => None,
        }
    }
}

impl BifurcatingKernel for Model {
    fn sample_initial(&self, rng: &mut StreamRng) -> f64 {
        match self {
            Model::Bar(p) => BarParams::sample_initial(p, rng),
            Model::Finite(k) => k.sample_initial_state(rng) as f64,
        }
    }

    fn sample_daughters(&self, x: f64, rng: &mut StreamRng) -> (f64, f64) {
        match self {
            Model::Bar(p) => BarParams::sample_daughters(p, x, rng),
            Model::Finite(k) => BifurcatingKernel::sample_daughters(k, x, rng),
        }
    }
}
