//! Experiment configuration: model block, functional, experiment block.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{BmcError, Result};
use crate::exact::bounds::BoundFamily;
use crate::exact::chain::{second_eigenvalue_modulus, stationary_distribution};
use crate::functional::{Functional, FunctionalKind};
use crate::inference::stationary_moments;
use crate::kernels::{BarFunctional, BarParams, FiniteKernel, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    Bar(BarParams),
    /// Inline tensor, values indexed `(x*m + y)*m + z`.
    #[serde(rename_all = "snake_case")]
    Finite { m: usize, p: Vec<f64>, nu: Vec<f64> },
    /// Kernel text file: `m`, the tensor slices, then `nu`.
    FiniteFile { path: PathBuf },
}

impl ModelSpec {
    pub fn build(&self) -> Result<Model> {
        match self {
            ModelSpec::Bar(p) => {
                p.validate()?;
                Ok(Model::Bar(*p))
            }
            ModelSpec::Finite { m, p, nu } => Ok(Model::Finite(FiniteKernel::new(*m, p.clone(), nu.clone())?)),
            ModelSpec::FiniteFile { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| BmcError::Io(format!("{}: {e}", path.display())))?;
                Ok(Model::Finite(FiniteKernel::parse(&text)?))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    /// Stationary centering unless the functional is already conditionally centered.
    #[default]
    Auto,
    None,
    /// Subtract `(mu, f)` (or `(mu, Pf)` for triangle functionals).
    Stationary,
    /// Replace `f` by `f - Pf`, so that `Pf = 0` (triangle tables only).
    Conditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionalSpec {
    /// A named BAR functional such as `residual0` or `x`.
    Named {
        name: String,
        #[serde(default)]
        center: Centering,
    },
    /// Single functional on the states of a finite kernel.
    Table {
        values: Vec<f64>,
        #[serde(default)]
        center: Centering,
    },
    /// Triangle functional on a finite kernel, indexed `(x*m + y)*m + z`.
    TriangleTable {
        values: Vec<f64>,
        #[serde(default)]
        center: Centering,
    },
    /// `f = value` everywhere; never centered.
    Constant { value: f64 },
}

/// A functional together with what the experiments need to know about it.
#[derive(Clone)]
pub struct ResolvedFunctional {
    pub f: Functional,
    /// `(mu, Pf^2)`, the martingale variance scale, when known.
    pub pf2: Option<f64>,
    /// `Pf^2` as a single functional, for brackets.
    pub pf2_fn: Option<Functional>,
    /// `sup |f|` for bounded functionals.
    pub sup_abs: Option<f64>,
    /// `Pf = 0`.
    pub conditionally_centered: bool,
    /// `(mu, f)` (or `(mu, Pf)`) after centering.
    pub stationary_mean: Option<f64>,
}

impl ResolvedFunctional {
    pub fn kind(&self) -> FunctionalKind {
        self.f.kind()
    }

    /// Extra depth a population needs to evaluate the functional at depth `r`.
    pub fn extra_depth(&self) -> u32 {
        match self.kind() {
            FunctionalKind::Single => 0,
            FunctionalKind::Triangle => 1,
        }
    }

    pub fn require_pf2(&self) -> Result<f64> {
        match self.pf2 {
            Some(v) if v > 0.0 => Ok(v),
            Some(v) => Err(BmcError::DegenerateVariance(v)),
            None => Err(BmcError::UnsupportedFunctional(format!(
                "(mu, Pf^2) unknown for `{}`; set `pf2` in the experiment block",
                self.f.name()
            ))),
        }
    }
}

/// Ergodicity rate of a model: `max |alpha_i|` for BAR, the second
/// eigenvalue modulus of `Q` for a finite kernel.
pub fn model_alpha(model: &Model) -> Result<f64> {
    match model {
        Model::Bar(p) => Ok(p.alpha()),
        Model::Finite(k) => {
            let q = k.mean_matrix();
            let mu = stationary_distribution(&q)?;
            Ok(second_eigenvalue_modulus(&q, &mu))
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn resolve_bar(params: &BarParams, name: &str, center: Centering) -> Result<ResolvedFunctional> {
    let which = BarFunctional::parse(name)?;
    let f = which.to_functional(params);
    let (s2, _) = params.effective_noise_moments();
    let (mu1, mu2) = stationary_moments(params.theta(), s2)?;
    let pf = params.conditional_moment(which);
    let conditional = matches!(which, BarFunctional::Residual0 | BarFunctional::Residual1);
    if center == Centering::Conditional && !conditional {
        return Err(BmcError::UnsupportedFunctional(format!(
            "conditional centering of `{name}` has no closed form"
        )));
    }
    // (mu, Pf) from the first two stationary moments
    let mean = match pf.0.as_slice() {
        [c0] => Some(*c0),
        [c0, c1] => Some(c0 + c1 * mu1),
        [c0, c1, c2] => Some(c0 + c1 * mu1 + c2 * mu2),
        _ => None,
    };
    let stationary = match center {
        Centering::Auto => !conditional,
        Centering::Stationary => true,
        Centering::None | Centering::Conditional => false,
    };
    let bound = match params.noise {
        crate::kernels::NoiseFamily::TruncatedGaussian { bound } => Some(bound),
        crate::kernels::NoiseFamily::UniformBox { half_width } => Some(half_width),
        crate::kernels::NoiseFamily::Gaussian if params.sigma2 == 0.0 => Some(0.0),
        crate::kernels::NoiseFamily::Gaussian => None,
    };
    let mut out = ResolvedFunctional {
        f,
        pf2: None,
        pf2_fn: None,
        sup_abs: None,
        conditionally_centered: conditional,
        stationary_mean: mean,
    };
    if conditional {
        out.pf2 = Some(s2);
        out.pf2_fn = Some(Functional::constant(s2));
        out.sup_abs = bound;
    }
    if stationary {
        let m = mean.ok_or_else(|| BmcError::UnsupportedFunctional(name.into()))?;
        out.f = out.f.shifted(m).with_name(format!("{name}-centered"));
        out.stationary_mean = Some(0.0);
        if which == BarFunctional::X {
            out.pf2 = Some(mu2 - mu1 * mu1);
        }
    }
    Ok(out)
}

fn resolve_finite(kernel: &FiniteKernel, spec: &FunctionalSpec) -> Result<ResolvedFunctional> {
    let m = kernel.states();
    let mu = stationary_distribution(&kernel.mean_matrix())?;
    match spec {
        FunctionalSpec::Table { values, center } => {
            if values.len() != m {
                return Err(BmcError::LengthMismatch(format!("{} values for {m} states", values.len())));
            }
            if *center == Centering::Conditional {
                return Err(BmcError::UnsupportedFunctional(
                    "conditional centering needs a triangle table".into(),
                ));
            }
            let shift = if *center == Centering::None { 0.0 } else { dot(&mu, values) };
            let v: Vec<f64> = values.iter().map(|x| x - shift).collect();
            let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
            Ok(ResolvedFunctional {
                f: Functional::single_table(v.clone()),
                pf2: Some(dot(&mu, &sq)),
                sup_abs: Some(v.iter().fold(0.0, |a, x| a.max(x.abs()))),
                pf2_fn: Some(Functional::single_table(sq)),
                conditionally_centered: false,
                stationary_mean: Some(dot(&mu, &v)),
            })
        }
        FunctionalSpec::TriangleTable { values, center } => {
            let raw = Functional::triangle_table(m, values.clone())?;
            let pf = kernel.apply_p(&raw)?;
            let v: Vec<f64> = match center {
                Centering::None => values.clone(),
                Centering::Auto | Centering::Stationary => {
                    let s = dot(&mu, &pf);
                    values.iter().map(|x| x - s).collect()
                }
                Centering::Conditional => (0..m * m * m).map(|k| values[k] - pf[k / (m * m)]).collect(),
            };
            let f = Functional::triangle_table(m, v.clone())?;
            let pf = kernel.apply_p(&f)?;
            let sq = Functional::triangle_table(m, v.iter().map(|x| x * x).collect())?;
            let pf2 = kernel.apply_p(&sq)?;
            let conditional = pf.iter().all(|x| x.abs() <= 1e-12);
            Ok(ResolvedFunctional {
                f,
                pf2: Some(dot(&mu, &pf2)),
                pf2_fn: Some(Functional::single_table(pf2)),
                sup_abs: Some(v.iter().fold(0.0, |a, x| a.max(x.abs()))),
                conditionally_centered: conditional,
                stationary_mean: Some(dot(&mu, &pf)),
            })
        }
        FunctionalSpec::Named { name, .. } => Err(BmcError::UnsupportedFunctional(format!(
            "`{name}` is a BAR functional; finite kernels take tables"
        ))),
        FunctionalSpec::Constant { .. } => unreachable!(),
    }
}

impl FunctionalSpec {
    pub fn resolve(&self, model: &Model) -> Result<ResolvedFunctional> {
        if let FunctionalSpec::Constant { value } = self {
            return Ok(ResolvedFunctional {
                f: Functional::constant(*value),
                pf2: Some(value * value),
                pf2_fn: Some(Functional::constant(value * value)),
                sup_abs: Some(value.abs()),
                conditionally_centered: *value == 0.0,
                stationary_mean: Some(*value),
            });
        }
        match (model, self) {
            (Model::Bar(p), FunctionalSpec::Named { name, center }) => resolve_bar(p, name, *center),
            (Model::Bar(_), _) => Err(BmcError::UnsupportedFunctional(
                "BAR models take named functionals".into(),
            )),
            (Model::Finite(k), spec) => resolve_finite(k, spec),
        }
    }
}

/// How the deviation thresholds are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaFromSd {
    /// `delta = multiple * sd(average at depth)`, sd from the run itself.
    pub multiple: f64,
    pub depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AverageScope {
    Generation,
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuperexpTarget {
    /// `Z_n` = permuted mean of `f`, `z = 0`.
    MeanFunctional,
    /// `Z_n = <M>_n / n`, `z = (mu, Pf^2)`.
    Bracket,
    /// `Z = max_k |theta_hat_k - theta_k|` at `n = |T_r|`.
    ThetaHat,
    /// `Z = max(|sigma2_hat - sigma2|, |rho_hat - rho|)` at `n = |T_r|`.
    Sigma2Rho,
}

fn default_bound_family() -> BoundFamily {
    BoundFamily::Probaineq
}

fn default_level() -> f64 {
    0.05
}

fn default_epsilon() -> f64 {
    0.5
}

fn default_window() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentSpec {
    Deviation {
        depths: Vec<u32>,
        replications: u64,
        #[serde(default)]
        deltas: Vec<f64>,
        #[serde(default)]
        delta_sd: Option<DeltaFromSd>,
        #[serde(default = "tree_scope")]
        scope: AverageScope,
        /// Bound family whose shape is fitted: `probaineq` or `expoineq`.
        #[serde(default = "default_bound_family")]
        bound: BoundFamily,
        /// Overrides the model's ergodicity rate in the bound.
        #[serde(default)]
        alpha: Option<f64>,
    },
    Clt {
        depth: u32,
        replications: u64,
        #[serde(default)]
        pf2: Option<f64>,
        #[serde(default = "clt_pvalue")]
        min_pvalue: f64,
        #[serde(default = "clt_variance_tol")]
        variance_tolerance: f64,
    },
    EstimatorClt {
        depths: Vec<u32>,
        replications: u64,
        #[serde(default = "default_level")]
        level: f64,
        #[serde(default = "frobenius_tol")]
        frobenius_tolerance: f64,
    },
    Mdp {
        n_grid: Vec<u64>,
        x_grid: Vec<f64>,
        replications: u64,
        gamma: f64,
        #[serde(default)]
        pf2: Option<f64>,
    },
    Superexp {
        /// Prefix lengths for the functional targets.
        #[serde(default)]
        n_grid: Vec<u64>,
        /// Depths for the estimator targets.
        #[serde(default)]
        depths: Vec<u32>,
        replications: u64,
        gamma: f64,
        delta: f64,
        target: SuperexpTarget,
        #[serde(default = "superexp_floor")]
        floor: f64,
    },
    Lil {
        depth: u32,
        replications: u64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_window")]
        window: u32,
        #[serde(default = "lil_fraction")]
        min_fraction: f64,
        #[serde(default)]
        pf2: Option<f64>,
    },
    Asclt {
        n: u64,
        #[serde(default = "one")]
        replications: u64,
        #[serde(default = "asclt_tol")]
        tolerance: f64,
        #[serde(default)]
        pf2: Option<f64>,
    },
    Slln {
        n_grid: Vec<u64>,
        replications: u64,
        #[serde(default = "slln_tol")]
        tolerance: f64,
    },
    MomentsExact {
        depths: Vec<u32>,
        /// Random kernels drawn in addition to the configured model, if any.
        #[serde(default)]
        random_kernels: u64,
        #[serde(default = "two_states")]
        states: usize,
        #[serde(default = "exact_tol")]
        tolerance: f64,
    },
    EventsExact {
        depths: Vec<u32>,
    },
}

fn tree_scope() -> AverageScope {
    AverageScope::Tree
}
fn clt_pvalue() -> f64 {
    0.01
}
fn clt_variance_tol() -> f64 {
    0.05
}
fn frobenius_tol() -> f64 {
    0.15
}
fn superexp_floor() -> f64 {
    -1.0
}
fn lil_fraction() -> f64 {
    0.9
}
fn one() -> u64 {
    1
}
fn asclt_tol() -> f64 {
    0.1
}
fn slln_tol() -> f64 {
    0.02
}
fn two_states() -> usize {
    2
}
fn exact_tol() -> f64 {
    1e-10
}

impl ExperimentSpec {
    pub fn type_name(&self) -> &'static str {
        match self {
            ExperimentSpec::Deviation { .. } => "deviation",
            ExperimentSpec::Clt { .. } => "clt",
            ExperimentSpec::EstimatorClt { .. } => "estimator-clt",
            ExperimentSpec::Mdp { .. } => "mdp",
            ExperimentSpec::Superexp { .. } => "superexp",
            ExperimentSpec::Lil { .. } => "lil",
            ExperimentSpec::Asclt { .. } => "asclt",
            ExperimentSpec::Slln { .. } => "slln",
            ExperimentSpec::MomentsExact { .. } => "moments-exact",
            ExperimentSpec::EventsExact { .. } => "events-exact",
        }
    }
}

/// A complete experiment: model, functional, experiment block, seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub functional: Option<FunctionalSpec>,
    pub experiment: ExperimentSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn increasing<T: PartialOrd>(xs: &[T]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

fn need(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(BmcError::InvalidParameter(msg.into()))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| BmcError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.experiment.type_name().to_string())
    }

    pub fn model(&self) -> Result<Model> {
        self.model
            .as_ref()
            .ok_or_else(|| BmcError::InvalidParameter(format!("{} needs a model block", self.experiment.type_name())))?
            .build()
    }

    pub fn functional(&self, model: &Model) -> Result<ResolvedFunctional> {
        self.functional
            .as_ref()
            .ok_or_else(|| {
                BmcError::InvalidParameter(format!("{} needs a functional block", self.experiment.type_name()))
            })?
            .resolve(model)
    }

    /// Shape checks that need no computation.
    pub fn validate(&self) -> Result<()> {
        use ExperimentSpec::*;
        let gamma_ok = |g: f64| need(g > 0.5 && g < 1.0, "gamma must lie in (1/2, 1)");
        match &self.experiment {
            Deviation {
                depths,
                replications,
                deltas,
                delta_sd,
                bound,
                ..
            } => {
                need(*replications >= 1, "replications must be >= 1")?;
                need(!depths.is_empty() && increasing(depths), "depths must be nonempty and increasing")?;
                need(
                    deltas.is_empty() != delta_sd.is_none(),
                    "give exactly one of `deltas` and `delta_sd`",
                )?;
                need(increasing(deltas) && deltas.iter().all(|d| *d > 0.0), "deltas must be positive and increasing")?;
                if let Some(rule) = delta_sd {
                    need(rule.multiple > 0.0, "delta_sd.multiple must be > 0")?;
                    need(depths.contains(&rule.depth), "delta_sd.depth must be one of the depths")?;
                }
                need(
                    matches!(bound, BoundFamily::Probaineq | BoundFamily::Expoineq),
                    "bound must be probaineq or expoineq",
                )
            }
            Clt { replications, .. } => need(*replications >= 1, "replications must be >= 1"),
            EstimatorClt {
                depths,
                replications,
                level,
                ..
            } => {
                need(*replications >= 1, "replications must be >= 1")?;
                need(!depths.is_empty() && increasing(depths), "depths must be nonempty and increasing")?;
                need(*level > 0.0 && *level < 1.0, "level must lie in (0, 1)")
            }
            Mdp {
                n_grid,
                x_grid,
                replications,
                gamma,
                ..
            } => {
                need(*replications >= 1, "replications must be >= 1")?;
                need(!n_grid.is_empty() && increasing(n_grid) && n_grid[0] >= 1, "n_grid must be nonempty and increasing")?;
                need(!x_grid.is_empty() && increasing(x_grid), "x_grid must be nonempty and increasing")?;
                gamma_ok(*gamma)
            }
            Superexp {
                n_grid,
                depths,
                replications,
                gamma,
                delta,
                target,
                ..
            } => {
                need(*replications >= 1, "replications must be >= 1")?;
                gamma_ok(*gamma)?;
                need(*delta > 0.0, "delta must be > 0")?;
                match target {
                    SuperexpTarget::MeanFunctional | SuperexpTarget::Bracket => need(
                        !n_grid.is_empty() && increasing(n_grid) && n_grid[0] >= 1,
                        "n_grid must be nonempty and increasing",
                    ),
                    _ => need(!depths.is_empty() && increasing(depths), "depths must be nonempty and increasing"),
                }
            }
            Lil {
                depth,
                replications,
                epsilon,
                window,
                ..
            } => {
                need(*replications >= 1, "replications must be >= 1")?;
                need(*epsilon >= 0.0, "epsilon must be >= 0")?;
                need(*depth >= 2 && depth.saturating_sub(*window) >= 2, "the LIL window must start at r >= 2")
            }
            Asclt { n, replications, .. } => {
                need(*replications >= 1, "replications must be >= 1")?;
                need(*n >= 16, "the almost-sure CLT needs n >= 16")
            }
            Slln {
                n_grid, replications, ..
            } => {
                need(*replications >= 1, "replications must be >= 1")?;
                need(!n_grid.is_empty() && increasing(n_grid) && n_grid[0] >= 1, "n_grid must be nonempty and increasing")
            }
            MomentsExact { depths, states, .. } => {
                need(!depths.is_empty() && increasing(depths), "depths must be nonempty and increasing")?;
                need(*states >= 2, "states must be >= 2")
            }
            EventsExact { depths } => need(!depths.is_empty() && increasing(depths), "depths must be nonempty and increasing"),
        }
    }
}
