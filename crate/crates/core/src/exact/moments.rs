//! Exact moments of empirical averages for finite-state kernels: the closed
//! form of the generation second moment and a brute-force enumeration oracle.

use crate::error::{BmcError, Result};
use crate::exact::chain::stationary_distribution;
use crate::kernels::FiniteKernel;
use crate::seed::ReplicationSeed;
use rand::Rng;
use crate::tree::{generation, layer, layer_size, tree_size, GenerationPermutation};

/// Enumeration budget for [`brute_force_moment`].
pub const MAX_CONFIGURATIONS: f64 = 1e7;

fn row_times(law: &[f64], kernel: &FiniteKernel, steps: usize) -> Vec<f64> {
    let q = kernel.mean_matrix();
    let m = kernel.states();
    let mut v = law.to_vec();
    for _ in 0..steps {
        v = (0..m).map(|y| (0..m).map(|x| v[x] * q[(x, y)]).sum()).collect();
    }
    v
}

/// Exact `E[(M_{G_r}(f)/2^r)^2]` from the decomposition over the generation
/// of the most recent common ancestor of two uniform nodes of `G_r`:
///
/// `sum_{p=0}^{r} 2^{-p-1{p<r}} nu Q^p P(Q^{r-p-1} f (x) Q^{r-p-1} f)`,
///
/// where the `p = r` term reads `nu Q^r f^2`.
pub fn second_moment_generation(kernel: &FiniteKernel, f: &[f64], r: u32) -> Result<f64> {
    let m = kernel.states();
    if f.len() != m {
        return Err(BmcError::LengthMismatch(format!("{} values for {m} states", f.len())));
    }
    let mu = stationary_distribution(&kernel.mean_matrix())?;
    let mean: f64 = mu.iter().zip(f).map(|(a, b)| a * b).sum();
    if mean.abs() > 1e-10 {
        return Err(BmcError::NotCentered(mean));
    }
    let mut total = 0.0;
    for p in 0..=r {
        let at_p = row_times(kernel.nu(), kernel, p as usize);
        let inner = if p == r {
            f.iter().map(|v| v * v).collect::<Vec<_>>()
        } else {
            let g = kernel.apply_q_power(f, i64::from(r - p - 1))?;
            kernel.apply_p_product(&g, &g)
        };
        let weight = if p < r {
            0.5f64.powi(p as i32 + 1)
        } else {
            0.5f64.powi(p as i32)
        };
        total += weight * FiniteKernel::integrate(&at_p, &inner);
    }
    Ok(total)
}

/// Which empirical average an enumeration targets.
#[derive(Debug, Clone, PartialEq)]
pub enum MomentScope {
    Generation,
    Tree,
    /// First `n` nodes in the order given by the permutation.
    Permuted { n: u64, pi: GenerationPermutation },
}

fn scope_weights(scope: &MomentScope, r: u32) -> Result<Vec<f64>> {
    let size = tree_size(r) as usize;
    let mut w = vec![0.0; size];
    match scope {
        MomentScope::Generation => {
            for i in layer(r) {
                w[i as usize - 1] = 1.0 / layer_size(r) as f64;
            }
        }
        MomentScope::Tree => w.iter_mut().for_each(|v| *v = 1.0 / size as f64),
        MomentScope::Permuted { n, pi } => {
            if *n == 0 || *n > tree_size(r) || *n > pi.len() as u64 {
                return Err(BmcError::OutOfRange(format!("prefix {n} outside the tree of depth {r}")));
            }
            if generation(*n)? > pi.depth() {
                return Err(BmcError::OutOfRange("permutation too shallow".into()));
            }
            for &i in &pi.images()[..*n as usize] {
                w[i as usize - 1] = 1.0 / *n as f64;
            }
        }
    }
    Ok(w)
}

struct Enumeration<'a> {
    kernel: &'a FiniteKernel,
    f: &'a [f64],
    weights: Vec<f64>,
    states: Vec<usize>,
    last_mother: usize,
    order: i32,
    total: f64,
}

impl Enumeration<'_> {
    fn visit(&mut self, mother: usize, mass: f64, partial: f64) {
        if mother > self.last_mother {
            self.total += mass * partial.powi(self.order);
            return;
        }
        let m = self.kernel.states();
        let x = self.states[mother - 1];
        let (left, right) = (2 * mother, 2 * mother + 1);
        for y in 0..m {
            for z in 0..m {
                let w = self.kernel.p(x, y, z);
                if w == 0.0 {
                    continue;
                }
                self.states[left - 1] = y;
                self.states[right - 1] = z;
                let next = partial + self.weights[left - 1] * self.f[y] + self.weights[right - 1] * self.f[z];
                self.visit(mother + 1, mass * w, next);
            }
        }
    }
}

/// Exact `E[(average of f over the scope)^order]` by enumerating every
/// configuration of the tree of depth `r`, weighted by `nu` and the tensor.
pub fn brute_force_moment(
    kernel: &FiniteKernel,
    f: &[f64],
    r: u32,
    order: u32,
    scope: &MomentScope,
) -> Result<f64> {
    let m = kernel.states();
    if f.len() != m {
        return Err(BmcError::LengthMismatch(format!("{} values for {m} states", f.len())));
    }
    if !matches!(order, 1 | 2 | 4) {
        return Err(BmcError::InvalidParameter(format!("order {order} not in {{1, 2, 4}}")));
    }
    let configurations = (m as f64).powf(tree_size(r) as f64);
    if configurations > MAX_CONFIGURATIONS {
        return Err(BmcError::StateSpaceExplosion(configurations));
    }
    let weights = scope_weights(scope, r)?;
    let mut e = Enumeration {
        kernel,
        f,
        weights,
        states: vec![0; tree_size(r) as usize],
        last_mother: (layer_size(r) - 1) as usize,
        order: order as i32,
        total: 0.0,
    };
    for x in 0..m {
        let w = kernel.nu()[x];
        if w == 0.0 {
            continue;
        }
        e.states[0] = x;
        let start = e.weights[0] * f[x];
        e.visit(1, w, start);
    }
    Ok(e.total)
}

/// `E[M_{T_r}(f)/|T_r|] = sum_q (2^q/|T_r|) nu Q^q f`.
pub fn tree_mean_exact(kernel: &FiniteKernel, f: &[f64], r: u32) -> f64 {
    (0..=r)
        .map(|q| {
            let law = row_times(kernel.nu(), kernel, q as usize);
            layer_size(q) as f64 / tree_size(r) as f64 * FiniteKernel::integrate(&law, f)
        })
        .sum()
}

/// A kernel with every transition and initial weight bounded away from 0,
/// drawn from `seed`.
pub fn random_kernel(seed: u64, m: usize) -> FiniteKernel {
    let mut rng = ReplicationSeed::from_raw(seed).stream(0);
    let mut p: Vec<f64> = (0..m * m * m).map(|_| rng.random_range(0.05..1.0)).collect();
    for x in 0..m {
        let s: f64 = p[x * m * m..(x + 1) * m * m].iter().sum();
        p[x * m * m..(x + 1) * m * m].iter_mut().for_each(|v| *v /= s);
    }
    let nu: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = nu.iter().sum();
    FiniteKernel::new(m, p, nu.iter().map(|v| v / s).collect()).expect("normalized by construction")
}

/// `raw - (mu, raw)` for the stationary law `mu`.
pub fn centered(kernel: &FiniteKernel, raw: &[f64]) -> Result<Vec<f64>> {
    let mu = stationary_distribution(&kernel.mean_matrix())?;
    let mean: f64 = mu.iter().zip(raw).map(|(a, b)| a * b).sum();
    Ok(raw.iter().map(|v| v - mean).collect())
}
