//! Empirical averages over a generation, a subtree, or a permuted prefix, and
//! the permuted martingale with its bracket.

use crate::error::{BmcError, Result};
use crate::functional::{Functional, FunctionalKind};
use crate::simulate::TreePopulation;
use crate::tree::{generation, layer, layer_size, tree_size, GenerationPermutation};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// `f(X_i)` or `f(X_i, X_2i, X_2i+1)` depending on the kind of `f`.
#[inline]
pub fn eval_at(pop: &TreePopulation, f: &Functional, i: u64) -> f64 {
    match f.kind() {
        FunctionalKind::Single => f.eval1(pop.at(i)),
        FunctionalKind::Triangle => {
            let (x, y, z) = pop.triangle(i);
            f.eval3(x, y, z)
        }
    }
}

/// Deepest generation whose nodes can be evaluated: triangles need daughters.
fn evaluable_depth(pop: &TreePopulation, f: &Functional, r: u32) -> Result<()> {
    let needed = match f.kind() {
        FunctionalKind::Single => r,
        FunctionalKind::Triangle => r + 1,
    };
    if pop.depth() < needed {
        return Err(BmcError::InsufficientDepth {
            needed,
            available: pop.depth(),
        });
    }
    Ok(())
}

/// `M_{G_r}(f)`, the sum over generation `r`.
pub fn sum_generation(pop: &TreePopulation, f: &Functional, r: u32) -> Result<f64> {
    evaluable_depth(pop, f, r)?;
    Ok(layer(r).map(|i| eval_at(pop, f, i)).collect::<CompensatedSum>().value())
}

/// `M_{T_r}(f)`, the sum over the subtree of depth `r`.
pub fn sum_tree(pop: &TreePopulation, f: &Functional, r: u32) -> Result<f64> {
    evaluable_depth(pop, f, r)?;
    Ok((1..=tree_size(r))
        .map(|i| eval_at(pop, f, i))
        .collect::<CompensatedSum>()
        .value())
}

/// Running subtree sums `M_{T_0}(f), ..., M_{T_r}(f)` in one pass.
pub fn cumulative_tree_sums(pop: &TreePopulation, f: &Functional, r: u32) -> Result<Vec<f64>> {
    evaluable_depth(pop, f, r)?;
    let mut acc = CompensatedSum::new();
    let mut out = Vec::with_capacity(r as usize + 1);
    for q in 0..=r {
        for i in layer(q) {
            acc.add(eval_at(pop, f, i));
        }
        out.push(acc.value());
    }
    Ok(out)
}

/// Generation average `(1/2^r) sum_{i in G_r} f`.
pub fn mean_generation(pop: &TreePopulation, f: &Functional, r: u32) -> Result<f64> {
    Ok(sum_generation(pop, f, r)? / layer_size(r) as f64)
}

/// Subtree average `(1/|T_r|) sum_{i in T_r} f`.
pub fn mean_tree(pop: &TreePopulation, f: &Functional, r: u32) -> Result<f64> {
    Ok(sum_tree(pop, f, r)? / tree_size(r) as f64)
}

fn check_prefix(pop: &TreePopulation, f: &Functional, pi: &GenerationPermutation, n: u64) -> Result<()> {
    let limit = match f.kind() {
        FunctionalKind::Single => tree_size(pop.depth()),
        FunctionalKind::Triangle => tree_size(pop.depth()) / 2,
    };
    if n == 0 || n > limit {
        return Err(BmcError::OutOfRange(format!(
            "prefix length {n} must lie in 1..={limit}"
        )));
    }
    if n > pi.len() as u64 {
        return Err(BmcError::OutOfRange(format!(
            "prefix length {n} exceeds a permutation of depth {}",
            pi.depth()
        )));
    }
    Ok(())
}

/// Sum over the first `n` permuted nodes, `sum_{i<=n} f(X_pi(i))`.
pub fn sum_permuted(pop: &TreePopulation, f: &Functional, pi: &GenerationPermutation, n: u64) -> Result<f64> {
    check_prefix(pop, f, pi, n)?;
    Ok(pi.images()[..n as usize]
        .iter()
        .map(|&i| eval_at(pop, f, i))
        .collect::<CompensatedSum>()
        .value())
}

/// `(1/n) sum_{i<=n} f(X_pi(i))`.
pub fn mean_permuted(pop: &TreePopulation, f: &Functional, pi: &GenerationPermutation, n: u64) -> Result<f64> {
    Ok(sum_permuted(pop, f, pi, n)? / n as f64)
}

/// Running permuted means `M_n^pi(f) / n` at each `n` of an increasing grid.
pub fn permuted_means_on_grid(
    pop: &TreePopulation,
    f: &Functional,
    pi: &GenerationPermutation,
    grid: &[u64],
) -> Result<Vec<f64>> {
    let last = *grid.last().ok_or_else(|| BmcError::InvalidParameter("empty grid".into()))?;
    check_prefix(pop, f, pi, last)?;
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = CompensatedSum::new();
    let mut done = 0u64;
    for &n in grid {
        if n <= done && !out.is_empty() {
            return Err(BmcError::InvalidParameter("grid must be increasing".into()));
        }
        for &i in &pi.images()[done as usize..n as usize] {
            acc.add(eval_at(pop, f, i));
        }
        done = n;
        out.push(acc.value() / n as f64);
    }
    Ok(out)
}

/// Path of `M_k^pi(f) = sum_{j<=k} f(Delta_pi(j))` and of its bracket
/// `<M^pi>_k = sum_{j<=k} Pf^2(X_pi(j))`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingalePath {
    pub increments: Vec<f64>,
    /// `M_0 = 0, M_1, ..., M_n`.
    pub partial_sums: Vec<f64>,
    /// `<M>_0 = 0, <M>_1, ..., <M>_n`.
    pub bracket: Vec<f64>,
}

impl MartingalePath {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.partial_sums.last().expect("M_0 is always present")
    }
}

/// Martingale path of a triangle functional with `Pf = 0`, the caller
/// supplying the single functional `Pf^2`.
pub fn martingale_path(
    pop: &TreePopulation,
    f: &Functional,
    pi: &GenerationPermutation,
    n: u64,
    pf2: &Functional,
) -> Result<MartingalePath> {
    f.expect_kind(FunctionalKind::Triangle)?;
    pf2.expect_kind(FunctionalKind::Single)?;
    check_prefix(pop, f, pi, n)?;
    let mut increments = Vec::with_capacity(n as usize);
    let mut partial_sums = Vec::with_capacity(n as usize + 1);
    let mut bracket = Vec::with_capacity(n as usize + 1);
    partial_sums.push(0.0);
    bracket.push(0.0);
    let (mut m, mut b) = (CompensatedSum::new(), CompensatedSum::new());
    for &i in &pi.images()[..n as usize] {
        let (x, y, z) = pop.triangle(i);
        let inc = f.eval3(x, y, z);
        let v = pf2.eval1(x);
        if v < 0.0 {
            return Err(BmcError::InvalidParameter(format!(
                "Pf^2 is negative ({v}) at node {i}"
            )));
        }
        increments.push(inc);
        m.add(inc);
        b.add(v);
        partial_sums.push(m.value());
        bracket.push(b.value());
    }
    Ok(MartingalePath {
        increments,
        partial_sums,
        bracket,
    })
}

/// Generation of the `n`-th permuted node, `r_n = floor(log2 n)`.
pub fn prefix_generation(n: u64) -> Result<u32> {
    generation(n)
}
