//! Generation-major simulation of tree populations and tagged lineages.

use std::fmt::Write as _;

use crate::error::{BmcError, Result};
use crate::kernels::BifurcatingKernel;
use crate::seed::{ReplicationSeed, LINEAGE_STREAM, ROOT_STREAM};
use crate::tree::{layer_size, tree_size};

pub const DEFAULT_MAX_DEPTH: u32 = 24;

/// Values of the chain on the complete subtree of depth `depth`; node `n` is
/// stored at slot `n - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreePopulation {
    depth: u32,
    values: Vec<f64>,
    model: String,
    seed: Option<u64>,
}

impl TreePopulation {
    pub fn from_values(depth: u32, values: Vec<f64>) -> Result<Self> {
        if values.len() as u64 != tree_size(depth) {
            return Err(BmcError::LengthMismatch(format!(
                "a tree of depth {depth} has {} nodes, got {} values",
                tree_size(depth),
                values.len()
            )));
        }
        Ok(TreePopulation {
            depth,
            values,
            model: "data".into(),
            seed: None,
        })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Value at node `n` (1-based). Panics when `n` is outside the tree.
    #[inline]
    pub fn at(&self, n: u64) -> f64 {
        self.values[n as usize - 1]
    }

    pub fn get(&self, n: u64) -> Option<f64> {
        if n == 0 {
            None
        } else {
            self.values.get(n as usize - 1).copied()
        }
    }

    /// Mother-daughters triangle at node `i`.
    #[inline]
    pub fn triangle(&self, i: u64) -> (f64, f64, f64) {
        (self.at(i), self.at(2 * i), self.at(2 * i + 1))
    }

    /// Restriction to the subtree of depth `r <= depth`.
    pub fn truncated(&self, r: u32) -> Result<Self> {
        if r > self.depth {
            return Err(BmcError::InsufficientDepth {
                needed: r,
                available: self.depth,
            });
        }
        Ok(TreePopulation {
            depth: r,
            values: self.values[..tree_size(r) as usize].to_vec(),
            model: self.model.clone(),
            seed: self.seed,
        })
    }

    /// `node,value` CSV, one row per node in increasing id order.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 24 + 11);
        out.push_str("node,value\n");
        for (slot, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", slot + 1, v);
        }
        out
    }

    /// Parses a `node,value` CSV. Rows may come in any order, but the ids must
    /// be exactly `1..=2^(r+1)-1` for some depth `r`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next().map(|h| h.trim()) {
            Some("node,value") => {}
            other => {
                return Err(BmcError::Parse(format!(
                    "expected header `node,value`, found {other:?}"
                )))
            }
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let (id, value) = line
                .split_once(',')
                .ok_or_else(|| BmcError::Parse(format!("row {}: `{line}`", k + 2)))?;
            let id: u64 = id
                .trim()
                .parse()
                .map_err(|e| BmcError::Parse(format!("row {}: node id: {e}", k + 2)))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|e| BmcError::Parse(format!("row {}: value: {e}", k + 2)))?;
            if id == 0 {
                return Err(BmcError::InvalidNode(0));
            }
            rows.push((id, value));
        }
        let max_id = rows.iter().map(|r| r.0).max().unwrap_or(0);
        if max_id == 0 {
            return Err(BmcError::Parse("no data rows".into()));
        }
        // smallest complete tree covering every id present
        let depth = 63 - (max_id + 1).next_power_of_two().leading_zeros() - 1;
        let size = tree_size(depth) as usize;
        let mut values = vec![None; size];
        for (id, v) in rows {
            let slot = &mut values[id as usize - 1];
            if slot.is_some() {
                return Err(BmcError::Parse(format!("node {id} appears twice")));
            }
            *slot = Some(v);
        }
        let missing: Vec<u64> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_none())
            .map(|(slot, _)| slot as u64 + 1)
            .collect();
        if !missing.is_empty() {
            return Err(BmcError::IncompleteTree { missing });
        }
        TreePopulation::from_values(depth, values.into_iter().flatten().collect())
    }
}

/// Simulates the chain on the tree of depth `depth`.
///
/// The root is drawn from the kernel's initial law on stream
/// [`ROOT_STREAM`]; the daughters of mother `i` come from one kernel draw on
/// stream `i`, so every node is a pure function of the replication seed.
pub fn simulate_tree<K: BifurcatingKernel + ?Sized>(
    kernel: &K,
    depth: u32,
    seed: ReplicationSeed,
) -> Result<TreePopulation> {
    simulate_tree_with_limit(kernel, depth, seed, DEFAULT_MAX_DEPTH)
}

pub fn simulate_tree_with_limit<K: BifurcatingKernel + ?Sized>(
    kernel: &K,
    depth: u32,
    seed: ReplicationSeed,
    max_depth: u32,
) -> Result<TreePopulation> {
    if depth > max_depth {
        return Err(BmcError::DepthLimit {
            requested: depth,
            max: max_depth,
        });
    }
    let mut values = vec![0.0; tree_size(depth) as usize];
    values[0] = kernel.sample_initial(&mut seed.stream(ROOT_STREAM));
    for q in 0..depth {
        let first = layer_size(q);
        for i in first..2 * first {
            let x = values[i as usize - 1];
            let (y, z) = kernel.sample_daughters(x, &mut seed.stream(i));
            values[2 * i as usize - 1] = y;
            values[2 * i as usize] = z;
        }
    }
    Ok(TreePopulation {
        depth,
        values,
        model: std::any::type_name::<K>().rsplit("::").next().unwrap_or("kernel").to_string(),
        seed: Some(seed.raw()),
    })
}

/// Random-lineage chain `Y_0 ~ nu`, `Y_{k+1} ~ Q(Y_k, .)`; returns
/// `steps + 1` states.
pub fn simulate_tagged_chain<K: BifurcatingKernel + ?Sized>(
    kernel: &K,
    steps: usize,
    seed: ReplicationSeed,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(BmcError::InvalidParameter("a lineage needs at least one step".into()));
    }
    let mut rng = seed.stream(LINEAGE_STREAM);
    let mut path = Vec::with_capacity(steps + 1);
    let mut y = kernel.sample_initial(&mut rng);
    path.push(y);
    for _ in 0..steps {
        y = kernel.sample_lineage_step(y, &mut rng);
        path.push(y);
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{BarParams, FiniteKernel, InitialLaw};

    fn noise_free() -> BarParams {
        BarParams::gaussian(0.5, 1.0, -0.25, 2.0, 0.0, 0.0).with_initial(InitialLaw::PointMass { x0: 1.0 })
    }

    #[test]
    fn sizes_and_determinism() {
        let p = BarParams::gaussian(0.5, 1.0, -0.25, 2.0, 1.0, 0.3);
        let s = ReplicationSeed::new(1, "t", 0);
        let a = simulate_tree(&p, 3, s).unwrap();
        assert_eq!(a.len(), 15);
        assert_eq!(a, simulate_tree(&p, 3, s).unwrap());
        let b = simulate_tree(&p, 3, ReplicationSeed::new(1, "t", 1)).unwrap();
        assert_ne!(a.values(), b.values());
        assert!(matches!(
            simulate_tree(&p, 25, s),
            Err(BmcError::DepthLimit { requested: 25, max: 24 })
        ));
    }

    #[test]
    fn noise_free_tree_follows_the_recursion() {
        let pop = simulate_tree(&noise_free(), 4, ReplicationSeed::from_raw(0)).unwrap();
        assert_eq!(pop.at(1), 1.0);
        for i in 1..16u64 {
            let (x, y, z) = pop.triangle(i);
            assert_eq!(y, 0.5 * x + 1.0);
            assert_eq!(z, -0.25 * x + 2.0);
        }
    }

    #[test]
    fn prefix_of_a_deeper_tree_is_the_shallow_tree() {
        let p = BarParams::gaussian(0.5, 1.0, -0.25, 2.0, 1.0, 0.3);
        let s = ReplicationSeed::new(3, "t", 2);
        let deep = simulate_tree(&p, 6, s).unwrap();
        assert_eq!(deep.truncated(4).unwrap(), simulate_tree(&p, 4, s).unwrap());
    }

    #[test]
    fn csv_round_trip_and_missing_nodes() {
        let p = BarParams::gaussian(0.5, 1.0, -0.25, 2.0, 1.0, 0.3);
        let pop = simulate_tree(&p, 3, ReplicationSeed::from_raw(2)).unwrap();
        let csv = pop.to_csv();
        assert_eq!(csv.lines().count(), 16);
        let back = TreePopulation::from_csv(&csv).unwrap();
        assert_eq!(back.values(), pop.values());
        let without_7: String = csv
            .lines()
            .filter(|l| !l.starts_with("7,"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert_eq!(
            TreePopulation::from_csv(&without_7),
            Err(BmcError::IncompleteTree { missing: vec![7] })
        );
        assert!(TreePopulation::from_csv("id,value\n1,2\n").is_err());
    }

    #[test]
    fn tagged_chain_on_uniform_kernel_is_uniform() {
        let k = FiniteKernel::new(2, vec![0.25; 8], vec![1.0, 0.0]).unwrap();
        let path = simulate_tagged_chain(&k, 100_000, ReplicationSeed::from_raw(8)).unwrap();
        assert_eq!(path.len(), 100_001);
        let ones = path[1..].iter().filter(|v| **v == 1.0).count() as f64 / 1e5;
        assert!((ones - 0.5).abs() < 3.0 * (0.25f64 / 1e5).sqrt());
        assert!(simulate_tagged_chain(&k, 0, ReplicationSeed::from_raw(8)).is_err());
        assert_eq!(simulate_tagged_chain(&k, 1, ReplicationSeed::from_raw(8)).unwrap().len(), 2);
    }

    #[test]
    fn tagged_chain_symmetric_bar_mean() {
        let (a, b) = (0.6, 1.0);
        let p = BarParams::gaussian(a, b, a, b, 1.0, 0.0).with_initial(InitialLaw::PointMass { x0: b / (1.0 - a) });
        let path = simulate_tagged_chain(&p, 100_000, ReplicationSeed::from_raw(21)).unwrap();
        let mean = path.iter().sum::<f64>() / path.len() as f64;
        // AR(1) with unit innovations: long-run variance 1 / (1 - a)^2
        let se = (1.0 / (1.0 - a) / (1.0 - a) / path.len() as f64).sqrt();
        assert!((mean - b / (1.0 - a)).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn same_generation_nodes_share_a_marginal_law() {
        // exchangeable daughters: every node of a generation has the same law
        let p = BarParams::gaussian(0.5, 1.0, 0.5, 1.0, 1.0, 0.4);
        let n = 10_000;
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for rep in 0..n as u64 {
            let pop = simulate_tree(&p, 2, ReplicationSeed::new(5, "exch", rep)).unwrap();
            a.push(pop.at(4));
            b.push(pop.at(7));
        }
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let mut d: f64 = 0.0;
        let (mut i, mut j) = (0, 0);
        while i < n && j < n {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 - j as f64).abs() / n as f64);
        }
        assert!(d <= 0.05, "KS distance {d}");
    }
}
