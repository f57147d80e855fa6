//! Finite-state T-transition probabilities given as an explicit tensor.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{BmcError, Result};
use crate::functional::{Functional, FunctionalKind};
use crate::seed::StreamRng;

const MASS_TOL: f64 = 1e-12;

/// `p[x][y][z]`: probability that a mother in state `x` has daughters `(y, z)`,
/// together with the initial law `nu` of the root.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteKernel {
    m: usize,
    p: Vec<f64>,
    nu: Vec<f64>,
    // per mother state: cumulative masses over the m*m daughter cells
    cumulative: Vec<f64>,
    nu_cumulative: Vec<f64>,
}

fn cumulate(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn pick(cumulative: &[f64], u: f64) -> usize {
    let total = *cumulative.last().expect("non-empty table");
    let target = u * total;
    cumulative
        .iter()
        .position(|&c| target < c)
        .unwrap_or(cumulative.len() - 1)
}

impl FiniteKernel {
    pub fn new(m: usize, p: Vec<f64>, nu: Vec<f64>) -> Result<Self> {
        if m < 2 {
            return Err(BmcError::InvalidKernel(format!("need at least 2 states, got {m}")));
        }
        if p.len() != m * m * m || nu.len() != m {
            return Err(BmcError::InvalidKernel(format!(
                "expected {} tensor entries and {} initial weights, got {} and {}",
                m * m * m,
                m,
                p.len(),
                nu.len()
            )));
        }
        if p.iter().chain(&nu).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(BmcError::InvalidKernel("negative or non-finite entry".into()));
        }
        for x in 0..m {
            let mass: f64 = p[x * m * m..(x + 1) * m * m].iter().sum();
            if (mass - 1.0).abs() > MASS_TOL {
                return Err(BmcError::InvalidKernel(format!(
                    "row {x} of the tensor sums to {mass}"
                )));
            }
        }
        let nu_mass: f64 = nu.iter().sum();
        if (nu_mass - 1.0).abs() > MASS_TOL {
            return Err(BmcError::InvalidKernel(format!("initial law sums to {nu_mass}")));
        }
        let cumulative = (0..m)
            .flat_map(|x| cumulate(&p[x * m * m..(x + 1) * m * m]))
            .collect();
        let nu_cumulative = cumulate(&nu);
        Ok(FiniteKernel {
            m,
            p,
            nu,
            cumulative,
            nu_cumulative,
        })
    }

    /// Kernel whose daughters are drawn independently from the marginals
    /// `p0[x][.]` and `p1[x][.]`.
    pub fn from_independent_marginals(p0: &DMatrix<f64>, p1: &DMatrix<f64>, nu: Vec<f64>) -> Result<Self> {
        let m = p0.nrows();
        let mut p = vec![0.0; m * m * m];
        for x in 0..m {
            for y in 0..m {
                for z in 0..m {
                    p[(x * m + y) * m + z] = p0[(x, y)] * p1[(x, z)];
                }
            }
        }
        FiniteKernel::new(m, p, nu)
    }

    pub fn states(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn p(&self, x: usize, y: usize, z: usize) -> f64 {
        self.p[(x * self.m + y) * self.m + z]
    }

    pub fn tensor(&self) -> &[f64] {
        &self.p
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn with_nu(&self, nu: Vec<f64>) -> Result<Self> {
        FiniteKernel::new(self.m, self.p.clone(), nu)
    }

    /// Law of the first daughter, `P0[x][y] = sum_z p[x][y][z]`.
    pub fn marginal0(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |x, y| (0..self.m).map(|z| self.p(x, y, z)).sum())
    }

    /// Law of the second daughter, `P1[x][z] = sum_y p[x][y][z]`.
    pub fn marginal1(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |x, z| (0..self.m).map(|y| self.p(x, y, z)).sum())
    }

    /// Mean kernel `Q = (P0 + P1) / 2`, the transition matrix of a random lineage.
    pub fn mean_matrix(&self) -> DMatrix<f64> {
        (self.marginal0() + self.marginal1()) * 0.5
    }

    /// `Pf(x) = sum_{y,z} f(x,y,z) p[x][y][z]` for a triangle functional.
    pub fn apply_p(&self, f: &Functional) -> Result<Vec<f64>> {
        f.expect_kind(FunctionalKind::Triangle)?;
        let m = self.m;
        Ok((0..m)
            .map(|x| {
                let mut acc = 0.0;
                for y in 0..m {
                    for z in 0..m {
                        let w = self.p(x, y, z);
                        if w != 0.0 {
                            acc += w * f.eval3(x as f64, y as f64, z as f64);
                        }
                    }
                }
                acc
            })
            .collect())
    }

    /// `P(g (x) h)(x) = sum_{y,z} g(y) h(z) p[x][y][z]`.
    pub fn apply_p_product(&self, g: &[f64], h: &[f64]) -> Vec<f64> {
        let m = self.m;
        (0..m)
            .map(|x| {
                let mut acc = 0.0;
                for y in 0..m {
                    for z in 0..m {
                        acc += self.p(x, y, z) * g[y] * h[z];
                    }
                }
                acc
            })
            .collect()
    }

    /// `Q^k f` for a single functional given by its table.
    pub fn apply_q_power(&self, f: &[f64], k: i64) -> Result<Vec<f64>> {
        if k < 0 {
            return Err(BmcError::InvalidParameter(format!("negative power {k}")));
        }
        if f.len() != self.m {
            return Err(BmcError::LengthMismatch(format!(
                "functional has {} values for {} states",
                f.len(),
                self.m
            )));
        }
        let q = self.mean_matrix();
        let mut v = DVector::from_column_slice(f);
        for _ in 0..k {
            v = &q * v;
        }
        Ok(v.iter().copied().collect())
    }

    /// Expectation of a single functional under a row vector law.
    pub fn integrate(law: &[f64], f: &[f64]) -> f64 {
        law.iter().zip(f).map(|(a, b)| a * b).sum()
    }

    pub fn sample_initial_state(&self, rng: &mut StreamRng) -> usize {
        pick(&self.nu_cumulative, rng.random::<f64>())
    }

    pub fn sample_daughter_states(&self, x: usize, rng: &mut StreamRng) -> (usize, usize) {
        let cells = &self.cumulative[x * self.m * self.m..(x + 1) * self.m * self.m];
        let cell = pick(cells, rng.random::<f64>());
        (cell / self.m, cell % self.m)
    }

    /// Parses the text format: `m`, then `m` blocks of `m x m` rows holding the
    /// slices `p[x]`, then one row with `nu`. All tokens are whitespace separated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let m: usize = tokens
            .next()
            .ok_or_else(|| BmcError::Parse("empty kernel file".into()))?
            .parse()
            .map_err(|e| BmcError::Parse(format!("state count: {e}")))?;
        let values: Vec<f64> = tokens
            .map(|t| t.parse::<f64>().map_err(|e| BmcError::Parse(format!("`{t}`: {e}"))))
            .collect::<Result<_>>()?;
        let cube = m * m * m;
        if values.len() != cube + m {
            return Err(BmcError::Parse(format!(
                "expected {} numbers after the state count, found {}",
                cube + m,
                values.len()
            )));
        }
        FiniteKernel::new(m, values[..cube].to_vec(), values[cube..].to_vec())
    }

    pub fn to_text(&self) -> String {
        let m = self.m;
        let mut out = format!("{m}\n");
        for x in 0..m {
            for y in 0..m {
                let row: Vec<String> = (0..m).map(|z| format!("{}", self.p(x, y, z))).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        let nu: Vec<String> = self.nu.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", nu.join(" "));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform_cells() -> FiniteKernel {
        FiniteKernel::new(2, vec![0.25; 8], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn mean_kernel_of_identity_and_swap() {
        // P0 = identity, P1 = swap
        let mut p = vec![0.0; 8];
        p[1] = 1.0; // x=0 -> (0, 1)
        p[6] = 1.0; // x=1 -> (1, 0)
        let k = FiniteKernel::new(2, p, vec![1.0, 0.0]).unwrap();
        let q = k.mean_matrix();
        for v in q.iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn apply_p_examples() {
        let k = uniform_cells();
        let one = Functional::triangle("1", |_, _, _| 1.0);
        assert_eq!(k.apply_p(&one).unwrap(), vec![1.0, 1.0]);
        let sum = Functional::triangle("y+z", |_, y, z| y + z);
        assert!((k.apply_p(&sum).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!(k.apply_p(&Functional::constant(1.0)).is_err());
    }

    #[test]
    fn apply_q_power_examples() {
        let q = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        let k = FiniteKernel::from_independent_marginals(&q, &q, vec![0.5, 0.5]).unwrap();
        let f = [1.0, -2.0];
        assert_eq!(k.apply_q_power(&f, 0).unwrap(), f.to_vec());
        let qf = k.apply_q_power(&f, 1).unwrap();
        assert!((qf[0] - 0.7).abs() < 1e-12 && (qf[1] + 1.4).abs() < 1e-12);
        assert!(k.apply_q_power(&f, -1).is_err());
        let uniform = uniform_cells();
        let centered = uniform.apply_q_power(&[1.0, -1.0], 1).unwrap();
        assert!(centered.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_tensors() {
        assert!(FiniteKernel::new(2, vec![0.3; 8], vec![0.5, 0.5]).is_err());
        assert!(FiniteKernel::new(2, vec![0.25; 8], vec![0.6, 0.5]).is_err());
        assert!(FiniteKernel::new(1, vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn text_format_round_trip() {
        let text = "2\n0.25 0.25\n0.25 0.25\n0.1 0.2\n0.3 0.4\n0.5 0.5\n";
        let k = FiniteKernel::parse(text).unwrap();
        assert_eq!(k.p(1, 1, 0), 0.3);
        assert_eq!(FiniteKernel::parse(&k.to_text()).unwrap(), k);
        assert!(FiniteKernel::parse("2\n0.25 0.25\n").is_err());
        assert!(FiniteKernel::parse("2 a").is_err());
    }

    fn kernel_strategy() -> impl Strategy<Value = (FiniteKernel, Vec<f64>, Vec<f64>)> {
        (2usize..4).prop_flat_map(|m| {
            (
                proptest::collection::vec(0.01f64..1.0, m * m * m),
                proptest::collection::vec(0.01f64..1.0, m),
                proptest::collection::vec(-3.0f64..3.0, m * m * m),
                proptest::collection::vec(-3.0f64..3.0, m * m * m),
            )
                .prop_map(move |(raw, nu, f, g)| {
                    let mut p = raw;
                    for x in 0..m {
                        let s: f64 = p[x * m * m..(x + 1) * m * m].iter().sum();
                        p[x * m * m..(x + 1) * m * m].iter_mut().for_each(|v| *v /= s);
                    }
                    let s: f64 = nu.iter().sum();
                    let nu = nu.iter().map(|v| v / s).collect();
                    (FiniteKernel::new(m, p, nu).unwrap(), f, g)
                })
        })
    }

    proptest! {
        #[test]
        fn marginals_and_mean_are_stochastic((k, _, _) in kernel_strategy()) {
            for mat in [k.marginal0(), k.marginal1(), k.mean_matrix()] {
                for row in mat.row_iter() {
                    prop_assert!((row.sum() - 1.0).abs() < 1e-12);
                    prop_assert!(row.iter().all(|v| *v >= 0.0));
                }
            }
        }

        #[test]
        fn apply_p_is_linear_and_integrates((k, f, g) in kernel_strategy(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let m = k.states();
            let ff = Functional::triangle_table(m, f.clone()).unwrap();
            let gg = Functional::triangle_table(m, g.clone()).unwrap();
            let combo: Vec<f64> = f.iter().zip(&g).map(|(u, v)| a * u + b * v).collect();
            let cc = Functional::triangle_table(m, combo.clone()).unwrap();
            let (pf, pg, pc) = (k.apply_p(&ff).unwrap(), k.apply_p(&gg).unwrap(), k.apply_p(&cc).unwrap());
            for x in 0..m {
                prop_assert!((pc[x] - (a * pf[x] + b * pg[x])).abs() < 1e-12);
            }
            let direct: f64 = (0..m).map(|x| (0..m).map(|y| (0..m).map(|z| {
                k.nu()[x] * k.p(x, y, z) * combo[(x * m + y) * m + z]
            }).sum::<f64>()).sum::<f64>()).sum();
            prop_assert!((FiniteKernel::integrate(k.nu(), &pc) - direct).abs() < 1e-12);
        }
    }
}
