use bmc::empirical::{mean_generation, mean_permuted, mean_tree, martingale_path};
use bmc::exact::{brute_force_moment, centered, random_kernel, second_moment_generation, MomentScope};
use bmc::functional::Functional;
use bmc::kernels::{BarFunctional, BarParams, FiniteKernel};
use bmc::seed::ReplicationSeed;
use bmc::simulate::simulate_tree;
use bmc::tree::{children, generation, layer_size, parent, sample_permutation, tree_size};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn heap_layout(n in 1u64..1 << 40) {
        let (l, r) = children(n).unwrap();
        prop_assert_eq!(parent(l).unwrap(), Some(n));
        prop_assert_eq!(parent(r).unwrap(), Some(n));
        prop_assert_eq!(generation(n).unwrap(), 63 - n.leading_zeros());
    }

    #[test]
    fn layers_fill_the_tree(r in 0u32..40) {
        prop_assert_eq!((0..=r).map(layer_size).sum::<u64>(), tree_size(r));
    }

    #[test]
    fn permutations_stay_in_generation_and_invert(depth in 0u32..10, seed: u64) {
        let pi = sample_permutation(depth, &mut ReplicationSeed::from_raw(seed).stream(0));
        for i in 1..=tree_size(depth) {
            prop_assert_eq!(generation(pi.apply(i).unwrap()).unwrap(), generation(i).unwrap());
        }
        let id = pi.compose(&pi.inverse()).unwrap();
        prop_assert!(id.images().iter().enumerate().all(|(k, &v)| v == k as u64 + 1));
    }

    #[test]
    fn complete_prefixes_ignore_the_permutation(r in 0u32..8, seed: u64) {
        let k = random_kernel(seed, 3);
        let pop = simulate_tree(&k, r, ReplicationSeed::from_raw(seed)).unwrap();
        let f = Functional::single_table(vec![0.5, -1.0, 2.0]);
        let pi = sample_permutation(r, &mut ReplicationSeed::from_raw(seed).stream(7));
        let a = mean_permuted(&pop, &f, &pi, tree_size(r)).unwrap();
        prop_assert!((a - mean_tree(&pop, &f, r).unwrap()).abs() < 1e-12);
        // regrouping by generations
        let regrouped: f64 = (0..=r)
            .map(|q| layer_size(q) as f64 / tree_size(r) as f64 * mean_generation(&pop, &f, q).unwrap())
            .sum();
        prop_assert!((a - regrouped).abs() < 1e-12);
    }

    #[test]
    fn second_moment_formula_matches_enumeration(seed: u64, r in 0u32..4, m in 2usize..4) {
        prop_assume!(m == 2 || r <= 2);
        let k = random_kernel(seed, m);
        let raw: Vec<f64> = (0..m).map(|x| ((seed >> (8 * x)) & 0xff) as f64 / 64.0 - 2.0).collect();
        let f = centered(&k, &raw).unwrap();
        let formula = second_moment_generation(&k, &f, r).unwrap();
        let brute = brute_force_moment(&k, &f, r, 2, &MomentScope::Generation).unwrap();
        prop_assert!((formula - brute).abs() <= 1e-10, "{} vs {}", formula, brute);
    }

    #[test]
    fn kernels_are_stochastic(seed: u64, m in 2usize..5) {
        let k: FiniteKernel = random_kernel(seed, m);
        for row in [k.marginal0(), k.marginal1(), k.mean_matrix()] {
            for x in 0..m {
                prop_assert!((row.row(x).sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn residual_brackets_are_linear_in_n(seed: u64, depth in 2u32..8) {
        let p = BarParams::gaussian(0.4, 1.0, -0.3, 0.5, 1.7, 0.2);
        let pop = simulate_tree(&p, depth, ReplicationSeed::from_raw(seed)).unwrap();
        let pi = sample_permutation(depth - 1, &mut ReplicationSeed::from_raw(seed).stream(3));
        let f = BarFunctional::Residual0.to_functional(&p);
        let n = tree_size(depth - 1);
        let path = martingale_path(&pop, &f, &pi, n, &Functional::constant(1.7)).unwrap();
        for (k, b) in path.bracket.iter().enumerate() {
            prop_assert!((b - 1.7 * k as f64).abs() < 1e-9);
        }
        for k in 1..path.partial_sums.len() {
            prop_assert!((path.partial_sums[k] - path.partial_sums[k - 1] - path.increments[k - 1]).abs() < 1e-9);
        }
    }
}
