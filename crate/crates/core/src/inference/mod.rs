//! Factor graphs and belief propagation for part replacement and material suggestion.

mod bp;
mod builders;
mod graph;

pub use bp::{run_loopy_bp, BpMode, BpSettings};
pub use builders::{build_material_factor_graph, build_reform_factor_graph, PotentialWeights, MATERIAL_LABELS};
pub use graph::{
    brute_force_map, Assignment, FactorGraph, FactorKind, PairwiseFactor, Variable, BRUTE_FORCE_LIMIT,
    POTENTIAL_FLOOR,
};

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tree(rng: &mut ChaCha8Rng, n: usize, labels: usize) -> FactorGraph {
        let mut g = FactorGraph::new();
        for v in 0..n {
            let l = rng.gen_range(1..=labels);
            g.add_variable(v, (0..l).collect(), (0..l).map(|_| rng.gen_range(0.01..1.0)).collect());
        }
        for v in 1..n {
            let parent = rng.gen_range(0..v);
            let t = (0..g.domain(parent) * g.domain(v)).map(|_| rng.gen_range(0.01..1.0)).collect();
            g.add_pairwise(parent, v, t, rng.gen_range(0.1..2.0), FactorKind::Contact);
        }
        g
    }

    #[test]
    fn single_variable_takes_unary_argmax() {
        let mut g = FactorGraph::new();
        g.add_variable(7, vec![10, 11, 12], vec![0.2, 0.5, 0.3]);
        let a = run_loopy_bp(&g, &BpSettings::default()).unwrap();
        assert_eq!(a.labels, vec![11]);
        assert_eq!(a, brute_force_map(&g).unwrap());
    }

    #[test]
    fn uniform_factors_pick_first_labels() {
        let mut g = FactorGraph::new();
        for v in 0..3 {
            g.add_variable(v, vec![0, 1, 2], vec![1.0; 3]);
        }
        g.add_pairwise(0, 1, vec![1.0; 9], 0.1, FactorKind::Contact);
        g.add_pairwise(1, 2, vec![1.0; 9], 0.1, FactorKind::Contact);
        assert_eq!(run_loopy_bp(&g, &BpSettings::default()).unwrap().indices, vec![0, 0, 0]);
        assert_eq!(brute_force_map(&g).unwrap().indices, vec![0, 0, 0]);
    }

    #[test]
    fn chains_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let g = random_tree(&mut rng, 5, 6);
            let bp = run_loopy_bp(&g, &BpSettings::default()).unwrap();
            let bf = brute_force_map(&g).unwrap();
            assert!((bp.log_potential - bf.log_potential).abs() < 1e-9);
        }
    }

    #[test]
    fn brute_force_refuses_huge_spaces() {
        let mut g = FactorGraph::new();
        for v in 0..8 {
            g.add_variable(v, (0..10).collect(), vec![1.0; 10]);
        }
        assert!(matches!(brute_force_map(&g), Err(crate::ReformError::LabelSpaceTooLarge(_))));
    }

    #[test]
    fn non_finite_entries_are_rejected() {
        let mut g = FactorGraph::new();
        g.add_variable(0, vec![0, 1], vec![f64::NAN, 1.0]);
        assert!(run_loopy_bp(&g, &BpSettings::default()).is_err());
    }

    #[test]
    fn pruning_drops_zero_labels() {
        let mut g = FactorGraph::new();
        g.add_variable(0, vec![5, 6, 7], vec![0.0, 1.0, 2.0]);
        g.add_variable(1, vec![5, 6], vec![1.0, 0.0]);
        g.add_pairwise(0, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 1.0, FactorKind::Contact);
        g.prune_zero_unaries().unwrap();
        assert_eq!(g.variables[0].labels, vec![6, 7]);
        assert_eq!(g.pairwise[0].table, vec![3.0, 5.0]);
        g.unaries[1] = vec![0.0];
        assert_eq!(g.prune_zero_unaries(), Err(1));
    }

    proptest! {
        #[test]
        fn unary_scaling_keeps_assignment(seed in any::<u64>(), scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_tree(&mut rng, 4, 4);
            let mut h = g.clone();
            for u in &mut h.unaries {
                for x in u.iter_mut() {
                    *x *= scale;
                }
            }
            let s = BpSettings::default();
            prop_assert_eq!(run_loopy_bp(&g, &s).unwrap().indices, run_loopy_bp(&h, &s).unwrap().indices);
        }
    }
}
