use depctx::synth::{random_projective_tree, random_tree_mix};
use depctx::transition::{Configuration, Oracle, SwapStrategy, Transition};
use depctx::treebank::{is_projective, DepTree};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn labels(n: usize) -> Vec<usize> {
    (0..n).map(|i| i % 3).collect()
}

fn replay(n: usize, seq: &[Transition]) -> Configuration {
    let mut c = Configuration::initial(n);
    for &t in seq {
        assert!(c.is_legal(t), "{t} is illegal");
        c.apply(t).unwrap();
    }
    c
}

fn swaps(seq: &[Transition]) -> usize {
    seq.iter().filter(|&&t| t == Transition::Swap).count()
}

#[test]
fn classic_non_projective_sentence_needs_swaps() {
    // 1 <- 3, 2 <- 4, crossing
    let tree = DepTree::unlabeled(vec![3, 4, 0, 3]);
    assert!(!is_projective(&tree));
    let seq = Oracle::new(&tree, labels(4), SwapStrategy::Lazy).sequence().unwrap();
    assert!(swaps(&seq) > 0);
    assert_eq!(replay(4, &seq).heads(), tree.heads);
}

#[test]
fn eager_and_lazy_agree_on_projective_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in 1..=12 {
        let tree = random_projective_tree(n, &mut rng);
        let lazy = Oracle::new(&tree, labels(n), SwapStrategy::Lazy).sequence().unwrap();
        let eager = Oracle::new(&tree, labels(n), SwapStrategy::Eager).sequence().unwrap();
        assert_eq!(swaps(&lazy), 0);
        assert_eq!(swaps(&eager), 0);
        assert_eq!(lazy.len(), 2 * n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn oracle_reconstructs_gold(n in 1usize..=12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_tree_mix(n, 0.5, &mut rng);
        let labels = labels(n);
        let lazy = Oracle::new(&tree, labels.clone(), SwapStrategy::Lazy).sequence().unwrap();
        let eager = Oracle::new(&tree, labels.clone(), SwapStrategy::Eager).sequence().unwrap();
        for seq in [&lazy, &eager] {
            let end = replay(n, seq);
            prop_assert!(end.is_terminal());
            prop_assert_eq!(end.heads(), tree.heads.clone());
            let got: Vec<usize> = end.label_ids().into_iter().map(Option::unwrap).collect();
            prop_assert_eq!(&got, &labels);
        }
        prop_assert!(swaps(&lazy) <= swaps(&eager));
        if is_projective(&tree) {
            prop_assert_eq!(swaps(&lazy), 0);
        }
    }
}
