mod common;

use common::*;
use depctx::graph::{cle_decode, eisner2_decode, eisner_decode, ArcScores, SiblingScores};
use depctx::treebank::is_projective;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn tree_enumeration_counts() {
    // single-root labeled trees on n nodes: n^(n-1); projective ones follow
    // the ternary numbers C(3n-2, n-1) / (2n-1)
    for (n, all, proj) in [(1, 1, 1), (2, 2, 2), (3, 9, 7), (4, 64, 30), (5, 625, 143)] {
        assert_eq!(all_trees(n).len(), all, "n = {n}");
        assert_eq!(projective_trees(n).len(), proj, "n = {n}");
    }
}

#[test]
fn eisner_matches_projective_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trees: Vec<_> = (1..=6).map(projective_trees).collect();
    for k in 0..100 {
        let n = 1 + k % 6;
        let scores = random_arc_scores(n, &mut rng, k % 2 == 0);
        let tree = eisner_decode(&scores);
        assert!(tree.is_valid() && tree.root_children() == 1 && is_projective(&tree));
        let best = best_score(&trees[n - 1], |h| scores.tree_score(h));
        assert_eq!(scores.tree_score(&tree.heads), best, "instance {k}");
    }
}

#[test]
fn eisner2_matches_sibling_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let trees: Vec<_> = (1..=5).map(projective_trees).collect();
    for k in 0..100 {
        let n = 1 + k % 5;
        let scores = random_sibling_scores(n, &mut rng, k % 2 == 0);
        let tree = eisner2_decode(&scores);
        assert!(tree.is_valid() && tree.root_children() == 1 && is_projective(&tree));
        let best = best_score(&trees[n - 1], |h| scores.tree_score(h));
        let got = scores.tree_score(&tree.heads);
        assert!((got - best).abs() < 1e-9, "instance {k}: {got} vs {best}");
    }
}

#[test]
fn eisner2_with_flat_siblings_equals_eisner() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for n in 1..=8 {
        let arcs = random_arc_scores(n, &mut rng, false);
        let a = eisner_decode(&arcs);
        let b = eisner2_decode(&SiblingScores::from_arcs(&arcs));
        assert!((arcs.tree_score(&a.heads) - arcs.tree_score(&b.heads)).abs() < 1e-9);
    }
}

#[test]
fn cle_matches_arborescence_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let trees: Vec<_> = (1..=5).map(all_trees).collect();
    for k in 0..100 {
        let n = 1 + k % 5;
        let scores = random_arc_scores(n, &mut rng, k % 2 == 0);
        let tree = cle_decode(&scores);
        assert!(tree.is_valid() && tree.root_children() == 1);
        let best = best_score(&trees[n - 1], |h| scores.tree_score(h));
        let got = scores.tree_score(&tree.heads);
        assert!((got - best).abs() < 1e-9, "instance {k}: {got} vs {best}");
    }
}

#[test]
fn empty_input_gives_empty_tree() {
    assert!(eisner_decode(&ArcScores::new(0)).is_empty());
    assert!(eisner2_decode(&SiblingScores::new(0)).is_empty());
    assert!(cle_decode(&ArcScores::new(0)).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decoders_return_single_root_trees(n in 1usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arcs = random_arc_scores(n, &mut rng, false);
        let sib = random_sibling_scores(n, &mut rng, false);
        for tree in [eisner_decode(&arcs), eisner2_decode(&sib), cle_decode(&arcs)] {
            prop_assert_eq!(tree.len(), n);
            prop_assert!(tree.is_valid());
            prop_assert_eq!(tree.root_children(), 1);
        }
        prop_assert!(is_projective(&eisner_decode(&arcs)));
        prop_assert!(is_projective(&eisner2_decode(&sib)));
    }

    #[test]
    fn cle_never_scores_below_eisner(n in 1usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arcs = random_arc_scores(n, &mut rng, false);
        let proj = arcs.tree_score(&eisner_decode(&arcs).heads);
        let any = arcs.tree_score(&cle_decode(&arcs).heads);
        prop_assert!(any >= proj - 1e-9);
    }

    #[test]
    fn shifting_all_scores_keeps_the_argmax(n in 1usize..9, seed in any::<u64>(), c in -10i32..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arcs = random_arc_scores(n, &mut rng, true);
        let shifted = ArcScores::from_fn(n, |h, d| arcs.get(h, d) + c as f64);
        let a = eisner_decode(&arcs);
        let b = eisner_decode(&shifted);
        prop_assert_eq!(arcs.tree_score(&a.heads), arcs.tree_score(&b.heads));
    }
}
