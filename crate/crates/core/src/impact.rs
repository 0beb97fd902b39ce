//! Derivative-based impact of input word representations.
//!
//! The impact of `x_i` on a target (a BiLSTM vector or a decision score) is
//! `100 * ||d target / d x_i|| / sum_j ||d target / d x_j||`, with the
//! Frobenius norm for vector targets.

use std::collections::BTreeMap;
use std::fmt;

use crate::autodiff::{ParameterStore, Tape, Var};
use crate::encoder::{EncodedSentence, Encoder, Vocab};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph::GraphModel;
use crate::rng::{self, Component};
use crate::transition::{Anchor, Configuration, Slot, TransitionParser};
use crate::treebank::{DepTree, Sentence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Taxonomy {
    /// Signed offset from the target token and gold-tree relation.
    DistanceRelation,
    /// Position in the parser configuration.
    ConfigPosition,
    /// Role relative to a predicted arc in the predicted tree.
    TreePosition,
}

impl fmt::Display for Taxonomy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Taxonomy::DistanceRelation => "distance-relation",
            Taxonomy::ConfigPosition => "config-position",
            Taxonomy::TreePosition => "tree-position",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImpactRecord {
    pub sentence: usize,
    pub source: usize,
    /// Target token, or decision number for score impacts.
    pub target: usize,
    pub impact: f64,
    pub bucket: String,
    /// `source - target` for vector targets.
    pub offset: Option<isize>,
}

/// Turns norms into percentages.
pub fn normalize(norms: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = norms.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::UndefinedImpact("all gradients are zero".into()));
    }
    Ok(norms.iter().map(|x| 100.0 * (x / total)).collect())
}

fn frobenius(rows: &[Vec<f64>]) -> f64 {
    rows.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Impact of every input on `v(x_t)`: `result[t - 1][i - 1]`.
pub fn lstm_impacts(tape: &Tape, encoded: &EncodedSentence) -> Result<Vec<Vec<f64>>> {
    let inputs = encoded.token_inputs();
    let wrt: Vec<Var> = inputs.iter().map(|&(_, x)| x).collect();
    let mut out = Vec::new();
    for t in 1..=encoded.len() {
        let Some(v) = encoded.vectors[t] else { continue };
        let jac = tape.jacobians(v, &wrt)?;
        let norms: Vec<f64> = jac.iter().map(|j| frobenius(j)).collect();
        out.push(normalize(&norms)?);
    }
    Ok(out)
}

/// Impact of every token input on a scalar score.
pub fn score_impacts(tape: &Tape, score: Var, encoded: &EncodedSentence) -> Result<Vec<f64>> {
    let grads = tape.backward(score)?;
    let norms: Vec<f64> = encoded
        .token_inputs()
        .iter()
        .map(|&(_, x)| grads.get(x).map_or(0.0, l2))
        .collect();
    normalize(&norms)
}

/// Distance-relation bucket: `"{offset}/{relation}"`, offsets pooled from 15 on.
pub fn distance_relation_bucket(gold: &DepTree, target: usize, source: usize) -> String {
    let offset = source as isize - target as isize;
    let relation = if source == target {
        "self"
    } else if gold.head(target) == source {
        "head"
    } else if gold.head(source) == target {
        "child"
    } else if gold.head(target) != 0 && gold.head(gold.head(target)) == source {
        "grandparent"
    } else if gold.head(source) == gold.head(target) {
        "sibling"
    } else {
        "other"
    };
    format!("{}/{relation}", offset_label(offset))
}

pub fn offset_label(offset: isize) -> String {
    match offset {
        o if o >= 15 => "+15+".into(),
        o if o <= -15 => "-15+".into(),
        0 => "0".into(),
        o => format!("{o:+}"),
    }
}

/// Configuration positions in precedence order: core items, then child
/// positions by stack depth, then the leftmost child of `b0`.
pub fn config_positions() -> Vec<Slot> {
    let mut slots = vec![
        Slot::Item(Anchor::Stack(0)),
        Slot::Item(Anchor::Stack(1)),
        Slot::Item(Anchor::Stack(2)),
        Slot::Item(Anchor::Buffer(0)),
        Slot::Item(Anchor::Buffer(1)),
    ];
    for i in 0..3 {
        let a = Anchor::Stack(i);
        slots.extend([
            Slot::Leftmost(a),
            Slot::Rightmost(a),
            Slot::InnerLeft(a),
            Slot::InnerRight(a),
        ]);
    }
    slots.push(Slot::Leftmost(Anchor::Buffer(0)));
    slots
}

pub fn config_position_bucket(config: &Configuration, source: usize) -> String {
    config_positions()
        .into_iter()
        .find(|s| s.tokens(config).contains(&source))
        .map_or_else(|| "other".to_string(), |s| s.to_string())
}

/// Tree-position bucket for the predicted arc `h -> d` in `tree`. Structural
/// roles win over distance buckets.
pub fn tree_position_bucket(tree: &DepTree, h: usize, d: usize, source: usize) -> String {
    if source == h {
        return "h".into();
    }
    if source == d {
        return "d".into();
    }
    let head_of = |x: usize| tree.head(x);
    if head_of(source) == d {
        return "c".into();
    }
    if head_of(source) == h {
        return "s".into();
    }
    if h != 0 && head_of(h) == source {
        return "g".into();
    }
    let from_h = source as isize - h as isize;
    let from_d = source as isize - d as isize;
    let (anchor, k) = if from_h.abs() <= from_d.abs() {
        ("h", from_h)
    } else {
        ("d", from_d)
    };
    if k.abs() > 5 {
        "other".into()
    } else {
        format!("{anchor}{k:+}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BucketStat {
    pub bucket: String,
    pub mean: f64,
    pub count: usize,
}

/// Mean impact and count per bucket, highest mean first (ties by name).
pub fn aggregate(records: &[ImpactRecord]) -> Vec<BucketStat> {
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = sums.entry(r.bucket.as_str()).or_default();
        e.0 += r.impact;
        e.1 += 1;
    }
    let mut stats: Vec<BucketStat> = sums
        .into_iter()
        .map(|(b, (sum, count))| BucketStat {
            bucket: b.to_string(),
            mean: sum / count as f64,
            count,
        })
        .collect();
    stats.sort_by(|a, b| b.mean.total_cmp(&a.mean).then_with(|| a.bucket.cmp(&b.bucket)));
    stats
}

/// TSV with header `taxonomy, bucket, mean_impact, count`.
pub fn impact_tsv(taxonomy: Taxonomy, stats: &[BucketStat]) -> String {
    let mut out = String::from("taxonomy\tbucket\tmean_impact\tcount\n");
    for s in stats {
        out.push_str(&format!("{taxonomy}\t{}\t{:.6}\t{}\n", s.bucket, s.mean, s.count));
    }
    out
}

/// Impacts of all inputs on every BiLSTM vector, bucketed by the gold tree.
pub fn corpus_lstm_impacts(
    encoder: &Encoder,
    store: &ParameterStore,
    vocab: &Vocab,
    sentences: &[Sentence],
    exec: Exec,
) -> Result<Vec<ImpactRecord>> {
    let per_sentence = exec.try_map(sentences, |si, sentence| -> Result<Vec<ImpactRecord>> {
        if sentence.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let ids = encoder.token_ids(
            vocab,
            sentence,
            false,
            &mut rng::stream(0, Component::AblationEval, si as u64),
        );
        let encoded = encoder.encode(&mut tape, store, &ids, None)?;
        let gold = sentence.gold_tree();
        let mut records = Vec::new();
        for (t, row) in lstm_impacts(&tape, &encoded)?.into_iter().enumerate() {
            let t = t + 1;
            for (i, impact) in row.into_iter().enumerate() {
                let i = i + 1;
                records.push(ImpactRecord {
                    sentence: si,
                    source: i,
                    target: t,
                    impact,
                    bucket: distance_relation_bucket(&gold, t, i),
                    offset: Some(i as isize - t as isize),
                });
            }
        }
        Ok(records)
    })?;
    Ok(per_sentence.into_iter().flatten().collect())
}

/// Impacts on the score of every predicted transition.
pub fn transition_score_impacts(
    parser: &TransitionParser,
    sentences: &[Sentence],
    exec: Exec,
) -> Result<Vec<ImpactRecord>> {
    if parser.config.ablation.is_some() {
        return Err(Error::Config(
            "impact analysis needs a model trained without ablation".into(),
        ));
    }
    let per_sentence = exec.try_map(sentences, |si, sentence| -> Result<Vec<ImpactRecord>> {
        if sentence.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let mut r = rng::stream(0, Component::AblationEval, si as u64);
        let (_, decisions, encoded) = parser.decide(&mut tape, sentence, &mut r)?;
        let mut records = Vec::new();
        for (k, decision) in decisions.iter().enumerate() {
            let impacts = score_impacts(&tape, decision.score, &encoded)?;
            for (i, impact) in impacts.into_iter().enumerate() {
                records.push(ImpactRecord {
                    sentence: si,
                    source: i + 1,
                    target: k,
                    impact,
                    bucket: config_position_bucket(&decision.config, i + 1),
                    offset: None,
                });
            }
        }
        Ok(records)
    })?;
    Ok(per_sentence.into_iter().flatten().collect())
}

/// Impacts on the score of every predicted arc (or sibling part).
pub fn graph_score_impacts(model: &GraphModel, sentences: &[Sentence], exec: Exec) -> Result<Vec<ImpactRecord>> {
    if model.config.ablation.is_some() {
        return Err(Error::Config(
            "impact analysis needs a model trained without ablation".into(),
        ));
    }
    let per_sentence = exec.try_map(sentences, |si, sentence| -> Result<Vec<ImpactRecord>> {
        if sentence.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let mut r = rng::stream(0, Component::AblationEval, si as u64);
        let (tree, ctx) = model.decide(&mut tape, sentence, model.config.decoder, &mut r)?;
        let mut records = Vec::new();
        for (k, (h, d, sib)) in model.tree_parts(&tree.heads).into_iter().enumerate() {
            let proj = ctx.projections(h, d);
            let score = model.arc_score(&mut tape, proj, h, d, sib)?;
            let impacts = score_impacts(&tape, score, &proj.encoded)?;
            for (i, impact) in impacts.into_iter().enumerate() {
                records.push(ImpactRecord {
                    sentence: si,
                    source: i + 1,
                    target: k,
                    impact,
                    bucket: tree_position_bucket(&tree, h, d, i + 1),
                    offset: None,
                });
            }
        }
        Ok(records)
    })?;
    Ok(per_sentence.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transition::Transition;

    #[test]
    fn normalization_and_undefined() {
        let p = normalize(&[1.0, 3.0]).unwrap();
        assert_eq!(p, vec![25.0, 75.0]);
        assert_eq!(normalize(&[0.7]).unwrap(), vec![100.0]);
        assert!(matches!(normalize(&[0.0, 0.0]), Err(Error::UndefinedImpact(_))));
    }

    #[test]
    fn distance_relation_labels() {
        // 1 <- 2 -> 4, 3 <- 4, root -> 2, 5 <- 2
        let gold = DepTree::unlabeled(vec![2, 0, 4, 2, 2]);
        assert_eq!(distance_relation_bucket(&gold, 4, 2), "-2/head");
        assert_eq!(distance_relation_bucket(&gold, 4, 3), "-1/child");
        assert_eq!(distance_relation_bucket(&gold, 3, 2), "-1/grandparent");
        assert_eq!(distance_relation_bucket(&gold, 4, 1), "-3/sibling");
        assert_eq!(distance_relation_bucket(&gold, 1, 3), "+2/other");
        assert_eq!(distance_relation_bucket(&gold, 1, 1), "0/self");
        assert_eq!(offset_label(-20), "-15+");
        assert_eq!(offset_label(15), "+15+");
    }

    #[test]
    fn leftmost_left_child_of_s0() {
        let mut c = Configuration::initial(3);
        for t in [Transition::Shift, Transition::Shift, Transition::LeftArc(0)] {
            c.apply(t).unwrap();
        }
        assert_eq!(config_position_bucket(&c, 1), "s0L");
        assert_eq!(config_position_bucket(&c, 2), "s0");
        assert_eq!(config_position_bucket(&c, 3), "b0");
    }

    #[test]
    fn structural_roles_beat_distance() {
        // token 1 is a child of d = 3 and two to the left of... h = 3's head 4? use h=4,d=3
        let tree = DepTree::unlabeled(vec![3, 4, 4, 0, 4]);
        assert_eq!(tree_position_bucket(&tree, 4, 3, 1), "c");
        assert_eq!(tree_position_bucket(&tree, 4, 3, 2), "s");
        assert_eq!(tree_position_bucket(&tree, 4, 3, 4), "h");
        assert_eq!(tree_position_bucket(&tree, 4, 3, 3), "d");
        let chain = DepTree::unlabeled(vec![0, 1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(tree_position_bucket(&chain, 4, 5, 3), "g");
        assert_eq!(tree_position_bucket(&chain, 4, 5, 2), "h-2");
        assert_eq!(tree_position_bucket(&chain, 4, 5, 7), "d+2");
        assert_eq!(tree_position_bucket(&chain, 2, 3, 9), "other");
    }

    #[test]
    fn aggregate_sorts_by_mean() {
        let r = |b: &str, x: f64| ImpactRecord {
            sentence: 0,
            source: 1,
            target: 1,
            impact: x,
            bucket: b.into(),
            offset: None,
        };
        let stats = aggregate(&[r("a", 1.0), r("b", 5.0), r("a", 3.0)]);
        assert_eq!(
            stats[0],
            BucketStat {
                bucket: "b".into(),
                mean: 5.0,
                count: 1
            }
        );
        assert_eq!(
            stats[1],
            BucketStat {
                bucket: "a".into(),
                mean: 2.0,
                count: 2
            }
        );
        assert!(aggregate(&[]).is_empty());
    }
}
