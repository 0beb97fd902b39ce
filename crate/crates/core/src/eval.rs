//! Attachment scores, accuracy by arc length and seed statistics.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::treebank::{DepTree, Sentence};

/// Micro-averaged attachment scores in percent.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub las: f64,
    pub uas: f64,
    pub tokens: usize,
    pub correct_heads: usize,
    pub correct_labeled: usize,
}

fn check_aligned(gold: &[Sentence], predicted: &[DepTree]) -> Result<()> {
    if gold.len() != predicted.len() {
        return Err(Error::Alignment(format!(
            "{} gold sentences, {} predictions",
            gold.len(),
            predicted.len()
        )));
    }
    for (i, (g, p)) in gold.iter().zip(predicted).enumerate() {
        if g.len() != p.len() || (!p.labels.is_empty() && p.labels.len() != p.len()) {
            return Err(Error::Alignment(format!(
                "sentence {}: {} gold tokens, {} predicted",
                i + 1,
                g.len(),
                p.len()
            )));
        }
    }
    Ok(())
}

fn label_of(tree: &DepTree, d: usize) -> Option<&str> {
    tree.labels.get(d - 1).map(String::as_str)
}

/// LAS and UAS over all tokens; punctuation is scored like any other token.
pub fn las(gold: &[Sentence], predicted: &[DepTree]) -> Result<EvalReport> {
    check_aligned(gold, predicted)?;
    let mut r = EvalReport::default();
    for (g, p) in gold.iter().zip(predicted) {
        for (i, t) in g.tokens.iter().enumerate() {
            r.tokens += 1;
            if p.heads[i] == t.head {
                r.correct_heads += 1;
                if label_of(p, i + 1) == Some(t.label.as_str()) {
                    r.correct_labeled += 1;
                }
            }
        }
    }
    if r.tokens > 0 {
        r.las = 100.0 * r.correct_labeled as f64 / r.tokens as f64;
        r.uas = 100.0 * r.correct_heads as f64 / r.tokens as f64;
    }
    Ok(r)
}

/// Labeled recall and precision for arcs of one length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LengthPoint {
    /// `|head - dependent|`; the last bucket pools every longer arc.
    pub length: usize,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub gold_count: usize,
    pub predicted_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LengthCurve {
    /// Populated lengths in increasing order.
    pub points: Vec<LengthPoint>,
    /// Arcs from the root, kept out of the curve.
    pub root: Option<LengthPoint>,
}

#[derive(Clone, Copy, Default)]
struct Counts {
    gold: usize,
    predicted: usize,
    gold_hit: usize,
    predicted_hit: usize,
}

impl Counts {
    fn point(&self, length: usize) -> Option<LengthPoint> {
        if self.gold == 0 && self.predicted == 0 {
            return None;
        }
        let pct = |hit: usize, total: usize| (total > 0).then(|| 100.0 * hit as f64 / total as f64);
        Some(LengthPoint {
            length,
            recall: pct(self.gold_hit, self.gold),
            precision: pct(self.predicted_hit, self.predicted),
            gold_count: self.gold,
            predicted_count: self.predicted,
        })
    }
}

/// Recall uses gold arcs of each length as denominator, precision the
/// predicted arcs of that length. Lengths at or above `cap` are pooled.
pub fn recall_by_length(gold: &[Sentence], predicted: &[DepTree], cap: usize) -> Result<LengthCurve> {
    check_aligned(gold, predicted)?;
    let cap = cap.max(1);
    let mut buckets = vec![Counts::default(); cap + 1];
    let mut root = Counts::default();
    for (g, p) in gold.iter().zip(predicted) {
        for (i, t) in g.tokens.iter().enumerate() {
            let d = i + 1;
            let correct = p.heads[i] == t.head && label_of(p, d) == Some(t.label.as_str());
            let bucket = |h: usize| h.abs_diff(d).min(cap);
            let gold_counts = if t.head == 0 {
                &mut root
            } else {
                &mut buckets[bucket(t.head)]
            };
            gold_counts.gold += 1;
            if correct {
                gold_counts.gold_hit += 1;
            }
            let pred_counts = if p.heads[i] == 0 {
                &mut root
            } else {
                &mut buckets[bucket(p.heads[i])]
            };
            pred_counts.predicted += 1;
            if correct {
                pred_counts.predicted_hit += 1;
            }
        }
    }
    Ok(LengthCurve {
        points: (1..=cap).filter_map(|l| buckets[l].point(l)).collect(),
        root: root.point(0),
    })
}

/// Mean and sample standard deviation over seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeedStats {
    pub mean: f64,
    pub stddev: f64,
    pub n: usize,
    /// Set when only one score was given; the stddev is then 0 by convention.
    pub single: bool,
}

pub fn seed_stats(scores: &[f64]) -> SeedStats {
    let n = scores.len();
    if n == 0 {
        return SeedStats {
            mean: f64::NAN,
            stddev: f64::NAN,
            n,
            single: false,
        };
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    let stddev = if n == 1 {
        0.0
    } else {
        (scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    SeedStats {
        mean,
        stddev,
        n,
        single: n == 1,
    }
}

/// Largest combined sample size for which the exact distribution is used.
pub const EXACT_LIMIT: usize = 12;

/// Midranks of the pooled samples, doubled so that ties stay integral.
fn doubled_ranks(pooled: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean, doubled: i + j + 2
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon rank-sum p-value: exact for small samples, normal
/// approximation with tie and continuity correction otherwise.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Config(
            "rank-sum test needs at least two scores per sample".into(),
        ));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    if pooled.iter().all(|&x| x == pooled[0]) {
        return Ok(1.0);
    }
    if pooled.len() <= EXACT_LIMIT {
        Ok(exact_p(&doubled_ranks(&pooled), a.len()))
    } else {
        Ok(normal_p(&pooled, a.len()))
    }
}

/// `P(|W - E| >= |w - E|)` over all equally likely rank assignments.
fn exact_p(ranks: &[u64], n1: usize) -> f64 {
    let n = ranks.len();
    let max_sum: usize = ranks.iter().sum::<u64>() as usize;
    // counts[k][s]: subsets of size k with doubled rank sum s
    let mut counts = vec![vec![0u64; max_sum + 1]; n1 + 1];
    counts[0][0] = 1;
    for &r in ranks {
        let r = r as usize;
        for k in (1..=n1).rev() {
            for s in (r..=max_sum).rev() {
                counts[k][s] += counts[k - 1][s - r];
            }
        }
    }
    let observed: i64 = ranks[..n1].iter().sum::<u64>() as i64;
    let expected = (n1 * (n + 1)) as i64;
    let dev = (observed - expected).abs();
    let total: u64 = counts[n1].iter().sum();
    let extreme: u64 = counts[n1]
        .iter()
        .enumerate()
        .filter(|&(s, _)| (s as i64 - expected).abs() >= dev)
        .map(|(_, &c)| c)
        .sum();
    extreme as f64 / total as f64
}

fn normal_p(pooled: &[f64], n1: usize) -> f64 {
    let n = pooled.len() as f64;
    let n1f = n1 as f64;
    let n2f = n - n1f;
    let ranks = doubled_ranks(pooled);
    let w = ranks[..n1].iter().sum::<u64>() as f64 / 2.0;
    let mean = n1f * (n + 1.0) / 2.0;
    let mut ties = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_unstable();
    for group in sorted.chunk_by(|x, y| x == y) {
        let t = group.len() as f64;
        ties += t * t * t - t;
    }
    let var = n1f * n2f / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = (((w - mean).abs() - 0.5).max(0.0)) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

/// Same-scheme p-value by the normal approximation regardless of size.
pub fn wilcoxon_normal_approx(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    normal_p(&pooled, a.len())
}
