//! Ablated models: at every decision one token at a chosen structural
//! position is removed from the BiLSTM input.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::eval::seed_stats;
use crate::transition::{Configuration, Slot};
use crate::treebank::DepTree;

/// Structural relation relative to a scored arc `h -> d`, read from the
/// gold tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArcRelation {
    /// Other gold dependents of `h`.
    Sibling,
    /// Gold dependents of `d`.
    Child,
    /// Gold head of `h`.
    Grandparent,
    /// The token at `h + k`.
    HeadOffset(isize),
    /// The token at `d + k`.
    DepOffset(isize),
}

impl fmt::Display for ArcRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArcRelation::Sibling => write!(f, "sibling"),
            ArcRelation::Child => write!(f, "child"),
            ArcRelation::Grandparent => write!(f, "grandparent"),
            ArcRelation::HeadOffset(k) => write!(f, "h{k:+}"),
            ArcRelation::DepOffset(k) => write!(f, "d{k:+}"),
        }
    }
}

/// Which token to drop at each decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AblationSpec {
    Transition(Slot),
    Graph(ArcRelation),
}

impl fmt::Display for AblationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AblationSpec::Transition(s) => write!(f, "{s}"),
            AblationSpec::Graph(r) => write!(f, "{r}"),
        }
    }
}

impl FromStr for AblationSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid ablation position '{s}'"));
        match s {
            "sibling" => return Ok(AblationSpec::Graph(ArcRelation::Sibling)),
            "child" => return Ok(AblationSpec::Graph(ArcRelation::Child)),
            "grandparent" => return Ok(AblationSpec::Graph(ArcRelation::Grandparent)),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix('h').or_else(|| s.strip_prefix('d')) {
            if rest.starts_with('+') || rest.starts_with('-') {
                let k: isize = rest.parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(bad());
                }
                return Ok(AblationSpec::Graph(if s.starts_with('h') {
                    ArcRelation::HeadOffset(k)
                } else {
                    ArcRelation::DepOffset(k)
                }));
            }
        }
        s.parse::<Slot>().map(AblationSpec::Transition).map_err(|_| bad())
    }
}

/// Where a decision is made.
#[derive(Clone, Copy, Debug)]
pub enum DropContext<'a> {
    Configuration(&'a Configuration),
    Arc {
        head: usize,
        dependent: usize,
        gold: &'a DepTree,
    },
}

/// Token to exclude for one decision: the unique occupant of the position,
/// a uniformly random one when several qualify, or none.
pub fn select_drop_token<R: Rng>(context: DropContext<'_>, spec: &AblationSpec, rng: &mut R) -> Option<usize> {
    let candidates: Vec<usize> = match (context, spec) {
        (DropContext::Configuration(config), AblationSpec::Transition(slot)) => slot.tokens(config),
        (DropContext::Arc { head, dependent, gold }, AblationSpec::Graph(relation)) => {
            arc_candidates(head, dependent, gold, *relation)
        }
        _ => Vec::new(),
    };
    let candidates: Vec<usize> = candidates.into_iter().filter(|&t| t != 0).collect();
    match candidates.len() {
        0 => None,
        1 => Some(candidates[0]),
        _ => candidates.choose(rng).copied(),
    }
}

fn arc_candidates(head: usize, dependent: usize, gold: &DepTree, relation: ArcRelation) -> Vec<usize> {
    let n = gold.len() as isize;
    let offset = |base: usize, k: isize| {
        let p = base as isize + k;
        if p >= 1 && p <= n {
            vec![p as usize]
        } else {
            Vec::new()
        }
    };
    let tokens = match relation {
        ArcRelation::Sibling => gold.children(head),
        ArcRelation::Child => gold.children(dependent),
        ArcRelation::Grandparent => {
            if head == 0 {
                Vec::new()
            } else {
                vec![gold.head(head)]
            }
        }
        ArcRelation::HeadOffset(k) => offset(head, k),
        ArcRelation::DepOffset(k) => offset(dependent, k),
    };
    tokens.into_iter().filter(|&t| t != head && t != dependent).collect()
}

/// Dev LAS of one trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub las: f64,
    /// Identifies the evaluation corpus; all results compared must agree.
    pub corpus: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DropRow {
    pub spec: String,
    pub mean_las: f64,
    pub baseline_las: f64,
    pub drop: f64,
    pub stddev: f64,
    pub n_seeds: usize,
}

/// Mean LAS per ablation against the baseline mean, largest drop first.
pub fn compare(baseline: &[SeedResult], ablated: &[(String, Vec<SeedResult>)]) -> Result<Vec<DropRow>> {
    if baseline.is_empty() {
        return Err(Error::Config("no baseline runs".into()));
    }
    let corpus = baseline[0].corpus;
    let all = baseline.iter().chain(ablated.iter().flat_map(|(_, r)| r));
    if all.clone().any(|r| r.corpus != corpus) {
        return Err(Error::Config("runs were evaluated on different corpora".into()));
    }
    let base = seed_stats(&baseline.iter().map(|r| r.las).collect::<Vec<_>>());
    let mut rows = Vec::new();
    for (spec, runs) in ablated {
        if runs.is_empty() {
            return Err(Error::Config(format!("no runs for ablation {spec}")));
        }
        let stats = seed_stats(&runs.iter().map(|r| r.las).collect::<Vec<_>>());
        rows.push(DropRow {
            spec: spec.clone(),
            mean_las: stats.mean,
            baseline_las: base.mean,
            drop: base.mean - stats.mean,
            stddev: stats.stddev,
            n_seeds: runs.len(),
        });
    }
    rows.sort_by(|a, b| b.drop.total_cmp(&a.drop).then_with(|| a.spec.cmp(&b.spec)));
    Ok(rows)
}

/// TSV with header `spec, mean_las, baseline_las, drop, stddev, n_seeds`;
/// values to two decimals.
pub fn drops_tsv(rows: &[DropRow]) -> String {
    let mut out = String::from("spec\tmean_las\tbaseline_las\tdrop\tstddev\tn_seeds\n");
    for r in rows {
        out.push_str(&format!(
            "{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{}\n",
            r.spec, r.mean_las, r.baseline_las, r.drop, r.stddev, r.n_seeds
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transition::{Anchor, Transition};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config_with_left_children() -> Configuration {
        // s0 = 6 with left children 2 and 5
        let mut c = Configuration::initial(6);
        for _ in 0..6 {
            c.apply(Transition::Shift).unwrap();
        }
        c.apply(Transition::LeftArc(0)).unwrap(); // 6 -> 5
        c.apply(Transition::Swap).unwrap(); // 4 back
        c.apply(Transition::Swap).unwrap(); // 3 back
        c.apply(Transition::LeftArc(0)).unwrap(); // 6 -> 2
        c
    }

    #[test]
    fn parses_specs() {
        assert_eq!("s0L".parse::<AblationSpec>().unwrap().to_string(), "s0L");
        assert_eq!("s1Rbar".parse::<AblationSpec>().unwrap().to_string(), "s1Rbar");
        assert_eq!(
            "sibling".parse::<AblationSpec>().unwrap(),
            AblationSpec::Graph(ArcRelation::Sibling)
        );
        assert_eq!(
            "d-2".parse::<AblationSpec>().unwrap(),
            AblationSpec::Graph(ArcRelation::DepOffset(-2))
        );
        assert!("q3".parse::<AblationSpec>().is_err());
    }

    #[test]
    fn empty_position_selects_nothing() {
        let c = Configuration::initial(3);
        let spec = AblationSpec::Transition(Slot::Leftmost(Anchor::Stack(0)));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_drop_token(DropContext::Configuration(&c), &spec, &mut rng), None);
    }

    #[test]
    fn leftmost_child_is_unique() {
        let c = config_with_left_children();
        assert_eq!(c.stack_item(0), Some(6));
        let spec = AblationSpec::Transition(Slot::Leftmost(Anchor::Stack(0)));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(
                select_drop_token(DropContext::Configuration(&c), &spec, &mut rng),
                Some(2)
            );
        }
    }

    #[test]
    fn root_is_never_dropped() {
        let c = Configuration::initial(2);
        let spec = AblationSpec::Transition(Slot::Item(Anchor::Stack(0)));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_drop_token(DropContext::Configuration(&c), &spec, &mut rng), None);
    }

    #[test]
    fn graph_relations() {
        // 1 <- 2 -> 4, 3 <- 4, root -> 2
        let gold = DepTree::unlabeled(vec![2, 0, 4, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let ctx = |h, d| DropContext::Arc {
            head: h,
            dependent: d,
            gold: &gold,
        };
        let sel = |c, r, rng: &mut ChaCha8Rng| select_drop_token(c, &AblationSpec::Graph(r), rng);
        assert_eq!(sel(ctx(2, 4), ArcRelation::Sibling, &mut rng), Some(1));
        assert_eq!(sel(ctx(2, 4), ArcRelation::Child, &mut rng), Some(3));
        assert_eq!(sel(ctx(4, 3), ArcRelation::Grandparent, &mut rng), Some(2));
        assert_eq!(sel(ctx(0, 2), ArcRelation::Grandparent, &mut rng), None);
        assert_eq!(sel(ctx(2, 4), ArcRelation::HeadOffset(-1), &mut rng), Some(1));
        assert_eq!(sel(ctx(2, 4), ArcRelation::DepOffset(1), &mut rng), None);
    }

    #[test]
    fn identical_runs_give_zero_drop() {
        let runs: Vec<SeedResult> = (0..3)
            .map(|s| SeedResult {
                seed: s,
                las: 80.0 + s as f64,
                corpus: 9,
            })
            .collect();
        let rows = compare(&runs, &[("s0L".into(), runs.clone())]).unwrap();
        assert_eq!(rows[0].drop, 0.0);
        assert_eq!(rows[0].n_seeds, 3);
    }

    #[test]
    fn rows_sorted_by_drop_and_formatted() {
        let base = vec![SeedResult {
            seed: 1,
            las: 90.0,
            corpus: 1,
        }];
        let a = vec![SeedResult {
            seed: 1,
            las: 89.5,
            corpus: 1,
        }];
        let b = vec![SeedResult {
            seed: 1,
            las: 87.123,
            corpus: 1,
        }];
        let rows = compare(&base, &[("a".into(), a), ("b".into(), b)]).unwrap();
        assert_eq!(rows[0].spec, "b");
        let tsv = drops_tsv(&rows);
        assert!(tsv.lines().nth(1).unwrap().starts_with("b\t87.12\t90.00\t2.88\t"));
    }

    #[test]
    fn mismatched_corpora_rejected() {
        let base = vec![SeedResult {
            seed: 1,
            las: 90.0,
            corpus: 1,
        }];
        let other = vec![SeedResult {
            seed: 1,
            las: 90.0,
            corpus: 2,
        }];
        assert!(matches!(compare(&base, &[("x".into(), other)]), Err(Error::Config(_))));
    }
}
