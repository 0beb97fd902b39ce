//! Maximum spanning tree decoders. All of them let the root take exactly
//! one dependent.

use crate::treebank::DepTree;

/// Dense arc scores; entry `(h, d)` scores `h -> d`. Self arcs and arcs
/// into the root are `-inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcScores {
    n: usize,
    data: Vec<f64>,
}

impl ArcScores {
    /// All permitted arcs start at 0.
    pub fn new(n: usize) -> Self {
        let size = n + 1;
        let mut data = vec![0.0; size * size];
        for h in 0..size {
            data[h * size] = f64::NEG_INFINITY;
            data[h * size + h] = f64::NEG_INFINITY;
        }
        ArcScores { n, data }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut s = ArcScores::new(n);
        for h in 0..=n {
            for d in 1..=n {
                if h != d {
                    s.set(h, d, f(h, d));
                }
            }
        }
        s
    }

    /// Number of tokens.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, h: usize, d: usize) -> f64 {
        self.data[h * (self.n + 1) + d]
    }

    pub fn set(&mut self, h: usize, d: usize, v: f64) {
        assert!(d != 0 && h != d, "arc {h}->{d} cannot be scored");
        self.data[h * (self.n + 1) + d] = v;
    }

    /// Sum of the arc scores of a tree.
    pub fn tree_score(&self, heads: &[usize]) -> f64 {
        heads.iter().enumerate().map(|(i, &h)| self.get(h, i + 1)).sum()
    }
}

/// Scores `s2(h, d, s)` where `s` is the sibling of `d` adjacent to it on
/// the same side of `h` and closer to `h`, or `None` for the innermost
/// dependent.
#[derive(Clone, Debug, PartialEq)]
pub struct SiblingScores {
    n: usize,
    /// Indexed `[h][d][s]`; slot `s == h` stands for no sibling.
    data: Vec<f64>,
}

impl SiblingScores {
    pub fn new(n: usize) -> Self {
        let size = n + 1;
        SiblingScores {
            n,
            data: vec![0.0; size * size * size],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize, Option<usize>) -> f64) -> Self {
        let mut s = SiblingScores::new(n);
        for h in 0..=n {
            for d in 1..=n {
                if h == d {
                    continue;
                }
                s.set(h, d, None, f(h, d, None));
                for sib in sibling_range(h, d) {
                    s.set(h, d, Some(sib), f(h, d, Some(sib)));
                }
            }
        }
        s
    }

    /// Second-order scores that ignore the sibling.
    pub fn from_arcs(arcs: &ArcScores) -> Self {
        SiblingScores::from_fn(arcs.len(), |h, d, _| arcs.get(h, d))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn index(&self, h: usize, d: usize, sib: Option<usize>) -> usize {
        let size = self.n + 1;
        (h * size + d) * size + sib.unwrap_or(h)
    }

    pub fn get(&self, h: usize, d: usize, sib: Option<usize>) -> f64 {
        self.data[self.index(h, d, sib)]
    }

    pub fn set(&mut self, h: usize, d: usize, sib: Option<usize>, v: f64) {
        if let Some(s) = sib {
            assert!(sibling_range(h, d).contains(&s), "{s} is not between {h} and {d}");
        }
        let i = self.index(h, d, sib);
        self.data[i] = v;
    }

    /// Tree score under the sibling decomposition.
    pub fn tree_score(&self, heads: &[usize]) -> f64 {
        inner_siblings(heads)
            .into_iter()
            .enumerate()
            .map(|(i, s)| self.get(heads[i], i + 1, s))
            .sum()
    }
}

/// Positions strictly between `h` and `d`.
pub fn sibling_range(h: usize, d: usize) -> std::ops::Range<usize> {
    if h < d {
        h + 1..d
    } else {
        d + 1..h
    }
}

/// For each token, the adjacent same-side sibling closer to its head.
pub fn inner_siblings(heads: &[usize]) -> Vec<Option<usize>> {
    let n = heads.len();
    let mut out = vec![None; n];
    for d in 1..=n {
        let h = heads[d - 1];
        out[d - 1] = sibling_range(h, d)
            .filter(|&s| heads[s - 1] == h)
            .min_by_key(|&s| s.abs_diff(d));
    }
    out
}

const LEFT: usize = 0;
const RIGHT: usize = 1;

/// Span tables indexed `[s][t][direction]`; `RIGHT` means `s` is the head.
struct Chart {
    size: usize,
    score: Vec<f64>,
    split: Vec<usize>,
}

impl Chart {
    fn new(size: usize) -> Self {
        Chart {
            size,
            score: vec![f64::NEG_INFINITY; size * size * 2],
            split: vec![0; size * size * 2],
        }
    }

    fn idx(&self, s: usize, t: usize, dir: usize) -> usize {
        (s * self.size + t) * 2 + dir
    }

    fn get(&self, s: usize, t: usize, dir: usize) -> f64 {
        self.score[self.idx(s, t, dir)]
    }

    fn split(&self, s: usize, t: usize, dir: usize) -> usize {
        self.split[self.idx(s, t, dir)]
    }

    fn set(&mut self, s: usize, t: usize, dir: usize, v: f64, r: usize) {
        let i = self.idx(s, t, dir);
        self.score[i] = v;
        self.split[i] = r;
    }
}

/// Keeps the first maximum; candidates arrive in increasing split order.
fn better(best: &mut (f64, usize), v: f64, r: usize) {
    if v > best.0 {
        *best = (v, r);
    }
}

/// Picks the root's single dependent `r` maximizing
/// `left(1..r) + right(r..n) + root_arc(r)`; smaller `r` wins ties.
fn choose_root(n: usize, complete: &Chart, root_arc: impl Fn(usize) -> f64) -> usize {
    let mut best = (f64::NEG_INFINITY, 1);
    for r in 1..=n {
        let v = complete.get(1, r, LEFT) + complete.get(r, n, RIGHT) + root_arc(r);
        better(&mut best, v, r);
    }
    best.1
}

/// First-order projective decoder, O(n^3).
pub fn eisner_decode(scores: &ArcScores) -> DepTree {
    let n = scores.len();
    if n == 0 {
        return DepTree::default();
    }
    let size = n + 1;
    let mut complete = Chart::new(size);
    let mut incomplete = Chart::new(size);
    for s in 1..=n {
        complete.set(s, s, LEFT, 0.0, s);
        complete.set(s, s, RIGHT, 0.0, s);
    }
    for width in 1..n {
        for s in 1..=n - width {
            let t = s + width;
            let mut best = (f64::NEG_INFINITY, s);
            for r in s..t {
                better(&mut best, complete.get(s, r, RIGHT) + complete.get(r + 1, t, LEFT), r);
            }
            incomplete.set(s, t, RIGHT, best.0 + scores.get(s, t), best.1);
            incomplete.set(s, t, LEFT, best.0 + scores.get(t, s), best.1);

            let mut best = (f64::NEG_INFINITY, s);
            for r in s..t {
                better(&mut best, complete.get(s, r, LEFT) + incomplete.get(r, t, LEFT), r);
            }
            complete.set(s, t, LEFT, best.0, best.1);
            let mut best = (f64::NEG_INFINITY, s);
            for r in s + 1..=t {
                better(&mut best, incomplete.get(s, r, RIGHT) + complete.get(r, t, RIGHT), r);
            }
            complete.set(s, t, RIGHT, best.0, best.1);
        }
    }
    let root = choose_root(n, &complete, |r| scores.get(0, r));
    let mut heads = vec![0; n];
    let mut work = vec![(1, root, LEFT, true), (root, n, RIGHT, true)];
    while let Some((s, t, dir, is_complete)) = work.pop() {
        if s == t {
            continue;
        }
        if is_complete {
            let r = complete.split(s, t, dir);
            if dir == LEFT {
                work.push((s, r, LEFT, true));
                work.push((r, t, LEFT, false));
            } else {
                work.push((s, r, RIGHT, false));
                work.push((r, t, RIGHT, true));
            }
        } else {
            let r = incomplete.split(s, t, dir);
            if dir == LEFT {
                heads[s - 1] = t;
            } else {
                heads[t - 1] = s;
            }
            work.push((s, r, RIGHT, true));
            work.push((r + 1, t, LEFT, true));
        }
    }
    DepTree::unlabeled(heads)
}

/// Second-order projective decoder with adjacent-sibling parts, O(n^3).
pub fn eisner2_decode(sib: &SiblingScores) -> DepTree {
    let n = sib.len();
    if n == 0 {
        return DepTree::default();
    }
    let size = n + 1;
    let mut complete = Chart::new(size);
    let mut incomplete = Chart::new(size);
    // Sibling items: [s][t] spans two adjacent subtrees headed by s and t.
    let mut sibling = Chart::new(size);
    for s in 1..=n {
        complete.set(s, s, LEFT, 0.0, s);
        complete.set(s, s, RIGHT, 0.0, s);
    }
    for width in 1..n {
        for s in 1..=n - width {
            let t = s + width;
            let mut best = (f64::NEG_INFINITY, s);
            for r in s..t {
                better(&mut best, complete.get(s, r, RIGHT) + complete.get(r + 1, t, LEFT), r);
            }
            sibling.set(s, t, RIGHT, best.0, best.1);

            // s -> t; split == s marks t as the innermost dependent.
            let mut best = (complete.get(s + 1, t, LEFT) + sib.get(s, t, None), s);
            for r in s + 1..t {
                let v = incomplete.get(s, r, RIGHT) + sibling.get(r, t, RIGHT) + sib.get(s, t, Some(r));
                better(&mut best, v, r);
            }
            incomplete.set(s, t, RIGHT, best.0, best.1);

            // t -> s; split == t marks s as the innermost dependent.
            let mut best = (f64::NEG_INFINITY, t);
            for r in s + 1..t {
                let v = sibling.get(s, r, RIGHT) + incomplete.get(r, t, LEFT) + sib.get(t, s, Some(r));
                better(&mut best, v, r);
            }
            let inner = complete.get(s, t - 1, RIGHT) + sib.get(t, s, None);
            if inner > best.0 {
                best = (inner, t);
            }
            incomplete.set(s, t, LEFT, best.0, best.1);

            let mut best = (f64::NEG_INFINITY, s);
            for r in s..t {
                better(&mut best, complete.get(s, r, LEFT) + incomplete.get(r, t, LEFT), r);
            }
            complete.set(s, t, LEFT, best.0, best.1);
            let mut best = (f64::NEG_INFINITY, s);
            for r in s + 1..=t {
                better(&mut best, incomplete.get(s, r, RIGHT) + complete.get(r, t, RIGHT), r);
            }
            complete.set(s, t, RIGHT, best.0, best.1);
        }
    }
    let root = choose_root(n, &complete, |r| sib.get(0, r, None));
    let mut heads = vec![0; n];
    #[derive(Clone, Copy)]
    enum Item {
        Complete,
        Incomplete,
        Sibling,
    }
    let mut work = vec![(1, root, LEFT, Item::Complete), (root, n, RIGHT, Item::Complete)];
    while let Some((s, t, dir, item)) = work.pop() {
        if s == t {
            continue;
        }
        match item {
            Item::Complete => {
                let r = complete.split(s, t, dir);
                if dir == LEFT {
                    work.push((s, r, LEFT, Item::Complete));
                    work.push((r, t, LEFT, Item::Incomplete));
                } else {
                    work.push((s, r, RIGHT, Item::Incomplete));
                    work.push((r, t, RIGHT, Item::Complete));
                }
            }
            Item::Sibling => {
                let r = sibling.split(s, t, RIGHT);
                work.push((s, r, RIGHT, Item::Complete));
                work.push((r + 1, t, LEFT, Item::Complete));
            }
            Item::Incomplete => {
                let r = incomplete.split(s, t, dir);
                if dir == RIGHT {
                    heads[t - 1] = s;
                    if r == s {
                        work.push((s + 1, t, LEFT, Item::Complete));
                    } else {
                        work.push((s, r, RIGHT, Item::Incomplete));
                        work.push((r, t, RIGHT, Item::Sibling));
                    }
                } else {
                    heads[s - 1] = t;
                    if r == t {
                        work.push((s, t - 1, RIGHT, Item::Complete));
                    } else {
                        work.push((s, r, RIGHT, Item::Sibling));
                        work.push((r, t, LEFT, Item::Incomplete));
                    }
                }
            }
        }
    }
    DepTree::unlabeled(heads)
}

/// Chu-Liu-Edmonds maximum spanning arborescence; non-projective trees are
/// allowed. Every choice of the root's dependent is tried.
pub fn cle_decode(scores: &ArcScores) -> DepTree {
    let n = scores.len();
    if n == 0 {
        return DepTree::default();
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for r in 1..=n {
        let weights: Vec<Vec<f64>> = (0..=n)
            .map(|h| {
                (0..=n)
                    .map(|d| {
                        if d == 0 || h == d || (h == 0 && d != r) {
                            f64::NEG_INFINITY
                        } else {
                            scores.get(h, d)
                        }
                    })
                    .collect()
            })
            .collect();
        let heads: Vec<usize> = arborescence(&weights)[1..].to_vec();
        let total = scores.tree_score(&heads);
        if best.as_ref().map_or(true, |(b, _)| total > *b) {
            best = Some((total, heads));
        }
    }
    DepTree::unlabeled(best.expect("n >= 1").1)
}

/// Maximum arborescence rooted at node 0 of the dense graph `w[h][d]`.
/// Returns the head of every node (`0` for the root itself).
fn arborescence(w: &[Vec<f64>]) -> Vec<usize> {
    let m = w.len();
    let mut head = vec![0; m];
    for d in 1..m {
        let mut best = (f64::NEG_INFINITY, 0);
        for (h, row) in w.iter().enumerate() {
            if h != d && row[d] > best.0 {
                best = (row[d], h);
            }
        }
        head[d] = best.1;
    }
    let Some(cycle) = find_cycle(&head) else {
        return head;
    };
    let in_cycle: Vec<bool> = (0..m).map(|v| cycle.contains(&v)).collect();
    // Contracted graph: non-cycle nodes keep their relative order, the
    // cycle becomes the last node.
    let outside: Vec<usize> = (0..m).filter(|&v| !in_cycle[v]).collect();
    let c = outside.len();
    let mut wc = vec![vec![f64::NEG_INFINITY; c + 1]; c + 1];
    let mut enter = vec![0; c + 1];
    let mut leave = vec![0; c + 1];
    for (i, &u) in outside.iter().enumerate() {
        for (j, &v) in outside.iter().enumerate() {
            wc[i][j] = w[u][v];
        }
        let mut best = (f64::NEG_INFINITY, cycle[0]);
        for &v in &cycle {
            if w[u][v] == f64::NEG_INFINITY {
                continue;
            }
            let gain = w[u][v] - w[head[v]][v];
            if gain > best.0 {
                best = (gain, v);
            }
        }
        wc[i][c] = best.0;
        enter[i] = best.1;
        let mut best = (f64::NEG_INFINITY, cycle[0]);
        for &x in &cycle {
            if w[x][u] > best.0 {
                best = (w[x][u], x);
            }
        }
        wc[c][i] = best.0;
        leave[i] = best.1;
    }
    let sub = arborescence(&wc);
    let mut result = head.clone();
    for (j, &v) in outside.iter().enumerate().skip(1) {
        let h = sub[j];
        result[v] = if h == c { leave[j] } else { outside[h] };
    }
    let from = sub[c];
    let entry = enter[from];
    result[entry] = outside[from];
    result
}

fn find_cycle(head: &[usize]) -> Option<Vec<usize>> {
    let m = head.len();
    let mut state = vec![0u8; m]; // 0 new, 1 on current path, 2 done
    state[0] = 2;
    for start in 1..m {
        let mut path = Vec::new();
        let mut v = start;
        while state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = head[v];
        }
        if state[v] == 1 {
            let pos = path.iter().position(|&x| x == v).expect("on path");
            return Some(path[pos..].to_vec());
        }
        for &p in &path {
            state[p] = 2;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_token() {
        let s = ArcScores::from_fn(1, |_, _| 1.0);
        assert_eq!(eisner_decode(&s).heads, vec![0]);
        assert_eq!(cle_decode(&s).heads, vec![0]);
        assert_eq!(eisner2_decode(&SiblingScores::from_arcs(&s)).heads, vec![0]);
    }

    #[test]
    fn two_tokens_pick_best_single_root_tree() {
        // Trees: 0->1->2 (5+1), 0->2->1 (1+3). Both roots allowed one child.
        let s = ArcScores::from_fn(2, |h, d| match (h, d) {
            (0, 1) => 5.0,
            (1, 2) => 1.0,
            (0, 2) => 1.0,
            (2, 1) => 3.0,
            _ => unreachable!(),
        });
        assert_eq!(eisner_decode(&s).heads, vec![0, 1]);
        assert_eq!(cle_decode(&s).heads, vec![0, 1]);
    }

    #[test]
    fn root_takes_one_dependent() {
        let s = ArcScores::from_fn(3, |h, _| if h == 0 { 10.0 } else { 0.0 });
        for tree in [
            eisner_decode(&s),
            cle_decode(&s),
            eisner2_decode(&SiblingScores::from_arcs(&s)),
        ] {
            assert_eq!(tree.root_children(), 1);
            assert!(tree.is_valid());
        }
    }

    #[test]
    fn cle_finds_non_projective_tree() {
        // Gold 1<-3, 2<-4, 3 root, 4<-3: crossing arcs.
        let gold = [3, 4, 0, 3];
        let s = ArcScores::from_fn(4, |h, d| if gold[d - 1] == h { 5.0 } else { 0.0 });
        assert_eq!(cle_decode(&s).heads, gold.to_vec());
        assert!(s.tree_score(&eisner_decode(&s).heads) < 20.0);
    }

    #[test]
    fn inner_sibling_lookup() {
        // 2 heads 1 (left) and 3, 5 (right); 5 is outside 3.
        let heads = [2, 0, 2, 5, 2];
        assert_eq!(inner_siblings(&heads), vec![None, None, None, None, Some(3)]);
    }

    #[test]
    fn second_order_prefers_rewarded_sibling_pair() {
        // Reward 0->1 and the pair (1->3 with inner sibling 2).
        let sib = SiblingScores::from_fn(3, |h, d, s| match (h, d, s) {
            (0, 1, None) => 5.0,
            (1, 3, Some(2)) => 4.0,
            (1, 2, None) => 1.0,
            _ => 0.0,
        });
        assert_eq!(eisner2_decode(&sib).heads, vec![0, 1, 1]);
    }
}
