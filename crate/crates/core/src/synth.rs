//! Random trees and a small synthetic English-like treebank.
//!
//! The treebank grammar covers determiners, adjectives, prepositional
//! phrases with lexically conditioned attachment, relative clauses (some
//! extraposed, which yields crossing arcs), coordination, auxiliaries and
//! subordinate clauses. Word forms are pseudo-words drawn from Zipfian
//! lexicons, and a small fraction of POS tags is corrupted to mimic tagger
//! noise.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::{self, Component};
use crate::treebank::{is_projective, DepTree, Sentence, Token};

/// Uniformly random head assignment forming a tree whose root has exactly
/// one dependent.
pub fn random_tree<R: Rng>(n: usize, rng: &mut R) -> DepTree {
    let mut order: Vec<usize> = (1..=n).collect();
    order.shuffle(rng);
    let mut heads = vec![0; n];
    for (k, &d) in order.iter().enumerate().skip(1) {
        heads[d - 1] = order[rng.gen_range(0..k)];
    }
    DepTree::unlabeled(heads)
}

/// Random projective tree with a single root dependent.
pub fn random_projective_tree<R: Rng>(n: usize, rng: &mut R) -> DepTree {
    fn build<R: Rng>(lo: usize, hi: usize, head: usize, heads: &mut [usize], rng: &mut R) {
        if lo > hi {
            return;
        }
        // split the span into consecutive subtrees hanging from `head`
        let mut start = lo;
        while start <= hi {
            let end = if head == 0 { hi } else { rng.gen_range(start..=hi) };
            let root = rng.gen_range(start..=end);
            heads[root - 1] = head;
            if root > start {
                build(start, root - 1, root, heads, rng);
            }
            if root < end {
                build(root + 1, end, root, heads, rng);
            }
            start = end + 1;
        }
    }
    let mut heads = vec![0; n];
    build(1, n, 0, &mut heads, rng);
    DepTree::unlabeled(heads)
}

/// Random tree that is non-projective with probability about
/// `non_projective` (only possible from three tokens up).
pub fn random_tree_mix<R: Rng>(n: usize, non_projective: f64, rng: &mut R) -> DepTree {
    if n >= 3 && rng.gen_bool(non_projective) {
        for _ in 0..200 {
            let t = random_tree(n, rng);
            if !is_projective(&t) {
                return t;
            }
        }
    }
    random_projective_tree(n, rng)
}

#[derive(Clone, Debug)]
struct Lexicon {
    words: Vec<String>,
    /// Lexical class used for attachment preferences.
    class: Vec<bool>,
    weights: Vec<f64>,
}

impl Lexicon {
    fn new<R: Rng>(
        size: usize,
        min_syllables: usize,
        rng: &mut R,
        taken: &mut std::collections::HashSet<String>,
    ) -> Self {
        const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
        const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
        let mut words = Vec::with_capacity(size);
        while words.len() < size {
            let syllables = rng.gen_range(min_syllables..=min_syllables + 2);
            let w: String = (0..syllables)
                .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
                .collect();
            if taken.insert(w.clone()) {
                words.push(w);
            }
        }
        let class = (0..size).map(|_| rng.gen_bool(0.5)).collect();
        let weights = (1..=size).map(|r| 1.0 / (r as f64).powf(1.1)).collect();
        Lexicon { words, class, weights }
    }

    fn fixed(words: &[&str]) -> Self {
        Lexicon {
            words: words.iter().map(|w| w.to_string()).collect(),
            class: (0..words.len()).map(|i| i % 2 == 0).collect(),
            weights: (1..=words.len()).map(|r| 1.0 / r as f64).collect(),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        let total: f64 = self.weights.iter().sum();
        let mut x = rng.gen::<f64>() * total;
        for (i, w) in self.weights.iter().enumerate() {
            x -= w;
            if x <= 0.0 {
                return i;
            }
        }
        self.weights.len() - 1
    }
}

#[derive(Clone, Debug)]
struct Node {
    form: String,
    upos: &'static str,
    label: &'static str,
    /// Syntactic head (node id); `None` for the sentence root.
    head: Option<usize>,
    /// Linear placement: subtrees printed before and after the word.
    left: Vec<usize>,
    right: Vec<usize>,
}

struct Builder<'a, R: Rng> {
    g: &'a Grammar,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

impl<R: Rng> Builder<'_, R> {
    fn word(&mut self, lex: &Lexicon, upos: &'static str, label: &'static str, head: Option<usize>) -> (usize, bool) {
        let i = lex.draw(self.rng);
        self.nodes.push(Node {
            form: lex.words[i].clone(),
            upos,
            label,
            head,
            left: Vec::new(),
            right: Vec::new(),
        });
        (self.nodes.len() - 1, lex.class[i])
    }

    fn attach_left(&mut self, at: usize, child: usize) {
        self.nodes[at].left.push(child);
    }

    fn attach_right(&mut self, at: usize, child: usize) {
        self.nodes[at].right.push(child);
    }

    /// Noun phrase headed by a new noun; returns its id and lexical class.
    fn noun_phrase(&mut self, head: usize, label: &'static str, depth: usize) -> (usize, bool) {
        let g = self.g;
        if self.rng.gen_bool(0.12) {
            return self.word(&g.pron, "PRON", label, Some(head));
        }
        if self.rng.gen_bool(0.12) {
            let (n, c) = self.word(&g.propn, "PROPN", label, Some(head));
            if self.rng.gen_bool(0.3) {
                let (m, _) = self.word(&g.propn, "PROPN", "flat", Some(n));
                self.attach_right(n, m);
            }
            return (n, c);
        }
        let (n, class) = self.word(&g.noun, "NOUN", label, Some(head));
        if self.rng.gen_bool(0.15) {
            let (x, _) = self.word(&g.num, "NUM", "nummod", Some(n));
            self.attach_left(n, x);
        } else if self.rng.gen_bool(0.8) {
            let (x, _) = self.word(&g.det, "DET", "det", Some(n));
            self.attach_left(n, x);
        }
        let adjectives = [0.7, 0.22, 0.08];
        let mut k = 0;
        let mut x = self.rng.gen::<f64>();
        while k < 2 && x > adjectives[k] {
            x -= adjectives[k];
            k += 1;
        }
        let mut adjs = Vec::new();
        for _ in 0..k {
            let (a, _) = self.word(&g.adj, "ADJ", "amod", Some(n));
            adjs.push(a);
        }
        // adjectives follow the determiner, closest last
        self.nodes[n].left.extend(adjs);
        if depth < 2 && self.rng.gen_bool(0.1) {
            let (cc, _) = self.word(&g.cconj, "CCONJ", "cc", None);
            let (m, _) = self.noun_phrase(n, "conj", depth + 1);
            self.nodes[cc].head = Some(m);
            self.nodes[m].left.insert(0, cc);
            self.attach_right(n, m);
        }
        (n, class)
    }

    /// Prepositional phrase; attaches to the verb or the noun depending on
    /// the preposition and the object noun.
    fn prepositional_phrase(&mut self, verb: usize, noun: Option<usize>, depth: usize) {
        let g = self.g;
        let (p, pclass) = self.word(&g.adp, "ADP", "case", None);
        let (obj, oclass) = self.noun_phrase(verb, "obl", depth + 1);
        self.nodes[p].head = Some(obj);
        self.nodes[obj].left.insert(0, p);
        let noun_pref = if pclass == oclass { 0.95 } else { 0.05 };
        match noun {
            Some(n) if self.nodes[n].upos != "PRON" && self.rng.gen_bool(noun_pref) => {
                self.nodes[obj].head = Some(n);
                self.nodes[obj].label = "nmod";
                self.attach_right(n, obj);
            }
            _ => self.attach_right(verb, obj),
        }
    }

    /// Single-word noun phrase (pronoun or name).
    fn short_phrase(&mut self, head: usize, label: &'static str) -> usize {
        let g = self.g;
        if self.rng.gen_bool(0.6) {
            self.word(&g.pron, "PRON", label, Some(head)).0
        } else {
            self.word(&g.propn, "PROPN", label, Some(head)).0
        }
    }

    /// Clause headed by a new verb; returns the verb. Verbs of one lexical
    /// class may take a second object, and any clause may be passive, which
    /// is marked only by the auxiliary.
    fn clause(&mut self, head: Option<usize>, label: &'static str, depth: usize) -> usize {
        let g = self.g;
        let (v, transfer) = self.word(&g.verb, "VERB", label, head);
        let passive = self.rng.gen_bool(0.2);
        let subj_label = if passive { "nsubj:pass" } else { "nsubj" };
        let (subj, _) = self.noun_phrase(v, subj_label, depth);
        self.attach_left(v, subj);
        if passive {
            let (a, _) = self.word(&g.pass_aux, "AUX", "aux:pass", Some(v));
            self.attach_left(v, a);
        } else if self.rng.gen_bool(0.25) {
            let (a, _) = self.word(&g.aux, "AUX", "aux", Some(v));
            self.attach_left(v, a);
        }
        if self.rng.gen_bool(0.15) {
            let (a, _) = self.word(&g.adv, "ADV", "advmod", Some(v));
            self.nodes[v].left.insert(0, a);
        }
        let mut object = None;
        if passive {
            if self.rng.gen_bool(0.3) {
                let (by, _) = self.word(&g.by, "ADP", "case", None);
                let (agent, _) = self.noun_phrase(v, "obl:agent", depth + 1);
                self.nodes[by].head = Some(agent);
                self.nodes[agent].left.insert(0, by);
                self.attach_right(v, agent);
            }
        } else if transfer && self.rng.gen_bool(0.8) {
            let first = self.short_phrase(v, "obj");
            self.attach_right(v, first);
            if self.rng.gen_bool(0.5) {
                self.nodes[first].label = "iobj";
                let (o, _) = self.noun_phrase(v, "obj", depth);
                self.attach_right(v, o);
                object = Some(o);
            } else {
                object = Some(first);
            }
        } else if self.rng.gen_bool(0.7) {
            let (o, _) = self.noun_phrase(v, "obj", depth);
            self.attach_right(v, o);
            object = Some(o);
        }
        let pps = if depth == 0 { [0.45, 0.4, 0.15] } else { [0.7, 0.3, 0.0] };
        let mut x = self.rng.gen::<f64>();
        let mut count = 0;
        while count < 2 && x > pps[count] {
            x -= pps[count];
            count += 1;
        }
        for _ in 0..count {
            self.prepositional_phrase(v, object, depth);
        }
        if self.rng.gen_bool(0.2) {
            let (a, _) = self.word(&g.adv, "ADV", "advmod", Some(v));
            self.attach_right(v, a);
        }
        if depth == 0 && self.rng.gen_bool(0.3) {
            // relative clause on the subject or object
            let target = if object.is_some() && self.rng.gen_bool(0.5) {
                object.unwrap()
            } else {
                subj
            };
            if self.nodes[target].upos == "NOUN" {
                let rc = self.relative_clause(target);
                let extrapose = target == subj && self.rng.gen_bool(0.6);
                if extrapose {
                    self.attach_right(v, rc);
                } else {
                    self.attach_right(target, rc);
                }
            }
        }
        if depth == 0 && self.rng.gen_bool(0.2) {
            let (m, _) = self.word(&g.sconj, "SCONJ", "mark", None);
            let sub = self.clause(Some(v), "advcl", depth + 1);
            self.nodes[m].head = Some(sub);
            self.nodes[sub].left.insert(0, m);
            self.attach_right(v, sub);
        }
        v
    }

    fn relative_clause(&mut self, noun: usize) -> usize {
        let g = self.g;
        let (rv, _) = self.word(&g.verb, "VERB", "acl:relcl", Some(noun));
        let (rel, _) = self.word(&g.rel, "PRON", "nsubj", Some(rv));
        self.attach_left(rv, rel);
        if self.rng.gen_bool(0.6) {
            let (o, _) = self.noun_phrase(rv, "obj", 2);
            self.attach_right(rv, o);
        }
        rv
    }

    fn linearize(&self, node: usize, out: &mut Vec<usize>) {
        for &c in &self.nodes[node].left {
            self.linearize(c, out);
        }
        out.push(node);
        for &c in &self.nodes[node].right {
            self.linearize(c, out);
        }
    }
}

#[derive(Clone, Debug)]
struct Grammar {
    noun: Lexicon,
    verb: Lexicon,
    adj: Lexicon,
    adv: Lexicon,
    propn: Lexicon,
    num: Lexicon,
    det: Lexicon,
    adp: Lexicon,
    pron: Lexicon,
    rel: Lexicon,
    aux: Lexicon,
    pass_aux: Lexicon,
    by: Lexicon,
    cconj: Lexicon,
    sconj: Lexicon,
}

impl Grammar {
    fn new(seed: u64) -> Self {
        let mut rng = rng::stream(seed, Component::Data, u64::MAX);
        let mut taken = std::collections::HashSet::new();
        Grammar {
            noun: Lexicon::new(500, 2, &mut rng, &mut taken),
            verb: Lexicon::new(250, 2, &mut rng, &mut taken),
            adj: Lexicon::new(150, 2, &mut rng, &mut taken),
            adv: Lexicon::new(60, 2, &mut rng, &mut taken),
            propn: Lexicon::new(120, 2, &mut rng, &mut taken),
            num: Lexicon::fixed(&["two", "three", "ten", "five", "many", "1990", "40"]),
            det: Lexicon::fixed(&["the", "a", "this", "every", "some", "that"]),
            adp: Lexicon::new(12, 1, &mut rng, &mut taken),
            pron: Lexicon::fixed(&["he", "she", "it", "they", "we", "you", "i"]),
            rel: Lexicon::fixed(&["who", "which", "that"]),
            aux: Lexicon::fixed(&["will", "can", "has", "must", "did"]),
            pass_aux: Lexicon::fixed(&["was", "is", "were"]),
            by: Lexicon::fixed(&["by"]),
            cconj: Lexicon::fixed(&["and", "or", "but"]),
            sconj: Lexicon::fixed(&["because", "when", "if", "while"]),
        }
    }
}

const TAGS: [&str; 13] = [
    "NOUN", "VERB", "ADJ", "ADV", "PROPN", "NUM", "DET", "ADP", "PRON", "AUX", "CCONJ", "SCONJ", "PUNCT",
];

/// Generates `count` sentences; the lexicon depends only on `seed`, the
/// sentences on `(seed, stream)`, so train and dev sets share vocabulary.
pub fn treebank(seed: u64, stream: u64, count: usize, max_len: usize) -> Vec<Sentence> {
    let grammar = Grammar::new(seed);
    let mut rng = rng::stream(seed, Component::Data, stream);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut b = Builder {
            g: &grammar,
            rng: &mut rng,
            nodes: Vec::new(),
        };
        let root = b.clause(None, "root", 0);
        b.nodes.push(Node {
            form: ".".into(),
            upos: "PUNCT",
            label: "punct",
            head: Some(root),
            left: Vec::new(),
            right: Vec::new(),
        });
        let punct = b.nodes.len() - 1;
        b.attach_right(root, punct);
        let mut order = Vec::new();
        b.linearize(root, &mut order);
        if order.len() < 3 || order.len() > max_len {
            continue;
        }
        let mut position = vec![0; b.nodes.len()];
        for (i, &node) in order.iter().enumerate() {
            position[node] = i + 1;
        }
        let tokens: Vec<Token> = order
            .iter()
            .enumerate()
            .map(|(i, &node)| {
                let nd = &b.nodes[node];
                let head = nd.head.map_or(0, |h| position[h]);
                let upos = if nd.upos != "PUNCT" && b.rng.gen_bool(0.02) {
                    TAGS.choose(b.rng).unwrap()
                } else {
                    nd.upos
                };
                Token::new(i + 1, &nd.form, upos, head, nd.label)
            })
            .collect();
        let mut sentence = Sentence::new(tokens);
        sentence
            .comments
            .push(format!("# sent_id = synth-{stream}-{}", out.len() + 1));
        out.push(sentence);
    }
    out
}
