//! CoNLL-U reading and writing, tree validation and projectivity.

use std::fmt::Write as _;
use std::io::BufRead;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TreebankError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("sentence {sentence}: {message}")]
    Validation { sentence: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One syntactic word of a sentence.
///
/// `head` uses 0 for the artificial root, tokens are numbered from 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: String,
    pub head: usize,
    pub label: String,
    pub deps: String,
    pub misc: String,
    pub predicted_head: Option<usize>,
    pub predicted_label: Option<String>,
}

impl Token {
    pub fn new(index: usize, form: &str, upos: &str, head: usize, label: &str) -> Self {
        Token {
            index,
            form: form.to_string(),
            lemma: "_".to_string(),
            upos: upos.to_string(),
            xpos: "_".to_string(),
            feats: "_".to_string(),
            head,
            label: label.to_string(),
            deps: "_".to_string(),
            misc: "_".to_string(),
            predicted_head: None,
            predicted_label: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sentence {
    pub comments: Vec<String>,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Sentence {
            comments: Vec::new(),
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn gold_tree(&self) -> DepTree {
        DepTree {
            heads: self.tokens.iter().map(|t| t.head).collect(),
            labels: self.tokens.iter().map(|t| t.label.clone()).collect(),
        }
    }

    /// Copies predicted heads and labels into the HEAD/DEPREL columns.
    pub fn with_prediction(&self, tree: &DepTree) -> Sentence {
        let mut out = self.clone();
        for (i, token) in out.tokens.iter_mut().enumerate() {
            token.head = tree.heads[i];
            if let Some(label) = tree.labels.get(i) {
                token.label = label.clone();
            }
        }
        out
    }
}

/// Head function over tokens `1..=n`; `heads[i - 1]` is the head of token `i`.
///
/// Unlabeled trees (decoder output) carry an empty `labels` vector.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DepTree {
    pub heads: Vec<usize>,
    pub labels: Vec<String>,
}

impl DepTree {
    pub fn unlabeled(heads: Vec<usize>) -> Self {
        DepTree {
            heads,
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn head(&self, dependent: usize) -> usize {
        self.heads[dependent - 1]
    }

    /// Dependents of `head` (0 for the root) in surface order.
    pub fn children(&self, head: usize) -> Vec<usize> {
        (1..=self.len()).filter(|&d| self.head(d) == head).collect()
    }

    pub fn root_children(&self) -> usize {
        self.heads.iter().filter(|&&h| h == 0).count()
    }

    /// Checks that every head is in range and that following heads always
    /// reaches the root.
    pub fn check(&self) -> Result<(), String> {
        let n = self.len();
        for (i, &h) in self.heads.iter().enumerate() {
            let d = i + 1;
            if h > n {
                return Err(format!("head {h} of token {d} out of range 0..={n}"));
            }
            if h == d {
                return Err(format!("token {d} is its own head"));
            }
        }
        for start in 1..=n {
            let mut node = start;
            let mut steps = 0;
            while node != 0 {
                node = self.head(node);
                steps += 1;
                if steps > n {
                    return Err(format!("cycle through token {start}"));
                }
            }
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.check().is_ok()
    }

    /// Applies a permutation given as ranks: token `i` moves to position
    /// `ranks[i - 1]`.
    pub fn reorder(&self, ranks: &[usize]) -> DepTree {
        let n = self.len();
        let mut heads = vec![0; n];
        let mut labels = vec![String::new(); if self.labels.is_empty() { 0 } else { n }];
        for d in 1..=n {
            let new_d = ranks[d - 1];
            let h = self.head(d);
            heads[new_d - 1] = if h == 0 { 0 } else { ranks[h - 1] };
            if !self.labels.is_empty() {
                labels[new_d - 1] = self.labels[d - 1].clone();
            }
        }
        DepTree { heads, labels }
    }
}

/// Reads all sentences from a CoNLL-U stream.
///
/// Multiword token ranges and empty nodes are skipped. Trees are validated
/// and the first invalid sentence (numbered from 1) is reported.
pub fn read_conllu<R: BufRead>(reader: R) -> Result<Vec<Sentence>, TreebankError> {
    let mut sentences = Vec::new();
    let mut current = Sentence::default();
    let mut block_start = 1;

    let finish = |current: &mut Sentence, sentences: &mut Vec<Sentence>| {
        if !current.tokens.is_empty() || !current.comments.is_empty() {
            let sentence = std::mem::take(current);
            if sentence.tokens.is_empty() {
                return Ok(());
            }
            validate(&sentence, sentences.len() + 1)?;
            sentences.push(sentence);
        }
        Ok::<(), TreebankError>(())
    };

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut current, &mut sentences)?;
            block_start = lineno + 1;
            continue;
        }
        if line.starts_with('#') {
            current.comments.push(line.to_string());
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(TreebankError::Format {
                line: lineno,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let index: usize = cols[0].parse().map_err(|_| TreebankError::Format {
            line: lineno,
            message: format!("malformed ID '{}'", cols[0]),
        })?;
        let head: usize = cols[6].parse().map_err(|_| TreebankError::Format {
            line: lineno,
            message: format!("malformed HEAD '{}'", cols[6]),
        })?;
        if index != current.tokens.len() + 1 {
            return Err(TreebankError::Format {
                line: lineno,
                message: format!("token ID {index} out of sequence (sentence starting at line {block_start})"),
            });
        }
        current.tokens.push(Token {
            index,
            form: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: cols[3].to_string(),
            xpos: cols[4].to_string(),
            feats: cols[5].to_string(),
            head,
            label: cols[7].to_string(),
            deps: cols[8].to_string(),
            misc: cols[9].to_string(),
            predicted_head: None,
            predicted_label: None,
        });
    }
    finish(&mut current, &mut sentences)?;
    Ok(sentences)
}

pub fn read_conllu_str(input: &str) -> Result<Vec<Sentence>, TreebankError> {
    read_conllu(input.as_bytes())
}

fn validate(sentence: &Sentence, number: usize) -> Result<(), TreebankError> {
    sentence
        .gold_tree()
        .check()
        .map_err(|message| TreebankError::Validation {
            sentence: number,
            message,
        })
}

/// Writes sentences in CoNLL-U; empty fields are emitted as `_`.
pub fn write_conllu(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for sentence in sentences {
        for comment in &sentence.comments {
            out.push_str(comment);
            out.push('\n');
        }
        for t in &sentence.tokens {
            let field = |s: &str| if s.is_empty() { "_".to_string() } else { s.to_string() };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                t.index,
                field(&t.form),
                field(&t.lemma),
                field(&t.upos),
                field(&t.xpos),
                field(&t.feats),
                t.head,
                field(&t.label),
                field(&t.deps),
                field(&t.misc),
            );
        }
        out.push('\n');
    }
    out
}

/// True iff no two arcs cross.
///
/// A tree is projective exactly when its inorder traversal (left
/// dependents, head, right dependents) is the surface order.
pub fn is_projective(tree: &DepTree) -> bool {
    inorder(tree).iter().enumerate().all(|(pos, &tok)| pos + 1 == tok)
}

/// Ranks of the projective order: `ranks[i - 1]` is the position (from 1) of
/// token `i` in the inorder traversal of the tree.
pub fn projective_order(tree: &DepTree) -> Vec<usize> {
    let mut ranks = vec![0; tree.len()];
    for (pos, tok) in inorder(tree).into_iter().enumerate() {
        ranks[tok - 1] = pos + 1;
    }
    ranks
}

fn inorder(tree: &DepTree) -> Vec<usize> {
    let n = tree.len();
    let mut children = vec![Vec::new(); n + 1];
    for d in 1..=n {
        children[tree.head(d)].push(d);
    }
    let mut order = Vec::with_capacity(n);
    // Explicit stack: (node, next child slot, emitted self)
    let mut stack: Vec<(usize, usize, bool)> = vec![(0, 0, true)];
    while let Some(top) = stack.last_mut() {
        let (node, slot, emitted) = *top;
        let kids = &children[node];
        if !emitted && (slot >= kids.len() || kids[slot] > node) {
            top.2 = true;
            order.push(node);
            continue;
        }
        if slot < kids.len() {
            top.1 += 1;
            stack.push((kids[slot], 0, false));
        } else {
            stack.pop();
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(heads: &[usize]) -> DepTree {
        DepTree::unlabeled(heads.to_vec())
    }

    #[test]
    fn empty_input_gives_no_sentences() {
        assert!(read_conllu_str("").unwrap().is_empty());
    }

    #[test]
    fn reads_simple_block() {
        let input = "1\tHe\t_\tPRON\t_\t_\t2\tnsubj\t_\t_\n2\truns\t_\tVERB\t_\t_\t0\troot\t_\t_\n";
        let sentences = read_conllu_str(input).unwrap();
        assert_eq!(sentences.len(), 1);
        assert_eq!(sentences[0].gold_tree().heads, vec![2, 0]);
        assert_eq!(sentences[0].tokens[0].form, "He");
        assert_eq!(sentences[0].tokens[1].label, "root");
    }

    #[test]
    fn skips_comments_ranges_and_empty_nodes() {
        let input = "# sent_id = 1\n1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n1\tdo\t_\tAUX\t_\t_\t3\taux\t_\t_\n\
                     2\tn't\t_\tPART\t_\t_\t3\tadvmod\t_\t_\n3\tgo\t_\tVERB\t_\t_\t0\troot\t_\t_\n\
                     3.1\tgone\t_\tVERB\t_\t_\t_\t_\t_\t_\n\n";
        let sentences = read_conllu_str(input).unwrap();
        assert_eq!(sentences[0].len(), 3);
        assert_eq!(sentences[0].comments, vec!["# sent_id = 1".to_string()]);
    }

    #[test]
    fn malformed_head_reports_line() {
        let input = "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n2\tb\t_\tX\t_\t_\tx\tdep\t_\t_\n";
        match read_conllu_str(input) {
            Err(TreebankError::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_head_names_sentence() {
        let input = "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n\n1\ta\t_\tX\t_\t_\t5\troot\t_\t_\n";
        match read_conllu_str(input) {
            Err(TreebankError::Validation { sentence, .. }) => assert_eq!(sentence, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cycle_is_rejected() {
        let input = "1\ta\t_\tX\t_\t_\t2\tdep\t_\t_\n2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n";
        assert!(matches!(read_conllu_str(input), Err(TreebankError::Validation { .. })));
    }

    #[test]
    fn projectivity_examples() {
        assert!(is_projective(&tree(&[0, 1, 2, 3])));
        assert!(!is_projective(&tree(&[3, 4, 0, 3])));
    }

    #[test]
    fn projective_tree_has_identity_order() {
        assert_eq!(projective_order(&tree(&[2, 0, 2, 3])), vec![1, 2, 3, 4]);
    }

    #[test]
    fn reordering_by_projective_order_removes_crossings() {
        let t = tree(&[3, 4, 0, 3]);
        let ranks = projective_order(&t);
        assert!(is_projective(&t.reorder(&ranks)));
    }
}
