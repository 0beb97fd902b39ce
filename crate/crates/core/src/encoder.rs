//! Word representations and the stacked BiLSTM feature extractor.
//!
//! Each token is embedded as `x_i = e(w_i) ∘ e(t_i)`. In BiLSTM mode the
//! contextual vector of a token is the concatenation of the forward and
//! backward states of the top layer; in direct mode it is `x_i` itself.

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

use crate::autodiff::{AutodiffError, ParamId, ParameterStore, Tape, Var};
use crate::treebank::Sentence;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("token index {index} out of range for a sentence of {len} tokens")]
    Exclude { index: usize, len: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub const UNK: usize = 0;

/// Symbol table with ids in first-occurrence order; id 0 is reserved.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SymbolTable {
    ids: HashMap<String, usize>,
    symbols: Vec<String>,
}

impl SymbolTable {
    fn with_reserved(reserved: &str) -> Self {
        let mut t = SymbolTable::default();
        t.intern(reserved);
        t
    }

    pub fn intern(&mut self, s: &str) -> usize {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.symbols.len();
        self.ids.insert(s.to_string(), id);
        self.symbols.push(s.to_string());
        id
    }

    pub fn get(&self, s: &str) -> Option<usize> {
        self.ids.get(s).copied()
    }

    pub fn symbol(&self, id: usize) -> &str {
        &self.symbols[id]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Word, POS and label inventories of a training corpus.
///
/// Word and POS id 0 is UNK. Labels have no reserved id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    pub words: SymbolTable,
    pub word_freq: Vec<usize>,
    pub tags: SymbolTable,
    pub labels: SymbolTable,
}

impl Vocab {
    pub fn build(sentences: &[Sentence]) -> Result<Vocab, EncoderError> {
        if sentences.iter().all(|s| s.is_empty()) {
            return Err(EncoderError::Config("empty training corpus".into()));
        }
        let mut words = SymbolTable::with_reserved("<unk>");
        let mut word_freq = vec![0];
        let mut tags = SymbolTable::with_reserved("<unk>");
        let mut labels = SymbolTable::default();
        for token in sentences.iter().flat_map(|s| &s.tokens) {
            let id = words.intern(&token.form);
            if id == word_freq.len() {
                word_freq.push(0);
            }
            word_freq[id] += 1;
            tags.intern(&token.upos);
            labels.intern(&token.label);
        }
        Ok(Vocab {
            words,
            word_freq,
            tags,
            labels,
        })
    }

    /// Rebuilds a vocabulary from serialized parts.
    pub fn from_parts(words: Vec<(String, usize)>, tags: Vec<String>, labels: Vec<String>) -> Vocab {
        let mut v = Vocab {
            words: SymbolTable::default(),
            word_freq: Vec::new(),
            tags: SymbolTable::default(),
            labels: SymbolTable::default(),
        };
        for (w, f) in words {
            v.words.intern(&w);
            v.word_freq.push(f);
        }
        for t in tags {
            v.tags.intern(&t);
        }
        for l in labels {
            v.labels.intern(&l);
        }
        v
    }

    pub fn word_id(&self, form: &str) -> usize {
        self.words.get(form).unwrap_or(UNK)
    }

    pub fn tag_id(&self, tag: &str) -> usize {
        self.tags.get(tag).unwrap_or(UNK)
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.labels.get(label)
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderMode {
    Bilstm,
    Direct,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub word_dim: usize,
    pub pos_dim: usize,
    pub lstm_dim: usize,
    pub lstm_layers: usize,
    pub mode: EncoderMode,
    /// Feed a learned ROOT token through the BiLSTM ahead of the sentence.
    pub root_token: bool,
    pub word_dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            word_dim: 100,
            pos_dim: 20,
            lstm_dim: 125,
            lstm_layers: 2,
            mode: EncoderMode::Bilstm,
            root_token: false,
            word_dropout: 0.25,
        }
    }
}

impl EncoderConfig {
    pub fn input_dim(&self) -> usize {
        self.word_dim + self.pos_dim
    }

    /// Dimension of the contextual vectors handed to the scorers.
    pub fn output_dim(&self) -> usize {
        match self.mode {
            EncoderMode::Bilstm => 2 * self.lstm_dim,
            EncoderMode::Direct => self.input_dim(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmParams {
    /// `4H x (in + H)`, gate blocks in order input, forget, output, candidate.
    pub weights: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug)]
struct BiLstmLayer {
    forward: LstmParams,
    backward: LstmParams,
}

/// Encoder parameters registered in a [`ParameterStore`].
#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    word_emb: ParamId,
    pos_emb: ParamId,
    layers: Vec<BiLstmLayer>,
    missing: ParamId,
    root: Option<ParamId>,
}

/// Word and tag ids of one sentence after (optional) word dropout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenIds {
    pub words: Vec<usize>,
    pub tags: Vec<usize>,
}

impl TokenIds {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Contextual vectors of one sentence, indexed by original position
/// (0 is the root).
#[derive(Clone, Debug)]
pub struct EncodedSentence {
    /// Input representations `x_i`; `None` for an excluded token and for the
    /// root unless a ROOT token is encoded.
    pub inputs: Vec<Option<Var>>,
    pub vectors: Vec<Option<Var>>,
    pub missing: Var,
    pub excluded: Option<usize>,
}

impl EncodedSentence {
    pub fn len(&self) -> usize {
        self.vectors.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Vector of position `i`, or MISSING when absent or out of range.
    pub fn vector(&self, i: usize) -> Var {
        self.vectors.get(i).copied().flatten().unwrap_or(self.missing)
    }

    pub fn vector_at(&self, i: isize) -> Var {
        if i < 0 {
            self.missing
        } else {
            self.vector(i as usize)
        }
    }

    /// Input representations of tokens `1..=n` that were encoded.
    pub fn token_inputs(&self) -> Vec<(usize, Var)> {
        self.inputs
            .iter()
            .enumerate()
            .skip(1)
            .filter_map(|(i, x)| x.map(|x| (i, x)))
            .collect()
    }
}

impl Encoder {
    pub fn new<R: Rng>(config: EncoderConfig, vocab: &Vocab, store: &mut ParameterStore, rng: &mut R) -> Self {
        let word_emb = store.add_uniform("enc.word_emb", vocab.words.len(), config.word_dim, rng);
        let pos_emb = store.add_uniform("enc.pos_emb", vocab.tags.len(), config.pos_dim, rng);
        let mut layers = Vec::new();
        if config.mode == EncoderMode::Bilstm {
            let h = config.lstm_dim;
            let mut input = config.input_dim();
            for l in 0..config.lstm_layers {
                let mut dir = |name: &str| LstmParams {
                    weights: store.add_uniform(&format!("enc.l{l}.{name}.w"), 4 * h, input + h, rng),
                    bias: store.add_zeros(&format!("enc.l{l}.{name}.b"), 4 * h, 1),
                    hidden: h,
                };
                let forward = dir("fwd");
                let backward = dir("bwd");
                layers.push(BiLstmLayer { forward, backward });
                input = 2 * h;
            }
        }
        let missing = store.add_uniform("enc.missing", config.output_dim(), 1, rng);
        let root = config
            .root_token
            .then(|| store.add_uniform("enc.root", config.input_dim(), 1, rng));
        Encoder {
            config,
            word_emb,
            pos_emb,
            layers,
            missing,
            root,
        }
    }

    /// Looks the parameters up by name in a loaded store.
    pub fn from_store(config: EncoderConfig, store: &ParameterStore) -> Result<Self, EncoderError> {
        let id = |name: String| {
            store
                .id(&name)
                .ok_or_else(|| EncoderError::Config(format!("missing parameter {name}")))
        };
        let mut layers = Vec::new();
        if config.mode == EncoderMode::Bilstm {
            for l in 0..config.lstm_layers {
                let dir = |name: &str| -> Result<LstmParams, EncoderError> {
                    Ok(LstmParams {
                        weights: id(format!("enc.l{l}.{name}.w"))?,
                        bias: id(format!("enc.l{l}.{name}.b"))?,
                        hidden: config.lstm_dim,
                    })
                };
                layers.push(BiLstmLayer {
                    forward: dir("fwd")?,
                    backward: dir("bwd")?,
                });
            }
        }
        Ok(Encoder {
            word_emb: id("enc.word_emb".into())?,
            pos_emb: id("enc.pos_emb".into())?,
            missing: id("enc.missing".into())?,
            root: if config.root_token {
                Some(id("enc.root".into())?)
            } else {
                None
            },
            layers,
            config,
        })
    }

    pub fn missing_param(&self) -> ParamId {
        self.missing
    }

    /// LSTM parameters per layer as (forward, backward).
    pub fn lstm_params(&self) -> Vec<(LstmParams, LstmParams)> {
        self.layers.iter().map(|l| (l.forward, l.backward)).collect()
    }

    pub fn embeddings(&self) -> (ParamId, ParamId) {
        (self.word_emb, self.pos_emb)
    }

    /// Maps a sentence to ids. With `training`, a word with training
    /// frequency `f` is replaced by UNK with probability `α / (α + f)`.
    pub fn token_ids<R: Rng>(&self, vocab: &Vocab, sentence: &Sentence, training: bool, rng: &mut R) -> TokenIds {
        let alpha = self.config.word_dropout;
        let words = sentence
            .tokens
            .iter()
            .map(|t| {
                let id = vocab.word_id(&t.form);
                if training && id != UNK && alpha > 0.0 {
                    let f = vocab.word_freq[id] as f64;
                    if rng.gen::<f64>() < alpha / (alpha + f) {
                        return UNK;
                    }
                }
                id
            })
            .collect();
        let tags = sentence.tokens.iter().map(|t| vocab.tag_id(&t.upos)).collect();
        TokenIds { words, tags }
    }

    /// Builds contextual vectors on `tape`. When `exclude` is set, that token
    /// is removed before the BiLSTM runs and its vector is absent.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        ids: &TokenIds,
        exclude: Option<usize>,
    ) -> Result<EncodedSentence, EncoderError> {
        let n = ids.len();
        if n == 0 {
            return Err(EncoderError::Config("empty sentence".into()));
        }
        if let Some(j) = exclude {
            if j == 0 || j > n {
                return Err(EncoderError::Exclude { index: j, len: n });
            }
        }
        let mut inputs = vec![None; n + 1];
        if let Some(root) = self.root {
            inputs[0] = Some(tape.param(store, root));
        }
        for i in 1..=n {
            if Some(i) == exclude {
                continue;
            }
            let w = tape.lookup(store, self.word_emb, ids.words[i - 1])?;
            let t = tape.lookup(store, self.pos_emb, ids.tags[i - 1])?;
            inputs[i] = Some(tape.concat(&[w, t])?);
        }
        let missing = tape.param(store, self.missing);
        let vectors = match self.config.mode {
            EncoderMode::Direct => inputs.clone(),
            EncoderMode::Bilstm => {
                let positions: Vec<usize> = (0..=n).filter(|&i| inputs[i].is_some()).collect();
                let mut seq: Vec<Var> = positions.iter().map(|&i| inputs[i].unwrap()).collect();
                for layer in &self.layers {
                    let fwd = run_lstm(tape, store, &layer.forward, &seq, false)?;
                    let bwd = run_lstm(tape, store, &layer.backward, &seq, true)?;
                    seq = fwd
                        .iter()
                        .zip(&bwd)
                        .map(|(&f, &b)| tape.concat(&[f, b]))
                        .collect::<Result<_, _>>()?;
                }
                let mut vectors = vec![None; n + 1];
                for (&pos, v) in positions.iter().zip(seq) {
                    vectors[pos] = Some(v);
                }
                vectors
            }
        };
        Ok(EncodedSentence {
            inputs,
            vectors,
            missing,
            excluded: exclude,
        })
    }
}

/// Runs one LSTM direction; the returned states are aligned with `seq`.
fn run_lstm(
    tape: &mut Tape,
    store: &ParameterStore,
    params: &LstmParams,
    seq: &[Var],
    reverse: bool,
) -> Result<Vec<Var>, AutodiffError> {
    let h_dim = params.hidden;
    let w = tape.param(store, params.weights);
    let b = tape.param(store, params.bias);
    let mut h = tape.zeros(h_dim);
    let mut c = tape.zeros(h_dim);
    let mut out = vec![h; seq.len()];
    let order: Vec<usize> = if reverse {
        (0..seq.len()).rev().collect()
    } else {
        (0..seq.len()).collect()
    };
    for i in order {
        let xh = tape.concat(&[seq[i], h])?;
        let z = tape.affine(w, xh, b)?;
        let zi = tape.slice(z, 0, h_dim)?;
        let zf = tape.slice(z, h_dim, h_dim)?;
        let zo = tape.slice(z, 2 * h_dim, h_dim)?;
        let zg = tape.slice(z, 3 * h_dim, h_dim)?;
        let ig = tape.sigmoid(zi)?;
        let fg = tape.sigmoid(zf)?;
        let og = tape.sigmoid(zo)?;
        let g = tape.tanh(zg)?;
        let keep = tape.mul(fg, c)?;
        let write = tape.mul(ig, g)?;
        c = tape.add(keep, write)?;
        let tc = tape.tanh(c)?;
        h = tape.mul(og, tc)?;
        out[i] = h;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::Token;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sentence(words: &[&str]) -> Sentence {
        let tokens = words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                Token::new(
                    i + 1,
                    w,
                    "X",
                    if i == 0 { 0 } else { 1 },
                    if i == 0 { "root" } else { "dep" },
                )
            })
            .collect();
        Sentence::new(tokens)
    }

    fn small_config(mode: EncoderMode) -> EncoderConfig {
        EncoderConfig {
            word_dim: 5,
            pos_dim: 3,
            lstm_dim: 4,
            lstm_layers: 2,
            mode,
            root_token: false,
            word_dropout: 0.25,
        }
    }

    #[test]
    fn vocab_first_occurrence_ids() {
        let v = Vocab::build(&[sentence(&["a", "b", "a"])]).unwrap();
        assert_eq!(v.word_id("a"), 1);
        assert_eq!(v.word_id("b"), 2);
        assert_eq!(v.word_freq[1], 2);
        assert_eq!(v.word_id("zzz"), UNK);
    }

    #[test]
    fn empty_corpus_is_config_error() {
        assert!(matches!(Vocab::build(&[]), Err(EncoderError::Config(_))));
    }

    #[test]
    fn direct_mode_single_token_is_concatenated_embeddings() {
        let s = sentence(&["w"]);
        let vocab = Vocab::build(&[s.clone()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParameterStore::new();
        let enc = Encoder::new(small_config(EncoderMode::Direct), &vocab, &mut store, &mut rng);
        let ids = enc.token_ids(&vocab, &s, false, &mut rng);
        let mut tape = Tape::new();
        let e = enc.encode(&mut tape, &store, &ids, None).unwrap();
        let (we, pe) = enc.embeddings();
        let mut expected = store.get(we).value[5..10].to_vec();
        expected.extend_from_slice(&store.get(pe).value[3..6]);
        assert_eq!(tape.value(e.vector(1)), expected.as_slice());
    }

    #[test]
    fn exclusion_makes_vector_missing() {
        let s = sentence(&["a", "b", "c"]);
        let vocab = Vocab::build(&[s.clone()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParameterStore::new();
        let enc = Encoder::new(small_config(EncoderMode::Bilstm), &vocab, &mut store, &mut rng);
        let ids = enc.token_ids(&vocab, &s, false, &mut rng);
        let mut tape = Tape::new();
        let e = enc.encode(&mut tape, &store, &ids, Some(2)).unwrap();
        assert_eq!(e.vector(2), e.missing);
        assert!(e.inputs[2].is_none());
        assert!(matches!(
            enc.encode(&mut tape, &store, &ids, Some(4)),
            Err(EncoderError::Exclude { index: 4, len: 3 })
        ));
    }

    #[test]
    fn no_dropout_at_inference() {
        let s = sentence(&["a", "b", "c", "d"]);
        let vocab = Vocab::build(&[s.clone()]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParameterStore::new();
        let mut cfg = small_config(EncoderMode::Direct);
        cfg.word_dropout = 1e9;
        let enc = Encoder::new(cfg, &vocab, &mut store, &mut rng);
        for _ in 0..50 {
            assert_eq!(enc.token_ids(&vocab, &s, false, &mut rng).words, vec![1, 2, 3, 4]);
        }
        // Huge alpha: dropout fires essentially always when training.
        assert_eq!(enc.token_ids(&vocab, &s, true, &mut rng).words, vec![0, 0, 0, 0]);
    }
}
