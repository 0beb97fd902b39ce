//! Greedy BiLSTM transition parser: feature vectors of configuration
//! positions go through one MLP that scores every transition.

use std::collections::HashMap;

use rand::Rng;

use super::features::FeatureSet;
use super::oracle::{Oracle, SwapStrategy};
use super::system::{Configuration, Transition};
use crate::ablation::{select_drop_token, AblationSpec, DropContext};
use crate::autodiff::{AdamConfig, ParameterStore, Tape, Var};
use crate::encoder::{EncodedSentence, Encoder, EncoderConfig, TokenIds, Vocab};
use crate::error::{Error, Result};
use crate::mlp::Mlp;
use crate::rng::{self, Component};
use crate::training::{epoch_order, masked_argmax, LossStats};
use crate::treebank::{DepTree, Sentence};

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionConfig {
    pub encoder: EncoderConfig,
    pub features: FeatureSet,
    pub hidden: usize,
    pub adam: AdamConfig,
    pub swap: SwapStrategy,
    pub ablation: Option<AblationSpec>,
    /// Apply the ablation when parsing too, not only during training.
    pub ablate_at_parse: bool,
}

impl Default for TransitionConfig {
    fn default() -> Self {
        TransitionConfig {
            encoder: EncoderConfig::default(),
            features: FeatureSet::simple(),
            hidden: 100,
            adam: AdamConfig::default(),
            swap: SwapStrategy::Lazy,
            ablation: None,
            ablate_at_parse: true,
        }
    }
}

/// One greedy decision recorded while parsing.
#[derive(Clone, Debug)]
pub struct Decision {
    pub config: Configuration,
    pub transition: Transition,
    /// Score of the chosen transition on the tape.
    pub score: Var,
}

#[derive(Clone, Debug)]
pub struct TransitionParser {
    pub config: TransitionConfig,
    pub vocab: Vocab,
    pub store: ParameterStore,
    encoder: Encoder,
    mlp: Mlp,
}

impl TransitionParser {
    pub fn new(config: TransitionConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        check_ablation(&config)?;
        let mut init = rng::stream(seed, Component::Init, 0);
        let mut store = ParameterStore::new();
        let encoder = Encoder::new(config.encoder.clone(), &vocab, &mut store, &mut init);
        let input = config.features.len() * config.encoder.output_dim();
        let outputs = Transition::inventory_size(vocab.num_labels());
        let mlp = Mlp::new(&mut store, &mut init, "trans.mlp", input, config.hidden, outputs);
        Ok(TransitionParser {
            config,
            vocab,
            store,
            encoder,
            mlp,
        })
    }

    /// Rebinds a loaded parameter store.
    pub fn from_store(config: TransitionConfig, vocab: Vocab, store: ParameterStore) -> Result<Self> {
        check_ablation(&config)?;
        let encoder = Encoder::from_store(config.encoder.clone(), &store)?;
        let mlp = Mlp::from_store(&store, "trans.mlp")?;
        let expected = config.features.len() * config.encoder.output_dim();
        if store.get(mlp.hidden_w).cols != expected {
            return Err(Error::ModelFormat(format!(
                "MLP input has {} columns, feature set needs {expected}",
                store.get(mlp.hidden_w).cols
            )));
        }
        Ok(TransitionParser {
            config,
            vocab,
            store,
            encoder,
            mlp,
        })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    fn num_labels(&self) -> usize {
        self.vocab.num_labels()
    }

    /// Concatenated feature vectors of a configuration.
    pub fn extract_features(&self, tape: &mut Tape, encoded: &EncodedSentence, config: &Configuration) -> Result<Var> {
        let parts: Vec<Var> = self
            .config
            .features
            .resolve(config)
            .into_iter()
            .map(|t| t.map_or(encoded.missing, |t| encoded.vector(t)))
            .collect();
        Ok(tape.concat(&parts)?)
    }

    /// Unmasked scores of the whole transition inventory.
    pub fn score_configuration(
        &self,
        tape: &mut Tape,
        encoded: &EncodedSentence,
        config: &Configuration,
    ) -> Result<Var> {
        let features = self.extract_features(tape, encoded, config)?;
        self.mlp.forward(tape, &self.store, features)
    }

    fn exclusion<R: Rng>(&self, config: &Configuration, rng: &mut R) -> Option<usize> {
        let spec = self.config.ablation.as_ref()?;
        select_drop_token(DropContext::Configuration(config), spec, rng)
    }

    fn encoding(
        &self,
        tape: &mut Tape,
        cache: &mut HashMap<Option<usize>, EncodedSentence>,
        ids: &TokenIds,
        exclude: Option<usize>,
    ) -> Result<EncodedSentence> {
        if let Some(e) = cache.get(&exclude) {
            return Ok(e.clone());
        }
        let e = self.encoder.encode(tape, &self.store, ids, exclude)?;
        cache.insert(exclude, e.clone());
        Ok(e)
    }

    /// Hinge loss along the oracle path of one sentence, followed by one Adam
    /// step when the loss is positive.
    pub fn train_sentence<R: Rng>(
        &mut self,
        sentence: &Sentence,
        dropout: &mut R,
        ablation: &mut R,
    ) -> Result<LossStats> {
        let n = sentence.len();
        let mut stats = LossStats::default();
        if n == 0 {
            return Ok(stats);
        }
        let gold = sentence.gold_tree();
        let labels = gold
            .labels
            .iter()
            .map(|l| {
                self.vocab
                    .label_id(l)
                    .ok_or_else(|| Error::Config(format!("label '{l}' not in the training vocabulary")))
            })
            .collect::<Result<Vec<_>>>()?;
        let oracle = Oracle::new(&gold, labels, self.config.swap);
        let ids = self.encoder.token_ids(&self.vocab, sentence, true, dropout);
        let num_labels = self.num_labels();
        let mut tape = Tape::new();
        let mut cache = HashMap::new();
        let mut config = Configuration::initial(n);
        let mut terms = Vec::new();
        while !config.is_terminal() {
            let correct = oracle.next(&config)?;
            let exclude = self.exclusion(&config, ablation);
            let encoded = self.encoding(&mut tape, &mut cache, &ids, exclude)?;
            let scores = self.score_configuration(&mut tape, &encoded, &config)?;
            let correct_id = correct.id(num_labels);
            let mut wrong_mask = config.legal_mask(num_labels);
            wrong_mask[correct_id] = false;
            if let Some(wrong) = masked_argmax(tape.value(scores), &wrong_mask) {
                stats.decisions += 1;
                let values = tape.value(scores);
                let margin = 1.0 + values[wrong] - values[correct_id];
                if margin > 0.0 {
                    stats.loss += margin;
                    let sw = tape.pick(scores, wrong)?;
                    let sc = tape.pick(scores, correct_id)?;
                    let diff = tape.sub(sw, sc)?;
                    terms.push(tape.add_scalar(diff, 1.0)?);
                }
            }
            config.apply(correct).map_err(|e| Error::Contract(e.to_string()))?;
        }
        if !terms.is_empty() {
            let total = tape.add_all(&terms)?;
            let grads = tape.backward(total)?;
            grads.accumulate(&tape, &mut self.store);
            self.store.adam_step(&self.config.adam);
            stats.updates = 1;
        }
        Ok(stats)
    }

    /// One shuffled pass over the corpus.
    pub fn train_epoch(&mut self, sentences: &[Sentence], seed: u64, epoch: u64) -> Result<LossStats> {
        let mut dropout = rng::stream(seed, Component::Dropout, epoch);
        let mut ablation = rng::stream(seed, Component::Ablation, epoch);
        let mut stats = LossStats::default();
        for i in epoch_order(sentences.len(), seed, epoch) {
            stats.merge(self.train_sentence(&sentences[i], &mut dropout, &mut ablation)?);
        }
        Ok(stats)
    }

    /// Greedy decoding on `tape`; every decision is returned with the score
    /// node of the chosen transition.
    pub fn decide<R: Rng>(
        &self,
        tape: &mut Tape,
        sentence: &Sentence,
        rng: &mut R,
    ) -> Result<(DepTree, Vec<Decision>, EncodedSentence)> {
        let n = sentence.len();
        let ids = self.encoder.token_ids(&self.vocab, sentence, false, rng);
        let mut cache = HashMap::new();
        let base = self.encoding(tape, &mut cache, &ids, None)?;
        let num_labels = self.num_labels();
        let mut config = Configuration::initial(n);
        let mut decisions = Vec::new();
        let limit = 4 * n * n;
        while !config.is_terminal() {
            if decisions.len() >= limit {
                return Err(Error::Decode(format!(
                    "no terminal configuration after {limit} transitions"
                )));
            }
            let exclude = if self.config.ablate_at_parse {
                self.exclusion(&config, rng)
            } else {
                None
            };
            let encoded = self.encoding(tape, &mut cache, &ids, exclude)?;
            let scores = self.score_configuration(tape, &encoded, &config)?;
            let mask = config.legal_mask(num_labels);
            let best =
                masked_argmax(tape.value(scores), &mask).ok_or_else(|| Error::Decode("no legal transition".into()))?;
            let transition = Transition::from_id(best, num_labels);
            let score = tape.pick(scores, best)?;
            decisions.push(Decision {
                config: config.clone(),
                transition,
                score,
            });
            config.apply(transition).map_err(|e| Error::Contract(e.to_string()))?;
        }
        let labels = config
            .label_ids()
            .into_iter()
            .map(|l| l.map_or_else(|| "_".to_string(), |l| self.vocab.labels.symbol(l).to_string()))
            .collect();
        Ok((
            DepTree {
                heads: config.heads(),
                labels,
            },
            decisions,
            base,
        ))
    }

    pub fn parse_with<R: Rng>(&self, sentence: &Sentence, rng: &mut R) -> Result<DepTree> {
        if sentence.is_empty() {
            return Ok(DepTree::default());
        }
        let mut tape = Tape::new();
        Ok(self.decide(&mut tape, sentence, rng)?.0)
    }

    pub fn parse(&self, sentence: &Sentence) -> Result<DepTree> {
        self.parse_with(sentence, &mut rng::stream(0, Component::AblationEval, 0))
    }
}

fn check_ablation(config: &TransitionConfig) -> Result<()> {
    match config.ablation {
        Some(AblationSpec::Graph(r)) => Err(Error::Config(format!(
            "ablation '{r}' applies to the graph parser only"
        ))),
        _ => Ok(()),
    }
}
