//! BiLSTM graph parser: MLP arc (or sibling) scores, exact decoding and a
//! post-hoc label classifier.
//!
//! The first MLP layer over a concatenation `[v_h; v_d; ...]` is computed as
//! a sum of per-part projections `W_h v_h + W_d v_d + ...`, so every token is
//! projected once per part instead of once per arc.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;

use super::decode::{
    cle_decode, eisner2_decode, eisner_decode, inner_siblings, sibling_range, ArcScores, SiblingScores,
};
use crate::ablation::{select_drop_token, AblationSpec, DropContext};
use crate::autodiff::{AdamConfig, ParamId, ParameterStore, Tape, Var};
use crate::encoder::{EncodedSentence, Encoder, EncoderConfig, TokenIds, Vocab};
use crate::error::{Error, Result};
use crate::rng::{self, Component};
use crate::training::{epoch_order, masked_argmax, LossStats};
use crate::treebank::{DepTree, Sentence};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    First,
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecoderKind {
    Eisner,
    Eisner2,
    Cle,
}

impl DecoderKind {
    pub fn order(self) -> Order {
        match self {
            DecoderKind::Eisner | DecoderKind::Cle => Order::First,
            DecoderKind::Eisner2 => Order::Second,
        }
    }

    pub fn default_for(order: Order) -> Self {
        match order {
            Order::First => DecoderKind::Eisner,
            Order::Second => DecoderKind::Eisner2,
        }
    }
}

/// Surface features added to the arc MLP input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SurfaceFeatures {
    /// Embedded signed head-dependent distance.
    pub dist: bool,
    /// Neighbours `h±k` and `d±k` for `k = 1..=window` (at most 2).
    pub window: usize,
}

/// Distance buckets: offsets clipped to `[-10, 10]` plus one overflow bucket
/// per sign.
pub const DIST_BUCKETS: usize = 23;

pub fn distance_bucket(h: usize, d: usize) -> usize {
    let delta = h as isize - d as isize;
    match delta {
        -10..=10 => (delta + 10) as usize,
        x if x < 0 => 21,
        _ => 22,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphConfig {
    pub encoder: EncoderConfig,
    pub order: Order,
    pub decoder: DecoderKind,
    pub surface: SurfaceFeatures,
    pub hidden: usize,
    pub label_hidden: usize,
    pub dist_dim: usize,
    pub adam: AdamConfig,
    pub ablation: Option<AblationSpec>,
    pub ablate_at_parse: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            encoder: EncoderConfig::default(),
            order: Order::First,
            decoder: DecoderKind::Eisner,
            surface: SurfaceFeatures::default(),
            hidden: 100,
            label_hidden: 100,
            dist_dim: 20,
            adam: AdamConfig::default(),
            ablation: None,
            ablate_at_parse: true,
        }
    }
}

/// Token position feeding one block of the arc MLP input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Part {
    Head,
    Dep,
    Sibling,
    HeadOffset(isize),
    DepOffset(isize),
}

impl Part {
    fn name(self) -> String {
        match self {
            Part::Head => "h".into(),
            Part::Dep => "d".into(),
            Part::Sibling => "s".into(),
            Part::HeadOffset(k) => format!("h{k:+}"),
            Part::DepOffset(k) => format!("d{k:+}"),
        }
    }
}

#[derive(Clone, Debug)]
struct ArcMlp {
    parts: Vec<(Part, ParamId)>,
    dist: Option<(ParamId, ParamId)>,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct LabelMlp {
    wh: ParamId,
    wd: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// Projected token vectors of one encoding.
#[derive(Clone, Debug)]
pub struct Projections {
    pub encoded: EncodedSentence,
    /// Per arc part, indexed by position `0..=n`, then MISSING at `n + 1`.
    parts: Vec<Vec<Var>>,
    dist: Vec<Var>,
    label_h: Vec<Var>,
    label_d: Vec<Var>,
    part_values: Vec<Vec<Vec<f64>>>,
    dist_values: Vec<Vec<f64>>,
    label_h_values: Vec<Vec<f64>>,
    label_d_values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct GraphModel {
    pub config: GraphConfig,
    pub vocab: Vocab,
    pub store: ParameterStore,
    encoder: Encoder,
    arc: ArcMlp,
    label: LabelMlp,
}

fn parts_for(config: &GraphConfig) -> Vec<Part> {
    let mut parts = vec![Part::Head, Part::Dep];
    if config.order == Order::Second {
        parts.push(Part::Sibling);
    }
    for k in 1..=config.surface.window as isize {
        parts.extend([
            Part::HeadOffset(-k),
            Part::HeadOffset(k),
            Part::DepOffset(-k),
            Part::DepOffset(k),
        ]);
    }
    parts
}

fn check_config(config: &GraphConfig) -> Result<()> {
    if config.decoder.order() != config.order {
        return Err(Error::Config(format!(
            "decoder {:?} does not match a {:?}-order model",
            config.decoder, config.order
        )));
    }
    if config.surface.window > 2 {
        return Err(Error::Config("neighbour window is at most 2".into()));
    }
    if let Some(AblationSpec::Transition(s)) = config.ablation {
        return Err(Error::Config(format!(
            "ablation '{s}' applies to the transition parser only"
        )));
    }
    Ok(())
}

impl GraphModel {
    pub fn new(config: GraphConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        check_config(&config)?;
        let mut init = rng::stream(seed, Component::Init, 0);
        let mut store = ParameterStore::new();
        let encoder = Encoder::new(config.encoder.clone(), &vocab, &mut store, &mut init);
        let dim = config.encoder.output_dim();
        let hidden = config.hidden;
        let parts = parts_for(&config)
            .into_iter()
            .map(|p| {
                let id = store.add_uniform(&format!("graph.arc.w.{}", p.name()), hidden, dim, &mut init);
                (p, id)
            })
            .collect();
        let dist = config.surface.dist.then(|| {
            let emb = store.add_uniform("graph.dist_emb", DIST_BUCKETS, config.dist_dim, &mut init);
            let w = store.add_uniform("graph.arc.w.dist", hidden, config.dist_dim, &mut init);
            (emb, w)
        });
        let arc = ArcMlp {
            parts,
            dist,
            b1: store.add_zeros("graph.arc.b1", hidden, 1),
            w2: store.add_uniform("graph.arc.w2", 1, hidden, &mut init),
            b2: store.add_zeros("graph.arc.b2", 1, 1),
        };
        let lh = config.label_hidden;
        let label = LabelMlp {
            wh: store.add_uniform("graph.label.w.h", lh, dim, &mut init),
            wd: store.add_uniform("graph.label.w.d", lh, dim, &mut init),
            b1: store.add_zeros("graph.label.b1", lh, 1),
            w2: store.add_uniform("graph.label.w2", vocab.num_labels(), lh, &mut init),
            b2: store.add_zeros("graph.label.b2", vocab.num_labels(), 1),
        };
        Ok(GraphModel {
            config,
            vocab,
            store,
            encoder,
            arc,
            label,
        })
    }

    pub fn from_store(config: GraphConfig, vocab: Vocab, store: ParameterStore) -> Result<Self> {
        check_config(&config)?;
        let id = |name: &str| {
            store
                .id(name)
                .ok_or_else(|| Error::ModelFormat(format!("missing parameter {name}")))
        };
        let parts = parts_for(&config)
            .into_iter()
            .map(|p| Ok((p, id(&format!("graph.arc.w.{}", p.name()))?)))
            .collect::<Result<Vec<_>>>()?;
        let dist = if config.surface.dist {
            Some((id("graph.dist_emb")?, id("graph.arc.w.dist")?))
        } else {
            None
        };
        let arc = ArcMlp {
            parts,
            dist,
            b1: id("graph.arc.b1")?,
            w2: id("graph.arc.w2")?,
            b2: id("graph.arc.b2")?,
        };
        let label = LabelMlp {
            wh: id("graph.label.w.h")?,
            wd: id("graph.label.w.d")?,
            b1: id("graph.label.b1")?,
            w2: id("graph.label.w2")?,
            b2: id("graph.label.b2")?,
        };
        let encoder = Encoder::from_store(config.encoder.clone(), &store)?;
        Ok(GraphModel {
            config,
            vocab,
            store,
            encoder,
            arc,
            label,
        })
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// Projects every token vector of an encoding through the first MLP
    /// layers.
    pub fn project(&self, tape: &mut Tape, encoded: EncodedSentence) -> Result<Projections> {
        let n = encoded.len();
        let vectors: Vec<Var> = (0..=n).map(|i| encoded.vector(i)).chain([encoded.missing]).collect();
        let project = |tape: &mut Tape, w: ParamId| -> Result<Vec<Var>> {
            let w = tape.param(&self.store, w);
            vectors.iter().map(|&v| Ok(tape.matmul(w, v)?)).collect()
        };
        let mut parts = Vec::new();
        for &(_, w) in &self.arc.parts {
            parts.push(project(tape, w)?);
        }
        let label_h = project(tape, self.label.wh)?;
        let label_d = project(tape, self.label.wd)?;
        let dist = match self.arc.dist {
            Some((emb, w)) => {
                let wv = tape.param(&self.store, w);
                (0..DIST_BUCKETS)
                    .map(|b| {
                        let e = tape.lookup(&self.store, emb, b)?;
                        Ok(tape.matmul(wv, e)?)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            None => Vec::new(),
        };
        let values = |vars: &[Var]| vars.iter().map(|&v| tape.value(v).to_vec()).collect::<Vec<_>>();
        Ok(Projections {
            part_values: parts.iter().map(|p| values(p)).collect(),
            dist_values: values(&dist),
            label_h_values: values(&label_h),
            label_d_values: values(&label_d),
            encoded,
            parts,
            dist,
            label_h,
            label_d,
        })
    }

    /// Slot of position `p` in a projection table (MISSING when outside
    /// the sentence).
    fn slot(n: usize, p: isize) -> usize {
        if p < 0 || p > n as isize {
            n + 1
        } else {
            p as usize
        }
    }

    fn part_position(n: usize, part: Part, h: usize, d: usize, sib: Option<usize>) -> usize {
        match part {
            Part::Head => h,
            Part::Dep => d,
            Part::Sibling => sib.unwrap_or(n + 1),
            Part::HeadOffset(k) => Self::slot(n, h as isize + k),
            Part::DepOffset(k) => Self::slot(n, d as isize + k),
        }
    }

    /// Hidden pre-activation of arc `h -> d` without the sibling block.
    fn base_preactivation(&self, proj: &Projections, h: usize, d: usize) -> Vec<f64> {
        let n = proj.encoded.len();
        let mut pre = self.store.get(self.arc.b1).value.clone();
        for (i, &(part, _)) in self.arc.parts.iter().enumerate() {
            if part == Part::Sibling {
                continue;
            }
            add_assign(&mut pre, &proj.part_values[i][Self::part_position(n, part, h, d, None)]);
        }
        if self.arc.dist.is_some() {
            add_assign(&mut pre, &proj.dist_values[distance_bucket(h, d)]);
        }
        pre
    }

    fn output(&self, pre: &[f64]) -> f64 {
        let w2 = &self.store.get(self.arc.w2).value;
        let b2 = self.store.get(self.arc.b2).value[0];
        pre.iter().zip(w2).map(|(x, w)| x.tanh() * w).sum::<f64>() + b2
    }

    fn sibling_index(&self) -> Option<usize> {
        self.arc.parts.iter().position(|&(p, _)| p == Part::Sibling)
    }

    /// Score of `h -> d` (with sibling `sib` for second-order models)
    /// computed outside the tape.
    pub fn arc_score_value(&self, proj: &Projections, h: usize, d: usize, sib: Option<usize>) -> f64 {
        let mut pre = self.base_preactivation(proj, h, d);
        if let Some(i) = self.sibling_index() {
            let n = proj.encoded.len();
            add_assign(&mut pre, &proj.part_values[i][sib.unwrap_or(n + 1)]);
        }
        self.output(&pre)
    }

    /// The same score as a tape node.
    pub fn arc_score(
        &self,
        tape: &mut Tape,
        proj: &Projections,
        h: usize,
        d: usize,
        sib: Option<usize>,
    ) -> Result<Var> {
        let n = proj.encoded.len();
        let mut terms = vec![tape.param(&self.store, self.arc.b1)];
        for (i, &(part, _)) in self.arc.parts.iter().enumerate() {
            terms.push(proj.parts[i][Self::part_position(n, part, h, d, sib)]);
        }
        if self.arc.dist.is_some() {
            terms.push(proj.dist[distance_bucket(h, d)]);
        }
        let pre = tape.add_all(&terms)?;
        let hidden = tape.tanh(pre)?;
        let w2 = tape.param(&self.store, self.arc.w2);
        let b2 = tape.param(&self.store, self.arc.b2);
        Ok(tape.affine(w2, hidden, b2)?)
    }

    pub fn label_values(&self, proj: &Projections, h: usize, d: usize) -> Vec<f64> {
        let mut pre = self.store.get(self.label.b1).value.clone();
        add_assign(&mut pre, &proj.label_h_values[h]);
        add_assign(&mut pre, &proj.label_d_values[d]);
        let hidden: Vec<f64> = pre.iter().map(|x| x.tanh()).collect();
        let w2 = self.store.get(self.label.w2);
        let b2 = &self.store.get(self.label.b2).value;
        (0..w2.rows)
            .map(|l| {
                let row = &w2.value[l * w2.cols..(l + 1) * w2.cols];
                row.iter().zip(&hidden).map(|(w, x)| w * x).sum::<f64>() + b2[l]
            })
            .collect()
    }

    pub fn label_scores(&self, tape: &mut Tape, proj: &Projections, h: usize, d: usize) -> Result<Var> {
        let b1 = tape.param(&self.store, self.label.b1);
        let pre = tape.add_all(&[b1, proj.label_h[h], proj.label_d[d]])?;
        let hidden = tape.tanh(pre)?;
        let w2 = tape.param(&self.store, self.label.w2);
        let b2 = tape.param(&self.store, self.label.b2);
        Ok(tape.affine(w2, hidden, b2)?)
    }

    /// Encodes a sentence for scoring; with an ablation spec every arc gets
    /// its own exclusion, read off the gold tree.
    pub fn prepare<R: Rng>(
        &self,
        tape: &mut Tape,
        sentence: &Sentence,
        ids: &TokenIds,
        ablate: bool,
        rng: &mut R,
    ) -> Result<ScoringContext> {
        let n = sentence.len();
        let exclusions = match (&self.config.ablation, ablate) {
            (Some(spec), true) => {
                let gold = sentence.gold_tree();
                let mut ex = vec![None; (n + 1) * (n + 1)];
                for h in 0..=n {
                    for d in 1..=n {
                        if h != d {
                            let ctx = DropContext::Arc {
                                head: h,
                                dependent: d,
                                gold: &gold,
                            };
                            ex[h * (n + 1) + d] = select_drop_token(ctx, spec, rng);
                        }
                    }
                }
                Some(ex)
            }
            _ => None,
        };
        let distinct: BTreeSet<Option<usize>> = match &exclusions {
            Some(ex) => ex.iter().copied().collect(),
            None => [None].into(),
        };
        let mut projections = HashMap::new();
        for exclude in distinct {
            let encoded = self.encoder.encode(tape, &self.store, ids, exclude)?;
            projections.insert(exclude, self.project(tape, encoded)?);
        }
        Ok(ScoringContext {
            n,
            exclusions,
            projections,
        })
    }

    /// Arc scores for every possible arc.
    pub fn score_arcs(&self, ctx: &ScoringContext) -> ArcScores {
        ArcScores::from_fn(ctx.n, |h, d| self.arc_score_value(ctx.projections(h, d), h, d, None))
    }

    /// Sibling-part scores for every `(h, d, s)`.
    pub fn score_siblings(&self, ctx: &ScoringContext) -> SiblingScores {
        let n = ctx.n;
        let sib_index = self.sibling_index();
        let mut out = SiblingScores::new(n);
        for h in 0..=n {
            for d in 1..=n {
                if h == d {
                    continue;
                }
                let proj = ctx.projections(h, d);
                let base = self.base_preactivation(proj, h, d);
                let with = |s: usize| {
                    let mut pre = base.clone();
                    if let Some(i) = sib_index {
                        add_assign(&mut pre, &proj.part_values[i][s]);
                    }
                    self.output(&pre)
                };
                out.set(h, d, None, with(n + 1));
                for s in sibling_range(h, d) {
                    out.set(h, d, Some(s), with(s));
                }
            }
        }
        out
    }

    fn decode(&self, ctx: &ScoringContext, decoder: DecoderKind, cost: Option<&[usize]>) -> DepTree {
        let wrong = |h: usize, d: usize| match cost {
            Some(gold) if gold[d - 1] != h => 1.0,
            _ => 0.0,
        };
        match decoder {
            DecoderKind::Eisner | DecoderKind::Cle => {
                let mut s = self.score_arcs(ctx);
                for h in 0..=ctx.n {
                    for d in 1..=ctx.n {
                        if h != d {
                            s.set(h, d, s.get(h, d) + wrong(h, d));
                        }
                    }
                }
                if decoder == DecoderKind::Eisner {
                    eisner_decode(&s)
                } else {
                    cle_decode(&s)
                }
            }
            DecoderKind::Eisner2 => {
                let mut s = self.score_siblings(ctx);
                if cost.is_some() {
                    for h in 0..=ctx.n {
                        for d in 1..=ctx.n {
                            if h == d || wrong(h, d) == 0.0 {
                                continue;
                            }
                            s.set(h, d, None, s.get(h, d, None) + 1.0);
                            for sib in sibling_range(h, d) {
                                s.set(h, d, Some(sib), s.get(h, d, Some(sib)) + 1.0);
                            }
                        }
                    }
                }
                eisner2_decode(&s)
            }
        }
    }

    /// Scored parts of a tree: `(h, d, sibling)` with the sibling only set
    /// for second-order models.
    fn parts_of(&self, heads: &[usize]) -> Vec<(usize, usize, Option<usize>)> {
        let sibs = match self.config.order {
            Order::First => vec![None; heads.len()],
            Order::Second => inner_siblings(heads),
        };
        heads
            .iter()
            .zip(sibs)
            .enumerate()
            .map(|(i, (&h, s))| (h, i + 1, s))
            .collect()
    }

    fn part_value(&self, ctx: &ScoringContext, (h, d, s): (usize, usize, Option<usize>)) -> f64 {
        self.arc_score_value(ctx.projections(h, d), h, d, s)
    }

    /// Structured hinge with cost-augmented decoding plus a per-arc label
    /// hinge on gold arcs; one Adam step when the loss is positive.
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
        let gold_labels = gold
            .labels
            .iter()
            .map(|l| {
                self.vocab
                    .label_id(l)
                    .ok_or_else(|| Error::Config(format!("label '{l}' not in the training vocabulary")))
            })
            .collect::<Result<Vec<_>>>()?;
        let ids = self.encoder.token_ids(&self.vocab, sentence, true, dropout);
        let mut tape = Tape::new();
        let ctx = self.prepare(&mut tape, sentence, &ids, true, ablation)?;
        let predicted = self.decode(&ctx, self.config.decoder, Some(&gold.heads));
        stats.decisions += 1;

        let gold_parts = self.parts_of(&gold.heads);
        let pred_parts = self.parts_of(&predicted.heads);
        let hamming = predicted.heads.iter().zip(&gold.heads).filter(|(p, g)| p != g).count() as f64;
        let mut terms = Vec::new();
        if predicted.heads != gold.heads {
            let score =
                |parts: &[(usize, usize, Option<usize>)]| parts.iter().map(|&p| self.part_value(&ctx, p)).sum::<f64>();
            let margin = score(&pred_parts) + hamming - score(&gold_parts);
            if margin > 0.0 {
                stats.loss += margin;
                let only_pred: Vec<_> = pred_parts.iter().filter(|p| !gold_parts.contains(p)).copied().collect();
                let only_gold: Vec<_> = gold_parts.iter().filter(|p| !pred_parts.contains(p)).copied().collect();
                for (h, d, s) in only_pred {
                    terms.push(self.arc_score(&mut tape, ctx.projections(h, d), h, d, s)?);
                }
                for (h, d, s) in only_gold {
                    let v = self.arc_score(&mut tape, ctx.projections(h, d), h, d, s)?;
                    terms.push(tape.scale(v, -1.0)?);
                }
                let c = tape.vector(vec![hamming])?;
                terms.push(c);
            }
        }
        for (i, &l) in gold_labels.iter().enumerate() {
            let (h, d) = (gold.heads[i], i + 1);
            let proj = ctx.projections(h, d);
            let values = self.label_values(proj, h, d);
            let mut mask = vec![true; values.len()];
            mask[l] = false;
            if let Some(w) = masked_argmax(&values, &mask) {
                let margin = 1.0 + values[w] - values[l];
                if margin > 0.0 {
                    stats.loss += margin;
                    let scores = self.label_scores(&mut tape, proj, h, d)?;
                    let sw = tape.pick(scores, w)?;
                    let sl = tape.pick(scores, l)?;
                    let diff = tape.sub(sw, sl)?;
                    terms.push(tape.add_scalar(diff, 1.0)?);
                }
            }
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

    pub fn train_epoch(&mut self, sentences: &[Sentence], seed: u64, epoch: u64) -> Result<LossStats> {
        let mut dropout = rng::stream(seed, Component::Dropout, epoch);
        let mut ablation = rng::stream(seed, Component::Ablation, epoch);
        let mut stats = LossStats::default();
        for i in epoch_order(sentences.len(), seed, epoch) {
            stats.merge(self.train_sentence(&sentences[i], &mut dropout, &mut ablation)?);
        }
        Ok(stats)
    }

    /// Labels every arc of an unlabeled tree.
    pub fn label_arcs(&self, ctx: &ScoringContext, heads: &[usize]) -> DepTree {
        let labels = heads
            .iter()
            .enumerate()
            .map(|(i, &h)| {
                let values = self.label_values(ctx.projections(h, i + 1), h, i + 1);
                let best = masked_argmax(&values, &vec![true; values.len()]).unwrap_or(0);
                self.vocab.labels.symbol(best).to_string()
            })
            .collect();
        DepTree {
            heads: heads.to_vec(),
            labels,
        }
    }

    /// Decodes and labels on `tape`, returning the context for further
    /// queries (impact scores).
    pub fn decide<R: Rng>(
        &self,
        tape: &mut Tape,
        sentence: &Sentence,
        decoder: DecoderKind,
        rng: &mut R,
    ) -> Result<(DepTree, ScoringContext)> {
        if decoder.order() != self.config.order {
            return Err(Error::Config(format!(
                "decoder {decoder:?} does not match a {:?}-order model",
                self.config.order
            )));
        }
        let ids = self.encoder.token_ids(&self.vocab, sentence, false, rng);
        let ctx = self.prepare(tape, sentence, &ids, self.config.ablate_at_parse, rng)?;
        let tree = self.decode(&ctx, decoder, None);
        Ok((self.label_arcs(&ctx, &tree.heads), ctx))
    }

    pub fn parse_with_decoder<R: Rng>(
        &self,
        sentence: &Sentence,
        decoder: DecoderKind,
        rng: &mut R,
    ) -> Result<DepTree> {
        if sentence.is_empty() {
            return Ok(DepTree::default());
        }
        let mut tape = Tape::new();
        Ok(self.decide(&mut tape, sentence, decoder, rng)?.0)
    }

    pub fn parse_with<R: Rng>(&self, sentence: &Sentence, rng: &mut R) -> Result<DepTree> {
        self.parse_with_decoder(sentence, self.config.decoder, rng)
    }

    pub fn parse(&self, sentence: &Sentence) -> Result<DepTree> {
        self.parse_with(sentence, &mut rng::stream(0, Component::AblationEval, 0))
    }

    /// Parts scored for a tree; second-order parts carry the inner sibling.
    pub fn tree_parts(&self, heads: &[usize]) -> Vec<(usize, usize, Option<usize>)> {
        self.parts_of(heads)
    }
}

/// Encodings and projections of one sentence, keyed by excluded token.
#[derive(Clone, Debug)]
pub struct ScoringContext {
    pub n: usize,
    exclusions: Option<Vec<Option<usize>>>,
    projections: HashMap<Option<usize>, Projections>,
}

impl ScoringContext {
    /// Token excluded while scoring `h -> d`.
    pub fn exclusion(&self, h: usize, d: usize) -> Option<usize> {
        self.exclusions.as_ref().and_then(|ex| ex[h * (self.n + 1) + d])
    }

    pub fn projections(&self, h: usize, d: usize) -> &Projections {
        &self.projections[&self.exclusion(h, d)]
    }

    /// Number of distinct encodings built for the sentence.
    pub fn num_encodings(&self) -> usize {
        self.projections.len()
    }
}

fn add_assign(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderMode;
    use crate::treebank::Token;

    fn corpus() -> Vec<Sentence> {
        let s = |words: &[(&str, &str, usize, &str)]| {
            Sentence::new(
                words
                    .iter()
                    .enumerate()
                    .map(|(i, &(w, t, h, l))| Token::new(i + 1, w, t, h, l))
                    .collect(),
            )
        };
        vec![
            s(&[
                ("the", "DET", 2, "det"),
                ("dog", "NOUN", 3, "nsubj"),
                ("barks", "VERB", 0, "root"),
            ]),
            s(&[
                ("a", "DET", 2, "det"),
                ("cat", "NOUN", 3, "nsubj"),
                ("sleeps", "VERB", 0, "root"),
                ("now", "ADV", 3, "advmod"),
            ]),
            s(&[
                ("dogs", "NOUN", 2, "nsubj"),
                ("bark", "VERB", 0, "root"),
                ("loudly", "ADV", 2, "advmod"),
            ]),
        ]
    }

    pub(crate) fn small_config(order: Order, mode: EncoderMode) -> GraphConfig {
        GraphConfig {
            encoder: EncoderConfig {
                word_dim: 8,
                pos_dim: 4,
                lstm_dim: 8,
                lstm_layers: 1,
                mode,
                root_token: false,
                word_dropout: 0.0,
            },
            order,
            decoder: DecoderKind::default_for(order),
            surface: SurfaceFeatures { dist: true, window: 1 },
            hidden: 16,
            label_hidden: 16,
            dist_dim: 4,
            adam: AdamConfig {
                learning_rate: 0.01,
                ..AdamConfig::default()
            },
            ablation: None,
            ablate_at_parse: true,
        }
    }

    #[test]
    fn distance_buckets() {
        assert_eq!(distance_bucket(3, 1), 12);
        assert_eq!(distance_bucket(1, 3), 8);
        assert_eq!(distance_bucket(0, 11), 21);
        assert_eq!(distance_bucket(20, 1), 22);
        assert_eq!(distance_bucket(0, 10), 0);
    }

    #[test]
    fn tape_and_plain_scores_agree() {
        for order in [Order::First, Order::Second] {
            let c = corpus();
            let m = GraphModel::new(small_config(order, EncoderMode::Bilstm), Vocab::build(&c).unwrap(), 4).unwrap();
            let mut tape = Tape::new();
            let mut r = rng::stream(0, Component::Data, 0);
            let ids = m.encoder.token_ids(&m.vocab, &c[1], false, &mut r);
            let ctx = m.prepare(&mut tape, &c[1], &ids, false, &mut r).unwrap();
            let sib = if order == Order::Second { Some(2) } else { None };
            let plain = m.arc_score_value(ctx.projections(1, 4), 1, 4, sib);
            let var = m.arc_score(&mut tape, ctx.projections(1, 4), 1, 4, sib).unwrap();
            assert!((tape.scalar(var) - plain).abs() < 1e-12);
            let lv = m.label_values(ctx.projections(3, 4), 3, 4);
            let ls = m.label_scores(&mut tape, ctx.projections(3, 4), 3, 4).unwrap();
            for (a, b) in lv.iter().zip(tape.value(ls)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_token_scores_and_parse() {
        let c = corpus();
        let m = GraphModel::new(
            small_config(Order::First, EncoderMode::Bilstm),
            Vocab::build(&c).unwrap(),
            4,
        )
        .unwrap();
        let s = Sentence::new(vec![Token::new(1, "dogs", "NOUN", 0, "root")]);
        let mut tape = Tape::new();
        let mut r = rng::stream(0, Component::Data, 0);
        let ids = m.encoder.token_ids(&m.vocab, &s, false, &mut r);
        let ctx = m.prepare(&mut tape, &s, &ids, false, &mut r).unwrap();
        let scores = m.score_arcs(&ctx);
        assert!(scores.get(0, 1).is_finite());
        assert_eq!(m.parse(&s).unwrap().heads, vec![0]);
    }

    #[test]
    fn decoder_order_mismatch_is_config_error() {
        let c = corpus();
        let mut cfg = small_config(Order::First, EncoderMode::Bilstm);
        cfg.decoder = DecoderKind::Eisner2;
        assert!(matches!(
            GraphModel::new(cfg, Vocab::build(&c).unwrap(), 0),
            Err(Error::Config(_))
        ));
        let m = GraphModel::new(
            small_config(Order::First, EncoderMode::Bilstm),
            Vocab::build(&c).unwrap(),
            0,
        )
        .unwrap();
        let mut r = rng::stream(0, Component::Data, 0);
        assert!(matches!(
            m.parse_with_decoder(&c[0], DecoderKind::Eisner2, &mut r),
            Err(Error::Config(_))
        ));
        assert!(m.parse_with_decoder(&c[0], DecoderKind::Cle, &mut r).is_ok());
    }

    #[test]
    fn memorizes_toy_corpus() {
        for order in [Order::First, Order::Second] {
            let c = corpus();
            let mut m =
                GraphModel::new(small_config(order, EncoderMode::Bilstm), Vocab::build(&c).unwrap(), 5).unwrap();
            for epoch in 0..40 {
                let stats = m.train_epoch(&c, 5, epoch).unwrap();
                assert!(stats.loss >= 0.0);
            }
            for s in &c {
                assert_eq!(m.parse(s).unwrap(), s.gold_tree(), "{order:?}");
            }
        }
    }

    #[test]
    fn sibling_ablation_builds_at_most_n_plus_one_encodings() {
        let c = corpus();
        let mut cfg = small_config(Order::First, EncoderMode::Bilstm);
        cfg.ablation = Some("sibling".parse().unwrap());
        let m = GraphModel::new(cfg, Vocab::build(&c).unwrap(), 0).unwrap();
        let mut tape = Tape::new();
        let mut r = rng::stream(0, Component::Data, 0);
        let ids = m.encoder.token_ids(&m.vocab, &c[1], false, &mut r);
        let ctx = m.prepare(&mut tape, &c[1], &ids, true, &mut r).unwrap();
        assert!(ctx.num_encodings() <= c[1].len() + 1);
        // 3 heads 2 and 4; scoring 3 -> 4 drops 2.
        assert_eq!(ctx.exclusion(3, 4), Some(2));
        assert_eq!(ctx.exclusion(1, 2), None);
    }
}
