//! Training runs, corpus parsing, sweeps and TSV reports.

use std::fmt::Write as _;

use crate::ablation::{self, AblationSpec, DropRow, SeedResult};
use crate::config::{ExperimentConfig, ParserKind};
use crate::encoder::{EncoderMode, Vocab};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport, LengthCurve};
use crate::exec::Exec;
use crate::graph::{GraphModel, Order};
use crate::impact::{self, BucketStat, Taxonomy};
use crate::model_file;
use crate::rng::{self, Component};
use crate::training::LossStats;
use crate::transition::{FeatureSet, TransitionParser};
use crate::treebank::{self, DepTree, Sentence};

/// A trained parser of either kind.
#[derive(Clone, Debug)]
pub enum Model {
    Transition(TransitionParser),
    Graph(GraphModel),
}

impl Model {
    pub fn new(config: &ExperimentConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(match config.parser {
            ParserKind::Transition => {
                Model::Transition(TransitionParser::new(config.transition_config(), vocab, seed)?)
            }
            ParserKind::Graph => Model::Graph(GraphModel::new(config.graph_config(), vocab, seed)?),
        })
    }

    pub fn vocab(&self) -> &Vocab {
        match self {
            Model::Transition(p) => &p.vocab,
            Model::Graph(g) => &g.vocab,
        }
    }

    pub fn store(&self) -> &crate::autodiff::ParameterStore {
        match self {
            Model::Transition(p) => &p.store,
            Model::Graph(g) => &g.store,
        }
    }

    pub fn encoder(&self) -> &crate::encoder::Encoder {
        match self {
            Model::Transition(p) => p.encoder(),
            Model::Graph(g) => g.encoder(),
        }
    }

    fn store_mut(&mut self) -> &mut crate::autodiff::ParameterStore {
        match self {
            Model::Transition(p) => &mut p.store,
            Model::Graph(g) => &mut g.store,
        }
    }

    pub fn train_epoch(&mut self, sentences: &[Sentence], seed: u64, epoch: u64) -> Result<LossStats> {
        match self {
            Model::Transition(p) => p.train_epoch(sentences, seed, epoch),
            Model::Graph(g) => g.train_epoch(sentences, seed, epoch),
        }
    }

    pub fn parse_with<R: rand::Rng>(&self, sentence: &Sentence, rng: &mut R) -> Result<DepTree> {
        if sentence.is_empty() {
            return Ok(DepTree::default());
        }
        match self {
            Model::Transition(p) => p.parse_with(sentence, rng),
            Model::Graph(g) => g.parse_with(sentence, rng),
        }
    }

    pub fn to_bytes(&self, config: &ExperimentConfig) -> Vec<u8> {
        model_file::to_bytes(config, self.vocab(), self.store())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(ExperimentConfig, Model)> {
        let (config, vocab, store) = model_file::from_bytes(bytes)?;
        config.validate()?;
        let model = match config.parser {
            ParserKind::Transition => {
                Model::Transition(TransitionParser::from_store(config.transition_config(), vocab, store)?)
            }
            ParserKind::Graph => Model::Graph(GraphModel::from_store(config.graph_config(), vocab, store)?),
        };
        Ok((config, model))
    }
}

/// Parses every sentence; sentence `i` draws ablation choices from its own
/// stream so results do not depend on the execution order.
pub fn parse_corpus(model: &Model, sentences: &[Sentence], exec: Exec) -> Result<Vec<DepTree>> {
    exec.try_map(sentences, |i, s| {
        model.parse_with(s, &mut rng::stream(0, Component::AblationEval, i as u64))
    })
}

pub fn evaluate(model: &Model, sentences: &[Sentence], exec: Exec) -> Result<(EvalReport, Vec<DepTree>)> {
    let predicted = parse_corpus(model, sentences, exec)?;
    Ok((eval::las(sentences, &predicted)?, predicted))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub dev_las: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: Model,
    pub seed: u64,
    pub log: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub dev_las: Option<f64>,
}

/// Trains for `config.epochs` epochs and keeps the parameters of the epoch
/// with the best dev LAS (the last epoch without a dev set).
pub fn train(
    config: &ExperimentConfig,
    train: &[Sentence],
    dev: &[Sentence],
    seed: u64,
    exec: Exec,
) -> Result<TrainedModel> {
    let vocab = Vocab::build(train)?;
    let mut model = Model::new(config, vocab, seed)?;
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<Vec<f64>>)> = None;
    for epoch in 0..config.epochs {
        let stats = model.train_epoch(train, seed, epoch as u64)?;
        if !stats.loss.is_finite() {
            return Err(Error::Contract(format!("training diverged in epoch {}", epoch + 1)));
        }
        let dev_las = if dev.is_empty() {
            None
        } else {
            Some(evaluate(&model, dev, exec)?.0.las)
        };
        log.push(EpochLog {
            epoch: epoch + 1,
            loss: stats.loss,
            dev_las,
        });
        if let Some(las) = dev_las {
            if best.as_ref().is_none_or(|(b, _, _)| las > *b) {
                best = Some((las, epoch + 1, model.store().snapshot()));
            }
        }
    }
    let (best_epoch, dev_las) = match best {
        Some((las, epoch, snapshot)) => {
            model.store_mut().restore(&snapshot);
            (epoch, Some(las))
        }
        None => (config.epochs, None),
    };
    Ok(TrainedModel {
        model,
        seed,
        log,
        best_epoch,
        dev_las,
    })
}

pub fn training_log_tsv(runs: &[TrainedModel]) -> String {
    let mut out = String::from("seed\tepoch\tloss\tdev_las\n");
    for r in runs {
        for e in &r.log {
            let las = e.dev_las.map_or("NA".to_string(), |x| format!("{x:.4}"));
            let _ = writeln!(out, "{}\t{}\t{:.6}\t{las}", r.seed, e.epoch, e.loss);
        }
    }
    out
}

/// FNV-1a hash of the CoNLL-U rendering of a corpus.
pub fn corpus_fingerprint(sentences: &[Sentence]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in treebank::write_conllu(sentences).bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// One configuration of a sweep.
#[derive(Clone, Debug)]
pub struct Cell {
    pub name: String,
    pub config: ExperimentConfig,
}

fn mode_name(mode: EncoderMode) -> &'static str {
    match mode {
        EncoderMode::Bilstm => "bilstm",
        EncoderMode::Direct => "direct",
    }
}

fn with_mode(base: &ExperimentConfig, mode: EncoderMode) -> ExperimentConfig {
    let mut c = base.clone();
    c.encoder.mode = mode;
    c
}

/// Growing transition feature sets, each with and without the BiLSTM.
pub fn transition_cells(base: &ExperimentConfig, ladder: &[FeatureSet]) -> Vec<Cell> {
    let mut cells = Vec::new();
    for mode in [EncoderMode::Bilstm, EncoderMode::Direct] {
        for (k, features) in ladder.iter().enumerate() {
            let mut config = with_mode(base, mode);
            config.parser = ParserKind::Transition;
            config.features = features.clone();
            let name = if k == 0 {
                features.to_string()
            } else {
                format!("+{}", features.0.last().expect("nonempty feature set"))
            };
            cells.push(Cell { name, config });
        }
    }
    cells
}

/// Graph surface-feature steps: base, +dist, +h±1/d±1, +h±2/d±2.
pub const GRAPH_STEPS: [&str; 4] = ["base", "+dist", "+h±1,d±1", "+h±2,d±2"];

/// Graph ladder crossed with the given orders and both encoder modes.
pub fn graph_cells(base: &ExperimentConfig, steps: usize, orders: &[Order]) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &order in orders {
        for mode in [EncoderMode::Bilstm, EncoderMode::Direct] {
            for (k, step) in GRAPH_STEPS.iter().enumerate().take(steps) {
                let mut config = with_mode(base, mode);
                config.parser = ParserKind::Graph;
                config.order = order;
                config.decoder = None;
                config.surface.dist = k >= 1;
                config.surface.window = k.saturating_sub(1);
                let order_name = match order {
                    Order::First => "first",
                    Order::Second => "second",
                };
                cells.push(Cell {
                    name: format!("{order_name}:{step}"),
                    config,
                });
            }
        }
    }
    cells
}

/// Dev LAS of every seed of one cell.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub name: String,
    pub mode: EncoderMode,
    pub runs: Vec<SeedResult>,
}

impl CellResult {
    pub fn stats(&self) -> eval::SeedStats {
        eval::seed_stats(&self.runs.iter().map(|r| r.las).collect::<Vec<_>>())
    }
}

/// Trains every cell with every configured seed; the (cell, seed) jobs are
/// independent and run through `exec`, each job sequentially.
pub fn run_cells(cells: &[Cell], train_set: &[Sentence], dev: &[Sentence], exec: Exec) -> Result<Vec<CellResult>> {
    if dev.is_empty() {
        return Err(Error::Config("sweeps need a dev corpus".into()));
    }
    let corpus = corpus_fingerprint(dev);
    let jobs: Vec<(usize, u64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.config.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results = exec.try_map(&jobs, |_, &(i, seed)| -> Result<SeedResult> {
        let run = train(&cells[i].config, train_set, dev, seed, Exec::Sequential)?;
        Ok(SeedResult {
            seed,
            las: run.dev_las.unwrap_or(f64::NAN),
            corpus,
        })
    })?;
    let mut out: Vec<CellResult> = cells
        .iter()
        .map(|c| CellResult {
            name: c.name.clone(),
            mode: c.config.encoder.mode,
            runs: Vec::new(),
        })
        .collect();
    for ((i, _), r) in jobs.into_iter().zip(results) {
        out[i].runs.push(r);
    }
    Ok(out)
}

/// `cell, mode, mean_las, stddev` (fig3a / fig3b).
pub fn sweep_tsv(results: &[CellResult]) -> String {
    let mut out = String::from("cell\tmode\tmean_las\tstddev\n");
    for r in results {
        let s = r.stats();
        let _ = writeln!(out, "{}\t{}\t{:.2}\t{:.2}", r.name, mode_name(r.mode), s.mean, s.stddev);
    }
    out
}

/// `model, treebank, mean_las, stddev`.
pub fn table1_tsv(rows: &[(String, String, eval::SeedStats)]) -> String {
    let mut out = String::from("model\ttreebank\tmean_las\tstddev\n");
    for (model, tb, s) in rows {
        let _ = writeln!(out, "{model}\t{tb}\t{:.2}\t{:.2}", s.mean, s.stddev);
    }
    out
}

/// `model, arc_length, recall, gold_count` (fig2); root arcs appear as
/// `root`, pooled lengths as `{cap}+`.
pub fn recall_tsv(model: &str, curve: &LengthCurve, cap: usize) -> String {
    length_tsv(model, curve, cap, "recall", |p| p.recall)
}

/// `model, arc_length, precision, gold_count` (fig8).
pub fn precision_tsv(model: &str, curve: &LengthCurve, cap: usize) -> String {
    length_tsv(model, curve, cap, "precision", |p| p.precision)
}

fn length_tsv(
    model: &str,
    curve: &LengthCurve,
    cap: usize,
    column: &str,
    value: impl Fn(&eval::LengthPoint) -> Option<f64>,
) -> String {
    let mut out = format!("model\tarc_length\t{column}\tgold_count\n");
    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.2}"));
    for p in &curve.points {
        let length = if p.length >= cap {
            format!("{cap}+")
        } else {
            p.length.to_string()
        };
        let _ = writeln!(out, "{model}\t{length}\t{}\t{}", fmt(value(p)), p.gold_count);
    }
    if let Some(p) = &curve.root {
        let _ = writeln!(out, "{model}\troot\t{}\t{}", fmt(value(p)), p.gold_count);
    }
    out
}

/// Trains the baseline and one ablated model per spec for every seed and
/// reports the LAS drops.
pub fn run_ablation(
    base: &ExperimentConfig,
    specs: &[AblationSpec],
    train_set: &[Sentence],
    dev: &[Sentence],
    exec: Exec,
) -> Result<Vec<DropRow>> {
    let mut cells = vec![Cell {
        name: "baseline".into(),
        config: ExperimentConfig {
            ablation: None,
            ..base.clone()
        },
    }];
    for spec in specs {
        let mut config = base.clone();
        config.ablation = Some(*spec);
        config.validate()?;
        cells.push(Cell {
            name: spec.to_string(),
            config,
        });
    }
    let results = run_cells(&cells, train_set, dev, exec)?;
    let ablated: Vec<(String, Vec<SeedResult>)> =
        results[1..].iter().map(|r| (r.name.clone(), r.runs.clone())).collect();
    ablation::compare(&results[0].runs, &ablated)
}

/// Impact tables of a trained model: `fig4` (BiLSTM vectors, BiLSTM
/// encoders only) and `fig5a` or `fig5b` (decision scores). Returns
/// `(file stem, taxonomy, bucket statistics)`.
pub fn impact_report(
    model: &Model,
    dev: &[Sentence],
    taxonomies: &[Taxonomy],
    exec: Exec,
) -> Result<Vec<(&'static str, Taxonomy, Vec<BucketStat>)>> {
    let mut out = Vec::new();
    if taxonomies.contains(&Taxonomy::DistanceRelation) && model.encoder().config.mode == EncoderMode::Bilstm {
        let records = impact::corpus_lstm_impacts(model.encoder(), model.store(), model.vocab(), dev, exec)?;
        out.push(("fig4", Taxonomy::DistanceRelation, impact::aggregate(&records)));
    }
    match model {
        Model::Transition(p) if taxonomies.contains(&Taxonomy::ConfigPosition) => {
            let records = impact::transition_score_impacts(p, dev, exec)?;
            out.push(("fig5a", Taxonomy::ConfigPosition, impact::aggregate(&records)));
        }
        Model::Graph(g) if taxonomies.contains(&Taxonomy::TreePosition) => {
            let records = impact::graph_score_impacts(g, dev, exec)?;
            out.push(("fig5b", Taxonomy::TreePosition, impact::aggregate(&records)));
        }
        _ => {}
    }
    Ok(out)
}
