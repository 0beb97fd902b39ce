use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use depctx::ablation::{self, AblationSpec};
use depctx::config::{ExperimentConfig, ParserKind};
use depctx::encoder::EncoderMode;
use depctx::eval;
use depctx::exec::Exec;
use depctx::experiment::{self, Model, TrainedModel};
use depctx::graph::Order;
use depctx::impact::{self, Taxonomy};
use depctx::synth;
use depctx::transition::FeatureSet;
use depctx::treebank::{self, Sentence};
use depctx::Error;

const LENGTH_CAP: usize = 10;

#[derive(Parser)]
#[command(
    name = "depctx",
    version,
    about = "BiLSTM dependency parsers and structural-context analyses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run every job on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment configuration (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra configuration entries, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Train with this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Training treebank (CoNLL-U).
    #[arg(long)]
    treebank: Option<PathBuf>,
    /// Development treebank (CoNLL-U).
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per seed with best-dev selection.
    Train(Common),
    /// Parse a treebank with a trained model.
    Parse {
        #[arg(long)]
        model: PathBuf,
        /// Input CoNLL-U.
        #[arg(long)]
        treebank: PathBuf,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Attachment scores and accuracy by arc length.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Feature-set ladder, with and without the BiLSTM.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Number of ladder steps to run.
        #[arg(long)]
        steps: Option<usize>,
        /// Graph parser orders to cross with the ladder.
        #[arg(long, value_delimiter = ',', default_value = "first,second")]
        orders: Vec<String>,
    },
    /// Impact of word representations on BiLSTM vectors and decision scores.
    Impact {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// all, distance-relation, config-position or tree-position.
        #[arg(long, default_value = "all")]
        taxonomy: String,
    },
    /// Train ablated models and report the LAS drops.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Positions to drop, e.g. s0L,s1R or sibling,child.
        #[arg(long, value_delimiter = ',', required = true)]
        specs: Vec<String>,
    },
    /// Write a synthetic train/dev treebank pair.
    Generate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 500)]
        train_size: usize,
        #[arg(long, default_value_t = 100)]
        dev_size: usize,
        #[arg(long, default_value_t = 20)]
        max_len: usize,
    },
}

/// Errors with their exit status: 2 for usage and configuration, 1 otherwise.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Config(_)) { 2 } else { 1 };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn runtime(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

type Outcome = Result<(), Failure>;

fn read_treebank(path: &Path) -> Result<Vec<Sentence>, Failure> {
    let file = fs::File::open(path).map_err(|e| runtime(format!("cannot read {}: {e}", path.display())))?;
    treebank::read_conllu(std::io::BufReader::new(file)).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<(ExperimentConfig, Model), Failure> {
    let bytes = fs::read(path).map_err(|e| runtime(format!("cannot read {}: {e}", path.display())))?;
    Model::from_bytes(&bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

/// Config file, then `--set` entries, then the path and seed flags.
fn resolve(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| runtime(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    for entry in &common.set {
        let (k, v) = entry
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got '{entry}'")))?;
        config.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = common.seed {
        config.seeds = vec![seed];
    }
    if let Some(p) = &common.treebank {
        config.train = Some(p.clone());
    }
    if let Some(p) = &common.dev {
        config.dev = Some(p.clone());
    }
    config.validate()?;
    Ok(config)
}

fn load_data(config: &ExperimentConfig, need_dev: bool) -> Result<(Vec<Sentence>, Vec<Sentence>), Failure> {
    let train = config
        .train
        .as_deref()
        .ok_or_else(|| usage("no training treebank (use --treebank or train = ...)"))?;
    let train = read_treebank(train)?;
    let dev = match config.dev.as_deref() {
        Some(p) => read_treebank(p)?,
        None if need_dev => return Err(usage("no development treebank (use --dev or dev = ...)")),
        None => Vec::new(),
    };
    Ok((train, dev))
}

fn mode_name(mode: EncoderMode) -> &'static str {
    match mode {
        EncoderMode::Bilstm => "bilstm",
        EncoderMode::Direct => "direct",
    }
}

fn model_name(config: &ExperimentConfig) -> String {
    let mode = mode_name(config.encoder.mode);
    match config.parser {
        ParserKind::Transition => format!("transition:{}:{mode}", config.features),
        ParserKind::Graph => {
            let order = match config.order {
                Order::First => "first",
                Order::Second => "second",
            };
            format!("graph:{order}:{mode}")
        }
    }
}

fn treebank_name(config: &ExperimentConfig) -> String {
    config
        .train
        .as_deref()
        .and_then(Path::file_stem)
        .map_or_else(|| "-".into(), |s| s.to_string_lossy().into_owned())
}

fn cmd_train(common: &Common, exec: Exec) -> Outcome {
    let config = resolve(common)?;
    let (train, dev) = load_data(&config, false)?;
    let runs = exec.try_map(&config.seeds, |_, &seed| {
        experiment::train(&config, &train, &dev, seed, Exec::Sequential)
    })?;
    for run in &runs {
        write(
            &common.out_dir,
            &format!("model-seed{}.dprs", run.seed),
            run.model.to_bytes(&config),
        )?;
        match run.dev_las {
            Some(las) => println!("seed {}: best dev LAS {las:.2} (epoch {})", run.seed, run.best_epoch),
            None => println!("seed {}: trained {} epochs", run.seed, run.best_epoch),
        }
    }
    write(&common.out_dir, "train_log.tsv", experiment::training_log_tsv(&runs))?;
    if !dev.is_empty() {
        let las: Vec<f64> = runs.iter().filter_map(|r: &TrainedModel| r.dev_las).collect();
        let row = (model_name(&config), treebank_name(&config), eval::seed_stats(&las));
        write(&common.out_dir, "table1.tsv", experiment::table1_tsv(&[row]))?;
    }
    Ok(())
}

fn cmd_parse(model: &Path, input: &Path, out: Option<&Path>, exec: Exec) -> Outcome {
    let (_, model) = read_model(model)?;
    let sentences = read_treebank(input)?;
    let trees = experiment::parse_corpus(&model, &sentences, exec)?;
    let parsed: Vec<Sentence> = sentences
        .iter()
        .zip(&trees)
        .map(|(s, t)| s.with_prediction(t))
        .collect();
    let text = treebank::write_conllu(&parsed);
    match out {
        Some(path) => fs::write(path, text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_eval(model_path: &Path, dev: &Path, out_dir: &Path, exec: Exec) -> Outcome {
    let (config, model) = read_model(model_path)?;
    let dev = read_treebank(dev)?;
    let (report, predicted) = experiment::evaluate(&model, &dev, exec)?;
    println!("LAS {:.2}  UAS {:.2}  tokens {}", report.las, report.uas, report.tokens);
    let curve = eval::recall_by_length(&dev, &predicted, LENGTH_CAP)?;
    let name = model_name(&config);
    write(out_dir, "fig2.tsv", experiment::recall_tsv(&name, &curve, LENGTH_CAP))?;
    write(
        out_dir,
        "fig8.tsv",
        experiment::precision_tsv(&name, &curve, LENGTH_CAP),
    )
}

fn cmd_sweep(common: &Common, steps: Option<usize>, orders: &[String], exec: Exec) -> Outcome {
    let config = resolve(common)?;
    let (train, dev) = load_data(&config, true)?;
    let (cells, file) = match config.parser {
        ParserKind::Transition => {
            let mut ladder = FeatureSet::ladder();
            ladder.truncate(steps.unwrap_or(ladder.len()).max(1));
            (experiment::transition_cells(&config, &ladder), "fig3a.tsv")
        }
        ParserKind::Graph => {
            let orders = orders
                .iter()
                .map(|o| match o.as_str() {
                    "first" => Ok(Order::First),
                    "second" => Ok(Order::Second),
                    other => Err(usage(format!("unknown order '{other}'"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let steps = steps
                .unwrap_or(experiment::GRAPH_STEPS.len())
                .clamp(1, experiment::GRAPH_STEPS.len());
            (experiment::graph_cells(&config, steps, &orders), "fig3b.tsv")
        }
    };
    let results = experiment::run_cells(&cells, &train, &dev, exec)?;
    for r in &results {
        let s = r.stats();
        println!("{} {}: {:.2} ± {:.2}", r.name, mode_name(r.mode), s.mean, s.stddev);
    }
    write(&common.out_dir, file, experiment::sweep_tsv(&results))
}

fn cmd_impact(model_path: &Path, dev: &Path, out_dir: &Path, taxonomy: &str, exec: Exec) -> Outcome {
    let taxonomies = match taxonomy {
        "all" => vec![
            Taxonomy::DistanceRelation,
            Taxonomy::ConfigPosition,
            Taxonomy::TreePosition,
        ],
        "distance-relation" => vec![Taxonomy::DistanceRelation],
        "config-position" => vec![Taxonomy::ConfigPosition],
        "tree-position" => vec![Taxonomy::TreePosition],
        other => return Err(usage(format!("unknown taxonomy '{other}'"))),
    };
    let (_, model) = read_model(model_path)?;
    let dev = read_treebank(dev)?;
    let tables = experiment::impact_report(&model, &dev, &taxonomies, exec)?;
    if tables.is_empty() {
        return Err(usage(format!("taxonomy '{taxonomy}' does not apply to this model")));
    }
    for (stem, taxonomy, stats) in tables {
        write(out_dir, &format!("{stem}.tsv"), impact::impact_tsv(taxonomy, &stats))?;
    }
    Ok(())
}

fn cmd_ablate(common: &Common, specs: &[String], exec: Exec) -> Outcome {
    let config = resolve(common)?;
    let specs = specs
        .iter()
        .map(|s| {
            s.parse::<AblationSpec>()
                .map_err(|e| usage(format!("ablation spec: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (train, dev) = load_data(&config, true)?;
    let rows = experiment::run_ablation(&config, &specs, &train, &dev, exec)?;
    let file = match config.parser {
        ParserKind::Transition => "fig6a.tsv",
        ParserKind::Graph => "fig6b.tsv",
    };
    write(&common.out_dir, file, ablation::drops_tsv(&rows))
}

fn cmd_generate(seed: u64, out_dir: &Path, train_size: usize, dev_size: usize, max_len: usize) -> Outcome {
    if max_len < 3 {
        return Err(usage("--max-len must be at least 3"));
    }
    write(
        out_dir,
        "train.conllu",
        treebank::write_conllu(&synth::treebank(seed, 0, train_size, max_len)),
    )?;
    write(
        out_dir,
        "dev.conllu",
        treebank::write_conllu(&synth::treebank(seed, 1, dev_size, max_len)),
    )
}

fn run(cli: Cli) -> Outcome {
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    match &cli.command {
        Command::Train(common) => cmd_train(common, exec),
        Command::Parse { model, treebank, out } => cmd_parse(model, treebank, out.as_deref(), exec),
        Command::Eval { model, dev, out_dir } => cmd_eval(model, dev, out_dir, exec),
        Command::Sweep { common, steps, orders } => cmd_sweep(common, *steps, orders, exec),
        Command::Impact {
            model,
            dev,
            out_dir,
            taxonomy,
        } => cmd_impact(model, dev, out_dir, taxonomy, exec),
        Command::Ablate { common, specs } => cmd_ablate(common, specs, exec),
        Command::Generate {
            seed,
            out_dir,
            train_size,
            dev_size,
            max_len,
        } => cmd_generate(*seed, out_dir, *train_size, *dev_size, *max_len),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("depctx: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
