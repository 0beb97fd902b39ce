//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::ablation::AblationSpec;
use crate::autodiff::AdamConfig;
use crate::encoder::{EncoderConfig, EncoderMode};
use crate::error::{Error, Result};
use crate::graph::{DecoderKind, GraphConfig, Order, SurfaceFeatures};
use crate::transition::{FeatureSet, SwapStrategy, TransitionConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParserKind {
    Transition,
    Graph,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub parser: ParserKind,
    pub features: FeatureSet,
    pub order: Order,
    /// `None` picks the default decoder for the order.
    pub decoder: Option<DecoderKind>,
    pub encoder: EncoderConfig,
    pub surface: SurfaceFeatures,
    pub hidden: usize,
    pub label_hidden: usize,
    pub dist_dim: usize,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub swap: SwapStrategy,
    pub ablation: Option<AblationSpec>,
    pub ablate_at_parse: bool,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            parser: ParserKind::Transition,
            features: FeatureSet::simple(),
            order: Order::First,
            decoder: None,
            encoder: EncoderConfig::default(),
            surface: SurfaceFeatures::default(),
            hidden: 100,
            label_hidden: 100,
            dist_dim: 20,
            adam: AdamConfig::default(),
            epochs: 30,
            seeds: vec![1],
            swap: SwapStrategy::Lazy,
            ablation: None,
            ablate_at_parse: true,
            train: None,
            dev: None,
        }
    }
}

fn invalid(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value '{value}' for {key}"))
}

fn number<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| invalid(key, value))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(invalid(key, value)),
    }
}

fn order_name(o: Order) -> &'static str {
    match o {
        Order::First => "first",
        Order::Second => "second",
    }
}

fn decoder_name(d: DecoderKind) -> &'static str {
    match d {
        DecoderKind::Eisner => "eisner",
        DecoderKind::Eisner2 => "eisner2",
        DecoderKind::Cle => "cle",
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = ExperimentConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "parser" => {
                self.parser = match value {
                    "transition" => ParserKind::Transition,
                    "graph" => ParserKind::Graph,
                    _ => return Err(invalid(key, value)),
                }
            }
            "features" => self.features = value.parse().map_err(|e| Error::Config(format!("features: {e}")))?,
            "order" => {
                self.order = match value {
                    "first" | "1" => Order::First,
                    "second" | "2" => Order::Second,
                    _ => return Err(invalid(key, value)),
                }
            }
            "decoder" => {
                self.decoder = match value {
                    "default" => None,
                    "eisner" => Some(DecoderKind::Eisner),
                    "eisner2" => Some(DecoderKind::Eisner2),
                    "cle" => Some(DecoderKind::Cle),
                    _ => return Err(invalid(key, value)),
                }
            }
            "mode" => {
                self.encoder.mode = match value {
                    "bilstm" => EncoderMode::Bilstm,
                    "direct" => EncoderMode::Direct,
                    _ => return Err(invalid(key, value)),
                }
            }
            "dist" => self.surface.dist = flag(key, value)?,
            "window" => {
                let w: usize = number(key, value)?;
                if w > 2 {
                    return Err(invalid(key, value));
                }
                self.surface.window = w;
            }
            "word_dim" => self.encoder.word_dim = number(key, value)?,
            "pos_dim" => self.encoder.pos_dim = number(key, value)?,
            "lstm_dim" => self.encoder.lstm_dim = number(key, value)?,
            "lstm_layers" => self.encoder.lstm_layers = number(key, value)?,
            "hidden" => self.hidden = number(key, value)?,
            "label_hidden" => self.label_hidden = number(key, value)?,
            "dist_dim" => self.dist_dim = number(key, value)?,
            "word_dropout" => {
                let a: f64 = number(key, value)?;
                if !(0.0..=1.0).contains(&a) {
                    return Err(invalid(key, value));
                }
                self.encoder.word_dropout = a;
            }
            "root_token" => self.encoder.root_token = flag(key, value)?,
            "learning_rate" => self.adam.learning_rate = number(key, value)?,
            "beta1" => self.adam.beta1 = number(key, value)?,
            "beta2" => self.adam.beta2 = number(key, value)?,
            "epsilon" => self.adam.epsilon = number(key, value)?,
            "epochs" => self.epochs = number(key, value)?,
            "seeds" => {
                let seeds = value
                    .split(',')
                    .map(|s| number::<u64>(key, s.trim()))
                    .collect::<Result<Vec<_>>>()?;
                if seeds.is_empty() {
                    return Err(invalid(key, value));
                }
                self.seeds = seeds;
            }
            "swap" => {
                self.swap = match value {
                    "lazy" => SwapStrategy::Lazy,
                    "eager" => SwapStrategy::Eager,
                    _ => return Err(invalid(key, value)),
                }
            }
            "ablation" => {
                self.ablation = match value {
                    "none" | "" => None,
                    v => Some(v.parse().map_err(|e| Error::Config(format!("ablation: {e}")))?),
                }
            }
            "ablate_at_parse" => self.ablate_at_parse = flag(key, value)?,
            "train" => self.train = Some(PathBuf::from(value)),
            "dev" => self.dev = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    pub fn decoder(&self) -> DecoderKind {
        self.decoder.unwrap_or_else(|| DecoderKind::default_for(self.order))
    }

    /// Cross-field checks that individual keys cannot express.
    pub fn validate(&self) -> Result<()> {
        if self.parser == ParserKind::Graph && self.decoder().order() != self.order {
            return Err(Error::Config(format!(
                "decoder {} needs a {}-order model",
                decoder_name(self.decoder()),
                order_name(self.decoder().order())
            )));
        }
        match (self.parser, &self.ablation) {
            (ParserKind::Transition, Some(AblationSpec::Graph(r))) => Err(Error::Config(format!(
                "ablation '{r}' applies to the graph parser only"
            ))),
            (ParserKind::Graph, Some(AblationSpec::Transition(s))) => Err(Error::Config(format!(
                "ablation '{s}' applies to the transition parser only"
            ))),
            _ if self.epochs == 0 => Err(invalid("epochs", "0")),
            _ => Ok(()),
        }
    }

    pub fn transition_config(&self) -> TransitionConfig {
        TransitionConfig {
            encoder: self.encoder.clone(),
            features: self.features.clone(),
            hidden: self.hidden,
            adam: self.adam,
            swap: self.swap,
            ablation: self.ablation,
            ablate_at_parse: self.ablate_at_parse,
        }
    }

    pub fn graph_config(&self) -> GraphConfig {
        GraphConfig {
            encoder: self.encoder.clone(),
            order: self.order,
            decoder: self.decoder(),
            surface: self.surface,
            hidden: self.hidden,
            label_hidden: self.label_hidden,
            dist_dim: self.dist_dim,
            adam: self.adam,
            ablation: self.ablation,
            ablate_at_parse: self.ablate_at_parse,
        }
    }

    /// Canonical text form; `parse(to_text())` gives back the same config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv(
            "parser",
            match self.parser {
                ParserKind::Transition => "transition",
                ParserKind::Graph => "graph",
            }
            .into(),
        );
        kv("features", self.features.to_string());
        kv("order", order_name(self.order).into());
        kv("decoder", self.decoder.map_or("default", decoder_name).into());
        kv(
            "mode",
            match self.encoder.mode {
                EncoderMode::Bilstm => "bilstm",
                EncoderMode::Direct => "direct",
            }
            .into(),
        );
        kv("dist", self.surface.dist.to_string());
        kv("window", self.surface.window.to_string());
        kv("word_dim", self.encoder.word_dim.to_string());
        kv("pos_dim", self.encoder.pos_dim.to_string());
        kv("lstm_dim", self.encoder.lstm_dim.to_string());
        kv("lstm_layers", self.encoder.lstm_layers.to_string());
        kv("hidden", self.hidden.to_string());
        kv("label_hidden", self.label_hidden.to_string());
        kv("dist_dim", self.dist_dim.to_string());
        kv("word_dropout", self.encoder.word_dropout.to_string());
        kv("root_token", self.encoder.root_token.to_string());
        kv("learning_rate", self.adam.learning_rate.to_string());
        kv("beta1", self.adam.beta1.to_string());
        kv("beta2", self.adam.beta2.to_string());
        kv("epsilon", self.adam.epsilon.to_string());
        kv("epochs", self.epochs.to_string());
        kv(
            "seeds",
            self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
        );
        kv(
            "swap",
            match self.swap {
                SwapStrategy::Lazy => "lazy",
                SwapStrategy::Eager => "eager",
            }
            .into(),
        );
        kv("ablation", self.ablation.map_or("none".into(), |a| a.to_string()));
        kv("ablate_at_parse", self.ablate_at_parse.to_string());
        if let Some(p) = &self.train {
            kv("train", p.display().to_string());
        }
        if let Some(p) = &self.dev {
            kv("dev", p.display().to_string());
        }
        out
    }
}
