//! Experiment plans: TOML files naming an experiment kind, the models and
//! images it runs on, attack-config overrides, an output directory and a
//! master seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use salattack_core::attack::{AttackConfig, Mode, NormMode, Selection, TerminationMetric};
use salattack_core::losses::LossKind;

use crate::error::{read, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Convergence,
    LayerSweep,
    RfPerceptibility,
    ChannelSweep,
    SpoilLayer,
    Transferability,
    Countervail,
    PermutationCheck,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::LayerSweep => "layer-sweep",
            ExperimentKind::RfPerceptibility => "rf-perceptibility",
            ExperimentKind::ChannelSweep => "channel-sweep",
            ExperimentKind::SpoilLayer => "spoil-layer",
            ExperimentKind::Transferability => "transferability",
            ExperimentKind::Countervail => "countervail",
            ExperimentKind::PermutationCheck => "permutation-check",
        }
    }
}

/// Where the experiment's images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSet {
    /// Number of generated (original, guide) pairs.
    #[serde(default)]
    pub synthetic_pairs: Option<usize>,
    /// Explicit originals (`.sft` or `.ppm`), relative to the plan file.
    #[serde(default)]
    pub originals: Vec<PathBuf>,
    /// Guides matching `originals` one to one.
    #[serde(default)]
    pub guides: Vec<PathBuf>,
    /// Optional ground-truth maps (`.sft` or `.pgm`) matching `originals`.
    #[serde(default)]
    pub ground_truths: Vec<PathBuf>,
}

/// Optional replacements for the attack defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackOverrides {
    pub mode: Option<String>,
    pub layer: Option<usize>,
    pub loss: Option<String>,
    pub channels: Option<usize>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub max_iterations: Option<usize>,
    pub normalization: Option<String>,
    pub clip: Option<bool>,
    pub termination: Option<String>,
}

pub fn parse_mode(s: &str) -> Result<Mode> {
    match s {
        "targeted" => Ok(Mode::Targeted),
        "nontargeted" => Ok(Mode::Nontargeted),
        _ => Err(Error::Invalid(format!("unknown attack mode {s:?}"))),
    }
}

pub fn parse_norm(s: &str) -> Result<NormMode> {
    match s {
        "literal-minmax" | "minmax" => Ok(NormMode::LiteralMinMax),
        "signed" => Ok(NormMode::Signed),
        _ => Err(Error::Invalid(format!("unknown normalization mode {s:?}"))),
    }
}

pub fn norm_name(n: NormMode) -> &'static str {
    match n {
        NormMode::LiteralMinMax => "literal-minmax",
        NormMode::Signed => "signed",
    }
}

pub fn parse_termination(s: &str) -> Result<TerminationMetric> {
    match s {
        "cc" => Ok(TerminationMetric::Cc),
        "sim" => Ok(TerminationMetric::Sim),
        _ => Err(Error::Invalid(format!("unknown termination metric {s:?}"))),
    }
}

impl AttackOverrides {
    /// Applies the overrides on top of `base`.
    pub fn apply(&self, base: &AttackConfig) -> Result<AttackConfig> {
        let mut cfg = base.clone();
        if let Some(m) = &self.mode {
            cfg.mode = parse_mode(m)?;
        }
        if let Some(l) = self.layer {
            cfg.layer = l;
        }
        if let Some(l) = &self.loss {
            cfg.loss = LossKind::parse(l)?;
        }
        if let Some(n) = self.channels {
            cfg.channels = n;
            cfg.selection = Selection::UniformStride;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.tau1 {
            cfg.tau1 = v;
        }
        if let Some(v) = self.tau2 {
            cfg.tau2 = v;
        }
        if let Some(v) = self.max_iterations {
            cfg.max_iterations = v;
        }
        if let Some(n) = &self.normalization {
            cfg.normalization = parse_norm(n)?;
        }
        if let Some(c) = self.clip {
            cfg.clip = c;
        }
        if let Some(t) = &self.termination {
            cfg.termination = parse_termination(t)?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub kind: ExperimentKind,
    /// Model manifests, relative to the plan file.
    pub models: Vec<PathBuf>,
    pub images: ImageSet,
    #[serde(default)]
    pub attack: AttackOverrides,
    /// Output directory, relative to the plan file.
    pub output: PathBuf,
    pub seed: u64,
    /// Attacked layers (layer-sweep, rf-perceptibility).
    #[serde(default)]
    pub layers: Option<Vec<usize>>,
    /// Channel counts (channel-sweep).
    #[serde(default)]
    pub channel_counts: Option<Vec<usize>>,
    /// Loss names (convergence, countervail).
    #[serde(default)]
    pub losses: Option<Vec<String>>,
}

impl ExperimentPlan {
    /// Parses a plan and resolves its relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut plan: ExperimentPlan = toml::from_str(text).map_err(|e| Error::Toml {
            path: base.to_path_buf(),
            source: e,
        })?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        plan.models.iter_mut().for_each(resolve);
        plan.images.originals.iter_mut().for_each(resolve);
        plan.images.guides.iter_mut().for_each(resolve);
        plan.images.ground_truths.iter_mut().for_each(resolve);
        resolve(&mut plan.output);
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = String::from_utf8(read(path)?).map_err(|_| Error::format(path, "plan is not UTF-8"))?;
        let plan = Self::parse(&text, path.parent().unwrap_or(Path::new("")))?;
        plan.validate()?;
        Ok(plan)
    }

    /// Checks that referenced files exist and that the kind's parameters are present.
    pub fn validate(&self) -> Result<()> {
        let missing = |what: &str| Err(Error::Invalid(format!("{} plan needs {what}", self.kind.name())));
        if self.models.is_empty() {
            return missing("at least one model");
        }
        let images = &self.images;
        for p in self.models.iter().chain(&images.originals).chain(&images.guides).chain(&images.ground_truths) {
            if !p.is_file() {
                return Err(Error::Invalid(format!("referenced file {} does not exist", p.display())));
            }
        }
        let explicit = !self.images.originals.is_empty();
        match (self.images.synthetic_pairs, explicit) {
            (Some(0), _) => return missing("a positive synthetic_pairs count"),
            (Some(_), true) => return Err(Error::Invalid("images: give synthetic_pairs or files, not both".into())),
            (None, false) => return missing("images"),
            _ => {}
        }
        if explicit && self.images.guides.len() != self.images.originals.len() {
            return Err(Error::Invalid("images: guides must match originals one to one".into()));
        }
        if !self.images.ground_truths.is_empty() && self.images.ground_truths.len() != self.images.originals.len() {
            return Err(Error::Invalid("images: ground_truths must match originals one to one".into()));
        }
        match self.kind {
            ExperimentKind::LayerSweep | ExperimentKind::RfPerceptibility if self.layers.is_none() => {
                missing("a layers list")
            }
            ExperimentKind::ChannelSweep if self.channel_counts.is_none() => missing("a channel_counts list"),
            ExperimentKind::Transferability if self.models.len() < 2 => missing("at least two models"),
            _ => Ok(()),
        }
    }
}
