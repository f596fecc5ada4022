//! Executes an [`ExperimentPlan`]: loads models and images, runs the
//! driver for the plan's kind and writes the report and images.

use std::path::{Path, PathBuf};

use serde::Serialize;

use salattack_core::attack::Mode;

use crate::error::{write, Error, Result};
use crate::experiments::{self, Experiment, ImageCase, NamedModel, Output};
use crate::io::load_tensor;
use crate::manifest::load_model;
use crate::plan::{norm_name, ExperimentKind, ExperimentPlan};
use crate::report;

/// Model id: the manifest file stem.
fn model_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
}

pub fn load_models(plan: &ExperimentPlan) -> Result<Vec<NamedModel>> {
    plan.models
        .iter()
        .map(|p| Ok(NamedModel::new(model_id(p), load_model(p)?)))
        .collect()
}

pub fn load_images(plan: &ExperimentPlan, models: &[NamedModel]) -> Result<Vec<ImageCase>> {
    let first = models.first().ok_or_else(|| Error::Invalid("plan has no models".into()))?;
    let [_, h, w] = first.model.spec.input_shape;
    if let Some(n) = plan.images.synthetic_pairs {
        return Ok(experiments::synthetic_cases(n, &experiments::pair_scene(h, w), plan.seed));
    }
    let set = &plan.images;
    set.originals
        .iter()
        .zip(&set.guides)
        .enumerate()
        .map(|(i, (o, g))| {
            Ok(ImageCase {
                id: model_id(o),
                original: load_tensor(o)?,
                guide: load_tensor(g)?,
                ground_truth: set.ground_truths.get(i).map(|p| load_tensor(p)).transpose()?,
            })
        })
        .collect()
}

/// The attack settings an experiment resolves to at the first model's
/// context layer, written next to the report.
#[derive(Debug, Serialize)]
struct EffectiveConfig {
    kind: &'static str,
    seed: u64,
    models: Vec<String>,
    images: Vec<String>,
    layer: usize,
    loss: String,
    channels: usize,
    alpha: f64,
    gamma: f64,
    epsilon: f64,
    tau1: f64,
    tau2: f64,
    max_iterations: usize,
    normalization: &'static str,
    clip: bool,
}

fn effective_config(plan: &ExperimentPlan, exp: &Experiment) -> Result<String> {
    let model = &exp.models[0];
    let cfg = exp.config(model, Mode::Targeted, model.model.spec.context)?;
    let eff = EffectiveConfig {
        kind: plan.kind.name(),
        seed: plan.seed,
        models: exp.models.iter().map(|m| m.id.clone()).collect(),
        images: exp.images.iter().map(|c| c.id.clone()).collect(),
        layer: cfg.layer,
        loss: cfg.loss.name().into(),
        channels: cfg.channels,
        alpha: cfg.alpha,
        gamma: cfg.gamma,
        epsilon: cfg.epsilon,
        tau1: cfg.tau1,
        tau2: cfg.tau2,
        max_iterations: cfg.max_iterations,
        normalization: norm_name(cfg.normalization),
        clip: cfg.clip,
    };
    toml::to_string(&eff).map_err(|e| Error::Invalid(e.to_string()))
}

/// Runs the driver for the plan's kind on already-loaded inputs.
pub fn run_experiment(plan: &ExperimentPlan, exp: &Experiment) -> Result<Output> {
    let layers = || plan.layers.clone().ok_or_else(|| Error::Invalid("plan needs layers".into()));
    Ok(match plan.kind {
        ExperimentKind::Convergence => experiments::run_convergence(exp, plan.losses.as_deref())?.0,
        ExperimentKind::LayerSweep => experiments::run_layer_sweep(exp, &layers()?)?.0,
        ExperimentKind::RfPerceptibility => experiments::run_rf_perceptibility(exp, &layers()?)?.0,
        ExperimentKind::ChannelSweep => {
            let counts = plan
                .channel_counts
                .clone()
                .ok_or_else(|| Error::Invalid("plan needs channel_counts".into()))?;
            experiments::run_channel_sweep(exp, &counts)?.0
        }
        ExperimentKind::SpoilLayer => experiments::run_spoil_layer(exp)?.0,
        ExperimentKind::Transferability => experiments::run_transferability(exp)?.0,
        ExperimentKind::Countervail => experiments::run_countervail(exp, plan.losses.as_deref())?.0,
        ExperimentKind::PermutationCheck => experiments::run_permutation_check(exp)?.0,
    })
}

/// Loads, runs and writes `report.csv`, `config.toml` and `images/` under
/// the plan's output directory. Returns the report path.
pub fn run_plan(plan: &ExperimentPlan) -> Result<PathBuf> {
    plan.validate()?;
    let models = load_models(plan)?;
    let images = load_images(plan, &models)?;
    let exp = Experiment {
        models: &models,
        images: &images,
        overrides: plan.attack.clone(),
        seed: plan.seed,
    };
    let config = effective_config(plan, &exp)?;
    let out = run_experiment(plan, &exp)?;
    write(&plan.output.join("config.toml"), config.as_bytes())?;
    for (name, bytes) in &out.images {
        write(&plan.output.join("images").join(name), bytes)?;
    }
    let path = plan.output.join("report.csv");
    report::save(&path, &out.rows)?;
    Ok(path)
}
