//! Experiment drivers. Each driver runs attacks over every (model, image)
//! cell it needs, returns report rows plus a typed summary, and collects
//! display images in memory so a run can be written out (or compared)
//! byte for byte.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use salattack_core::attack::{
    attack, image_space_attack, AttackConfig, AttackResult, Mode, NormMode, Selection, WhiteBox,
};
use salattack_core::data::{left_right_pair, SceneParams};
use salattack_core::losses::{LossKind, MixWeights};
use salattack_core::metrics::{self, FixationSet};
use salattack_core::model::{forward_trace, predict, ModelSpec};
use salattack_core::Tensor;

use crate::error::{Error, Result};
use crate::manifest::Model;
use crate::plan::{AttackOverrides, ExperimentKind};
use crate::pnm;
use crate::report::ReportRow;
use crate::stats::{mean, spearman};

/// Side length pair (height, width) every layer is resized to in the
/// spoil-layer analysis.
pub const SPOIL_RESOLUTION: (usize, usize) = (12, 16);
/// Layers whose adversarial channel-mean activation correlates below this
/// with the clean one count as spoiled.
pub const SPOIL_CC: f64 = 0.5;
/// Pseudo-fixations drawn from a prediction for the AUC-type metrics.
pub const FIXATIONS_PER_MAP: usize = 50;

#[derive(Debug, Clone)]
pub struct NamedModel {
    pub id: String,
    pub model: Model,
}

impl NamedModel {
    pub fn new(id: impl Into<String>, model: Model) -> Self {
        NamedModel { id: id.into(), model }
    }

    fn spec(&self) -> &ModelSpec {
        &self.model.spec
    }

    fn predict(&self, image: &Tensor) -> Result<Tensor> {
        Ok(predict(&self.model.spec, &self.model.weights, image)?)
    }
}

/// An original image with its guide and, when known, ground-truth saliency.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageCase {
    pub id: String,
    pub original: Tensor,
    pub guide: Tensor,
    pub ground_truth: Option<Tensor>,
}

/// Scene parameters of generated attack pairs: faint single blobs on a
/// nearly flat shared background.
pub fn pair_scene(height: usize, width: usize) -> SceneParams {
    SceneParams {
        height,
        width,
        ..SceneParams::faint()
    }
}

/// `count` left/right pairs, each from its own cell seed.
pub fn synthetic_cases(count: usize, params: &SceneParams, seed: u64) -> Vec<ImageCase> {
    (0..count)
        .map(|i| {
            let (o, g) = left_right_pair(params, cell_seed(seed, &[0x1a9e, i as u64]));
            ImageCase {
                id: format!("pair{i:02}"),
                original: o.image,
                guide: g.image,
                ground_truth: Some(o.saliency),
            }
        })
        .collect()
}

/// Derives an independent seed for one cell of an experiment.
pub fn cell_seed(master: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

/// Shared inputs of every driver.
#[derive(Debug, Clone)]
pub struct Experiment<'a> {
    pub models: &'a [NamedModel],
    pub images: &'a [ImageCase],
    pub overrides: AttackOverrides,
    pub seed: u64,
}

/// Rows plus display images, keyed by file name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Output {
    pub rows: Vec<ReportRow>,
    pub images: Vec<(String, Vec<u8>)>,
}

impl Output {
    fn push_ppm(&mut self, name: String, image: &Tensor) -> Result<()> {
        self.images.push((format!("{name}.ppm"), pnm::encode_ppm(image)?));
        Ok(())
    }

    fn push_pgm(&mut self, name: String, map: &Tensor) -> Result<()> {
        self.images.push((format!("{name}.pgm"), pnm::encode_pgm(map)?));
        Ok(())
    }

    /// Adversarial example, perturbation (channel mean) and adversarial prediction.
    fn push_attack(&mut self, stem: &str, result: &AttackResult, prediction: &Tensor) -> Result<()> {
        self.push_ppm(format!("{stem}.adversarial"), &result.adversarial)?;
        self.push_pgm(format!("{stem}.perturbation"), &channel_mean(&result.perturbation)?)?;
        self.push_pgm(format!("{stem}.saliency"), prediction)
    }
}

fn channel_mean(t: &Tensor) -> Result<Tensor> {
    let (c, h, w) = t.dims3()?;
    let mut out = vec![0.0; h * w];
    for k in 0..c {
        for (o, v) in out.iter_mut().zip(t.channel(k)) {
            *o += v / c as f64;
        }
    }
    Ok(Tensor::chw(1, h, w, out)?)
}

fn quarter(channels: usize) -> usize {
    (channels / 4).max(1)
}

impl Experiment<'_> {
    fn kind_row(&self, kind: ExperimentKind, model: &str, image: &str, metric: &str, value: f64) -> ReportRow {
        ReportRow::new(kind.name(), model, image, metric, value)
    }

    /// Attack config for `model` at `layer`: the default step parameters,
    /// signed normalization, a quarter of the layer's channels, then the
    /// plan's overrides. Channel overrides are capped at the layer width.
    pub fn config(&self, model: &NamedModel, mode: Mode, layer: usize) -> Result<AttackConfig> {
        let shapes = model.spec().layer_shapes()?;
        let width = shapes
            .get(layer)
            .ok_or_else(|| Error::Invalid(format!("layer {layer} out of range for {}", model.id)))?[0];
        let mut base = AttackConfig::new(mode, layer, quarter(width));
        base.normalization = NormMode::Signed;
        let mut overrides = self.overrides.clone();
        overrides.layer = None;
        let mut cfg = overrides.apply(&base)?;
        cfg.channels = cfg.channels.min(width);
        Ok(cfg)
    }

    fn attack_one(
        &self,
        model: &NamedModel,
        case: &ImageCase,
        cfg: &AttackConfig,
        seed_path: &[u64],
    ) -> Result<AttackResult> {
        let mut cfg = cfg.clone();
        cfg.seed = cell_seed(self.seed, seed_path);
        let Model { spec, weights } = &model.model;
        let oracle = WhiteBox { spec, weights };
        let guide = (cfg.mode == Mode::Targeted).then_some(&case.guide);
        attack(spec, weights, &oracle, &case.original, guide, &cfg).map_err(|e| {
            Error::Invalid(format!(
                "attack on {} / {} at layer {} failed: {e}",
                model.id, case.id, cfg.layer
            ))
        })
    }

    fn image_space(&self, model: &NamedModel, case: &ImageCase, cfg: &AttackConfig, seed_path: &[u64]) -> Result<AttackResult> {
        let mut cfg = cfg.clone();
        cfg.seed = cell_seed(self.seed, seed_path);
        let guide = (cfg.mode == Mode::Targeted).then_some(&case.guide);
        Ok(image_space_attack(&model.model.spec, &model.model.weights, &case.original, guide, &cfg)?)
    }

    fn first_model(&self) -> Result<&NamedModel> {
        self.models.first().ok_or_else(|| Error::Invalid("experiment needs a model".into()))
    }

    fn ground_truth<'c>(&self, case: &'c ImageCase) -> Result<&'c Tensor> {
        case.ground_truth
            .as_ref()
            .ok_or_else(|| Error::Invalid(format!("image {} has no ground-truth map", case.id)))
    }
}

fn resolve_losses(names: Option<&[String]>, default: &[&str]) -> Result<Vec<LossKind>> {
    match names {
        Some(n) => n.iter().map(|s| Ok(LossKind::parse(s)?)).collect(),
        None => default.iter().map(|s| Ok(LossKind::parse(s)?)).collect(),
    }
}

// ---------------------------------------------------------------- convergence

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub model: String,
    pub image: String,
    pub loss: LossKind,
    pub mode: Mode,
    /// Loss read as a metric at every iteration `0..=X`.
    pub values: Vec<f64>,
}

impl Curve {
    /// `|v(20) − v(0)| / |v(X) − v(0)|`; 1 when the curve never moves.
    pub fn early_fraction(&self) -> f64 {
        let first = self.values[0];
        let last = *self.values.last().expect("non-empty curve");
        let at20 = self.values[20.min(self.values.len() - 1)];
        let total = (last - first).abs();
        if total == 0.0 {
            1.0
        } else {
            (at20 - first).abs() / total
        }
    }
}

/// Loss curves for every loss in both modes. The attacks run the full
/// iteration budget (thresholds disabled) so the curves show where each
/// loss converges.
pub fn run_convergence(exp: &Experiment, losses: Option<&[String]>) -> Result<(Output, Vec<Curve>)> {
    let kind = ExperimentKind::Convergence;
    let losses = resolve_losses(losses, &["kl", "cc", "nss", "l1"])?;
    let mut out = Output::default();
    let mut curves = Vec::new();
    for (mi, model) in exp.models.iter().enumerate() {
        for (ii, case) in exp.images.iter().enumerate() {
            for (li, loss) in losses.iter().enumerate() {
                for mode in [Mode::Targeted, Mode::Nontargeted] {
                    let mut cfg = exp.config(model, mode, model.spec().context)?;
                    cfg.loss = *loss;
                    if exp.overrides.max_iterations.is_none() {
                        cfg.max_iterations = 100;
                    }
                    cfg.tau1 = f64::INFINITY;
                    cfg.tau2 = f64::NEG_INFINITY;
                    let r = exp.attack_one(model, case, &cfg, &[1, mi as u64, ii as u64, li as u64, mode as u64])?;
                    let curve = Curve {
                        model: model.id.clone(),
                        image: case.id.clone(),
                        loss: *loss,
                        mode,
                        values: r.log.iter().map(|rec| rec.metric).collect(),
                    };
                    let metric = format!("{}-{}", mode.name(), loss.name());
                    for rec in &r.log {
                        out.rows.push(
                            exp.kind_row(kind, &model.id, &case.id, &metric, rec.metric)
                                .layer(cfg.layer)
                                .loss(loss.name())
                                .channels(cfg.channels)
                                .iterations(rec.iteration),
                        );
                    }
                    out.rows.push(
                        exp.kind_row(kind, &model.id, &case.id, &format!("{metric}-early-fraction"), curve.early_fraction())
                            .layer(cfg.layer)
                            .loss(loss.name())
                            .channels(cfg.channels)
                            .iterations(r.iterations),
                    );
                    curves.push(curve);
                }
            }
        }
    }
    Ok((out, curves))
}

// ---------------------------------------------------------------- layer sweep

#[derive(Debug, Clone, PartialEq)]
pub struct LayerPoint {
    pub layer: usize,
    pub receptive_field: usize,
    pub channels: usize,
    /// Per image: CC between adversarial and guide predictions.
    pub cc: Vec<f64>,
    pub ssim: Vec<f64>,
    pub l2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSweep {
    pub model: String,
    pub points: Vec<LayerPoint>,
}

impl LayerSweep {
    pub fn spearman_depth_cc(&self) -> f64 {
        let depth: Vec<f64> = self.points.iter().map(|p| p.layer as f64).collect();
        let cc: Vec<f64> = self.points.iter().map(|p| mean(&p.cc)).collect();
        spearman(&depth, &cc)
    }

    pub fn spearman_rf_ssim(&self) -> f64 {
        let rf: Vec<f64> = self.points.iter().map(|p| p.receptive_field as f64).collect();
        let ssim: Vec<f64> = self.points.iter().map(|p| mean(&p.ssim)).collect();
        spearman(&rf, &ssim)
    }

    pub fn spearman_rf_l2(&self) -> f64 {
        let rf: Vec<f64> = self.points.iter().map(|p| p.receptive_field as f64).collect();
        let l2: Vec<f64> = self.points.iter().map(|p| mean(&p.l2)).collect();
        spearman(&rf, &l2)
    }
}

fn fixations_of(map: &Tensor, seed: u64) -> Result<FixationSet> {
    Ok(metrics::pseudo_fixations(map, FIXATIONS_PER_MAP, seed)?)
}

fn sweep(exp: &Experiment, layers: &[usize], kind: ExperimentKind) -> Result<(Output, Vec<LayerSweep>)> {
    let mut out = Output::default();
    let mut sweeps = Vec::new();
    for (mi, model) in exp.models.iter().enumerate() {
        let spec = model.spec();
        let guides: Vec<Tensor> = exp.images.iter().map(|c| model.predict(&c.guide)).collect::<Result<_>>()?;
        let fixations: Vec<FixationSet> = guides
            .iter()
            .enumerate()
            .map(|(i, g)| fixations_of(g, cell_seed(exp.seed, &[2, mi as u64, i as u64])))
            .collect::<Result<_>>()?;
        let mut points = Vec::new();
        for &layer in layers {
            let cfg = exp.config(model, Mode::Targeted, layer)?;
            let rf = spec.receptive_field(layer)?.0;
            let mut point = LayerPoint {
                layer,
                receptive_field: rf,
                channels: cfg.channels,
                cc: Vec::new(),
                ssim: Vec::new(),
                l2: Vec::new(),
            };
            for (ii, case) in exp.images.iter().enumerate() {
                let r = exp.attack_one(model, case, &cfg, &[3, mi as u64, layer as u64, ii as u64])?;
                let pred = model.predict(&r.adversarial)?;
                let stats = salattack_core::attack::perturbation_stats(&r)?;
                let others: Vec<FixationSet> = fixations
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != ii)
                    .map(|(_, f)| f.clone())
                    .collect();
                let cc = metrics::cc(&pred, &guides[ii])?;
                let mut values = vec![
                    ("cc", cc),
                    ("sim", metrics::sim(&pred, &guides[ii])?),
                    ("auc-borji", metrics::auc_borji(&pred, &fixations[ii], cell_seed(exp.seed, &[4, ii as u64]))?),
                    ("ssim", stats.ssim),
                    ("l2", stats.l2),
                    ("sparsity", stats.sparsity),
                    ("receptive-field", rf as f64),
                ];
                if !others.is_empty() {
                    values.push((
                        "sauc",
                        metrics::sauc(&pred, &fixations[ii], &others, cell_seed(exp.seed, &[5, ii as u64]))?,
                    ));
                }
                for (name, v) in values {
                    out.rows.push(
                        exp.kind_row(kind, &model.id, &case.id, name, v)
                            .layer(layer)
                            .loss(cfg.loss.name())
                            .channels(cfg.channels)
                            .iterations(r.iterations),
                    );
                }
                out.push_attack(&format!("{}.{}.layer{layer:02}", model.id, case.id), &r, &pred)?;
                point.cc.push(cc);
                point.ssim.push(stats.ssim);
                point.l2.push(stats.l2);
            }
            points.push(point);
        }
        let s = LayerSweep {
            model: model.id.clone(),
            points,
        };
        let summary = match kind {
            ExperimentKind::LayerSweep => vec![("spearman-depth-cc", s.spearman_depth_cc())],
            _ => vec![("spearman-rf-ssim", s.spearman_rf_ssim()), ("spearman-rf-l2", s.spearman_rf_l2())],
        };
        for (name, v) in summary {
            out.rows.push(exp.kind_row(kind, &model.id, "all", name, v));
        }
        sweeps.push(s);
    }
    Ok((out, sweeps))
}

/// Targeted attacks at each listed layer; CC, SIM, sAUC and AUC-Borji
/// against the guide prediction, and the rank correlation of depth with CC.
pub fn run_layer_sweep(exp: &Experiment, layers: &[usize]) -> Result<(Output, Vec<LayerSweep>)> {
    sweep(exp, layers, ExperimentKind::LayerSweep)
}

/// The same attacks as the layer sweep, reported as receptive field
/// against SSIM and L2 of the perturbation.
pub fn run_rf_perceptibility(exp: &Experiment, layers: &[usize]) -> Result<(Output, Vec<LayerSweep>)> {
    sweep(exp, layers, ExperimentKind::RfPerceptibility)
}

// ---------------------------------------------------------------- channel sweep

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPoint {
    pub channels: usize,
    pub cc: Vec<f64>,
}

/// Context-layer targeted attacks with each channel count; a count equal
/// to the layer width selects every channel.
pub fn run_channel_sweep(exp: &Experiment, counts: &[usize]) -> Result<(Output, Vec<ChannelPoint>)> {
    let kind = ExperimentKind::ChannelSweep;
    let model = exp.first_model()?;
    let layer = model.spec().context;
    let width = model.spec().layer_shapes()?[layer][0];
    let mut out = Output::default();
    let mut points = Vec::new();
    for &n in counts {
        if n == 0 || n > width {
            return Err(Error::Invalid(format!("channel count {n} outside 1..={width}")));
        }
        let mut cfg = exp.config(model, Mode::Targeted, layer)?;
        cfg.channels = n;
        cfg.selection = if n == width {
            Selection::All
        } else {
            Selection::UniformStride
        };
        let mut point = ChannelPoint { channels: n, cc: Vec::new() };
        for (ii, case) in exp.images.iter().enumerate() {
            let r = exp.attack_one(model, case, &cfg, &[6, n as u64, ii as u64])?;
            let pred = model.predict(&r.adversarial)?;
            let cc = metrics::cc(&pred, &model.predict(&case.guide)?)?;
            out.rows.push(
                exp.kind_row(kind, &model.id, &case.id, "cc", cc)
                    .layer(layer)
                    .loss(cfg.loss.name())
                    .channels(n)
                    .iterations(r.iterations),
            );
            point.cc.push(cc);
        }
        out.rows.push(
            exp.kind_row(kind, &model.id, "mean", "cc", mean(&point.cc))
                .layer(layer)
                .loss(cfg.loss.name())
                .channels(n),
        );
        points.push(point);
    }
    Ok((out, points))
}

// ---------------------------------------------------------------- spoil layer

#[derive(Debug, Clone, PartialEq)]
pub struct SpoilProfile {
    pub image: String,
    /// `(layer, ssim, cc)` for every layer of the trace.
    pub layers: Vec<(usize, f64, f64)>,
    /// First layer whose CC falls below [`SPOIL_CC`].
    pub spoil_point: Option<usize>,
}

fn resize_nearest(map: &[f64], h: usize, w: usize, (th, tw): (usize, usize)) -> Tensor {
    Tensor::from_fn(&[1, th, tw], |i| {
        let (y, x) = (i / tw, i % tw);
        map[(y * h / th) * w + x * w / tw]
    })
}

fn channel_mean_resized(t: &Tensor) -> Result<Tensor> {
    let m = channel_mean(t)?;
    let (_, h, w) = m.dims3()?;
    Ok(resize_nearest(m.data(), h, w, SPOIL_RESOLUTION))
}

/// Per-layer comparison of clean and adversarial activations for a
/// perturbation `delta` applied to `image`.
pub fn spoil_profile(model: &NamedModel, image_id: &str, image: &Tensor, adversarial: &Tensor) -> Result<SpoilProfile> {
    let Model { spec, weights } = &model.model;
    let clean = forward_trace(spec, weights, image)?;
    let adv = forward_trace(spec, weights, adversarial)?;
    let mut layers = Vec::with_capacity(spec.len());
    for (i, (a, b)) in clean.layers.iter().zip(&adv.layers).enumerate() {
        let (a, b) = (channel_mean_resized(a)?, channel_mean_resized(b)?);
        let (ssim, cc) = if a == b {
            (1.0, 1.0)
        } else {
            (metrics::ssim(&a, &b)?, metrics::cc(&a, &b)?)
        };
        layers.push((i, ssim, cc));
    }
    let spoil_point = layers.iter().find(|l| l.2 < SPOIL_CC).map(|l| l.0);
    Ok(SpoilProfile {
        image: image_id.into(),
        layers,
        spoil_point,
    })
}

/// Context-layer targeted attacks, then where along the network the
/// adversarial activations depart from the clean ones.
pub fn run_spoil_layer(exp: &Experiment) -> Result<(Output, Vec<SpoilProfile>)> {
    let kind = ExperimentKind::SpoilLayer;
    let model = exp.first_model()?;
    let cfg = exp.config(model, Mode::Targeted, model.spec().context)?;
    let mut out = Output::default();
    let mut profiles = Vec::new();
    for (ii, case) in exp.images.iter().enumerate() {
        let r = exp.attack_one(model, case, &cfg, &[7, ii as u64])?;
        let p = spoil_profile(model, &case.id, &case.original, &r.adversarial)?;
        for &(layer, ssim, cc) in &p.layers {
            for (name, v) in [("ssim", ssim), ("cc", cc)] {
                out.rows.push(
                    exp.kind_row(kind, &model.id, &case.id, name, v)
                        .layer(layer)
                        .loss(cfg.loss.name())
                        .channels(cfg.channels)
                        .iterations(r.iterations),
                );
            }
        }
        // -1 marks an attack that spoils no layer
        let point = p.spoil_point.map_or(-1.0, |l| l as f64);
        out.rows.push(
            exp.kind_row(kind, &model.id, &case.id, "spoil-point", point)
                .layer(cfg.layer)
                .loss(cfg.loss.name())
                .channels(cfg.channels)
                .iterations(r.iterations),
        );
        profiles.push(p);
    }
    Ok((out, profiles))
}

// ---------------------------------------------------------------- transferability

/// Mean CC drop (against ground truth) of perturbations from each source
/// model applied to each target model: `drop[source][target]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    pub models: Vec<String>,
    pub drop: Vec<Vec<f64>>,
}

fn gt_drop(model: &NamedModel, original: &Tensor, adversarial: &Tensor, gt: &Tensor) -> Result<f64> {
    Ok(metrics::cc(&model.predict(original)?, gt)? - metrics::cc(&model.predict(adversarial)?, gt)?)
}

pub fn run_transferability(exp: &Experiment) -> Result<(Output, TransferMatrix)> {
    let kind = ExperimentKind::Transferability;
    if exp.models.len() < 2 {
        return Err(Error::Invalid("transferability needs at least two models".into()));
    }
    let shape = exp.models[0].spec().input_shape;
    if let Some(m) = exp.models.iter().find(|m| m.spec().input_shape != shape) {
        return Err(Error::Invalid(format!(
            "model {} expects input {:?}, others {:?}",
            m.id,
            m.spec().input_shape,
            shape
        )));
    }
    let mode = match &exp.overrides.mode {
        Some(m) => crate::plan::parse_mode(m)?,
        None => Mode::Nontargeted,
    };
    let n = exp.models.len();
    let mut sums = vec![vec![0.0; n]; n];
    let mut out = Output::default();
    for (si, source) in exp.models.iter().enumerate() {
        let cfg = exp.config(source, mode, source.spec().context)?;
        for (ii, case) in exp.images.iter().enumerate() {
            let gt = exp.ground_truth(case)?;
            let r = exp.attack_one(source, case, &cfg, &[8, si as u64, ii as u64])?;
            for (ti, target) in exp.models.iter().enumerate() {
                let adversarial = case.original.add(&r.perturbation)?.clamp(0.0, 1.0);
                let d = gt_drop(target, &case.original, &adversarial, gt)?;
                sums[si][ti] += d;
                out.rows.push(
                    exp.kind_row(kind, &format!("{}->{}", source.id, target.id), &case.id, "cc-drop", d)
                        .layer(cfg.layer)
                        .loss(cfg.loss.name())
                        .channels(cfg.channels)
                        .iterations(r.iterations),
                );
            }
        }
    }
    let count = exp.images.len().max(1) as f64;
    let drop: Vec<Vec<f64>> = sums.iter().map(|row| row.iter().map(|s| s / count).collect()).collect();
    for (si, row) in drop.iter().enumerate() {
        for (ti, v) in row.iter().enumerate() {
            out.rows.push(exp.kind_row(
                kind,
                &format!("{}->{}", exp.models[si].id, exp.models[ti].id),
                "mean",
                "cc-drop",
                *v,
            ));
        }
    }
    Ok((
        out,
        TransferMatrix {
            models: exp.models.iter().map(|m| m.id.clone()).collect(),
            drop,
        },
    ))
}

// ---------------------------------------------------------------- countervail

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Image,
    Feature,
}

impl Space {
    pub fn name(&self) -> &'static str {
        match self {
            Space::Image => "image",
            Space::Feature => "feature",
        }
    }
}

/// Residual CC drops after subtracting one attack's perturbation from
/// another's adversarial example, averaged over images.
#[derive(Debug, Clone, PartialEq)]
pub struct CountervailMatrix {
    /// `(loss, space)` of each row (source) and column (target).
    pub attacks: Vec<(LossKind, Space)>,
    /// Mean unmitigated drop of each target.
    pub drop: Vec<f64>,
    /// `residual[source][target]`.
    pub residual: Vec<Vec<f64>>,
    /// Mean clean CC against ground truth.
    pub clean: f64,
}

impl CountervailMatrix {
    /// Mean fraction of the target's drop removed by the source, over
    /// sources in `from` and targets in `to`.
    pub fn block_mitigation(&self, from: Space, to: Space) -> f64 {
        let mut vals = Vec::new();
        for (s, (_, ss)) in self.attacks.iter().enumerate() {
            for (t, (_, ts)) in self.attacks.iter().enumerate() {
                if *ss == from && *ts == to && s != t && self.drop[t] > 0.0 {
                    vals.push((self.drop[t] - self.residual[s][t]) / self.drop[t]);
                }
            }
        }
        mean(&vals)
    }
}

/// Typical magnitude of each basic loss between original and guide stacks,
/// used to balance the Mix loss.
fn typical_magnitudes(model: &NamedModel, layer: usize, cases: &[ImageCase], channels: usize) -> Result<[f64; 4]> {
    let Model { spec, weights } = &model.model;
    let width = spec.layer_shapes()?[layer][0];
    let idx = salattack_core::attack::select_channels(width, channels.min(width), &Selection::UniformStride)?;
    let mut sums = [0.0; 4];
    for case in cases {
        let a = forward_trace(spec, weights, &case.original)?.layers[layer].select_channels(&idx)?;
        let b = forward_trace(spec, weights, &case.guide)?.layers[layer].select_channels(&idx)?;
        for (k, loss) in LossKind::BASIC.iter().enumerate() {
            sums[k] += loss.distance(&a, &b)?.value.abs();
        }
    }
    Ok(sums.map(|s| s / cases.len().max(1) as f64))
}

pub fn run_countervail(exp: &Experiment, losses: Option<&[String]>) -> Result<(Output, CountervailMatrix)> {
    let kind = ExperimentKind::Countervail;
    let model = exp.first_model()?;
    let mode = match &exp.overrides.mode {
        Some(m) => crate::plan::parse_mode(m)?,
        None => Mode::Nontargeted,
    };
    let layer = model.spec().context;
    let base = exp.config(model, mode, layer)?;
    let mut kinds = resolve_losses(losses, &["kl", "cc", "nss", "l1", "mix"])?;
    let mut image_kinds = kinds.clone();
    for (k, ik) in kinds.iter_mut().zip(image_kinds.iter_mut()) {
        if let LossKind::Mix(_) = k {
            *k = LossKind::Mix(MixWeights::balanced(typical_magnitudes(model, layer, exp.images, base.channels)?));
            *ik = LossKind::Mix(MixWeights::balanced(typical_magnitudes(
                model,
                model.spec().output,
                exp.images,
                1,
            )?));
        }
    }
    let mut attacks = Vec::new();
    for space in [Space::Image, Space::Feature] {
        let list = if space == Space::Image { &image_kinds } else { &kinds };
        for l in list {
            attacks.push((*l, space));
        }
    }
    let n = attacks.len();
    let mut drop = vec![0.0; n];
    let mut residual = vec![vec![0.0; n]; n];
    let mut clean_sum = 0.0;
    let mut out = Output::default();
    let label = |(l, s): &(LossKind, Space)| format!("{}-{}", s.name(), l.name());
    for (ii, case) in exp.images.iter().enumerate() {
        let gt = exp.ground_truth(case)?;
        let clean = metrics::cc(&model.predict(&case.original)?, gt)?;
        clean_sum += clean;
        let mut results = Vec::with_capacity(n);
        for (ai, (loss, space)) in attacks.iter().enumerate() {
            let mut cfg = base.clone();
            cfg.loss = *loss;
            let path = [9, ai as u64, ii as u64];
            let r = match space {
                Space::Image => exp.image_space(model, case, &cfg, &path)?,
                Space::Feature => exp.attack_one(model, case, &cfg, &path)?,
            };
            let d = clean - metrics::cc(&model.predict(&r.adversarial)?, gt)?;
            drop[ai] += d;
            out.rows.push(
                exp.kind_row(kind, &model.id, &case.id, &format!("drop:{}", label(&attacks[ai])), d)
                    .layer(if *space == Space::Image { model.spec().output } else { layer })
                    .loss(loss.name())
                    .channels(cfg.channels)
                    .iterations(r.iterations),
            );
            results.push(r);
        }
        for (s, source) in results.iter().enumerate() {
            for (t, target) in results.iter().enumerate() {
                let modified = target.adversarial.sub(&source.perturbation)?.clamp(0.0, 1.0);
                let res = clean - metrics::cc(&model.predict(&modified)?, gt)?;
                residual[s][t] += res;
                out.rows.push(
                    exp.kind_row(
                        kind,
                        &model.id,
                        &case.id,
                        &format!("residual:{}:{}", label(&attacks[s]), label(&attacks[t])),
                        res,
                    )
                    .loss(attacks[s].0.name()),
                );
            }
        }
    }
    let count = exp.images.len().max(1) as f64;
    drop.iter_mut().for_each(|d| *d /= count);
    residual.iter_mut().flatten().for_each(|r| *r /= count);
    let m = CountervailMatrix {
        attacks,
        drop,
        residual,
        clean: clean_sum / count,
    };
    for (from, to) in [
        (Space::Feature, Space::Feature),
        (Space::Feature, Space::Image),
        (Space::Image, Space::Image),
        (Space::Image, Space::Feature),
    ] {
        out.rows.push(exp.kind_row(
            kind,
            &model.id,
            "mean",
            &format!("mitigation:{}:{}", from.name(), to.name()),
            m.block_mitigation(from, to),
        ));
    }
    Ok((out, m))
}

// ---------------------------------------------------------------- permutation check

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Columns,
}

/// Applies one permutation of rows (or columns) to every channel of `delta`.
pub fn permute(delta: &Tensor, axis: Axis, perm: &[usize]) -> Result<Tensor> {
    let (c, h, w) = delta.dims3()?;
    let len = if axis == Axis::Rows { h } else { w };
    if perm.len() != len {
        return Err(Error::Invalid(format!("permutation of length {} for axis of {len}", perm.len())));
    }
    Ok(Tensor::from_fn(&[c, h, w], |i| {
        let (k, y, x) = (i / (h * w), (i / w) % h, i % w);
        let (sy, sx) = match axis {
            Axis::Rows => (perm[y], x),
            Axis::Columns => (y, perm[x]),
        };
        delta.data()[k * h * w + sy * w + sx]
    }))
}

pub fn random_permutation(len: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..len).collect();
    p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationCase {
    pub image: String,
    pub drop: f64,
    pub row_drop: f64,
    pub column_drop: f64,
}

/// `1 − CC(F(clip(I + delta)), F(I))`.
pub fn prediction_drop(model: &NamedModel, image: &Tensor, delta: &Tensor) -> Result<f64> {
    let clean = model.predict(image)?;
    let adv = model.predict(&image.add(delta)?.clamp(0.0, 1.0))?;
    Ok(1.0 - metrics::cc(&adv, &clean)?)
}

/// Attacks each image (targeted unless the plan overrides the mode), then
/// applies seeded row and column permutations to the perturbation and
/// compares the resulting prediction drops.
pub fn run_permutation_check(exp: &Experiment) -> Result<(Output, Vec<PermutationCase>)> {
    let kind = ExperimentKind::PermutationCheck;
    let model = exp.first_model()?;
    let mode = match &exp.overrides.mode {
        Some(m) => crate::plan::parse_mode(m)?,
        None => Mode::Targeted,
    };
    let cfg = exp.config(model, mode, model.spec().context)?;
    let mut out = Output::default();
    let mut cases = Vec::new();
    for (ii, case) in exp.images.iter().enumerate() {
        let r = exp.attack_one(model, case, &cfg, &[10, ii as u64])?;
        let (_, h, w) = r.perturbation.dims3()?;
        let rows = permute(&r.perturbation, Axis::Rows, &random_permutation(h, cell_seed(exp.seed, &[11, ii as u64])))?;
        let cols = permute(
            &r.perturbation,
            Axis::Columns,
            &random_permutation(w, cell_seed(exp.seed, &[12, ii as u64])),
        )?;
        let c = PermutationCase {
            image: case.id.clone(),
            drop: prediction_drop(model, &case.original, &r.perturbation)?,
            row_drop: prediction_drop(model, &case.original, &rows)?,
            column_drop: prediction_drop(model, &case.original, &cols)?,
        };
        for (name, v) in [("drop", c.drop), ("row-permuted-drop", c.row_drop), ("column-permuted-drop", c.column_drop)] {
            out.rows.push(
                exp.kind_row(kind, &model.id, &case.id, name, v)
                    .layer(cfg.layer)
                    .loss(cfg.loss.name())
                    .channels(cfg.channels)
                    .iterations(r.iterations),
            );
        }
        out.push_pgm(format!("{}.{}.perturbation", model.id, case.id), &channel_mean(&r.perturbation)?)?;
        out.push_pgm(format!("{}.{}.row-permuted", model.id, case.id), &channel_mean(&rows)?)?;
        cases.push(c);
    }
    Ok((out, cases))
}
