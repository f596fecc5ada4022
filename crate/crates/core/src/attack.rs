//! Sparse feature-space adversarial attacks.
//!
//! A targeted attack pulls `N` uniformly selected channels of layer `i` of
//! the adversarial example towards the same channels of a guide image; a
//! nontargeted attack pushes them away from the original image's own
//! channels. Each iteration backpropagates the feature-space loss through
//! layers `0..=i` only, normalizes the image gradient and takes a fixed step:
//!
//! ```text
//! g_t   = ∂L[F↓ᵢ(Ī_t), F↓ᵢ(ref)] / ∂Ī_t
//! Δ_t   = normalize_γ,ε(g_t)
//! Ī_t+1 = Ī_t ∓ α·Δ_t        (− targeted, + nontargeted)
//! ```
//!
//! The loop stops when the termination metric between the model's
//! predictions on `Ī_t` and on the reference crosses its threshold, or after
//! `max_iterations` steps. Predictions come from a [`SaliencyOracle`]: the
//! attacker only needs to query the model there, not read its weights.
//! Attacking the output layer is the image-space attack.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::layers::{minmax_normalize, signed_normalize};
use crate::losses::{LossKind, LossValue};
use crate::metrics;
use crate::model::{
    backward_full, check_image, forward_trace, forward_until, grad_input_from_layer, predict, ModelSpec,
    ModelWeights, WeightSource,
};
use crate::{Error, Result, Tensor};

pub const DEFAULT_ALPHA: f64 = 2e-3;
pub const DEFAULT_GAMMA: f64 = 0.07;
pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_TAU1: f64 = 0.95;
pub const DEFAULT_TAU2: f64 = 0.30;
pub const DEFAULT_MAX_ITERATIONS: usize = 500;
/// Entries of `|Δ|` below this count as untouched in the sparsity fraction.
pub const SPARSITY_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Targeted,
    Nontargeted,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Targeted => "targeted",
            Mode::Nontargeted => "nontargeted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    /// `{0, s, 2s, …}` with `s = ⌊C/N⌋`.
    UniformStride,
    Explicit(Vec<usize>),
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// `γ·(g − min g)/(max g − min g + ε)`: every step has one sign.
    LiteralMinMax,
    /// `γ·g/(max|g| + ε)`.
    Signed,
}

/// Similarity between saliency predictions used to stop the attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationMetric {
    Cc,
    Sim,
}

impl TerminationMetric {
    pub fn score(&self, a: &Tensor, b: &Tensor) -> Result<f64> {
        match self {
            TerminationMetric::Cc => metrics::cc(a, b),
            TerminationMetric::Sim => metrics::sim(a, b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub mode: Mode,
    pub layer: usize,
    pub loss: LossKind,
    pub channels: usize,
    pub selection: Selection,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Targeted attacks stop once the termination metric reaches `tau1`.
    pub tau1: f64,
    /// Nontargeted attacks stop once the termination metric falls to `tau2`.
    pub tau2: f64,
    pub max_iterations: usize,
    pub normalization: NormMode,
    pub clip: bool,
    pub termination: TerminationMetric,
    /// Seeds the probe that breaks the zero-gradient start of a nontargeted
    /// attack.
    pub seed: u64,
}

/// Default channel count for a layer: 32 from layers of 512 or more
/// channels, `max(1, C/32)` below that.
pub fn default_channels(total: usize) -> usize {
    if total >= 512 {
        32
    } else {
        (total / 32).max(1)
    }
}

impl AttackConfig {
    pub fn new(mode: Mode, layer: usize, channels: usize) -> Self {
        AttackConfig {
            mode,
            layer,
            loss: LossKind::Kl,
            channels,
            selection: Selection::UniformStride,
            alpha: DEFAULT_ALPHA,
            gamma: DEFAULT_GAMMA,
            epsilon: DEFAULT_EPSILON,
            tau1: DEFAULT_TAU1,
            tau2: DEFAULT_TAU2,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            normalization: NormMode::LiteralMinMax,
            clip: true,
            termination: TerminationMetric::Cc,
            seed: 0,
        }
    }

    pub fn validate(&self, layer_channels: usize) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("gamma", self.gamma), ("epsilon", self.epsilon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.selection == Selection::UniformStride && (self.channels == 0 || self.channels > layer_channels) {
            return Err(Error::invalid(format!(
                "channel count {} outside 1..={layer_channels}",
                self.channels
            )));
        }
        Ok(())
    }
}

/// Channel indices of the sparse feature stack.
pub fn select_channels(total: usize, n: usize, selection: &Selection) -> Result<Vec<usize>> {
    match selection {
        Selection::UniformStride => {
            if n == 0 || n > total {
                return Err(Error::invalid(format!("cannot select {n} of {total} channels")));
            }
            let stride = total / n;
            Ok((0..n).map(|k| k * stride).collect())
        }
        Selection::All => Ok((0..total).collect()),
        Selection::Explicit(idx) => {
            if idx.is_empty() {
                return Err(Error::invalid("explicit channel list is empty"));
            }
            if let Some(&bad) = idx.iter().find(|&&i| i >= total) {
                return Err(Error::invalid(format!("channel {bad} out of range for {total}")));
            }
            Ok(idx.clone())
        }
    }
}

/// Black-box access to the model's saliency prediction.
pub trait SaliencyOracle {
    fn predict(&self, image: &Tensor) -> Result<Tensor>;
}

/// Oracle backed by a full model.
pub struct WhiteBox<'a> {
    pub spec: &'a ModelSpec,
    pub weights: &'a ModelWeights,
}

impl SaliencyOracle for WhiteBox<'_> {
    fn predict(&self, image: &Tensor) -> Result<Tensor> {
        predict(self.spec, self.weights, image)
    }
}

impl<F: Fn(&Tensor) -> Result<Tensor>> SaliencyOracle for F {
    fn predict(&self, image: &Tensor) -> Result<Tensor> {
        self(image)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    ThresholdMet,
    MaxIterations,
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::ThresholdMet => "threshold-met",
            Termination::MaxIterations => "max-iterations",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// The optimized distance (KL, 1−CC, NSS gap, L1 or mix).
    pub loss: f64,
    /// The loss read as a metric (KL, CC, NSS, L1 or mix).
    pub metric: f64,
    /// Termination metric between the current and reference predictions.
    pub d1: f64,
    /// `max |Ī_t − I|` per image channel.
    pub max_abs_delta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub original: Tensor,
    pub adversarial: Tensor,
    pub perturbation: Tensor,
    pub iterations: usize,
    pub termination: Termination,
    pub channels: Vec<usize>,
    pub log: Vec<IterationRecord>,
}

impl AttackResult {
    pub fn final_record(&self) -> &IterationRecord {
        self.log.last().expect("an attack logs at least one iteration")
    }
}

fn per_channel_max_abs(delta: &Tensor) -> Vec<f64> {
    match delta.dims3() {
        Ok((c, _, _)) => (0..c)
            .map(|k| delta.channel(k).iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .collect(),
        Err(_) => alloc::vec![delta.max_abs()],
    }
}

/// How the feature stack and its image gradient are obtained.
trait GradientPath {
    /// Activations of the attacked layer for `image`, and a handle for backprop.
    fn features(&self, image: &Tensor, layer: usize) -> Result<(Tensor, crate::model::ActivationTrace)>;
    fn image_grad(&self, trace: &crate::model::ActivationTrace, layer: usize, grad: &Tensor) -> Result<Tensor>;
}

/// Uses only the known layers `0..=i` (partial knowledge).
struct Partial<'a, W: WeightSource> {
    spec: &'a ModelSpec,
    known: &'a W,
}

impl<W: WeightSource> GradientPath for Partial<'_, W> {
    fn features(&self, image: &Tensor, layer: usize) -> Result<(Tensor, crate::model::ActivationTrace)> {
        let trace = forward_until(self.spec, self.known, image, layer)?;
        Ok((trace.layers[layer].clone(), trace))
    }

    fn image_grad(&self, trace: &crate::model::ActivationTrace, layer: usize, grad: &Tensor) -> Result<Tensor> {
        grad_input_from_layer(self.spec, self.known, trace, layer, grad)
    }
}

/// Conventional full forward and backward pass through the whole model.
struct Full<'a> {
    spec: &'a ModelSpec,
    weights: &'a ModelWeights,
}

impl GradientPath for Full<'_> {
    fn features(&self, image: &Tensor, _layer: usize) -> Result<(Tensor, crate::model::ActivationTrace)> {
        let trace = forward_trace(self.spec, self.weights, image)?;
        Ok((trace.output().clone(), trace))
    }

    fn image_grad(&self, trace: &crate::model::ActivationTrace, _layer: usize, grad: &Tensor) -> Result<Tensor> {
        Ok(backward_full(self.spec, self.weights, trace, grad)?.0)
    }
}

fn layer_channels(spec: &ModelSpec, layer: usize) -> Result<usize> {
    if layer > spec.output {
        return Err(Error::LayerOutOfRange {
            index: layer,
            count: spec.len(),
        });
    }
    Ok(spec.layer_shapes()?[layer][0])
}

/// Targeted attack: steer the prediction on `original` towards the
/// prediction on `guide`, using only layers `0..=cfg.layer` of `known`.
pub fn targeted_attack<W: WeightSource, O: SaliencyOracle + ?Sized>(
    spec: &ModelSpec,
    known: &W,
    oracle: &O,
    original: &Tensor,
    guide: &Tensor,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let total = layer_channels(spec, cfg.layer)?;
    let idx = select_channels(total, cfg.channels, &cfg.selection)?;
    run(&Partial { spec, known }, spec, oracle, original, Some(guide), cfg, &idx, &idx)
}

/// Nontargeted attack: push the prediction on `original` away from itself.
pub fn nontargeted_attack<W: WeightSource, O: SaliencyOracle + ?Sized>(
    spec: &ModelSpec,
    known: &W,
    oracle: &O,
    original: &Tensor,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let total = layer_channels(spec, cfg.layer)?;
    let idx = select_channels(total, cfg.channels, &cfg.selection)?;
    run(&Partial { spec, known }, spec, oracle, original, None, cfg, &idx, &idx)
}

/// Dispatches on `cfg.mode`; `guide` is required for targeted attacks.
pub fn attack<W: WeightSource, O: SaliencyOracle + ?Sized>(
    spec: &ModelSpec,
    known: &W,
    oracle: &O,
    original: &Tensor,
    guide: Option<&Tensor>,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    match cfg.mode {
        Mode::Targeted => {
            let guide = guide.ok_or_else(|| Error::invalid("targeted attack needs a guide image"))?;
            targeted_attack(spec, known, oracle, original, guide, cfg)
        }
        Mode::Nontargeted => nontargeted_attack(spec, known, oracle, original, cfg),
    }
}

/// Image-space attack through a conventional full backward pass of the
/// whole model. The loss is computed on the output saliency map; `cfg.layer`
/// and the channel selection are ignored.
pub fn image_space_attack(
    spec: &ModelSpec,
    weights: &ModelWeights,
    original: &Tensor,
    guide: Option<&Tensor>,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let cfg = AttackConfig {
        layer: spec.output,
        channels: 1,
        selection: Selection::All,
        ..cfg.clone()
    };
    if cfg.mode == Mode::Targeted && guide.is_none() {
        return Err(Error::invalid("targeted attack needs a guide image"));
    }
    let guide = if cfg.mode == Mode::Targeted { guide } else { None };
    let oracle = WhiteBox { spec, weights };
    run(&Full { spec, weights }, spec, &oracle, original, guide, &cfg, &[0], &[0])
}

/// Targeted attack whose guide stack uses different channel positions from
/// the adversarial stack. A negative control: mismatched positions are not
/// expected to transfer the guide's saliency.
pub fn mismatched_targeted_attack<W: WeightSource, O: SaliencyOracle + ?Sized>(
    spec: &ModelSpec,
    known: &W,
    oracle: &O,
    original: &Tensor,
    guide: &Tensor,
    cfg: &AttackConfig,
    guide_channels: &[usize],
) -> Result<AttackResult> {
    let total = layer_channels(spec, cfg.layer)?;
    let idx = select_channels(total, cfg.channels, &cfg.selection)?;
    let gidx = select_channels(total, guide_channels.len(), &Selection::Explicit(guide_channels.to_vec()))?;
    if gidx.len() != idx.len() {
        return Err(Error::invalid("guide channel list must match the selected channel count"));
    }
    run(&Partial { spec, known }, spec, oracle, original, Some(guide), cfg, &idx, &gidx)
}

#[allow(clippy::too_many_arguments)]
fn run<P: GradientPath, O: SaliencyOracle + ?Sized>(
    path: &P,
    spec: &ModelSpec,
    oracle: &O,
    original: &Tensor,
    guide: Option<&Tensor>,
    cfg: &AttackConfig,
    adv_idx: &[usize],
    ref_idx: &[usize],
) -> Result<AttackResult> {
    let total = layer_channels(spec, cfg.layer)?;
    cfg.validate(total)?;
    check_image(spec, original)?;
    let targeted = guide.is_some();
    let reference_image = match guide {
        Some(g) => {
            original.same_shape(g, "guide image")?;
            check_image(spec, g)?;
            g
        }
        None => original,
    };
    let normalize = |g: &Tensor| match cfg.normalization {
        NormMode::LiteralMinMax => minmax_normalize(g, cfg.gamma, cfg.epsilon),
        NormMode::Signed => signed_normalize(g, cfg.gamma, cfg.epsilon),
    };

    // The reference stack is computed once and frozen.
    let ref_stack = path.features(reference_image, cfg.layer)?.0.select_channels(ref_idx)?;
    let ref_prediction = oracle.predict(reference_image)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adv = original.clone();
    let mut log = Vec::new();
    let mut t = 0;
    let abort = |t: usize, reason: String| Error::AttackAborted { iteration: t, reason };
    let termination = loop {
        let (features, trace) = path.features(&adv, cfg.layer)?;
        let stack = features.select_channels(adv_idx)?;
        let LossValue { value: loss, grad } = cfg.loss.distance(&stack, &ref_stack)?;
        let metric = if matches!(cfg.loss, LossKind::Cc | LossKind::Nss) {
            cfg.loss.evaluate(&stack, &ref_stack)?.value
        } else {
            loss
        };
        let d1 = cfg.termination.score(&oracle.predict(&adv)?, &ref_prediction)?;
        if !(loss.is_finite() && d1.is_finite()) {
            return Err(abort(t, format!("non-finite loss {loss} or termination metric {d1}")));
        }
        log.push(IterationRecord {
            iteration: t,
            loss,
            metric,
            d1,
            max_abs_delta: per_channel_max_abs(&adv.sub(original)?),
        });
        let met = if targeted { d1 >= cfg.tau1 } else { d1 <= cfg.tau2 };
        if met {
            break Termination::ThresholdMet;
        }
        if t >= cfg.max_iterations {
            break Termination::MaxIterations;
        }

        let raw = if !targeted && t == 0 {
            // The distance to the original has a zero gradient at the
            // original itself; take the first gradient at a tiny seeded
            // probe point instead.
            let radius = cfg.alpha * cfg.gamma;
            let probe = adv.map(|v| (v + rng.gen_range(-radius..=radius)).clamp(0.0, 1.0));
            let (pf, ptrace) = path.features(&probe, cfg.layer)?;
            let pgrad = cfg.loss.distance(&pf.select_channels(adv_idx)?, &ref_stack)?.grad;
            path.image_grad(&ptrace, cfg.layer, &pgrad.scatter_channels(adv_idx, total)?)?
        } else {
            path.image_grad(&trace, cfg.layer, &grad.scatter_channels(adv_idx, total)?)?
        };
        if !raw.all_finite() {
            return Err(abort(t, "non-finite image gradient".into()));
        }
        let step = normalize(&raw)?;
        let sign = if targeted { -1.0 } else { 1.0 };
        let mut next = adv.zip_map(&step, |a, d| a + sign * cfg.alpha * d)?;
        if cfg.clip {
            next = next.clamp(0.0, 1.0);
        }
        adv = next;
        t += 1;
    };

    let perturbation = adv.sub(original)?;
    Ok(AttackResult {
        original: original.clone(),
        adversarial: adv,
        perturbation,
        iterations: t,
        termination,
        channels: adv_idx.to_vec(),
        log,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationStats {
    pub max_abs_per_channel: Vec<f64>,
    pub l2: f64,
    pub ssim: f64,
    /// Fraction of `|Δ|` entries below [`SPARSITY_THRESHOLD`].
    pub sparsity: f64,
}

pub fn perturbation_stats(result: &AttackResult) -> Result<PerturbationStats> {
    perturbation_stats_of(&result.original, &result.adversarial)
}

/// Statistics of `adversarial − original`.
pub fn perturbation_stats_of(original: &Tensor, adversarial: &Tensor) -> Result<PerturbationStats> {
    let delta = adversarial.sub(original)?;
    let quiet = delta.data().iter().filter(|v| v.abs() < SPARSITY_THRESHOLD).count();
    Ok(PerturbationStats {
        max_abs_per_channel: per_channel_max_abs(&delta),
        l2: metrics::l2_perceptibility(&delta),
        ssim: metrics::ssim(original, adversarial)?,
        sparsity: quiet as f64 / delta.len().max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{minisal_s, AccessRecorder, ModelWeights};
    use alloc::vec;

    fn setup() -> (ModelSpec, ModelWeights, Tensor, Tensor) {
        let spec = minisal_s(16, 16);
        let w = ModelWeights::init(&spec, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Tensor::from_fn(&[3, 16, 16], |_| rng.gen_range(0.2..0.8));
        let b = Tensor::from_fn(&[3, 16, 16], |_| rng.gen_range(0.2..0.8));
        (spec, w, a, b)
    }

    #[test]
    fn channel_selection() {
        let s = select_channels(1024, 32, &Selection::UniformStride).unwrap();
        assert_eq!(s.len(), 32);
        assert!(s.iter().enumerate().all(|(k, &i)| i == 32 * k));
        assert_eq!(select_channels(8, 3, &Selection::UniformStride).unwrap(), vec![0, 2, 4]);
        assert_eq!(select_channels(5, 5, &Selection::All).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(select_channels(4, 5, &Selection::UniformStride).is_err());
        assert!(select_channels(4, 1, &Selection::Explicit(vec![4])).is_err());
        assert_eq!(default_channels(1024), 32);
        assert_eq!(default_channels(64), 2);
    }

    #[test]
    fn guide_equal_to_original_is_a_fixed_point() {
        let (spec, w, a, _) = setup();
        let cfg = AttackConfig::new(Mode::Targeted, spec.context, 16);
        let r = targeted_attack(&spec, &w, &WhiteBox { spec: &spec, weights: &w }, &a, &a, &cfg).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.termination, Termination::ThresholdMet);
        assert_eq!(r.log[0].loss, 0.0);
        assert!(r.perturbation.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_bound_and_reconstruction() {
        let (spec, w, a, b) = setup();
        for norm in [NormMode::LiteralMinMax, NormMode::Signed] {
            let mut cfg = AttackConfig::new(Mode::Targeted, spec.context, 8);
            cfg.max_iterations = 5;
            cfg.tau1 = 2.0;
            cfg.normalization = norm;
            let oracle = WhiteBox { spec: &spec, weights: &w };
            let r = targeted_attack(&spec, &w, &oracle, &a, &b, &cfg).unwrap();
            assert_eq!(r.iterations, 5);
            assert_eq!(r.termination, Termination::MaxIterations);
            assert!(r.perturbation.max_abs() <= 5.0 * cfg.alpha * cfg.gamma + 1e-15);
            let recon = a.add(&r.perturbation).unwrap();
            assert!(recon.sub(&r.adversarial).unwrap().max_abs() < 1e-12);
            assert!(r.adversarial.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn nontargeted_zero_iterations_is_identity() {
        let (spec, w, a, _) = setup();
        let mut cfg = AttackConfig::new(Mode::Nontargeted, spec.context, 8);
        cfg.max_iterations = 0;
        let r = nontargeted_attack(&spec, &w, &WhiteBox { spec: &spec, weights: &w }, &a, &cfg).unwrap();
        assert_eq!(r.adversarial, a);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn partial_knowledge_never_reads_later_layers() {
        let (spec, w, a, b) = setup();
        let rec = AccessRecorder::new(&w);
        let mut cfg = AttackConfig::new(Mode::Targeted, 4, 8);
        cfg.max_iterations = 3;
        let oracle = WhiteBox { spec: &spec, weights: &w };
        targeted_attack(&spec, &rec, &oracle, &a, &b, &cfg).unwrap();
        assert_eq!(rec.touched(), vec![0, 3]);
    }

    #[test]
    fn output_layer_attack_matches_image_space_path() {
        let (spec, w, a, b) = setup();
        let mut cfg = AttackConfig::new(Mode::Targeted, spec.output, 1);
        cfg.max_iterations = 4;
        let oracle = WhiteBox { spec: &spec, weights: &w };
        let partial = targeted_attack(&spec, &w, &oracle, &a, &b, &cfg).unwrap();
        let full = image_space_attack(&spec, &w, &a, Some(&b), &cfg).unwrap();
        assert_eq!(partial, full);
    }

    #[test]
    fn deterministic() {
        let (spec, w, a, _) = setup();
        let mut cfg = AttackConfig::new(Mode::Nontargeted, spec.context, 8);
        cfg.max_iterations = 3;
        cfg.seed = 11;
        let oracle = WhiteBox { spec: &spec, weights: &w };
        let r1 = nontargeted_attack(&spec, &w, &oracle, &a, &cfg).unwrap();
        let r2 = nontargeted_attack(&spec, &w, &oracle, &a, &cfg).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn stats_of_zero_and_single_pixel() {
        let a = Tensor::filled(&[3, 64, 48], 0.5);
        let s = perturbation_stats_of(&a, &a).unwrap();
        assert_eq!((s.l2, s.ssim, s.sparsity), (0.0, 1.0, 1.0));
        let mut b = a.clone();
        b.data_mut()[100] += 0.05;
        let s = perturbation_stats_of(&a, &b).unwrap();
        assert!((s.l2 - 0.05).abs() < 1e-12);
        assert!((s.sparsity - (1.0 - 1.0 / 9216.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let (spec, w, a, b) = setup();
        let oracle = WhiteBox { spec: &spec, weights: &w };
        let mut cfg = AttackConfig::new(Mode::Targeted, spec.context, 65);
        assert!(targeted_attack(&spec, &w, &oracle, &a, &b, &cfg).is_err());
        cfg.channels = 4;
        cfg.alpha = 0.0;
        assert!(targeted_attack(&spec, &w, &oracle, &a, &b, &cfg).is_err());
        cfg.alpha = 1e-3;
        cfg.layer = 99;
        assert!(targeted_attack(&spec, &w, &oracle, &a, &b, &cfg).is_err());
    }
}
