use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use salattack::core::attack::{attack, perturbation_stats, AttackConfig, Mode, WhiteBox};
use salattack::core::data::{generate_synthetic_dataset, left_right_pair, SceneParams};
use salattack::core::losses::LossKind;
use salattack::core::metrics;
use salattack::core::model::{reference_model, ModelSpec};
use salattack::core::train::{dataset_cc, train_toy, TrainConfig};
use salattack::core::data::Sample;
use salattack::experiments::pair_scene;
use salattack::io::{load_dataset, load_tensor, save_attack, save_dataset};
use salattack::manifest::{load_model, save_model, Model};
use salattack::plan::{parse_norm, parse_termination, ExperimentPlan};
use salattack::{pnm, runner, sft, Error, Result};

/// Feature-space adversarial attacks on saliency models.
#[derive(Parser)]
#[command(name = "salattack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset or attack pairs.
    Dataset(DatasetArgs),
    /// Train a reference toy model and write its manifest.
    Train(TrainArgs),
    /// Run a single attack.
    Attack(AttackArgs),
    /// Run an experiment plan.
    Sweep {
        /// Plan file (TOML).
        plan: PathBuf,
    },
    /// Score a saliency map against a reference map.
    Metrics(MetricsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetKind {
    /// Scenes with one to three blobs, for training.
    Train,
    /// Left-blob originals with right-blob guides over shared backgrounds.
    Pairs,
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long, value_enum, default_value = "train")]
    kind: DatasetKind,
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 48)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write PPM/PGM previews.
    #[arg(long)]
    previews: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Reference architecture: minisal-s or minisal-m.
    #[arg(long, default_value = "minisal-s")]
    model: String,
    /// Dataset directory written by `dataset`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long = "lr", default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 3)]
    seed: u64,
    /// L1 penalty weight on context-layer activations.
    #[arg(long = "context-penalty", default_value_t = 0.0)]
    context_penalty: f64,
    /// Fraction of the dataset held out for the reported CC.
    #[arg(long, default_value_t = 0.1)]
    holdout: f64,
    /// Output directory for the manifest and weights.
    #[arg(long)]
    out: PathBuf,
    /// Manifest file stem; defaults to the architecture name.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct AttackArgs {
    /// Model manifest.
    #[arg(long)]
    model: PathBuf,
    /// Original image (.sft or .ppm).
    #[arg(long)]
    image: PathBuf,
    /// Guide image, required for targeted attacks.
    #[arg(long)]
    guide: Option<PathBuf>,
    #[arg(long, default_value = "targeted")]
    mode: String,
    /// Attacked layer; defaults to the model's context layer.
    #[arg(long)]
    layer: Option<usize>,
    #[arg(long, default_value = "kl")]
    loss: String,
    /// Selected channel count; defaults to a quarter of the layer's channels.
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    tau1: Option<f64>,
    #[arg(long)]
    tau2: Option<f64>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Gradient normalization: literal-minmax or signed.
    #[arg(long = "norm-mode", default_value = "signed")]
    norm_mode: String,
    /// Clip the adversarial example to [0, 1].
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    clip: bool,
    /// Termination metric: cc or sim.
    #[arg(long, default_value = "cc")]
    termination: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the perturbation, adversarial example and log.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Predicted map (.sft or .pgm).
    prediction: PathBuf,
    /// Reference map (.sft or .pgm).
    reference: PathBuf,
    /// Pseudo-fixations drawn from the reference for NSS and AUC.
    #[arg(long, default_value_t = 50)]
    fixations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn dataset(args: DatasetArgs) -> Result<()> {
    let params = SceneParams {
        height: args.height,
        width: args.width,
        ..SceneParams::default()
    };
    let samples: Vec<Sample> = match args.kind {
        DatasetKind::Train => generate_synthetic_dataset(args.count, &params, args.seed),
        DatasetKind::Pairs => {
            let pairs = pair_scene(args.height, args.width);
            let mut out = Vec::with_capacity(2 * args.count);
            for i in 0..args.count {
                let (o, g) = left_right_pair(&pairs, args.seed.wrapping_add(i as u64));
                out.push(o);
                out.push(g);
            }
            out
        }
    };
    let paths = save_dataset(&args.out, &samples, args.previews)?;
    println!("wrote {} samples to {}", paths.len(), args.out.display());
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let data = load_dataset(&args.data)?;
    let [_, h, w] = {
        let s = data[0].0.shape();
        [s[0], s[1], s[2]]
    };
    let spec: ModelSpec = reference_model(&args.model, h, w)?;
    let samples: Vec<Sample> = data
        .into_iter()
        .map(|(image, saliency)| Sample {
            image,
            saliency,
            blobs: Vec::new(),
        })
        .collect();
    if !(0.0..1.0).contains(&args.holdout) {
        return Err(Error::Invalid("holdout must lie in [0, 1)".into()));
    }
    let held = ((samples.len() as f64) * args.holdout).round() as usize;
    let (held_out, training) = samples.split_at(held);
    let cfg = TrainConfig {
        context_penalty: args.context_penalty,
        ..TrainConfig::new(args.epochs, args.learning_rate, args.seed)
    };
    let (weights, report) = train_toy(&spec, training, &cfg)?;
    println!("loss {:.6} -> {:.6}", report.initial_loss, report.final_loss);
    if !held_out.is_empty() {
        println!("held-out cc {:.4}", dataset_cc(&spec, &weights, held_out)?);
    }
    let stem = args.name.unwrap_or_else(|| args.model.to_ascii_lowercase());
    let path = save_model(&args.out, &stem, &Model { spec, weights })?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run_attack(args: AttackArgs) -> Result<()> {
    let Model { spec, weights } = load_model(&args.model)?;
    let mode = salattack::plan::parse_mode(&args.mode)?;
    let layer = args.layer.unwrap_or(spec.context);
    let width = spec
        .layer_shapes()?
        .get(layer)
        .ok_or_else(|| Error::Invalid(format!("layer {layer} out of range")))?[0];
    let mut cfg = AttackConfig::new(mode, layer, args.channels.unwrap_or((width / 4).max(1)));
    cfg.loss = LossKind::parse(&args.loss)?;
    cfg.alpha = args.alpha.unwrap_or(cfg.alpha);
    cfg.gamma = args.gamma.unwrap_or(cfg.gamma);
    cfg.epsilon = args.epsilon.unwrap_or(cfg.epsilon);
    cfg.tau1 = args.tau1.unwrap_or(cfg.tau1);
    cfg.tau2 = args.tau2.unwrap_or(cfg.tau2);
    cfg.max_iterations = args.max_iters.unwrap_or(cfg.max_iterations);
    cfg.normalization = parse_norm(&args.norm_mode)?;
    cfg.clip = args.clip;
    cfg.termination = parse_termination(&args.termination)?;
    cfg.seed = args.seed;
    let original = load_tensor(&args.image)?;
    let guide = args.guide.as_deref().map(load_tensor).transpose()?;
    if mode == Mode::Targeted && guide.is_none() {
        return Err(Error::Invalid("targeted attacks need --guide".into()));
    }
    let oracle = WhiteBox {
        spec: &spec,
        weights: &weights,
    };
    let result = attack(&spec, &weights, &oracle, &original, guide.as_ref(), &cfg)?;
    save_attack(&args.out, &result)?;
    let stats = perturbation_stats(&result)?;
    let last = result.final_record();
    println!(
        "{} after {} iterations: d1 {:.4}, ssim {:.4}, l2 {:.4}, sparsity {:.4}",
        result.termination.name(),
        result.iterations,
        last.d1,
        stats.ssim,
        stats.l2,
        stats.sparsity
    );
    Ok(())
}

fn sweep(plan: PathBuf) -> Result<()> {
    let plan = ExperimentPlan::load(&plan)?;
    let report = runner::run_plan(&plan)?;
    println!("wrote {}", report.display());
    Ok(())
}

fn load_map(path: &PathBuf) -> Result<salattack::core::Tensor> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => pnm::load_pgm(path),
        _ => sft::load(path),
    }
}

fn score(args: MetricsArgs) -> Result<()> {
    let pred = load_map(&args.prediction)?;
    let reference = load_map(&args.reference)?;
    let fix = metrics::pseudo_fixations(&reference, args.fixations, args.seed)?;
    let rows = [
        ("cc", metrics::cc(&pred, &reference)?),
        ("sim", metrics::sim(&pred, &reference)?),
        ("kl", metrics::kl(&pred, &reference)?),
        ("nss", metrics::nss(&pred, &fix)?),
        ("auc-borji", metrics::auc_borji(&pred, &fix, args.seed)?),
        ("ssim", metrics::ssim(&pred, &reference)?),
    ];
    for (name, v) in rows {
        println!("{name},{v}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Dataset(a) => dataset(a),
        Command::Train(a) => train(a),
        Command::Attack(a) => run_attack(a),
        Command::Sweep { plan } => sweep(plan),
        Command::Metrics(a) => score(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
