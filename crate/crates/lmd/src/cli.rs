//! Command-line front end: train -> decompose -> analyze -> capacity, all
//! deterministic per seed. Exit codes: 0 success, 1 runtime failure, 2
//! usage error; partial artifacts are removed on failure.

use crate::error::Error;
use crate::factor::{
    estimate_latent_dim, factorize_graph, factorize_trivial, layer_report, AnalysisConfig,
    FactorMode, GraphModeConfig, LMDFactorization,
};
use crate::graph::{build_full_graph, build_knn_graph, Bandwidth, DataSet, EmbeddingPolicy};
use crate::io::{
    emit_report, load_dataset, load_model, save_model, EmitForm, Provenance, ReportBundle,
    ReportKind,
};
use crate::linalg::svd;
use crate::mlp::{
    encoding_check, loss_and_gradient, train, Activation, ConvergenceCertificate,
    EncodingCheckParams, FinalActivation, Loss, MLPModel, TrainConfig,
};
use crate::uhn::{capacity_sweep, lmd_uhn_correspondence, Separation, Similarity, UHNConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::{Path, PathBuf};

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "lmd", disable_help_subcommand = true)]
pub struct Cli {
    /// RNG seed echoed into report provenance.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Output directory for report artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Report artifact format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ActivationArg {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FinalArg {
    Linear,
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Trivial,
    Graph,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an MLP on a CSV dataset and save the model container.
    Train(TrainArgs),
    /// Factorize every layer of a saved model.
    Decompose(DecomposeArgs),
    /// Layer spectra plus the encoding check for a model/dataset pair.
    Analyze(AnalyzeArgs),
    /// Associative-memory retrieval-rate sweep.
    Capacity(CapacityArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated layer widths, e.g. 2,8,1.
    #[arg(long)]
    widths: String,
    #[arg(long, value_enum, default_value_t = ActivationArg::Tanh)]
    activation: ActivationArg,
    #[arg(long = "final", value_enum, default_value_t = FinalArg::Linear)]
    final_activation: FinalArg,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 20_000)]
    epochs: usize,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, default_value_t = 1.0e-4)]
    grad_tol: f64,
    /// Output path of the model container.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Latent dimension: a positive integer or `auto`.
    #[arg(long, default_value = "auto")]
    nprime: String,
    /// Spectral-energy fraction used by `--nprime auto`.
    #[arg(long, default_value_t = 0.95)]
    energy: f64,
    /// Dataset CSV; required in graph mode.
    #[arg(long)]
    data: Option<PathBuf>,
    /// kNN parameter of the latent graph.
    #[arg(long)]
    knn: Option<usize>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Analyze even if the model does not pass the convergence check.
    #[arg(long)]
    force: bool,
    /// Perturbation radius grid step used by the encoding check.
    #[arg(long, default_value_t = 1.0e-2)]
    delta: f64,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Also run graph-mode factorization per layer.
    #[arg(long)]
    graph_mode: bool,
}

#[derive(Debug, Args)]
struct CapacityArgs {
    #[arg(long)]
    dim: usize,
    /// Comma-separated stored-pattern counts, e.g. 4,8,16.
    #[arg(long)]
    stored: String,
    #[arg(long)]
    corruption: f64,
    /// dot | euclidean | manhattan
    #[arg(long)]
    sim: String,
    /// identity | poly:N | softmax:BETA | threshold:THETA
    #[arg(long)]
    sep: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::ShapeMismatch { .. } => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// Tracks written artifacts so a failing run leaves nothing behind.
struct ArtifactSink {
    out_dir: PathBuf,
    format: Format,
    written: Vec<PathBuf>,
}

impl ArtifactSink {
    fn new(out_dir: &Path, format: Format) -> Result<Self, CliError> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            format,
            written: Vec::new(),
        })
    }

    fn form(&self) -> EmitForm {
        match self.format {
            Format::Json => EmitForm::Json,
            Format::Csv => EmitForm::Csv,
        }
    }

    fn ext(&self) -> &'static str {
        match self.format {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }

    fn emit(&mut self, bundle: &ReportBundle, stem: &str) -> Result<PathBuf, CliError> {
        let path = self.out_dir.join(format!("{stem}.{}", self.ext()));
        emit_report(bundle, &path, self.form()).map_err(CliError::from)?;
        self.written.push(path.clone());
        Ok(path)
    }

    fn emit_json(&mut self, bundle: &ReportBundle, stem: &str) -> Result<PathBuf, CliError> {
        let path = self.out_dir.join(format!("{stem}.json"));
        emit_report(bundle, &path, EmitForm::Json).map_err(CliError::from)?;
        self.written.push(path.clone());
        Ok(path)
    }

    fn track(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    fn cleanup(&self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // clap renders help/version on stdout with code 0, errors on
            // stderr with code 2
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut sink = match ArtifactSink::new(&cli.out, cli.format) {
        Ok(s) => s,
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            return 1;
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let result = match &cli.command {
        Command::Train(args) => cmd_train(&cli, args, &mut sink),
        Command::Decompose(args) => cmd_decompose(&cli, args, &mut sink),
        Command::Analyze(args) => cmd_analyze(&cli, args, &mut sink),
        Command::Capacity(args) => cmd_capacity(&cli, args, &mut sink),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            sink.cleanup();
            eprintln!("usage error: {msg}");
            2
        }
        Err(CliError::Runtime(msg)) => {
            sink.cleanup();
            eprintln!("error: {msg}");
            1
        }
    }
}

fn parse_counts(text: &str, what: &str) -> Result<Vec<usize>, CliError> {
    let counts: Result<Vec<usize>, _> = text.split(',').map(|t| t.trim().parse()).collect();
    match counts {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(CliError::Usage(format!(
            "{what} must be a comma-separated list of positive integers, got {text:?}"
        ))),
    }
}

fn parse_similarity(text: &str) -> Result<Similarity, CliError> {
    match text.to_ascii_lowercase().as_str() {
        "dot" => Ok(Similarity::Dot),
        "euclidean" | "neg_euclidean" => Ok(Similarity::NegEuclidean),
        "manhattan" | "neg_manhattan" => Ok(Similarity::NegManhattan),
        other => Err(CliError::Usage(format!(
            "unknown similarity {other:?}; expected dot, euclidean or manhattan"
        ))),
    }
}

fn parse_separation(text: &str) -> Result<Separation, CliError> {
    let lower = text.to_ascii_lowercase();
    let (name, param) = match lower.split_once(':') {
        Some((n, p)) => (n, Some(p)),
        None => (lower.as_str(), None),
    };
    let sep = match (name, param) {
        ("identity", None) => Separation::Identity,
        ("poly", Some(p)) => Separation::Poly(p.parse().map_err(|_| {
            CliError::Usage(format!("poly degree must be an integer, got {p:?}"))
        })?),
        ("softmax", Some(p)) => Separation::Softmax(p.parse().map_err(|_| {
            CliError::Usage(format!("softmax beta must be a number, got {p:?}"))
        })?),
        ("threshold", Some(p)) => Separation::ThresholdLinear(p.parse().map_err(|_| {
            CliError::Usage(format!("threshold theta must be a number, got {p:?}"))
        })?),
        _ => {
            return Err(CliError::Usage(format!(
                "unknown separation {text:?}; expected identity, poly:N, softmax:BETA or threshold:THETA"
            )))
        }
    };
    sep.validate().map_err(CliError::from)?;
    Ok(sep)
}

fn provenance(seed: u64, config: serde_json::Value) -> Provenance {
    Provenance {
        seed,
        config,
        tool_version: TOOL_VERSION.to_string(),
    }
}

fn bundle<T: Serialize>(
    kind: ReportKind,
    payload: &T,
    seed: u64,
    config: serde_json::Value,
) -> Result<ReportBundle, CliError> {
    ReportBundle::new(kind, payload, provenance(seed, config)).map_err(CliError::from)
}

fn cmd_train(cli: &Cli, args: &TrainArgs, sink: &mut ArtifactSink) -> Result<(), CliError> {
    let widths = parse_counts(&args.widths, "--widths")?;
    if widths.len() < 2 || widths.contains(&0) {
        return Err(CliError::Usage(format!(
            "--widths needs at least two positive layer widths, got {:?}",
            args.widths
        )));
    }
    let data = load_dataset(&args.data).map_err(CliError::from)?;
    let activation = match args.activation {
        ActivationArg::Relu => Activation::Relu,
        ActivationArg::Tanh => Activation::Tanh,
    };
    let final_activation = match args.final_activation {
        FinalArg::Linear => FinalActivation::Linear,
        FinalArg::Same => FinalActivation::Same,
    };
    let mut model = MLPModel::init(&widths, activation, final_activation, cli.seed)
        .map_err(CliError::from)?;
    let cfg = TrainConfig {
        learning_rate: args.lr,
        max_epochs: args.epochs,
        batch: args.batch.unwrap_or(usize::MAX),
        seed: cli.seed,
        grad_tol: args.grad_tol,
        loss: Loss::Mse,
    };
    let cert = train(&mut model, &data, &cfg).map_err(CliError::from)?;
    save_model(&model, &args.model).map_err(CliError::from)?;
    sink.track(args.model.clone());
    println!(
        "trained {} epochs, final loss {:.6e}, grad norm {:.6e}, stable={} -> {}",
        cert.epochs_used,
        cert.final_loss,
        cert.grad_norm,
        cert.stable,
        args.model.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct DecomposeLayerRecord {
    layer_index: usize,
    input_dim: usize,
    output_dim: usize,
    mode: FactorMode,
    n_prime: usize,
    singular_values: Vec<f64>,
    s_prime: Vec<f64>,
    trivial_residuals: Vec<f64>,
    residual_to_w: f64,
    residual_eq4: f64,
    rank_deficient_fit: bool,
}

fn factorize_layer(
    w: &crate::linalg::Matrix,
    mode: ModeArg,
    n_prime: usize,
    data: Option<&DataSet>,
    layer_input: Option<&crate::linalg::Matrix>,
    layer_output: Option<&crate::linalg::Matrix>,
    knn: Option<usize>,
) -> Result<LMDFactorization, CliError> {
    match mode {
        ModeArg::Trivial => factorize_trivial(w, n_prime).map_err(CliError::from),
        ModeArg::Graph => {
            let data = data.ok_or_else(|| {
                CliError::Usage("graph mode requires --data".into())
            })?;
            let input = layer_input.expect("layer activations computed for graph mode");
            let output = layer_output.expect("layer activations computed for graph mode");
            let p = data.len();
            let in_graph = build_full_graph(&DataSet::new(input.clone(), None)?, Bandwidth::Auto)?;
            let out_graph =
                build_full_graph(&DataSet::new(output.clone(), None)?, Bandwidth::Auto)?;
            let latent_points =
                DataSet::new(input.clone(), data.targets.clone())?.joined();
            let k = knn.unwrap_or_else(|| 10.min(p.saturating_sub(1)).max(1));
            let latent_graph =
                build_knn_graph(&DataSet::new(latent_points, None)?, k, Bandwidth::Auto)?;
            factorize_graph(
                w,
                &in_graph,
                &out_graph,
                &latent_graph,
                n_prime,
                EmbeddingPolicy::SmallestNonzero,
            )
            .map_err(CliError::from)
        }
    }
}

fn cmd_decompose(cli: &Cli, args: &DecomposeArgs, sink: &mut ArtifactSink) -> Result<(), CliError> {
    if !(args.energy > 0.0 && args.energy <= 1.0) {
        return Err(CliError::Usage(format!(
            "--energy must be in (0, 1], got {}",
            args.energy
        )));
    }
    let model = load_model(&args.model).map_err(CliError::from)?;
    let data = match &args.data {
        Some(p) => Some(load_dataset(p).map_err(CliError::from)?),
        None => None,
    };
    if matches!(args.mode, ModeArg::Graph) && data.is_none() {
        return Err(CliError::Usage("graph mode requires --data".into()));
    }
    let explicit_nprime = match args.nprime.as_str() {
        "auto" => None,
        other => Some(other.parse::<usize>().map_err(|_| {
            CliError::Usage(format!("--nprime must be `auto` or a positive integer, got {other:?}"))
        })?),
    };

    let activations = match &data {
        Some(d) => Some(
            model
                .layer_inputs(d)
                .map_err(CliError::from)?,
        ),
        None => None,
    };

    let mut records = Vec::new();
    let mut correspondences = Vec::new();
    for (l, stored) in model.layers.iter().enumerate() {
        let w = stored.transpose();
        let f = svd(&w).map_err(CliError::from)?;
        let kmax = w.rows().min(w.cols());
        let n_prime = match explicit_nprime {
            Some(k) => {
                if k == 0 || k > kmax {
                    return Err(CliError::Usage(format!(
                        "--nprime {k} out of range 1..={kmax} for layer {l} ({}x{})",
                        w.rows(),
                        w.cols()
                    )));
                }
                k
            }
            None => estimate_latent_dim(&f.s, args.energy).map_err(CliError::from)?,
        };
        let mut trivial_residuals = Vec::with_capacity(kmax);
        for k in 1..=kmax {
            trivial_residuals.push(factorize_trivial(&w, k).map_err(CliError::from)?.residual_to_w);
        }
        let layer_input = activations.as_ref().map(|a| &a[l]);
        let layer_output = match &data {
            Some(d) => Some(model.layer_outputs(d, l).map_err(CliError::from)?),
            None => None,
        };
        let fact = factorize_layer(
            &w,
            args.mode,
            n_prime,
            data.as_ref(),
            layer_input,
            layer_output.as_ref(),
            args.knn,
        )?;
        correspondences.push(lmd_uhn_correspondence(&fact).map_err(CliError::from)?);
        records.push(DecomposeLayerRecord {
            layer_index: l,
            input_dim: w.cols(),
            output_dim: w.rows(),
            mode: fact.mode,
            n_prime,
            singular_values: f.s.clone(),
            s_prime: fact.s_prime_diag(),
            trivial_residuals,
            residual_to_w: fact.residual_to_w,
            residual_eq4: fact.residual_eq4,
            rank_deficient_fit: fact.rank_deficient_fit,
        });
    }

    let config = serde_json::json!({
        "command": "decompose",
        "model": args.model.display().to_string(),
        "mode": format!("{:?}", args.mode).to_lowercase(),
        "nprime": args.nprime,
        "energy": args.energy,
        "knn": args.knn,
        "embedding_policy": "smallest_nonzero",
    });
    let layer_bundle = bundle(ReportKind::Layer, &records, cli.seed, config.clone())?;
    let path = sink.emit(&layer_bundle, "layers")?;
    let corr_bundle = bundle(ReportKind::Correspondence, &correspondences, cli.seed, config)?;
    let corr_path = sink.emit_json(&corr_bundle, "correspondence")?;
    println!(
        "decomposed {} layers -> {}, {}",
        records.len(),
        path.display(),
        corr_path.display()
    );
    Ok(())
}

/// Post-hoc convergence check: evaluate the full-batch gradient on the
/// given data and certify against the default tolerance.
fn evaluate_certificate(model: &MLPModel, data: &DataSet) -> Result<ConvergenceCertificate, CliError> {
    let (loss, grads) = loss_and_gradient(model, data).map_err(CliError::from)?;
    let gnorm = grads
        .iter()
        .map(|g| {
            let n = g.frobenius_norm();
            n * n
        })
        .sum::<f64>()
        .sqrt();
    let tol = 1.0e-4 * (1.0 + loss);
    Ok(ConvergenceCertificate {
        final_loss: loss,
        grad_norm: gnorm,
        grad_tol_effective: tol,
        epochs_used: 0,
        stable: gnorm <= tol,
        stability_constant_estimate: f64::MIN_POSITIVE,
    })
}

fn cmd_analyze(cli: &Cli, args: &AnalyzeArgs, sink: &mut ArtifactSink) -> Result<(), CliError> {
    let model = load_model(&args.model).map_err(CliError::from)?;
    let data = load_dataset(&args.data).map_err(CliError::from)?;
    let cert = evaluate_certificate(&model, &data)?;
    if !cert.stable && !args.force {
        return Err(CliError::Runtime(format!(
            "model is not converged on this data (grad norm {:.3e} > {:.3e}); rerun with --force",
            cert.grad_norm, cert.grad_tol_effective
        )));
    }
    let config = AnalysisConfig {
        graph: if args.graph_mode {
            Some(GraphModeConfig {
                knn_k: None,
                n_prime: None,
            })
        } else {
            None
        },
        force: args.force,
        ..AnalysisConfig::default()
    };
    let records = layer_report(&model, Some(&cert), &data, &config).map_err(CliError::from)?;
    let params = EncodingCheckParams {
        delta: args.delta,
        trials: args.trials,
        seed: cli.seed,
        force: args.force,
        ..EncodingCheckParams::default()
    };
    let encoding = encoding_check(&model, Some(&cert), &data, &params).map_err(CliError::from)?;

    let config_echo = serde_json::json!({
        "command": "analyze",
        "model": args.model.display().to_string(),
        "data": args.data.display().to_string(),
        "force": args.force,
        "delta": args.delta,
        "trials": args.trials,
        "graph_mode": args.graph_mode,
        "energy_levels": config.energy_levels,
        "embedding_policy": "smallest_nonzero",
    });
    let layer_bundle = bundle(ReportKind::Layer, &records, cli.seed, config_echo.clone())?;
    let layers_path = sink.emit(&layer_bundle, "layers")?;
    let enc_bundle = bundle(ReportKind::Encoding, &encoding, cli.seed, config_echo)?;
    let enc_path = sink.emit(&enc_bundle, "encoding")?;
    println!(
        "analyzed {} layers -> {}; encoding epsilon_train {:.4e} -> {}",
        records.len(),
        layers_path.display(),
        encoding.epsilon_train,
        enc_path.display()
    );
    Ok(())
}

fn cmd_capacity(cli: &Cli, args: &CapacityArgs, sink: &mut ArtifactSink) -> Result<(), CliError> {
    let stored = parse_counts(&args.stored, "--stored")?;
    let cfg = UHNConfig {
        similarity: parse_similarity(&args.sim)?,
        separation: parse_separation(&args.sep)?,
    };
    let report = capacity_sweep(
        args.dim,
        &stored,
        args.corruption,
        &cfg,
        args.trials,
        cli.seed,
    )
    .map_err(CliError::from)?;
    let config = serde_json::json!({
        "command": "capacity",
        "dim": args.dim,
        "stored": stored,
        "corruption": args.corruption,
        "sim": args.sim,
        "sep": args.sep,
        "trials": args.trials,
    });
    let b = bundle(ReportKind::Capacity, &report, cli.seed, config)?;
    let path = sink.emit(&b, "capacity")?;
    println!("capacity sweep -> {}", path.display());
    Ok(())
}
