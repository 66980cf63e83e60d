mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "densadapt", version, about = "Template mesh fitting with vertex density control")]
struct Cli {
    /// Cap on worker threads (overridden by DENSADAPT_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a template mesh to one target.
    Fit(FitArgs),
    /// Fit a corpus, transfer landmarks to the template, and re-fit.
    Register(RegisterArgs),
    /// Transfer corpus landmarks onto the template from existing fits.
    ResampleLandmarks(ResampleArgs),
    /// Symmetric sampled Chamfer distance and normal MSE.
    Eval(EvalArgs),
    /// Finite-difference check of every analytic gradient.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic target mesh.
    MakeSynthetic(SyntheticArgs),
}

/// Template source and optimizer settings shared by `fit` and `register`.
#[derive(Debug, Args)]
struct FitOptions {
    /// Template OBJ; an icosphere is generated when omitted.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Subdivision level of the generated icosphere template.
    #[arg(long, default_value_t = 4)]
    subdivisions: u32,
    /// Diffusion time of the re-parameterization.
    #[arg(long, default_value_t = densadapt::fit::DEFAULT_LAMBDA)]
    lambda: f64,
    /// Adaptation strength m (0 disables density adaptation).
    #[arg(long = "m", default_value_t = densadapt::fit::DEFAULT_STRENGTH)]
    strength: f64,
    /// Iteration count T.
    #[arg(long = "iters", default_value_t = densadapt::fit::DEFAULT_ITERATIONS)]
    iterations: usize,
    /// Diffusion time used to smooth the curvature field.
    #[arg(long, default_value_t = densadapt::fit::DEFAULT_LAMBDA_S)]
    lambda_s: f64,
    #[arg(long, default_value_t = 1e-2)]
    step_size: f64,
    /// `uniform` or `per-coordinate`.
    #[arg(long, default_value = "uniform")]
    second_moment: String,
    /// `none`, `laplacian:<w>` or `bilaplacian:<w>`.
    #[arg(long, default_value = "none")]
    baseline: String,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    options: FitOptions,
    #[arg(long)]
    target: PathBuf,
    /// Template landmark vertices (`i <index>` lines).
    #[arg(long, requires = "target_landmarks")]
    template_landmarks: Option<PathBuf>,
    /// Target landmarks (`i` or `p` lines), paired in order.
    #[arg(long, requires = "template_landmarks")]
    target_landmarks: Option<PathBuf>,
    /// Directory for fitted.obj, metrics.csv and config.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct RegisterArgs {
    #[command(flatten)]
    options: FitOptions,
    /// Corpus manifest: `<target.obj> <landmarks.txt> <output.obj>` per line.
    #[arg(long)]
    manifest: PathBuf,
    /// Stop after the first (landmark-free) fitting stage.
    #[arg(long)]
    skip_landmarks: bool,
    #[arg(long, default_value_t = densadapt::landmarks::DEFAULT_ANCHOR_INDEX)]
    anchor_index: usize,
    #[arg(long, default_value_t = densadapt::landmarks::DEFAULT_ANCHOR_WEIGHT)]
    anchor_weight: f64,
    /// Directory for the resampled landmarks and config.json
    /// (defaults to the manifest's directory).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ResampleArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Template OBJ; an icosphere is generated when omitted.
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    subdivisions: u32,
    #[arg(long, default_value_t = densadapt::landmarks::DEFAULT_ANCHOR_INDEX)]
    anchor_index: usize,
    #[arg(long, default_value_t = densadapt::landmarks::DEFAULT_ANCHOR_WEIGHT)]
    anchor_weight: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    fitted: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long, default_value_t = densadapt::eval::DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = densadapt::eval::DEFAULT_EVAL_SEED)]
    seed: u64,
    /// Per-vertex weights of the fitted mesh, one number per line.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Also write the metrics here as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Vertex counts of the random meshes.
    #[arg(long, value_delimiter = ',', default_value = "50,200")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = densadapt::gradcheck::DEFAULT_STEP)]
    step: f64,
    #[arg(long, default_value_t = densadapt::gradcheck::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Perturb one energy's gradient to exercise the failure path.
    #[arg(long)]
    corrupt: Option<String>,
    /// Print the max error for each of these step sizes as well.
    #[arg(long, value_delimiter = ',')]
    sweep: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SyntheticArgs {
    /// sphere, spiky_star, bumpy_sphere or face_blob.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    subdivisions: Option<u32>,
    /// Spike height relative to the radius (spiky_star).
    #[arg(long)]
    height: Option<f64>,
    /// Spike width (spiky_star).
    #[arg(long)]
    sigma: Option<f64>,
    /// Relative spike-height jitter (spiky_star) or tangential jitter (sphere).
    #[arg(long)]
    jitter: Option<f64>,
    /// Pull toward +z to make the density irregular (sphere).
    #[arg(long)]
    warp: Option<f64>,
    /// Ripple amplitude (bumpy_sphere).
    #[arg(long)]
    amplitude: Option<f64>,
    /// Ripple frequency (bumpy_sphere).
    #[arg(long)]
    frequency: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Landmark output (face_blob only).
    #[arg(long)]
    landmarks_out: Option<PathBuf>,
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, String> {
    match std::env::var("DENSADAPT_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| format!("DENSADAPT_THREADS must be a positive integer, got `{v}`")),
        _ => match flag {
            Some(0) => Err("--threads must be positive".into()),
            other => Ok(other),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let threads = match thread_count(cli.threads) {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not size the thread pool: {e}");
            return ExitCode::from(2);
        }
    }

    let result = match cli.command {
        Command::Fit(a) => commands::fit(a, threads),
        Command::Register(a) => commands::register(a, threads),
        Command::ResampleLandmarks(a) => commands::resample(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::MakeSynthetic(a) => commands::make_synthetic(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 1 } else { 2 })
        }
    }
}
