use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use densadapt::eval::{evaluate, load_weights, EvalConfig};
use densadapt::fit::{metrics_csv, LandmarkConstraint};
use densadapt::gradcheck::{run_gradcheck, step_sweep, Energy, GradcheckConfig, Problem};
use densadapt::landmarks::{landmark_indices, landmark_positions, load_landmarks, write_point_landmarks, write_resampled};
use densadapt::pipeline::{load_targets, register as run_register, resample_from_manifest, write_registration, Manifest, RegisterConfig};
use densadapt::synthetic::{
    bumpy_sphere, face_blob, sphere, spiky_star, BumpySphereParams, FaceBlobParams, SphereParams, SpikyStarParams,
    SyntheticKind,
};
use densadapt::{fit as run_fit, icosphere, load_obj, save_obj, BaselineMode, Error, FitConfig, Result, SecondMoment, TriMesh};
use serde::Serialize;

use crate::{EvalArgs, FitArgs, FitOptions, GradcheckArgs, RegisterArgs, ResampleArgs, SyntheticArgs};

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), message: e.to_string() })?;
    }
    fs::write(path, contents).map_err(|e| Error::Io { path: path.to_path_buf(), message: e.to_string() })
}

fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("config types serialize");
    s.push('\n');
    s
}

fn template(path: &Option<PathBuf>, subdivisions: u32) -> Result<TriMesh> {
    match path {
        Some(p) => load_obj(p),
        None => icosphere(subdivisions, 1.0),
    }
}

fn fit_config(o: &FitOptions) -> Result<FitConfig> {
    let second_moment = match o.second_moment.as_str() {
        "uniform" => SecondMoment::Uniform,
        "per-coordinate" => SecondMoment::PerCoordinate,
        other => {
            return Err(Error::Config(format!(
                "unknown second moment `{other}` (expected uniform or per-coordinate)"
            )))
        }
    };
    let mut config = FitConfig {
        lambda: o.lambda,
        iterations: o.iterations,
        strength: o.strength,
        lambda_s: o.lambda_s,
        baseline: o.baseline.parse::<BaselineMode>()?,
        ..FitConfig::default()
    };
    config.step.step_size = o.step_size;
    config.step.second_moment = second_moment;
    config.validate()?;
    Ok(config)
}

#[derive(Serialize)]
struct TemplateEcho {
    path: Option<PathBuf>,
    subdivisions: Option<u32>,
}

impl TemplateEcho {
    fn new(o: &FitOptions) -> Self {
        Self {
            path: o.template.clone(),
            subdivisions: o.template.is_none().then_some(o.subdivisions),
        }
    }
}

#[derive(Serialize)]
struct FitEcho<'a> {
    command: &'static str,
    template: TemplateEcho,
    target: &'a Path,
    template_landmarks: Option<&'a Path>,
    target_landmarks: Option<&'a Path>,
    fit: &'a FitConfig,
    threads: Option<usize>,
}

pub fn fit(args: FitArgs, threads: Option<usize>) -> Result<ExitCode> {
    let mut config = fit_config(&args.options)?;
    let template = template(&args.options.template, args.options.subdivisions)?;
    let target = load_obj(&args.target)?;
    if let (Some(tl), Some(gl)) = (&args.template_landmarks, &args.target_landmarks) {
        config.landmarks = Some(LandmarkConstraint {
            template_indices: landmark_indices(&load_landmarks(tl)?)?,
            target_points: landmark_positions(&load_landmarks(gl)?, Some(&target))?,
        });
    }
    let echo = FitEcho {
        command: "fit",
        template: TemplateEcho::new(&args.options),
        target: &args.target,
        template_landmarks: args.template_landmarks.as_deref(),
        target_landmarks: args.target_landmarks.as_deref(),
        fit: &config,
        threads,
    };
    write(&args.out_dir.join("config.json"), &to_json(&echo))?;

    let result = run_fit(&template, &target, &config)?;
    save_obj(&result.mesh, args.out_dir.join("fitted.obj"))?;
    write(&args.out_dir.join("metrics.csv"), &metrics_csv(&result.trace))?;
    if let Some(last) = result.trace.last() {
        println!(
            "fitted {} vertices in {} iterations: D_c {:.6e}, D_n {:.6e}, edge CV {:.4}",
            result.mesh.num_vertices(),
            result.trace.len(),
            last.d_c,
            last.d_n,
            last.edge_len_cv
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct RegisterEcho<'a> {
    command: &'static str,
    template: TemplateEcho,
    manifest: &'a Path,
    landmarks_out: &'a Path,
    register: &'a RegisterConfig,
    threads: Option<usize>,
}

pub fn register(args: RegisterArgs, threads: Option<usize>) -> Result<ExitCode> {
    let config = RegisterConfig {
        fit: fit_config(&args.options)?,
        anchor_index: args.anchor_index,
        anchor_weight: args.anchor_weight,
        skip_landmarks: args.skip_landmarks,
    };
    let manifest = Manifest::load(&args.manifest)?;
    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| args.manifest.parent().map(Path::to_path_buf).unwrap_or_default());
    let landmarks_out = out_dir.join("resampled_landmarks.txt");
    let echo = RegisterEcho {
        command: "register",
        template: TemplateEcho::new(&args.options),
        manifest: &args.manifest,
        landmarks_out: &landmarks_out,
        register: &config,
        threads,
    };
    write(&out_dir.join("config.json"), &to_json(&echo))?;

    let template = template(&args.options.template, args.options.subdivisions)?;
    let targets = load_targets(&manifest)?;
    let registration = run_register(&template, &targets, &config)?;
    write_registration(&targets, &registration, &config, &landmarks_out)?;
    for (t, r) in targets.iter().zip(registration.finals()) {
        let last = r.trace.last();
        println!(
            "{} -> {}: D_c {:.6e}, landmark loss {:.6e}",
            t.entry.target.display(),
            t.entry.output.display(),
            last.map_or(f64::NAN, |m| m.d_c),
            last.map_or(f64::NAN, |m| m.e_lmk)
        );
    }
    if registration.resampled.is_some() {
        println!("resampled landmarks: {}", landmarks_out.display());
    }
    Ok(ExitCode::SUCCESS)
}

pub fn resample(args: ResampleArgs) -> Result<ExitCode> {
    let manifest = Manifest::load(&args.manifest)?;
    let template = template(&args.template, args.subdivisions)?;
    let (resampled, header) = resample_from_manifest(
        &template,
        &manifest,
        args.anchor_index,
        args.anchor_weight,
        densadapt::Execution::default(),
    )?;
    write(&args.out, &write_resampled(&header, &resampled))?;
    println!("{} landmarks from {} fittings -> {}", resampled.indices.len(), header.fittings, args.out.display());
    Ok(ExitCode::SUCCESS)
}

pub fn eval(args: EvalArgs) -> Result<ExitCode> {
    let fitted = load_obj(&args.fitted)?;
    let target = load_obj(&args.target)?;
    let weights = args.weights.as_ref().map(load_weights).transpose()?;
    let config = EvalConfig { samples: args.samples, seed: args.seed };
    let report = evaluate(&fitted, &target, weights.as_deref(), &config)?;
    let json = to_json(&report);
    print!("{json}");
    if let Some(out) = &args.out {
        write(out, &json)?;
    }
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(args: GradcheckArgs) -> Result<ExitCode> {
    let config = GradcheckConfig {
        seed: args.seed,
        sizes: args.sizes,
        step: args.step,
        threshold: args.threshold,
        corrupt: args.corrupt.as_deref().map(str::parse::<Energy>).transpose()?,
        ..GradcheckConfig::default()
    };
    let report = run_gradcheck(&config)?;
    for c in &report.checks {
        println!(
            "{} {:<20} N={:<5} max rel err {:.3e} (vertex {}, axis {})",
            if c.passed { "ok  " } else { "FAIL" },
            c.label(),
            c.vertices,
            c.max_rel_error,
            c.worst_vertex,
            c.worst_axis
        );
    }
    if !args.sweep.is_empty() {
        let size = config.sizes.first().copied().unwrap_or(50);
        let problem = Problem::random(size, config.seed, config.lambda)?;
        for energy in Energy::ALL {
            let sweep = step_sweep(&problem, energy, &args.sweep)?;
            let cells: Vec<String> = sweep.iter().map(|(h, e)| format!("h={h:e}: {e:.3e}")).collect();
            println!("sweep {:<12} {}", energy.name(), cells.join("  "));
        }
    }
    if let Some(out) = &args.out {
        write(out, &to_json(&report))?;
    }
    if report.passed {
        println!("all gradients within {:e}", config.threshold);
        return Ok(ExitCode::SUCCESS);
    }
    let worst = report.worst().expect("at least one check");
    eprintln!(
        "gradient check failed: worst is {} on N={} at vertex {} (rel err {:.3e} > {:e})",
        worst.label(),
        worst.vertices,
        worst.worst_vertex,
        worst.max_rel_error,
        config.threshold
    );
    Ok(ExitCode::from(1))
}

#[derive(Serialize)]
#[serde(untagged)]
enum SyntheticEcho {
    Sphere(SphereParams),
    SpikyStar(SpikyStarParams),
    BumpySphere(BumpySphereParams),
    FaceBlob(FaceBlobParams),
}

pub fn make_synthetic(args: SyntheticArgs) -> Result<ExitCode> {
    let kind: SyntheticKind = args.kind.parse()?;
    if args.landmarks_out.is_some() && kind != SyntheticKind::FaceBlob {
        return Err(Error::Config("--landmarks-out only applies to face_blob".into()));
    }
    let (mesh, landmarks, echo) = match kind {
        SyntheticKind::Sphere => {
            let d = SphereParams::default();
            let p = SphereParams {
                subdivisions: args.subdivisions.unwrap_or(d.subdivisions),
                warp: args.warp.unwrap_or(d.warp),
                jitter: args.jitter.unwrap_or(d.jitter),
                seed: args.seed,
            };
            (sphere(&p)?, None, SyntheticEcho::Sphere(p))
        }
        SyntheticKind::SpikyStar => {
            let d = SpikyStarParams::default();
            let p = SpikyStarParams {
                subdivisions: args.subdivisions.unwrap_or(d.subdivisions),
                height: args.height.unwrap_or(d.height),
                sigma: args.sigma.unwrap_or(d.sigma),
                jitter: args.jitter.unwrap_or(d.jitter),
                seed: args.seed,
                ..d
            };
            (spiky_star(&p)?, None, SyntheticEcho::SpikyStar(p))
        }
        SyntheticKind::BumpySphere => {
            let d = BumpySphereParams::default();
            let p = BumpySphereParams {
                subdivisions: args.subdivisions.unwrap_or(d.subdivisions),
                amplitude: args.amplitude.unwrap_or(d.amplitude),
                frequency: args.frequency.unwrap_or(d.frequency),
                seed: args.seed,
            };
            (bumpy_sphere(&p)?, None, SyntheticEcho::BumpySphere(p))
        }
        SyntheticKind::FaceBlob => {
            let d = FaceBlobParams::default();
            let p = FaceBlobParams { subdivisions: args.subdivisions.unwrap_or(d.subdivisions), seed: args.seed };
            let (mesh, lm) = face_blob(&p)?;
            (mesh, Some(lm), SyntheticEcho::FaceBlob(p))
        }
    };
    save_obj(&mesh, &args.out)?;
    if let (Some(path), Some(lm)) = (&args.landmarks_out, &landmarks) {
        write(path, &write_point_landmarks(lm))?;
    }
    let json = serde_json::json!({ "command": "make-synthetic", "kind": kind, "params": echo, "out": args.out });
    eprintln!("{json}");
    println!("{}: {} vertices, {} faces", args.out.display(), mesh.num_vertices(), mesh.num_faces());
    Ok(ExitCode::SUCCESS)
}
