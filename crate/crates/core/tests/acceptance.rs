//! Acceptance criteria. Runs every criterion, prints one PASS/FAIL line for
//! each, and exits non-zero if any fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use densadapt::eval::{evaluate, EvalConfig};
use densadapt::gradcheck::{run_gradcheck, GradcheckConfig};
use densadapt::landmarks::{weighted_alignment, write_point_landmarks};
use densadapt::pipeline::{load_targets, register, write_registration, Manifest, RegisterConfig};
use densadapt::synthetic::{
    bumpy_sphere, face_blob, sphere, spiky_star, BumpySphereParams, FaceBlobParams, SphereParams, SpikyStarParams,
};
use densadapt::{
    adaptation_energy, adaptive_target, fit, icosphere, mean_edge_lengths, optimize_adaptation_only, save_obj,
    uniform_target, AdaptationConfig, DiffusionSystem, Execution, FitConfig, ScheduleConfig, SparseLaplacian,
    TriMesh, Vec3,
};
use nalgebra::{Matrix3, Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Meshes produced by fit/register runs, checked against their templates.
#[derive(Default)]
struct ConnectivityLog {
    runs: Vec<(String, TriMesh, TriMesh)>,
}

impl ConnectivityLog {
    fn record(&mut self, label: &str, template: &TriMesh, out: &TriMesh) {
        self.runs.push((label.to_string(), template.clone(), out.clone()));
    }
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let report = run_gradcheck(&GradcheckConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let worst = report.worst().expect("checks ran");
    let detail = format!(
        "{} checks, worst {} N={} rel err {:.2e} at vertex {}, {:.2?}",
        report.checks.len(),
        worst.label(),
        worst.vertices,
        worst.max_rel_error,
        worst.worst_vertex,
        elapsed
    );
    let labels: Vec<String> = report.checks.iter().map(|c| c.label()).collect();
    let covered = ["adaptation", "laplacian", "bilaplacian", "chamfer", "normal", "landmark"]
        .iter()
        .all(|e| labels.contains(&e.to_string()) && labels.contains(&format!("{e} (via u)")));
    let has_200 = report.checks.iter().any(|c| c.vertices == 200);
    check(
        report.passed && covered && has_200 && elapsed < Duration::from_secs(60),
        detail,
    )
}

fn diffusion_correctness() -> Outcome {
    let start = Instant::now();
    let mesh = icosphere(4, 1.0).map_err(|e| e.to_string())?;
    let lap = Arc::new(SparseLaplacian::new(&mesh).map_err(|e| e.to_string())?);
    let system = DiffusionSystem::factorize(lap.clone(), 19.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p: Vec<Vec3> = mesh
        .positions()
        .iter()
        .map(|x| x + Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)))
        .collect();
    let back = system.to_p(&system.to_u(&p).unwrap()).unwrap();
    let norm = |v: &[Vec3]| v.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt();
    let diff: Vec<Vec3> = back.iter().zip(&p).map(|(a, b)| a - b).collect();
    let round_trip = norm(&diff) / norm(&p);

    let c = vec![Vec3::new(0.3, -1.2, 2.5); mesh.num_vertices()];
    let const_u = system.to_u(&c).unwrap();
    let const_p = system.to_p(&c).unwrap();
    let const_err = const_u.iter().chain(&const_p).zip(c.iter().chain(&c)).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);

    let identity = DiffusionSystem::factorize(lap, 0.0).map_err(|e| e.to_string())?;
    let id_exact = identity.to_p(&p).unwrap() == p && identity.to_u(&p).unwrap() == p;
    let elapsed = start.elapsed();
    check(
        round_trip < 1e-10 && const_err < 1e-12 && id_exact && elapsed < Duration::from_secs(5),
        format!(
            "round trip {round_trip:.2e}, constant error {const_err:.1e}, lambda=0 exact {id_exact}, {elapsed:.2?}"
        ),
    )
}

fn adaptive_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut violations = 0usize;
    let mut checked = 0usize;
    let mut min_ratio = f64::INFINITY;
    for instance in 0..100u64 {
        let params = BumpySphereParams {
            subdivisions: 3,
            amplitude: rng.gen_range(0.02..0.3),
            frequency: rng.gen_range(2.0..10.0),
            seed: instance,
        };
        let mesh = bumpy_sphere(&params).map_err(|e| e.to_string())?;
        let lap = Arc::new(SparseLaplacian::new(&mesh).map_err(|e| e.to_string())?);
        let smoother = DiffusionSystem::factorize(lap, 1.0).map_err(|e| e.to_string())?;
        let target = adaptive_target(&mesh, &smoother).map_err(|e| e.to_string())?;
        let l = mean_edge_lengths(&mesh);
        for (t, li) in target.lengths.iter().zip(&l) {
            checked += 1;
            if t > li {
                violations += 1;
            }
            min_ratio = min_ratio.min(t / li);
        }
    }
    check(
        violations == 0,
        format!("{checked} vertices over 100 instances, {violations} violations, smallest l'/l {min_ratio:.3}"),
    )
}

fn density_uniformization(log: &mut ConnectivityLog) -> Outcome {
    let mesh = sphere(&SphereParams { subdivisions: 3, warp: 0.6, jitter: 0.1, seed: 1 }).map_err(|e| e.to_string())?;
    let target = uniform_target(&mesh);
    let config = AdaptationConfig { iterations: 500, ..AdaptationConfig::default() };
    let (out, energies) = optimize_adaptation_only(&mesh, &target, &config).map_err(|e| e.to_string())?;
    log.record("adaptation-only", &mesh, &out);
    let cv0 = mesh.edge_length_stats().1;
    let cv1 = out.edge_length_stats().1;
    let e0 = adaptation_energy(&mesh, &target).unwrap();
    let e1 = *energies.last().unwrap();
    let cv_drop = 1.0 - cv1 / cv0;
    let e_drop = 1.0 - e1 / e0;
    check(
        cv_drop >= 0.5 && e_drop >= 0.9,
        format!("CV {cv0:.4} -> {cv1:.4} (-{:.1}%), E_a {e0:.3e} -> {e1:.3e} (-{:.1}%)", 100.0 * cv_drop, 100.0 * e_drop),
    )
}

fn paired_runs(log: &mut ConnectivityLog) -> Outcome {
    let template = icosphere(4, 1.0).map_err(|e| e.to_string())?;
    let target = spiky_star(&SpikyStarParams::default()).map_err(|e| e.to_string())?;
    let eval_config = EvalConfig::default();
    let mut results = Vec::new();
    for m in [0.0, 1.5] {
        let config = FitConfig {
            strength: m,
            iterations: 1400,
            lambda: 19.0,
            execution: Execution::Sequential,
            ..FitConfig::default()
        };
        let start = Instant::now();
        let out = fit(&template, &target, &config).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        log.record(&format!("spiky star m={m}"), &template, &out.mesh);
        let report = evaluate(&out.mesh, &target, None, &eval_config).map_err(|e| e.to_string())?;
        results.push((report, elapsed));
    }
    let (base, t0) = results[0];
    let (ours, t1) = results[1];
    let ratio = ours.chamfer / base.chamfer;
    check(
        ratio <= 0.97 && ours.normal_mse < base.normal_mse && t0.max(t1) < Duration::from_secs(300),
        format!(
            "Chamfer {:.4e} vs {:.4e} (ratio {ratio:.3}), normal MSE {:.4e} vs {:.4e}, single-threaded {:.1?} / {:.1?}",
            ours.chamfer, base.chamfer, ours.normal_mse, base.normal_mse, t1, t0
        ),
    )
}

fn schedule_conformance() -> Outcome {
    let schedule = ScheduleConfig::new(1.5, 1400).map_err(|e| e.to_string())?;
    let mut mismatches = Vec::new();
    for t in 0..1400 {
        let expected = match t {
            0..=349 => (1.5, 0.0),
            350..=699 => (0.0, 3.0),
            _ => (0.0, 0.0),
        };
        if schedule.weights(t) != expected {
            mismatches.push(t);
        }
    }
    check(
        mismatches.is_empty(),
        format!("1400 iterations checked, mismatches at {:?}", &mismatches[..mismatches.len().min(5)]),
    )
}

fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let axis = Unit::new_normalize(Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    Rotation3::from_axis_angle(&axis, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)).into_inner()
}

fn rotation_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut bad_det = 0usize;
    for _ in 0..1000 {
        let reference: Vec<Vec3> = (0..38)
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut weights: Vec<f64> = (0..38).map(|_| rng.gen_range(0.1..2.0)).collect();
        weights[16] = 1e4;
        let r_true = random_rotation(&mut rng);
        // source = R^T reference, so the recovered R maps source back onto it
        let source: Vec<Vec3> = reference.iter().map(|x| r_true.transpose() * x).collect();
        let r = weighted_alignment(&source, &reference, &weights).map_err(|e| e.to_string())?;
        worst = worst.max((r - r_true).norm());
        if (r.determinant() - 1.0).abs() > 1e-12 {
            bad_det += 1;
        }
    }
    // Reflected and noisy sets: the unconstrained optimum is a reflection.
    let mut reflection_fixtures = 0usize;
    for _ in 0..200 {
        let reference: Vec<Vec3> = (0..38)
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mirror = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0)) * random_rotation(&mut rng);
        let source: Vec<Vec3> = reference
            .iter()
            .map(|x| mirror * x + Vec3::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)))
            .collect();
        let r = weighted_alignment(&source, &reference, &vec![1.0; 38]).map_err(|e| e.to_string())?;
        reflection_fixtures += 1;
        if (r.determinant() - 1.0).abs() > 1e-12 || (r.transpose() * r - Matrix3::identity()).norm() > 1e-12 {
            bad_det += 1;
        }
    }
    check(
        worst < 1e-10 && bad_det == 0,
        format!("1000 rotations, worst Frobenius error {worst:.2e}; {reflection_fixtures} reflection fixtures; {bad_det} with det != +1"),
    )
}

fn register_pipeline(log: &mut ConnectivityLog) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut manifest = String::new();
    for seed in 0..2u64 {
        let (mesh, landmarks) = face_blob(&FaceBlobParams { subdivisions: 4, seed }).map_err(|e| e.to_string())?;
        save_obj(&mesh, dir.path().join(format!("face{seed}.obj"))).map_err(|e| e.to_string())?;
        std::fs::write(dir.path().join(format!("face{seed}.txt")), write_point_landmarks(&landmarks)).map_err(|e| e.to_string())?;
        manifest += &format!("face{seed}.obj face{seed}.txt out/face{seed}_fit.obj\n");
    }
    std::fs::write(dir.path().join("corpus.txt"), manifest).map_err(|e| e.to_string())?;
    let targets = load_targets(&Manifest::load(dir.path().join("corpus.txt")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let template = icosphere(3, 1.0).map_err(|e| e.to_string())?;
    let config = RegisterConfig::default();
    let start = Instant::now();
    let reg = register(&template, &targets, &config).map_err(|e| e.to_string())?;
    let landmarks_out = dir.path().join("out/landmarks.txt");
    write_registration(&targets, &reg, &config, &landmarks_out).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    for (k, r) in reg.stage1.iter().enumerate() {
        log.record(&format!("register stage 1 #{k}"), &template, &r.mesh);
    }
    for (k, r) in reg.stage3.iter().enumerate() {
        log.record(&format!("register stage 3 #{k}"), &template, &r.mesh);
    }
    let written: Vec<TriMesh> = targets
        .iter()
        .map(|t| densadapt::load_obj(&t.entry.output))
        .collect::<densadapt::Result<_>>()
        .map_err(|e| e.to_string())?;
    let shared = written.iter().all(|m| m.faces() == template.faces() && m.num_vertices() == template.num_vertices());
    let resampled = std::fs::read_to_string(&landmarks_out).map_err(|e| e.to_string())?;
    let records = resampled.lines().filter(|l| l.starts_with("i ")).count();
    let ratios: Vec<f64> = reg
        .stage3
        .iter()
        .map(|r| r.trace.last().unwrap().e_lmk / r.trace[0].e_lmk)
        .collect();
    let worst = ratios.iter().cloned().fold(0.0, f64::max);
    check(
        reg.stage3.len() == 2 && shared && records == 38 && worst < 0.1,
        format!(
            "3 stages in {elapsed:.1?}, {records} resampled landmarks, outputs share connectivity {shared}, final/initial landmark loss {:?}",
            ratios.iter().map(|r| format!("{r:.2e}")).collect::<Vec<_>>()
        ),
    )
}

fn connectivity(log: &ConnectivityLog) -> Outcome {
    let broken: Vec<&str> = log
        .runs
        .iter()
        .filter(|(_, template, out)| template.faces() != out.faces() || template.num_vertices() != out.num_vertices())
        .map(|(label, _, _)| label.as_str())
        .collect();
    check(
        broken.is_empty() && !log.runs.is_empty(),
        format!("{} runs checked, changed: {broken:?}", log.runs.len()),
    )
}

fn main() {
    let mut log = ConnectivityLog::default();
    let mut outcomes: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} {name}: {detail} [{:.1?}]", start.elapsed());
        outcomes.push((name, outcome));
    };
    run("gradient suite", &mut gradient_suite);
    run("diffusion correctness", &mut diffusion_correctness);
    run("adaptive target bound", &mut adaptive_bound);
    run("density uniformization", &mut || density_uniformization(&mut log));
    run("paired-run adaptation benefit", &mut || paired_runs(&mut log));
    run("schedule conformance", &mut schedule_conformance);
    run("rotation recovery", &mut rotation_recovery);
    run("register pipeline", &mut || register_pipeline(&mut log));
    run("connectivity preservation", &mut || connectivity(&log));

    let failed = outcomes.iter().filter(|(_, o)| o.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
