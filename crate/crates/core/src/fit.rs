//! Template fitting in diffusion-re-parameterized coordinates.
//!
//! Each iteration maps `u` back to positions, refreshes closest-point
//! correspondences on the target, rebuilds the uniform and adaptive
//! edge-length targets from the current shape, assembles the gradient of
//!
//! ```text
//! D_c + D_n + w_u E_a(., l'_u) + w_k E_a(., l'_k) [+ landmark] [+ smoothness baseline]
//! ```
//!
//! in position space, pulls it back to `u`, and takes one optimizer step.
//! Connectivity never changes.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::density::{adaptation_energy, adaptation_gradient_with, adaptive_target, uniform_target, EdgeLengthTarget};
use crate::diffusion::DiffusionSystem;
use crate::error::{Error, Result};
use crate::laplacian::{bilaplacian_energy, bilaplacian_gradient, laplacian_energy, laplacian_gradient, SparseLaplacian};
use crate::losses::{chamfer_loss, landmark_loss, normal_loss_with};
use crate::mesh::{TriMesh, Vec3};
use crate::optim::{OptimizerState, ScheduleConfig, StepConfig};
use crate::par::Execution;
use crate::spatial::{closest_points_with, SurfaceIndex};

pub const DEFAULT_LAMBDA: f64 = 19.0;
pub const DEFAULT_ITERATIONS: usize = 1400;
pub const DEFAULT_STRENGTH: f64 = 1.5;
pub const DEFAULT_LAMBDA_S: f64 = 1.0;

/// Optional explicit smoothness regularizer, for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "weight", rename_all = "kebab-case")]
pub enum BaselineMode {
    #[default]
    None,
    Laplacian(f64),
    Bilaplacian(f64),
}

impl std::str::FromStr for BaselineMode {
    type Err = Error;

    /// `none`, `laplacian:<w>` or `bilaplacian:<w>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, weight) = match s.split_once(':') {
            Some((k, w)) => (k, Some(w)),
            None => (s, None),
        };
        let weight = || -> Result<f64> {
            let w: f64 = weight
                .ok_or_else(|| Error::Config(format!("baseline `{s}` needs a weight, e.g. `{kind}:1.0`")))?
                .parse()
                .map_err(|_| Error::Config(format!("bad baseline weight in `{s}`")))?;
            if w.is_finite() && w >= 0.0 {
                Ok(w)
            } else {
                Err(Error::Config(format!("baseline weight must be >= 0, got {w}")))
            }
        };
        match kind {
            "none" => Ok(BaselineMode::None),
            "laplacian" => Ok(BaselineMode::Laplacian(weight()?)),
            "bilaplacian" => Ok(BaselineMode::Bilaplacian(weight()?)),
            _ => Err(Error::Config(format!("unknown baseline `{s}`"))),
        }
    }
}

/// Template landmark vertices paired with target landmark positions.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkConstraint {
    pub template_indices: Vec<usize>,
    pub target_points: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub lambda: f64,
    pub iterations: usize,
    pub strength: f64,
    pub lambda_s: f64,
    pub step: StepConfig,
    pub baseline: BaselineMode,
    #[serde(skip)]
    pub landmarks: Option<LandmarkConstraint>,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            iterations: DEFAULT_ITERATIONS,
            strength: DEFAULT_STRENGTH,
            lambda_s: DEFAULT_LAMBDA_S,
            step: StepConfig::default(),
            baseline: BaselineMode::None,
            landmarks: None,
            execution: Execution::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        finite_nonneg("lambda", self.lambda)?;
        finite_nonneg("lambda_s", self.lambda_s)?;
        finite_nonneg("adaptation strength", self.strength)?;
        if !(self.step.step_size.is_finite() && self.step.step_size > 0.0) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.step.step_size)));
        }
        ScheduleConfig::new(self.strength, self.iterations)?;
        if let Some(lm) = &self.landmarks {
            if lm.template_indices.len() != lm.target_points.len() {
                return Err(Error::Config(format!(
                    "landmark count mismatch: {} template landmarks, {} target landmarks",
                    lm.template_indices.len(),
                    lm.target_points.len()
                )));
            }
        }
        Ok(())
    }
}

/// One row of the metrics trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iter: usize,
    pub e_d: f64,
    pub d_c: f64,
    pub d_n: f64,
    pub e_a_u: f64,
    pub e_a_k: f64,
    pub e_lmk: f64,
    pub w_u: f64,
    pub w_k: f64,
    pub edge_len_mean: f64,
    pub edge_len_cv: f64,
    pub wall_ms: f64,
}

impl IterationMetrics {
    /// Every column except the wall-clock one.
    pub fn deterministic_fields(&self) -> [f64; 10] {
        [
            self.e_d,
            self.d_c,
            self.d_n,
            self.e_a_u,
            self.e_a_k,
            self.e_lmk,
            self.w_u,
            self.w_k,
            self.edge_len_mean,
            self.edge_len_cv,
        ]
    }
}

pub const METRICS_HEADER: &str = "iter,E_d,D_c,D_n,E_a_u,E_a_k,E_lmk,w_u,w_k,edge_len_mean,edge_len_cv,wall_ms";

pub fn metrics_csv(trace: &[IterationMetrics]) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for m in trace {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{:e},{:e},{:.3}",
            m.iter, m.e_d, m.d_c, m.d_n, m.e_a_u, m.e_a_k, m.e_lmk, m.w_u, m.w_k, m.edge_len_mean, m.edge_len_cv, m.wall_ms
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub mesh: TriMesh,
    pub trace: Vec<IterationMetrics>,
}

/// Per-term position-space gradients at one iterate.
#[derive(Debug, Clone)]
pub struct TermGradients {
    pub data: Vec<Vec3>,
    pub uniform: Vec<Vec3>,
    pub adaptive: Vec<Vec3>,
    pub landmark: Option<Vec<Vec3>>,
    pub baseline: Option<Vec<Vec3>>,
}

impl TermGradients {
    /// `data + w_u uniform + w_k adaptive + landmark + baseline`.
    pub fn combine(&self, w_u: f64, w_k: f64) -> Vec<Vec3> {
        let mut total = self.data.clone();
        for (i, g) in total.iter_mut().enumerate() {
            if w_u != 0.0 {
                *g += self.uniform[i] * w_u;
            }
            if w_k != 0.0 {
                *g += self.adaptive[i] * w_k;
            }
            if let Some(l) = &self.landmark {
                *g += l[i];
            }
            if let Some(b) = &self.baseline {
                *g += b[i];
            }
        }
        total
    }
}

/// Energies at one iterate, before weighting.
#[derive(Debug, Clone, Copy, Default)]
pub struct TermEnergies {
    pub d_c: f64,
    pub d_n: f64,
    pub e_a_u: f64,
    pub e_a_k: f64,
    pub e_lmk: f64,
    pub baseline: f64,
}

/// Precomputed operators shared by every iteration of one fit.
pub struct Fitter {
    template: TriMesh,
    index: SurfaceIndex,
    diffusion: DiffusionSystem,
    smoother: DiffusionSystem,
    laplacian: Arc<SparseLaplacian>,
    config: FitConfig,
}

impl Fitter {
    pub fn new(template: &TriMesh, target: &TriMesh, config: FitConfig) -> Result<Self> {
        config.validate()?;
        if let Some(lm) = &config.landmarks {
            if let Some(&bad) = lm.template_indices.iter().find(|&&i| i >= template.num_vertices()) {
                return Err(Error::Config(format!(
                    "template landmark vertex {bad} out of range ({} vertices)",
                    template.num_vertices()
                )));
            }
        }
        let laplacian = Arc::new(SparseLaplacian::new(template)?);
        let diffusion = DiffusionSystem::factorize(Arc::clone(&laplacian), config.lambda)?.with_execution(config.execution);
        let smoother = DiffusionSystem::factorize(Arc::clone(&laplacian), config.lambda_s)?;
        Ok(Self {
            template: template.clone(),
            index: SurfaceIndex::build(target)?,
            diffusion,
            smoother,
            laplacian,
            config,
        })
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn diffusion(&self) -> &DiffusionSystem {
        &self.diffusion
    }

    /// Energies and per-term gradients at positions `p`. Correspondences and
    /// edge-length targets are computed from `p` and then held fixed.
    pub fn evaluate(&self, p: Vec<Vec3>) -> Result<(TriMesh, TermEnergies, TermGradients)> {
        let exec = self.config.execution;
        let mesh = self.template.with_positions(p)?;
        let corr = closest_points_with(&self.index, mesh.positions(), exec);
        let dc = chamfer_loss(mesh.positions(), &corr)?;
        let dn = normal_loss_with(&mesh, &corr, exec)?;

        let lu: EdgeLengthTarget = uniform_target(&mesh);
        let lk = adaptive_target(&mesh, &self.smoother)?;
        let mut energies = TermEnergies {
            d_c: dc.value,
            d_n: dn.value,
            e_a_u: adaptation_energy(&mesh, &lu)?,
            e_a_k: adaptation_energy(&mesh, &lk)?,
            ..TermEnergies::default()
        };
        let data = dc.gradient.iter().zip(&dn.gradient).map(|(a, b)| a + b).collect();
        let uniform = adaptation_gradient_with(&mesh, &lu, exec)?;
        let adaptive = adaptation_gradient_with(&mesh, &lk, exec)?;

        let landmark = match &self.config.landmarks {
            Some(lm) => {
                let l = landmark_loss(mesh.positions(), &lm.template_indices, &lm.target_points)?;
                energies.e_lmk = l.value;
                Some(l.gradient)
            }
            None => None,
        };
        let baseline = match self.config.baseline {
            BaselineMode::None => None,
            BaselineMode::Laplacian(w) => {
                energies.baseline = w * laplacian_energy(&self.laplacian, mesh.positions())?;
                let g = laplacian_gradient(&self.laplacian, mesh.positions())?;
                Some(g.into_iter().map(|v| v * w).collect())
            }
            BaselineMode::Bilaplacian(w) => {
                energies.baseline = w * bilaplacian_energy(&self.laplacian, mesh.positions())?;
                let g = bilaplacian_gradient(&self.laplacian, mesh.positions())?;
                Some(g.into_iter().map(|v| v * w).collect())
            }
        };
        Ok((
            mesh,
            energies,
            TermGradients {
                data,
                uniform,
                adaptive,
                landmark,
                baseline,
            },
        ))
    }

    /// Runs the full schedule, calling `observer` with each iterate's metrics
    /// and positions (before that iteration's step).
    pub fn run_observed(&self, mut observer: impl FnMut(&IterationMetrics, &TriMesh)) -> Result<FitResult> {
        let schedule = ScheduleConfig::new(self.config.strength, self.config.iterations)?;
        let u0 = self.diffusion.to_u(self.template.positions())?;
        let mut state = OptimizerState::new(u0, self.config.step);
        let mut p = self.template.positions().to_vec();
        let mut trace = Vec::with_capacity(self.config.iterations);
        let start = Instant::now();

        for t in 0..self.config.iterations {
            let (mesh, e, grads) = self.evaluate(p.clone())?;
            let (w_u, w_k) = schedule.weights(t);
            let (edge_len_mean, edge_len_cv) = mesh.edge_length_stats();
            let metrics = IterationMetrics {
                iter: t,
                e_d: e.d_c + e.d_n,
                d_c: e.d_c,
                d_n: e.d_n,
                e_a_u: e.e_a_u,
                e_a_k: e.e_a_k,
                e_lmk: e.e_lmk,
                w_u,
                w_k,
                edge_len_mean,
                edge_len_cv,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            };
            let energies = [e.d_c, e.d_n, e.e_a_u, e.e_a_k, e.e_lmk, e.baseline];
            if energies.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical {
                    iteration: t,
                    message: format!(
                        "non-finite energy (D_c {}, D_n {}, E_a_u {}, E_a_k {}, E_lmk {}, baseline {})",
                        e.d_c, e.d_n, e.e_a_u, e.e_a_k, e.e_lmk, e.baseline
                    ),
                });
            }
            observer(&metrics, &mesh);
            trace.push(metrics);

            let g_p = grads.combine(w_u, w_k);
            let g_u = self.diffusion.pullback_gradient(&g_p)?;
            let u_prev = state.u.clone();
            state.step(&g_u).map_err(|err| match err {
                Error::Numerical { message, .. } => Error::Numerical {
                    iteration: t,
                    message: format!(
                        "{message} (D_c {:e}, D_n {:e}, E_a_u {:e}, E_a_k {:e}, E_lmk {:e})",
                        e.d_c, e.d_n, e.e_a_u, e.e_a_k, e.e_lmk
                    ),
                },
                other => other,
            })?;
            advance_positions(&self.diffusion, &mut p, &u_prev, &state.u)?;
        }

        let mesh = self.template.with_positions(p)?;
        Ok(FitResult { mesh, trace })
    }

    pub fn run(&self) -> Result<FitResult> {
        self.run_observed(|_, _| {})
    }
}

/// `p += to_p(u_new - u_old)`. Tracking `p` incrementally keeps the
/// starting shape bit-exact until the optimizer actually moves `u`.
fn advance_positions(diffusion: &DiffusionSystem, p: &mut [Vec3], u_old: &[Vec3], u_new: &[Vec3]) -> Result<()> {
    let du: Vec<Vec3> = u_new.iter().zip(u_old).map(|(a, b)| a - b).collect();
    if du.iter().all(|d| *d == Vec3::zeros()) {
        return Ok(());
    }
    for (pi, dp) in p.iter_mut().zip(diffusion.to_p(&du)?) {
        *pi += dp;
    }
    Ok(())
}

/// Fits `template` to `target`; see the module docs for the iteration.
pub fn fit(template: &TriMesh, target: &TriMesh, config: &FitConfig) -> Result<FitResult> {
    Fitter::new(template, target, config.clone())?.run()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationConfig {
    pub lambda: f64,
    pub iterations: usize,
    pub step: StepConfig,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            iterations: 500,
            step: StepConfig::default(),
        }
    }
}

/// Minimizes the adaptation energy alone toward a fixed target, through the
/// re-parameterization. Returns the final mesh and the energy per iteration
/// (the last entry is the energy of the returned mesh).
pub fn optimize_adaptation_only(
    mesh: &TriMesh,
    target: &EdgeLengthTarget,
    config: &AdaptationConfig,
) -> Result<(TriMesh, Vec<f64>)> {
    crate::error::check_len(mesh.num_vertices(), target.lengths.len())?;
    let laplacian = Arc::new(SparseLaplacian::new(mesh)?);
    let diffusion = DiffusionSystem::factorize(laplacian, config.lambda)?;
    let mut state = OptimizerState::new(diffusion.to_u(mesh.positions())?, config.step);
    let mut p = mesh.positions().to_vec();
    let mut energies = Vec::with_capacity(config.iterations + 1);
    for t in 0..config.iterations {
        let current = mesh.with_positions(p.clone())?;
        let e = adaptation_energy(&current, target)?;
        if !e.is_finite() {
            return Err(Error::Numerical {
                iteration: t,
                message: format!("adaptation energy is {e}"),
            });
        }
        energies.push(e);
        let g = adaptation_gradient_with(&current, target, Execution::default())?;
        let u_prev = state.u.clone();
        state.step(&diffusion.pullback_gradient(&g)?)?;
        advance_positions(&diffusion, &mut p, &u_prev, &state.u)?;
    }
    let out = mesh.with_positions(p)?;
    energies.push(adaptation_energy(&out, target)?);
    Ok((out, energies))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{icosphere, jittered_uv_sphere};

    #[test]
    fn baseline_parsing() {
        assert_eq!("none".parse::<BaselineMode>().unwrap(), BaselineMode::None);
        assert_eq!("laplacian:2.5".parse::<BaselineMode>().unwrap(), BaselineMode::Laplacian(2.5));
        assert_eq!("bilaplacian:0".parse::<BaselineMode>().unwrap(), BaselineMode::Bilaplacian(0.0));
        assert!("bilaplacian".parse::<BaselineMode>().is_err());
        assert!("cotan:1".parse::<BaselineMode>().is_err());
        assert!("laplacian:-1".parse::<BaselineMode>().is_err());
    }

    #[test]
    fn metrics_csv_layout() {
        let m = IterationMetrics {
            iter: 3,
            e_d: 1.0,
            d_c: 0.5,
            d_n: 0.5,
            e_a_u: 0.0,
            e_a_k: 0.0,
            e_lmk: 0.0,
            w_u: 1.5,
            w_k: 0.0,
            edge_len_mean: 0.1,
            edge_len_cv: 0.2,
            wall_ms: 4.0,
        };
        let csv = metrics_csv(&[m]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), METRICS_HEADER);
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 12);
        assert_eq!(row[0], "3");
        assert_eq!(row[7], "1.5");
    }

    #[test]
    fn config_validation() {
        let mut c = FitConfig::default();
        assert!(c.validate().is_ok());
        c.lambda = -1.0;
        assert!(c.validate().is_err());
        let mut c = FitConfig::default();
        c.landmarks = Some(LandmarkConstraint { template_indices: vec![1, 2], target_points: vec![Vec3::zeros()] });
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn gradient_assembly_is_linear() {
        let template = icosphere(2, 1.0).unwrap();
        let target = jittered_uv_sphere(10, 18, 0.3, 1).unwrap();
        let cfg = FitConfig {
            landmarks: Some(LandmarkConstraint {
                template_indices: vec![0, 10, 20],
                target_points: target.positions()[..3].to_vec(),
            }),
            baseline: BaselineMode::Bilaplacian(0.3),
            ..FitConfig::default()
        };
        let fitter = Fitter::new(&template, &target, cfg).unwrap();
        let (_, _, g) = fitter.evaluate(template.positions().iter().map(|p| p * 1.05).collect()).unwrap();
        let (w_u, w_k) = (0.7, 2.3);
        let total = g.combine(w_u, w_k);
        let lm = g.landmark.as_ref().unwrap();
        let bl = g.baseline.as_ref().unwrap();
        for i in 0..total.len() {
            let manual = g.data[i] + g.uniform[i] * w_u + g.adaptive[i] * w_k + lm[i] + bl[i];
            assert!((total[i] - manual).norm() <= 1e-12 * manual.norm().max(1e-300));
        }
    }

    #[test]
    fn template_is_stationary_when_fitted_to_itself() {
        // The unsquared Chamfer term has a unit-norm gradient as soon as a
        // vertex leaves the surface, so Adam settles into a noise floor of
        // order step_size / (1 + lambda) rather than converging. Only the
        // start of the run is a true fixed point.
        let template = icosphere(3, 1.0).unwrap();
        let cfg = FitConfig { strength: 0.0, iterations: 4, ..FitConfig::default() };
        let out = fit(&template, &template, &cfg).unwrap();
        assert!(out.mesh.same_connectivity(&template));
        assert!(out.trace[0].d_c < 1e-12, "D_c = {}", out.trace[0].d_c);
        assert!(out.trace[1].d_c < 1e-6, "D_c = {}", out.trace[1].d_c);
    }

    #[test]
    fn adaptation_only_keeps_exact_target() {
        let m = jittered_uv_sphere(6, 10, 0.2, 3).unwrap();
        let target = EdgeLengthTarget {
            lengths: crate::density::mean_edge_lengths(&m),
            kind: crate::density::TargetKind::Adaptive,
        };
        let cfg = AdaptationConfig { iterations: 20, ..AdaptationConfig::default() };
        let (out, e) = optimize_adaptation_only(&m, &target, &cfg).unwrap();
        assert!(e[0] < 1e-30);
        let g = crate::density::adaptation_gradient(&m, &target).unwrap();
        assert!(g.iter().all(|gi| gi.norm() < 1e-14));
        assert!(g.iter().all(|gi| *gi == Vec3::zeros()));
        assert_eq!(out.positions(), m.positions());
    }

    #[test]
    fn landmark_count_mismatch_is_config_error() {
        let t = icosphere(1, 1.0).unwrap();
        let cfg = FitConfig {
            landmarks: Some(LandmarkConstraint { template_indices: vec![0], target_points: vec![] }),
            ..FitConfig::default()
        };
        assert!(matches!(fit(&t, &t, &cfg), Err(Error::Config(_))));
    }
}
