//! Central finite-difference verification of every analytic gradient.
//!
//! Each energy is checked in position space and again composed with the
//! re-parameterization (`E(to_p(u))` against the pulled-back gradient).
//! Correspondences, target normals and edge-length targets are frozen at
//! the starting shape, exactly as inside one optimizer iteration.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::density::{adaptation_energy, adaptation_gradient_with, EdgeLengthTarget, TargetKind};
use crate::diffusion::DiffusionSystem;
use crate::error::{Error, Result};
use crate::laplacian::{bilaplacian_energy, bilaplacian_gradient, laplacian_energy, laplacian_gradient, SparseLaplacian};
use crate::losses::{chamfer_loss, landmark_loss, normal_loss_with};
use crate::mesh::{jittered_uv_sphere, TriMesh, Vec3};
use crate::par::{self, Execution};
use crate::spatial::{closest_points_with, Correspondence, SurfaceIndex};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Energy {
    Adaptation,
    Laplacian,
    Bilaplacian,
    Chamfer,
    Normal,
    Landmark,
}

impl Energy {
    pub const ALL: [Energy; 6] = [
        Energy::Adaptation,
        Energy::Laplacian,
        Energy::Bilaplacian,
        Energy::Chamfer,
        Energy::Normal,
        Energy::Landmark,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Energy::Adaptation => "adaptation",
            Energy::Laplacian => "laplacian",
            Energy::Bilaplacian => "bilaplacian",
            Energy::Chamfer => "chamfer",
            Energy::Normal => "normal",
            Energy::Landmark => "landmark",
        }
    }
}

impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Energy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Energy::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown energy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub seed: u64,
    /// Vertex counts of the random test meshes.
    pub sizes: Vec<usize>,
    pub step: f64,
    pub threshold: f64,
    pub lambda: f64,
    /// Scale this energy's analytic gradient by 1.01 (harness self-test).
    pub corrupt: Option<Energy>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sizes: vec![50, 200],
            step: DEFAULT_STEP,
            threshold: DEFAULT_THRESHOLD,
            lambda: crate::fit::DEFAULT_LAMBDA,
            corrupt: None,
        }
    }
}

/// Outcome of one energy on one mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub energy: Energy,
    pub through_pullback: bool,
    pub vertices: usize,
    /// `max_k |fd_k - an_k| / max_k |an_k|`.
    pub max_rel_error: f64,
    pub worst_vertex: usize,
    pub worst_axis: usize,
    pub passed: bool,
}

impl Check {
    pub fn label(&self) -> String {
        if self.through_pullback {
            format!("{} (via u)", self.energy)
        } else {
            self.energy.to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub config: GradcheckConfig,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl GradcheckReport {
    pub fn worst(&self) -> Option<&Check> {
        self.checks.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Vertex count `r * s + 2` of a uv sphere with `s` close to `2 r`.
pub fn uv_sphere_dims(vertices: usize) -> Result<(usize, usize)> {
    let interior = vertices.checked_sub(2).unwrap_or(0);
    (1..=interior)
        .filter(|r| interior % r == 0 && interior / r >= 3)
        .min_by_key(|&r| (interior / r).abs_diff(2 * r))
        .map(|r| (r, interior / r))
        .ok_or_else(|| Error::Config(format!("no uv sphere has exactly {vertices} vertices")))
}

/// Relative error between an FD and an analytic gradient, with its location.
pub fn compare(fd: &[Vec3], analytic: &[Vec3]) -> (f64, usize, usize) {
    let scale = analytic.iter().map(|g| g.amax()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut worst = (0.0, 0, 0);
    for (i, (a, b)) in fd.iter().zip(analytic).enumerate() {
        for k in 0..3 {
            let e = (a[k] - b[k]).abs() / scale;
            if e > worst.0 {
                worst = (e, i, k);
            }
        }
    }
    worst
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn central_differences<F>(x: &[Vec3], h: f64, f: F) -> Vec<Vec3>
where
    F: Fn(&[Vec3]) -> f64 + Sync + Send,
{
    let coords = par::map_range(Execution::default(), 3 * x.len(), |k| {
        let mut y = x.to_vec();
        y[k / 3][k % 3] = x[k / 3][k % 3] + h;
        let plus = f(&y);
        y[k / 3][k % 3] = x[k / 3][k % 3] - h;
        let minus = f(&y);
        (plus - minus) / (2.0 * h)
    });
    coords.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

/// Everything an energy needs besides positions, frozen at the start shape.
pub struct Problem {
    mesh: TriMesh,
    laplacian: Arc<SparseLaplacian>,
    diffusion: DiffusionSystem,
    edge_target: EdgeLengthTarget,
    correspondence: Correspondence,
    landmark_indices: Vec<usize>,
    landmark_targets: Vec<Vec3>,
}

impl Problem {
    /// A jittered sphere of `vertices` vertices with frozen, randomly
    /// generated targets for every energy.
    pub fn random(vertices: usize, seed: u64, lambda: f64) -> Result<Self> {
        let (rings, segments) = uv_sphere_dims(vertices)?;
        let mesh = jittered_uv_sphere(rings, segments, 0.3, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);

        let laplacian = Arc::new(SparseLaplacian::new(&mesh)?);
        let diffusion = DiffusionSystem::factorize(laplacian.clone(), lambda)?;
        let edge_target = EdgeLengthTarget {
            lengths: crate::density::mean_edge_lengths(&mesh)
                .iter()
                .map(|l| l * rng.gen_range(0.6..1.4))
                .collect(),
            kind: TargetKind::Adaptive,
        };
        // A differently jittered, larger sphere keeps every vertex well away
        // from the zero-distance kink of the Chamfer term.
        let target = jittered_uv_sphere(rings + 1, segments + 2, 0.3, seed.wrapping_add(1))?;
        let target = target.with_positions(target.positions().iter().map(|p| p * 1.3).collect())?;
        let correspondence = closest_points_with(&SurfaceIndex::build(&target)?, mesh.positions(), Execution::default());
        let count = 10.min(vertices);
        let landmark_indices = (0..count).map(|_| rng.gen_range(0..vertices)).collect();
        let landmark_targets = (0..count)
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        Ok(Self {
            mesh,
            laplacian,
            diffusion,
            edge_target,
            correspondence,
            landmark_indices,
            landmark_targets,
        })
    }

    pub fn positions(&self) -> &[Vec3] {
        self.mesh.positions()
    }

    fn at(&self, p: &[Vec3]) -> TriMesh {
        self.mesh.with_positions(p.to_vec()).expect("same vertex count")
    }

    pub fn value(&self, energy: Energy, p: &[Vec3]) -> Result<f64> {
        match energy {
            Energy::Adaptation => adaptation_energy(&self.at(p), &self.edge_target),
            Energy::Laplacian => laplacian_energy(&self.laplacian, p),
            Energy::Bilaplacian => bilaplacian_energy(&self.laplacian, p),
            Energy::Chamfer => Ok(chamfer_loss(p, &self.correspondence)?.value),
            Energy::Normal => Ok(normal_loss_with(&self.at(p), &self.correspondence, Execution::Sequential)?.value),
            Energy::Landmark => Ok(landmark_loss(p, &self.landmark_indices, &self.landmark_targets)?.value),
        }
    }

    pub fn gradient(&self, energy: Energy, p: &[Vec3]) -> Result<Vec<Vec3>> {
        match energy {
            Energy::Adaptation => adaptation_gradient_with(&self.at(p), &self.edge_target, Execution::Sequential),
            Energy::Laplacian => laplacian_gradient(&self.laplacian, p),
            Energy::Bilaplacian => bilaplacian_gradient(&self.laplacian, p),
            Energy::Chamfer => Ok(chamfer_loss(p, &self.correspondence)?.gradient),
            Energy::Normal => Ok(normal_loss_with(&self.at(p), &self.correspondence, Execution::Sequential)?.gradient),
            Energy::Landmark => Ok(landmark_loss(p, &self.landmark_indices, &self.landmark_targets)?.gradient),
        }
    }

    /// FD and analytic gradients, in `p` or (with `through_pullback`) in `u`.
    pub fn gradients(&self, energy: Energy, through_pullback: bool, h: f64) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
        let p0 = self.positions();
        let nan = |r: Result<f64>| r.unwrap_or(f64::NAN);
        if through_pullback {
            let u0 = self.diffusion.to_u(p0)?;
            let fd = central_differences(&u0, h, |u| {
                nan(self.diffusion.to_p(u).and_then(|p| self.value(energy, &p)))
            });
            let analytic = self.diffusion.pullback_gradient(&self.gradient(energy, p0)?)?;
            Ok((fd, analytic))
        } else {
            let fd = central_differences(p0, h, |p| nan(self.value(energy, p)));
            Ok((fd, self.gradient(energy, p0)?))
        }
    }
}

fn run_check(problem: &Problem, energy: Energy, through_pullback: bool, config: &GradcheckConfig) -> Result<Check> {
    let (fd, mut analytic) = problem.gradients(energy, through_pullback, config.step)?;
    if config.corrupt == Some(energy) {
        for g in &mut analytic {
            *g *= 1.01;
        }
    }
    let (err, vertex, axis) = compare(&fd, &analytic);
    Ok(Check {
        energy,
        through_pullback,
        vertices: problem.positions().len(),
        max_rel_error: err,
        worst_vertex: vertex,
        worst_axis: axis,
        passed: err < config.threshold,
    })
}

/// Checks every energy, in `p` and through the pullback, on every mesh size.
pub fn run_gradcheck(config: &GradcheckConfig) -> Result<GradcheckReport> {
    if !(config.step > 0.0) || !(config.threshold > 0.0) {
        return Err(Error::Config("gradcheck step and threshold must be positive".into()));
    }
    let mut checks = Vec::new();
    for (k, &size) in config.sizes.iter().enumerate() {
        let problem = Problem::random(size, config.seed.wrapping_add(k as u64), config.lambda)?;
        for energy in Energy::ALL {
            for through in [false, true] {
                let check = run_check(&problem, energy, through, config)?;
                log::info!("{:<22} N={:<4} max rel err {:.3e}", check.label(), size, check.max_rel_error);
                checks.push(check);
            }
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(GradcheckReport { config: config.clone(), checks, passed })
}

/// Max relative error of one energy for each step size in `steps`.
pub fn step_sweep(problem: &Problem, energy: Energy, steps: &[f64]) -> Result<Vec<(f64, f64)>> {
    steps
        .iter()
        .map(|&h| {
            let (fd, an) = problem.gradients(energy, false, h)?;
            Ok((h, compare(&fd, &an).0))
        })
        .collect()
}
