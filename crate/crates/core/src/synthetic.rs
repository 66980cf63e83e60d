//! Deterministic synthetic targets.
//!
//! All shapes are radial displacements of an icosphere, so vertex `i` of a
//! generated mesh always sits in the direction of icosphere vertex `i`.
//! Randomness comes from `ChaCha8Rng::seed_from_u64(seed)`.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landmarks::{DEFAULT_ANCHOR_INDEX, DEFAULT_LANDMARK_COUNT};
use crate::mesh::{icosphere, TriMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    Sphere,
    SpikyStar,
    BumpySphere,
    FaceBlob,
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "sphere" => Ok(Self::Sphere),
            "spiky_star" => Ok(Self::SpikyStar),
            "bumpy_sphere" => Ok(Self::BumpySphere),
            "face_blob" => Ok(Self::FaceBlob),
            _ => Err(Error::Config(format!(
                "unknown synthetic kind `{s}` (expected sphere, spiky_star, bumpy_sphere or face_blob)"
            ))),
        }
    }
}

fn displace(base: &TriMesh, radius: impl Fn(&Vec3) -> f64) -> Result<TriMesh> {
    base.with_positions(base.positions().iter().map(|p| {
        let d = p.normalize();
        d * radius(&d)
    }).collect())
}

/// Unit sphere, optionally made irregular: `warp` pulls vertices toward +z
/// (denser there) and `jitter` adds seeded tangential noise in units of the
/// icosphere's typical edge length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereParams {
    pub subdivisions: u32,
    pub warp: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SphereParams {
    fn default() -> Self {
        Self { subdivisions: 3, warp: 0.0, jitter: 0.0, seed: 0 }
    }
}

pub fn sphere(params: &SphereParams) -> Result<TriMesh> {
    if !(params.warp.abs() < 1.0) || !(params.jitter >= 0.0) {
        return Err(Error::Config(format!(
            "sphere warp must lie in (-1, 1) and jitter must be non-negative, got {} and {}",
            params.warp, params.jitter
        )));
    }
    let base = icosphere(params.subdivisions, 1.0)?;
    if params.warp == 0.0 && params.jitter == 0.0 {
        return Ok(base);
    }
    let edge = base.edge_length_stats().0;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let shift = Vec3::new(0.0, 0.0, params.warp);
    let positions = base
        .positions()
        .iter()
        .map(|p| {
            let mut d = (p + shift).normalize();
            if params.jitter > 0.0 {
                let r = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let tangent = r - d * r.dot(&d);
                d = (d + tangent * (params.jitter * edge)).normalize();
            }
            d
        })
        .collect();
    base.with_positions(positions)
}

/// Sphere with six Gaussian bumps along the coordinate axes:
/// `r(d) = radius (1 + sum_k h_k exp(-|d - a_k|^2 / (2 sigma^2)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikyStarParams {
    pub subdivisions: u32,
    pub radius: f64,
    /// Bump height relative to the radius.
    pub height: f64,
    /// Bump width (chord distance on the unit sphere).
    pub sigma: f64,
    /// Relative random variation of each bump height.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SpikyStarParams {
    fn default() -> Self {
        Self {
            subdivisions: 5,
            radius: 1.0,
            height: 0.5,
            sigma: 0.15,
            jitter: 0.0,
            seed: 0,
        }
    }
}

pub const AXES: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0],
];

pub fn spiky_star(params: &SpikyStarParams) -> Result<TriMesh> {
    if !(params.sigma > 0.0) {
        return Err(Error::Config(format!("spiky star sigma must be positive, got {}", params.sigma)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let heights: Vec<f64> = (0..6)
        .map(|_| params.height * (1.0 + params.jitter * rng.gen_range(-1.0..1.0)))
        .collect();
    let base = icosphere(params.subdivisions, 1.0)?;
    if heights.iter().all(|&h| h == 0.0) {
        return displace(&base, |_| params.radius);
    }
    let two_s2 = 2.0 * params.sigma * params.sigma;
    displace(&base, |d| {
        let bumps: f64 = AXES
            .iter()
            .zip(&heights)
            .map(|(a, h)| h * (-(d - Vec3::from(*a)).norm_squared() / two_s2).exp())
            .sum();
        params.radius * (1.0 + bumps)
    })
}

/// Sphere with a latitudinal sinusoid about a seeded random axis:
/// `r = 1 + amplitude cos(frequency * theta + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpySphereParams {
    pub subdivisions: u32,
    pub amplitude: f64,
    pub frequency: f64,
    pub seed: u64,
}

impl Default for BumpySphereParams {
    fn default() -> Self {
        Self { subdivisions: 4, amplitude: 0.1, frequency: 6.0, seed: 0 }
    }
}

impl BumpySphereParams {
    fn axis_and_phase(&self) -> (Vec3, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let axis = loop {
            let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let n = v.norm();
            if n > 0.1 && n <= 1.0 {
                break v / n;
            }
        };
        (axis, rng.gen_range(0.0..std::f64::consts::TAU))
    }

    /// `cos(frequency * theta + phase)` at unit direction `d`; near ±1 on
    /// ridges and troughs, near 0 on the flanks between them.
    pub fn profile(&self, d: &Vec3) -> f64 {
        let (axis, phase) = self.axis_and_phase();
        let theta = d.normalize().dot(&axis).clamp(-1.0, 1.0).acos();
        (self.frequency * theta + phase).cos()
    }
}

pub fn bumpy_sphere(params: &BumpySphereParams) -> Result<TriMesh> {
    let base = icosphere(params.subdivisions, 1.0)?;
    let (axis, phase) = params.axis_and_phase();
    displace(&base, |d| {
        let theta = d.dot(&axis).clamp(-1.0, 1.0).acos();
        1.0 + params.amplitude * (params.frequency * theta + phase).cos()
    })
}

/// A smooth, asymmetric head-like blob with a nose along +z and
/// `DEFAULT_LANDMARK_COUNT` landmarks laid out over the front.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceBlobParams {
    pub subdivisions: u32,
    pub seed: u64,
}

impl Default for FaceBlobParams {
    fn default() -> Self {
        Self { subdivisions: 4, seed: 0 }
    }
}

struct Blob {
    scale: Vec3,
    nose_height: f64,
    features: Vec<(Vec3, f64, f64)>,
}

impl Blob {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = Vec3::new(rng.gen_range(0.8..0.95), rng.gen_range(1.0..1.2), rng.gen_range(0.85..1.0));
        let nose_height = rng.gen_range(0.25..0.4);
        let mut features = Vec::new();
        // brow ridge, cheeks, chin, plus one random lump for asymmetry
        for (dir, h) in [
            (Vec3::new(0.0, 0.45, 0.9), 0.08),
            (Vec3::new(0.55, -0.2, 0.8), 0.07),
            (Vec3::new(-0.55, -0.2, 0.8), 0.07),
            (Vec3::new(0.0, -0.75, 0.65), 0.1),
        ] {
            features.push((dir.normalize(), h * rng.gen_range(0.7..1.3), rng.gen_range(0.25..0.35)));
        }
        let lump = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..0.0));
        features.push((lump.normalize(), rng.gen_range(0.1..0.2), 0.5));
        Self { scale, nose_height, features }
    }

    fn point(&self, d: &Vec3) -> Vec3 {
        let nose = self.nose_height * (-(d - Vec3::z()).norm_squared() / (2.0 * 0.18f64.powi(2))).exp();
        let bumps: f64 = self
            .features
            .iter()
            .map(|(a, h, s)| h * (-(d - a).norm_squared() / (2.0 * s * s)).exp())
            .sum();
        (d * (1.0 + nose + bumps)).component_mul(&self.scale)
    }
}

/// Landmark directions on the unit sphere; index 16 is +z (nose tip). The
/// others follow a golden-angle spiral over the front cap.
pub fn face_landmark_directions() -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut dirs = Vec::with_capacity(DEFAULT_LANDMARK_COUNT);
    let mut k = 0usize;
    for i in 0..DEFAULT_LANDMARK_COUNT {
        if i == DEFAULT_ANCHOR_INDEX {
            dirs.push(Vec3::z());
            continue;
        }
        let frac = (k as f64 + 1.0) / (DEFAULT_LANDMARK_COUNT - 1) as f64;
        let theta = (70f64).to_radians() * frac.sqrt();
        let phi = golden * k as f64;
        dirs.push(Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()));
        k += 1;
    }
    dirs
}

/// The blob mesh and its landmark positions (exactly on the smooth surface).
pub fn face_blob(params: &FaceBlobParams) -> Result<(TriMesh, Vec<Vec3>)> {
    let blob = Blob::new(params.seed);
    let base = icosphere(params.subdivisions, 1.0)?;
    let mesh = base.with_positions(base.positions().iter().map(|p| blob.point(&p.normalize())).collect())?;
    let landmarks = face_landmark_directions().iter().map(|d| blob.point(d)).collect();
    Ok((mesh, landmarks))
}
