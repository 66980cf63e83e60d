//! Mesh-to-mesh evaluation by uniform surface sampling.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::mesh::{TriMesh, Vec3};
use crate::par::{self, Execution};
use crate::spatial::SurfaceIndex;

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_EVAL_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { samples: DEFAULT_SAMPLES, seed: DEFAULT_EVAL_SEED }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `0.5 (mean A->B + mean B->A)` of closest-point distances.
    pub chamfer: f64,
    pub chamfer_a_to_b: f64,
    pub chamfer_b_to_a: f64,
    /// Mean `|n_a - n_b|^2` over both sample sets.
    pub normal_mse: f64,
    pub samples: usize,
    pub seed: u64,
    pub weighted: bool,
}

/// A point drawn on a mesh surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub point: Vec3,
    pub triangle: usize,
    pub barycentric: [f64; 3],
}

/// `count` points uniformly distributed by area, drawn from `rng`.
pub fn sample_surface(mesh: &TriMesh, count: usize, rng: &mut impl Rng) -> Result<Vec<SurfaceSample>> {
    let mut cumulative = Vec::with_capacity(mesh.num_faces());
    let mut total = 0.0;
    for f in 0..mesh.num_faces() {
        let [a, b, c] = mesh.triangle(f);
        total += 0.5 * (b - a).cross(&(c - a)).norm();
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Config("cannot sample a mesh with zero surface area".into()));
    }
    let samples = (0..count)
        .map(|_| {
            let x = rng.gen::<f64>() * total;
            let triangle = cumulative.partition_point(|&c| c <= x).min(cumulative.len() - 1);
            let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
            let s = r1.sqrt();
            let barycentric = [1.0 - s, s * (1.0 - r2), s * r2];
            let [a, b, c] = mesh.triangle(triangle);
            SurfaceSample {
                point: a * barycentric[0] + b * barycentric[1] + c * barycentric[2],
                triangle,
                barycentric,
            }
        })
        .collect();
    Ok(samples)
}

fn interpolate(values: &[f64], face: [usize; 3], bary: &[f64; 3]) -> f64 {
    values[face[0]] * bary[0] + values[face[1]] * bary[1] + values[face[2]] * bary[2]
}

/// Weighted means of distance and squared normal difference for samples of
/// `from` projected onto `onto`. The flag says whether the weights live on
/// `from` (true) or on `onto`.
fn one_way(
    samples: &[SurfaceSample],
    from: &SurfaceIndex,
    onto: &SurfaceIndex,
    weights: Option<(&[f64], bool)>,
    exec: Execution,
) -> (f64, f64, f64) {
    let rows = par::map_slice(exec, samples, |s| {
        let hit = onto.closest(&s.point);
        let n_from = from.interpolated_normal(s.triangle, &s.barycentric);
        let w = match weights {
            None => 1.0,
            // weights belong to the sampled mesh
            Some((w, true)) => interpolate(w, from.mesh().faces()[s.triangle], &s.barycentric),
            // weights belong to the mesh being projected onto
            Some((w, false)) => interpolate(w, onto.mesh().faces()[hit.triangle], &hit.barycentric),
        };
        (w, hit.distance, (n_from - hit.normal).norm_squared())
    });
    rows.iter().fold((0.0, 0.0, 0.0), |acc, r| (acc.0 + r.0, acc.1 + r.0 * r.1, acc.2 + r.0 * r.2))
}

/// Symmetric sampled Chamfer distance and normal MSE between `a` (usually
/// the fitted mesh) and `b`. Optional `weights` are per vertex of `a`.
pub fn evaluate(a: &TriMesh, b: &TriMesh, weights: Option<&[f64]>, config: &EvalConfig) -> Result<EvalReport> {
    evaluate_with(a, b, weights, config, Execution::default())
}

pub fn evaluate_with(
    a: &TriMesh,
    b: &TriMesh,
    weights: Option<&[f64]>,
    config: &EvalConfig,
    exec: Execution,
) -> Result<EvalReport> {
    if config.samples == 0 {
        return Err(Error::Config("evaluation needs at least one sample".into()));
    }
    if let Some(w) = weights {
        check_len(a.num_vertices(), w.len())?;
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("vertex weights must be finite and non-negative".into()));
        }
    }
    let ia = SurfaceIndex::build(a)?;
    let ib = SurfaceIndex::build(b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sa = sample_surface(a, config.samples, &mut rng)?;
    let sb = sample_surface(b, config.samples, &mut rng)?;
    let (wa, da, na) = one_way(&sa, &ia, &ib, weights.map(|w| (w, true)), exec);
    let (wb, db, nb) = one_way(&sb, &ib, &ia, weights.map(|w| (w, false)), exec);
    if !(wa > 0.0 && wb > 0.0) {
        return Err(Error::Config("vertex weights are zero on all samples".into()));
    }
    let (ab, ba) = (da / wa, db / wb);
    Ok(EvalReport {
        chamfer: 0.5 * (ab + ba),
        chamfer_a_to_b: ab,
        chamfer_b_to_a: ba,
        normal_mse: (na + nb) / (wa + wb),
        samples: config.samples,
        seed: config.seed,
        weighted: weights.is_some(),
    })
}

/// One non-negative number per line; blank lines and `#` comments ignored.
pub fn parse_weights(text: &str, origin: &Path) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            path: origin.to_path_buf(),
            line: n + 1,
            message: format!("expected a number, got `{line}`"),
        })?;
        out.push(v);
    }
    Ok(out)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_weights(&text, path)
}
