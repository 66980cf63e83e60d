//! Per-vertex mean edge lengths and the energy that drives them toward a
//! desired density.
//!
//! `E_a(p, l') = (1/N) |l(p) - l'|^2` where `l_i(p)` is the mean length of the
//! edges around vertex `i`. Two ways of choosing `l'` are provided: a uniform
//! target (every vertex gets the global mean) and a curvature-adaptive target
//! that shortens edges where the smoothed Laplacian magnitude is above
//! average.

use crate::diffusion::DiffusionSystem;
use crate::error::{check_len, Result};
use crate::laplacian::SparseLaplacian;
use crate::mesh::{TriMesh, Vec3};
use crate::par::{self, Execution};

/// Edges shorter than this contribute no direction to the gradient.
const ZERO_EDGE: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Uniform,
    Adaptive,
}

/// Desired mean edge length per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeLengthTarget {
    pub lengths: Vec<f64>,
    pub kind: TargetKind,
}

/// `l_i = (1/|N_i|) sum_j |p_i - p_j|`.
pub fn mean_edge_lengths(mesh: &TriMesh) -> Vec<f64> {
    let p = mesh.positions();
    mesh.one_ring()
        .iter()
        .enumerate()
        .map(|(i, ring)| {
            if ring.is_empty() {
                return 0.0;
            }
            ring.iter().map(|&j| (p[i] - p[j]).norm()).sum::<f64>() / ring.len() as f64
        })
        .collect()
}

/// Average over vertices of the mean edge lengths.
pub fn average_mean_edge_length(mesh: &TriMesh) -> f64 {
    let l = mean_edge_lengths(mesh);
    l.iter().sum::<f64>() / l.len().max(1) as f64
}

pub fn adaptation_energy(mesh: &TriMesh, target: &EdgeLengthTarget) -> Result<f64> {
    check_len(mesh.num_vertices(), target.lengths.len())?;
    let l = mean_edge_lengths(mesh);
    let n = l.len() as f64;
    Ok(l.iter()
        .zip(&target.lengths)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n)
}

pub fn adaptation_gradient(mesh: &TriMesh, target: &EdgeLengthTarget) -> Result<Vec<Vec3>> {
    adaptation_gradient_with(mesh, target, Execution::default())
}

/// Exact gradient of [`adaptation_energy`] with respect to positions.
///
/// Edge `(i, j)` appears in both `l_i` and `l_j`, so its direction is weighted
/// by `(2/N) (r_i/|N_i| + r_j/|N_j|)` with `r = l - l'`.
pub fn adaptation_gradient_with(
    mesh: &TriMesh,
    target: &EdgeLengthTarget,
    exec: Execution,
) -> Result<Vec<Vec3>> {
    check_len(mesh.num_vertices(), target.lengths.len())?;
    let p = mesh.positions();
    let ring = mesh.one_ring();
    let n = p.len() as f64;
    let l = mean_edge_lengths(mesh);
    let scaled_residual: Vec<f64> = l
        .iter()
        .zip(&target.lengths)
        .zip(ring)
        .map(|((li, ti), r)| if r.is_empty() { 0.0 } else { (li - ti) / r.len() as f64 })
        .collect();

    let per_vertex = par::map_range(exec, p.len(), |i| {
        let mut g = Vec3::zeros();
        let mut zero_edges = 0usize;
        for &j in &ring[i] {
            let d = p[i] - p[j];
            let len = d.norm();
            if len <= ZERO_EDGE {
                zero_edges += 1;
                continue;
            }
            g += d * ((2.0 / n) * (scaled_residual[i] + scaled_residual[j]) / len);
        }
        (g, zero_edges)
    });
    let zero_edges: usize = per_vertex.iter().map(|(_, z)| z).sum();
    if zero_edges > 0 {
        log::warn!("{} zero-length edges contribute no gradient direction", zero_edges / 2);
    }
    Ok(per_vertex.into_iter().map(|(g, _)| g).collect())
}

/// Every vertex gets the average mean edge length of the mesh.
pub fn uniform_target(mesh: &TriMesh) -> EdgeLengthTarget {
    let lm = average_mean_edge_length(mesh);
    EdgeLengthTarget {
        lengths: vec![lm; mesh.num_vertices()],
        kind: TargetKind::Uniform,
    }
}

/// `K_i = |(L p)_i| / l_m(p)`, dimensionless.
pub fn curvature_magnitudes(mesh: &TriMesh, lap: &SparseLaplacian) -> Result<Vec<f64>> {
    check_len(lap.dim(), mesh.num_vertices())?;
    let lm = average_mean_edge_length(mesh);
    let lp = lap.apply(mesh.positions());
    if lm <= 0.0 {
        return Ok(vec![0.0; lp.len()]);
    }
    Ok(lp.iter().map(|v| v.norm() / lm).collect())
}

/// One backward-Euler diffusion step `S = (I + lambda_s L)^{-1} K`.
/// `smoother` must be built with the desired `lambda_s`.
pub fn smooth_field(k: &[f64], smoother: &DiffusionSystem) -> Result<Vec<f64>> {
    smoother.solve_scalar(k)
}

/// Shrinks the current mean edge length by `clamp(S_mean / S_i, 0, 1)`.
pub fn adaptive_target(mesh: &TriMesh, smoother: &DiffusionSystem) -> Result<EdgeLengthTarget> {
    let l = mean_edge_lengths(mesh);
    let k = curvature_magnitudes(mesh, smoother.laplacian())?;
    let s = smooth_field(&k, smoother)?;
    Ok(EdgeLengthTarget {
        lengths: scale_by_smoothed_field(&l, &s),
        kind: TargetKind::Adaptive,
    })
}

/// `l ⊙ clamp(mean(S) ⊘ S)` with the degenerate cases pinned: non-positive
/// `S_i` keeps its length, and an all-zero field leaves every length alone.
pub(crate) fn scale_by_smoothed_field(l: &[f64], s: &[f64]) -> Vec<f64> {
    let s_mean = s.iter().sum::<f64>() / s.len().max(1) as f64;
    if !(s_mean > 0.0) {
        log::info!("smoothed curvature field is flat; adaptive target equals current lengths");
        return l.to_vec();
    }
    let mut negative = 0usize;
    let out = l
        .iter()
        .zip(s)
        .map(|(&li, &si)| {
            if si < 0.0 {
                negative += 1;
            }
            let ratio = if si > 0.0 { (s_mean / si).clamp(0.0, 1.0) } else { 1.0 };
            li * ratio
        })
        .collect();
    if negative > 0 {
        log::warn!("{negative} vertices have a negative smoothed curvature; ratio set to 1");
    }
    out
}
