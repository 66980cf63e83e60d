//! Registration losses against frozen correspondences.

use crate::error::{check_len, Error, Result};
use crate::mesh::{NormalSums, TriMesh, Vec3};
use crate::par::{self, Execution};
use crate::spatial::Correspondence;

/// Distances below this are treated as on-surface (zero Chamfer gradient).
pub const CHAMFER_KINK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LossWithGradient {
    pub value: f64,
    pub gradient: Vec<Vec3>,
}

/// `D_c = (1/N) sum_i |p_i - q_i|` with `q` held fixed.
pub fn chamfer_loss(p: &[Vec3], corr: &Correspondence) -> Result<LossWithGradient> {
    check_len(p.len(), corr.len())?;
    let n = p.len().max(1) as f64;
    let mut value = 0.0;
    let gradient = p
        .iter()
        .zip(&corr.points)
        .map(|(pi, qi)| {
            let d = pi - qi;
            let len = d.norm();
            value += len;
            if len < CHAMFER_KINK {
                Vec3::zeros()
            } else {
                d / (len * n)
            }
        })
        .collect();
    Ok(LossWithGradient {
        value: value / n,
        gradient,
    })
}

pub fn normal_loss(mesh: &TriMesh, corr: &Correspondence) -> Result<LossWithGradient> {
    normal_loss_with(mesh, corr, Execution::default())
}

/// `D_n = (1/N) sum_i (1 - n_i . t_i)` where `n_i` is the area-weighted unit
/// normal of the mesh (differentiated through the face cross products) and
/// `t_i` the frozen target normal.
pub fn normal_loss_with(mesh: &TriMesh, corr: &Correspondence, exec: Execution) -> Result<LossWithGradient> {
    check_len(mesh.num_vertices(), corr.len())?;
    let n = mesh.num_vertices().max(1) as f64;
    let p = mesh.positions();
    let sums = NormalSums::new(mesh);

    // Adjoint of the loss with respect to each vertex's accumulated normal.
    let mut degenerate = 0usize;
    let mut value = 0.0;
    let mut adjoint = Vec::with_capacity(p.len());
    for (s, t) in sums.sums.iter().zip(&corr.normals) {
        let len = s.norm();
        if !(len > crate::mesh::DEGENERATE_NORMAL) || !len.is_finite() {
            degenerate += 1;
            value += 1.0;
            adjoint.push(Vec3::zeros());
            continue;
        }
        let unit = s / len;
        let dot = unit.dot(t);
        value += 1.0 - dot;
        adjoint.push(-(t - unit * dot) / (len * n));
    }
    if degenerate > 0 {
        log::warn!("{degenerate} vertices have a vanishing normal; they contribute a constant 1");
    }

    let faces = mesh.faces();
    let face_adjoint: Vec<Vec3> = faces.iter().map(|f| adjoint[f[0]] + adjoint[f[1]] + adjoint[f[2]]).collect();
    let vertex_faces = mesh.topology().vertex_faces();
    let gradient = par::map_range(exec, p.len(), |v| {
        vertex_faces[v]
            .iter()
            .map(|&fi| {
                let f = faces[fi];
                let k = f.iter().position(|&x| x == v).expect("incident face contains vertex");
                let next = p[f[(k + 1) % 3]];
                let prev = p[f[(k + 2) % 3]];
                (next - prev).cross(&face_adjoint[fi])
            })
            .sum()
    });
    Ok(LossWithGradient {
        value: value / n,
        gradient,
    })
}

/// `(1/B) sum_i |p[idx_i] - k_i|^2`, gradient nonzero only at landmark vertices.
pub fn landmark_loss(p: &[Vec3], indices: &[usize], targets: &[Vec3]) -> Result<LossWithGradient> {
    if indices.is_empty() {
        return Err(Error::Config("landmark loss needs at least one landmark".into()));
    }
    if indices.len() != targets.len() {
        return Err(Error::Config(format!(
            "{} template landmarks but {} target landmarks",
            indices.len(),
            targets.len()
        )));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= p.len()) {
        return Err(Error::Config(format!(
            "landmark vertex {bad} out of range for a mesh with {} vertices",
            p.len()
        )));
    }
    let b = indices.len() as f64;
    let mut gradient = vec![Vec3::zeros(); p.len()];
    let mut value = 0.0;
    for (&i, k) in indices.iter().zip(targets) {
        let d = p[i] - k;
        value += d.norm_squared();
        gradient[i] += d * (2.0 / b);
    }
    Ok(LossWithGradient {
        value: value / b,
        gradient,
    })
}
