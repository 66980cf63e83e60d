use super::{TriMesh, Vec3};

/// Unnormalized per-face normals `(b - a) x (c - a)`; the magnitude is twice the face area.
pub fn face_normal_sums(mesh: &TriMesh) -> Vec<Vec3> {
    (0..mesh.num_faces())
        .map(|f| {
            let [a, b, c] = mesh.triangle(f);
            (b - a).cross(&(c - a))
        })
        .collect()
}

/// Per-vertex sums of incident unnormalized face normals.
#[derive(Debug, Clone)]
pub struct NormalSums {
    pub sums: Vec<Vec3>,
    pub faces: Vec<Vec3>,
}

impl NormalSums {
    pub fn new(mesh: &TriMesh) -> Self {
        let faces = face_normal_sums(mesh);
        let sums = mesh
            .topology()
            .vertex_faces()
            .iter()
            .map(|incident| incident.iter().map(|&f| faces[f]).sum())
            .collect();
        Self { sums, faces }
    }
}

/// Fallback used where the accumulated normal vanishes.
pub(crate) const FALLBACK_NORMAL: Vec3 = Vec3::new(0.0, 0.0, 1.0);

/// Magnitudes below this count as a vanished normal.
pub(crate) const DEGENERATE_NORMAL: f64 = 1e-300;

/// Area-weighted unit vertex normals plus a flag per vertex whose accumulated
/// normal vanished (those get [`FALLBACK_NORMAL`]).
pub fn vertex_normals_checked(mesh: &TriMesh) -> (Vec<Vec3>, Vec<bool>) {
    let sums = NormalSums::new(mesh).sums;
    let mut degenerate = vec![false; sums.len()];
    let normals = sums
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let len = s.norm();
            if len > DEGENERATE_NORMAL && len.is_finite() {
                s / len
            } else {
                degenerate[i] = true;
                FALLBACK_NORMAL
            }
        })
        .collect();
    (normals, degenerate)
}

/// Area-weighted unit vertex normals. Vertices whose incident faces have no
/// net area get a fixed fallback normal and a warning is logged.
pub fn vertex_normals(mesh: &TriMesh) -> Vec<Vec3> {
    let (normals, degenerate) = vertex_normals_checked(mesh);
    let bad = degenerate.iter().filter(|&&d| d).count();
    if bad > 0 {
        log::warn!("{bad} vertices have a vanishing normal; substituting (0, 0, 1)");
    }
    normals
}
