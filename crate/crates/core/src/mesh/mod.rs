//! Triangle meshes with fixed connectivity.
//!
//! A [`TriMesh`] pairs a shared, immutable [`Topology`] (faces plus derived
//! adjacency) with its own vertex positions. Deforming a mesh only ever
//! replaces positions, so every deformed copy keeps pointer-equal topology
//! with the template it came from.

mod normals;
mod obj;
mod primitives;

use std::sync::Arc;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use normals::{face_normal_sums, vertex_normals, vertex_normals_checked, NormalSums};
pub(crate) use normals::DEGENERATE_NORMAL;
pub use obj::{fmt_sig9, load_obj, parse_obj, save_obj, write_obj};
pub use primitives::{icosphere, jittered_uv_sphere, MAX_ICOSPHERE_SUBDIVISIONS};

pub type Vec3 = Vector3<f64>;

/// Face list and the adjacency derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    faces: Vec<[usize; 3]>,
    one_ring: Vec<Vec<usize>>,
    vertex_faces: Vec<Vec<usize>>,
    edges: Vec<[usize; 2]>,
}

impl Topology {
    pub fn new(num_vertices: usize, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mut one_ring = vec![Vec::new(); num_vertices];
        let mut vertex_faces = vec![Vec::new(); num_vertices];
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= num_vertices {
                    return Err(Error::MalformedMesh(format!(
                        "face {fi} references vertex {v} but the mesh has {num_vertices} vertices"
                    )));
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::MalformedMesh(format!(
                    "face {fi} repeats a vertex: {f:?}"
                )));
            }
            for k in 0..3 {
                let a = f[k];
                let b = f[(k + 1) % 3];
                one_ring[a].push(b);
                one_ring[b].push(a);
                vertex_faces[a].push(fi);
            }
        }
        for ring in &mut one_ring {
            ring.sort_unstable();
            ring.dedup();
        }
        let edges = one_ring
            .iter()
            .enumerate()
            .flat_map(|(i, ring)| ring.iter().filter(move |&&j| j > i).map(move |&j| [i, j]))
            .collect();
        Ok(Self {
            faces,
            one_ring,
            vertex_faces,
            edges,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.one_ring.len()
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Sorted neighbor indices of every vertex.
    pub fn one_ring(&self) -> &[Vec<usize>] {
        &self.one_ring
    }

    /// Indices of the faces incident to every vertex.
    pub fn vertex_faces(&self) -> &[Vec<usize>] {
        &self.vertex_faces
    }

    /// Unique undirected edges as `[i, j]` with `i < j`.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Index of the first vertex with no neighbors, if any.
    pub fn first_isolated_vertex(&self) -> Option<usize> {
        self.one_ring.iter().position(Vec::is_empty)
    }
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    positions: Vec<Vec3>,
    topology: Arc<Topology>,
}

impl TriMesh {
    /// Builds a mesh, validating face indices and deriving adjacency.
    pub fn new(positions: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let topology = Topology::new(positions.len(), faces)?;
        Ok(Self {
            positions,
            topology: Arc::new(topology),
        })
    }

    /// A mesh sharing this mesh's topology but with different positions.
    pub fn with_positions(&self, positions: Vec<Vec3>) -> Result<Self> {
        crate::error::check_len(self.num_vertices(), positions.len())?;
        Ok(Self {
            positions,
            topology: Arc::clone(&self.topology),
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.positions.len()
    }

    pub fn num_faces(&self) -> usize {
        self.topology.faces.len()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut [Vec3] {
        &mut self.positions
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        self.topology.faces()
    }

    pub fn one_ring(&self) -> &[Vec<usize>] {
        self.topology.one_ring()
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    /// True if both meshes have identical face arrays and vertex counts.
    pub fn same_connectivity(&self, other: &TriMesh) -> bool {
        self.num_vertices() == other.num_vertices() && self.faces() == other.faces()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.topology.faces[face];
        [self.positions[a], self.positions[b], self.positions[c]]
    }

    /// Lengths of all unique edges, in [`Topology::edges`] order.
    pub fn edge_lengths(&self) -> Vec<f64> {
        self.topology
            .edges
            .iter()
            .map(|&[i, j]| (self.positions[i] - self.positions[j]).norm())
            .collect()
    }

    /// Mean and coefficient of variation of the unique edge lengths.
    pub fn edge_length_stats(&self) -> (f64, f64) {
        mean_and_cv(&self.edge_lengths())
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.num_faces())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    /// Applies `x -> rotation * x + translation` to every vertex.
    pub fn transformed(&self, rotation: &nalgebra::Matrix3<f64>, translation: &Vec3) -> TriMesh {
        let positions = self
            .positions
            .iter()
            .map(|p| rotation * p + translation)
            .collect();
        TriMesh {
            positions,
            topology: Arc::clone(&self.topology),
        }
    }
}

pub(crate) fn mean_and_cv(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
    (mean, cv)
}

#[cfg(test)]
pub(crate) mod test_meshes {
    use super::*;

    pub fn triangle() -> TriMesh {
        TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    /// Regular tetrahedron with unit edges, outward-facing triangles.
    pub fn tetrahedron() -> TriMesh {
        let s = 1.0 / (2.0 * 2f64.sqrt());
        let positions = vec![
            Vec3::new(1.0, 1.0, 1.0) * s,
            Vec3::new(1.0, -1.0, -1.0) * s,
            Vec3::new(-1.0, 1.0, -1.0) * s,
            Vec3::new(-1.0, -1.0, 1.0) * s,
        ];
        TriMesh::new(positions, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]]).unwrap()
    }

    /// `n x n` vertex grid in the z = 0 plane with unit spacing.
    pub fn grid(n: usize) -> TriMesh {
        let mut positions = Vec::new();
        for y in 0..n {
            for x in 0..n {
                positions.push(Vec3::new(x as f64, y as f64, 0.0));
            }
        }
        let mut faces = Vec::new();
        for y in 0..n - 1 {
            for x in 0..n - 1 {
                let a = y * n + x;
                faces.push([a, a + 1, a + n + 1]);
                faces.push([a, a + n + 1, a + n]);
            }
        }
        TriMesh::new(positions, faces).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_meshes::*;
    use super::*;

    #[test]
    fn triangle_one_ring_is_complete() {
        let m = triangle();
        assert_eq!(m.one_ring()[0], vec![1, 2]);
        assert_eq!(m.one_ring()[1], vec![0, 2]);
        assert_eq!(m.one_ring()[2], vec![0, 1]);
    }

    #[test]
    fn tetrahedron_valence_three() {
        let m = tetrahedron();
        assert!(m.one_ring().iter().all(|r| r.len() == 3));
        assert_eq!(m.topology().edges().len(), 6);
    }

    #[test]
    fn rejects_bad_faces() {
        let p = vec![Vec3::zeros(); 3];
        assert!(matches!(
            TriMesh::new(p.clone(), vec![[0, 1, 3]]),
            Err(Error::MalformedMesh(_))
        ));
        assert!(matches!(
            TriMesh::new(p, vec![[0, 1, 1]]),
            Err(Error::MalformedMesh(_))
        ));
    }

    #[test]
    fn adjacency_is_symmetric() {
        let m = icosphere(2, 1.0).unwrap();
        for (i, ring) in m.one_ring().iter().enumerate() {
            for &j in ring {
                assert!(m.one_ring()[j].binary_search(&i).is_ok());
            }
        }
    }

    #[test]
    fn with_positions_shares_topology() {
        let m = tetrahedron();
        let moved = m.with_positions(vec![Vec3::zeros(); 4]).unwrap();
        assert!(Arc::ptr_eq(m.topology(), moved.topology()));
        assert!(m.with_positions(vec![Vec3::zeros(); 3]).is_err());
    }
}
