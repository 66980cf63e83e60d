//! Uniform-weight discrete Laplacian and the quadratic smoothness energies
//! built from it.

use crate::error::{check_len, Error, Result};
use crate::mesh::{TriMesh, Vec3};
use crate::sparse::CsrMatrix;

/// `(L p)_i = p_i - (1/|N_i|) sum_{j in N_i} p_j`.
#[derive(Debug, Clone)]
pub struct SparseLaplacian {
    matrix: CsrMatrix,
    degrees: Vec<usize>,
}

impl SparseLaplacian {
    pub fn new(mesh: &TriMesh) -> Result<Self> {
        if let Some(i) = mesh.topology().first_isolated_vertex() {
            return Err(Error::MalformedMesh(format!(
                "vertex {i} has no neighbors; the Laplacian is undefined there"
            )));
        }
        let degrees: Vec<usize> = mesh.one_ring().iter().map(Vec::len).collect();
        let rows = mesh
            .one_ring()
            .iter()
            .enumerate()
            .map(|(i, ring)| {
                let w = 1.0 / ring.len() as f64;
                let mut row: Vec<(usize, f64)> = ring.iter().map(|&j| (j, -w)).collect();
                row.push((i, 1.0));
                row
            })
            .collect();
        Ok(Self {
            matrix: CsrMatrix::from_rows(rows),
            degrees,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Neighbor counts `|N_i|`.
    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn apply_scalar(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(x)
    }

    pub fn apply(&self, p: &[Vec3]) -> Vec<Vec3> {
        (0..self.dim())
            .map(|i| self.matrix.row(i).map(|(j, w)| p[j] * w).sum())
            .collect()
    }

    pub fn apply_transpose(&self, p: &[Vec3]) -> Vec<Vec3> {
        let mut out = vec![Vec3::zeros(); self.dim()];
        for (i, pi) in p.iter().enumerate() {
            for (j, w) in self.matrix.row(i) {
                out[j] += pi * w;
            }
        }
        out
    }
}

/// `E = 1/2 tr(p^T L p)`.
pub fn laplacian_energy(lap: &SparseLaplacian, p: &[Vec3]) -> Result<f64> {
    check_len(lap.dim(), p.len())?;
    let lp = lap.apply(p);
    Ok(0.5 * p.iter().zip(&lp).map(|(a, b)| a.dot(b)).sum::<f64>())
}

/// `dE/dp = 1/2 (L + L^T) p`.
pub fn laplacian_gradient(lap: &SparseLaplacian, p: &[Vec3]) -> Result<Vec<Vec3>> {
    check_len(lap.dim(), p.len())?;
    let lp = lap.apply(p);
    let ltp = lap.apply_transpose(p);
    Ok(lp.iter().zip(&ltp).map(|(a, b)| (a + b) * 0.5).collect())
}

/// `E = 1/2 sum_i |(L p)_i|^2`.
pub fn bilaplacian_energy(lap: &SparseLaplacian, p: &[Vec3]) -> Result<f64> {
    check_len(lap.dim(), p.len())?;
    Ok(0.5 * lap.apply(p).iter().map(Vec3::norm_squared).sum::<f64>())
}

/// `dE/dp = L^T L p`.
pub fn bilaplacian_gradient(lap: &SparseLaplacian, p: &[Vec3]) -> Result<Vec<Vec3>> {
    check_len(lap.dim(), p.len())?;
    Ok(lap.apply_transpose(&lap.apply(p)))
}
