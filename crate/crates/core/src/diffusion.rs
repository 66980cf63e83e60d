//! Diffusion re-parameterization `u = (I + lambda L) p`.
//!
//! With uniform weights `L = I - D^{-1} A` (`D` the degree matrix, `A` the
//! adjacency), so `I + lambda L = D^{-1} M` with `M = (1 + lambda) D - lambda A`
//! symmetric positive definite. Both `(I + lambda L)^{-1}` and its transpose
//! therefore reduce to solves with one Cholesky factor of `M`:
//!
//! * `p = (I + lambda L)^{-1} u`  solves `M p = D u`
//! * `g_u = (I + lambda L)^{-T} g_p`  solves `M z = g_p` then `g_u = D z`

use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::laplacian::SparseLaplacian;
use crate::mesh::Vec3;
use crate::par::{self, Execution};
use crate::sparse::{CsrMatrix, EnvelopeCholesky};

#[derive(Debug, Clone)]
pub struct DiffusionSystem {
    lambda: f64,
    laplacian: Arc<SparseLaplacian>,
    degrees: Vec<f64>,
    /// `None` when `lambda == 0`.
    factor: Option<EnvelopeCholesky>,
    exec: Execution,
}

impl DiffusionSystem {
    /// Factorizes `I + lambda L` once.
    pub fn factorize(laplacian: Arc<SparseLaplacian>, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!(
                "diffusion time must be finite and non-negative, got {lambda}"
            )));
        }
        let degrees: Vec<f64> = laplacian.degrees().iter().map(|&d| d as f64).collect();
        let factor = if lambda == 0.0 {
            None
        } else {
            let l = laplacian.matrix();
            let rows = (0..l.dim())
                .map(|i| {
                    l.row(i)
                        .map(|(j, w)| {
                            let identity = if i == j { 1.0 } else { 0.0 };
                            (j, degrees[i] * (identity + lambda * w))
                        })
                        .collect()
                })
                .collect();
            let m = CsrMatrix::from_rows(rows);
            let asym = m.asymmetry();
            if asym > 1e-9 * (1.0 + lambda) {
                return Err(Error::Solver(format!(
                    "scaled diffusion matrix is not symmetric (max deviation {asym:e})"
                )));
            }
            Some(EnvelopeCholesky::factorize(&m)?)
        };
        Ok(Self {
            lambda,
            laplacian,
            degrees,
            factor,
            exec: Execution::default(),
        })
    }

    /// Controls whether the three coordinate columns are solved concurrently.
    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.degrees.len()
    }

    pub fn laplacian(&self) -> &Arc<SparseLaplacian> {
        &self.laplacian
    }

    /// `(I + lambda L) x`
    pub fn apply_scalar(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), x.len())?;
        if self.lambda == 0.0 {
            return Ok(x.to_vec());
        }
        let lx = self.laplacian.apply_scalar(x);
        Ok(x.iter().zip(lx).map(|(a, b)| a + self.lambda * b).collect())
    }

    /// `(I + lambda L)^{-1} b`
    pub fn solve_scalar(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), b.len())?;
        match &self.factor {
            None => Ok(b.to_vec()),
            Some(f) => {
                let rhs: Vec<f64> = b.iter().zip(&self.degrees).map(|(v, d)| v * d).collect();
                Ok(f.solve(&rhs))
            }
        }
    }

    /// `(I + lambda L)^{-T} g`
    pub fn solve_transpose_scalar(&self, g: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), g.len())?;
        match &self.factor {
            None => Ok(g.to_vec()),
            Some(f) => Ok(f.solve(g).into_iter().zip(&self.degrees).map(|(z, d)| z * d).collect()),
        }
    }

    fn columnwise(
        &self,
        x: &[Vec3],
        op: impl Fn(&[f64]) -> Result<Vec<f64>> + Sync + Send,
    ) -> Result<Vec<Vec3>> {
        check_len(self.dim(), x.len())?;
        let cols = par::map_range(self.exec, 3, |c| {
            let column: Vec<f64> = x.iter().map(|v| v[c]).collect();
            op(&column)
        });
        let [cx, cy, cz]: [Vec<f64>; 3] = cols
            .into_iter()
            .collect::<Result<Vec<_>>>()?
            .try_into()
            .expect("three columns");
        let out: Vec<Vec3> = (0..self.dim()).map(|i| Vec3::new(cx[i], cy[i], cz[i])).collect();
        if out.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::Solver("diffusion solve produced non-finite values".into()));
        }
        Ok(out)
    }

    /// `u = (I + lambda L) p`
    pub fn to_u(&self, p: &[Vec3]) -> Result<Vec<Vec3>> {
        check_len(self.dim(), p.len())?;
        if self.lambda == 0.0 {
            return Ok(p.to_vec());
        }
        let lp = self.laplacian.apply(p);
        Ok(p.iter().zip(lp).map(|(a, b)| a + b * self.lambda).collect())
    }

    /// `p = (I + lambda L)^{-1} u`
    pub fn to_p(&self, u: &[Vec3]) -> Result<Vec<Vec3>> {
        if self.factor.is_none() {
            check_len(self.dim(), u.len())?;
            return Ok(u.to_vec());
        }
        self.columnwise(u, |c| self.solve_scalar(c))
    }

    /// Chain rule through `p(u)`: `g_u = (I + lambda L)^{-T} g_p`.
    pub fn pullback_gradient(&self, g_p: &[Vec3]) -> Result<Vec<Vec3>> {
        if self.factor.is_none() {
            check_len(self.dim(), g_p.len())?;
            return Ok(g_p.to_vec());
        }
        self.columnwise(g_p, |c| self.solve_transpose_scalar(c))
    }
}
