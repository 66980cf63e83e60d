//! Landmark files, weighted rotational alignment, and transfer of corpus
//! landmarks onto the template sphere.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};
use crate::par::{self, Execution};

/// Landmark count of the face annotation scheme.
pub const DEFAULT_LANDMARK_COUNT: usize = 38;
/// Landmark that gets the large alignment weight (tip of the nose).
pub const DEFAULT_ANCHOR_INDEX: usize = 16;
pub const DEFAULT_ANCHOR_WEIGHT: f64 = 1.0e4;

/// One record of a landmark file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LandmarkEntry {
    Vertex(usize),
    Point(Vec3),
}

/// Parses `i <vertex>` / `p <x> <y> <z>` lines; `#` starts a comment.
pub fn parse_landmarks(text: &str, origin: &Path) -> Result<Vec<LandmarkEntry>> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] => {}
            ["i", idx] => {
                let i = idx
                    .parse()
                    .map_err(|_| err(lineno, format!("bad vertex index `{idx}`")))?;
                out.push(LandmarkEntry::Vertex(i));
            }
            ["p", x, y, z] => {
                let mut c = [0.0; 3];
                for (slot, tok) in c.iter_mut().zip([x, y, z]) {
                    *slot = tok
                        .parse()
                        .map_err(|_| err(lineno, format!("bad coordinate `{tok}`")))?;
                }
                out.push(LandmarkEntry::Point(Vec3::from(c)));
            }
            _ => return Err(err(lineno, format!("expected `i <index>` or `p <x> <y> <z>`, got `{line}`"))),
        }
    }
    Ok(out)
}

pub fn load_landmarks(path: impl AsRef<Path>) -> Result<Vec<LandmarkEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_landmarks(&text, path)
}

/// Resolves entries to positions; `i` records need `mesh`.
pub fn landmark_positions(entries: &[LandmarkEntry], mesh: Option<&TriMesh>) -> Result<Vec<Vec3>> {
    entries
        .iter()
        .map(|e| match *e {
            LandmarkEntry::Point(p) => Ok(p),
            LandmarkEntry::Vertex(i) => {
                let m = mesh.ok_or_else(|| {
                    Error::Config("vertex landmarks need a mesh to resolve against".into())
                })?;
                m.positions().get(i).copied().ok_or_else(|| {
                    Error::Config(format!(
                        "landmark vertex {i} out of range for a mesh with {} vertices",
                        m.num_vertices()
                    ))
                })
            }
        })
        .collect()
}

/// Vertex indices of the entries; fails on free points.
pub fn landmark_indices(entries: &[LandmarkEntry]) -> Result<Vec<usize>> {
    entries
        .iter()
        .map(|e| match *e {
            LandmarkEntry::Vertex(i) => Ok(i),
            LandmarkEntry::Point(_) => Err(Error::Config(
                "template landmarks must be vertex indices (`i <index>` lines)".into(),
            )),
        })
        .collect()
}

/// Ordered landmark positions with per-landmark alignment weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub indices: Option<Vec<usize>>,
}

impl LandmarkSet {
    pub fn new(points: Vec<Vec3>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Config(format!(
                "{} landmarks but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Config(format!("landmark weights must be positive, got {w}")));
        }
        Ok(Self {
            points,
            weights,
            indices: None,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// All ones except `anchor_weight` at `anchor_index`.
pub fn anchor_weights(count: usize, anchor_index: usize, anchor_weight: f64) -> Result<Vec<f64>> {
    if anchor_index >= count {
        return Err(Error::Config(format!(
            "anchor landmark {anchor_index} out of range for {count} landmarks"
        )));
    }
    if !(anchor_weight.is_finite() && anchor_weight > 0.0) {
        return Err(Error::Config(format!("anchor weight must be positive, got {anchor_weight}")));
    }
    let mut w = vec![1.0; count];
    w[anchor_index] = anchor_weight;
    Ok(w)
}

/// Nearest vertex of `mesh` for every point, by exhaustive search.
pub fn nearest_vertices(mesh: &TriMesh, points: &[Vec3]) -> Vec<usize> {
    points
        .iter()
        .map(|q| {
            mesh.positions()
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| (*a - q).norm_squared().total_cmp(&(*b - q).norm_squared()))
                .map(|(i, _)| i)
                .expect("mesh has vertices")
        })
        .collect()
}

/// Index of the fitted vertex closest to each target landmark. Duplicates
/// are allowed but logged.
pub fn bind_landmarks(fitted: &TriMesh, target_landmarks: &[Vec3]) -> Vec<usize> {
    let indices = nearest_vertices(fitted, target_landmarks);
    let mut sorted = indices.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() < indices.len() {
        log::warn!(
            "{} landmarks share a nearest vertex with another landmark",
            indices.len() - sorted.len()
        );
    }
    indices
}

/// Rotation `R` minimizing `sum_i w_i |R x_i - y_i|^2` (no translation, no
/// scale), so that `source` rows times `R^T` land on `reference`. Reflections
/// are corrected so `det R = +1`.
pub fn weighted_alignment(source: &[Vec3], reference: &[Vec3], weights: &[f64]) -> Result<Matrix3<f64>> {
    if source.len() != reference.len() || source.len() != weights.len() {
        return Err(Error::Config(format!(
            "alignment needs equal counts (source {}, reference {}, weights {})",
            source.len(),
            reference.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::Config(format!("alignment weights must be positive, got {w}")));
    }
    let mut h = Matrix3::zeros();
    for ((x, y), w) in source.iter().zip(reference).zip(weights) {
        h += (x * y.transpose()) * *w;
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    let (max_sv, mid_sv) = {
        let mut s = [sv[0], sv[1], sv[2]];
        s.sort_by(|a, b| b.total_cmp(a));
        (s[0], s[1])
    };
    if !(max_sv > 0.0) || mid_sv <= 1e-12 * max_sv {
        return Err(Error::Degenerate(format!(
            "landmark cross-covariance has rank < 2 (singular values {:.3e}, {:.3e}, {:.3e})",
            sv[0], sv[1], sv[2]
        )));
    }
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^T").transpose();
    let mut r = v * u.transpose();
    if r.determinant() < 0.0 {
        let smallest = (0..3).min_by(|&a, &b| sv[a].total_cmp(&sv[b])).unwrap();
        let mut d = Matrix3::identity();
        d[(smallest, smallest)] = -1.0;
        r = v * d * u.transpose();
    }
    Ok(refine_rotation(r, &h))
}

/// Newton steps on the stationarity condition `H R = (H R)^T`. With
/// `H R0 = P exp([w]x)` to first order, `skew(H R0) = [(tr P - P) w]x / 2`.
/// The SVD alone loses a few digits when one weight dominates `H`.
fn refine_rotation(mut r: Matrix3<f64>, h: &Matrix3<f64>) -> Matrix3<f64> {
    for _ in 0..2 {
        let k = h * r;
        let skew = (k - k.transpose()) * 0.5;
        let sym = (k + k.transpose()) * 0.5;
        let rhs = Vec3::new(skew[(2, 1)], skew[(0, 2)], skew[(1, 0)]);
        let a = Matrix3::identity() * sym.trace() - sym;
        let Some(w) = a.lu().solve(&(rhs * 2.0)) else {
            break;
        };
        if !(w.norm() < 1e-6) {
            break;
        }
        r *= nalgebra::Rotation3::new(-w).into_inner();
    }
    r
}

/// One fitting's contribution: the fitted template and its target's landmarks.
#[derive(Debug, Clone)]
pub struct Fitting {
    pub fitted: TriMesh,
    pub target_landmarks: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResampledLandmarks {
    /// Sphere vertex index per landmark.
    pub indices: Vec<usize>,
    /// Sphere positions at those indices.
    pub positions: Vec<Vec3>,
    /// The averaged (unsnapped) landmark positions.
    pub averaged: Vec<Vec3>,
    /// Input position of the fitting used as the alignment reference.
    pub reference: usize,
}

/// Transfers corpus landmarks onto the template sphere: bind each fitting's
/// landmarks to vertices, read those vertices on the undeformed sphere, rotate
/// every set onto the first one, average, and snap to the nearest sphere vertex.
pub fn resample_landmarks(
    sphere: &TriMesh,
    fittings: &[Fitting],
    weights: &[f64],
    exec: Execution,
) -> Result<ResampledLandmarks> {
    let first = fittings
        .first()
        .ok_or_else(|| Error::Config("landmark resampling needs at least one fitting".into()))?;
    let count = first.target_landmarks.len();
    if count == 0 {
        return Err(Error::Config("fittings carry no landmarks".into()));
    }
    for (k, f) in fittings.iter().enumerate() {
        if f.target_landmarks.len() != count {
            return Err(Error::Config(format!(
                "fitting {k} has {} landmarks, expected {count}",
                f.target_landmarks.len()
            )));
        }
        if f.fitted.num_vertices() != sphere.num_vertices() {
            return Err(Error::Config(format!(
                "fitting {k} has {} vertices but the template has {}",
                f.fitted.num_vertices(),
                sphere.num_vertices()
            )));
        }
    }
    if weights.len() != count {
        return Err(Error::Config(format!("{} weights for {count} landmarks", weights.len())));
    }

    let on_sphere: Vec<Vec<Vec3>> = par::map_slice(exec, fittings, |f| {
        bind_landmarks(&f.fitted, &f.target_landmarks)
            .into_iter()
            .map(|i| sphere.positions()[i])
            .collect()
    });
    let reference = &on_sphere[0];
    let aligned: Vec<Vec<Vec3>> = par::map_slice(exec, &on_sphere, |c| {
        let r = weighted_alignment(c, reference, weights)?;
        Ok(c.iter().map(|x| r * x).collect())
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let m = aligned.len() as f64;
    let averaged: Vec<Vec3> = (0..count)
        .map(|k| aligned.iter().map(|set| set[k]).sum::<Vec3>() / m)
        .collect();
    let indices = nearest_vertices(sphere, &averaged);
    let positions = indices.iter().map(|&i| sphere.positions()[i]).collect();
    Ok(ResampledLandmarks {
        indices,
        positions,
        averaged,
        reference: 0,
    })
}

/// Metadata written above resampled landmark records.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampleHeader {
    pub reference: String,
    pub anchor_index: usize,
    pub anchor_weight: f64,
    pub fittings: usize,
}

pub fn write_resampled(header: &ResampleHeader, landmarks: &ResampledLandmarks) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# resampled template landmarks");
    let _ = writeln!(out, "# reference: {}", header.reference);
    let _ = writeln!(out, "# fittings: {}", header.fittings);
    let _ = writeln!(out, "# anchor_index: {}", header.anchor_index);
    let _ = writeln!(out, "# anchor_weight: {}", header.anchor_weight);
    for i in &landmarks.indices {
        let _ = writeln!(out, "i {i}");
    }
    out
}

/// Writes free-point landmarks (`p` records).
pub fn write_point_landmarks(points: &[Vec3]) -> String {
    let mut out = String::new();
    for p in points {
        let _ = writeln!(
            out,
            "p {} {} {}",
            crate::mesh::fmt_sig9(p.x),
            crate::mesh::fmt_sig9(p.y),
            crate::mesh::fmt_sig9(p.z)
        );
    }
    out
}
