use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{TriMesh, Vec3};
use crate::error::{Error, Result};

pub const MAX_ICOSPHERE_SUBDIVISIONS: u32 = 8;

/// Subdivided icosahedron projected onto a sphere. Has `10 * 4^s + 2` vertices.
pub fn icosphere(subdivisions: u32, radius: f64) -> Result<TriMesh> {
    if subdivisions > MAX_ICOSPHERE_SUBDIVISIONS {
        return Err(Error::Config(format!(
            "icosphere subdivisions must be at most {MAX_ICOSPHERE_SUBDIVISIONS}, got {subdivisions}"
        )));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::Config(format!("icosphere radius must be positive, got {radius}")));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut positions: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, positions: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                positions.push(((positions[a] + positions[b]) * 0.5).normalize());
                positions.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut positions);
            let bc = midpoint(b, c, &mut positions);
            let ca = midpoint(c, a, &mut positions);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }

    for p in &mut positions {
        *p = p.normalize() * radius;
    }
    TriMesh::new(positions, faces)
}

/// Latitude/longitude sphere with `rings * segments + 2` vertices whose
/// positions are jittered (tangentially and radially) by up to `jitter`
/// times the local spacing, driven by `seed`. Useful as an irregular closed
/// test mesh with an exact vertex count.
pub fn jittered_uv_sphere(rings: usize, segments: usize, jitter: f64, seed: u64) -> Result<TriMesh> {
    if rings < 1 || segments < 3 {
        return Err(Error::Config(format!(
            "uv sphere needs rings >= 1 and segments >= 3, got {rings} x {segments}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spacing = std::f64::consts::PI / (rings + 1) as f64;
    let mut positions = Vec::with_capacity(rings * segments + 2);
    positions.push(Vec3::new(0.0, 0.0, 1.0));
    for r in 0..rings {
        let theta = spacing * (r + 1) as f64;
        for s in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            positions.push(Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()));
        }
    }
    positions.push(Vec3::new(0.0, 0.0, -1.0));
    let south = positions.len() - 1;
    let ring_vertex = |r: usize, s: usize| 1 + r * segments + (s % segments);

    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring_vertex(0, s), ring_vertex(0, s + 1)]);
    }
    for r in 0..rings - 1 {
        for s in 0..segments {
            let a = ring_vertex(r, s);
            let b = ring_vertex(r + 1, s);
            let c = ring_vertex(r + 1, s + 1);
            let d = ring_vertex(r, s + 1);
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    for s in 0..segments {
        faces.push([south, ring_vertex(rings - 1, s + 1), ring_vertex(rings - 1, s)]);
    }

    if jitter > 0.0 {
        for p in &mut positions {
            let offset = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            *p += offset * (jitter * spacing);
        }
    }
    TriMesh::new(positions, faces)
}
