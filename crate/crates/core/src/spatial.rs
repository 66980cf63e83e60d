//! Exact closest-point queries against a triangle mesh.

use crate::error::{Error, Result};
use crate::mesh::{vertex_normals, TriMesh, Vec3};
use crate::par::{self, Execution};

/// Closest point on triangle `abc` to `p` with its barycentric coordinates.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let sum = va + vb + vc;
    if !(sum > 0.0) || !sum.is_finite() {
        return closest_on_edges(p, a, b, c);
    }
    let v = vb / sum;
    let w = vc / sum;
    let u = 1.0 - v - w;
    (a * u + b * v + c * w, [u, v, w])
}

/// Fallback for zero-area triangles: best of the three segments.
fn closest_on_edges(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, [f64; 3]) {
    let seg = |x: &Vec3, y: &Vec3| {
        let d = y - x;
        let len2 = d.norm_squared();
        let t = if len2 > 0.0 { ((p - x).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
        (x + d * t, t)
    };
    let (pab, t1) = seg(a, b);
    let (pbc, t2) = seg(b, c);
    let (pca, t3) = seg(c, a);
    let candidates = [
        (pab, [1.0 - t1, t1, 0.0]),
        (pbc, [0.0, 1.0 - t2, t2]),
        (pca, [t3, 0.0, 1.0 - t3]),
    ];
    candidates
        .into_iter()
        .min_by(|x, y| (x.0 - p).norm_squared().total_cmp(&(y.0 - p).norm_squared()))
        .expect("three candidates")
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn merge(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&o.min),
            max: self.max.sup(&o.max),
        }
    }

    fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 4;

/// Bounding-volume hierarchy over a mesh's triangles.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Self {
        let boxes: Vec<Aabb> = (0..mesh.num_faces())
            .map(|f| {
                let mut b = Aabb::empty();
                for v in mesh.triangle(f) {
                    b.grow(&v);
                }
                b
            })
            .collect();
        let centroids: Vec<Vec3> = boxes.iter().map(|b| (b.min + b.max) * 0.5).collect();
        let mut order: Vec<usize> = (0..boxes.len()).collect();
        let mut nodes = Vec::with_capacity(2 * boxes.len() / LEAF_SIZE + 1);
        if !order.is_empty() {
            Self::build_node(&mut nodes, &mut order, 0, boxes.len(), &boxes, &centroids);
        }
        Self { nodes, order }
    }

    fn build_node(
        nodes: &mut Vec<Node>,
        order: &mut [usize],
        start: usize,
        end: usize,
        boxes: &[Aabb],
        centroids: &[Vec3],
    ) -> usize {
        let bounds = order[start..end]
            .iter()
            .fold(Aabb::empty(), |acc, &t| acc.merge(&boxes[t]));
        let idx = nodes.len();
        if end - start <= LEAF_SIZE {
            nodes.push(Node::Leaf { bounds, start, end });
            return idx;
        }
        let mut cb = Aabb::empty();
        for &t in &order[start..end] {
            cb.grow(&centroids[t]);
        }
        let extent = cb.max - cb.min;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b))
        });
        nodes.push(Node::Leaf { bounds, start: 0, end: 0 });
        let left = Self::build_node(nodes, order, start, mid, boxes, centroids);
        let right = Self::build_node(nodes, order, mid, end, boxes, centroids);
        nodes[idx] = Node::Inner { bounds, left, right };
        idx
    }

    /// Nearest triangle to `p`: `(triangle, point, barycentric, distance²)`.
    fn nearest(&self, mesh: &TriMesh, p: &Vec3) -> Option<(usize, Vec3, [f64; 3], f64)> {
        let mut best: Option<(usize, Vec3, [f64; 3], f64)> = None;
        let mut best_d2 = f64::INFINITY;
        let mut stack = Vec::with_capacity(64);
        if !self.nodes.is_empty() {
            stack.push(0usize);
        }
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds().distance_squared(p) > best_d2 {
                continue;
            }
            match *node {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[start..end] {
                        let [a, b, c] = mesh.triangle(t);
                        let (q, bary) = closest_point_on_triangle(p, &a, &b, &c);
                        let d2 = (q - p).norm_squared();
                        let better = match best {
                            None => true,
                            Some((bt, ..)) => d2 < best_d2 || (d2 == best_d2 && t < bt),
                        };
                        if better {
                            best_d2 = d2;
                            best = Some((t, q, bary, d2));
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[left].bounds().distance_squared(p);
                    let dr = self.nodes[right].bounds().distance_squared(p);
                    // Visit the closer child first (pushed last).
                    if dl <= dr {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                }
            }
        }
        best
    }
}

/// A query result on the target surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub point: Vec3,
    pub normal: Vec3,
    pub triangle: usize,
    pub barycentric: [f64; 3],
    pub distance: f64,
}

/// Target mesh, its vertex normals, and a hierarchy for nearest queries.
#[derive(Debug, Clone)]
pub struct SurfaceIndex {
    mesh: TriMesh,
    normals: Vec<crate::mesh::Vec3>,
    bvh: Bvh,
}

impl SurfaceIndex {
    pub fn build(target: &TriMesh) -> Result<Self> {
        if target.num_faces() == 0 {
            return Err(Error::Config("target mesh has no triangles".into()));
        }
        Ok(Self {
            mesh: target.clone(),
            normals: vertex_normals(target),
            bvh: Bvh::build(target),
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    /// Normal interpolated at barycentric coordinates on a triangle.
    pub fn interpolated_normal(&self, triangle: usize, bary: &[f64; 3]) -> Vec3 {
        let f = self.mesh.faces()[triangle];
        let n = self.normals[f[0]] * bary[0] + self.normals[f[1]] * bary[1] + self.normals[f[2]] * bary[2];
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            let [a, b, c] = self.mesh.triangle(triangle);
            (b - a).cross(&(c - a)).try_normalize(0.0).unwrap_or(Vec3::z())
        }
    }

    pub fn closest(&self, p: &Vec3) -> SurfaceHit {
        let (triangle, point, barycentric, d2) = self
            .bvh
            .nearest(&self.mesh, p)
            .expect("index holds at least one triangle");
        SurfaceHit {
            point,
            normal: self.interpolated_normal(triangle, &barycentric),
            triangle,
            barycentric,
            distance: d2.sqrt(),
        }
    }
}

/// Per-source-vertex closest surface data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Correspondence {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub triangles: Vec<usize>,
    pub barycentric: Vec<[f64; 3]>,
}

impl Correspondence {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn closest_points(index: &SurfaceIndex, p: &[Vec3]) -> Correspondence {
    closest_points_with(index, p, Execution::default())
}

pub fn closest_points_with(index: &SurfaceIndex, p: &[Vec3], exec: Execution) -> Correspondence {
    let hits = par::map_slice(exec, p, |x| index.closest(x));
    let mut c = Correspondence {
        points: Vec::with_capacity(hits.len()),
        normals: Vec::with_capacity(hits.len()),
        triangles: Vec::with_capacity(hits.len()),
        barycentric: Vec::with_capacity(hits.len()),
    };
    for h in hits {
        c.points.push(h.point);
        c.normals.push(h.normal);
        c.triangles.push(h.triangle);
        c.barycentric.push(h.barycentric);
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{icosphere, jittered_uv_sphere, test_meshes};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(mesh: &TriMesh, p: &Vec3) -> f64 {
        (0..mesh.num_faces())
            .map(|f| {
                let [a, b, c] = mesh.triangle(f);
                (closest_point_on_triangle(p, &a, &b, &c).0 - p).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn single_triangle_queries() {
        let m = test_meshes::triangle();
        let idx = SurfaceIndex::build(&m).unwrap();
        let center = Vec3::new(1.0 / 3.0, 1.0 / 3.0, 0.0);
        let hit = idx.closest(&center);
        assert!(hit.distance < 1e-15);
        let above = Vec3::new(0.2, 0.3, 0.7);
        let hit = idx.closest(&above);
        assert!((hit.point - Vec3::new(0.2, 0.3, 0.0)).norm() < 1e-15);
        assert!((hit.distance - 0.7).abs() < 1e-15);
    }

    #[test]
    fn vertex_query_has_unit_barycentric() {
        let m = icosphere(2, 1.0).unwrap();
        let idx = SurfaceIndex::build(&m).unwrap();
        let v = 17;
        let hit = idx.closest(&m.positions()[v]);
        assert!(hit.distance < 1e-15);
        let f = m.faces()[hit.triangle];
        let k = f.iter().position(|&x| x == v).unwrap();
        assert!((hit.barycentric[k] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force() {
        let m = jittered_uv_sphere(12, 20, 0.4, 99).unwrap();
        let idx = SurfaceIndex::build(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p = Vec3::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let hit = idx.closest(&p);
            assert!((hit.distance - brute_force(&m, &p)).abs() < 1e-12);
            let s: f64 = hit.barycentric.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(hit.barycentric.iter().all(|&b| b >= -1e-12 && b <= 1.0 + 1e-12));
            let [a, b, c] = m.triangle(hit.triangle);
            let (again, _) = closest_point_on_triangle(&p, &a, &b, &c);
            assert!((again - hit.point).norm() < 1e-10);
        }
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let m = icosphere(3, 1.0).unwrap();
        let idx = SurfaceIndex::build(&m).unwrap();
        let q: Vec<Vec3> = jittered_uv_sphere(10, 17, 0.5, 4).unwrap().positions().iter().map(|p| p * 1.1).collect();
        assert_eq!(
            closest_points_with(&idx, &q, Execution::Sequential),
            closest_points_with(&idx, &q, Execution::Parallel)
        );
    }

    #[test]
    fn degenerate_triangle_is_handled() {
        let a = Vec3::zeros();
        let b = Vec3::x();
        let c = Vec3::x() * 2.0;
        let (q, bary) = closest_point_on_triangle(&Vec3::new(1.5, 1.0, 0.0), &a, &b, &c);
        assert!((q - Vec3::new(1.5, 0.0, 0.0)).norm() < 1e-12);
        assert!((bary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_target_rejected() {
        let m = TriMesh::new(vec![Vec3::zeros()], vec![]).unwrap();
        assert!(matches!(SurfaceIndex::build(&m), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn distance_is_one_lipschitz(
            x in prop::array::uniform3(-2.0f64..2.0),
            y in prop::array::uniform3(-2.0f64..2.0),
        ) {
            let m = icosphere(2, 1.0).unwrap();
            let idx = SurfaceIndex::build(&m).unwrap();
            let (x, y) = (Vec3::from(x), Vec3::from(y));
            let dx = idx.closest(&x).distance;
            let dy = idx.closest(&y).distance;
            prop_assert!((dx - dy).abs() <= (x - y).norm() + 1e-12);
        }
    }
}
