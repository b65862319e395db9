//! Bounding volume hierarchy over mesh triangles for ray and closest-point queries.

use super::{TriangleMesh, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    // Leaf: range into `order`; interior: child indices.
    start: usize,
    count: usize,
    left: usize,
    right: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub face: usize,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    tris: Vec<[Vec3; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Bvh {
        let tris: Vec<[Vec3; 3]> = (0..mesh.faces().len()).map(|f| mesh.triangle(f)).collect();
        let mut bvh = Bvh {
            order: (0..tris.len()).collect(),
            tris,
            nodes: Vec::new(),
        };
        if !bvh.tris.is_empty() {
            bvh.build_node(0, bvh.tris.len());
        }
        bvh
    }

    fn bounds(&self, start: usize, count: usize) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &f in &self.order[start..start + count] {
            for v in &self.tris[f] {
                lo = lo.inf(v);
                hi = hi.sup(v);
            }
        }
        (lo, hi)
    }

    fn build_node(&mut self, start: usize, count: usize) -> usize {
        let (lo, hi) = self.bounds(start, count);
        let idx = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            start,
            count,
            left: 0,
            right: 0,
        });
        if count <= LEAF_SIZE {
            return idx;
        }
        let ext = hi - lo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let tris = &self.tris;
        let centroid = |f: usize| (tris[f][0][axis] + tris[f][1][axis] + tris[f][2][axis]) / 3.0;
        self.order[start..start + count].sort_by(|&a, &b| centroid(a).total_cmp(&centroid(b)).then(a.cmp(&b)));
        let half = count / 2;
        let left = self.build_node(start, half);
        let right = self.build_node(start + half, count - half);
        let node = &mut self.nodes[idx];
        node.count = 0;
        node.left = left;
        node.right = right;
        idx
    }

    pub fn triangle(&self, face: usize) -> &[Vec3; 3] {
        &self.tris[face]
    }

    /// First hit along `origin + t * dir` with `t > t_min`, ignoring `skip_face`.
    pub fn ray_cast(&self, origin: &Vec3, dir: &Vec3, t_min: f64, skip_face: Option<usize>) -> Option<RayHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<RayHit> = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            let limit = best.map_or(f64::INFINITY, |h| h.t);
            if !ray_box(origin, &inv, &node.lo, &node.hi, limit) {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start..node.start + node.count] {
                    if Some(f) == skip_face {
                        continue;
                    }
                    if let Some(t) = ray_triangle(origin, dir, &self.tris[f]) {
                        if t > t_min && t < best.map_or(f64::INFINITY, |h| h.t) {
                            best = Some(RayHit { t, face: f });
                        }
                    }
                }
            } else {
                stack.push(node.left);
                stack.push(node.right);
            }
        }
        best
    }

    /// Closest surface point to `p`: (point, face, distance).
    pub fn closest_point(&self, p: &Vec3) -> Option<(Vec3, usize, f64)> {
        self.closest_point_within(p, f64::INFINITY)
    }

    /// Like [`Bvh::closest_point`] but ignores surface farther than `max_dist`.
    pub fn closest_point_within(&self, p: &Vec3, max_dist: f64) -> Option<(Vec3, usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best_d2 = if max_dist.is_finite() { max_dist * max_dist } else { f64::INFINITY };
        let mut best: Option<(Vec3, usize)> = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if box_dist2(p, &node.lo, &node.hi) > best_d2 {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start..node.start + node.count] {
                    let q = closest_on_triangle(p, &self.tris[f]);
                    let d2 = (q - p).norm_squared();
                    if d2 < best_d2 || (d2 == best_d2 && best.is_none()) {
                        best_d2 = d2;
                        best = Some((q, f));
                    }
                }
            } else {
                let (l, r) = (node.left, node.right);
                let dl = box_dist2(p, &self.nodes[l].lo, &self.nodes[l].hi);
                let dr = box_dist2(p, &self.nodes[r].lo, &self.nodes[r].hi);
                // Visit the nearer child first.
                if dl < dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
        }
        best.map(|(q, f)| (q, f, best_d2.sqrt()))
    }
}

fn ray_box(o: &Vec3, inv: &Vec3, lo: &Vec3, hi: &Vec3, t_max: f64) -> bool {
    let mut t0: f64 = 0.0;
    let mut t1 = t_max;
    for k in 0..3 {
        let mut a = (lo[k] - o[k]) * inv[k];
        let mut b = (hi[k] - o[k]) * inv[k];
        if a.is_nan() || b.is_nan() {
            // Ray parallel to and on the slab boundary.
            if o[k] < lo[k] || o[k] > hi[k] {
                return false;
            }
            continue;
        }
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        t0 = t0.max(a);
        t1 = t1.min(b);
        if t0 > t1 * (1.0 + 1e-12) + 1e-15 {
            return false;
        }
    }
    true
}

fn box_dist2(p: &Vec3, lo: &Vec3, hi: &Vec3) -> f64 {
    let mut d2 = 0.0;
    for k in 0..3 {
        let v = if p[k] < lo[k] {
            lo[k] - p[k]
        } else if p[k] > hi[k] {
            p[k] - hi[k]
        } else {
            0.0
        };
        d2 += v * v;
    }
    d2
}

/// Möller–Trumbore; returns the ray parameter of the hit.
pub(crate) fn ray_triangle(o: &Vec3, d: &Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    let scale = e1.norm() * e2.norm() * d.norm();
    if det.abs() <= 1e-14 * scale {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = o - tri[0];
    let u = s.dot(&p) * inv_det;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv_det;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    Some(e2.dot(&q) * inv_det)
}

/// Closest point on a triangle (Ericson, Real-Time Collision Detection 5.1.5).
pub(crate) fn closest_on_triangle(p: &Vec3, tri: &[Vec3; 3]) -> Vec3 {
    let [a, b, c] = tri;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + v * ab;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + w * ac;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + w * (c - b);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_surface_seeded;
    use crate::geometry::test_shapes::box_mesh;
    use proptest::prelude::*;

    fn brute_closest(mesh: &TriangleMesh, p: &Vec3) -> f64 {
        (0..mesh.faces().len())
            .map(|f| (closest_on_triangle(p, &mesh.triangle(f)) - p).norm())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn ray_crosses_box() {
        let m = box_mesh(Vec3::zeros(), Vec3::new(2.0, 1.0, 0.5));
        let bvh = Bvh::build(&m);
        let hit = bvh.ray_cast(&Vec3::new(0.1, 0.1, -0.25), &Vec3::z(), 1e-9, None).unwrap();
        assert!((hit.t - 0.5).abs() < 1e-12);
        assert!(bvh.ray_cast(&Vec3::new(5.0, 0.0, 0.0), &Vec3::z(), 1e-9, None).is_none());
    }

    #[test]
    fn closest_point_on_face_and_corner() {
        let m = box_mesh(Vec3::zeros(), Vec3::repeat(1.0));
        let bvh = Bvh::build(&m);
        let (_, _, d) = bvh.closest_point(&Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert!((d - 1.5).abs() < 1e-12);
        let (q, _, d) = bvh.closest_point(&Vec3::repeat(1.5)).unwrap();
        assert!((q - Vec3::repeat(0.5)).norm() < 1e-12);
        assert!((d - 3f64.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn closest_matches_brute_force(px in -2.0f64..2.0, py in -2.0f64..2.0, pz in -2.0f64..2.0) {
            let boxes = [
                box_mesh(Vec3::zeros(), Vec3::new(1.0, 0.3, 0.2)),
                box_mesh(Vec3::new(0.4, 0.5, 0.1), Vec3::new(0.2, 0.9, 0.6)),
            ];
            let m = TriangleMesh::merged(boxes.iter()).unwrap();
            let bvh = Bvh::build(&m);
            let p = Vec3::new(px, py, pz);
            let (_, _, d) = bvh.closest_point(&p).unwrap();
            prop_assert!((d - brute_closest(&m, &p)).abs() < 1e-12);
        }
    }

    #[test]
    fn samples_are_on_surface() {
        let m = box_mesh(Vec3::new(1.0, 2.0, 3.0), Vec3::new(0.3, 0.4, 0.5));
        let bvh = Bvh::build(&m);
        for s in sample_surface_seeded(&m, 200, 9).unwrap() {
            assert!(bvh.closest_point(&s.position).unwrap().2 < 1e-12);
        }
    }
}
