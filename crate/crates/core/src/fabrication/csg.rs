//! Polygon BSP-tree booleans for box-like proxies.

use tracing::debug;

use crate::error::Result;
use crate::geometry::{TriangleMesh, Vec3};
use crate::part_analysis::OrientedBox;

const PLANE_EPS: f64 = 1e-10;
const WELD_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Plane {
    n: Vec3,
    w: f64,
}

impl Plane {
    fn flip(&mut self) {
        self.n = -self.n;
        self.w = -self.w;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<Vec3>,
    plane: Plane,
}

impl Polygon {
    fn new(vertices: Vec<Vec3>) -> Option<Polygon> {
        // Newell normal is robust for slightly non-planar input.
        let mut n = Vec3::zeros();
        let k = vertices.len();
        for i in 0..k {
            let (a, b) = (vertices[i], vertices[(i + 1) % k]);
            n += Vec3::new((a.y - b.y) * (a.z + b.z), (a.z - b.z) * (a.x + b.x), (a.x - b.x) * (a.y + b.y));
        }
        let len = n.norm();
        if k < 3 || len < 1e-300 {
            return None;
        }
        let n = n / len;
        let c = vertices.iter().sum::<Vec3>() / k as f64;
        Some(Polygon {
            plane: Plane { n, w: n.dot(&c) },
            vertices,
        })
    }

    fn flip(&mut self) {
        self.vertices.reverse();
        self.plane.flip();
    }
}

const COPLANAR: u8 = 0;
const FRONT: u8 = 1;
const BACK: u8 = 2;
const SPANNING: u8 = 3;

fn split_polygon(
    plane: &Plane,
    poly: &Polygon,
    coplanar_front: &mut Vec<Polygon>,
    coplanar_back: &mut Vec<Polygon>,
    front: &mut Vec<Polygon>,
    back: &mut Vec<Polygon>,
) {
    let mut kind = 0u8;
    let types: Vec<u8> = poly
        .vertices
        .iter()
        .map(|v| {
            let t = plane.n.dot(v) - plane.w;
            let ty = if t < -PLANE_EPS {
                BACK
            } else if t > PLANE_EPS {
                FRONT
            } else {
                COPLANAR
            };
            kind |= ty;
            ty
        })
        .collect();
    match kind {
        COPLANAR => {
            if plane.n.dot(&poly.plane.n) > 0.0 {
                coplanar_front.push(poly.clone());
            } else {
                coplanar_back.push(poly.clone());
            }
        }
        FRONT => front.push(poly.clone()),
        BACK => back.push(poly.clone()),
        _ => {
            let (mut f, mut b) = (Vec::new(), Vec::new());
            let k = poly.vertices.len();
            for i in 0..k {
                let j = (i + 1) % k;
                let (ti, tj) = (types[i], types[j]);
                let (vi, vj) = (poly.vertices[i], poly.vertices[j]);
                if ti != BACK {
                    f.push(vi);
                }
                if ti != FRONT {
                    b.push(vi);
                }
                if (ti | tj) == SPANNING {
                    let t = (plane.w - plane.n.dot(&vi)) / plane.n.dot(&(vj - vi));
                    let v = vi + (vj - vi) * t;
                    f.push(v);
                    b.push(v);
                }
            }
            if f.len() >= 3 {
                front.push(Polygon {
                    vertices: f,
                    plane: poly.plane,
                });
            }
            if b.len() >= 3 {
                back.push(Polygon {
                    vertices: b,
                    plane: poly.plane,
                });
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Node {
    plane: Option<Plane>,
    front: Option<Box<Node>>,
    back: Option<Box<Node>>,
    polygons: Vec<Polygon>,
}

impl Node {
    fn new(polygons: Vec<Polygon>) -> Node {
        let mut n = Node::default();
        n.build(polygons);
        n
    }

    fn invert(&mut self) {
        for p in &mut self.polygons {
            p.flip();
        }
        if let Some(pl) = &mut self.plane {
            pl.flip();
        }
        if let Some(f) = &mut self.front {
            f.invert();
        }
        if let Some(b) = &mut self.back {
            b.invert();
        }
        std::mem::swap(&mut self.front, &mut self.back);
    }

    fn clip_polygons(&self, polygons: Vec<Polygon>) -> Vec<Polygon> {
        let Some(plane) = self.plane else {
            return polygons;
        };
        let (mut front, mut back) = (Vec::new(), Vec::new());
        for p in &polygons {
            let (mut cf, mut cb) = (Vec::new(), Vec::new());
            split_polygon(&plane, p, &mut cf, &mut cb, &mut front, &mut back);
            front.extend(cf);
            back.extend(cb);
        }
        let front = match &self.front {
            Some(f) => f.clip_polygons(front),
            None => front,
        };
        let back = match &self.back {
            Some(b) => b.clip_polygons(back),
            None => Vec::new(),
        };
        let mut out = front;
        out.extend(back);
        out
    }

    fn clip_to(&mut self, other: &Node) {
        self.polygons = other.clip_polygons(std::mem::take(&mut self.polygons));
        if let Some(f) = &mut self.front {
            f.clip_to(other);
        }
        if let Some(b) = &mut self.back {
            b.clip_to(other);
        }
    }

    fn all_polygons(&self) -> Vec<Polygon> {
        let mut out = self.polygons.clone();
        if let Some(f) = &self.front {
            out.extend(f.all_polygons());
        }
        if let Some(b) = &self.back {
            out.extend(b.all_polygons());
        }
        out
    }

    fn build(&mut self, polygons: Vec<Polygon>) {
        if polygons.is_empty() {
            return;
        }
        let plane = *self.plane.get_or_insert(polygons[0].plane);
        let (mut front, mut back) = (Vec::new(), Vec::new());
        let (mut cf, mut cb) = (Vec::new(), Vec::new());
        for p in &polygons {
            split_polygon(&plane, p, &mut cf, &mut cb, &mut front, &mut back);
        }
        self.polygons.extend(cf);
        self.polygons.extend(cb);
        if !front.is_empty() {
            self.front.get_or_insert_with(Default::default).build(front);
        }
        if !back.is_empty() {
            self.back.get_or_insert_with(Default::default).build(back);
        }
    }
}

/// A closed polygonal solid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Solid {
    pub polygons: Vec<Polygon>,
}

impl Solid {
    pub fn from_box(b: &OrientedBox) -> Solid {
        let c = b.corners();
        // Corner index bits: axis 0, 1, 2. Faces wound outward for a right-handed frame.
        let quads = [[0, 4, 6, 2], [1, 3, 7, 5], [0, 1, 5, 4], [2, 6, 7, 3], [0, 2, 3, 1], [4, 5, 7, 6]];
        let polygons = quads
            .iter()
            .filter_map(|q| Polygon::new(q.iter().map(|&k| c[k]).collect()))
            .collect();
        let mut s = Solid { polygons };
        if s.volume() < 0.0 {
            for p in &mut s.polygons {
                p.flip();
            }
        }
        s
    }

    pub fn from_mesh(mesh: &TriangleMesh) -> Solid {
        Solid {
            polygons: (0..mesh.faces().len())
                .filter_map(|f| Polygon::new(mesh.triangle(f).to_vec()))
                .collect(),
        }
    }

    pub fn union(&self, other: &Solid) -> Solid {
        let mut a = Node::new(self.polygons.clone());
        let mut b = Node::new(other.polygons.clone());
        a.clip_to(&b);
        b.clip_to(&a);
        b.invert();
        b.clip_to(&a);
        b.invert();
        a.build(b.all_polygons());
        Solid { polygons: a.all_polygons() }
    }

    pub fn subtract(&self, other: &Solid) -> Solid {
        let mut a = Node::new(self.polygons.clone());
        let mut b = Node::new(other.polygons.clone());
        a.invert();
        a.clip_to(&b);
        b.clip_to(&a);
        b.invert();
        b.clip_to(&a);
        b.invert();
        a.build(b.all_polygons());
        a.invert();
        Solid { polygons: a.all_polygons() }
    }

    pub fn intersect(&self, other: &Solid) -> Solid {
        let mut a = Node::new(self.polygons.clone());
        let mut b = Node::new(other.polygons.clone());
        a.invert();
        b.clip_to(&a);
        b.invert();
        a.clip_to(&b);
        b.clip_to(&a);
        a.build(b.all_polygons());
        a.invert();
        Solid { polygons: a.all_polygons() }
    }

    /// Signed volume by the divergence theorem.
    pub fn volume(&self) -> f64 {
        let mut v = 0.0;
        for p in &self.polygons {
            let a = p.vertices[0];
            for k in 1..p.vertices.len() - 1 {
                v += a.dot(&p.vertices[k].cross(&p.vertices[k + 1]));
            }
        }
        v / 6.0
    }

    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    /// Triangulates after welding vertices and splitting edges at T-junctions.
    pub fn to_mesh(&self) -> Result<TriangleMesh> {
        let mut verts: Vec<Vec3> = Vec::new();
        let index = |p: &Vec3, verts: &mut Vec<Vec3>| -> usize {
            if let Some(k) = verts.iter().position(|q| (q - p).norm() <= WELD_EPS) {
                return k;
            }
            verts.push(*p);
            verts.len() - 1
        };
        let mut loops: Vec<Vec<usize>> = Vec::new();
        for p in &self.polygons {
            let mut l: Vec<usize> = Vec::new();
            for v in &p.vertices {
                let k = index(v, &mut verts);
                if l.last() != Some(&k) {
                    l.push(k);
                }
            }
            while l.len() > 1 && l.first() == l.last() {
                l.pop();
            }
            if l.len() >= 3 {
                loops.push(l);
            }
        }
        // Insert every vertex lying inside a loop edge.
        for l in &mut loops {
            let mut out = Vec::with_capacity(l.len());
            for e in 0..l.len() {
                let (a, b) = (l[e], l[(e + 1) % l.len()]);
                out.push(a);
                let (pa, pb) = (verts[a], verts[b]);
                let d = pb - pa;
                let len2 = d.norm_squared();
                let mut on: Vec<(f64, usize)> = verts
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != a && k != b)
                    .filter_map(|(k, q)| {
                        let t = (q - pa).dot(&d) / len2;
                        if t <= 0.0 || t >= 1.0 {
                            return None;
                        }
                        ((pa + d * t - q).norm() <= WELD_EPS).then_some((t, k))
                    })
                    .collect();
                on.sort_by(|x, y| x.0.total_cmp(&y.0));
                out.extend(on.into_iter().map(|(_, k)| k));
            }
            *l = out;
        }
        let mut faces = Vec::new();
        for l in &loops {
            let pts: Vec<Vec3> = l.iter().map(|&k| verts[k]).collect();
            let n = pts.len();
            let collinear = (0..n).any(|k| {
                let (a, b, c) = (pts[(k + n - 1) % n], pts[k], pts[(k + 1) % n]);
                (b - a).cross(&(c - b)).norm() <= WELD_EPS * (b - a).norm().max(WELD_EPS)
            });
            if n == 3 || !collinear {
                for k in 1..n - 1 {
                    faces.push([l[0], l[k], l[k + 1]]);
                }
            } else {
                let c = pts.iter().sum::<Vec3>() / n as f64;
                verts.push(c);
                let ci = verts.len() - 1;
                for k in 0..n {
                    faces.push([ci, l[k], l[(k + 1) % n]]);
                }
            }
        }
        // Welding can collapse sliver polygons left by the BSP splits.
        let (mesh, dropped) = TriangleMesh::new_lenient(verts, faces)?;
        if dropped > 0 {
            debug!("dropped {dropped} sliver triangles");
        }
        Ok(mesh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aabox(c: Vec3, h: [f64; 3]) -> OrientedBox {
        OrientedBox {
            center: c,
            axes: [Vec3::x(), Vec3::y(), Vec3::z()],
            half_extents: h,
        }
    }

    #[test]
    fn box_volume_and_closure() {
        let s = Solid::from_box(&aabox(Vec3::zeros(), [0.5, 0.25, 0.1]));
        assert!((s.volume() - 0.1).abs() < 1e-15);
        let m = s.to_mesh().unwrap();
        assert!(m.is_closed_manifold());
        assert!((m.signed_volume() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn booleans_match_box_arithmetic() {
        let a = Solid::from_box(&aabox(Vec3::zeros(), [0.5, 0.5, 0.5]));
        let b = Solid::from_box(&aabox(Vec3::new(0.5, 0.0, 0.0), [0.25, 0.25, 0.25]));
        let u = a.union(&b);
        let d = a.subtract(&b);
        let i = a.intersect(&b);
        assert!((i.volume() - 0.0625).abs() < 1e-12);
        assert!((d.volume() - (1.0 - 0.0625)).abs() < 1e-12);
        assert!((u.volume() - (1.0 + 0.0625)).abs() < 1e-12);
        for s in [u, d, i] {
            let m = s.to_mesh().unwrap();
            assert!(m.is_closed_manifold());
            assert!((m.signed_volume() - s.volume()).abs() < 1e-12);
        }
    }
}
