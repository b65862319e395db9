//! Voxel booleans used to cross-check proxy CSG.

use serde::{Deserialize, Serialize};

use crate::geometry::{TriangleMesh, Vec3};
use crate::part_analysis::OrientedBox;

/// Analytic constructive solid over boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Box(OrientedBox),
    Union(Box<Shape>, Box<Shape>),
    Difference(Box<Shape>, Box<Shape>),
    Intersection(Box<Shape>, Box<Shape>),
}

type Intervals = Vec<(f64, f64)>;

fn normalize(mut v: Intervals) -> Intervals {
    v.retain(|(a, b)| b > a);
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Intervals = Vec::with_capacity(v.len());
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn intersect(a: &Intervals, b: &Intervals) -> Intervals {
    let mut out = Vec::new();
    for &(a0, a1) in a {
        for &(b0, b1) in b {
            let (lo, hi) = (a0.max(b0), a1.min(b1));
            if hi > lo {
                out.push((lo, hi));
            }
        }
    }
    normalize(out)
}

fn subtract(a: &Intervals, b: &Intervals) -> Intervals {
    let mut out = Vec::new();
    for &(a0, a1) in a {
        let mut cur = a0;
        for &(b0, b1) in b {
            if b1 <= cur || b0 >= a1 {
                continue;
            }
            if b0 > cur {
                out.push((cur, b0));
            }
            cur = cur.max(b1);
        }
        if cur < a1 {
            out.push((cur, a1));
        }
    }
    normalize(out)
}

impl Shape {
    pub fn union(a: Shape, b: Shape) -> Shape {
        Shape::Union(Box::new(a), Box::new(b))
    }

    pub fn difference(a: Shape, b: Shape) -> Shape {
        Shape::Difference(Box::new(a), Box::new(b))
    }

    pub fn intersection(a: Shape, b: Shape) -> Shape {
        Shape::Intersection(Box::new(a), Box::new(b))
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        match self {
            Shape::Box(b) => b.contains(p, 0.0),
            Shape::Union(a, b) => a.contains(p) || b.contains(p),
            Shape::Difference(a, b) => a.contains(p) && !b.contains(p),
            Shape::Intersection(a, b) => a.contains(p) && b.contains(p),
        }
    }

    /// Axis-aligned bounds of the positive boxes.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        match self {
            Shape::Box(b) => {
                let c = b.corners();
                let lo = c.iter().fold(Vec3::repeat(f64::INFINITY), |m, p| m.inf(p));
                let hi = c.iter().fold(Vec3::repeat(f64::NEG_INFINITY), |m, p| m.sup(p));
                (lo, hi)
            }
            Shape::Union(a, b) => {
                let ((l0, h0), (l1, h1)) = (a.bounds(), b.bounds());
                (l0.inf(&l1), h0.sup(&h1))
            }
            Shape::Difference(a, _) => a.bounds(),
            Shape::Intersection(a, b) => {
                let ((l0, h0), (l1, h1)) = (a.bounds(), b.bounds());
                (l0.sup(&l1), h0.inf(&h1))
            }
        }
    }

    /// Parameter intervals of the vertical line through `(x, y)` inside the shape.
    fn column(&self, x: f64, y: f64) -> Intervals {
        match self {
            Shape::Box(b) => {
                let o = Vec3::new(x, y, 0.0) - b.center;
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    let (a, d) = (b.axes[k].dot(&o), b.axes[k].z);
                    let h = b.half_extents[k];
                    if d.abs() < 1e-300 {
                        if a.abs() > h {
                            return Vec::new();
                        }
                        continue;
                    }
                    let (t0, t1) = ((-h - a) / d, (h - a) / d);
                    lo = lo.max(t0.min(t1));
                    hi = hi.min(t0.max(t1));
                }
                normalize(vec![(lo, hi)])
            }
            Shape::Union(a, b) => {
                let mut v = a.column(x, y);
                v.extend(b.column(x, y));
                normalize(v)
            }
            Shape::Difference(a, b) => subtract(&a.column(x, y), &b.column(x, y)),
            Shape::Intersection(a, b) => intersect(&a.column(x, y), &b.column(x, y)),
        }
    }
}

/// Inside intervals of a closed mesh along the vertical line through `(x, y)`, by winding.
fn mesh_column(tris: &[[Vec3; 3]], x: f64, y: f64) -> Intervals {
    let mut hits: Vec<(f64, i32)> = Vec::new();
    for t in tris {
        let [a, b, c] = t;
        let d = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
        if d.abs() < 1e-300 {
            continue;
        }
        let l1 = ((x - a.x) * (c.y - a.y) - (c.x - a.x) * (y - a.y)) / d;
        let l2 = ((b.x - a.x) * (y - a.y) - (x - a.x) * (b.y - a.y)) / d;
        let l0 = 1.0 - l1 - l2;
        if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
            continue;
        }
        let z = l0 * a.z + l1 * b.z + l2 * c.z;
        // Outward normal pointing down means the line enters here.
        hits.push((z, if d < 0.0 { 1 } else { -1 }));
    }
    hits.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut out = Vec::new();
    let mut wind = 0;
    let mut start = 0.0;
    for (z, s) in hits {
        let before = wind;
        wind += s;
        if before == 0 && wind != 0 {
            start = z;
        } else if before != 0 && wind == 0 {
            out.push((start, z));
        }
    }
    normalize(out)
}

fn count_centers(iv: &Intervals, z0: f64, dz: f64, n: usize, inside: &mut [bool]) {
    for (k, v) in inside.iter_mut().enumerate().take(n) {
        let z = z0 + (k as f64 + 0.5) * dz;
        *v = iv.iter().any(|&(a, b)| z >= a && z < b);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelComparison {
    pub resolution: usize,
    pub shape_voxels: usize,
    pub mesh_voxels: usize,
    pub intersection: usize,
    pub union: usize,
}

impl VoxelComparison {
    pub fn iou(&self) -> f64 {
        if self.union == 0 {
            1.0
        } else {
            self.intersection as f64 / self.union as f64
        }
    }
}

/// Voxelizes `shape` and `mesh` on a `res`^3 grid over the shape bounds and compares them.
pub fn compare_voxels(shape: &Shape, mesh: &TriangleMesh, res: usize) -> VoxelComparison {
    let (mut lo, mut hi) = shape.bounds();
    let (mlo, mhi) = mesh.aabb();
    lo = lo.inf(&mlo);
    hi = hi.sup(&mhi);
    // Pad by an irrational share so voxel centers avoid mesh edges.
    let pad = (hi - lo) * (0.01 * std::f64::consts::FRAC_1_SQRT_2);
    lo -= pad;
    hi += pad;
    let d = (hi - lo) / res as f64;
    let tris: Vec<[Vec3; 3]> = (0..mesh.faces().len()).map(|f| mesh.triangle(f)).collect();
    let mut cmp = VoxelComparison {
        resolution: res,
        shape_voxels: 0,
        mesh_voxels: 0,
        intersection: 0,
        union: 0,
    };
    let (mut a, mut b) = (vec![false; res], vec![false; res]);
    for ix in 0..res {
        let x = lo.x + (ix as f64 + 0.5) * d.x;
        let col: Vec<[Vec3; 3]> = tris
            .iter()
            .filter(|t| t.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) <= x && t.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) >= x)
            .copied()
            .collect();
        for iy in 0..res {
            let y = lo.y + (iy as f64 + 0.5) * d.y;
            count_centers(&shape.column(x, y), lo.z, d.z, res, &mut a);
            count_centers(&mesh_column(&col, x, y), lo.z, d.z, res, &mut b);
            for k in 0..res {
                cmp.shape_voxels += a[k] as usize;
                cmp.mesh_voxels += b[k] as usize;
                cmp.intersection += (a[k] && b[k]) as usize;
                cmp.union += (a[k] || b[k]) as usize;
            }
        }
    }
    cmp
}
