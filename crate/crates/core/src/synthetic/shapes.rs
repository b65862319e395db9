//! Closed primitive meshes used by the generator and by tests.

use nalgebra::Matrix3;

use crate::geometry::{TriangleMesh, Vec3};

const BOX_FACES: [[usize; 3]; 12] = [
    [0, 2, 3],
    [0, 3, 1],
    [4, 5, 7],
    [4, 7, 6],
    [0, 1, 5],
    [0, 5, 4],
    [2, 6, 7],
    [2, 7, 3],
    [0, 4, 6],
    [0, 6, 2],
    [1, 3, 7],
    [1, 7, 5],
];

/// Box with the given frame (columns need not be right-handed) and half extents.
pub fn oriented_box(center: Vec3, axes: [Vec3; 3], half: [f64; 3]) -> TriangleMesh {
    let mut v = Vec::with_capacity(8);
    for i in 0..8 {
        let mut p = center;
        for k in 0..3 {
            let s = if i >> k & 1 == 0 { -1.0 } else { 1.0 };
            p += axes[k] * (s * half[k]);
        }
        v.push(p);
    }
    let flip = Matrix3::from_columns(&axes).determinant() < 0.0;
    let faces = BOX_FACES.iter().map(|&[a, b, c]| if flip { [a, c, b] } else { [a, b, c] }).collect();
    TriangleMesh::new(v, faces).expect("box with positive extents")
}

pub fn axis_box(center: Vec3, size: Vec3) -> TriangleMesh {
    oriented_box(center, [Vec3::x(), Vec3::y(), Vec3::z()], [size.x / 2.0, size.y / 2.0, size.z / 2.0])
}

/// A straight bar from `p0` to `p1`; `w` across the horizontal side direction, `h` across the other.
pub fn bar(p0: Vec3, p1: Vec3, w: f64, h: f64) -> TriangleMesh {
    let d = p1 - p0;
    let len = d.norm();
    let dir = d / len;
    let (side, up) = cross_frame(&dir);
    oriented_box((p0 + p1) / 2.0, [dir, side, up], [len / 2.0, w / 2.0, h / 2.0])
}

fn cross_frame(dir: &Vec3) -> (Vec3, Vec3) {
    let hint = if dir.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
    let side = dir.cross(&hint).normalize();
    (side, side.cross(dir).normalize())
}

/// Sweeps a `t x t` square section along the sampled curve `points` (open ends capped).
pub fn swept_bar(points: &[Vec3], t: f64) -> TriangleMesh {
    let n = points.len();
    assert!(n >= 2, "curve needs two points");
    let h = t / 2.0;
    let mut verts = Vec::with_capacity(4 * n);
    // Rotation-minimizing frames by parallel transport.
    let tangent = |i: usize| {
        let a = points[i.saturating_sub(1)];
        let b = points[(i + 1).min(n - 1)];
        (b - a).normalize()
    };
    let t0 = tangent(0);
    let (mut side, _) = cross_frame(&t0);
    for i in 0..n {
        let tan = tangent(i);
        side = (side - tan * tan.dot(&side)).normalize();
        let up = tan.cross(&side);
        for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
            verts.push(points[i] + side * (sx * h) + up * (sy * h));
        }
    }
    let mut faces = Vec::new();
    for i in 0..n - 1 {
        for k in 0..4 {
            let a = 4 * i + k;
            let b = 4 * i + (k + 1) % 4;
            let c = 4 * (i + 1) + (k + 1) % 4;
            let d = 4 * (i + 1) + k;
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    let last = 4 * (n - 1);
    faces.push([0, 2, 1]);
    faces.push([0, 3, 2]);
    faces.push([last, last + 1, last + 2]);
    faces.push([last, last + 2, last + 3]);
    let mesh = TriangleMesh::new(verts, faces).expect("swept bar");
    if mesh.signed_volume() < 0.0 {
        let flipped = mesh.faces().iter().map(|&[a, b, c]| [a, c, b]).collect();
        TriangleMesh::new(mesh.vertices().to_vec(), flipped).expect("swept bar")
    } else {
        mesh
    }
}

/// Points on an elliptic arc `c + a cos(s) u + b sin(s) v` for `s` in `[s0, s1]`.
pub fn ellipse_points(c: Vec3, u: Vec3, v: Vec3, a: f64, b: f64, s0: f64, s1: f64, segments: usize) -> Vec<Vec3> {
    (0..=segments)
        .map(|k| {
            let s = s0 + (s1 - s0) * k as f64 / segments as f64;
            c + u * (a * s.cos()) + v * (b * s.sin())
        })
        .collect()
}
