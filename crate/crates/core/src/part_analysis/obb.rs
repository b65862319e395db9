use nalgebra::{Matrix3, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{ReformError, Result};
use crate::geometry::Vec3;

type Vec2 = Vector2<f64>;

const MAX_ROUNDS: usize = 20;
const REL_IMPROVEMENT: f64 = 1e-8;

/// An oriented box. Axes are orthonormal, right-handed and sorted by
/// descending half extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vec3,
    pub axes: [Vec3; 3],
    pub half_extents: [f64; 3],
}

impl OrientedBox {
    /// Tight box around `points` for the frame given by `axes` (any order).
    pub fn around(points: &[Vec3], axes: [Vec3; 3]) -> OrientedBox {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for k in 0..3 {
                let d = axes[k].dot(p);
                lo[k] = lo[k].min(d);
                hi[k] = hi[k].max(d);
            }
        }
        let mut center = Vec3::zeros();
        let mut half = [0.0; 3];
        for k in 0..3 {
            center += axes[k] * (0.5 * (lo[k] + hi[k]));
            half[k] = 0.5 * (hi[k] - lo[k]);
        }
        OrientedBox {
            center,
            axes,
            half_extents: half,
        }
        .canonical()
    }

    /// Sorts axes by descending extent and makes the frame right-handed.
    pub fn canonical(mut self) -> OrientedBox {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| self.half_extents[b].total_cmp(&self.half_extents[a]).then(a.cmp(&b)));
        let axes = idx.map(|k| self.axes[k].normalize());
        self.half_extents = idx.map(|k| self.half_extents[k]);
        self.axes = [axes[0], axes[1], axes[0].cross(&axes[1]).normalize()];
        self
    }

    pub fn extents(&self) -> [f64; 3] {
        self.half_extents.map(|h| 2.0 * h)
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half_extents.iter().product::<f64>()
    }

    pub fn surface_area(&self) -> f64 {
        let [a, b, c] = self.extents();
        2.0 * (a * b + b * c + a * c)
    }

    pub fn diagonal(&self) -> f64 {
        let [a, b, c] = self.extents();
        (a * a + b * b + c * c).sqrt()
    }

    /// Rotation whose columns are the box axes.
    pub fn rotation(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&self.axes)
    }

    /// Point in box-local coordinates.
    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        self.rotation().transpose() * (p - self.center)
    }

    pub fn contains(&self, p: &Vec3, inflate: f64) -> bool {
        let q = self.to_local(p);
        (0..3).all(|k| q[k].abs() <= self.half_extents[k] + inflate)
    }

    /// Fewer than two nonzero extents: a segment or a point.
    pub fn is_degenerate(&self) -> bool {
        self.half_extents[1] <= 1e-12 * self.half_extents[0].max(1e-300)
    }

    /// The eight corners, indexed by sign bits along axes 0, 1, 2.
    pub fn corners(&self) -> [Vec3; 8] {
        std::array::from_fn(|i| {
            let mut p = self.center;
            for k in 0..3 {
                let s = if i >> k & 1 == 0 { -1.0 } else { 1.0 };
                p += self.axes[k] * (s * self.half_extents[k]);
            }
            p
        })
    }
}

/// Box from the principal axes of the point set.
pub fn pca_obb(points: &[Vec3]) -> Result<OrientedBox> {
    if points.is_empty() {
        return Err(ReformError::Degenerate("cannot fit a box to zero points".into()));
    }
    let mean = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let axes = [0, 1, 2].map(|k| eig.eigenvectors.column(k).into_owned());
    Ok(OrientedBox::around(points, orthonormalize(axes)))
}

fn orthonormalize(axes: [Vec3; 3]) -> [Vec3; 3] {
    let a = axes[0].normalize();
    let b = (axes[1] - a * a.dot(&axes[1])).normalize();
    [a, b, a.cross(&b)]
}

/// Fits an OBB: principal axes first, then per-axis rotating-calipers refinement.
///
/// A second run seeded from the world axes is kept if it ends tighter.
pub fn fit_obb_points(points: &[Vec3]) -> Result<OrientedBox> {
    let pca = pca_obb(points)?;
    let a = refine(points, pca);
    let b = refine(points, OrientedBox::around(points, [Vec3::x(), Vec3::y(), Vec3::z()]));
    Ok(if better(&b, &a) { b } else { a })
}

/// Lexicographic (volume, surface area) comparison with a relative tolerance.
fn better(new: &OrientedBox, old: &OrientedBox) -> bool {
    let (vn, vo) = (new.volume(), old.volume());
    let scale = old.diagonal().powi(3).max(1e-300);
    if vn < vo - REL_IMPROVEMENT * vo.max(1e-12 * scale) {
        return true;
    }
    if vn <= vo + 1e-12 * scale {
        let (an, ao) = (new.surface_area(), old.surface_area());
        return an < ao * (1.0 - REL_IMPROVEMENT);
    }
    false
}

fn refine(points: &[Vec3], start: OrientedBox) -> OrientedBox {
    let mut best = start;
    for _ in 0..MAX_ROUNDS {
        let mut improved = false;
        for k in 0..3 {
            let fixed = best.axes[k];
            let u = best.axes[(k + 1) % 3];
            let v = best.axes[(k + 2) % 3];
            let proj: Vec<Vec2> = points.iter().map(|p| Vec2::new(u.dot(p), v.dot(p))).collect();
            let hull = convex_hull(&proj);
            let Some(rect) = min_area_rect(&hull) else {
                continue;
            };
            let (c, s) = (rect.angle.cos(), rect.angle.sin());
            let nu = u * c + v * s;
            let nv = v * c - u * s;
            let cand = OrientedBox::around(points, [fixed, nu, nv]);
            if better(&cand, &best) {
                best = cand;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    best
}

/// Convex hull (counter-clockwise, no collinear points) by monotone chain.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Vec2, a: &Vec2, b: &Vec2| (a - o).perp(&(b - o));
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// Minimum-area enclosing rectangle of a convex polygon.
#[derive(Debug, Clone, Copy)]
pub struct Rect2 {
    /// Direction angle of the first rectangle side, radians.
    pub angle: f64,
    pub area: f64,
    pub width: f64,
    pub height: f64,
}

/// Rotating calipers over a CCW hull; O(h).
pub fn min_area_rect(hull: &[Vec2]) -> Option<Rect2> {
    let h = hull.len();
    if h == 0 {
        return None;
    }
    if h < 3 {
        let d = if h == 2 { hull[1] - hull[0] } else { Vec2::x() };
        return Some(Rect2 {
            angle: d.y.atan2(d.x),
            area: 0.0,
            width: d.norm(),
            height: 0.0,
        });
    }
    let edge = |i: usize| (hull[(i + 1) % h] - hull[i]).normalize();
    let dot_e = |j: usize, e: &Vec2| hull[j % h].dot(e);
    let dot_n = |j: usize, n: &Vec2| hull[j % h].dot(n);

    let e0 = edge(0);
    let n0 = Vec2::new(-e0.y, e0.x);
    let argbest = |f: &dyn Fn(usize) -> f64| (0..h).max_by(|&a, &b| f(a).total_cmp(&f(b)).then(b.cmp(&a))).unwrap();
    let mut right = argbest(&|j| dot_e(j, &e0));
    let mut top = argbest(&|j| dot_n(j, &n0));
    let mut left = argbest(&|j| -dot_e(j, &e0));

    let mut best: Option<Rect2> = None;
    for i in 0..h {
        let e = edge(i);
        let n = Vec2::new(-e.y, e.x);
        for _ in 0..h {
            if dot_e(right + 1, &e) >= dot_e(right, &e) {
                right += 1;
            } else {
                break;
            }
        }
        for _ in 0..h {
            if dot_n(top + 1, &n) >= dot_n(top, &n) {
                top += 1;
            } else {
                break;
            }
        }
        for _ in 0..h {
            if dot_e(left + 1, &e) <= dot_e(left, &e) {
                left += 1;
            } else {
                break;
            }
        }
        let width = dot_e(right, &e) - dot_e(left, &e);
        let height = dot_n(top, &n) - hull[i].dot(&n);
        let area = width * height;
        if best.map_or(true, |b| area < b.area) {
            best = Some(Rect2 {
                angle: e.y.atan2(e.x),
                area,
                width,
                height,
            });
        }
    }
    best
}

#[cfg(test)]
pub(crate) fn min_area_rect_brute(hull: &[Vec2]) -> Option<Rect2> {
    let h = hull.len();
    if h < 3 {
        return min_area_rect(hull);
    }
    let mut best: Option<Rect2> = None;
    for i in 0..h {
        let e = (hull[(i + 1) % h] - hull[i]).normalize();
        let n = Vec2::new(-e.y, e.x);
        let (mut lo_e, mut hi_e, mut lo_n, mut hi_n) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in hull {
            lo_e = lo_e.min(p.dot(&e));
            hi_e = hi_e.max(p.dot(&e));
            lo_n = lo_n.min(p.dot(&n));
            hi_n = hi_n.max(p.dot(&n));
        }
        let area = (hi_e - lo_e) * (hi_n - lo_n);
        if best.map_or(true, |b| area < b.area) {
            best = Some(Rect2 {
                angle: e.y.atan2(e.x),
                area,
                width: hi_e - lo_e,
                height: hi_n - lo_n,
            });
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn box_points(size: Vec3) -> Vec<Vec3> {
        let h = size / 2.0;
        (0..8)
            .map(|i| {
                Vec3::new(
                    if i & 1 == 0 { -h.x } else { h.x },
                    if i & 2 == 0 { -h.y } else { h.y },
                    if i & 4 == 0 { -h.z } else { h.z },
                )
            })
            .collect()
    }

    #[test]
    fn axis_aligned_box_recovers_itself() {
        let b = fit_obb_points(&box_points(Vec3::new(2.0, 1.0, 0.5))).unwrap();
        let e = b.extents();
        assert!((e[0] - 2.0).abs() < 1e-9 && (e[1] - 1.0).abs() < 1e-9 && (e[2] - 0.5).abs() < 1e-9);
        assert!((b.volume() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rotation_about_z_keeps_extents() {
        let r = Rotation3::from_axis_angle(&Vec3::z_axis(), 30f64.to_radians());
        let pts: Vec<Vec3> = box_points(Vec3::new(2.0, 1.0, 0.5)).iter().map(|p| r * p).collect();
        let e = fit_obb_points(&pts).unwrap().extents();
        assert!((e[0] - 2.0).abs() < 1e-6 && (e[1] - 1.0).abs() < 1e-6 && (e[2] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn l_bracket_refines_below_pca() {
        let mut pts = box_points(Vec3::new(1.0, 0.1, 0.1));
        pts.extend(box_points(Vec3::new(0.1, 0.6, 0.1)).iter().map(|p| p + Vec3::new(0.45, 0.25, 0.0)));
        let pca = pca_obb(&pts).unwrap();
        let fit = fit_obb_points(&pts).unwrap();
        assert!(fit.volume() <= pca.volume() + 1e-9);
        for p in &pts {
            assert!(fit.contains(p, 1e-6));
        }
    }

    #[test]
    fn frame_is_orthonormal_and_right_handed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec3> = (0..50).map(|_| Vec3::new(rng.gen(), rng.gen::<f64>() * 0.3, rng.gen::<f64>() * 2.0)).collect();
        let b = fit_obb_points(&pts).unwrap();
        let r = b.rotation();
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-9);
        assert!((r.determinant() - 1.0).abs() < 1e-9);
        assert!(b.half_extents[0] >= b.half_extents[1] && b.half_extents[1] >= b.half_extents[2]);
    }

    #[test]
    fn collinear_points_give_flagged_box() {
        let pts: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        let b = fit_obb_points(&pts).unwrap();
        assert!(b.is_degenerate());
        assert!((b.extents()[0] - 80f64.sqrt()).abs() < 1e-9);
        assert!(fit_obb_points(&[]).is_err());
    }

    proptest! {
        #[test]
        fn calipers_match_edge_enumeration(pts in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..60)) {
            let pts: Vec<Vec2> = pts.into_iter().map(|(x, y)| Vec2::new(x, y)).collect();
            let hull = convex_hull(&pts);
            prop_assume!(hull.len() >= 3);
            let fast = min_area_rect(&hull).unwrap();
            let slow = min_area_rect_brute(&hull).unwrap();
            prop_assert!((fast.area - slow.area).abs() <= 1e-12 * slow.area.max(1.0));
        }

        #[test]
        fn extents_invariant_under_rotation(
            sx in 0.05f64..2.0, sy in 0.05f64..2.0, sz in 0.05f64..2.0,
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0, ang in 0.0f64..6.28,
        ) {
            let axis = Vec3::new(ax, ay, az);
            prop_assume!(axis.norm() > 1e-3);
            let r = Rotation3::from_axis_angle(&Unit::new_normalize(axis), ang);
            let base = fit_obb_points(&box_points(Vec3::new(sx, sy, sz))).unwrap().extents();
            let pts: Vec<Vec3> = box_points(Vec3::new(sx, sy, sz)).iter().map(|p| r * p + Vec3::new(0.3, -2.0, 1.0)).collect();
            let rot = fit_obb_points(&pts).unwrap().extents();
            for k in 0..3 {
                prop_assert!((base[k] - rot[k]).abs() < 1e-6);
            }
        }
    }
}
