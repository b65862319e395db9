use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::csg::Solid;
use super::joints::JointAssignment;
use super::refine::{support_weights, tenon_axis, RefineParams};
use super::voxel::Shape;
use super::JointKind;
use crate::error::{ReformError, Result};
use crate::geometry::{TriangleMesh, Vec3};
use crate::part_analysis::OrientedBox;

/// Boards count as parallel for a lap joint within this angle.
pub const LAP_PARALLEL_DEG: f64 = 10.0;

/// Gap between two boxes along the best separating axis (0 when they overlap).
pub fn obb_gap(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let mut axes: Vec<Vec3> = a.axes.iter().chain(b.axes.iter()).copied().collect();
    for x in &a.axes {
        for y in &b.axes {
            let c = x.cross(y);
            if c.norm() > 1e-9 {
                axes.push(c.normalize());
            }
        }
    }
    let d = b.center - a.center;
    axes.iter()
        .map(|n| {
            let ra: f64 = (0..3).map(|k| a.half_extents[k] * a.axes[k].dot(n).abs()).sum();
            let rb: f64 = (0..3).map(|k| b.half_extents[k] * b.axes[k].dot(n).abs()).sum();
            d.dot(n).abs() - ra - rb
        })
        .fold(0.0, f64::max)
}

/// A box from center, a direction pair and half extents; the frame is completed right-handed.
fn frame_box(center: Vec3, x: Vec3, y: Vec3, half: [f64; 3]) -> OrientedBox {
    let x = x.normalize();
    let y = (y - x * x.dot(&y)).normalize();
    OrientedBox {
        center,
        axes: [x, y, x.cross(&y)],
        half_extents: half,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointGeometry {
    pub i: usize,
    pub j: usize,
    pub kind: JointKind,
    pub contact_point: Vec3,
    /// Material added to the tenon, or removed from each part of a lap.
    pub pieces: Vec<TriangleMesh>,
    pub tenon_volume: Option<f64>,
    pub cavity_volume: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FormedJoints {
    /// Sculpted proxies of the parts that received joint geometry.
    pub parts: BTreeMap<usize, TriangleMesh>,
    /// The analytic solid each sculpted proxy should equal.
    pub shapes: BTreeMap<usize, Shape>,
    pub joints: Vec<JointGeometry>,
}

struct Sculpt {
    solids: BTreeMap<usize, Solid>,
    shapes: BTreeMap<usize, Shape>,
}

impl Sculpt {
    fn take(&mut self, id: usize, b: &OrientedBox) -> (Solid, Shape) {
        let s = self.solids.remove(&id).unwrap_or_else(|| Solid::from_box(b));
        let sh = self.shapes.remove(&id).unwrap_or(Shape::Box(*b));
        (s, sh)
    }
}

/// Prism of a mortise-tenon joint: the tenon end face scaled, from the mortise
/// surface along the tenon axis to the penetration depth.
pub fn tenon_prism(tenon: &OrientedBox, mortise: &OrientedBox, contact: &Vec3, params: &RefineParams) -> OrientedBox {
    let u = tenon_axis(tenon, contact);
    let w = support_weights(mortise, &u);
    let hm: f64 = (0..3).map(|k| w[k] * mortise.half_extents[k]).sum();
    let d = (mortise.center - tenon.center).dot(&u);
    let s0 = d - hm;
    let depth = params.penetration * 2.0 * hm;
    frame_box(
        tenon.center + u * (s0 + 0.5 * depth),
        u,
        tenon.axes[1],
        [
            0.5 * depth,
            params.tenon_scale * tenon.half_extents[1],
            params.tenon_scale * tenon.half_extents[2],
        ],
    )
}

/// Lap notches for two near-parallel boards: the footprint overlap, half of each board's thickness.
pub fn lap_notches(a: &OrientedBox, b: &OrientedBox) -> Option<(OrientedBox, OrientedBox)> {
    let n = a.axes[2];
    if n.dot(&b.axes[2]).abs() < LAP_PARALLEL_DEG.to_radians().cos() {
        return None;
    }
    let corners = b.corners();
    let mut rect = [(0.0, 0.0); 2];
    for k in 0..2 {
        let proj = corners.iter().map(|p| (p - a.center).dot(&a.axes[k]));
        let lo = proj.clone().fold(f64::INFINITY, f64::min).max(-a.half_extents[k]);
        let hi = proj.fold(f64::NEG_INFINITY, f64::max).min(a.half_extents[k]);
        if hi <= lo {
            return None;
        }
        rect[k] = (lo, hi);
    }
    let foot = a.center + a.axes[0] * (0.5 * (rect[0].0 + rect[0].1)) + a.axes[1] * (0.5 * (rect[1].0 + rect[1].1));
    let half = [0.5 * (rect[0].1 - rect[0].0), 0.5 * (rect[1].1 - rect[1].0)];
    let side = if (b.center - a.center).dot(&n) >= 0.0 { 1.0 } else { -1.0 };
    let (ta, tb) = (a.half_extents[2], b.half_extents[2]);
    let notch_a = frame_box(foot + n * (side * 0.5 * ta), a.axes[0], a.axes[1], [half[0], half[1], 0.5 * ta]);
    let mid_b = foot + n * (b.center - foot).dot(&n);
    let notch_b = frame_box(mid_b - n * (side * 0.5 * tb), a.axes[0], a.axes[1], [half[0], half[1], 0.5 * tb]);
    Some((notch_a, notch_b))
}

/// Sculpts mortise-tenon and lap joints on box proxies; other kinds only record their position.
pub fn form_joint_geometry(
    assignments: &[JointAssignment],
    obbs: &BTreeMap<usize, OrientedBox>,
    contact_distance: f64,
    params: &RefineParams,
) -> Result<FormedJoints> {
    let mut sc = Sculpt {
        solids: BTreeMap::new(),
        shapes: BTreeMap::new(),
    };
    let mut joints = Vec::new();
    let get = |id: usize| {
        obbs.get(&id)
            .ok_or_else(|| ReformError::InvalidArgument(format!("no box for part {id}")))
    };
    for a in assignments {
        let mut g = JointGeometry {
            i: a.i,
            j: a.j,
            kind: a.joint.kind,
            contact_point: a.contact_point,
            pieces: Vec::new(),
            tenon_volume: None,
            cavity_volume: None,
            note: None,
        };
        match a.joint.kind {
            JointKind::MortiseTenon => {
                let (t, m) = match (a.tenon_part, a.mortise_part) {
                    (Some(t), Some(m)) if t != m => (t, m),
                    _ => {
                        return Err(ReformError::Joint {
                            i: a.i,
                            j: a.j,
                            message: "mortise-tenon joint without distinct roles".into(),
                        })
                    }
                };
                let (tb, mb) = (*get(t)?, *get(m)?);
                let gap = obb_gap(&tb, &mb);
                if gap > contact_distance {
                    return Err(ReformError::Joint {
                        i: a.i,
                        j: a.j,
                        message: format!("boxes are {gap:.4} apart"),
                    });
                }
                let prism = tenon_prism(&tb, &mb, &a.contact_point, params);
                // Earlier joints may have carved the mortise part already.
                let (ms, mshape) = sc.take(m, &mb);
                let piece = Solid::from_box(&prism).intersect(&ms);
                let piece_shape = Shape::intersection(Shape::Box(prism), mshape.clone());

                let (ts, tshape) = sc.take(t, &tb);
                let trimmed = ts.subtract(&Solid::from_box(&mb));
                let trimmed_volume = trimmed.volume();
                let grown = trimmed.union(&piece);
                g.tenon_volume = Some(grown.volume() - trimmed_volume);
                sc.solids.insert(t, grown);
                sc.shapes.insert(t, Shape::union(Shape::difference(tshape, Shape::Box(mb)), piece_shape.clone()));

                let before = ms.volume();
                let carved = ms.subtract(&piece);
                g.cavity_volume = Some(before - carved.volume());
                sc.solids.insert(m, carved);
                sc.shapes.insert(m, Shape::difference(mshape, piece_shape));
                g.pieces.push(piece.to_mesh()?);
            }
            JointKind::Lap => {
                let (ab, bb) = (*get(a.i)?, *get(a.j)?);
                let gap = obb_gap(&ab, &bb);
                if gap > contact_distance {
                    return Err(ReformError::Joint {
                        i: a.i,
                        j: a.j,
                        message: format!("boxes are {gap:.4} apart"),
                    });
                }
                match lap_notches(&ab, &bb) {
                    Some((na, nb)) => {
                        for (id, b, notch) in [(a.i, ab, na), (a.j, bb, nb)] {
                            let (s, shape) = sc.take(id, &b);
                            let cut = Solid::from_box(&notch);
                            let removed = s.intersect(&cut);
                            if !removed.is_empty() {
                                g.pieces.push(removed.to_mesh()?);
                            }
                            sc.solids.insert(id, s.subtract(&cut));
                            sc.shapes.insert(id, Shape::difference(shape, Shape::Box(notch)));
                        }
                    }
                    None => g.note = Some("boards are not parallel; lap recorded without notches".into()),
                }
            }
            JointKind::Weld => g.note = Some("weld seam at the contact point".into()),
            k => g.note = Some(format!("{k} at the contact point")),
        }
        joints.push(g);
    }
    let mut parts = BTreeMap::new();
    for (id, s) in &sc.solids {
        parts.insert(*id, s.to_mesh()?);
    }
    Ok(FormedJoints {
        parts,
        shapes: sc.shapes,
        joints,
    })
}
