use std::collections::BTreeMap;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::joints::JointAssignment;
use super::qp::{kkt_residual, project_onto_polyhedron, LinearConstraint, QpError};
use crate::error::{ReformError, Result};
use crate::geometry::{Model, Vec3};
use crate::part_analysis::OrientedBox;

/// Tenon prism cross-section relative to the tenon's end face.
pub const TENON_SCALE: f64 = 0.5;
/// Tenon depth as a share of the mortise extent along the tenon axis.
pub const PENETRATION: f64 = 0.3;
/// Material kept between the prism and the mortise faces.
pub const WALL_MARGIN: f64 = 0.004;
/// Smallest half extent the refinement may produce.
pub const MIN_HALF_EXTENT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineParams {
    pub tenon_scale: f64,
    pub penetration: f64,
    pub wall_margin: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            tenon_scale: TENON_SCALE,
            penetration: PENETRATION,
            wall_margin: WALL_MARGIN,
        }
    }
}

/// Half extent of a box along a unit direction, as weights on its half extents.
pub fn support_weights(b: &OrientedBox, dir: &Vec3) -> [f64; 3] {
    std::array::from_fn(|k| b.axes[k].dot(dir).abs())
}

/// Tenon major axis oriented towards the contact.
pub fn tenon_axis(tenon: &OrientedBox, contact: &Vec3) -> Vec3 {
    let u = tenon.axes[0];
    if (contact - tenon.center).dot(&u) < 0.0 {
        -u
    } else {
        u
    }
}

/// One tenon/mortise pair as seen by the QP.
#[derive(Debug, Clone, PartialEq)]
pub struct TenonJoint {
    pub i: usize,
    pub j: usize,
    pub tenon: usize,
    pub mortise: usize,
    pub contact: Vec3,
}

impl TenonJoint {
    pub fn from_assignment(a: &JointAssignment) -> Option<TenonJoint> {
        Some(TenonJoint {
            i: a.i,
            j: a.j,
            tenon: a.tenon_part?,
            mortise: a.mortise_part?,
            contact: a.contact_point,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineProblem {
    /// Parts owning variables `3k..3k+3`.
    pub parts: Vec<usize>,
    pub x0: Vec<f64>,
    pub constraints: Vec<LinearConstraint>,
    /// Joint index of each constraint; `None` for positivity bounds.
    pub owner: Vec<Option<usize>>,
}

/// Builds the compatibility constraints over the half extents of joint parts.
pub fn build_refine_problem(obbs: &BTreeMap<usize, OrientedBox>, joints: &[TenonJoint], params: &RefineParams) -> Result<RefineProblem> {
    let mut parts: Vec<usize> = joints.iter().flat_map(|j| [j.tenon, j.mortise]).collect();
    parts.sort_unstable();
    parts.dedup();
    let slot: BTreeMap<usize, usize> = parts.iter().enumerate().map(|(k, &p)| (p, k)).collect();
    let get = |id: usize| {
        obbs.get(&id)
            .ok_or_else(|| ReformError::InvalidArgument(format!("no box for part {id}")))
    };
    let mut x0 = Vec::with_capacity(3 * parts.len());
    for &p in &parts {
        x0.extend_from_slice(&get(p)?.half_extents);
    }
    let mut constraints = Vec::new();
    let mut owner = Vec::new();
    for (n, jt) in joints.iter().enumerate() {
        let (t, m) = (get(jt.tenon)?, get(jt.mortise)?);
        let (vt, vm) = (3 * slot[&jt.tenon], 3 * slot[&jt.mortise]);
        let u = tenon_axis(t, &jt.contact);
        // Cross-section: the scaled end face stays inside the mortise minus the wall margin.
        for a in 1..3 {
            let dir = t.axes[a];
            let offset = (t.center - m.center).dot(&dir).abs();
            let w = support_weights(m, &dir);
            let mut coeffs = vec![(vt + a, params.tenon_scale)];
            coeffs.extend((0..3).map(|k| (vm + k, -w[k])));
            constraints.push(LinearConstraint {
                coeffs,
                rhs: -params.wall_margin - offset,
            });
            owner.push(Some(n));
        }
        let w = support_weights(m, &u);
        let d = (m.center - t.center).dot(&u);
        // Reach: the tenon end face meets the mortise.
        let mut coeffs = vec![(vt, -1.0)];
        coeffs.extend((0..3).map(|k| (vm + k, -w[k])));
        constraints.push(LinearConstraint { coeffs, rhs: -d });
        owner.push(Some(n));
        // Depth: the prism ends inside the mortise minus the wall margin.
        let keep = 1.0 - 2.0 * params.penetration;
        let mut coeffs = vec![(vt, 1.0)];
        coeffs.extend((0..3).map(|k| (vm + k, -keep * w[k])));
        constraints.push(LinearConstraint {
            coeffs,
            rhs: d - params.wall_margin,
        });
        owner.push(Some(n));
    }
    for k in 0..x0.len() {
        constraints.push(LinearConstraint {
            coeffs: vec![(k, -1.0)],
            rhs: -MIN_HALF_EXTENT,
        });
        owner.push(None);
    }
    Ok(RefineProblem {
        parts,
        x0,
        constraints,
        owner,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartRefinement {
    pub part: usize,
    pub before: [f64; 3],
    pub after: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub objective: f64,
    pub kkt_residual: f64,
    pub active_constraints: usize,
    pub parts: Vec<PartRefinement>,
}

/// Solves the refinement QP and returns new boxes for the joint parts.
pub fn refine_part_dimensions(
    obbs: &BTreeMap<usize, OrientedBox>,
    joints: &[TenonJoint],
    params: &RefineParams,
) -> Result<(BTreeMap<usize, OrientedBox>, RefineReport)> {
    let prob = build_refine_problem(obbs, joints, params)?;
    let sol = project_onto_polyhedron(&prob.x0, &prob.constraints).map_err(|e| match e {
        QpError::Infeasible(c) => match prob.owner[c] {
            Some(n) => ReformError::InfeasibleRefinement {
                i: joints[n].i,
                j: joints[n].j,
            },
            None => ReformError::InvalidArgument("refinement would collapse a part".into()),
        },
        QpError::NoProgress => ReformError::InvalidArgument("refinement QP made no progress".into()),
    })?;
    let mut out = obbs.clone();
    let mut parts = Vec::new();
    for (k, &p) in prob.parts.iter().enumerate() {
        let after = [sol.x[3 * k], sol.x[3 * k + 1], sol.x[3 * k + 2]];
        let b = out.get_mut(&p).unwrap();
        parts.push(PartRefinement {
            part: p,
            before: b.half_extents,
            after,
        });
        b.half_extents = after;
    }
    let objective = prob.x0.iter().zip(&sol.x).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((
        out,
        RefineReport {
            objective,
            kkt_residual: kkt_residual(&prob.x0, &prob.constraints, &sol),
            active_constraints: sol.active.len(),
            parts,
        },
    ))
}

/// Per-axis scaling about the box center from `old` to `new` extents.
pub fn box_rescale(old: &OrientedBox, new: &OrientedBox) -> (Matrix3<f64>, Vec3) {
    let r = old.rotation();
    let s = Matrix3::from_diagonal(&Vec3::from_fn(|k, _| {
        if old.half_extents[k] > 0.0 {
            new.half_extents[k] / old.half_extents[k]
        } else {
            1.0
        }
    }));
    let linear = r * s * r.transpose();
    (linear, old.center - linear * old.center)
}

/// Rescales the meshes of refined parts to their new boxes.
pub fn apply_refinement(model: &Model, before: &BTreeMap<usize, OrientedBox>, after: &BTreeMap<usize, OrientedBox>) -> Result<Model> {
    let mut out = model.clone();
    for part in &mut out.parts {
        let (Some(a), Some(b)) = (before.get(&part.id), after.get(&part.id)) else {
            continue;
        };
        if a.half_extents == b.half_extents {
            continue;
        }
        let (l, o) = box_rescale(a, b);
        part.mesh = part.mesh.transformed(&l, &o)?;
    }
    Ok(out)
}
