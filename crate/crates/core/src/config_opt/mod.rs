//! Material-aware contact-angle optimization.
//!
//! Linear parts are reduced to line segments. Contacts whose angle is rare for
//! their material pair get a target angle; sets of slide/rotate freedoms are
//! enumerated, each is optimized, and the best configuration re-poses the parts.

mod enumerate;
mod optimize;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix3, Rotation3, Unit};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exemplar_db::{Database, MaterialPair, FEASIBILITY_THRESHOLD};
use crate::geometry::{Material, Model, Vec3};
use crate::part_analysis::AnalyzedModel;
use crate::structure::{contact_leg, folded_angle, ContactGraph};

pub use enumerate::{enumerate_configurations, EdgeChoice, ENUMERATION_CAP};
pub use optimize::{angle_between, optimize_configuration, Objective, OptimizeSettings};

/// Share of a segment's length at each end within which slide and rotate may act.
pub const END_REGION: f64 = 0.25;
/// Angle tolerance in degrees for a constrained edge to count as on target.
pub const TARGET_TOLERANCE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AngleOptParams {
    pub threshold: f64,
    pub w_l: f64,
    pub w_r: f64,
    pub sigma: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
    pub cap: usize,
}

impl Default for AngleOptParams {
    fn default() -> Self {
        AngleOptParams {
            threshold: FEASIBILITY_THRESHOLD,
            w_l: 1.0,
            w_r: 0.1,
            sigma: 0.05,
            grad_tol: 1e-8,
            max_iters: 500,
            cap: ENUMERATION_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinePart {
    pub id: usize,
    pub material: Material,
    /// Axis segment for linear parts.
    pub segment: Option<[Vec3; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemEdge {
    pub i: usize,
    pub j: usize,
    pub point: Vec3,
    /// Direction of each part at the contact, when it has one.
    pub dir_i: Option<Vec3>,
    pub dir_j: Option<Vec3>,
    /// Contact position along each part's segment, in `[0, 1]`.
    pub s_i: Option<f64>,
    pub s_j: Option<f64>,
    pub angle: Option<f64>,
}

impl ProblemEdge {
    pub fn s_of(&self, id: usize) -> Option<f64> {
        if id == self.i {
            self.s_i
        } else {
            self.s_j
        }
    }

    pub fn other(&self, id: usize) -> usize {
        if id == self.i {
            self.j
        } else {
            self.i
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundContact {
    pub part: usize,
    pub point: Vec3,
    pub s: Option<f64>,
}

/// Segment-level view of a model used by the angle optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleProblem {
    pub parts: BTreeMap<usize, LinePart>,
    pub edges: Vec<ProblemEdge>,
    pub ground: Vec<GroundContact>,
    /// Congruence classes of the model.
    pub classes: Vec<Vec<usize>>,
    pub contact_distance: f64,
}

/// Parameter in `[0, 1]` of the closest point on `seg` to `p`.
pub fn segment_param(seg: &[Vec3; 2], p: &Vec3) -> f64 {
    let d = seg[1] - seg[0];
    let l2 = d.norm_squared();
    if l2 == 0.0 {
        return 0.0;
    }
    ((p - seg[0]).dot(&d) / l2).clamp(0.0, 1.0)
}

impl AngleProblem {
    pub fn edges_of(&self, id: usize) -> impl Iterator<Item = (usize, &ProblemEdge)> {
        self.edges.iter().enumerate().filter(move |(_, e)| e.i == id || e.j == id)
    }

    pub fn ground_of(&self, id: usize) -> impl Iterator<Item = &GroundContact> {
        self.ground.iter().filter(move |g| g.part == id)
    }

    pub fn material(&self, id: usize) -> Material {
        self.parts.get(&id).map_or(Material::Other, |p| p.material)
    }

    /// The end (0 or 1) whose region contains `s`, if any.
    pub fn end_of(s: f64) -> Option<usize> {
        if s <= END_REGION {
            Some(0)
        } else if s >= 1.0 - END_REGION {
            Some(1)
        } else {
            None
        }
    }
}

/// Builds the segment view; `contacts` supplies contact points and angles.
pub fn build_angle_problem(am: &AnalyzedModel, contacts: &ContactGraph, classes: &[Vec<usize>], contact_distance: f64) -> AngleProblem {
    let mut parts = BTreeMap::new();
    for (k, p) in am.model.parts.iter().enumerate() {
        let d = &am.parts[k].descriptor;
        parts.insert(
            p.id,
            LinePart {
                id: p.id,
                material: p.material,
                segment: d.is_linear().then_some(d.segment),
            },
        );
    }
    let seg = |id: usize| parts.get(&id).and_then(|p: &LinePart| p.segment);
    let mut edges = Vec::new();
    for e in contacts.part_edges() {
        let (Some(ki), Some(kj)) = (am.index_of(e.i), am.index_of(e.j)) else {
            continue;
        };
        let c = e.contact_point;
        edges.push(ProblemEdge {
            i: e.i,
            j: e.j,
            point: c,
            dir_i: contact_leg(&am.parts[ki], &c),
            dir_j: contact_leg(&am.parts[kj], &c),
            s_i: seg(e.i).map(|s| segment_param(&s, &c)),
            s_j: seg(e.j).map(|s| segment_param(&s, &c)),
            angle: e.angle,
        });
    }
    let ground = contacts
        .ground_edges()
        .map(|e| GroundContact {
            part: e.i,
            point: e.contact_point,
            s: seg(e.i).map(|s| segment_param(&s, &e.contact_point)),
        })
        .collect();
    AngleProblem {
        parts,
        edges,
        ground,
        classes: classes.to_vec(),
        contact_distance,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleConstraint {
    /// Index into [`AngleProblem::edges`].
    pub edge: usize,
    pub i: usize,
    pub j: usize,
    pub angle: f64,
    pub target: f64,
    pub feasibility: f64,
    pub active: bool,
}

/// Histogram feasibility of an angle; mixed or non-fabricable pairs are always feasible.
pub fn feasibility_of(db: &Database, a: Material, b: Material, angle: f64) -> Result<f64> {
    if MaterialPair::of(a, b).is_none() {
        return Ok(1.0);
    }
    db.angle_feasibility(a, b, angle)
}

/// Same-material angled edges below the threshold get a constraint towards the nearest feasible angle.
pub fn assess_angle_feasibility(problem: &AngleProblem, db: &Database, threshold: f64) -> Result<Vec<AngleConstraint>> {
    let mut out = Vec::new();
    for (k, e) in problem.edges.iter().enumerate() {
        let Some(angle) = e.angle else { continue };
        let (ma, mb) = (problem.material(e.i), problem.material(e.j));
        let Some(pair) = MaterialPair::of(ma, mb) else { continue };
        let feasibility = feasibility_of(db, ma, mb, angle)?;
        if feasibility >= threshold {
            continue;
        }
        let Some(h) = db.histogram(pair) else { continue };
        if let Some(target) = h.target_angle(angle, threshold)? {
            out.push(AngleConstraint {
                edge: k,
                i: e.i,
                j: e.j,
                angle,
                target,
                feasibility,
                active: true,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlideEnd {
    pub host: usize,
    /// Problem edge with the host.
    pub edge: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Motion {
    /// Rotation about a pinned contact point with preserved length.
    Rotate { pivot: Vec3, edge: usize },
    /// Per end: slide on a host, or stay in place.
    Slide { ends: [Option<SlideEnd>; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub index: usize,
    pub choices: Vec<EdgeChoice>,
    pub motions: BTreeMap<usize, Motion>,
    pub fixed: BTreeSet<usize>,
    /// Problem edges lost by moving parts.
    pub dropped: BTreeSet<usize>,
    /// Parts whose ground contact is lost.
    pub dropped_ground: BTreeSet<usize>,
}

impl ConstraintSet {
    pub fn rigid() -> Self {
        ConstraintSet {
            index: usize::MAX,
            choices: Vec::new(),
            motions: BTreeMap::new(),
            fixed: BTreeSet::new(),
            dropped: BTreeSet::new(),
            dropped_ground: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideParam {
    pub part: usize,
    pub end: usize,
    pub host: usize,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeReport {
    pub i: usize,
    pub j: usize,
    pub angle: Option<f64>,
    pub feasibility: Option<f64>,
    pub target: Option<f64>,
    pub retained: bool,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    /// Enumeration index; `None` for the all-rigid configuration.
    pub set_index: Option<usize>,
    pub segments: BTreeMap<usize, [Vec3; 2]>,
    pub slides: Vec<SlideParam>,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub dropped: Vec<(usize, usize)>,
    pub report: Vec<EdgeReport>,
    /// Every retained same-material angled contact is feasible or on target.
    pub feasible: bool,
    /// Moved parts with fewer than two distinct retained contacts.
    pub hanging: Vec<usize>,
}

impl Configuration {
    pub fn valid(&self) -> bool {
        self.feasible && self.hanging.is_empty()
    }
}

/// Direction of `id` at edge `e` under the given segments.
pub(crate) fn edge_dir(problem: &AngleProblem, segments: &BTreeMap<usize, [Vec3; 2]>, e: &ProblemEdge, id: usize) -> Option<Vec3> {
    if let Some(s) = segments.get(&id) {
        return Some(s[1] - s[0]);
    }
    if let Some(s) = problem.parts.get(&id).and_then(|p| p.segment) {
        return Some(s[1] - s[0]);
    }
    if id == e.i {
        e.dir_i
    } else {
        e.dir_j
    }
}

/// Feasibility report and hanging check for a set under solved segments.
pub(crate) fn evaluate(
    problem: &AngleProblem,
    constraints: &[AngleConstraint],
    set: &ConstraintSet,
    segments: &BTreeMap<usize, [Vec3; 2]>,
    db: &Database,
    threshold: f64,
) -> Result<(Vec<EdgeReport>, bool, Vec<usize>)> {
    let target_of: BTreeMap<usize, f64> = constraints.iter().map(|c| (c.edge, c.target)).collect();
    let mut report = Vec::new();
    let mut feasible = true;
    for (k, e) in problem.edges.iter().enumerate() {
        let retained = !set.dropped.contains(&k);
        let (ma, mb) = (problem.material(e.i), problem.material(e.j));
        let moved = set.motions.contains_key(&e.i) || set.motions.contains_key(&e.j);
        let angle = if moved {
            match (edge_dir(problem, segments, e, e.i), edge_dir(problem, segments, e, e.j)) {
                (Some(a), Some(b)) if e.angle.is_some() => Some(folded_angle(&a, &b)),
                _ => e.angle,
            }
        } else {
            e.angle
        };
        let mut r = EdgeReport {
            i: e.i,
            j: e.j,
            angle,
            feasibility: None,
            target: target_of.get(&k).copied(),
            retained,
            ok: true,
        };
        if let (Some(a), Some(_)) = (angle, MaterialPair::of(ma, mb)) {
            let f = feasibility_of(db, ma, mb, a)?;
            r.feasibility = Some(f);
            let on_target = r.target.is_some_and(|t| (a - t).abs() <= TARGET_TOLERANCE);
            r.ok = !retained || f >= threshold || on_target;
        }
        feasible &= r.ok;
        report.push(r);
    }
    let hanging = set
        .motions
        .keys()
        .copied()
        .filter(|&id| enumerate::retained_points(problem, set, id).len() < 2)
        .collect();
    Ok((report, feasible, hanging))
}

/// Picks the valid configuration with the smallest objective; ties (within
/// 1e-9 relative) go to fewer dropped contacts, then the earlier index.
pub fn select_best_configuration(configs: &[Configuration]) -> Option<&Configuration> {
    let idx = |c: &Configuration| c.set_index.map_or(0, |i| i + 1);
    let mut best: Option<&Configuration> = None;
    for c in configs {
        let Some(b) = best else {
            best = Some(c);
            continue;
        };
        let better = if c.valid() != b.valid() {
            c.valid()
        } else {
            let tol = 1e-9 * c.objective.abs().max(b.objective.abs()).max(1.0);
            if (c.objective - b.objective).abs() > tol {
                c.objective < b.objective
            } else if c.dropped.len() != b.dropped.len() {
                c.dropped.len() < b.dropped.len()
            } else {
                idx(c) < idx(b)
            }
        };
        if better {
            best = Some(c);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleOptOutcome {
    pub constraints: Vec<AngleConstraint>,
    pub sets_enumerated: usize,
    pub truncated: bool,
    pub selected: Configuration,
    /// Objective and validity of every optimized set, in enumeration order.
    pub candidates: Vec<(Option<usize>, f64, bool)>,
}

/// Assess, enumerate, optimize every set and select.
pub fn optimize_angles(problem: &AngleProblem, db: &Database, params: &AngleOptParams) -> Result<AngleOptOutcome> {
    let constraints = assess_angle_feasibility(problem, db, params.threshold)?;
    let settings = OptimizeSettings::from(params);
    let rigid = ConstraintSet::rigid();
    let mut configs = vec![optimize_configuration(problem, &constraints, &rigid, db, &settings)?];
    let (sets, truncated) = if constraints.is_empty() {
        (Vec::new(), false)
    } else {
        enumerate_configurations(problem, &constraints, params.cap)
    };
    if !constraints.is_empty() && sets.is_empty() {
        tracing::warn!("no valid slide/rotate set; keeping the rigid configuration");
    }
    for s in &sets {
        configs.push(optimize_configuration(problem, &constraints, s, db, &settings)?);
    }
    let selected = select_best_configuration(&configs).expect("rigid configuration present").clone();
    Ok(AngleOptOutcome {
        candidates: configs.iter().map(|c| (c.set_index, c.objective, c.valid())).collect(),
        constraints,
        sets_enumerated: sets.len(),
        truncated,
        selected,
    })
}

/// Affine map sending segment `from` onto segment `to`: minimal rotation,
/// scale along the segment direction, translation.
pub fn segment_map(from: &[Vec3; 2], to: &[Vec3; 2]) -> (Matrix3<f64>, Vec3) {
    let d0 = from[1] - from[0];
    let d1 = to[1] - to[0];
    let (l0, l1) = (d0.norm(), d1.norm());
    if l0 == 0.0 || l1 == 0.0 {
        return (Matrix3::identity(), to[0] - from[0]);
    }
    let u0 = d0 / l0;
    let rot = Rotation3::rotation_between(&u0, &(d1 / l1)).unwrap_or_else(|| {
        // Opposite directions: half turn about any perpendicular axis.
        let perp = if u0.x.abs() < 0.9 { u0.cross(&Vec3::x()) } else { u0.cross(&Vec3::y()) };
        Rotation3::from_axis_angle(&Unit::new_normalize(perp), std::f64::consts::PI)
    });
    let stretch = Matrix3::identity() + u0 * u0.transpose() * (l1 / l0 - 1.0);
    let linear = rot.matrix() * stretch;
    (linear, to[0] - linear * from[0])
}

/// Re-poses moved parts of `model` from their original to their new segments.
pub fn apply_configuration(model: &Model, problem: &AngleProblem, config: &Configuration) -> Result<Model> {
    let mut out = model.clone();
    for part in &mut out.parts {
        let (Some(new), Some(old)) = (config.segments.get(&part.id), problem.parts.get(&part.id).and_then(|p| p.segment)) else {
            continue;
        };
        if *new == old {
            continue;
        }
        let (l, o) = segment_map(&old, new);
        part.mesh = part.mesh.transformed(&l, &o)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
