use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AngleConstraint, AngleProblem, ConstraintSet, Motion, SlideEnd};
use crate::geometry::Vec3;

/// Maximum number of constraint sets returned.
pub const ENUMERATION_CAP: usize = 4096;
/// Bound on search nodes so enumeration terminates on large inputs.
const NODE_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeChoice {
    Rigid,
    ISlidesOnJ,
    JSlidesOnI,
    IRotates,
    JRotates,
}

const ORDER: [EdgeChoice; 5] = [
    EdgeChoice::Rigid,
    EdgeChoice::ISlidesOnJ,
    EdgeChoice::JSlidesOnI,
    EdgeChoice::IRotates,
    EdgeChoice::JRotates,
];

/// Parts that may not move: non-linear parts, parts with an end free of
/// contacts, and parts with a congruent sibling that has no angle problem.
pub(crate) fn initially_fixed(problem: &AngleProblem, constraints: &[AngleConstraint]) -> BTreeSet<usize> {
    let troubled: BTreeSet<usize> = constraints.iter().flat_map(|c| [c.i, c.j]).collect();
    let mut fixed = BTreeSet::new();
    for (&id, p) in &problem.parts {
        if p.segment.is_none() {
            fixed.insert(id);
            continue;
        }
        let mut ends = [false; 2];
        let ss = problem
            .edges_of(id)
            .filter_map(|(_, e)| e.s_of(id))
            .chain(problem.ground_of(id).filter_map(|g| g.s));
        for s in ss {
            if let Some(end) = AngleProblem::end_of(s) {
                ends[end] = true;
            }
        }
        if !(ends[0] && ends[1]) {
            fixed.insert(id);
            continue;
        }
        let sibling_ok = problem
            .classes
            .iter()
            .filter(|c| c.contains(&id))
            .any(|c| c.iter().any(|&m| m != id && !troubled.contains(&m)));
        if sibling_ok {
            fixed.insert(id);
        }
    }
    fixed
}

fn apply_choice(
    problem: &AngleProblem,
    fixed: &BTreeSet<usize>,
    motions: &mut BTreeMap<usize, Motion>,
    edge: usize,
    choice: EdgeChoice,
) -> bool {
    let e = &problem.edges[edge];
    let (mover, other) = match choice {
        EdgeChoice::Rigid => return true,
        EdgeChoice::ISlidesOnJ | EdgeChoice::IRotates => (e.i, e.j),
        EdgeChoice::JSlidesOnI | EdgeChoice::JRotates => (e.j, e.i),
    };
    if fixed.contains(&mover) {
        return false;
    }
    let Some(seg) = problem.parts.get(&mover).and_then(|p| p.segment) else {
        return false;
    };
    let Some(end) = e.s_of(mover).and_then(AngleProblem::end_of) else {
        return false;
    };
    match choice {
        EdgeChoice::IRotates | EdgeChoice::JRotates => {
            if motions.contains_key(&mover) {
                return false;
            }
            let s = e.s_of(mover).unwrap();
            let pivot = seg[0] + (seg[1] - seg[0]) * s;
            motions.insert(mover, Motion::Rotate { pivot, edge });
            true
        }
        _ => {
            if problem.parts.get(&other).and_then(|p| p.segment).is_none() {
                return false;
            }
            let entry = motions.entry(mover).or_insert(Motion::Slide { ends: [None, None] });
            let Motion::Slide { ends } = entry else {
                return false;
            };
            if ends[end].is_some() {
                return false;
            }
            if let Some(o) = ends[1 - end] {
                // Both ends may not slide on the same or on mutually contacting hosts.
                let touching = problem.edges.iter().any(|x| (x.i == o.host && x.j == other) || (x.i == other && x.j == o.host));
                if o.host == other || touching {
                    return false;
                }
            }
            ends[end] = Some(SlideEnd { host: other, edge });
            true
        }
    }
}

/// Whether the moving part `id` keeps a contact at `point` (edge `edge` or ground when `None`).
fn keeps(problem: &AngleProblem, motion: &Motion, edge: Option<usize>, s: Option<f64>, point: &Vec3) -> bool {
    match motion {
        Motion::Rotate { edge: pe, .. } => {
            edge == Some(*pe) || (point - problem.edges[*pe].point).norm() <= problem.contact_distance
        }
        Motion::Slide { ends } => {
            if edge.is_some() && ends.iter().flatten().any(|se| Some(se.edge) == edge) {
                return true;
            }
            matches!(s.and_then(AngleProblem::end_of), Some(end) if ends[end].is_none())
        }
    }
}

/// Distinct contact points (ground included) that the part keeps under `set`.
pub(crate) fn retained_points(problem: &AngleProblem, set: &ConstraintSet, id: usize) -> Vec<Vec3> {
    let mut pts: Vec<Vec3> = Vec::new();
    let mut push = |p: Vec3| {
        if pts.iter().all(|q| (q - p).norm() > problem.contact_distance) {
            pts.push(p);
        }
    };
    for (k, e) in problem.edges_of(id) {
        if !set.dropped.contains(&k) {
            push(e.point);
        }
    }
    if !set.dropped_ground.contains(&id) {
        for g in problem.ground_of(id) {
            push(g.point);
        }
    }
    pts
}

/// Completes a set: hosts must stay put, lost contacts are recorded, hanging parts rejected.
fn finalize(problem: &AngleProblem, fixed: &BTreeSet<usize>, choices: Vec<EdgeChoice>, motions: BTreeMap<usize, Motion>) -> Option<ConstraintSet> {
    for m in motions.values() {
        if let Motion::Slide { ends } = m {
            if ends.iter().flatten().any(|se| motions.contains_key(&se.host)) {
                return None;
            }
        }
    }
    let mut dropped = BTreeSet::new();
    for (k, e) in problem.edges.iter().enumerate() {
        for id in [e.i, e.j] {
            if let Some(m) = motions.get(&id) {
                if !keeps(problem, m, Some(k), e.s_of(id), &e.point) {
                    dropped.insert(k);
                }
            }
        }
    }
    let mut dropped_ground = BTreeSet::new();
    for g in &problem.ground {
        if let Some(m) = motions.get(&g.part) {
            if !keeps(problem, m, None, g.s, &g.point) {
                dropped_ground.insert(g.part);
            }
        }
    }
    let set = ConstraintSet {
        index: 0,
        choices,
        motions,
        fixed: fixed.clone(),
        dropped,
        dropped_ground,
    };
    if set.motions.keys().any(|&id| retained_points(problem, &set, id).len() < 2) {
        return None;
    }
    Some(set)
}

/// Depth-first enumeration over per-edge choices in constraint order, skipping
/// the all-rigid set. Returns the sets and whether the cap cut the search short.
pub fn enumerate_configurations(problem: &AngleProblem, constraints: &[AngleConstraint], cap: usize) -> (Vec<ConstraintSet>, bool) {
    let fixed = initially_fixed(problem, constraints);
    let mut out = Vec::new();
    let mut nodes = 0usize;
    let mut truncated = false;
    let mut choices = Vec::with_capacity(constraints.len());
    dfs(problem, constraints, &fixed, &mut choices, &BTreeMap::new(), cap, &mut out, &mut nodes, &mut truncated);
    for (k, s) in out.iter_mut().enumerate() {
        s.index = k;
    }
    (out, truncated)
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    problem: &AngleProblem,
    constraints: &[AngleConstraint],
    fixed: &BTreeSet<usize>,
    choices: &mut Vec<EdgeChoice>,
    motions: &BTreeMap<usize, Motion>,
    cap: usize,
    out: &mut Vec<ConstraintSet>,
    nodes: &mut usize,
    truncated: &mut bool,
) {
    if *truncated {
        return;
    }
    *nodes += 1;
    if out.len() >= cap || *nodes > NODE_CAP {
        *truncated = true;
        return;
    }
    let depth = choices.len();
    if depth == constraints.len() {
        if motions.is_empty() {
            return;
        }
        if let Some(s) = finalize(problem, fixed, choices.clone(), motions.clone()) {
            out.push(s);
        }
        return;
    }
    for choice in ORDER {
        let mut next = motions.clone();
        if !apply_choice(problem, fixed, &mut next, constraints[depth].edge, choice) {
            continue;
        }
        choices.push(choice);
        dfs(problem, constraints, fixed, choices, &next, cap, out, nodes, truncated);
        choices.pop();
        if *truncated {
            return;
        }
    }
}
