use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{JointCategory, JointKind};
use crate::error::{ReformError, Result};
use crate::exemplar_db::Database;
use crate::geometry::{Material, Vec3};
use crate::part_analysis::PartDescriptor;
use crate::preprocess::Preprocessed;
use crate::similarity::{orientation_vector, transpose_orientation, SimilarityParams};

/// Neighbours voting on a joint kind.
pub const DEFAULT_K: usize = 5;
/// Relative potential margin under which the vote is flagged ambiguous.
pub const AMBIGUITY_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointType {
    pub category: JointCategory,
    pub kind: JointKind,
    pub ambiguous: bool,
    /// Kinds seen among the neighbours, most votes first.
    pub candidates: Vec<JointKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointAssignment {
    pub i: usize,
    pub j: usize,
    pub joint: JointType,
    pub tenon_part: Option<usize>,
    pub mortise_part: Option<usize>,
    /// Log potential of the best neighbour; `None` when set by override.
    pub log_potential: Option<f64>,
    pub contact_point: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointInferenceParams {
    pub k: usize,
    pub similarity: SimilarityParams,
    /// Per-edge kind overrides, keyed by `(min id, max id)`.
    pub overrides: BTreeMap<(usize, usize), JointKind>,
    /// Tenon part overrides for mortise-tenon joints, keyed like `overrides`.
    pub tenon_overrides: BTreeMap<(usize, usize), usize>,
    /// Parts whose shape term also compares area ratios.
    pub compact: BTreeSet<usize>,
}

impl Default for JointInferenceParams {
    fn default() -> Self {
        JointInferenceParams {
            k: DEFAULT_K,
            similarity: SimilarityParams::default(),
            overrides: BTreeMap::new(),
            tenon_overrides: BTreeMap::new(),
            compact: BTreeSet::new(),
        }
    }
}

/// Geometry of one query contact.
#[derive(Debug, Clone)]
pub struct JointQuery<'a> {
    pub i: usize,
    pub j: usize,
    pub material_i: Material,
    pub material_j: Material,
    pub desc_i: &'a PartDescriptor,
    pub desc_j: &'a PartDescriptor,
    pub compact_i: bool,
    pub compact_j: bool,
    pub barycenter_distance: f64,
    pub orientation: [f64; 9],
}

fn sq(x: f64, s: f64) -> f64 {
    (x / s) * (x / s)
}

/// Log of the OBB (plus optional area) kernel.
fn log_shape(a: &PartDescriptor, b: &PartDescriptor, compact: bool, p: &SimilarityParams) -> f64 {
    let l1: f64 = (0..3).map(|k| (a.size_vec[k] - b.size_vec[k]).abs()).sum();
    let mut v = -sq(l1, p.sigma_b);
    if compact {
        v -= sq(a.area_ratio - b.area_ratio, p.sigma_r);
    }
    v
}

/// Log potential of matching the query pair to exemplar parts `(u, v)` in that order.
pub fn log_joint_potential(q: &JointQuery, db: &Database, u: usize, v: usize, dist: f64, orient: &[f64; 9], p: &SimilarityParams) -> f64 {
    let (pu, pv) = (&db.parts[u], &db.parts[v]);
    if pu.material != q.material_i || pv.material != q.material_j {
        return f64::NEG_INFINITY;
    }
    let oa: f64 = q.orientation.iter().zip(orient).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (p.sigma_oa * p.sigma_oa);
    log_shape(q.desc_i, &pu.descriptor, q.compact_i, p) + log_shape(q.desc_j, &pv.descriptor, q.compact_j, p)
        - sq(q.barycenter_distance - dist, p.sigma_pr)
        - oa
}

/// Votes among the `k` best-scoring tagged contacts of the same material category.
pub fn classify_joint(q: &JointQuery, db: &Database, k: usize, p: &SimilarityParams) -> Result<(JointType, f64)> {
    let category = JointCategory::of(q.material_i, q.material_j)?;
    let mut scored: Vec<(f64, usize, JointKind)> = Vec::new();
    for (n, c) in db.contacts.iter().enumerate() {
        let Some(kind) = c.joint_type else { continue };
        let (mu, mv) = (db.parts[c.u].material, db.parts[c.v].material);
        if JointCategory::of(mu, mv).ok() != Some(category) {
            continue;
        }
        let fwd = log_joint_potential(q, db, c.u, c.v, c.barycenter_distance, &c.orientation_vec, p);
        let rev = log_joint_potential(q, db, c.v, c.u, c.barycenter_distance, &transpose_orientation(&c.orientation_vec), p);
        let s = fwd.max(rev);
        if s > f64::NEG_INFINITY {
            scored.push((s, n, kind));
        }
    }
    if scored.is_empty() {
        return Err(ReformError::NoJointExemplars(category.to_string()));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(k.max(1));
    // kind -> (votes, best log potential)
    let mut votes: BTreeMap<JointKind, (usize, f64)> = BTreeMap::new();
    for &(s, _, kind) in &scored {
        let e = votes.entry(kind).or_insert((0, f64::NEG_INFINITY));
        e.0 += 1;
        e.1 = e.1.max(s);
    }
    let mut ranked: Vec<(JointKind, usize, f64)> = votes.into_iter().map(|(k, (n, s))| (k, n, s)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.total_cmp(&a.2)).then(a.0.cmp(&b.0)));
    let (kind, count, best) = ranked[0];
    let ambiguous = ranked.get(1).is_some_and(|&(_, n, s)| n == count || (s - best).exp() >= 1.0 - AMBIGUITY_MARGIN);
    Ok((
        JointType {
            category,
            kind,
            ambiguous,
            candidates: ranked.iter().map(|r| r.0).collect(),
        },
        best,
    ))
}

/// Tenon/mortise roles: the part whose axis end near the contact points into the
/// other's box is the tenon. Falls back to the smaller box, then the smaller id.
pub fn tenon_mortise_roles(i: usize, j: usize, di: &PartDescriptor, dj: &PartDescriptor, contact: &Vec3) -> (usize, usize) {
    let points_into = |t: &PartDescriptor, m: &PartDescriptor| -> bool {
        let [a, b] = t.segment;
        let (end, other) = if (a - contact).norm() <= (b - contact).norm() { (a, b) } else { (b, a) };
        let u = end - other;
        if u.norm() == 0.0 || (end - contact).norm() > 0.25 * u.norm() {
            return false;
        }
        let reach = t.obb.half_extents.iter().fold(f64::INFINITY, |x: f64, &y| x.min(y)).max(1e-4) * 0.5;
        let tip = t.obb.center + u.normalize() * (t.obb.half_extents.iter().fold(0.0f64, |x, &y| x.max(y)) + reach);
        m.obb.contains(&tip, 1e-9)
    };
    match (points_into(di, dj), points_into(dj, di)) {
        (true, false) => (i, j),
        (false, true) => (j, i),
        _ => {
            let (vi, vj) = (di.obb.volume(), dj.obb.volume());
            if vi < vj || (vi == vj && i < j) {
                (i, j)
            } else {
                (j, i)
            }
        }
    }
}

fn key(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

/// Infers a joint for every part contact between fabricable parts.
pub fn infer_joint_types(pre: &Preprocessed, db: &Database, params: &JointInferenceParams) -> Result<Vec<JointAssignment>> {
    let am = &pre.analyzed;
    let mut out = Vec::new();
    for e in pre.contacts.part_edges() {
        let (Some(pi), Some(pj)) = (am.model.part(e.i), am.model.part(e.j)) else {
            continue;
        };
        if !pi.material.is_fabricable() || !pj.material.is_fabricable() {
            continue;
        }
        let (di, dj) = (am.descriptor(e.i).unwrap(), am.descriptor(e.j).unwrap());
        let category = JointCategory::of(pi.material, pj.material)?;
        let (joint, log_potential) = if let Some(&kind) = params.overrides.get(&key(e.i, e.j)) {
            if kind.category() != category {
                return Err(ReformError::Joint {
                    i: e.i,
                    j: e.j,
                    message: format!("override {kind} is not a {category} joint"),
                });
            }
            (
                JointType {
                    category,
                    kind,
                    ambiguous: false,
                    candidates: vec![kind],
                },
                None,
            )
        } else {
            let q = JointQuery {
                i: e.i,
                j: e.j,
                material_i: pi.material,
                material_j: pj.material,
                desc_i: di,
                desc_j: dj,
                compact_i: params.compact.contains(&e.i),
                compact_j: params.compact.contains(&e.j),
                barycenter_distance: (di.barycenter - dj.barycenter).norm(),
                orientation: orientation_vector(&di.obb.axes, &dj.obb.axes),
            };
            let (jt, s) = classify_joint(&q, db, params.k, &params.similarity)?;
            (jt, Some(s))
        };
        let (tenon_part, mortise_part) = if joint.kind == JointKind::MortiseTenon {
            let (t, m) = match params.tenon_overrides.get(&key(e.i, e.j)) {
                Some(&t) if t == e.i => (e.i, e.j),
                Some(&t) if t == e.j => (e.j, e.i),
                Some(&t) => {
                    return Err(ReformError::Joint {
                        i: e.i,
                        j: e.j,
                        message: format!("tenon override {t} is not incident"),
                    })
                }
                None => tenon_mortise_roles(e.i, e.j, di, dj, &e.contact_point),
            };
            (Some(t), Some(m))
        } else {
            (None, None)
        };
        if joint.ambiguous {
            tracing::info!(i = e.i, j = e.j, kind = %joint.kind, "ambiguous joint");
        }
        out.push(JointAssignment {
            i: e.i,
            j: e.j,
            joint,
            tenon_part,
            mortise_part,
            log_potential,
            contact_point: e.contact_point,
        });
    }
    for &(i, j) in params.overrides.keys().chain(params.tenon_overrides.keys()) {
        if !out.iter().any(|a| key(a.i, a.j) == (i, j)) {
            tracing::warn!(i, j, "override names no joint contact; ignored");
        }
    }
    Ok(out)
}
