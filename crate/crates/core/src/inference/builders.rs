use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::graph::{FactorGraph, FactorKind};
use crate::error::{ReformError, Result};
use crate::exemplar_db::Database;
use crate::geometry::Material;
use crate::preprocess::Preprocessed;
use crate::similarity::{
    contact_angle_similarity, material_similarity, shape_similarity_features, spatial_similarity, ShapeMode,
    SimilarityParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PotentialWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for PotentialWeights {
    fn default() -> Self {
        PotentialWeights { alpha: 0.1, beta: 20.0 }
    }
}

/// Label values of the material graph.
pub const MATERIAL_LABELS: [Material; 2] = [Material::Wood, Material::Metal];

/// Parts that take part in inference: everything not tagged other.
fn inference_parts(pre: &Preprocessed) -> Vec<usize> {
    pre.analyzed
        .model
        .parts
        .iter()
        .filter(|p| p.material != Material::Other)
        .map(|p| p.id)
        .collect()
}

fn feature_of(pre: &Preprocessed, id: usize) -> [f64; 5] {
    pre.analyzed.descriptor(id).expect("part id from the model").feature()
}

/// Factor graph for choosing a replacement exemplar per part.
///
/// Labels are candidate exemplar ids. Candidates whose material differs from the
/// part's target are pruned; a part left without candidates is an error.
pub fn build_reform_factor_graph(
    pre: &Preprocessed,
    targets: &BTreeMap<usize, Material>,
    db: &Database,
    compact: &BTreeSet<usize>,
    params: &SimilarityParams,
    weights: &PotentialWeights,
) -> Result<FactorGraph> {
    if db.candidates.is_empty() {
        return Err(ReformError::EmptyDatabase("no candidate parts".into()));
    }
    let ids = inference_parts(pre);
    let mode_of = |id: usize| if compact.contains(&id) { ShapeMode::ObbPlusArea } else { ShapeMode::ObbOnly };
    let cands: Vec<usize> = db.candidates.clone();
    let mut g = FactorGraph::new();
    let mut var_of: BTreeMap<usize, usize> = BTreeMap::new();
    let mut target_of = BTreeMap::new();
    for &id in &ids {
        let target = *targets.get(&id).ok_or_else(|| {
            ReformError::InvalidArgument(format!("no target material for part {id}"))
        })?;
        if !target.is_fabricable() {
            return Err(ReformError::UnresolvedMaterial(target.to_string()));
        }
        let f = feature_of(pre, id);
        let mut unary = Vec::with_capacity(cands.len());
        for &c in &cands {
            let p = &db.parts[c];
            let m = material_similarity(target, p.material)?;
            unary.push(m * shape_similarity_features(&f, &p.descriptor.feature(), mode_of(id), params));
        }
        var_of.insert(id, g.add_variable(id, cands.clone(), unary));
        target_of.insert(id, target);
    }

    // Candidate-vs-exemplar similarity rows, per shape mode.
    let sim_rows = |mode: ShapeMode| -> Vec<Vec<f64>> {
        cands
            .iter()
            .map(|&c| {
                let fc = db.parts[c].descriptor.feature();
                db.parts
                    .iter()
                    .map(|q| shape_similarity_features(&fc, &q.descriptor.feature(), mode, params))
                    .collect()
            })
            .collect()
    };
    let mut rows: BTreeMap<ShapeMode, Vec<Vec<f64>>> = BTreeMap::new();
    let mut tables: BTreeMap<(Material, Material, ShapeMode, ShapeMode), Vec<f64>> = BTreeMap::new();
    let n = cands.len();
    for e in pre.contacts.part_edges() {
        let (Some(&va), Some(&vb)) = (var_of.get(&e.i), var_of.get(&e.j)) else {
            continue;
        };
        let key = (target_of[&e.i], target_of[&e.j], mode_of(e.i), mode_of(e.j));
        if !tables.contains_key(&key) {
            for mode in [key.2, key.3] {
                rows.entry(mode).or_insert_with(|| sim_rows(mode));
            }
            let (si, sj) = (&rows[&key.2], &rows[&key.3]);
            let mut t = vec![0.0; n * n];
            for c in &db.contacts {
                for (u, v) in [(c.u, c.v), (c.v, c.u)] {
                    if db.parts[u].material != key.0 || db.parts[v].material != key.1 {
                        continue;
                    }
                    for a in 0..n {
                        let x = si[a][u];
                        if x == 0.0 {
                            continue;
                        }
                        let row = &mut t[a * n..(a + 1) * n];
                        for (b, r) in row.iter_mut().enumerate() {
                            *r += x * sj[b][v];
                        }
                    }
                }
            }
            tables.insert(key, t);
        }
        g.add_pairwise(va, vb, tables[&key].clone(), weights.alpha, FactorKind::Contact);
    }
    add_repetition(&mut g, pre, &var_of, weights.beta, |i, j| if i == j { 1.0 } else { 0.0 });

    if let Err(v) = g.prune_zero_unaries() {
        let id = g.variables[v].id;
        return Err(ReformError::EmptyDomain {
            part: id,
            material: target_of[&id].to_string(),
        });
    }
    Ok(g)
}

fn add_repetition(
    g: &mut FactorGraph,
    pre: &Preprocessed,
    var_of: &BTreeMap<usize, usize>,
    beta: f64,
    same: impl Fn(usize, usize) -> f64,
) {
    for &(a, b) in &pre.repetition.edges {
        let (Some(&va), Some(&vb)) = (var_of.get(&a), var_of.get(&b)) else {
            continue;
        };
        let (la, lb) = (&g.variables[va].labels, &g.variables[vb].labels);
        let table = la.iter().flat_map(|&x| lb.iter().map(move |&y| (x, y))).map(|(x, y)| same(x, y)).collect();
        g.add_pairwise(va, vb, table, beta, FactorKind::Repetition);
    }
}

/// Factor graph for suggesting wood or metal per part (labels index [`MATERIAL_LABELS`]).
pub fn build_material_factor_graph(
    pre: &Preprocessed,
    db: &Database,
    params: &SimilarityParams,
    weights: &PotentialWeights,
) -> Result<FactorGraph> {
    if db.parts.is_empty() {
        return Err(ReformError::EmptyDatabase("no exemplar parts".into()));
    }
    let ids = inference_parts(pre);
    let mut g = FactorGraph::new();
    let mut var_of = BTreeMap::new();
    // Shape similarity of each query part to every exemplar part.
    let mut sim: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &id in &ids {
        let f = feature_of(pre, id);
        let s: Vec<f64> = db
            .parts
            .iter()
            .map(|p| shape_similarity_features(&f, &p.descriptor.feature(), ShapeMode::Full, params))
            .collect();
        let mut unary = vec![0.0; 2];
        for (k, p) in db.parts.iter().enumerate() {
            for (l, m) in MATERIAL_LABELS.iter().enumerate() {
                unary[l] += material_similarity(*m, p.material)? * s[k];
            }
        }
        var_of.insert(id, g.add_variable(id, vec![0, 1], unary));
        sim.insert(id, s);
    }
    for e in pre.contacts.part_edges() {
        let (Some(&va), Some(&vb)) = (var_of.get(&e.i), var_of.get(&e.j)) else {
            continue;
        };
        let (si, sj) = (&sim[&e.i], &sim[&e.j]);
        let bi = pre.analyzed.descriptor(e.i).unwrap().barycenter;
        let bj = pre.analyzed.descriptor(e.j).unwrap().barycenter;
        let d_ij = (bi - bj).norm();
        let mut t = vec![0.0; 4];
        for c in &db.contacts {
            let common = spatial_similarity(d_ij, c.barycenter_distance, params)
                * contact_angle_similarity(e.angle, c.angle, params);
            if common == 0.0 {
                continue;
            }
            for (u, v) in [(c.u, c.v), (c.v, c.u)] {
                let (mu, mv) = (db.parts[u].material, db.parts[v].material);
                let li = MATERIAL_LABELS.iter().position(|m| *m == mu);
                let lj = MATERIAL_LABELS.iter().position(|m| *m == mv);
                if let (Some(li), Some(lj)) = (li, lj) {
                    t[li * 2 + lj] += si[u] * sj[v] * common;
                }
            }
        }
        g.add_pairwise(va, vb, t, weights.alpha, FactorKind::Contact);
    }
    add_repetition(&mut g, pre, &var_of, weights.beta, |i, j| if i == j { 1.0 } else { 0.0 });
    g.validate()?;
    Ok(g)
}
