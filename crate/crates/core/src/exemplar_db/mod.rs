//! The tagged exemplar database: parts, contacting pairs, angle histograms and clustered candidates.

mod histogram;
mod kmeans;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ReformError, Result};
use crate::fabrication::JointKind;
use crate::geometry::{Material, Model, TriangleMesh, Vec3};
use crate::part_analysis::PartDescriptor;
use crate::preprocess::{preprocess, AnalysisParams, Preprocessed};
use crate::similarity::orientation_vector;

pub use histogram::{
    angle_bin, bin_angle, AngleHistogram, MaterialPair, ANGLE_BINS, ANGLE_BIN_WIDTH, FEASIBILITY_THRESHOLD,
};
pub use kmeans::{kmeans, representatives, KMeans};

pub const DB_VERSION: u32 = 1;
pub const DEFAULT_CLUSTERS: usize = 80;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTag {
    pub i: usize,
    pub j: usize,
    pub kind: JointKind,
}

/// A training model with per-part materials and optional per-contact joint tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedModel {
    pub name: String,
    pub model: Model,
    #[serde(default)]
    pub joint_tags: Vec<JointTag>,
}

impl TaggedModel {
    pub fn joint(&self, a: usize, b: usize) -> Option<JointKind> {
        self.joint_tags
            .iter()
            .find(|t| (t.i, t.j) == (a, b) || (t.i, t.j) == (b, a))
            .map(|t| t.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarPart {
    pub id: usize,
    pub descriptor: PartDescriptor,
    pub material: Material,
    pub source_model: usize,
    pub source_part: usize,
    /// Database-wide congruence class, shared by repeated parts.
    pub congruence_class: Option<usize>,
    pub cluster_id: Option<usize>,
    pub mesh: TriangleMesh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarContact {
    pub u: usize,
    pub v: usize,
    pub barycenter_distance: f64,
    pub angle: Option<f64>,
    pub orientation_vec: [f64; 9],
    pub joint_type: Option<JointKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterInfo {
    pub k: usize,
    pub seed: u64,
    pub sse_history: BTreeMap<Material, Vec<f64>>,
}

/// Everything extracted from one training model, in model-local part indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub name: String,
    pub parts: Vec<RecordPart>,
    pub contacts: Vec<RecordContact>,
    pub ground: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordPart {
    pub part_id: usize,
    pub material: Material,
    pub descriptor: PartDescriptor,
    pub mesh: TriangleMesh,
    pub class: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordContact {
    pub a: usize,
    pub b: usize,
    pub barycenter_distance: f64,
    pub angle: Option<f64>,
    pub orientation_vec: [f64; 9],
    pub joint_type: Option<JointKind>,
}

/// Preprocesses one tagged model; parts tagged other are dropped with their contacts.
pub fn model_record(tm: &TaggedModel, params: &AnalysisParams) -> Result<(ModelRecord, Preprocessed)> {
    if let Some(p) = tm.model.parts.iter().find(|p| p.material == Material::Untagged) {
        return Err(ReformError::UntaggedPart {
            model: tm.name.clone(),
            part: p.name.clone(),
        });
    }
    let pre = preprocess(&tm.model, params)?;
    Ok((record_from(tm, &pre), pre))
}

/// Builds the record from already preprocessed geometry.
pub fn record_from(tm: &TaggedModel, pre: &Preprocessed) -> ModelRecord {
    let am = &pre.analyzed;
    let mut local: BTreeMap<usize, usize> = BTreeMap::new();
    let mut parts = Vec::new();
    for (k, p) in am.model.parts.iter().enumerate() {
        if !p.material.is_fabricable() {
            continue;
        }
        let class = pre.repetition.classes.iter().position(|c| c.contains(&p.id));
        local.insert(p.id, parts.len());
        parts.push(RecordPart {
            part_id: p.id,
            material: p.material,
            descriptor: am.parts[k].descriptor.clone(),
            mesh: p.mesh.clone(),
            class,
        });
    }
    let mut contacts = Vec::new();
    for e in pre.contacts.part_edges() {
        let (Some(&a), Some(&b)) = (local.get(&e.i), local.get(&e.j)) else {
            continue;
        };
        let (da, db) = (&parts[a].descriptor, &parts[b].descriptor);
        contacts.push(RecordContact {
            a,
            b,
            barycenter_distance: (da.barycenter - db.barycenter).norm(),
            angle: e.angle,
            orientation_vec: orientation_vector(&da.obb.axes, &db.obb.axes),
            joint_type: tm.joint(e.i, e.j),
        });
    }
    let ground = pre.contacts.ground_edges().filter_map(|e| local.get(&e.i).copied()).collect();
    ModelRecord {
        name: tm.name.clone(),
        parts,
        contacts,
        ground,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Database {
    pub version: u32,
    pub models: Vec<String>,
    pub parts: Vec<ExemplarPart>,
    pub contacts: Vec<ExemplarContact>,
    /// Exemplar parts touching the ground.
    pub ground_contacts: Vec<usize>,
    pub histograms: Vec<AngleHistogram>,
    pub candidates: Vec<usize>,
    pub clustering: Option<ClusterInfo>,
}

impl Database {
    /// Assembles a database from per-model records; every part starts as a candidate.
    pub fn from_records(records: &[ModelRecord]) -> Database {
        let mut parts = Vec::new();
        let mut contacts = Vec::new();
        let mut ground_contacts = Vec::new();
        let mut class_base = 0;
        for (m, rec) in records.iter().enumerate() {
            let base = parts.len();
            let mut max_class = None;
            for rp in &rec.parts {
                max_class = max_class.max(rp.class);
                parts.push(ExemplarPart {
                    id: parts.len(),
                    descriptor: rp.descriptor.clone(),
                    material: rp.material,
                    source_model: m,
                    source_part: rp.part_id,
                    congruence_class: rp.class.map(|c| c + class_base),
                    cluster_id: None,
                    mesh: rp.mesh.clone(),
                });
            }
            class_base += max_class.map_or(0, |c| c + 1);
            for rc in &rec.contacts {
                contacts.push(ExemplarContact {
                    u: base + rc.a,
                    v: base + rc.b,
                    barycenter_distance: rc.barycenter_distance,
                    angle: rc.angle,
                    orientation_vec: rc.orientation_vec,
                    joint_type: rc.joint_type,
                });
            }
            ground_contacts.extend(rec.ground.iter().map(|g| base + g));
        }
        let mut db = Database {
            version: DB_VERSION,
            models: records.iter().map(|r| r.name.clone()).collect(),
            candidates: (0..parts.len()).collect(),
            parts,
            contacts,
            ground_contacts,
            histograms: Vec::new(),
            clustering: None,
        };
        db.histograms = db.build_histograms();
        db
    }

    fn build_histograms(&self) -> Vec<AngleHistogram> {
        let mut wood = AngleHistogram::new(MaterialPair::WoodWood);
        let mut metal = AngleHistogram::new(MaterialPair::MetalMetal);
        for c in &self.contacts {
            let Some(angle) = c.angle else { continue };
            match MaterialPair::of(self.parts[c.u].material, self.parts[c.v].material) {
                Some(MaterialPair::WoodWood) => wood.add(angle),
                Some(MaterialPair::MetalMetal) => metal.add(angle),
                None => {}
            }
        }
        vec![wood, metal]
    }

    pub fn histogram(&self, pair: MaterialPair) -> Option<&AngleHistogram> {
        self.histograms.iter().find(|h| h.material_pair == pair)
    }

    /// Smoothed histogram frequency of `angle`; mixed-material contacts are always feasible.
    pub fn angle_feasibility(&self, a: Material, b: Material, angle: f64) -> Result<f64> {
        match MaterialPair::of(a, b) {
            None => Ok(1.0),
            Some(pair) => self
                .histogram(pair)
                .ok_or_else(|| ReformError::EmptyDatabase(format!("no {pair:?} histogram")))?
                .feasibility(angle),
        }
    }

    pub fn candidate_parts(&self) -> impl Iterator<Item = &ExemplarPart> {
        self.candidates.iter().map(|&c| &self.parts[c])
    }

    /// Drops repeated congruent parts, then clusters the rest into `k` groups by
    /// k-means on the 5D shape feature. The budget is split between wood and metal
    /// in proportion to their counts; each cluster contributes the member nearest
    /// its centroid.
    pub fn cluster_candidates(&mut self, k: usize, seed: u64) -> Result<()> {
        if k == 0 {
            return Err(ReformError::InvalidArgument("cluster count must be positive".into()));
        }
        let mut seen_class: BTreeMap<usize, usize> = BTreeMap::new();
        let mut unique: Vec<usize> = Vec::new();
        let mut duplicate_of: BTreeMap<usize, usize> = BTreeMap::new();
        for p in &self.parts {
            match p.congruence_class {
                Some(c) => match seen_class.get(&c) {
                    Some(&first) => {
                        duplicate_of.insert(p.id, first);
                    }
                    None => {
                        seen_class.insert(c, p.id);
                        unique.push(p.id);
                    }
                },
                None => unique.push(p.id),
            }
        }
        let mut by_material: BTreeMap<Material, Vec<usize>> = BTreeMap::new();
        for &u in &unique {
            by_material.entry(self.parts[u].material).or_default().push(u);
        }
        let quotas = split_quota(k, &by_material.iter().map(|(m, v)| (*m, v.len())).collect::<Vec<_>>());
        let mut candidates = Vec::new();
        let mut cluster_of: BTreeMap<usize, usize> = BTreeMap::new();
        let mut sse_history = BTreeMap::new();
        let mut next_cluster = 0;
        for (m, members) in &by_material {
            let km_k = quotas[m];
            if members.len() <= km_k {
                for &u in members {
                    cluster_of.insert(u, next_cluster);
                    candidates.push(u);
                    next_cluster += 1;
                }
                continue;
            }
            let feats: Vec<[f64; 5]> = members.iter().map(|&u| self.parts[u].descriptor.feature()).collect();
            let km = kmeans(&feats, km_k, seed ^ (*m as u64).wrapping_mul(0xA24B_AED4_963E_E407));
            for (idx, &u) in members.iter().enumerate() {
                cluster_of.insert(u, next_cluster + km.assignment[idx]);
            }
            for rep in representatives(&feats, &km).into_iter().flatten() {
                candidates.push(members[rep]);
            }
            sse_history.insert(*m, km.sse_history.clone());
            next_cluster += km_k;
        }
        for p in &mut self.parts {
            let root = duplicate_of.get(&p.id).copied().unwrap_or(p.id);
            p.cluster_id = cluster_of.get(&root).copied();
        }
        candidates.sort_unstable();
        self.candidates = candidates;
        self.clustering = Some(ClusterInfo { k, seed, sse_history });
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| ReformError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Database> {
        let text = fs::read_to_string(path).map_err(|e| ReformError::io(path, e))?;
        Database::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Database> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != DB_VERSION {
            return Err(ReformError::Version {
                found,
                expected: DB_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}

/// Largest-remainder split of `k` over groups, at least one per nonempty group.
fn split_quota(k: usize, groups: &[(Material, usize)]) -> BTreeMap<Material, usize> {
    let total: usize = groups.iter().map(|g| g.1).sum();
    let mut out: BTreeMap<Material, usize> = BTreeMap::new();
    if total == 0 {
        return out;
    }
    let mut rems = Vec::new();
    let mut used = 0;
    for &(m, n) in groups {
        let exact = k as f64 * n as f64 / total as f64;
        let q = (exact.floor() as usize).max(1).min(n);
        used += q;
        out.insert(m, q);
        rems.push((exact - exact.floor(), m, n));
    }
    rems.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut i = 0;
    while used < k && rems.iter().any(|&(_, m, n)| out[&m] < n) {
        let (_, m, n) = rems[i % rems.len()];
        if out[&m] < n {
            *out.get_mut(&m).unwrap() += 1;
            used += 1;
        }
        i += 1;
    }
    out
}

/// Preprocesses every tagged model and assembles the database (no clustering).
pub fn build_database(models: &[TaggedModel], params: &AnalysisParams) -> Result<Database> {
    let records = models
        .iter()
        .map(|tm| model_record(tm, params).map(|(r, _)| r))
        .collect::<Result<Vec<_>>>()?;
    Ok(Database::from_records(&records))
}

/// Barycenter of an exemplar part.
pub fn barycenter(p: &ExemplarPart) -> Vec3 {
    p.descriptor.barycenter
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::test_shapes::box_mesh;
    use crate::geometry::Part;

    fn table(top: Material, legs: Material) -> TaggedModel {
        let mut parts = vec![Part {
            id: 0,
            name: "top".into(),
            mesh: box_mesh(Vec3::new(0.0, 0.0, 0.62), Vec3::new(0.8, 0.5, 0.04)),
            material: top,
        }];
        for (k, (x, y)) in [(-0.35, -0.2), (0.35, -0.2), (-0.35, 0.2), (0.35, 0.2)].iter().enumerate() {
            parts.push(Part {
                id: k + 1,
                name: format!("leg{k}"),
                mesh: box_mesh(Vec3::new(*x, *y, 0.3), Vec3::new(0.04, 0.04, 0.6)),
                material: legs,
            });
        }
        TaggedModel {
            name: "table".into(),
            model: Model::new(parts).unwrap(),
            joint_tags: (1..5)
                .map(|k| JointTag {
                    i: 0,
                    j: k,
                    kind: JointKind::MortiseTenon,
                })
                .collect(),
        }
    }

    fn params() -> AnalysisParams {
        AnalysisParams {
            samples_per_part: 300,
            ..Default::default()
        }
    }

    #[test]
    fn table_counts() {
        let db = build_database(&[table(Material::Wood, Material::Wood)], &params()).unwrap();
        assert_eq!(db.parts.len(), 5);
        assert_eq!(db.contacts.len(), 4);
        assert_eq!(db.ground_contacts.len(), 4);
        assert!(db.contacts.iter().all(|c| c.joint_type == Some(JointKind::MortiseTenon)));
        let legs: Vec<_> = db.parts.iter().filter(|p| p.source_part > 0).collect();
        assert!(legs.iter().all(|p| p.congruence_class == legs[0].congruence_class && p.congruence_class.is_some()));
    }

    #[test]
    fn other_parts_are_excluded() {
        let mut tm = table(Material::Wood, Material::Wood);
        tm.model.parts[1].material = Material::Other;
        let db = build_database(&[tm], &params()).unwrap();
        assert_eq!(db.parts.len(), 4);
        assert_eq!(db.contacts.len(), 3);
    }

    #[test]
    fn untagged_part_is_named() {
        let mut tm = table(Material::Wood, Material::Wood);
        tm.model.parts[2].material = Material::Untagged;
        match build_database(&[tm], &params()) {
            Err(ReformError::UntaggedPart { model, part }) => assert_eq!((model.as_str(), part.as_str()), ("table", "leg1")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clustering_with_large_k_keeps_unique_parts() {
        let mut db = build_database(&[table(Material::Wood, Material::Metal)], &params()).unwrap();
        db.cluster_candidates(80, 1).unwrap();
        // Four congruent legs collapse to one.
        assert_eq!(db.candidates.len(), 2);
        assert!(db.parts.iter().all(|p| p.cluster_id.is_some()));
    }

    #[test]
    fn save_load_roundtrip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.json");
        let mut db = build_database(&[table(Material::Wood, Material::Wood)], &params()).unwrap();
        db.cluster_candidates(3, 2).unwrap();
        db.save(&path).unwrap();
        assert_eq!(Database::load(&path).unwrap(), db);
        let text = fs::read_to_string(&path).unwrap();
        assert!(matches!(Database::from_json(&text[..text.len() / 2]), Err(ReformError::Json(_))));
        let future = text.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(Database::from_json(&future), Err(ReformError::Version { found: 2, .. })));
    }

    #[test]
    fn quota_split_is_proportional_with_floor_of_one() {
        let q = split_quota(10, &[(Material::Wood, 90), (Material::Metal, 2)]);
        assert_eq!(q[&Material::Wood] + q[&Material::Metal], 10);
        assert!(q[&Material::Metal] >= 1);
    }
}
