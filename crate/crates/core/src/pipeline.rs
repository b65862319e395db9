//! Stage-by-stage reform pipeline with persisted, inspectable state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::assembly::{place_replacements, placed_model, restore_contacts, RestoreReport};
use crate::config_opt::{apply_configuration, build_angle_problem, optimize_angles, AngleOptOutcome, AngleOptParams};
use crate::error::{ReformError, Result};
use crate::exemplar_db::{Database, DEFAULT_CLUSTERS};
use crate::fabrication::{
    apply_refinement, export_spec, form_joint_geometry, obb_gap, infer_joint_types, refine_part_dimensions, FabricationSpec,
    FormedJoints, JointAssignment, JointGeometry, JointInferenceParams, JointKind, RefineParams, RefineReport, TenonJoint,
    DEFAULT_K,
};
use crate::geometry::{normalize_model, write_obj, Bvh, Material, Model, Vec3};
use crate::inference::{
    build_material_factor_graph, build_reform_factor_graph, run_loopy_bp, BpSettings, PotentialWeights, MATERIAL_LABELS,
};
use crate::part_analysis::{analyze_model, AnalyzedModel, OrientedBox, SAMPLES_PER_PART, THICKNESS_BIN};
use crate::preprocess::{preprocess_normalized, AnalysisParams, Preprocessed};
use crate::similarity::SimilarityParams;
use crate::structure::{
    build_repetition_graph, estimate_contact_angle, ground_contacts, ContactEdge, ContactGraph, DEFAULT_CONTACT_DISTANCE,
};

/// Target materials: suggested, uniform, or per part (by id or name).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TargetMaterials {
    #[default]
    Suggest,
    All(Material),
    PerPart(Vec<(String, Material)>),
}

impl FromStr for TargetMaterials {
    type Err = ReformError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("suggest") {
            return Ok(TargetMaterials::Suggest);
        }
        let bad = || ReformError::InvalidArgument(format!("bad target material `{s}`"));
        let mut pairs = Vec::new();
        for item in s.split(',') {
            let (k, v) = item.split_once('=').ok_or_else(bad)?;
            let m = Material::parse(v.trim()).filter(|m| m.is_fabricable()).ok_or_else(bad)?;
            pairs.push((k.trim().to_string(), m));
        }
        match pairs.as_slice() {
            [(k, m)] if k == "all" => Ok(TargetMaterials::All(*m)),
            _ if pairs.iter().any(|(k, _)| k == "all" || k.is_empty()) => Err(bad()),
            _ => Ok(TargetMaterials::PerPart(pairs)),
        }
    }
}

impl fmt::Display for TargetMaterials {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetMaterials::Suggest => f.write_str("suggest"),
            TargetMaterials::All(m) => write!(f, "all={m}"),
            TargetMaterials::PerPart(v) => {
                let items: Vec<String> = v.iter().map(|(k, m)| format!("{k}={m}")).collect();
                f.write_str(&items.join(","))
            }
        }
    }
}

impl Serialize for TargetMaterials {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TargetMaterials {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointOverride {
    pub i: usize,
    pub j: usize,
    pub kind: JointKind,
}

impl FromStr for JointOverride {
    type Err = ReformError;

    /// `i,j=kind`
    fn from_str(s: &str) -> Result<Self> {
        let bad = || ReformError::InvalidArgument(format!("bad joint override `{s}` (expected i,j=kind)"));
        let (pair, kind) = s.split_once('=').ok_or_else(bad)?;
        let (i, j) = pair.split_once(',').ok_or_else(bad)?;
        Ok(JointOverride {
            i: i.trim().parse().map_err(|_| bad())?,
            j: j.trim().parse().map_err(|_| bad())?,
            kind: JointKind::parse(kind).ok_or_else(bad)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TenonOverride {
    pub i: usize,
    pub j: usize,
    pub tenon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub contact_distance: f64,
    pub samples_per_part: usize,
    pub thickness_bin: f64,
    pub similarity: SimilarityParams,
    pub weights: PotentialWeights,
    pub bp: BpSettings,
    pub angle: AngleOptParams,
    pub refine: RefineParams,
    pub joint_k: usize,
    pub targets: TargetMaterials,
    /// Parts whose replacement also matches area ratios.
    pub compact: BTreeSet<usize>,
    pub joint_overrides: Vec<JointOverride>,
    pub tenon_overrides: Vec<TenonOverride>,
    /// Candidate clusters used when the database is not clustered yet.
    pub clusters: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            contact_distance: DEFAULT_CONTACT_DISTANCE,
            samples_per_part: SAMPLES_PER_PART,
            thickness_bin: THICKNESS_BIN,
            similarity: SimilarityParams::default(),
            weights: PotentialWeights::default(),
            bp: BpSettings::default(),
            angle: AngleOptParams::default(),
            refine: RefineParams::default(),
            joint_k: DEFAULT_K,
            targets: TargetMaterials::Suggest,
            compact: BTreeSet::new(),
            joint_overrides: Vec::new(),
            tenon_overrides: Vec::new(),
            clusters: DEFAULT_CLUSTERS,
            seed: 0,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ReformError::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path).map_err(|e| ReformError::io(path, e))?;
        let cfg: PipelineConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        positive("contact_distance", self.contact_distance)?;
        positive("thickness_bin", self.thickness_bin)?;
        self.similarity.validate()?;
        positive("weights.alpha", self.weights.alpha)?;
        positive("weights.beta", self.weights.beta)?;
        positive("angle.threshold", self.angle.threshold)?;
        positive("angle.sigma", self.angle.sigma)?;
        positive("refine.tenon_scale", self.refine.tenon_scale)?;
        positive("refine.penetration", self.refine.penetration)?;
        if self.refine.wall_margin < 0.0 {
            return Err(ReformError::InvalidArgument("refine.wall_margin must not be negative".into()));
        }
        if self.samples_per_part == 0 || self.joint_k == 0 || self.clusters == 0 || self.angle.max_iters == 0 {
            return Err(ReformError::InvalidArgument("sample, neighbour, cluster and iteration counts must be positive".into()));
        }
        Ok(())
    }

    pub fn analysis(&self) -> AnalysisParams {
        AnalysisParams {
            samples_per_part: self.samples_per_part,
            contact_distance: self.contact_distance,
            thickness_bin: self.thickness_bin,
            seed: self.seed,
        }
    }

    pub fn joint_params(&self) -> JointInferenceParams {
        let key = |i: usize, j: usize| (i.min(j), i.max(j));
        JointInferenceParams {
            k: self.joint_k,
            similarity: self.similarity,
            overrides: self.joint_overrides.iter().map(|o| (key(o.i, o.j), o.kind)).collect(),
            tenon_overrides: self.tenon_overrides.iter().map(|o| (key(o.i, o.j), o.tenon)).collect(),
            compact: self.compact.clone(),
        }
    }
}

/// Clusters the candidate set if that has not been done yet.
pub fn ensure_clustered(db: &mut Database, cfg: &PipelineConfig) -> Result<()> {
    if db.clustering.is_none() {
        db.cluster_candidates(cfg.clusters, cfg.seed)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialSuggestion {
    pub materials: BTreeMap<usize, Material>,
    pub log_potential: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Wood or metal per fabricable part by BP on the material graph.
pub fn suggest_materials(pre: &Preprocessed, db: &Database, cfg: &PipelineConfig) -> Result<MaterialSuggestion> {
    let g = build_material_factor_graph(pre, db, &cfg.similarity, &cfg.weights)?;
    let a = run_loopy_bp(&g, &cfg.bp)?;
    let materials = g
        .variables
        .iter()
        .zip(&a.labels)
        .map(|(v, &l)| (v.id, MATERIAL_LABELS[l]))
        .collect();
    Ok(MaterialSuggestion {
        materials,
        log_potential: a.log_potential,
        converged: a.converged,
        iterations: a.iterations,
    })
}

/// Target material of every part that takes part in reform.
pub fn resolve_targets(model: &Model, targets: &TargetMaterials, suggestion: Option<&MaterialSuggestion>) -> Result<BTreeMap<usize, Material>> {
    let active: Vec<usize> = model.parts.iter().filter(|p| p.material != Material::Other).map(|p| p.id).collect();
    let mut out = BTreeMap::new();
    match targets {
        TargetMaterials::Suggest => {
            let s = suggestion.ok_or_else(|| ReformError::InvalidArgument("suggested targets need a material suggestion".into()))?;
            for id in active {
                let m = s
                    .materials
                    .get(&id)
                    .ok_or_else(|| ReformError::InvalidArgument(format!("no suggestion for part {id}")))?;
                out.insert(id, *m);
            }
        }
        TargetMaterials::All(m) => {
            out.extend(active.iter().map(|&id| (id, *m)));
        }
        TargetMaterials::PerPart(pairs) => {
            for &id in &active {
                let m = model.part(id).unwrap().material;
                if m.is_fabricable() {
                    out.insert(id, m);
                }
            }
            for (key, m) in pairs {
                let part = key
                    .parse::<usize>()
                    .ok()
                    .and_then(|id| model.part(id))
                    .or_else(|| model.parts.iter().find(|p| &p.name == key))
                    .ok_or_else(|| ReformError::InvalidArgument(format!("unknown part `{key}` in target materials")))?;
                out.insert(part.id, *m);
            }
            if let Some(&id) = active.iter().find(|id| !out.contains_key(id)) {
                return Err(ReformError::UnresolvedMaterial(format!("part {id} has no target")));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReformChoice {
    pub targets: BTreeMap<usize, Material>,
    /// Part id to exemplar part id.
    pub replacements: BTreeMap<usize, usize>,
    pub log_potential: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Chooses a replacement exemplar per part by BP on the reform graph.
pub fn choose_replacements(pre: &Preprocessed, targets: &BTreeMap<usize, Material>, db: &Database, cfg: &PipelineConfig) -> Result<ReformChoice> {
    let g = build_reform_factor_graph(pre, targets, db, &cfg.compact, &cfg.similarity, &cfg.weights)?;
    let a = run_loopy_bp(&g, &cfg.bp)?;
    Ok(ReformChoice {
        targets: targets.clone(),
        replacements: g.variables.iter().zip(&a.labels).map(|(v, &l)| (v.id, l)).collect(),
        log_potential: a.log_potential,
        converged: a.converged,
        iterations: a.iterations,
    })
}

/// Closest-point midpoint between two meshes near `hint`.
fn mutual_contact(a: &Bvh, b: &Bvh, hint: &Vec3) -> Vec3 {
    let qb = b.closest_point(hint).map_or(*hint, |r| r.0);
    let qa = a.closest_point(&qb).map_or(qb, |r| r.0);
    0.5 * (qa + qb)
}

/// Contact graph of a reformed model: the given topology, contact points at the
/// meshes' mutual closest points, angles and ground contacts re-estimated.
pub fn carry_contacts(am: &AnalyzedModel, topology: &ContactGraph, contact_distance: f64, moved: &dyn Fn(usize) -> bool) -> ContactGraph {
    let bvh_of = |id: usize| am.index_of(id).map(|k| &am.parts[k].bvh);
    let mut edges: Vec<ContactEdge> = Vec::new();
    for e in topology.part_edges() {
        let (Some(ki), Some(kj)) = (am.index_of(e.i), am.index_of(e.j)) else {
            continue;
        };
        let c = if moved(e.i) || moved(e.j) {
            mutual_contact(bvh_of(e.i).unwrap(), bvh_of(e.j).unwrap(), &e.contact_point)
        } else {
            e.contact_point
        };
        edges.push(ContactEdge {
            i: e.i,
            j: e.j,
            contact_point: c,
            angle: estimate_contact_angle(&am.parts[ki], &am.parts[kj], &c),
            is_ground: false,
        });
    }
    edges.extend(ground_contacts(am, contact_distance));
    edges.sort_by_key(|e| e.key());
    let mut nodes: Vec<usize> = am.model.parts.iter().map(|p| p.id).collect();
    nodes.sort_unstable();
    ContactGraph { nodes, edges }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: String,
    pub seconds: f64,
    pub details: serde_json::Value,
}

/// Everything the stages produce; each stage fills its fields and appends a log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub config: PipelineConfig,
    /// Input model in normalized units.
    pub query: Model,
    pub suggestion: Option<MaterialSuggestion>,
    pub reform: Option<ReformChoice>,
    pub restored: Option<Model>,
    pub restore_report: Option<RestoreReport>,
    pub reformed_contacts: Option<ContactGraph>,
    pub angles: Option<AngleOptOutcome>,
    pub optimized: Option<Model>,
    pub final_contacts: Option<ContactGraph>,
    pub joints: Option<Vec<JointAssignment>>,
    /// Contacts left open after restoration; they get no joint.
    #[serde(default)]
    pub open_contacts: Vec<(usize, usize)>,
    pub refined: Option<Model>,
    pub boxes: Option<BTreeMap<usize, OrientedBox>>,
    pub refine_report: Option<RefineReport>,
    pub joint_geometry: Option<Vec<JointGeometry>>,
    pub logs: Vec<StageLog>,
}

/// A stage failure, named for the error report.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: ReformError,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn missing(what: &str) -> ReformError {
    ReformError::InvalidArgument(format!("pipeline state has no {what}; run the earlier stage first"))
}

pub const STAGES: [&str; 9] = [
    "preprocess",
    "suggest",
    "reform",
    "restore",
    "optimize-angles",
    "infer-joints",
    "refine",
    "form-joints",
    "export",
];

impl PipelineState {
    pub fn new(model: &Model, config: PipelineConfig) -> Result<PipelineState> {
        config.validate()?;
        Ok(PipelineState {
            query: normalize_model(model)?,
            config,
            suggestion: None,
            reform: None,
            restored: None,
            restore_report: None,
            reformed_contacts: None,
            angles: None,
            optimized: None,
            final_contacts: None,
            joints: None,
            open_contacts: Vec::new(),
            refined: None,
            boxes: None,
            refine_report: None,
            joint_geometry: None,
            logs: Vec::new(),
        })
    }

    pub fn load(path: &Path) -> Result<PipelineState> {
        let text = fs::read_to_string(path).map_err(|e| ReformError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?).map_err(|e| ReformError::io(path, e))
    }

    fn log(&mut self, stage: &str, start: Instant, details: serde_json::Value) {
        let seconds = start.elapsed().as_secs_f64();
        tracing::info!(stage, seconds, "stage done");
        self.logs.retain(|l| l.stage != stage);
        self.logs.push(StageLog {
            stage: stage.to_string(),
            seconds,
            details,
        });
    }

    pub fn preprocess_query(&self) -> Result<Preprocessed> {
        preprocess_normalized(&self.query, &self.config.analysis())
    }

    pub fn suggest(&mut self, pre: &Preprocessed, db: &Database) -> Result<()> {
        let t = Instant::now();
        let s = suggest_materials(pre, db, &self.config)?;
        self.log("suggest", t, serde_json::json!({ "log_potential": s.log_potential, "converged": s.converged, "iterations": s.iterations, "materials": &s.materials }));
        self.suggestion = Some(s);
        Ok(())
    }

    pub fn reform(&mut self, pre: &Preprocessed, db: &Database) -> Result<()> {
        let t = Instant::now();
        if self.config.targets == TargetMaterials::Suggest && self.suggestion.is_none() {
            self.suggest(pre, db)?;
        }
        let targets = resolve_targets(&self.query, &self.config.targets, self.suggestion.as_ref())?;
        let choice = choose_replacements(pre, &targets, db, &self.config)?;
        self.log("reform", t, serde_json::json!({ "log_potential": choice.log_potential, "converged": choice.converged, "iterations": choice.iterations, "replacements": &choice.replacements }));
        self.reform = Some(choice);
        Ok(())
    }

    pub fn restore(&mut self, pre: &Preprocessed, db: &Database) -> Result<()> {
        let t = Instant::now();
        let choice = self.reform.as_ref().ok_or_else(|| missing("replacement choice"))?;
        let mut placed = place_replacements(pre, &choice.replacements, db)?;
        for p in &mut placed {
            if let Some(m) = choice.targets.get(&p.part_id) {
                p.material = *m;
            }
        }
        let (restored, report) = restore_contacts(&placed, &pre.contacts)?;
        let model = placed_model(&self.query, &restored)?;
        let am = analyze_model(&model, self.config.samples_per_part, self.config.seed, self.config.thickness_bin)?;
        let contacts = carry_contacts(&am, &pre.contacts, self.config.contact_distance, &|_| true);
        self.log("restore", t, serde_json::json!({ "objective_before": report.objective_before, "objective_after": report.objective_after, "fixed": &report.fixed, "isolated": &report.isolated }));
        self.restored = Some(model);
        self.restore_report = Some(report);
        self.reformed_contacts = Some(contacts);
        Ok(())
    }

    pub fn optimize_angles(&mut self, pre: &Preprocessed, db: &Database) -> Result<()> {
        let t = Instant::now();
        let model = self.restored.as_ref().ok_or_else(|| missing("restored model"))?;
        let contacts = self.reformed_contacts.as_ref().ok_or_else(|| missing("reformed contacts"))?;
        let am = analyze_model(model, self.config.samples_per_part, self.config.seed, self.config.thickness_bin)?;
        let problem = build_angle_problem(&am, contacts, &pre.repetition.classes, self.config.contact_distance);
        let outcome = optimize_angles(&problem, db, &self.config.angle)?;
        let optimized = apply_configuration(model, &problem, &outcome.selected)?;
        let moved: BTreeSet<usize> = outcome.selected.segments.keys().copied().collect();
        let dropped: BTreeSet<(usize, usize)> = outcome.selected.dropped.iter().copied().collect();
        let mut topology = contacts.clone();
        topology.edges.retain(|e| e.is_ground || !dropped.contains(&(e.i, e.j)));
        let am2 = analyze_model(&optimized, self.config.samples_per_part, self.config.seed, self.config.thickness_bin)?;
        let finals = carry_contacts(&am2, &topology, self.config.contact_distance, &|id| moved.contains(&id));
        let sel = &outcome.selected;
        self.log("optimize-angles", t, serde_json::json!({ "constraints": outcome.constraints.len(), "sets": outcome.sets_enumerated, "truncated": outcome.truncated, "objective": sel.objective, "feasible": sel.feasible, "hanging": &sel.hanging, "dropped": &sel.dropped, "set_index": sel.set_index }));
        self.angles = Some(outcome);
        self.optimized = Some(optimized);
        self.final_contacts = Some(finals);
        Ok(())
    }

    fn final_preprocessed(&self, pre: &Preprocessed) -> Result<(Preprocessed, Vec<(usize, usize)>)> {
        let model = self.optimized.as_ref().ok_or_else(|| missing("optimized model"))?;
        let mut contacts = self.final_contacts.clone().ok_or_else(|| missing("final contacts"))?;
        let analyzed = analyze_model(model, self.config.samples_per_part, self.config.seed, self.config.thickness_bin)?;
        // Contacts the restore solve could not close get no joint.
        let obb = |id: usize| analyzed.index_of(id).map(|k| analyzed.parts[k].descriptor.obb);
        let mut open = Vec::new();
        contacts.edges.retain(|e| {
            if e.is_ground {
                return true;
            }
            let (Some(a), Some(b)) = (obb(e.i), obb(e.j)) else { return true };
            let gap = obb_gap(&a, &b);
            if gap > self.config.contact_distance {
                tracing::warn!("contact ({}, {}) left open by {gap:.4}; no joint formed", e.i, e.j);
                open.push((e.i, e.j));
                return false;
            }
            true
        });
        let repetition = if pre.repetition.classes.is_empty() { build_repetition_graph(&analyzed) } else { pre.repetition.clone() };
        Ok((
            Preprocessed {
                analyzed,
                contacts,
                repetition,
            },
            open,
        ))
    }

    pub fn infer_joints(&mut self, pre: &Preprocessed, db: &Database) -> Result<()> {
        let t = Instant::now();
        let (fin, open) = self.final_preprocessed(pre)?;
        let joints = infer_joint_types(&fin, db, &self.config.joint_params())?;
        let ambiguous = joints.iter().filter(|j| j.joint.ambiguous).count();
        let kinds: BTreeMap<String, usize> = joints.iter().fold(BTreeMap::new(), |mut m, j| {
            *m.entry(j.joint.kind.to_string()).or_insert(0) += 1;
            m
        });
        self.log("infer-joints", t, serde_json::json!({ "joints": joints.len(), "ambiguous": ambiguous, "kinds": kinds, "open_contacts": &open }));
        self.open_contacts = open;
        self.boxes = Some(fin.analyzed.parts.iter().zip(&fin.analyzed.model.parts).map(|(a, p)| (p.id, a.descriptor.obb)).collect());
        self.joints = Some(joints);
        Ok(())
    }

    pub fn refine(&mut self) -> Result<()> {
        let t = Instant::now();
        let model = self.optimized.as_ref().ok_or_else(|| missing("optimized model"))?;
        let joints = self.joints.as_ref().ok_or_else(|| missing("joint assignments"))?;
        let boxes = self.boxes.clone().ok_or_else(|| missing("part boxes"))?;
        let tenons: Vec<TenonJoint> = joints.iter().filter_map(TenonJoint::from_assignment).collect();
        match refine_part_dimensions(&boxes, &tenons, &self.config.refine) {
            Ok((after, report)) => {
                self.refined = Some(apply_refinement(model, &boxes, &after)?);
                self.log("refine", t, serde_json::json!({ "objective": report.objective, "kkt_residual": report.kkt_residual, "active": report.active_constraints, "parts": report.parts.len() }));
                self.boxes = Some(after);
                self.refine_report = Some(report);
            }
            Err(e @ ReformError::InfeasibleRefinement { .. }) => {
                tracing::warn!("{e}; parts left unscaled");
                self.refined = Some(model.clone());
                self.log("refine", t, serde_json::json!({ "infeasible": e.to_string() }));
            }
            Err(e) => return Err(e),
        }
        Ok(())
    }

    pub fn form_joints(&mut self) -> Result<FormedJoints> {
        let t = Instant::now();
        let joints = self.joints.as_ref().ok_or_else(|| missing("joint assignments"))?;
        let boxes = self.boxes.as_ref().ok_or_else(|| missing("part boxes"))?;
        let formed = form_joint_geometry(joints, boxes, self.config.contact_distance, &self.config.refine)?;
        let volumes: Vec<serde_json::Value> = formed
            .joints
            .iter()
            .filter(|g| g.tenon_volume.is_some())
            .map(|g| serde_json::json!({ "i": g.i, "j": g.j, "tenon": g.tenon_volume, "cavity": g.cavity_volume }))
            .collect();
        self.log("form-joints", t, serde_json::json!({ "sculpted_parts": formed.parts.len(), "volumes": volumes }));
        self.joint_geometry = Some(formed.joints.clone());
        Ok(formed)
    }

    /// Writes the reformed model, the fabrication spec with meshes, and the stage logs.
    pub fn export(&mut self, out: &Path, formed: &FormedJoints) -> Result<FabricationSpec> {
        let t = Instant::now();
        let model = self.refined.as_ref().ok_or_else(|| missing("refined model"))?;
        let joints = self.joints.as_ref().ok_or_else(|| missing("joint assignments"))?;
        let boxes = self.boxes.as_ref().ok_or_else(|| missing("part boxes"))?;
        fs::create_dir_all(out).map_err(|e| ReformError::io(out, e))?;
        write_obj(&out.join("reformed.obj"), model.parts.iter().map(|p| (p.name.as_str(), &p.mesh)))?;
        let mut spec = FabricationSpec::assemble(model, boxes, joints, formed)?;
        spec.open_contacts = self.open_contacts.clone();
        spec.validate()?;
        export_spec(&out.join("spec"), &spec, model, formed)?;
        self.log("export", t, serde_json::json!({ "parts": spec.parts.len(), "joints": spec.joints.len(), "unit_scale": 1.0 / self.query.global_scale }));
        let logs = out.join("stage_logs.json");
        fs::write(&logs, serde_json::to_string_pretty(&self.logs)?).map_err(|e| ReformError::io(&logs, e))?;
        Ok(spec)
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|error| StageError { stage: name, error })
}

/// Runs every stage in order, persisting the state after each one when `out` is set.
pub fn run_pipeline(model: &Model, db: &Database, config: PipelineConfig, out: Option<&Path>) -> std::result::Result<(PipelineState, Option<FabricationSpec>), StageError> {
    let mut st = stage("preprocess", PipelineState::new(model, config))?;
    let t = Instant::now();
    let pre = stage("preprocess", st.preprocess_query())?;
    st.log("preprocess", t, serde_json::json!({ "parts": pre.analyzed.parts.len(), "contacts": pre.contacts.part_edges().count(), "ground": pre.contacts.ground_edges().count(), "classes": pre.repetition.classes.len() }));
    let persist = |st: &PipelineState, name: &'static str| -> std::result::Result<(), StageError> {
        if let Some(dir) = out {
            stage(name, fs::create_dir_all(dir).map_err(|e| ReformError::io(dir, e)))?;
            stage(name, st.save(&dir.join("state.json")))?;
        }
        Ok(())
    };
    if st.config.targets == TargetMaterials::Suggest {
        stage("suggest", st.suggest(&pre, db))?;
        persist(&st, "suggest")?;
    }
    stage("reform", st.reform(&pre, db))?;
    persist(&st, "reform")?;
    stage("restore", st.restore(&pre, db))?;
    persist(&st, "restore")?;
    stage("optimize-angles", st.optimize_angles(&pre, db))?;
    persist(&st, "optimize-angles")?;
    stage("infer-joints", st.infer_joints(&pre, db))?;
    persist(&st, "infer-joints")?;
    stage("refine", st.refine())?;
    persist(&st, "refine")?;
    let formed = stage("form-joints", st.form_joints())?;
    persist(&st, "form-joints")?;
    let spec = match out {
        Some(dir) => {
            let s = stage("export", st.export(dir, &formed))?;
            persist(&st, "export")?;
            Some(s)
        }
        None => None,
    };
    Ok((st, spec))
}
