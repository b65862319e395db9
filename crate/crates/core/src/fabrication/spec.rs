use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::forming::FormedJoints;
use super::joints::JointAssignment;
use super::{JointCategory, JointKind};
use crate::error::{ReformError, Result};
use crate::geometry::{write_obj, Material, Model, Vec3};
use crate::part_analysis::OrientedBox;

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecPart {
    pub id: usize,
    pub name: String,
    pub material: Material,
    pub obb: OrientedBox,
    /// Full box extents, descending.
    pub dimensions: [f64; 3],
    /// Mesh file relative to the output directory.
    pub mesh: String,
    pub sculpted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecJoint {
    pub i: usize,
    pub j: usize,
    pub category: JointCategory,
    pub kind: JointKind,
    pub ambiguous: bool,
    pub candidates: Vec<JointKind>,
    pub tenon_part: Option<usize>,
    pub mortise_part: Option<usize>,
    pub contact_point: Vec3,
    pub tenon_volume: Option<f64>,
    pub cavity_volume: Option<f64>,
    pub geometry: Vec<String>,
    pub note: Option<String>,
}

/// Part dimensions and joint specifications of a reformed model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FabricationSpec {
    pub version: u32,
    pub parts: Vec<SpecPart>,
    pub joints: Vec<SpecJoint>,
    /// Contacts of the original model the reformed parts no longer close.
    #[serde(default)]
    pub open_contacts: Vec<(usize, usize)>,
}

impl FabricationSpec {
    pub fn assemble(
        model: &Model,
        obbs: &BTreeMap<usize, OrientedBox>,
        assignments: &[JointAssignment],
        formed: &FormedJoints,
    ) -> Result<FabricationSpec> {
        let mut parts = Vec::new();
        for p in &model.parts {
            let obb = *obbs
                .get(&p.id)
                .ok_or_else(|| ReformError::InvalidArgument(format!("no box for part {}", p.id)))?;
            parts.push(SpecPart {
                id: p.id,
                name: p.name.clone(),
                material: p.material,
                obb,
                dimensions: obb.extents(),
                mesh: format!("parts/part_{}.obj", p.id),
                sculpted: formed.parts.contains_key(&p.id),
            });
        }
        let mut joints = Vec::new();
        for a in assignments {
            let g = formed.joints.iter().find(|g| g.i == a.i && g.j == a.j);
            joints.push(SpecJoint {
                i: a.i,
                j: a.j,
                category: a.joint.category,
                kind: a.joint.kind,
                ambiguous: a.joint.ambiguous,
                candidates: a.joint.candidates.clone(),
                tenon_part: a.tenon_part,
                mortise_part: a.mortise_part,
                contact_point: a.contact_point,
                tenon_volume: g.and_then(|g| g.tenon_volume),
                cavity_volume: g.and_then(|g| g.cavity_volume),
                geometry: g
                    .map(|g| (0..g.pieces.len()).map(|k| format!("joints/joint_{}_{}_{k}.obj", a.i, a.j)).collect())
                    .unwrap_or_default(),
                note: g.and_then(|g| g.note.clone()),
            });
        }
        let spec = FabricationSpec {
            version: SPEC_VERSION,
            parts,
            joints,
            open_contacts: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Referenced parts exist, dimensions are positive and each contact appears once.
    pub fn validate(&self) -> Result<()> {
        let ids: Vec<usize> = self.parts.iter().map(|p| p.id).collect();
        for p in &self.parts {
            if p.dimensions.iter().any(|d| !(*d > 0.0)) {
                return Err(ReformError::InvalidArgument(format!("part {} has a non-positive dimension", p.id)));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for j in &self.joints {
            for id in [Some(j.i), Some(j.j), j.tenon_part, j.mortise_part].into_iter().flatten() {
                if !ids.contains(&id) {
                    return Err(ReformError::InvalidArgument(format!("joint ({},{}) names missing part {id}", j.i, j.j)));
                }
            }
            if !seen.insert((j.i.min(j.j), j.i.max(j.j))) {
                return Err(ReformError::InvalidArgument(format!("joint ({},{}) listed twice", j.i, j.j)));
            }
        }
        for &(i, j) in &self.open_contacts {
            if !ids.contains(&i) || !ids.contains(&j) {
                return Err(ReformError::InvalidArgument(format!("open contact ({i},{j}) names a missing part")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(ReformError::InvalidArgument(format!("contact ({i},{j}) listed twice")));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<FabricationSpec> {
        let text = fs::read_to_string(path).map_err(|e| ReformError::io(path, e))?;
        let spec: FabricationSpec = serde_json::from_str(&text)?;
        if spec.version != SPEC_VERSION {
            return Err(ReformError::Version {
                found: spec.version,
                expected: SPEC_VERSION,
            });
        }
        Ok(spec)
    }
}

/// Writes `spec.json`, one OBJ per part (sculpted proxy where formed) and the joint pieces.
pub fn export_spec(dir: &Path, spec: &FabricationSpec, model: &Model, formed: &FormedJoints) -> Result<()> {
    for sub in ["parts", "joints"] {
        let d = dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| ReformError::io(&d, e))?;
    }
    for sp in &spec.parts {
        let mesh = match formed.parts.get(&sp.id) {
            Some(m) => m,
            None => &model.part(sp.id).expect("spec parts come from the model").mesh,
        };
        write_obj(&dir.join(&sp.mesh), [(sp.name.as_str(), mesh)])?;
    }
    for sj in &spec.joints {
        let Some(g) = formed.joints.iter().find(|g| g.i == sj.i && g.j == sj.j) else {
            continue;
        };
        for (file, mesh) in sj.geometry.iter().zip(&g.pieces) {
            write_obj(&dir.join(file), [("joint", mesh)])?;
        }
    }
    let path = dir.join("spec.json");
    fs::write(&path, serde_json::to_string_pretty(spec)?).map_err(|e| ReformError::io(&path, e))?;
    Ok(())
}
