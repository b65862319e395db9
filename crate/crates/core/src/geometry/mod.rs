//! Mesh ingestion, part decomposition, normalization and surface sampling.

mod bvh;
mod obj;
mod sampling;
mod segment;

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ReformError, Result};
use crate::part_analysis::fit_obb_points;

pub use bvh::{Bvh, RayHit};
pub use obj::{load_model, load_model_with, parse_obj, write_obj, LoadOptions, RegroupMap};
pub use sampling::{barycentric_coords, sample_surface, sample_surface_seeded};
pub use segment::{segment_parts, weld_vertices};

pub type Vec3 = Vector3<f64>;

/// Relative area floor below which a triangle counts as degenerate.
pub const DEGENERATE_AREA_EPS: f64 = 1e-12;

/// Fabrication material tag of a part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    Wood,
    Metal,
    Other,
    Untagged,
}

impl Material {
    /// Wood or metal, the two materials inference reasons about.
    pub fn is_fabricable(self) -> bool {
        matches!(self, Material::Wood | Material::Metal)
    }

    pub fn parse(s: &str) -> Option<Material> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wood" => Some(Material::Wood),
            "metal" => Some(Material::Metal),
            "other" => Some(Material::Other),
            "untagged" | "" => Some(Material::Untagged),
            _ => None,
        }
    }
}

impl fmt::Display for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Material::Wood => "wood",
            Material::Metal => "metal",
            Material::Other => "other",
            Material::Untagged => "untagged",
        };
        f.write_str(s)
    }
}

#[derive(Serialize, Deserialize)]
struct RawMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

/// An indexed triangle mesh with cached unit face normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMesh", into = "RawMesh")]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    normals: Vec<Vec3>,
}

impl TryFrom<RawMesh> for TriangleMesh {
    type Error = ReformError;

    fn try_from(raw: RawMesh) -> Result<Self> {
        TriangleMesh::new(raw.vertices, raw.faces)
    }
}

impl From<TriangleMesh> for RawMesh {
    fn from(m: TriangleMesh) -> Self {
        RawMesh {
            vertices: m.vertices,
            faces: m.faces,
        }
    }
}

impl TriangleMesh {
    /// Builds a mesh, rejecting out-of-range indices and degenerate faces.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(ReformError::InvalidMesh(format!("non-finite vertex {v:?}")));
        }
        let scale2 = bbox_diagonal(&vertices).powi(2).max(f64::MIN_POSITIVE);
        let mut normals = Vec::with_capacity(faces.len());
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(ReformError::InvalidMesh(format!(
                    "face {fi} references vertex out of range ({n} vertices)"
                )));
            }
            let cross = triangle_cross(&vertices, f);
            let area = 0.5 * cross.norm();
            if area <= DEGENERATE_AREA_EPS * scale2 {
                return Err(ReformError::InvalidMesh(format!("face {fi} is degenerate")));
            }
            normals.push(cross / (2.0 * area));
        }
        Ok(TriangleMesh {
            vertices,
            faces,
            normals,
        })
    }

    /// Builds a mesh after dropping degenerate faces; returns the number dropped.
    pub fn new_lenient(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<(Self, usize)> {
        let n = vertices.len();
        let scale2 = bbox_diagonal(&vertices).powi(2).max(f64::MIN_POSITIVE);
        let before = faces.len();
        let mut kept = Vec::with_capacity(before);
        for f in faces {
            if f.iter().any(|&i| i >= n) {
                return Err(ReformError::InvalidMesh(format!(
                    "face references vertex out of range ({n} vertices)"
                )));
            }
            if 0.5 * triangle_cross(&vertices, &f).norm() > DEGENERATE_AREA_EPS * scale2 {
                kept.push(f);
            }
        }
        let dropped = before - kept.len();
        Ok((TriangleMesh::new(vertices, kept)?, dropped))
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        self.normals[f]
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        0.5 * triangle_cross(&self.vertices, &self.faces[f]).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Area-weighted centroid of the surface.
    pub fn surface_centroid(&self) -> Vec3 {
        let mut acc = Vec3::zeros();
        let mut total = 0.0;
        for f in 0..self.faces.len() {
            let [a, b, c] = self.triangle(f);
            let w = self.face_area(f);
            acc += w * (a + b + c) / 3.0;
            total += w;
        }
        if total > 0.0 {
            acc / total
        } else {
            Vec3::zeros()
        }
    }

    /// Signed enclosed volume (divergence theorem); positive for outward-oriented closed meshes.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                self.vertices[a].dot(&self.vertices[b].cross(&self.vertices[c])) / 6.0
            })
            .sum()
    }

    pub fn aabb(&self) -> (Vec3, Vec3) {
        aabb_of(&self.vertices)
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Applies an affine map `p -> linear * p + offset`; face winding is flipped
    /// when the map reverses orientation.
    pub fn transformed(&self, linear: &Matrix3<f64>, offset: &Vec3) -> Result<TriangleMesh> {
        let vertices = self.vertices.iter().map(|v| linear * v + offset).collect();
        let faces = if linear.determinant() < 0.0 {
            self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect()
        } else {
            self.faces.clone()
        };
        TriangleMesh::new(vertices, faces)
    }

    /// Concatenates meshes into one vertex/face list.
    pub fn merged<'a>(meshes: impl IntoIterator<Item = &'a TriangleMesh>) -> Result<TriangleMesh> {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for m in meshes {
            let base = vertices.len();
            vertices.extend_from_slice(&m.vertices);
            faces.extend(m.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        }
        TriangleMesh::new(vertices, faces)
    }

    /// Every directed edge has exactly one opposite twin.
    pub fn is_closed_manifold(&self) -> bool {
        use std::collections::HashMap;
        let mut count: HashMap<(usize, usize), i32> = HashMap::new();
        for &[a, b, c] in &self.faces {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                *count.entry((u, v)).or_default() += 1;
            }
        }
        count
            .iter()
            .all(|(&(u, v), &n)| n == 1 && count.get(&(v, u)) == Some(&1))
    }
}

fn triangle_cross(vertices: &[Vec3], f: &[usize; 3]) -> Vec3 {
    let a = vertices[f[0]];
    (vertices[f[1]] - a).cross(&(vertices[f[2]] - a))
}

pub(crate) fn aabb_of(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

fn bbox_diagonal(points: &[Vec3]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let (lo, hi) = aabb_of(points);
    (hi - lo).norm()
}

/// One component of a multi-component model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub id: usize,
    pub name: String,
    pub mesh: TriangleMesh,
    pub material: Material,
}

/// A multi-component model in model units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub parts: Vec<Part>,
    pub global_scale: f64,
}

impl Model {
    pub fn new(parts: Vec<Part>) -> Result<Model> {
        let mut ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(ReformError::InvalidArgument("duplicate part ids".into()));
        }
        Ok(Model {
            parts,
            global_scale: 1.0,
        })
    }

    pub fn part(&self, id: usize) -> Option<&Part> {
        self.parts.iter().find(|p| p.id == id)
    }

    pub fn all_vertices(&self) -> Vec<Vec3> {
        self.parts
            .iter()
            .flat_map(|p| p.mesh.vertices().iter().copied())
            .collect()
    }

    /// Diagonal length of the whole-model oriented bounding box.
    pub fn obb_diagonal(&self) -> Result<f64> {
        let pts = self.all_vertices();
        if pts.is_empty() {
            return Err(ReformError::Degenerate("model has no vertices".into()));
        }
        Ok(fit_obb_points(&pts)?.diagonal())
    }
}

/// Uniformly scales the model about the origin so its OBB diagonal is 1.
pub fn normalize_model(model: &Model) -> Result<Model> {
    let diag = model.obb_diagonal()?;
    if !(diag > 1e-12) {
        return Err(ReformError::Degenerate("model has zero extent".into()));
    }
    let s = 1.0 / diag;
    let mut out = model.clone();
    // Skip exact-identity rescales so normalization is idempotent bit-for-bit.
    if (s - 1.0).abs() > 1e-12 {
        let linear = Matrix3::from_diagonal_element(s);
        for part in &mut out.parts {
            part.mesh = part.mesh.transformed(&linear, &Vec3::zeros())?;
        }
        out.global_scale *= s;
    }
    Ok(out)
}

/// A point on a part surface with the normal of its face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSample {
    pub position: Vec3,
    pub normal: Vec3,
    pub face_index: usize,
}


#[cfg(test)]
mod tests {
    use super::test_shapes::box_mesh;
    use super::*;

    fn one_part_model(mesh: TriangleMesh) -> Model {
        Model::new(vec![Part {
            id: 0,
            name: "p".into(),
            mesh,
            material: Material::Untagged,
        }])
        .unwrap()
    }

    #[test]
    fn box_is_closed_and_outward() {
        let m = box_mesh(Vec3::zeros(), Vec3::new(2.0, 1.0, 0.5));
        assert!(m.is_closed_manifold());
        assert!((m.signed_volume() - 1.0).abs() < 1e-12);
        assert!((m.surface_area() - 2.0 * (2.0 + 1.0 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_indices_and_degenerate_faces() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 1]]).is_err());
        let (m, dropped) = TriangleMesh::new_lenient(v, vec![[0, 1, 2], [0, 0, 1]]).unwrap();
        assert_eq!((m.faces().len(), dropped), (1, 1));
    }

    #[test]
    fn unit_cube_normalizes_by_inverse_sqrt3() {
        let model = one_part_model(box_mesh(Vec3::repeat(0.5), Vec3::repeat(1.0)));
        let n = normalize_model(&model).unwrap();
        assert!((n.global_scale - 1.0 / 3f64.sqrt()).abs() < 1e-9);
        assert!((n.obb_diagonal().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn normalize_is_idempotent_and_records_scale() {
        let model = one_part_model(box_mesh(Vec3::zeros(), Vec3::new(8.0, 6.0, 0.0001).map(|x| x.max(1e-3))));
        let d = model.obb_diagonal().unwrap();
        let once = normalize_model(&model).unwrap();
        assert!((once.global_scale - 1.0 / d).abs() < 1e-12);
        let twice = normalize_model(&once).unwrap();
        assert!((twice.global_scale - once.global_scale).abs() < 1e-9);
        for (a, b) in once.parts[0].mesh.vertices().iter().zip(twice.parts[0].mesh.vertices()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn diagonal_ten_gives_scale_tenth() {
        let s = 10.0 / 3f64.sqrt();
        let model = one_part_model(box_mesh(Vec3::zeros(), Vec3::repeat(s)));
        let n = normalize_model(&model).unwrap();
        assert!((n.global_scale - 0.1).abs() < 1e-9);
    }

    #[test]
    fn zero_extent_model_is_rejected() {
        let err = one_part_model(box_mesh(Vec3::zeros(), Vec3::repeat(1e-13)));
        assert!(normalize_model(&err).is_err());
    }

    #[test]
    fn mesh_json_roundtrip_validates() {
        let m = box_mesh(Vec3::zeros(), Vec3::repeat(1.0));
        let s = serde_json::to_string(&m).unwrap();
        let back: TriangleMesh = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
        assert!(serde_json::from_str::<TriangleMesh>(r#"{"vertices":[[0,0,0]],"faces":[[0,0,1]]}"#).is_err());
    }
}
