use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ReformError, Result};
use crate::geometry::{aabb_of, Bvh, SurfaceSample, Vec3};
use crate::part_analysis::{AnalyzedModel, AnalyzedPart, Linearity};

/// Marker id for the ground in a [`ContactEdge`].
pub const GROUND: usize = usize::MAX;
pub const DEFAULT_CONTACT_DISTANCE: f64 = 0.01;
/// Radius of the sample neighbourhood used to find a local direction on curved parts.
pub const CURVILINEAR_RADIUS: f64 = 0.05;
const LOCAL_ELONGATION_MIN: f64 = 3.0;
const LOCAL_MIN_SAMPLES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactEdge {
    pub i: usize,
    /// Other part id, or [`GROUND`].
    pub j: usize,
    pub contact_point: Vec3,
    /// Folded angle in degrees; `None` when either part has no direction here.
    pub angle: Option<f64>,
    pub is_ground: bool,
}

impl ContactEdge {
    pub fn key(&self) -> (usize, usize) {
        (self.i, self.j)
    }

    pub fn touches(&self, id: usize) -> bool {
        self.i == id || self.j == id
    }

    pub fn other(&self, id: usize) -> usize {
        if self.i == id {
            self.j
        } else {
            self.i
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactGraph {
    pub nodes: Vec<usize>,
    pub edges: Vec<ContactEdge>,
}

impl ContactGraph {
    pub fn part_edges(&self) -> impl Iterator<Item = &ContactEdge> {
        self.edges.iter().filter(|e| !e.is_ground)
    }

    pub fn ground_edges(&self) -> impl Iterator<Item = &ContactEdge> {
        self.edges.iter().filter(|e| e.is_ground)
    }

    pub fn find(&self, a: usize, b: usize) -> Option<&ContactEdge> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.edges.iter().find(|e| e.key() == key)
    }

    /// Number of part-part contacts of `id`.
    pub fn degree(&self, id: usize) -> usize {
        self.part_edges().filter(|e| e.touches(id)).count()
    }

    pub fn neighbors(&self, id: usize) -> Vec<usize> {
        self.part_edges().filter(|e| e.touches(id)).map(|e| e.other(id)).collect()
    }

    pub fn on_ground(&self, id: usize) -> bool {
        self.ground_edges().any(|e| e.i == id)
    }
}

fn boxes_near(a: &AnalyzedPart, b: &AnalyzedPart, d: f64) -> bool {
    let (alo, ahi) = aabb_of(a.descriptor.obb.corners().as_slice());
    let (blo, bhi) = aabb_of(b.descriptor.obb.corners().as_slice());
    (0..3).all(|k| alo[k] <= bhi[k] + d && blo[k] <= ahi[k] + d)
}

/// Samples of `from` within `d` of the surface in `to`, and the minimum distance seen.
fn near_samples<'a>(from: &'a [SurfaceSample], to: &Bvh, d: f64) -> (Vec<&'a SurfaceSample>, f64) {
    let mut near = Vec::new();
    let mut min = f64::INFINITY;
    for s in from {
        if let Some((_, _, dist)) = to.closest_point_within(&s.position, d) {
            min = min.min(dist);
            if dist < d {
                near.push(s);
            }
        }
    }
    (near, min)
}

/// Contact between two analyzed parts: `(min distance, contact point)`.
pub fn part_contact(a: &AnalyzedPart, b: &AnalyzedPart, d_c: f64) -> Option<(f64, Vec3)> {
    if !boxes_near(a, b, d_c) {
        return None;
    }
    let (na, da) = near_samples(&a.samples, &b.bvh, d_c);
    let (nb, db) = near_samples(&b.samples, &a.bvh, d_c);
    let min = da.min(db);
    if !(min < d_c) {
        return None;
    }
    let pts: Vec<Vec3> = na.iter().chain(nb.iter()).map(|s| s.position).collect();
    Some((min, pts.iter().sum::<Vec3>() / pts.len() as f64))
}

/// Direction of a part at a contact point, if it has one.
pub fn contact_leg(part: &AnalyzedPart, c: &Vec3) -> Option<Vec3> {
    match part.descriptor.linearity {
        Linearity::Linear => Some(part.descriptor.dominant_axis),
        Linearity::CurvilinearCandidate => local_direction(&part.samples, c, CURVILINEAR_RADIUS),
        Linearity::None => None,
    }
}

/// Principal direction of the samples near `c`, when that neighbourhood is elongated.
pub fn local_direction(samples: &[SurfaceSample], c: &Vec3, radius: f64) -> Option<Vec3> {
    let pts: Vec<Vec3> = samples
        .iter()
        .map(|s| s.position)
        .filter(|p| (p - c).norm() <= radius)
        .collect();
    if pts.len() < LOCAL_MIN_SAMPLES {
        return None;
    }
    let mean = pts.iter().sum::<Vec3>() / pts.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in &pts {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l0, l1) = (eig.eigenvalues[order[0]].max(0.0), eig.eigenvalues[order[1]].max(0.0));
    if l0 <= 0.0 || l0 < LOCAL_ELONGATION_MIN * LOCAL_ELONGATION_MIN * l1 {
        return None;
    }
    Some(eig.eigenvectors.column(order[0]).into_owned())
}

/// Angle between two directions folded into [0, 90] degrees.
pub fn folded_angle(a: &Vec3, b: &Vec3) -> f64 {
    let c = (a.dot(b).abs() / (a.norm() * b.norm())).min(1.0);
    c.acos().to_degrees()
}

pub fn estimate_contact_angle(a: &AnalyzedPart, b: &AnalyzedPart, c: &Vec3) -> Option<f64> {
    let la = contact_leg(a, c)?;
    let lb = contact_leg(b, c)?;
    Some(folded_angle(&la, &lb))
}

/// Contact graph with contact points, angles and ground contacts (z up).
pub fn build_contact_graph(am: &AnalyzedModel, d_c: f64) -> Result<ContactGraph> {
    if !(d_c > 0.0) {
        return Err(ReformError::InvalidArgument(format!("contact distance must be positive, got {d_c}")));
    }
    let ids: Vec<usize> = am.model.parts.iter().map(|p| p.id).collect();
    let mut edges = Vec::new();
    for a in 0..ids.len() {
        for b in a + 1..ids.len() {
            let (pa, pb) = (&am.parts[a], &am.parts[b]);
            if let Some((_, c)) = part_contact(pa, pb, d_c) {
                let (i, j, pi, pj) = if ids[a] < ids[b] {
                    (ids[a], ids[b], pa, pb)
                } else {
                    (ids[b], ids[a], pb, pa)
                };
                edges.push(ContactEdge {
                    i,
                    j,
                    contact_point: c,
                    angle: estimate_contact_angle(pi, pj, &c),
                    is_ground: false,
                });
            }
        }
    }
    edges.extend(ground_contacts(am, d_c));
    edges.sort_by_key(|e| e.key());
    let mut nodes = ids;
    nodes.sort_unstable();
    Ok(ContactGraph { nodes, edges })
}

/// Parts whose lowest point is within `d_c` of the model floor.
pub fn ground_contacts(am: &AnalyzedModel, d_c: f64) -> Vec<ContactEdge> {
    let floor = am
        .model
        .parts
        .iter()
        .flat_map(|p| p.mesh.vertices().iter().map(|v| v.z))
        .fold(f64::INFINITY, f64::min);
    let mut out = Vec::new();
    for (p, a) in am.model.parts.iter().zip(&am.parts) {
        let (lo, _) = p.mesh.aabb();
        if lo.z - floor >= d_c {
            continue;
        }
        let near: Vec<Vec3> = a
            .samples
            .iter()
            .map(|s| s.position)
            .filter(|q| q.z - floor < d_c)
            .collect();
        let c = if near.is_empty() {
            let low = p.mesh.vertices().iter().copied().min_by(|u, v| u.z.total_cmp(&v.z)).unwrap();
            Vec3::new(low.x, low.y, floor)
        } else {
            let m = near.iter().sum::<Vec3>() / near.len() as f64;
            Vec3::new(m.x, m.y, floor)
        };
        out.push(ContactEdge {
            i: p.id,
            j: GROUND,
            contact_point: c,
            angle: None,
            is_ground: true,
        });
    }
    out
}
