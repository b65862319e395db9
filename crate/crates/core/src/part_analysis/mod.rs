//! Per-part descriptors: oriented box, wall thickness, area ratio and line abstraction.

mod obb;

use serde::{Deserialize, Serialize};

use crate::error::{ReformError, Result};
use crate::geometry::{sample_surface_seeded, Bvh, Model, SurfaceSample, TriangleMesh, Vec3};

pub use obb::{convex_hull, fit_obb_points, min_area_rect, pca_obb, OrientedBox, Rect2};

/// Histogram bin width for thickness votes, in normalized units.
pub const THICKNESS_BIN: f64 = 0.005;
/// Largest-to-middle extent ratio for an elongated part.
pub const ELONGATION_MIN: f64 = 3.0;
pub const LINEAR_AREA_RATIO_MIN: f64 = 0.6;
pub const CURVILINEAR_AREA_RATIO_MAX: f64 = 0.3;
pub const SAMPLES_PER_PART: usize = 1000;

const RAY_EPS: f64 = 1e-9;

pub fn fit_obb(mesh: &TriangleMesh) -> Result<OrientedBox> {
    if mesh.vertices().is_empty() {
        return Err(ReformError::Degenerate("empty part".into()));
    }
    fit_obb_points(mesh.vertices())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thickness {
    pub value: f64,
    /// No ray hit the part again; `value` is the smallest box extent.
    pub fallback: bool,
}

/// Votes the wall thickness from inward rays cast at every sample.
pub fn estimate_thickness(
    bvh: &Bvh,
    obb: &OrientedBox,
    samples: &[SurfaceSample],
    bin_width: f64,
) -> Result<Thickness> {
    if samples.is_empty() {
        return Err(ReformError::InvalidArgument("thickness needs at least one sample".into()));
    }
    let mut votes: std::collections::BTreeMap<i64, usize> = std::collections::BTreeMap::new();
    for s in samples {
        let dir = -s.normal;
        if let Some(hit) = bvh.ray_cast(&s.position, &dir, RAY_EPS, Some(s.face_index)) {
            // A tiny upward snap keeps distances that land on a bin edge in one bin.
            let bin = (hit.t / bin_width + 1e-6).floor() as i64;
            *votes.entry(bin).or_default() += 1;
        }
    }
    // Strictly greater keeps the smallest bin on ties.
    let mut winner: Option<(i64, usize)> = None;
    for (&b, &n) in &votes {
        if winner.map_or(true, |(_, m)| n > m) {
            winner = Some((b, n));
        }
    }
    Ok(match winner {
        Some((b, _)) => Thickness {
            value: (b as f64 + 0.5) * bin_width,
            fallback: false,
        },
        None => Thickness {
            value: obb.extents()[2],
            fallback: true,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linearity {
    /// Elongated with a near-solid box fill.
    Linear,
    /// Low area ratio; linearity is decided locally at each contact.
    CurvilinearCandidate,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartDescriptor {
    pub obb: OrientedBox,
    /// Full box extents, sorted descending.
    pub size_vec: [f64; 3],
    pub area_ratio: f64,
    pub area: f64,
    pub thickness: f64,
    pub thickness_fallback: bool,
    pub dominant_axis: Vec3,
    pub linearity: Linearity,
    pub segment: [Vec3; 2],
    pub barycenter: Vec3,
}

impl PartDescriptor {
    pub fn is_linear(&self) -> bool {
        self.linearity == Linearity::Linear
    }

    pub fn elongation(&self) -> f64 {
        if self.size_vec[1] > 0.0 {
            self.size_vec[0] / self.size_vec[1]
        } else {
            f64::INFINITY
        }
    }

    /// The 5D clustering feature: extents, area ratio, thickness.
    pub fn feature(&self) -> [f64; 5] {
        [self.size_vec[0], self.size_vec[1], self.size_vec[2], self.area_ratio, self.thickness]
    }

    pub fn segment_length(&self) -> f64 {
        (self.segment[1] - self.segment[0]).norm()
    }
}

pub fn describe_part(mesh: &TriangleMesh, obb: &OrientedBox, thickness: Thickness) -> PartDescriptor {
    let area = mesh.surface_area();
    let box_area = obb.surface_area();
    let area_ratio = if box_area > 0.0 { area / box_area } else { f64::INFINITY };
    let size_vec = obb.extents();
    let elongation = if size_vec[1] > 0.0 { size_vec[0] / size_vec[1] } else { f64::INFINITY };
    let linearity = if elongation >= ELONGATION_MIN && area_ratio >= LINEAR_AREA_RATIO_MIN {
        Linearity::Linear
    } else if area_ratio < CURVILINEAR_AREA_RATIO_MAX {
        Linearity::CurvilinearCandidate
    } else {
        Linearity::None
    };
    let axis = obb.axes[0];
    let h = obb.half_extents[0];
    PartDescriptor {
        obb: *obb,
        size_vec,
        area_ratio,
        area,
        thickness: thickness.value,
        thickness_fallback: thickness.fallback,
        dominant_axis: axis,
        linearity,
        segment: [obb.center - axis * h, obb.center + axis * h],
        barycenter: mesh.surface_centroid(),
    }
}

/// Descriptor plus the samples and acceleration structure it was built from.
#[derive(Debug, Clone)]
pub struct AnalyzedPart {
    pub descriptor: PartDescriptor,
    pub samples: Vec<SurfaceSample>,
    pub bvh: Bvh,
}

/// Full per-part analysis with `n` seeded samples.
pub fn analyze_part(mesh: &TriangleMesh, n: usize, seed: u64, bin_width: f64) -> Result<AnalyzedPart> {
    let obb = fit_obb(mesh)?;
    let samples = sample_surface_seeded(mesh, n, seed)?;
    let bvh = Bvh::build(mesh);
    let t = estimate_thickness(&bvh, &obb, &samples, bin_width)?;
    Ok(AnalyzedPart {
        descriptor: describe_part(mesh, &obb, t),
        samples,
        bvh,
    })
}

/// A model with every part analyzed; `parts[k]` belongs to `model.parts[k]`.
#[derive(Debug, Clone)]
pub struct AnalyzedModel {
    pub model: Model,
    pub parts: Vec<AnalyzedPart>,
}

impl AnalyzedModel {
    pub fn index_of(&self, id: usize) -> Option<usize> {
        self.model.parts.iter().position(|p| p.id == id)
    }

    pub fn descriptor(&self, id: usize) -> Option<&PartDescriptor> {
        self.index_of(id).map(|k| &self.parts[k].descriptor)
    }
}

/// Per-part sampling seed derived from the model seed and the part id.
pub fn part_seed(seed: u64, id: usize) -> u64 {
    seed ^ (id as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Analyzes every part of `model` with `n` samples each.
pub fn analyze_model(model: &Model, n: usize, seed: u64, bin_width: f64) -> Result<AnalyzedModel> {
    let parts = model
        .parts
        .iter()
        .map(|p| analyze_part(&p.mesh, n, part_seed(seed, p.id), bin_width))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnalyzedModel {
        model: model.clone(),
        parts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::test_shapes::box_mesh;
    use nalgebra::{Rotation3, Unit};

    fn thickness_of(mesh: &TriangleMesh, bin: f64) -> Thickness {
        let a = analyze_part(mesh, 1000, 1, bin).unwrap();
        Thickness {
            value: a.descriptor.thickness,
            fallback: a.descriptor.thickness_fallback,
        }
    }

    #[test]
    fn plank_thickness_within_one_bin() {
        let m = box_mesh(Vec3::zeros(), Vec3::new(0.8, 0.4, 0.05));
        let t = thickness_of(&m, THICKNESS_BIN);
        assert!(!t.fallback);
        assert!((t.value - 0.05).abs() <= THICKNESS_BIN);
    }

    #[test]
    fn unit_cube_thickness_is_edge() {
        let m = box_mesh(Vec3::zeros(), Vec3::repeat(1.0));
        let t = thickness_of(&m, 0.05);
        assert!((t.value - 1.0).abs() <= 0.05);
    }

    #[test]
    fn open_sheet_falls_back_to_smallest_extent() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::new(1.0, 0.5, 0.0), Vec3::new(0.0, 0.5, 0.0)];
        let m = TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let a = analyze_part(&m, 100, 0, THICKNESS_BIN).unwrap();
        assert!(a.descriptor.thickness_fallback);
        assert!(a.descriptor.thickness.abs() < 1e-12);
    }

    #[test]
    fn thickness_is_rigid_invariant() {
        let m = box_mesh(Vec3::zeros(), Vec3::new(0.7, 0.3, 0.027));
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::new(1.0, 2.0, 0.5)), 0.9);
        let moved = m.transformed(r.matrix(), &Vec3::new(0.2, -0.1, 0.4)).unwrap();
        assert_eq!(thickness_of(&m, THICKNESS_BIN), thickness_of(&moved, THICKNESS_BIN));
    }

    #[test]
    fn rod_is_linear_board_is_not() {
        let rod = analyze_part(&box_mesh(Vec3::zeros(), Vec3::new(1.0, 0.05, 0.05)), 200, 0, THICKNESS_BIN).unwrap();
        assert!(rod.descriptor.is_linear());
        assert!((rod.descriptor.segment_length() - 1.0).abs() < 1e-9);
        let board = analyze_part(&box_mesh(Vec3::zeros(), Vec3::new(1.0, 1.0, 0.05)), 200, 0, THICKNESS_BIN).unwrap();
        assert!(!board.descriptor.is_linear());
        assert!((board.descriptor.area_ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn thickness_bounded_by_smallest_extent() {
        for size in [Vec3::new(0.5, 0.2, 0.03), Vec3::new(0.3, 0.3, 0.3), Vec3::new(1.0, 0.06, 0.04)] {
            let a = analyze_part(&box_mesh(Vec3::zeros(), size), 500, 3, THICKNESS_BIN).unwrap();
            assert!(a.descriptor.thickness <= a.descriptor.size_vec[2] + THICKNESS_BIN);
        }
    }
}
