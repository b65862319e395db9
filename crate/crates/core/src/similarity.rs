//! Similarity kernels over part descriptors, materials, distances and angles.

use serde::{Deserialize, Serialize};

use crate::error::{ReformError, Result};
use crate::geometry::{Material, Vec3};
use crate::part_analysis::PartDescriptor;
use crate::structure::folded_angle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityParams {
    pub sigma_b: f64,
    pub sigma_r: f64,
    pub sigma_t: f64,
    pub sigma_pr: f64,
    /// Degrees.
    pub sigma_ca: f64,
    /// Degrees.
    pub sigma_oa: f64,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        SimilarityParams {
            sigma_b: 0.1,
            sigma_r: 0.1,
            sigma_t: 0.02,
            sigma_pr: 0.2,
            sigma_ca: 10.0,
            sigma_oa: 360.0,
        }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.sigma_b, self.sigma_r, self.sigma_t, self.sigma_pr, self.sigma_ca, self.sigma_oa];
        if all.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(())
        } else {
            Err(ReformError::InvalidArgument(format!("similarity widths must be positive: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeMode {
    ObbOnly,
    ObbPlusArea,
    Full,
}

fn gauss(d: f64, sigma: f64) -> f64 {
    (-(d * d) / (sigma * sigma)).exp()
}

/// exp(-|b_a - b_b|_1^2 / sigma_b^2) on sorted extents.
pub fn rho_obb(a: &[f64; 3], b: &[f64; 3], p: &SimilarityParams) -> f64 {
    let l1: f64 = (0..3).map(|k| (a[k] - b[k]).abs()).sum();
    gauss(l1, p.sigma_b)
}

pub fn rho_area(ra: f64, rb: f64, p: &SimilarityParams) -> f64 {
    gauss(ra - rb, p.sigma_r)
}

pub fn rho_thick(ta: f64, tb: f64, p: &SimilarityParams) -> f64 {
    gauss(ta - tb, p.sigma_t)
}

/// Shape similarity on the 5D feature `[e0, e1, e2, area_ratio, thickness]`.
pub fn shape_similarity_features(a: &[f64; 5], b: &[f64; 5], mode: ShapeMode, p: &SimilarityParams) -> f64 {
    let obb = rho_obb(&[a[0], a[1], a[2]], &[b[0], b[1], b[2]], p);
    match mode {
        ShapeMode::ObbOnly => obb,
        ShapeMode::ObbPlusArea => obb * rho_area(a[3], b[3], p),
        ShapeMode::Full => obb * rho_area(a[3], b[3], p) * rho_thick(a[4], b[4], p),
    }
}

pub fn shape_similarity(a: &PartDescriptor, b: &PartDescriptor, mode: ShapeMode, p: &SimilarityParams) -> f64 {
    shape_similarity_features(&a.feature(), &b.feature(), mode, p)
}

/// 1 for equal fabricable materials, 0 otherwise; other tags are an error.
pub fn material_similarity(a: Material, b: Material) -> Result<f64> {
    for m in [a, b] {
        if !m.is_fabricable() {
            return Err(ReformError::UnresolvedMaterial(m.to_string()));
        }
    }
    Ok(if a == b { 1.0 } else { 0.0 })
}

/// Compares two barycenter distances.
pub fn spatial_similarity(d1: f64, d2: f64, p: &SimilarityParams) -> f64 {
    gauss(d1 - d2, p.sigma_pr)
}

pub fn contact_angle_similarity(a: Option<f64>, b: Option<f64>, p: &SimilarityParams) -> f64 {
    match (a, b) {
        (None, None) => 1.0,
        (Some(x), Some(y)) => gauss(x - y, p.sigma_ca),
        _ => 0.0,
    }
}

/// Row-major folded angles between the axes of two boxes, in degrees.
pub fn orientation_vector(axes_i: &[Vec3; 3], axes_j: &[Vec3; 3]) -> [f64; 9] {
    std::array::from_fn(|n| folded_angle(&axes_i[n / 3], &axes_j[n % 3]))
}

/// The orientation vector with the two parts swapped.
pub fn transpose_orientation(a: &[f64; 9]) -> [f64; 9] {
    std::array::from_fn(|n| a[(n % 3) * 3 + n / 3])
}

pub fn orientation_angle_similarity(a: &[f64; 9], b: &[f64; 9], p: &SimilarityParams) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-sq / (p.sigma_oa * p.sigma_oa)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const E1: f64 = 0.36787944117144233;

    #[test]
    fn spot_values() {
        let p = SimilarityParams::default();
        assert!((rho_obb(&[0.5, 0.2, 0.1], &[0.45, 0.15, 0.1], &p) - E1).abs() < 1e-12);
        let a = [0.5, 0.2, 0.1, 0.8, 0.03];
        let b = [0.5, 0.2, 0.1, 0.8, 0.05];
        assert!((shape_similarity_features(&a, &b, ShapeMode::Full, &p) - E1).abs() < 1e-12);
        assert_eq!(shape_similarity_features(&a, &b, ShapeMode::ObbPlusArea, &p), 1.0);
        assert!((spatial_similarity(0.3, 0.5, &p) - E1).abs() < 1e-12);
        assert!((spatial_similarity(0.0, 0.4, &p) - (-4f64).exp()).abs() < 1e-12);
        assert!((contact_angle_similarity(Some(90.0), Some(80.0), &p) - E1).abs() < 1e-12);
        assert_eq!(contact_angle_similarity(None, None, &p), 1.0);
        assert_eq!(contact_angle_similarity(Some(90.0), None, &p), 0.0);
    }

    #[test]
    fn material_table() {
        use Material::*;
        assert_eq!(material_similarity(Wood, Wood).unwrap(), 1.0);
        assert_eq!(material_similarity(Wood, Metal).unwrap(), 0.0);
        assert_eq!(material_similarity(Metal, Metal).unwrap(), 1.0);
        assert!(material_similarity(Other, Wood).is_err());
        assert!(material_similarity(Metal, Untagged).is_err());
    }

    #[test]
    fn orientation_vector_of_frames() {
        let id = [Vec3::x(), Vec3::y(), Vec3::z()];
        let rot = [Vec3::y(), Vec3::z(), Vec3::x()];
        let a = orientation_vector(&id, &id);
        assert_eq!(a, [0.0, 90.0, 90.0, 90.0, 0.0, 90.0, 90.0, 90.0, 0.0]);
        let b = orientation_vector(&id, &rot);
        let p = SimilarityParams::default();
        let expected = (-(6.0 * 8100.0) / (360.0f64 * 360.0)).exp();
        assert!((orientation_angle_similarity(&a, &b, &p) - expected).abs() < 1e-12);
        assert_eq!(transpose_orientation(&b), orientation_vector(&rot, &id));
        let mut c = [0.0; 9];
        c[0] = 360.0;
        assert!((orientation_angle_similarity(&[0.0; 9], &c, &p) - E1).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn kernels_symmetric_and_bounded(
            a in proptest::array::uniform5(0.0f64..1.0),
            b in proptest::array::uniform5(0.0f64..1.0),
            x in 0.0f64..90.0, y in 0.0f64..90.0,
        ) {
            let p = SimilarityParams::default();
            for mode in [ShapeMode::ObbOnly, ShapeMode::ObbPlusArea, ShapeMode::Full] {
                let s = shape_similarity_features(&a, &b, mode, &p);
                prop_assert_eq!(s, shape_similarity_features(&b, &a, mode, &p));
                prop_assert!((0.0..=1.0).contains(&s));
                prop_assert_eq!(shape_similarity_features(&a, &a, mode, &p), 1.0);
            }
            let full = shape_similarity_features(&a, &b, ShapeMode::Full, &p);
            let prod = rho_obb(&[a[0], a[1], a[2]], &[b[0], b[1], b[2]], &p) * rho_area(a[3], b[3], &p) * rho_thick(a[4], b[4], &p);
            prop_assert!((full - prod).abs() <= 1e-12);
            prop_assert_eq!(contact_angle_similarity(Some(x), Some(y), &p), contact_angle_similarity(Some(y), Some(x), &p));
            prop_assert_eq!(spatial_similarity(x, y, &p), spatial_similarity(y, x, &p));
        }
    }
}
