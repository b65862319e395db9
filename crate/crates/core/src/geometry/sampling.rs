use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{SurfaceSample, TriangleMesh, Vec3};
use crate::error::{ReformError, Result};

/// Draws `n` surface samples with area-proportional stratified allocation.
///
/// Each face first receives `floor(n * a_f / A)` samples; the remainder is
/// distributed by systematic sampling over the fractional residuals, so every
/// face count is within one of its expectation. Positions are uniform in the
/// triangle.
pub fn sample_surface<R: Rng + ?Sized>(mesh: &TriangleMesh, n: usize, rng: &mut R) -> Result<Vec<SurfaceSample>> {
    if n == 0 {
        return Err(ReformError::InvalidArgument("sample count must be at least 1".into()));
    }
    let areas: Vec<f64> = (0..mesh.faces().len()).map(|f| mesh.face_area(f)).collect();
    let total: f64 = areas.iter().sum();
    if !(total > 0.0) {
        return Err(ReformError::Degenerate("part has zero surface area".into()));
    }

    let mut counts: Vec<usize> = Vec::with_capacity(areas.len());
    let mut residuals: Vec<f64> = Vec::with_capacity(areas.len());
    for a in &areas {
        let exact = n as f64 * a / total;
        let base = exact.floor();
        counts.push(base as usize);
        residuals.push(exact - base);
    }
    let remainder = n - counts.iter().sum::<usize>();
    if remainder > 0 {
        let residual_sum: f64 = residuals.iter().sum();
        let step = residual_sum / remainder as f64;
        let mut target = rng.gen::<f64>() * step;
        let mut acc = 0.0;
        let mut assigned = 0;
        for (f, r) in residuals.iter().enumerate() {
            acc += r;
            while assigned < remainder && target < acc {
                counts[f] += 1;
                assigned += 1;
                target += step;
            }
        }
        // Rounding can leave the last pick unassigned.
        let mut f = residuals.len();
        while assigned < remainder {
            f = if f == 0 { residuals.len() - 1 } else { f - 1 };
            if residuals[f] > 0.0 {
                counts[f] += 1;
                assigned += 1;
            }
        }
    }

    let mut out = Vec::with_capacity(n);
    for (f, &c) in counts.iter().enumerate() {
        let [a, b, cc] = mesh.triangle(f);
        let normal = mesh.face_normal(f);
        for _ in 0..c {
            let r1: f64 = rng.gen::<f64>().sqrt();
            let r2: f64 = rng.gen();
            let position = (1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * cc;
            out.push(SurfaceSample {
                position,
                normal,
                face_index: f,
            });
        }
    }
    Ok(out)
}

/// Seeded convenience wrapper around [`sample_surface`].
pub fn sample_surface_seeded(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<SurfaceSample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_surface(mesh, n, &mut rng)
}

/// Barycentric coordinates of the projection of `p` onto the triangle's plane,
/// plus the distance from `p` to that plane.
pub fn barycentric_coords(tri: &[Vec3; 3], p: &Vec3) -> ([f64; 3], f64) {
    let [a, b, c] = tri;
    let v0 = b - a;
    let v1 = c - a;
    let n = v0.cross(&v1);
    let n_len = n.norm();
    let plane_dist = (p - a).dot(&n) / n_len;
    let q = p - n * (plane_dist / n_len);
    let v2 = q - a;
    let d00 = v0.dot(&v0);
    let d01 = v0.dot(&v1);
    let d11 = v1.dot(&v1);
    let d20 = v2.dot(&v0);
    let d21 = v2.dot(&v1);
    let denom = d00 * d11 - d01 * d01;
    let v = (d11 * d20 - d01 * d21) / denom;
    let w = (d00 * d21 - d01 * d20) / denom;
    ([1.0 - v - w, v, w], plane_dist.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::test_shapes::box_mesh;
    use proptest::prelude::*;

    fn contained(mesh: &TriangleMesh, s: &SurfaceSample) -> bool {
        let (bc, d) = barycentric_coords(&mesh.triangle(s.face_index), &s.position);
        d < 1e-9 && bc.iter().all(|&x| x >= -1e-9 && x <= 1.0 + 1e-9)
    }

    #[test]
    fn counts_follow_area_within_five_sigma() {
        let cube = box_mesh(Vec3::repeat(0.5), Vec3::repeat(1.0));
        let samples = sample_surface_seeded(&cube, 1000, 3).unwrap();
        assert_eq!(samples.len(), 1000);
        // Faces come in coplanar pairs; each pair holds 1/6 of the area.
        let mut pair_counts = [0usize; 6];
        for s in &samples {
            pair_counts[s.face_index / 2] += 1;
        }
        let p: f64 = 1.0 / 6.0;
        let mean = 1000.0 * p;
        let sigma = (1000.0 * p * (1.0 - p)).sqrt();
        for c in pair_counts {
            assert!((c as f64 - mean).abs() <= 5.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn single_sample() {
        let cube = box_mesh(Vec3::zeros(), Vec3::repeat(1.0));
        let s = sample_surface_seeded(&cube, 1, 0).unwrap();
        assert_eq!(s.len(), 1);
        assert!(contained(&cube, &s[0]));
    }

    #[test]
    fn same_seed_same_samples() {
        let cube = box_mesh(Vec3::zeros(), Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(
            sample_surface_seeded(&cube, 500, 42).unwrap(),
            sample_surface_seeded(&cube, 500, 42).unwrap()
        );
    }

    #[test]
    fn zero_count_is_rejected() {
        let cube = box_mesh(Vec3::zeros(), Vec3::repeat(1.0));
        assert!(sample_surface_seeded(&cube, 0, 0).is_err());
    }

    proptest! {
        #[test]
        fn samples_lie_on_their_faces(seed in any::<u64>(), n in 1usize..400, sx in 0.1f64..3.0, sy in 0.1f64..3.0) {
            let m = box_mesh(Vec3::new(0.3, -1.0, 2.0), Vec3::new(sx, sy, 0.7));
            let samples = sample_surface_seeded(&m, n, seed).unwrap();
            prop_assert_eq!(samples.len(), n);
            for s in &samples {
                prop_assert!(contained(&m, s));
                prop_assert!((s.normal.norm() - 1.0).abs() < 1e-9);
            }
        }
    }
}
