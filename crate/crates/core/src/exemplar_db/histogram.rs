use serde::{Deserialize, Serialize};

use crate::error::{ReformError, Result};
use crate::geometry::Material;

pub const ANGLE_BINS: usize = 18;
pub const ANGLE_BIN_WIDTH: f64 = 5.0;
pub const FEASIBILITY_THRESHOLD: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaterialPair {
    WoodWood,
    MetalMetal,
}

impl MaterialPair {
    /// Same-material pairs only; mixed contacts have no histogram.
    pub fn of(a: Material, b: Material) -> Option<MaterialPair> {
        match (a, b) {
            (Material::Wood, Material::Wood) => Some(MaterialPair::WoodWood),
            (Material::Metal, Material::Metal) => Some(MaterialPair::MetalMetal),
            _ => None,
        }
    }
}

pub fn angle_bin(angle: f64) -> usize {
    ((angle.clamp(0.0, 90.0) / ANGLE_BIN_WIDTH).floor() as usize).min(ANGLE_BINS - 1)
}

/// Representative angle of a bin; the outer bins stand for 0 and 90 degrees.
pub fn bin_angle(bin: usize) -> f64 {
    match bin {
        0 => 0.0,
        b if b == ANGLE_BINS - 1 => 90.0,
        b => (b as f64 + 0.5) * ANGLE_BIN_WIDTH,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleHistogram {
    pub material_pair: MaterialPair,
    pub bins: Vec<u64>,
    pub total: u64,
}

impl AngleHistogram {
    pub fn new(material_pair: MaterialPair) -> Self {
        AngleHistogram {
            material_pair,
            bins: vec![0; ANGLE_BINS],
            total: 0,
        }
    }

    pub fn add(&mut self, angle: f64) {
        self.bins[angle_bin(angle)] += 1;
        self.total += 1;
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.bins.iter().map(|&c| c as f64 / self.total.max(1) as f64).collect()
    }

    /// Frequencies after a 1/4, 1/2, 1/4 kernel with reflecting ends (mass preserving).
    pub fn smoothed(&self) -> Result<Vec<f64>> {
        if self.total == 0 {
            return Err(ReformError::EmptyDatabase(format!("no {:?} contact angles", self.material_pair)));
        }
        let f = self.frequencies();
        let n = f.len();
        Ok((0..n)
            .map(|b| {
                let left = if b == 0 { f[0] } else { f[b - 1] };
                let right = if b + 1 == n { f[n - 1] } else { f[b + 1] };
                0.25 * left + 0.5 * f[b] + 0.25 * right
            })
            .collect())
    }

    pub fn feasibility(&self, angle: f64) -> Result<f64> {
        Ok(self.smoothed()?[angle_bin(angle)])
    }

    /// Target for an infeasible angle: the representative angle of the nearest
    /// feasible bin, ties to the lower bin.
    pub fn target_angle(&self, angle: f64, threshold: f64) -> Result<Option<f64>> {
        let s = self.smoothed()?;
        let mut best: Option<(f64, f64)> = None;
        for (b, &f) in s.iter().enumerate() {
            if f < threshold {
                continue;
            }
            let t = bin_angle(b);
            let d = (t - angle).abs();
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((t, d));
            }
        }
        Ok(best.map(|(t, _)| t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wood_like_histogram() {
        let mut h = AngleHistogram::new(MaterialPair::WoodWood);
        for k in 0..100 {
            h.add(87.0 + (k % 4) as f64);
        }
        h.add(45.0);
        assert!(h.feasibility(90.0).unwrap() >= 0.5);
        assert!(h.feasibility(30.0).unwrap() < 0.05);
        assert!(h.feasibility(40.0).unwrap() < FEASIBILITY_THRESHOLD);
        // The 80-85 bin borrows enough mass from its neighbour to be the nearest feasible one.
        assert_eq!(h.target_angle(40.0, FEASIBILITY_THRESHOLD).unwrap(), Some(82.5));
        assert_eq!(h.target_angle(89.0, FEASIBILITY_THRESHOLD).unwrap(), Some(90.0));
    }

    #[test]
    fn empty_histogram_errors() {
        assert!(AngleHistogram::new(MaterialPair::MetalMetal).feasibility(10.0).is_err());
    }

    #[test]
    fn uniform_histogram_is_flat() {
        let mut h = AngleHistogram::new(MaterialPair::MetalMetal);
        for b in 0..ANGLE_BINS {
            for _ in 0..10 {
                h.add(b as f64 * 5.0 + 2.5);
            }
        }
        for b in 0..ANGLE_BINS {
            assert!((h.feasibility(b as f64 * 5.0 + 1.0).unwrap() - 1.0 / 18.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn smoothing_preserves_mass(angles in proptest::collection::vec(0.0f64..=90.0, 1..200)) {
            let mut h = AngleHistogram::new(MaterialPair::WoodWood);
            for a in &angles {
                h.add(*a);
            }
            prop_assert_eq!(h.total, h.bins.iter().sum::<u64>());
            let s: f64 = h.smoothed().unwrap().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
