use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::part_analysis::{AnalyzedModel, AnalyzedPart};

pub const CONGRUENCE_RMS: f64 = 0.01;
pub const EXTENT_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionGraph {
    pub nodes: Vec<usize>,
    /// Pairs `(a, b)` with `a < b`, transitively closed.
    pub edges: Vec<(usize, usize)>,
    /// Congruence classes of size at least two, each sorted.
    pub classes: Vec<Vec<usize>>,
}

impl RepetitionGraph {
    pub fn class_of(&self, id: usize) -> Option<&[usize]> {
        self.classes.iter().find(|c| c.contains(&id)).map(|c| c.as_slice())
    }

    pub fn congruent(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search(&key).is_ok()
    }
}

/// All 48 signed axis permutations.
pub fn signed_permutations() -> Vec<Matrix3<f64>> {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut out = Vec::with_capacity(48);
    for p in perms {
        for signs in 0..8 {
            let mut m = Matrix3::zeros();
            for r in 0..3 {
                m[(r, p[r])] = if signs >> r & 1 == 0 { 1.0 } else { -1.0 };
            }
            out.push(m);
        }
    }
    out
}

pub fn extents_match(a: &[f64; 3], b: &[f64; 3], tol: f64) -> bool {
    (0..3).all(|k| (a[k] - b[k]).abs() <= tol * a[k].max(b[k]) + 1e-12)
}

/// RMS distance from `a`'s samples mapped by `linear`/`offset` to `b`'s surface.
/// Gives up (returns `None`) once the RMS is certain to exceed `limit`.
fn mapped_rms(a: &AnalyzedPart, b: &AnalyzedPart, linear: &Matrix3<f64>, offset: &Vec3, limit: f64) -> Option<f64> {
    let n = a.samples.len() as f64;
    let budget = limit * limit * n;
    let mut sum = 0.0;
    for s in &a.samples {
        let q = linear * s.position + offset;
        let (_, _, d) = b.bvh.closest_point_within(&q, limit * n.sqrt())?;
        sum += d * d;
        if sum >= budget {
            return None;
        }
    }
    Some((sum / n).sqrt())
}

/// Symmetric RMS under the best of the 48 box-frame alignments, if below `limit`.
pub fn congruence_rms(a: &AnalyzedPart, b: &AnalyzedPart, limit: f64) -> Option<f64> {
    let (oa, ob) = (&a.descriptor.obb, &b.descriptor.obb);
    let (ra, rb) = (oa.rotation(), ob.rotation());
    let mut best: Option<f64> = None;
    for p in signed_permutations() {
        let lin = rb * p * ra.transpose();
        let off = ob.center - lin * oa.center;
        let lim = best.unwrap_or(limit).min(limit);
        let Some(fwd) = mapped_rms(a, b, &lin, &off, lim) else {
            continue;
        };
        let inv = lin.transpose();
        let Some(back) = mapped_rms(b, a, &inv, &(oa.center - inv * ob.center), lim) else {
            continue;
        };
        let r = fwd.max(back);
        if r < limit && best.map_or(true, |x| r < x) {
            best = Some(r);
        }
    }
    best
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let n = self.0[y];
            self.0[y] = r;
            y = n;
        }
        r
    }
}

pub fn build_repetition_graph(am: &AnalyzedModel) -> RepetitionGraph {
    let ids: Vec<usize> = am.model.parts.iter().map(|p| p.id).collect();
    let n = ids.len();
    let mut dsu = Dsu((0..n).collect());
    for a in 0..n {
        for b in a + 1..n {
            let (pa, pb) = (&am.parts[a], &am.parts[b]);
            if !extents_match(&pa.descriptor.size_vec, &pb.descriptor.size_vec, EXTENT_TOLERANCE) {
                continue;
            }
            if dsu.find(a) == dsu.find(b) {
                continue;
            }
            if congruence_rms(pa, pb, CONGRUENCE_RMS).is_some() {
                let (ra, rb) = (dsu.find(a), dsu.find(b));
                dsu.0[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for k in 0..n {
        let r = dsu.find(k);
        groups.entry(r).or_default().push(ids[k]);
    }
    let mut classes: Vec<Vec<usize>> = groups
        .into_values()
        .filter(|g| g.len() > 1)
        .map(|mut g| {
            g.sort_unstable();
            g
        })
        .collect();
    classes.sort();
    let mut edges = Vec::new();
    for c in &classes {
        for x in 0..c.len() {
            for y in x + 1..c.len() {
                edges.push((c[x], c[y]));
            }
        }
    }
    edges.sort_unstable();
    let mut nodes = ids;
    nodes.sort_unstable();
    RepetitionGraph { nodes, edges, classes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::test_shapes::box_mesh;
    use crate::geometry::{Material, Model, Part, TriangleMesh};
    use crate::part_analysis::analyze_model;

    fn analyzed(meshes: Vec<TriangleMesh>) -> AnalyzedModel {
        let parts = meshes
            .into_iter()
            .enumerate()
            .map(|(id, mesh)| Part {
                id,
                name: format!("p{id}"),
                mesh,
                material: Material::Wood,
            })
            .collect();
        analyze_model(&Model::new(parts).unwrap(), 400, 5, 0.005).unwrap()
    }

    fn wedge(mirror: bool) -> TriangleMesh {
        // An asymmetric solid: a box with one corner pulled out.
        let mut m = box_mesh(Vec3::zeros(), Vec3::new(0.3, 0.1, 0.05));
        let mut v = m.vertices().to_vec();
        v[7] += Vec3::new(0.06, 0.02, 0.0);
        m = TriangleMesh::new(v, m.faces().to_vec()).unwrap();
        if mirror {
            m = m.transformed(&Matrix3::from_diagonal(&Vec3::new(-1.0, 1.0, 1.0)), &Vec3::new(0.5, 0.0, 0.0)).unwrap();
        }
        m
    }

    #[test]
    fn there_are_48_distinct_alignments() {
        let ps = signed_permutations();
        assert_eq!(ps.len(), 48);
        for (i, a) in ps.iter().enumerate() {
            assert!((a.determinant().abs() - 1.0).abs() < 1e-12);
            assert!(ps[i + 1..].iter().all(|b| a != b));
        }
    }

    #[test]
    fn four_legs_form_one_clique() {
        let legs: Vec<TriangleMesh> = [(0.0, 0.0), (0.5, 0.0), (0.0, 0.4), (0.5, 0.4)]
            .iter()
            .map(|&(x, y)| box_mesh(Vec3::new(x, y, 0.2), Vec3::new(0.04, 0.04, 0.4)))
            .collect();
        let g = build_repetition_graph(&analyzed(legs));
        assert_eq!(g.classes, vec![vec![0, 1, 2, 3]]);
        assert_eq!(g.edges.len(), 6);
    }

    #[test]
    fn mirrored_pair_is_congruent() {
        let g = build_repetition_graph(&analyzed(vec![wedge(false), wedge(true)]));
        assert!(g.congruent(0, 1));
    }

    #[test]
    fn different_lengths_are_not_congruent() {
        let g = build_repetition_graph(&analyzed(vec![
            box_mesh(Vec3::zeros(), Vec3::new(0.04, 0.04, 0.4)),
            box_mesh(Vec3::new(0.3, 0.0, 0.0), Vec3::new(0.04, 0.04, 0.3)),
        ]));
        assert!(g.edges.is_empty());
    }
}
