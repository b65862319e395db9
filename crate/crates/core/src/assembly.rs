//! Placement of replacement parts and contact restoration by a translation solve.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{ReformError, Result};
use crate::exemplar_db::Database;
use crate::geometry::{sample_surface_seeded, Bvh, Material, Model, Part, TriangleMesh, Vec3};
use crate::part_analysis::OrientedBox;
use crate::preprocess::Preprocessed;
use crate::structure::ContactGraph;

const ALIGNMENT_SAMPLES: usize = 256;

/// Proper sign flips of a right-handed frame.
const FLIPS: [[f64; 3]; 4] = [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedPart {
    pub part_id: usize,
    /// Database part used as the replacement; `None` keeps the original geometry.
    pub source: Option<usize>,
    pub material: Material,
    /// Rotation from the replacement's frame to the query frame.
    pub rotation: Matrix3<f64>,
    /// Offset of the full placement map `x -> L x + translation`.
    pub translation: Vec3,
    /// Scale along the replacement's dominant axis.
    pub scale: f64,
    pub displacement: Vec3,
    /// Geometry in query coordinates, displacement included.
    pub mesh: TriangleMesh,
}

impl PlacedPart {
    /// Full linear map applied to the source geometry.
    pub fn linear(&self, source_obb: &OrientedBox) -> Matrix3<f64> {
        let a = source_obb.rotation();
        self.rotation * a * Matrix3::from_diagonal(&Vec3::new(self.scale, 1.0, 1.0)) * a.transpose()
    }
}

/// Affine map `x -> L x + o` sending `repl` onto `query` with sign flip `flip`.
pub fn obb_alignment(query: &OrientedBox, repl: &OrientedBox, flip: usize) -> Result<(Matrix3<f64>, Matrix3<f64>, Vec3, f64)> {
    if query.is_degenerate() || repl.is_degenerate() || repl.half_extents[0] <= 0.0 {
        return Err(ReformError::Degenerate("cannot align a degenerate box".into()));
    }
    let scale = query.half_extents[0] / repl.half_extents[0];
    let d = Matrix3::from_diagonal(&Vec3::from(FLIPS[flip]));
    let rotation = query.rotation() * d * repl.rotation().transpose();
    let ar = repl.rotation();
    let linear = rotation * ar * Matrix3::from_diagonal(&Vec3::new(scale, 1.0, 1.0)) * ar.transpose();
    let offset = query.center - linear * repl.center;
    Ok((linear, rotation, offset, scale))
}

/// Places one replacement mesh onto the query part's box; the flip minimizing
/// the RMS distance to the query surface wins, earlier flips on ties.
pub fn place_one(
    query_obb: &OrientedBox,
    query_bvh: &Bvh,
    repl_mesh: &TriangleMesh,
    repl_obb: &OrientedBox,
    seed: u64,
) -> Result<(Matrix3<f64>, Vec3, f64, TriangleMesh)> {
    let samples = sample_surface_seeded(repl_mesh, ALIGNMENT_SAMPLES, seed)?;
    let mut best: Option<(f64, usize)> = None;
    for flip in 0..FLIPS.len() {
        let (linear, _, offset, _) = obb_alignment(query_obb, repl_obb, flip)?;
        let mut sq = 0.0;
        for s in &samples {
            let p = linear * s.position + offset;
            if let Some((_, _, d)) = query_bvh.closest_point(&p) {
                sq += d * d;
            }
        }
        let rms = (sq / samples.len() as f64).sqrt();
        if best.map_or(true, |(b, _)| rms < b - 1e-12) {
            best = Some((rms, flip));
        }
    }
    let flip = best.expect("four flips").1;
    let (linear, rotation, offset, scale) = obb_alignment(query_obb, repl_obb, flip)?;
    let placed = repl_mesh.transformed(&linear, &offset)?;
    Ok((rotation, offset, scale, placed))
}

/// Places the assigned exemplar for every part in `assignment`; other parts keep their mesh.
pub fn place_replacements(pre: &Preprocessed, assignment: &BTreeMap<usize, usize>, db: &Database) -> Result<Vec<PlacedPart>> {
    let am = &pre.analyzed;
    let mut out = Vec::with_capacity(am.model.parts.len());
    for (k, part) in am.model.parts.iter().enumerate() {
        let Some(&c) = assignment.get(&part.id) else {
            if part.material.is_fabricable() {
                return Err(ReformError::InvalidArgument(format!("no replacement assigned to part {}", part.id)));
            }
            out.push(PlacedPart {
                part_id: part.id,
                source: None,
                material: part.material,
                rotation: Matrix3::identity(),
                translation: Vec3::zeros(),
                scale: 1.0,
                displacement: Vec3::zeros(),
                mesh: part.mesh.clone(),
            });
            continue;
        };
        let ex = db
            .parts
            .get(c)
            .ok_or_else(|| ReformError::InvalidArgument(format!("unknown exemplar {c}")))?;
        let q = &am.parts[k];
        let (rotation, translation, scale, mesh) = place_one(&q.descriptor.obb, &q.bvh, &ex.mesh, &ex.descriptor.obb, c as u64)?;
        out.push(PlacedPart {
            part_id: part.id,
            source: Some(c),
            material: ex.material,
            rotation,
            translation,
            scale,
            displacement: Vec3::zeros(),
            mesh,
        });
    }
    Ok(out)
}

/// A contact with one foot point on each part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootEdge {
    pub i: usize,
    pub j: usize,
    pub pi: Vec3,
    pub pj: Vec3,
}

pub fn contact_objective(edges: &[FootEdge], t: &BTreeMap<usize, Vec3>) -> f64 {
    let get = |id: usize| t.get(&id).copied().unwrap_or_else(Vec3::zeros);
    edges
        .iter()
        .map(|e| ((e.pi + get(e.i)) - (e.pj + get(e.j))).norm_squared())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Displacements {
    pub t: BTreeMap<usize, Vec3>,
    /// The fixed part of each connected component with edges.
    pub fixed: Vec<usize>,
    /// Nodes without any edge; they keep zero displacement.
    pub isolated: Vec<usize>,
}

/// Minimizes `sum |(p_i + t_i) - (p_j + t_j)|^2` with the highest-degree part of
/// every component fixed (ties to the smallest id), via the reduced Laplacian.
pub fn solve_contact_displacements(nodes: &[usize], edges: &[FootEdge]) -> Result<Displacements> {
    let mut adj: BTreeMap<usize, BTreeSet<usize>> = nodes.iter().map(|&n| (n, BTreeSet::new())).collect();
    for e in edges {
        if e.i == e.j {
            return Err(ReformError::InvalidArgument(format!("self contact on part {}", e.i)));
        }
        adj.entry(e.i).or_default().insert(e.j);
        adj.entry(e.j).or_default().insert(e.i);
    }
    let degree = |n: usize| edges.iter().filter(|e| e.i == n || e.j == n).count();
    let mut t: BTreeMap<usize, Vec3> = adj.keys().map(|&n| (n, Vec3::zeros())).collect();
    let mut seen = BTreeSet::new();
    let mut fixed = Vec::new();
    let mut isolated = Vec::new();
    for &start in adj.keys() {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut k = 0;
        while k < comp.len() {
            for &m in &adj[&comp[k]] {
                if seen.insert(m) {
                    comp.push(m);
                }
            }
            k += 1;
        }
        if comp.len() == 1 {
            warn!("part {start} has no contacts; displacement left at zero");
            isolated.push(start);
            continue;
        }
        comp.sort_unstable();
        let anchor = *comp.iter().max_by(|&&a, &&b| degree(a).cmp(&degree(b)).then(b.cmp(&a))).unwrap();
        fixed.push(anchor);
        let free: Vec<usize> = comp.iter().copied().filter(|&n| n != anchor).collect();
        let index: BTreeMap<usize, usize> = free.iter().enumerate().map(|(k, &n)| (n, k)).collect();
        let n = free.len();
        let mut l = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DMatrix::<f64>::zeros(n, 3);
        for e in edges {
            if comp.binary_search(&e.i).is_err() {
                continue;
            }
            let d = e.pi - e.pj;
            let (a, b) = (index.get(&e.i).copied(), index.get(&e.j).copied());
            if let Some(a) = a {
                l[(a, a)] += 1.0;
                for c in 0..3 {
                    rhs[(a, c)] -= d[c];
                }
            }
            if let Some(b) = b {
                l[(b, b)] += 1.0;
                for c in 0..3 {
                    rhs[(b, c)] += d[c];
                }
            }
            if let (Some(a), Some(b)) = (a, b) {
                l[(a, b)] -= 1.0;
                l[(b, a)] -= 1.0;
            }
        }
        let chol = l
            .cholesky()
            .ok_or_else(|| ReformError::Degenerate("contact system is singular".into()))?;
        let x = chol.solve(&rhs);
        for (&node, &k) in &index {
            t.insert(node, Vec3::new(x[(k, 0)], x[(k, 1)], x[(k, 2)]));
        }
    }
    Ok(Displacements { t, fixed, isolated })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestoreReport {
    pub objective_before: f64,
    pub objective_after: f64,
    pub fixed: Vec<usize>,
    pub isolated: Vec<usize>,
    pub edges: Vec<FootEdge>,
}

/// Foot points are the closest surface points of each placed part to the original contact point.
pub fn foot_edges(placed: &[PlacedPart], contacts: &ContactGraph) -> Result<Vec<FootEdge>> {
    let by_id: BTreeMap<usize, &PlacedPart> = placed.iter().map(|p| (p.part_id, p)).collect();
    let mut bvhs: BTreeMap<usize, Bvh> = BTreeMap::new();
    let mut out = Vec::new();
    for e in contacts.part_edges() {
        let (Some(a), Some(b)) = (by_id.get(&e.i), by_id.get(&e.j)) else {
            return Err(ReformError::InvalidArgument(format!("contact ({}, {}) references a missing part", e.i, e.j)));
        };
        let mut foot = |p: &PlacedPart| {
            let bvh = bvhs.entry(p.part_id).or_insert_with(|| Bvh::build(&p.mesh));
            bvh.closest_point(&e.contact_point).map(|(q, _, _)| q).unwrap_or(e.contact_point)
        };
        let pi = foot(a);
        let pj = foot(b);
        out.push(FootEdge { i: e.i, j: e.j, pi, pj });
    }
    Ok(out)
}

/// Translates placed parts so that contacts of the original graph close up.
pub fn restore_contacts(placed: &[PlacedPart], contacts: &ContactGraph) -> Result<(Vec<PlacedPart>, RestoreReport)> {
    let edges = foot_edges(placed, contacts)?;
    let nodes: Vec<usize> = placed.iter().map(|p| p.part_id).collect();
    let sol = solve_contact_displacements(&nodes, &edges)?;
    let before = contact_objective(&edges, &BTreeMap::new());
    let after = contact_objective(&edges, &sol.t);
    let mut out = Vec::with_capacity(placed.len());
    for p in placed {
        let t = sol.t.get(&p.part_id).copied().unwrap_or_else(Vec3::zeros);
        let mut q = p.clone();
        if t != Vec3::zeros() {
            q.mesh = p.mesh.transformed(&Matrix3::identity(), &t)?;
        }
        q.displacement += t;
        out.push(q);
    }
    Ok((
        out,
        RestoreReport {
            objective_before: before,
            objective_after: after,
            fixed: sol.fixed,
            isolated: sol.isolated,
            edges,
        },
    ))
}

/// Assembles placed parts into a model with the query's part ids and names.
pub fn placed_model(query: &Model, placed: &[PlacedPart]) -> Result<Model> {
    let parts = placed
        .iter()
        .map(|p| {
            let name = query.part(p.part_id).map(|q| q.name.clone()).unwrap_or_default();
            Part {
                id: p.part_id,
                name,
                mesh: p.mesh.clone(),
                material: p.material,
            }
        })
        .collect();
    let mut m = Model::new(parts)?;
    m.global_scale = query.global_scale;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::part_analysis::fit_obb;
    use crate::synthetic::shapes::{axis_box, bar, ellipse_points, swept_bar};
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn edge(i: usize, j: usize, pi: [f64; 3], pj: [f64; 3]) -> FootEdge {
        FootEdge { i, j, pi: Vec3::from(pi), pj: Vec3::from(pj) }
    }

    /// Generic least squares over the stacked residuals, via SVD.
    fn oracle(nodes: &[usize], edges: &[FootEdge], fixed: &[usize]) -> BTreeMap<usize, Vec3> {
        let free: Vec<usize> = nodes.iter().copied().filter(|n| !fixed.contains(n)).collect();
        let col = |n: usize| free.iter().position(|&f| f == n);
        let m = edges.len() * 3;
        let k = free.len() * 3;
        let mut a = DMatrix::<f64>::zeros(m, k);
        let mut b = DVector::<f64>::zeros(m);
        for (r, e) in edges.iter().enumerate() {
            for c in 0..3 {
                let row = 3 * r + c;
                if let Some(x) = col(e.i) {
                    a[(row, 3 * x + c)] += 1.0;
                }
                if let Some(x) = col(e.j) {
                    a[(row, 3 * x + c)] -= 1.0;
                }
                b[row] = -(e.pi[c] - e.pj[c]);
            }
        }
        let x = a.svd(true, true).solve(&b, 1e-12).unwrap();
        let mut t: BTreeMap<usize, Vec3> = nodes.iter().map(|&n| (n, Vec3::zeros())).collect();
        for (k, &n) in free.iter().enumerate() {
            t.insert(n, Vec3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2]));
        }
        t
    }

    #[test]
    fn two_parts_close_gap() {
        let e = [edge(0, 1, [0.0; 3], [0.05, 0.0, 0.0])];
        let s = solve_contact_displacements(&[0, 1], &e).unwrap();
        assert_eq!(s.fixed, vec![0]);
        assert_eq!(s.t[&0], Vec3::zeros());
        assert!((s.t[&1] - Vec3::new(-0.05, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(contact_objective(&e, &s.t), 0.0);
    }

    #[test]
    fn star_hub_is_fixed_and_residuals_vanish() {
        let e = [
            edge(1, 0, [0.1, 0.0, 0.0], [0.0, 0.02, 0.0]),
            edge(0, 2, [0.0, 0.0, 0.03], [0.01, 0.0, 0.0]),
            edge(0, 3, [0.0; 3], [-0.04, 0.01, 0.0]),
            edge(4, 0, [0.2, 0.2, 0.2], [0.0; 3]),
        ];
        let s = solve_contact_displacements(&[0, 1, 2, 3, 4, 5], &e).unwrap();
        assert_eq!(s.fixed, vec![0]);
        assert_eq!(s.isolated, vec![5]);
        assert_eq!(s.t[&0], Vec3::zeros());
        assert!(contact_objective(&e, &s.t) < 1e-18);
        let o = oracle(&[0, 1, 2, 3, 4], &e, &[0]);
        for n in 0..5 {
            assert!((o[&n] - s.t[&n]).norm() < 1e-10);
        }
    }

    #[test]
    fn degree_ties_fix_smallest_id() {
        let e = [edge(3, 7, [0.0; 3], [0.01, 0.0, 0.0])];
        let s = solve_contact_displacements(&[3, 7], &e).unwrap();
        assert_eq!(s.fixed, vec![3]);
    }

    #[test]
    fn identity_replacement_keeps_pose() {
        let m = bar(Vec3::new(0.1, 0.0, 0.0), Vec3::new(0.4, 0.3, 0.5), 0.03, 0.02);
        let obb = fit_obb(&m).unwrap();
        let bvh = Bvh::build(&m);
        let (rot, _, scale, placed) = place_one(&obb, &bvh, &m, &obb, 1).unwrap();
        assert!((rot - Matrix3::identity()).norm() < 1e-9);
        assert!((scale - 1.0).abs() < 1e-12);
        for (a, b) in placed.vertices().iter().zip(m.vertices()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn dominant_axis_scaling_only() {
        let q = axis_box(Vec3::zeros(), Vec3::new(1.0, 0.04, 0.03));
        let r = axis_box(Vec3::new(2.0, 0.0, 0.0), Vec3::new(0.5, 0.02, 0.01));
        let (qo, ro) = (fit_obb(&q).unwrap(), fit_obb(&r).unwrap());
        let (_, _, scale, placed) = place_one(&qo, &Bvh::build(&q), &r, &ro, 1).unwrap();
        assert!((scale - 2.0).abs() < 1e-12);
        let po = fit_obb(&placed).unwrap();
        let e = po.extents();
        assert!((e[0] - 1.0).abs() < 1e-9 && (e[1] - 0.02).abs() < 1e-9 && (e[2] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn curved_tube_lands_on_rod_ends() {
        let rod = bar(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 0.6), 0.03, 0.03);
        let pts = ellipse_points(Vec3::new(1.0, 1.0, 0.0), Vec3::x(), Vec3::y(), 0.3, 0.1, 0.0, std::f64::consts::PI, 24);
        let tube = swept_bar(&pts, 0.008);
        let (qo, to) = (fit_obb(&rod).unwrap(), fit_obb(&tube).unwrap());
        let (_, _, _, placed) = place_one(&qo, &Bvh::build(&rod), &tube, &to, 3).unwrap();
        let (linear, _, offset, _) = {
            // Recover the applied map from a known point pair.
            let flip_maps: Vec<_> = (0..4).map(|f| obb_alignment(&qo, &to, f).unwrap()).collect();
            let v0 = tube.vertices()[0];
            flip_maps
                .into_iter()
                .find(|(l, _, o, _)| ((l * v0 + o) - placed.vertices()[0]).norm() < 1e-12)
                .unwrap()
        };
        let ends = |b: &OrientedBox| [b.center - b.axes[0] * b.half_extents[0], b.center + b.axes[0] * b.half_extents[0]];
        let mapped = ends(&to).map(|p| linear * p + offset);
        let target = ends(&qo);
        let matched = (mapped[0] - target[0]).norm().max((mapped[1] - target[1]).norm())
            .min((mapped[0] - target[1]).norm().max((mapped[1] - target[0]).norm()));
        assert!(matched < 1e-6, "{matched}");
    }

    proptest! {
        #[test]
        fn objective_drops_and_matches_oracle(
            gaps in proptest::collection::vec(proptest::array::uniform3(-0.05f64..0.05), 9),
            shift in proptest::array::uniform3(-1.0f64..1.0),
        ) {
            // A loopy graph: cycle 0-1-2-3-4 plus chords.
            let pairs = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2), (1, 3), (2, 4), (1, 4)];
            let edges: Vec<FootEdge> = pairs.iter().zip(&gaps).map(|(&(i, j), g)| edge(i, j, [0.0; 3], *g)).collect();
            let nodes = [0, 1, 2, 3, 4];
            let s = solve_contact_displacements(&nodes, &edges).unwrap();
            let after = contact_objective(&edges, &s.t);
            prop_assert!(after <= contact_objective(&edges, &BTreeMap::new()) + 1e-15);
            let o = oracle(&nodes, &edges, &s.fixed);
            prop_assert!((contact_objective(&edges, &o) - after).abs() < 1e-8);
            // Translating every foot point leaves the displacements unchanged.
            let v = Vec3::from(shift);
            let moved: Vec<FootEdge> = edges.iter().map(|e| FootEdge { pi: e.pi + v, pj: e.pj + v, ..*e }).collect();
            let s2 = solve_contact_displacements(&nodes, &moved).unwrap();
            for n in nodes {
                prop_assert!((s2.t[&n] - s.t[&n]).norm() < 1e-12);
            }
        }
    }
}
