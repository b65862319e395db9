use std::collections::HashMap;

use super::obj::compact;
use super::{TriangleMesh, Vec3};
use crate::error::Result;

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Splits a mesh into components of faces connected through shared vertices.
///
/// Components are ordered by their smallest face index; vertex lists are compacted.
pub fn segment_parts(mesh: &TriangleMesh) -> Vec<TriangleMesh> {
    let mut ds = DisjointSet::new(mesh.vertices().len());
    for f in mesh.faces() {
        ds.union(f[0], f[1]);
        ds.union(f[1], f[2]);
    }
    let mut order: Vec<usize> = Vec::new();
    let mut buckets: HashMap<usize, Vec<[usize; 3]>> = HashMap::new();
    for f in mesh.faces() {
        let root = ds.find(f[0]);
        buckets
            .entry(root)
            .or_insert_with(|| {
                order.push(root);
                Vec::new()
            })
            .push(*f);
    }
    order
        .into_iter()
        .map(|root| {
            let (v, f) = compact(mesh.vertices(), &buckets[&root]);
            TriangleMesh::new(v, f).expect("sub-mesh of a valid mesh is valid")
        })
        .collect()
}

/// Merges vertices closer than `rel_tol` times the bounding-box diagonal.
///
/// Faces that collapse after merging are dropped.
pub fn weld_vertices(mesh: &TriangleMesh, rel_tol: f64) -> Result<TriangleMesh> {
    let (lo, hi) = mesh.aabb();
    let tol = rel_tol * (hi - lo).norm();
    if tol <= 0.0 {
        return Ok(mesh.clone());
    }
    let cell = |p: &Vec3| -> (i64, i64, i64) {
        let q = (p - lo) / tol;
        (q.x.floor() as i64, q.y.floor() as i64, q.z.floor() as i64)
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let mut remap = vec![0usize; mesh.vertices().len()];
    let mut kept: Vec<Vec3> = Vec::new();
    for (i, p) in mesh.vertices().iter().enumerate() {
        let c = cell(p);
        let mut found = None;
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = grid.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        if let Some(&k) = list.iter().find(|&&k| (kept[k] - p).norm() <= tol) {
                            found = Some(k);
                            break 'search;
                        }
                    }
                }
            }
        }
        remap[i] = match found {
            Some(k) => k,
            None => {
                kept.push(*p);
                grid.entry(c).or_default().push(kept.len() - 1);
                kept.len() - 1
            }
        };
    }
    let faces: Vec<[usize; 3]> = mesh
        .faces()
        .iter()
        .map(|f| f.map(|i| remap[i]))
        .filter(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
        .collect();
    let (mesh, _) = TriangleMesh::new_lenient(kept, faces)?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::test_shapes::box_mesh;
    use proptest::prelude::*;

    fn merged(meshes: &[TriangleMesh]) -> TriangleMesh {
        TriangleMesh::merged(meshes.iter()).unwrap()
    }

    #[test]
    fn two_disjoint_cubes() {
        let m = merged(&[
            box_mesh(Vec3::zeros(), Vec3::repeat(1.0)),
            box_mesh(Vec3::new(3.0, 0.0, 0.0), Vec3::repeat(1.0)),
        ]);
        let parts = segment_parts(&m);
        assert_eq!(parts.iter().map(|p| p.faces().len()).collect::<Vec<_>>(), vec![12, 12]);
    }

    #[test]
    fn connected_sphere_is_one_component() {
        // Octahedron subdivided once: closed and connected.
        let v = vec![
            Vec3::x(),
            -Vec3::x(),
            Vec3::y(),
            -Vec3::y(),
            Vec3::z(),
            -Vec3::z(),
        ];
        let f = vec![
            [0, 2, 4],
            [2, 1, 4],
            [1, 3, 4],
            [3, 0, 4],
            [2, 0, 5],
            [1, 2, 5],
            [3, 1, 5],
            [0, 3, 5],
        ];
        let m = TriangleMesh::new(v, f).unwrap();
        assert_eq!(segment_parts(&m).len(), 1);
    }

    #[test]
    fn cube_plus_isolated_triangle() {
        let tri = TriangleMesh::new(
            vec![Vec3::new(5.0, 0.0, 0.0), Vec3::new(6.0, 0.0, 0.0), Vec3::new(5.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let m = merged(&[box_mesh(Vec3::zeros(), Vec3::repeat(1.0)), tri]);
        let mut sizes: Vec<usize> = segment_parts(&m).iter().map(|p| p.faces().len()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![1, 12]);
    }

    #[test]
    fn welding_joins_duplicated_vertices() {
        // Two triangles sharing an edge through duplicated (not shared) vertices.
        let v = vec![
            Vec3::zeros(),
            Vec3::x(),
            Vec3::y(),
            Vec3::x() + Vec3::repeat(1e-9),
            Vec3::y(),
            Vec3::new(1.0, 1.0, 0.0),
        ];
        let m = TriangleMesh::new(v, vec![[0, 1, 2], [3, 5, 4]]).unwrap();
        assert_eq!(segment_parts(&m).len(), 2);
        let w = weld_vertices(&m, 1e-6).unwrap();
        assert_eq!(w.vertices().len(), 4);
        assert_eq!(segment_parts(&w).len(), 1);
    }

    proptest! {
        #[test]
        fn components_partition_the_faces(offsets in proptest::collection::vec(0u8..6, 1..5)) {
            let boxes: Vec<TriangleMesh> = offsets
                .iter()
                .enumerate()
                .map(|(i, &o)| box_mesh(Vec3::new(i as f64 * 3.0, o as f64, 0.0), Vec3::repeat(1.0)))
                .collect();
            let m = merged(&boxes);
            let parts = segment_parts(&m);
            prop_assert_eq!(parts.len(), boxes.len());
            let total: usize = parts.iter().map(|p| p.faces().len()).sum();
            prop_assert_eq!(total, m.faces().len());
            let area: f64 = parts.iter().map(|p| p.surface_area()).sum();
            prop_assert!((area - m.surface_area()).abs() < 1e-9);
        }
    }
}
