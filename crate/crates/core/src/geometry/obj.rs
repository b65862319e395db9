//! Wavefront OBJ reading/writing with `g`/`o` groups as parts.
//!
//! Sidecar files are JSON objects keyed by group name:
//! materials `{"legs": "wood", "top": "metal"}`, regroup `{"leg_a": 0, "leg_b": 0}`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use tracing::warn;

use super::{segment_parts, weld_vertices, Material, Model, Part, TriangleMesh, Vec3};
use crate::error::{ReformError, Result};

/// Maps group names to part ids; groups sharing an id are merged.
pub type RegroupMap = BTreeMap<String, usize>;

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub material_sidecar: Option<PathBuf>,
    pub regroup: Option<PathBuf>,
    /// Optional vertex welding distance, relative to the mesh bounding-box diagonal.
    pub weld_tolerance: Option<f64>,
}

struct Group {
    name: String,
    faces: Vec<[usize; 3]>,
    first_line: usize,
}

/// Parses OBJ text into named triangle groups (fan-triangulated).
///
/// A file without any `g`/`o` statement yields a single group named `default`.
pub fn parse_obj(text: &str, path: &Path) -> Result<Vec<(String, TriangleMesh)>> {
    let err = |line: usize, message: String| ReformError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut groups: Vec<Group> = Vec::new();
    let mut by_name: HashMap<String, usize> = HashMap::new();
    let mut current: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        let Some(key) = tok.next() else { continue };
        match key {
            "v" => {
                let coords: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|_| err(lineno, format!("bad coordinate `{t}`"))))
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(err(lineno, "vertex needs 3 coordinates".into()));
                }
                if coords.iter().any(|c| !c.is_finite()) {
                    return Err(err(lineno, "non-finite coordinate".into()));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            "g" | "o" => {
                let name = tok.collect::<Vec<_>>().join(" ");
                let name = if name.is_empty() { "default".to_string() } else { name };
                let gi = *by_name.entry(name.clone()).or_insert_with(|| {
                    groups.push(Group {
                        name,
                        faces: Vec::new(),
                        first_line: lineno,
                    });
                    groups.len() - 1
                });
                current = Some(gi);
            }
            "f" => {
                let mut poly = Vec::new();
                for t in tok {
                    let first = t.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| err(lineno, format!("bad face index `{t}`")))?;
                    let resolved = if i > 0 {
                        i - 1
                    } else if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        return Err(err(lineno, "face index 0 is invalid".into()));
                    };
                    if resolved < 0 || resolved as usize >= vertices.len() {
                        return Err(err(lineno, format!("face index {i} out of range")));
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(err(lineno, "face needs at least 3 vertices".into()));
                }
                let gi = match current {
                    Some(g) => g,
                    None => {
                        let gi = *by_name.entry("default".into()).or_insert_with(|| {
                            groups.push(Group {
                                name: "default".into(),
                                faces: Vec::new(),
                                first_line: lineno,
                            });
                            groups.len() - 1
                        });
                        current = Some(gi);
                        gi
                    }
                };
                for k in 1..poly.len() - 1 {
                    groups[gi].faces.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            // Attributes that carry no part geometry.
            "vn" | "vt" | "vp" | "s" | "usemtl" | "mtllib" | "l" | "p" => {}
            other => warn!("{}:{lineno}: ignoring unknown statement `{other}`", path.display()),
        }
    }

    if groups.is_empty() {
        return Err(err(0, "file contains no faces".into()));
    }
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        if g.faces.is_empty() {
            return Err(ReformError::EmptyGroup(g.name));
        }
        let (verts, faces) = compact(&vertices, &g.faces);
        let (mesh, dropped) = TriangleMesh::new_lenient(verts, faces)?;
        if dropped > 0 {
            warn!("group `{}` (line {}): dropped {dropped} degenerate faces", g.name, g.first_line);
        }
        if mesh.is_empty() {
            return Err(ReformError::EmptyGroup(g.name));
        }
        out.push((g.name, mesh));
    }
    Ok(out)
}

pub(crate) fn compact(vertices: &[Vec3], faces: &[[usize; 3]]) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    // Keeps the original relative vertex order.
    let mut used: Vec<usize> = faces.iter().flatten().copied().collect();
    used.sort_unstable();
    used.dedup();
    let remap: HashMap<usize, usize> = used.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let verts = used.iter().map(|&i| vertices[i]).collect();
    let faces = faces.iter().map(|f| f.map(|i| remap[&i])).collect();
    (verts, faces)
}

fn read_json_map<T: serde::de::DeserializeOwned>(path: &Path) -> Result<BTreeMap<String, T>> {
    let text = fs::read_to_string(path).map_err(|e| ReformError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads a model with one part per group and an optional material sidecar.
pub fn load_model(path: &Path, material_sidecar: Option<&Path>) -> Result<Model> {
    load_model_with(
        path,
        &LoadOptions {
            material_sidecar: material_sidecar.map(Path::to_path_buf),
            ..Default::default()
        },
    )
}

pub fn load_model_with(path: &Path, opts: &LoadOptions) -> Result<Model> {
    let text = fs::read_to_string(path).map_err(|e| ReformError::io(path, e))?;
    let mut groups = parse_obj(&text, path)?;
    let declared_groups = text
        .lines()
        .any(|l| matches!(l.split_whitespace().next(), Some("g") | Some("o")));

    if let Some(tol) = opts.weld_tolerance {
        groups = groups
            .into_iter()
            .map(|(n, m)| weld_vertices(&m, tol).map(|w| (n, w)))
            .collect::<Result<_>>()?;
    }

    // No grouping information: decompose by face connectivity.
    if !declared_groups && groups.len() == 1 {
        let (_, mesh) = groups.pop().unwrap();
        groups = segment_parts(&mesh)
            .into_iter()
            .enumerate()
            .map(|(i, m)| (format!("component_{i}"), m))
            .collect();
    }

    let materials: BTreeMap<String, String> = match &opts.material_sidecar {
        Some(p) => read_json_map(p)?,
        None => BTreeMap::new(),
    };
    let lookup_material = |name: &str| -> Result<Material> {
        match materials.get(name) {
            Some(s) => Material::parse(s)
                .ok_or_else(|| ReformError::InvalidArgument(format!("unknown material `{s}` for `{name}`"))),
            None => Ok(Material::Untagged),
        }
    };
    for key in materials.keys() {
        if !groups.iter().any(|(n, _)| n == key) {
            warn!("material sidecar names unknown group `{key}`");
        }
    }

    let regroup: RegroupMap = match &opts.regroup {
        Some(p) => read_json_map(p)?,
        None => RegroupMap::new(),
    };

    let mut next_free = regroup.values().map(|&v| v + 1).max().unwrap_or(0);
    let mut merged: BTreeMap<usize, (Vec<String>, Vec<TriangleMesh>, Material)> = BTreeMap::new();
    for (name, mesh) in groups {
        let id = match regroup.get(&name) {
            Some(&id) => id,
            None => {
                next_free += 1;
                next_free - 1
            }
        };
        let mat = lookup_material(&name)?;
        let entry = merged
            .entry(id)
            .or_insert_with(|| (Vec::new(), Vec::new(), Material::Untagged));
        if entry.2 == Material::Untagged {
            entry.2 = mat;
        } else if mat != Material::Untagged && mat != entry.2 {
            return Err(ReformError::InvalidArgument(format!(
                "regrouped part {id} mixes materials {} and {mat}",
                entry.2
            )));
        }
        entry.0.push(name);
        entry.1.push(mesh);
    }

    let parts = merged
        .into_iter()
        .map(|(id, (names, meshes, material))| {
            let mesh = if meshes.len() == 1 {
                meshes.into_iter().next().unwrap()
            } else {
                TriangleMesh::merged(meshes.iter())?
            };
            Ok(Part {
                id,
                name: names.join("+"),
                mesh,
                material,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Model::new(parts)
}

/// Writes named meshes as OBJ groups.
pub fn write_obj<'a>(path: &Path, groups: impl IntoIterator<Item = (&'a str, &'a TriangleMesh)>) -> Result<()> {
    let mut out = String::new();
    let mut base = 1;
    for (name, mesh) in groups {
        let _ = writeln!(out, "g {name}");
        for v in mesh.vertices() {
            let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
        }
        for f in mesh.faces() {
            let _ = writeln!(out, "f {} {} {}", f[0] + base, f[1] + base, f[2] + base);
        }
        base += mesh.vertices().len();
    }
    fs::write(path, out).map_err(|e| ReformError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::test_shapes::box_mesh;

    fn cube_obj(name: &str, offset: f64, base: usize) -> String {
        let m = box_mesh(Vec3::new(offset, 0.0, 0.0), Vec3::repeat(1.0));
        let mut s = format!("g {name}\n");
        for v in m.vertices() {
            s += &format!("v {} {} {}\n", v.x, v.y, v.z);
        }
        for f in m.faces() {
            s += &format!("f {} {} {}\n", f[0] + base, f[1] + base, f[2] + base);
        }
        s
    }

    fn write_tmp(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn two_group_cube_pair() {
        let dir = tempfile::tempdir().unwrap();
        let text = cube_obj("a", 0.0, 1) + &cube_obj("b", 3.0, 9);
        let p = write_tmp(dir.path(), "pair.obj", &text);
        let model = load_model(&p, None).unwrap();
        assert_eq!(model.parts.len(), 2);
        assert!(model.parts.iter().all(|p| p.mesh.faces().len() == 12));
        assert!(model.parts.iter().all(|p| p.material == Material::Untagged));
    }

    #[test]
    fn quads_are_fan_triangulated() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\ng q\nf 1 2 3 4\n";
        let groups = parse_obj(text, Path::new("q.obj")).unwrap();
        assert_eq!(groups[0].1.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn slash_and_negative_indices() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\ng t\nf -3/1/1 -2/2/2 -1/3/3\n";
        let groups = parse_obj(text, Path::new("t.obj")).unwrap();
        assert_eq!(groups[0].1.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn sidecar_tags_one_of_four_groups() {
        let dir = tempfile::tempdir().unwrap();
        let text = cube_obj("legs", 0.0, 1)
            + &cube_obj("top", 2.0, 9)
            + &cube_obj("apron", 4.0, 17)
            + &cube_obj("rail", 6.0, 25);
        let p = write_tmp(dir.path(), "table.obj", &text);
        let side = write_tmp(dir.path(), "table.json", r#"{"legs":"wood"}"#);
        let model = load_model(&p, Some(&side)).unwrap();
        let wood = model.parts.iter().filter(|p| p.material == Material::Wood).count();
        let untagged = model.parts.iter().filter(|p| p.material == Material::Untagged).count();
        assert_eq!((wood, untagged), (1, 3));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "v 0 0 0\nv 1 0 zz\n";
        match parse_obj(text, Path::new("bad.obj")) {
            Err(ReformError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_group_is_rejected() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\ng empty\ng full\nf 1 2 3\n";
        assert!(matches!(parse_obj(text, Path::new("e.obj")), Err(ReformError::EmptyGroup(n)) if n == "empty"));
    }

    #[test]
    fn ungrouped_file_is_segmented_by_connectivity() {
        let dir = tempfile::tempdir().unwrap();
        let text = (cube_obj("x", 0.0, 1) + &cube_obj("y", 3.0, 9))
            .lines()
            .filter(|l| !l.starts_with('g'))
            .collect::<Vec<_>>()
            .join("\n");
        let p = write_tmp(dir.path(), "u.obj", &text);
        let model = load_model(&p, None).unwrap();
        assert_eq!(model.parts.len(), 2);
    }

    #[test]
    fn regroup_merges_groups() {
        let dir = tempfile::tempdir().unwrap();
        let text = cube_obj("a", 0.0, 1) + &cube_obj("b", 3.0, 9) + &cube_obj("c", 6.0, 17);
        let p = write_tmp(dir.path(), "r.obj", &text);
        let rg = write_tmp(dir.path(), "rg.json", r#"{"a": 0, "b": 0}"#);
        let model = load_model_with(
            &p,
            &LoadOptions {
                regroup: Some(rg),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(model.parts.len(), 2);
        let merged = model.part(0).unwrap();
        assert_eq!(merged.mesh.faces().len(), 24);
        assert_eq!(merged.name, "a+b");
    }

    #[test]
    fn write_then_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let a = box_mesh(Vec3::zeros(), Vec3::repeat(1.0));
        let b = box_mesh(Vec3::new(2.0, 0.0, 0.0), Vec3::repeat(0.5));
        let p = dir.path().join("w.obj");
        write_obj(&p, [("a", &a), ("b", &b)]).unwrap();
        let model = load_model(&p, None).unwrap();
        assert_eq!(model.parts[0].mesh, a);
        assert_eq!(model.parts[1].mesh, b);
    }
}
