use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::optimize::minimize;
use super::*;
use crate::exemplar_db::AngleHistogram;

fn wood_db() -> Database {
    let mut db = Database::from_records(&[]);
    let mut h = AngleHistogram::new(MaterialPair::WoodWood);
    for _ in 0..100 {
        h.add(90.0);
    }
    let mut m = AngleHistogram::new(MaterialPair::MetalMetal);
    m.add(90.0);
    db.histograms = vec![h, m];
    db
}

fn rod(id: usize, a: Vec3, b: Vec3) -> LinePart {
    LinePart {
        id,
        material: Material::Wood,
        segment: Some([a, b]),
    }
}

fn edge(problem: &AngleProblem, i: usize, j: usize, point: Vec3) -> ProblemEdge {
    let seg = |id: usize| problem.parts[&id].segment;
    let dir = |id: usize| seg(id).map(|s| s[1] - s[0]);
    let (di, dj) = (dir(i), dir(j));
    ProblemEdge {
        i,
        j,
        point,
        dir_i: di,
        dir_j: dj,
        s_i: seg(i).map(|s| segment_param(&s, &point)),
        s_j: seg(j).map(|s| segment_param(&s, &point)),
        angle: match (di, dj) {
            (Some(a), Some(b)) => Some(folded_angle(&a, &b)),
            _ => None,
        },
    }
}

fn problem(parts: Vec<LinePart>, contacts: &[(usize, usize, Vec3)]) -> AngleProblem {
    let mut p = AngleProblem {
        parts: parts.into_iter().map(|p| (p.id, p)).collect(),
        edges: Vec::new(),
        ground: Vec::new(),
        classes: Vec::new(),
        contact_distance: 0.01,
    };
    p.edges = contacts.iter().map(|&(i, j, c)| edge(&p, i, j, c)).collect();
    p
}

/// A diagonal bar resting on four parallel rungs.
fn four_rungs() -> AngleProblem {
    let mut parts = Vec::new();
    for k in 0..4 {
        let x = k as f64 * 0.2;
        parts.push(rod(k, Vec3::new(x, -0.5, 0.0), Vec3::new(x, 0.5, 0.0)));
    }
    let a = Vec3::new(0.0, -0.3, 0.0);
    let b = Vec3::new(0.6, 0.3, 0.0);
    parts.push(rod(4, a, b));
    let contacts: Vec<(usize, usize, Vec3)> = (0..4).map(|k| (k, 4, a + (b - a) * (k as f64 / 3.0))).collect();
    problem(parts, &contacts)
}

#[test]
fn assessment_targets_feasible_bin() {
    let db = wood_db();
    let p = four_rungs();
    let cs = assess_angle_feasibility(&p, &db, FEASIBILITY_THRESHOLD).unwrap();
    assert_eq!(cs.len(), 4);
    assert!(cs.iter().all(|c| c.target == 82.5 && (c.angle - 45.0).abs() < 1e-9));

    let mut mixed = p.clone();
    mixed.parts.get_mut(&4).unwrap().material = Material::Metal;
    assert!(assess_angle_feasibility(&mixed, &db, FEASIBILITY_THRESHOLD).unwrap().is_empty());
}

#[test]
fn single_rotation_reaches_target() {
    let mut p = problem(
        vec![
            LinePart {
                id: 0,
                material: Material::Wood,
                segment: None,
            },
            rod(1, Vec3::zeros(), Vec3::new(0.5, 0.5 * 3f64.sqrt(), 0.0)),
        ],
        &[],
    );
    let mut e = edge(&p, 0, 1, Vec3::zeros());
    e.dir_i = Some(Vec3::x());
    e.angle = Some(60.0);
    p.edges.push(e);
    let c = AngleConstraint {
        edge: 0,
        i: 0,
        j: 1,
        angle: 60.0,
        target: 90.0,
        feasibility: 0.0,
        active: true,
    };
    let mut set = ConstraintSet::rigid();
    set.index = 0;
    set.motions.insert(1, Motion::Rotate { pivot: Vec3::zeros(), edge: 0 });
    let cfg = optimize_configuration(&p, &[c], &set, &wood_db(), &OptimizeSettings::default()).unwrap();
    let s = cfg.segments[&1];
    assert!((angle_between(&Vec3::x(), &(s[1] - s[0])) - 90.0).abs() < 0.1);
    assert!(((s[1] - s[0]).norm() - 1.0).abs() < 1e-6);
    assert_eq!(s[0], Vec3::zeros());
    assert!(cfg.converged);
}

#[test]
fn no_constraints_leaves_configuration() {
    let p = four_rungs();
    let cfg = optimize_configuration(&p, &[], &ConstraintSet::rigid(), &wood_db(), &OptimizeSettings::default()).unwrap();
    assert_eq!(cfg.objective, 0.0);
    assert!(cfg.segments.is_empty());
}

fn central_difference(obj: &Objective, x: &[f64], k: usize) -> f64 {
    let h = 1e-6;
    let (mut a, mut b) = (x.to_vec(), x.to_vec());
    a[k] += h;
    b[k] -= h;
    (obj.value(&a) - obj.value(&b)) / (2.0 * h)
}

#[test]
fn gradient_matches_finite_differences() {
    let p = four_rungs();
    let db = wood_db();
    let cs = assess_angle_feasibility(&p, &db, FEASIBILITY_THRESHOLD).unwrap();
    let (sets, _) = enumerate_configurations(&p, &cs, ENUMERATION_CAP);
    assert!(!sets.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let settings = OptimizeSettings::default();
    for set in sets.iter().cycle().take(20) {
        let obj = Objective::new(&p, &cs, set, &settings);
        let mut x = obj.initial();
        for v in x.iter_mut() {
            *v = (*v + rng.gen_range(-0.3..0.3)).clamp(0.05, 0.95);
        }
        let (_, g) = obj.eval(&x);
        for k in 0..x.len() {
            let fd = central_difference(&obj, &x, k);
            assert!((g[k] - fd).abs() <= 1e-4 * fd.abs().max(1.0), "{} vs {fd}", g[k]);
        }
    }
}

#[test]
fn repulsion_gradient_and_separation() {
    // Two bars whose lower ends slide on the same rail.
    let rail = rod(0, Vec3::new(-0.5, 0.0, 0.0), Vec3::new(0.5, 0.0, 0.0));
    let top = LinePart {
        id: 3,
        material: Material::Metal,
        segment: Some([Vec3::new(-0.5, 0.0, 1.0), Vec3::new(0.5, 0.0, 1.0)]),
    };
    let p = problem(
        vec![
            rail,
            rod(1, Vec3::new(-0.01, 0.0, 0.0), Vec3::new(-0.2, 0.0, 1.0)),
            rod(2, Vec3::new(0.01, 0.0, 0.0), Vec3::new(0.2, 0.0, 1.0)),
            top,
        ],
        &[
            (0, 1, Vec3::new(-0.01, 0.0, 0.0)),
            (0, 2, Vec3::new(0.01, 0.0, 0.0)),
            (1, 3, Vec3::new(-0.2, 0.0, 1.0)),
            (2, 3, Vec3::new(0.2, 0.0, 1.0)),
        ],
    );
    let slide = |edge: usize| Motion::Slide {
        ends: [Some(SlideEnd { host: 0, edge }), None],
    };
    let mut set = ConstraintSet::rigid();
    set.index = 0;
    set.motions.insert(1, slide(0));
    set.motions.insert(2, slide(1));
    let settings = OptimizeSettings::default();
    let obj = Objective::new(&p, &[], &set, &settings);
    let x = obj.initial();
    let (f, g) = obj.eval(&x);
    assert!(f > 0.0 && f.is_finite());
    for k in 0..x.len() {
        let fd = central_difference(&obj, &x, k);
        assert!((g[k] - fd).abs() <= 1e-4 * fd.abs().max(1e-3));
    }
    let res = minimize(&obj, &settings);
    let segs = obj.segments(&res.x);
    // Grid oracle on the two slide parameters.
    let mut best = f64::INFINITY;
    for a in 0..=200 {
        for b in 0..=200 {
            best = best.min(obj.value(&[a as f64 / 200.0, b as f64 / 200.0]));
        }
    }
    assert!(res.f <= best + 1e-6);
    assert!((segs[&1][0] - segs[&2][0]).norm() > 0.05);
}

#[test]
fn enumeration_of_one_edge_is_small() {
    let p = problem(
        vec![
            rod(0, Vec3::new(0.0, -0.5, 0.0), Vec3::new(0.0, 0.5, 0.0)),
            rod(1, Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.5, 0.5, 0.0)),
        ],
        &[(0, 1, Vec3::zeros())],
    );
    let db = wood_db();
    let cs = assess_angle_feasibility(&p, &db, FEASIBILITY_THRESHOLD).unwrap();
    assert_eq!(cs.len(), 1);
    let (sets, truncated) = enumerate_configurations(&p, &cs, ENUMERATION_CAP);
    assert!(sets.len() <= 5 && !truncated);
    // Both parts have a free end, so initialization fixes everything.
    assert!(sets.is_empty());
    let out = optimize_angles(&p, &db, &AngleOptParams::default()).unwrap();
    assert_eq!(out.selected.set_index, None);
}

#[test]
fn four_rungs_slide_to_feasible() {
    let p = four_rungs();
    let db = wood_db();
    let out = optimize_angles(&p, &db, &AngleOptParams::default()).unwrap();
    assert!(out.sets_enumerated > 0);
    let c = &out.selected;
    assert!(c.valid(), "{c:?}");
    assert!(!c.dropped.is_empty());
    for r in c.report.iter().filter(|r| r.retained) {
        assert!(r.ok);
    }
    for s in &c.slides {
        assert!((0.0..=1.0).contains(&s.t));
        let host = p.parts[&s.host].segment.unwrap();
        let end = c.segments[&s.part][s.end];
        let d = host[1] - host[0];
        let q = host[0] + d * ((end - host[0]).dot(&d) / d.norm_squared());
        assert!((end - q).norm() < 1e-9);
    }
}

fn config(objective: f64, dropped: usize, index: usize) -> Configuration {
    Configuration {
        set_index: Some(index),
        segments: BTreeMap::new(),
        slides: Vec::new(),
        objective,
        converged: true,
        iterations: 0,
        dropped: vec![(0, 1); dropped],
        report: Vec::new(),
        feasible: true,
        hanging: Vec::new(),
    }
}

#[test]
fn selection_rules() {
    let cs = [config(3.0, 0, 0), config(0.2, 0, 1), config(1.1, 0, 2)];
    assert_eq!(select_best_configuration(&cs).unwrap().set_index, Some(1));
    let cs = [config(1.0, 2, 0), config(1.0, 1, 1)];
    assert_eq!(select_best_configuration(&cs).unwrap().set_index, Some(1));
    let cs = [config(1.0, 1, 0)];
    assert_eq!(select_best_configuration(&cs).unwrap().set_index, Some(0));
    let mut bad = config(0.0, 0, 0);
    bad.feasible = false;
    let cs = [bad, config(5.0, 0, 1)];
    assert_eq!(select_best_configuration(&cs).unwrap().set_index, Some(1));
}

#[test]
fn segment_map_moves_segment() {
    let from = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
    let to = [Vec3::new(1.0, 1.0, 0.0), Vec3::new(1.0, 3.0, 0.0)];
    let (l, o) = segment_map(&from, &to);
    assert!((l * from[0] + o - to[0]).norm() < 1e-12);
    assert!((l * from[1] + o - to[1]).norm() < 1e-12);
    let back = [from[1], from[0]];
    let (l, o) = segment_map(&from, &back);
    assert!((l * from[1] + o - back[1]).norm() < 1e-12);
}
