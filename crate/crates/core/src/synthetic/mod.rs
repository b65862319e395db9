//! Procedural generator of tagged furniture models.
//!
//! Coordinates are z-up with the floor at z = 0 and roughly unit overall size.
//! Wood parts are thick boxes meeting near right angles; metal parts are thin
//! bars, arcs and sheets meeting at varied angles.

pub mod shapes;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exemplar_db::{JointTag, TaggedModel};
use crate::fabrication::JointKind;
use crate::geometry::{Material, Model, Part, TriangleMesh, Vec3};
use shapes::{axis_box, bar, ellipse_points, swept_bar};

/// Penetration used so that touching parts overlap slightly.
const OVERLAP: f64 = 0.002;
/// Pairs whose bounding boxes are within this gap get a joint tag.
const TAG_GAP: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartShape {
    Rod,
    Board,
    Tube,
    Arc,
    Sheet,
}

impl PartShape {
    pub fn material(self) -> Material {
        match self {
            PartShape::Rod | PartShape::Board => Material::Wood,
            _ => Material::Metal,
        }
    }
}

/// Joint kind the generator assigns to a pair of touching shapes.
pub fn rulebook(a: PartShape, b: PartShape) -> JointKind {
    use PartShape::*;
    let (a, b) = if a.material() == Material::Wood { (a, b) } else { (b, a) };
    match (a, b) {
        (Rod, Rod) => JointKind::MortiseTenon,
        (Rod, Board) | (Board, Rod) => JointKind::Dowel,
        (Board, Board) => JointKind::Lap,
        (Board, _) | (Rod, Sheet) => JointKind::Screw,
        (Rod, _) => JointKind::Bracket,
        (Sheet, _) | (_, Sheet) => JointKind::Bolt,
        _ => JointKind::Weld,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Chair,
    Table,
    Bed,
    Cabinet,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Chair, Category::Table, Category::Bed, Category::Cabinet];

    fn name(self) -> &'static str {
        match self {
            Category::Chair => "chair",
            Category::Table => "table",
            Category::Bed => "bed",
            Category::Cabinet => "cabinet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Style {
    Wood,
    Metal,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub chairs: usize,
    pub tables: usize,
    pub beds: usize,
    pub cabinets: usize,
    /// Share of all-metal models.
    pub metal_fraction: f64,
    /// Share of wood/metal mixed models.
    pub mixed_fraction: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig::scaled([83, 32, 19, 18], 0.2)
    }
}

impl GeneratorConfig {
    /// Category counts `ceil(count * scale)`, at least one each.
    pub fn scaled(counts: [usize; 4], scale: f64) -> Self {
        let c = |n: usize| ((n as f64 * scale - 1e-9).ceil() as usize).max(1);
        GeneratorConfig {
            chairs: c(counts[0]),
            tables: c(counts[1]),
            beds: c(counts[2]),
            cabinets: c(counts[3]),
            metal_fraction: 0.35,
            mixed_fraction: 0.2,
        }
    }

    pub fn count(&self, c: Category) -> usize {
        match c {
            Category::Chair => self.chairs,
            Category::Table => self.tables,
            Category::Bed => self.beds,
            Category::Cabinet => self.cabinets,
        }
    }

    pub fn total(&self) -> usize {
        Category::ALL.iter().map(|&c| self.count(c)).sum()
    }
}

/// Generated models interleave categories so that any prefix has a similar mix.
pub fn generate_synthetic_database(cfg: &GeneratorConfig, seed: u64) -> Vec<TaggedModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::new();
    let mut done = [0usize; 4];
    while order.len() < cfg.total() {
        for (k, &c) in Category::ALL.iter().enumerate() {
            if done[k] < cfg.count(c) {
                order.push((c, done[k]));
                done[k] += 1;
            }
        }
    }
    // Styles cycle deterministically so every category sees every style.
    order
        .into_iter()
        .enumerate()
        .map(|(n, (cat, idx))| {
            let x = (n as f64 * 0.618_033_988_75).fract();
            let style = if x < cfg.metal_fraction {
                Style::Metal
            } else if x < cfg.metal_fraction + cfg.mixed_fraction {
                Style::Mixed
            } else {
                Style::Wood
            };
            generate_model(cat, style, &format!("{}_{idx:03}", cat.name()), &mut rng)
        })
        .collect()
}

pub fn generate_model(cat: Category, style: Style, name: &str, rng: &mut impl Rng) -> TaggedModel {
    let mut b = Builder::default();
    match cat {
        Category::Chair => chair(&mut b, style, rng),
        Category::Table => table(&mut b, style, rng),
        Category::Bed => bed(&mut b, style, rng),
        Category::Cabinet => cabinet(&mut b, style, rng),
    }
    b.finish(name)
}

#[derive(Default)]
struct Builder {
    parts: Vec<(String, PartShape, TriangleMesh)>,
}

impl Builder {
    fn add(&mut self, name: impl Into<String>, shape: PartShape, mesh: TriangleMesh) -> usize {
        self.parts.push((name.into(), shape, mesh));
        self.parts.len() - 1
    }

    fn finish(self, name: &str) -> TaggedModel {
        let boxes: Vec<(Vec3, Vec3)> = self.parts.iter().map(|(_, _, m)| m.aabb()).collect();
        let mut joint_tags = Vec::new();
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                let apart = (0..3).any(|k| {
                    boxes[i].0[k] > boxes[j].1[k] + TAG_GAP || boxes[j].0[k] > boxes[i].1[k] + TAG_GAP
                });
                if !apart {
                    joint_tags.push(JointTag {
                        i,
                        j,
                        kind: rulebook(self.parts[i].1, self.parts[j].1),
                    });
                }
            }
        }
        let parts = self
            .parts
            .into_iter()
            .enumerate()
            .map(|(id, (name, shape, mesh))| Part {
                id,
                name,
                mesh,
                material: shape.material(),
            })
            .collect();
        TaggedModel {
            name: name.to_string(),
            model: Model::new(parts).expect("unique ids"),
            joint_tags,
        }
    }
}

fn unit_dims(rng: &mut impl Rng, ranges: [(f64, f64); 3]) -> [f64; 3] {
    let d: [f64; 3] = std::array::from_fn(|k| rng.gen_range(ranges[k].0..ranges[k].1));
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    d.map(|x| x / n)
}

/// A straight member given by its axis line.
#[derive(Clone, Copy)]
struct Axis {
    a: Vec3,
    b: Vec3,
}

impl Axis {
    /// Point on the axis line at height `z`.
    fn at_z(&self, z: f64) -> Vec3 {
        let t = (z - self.a.z) / (self.b.z - self.a.z);
        self.a + (self.b - self.a) * t
    }
}

/// Down-going direction tilted from vertical by at most `max_deg`.
fn jitter_dir(rng: &mut impl Rng, max_deg: f64) -> Vec3 {
    let tilt = rng.gen_range(0.0..max_deg).to_radians();
    let az = rng.gen_range(0.0..2.0 * PI);
    Vec3::new(tilt.sin() * az.cos(), tilt.sin() * az.sin(), -tilt.cos())
}

/// Member from `top` along `dir` (pointing down) to height `z_end`.
fn member_to(top: Vec3, dir: Vec3, z_end: f64) -> Axis {
    let t = (z_end - top.z) / dir.z;
    Axis { a: top + dir * t, b: top }
}

fn wood_dir(rng: &mut impl Rng) -> Vec3 {
    jitter_dir(rng, 3.0)
}

/// Outward splay for a leg at corner signs `(sx, sy)`.
fn splay_dir(sx: f64, sy: f64, ax: f64, ay: f64) -> Vec3 {
    Vec3::new(sx * ax.tan(), sy * ay.tan(), -1.0).normalize()
}

/// Metal design angles between members lie in this range (degrees).
const METAL_ANGLES: (f64, f64) = (72.0, 88.0);

/// Per-axis splay angles giving a horizontal x-stretcher the angle `tx` with each
/// leg and a y-stretcher the angle `ty`.
fn splay_for(tx: f64, ty: f64) -> (f64, f64) {
    let (cx, cy) = (tx.to_radians().cos(), ty.to_radians().cos());
    let n = (1.0 / (1.0 - cx * cx - cy * cy)).sqrt();
    ((cx * n).atan(), (cy * n).atan())
}

fn metal_splay(rng: &mut impl Rng) -> (f64, f64) {
    let (lo, hi) = METAL_ANGLES;
    splay_for(rng.gen_range(lo..hi), rng.gen_range(lo..hi))
}

fn line_angle(a: Vec3, b: Vec3) -> f64 {
    let c = (a.dot(&b) / (a.norm() * b.norm())).abs().min(1.0);
    c.acos().to_degrees()
}

const CORNERS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

/// Legs under a rectangle `w x d` whose underside is at `z_top`; returns leg axes.
fn legs(
    b: &mut Builder,
    rng: &mut impl Rng,
    w: f64,
    d: f64,
    z_top: f64,
    section: f64,
    shape: PartShape,
    splay: Option<(f64, f64)>,
) -> Vec<Axis> {
    let inset = section / 2.0 + 0.01;
    let mut out = Vec::new();
    for (k, &(sx, sy)) in CORNERS.iter().enumerate() {
        let top = Vec3::new(sx * (w / 2.0 - inset), sy * (d / 2.0 - inset), z_top + OVERLAP);
        let dir = match splay {
            Some((ax, ay)) => splay_dir(sx, sy, ax, ay),
            None => wood_dir(rng),
        };
        let ax = member_to(top, dir, 0.0);
        b.add(format!("leg{k}"), shape, bar(ax.a, ax.b, section, section));
        out.push(ax);
    }
    out
}

/// Horizontal members joining consecutive legs at height `z`.
fn ring(b: &mut Builder, name: &str, axes: &[Axis], z: f64, w: f64, h: f64, shape: PartShape, sides: &[usize]) {
    for &k in sides {
        let (p, q) = (axes[k].at_z(z), axes[(k + 1) % axes.len()].at_z(z));
        b.add(format!("{name}{k}"), shape, bar(p, q, w, h));
    }
}

fn chair(b: &mut Builder, style: Style, rng: &mut impl Rng) {
    let [w, d, h] = unit_dims(rng, [(0.4, 0.55), (0.4, 0.55), (0.8, 1.0)]);
    let hs = h * rng.gen_range(0.48..0.55);
    match style {
        Style::Wood => {
            let s = rng.gen_range(0.025..0.04);
            let ts = rng.gen_range(0.02..0.04);
            b.add("seat", PartShape::Board, axis_box(Vec3::new(0.0, 0.0, hs - ts / 2.0), Vec3::new(w, d, ts)));
            let axes = legs(b, rng, w, d, hs - ts, s, PartShape::Rod, None);
            let a = rng.gen_range(0.04..0.07);
            ring(b, "apron", &axes, hs - ts - a / 2.0 + OVERLAP, 0.6 * s, a, PartShape::Rod, &[0, 1, 2, 3]);
            let zs = hs * rng.gen_range(0.15..0.3);
            ring(b, "stretcher", &axes, zs, 0.6 * s, 0.6 * s, PartShape::Rod, &[1, 3]);
            // Back posts rise from the seat's rear corners.
            let inset = s / 2.0 + 0.01;
            let mut posts = Vec::new();
            for (k, sx) in [-1.0, 1.0].into_iter().enumerate() {
                let bottom = Vec3::new(sx * (w / 2.0 - inset), d / 2.0 - inset, hs - OVERLAP);
                let up = -wood_dir(rng);
                let top = bottom + up * ((h - bottom.z) / up.z);
                b.add(format!("post{k}"), PartShape::Rod, bar(bottom, top, s, s));
                posts.push(Axis { a: bottom, b: top });
            }
            let bh = rng.gen_range(0.08..0.15);
            let zc = h - bh / 2.0 - 0.02;
            let tb = rng.gen_range(0.016..0.03);
            b.add("backrest", PartShape::Board, bar(posts[0].at_z(zc), posts[1].at_z(zc), tb, bh));
        }
        Style::Metal | Style::Mixed => {
            let r = rng.gen_range(0.005..0.01);
            let (seat_shape, ts) = if style == Style::Metal {
                (PartShape::Sheet, rng.gen_range(0.004..0.01))
            } else {
                (PartShape::Board, rng.gen_range(0.02..0.04))
            };
            b.add("seat", seat_shape, axis_box(Vec3::new(0.0, 0.0, hs - ts / 2.0), Vec3::new(w, d, ts)));
            let splay = metal_splay(rng);
            let axes = legs(b, rng, w, d, hs - ts, r, PartShape::Tube, Some(splay));
            let zs = hs * rng.gen_range(0.2..0.45);
            ring(b, "stretcher", &axes, zs, r, r, PartShape::Tube, &[0, 1, 2, 3]);
            // The arc stands on the seat, clear of the leg tops.
            let a = w / 2.0 - r / 2.0 - 0.05;
            let yb = d / 2.0 - r / 2.0 - 0.01;
            let hb = h - hs;
            let pts = ellipse_points(Vec3::new(0.0, yb, hs - OVERLAP), Vec3::x(), Vec3::z(), a, hb, 0.0, PI, 32);
            b.add("back_arc", PartShape::Arc, swept_bar(&pts, r));
        }
    }
}

fn table(b: &mut Builder, style: Style, rng: &mut impl Rng) {
    let [w, d, h] = unit_dims(rng, [(0.8, 1.4), (0.5, 0.9), (0.7, 0.8)]);
    let top_wood = style != Style::Metal;
    let tt = if top_wood { rng.gen_range(0.02..0.04) } else { rng.gen_range(0.004..0.01) };
    let top_shape = if top_wood { PartShape::Board } else { PartShape::Sheet };
    // Planks laid edge to edge across the width.
    let planks = rng.gen_range(3..=5);
    let pw = d / planks as f64;
    for n in 0..planks {
        let y = -d / 2.0 + pw * (n as f64 + 0.5);
        b.add(format!("top{n}"), top_shape, axis_box(Vec3::new(0.0, y, h - tt / 2.0), Vec3::new(w, pw, tt)));
    }
    match style {
        Style::Wood => {
            let s = rng.gen_range(0.03..0.04);
            let axes = legs(b, rng, w, d, h - tt, s, PartShape::Rod, None);
            let a = rng.gen_range(0.05..0.08);
            ring(b, "apron", &axes, h - tt - a / 2.0 + OVERLAP, 0.6 * s, a, PartShape::Rod, &[0, 1, 2, 3]);
            if rng.gen_bool(0.5) {
                let zs = h * rng.gen_range(0.15..0.25);
                ring(b, "stretcher", &axes, zs, 0.6 * s, 0.6 * s, PartShape::Rod, &[1, 3]);
            }
        }
        Style::Metal | Style::Mixed => {
            let r = rng.gen_range(0.006..0.01);
            let splay = metal_splay(rng);
            let axes = legs(b, rng, w, d, h - tt, r, PartShape::Tube, Some(splay));
            if style == Style::Mixed {
                let s = rng.gen_range(0.025..0.035);
                let a = rng.gen_range(0.05..0.08);
                ring(b, "apron", &axes, h - tt - a / 2.0 + OVERLAP, 0.6 * s, a, PartShape::Rod, &[0, 2]);
            }
            // A diagonal brace on each long side, plain stretchers on the short ones.
            // Brace heights are redrawn until both leg angles are in range.
            let dir = |a: &Axis| a.b - a.a;
            let (lo, hi) = loop {
                let (lo, hi) = (h * rng.gen_range(0.1..0.2), h * rng.gen_range(0.2..0.5));
                let brace = axes[1].at_z(hi) - axes[0].at_z(lo);
                let ok = [0, 1].iter().all(|&k| {
                    let t = line_angle(brace, dir(&axes[k]));
                    t >= METAL_ANGLES.0 && t <= METAL_ANGLES.1
                });
                if ok {
                    break (lo, hi);
                }
            };
            for (n, (k0, k1)) in [(0usize, 1usize), (3, 2)].into_iter().enumerate() {
                b.add(format!("brace{n}"), PartShape::Tube, bar(axes[k0].at_z(lo), axes[k1].at_z(hi), r, r));
            }
            ring(b, "stretcher", &axes, lo, r, r, PartShape::Tube, &[1, 3]);
        }
    }
}

fn bed(b: &mut Builder, style: Style, rng: &mut impl Rng) {
    let [w, l, hh] = unit_dims(rng, [(1.0, 1.6), (1.9, 2.1), (0.9, 1.1)]);
    let hf = hh * rng.gen_range(0.6..0.8);
    let hr = hh * rng.gen_range(0.3..0.4);
    let metal_frame = style != Style::Wood;
    let (post_shape, s) = if metal_frame {
        (PartShape::Tube, rng.gen_range(0.006..0.01))
    } else {
        (PartShape::Rod, rng.gen_range(0.03..0.04))
    };
    let inset = s / 2.0;
    let mut posts = Vec::new();
    for (k, &(sx, sy)) in CORNERS.iter().enumerate() {
        let height = if sy < 0.0 { hh } else { hf };
        let top = Vec3::new(sx * (w / 2.0 - inset), sy * (l / 2.0 - inset), height);
        let dir = if metal_frame { -Vec3::z() } else { wood_dir(rng) };
        let ax = member_to(top, dir, 0.0);
        b.add(format!("post{k}"), post_shape, bar(ax.a, ax.b, s, s));
        posts.push(ax);
    }
    let rh = rng.gen_range(0.05..0.08);
    let (rail_shape, rw, rhh) = if metal_frame { (PartShape::Tube, s, s) } else { (PartShape::Rod, 0.6 * s, rh) };
    b.add("rail0", rail_shape, bar(posts[0].at_z(hr), posts[3].at_z(hr), rw, rhh));
    b.add("rail1", rail_shape, bar(posts[1].at_z(hr), posts[2].at_z(hr), rw, rhh));
    let slats = rng.gen_range(4..=8);
    let (slat_shape, st) = if style == Style::Metal {
        (PartShape::Sheet, rng.gen_range(0.004..0.01))
    } else {
        (PartShape::Board, rng.gen_range(0.016..0.025))
    };
    let (margin, x) = (0.15 * l, w / 2.0 - inset);
    let pitch = (l - 2.0 * margin) / (slats - 1) as f64;
    // Metal slats close into a continuous deck.
    let sw = if style == Style::Metal { pitch } else { pitch * rng.gen_range(0.5..0.7) };
    let z = hr + rhh / 2.0 + st / 2.0 - OVERLAP;
    for n in 0..slats {
        let y = -l / 2.0 + margin + pitch * n as f64;
        b.add(format!("slat{n}"), slat_shape, axis_box(Vec3::new(0.0, y, z), Vec3::new(2.0 * x, sw, st)));
    }
    for (end, (k0, k1), top) in [("head", (0usize, 1usize), hh), ("foot", (3, 2), hf)] {
        if style == Style::Wood || style == Style::Mixed {
            let bh = (top - hr) * rng.gen_range(0.4..0.6);
            let zc = top - bh / 2.0 - 0.03;
            let tb = rng.gen_range(0.016..0.03);
            b.add(format!("{end}board"), PartShape::Board, bar(posts[k0].at_z(zc), posts[k1].at_z(zc), tb, bh));
        }
        if metal_frame {
            // A top rail over the two posts with spindles down to a low rail.
            let y = posts[k0].b.y;
            let zt = top + s / 2.0 - OVERLAP;
            b.add(format!("{end}_top"), PartShape::Tube, bar(Vec3::new(-x, y, zt), Vec3::new(x, y, zt), s, s));
            let zl = hr + (top - hr) * rng.gen_range(0.2..0.4);
            b.add(format!("{end}_rail"), PartShape::Tube, bar(posts[k0].at_z(zl), posts[k1].at_z(zl), s, s));
            if style == Style::Metal {
                let lean = rng.gen_range(-0.25..0.25f64);
                for (n, f) in [-0.5f64, 0.0, 0.5].into_iter().enumerate() {
                    let xa = f * x;
                    let xb = (xa + lean * (top - zl)).clamp(-0.9 * x, 0.9 * x);
                    b.add(format!("{end}_spindle{n}"), PartShape::Tube, bar(Vec3::new(xa, y, zl), Vec3::new(xb, y, top), s, s));
                }
            }
        }
    }
}

fn cabinet(b: &mut Builder, style: Style, rng: &mut impl Rng) {
    let [w, d, h] = unit_dims(rng, [(0.6, 1.2), (0.35, 0.55), (0.7, 1.8)]);
    let wood = style != Style::Metal;
    let (board, t) = if wood {
        (PartShape::Board, rng.gen_range(0.016..0.03))
    } else {
        (PartShape::Sheet, rng.gen_range(0.004..0.01))
    };
    let metal_legs = style != Style::Wood;
    let p = rng.gen_range(0.06..0.15) * h;
    let hi = h - p;
    let zc = p + hi / 2.0;
    b.add("side0", board, axis_box(Vec3::new(-w / 2.0 + t / 2.0, 0.0, zc), Vec3::new(t, d, hi)));
    b.add("side1", board, axis_box(Vec3::new(w / 2.0 - t / 2.0, 0.0, zc), Vec3::new(t, d, hi)));
    let iw = w - 2.0 * t + 2.0 * OVERLAP;
    let id = d - t;
    let yc = -t / 2.0;
    b.add("top", board, axis_box(Vec3::new(0.0, yc, h - t / 2.0), Vec3::new(iw, id, t)));
    b.add("bottom", board, axis_box(Vec3::new(0.0, yc, p + t / 2.0), Vec3::new(iw, id, t)));
    b.add("back", board, axis_box(Vec3::new(0.0, d / 2.0 - t / 2.0, zc), Vec3::new(iw, t, hi - 2.0 * t + 2.0 * OVERLAP)));
    let shelves = rng.gen_range(0..=3);
    for n in 0..shelves {
        let z = p + hi * (n + 1) as f64 / (shelves + 1) as f64;
        b.add(format!("shelf{n}"), board, axis_box(Vec3::new(0.0, yc, z), Vec3::new(iw, id, t)));
    }
    let doors = rng.gen_range(1..=2);
    let dw = w / doors as f64;
    let y_door = -d / 2.0 - t / 2.0 + OVERLAP;
    for n in 0..doors {
        let xc = -w / 2.0 + dw * (n as f64 + 0.5);
        b.add(format!("door{n}"), board, axis_box(Vec3::new(xc, y_door, zc), Vec3::new(dw - 0.004, t, hi)));
        if metal_legs {
            let r = rng.gen_range(0.005..0.009);
            let hx = if n == 0 { xc + dw / 2.0 - 0.08 } else { xc - dw / 2.0 + 0.08 };
            let c = Vec3::new(hx, -d / 2.0 - t + 2.0 * OVERLAP, zc);
            let pts = ellipse_points(c, Vec3::z(), -Vec3::y(), rng.gen_range(0.06..0.1), 0.04, 0.0, PI, 16);
            b.add(format!("handle{n}"), PartShape::Arc, swept_bar(&pts, r));
        }
    }
    let (leg_shape, s, splay) = if metal_legs {
        let a = rng.gen_range(5.0f64..30.0).to_radians();
        (PartShape::Tube, rng.gen_range(0.006..0.01), Some((a, a)))
    } else {
        (PartShape::Rod, rng.gen_range(0.03..0.045), None)
    };
    // Legs sit under the bottom panel, clear of the sides.
    let m = 2.0 * (t + 0.02);
    legs(b, rng, w - m, d - m, p, s, leg_shape, splay);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exemplar_db::{build_database, MaterialPair};
    use crate::preprocess::AnalysisParams;

    #[test]
    fn category_mix_uses_ceil() {
        let c = GeneratorConfig::scaled([83, 32, 19, 18], 0.2);
        assert_eq!([c.chairs, c.tables, c.beds, c.cabinets], [17, 7, 4, 4]);
        let one = GeneratorConfig::scaled([5, 5, 5, 5], 0.2);
        assert_eq!(one.total(), 4);
    }

    #[test]
    fn rulebook_stays_in_category() {
        use PartShape::*;
        let all = [Rod, Board, Tube, Arc, Sheet];
        for a in all {
            for b in all {
                let kind = rulebook(a, b);
                assert_eq!(kind, rulebook(b, a));
                let cat = crate::fabrication::JointCategory::of(a.material(), b.material()).unwrap();
                assert_eq!(kind.category(), cat, "{a:?} {b:?}");
            }
        }
        assert_eq!(rulebook(Tube, Arc), JointKind::Weld);
    }

    #[test]
    fn deterministic_and_closed() {
        let cfg = GeneratorConfig::scaled([2, 2, 2, 2], 1.0);
        let a = generate_synthetic_database(&cfg, 7);
        let b = generate_synthetic_database(&cfg, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        for tm in &a {
            for p in &tm.model.parts {
                assert!(p.mesh.is_closed_manifold(), "{} {}", tm.name, p.name);
                assert!(p.mesh.signed_volume() > 0.0, "{} {}", tm.name, p.name);
            }
        }
    }

    #[test]
    fn every_detected_contact_is_tagged_and_wood_is_square() {
        let cfg = GeneratorConfig::scaled([3, 2, 1, 1], 1.0);
        let models = generate_synthetic_database(&cfg, 3);
        let params = AnalysisParams { samples_per_part: 400, ..Default::default() };
        let db = build_database(&models, &params).unwrap();
        assert!(db.contacts.iter().all(|c| c.joint_type.is_some()));
        let wood = db.histogram(MaterialPair::WoodWood).unwrap();
        let f = wood.frequencies();
        assert!(f[17] >= 0.8, "{f:?}");
    }
}
