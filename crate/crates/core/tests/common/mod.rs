#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::Rotation3;
use reform_core::fabrication::{JointAssignment, JointCategory, JointKind, JointType};
use reform_core::geometry::Vec3;
use reform_core::part_analysis::OrientedBox;

pub fn aabox(center: Vec3, half: [f64; 3]) -> OrientedBox {
    OrientedBox {
        center,
        axes: [Vec3::x(), Vec3::y(), Vec3::z()],
        half_extents: half,
    }
}

pub fn rotated_box(center: Vec3, rot: &Rotation3<f64>, half: [f64; 3]) -> OrientedBox {
    let m = rot.matrix();
    OrientedBox {
        center,
        axes: [m.column(0).into(), m.column(1).into(), m.column(2).into()],
        half_extents: half,
    }
}

pub fn assignment(i: usize, j: usize, kind: JointKind, tenon: Option<usize>, contact: Vec3) -> JointAssignment {
    let category = kind.category();
    JointAssignment {
        i,
        j,
        joint: JointType {
            category,
            kind,
            ambiguous: false,
            candidates: vec![kind],
        },
        tenon_part: tenon,
        mortise_part: tenon.map(|t| if t == i { j } else { i }),
        log_potential: None,
        contact_point: contact,
    }
}

pub struct JointFixture {
    pub name: &'static str,
    pub boxes: BTreeMap<usize, OrientedBox>,
    pub joints: Vec<JointAssignment>,
}

/// Mortise-tenon and lap fixtures on box proxies, in normalized units.
pub fn joint_fixtures() -> Vec<JointFixture> {
    let overlap = 0.002;
    let mut out = Vec::new();

    // Vertical rod (0) into a horizontal board (1) resting on it.
    let rod = aabox(Vec3::new(0.0, 0.0, 0.2), [0.02, 0.02, 0.2]);
    let board = aabox(Vec3::new(0.0, 0.0, 0.4 + 0.015 - overlap), [0.3, 0.2, 0.015]);
    out.push(JointFixture {
        name: "rod-into-board",
        boxes: BTreeMap::from([(0, rod.canonical()), (1, board.canonical())]),
        joints: vec![assignment(0, 1, JointKind::MortiseTenon, Some(0), Vec3::new(0.0, 0.0, 0.4))],
    });

    // Apron (1) between two legs (0, 2).
    let leg_a = aabox(Vec3::new(-0.2, 0.0, 0.25), [0.02, 0.02, 0.25]);
    let leg_b = aabox(Vec3::new(0.2, 0.0, 0.25), [0.02, 0.02, 0.25]);
    let apron = aabox(Vec3::new(0.0, 0.0, 0.45), [0.18 + overlap, 0.01, 0.03]);
    out.push(JointFixture {
        name: "apron-between-legs",
        boxes: BTreeMap::from([(0, leg_a.canonical()), (1, apron.canonical()), (2, leg_b.canonical())]),
        joints: vec![
            assignment(0, 1, JointKind::MortiseTenon, Some(1), Vec3::new(-0.18, 0.0, 0.45)),
            assignment(1, 2, JointKind::MortiseTenon, Some(1), Vec3::new(0.18, 0.0, 0.45)),
        ],
    });

    // Tilted rod meeting a thick block.
    let rot = Rotation3::from_euler_angles(0.0, 0.25, 0.1);
    let axis = rot * Vec3::z();
    let block = aabox(Vec3::new(0.0, 0.0, 0.5), [0.2, 0.2, 0.05]);
    let end = Vec3::new(0.0, 0.0, 0.45 + 0.004);
    let tilted = rotated_box(end - axis * 0.2, &rot, [0.012, 0.015, 0.2]);
    out.push(JointFixture {
        name: "tilted-rod-into-block",
        boxes: BTreeMap::from([(0, tilted.canonical()), (1, block.canonical())]),
        joints: vec![assignment(0, 1, JointKind::MortiseTenon, Some(0), end)],
    });

    // Two stacked boards overlapping at their ends.
    let a = aabox(Vec3::new(-0.2, 0.0, 0.0), [0.25, 0.1, 0.01]);
    let b = aabox(Vec3::new(0.2, 0.0, 0.02 - overlap), [0.25, 0.1, 0.01]);
    out.push(JointFixture {
        name: "lap-boards",
        boxes: BTreeMap::from([(0, a.canonical()), (1, b.canonical())]),
        joints: vec![assignment(0, 1, JointKind::Lap, None, Vec3::new(0.0, 0.0, 0.01))],
    });
    out
}

pub fn category_of(kind: JointKind) -> JointCategory {
    kind.category()
}
