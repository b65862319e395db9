use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ReformError, Result};
use crate::geometry::Material;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointCategory {
    WoodWood,
    WoodMetal,
    MetalMetal,
}

impl JointCategory {
    pub fn of(a: Material, b: Material) -> Result<JointCategory> {
        use Material::*;
        match (a, b) {
            (Wood, Wood) => Ok(JointCategory::WoodWood),
            (Metal, Metal) => Ok(JointCategory::MetalMetal),
            (Wood, Metal) | (Metal, Wood) => Ok(JointCategory::WoodMetal),
            (x, y) => Err(ReformError::UnresolvedMaterial(if x.is_fabricable() { y } else { x }.to_string())),
        }
    }

    pub fn kinds(self) -> &'static [JointKind] {
        use JointKind::*;
        match self {
            JointCategory::WoodWood => &[MortiseTenon, Lap, Dowel],
            JointCategory::WoodMetal => &[Screw, Bracket],
            JointCategory::MetalMetal => &[Weld, Bolt],
        }
    }
}

impl fmt::Display for JointCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JointCategory::WoodWood => "wood-wood",
            JointCategory::WoodMetal => "wood-metal",
            JointCategory::MetalMetal => "metal-metal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointKind {
    MortiseTenon,
    Lap,
    Dowel,
    Screw,
    Bracket,
    Weld,
    Bolt,
}

impl JointKind {
    pub const ALL: [JointKind; 7] = [
        JointKind::MortiseTenon,
        JointKind::Lap,
        JointKind::Dowel,
        JointKind::Screw,
        JointKind::Bracket,
        JointKind::Weld,
        JointKind::Bolt,
    ];

    pub fn category(self) -> JointCategory {
        use JointKind::*;
        match self {
            MortiseTenon | Lap | Dowel => JointCategory::WoodWood,
            Screw | Bracket => JointCategory::WoodMetal,
            Weld | Bolt => JointCategory::MetalMetal,
        }
    }

    pub fn parse(s: &str) -> Option<JointKind> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        JointKind::ALL.into_iter().find(|k| k.to_string() == norm)
    }
}

impl fmt::Display for JointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JointKind::MortiseTenon => "mortise-tenon",
            JointKind::Lap => "lap",
            JointKind::Dowel => "dowel",
            JointKind::Screw => "screw",
            JointKind::Bracket => "bracket",
            JointKind::Weld => "weld",
            JointKind::Bolt => "bolt",
        })
    }
}
