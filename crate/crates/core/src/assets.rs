//! Manikin skeletons shipped with the crate.

use crate::kinematics::Skeleton;
use crate::Result;

pub const DEFAULT_SKELETON: &str = include_str!("../assets/manikin_default.json");
pub const GIANT_SKELETON: &str = include_str!("../assets/manikin_giant.json");
pub const DWARF_SKELETON: &str = include_str!("../assets/manikin_dwarf.json");

/// Embedded skeleton source by file name.
pub fn skeleton_source(file_name: &str) -> Option<&'static str> {
    match file_name {
        "manikin_default.json" => Some(DEFAULT_SKELETON),
        "manikin_giant.json" => Some(GIANT_SKELETON),
        "manikin_dwarf.json" => Some(DWARF_SKELETON),
        _ => None,
    }
}

/// 1.75 m, 75 kg, 16 bodies.
pub fn default_manikin() -> Result<Skeleton> {
    Skeleton::from_json(DEFAULT_SKELETON)
}

/// Default manikin scaled by 2.
pub fn giant_manikin() -> Result<Skeleton> {
    Skeleton::from_json(GIANT_SKELETON)
}

/// Default manikin scaled by 0.5.
pub fn dwarf_manikin() -> Result<Skeleton> {
    Skeleton::from_json(DWARF_SKELETON)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_skeletons_load() {
        let d = default_manikin().unwrap();
        assert_eq!(d.num_bodies(), 16);
        assert!((d.total_mass() - 75.0).abs() < 1e-9);
        let g = giant_manikin().unwrap();
        assert!((g.total_mass() - 600.0).abs() < 1e-6);
        let w = dwarf_manikin().unwrap();
        assert!((w.total_mass() - 75.0 / 8.0).abs() < 1e-9);
    }
}
