//! Asset lookup. `MANIKIN_ASSETS` overrides the directory shipped with the
//! crate; skeletons missing from both fall back to the embedded copies.

use std::path::{Path, PathBuf};

use manikin_core::dynamics::WorldDef;
use manikin_core::kinematics::Skeleton;

use crate::error::{Error, Result};

pub const ASSETS_ENV: &str = "MANIKIN_ASSETS";

pub fn builtin_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/assets"))
}

pub fn assets_dir() -> PathBuf {
    match std::env::var_os(ASSETS_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => builtin_dir(),
    }
}

/// Absolute paths are kept; relative ones are looked up under `base` and then
/// under the asset directory.
pub fn resolve(name: &str, base: Option<&Path>) -> Option<PathBuf> {
    let p = Path::new(name);
    if p.is_absolute() {
        return p.exists().then(|| p.to_path_buf());
    }
    base.into_iter()
        .map(|b| b.join(p))
        .chain(std::iter::once(assets_dir().join(p)))
        .find(|c| c.exists())
}

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn embedded_skeleton(name: &str) -> Option<&'static str> {
    let file = Path::new(name).file_name()?.to_str()?;
    manikin_core::assets::skeleton_source(file)
}

pub fn skeleton_exists(name: &str, base: Option<&Path>) -> bool {
    resolve(name, base).is_some() || embedded_skeleton(name).is_some()
}

pub fn load_skeleton(name: &str, base: Option<&Path>) -> Result<Skeleton> {
    let text = match resolve(name, base) {
        Some(path) => read(&path)?,
        None => embedded_skeleton(name)
            .ok_or_else(|| Error::Config(format!("skeleton file `{name}` not found")))?
            .to_string(),
    };
    Ok(Skeleton::from_json(&text)?)
}

pub fn load_world(name: &str, base: Option<&Path>) -> Result<WorldDef> {
    let path = resolve(name, base)
        .ok_or_else(|| Error::Config(format!("world file `{name}` not found")))?;
    Ok(WorldDef::from_json(&read(&path)?)?)
}
