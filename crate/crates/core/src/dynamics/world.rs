use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ground {
    pub height: f64,
    pub friction: f64,
}

/// Static axis-aligned obstacle, e.g. a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticBox {
    #[serde(default)]
    pub name: Option<String>,
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub friction: f64,
}

impl StaticBox {
    pub fn top(&self) -> f64 {
        self.max[2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldDef {
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
    pub ground: Ground,
    #[serde(default)]
    pub boxes: Vec<StaticBox>,
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}

impl Default for WorldDef {
    fn default() -> Self {
        Self {
            gravity: default_gravity(),
            ground: Ground {
                height: 0.0,
                friction: 0.8,
            },
            boxes: Vec::new(),
        }
    }
}

impl WorldDef {
    pub fn gravity(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ground.friction >= 0.0) {
            return Err(Error::InvalidWorld("ground friction must be >= 0".into()));
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if !(b.friction >= 0.0) {
                return Err(Error::InvalidWorld(format!(
                    "box {i}: friction must be >= 0"
                )));
            }
            if (0..3).any(|k| b.min[k] > b.max[k]) {
                return Err(Error::InvalidWorld(format!("box {i}: min exceeds max")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let w: WorldDef = serde_json::from_str(text)?;
        w.validate()?;
        Ok(w)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
