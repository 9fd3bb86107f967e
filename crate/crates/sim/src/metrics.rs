//! Per-frame metrics records, run summaries and their file formats.

use std::collections::BTreeMap;
use std::io::Write;

use manikin_core::kinematics::{FrameCache, Shape, Skeleton};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: u64,
    pub t: f64,
    /// `δ / d²` after the step; absent without support.
    pub delta_normalized: Option<f64>,
    pub balance_enabled: bool,
    pub balance_active: bool,
    pub balance_multiplier: f64,
    pub balance_torque_norm: f64,
    pub com: [f64; 3],
    /// Distance between each enabled target's guided desired position and
    /// its body point.
    pub tracking_error: BTreeMap<String, f64>,
    pub guide_angle_deg: Option<f64>,
    /// Lowest point of tagged bodies and top of tagged obstacles.
    pub heights: BTreeMap<String, f64>,
    /// Summed normal contact force per `body/obstacle` pair.
    pub contact_forces: BTreeMap<String, f64>,
    pub max_penetration: f64,
    pub limit_violation: f64,
    pub solver_iterations: usize,
    pub solver_residual: f64,
    pub converged: bool,
    pub num_rows: usize,
    /// Kept out of the metrics file so that runs are byte-reproducible.
    #[serde(skip)]
    pub wall_us: f64,
}

/// Lowest and highest point of a body's shapes.
pub fn vertical_extent(skeleton: &Skeleton, cache: &FrameCache, body: usize) -> (f64, f64) {
    let pose = &cache.body_pose[body];
    let world = |p: &[f64; 3]| pose.transform_point(&Vector3::from(*p).into()).coords;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for shape in &skeleton.bodies[body].shapes {
        match shape {
            Shape::Sphere { center, radius } => {
                let z = world(center).z;
                lo = lo.min(z - radius);
                hi = hi.max(z + radius);
            }
            Shape::Capsule { a, b, radius } => {
                for z in [world(a).z, world(b).z] {
                    lo = lo.min(z - radius);
                    hi = hi.max(z + radius);
                }
            }
            Shape::Box {
                center,
                half_extents,
            } => {
                for k in 0..8 {
                    let s = |bit: usize, i: usize| {
                        if k & bit == 0 {
                            -half_extents[i]
                        } else {
                            half_extents[i]
                        }
                    };
                    let local = [
                        center[0] + s(1, 0),
                        center[1] + s(2, 1),
                        center[2] + s(4, 2),
                    ];
                    let z = world(&local).z;
                    lo = lo.min(z);
                    hi = hi.max(z);
                }
            }
        }
    }
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub p95: f64,
    pub count: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            mean: values.iter().sum::<f64>() / values.len() as f64,
            p95: percentile(&sorted, 0.95),
            count: values.len(),
        })
    }
}

/// Nearest-rank percentile of sorted data.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub frames: usize,
    pub duration: f64,
    pub delta_normalized: Option<Stats>,
    /// Smallest `δ/d²` over frames whose solver converged.
    pub min_delta_converged: Option<f64>,
    pub tracking_error: BTreeMap<String, Stats>,
    pub guide_angle_deg: Option<Stats>,
    pub heights: BTreeMap<String, Stats>,
    pub contact_forces: BTreeMap<String, Stats>,
    /// Frames in which any contact force was positive, per pair.
    pub contact_frames: BTreeMap<String, usize>,
    pub max_penetration: f64,
    pub penetration_events: usize,
    pub max_limit_violation: f64,
    pub limit_events: usize,
    pub nonconverged_frames: usize,
    pub solver_iterations: Option<Stats>,
    pub step_time_median_us: f64,
    pub step_time_p99_us: f64,
    /// Any penetration or joint-limit violation beyond the hard limits.
    pub hard_violation: bool,
}

impl RunSummary {
    pub fn from_frames(
        scenario: &str,
        frames: &[FrameMetrics],
        limits: &crate::config::HardLimits,
    ) -> Self {
        fn by_key(
            frames: &[FrameMetrics],
            get: impl Fn(&FrameMetrics) -> &BTreeMap<String, f64>,
        ) -> BTreeMap<String, Stats> {
            let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for f in frames {
                for (k, v) in get(f) {
                    acc.entry(k.clone()).or_default().push(*v);
                }
            }
            acc.into_iter()
                .filter_map(|(k, v)| Stats::of(&v).map(|s| (k, s)))
                .collect()
        }
        let deltas: Vec<f64> = frames.iter().filter_map(|f| f.delta_normalized).collect();
        let min_delta_converged = frames
            .iter()
            .filter(|f| f.converged)
            .filter_map(|f| f.delta_normalized)
            .reduce(f64::min);
        let angles: Vec<f64> = frames.iter().filter_map(|f| f.guide_angle_deg).collect();
        let mut contact_frames: BTreeMap<String, usize> = BTreeMap::new();
        for f in frames {
            for (k, v) in &f.contact_forces {
                if *v > 0.0 {
                    *contact_frames.entry(k.clone()).or_default() += 1;
                }
            }
        }
        let iters: Vec<f64> = frames.iter().map(|f| f.solver_iterations as f64).collect();
        let mut wall: Vec<f64> = frames.iter().map(|f| f.wall_us).collect();
        wall.sort_by(f64::total_cmp);
        let max_penetration = frames.iter().map(|f| f.max_penetration).fold(0.0, f64::max);
        let max_limit_violation = frames.iter().map(|f| f.limit_violation).fold(0.0, f64::max);
        let penetration_events = frames
            .iter()
            .filter(|f| f.max_penetration > limits.max_penetration)
            .count();
        let limit_events = frames
            .iter()
            .filter(|f| f.limit_violation > limits.max_limit_violation)
            .count();
        Self {
            scenario: scenario.to_string(),
            frames: frames.len(),
            duration: frames.last().map_or(0.0, |f| f.t),
            delta_normalized: Stats::of(&deltas),
            min_delta_converged,
            tracking_error: by_key(frames, |f| &f.tracking_error),
            guide_angle_deg: Stats::of(&angles),
            heights: by_key(frames, |f| &f.heights),
            contact_forces: by_key(frames, |f| &f.contact_forces),
            contact_frames,
            max_penetration,
            penetration_events,
            max_limit_violation,
            limit_events,
            nonconverged_frames: frames.iter().filter(|f| !f.converged).count(),
            solver_iterations: Stats::of(&iters),
            step_time_median_us: if wall.is_empty() {
                0.0
            } else {
                percentile(&wall, 0.5)
            },
            step_time_p99_us: if wall.is_empty() {
                0.0
            } else {
                percentile(&wall, 0.99)
            },
            hard_violation: penetration_events > 0 || limit_events > 0,
        }
    }
}

pub fn write_jsonl(frames: &[FrameMetrics], out: &mut impl Write) -> Result<()> {
    for f in frames {
        serde_json::to_writer(&mut *out, f)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Flat table with one column per scalar and per map key seen in any frame.
pub fn write_csv(frames: &[FrameMetrics], out: impl Write) -> Result<()> {
    let mut keys: [std::collections::BTreeSet<String>; 3] = Default::default();
    for f in frames {
        keys[0].extend(f.tracking_error.keys().cloned());
        keys[1].extend(f.heights.keys().cloned());
        keys[2].extend(f.contact_forces.keys().cloned());
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "frame",
        "t",
        "delta_normalized",
        "balance_enabled",
        "balance_active",
        "balance_multiplier",
        "balance_torque_norm",
        "com_x",
        "com_y",
        "com_z",
        "guide_angle_deg",
        "max_penetration",
        "limit_violation",
        "solver_iterations",
        "solver_residual",
        "converged",
        "num_rows",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for (prefix, set) in ["tracking_error", "height", "contact_force"]
        .iter()
        .zip(&keys)
    {
        header.extend(set.iter().map(|k| format!("{prefix}:{k}")));
    }
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for f in frames {
        let mut row = vec![
            f.frame.to_string(),
            f.t.to_string(),
            opt(f.delta_normalized),
            f.balance_enabled.to_string(),
            f.balance_active.to_string(),
            f.balance_multiplier.to_string(),
            f.balance_torque_norm.to_string(),
            f.com[0].to_string(),
            f.com[1].to_string(),
            f.com[2].to_string(),
            opt(f.guide_angle_deg),
            f.max_penetration.to_string(),
            f.limit_violation.to_string(),
            f.solver_iterations.to_string(),
            f.solver_residual.to_string(),
            f.converged.to_string(),
            f.num_rows.to_string(),
        ];
        for (map, set) in [&f.tracking_error, &f.heights, &f.contact_forces]
            .iter()
            .zip(&keys)
        {
            row.extend(set.iter().map(|k| opt(map.get(k).copied())));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
