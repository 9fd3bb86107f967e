//! The frame loop: one owner of the simulation state, fed by queued commands.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;
use std::time::Instant;

use manikin_core::balance::{
    distance_to_limit, fit_for_support, make_balance_row, BalanceParams, SupportEllipse,
};
use manikin_core::control::{control_step, TaskTarget, VirtualGuide};
use manikin_core::dynamics::{Obstacle, SimParams, SimState, Simulator, StepReport};
use manikin_core::kinematics::{limit_coordinates, FrameCache, Skeleton};
use manikin_core::math::quat_norm;
use serde::{Deserialize, Serialize};

use crate::config::Scenario;
use crate::error::{Error, Result};
use crate::metrics::{vertical_extent, FrameMetrics};

/// Interaction applied at the next frame boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Command {
    SetTarget {
        id: String,
        pos: [f64; 3],
        #[serde(default)]
        quat: Option<[f64; 4]>,
    },
    /// `what` is `balance` or `guide:<id>`.
    Toggle {
        what: String,
        value: bool,
    },
    Pause,
    Resume,
    Reset,
}

/// A command with the number of steps taken before it was applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedCommand {
    pub step: u64,
    pub command: Command,
}

/// What one call to [`Session::advance`] produced.
#[derive(Debug, Clone)]
pub struct FrameOutcome {
    pub metrics: FrameMetrics,
    pub report: StepReport,
    pub balance_row: bool,
}

pub struct Session {
    scenario: Scenario,
    sim: Simulator,
    state: SimState,
    targets: Vec<TaskTarget>,
    /// Targets after guide projection in the most recent frame.
    guided: Vec<TaskTarget>,
    guides: Vec<VirtualGuide>,
    balance: BalanceParams,
    ellipse: Option<SupportEllipse>,
    /// Targets positioned by commands rather than by their trajectory.
    live: BTreeSet<String>,
    paused: bool,
    steps: u64,
    pending: VecDeque<Command>,
    log: Vec<LoggedCommand>,
    dump_dir: Option<PathBuf>,
    last_report: Option<StepReport>,
}

impl Session {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let params = SimParams {
            dt: scenario.dt,
            ..SimParams::default()
        };
        let sim = Simulator::new(scenario.skeleton.clone(), scenario.world.clone(), params)?;
        let ellipse = fit(&scenario.skeleton, &scenario.initial)?;
        Ok(Self {
            sim,
            state: scenario.initial.clone(),
            targets: scenario.targets.clone(),
            guided: scenario.targets.clone(),
            guides: scenario.guides.clone(),
            balance: scenario.balance,
            ellipse,
            live: BTreeSet::new(),
            paused: false,
            steps: 0,
            pending: VecDeque::new(),
            log: Vec::new(),
            dump_dir: None,
            last_report: None,
            scenario,
        })
    }

    /// Writes the constraint problem of every non-converged step to `dir`.
    pub fn dump_nonconverged_to(&mut self, dir: PathBuf) {
        self.dump_dir = Some(dir);
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.scenario.skeleton
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    /// Targets as commanded, before guide projection.
    pub fn targets(&self) -> &[TaskTarget] {
        &self.targets
    }

    /// Targets after guide projection in the most recent frame.
    pub fn guided_targets(&self) -> &[TaskTarget] {
        &self.guided
    }

    pub fn guides(&self) -> &[VirtualGuide] {
        &self.guides
    }

    pub fn balance(&self) -> &BalanceParams {
        &self.balance
    }

    pub fn ellipse(&self) -> Option<&SupportEllipse> {
        self.ellipse.as_ref()
    }

    pub fn last_report(&self) -> Option<&StepReport> {
        self.last_report.as_ref()
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn log(&self) -> &[LoggedCommand] {
        &self.log
    }

    /// `δ/d²` at the current state.
    pub fn delta_normalized(&self) -> Option<f64> {
        let e = self.ellipse.as_ref()?;
        let cache = FrameCache::new(self.skeleton(), &self.state.joint_state).ok()?;
        Some(distance_to_limit(e, &cache.center_of_mass(self.skeleton())) / (e.d * e.d))
    }

    pub fn submit(&mut self, command: Command) {
        self.pending.push_back(command);
    }

    fn apply(&mut self, command: &Command) -> Result<()> {
        match command {
            Command::SetTarget { id, pos, quat } => {
                let t = self
                    .targets
                    .iter_mut()
                    .find(|t| &t.id == id)
                    .ok_or_else(|| Error::Protocol(format!("unknown target `{id}`")))?;
                if pos.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Protocol("target position is not finite".into()));
                }
                if let Some(q) = quat {
                    if (quat_norm(*q) - 1.0).abs() > 1e-6 {
                        return Err(Error::Protocol(
                            "target quaternion is not unit length".into(),
                        ));
                    }
                    if t.orientation.is_some() {
                        t.orientation = Some(*q);
                    }
                }
                t.position = *pos;
                self.live.insert(id.clone());
            }
            Command::Toggle { what, value } => {
                if what == "balance" {
                    self.balance.enabled = *value;
                } else if let Some(id) = what.strip_prefix("guide:") {
                    let g = self
                        .guides
                        .iter_mut()
                        .find(|g| g.id == id)
                        .ok_or_else(|| Error::Protocol(format!("unknown guide `{id}`")))?;
                    g.enabled = *value;
                } else {
                    return Err(Error::Protocol(format!("cannot toggle `{what}`")));
                }
            }
            Command::Pause => self.paused = true,
            Command::Resume => self.paused = false,
            Command::Reset => {
                self.state = self.scenario.initial.clone();
                self.targets = self.scenario.targets.clone();
                self.guided = self.scenario.targets.clone();
                self.guides = self.scenario.guides.clone();
                self.balance = self.scenario.balance;
                self.ellipse = fit(&self.scenario.skeleton, &self.state)?;
                self.live.clear();
                self.paused = false;
                self.sim.reset_warm_start();
                self.last_report = None;
            }
        }
        Ok(())
    }

    /// Applies queued commands, returning the errors of rejected ones. Every
    /// command is logged, accepted or not, so that replays see the same input.
    pub fn apply_pending(&mut self) -> Vec<(Command, Error)> {
        let mut errors = Vec::new();
        while let Some(c) = self.pending.pop_front() {
            self.log.push(LoggedCommand {
                step: self.steps,
                command: c.clone(),
            });
            if let Err(e) = self.apply(&c) {
                errors.push((c, e));
            }
        }
        errors
    }

    /// One frame: commands, trajectories, control, balance row, dynamics and
    /// metrics. Returns `None` while paused.
    pub fn advance(&mut self) -> Result<Option<FrameOutcome>> {
        self.apply_pending();
        if self.paused {
            return Ok(None);
        }
        let start = Instant::now();
        let sk = &self.scenario.skeleton;
        let t = self.state.time;
        for tr in &self.scenario.trajectories {
            if self.live.contains(&tr.target_id) {
                continue;
            }
            if let Some(target) = self.targets.iter_mut().find(|x| x.id == tr.target_id) {
                let (pos, quat) = tr.sample(t);
                target.position = pos;
                if target.orientation.is_some() {
                    target.orientation = Some(quat);
                }
            }
        }

        let gravity = self.scenario.world.gravity();
        let js = &self.state.joint_state;
        let out = control_step(
            sk,
            js,
            &self.targets,
            &self.guides,
            self.scenario.posture.as_ref(),
            &gravity,
        )?;

        if let Some(e) = &self.ellipse {
            if e.anchors != self.state.anchored_bodies() {
                self.ellipse = fit(sk, &self.state)?;
            }
        }
        let row = match &self.ellipse {
            Some(e) => {
                let cache = FrameCache::new(sk, js)?;
                make_balance_row(e, sk, &self.state, &cache, self.scenario.dt, &self.balance)?
            }
            None => None,
        };
        let balance_row = row.is_some();
        let (next, report) = self.sim.step(&self.state, &out.torque_total, row)?;
        let wall_us = start.elapsed().as_secs_f64() * 1e6;

        self.state = next;
        self.guided = out.targets;
        let mut metrics = self.measure(&report, wall_us)?;
        metrics.frame = self.steps;
        self.steps += 1;

        if !report.converged {
            if let (Some(dir), Some(problem)) = (&self.dump_dir, self.sim.last_problem()) {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("lcp_{:06}.json", metrics.frame));
                std::fs::write(&path, problem.to_json()?)
                    .map_err(|source| Error::File { path, source })?;
            }
        }
        self.last_report = Some(report.clone());
        Ok(Some(FrameOutcome {
            metrics,
            report,
            balance_row,
        }))
    }

    fn measure(&self, report: &StepReport, wall_us: f64) -> Result<FrameMetrics> {
        let sc = &self.scenario;
        let sk = &sc.skeleton;
        let js = &self.state.joint_state;
        let cache = FrameCache::new(sk, js)?;
        let com = cache.center_of_mass(sk);
        let delta_normalized = self
            .ellipse
            .as_ref()
            .map(|e| distance_to_limit(e, &com) / (e.d * e.d));

        let mut tracking_error = BTreeMap::new();
        for t in self.guided.iter().filter(|t| t.enabled) {
            let err = (nalgebra::Vector3::from(t.position) - t.world_point(&cache)).norm();
            tracking_error.insert(t.id.clone(), err);
        }
        let guide_angle_deg = sc.tool.as_ref().map(|tool| {
            let body = self.guided[tool.target].body;
            let actual = cache.body_pose[body].rotation * tool.axis;
            actual
                .dot(&tool.ideal_axis)
                .clamp(-1.0, 1.0)
                .acos()
                .to_degrees()
        });
        let mut heights = BTreeMap::new();
        for (name, b) in &sc.tagged_bodies {
            heights.insert(name.clone(), vertical_extent(sk, &cache, *b).0);
        }
        for (name, top) in &sc.obstacles {
            heights.insert(name.clone(), *top);
        }
        let mut contact_forces = BTreeMap::new();
        for c in &report.contacts {
            let key = format!(
                "{}/{}",
                sk.bodies[c.body].name,
                self.obstacle_name(c.obstacle)
            );
            *contact_forces.entry(key).or_insert(0.0) += c.force;
        }
        let mut limit_violation: f64 = 0.0;
        for (i, j) in sk.joints.iter().enumerate() {
            if let Some(l) = &j.limits {
                for (k, x) in limit_coordinates(sk, js, i).iter().enumerate() {
                    limit_violation = limit_violation.max(l.lower[k] - x).max(x - l.upper[k]);
                }
            }
        }
        Ok(FrameMetrics {
            frame: 0,
            t: self.state.time,
            delta_normalized,
            balance_enabled: self.balance.enabled,
            balance_active: report.balance_multiplier.is_some_and(|z| z > 0.0),
            balance_multiplier: report.balance_multiplier.unwrap_or(0.0),
            balance_torque_norm: report.balance_torque_norm,
            com: com.into(),
            tracking_error,
            guide_angle_deg,
            heights,
            contact_forces,
            max_penetration: report.max_penetration,
            limit_violation,
            solver_iterations: report.iterations,
            solver_residual: report.residual,
            converged: report.converged,
            num_rows: report.num_rows,
            wall_us,
        })
    }

    pub fn obstacle_name(&self, obstacle: Obstacle) -> String {
        match obstacle {
            Obstacle::Ground => "ground".into(),
            Obstacle::Box(i) => self.scenario.world.boxes[i]
                .name
                .clone()
                .unwrap_or_else(|| format!("box{i}")),
            Obstacle::Body(b, _) => self.scenario.skeleton.bodies[b].name.clone(),
        }
    }
}

fn fit(skeleton: &Skeleton, state: &SimState) -> Result<Option<SupportEllipse>> {
    if state.anchored_feet.is_empty() {
        return Ok(None);
    }
    Ok(Some(fit_for_support(skeleton, state)?))
}
