//! Headless scenario runs and replays of recorded interaction.

use std::path::PathBuf;

use crate::config::Scenario;
use crate::error::Result;
use crate::metrics::{FrameMetrics, RunSummary};
use crate::session::{LoggedCommand, Session};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub dump_lcp_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub frames: Vec<FrameMetrics>,
    pub summary: RunSummary,
    pub log: Vec<LoggedCommand>,
}

impl RunOutput {
    /// Process exit status: nonzero when a hard limit was violated.
    pub fn exit_code(&self) -> i32 {
        i32::from(self.summary.hard_violation)
    }
}

pub fn run(scenario: Scenario, options: &RunOptions) -> Result<RunOutput> {
    replay(scenario, &[], options)
}

/// Runs the scenario, submitting each logged command before the step it was
/// originally applied at.
pub fn replay(
    scenario: Scenario,
    log: &[LoggedCommand],
    options: &RunOptions,
) -> Result<RunOutput> {
    let frames = scenario.frames;
    let mut session = Session::new(scenario)?;
    if let Some(dir) = &options.dump_lcp_dir {
        session.dump_nonconverged_to(dir.clone());
    }
    let mut out = Vec::with_capacity(frames);
    let mut next = 0;
    while (session.steps() as usize) < frames {
        while next < log.len() && log[next].step <= session.steps() {
            session.submit(log[next].command.clone());
            next += 1;
        }
        match session.advance()? {
            Some(f) => out.push(f.metrics),
            // Steps do not advance while paused, so every later command of
            // the log was already submitted.
            None => break,
        }
    }
    let summary =
        RunSummary::from_frames(&session.scenario().name, &out, &session.scenario().limits);
    Ok(RunOutput {
        frames: out,
        summary,
        log: session.log().to_vec(),
    })
}
