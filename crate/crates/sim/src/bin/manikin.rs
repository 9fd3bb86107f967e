use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use manikin_sim::config::{config_base, ScenarioConfig};
use manikin_sim::metrics::{write_csv, write_jsonl, RunSummary};
use manikin_sim::runner::{replay, RunOptions, RunOutput};
use manikin_sim::server::{ServeOptions, StreamServer};
use manikin_sim::session::{LoggedCommand, Session};
use manikin_sim::{builtin, protocol, Error, Result};

#[derive(Parser)]
#[command(
    name = "manikin",
    version,
    about = "Balanced humanoid manikin simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a builtin scenario or a scenario config file.
    Run {
        scenario: String,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, value_enum)]
        balance: Option<Switch>,
        /// Per-frame metrics, one JSON object per line.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Stream frames to viewers on this port while running in real time.
        #[arg(long)]
        serve: Option<u16>,
        /// With --serve, step as fast as possible instead of in real time.
        #[arg(long, requires = "serve")]
        no_realtime: bool,
        /// With --serve, keep streaming after the scenario duration until interrupted.
        #[arg(long, requires = "serve")]
        linger: bool,
        /// Commands received while serving, one JSON object per line.
        #[arg(long, requires = "serve")]
        record_commands: Option<PathBuf>,
        /// Replay a recorded command log headlessly.
        #[arg(long, conflicts_with = "serve")]
        replay_commands: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        dump_lcp_on_nonconverge: Option<PathBuf>,
    },
    /// List the builtin scenarios.
    ListScenarios,
    /// Check a scenario config file without running it.
    Validate { config: PathBuf },
}

fn load(scenario: &str) -> Result<(ScenarioConfig, Option<PathBuf>)> {
    let path = Path::new(scenario);
    if path.extension().is_some_and(|e| e == "json") || path.exists() {
        Ok((ScenarioConfig::load(path)?, Some(config_base(path))))
    } else {
        Ok((builtin::builtin(scenario)?, None))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let f = File::create(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(BufWriter::new(f))
}

fn read_log(path: &Path) -> Result<Vec<LoggedCommand>> {
    let text = manikin_sim::assets::read(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn run(
    scenario: &str,
    dt: Option<f64>,
    duration: Option<f64>,
    balance: Option<Switch>,
    metrics: Option<PathBuf>,
    csv: Option<PathBuf>,
    serve: Option<(u16, bool, bool, Option<PathBuf>)>,
    replay_commands: Option<PathBuf>,
    dump: Option<PathBuf>,
) -> Result<ExitCode> {
    let (mut cfg, base) = load(scenario)?;
    if let Some(dt) = dt {
        cfg.dt = dt;
    }
    if let Some(d) = duration {
        cfg.duration = d;
    }
    if let Some(b) = balance {
        cfg.balance.enabled = matches!(b, Switch::On);
    }
    let metrics = metrics.or_else(|| cfg.outputs.metrics.as_ref().map(PathBuf::from));
    let csv = csv.or_else(|| cfg.outputs.csv.as_ref().map(PathBuf::from));
    let resolved = cfg.resolve(base.as_deref())?;

    let output = match serve {
        Some((port, realtime, linger, record)) => {
            let frames = resolved.frames as u64;
            let limits = resolved.limits;
            let mut session = Session::new(resolved)?;
            if let Some(dir) = dump {
                session.dump_nonconverged_to(dir);
            }
            let server = StreamServer::bind(port, &protocol::scene(&session), 8)?;
            eprintln!("serving ws://{}", server.local_addr());
            let options = ServeOptions {
                realtime,
                max_steps: Some(frames),
                ..ServeOptions::default()
            };
            let out = server.run(&mut session, &options)?;
            let summary = RunSummary::from_frames(&cfg.name, &out, &limits);
            if let Some(path) = record {
                let mut w = create(&path)?;
                for c in session.log() {
                    serde_json::to_writer(&mut w, c)?;
                    w.write_all(b"\n")?;
                }
                w.flush()?;
            }
            if linger {
                let options = ServeOptions {
                    realtime: true,
                    ..ServeOptions::default()
                };
                server.run(&mut session, &options)?;
            }
            RunOutput {
                frames: out,
                summary,
                log: session.log().to_vec(),
            }
        }
        None => {
            let log = match replay_commands {
                Some(p) => read_log(&p)?,
                None => Vec::new(),
            };
            replay(resolved, &log, &RunOptions { dump_lcp_dir: dump })?
        }
    };

    if let Some(path) = metrics {
        let mut w = create(&path)?;
        write_jsonl(&output.frames, &mut w)?;
        w.flush()?;
    }
    if let Some(path) = csv {
        write_csv(&output.frames, create(&path)?)?;
    }
    println!("{}", serde_json::to_string_pretty(&output.summary)?);
    Ok(ExitCode::from(output.exit_code() as u8))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run {
            scenario,
            dt,
            duration,
            balance,
            metrics,
            csv,
            serve,
            no_realtime,
            linger,
            record_commands,
            replay_commands,
            dump_lcp_on_nonconverge,
        } => run(
            &scenario,
            dt,
            duration,
            balance,
            metrics,
            csv,
            serve.map(|p| (p, !no_realtime, linger, record_commands)),
            replay_commands,
            dump_lcp_on_nonconverge,
        ),
        Cmd::ListScenarios => {
            for n in builtin::names() {
                println!("{n}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Validate { config } => ScenarioConfig::load(&config)
            .and_then(|c| c.validate(Some(&config_base(&config))))
            .map(|_| {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
