//! `telehaptic` command line.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use crate::bench::{run_bench, scripted_kinds, summarize, to_csv};
use crate::log::TrialLog;
use crate::policy::{FeedbackCondition, OperatorKind};
use crate::replay::replay;
use crate::scenario::ScenarioSpec;
use crate::serve::{spawn, ServeOptions};
use crate::trial::run_trial;

#[derive(Debug, Parser)]
#[command(
    name = "telehaptic",
    version,
    about = "Telehaptic pipette dosing trials and live server"
)]
pub struct Cli {
    /// Handle-to-robot workspace scale, overriding the scenario.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=5))]
    pub scale: Option<u8>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scripted trial and write its log.
    Run {
        /// Scenario TOML; the built-in default when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// v, vf, ve, vfe, or oracle.
        #[arg(long, default_value = "vfe")]
        condition: OperatorKind,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// JSON Lines log destination.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run every feedback condition over many seeds; CSV on stdout.
    Bench {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Trials per condition.
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// First seed; trials use consecutive seeds from here.
        #[arg(long, default_value_t = 0)]
        seeds: u64,
        /// Also run the oracle operator.
        #[arg(long)]
        oracle: bool,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-execute a trial log and check its final state and metrics.
    Replay {
        #[arg(long)]
        log: PathBuf,
        /// Require the log to match this scenario.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Live operator mode for the browser console.
    Serve {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Slave link port (default: TELEHAPTIC_PORT or 7420).
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value_t = telehaptic_protocol::gateway::DEFAULT_UI_PORT)]
        ui_port: u16,
        /// Pace the simulation to the wall clock.
        #[arg(long)]
        realtime: bool,
        /// Stop after this many simulated seconds.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_spec(path: Option<&PathBuf>, scale: Option<u8>) -> Result<ScenarioSpec> {
    let mut spec = match path {
        Some(p) => ScenarioSpec::load(p)?,
        None => ScenarioSpec::default(),
    };
    if let Some(s) = scale {
        spec.scale_factor = s;
        spec.validate()?;
    }
    Ok(spec)
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Run {
            scenario,
            condition,
            seed,
            log,
        } => {
            let spec = load_spec(scenario.as_ref(), cli.scale)?;
            let seed = seed.unwrap_or(spec.seed);
            let run = run_trial(&spec, *condition, seed)?;
            if let Some(path) = log {
                let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
                run.log.write_jsonl(BufWriter::new(f))?;
            }
            println!("{}", serde_json::to_string(&run.metrics)?);
        }
        Command::Bench {
            scenario,
            trials,
            seeds,
            oracle,
            out,
        } => {
            if *trials == 0 {
                bail!("--trials must be at least 1");
            }
            let spec = load_spec(scenario.as_ref(), cli.scale)?;
            let mut kinds = scripted_kinds();
            if *oracle {
                kinds.push(OperatorKind::Oracle);
            }
            let results = run_bench(&spec, &kinds, *seeds, *trials)?;
            let summaries: Vec<_> = results.iter().map(|(k, m)| summarize(*k, m)).collect();
            let csv = to_csv(&summaries);
            match out {
                Some(p) => std::fs::write(p, &csv).with_context(|| format!("writing {}", p.display()))?,
                None => {
                    let mut o = std::io::stdout().lock();
                    o.write_all(csv.as_bytes())?;
                    o.flush()?;
                }
            }
            eprint!("{}", bench_summary(&summaries));
        }
        Command::Replay { log, scenario } => {
            let spec = match scenario {
                Some(p) => Some(load_spec(Some(p), cli.scale)?),
                None => None,
            };
            let f = File::open(log).with_context(|| format!("opening {}", log.display()))?;
            let trial = TrialLog::read_jsonl(BufReader::new(f))?;
            let out = replay(&trial, spec.as_ref())?;
            println!(
                "replay ok: {} commands, final state {}",
                out.commands_applied, out.metrics.final_digest
            );
            println!("{}", serde_json::to_string(&out.metrics)?);
        }
        Command::Serve {
            scenario,
            port,
            ui_port,
            realtime,
            duration,
            seed,
        } => {
            let spec = load_spec(scenario.as_ref(), cli.scale)?;
            let opts = ServeOptions {
                port: port.unwrap_or_else(telehaptic_protocol::slave_port_from_env),
                ui_port: *ui_port,
                realtime: *realtime,
                duration_s: *duration,
                seed: *seed,
                ..ServeOptions::default()
            };
            let handle = spawn(&spec, opts)?;
            eprintln!("slave link on {}", handle.slave_addr);
            eprintln!("console gateway on ws://{}", handle.ui_addr);
            let end = handle.join()?;
            eprintln!("stopped at {:.3} s simulated", end as f64 * 1e-6);
        }
    }
    Ok(())
}

fn bench_summary(rows: &[crate::bench::ConditionSummary]) -> String {
    let get = |c: FeedbackCondition| rows.iter().find(|r| r.condition == OperatorKind::Scripted(c));
    let mut s = String::new();
    for r in rows {
        s.push_str(&format!(
            "{:>6}: error {:.2}% (sd {:.2}%), time {:.1} s (sd {:.1} s), {}/{} completed\n",
            r.condition.name(),
            100.0 * r.mean_error,
            100.0 * r.sd_error,
            r.mean_time_s,
            r.sd_time_s,
            r.completed,
            r.trials
        ));
    }
    if let (Some(v), Some(vf), Some(ve), Some(vfe)) = (
        get(FeedbackCondition::V),
        get(FeedbackCondition::VF),
        get(FeedbackCondition::VE),
        get(FeedbackCondition::VFE),
    ) {
        let cut = |x: f64| 100.0 * (1.0 - x / v.mean_error);
        s.push_str(&format!(
            "error vs v: vf -{:.0}%, ve -{:.0}%, vfe -{:.0}%; vfe time vs v -{:.0}%\n",
            cut(vf.mean_error),
            cut(ve.mean_error),
            cut(vfe.mean_error),
            100.0 * (1.0 - vfe.mean_time_s / v.mean_time_s)
        ));
    }
    s
}
