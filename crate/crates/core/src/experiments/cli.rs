//! The `sepnet` command line.
//!
//! Every subcommand reads a manifest, writes `summary.json`, the manifest
//! it ran and one or more CSV tables into the output directory, and prints
//! a short report. Exit codes: 0 success, 1 failed check or internal
//! error, 2 invalid input, 3 solver did not converge.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use super::manifest::{pair_network, Manifest, PatchBase, Scenario, SeparateNetwork};
use super::patch::{plan_lossless_patch, run_lossless_patch, PatchParams};
use super::scenarios::{PointToPoint, SlepianWolfPair};
use super::separated::{run_separated, SeparatedReport};
use super::stack::{stack_check, StackCheckRow};
use super::sweeps::{run_awgn_sweep, run_emulation_probe, AWGN_MAX_ITER, AWGN_TOL};
use crate::channels::{AwgnSpec, Dmc};
use crate::coding_theorems::{ba_capacity, ba_capacity_cost, ba_rate_distortion, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::info::{mutual_information, Pmf};
use crate::netsim::{stack, ChannelModel, MessageCode, NetworkSpec, UncodedCode};

/// Fallback output directory when neither the flag nor the manifest names one.
pub const OUTPUT_ENV: &str = "SEPNET_OUTPUT_DIR";
const DEFAULT_OUTPUT: &str = "sepnet-out";

#[derive(Parser, Debug)]
#[command(name = "sepnet", version, about = "Separation experiments on networks of noisy links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Scenario manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory; defaults to the manifest's, then $SEPNET_OUTPUT_DIR, then ./sepnet-out.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Capacity and optimal input of a channel.
    Capacity(RunArgs),
    /// Rate-distortion function on a grid of distortions.
    Rd(RunArgs),
    /// Emulation fidelity over rate and blocklength grids.
    Emulate(RunArgs),
    /// Separated source and channel coding end to end.
    Separate(RunArgs),
    /// Make a small-distortion code lossless with extra sessions.
    Patch(RunArgs),
    /// Capacities of discretized Gaussian links.
    AwgnSweep(RunArgs),
    /// Stacked run against its unraveled replay.
    StackCheck(RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Capacity(_) => "capacity",
            Command::Rd(_) => "rd",
            Command::Emulate(_) => "emulate",
            Command::Separate(_) => "separate",
            Command::Patch(_) => "patch",
            Command::AwgnSweep(_) => "awgn-sweep",
            Command::StackCheck(_) => "stack-check",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Capacity(a)
            | Command::Rd(a)
            | Command::Emulate(a)
            | Command::Separate(a)
            | Command::Patch(a)
            | Command::AwgnSweep(a)
            | Command::StackCheck(a) => a,
        }
    }
}

/// What a run produced, before anything touches the disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub summary: Value,
    /// File name and CSV bytes.
    pub tables: Vec<(String, Vec<u8>)>,
    /// False when a check the scenario performs failed.
    pub passed: bool,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Convergence { .. } => 3,
        Error::InvalidArgument(_) | Error::ResourceLimit(_) | Error::PlanInfeasible(_) | Error::Manifest(_) => 2,
        Error::ContractViolation(_) | Error::Io(_) => 1,
    }
}

fn table<R: Serialize>(rows: &[R]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn stats(xs: &[f64]) -> Value {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let se = (var / n).sqrt();
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    json!({ "mean": mean, "median": median, "std_error": se, "ci95": [mean - 1.96 * se, mean + 1.96 * se] })
}

/// Runs the scenario of `manifest` under `command`.
pub fn execute(command: &str, manifest: &Manifest) -> Result<Outcome> {
    if manifest.scenario.command() != command {
        return Err(Error::Manifest(format!(
            "manifest holds a {} scenario, not {command}",
            manifest.scenario.command()
        )));
    }
    let seed = manifest.seed;
    match &manifest.scenario {
        Scenario::Capacity { channel } => {
            let (dmc, cost) = channel.dmc()?;
            let r = match &cost {
                Some((c, budget)) => ba_capacity_cost(&dmc, c, *budget, AWGN_TOL, AWGN_MAX_ITER)?,
                None => ba_capacity(&dmc, DEFAULT_TOL, DEFAULT_MAX_ITER)?,
            };
            #[derive(Serialize)]
            struct Row {
                input: usize,
                probability: f64,
            }
            let rows: Vec<Row> = r
                .optimal_input
                .probs()
                .iter()
                .enumerate()
                .map(|(input, &probability)| Row { input, probability })
                .collect();
            Ok(Outcome {
                lines: vec![format!("capacity {:.6} bits/use (gap {:.1e}, {} iterations)", r.capacity, r.gap, r.iterations)],
                summary: json!({
                    "command": command, "seed": seed, "capacity": r.capacity,
                    "gap": r.gap, "iterations": r.iterations, "power_budget": cost.map(|c| c.1),
                }),
                tables: vec![("capacity.csv".into(), table(&rows)?)],
                passed: true,
            })
        }
        Scenario::Rd {
            source,
            measure,
            distortions,
        } => {
            let p = Pmf::new(source.clone())?;
            let d = measure.measure()?;
            #[derive(Serialize)]
            struct Row {
                distortion: f64,
                rate: f64,
                achieved: f64,
            }
            let mut rows = Vec::new();
            let mut lines = Vec::new();
            for &target in distortions {
                let r = ba_rate_distortion(&p, &d, target, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
                lines.push(format!("R({target}) = {:.6}", r.rate));
                rows.push(Row {
                    distortion: target,
                    rate: r.rate,
                    achieved: r.distortion_achieved,
                });
            }
            Ok(Outcome {
                lines,
                summary: json!({
                    "command": command, "seed": seed,
                    "rates": rows.iter().map(|r| r.rate).collect::<Vec<_>>(),
                }),
                tables: vec![("rd.csv".into(), table(&rows)?)],
                passed: true,
            })
        }
        Scenario::Emulate {
            channel,
            input,
            margins,
            lengths,
            epsilon,
        } => {
            let (dmc, _) = channel.dmc()?;
            let p_x = Pmf::new(input.clone())?;
            let info = mutual_information(&dmc.joint(&p_x)?);
            let rates: Vec<f64> = margins.iter().map(|m| info + m).collect();
            let probe = run_emulation_probe(&dmc, &p_x, &rates, lengths, *epsilon, manifest.trials()?, seed)?;
            #[derive(Serialize)]
            struct Row {
                rate: f64,
                margin: f64,
                n: usize,
                mean_tv: f64,
                median_tv: f64,
                mean_conditional_tv: f64,
                median_conditional_tv: f64,
                fallback_rate: f64,
                trials: usize,
            }
            let rows: Vec<Row> = probe
                .iter()
                .map(|r| Row {
                    rate: r.rate,
                    margin: r.margin,
                    n: r.n,
                    mean_tv: r.stats.mean_tv,
                    median_tv: r.stats.median_tv,
                    mean_conditional_tv: r.stats.mean_conditional_tv,
                    median_conditional_tv: r.stats.median_conditional_tv,
                    fallback_rate: r.stats.fallback_rate,
                    trials: r.stats.trials,
                })
                .collect();
            let lines = rows
                .iter()
                .map(|r| format!("R - I = {:+.3}  N = {:5}  median TV {:.4}  fallback {:.3}", r.margin, r.n, r.median_tv, r.fallback_rate))
                .collect();
            Ok(Outcome {
                lines,
                summary: json!({ "command": command, "seed": seed, "mutual_information": info, "cells": rows.len() }),
                tables: vec![("emulate.csv".into(), table(&rows)?)],
                passed: true,
            })
        }
        Scenario::Separate { network } => {
            let trials = manifest.trials()?;
            let report = match network {
                SeparateNetwork::PointToPoint {
                    crossover,
                    len,
                    pipe_capacity,
                    rate,
                    layers,
                    repeats,
                    error_trials,
                } => {
                    let (net, code, plan) = PointToPoint {
                        crossover: *crossover,
                        len: *len,
                        pipe_capacity: *pipe_capacity,
                        rate: *rate,
                        layers: *layers,
                        repeats: *repeats,
                        seed,
                        error_trials: *error_trials,
                    }
                    .build()?;
                    separate_outcome(command, seed, &net, &code, &plan, trials)?
                }
                SeparateNetwork::SlepianWolf { rho, len, capacities } => {
                    let (net, code, plan) = SlepianWolfPair {
                        rho: *rho,
                        len: *len,
                        capacities: *capacities,
                        seed,
                    }
                    .build()?;
                    separate_outcome(command, seed, &net, &code, &plan, trials)?
                }
            };
            Ok(report)
        }
        Scenario::Patch {
            base,
            sessions,
            pilot_sessions,
            margin,
            inner_bits,
            delta,
            candidates,
        } => {
            let net = base.network()?;
            let code = UncodedCode::identity(&net, base.len())?;
            let params = PatchParams {
                demands: (0..net.demands.len()).collect(),
                sessions: *sessions,
                pilot_sessions: *pilot_sessions,
                margin: *margin,
                inner_bits: *inner_bits,
                delta: *delta,
                candidates: *candidates,
                seed,
            };
            let plan = plan_lossless_patch(&net, &code, &params)?;
            let report = run_lossless_patch(&net, &code, &plan, manifest.trials()?)?;
            let pairs: Vec<Value> = plan
                .pairs
                .iter()
                .map(|p| {
                    json!({
                        "pair": format!("{}->{}", p.from, p.to), "epsilon": p.epsilon,
                        "r0_estimate": p.r0_estimate, "r0_spread": p.r0_spread, "r0_bound": p.r0_bound,
                        "bin_bits": p.bin_bits, "inner_bits": p.inner_bits, "extra_sessions": p.extra_sessions,
                        "c0_bound": p.c0_bound, "c0_direct": p.c0_direct, "c0": p.c0,
                    })
                })
                .collect();
            let base_name = match base {
                PatchBase::UncodedLink { .. } => "uncoded_link",
                PatchBase::UncodedPair { .. } => "uncoded_pair",
            };
            #[derive(Serialize)]
            struct Row {
                scenario: &'static str,
                seed: u64,
                trial: u64,
                block_error: bool,
                wrong_blocks: usize,
                inner_errors: usize,
            }
            let rows: Vec<Row> = report
                .trials
                .iter()
                .map(|t| Row {
                    scenario: base_name,
                    seed,
                    trial: t.trial,
                    block_error: t.block_error,
                    wrong_blocks: t.wrong_blocks,
                    inner_errors: t.inner_errors,
                })
                .collect();
            let lines = vec![
                format!("block error rate {:.4} over {} trials", report.block_error_rate, report.trials.len()),
                format!("overhead N'/N {:.3}, planned R0/C0 {:.3}", report.overhead, report.planned_ratio),
                format!(
                    "kappa {:.4} -> kappa' {:.4}, sandwich {}",
                    report.kappa,
                    report.kappa_prime,
                    if report.sandwich_holds { "holds" } else { "FAILS" }
                ),
            ];
            Ok(Outcome {
                lines,
                summary: json!({
                    "command": command, "seed": seed, "base": base_name, "sessions": plan.sessions,
                    "extra_sessions": plan.extra_sessions(), "pairs": pairs,
                    "block_error_rate": report.block_error_rate, "overhead": report.overhead,
                    "planned_ratio": report.planned_ratio, "kappa": report.kappa,
                    "kappa_prime": report.kappa_prime, "sandwich_holds": report.sandwich_holds,
                }),
                tables: vec![("trials.csv".into(), table(&rows)?)],
                passed: report.sandwich_holds,
            })
        }
        Scenario::AwgnSweep { power, noise, grid } => {
            let spec = AwgnSpec::new(*power, *noise)?;
            let cells = run_awgn_sweep(&spec, grid)?;
            let lines = cells
                .iter()
                .map(|c| format!("C({}, {}) = {:.6}  (ceiling {:.6})", c.j, c.k, c.capacity, c.ceiling))
                .collect();
            Ok(Outcome {
                lines,
                summary: json!({
                    "command": command, "seed": seed, "power": power, "noise": noise,
                    "ceiling": cells[0].ceiling,
                    "max_capacity": cells.iter().map(|c| c.capacity).fold(f64::NEG_INFINITY, f64::max),
                }),
                tables: vec![("awgn.csv".into(), table(&cells)?)],
                passed: true,
            })
        }
        Scenario::StackCheck {
            rho,
            crossovers,
            len,
            layers,
        } => {
            let bsc = |p: f64| -> Result<ChannelModel> { Ok(ChannelModel::Dmc { matrix: Dmc::bsc(p)? }) };
            let net = pair_network(*rho, (bsc(crossovers.0)?, bsc(crossovers.1)?))?;
            let code = stack(UncodedCode::identity(&net, *len)?, *layers)?;
            let rows = stack_check(&net, &code, seed, manifest.trials()?)?;
            let exact = rows.iter().all(StackCheckRow::exact);
            let verdict = if exact { "EXACT-MATCH" } else { "MISMATCH" };
            Ok(Outcome {
                lines: vec![format!("{verdict} over {} trials of {} layers", rows.len(), layers)],
                summary: json!({
                    "command": command, "seed": seed, "layers": layers, "trials": rows.len(),
                    "verdict": verdict,
                    "mismatched_trials": rows.iter().filter(|r| !r.exact()).map(|r| r.trial).collect::<Vec<_>>(),
                }),
                tables: vec![("stack_check.csv".into(), table(&rows)?)],
                passed: exact,
            })
        }
    }
}

fn separate_outcome<C: MessageCode>(
    command: &str,
    seed: u64,
    net: &NetworkSpec,
    code: &C,
    plan: &super::separated::SeparationPlan,
    trials: usize,
) -> Result<Outcome> {
    let report: SeparatedReport = run_separated(net, code, plan, trials)?;
    #[derive(Serialize)]
    struct Row {
        seed: u64,
        trial: u64,
        pair: String,
        distortion: f64,
        bit_pipe_distortion: f64,
        slot_errors: usize,
        block_errors: usize,
    }
    let mut rows = Vec::new();
    for t in &report.trials {
        for (k, d) in net.demands.iter().enumerate() {
            rows.push(Row {
                seed,
                trial: t.trial,
                pair: format!("{}->{}", d.from, d.to),
                distortion: t.realized[k],
                bit_pipe_distortion: t.bit_pipe[k],
                slot_errors: t.slot_errors,
                block_errors: t.block_errors[k],
            });
        }
    }
    let mut lines = Vec::new();
    let mut demands = Vec::new();
    for (k, d) in net.demands.iter().enumerate() {
        let realized: Vec<f64> = report.trials.iter().map(|t| t.realized[k]).collect();
        let block_error_rate =
            report.trials.iter().filter(|t| t.block_errors[k] > 0).count() as f64 / report.trials.len() as f64;
        lines.push(format!(
            "{}->{}: distortion {:.4} (bit pipe {:.4}, union bound {:.4}), block error rate {:.4}",
            d.from, d.to, report.mean_realized[k], report.mean_bit_pipe[k], report.union_bound[k], block_error_rate
        ));
        demands.push(json!({
            "pair": format!("{}->{}", d.from, d.to), "distortion": stats(&realized),
            "bit_pipe_distortion": report.mean_bit_pipe[k], "union_bound": report.union_bound[k],
            "block_error_rate": block_error_rate,
        }));
    }
    let any_error = report.trials.iter().filter(|t| t.block_errors.iter().any(|&e| e > 0)).count() as f64
        / report.trials.len() as f64;
    lines.push(format!("some demand in error: {any_error:.4}"));
    Ok(Outcome {
        lines,
        summary: json!({
            "command": command, "seed": seed, "trials": report.trials.len(), "demands": demands,
            "block_error_rate_any": any_error,
            "p_max": report.p_max, "kappa_bit_pipe": report.kappa_bit_pipe, "kappa_noisy": report.kappa_noisy,
            "edges": report.edges,
        }),
        tables: vec![("trials.csv".into(), table(&rows)?)],
        passed: true,
    })
}

/// Writes the manifest, `summary.json` and the tables under `dir`.
pub fn write_outcome(dir: &Path, manifest: &Manifest, outcome: &Outcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("manifest.toml"), manifest.to_toml()?)?;
    let mut summary = serde_json::to_string_pretty(&outcome.summary).map_err(|e| Error::Io(e.into()))?;
    summary.push('\n');
    std::fs::write(dir.join("summary.json"), summary)?;
    for (name, bytes) in &outcome.tables {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

fn output_dir(flag: Option<&Path>, manifest: &Manifest) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| manifest.output.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
}

/// Parses `args` (program name first), runs and returns the exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    cli_run(args, &mut std::io::stdout(), &mut std::io::stderr())
}

/// `cli_main` with the report and diagnostics sent to the given writers.
pub fn cli_run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return 2;
            }
            let _ = write!(out, "{}", e.render());
            return 0;
        }
    };
    let name = cli.command.name();
    let args = cli.command.args();
    let run = || -> Result<(Outcome, PathBuf)> {
        let manifest = Manifest::load(&args.manifest)?;
        let outcome = execute(name, &manifest)?;
        let dir = output_dir(args.out.as_deref(), &manifest);
        write_outcome(&dir, &manifest, &outcome)?;
        Ok((outcome, dir))
    };
    match run() {
        Ok((outcome, dir)) => {
            for l in &outcome.lines {
                let _ = writeln!(out, "{l}");
            }
            let _ = writeln!(out, "results in {}", dir.display());
            if outcome.passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            let _ = writeln!(err, "sepnet {name}: {e}");
            exit_code(&e)
        }
    }
}
