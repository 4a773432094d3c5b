// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! `hcsim`: compile workloads, run kernel programs and reproduce the
//! heterogeneity and roofline experiments.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use hcsim_core::compiler::{compile, CompileOptions, Mode, PlacementPolicy, TileShape, WorkloadGraph};
use hcsim_core::config::ClusterConfig;
use hcsim_core::control::KernelProgram;
use hcsim_core::experiments::{self, ExperimentError};
use hcsim_core::sim::{run, SimError, SimOptions, DEFAULT_MAX_CYCLES};

/// Exit status for a simulation that deadlocked.
const EXIT_DEADLOCK: u8 = 3;

#[derive(Parser)]
#[command(name = "hcsim", version, about = "Cycle-level simulator of a hybrid-coupled accelerator cluster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a workload into one .kprog per control core plus memory images.
    Compile(CompileArgs),
    /// Simulate kernel programs and write metrics and memory dumps.
    Run(RunArgs),
    /// Run the four-configuration heterogeneity experiment on the toy network.
    Hetero(HeteroArgs),
    /// Sweep tiled matmuls over tile sizes and emit roofline data.
    Roofline(RooflineArgs),
}

#[derive(Args)]
struct CompileArgs {
    /// Workload JSON; the bundled toy network when omitted.
    #[arg(long)]
    workload: Option<PathBuf>,
    /// Bundled config name or path to a config JSON.
    #[arg(long, default_value = "fig6d")]
    config: String,
    #[arg(long, default_value = "sequential")]
    mode: Mode,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    /// Offset added to every random tensor seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Place everything on the control cores.
    #[arg(long)]
    scalar_only: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "fig6d")]
    config: String,
    /// Kernel programs; the file stem names the core when a file has no header.
    #[arg(required = true)]
    kprogs: Vec<PathBuf>,
    /// Initial external memory image.
    #[arg(long)]
    ext_image: Option<PathBuf>,
    /// Initial scratchpad contents, copied to address 0.
    #[arg(long)]
    spm_image: Option<PathBuf>,
    /// Write a `cycle,unit,event,detail` trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Include every bank access in the trace.
    #[arg(long)]
    trace_accesses: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_CYCLES)]
    max_cycles: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct HeteroArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RooflineArgs {
    #[arg(long, default_value = "fig6c")]
    config: String,
    /// Comma-separated `MxKxN` tile list; the default sweep when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_tile)]
    tiles: Vec<TileShape>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_tile(s: &str) -> Result<TileShape, String> {
    let v: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{s}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        &[m, k, n] if m > 0 && k > 0 && n > 0 && m % 8 == 0 && k % 8 == 0 && n % 8 == 0 => Ok(TileShape::new(m, k, n)),
        _ => Err(format!("`{s}`: expected MxKxN with positive multiples of 8")),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_compile(a: CompileArgs) -> Result<()> {
    let cfg = ClusterConfig::resolve(&a.config)?;
    let mut graph = match &a.workload {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            WorkloadGraph::from_json(&text, p.parent())?
        }
        None => WorkloadGraph::toy(),
    };
    graph.reseed(a.seed);
    let policy = if a.scalar_only { PlacementPolicy::ScalarOnly } else { PlacementPolicy::Fastest };
    let compiled = compile(&graph, &cfg, &CompileOptions { mode: a.mode, batch: a.batch, policy })?;
    fs::create_dir_all(&a.out)?;
    for p in &compiled.programs {
        write(&a.out.join(format!("{}.kprog", p.core)), p.to_text())?;
    }
    write(&a.out.join("ext.bin"), compiled.ext_image()?)?;
    write(&a.out.join("allocation.txt"), compiled.allocation.report())?;
    write(&a.out.join("config.json"), cfg.to_json())?;
    println!(
        "compiled `{}` for {} ({}, batch {}): {} programs, {} B of scratchpad, config {}",
        graph.name,
        cfg.name,
        a.mode,
        a.batch,
        compiled.programs.len(),
        compiled.allocation.spm_used(),
        cfg.hash_hex()
    );
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let cfg = ClusterConfig::resolve(&a.config)?;
    let mut programs = Vec::new();
    for p in &a.kprogs {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("core0");
        programs.push(KernelProgram::parse(&text, stem).with_context(|| format!("parsing {}", p.display()))?);
    }
    let ext = match &a.ext_image {
        Some(p) => fs::read(p).with_context(|| format!("reading {}", p.display()))?,
        None => Vec::new(),
    };
    let spm = match &a.spm_image {
        Some(p) => Some(fs::read(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let opts = SimOptions { max_cycles: a.max_cycles, trace: a.trace.is_some(), trace_accesses: a.trace_accesses };
    let out = run(&cfg, &programs, ext, spm.as_deref(), &opts)?;
    fs::create_dir_all(&a.out)?;
    write(&a.out.join("metrics.csv"), out.metrics.csv())?;
    write(&a.out.join("metrics.json"), out.metrics.to_json())?;
    write(&a.out.join("ext_final.bin"), &out.ext)?;
    write(&a.out.join("spm_final.bin"), &out.spm)?;
    if let Some(t) = &a.trace {
        write(t, out.trace_csv())?;
    }
    let m = &out.metrics;
    println!("{} cycles, {} bank conflicts, {} external bytes", m.total_cycles, m.bank_conflicts, m.ext_bytes);
    println!("{:<10} {:<8} {:>10} {:>10} {:>7}", "device", "kind", "busy", "compute", "util");
    for d in &m.devices {
        println!("{:<10} {:<8} {:>10} {:>10} {:>6.1}%", d.id, d.kind, d.busy_cycles, d.compute_cycles, 100.0 * d.utilization);
    }
    Ok(())
}

fn cmd_hetero(a: HeteroArgs) -> Result<()> {
    let report = experiments::hetero(a.seed)?;
    fs::create_dir_all(&a.out)?;
    let table = report.to_table();
    write(&a.out.join("hetero.txt"), &table)?;
    write(&a.out.join("hetero.csv"), report.to_csv())?;
    write(&a.out.join("hetero.json"), report.to_json())?;
    print!("{table}");
    Ok(())
}

fn cmd_roofline(a: RooflineArgs) -> Result<()> {
    let tiles = if a.tiles.is_empty() { experiments::default_tiles() } else { a.tiles };
    let report = experiments::roofline(&a.config, &tiles, a.seed)?;
    fs::create_dir_all(&a.out)?;
    write(&a.out.join("roofline.csv"), report.to_csv())?;
    write(&a.out.join("roofline.dat"), report.to_gnuplot())?;
    println!(
        "config {} peak {:.0} ops/cycle, {:.0} B/cycle, ridge {:.1} ops/B",
        report.config,
        report.peak_ops_per_cycle,
        report.bandwidth_bytes_per_cycle,
        report.ridge()
    );
    println!("{:>14} {:>9} {:>10} {:>10} {:>10} {:>7}", "tile", "intensity", "cycles", "attained", "bound", "util");
    for r in &report.rows {
        let p = &r.point;
        println!(
            "{:>14} {:>9.2} {:>10} {:>10.1} {:>10.1} {:>6.1}%",
            format!("{}x{}x{}", r.tile.0, r.tile.1, r.tile.2),
            p.intensity,
            r.cycles,
            p.attained_ops_per_cycle,
            p.bound_ops_per_cycle,
            100.0 * p.utilization_of_bound
        );
    }
    Ok(())
}

fn is_deadlock(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        matches!(c.downcast_ref::<SimError>(), Some(SimError::Deadlock { .. }))
            || matches!(c.downcast_ref::<ExperimentError>(), Some(ExperimentError::Sim(SimError::Deadlock { .. })))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compile(a) => cmd_compile(a),
        Command::Run(a) => cmd_run(a),
        Command::Hetero(a) => cmd_hetero(a),
        Command::Roofline(a) => cmd_roofline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_deadlock(&e) {
                ExitCode::from(EXIT_DEADLOCK)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tile_arguments() {
        assert_eq!(parse_tile("16x32x8").unwrap(), TileShape::new(16, 32, 8));
        assert!(parse_tile("12x8x8").is_err());
        assert!(parse_tile("8x8").is_err());
    }
}
