// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! The two flagship experiments: heterogeneous acceleration of the toy
//! network and the tiled-matmul roofline sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::compiler::{compile, roofline_run, CompileError, CompileOptions, Mode, PlacementPolicy, TileShape, WorkloadGraph};
use crate::config::{ClusterConfig, ConfigError};
use crate::sim::{run, summarize, RooflinePoint, SimError, SimOptions};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}: simulated results differ from the reference: {1}")]
    Mismatch(String, String),
    #[error("{0}")]
    Invalid(String),
}

/// One configuration of the heterogeneity study.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeteroSetup {
    pub label: &'static str,
    pub config: &'static str,
    pub mode: Mode,
    pub batch: usize,
}

/// The four rows: all scalar, gemm, gemm plus max pool, and pipelined.
pub fn hetero_setups() -> [HeteroSetup; 4] {
    [
        HeteroSetup { label: "scalar only", config: "fig6b", mode: Mode::Sequential, batch: 1 },
        HeteroSetup { label: "+gemm", config: "fig6c", mode: Mode::Sequential, batch: 1 },
        HeteroSetup { label: "+gemm +maxpool", config: "fig6d", mode: Mode::Sequential, batch: 8 },
        HeteroSetup { label: "+gemm +maxpool pipelined", config: "fig6d", mode: Mode::Pipelined, batch: 8 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeteroRow {
    pub label: String,
    pub config: String,
    pub config_hash: String,
    pub mode: String,
    pub batch: usize,
    pub total_cycles: u64,
    pub inferences_per_mcycle: f64,
    /// Cycles attributed to each layer (`transfer` for loads and stores).
    pub layer_cycles: BTreeMap<String, u64>,
    pub device_utilization: BTreeMap<String, f64>,
    /// Throughput relative to the previous row.
    pub speedup: Option<f64>,
}

impl HeteroRow {
    pub fn layer_share(&self, layer: &str) -> f64 {
        let total: u64 = self.layer_cycles.values().sum();
        if total == 0 {
            0.0
        } else {
            self.layer_cycles.get(layer).copied().unwrap_or(0) as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeteroReport {
    pub workload: String,
    pub seed: u64,
    pub rows: Vec<HeteroRow>,
}

/// Layer a task label belongs to: the node id up to the first dot, or
/// `transfer` for loads and stores.
pub fn layer_of(label: &str) -> String {
    if label.starts_with("load:") || label.starts_with("store:") {
        "transfer".into()
    } else {
        label.split('.').next().unwrap_or(label).to_string()
    }
}

/// Compiles and runs `graph` for one setup, checks the outputs and
/// attributes each step's duration (barrier release to barrier release)
/// to the layers of its tasks, split evenly when a step holds several.
pub fn hetero_row(graph: &WorkloadGraph, setup: &HeteroSetup) -> Result<HeteroRow, ExperimentError> {
    let cfg = ClusterConfig::resolve(setup.config)?;
    let opts = CompileOptions { mode: setup.mode, batch: setup.batch, policy: PlacementPolicy::Fastest };
    let compiled = compile(graph, &cfg, &opts)?;
    let out = run(&cfg, &compiled.programs, compiled.ext_image()?, None, &SimOptions::default())?;
    compiled.check_outputs(&out.ext).map_err(|e| ExperimentError::Mismatch(setup.label.into(), e))?;
    let m = &out.metrics;
    let mut layer_cycles: BTreeMap<String, u64> = BTreeMap::new();
    let mut prev = 0;
    for ((_, labels), b) in compiled.barrier_labels().iter().zip(&m.barriers) {
        let delta = b.cycle.saturating_sub(prev);
        prev = b.cycle;
        let mut layers: Vec<String> = labels.iter().map(|l| layer_of(l)).collect();
        layers.dedup();
        let n = layers.len().max(1) as u64;
        for (i, l) in layers.iter().enumerate() {
            // Distribute the remainder to the first layers so shares sum exactly.
            let part = delta / n + u64::from((i as u64) < delta % n);
            *layer_cycles.entry(l.clone()).or_default() += part;
        }
    }
    let mut device_utilization: BTreeMap<String, f64> =
        m.devices.iter().map(|d| (d.id.clone(), d.utilization)).collect();
    for d in &m.dmas {
        let u = if m.total_cycles == 0 { 0.0 } else { d.busy_cycles as f64 / m.total_cycles as f64 };
        device_utilization.insert(d.id.clone(), u);
    }
    let ipm = if m.total_cycles == 0 { 0.0 } else { setup.batch as f64 * 1e6 / m.total_cycles as f64 };
    Ok(HeteroRow {
        label: setup.label.into(),
        config: setup.config.into(),
        config_hash: cfg.hash_hex(),
        mode: setup.mode.to_string(),
        batch: setup.batch,
        total_cycles: m.total_cycles,
        inferences_per_mcycle: ipm,
        layer_cycles,
        device_utilization,
        speedup: None,
    })
}

/// Runs the four setups on the bundled toy network reseeded by `seed`.
pub fn hetero(seed: u64) -> Result<HeteroReport, ExperimentError> {
    let mut graph = WorkloadGraph::toy();
    graph.reseed(seed);
    let mut rows: Vec<HeteroRow> = hetero_setups().iter().map(|s| hetero_row(&graph, s)).collect::<Result<_, _>>()?;
    for i in 1..rows.len() {
        let prev = rows[i - 1].inferences_per_mcycle;
        rows[i].speedup = (prev > 0.0).then(|| rows[i].inferences_per_mcycle / prev);
    }
    Ok(HeteroReport { workload: graph.name.clone(), seed, rows })
}

impl HeteroReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Layers in first-seen order.
    pub fn layers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            for l in r.layer_cycles.keys() {
                if !out.contains(l) {
                    out.push(l.clone());
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let layers = self.layers();
        let mut s = String::from("label,config,config_hash,mode,batch,total_cycles,inferences_per_mcycle,speedup");
        for l in &layers {
            let _ = write!(s, ",share_{l}");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(
                s,
                "{},{},{},{},{},{},{:.3},{}",
                r.label,
                r.config,
                r.config_hash,
                r.mode,
                r.batch,
                r.total_cycles,
                r.inferences_per_mcycle,
                r.speedup.map_or(String::new(), |x| format!("{x:.3}"))
            );
            for l in &layers {
                let _ = write!(s, ",{:.4}", r.layer_share(l));
            }
            s.push('\n');
        }
        s
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let layers = self.layers();
        let mut s = format!("workload {} seed {}\n", self.workload, self.seed);
        let _ = write!(s, "{:<26} {:>7} {:>11} {:>10} {:>9}", "setup", "config", "cycles", "inf/Mcyc", "speedup");
        for l in &layers {
            let _ = write!(s, " {:>9}", l);
        }
        s.push('\n');
        for r in &self.rows {
            let sp = r.speedup.map_or("-".to_string(), |x| format!("{x:.2}x"));
            let _ = write!(
                s,
                "{:<26} {:>7} {:>11} {:>10.2} {:>9}",
                r.label, r.config, r.total_cycles, r.inferences_per_mcycle, sp
            );
            for l in &layers {
                let _ = write!(s, " {:>8.1}%", 100.0 * r.layer_share(l));
            }
            s.push('\n');
        }
        s.push_str("utilization:\n");
        for r in &self.rows {
            let u: Vec<String> = r.device_utilization.iter().map(|(d, u)| format!("{d}={:.1}%", 100.0 * u)).collect();
            let _ = writeln!(s, "  {:<26} {}", r.label, u.join(" "));
        }
        s
    }
}

/// Tile shapes of the default sweep, from bandwidth bound to compute bound.
pub fn default_tiles() -> Vec<TileShape> {
    [(8, 8, 8), (16, 16, 16), (16, 32, 16), (32, 32, 32), (32, 64, 32), (64, 64, 64), (64, 128, 64), (64, 256, 64)]
        .into_iter()
        .map(|(m, k, n)| TileShape::new(m, k, n))
        .collect()
}

/// Pipeline steps simulated per sweep point.
pub const ROOFLINE_STEPS: usize = 48;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RooflineRow {
    pub tile: (usize, usize, usize),
    pub group: usize,
    pub tasks: usize,
    pub cycles: u64,
    pub point: RooflinePoint,
    /// Attained ops over peak ops.
    pub compute_utilization: f64,
    /// Attained external bytes per cycle over the channel bandwidth.
    pub bandwidth_utilization: f64,
    /// Gemm cycles with datapath progress over busy cycles.
    pub pe_utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RooflineReport {
    pub config: String,
    pub config_hash: String,
    pub seed: u64,
    pub peak_ops_per_cycle: f64,
    pub bandwidth_bytes_per_cycle: f64,
    pub rows: Vec<RooflineRow>,
}

/// Simulates one tile shape.
pub fn roofline_point(cfg: &ClusterConfig, tile: TileShape, steps: usize, seed: u64) -> Result<RooflineRow, ExperimentError> {
    let r = roofline_run(tile, steps, cfg, seed)?;
    let out = run(cfg, &r.programs, r.ext.clone(), None, &SimOptions::default())?;
    if let Some(i) = r.first_mismatch(&out.ext) {
        return Err(ExperimentError::Mismatch(format!("tile {}x{}x{}", tile.mt, tile.kt, tile.nt), format!("task {i}")));
    }
    let m = &out.metrics;
    let point = summarize(m, cfg, r.ops(), r.ext_bytes());
    let bw = cfg.external_channel.bandwidth_bytes_per_cycle as f64;
    let gemm = m.devices.iter().find(|d| d.kind == "gemm");
    Ok(RooflineRow {
        tile: (tile.mt, tile.kt, tile.nt),
        group: r.group,
        tasks: r.tasks(),
        cycles: m.total_cycles,
        compute_utilization: point.attained_ops_per_cycle / point.peak_ops_per_cycle,
        bandwidth_utilization: r.ext_bytes() as f64 / m.total_cycles.max(1) as f64 / bw,
        pe_utilization: gemm.map_or(0.0, |g| g.compute_cycles as f64 / g.busy_cycles.max(1) as f64),
        point,
    })
}

/// Runs every tile in parallel, one simulator per point.
pub fn roofline(config: &str, tiles: &[TileShape], seed: u64) -> Result<RooflineReport, ExperimentError> {
    let cfg = ClusterConfig::resolve(config)?;
    if !cfg.has_gemm() {
        return Err(ExperimentError::Invalid(format!("config `{config}` has no gemm accelerator")));
    }
    let rows: Vec<RooflineRow> = tiles
        .par_iter()
        .map(|&t| roofline_point(&cfg, t, ROOFLINE_STEPS, seed))
        .collect::<Result<_, _>>()?;
    Ok(RooflineReport {
        config: config.into(),
        config_hash: cfg.hash_hex(),
        seed,
        peak_ops_per_cycle: cfg.peak_ops_per_cycle(),
        bandwidth_bytes_per_cycle: cfg.external_channel.bandwidth_bytes_per_cycle as f64,
        rows,
    })
}

impl RooflineReport {
    pub fn ridge(&self) -> f64 {
        self.peak_ops_per_cycle / self.bandwidth_bytes_per_cycle
    }

    /// Point with the largest tile volume.
    pub fn largest(&self) -> Option<&RooflineRow> {
        self.rows.iter().max_by_key(|r| r.tile.0 * r.tile.1 * r.tile.2)
    }

    /// Point with the smallest tile volume.
    pub fn smallest(&self) -> Option<&RooflineRow> {
        self.rows.iter().min_by_key(|r| r.tile.0 * r.tile.1 * r.tile.2)
    }

    /// Points whose intensity is within 25% of the ridge.
    pub fn near_ridge(&self) -> Vec<&RooflineRow> {
        let ridge = self.ridge();
        self.rows.iter().filter(|r| (r.point.intensity - ridge).abs() <= 0.25 * ridge).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# config {} hash {} seed {}\n", self.config, self.config_hash, self.seed);
        s.push_str("mt,kt,nt,group,tasks,cycles,intensity,attained_ops_per_cycle,bound_ops_per_cycle,utilization_of_bound,compute_utilization,bandwidth_utilization,pe_utilization\n");
        for r in &self.rows {
            let p = &r.point;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{:.4},{:.3},{:.3},{:.4},{:.4},{:.4},{:.4}",
                r.tile.0,
                r.tile.1,
                r.tile.2,
                r.group,
                r.tasks,
                r.cycles,
                p.intensity,
                p.attained_ops_per_cycle,
                p.bound_ops_per_cycle,
                p.utilization_of_bound,
                r.compute_utilization,
                r.bandwidth_utilization,
                r.pe_utilization
            );
        }
        s
    }

    /// Gnuplot data: the measured points, then after a blank pair of lines
    /// the two asymptotes (bandwidth slope up to the ridge, flat compute roof).
    pub fn to_gnuplot(&self) -> String {
        let mut s = String::from("# intensity attained bound\n");
        for r in &self.rows {
            let p = &r.point;
            let _ = writeln!(s, "{:.6} {:.6} {:.6}", p.intensity, p.attained_ops_per_cycle, p.bound_ops_per_cycle);
        }
        s.push_str("\n\n# asymptotes: intensity bound\n");
        let ridge = self.ridge();
        for x in [ridge / 16.0, ridge, ridge * 16.0] {
            let _ = writeln!(s, "{:.6} {:.6}", x, (x * self.bandwidth_bytes_per_cycle).min(self.peak_ops_per_cycle));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_names() {
        assert_eq!(layer_of("conv.im2col"), "conv");
        assert_eq!(layer_of("load:input"), "transfer");
        assert_eq!(layer_of("fc"), "fc");
    }

    #[test]
    fn asymptotes_meet_at_ridge() {
        let r = RooflineReport {
            config: "x".into(),
            config_hash: String::new(),
            seed: 0,
            peak_ops_per_cycle: 1024.0,
            bandwidth_bytes_per_cycle: 64.0,
            rows: Vec::new(),
        };
        assert_eq!(r.ridge(), 16.0);
        assert!(r.to_gnuplot().contains("16.000000 1024.000000"));
    }
}
