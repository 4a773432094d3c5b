// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Run metrics, trace events and roofline summaries.

use serde::Serialize;

use crate::config::ClusterConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceMetrics {
    pub id: String,
    pub kind: String,
    /// Cycles with a task running, including stalls on data.
    pub busy_cycles: u64,
    /// Cycles in which the datapath retired work.
    pub compute_cycles: u64,
    pub tasks: u64,
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortMetrics {
    pub owner: String,
    pub width_bits: usize,
    pub granted: u64,
    pub stalled: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DmaMetrics {
    pub id: String,
    pub busy_cycles: u64,
    pub bytes_moved: u64,
    pub ext_bytes: u64,
    pub transfers: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierMetric {
    pub id: u64,
    pub cycle: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub total_cycles: u64,
    pub devices: Vec<DeviceMetrics>,
    pub ports: Vec<PortMetrics>,
    pub dmas: Vec<DmaMetrics>,
    pub bank_grants: u64,
    pub bank_conflicts: u64,
    pub dma_bytes: u64,
    pub ext_bytes: u64,
    pub macs: u64,
    pub ops_per_cycle: f64,
    pub ext_bytes_per_cycle: f64,
    pub barriers: Vec<BarrierMetric>,
    pub core_finish: Vec<u64>,
}

impl Metrics {
    pub fn device(&self, id: &str) -> Option<&DeviceMetrics> {
        self.devices.iter().find(|d| d.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// Header and one row with all fields flattened.
    pub fn csv(&self) -> String {
        let mut head: Vec<String> = [
            "total_cycles",
            "bank_grants",
            "bank_conflicts",
            "dma_bytes",
            "ext_bytes",
            "macs",
            "ops_per_cycle",
            "ext_bytes_per_cycle",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let mut row = vec![
            self.total_cycles.to_string(),
            self.bank_grants.to_string(),
            self.bank_conflicts.to_string(),
            self.dma_bytes.to_string(),
            self.ext_bytes.to_string(),
            self.macs.to_string(),
            format!("{:.6}", self.ops_per_cycle),
            format!("{:.6}", self.ext_bytes_per_cycle),
        ];
        for d in &self.devices {
            for (k, v) in [
                ("busy_cycles", d.busy_cycles.to_string()),
                ("compute_cycles", d.compute_cycles.to_string()),
                ("tasks", d.tasks.to_string()),
                ("utilization", format!("{:.6}", d.utilization)),
            ] {
                head.push(format!("{}.{k}", d.id));
                row.push(v);
            }
        }
        for (i, p) in self.ports.iter().enumerate() {
            head.push(format!("port{i}.granted"));
            row.push(p.granted.to_string());
            head.push(format!("port{i}.stalled"));
            row.push(p.stalled.to_string());
        }
        for d in &self.dmas {
            head.push(format!("{}.busy_cycles", d.id));
            row.push(d.busy_cycles.to_string());
            head.push(format!("{}.bytes_moved", d.id));
            row.push(d.bytes_moved.to_string());
        }
        format!("{}\n{}\n", head.join(","), row.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub cycle: u64,
    pub unit: String,
    pub event: &'static str,
    pub detail: String,
}

pub fn trace_to_csv(events: &[TraceEvent]) -> String {
    let mut s = String::from("cycle,unit,event,detail\n");
    for e in events {
        s.push_str(&format!("{},{},{},{}\n", e.cycle, e.unit, e.event, e.detail));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RooflinePoint {
    pub intensity: f64,
    pub attained_ops_per_cycle: f64,
    pub bound_ops_per_cycle: f64,
    pub utilization_of_bound: f64,
    pub peak_ops_per_cycle: f64,
    pub ridge: f64,
}

/// Roofline bound for a given intensity on `cfg`.
pub fn roofline_bound(cfg: &ClusterConfig, intensity: f64) -> f64 {
    let bw = cfg.external_channel.bandwidth_bytes_per_cycle as f64;
    cfg.peak_ops_per_cycle().min(intensity * bw)
}

/// Places a run on the roofline. `ops` is the useful work of the workload
/// and `ext_bytes` its external traffic.
pub fn summarize(metrics: &Metrics, cfg: &ClusterConfig, ops: u64, ext_bytes: u64) -> RooflinePoint {
    let intensity = if ext_bytes == 0 { f64::INFINITY } else { ops as f64 / ext_bytes as f64 };
    let attained = if metrics.total_cycles == 0 { 0.0 } else { ops as f64 / metrics.total_cycles as f64 };
    let bound = roofline_bound(cfg, intensity);
    let peak = cfg.peak_ops_per_cycle();
    RooflinePoint {
        intensity,
        attained_ops_per_cycle: attained,
        bound_ops_per_cycle: bound,
        utilization_of_bound: if bound > 0.0 { attained / bound } else { 0.0 },
        peak_ops_per_cycle: peak,
        ridge: peak / cfg.external_channel.bandwidth_bytes_per_cycle as f64,
    }
}
