// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Cycle engine.
//!
//! Every cycle runs the same phases in a fixed order: sequencers, CSR
//! commits, streamer requests, DMA requests, arbitration and access,
//! datapaths, barrier release.

use std::collections::HashMap;

use thiserror::Error;

use crate::accel::{AccelError, GemmDatapath, MaxPoolDatapath, ScalarTask, StepStatus};
use crate::config::{AcceleratorKind, ChannelConfig, ClusterConfig, ScalarCostModel};
use crate::control::csr::{CsrFile, CsrLayout, WriteAck};
use crate::control::{
    check_programs, detect_deadlock, BarrierUnit, ControlError, ControlTarget, KernelProgram, ProgramError, Sequencer,
    StepResult,
};
use crate::dma::{DmaDescriptor, DmaEngine};
use crate::streamer::{LoopNest, SpmGeometry, Streamer, StreamerError};
use crate::tcdm::{BankRequest, Tcdm};

pub mod metrics;

pub use metrics::{
    roofline_bound, summarize, trace_to_csv, BarrierMetric, DeviceMetrics, DmaMetrics, Metrics, PortMetrics,
    RooflinePoint, TraceEvent,
};

pub const DEFAULT_MAX_CYCLES: u64 = 1_000_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error("deadlock at cycle {cycle}: blocked cores {blocked:?}")]
    Deadlock { cycle: u64, blocked: Vec<String> },
    #[error(transparent)]
    Control(ControlError),
    #[error("simulation exceeded {0} cycles")]
    MaxCyclesExceeded(u64),
    #[error("device `{device}`: {source}")]
    Stream { device: String, source: StreamerError },
    #[error("device `{device}`: {source}")]
    Accel { device: String, source: AccelError },
    #[error("memory image: {0}")]
    Image(String),
}

impl From<ControlError> for SimError {
    fn from(e: ControlError) -> Self {
        match e {
            ControlError::Deadlock { cycle, blocked } => SimError::Deadlock { cycle, blocked },
            other => SimError::Control(other),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub max_cycles: u64,
    /// Record control and task events.
    pub trace: bool,
    /// Also record every bank access (large).
    pub trace_accesses: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { max_cycles: DEFAULT_MAX_CYCLES, trace: false, trace_accesses: false }
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub spm: Vec<u8>,
    pub ext: Vec<u8>,
    pub metrics: Metrics,
    pub trace: Vec<TraceEvent>,
}

impl SimOutput {
    pub fn trace_csv(&self) -> String {
        trace_to_csv(&self.trace)
    }
}

#[derive(Debug, Clone)]
enum Unit {
    Gemm(GemmDatapath),
    MaxPool(MaxPoolDatapath),
    Scalar { task: Option<ScalarTask>, remaining: u64, compute_cycles: u64 },
}

#[derive(Debug, Clone)]
struct Device {
    id: String,
    kind: &'static str,
    owner: usize,
    csr: CsrFile,
    channels: Vec<ChannelConfig>,
    streamers: Vec<Streamer>,
    unit: Unit,
    start_at: Option<u64>,
    active: bool,
    busy_cycles: u64,
    tasks: u64,
}

impl Device {
    fn occupied(&self) -> bool {
        self.csr.is_occupied() || self.active || self.start_at.is_some()
    }

    fn compute_cycles(&self) -> u64 {
        match &self.unit {
            Unit::Gemm(g) => g.compute_cycles,
            Unit::MaxPool(m) => m.compute_cycles,
            Unit::Scalar { compute_cycles, .. } => *compute_cycles,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Requester {
    Stream(usize, usize),
    Dma(usize),
}

struct Cluster {
    devices: Vec<Device>,
    by_name: HashMap<String, usize>,
    dmas: Vec<DmaEngine>,
    core_dma: Vec<Option<usize>>,
    tcdm: Tcdm,
    ext: Vec<u8>,
    geo: SpmGeometry,
    cost: ScalarCostModel,
    core_names: Vec<String>,
    events: Option<Vec<TraceEvent>>,
}

impl Cluster {
    fn build(cfg: &ClusterConfig, ext: Vec<u8>) -> Self {
        let mut tcdm = Tcdm::from_config(cfg);
        let bank_bytes = tcdm.bank_bytes();
        let geo = SpmGeometry { bank_bytes, num_banks: tcdm.num_banks(), capacity: tcdm.capacity() };
        let mut devices = Vec::new();
        for acc in &cfg.accelerators {
            let owner = cfg.control_cores.iter().position(|c| c.accelerators.contains(&acc.id)).unwrap_or(0);
            let streamers = acc
                .channels
                .iter()
                .map(|ch| {
                    let port = tcdm.add_port(ch.width_bits, format!("{}.{}", acc.id, ch.name));
                    Streamer::new(ch, port, bank_bytes)
                })
                .collect();
            let unit = match acc.kind {
                AcceleratorKind::Gemm { .. } => Unit::Gemm(GemmDatapath::new(bank_bytes)),
                AcceleratorKind::Maxpool { .. } => Unit::MaxPool(MaxPoolDatapath::new(bank_bytes)),
            };
            devices.push(Device {
                id: acc.id.clone(),
                kind: acc.kind.name(),
                owner,
                csr: CsrFile::new(acc.id.clone(), CsrLayout::for_accelerator(acc)),
                channels: acc.channels.clone(),
                streamers,
                unit,
                start_at: None,
                active: false,
                busy_cycles: 0,
                tasks: 0,
            });
        }
        for (i, core) in cfg.control_cores.iter().enumerate() {
            devices.push(Device {
                id: core.id.clone(),
                kind: "scalar",
                owner: i,
                csr: CsrFile::new(core.id.clone(), CsrLayout::scalar()),
                channels: Vec::new(),
                streamers: Vec::new(),
                unit: Unit::Scalar { task: None, remaining: 0, compute_cycles: 0 },
                start_at: None,
                active: false,
                busy_cycles: 0,
                tasks: 0,
            });
        }
        let mut dmas = Vec::new();
        let mut core_dma = Vec::new();
        for core in &cfg.control_cores {
            core_dma.push(core.dma.first().map(|id| {
                let d = cfg.dma_config(id).expect("validated config");
                let port = tcdm.add_port(d.beat_width_bits, id.clone());
                dmas.push(DmaEngine::new(
                    id.clone(),
                    port,
                    d.beat_bytes(),
                    bank_bytes,
                    cfg.external_channel.bandwidth_bytes_per_cycle,
                ));
                dmas.len() - 1
            }));
        }
        let by_name = devices.iter().enumerate().map(|(i, d)| (d.id.clone(), i)).collect();
        Cluster {
            devices,
            by_name,
            dmas,
            core_dma,
            tcdm,
            ext,
            geo,
            cost: cfg.scalar_cost_model.clone(),
            core_names: cfg.control_cores.iter().map(|c| c.id.clone()).collect(),
            events: None,
        }
    }

    fn event(&mut self, cycle: u64, unit: &str, event: &'static str, detail: String) {
        if let Some(ev) = self.events.as_mut() {
            ev.push(TraceEvent { cycle, unit: unit.to_string(), event, detail });
        }
    }

    fn device(&self, core: usize, name: &str) -> Result<usize, ControlError> {
        match self.by_name.get(name) {
            Some(&i) if self.devices[i].owner == core => Ok(i),
            _ => Err(ControlError::ProgramFault { core: self.core_names[core].clone(), device: name.to_string() }),
        }
    }

    fn dma_of(&self, core: usize) -> Result<usize, ControlError> {
        self.core_dma[core].ok_or_else(|| ControlError::ProgramFault {
            core: self.core_names[core].clone(),
            device: "dma".into(),
        })
    }

    fn anything_busy(&self) -> bool {
        self.devices.iter().any(Device::occupied) || self.dmas.iter().any(DmaEngine::is_busy)
    }

    fn commit(&mut self, cycle: u64) -> Result<(), SimError> {
        for i in 0..self.devices.len() {
            if self.devices[i].start_at != Some(cycle) {
                continue;
            }
            let geo = self.geo;
            let cost = self.cost.clone();
            let d = &mut self.devices[i];
            d.start_at = None;
            let regs = d.csr.active().to_vec();
            let layout = d.csr.layout.clone();
            for (c, ch) in d.channels.iter().enumerate() {
                let nest = LoopNest::from_csr(layout.channel_slice(&regs, c), ch, geo)
                    .map_err(|source| SimError::Stream { device: d.id.clone(), source })?;
                d.streamers[c].launch(nest);
            }
            let p = |k: usize| regs[layout.param(k)];
            let accel_err = |source| SimError::Accel { device: d.id.clone(), source };
            match &mut d.unit {
                Unit::Gemm(g) => g
                    .start(p(0).max(0) as usize, p(1).max(0) as usize, p(2).max(0) as usize, &d.streamers)
                    .map_err(accel_err)?,
                Unit::MaxPool(m) => m.start(p(0).max(0) as usize, p(1), &d.streamers).map_err(accel_err)?,
                Unit::Scalar { task, remaining, .. } => {
                    let t = ScalarTask::decode(&regs[layout.params..]).map_err(accel_err)?;
                    *remaining = t.cycles(&cost).map_err(accel_err)?.max(1);
                    *task = Some(t);
                }
            }
            d.active = true;
            d.tasks += 1;
            let (id, n) = (d.id.clone(), d.tasks);
            self.event(cycle, &id, "task_start", format!("task={n}"));
        }
        Ok(())
    }

    fn datapaths(&mut self, cycle: u64) -> Result<(), SimError> {
        for i in 0..self.devices.len() {
            if !self.devices[i].active {
                continue;
            }
            let cost = self.cost.clone();
            let d = &mut self.devices[i];
            d.busy_cycles += 1;
            let status = match &mut d.unit {
                Unit::Gemm(g) => g.step(cycle, &mut d.streamers),
                Unit::MaxPool(m) => m.step(cycle, &mut d.streamers),
                Unit::Scalar { task, remaining, compute_cycles } => {
                    *compute_cycles += 1;
                    *remaining -= 1;
                    if *remaining == 0 {
                        let t = task.take().expect("scalar task");
                        t.run(self.tcdm.bytes_mut(), &cost)
                            .map_err(|source| SimError::Accel { device: d.id.clone(), source })?;
                        StepStatus::Finished
                    } else {
                        StepStatus::Computed
                    }
                }
            };
            if status == StepStatus::Finished {
                d.active = false;
                if d.csr.finish() {
                    d.start_at = Some(cycle + 1);
                }
                let (id, n) = (d.id.clone(), d.tasks);
                self.event(cycle, &id, "task_done", format!("task={n}"));
            }
        }
        Ok(())
    }

    fn memory(&mut self, cycle: u64) {
        let mut reqs: Vec<BankRequest> = Vec::new();
        let mut who = Vec::new();
        for (di, d) in self.devices.iter().enumerate() {
            for (si, s) in d.streamers.iter().enumerate() {
                if let Some(r) = s.request(cycle) {
                    reqs.push(r);
                    who.push(Requester::Stream(di, si));
                }
            }
        }
        let was_busy: Vec<bool> = self.dmas.iter().map(DmaEngine::is_busy).collect();
        for (i, dma) in self.dmas.iter_mut().enumerate() {
            if let Some(r) = dma.request(cycle, &mut self.ext) {
                reqs.push(r);
                who.push(Requester::Dma(i));
            }
        }
        debug_assert!(reqs.iter().all(|r| self.tcdm.check_request(r).is_ok()));
        let outcomes = if reqs.is_empty() { Vec::new() } else { self.tcdm.step(cycle, &reqs) };
        for (o, w) in outcomes.iter().zip(&who) {
            match *w {
                Requester::Stream(d, s) => self.devices[d].streamers[s].complete(cycle, o),
                Requester::Dma(i) => self.dmas[i].complete(o, &mut self.ext),
            }
        }
        for i in 0..self.dmas.len() {
            if was_busy[i] && !self.dmas[i].is_busy() {
                let (id, n) = (self.dmas[i].id.clone(), self.dmas[i].transfers);
                self.event(cycle, &id, "dma_done", format!("transfer={n}"));
            }
        }
        if self.events.is_some() {
            for r in self.tcdm.take_trace() {
                let owner = self.tcdm.ports()[r.port].owner.clone();
                let ev = if r.granted { "grant" } else { "stall" };
                self.event(r.cycle, &owner, ev, format!("{} bank={} addr={:#x}", r.kind, r.bank, r.addr));
            }
        }
    }
}

impl ControlTarget for Cluster {
    fn csr_write(&mut self, core: usize, device: &str, reg: usize, value: i64, cycle: u64) -> Result<WriteAck, ControlError> {
        let i = self.device(core, device)?;
        let ack = self.devices[i].csr.write(reg, value)?;
        match ack {
            WriteAck::Launched => {
                self.devices[i].start_at = Some(cycle + 1);
                self.event(cycle, device, "launch", String::new());
            }
            WriteAck::Queued => self.event(cycle, device, "launch_queued", String::new()),
            _ => {}
        }
        Ok(ack)
    }

    fn csr_read(&mut self, core: usize, device: &str, reg: usize) -> Result<i64, ControlError> {
        let i = self.device(core, device)?;
        Ok(self.devices[i].csr.read(reg)?)
    }

    fn device_occupied(&self, core: usize, device: &str) -> Result<bool, ControlError> {
        Ok(self.devices[self.device(core, device)?].occupied())
    }

    fn dma_start(&mut self, core: usize, desc: &DmaDescriptor, cycle: u64) -> Result<bool, ControlError> {
        let i = self.dma_of(core)?;
        desc.validate(self.tcdm.capacity(), self.ext.len())?;
        let ok = self.dmas[i].start(cycle, *desc);
        if ok {
            let id = self.dmas[i].id.clone();
            let detail = format!(
                "src={:#x} dst={:#x} bytes={} rows={}",
                desc.src, desc.dst, desc.row_bytes, desc.rows
            );
            self.event(cycle, &id, "dma_start", detail);
        }
        Ok(ok)
    }

    fn dma_busy(&self, core: usize) -> Result<bool, ControlError> {
        Ok(self.dmas[self.dma_of(core)?].is_busy())
    }
}

/// Orders `programs` by core; cores without a program get an empty one.
fn per_core(cfg: &ClusterConfig, programs: &[KernelProgram]) -> Vec<KernelProgram> {
    cfg.control_cores
        .iter()
        .map(|c| programs.iter().find(|p| p.core == c.id).cloned().unwrap_or_else(|| KernelProgram::new(c.id.clone())))
        .collect()
}

/// Runs `programs` on a cluster built from `cfg`.
///
/// `ext` is the external memory image; `spm`, if given, is copied to the
/// start of the scratchpad.
pub fn run(
    cfg: &ClusterConfig,
    programs: &[KernelProgram],
    ext: Vec<u8>,
    spm: Option<&[u8]>,
    opts: &SimOptions,
) -> Result<SimOutput, SimError> {
    check_programs(cfg, programs)?;
    let programs = per_core(cfg, programs);
    let mut cl = Cluster::build(cfg, ext);
    if let Some(img) = spm {
        if img.len() > cl.tcdm.capacity() {
            return Err(SimError::Image(format!(
                "scratchpad image of {} bytes exceeds capacity {}",
                img.len(),
                cl.tcdm.capacity()
            )));
        }
        cl.tcdm.bytes_mut()[..img.len()].copy_from_slice(img);
    }
    if opts.trace {
        cl.events = Some(Vec::new());
        if opts.trace_accesses {
            cl.tcdm.enable_trace();
        }
    }
    let n = programs.len();
    let mut seqs: Vec<Sequencer> = (0..n).map(Sequencer::new).collect();
    let mut barriers = BarrierUnit::new(n);
    let mut cycle = 0u64;
    loop {
        let programs_done =
            seqs.iter().zip(&programs).all(|(s, p)| s.pc >= p.len() && s.waiting_barrier().is_none());
        if programs_done && !cl.anything_busy() {
            break;
        }
        if cycle >= opts.max_cycles {
            return Err(SimError::MaxCyclesExceeded(opts.max_cycles));
        }
        for (s, p) in seqs.iter_mut().zip(&programs) {
            let was_finished = s.is_finished();
            let r = s.step(cycle, p, &mut cl, &mut barriers)?;
            if r == StepResult::Finished && !was_finished {
                let name = cl.core_names[s.core].clone();
                cl.event(cycle, &name, "core_done", String::new());
            }
        }
        cl.commit(cycle)?;
        cl.memory(cycle);
        cl.datapaths(cycle)?;
        let before = barriers.releases.len();
        barriers.release_phase();
        for r in barriers.releases[before..].to_vec() {
            cl.event(cycle, "barrier", "release", format!("id={} at={}", r.id, r.cycle));
        }
        detect_deadlock(cycle, &seqs, &barriers, cl.anything_busy(), &cl.core_names)?;
        cycle += 1;
    }
    let total = cycle;
    let frac = |x: u64| if total == 0 { 0.0 } else { x as f64 / total as f64 };
    let devices = cl
        .devices
        .iter()
        .map(|d| DeviceMetrics {
            id: d.id.clone(),
            kind: d.kind.to_string(),
            busy_cycles: d.busy_cycles,
            compute_cycles: d.compute_cycles(),
            tasks: d.tasks,
            utilization: frac(d.busy_cycles),
        })
        .collect();
    let ports = cl
        .tcdm
        .ports()
        .iter()
        .zip(&cl.tcdm.port_stats)
        .map(|(p, s)| PortMetrics { owner: p.owner.clone(), width_bits: p.width_bits, granted: s.granted, stalled: s.stalled })
        .collect();
    let dmas: Vec<DmaMetrics> = cl
        .dmas
        .iter()
        .map(|d| DmaMetrics {
            id: d.id.clone(),
            busy_cycles: d.busy_cycles,
            bytes_moved: d.bytes_moved,
            ext_bytes: d.ext_bytes,
            transfers: d.transfers,
        })
        .collect();
    let macs: u64 = cl
        .devices
        .iter()
        .map(|d| match &d.unit {
            Unit::Gemm(g) => g.macs,
            _ => 0,
        })
        .sum();
    let ext_bytes = dmas.iter().map(|d| d.ext_bytes).sum();
    let metrics = Metrics {
        total_cycles: total,
        devices,
        ports,
        bank_grants: cl.tcdm.bank_grants.iter().sum(),
        bank_conflicts: cl.tcdm.bank_conflicts,
        dma_bytes: dmas.iter().map(|d| d.bytes_moved).sum(),
        ext_bytes,
        dmas,
        macs,
        ops_per_cycle: frac(2 * macs),
        ext_bytes_per_cycle: frac(ext_bytes),
        barriers: barriers.releases.iter().map(|r| BarrierMetric { id: r.id, cycle: r.cycle }).collect(),
        core_finish: seqs.iter().map(|s| s.finished_at.unwrap_or(0)).collect(),
    };
    Ok(SimOutput { spm: cl.tcdm.bytes().to_vec(), ext: cl.ext, metrics, trace: cl.events.unwrap_or_default() })
}
