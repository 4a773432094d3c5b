// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Workload compiler: lowering, placement, allocation, scheduling and
//! control code generation.

use thiserror::Error;

pub mod alloc;
pub mod codegen;
pub mod graph;
pub mod lower;
pub mod place;
pub mod schedule;
pub mod tile;

pub use alloc::{allocate, choose_layouts, Allocation, Layout, LayoutKind};
pub use codegen::codegen;
pub use graph::{EwKind, Init, Location, Node, OpKind, Role, TensorDecl, WorkloadGraph};
pub use lower::lower_graph;
pub use place::{place, Device, Placement, PlacementPolicy};
pub use schedule::{schedule, Mode, PipelineSchedule};
pub use tile::{roofline_run, tile_matmul, RooflineRun, TilePlan, TileShape};

use crate::config::ClusterConfig;
use crate::control::KernelProgram;
use crate::tensor::Tensor;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CompileError {
    #[error("invalid workload: {0}")]
    InvalidGraph(String),
    #[error("node `{node}` uses unsupported operation `{op}`")]
    UnsupportedOp { node: String, op: String },
    #[error("node `{node}`: {msg}")]
    ShapeMismatch { node: String, msg: String },
    #[error("workload graph contains a cycle")]
    SchedulingCycle,
    #[error("tensor `{tensor}` does not fit: needs {needed} bytes, {available} free")]
    CapacityExceeded { tensor: String, needed: usize, available: usize },
    #[error("no device can execute `{0}`")]
    NoDevice(String),
    #[error("node `{node}` needs a loop nest of depth {depth}, streamer supports {max}")]
    NestDepthExceeded { node: String, depth: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompileOptions {
    pub mode: Mode,
    pub batch: usize,
    pub policy: PlacementPolicy,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { mode: Mode::Sequential, batch: 1, policy: PlacementPolicy::Fastest }
    }
}

/// Everything produced by [`compile`].
#[derive(Debug, Clone)]
pub struct Compiled {
    /// Canonical graph the programs implement.
    pub graph: WorkloadGraph,
    pub placement: Placement,
    pub allocation: Allocation,
    pub schedule: PipelineSchedule,
    pub programs: Vec<KernelProgram>,
}

impl Compiled {
    /// External memory image holding every input for every iteration.
    pub fn ext_image(&self) -> Result<Vec<u8>, CompileError> {
        let mut img = vec![0u8; self.allocation.ext_len];
        for t in self.graph.inputs() {
            let region = self.allocation.ext_region(&t.id).expect("inputs have external regions");
            for iter in 0..region.count {
                let v = graph::initial_value(t, iter)?;
                self.allocation.layout(&t.id).write(&v, &mut img, self.allocation.ext_offset(&t.id, iter));
            }
        }
        Ok(img)
    }

    /// Ids of tensors stored to external memory.
    pub fn output_ids(&self) -> Vec<String> {
        self.graph.outputs().iter().map(|t| t.id.clone()).collect()
    }

    /// Reads output `tensor` of iteration `iter` from a final external image.
    pub fn read_output(&self, ext: &[u8], tensor: &str, iter: usize) -> Tensor {
        let start = self.allocation.ext_offset(tensor, iter);
        let decl = self.graph.tensor(tensor).expect("known tensor");
        self.allocation.layout(tensor).read(ext, start).reshape(&decl.shape)
    }

    /// Compares every stored output of every iteration with the reference
    /// evaluation. Returns a description of the first mismatch.
    pub fn check_outputs(&self, ext: &[u8]) -> Result<(), String> {
        for iter in 0..self.schedule.batch {
            let want = self.graph.evaluate(iter).map_err(|e| e.to_string())?;
            for id in self.output_ids() {
                let got = self.read_output(ext, &id, iter);
                if got != want[&id] {
                    let at = got.data.iter().zip(&want[&id].data).position(|(a, b)| a != b);
                    return Err(format!("tensor `{id}` iteration {iter} differs at element {at:?}"));
                }
            }
        }
        Ok(())
    }

    /// Tasks closed by each barrier.
    pub fn barrier_labels(&self) -> Vec<(u64, Vec<String>)> {
        let mut out = Vec::new();
        if !self.schedule.preamble.is_empty() {
            let l = self.schedule.preamble.iter().map(|&t| self.schedule.task_label(&self.graph, t)).collect();
            out.push((0, l));
        }
        for s in &self.schedule.steps {
            let l = s.items.iter().map(|i| self.schedule.task_label(&self.graph, i.task)).collect();
            out.push((s.barrier, l));
        }
        out
    }
}

/// Runs all passes on `graph` for `cfg`.
pub fn compile(graph: &WorkloadGraph, cfg: &ClusterConfig, opts: &CompileOptions) -> Result<Compiled, CompileError> {
    let graph = lower_graph(graph)?;
    let placement = place(&graph, cfg, opts.policy)?;
    let tasks = schedule::plan_tasks(&graph, &placement, cfg, opts.mode)?;
    let copies = schedule::buffer_copies(&graph, &tasks);
    let layouts = choose_layouts(&graph, &placement, cfg);
    let allocation = allocate(&graph, layouts, &copies, opts.batch, cfg)?;
    let schedule = schedule(&graph, tasks, opts.mode, opts.batch)?;
    let programs = codegen(&graph, &schedule, &allocation, cfg)?;
    Ok(Compiled { graph, placement, allocation, schedule, programs })
}
