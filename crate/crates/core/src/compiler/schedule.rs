// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Pipeline stages, buffer copy counts and the unrolled step list.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use super::graph::{Role, WorkloadGraph};
use super::place::{first_dma, Device, Placement};
use super::CompileError;
use crate::config::ClusterConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Sequential,
    Pipelined,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sequential" => Ok(Mode::Sequential),
            "pipelined" => Ok(Mode::Pipelined),
            other => Err(format!("unknown mode `{other}` (expected sequential or pipelined)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sequential => "sequential",
            Mode::Pipelined => "pipelined",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskKind {
    /// External to scratchpad copy of an input tensor.
    Load(String),
    /// Scratchpad to external copy of an output tensor.
    Store(String),
    /// Execution of a graph node.
    Compute(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub kind: TaskKind,
    pub device: Device,
    pub stage: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepItem {
    pub task: usize,
    pub iter: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub barrier: u64,
    pub items: Vec<StepItem>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineSchedule {
    pub mode: Mode,
    pub batch: usize,
    pub tasks: Vec<Task>,
    /// Weight loads run once before the first step.
    pub preamble: Vec<usize>,
    pub steps: Vec<Step>,
    pub num_stages: usize,
}

impl PipelineSchedule {
    /// Label of a task for reports: node id, or `load:`/`store:` tensor.
    pub fn task_label(&self, g: &WorkloadGraph, task: usize) -> String {
        match &self.tasks[task].kind {
            TaskKind::Load(t) => format!("load:{t}"),
            TaskKind::Store(t) => format!("store:{t}"),
            TaskKind::Compute(n) => g.nodes[*n].id.clone(),
        }
    }
}

/// Task list with stages. Weight loads get stage 0 and are kept out of
/// the dependency chain.
pub fn plan_tasks(
    g: &WorkloadGraph,
    placement: &Placement,
    cfg: &ClusterConfig,
    mode: Mode,
) -> Result<Vec<Task>, CompileError> {
    let dma = first_dma(cfg).ok_or_else(|| CompileError::NoDevice("dma transfers".into()))?;
    let mut tasks: Vec<Task> = Vec::new();
    let mut producer: HashMap<&str, usize> = HashMap::new();
    for t in g.inputs() {
        producer.insert(&t.id, tasks.len());
        tasks.push(Task { kind: TaskKind::Load(t.id.clone()), device: dma.clone(), stage: 0 });
    }
    let outputs: Vec<&str> = g.outputs().iter().map(|t| t.id.as_str()).collect();
    let pipelined = mode == Mode::Pipelined;
    let stage_after = |tasks: &[Task], p: usize, dev: &Device| -> usize {
        let t = &tasks[p];
        if !pipelined {
            0
        } else {
            t.stage + usize::from(t.device != *dev)
        }
    };
    for n in g.topo_order()? {
        let node = &g.nodes[n];
        let dev = placement.devices[n].clone();
        let mut stage = 0;
        for input in &node.inputs {
            if g.tensor(input).is_some_and(|t| t.role == Role::Weight && g.producer(input).is_none()) {
                continue;
            }
            stage = stage.max(stage_after(&tasks, producer[input.as_str()], &dev));
        }
        producer.insert(&node.output, tasks.len());
        tasks.push(Task { kind: TaskKind::Compute(n), device: dev, stage });
        if outputs.contains(&node.output.as_str()) {
            let stage = stage_after(&tasks, tasks.len() - 1, &dma);
            tasks.push(Task { kind: TaskKind::Store(node.output.clone()), device: dma.clone(), stage });
        }
    }
    Ok(tasks)
}

/// Tensors read by a task.
pub fn task_reads<'a>(g: &'a WorkloadGraph, t: &'a Task) -> Vec<&'a str> {
    match &t.kind {
        TaskKind::Load(_) => Vec::new(),
        TaskKind::Store(x) => vec![x.as_str()],
        TaskKind::Compute(n) => g.nodes[*n].inputs.iter().map(|s| s.as_str()).collect(),
    }
}

/// Tensor written by a task.
pub fn task_write<'a>(g: &'a WorkloadGraph, t: &'a Task) -> Option<&'a str> {
    match &t.kind {
        TaskKind::Load(x) => Some(x),
        TaskKind::Store(_) => None,
        TaskKind::Compute(n) => Some(&g.nodes[*n].output),
    }
}

/// Scratchpad copies per tensor: one more than the number of steps
/// between its production and its last use.
pub fn buffer_copies(g: &WorkloadGraph, tasks: &[Task]) -> HashMap<String, usize> {
    let mut copies = HashMap::new();
    for (i, t) in tasks.iter().enumerate() {
        let Some(out) = task_write(g, t) else { continue };
        let last = tasks
            .iter()
            .skip(i + 1)
            .filter(|c| task_reads(g, c).contains(&out))
            .map(|c| c.stage)
            .max()
            .unwrap_or(t.stage);
        let weight = g.tensor(out).is_some_and(|d| d.role == Role::Weight && g.producer(out).is_none());
        copies.insert(out.to_string(), if weight { 1 } else { last.saturating_sub(t.stage) + 1 });
    }
    copies
}

/// Unrolls `tasks` over `batch` iterations.
///
/// Sequential mode runs one task per step, iteration after iteration.
/// Pipelined mode runs, in step `t`, every task of stage `s` on iteration
/// `t - s`. Each step ends with a barrier; ids increase from 0, the weight
/// preamble taking the first one.
pub fn schedule(g: &WorkloadGraph, tasks: Vec<Task>, mode: Mode, batch: usize) -> Result<PipelineSchedule, CompileError> {
    if batch == 0 {
        return Err(CompileError::InvalidGraph("batch must be at least 1".into()));
    }
    let is_weight_load = |t: &Task| match &t.kind {
        TaskKind::Load(x) => g.tensor(x).is_some_and(|d| d.role == Role::Weight),
        _ => false,
    };
    let preamble: Vec<usize> = (0..tasks.len()).filter(|&i| is_weight_load(&tasks[i])).collect();
    let body: Vec<usize> = (0..tasks.len()).filter(|i| !preamble.contains(i)).collect();
    let num_stages = body.iter().map(|&i| tasks[i].stage + 1).max().unwrap_or(0);
    let mut steps = Vec::new();
    let mut barrier = u64::from(!preamble.is_empty());
    let mut push = |items: Vec<StepItem>| {
        steps.push(Step { barrier, items });
        barrier += 1;
    };
    match mode {
        Mode::Sequential => {
            for iter in 0..batch {
                for &task in &body {
                    push(vec![StepItem { task, iter }]);
                }
            }
        }
        Mode::Pipelined => {
            for t in 0..batch + num_stages.saturating_sub(1) {
                let items: Vec<StepItem> = body
                    .iter()
                    .filter_map(|&task| {
                        let s = tasks[task].stage;
                        (t >= s && t - s < batch).then(|| StepItem { task, iter: t - s })
                    })
                    .collect();
                if !items.is_empty() {
                    push(items);
                }
            }
        }
    }
    Ok(PipelineSchedule { mode, batch, tasks, preamble, steps, num_stages })
}
