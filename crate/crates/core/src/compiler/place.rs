// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Device descriptions and node placement.

use std::fmt;

use super::alloc::Layout;
use super::graph::{EwKind, Node, OpKind, WorkloadGraph};
use super::CompileError;
use crate::accel::{gemm_tile_cycles, scalar_cycles, ScalarOp};
use crate::config::{AcceleratorKind, ClusterConfig, UNIT};
use crate::dma::{dma_cycles, DmaDescriptor};
use crate::tensor::DType;

/// Where a task executes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Device {
    Accel(String),
    Scalar(String),
    Dma(String),
}

impl Device {
    pub fn id(&self) -> &str {
        match self {
            Device::Accel(s) | Device::Scalar(s) | Device::Dma(s) => s,
        }
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Kernel kinds a device class can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Matmul,
    FullyConnected,
    Maxpool,
    Elementwise,
    Copy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceDescription {
    pub device: Device,
    /// Control core that programs the device.
    pub core: String,
    pub kernels: Vec<KernelKind>,
}

/// One description per accelerator, per control core's scalar unit and
/// per DMA engine, in config order.
pub fn describe(cfg: &ClusterConfig) -> Vec<DeviceDescription> {
    let mut out = Vec::new();
    for a in &cfg.accelerators {
        let kernels = match a.kind {
            AcceleratorKind::Gemm { .. } => vec![KernelKind::Matmul, KernelKind::FullyConnected],
            AcceleratorKind::Maxpool { .. } => vec![KernelKind::Maxpool],
        };
        let core = cfg.owner_of(&a.id).map(|c| c.id.clone()).unwrap_or_default();
        out.push(DeviceDescription { device: Device::Accel(a.id.clone()), core, kernels });
    }
    for c in &cfg.control_cores {
        out.push(DeviceDescription {
            device: Device::Scalar(c.id.clone()),
            core: c.id.clone(),
            kernels: vec![KernelKind::Matmul, KernelKind::FullyConnected, KernelKind::Maxpool, KernelKind::Elementwise],
        });
    }
    for c in &cfg.control_cores {
        for d in &c.dma {
            out.push(DeviceDescription { device: Device::Dma(d.clone()), core: c.id.clone(), kernels: vec![KernelKind::Copy] });
        }
    }
    out
}

pub fn kernel_kind(op: &OpKind) -> KernelKind {
    match op {
        OpKind::Matmul | OpKind::Conv2d { .. } => KernelKind::Matmul,
        OpKind::FullyConnected => KernelKind::FullyConnected,
        OpKind::Maxpool2d { .. } => KernelKind::Maxpool,
        OpKind::Elementwise(_) => KernelKind::Elementwise,
        OpKind::Im2col { .. } => KernelKind::Copy,
    }
}

pub fn scalar_op(op: &OpKind) -> Option<ScalarOp> {
    Some(match *op {
        OpKind::Matmul => ScalarOp::Matmul,
        OpKind::FullyConnected => ScalarOp::Fc,
        OpKind::Maxpool2d { kernel, stride } => ScalarOp::Maxpool { k: kernel, s: stride },
        OpKind::Elementwise(EwKind::Relu) => ScalarOp::Relu,
        OpKind::Elementwise(EwKind::Add) => ScalarOp::Add,
        OpKind::Elementwise(EwKind::Narrow) => ScalarOp::Narrow,
        OpKind::Conv2d { .. } | OpKind::Im2col { .. } => return None,
    })
}

/// Whether the gemm datapath can run fully connected layer `node`: the
/// flattened input must be an i8 row that unit tiles can walk.
pub fn fc_fits_gemm(g: &WorkloadGraph, node: &Node) -> bool {
    let x = g.tensor(&node.inputs[0]).unwrap();
    let (r, c) = x.matrix();
    x.dtype == DType::I8 && (r == 1 || c % UNIT == 0)
}

/// Patch-extraction transfers of an im2col node, from `src` (the input
/// buffer) to `dst` (the patch matrix). `pitches` overrides the default
/// row pitches of input and output.
pub fn im2col_descriptors(
    g: &WorkloadGraph,
    node: &Node,
    src: usize,
    dst: usize,
    pitches: Option<(usize, usize)>,
) -> Vec<DmaDescriptor> {
    let OpKind::Im2col { kh, kw, stride } = node.op else { return Vec::new() };
    let x = g.tensor(&node.inputs[0]).unwrap();
    let y = g.tensor(&node.output).unwrap();
    let (h, w, c) = (x.shape[0], x.shape[1], x.shape[2]);
    let (yr, yc) = y.matrix();
    let (mut xl, mut yl) = (Layout::new(h * w, c, x.dtype), Layout::new(yr, yc, y.dtype));
    if let Some((px, py)) = pitches {
        (xl.pitch, yl.pitch) = (px, py);
    }
    let e = x.dtype.bytes();
    let oh = (h - kh) / stride + 1;
    let ow = (w - kw) / stride + 1;
    let merge_kw = xl.pitch == c * e;
    let mut out = Vec::new();
    for y0 in 0..oh {
        for dy in 0..kh {
            let pieces: Vec<usize> = if merge_kw { vec![0] } else { (0..kw).collect() };
            for dx in pieces {
                let row_bytes = if merge_kw { kw * c * e } else { c * e };
                let pixel = (y0 * stride + dy) * w + dx;
                out.push(DmaDescriptor {
                    src: (src + pixel * xl.pitch) as u64,
                    dst: (dst + y0 * ow * yl.pitch + (dy * kw + dx) * c * e) as u64,
                    row_bytes,
                    rows: ow,
                    src_stride: (stride * xl.pitch) as i64,
                    dst_stride: yl.pitch as i64,
                });
            }
        }
    }
    out
}

/// Modeled cycles of `node` on `device`, or `None` if unsupported.
pub fn node_cycles(g: &WorkloadGraph, node: &Node, device: &DeviceDescription, cfg: &ClusterConfig) -> Option<u64> {
    let kind = kernel_kind(&node.op);
    if !device.kernels.contains(&kind) {
        return None;
    }
    let shape = |i: usize| g.tensor(&node.inputs[i]).unwrap();
    match &device.device {
        Device::Accel(id) => {
            let acc = cfg.accelerator(id)?;
            match (&acc.kind, &node.op) {
                (AcceleratorKind::Gemm { .. }, OpKind::Matmul) => {
                    let (a, b) = (shape(0), shape(1));
                    if a.dtype != DType::I8 || b.dtype != DType::I8 {
                        return None;
                    }
                    let (m, k) = a.matrix();
                    Some(gemm_tile_cycles(m, k, b.matrix().1) + 2)
                }
                (AcceleratorKind::Gemm { .. }, OpKind::FullyConnected) => {
                    if !fc_fits_gemm(g, node) {
                        return None;
                    }
                    let (k, n) = shape(1).matrix();
                    Some(gemm_tile_cycles(1, k, n) + 2)
                }
                (AcceleratorKind::Maxpool { .. }, OpKind::Maxpool2d { kernel, .. }) => {
                    let y = g.tensor(&node.output).unwrap();
                    let (r, c) = y.matrix();
                    Some((r * c.div_ceil(UNIT) * kernel * kernel) as u64 + 2)
                }
                _ => None,
            }
        }
        Device::Scalar(_) => {
            let op = scalar_op(&node.op)?;
            let shapes: Vec<Vec<usize>> = node
                .inputs
                .iter()
                .map(|t| {
                    let d = g.tensor(t).unwrap();
                    match op {
                        ScalarOp::Matmul => {
                            let (r, c) = d.matrix();
                            vec![r, c]
                        }
                        _ => d.shape.clone(),
                    }
                })
                .collect();
            let refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
            scalar_cycles(op, &refs, &cfg.scalar_cost_model).ok()
        }
        Device::Dma(id) => {
            let beat = cfg.dma_config(id)?.beat_bytes();
            let bw = cfg.external_channel.bandwidth_bytes_per_cycle;
            im2col_descriptors(g, node, 0, 0, None)
                .iter()
                .map(|d| dma_cycles(d, beat, bw).ok())
                .sum()
        }
    }
}

/// Device assignment of each node, indexed like `graph.nodes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Placement {
    pub devices: Vec<Device>,
    pub cycles: Vec<u64>,
}

/// Placement restricted to the scalar units, for baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlacementPolicy {
    #[default]
    Fastest,
    ScalarOnly,
}

/// Assigns each canonical node to the supporting device with the fewest
/// modeled cycles; ties go to the earlier device in config order.
pub fn place(g: &WorkloadGraph, cfg: &ClusterConfig, policy: PlacementPolicy) -> Result<Placement, CompileError> {
    let descs = describe(cfg);
    let mut p = Placement { devices: Vec::new(), cycles: Vec::new() };
    for node in &g.nodes {
        let mut best: Option<(u64, &DeviceDescription)> = None;
        for d in &descs {
            if policy == PlacementPolicy::ScalarOnly && matches!(d.device, Device::Accel(_)) {
                continue;
            }
            if let Some(c) = node_cycles(g, node, d, cfg) {
                if best.is_none_or(|(b, _)| c < b) {
                    best = Some((c, d));
                }
            }
        }
        let (c, d) = best.ok_or_else(|| CompileError::NoDevice(node.id.clone()))?;
        p.devices.push(d.device.clone());
        p.cycles.push(c);
    }
    Ok(p)
}

/// Control core that programs `device`.
pub fn owner_core(cfg: &ClusterConfig, device: &Device) -> String {
    match device {
        Device::Scalar(c) => c.clone(),
        Device::Accel(id) | Device::Dma(id) => cfg
            .control_cores
            .iter()
            .find(|c| c.accelerators.contains(id) || c.dma.contains(id))
            .map(|c| c.id.clone())
            .unwrap_or_default(),
    }
}

/// First DMA engine in config order.
pub fn first_dma(cfg: &ClusterConfig) -> Option<Device> {
    cfg.control_cores.iter().flat_map(|c| c.dma.iter()).next().map(|d| Device::Dma(d.clone()))
}
