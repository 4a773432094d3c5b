// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Control program generation: dataflow kernels (streamer loop nests),
//! compute kernels (shape parameters and launch), transfers and barriers.

use super::alloc::{Allocation, Layout, LayoutKind};
use super::graph::{OpKind, WorkloadGraph};
use super::place::{im2col_descriptors, owner_core, scalar_op, Device};
use super::schedule::{PipelineSchedule, StepItem, TaskKind};
use super::CompileError;
use crate::accel::ScalarTask;
use crate::config::{AcceleratorConfig, AcceleratorKind, ClusterConfig, UNIT};
use crate::control::csr::{chan, CsrLayout};
use crate::control::{ControlInstruction, KernelProgram};
use crate::dma::DmaDescriptor;
use crate::streamer::{LoopDim, LoopNest, SpatialPattern};
use crate::tensor::MatView;

/// Register writes that program channel `ch` with `nest`.
pub fn channel_writes(layout: &CsrLayout, ch: usize, nest: &LoopNest) -> Vec<(usize, i64)> {
    let r = |off: usize| layout.channel_reg(ch, off);
    let mut w = vec![
        (r(chan::BASE), nest.base),
        (r(chan::SPATIAL_ROWS), nest.spatial.rows as i64),
        (r(chan::SPATIAL_STRIDE), nest.spatial.row_stride),
        (r(chan::ROW_WORDS), nest.spatial.row_words as i64),
        (r(chan::DEPTH), nest.dims.len() as i64),
    ];
    for (i, d) in nest.dims.iter().enumerate() {
        w.push((r(chan::bound(i)), d.bound as i64));
        w.push((r(chan::stride(i)), d.stride));
    }
    w
}

fn dims(list: &[(usize, usize)]) -> Vec<LoopDim> {
    list.iter().map(|&(b, s)| LoopDim::new(b, s as i64)).collect()
}

/// Unit tile of eight i8 rows, one bank word each.
fn tile_rows(pitch: usize, words: usize) -> SpatialPattern {
    SpatialPattern { rows: UNIT, row_stride: pitch as i64, row_words: words }
}

/// A, B and C nests of an `M x K x N` matmul on pitched matrices, in the
/// datapath's N-outer, M-middle, K-inner tile order.
pub fn gemm_nests(a: &MatView, b: &MatView, c: &MatView, m: usize, k: usize, n: usize) -> [LoopNest; 3] {
    let (mb, kb, nb) = (m.div_ceil(UNIT), k.div_ceil(UNIT), n.div_ceil(UNIT));
    let (pa, pb, pc) = (a.pitch, b.pitch, c.pitch);
    [
        LoopNest::new(a.offset as i64, dims(&[(nb, 0), (mb, UNIT * pa), (kb, UNIT)]), tile_rows(pa, 1)),
        LoopNest::new(b.offset as i64, dims(&[(nb, UNIT), (mb, 0), (kb, UNIT * pb)]), tile_rows(pb, 1)),
        LoopNest::new(c.offset as i64, dims(&[(nb, 4 * UNIT), (mb, UNIT * pc)]), tile_rows(pc, 4)),
    ]
}

/// B nest for a weight stored in [`LayoutKind::GemmB`] at buffer `start`.
pub fn gemm_b_nest(start: usize, b: &Layout, m: usize) -> LoopNest {
    let (mb, kb, nb) = (m.div_ceil(UNIT), b.rows.div_ceil(UNIT), b.cols.div_ceil(UNIT));
    LoopNest::new(
        (start + b.lead()) as i64,
        dims(&[(nb, 4 * UNIT * UNIT), (mb, 0), (kb, b.k_step_words() * UNIT)]),
        tile_rows(4 * UNIT, 1),
    )
}

/// Nests of a fully connected layer on the gemm: the input `x` is walked
/// as one flattened row of 8-byte chunks, each presented as a unit tile
/// whose first row is the chunk. Returns the nests and the reduction size.
pub fn fc_gemm_nests(x: &MatView, w: &MatView, y: &MatView, n: usize) -> ([LoopNest; 3], usize) {
    let nb = n.div_ceil(UNIT);
    let (a_dims, k) = if x.rows == 1 {
        (dims(&[(nb, 0), (x.cols.div_ceil(UNIT), UNIT)]), x.cols)
    } else {
        (dims(&[(nb, 0), (x.rows, x.pitch), (x.cols / UNIT, UNIT)]), x.rows * x.cols)
    };
    let kb = k.div_ceil(UNIT);
    let nests = [
        LoopNest::new(x.offset as i64, a_dims, SpatialPattern::contiguous(UNIT)),
        LoopNest::new(w.offset as i64, dims(&[(nb, UNIT), (kb, UNIT * w.pitch)]), tile_rows(w.pitch, 1)),
        LoopNest::new(y.offset as i64, dims(&[(nb, 4 * UNIT)]), tile_rows(y.pitch, 4)),
    ];
    (nests, k)
}

/// Input and output nests of a `k x k` stride-`s` max pool over an
/// `[H,W,C]` tensor stored as an `(H*W) x C` pitched matrix. Each group
/// holds eight channels of one pixel.
pub fn maxpool_nests(x: &MatView, y: &MatView, w: usize, k: usize, s: usize, bank_bytes: usize) -> [LoopNest; 2] {
    let h = x.rows / w;
    let (oh, ow) = ((h - k) / s + 1, (w - k) / s + 1);
    let e = x.dtype.bytes();
    let cb = x.cols.div_ceil(UNIT);
    let words = (UNIT * e).div_ceil(bank_bytes);
    let p = x.pitch;
    [
        LoopNest::new(
            x.offset as i64,
            dims(&[(oh, s * w * p), (ow, s * p), (cb, UNIT * e), (k, w * p), (k, p)]),
            SpatialPattern::contiguous(words),
        ),
        LoopNest::new(
            y.offset as i64,
            dims(&[(oh, ow * y.pitch), (ow, y.pitch), (cb, UNIT * e)]),
            SpatialPattern::contiguous(words),
        ),
    ]
}

fn csrw(device: &str, reg: usize, value: i64) -> ControlInstruction {
    ControlInstruction::CsrWrite { device: device.to_string(), reg, value }
}

/// Configuration writes and launch of an accelerator task.
pub fn accel_task(
    acc: &AcceleratorConfig,
    nests: &[LoopNest],
    params: &[i64],
    node: &str,
) -> Result<Vec<ControlInstruction>, CompileError> {
    let layout = CsrLayout::for_accelerator(acc);
    let mut out = Vec::new();
    for (ch, nest) in nests.iter().enumerate() {
        let max = acc.channels[ch].max_loop_depth;
        if nest.dims.len() > max {
            return Err(CompileError::NestDepthExceeded { node: node.to_string(), depth: nest.dims.len(), max });
        }
        for (reg, v) in channel_writes(&layout, ch, nest) {
            out.push(csrw(&acc.id, reg, v));
        }
    }
    for (i, &v) in params.iter().enumerate() {
        out.push(csrw(&acc.id, layout.param(i), v));
    }
    out.push(csrw(&acc.id, layout.launch, 1));
    Ok(out)
}

/// Configuration, launch and wait of a scalar task on `core`.
pub fn scalar_task(core: &str, task: &ScalarTask) -> Vec<ControlInstruction> {
    let layout = CsrLayout::scalar();
    let mut out: Vec<ControlInstruction> =
        task.encode().iter().enumerate().map(|(i, &v)| csrw(core, layout.param(i), v)).collect();
    out.push(csrw(core, layout.launch, 1));
    out.push(ControlInstruction::WaitDone { device: core.to_string() });
    out
}

/// Instructions of one compute task for iteration `iter`.
fn compute_instructions(
    g: &WorkloadGraph,
    n: usize,
    device: &Device,
    alloc: &Allocation,
    cfg: &ClusterConfig,
    iter: usize,
) -> Result<Vec<ControlInstruction>, CompileError> {
    let node = &g.nodes[n];
    let view = |t: &str| alloc.spm_view(t, iter);
    let out = view(&node.output);
    match device {
        Device::Accel(id) => {
            let acc = cfg.accelerator(id).ok_or_else(|| CompileError::NoDevice(node.id.clone()))?;
            match (&acc.kind, node.op) {
                (AcceleratorKind::Gemm { .. }, OpKind::Matmul) => {
                    let a = view(&node.inputs[0]);
                    let bl = alloc.layout(&node.inputs[1]);
                    let (m, k, nn) = (a.rows, a.cols, bl.cols);
                    let nests = if bl.kind == LayoutKind::GemmB {
                        let mut nests = gemm_nests(&a, &a, &out, m, k, nn);
                        nests[1] = gemm_b_nest(alloc.spm_addr(&node.inputs[1], iter), bl, m);
                        nests
                    } else {
                        gemm_nests(&a, &view(&node.inputs[1]), &out, m, k, nn)
                    };
                    accel_task(acc, &nests, &[m as i64, k as i64, nn as i64], &node.id)
                }
                (AcceleratorKind::Gemm { .. }, OpKind::FullyConnected) => {
                    let (x, w) = (view(&node.inputs[0]), view(&node.inputs[1]));
                    let (nests, k) = fc_gemm_nests(&x, &w, &out, w.cols);
                    accel_task(acc, &nests, &[1, k as i64, w.cols as i64], &node.id)
                }
                (AcceleratorKind::Maxpool { .. }, OpKind::Maxpool2d { kernel, stride }) => {
                    let x = view(&node.inputs[0]);
                    let w = g.tensor(&node.inputs[0]).unwrap().shape[1];
                    let nests = maxpool_nests(&x, &out, w, kernel, stride, cfg.spm.bank_bytes());
                    let params = [(kernel * kernel) as i64, x.dtype.bytes() as i64];
                    accel_task(acc, &nests, &params, &node.id)
                }
                _ => Err(CompileError::UnsupportedOp { node: node.id.clone(), op: format!("{} on {id}", node.op.name()) }),
            }
        }
        Device::Scalar(core) => {
            let op = scalar_op(&node.op)
                .ok_or_else(|| CompileError::UnsupportedOp { node: node.id.clone(), op: node.op.name().into() })?;
            let mut inputs = [None, None];
            for (slot, t) in node.inputs.iter().enumerate() {
                inputs[slot] = Some(view(t));
            }
            let width = match node.op {
                OpKind::Maxpool2d { .. } => g.tensor(&node.inputs[0]).unwrap().shape[1],
                _ => 0,
            };
            Ok(scalar_task(core, &ScalarTask { op, inputs, output: out, width }))
        }
        Device::Dma(_) => {
            let src = alloc.spm_addr(&node.inputs[0], iter);
            let dst = alloc.spm_addr(&node.output, iter);
            let pitches = (alloc.layout(&node.inputs[0]).pitch, alloc.layout(&node.output).pitch);
            Ok(im2col_descriptors(g, node, src, dst, Some(pitches)).into_iter().map(ControlInstruction::DmaStart).collect())
        }
    }
}

fn transfer(kind: &TaskKind, alloc: &Allocation, iter: usize) -> Option<ControlInstruction> {
    let (t, load) = match kind {
        TaskKind::Load(t) => (t, true),
        TaskKind::Store(t) => (t, false),
        TaskKind::Compute(_) => return None,
    };
    let bytes = alloc.layout(t).bytes();
    let (ext, spm) = (alloc.ext_addr(t, iter), alloc.spm_addr(t, iter) as u64);
    let d = if load { DmaDescriptor::linear(ext, spm, bytes) } else { DmaDescriptor::linear(spm, ext, bytes) };
    Some(ControlInstruction::DmaStart(d))
}

/// Emits one program per control core in config order.
pub fn codegen(
    g: &WorkloadGraph,
    sched: &PipelineSchedule,
    alloc: &Allocation,
    cfg: &ClusterConfig,
) -> Result<Vec<KernelProgram>, CompileError> {
    let cores: Vec<&str> = cfg.control_cores.iter().map(|c| c.id.as_str()).collect();
    let mut progs: Vec<KernelProgram> = cores.iter().map(|c| KernelProgram::new(*c)).collect();
    let mut emit_step = |items: &[StepItem], barrier: u64| -> Result<(), CompileError> {
        for (ci, core) in cores.iter().enumerate() {
            let mine: Vec<&StepItem> =
                items.iter().filter(|it| owner_core(cfg, &sched.tasks[it.task].device) == *core).collect();
            let mut accels: Vec<&str> = Vec::new();
            let p = &mut progs[ci];
            for pass in 0..3 {
                for it in &mine {
                    let task = &sched.tasks[it.task];
                    let class = match task.device {
                        Device::Accel(_) => 0,
                        Device::Scalar(_) => 1,
                        Device::Dma(_) => 2,
                    };
                    if class != pass {
                        continue;
                    }
                    let ins = match &task.kind {
                        TaskKind::Compute(n) => compute_instructions(g, *n, &task.device, alloc, cfg, it.iter)?,
                        kind => transfer(kind, alloc, it.iter).into_iter().collect(),
                    };
                    p.instructions.extend(ins);
                    if let Device::Accel(id) = &task.device {
                        if !accels.contains(&id.as_str()) {
                            accels.push(id);
                        }
                    }
                }
            }
            if mine.iter().any(|it| matches!(sched.tasks[it.task].device, Device::Dma(_))) {
                p.push(ControlInstruction::WaitDma);
            }
            for a in accels {
                p.push(ControlInstruction::WaitDone { device: a.to_string() });
            }
            p.push(ControlInstruction::BarrierArrive(barrier));
        }
        Ok(())
    };
    if !sched.preamble.is_empty() {
        let items: Vec<StepItem> = sched.preamble.iter().map(|&task| StepItem { task, iter: 0 }).collect();
        emit_step(&items, 0)?;
    }
    for step in &sched.steps {
        emit_step(&step.items, step.barrier)?;
    }
    Ok(progs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streamer::SpmGeometry;
    use crate::tensor::DType;

    fn mat(offset: usize, rows: usize, cols: usize, pitch: usize, dtype: DType) -> MatView {
        MatView { offset, pitch, rows, cols, dtype }
    }

    /// Brute-force order of unit tiles in the datapath: N outer, M, K inner.
    fn tile_order(m: usize, k: usize, n: usize) -> Vec<(usize, usize, usize)> {
        let mut v = Vec::new();
        for j in 0..n.div_ceil(8) {
            for i in 0..m.div_ceil(8) {
                for p in 0..k.div_ceil(8) {
                    v.push((i, p, j));
                }
            }
        }
        v
    }

    #[test]
    fn gemm_nests_follow_tile_order() {
        let (m, k, n) = (16, 16, 16);
        let a = mat(0, m, k, 24, DType::I8);
        let b = mat(1024, k, n, 24, DType::I8);
        let c = mat(4096, m, n, 96, DType::I32);
        let [na, nb, nc] = gemm_nests(&a, &b, &c, m, k, n);
        assert_eq!(na.dims.len(), 3);
        let order = tile_order(m, k, n);
        assert_eq!(order.len(), 8);
        let want_a: Vec<i64> = order.iter().map(|&(i, p, _)| (i * 8 * 24 + p * 8) as i64).collect();
        let want_b: Vec<i64> = order.iter().map(|&(_, p, j)| (1024 + p * 8 * 24 + j * 8) as i64).collect();
        assert_eq!(na.address_sequence(), want_a);
        assert_eq!(nb.address_sequence(), want_b);
        assert_eq!(nc.address_sequence(), vec![4096, 4096 + 8 * 96, 4096 + 32, 4096 + 32 + 8 * 96]);
    }

    #[test]
    fn single_matmul_program_shape() {
        let cfg = ClusterConfig::bundled("fig6d").unwrap();
        let acc = cfg.accelerator("gemm0").unwrap();
        let a = mat(0, 8, 8, 8, DType::I8);
        let b = mat(64, 8, 8, 8, DType::I8);
        let c = mat(128, 8, 8, 32, DType::I32);
        let nests = gemm_nests(&a, &b, &c, 8, 8, 8);
        assert!(nests.iter().all(|n| n.iterations() == 1));
        let ins = accel_task(acc, &nests, &[8, 8, 8], "mm").unwrap();
        assert_eq!(ins.len(), (5 + 6) * 2 + (5 + 4) + 3 + 1);
        let layout = CsrLayout::for_accelerator(acc);
        assert_eq!(ins.last(), Some(&csrw("gemm0", layout.launch, 1)));
        let geo = SpmGeometry { bank_bytes: 8, num_banks: 32, capacity: cfg.capacity_bytes };
        let mut regs = vec![0i64; layout.len()];
        for i in &ins {
            if let ControlInstruction::CsrWrite { reg, value, .. } = i {
                regs[*reg] = *value;
            }
        }
        for (ch, nest) in nests.iter().enumerate() {
            let decoded = LoopNest::from_csr(layout.channel_slice(&regs, ch), &acc.channels[ch], geo).unwrap();
            assert_eq!(&decoded, nest);
        }
    }

    #[test]
    fn maxpool_nest_visits_windows() {
        let x = mat(0, 16, 8, 8, DType::I8);
        let y = mat(512, 4, 8, 8, DType::I8);
        let [i, o] = maxpool_nests(&x, &y, 4, 2, 2, 8);
        let seq = i.address_sequence();
        assert_eq!(seq.len(), 16);
        assert_eq!(&seq[..4], &[0, 8, 32, 40]);
        assert_eq!(o.address_sequence(), vec![512, 520, 528, 536]);
    }

    #[test]
    fn too_deep_nest_rejected() {
        let cfg = ClusterConfig::bundled("fig6d").unwrap();
        let acc = cfg.accelerator("maxpool0").unwrap();
        let deep = LoopNest::new(0, vec![LoopDim::new(1, 0); 7], SpatialPattern::contiguous(1));
        let err = accel_task(acc, &[deep.clone(), deep], &[1, 1], "p").unwrap_err();
        assert!(matches!(err, CompileError::NestDepthExceeded { depth: 7, max: 6, .. }));
    }
}
