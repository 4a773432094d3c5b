// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Matmul tiling and the tiled-matmul programs of the roofline sweep.
//!
//! Every tile task loads its own A and B tiles from external memory,
//! computes the partial product on the gemm and stores the partial C
//! back. Tasks are processed `group` at a time in a three-stage software
//! pipeline (load, compute, store) over two parity buffer sets.
//!
//! Operands use the blocked layout: 8x8 unit tiles stored as contiguous
//! 64-byte blocks, A ordered by (mb, kb) and B by (nb, kb), C as 256-byte
//! i32 blocks ordered by (mb, nb). Both operand streams then advance one
//! bank octet per cycle, and a fixed octet offset between the A and B
//! bases keeps them from colliding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::codegen::accel_task;
use super::CompileError;
use crate::config::{AcceleratorKind, ClusterConfig, UNIT};
use crate::control::{ControlInstruction, KernelProgram};
use crate::dma::{DmaDescriptor, EXT_BASE};
use crate::streamer::{LoopDim, LoopNest, SpatialPattern};
use crate::tensor::{DType, Tensor};

/// Bytes of one i8 unit tile.
const TILE_I8: usize = UNIT * UNIT;
/// Bytes of one i32 unit tile.
const TILE_I32: usize = 4 * UNIT * UNIT;
/// Target external traffic per pipeline step.
const STEP_BYTES: usize = 16 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileShape {
    pub mt: usize,
    pub kt: usize,
    pub nt: usize,
}

impl TileShape {
    pub fn new(mt: usize, kt: usize, nt: usize) -> Self {
        TileShape { mt, kt, nt }
    }

    pub fn a_bytes(&self) -> usize {
        self.mt * self.kt
    }

    pub fn b_bytes(&self) -> usize {
        self.kt * self.nt
    }

    pub fn c_bytes(&self) -> usize {
        4 * self.mt * self.nt
    }

    /// External bytes moved per task.
    pub fn task_bytes(&self) -> usize {
        self.a_bytes() + self.b_bytes() + self.c_bytes()
    }

    pub fn ops(&self) -> u64 {
        2 * (self.mt * self.kt * self.nt) as u64
    }

    /// Operations per external byte.
    pub fn intensity(&self) -> f64 {
        self.ops() as f64 / self.task_bytes() as f64
    }

    fn blocks(&self) -> (usize, usize, usize) {
        (self.mt / UNIT, self.kt / UNIT, self.nt / UNIT)
    }
}

/// Tiling of an `M x K x N` matmul.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilePlan {
    pub tile: TileShape,
    /// Tile counts along M, K and N.
    pub counts: (usize, usize, usize),
}

impl TilePlan {
    pub fn tasks(&self) -> usize {
        self.counts.0 * self.counts.1 * self.counts.2
    }
}

/// Picks the largest tile (by volume, multiples of 8, no larger than the
/// padded problem) whose double-buffered A, B and C blocks fit the
/// scratchpad. Ties prefer larger K, then larger M.
pub fn tile_matmul(m: usize, k: usize, n: usize, cfg: &ClusterConfig) -> Result<TilePlan, CompileError> {
    if m == 0 || k == 0 || n == 0 {
        return Err(CompileError::InvalidGraph("matmul dimensions must be at least 1".into()));
    }
    let (mp, kp, np) = (m.next_multiple_of(UNIT), k.next_multiple_of(UNIT), n.next_multiple_of(UNIT));
    let cap = cfg.capacity_bytes;
    let mut best: Option<(usize, usize, usize, TileShape)> = None;
    for mt in (UNIT..=mp).step_by(UNIT) {
        for kt in (UNIT..=kp).step_by(UNIT) {
            for nt in (UNIT..=np).step_by(UNIT) {
                let t = TileShape::new(mt, kt, nt);
                if 2 * t.task_bytes() > cap {
                    continue;
                }
                let key = (mt * kt * nt, kt, mt, t);
                if best.is_none_or(|b| (key.0, key.1, key.2) > (b.0, b.1, b.2)) {
                    best = Some(key);
                }
            }
        }
    }
    let (_, _, _, tile) = best.ok_or(CompileError::CapacityExceeded {
        tensor: "matmul tile".into(),
        needed: 2 * TileShape::new(UNIT, UNIT, UNIT).task_bytes(),
        available: cap,
    })?;
    Ok(TilePlan { tile, counts: (mp.div_ceil(tile.mt), kp.div_ceil(tile.kt), np.div_ceil(tile.nt)) })
}

/// Tasks per pipeline step for `tile`: about [`STEP_BYTES`] of traffic,
/// at least one, and small enough for two parity sets.
pub fn group_size(tile: TileShape, cfg: &ClusterConfig) -> usize {
    let fit = cfg.capacity_bytes / (2 * tile.task_bytes() + 2 * TILE_I8);
    (STEP_BYTES / tile.task_bytes()).clamp(1, fit.max(1))
}

/// Stores a row-major i8 matrix as unit tiles ordered by (row block,
/// column block) when `row_major_blocks`, else by (column block, row
/// block).
pub fn to_blocked(t: &Tensor, row_major_blocks: bool) -> Vec<u8> {
    let (r, c) = t.as_matrix();
    let (rb, cb) = (r / UNIT, c / UNIT);
    let mut out = vec![0u8; r * c];
    for i in 0..r {
        for j in 0..c {
            let (bi, bj) = (i / UNIT, j / UNIT);
            let block = if row_major_blocks { bi * cb + bj } else { bj * rb + bi };
            out[block * TILE_I8 + (i % UNIT) * UNIT + j % UNIT] = t.data[i * c + j] as i8 as u8;
        }
    }
    out
}

/// Reads an i32 matrix stored as 256-byte unit tiles ordered by (row
/// block, column block).
pub fn from_blocked_i32(bytes: &[u8], rows: usize, cols: usize) -> Tensor {
    let cb = cols / UNIT;
    let mut data = vec![0i32; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let at = ((i / UNIT) * cb + j / UNIT) * TILE_I32 + ((i % UNIT) * UNIT + j % UNIT) * 4;
            data[i * cols + j] = DType::I32.read(&bytes[at..at + 4]);
        }
    }
    Tensor::from_vec(&[rows, cols], DType::I32, data)
}

fn dims(list: &[(usize, usize)]) -> Vec<LoopDim> {
    list.iter().map(|&(b, s)| LoopDim::new(b, s as i64)).collect()
}

/// Streamer nests of one step: `group` tasks whose blocks start at
/// `a`, `b` and `c`.
pub fn roofline_nests(tile: TileShape, group: usize, a: usize, b: usize, c: usize) -> [LoopNest; 3] {
    let (mb, kb, nb) = tile.blocks();
    let (ab, bb, cb) = (tile.a_bytes(), tile.b_bytes(), tile.c_bytes());
    [
        LoopNest::new(
            a as i64,
            dims(&[(group, ab), (nb, 0), (mb, kb * TILE_I8), (kb, TILE_I8)]),
            SpatialPattern::contiguous(UNIT),
        ),
        LoopNest::new(
            b as i64,
            dims(&[(group, bb), (nb, kb * TILE_I8), (mb, 0), (kb, TILE_I8)]),
            SpatialPattern::contiguous(UNIT),
        ),
        LoopNest::new(c as i64, dims(&[(group, cb), (nb, TILE_I32), (mb, nb * TILE_I32)]), SpatialPattern::contiguous(4 * UNIT)),
    ]
}

/// A tiled-matmul run ready for simulation.
#[derive(Debug, Clone)]
pub struct RooflineRun {
    pub tile: TileShape,
    pub group: usize,
    pub steps: usize,
    pub programs: Vec<KernelProgram>,
    pub ext: Vec<u8>,
    /// Per task: the A and B operands.
    pub operands: Vec<(Tensor, Tensor)>,
    /// External offset of the first partial C.
    pub c_offset: usize,
}

impl RooflineRun {
    pub fn tasks(&self) -> usize {
        self.operands.len()
    }

    /// Useful operations of the whole run.
    pub fn ops(&self) -> u64 {
        self.tile.ops() * self.tasks() as u64
    }

    /// External bytes moved by the whole run.
    pub fn ext_bytes(&self) -> u64 {
        (self.tile.task_bytes() * self.tasks()) as u64
    }

    /// Partial C of `task` read from a final external image.
    pub fn partial(&self, ext: &[u8], task: usize) -> Tensor {
        let at = self.c_offset + task * self.tile.c_bytes();
        from_blocked_i32(&ext[at..at + self.tile.c_bytes()], self.tile.mt, self.tile.nt)
    }

    /// Index of the first task whose partial product is wrong.
    pub fn first_mismatch(&self, ext: &[u8]) -> Option<usize> {
        (0..self.tasks()).find(|&i| {
            let (a, b) = &self.operands[i];
            crate::accel::golden::gemm_golden(a, b).map_or(true, |g| self.partial(ext, i) != g)
        })
    }
}

/// Builds the pipelined programs for `steps` steps of `tile` tasks on the
/// first gemm of `cfg`, with operands drawn from `seed`.
pub fn roofline_run(tile: TileShape, steps: usize, cfg: &ClusterConfig, seed: u64) -> Result<RooflineRun, CompileError> {
    if tile.mt % UNIT != 0 || tile.kt % UNIT != 0 || tile.nt % UNIT != 0 || steps == 0 {
        return Err(CompileError::InvalidGraph("tile dimensions must be positive multiples of 8".into()));
    }
    let acc = cfg
        .accelerators
        .iter()
        .find(|a| matches!(a.kind, AcceleratorKind::Gemm { .. }))
        .ok_or_else(|| CompileError::NoDevice("roofline sweep needs a gemm".into()))?;
    let gemm_core = cfg
        .control_cores
        .iter()
        .find(|c| c.accelerators.contains(&acc.id))
        .ok_or_else(|| CompileError::NoDevice(acc.id.clone()))?;
    let dma_core = cfg
        .control_cores
        .iter()
        .find(|c| !c.dma.is_empty())
        .ok_or_else(|| CompileError::NoDevice("dma transfers".into()))?;
    let group = group_size(tile, cfg);
    let tasks = group * steps;

    // Two parity sets, each A | B | C for `group` tasks. The B base sits
    // one or two octets after an A-aligned line so both streams rotate in
    // step without meeting.
    let (ga, gb, gc) = (group * tile.a_bytes(), group * tile.b_bytes(), group * tile.c_bytes());
    let kb = tile.kt / UNIT;
    let shift = if kb % 4 == 2 { 1 } else { 2 } * TILE_I8;
    let line = 4 * TILE_I8;
    let set_bytes = (ga.next_multiple_of(line) + shift + gb).next_multiple_of(line) + gc;
    if 2 * set_bytes > cfg.capacity_bytes {
        return Err(CompileError::CapacityExceeded { tensor: "tile set".into(), needed: 2 * set_bytes, available: cfg.capacity_bytes });
    }
    let set = |p: usize| {
        let base = p * set_bytes.next_multiple_of(line);
        let b = base + ga.next_multiple_of(line) + shift;
        (base, b, (b + gb).next_multiple_of(line))
    };

    // External image: all A blocks, then all B blocks, then partial C slots.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rand_i8 = |r: usize, c: usize| {
        Tensor::from_vec(&[r, c], DType::I8, (0..r * c).map(|_| rng.gen_range(-128..=127)).collect())
    };
    let operands: Vec<(Tensor, Tensor)> =
        (0..tasks).map(|_| (rand_i8(tile.mt, tile.kt), rand_i8(tile.kt, tile.nt))).collect();
    let (a_off, b_off) = (0, tasks * tile.a_bytes());
    let c_off = b_off + tasks * tile.b_bytes();
    let mut ext = vec![0u8; c_off + tasks * tile.c_bytes()];
    for (i, (a, b)) in operands.iter().enumerate() {
        let at = a_off + i * tile.a_bytes();
        ext[at..at + tile.a_bytes()].copy_from_slice(&to_blocked(a, true));
        let at = b_off + i * tile.b_bytes();
        ext[at..at + tile.b_bytes()].copy_from_slice(&to_blocked(b, false));
    }

    let mut gp = KernelProgram::new(gemm_core.id.clone());
    let mut dp = KernelProgram::new(dma_core.id.clone());
    let same = gemm_core.id == dma_core.id;
    let ext_addr = |off: usize| EXT_BASE + off as u64;
    for s in 0..steps + 2 {
        let mut g_ins = Vec::new();
        if s >= 1 && s <= steps {
            let (a, b, c) = set((s - 1) % 2);
            let nests = roofline_nests(tile, group, a, b, c);
            let n = (group * tile.nt) as i64;
            g_ins = accel_task(acc, &nests, &[tile.mt as i64, tile.kt as i64, n], "roofline")?;
            g_ins.push(ControlInstruction::WaitDone { device: acc.id.clone() });
        }
        let mut d_ins = Vec::new();
        if s >= 2 {
            let t = s - 2;
            let (_, _, c) = set(t % 2);
            d_ins.push(ControlInstruction::DmaStart(DmaDescriptor::linear(c as u64, ext_addr(c_off + t * gc), gc)));
        }
        if s < steps {
            let (a, b, _) = set(s % 2);
            d_ins.push(ControlInstruction::DmaStart(DmaDescriptor::linear(ext_addr(a_off + s * ga), a as u64, ga)));
            d_ins.push(ControlInstruction::DmaStart(DmaDescriptor::linear(ext_addr(b_off + s * gb), b as u64, gb)));
        }
        if !d_ins.is_empty() {
            d_ins.push(ControlInstruction::WaitDma);
        }
        let barrier = ControlInstruction::BarrierArrive(s as u64);
        if same {
            // Launch first so the compute overlaps the transfers.
            let wait = g_ins.pop();
            gp.instructions.extend(g_ins.into_iter().chain(d_ins).chain(wait));
            gp.push(barrier);
        } else {
            gp.instructions.extend(g_ins);
            gp.push(barrier.clone());
            dp.instructions.extend(d_ins);
            dp.push(barrier);
        }
    }
    let programs = if same { vec![gp] } else { vec![gp, dp] };
    Ok(RooflineRun { tile, group, steps, programs, ext, operands, c_offset: c_off })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intensity_formula() {
        assert!((TileShape::new(8, 8, 8).intensity() - 1024.0 / 384.0).abs() < 1e-12);
        assert!((TileShape::new(64, 64, 64).intensity() - 524288.0 / 24576.0).abs() < 1e-12);
        assert!((TileShape::new(32, 64, 32).intensity() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn tiler_single_tile_for_small_problem() {
        let cfg = ClusterConfig::bundled("fig6c").unwrap();
        let p = tile_matmul(8, 8, 8, &cfg).unwrap();
        assert_eq!(p.tile, TileShape::new(8, 8, 8));
        assert_eq!(p.tasks(), 1);
        let p = tile_matmul(512, 512, 512, &cfg).unwrap();
        assert!(2 * p.tile.task_bytes() <= cfg.capacity_bytes);
        assert!(p.tile.mt * p.tile.kt * p.tile.nt >= 64 * 64 * 64);
    }

    #[test]
    fn blocked_layout_round_trip() {
        let t = Tensor::from_vec(&[16, 16], DType::I8, (0..256).map(|i| (i % 200) - 100).collect());
        let b = to_blocked(&t, true);
        assert_eq!(b[64], t.data[8] as u8);
        let bt = to_blocked(&t, false);
        assert_eq!(bt[64], t.data[8 * 16] as u8);
    }

    #[test]
    fn nests_cover_every_task_block() {
        let t = TileShape::new(16, 32, 16);
        let [a, b, c] = roofline_nests(t, 3, 0, 4096, 8192);
        assert_eq!(a.iterations(), 3 * 2 * 2 * 4);
        assert_eq!(b.iterations(), a.iterations());
        assert_eq!(c.iterations(), 3 * 4);
        let mut seen = c.address_sequence();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 12);
    }
}
