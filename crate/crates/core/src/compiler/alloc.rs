// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Tensor layouts and static scratchpad allocation.
//!
//! Tensors are stored as pitched matrices: rows are the product of the
//! leading dimensions, columns the last dimension. Rows are padded to a
//! multiple of eight so that unit tiles never leave the buffer, and the
//! pitch is skewed so that the eight rows of a tile fall into distinct
//! banks. External memory uses the same layout, which turns loads and
//! stores into single linear transfers.
//!
//! Gemm operands get layouts that keep the A and B tile streams in
//! disjoint banks. A word pitch of 4 mod 8 puts every A tile in one
//! residue class of banks mod 4, advancing by one class per K step.
//! Constant B operands use [`LayoutKind::GemmB`], whose tiles step
//! through the classes in lockstep two classes away.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::graph::{OpKind, Role, WorkloadGraph};
use super::place::{Device, Placement};
use super::CompileError;
use crate::config::{AcceleratorKind, ClusterConfig, UNIT};
use crate::dma::EXT_BASE;
use crate::tensor::{DType, MatView, Tensor};

pub const ALIGN: usize = 64;
/// Bytes kept free at the top of the scratchpad; unit-tile reads of the
/// last rows of a buffer may run up to 56 bytes past it.
pub const GUARD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutKind {
    Pitched,
    /// Unit tile `(kb, nb)` of an i8 `K x N` matrix starts at word
    /// `kb * (1 + 32 * Nb) + 32 * nb`, its rows four words apart. Data
    /// starts [`GEMM_B_LEAD`] bytes into the buffer.
    GemmB,
}

/// Offset of the first element in a [`LayoutKind::GemmB`] buffer.
pub const GEMM_B_LEAD: usize = 2 * UNIT;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub rows: usize,
    pub cols: usize,
    pub padded_rows: usize,
    pub pitch: usize,
    pub dtype: DType,
    pub kind: LayoutKind,
}

/// Pitch of an i8 gemm A operand: whole words, 4 mod 8 of them.
pub fn a_pitch(cols: usize) -> usize {
    let q = cols.div_ceil(UNIT).max(1);
    (q + (12 - q % 8) % 8) * UNIT
}

/// Row pitch in bytes for `cols` elements of `dtype`.
pub fn pitch_for(cols: usize, dtype: DType) -> usize {
    match dtype {
        DType::I8 => {
            let p = cols.next_multiple_of(UNIT);
            if (p / UNIT).trailing_zeros() > 2 {
                p + UNIT
            } else {
                p
            }
        }
        DType::I32 => {
            let p = (cols * 4).next_multiple_of(4 * UNIT);
            if (p / (4 * UNIT)) % 2 == 0 {
                p + 4 * UNIT
            } else {
                p
            }
        }
    }
}

impl Layout {
    pub fn new(rows: usize, cols: usize, dtype: DType) -> Self {
        Self::pitched(rows, cols, dtype, pitch_for(cols, dtype))
    }

    pub fn pitched(rows: usize, cols: usize, dtype: DType, pitch: usize) -> Self {
        Layout { rows, cols, padded_rows: rows.next_multiple_of(UNIT), pitch, dtype, kind: LayoutKind::Pitched }
    }

    pub fn gemm_b(rows: usize, cols: usize) -> Self {
        let padded_rows = rows.next_multiple_of(UNIT);
        Layout { rows, cols, padded_rows, pitch: 0, dtype: DType::I8, kind: LayoutKind::GemmB }
    }

    /// Word stride between consecutive K tiles of a gemm B layout.
    pub fn k_step_words(&self) -> usize {
        1 + 4 * UNIT * self.cols.div_ceil(UNIT)
    }

    /// Bytes from the buffer start to the first element.
    pub fn lead(&self) -> usize {
        match self.kind {
            LayoutKind::Pitched => 0,
            LayoutKind::GemmB => GEMM_B_LEAD,
        }
    }

    pub fn bytes(&self) -> usize {
        match self.kind {
            LayoutKind::Pitched => self.padded_rows * self.pitch,
            LayoutKind::GemmB => {
                let (kb, nb) = (self.padded_rows / UNIT, self.cols.div_ceil(UNIT));
                let last = (kb - 1) * self.k_step_words() + 4 * UNIT * (nb - 1) + 4 * (UNIT - 1);
                self.lead() + (last + 1) * UNIT
            }
        }
    }

    /// Byte offset of element `(r, c)` from the buffer start.
    pub fn element_offset(&self, r: usize, c: usize) -> usize {
        let e = self.dtype.bytes();
        match self.kind {
            LayoutKind::Pitched => r * self.pitch + c * e,
            LayoutKind::GemmB => {
                let word = (r / UNIT) * self.k_step_words() + 4 * UNIT * (c / UNIT) + 4 * (r % UNIT);
                self.lead() + word * UNIT + c % UNIT
            }
        }
    }

    /// Pitched view of a buffer starting at `offset`.
    pub fn view(&self, offset: usize) -> MatView {
        debug_assert_eq!(self.kind, LayoutKind::Pitched, "view of a gemm B layout");
        MatView { offset, pitch: self.pitch, rows: self.rows, cols: self.cols, dtype: self.dtype }
    }

    /// Stores the matrix form of `t` into a buffer starting at `start`.
    pub fn write(&self, t: &Tensor, mem: &mut [u8], start: usize) {
        let e = self.dtype.bytes();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let at = start + self.element_offset(r, c);
                self.dtype.write(t.data[r * self.cols + c], &mut mem[at..at + e]);
            }
        }
    }

    /// Reads the `rows x cols` matrix held in a buffer starting at `start`.
    pub fn read(&self, mem: &[u8], start: usize) -> Tensor {
        let e = self.dtype.bytes();
        let mut data = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let at = start + self.element_offset(r, c);
                data.push(self.dtype.read(&mem[at..at + e]));
            }
        }
        Tensor::from_vec(&[self.rows, self.cols], self.dtype, data)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Buffer {
    pub tensor: String,
    pub copy: usize,
    pub offset: usize,
    pub bytes: usize,
}

/// External region of a tensor: `count` slots of `stride` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtRegion {
    pub tensor: String,
    pub offset: usize,
    pub stride: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Allocation {
    pub layouts: HashMap<String, Layout>,
    pub buffers: Vec<Buffer>,
    pub ext: Vec<ExtRegion>,
    pub ext_len: usize,
    pub capacity: usize,
}

/// First-fit allocator over a sorted free list.
#[derive(Debug, Clone)]
pub struct FreeList {
    free: Vec<(usize, usize)>,
}

impl FreeList {
    pub fn new(capacity: usize) -> Self {
        FreeList { free: vec![(0, capacity)] }
    }

    pub fn alloc(&mut self, bytes: usize) -> Option<usize> {
        for i in 0..self.free.len() {
            let (start, end) = self.free[i];
            let at = start.next_multiple_of(ALIGN);
            if at + bytes <= end {
                if at > start {
                    self.free[i] = (start, at);
                    self.free.insert(i + 1, (at + bytes, end));
                } else {
                    self.free[i] = (at + bytes, end);
                }
                self.free.retain(|&(s, e)| e > s);
                return Some(at);
            }
        }
        None
    }

    pub fn free(&mut self, offset: usize, bytes: usize) {
        self.free.push((offset, offset + bytes));
        self.free.sort_unstable();
        let mut merged: Vec<(usize, usize)> = Vec::new();
        for (s, e) in self.free.drain(..) {
            match merged.last_mut() {
                Some(last) if last.1 >= s => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        self.free = merged;
    }

    pub fn largest(&self) -> usize {
        self.free.iter().map(|&(s, e)| e - s.next_multiple_of(ALIGN).min(e)).max().unwrap_or(0)
    }
}

impl Allocation {
    pub fn layout(&self, tensor: &str) -> &Layout {
        &self.layouts[tensor]
    }

    pub fn copies(&self, tensor: &str) -> usize {
        self.buffers.iter().filter(|b| b.tensor == tensor).count()
    }

    /// Scratchpad offset of `tensor` for pipeline iteration `iter`.
    pub fn spm_addr(&self, tensor: &str, iter: usize) -> usize {
        let copies = self.copies(tensor);
        let copy = iter % copies;
        self.buffers.iter().find(|b| b.tensor == tensor && b.copy == copy).expect("buffer allocated").offset
    }

    pub fn spm_view(&self, tensor: &str, iter: usize) -> MatView {
        self.layout(tensor).view(self.spm_addr(tensor, iter))
    }

    pub fn ext_region(&self, tensor: &str) -> Option<&ExtRegion> {
        self.ext.iter().find(|r| r.tensor == tensor)
    }

    /// Offset into the external image for `tensor` at `iter`.
    pub fn ext_offset(&self, tensor: &str, iter: usize) -> usize {
        let r = self.ext_region(tensor).expect("tensor has an external region");
        r.offset + r.stride * if r.count == 1 { 0 } else { iter }
    }

    pub fn ext_addr(&self, tensor: &str, iter: usize) -> u64 {
        EXT_BASE + self.ext_offset(tensor, iter) as u64
    }

    pub fn spm_used(&self) -> usize {
        self.buffers.iter().map(|b| b.offset + b.bytes).max().unwrap_or(0)
    }

    /// Human-readable allocation map.
    pub fn report(&self) -> String {
        let mut s = String::from("# scratchpad\ntensor,copy,offset,bytes,rows,cols,pitch,dtype\n");
        for b in &self.buffers {
            let l = &self.layouts[&b.tensor];
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{:?}",
                b.tensor, b.copy, b.offset, b.bytes, l.rows, l.cols, l.pitch, l.dtype
            );
        }
        let _ = writeln!(s, "# used {} of {} bytes", self.spm_used(), self.capacity);
        s.push_str("# external\ntensor,offset,stride,count\n");
        for r in &self.ext {
            let _ = writeln!(s, "{},{},{},{}", r.tensor, r.offset, r.stride, r.count);
        }
        let _ = writeln!(s, "# external image {} bytes", self.ext_len);
        s
    }
}

/// Plain pitched layouts for every tensor.
pub fn default_layouts(graph: &WorkloadGraph) -> HashMap<String, Layout> {
    graph
        .tensors
        .iter()
        .map(|t| {
            let (r, c) = t.matrix();
            (t.id.clone(), Layout::new(r, c, t.dtype))
        })
        .collect()
}

/// Layouts adapted to the placement: i8 A operands of gemm matmuls get
/// [`a_pitch`], constant i8 weights used only as gemm B operands get
/// [`LayoutKind::GemmB`].
pub fn choose_layouts(graph: &WorkloadGraph, placement: &Placement, cfg: &ClusterConfig) -> HashMap<String, Layout> {
    let mut layouts = default_layouts(graph);
    let on_gemm = |n: usize| match &placement.devices[n] {
        Device::Accel(id) => {
            graph.nodes[n].op == OpKind::Matmul
                && cfg.accelerator(id).is_some_and(|a| matches!(a.kind, AcceleratorKind::Gemm { .. }))
        }
        _ => false,
    };
    for t in &graph.tensors {
        if t.dtype != DType::I8 {
            continue;
        }
        let uses: Vec<(usize, usize)> = graph
            .nodes
            .iter()
            .enumerate()
            .flat_map(|(n, node)| node.inputs.iter().enumerate().filter(|(_, i)| **i == t.id).map(move |(s, _)| (n, s)))
            .collect();
        let (r, c) = t.matrix();
        let constant = t.role == Role::Weight && graph.producer(&t.id).is_none();
        if constant && !uses.is_empty() && uses.iter().all(|&(n, s)| s == 1 && on_gemm(n)) {
            layouts.insert(t.id.clone(), Layout::gemm_b(r, c));
        } else if uses.iter().any(|&(n, s)| s == 0 && on_gemm(n)) {
            layouts.insert(t.id.clone(), Layout::pitched(r, c, t.dtype, a_pitch(c)));
        }
    }
    layouts
}

/// Allocates `copies[t]` scratchpad buffers for every tensor (one if
/// absent), inputs first and then node outputs in topological order, and
/// lays out the external image: inputs, then stored outputs, `batch` slots
/// each except for weights.
pub fn allocate(
    graph: &WorkloadGraph,
    layouts: HashMap<String, Layout>,
    copies: &HashMap<String, usize>,
    batch: usize,
    cfg: &ClusterConfig,
) -> Result<Allocation, CompileError> {
    let capacity = cfg.capacity_bytes.saturating_sub(GUARD);
    let mut alloc = Allocation { capacity, layouts, ..Default::default() };
    let mut order: Vec<&str> = graph.inputs().iter().map(|t| t.id.as_str()).collect();
    for i in graph.topo_order()? {
        order.push(&graph.nodes[i].output);
    }
    let mut free = FreeList::new(capacity);
    for id in &order {
        let bytes = alloc.layouts[*id].bytes();
        for copy in 0..copies.get(*id).copied().unwrap_or(1).max(1) {
            let offset = free.alloc(bytes).ok_or_else(|| CompileError::CapacityExceeded {
                tensor: id.to_string(),
                needed: bytes,
                available: free.largest(),
            })?;
            alloc.buffers.push(Buffer { tensor: id.to_string(), copy, offset, bytes });
        }
    }
    let mut ext_at = 0;
    let mut regions: Vec<(&str, usize)> = graph
        .inputs()
        .iter()
        .map(|t| (t.id.as_str(), if t.role == Role::Weight { 1 } else { batch }))
        .collect();
    regions.extend(graph.outputs().iter().map(|t| (t.id.as_str(), batch)));
    for (id, count) in regions {
        let stride = alloc.layouts[id].bytes().next_multiple_of(ALIGN);
        alloc.ext.push(ExtRegion { tensor: id.to_string(), offset: ext_at, stride, count });
        ext_at += stride * count;
    }
    alloc.ext_len = ext_at.max(ALIGN);
    Ok(alloc)
}

/// Pairs of buffers whose byte ranges intersect.
pub fn overlapping_buffers(alloc: &Allocation) -> Vec<(usize, usize)> {
    let b = &alloc.buffers;
    let mut out = Vec::new();
    for i in 0..b.len() {
        for j in i + 1..b.len() {
            if b[i].offset < b[j].offset + b[j].bytes && b[j].offset < b[i].offset + b[i].bytes {
                out.push((i, j));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pitches_skew_banks() {
        assert_eq!(pitch_for(8, DType::I8), 8);
        assert_eq!(pitch_for(72, DType::I8), 72);
        assert_eq!(pitch_for(64, DType::I8), 72);
        assert_eq!(pitch_for(3, DType::I8), 8);
        assert_eq!(pitch_for(8, DType::I32), 32);
        assert_eq!(pitch_for(16, DType::I32), 96);
        assert_eq!(pitch_for(48, DType::I32), 224);
    }

    #[test]
    fn gemm_layouts_keep_a_and_b_in_distinct_bank_classes() {
        assert_eq!(a_pitch(72), 96);
        assert_eq!(a_pitch(8), 32);
        assert_eq!(a_pitch(96), 96);
        assert_eq!(a_pitch(104), 160);
        let b = Layout::gemm_b(72, 48);
        let bank = |byte: usize| (byte / UNIT) % 32;
        let pa = a_pitch(72);
        for kb in 0..9 {
            for nb in 0..6 {
                let bs: Vec<usize> = (0..UNIT).map(|j| bank(b.element_offset(kb * UNIT + j, nb * UNIT))).collect();
                for mb in 0..4 {
                    for i in 0..UNIT {
                        let a = bank((mb * UNIT + i) * pa + kb * UNIT);
                        assert!(!bs.contains(&a), "kb {kb} nb {nb} mb {mb}");
                    }
                }
            }
        }
        let t = Tensor::from_vec(&[72, 48], DType::I8, (0..72 * 48).map(|i| (i % 251) as i32 - 125).collect());
        let mut mem = vec![0u8; b.bytes()];
        b.write(&t, &mut mem, 0);
        assert_eq!(b.read(&mem, 0), t);
        let mut offsets: Vec<usize> = (0..72).flat_map(|r| (0..48).map(move |c| (r, c))).map(|(r, c)| b.element_offset(r, c)).collect();
        offsets.sort_unstable();
        offsets.dedup();
        assert_eq!(offsets.len(), 72 * 48);
    }

    #[test]
    fn free_list_first_fit() {
        let mut f = FreeList::new(1024);
        assert_eq!(f.alloc(100), Some(0));
        assert_eq!(f.alloc(64), Some(128));
        f.free(0, 100);
        assert_eq!(f.alloc(64), Some(0));
        assert_eq!(f.alloc(2000), None);
        assert_eq!(f.largest(), 1024 - 192);
    }

    fn two_tensors(shape: usize) -> WorkloadGraph {
        let text = format!(
            r#"{{"tensors": [{{"id": "a", "shape": [{shape}, 128], "dtype": "i8", "init": "random:1"}},
                {{"id": "b", "dtype": "i8"}}],
               "nodes": [{{"id": "r", "op": "elementwise", "attrs": {{"kind": "relu"}}, "inputs": ["a"], "output": "b"}}]}}"#
        );
        WorkloadGraph::from_json(&text, None).unwrap()
    }

    #[test]
    fn double_buffers_are_disjoint() {
        let cfg = ClusterConfig::bundled("fig6d").unwrap();
        let g = two_tensors(120);
        let copies = HashMap::from([("a".to_string(), 2), ("b".to_string(), 2)]);
        let a = allocate(&g, default_layouts(&g), &copies, 4, &cfg).unwrap();
        assert_eq!(a.buffers.len(), 4);
        assert!(overlapping_buffers(&a).is_empty());
        assert_ne!(a.spm_addr("a", 0), a.spm_addr("a", 1));
        assert_eq!(a.spm_addr("a", 0), a.spm_addr("a", 2));
        assert_eq!(a.ext_offset("b", 1) - a.ext_offset("b", 0), a.ext_region("b").unwrap().stride);
    }

    #[test]
    fn capacity_exceeded_names_tensor() {
        let cfg = ClusterConfig::bundled("fig6d").unwrap();
        let g = two_tensors(1600);
        match allocate(&g, default_layouts(&g), &HashMap::new(), 1, &cfg) {
            Err(CompileError::CapacityExceeded { tensor, .. }) => assert_eq!(tensor, "a"),
            other => panic!("{other:?}"),
        }
    }
}
