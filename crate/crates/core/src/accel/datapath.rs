// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Cycle models of the GeMM and MaxPool datapaths.
//!
//! Both consume element groups from read streamers and push element groups
//! to a write streamer. A datapath makes progress only when every input it
//! needs this cycle is available and its output has room.

use super::AccelError;
use crate::config::UNIT;
use crate::streamer::Streamer;
use crate::tensor::{bytes_to_group, group_bytes, DType};

/// Datapath-limited cycles of an `M x K x N` matmul on 8x8x8 unit tiles.
pub fn gemm_tile_cycles(m: usize, k: usize, n: usize) -> u64 {
    (m.div_ceil(UNIT) * k.div_ceil(UNIT) * n.div_ceil(UNIT)) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Idle,
    Computed,
    Stalled,
    Finished,
}

#[derive(Debug, Clone)]
struct GemmState {
    tiles: [usize; 3],
    at: [usize; 3],
    acc: [i32; UNIT * UNIT],
    computed: usize,
}

/// Output-stationary GeMM: N-outer, M-middle, K-inner over unit tiles.
/// Streams are `[A, B, C]`.
#[derive(Debug, Clone)]
pub struct GemmDatapath {
    bank_bytes: usize,
    state: Option<GemmState>,
    pub tiles_computed: u64,
    pub macs: u64,
    pub compute_cycles: u64,
}

impl GemmDatapath {
    pub fn new(bank_bytes: usize) -> Self {
        GemmDatapath { bank_bytes, state: None, tiles_computed: 0, macs: 0, compute_cycles: 0 }
    }

    pub fn is_active(&self) -> bool {
        self.state.is_some()
    }

    /// Starts a task after checking the stream lengths against the shape.
    pub fn start(&mut self, m: usize, k: usize, n: usize, streams: &[Streamer]) -> Result<(), AccelError> {
        if m == 0 || k == 0 || n == 0 {
            return Err(AccelError::ShapeMismatch(format!("gemm shape {m}x{k}x{n}")));
        }
        let (mb, kb, nb) = (m.div_ceil(UNIT), k.div_ceil(UNIT), n.div_ceil(UNIT));
        let want = [mb * kb * nb, mb * kb * nb, mb * nb];
        for (s, &w) in streams.iter().zip(&want) {
            if s.total() != w {
                return Err(AccelError::StreamMismatch { stream: s.name.clone(), groups: s.total(), expected: w });
            }
        }
        self.state = Some(GemmState { tiles: [mb, kb, nb], at: [0; 3], acc: [0; UNIT * UNIT], computed: 0 });
        Ok(())
    }

    pub fn step(&mut self, cycle: u64, streams: &mut [Streamer]) -> StepStatus {
        let Some(st) = self.state.as_mut() else { return StepStatus::Idle };
        let [mb, kb, nb] = st.tiles;
        if st.computed == mb * kb * nb {
            if streams[2].is_done() {
                self.state = None;
                return StepStatus::Finished;
            }
            return StepStatus::Stalled;
        }
        let last_k = st.at[1] + 1 == kb;
        if !streams[0].can_pop(cycle) || !streams[1].can_pop(cycle) || (last_k && !streams[2].can_push()) {
            return StepStatus::Stalled;
        }
        let a = group_bytes(&streams[0].pop(cycle).unwrap(), self.bank_bytes);
        let b = group_bytes(&streams[1].pop(cycle).unwrap(), self.bank_bytes);
        for i in 0..UNIT {
            for p in 0..UNIT {
                let av = a[i * UNIT + p] as i8 as i32;
                if av == 0 {
                    continue;
                }
                for j in 0..UNIT {
                    let bv = b[p * UNIT + j] as i8 as i32;
                    st.acc[i * UNIT + j] += av * bv;
                }
            }
        }
        st.computed += 1;
        self.tiles_computed += 1;
        self.macs += (UNIT * UNIT * UNIT) as u64;
        self.compute_cycles += 1;
        if last_k {
            let bytes: Vec<u8> = st.acc.iter().flat_map(|v| v.to_le_bytes()).collect();
            streams[2].push(cycle, bytes_to_group(&bytes, self.bank_bytes));
            st.acc = [0; UNIT * UNIT];
            st.at[1] = 0;
            st.at[0] += 1;
            if st.at[0] == mb {
                st.at[0] = 0;
                st.at[2] += 1;
            }
        } else {
            st.at[1] += 1;
        }
        StepStatus::Computed
    }
}

#[derive(Debug, Clone)]
struct PoolState {
    window: usize,
    dtype: DType,
    seen: usize,
    max: [i32; UNIT],
    inputs_left: usize,
}

/// Eight-lane streaming max. Streams are `[in, out]`; every `window` input
/// groups produce one output group.
#[derive(Debug, Clone)]
pub struct MaxPoolDatapath {
    bank_bytes: usize,
    state: Option<PoolState>,
    pub groups_consumed: u64,
    pub compute_cycles: u64,
}

impl MaxPoolDatapath {
    pub fn new(bank_bytes: usize) -> Self {
        MaxPoolDatapath { bank_bytes, state: None, groups_consumed: 0, compute_cycles: 0 }
    }

    pub fn is_active(&self) -> bool {
        self.state.is_some()
    }

    pub fn start(&mut self, window: usize, elem_bytes: i64, streams: &[Streamer]) -> Result<(), AccelError> {
        let dtype = DType::from_code(elem_bytes)
            .ok_or_else(|| AccelError::UnsupportedOp(format!("maxpool element size {elem_bytes}")))?;
        if window == 0 {
            return Err(AccelError::ShapeMismatch("maxpool window is zero".into()));
        }
        let inputs = streams[0].total();
        if inputs % window != 0 || streams[1].total() != inputs / window {
            return Err(AccelError::StreamMismatch {
                stream: streams[1].name.clone(),
                groups: streams[1].total(),
                expected: inputs / window,
            });
        }
        self.state = Some(PoolState { window, dtype, seen: 0, max: [i32::MIN; UNIT], inputs_left: inputs });
        Ok(())
    }

    pub fn step(&mut self, cycle: u64, streams: &mut [Streamer]) -> StepStatus {
        let Some(st) = self.state.as_mut() else { return StepStatus::Idle };
        if st.inputs_left == 0 {
            if streams[1].is_done() {
                self.state = None;
                return StepStatus::Finished;
            }
            return StepStatus::Stalled;
        }
        let closes = st.seen + 1 == st.window;
        if !streams[0].can_pop(cycle) || (closes && !streams[1].can_push()) {
            return StepStatus::Stalled;
        }
        let bytes = group_bytes(&streams[0].pop(cycle).unwrap(), self.bank_bytes);
        let e = st.dtype.bytes();
        for (lane, m) in st.max.iter_mut().enumerate() {
            *m = (*m).max(st.dtype.read(&bytes[lane * e..]));
        }
        st.seen += 1;
        st.inputs_left -= 1;
        self.groups_consumed += 1;
        self.compute_cycles += 1;
        if closes {
            let mut out = vec![0u8; UNIT * e];
            for (lane, &m) in st.max.iter().enumerate() {
                st.dtype.write(m, &mut out[lane * e..]);
            }
            streams[1].push(cycle, bytes_to_group(&out, self.bank_bytes));
            st.max = [i32::MIN; UNIT];
            st.seen = 0;
        }
        StepStatus::Computed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tile_cycle_examples() {
        assert_eq!(gemm_tile_cycles(8, 8, 8), 1);
        assert_eq!(gemm_tile_cycles(16, 16, 16), 8);
        assert_eq!(gemm_tile_cycles(8, 8, 9), 2);
    }
}
