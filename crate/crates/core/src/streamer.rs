// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Data streamers: hardware loop address generators with FIFOs.
//!
//! A channel is programmed with a temporal loop nest (base plus one
//! bound/stride pair per loop, outermost first) and a spatial pattern that
//! describes which bank words make up one element group. Every temporal
//! iteration moves one element group between the scratchpad and the
//! accelerator datapath.

use std::collections::VecDeque;

use thiserror::Error;

use crate::config::{ChannelConfig, Direction};
use crate::control::csr::chan;
use crate::tcdm::{BankRequest, Outcome, WordAccess};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StreamerError {
    #[error("address {addr} outside [0, {limit}]")]
    AddressOutOfRange { addr: i64, limit: usize },
    #[error("loop depth {depth} exceeds channel maximum {max}")]
    DepthExceeded { depth: usize, max: usize },
    #[error("loop bound must be at least 1 (dimension {dim})")]
    ZeroBound { dim: usize },
    #[error("address {addr} is not aligned to the {align}-byte bank word")]
    Misaligned { addr: i64, align: usize },
    #[error("element group of {words} words does not fit a {width_words}-word channel")]
    GroupTooWide { words: usize, width_words: usize },
    #[error("element group maps two words onto bank {bank}")]
    SpatialBankConflict { bank: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopDim {
    pub bound: usize,
    pub stride: i64,
}

impl LoopDim {
    pub fn new(bound: usize, stride: i64) -> Self {
        LoopDim { bound, stride }
    }
}

/// Shape of one element group: `rows` runs of `row_words` consecutive bank
/// words, the runs `row_stride` bytes apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpatialPattern {
    pub rows: usize,
    pub row_stride: i64,
    pub row_words: usize,
}

impl SpatialPattern {
    pub fn contiguous(words: usize) -> Self {
        SpatialPattern { rows: 1, row_stride: 0, row_words: words }
    }

    pub fn words(&self) -> usize {
        self.rows * self.row_words
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopNest {
    pub base: i64,
    pub dims: Vec<LoopDim>,
    pub spatial: SpatialPattern,
}

/// Geometry shared by all channels: bank word size, bank count, capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpmGeometry {
    pub bank_bytes: usize,
    pub num_banks: usize,
    pub capacity: usize,
}

impl LoopNest {
    pub fn new(base: i64, dims: Vec<LoopDim>, spatial: SpatialPattern) -> Self {
        LoopNest { base, dims, spatial }
    }

    pub fn iterations(&self) -> usize {
        self.dims.iter().map(|d| d.bound).product()
    }

    /// Group base addresses in loop order, innermost loop fastest.
    pub fn address_sequence(&self) -> Vec<i64> {
        let mut out = Vec::with_capacity(self.iterations());
        let mut idx = vec![0usize; self.dims.len()];
        let mut addr = self.base;
        loop {
            out.push(addr);
            let mut k = self.dims.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                let d = self.dims[k];
                idx[k] += 1;
                addr += d.stride;
                if idx[k] < d.bound {
                    break;
                }
                addr -= d.stride * d.bound as i64;
                idx[k] = 0;
            }
        }
    }

    /// Word addresses of the element group starting at `addr`.
    pub fn group_words(&self, addr: i64, bank_bytes: usize) -> impl Iterator<Item = i64> + '_ {
        let sp = self.spatial;
        (0..sp.rows).flat_map(move |r| {
            (0..sp.row_words).map(move |w| addr + r as i64 * sp.row_stride + (w * bank_bytes) as i64)
        })
    }

    /// Checks depth, bounds, alignment, range and bank-conflict freedom.
    pub fn validate(&self, max_depth: usize, width_words: usize, geo: SpmGeometry) -> Result<(), StreamerError> {
        if self.dims.len() > max_depth {
            return Err(StreamerError::DepthExceeded { depth: self.dims.len(), max: max_depth });
        }
        if let Some(dim) = self.dims.iter().position(|d| d.bound == 0) {
            return Err(StreamerError::ZeroBound { dim });
        }
        let sp = self.spatial;
        if sp.words() == 0 || sp.words() > width_words {
            return Err(StreamerError::GroupTooWide { words: sp.words(), width_words });
        }
        let bb = geo.bank_bytes as i64;
        let misaligned = |v: i64| v.rem_euclid(bb) != 0;
        if misaligned(self.base) {
            return Err(StreamerError::Misaligned { addr: self.base, align: geo.bank_bytes });
        }
        if let Some(d) = self.dims.iter().find(|d| d.bound > 1 && misaligned(d.stride)) {
            return Err(StreamerError::Misaligned { addr: d.stride, align: geo.bank_bytes });
        }
        if sp.rows > 1 && misaligned(sp.row_stride) {
            return Err(StreamerError::Misaligned { addr: sp.row_stride, align: geo.bank_bytes });
        }
        let mut seen = vec![false; geo.num_banks];
        for w in self.group_words(0, geo.bank_bytes) {
            let bank = (w.div_euclid(bb)).rem_euclid(geo.num_banks as i64) as usize;
            if std::mem::replace(&mut seen[bank], true) {
                return Err(StreamerError::SpatialBankConflict { bank });
            }
        }
        // Extremes of the temporal walk plus the spatial footprint.
        let (mut lo, mut hi) = (self.base, self.base);
        for d in &self.dims {
            let span = d.stride * (d.bound as i64 - 1);
            if span < 0 {
                lo += span;
            } else {
                hi += span;
            }
        }
        let offsets: Vec<i64> = self.group_words(0, geo.bank_bytes).collect();
        let min_off = *offsets.iter().min().unwrap();
        let max_off = *offsets.iter().max().unwrap();
        let limit = geo.capacity - geo.bank_bytes;
        if lo + min_off < 0 {
            return Err(StreamerError::AddressOutOfRange { addr: lo + min_off, limit });
        }
        if hi + max_off > limit as i64 {
            return Err(StreamerError::AddressOutOfRange { addr: hi + max_off, limit });
        }
        Ok(())
    }

    /// Decodes one channel's register block (layout in `control::csr::chan`).
    pub fn from_csr(regs: &[i64], ch: &ChannelConfig, geo: SpmGeometry) -> Result<LoopNest, StreamerError> {
        let width_words = ch.width_bits / (geo.bank_bytes * 8);
        let depth = regs[chan::DEPTH].max(0) as usize;
        if depth > ch.max_loop_depth {
            return Err(StreamerError::DepthExceeded { depth, max: ch.max_loop_depth });
        }
        let rows = (regs[chan::SPATIAL_ROWS].max(1)) as usize;
        let row_words = match regs[chan::ROW_WORDS] {
            w if w <= 0 => (width_words / rows).max(1),
            w => w as usize,
        };
        let dims = (0..depth)
            .map(|i| LoopDim::new(regs[chan::bound(i)].max(0) as usize, regs[chan::stride(i)]))
            .collect();
        let nest = LoopNest {
            base: regs[chan::BASE],
            dims,
            spatial: SpatialPattern { rows, row_stride: regs[chan::SPATIAL_STRIDE], row_words },
        };
        nest.validate(ch.max_loop_depth, width_words, geo)?;
        Ok(nest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    Running,
    Draining,
    Done,
}

#[derive(Debug, Clone)]
struct FifoEntry {
    data: Vec<u64>,
    ready_at: u64,
}

/// Runtime state of one streamer channel.
#[derive(Debug, Clone)]
pub struct Streamer {
    pub name: String,
    pub direction: Direction,
    pub port: usize,
    fifo_depth: usize,
    bank_bytes: usize,
    nest: Option<LoopNest>,
    addrs: Vec<i64>,
    next: usize,
    retired: usize,
    fifo: VecDeque<FifoEntry>,
    pub max_occupancy: usize,
    pub delivered: u64,
}

impl Streamer {
    pub fn new(ch: &ChannelConfig, port: usize, bank_bytes: usize) -> Self {
        Streamer {
            name: ch.name.clone(),
            direction: ch.direction,
            port,
            fifo_depth: ch.fifo_depth,
            bank_bytes,
            nest: None,
            addrs: Vec::new(),
            next: 0,
            retired: 0,
            fifo: VecDeque::new(),
            max_occupancy: 0,
            delivered: 0,
        }
    }

    pub fn launch(&mut self, nest: LoopNest) {
        self.addrs = nest.address_sequence();
        self.nest = Some(nest);
        self.next = 0;
        self.retired = 0;
        self.fifo.clear();
    }

    pub fn phase(&self) -> Phase {
        match &self.nest {
            None => Phase::Idle,
            Some(_) if self.retired == self.addrs.len() => Phase::Done,
            Some(_) if self.direction == Direction::Write && self.next == self.addrs.len() => Phase::Draining,
            Some(_) => Phase::Running,
        }
    }

    pub fn is_done(&self) -> bool {
        matches!(self.phase(), Phase::Done | Phase::Idle)
    }

    pub fn occupancy(&self) -> usize {
        self.fifo.len()
    }

    pub fn total(&self) -> usize {
        self.addrs.len()
    }

    fn words(&self, addr: i64) -> Vec<usize> {
        let nest = self.nest.as_ref().expect("launched");
        nest.group_words(addr, self.bank_bytes).map(|a| a as usize).collect()
    }

    /// Request presented to the interconnect this cycle, if any.
    pub fn request(&self, cycle: u64) -> Option<BankRequest> {
        self.nest.as_ref()?;
        match self.direction {
            Direction::Read => {
                if self.next < self.addrs.len() && self.fifo.len() < self.fifo_depth {
                    Some(BankRequest::read(self.port, self.words(self.addrs[self.next])))
                } else {
                    None
                }
            }
            Direction::Write => {
                let head = self.fifo.front().filter(|e| e.ready_at <= cycle)?;
                let words = self
                    .words(self.addrs[self.retired])
                    .into_iter()
                    .zip(&head.data)
                    .map(|(addr, &data)| WordAccess { addr, data, mask: 0xff })
                    .collect();
                Some(BankRequest::write(self.port, words))
            }
        }
    }

    /// Feedback for the request presented this cycle.
    pub fn complete(&mut self, cycle: u64, outcome: &Outcome) {
        match (self.direction, outcome) {
            (_, Outcome::Stalled) => {}
            (Direction::Read, Outcome::Read(data)) => {
                self.fifo.push_back(FifoEntry { data: data.clone(), ready_at: cycle + 1 });
                self.max_occupancy = self.max_occupancy.max(self.fifo.len());
                self.next += 1;
                self.retired += 1;
            }
            (Direction::Write, Outcome::WriteAck) => {
                self.fifo.pop_front();
                self.retired += 1;
            }
            (dir, o) => panic!("outcome {o:?} does not match {dir:?} channel"),
        }
    }

    /// Read side: whether an element group is available to the datapath.
    pub fn can_pop(&self, cycle: u64) -> bool {
        self.fifo.front().is_some_and(|e| e.ready_at <= cycle)
    }

    pub fn pop(&mut self, cycle: u64) -> Option<Vec<u64>> {
        if !self.can_pop(cycle) {
            return None;
        }
        self.delivered += 1;
        self.fifo.pop_front().map(|e| e.data)
    }

    /// Write side: whether the datapath may push an element group.
    pub fn can_push(&self) -> bool {
        self.direction == Direction::Write && self.next < self.addrs.len() && self.fifo.len() < self.fifo_depth
    }

    pub fn push(&mut self, cycle: u64, data: Vec<u64>) -> bool {
        if !self.can_push() {
            return false;
        }
        self.fifo.push_back(FifoEntry { data, ready_at: cycle + 1 });
        self.max_occupancy = self.max_occupancy.max(self.fifo.len());
        self.next += 1;
        self.delivered += 1;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tcdm::Tcdm;

    const GEO: SpmGeometry = SpmGeometry { bank_bytes: 8, num_banks: 32, capacity: 131_072 };

    fn channel(dir: Direction, width: usize, depth: usize) -> ChannelConfig {
        ChannelConfig { name: "ch".into(), direction: dir, width_bits: width, fifo_depth: depth, max_loop_depth: 4 }
    }

    fn nest(base: i64, dims: &[(usize, i64)]) -> LoopNest {
        LoopNest::new(base, dims.iter().map(|&(b, s)| LoopDim::new(b, s)).collect(), SpatialPattern::contiguous(1))
    }

    #[test]
    fn single_loop() {
        assert_eq!(nest(0, &[(4, 8)]).address_sequence(), vec![0, 8, 16, 24]);
    }

    #[test]
    fn two_loops() {
        assert_eq!(
            nest(256, &[(2, 512), (4, 8)]).address_sequence(),
            vec![256, 264, 272, 280, 768, 776, 784, 792]
        );
    }

    #[test]
    fn empty_nest_is_one_access() {
        assert_eq!(nest(0, &[]).address_sequence(), vec![0]);
    }

    fn regs(base: i64, dims: &[(i64, i64)]) -> Vec<i64> {
        let mut r = vec![0; chan::block_len(6)];
        r[chan::BASE] = base;
        r[chan::DEPTH] = dims.len() as i64;
        for (i, &(b, s)) in dims.iter().enumerate() {
            r[chan::bound(i)] = b;
            r[chan::stride(i)] = s;
        }
        r
    }

    #[test]
    fn decode_from_csr() {
        let ch = channel(Direction::Read, 64, 2);
        let n = LoopNest::from_csr(&regs(0, &[(4, 8)]), &ch, GEO).unwrap();
        assert_eq!(n, nest(0, &[(4, 8)]));
    }

    #[test]
    fn decode_rejects_depth() {
        let ch = channel(Direction::Read, 64, 2);
        let r = regs(0, &[(1, 8); 5]);
        assert_eq!(LoopNest::from_csr(&r, &ch, GEO), Err(StreamerError::DepthExceeded { depth: 5, max: 4 }));
    }

    #[test]
    fn decode_rejects_out_of_range() {
        let ch = channel(Direction::Read, 64, 2);
        let err = LoopNest::from_csr(&regs(131_064, &[(2, 8)]), &ch, GEO).unwrap_err();
        assert!(matches!(err, StreamerError::AddressOutOfRange { addr: 131_072, .. }), "{err:?}");
    }

    #[test]
    fn spatial_conflict_rejected() {
        let n = LoopNest::new(0, vec![], SpatialPattern { rows: 8, row_stride: 64, row_words: 1 });
        assert_eq!(n.validate(4, 8, GEO), Err(StreamerError::SpatialBankConflict { bank: 0 }));
        let ok = LoopNest::new(0, vec![], SpatialPattern { rows: 8, row_stride: 72, row_words: 1 });
        assert_eq!(ok.validate(4, 8, GEO), Ok(()));
    }

    fn run_read(depth: usize, cycles: u64, ready: bool) -> (Vec<Option<u64>>, usize) {
        let mut t = Tcdm::new(32, 64, 512);
        let ch = channel(Direction::Read, 64, depth);
        let port = t.add_port(64, "s");
        let mut s = Streamer::new(&ch, port, 8);
        s.launch(nest(0, &[(16, 8)]));
        let mut issued = 0;
        let mut delivered = Vec::new();
        for c in 0..cycles {
            let req = s.request(c);
            if let Some(r) = req {
                issued += 1;
                let out = t.step(c, &[r]);
                s.complete(c, &out[0]);
            }
            delivered.push(if ready { s.pop(c).map(|_| c) } else { None });
            assert!(s.occupancy() <= depth);
        }
        (delivered, issued)
    }

    #[test]
    fn unit_stride_streams_one_per_cycle() {
        let (delivered, _) = run_read(2, 5, true);
        assert_eq!(delivered, vec![None, Some(1), Some(2), Some(3), Some(4)]);
    }

    #[test]
    fn stalled_consumer_fills_fifo_then_stops() {
        for d in 1..5 {
            let (_, issued) = run_read(d, 20, false);
            assert_eq!(issued, d);
        }
    }

    #[test]
    fn conflicting_streams_alternate() {
        let mut t = Tcdm::new(32, 64, 512);
        let ch = channel(Direction::Read, 64, 8);
        let pa = t.add_port(64, "a");
        let pb = t.add_port(64, "b");
        let mut a = Streamer::new(&ch, pa, 8);
        let mut b = Streamer::new(&ch, pb, 8);
        // Same bank every iteration (stride = 32 words).
        a.launch(nest(0, &[(8, 256)]));
        b.launch(nest(0, &[(8, 256)]));
        let mut got = (Vec::new(), Vec::new());
        for c in 0..16 {
            let reqs: Vec<_> = [a.request(c), b.request(c)].into_iter().flatten().collect();
            let out = t.step(c, &reqs);
            let mut it = out.iter();
            for s in [&mut a, &mut b] {
                if s.request(c).is_some() {
                    s.complete(c, it.next().unwrap());
                }
            }
            if a.pop(c).is_some() {
                got.0.push(c);
            }
            if b.pop(c).is_some() {
                got.1.push(c);
            }
        }
        assert_eq!(got.0, vec![1, 3, 5, 7, 9, 11, 13, 15]);
        assert_eq!(got.1, vec![2, 4, 6, 8, 10, 12, 14, 16].into_iter().filter(|&c| c < 16).collect::<Vec<_>>());
        assert_eq!(t.bank_grants[0], 16);
    }

    #[test]
    fn write_channel_drains() {
        let mut t = Tcdm::new(32, 64, 512);
        let ch = channel(Direction::Write, 64, 2);
        let p = t.add_port(64, "w");
        let mut s = Streamer::new(&ch, p, 8);
        s.launch(nest(64, &[(3, 8)]));
        let mut pushed = 0u64;
        for c in 0..10 {
            if let Some(r) = s.request(c) {
                let out = t.step(c, &[r]);
                s.complete(c, &out[0]);
            }
            if pushed < 3 && s.push(c, vec![pushed + 1]) {
                pushed += 1;
            }
        }
        assert_eq!(s.phase(), Phase::Done);
        assert_eq!(&t.bytes()[64..88], &[1, 0, 0, 0, 0, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0, 3, 0, 0, 0, 0, 0, 0, 0]);
    }
}
