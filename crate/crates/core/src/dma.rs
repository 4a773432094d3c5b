// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! 2D-strided DMA between the external memory image and the scratchpad.
//!
//! Addresses at or above [`EXT_BASE`] refer to the external image, anything
//! below refers to the scratchpad. A row is moved in beats of at most
//! `beat_bytes`; every scratchpad-side beat is a byte-masked request on the
//! DMA's own interconnect port and competes with the streamers.

use thiserror::Error;

use crate::tcdm::{AccessKind, BankRequest, Outcome};

/// First byte address of the external memory window.
pub const EXT_BASE: u64 = 0x8000_0000;

/// Fixed programming latency before the first beat.
pub const SETUP_CYCLES: u64 = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DmaError {
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("{space} address range [{start:#x}, {end:#x}) out of bounds")]
    OutOfRange { space: &'static str, start: i64, end: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Spm,
    External,
}

impl Space {
    pub fn of(addr: u64) -> Space {
        if addr >= EXT_BASE {
            Space::External
        } else {
            Space::Spm
        }
    }

    fn offset(addr: i64) -> i64 {
        if addr >= EXT_BASE as i64 {
            addr - EXT_BASE as i64
        } else {
            addr
        }
    }

    fn name(self) -> &'static str {
        match self {
            Space::Spm => "spm",
            Space::External => "external",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DmaDescriptor {
    pub src: u64,
    pub dst: u64,
    pub row_bytes: usize,
    pub rows: usize,
    pub src_stride: i64,
    pub dst_stride: i64,
}

impl DmaDescriptor {
    /// Contiguous copy of `bytes` bytes.
    pub fn linear(src: u64, dst: u64, bytes: usize) -> Self {
        DmaDescriptor { src, dst, row_bytes: bytes, rows: 1, src_stride: bytes as i64, dst_stride: bytes as i64 }
    }

    pub fn total_bytes(&self) -> usize {
        self.row_bytes * self.rows
    }

    fn row_start(base: u64, stride: i64, r: usize) -> i64 {
        base as i64 + stride * r as i64
    }

    pub fn src_row(&self, r: usize) -> i64 {
        Self::row_start(self.src, self.src_stride, r)
    }

    pub fn dst_row(&self, r: usize) -> i64 {
        Self::row_start(self.dst, self.dst_stride, r)
    }

    pub fn touches_external(&self) -> bool {
        Space::of(self.src) == Space::External || Space::of(self.dst) == Space::External
    }

    /// Checks shape and that every row of both sides stays inside its space.
    pub fn validate(&self, spm_len: usize, ext_len: usize) -> Result<(), DmaError> {
        if self.rows == 0 {
            return Err(DmaError::InvalidDescriptor("rows must be at least 1".into()));
        }
        if self.row_bytes == 0 {
            return Err(DmaError::InvalidDescriptor("row_bytes must be at least 1".into()));
        }
        for (base, stride) in [(self.src, self.src_stride), (self.dst, self.dst_stride)] {
            let space = Space::of(base);
            let len = match space {
                Space::Spm => spm_len,
                Space::External => ext_len,
            } as i64;
            let first = Space::offset(base as i64);
            let last = first + stride * (self.rows as i64 - 1);
            let lo = first.min(last);
            let hi = first.max(last) + self.row_bytes as i64;
            if lo < 0 || hi > len {
                return Err(DmaError::OutOfRange { space: space.name(), start: lo, end: hi });
            }
        }
        Ok(())
    }

    pub fn beats(&self, beat_bytes: usize) -> u64 {
        (self.rows * self.row_bytes.div_ceil(beat_bytes)) as u64
    }
}

/// Datapath-limited transfer time, including the setup latency.
///
/// Beats move at one per cycle, throttled to `bandwidth / beat_bytes` per
/// cycle when one side is external. Scratchpad-to-scratchpad beats take a
/// read and a write slot on the single port.
pub fn dma_cycles(desc: &DmaDescriptor, beat_bytes: usize, bandwidth_bytes_per_cycle: usize) -> Result<u64, DmaError> {
    if desc.rows == 0 || desc.row_bytes == 0 {
        return Err(DmaError::InvalidDescriptor("empty transfer".into()));
    }
    let beats = desc.beats(beat_bytes);
    let body = match (Space::of(desc.src), Space::of(desc.dst)) {
        (Space::Spm, Space::Spm) => 2 * beats,
        _ if bandwidth_bytes_per_cycle >= beat_bytes => beats,
        _ => (beats * beat_bytes as u64).div_ceil(bandwidth_bytes_per_cycle as u64),
    };
    Ok(SETUP_CYCLES + body)
}

fn slice_of<'a>(spm: &'a mut [u8], ext: &'a mut [u8], addr: i64) -> (&'a mut [u8], usize) {
    if addr >= EXT_BASE as i64 {
        (ext, (addr - EXT_BASE as i64) as usize)
    } else {
        (spm, addr as usize)
    }
}

/// Reference semantics: copy rows in ascending order.
pub fn dma_golden(desc: &DmaDescriptor, spm: &mut [u8], ext: &mut [u8]) -> Result<(), DmaError> {
    desc.validate(spm.len(), ext.len())?;
    let mut row = vec![0u8; desc.row_bytes];
    for r in 0..desc.rows {
        let (src, s) = slice_of(spm, ext, desc.src_row(r));
        row.copy_from_slice(&src[s..s + desc.row_bytes]);
        let (dst, d) = slice_of(spm, ext, desc.dst_row(r));
        dst[d..d + desc.row_bytes].copy_from_slice(&row);
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct Transfer {
    desc: DmaDescriptor,
    start_at: u64,
    setup_left: u64,
    row: usize,
    col: usize,
    /// Data read from the scratchpad waiting for its write slot.
    staged: Option<Vec<u8>>,
}

/// Cycle model of one DMA engine.
#[derive(Debug, Clone)]
pub struct DmaEngine {
    pub id: String,
    pub port: usize,
    beat_bytes: usize,
    bank_bytes: usize,
    bandwidth: usize,
    credit: usize,
    current: Option<Transfer>,
    pub bytes_moved: u64,
    pub ext_bytes: u64,
    pub busy_cycles: u64,
    pub transfers: u64,
}

impl DmaEngine {
    pub fn new(id: impl Into<String>, port: usize, beat_bytes: usize, bank_bytes: usize, bandwidth: usize) -> Self {
        DmaEngine {
            id: id.into(),
            port,
            beat_bytes,
            bank_bytes,
            bandwidth,
            credit: 0,
            current: None,
            bytes_moved: 0,
            ext_bytes: 0,
            busy_cycles: 0,
            transfers: 0,
        }
    }

    pub fn is_busy(&self) -> bool {
        self.current.is_some()
    }

    /// Accepts a transfer issued at `cycle`; work begins the next cycle.
    pub fn start(&mut self, cycle: u64, desc: DmaDescriptor) -> bool {
        if self.current.is_some() {
            return false;
        }
        self.current = Some(Transfer {
            desc,
            start_at: cycle + 1,
            setup_left: SETUP_CYCLES,
            row: 0,
            col: 0,
            staged: None,
        });
        true
    }

    fn chunk(&self, t: &Transfer) -> (i64, i64, usize) {
        let len = (t.desc.row_bytes - t.col).min(self.beat_bytes);
        (t.desc.src_row(t.row) + t.col as i64, t.desc.dst_row(t.row) + t.col as i64, len)
    }

    fn advance(t: &mut Transfer, len: usize) -> bool {
        t.col += len;
        if t.col == t.desc.row_bytes {
            t.col = 0;
            t.row += 1;
        }
        t.row == t.desc.rows
    }

    fn needs_credit(&self, t: &Transfer) -> bool {
        t.desc.touches_external() && self.bandwidth < self.beat_bytes
    }

    /// Scratchpad request for this cycle. External-only beats are executed
    /// here directly. Returns `None` while in setup or throttled.
    pub fn request(&mut self, cycle: u64, ext: &mut [u8]) -> Option<BankRequest> {
        let cap = self.bandwidth.max(self.beat_bytes);
        self.credit = (self.credit + self.bandwidth).min(cap);
        let t = self.current.as_ref()?;
        if cycle < t.start_at {
            return None;
        }
        self.busy_cycles += 1;
        let t = self.current.as_mut().unwrap();
        if t.setup_left > 0 {
            t.setup_left -= 1;
            return None;
        }
        let t = self.current.clone().unwrap();
        let (src, dst, len) = self.chunk(&t);
        if self.needs_credit(&t) && self.credit < len {
            return None;
        }
        let bank_bytes = self.bank_bytes;
        match (Space::of(src as u64), Space::of(dst as u64)) {
            (Space::External, Space::External) => {
                let s = (src - EXT_BASE as i64) as usize;
                let d = (dst - EXT_BASE as i64) as usize;
                ext.copy_within(s..s + len, d);
                self.finish_beat(len, true);
                None
            }
            (Space::External, Space::Spm) => {
                let s = (src - EXT_BASE as i64) as usize;
                Some(BankRequest::byte_range(self.port, AccessKind::Write, dst as usize, &ext[s..s + len], bank_bytes))
            }
            (Space::Spm, Space::External) => {
                Some(BankRequest::byte_range(self.port, AccessKind::Read, src as usize, &vec![0; len], bank_bytes))
            }
            (Space::Spm, Space::Spm) => match &t.staged {
                None => Some(BankRequest::byte_range(self.port, AccessKind::Read, src as usize, &vec![0; len], bank_bytes)),
                Some(data) => Some(BankRequest::byte_range(self.port, AccessKind::Write, dst as usize, data, bank_bytes)),
            },
        }
    }

    fn finish_beat(&mut self, len: usize, external: bool) {
        let t = self.current.as_mut().unwrap();
        t.staged = None;
        let done = Self::advance(t, len);
        self.bytes_moved += len as u64;
        if external {
            self.ext_bytes += len as u64;
            if self.bandwidth < self.beat_bytes {
                self.credit -= len;
            }
        }
        if done {
            self.current = None;
            self.transfers += 1;
        }
    }

    /// Feedback for the request returned by [`DmaEngine::request`].
    pub fn complete(&mut self, outcome: &Outcome, ext: &mut [u8]) {
        let bank_bytes = self.bank_bytes;
        let Some(t) = self.current.clone() else { return };
        let (src, dst, len) = self.chunk(&t);
        let bytes_of = |words: &[u64]| -> Vec<u8> {
            let first = (src as usize / bank_bytes) * bank_bytes;
            let skip = src as usize - first;
            words.iter().flat_map(|w| w.to_le_bytes().into_iter().take(bank_bytes)).skip(skip).take(len).collect()
        };
        match (outcome, Space::of(src as u64), Space::of(dst as u64)) {
            (Outcome::Stalled, _, _) => {}
            (Outcome::WriteAck, _, Space::Spm) => {
                let external = Space::of(src as u64) == Space::External;
                self.finish_beat(len, external);
            }
            (Outcome::Read(words), Space::Spm, Space::External) => {
                let d = (dst - EXT_BASE as i64) as usize;
                ext[d..d + len].copy_from_slice(&bytes_of(words));
                self.finish_beat(len, true);
            }
            (Outcome::Read(words), Space::Spm, Space::Spm) => {
                self.current.as_mut().unwrap().staged = Some(bytes_of(words));
            }
            (o, _, _) => panic!("unexpected dma outcome {o:?}"),
        }
    }
}
