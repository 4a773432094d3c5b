// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Multi-banked scratchpad and its tightly coupled interconnect.
//!
//! Bytes are word-interleaved across banks: the word at byte address `a`
//! lives in bank `(a / bank_bytes) % num_banks`. Every bank serves at most
//! one request per cycle. A request may cover several banks (one word each)
//! and is granted atomically. Contention is resolved by port width first
//! (wider ports win) and by a per-bank round-robin pointer among ports of
//! equal width.

use std::fmt;

use thiserror::Error;

use crate::config::ClusterConfig;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TcdmError {
    #[error("address {addr:#x} out of range (capacity {capacity:#x})")]
    OutOfRange { addr: usize, capacity: usize },
    #[error("address {addr:#x} not aligned to {align} bytes")]
    Misaligned { addr: usize, align: usize },
    #[error("request touches bank {bank} twice")]
    SelfConflict { bank: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

impl fmt::Display for AccessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessKind::Read => "read",
            AccessKind::Write => "write",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcdmPort {
    pub width_bits: usize,
    pub owner: String,
}

/// One bank word touched by a request. `mask` selects bytes for writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordAccess {
    pub addr: usize,
    pub data: u64,
    pub mask: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankRequest {
    pub port: usize,
    pub kind: AccessKind,
    pub words: Vec<WordAccess>,
}

impl BankRequest {
    pub fn read(port: usize, addrs: impl IntoIterator<Item = usize>) -> Self {
        let words = addrs.into_iter().map(|addr| WordAccess { addr, data: 0, mask: 0xff }).collect();
        BankRequest { port, kind: AccessKind::Read, words }
    }

    pub fn write(port: usize, words: Vec<WordAccess>) -> Self {
        BankRequest { port, kind: AccessKind::Write, words }
    }

    /// Aligned `width_bytes` access starting at `addr`.
    pub fn wide_read(port: usize, addr: usize, width_bytes: usize, bank_bytes: usize) -> Self {
        Self::read(port, (0..width_bytes / bank_bytes).map(|i| addr + i * bank_bytes))
    }

    /// Byte-granular access to `[addr, addr + len)`, one word per touched bank word.
    pub fn byte_range(port: usize, kind: AccessKind, addr: usize, data: &[u8], bank_bytes: usize) -> Self {
        let len = data.len();
        let first = addr / bank_bytes;
        let last = (addr + len - 1) / bank_bytes;
        let words = (first..=last)
            .map(|w| {
                let base = w * bank_bytes;
                let mut value = 0u64;
                let mut mask = 0u8;
                for b in 0..bank_bytes {
                    let a = base + b;
                    if a >= addr && a < addr + len {
                        mask |= 1 << b;
                        value |= (data[a - addr] as u64) << (8 * b);
                    }
                }
                WordAccess { addr: base, data: value, mask }
            })
            .collect();
        BankRequest { port, kind, words }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Read(Vec<u64>),
    WriteAck,
    Stalled,
}

impl Outcome {
    pub fn is_granted(&self) -> bool {
        !matches!(self, Outcome::Stalled)
    }
}

/// Per-request grant decision, in the order requests were presented.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrantResult {
    pub granted: Vec<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PortStats {
    pub granted: u64,
    pub stalled: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRow {
    pub cycle: u64,
    pub port: usize,
    pub bank: usize,
    pub kind: AccessKind,
    pub addr: usize,
    pub granted: bool,
}

pub struct Tcdm {
    bank_bytes: usize,
    num_banks: usize,
    mem: Vec<u8>,
    ports: Vec<TcdmPort>,
    rr: Vec<usize>,
    pub port_stats: Vec<PortStats>,
    pub bank_grants: Vec<u64>,
    pub bank_conflicts: u64,
    trace: Option<Vec<TraceRow>>,
}

impl Tcdm {
    pub fn new(num_banks: usize, bank_width_bits: usize, bank_depth_words: usize) -> Self {
        assert!(num_banks.is_power_of_two());
        assert!(bank_width_bits % 8 == 0 && bank_width_bits <= 64);
        let bank_bytes = bank_width_bits / 8;
        Tcdm {
            bank_bytes,
            num_banks,
            mem: vec![0; num_banks * bank_bytes * bank_depth_words],
            ports: Vec::new(),
            rr: vec![0; num_banks],
            port_stats: Vec::new(),
            bank_grants: vec![0; num_banks],
            bank_conflicts: 0,
            trace: None,
        }
    }

    pub fn from_config(cfg: &ClusterConfig) -> Self {
        Self::new(cfg.spm.num_banks, cfg.spm.bank_width_bits, cfg.spm.bank_depth_words)
    }

    pub fn add_port(&mut self, width_bits: usize, owner: impl Into<String>) -> usize {
        self.ports.push(TcdmPort { width_bits, owner: owner.into() });
        self.port_stats.push(PortStats::default());
        self.ports.len() - 1
    }

    pub fn ports(&self) -> &[TcdmPort] {
        &self.ports
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceRow> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn capacity(&self) -> usize {
        self.mem.len()
    }

    pub fn bank_bytes(&self) -> usize {
        self.bank_bytes
    }

    pub fn num_banks(&self) -> usize {
        self.num_banks
    }

    pub fn bank_of(&self, byte_address: usize) -> Result<usize, TcdmError> {
        if byte_address >= self.capacity() {
            return Err(TcdmError::OutOfRange { addr: byte_address, capacity: self.capacity() });
        }
        if byte_address % self.bank_bytes != 0 {
            return Err(TcdmError::Misaligned { addr: byte_address, align: self.bank_bytes });
        }
        Ok(self.bank_unchecked(byte_address))
    }

    fn bank_unchecked(&self, byte_address: usize) -> usize {
        (byte_address / self.bank_bytes) % self.num_banks
    }

    pub fn check_request(&self, req: &BankRequest) -> Result<(), TcdmError> {
        let mut seen = vec![false; self.num_banks];
        for w in &req.words {
            let bank = self.bank_of(w.addr)?;
            if std::mem::replace(&mut seen[bank], true) {
                return Err(TcdmError::SelfConflict { bank });
            }
        }
        Ok(())
    }

    fn rank(&self, req: &BankRequest) -> usize {
        let n = self.ports.len().max(1);
        req.words
            .iter()
            .map(|w| (req.port + n - self.rr[self.bank_unchecked(w.addr)] % n) % n)
            .min()
            .unwrap_or(0)
    }

    /// Decides which requests are served this cycle.
    ///
    /// Requests are visited by descending port width, then by round-robin
    /// distance from the pointer of their banks; a request is granted when
    /// all of its banks are still free.
    pub fn arbitrate(&mut self, cycle: u64, requests: &[BankRequest]) -> GrantResult {
        let mut order: Vec<usize> = (0..requests.len()).collect();
        order.sort_by_key(|&i| {
            let r = &requests[i];
            (std::cmp::Reverse(self.ports[r.port].width_bits), self.rank(r), r.port)
        });
        let mut bank_busy = vec![false; self.num_banks];
        let mut granted = vec![false; requests.len()];
        let n_ports = self.ports.len();
        for i in order {
            let req = &requests[i];
            let free = req.words.iter().all(|w| !bank_busy[self.bank_unchecked(w.addr)]);
            if free {
                for w in &req.words {
                    let bank = self.bank_unchecked(w.addr);
                    bank_busy[bank] = true;
                    self.rr[bank] = (req.port + 1) % n_ports;
                    self.bank_grants[bank] += 1;
                }
                granted[i] = true;
                self.port_stats[req.port].granted += 1;
            } else {
                self.port_stats[req.port].stalled += 1;
                self.bank_conflicts += 1;
            }
        }
        if let Some(trace) = self.trace.as_mut() {
            for (req, &g) in requests.iter().zip(&granted) {
                for w in &req.words {
                    trace.push(TraceRow {
                        cycle,
                        port: req.port,
                        bank: (w.addr / self.bank_bytes) % self.num_banks,
                        kind: req.kind,
                        addr: w.addr,
                        granted: g,
                    });
                }
            }
        }
        GrantResult { granted }
    }

    /// Performs the granted accesses. Reads observe memory as of cycle start.
    pub fn access(&mut self, requests: &[BankRequest], grants: &GrantResult) -> Vec<Outcome> {
        let mut out: Vec<Outcome> = requests
            .iter()
            .zip(&grants.granted)
            .map(|(req, &g)| match (g, req.kind) {
                (false, _) => Outcome::Stalled,
                (true, AccessKind::Read) => {
                    Outcome::Read(req.words.iter().map(|w| self.load_word(w.addr)).collect())
                }
                (true, AccessKind::Write) => Outcome::WriteAck,
            })
            .collect();
        for (req, o) in requests.iter().zip(out.iter_mut()) {
            if req.kind == AccessKind::Write && *o == Outcome::WriteAck {
                for w in &req.words {
                    self.store_word(w.addr, w.data, w.mask);
                }
            }
        }
        out
    }

    pub fn step(&mut self, cycle: u64, requests: &[BankRequest]) -> Vec<Outcome> {
        let grants = self.arbitrate(cycle, requests);
        self.access(requests, &grants)
    }

    fn load_word(&self, addr: usize) -> u64 {
        self.mem[addr..addr + self.bank_bytes]
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &b)| acc | (b as u64) << (8 * i))
    }

    fn store_word(&mut self, addr: usize, data: u64, mask: u8) {
        for i in 0..self.bank_bytes {
            if mask & (1 << i) != 0 {
                self.mem[addr + i] = (data >> (8 * i)) as u8;
            }
        }
    }

    /// Direct (unarbitrated) view of memory, used for image loading and
    /// by the scalar fallback model.
    pub fn bytes(&self) -> &[u8] {
        &self.mem
    }

    pub fn bytes_mut(&mut self) -> &mut [u8] {
        &mut self.mem
    }
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from("cycle,port,bank,kind,addr,outcome\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{:#x},{}\n",
            r.cycle,
            r.port,
            r.bank,
            r.kind,
            r.addr,
            if r.granted { "granted" } else { "stalled" }
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_tcdm() -> Tcdm {
        Tcdm::new(32, 64, 512)
    }

    #[test]
    fn bank_mapping() {
        let t = default_tcdm();
        assert_eq!(t.bank_of(0), Ok(0));
        assert_eq!(t.bank_of(8), Ok(1));
        assert_eq!(t.bank_of(256), Ok(0));
        assert_eq!(t.bank_of(131_072), Err(TcdmError::OutOfRange { addr: 131_072, capacity: 131_072 }));
        assert_eq!(t.bank_of(3), Err(TcdmError::Misaligned { addr: 3, align: 8 }));
    }

    #[test]
    fn uncontended_read_granted() {
        let mut t = default_tcdm();
        let p = t.add_port(64, "a");
        let out = t.step(0, &[BankRequest::read(p, [0])]);
        assert_eq!(out, vec![Outcome::Read(vec![0])]);
    }

    #[test]
    fn wide_port_wins() {
        let mut t = default_tcdm();
        let narrow = t.add_port(64, "narrow");
        let wide = t.add_port(512, "wide");
        for _ in 0..4 {
            let reqs = [BankRequest::read(narrow, [3 * 8]), BankRequest::wide_read(wide, 0, 64, 8)];
            let g = t.arbitrate(0, &reqs);
            assert_eq!(g.granted, vec![false, true]);
        }
    }

    #[test]
    fn equal_ports_alternate() {
        let mut t = default_tcdm();
        let a = t.add_port(64, "a");
        let b = t.add_port(64, "b");
        let mut winners = Vec::new();
        for c in 0..4 {
            let reqs = [BankRequest::read(a, [24]), BankRequest::read(b, [24])];
            let g = t.arbitrate(c, &reqs);
            assert_eq!(g.granted.iter().filter(|&&x| x).count(), 1);
            winners.push(if g.granted[0] { 'A' } else { 'B' });
        }
        assert_eq!(winners, vec!['A', 'B', 'A', 'B']);
    }

    #[test]
    fn store_then_load() {
        let mut t = default_tcdm();
        let p = t.add_port(64, "p");
        let w = BankRequest::byte_range(p, AccessKind::Write, 0, &[0xab], 8);
        assert_eq!(t.step(0, &[w]), vec![Outcome::WriteAck]);
        assert_eq!(t.step(1, &[BankRequest::read(p, [0])]), vec![Outcome::Read(vec![0xab])]);
        assert_eq!(t.step(2, &[BankRequest::read(p, [4096])]), vec![Outcome::Read(vec![0])]);
    }

    #[test]
    fn wide_read_concatenates_banks() {
        let mut t = default_tcdm();
        let p = t.add_port(512, "p");
        for i in 0..64 {
            t.bytes_mut()[i] = i as u8;
        }
        let out = t.step(0, &[BankRequest::wide_read(p, 0, 64, 8)]);
        let expect: Vec<u64> = (0..8)
            .map(|w| u64::from_le_bytes(std::array::from_fn(|b| (w * 8 + b) as u8)))
            .collect();
        assert_eq!(out, vec![Outcome::Read(expect)]);
    }

    #[test]
    fn read_sees_cycle_start_state() {
        let mut t = default_tcdm();
        let r = t.add_port(64, "r");
        let w = t.add_port(64, "w");
        t.bytes_mut()[8] = 7;
        // Different banks: both granted; the read still sees the old value.
        let reqs = [
            BankRequest::read(r, [8]),
            BankRequest::byte_range(w, AccessKind::Write, 16, &[1], 8),
        ];
        let out = t.step(0, &reqs);
        assert_eq!(out[0], Outcome::Read(vec![7]));
        assert_eq!(out[1], Outcome::WriteAck);
        // Same bank: only one is served.
        let reqs = [
            BankRequest::read(r, [8]),
            BankRequest::byte_range(w, AccessKind::Write, 8, &[9], 8),
        ];
        let g = t.arbitrate(1, &reqs);
        assert_eq!(g.granted.iter().filter(|&&x| x).count(), 1);
    }

    #[test]
    fn self_conflict_detected() {
        let t = default_tcdm();
        let req = BankRequest::read(0, [0, 256]);
        assert_eq!(t.check_request(&req), Err(TcdmError::SelfConflict { bank: 0 }));
    }

    #[test]
    fn trace_format() {
        let mut t = default_tcdm();
        t.enable_trace();
        let a = t.add_port(64, "a");
        let b = t.add_port(64, "b");
        t.arbitrate(5, &[BankRequest::read(a, [0]), BankRequest::read(b, [0])]);
        let csv = trace_csv(&t.take_trace());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "cycle,port,bank,kind,addr,outcome");
        assert_eq!(lines[1], "5,0,0,read,0x0,granted");
        assert_eq!(lines[2], "5,1,0,read,0x0,stalled");
    }
}
