// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Control programs and their line-oriented text form.
//!
//! ```text
//! # core <id>
//! CSRW <dev> <reg> <value>
//! CSRR <dev> <reg>
//! WAIT <dev>
//! DMA <src> <dst> <row_bytes> <src_stride> <dst_stride> <rows>
//! WDMA
//! BAR <id>
//! ```
//!
//! All numbers are decimal. Lines starting with `#` other than the header
//! are comments.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::config::ClusterConfig;
use crate::dma::DmaDescriptor;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProgramError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("core `{core}` uses device `{device}` it does not own")]
    UnattachedDevice { core: String, device: String },
    #[error("core `{core}` issues DMA transfers without an attached DMA")]
    NoDma { core: String },
    #[error("unknown core `{0}`")]
    UnknownCore(String),
    #[error("more than one program for core `{0}`")]
    DuplicateCore(String),
    #[error("barrier {id} appears {count} times on `{core}` but {expected} times on `{other}`")]
    BarrierMismatch { id: u64, core: String, count: usize, other: String, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControlInstruction {
    CsrWrite { device: String, reg: usize, value: i64 },
    CsrRead { device: String, reg: usize },
    WaitDone { device: String },
    DmaStart(DmaDescriptor),
    WaitDma,
    BarrierArrive(u64),
}

impl fmt::Display for ControlInstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ControlInstruction::*;
        match self {
            CsrWrite { device, reg, value } => write!(f, "CSRW {device} {reg} {value}"),
            CsrRead { device, reg } => write!(f, "CSRR {device} {reg}"),
            WaitDone { device } => write!(f, "WAIT {device}"),
            DmaStart(d) => write!(
                f,
                "DMA {} {} {} {} {} {}",
                d.src, d.dst, d.row_bytes, d.src_stride, d.dst_stride, d.rows
            ),
            WaitDma => f.write_str("WDMA"),
            BarrierArrive(id) => write!(f, "BAR {id}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KernelProgram {
    pub core: String,
    pub instructions: Vec<ControlInstruction>,
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, ProgramError> {
    let tok = tok.ok_or_else(|| ProgramError::Syntax { line, msg: format!("missing {what}") })?;
    tok.parse()
        .map_err(|_| ProgramError::Syntax { line, msg: format!("bad {what} `{tok}`") })
}

impl KernelProgram {
    pub fn new(core: impl Into<String>) -> Self {
        KernelProgram { core: core.into(), instructions: Vec::new() }
    }

    pub fn push(&mut self, i: ControlInstruction) {
        self.instructions.push(i);
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# core {}\n", self.core);
        for i in &self.instructions {
            s.push_str(&i.to_string());
            s.push('\n');
        }
        s
    }

    /// Parses program text. `default_core` is used when the header is absent.
    pub fn parse(text: &str, default_core: &str) -> Result<Self, ProgramError> {
        let mut prog = KernelProgram::new(default_core);
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let l = raw.trim();
            if l.is_empty() {
                continue;
            }
            if let Some(rest) = l.strip_prefix('#') {
                let mut t = rest.split_whitespace();
                if t.next() == Some("core") {
                    if let Some(id) = t.next() {
                        prog.core = id.to_string();
                    }
                }
                continue;
            }
            let mut t = l.split_whitespace();
            let op = t.next().unwrap();
            let instr = match op {
                "CSRW" => ControlInstruction::CsrWrite {
                    device: t.next().ok_or(ProgramError::Syntax { line, msg: "missing device".into() })?.into(),
                    reg: num(t.next(), line, "register")?,
                    value: num(t.next(), line, "value")?,
                },
                "CSRR" => ControlInstruction::CsrRead {
                    device: t.next().ok_or(ProgramError::Syntax { line, msg: "missing device".into() })?.into(),
                    reg: num(t.next(), line, "register")?,
                },
                "WAIT" => ControlInstruction::WaitDone {
                    device: t.next().ok_or(ProgramError::Syntax { line, msg: "missing device".into() })?.into(),
                },
                "DMA" => ControlInstruction::DmaStart(DmaDescriptor {
                    src: num(t.next(), line, "src")?,
                    dst: num(t.next(), line, "dst")?,
                    row_bytes: num(t.next(), line, "bytes")?,
                    src_stride: num(t.next(), line, "src stride")?,
                    dst_stride: num(t.next(), line, "dst stride")?,
                    rows: num(t.next(), line, "rows")?,
                }),
                "WDMA" => ControlInstruction::WaitDma,
                "BAR" => ControlInstruction::BarrierArrive(num(t.next(), line, "barrier id")?),
                other => return Err(ProgramError::Syntax { line, msg: format!("unknown opcode `{other}`") }),
            };
            if let Some(extra) = t.next() {
                return Err(ProgramError::Syntax { line, msg: format!("trailing token `{extra}`") });
            }
            prog.push(instr);
        }
        Ok(prog)
    }

    pub fn barrier_counts(&self) -> BTreeMap<u64, usize> {
        let mut m = BTreeMap::new();
        for i in &self.instructions {
            if let ControlInstruction::BarrierArrive(id) = i {
                *m.entry(*id).or_insert(0) += 1;
            }
        }
        m
    }

    /// Every referenced device must belong to this core.
    pub fn check_attachment(&self, cfg: &ClusterConfig) -> Result<(), ProgramError> {
        let core = cfg
            .control_cores
            .iter()
            .find(|c| c.id == self.core)
            .ok_or_else(|| ProgramError::UnknownCore(self.core.clone()))?;
        for i in &self.instructions {
            match i {
                ControlInstruction::CsrWrite { device, .. }
                | ControlInstruction::CsrRead { device, .. }
                | ControlInstruction::WaitDone { device } => {
                    let owned = *device == core.id || core.accelerators.iter().any(|a| a == device);
                    if !owned {
                        return Err(ProgramError::UnattachedDevice { core: core.id.clone(), device: device.clone() });
                    }
                }
                ControlInstruction::DmaStart(_) | ControlInstruction::WaitDma if core.dma.is_empty() => {
                    return Err(ProgramError::NoDma { core: core.id.clone() });
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Load-time checks across all programs of a cluster: attachment, and equal
/// barrier participation on every core.
pub fn check_programs(cfg: &ClusterConfig, programs: &[KernelProgram]) -> Result<(), ProgramError> {
    for (i, p) in programs.iter().enumerate() {
        p.check_attachment(cfg)?;
        if programs[..i].iter().any(|q| q.core == p.core) {
            return Err(ProgramError::DuplicateCore(p.core.clone()));
        }
    }
    let counts: Vec<(&str, BTreeMap<u64, usize>)> = cfg
        .control_cores
        .iter()
        .map(|c| {
            let m = programs.iter().find(|p| p.core == c.id).map(|p| p.barrier_counts()).unwrap_or_default();
            (c.id.as_str(), m)
        })
        .collect();
    let mut ids: Vec<u64> = counts.iter().flat_map(|(_, m)| m.keys().copied()).collect();
    ids.sort_unstable();
    ids.dedup();
    for id in ids {
        let (first_core, first) = (&counts[0].0, counts[0].1.get(&id).copied().unwrap_or(0));
        for (core, m) in &counts[1..] {
            let c = m.get(&id).copied().unwrap_or(0);
            if c != first {
                return Err(ProgramError::BarrierMismatch {
                    id,
                    core: core.to_string(),
                    count: c,
                    other: first_core.to_string(),
                    expected: first,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dma::EXT_BASE;

    #[test]
    fn text_round_trip_exact() {
        let mut p = KernelProgram::new("core1");
        p.push(ControlInstruction::CsrWrite { device: "maxpool0".into(), reg: 3, value: -8 });
        p.push(ControlInstruction::CsrRead { device: "maxpool0".into(), reg: 30 });
        p.push(ControlInstruction::WaitDone { device: "maxpool0".into() });
        p.push(ControlInstruction::DmaStart(DmaDescriptor {
            src: EXT_BASE,
            dst: 64,
            row_bytes: 24,
            rows: 16,
            src_stride: 8,
            dst_stride: -72,
        }));
        p.push(ControlInstruction::WaitDma);
        p.push(ControlInstruction::BarrierArrive(7));
        let text = p.to_text();
        assert_eq!(
            text,
            "# core core1\nCSRW maxpool0 3 -8\nCSRR maxpool0 30\nWAIT maxpool0\n\
             DMA 2147483648 64 24 8 -72 16\nWDMA\nBAR 7\n"
        );
        assert_eq!(KernelProgram::parse(&text, "x").unwrap(), p);
    }

    #[test]
    fn syntax_errors() {
        assert!(matches!(KernelProgram::parse("JUMP 3", "c"), Err(ProgramError::Syntax { line: 1, .. })));
        assert!(matches!(KernelProgram::parse("\nBAR x", "c"), Err(ProgramError::Syntax { line: 2, .. })));
        assert!(matches!(KernelProgram::parse("WDMA 1", "c"), Err(ProgramError::Syntax { .. })));
    }

    #[test]
    fn attachment_checked() {
        let cfg = ClusterConfig::bundled("fig6d").unwrap();
        let p = KernelProgram::parse("# core core0\nWAIT maxpool0\n", "").unwrap();
        assert!(matches!(check_programs(&cfg, &[p]), Err(ProgramError::UnattachedDevice { .. })));
        let p = KernelProgram::parse("# core core0\nWDMA\n", "").unwrap();
        assert!(matches!(check_programs(&cfg, &[p]), Err(ProgramError::NoDma { .. })));
        let p = KernelProgram::parse("# core core0\nWAIT core0\nWAIT gemm0\n", "").unwrap();
        assert!(check_programs(&cfg, &[p]).is_ok());
    }

    #[test]
    fn barrier_participation_checked() {
        let cfg = ClusterConfig::bundled("fig6d").unwrap();
        let a = KernelProgram::parse("# core core0\nBAR 1\nBAR 2\n", "").unwrap();
        let b = KernelProgram::parse("# core core1\nBAR 2\n", "").unwrap();
        assert!(matches!(check_programs(&cfg, &[a.clone(), b]), Err(ProgramError::BarrierMismatch { id: 1, .. })));
        let b = KernelProgram::parse("# core core1\nBAR 2\nBAR 1\n", "").unwrap();
        assert!(check_programs(&cfg, &[a, b]).is_ok());
    }
}
