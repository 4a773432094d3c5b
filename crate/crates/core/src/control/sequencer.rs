// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Control-core sequencer: one instruction per cycle unless stalled.

use thiserror::Error;

use super::barrier::BarrierUnit;
use super::csr::{CsrError, WriteAck};
use super::program::{ControlInstruction, KernelProgram};
use crate::dma::{DmaDescriptor, DmaError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ControlError {
    #[error("core `{core}` references unattached device `{device}`")]
    ProgramFault { core: String, device: String },
    #[error(transparent)]
    Csr(#[from] CsrError),
    #[error(transparent)]
    Dma(#[from] DmaError),
    #[error("deadlock at cycle {cycle}: blocked cores {blocked:?}")]
    Deadlock { cycle: u64, blocked: Vec<String> },
}

/// Cluster side of the control interface, as seen by one core.
pub trait ControlTarget {
    fn csr_write(&mut self, core: usize, device: &str, reg: usize, value: i64, cycle: u64)
        -> Result<WriteAck, ControlError>;
    fn csr_read(&mut self, core: usize, device: &str, reg: usize) -> Result<i64, ControlError>;
    /// Busy or holding a queued launch.
    fn device_occupied(&self, core: usize, device: &str) -> Result<bool, ControlError>;
    /// False when the core's DMA is still busy.
    fn dma_start(&mut self, core: usize, desc: &DmaDescriptor, cycle: u64) -> Result<bool, ControlError>;
    fn dma_busy(&self, core: usize) -> Result<bool, ControlError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StallReason {
    CsrBackpressure,
    WaitDone,
    DmaBusy,
    WaitDma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepResult {
    Issued,
    Stalled(StallReason),
    AtBarrier(u64),
    Finished,
}

#[derive(Debug, Clone)]
pub struct Sequencer {
    pub core: usize,
    pub pc: usize,
    barrier: Option<u64>,
    pub scratch: Vec<i64>,
    pub issued: u64,
    pub stall_cycles: u64,
    pub barrier_cycles: u64,
    pub finished_at: Option<u64>,
}

impl Sequencer {
    pub fn new(core: usize) -> Self {
        Sequencer {
            core,
            pc: 0,
            barrier: None,
            scratch: Vec::new(),
            issued: 0,
            stall_cycles: 0,
            barrier_cycles: 0,
            finished_at: None,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.finished_at.is_some()
    }

    pub fn waiting_barrier(&self) -> Option<u64> {
        self.barrier
    }

    /// Advances the sequencer by one cycle.
    pub fn step(
        &mut self,
        cycle: u64,
        program: &KernelProgram,
        target: &mut dyn ControlTarget,
        barriers: &mut BarrierUnit,
    ) -> Result<StepResult, ControlError> {
        if self.finished_at.is_some() {
            return Ok(StepResult::Finished);
        }
        if let Some(id) = self.barrier {
            if !barriers.take_release(self.core, cycle) {
                self.barrier_cycles += 1;
                return Ok(StepResult::AtBarrier(id));
            }
            self.barrier = None;
        }
        let Some(instr) = program.instructions.get(self.pc) else {
            self.finished_at = Some(cycle);
            return Ok(StepResult::Finished);
        };
        let core = self.core;
        let stall = match instr {
            ControlInstruction::CsrWrite { device, reg, value } => {
                match target.csr_write(core, device, *reg, *value, cycle)? {
                    WriteAck::Stall => Some(StallReason::CsrBackpressure),
                    _ => None,
                }
            }
            ControlInstruction::CsrRead { device, reg } => {
                let v = target.csr_read(core, device, *reg)?;
                self.scratch.push(v);
                None
            }
            ControlInstruction::WaitDone { device } => {
                target.device_occupied(core, device)?.then_some(StallReason::WaitDone)
            }
            ControlInstruction::DmaStart(desc) => {
                (!target.dma_start(core, desc, cycle)?).then_some(StallReason::DmaBusy)
            }
            ControlInstruction::WaitDma => target.dma_busy(core)?.then_some(StallReason::WaitDma),
            ControlInstruction::BarrierArrive(id) => {
                barriers.arrive(*id, core, cycle);
                self.barrier = Some(*id);
                None
            }
        };
        match stall {
            Some(r) => {
                self.stall_cycles += 1;
                Ok(StepResult::Stalled(r))
            }
            None => {
                self.pc += 1;
                self.issued += 1;
                Ok(StepResult::Issued)
            }
        }
    }
}

/// Deadlock when every unfinished core waits at a barrier that has no
/// scheduled release and no device can make progress.
pub fn detect_deadlock(
    cycle: u64,
    seqs: &[Sequencer],
    barriers: &BarrierUnit,
    anything_busy: bool,
    core_names: &[String],
) -> Result<(), ControlError> {
    if anything_busy {
        return Ok(());
    }
    let mut blocked = Vec::new();
    for s in seqs {
        if s.is_finished() {
            continue;
        }
        match s.barrier {
            Some(_) if !barriers.has_scheduled_release(s.core) => blocked.push(core_names[s.core].clone()),
            _ => return Ok(()),
        }
    }
    if blocked.is_empty() {
        return Ok(());
    }
    Err(ControlError::Deadlock { cycle, blocked })
}
