// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Control plane: CSR files, control-core programs, sequencers, barriers.

pub mod barrier;
pub mod csr;
pub mod program;
pub mod sequencer;

pub use barrier::{barrier_sync, BarrierRelease, BarrierUnit};
pub use csr::{CsrError, CsrFile, CsrLayout, WriteAck};
pub use program::{check_programs, ControlInstruction, KernelProgram, ProgramError};
pub use sequencer::{detect_deadlock, ControlError, ControlTarget, Sequencer, StallReason, StepResult};
