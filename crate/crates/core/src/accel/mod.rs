// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Accelerator datapaths, scalar fallback and their functional oracles.

use thiserror::Error;

pub mod datapath;
pub mod golden;
pub mod scalar;

pub use datapath::{gemm_tile_cycles, GemmDatapath, MaxPoolDatapath, StepStatus};
pub use golden::{add_golden, conv2d_golden, fc_golden, gemm_golden, maxpool_golden, narrow_golden, relu_golden};
pub use scalar::{scalar_cycles, scalar_execute, ScalarOp, ScalarTask};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AccelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unsupported operation: {0}")]
    UnsupportedOp(String),
    #[error("stream `{stream}` has {groups} element groups, task needs {expected}")]
    StreamMismatch { stream: String, groups: usize, expected: usize },
}
