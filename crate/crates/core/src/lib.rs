// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Cycle-level simulator and compiler for a heterogeneous accelerator cluster.

pub mod accel;
pub mod compiler;
pub mod config;
pub mod control;
pub mod dma;
pub mod experiments;
pub mod sim;
pub mod streamer;
pub mod tcdm;
pub mod tensor;
