// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! CSR register layout and the double-buffered register file.
//!
//! Every device exposes the same kind of register map, only the indices
//! differ:
//!
//! ```text
//! for each streamer channel c (config order), a block of 5 + 2*max_loop_depth regs:
//!   +0 BASE            byte address of the first element group
//!   +1 SPATIAL_ROWS    rows per element group (0 or 1 = one row)
//!   +2 SPATIAL_STRIDE  bytes between rows of a group
//!   +3 ROW_WORDS       bank words per row (0 = channel width / rows)
//!   +4 DEPTH           number of temporal loops
//!   +5+2i BOUND_i      iterations of loop i (outermost first)
//!   +6+2i STRIDE_i     signed byte stride of loop i
//! compute parameters    gemm: M, K, N   maxpool: WINDOW, ELEM_BYTES
//!                       scalar unit: OP, ARG0..ARG17
//! LAUNCH               any write starts (or queues) the shadow configuration
//! STATUS               read-only: bit0 busy, bit1 launch pending
//! DONE                 read-only: number of completed tasks
//! ```

use thiserror::Error;

use crate::config::AcceleratorConfig;

pub mod chan {
    pub const BASE: usize = 0;
    pub const SPATIAL_ROWS: usize = 1;
    pub const SPATIAL_STRIDE: usize = 2;
    pub const ROW_WORDS: usize = 3;
    pub const DEPTH: usize = 4;

    pub const fn bound(i: usize) -> usize {
        5 + 2 * i
    }

    pub const fn stride(i: usize) -> usize {
        6 + 2 * i
    }

    pub const fn block_len(max_depth: usize) -> usize {
        5 + 2 * max_depth
    }
}

/// Parameter indices of the scalar fallback unit, relative to `params`.
pub mod scalar {
    pub const OP: usize = 0;
    pub const NUM_ARGS: usize = 18;

    pub const fn arg(i: usize) -> usize {
        1 + i
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CsrError {
    #[error("register {reg} is not valid for device `{device}`")]
    InvalidRegister { device: String, reg: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrLayout {
    /// Start index of each channel block.
    pub channels: Vec<usize>,
    pub channel_block: Vec<usize>,
    pub params: usize,
    pub num_params: usize,
    pub launch: usize,
    pub status: usize,
    pub done: usize,
}

impl CsrLayout {
    fn build(blocks: Vec<usize>, num_params: usize) -> Self {
        let mut channels = Vec::with_capacity(blocks.len());
        let mut at = 0;
        for &b in &blocks {
            channels.push(at);
            at += b;
        }
        CsrLayout {
            channels,
            channel_block: blocks,
            params: at,
            num_params,
            launch: at + num_params,
            status: at + num_params + 1,
            done: at + num_params + 2,
        }
    }

    pub fn for_accelerator(acc: &AcceleratorConfig) -> Self {
        let blocks = acc.channels.iter().map(|c| chan::block_len(c.max_loop_depth)).collect();
        Self::build(blocks, acc.kind.num_params())
    }

    pub fn scalar() -> Self {
        Self::build(Vec::new(), 1 + scalar::NUM_ARGS)
    }

    pub fn len(&self) -> usize {
        self.done + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn channel_reg(&self, channel: usize, offset: usize) -> usize {
        self.channels[channel] + offset
    }

    pub fn param(&self, i: usize) -> usize {
        self.params + i
    }

    /// Register values of one channel block.
    pub fn channel_slice<'a>(&self, regs: &'a [i64], channel: usize) -> &'a [i64] {
        let start = self.channels[channel];
        &regs[start..start + self.channel_block[channel]]
    }
}

/// Result of a CSR write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteAck {
    /// Configuration word stored in the shadow set.
    Stored,
    /// Shadow committed; the device starts next cycle.
    Launched,
    /// Device busy; the launch is held until the running task ends.
    Queued,
    /// Shadow set locked by a pending launch; retry next cycle.
    Stall,
}

#[derive(Debug, Clone)]
pub struct CsrFile {
    pub device: String,
    pub layout: CsrLayout,
    active: Vec<i64>,
    shadow: Vec<i64>,
    busy: bool,
    pending: bool,
    done: u64,
}

impl CsrFile {
    pub fn new(device: impl Into<String>, layout: CsrLayout) -> Self {
        let n = layout.params + layout.num_params;
        CsrFile {
            device: device.into(),
            layout,
            active: vec![0; n],
            shadow: vec![0; n],
            busy: false,
            pending: false,
            done: 0,
        }
    }

    fn invalid(&self, reg: usize) -> CsrError {
        CsrError::InvalidRegister { device: self.device.clone(), reg }
    }

    pub fn write(&mut self, reg: usize, value: i64) -> Result<WriteAck, CsrError> {
        let l = &self.layout;
        if reg < l.launch {
            if self.pending {
                return Ok(WriteAck::Stall);
            }
            self.shadow[reg] = value;
            Ok(WriteAck::Stored)
        } else if reg == l.launch {
            match (self.busy, self.pending) {
                (false, false) => {
                    self.active.clone_from(&self.shadow);
                    self.busy = true;
                    Ok(WriteAck::Launched)
                }
                (true, false) => {
                    self.pending = true;
                    Ok(WriteAck::Queued)
                }
                (_, true) => Ok(WriteAck::Stall),
            }
        } else {
            Err(self.invalid(reg))
        }
    }

    /// Configuration registers read back the active set.
    pub fn read(&self, reg: usize) -> Result<i64, CsrError> {
        let l = &self.layout;
        if reg < l.launch {
            Ok(self.active[reg])
        } else if reg == l.launch {
            Ok(0)
        } else if reg == l.status {
            Ok(self.busy as i64 | (self.pending as i64) << 1)
        } else if reg == l.done {
            Ok(self.done as i64)
        } else {
            Err(self.invalid(reg))
        }
    }

    pub fn active(&self) -> &[i64] {
        &self.active
    }

    pub fn is_busy(&self) -> bool {
        self.busy
    }

    pub fn has_pending(&self) -> bool {
        self.pending
    }

    /// True while the device runs or has a queued launch.
    pub fn is_occupied(&self) -> bool {
        self.busy || self.pending
    }

    pub fn done_count(&self) -> u64 {
        self.done
    }

    /// Marks the running task complete. Returns true when a queued launch
    /// was committed and a new task starts.
    pub fn finish(&mut self) -> bool {
        debug_assert!(self.busy);
        self.done += 1;
        if self.pending {
            self.active.clone_from(&self.shadow);
            self.pending = false;
            true
        } else {
            self.busy = false;
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ClusterConfig;

    fn gemm_file() -> CsrFile {
        let cfg = ClusterConfig::bundled("fig6d").unwrap();
        CsrFile::new("gemm0", CsrLayout::for_accelerator(cfg.accelerator("gemm0").unwrap()))
    }

    #[test]
    fn gemm_layout_indices() {
        let f = gemm_file();
        let l = &f.layout;
        assert_eq!(l.channels, vec![0, 17, 34]);
        assert_eq!(l.params, 51);
        assert_eq!(l.launch, 54);
        assert_eq!(l.status, 55);
        assert_eq!(l.done, 56);
    }

    #[test]
    fn shadow_write_leaves_active() {
        let mut f = gemm_file();
        assert_eq!(f.write(5, 4), Ok(WriteAck::Stored));
        assert_eq!(f.read(5), Ok(0));
        assert_eq!(f.write(f.layout.launch, 1), Ok(WriteAck::Launched));
        assert_eq!(f.read(5), Ok(4));
        assert!(f.is_busy());
    }

    #[test]
    fn preload_while_busy() {
        let mut f = gemm_file();
        let launch = f.layout.launch;
        f.write(launch, 1).unwrap();
        assert_eq!(f.write(5, 9), Ok(WriteAck::Stored));
        assert_eq!(f.read(5), Ok(0));
        assert_eq!(f.write(launch, 1), Ok(WriteAck::Queued));
        assert_eq!(f.write(5, 10), Ok(WriteAck::Stall));
        assert_eq!(f.write(launch, 1), Ok(WriteAck::Stall));
        assert_eq!(f.read(f.layout.status), Ok(3));
        assert!(f.finish());
        assert_eq!(f.read(5), Ok(9));
        assert!(f.is_busy());
        assert!(!f.finish());
        assert_eq!(f.read(f.layout.done), Ok(2));
        assert_eq!(f.read(f.layout.status), Ok(0));
    }

    #[test]
    fn invalid_register() {
        let mut f = gemm_file();
        let status = f.layout.status;
        assert!(matches!(f.write(status, 1), Err(CsrError::InvalidRegister { .. })));
        assert!(f.read(1000).is_err());
    }
}
