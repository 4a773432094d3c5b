// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Dense integer tensors and their byte layouts in memory.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    I8,
    I32,
}

impl DType {
    pub fn bytes(self) -> usize {
        match self {
            DType::I8 => 1,
            DType::I32 => 4,
        }
    }

    pub fn code(self) -> i64 {
        self.bytes() as i64
    }

    pub fn from_code(code: i64) -> Option<DType> {
        match code {
            1 => Some(DType::I8),
            4 => Some(DType::I32),
            _ => None,
        }
    }

    pub fn read(self, b: &[u8]) -> i32 {
        match self {
            DType::I8 => b[0] as i8 as i32,
            DType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]),
        }
    }

    pub fn write(self, v: i32, b: &mut [u8]) {
        match self {
            DType::I8 => b[0] = v as i8 as u8,
            DType::I32 => b[..4].copy_from_slice(&v.to_le_bytes()),
        }
    }
}

/// Row-major tensor; i8 values are stored widened.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub data: Vec<i32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize], dtype: DType) -> Self {
        Tensor { shape: shape.to_vec(), dtype, data: vec![0; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], dtype: DType, data: Vec<i32>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data length mismatch");
        Tensor { shape: shape.to_vec(), dtype, data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape.to_vec();
        self
    }

    /// Rows and columns of the 2D view: all leading axes folded into rows.
    pub fn as_matrix(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            s => (s[..s.len() - 1].iter().product(), s[s.len() - 1]),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let e = self.dtype.bytes();
        let mut out = vec![0; self.data.len() * e];
        for (i, &v) in self.data.iter().enumerate() {
            self.dtype.write(v, &mut out[i * e..]);
        }
        out
    }
}

/// Pitched 2D placement of a tensor in a byte-addressed memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatView {
    pub offset: usize,
    pub pitch: usize,
    pub rows: usize,
    pub cols: usize,
    pub dtype: DType,
}

impl MatView {
    pub fn row_bytes(&self) -> usize {
        self.cols * self.dtype.bytes()
    }

    pub fn read(&self, mem: &[u8]) -> Tensor {
        let e = self.dtype.bytes();
        let mut data = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            let row = self.offset + r * self.pitch;
            for c in 0..self.cols {
                data.push(self.dtype.read(&mem[row + c * e..]));
            }
        }
        Tensor::from_vec(&[self.rows, self.cols], self.dtype, data)
    }

    /// Writes `t` (interpreted as rows x cols) into `mem`.
    pub fn write(&self, t: &Tensor, mem: &mut [u8]) {
        assert_eq!(t.data.len(), self.rows * self.cols);
        let e = self.dtype.bytes();
        for r in 0..self.rows {
            let row = self.offset + r * self.pitch;
            for c in 0..self.cols {
                self.dtype.write(t.data[r * self.cols + c], &mut mem[row + c * e..]);
            }
        }
    }
}

/// Little-endian bytes of an element group, `bank_bytes` per word.
pub fn group_bytes(words: &[u64], bank_bytes: usize) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_le_bytes().into_iter().take(bank_bytes)).collect()
}

pub fn bytes_to_group(bytes: &[u8], bank_bytes: usize) -> Vec<u64> {
    bytes
        .chunks(bank_bytes)
        .map(|c| {
            let mut b = [0u8; 8];
            b[..c.len()].copy_from_slice(c);
            u64::from_le_bytes(b)
        })
        .collect()
}
