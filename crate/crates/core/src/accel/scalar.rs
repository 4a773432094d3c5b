// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Scalar fallback execution on a control core.
//!
//! A scalar task is programmed through the core's own register block:
//! `OP`, then three operand views of five words each (offset, pitch, rows,
//! cols, element bytes) for input 0, input 1 and the output, then the
//! window, stride and input width used by max pooling.

use super::golden::{add_golden, fc_golden, gemm_golden, maxpool_golden, narrow_golden, relu_golden, window_out};
use super::AccelError;
use crate::config::ScalarCostModel;
use crate::control::csr::scalar::{arg, NUM_ARGS, OP};
use crate::tensor::{DType, MatView, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarOp {
    Matmul,
    Fc,
    Maxpool { k: usize, s: usize },
    Relu,
    Add,
    Narrow,
}

impl ScalarOp {
    pub fn code(self) -> i64 {
        match self {
            ScalarOp::Matmul => 1,
            ScalarOp::Fc => 2,
            ScalarOp::Maxpool { .. } => 3,
            ScalarOp::Relu => 4,
            ScalarOp::Add => 5,
            ScalarOp::Narrow => 6,
        }
    }

    pub fn arity(self) -> usize {
        match self {
            ScalarOp::Matmul | ScalarOp::Fc | ScalarOp::Add => 2,
            _ => 1,
        }
    }
}

/// Cycles for `op` on inputs of the given shapes.
pub fn scalar_cycles(op: ScalarOp, shapes: &[&[usize]], cost: &ScalarCostModel) -> Result<u64, AccelError> {
    let n = |s: &[usize]| s.iter().product::<usize>() as u64;
    if shapes.len() != op.arity() {
        return Err(AccelError::UnsupportedOp(format!("{op:?} takes {} inputs", op.arity())));
    }
    Ok(match op {
        ScalarOp::Matmul => match (shapes[0], shapes[1]) {
            (&[m, k], &[_, nn]) => (m * k * nn) as u64 * cost.cycles_per_mac,
            _ => return Err(AccelError::ShapeMismatch("matmul expects 2D operands".into())),
        },
        ScalarOp::Fc => match shapes[1] {
            &[k, nn] => (k * nn) as u64 * cost.cycles_per_mac,
            _ => return Err(AccelError::ShapeMismatch("fc weight must be 2D".into())),
        },
        ScalarOp::Maxpool { k, s } => match shapes[0] {
            &[h, w, c] if h >= k && w >= k && s > 0 => {
                (window_out(h, k, s) * window_out(w, k, s) * c * k * k) as u64 * cost.cycles_per_elementwise_op
            }
            &[] => 0,
            _ => return Err(AccelError::ShapeMismatch("maxpool expects [H,W,C]".into())),
        },
        ScalarOp::Relu | ScalarOp::Add | ScalarOp::Narrow => n(shapes[0]) * cost.cycles_per_elementwise_op,
    })
}

/// Cycle cost and result of running `op` on the control core.
pub fn scalar_execute(op: ScalarOp, inputs: &[&Tensor], cost: &ScalarCostModel) -> Result<(u64, Tensor), AccelError> {
    let shapes: Vec<&[usize]> = inputs.iter().map(|t| t.shape.as_slice()).collect();
    let cycles = scalar_cycles(op, &shapes, cost)?;
    let out = match op {
        ScalarOp::Matmul => gemm_golden(inputs[0], inputs[1])?,
        ScalarOp::Fc => fc_golden(inputs[0], inputs[1])?,
        ScalarOp::Maxpool { k, s } => maxpool_golden(inputs[0], k, s)?,
        ScalarOp::Relu => relu_golden(inputs[0]),
        ScalarOp::Add => add_golden(inputs[0], inputs[1])?,
        ScalarOp::Narrow => narrow_golden(inputs[0]),
    };
    Ok((cycles, out))
}

/// A scalar task bound to scratchpad operands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarTask {
    pub op: ScalarOp,
    pub inputs: [Option<MatView>; 2],
    pub output: MatView,
    /// Input width in pixels for max pooling; rows of the input view are
    /// `H * W` pixels.
    pub width: usize,
}

const VIEW_WORDS: usize = 5;

fn put_view(args: &mut [i64], slot: usize, v: &MatView) {
    let a = &mut args[slot * VIEW_WORDS..];
    a[0] = v.offset as i64;
    a[1] = v.pitch as i64;
    a[2] = v.rows as i64;
    a[3] = v.cols as i64;
    a[4] = v.dtype.code();
}

fn get_view(args: &[i64], slot: usize) -> Result<MatView, AccelError> {
    let a = &args[slot * VIEW_WORDS..];
    let dtype = DType::from_code(a[4]).ok_or_else(|| AccelError::UnsupportedOp(format!("element size {}", a[4])))?;
    if a[..4].iter().any(|&v| v < 0) {
        return Err(AccelError::ShapeMismatch("negative operand field".into()));
    }
    Ok(MatView { offset: a[0] as usize, pitch: a[1] as usize, rows: a[2] as usize, cols: a[3] as usize, dtype })
}

impl ScalarTask {
    /// Register values relative to the parameter block, `OP` first.
    pub fn encode(&self) -> Vec<i64> {
        let mut regs = vec![0i64; 1 + NUM_ARGS];
        regs[OP] = self.op.code();
        let args = &mut regs[arg(0)..];
        for (slot, v) in self.inputs.iter().enumerate() {
            if let Some(v) = v {
                put_view(args, slot, v);
            }
        }
        put_view(args, 2, &self.output);
        if let ScalarOp::Maxpool { k, s } = self.op {
            args[15] = k as i64;
            args[16] = s as i64;
        }
        args[17] = self.width as i64;
        regs
    }

    pub fn decode(params: &[i64]) -> Result<Self, AccelError> {
        let args = &params[arg(0)..];
        let op = match params[OP] {
            1 => ScalarOp::Matmul,
            2 => ScalarOp::Fc,
            3 => ScalarOp::Maxpool { k: args[15].max(0) as usize, s: args[16].max(0) as usize },
            4 => ScalarOp::Relu,
            5 => ScalarOp::Add,
            6 => ScalarOp::Narrow,
            other => return Err(AccelError::UnsupportedOp(format!("scalar op code {other}"))),
        };
        let mut inputs = [None, None];
        for (slot, item) in inputs.iter_mut().enumerate().take(op.arity()) {
            *item = Some(get_view(args, slot)?);
        }
        Ok(ScalarTask { op, inputs, output: get_view(args, 2)?, width: args[17].max(0) as usize })
    }

    fn input_tensor(&self, slot: usize, mem: &[u8]) -> Tensor {
        let v = self.inputs[slot].expect("operand present");
        let t = v.read(mem);
        match self.op {
            ScalarOp::Maxpool { .. } if self.width > 0 => {
                t.reshape(&[v.rows / self.width, self.width, v.cols])
            }
            _ => t,
        }
    }

    /// Reads the operands from `mem`, computes and writes the result back.
    /// Returns the cycle cost.
    pub fn run(&self, mem: &mut [u8], cost: &ScalarCostModel) -> Result<u64, AccelError> {
        let ins: Vec<Tensor> = (0..self.op.arity()).map(|s| self.input_tensor(s, mem)).collect();
        let refs: Vec<&Tensor> = ins.iter().collect();
        let (cycles, out) = scalar_execute(self.op, &refs, cost)?;
        let o = self.output;
        if out.len() != o.rows * o.cols {
            return Err(AccelError::ShapeMismatch(format!(
                "result has {} elements, output view holds {}",
                out.len(),
                o.rows * o.cols
            )));
        }
        let out = match (out.dtype, o.dtype) {
            (a, b) if a == b => out,
            (DType::I32, DType::I8) => narrow_golden(&out),
            (_, _) => Tensor { dtype: o.dtype, ..out },
        };
        o.write(&out, mem);
        Ok(cycles)
    }

    /// Cycle cost without touching memory.
    pub fn cycles(&self, cost: &ScalarCostModel) -> Result<u64, AccelError> {
        let shapes: Vec<Vec<usize>> = (0..self.op.arity())
            .map(|s| {
                let v = self.inputs[s].expect("operand present");
                match self.op {
                    ScalarOp::Maxpool { .. } if self.width > 0 => vec![v.rows / self.width, self.width, v.cols],
                    _ => vec![v.rows, v.cols],
                }
            })
            .collect();
        let refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
        scalar_cycles(self.op, &refs, cost)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cost(cpm: u64) -> ScalarCostModel {
        ScalarCostModel { cycles_per_mac: cpm, cycles_per_elementwise_op: 1 }
    }

    #[test]
    fn cycle_examples() {
        assert_eq!(scalar_cycles(ScalarOp::Matmul, &[&[8, 8], &[8, 8]], &cost(3)).unwrap(), 1536);
        assert_eq!(scalar_cycles(ScalarOp::Fc, &[&[1, 64], &[64, 10]], &cost(3)).unwrap(), 1920);
        assert_eq!(scalar_cycles(ScalarOp::Relu, &[&[0]], &cost(3)).unwrap(), 0);
        assert_eq!(scalar_cycles(ScalarOp::Maxpool { k: 2, s: 2 }, &[&[4, 4, 8]], &cost(3)).unwrap(), 4 * 8 * 4);
        assert!(matches!(scalar_cycles(ScalarOp::Add, &[&[3]], &cost(1)), Err(AccelError::UnsupportedOp(_))));
    }

    #[test]
    fn task_encoding_round_trip() {
        let v = |offset, rows, cols, dtype| MatView { offset, pitch: 64, rows, cols, dtype };
        let t = ScalarTask {
            op: ScalarOp::Maxpool { k: 2, s: 2 },
            inputs: [Some(v(0, 16, 8, DType::I8)), None],
            output: v(1024, 4, 8, DType::I8),
            width: 4,
        };
        assert_eq!(ScalarTask::decode(&t.encode()).unwrap(), t);
        assert_eq!(t.cycles(&cost(1)).unwrap(), 4 * 8 * 4);
        let mut bad = t.encode();
        bad[OP] = 42;
        assert!(ScalarTask::decode(&bad).is_err());
    }

    #[test]
    fn run_matmul_in_memory() {
        let a = Tensor::from_vec(&[2, 3], DType::I8, vec![1, 2, 3, -1, -2, -3]);
        let b = Tensor::from_vec(&[3, 2], DType::I8, vec![1, 0, 0, 1, 1, 1]);
        let av = MatView { offset: 0, pitch: 8, rows: 2, cols: 3, dtype: DType::I8 };
        let bv = MatView { offset: 64, pitch: 8, rows: 3, cols: 2, dtype: DType::I8 };
        let cv = MatView { offset: 128, pitch: 8, rows: 2, cols: 2, dtype: DType::I32 };
        let mut mem = vec![0u8; 256];
        av.write(&a, &mut mem);
        bv.write(&b, &mut mem);
        let task = ScalarTask { op: ScalarOp::Matmul, inputs: [Some(av), Some(bv)], output: cv, width: 0 };
        assert_eq!(task.run(&mut mem, &cost(2)).unwrap(), 24);
        assert_eq!(cv.read(&mem).data, vec![4, 5, -4, -5]);
    }
}
