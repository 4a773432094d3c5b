// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Pure functional oracles. Accumulation is exact for i8 operands and
//! wraps for i32 operands.

use super::AccelError;
use crate::tensor::{DType, Tensor};

fn shape_err(msg: impl Into<String>) -> AccelError {
    AccelError::ShapeMismatch(msg.into())
}

/// `C[M,N] = A[M,K] * B[K,N]` with i32 accumulation.
pub fn gemm_golden(a: &Tensor, b: &Tensor) -> Result<Tensor, AccelError> {
    let (&[m, k], &[k2, n]) = (a.shape.as_slice(), b.shape.as_slice()) else {
        return Err(shape_err(format!("gemm expects 2D operands, got {:?} and {:?}", a.shape, b.shape)));
    };
    if k != k2 {
        return Err(shape_err(format!("inner dimensions differ: {k} vs {k2}")));
    }
    let mut c = vec![0i32; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (cv, &bv) in c[i * n..(i + 1) * n].iter_mut().zip(brow) {
                *cv = cv.wrapping_add(av.wrapping_mul(bv));
            }
        }
    }
    Ok(Tensor::from_vec(&[m, n], DType::I32, c))
}

/// Output extent of a valid window scan.
pub fn window_out(input: usize, k: usize, s: usize) -> usize {
    (input - k) / s + 1
}

/// Max pooling over `[H, W, C]` (or `[H, W]`) input.
pub fn maxpool_golden(input: &Tensor, k: usize, s: usize) -> Result<Tensor, AccelError> {
    let (h, w, c) = match input.shape.as_slice() {
        &[h, w] => (h, w, 1),
        &[h, w, c] => (h, w, c),
        other => return Err(shape_err(format!("maxpool expects [H,W] or [H,W,C], got {other:?}"))),
    };
    if k == 0 || s == 0 || h < k || w < k {
        return Err(shape_err(format!("window {k} stride {s} does not fit {h}x{w}")));
    }
    let (oh, ow) = (window_out(h, k, s), window_out(w, k, s));
    let mut out = Vec::with_capacity(oh * ow * c);
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..c {
                let mut m = i32::MIN;
                for dy in 0..k {
                    for dx in 0..k {
                        m = m.max(input.data[((y * s + dy) * w + x * s + dx) * c + ch]);
                    }
                }
                out.push(m);
            }
        }
    }
    let shape: Vec<usize> = if input.shape.len() == 2 { vec![oh, ow] } else { vec![oh, ow, c] };
    Ok(Tensor::from_vec(&shape, input.dtype, out))
}

/// Valid convolution of `[H, W, Cin]` input with `[KH, KW, Cin, Cout]` weights.
pub fn conv2d_golden(input: &Tensor, weight: &Tensor, stride: usize) -> Result<Tensor, AccelError> {
    let (&[h, w, cin], &[kh, kw, wcin, cout]) = (input.shape.as_slice(), weight.shape.as_slice()) else {
        return Err(shape_err(format!("conv expects [H,W,C] and [KH,KW,C,F], got {:?} and {:?}", input.shape, weight.shape)));
    };
    if cin != wcin || h < kh || w < kw || stride == 0 {
        return Err(shape_err(format!("conv shapes {:?} and {:?} do not conform", input.shape, weight.shape)));
    }
    let (oh, ow) = (window_out(h, kh, stride), window_out(w, kw, stride));
    let mut out = vec![0i32; oh * ow * cout];
    for y in 0..oh {
        for x in 0..ow {
            let o = &mut out[(y * ow + x) * cout..(y * ow + x + 1) * cout];
            for dy in 0..kh {
                for dx in 0..kw {
                    for ci in 0..cin {
                        let v = input.data[((y * stride + dy) * w + x * stride + dx) * cin + ci];
                        let wrow = &weight.data[((dy * kw + dx) * cin + ci) * cout..][..cout];
                        for (ov, &wv) in o.iter_mut().zip(wrow) {
                            *ov = ov.wrapping_add(v.wrapping_mul(wv));
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_vec(&[oh, ow, cout], DType::I32, out))
}

/// Fully connected layer: the input is flattened to one row.
pub fn fc_golden(input: &Tensor, weight: &Tensor) -> Result<Tensor, AccelError> {
    let flat = Tensor::from_vec(&[1, input.len()], input.dtype, input.data.clone());
    gemm_golden(&flat, weight)
}

pub fn relu_golden(x: &Tensor) -> Tensor {
    Tensor { shape: x.shape.clone(), dtype: x.dtype, data: x.data.iter().map(|&v| v.max(0)).collect() }
}

pub fn add_golden(a: &Tensor, b: &Tensor) -> Result<Tensor, AccelError> {
    if a.shape != b.shape || a.dtype != b.dtype {
        return Err(shape_err(format!("add operands {:?} and {:?} differ", a.shape, b.shape)));
    }
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| match a.dtype {
            DType::I8 => (x + y).clamp(-128, 127),
            DType::I32 => x.wrapping_add(y),
        })
        .collect();
    Ok(Tensor { shape: a.shape.clone(), dtype: a.dtype, data })
}

/// Saturating i32 to i8 conversion.
pub fn narrow_golden(x: &Tensor) -> Tensor {
    Tensor { shape: x.shape.clone(), dtype: DType::I8, data: x.data.iter().map(|&v| v.clamp(-128, 127)).collect() }
}
