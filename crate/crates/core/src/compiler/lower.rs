// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Canonicalisation: convolutions become patch extraction plus matmul.

use super::graph::{Init, Node, OpKind, Role, TensorDecl, WorkloadGraph};
use super::CompileError;

/// Rewrites every `conv2d` into `im2col` followed by `matmul`.
///
/// The conv weight `[KH,KW,Cin,Cout]` is reinterpreted as the matrix
/// `[KH*KW*Cin, Cout]`; its bytes do not change. The conv output keeps its
/// `[OH,OW,Cout]` shape, which has the same row-major storage as the matmul
/// result `[OH*OW, Cout]`.
pub fn lower_graph(graph: &WorkloadGraph) -> Result<WorkloadGraph, CompileError> {
    graph.validate()?;
    let mut out = WorkloadGraph { name: graph.name.clone(), tensors: graph.tensors.clone(), nodes: Vec::new() };
    for node in &graph.nodes {
        let OpKind::Conv2d { stride } = node.op else {
            out.nodes.push(node.clone());
            continue;
        };
        let x = graph.tensor(&node.inputs[0]).unwrap();
        let w = graph.tensor(&node.inputs[1]).unwrap();
        let (kh, kw, cin, cout) = (w.shape[0], w.shape[1], w.shape[2], w.shape[3]);
        let consumers = graph.consumers(&w.id);
        if consumers.iter().any(|&c| graph.nodes[c].op != node.op || graph.nodes[c].inputs[1] != w.id) {
            return Err(CompileError::InvalidGraph(format!(
                "conv weight `{}` is also used by a non-conv node",
                w.id
            )));
        }
        let wi = out.tensor_index(&w.id).unwrap();
        out.tensors[wi].shape = vec![kh * kw * cin, cout];
        let oh = (x.shape[0] - kh) / stride + 1;
        let ow = (x.shape[1] - kw) / stride + 1;
        let cols_id = unique_id(&out, &format!("{}.cols", node.id));
        out.tensors.push(TensorDecl {
            id: cols_id.clone(),
            shape: vec![oh * ow, kh * kw * cin],
            dtype: x.dtype,
            init: Init::Zero,
            role: Role::Activation,
            location: None,
        });
        out.nodes.push(Node {
            id: format!("{}.im2col", node.id),
            op: OpKind::Im2col { kh, kw, stride },
            inputs: vec![x.id.clone()],
            output: cols_id.clone(),
        });
        out.nodes.push(Node {
            id: node.id.clone(),
            op: OpKind::Matmul,
            inputs: vec![cols_id, w.id.clone()],
            output: node.output.clone(),
        });
    }
    Ok(out)
}

fn unique_id(g: &WorkloadGraph, base: &str) -> String {
    let mut id = base.to_string();
    let mut n = 1;
    while g.tensor(&id).is_some() {
        id = format!("{base}{n}");
        n += 1;
    }
    id
}

/// Input shapes as the 2D operands a canonical node computes on.
pub fn operand_shapes(g: &WorkloadGraph, node: &Node) -> Vec<Vec<usize>> {
    node.inputs
        .iter()
        .map(|t| {
            let d = g.tensor(t).unwrap();
            match node.op {
                OpKind::Matmul => {
                    let (r, c) = d.matrix();
                    vec![r, c]
                }
                _ => d.shape.clone(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONV: &str = r#"{
      "tensors": [
        {"id": "x", "shape": [8, 8, 8], "dtype": "i8", "init": "random:3"},
        {"id": "w", "shape": [3, 3, 8, 8], "dtype": "i8", "init": "random:4", "role": "weight"},
        {"id": "y", "dtype": "i32"}
      ],
      "nodes": [{"id": "conv", "op": "conv2d", "inputs": ["x", "w"], "output": "y"}]
    }"#;

    #[test]
    fn conv_becomes_im2col_and_matmul() {
        let g = WorkloadGraph::from_json(CONV, None).unwrap();
        let l = lower_graph(&g).unwrap();
        assert_eq!(l.nodes.len(), 2);
        assert_eq!(l.nodes[0].op, OpKind::Im2col { kh: 3, kw: 3, stride: 1 });
        assert_eq!(l.tensor("conv.cols").unwrap().shape, vec![36, 72]);
        assert_eq!(l.nodes[1].op, OpKind::Matmul);
        assert_eq!(operand_shapes(&l, &l.nodes[1]), vec![vec![36, 72], vec![72, 8]]);
        let a = g.evaluate(0).unwrap();
        let b = l.evaluate(0).unwrap();
        assert_eq!(a["y"], b["y"]);
    }

    #[test]
    fn canonical_nodes_unchanged() {
        let text = r#"{
          "tensors": [{"id": "x", "shape": [4, 4], "dtype": "i32", "init": "random:1"}, {"id": "y", "dtype": "i32"}],
          "nodes": [{"id": "r", "op": "elementwise", "attrs": {"kind": "relu"}, "inputs": ["x"], "output": "y"}]
        }"#;
        let g = WorkloadGraph::from_json(text, None).unwrap();
        assert_eq!(lower_graph(&g).unwrap(), g);
    }
}
