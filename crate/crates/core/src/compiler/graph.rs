// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Workload graphs: JSON form, validation, shape inference, initial values
//! and reference evaluation.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::CompileError;
use crate::accel::golden::{
    add_golden, conv2d_golden, fc_golden, gemm_golden, maxpool_golden, narrow_golden, relu_golden, window_out,
};
use crate::tensor::{DType, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EwKind {
    Relu,
    Add,
    Narrow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Matmul,
    Conv2d { stride: usize },
    Maxpool2d { kernel: usize, stride: usize },
    FullyConnected,
    Elementwise(EwKind),
    /// Patch extraction produced by conv lowering: `[H,W,C]` to
    /// `[OH*OW, KH*KW*C]`.
    Im2col { kh: usize, kw: usize, stride: usize },
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Matmul => "matmul",
            OpKind::Conv2d { .. } => "conv2d",
            OpKind::Maxpool2d { .. } => "maxpool2d",
            OpKind::FullyConnected => "fully_connected",
            OpKind::Elementwise(_) => "elementwise",
            OpKind::Im2col { .. } => "im2col",
        }
    }

    fn attrs(&self) -> Map<String, Value> {
        let mut m = Map::new();
        match *self {
            OpKind::Conv2d { stride } => {
                m.insert("stride".into(), stride.into());
            }
            OpKind::Maxpool2d { kernel, stride } => {
                m.insert("kernel".into(), kernel.into());
                m.insert("stride".into(), stride.into());
            }
            OpKind::Elementwise(k) => {
                let s = match k {
                    EwKind::Relu => "relu",
                    EwKind::Add => "add",
                    EwKind::Narrow => "narrow",
                };
                m.insert("kind".into(), s.into());
            }
            OpKind::Im2col { kh, kw, stride } => {
                m.insert("kh".into(), kh.into());
                m.insert("kw".into(), kw.into());
                m.insert("stride".into(), stride.into());
            }
            OpKind::Matmul | OpKind::FullyConnected => {}
        }
        m
    }

    fn from_json(node: &str, op: &str, attrs: &Map<String, Value>) -> Result<OpKind, CompileError> {
        let get = |k: &str, default: Option<usize>| -> Result<usize, CompileError> {
            match attrs.get(k) {
                Some(v) => v.as_u64().map(|v| v as usize).ok_or_else(|| CompileError::InvalidGraph(format!(
                    "node `{node}`: attribute `{k}` must be a non-negative integer"
                ))),
                None => default.ok_or_else(|| CompileError::InvalidGraph(format!("node `{node}`: missing attribute `{k}`"))),
            }
        };
        Ok(match op {
            "matmul" => OpKind::Matmul,
            "conv2d" => OpKind::Conv2d { stride: get("stride", Some(1))? },
            "maxpool2d" => {
                let kernel = get("kernel", None)?;
                OpKind::Maxpool2d { kernel, stride: get("stride", Some(kernel))? }
            }
            "fully_connected" => OpKind::FullyConnected,
            "elementwise" => match attrs.get("kind").and_then(Value::as_str) {
                Some("relu") => OpKind::Elementwise(EwKind::Relu),
                Some("add") => OpKind::Elementwise(EwKind::Add),
                Some("narrow") => OpKind::Elementwise(EwKind::Narrow),
                other => {
                    return Err(CompileError::UnsupportedOp { node: node.into(), op: format!("elementwise {other:?}") })
                }
            },
            "im2col" => OpKind::Im2col { kh: get("kh", None)?, kw: get("kw", None)?, stride: get("stride", Some(1))? },
            other => return Err(CompileError::UnsupportedOp { node: node.into(), op: other.into() }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    #[default]
    Activation,
    Weight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    External,
    Spm,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Init {
    Zero,
    Random(u64),
    File(PathBuf),
}

impl Init {
    fn parse(s: &str) -> Option<Init> {
        if s == "zero" {
            return Some(Init::Zero);
        }
        if let Some(seed) = s.strip_prefix("random:") {
            return seed.parse().ok().map(Init::Random);
        }
        s.strip_prefix("file:").map(|p| Init::File(PathBuf::from(p)))
    }

    fn render(&self) -> String {
        match self {
            Init::Zero => "zero".into(),
            Init::Random(s) => format!("random:{s}"),
            Init::File(p) => format!("file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorDecl {
    pub id: String,
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub init: Init,
    pub role: Role,
    pub location: Option<Location>,
}

impl TensorDecl {
    pub fn elements(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn bytes(&self) -> usize {
        self.elements() * self.dtype.bytes()
    }

    /// Rows and columns of the 2D storage view.
    pub fn matrix(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            s => (s[..s.len() - 1].iter().product(), s[s.len() - 1]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    pub op: OpKind,
    pub inputs: Vec<String>,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WorkloadGraph {
    pub name: String,
    pub tensors: Vec<TensorDecl>,
    pub nodes: Vec<Node>,
}

#[derive(Serialize, Deserialize)]
struct TensorJson {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<Vec<usize>>,
    dtype: DType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    init: Option<String>,
    #[serde(default)]
    role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    location: Option<Location>,
}

#[derive(Serialize, Deserialize)]
struct NodeJson {
    id: String,
    op: String,
    #[serde(default)]
    attrs: Map<String, Value>,
    inputs: Vec<String>,
    output: String,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    #[serde(default)]
    name: String,
    tensors: Vec<TensorJson>,
    nodes: Vec<NodeJson>,
}

fn invalid(msg: impl Into<String>) -> CompileError {
    CompileError::InvalidGraph(msg.into())
}

impl WorkloadGraph {
    /// Parses and validates a workload. Missing shapes of produced tensors
    /// are inferred. Relative `file:` paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self, CompileError> {
        let raw: GraphJson = serde_json::from_str(text).map_err(|e| invalid(format!("parse: {e}")))?;
        let mut g = WorkloadGraph { name: raw.name, ..Default::default() };
        let mut unknown_shape = Vec::new();
        for t in raw.tensors {
            let init = match &t.init {
                None => Init::Zero,
                Some(s) => Init::parse(s).ok_or_else(|| invalid(format!("tensor `{}`: bad init `{s}`", t.id)))?,
            };
            let init = match (init, base_dir) {
                (Init::File(p), Some(dir)) if p.is_relative() => Init::File(dir.join(p)),
                (i, _) => i,
            };
            if t.shape.is_none() {
                unknown_shape.push(t.id.clone());
            }
            g.tensors.push(TensorDecl {
                id: t.id,
                shape: t.shape.unwrap_or_default(),
                dtype: t.dtype,
                init,
                role: t.role,
                location: t.location,
            });
        }
        for n in raw.nodes {
            let op = OpKind::from_json(&n.id, &n.op, &n.attrs)?;
            g.nodes.push(Node { id: n.id, op, inputs: n.inputs, output: n.output });
        }
        g.validate_with(&unknown_shape)?;
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self, CompileError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, path.parent())
    }

    /// The bundled three-layer toy network (conv, max pool, fully connected).
    pub fn toy() -> Self {
        Self::from_json(include_str!("../../workloads/toy.json"), None).expect("bundled workload is valid")
    }

    /// Offsets every random initializer seed by `seed`; 0 leaves the graph
    /// unchanged.
    pub fn reseed(&mut self, seed: u64) {
        for t in &mut self.tensors {
            if let Init::Random(s) = &mut t.init {
                *s = s.wrapping_add(seed);
            }
        }
    }

    pub fn to_json(&self) -> String {
        let raw = GraphJson {
            name: self.name.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| TensorJson {
                    id: t.id.clone(),
                    shape: Some(t.shape.clone()),
                    dtype: t.dtype,
                    init: Some(t.init.render()),
                    role: t.role.clone(),
                    location: t.location,
                })
                .collect(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeJson {
                    id: n.id.clone(),
                    op: n.op.name().into(),
                    attrs: n.op.attrs(),
                    inputs: n.inputs.clone(),
                    output: n.output.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("graph serializes")
    }

    pub fn tensor(&self, id: &str) -> Option<&TensorDecl> {
        self.tensors.iter().find(|t| t.id == id)
    }

    pub fn tensor_index(&self, id: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.id == id)
    }

    pub fn producer(&self, tensor: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.output == tensor)
    }

    pub fn consumers(&self, tensor: &str) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].inputs.iter().any(|t| t == tensor)).collect()
    }

    /// Tensors without a producer.
    pub fn inputs(&self) -> Vec<&TensorDecl> {
        self.tensors.iter().filter(|t| self.producer(&t.id).is_none()).collect()
    }

    /// Produced tensors stored to external memory: those nobody consumes
    /// and those explicitly marked external.
    pub fn outputs(&self) -> Vec<&TensorDecl> {
        self.tensors
            .iter()
            .filter(|t| {
                self.producer(&t.id).is_some()
                    && (self.consumers(&t.id).is_empty() || t.location == Some(Location::External))
            })
            .collect()
    }

    /// Node indices in a deterministic topological order.
    pub fn topo_order(&self) -> Result<Vec<usize>, CompileError> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        for (i, node) in self.nodes.iter().enumerate() {
            indeg[i] = node.inputs.iter().filter(|t| self.producer(t).is_some()).count();
        }
        let mut order = Vec::with_capacity(n);
        let mut done = vec![false; n];
        while order.len() < n {
            let Some(i) = (0..n).find(|&i| !done[i] && indeg[i] == 0) else {
                return Err(CompileError::SchedulingCycle);
            };
            done[i] = true;
            order.push(i);
            for c in self.consumers(&self.nodes[i].output) {
                let uses = self.nodes[c].inputs.iter().filter(|t| **t == self.nodes[i].output).count();
                indeg[c] -= uses;
            }
        }
        Ok(order)
    }

    pub fn validate(&self) -> Result<(), CompileError> {
        self.clone().validate_with(&[])
    }

    fn validate_with(&mut self, unknown_shape: &[String]) -> Result<(), CompileError> {
        let mut seen = BTreeMap::new();
        for (i, t) in self.tensors.iter().enumerate() {
            if seen.insert(t.id.clone(), i).is_some() {
                return Err(invalid(format!("duplicate tensor `{}`", t.id)));
            }
        }
        let mut producers = BTreeMap::new();
        for n in &self.nodes {
            for t in n.inputs.iter().chain(std::iter::once(&n.output)) {
                if !seen.contains_key(t) {
                    return Err(invalid(format!("node `{}` references unknown tensor `{t}`", n.id)));
                }
            }
            if producers.insert(n.output.clone(), n.id.clone()).is_some() {
                return Err(invalid(format!("tensor `{}` has more than one producer", n.output)));
            }
        }
        for t in &self.tensors {
            if !producers.contains_key(&t.id) {
                if unknown_shape.contains(&t.id) {
                    return Err(invalid(format!("input tensor `{}` needs a shape", t.id)));
                }
                if t.location == Some(Location::Spm) {
                    return Err(invalid(format!("input tensor `{}` must live in external memory", t.id)));
                }
            }
            if t.shape.contains(&0) && !unknown_shape.contains(&t.id) {
                return Err(invalid(format!("tensor `{}` has an empty dimension", t.id)));
            }
        }
        let order = self.topo_order()?;
        for i in order {
            let node = self.nodes[i].clone();
            let ins: Vec<&TensorDecl> = node.inputs.iter().map(|t| self.tensor(t).unwrap()).collect();
            let (shape, dtype) = infer(&node, &ins)?;
            let out = self.tensor_index(&node.output).unwrap();
            let decl = &mut self.tensors[out];
            if unknown_shape.contains(&decl.id) {
                decl.shape = shape;
            } else if decl.shape != shape {
                return Err(CompileError::ShapeMismatch {
                    node: node.id.clone(),
                    msg: format!("output `{}` declared {:?}, computed {:?}", decl.id, decl.shape, shape),
                });
            }
            if decl.dtype != dtype {
                return Err(CompileError::ShapeMismatch {
                    node: node.id.clone(),
                    msg: format!("output `{}` declared {:?}, computed {:?}", decl.id, decl.dtype, dtype),
                });
            }
        }
        Ok(())
    }

    /// Values of all input tensors for iteration `iter`. Weights do not
    /// depend on the iteration.
    pub fn input_values(&self, iter: usize) -> Result<HashMap<String, Tensor>, CompileError> {
        let mut out = HashMap::new();
        for t in self.inputs() {
            out.insert(t.id.clone(), initial_value(t, iter)?);
        }
        Ok(out)
    }

    /// Reference evaluation of every tensor for iteration `iter`.
    pub fn evaluate(&self, iter: usize) -> Result<HashMap<String, Tensor>, CompileError> {
        let mut vals = self.input_values(iter)?;
        for i in self.topo_order()? {
            let n = &self.nodes[i];
            let ins: Vec<&Tensor> = n.inputs.iter().map(|t| &vals[t]).collect();
            let out = eval_node(n, &ins)?;
            let decl = self.tensor(&n.output).unwrap();
            vals.insert(n.output.clone(), out.reshape(&decl.shape));
        }
        Ok(vals)
    }
}

fn shape_err(node: &Node, msg: impl Into<String>) -> CompileError {
    CompileError::ShapeMismatch { node: node.id.clone(), msg: msg.into() }
}

/// Output shape and type of `node`.
fn infer(node: &Node, ins: &[&TensorDecl]) -> Result<(Vec<usize>, DType), CompileError> {
    let arity = match node.op {
        OpKind::Matmul | OpKind::Conv2d { .. } | OpKind::FullyConnected | OpKind::Elementwise(EwKind::Add) => 2,
        _ => 1,
    };
    if ins.len() != arity {
        return Err(shape_err(node, format!("{} takes {arity} inputs, got {}", node.op.name(), ins.len())));
    }
    let need_i8 = |t: &TensorDecl| {
        if t.dtype == DType::I8 {
            Ok(())
        } else {
            Err(shape_err(node, format!("`{}` must be i8", t.id)))
        }
    };
    match node.op {
        OpKind::Matmul => match (ins[0].shape.as_slice(), ins[1].shape.as_slice()) {
            (&[m, k], &[k2, n]) if k == k2 => {
                need_i8(ins[0])?;
                need_i8(ins[1])?;
                Ok((vec![m, n], DType::I32))
            }
            (a, b) => Err(shape_err(node, format!("matmul operands {a:?} and {b:?}"))),
        },
        OpKind::Conv2d { stride } => match (ins[0].shape.as_slice(), ins[1].shape.as_slice()) {
            (&[h, w, c], &[kh, kw, c2, f]) if c == c2 && h >= kh && w >= kw && stride > 0 => {
                need_i8(ins[0])?;
                need_i8(ins[1])?;
                Ok((vec![window_out(h, kh, stride), window_out(w, kw, stride), f], DType::I32))
            }
            (a, b) => Err(shape_err(node, format!("conv2d operands {a:?} and {b:?}"))),
        },
        OpKind::Maxpool2d { kernel, stride } => match ins[0].shape.as_slice() {
            &[h, w, c] if kernel > 0 && stride > 0 && h >= kernel && w >= kernel => {
                Ok((vec![window_out(h, kernel, stride), window_out(w, kernel, stride), c], ins[0].dtype))
            }
            s => Err(shape_err(node, format!("maxpool2d input {s:?} with window {kernel}"))),
        },
        OpKind::FullyConnected => match ins[1].shape.as_slice() {
            &[k, n] if k == ins[0].elements() => {
                need_i8(ins[1])?;
                Ok((vec![1, n], DType::I32))
            }
            s => Err(shape_err(node, format!("fully_connected weight {s:?} for {} inputs", ins[0].elements()))),
        },
        OpKind::Elementwise(EwKind::Relu) => Ok((ins[0].shape.clone(), ins[0].dtype)),
        OpKind::Elementwise(EwKind::Narrow) => {
            if ins[0].dtype != DType::I32 {
                return Err(shape_err(node, "narrow expects an i32 input"));
            }
            Ok((ins[0].shape.clone(), DType::I8))
        }
        OpKind::Elementwise(EwKind::Add) => {
            if ins[0].shape != ins[1].shape || ins[0].dtype != ins[1].dtype {
                return Err(shape_err(node, "add operands differ"));
            }
            Ok((ins[0].shape.clone(), ins[0].dtype))
        }
        OpKind::Im2col { kh, kw, stride } => match ins[0].shape.as_slice() {
            &[h, w, c] if h >= kh && w >= kw && stride > 0 => {
                Ok((vec![window_out(h, kh, stride) * window_out(w, kw, stride), kh * kw * c], ins[0].dtype))
            }
            s => Err(shape_err(node, format!("im2col input {s:?}"))),
        },
    }
}

/// Patch matrix of `[H,W,C]` input, rows in output-pixel order and columns
/// in (kh, kw, c) order.
pub fn im2col_golden(x: &Tensor, kh: usize, kw: usize, stride: usize) -> Tensor {
    let (h, w, c) = (x.shape[0], x.shape[1], x.shape[2]);
    let (oh, ow) = (window_out(h, kh, stride), window_out(w, kw, stride));
    let mut data = Vec::with_capacity(oh * ow * kh * kw * c);
    for y in 0..oh {
        for xo in 0..ow {
            for dy in 0..kh {
                for dx in 0..kw {
                    let p = ((y * stride + dy) * w + xo * stride + dx) * c;
                    data.extend_from_slice(&x.data[p..p + c]);
                }
            }
        }
    }
    Tensor::from_vec(&[oh * ow, kh * kw * c], x.dtype, data)
}

fn eval_node(n: &Node, ins: &[&Tensor]) -> Result<Tensor, CompileError> {
    let r = match n.op {
        OpKind::Matmul => gemm_golden(ins[0], ins[1]),
        OpKind::Conv2d { stride } => conv2d_golden(ins[0], ins[1], stride),
        OpKind::Maxpool2d { kernel, stride } => maxpool_golden(ins[0], kernel, stride),
        OpKind::FullyConnected => fc_golden(ins[0], ins[1]),
        OpKind::Elementwise(EwKind::Relu) => Ok(relu_golden(ins[0])),
        OpKind::Elementwise(EwKind::Add) => add_golden(ins[0], ins[1]),
        OpKind::Elementwise(EwKind::Narrow) => Ok(narrow_golden(ins[0])),
        OpKind::Im2col { kh, kw, stride } => Ok(im2col_golden(ins[0], kh, kw, stride)),
    };
    r.map_err(|e| shape_err(n, e.to_string()))
}

/// Value range used for random initialisation.
pub fn random_range(dtype: DType) -> (i32, i32) {
    match dtype {
        DType::I8 => (-128, 127),
        DType::I32 => (-32768, 32767),
    }
}

/// Initial value of an input tensor for iteration `iter`.
pub fn initial_value(t: &TensorDecl, iter: usize) -> Result<Tensor, CompileError> {
    let n = t.elements();
    let it = if t.role == Role::Weight { 0 } else { iter };
    let data = match &t.init {
        Init::Zero => vec![0; n],
        Init::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(it as u64));
            let (lo, hi) = random_range(t.dtype);
            (0..n).map(|_| rng.gen_range(lo..=hi)).collect()
        }
        Init::File(path) => {
            let bytes = std::fs::read(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            let size = t.bytes();
            let start = if bytes.len() >= size * (it + 1) { size * it } else { 0 };
            if bytes.len() < start + size {
                return Err(invalid(format!("{}: expected at least {size} bytes", path.display())));
            }
            let e = t.dtype.bytes();
            bytes[start..start + size].chunks(e).map(|c| t.dtype.read(c)).collect()
        }
    };
    Ok(Tensor::from_vec(&t.shape, t.dtype, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"{
      "name": "t",
      "tensors": [
        {"id": "x", "shape": [6, 6, 8], "dtype": "i8", "init": "random:1"},
        {"id": "w", "shape": [3, 3, 8, 8], "dtype": "i8", "init": "random:2", "role": "weight"},
        {"id": "c", "dtype": "i32"},
        {"id": "p", "dtype": "i32"}
      ],
      "nodes": [
        {"id": "conv", "op": "conv2d", "attrs": {"stride": 1}, "inputs": ["x", "w"], "output": "c"},
        {"id": "pool", "op": "maxpool2d", "attrs": {"kernel": 2}, "inputs": ["c"], "output": "p"}
      ]
    }"#;

    #[test]
    fn parse_infers_shapes() {
        let g = WorkloadGraph::from_json(TOY, None).unwrap();
        assert_eq!(g.tensor("c").unwrap().shape, vec![4, 4, 8]);
        assert_eq!(g.tensor("p").unwrap().shape, vec![2, 2, 8]);
        assert_eq!(g.inputs().len(), 2);
        assert_eq!(g.outputs()[0].id, "p");
        let back = WorkloadGraph::from_json(&g.to_json(), None).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn unsupported_and_bad_graphs() {
        let bad = TOY.replace("maxpool2d", "softmax");
        assert!(matches!(WorkloadGraph::from_json(&bad, None), Err(CompileError::UnsupportedOp { .. })));
        let bad = TOY.replace(r#""inputs": ["c"]"#, r#""inputs": ["p"]"#);
        assert!(WorkloadGraph::from_json(&bad, None).is_err());
        let bad = TOY.replace(r#"[3, 3, 8, 8]"#, r#"[3, 3, 4, 8]"#);
        assert!(matches!(WorkloadGraph::from_json(&bad, None), Err(CompileError::ShapeMismatch { .. })));
    }

    #[test]
    fn random_init_is_per_iteration_for_activations() {
        let g = WorkloadGraph::from_json(TOY, None).unwrap();
        let a = g.input_values(0).unwrap();
        let b = g.input_values(1).unwrap();
        assert_ne!(a["x"], b["x"]);
        assert_eq!(a["w"], b["w"]);
        assert_eq!(g.input_values(0).unwrap()["x"], a["x"]);
    }

    #[test]
    fn im2col_times_weights_is_conv() {
        let g = WorkloadGraph::from_json(TOY, None).unwrap();
        let v = g.evaluate(0).unwrap();
        let cols = im2col_golden(&v["x"], 3, 3, 1);
        assert_eq!(cols.shape, vec![16, 72]);
        let w = v["w"].clone().reshape(&[72, 8]);
        assert_eq!(gemm_golden(&cols, &w).unwrap().data, v["c"].data);
    }
}
