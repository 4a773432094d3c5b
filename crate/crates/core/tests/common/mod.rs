// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Helpers shared by the integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use hcsim_core::compiler::{compile, CompileOptions, Mode, PlacementPolicy, WorkloadGraph};
use hcsim_core::config::ClusterConfig;
use hcsim_core::sim::{run, SimOptions};

#[derive(Clone)]
struct Cur {
    id: String,
    shape: Vec<usize>,
    i8: bool,
}

/// Largest tensor the generator produces, in elements.
const MAX_ELEMS: usize = 2048;

/// Random workload of 1 to `max_nodes` nodes with every dimension at most 32.
///
/// The graph is mostly a chain, with `add` nodes occasionally joining a
/// fresh input or an earlier tensor of the same shape.
pub fn random_graph(seed: u64, max_nodes: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors: Vec<Value> = Vec::new();
    let mut nodes: Vec<Value> = Vec::new();
    let mut seen: Vec<Cur> = Vec::new();
    let mut fresh = 0u32;
    let mut new_input = |tensors: &mut Vec<Value>, rng: &mut ChaCha8Rng, shape: &[usize], weight: bool| {
        fresh += 1;
        let id = format!("t{fresh}");
        let mut t = json!({"id": id, "shape": shape, "dtype": "i8", "init": format!("random:{}", rng.gen::<u32>())});
        if weight {
            t["role"] = json!("weight");
        }
        tensors.push(t);
        id
    };
    let mut cur = if rng.gen_bool(0.6) {
        let shape = vec![rng.gen_range(3..=12), rng.gen_range(3..=12), rng.gen_range(1..=16)];
        Cur { id: new_input(&mut tensors, &mut rng, &shape, false), shape, i8: true }
    } else {
        let shape = vec![rng.gen_range(1..=32), rng.gen_range(1..=32)];
        Cur { id: new_input(&mut tensors, &mut rng, &shape, false), shape, i8: true }
    };
    seen.push(cur.clone());
    let n_nodes = rng.gen_range(1..=max_nodes);
    for i in 0..n_nodes {
        let elems: usize = cur.shape.iter().product();
        let three_d = cur.shape.len() == 3;
        let mut options: Vec<&str> = vec!["relu", "add"];
        if !cur.i8 {
            options.push("narrow");
        }
        if cur.i8 && three_d && cur.shape[0] >= 2 && cur.shape[1] >= 2 {
            options.push("conv");
        }
        if cur.i8 && !three_d {
            options.push("matmul");
        }
        if three_d && cur.shape[0] >= 2 && cur.shape[1] >= 2 {
            options.push("pool");
        }
        if cur.i8 && elems <= 512 {
            options.push("fc");
        }
        let op = options[rng.gen_range(0..options.len())];
        let out = format!("n{i}_out");
        let id = format!("n{i}");
        let (node, shape, i8) = match op {
            "relu" => (json!({"id": id, "op": "elementwise", "attrs": {"kind": "relu"}, "inputs": [cur.id], "output": out}), cur.shape.clone(), cur.i8),
            "narrow" => (json!({"id": id, "op": "elementwise", "attrs": {"kind": "narrow"}, "inputs": [cur.id], "output": out}), cur.shape.clone(), true),
            "add" => {
                let other = seen.iter().rev().skip(1).find(|t| t.shape == cur.shape && t.i8 == cur.i8).map(|t| t.id.clone());
                let other = match other {
                    Some(o) if rng.gen_bool(0.5) => o,
                    _ if cur.i8 => new_input(&mut tensors, &mut rng, &cur.shape, false),
                    _ => cur.id.clone(),
                };
                (json!({"id": id, "op": "elementwise", "attrs": {"kind": "add"}, "inputs": [cur.id, other], "output": out}), cur.shape.clone(), cur.i8)
            }
            "conv" => {
                let (h, w, c) = (cur.shape[0], cur.shape[1], cur.shape[2]);
                let kh = rng.gen_range(1..=h.min(3));
                let kw = rng.gen_range(1..=w.min(3));
                let stride = rng.gen_range(1..=2);
                let (oh, ow) = ((h - kh) / stride + 1, (w - kw) / stride + 1);
                let f = rng.gen_range(1..=(MAX_ELEMS / (oh * ow)).clamp(1, 32));
                let wid = new_input(&mut tensors, &mut rng, &[kh, kw, c, f], true);
                (
                    json!({"id": id, "op": "conv2d", "attrs": {"stride": stride}, "inputs": [cur.id, wid], "output": out}),
                    vec![oh, ow, f],
                    false,
                )
            }
            "pool" => {
                let (h, w) = (cur.shape[0], cur.shape[1]);
                let k = rng.gen_range(1..=h.min(w).min(3));
                let s = rng.gen_range(1..=k);
                (
                    json!({"id": id, "op": "maxpool2d", "attrs": {"kernel": k, "stride": s}, "inputs": [cur.id], "output": out}),
                    vec![(h - k) / s + 1, (w - k) / s + 1, cur.shape[2]],
                    cur.i8,
                )
            }
            "matmul" => {
                let n = rng.gen_range(1..=32);
                let weight = rng.gen_bool(0.7);
                let wid = new_input(&mut tensors, &mut rng, &[cur.shape[1], n], weight);
                (json!({"id": id, "op": "matmul", "inputs": [cur.id, wid], "output": out}), vec![cur.shape[0], n], false)
            }
            "fc" => {
                let n = rng.gen_range(1..=32);
                let wid = new_input(&mut tensors, &mut rng, &[elems, n], true);
                (json!({"id": id, "op": "fully_connected", "inputs": [cur.id, wid], "output": out}), vec![1, n], false)
            }
            _ => unreachable!(),
        };
        tensors.push(json!({"id": out, "dtype": if i8 { "i8" } else { "i32" }}));
        nodes.push(node);
        cur = Cur { id: out, shape, i8 };
        seen.push(cur.clone());
    }
    json!({"name": format!("random{seed}"), "tensors": tensors, "nodes": nodes}).to_string()
}

/// Compiles and runs `text` and compares every output with the oracle.
pub fn check_graph(text: &str, config: &str, mode: Mode, batch: usize) -> Result<u64, String> {
    let g = WorkloadGraph::from_json(text, None).map_err(|e| format!("parse: {e}"))?;
    let cfg = ClusterConfig::bundled(config).map_err(|e| e.to_string())?;
    let opts = CompileOptions { mode, batch, policy: PlacementPolicy::Fastest };
    let c = compile(&g, &cfg, &opts).map_err(|e| format!("compile: {e}"))?;
    let out = run(&cfg, &c.programs, c.ext_image().map_err(|e| e.to_string())?, None, &SimOptions::default())
        .map_err(|e| format!("simulate: {e}"))?;
    c.check_outputs(&out.ext)?;
    Ok(out.metrics.total_cycles)
}

/// Task timing of one device, from a trace.
#[derive(Debug, Clone, Default)]
pub struct TaskTimes {
    /// `(first busy cycle, last busy cycle)` per task.
    pub spans: Vec<(u64, u64)>,
    /// Cycles at which each launch write was accepted.
    pub launches: Vec<u64>,
}

impl TaskTimes {
    pub fn from_trace(trace: &[hcsim_core::sim::TraceEvent], device: &str) -> Self {
        let mut t = TaskTimes::default();
        let mut start = None;
        for e in trace.iter().filter(|e| e.unit == device) {
            match e.event {
                "task_start" => start = Some(e.cycle),
                "task_done" => t.spans.push((start.take().expect("done without start"), e.cycle)),
                "launch" | "launch_queued" => t.launches.push(e.cycle),
                _ => {}
            }
        }
        t
    }

    /// Idle cycles between consecutive tasks.
    pub fn gaps(&self) -> Vec<u64> {
        self.spans.windows(2).map(|w| w[1].0 - w[0].1 - 1).collect()
    }

    pub fn compute_cycles(&self) -> Vec<u64> {
        self.spans.iter().map(|&(s, d)| d - s + 1).collect()
    }
}

/// Issues `tasks` identical `m x k x n` gemm tasks back to back from one
/// core on `fig6c`, configuring each while the previous runs. Returns the
/// gemm timing and the number of control instructions per task.
pub fn back_to_back_gemm(m: usize, k: usize, n: usize, tasks: usize) -> (TaskTimes, usize) {
    use hcsim_core::compiler::alloc::a_pitch;
    use hcsim_core::compiler::codegen::{accel_task, gemm_b_nest, gemm_nests};
    use hcsim_core::compiler::Layout;
    use hcsim_core::control::{ControlInstruction, KernelProgram};
    use hcsim_core::tensor::DType;

    let cfg = ClusterConfig::bundled("fig6c").unwrap();
    let acc = cfg.accelerators.iter().find(|a| a.id == "gemm0").unwrap();
    let core = cfg.owner_of("gemm0").unwrap().id.clone();
    // Same layouts the compiler picks for a gemm with constant weights.
    let a = Layout::pitched(m, k, DType::I8, a_pitch(k));
    let b = Layout::gemm_b(k, n);
    let c = Layout::new(m, n, DType::I32);
    let align = |x: usize| x.div_ceil(256) * 256;
    let b_at = align(a.bytes());
    let c_at = align(b_at + b.bytes());
    let mut nests = gemm_nests(&a.view(0), &a.view(0), &c.view(c_at), m, k, n);
    nests[1] = gemm_b_nest(b_at, &b, m);
    let one = accel_task(acc, &nests, &[m as i64, k as i64, n as i64], "bench").unwrap();
    let mut prog = KernelProgram::new(core);
    for _ in 0..tasks {
        for i in &one {
            prog.push(i.clone());
        }
    }
    prog.push(ControlInstruction::WaitDone { device: "gemm0".into() });
    let opts = SimOptions { trace: true, ..SimOptions::default() };
    let out = run(&cfg, &[prog], Vec::new(), None, &opts).unwrap();
    (TaskTimes::from_trace(&out.trace, "gemm0"), one.len())
}

/// `fig6c` with 64 banks, so that operand tiles placed on disjoint bank
/// ranges never collide.
pub fn wide_bank_config() -> ClusterConfig {
    let mut cfg = ClusterConfig::bundled("fig6c").unwrap();
    cfg.name = "fig6c-64banks".into();
    cfg.spm.num_banks = 64;
    cfg.validate().unwrap();
    cfg
}

/// Result of one conflict-free gemm run.
pub struct GemmTiming {
    pub busy: u64,
    pub tiles: u64,
    pub exact: bool,
    pub conflicts: u64,
}

/// Runs one `m x k x n` gemm on [`wide_bank_config`] with every operand
/// stored as unit tiles in its own bank range: C in banks 0..32, A in
/// 32..48 and B in 48..64 of each 512-byte row.
pub fn conflict_free_gemm(m: usize, k: usize, n: usize, seed: u64) -> GemmTiming {
    use hcsim_core::accel::golden::gemm_golden;
    use hcsim_core::compiler::codegen::accel_task;
    use hcsim_core::control::{ControlInstruction, KernelProgram};
    use hcsim_core::streamer::{LoopDim, LoopNest, SpatialPattern};
    use hcsim_core::tensor::{DType, Tensor};

    const ROW: usize = 512;
    let cfg = wide_bank_config();
    let acc = cfg.accelerators.iter().find(|a| a.id == "gemm0").unwrap();
    let core = cfg.owner_of("gemm0").unwrap().id.clone();
    let (mb, kb, nb) = (m.div_ceil(8), k.div_ceil(8), n.div_ceil(8));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Tensor::from_vec(&[m, k], DType::I8, (0..m * k).map(|_| rng.gen_range(-128..128)).collect());
    let b = Tensor::from_vec(&[k, n], DType::I8, (0..k * n).map(|_| rng.gen_range(-128..128)).collect());
    let slots = (mb * kb).max(kb * nb).max(mb * nb);
    let mut spm = vec![0u8; slots * ROW];
    for i in 0..m {
        for j in 0..k {
            spm[(i / 8 * kb + j / 8) * ROW + 256 + (i % 8) * 8 + j % 8] = a.data[i * k + j] as i8 as u8;
        }
    }
    for i in 0..k {
        for j in 0..n {
            spm[(j / 8 * kb + i / 8) * ROW + 384 + (i % 8) * 8 + j % 8] = b.data[i * n + j] as i8 as u8;
        }
    }
    let d = |v: &[(usize, usize)]| v.iter().map(|&(b, s)| LoopDim::new(b, s as i64)).collect::<Vec<_>>();
    let nests = [
        LoopNest::new(256, d(&[(nb, 0), (mb, kb * ROW), (kb, ROW)]), SpatialPattern::contiguous(8)),
        LoopNest::new(384, d(&[(nb, kb * ROW), (mb, 0), (kb, ROW)]), SpatialPattern::contiguous(8)),
        LoopNest::new(0, d(&[(nb, ROW), (mb, nb * ROW)]), SpatialPattern::contiguous(32)),
    ];
    let mut prog = KernelProgram::new(core);
    for i in accel_task(acc, &nests, &[m as i64, k as i64, n as i64], "timing").unwrap() {
        prog.push(i);
    }
    prog.push(ControlInstruction::WaitDone { device: "gemm0".into() });
    let out = run(&cfg, &[prog], Vec::new(), Some(&spm), &SimOptions::default()).unwrap();
    let golden = gemm_golden(&a, &b).unwrap();
    let mut exact = true;
    for i in 0..m {
        for j in 0..n {
            let at = (i / 8 * nb + j / 8) * ROW + ((i % 8) * 8 + j % 8) * 4;
            exact &= DType::I32.read(&out.spm[at..at + 4]) == golden.data[i * n + j];
        }
    }
    let g = out.metrics.device("gemm0").unwrap();
    GemmTiming {
        busy: g.busy_cycles,
        tiles: (mb * kb * nb) as u64,
        exact,
        conflicts: out.metrics.bank_conflicts,
    }
}

/// Checks one arbitration outcome: no bank is granted twice, and every
/// stalled request is blocked by a granted request at least as wide.
pub fn check_grants(
    tcdm: &hcsim_core::tcdm::Tcdm,
    reqs: &[hcsim_core::tcdm::BankRequest],
    granted: &[bool],
) -> Result<(), String> {
    let banks = |r: &hcsim_core::tcdm::BankRequest| -> Vec<usize> {
        r.words.iter().map(|w| tcdm.bank_of(w.addr).unwrap()).collect()
    };
    let width = |r: &hcsim_core::tcdm::BankRequest| tcdm.ports()[r.port].width_bits;
    let mut owner = vec![None; tcdm.num_banks()];
    for (i, r) in reqs.iter().enumerate().filter(|&(i, _)| granted[i]) {
        for b in banks(r) {
            if let Some(j) = owner[b].replace(i) {
                return Err(format!("bank {b} granted to requests {j} and {i}"));
            }
        }
    }
    for (i, r) in reqs.iter().enumerate() {
        if granted[i] {
            continue;
        }
        let blockers: Vec<usize> = banks(r).into_iter().filter_map(|b| owner[b]).collect();
        if blockers.is_empty() {
            return Err(format!("request {i} stalled with all its banks idle"));
        }
        if blockers.iter().all(|&j| width(&reqs[j]) < width(r)) {
            return Err(format!("port {} ({} bits) lost only to narrower ports", r.port, width(r)));
        }
    }
    Ok(())
}

fn bank_set_request(port: usize, set: u32, bank_bytes: usize) -> hcsim_core::tcdm::BankRequest {
    hcsim_core::tcdm::BankRequest::read(port, (0..32).filter(|b| set & (1 << b) != 0).map(|b| b * bank_bytes))
}

/// Every pair of bank subsets and width assignments of two ports on four
/// banks, from each reachable round-robin state. Returns the number of
/// cases checked.
pub fn tcdm_exhaustive_2x4() -> Result<usize, String> {
    use hcsim_core::tcdm::Tcdm;
    let mut cases = 0;
    for w0 in [64, 128, 256] {
        for w1 in [64, 128, 256] {
            for prime in [None, Some(0), Some(1)] {
                for s0 in 0u32..16 {
                    for s1 in 0u32..16 {
                        let mut t = Tcdm::new(4, 64, 16);
                        t.add_port(w0, "p0");
                        t.add_port(w1, "p1");
                        if let Some(p) = prime {
                            t.arbitrate(0, &[bank_set_request(p, 0xf, 8)]);
                        }
                        let reqs: Vec<_> = [(0, s0), (1, s1)]
                            .into_iter()
                            .filter(|&(_, s)| s != 0)
                            .map(|(p, s)| bank_set_request(p, s, 8))
                            .collect();
                        let before: u64 = t.port_stats.iter().map(|s| s.granted + s.stalled).sum();
                        let g = t.arbitrate(1, &reqs);
                        let ctx = format!("widths ({w0},{w1}) prime {prime:?} sets ({s0:04b},{s1:04b})");
                        check_grants(&t, &reqs, &g.granted).map_err(|e| format!("{ctx}: {e}"))?;
                        let after: u64 = t.port_stats.iter().map(|s| s.granted + s.stalled).sum();
                        if after - before != reqs.len() as u64 {
                            return Err(format!("{ctx}: request accounting lost a request"));
                        }
                        if reqs.len() == 2 && s0 & s1 != 0 && w0 != w1 {
                            let wide = if w0 > w1 { 0 } else { 1 };
                            if !g.granted[wide] {
                                return Err(format!("{ctx}: wide port lost a head-to-head"));
                            }
                        }
                        cases += 1;
                    }
                }
            }
        }
    }
    Ok(cases)
}

/// `ports` equal-width ports persistently requesting the same `banks`
/// banks for `cycles` cycles. Returns per-port grant counts.
pub fn tcdm_fairness(ports: usize, banks: u32, cycles: u64) -> Vec<u64> {
    use hcsim_core::tcdm::Tcdm;
    let mut t = Tcdm::new(32, 64, 16);
    for p in 0..ports {
        t.add_port(64 * banks as usize, format!("p{p}"));
    }
    let set = (1u32 << banks) - 1;
    let reqs: Vec<_> = (0..ports).map(|p| bank_set_request(p, set, 8)).collect();
    for c in 0..cycles {
        t.arbitrate(c, &reqs);
    }
    t.port_stats.iter().map(|s| s.granted).collect()
}

/// Random traffic from eight ports of mixed width on 32 banks.
pub fn tcdm_random(seed: u64, cycles: u64) -> Result<(), String> {
    use hcsim_core::tcdm::Tcdm;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tcdm::new(32, 64, 16);
    let widths: Vec<usize> = (0..8).map(|_| 64 << rng.gen_range(0..6)).collect();
    for (p, &w) in widths.iter().enumerate() {
        t.add_port(w, format!("p{p}"));
    }
    for c in 0..cycles {
        let mut reqs = Vec::new();
        for (p, &w) in widths.iter().enumerate() {
            if rng.gen_bool(0.7) {
                let start = rng.gen_range(0..32);
                reqs.push(hcsim_core::tcdm::BankRequest::read(p, (0..w / 64).map(|i| ((start + i) % 32) * 8)));
            }
        }
        let g = t.arbitrate(c, &reqs);
        check_grants(&t, &reqs, &g.granted).map_err(|e| format!("cycle {c}: {e}"))?;
    }
    Ok(())
}

/// Random loop nest: depth 1 to 4, bounds 1 to 8, word-aligned strides.
pub fn random_nest(rng: &mut ChaCha8Rng) -> hcsim_core::streamer::LoopNest {
    use hcsim_core::streamer::{LoopDim, LoopNest, SpatialPattern};
    let depth = rng.gen_range(1..=4);
    let dims = (0..depth).map(|_| LoopDim::new(rng.gen_range(1..=8), 8 * rng.gen_range(-64..=64))).collect();
    LoopNest::new(8 * rng.gen_range(0..4096), dims, SpatialPattern::contiguous(1))
}

/// Brute-force enumeration: one explicit loop per dimension.
pub fn enumerate_nest(nest: &hcsim_core::streamer::LoopNest) -> Vec<i64> {
    fn go(nest: &hcsim_core::streamer::LoopNest, level: usize, addr: i64, out: &mut Vec<i64>) {
        if level == nest.dims.len() {
            out.push(addr);
            return;
        }
        let d = nest.dims[level];
        for i in 0..d.bound as i64 {
            go(nest, level + 1, addr + i * d.stride, out);
        }
    }
    let mut out = Vec::new();
    go(nest, 0, nest.base, &mut out);
    out
}
