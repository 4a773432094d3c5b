// Copyright 2026 The hcsim Authors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

//! Design-time description of a cluster.
//!
//! A cluster is described by one JSON file listing the control cores, the
//! accelerators with their streamer channels, the scratchpad banking, the
//! DMA engines, the external channel and the scalar fallback cost model.
//! Three configurations ship with the crate (`fig6b`, `fig6c`, `fig6d`).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Side length of the GeMM unit tile and the number of max-pool lanes.
pub const UNIT: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {msg}")]
    Validation { path: String, msg: String },
    #[error("core `{core}` references unknown device `{device}`")]
    DanglingReference { core: String, device: String },
    #[error("unknown bundled config `{0}`")]
    UnknownBundled(String),
}

fn invalid(path: impl Into<String>, msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation { path: path.into(), msg: msg.into() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreConfig {
    pub id: String,
    #[serde(default)]
    pub accelerators: Vec<String>,
    #[serde(default)]
    pub dma: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub name: String,
    pub direction: Direction,
    pub width_bits: usize,
    #[serde(default = "default_fifo_depth")]
    pub fifo_depth: usize,
    #[serde(default = "default_max_loop_depth")]
    pub max_loop_depth: usize,
}

fn default_fifo_depth() -> usize {
    8
}

fn default_max_loop_depth() -> usize {
    6
}

fn default_bank_depth() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AcceleratorKind {
    Gemm { mu: usize, ku: usize, nu: usize },
    Maxpool { lanes: usize },
}

impl AcceleratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            AcceleratorKind::Gemm { .. } => "gemm",
            AcceleratorKind::Maxpool { .. } => "maxpool",
        }
    }

    /// Number of compute parameter registers following the channel blocks.
    pub fn num_params(&self) -> usize {
        match self {
            AcceleratorKind::Gemm { .. } => 3,
            AcceleratorKind::Maxpool { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceleratorConfig {
    pub id: String,
    #[serde(flatten)]
    pub kind: AcceleratorKind,
    pub channels: Vec<ChannelConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpmConfig {
    pub num_banks: usize,
    pub bank_width_bits: usize,
    #[serde(default = "default_bank_depth")]
    pub bank_depth_words: usize,
}

impl SpmConfig {
    pub fn bank_bytes(&self) -> usize {
        self.bank_width_bits / 8
    }

    pub fn capacity_bytes(&self) -> usize {
        self.num_banks * self.bank_bytes() * self.bank_depth_words
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmaConfig {
    pub id: String,
    pub beat_width_bits: usize,
}

impl DmaConfig {
    pub fn beat_bytes(&self) -> usize {
        self.beat_width_bits / 8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalChannelConfig {
    pub bandwidth_bytes_per_cycle: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalarCostModel {
    pub cycles_per_mac: u64,
    pub cycles_per_elementwise_op: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterConfig {
    #[serde(default)]
    pub name: String,
    pub control_cores: Vec<CoreConfig>,
    #[serde(default)]
    pub accelerators: Vec<AcceleratorConfig>,
    pub spm: SpmConfig,
    #[serde(default)]
    pub dma: Vec<DmaConfig>,
    pub external_channel: ExternalChannelConfig,
    pub scalar_cost_model: ScalarCostModel,
    /// Derived; filled in by validation.
    #[serde(skip)]
    pub capacity_bytes: usize,
}

const BUNDLED: [(&str, &str); 3] = [
    ("fig6b", include_str!("../configs/fig6b.json")),
    ("fig6c", include_str!("../configs/fig6c.json")),
    ("fig6d", include_str!("../configs/fig6d.json")),
];

impl ClusterConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: ClusterConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_and_validate(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Loads one of the bundled configs by name.
    pub fn bundled(name: &str) -> Result<Self, ConfigError> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| ConfigError::UnknownBundled(name.to_string()))?;
        Self::from_json(text)
    }

    pub fn bundled_names() -> impl Iterator<Item = &'static str> {
        BUNDLED.iter().map(|(n, _)| *n)
    }

    /// Accepts either a bundled name or a path to a config file.
    pub fn resolve(name_or_path: &str) -> Result<Self, ConfigError> {
        if BUNDLED.iter().any(|(n, _)| *n == name_or_path) {
            Self::bundled(name_or_path)
        } else {
            Self::load_and_validate(name_or_path)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 over the canonical serialization, hex encoded.
    pub fn hash_hex(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&mut self) -> Result<(), ConfigError> {
        let spm = &self.spm;
        if spm.num_banks == 0 || !spm.num_banks.is_power_of_two() {
            return Err(invalid("spm.num_banks", "num_banks must be a power of two"));
        }
        if !spm.bank_width_bits.is_power_of_two() || spm.bank_width_bits < 8 || spm.bank_width_bits > 64 {
            return Err(invalid("spm.bank_width_bits", "bank width must be 8, 16, 32 or 64 bits"));
        }
        if spm.bank_depth_words == 0 {
            return Err(invalid("spm.bank_depth_words", "capacity must be positive"));
        }
        if self.control_cores.is_empty() {
            return Err(invalid("control_cores", "at least one control core is required"));
        }
        if self.external_channel.bandwidth_bytes_per_cycle == 0 {
            return Err(invalid(
                "external_channel.bandwidth_bytes_per_cycle",
                "bandwidth must be positive",
            ));
        }

        let mut ids = BTreeSet::new();
        for (i, core) in self.control_cores.iter().enumerate() {
            if !ids.insert(core.id.clone()) {
                return Err(invalid(format!("control_cores[{i}].id"), "duplicate id"));
            }
        }
        for (i, acc) in self.accelerators.iter().enumerate() {
            if !ids.insert(acc.id.clone()) {
                return Err(invalid(format!("accelerators[{i}].id"), "duplicate id"));
            }
            self.validate_accelerator(i, acc)?;
        }
        for (i, dma) in self.dma.iter().enumerate() {
            if !ids.insert(dma.id.clone()) {
                return Err(invalid(format!("dma[{i}].id"), "duplicate id"));
            }
            if dma.beat_width_bits == 0 || dma.beat_width_bits % spm.bank_width_bits != 0 {
                return Err(invalid(
                    format!("dma[{i}].beat_width_bits"),
                    "width not multiple of bank width",
                ));
            }
        }

        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for core in &self.control_cores {
            for dev in &core.accelerators {
                if !self.accelerators.iter().any(|a| &a.id == dev) {
                    return Err(ConfigError::DanglingReference {
                        core: core.id.clone(),
                        device: dev.clone(),
                    });
                }
                if owner.insert(dev, &core.id).is_some() {
                    return Err(invalid(
                        format!("accelerators.{dev}"),
                        "accelerator attached to more than one core",
                    ));
                }
            }
            for dev in &core.dma {
                if !self.dma.iter().any(|d| &d.id == dev) {
                    return Err(ConfigError::DanglingReference {
                        core: core.id.clone(),
                        device: dev.clone(),
                    });
                }
                if owner.insert(dev, &core.id).is_some() {
                    return Err(invalid(format!("dma.{dev}"), "dma attached to more than one core"));
                }
            }
            if core.dma.len() > 1 {
                return Err(invalid(
                    format!("control_cores.{}.dma", core.id),
                    "a core drives at most one dma",
                ));
            }
        }
        for acc in &self.accelerators {
            if !owner.contains_key(acc.id.as_str()) {
                return Err(invalid(
                    format!("accelerators.{}", acc.id),
                    "accelerator not attached to any core",
                ));
            }
        }
        for dma in &self.dma {
            if !owner.contains_key(dma.id.as_str()) {
                return Err(invalid(format!("dma.{}", dma.id), "dma not attached to any core"));
            }
        }

        self.capacity_bytes = self.spm.capacity_bytes();
        Ok(())
    }

    fn validate_accelerator(&self, i: usize, acc: &AcceleratorConfig) -> Result<(), ConfigError> {
        let bank_bits = self.spm.bank_width_bits;
        for (j, ch) in acc.channels.iter().enumerate() {
            let path = format!("accelerators[{i}].channels[{j}]");
            if ch.width_bits == 0 || ch.width_bits % bank_bits != 0 {
                return Err(invalid(format!("{path}.width_bits"), "width not multiple of bank width"));
            }
            if ch.width_bits / bank_bits > self.spm.num_banks {
                return Err(invalid(format!("{path}.width_bits"), "channel wider than the bank array"));
            }
            if ch.fifo_depth == 0 {
                return Err(invalid(format!("{path}.fifo_depth"), "fifo depth must be positive"));
            }
        }
        let dirs: Vec<Direction> = acc.channels.iter().map(|c| c.direction).collect();
        let path = format!("accelerators[{i}]");
        match acc.kind {
            AcceleratorKind::Gemm { mu, ku, nu } => {
                if (mu, ku, nu) != (UNIT, UNIT, UNIT) {
                    return Err(invalid(format!("{path}.mu"), "only 8x8x8 unit tiles are modeled"));
                }
                if dirs != [Direction::Read, Direction::Read, Direction::Write] {
                    return Err(invalid(
                        format!("{path}.channels"),
                        "gemm needs channels [read A, read B, write C]",
                    ));
                }
                let w = |k: usize| acc.channels[k].width_bits;
                if w(0) < mu * ku * 8 || w(1) < ku * nu * 8 || w(2) < mu * nu * 32 {
                    return Err(invalid(
                        format!("{path}.channels"),
                        "gemm channels too narrow for one unit tile per cycle",
                    ));
                }
            }
            AcceleratorKind::Maxpool { lanes } => {
                if lanes != UNIT {
                    return Err(invalid(format!("{path}.lanes"), "only 8 lanes are modeled"));
                }
                if dirs != [Direction::Read, Direction::Write] {
                    return Err(invalid(format!("{path}.channels"), "maxpool needs channels [read, write]"));
                }
                if acc.channels.iter().any(|c| c.width_bits < lanes * 32) {
                    return Err(invalid(format!("{path}.channels"), "maxpool channels narrower than 8 x i32"));
                }
            }
        }
        Ok(())
    }

    pub fn accelerator(&self, id: &str) -> Option<&AcceleratorConfig> {
        self.accelerators.iter().find(|a| a.id == id)
    }

    pub fn dma_config(&self, id: &str) -> Option<&DmaConfig> {
        self.dma.iter().find(|d| d.id == id)
    }

    pub fn core_index(&self, id: &str) -> Option<usize> {
        self.control_cores.iter().position(|c| c.id == id)
    }

    /// Core that owns a device. Core ids own themselves (scalar unit).
    pub fn owner_of(&self, device: &str) -> Option<&CoreConfig> {
        self.control_cores.iter().find(|c| {
            c.id == device || c.accelerators.iter().any(|a| a == device) || c.dma.iter().any(|d| d == device)
        })
    }

    /// Peak GeMM throughput in ops/cycle summed over all GeMM accelerators.
    pub fn peak_ops_per_cycle(&self) -> f64 {
        self.accelerators
            .iter()
            .map(|a| match a.kind {
                AcceleratorKind::Gemm { mu, ku, nu } => (2 * mu * ku * nu) as f64,
                AcceleratorKind::Maxpool { .. } => 0.0,
            })
            .sum()
    }

    pub fn has_gemm(&self) -> bool {
        self.accelerators.iter().any(|a| matches!(a.kind, AcceleratorKind::Gemm { .. }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig6b_capacity() {
        let cfg = ClusterConfig::bundled("fig6b").unwrap();
        assert_eq!(cfg.control_cores.len(), 1);
        assert!(cfg.accelerators.is_empty());
        assert_eq!(cfg.dma.len(), 1);
        assert_eq!(cfg.capacity_bytes, 32 * 8 * 512);
        assert_eq!(cfg.capacity_bytes, 131_072);
    }

    #[test]
    fn fig6d_shared_core() {
        let cfg = ClusterConfig::bundled("fig6d").unwrap();
        assert_eq!(cfg.control_cores.len(), 2);
        assert_eq!(cfg.control_cores[0].accelerators, vec!["gemm0"]);
        let core1 = &cfg.control_cores[1];
        assert_eq!(core1.accelerators, vec!["maxpool0"]);
        assert_eq!(core1.dma, vec!["dma0"]);
        let gemm = cfg.accelerator("gemm0").unwrap();
        let widths: Vec<usize> = gemm.channels.iter().map(|c| c.width_bits).collect();
        assert_eq!(widths, vec![512, 512, 2048]);
        let mp = cfg.accelerator("maxpool0").unwrap();
        assert!(mp.channels.iter().all(|c| c.width_bits == 512));
        assert_eq!(cfg.dma[0].beat_width_bits, 512);
        assert_eq!(cfg.peak_ops_per_cycle(), 1024.0);
    }

    #[test]
    fn rejects_width_not_multiple_of_bank() {
        let mut cfg = ClusterConfig::bundled("fig6d").unwrap();
        cfg.accelerators[1].channels[0].width_bits = 96;
        let err = ClusterConfig::from_json(&cfg.to_json()).unwrap_err();
        match err {
            ConfigError::Validation { msg, path } => {
                assert!(msg.contains("width not multiple of bank width"), "{msg}");
                assert!(path.contains("channels[0].width_bits"), "{path}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_dangling_reference() {
        let mut cfg = ClusterConfig::bundled("fig6d").unwrap();
        cfg.control_cores[0].accelerators.push("conv9".into());
        let err = ClusterConfig::from_json(&cfg.to_json()).unwrap_err();
        assert!(matches!(err, ConfigError::DanglingReference { ref device, .. } if device == "conv9"));
    }

    #[test]
    fn rejects_non_power_of_two_banks() {
        let mut cfg = ClusterConfig::bundled("fig6b").unwrap();
        cfg.spm.num_banks = 24;
        assert!(matches!(
            ClusterConfig::from_json(&cfg.to_json()),
            Err(ConfigError::Validation { .. })
        ));
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(ClusterConfig::from_json("{ nope"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn rejects_doubly_attached_accelerator() {
        let mut cfg = ClusterConfig::bundled("fig6d").unwrap();
        cfg.control_cores[1].accelerators.push("gemm0".into());
        assert!(matches!(
            ClusterConfig::from_json(&cfg.to_json()),
            Err(ConfigError::Validation { .. })
        ));
    }

    #[test]
    fn round_trip_and_determinism() {
        for name in ClusterConfig::bundled_names() {
            let a = ClusterConfig::bundled(name).unwrap();
            let b = ClusterConfig::from_json(&a.to_json()).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.hash_hex(), ClusterConfig::bundled(name).unwrap().hash_hex());
        }
    }

    #[test]
    fn load_from_file() {
        let dir = std::env::temp_dir().join(format!("hcsim-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("fig6c.cfg");
        std::fs::write(&path, ClusterConfig::bundled("fig6c").unwrap().to_json()).unwrap();
        let cfg = ClusterConfig::load_and_validate(&path).unwrap();
        assert!(cfg.has_gemm());
        assert!(ClusterConfig::load_and_validate(dir.join("missing.cfg")).is_err());
    }
}
