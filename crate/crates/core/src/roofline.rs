//! Roofline evaluation of operator graphs on an accelerator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opgraph::{Operator, OperatorGraph, Phase};
use crate::workload::{kv_bytes_per_token, VlaModelSpec};

pub const GIB: f64 = 1024.0 * 1024.0 * 1024.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceleratorConfig {
    pub name: String,
    /// Peak FLOP/s keyed by element size in bytes.
    pub peak_flops: BTreeMap<u8, f64>,
    /// Bytes per second.
    pub mem_bandwidth: f64,
    /// Bytes.
    pub mem_capacity: u64,
}

impl AcceleratorConfig {
    /// Builds from datasheet units: TFLOP/s (BF16, FP32, optional INT8 TOP/s), GB/s and GB.
    pub fn from_datasheet(
        name: &str,
        bf16_tflops: f64,
        hbm_bw_gbs: f64,
        memory_gb: f64,
        fp32_tflops: f64,
        int8_tops: Option<f64>,
    ) -> Self {
        let mut peak_flops = BTreeMap::from([(2, bf16_tflops * 1e12), (4, fp32_tflops * 1e12)]);
        if let Some(t) = int8_tops {
            peak_flops.insert(1, t * 1e12);
        }
        Self {
            name: name.to_string(),
            peak_flops,
            mem_bandwidth: hbm_bw_gbs * 1e9,
            mem_capacity: (memory_gb * GIB).round() as u64,
        }
    }

    pub fn presets() -> Vec<AcceleratorConfig> {
        vec![
            Self::from_datasheet("thor", 400.0, 270.0, 128.0, 100.0, Some(800.0)),
            Self::from_datasheet("rtx4090", 165.0, 1008.0, 24.0, 83.0, Some(330.0)),
            Self::from_datasheet("a100", 312.0, 2039.0, 80.0, 20.0, Some(624.0)),
            Self::from_datasheet("h100", 989.0, 3350.0, 80.0, 67.0, Some(1979.0)),
            Self::from_datasheet("b100", 1750.0, 8000.0, 192.0, 60.0, Some(3500.0)),
        ]
    }

    pub fn preset(name: &str) -> Result<AcceleratorConfig> {
        let key = name.to_ascii_lowercase().replace(['-', '_', ' '], "");
        let key = match key.as_str() {
            "jetsonthor" => "thor",
            "4090" => "rtx4090",
            k => k,
        };
        Self::presets()
            .into_iter()
            .find(|h| h.name == key)
            .ok_or_else(|| Error::UnknownPreset {
                kind: "hardware",
                name: name.to_string(),
            })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::Config(format!("accelerator `{}`: {reason}", self.name)))
        };
        if !self.peak_flops.contains_key(&2) || !self.peak_flops.contains_key(&4) {
            return bad("2-byte and 4-byte peaks are required");
        }
        if self.peak_flops.values().any(|&v| !(v > 0.0 && v.is_finite())) {
            return bad("peaks must be positive");
        }
        if !(self.mem_bandwidth > 0.0 && self.mem_bandwidth.is_finite()) || self.mem_capacity == 0 {
            return bad("bandwidth and capacity must be positive");
        }
        Ok(())
    }

    pub fn peak(&self, precision_bytes: u8) -> Result<f64> {
        self.peak_flops
            .get(&precision_bytes)
            .copied()
            .ok_or_else(|| Error::MissingPrecision {
                hw: self.name.clone(),
                precision_bytes,
            })
    }

    /// Ridge point of the 2-byte roofline in FLOPs per byte.
    pub fn balance_oi(&self) -> f64 {
        self.peak_flops.get(&2).copied().unwrap_or(f64::NAN) / self.mem_bandwidth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Compute,
    Memory,
}

impl Bound {
    pub fn as_str(self) -> &'static str {
        match self {
            Bound::Compute => "Compute",
            Bound::Memory => "Memory",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpTiming {
    pub seconds: f64,
    pub bound: Bound,
}

pub fn op_time(op: &Operator, hw: &AcceleratorConfig, precision_bytes: u8) -> Result<OpTiming> {
    let compute = op.flops as f64 / hw.peak(precision_bytes)?;
    let memory = op.bytes as f64 / hw.mem_bandwidth;
    Ok(if compute > memory {
        OpTiming { seconds: compute, bound: Bound::Compute }
    } else {
        OpTiming { seconds: memory, bound: Bound::Memory }
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct GraphTiming {
    pub total: f64,
    pub per_phase: BTreeMap<Phase, f64>,
    /// Time spent in compute-bound operators.
    pub compute_bound: f64,
    pub memory_bound: f64,
}

impl GraphTiming {
    pub fn phase(&self, phase: Phase) -> f64 {
        self.per_phase.get(&phase).copied().unwrap_or(0.0)
    }
}

pub fn graph_time(graph: &OperatorGraph, hw: &AcceleratorConfig, precision_bytes: u8) -> Result<GraphTiming> {
    let peak = hw.peak(precision_bytes)?;
    let mut t = GraphTiming::default();
    for op in &graph.ops {
        let compute = op.flops as f64 / peak;
        let memory = op.bytes as f64 / hw.mem_bandwidth;
        let s = compute.max(memory);
        t.total += s;
        *t.per_phase.entry(op.phase).or_insert(0.0) += s;
        if compute > memory {
            t.compute_bound += s;
        } else {
            t.memory_bound += s;
        }
    }
    Ok(t)
}

pub fn graph_oi(graph: &OperatorGraph) -> Result<f64> {
    match graph.total_bytes() {
        0 => Err(Error::ZeroBytes),
        b => Ok(graph.total_flops() as f64 / b as f64),
    }
}

/// Compute-bound iff aggregate OI exceeds the balance point; ties are memory-bound.
pub fn boundedness(graph: &OperatorGraph, hw: &AcceleratorConfig) -> Result<Bound> {
    let oi = graph_oi(graph)?;
    Ok(if oi > hw.balance_oi() { Bound::Compute } else { Bound::Memory })
}

/// What the KV cache holds while the model is resident.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextMode {
    /// Only the current prompt.
    Stateless,
    /// Vision tokens of the last `t` timesteps.
    LongContext(u64),
}

pub fn kv_footprint(spec: &VlaModelSpec, mode: ContextMode) -> u64 {
    let tokens = match mode {
        ContextMode::Stateless => spec.prefix_tokens(),
        ContextMode::LongContext(t) => spec.vision_tokens() * t,
    };
    tokens * kv_bytes_per_token(&spec.vlm)
}

/// Weights of every component plus stored KV, in bytes.
pub fn memory_footprint(spec: &VlaModelSpec, mode: ContextMode) -> u64 {
    spec.total_weight_bytes() + kv_footprint(spec, mode)
}

pub fn fits(spec: &VlaModelSpec, hw: &AcceleratorConfig, mode: ContextMode) -> bool {
    memory_footprint(spec, mode) <= hw.mem_capacity
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opgraph::matmul_op;
    use crate::workload::PresetCatalog;

    #[test]
    fn balance_points() {
        let want = [("thor", 1481.5), ("rtx4090", 163.7), ("a100", 153.0), ("h100", 295.2), ("b100", 218.8)];
        for (name, oi) in want {
            let hw = AcceleratorConfig::preset(name).unwrap();
            hw.validate().unwrap();
            assert!((hw.balance_oi() - oi).abs() < 0.1, "{name}");
        }
    }

    #[test]
    fn op_time_picks_max() {
        let hw = AcceleratorConfig::preset("b100").unwrap();
        let op = Operator { label: "x", flops: 2_000_000_000_000, bytes: 1_000_000_000, phase: Phase::Vlm };
        let t = op_time(&op, &hw, 2).unwrap();
        assert!((t.seconds - 2e12 / 1750e12).abs() < 1e-15);
        assert_eq!(t.bound, Bound::Compute);
        let zero = Operator { flops: 0, bytes: 0, ..op };
        assert_eq!(op_time(&zero, &hw, 2).unwrap().seconds, 0.0);
    }

    #[test]
    fn missing_precision() {
        let mut hw = AcceleratorConfig::preset("thor").unwrap();
        hw.peak_flops.remove(&1);
        let op = matmul_op(1, 1, 1, 1, "x");
        assert!(matches!(op_time(&op, &hw, 1), Err(Error::MissingPrecision { .. })));
    }

    #[test]
    fn tie_is_memory_bound() {
        let hw = AcceleratorConfig::preset("thor").unwrap();
        let g: OperatorGraph = [Operator { label: "x", flops: 400_000_000_000_000, bytes: 270_000_000_000, phase: Phase::Vlm }]
            .into_iter()
            .collect();
        assert_eq!(graph_oi(&g).unwrap(), hw.balance_oi());
        assert_eq!(boundedness(&g, &hw).unwrap(), Bound::Memory);
    }

    #[test]
    fn zero_byte_oi_errors() {
        assert_eq!(graph_oi(&OperatorGraph::new()), Err(Error::ZeroBytes));
    }

    #[test]
    fn capacity_checks() {
        let cat = PresetCatalog::builtin();
        let pi0 = cat.model("pi0").unwrap();
        let thor = AcceleratorConfig::preset("thor").unwrap();
        let b100 = AcceleratorConfig::preset("b100").unwrap();
        let m = memory_footprint(pi0, ContextMode::LongContext(10_000)) as f64 / GIB;
        assert!((m / 137.0 - 1.0).abs() < 0.02, "{m}");
        assert!(!fits(pi0, &thor, ContextMode::LongContext(10_000)));
        assert!(fits(pi0, &b100, ContextMode::LongContext(10_000)));
        let xl = cat.model("pi0-xl").unwrap();
        assert!(!fits(xl, &AcceleratorConfig::preset("4090").unwrap(), ContextMode::Stateless));
    }
}
