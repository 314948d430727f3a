//! Network transfers between robot, gateway and inference server.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::{kv_bytes_per_token, ObservationEncoding, TransformerConfig, VlaModelSpec};

/// One link. Bandwidths are bits per second; base latency is one-way seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub name: String,
    pub upload_bw: f64,
    pub download_bw: f64,
    pub base_latency: f64,
    pub efficiency: f64,
}

impl NetworkConfig {
    pub fn new(name: &str, upload_bw: f64, download_bw: f64, base_latency: f64) -> Self {
        Self {
            name: name.to_string(),
            upload_bw,
            download_bw,
            base_latency,
            efficiency: 1.0,
        }
    }

    pub fn presets() -> Vec<NetworkConfig> {
        const G: f64 = 1e9;
        const M: f64 = 1e6;
        const MS: f64 = 1e-3;
        vec![
            Self::new("eth1g", G, G, 0.10 * MS),
            Self::new("eth10g", 10.0 * G, 10.0 * G, 0.05 * MS),
            Self::new("wifi6", 560.0 * M, 800.0 * M, 3.5 * MS),
            Self::new("wifi7", 2.0 * G, 3.0 * G, 2.5 * MS),
            Self::new("4g", 19.0 * M, 75.0 * M, 25.0 * MS),
            Self::new("5g", 80.0 * M, 500.0 * M, 10.0 * MS),
            Self::new("slow-cloud", G, G, 100.0 * MS),
            Self::new("fast-cloud", 10.0 * G, 10.0 * G, 10.0 * MS),
        ]
    }

    pub fn preset(name: &str) -> Result<NetworkConfig> {
        let key = name.to_ascii_lowercase().replace(['_', ' '], "-");
        let key = match key.as_str() {
            "ethernet1g" | "ethernet-1g" | "eth-1g" => "eth1g",
            "ethernet10g" | "ethernet-10g" | "eth-10g" | "wired" => "eth10g",
            "wifi-6" => "wifi6",
            "wifi-7" => "wifi7",
            "slowcloud" => "slow-cloud",
            "fastcloud" => "fast-cloud",
            k => k,
        };
        Self::presets()
            .into_iter()
            .find(|n| n.name == key)
            .ok_or_else(|| Error::UnknownPreset {
                kind: "network",
                name: name.to_string(),
            })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidNetwork {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if !(self.upload_bw > 0.0 && self.download_bw > 0.0) {
            return bad("bandwidths must be positive");
        }
        if self.base_latency.is_nan() || self.base_latency < 0.0 {
            return bad("base latency must be non-negative");
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return bad("efficiency must be in (0, 1]");
        }
        Ok(())
    }

    pub fn bandwidth(&self, direction: Direction) -> f64 {
        match direction {
            Direction::Upload => self.upload_bw,
            Direction::Download => self.download_bw,
        }
    }

    /// Payloads per second this link sustains for `bytes`-sized messages, ignoring latency.
    pub fn throughput(&self, bytes: u64, direction: Direction) -> f64 {
        self.efficiency * self.bandwidth(direction) / (8.0 * bytes as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Upload,
    Download,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Payload {
    pub bytes: u64,
    pub direction: Direction,
}

/// Robot-to-server route: a single access hop, or access hop plus cloud hop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkPath {
    hops: Vec<NetworkConfig>,
}

impl NetworkPath {
    pub fn new(hops: Vec<NetworkConfig>) -> Result<Self> {
        if hops.is_empty() || hops.len() > 2 {
            return Err(Error::PathLength(hops.len()));
        }
        for h in &hops {
            h.validate()?;
        }
        Ok(Self { hops })
    }

    pub fn single(net: NetworkConfig) -> Result<Self> {
        Self::new(vec![net])
    }

    pub fn hops(&self) -> &[NetworkConfig] {
        &self.hops
    }

    pub fn label(&self) -> String {
        self.hops.iter().map(|h| h.name.as_str()).collect::<Vec<_>>().join("+")
    }
}

pub fn transfer_time(payload: Payload, net: &NetworkConfig) -> f64 {
    net.base_latency + (payload.bytes as f64 * 8.0) / (net.bandwidth(payload.direction) * net.efficiency)
}

pub fn path_time(payload: Payload, path: &NetworkPath) -> f64 {
    path.hops.iter().map(|h| transfer_time(payload, h)).sum()
}

pub fn observation_payload(spec: &VlaModelSpec, encoding: ObservationEncoding) -> Payload {
    let per_image = match encoding {
        ObservationEncoding::Compressed => spec.compressed_bytes_per_image,
        ObservationEncoding::Raw => spec.image_resolution * spec.image_resolution * 3,
    };
    Payload {
        bytes: spec.num_cameras * per_image,
        direction: Direction::Upload,
    }
}

/// One f32 per action dimension per chunk step.
pub fn action_payload(spec: &VlaModelSpec) -> Payload {
    Payload {
        bytes: spec.chunk_size * spec.action_dof * 4,
        direction: Direction::Download,
    }
}

pub fn kv_payload(tokens: u64, cfg: &TransformerConfig) -> Payload {
    Payload {
        bytes: tokens * kv_bytes_per_token(cfg),
        direction: Direction::Download,
    }
}
