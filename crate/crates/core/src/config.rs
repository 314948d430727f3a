//! TOML preset files and run defaults.
//!
//! ```toml
//! [components.my-vlm]
//! hidden_size = 2048
//! intermediate_size = 16384
//! num_ffi = 2
//! num_decoder_layers = 18
//! num_attention_heads = 8
//! num_key_value_heads = 1
//! head_dim = 256
//!
//! [hardware.my-gpu]
//! BF16_TFLOPS = 1750
//! FP32_TFLOPS = 60
//! Memory_GB = 192
//! HBM_BW_GBs = 8000
//!
//! [networks.lab]
//! bandwidth_mbps = 1000
//! base_latency_ms = 0.1
//!
//! [models.my-vla]
//! vision_encoder = "siglip-so400m"
//! vlm = "my-vlm"
//! action_expert = "act-m"
//!
//! [run]
//! model = "my-vla"
//! hw = "my-gpu"
//! ```
//!
//! Files on the preset path (`VLA_ROOFLINE_PRESET_PATH`, `:`-separated files or
//! directories of `*.toml`) load first, then `--config`; later definitions of a
//! name replace earlier ones. Command-line flags override `[run]`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::netmodel::NetworkConfig;
use crate::roofline::AcceleratorConfig;
use crate::workload::{DecodingMode, ObservationEncoding, PresetCatalog, TransformerConfig, VlaModelSpec};

pub const PRESET_PATH_ENV: &str = "VLA_ROOFLINE_PRESET_PATH";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentEntry {
    #[serde(alias = "num_decoder_layers")]
    num_layers: u64,
    hidden_size: u64,
    intermediate_size: u64,
    #[serde(default = "one")]
    num_ffi: u64,
    #[serde(alias = "num_attention_heads")]
    num_q_heads: u64,
    /// Defaults to `num_q_heads` (plain multi-head attention).
    #[serde(default, alias = "num_key_value_heads")]
    num_kv_heads: Option<u64>,
    head_dim: u64,
    #[serde(default = "two")]
    precision_bytes: u8,
    #[serde(default)]
    patch_input_dim: Option<u64>,
    /// Accepted for compatibility; sequence length comes from the model spec.
    #[serde(default)]
    #[allow(dead_code)]
    seq_len: Option<u64>,
}

fn one() -> u64 {
    1
}

fn two() -> u8 {
    2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct HardwareEntry {
    #[serde(rename = "BF16_TFLOPS")]
    bf16_tflops: f64,
    #[serde(rename = "FP32_TFLOPS")]
    fp32_tflops: f64,
    #[serde(rename = "INT8_TOPS", default)]
    int8_tops: Option<f64>,
    #[serde(rename = "Memory_GB")]
    memory_gb: f64,
    #[serde(rename = "HBM_BW_GBs")]
    hbm_bw_gbs: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkEntry {
    #[serde(default)]
    bandwidth_mbps: Option<f64>,
    #[serde(default)]
    upload_mbps: Option<f64>,
    #[serde(default)]
    download_mbps: Option<f64>,
    base_latency_ms: f64,
    #[serde(default = "unit")]
    efficiency: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelEntry {
    vision_encoder: String,
    vlm: String,
    #[serde(default)]
    action_expert: Option<String>,
    #[serde(default)]
    num_cameras: Option<u64>,
    #[serde(default)]
    tokens_per_image: Option<u64>,
    #[serde(default)]
    language_tokens: Option<u64>,
    #[serde(default)]
    action_dof: Option<u64>,
    #[serde(default)]
    chunk_size: Option<u64>,
    #[serde(default)]
    denoise_steps: Option<u64>,
    #[serde(default)]
    decoding: Option<String>,
    #[serde(default)]
    image_resolution: Option<u64>,
    #[serde(default)]
    compressed_bytes_per_image: Option<u64>,
    #[serde(default)]
    observation: Option<ObservationEncoding>,
    #[serde(default)]
    execution_horizon: Option<u64>,
}

/// Defaults for command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<String>,
    pub hw: Option<String>,
    pub placement: Option<String>,
    pub net: Option<String>,
    pub cloud_net: Option<String>,
    pub device_hw: Option<String>,
    pub chunk: Option<u64>,
    pub steps: Option<u64>,
    pub context_steps: Option<u64>,
    pub decoding: Option<String>,
    pub s2_cap: Option<f64>,
    #[serde(rename = "async")]
    pub async_mode: Option<bool>,
    pub precision: Option<u8>,
    pub format: Option<String>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    components: BTreeMap<String, ComponentEntry>,
    #[serde(default)]
    hardware: BTreeMap<String, HardwareEntry>,
    #[serde(default)]
    networks: BTreeMap<String, NetworkEntry>,
    #[serde(default)]
    models: BTreeMap<String, ModelEntry>,
    #[serde(default)]
    run: Option<RunConfig>,
}

/// Every addressable preset: components, models, accelerators and networks.
#[derive(Debug, Clone)]
pub struct Registry {
    pub catalog: PresetCatalog,
    pub hardware: BTreeMap<String, AcceleratorConfig>,
    pub networks: BTreeMap<String, NetworkConfig>,
    pub run: RunConfig,
}

impl Default for Registry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Registry {
    pub fn builtin() -> Self {
        Self {
            catalog: PresetCatalog::builtin(),
            hardware: AcceleratorConfig::presets().into_iter().map(|h| (h.name.clone(), h)).collect(),
            networks: NetworkConfig::presets().into_iter().map(|n| (n.name.clone(), n)).collect(),
            run: RunConfig::default(),
        }
    }

    /// Built-ins, then the preset path from the environment, then `extra`.
    pub fn load(extra: Option<&Path>) -> Result<Self> {
        let mut reg = Self::builtin();
        if let Ok(paths) = std::env::var(PRESET_PATH_ENV) {
            for entry in std::env::split_paths(&paths).filter(|p| !p.as_os_str().is_empty()) {
                for file in toml_files(&entry)? {
                    reg.merge_file(&file)?;
                }
            }
        }
        if let Some(p) = extra {
            reg.merge_file(p)?;
        }
        Ok(reg)
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        self.merge_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn merge_str(&mut self, text: &str) -> Result<()> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for (name, c) in file.components {
            let cfg = TransformerConfig {
                name: name.clone(),
                num_layers: c.num_layers,
                hidden_size: c.hidden_size,
                intermediate_size: c.intermediate_size,
                num_ffi: c.num_ffi,
                num_q_heads: c.num_q_heads,
                num_kv_heads: c.num_kv_heads.unwrap_or(c.num_q_heads),
                head_dim: c.head_dim,
                precision_bytes: c.precision_bytes,
                patch_input_dim: c.patch_input_dim,
            };
            cfg.validate()?;
            self.catalog.components.insert(name, cfg);
        }
        for (name, h) in file.hardware {
            let hw = AcceleratorConfig::from_datasheet(&name, h.bf16_tflops, h.hbm_bw_gbs, h.memory_gb, h.fp32_tflops, h.int8_tops);
            hw.validate()?;
            self.hardware.insert(name, hw);
        }
        for (name, n) in file.networks {
            let (up, down) = match (n.bandwidth_mbps, n.upload_mbps, n.download_mbps) {
                (Some(b), None, None) => (b, b),
                (None, Some(u), Some(d)) => (u, d),
                _ => {
                    return Err(Error::InvalidNetwork {
                        name,
                        reason: "give either bandwidth_mbps or both upload_mbps and download_mbps".into(),
                    })
                }
            };
            let net = NetworkConfig {
                name: name.clone(),
                upload_bw: up * 1e6,
                download_bw: down * 1e6,
                base_latency: n.base_latency_ms * 1e-3,
                efficiency: n.efficiency,
            };
            net.validate()?;
            self.networks.insert(name, net);
        }
        for (name, m) in file.models {
            let spec = self.build_model(&name, m)?;
            self.catalog.models.insert(name, spec);
        }
        if let Some(run) = file.run {
            self.run = run;
        }
        Ok(())
    }

    fn build_model(&self, name: &str, m: ModelEntry) -> Result<VlaModelSpec> {
        let vision = self.catalog.component(&m.vision_encoder)?.clone();
        let vlm = self.catalog.component(&m.vlm)?.clone();
        let action = m.action_expert.as_deref().map(|a| self.catalog.component(a).cloned()).transpose()?;
        let mut s = VlaModelSpec::new(name, vision, vlm, action);
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = m.$f { s.$f = v; } )* };
        }
        set!(num_cameras, tokens_per_image, language_tokens, action_dof, chunk_size, denoise_steps, image_resolution, compressed_bytes_per_image);
        if let Some(o) = m.observation {
            s.observation_encoding = o;
        }
        s.execution_horizon = m.execution_horizon;
        if let Some(d) = m.decoding {
            let mode = DecodingMode::parse(&d).ok_or_else(|| Error::Config(format!("unknown decoding mode `{d}`")))?;
            s = s.with_decoding(mode)?;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn model(&self, name: &str) -> Result<VlaModelSpec> {
        self.catalog.model(name).cloned()
    }

    pub fn hw(&self, name: &str) -> Result<AcceleratorConfig> {
        match self.hardware.get(name) {
            Some(h) => Ok(h.clone()),
            None => AcceleratorConfig::preset(name)
                .ok()
                .and_then(|p| self.hardware.get(&p.name).cloned())
                .ok_or_else(|| Error::UnknownPreset { kind: "hardware", name: name.to_string() }),
        }
    }

    pub fn net(&self, name: &str) -> Result<NetworkConfig> {
        match self.networks.get(name) {
            Some(n) => Ok(n.clone()),
            None => NetworkConfig::preset(name)
                .ok()
                .and_then(|p| self.networks.get(&p.name).cloned())
                .ok_or_else(|| Error::UnknownPreset { kind: "network", name: name.to_string() }),
        }
    }
}

fn toml_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::param_count;

    const SAMPLE: &str = r#"
[components.tiny-vlm]
seq_len = 800
hidden_size = 2048
intermediate_size = 16384
num_ffi = 2
num_decoder_layers = 18
num_attention_heads = 8
num_key_value_heads = 1
head_dim = 256

[hardware.big]
BF16_TFLOPS = 1750
FP32_TFLOPS = 60
Memory_GB = 192
HBM_BW_GBs = 8000

[networks.lab]
bandwidth_mbps = 1000
base_latency_ms = 0.1
efficiency = 1.0

[models.custom]
vision_encoder = "siglip-so400m"
vlm = "tiny-vlm"
action_expert = "act-m"
chunk_size = 25

[run]
model = "custom"
hw = "big"
"#;

    #[test]
    fn figure_style_fields() {
        let mut reg = Registry::builtin();
        reg.merge_str(SAMPLE).unwrap();
        let vlm = reg.catalog.component("tiny-vlm").unwrap();
        assert_eq!(param_count(vlm), param_count(reg.catalog.component("gemma-2b").unwrap()));
        assert_eq!(reg.hw("big").unwrap().balance_oi(), reg.hw("b100").unwrap().balance_oi());
        assert_eq!(reg.net("lab").unwrap(), {
            let mut n = reg.net("eth1g").unwrap();
            n.name = "lab".into();
            n
        });
        assert_eq!(reg.model("custom").unwrap().chunk_size, 25);
        assert_eq!(reg.run.model.as_deref(), Some("custom"));
    }

    #[test]
    fn rejects_typos_and_bad_values() {
        let mut reg = Registry::builtin();
        assert!(reg.merge_str("[hardware.x]\nBF16_TFLOP = 1\n").is_err());
        assert!(reg
            .merge_str("[components.x]\nhidden_size=8\nintermediate_size=8\nnum_layers=1\nnum_q_heads=2\nnum_kv_heads=3\nhead_dim=4\n")
            .is_err());
        assert!(reg.merge_str("[networks.n]\nbase_latency_ms = 1\n").is_err());
        assert!(reg.merge_str("[models.m]\nvision_encoder = \"nope\"\nvlm = \"gemma-2b\"\n").is_err());
    }

    #[test]
    fn aliases_resolve() {
        let reg = Registry::builtin();
        assert_eq!(reg.hw("RTX-4090").unwrap().name, "rtx4090");
        assert_eq!(reg.net("Ethernet 10G").unwrap().name, "eth10g");
        assert!(reg.hw("tpu").is_err());
    }
}
