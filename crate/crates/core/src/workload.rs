//! Model architecture descriptions and the closed-form quantities derived from them.
//!
//! A [`TransformerConfig`] describes one component (vision encoder, VLM backbone or
//! action expert). A [`VlaModelSpec`] composes up to three components with the
//! input/output shape of one inference (cameras, prompt, action chunk, denoising).
//!
//! Parameter counts exclude embedding tables and norm/bias vectors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of one transformer component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerConfig {
    #[serde(default)]
    pub name: String,
    #[serde(alias = "num_decoder_layers")]
    pub num_layers: u64,
    pub hidden_size: u64,
    pub intermediate_size: u64,
    /// Number of FFN up-projections: 1 for a plain MLP, 2 for a gated MLP.
    #[serde(default = "default_ffi")]
    pub num_ffi: u64,
    #[serde(alias = "num_attention_heads")]
    pub num_q_heads: u64,
    #[serde(alias = "num_key_value_heads")]
    pub num_kv_heads: u64,
    pub head_dim: u64,
    #[serde(default = "default_precision")]
    pub precision_bytes: u8,
    /// Elements per image patch (channels x patch^2). Only vision encoders have one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_input_dim: Option<u64>,
}

fn default_ffi() -> u64 {
    1
}

fn default_precision() -> u8 {
    2
}

impl TransformerConfig {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        num_layers: u64,
        hidden_size: u64,
        intermediate_size: u64,
        num_ffi: u64,
        num_q_heads: u64,
        num_kv_heads: u64,
        head_dim: u64,
    ) -> Self {
        Self {
            name: name.to_string(),
            num_layers,
            hidden_size,
            intermediate_size,
            num_ffi,
            num_q_heads,
            num_kv_heads,
            head_dim,
            precision_bytes: 2,
            patch_input_dim: None,
        }
    }

    pub fn with_patch_input_dim(mut self, dim: u64) -> Self {
        self.patch_input_dim = Some(dim);
        self
    }

    pub fn with_layers(mut self, num_layers: u64) -> Self {
        self.num_layers = num_layers;
        self
    }

    pub fn with_precision(mut self, precision_bytes: u8) -> Self {
        self.precision_bytes = precision_bytes;
        self
    }

    /// Width of the concatenated query heads.
    pub fn q_width(&self) -> u64 {
        self.num_q_heads * self.head_dim
    }

    /// Width of the concatenated key (or value) heads.
    pub fn kv_width(&self) -> u64 {
        self.num_kv_heads * self.head_dim
    }

    pub fn precision(&self) -> u64 {
        u64::from(self.precision_bytes)
    }

    /// Checks the structural invariants. A zero-layer config is allowed; it models
    /// an absent stack and yields zero parameters.
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| {
            Err(Error::InvalidConfig {
                name: self.name.clone(),
                reason: reason.to_string(),
            })
        };
        if self.hidden_size == 0
            || self.intermediate_size == 0
            || self.num_ffi == 0
            || self.num_q_heads == 0
            || self.num_kv_heads == 0
            || self.head_dim == 0
        {
            return bad("all widths, head counts and num_ffi must be >= 1");
        }
        if self.num_kv_heads > self.num_q_heads {
            return bad("num_kv_heads exceeds num_q_heads");
        }
        if !self.num_q_heads.is_multiple_of(self.num_kv_heads) {
            return bad("num_q_heads must be divisible by num_kv_heads");
        }
        if !matches!(self.precision_bytes, 1 | 2 | 4) {
            return bad("precision_bytes must be 1, 2 or 4");
        }
        if self.patch_input_dim == Some(0) {
            return bad("patch_input_dim must be >= 1 when present");
        }
        Ok(())
    }

    /// Weights in one transformer block.
    pub fn params_per_layer(&self) -> u64 {
        let h = self.hidden_size;
        let q = h * self.q_width();
        let kv = 2 * h * self.kv_width();
        let o = self.q_width() * h;
        let ffn = (self.num_ffi + 1) * h * self.intermediate_size;
        q + kv + o + ffn
    }
}

/// Parameter count without vocabulary tables or norm vectors.
pub fn param_count(cfg: &TransformerConfig) -> u64 {
    let patch = cfg.patch_input_dim.unwrap_or(0) * cfg.hidden_size;
    cfg.num_layers * cfg.params_per_layer() + patch
}

pub fn weight_bytes(cfg: &TransformerConfig) -> u64 {
    param_count(cfg) * cfg.precision()
}

/// Bytes of K and V cached per token across all layers.
pub fn kv_bytes_per_token(cfg: &TransformerConfig) -> u64 {
    2 * cfg.num_layers * cfg.num_kv_heads * cfg.head_dim * cfg.precision()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodingMode {
    /// Separate action expert refined over `denoise_steps` passes.
    Diffusion,
    /// The VLM emits one action token per forward pass.
    Autoregressive,
    /// The VLM emits every action token of the chunk in one forward pass.
    AutoregressiveParallel,
}

impl DecodingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DecodingMode::Diffusion => "diffusion",
            DecodingMode::Autoregressive => "autoregressive",
            DecodingMode::AutoregressiveParallel => "autoregressive_parallel",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "diffusion" => Some(Self::Diffusion),
            "autoregressive" | "ar" => Some(Self::Autoregressive),
            "autoregressive_parallel" | "ar_parallel" | "parallel" => {
                Some(Self::AutoregressiveParallel)
            }
            _ => None,
        }
    }
}

/// How camera frames are shipped to a remote server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationEncoding {
    Compressed,
    Raw,
}

/// A full vision-language-action model plus the shape of one inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlaModelSpec {
    pub name: String,
    pub vision_encoder: TransformerConfig,
    pub vlm: TransformerConfig,
    pub action_expert: Option<TransformerConfig>,
    pub num_cameras: u64,
    pub tokens_per_image: u64,
    pub language_tokens: u64,
    pub action_dof: u64,
    pub chunk_size: u64,
    pub denoise_steps: u64,
    pub decoding_mode: DecodingMode,
    /// Square camera frame side in pixels (RGB, 1 byte per channel when raw).
    pub image_resolution: u64,
    /// Uplink bytes per compressed camera frame.
    pub compressed_bytes_per_image: u64,
    pub observation_encoding: ObservationEncoding,
    /// Actions executed per inference; only scales the reported action rate.
    pub execution_horizon: Option<u64>,
}

impl VlaModelSpec {
    pub fn new(
        name: &str,
        vision_encoder: TransformerConfig,
        vlm: TransformerConfig,
        action_expert: Option<TransformerConfig>,
    ) -> Self {
        let decoding_mode = if action_expert.is_some() {
            DecodingMode::Diffusion
        } else {
            DecodingMode::Autoregressive
        };
        Self {
            name: name.to_string(),
            vision_encoder,
            vlm,
            action_expert,
            num_cameras: 3,
            tokens_per_image: 256,
            language_tokens: 32,
            action_dof: 14,
            chunk_size: 50,
            denoise_steps: 10,
            decoding_mode,
            image_resolution: 224,
            compressed_bytes_per_image: 15_500,
            observation_encoding: ObservationEncoding::Compressed,
            execution_horizon: None,
        }
    }

    pub fn vision_tokens(&self) -> u64 {
        self.num_cameras * self.tokens_per_image
    }

    /// Tokens the VLM ingests per inference: all image tokens plus the prompt.
    pub fn prefix_tokens(&self) -> u64 {
        self.vision_tokens() + self.language_tokens
    }

    /// Tokens an autoregressive decoder emits: one per action dimension per step.
    pub fn action_tokens(&self) -> u64 {
        self.chunk_size * self.action_dof
    }

    pub fn components(&self) -> impl Iterator<Item = &TransformerConfig> {
        std::iter::once(&self.vision_encoder)
            .chain(std::iter::once(&self.vlm))
            .chain(self.action_expert.iter())
    }

    pub fn total_params(&self) -> u64 {
        self.components().map(param_count).sum()
    }

    pub fn total_weight_bytes(&self) -> u64 {
        self.components().map(weight_bytes).sum()
    }

    /// Switches decoding paradigm. Autoregressive modes drop the action expert.
    pub fn with_decoding(mut self, mode: DecodingMode) -> Result<Self> {
        match mode {
            DecodingMode::Diffusion if self.action_expert.is_none() => {
                return Err(Error::InvalidSpec(format!(
                    "`{}` has no action expert for diffusion decoding",
                    self.name
                )))
            }
            DecodingMode::Diffusion => {}
            _ => self.action_expert = None,
        }
        self.decoding_mode = mode;
        Ok(self)
    }

    /// Replaces the action expert with a copy of the VLM architecture.
    pub fn with_vlm_sized_action_expert(mut self) -> Self {
        let mut expert = self.vlm.clone();
        expert.name = format!("{}-expert", self.vlm.name);
        self.action_expert = Some(expert);
        self.decoding_mode = DecodingMode::Diffusion;
        self
    }

    pub fn with_precision(mut self, precision_bytes: u8) -> Self {
        self.vision_encoder.precision_bytes = precision_bytes;
        self.vlm.precision_bytes = precision_bytes;
        if let Some(a) = self.action_expert.as_mut() {
            a.precision_bytes = precision_bytes;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        for c in self.components() {
            c.validate()?;
        }
        if self.vision_encoder.patch_input_dim.is_none() {
            return Err(Error::MissingPatchDim(self.vision_encoder.name.clone()));
        }
        match (self.decoding_mode, &self.action_expert) {
            (DecodingMode::Diffusion, None) => {
                return Err(Error::InvalidSpec(
                    "diffusion decoding requires an action expert".into(),
                ))
            }
            (DecodingMode::Autoregressive | DecodingMode::AutoregressiveParallel, Some(_)) => {
                return Err(Error::InvalidSpec(
                    "autoregressive decoding runs on the VLM; action expert must be absent".into(),
                ))
            }
            _ => {}
        }
        if self.tokens_per_image == 0 || self.action_dof == 0 || self.chunk_size == 0 {
            return Err(Error::InvalidSpec(
                "tokens_per_image, action_dof and chunk_size must be >= 1".into(),
            ));
        }
        if let Some(h) = self.execution_horizon {
            if h == 0 || h > self.chunk_size {
                return Err(Error::InvalidSpec(
                    "execution_horizon must be in 1..=chunk_size".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Recipe for one member of the scaled model family.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyMember {
    pub name: String,
    pub vision: String,
    pub vlm: String,
    /// Name given to the derived action expert.
    pub action_name: String,
    /// Reference parameter count the derived action expert must land near.
    pub action_target_params: f64,
}

/// Allowed relative miss between a derived action expert and its reference size.
pub const ACTION_TARGET_TOLERANCE: f64 = 0.10;

/// Builds an action expert from a VLM: half the hidden width, a quarter of the
/// FFN width, same attention heads. Depth starts at the VLM's depth (each expert
/// block attends the KV of one backbone block) and moves by the fewest layers
/// that land within [`ACTION_TARGET_TOLERANCE`] of `target_params`.
pub fn derive_action_expert(
    vlm: &TransformerConfig,
    target_params: f64,
    name: &str,
) -> Result<TransformerConfig> {
    let mut expert = TransformerConfig {
        name: name.to_string(),
        num_layers: vlm.num_layers,
        hidden_size: vlm.hidden_size / 2,
        intermediate_size: vlm.intermediate_size / 4,
        num_ffi: vlm.num_ffi,
        num_q_heads: vlm.num_q_heads,
        num_kv_heads: vlm.num_kv_heads,
        head_dim: vlm.head_dim,
        precision_bytes: vlm.precision_bytes,
        patch_input_dim: None,
    };
    expert.validate()?;
    let per_layer = expert.params_per_layer() as f64;
    let within = |layers: u64| {
        layers >= 1 && ((layers as f64 * per_layer) / target_params - 1.0).abs() <= ACTION_TARGET_TOLERANCE
    };
    let start = vlm.num_layers.max(1);
    let max_shift = start.max((target_params / per_layer).ceil() as u64 + 1);
    let layers = (0..=max_shift).find_map(|shift| {
        // fewer layers first on ties
        [start.checked_sub(shift), Some(start + shift)]
            .into_iter()
            .flatten()
            .find(|&l| within(l))
    });
    match layers {
        Some(l) => {
            expert.num_layers = l;
            Ok(expert)
        }
        None => {
            let actual = start as f64 * per_layer;
            Err(Error::ParamTarget {
                name: name.to_string(),
                actual,
                target: target_params,
                deviation: (actual / target_params - 1.0) * 100.0,
            })
        }
    }
}

/// Named component configs, composed model specs and the scaled-family recipes.
#[derive(Debug, Clone, Default)]
pub struct PresetCatalog {
    pub components: BTreeMap<String, TransformerConfig>,
    pub models: BTreeMap<String, VlaModelSpec>,
    pub family: Vec<FamilyMember>,
}

impl PresetCatalog {
    pub fn builtin() -> Self {
        let mut cat = PresetCatalog::default();
        let patch = 3 * 14 * 14;
        for cfg in [
            TransformerConfig::new("siglip-so400m", 27, 1152, 4304, 1, 16, 16, 72)
                .with_patch_input_dim(patch),
            TransformerConfig::new("siglip-giant", 40, 1536, 6144, 1, 16, 16, 96)
                .with_patch_input_dim(patch),
            TransformerConfig::new("gemma-2b", 18, 2048, 16384, 2, 8, 1, 256),
            TransformerConfig::new("llama2-7b", 32, 4096, 11008, 2, 32, 32, 128),
            TransformerConfig::new("llama2-13b", 40, 5120, 13824, 2, 40, 40, 128),
            TransformerConfig::new("llama2-70b", 80, 8192, 28672, 2, 64, 8, 128),
            TransformerConfig::new("act-m", 18, 1024, 4096, 2, 8, 1, 256),
        ] {
            cat.components.insert(cfg.name.clone(), cfg);
        }
        cat.family = vec![
            member("pi0", "siglip-so400m", "gemma-2b", "act-m", 292.63e6),
            member("pi0-l", "siglip-giant", "llama2-7b", "act-l", 1.5e9),
            member("pi0-xl", "siglip-giant", "llama2-13b", "act-xl", 2.9e9),
            member("pi0-xxl", "siglip-giant", "llama2-70b", "act-xxl", 11.7e9),
        ];
        let family = scaled_family(&cat).expect("builtin family derives within tolerance");
        for spec in family {
            if let Some(a) = &spec.action_expert {
                cat.components.entry(a.name.clone()).or_insert_with(|| a.clone());
            }
            cat.models.insert(spec.name.clone(), spec);
        }
        cat
    }

    pub fn component(&self, name: &str) -> Result<&TransformerConfig> {
        self.components.get(name).ok_or_else(|| Error::UnknownPreset {
            kind: "component",
            name: name.to_string(),
        })
    }

    pub fn model(&self, name: &str) -> Result<&VlaModelSpec> {
        self.models.get(name).ok_or_else(|| Error::UnknownPreset {
            kind: "model",
            name: name.to_string(),
        })
    }
}

fn member(name: &str, vision: &str, vlm: &str, action: &str, target: f64) -> FamilyMember {
    FamilyMember {
        name: name.to_string(),
        vision: vision.to_string(),
        vlm: vlm.to_string(),
        action_name: action.to_string(),
        action_target_params: target,
    }
}

/// Composes every family member, deriving its action expert from its VLM.
pub fn scaled_family(catalog: &PresetCatalog) -> Result<Vec<VlaModelSpec>> {
    catalog
        .family
        .iter()
        .map(|m| {
            let vision = catalog.component(&m.vision)?.clone();
            let vlm = catalog.component(&m.vlm)?.clone();
            let action = derive_action_expert(&vlm, m.action_target_params, &m.action_name)?;
            let spec = VlaModelSpec::new(&m.name, vision, vlm, Some(action));
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a / b - 1.0).abs()
    }

    #[test]
    fn toy_config_hand_expansion() {
        let cfg = TransformerConfig::new("toy", 1, 2, 2, 1, 1, 1, 2);
        assert_eq!(param_count(&cfg), 24);
    }

    #[test]
    fn reference_component_sizes() {
        let cat = PresetCatalog::builtin();
        let p = |n: &str| param_count(cat.component(n).unwrap()) as f64;
        assert!(rel(p("gemma-2b"), 1.98e9) < 0.005);
        assert!(rel(p("siglip-so400m"), 411.19e6) < 0.005);
        assert!(rel(p("act-m"), 292.63e6) < 0.07);
        assert!(rel(p("llama2-7b"), 6.5e9) < 0.02);
        assert!(rel(p("llama2-13b"), 12.7e9) < 0.02);
        assert!(rel(p("llama2-70b"), 68.5e9) < 0.02);
        assert!(rel(p("siglip-giant"), 1.1e9) < 0.05);
    }

    #[test]
    fn weight_and_kv_bytes() {
        let cat = PresetCatalog::builtin();
        let gemma = cat.component("gemma-2b").unwrap();
        assert_eq!(weight_bytes(gemma), 2 * param_count(gemma));
        assert_eq!(kv_bytes_per_token(gemma), 18_432);
        assert_eq!(kv_bytes_per_token(cat.component("act-m").unwrap()), 18_432);
        let empty = gemma.clone().with_layers(0);
        assert_eq!(weight_bytes(&empty), 0);
        assert_eq!(kv_bytes_per_token(&empty), 0);
    }

    #[test]
    fn pi0_weights_in_gib() {
        let cat = PresetCatalog::builtin();
        let gib = cat.model("pi0").unwrap().total_weight_bytes() as f64 / (1u64 << 30) as f64;
        assert!((gib - 5.03).abs() < 0.02, "{gib}");
    }

    #[test]
    fn prefix_tokens_default() {
        let cat = PresetCatalog::builtin();
        let pi0 = cat.model("pi0").unwrap();
        assert_eq!(pi0.prefix_tokens(), 800);
        assert_eq!(pi0.action_tokens(), 700);
        pi0.validate().unwrap();
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = TransformerConfig::new("bad", 1, 8, 8, 1, 2, 4, 4);
        assert!(c.validate().is_err());
        c.num_kv_heads = 3;
        c.num_q_heads = 4;
        assert!(c.validate().is_err());
        c.num_kv_heads = 2;
        c.precision_bytes = 3;
        assert!(c.validate().is_err());
        c.precision_bytes = 4;
        c.validate().unwrap();
    }

    #[test]
    fn decoding_invariants() {
        let cat = PresetCatalog::builtin();
        let pi0 = cat.model("pi0").unwrap().clone();
        let ar = pi0.clone().with_decoding(DecodingMode::Autoregressive).unwrap();
        assert!(ar.action_expert.is_none());
        ar.validate().unwrap();
        assert!(ar.with_decoding(DecodingMode::Diffusion).is_err());
        let mut broken = pi0;
        broken.decoding_mode = DecodingMode::AutoregressiveParallel;
        assert!(broken.validate().is_err());
    }

    #[test]
    fn family_matches_reference_sizes() {
        let cat = PresetCatalog::builtin();
        let fam = scaled_family(&cat).unwrap();
        let totals: Vec<f64> = fam.iter().map(|s| s.total_params() as f64).collect();
        for (t, want) in totals.iter().zip([2.7e9, 9.1e9, 16.7e9, 81.3e9]) {
            assert!(rel(*t, want) < 0.03, "{t} vs {want}");
        }
        let act_l = param_count(fam[1].action_expert.as_ref().unwrap()) as f64;
        assert!(rel(act_l, 1.5e9) < 0.10);
    }

    #[test]
    fn family_base_member_is_pi0_preset() {
        let cat = PresetCatalog::builtin();
        let fam = scaled_family(&cat).unwrap();
        assert_eq!(fam[0].action_expert.as_ref(), cat.components.get("act-m"));
        assert_eq!(&fam[0], cat.model("pi0").unwrap());
    }

    #[test]
    fn derivation_keeps_backbone_depth_when_possible() {
        let cat = PresetCatalog::builtin();
        let l7 = cat.component("llama2-7b").unwrap();
        let act_l = derive_action_expert(l7, 1.5e9, "act-l").unwrap();
        assert_eq!(act_l.num_layers, 32);
        assert_eq!(act_l.hidden_size, 2048);
        assert_eq!(act_l.intermediate_size, 2752);
        // 80 layers would overshoot 11.7B by ~12%
        let l70 = cat.component("llama2-70b").unwrap();
        let act_xxl = derive_action_expert(l70, 11.7e9, "act-xxl").unwrap();
        assert_eq!(act_xxl.num_layers, 78);
    }

    #[test]
    fn derivation_signals_unreachable_target() {
        let cat = PresetCatalog::builtin();
        let gemma = cat.component("gemma-2b").unwrap();
        // one layer already exceeds the target by far
        let err = derive_action_expert(gemma, 1.0e6, "tiny").unwrap_err();
        assert!(matches!(err, Error::ParamTarget { .. }));
    }
}
