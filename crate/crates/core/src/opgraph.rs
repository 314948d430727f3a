//! Operator graphs: ordered (FLOPs, bytes) lists for each forward workload.
//!
//! Counting rules:
//! * matmul `m x k` by `k x n`: `2mnk` FLOPs, input + weight + output bytes.
//! * attention is fused: Q, K, V read and O written once, scores stay on chip.
//! * norms, softmax, residual adds and activations are not counted.

use serde::Serialize;

use crate::workload::{kv_bytes_per_token, DecodingMode, TransformerConfig, VlaModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Vision,
    Vlm,
    Action,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Vision, Phase::Vlm, Phase::Action];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Vision => "vision",
            Phase::Vlm => "vlm",
            Phase::Action => "action",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Operator {
    pub label: &'static str,
    pub flops: u64,
    pub bytes: u64,
    pub phase: Phase,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct OperatorGraph {
    pub ops: Vec<Operator>,
    /// Bytes of new KV cache this workload leaves behind.
    pub kv_cache_written_bytes: u64,
}

impl OperatorGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, op: Operator) {
        self.ops.push(op);
    }

    pub fn append(&mut self, other: OperatorGraph) {
        self.ops.extend(other.ops);
        self.kv_cache_written_bytes += other.kv_cache_written_bytes;
    }

    pub fn concat(mut self, other: OperatorGraph) -> Self {
        self.append(other);
        self
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn total_flops(&self) -> u64 {
        self.ops.iter().map(|o| o.flops).sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.ops.iter().map(|o| o.bytes).sum()
    }

    /// Retags every operator.
    pub fn with_phase(mut self, phase: Phase) -> Self {
        for op in &mut self.ops {
            op.phase = phase;
        }
        self
    }

    /// Sub-graph holding only the operators of one phase.
    pub fn phase(&self, phase: Phase) -> OperatorGraph {
        OperatorGraph {
            ops: self.ops.iter().filter(|o| o.phase == phase).cloned().collect(),
            kv_cache_written_bytes: 0,
        }
    }
}

impl FromIterator<Operator> for OperatorGraph {
    fn from_iter<I: IntoIterator<Item = Operator>>(iter: I) -> Self {
        OperatorGraph {
            ops: iter.into_iter().collect(),
            kv_cache_written_bytes: 0,
        }
    }
}

/// `m x k` activations times a `k x n` weight.
pub fn matmul_op(m: u64, n: u64, k: u64, p: u64, label: &'static str) -> Operator {
    Operator {
        label,
        flops: 2 * m * n * k,
        bytes: p * (m * k + k * n + m * n),
        phase: Phase::Vlm,
    }
}

pub fn attention_op(q_len: u64, kv_len: u64, n_q: u64, n_kv: u64, d_head: u64, p: u64) -> Operator {
    Operator {
        label: "attention",
        flops: 4 * q_len * kv_len * n_q * d_head,
        bytes: p * (2 * q_len * n_q * d_head + 2 * kv_len * n_kv * d_head),
        phase: Phase::Vlm,
    }
}

/// One transformer block with `m` query rows; `attention` is supplied by the caller.
fn block(cfg: &TransformerConfig, m: u64, attention: impl IntoIterator<Item = Operator>) -> Vec<Operator> {
    let p = cfg.precision();
    let h = cfg.hidden_size;
    let mut ops = vec![
        matmul_op(m, cfg.q_width(), h, p, "q_proj"),
        matmul_op(m, cfg.kv_width(), h, p, "k_proj"),
        matmul_op(m, cfg.kv_width(), h, p, "v_proj"),
    ];
    ops.extend(attention);
    ops.push(matmul_op(m, h, cfg.q_width(), p, "o_proj"));
    for _ in 0..cfg.num_ffi {
        ops.push(matmul_op(m, cfg.intermediate_size, h, p, "ffn_up"));
    }
    ops.push(matmul_op(m, h, cfg.intermediate_size, p, "ffn_down"));
    ops
}

fn tagged(ops: Vec<Operator>, phase: Phase) -> OperatorGraph {
    OperatorGraph::from_iter(ops).with_phase(phase)
}

/// Encodes `num_images` frames. All frames share each projection and FFN kernel
/// (one weight read per layer); attention stays within each frame.
///
/// Panics if `cfg` has no `patch_input_dim`; [`VlaModelSpec::validate`] rejects that.
pub fn vit_encode_graph(cfg: &TransformerConfig, num_images: u64, tokens_per_image: u64) -> OperatorGraph {
    if num_images == 0 {
        return OperatorGraph::new();
    }
    let patch = cfg
        .patch_input_dim
        .expect("vision encoder requires patch_input_dim");
    let p = cfg.precision();
    let rows = num_images * tokens_per_image;
    let mut ops = vec![matmul_op(rows, cfg.hidden_size, patch, p, "patch_embed")];
    for _ in 0..cfg.num_layers {
        let attn = (0..num_images).map(|_| {
            attention_op(
                tokens_per_image,
                tokens_per_image,
                cfg.num_q_heads,
                cfg.num_kv_heads,
                cfg.head_dim,
                p,
            )
        });
        ops.extend(block(cfg, rows, attn));
    }
    tagged(ops, Phase::Vision)
}

/// Processes `q_len` new tokens attending `kv_prefix_len` cached tokens plus themselves.
pub fn prefill_graph(cfg: &TransformerConfig, q_len: u64, kv_prefix_len: u64) -> OperatorGraph {
    let p = cfg.precision();
    let mut g = OperatorGraph::new();
    for _ in 0..cfg.num_layers {
        let attn = attention_op(
            q_len,
            kv_prefix_len + q_len,
            cfg.num_q_heads,
            cfg.num_kv_heads,
            cfg.head_dim,
            p,
        );
        g.ops.extend(block(cfg, q_len, [attn]));
    }
    g.kv_cache_written_bytes = q_len * kv_bytes_per_token(cfg);
    g.with_phase(Phase::Vlm)
}

/// One autoregressive token over a cache of `kv_prefix_len` tokens.
pub fn decode_step_graph(cfg: &TransformerConfig, kv_prefix_len: u64) -> OperatorGraph {
    prefill_graph(cfg, 1, kv_prefix_len).with_phase(Phase::Action)
}

/// Every action token of the chunk in a single forward pass.
pub fn parallel_decode_graph(cfg: &TransformerConfig, num_action_tokens: u64, kv_prefix_len: u64) -> OperatorGraph {
    prefill_graph(cfg, num_action_tokens, kv_prefix_len).with_phase(Phase::Action)
}

/// `num_tokens` sequential decode steps; step `k` sees `kv_prefix_len + k` cached tokens.
pub fn autoregressive_graph(cfg: &TransformerConfig, num_tokens: u64, kv_prefix_len: u64) -> OperatorGraph {
    let mut g = OperatorGraph::new();
    for k in 0..num_tokens {
        g.append(decode_step_graph(cfg, kv_prefix_len + k));
    }
    g
}

/// Denoising loop of an action expert conditioned on `vlm_prefix_tokens` of VLM KV.
///
/// Each step re-reads the expert weights and the whole VLM prefix KV; the expert's
/// own chunk KV is recomputed per step. The prefix read is split evenly over the
/// expert's layers, remainder on the first.
pub fn diffusion_graph(
    cfg_action: &TransformerConfig,
    vlm_prefix_tokens: u64,
    vlm_kv_bytes_per_token: u64,
    chunk_size: u64,
    steps: u64,
    action_dof: u64,
) -> OperatorGraph {
    let c = cfg_action;
    let p = c.precision();
    let h = c.hidden_size;
    let prefix_bytes = vlm_prefix_tokens * vlm_kv_bytes_per_token;
    let layers = c.num_layers.max(1);
    let share = prefix_bytes / layers;
    let remainder = prefix_bytes % layers;

    let mut step = vec![matmul_op(chunk_size, h, action_dof, p, "action_in_proj")];
    for layer in 0..c.num_layers {
        let mut attn = attention_op(
            chunk_size,
            vlm_prefix_tokens + chunk_size,
            c.num_q_heads,
            c.num_kv_heads,
            c.head_dim,
            p,
        );
        attn.label = "joint_attention";
        attn.bytes = p * (2 * chunk_size * c.q_width() + 2 * chunk_size * c.kv_width())
            + share
            + if layer == 0 { remainder } else { 0 };
        step.extend(block(c, chunk_size, [attn]));
    }
    step.push(matmul_op(chunk_size, action_dof, h, p, "action_out_proj"));

    let mut ops = Vec::with_capacity(step.len() * steps as usize);
    for _ in 0..steps {
        ops.extend_from_slice(&step);
    }
    tagged(ops, Phase::Action)
}

/// Full graph of one inference whose VLM attends `history_tokens` of earlier context.
pub fn inference_graph_with_history(spec: &VlaModelSpec, history_tokens: u64) -> OperatorGraph {
    let prefix = spec.prefix_tokens();
    let context = history_tokens + prefix;
    let vision = vit_encode_graph(&spec.vision_encoder, spec.num_cameras, spec.tokens_per_image);
    let vlm = prefill_graph(&spec.vlm, prefix, history_tokens);
    let action = match (spec.decoding_mode, &spec.action_expert) {
        (DecodingMode::Diffusion, Some(expert)) => diffusion_graph(
            expert,
            context,
            kv_bytes_per_token(&spec.vlm),
            spec.chunk_size,
            spec.denoise_steps,
            spec.action_dof,
        ),
        (DecodingMode::Diffusion, None) => OperatorGraph::new(),
        (DecodingMode::Autoregressive, _) => autoregressive_graph(&spec.vlm, spec.action_tokens(), context),
        (DecodingMode::AutoregressiveParallel, _) => {
            parallel_decode_graph(&spec.vlm, spec.action_tokens(), context)
        }
    };
    vision.concat(vlm).concat(action)
}

/// Full graph of one stateless inference.
pub fn inference_graph(spec: &VlaModelSpec) -> OperatorGraph {
    inference_graph_with_history(spec, 0)
}

/// Inference at timestep `t` (1-based) of a long-context model that keeps the
/// vision tokens of every earlier step in the VLM cache.
pub fn long_context_step_graphs(spec: &VlaModelSpec, t: u64) -> OperatorGraph {
    let history = spec.vision_tokens() * t.saturating_sub(1);
    inference_graph_with_history(spec, history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{param_count, PresetCatalog};

    #[test]
    fn matmul_closed_form() {
        let op = matmul_op(1, 1, 1, 2, "x");
        assert_eq!((op.flops, op.bytes), (2, 6));
        let op = matmul_op(800, 2048, 2048, 2, "x");
        assert_eq!(op.flops, 6_710_886_400);
        assert_eq!(op.bytes, 2 * (1_638_400 + 4_194_304 + 1_638_400));
        let op = matmul_op(0, 3, 5, 2, "x");
        assert_eq!((op.flops, op.bytes), (0, 30));
    }

    #[test]
    fn attention_closed_form() {
        let op = attention_op(800, 800, 8, 1, 256, 2);
        assert_eq!(op.flops, 5_242_880_000);
        assert_eq!(op.bytes, 7_372_800);
        assert_eq!(attention_op(0, 800, 8, 1, 256, 2).flops, 0);
    }

    #[test]
    fn empty_workloads() {
        let cat = PresetCatalog::builtin();
        let pi0 = cat.model("pi0").unwrap();
        assert!(vit_encode_graph(&pi0.vision_encoder, 0, 256).is_empty());
        let act = pi0.action_expert.as_ref().unwrap();
        assert!(diffusion_graph(act, 800, 18_432, 50, 0, 14).is_empty());
    }

    #[test]
    fn decode_is_prefill_of_one() {
        let cat = PresetCatalog::builtin();
        let gemma = cat.component("gemma-2b").unwrap();
        let a = decode_step_graph(gemma, 0);
        let b = prefill_graph(gemma, 1, 0);
        assert_eq!(a.total_flops(), b.total_flops());
        assert_eq!(a.total_bytes(), b.total_bytes());
        let c = parallel_decode_graph(gemma, 1, 37);
        let d = decode_step_graph(gemma, 37);
        assert_eq!(c, d);
    }

    #[test]
    fn prefill_flops_bracket() {
        let cat = PresetCatalog::builtin();
        let gemma = cat.component("gemma-2b").unwrap();
        let g = prefill_graph(gemma, 800, 0);
        let dense = 2 * 800 * param_count(gemma);
        let attn = 4 * 800 * 800 * gemma.q_width() * gemma.num_layers;
        assert_eq!(g.total_flops(), dense + attn);
        assert!((g.total_flops() as f64 / 3.27e12 - 1.0).abs() < 0.02);
        assert_eq!(g.kv_cache_written_bytes, 800 * 18_432);
    }

    #[test]
    fn diffusion_prefix_bytes_accounted_exactly() {
        let cat = PresetCatalog::builtin();
        let act = cat.component("act-m").unwrap();
        let with = diffusion_graph(act, 801, 18_433, 50, 1, 14);
        let without = diffusion_graph(act, 0, 18_433, 50, 1, 14);
        assert_eq!(with.total_bytes() - without.total_bytes(), 801 * 18_433);
    }

    #[test]
    fn long_context_first_step_is_baseline() {
        let cat = PresetCatalog::builtin();
        let pi0 = cat.model("pi0").unwrap();
        assert_eq!(long_context_step_graphs(pi0, 1), inference_graph(pi0));
    }

    #[test]
    fn phase_split_partitions_graph() {
        let cat = PresetCatalog::builtin();
        let g = inference_graph(cat.model("pi0").unwrap());
        let sum: u64 = Phase::ALL.iter().map(|&p| g.phase(p).total_flops()).sum();
        assert_eq!(sum, g.total_flops());
    }
}
