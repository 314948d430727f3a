//! Deployment scenarios built on the graph, roofline and network models.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::netmodel::{action_payload, kv_payload, observation_payload, path_time, NetworkConfig, NetworkPath};
use crate::opgraph::{diffusion_graph, inference_graph_with_history, vit_encode_graph, prefill_graph, OperatorGraph, Phase};
use crate::roofline::{
    boundedness, graph_oi, graph_time, kv_footprint, memory_footprint, AcceleratorConfig, Bound, ContextMode,
};
use crate::workload::{kv_bytes_per_token, scaled_family, weight_bytes, DecodingMode, PresetCatalog, VlaModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Placement {
    OnDevice {
        hw: AcceleratorConfig,
    },
    EdgeServer {
        hw: AcceleratorConfig,
        net: NetworkConfig,
    },
    CloudServer {
        hw: AcceleratorConfig,
        access_net: NetworkConfig,
        cloud_net: NetworkConfig,
    },
    /// Vision and VLM on the server, action expert on the robot.
    Collaborative {
        device_hw: AcceleratorConfig,
        server_hw: AcceleratorConfig,
        net: NetworkConfig,
    },
}

impl Placement {
    pub fn label(&self) -> String {
        match self {
            Placement::OnDevice { hw } => format!("{} on-device", hw.name),
            Placement::EdgeServer { hw, net } => format!("{} via {}", hw.name, net.name),
            Placement::CloudServer { hw, access_net, cloud_net } => {
                format!("{} via {}+{}", hw.name, access_net.name, cloud_net.name)
            }
            Placement::Collaborative { device_hw, server_hw, net } => {
                format!("{} + {} via {}", device_hw.name, server_hw.name, net.name)
            }
        }
    }

    /// Route between robot and server, if any.
    pub fn path(&self) -> Result<Option<NetworkPath>> {
        Ok(match self {
            Placement::OnDevice { .. } => None,
            Placement::EdgeServer { net, .. } | Placement::Collaborative { net, .. } => {
                Some(NetworkPath::single(net.clone())?)
            }
            Placement::CloudServer { access_net, cloud_net, .. } => {
                Some(NetworkPath::new(vec![access_net.clone(), cloud_net.clone()])?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Leg {
    ObservationUpload,
    KvDownload,
    ActionDownload,
}

impl Leg {
    pub fn as_str(self) -> &'static str {
        match self {
            Leg::ObservationUpload => "upload",
            Leg::KvDownload => "kv_download",
            Leg::ActionDownload => "download",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Infeasibility {
    Capacity { hw: String, required: u64, available: u64 },
    /// The capped VLM rate alone saturates the accelerator.
    S2Budget { s2_cap: f64, t_s2: f64 },
}

impl std::fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Infeasibility::Capacity { hw, required, available } => write!(
                f,
                "needs {:.1} GB, {} has {:.1} GB",
                *required as f64 / crate::roofline::GIB,
                hw,
                *available as f64 / crate::roofline::GIB
            ),
            Infeasibility::S2Budget { s2_cap, t_s2 } => {
                write!(f, "S2 at {s2_cap} Hz x {:.2} ms leaves no time for S1", t_s2 * 1e3)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub model: String,
    pub placement: String,
    pub phase_latencies: BTreeMap<Phase, f64>,
    pub network_latencies: BTreeMap<Leg, f64>,
    pub e2e_latency: f64,
    pub sync_frequency: f64,
    pub async_frequency: Option<f64>,
    pub boundedness: BTreeMap<Phase, Bound>,
    pub operator_intensity: BTreeMap<Phase, f64>,
    pub footprint: u64,
    pub execution_horizon: Option<u64>,
    /// Set when the workload cannot run; timings are still the roofline values.
    pub infeasible: Option<Infeasibility>,
}

impl ScenarioResult {
    pub fn is_feasible(&self) -> bool {
        self.infeasible.is_none()
    }

    pub fn phase(&self, phase: Phase) -> f64 {
        self.phase_latencies.get(&phase).copied().unwrap_or(0.0)
    }

    pub fn leg(&self, leg: Leg) -> f64 {
        self.network_latencies.get(&leg).copied().unwrap_or(0.0)
    }

    pub fn compute_latency(&self) -> f64 {
        self.phase_latencies.values().sum()
    }

    pub fn network_latency(&self) -> f64 {
        self.network_latencies.values().sum()
    }

    pub fn async_speedup(&self) -> Option<f64> {
        self.async_frequency.map(|f| f / self.sync_frequency)
    }

    /// Executed actions per second when `execution_horizon` actions run per inference.
    pub fn actions_per_second(&self) -> Option<f64> {
        self.execution_horizon.map(|h| self.sync_frequency * h as f64)
    }
}

fn phase_precision(spec: &VlaModelSpec, phase: Phase) -> u8 {
    match (phase, &spec.action_expert) {
        (Phase::Vision, _) => spec.vision_encoder.precision_bytes,
        (Phase::Action, Some(a)) => a.precision_bytes,
        _ => spec.vlm.precision_bytes,
    }
}

struct PhaseEval {
    latency: BTreeMap<Phase, f64>,
    bound: BTreeMap<Phase, Bound>,
    oi: BTreeMap<Phase, f64>,
}

fn evaluate_phases(spec: &VlaModelSpec, graph: &OperatorGraph, hw: &AcceleratorConfig, phases: &[Phase]) -> Result<PhaseEval> {
    let mut ev = PhaseEval {
        latency: BTreeMap::new(),
        bound: BTreeMap::new(),
        oi: BTreeMap::new(),
    };
    for &phase in phases {
        let g = graph.phase(phase);
        let t = graph_time(&g, hw, phase_precision(spec, phase))?;
        ev.latency.insert(phase, t.total);
        if g.total_bytes() > 0 {
            ev.bound.insert(phase, boundedness(&g, hw)?);
            ev.oi.insert(phase, graph_oi(&g)?);
        }
    }
    Ok(ev)
}

fn capacity_check(hw: &AcceleratorConfig, required: u64) -> Option<Infeasibility> {
    (required > hw.mem_capacity).then(|| Infeasibility::Capacity {
        hw: hw.name.clone(),
        required,
        available: hw.mem_capacity,
    })
}

fn run(spec: &VlaModelSpec, placement: &Placement, history_tokens: u64, mode: ContextMode) -> Result<ScenarioResult> {
    spec.validate()?;
    let graph = inference_graph_with_history(spec, history_tokens);
    let mut legs = BTreeMap::new();
    let (eval, footprint, infeasible) = match placement {
        Placement::Collaborative { device_hw, server_hw, net } => {
            let expert = match (&spec.action_expert, spec.decoding_mode) {
                (Some(e), DecodingMode::Diffusion) => e,
                _ => {
                    return Err(Error::Placement(
                        "collaborative inference needs a diffusion action expert on the device".into(),
                    ))
                }
            };
            let path = NetworkPath::single(net.clone())?;
            let context = history_tokens + spec.prefix_tokens();
            let mut ev = evaluate_phases(spec, &graph, server_hw, &[Phase::Vision, Phase::Vlm])?;
            let device = evaluate_phases(spec, &graph, device_hw, &[Phase::Action])?;
            ev.latency.extend(device.latency);
            ev.bound.extend(device.bound);
            ev.oi.extend(device.oi);
            legs.insert(
                Leg::ObservationUpload,
                path_time(observation_payload(spec, spec.observation_encoding), &path),
            );
            legs.insert(Leg::KvDownload, path_time(kv_payload(context, &spec.vlm), &path));
            let kv = kv_footprint(spec, mode);
            let server_need = weight_bytes(&spec.vision_encoder) + weight_bytes(&spec.vlm) + kv;
            let device_need = weight_bytes(expert) + context * kv_bytes_per_token(&spec.vlm);
            let infeasible =
                capacity_check(server_hw, server_need).or_else(|| capacity_check(device_hw, device_need));
            (ev, server_need + device_need, infeasible)
        }
        Placement::OnDevice { hw } | Placement::EdgeServer { hw, .. } | Placement::CloudServer { hw, .. } => {
            let ev = evaluate_phases(spec, &graph, hw, &Phase::ALL)?;
            if let Some(path) = placement.path()? {
                legs.insert(
                    Leg::ObservationUpload,
                    path_time(observation_payload(spec, spec.observation_encoding), &path),
                );
                legs.insert(Leg::ActionDownload, path_time(action_payload(spec), &path));
            }
            let need = memory_footprint(spec, mode);
            (ev, need, capacity_check(hw, need))
        }
    };
    let e2e = ev_sum(&eval.latency) + ev_sum(&legs);
    Ok(ScenarioResult {
        model: spec.name.clone(),
        placement: placement.label(),
        phase_latencies: eval.latency,
        network_latencies: legs,
        e2e_latency: e2e,
        sync_frequency: 1.0 / e2e,
        async_frequency: None,
        boundedness: eval.bound,
        operator_intensity: eval.oi,
        footprint,
        execution_horizon: spec.execution_horizon,
        infeasible,
    })
}

fn ev_sum<K>(m: &BTreeMap<K, f64>) -> f64 {
    m.values().sum()
}

/// Sequential upload, inference and download (or all on the device).
pub fn sync_scenario(spec: &VlaModelSpec, placement: &Placement) -> Result<ScenarioResult> {
    run(spec, placement, 0, ContextMode::Stateless)
}

/// Pipelined transfers and compute: throughput is set by the slowest stage.
pub fn async_scenario(spec: &VlaModelSpec, placement: &Placement) -> Result<ScenarioResult> {
    let path = match placement {
        Placement::EdgeServer { .. } | Placement::CloudServer { .. } => placement.path()?.expect("server path"),
        _ => {
            return Err(Error::Placement(
                "asynchronous throughput needs an edge or cloud server placement".into(),
            ))
        }
    };
    let mut r = sync_scenario(spec, placement)?;
    let obs = observation_payload(spec, spec.observation_encoding);
    let act = action_payload(spec);
    let gpu = 1.0 / r.compute_latency();
    let f = path.hops().iter().fold(gpu, |f, hop| {
        f.min(hop.throughput(obs.bytes, obs.direction))
            .min(hop.throughput(act.bytes, act.direction))
    });
    r.async_frequency = Some(f);
    Ok(r)
}

/// VLM on the server, KV cache shipped to the device, diffusion on the device.
pub fn collaborative_scenario(spec: &VlaModelSpec, placement: &Placement) -> Result<ScenarioResult> {
    match placement {
        Placement::Collaborative { .. } => sync_scenario(spec, placement),
        _ => Err(Error::Placement("collaborative scenario needs a collaborative placement".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualSystemResult {
    pub model: String,
    pub placement: String,
    pub t_s1: f64,
    pub t_s2: f64,
    pub s2_cap: f64,
    pub sync_frequency: f64,
    pub async_frequency: f64,
    /// System 1 cannot keep up with the System 2 cap.
    pub s1_below_s2: bool,
    pub infeasible: Option<Infeasibility>,
}

impl DualSystemResult {
    pub fn speedup(&self) -> f64 {
        self.async_frequency / self.sync_frequency
    }
}

/// System 1 (upload, vision, action, download) runs in the time the capped
/// System 2 (VLM) leaves free: `f1 = (1 - cap * T_s2) / T_s1`.
pub fn dual_system_scenario(spec: &VlaModelSpec, placement: &Placement, s2_cap: f64) -> Result<DualSystemResult> {
    if matches!(placement, Placement::Collaborative { .. }) {
        return Err(Error::Placement("dual-system pipeline runs on a single accelerator".into()));
    }
    if spec.decoding_mode != DecodingMode::Diffusion {
        return Err(Error::Placement("dual-system pipeline needs a diffusion action expert".into()));
    }
    if !(s2_cap > 0.0 && s2_cap.is_finite()) {
        return Err(Error::Config(format!("s2 cap must be a positive rate, got {s2_cap}")));
    }
    let r = sync_scenario(spec, placement)?;
    let t_s1 = r.phase(Phase::Vision) + r.phase(Phase::Action) + r.network_latency();
    let t_s2 = r.phase(Phase::Vlm);
    let budget = 1.0 - s2_cap * t_s2;
    let async_frequency = budget / t_s1;
    let infeasible = r.infeasible.clone().or_else(|| {
        (budget <= 0.0).then_some(Infeasibility::S2Budget { s2_cap, t_s2 })
    });
    Ok(DualSystemResult {
        model: r.model,
        placement: r.placement,
        t_s1,
        t_s2,
        s2_cap,
        sync_frequency: 1.0 / (t_s1 + t_s2),
        async_frequency,
        s1_below_s2: infeasible.is_none() && async_frequency < s2_cap,
        infeasible,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LongContextRow {
    pub timesteps: u64,
    pub kv_bytes: u64,
    pub result: ScenarioResult,
}

/// Inference at timestep `t` with all earlier vision tokens retained in the VLM cache.
pub fn long_context_step(spec: &VlaModelSpec, placement: &Placement, t: u64) -> Result<LongContextRow> {
    if t == 0 {
        return Err(Error::Config("long-context timesteps start at 1".into()));
    }
    let history = spec.vision_tokens() * (t - 1);
    let mode = ContextMode::LongContext(t);
    Ok(LongContextRow {
        timesteps: t,
        kv_bytes: kv_footprint(spec, mode),
        result: run(spec, placement, history, mode)?,
    })
}

pub fn long_context_sweep(spec: &VlaModelSpec, placement: &Placement, timesteps: &[u64]) -> Result<Vec<LongContextRow>> {
    timesteps
        .par_iter()
        .map(|&t| long_context_step(spec, placement, t))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodingVariant {
    Diffusion,
    /// Action expert with the VLM's own architecture.
    DiffusionLarge,
    Autoregressive,
    AutoregressiveParallel,
}

impl DecodingVariant {
    pub const ALL: [DecodingVariant; 4] = [
        DecodingVariant::Diffusion,
        DecodingVariant::DiffusionLarge,
        DecodingVariant::Autoregressive,
        DecodingVariant::AutoregressiveParallel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DecodingVariant::Diffusion => "diffusion",
            DecodingVariant::DiffusionLarge => "diffusion_large",
            DecodingVariant::Autoregressive => "autoregressive",
            DecodingVariant::AutoregressiveParallel => "autoregressive_parallel",
        }
    }

    pub fn apply(self, spec: &VlaModelSpec) -> Result<VlaModelSpec> {
        match self {
            DecodingVariant::Diffusion => spec.clone().with_decoding(DecodingMode::Diffusion),
            DecodingVariant::DiffusionLarge => Ok(spec.clone().with_vlm_sized_action_expert()),
            DecodingVariant::Autoregressive => spec.clone().with_decoding(DecodingMode::Autoregressive),
            DecodingVariant::AutoregressiveParallel => {
                spec.clone().with_decoding(DecodingMode::AutoregressiveParallel)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodingRow {
    pub chunk_size: u64,
    pub action_dof: u64,
    pub variant: DecodingVariant,
    pub action_latency: f64,
    pub e2e_latency: f64,
    pub action_oi: f64,
}

pub fn decoding_comparison(
    spec: &VlaModelSpec,
    hw: &AcceleratorConfig,
    chunk_sizes: &[u64],
    dofs: &[u64],
) -> Result<Vec<DecodingRow>> {
    let grid: Vec<_> = chunk_sizes
        .iter()
        .flat_map(|&c| dofs.iter().flat_map(move |&d| DecodingVariant::ALL.map(|v| (c, d, v))))
        .collect();
    let placement = Placement::OnDevice { hw: hw.clone() };
    grid.par_iter()
        .map(|&(chunk_size, action_dof, variant)| {
            let mut s = variant.apply(spec)?;
            s.chunk_size = chunk_size;
            s.action_dof = action_dof;
            s.execution_horizon = None;
            let r = sync_scenario(&s, &placement)?;
            Ok(DecodingRow {
                chunk_size,
                action_dof,
                variant,
                action_latency: r.phase(Phase::Action),
                e2e_latency: r.e2e_latency,
                action_oi: r.operator_intensity.get(&Phase::Action).copied().unwrap_or(0.0),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DenoiseChunkRow {
    pub denoise_steps: u64,
    pub chunk_size: u64,
    pub action_latency: f64,
    pub e2e_latency: f64,
}

pub fn denoise_chunk_sweep(
    spec: &VlaModelSpec,
    hw: &AcceleratorConfig,
    steps: &[u64],
    chunks: &[u64],
) -> Result<Vec<DenoiseChunkRow>> {
    let expert = spec
        .action_expert
        .as_ref()
        .ok_or_else(|| Error::InvalidSpec("denoising sweep needs an action expert".into()))?;
    spec.validate()?;
    let precision = expert.precision_bytes;
    let front = vit_encode_graph(&spec.vision_encoder, spec.num_cameras, spec.tokens_per_image)
        .concat(prefill_graph(&spec.vlm, spec.prefix_tokens(), 0));
    let front_time = {
        let v = front.phase(Phase::Vision);
        let m = front.phase(Phase::Vlm);
        graph_time(&v, hw, spec.vision_encoder.precision_bytes)?.total
            + graph_time(&m, hw, spec.vlm.precision_bytes)?.total
    };
    let grid: Vec<_> = steps.iter().flat_map(|&s| chunks.iter().map(move |&c| (s, c))).collect();
    let vlm_kv = kv_bytes_per_token(&spec.vlm);
    grid.par_iter()
        .map(|&(denoise_steps, chunk_size)| {
            let g = diffusion_graph(expert, spec.prefix_tokens(), vlm_kv, chunk_size, denoise_steps, spec.action_dof);
            let action = graph_time(&g, hw, precision)?.total;
            Ok(DenoiseChunkRow {
                denoise_steps,
                chunk_size,
                action_latency: action,
                e2e_latency: front_time + action,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub total_params: u64,
    pub result: ScenarioResult,
}

/// Every scaled family member on every accelerator, on-device and stateless.
pub fn scaling_sweep(catalog: &PresetCatalog, hardware: &[AcceleratorConfig]) -> Result<Vec<ScalingRow>> {
    let family = scaled_family(catalog)?;
    let grid: Vec<_> = family.iter().flat_map(|m| hardware.iter().map(move |h| (m, h))).collect();
    grid.par_iter()
        .map(|&(spec, hw)| {
            let result = sync_scenario(spec, &Placement::OnDevice { hw: hw.clone() })?;
            Ok(ScalingRow {
                total_params: spec.total_params(),
                result,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pi0() -> VlaModelSpec {
        PresetCatalog::builtin().model("pi0").unwrap().clone()
    }

    fn hw(name: &str) -> AcceleratorConfig {
        AcceleratorConfig::preset(name).unwrap()
    }

    fn net(name: &str) -> NetworkConfig {
        NetworkConfig::preset(name).unwrap()
    }

    #[test]
    fn on_device_has_no_legs() {
        let r = sync_scenario(&pi0(), &Placement::OnDevice { hw: hw("thor") }).unwrap();
        assert!(r.network_latencies.is_empty());
        assert!((r.e2e_latency - r.compute_latency()).abs() < 1e-15);
        assert!((r.sync_frequency * r.e2e_latency - 1.0).abs() < 1e-12);
        assert!(r.is_feasible());
    }

    #[test]
    fn edge_adds_upload_and_download() {
        let p = Placement::EdgeServer { hw: hw("b100"), net: net("4g") };
        let r = sync_scenario(&pi0(), &p).unwrap();
        assert_eq!(r.network_latencies.len(), 2);
        assert!((r.e2e_latency * 1e3 / 73.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn async_requires_server() {
        let err = async_scenario(&pi0(), &Placement::OnDevice { hw: hw("b100") });
        assert!(matches!(err, Err(Error::Placement(_))));
    }

    #[test]
    fn async_network_bound_on_5g() {
        let p = Placement::EdgeServer { hw: hw("b100"), net: net("5g") };
        let r = async_scenario(&pi0(), &p).unwrap();
        let f = r.async_frequency.unwrap();
        assert!((f - 80e6 / (8.0 * 46_500.0)).abs() < 1e-9);
    }

    #[test]
    fn collaborative_requires_diffusion() {
        let ar = pi0().with_decoding(DecodingMode::Autoregressive).unwrap();
        let p = Placement::Collaborative { device_hw: hw("thor"), server_hw: hw("b100"), net: net("eth10g") };
        assert!(collaborative_scenario(&ar, &p).is_err());
        let r = collaborative_scenario(&pi0(), &p).unwrap();
        assert!(r.leg(Leg::KvDownload) > 0.0);
        assert_eq!(r.leg(Leg::ActionDownload), 0.0);
    }

    #[test]
    fn dual_system_budget() {
        let d = dual_system_scenario(&pi0(), &Placement::OnDevice { hw: hw("thor") }, 5.0).unwrap();
        assert!((d.async_frequency - (1.0 - 5.0 * d.t_s2) / d.t_s1).abs() < 1e-12);
        assert!(!d.s1_below_s2);
        let d = dual_system_scenario(&pi0(), &Placement::OnDevice { hw: hw("thor") }, 100.0).unwrap();
        assert!(matches!(d.infeasible, Some(Infeasibility::S2Budget { .. })));
    }

    #[test]
    fn dual_system_flags_slow_s1() {
        // cap just under the budget limit: S1 gets almost nothing
        let p = Placement::OnDevice { hw: hw("thor") };
        let base = dual_system_scenario(&pi0(), &p, 1.0).unwrap();
        let cap = 0.999 / base.t_s2;
        let d = dual_system_scenario(&pi0(), &p, cap).unwrap();
        assert!(d.infeasible.is_none());
        assert!(d.s1_below_s2);
    }

    #[test]
    fn infeasible_is_a_value() {
        let cat = PresetCatalog::builtin();
        let xl = cat.model("pi0-xl").unwrap();
        let r = sync_scenario(xl, &Placement::OnDevice { hw: hw("rtx4090") }).unwrap();
        assert!(matches!(r.infeasible, Some(Infeasibility::Capacity { .. })));
    }

    #[test]
    fn execution_horizon_multiplier() {
        let mut s = pi0();
        s.execution_horizon = Some(25);
        let r = sync_scenario(&s, &Placement::OnDevice { hw: hw("b100") }).unwrap();
        assert!((r.actions_per_second().unwrap() - 25.0 * r.sync_frequency).abs() < 1e-9);
    }

    #[test]
    fn long_context_zero_rejected() {
        assert!(long_context_step(&pi0(), &Placement::OnDevice { hw: hw("b100") }, 0).is_err());
    }

    #[test]
    fn sweeps_keep_grid_order() {
        let rows = denoise_chunk_sweep(&pi0(), &hw("b100"), &[1, 10], &[5, 50]).unwrap();
        let keys: Vec<_> = rows.iter().map(|r| (r.denoise_steps, r.chunk_size)).collect();
        assert_eq!(keys, vec![(1, 5), (1, 50), (10, 5), (10, 50)]);
        let zero = denoise_chunk_sweep(&pi0(), &hw("b100"), &[0], &[50]).unwrap();
        assert_eq!(zero[0].action_latency, 0.0);
    }
}
