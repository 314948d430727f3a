//! Command-line interface.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::config::{Registry, RunConfig};
use crate::error::{Error, Result};
use crate::opgraph::Phase;
use crate::reference::{reproduce, TableId};
use crate::report::{Cell, Column, Format, Table};
use crate::scenarios::{async_scenario, dual_system_scenario, long_context_step, sync_scenario, Leg, Placement};
use crate::workload::{param_count, DecodingMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_GOLDEN: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "vla-roofline", version, about = "Roofline latency model for vision-language-action inference")]
struct Cli {
    /// TOML file with presets and `[run]` defaults (flags take precedence)
    #[arg(long, global = true, env = "VLA_ROOFLINE_CONFIG")]
    config: Option<PathBuf>,
    /// Output format
    #[arg(long, global = true, value_enum)]
    format: Option<OutFormat>,
    /// Write output to a file instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutFormat {
    Table,
    Csv,
    Json,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Table => Format::Table,
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate one model on one placement
    Analyze(ScenarioArgs),
    /// Evaluate the cartesian product of one or more axes
    Sweep {
        #[command(flatten)]
        base: ScenarioArgs,
        /// Axis as NAME=V1,V2,... (model, hw, net, chunk, steps, context-steps, decoding, dof, cameras); repeatable, first is outermost
        #[arg(long = "axis", value_name = "NAME=VALUES")]
        axes: Vec<String>,
    },
    /// Recompute a reference table and compare against its reference values
    Reproduce {
        /// T1, T3, T4, T5 (scaling), T6 (long-context), T8, T9, collab, or all
        table: String,
    },
    /// List every addressable preset
    ListPresets,
}

#[derive(Debug, Clone, Default, Args)]
struct ScenarioArgs {
    #[arg(long)]
    model: Option<String>,
    /// Serving accelerator (the server in collaborative mode)
    #[arg(long)]
    hw: Option<String>,
    #[arg(long, value_enum)]
    placement: Option<PlacementKind>,
    /// Access network for server placements
    #[arg(long)]
    net: Option<String>,
    /// Second hop for cloud placements
    #[arg(long)]
    cloud_net: Option<String>,
    /// Robot accelerator in collaborative mode
    #[arg(long)]
    device_hw: Option<String>,
    #[arg(long)]
    chunk: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    /// Long-context timestep (1 = stateless)
    #[arg(long)]
    context_steps: Option<u64>,
    #[arg(long)]
    decoding: Option<String>,
    /// Run as a dual-system pipeline with this VLM rate cap in Hz
    #[arg(long)]
    s2_cap: Option<f64>,
    /// Also report pipelined (asynchronous) throughput
    #[arg(long = "async")]
    async_mode: bool,
    /// Bytes per element for all components
    #[arg(long)]
    precision: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlacementKind {
    OnDevice,
    Edge,
    Cloud,
    Collaborative,
}

impl PlacementKind {
    fn parse(s: &str) -> Result<Self> {
        <Self as ValueEnum>::from_str(s, true).map_err(|_| Error::Config(format!("unknown placement `{s}`")))
    }
}

/// Fully resolved scenario parameters.
#[derive(Debug, Clone)]
struct Settings {
    model: String,
    hw: String,
    placement: PlacementKind,
    net: Option<String>,
    cloud_net: Option<String>,
    device_hw: String,
    chunk: Option<u64>,
    steps: Option<u64>,
    context_steps: Option<u64>,
    decoding: Option<String>,
    dof: Option<u64>,
    cameras: Option<u64>,
    s2_cap: Option<f64>,
    async_mode: bool,
    precision: Option<u8>,
}

impl Settings {
    fn resolve(args: &ScenarioArgs, run: &RunConfig) -> Result<Self> {
        let net = args.net.clone().or_else(|| run.net.clone());
        let cloud_net = args.cloud_net.clone().or_else(|| run.cloud_net.clone());
        let placement = match (args.placement, &run.placement) {
            (Some(p), _) => p,
            (None, Some(p)) => PlacementKind::parse(p)?,
            (None, None) if cloud_net.is_some() => PlacementKind::Cloud,
            (None, None) if net.is_some() => PlacementKind::Edge,
            _ => PlacementKind::OnDevice,
        };
        Ok(Self {
            model: args.model.clone().or_else(|| run.model.clone()).unwrap_or_else(|| "pi0".into()),
            hw: args.hw.clone().or_else(|| run.hw.clone()).unwrap_or_else(|| "b100".into()),
            placement,
            net,
            cloud_net,
            device_hw: args.device_hw.clone().or_else(|| run.device_hw.clone()).unwrap_or_else(|| "thor".into()),
            chunk: args.chunk.or(run.chunk),
            steps: args.steps.or(run.steps),
            context_steps: args.context_steps.or(run.context_steps),
            decoding: args.decoding.clone().or_else(|| run.decoding.clone()),
            dof: None,
            cameras: None,
            s2_cap: args.s2_cap.or(run.s2_cap),
            async_mode: args.async_mode || run.async_mode.unwrap_or(false),
            precision: args.precision.or(run.precision),
        })
    }

    fn set(&mut self, axis: &str, value: &str) -> Result<()> {
        let num = || value.parse::<u64>().map_err(|_| Error::Config(format!("axis {axis}: `{value}` is not a count")));
        match axis {
            "model" => self.model = value.into(),
            "hw" => self.hw = value.into(),
            "net" => self.net = Some(value.into()),
            "chunk" => self.chunk = Some(num()?),
            "steps" => self.steps = Some(num()?),
            "context-steps" | "context_steps" => self.context_steps = Some(num()?),
            "decoding" => self.decoding = Some(value.into()),
            "dof" => self.dof = Some(num()?),
            "cameras" => self.cameras = Some(num()?),
            other => return Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
        Ok(())
    }

    fn placement(&self, reg: &Registry) -> Result<Placement> {
        let hw = reg.hw(&self.hw)?;
        let need_net = || {
            self.net
                .as_deref()
                .ok_or_else(|| Error::Config("this placement needs --net".into()))
                .and_then(|n| reg.net(n))
        };
        Ok(match self.placement {
            PlacementKind::OnDevice => Placement::OnDevice { hw },
            PlacementKind::Edge => Placement::EdgeServer { hw, net: need_net()? },
            PlacementKind::Cloud => Placement::CloudServer {
                hw,
                access_net: need_net()?,
                cloud_net: reg.net(
                    self.cloud_net
                        .as_deref()
                        .ok_or_else(|| Error::Config("cloud placement needs --cloud-net".into()))?,
                )?,
            },
            PlacementKind::Collaborative => Placement::Collaborative {
                device_hw: reg.hw(&self.device_hw)?,
                server_hw: hw,
                net: need_net()?,
            },
        })
    }
}

fn scenario_columns(s: &Settings) -> Vec<Column> {
    let mut cols = vec![
        Column::new("model"),
        Column::new("placement"),
        Column::new("status"),
        Column::with_unit("vision", "ms"),
        Column::with_unit("vlm", "ms"),
        Column::with_unit("action", "ms"),
        Column::with_unit("upload", "ms"),
        Column::with_unit("kv_download", "ms"),
        Column::with_unit("download", "ms"),
        Column::with_unit("e2e", "ms"),
        Column::with_unit("sync", "hz"),
    ];
    if s.async_mode {
        cols.push(Column::with_unit("async", "hz"));
    }
    for p in Phase::ALL {
        cols.push(Column::new(&format!("{}_bound", p.as_str())));
    }
    for p in Phase::ALL {
        cols.push(Column::new(&format!("{}_oi", p.as_str())));
    }
    cols.push(Column::with_unit("footprint", "gb"));
    if s.s2_cap.is_some() {
        cols.extend([
            Column::with_unit("s1", "ms"),
            Column::with_unit("s2", "ms"),
            Column::with_unit("dual_sync", "hz"),
            Column::with_unit("dual_async", "hz"),
            Column::new("dual_speedup"),
        ]);
    }
    cols
}

fn scenario_row(reg: &Registry, s: &Settings) -> Result<Vec<Cell>> {
    let mut spec = reg.model(&s.model)?;
    if let Some(d) = &s.decoding {
        let mode = DecodingMode::parse(d).ok_or_else(|| Error::Config(format!("unknown decoding mode `{d}`")))?;
        spec = if mode == DecodingMode::Diffusion && spec.action_expert.is_none() {
            spec.with_vlm_sized_action_expert()
        } else {
            spec.with_decoding(mode)?
        };
    }
    macro_rules! apply {
        ($($src:ident => $dst:ident),*) => { $( if let Some(v) = s.$src { spec.$dst = v; } )* };
    }
    apply!(chunk => chunk_size, steps => denoise_steps, dof => action_dof, cameras => num_cameras);
    if let Some(p) = s.precision {
        spec = spec.with_precision(p);
    }
    spec.validate()?;
    let placement = s.placement(reg)?;
    let mut r = match s.context_steps {
        Some(t) if t > 1 => long_context_step(&spec, &placement, t)?.result,
        _ => sync_scenario(&spec, &placement)?,
    };
    if s.async_mode {
        r.async_frequency = async_scenario(&spec, &placement)?.async_frequency;
    }
    let ok = r.is_feasible();
    let status = match &r.infeasible {
        None => "ok".to_string(),
        Some(why) => format!("N/A ({why})"),
    };
    let mut row = vec![Cell::text(spec.name.clone()), Cell::text(r.placement.clone()), Cell::text(status)];
    for p in Phase::ALL {
        row.push(Cell::Seconds(r.phase(p)).or_na(ok));
    }
    for l in [Leg::ObservationUpload, Leg::KvDownload, Leg::ActionDownload] {
        row.push(Cell::Seconds(r.leg(l)).or_na(ok));
    }
    row.push(Cell::Seconds(r.e2e_latency).or_na(ok));
    row.push(Cell::Hz(r.sync_frequency).or_na(ok));
    if s.async_mode {
        row.push(r.async_frequency.map_or(Cell::NotApplicable, Cell::Hz).or_na(ok));
    }
    for p in Phase::ALL {
        row.push(r.boundedness.get(&p).map_or(Cell::text("-"), |b| Cell::text(b.as_str())));
    }
    for p in Phase::ALL {
        row.push(r.operator_intensity.get(&p).map_or(Cell::text("-"), |oi| Cell::float(*oi, 1)));
    }
    row.push(Cell::Bytes(r.footprint));
    if let Some(cap) = s.s2_cap {
        let d = dual_system_scenario(&spec, &placement, cap)?;
        let dual_ok = d.infeasible.is_none();
        row.extend([
            Cell::Seconds(d.t_s1).or_na(dual_ok),
            Cell::Seconds(d.t_s2).or_na(dual_ok),
            Cell::Hz(d.sync_frequency).or_na(dual_ok),
            Cell::Hz(d.async_frequency).or_na(dual_ok),
            Cell::Ratio(d.speedup()).or_na(dual_ok),
        ]);
        if d.s1_below_s2 {
            if let Cell::Text(t) = &mut row[2] {
                t.push_str(" (S1 slower than S2 cap)");
            }
        }
    }
    Ok(row)
}

fn parse_axes(axes: &[String]) -> Result<Vec<(String, Vec<String>)>> {
    axes.iter()
        .map(|a| {
            let (name, values) = a
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("axis `{a}` must look like NAME=V1,V2")))?;
            let values: Vec<String> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).map(String::from).collect();
            if values.is_empty() {
                return Err(Error::Config(format!("axis `{name}` has no values")));
            }
            Ok((name.trim().to_string(), values))
        })
        .collect()
}

/// Cartesian product in lexicographic order, first axis outermost.
fn grid(base: &Settings, axes: &[(String, Vec<String>)]) -> Result<Vec<Settings>> {
    let mut out = vec![base.clone()];
    for (name, values) in axes {
        let mut next = Vec::with_capacity(out.len() * values.len());
        for s in &out {
            for v in values {
                let mut s = s.clone();
                s.set(name, v)?;
                next.push(s);
            }
        }
        out = next;
    }
    Ok(out)
}

fn list_presets(reg: &Registry) -> Vec<Table> {
    let mut comps = Table::new(
        "components",
        vec![
            Column::new("id"),
            Column::new("layers"),
            Column::new("hidden"),
            Column::new("intermediate"),
            Column::new("q/kv heads"),
            Column::new("head_dim"),
            Column::new("params_m"),
        ],
    );
    for (id, c) in &reg.catalog.components {
        comps.push(vec![
            Cell::text(id.clone()),
            Cell::Int(c.num_layers),
            Cell::Int(c.hidden_size),
            Cell::Int(c.intermediate_size),
            Cell::text(format!("{}/{}", c.num_q_heads, c.num_kv_heads)),
            Cell::Int(c.head_dim),
            Cell::float(param_count(c) as f64 / 1e6, 2),
        ]);
    }
    let mut models = Table::new(
        "models",
        vec![
            Column::new("id"),
            Column::new("vision"),
            Column::new("vlm"),
            Column::new("action"),
            Column::new("decoding"),
            Column::new("params_b"),
        ],
    );
    for (id, m) in &reg.catalog.models {
        models.push(vec![
            Cell::text(id.clone()),
            Cell::text(m.vision_encoder.name.clone()),
            Cell::text(m.vlm.name.clone()),
            Cell::text(m.action_expert.as_ref().map_or("-".to_string(), |a| a.name.clone())),
            Cell::text(m.decoding_mode.as_str()),
            Cell::float(m.total_params() as f64 / 1e9, 2),
        ]);
    }
    let mut hw = Table::new(
        "hardware",
        vec![
            Column::new("id"),
            Column::new("bf16_tflops"),
            Column::new("hbm_bw_gbs"),
            Column::with_unit("memory", "gb"),
            Column::new("balance_oi"),
        ],
    );
    for (id, h) in &reg.hardware {
        hw.push(vec![
            Cell::text(id.clone()),
            Cell::float(h.peak_flops.get(&2).copied().unwrap_or(0.0) / 1e12, 0),
            Cell::float(h.mem_bandwidth / 1e9, 0),
            Cell::Bytes(h.mem_capacity),
            Cell::float(h.balance_oi(), 1),
        ]);
    }
    let mut nets = Table::new(
        "networks",
        vec![
            Column::new("id"),
            Column::new("upload_mbps"),
            Column::new("download_mbps"),
            Column::new("base_latency_ms"),
            Column::new("efficiency"),
        ],
    );
    for (id, n) in &reg.networks {
        nets.push(vec![
            Cell::text(id.clone()),
            Cell::float(n.upload_bw / 1e6, 0),
            Cell::float(n.download_bw / 1e6, 0),
            Cell::float(n.base_latency * 1e3, 2),
            Cell::float(n.efficiency, 2),
        ]);
    }
    vec![comps, models, hw, nets]
}

fn render_many(tables: &[Table], format: Format) -> Result<String> {
    match format {
        Format::Json => {
            let docs = tables
                .iter()
                .map(|t| t.to_json().and_then(|s| serde_json::from_str(&s).map_err(|e| Error::Io(e.to_string()))))
                .collect::<Result<Vec<serde_json::Value>>>()?;
            serde_json::to_string_pretty(&docs).map_err(|e| Error::Io(e.to_string()))
        }
        _ => {
            let parts = tables.iter().map(|t| t.render(format)).collect::<Result<Vec<_>>>()?;
            Ok(parts.join("\n"))
        }
    }
}

fn execute(cli: Cli) -> Result<(String, i32, Option<PathBuf>)> {
    let reg = Registry::load(cli.config.as_deref())?;
    let out = cli.out.clone().or_else(|| reg.run.out.clone());
    let (text, code) = dispatch(cli, &reg)?;
    Ok((text, code, out))
}

fn dispatch(cli: Cli, reg: &Registry) -> Result<(String, i32)> {
    let format = match (cli.format, &reg.run.format) {
        (Some(f), _) => f.into(),
        (None, Some(f)) => f.parse()?,
        (None, None) => Format::Table,
    };
    match cli.command {
        Command::Analyze(args) => {
            let s = Settings::resolve(&args, &reg.run)?;
            let mut t = Table::new("", scenario_columns(&s));
            t.push(scenario_row(reg, &s)?);
            Ok((t.render(format)?, EXIT_OK))
        }
        Command::Sweep { base, axes } => {
            let s = Settings::resolve(&base, &reg.run)?;
            let cells = grid(&s, &parse_axes(&axes)?)?;
            let rows = cells.par_iter().map(|c| scenario_row(reg, c)).collect::<Result<Vec<_>>>()?;
            let mut t = Table::new("", scenario_columns(&s));
            t.rows = rows;
            Ok((t.render(format)?, EXIT_OK))
        }
        Command::Reproduce { table } => {
            let ids = if table.eq_ignore_ascii_case("all") {
                TableId::ALL.to_vec()
            } else {
                vec![table.parse::<TableId>()?]
            };
            let reports = ids.par_iter().map(|&id| reproduce(id, reg)).collect::<Result<Vec<_>>>()?;
            let passed = reports.iter().all(|r| r.passed());
            let text = match format {
                Format::Json => {
                    let docs = reports
                        .iter()
                        .map(|r| r.render(Format::Json).and_then(|s| serde_json::from_str(&s).map_err(|e| Error::Io(e.to_string()))))
                        .collect::<Result<Vec<serde_json::Value>>>()?;
                    serde_json::to_string_pretty(&docs).map_err(|e| Error::Io(e.to_string()))?
                }
                f => reports.iter().map(|r| r.render(f)).collect::<Result<Vec<_>>>()?.join("\n"),
            };
            Ok((text, if passed { EXIT_OK } else { EXIT_GOLDEN }))
        }
        Command::ListPresets => Ok((render_many(&list_presets(reg), format)?, EXIT_OK)),
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return EXIT_USAGE;
            }
            let _ = write!(stdout, "{e}");
            return EXIT_OK;
        }
    };
    match execute(cli) {
        Ok((text, code, out_path)) => {
            let text = if text.ends_with('\n') { text } else { text + "\n" };
            let written = match &out_path {
                Some(p) => std::fs::write(p, &text).map_err(Error::from),
                None => stdout.write_all(text.as_bytes()).map_err(Error::from),
            };
            match written {
                Ok(()) => code,
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    EXIT_USAGE
                }
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_USAGE
        }
    }
}
