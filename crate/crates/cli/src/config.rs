//! Experiment configuration: one JSON document per run. Durations carry a
//! `_us` or `_s` suffix and rates an `_mbps` suffix; every omitted key takes
//! its test-bench default.

use anyhow::{bail, ensure, Context, Result};
use mcwlan_core::multi_channel::UnbiasedPolicy;
use mcwlan_core::params::{ChannelSpec, CollisionModel, SystemParams, MBPS, US};
use mcwlan_core::simulator::{NodeConfig, PolicySpec, SimConfig};
use mcwlan_core::single_channel::{ic_grid, InitialCondition, RhoHatMode, SolverOptions};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub w: u32,
    pub m: u32,
    pub sigma_us: f64,
    pub difs_us: f64,
    pub sifs_us: f64,
    pub ack_us: f64,
    pub header_us: f64,
    pub prop_delay_us: f64,
    pub payload_bits: f64,
    pub collision_model: CollisionModel,
}

impl Default for SystemSection {
    fn default() -> Self {
        let p = SystemParams::table_one();
        SystemSection {
            w: p.w,
            m: p.m,
            sigma_us: p.sigma / US,
            difs_us: p.difs / US,
            sifs_us: p.sifs / US,
            ack_us: p.ack_time / US,
            header_us: p.header_time / US,
            prop_delay_us: p.prop_delay / US,
            payload_bits: p.payload_bits,
            collision_model: p.collision_model,
        }
    }
}

impl SystemSection {
    pub fn params(&self) -> SystemParams {
        SystemParams {
            w: self.w,
            m: self.m,
            sigma: self.sigma_us * US,
            difs: self.difs_us * US,
            sifs: self.sifs_us * US,
            ack_time: self.ack_us * US,
            header_time: self.header_us * US,
            prop_delay: self.prop_delay_us * US,
            payload_bits: self.payload_bits,
            collision_model: self.collision_model,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcName {
    Zero,
    NearOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    pub rho_hat: RhoHatMode,
    pub ics: Vec<IcName>,
    /// Extra uniform starts `τ₀ = ρ₀ = j/(k+1)`, `j = 1..=k`.
    pub ic_grid: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = SolverOptions::default();
        SolverSection {
            damping: o.damping,
            tolerance: o.tolerance,
            max_iterations: o.max_iterations,
            rho_hat: o.rho_hat,
            ics: vec![IcName::Zero, IcName::NearOne],
            ic_grid: 0,
        }
    }
}

impl SolverSection {
    pub fn options(&self) -> SolverOptions {
        SolverOptions { damping: self.damping, tolerance: self.tolerance, max_iterations: self.max_iterations, rho_hat: self.rho_hat }
    }

    pub fn initial_conditions(&self, n: usize) -> Vec<InitialCondition> {
        let mut out: Vec<InitialCondition> = self
            .ics
            .iter()
            .map(|ic| match ic {
                IcName::Zero => InitialCondition::zero(n),
                IcName::NearOne => InitialCondition::near_one(n),
            })
            .collect();
        if self.ic_grid > 0 {
            out.extend(ic_grid(n, self.ic_grid));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceSection {
    pub sweep_axis: usize,
    /// Defaults to node 1 when there are at least two nodes.
    pub free_axis: Option<usize>,
    pub free_points: usize,
    /// Upper end of the free grid; defaults to the free node's own limit.
    pub free_max_mbps: Option<f64>,
    pub step_mbps: f64,
    pub max_rate_mbps: f64,
    pub refine_levels: u32,
}

impl Default for TraceSection {
    fn default() -> Self {
        TraceSection {
            sweep_axis: 0,
            free_axis: None,
            free_points: 11,
            free_max_mbps: None,
            step_mbps: 0.1,
            max_rate_mbps: 20.0,
            refine_levels: mcwlan_core::frontier::REFINE_LEVELS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiModel {
    Exact,
    Tilde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultichannelSection {
    /// Occupancy distribution over channels; defaults to equal occupancy.
    pub q: Option<Vec<f64>>,
    pub model: MultiModel,
}

impl Default for MultichannelSection {
    fn default() -> Self {
        MultichannelSection { q: None, model: MultiModel::Exact }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub lambda_mbps: f64,
    pub policy: PolicySpec,
    pub initial_channel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub t_f_s: f64,
    pub seed: u64,
    pub replications: usize,
    pub alpha: f64,
    pub sample_interval_s: f64,
    pub record_series: bool,
    /// Policy given to nodes not listed in `nodes`.
    pub default_policy: PolicySpec,
    /// Defaults to one node per `lambda_mbps` entry, spread round-robin over channels.
    pub nodes: Option<Vec<NodeEntry>>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            t_f_s: 10.0,
            seed: 1,
            replications: 5,
            alpha: mcwlan_core::simulator::DEFAULT_ALPHA,
            sample_interval_s: mcwlan_core::simulator::DEFAULT_SAMPLE_INTERVAL,
            record_series: false,
            default_policy: PolicySpec::fixed(),
            nodes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub axis: usize,
    pub from_mbps: f64,
    pub to_mbps: f64,
    pub points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { axis: 0, from_mbps: 0.0, to_mbps: 10.0, points: 101 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlohaSection {
    pub users: usize,
    pub wbar: Vec<f64>,
    pub grid: usize,
}

impl Default for AlohaSection {
    fn default() -> Self {
        AlohaSection { users: 2, wbar: vec![1.0, 2.0, 5.0, 10.0, 20.0], grid: mcwlan_core::aloha::DEFAULT_GRID }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    pub channels_mbps: Vec<f64>,
    /// Per-node arrival rates; also the base rates of traced boundaries.
    pub lambda_mbps: Vec<f64>,
    pub solver: SolverSection,
    pub trace: TraceSection,
    pub multichannel: MultichannelSection,
    pub simulation: SimulationSection,
    pub sweep: SweepSection,
    pub aloha: AlohaSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return ExperimentConfig::default().resolved();
        }
        let raw: ExperimentConfig = serde_json::from_str(text).context("invalid configuration")?;
        raw.resolved()
    }

    /// Fills every derived default and checks all bounds. Applying it twice
    /// yields the same configuration.
    pub fn resolved(mut self) -> Result<Self> {
        if self.channels_mbps.is_empty() {
            self.channels_mbps = vec![11.0];
        }
        if self.lambda_mbps.is_empty() {
            self.lambda_mbps = match &self.simulation.nodes {
                Some(nodes) if !nodes.is_empty() => nodes.iter().map(|n| n.lambda_mbps).collect(),
                _ => vec![0.0, 0.0],
            };
        }
        let n = self.lambda_mbps.len();
        if self.trace.free_axis.is_none() && n >= 2 {
            self.trace.free_axis = Some(if self.trace.sweep_axis == 1 { 0 } else { 1 });
        }
        if self.multichannel.q.is_none() {
            let k = self.channels_mbps.len();
            self.multichannel.q = Some(vec![1.0 / k as f64; k]);
        }
        if self.simulation.nodes.is_none() {
            let k = self.channels_mbps.len();
            self.simulation.nodes = Some(
                self.lambda_mbps
                    .iter()
                    .enumerate()
                    .map(|(i, &l)| NodeEntry { lambda_mbps: l, policy: self.simulation.default_policy.clone(), initial_channel: i % k })
                    .collect(),
            );
        }
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<()> {
        let params = self.params();
        params.validate()?;
        for &c in &self.channels_mbps {
            ensure!(c.is_finite() && c > 0.0, "channel rates must be positive, got {c}");
            ChannelSpec::new(&params, c * MBPS)?;
        }
        for &l in &self.lambda_mbps {
            ensure!(l.is_finite() && l >= 0.0, "arrival rates must be finite and non-negative, got {l}");
        }
        self.solver.options().validate()?;
        ensure!(!self.solver.ics.is_empty() || self.solver.ic_grid > 0, "at least one initial condition is required");
        let n = self.lambda_mbps.len();
        let t = &self.trace;
        ensure!(t.sweep_axis < n, "trace.sweep_axis {} is out of range for {n} nodes", t.sweep_axis);
        if let Some(f) = t.free_axis {
            ensure!(f < n && f != t.sweep_axis, "trace.free_axis must be another node");
        }
        ensure!(t.free_points >= 1, "trace.free_points must be at least 1");
        ensure!(t.step_mbps > 0.0 && t.step_mbps.is_finite(), "trace.step_mbps must be positive");
        ensure!(t.max_rate_mbps > 0.0 && t.max_rate_mbps.is_finite(), "trace.max_rate_mbps must be positive");
        if let Some(x) = t.free_max_mbps {
            ensure!(x.is_finite() && x >= 0.0, "trace.free_max_mbps must be non-negative");
        }
        let q = self.multichannel.q.as_ref().expect("resolved");
        ensure!(q.len() == self.channels_mbps.len(), "multichannel.q needs one entry per channel");
        UnbiasedPolicy::new(q.clone())?;
        let s = &self.simulation;
        ensure!(s.replications >= 1, "simulation.replications must be at least 1");
        let nodes = s.nodes.as_ref().expect("resolved");
        ensure!(nodes.len() == n, "simulation.nodes must have one entry per lambda_mbps entry");
        self.sim_config()?.validate()?;
        let sw = &self.sweep;
        ensure!(sw.axis < n, "sweep.axis {} is out of range for {n} nodes", sw.axis);
        ensure!(sw.points >= 1, "sweep.points must be at least 1");
        ensure!(
            sw.from_mbps >= 0.0 && sw.to_mbps >= sw.from_mbps && sw.to_mbps.is_finite(),
            "sweep range must satisfy 0 <= from_mbps <= to_mbps"
        );
        let a = &self.aloha;
        ensure!(a.users >= 1, "aloha.users must be at least 1");
        ensure!(a.grid >= 2, "aloha.grid must be at least 2");
        for &w in &a.wbar {
            ensure!(w.is_finite() && w >= 1.0, "aloha.wbar entries must be at least 1, got {w}");
        }
        if self.output.dir.is_empty() {
            bail!("output.dir must not be empty");
        }
        Ok(())
    }

    pub fn params(&self) -> SystemParams {
        self.system.params()
    }

    pub fn channels(&self) -> Result<Vec<ChannelSpec>> {
        let p = self.params();
        Ok(self.channels_mbps.iter().map(|&c| ChannelSpec::new(&p, c * MBPS)).collect::<mcwlan_core::Result<_>>()?)
    }

    pub fn lambda_bits(&self) -> Vec<f64> {
        self.lambda_mbps.iter().map(|l| l * MBPS).collect()
    }

    pub fn policy(&self) -> Result<UnbiasedPolicy> {
        Ok(UnbiasedPolicy::new(self.multichannel.q.clone().expect("resolved"))?)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let s = &self.simulation;
        let nodes = s
            .nodes
            .as_ref()
            .expect("resolved")
            .iter()
            .map(|e| NodeConfig { lambda: e.lambda_mbps * MBPS, policy: e.policy.clone(), initial_channel: e.initial_channel })
            .collect();
        Ok(SimConfig {
            params: self.params(),
            channels: self.channels()?,
            nodes,
            t_f: s.t_f_s,
            seed: s.seed,
            alpha_threshold: s.alpha,
            sample_interval: s.sample_interval_s,
            record_series: s.record_series,
        })
    }
}
