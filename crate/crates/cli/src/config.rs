//! Scenario configuration: one JSON document drives every subcommand.
//! Unknown keys are rejected and every error names the offending field.

use std::fs;
use std::path::Path;

use csma_sleep::adaptation::{
    AdaptationConfig, ArrivalWindow, DynamicPdtParams, PdtMode,
};
use csma_sleep::optimizer::OptimizerSettings;
use csma_sleep::simcore::PowerModel;
use csma_sleep::slotted::{DcfParams, SlottedConfig, SlottedMode};
use csma_sleep::topology::ConflictGraph;
use csma_sleep::{Error, Result};
use serde::{Deserialize, Serialize};

/// A scalar broadcast to every link, or one value per link.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerLink {
    Scalar(f64),
    Each(Vec<f64>),
}

impl PerLink {
    pub fn resolve(&self, links: usize, field: &str) -> Result<Vec<f64>> {
        match self {
            PerLink::Scalar(v) => Ok(vec![*v; links]),
            PerLink::Each(vs) if vs.len() == links => Ok(vs.clone()),
            PerLink::Each(vs) => Err(Error::ConfigError(format!(
                "{field}: expected {links} entries, got {}",
                vs.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EdgeSpec {
    Keyword(String),
    List(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub links: usize,
    pub edges: EdgeSpec,
}

impl GraphSpec {
    pub fn build(&self) -> Result<ConflictGraph> {
        match &self.edges {
            EdgeSpec::Keyword(word) if word == "complete" => ConflictGraph::complete(self.links),
            EdgeSpec::Keyword(word) => Err(Error::ConfigError(format!(
                "graph.edges: unknown keyword {word:?}, expected \"complete\" or an edge list"
            ))),
            EdgeSpec::List(edges) => ConflictGraph::new(self.links, edges),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Analyze,
    Optimize,
    Simulate,
    Slotted,
    Dcf,
    Compare,
    Region,
    Experiment,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Analyze => "analyze",
            Mode::Optimize => "optimize",
            Mode::Simulate => "simulate",
            Mode::Slotted => "slotted",
            Mode::Dcf => "dcf",
            Mode::Compare => "compare",
            Mode::Region => "region",
            Mode::Experiment => "experiment",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdtModeSpec {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalWindowSpec {
    Cumulative,
    Sliding,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptationBlock {
    /// Update frame T_m, seconds.
    pub t_m_s: f64,
    /// Step size for both affine updates.
    pub delta: f64,
    /// Slack recomputation period T_c, seconds (dynamic slack only).
    pub t_c_s: f64,
    /// Arrival estimation window T_a, seconds (sliding mode only).
    pub t_a_s: f64,
    pub arrival_window: ArrivalWindowSpec,
    pub pdt_mode: PdtModeSpec,
    /// Backlog-driven slack bounds, required when pdt_mode = dynamic.
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub q0: Option<f64>,
    /// Feed the true arrival rates to the update instead of estimates.
    pub use_true_lambda: bool,
    /// Keep every n-th frame record in the time series.
    pub record_every: usize,
}

impl Default for AdaptationBlock {
    fn default() -> Self {
        Self {
            t_m_s: 0.01,
            delta: 0.1,
            t_c_s: 1.0,
            t_a_s: 10.0,
            arrival_window: ArrivalWindowSpec::Cumulative,
            pdt_mode: PdtModeSpec::Static,
            omega_min: None,
            omega_max: None,
            q0: None,
            use_true_lambda: false,
            record_every: 1,
        }
    }
}

impl AdaptationBlock {
    pub fn to_config(&self) -> Result<AdaptationConfig> {
        let dynamic = match self.pdt_mode {
            PdtModeSpec::Static => None,
            PdtModeSpec::Dynamic => {
                let missing: Vec<&str> = [
                    ("adaptation.omega_min", self.omega_min),
                    ("adaptation.omega_max", self.omega_max),
                    ("adaptation.q0", self.q0),
                ]
                .iter()
                .filter_map(|&(name, v)| v.is_none().then_some(name))
                .collect();
                if !missing.is_empty() {
                    return Err(Error::ConfigError(format!(
                        "{}: required when pdt_mode = dynamic",
                        missing.join(", ")
                    )));
                }
                Some(DynamicPdtParams {
                    omega_min: self.omega_min.unwrap(),
                    omega_max: self.omega_max.unwrap(),
                    q0: self.q0.unwrap(),
                })
            }
        };
        Ok(AdaptationConfig {
            update_frame: self.t_m_s,
            step_size: self.delta,
            step_size_r: None,
            step_size_rho: None,
            convergence_frame: self.t_c_s,
            arrival_window: self.t_a_s,
            arrival_mode: match self.arrival_window {
                ArrivalWindowSpec::Cumulative => ArrivalWindow::Cumulative,
                ArrivalWindowSpec::Sliding => ArrivalWindow::Sliding,
            },
            pdt_mode: match self.pdt_mode {
                PdtModeSpec::Static => PdtMode::Static,
                PdtModeSpec::Dynamic => PdtMode::Dynamic,
            },
            dynamic,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentionSpec {
    /// Collisions burn the full payload airtime.
    Basic,
    /// Short probes race first; only probes collide.
    RtsCts,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlottedBlock {
    /// Mini-slot length T_slot, seconds.
    pub t_slot_s: f64,
    /// Window floor W0.
    pub w0: u32,
    /// Probe duration, seconds (rts_cts contention).
    pub probe_s: f64,
    pub contention: ContentionSpec,
    /// DCF base window CW0.
    pub cw0: u32,
    /// DCF doubling cap.
    pub max_doublings: u32,
    /// Sweep CW0 over these values (dcf mode); overrides `cw0`.
    pub cw0_sweep: Option<Vec<u32>>,
}

impl Default for SlottedBlock {
    fn default() -> Self {
        Self {
            t_slot_s: 9e-6,
            w0: 32,
            probe_s: 1e-5,
            contention: ContentionSpec::Basic,
            cw0: 32,
            max_doublings: 10,
            cw0_sweep: None,
        }
    }
}

impl SlottedBlock {
    pub fn to_config(&self, mode: SlottedMode) -> SlottedConfig {
        SlottedConfig {
            slot: self.t_slot_s,
            window_floor: self.w0,
            probe_duration: if mode == SlottedMode::RtsCts { self.probe_s } else { 0.0 },
            mode,
            dcf: DcfParams { cw0: self.cw0, max_doublings: self.max_doublings },
        }
    }

    pub fn contention_mode(&self) -> SlottedMode {
        match self.contention {
            ContentionSpec::Basic => SlottedMode::Basic,
            ContentionSpec::RtsCts => SlottedMode::RtsCts,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerBlock {
    /// Sleep draw P_z, watts.
    pub p_sleep_w: f64,
    /// Transmit draw P_t, watts.
    pub p_transmit_w: f64,
    /// Idle listening draw P_r, watts.
    pub p_sense_w: f64,
}

impl Default for PowerBlock {
    fn default() -> Self {
        let reference = PowerModel::reference();
        Self {
            p_sleep_w: reference.p_sleep,
            p_transmit_w: reference.p_transmit,
            p_sense_w: reference.p_sense,
        }
    }
}

impl PowerBlock {
    pub fn to_model(&self) -> Result<PowerModel> {
        PowerModel::new(self.p_sleep_w, self.p_transmit_w, self.p_sense_w)
            .map_err(|e| Error::ConfigError(format!("power: {e}")))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerBlock {
    pub step_size: f64,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub divergence_norm_cap: f64,
}

impl Default for OptimizerBlock {
    fn default() -> Self {
        let settings = OptimizerSettings::default();
        Self {
            step_size: settings.step_size,
            max_iterations: settings.max_iterations,
            gradient_tolerance: settings.gradient_tolerance,
            divergence_norm_cap: settings.divergence_norm_cap,
        }
    }
}

impl OptimizerBlock {
    pub fn to_settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            step_size: self.step_size,
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            divergence_norm_cap: self.divergence_norm_cap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    AdaptiveCsma,
    Dcf,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::AdaptiveCsma => "adaptive_csma",
            Scheme::Dcf => "dcf",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareBlock {
    pub schemes: Vec<Scheme>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionBlock {
    /// Boundary samples per sweep.
    pub samples: usize,
}

impl Default for RegionBlock {
    fn default() -> Self {
        Self { samples: 64 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// When present, must match the invoked subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub graph: GraphSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<PerLink>,
    /// Slack above the load; awake target is lambda + omega.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<PerLink>,
    /// Explicit awake target f; exclusive with omega.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub awake_target: Option<PerLink>,
    /// Explicit aggressiveness; optimized from the load when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<PerLink>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<PerLink>,
    #[serde(default = "default_holding")]
    pub holding_mean_s: PerLink,
    #[serde(default = "default_sleep")]
    pub sleep_mean_s: PerLink,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptation: Option<AdaptationBlock>,
    #[serde(default)]
    pub slotted: SlottedBlock,
    #[serde(default)]
    pub power: PowerBlock,
    #[serde(default)]
    pub optimizer: OptimizerBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareBlock>,
    #[serde(default)]
    pub region: RegionBlock,
}

fn default_holding() -> PerLink {
    PerLink::Scalar(0.001)
}

fn default_sleep() -> PerLink {
    PerLink::Scalar(0.001)
}

fn default_duration() -> f64 {
    100.0
}

fn default_seed() -> u64 {
    4242
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::ConfigError(format!("config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::ConfigError(format!("config field `{}`: {}", e.path(), e.inner())))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.graph.links == 0 {
            return Err(Error::ConfigError("graph.links: must be at least 1".into()));
        }
        if self.omega.is_some() && self.awake_target.is_some() {
            return Err(Error::ConfigError(
                "omega, awake_target: mutually exclusive, give one".into(),
            ));
        }
        if self.r.is_some() != self.rho.is_some() {
            return Err(Error::ConfigError("r, rho: give both or neither".into()));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::ConfigError(format!(
                "duration_s: must be positive, got {}",
                self.duration_s
            )));
        }
        Ok(())
    }

    /// The canonical reproduction scenario: twelve mutually interfering
    /// links at equal load with slack tiers 0.8 / 0.4 / 0.1 by group of
    /// four, 1 ms mean payloads and sleep cycles, 100 s of adaptation.
    pub fn experiment_default() -> Self {
        let mut omega = vec![0.8; 4];
        omega.extend(vec![0.4; 4]);
        omega.extend(vec![0.1; 4]);
        Self {
            mode: Some(Mode::Experiment),
            graph: GraphSpec { links: 12, edges: EdgeSpec::Keyword("complete".into()) },
            lambda: Some(PerLink::Scalar(0.077)),
            omega: Some(PerLink::Each(omega)),
            awake_target: None,
            r: None,
            rho: None,
            holding_mean_s: default_holding(),
            sleep_mean_s: default_sleep(),
            duration_s: default_duration(),
            seed: default_seed(),
            adaptation: Some(AdaptationBlock { record_every: 10, ..AdaptationBlock::default() }),
            slotted: SlottedBlock::default(),
            power: PowerBlock::default(),
            optimizer: OptimizerBlock::default(),
            compare: None,
            region: RegionBlock::default(),
        }
    }

    pub fn graph(&self) -> Result<ConflictGraph> {
        self.graph.build()
    }

    pub fn lambda_vec(&self) -> Result<Vec<f64>> {
        match &self.lambda {
            Some(l) => l.resolve(self.graph.links, "lambda"),
            None => Err(Error::ConfigError("lambda: required for this mode".into())),
        }
    }

    /// Awake targets from omega or the explicit field.
    pub fn awake_target_vec(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        match (&self.omega, &self.awake_target) {
            (Some(omega), None) => {
                let omega = omega.resolve(self.graph.links, "omega")?;
                Ok(lambda.iter().zip(&omega).map(|(&l, &w)| l + w).collect())
            }
            (None, Some(f)) => f.resolve(self.graph.links, "awake_target"),
            (None, None) => {
                Err(Error::ConfigError("omega: required (or give awake_target)".into()))
            }
            (Some(_), Some(_)) => unreachable!("validated"),
        }
    }

    pub fn omega_vec(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let f = self.awake_target_vec(lambda)?;
        Ok(lambda.iter().zip(&f).map(|(&l, &fk)| fk - l).collect())
    }

    pub fn holding_rates(&self) -> Result<Vec<f64>> {
        let means = self.holding_mean_s.resolve(self.graph.links, "holding_mean_s")?;
        rates_from_means(&means, "holding_mean_s")
    }

    pub fn sleep_rates(&self) -> Result<Vec<f64>> {
        let means = self.sleep_mean_s.resolve(self.graph.links, "sleep_mean_s")?;
        rates_from_means(&means, "sleep_mean_s")
    }

    pub fn explicit_parameters(&self) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        match (&self.r, &self.rho) {
            (Some(r), Some(rho)) => Ok(Some((
                r.resolve(self.graph.links, "r")?,
                rho.resolve(self.graph.links, "rho")?,
            ))),
            _ => Ok(None),
        }
    }
}

fn rates_from_means(means: &[f64], field: &str) -> Result<Vec<f64>> {
    means
        .iter()
        .map(|&m| {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::ConfigError(format!("{field}: must be positive, got {m}")));
            }
            Ok(1.0 / m)
        })
        .collect()
}
