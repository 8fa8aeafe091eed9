//! Distributed online adaptation of the aggressiveness parameters.
//!
//! Time is split into update frames of length T_m. Each link measures its
//! own throughput and awake fraction over the frame and nudges (r_k, rho_k)
//! toward the point where the measured marginals match the targets:
//!
//!   r_k   <- r_k   + D1_k (lambda_k - s_k(m))
//!   rho_k <- rho_k + D2_k (lambda_k + omega_k - f_k(m))
//!
//! which is stochastic gradient descent on the same convex objective the
//! offline optimizer minimizes. No projection is applied; both parameters
//! may take any sign. Arrival rates can be estimated online, and the
//! per-link slack omega_k can track the backlog on a slower timescale.

use crate::analytic::AggressivenessProfile;
use crate::regions::TrafficSpec;
use crate::simcore::{FrameTotals, RunMetrics, SimOptions, Simulator, TraceLog};
use crate::topology::ConflictGraph;
use crate::{Error, Result};

/// How the per-link slack omega_k is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdtMode {
    /// omega fixed up front.
    Static,
    /// omega recomputed from the average backlog every convergence frame.
    Dynamic,
}

/// Parameters of the backlog-driven slack rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicPdtParams {
    pub omega_min: f64,
    pub omega_max: f64,
    /// Backlog at which the slack sits halfway between the bounds.
    pub q0: f64,
}

/// How arrivals are averaged into a rate estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalWindow {
    /// All arrivals since the start of the run.
    Cumulative,
    /// Only arrivals within the trailing estimation window.
    Sliding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationConfig {
    /// Update frame length T_m, seconds.
    pub update_frame: f64,
    /// Common step size for both updates.
    pub step_size: f64,
    /// Per-link override for the throughput update step.
    pub step_size_r: Option<Vec<f64>>,
    /// Per-link override for the awake-fraction update step.
    pub step_size_rho: Option<Vec<f64>>,
    /// Slack recomputation period T_c, seconds (DYNAMIC mode).
    pub convergence_frame: f64,
    /// Arrival estimation window T_a, seconds (SLIDING mode).
    pub arrival_window: f64,
    pub arrival_mode: ArrivalWindow,
    pub pdt_mode: PdtMode,
    pub dynamic: Option<DynamicPdtParams>,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            update_frame: 0.01,
            step_size: 0.1,
            step_size_r: None,
            step_size_rho: None,
            convergence_frame: 1.0,
            arrival_window: 10.0,
            arrival_mode: ArrivalWindow::Cumulative,
            pdt_mode: PdtMode::Static,
            dynamic: None,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self, links: usize) -> Result<()> {
        for (name, v) in [
            ("update_frame", self.update_frame),
            ("step_size", self.step_size),
            ("convergence_frame", self.convergence_frame),
            ("arrival_window", self.arrival_window),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::ConfigError(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, steps) in
            [("step_size_r", &self.step_size_r), ("step_size_rho", &self.step_size_rho)]
        {
            if let Some(steps) = steps {
                if steps.len() != links {
                    return Err(Error::ConfigError(format!(
                        "{name} has {} entries for {links} links",
                        steps.len()
                    )));
                }
                if steps.iter().any(|&d| !(d.is_finite() && d > 0.0)) {
                    return Err(Error::ConfigError(format!("{name} entries must be positive")));
                }
            }
        }
        if self.pdt_mode == PdtMode::Dynamic && self.dynamic.is_none() {
            return Err(Error::ConfigError(
                "DYNAMIC slack mode requires dynamic parameters".into(),
            ));
        }
        Ok(())
    }

    fn step_r(&self, k: usize) -> f64 {
        self.step_size_r.as_ref().map_or(self.step_size, |d| d[k])
    }

    fn step_rho(&self, k: usize) -> f64 {
        self.step_size_rho.as_ref().map_or(self.step_size, |d| d[k])
    }
}

/// Per-frame empirical marginals, each a time average over the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMeasurement {
    /// Fraction of the frame spent transmitting.
    pub s_measured: Vec<f64>,
    /// Fraction of the frame spent awake.
    pub f_measured: Vec<f64>,
    /// Average queue length over the frame.
    pub q_average: Vec<f64>,
    /// Arrivals during the frame.
    pub arrivals: Vec<u64>,
    pub elapsed: f64,
}

/// Turn raw frame totals into time averages.
pub fn measure_frame(totals: &FrameTotals) -> Result<FrameMeasurement> {
    if totals.elapsed <= 0.0 {
        return Err(Error::EmptyFrame);
    }
    let t = totals.elapsed;
    let s_measured: Vec<f64> = totals.time_transmitting.iter().map(|&x| x / t).collect();
    let f_measured: Vec<f64> = totals.time_awake.iter().map(|&x| x / t).collect();
    let q_average: Vec<f64> = totals.queue_integral.iter().map(|&x| x / t).collect();
    for k in 0..s_measured.len() {
        debug_assert!(-1e-12 <= s_measured[k] && s_measured[k] <= f_measured[k] + 1e-12);
        debug_assert!(f_measured[k] <= 1.0 + 1e-12);
    }
    Ok(FrameMeasurement { s_measured, f_measured, q_average, arrivals: totals.arrivals.clone(), elapsed: t })
}

/// One distributed update step; each link uses only its own measurement.
pub fn update_aggressiveness(
    r: &[f64],
    rho: &[f64],
    measurement: &FrameMeasurement,
    lambda: &[f64],
    omega: &[f64],
    config: &AdaptationConfig,
) -> (Vec<f64>, Vec<f64>) {
    let new_r: Vec<f64> = r
        .iter()
        .enumerate()
        .map(|(k, &rk)| rk + config.step_r(k) * (lambda[k] - measurement.s_measured[k]))
        .collect();
    let new_rho: Vec<f64> = rho
        .iter()
        .enumerate()
        .map(|(k, &pk)| pk + config.step_rho(k) * (lambda[k] + omega[k] - measurement.f_measured[k]))
        .collect();
    (new_r, new_rho)
}

/// Empirical arrival rate in normalized (per holding time) units.
pub fn estimate_arrival_rate(arrival_count: u64, window: f64, holding_rate: f64) -> f64 {
    assert!(window > 0.0 && holding_rate > 0.0);
    arrival_count as f64 / (window * holding_rate)
}

/// Backlog-driven slack: omega_min at empty queues, rising toward omega_max
/// as the average backlog grows past q0.
pub fn dynamic_pdt(q_average: f64, lambda: f64, params: &DynamicPdtParams) -> Result<f64> {
    if !(params.q0.is_finite() && params.q0 > 0.0) {
        return Err(Error::ConfigError(format!("q0 must be positive, got {}", params.q0)));
    }
    if !(0.0 < params.omega_min
        && params.omega_min < params.omega_max
        && params.omega_max < 1.0 - lambda)
    {
        return Err(Error::ConfigError(format!(
            "slack bounds must satisfy 0 < omega_min < omega_max < 1 - lambda, got ({}, {}) with lambda {lambda}",
            params.omega_min, params.omega_max
        )));
    }
    assert!(q_average >= 0.0);
    Ok(params.omega_min + (params.omega_max - params.omega_min) * q_average / (q_average + params.q0))
}

/// Apply freshly updated parameters to a running simulation. Transmitting
/// links keep all their timers; back-off and wake timers restart at the new
/// rates; remaining sleep time is preserved.
pub fn apply_frame_boundary(sim: &mut Simulator, r: &[f64], rho: &[f64]) -> Result<()> {
    sim.set_aggressiveness(r, rho)
}

/// State of one link's trajectory at a frame boundary, after the update.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_index: usize,
    /// Frame end time, seconds.
    pub time: f64,
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
    pub s_measured: Vec<f64>,
    pub f_measured: Vec<f64>,
    pub q_average: Vec<f64>,
    pub lambda_used: Vec<f64>,
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AdaptiveOutcome {
    pub frames: Vec<FrameRecord>,
    pub metrics: RunMetrics,
    pub final_r: Vec<f64>,
    pub final_rho: Vec<f64>,
    /// Present when the run recorded an event trace.
    pub trace: Option<TraceLog>,
}

/// Options for the adaptive driver.
#[derive(Debug, Clone, Copy, Default)]
pub struct AdaptiveOptions {
    /// Use the true arrival rates instead of online estimates.
    pub use_true_lambda: bool,
    /// Keep every frame record; otherwise only every `thin`-th is kept.
    pub record_every: usize,
    pub sim: SimOptions,
}

/// Run the protocol with per-frame distributed updates for `duration`
/// seconds. Arrival rates are estimated online unless `use_true_lambda`;
/// the slack follows the configured rule.
pub fn run_adaptive(
    graph: &ConflictGraph,
    initial: &AggressivenessProfile,
    traffic: &TrafficSpec,
    duration: f64,
    seed: u64,
    config: &AdaptationConfig,
    options: AdaptiveOptions,
) -> Result<AdaptiveOutcome> {
    let k = graph.link_count();
    config.validate(k)?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::ConfigError(format!("duration must be positive, got {duration}")));
    }
    let mut sim = Simulator::new(graph, initial, traffic, seed, options.sim)?;
    let mut r = initial.r.clone();
    let mut rho = initial.rho.clone();
    let mut omega: Vec<f64> = match config.pdt_mode {
        PdtMode::Static => traffic.omega.clone(),
        // Empty-backlog slack until the first convergence checkpoint.
        PdtMode::Dynamic => {
            let params = config.dynamic.as_ref().expect("validated");
            traffic
                .lambda
                .iter()
                .map(|&l| dynamic_pdt(0.0, l, params))
                .collect::<Result<_>>()?
        }
    };

    let thin = options.record_every.max(1);
    let mut frames = Vec::new();
    let mut lambda_estimate = vec![0.0; k];
    let mut cumulative_arrivals = vec![0u64; k];
    // Ring of per-frame arrival counts for the sliding estimate.
    let frames_per_window =
        ((config.arrival_window / config.update_frame).round() as usize).max(1);
    let mut recent_arrivals: Vec<Vec<u64>> = Vec::new();
    // Backlog accumulated since the last slack recomputation.
    let mut backlog_integral = vec![0.0; k];
    let mut backlog_window = 0.0;
    let mut next_convergence = config.convergence_frame;

    let mut frame_index = 0usize;
    // Frame ends are exact multiples of T_m so rounding drift cannot
    // accumulate over long runs.
    while (frame_index + 1) as f64 * config.update_frame <= duration * (1.0 + 1e-12) {
        let frame_end = (frame_index + 1) as f64 * config.update_frame;
        sim.run_until(frame_end)?;
        let totals = sim.take_frame();
        let measurement = measure_frame(&totals)?;
        frame_index += 1;

        for i in 0..k {
            cumulative_arrivals[i] += measurement.arrivals[i];
            backlog_integral[i] += totals.queue_integral[i];
        }
        backlog_window += totals.elapsed;
        let lambda_used: Vec<f64> = if options.use_true_lambda {
            traffic.lambda.clone()
        } else {
            match config.arrival_mode {
                ArrivalWindow::Cumulative => {
                    for i in 0..k {
                        lambda_estimate[i] = estimate_arrival_rate(
                            cumulative_arrivals[i],
                            sim.now(),
                            initial.holding_rate[i],
                        );
                    }
                }
                ArrivalWindow::Sliding => {
                    recent_arrivals.push(measurement.arrivals.clone());
                    if recent_arrivals.len() > frames_per_window {
                        recent_arrivals.remove(0);
                    }
                    let span = config.update_frame * recent_arrivals.len() as f64;
                    for i in 0..k {
                        let count: u64 = recent_arrivals.iter().map(|f| f[i]).sum();
                        lambda_estimate[i] =
                            estimate_arrival_rate(count, span, initial.holding_rate[i]);
                    }
                }
            }
            lambda_estimate.clone()
        };

        if config.pdt_mode == PdtMode::Dynamic && sim.now() + 1e-9 >= next_convergence {
            let params = config.dynamic.as_ref().expect("validated");
            for i in 0..k {
                let q_bar = backlog_integral[i] / backlog_window;
                omega[i] = dynamic_pdt(q_bar, lambda_used[i], params)?;
                backlog_integral[i] = 0.0;
            }
            backlog_window = 0.0;
            next_convergence += config.convergence_frame;
        }

        let (new_r, new_rho) =
            update_aggressiveness(&r, &rho, &measurement, &lambda_used, &omega, config);
        r = new_r;
        rho = new_rho;
        apply_frame_boundary(&mut sim, &r, &rho)?;

        if frame_index % thin == 0 {
            frames.push(FrameRecord {
                frame_index,
                time: sim.now(),
                r: r.clone(),
                rho: rho.clone(),
                s_measured: measurement.s_measured,
                f_measured: measurement.f_measured,
                q_average: measurement.q_average,
                lambda_used,
                omega: omega.clone(),
            });
        }
    }
    sim.run_until(duration.max(sim.now()))?;
    let metrics = sim.metrics();
    let trace = options.sim.record_trace.then(|| sim.into_trace());
    Ok(AdaptiveOutcome { frames, metrics, final_r: r, final_rho: rho, trace })
}
