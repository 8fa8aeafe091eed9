//! Mode execution: maps a validated scenario onto the library, runs it,
//! and writes summary.json plus the mode's CSV outputs.

use std::path::{Path, PathBuf};

use csma_sleep::adaptation::{run_adaptive, AdaptiveOptions};
use csma_sleep::analytic::{
    awake_fraction, detailed_balance_residual, stationary_distribution, throughput,
    AggressivenessProfile,
};
use csma_sleep::optimizer::{solve, OptimizationResult, SolveStatus};
use csma_sleep::regions::{feasibility_margin, FeasibilityVerdict, TrafficSpec};
use csma_sleep::simcore::{run_continuous, PowerModel, SimOptions};
use csma_sleep::slotted::{run_dcf_80211, run_slotted, SlottedMetrics, SlottedMode};
use csma_sleep::topology::{build_state_index, ConflictGraph, StateIndex};
use csma_sleep::{Error, Result};

use crate::config::{Mode, ScenarioConfig, Scheme};
use crate::output::{
    self, AdaptationReport, Analysis, CollisionReport, Comparison, DcfReport, DcfRow,
    Optimization, RegionReport, RunReport, SchemeDelta, SchemeReport, StateRow, Summary,
};

/// Awake-to-sleep rate for the always-awake baseline: a 100 s budget keeps
/// links effectively awake for whole runs while they still wake promptly
/// from the initial sleep (its mean is 1/(S e^rho)).
const ADAPTIVE_SLEEP_RATE: f64 = 0.01;
/// Awake target standing in for "always awake" in the convex solve; pushing
/// closer to 1 flattens the objective in rho below gradient-ascent reach.
const ALWAYS_AWAKE: f64 = 1.0 - 1e-3;
/// End-of-run backlog above this share of arrivals flags queue growth.
const BACKLOG_SHARE: f64 = 0.05;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::ConfigError(msg) => CliError::Config(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug)]
pub struct Invocation {
    pub mode: Mode,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub trace: bool,
}

pub fn execute(inv: &Invocation) -> std::result::Result<Vec<PathBuf>, CliError> {
    let mut config = match &inv.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::experiment_default(),
    };
    if let Some(mode) = config.mode {
        if mode != inv.mode {
            return Err(CliError::Config(format!(
                "mode: config says {} but the {} subcommand was invoked",
                mode.name(),
                inv.mode.name()
            )));
        }
    }
    if let Some(seed) = inv.seed {
        config.seed = seed;
    }
    let files = match inv.mode {
        Mode::Analyze => analyze(&config, &inv.out)?,
        Mode::Optimize => optimize(&config, &inv.out)?,
        Mode::Simulate => simulate(&config, &inv.out, inv.trace)?,
        Mode::Slotted => slotted(&config, &inv.out)?,
        Mode::Dcf => dcf(&config, &inv.out)?,
        Mode::Compare => compare(&config, &inv.out)?,
        Mode::Region => region(&config, &inv.out)?,
        Mode::Experiment => experiment(&config, &inv.out, inv.trace)?,
    };
    Ok(files)
}

fn zeros_profile(config: &ScenarioConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = config.graph.links;
    Ok(config.explicit_parameters()?.unwrap_or((vec![0.0; k], vec![0.0; k])))
}

fn traffic_spec(config: &ScenarioConfig) -> Result<TrafficSpec> {
    let lambda = config.lambda_vec()?;
    match (&config.omega, &config.awake_target) {
        (None, Some(f)) => {
            TrafficSpec::with_awake_target(lambda, f.resolve(config.graph.links, "awake_target")?)
        }
        (_, None) => {
            let omega = config.omega_vec(&lambda)?;
            TrafficSpec::from_pdt(lambda, omega)
        }
        (Some(_), Some(_)) => unreachable!("validated"),
    }
}

fn solve_for(
    index: &StateIndex,
    traffic: &TrafficSpec,
    config: &ScenarioConfig,
) -> Result<OptimizationResult> {
    solve(index, traffic, &config.optimizer.to_settings())
}

fn require_converged(result: &OptimizationResult) -> Result<()> {
    match result.status {
        SolveStatus::Converged => Ok(()),
        SolveStatus::DivergedNearBoundary => Err(Error::NonConvergence(
            "optimizer diverged near the capacity boundary; give r and rho explicitly".into(),
        )),
        SolveStatus::MaxIterations => Err(Error::NonConvergence(
            "optimizer hit its iteration cap; give r and rho explicitly or raise optimizer.max_iterations".into(),
        )),
    }
}

fn status_name(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Converged => "converged",
        SolveStatus::DivergedNearBoundary => "diverged_near_boundary",
        SolveStatus::MaxIterations => "max_iterations",
    }
}

fn optimization_report(index: &StateIndex, result: &OptimizationResult) -> Result<Optimization> {
    // The marginals diverge with the iterates past the boundary; report
    // them only for finite parameters.
    let profile = AggressivenessProfile::with_unit_rates(
        result.r_star.clone(),
        result.rho_star.clone(),
    )?;
    let dist = stationary_distribution(index, &profile)?;
    Ok(Optimization {
        status: status_name(result.status),
        r_star: result.r_star.clone(),
        rho_star: result.rho_star.clone(),
        kkt_residual: result.kkt_residual,
        objective_value: result.objective_value,
        iterations: result.iterations,
        throughput: throughput(&dist.probabilities, index),
        awake_fraction: awake_fraction(&dist.probabilities, index),
    })
}

fn mask_links(mask: u32) -> Vec<usize> {
    (0..32).filter(|k| mask & (1 << k) != 0).collect()
}

fn analyze(config: &ScenarioConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let graph = config.graph()?;
    let index = build_state_index(&graph)?;
    let (r, rho) = zeros_profile(config)?;
    let profile = AggressivenessProfile::with_unit_rates(r.clone(), rho.clone())?;
    let dist = stationary_distribution(&index, &profile)?;
    let residual = detailed_balance_residual(&dist.probabilities, &index, &profile)?;
    let states = index
        .states()
        .iter()
        .zip(&dist.probabilities)
        .map(|(&(config_state, tx_state), &p)| StateRow {
            awake: mask_links(config_state.awake),
            transmitting: mask_links(tx_state.transmitting),
            probability: p,
        })
        .collect();

    let mut summary = Summary::new("analyze", config.seed, graph.link_count());
    summary.analysis = Some(Analysis {
        r,
        rho,
        state_count: index.len(),
        log_partition: dist.log_normalizer,
        detailed_balance_residual: residual,
        states,
        throughput: throughput(&dist.probabilities, &index),
        awake_fraction: awake_fraction(&dist.probabilities, &index),
    });
    Ok(vec![summary.write(out)?])
}

fn optimize(config: &ScenarioConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let graph = config.graph()?;
    let index = build_state_index(&graph)?;
    let traffic = traffic_spec(config)?;
    let result = solve_for(&index, &traffic, config)?;

    let mut summary = Summary::new("optimize", config.seed, graph.link_count());
    summary.status = status_name(result.status).into();
    summary.optimization = Some(optimization_report(&index, &result)?);
    Ok(vec![summary.write(out)?])
}

fn simulate(config: &ScenarioConfig, out: &Path, trace: bool) -> Result<Vec<PathBuf>> {
    let graph = config.graph()?;
    let traffic = traffic_spec(config)?;
    let holding = config.holding_rates()?;
    let sleep = config.sleep_rates()?;
    let power = config.power.to_model()?;
    let (r, rho) = zeros_profile(config)?;
    let profile = AggressivenessProfile::new(r, rho, holding, sleep)?;
    let sim_options = SimOptions { record_trace: trace };

    let mut summary = Summary::new("simulate", config.seed, graph.link_count());
    let mut files = Vec::new();
    let timeseries = out.join("timeseries.csv");

    match &config.adaptation {
        Some(block) => {
            let adaptation = block.to_config()?;
            let options = AdaptiveOptions {
                use_true_lambda: block.use_true_lambda,
                record_every: block.record_every,
                sim: sim_options,
            };
            let outcome = run_adaptive(
                &graph,
                &profile,
                &traffic,
                config.duration_s,
                config.seed,
                &adaptation,
                options,
            )?;
            summary.run = Some(RunReport::from_continuous(
                &outcome.metrics,
                &outcome.final_r,
                &outcome.final_rho,
                &power,
            ));
            summary.adaptation = Some(AdaptationReport::from_frames(
                &outcome.frames,
                outcome.final_r.clone(),
                outcome.final_rho.clone(),
                config.duration_s,
                graph.link_count(),
            ));
            output::write_timeseries(&timeseries, &outcome.frames)?;
            files.push(timeseries);
            if let Some(log) = &outcome.trace {
                let path = out.join("trace.csv");
                output::write_trace(&path, log)?;
                files.push(path);
            }
        }
        None => {
            let run =
                run_continuous(&graph, &profile, &traffic, config.duration_s, config.seed, sim_options)?;
            let report =
                RunReport::from_continuous(&run.metrics, &profile.r, &profile.rho, &power);
            output::write_flat_timeseries(&timeseries, &report)?;
            files.push(timeseries);
            summary.run = Some(report);
            if let Some(log) = &run.trace {
                let path = out.join("trace.csv");
                output::write_trace(&path, log)?;
                files.push(path);
            }
        }
    }
    files.insert(0, summary.write(out)?);
    Ok(files)
}

fn slotted(config: &ScenarioConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let graph = config.graph()?;
    let traffic = traffic_spec(config)?;
    let holding = config.holding_rates()?;
    let sleep = config.sleep_rates()?;
    let power = config.power.to_model()?;

    let mut summary = Summary::new("slotted", config.seed, graph.link_count());
    let (r, rho) = match config.explicit_parameters()? {
        Some(pair) => pair,
        None => {
            let index = build_state_index(&graph)?;
            let result = solve_for(&index, &traffic, config)?;
            require_converged(&result)?;
            summary.optimization = Some(optimization_report(&index, &result)?);
            (result.r_star, result.rho_star)
        }
    };
    let profile = AggressivenessProfile::new(r.clone(), rho.clone(), holding, sleep)?;
    let slotted_config = config.slotted.to_config(config.slotted.contention_mode());
    let metrics = run_slotted(
        &graph,
        &profile,
        &traffic,
        &slotted_config,
        config.duration_s,
        config.seed,
    )?;
    summary.run = Some(RunReport::from_slotted(&metrics, &r, &rho, &power));
    summary.collisions = Some(CollisionReport::from_metrics(&metrics));
    Ok(vec![summary.write(out)?])
}

fn shared_holding_rate(config: &ScenarioConfig) -> Result<f64> {
    let rates = config.holding_rates()?;
    let first = rates[0];
    if rates.iter().any(|&h| (h - first).abs() > 1e-12 * first.abs()) {
        return Err(Error::ConfigError(
            "holding_mean_s: the saturated baseline uses one shared payload length".into(),
        ));
    }
    Ok(first)
}

fn dcf_sweep_values(config: &ScenarioConfig) -> Result<Vec<u32>> {
    match &config.slotted.cw0_sweep {
        Some(values) if values.is_empty() => {
            Err(Error::ConfigError("slotted.cw0_sweep: must not be empty".into()))
        }
        Some(values) => Ok(values.clone()),
        None => Ok(vec![config.slotted.cw0]),
    }
}

fn run_dcf_best(
    config: &ScenarioConfig,
    graph: &ConflictGraph,
) -> Result<(Vec<DcfRow>, u32, SlottedMetrics)> {
    let holding = shared_holding_rate(config)?;
    let sweep = dcf_sweep_values(config)?;
    let mut rows = Vec::new();
    let mut best: Option<(u32, SlottedMetrics, f64)> = None;
    for cw0 in sweep {
        let mut slotted_config = config.slotted.to_config(SlottedMode::Dcf);
        slotted_config.mode = SlottedMode::Dcf;
        slotted_config.dcf.cw0 = cw0;
        let metrics =
            run_dcf_80211(graph, holding, &slotted_config, config.duration_s, config.seed)?;
        let per_link =
            metrics.s_hat.iter().sum::<f64>() / graph.link_count() as f64;
        rows.push(DcfRow {
            cw0,
            per_link_throughput: per_link,
            total_throughput: metrics.s_hat.iter().sum(),
            collision_probability: metrics.collision_probability(),
        });
        if best.as_ref().is_none_or(|(_, _, b)| per_link > *b) {
            best = Some((cw0, metrics, per_link));
        }
    }
    let (best_cw0, metrics, _) = best.expect("sweep is non-empty");
    Ok((rows, best_cw0, metrics))
}

fn dcf(config: &ScenarioConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let graph = config.graph()?;
    let power = config.power.to_model()?;
    let (rows, best_cw0, metrics) = run_dcf_best(config, &graph)?;
    let best_per_link =
        metrics.s_hat.iter().sum::<f64>() / graph.link_count() as f64;
    // Saturated capacity against the configured load, when one is given.
    let queue_growth = match &config.lambda {
        Some(_) => {
            let lambda = config.lambda_vec()?;
            let mean = lambda.iter().sum::<f64>() / lambda.len() as f64;
            Some(mean > best_per_link)
        }
        None => None,
    };

    let mut summary = Summary::new("dcf", config.seed, graph.link_count());
    summary.run = Some(RunReport::from_slotted(&metrics, &[], &[], &power));
    summary.collisions = Some(CollisionReport::from_metrics(&metrics));
    summary.dcf = Some(DcfReport {
        sweep: rows,
        best_cw0,
        best_per_link_throughput: best_per_link,
        queue_growth,
    });
    Ok(vec![summary.write(out)?])
}

fn backlog_grows(queue_final: &[u64], arrivals: &[u64]) -> bool {
    let backlog: u64 = queue_final.iter().sum();
    let arrived: u64 = arrivals.iter().sum();
    arrived > 0 && backlog as f64 > BACKLOG_SHARE * arrived as f64
}

/// One queueing scheme under both engines: the continuous run supplies
/// throughput and energy, the slotted companion supplies collisions.
fn queueing_scheme_report(
    scheme: Scheme,
    config: &ScenarioConfig,
    graph: &ConflictGraph,
    traffic: &TrafficSpec,
    r: Vec<f64>,
    rho: Vec<f64>,
    sleep: Vec<f64>,
    power: &PowerModel,
) -> Result<SchemeReport> {
    let holding = config.holding_rates()?;
    let profile = AggressivenessProfile::new(r.clone(), rho.clone(), holding.clone(), sleep)?;
    let continuous = run_continuous(
        graph,
        &profile,
        traffic,
        config.duration_s,
        config.seed,
        SimOptions::default(),
    )?;
    let slotted_config = config.slotted.to_config(config.slotted.contention_mode());
    let companion = run_slotted(
        graph,
        &profile,
        traffic,
        &slotted_config,
        config.duration_s,
        config.seed,
    )?;
    let metrics = &continuous.metrics;
    let goodput = metrics
        .packets_delivered
        .iter()
        .zip(&holding)
        .map(|(&n, &h)| n as f64 / (metrics.duration * h))
        .collect();
    Ok(SchemeReport {
        scheme: scheme.name(),
        r,
        rho,
        throughput: metrics.s_hat.clone(),
        total_throughput: metrics.s_hat.iter().sum(),
        goodput,
        awake_fraction: metrics.f_hat.clone(),
        energy_per_packet_j: csma_sleep::simcore::energy_per_packet(metrics, power)?,
        collision_probability: companion.collision_probability(),
        queue_growth: backlog_grows(&metrics.queue_final, &metrics.arrivals),
    })
}

fn compare(config: &ScenarioConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let schemes = match &config.compare {
        Some(block) if block.schemes.len() >= 2 => block.schemes.clone(),
        Some(_) => {
            return Err(Error::ConfigError("compare.schemes: list at least two schemes".into()))
        }
        None => {
            return Err(Error::ConfigError("compare: required for the compare subcommand".into()))
        }
    };
    let graph = config.graph()?;
    let index = build_state_index(&graph)?;
    let traffic = traffic_spec(config)?;
    let lambda = config.lambda_vec()?;
    let power = config.power.to_model()?;
    let k = graph.link_count();

    let mut reports = Vec::new();
    for scheme in schemes {
        let report = match scheme {
            Scheme::Proposed => {
                let result = solve_for(&index, &traffic, config)?;
                require_converged(&result)?;
                queueing_scheme_report(
                    scheme,
                    config,
                    &graph,
                    &traffic,
                    result.r_star,
                    result.rho_star,
                    config.sleep_rates()?,
                    &power,
                )?
            }
            Scheme::AdaptiveCsma => {
                // Same load, never sleeps: the awake target saturates and
                // the sleep budget outlasts the run.
                let awake =
                    TrafficSpec::with_awake_target(lambda.clone(), vec![ALWAYS_AWAKE; k])?;
                let result = solve_for(&index, &awake, config)?;
                require_converged(&result)?;
                queueing_scheme_report(
                    scheme,
                    config,
                    &graph,
                    &awake,
                    result.r_star,
                    result.rho_star,
                    vec![ADAPTIVE_SLEEP_RATE; k],
                    &power,
                )?
            }
            Scheme::Dcf => {
                let (_, _, metrics) = run_dcf_best(config, &graph)?;
                let holding = shared_holding_rate(config)?;
                let per_link =
                    metrics.s_hat.iter().sum::<f64>() / k as f64;
                let mean_lambda = lambda.iter().sum::<f64>() / k as f64;
                let goodput = metrics
                    .packets_delivered
                    .iter()
                    .map(|&n| n as f64 / (metrics.duration * holding))
                    .collect();
                SchemeReport {
                    scheme: scheme.name(),
                    r: Vec::new(),
                    rho: Vec::new(),
                    throughput: metrics.s_hat.clone(),
                    total_throughput: metrics.s_hat.iter().sum(),
                    goodput,
                    awake_fraction: metrics.f_hat.clone(),
                    energy_per_packet_j: metrics.energy_per_packet(&power)?,
                    collision_probability: metrics.collision_probability(),
                    queue_growth: mean_lambda > per_link,
                }
            }
        };
        reports.push(report);
    }

    let deltas = reports[1..]
        .iter()
        .map(|report| SchemeDelta {
            scheme: report.scheme,
            total_throughput: report.total_throughput - reports[0].total_throughput,
            mean_energy_per_packet_j: mean(&report.energy_per_packet_j)
                - mean(&reports[0].energy_per_packet_j),
            collision_probability: report.collision_probability
                - reports[0].collision_probability,
        })
        .collect();

    let mut summary = Summary::new("compare", config.seed, k);
    summary.comparison = Some(Comparison { schemes: reports, deltas_vs_first: deltas });
    Ok(vec![summary.write(out)?])
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Boundary point of the capacity region along `direction`, by bisection
/// on the strict-feasibility program.
fn capacity_boundary(
    index: &StateIndex,
    direction: &[f64],
) -> Result<Vec<f64>> {
    let k = index.link_count();
    let mut lo = 0.0f64;
    let mut hi = k as f64 + 1.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let lambda: Vec<f64> = direction.iter().map(|&d| mid * d).collect();
        let feasible =
            feasibility_margin(index, &lambda, None)?.verdict != FeasibilityVerdict::Infeasible;
        if feasible {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(direction.iter().map(|&d| lo * d).collect())
}

fn capacity_directions(links: usize, samples: usize) -> Vec<Vec<f64>> {
    match links {
        1 => vec![vec![1.0]],
        2 => {
            let n = samples.max(2);
            (0..n)
                .map(|i| {
                    let theta = i as f64 / (n - 1) as f64 * std::f64::consts::FRAC_PI_2;
                    vec![theta.cos(), theta.sin()]
                })
                .collect()
        }
        _ => {
            // Simplex grid over the direction components.
            let mut m = 1usize;
            while (m + 1) * (m + 2) / 2 < samples {
                m += 1;
            }
            let mut directions = Vec::new();
            for i in 0..=m {
                for j in 0..=(m - i) {
                    let l = m - i - j;
                    directions.push(vec![
                        i as f64 / m as f64,
                        j as f64 / m as f64,
                        l as f64 / m as f64,
                    ]);
                }
            }
            directions
        }
    }
}

fn csv_point(kind: &str, point: &[f64]) -> String {
    let mut fields = vec![kind.to_string()];
    for i in 0..3 {
        fields.push(point.get(i).map(|v| v.to_string()).unwrap_or_default());
    }
    fields.join(",") + "\n"
}

fn region(config: &ScenarioConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let graph = config.graph()?;
    let k = graph.link_count();
    if k > 3 {
        return Err(Error::SizeLimitExceeded { states: 1 << k, cap: 8 });
    }
    let index = build_state_index(&graph)?;

    let mut csv = String::from("kind,x,y,z\n");
    let mut capacity_samples = 0usize;
    for direction in capacity_directions(k, config.region.samples) {
        if direction.iter().all(|&d| d == 0.0) {
            continue;
        }
        let point = capacity_boundary(&index, &direction)?;
        csv.push_str(&csv_point("capacity_boundary", &point));
        capacity_samples += 1;
    }

    let mut awake_box_rows = 0usize;
    if config.lambda.is_some() {
        let lambda = config.lambda_vec()?;
        csv.push_str(&csv_point("offered_load", &lambda));
        awake_box_rows += 1;
        let corners: Vec<Vec<f64>> = match k {
            1 => vec![vec![lambda[0]], vec![1.0]],
            // Closed polyline around the admissible awake-fraction box.
            2 => vec![
                vec![lambda[0], lambda[1]],
                vec![1.0, lambda[1]],
                vec![1.0, 1.0],
                vec![lambda[0], 1.0],
                vec![lambda[0], lambda[1]],
            ],
            _ => (0..8u32)
                .map(|bits| {
                    (0..3)
                        .map(|i| if bits & (1 << i) != 0 { 1.0 } else { lambda[i] })
                        .collect()
                })
                .collect(),
        };
        for corner in corners {
            csv.push_str(&csv_point("awake_box", &corner));
            awake_box_rows += 1;
        }
    }

    let csv_path = out.join("region.csv");
    output::write_file(&csv_path, &csv)?;

    let mut summary = Summary::new("region", config.seed, k);
    summary.region = Some(RegionReport {
        capacity_samples,
        awake_box_rows,
        csv: "region.csv".into(),
    });
    Ok(vec![summary.write(out)?, csv_path])
}

fn experiment(config: &ScenarioConfig, out: &Path, trace: bool) -> Result<Vec<PathBuf>> {
    let graph = config.graph()?;
    let traffic = traffic_spec(config)?;
    let holding = config.holding_rates()?;
    let sleep = config.sleep_rates()?;
    let power = config.power.to_model()?;
    let (r, rho) = zeros_profile(config)?;
    let profile = AggressivenessProfile::new(r, rho, holding, sleep)?;
    let block = config.adaptation.clone().unwrap_or_default();
    let adaptation = block.to_config()?;
    let options = AdaptiveOptions {
        use_true_lambda: block.use_true_lambda,
        record_every: block.record_every,
        sim: SimOptions { record_trace: trace },
    };
    let outcome = run_adaptive(
        &graph,
        &profile,
        &traffic,
        config.duration_s,
        config.seed,
        &adaptation,
        options,
    )?;

    let mut summary = Summary::new("experiment", config.seed, graph.link_count());
    summary.run = Some(RunReport::from_continuous(
        &outcome.metrics,
        &outcome.final_r,
        &outcome.final_rho,
        &power,
    ));
    summary.adaptation = Some(AdaptationReport::from_frames(
        &outcome.frames,
        outcome.final_r.clone(),
        outcome.final_rho.clone(),
        config.duration_s,
        graph.link_count(),
    ));

    let timeseries = out.join("timeseries.csv");
    output::write_timeseries(&timeseries, &outcome.frames)?;
    let mut files = vec![summary.write(out)?, timeseries];
    if let Some(log) = &outcome.trace {
        let path = out.join("trace.csv");
        output::write_trace(&path, log)?;
        files.push(path);
    }
    Ok(files)
}
