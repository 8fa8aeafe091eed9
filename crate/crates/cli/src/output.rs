//! Machine-readable outputs: one summary JSON per run plus plot-ready CSV
//! files. Content is fully determined by the scenario and seed.

use std::fs;
use std::path::{Path, PathBuf};

use csma_sleep::adaptation::FrameRecord;
use csma_sleep::simcore::{PowerModel, RunMetrics, TraceLog};
use csma_sleep::slotted::SlottedMetrics;
use csma_sleep::{Error, Result};
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct Summary {
    pub mode: &'static str,
    pub status: String,
    pub seed: u64,
    pub links: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<Analysis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimization: Option<Optimization>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collisions: Option<CollisionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adaptation: Option<AdaptationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dcf: Option<DcfReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionReport>,
}

impl Summary {
    pub fn new(mode: &'static str, seed: u64, links: usize) -> Self {
        Self {
            mode,
            status: "ok".into(),
            seed,
            links,
            analysis: None,
            optimization: None,
            run: None,
            collisions: None,
            adaptation: None,
            dcf: None,
            comparison: None,
            region: None,
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("summary.json");
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::ConfigError(format!("summary serialization: {e}")))?;
        text.push('\n');
        write_file(&path, &text)?;
        Ok(path)
    }
}

#[derive(Debug, Serialize)]
pub struct StateRow {
    /// Links awake in this state.
    pub awake: Vec<usize>,
    /// Links transmitting in this state.
    pub transmitting: Vec<usize>,
    pub probability: f64,
}

#[derive(Debug, Serialize)]
pub struct Analysis {
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
    pub state_count: usize,
    pub log_partition: f64,
    pub detailed_balance_residual: f64,
    pub states: Vec<StateRow>,
    pub throughput: Vec<f64>,
    pub awake_fraction: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Optimization {
    pub status: &'static str,
    pub r_star: Vec<f64>,
    pub rho_star: Vec<f64>,
    pub kkt_residual: f64,
    pub objective_value: f64,
    pub iterations: usize,
    /// Exact stationary marginals at the returned point.
    pub throughput: Vec<f64>,
    pub awake_fraction: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct EnergyRow {
    pub sleep_j: f64,
    pub sense_j: f64,
    pub transmit_j: f64,
    pub total_j: f64,
    /// Joules per delivered packet; absent when nothing was delivered.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_packet_j: Option<f64>,
    /// Transmit energy burned on collided airtime.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wasted_on_collisions_j: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub duration_s: f64,
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
    pub s_hat: Vec<f64>,
    pub f_hat: Vec<f64>,
    pub q_average: Vec<f64>,
    pub arrivals: Vec<u64>,
    pub packets_delivered: Vec<u64>,
    pub dummy_packets: Vec<u64>,
    pub queue_final: Vec<u64>,
    pub energy: Vec<EnergyRow>,
}

impl RunReport {
    pub fn from_continuous(
        metrics: &RunMetrics,
        r: &[f64],
        rho: &[f64],
        power: &PowerModel,
    ) -> Self {
        let breakdown = metrics.energy_breakdown(power);
        let energy = breakdown
            .iter()
            .zip(&metrics.packets_delivered)
            .map(|(b, &delivered)| EnergyRow {
                sleep_j: b.sleep_joules,
                sense_j: b.sense_joules,
                transmit_j: b.transmit_joules,
                total_j: b.total(),
                per_packet_j: (delivered > 0).then(|| b.total() / delivered as f64),
                wasted_on_collisions_j: None,
            })
            .collect();
        Self {
            duration_s: metrics.duration,
            r: r.to_vec(),
            rho: rho.to_vec(),
            s_hat: metrics.s_hat.clone(),
            f_hat: metrics.f_hat.clone(),
            q_average: metrics.q_average.clone(),
            arrivals: metrics.arrivals.clone(),
            packets_delivered: metrics.packets_delivered.clone(),
            dummy_packets: metrics.dummy_packets.clone(),
            queue_final: metrics.queue_final.clone(),
            energy,
        }
    }

    pub fn from_slotted(
        metrics: &SlottedMetrics,
        r: &[f64],
        rho: &[f64],
        power: &PowerModel,
    ) -> Self {
        let breakdown = metrics.energy_breakdown(power);
        let energy = breakdown
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let delivered = metrics.packets_delivered[k];
                let wasted =
                    metrics.time_transmitting[k] - metrics.s_hat[k] * metrics.duration;
                EnergyRow {
                    sleep_j: b.sleep_joules,
                    sense_j: b.sense_joules,
                    transmit_j: b.transmit_joules,
                    total_j: b.total(),
                    per_packet_j: (delivered > 0).then(|| b.total() / delivered as f64),
                    wasted_on_collisions_j: Some(power.p_transmit * wasted.max(0.0)),
                }
            })
            .collect();
        Self {
            duration_s: metrics.duration,
            r: r.to_vec(),
            rho: rho.to_vec(),
            s_hat: metrics.s_hat.clone(),
            f_hat: metrics.f_hat.clone(),
            q_average: metrics.q_average.clone(),
            arrivals: metrics.arrivals.clone(),
            packets_delivered: metrics.packets_delivered.clone(),
            dummy_packets: metrics.dummy_successes.clone(),
            queue_final: metrics.queue_final.clone(),
            energy,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct CollisionReport {
    pub per_link_delivered: Vec<u64>,
    pub per_link_collided: Vec<u64>,
    pub per_link_dummy: Vec<u64>,
    pub real_packets_lost: Vec<u64>,
    pub attempts: Vec<u64>,
    pub collision_events: u64,
    /// Collided transmissions over all transmissions.
    pub collision_probability: f64,
}

impl CollisionReport {
    pub fn from_metrics(metrics: &SlottedMetrics) -> Self {
        Self {
            per_link_delivered: metrics.packets_delivered.clone(),
            per_link_collided: metrics.packets_collided.clone(),
            per_link_dummy: metrics.dummy_successes.clone(),
            real_packets_lost: metrics.real_packets_lost.clone(),
            attempts: metrics.attempts.clone(),
            collision_events: metrics.collision_events,
            collision_probability: metrics.collision_probability(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct AdaptationReport {
    pub frames_recorded: usize,
    pub final_r: Vec<f64>,
    pub final_rho: Vec<f64>,
    /// Time averages over the trailing fifth of the run.
    pub tail_r: Vec<f64>,
    pub tail_rho: Vec<f64>,
    pub tail_window_s: f64,
}

impl AdaptationReport {
    pub fn from_frames(
        frames: &[FrameRecord],
        final_r: Vec<f64>,
        final_rho: Vec<f64>,
        duration: f64,
        links: usize,
    ) -> Self {
        let cutoff = duration * 0.8;
        let tail: Vec<&FrameRecord> = frames.iter().filter(|f| f.time > cutoff).collect();
        let n = tail.len().max(1) as f64;
        let mut tail_r = vec![0.0; links];
        let mut tail_rho = vec![0.0; links];
        for frame in &tail {
            for k in 0..links {
                tail_r[k] += frame.r[k] / n;
                tail_rho[k] += frame.rho[k] / n;
            }
        }
        Self {
            frames_recorded: frames.len(),
            final_r,
            final_rho,
            tail_r,
            tail_rho,
            tail_window_s: duration - cutoff,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DcfRow {
    pub cw0: u32,
    pub per_link_throughput: f64,
    pub total_throughput: f64,
    pub collision_probability: f64,
}

#[derive(Debug, Serialize)]
pub struct DcfReport {
    pub sweep: Vec<DcfRow>,
    pub best_cw0: u32,
    pub best_per_link_throughput: f64,
    /// Offered load exceeds the saturated capacity, so queues grow
    /// without bound; absent when no load was configured.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queue_growth: Option<bool>,
}

#[derive(Debug, Serialize)]
pub struct SchemeReport {
    pub scheme: &'static str,
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
    /// Successful airtime fraction per link.
    pub throughput: Vec<f64>,
    pub total_throughput: f64,
    /// Delivered packets normalized by duration and payload rate.
    pub goodput: Vec<f64>,
    pub awake_fraction: Vec<f64>,
    pub energy_per_packet_j: Vec<f64>,
    pub collision_probability: f64,
    pub queue_growth: bool,
}

#[derive(Debug, Serialize)]
pub struct SchemeDelta {
    pub scheme: &'static str,
    pub total_throughput: f64,
    pub mean_energy_per_packet_j: f64,
    pub collision_probability: f64,
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub schemes: Vec<SchemeReport>,
    /// Differences against the first listed scheme.
    pub deltas_vs_first: Vec<SchemeDelta>,
}

#[derive(Debug, Serialize)]
pub struct RegionReport {
    pub capacity_samples: usize,
    pub awake_box_rows: usize,
    pub csv: String,
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| Error::ConfigError(format!("out {}: {e}", parent.display())))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::ConfigError(format!("{}: {e}", path.display())))
}

/// Frame records as plot-ready rows, one per (frame, link).
pub fn write_timeseries(path: &Path, frames: &[FrameRecord]) -> Result<()> {
    let mut text = String::from("frame,time_s,link,r,rho,s_hat,f_hat,q_average,lambda_used,omega\n");
    for frame in frames {
        for k in 0..frame.r.len() {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                frame.frame_index,
                frame.time,
                k,
                frame.r[k],
                frame.rho[k],
                frame.s_measured[k],
                frame.f_measured[k],
                frame.q_average[k],
                frame.lambda_used[k],
                frame.omega[k],
            ));
        }
    }
    write_file(path, &text)
}

/// One row per link for open-loop runs, mirroring the adaptive layout.
pub fn write_flat_timeseries(path: &Path, report: &RunReport) -> Result<()> {
    let mut text = String::from("frame,time_s,link,r,rho,s_hat,f_hat,q_average,lambda_used,omega\n");
    for k in 0..report.r.len() {
        text.push_str(&format!(
            "0,{},{},{},{},{},{},{},,\n",
            report.duration_s,
            k,
            report.r[k],
            report.rho[k],
            report.s_hat[k],
            report.f_hat[k],
            report.q_average[k],
        ));
    }
    write_file(path, &text)
}

pub fn write_trace(path: &Path, trace: &TraceLog) -> Result<()> {
    let mut text = String::from("time_s,link,event,queue_len\n");
    for event in &trace.events {
        text.push_str(&format!(
            "{},{},{},{}\n",
            event.time,
            event.link,
            event.kind.label(),
            event.queue_len
        ));
    }
    write_file(path, &text)
}
