//! Continuous-time, event-driven simulation of the sleep-enabled CSMA
//! protocol: idealized carrier sensing (collisions impossible), exponential
//! timers with freeze/resume semantics, per-link queues fed by Poisson
//! arrivals, and power/energy accounting.
//!
//! Timer semantics: a sleeping link waits Exp(S_k e^{rho_k}) before waking;
//! an awake link runs a sleep timer Exp(S_k) and a back-off timer
//! Exp(H_k e^{r_k}) in parallel. The back-off timer only runs while no
//! conflict-graph neighbor transmits; the sleep timer only stops during the
//! link's own transmission, which lasts Exp(H_k). Frozen timers keep their
//! remaining time rather than being resampled, so the behavior stays correct
//! even for non-exponential timer plugins later.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::analytic::AggressivenessProfile;
use crate::regions::TrafficSpec;
use crate::topology::{ConfigurationState, ConflictGraph, StateIndex, TransmissionState};
use crate::{Error, Result};

/// What a link is currently doing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkMode {
    Sleeping,
    AwakeBackoff,
    Transmitting,
}

/// Power draw per radio state, in watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerModel {
    /// Sleep-mode draw P_z.
    pub p_sleep: f64,
    /// Transmit draw P_t.
    pub p_transmit: f64,
    /// Idle listening / receive draw P_s = P_r.
    pub p_sense: f64,
}

impl PowerModel {
    pub fn new(p_sleep: f64, p_transmit: f64, p_sense: f64) -> Result<Self> {
        for (name, v) in [("p_sleep", p_sleep), ("p_transmit", p_transmit), ("p_sense", p_sense)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::ConfigError(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(p_sleep <= p_sense && p_sense <= p_transmit) {
            return Err(Error::ConfigError(format!(
                "expected p_sleep <= p_sense <= p_transmit, got {p_sleep}, {p_sense}, {p_transmit}"
            )));
        }
        Ok(Self { p_sleep, p_transmit, p_sense })
    }

    /// Reference low-power radio: P_z = 1.5 uW, P_t = 73 mW, P_s = 45 mW.
    pub fn reference() -> Self {
        Self { p_sleep: 1.5e-6, p_transmit: 73e-3, p_sense: 45e-3 }
    }
}

/// Per-link energy split over a run, in joules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub sleep_joules: f64,
    pub sense_joules: f64,
    pub transmit_joules: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.sleep_joules + self.sense_joules + self.transmit_joules
    }
}

/// Cumulative outcome of a simulation run.
///
/// Duration split: `time_sleeping = duration - awake`, `time_sensing =
/// awake - transmitting`, so the three parts always rebuild the simulated
/// duration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub duration: f64,
    pub event_count: u64,
    /// Fraction of time awake and transmitting (dummy packets included).
    pub s_hat: Vec<f64>,
    /// Fraction of time awake.
    pub f_hat: Vec<f64>,
    /// Time-average queue length.
    pub q_average: Vec<f64>,
    pub packets_delivered: Vec<u64>,
    pub dummy_packets: Vec<u64>,
    pub arrivals: Vec<u64>,
    pub queue_final: Vec<u64>,
    pub time_sleeping: Vec<f64>,
    pub time_sensing: Vec<f64>,
    pub time_transmitting: Vec<f64>,
    /// Time-weighted fraction per visited (configuration, transmission)
    /// state, sorted by state masks.
    pub occupancy: Vec<(ConfigurationState, TransmissionState, f64)>,
}

impl RunMetrics {
    pub fn link_count(&self) -> usize {
        self.s_hat.len()
    }

    pub fn energy_breakdown(&self, power: &PowerModel) -> Vec<EnergyBreakdown> {
        (0..self.link_count())
            .map(|k| EnergyBreakdown {
                sleep_joules: power.p_sleep * self.time_sleeping[k],
                sense_joules: power.p_sense * self.time_sensing[k],
                transmit_joules: power.p_transmit * self.time_transmitting[k],
            })
            .collect()
    }

    /// Occupancy vector aligned with `index`; states never visited get 0.
    pub fn occupancy_vector(&self, index: &StateIndex) -> Result<Vec<f64>> {
        let mut out = vec![0.0; index.len()];
        for &(config, tx, weight) in &self.occupancy {
            let pos = index.position(config.awake, tx.transmitting).ok_or_else(|| {
                Error::InfeasibleState(format!(
                    "visited state (awake {:#b}, tx {:#b}) is not in the index",
                    config.awake, tx.transmitting
                ))
            })?;
            out[pos] = weight;
        }
        Ok(out)
    }
}

/// Joules per delivered packet, per link; dummy transmissions cost energy
/// but deliver nothing.
pub fn energy_per_packet(metrics: &RunMetrics, power: &PowerModel) -> Result<Vec<f64>> {
    let breakdown = metrics.energy_breakdown(power);
    (0..metrics.link_count())
        .map(|k| {
            if metrics.packets_delivered[k] == 0 {
                return Err(Error::NoPackets { link: k });
            }
            Ok(breakdown[k].total() / metrics.packets_delivered[k] as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEventKind {
    Wake,
    Sleep,
    TxStart,
    TxEnd,
    Arrival,
}

impl TraceEventKind {
    pub fn label(&self) -> &'static str {
        match self {
            TraceEventKind::Wake => "WAKE",
            TraceEventKind::Sleep => "SLEEP",
            TraceEventKind::TxStart => "TX_START",
            TraceEventKind::TxEnd => "TX_END",
            TraceEventKind::Arrival => "ARRIVAL",
        }
    }
}

/// One recorded event; `queue_len` is the queue right after the event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    pub time: f64,
    pub link: usize,
    pub kind: TraceEventKind,
    pub queue_len: u64,
}

/// Recorded event sequence of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceLog {
    pub link_count: usize,
    pub duration: f64,
    pub events: Vec<TraceEvent>,
}

/// Time-weighted fraction per (configuration, transmission) state, replayed
/// from a trace. All links start asleep with empty queues.
pub fn empirical_occupancy(trace: &TraceLog, index: &StateIndex) -> Result<Vec<f64>> {
    if trace.events.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let mut out = vec![0.0; index.len()];
    let mut awake = 0u32;
    let mut tx = 0u32;
    let mut last = 0.0;
    let credit = |awake: u32, tx: u32, dt: f64, out: &mut Vec<f64>| -> Result<()> {
        let pos = index.position(awake, tx).ok_or_else(|| {
            Error::InfeasibleState(format!(
                "trace visits state (awake {awake:#b}, tx {tx:#b}) outside the index"
            ))
        })?;
        out[pos] += dt;
        Ok(())
    };
    for event in &trace.events {
        credit(awake, tx, event.time - last, &mut out)?;
        last = event.time;
        let bit = 1u32 << event.link;
        match event.kind {
            TraceEventKind::Wake => awake |= bit,
            TraceEventKind::Sleep => awake &= !bit,
            TraceEventKind::TxStart => tx |= bit,
            TraceEventKind::TxEnd => tx &= !bit,
            TraceEventKind::Arrival => {}
        }
    }
    credit(awake, tx, trace.duration - last, &mut out)?;
    let total: f64 = out.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyTrace);
    }
    for w in &mut out {
        *w /= total;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    /// Record every event; memory grows with event count.
    pub record_trace: bool,
}

/// Totals accumulated since the previous `take_frame` call.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTotals {
    pub start: f64,
    pub elapsed: f64,
    pub time_awake: Vec<f64>,
    pub time_transmitting: Vec<f64>,
    pub queue_integral: Vec<f64>,
    pub arrivals: Vec<u64>,
}

/// Bundled result of `run_continuous`.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub metrics: RunMetrics,
    pub trace: Option<TraceLog>,
}

// Timer kinds double as rng stream offsets and generation slots.
const K_WAKE: usize = 0;
const K_SLEEP: usize = 1;
const K_BACKOFF: usize = 2;
const K_HOLDING: usize = 3;
const K_ARRIVAL: usize = 4;
const KIND_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    WakeExpiry,
    SleepExpiry,
    BackoffExpiry,
    TxEnd,
    Arrival,
}

impl EventKind {
    fn slot(&self) -> usize {
        match self {
            EventKind::WakeExpiry => K_WAKE,
            EventKind::SleepExpiry => K_SLEEP,
            EventKind::BackoffExpiry => K_BACKOFF,
            EventKind::TxEnd => K_HOLDING,
            EventKind::Arrival => K_ARRIVAL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    link: u32,
    kind: EventKind,
    generation: u64,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.link.cmp(&other.link))
            .then((self.kind.slot()).cmp(&other.kind.slot()))
            .then(self.generation.cmp(&other.generation))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Mutable per-link runtime: mode, queue, timers, and cumulative tallies.
#[derive(Debug, Clone)]
struct LinkRuntime {
    mode: LinkMode,
    queue: u64,
    // One generation counter per timer kind; a heap entry is live only if
    // its generation matches, which is how freezes and cancellations work.
    generations: [u64; KIND_COUNT],
    sleep_expiry: f64,
    // Remaining sleep time, valid while TRANSMITTING.
    sleep_frozen: f64,
    backoff_expiry: f64,
    // Remaining back-off time, valid while `backoff_frozen` in AWAKE_BACKOFF.
    backoff_remaining: f64,
    backoff_frozen: bool,
    tx_dummy: bool,
    // Lazy accounting: tallies are exact up to `last_flush`.
    last_flush: f64,
    time_awake: f64,
    time_transmitting: f64,
    queue_integral: f64,
    delivered: u64,
    dummies: u64,
    arrivals: u64,
}

impl LinkRuntime {
    fn new() -> Self {
        Self {
            mode: LinkMode::Sleeping,
            queue: 0,
            generations: [0; KIND_COUNT],
            sleep_expiry: 0.0,
            sleep_frozen: 0.0,
            backoff_expiry: 0.0,
            backoff_remaining: 0.0,
            backoff_frozen: false,
            tx_dummy: false,
            last_flush: 0.0,
            time_awake: 0.0,
            time_transmitting: 0.0,
            queue_integral: 0.0,
            delivered: 0,
            dummies: 0,
            arrivals: 0,
        }
    }

    fn flush(&mut self, now: f64) {
        let dt = now - self.last_flush;
        if dt > 0.0 {
            if self.mode != LinkMode::Sleeping {
                self.time_awake += dt;
            }
            if self.mode == LinkMode::Transmitting {
                self.time_transmitting += dt;
            }
            self.queue_integral += self.queue as f64 * dt;
        }
        self.last_flush = now;
    }
}

/// Event-driven simulator with explicit time control, so online adaptation
/// can interleave measurement frames and parameter updates with the run.
pub struct Simulator {
    graph: ConflictGraph,
    profile: AggressivenessProfile,
    arrival_rate: Vec<f64>,
    links: Vec<LinkRuntime>,
    tx_mask: u32,
    awake_mask: u32,
    now: f64,
    event_count: u64,
    heap: BinaryHeap<Reverse<Event>>,
    rngs: Vec<Vec<ChaCha8Rng>>,
    occupancy: HashMap<(u32, u32), f64>,
    last_state_flush: f64,
    frame_start: f64,
    frame_base_awake: Vec<f64>,
    frame_base_tx: Vec<f64>,
    frame_base_queue: Vec<f64>,
    frame_base_arrivals: Vec<u64>,
    options: SimOptions,
    trace: Vec<TraceEvent>,
}

impl Simulator {
    pub fn new(
        graph: &ConflictGraph,
        profile: &AggressivenessProfile,
        traffic: &TrafficSpec,
        seed: u64,
        options: SimOptions,
    ) -> Result<Self> {
        let k = graph.link_count();
        if profile.len() != k || traffic.len() != k {
            return Err(Error::ConfigError(format!(
                "graph has {k} links but profile covers {} and traffic {}",
                profile.len(),
                traffic.len()
            )));
        }
        let arrival_rate: Vec<f64> =
            (0..k).map(|i| traffic.lambda[i] * profile.holding_rate[i]).collect();
        for (i, &a) in arrival_rate.iter().enumerate() {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::ConfigError(format!(
                    "arrival rate for link {i} must be finite and >= 0, got {a}"
                )));
            }
        }
        let rngs = (0..k)
            .map(|link| {
                (0..KIND_COUNT)
                    .map(|kind| {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream((link * KIND_COUNT + kind) as u64);
                        rng
                    })
                    .collect()
            })
            .collect();
        let mut sim = Self {
            graph: graph.clone(),
            profile: profile.clone(),
            arrival_rate,
            links: (0..k).map(|_| LinkRuntime::new()).collect(),
            tx_mask: 0,
            awake_mask: 0,
            now: 0.0,
            event_count: 0,
            heap: BinaryHeap::new(),
            rngs,
            occupancy: HashMap::new(),
            last_state_flush: 0.0,
            frame_start: 0.0,
            frame_base_awake: vec![0.0; k],
            frame_base_tx: vec![0.0; k],
            frame_base_queue: vec![0.0; k],
            frame_base_arrivals: vec![0; k],
            options,
            trace: Vec::new(),
        };
        for link in 0..k {
            let wait = sim.draw(link, K_WAKE, sim.profile.wake_rate(link));
            sim.schedule(link, EventKind::WakeExpiry, wait);
            if sim.arrival_rate[link] > 0.0 {
                let wait = sim.draw(link, K_ARRIVAL, sim.arrival_rate[link]);
                sim.schedule(link, EventKind::Arrival, wait);
            }
        }
        Ok(sim)
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn link_mode(&self, link: usize) -> LinkMode {
        self.links[link].mode
    }

    pub fn queue_length(&self, link: usize) -> u64 {
        self.links[link].queue
    }

    pub fn profile(&self) -> &AggressivenessProfile {
        &self.profile
    }

    fn draw(&mut self, link: usize, kind: usize, rate: f64) -> f64 {
        debug_assert!(rate > 0.0);
        let exp = Exp::new(rate).expect("rates validated at construction");
        exp.sample(&mut self.rngs[link][kind])
    }

    fn schedule(&mut self, link: usize, kind: EventKind, wait: f64) {
        let slot = kind.slot();
        self.links[link].generations[slot] += 1;
        let generation = self.links[link].generations[slot];
        let time = self.now + wait;
        match kind {
            EventKind::SleepExpiry => self.links[link].sleep_expiry = time,
            EventKind::BackoffExpiry => self.links[link].backoff_expiry = time,
            _ => {}
        }
        self.heap.push(Reverse(Event { time, link: link as u32, kind, generation }));
    }

    fn cancel(&mut self, link: usize, kind: EventKind) {
        self.links[link].generations[kind.slot()] += 1;
    }

    fn is_live(&self, event: &Event) -> bool {
        let link = &self.links[event.link as usize];
        event.generation == link.generations[event.kind.slot()]
    }

    fn flush_state_clock(&mut self, to: f64) {
        let dt = to - self.last_state_flush;
        if dt > 0.0 {
            *self.occupancy.entry((self.awake_mask, self.tx_mask)).or_insert(0.0) += dt;
        }
        self.last_state_flush = to;
    }

    fn record(&mut self, link: usize, kind: TraceEventKind) {
        if self.options.record_trace {
            self.trace.push(TraceEvent {
                time: self.now,
                link,
                kind,
                queue_len: self.links[link].queue,
            });
        }
    }

    /// Process all events up to `t`, then advance the clock to exactly `t`.
    pub fn run_until(&mut self, t: f64) -> Result<()> {
        if !(t.is_finite() && t >= self.now) {
            return Err(Error::ConfigError(format!(
                "target time {t} precedes current time {}",
                self.now
            )));
        }
        while let Some(Reverse(event)) = self.heap.peek().copied() {
            if event.time > t {
                break;
            }
            self.heap.pop();
            if !self.is_live(&event) {
                continue;
            }
            self.flush_state_clock(event.time);
            self.now = event.time;
            self.dispatch(event);
            self.event_count += 1;
        }
        self.flush_state_clock(t);
        self.now = t;
        Ok(())
    }

    fn dispatch(&mut self, event: Event) {
        let k = event.link as usize;
        let bit = 1u32 << k;
        match event.kind {
            EventKind::WakeExpiry => {
                debug_assert_eq!(self.links[k].mode, LinkMode::Sleeping);
                self.links[k].flush(self.now);
                self.links[k].mode = LinkMode::AwakeBackoff;
                self.awake_mask |= bit;
                let sleep_wait = self.draw(k, K_SLEEP, self.profile.sleep_rate[k]);
                self.schedule(k, EventKind::SleepExpiry, sleep_wait);
                let backoff_wait = self.draw(k, K_BACKOFF, self.profile.backoff_rate(k));
                if self.tx_mask & self.graph.neighbors(k) == 0 {
                    self.links[k].backoff_frozen = false;
                    self.schedule(k, EventKind::BackoffExpiry, backoff_wait);
                } else {
                    self.links[k].backoff_frozen = true;
                    self.links[k].backoff_remaining = backoff_wait;
                }
                self.record(k, TraceEventKind::Wake);
            }
            EventKind::SleepExpiry => {
                debug_assert_eq!(self.links[k].mode, LinkMode::AwakeBackoff);
                self.links[k].flush(self.now);
                self.links[k].mode = LinkMode::Sleeping;
                self.awake_mask &= !bit;
                self.cancel(k, EventKind::BackoffExpiry);
                self.links[k].backoff_frozen = false;
                let wait = self.draw(k, K_WAKE, self.profile.wake_rate(k));
                self.schedule(k, EventKind::WakeExpiry, wait);
                self.record(k, TraceEventKind::Sleep);
            }
            EventKind::BackoffExpiry => {
                debug_assert_eq!(self.links[k].mode, LinkMode::AwakeBackoff);
                debug_assert_eq!(self.tx_mask & self.graph.neighbors(k), 0, "carrier sensing");
                self.links[k].flush(self.now);
                self.links[k].mode = LinkMode::Transmitting;
                self.links[k].tx_dummy = self.links[k].queue == 0;
                // Freeze own sleep timer for the duration of the burst.
                self.links[k].sleep_frozen = (self.links[k].sleep_expiry - self.now).max(0.0);
                self.cancel(k, EventKind::SleepExpiry);
                self.tx_mask |= bit;
                self.freeze_neighbor_backoffs(k);
                let hold = self.draw(k, K_HOLDING, self.profile.holding_rate[k]);
                self.schedule(k, EventKind::TxEnd, hold);
                self.record(k, TraceEventKind::TxStart);
            }
            EventKind::TxEnd => {
                debug_assert_eq!(self.links[k].mode, LinkMode::Transmitting);
                self.links[k].flush(self.now);
                self.links[k].mode = LinkMode::AwakeBackoff;
                self.tx_mask &= !bit;
                if self.links[k].tx_dummy {
                    self.links[k].dummies += 1;
                } else {
                    self.links[k].queue -= 1;
                    self.links[k].delivered += 1;
                }
                let remaining = self.links[k].sleep_frozen;
                self.schedule(k, EventKind::SleepExpiry, remaining);
                let backoff_wait = self.draw(k, K_BACKOFF, self.profile.backoff_rate(k));
                if self.tx_mask & self.graph.neighbors(k) == 0 {
                    self.links[k].backoff_frozen = false;
                    self.schedule(k, EventKind::BackoffExpiry, backoff_wait);
                } else {
                    self.links[k].backoff_frozen = true;
                    self.links[k].backoff_remaining = backoff_wait;
                }
                self.resume_neighbor_backoffs(k);
                self.record(k, TraceEventKind::TxEnd);
            }
            EventKind::Arrival => {
                self.links[k].flush(self.now);
                self.links[k].queue += 1;
                self.links[k].arrivals += 1;
                let wait = self.draw(k, K_ARRIVAL, self.arrival_rate[k]);
                self.schedule(k, EventKind::Arrival, wait);
                self.record(k, TraceEventKind::Arrival);
            }
        }
    }

    fn freeze_neighbor_backoffs(&mut self, transmitter: usize) {
        let mut rest = self.graph.neighbors(transmitter);
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if self.links[j].mode == LinkMode::AwakeBackoff && !self.links[j].backoff_frozen {
                self.links[j].backoff_remaining = (self.links[j].backoff_expiry - self.now).max(0.0);
                self.links[j].backoff_frozen = true;
                self.cancel(j, EventKind::BackoffExpiry);
            }
        }
    }

    fn resume_neighbor_backoffs(&mut self, transmitter: usize) {
        let mut rest = self.graph.neighbors(transmitter);
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if self.links[j].mode == LinkMode::AwakeBackoff
                && self.links[j].backoff_frozen
                && self.tx_mask & self.graph.neighbors(j) == 0
            {
                self.links[j].backoff_frozen = false;
                let remaining = self.links[j].backoff_remaining;
                self.schedule(j, EventKind::BackoffExpiry, remaining);
            }
        }
    }

    /// Swap in new aggressiveness parameters mid-run. Transmitting links are
    /// untouched; back-off timers restart from a draw at the new rate (still
    /// frozen if the channel is busy); sleeping links redraw the wake timer.
    /// Remaining sleep-timer time is preserved since S_k does not change.
    pub fn set_aggressiveness(&mut self, r: &[f64], rho: &[f64]) -> Result<()> {
        let profile = AggressivenessProfile::new(
            r.to_vec(),
            rho.to_vec(),
            self.profile.holding_rate.clone(),
            self.profile.sleep_rate.clone(),
        )?;
        if profile.len() != self.links.len() {
            return Err(Error::ConfigError(format!(
                "expected {} links, got {}",
                self.links.len(),
                profile.len()
            )));
        }
        self.profile = profile;
        for k in 0..self.links.len() {
            match self.links[k].mode {
                LinkMode::Transmitting => {}
                LinkMode::AwakeBackoff => {
                    let wait = self.draw(k, K_BACKOFF, self.profile.backoff_rate(k));
                    if self.links[k].backoff_frozen {
                        self.links[k].backoff_remaining = wait;
                    } else {
                        self.schedule(k, EventKind::BackoffExpiry, wait);
                    }
                }
                LinkMode::Sleeping => {
                    let wait = self.draw(k, K_WAKE, self.profile.wake_rate(k));
                    self.schedule(k, EventKind::WakeExpiry, wait);
                }
            }
        }
        Ok(())
    }

    /// Totals since the previous call (or since the start of the run).
    pub fn take_frame(&mut self) -> FrameTotals {
        for link in &mut self.links {
            link.flush(self.now);
        }
        let k = self.links.len();
        let mut totals = FrameTotals {
            start: self.frame_start,
            elapsed: self.now - self.frame_start,
            time_awake: Vec::with_capacity(k),
            time_transmitting: Vec::with_capacity(k),
            queue_integral: Vec::with_capacity(k),
            arrivals: Vec::with_capacity(k),
        };
        for (i, link) in self.links.iter().enumerate() {
            totals.time_awake.push(link.time_awake - self.frame_base_awake[i]);
            totals.time_transmitting.push(link.time_transmitting - self.frame_base_tx[i]);
            totals.queue_integral.push(link.queue_integral - self.frame_base_queue[i]);
            totals.arrivals.push(link.arrivals - self.frame_base_arrivals[i]);
            self.frame_base_awake[i] = link.time_awake;
            self.frame_base_tx[i] = link.time_transmitting;
            self.frame_base_queue[i] = link.queue_integral;
            self.frame_base_arrivals[i] = link.arrivals;
        }
        self.frame_start = self.now;
        totals
    }

    /// Cumulative metrics up to the current time.
    pub fn metrics(&mut self) -> RunMetrics {
        for link in &mut self.links {
            link.flush(self.now);
        }
        self.flush_state_clock(self.now);
        let duration = self.now;
        let k = self.links.len();
        let mut occupancy: Vec<(ConfigurationState, TransmissionState, f64)> = self
            .occupancy
            .iter()
            .map(|(&(awake, tx), &t)| {
                (
                    ConfigurationState { awake },
                    TransmissionState { transmitting: tx },
                    if duration > 0.0 { t / duration } else { 0.0 },
                )
            })
            .collect();
        occupancy.sort_by_key(|&(c, x, _)| (c.awake, x.transmitting));
        let mut metrics = RunMetrics {
            duration,
            event_count: self.event_count,
            s_hat: Vec::with_capacity(k),
            f_hat: Vec::with_capacity(k),
            q_average: Vec::with_capacity(k),
            packets_delivered: Vec::with_capacity(k),
            dummy_packets: Vec::with_capacity(k),
            arrivals: Vec::with_capacity(k),
            queue_final: Vec::with_capacity(k),
            time_sleeping: Vec::with_capacity(k),
            time_sensing: Vec::with_capacity(k),
            time_transmitting: Vec::with_capacity(k),
            occupancy,
        };
        for link in &self.links {
            let awake = link.time_awake;
            let tx = link.time_transmitting;
            metrics.s_hat.push(if duration > 0.0 { tx / duration } else { 0.0 });
            metrics.f_hat.push(if duration > 0.0 { awake / duration } else { 0.0 });
            metrics.q_average.push(if duration > 0.0 { link.queue_integral / duration } else { 0.0 });
            metrics.packets_delivered.push(link.delivered);
            metrics.dummy_packets.push(link.dummies);
            metrics.arrivals.push(link.arrivals);
            metrics.queue_final.push(link.queue);
            metrics.time_sleeping.push(duration - awake);
            metrics.time_sensing.push(awake - tx);
            metrics.time_transmitting.push(tx);
        }
        metrics
    }

    pub fn into_trace(self) -> TraceLog {
        TraceLog { link_count: self.links.len(), duration: self.now, events: self.trace }
    }
}

/// Run the protocol for `duration` seconds from an all-asleep start.
pub fn run_continuous(
    graph: &ConflictGraph,
    profile: &AggressivenessProfile,
    traffic: &TrafficSpec,
    duration: f64,
    seed: u64,
    options: SimOptions,
) -> Result<SimOutput> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::ConfigError(format!("duration must be positive, got {duration}")));
    }
    let mut sim = Simulator::new(graph, profile, traffic, seed, options)?;
    sim.run_until(duration)?;
    let metrics = sim.metrics();
    let trace = if options.record_trace { Some(sim.into_trace()) } else { None };
    Ok(SimOutput { metrics, trace })
}
