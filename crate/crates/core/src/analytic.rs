//! Exact stationary analysis of the sleep-enabled CSMA chain.
//!
//! With wake rate S_k e^{rho_k}, sleep rate S_k, back-off rate H_k e^{r_k}
//! and holding rate H_k, the chain over (awake pattern, transmitting set) is
//! reversible and its stationary probability factorizes:
//!
//!   pi(a, x) = exp(sum_k a_k rho_k + sum_k x_k r_k) / C(r, rho)
//!
//! Only the aggressiveness parameters (r, rho) enter the distribution; the
//! base rates H_k and S_k set the physical time scale. All weights are kept
//! in the log domain and normalized with a max-shifted log-sum-exp so that
//! magnitudes up to |r_k|, |rho_k| = 700 stay representable.

use crate::topology::{ConfigurationState, ConflictGraph, StateIndex, TransmissionState};
use crate::{Error, Result};

/// Per-link timer parameters: transmission aggressiveness r_k = log(R_k/H_k),
/// waking-up aggressiveness rho_k = log(W_k/S_k), and the base rates.
#[derive(Debug, Clone, PartialEq)]
pub struct AggressivenessProfile {
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
    /// 1 / mean channel holding time, per second.
    pub holding_rate: Vec<f64>,
    /// 1 / mean awake-to-sleep timer, per second.
    pub sleep_rate: Vec<f64>,
}

impl AggressivenessProfile {
    pub fn new(
        r: Vec<f64>,
        rho: Vec<f64>,
        holding_rate: Vec<f64>,
        sleep_rate: Vec<f64>,
    ) -> Result<Self> {
        let k = r.len();
        if rho.len() != k || holding_rate.len() != k || sleep_rate.len() != k {
            return Err(Error::ConfigError(format!(
                "parameter vectors disagree on link count: r has {k}, rho {}, holding_rate {}, sleep_rate {}",
                rho.len(),
                holding_rate.len(),
                sleep_rate.len()
            )));
        }
        let profile = Self { r, rho, holding_rate, sleep_rate };
        for k in 0..profile.len() {
            for (name, v) in [("r", profile.r[k]), ("rho", profile.rho[k])] {
                if !v.is_finite() {
                    return Err(Error::ConfigError(format!("{name}[{k}] = {v} is not finite")));
                }
            }
            for (name, v) in [
                ("holding_rate", profile.holding_rate[k]),
                ("sleep_rate", profile.sleep_rate[k]),
                ("back-off rate", profile.backoff_rate(k)),
                ("wake rate", profile.wake_rate(k)),
            ] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::ConfigError(format!(
                        "{name} for link {k} must be positive and finite, got {v}"
                    )));
                }
            }
        }
        Ok(profile)
    }

    /// Profile with unit base rates; enough for stationary analysis, where
    /// only (r, rho) matter.
    pub fn with_unit_rates(r: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        let k = r.len();
        Self::new(r, rho, vec![1.0; k], vec![1.0; k])
    }

    /// All links share the same parameters.
    pub fn uniform(links: usize, r: f64, rho: f64, holding_rate: f64, sleep_rate: f64) -> Result<Self> {
        Self::new(
            vec![r; links],
            vec![rho; links],
            vec![holding_rate; links],
            vec![sleep_rate; links],
        )
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// Back-off timer rate R_k = H_k e^{r_k}.
    pub fn backoff_rate(&self, k: usize) -> f64 {
        self.holding_rate[k] * self.r[k].exp()
    }

    /// Wake timer rate W_k = S_k e^{rho_k}.
    pub fn wake_rate(&self, k: usize) -> f64 {
        self.sleep_rate[k] * self.rho[k].exp()
    }
}

/// Stationary probabilities aligned with a `StateIndex`, plus log C(r, rho).
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    pub probabilities: Vec<f64>,
    pub log_normalizer: f64,
}

/// Sum of v[k] over the set bits of `mask`.
pub(crate) fn mask_dot(mask: u32, v: &[f64]) -> f64 {
    let mut rest = mask;
    let mut sum = 0.0;
    while rest != 0 {
        let k = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        sum += v[k];
    }
    sum
}

fn check_profile_len(profile: &AggressivenessProfile, links: usize) -> Result<()> {
    if profile.len() != links {
        return Err(Error::ConfigError(format!(
            "profile covers {} links but the graph has {links}",
            profile.len()
        )));
    }
    Ok(())
}

/// Unnormalized log weight of a state: sum_k a_k rho_k + sum_k x_k r_k.
pub fn log_weight(
    graph: &ConflictGraph,
    config: ConfigurationState,
    tx: TransmissionState,
    profile: &AggressivenessProfile,
) -> Result<f64> {
    check_profile_len(profile, graph.link_count())?;
    let in_graph = ((1u64 << graph.link_count()) - 1) as u32;
    let outside = (config.awake | tx.transmitting) & !in_graph;
    if outside != 0 {
        return Err(Error::InfeasibleState(format!(
            "state uses links outside the graph (mask {outside:#b})"
        )));
    }
    if tx.transmitting & !config.awake != 0 {
        return Err(Error::InfeasibleState(format!(
            "links {:#b} transmit while asleep",
            tx.transmitting & !config.awake
        )));
    }
    if !graph.is_independent(tx.transmitting) {
        return Err(Error::InfeasibleState(format!(
            "transmitting set {:#b} contains interfering links",
            tx.transmitting
        )));
    }
    Ok(mask_dot(config.awake, &profile.rho) + mask_dot(tx.transmitting, &profile.r))
}

/// Log-normalizer log C(r, rho) without materializing the distribution.
pub(crate) fn log_normalizer(index: &StateIndex, r: &[f64], rho: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &(a, x) in index.states() {
        let lw = mask_dot(a.awake, rho) + mask_dot(x.transmitting, r);
        if lw > max {
            max = lw;
        }
    }
    let mut sum = 0.0;
    for &(a, x) in index.states() {
        let lw = mask_dot(a.awake, rho) + mask_dot(x.transmitting, r);
        sum += (lw - max).exp();
    }
    max + sum.ln()
}

/// Exact stationary distribution over the indexed state space.
pub fn stationary_distribution(
    index: &StateIndex,
    profile: &AggressivenessProfile,
) -> Result<StationaryDistribution> {
    check_profile_len(profile, index.link_count())?;
    let mut weights = vec![0.0f64; index.len()];
    let mut max = f64::NEG_INFINITY;
    for (i, &(a, x)) in index.states().iter().enumerate() {
        let lw = mask_dot(a.awake, &profile.rho) + mask_dot(x.transmitting, &profile.r);
        weights[i] = lw;
        if lw > max {
            max = lw;
        }
    }
    let mut sum = 0.0;
    for w in weights.iter_mut() {
        *w = (*w - max).exp();
        sum += *w;
    }
    for w in weights.iter_mut() {
        *w /= sum;
    }
    Ok(StationaryDistribution { probabilities: weights, log_normalizer: max + sum.ln() })
}

/// Per-link throughput s_k: probability of being awake and transmitting.
/// Works on any distribution aligned with the index (exact or empirical).
pub fn throughput(probabilities: &[f64], index: &StateIndex) -> Vec<f64> {
    let mut s = vec![0.0; index.link_count()];
    for (i, &(_, x)) in index.states().iter().enumerate() {
        let p = probabilities[i];
        let mut rest = x.transmitting;
        while rest != 0 {
            let k = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            s[k] += p;
        }
    }
    s
}

/// Per-link awake fraction: probability of being awake.
pub fn awake_fraction(probabilities: &[f64], index: &StateIndex) -> Vec<f64> {
    let mut f = vec![0.0; index.link_count()];
    for (i, &(a, _)) in index.states().iter().enumerate() {
        let p = probabilities[i];
        let mut rest = a.awake;
        while rest != 0 {
            let k = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            f[k] += p;
        }
    }
    f
}

/// Maximum relative detailed-balance residual over all one-link transitions.
///
/// For a wake transition the stationary ratio must equal e^{rho_k}; for a
/// transmit transition it must equal e^{r_k}. Pairs whose base state has zero
/// probability (possible in empirical occupancy vectors) are skipped.
pub fn detailed_balance_residual(
    probabilities: &[f64],
    index: &StateIndex,
    profile: &AggressivenessProfile,
) -> Result<f64> {
    check_profile_len(profile, index.link_count())?;
    let graph = index.graph();
    let mut worst = 0.0f64;
    for (i, &(a, x)) in index.states().iter().enumerate() {
        let p = probabilities[i];
        if p <= 0.0 {
            continue;
        }
        for k in 0..index.link_count() {
            let bit = 1u32 << k;
            if a.awake & bit == 0 {
                // Wake transition (a, x) -> (a + e_k, x).
                let j = index
                    .position(a.awake | bit, x.transmitting)
                    .expect("waking a link preserves feasibility");
                let target = profile.rho[k].exp();
                let resid = (probabilities[j] / p - target).abs() / target;
                worst = worst.max(resid);
            } else if x.transmitting & bit == 0 && graph.neighbors(k) & x.transmitting == 0 {
                // Transmit transition (a, x) -> (a, x + e_k).
                let j = index
                    .position(a.awake, x.transmitting | bit)
                    .expect("extending an independent set by a non-neighbor is feasible");
                let target = profile.r[k].exp();
                let resid = (probabilities[j] / p - target).abs() / target;
                worst = worst.max(resid);
            }
        }
    }
    Ok(worst)
}
