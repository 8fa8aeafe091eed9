//! Conflict graphs and enumeration of the joint state space.
//!
//! A state of the network is a pair (a, x): the configuration `a` says which
//! links are awake, the transmission state `x` says which links are
//! transmitting. `x` must be a subset of `a` and an independent set of the
//! conflict graph. States are stored as bit masks (bit k = link k) and
//! enumerated in binary-counting order so indices are reproducible.

use std::collections::HashMap;

use crate::{Error, Result};

/// Hard ceiling on the joint state count for exact enumeration.
pub const DEFAULT_STATE_CAP: u64 = 1 << 20;

/// Representation limit: masks are u32, so at most 32 links.
pub const MAX_LINKS: usize = 32;

/// Undirected conflict graph on `link_count` links. An edge (i, j) means
/// links i and j interfere and may never transmit simultaneously.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictGraph {
    link_count: usize,
    adjacency: Vec<u32>,
    edges: Vec<(usize, usize)>,
}

impl ConflictGraph {
    /// Builds a graph from an edge list. Edges are unordered; duplicates
    /// collapse. Self-loops and out-of-range endpoints are rejected.
    pub fn new(link_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if link_count == 0 {
            return Err(Error::ConfigError("link_count must be at least 1".into()));
        }
        if link_count > MAX_LINKS {
            return Err(Error::ConfigError(format!(
                "link_count {link_count} exceeds the representation limit of {MAX_LINKS}"
            )));
        }
        let mut adjacency = vec![0u32; link_count];
        for &(i, j) in edges {
            if i >= link_count || j >= link_count {
                return Err(Error::ConfigError(format!(
                    "edge ({i}, {j}) references a link >= link_count {link_count}"
                )));
            }
            if i == j {
                return Err(Error::ConfigError(format!("edge ({i}, {j}) is a self-loop")));
            }
            adjacency[i] |= 1 << j;
            adjacency[j] |= 1 << i;
        }
        let mut canonical = Vec::new();
        for i in 0..link_count {
            for j in (i + 1)..link_count {
                if adjacency[i] & (1 << j) != 0 {
                    canonical.push((i, j));
                }
            }
        }
        Ok(Self { link_count, adjacency, edges: canonical })
    }

    /// Complete graph: a single collision domain, every pair interferes.
    pub fn complete(link_count: usize) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..link_count {
            for j in (i + 1)..link_count {
                edges.push((i, j));
            }
        }
        Self::new(link_count, &edges)
    }

    pub fn link_count(&self) -> usize {
        self.link_count
    }

    /// Edges in canonical (i < j, lexicographic) order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbor set of link k as a bit mask.
    pub fn neighbors(&self, k: usize) -> u32 {
        self.adjacency[k]
    }

    pub fn are_adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i] & (1 << j) != 0
    }

    /// True if `set` contains no pair of interfering links.
    pub fn is_independent(&self, set: u32) -> bool {
        let mut rest = set;
        while rest != 0 {
            let k = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if self.adjacency[k] & set != 0 {
                return false;
            }
        }
        true
    }
}

/// Awake pattern of all links: bit k set means link k is awake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConfigurationState {
    pub awake: u32,
}

impl ConfigurationState {
    pub fn is_awake(&self, k: usize) -> bool {
        self.awake & (1 << k) != 0
    }

    pub fn awake_count(&self) -> u32 {
        self.awake.count_ones()
    }
}

/// Transmitting set: bit k set means link k is transmitting. Always a subset
/// of the paired configuration and independent in the conflict graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransmissionState {
    pub transmitting: u32,
}

impl TransmissionState {
    pub fn is_transmitting(&self, k: usize) -> bool {
        self.transmitting & (1 << k) != 0
    }
}

/// Dense index of every feasible (configuration, transmission) pair, in
/// binary-counting order on the configuration and then the transmission mask.
#[derive(Debug, Clone)]
pub struct StateIndex {
    graph: ConflictGraph,
    states: Vec<(ConfigurationState, TransmissionState)>,
    lookup: HashMap<(u32, u32), usize>,
    config_offsets: Vec<usize>,
}

impl StateIndex {
    pub fn graph(&self) -> &ConflictGraph {
        &self.graph
    }

    pub fn link_count(&self) -> usize {
        self.graph.link_count
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[(ConfigurationState, TransmissionState)] {
        &self.states
    }

    pub fn state(&self, idx: usize) -> (ConfigurationState, TransmissionState) {
        self.states[idx]
    }

    /// Dense index of a state, if it is feasible.
    pub fn position(&self, awake: u32, transmitting: u32) -> Option<usize> {
        self.lookup.get(&(awake, transmitting)).copied()
    }

    /// Half-open range of state indices sharing configuration mask `awake`.
    /// Configurations are contiguous because enumeration is config-major.
    pub fn config_range(&self, awake: u32) -> std::ops::Range<usize> {
        let j = awake as usize;
        self.config_offsets[j]..self.config_offsets[j + 1]
    }
}

/// All 2^K awake patterns in binary-counting order.
pub fn enumerate_configurations(graph: &ConflictGraph) -> Result<Vec<ConfigurationState>> {
    enumerate_configurations_with_cap(graph, DEFAULT_STATE_CAP)
}

pub fn enumerate_configurations_with_cap(
    graph: &ConflictGraph,
    cap: u64,
) -> Result<Vec<ConfigurationState>> {
    let count = 1u64 << graph.link_count;
    if count > cap {
        return Err(Error::SizeLimitExceeded { states: count, cap });
    }
    Ok((0..count as u32).map(|awake| ConfigurationState { awake }).collect())
}

/// Independent sets among the awake links of `config`, in increasing-mask
/// (binary-counting) order. The empty set is always first.
pub fn independent_sets(
    graph: &ConflictGraph,
    config: ConfigurationState,
) -> Result<Vec<TransmissionState>> {
    independent_sets_with_cap(graph, config, DEFAULT_STATE_CAP)
}

pub fn independent_sets_with_cap(
    graph: &ConflictGraph,
    config: ConfigurationState,
    cap: u64,
) -> Result<Vec<TransmissionState>> {
    let mut sets: Vec<u32> = vec![0];
    let mut awake = config.awake;
    while awake != 0 {
        let k = awake.trailing_zeros() as usize;
        awake &= awake - 1;
        let blocked = graph.adjacency[k];
        let bit = 1u32 << k;
        // Extending every prior set by the highest link so far keeps the
        // list sorted by mask value.
        for i in 0..sets.len() {
            let s = sets[i];
            if s & blocked == 0 {
                sets.push(s | bit);
                if sets.len() as u64 > cap {
                    return Err(Error::SizeLimitExceeded { states: sets.len() as u64, cap });
                }
            }
        }
    }
    Ok(sets.into_iter().map(|transmitting| TransmissionState { transmitting }).collect())
}

/// Materializes the full joint state space (every feasible (a, x) pair).
pub fn build_state_index(graph: &ConflictGraph) -> Result<StateIndex> {
    build_state_index_with_cap(graph, DEFAULT_STATE_CAP)
}

pub fn build_state_index_with_cap(graph: &ConflictGraph, cap: u64) -> Result<StateIndex> {
    let configs = enumerate_configurations_with_cap(graph, cap)?;
    let mut states = Vec::new();
    let mut config_offsets = Vec::with_capacity(configs.len() + 1);
    for config in configs {
        config_offsets.push(states.len());
        let remaining = cap - states.len() as u64;
        let sets = independent_sets_with_cap(graph, config, remaining).map_err(|e| match e {
            Error::SizeLimitExceeded { states: extra, .. } => {
                Error::SizeLimitExceeded { states: states.len() as u64 + extra, cap }
            }
            other => other,
        })?;
        states.extend(sets.into_iter().map(|x| (config, x)));
    }
    config_offsets.push(states.len());
    let lookup = states
        .iter()
        .enumerate()
        .map(|(i, &(a, x))| ((a.awake, x.transmitting), i))
        .collect();
    Ok(StateIndex { graph: graph.clone(), states, lookup, config_offsets })
}
