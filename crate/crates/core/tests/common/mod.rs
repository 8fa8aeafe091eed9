//! Shared helpers for integration tests: a tiny deterministic RNG, a dense
//! linear solver, and the generator-matrix oracle for the stationary
//! distribution.

use csma_sleep::analytic::AggressivenessProfile;
use csma_sleep::topology::StateIndex;

/// splitmix64; deterministic and dependency-free, for test data only.
#[allow(dead_code)]
pub struct SplitMix {
    state: u64,
}

#[allow(dead_code)]

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Builds the transition-rate matrix of the sleep-enabled CSMA chain over
/// the indexed state space: wake S_k e^{rho_k}, sleep S_k (only while not
/// transmitting), transmission start H_k e^{r_k} (only while no neighbor
/// transmits), transmission end H_k.
#[allow(dead_code)]
pub fn generator_matrix(index: &StateIndex, profile: &AggressivenessProfile) -> Vec<Vec<f64>> {
    let n = index.len();
    let graph = index.graph();
    let mut q = vec![vec![0.0f64; n]; n];
    for (i, &(a, x)) in index.states().iter().enumerate() {
        for k in 0..index.link_count() {
            let bit = 1u32 << k;
            let target = if a.awake & bit == 0 {
                Some((a.awake | bit, x.transmitting, profile.wake_rate(k)))
            } else if x.transmitting & bit != 0 {
                Some((a.awake, x.transmitting & !bit, profile.holding_rate[k]))
            } else {
                None
            };
            if let Some((ta, tx, rate)) = target {
                let j = index.position(ta, tx).unwrap();
                q[i][j] += rate;
            }
            if a.awake & bit != 0 && x.transmitting & bit == 0 {
                // Awake and idle: the sleep timer runs, and the back-off
                // timer runs only while every neighbor is silent.
                let j = index.position(a.awake & !bit, x.transmitting).unwrap();
                q[i][j] += profile.sleep_rate[k];
                if graph.neighbors(k) & x.transmitting == 0 {
                    let j = index.position(a.awake, x.transmitting | bit).unwrap();
                    q[i][j] += profile.backoff_rate(k);
                }
            }
        }
    }
    for i in 0..n {
        let total: f64 = q[i].iter().sum::<f64>() - q[i][i];
        q[i][i] = -total;
    }
    q
}

/// Stationary vector of a generator matrix: solves pi Q = 0, sum pi = 1 by
/// Gaussian elimination with partial pivoting.
#[allow(dead_code)]
pub fn stationary_from_generator(q: &[Vec<f64>]) -> Vec<f64> {
    let n = q.len();
    // Unknowns pi_j: equations sum_i pi_i Q[i][j] = 0 for j < n-1, plus
    // sum_i pi_i = 1 as the last row.
    let mut a = vec![vec![0.0f64; n + 1]; n];
    for j in 0..n - 1 {
        for i in 0..n {
            a[j][i] = q[i][j];
        }
    }
    for i in 0..n {
        a[n - 1][i] = 1.0;
    }
    a[n - 1][n] = 1.0;

    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        assert!(a[col][col].abs() > 1e-300, "generator system is singular");
        let inv = 1.0 / a[col][col];
        for v in a[col].iter_mut() {
            *v *= inv;
        }
        for row in 0..n {
            if row != col && a[row][col] != 0.0 {
                let factor = a[row][col];
                let (pivot_row, other) = if row < col {
                    let (lo, hi) = a.split_at_mut(col);
                    (&hi[0], &mut lo[row])
                } else {
                    let (lo, hi) = a.split_at_mut(row);
                    (&lo[col], &mut hi[0])
                };
                for (o, p) in other.iter_mut().zip(pivot_row.iter()) {
                    *o -= factor * p;
                }
            }
        }
    }
    (0..n).map(|i| a[i][n]).collect()
}

/// Two-sample Kolmogorov-Smirnov statistic.
#[allow(dead_code)]
pub fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        let fa = i as f64 / a.len() as f64;
        let fb = j as f64 / b.len() as f64;
        d = d.max((fa - fb).abs());
    }
    d
}
