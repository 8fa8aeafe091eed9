//! Capacity and awake regions.
//!
//! An arrival vector lambda is feasible when some probability distribution p
//! over the joint state space has per-link transmitting marginals equal to
//! lambda; the awake targets f live in the per-link box [lambda_k, 1].
//! Strict feasibility (every p entry positive) is certified constructively:
//! a linear program maximizes the smallest entry of p subject to the marginal
//! constraints, and a positive optimum is the strict-positivity witness.

use crate::analytic::{awake_fraction, throughput};
use crate::topology::StateIndex;
use crate::{Error, Result};

/// Per-link offered load, power-delay-tradeoff slack, and the implied awake
/// target f_k = lambda_k + omega_k.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSpec {
    pub lambda: Vec<f64>,
    pub omega: Vec<f64>,
    pub awake_target: Vec<f64>,
}

impl TrafficSpec {
    /// Builds the traffic profile from arrival rates and PDT slacks.
    pub fn from_pdt(lambda: Vec<f64>, omega: Vec<f64>) -> Result<Self> {
        let awake_target = pdt_to_awake_target(&lambda, &omega)?;
        Ok(Self { lambda, omega, awake_target })
    }

    /// Builds the traffic profile from explicit awake targets; omega is derived.
    pub fn with_awake_target(lambda: Vec<f64>, awake_target: Vec<f64>) -> Result<Self> {
        if lambda.len() != awake_target.len() {
            return Err(Error::RangeError(format!(
                "lambda has {} links but awake_target has {}",
                lambda.len(),
                awake_target.len()
            )));
        }
        let omega: Vec<f64> = lambda.iter().zip(&awake_target).map(|(l, f)| f - l).collect();
        Self::from_pdt(lambda, omega)
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// True per link when lambda_k < f_k < 1, the open part of the awake box.
    pub fn strict_interior_flags(&self) -> Vec<bool> {
        self.lambda
            .iter()
            .zip(&self.awake_target)
            .map(|(&l, &f)| l < f && f < 1.0)
            .collect()
    }
}

/// Position of an awake-target vector relative to the box [lambda_k, 1]^K.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxPosition {
    Interior,
    Boundary,
    Outside,
}

/// The awake region for given arrivals: the per-link interval [lambda_k, 1].
pub fn awake_region_bounds(lambda: &[f64]) -> Result<Vec<(f64, f64)>> {
    for (k, &l) in lambda.iter().enumerate() {
        if !(0.0..=1.0).contains(&l) {
            return Err(Error::RangeError(format!("lambda[{k}] = {l} is outside [0, 1]")));
        }
    }
    Ok(lambda.iter().map(|&l| (l, 1.0)).collect())
}

/// Classifies awake targets against the box [lambda_k, 1]^K.
pub fn awake_region_position(lambda: &[f64], awake_target: &[f64]) -> Result<BoxPosition> {
    let bounds = awake_region_bounds(lambda)?;
    if awake_target.len() != lambda.len() {
        return Err(Error::RangeError(format!(
            "awake_target has {} links but lambda has {}",
            awake_target.len(),
            lambda.len()
        )));
    }
    let mut on_boundary = false;
    for (&f, &(lo, hi)) in awake_target.iter().zip(&bounds) {
        if f < lo || f > hi {
            return Ok(BoxPosition::Outside);
        }
        if f == lo || f == hi {
            on_boundary = true;
        }
    }
    Ok(if on_boundary { BoxPosition::Boundary } else { BoxPosition::Interior })
}

/// f = lambda + omega, validating 0 <= omega_k and lambda_k + omega_k <= 1.
pub fn pdt_to_awake_target(lambda: &[f64], omega: &[f64]) -> Result<Vec<f64>> {
    if lambda.len() != omega.len() {
        return Err(Error::RangeError(format!(
            "lambda has {} links but omega has {}",
            lambda.len(),
            omega.len()
        )));
    }
    let mut f = Vec::with_capacity(lambda.len());
    for k in 0..lambda.len() {
        let (l, w) = (lambda[k], omega[k]);
        if !(0.0..=1.0).contains(&l) {
            return Err(Error::RangeError(format!("lambda[{k}] = {l} is outside [0, 1]")));
        }
        if w < 0.0 {
            return Err(Error::RangeError(format!("omega[{k}] = {w} is negative")));
        }
        if l + w > 1.0 + 1e-12 {
            return Err(Error::RangeError(format!(
                "lambda[{k}] + omega[{k}] = {} exceeds 1",
                l + w
            )));
        }
        f.push((l + w).min(1.0));
    }
    Ok(f)
}

/// A distribution over the joint state space together with its marginals.
#[derive(Debug, Clone)]
pub struct JointDistribution {
    pub p: Vec<f64>,
}

impl JointDistribution {
    pub fn new(p: Vec<f64>, index: &StateIndex) -> Result<Self> {
        if p.len() != index.len() {
            return Err(Error::RangeError(format!(
                "distribution has {} entries but the index has {}",
                p.len(),
                index.len()
            )));
        }
        if p.iter().any(|&v| v < 0.0) {
            return Err(Error::RangeError("distribution has a negative entry".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::RangeError(format!("distribution sums to {total}, not 1")));
        }
        Ok(Self { p })
    }

    /// Per-link transmitting marginal lambda_k(p).
    pub fn lambda_marginal(&self, index: &StateIndex) -> Vec<f64> {
        throughput(&self.p, index)
    }

    /// Per-link awake marginal f_k(p).
    pub fn awake_marginal(&self, index: &StateIndex) -> Vec<f64> {
        awake_fraction(&self.p, index)
    }

    /// Probability of each awake configuration, alpha_j = sum_i p_ij.
    pub fn config_marginal(&self, index: &StateIndex) -> Vec<f64> {
        let configs = 1usize << index.link_count();
        let mut alpha = vec![0.0; configs];
        for (i, &(a, _)) in index.states().iter().enumerate() {
            alpha[a.awake as usize] += self.p[i];
        }
        alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityVerdict {
    StrictlyFeasible,
    Boundary,
    Infeasible,
}

/// Outcome of the strict-feasibility linear program.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    /// Largest uniform lower bound on the entries of a matching distribution;
    /// negative infinity when no distribution matches at all.
    pub margin: f64,
    pub witness: Option<JointDistribution>,
    pub verdict: FeasibilityVerdict,
}

/// Verdicts switch to BOUNDARY when the optimal margin is this close to zero.
const BOUNDARY_TOLERANCE: f64 = 1e-9;
/// Largest negative optimum still attributable to simplex round-off.
const LP_ROUNDOFF: f64 = 1e-7;

/// Certifies (strict) feasibility of arrivals, and optionally of awake
/// targets, by maximizing the minimum entry of a matching distribution.
///
/// The LP is: max eps subject to p >= eps, sum p = 1, per-link transmitting
/// marginals equal to lambda, and (when given) per-link awake marginals equal
/// to awake_target. Solved in the substituted variables q = p - eps >= 0.
pub fn feasibility_margin(
    index: &StateIndex,
    lambda: &[f64],
    awake_target: Option<&[f64]>,
) -> Result<FeasibilityReport> {
    let links = index.link_count();
    if lambda.len() != links {
        return Err(Error::RangeError(format!(
            "lambda has {} links but the graph has {links}",
            lambda.len()
        )));
    }
    if let Some(f) = awake_target {
        if f.len() != links {
            return Err(Error::RangeError(format!(
                "awake_target has {} links but the graph has {links}",
                f.len()
            )));
        }
    }

    let n = index.len();
    let rows = 1 + links + awake_target.map_or(0, |_| links);
    let mut a = vec![vec![0.0f64; n + 1]; rows];
    let mut b = vec![0.0f64; rows];

    // Row 0: sum q + n*eps = 1.
    for j in 0..n {
        a[0][j] = 1.0;
    }
    a[0][n] = n as f64;
    b[0] = 1.0;

    // Transmitting marginals: sum over states with x_k = 1.
    for (i, &(st_a, st_x)) in index.states().iter().enumerate() {
        for k in 0..links {
            let bit = 1u32 << k;
            if st_x.transmitting & bit != 0 {
                a[1 + k][i] = 1.0;
            }
            if awake_target.is_some() && st_a.awake & bit != 0 {
                a[1 + links + k][i] = 1.0;
            }
        }
    }
    for k in 0..links {
        let count: f64 = a[1 + k][..n].iter().sum();
        a[1 + k][n] = count;
        b[1 + k] = lambda[k];
        if let Some(f) = awake_target {
            let count: f64 = a[1 + links + k][..n].iter().sum();
            a[1 + links + k][n] = count;
            b[1 + links + k] = f[k];
        }
    }

    let mut c = vec![0.0f64; n + 1];
    c[n] = 1.0;

    match simplex::maximize(a, b, &c)? {
        None => Ok(FeasibilityReport {
            margin: f64::NEG_INFINITY,
            witness: None,
            verdict: FeasibilityVerdict::Infeasible,
        }),
        Some((margin, z)) => {
            let mut p: Vec<f64> = z[..n].iter().map(|&q| (q + margin).max(0.0)).collect();
            // Near the boundary the basic solution carries O(1e-8) of
            // round-off in its sum; restore the equality row exactly.
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(Error::LpNumericalFailure(format!(
                    "witness sums to {total}, not 1"
                )));
            }
            for v in &mut p {
                *v /= total;
            }
            let witness = JointDistribution::new(p, index)
                .map_err(|e| Error::LpNumericalFailure(format!("witness invalid: {e}")))?;
            let verdict = if margin > BOUNDARY_TOLERANCE {
                FeasibilityVerdict::StrictlyFeasible
            } else if margin >= -LP_ROUNDOFF {
                FeasibilityVerdict::Boundary
            } else {
                // q >= 0 and eps >= 0 make a negative optimum impossible.
                return Err(Error::LpNumericalFailure(format!(
                    "margin {margin} is negative"
                )));
            };
            Ok(FeasibilityReport { margin, witness: Some(witness), verdict })
        }
    }
}

/// Dense two-phase primal simplex with Bland's rule. Sized for the
/// desk-scale problems here: tens of rows, up to a few tens of thousands of
/// columns.
mod simplex {
    use crate::{Error, Result};

    const PIVOT_TOL: f64 = 1e-9;
    const FEAS_TOL: f64 = 1e-7;

    /// Maximizes c^T z subject to A z = b, z >= 0 (b must be nonnegative).
    /// Returns None when the constraints are infeasible.
    pub fn maximize(
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        c: &[f64],
    ) -> Result<Option<(f64, Vec<f64>)>> {
        let m = a.len();
        let n = c.len();
        debug_assert!(b.iter().all(|&v| v >= 0.0));

        // Tableau columns: n structural then m artificial.
        let mut t: Vec<Vec<f64>> = a;
        for (i, row) in t.iter_mut().enumerate() {
            row.resize(n + m, 0.0);
            row[n + i] = 1.0;
        }
        let mut rhs = b;
        let mut basis: Vec<usize> = (n..n + m).collect();

        // Phase 1: maximize -(sum of artificials). Reduced costs start as the
        // column sums because every artificial has cost -1 and is basic.
        let mut zrow: Vec<f64> = (0..n + m)
            .map(|j| if j < n { (0..m).map(|i| t[i][j]).sum() } else { 0.0 })
            .collect();
        let mut zval: f64 = -rhs.iter().sum::<f64>();
        pivot_to_optimum(&mut t, &mut rhs, &mut basis, &mut zrow, &mut zval, n + m)?;
        if zval < -FEAS_TOL {
            return Ok(None);
        }

        // Drive leftover artificials out of the basis; drop rows that are
        // redundant (zero structural coefficients).
        let mut row = 0;
        while row < t.len() {
            if basis[row] >= n {
                if let Some(j) = (0..n).find(|&j| t[row][j].abs() > PIVOT_TOL) {
                    pivot(&mut t, &mut rhs, &mut basis, &mut zrow, &mut zval, row, j);
                } else {
                    t.remove(row);
                    rhs.remove(row);
                    basis.remove(row);
                    continue;
                }
            }
            row += 1;
        }

        // Phase 2 on structural columns only.
        for row in t.iter_mut() {
            row.truncate(n);
        }
        let mut zrow: Vec<f64> = (0..n)
            .map(|j| {
                let mut v = c[j];
                for (i, &bi) in basis.iter().enumerate() {
                    v -= c[bi] * t[i][j];
                }
                v
            })
            .collect();
        let mut zval: f64 = basis.iter().enumerate().map(|(i, &bi)| c[bi] * rhs[i]).sum();
        pivot_to_optimum(&mut t, &mut rhs, &mut basis, &mut zrow, &mut zval, n)?;

        let mut z = vec![0.0f64; n];
        for (i, &bi) in basis.iter().enumerate() {
            z[bi] = rhs[i];
        }
        Ok(Some((zval, z)))
    }

    /// Runs Bland-rule pivots until no reduced cost is positive.
    fn pivot_to_optimum(
        t: &mut [Vec<f64>],
        rhs: &mut [f64],
        basis: &mut [usize],
        zrow: &mut [f64],
        zval: &mut f64,
        ncols: usize,
    ) -> Result<()> {
        loop {
            // Bland: smallest-index column with positive reduced cost.
            let Some(enter) = (0..ncols).find(|&j| zrow[j] > PIVOT_TOL) else {
                return Ok(());
            };
            // Ratio test; ties broken on the smallest basis index.
            let mut leave: Option<usize> = None;
            let mut best = f64::INFINITY;
            for i in 0..t.len() {
                if t[i][enter] > PIVOT_TOL {
                    let ratio = rhs[i] / t[i][enter];
                    let better = ratio < best - 1e-12
                        || (ratio < best + 1e-12
                            && leave.is_some_and(|l| basis[i] < basis[l]));
                    if better {
                        best = ratio;
                        leave = Some(i);
                    }
                }
            }
            let Some(leave) = leave else {
                return Err(Error::LpNumericalFailure(
                    "objective unbounded above".into(),
                ));
            };
            pivot(t, rhs, basis, zrow, zval, leave, enter);
        }
    }

    pub(super) fn pivot(
        t: &mut [Vec<f64>],
        rhs: &mut [f64],
        basis: &mut [usize],
        zrow: &mut [f64],
        zval: &mut f64,
        row: usize,
        col: usize,
    ) {
        let inv = 1.0 / t[row][col];
        for v in t[row].iter_mut() {
            *v *= inv;
        }
        rhs[row] *= inv;
        t[row][col] = 1.0;
        for i in 0..t.len() {
            if i == row {
                continue;
            }
            let factor = t[i][col];
            if factor == 0.0 {
                continue;
            }
            let (pivot_row, other) = if i < row {
                let (lo, hi) = t.split_at_mut(row);
                (&hi[0], &mut lo[i])
            } else {
                let (lo, hi) = t.split_at_mut(i);
                (&lo[row], &mut hi[0])
            };
            for (o, p) in other.iter_mut().zip(pivot_row.iter()) {
                *o -= factor * p;
            }
            other[col] = 0.0;
            rhs[i] -= factor * rhs[row];
            if rhs[i] < 0.0 {
                rhs[i] = 0.0;
            }
        }
        let factor = zrow[col];
        if factor != 0.0 {
            for (z, p) in zrow.iter_mut().zip(t[row].iter()) {
                *z -= factor * p;
            }
            zrow[col] = 0.0;
            *zval += factor * rhs[row];
        }
        basis[row] = col;
    }
}
