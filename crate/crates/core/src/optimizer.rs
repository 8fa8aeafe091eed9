//! Offline computation of optimal aggressiveness parameters.
//!
//! Matching the chain's marginals to the traffic spec is equivalent to
//! minimizing the convex function
//!
//!   F(r, rho) = -sum_k lambda_k r_k - sum_k f_k rho_k + log C(r, rho)
//!
//! whose gradient is exactly (s_k - lambda_k, f_hat_k - f_k). A zero gradient
//! is therefore the same thing as meeting the throughput and awake-fraction
//! targets. The minimizer is finite only when the traffic is strictly
//! feasible; a norm cap converts runaway iterates near the region boundary
//! into a diagnosable verdict instead of an endless loop.

use crate::analytic::{
    awake_fraction, log_normalizer, stationary_distribution, throughput, AggressivenessProfile,
    StationaryDistribution,
};
use crate::regions::{JointDistribution, TrafficSpec};
use crate::topology::StateIndex;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    /// Initial step for each backtracking line search.
    pub step_size: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the gradient infinity norm.
    pub gradient_tolerance: f64,
    /// Iterates whose infinity norm exceeds this are declared divergent.
    pub divergence_norm_cap: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            step_size: 1.0,
            max_iterations: 200_000,
            gradient_tolerance: 1e-8,
            divergence_norm_cap: 50.0,
        }
    }
}

impl OptimizerSettings {
    fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::ConfigError(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.gradient_tolerance.is_finite() && self.gradient_tolerance > 0.0) {
            return Err(Error::ConfigError(format!(
                "gradient_tolerance must be positive, got {}",
                self.gradient_tolerance
            )));
        }
        if !(self.divergence_norm_cap.is_finite() && self.divergence_norm_cap > 0.0) {
            return Err(Error::ConfigError(format!(
                "divergence_norm_cap must be positive, got {}",
                self.divergence_norm_cap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    DivergedNearBoundary,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub r_star: Vec<f64>,
    pub rho_star: Vec<f64>,
    /// Gradient infinity norm at the returned point; equals the worst
    /// marginal mismatch max(|s_k - lambda_k|, |f_hat_k - f_k|).
    pub kkt_residual: f64,
    pub objective_value: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

fn check_dims(index: &StateIndex, traffic: &TrafficSpec) -> Result<()> {
    if traffic.len() != index.link_count() {
        return Err(Error::ConfigError(format!(
            "traffic spec covers {} links but the graph has {}",
            traffic.len(),
            index.link_count()
        )));
    }
    Ok(())
}

/// The convex objective F(r, rho) for the given traffic targets.
pub fn objective(
    index: &StateIndex,
    traffic: &TrafficSpec,
    profile: &AggressivenessProfile,
) -> Result<f64> {
    check_dims(index, traffic)?;
    if profile.len() != index.link_count() {
        return Err(Error::ConfigError(format!(
            "profile covers {} links but the graph has {}",
            profile.len(),
            index.link_count()
        )));
    }
    Ok(objective_raw(index, traffic, &profile.r, &profile.rho))
}

fn objective_raw(index: &StateIndex, traffic: &TrafficSpec, r: &[f64], rho: &[f64]) -> f64 {
    let mut linear = 0.0;
    for k in 0..r.len() {
        linear -= traffic.lambda[k] * r[k] + traffic.awake_target[k] * rho[k];
    }
    linear + log_normalizer(index, r, rho)
}

/// Exact gradient (dF/dr, dF/drho) = (s - lambda, f_hat - f).
pub fn gradient(
    index: &StateIndex,
    traffic: &TrafficSpec,
    profile: &AggressivenessProfile,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(index, traffic)?;
    let dist = stationary_distribution(index, profile)?;
    let s = throughput(&dist.probabilities, index);
    let f = awake_fraction(&dist.probabilities, index);
    let grad_r = s.iter().zip(&traffic.lambda).map(|(a, b)| a - b).collect();
    let grad_rho = f.iter().zip(&traffic.awake_target).map(|(a, b)| a - b).collect();
    Ok((grad_r, grad_rho))
}

/// Gradient descent with Armijo backtracking from (r, rho) = (0, 0).
pub fn solve(
    index: &StateIndex,
    traffic: &TrafficSpec,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult> {
    check_dims(index, traffic)?;
    settings.validate()?;
    let links = index.link_count();
    let mut r = vec![0.0f64; links];
    let mut rho = vec![0.0f64; links];
    let mut value = objective_raw(index, traffic, &r, &rho);
    let mut iterations = 0;

    loop {
        let profile = AggressivenessProfile::with_unit_rates(r.clone(), rho.clone())?;
        let (grad_r, grad_rho) = gradient(index, traffic, &profile)?;
        let kkt = grad_r
            .iter()
            .chain(&grad_rho)
            .fold(0.0f64, |acc, g| acc.max(g.abs()));
        if kkt <= settings.gradient_tolerance {
            return Ok(OptimizationResult {
                r_star: r,
                rho_star: rho,
                kkt_residual: kkt,
                objective_value: value,
                status: SolveStatus::Converged,
                iterations,
            });
        }
        if iterations >= settings.max_iterations {
            return Ok(OptimizationResult {
                r_star: r,
                rho_star: rho,
                kkt_residual: kkt,
                objective_value: value,
                status: SolveStatus::MaxIterations,
                iterations,
            });
        }

        let sq_norm: f64 = grad_r.iter().chain(&grad_rho).map(|g| g * g).sum();
        let mut step = settings.step_size;
        // Near the optimum the true per-step descent drops below what f64
        // can resolve in F; the allowance keeps the search from stalling on
        // rounding noise.
        let noise = 1e-14 * value.abs().max(1.0);
        let (next_r, next_rho, next_value) = loop {
            let cand_r: Vec<f64> = r.iter().zip(&grad_r).map(|(x, g)| x - step * g).collect();
            let cand_rho: Vec<f64> =
                rho.iter().zip(&grad_rho).map(|(x, g)| x - step * g).collect();
            let cand_value = objective_raw(index, traffic, &cand_r, &cand_rho);
            if cand_value <= value - 1e-4 * step * sq_norm + noise {
                break (cand_r, cand_rho, cand_value);
            }
            step *= 0.5;
            if step < 1e-18 {
                // The search direction no longer yields measurable descent;
                // report the current point honestly.
                return Ok(OptimizationResult {
                    r_star: r,
                    rho_star: rho,
                    kkt_residual: kkt,
                    objective_value: value,
                    status: SolveStatus::MaxIterations,
                    iterations,
                });
            }
        };
        r = next_r;
        rho = next_rho;
        value = next_value;
        iterations += 1;

        let norm = r.iter().chain(&rho).fold(0.0f64, |acc, v| acc.max(v.abs()));
        if norm > settings.divergence_norm_cap {
            let profile = AggressivenessProfile::with_unit_rates(r.clone(), rho.clone())?;
            let (grad_r, grad_rho) = gradient(index, traffic, &profile)?;
            let kkt = grad_r
                .iter()
                .chain(&grad_rho)
                .fold(0.0f64, |acc, g| acc.max(g.abs()));
            return Ok(OptimizationResult {
                r_star: r,
                rho_star: rho,
                kkt_residual: kkt,
                objective_value: value,
                status: SolveStatus::DivergedNearBoundary,
                iterations,
            });
        }
    }
}

/// Kullback-Leibler divergence D(p || pi), with 0 log 0 = 0.
pub fn kl_divergence(p: &JointDistribution, dist: &StationaryDistribution) -> Result<f64> {
    if p.p.len() != dist.probabilities.len() {
        return Err(Error::RangeError(format!(
            "distributions have different lengths: {} vs {}",
            p.p.len(),
            dist.probabilities.len()
        )));
    }
    let mut sum = 0.0;
    for (i, (&pi, &qi)) in p.p.iter().zip(&dist.probabilities).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::DomainError(format!(
                "p has mass {pi} on state {i} where the stationary probability is 0"
            )));
        }
        sum += pi * (pi / qi).ln();
    }
    Ok(sum.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_state_index, ConflictGraph};

    fn single_link_index() -> StateIndex {
        build_state_index(&ConflictGraph::new(1, &[]).unwrap()).unwrap()
    }

    fn two_link_index() -> StateIndex {
        build_state_index(&ConflictGraph::new(2, &[(0, 1)]).unwrap()).unwrap()
    }

    #[test]
    fn objective_at_zero_is_log_state_count() {
        let index = two_link_index();
        let traffic = TrafficSpec::with_awake_target(vec![0.25; 2], vec![0.625; 2]).unwrap();
        let profile = AggressivenessProfile::with_unit_rates(vec![0.0; 2], vec![0.0; 2]).unwrap();
        let val = objective(&index, &traffic, &profile).unwrap();
        assert!((val - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn objective_single_link_hand_value() {
        // lambda=0.5, f=0.75, r=ln 2, rho=0: C = 1 + 1 + 2 = 4,
        // F = -0.5 ln 2 + log 4 = 1.0397.
        let index = single_link_index();
        let traffic = TrafficSpec::with_awake_target(vec![0.5], vec![0.75]).unwrap();
        let profile = AggressivenessProfile::with_unit_rates(vec![2f64.ln()], vec![0.0]).unwrap();
        let val = objective(&index, &traffic, &profile).unwrap();
        assert!((val - (4f64.ln() - 0.5 * 2f64.ln())).abs() < 1e-12);
        assert!((val - 1.0397).abs() < 1e-4);
    }

    #[test]
    fn gradient_vanishes_at_matched_marginals() {
        let index = two_link_index();
        let traffic = TrafficSpec::with_awake_target(vec![0.25; 2], vec![0.625; 2]).unwrap();
        let profile = AggressivenessProfile::with_unit_rates(vec![0.0; 2], vec![0.0; 2]).unwrap();
        let (gr, grho) = gradient(&index, &traffic, &profile).unwrap();
        for g in gr.iter().chain(&grho) {
            assert!(g.abs() < 1e-15);
        }

        let index1 = single_link_index();
        let traffic1 = TrafficSpec::with_awake_target(vec![0.5], vec![0.75]).unwrap();
        let profile1 = AggressivenessProfile::with_unit_rates(vec![2f64.ln()], vec![0.0]).unwrap();
        let (gr, grho) = gradient(&index1, &traffic1, &profile1).unwrap();
        assert!(gr[0].abs() < 1e-15 && grho[0].abs() < 1e-15);
    }

    #[test]
    fn solve_single_link_closed_form() {
        let index = single_link_index();
        let traffic = TrafficSpec::with_awake_target(vec![0.5], vec![0.75]).unwrap();
        let result = solve(&index, &traffic, &OptimizerSettings::default()).unwrap();
        assert_eq!(result.status, SolveStatus::Converged);
        assert!((result.r_star[0] - 2f64.ln()).abs() < 1e-6);
        assert!(result.rho_star[0].abs() < 1e-6);
        assert!(result.kkt_residual <= 1e-8);
    }

    #[test]
    fn converged_point_matches_marginals() {
        let index = two_link_index();
        let traffic = TrafficSpec::with_awake_target(vec![0.3, 0.2], vec![0.6, 0.5]).unwrap();
        let result = solve(&index, &traffic, &OptimizerSettings::default()).unwrap();
        assert_eq!(result.status, SolveStatus::Converged);
        let profile =
            AggressivenessProfile::with_unit_rates(result.r_star, result.rho_star).unwrap();
        let dist = stationary_distribution(&index, &profile).unwrap();
        let s = throughput(&dist.probabilities, &index);
        let f = awake_fraction(&dist.probabilities, &index);
        for k in 0..2 {
            assert!((s[k] - traffic.lambda[k]).abs() <= 1e-8);
            assert!((f[k] - traffic.awake_target[k]).abs() <= 1e-8);
        }
    }

    #[test]
    fn kl_divergence_examples() {
        let index = single_link_index();
        let profile = AggressivenessProfile::with_unit_rates(vec![0.0], vec![0.0]).unwrap();
        let dist = stationary_distribution(&index, &profile).unwrap();

        let uniform = JointDistribution::new(vec![1.0 / 3.0; 3], &index).unwrap();
        assert!(kl_divergence(&uniform, &dist).unwrap() < 1e-15);

        let p = JointDistribution::new(vec![0.25, 0.25, 0.5], &index).unwrap();
        let d = kl_divergence(&p, &dist).unwrap();
        let expected = 3f64.ln()
            - (-(0.25f64 * 0.25f64.ln() + 0.25 * 0.25f64.ln() + 0.5 * 0.5f64.ln()));
        assert!((d - expected).abs() < 1e-12);
        assert!((d - 0.0589).abs() < 1e-4);
    }

    #[test]
    fn kl_divergence_rejects_unsupported_mass() {
        let index = single_link_index();
        let p = JointDistribution::new(vec![0.25, 0.25, 0.5], &index).unwrap();
        let degenerate = StationaryDistribution {
            probabilities: vec![0.5, 0.5, 0.0],
            log_normalizer: 0.0,
        };
        assert!(matches!(
            kl_divergence(&p, &degenerate),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn settings_are_validated() {
        let index = single_link_index();
        let traffic = TrafficSpec::with_awake_target(vec![0.5], vec![0.75]).unwrap();
        let bad = OptimizerSettings { step_size: 0.0, ..Default::default() };
        assert!(matches!(solve(&index, &traffic, &bad), Err(Error::ConfigError(_))));
    }

    #[test]
    fn max_iterations_is_reported() {
        let index = two_link_index();
        let traffic = TrafficSpec::with_awake_target(vec![0.3, 0.2], vec![0.6, 0.5]).unwrap();
        let settings = OptimizerSettings { max_iterations: 2, ..Default::default() };
        let result = solve(&index, &traffic, &settings).unwrap();
        assert_eq!(result.status, SolveStatus::MaxIterations);
        assert_eq!(result.iterations, 2);
    }
}
