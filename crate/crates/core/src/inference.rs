//! Test statistics, bootstrap calibration, power estimation, and kernel
//! density summaries.
//!
//! Bootstrap and power loops parallelize over replicates with one ChaCha
//! stream per replicate, so reports are identical for any execution order
//! given the same seed. Replicates whose solve fails to converge are dropped
//! and accounted for in `converged_fraction`.

use rayon::prelude::*;

use crate::asymptotics::{asymptotic_law, rho};
use crate::error::{Error, Result};
use crate::measures::{
    bootstrap_resample_with_rng, linear_trend_measure, sample_empirical_with_rng, CostMatrix,
    DiscreteMeasure, EmpiricalMeasure,
};
use crate::rng::rng_for;
use crate::sinkhorn::{sinkhorn_divergence, sinkhorn_solve, sinkhorn_solve_warm, SolverConfig};

/// Parameters of a bootstrap test.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TestConfig {
    pub solver: SolverConfig,
    /// Number of bootstrap replicates (M).
    pub replicates: usize,
    /// Test level; the confidence interval covers `1 - level`.
    pub level: f64,
    pub seed: u64,
}

impl TestConfig {
    pub fn new(solver: SolverConfig, replicates: usize, seed: u64) -> Self {
        Self {
            solver,
            replicates,
            level: 0.05,
            seed,
        }
    }

    pub fn with_level(mut self, level: f64) -> Self {
        self.level = level;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidInput(
                "need at least one bootstrap replicate".into(),
            ));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidInput("level must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Outcome of a bootstrap test.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TestReport {
    /// Observed statistic, centered as requested by the caller.
    pub statistic: f64,
    /// Recentered bootstrap replicate statistics (converged ones only).
    pub bootstrap_stats: Vec<f64>,
    /// Two-sided counting p-value.
    pub p_value: f64,
    /// Empirical `level/2` quantile of the bootstrap statistics.
    pub ci_low: f64,
    /// Empirical `1 - level/2` quantile of the bootstrap statistics.
    pub ci_high: f64,
    /// Plug-in variance of the matching limit law.
    pub asymptotic_variance: Option<f64>,
    /// Share of replicates whose solve converged.
    pub converged_fraction: f64,
}

/// Two-sided counting p-value: the fraction of replicate magnitudes at least
/// as large as the observed magnitude. No continuity correction, so the
/// value can be 0.
pub fn p_value_two_sided(observed: f64, replicates: &[f64]) -> f64 {
    if replicates.is_empty() {
        return 1.0;
    }
    let t = observed.abs();
    let hits = replicates.iter().filter(|s| s.abs() >= t).count();
    hits as f64 / replicates.len() as f64
}

/// One-sample statistic `√n (d_λ(â, a_ref) - center)`.
///
/// `center` is the caller's centering term: the population value
/// `d_λ(base, a_ref)` in synthetic experiments, or `d_λ(a_ref, a_ref)` when
/// no population is available.
pub fn one_sample_statistic(
    ahat: &EmpiricalMeasure,
    a_ref: &DiscreteMeasure,
    center: f64,
    cost: &CostMatrix,
    cfg: &SolverConfig,
) -> Result<f64> {
    let d = sinkhorn_divergence(ahat.as_measure(), a_ref, cost, cfg)?;
    Ok((ahat.sample_size() as f64).sqrt() * (d - center))
}

/// Two-sample statistic `ρ_{n,m} (d_λ(â, b̂) - center)`.
pub fn two_sample_statistic(
    ahat: &EmpiricalMeasure,
    bhat: &EmpiricalMeasure,
    center: f64,
    cost: &CostMatrix,
    cfg: &SolverConfig,
) -> Result<f64> {
    let d = sinkhorn_divergence(ahat.as_measure(), bhat.as_measure(), cost, cfg)?;
    Ok(rho(ahat.sample_size(), bhat.sample_size()) * (d - center))
}

/// One-sample bootstrap test of `â` against `a_ref`.
///
/// The observed statistic is `√n (d_λ(â, a_ref) - center)`; replicate `j`
/// resamples `â*_j ~ Multinomial(n, â)` and contributes
/// `√n (d_λ(â*_j, a_ref) - d_λ(â, a_ref))`.
pub fn bootstrap_test_one(
    ahat: &EmpiricalMeasure,
    a_ref: &DiscreteMeasure,
    center: f64,
    cost: &CostMatrix,
    tc: &TestConfig,
) -> Result<TestReport> {
    tc.validate()?;
    let sol = sinkhorn_solve(ahat.as_measure(), a_ref, cost, &tc.solver)?;
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            marginal_err: sol.marginal_err,
        });
    }
    let sqrt_n = (ahat.sample_size() as f64).sqrt();
    let observed = sqrt_n * (sol.dual - center);
    let variance = asymptotic_law(&sol, ahat.as_measure(), None)?.variance;

    let raw: Vec<Option<f64>> = (0..tc.replicates)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng_for(tc.seed, j as u64);
            let boot = bootstrap_resample_with_rng(ahat, &mut rng);
            let s = sinkhorn_solve_warm(
                boot.as_measure(),
                a_ref,
                cost,
                &tc.solver,
                Some((&sol.alpha, &sol.beta)),
            )
            .ok()?;
            if s.converged {
                Some(sqrt_n * (s.dual - sol.dual))
            } else {
                None
            }
        })
        .collect();
    finish_report(observed, Some(variance), raw, tc)
}

/// Two-sample bootstrap test with paired resampling of both measures.
///
/// The observed statistic is `ρ_{n,m} (d_λ(â, b̂) - center)`; replicate `j`
/// contributes `ρ_{n,m} (d_λ(â*_j, b̂*_j) - d_λ(â, b̂))`.
pub fn bootstrap_test_two(
    ahat: &EmpiricalMeasure,
    bhat: &EmpiricalMeasure,
    center: f64,
    cost: &CostMatrix,
    tc: &TestConfig,
) -> Result<TestReport> {
    tc.validate()?;
    let sol = sinkhorn_solve(ahat.as_measure(), bhat.as_measure(), cost, &tc.solver)?;
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            marginal_err: sol.marginal_err,
        });
    }
    let scale = rho(ahat.sample_size(), bhat.sample_size());
    let observed = scale * (sol.dual - center);
    let n = ahat.sample_size() as f64;
    let m = bhat.sample_size() as f64;
    let gamma = m / (n + m);
    let variance = if gamma > 0.0 && gamma < 1.0 {
        Some(asymptotic_law(&sol, ahat.as_measure(), Some((bhat.as_measure(), gamma)))?.variance)
    } else {
        None
    };

    let raw: Vec<Option<f64>> = (0..tc.replicates)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng_for(tc.seed, j as u64);
            let boot_a = bootstrap_resample_with_rng(ahat, &mut rng);
            let boot_b = bootstrap_resample_with_rng(bhat, &mut rng);
            let s = sinkhorn_solve_warm(
                boot_a.as_measure(),
                boot_b.as_measure(),
                cost,
                &tc.solver,
                Some((&sol.alpha, &sol.beta)),
            )
            .ok()?;
            if s.converged {
                Some(scale * (s.dual - sol.dual))
            } else {
                None
            }
        })
        .collect();
    finish_report(observed, variance, raw, tc)
}

fn finish_report(
    observed: f64,
    variance: Option<f64>,
    raw: Vec<Option<f64>>,
    tc: &TestConfig,
) -> Result<TestReport> {
    let total = raw.len();
    let kept: Vec<f64> = raw.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::AllReplicatesFailed(total));
    }
    let converged_fraction = kept.len() as f64 / total as f64;
    let p_value = p_value_two_sided(observed, &kept);
    let mut sorted = kept.clone();
    sorted.sort_by(f64::total_cmp);
    let ci_low = quantile_sorted(&sorted, tc.level / 2.0);
    let ci_high = quantile_sorted(&sorted, 1.0 - tc.level / 2.0);
    Ok(TestReport {
        statistic: observed,
        bootstrap_stats: kept,
        p_value,
        ci_low,
        ci_high,
        asymptotic_variance: variance,
        converged_fraction,
    })
}

/// One row of a power table.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PowerPoint {
    pub theta: f64,
    pub lambda: f64,
    pub power: f64,
}

/// Monte-Carlo power estimation parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PowerConfig {
    /// Sample size of each synthetic empirical measure.
    pub sample_size: u64,
    /// Bootstrap replicates per test (M).
    pub replicates: usize,
    /// Synthetic experiment repetitions per grid point (R).
    pub repeats: usize,
    pub level: f64,
    pub seed: u64,
    /// Solver settings; `lambda` and `absorb_threshold` are overridden per
    /// grid point.
    pub solver: SolverConfig,
}

/// Estimated rejection rate of the one-sample bootstrap test of `â ~ a`
/// against the linear-trend reference, on a `(θ, λ)` grid.
///
/// For each grid point: `b = linear_trend(N, θ)`; each of `R` repeats draws
/// `â_n ~ a` and runs the bootstrap test of `â` against `b`, rejecting when
/// `p ≤ level`. The observed statistic is centered at `d_λ(b, b)`, the value
/// the centering term takes under the null hypothesis that the sample was
/// drawn from `b`; rejection rates then grow with θ as the sample's true
/// distribution `a` moves away from `b`.
pub fn power_curve(
    a: &DiscreteMeasure,
    cost: &CostMatrix,
    thetas: &[f64],
    lambdas: &[f64],
    pc: &PowerConfig,
) -> Result<Vec<PowerPoint>> {
    if pc.repeats == 0 {
        return Err(Error::InvalidInput("need at least one repeat".into()));
    }
    let mut out = Vec::with_capacity(thetas.len() * lambdas.len());
    let mut cell = 0u64;
    for &theta in thetas {
        for &lambda in lambdas {
            let b = linear_trend_measure(a.len(), theta);
            let cfg = SolverConfig {
                lambda,
                absorb_threshold: 1e3 / lambda,
                ..pc.solver
            };
            let center = sinkhorn_divergence(&b, &b, cost, &cfg)?;
            let rejected: Result<Vec<bool>> = (0..pc.repeats)
                .into_par_iter()
                .map(|r| {
                    let mut rng = rng_for(pc.seed, cell * pc.repeats as u64 + r as u64);
                    let ahat = sample_empirical_with_rng(a, pc.sample_size, &mut rng);
                    let tc = TestConfig {
                        solver: cfg,
                        replicates: pc.replicates,
                        level: pc.level,
                        seed: rand::Rng::random(&mut rng),
                    };
                    let report = bootstrap_test_one(&ahat, &b, center, cost, &tc)?;
                    Ok(report.p_value <= pc.level)
                })
                .collect();
            let rejected = rejected?;
            let power = rejected.iter().filter(|&&x| x).count() as f64 / pc.repeats as f64;
            out.push(PowerPoint {
                theta,
                lambda,
                power,
            });
            cell += 1;
        }
    }
    Ok(out)
}

/// Silverman's data-driven bandwidth
/// `h = 0.9 min(sd, IQR/1.34) n^{-1/5}`; falls back to the standard
/// deviation when the interquartile range collapses.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSample("need at least two samples"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateSample("samples must be finite"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd <= 0.0 {
        return Err(Error::DegenerateSample("zero variance"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * n.powf(-0.2))
}

/// Gaussian kernel density estimate with the Silverman bandwidth, evaluated
/// at `eval_points`.
pub fn kde(samples: &[f64], eval_points: &[f64]) -> Result<Vec<f64>> {
    let h = silverman_bandwidth(samples)?;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok(eval_points
        .iter()
        .map(|&x| {
            let s: f64 = samples
                .iter()
                .map(|&xi| {
                    let z = (x - xi) / h;
                    (-0.5 * z * z).exp()
                })
                .sum();
            s * norm
        })
        .collect())
}

/// Linear-interpolation quantile of an ascending-sorted slice.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{
        make_grid, sample_empirical, squared_euclidean_cost, uniform_measure, EmpiricalMeasure,
    };
    use rand_distr::{Distribution, Normal};

    #[test]
    fn p_value_counting_rule() {
        let stats = [0.1, -0.2, 0.3, -0.4];
        assert_eq!(p_value_two_sided(0.35, &stats), 0.25);
        assert_eq!(p_value_two_sided(0.0, &stats), 1.0);
        assert_eq!(p_value_two_sided(0.5, &stats), 0.0);
    }

    #[test]
    fn p_value_invariant_under_monotone_transforms() {
        let stats = [0.1, -0.2, 0.3, -0.4, 0.05];
        let observed = 0.25;
        let p0 = p_value_two_sided(observed, &stats);
        for f in [
            |x: f64| x.abs().sqrt(),
            |x: f64| x.abs().powi(3),
            |x: f64| 2.0 * x.abs() + 1.0,
        ] {
            let tstats: Vec<f64> = stats.iter().map(|&s| f(s)).collect();
            assert_eq!(p_value_two_sided(f(observed), &tstats), p0);
        }
    }

    #[test]
    fn statistic_centering_algebra() {
        let grid = make_grid(2, 2);
        let cost = squared_euclidean_cost(&grid);
        let cfg = SolverConfig::new(1.0);
        let a = uniform_measure(4);
        let ahat = sample_empirical(&a, 500, 3);
        let d_ref = sinkhorn_divergence(&a, &a, &cost, &cfg).unwrap();
        let stat = one_sample_statistic(&ahat, &a, d_ref, &cost, &cfg).unwrap();
        let raw = one_sample_statistic(&ahat, &a, 0.0, &cost, &cfg).unwrap();
        let sqrt_n = (500.0_f64).sqrt();
        assert!((stat + sqrt_n * d_ref - raw).abs() < 1e-10);

        // Exact-equality inputs give a zero statistic.
        let exact = EmpiricalMeasure::from_counts(vec![25, 25, 25, 25]).unwrap();
        let d = sinkhorn_divergence(exact.as_measure(), &a, &cost, &cfg).unwrap();
        let z = one_sample_statistic(&exact, &a, d, &cost, &cfg).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn two_sample_prefactor() {
        let grid = make_grid(2, 2);
        let cost = squared_euclidean_cost(&grid);
        let cfg = SolverConfig::new(1.0);
        let a = uniform_measure(4);
        let ahat = sample_empirical(&a, 800, 1);
        let bhat = sample_empirical(&a, 800, 2);
        let s = two_sample_statistic(&ahat, &bhat, 0.0, &cost, &cfg).unwrap();
        let d = sinkhorn_divergence(ahat.as_measure(), bhat.as_measure(), &cost, &cfg).unwrap();
        assert!((s - (400.0_f64).sqrt() * d).abs() < 1e-10);
    }

    #[test]
    fn two_sample_statistic_vanishes_at_reference() {
        let grid = make_grid(2, 2);
        let cost = squared_euclidean_cost(&grid);
        let cfg = SolverConfig::new(1.0);
        let ahat = EmpiricalMeasure::from_counts(vec![10, 20, 30, 40]).unwrap();
        let bhat = EmpiricalMeasure::from_counts(vec![5, 5, 5, 5]).unwrap();
        let center =
            sinkhorn_divergence(ahat.as_measure(), bhat.as_measure(), &cost, &cfg).unwrap();
        let s = two_sample_statistic(&ahat, &bhat, center, &cost, &cfg).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn degenerate_two_sample_bootstrap() {
        // Point masses resample to themselves: all replicate stats are zero
        // and the p-value is 1.
        let grid = make_grid(2, 1);
        let cost = squared_euclidean_cost(&grid);
        let ahat = EmpiricalMeasure::from_counts(vec![40, 0]).unwrap();
        let bhat = EmpiricalMeasure::from_counts(vec![40, 0]).unwrap();
        let cfg = SolverConfig::new(1.0);
        let center =
            sinkhorn_divergence(ahat.as_measure(), bhat.as_measure(), &cost, &cfg).unwrap();
        let tc = TestConfig::new(cfg, 16, 7);
        let report = bootstrap_test_two(&ahat, &bhat, center, &cost, &tc).unwrap();
        assert_eq!(report.statistic, 0.0);
        assert!(report.bootstrap_stats.iter().all(|&s| s == 0.0));
        assert_eq!(report.p_value, 1.0);
        assert_eq!(report.converged_fraction, 1.0);
        assert!(report.ci_low <= report.ci_high);
    }

    #[test]
    fn reports_are_deterministic() {
        let grid = make_grid(3, 2);
        let cost = squared_euclidean_cost(&grid);
        let a = uniform_measure(9);
        let ahat = sample_empirical(&a, 400, 5);
        let cfg = SolverConfig::new(1.0);
        let center = sinkhorn_divergence(&a, &a, &cost, &cfg).unwrap();
        let tc = TestConfig::new(cfg, 64, 99);
        let r1 = bootstrap_test_one(&ahat, &a, center, &cost, &tc).unwrap();
        let r2 = bootstrap_test_one(&ahat, &a, center, &cost, &tc).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn all_failed_replicates_error() {
        let grid = make_grid(3, 2);
        let cost = squared_euclidean_cost(&grid);
        let a = uniform_measure(9);
        let ahat = sample_empirical(&a, 400, 5);
        // The observation converges at lambda = 1 quickly, but one-iteration
        // solves cannot; force that for replicates and the observation alike.
        let cfg = SolverConfig::new(1.0).with_max_iter(1);
        let tc = TestConfig::new(cfg, 8, 1);
        let err = bootstrap_test_one(&ahat, &a, 0.0, &cost, &tc).unwrap_err();
        assert!(matches!(err, Error::NotConverged { .. }));
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 4.0);
        assert!((quantile_sorted(&xs, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn kde_integrates_to_one_and_is_symmetric() {
        let mut rng = crate::rng::rng_for(21, 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut samples: Vec<f64> = (0..2000).map(|_| normal.sample(&mut rng)).collect();
        // Symmetrize exactly.
        let mirrored: Vec<f64> = samples.iter().map(|x| -x).collect();
        samples.extend(mirrored);

        let grid: Vec<f64> = (0..=800).map(|i| -8.0 + i as f64 * 0.02).collect();
        let dens = kde(&samples, &grid).unwrap();
        let integral: f64 = dens.windows(2).map(|w| 0.01 * (w[0] + w[1])).sum();
        assert!((integral - 1.0).abs() < 1e-2, "integral {integral}");
        for i in 0..=400 {
            let left = dens[400 - i];
            let right = dens[400 + i];
            assert!((left - right).abs() < 1e-12, "asymmetry at offset {i}");
        }
    }

    #[test]
    fn kde_matches_standard_normal() {
        let mut rng = crate::rng::rng_for(8, 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let samples: Vec<f64> = (0..1_000_000).map(|_| normal.sample(&mut rng)).collect();
        let grid: Vec<f64> = (0..=120).map(|i| -3.0 + i as f64 * 0.05).collect();
        let dens = kde(&samples, &grid).unwrap();
        let mut max_err = 0.0_f64;
        for (x, d) in grid.iter().zip(&dens) {
            let phi = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            max_err = max_err.max((d - phi).abs());
        }
        assert!(max_err <= 0.01, "max error {max_err}");
    }

    #[test]
    fn kde_rejects_degenerate_samples() {
        assert!(matches!(
            kde(&[1.0], &[0.0]),
            Err(Error::DegenerateSample(_))
        ));
        assert!(matches!(
            kde(&[2.0, 2.0, 2.0], &[0.0]),
            Err(Error::DegenerateSample(_))
        ));
    }

    #[test]
    fn power_single_repeat_is_zero_or_one() {
        let grid = make_grid(2, 2);
        let cost = squared_euclidean_cost(&grid);
        let a = uniform_measure(4);
        let pc = PowerConfig {
            sample_size: 200,
            replicates: 32,
            repeats: 1,
            level: 0.05,
            seed: 17,
            solver: SolverConfig::new(1.0),
        };
        let pts = power_curve(&a, &cost, &[0.2], &[1.0], &pc).unwrap();
        assert_eq!(pts.len(), 1);
        assert!(pts[0].power == 0.0 || pts[0].power == 1.0);
    }
}
