//! Reproduction harnesses: the importance-resampling tail-probability table
//! and the time-sequential coverage study with its Brownian-approximation
//! comparator.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rank_stats::VarianceVariant;
use crate::resample::{
    brownian_interval, fit_hybrid_model, hybrid_confidence_set, importance_bootstrap_tail,
    optimal_weights, HybridConfig, PhatMode, ResamplingWeights,
};
use crate::trial_sim::{
    generate_trial, replicate_rng, run_test, Accrual, BoundarySpec, MaxInfoRule, Scenario,
    StatisticKind, SurvivalDist, TestSpec, Withdrawal,
};
use crate::{Error, Result};

/// Standard normal points at which the tail-probability table is evaluated.
pub const TABLE1_TAIL_POINTS: [f64; 5] = [0.005, 0.01, 0.025, 0.05, 0.1];

/// Sample sizes and resample count of the published table.
pub const TABLE1_M: usize = 30;
pub const TABLE1_N: usize = 25;

/// One row of the tail-probability table: macro-replication means and
/// spreads of the plain and importance bootstrap estimators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1Row {
    pub phi_x_tilde: f64,
    pub direct_mean: f64,
    pub direct_sd: f64,
    pub importance_mean: f64,
    pub importance_sd: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = crate::numeric::pairwise_sum(v) / n;
    let var = v.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, var.sqrt())
}

/// Tail-probability table: per macro-replication, draw fresh exponential
/// (median 3) samples, place the tail point x so the standardized point
/// sits at the given normal quantile, and estimate P(U* <= x | X, Y) by the
/// plain and by the importance bootstrap with B resamples each.
pub fn table1(macro_reps: usize, b: usize, seed: u64) -> Result<Vec<Table1Row>> {
    if macro_reps < 2 || b == 0 {
        return Err(Error::Invalid("table1: need macro_reps >= 2 and B >= 1".into()));
    }
    let rate = 2.0_f64.ln() / 3.0;
    TABLE1_TAIL_POINTS
        .iter()
        .enumerate()
        .map(|(row, &pt)| {
            let z = crate::numeric::norm_quantile(pt);
            let estimates: Vec<(f64, f64)> = (0..macro_reps)
                .into_par_iter()
                .map(|rep| {
                    let mut rng =
                        replicate_rng(seed, (row * macro_reps + rep) as u64);
                    let mut draw = |k: usize| -> Vec<f64> {
                        (0..k)
                            .map(|_| -rng.gen_range(f64::MIN_POSITIVE..1.0_f64).ln() / rate)
                            .collect()
                    };
                    let xs = draw(TABLE1_M);
                    let ys = draw(TABLE1_N);
                    // Place x at the requested standardized point.
                    let probe = optimal_weights(&xs, &ys, 0.0)?;
                    let n = TABLE1_N as f64;
                    let ubar = probe.u.iter().sum::<f64>() / n;
                    let scale =
                        probe.u.iter().map(|&u| (u - ubar) * (u - ubar)).sum::<f64>().sqrt();
                    let x = n * ubar + z * scale;
                    let uniform = ResamplingWeights::uniform(probe.u.clone(), 0.0, false);
                    let tilted = optimal_weights(&xs, &ys, x)?;
                    let (direct, _) =
                        importance_bootstrap_tail(&xs, &ys, x, b, &uniform, &mut rng)?;
                    let (importance, _) =
                        importance_bootstrap_tail(&xs, &ys, x, b, &tilted, &mut rng)?;
                    Ok((direct, importance))
                })
                .collect::<Result<Vec<_>>>()?;
            let (direct_mean, direct_sd) =
                mean_sd(&estimates.iter().map(|e| e.0).collect::<Vec<_>>());
            let (importance_mean, importance_sd) =
                mean_sd(&estimates.iter().map(|e| e.1).collect::<Vec<_>>());
            Ok(Table1Row { phi_x_tilde: pt, direct_mean, direct_sd, importance_mean, importance_sd })
        })
        .collect()
}

pub fn write_table1_csv<W: std::io::Write>(rows: &[Table1Row], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(crate::Error::from)?;
    Ok(())
}

/// The worked time-sequential design: 350 subjects accrued uniformly over 3
/// years, analyses at year 1 and every 6 months through 5.5, logrank score
/// monitored by the maximum-information rule. The control arm is
/// exponential; the treatment arm has hazard multiplied by exp(beta).
pub fn example2_scenario(beta: f64) -> (Scenario, TestSpec) {
    let baseline = SurvivalDist::Exponential { rate: 0.25 };
    let scenario = Scenario {
        n: 350,
        allocation: 0.5,
        accrual: Accrual::Uniform { length: 3.0 },
        survival_x: SurvivalDist::ProportionalHazards {
            baseline: Box::new(baseline.clone()),
            log_hazard_ratio: beta,
        },
        survival_y: baseline,
        withdrawal: Withdrawal::None,
        analysis_times: (0..10).map(|j| 1.0 + 0.5 * j as f64).collect(),
    };
    let spec = TestSpec {
        statistic: StatisticKind::CoxScore,
        variance: VarianceVariant::C,
        boundary: BoundarySpec::Example18,
        alpha: 0.05,
    };
    (scenario, spec)
}

/// Coverage of a confidence procedure at one true parameter value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageRow {
    pub beta: f64,
    /// Percent of replications with the true beta below the interval.
    pub lower_noncoverage_pct: f64,
    /// Percent of replications with the true beta above the interval.
    pub upper_noncoverage_pct: f64,
    pub outer: usize,
    /// Replications where interval construction failed (excluded from the
    /// percentages).
    pub failures: usize,
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer for independent derived streams.
    let mut z = seed.wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn coverage_study<F>(outer: usize, betas: &[f64], interval_of: F) -> Result<Vec<CoverageRow>>
where
    F: Fn(f64, usize) -> Result<Option<(f64, f64)>> + Sync,
{
    betas
        .iter()
        .map(|&beta| {
            let results: Vec<Option<(f64, f64)>> = (0..outer)
                .into_par_iter()
                .map(|rep| interval_of(beta, rep))
                .collect::<Result<Vec<_>>>()?;
            let failures = results.iter().filter(|r| r.is_none()).count();
            let ok = (outer - failures) as f64;
            if ok == 0.0 {
                return Err(Error::Degenerate(format!(
                    "coverage study at beta = {beta}: every replication failed"
                )));
            }
            let low = results.iter().flatten().filter(|&&(lo, _)| beta < lo).count();
            let high = results.iter().flatten().filter(|&&(_, hi)| beta > hi).count();
            Ok(CoverageRow {
                beta,
                lower_noncoverage_pct: 100.0 * low as f64 / ok,
                upper_noncoverage_pct: 100.0 * high as f64 / ok,
                outer,
                failures,
            })
        })
        .collect()
}

/// Hybrid-resampling coverage study on the worked design: each outer
/// replication simulates a trial at the true beta, runs the sequential
/// test, and inverts importance-mode p-hat with B inner replicates.
pub fn example2_hybrid(
    outer: usize,
    inner_b: usize,
    seed: u64,
    betas: &[f64],
) -> Result<Vec<CoverageRow>> {
    coverage_study(outer, betas, |beta, rep| {
        let (scenario, spec) = example2_scenario(beta);
        let mut rng = replicate_rng(mix_seed(seed, beta.to_bits()), rep as u64);
        let data = generate_trial(&scenario, &mut rng);
        let observed = run_test(&data, &spec, &scenario.analysis_times)?;
        let model = match fit_hybrid_model(&data, &spec, &scenario.analysis_times, observed.stop_index)
        {
            Ok(m) => m,
            Err(_) => return Ok(None),
        };
        let cfg = HybridConfig::new(
            inner_b,
            mix_seed(seed, (rep as u64) << 20 | beta.to_bits() >> 44),
            PhatMode::Importance,
        );
        match hybrid_confidence_set(&observed, 0.05, &model, &cfg) {
            Ok(iv) => Ok(Some((iv.lower, iv.upper))),
            Err(Error::RootSearch(_)) | Err(Error::Degenerate(_)) => Ok(None),
            Err(e) => Err(e),
        }
    })
}

/// Brownian-approximation comparator coverage on the same design: Siegmund
/// ordering applied to the space-time Brownian approximation of the score
/// path.
pub fn example2_brownian(outer: usize, seed: u64, betas: &[f64]) -> Result<Vec<CoverageRow>> {
    coverage_study(outer, betas, |beta, rep| {
        let (scenario, spec) = example2_scenario(beta);
        let mut rng = replicate_rng(mix_seed(seed, beta.to_bits() ^ 0xB0), rep as u64);
        let data = generate_trial(&scenario, &mut rng);
        let observed = run_test(&data, &spec, &scenario.analysis_times)?;
        let rec = observed.stop_record();
        if !(rec.variance > 0.0) {
            return Ok(None);
        }
        let center = rec.statistic / rec.variance;
        let half_width = 6.0 / rec.variance.sqrt();
        match brownian_interval(&observed, 0.05, &MaxInfoRule::example2(), center, half_width) {
            Ok(iv) => Ok(Some(iv)),
            Err(Error::RootSearch(_)) | Err(Error::Degenerate(_)) => Ok(None),
            Err(e) => Err(e),
        }
    })
}

pub fn write_coverage_csv<W: std::io::Write>(rows: &[CoverageRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(crate::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_smoke() {
        let rows = table1(10, 100, 3).unwrap();
        assert_eq!(rows.len(), 5);
        for (row, &pt) in rows.iter().zip(TABLE1_TAIL_POINTS.iter()) {
            assert_eq!(row.phi_x_tilde, pt);
            assert!(row.direct_mean >= 0.0 && row.direct_mean <= 1.0);
            assert!(row.importance_mean >= 0.0 && row.importance_mean <= 1.0);
            // Estimates concentrate near the normal tail value.
            assert!((row.importance_mean - pt).abs() < 0.1);
        }
        // Deterministic in the seed.
        let again = table1(10, 100, 3).unwrap();
        assert_eq!(rows[0].direct_mean, again[0].direct_mean);
        assert_eq!(rows[4].importance_sd, again[4].importance_sd);
    }

    #[test]
    fn example2_scenario_shape() {
        let (sc, spec) = example2_scenario(0.5_f64.ln());
        assert_eq!(sc.n, 350);
        assert_eq!(sc.analysis_times.len(), 10);
        assert_eq!(sc.analysis_times[0], 1.0);
        assert_eq!(*sc.analysis_times.last().unwrap(), 5.5);
        assert!(matches!(spec.boundary, BoundarySpec::Example18));
        sc.validate().unwrap();
    }

    #[test]
    fn brownian_coverage_smoke() {
        let rows = example2_brownian(40, 9, &[0.0]).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert!(r.failures < 10, "failures {}", r.failures);
        assert!(r.lower_noncoverage_pct + r.upper_noncoverage_pct < 40.0);
    }

    #[test]
    fn hybrid_coverage_smoke() {
        let rows = example2_hybrid(12, 120, 4, &[0.0]).unwrap();
        let r = &rows[0];
        assert!(r.failures <= 3, "failures {}", r.failures);
        assert!(r.lower_noncoverage_pct + r.upper_noncoverage_pct <= 35.0);
    }
}
