//! Resampling machinery: importance resampling for bootstrap tail
//! probabilities of the Mann-Whitney statistic, sample-space orderings for
//! sequential outcomes, and hybrid-resampling confidence sets for the Cox
//! regression parameter with a one-pass importance-sampling accelerator.

use std::cmp::Ordering;

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary_engine::{PassageOptions, Propagator};
use crate::numeric::{norm_cdf, norm_pdf, pairwise_sum};
use crate::rank_stats::cox_score_info_at;
use crate::survival_core::{
    breslow_cumhaz, kaplan_meier, snapshot, Group, StepFunction, SubjectRecord, TrialData,
};
use crate::trial_sim::{replicate_rng, run_test, MaxInfoRule, SequentialOutcome, TestSpec};
use crate::{Error, Result};

/// Mann-Whitney statistic U = sum over pairs of sign(X_i - Y_j); ties score
/// zero.
pub fn mann_whitney(xs: &[f64], ys: &[f64]) -> i64 {
    let mut u = 0i64;
    for &x in xs {
        for &y in ys {
            u += match x.partial_cmp(&y).expect("non-finite sample value") {
                Ordering::Greater => 1,
                Ordering::Less => -1,
                Ordering::Equal => 0,
            };
        }
    }
    u
}

/// Exponentially tilted resampling weights over the second sample, chosen to
/// concentrate resamples near the tail event {U* <= x}.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResamplingWeights {
    /// p_i over the second sample; strictly positive, sums to 1.
    pub p: Vec<f64>,
    /// Tilt parameter A >= 0; zero gives uniform weights.
    pub tilt: f64,
    /// Per-item scores u_j = sum_i sign(X_i - Y_j).
    pub u: Vec<f64>,
    /// Standardized scores u~_i = (u_i - ubar) / sqrt(sum (u_i - ubar)^2).
    pub u_tilde: Vec<f64>,
    /// Standardized tail point (x - n ubar) / sqrt(sum (u_i - ubar)^2).
    pub x_tilde: f64,
    /// Set when the scores were all equal and uniform weights were returned.
    pub degenerate: bool,
}

impl ResamplingWeights {
    pub fn uniform(u: Vec<f64>, x_tilde: f64, degenerate: bool) -> Self {
        let n = u.len();
        let u_tilde = standardized_scores(&u).unwrap_or_else(|| vec![0.0; n]);
        ResamplingWeights { p: vec![1.0 / n as f64; n], tilt: 0.0, u, u_tilde, x_tilde, degenerate }
    }
}

fn item_scores(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    ys.iter()
        .map(|&y| {
            xs.iter()
                .map(|&x| match x.partial_cmp(&y).expect("non-finite sample value") {
                    Ordering::Greater => 1.0,
                    Ordering::Less => -1.0,
                    Ordering::Equal => 0.0,
                })
                .sum()
        })
        .collect()
}

fn standardized_scores(u: &[f64]) -> Option<Vec<f64>> {
    let n = u.len() as f64;
    let ubar = pairwise_sum(u) / n;
    let ss: f64 = u.iter().map(|&v| (v - ubar) * (v - ubar)).sum();
    if ss <= 0.0 {
        return None;
    }
    let norm = ss.sqrt();
    Some(u.iter().map(|&v| (v - ubar) / norm).collect())
}

/// Weights p_i = exp(-A u~_i) / sum_j exp(-A u~_j) with A > 0 minimizing
/// Phi(x~ - A) exp(A^2), found from the stationarity equation
/// 2 A Phi(x~ - A) = phi(x~ - A) by bisection. For x~ >= 0 (the tail point
/// is not in the lower tail) or degenerate scores, uniform weights.
pub fn optimal_weights(xs: &[f64], ys: &[f64], x: f64) -> Result<ResamplingWeights> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Invalid("optimal_weights: empty sample".into()));
    }
    let n = ys.len() as f64;
    let u = item_scores(xs, ys);
    let ubar = pairwise_sum(&u) / n;
    let ss: f64 = u.iter().map(|&v| (v - ubar) * (v - ubar)).sum();
    if ss <= 0.0 {
        return Ok(ResamplingWeights::uniform(u, 0.0, true));
    }
    let x_tilde = (x - n * ubar) / ss.sqrt();
    if x_tilde >= 0.0 {
        return Ok(ResamplingWeights::uniform(u, x_tilde, false));
    }
    let u_tilde = standardized_scores(&u).unwrap();
    // h'(A) = 0 with h(A) = Phi(x~ - A) e^{A^2}; h' < 0 at A = 0 when x~ < 0.
    let g = |a: f64| 2.0 * a * norm_cdf(x_tilde - a) - norm_pdf(x_tilde - a);
    let hi = -x_tilde + 10.0;
    let tilt = crate::numeric::bisect(g, 0.0, hi, 1e-10, 0.0)?;
    let raw: Vec<f64> = u_tilde.iter().map(|&v| (-tilt * v).exp()).collect();
    let total = pairwise_sum(&raw);
    let p = raw.into_iter().map(|w| w / total).collect();
    Ok(ResamplingWeights { p, tilt, u, u_tilde, x_tilde, degenerate: false })
}

/// Estimate P(U* <= x | X, Y) by weighted bootstrap: the first sample is
/// fixed, the second is resampled B times with probabilities p_i, and each
/// resample contributes 1{U_b <= x} * prod_i (n p_i)^{-M_bi}. Returns the
/// mean and its Monte Carlo standard error. Uniform weights recover the
/// plain bootstrap estimator.
pub fn importance_bootstrap_tail<R: Rng>(
    _xs: &[f64],
    ys: &[f64],
    x: f64,
    b: usize,
    w: &ResamplingWeights,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if b == 0 {
        return Err(Error::Invalid("importance_bootstrap_tail: B must be >= 1".into()));
    }
    let n = ys.len();
    if w.p.len() != n || w.u.len() != n {
        return Err(Error::Invalid("importance_bootstrap_tail: weight length mismatch".into()));
    }
    let sampler =
        WeightedIndex::new(&w.p).map_err(|e| Error::Invalid(format!("bad weights: {e}")))?;
    let log_np: Vec<f64> = w.p.iter().map(|&p| (n as f64 * p).ln()).collect();
    let mut contributions = Vec::with_capacity(b);
    let mut counts = vec![0u32; n];
    for _ in 0..b {
        counts.iter_mut().for_each(|c| *c = 0);
        for _ in 0..n {
            counts[sampler.sample(rng)] += 1;
        }
        let mut u_star = 0.0;
        let mut log_weight = 0.0;
        for (i, &m) in counts.iter().enumerate() {
            if m > 0 {
                u_star += m as f64 * w.u[i];
                log_weight -= m as f64 * log_np[i];
            }
        }
        contributions.push(if u_star <= x { log_weight.exp() } else { 0.0 });
    }
    let mean = pairwise_sum(&contributions) / b as f64;
    let var: f64 = contributions.iter().map(|&c| (c - mean) * (c - mean)).sum::<f64>()
        / (b as f64 * (b as f64 - 1.0).max(1.0));
    Ok((mean, var.sqrt()))
}

/// Total ordering on sequential outcomes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OrderingScheme {
    /// Siegmund's ordering of (stop stage t, statistic s): greater when
    /// (i) t = t' and s > s', (ii) t < t' and s >= upper_t, or (iii) t > t'
    /// and s' <= lower_{t'}. Requires the outcome that stopped earlier to
    /// have crossed one of its stage boundaries.
    Siegmund { lower: Vec<f64>, upper: Vec<f64> },
    /// Compare the score-to-information ratio S/V at the earlier of the two
    /// stop stages.
    PsiPath,
}

/// Trichotomous comparison of two sequential outcomes under a scheme.
pub fn order_outcomes(
    o1: &SequentialOutcome,
    o2: &SequentialOutcome,
    scheme: &OrderingScheme,
) -> Result<Ordering> {
    match scheme {
        OrderingScheme::PsiPath => {
            let j = o1.stop_index.min(o2.stop_index);
            let r1 = o1.path.get(j).ok_or_else(|| {
                Error::Invalid(format!("first outcome path has no entry at stage {j}"))
            })?;
            let r2 = o2.path.get(j).ok_or_else(|| {
                Error::Invalid(format!("second outcome path has no entry at stage {j}"))
            })?;
            Ok(r1.ratio().total_cmp(&r2.ratio()))
        }
        OrderingScheme::Siegmund { lower, upper } => {
            let (t1, s1) = (o1.stop_index, o1.stop_record().statistic);
            let (t2, s2) = (o2.stop_index, o2.stop_record().statistic);
            if t1 == t2 {
                return Ok(s1.total_cmp(&s2));
            }
            // The earlier stop must have crossed its stage boundary.
            let (t, s, flipped) = if t1 < t2 { (t1, s1, false) } else { (t2, s2, true) };
            let bound = |v: &[f64]| {
                v.get(t).copied().ok_or_else(|| {
                    Error::Invalid(format!("Siegmund ordering: no boundary at stage {t}"))
                })
            };
            let cmp = if s >= bound(upper)? {
                Ordering::Greater
            } else if s <= bound(lower)? {
                Ordering::Less
            } else {
                return Err(Error::Invalid(format!(
                    "Siegmund ordering: stop at stage {t} with statistic {s} strictly inside the boundary"
                )));
            };
            Ok(if flipped { cmp.reverse() } else { cmp })
        }
    }
}

/// Cox partial-likelihood maximizer at a snapshot: Newton iteration on the
/// score with a bracketed-bisection fallback.
pub fn cox_mle(snap: &crate::survival_core::TrialSnapshot) -> Result<f64> {
    let (_, v0) = cox_score_info_at(snap, 0.0);
    if !(v0 > 0.0) {
        return Err(Error::Degenerate("cox_mle: zero information at beta = 0".into()));
    }
    let mut beta = 0.0;
    for _ in 0..60 {
        let (s, v) = cox_score_info_at(snap, beta);
        if !(v > 0.0) {
            break;
        }
        let step = s / v;
        beta += step.clamp(-2.0, 2.0);
        if step.abs() < 1e-10 {
            return Ok(beta);
        }
    }
    crate::numeric::bisect(|b| cox_score_info_at(snap, b).0, -1.0, 1.0, 1e-12, 1e-10)
}

/// Nuisance quantities estimated from the observed trial, fixed during
/// hybrid resampling: Cox estimate, Breslow baseline cumulative hazard,
/// Kaplan-Meier withdrawal distribution, and the empirical accrual pattern.
#[derive(Debug, Clone)]
pub struct HybridModel {
    pub beta_hat: f64,
    /// Information-based standard error 1/sqrt(V(beta_hat)) at the stop.
    pub se: f64,
    /// Breslow baseline cumulative hazard at beta_hat, from the data at the
    /// stopping time.
    pub baseline: StepFunction,
    /// Withdrawal-time distribution function; None when no withdrawals were
    /// observed (withdrawal impossible in the resampled world).
    pub withdrawal_cdf: Option<StepFunction>,
    /// Observed entry times; simulated entries are drawn uniformly from
    /// these.
    pub entry_times: Vec<f64>,
    /// Observed covariates, replayed subject-for-subject.
    pub covariates: Vec<f64>,
    /// Design replayed on every simulated trial.
    pub spec: TestSpec,
    pub analysis_times: Vec<f64>,
}

/// Fit the hybrid model from the observed trial stopped at
/// `analysis_times[stop_index]`.
pub fn fit_hybrid_model(
    data: &TrialData,
    spec: &TestSpec,
    analysis_times: &[f64],
    stop_index: usize,
) -> Result<HybridModel> {
    let tau = *analysis_times
        .get(stop_index)
        .ok_or_else(|| Error::Invalid(format!("stop index {stop_index} outside calendar")))?;
    let snap = snapshot(data, tau);
    let beta_hat = cox_mle(&snap)?;
    let (_, info) = cox_score_info_at(&snap, beta_hat);
    if !(info > 0.0) {
        return Err(Error::Degenerate("fit_hybrid_model: zero information at beta_hat".into()));
    }
    let baseline = breslow_cumhaz(&snap, beta_hat)?.cumhaz;

    // Withdrawal times are censored by min(survival, administrative
    // follow-up); Kaplan-Meier on that censored sample estimates C.
    let mut withdrawal_obs = Vec::new();
    let mut any_withdrawal = false;
    for s in &data.subjects {
        let follow = (tau - s.entry_time).max(0.0);
        let cap = s.survival_time.min(follow);
        let time = s.withdrawal_time.min(cap);
        let event = s.withdrawal_time < cap;
        any_withdrawal |= event;
        if time > 0.0 && time.is_finite() {
            withdrawal_obs.push((time, event));
        }
    }
    let withdrawal_cdf =
        if any_withdrawal { Some(kaplan_meier(&withdrawal_obs)?) } else { None };

    Ok(HybridModel {
        beta_hat,
        se: 1.0 / info.sqrt(),
        baseline,
        withdrawal_cdf,
        entry_times: data.subjects.iter().map(|s| s.entry_time).collect(),
        covariates: data.subjects.iter().map(|s| s.covariate).collect(),
        spec: spec.clone(),
        analysis_times: analysis_times.to_vec(),
    })
}

/// Smallest jump time of a nondecreasing step function whose value reaches
/// `level`; infinity when the level is never reached.
fn step_inverse(f: &StepFunction, level: f64) -> f64 {
    let i = f.values().partition_point(|&v| v < level);
    f.jump_times().get(i).map_or(f64::INFINITY, |_| f.jump_times()[i])
}

/// One trial drawn from the proportional-hazards model with the fitted
/// nuisance curves and regression parameter `beta`.
pub fn simulate_hybrid_trial<R: Rng>(model: &HybridModel, beta: f64, rng: &mut R) -> TrialData {
    let n_entries = model.entry_times.len();
    let subjects = model
        .covariates
        .iter()
        .map(|&z| {
            let entry_time = model.entry_times[rng.gen_range(0..n_entries)];
            // Survival: smallest s with e^{beta z} Lambda(s) >= Exp(1) draw.
            let e: f64 = -rng.gen_range(f64::MIN_POSITIVE..1.0_f64).ln();
            let survival_time = step_inverse(&model.baseline, e * (-beta * z).exp());
            let withdrawal_time = match &model.withdrawal_cdf {
                None => f64::INFINITY,
                Some(cdf) => {
                    let u: f64 = rng.gen_range(0.0..1.0);
                    step_inverse(cdf, u + f64::MIN_POSITIVE)
                }
            };
            SubjectRecord {
                entry_time,
                survival_time,
                withdrawal_time,
                group: if z >= 0.5 { Group::X } else { Group::Y },
                covariate: z,
            }
        })
        .collect();
    TrialData { subjects }
}

/// Per-replicate sufficient statistics for the full-likelihood ratio at the
/// replicate's own stopping time: the event-covariate sum and the baseline
/// cumulative hazard accumulated per distinct covariate value.
#[derive(Debug, Clone)]
pub struct ReplicateSummary {
    pub outcome: SequentialOutcome,
    pub event_z_sum: f64,
    /// (covariate value, sum of Lambda-hat at the observed times).
    pub lambda_by_z: Vec<(f64, f64)>,
}

impl ReplicateSummary {
    /// L(beta) / L(beta_sim) for this replicate:
    /// exp((beta - beta_sim) * sum_events z
    ///     - sum_i (e^{beta z_i} - e^{beta_sim z_i}) Lambda(X_i)).
    pub fn likelihood_ratio(&self, beta: f64, beta_sim: f64) -> f64 {
        let mut log_lr = (beta - beta_sim) * self.event_z_sum;
        for &(z, lam) in &self.lambda_by_z {
            log_lr -= ((beta * z).exp() - (beta_sim * z).exp()) * lam;
        }
        log_lr.exp()
    }
}

/// Replicates simulated once under `beta_sim`, reusable for every tilt.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub beta_sim: f64,
    pub replicates: Vec<ReplicateSummary>,
}

/// Simulate `b` replicates under `beta_sim`, summarizing each for later
/// reweighting. Replicate r uses the (seed, r) random stream.
pub fn simulate_ensemble(
    model: &HybridModel,
    beta_sim: f64,
    b: usize,
    seed: u64,
) -> Result<Ensemble> {
    if b == 0 {
        return Err(Error::Invalid("simulate_ensemble: B must be >= 1".into()));
    }
    let replicates: Vec<ReplicateSummary> = (0..b as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let data = simulate_hybrid_trial(model, beta_sim, &mut rng);
            let outcome = run_test(&data, &model.spec, &model.analysis_times)?;
            let tau = model.analysis_times[outcome.stop_index];
            let snap = snapshot(&data, tau);
            let mut event_z_sum = 0.0;
            let mut by_z: Vec<(f64, f64)> = Vec::new();
            for o in &snap.observations {
                if o.event {
                    event_z_sum += o.covariate;
                }
                let lam = model.baseline.eval(o.time);
                match by_z.iter_mut().find(|(z, _)| *z == o.covariate) {
                    Some(slot) => slot.1 += lam,
                    None => by_z.push((o.covariate, lam)),
                }
            }
            Ok(ReplicateSummary { outcome, event_z_sum, lambda_by_z: by_z })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble { beta_sim, replicates })
}

/// How p-hat(beta) is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhatMode {
    /// Fresh simulation under each candidate beta.
    Direct,
    /// Ensembles reweighted by the likelihood ratio, starting from one at
    /// beta_hat and re-centered whenever an evaluation point drifts more
    /// than one standard error from every existing ensemble.
    Importance,
}

fn default_bracket_sd() -> f64 {
    5.0
}

fn default_beta_tol() -> f64 {
    1e-4
}

fn default_ordering() -> OrderingScheme {
    OrderingScheme::PsiPath
}

/// Configuration of the hybrid resampling procedure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HybridConfig {
    pub b: usize,
    pub seed: u64,
    #[serde(default = "default_ordering")]
    pub ordering: OrderingScheme,
    pub mode: PhatMode,
    /// Half-width of the root-search bracket in information-based standard
    /// errors around beta_hat.
    #[serde(default = "default_bracket_sd")]
    pub bracket_sd: f64,
    /// Bisection tolerance on beta.
    #[serde(default = "default_beta_tol")]
    pub beta_tol: f64,
}

impl HybridConfig {
    pub fn new(b: usize, seed: u64, mode: PhatMode) -> Self {
        HybridConfig {
            b,
            seed,
            ordering: default_ordering(),
            mode,
            bracket_sd: default_bracket_sd(),
            beta_tol: default_beta_tol(),
        }
    }
}

/// p-hat(beta) estimate with its Monte Carlo standard error and the count of
/// replicates excluded for non-finite likelihood ratios.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhatEstimate {
    pub estimate: f64,
    pub se: f64,
    pub excluded: usize,
}

/// Reweight an existing ensemble to estimate
/// p-hat(beta) = P_beta{(tau, Psi_tau) > observed}.
///
/// The weighted fraction is self-normalized (sum wI / sum w): the raw mean
/// of likelihood ratios is carried by rare tail replicates once beta moves a
/// few standard errors from the simulation parameter, while the normalized
/// form stays stable and coincides exactly with the direct estimator when
/// beta equals the simulation parameter.
pub fn p_hat_from_ensemble(
    ensemble: &Ensemble,
    beta: f64,
    observed: &SequentialOutcome,
    ordering: &OrderingScheme,
) -> Result<PhatEstimate> {
    let mut weights = Vec::with_capacity(ensemble.replicates.len());
    let mut hits = Vec::with_capacity(ensemble.replicates.len());
    let mut excluded = 0usize;
    for rep in &ensemble.replicates {
        let w = rep.likelihood_ratio(beta, ensemble.beta_sim);
        if !w.is_finite() {
            excluded += 1;
            continue;
        }
        let exceeds = order_outcomes(&rep.outcome, observed, ordering)? == Ordering::Greater;
        weights.push(w);
        hits.push(if exceeds { w } else { 0.0 });
    }
    if weights.is_empty() {
        return Err(Error::Degenerate("p_hat: every replicate excluded".into()));
    }
    let total = pairwise_sum(&weights);
    if !(total > 0.0) {
        return Err(Error::Degenerate("p_hat: all likelihood ratios underflowed".into()));
    }
    let estimate = pairwise_sum(&hits) / total;
    // Delta-method standard error of the ratio estimator.
    let var: f64 = weights
        .iter()
        .zip(hits.iter())
        .map(|(&w, &h)| {
            let d = h - estimate * w;
            d * d
        })
        .sum::<f64>()
        / (total * total);
    Ok(PhatEstimate { estimate, se: var.sqrt(), excluded })
}

/// Estimate p-hat(beta) per the configured mode.
pub fn p_hat(
    beta: f64,
    observed: &SequentialOutcome,
    model: &HybridModel,
    cfg: &HybridConfig,
) -> Result<PhatEstimate> {
    let beta_sim = match cfg.mode {
        PhatMode::Direct => beta,
        PhatMode::Importance => model.beta_hat,
    };
    let ensemble = simulate_ensemble(model, beta_sim, cfg.b, cfg.seed)?;
    p_hat_from_ensemble(&ensemble, beta, observed, &cfg.ordering)
}

/// Hybrid-resampling confidence interval with its evaluation trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HybridInterval {
    pub beta_hat: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub mode: PhatMode,
    pub b: usize,
    pub excluded: usize,
    /// (beta, p-hat) pairs evaluated during the root searches.
    pub trace: Vec<(f64, f64)>,
}

/// Confidence set {beta : alpha < p-hat(beta) < 1 - alpha}, found by
/// monotone bisection over beta_hat +/- bracket_sd standard errors.
pub fn hybrid_confidence_set(
    observed: &SequentialOutcome,
    alpha: f64,
    model: &HybridModel,
    cfg: &HybridConfig,
) -> Result<HybridInterval> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Invalid(format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    // Importance mode keeps a cache of ensembles and simulates a new one
    // whenever the candidate beta is more than one standard error from every
    // cached simulation point: reweighting further than that leaves an
    // effective sample size too small to locate the endpoints. All ensembles
    // share the seed, so evaluations are coupled and p-hat stays monotone.
    let mut cache: Vec<Ensemble> = Vec::new();
    if cfg.mode == PhatMode::Importance {
        cache.push(simulate_ensemble(model, model.beta_hat, cfg.b, cfg.seed)?);
    }
    let radius = model.se;
    let mut trace = Vec::new();
    let mut excluded = 0usize;
    let mut eval = |beta: f64, trace: &mut Vec<(f64, f64)>| -> Result<f64> {
        let est = match cfg.mode {
            PhatMode::Importance => {
                let nearest = cache
                    .iter()
                    .enumerate()
                    .min_by(|a, b| {
                        (a.1.beta_sim - beta).abs().total_cmp(&(b.1.beta_sim - beta).abs())
                    })
                    .map(|(i, e)| (i, (e.beta_sim - beta).abs()))
                    .expect("cache seeded above");
                let idx = if nearest.1 <= radius {
                    nearest.0
                } else {
                    cache.push(simulate_ensemble(model, beta, cfg.b, cfg.seed)?);
                    cache.len() - 1
                };
                p_hat_from_ensemble(&cache[idx], beta, observed, &cfg.ordering)?
            }
            PhatMode::Direct => {
                let ens = simulate_ensemble(model, beta, cfg.b, cfg.seed)?;
                p_hat_from_ensemble(&ens, beta, observed, &cfg.ordering)?
            }
        };
        excluded = excluded.max(est.excluded);
        trace.push((beta, est.estimate));
        Ok(est.estimate)
    };
    let p_center = eval(model.beta_hat, &mut trace)?;
    // Walk outward from beta_hat in half-SE steps until the target is
    // crossed, then bisect inside that one-step bracket. Evaluations near
    // beta_hat are the reliable ones (importance weights degenerate at the
    // bracket edges), and p-hat is nondecreasing in beta.
    let step = 0.5 * model.se;
    let max_steps = (2.0 * cfg.bracket_sd).ceil() as usize;
    let mut solve = |target: f64, trace: &mut Vec<(f64, f64)>| -> Result<f64> {
        let direction = if p_center >= target { -1.0 } else { 1.0 };
        let mut prev = model.beta_hat;
        let mut crossed = None;
        for s in 1..=max_steps {
            let beta = model.beta_hat + direction * step * s as f64;
            let p = eval(beta, trace)?;
            if (direction < 0.0 && p < target) || (direction > 0.0 && p >= target) {
                crossed = Some(beta);
                break;
            }
            prev = beta;
        }
        let Some(crossed) = crossed else {
            let edge = model.beta_hat + direction * cfg.bracket_sd * model.se;
            let p_edge = eval(edge, trace)?;
            return Err(Error::RootSearch(format!(
                "p-hat = {target} not reached inside the bracket: p({edge:.4}) = {p_edge:.4}"
            )));
        };
        let (mut lo, mut hi) = if direction < 0.0 { (crossed, prev) } else { (prev, crossed) };
        while hi - lo > cfg.beta_tol {
            let mid = 0.5 * (lo + hi);
            if eval(mid, trace)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    let lower = solve(alpha, &mut trace)?;
    let upper = solve(1.0 - alpha, &mut trace)?;
    Ok(HybridInterval {
        beta_hat: model.beta_hat,
        se: model.se,
        lower,
        upper,
        alpha,
        mode: cfg.mode,
        b: cfg.b,
        excluded,
        trace,
    })
}

/// P_beta{(T, S_T) >= observed} under the space-time Brownian approximation
/// of the score process with Siegmund's ordering: the score at information v
/// is treated as Brownian motion with drift beta per unit information,
/// monitored on the observed information grid with per-stage continuation
/// intervals (lower_j, upper_j). The probability is the chance of an upper
/// exit before the observed stop plus the chance of reaching it with
/// S >= s_obs.
pub fn brownian_siegmund_p(
    info: &[f64],
    lower: &[f64],
    upper: &[f64],
    t_obs: usize,
    s_obs: f64,
    beta: f64,
) -> Result<f64> {
    if info.is_empty() || info[0] <= 0.0 || info.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid(
            "brownian_siegmund_p: information must be positive and strictly increasing".into(),
        ));
    }
    if t_obs >= info.len() || lower.len() != info.len() || upper.len() != info.len() {
        return Err(Error::Invalid("brownian_siegmund_p: grid length mismatch".into()));
    }
    // 192 nodes keep the probability error near 1e-5, well inside the
    // tolerance of the interval inversions built on this.
    let mut prop = Propagator::new(beta, PassageOptions { nodes: 192, span_sd: 8.0 });
    let mut p = 0.0;
    for j in 0..t_obs {
        let (_, up) = prop.advance(info[j], lower[j], upper[j]);
        p += up;
    }
    let (_, above) = prop.exit_if(info[t_obs], f64::NEG_INFINITY, s_obs);
    Ok(p + above)
}

/// Brownian-approximation comparator interval for the maximum-information
/// design: Siegmund ordering on the observed score path, interim
/// continuation +/- interim_threshold * sqrt(v) where the information floor
/// is passed.
pub fn brownian_interval(
    observed: &SequentialOutcome,
    alpha: f64,
    rule: &MaxInfoRule,
    center: f64,
    half_width: f64,
) -> Result<(f64, f64)> {
    let usable: Vec<&crate::trial_sim::AnalysisRecord> =
        observed.path.iter().filter(|r| !r.skipped).collect();
    if usable.is_empty() {
        return Err(Error::Degenerate("brownian_interval: no usable analyses".into()));
    }
    let info: Vec<f64> = usable.iter().map(|r| r.variance).collect();
    let k = info.len();
    let mut up = vec![f64::INFINITY; k];
    let mut lo = vec![f64::NEG_INFINITY; k];
    for j in 0..k - 1 {
        if info[j] >= rule.info_floor {
            up[j] = rule.interim_threshold * info[j].sqrt();
            lo[j] = -up[j];
        }
    }
    let s_obs = usable[k - 1].statistic;
    let p = |beta: f64| brownian_siegmund_p(&info, &lo, &up, k - 1, s_obs, beta);
    let solve = |target: f64| -> Result<f64> {
        crate::numeric::bisect(
            |beta| p(beta).map_or(f64::NAN, |v| v - target),
            center - half_width,
            center + half_width,
            1e-6,
            0.0,
        )
    };
    Ok((solve(alpha)?, solve(1.0 - alpha)?))
}
