//! Time-sequential censored rank statistics, their variance estimates, the
//! Cox partial-likelihood score and information, and the asymptotic moment
//! integrals used as numerical oracles.
//!
//! The statistic is a weighted sum over observed events of the difference
//! between the event indicator and the at-risk proportion, with weights
//! evaluated at the left limit of the pooled product-limit estimate so that
//! the weight process is predictable. X-group events enter with positive
//! sign.

use std::sync::Arc;

use crate::numeric::integrate;
use crate::survival_core::{pooled_product_limit, Group, StepFunction, TrialSnapshot};
use crate::{Error, Result};

/// Quadrature tolerance for the score conversion and moment integrals.
const QUAD_TOL: f64 = 1e-10;

/// Shared real function of one variable.
pub type Curve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Score weight psi evaluated at values of the pooled product-limit estimate.
#[derive(Clone)]
pub enum WeightFunction {
    /// psi(u) = (1-u)^rho. rho = 0 is the logrank weight, rho = 1 the
    /// Peto-Prentice Wilcoxon generalization.
    GRho(f64),
    /// Piecewise-linear interpolation of (u, psi) pairs.
    Tabulated { us: Vec<f64>, psis: Vec<f64> },
    /// psi derived from a classical score function phi; evaluation clamps u
    /// at 1 - 1/(2n) to keep phi-derived weights bounded.
    Derived { phi: Curve, clamp_n: usize },
}

impl std::fmt::Debug for WeightFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightFunction::GRho(r) => write!(f, "GRho({r})"),
            WeightFunction::Tabulated { us, .. } => write!(f, "Tabulated({} pts)", us.len()),
            WeightFunction::Derived { clamp_n, .. } => write!(f, "Derived(clamp_n={clamp_n})"),
        }
    }
}

impl WeightFunction {
    pub fn logrank() -> Self {
        WeightFunction::GRho(0.0)
    }

    pub fn tabulated(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Invalid("tabulated weight: empty table".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (us, psis) = points.into_iter().unzip();
        Ok(WeightFunction::Tabulated { us, psis })
    }

    /// Evaluate psi(u), u in [0, 1).
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            WeightFunction::GRho(rho) => {
                if *rho == 0.0 {
                    1.0
                } else {
                    (1.0 - u).powf(*rho)
                }
            }
            WeightFunction::Tabulated { us, psis } => {
                if u <= us[0] {
                    return psis[0];
                }
                if u >= *us.last().unwrap() {
                    return *psis.last().unwrap();
                }
                let i = us.partition_point(|&x| x <= u);
                let (u0, u1) = (us[i - 1], us[i]);
                let w = (u - u0) / (u1 - u0);
                psis[i - 1] * (1.0 - w) + psis[i] * w
            }
            WeightFunction::Derived { phi, clamp_n } => {
                let cap = 1.0 - 1.0 / (2.0 * *clamp_n as f64);
                let u = u.min(cap);
                // psi(u) = phi(u) - (1-u)^{-1} \int_u^1 phi. The upper limit
                // stops just short of 1 so integrable endpoint singularities
                // (e.g. the savage score) stay finite; the omitted sliver is
                // below the quadrature tolerance.
                let hi = 1.0 - 1e-13;
                let integral = integrate(|t| phi(t), u.min(hi), hi, QUAD_TOL)
                    .expect("score-conversion quadrature failed");
                phi(u) - integral / (1.0 - u)
            }
        }
    }

    /// Parse a config name: `logrank`, `grho:<rho>`, or `phi:<builtin>`
    /// (`phi:wilcoxon` for 2u-1, `phi:savage` for -log(1-u)-1).
    /// `table:<path>` is resolved by the CLI layer.
    pub fn from_name(name: &str, n: usize) -> Result<Self> {
        if name == "logrank" {
            return Ok(WeightFunction::logrank());
        }
        if let Some(rho) = name.strip_prefix("grho:") {
            let rho: f64 = rho
                .parse()
                .map_err(|_| Error::Invalid(format!("bad grho parameter {rho:?}")))?;
            if rho < 0.0 {
                return Err(Error::Invalid("grho parameter must be >= 0".into()));
            }
            return Ok(WeightFunction::GRho(rho));
        }
        if let Some(builtin) = name.strip_prefix("phi:") {
            let phi: Curve = match builtin {
                "wilcoxon" => Arc::new(|u: f64| 2.0 * u - 1.0),
                "savage" => Arc::new(|u: f64| -(1.0 - u).ln() - 1.0),
                other => {
                    return Err(Error::Invalid(format!("unknown builtin score {other:?}")))
                }
            };
            return Ok(score_to_weight(phi, n));
        }
        Err(Error::Invalid(format!("unknown weight function {name:?}")))
    }
}

/// Convert a classical score function phi on (0, 1] to the censored-data
/// weight psi(u) = phi(u) - (1-u)^{-1} \int_u^1 phi(t) dt.
pub fn score_to_weight(phi: Curve, clamp_n: usize) -> WeightFunction {
    WeightFunction::Derived { phi, clamp_n: clamp_n.max(1) }
}

/// Variance estimator variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum VarianceVariant {
    A,
    B,
    C,
}

struct SweepTotals {
    statistic: f64,
    var_a: f64,
    var_b: f64,
}

/// One pass over distinct event times with left-limit risk sets.
fn sweep(snap: &TrialSnapshot, w: &WeightFunction) -> Result<SweepTotals> {
    if snap.group_size(Group::X) == 0 || snap.group_size(Group::Y) == 0 {
        return Err(Error::Degenerate(
            "rank statistic requires both groups nonempty".into(),
        ));
    }
    let mut totals = SweepTotals { statistic: 0.0, var_a: 0.0, var_b: 0.0 };
    if snap.event_count() == 0 {
        return Ok(totals);
    }
    let h = pooled_product_limit(snap)?;

    let obs = &snap.observations;
    let n = obs.len();
    let mut m_x = snap
        .observations
        .iter()
        .filter(|o| o.group == Group::X && o.time > 0.0)
        .count() as f64;
    let mut m_y = snap
        .observations
        .iter()
        .filter(|o| o.group == Group::Y && o.time > 0.0)
        .count() as f64;
    let mut i = obs.partition_point(|o| o.time <= 0.0);
    while i < n {
        let u = obs[i].time;
        let start = i;
        let mut d_x = 0.0;
        let mut d_y = 0.0;
        while i < n && obs[i].time == u {
            if obs[i].event {
                match obs[i].group {
                    Group::X => d_x += 1.0,
                    Group::Y => d_y += 1.0,
                }
            }
            i += 1;
        }
        let m = m_x + m_y;
        if (d_x > 0.0 || d_y > 0.0) && m > 0.0 {
            let psi = w.eval(h.left_limit(u));
            totals.statistic += psi * (d_x * m_y - d_y * m_x) / m;
            let psi2 = psi * psi;
            let mm = m_x * m_y;
            totals.var_a += psi2 * mm / (m * m) * (d_x + d_y);
            totals.var_b += psi2 / (m * m) * (m_y * m_y * d_x + m_x * m_x * d_y);
        }
        for o in &obs[start..i] {
            match o.group {
                Group::X => m_x -= 1.0,
                Group::Y => m_y -= 1.0,
            }
        }
    }
    Ok(totals)
}

/// The time-sequential censored rank statistic S_n(t).
pub fn rank_statistic(snap: &TrialSnapshot, w: &WeightFunction) -> Result<f64> {
    Ok(sweep(snap, w)?.statistic)
}

/// Null-variance estimate V_n(t) of the rank statistic.
pub fn variance_estimate(
    snap: &TrialSnapshot,
    w: &WeightFunction,
    variant: VarianceVariant,
) -> Result<f64> {
    let t = sweep(snap, w)?;
    Ok(match variant {
        VarianceVariant::A => t.var_a,
        VarianceVariant::B => t.var_b,
        VarianceVariant::C => (t.var_a + t.var_b) / 2.0,
    })
}

/// Statistic and variance from a single sweep.
pub fn rank_statistic_with_variance(
    snap: &TrialSnapshot,
    w: &WeightFunction,
    variant: VarianceVariant,
) -> Result<(f64, f64)> {
    let t = sweep(snap, w)?;
    let v = match variant {
        VarianceVariant::A => t.var_a,
        VarianceVariant::B => t.var_b,
        VarianceVariant::C => (t.var_a + t.var_b) / 2.0,
    };
    Ok((t.statistic, v))
}

/// Cox partial-likelihood score and observed information at `beta`, with risk
/// sets over observed times at calendar time t.
pub fn cox_score_info_at(snap: &TrialSnapshot, beta: f64) -> (f64, f64) {
    let obs = &snap.observations;
    let n = obs.len();
    // Sweep ascending, maintaining risk-set sums of e^{bz}, z e^{bz}, z^2 e^{bz}
    // over subjects with observed time >= current (excluding zero-time rows,
    // which are never at risk at a positive event time).
    let first = obs.partition_point(|o| o.time <= 0.0);
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for o in &obs[first..] {
        let e = (beta * o.covariate).exp();
        s0 += e;
        s1 += o.covariate * e;
        s2 += o.covariate * o.covariate * e;
    }
    let mut score = 0.0;
    let mut info = 0.0;
    let mut i = first;
    while i < n {
        let u = obs[i].time;
        let start = i;
        while i < n && obs[i].time == u {
            i += 1;
        }
        if s0 > 0.0 {
            let mean = s1 / s0;
            let var = (s2 / s0 - mean * mean).max(0.0);
            for o in &obs[start..i] {
                if o.event {
                    score += o.covariate - mean;
                    info += var;
                }
            }
        }
        for o in &obs[start..i] {
            let e = (beta * o.covariate).exp();
            s0 -= e;
            s1 -= o.covariate * e;
            s2 -= o.covariate * o.covariate * e;
        }
    }
    (score, info)
}

/// Cox score statistic and observed Fisher information at the null beta = 0.
pub fn cox_score_info(snap: &TrialSnapshot) -> (f64, f64) {
    cox_score_info_at(snap, 0.0)
}

/// Cumulative-hazard curves of a (possibly contiguous) alternative, with an
/// optional local drift function g.
#[derive(Clone)]
pub struct ContiguousAlternative {
    pub cumhaz_f: Curve,
    pub cumhaz_g: Curve,
    pub drift: Option<Curve>,
}

impl ContiguousAlternative {
    pub fn exponential(lambda_f: f64, lambda_g: f64) -> Self {
        ContiguousAlternative {
            cumhaz_f: Arc::new(move |s| lambda_f * s),
            cumhaz_g: Arc::new(move |s| lambda_g * s),
            drift: None,
        }
    }

    pub fn null(cumhaz: Curve) -> Self {
        ContiguousAlternative { cumhaz_f: cumhaz.clone(), cumhaz_g: cumhaz, drift: None }
    }
}

/// Finite-sample drift mu_n(t): the Stieltjes integral of
/// psi(H(s-)) m'm''/(m'+m'') against d(Lambda_F - Lambda_G) over the
/// snapshot's at-risk intervals.
pub fn limit_mean(
    snap: &TrialSnapshot,
    w: &WeightFunction,
    alt: &ContiguousAlternative,
) -> Result<f64> {
    if snap.event_count() == 0 && !snap.observations.iter().any(|o| o.time > 0.0) {
        return Ok(0.0);
    }
    let h = if snap.observations.iter().any(|o| o.time > 0.0) {
        pooled_product_limit(snap)?
    } else {
        StepFunction::constant(0.0)
    };
    // Breakpoints of the piecewise-constant integrand: 0 and the distinct
    // positive observed times.
    let mut cuts = vec![0.0];
    for o in &snap.observations {
        if o.time > 0.0 && *cuts.last().unwrap() != o.time {
            cuts.push(o.time);
        }
    }
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        // On (a, b]: m(s) = #{obs >= b}, H(s-) = H(a).
        let m_x = snap.at_risk(Group::X, b) as f64;
        let m_y = snap.at_risk(Group::Y, b) as f64;
        if m_x + m_y == 0.0 {
            continue;
        }
        let factor = w.eval(h.eval(a)) * m_x * m_y / (m_x + m_y);
        let d_f = (alt.cumhaz_f)(b) - (alt.cumhaz_f)(a);
        let d_g = (alt.cumhaz_g)(b) - (alt.cumhaz_g)(a);
        total += factor * (d_f - d_g);
    }
    Ok(total)
}

/// Design-level curves of the limiting experiment: the X-arm fraction, the
/// two at-risk probability surfaces b'(t, s) and b''(t, s), and the common
/// distribution F under the null.
#[derive(Clone)]
pub struct DesignCurves {
    pub gamma: f64,
    pub b_x: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub b_y: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub cdf: Curve,
    pub pdf: Curve,
}

impl DesignCurves {
    /// Both arms fully at risk on [0, t], exponential(lambda) common law.
    pub fn fully_at_risk_exponential(gamma: f64, lambda: f64) -> Self {
        DesignCurves {
            gamma,
            b_x: Arc::new(|_, _| 1.0),
            b_y: Arc::new(|_, _| 1.0),
            cdf: Arc::new(move |s| 1.0 - (-lambda * s).exp()),
            pdf: Arc::new(move |s| lambda * (-lambda * s).exp()),
        }
    }
}

/// Mean and variance of the limiting Gaussian process at calendar time `t`,
/// by adaptive quadrature of the design-curve integrals. The mean is zero
/// when no alternative (or no drift) is supplied.
pub fn asymptotic_moments(
    dc: &DesignCurves,
    w: &WeightFunction,
    alt: Option<&ContiguousAlternative>,
    t: f64,
) -> Result<(f64, f64)> {
    let gamma = dc.gamma;
    let coeff = gamma * (1.0 - gamma);
    let ratio = |s: f64| {
        let bx = (dc.b_x)(t, s);
        let by = (dc.b_y)(t, s);
        let denom = gamma * bx + (1.0 - gamma) * by;
        if denom <= 0.0 {
            0.0
        } else {
            bx * by / denom
        }
    };
    let variance = coeff
        * integrate(
            |s| {
                let psi = w.eval((dc.cdf)(s));
                psi * psi * ratio(s) * (dc.pdf)(s)
            },
            0.0,
            t,
            QUAD_TOL,
        )?;
    let mean = match alt.and_then(|a| a.drift.as_ref()) {
        None => 0.0,
        Some(g) => {
            -coeff
                * integrate(
                    |s| w.eval((dc.cdf)(s)) * g(s) * ratio(s) * (dc.pdf)(s),
                    0.0,
                    t,
                    QUAD_TOL,
                )?
        }
    };
    Ok((mean, variance.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival_core::{snapshot, SubjectRecord, TrialData};
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn subj(entry: f64, surv: f64, withd: f64, g: Group) -> SubjectRecord {
        SubjectRecord {
            entry_time: entry,
            survival_time: surv,
            withdrawal_time: withd,
            group: g,
            covariate: if g == Group::X { 1.0 } else { 0.0 },
        }
    }

    fn two_subject_data() -> TrialData {
        TrialData::new(vec![
            subj(0.0, 1.0, f64::INFINITY, Group::X),
            subj(0.0, 2.0, f64::INFINITY, Group::Y),
        ])
        .unwrap()
    }

    fn random_data(rng: &mut StdRng, n: usize) -> TrialData {
        let subjects = (0..n)
            .map(|_| {
                let g = if rng.gen_bool(0.5) { Group::X } else { Group::Y };
                subj(
                    rng.gen_range(0.0..2.0),
                    rng.gen_range(0.05..4.0),
                    if rng.gen_bool(0.3) { rng.gen_range(0.05..4.0) } else { f64::INFINITY },
                    g,
                )
            })
            .collect();
        TrialData::new(subjects).unwrap()
    }

    /// Data with both groups nonempty (rejection-samples the arm draw).
    fn random_two_group_data(rng: &mut StdRng, n: usize) -> TrialData {
        loop {
            let d = random_data(rng, n);
            if d.group_size(Group::X) > 0 && d.group_size(Group::Y) > 0 {
                return d;
            }
        }
    }

    #[test]
    fn rank_statistic_hand_examples() {
        let w = WeightFunction::logrank();
        let snap = snapshot(&two_subject_data(), 10.0);
        assert_abs_diff_eq!(rank_statistic(&snap, &w).unwrap(), 0.5, epsilon = 1e-12);

        let mirrored = TrialData::new(vec![
            subj(0.0, 2.0, f64::INFINITY, Group::X),
            subj(0.0, 1.0, f64::INFINITY, Group::Y),
        ])
        .unwrap();
        let snap = snapshot(&mirrored, 10.0);
        assert_abs_diff_eq!(rank_statistic(&snap, &w).unwrap(), -0.5, epsilon = 1e-12);
    }

    #[test]
    fn rank_statistic_no_events_is_zero() {
        let data = TrialData::new(vec![
            subj(0.0, 9.0, 1.0, Group::X),
            subj(0.0, 9.0, 2.0, Group::Y),
        ])
        .unwrap();
        let snap = snapshot(&data, 5.0);
        assert_eq!(rank_statistic(&snap, &WeightFunction::logrank()).unwrap(), 0.0);
    }

    #[test]
    fn rank_statistic_rejects_empty_group() {
        let data = TrialData::new(vec![subj(0.0, 1.0, f64::INFINITY, Group::X)]).unwrap();
        let snap = snapshot(&data, 5.0);
        assert!(rank_statistic(&snap, &WeightFunction::logrank()).is_err());
    }

    #[test]
    fn variance_hand_examples() {
        let w = WeightFunction::logrank();
        let snap = snapshot(&two_subject_data(), 10.0);
        for v in [VarianceVariant::A, VarianceVariant::B, VarianceVariant::C] {
            assert_abs_diff_eq!(variance_estimate(&snap, &w, v).unwrap(), 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn variant_c_is_exact_average() {
        let mut rng = StdRng::seed_from_u64(11);
        let w = WeightFunction::GRho(1.0);
        for _ in 0..30 {
            let data = random_two_group_data(&mut rng, 20);
            let snap = snapshot(&data, 3.0);
            let a = variance_estimate(&snap, &w, VarianceVariant::A).unwrap();
            let b = variance_estimate(&snap, &w, VarianceVariant::B).unwrap();
            let c = variance_estimate(&snap, &w, VarianceVariant::C).unwrap();
            assert_eq!(c, (a + b) / 2.0);
        }
    }

    #[test]
    fn group_swap_antisymmetry() {
        let mut rng = StdRng::seed_from_u64(5);
        let w = WeightFunction::GRho(0.5);
        for _ in 0..30 {
            let data = random_two_group_data(&mut rng, 16);
            let swapped = data.swap_groups();
            let s1 = rank_statistic(&snapshot(&data, 3.0), &w).unwrap();
            let s2 = rank_statistic(&snapshot(&swapped, 3.0), &w).unwrap();
            assert_eq!(s1, -s2);
            let v1 = variance_estimate(&snapshot(&data, 3.0), &w, VarianceVariant::C).unwrap();
            let v2 = variance_estimate(&snapshot(&swapped, 3.0), &w, VarianceVariant::C).unwrap();
            assert_eq!(v1, v2);
        }
    }

    #[test]
    fn rank_invariance_under_monotone_map() {
        // Applying a strictly increasing map to all durations (entry times
        // scaled consistently so the snapshot reveals the same information)
        // leaves the statistic unchanged. Everyone enters at 0 and t is far
        // out, so follow-up truncation never binds.
        let mut rng = StdRng::seed_from_u64(17);
        let w = WeightFunction::GRho(1.0);
        for _ in 0..20 {
            let mut data = random_two_group_data(&mut rng, 14);
            for s in &mut data.subjects {
                s.entry_time = 0.0;
            }
            let s1 = rank_statistic(&snapshot(&data, 1e6), &w).unwrap();
            let mapped = TrialData::new(
                data.subjects
                    .iter()
                    .map(|s| SubjectRecord {
                        survival_time: (s.survival_time).exp(),
                        withdrawal_time: if s.withdrawal_time.is_finite() {
                            s.withdrawal_time.exp()
                        } else {
                            f64::INFINITY
                        },
                        ..*s
                    })
                    .collect(),
            )
            .unwrap();
            let s2 = rank_statistic(&snapshot(&mapped, 1e9), &w).unwrap();
            assert_abs_diff_eq!(s1, s2, epsilon = 1e-12);
        }
    }

    #[test]
    fn cox_score_zero_for_equal_covariates() {
        let mut data = two_subject_data();
        for s in &mut data.subjects {
            s.covariate = 1.0;
        }
        let (score, info) = cox_score_info(&snapshot(&data, 10.0));
        assert_eq!(score, 0.0);
        assert_eq!(info, 0.0);
    }

    #[test]
    fn cox_score_hand_example() {
        let (score, info) = cox_score_info(&snapshot(&two_subject_data(), 10.0));
        assert_abs_diff_eq!(score, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(info, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn cox_score_matches_logrank() {
        let mut rng = StdRng::seed_from_u64(23);
        let w = WeightFunction::logrank();
        for _ in 0..50 {
            let data = random_two_group_data(&mut rng, 25);
            let snap = snapshot(&data, rng.gen_range(0.5..4.0));
            let (score, _) = cox_score_info(&snap);
            let s = rank_statistic(&snap, &w).unwrap();
            assert_abs_diff_eq!(score, s, epsilon = 1e-9);
        }
    }

    #[test]
    fn score_to_weight_constant_phi_is_zero() {
        let w = score_to_weight(Arc::new(|_| 3.7), 100);
        for u in [0.0, 0.3, 0.9] {
            assert_abs_diff_eq!(w.eval(u), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn score_to_weight_analytic_pairs() {
        let wilcoxon = score_to_weight(Arc::new(|u: f64| 2.0 * u - 1.0), 100_000);
        let savage = score_to_weight(Arc::new(|u: f64| -(1.0 - u).ln() - 1.0), 100_000);
        for i in 0..100 {
            let u = i as f64 / 100.0 * 0.99;
            assert_abs_diff_eq!(wilcoxon.eval(u), u - 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(savage.eval(u), -1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn weight_names_parse() {
        assert!(matches!(
            WeightFunction::from_name("logrank", 10).unwrap(),
            WeightFunction::GRho(r) if r == 0.0
        ));
        assert!(matches!(
            WeightFunction::from_name("grho:1.5", 10).unwrap(),
            WeightFunction::GRho(r) if r == 1.5
        ));
        let w = WeightFunction::from_name("phi:wilcoxon", 1000).unwrap();
        assert_abs_diff_eq!(w.eval(0.25), -0.75, epsilon = 1e-8);
        assert!(WeightFunction::from_name("nope", 10).is_err());
    }

    #[test]
    fn limit_mean_null_is_zero() {
        let alt = ContiguousAlternative::exponential(1.0, 1.0);
        let snap = snapshot(&two_subject_data(), 10.0);
        let m = limit_mean(&snap, &WeightFunction::logrank(), &alt).unwrap();
        assert_eq!(m, 0.0);
    }

    #[test]
    fn limit_mean_hand_example() {
        let alt = ContiguousAlternative::exponential(1.0, 2.0);
        let snap = snapshot(&two_subject_data(), 10.0);
        let m = limit_mean(&snap, &WeightFunction::logrank(), &alt).unwrap();
        assert_abs_diff_eq!(m, -0.5, epsilon = 1e-12);
    }

    #[test]
    fn limit_mean_linear_in_drift() {
        // dLambda_G = (1 + g/sqrt(n)) dLambda_F with constant g: doubling g
        // doubles mu_n.
        let n = 2.0_f64;
        let g = 0.8;
        let alt1 = ContiguousAlternative::exponential(1.0, 1.0 + g / n.sqrt());
        let alt2 = ContiguousAlternative::exponential(1.0, 1.0 + 2.0 * g / n.sqrt());
        let snap = snapshot(&two_subject_data(), 10.0);
        let m1 = limit_mean(&snap, &WeightFunction::logrank(), &alt1).unwrap();
        let m2 = limit_mean(&snap, &WeightFunction::logrank(), &alt2).unwrap();
        assert_abs_diff_eq!(m2, 2.0 * m1, epsilon = 1e-12);
    }

    #[test]
    fn asymptotic_variance_closed_form() {
        let dc = DesignCurves::fully_at_risk_exponential(0.5, 1.0);
        for t in [0.5, 1.0, 2.0] {
            let (mean, var) =
                asymptotic_moments(&dc, &WeightFunction::logrank(), None, t).unwrap();
            assert_eq!(mean, 0.0);
            assert_abs_diff_eq!(var, 0.25 * (1.0 - (-t).exp()), epsilon = 1e-8);
        }
    }

    #[test]
    fn optimal_score_mean_equals_negative_variance() {
        // With psi(.) = g(F^{-1}(.)), i.e. psi(F(u)) = g(u), the mean
        // integral equals minus the variance integral.
        let dc = DesignCurves::fully_at_risk_exponential(0.4, 1.0);
        let g: Curve = Arc::new(|s: f64| 1.0 + 0.5 * s.min(3.0));
        let psi = {
            let g = g.clone();
            // F exponential(1): F^{-1}(u) = -ln(1-u)
            WeightFunction::Tabulated {
                us: (0..=2000).map(|i| i as f64 / 2000.0 * 0.999).collect(),
                psis: (0..=2000)
                    .map(|i| {
                        let u = i as f64 / 2000.0 * 0.999;
                        g(-(1.0 - u).ln())
                    })
                    .collect(),
            }
        };
        let alt = ContiguousAlternative {
            cumhaz_f: Arc::new(|s| s),
            cumhaz_g: Arc::new(|s| s),
            drift: Some(g),
        };
        let (mean, var) = asymptotic_moments(&dc, &psi, Some(&alt), 2.0).unwrap();
        assert_abs_diff_eq!(mean, -var, epsilon = 1e-4);
    }
}
