//! Group-sequential stopping boundaries.
//!
//! First-exit probabilities of discretely monitored Brownian motion are
//! computed by per-stage density propagation (recursive numerical
//! integration): the sub-density of the surviving process is tabulated on a
//! fixed grid spanning +-8 standard deviations of the running process and
//! convolved with the normal increment density stage by stage, with the
//! stopping boundary absorbing mass. Trapezoid weights; boundary points that
//! fall between grid nodes are handled as partial cells via linear
//! interpolation.
//!
//! On top of the propagation core sit the error-spending / Slud-Wei
//! threshold recursion, the modified Haybittle-Peto pair (b, c), and the
//! exponential-family group-sequential test with Kullback-Leibler stopping
//! regions.

use serde::{Deserialize, Serialize};

use crate::numeric::{bisect, norm_cdf, norm_pdf, norm_quantile};
use crate::{Error, Result};

/// One-sided boundaries absorb only above; two-sided absorb symmetrically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    OneSided,
    TwoSided,
}

/// Analysis grid: information values with standardized thresholds.
///
/// Analysis `j` stops when `|W(a_j)| >= d_j sqrt(a_j)` (two-sided) or
/// `W(a_j) >= d_j sqrt(a_j)` (one-sided); `d_j = +inf` disables the look.
#[derive(Debug, Clone)]
pub struct MonitoringGrid {
    pub info: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub sided: Sidedness,
}

impl MonitoringGrid {
    pub fn new(info: Vec<f64>, thresholds: Vec<f64>, sided: Sidedness) -> Result<Self> {
        if info.is_empty() || info.len() != thresholds.len() {
            return Err(Error::Invalid(
                "monitoring grid: info and thresholds must be nonempty and equal length".into(),
            ));
        }
        if info[0] <= 0.0 || info.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid(
                "monitoring grid: information values must be positive and strictly increasing"
                    .into(),
            ));
        }
        if thresholds.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Invalid(
                "monitoring grid: thresholds must be positive (possibly infinite)".into(),
            ));
        }
        Ok(MonitoringGrid { info, thresholds, sided })
    }

    pub fn len(&self) -> usize {
        self.info.len()
    }

    pub fn is_empty(&self) -> bool {
        self.info.is_empty()
    }

    fn stage_bounds(&self, j: usize) -> (f64, f64) {
        let u = self.thresholds[j] * self.info[j].sqrt();
        match self.sided {
            Sidedness::TwoSided => (-u, u),
            Sidedness::OneSided => (f64::NEG_INFINITY, u),
        }
    }
}

/// Node count and grid span for the density propagation.
#[derive(Debug, Clone, Copy)]
pub struct PassageOptions {
    pub nodes: usize,
    pub span_sd: f64,
}

impl Default for PassageOptions {
    fn default() -> Self {
        PassageOptions { nodes: 512, span_sd: 8.0 }
    }
}

/// Surviving sub-density of the monitored process, carried between stages as
/// quadrature points (position, weighted density mass).
#[derive(Debug, Clone)]
pub struct Propagator {
    particles: Vec<(f64, f64)>,
    cur_info: f64,
    drift: f64,
    opt: PassageOptions,
}

impl Propagator {
    /// Process starts at W(0) = 0 with total mass 1.
    pub fn new(drift: f64, opt: PassageOptions) -> Self {
        Propagator { particles: vec![(0.0, 1.0)], cur_info: 0.0, drift, opt }
    }

    pub fn survivor_mass(&self) -> f64 {
        self.particles.iter().map(|p| p.1).sum()
    }

    /// Sub-density of W(next_info) (no earlier exit) at `x`.
    fn density_at(&self, next_info: f64, x: f64) -> f64 {
        let delta = next_info - self.cur_info;
        let sd = delta.sqrt();
        self.particles
            .iter()
            .map(|&(xi, wi)| wi * norm_pdf((x - xi - self.drift * delta) / sd) / sd)
            .sum()
    }

    /// Exit mass (lower, upper) at the next analysis for continuation
    /// interval `(lower, upper)`, without advancing.
    pub fn exit_if(&self, next_info: f64, lower: f64, upper: f64) -> (f64, f64) {
        let delta = next_info - self.cur_info;
        debug_assert!(delta > 0.0);
        let sd = delta.sqrt();
        let mut lo_exit = 0.0;
        let mut up_exit = 0.0;
        for &(x, w) in &self.particles {
            let mean = x + self.drift * delta;
            if lower.is_finite() {
                lo_exit += w * norm_cdf((lower - mean) / sd);
            }
            if upper.is_finite() {
                up_exit += w * (1.0 - norm_cdf((upper - mean) / sd));
            }
        }
        (lo_exit, up_exit)
    }

    /// Advance to the next analysis with continuation `(lower, upper)`,
    /// absorbing exit mass; returns (lower exit, upper exit).
    pub fn advance(&mut self, next_info: f64, lower: f64, upper: f64) -> (f64, f64) {
        let exits = self.exit_if(next_info, lower, upper);
        let sd_run = next_info.sqrt();
        let center = self.drift * next_info;
        // Continuation region clipped to the grid span; the exit integrals
        // above already account for all mass outside it, up to the negligible
        // tail beyond the span.
        let lo = lower.max(center - self.opt.span_sd * sd_run);
        let hi = upper.min(center + self.opt.span_sd * sd_run);
        if !(lo < hi) {
            self.particles.clear();
            self.cur_info = next_info;
            return exits;
        }
        let n = self.opt.nodes.max(8);
        let h = (hi - lo) / (n - 1) as f64;
        let mut new_particles = Vec::with_capacity(n);
        for i in 0..n {
            let x = lo + h * i as f64;
            let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
            let f = self.density_at(next_info, x);
            new_particles.push((x, w * f));
        }
        self.particles = new_particles;
        self.cur_info = next_info;
        exits
    }
}

/// Per-analysis first-exit probabilities and their total.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossingResult {
    pub per_analysis: Vec<f64>,
    pub total: f64,
}

/// First-exit probabilities of Brownian motion with the given drift monitored
/// at the grid's information values against its thresholds.
pub fn crossing_probability(grid: &MonitoringGrid, drift: f64) -> Result<CrossingResult> {
    crossing_probability_opt(grid, drift, PassageOptions::default())
}

pub fn crossing_probability_opt(
    grid: &MonitoringGrid,
    drift: f64,
    opt: PassageOptions,
) -> Result<CrossingResult> {
    let mut prop = Propagator::new(drift, opt);
    let mut per_analysis = Vec::with_capacity(grid.len());
    for j in 0..grid.len() {
        let (lower, upper) = grid.stage_bounds(j);
        let (lo, up) = prop.advance(grid.info[j], lower, upper);
        per_analysis.push(lo + up);
    }
    let total = per_analysis.iter().sum();
    Ok(CrossingResult { per_analysis, total })
}

/// Error-spending function A(v) with A(0) = 0 and A(1) = alpha.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpendingFunction {
    /// A(v) = 2 - 2 Phi(z_{alpha/2} / sqrt(v)): spends almost nothing early.
    ObrienFlemingLike { alpha: f64 },
    /// A(v) = alpha ln(1 + (e - 1) v): near-uniform spending.
    PocockLike { alpha: f64 },
    /// A(v) = alpha v^theta.
    Power { alpha: f64, theta: f64 },
    /// Monotone linear interpolation of (v, A) pairs ending at (1, alpha).
    UserTable { alpha: f64, points: Vec<(f64, f64)> },
}

impl SpendingFunction {
    pub fn alpha(&self) -> f64 {
        match self {
            SpendingFunction::ObrienFlemingLike { alpha }
            | SpendingFunction::PocockLike { alpha }
            | SpendingFunction::Power { alpha, .. }
            | SpendingFunction::UserTable { alpha, .. } => *alpha,
        }
    }

    pub fn eval(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, 1.0);
        if v == 0.0 {
            return 0.0;
        }
        match self {
            SpendingFunction::ObrienFlemingLike { alpha } => {
                let z = norm_quantile(1.0 - alpha / 2.0);
                2.0 - 2.0 * norm_cdf(z / v.sqrt())
            }
            SpendingFunction::PocockLike { alpha } => {
                alpha * (1.0 + (std::f64::consts::E - 1.0) * v).ln()
            }
            SpendingFunction::Power { alpha, theta } => alpha * v.powf(*theta),
            SpendingFunction::UserTable { alpha, points } => {
                let mut prev = (0.0, 0.0);
                for &(pv, pa) in points {
                    if v <= pv {
                        let w = if pv > prev.0 { (v - prev.0) / (pv - prev.0) } else { 1.0 };
                        return prev.1 + w * (pa - prev.1);
                    }
                    prev = (pv, pa);
                }
                *alpha
            }
        }
    }
}

const PROB_TOL: f64 = 1e-8;
const THRESH_TOL: f64 = 1e-7;
/// Spending increments below this are treated as zero (threshold = +inf).
const MIN_SPEND: f64 = 1e-12;

/// Slud-Wei recursion driven by an error-spending function: allocate
/// alpha_j = A(v_j) - A(v_{j-1}) over information fractions v_j = a_j / a_k,
/// then solve each threshold so the per-analysis exit probability matches
/// its allocation given the earlier thresholds.
pub fn spend_and_solve(sf: &SpendingFunction, info: &[f64]) -> Result<MonitoringGrid> {
    spend_and_solve_opt(sf, info, Sidedness::TwoSided, PassageOptions::default())
}

pub fn spend_and_solve_opt(
    sf: &SpendingFunction,
    info: &[f64],
    sided: Sidedness,
    opt: PassageOptions,
) -> Result<MonitoringGrid> {
    if info.is_empty() || info[0] <= 0.0 || info.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid(
            "spend_and_solve: information values must be positive and strictly increasing".into(),
        ));
    }
    let a_max = *info.last().unwrap();
    let mut prop = Propagator::new(0.0, opt);
    let mut thresholds = Vec::with_capacity(info.len());
    let mut spent = 0.0;
    for &a in info {
        let v = a / a_max;
        let alpha_j = (sf.eval(v) - spent).max(0.0);
        spent = sf.eval(v);
        let sqrt_a = a.sqrt();
        let bounds = |d: f64| match sided {
            Sidedness::TwoSided => (-d * sqrt_a, d * sqrt_a),
            Sidedness::OneSided => (f64::NEG_INFINITY, d * sqrt_a),
        };
        if alpha_j <= MIN_SPEND {
            thresholds.push(f64::INFINITY);
            let (lower, upper) = bounds(f64::INFINITY);
            prop.advance(a, lower, upper);
            continue;
        }
        let available = prop.survivor_mass();
        if alpha_j >= available {
            return Err(Error::Infeasible(format!(
                "spending increment {alpha_j:.3e} at info {a} exceeds remaining mass {available:.3e}"
            )));
        }
        let exit_total = |d: f64| {
            let (lower, upper) = bounds(d);
            let (lo, up) = prop.exit_if(a, lower, upper);
            lo + up
        };
        let d = bisect(|d| exit_total(d) - alpha_j, 1e-6, 10.0, THRESH_TOL, PROB_TOL)?;
        thresholds.push(d);
        let (lower, upper) = bounds(d);
        prop.advance(a, lower, upper);
    }
    MonitoringGrid::new(info.to_vec(), thresholds, sided)
}

/// Modified Haybittle-Peto thresholds for a two-sided level-alpha test with
/// `k` analyses at the observed information values.
///
/// The interim threshold `b` consumes a fraction `eps` of the Type I error
/// across analyses 1..k-1; the terminal threshold `c` then makes the total
/// crossing probability exactly alpha, conditionally on the observed
/// information values.
pub fn haybittle_peto_thresholds(info: &[f64], alpha: f64, eps: f64) -> Result<(f64, f64)> {
    haybittle_peto_thresholds_opt(info, alpha, eps, PassageOptions::default())
}

pub fn haybittle_peto_thresholds_opt(
    info: &[f64],
    alpha: f64,
    eps: f64,
    opt: PassageOptions,
) -> Result<(f64, f64)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Invalid(format!("eps must lie in (0,1), got {eps}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if info.is_empty() || info[0] <= 0.0 || info.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid(
            "haybittle_peto: information values must be positive and strictly increasing".into(),
        ));
    }
    let k = info.len();
    if k == 1 {
        return Ok((f64::INFINITY, norm_quantile(1.0 - alpha / 2.0)));
    }
    let interim = &info[..k - 1];

    let interim_crossing = |b: f64| -> Result<(f64, Propagator)> {
        let mut prop = Propagator::new(0.0, opt);
        let mut total = 0.0;
        for &a in interim {
            let u = b * a.sqrt();
            let (lo, up) = prop.advance(a, -u, u);
            total += lo + up;
        }
        Ok((total, prop))
    };

    let target = eps * alpha;
    let b = bisect(
        |b| interim_crossing(b).map(|(p, _)| p - target).unwrap_or(f64::NAN),
        1.0,
        6.0,
        THRESH_TOL,
        PROB_TOL,
    )?;
    let (interim_total, prop) = interim_crossing(b)?;

    let a_k = info[k - 1];
    let terminal = |c: f64| {
        let u = c * a_k.sqrt();
        let (lo, up) = prop.exit_if(a_k, -u, u);
        lo + up
    };
    let c = bisect(
        |c| interim_total + terminal(c) - alpha,
        1.0,
        6.0,
        THRESH_TOL,
        PROB_TOL,
    )?;
    Ok((b, c))
}

/// One-parameter exponential families used by the group-sequential test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpFamily {
    NormalMean,
    Bernoulli,
    ExponentialRate,
}

/// Kullback-Leibler information number I(theta, lambda) for the family.
pub fn kl_information(theta: f64, lambda: f64, family: ExpFamily) -> Result<f64> {
    match family {
        ExpFamily::NormalMean => Ok((theta - lambda) * (theta - lambda) / 2.0),
        ExpFamily::Bernoulli => {
            if !(0.0 < theta && theta < 1.0 && 0.0 < lambda && lambda < 1.0) {
                return Err(Error::Invalid(format!(
                    "bernoulli parameters must lie in (0,1): theta={theta}, lambda={lambda}"
                )));
            }
            Ok(theta * (theta / lambda).ln() + (1.0 - theta) * ((1.0 - theta) / (1.0 - lambda)).ln())
        }
        ExpFamily::ExponentialRate => {
            if !(theta > 0.0 && lambda > 0.0) {
                return Err(Error::Invalid(format!(
                    "exponential rates must be positive: theta={theta}, lambda={lambda}"
                )));
            }
            Ok((theta / lambda).ln() + lambda / theta - 1.0)
        }
    }
}

fn mle_from_mean(mean: f64, family: ExpFamily) -> f64 {
    match family {
        ExpFamily::NormalMean => mean,
        ExpFamily::Bernoulli => mean.clamp(1e-12, 1.0 - 1e-12),
        ExpFamily::ExponentialRate => 1.0 / mean.max(1e-300),
    }
}

/// Specification of the exponential-family group-sequential test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpFamilySpec {
    pub family: ExpFamily,
    /// Null value theta_0.
    pub theta0: f64,
    /// Implied alternative theta(M).
    pub theta_alt: f64,
    /// Cumulative group sizes n_1 < ... < n_k = M.
    pub group_sizes: Vec<usize>,
    pub alpha: f64,
    pub alpha_tilde: f64,
    /// (b, b_tilde, c); solve with [`exp_family_thresholds`] when absent.
    pub thresholds: Option<(f64, f64, f64)>,
}

impl ExpFamilySpec {
    pub fn max_sample_size(&self) -> usize {
        *self.group_sizes.last().unwrap_or(&0)
    }
}

/// Decision of the exponential-family group-sequential test; early decisions
/// carry the 1-based analysis index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupDecision {
    RejectEarly(usize),
    AcceptEarly(usize),
    RejectFinal,
    AcceptFinal,
}

/// Run the modified Haybittle-Peto group-sequential test on the available
/// partial sums S_{n_1}, ..., S_{n_k}.
///
/// Early rejection when the estimate exceeds the null and the sample
/// Kullback-Leibler distance to it clears `b`; early acceptance mirrors this
/// against the implied alternative with `b_tilde`; at the final analysis
/// reject iff S_{n_k} >= c.
pub fn exp_family_group_test(spec: &ExpFamilySpec, sums: &[f64]) -> Result<GroupDecision> {
    let (b, b_tilde, c) = spec
        .thresholds
        .ok_or_else(|| Error::Invalid("exp_family_group_test: thresholds not set".into()))?;
    if sums.is_empty() || sums.len() > spec.group_sizes.len() {
        return Err(Error::Invalid(format!(
            "expected 1..={} partial sums, got {}",
            spec.group_sizes.len(),
            sums.len()
        )));
    }
    let k = spec.group_sizes.len();
    for (i, (&s, &n)) in sums.iter().zip(spec.group_sizes.iter()).enumerate() {
        let n_f = n as f64;
        let theta_hat = mle_from_mean(s / n_f, spec.family);
        if i + 1 < k {
            if theta_hat > spec.theta0
                && n_f * kl_information(theta_hat, spec.theta0, spec.family)? >= b
            {
                return Ok(GroupDecision::RejectEarly(i + 1));
            }
            if theta_hat < spec.theta_alt
                && n_f * kl_information(theta_hat, spec.theta_alt, spec.family)? >= b_tilde
            {
                return Ok(GroupDecision::AcceptEarly(i + 1));
            }
        } else {
            return Ok(if s >= c { GroupDecision::RejectFinal } else { GroupDecision::AcceptFinal });
        }
    }
    // Fewer sums than analyses and no early stop: continue sampling.
    Err(Error::Invalid(
        "no early stop and final analysis not reached; supply all partial sums".into(),
    ))
}

/// Solve (b, b_tilde, c) for the normal-mean family.
///
/// `b` spends `eps_reject * alpha` on early rejection under theta_0;
/// `b_tilde` spends `eps_accept * alpha_tilde` on early acceptance under
/// theta(M); `c` then brings the total rejection probability under theta_0 to
/// alpha given both interim boundaries.
pub fn exp_family_thresholds(
    spec: &ExpFamilySpec,
    eps_reject: f64,
    eps_accept: f64,
) -> Result<(f64, f64, f64)> {
    if spec.family != ExpFamily::NormalMean {
        return Err(Error::Invalid(
            "exp_family_thresholds: calibration implemented for the normal-mean family".into(),
        ));
    }
    if spec.theta0 >= spec.theta_alt {
        return Err(Error::Invalid("theta0 must be below theta(M)".into()));
    }
    let k = spec.group_sizes.len();
    if k == 0 {
        return Err(Error::Invalid("group sizes empty".into()));
    }
    let info: Vec<f64> = spec.group_sizes.iter().map(|&n| n as f64).collect();
    if info.windows(2).any(|w| w[0] >= w[1]) || info[0] <= 0.0 {
        return Err(Error::Invalid("group sizes must be strictly increasing".into()));
    }
    let m = info[k - 1];
    let opt = PassageOptions::default();
    if k == 1 {
        let c = spec.theta0 * m + norm_quantile(1.0 - spec.alpha) * m.sqrt();
        return Ok((f64::INFINITY, f64::INFINITY, c));
    }
    let interim = &info[..k - 1];

    // One-sided constant-d crossing for a driftless standardized process.
    let one_sided_total = |d: f64| {
        let mut prop = Propagator::new(0.0, opt);
        let mut total = 0.0;
        for &a in interim {
            let (_, up) = prop.advance(a, f64::NEG_INFINITY, d * a.sqrt());
            total += up;
        }
        total
    };
    let d_reject = bisect(
        |d| one_sided_total(d) - eps_reject * spec.alpha,
        0.5,
        6.0,
        THRESH_TOL,
        PROB_TOL,
    )?;
    let b = d_reject * d_reject / 2.0;
    let d_accept = bisect(
        |d| one_sided_total(d) - eps_accept * spec.alpha_tilde,
        0.5,
        6.0,
        THRESH_TOL,
        PROB_TOL,
    )?;
    let b_tilde = d_accept * d_accept / 2.0;

    // Rejection probability under theta_0 with both interim boundaries on the
    // raw sum scale: upper u_i = n_i theta_0 + sqrt(2 b n_i), lower
    // l_i = n_i theta(M) - sqrt(2 b_tilde n_i).
    let mut prop = Propagator::new(spec.theta0, opt);
    let mut reject_early = 0.0;
    for &a in interim {
        let upper = a * spec.theta0 + (2.0 * b * a).sqrt();
        let lower = a * spec.theta_alt - (2.0 * b_tilde * a).sqrt();
        if lower >= upper {
            return Err(Error::Infeasible(format!(
                "continuation region empty at n = {a}: acceptance boundary {lower:.4} above \
                 rejection boundary {upper:.4}"
            )));
        }
        let (_, up) = prop.advance(a, lower, upper);
        reject_early += up;
    }
    if reject_early >= spec.alpha {
        return Err(Error::Infeasible(format!(
            "early rejection mass {reject_early:.4e} already exceeds alpha = {}",
            spec.alpha
        )));
    }
    let c = bisect(
        |c| {
            let (_, up) = prop.exit_if(m, f64::NEG_INFINITY, c);
            reject_early + up - spec.alpha
        },
        spec.theta0 * m,
        spec.theta0 * m + 4.0 * m.sqrt(),
        THRESH_TOL * m.sqrt(),
        PROB_TOL,
    )?;
    Ok((b, b_tilde, c))
}

/// JSON form of a boundary: `{analyses:[{info, threshold}], alpha, sided,
/// spending}`. A null threshold means +inf (no stopping at that look).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryFile {
    pub analyses: Vec<AnalysisPoint>,
    pub alpha: f64,
    pub sided: Sidedness,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spending: Option<SpendingFunction>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisPoint {
    pub info: f64,
    pub threshold: Option<f64>,
}

impl BoundaryFile {
    pub fn from_grid(grid: &MonitoringGrid, alpha: f64, spending: Option<SpendingFunction>) -> Self {
        BoundaryFile {
            analyses: grid
                .info
                .iter()
                .zip(grid.thresholds.iter())
                .map(|(&info, &d)| AnalysisPoint {
                    info,
                    threshold: if d.is_finite() { Some(d) } else { None },
                })
                .collect(),
            alpha,
            sided: grid.sided,
            spending,
        }
    }

    pub fn to_grid(&self) -> Result<MonitoringGrid> {
        MonitoringGrid::new(
            self.analyses.iter().map(|a| a.info).collect(),
            self.analyses
                .iter()
                .map(|a| a.threshold.unwrap_or(f64::INFINITY))
                .collect(),
            self.sided,
        )
    }
}
