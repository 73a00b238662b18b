//! Survival-data model for time-sequential trials: staggered entry,
//! withdrawal, calendar-time snapshots, and the nonparametric estimators
//! (pooled product-limit, Kaplan-Meier, Breslow) the rest of the crate
//! consumes.
//!
//! A trial observed at calendar time `t` sees each subject's follow-up
//! truncated at `(t - entry)+`: the observed time is
//! `survival ∧ withdrawal ∧ (t - entry)+` and the event indicator is 1 only
//! when the survival time itself was reached.
//!
//! Ties are processed with all tied subjects counted at risk (left-limit risk
//! sets); censorings at a tied time are removed after the events.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Treatment arm label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    X,
    Y,
}

impl Group {
    pub fn other(self) -> Group {
        match self {
            Group::X => Group::Y,
            Group::Y => Group::X,
        }
    }
}

/// One subject: calendar entry time plus times-after-entry.
///
/// `withdrawal_time` may be `f64::INFINITY` ("never withdraws"). The
/// covariate drives the Cox pathway; 0/1 encodes the two-arm case.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub entry_time: f64,
    pub survival_time: f64,
    pub withdrawal_time: f64,
    pub group: Group,
    pub covariate: f64,
}

impl SubjectRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.entry_time >= 0.0) {
            return Err(Error::Invalid(format!(
                "entry_time must be >= 0, got {}",
                self.entry_time
            )));
        }
        if !(self.survival_time > 0.0) {
            return Err(Error::Invalid(format!(
                "survival_time must be > 0, got {}",
                self.survival_time
            )));
        }
        if !(self.withdrawal_time > 0.0) {
            return Err(Error::Invalid(format!(
                "withdrawal_time must be > 0, got {}",
                self.withdrawal_time
            )));
        }
        Ok(())
    }
}

/// Raw staggered-entry trial data.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrialData {
    pub subjects: Vec<SubjectRecord>,
}

impl TrialData {
    pub fn new(subjects: Vec<SubjectRecord>) -> Result<Self> {
        for s in &subjects {
            s.validate()?;
        }
        Ok(TrialData { subjects })
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn group_size(&self, g: Group) -> usize {
        self.subjects.iter().filter(|s| s.group == g).count()
    }

    /// Swap every subject's arm label (covariates untouched).
    pub fn swap_groups(&self) -> TrialData {
        TrialData {
            subjects: self
                .subjects
                .iter()
                .map(|s| SubjectRecord {
                    group: s.group.other(),
                    ..*s
                })
                .collect(),
        }
    }

    /// Read subjects from CSV with header
    /// `entry_time,survival_time,withdrawal_time,group,covariate`.
    /// `withdrawal_time` accepts the literal `inf`.
    pub fn from_csv_path(path: &Path) -> Result<TrialData> {
        let mut rdr = csv::Reader::from_path(path)?;
        Self::from_csv_reader(&mut rdr)
    }

    pub fn from_csv_reader<R: std::io::Read>(rdr: &mut csv::Reader<R>) -> Result<TrialData> {
        #[derive(Deserialize)]
        struct Row {
            entry_time: f64,
            survival_time: f64,
            withdrawal_time: String,
            group: String,
            covariate: f64,
        }
        let mut subjects = Vec::new();
        for (i, rec) in rdr.deserialize::<Row>().enumerate() {
            let row = rec?;
            let withdrawal_time = match row.withdrawal_time.trim() {
                "inf" | "Inf" | "INF" => f64::INFINITY,
                s => s.parse::<f64>().map_err(|_| {
                    Error::Invalid(format!("row {}: bad withdrawal_time {s:?}", i + 2))
                })?,
            };
            let group = match row.group.trim() {
                "X" => Group::X,
                "Y" => Group::Y,
                s => return Err(Error::Invalid(format!("row {}: bad group {s:?}", i + 2))),
            };
            subjects.push(SubjectRecord {
                entry_time: row.entry_time,
                survival_time: row.survival_time,
                withdrawal_time,
                group,
                covariate: row.covariate,
            });
        }
        TrialData::new(subjects)
    }

    pub fn to_csv_writer<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record(["entry_time", "survival_time", "withdrawal_time", "group", "covariate"])?;
        for s in &self.subjects {
            let wt = if s.withdrawal_time.is_infinite() {
                "inf".to_string()
            } else {
                s.withdrawal_time.to_string()
            };
            let g = if s.group == Group::X { "X" } else { "Y" };
            w.write_record([
                s.entry_time.to_string(),
                s.survival_time.to_string(),
                wt,
                g.to_string(),
                s.covariate.to_string(),
            ])?;
        }
        Ok(())
    }
}

/// Right-continuous piecewise-constant function with left-limit queries.
///
/// Value before the first jump is `initial` (0 for the estimators here).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    initial: f64,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    /// Build from (jump time, value-after-jump) pairs with strictly
    /// increasing times.
    pub fn new(initial: f64, points: Vec<(f64, f64)>) -> Result<Self> {
        for w in points.windows(2) {
            if !(w[0].0 < w[1].0) {
                return Err(Error::Invalid(format!(
                    "step function jump times not strictly increasing: {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        let (times, values) = points.into_iter().unzip();
        Ok(StepFunction { initial, times, values })
    }

    pub fn constant(v: f64) -> Self {
        StepFunction { initial: v, times: vec![], values: vec![] }
    }

    /// Value at `s` (right-continuous: the last jump at or before `s`).
    pub fn eval(&self, s: f64) -> f64 {
        match self.times.partition_point(|&t| t <= s) {
            0 => self.initial,
            i => self.values[i - 1],
        }
    }

    /// Left limit at `s` (the last jump strictly before `s`).
    pub fn left_limit(&self, s: f64) -> f64 {
        match self.times.partition_point(|&t| t < s) {
            0 => self.initial,
            i => self.values[i - 1],
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn final_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(self.initial)
    }
}

/// One subject's view at a fixed calendar time.
#[derive(Debug, Clone, Copy)]
pub struct Observation {
    /// Observed time after entry: `survival ∧ withdrawal ∧ (t - entry)+`.
    pub time: f64,
    /// True when the observed time equals the survival time.
    pub event: bool,
    pub group: Group,
    pub covariate: f64,
}

/// The data available at calendar time `t`, sorted by observed time.
#[derive(Debug, Clone)]
pub struct TrialSnapshot {
    pub calendar_time: f64,
    /// All subjects' observations, sorted by ascending observed time.
    pub observations: Vec<Observation>,
    n_x: usize,
    n_y: usize,
    // Sorted per-group observed times and event times, for the step-function
    // queries m(s) and N(s).
    obs_x: Vec<f64>,
    obs_y: Vec<f64>,
    events_x: Vec<f64>,
    events_y: Vec<f64>,
}

impl TrialSnapshot {
    pub fn group_size(&self, g: Group) -> usize {
        match g {
            Group::X => self.n_x,
            Group::Y => self.n_y,
        }
    }

    /// At-risk count m(s) = #{observed time >= s} for the given group.
    pub fn at_risk(&self, g: Group, s: f64) -> usize {
        let obs = match g {
            Group::X => &self.obs_x,
            Group::Y => &self.obs_y,
        };
        obs.len() - obs.partition_point(|&x| x < s)
    }

    /// Counting process N(s) = #{events with observed time <= s}.
    pub fn counting(&self, g: Group, s: f64) -> usize {
        let ev = match g {
            Group::X => &self.events_x,
            Group::Y => &self.events_y,
        };
        ev.partition_point(|&x| x <= s)
    }

    pub fn event_count(&self) -> usize {
        self.events_x.len() + self.events_y.len()
    }
}

/// Compute the calendar-time-`t` view of the trial.
pub fn snapshot(data: &TrialData, t: f64) -> TrialSnapshot {
    debug_assert!(t >= 0.0);
    let mut observations: Vec<Observation> = data
        .subjects
        .iter()
        .map(|s| {
            let follow_up = (t - s.entry_time).max(0.0);
            let time = s.survival_time.min(s.withdrawal_time).min(follow_up);
            Observation {
                time,
                event: time == s.survival_time,
                group: s.group,
                covariate: s.covariate,
            }
        })
        .collect();
    observations.sort_by(|a, b| a.time.total_cmp(&b.time));

    let mut obs_x = Vec::new();
    let mut obs_y = Vec::new();
    let mut events_x = Vec::new();
    let mut events_y = Vec::new();
    for o in &observations {
        match o.group {
            Group::X => {
                obs_x.push(o.time);
                if o.event {
                    events_x.push(o.time);
                }
            }
            Group::Y => {
                obs_y.push(o.time);
                if o.event {
                    events_y.push(o.time);
                }
            }
        }
    }
    TrialSnapshot {
        calendar_time: t,
        n_x: obs_x.len(),
        n_y: obs_y.len(),
        observations,
        obs_x,
        obs_y,
        events_x,
        events_y,
    }
}

/// Pooled product-limit estimate of the common distribution function under
/// the null hypothesis, as a sub-distribution step function.
///
/// With no censoring and everyone entered at time 0 this is the empirical
/// distribution of the pooled sample.
pub fn pooled_product_limit(snap: &TrialSnapshot) -> Result<StepFunction> {
    if !snap.observations.iter().any(|o| o.time > 0.0) {
        return Err(Error::Degenerate(
            "snapshot has no positive observed time".into(),
        ));
    }
    let pairs: Vec<(f64, bool)> = snap
        .observations
        .iter()
        .filter(|o| o.time > 0.0)
        .map(|o| (o.time, o.event))
        .collect();
    product_limit_distribution(&pairs)
}

/// Kaplan-Meier product-limit estimate, returned as the distribution
/// function 1 - S(s). With no censoring this is the empirical distribution.
pub fn kaplan_meier(times: &[(f64, bool)]) -> Result<StepFunction> {
    if times.is_empty() {
        return Err(Error::Degenerate("kaplan_meier: empty input".into()));
    }
    if times.iter().any(|&(t, _)| !(t > 0.0)) {
        return Err(Error::Invalid("kaplan_meier: times must be > 0".into()));
    }
    product_limit_distribution(times)
}

fn product_limit_distribution(times: &[(f64, bool)]) -> Result<StepFunction> {
    let mut sorted: Vec<(f64, bool)> = times.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len();
    let mut points = Vec::new();
    let mut surv = 1.0;
    let mut i = 0;
    while i < n {
        let u = sorted[i].0;
        let at_risk = n - i;
        let mut d = 0usize;
        while i < n && sorted[i].0 == u {
            if sorted[i].1 {
                d += 1;
            }
            i += 1;
        }
        if d > 0 {
            surv *= 1.0 - d as f64 / at_risk as f64;
            points.push((u, 1.0 - surv));
        }
    }
    StepFunction::new(0.0, points)
}

/// Breslow cumulative-hazard estimate and a flag for the no-event case.
#[derive(Debug, Clone)]
pub struct BreslowEstimate {
    pub cumhaz: StepFunction,
    /// Set when the snapshot contained no events (zero function returned).
    pub no_events: bool,
}

/// Breslow estimator of the baseline cumulative hazard at regression
/// parameter `beta`, using risk sets of all subjects with observed time at or
/// above each event time. At `beta = 0` this is the Nelson-Aalen estimator.
pub fn breslow_cumhaz(snap: &TrialSnapshot, beta: f64) -> Result<BreslowEstimate> {
    if snap.event_count() == 0 {
        return Ok(BreslowEstimate { cumhaz: StepFunction::constant(0.0), no_events: true });
    }
    let obs = &snap.observations;
    let n = obs.len();
    // Sweep ascending; risk-set weight sum maintained by removing subjects
    // with observed time below the current distinct time.
    let mut total: f64 = obs.iter().map(|o| (beta * o.covariate).exp()).sum();
    let mut points = Vec::new();
    let mut cum = 0.0;
    let mut i = 0;
    while i < n {
        let u = obs[i].time;
        let mut d = 0usize;
        let start = i;
        while i < n && obs[i].time == u {
            if obs[i].event {
                d += 1;
            }
            i += 1;
        }
        if d > 0 && u > 0.0 {
            cum += d as f64 / total;
            points.push((u, cum));
        }
        for o in &obs[start..i] {
            total -= (beta * o.covariate).exp();
        }
    }
    Ok(BreslowEstimate { cumhaz: StepFunction::new(0.0, points)?, no_events: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn subj(entry: f64, surv: f64, withd: f64, g: Group) -> SubjectRecord {
        SubjectRecord {
            entry_time: entry,
            survival_time: surv,
            withdrawal_time: withd,
            group: g,
            covariate: if g == Group::X { 1.0 } else { 0.0 },
        }
    }

    #[test]
    fn snapshot_truncates_at_calendar_time() {
        let data = TrialData::new(vec![subj(2.0, 3.0, f64::INFINITY, Group::X)]).unwrap();
        let snap = snapshot(&data, 4.0);
        assert_eq!(snap.observations[0].time, 2.0);
        assert!(!snap.observations[0].event);
    }

    #[test]
    fn snapshot_sees_full_event() {
        let data = TrialData::new(vec![subj(0.0, 1.0, f64::INFINITY, Group::X)]).unwrap();
        let snap = snapshot(&data, 5.0);
        assert_eq!(snap.observations[0].time, 1.0);
        assert!(snap.observations[0].event);
    }

    #[test]
    fn snapshot_step_functions() {
        let data = TrialData::new(vec![
            subj(0.0, 1.0, f64::INFINITY, Group::X),
            subj(0.0, 2.0, f64::INFINITY, Group::Y),
        ])
        .unwrap();
        let snap = snapshot(&data, 10.0);
        assert_eq!(snap.at_risk(Group::X, 2.0), 0);
        assert_eq!(snap.at_risk(Group::Y, 2.0), 1);
        assert_eq!(snap.counting(Group::X, f64::INFINITY), 1);
        assert_eq!(snap.counting(Group::Y, f64::INFINITY), 1);
    }

    #[test]
    fn snapshot_not_yet_entered_subject() {
        let data = TrialData::new(vec![subj(5.0, 1.0, f64::INFINITY, Group::X)]).unwrap();
        let snap = snapshot(&data, 3.0);
        assert_eq!(snap.observations[0].time, 0.0);
        assert!(!snap.observations[0].event);
        // Does not show up at risk at any s > 0.
        assert_eq!(snap.at_risk(Group::X, 1e-9), 0);
    }

    #[test]
    fn at_risk_consistency_invariant() {
        let data = TrialData::new(vec![
            subj(0.0, 1.0, f64::INFINITY, Group::X),
            subj(0.5, 2.0, 1.5, Group::X),
            subj(1.0, 0.5, f64::INFINITY, Group::Y),
        ])
        .unwrap();
        let snap = snapshot(&data, 2.5);
        for s in [0.1, 0.5, 1.0, 1.5, 2.0, 3.0] {
            let below = snap
                .observations
                .iter()
                .filter(|o| o.group == Group::X && o.time < s)
                .count();
            assert_eq!(snap.at_risk(Group::X, s) + below, 2);
        }
    }

    #[test]
    fn pooled_product_limit_uncensored() {
        let data = TrialData::new(vec![
            subj(0.0, 1.0, f64::INFINITY, Group::X),
            subj(0.0, 2.0, f64::INFINITY, Group::Y),
        ])
        .unwrap();
        let h = pooled_product_limit(&snapshot(&data, 10.0)).unwrap();
        assert_abs_diff_eq!(h.eval(1.0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(h.eval(2.0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(h.left_limit(1.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pooled_product_limit_single_event() {
        let data = TrialData::new(vec![subj(0.0, 5.0, f64::INFINITY, Group::X)]).unwrap();
        let h = pooled_product_limit(&snapshot(&data, 10.0)).unwrap();
        assert_eq!(h.eval(4.9), 0.0);
        assert_eq!(h.eval(5.0), 1.0);
    }

    #[test]
    fn pooled_product_limit_censoring_no_jump() {
        let data = TrialData::new(vec![
            subj(0.0, 1.0, f64::INFINITY, Group::X),
            subj(0.0, 9.0, 1.5, Group::Y), // censored at 1.5
        ])
        .unwrap();
        let h = pooled_product_limit(&snapshot(&data, 10.0)).unwrap();
        assert_abs_diff_eq!(h.eval(1.0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(h.eval(8.0), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn pooled_product_limit_degenerate() {
        let data = TrialData::new(vec![subj(5.0, 1.0, f64::INFINITY, Group::X)]).unwrap();
        assert!(pooled_product_limit(&snapshot(&data, 1.0)).is_err());
    }

    #[test]
    fn kaplan_meier_examples() {
        let f = kaplan_meier(&[(5.0, true)]).unwrap();
        assert_eq!(f.eval(4.999), 0.0);
        assert_eq!(f.eval(5.0), 1.0);

        let f = kaplan_meier(&[(1.0, true), (2.0, true)]).unwrap();
        assert_abs_diff_eq!(f.eval(1.0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f.eval(2.0), 1.0, epsilon = 1e-12);

        let f = kaplan_meier(&[(1.0, true), (2.0, false), (3.0, true)]).unwrap();
        assert_abs_diff_eq!(f.eval(1.0), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.eval(2.9), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.eval(3.0), 1.0, epsilon = 1e-12);

        assert!(kaplan_meier(&[]).is_err());
    }

    #[test]
    fn breslow_single_subject() {
        let mut s = subj(0.0, 2.0, f64::INFINITY, Group::X);
        s.covariate = 0.0;
        let data = TrialData::new(vec![s]).unwrap();
        for beta in [0.0, 0.7, -1.3] {
            let b = breslow_cumhaz(&snapshot(&data, 10.0), beta).unwrap();
            assert!(!b.no_events);
            assert_abs_diff_eq!(b.cumhaz.eval(2.0), 1.0, epsilon = 1e-12);
            assert_eq!(b.cumhaz.eval(1.9), 0.0);
        }
    }

    #[test]
    fn breslow_reduces_to_nelson_aalen() {
        let mut a = subj(0.0, 1.0, f64::INFINITY, Group::X);
        a.covariate = 0.0;
        let mut b = subj(0.0, 2.0, f64::INFINITY, Group::Y);
        b.covariate = 0.0;
        let data = TrialData::new(vec![a, b]).unwrap();
        let est = breslow_cumhaz(&snapshot(&data, 10.0), 0.0).unwrap();
        assert_abs_diff_eq!(est.cumhaz.eval(1.0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(est.cumhaz.eval(2.0), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn breslow_with_covariates() {
        let mut a = subj(0.0, 1.0, f64::INFINITY, Group::X);
        a.covariate = 1.0;
        let mut b = subj(0.0, 2.0, f64::INFINITY, Group::Y);
        b.covariate = 0.0;
        let data = TrialData::new(vec![a, b]).unwrap();
        let beta = 2.0_f64.ln();
        let est = breslow_cumhaz(&snapshot(&data, 10.0), beta).unwrap();
        assert_abs_diff_eq!(est.cumhaz.eval(1.0), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est.cumhaz.eval(2.0), 1.0 / 3.0 + 1.0, epsilon = 1e-12);
    }

    #[test]
    fn breslow_no_events() {
        let data = TrialData::new(vec![subj(0.0, 5.0, 1.0, Group::X)]).unwrap();
        let est = breslow_cumhaz(&snapshot(&data, 10.0), 0.0).unwrap();
        assert!(est.no_events);
        assert_eq!(est.cumhaz.eval(100.0), 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let csv_text = "entry_time,survival_time,withdrawal_time,group,covariate\n\
                        0.0,1.5,inf,X,1\n\
                        0.5,2.0,3.0,Y,0\n";
        let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
        let data = TrialData::from_csv_reader(&mut rdr).unwrap();
        assert_eq!(data.n(), 2);
        assert!(data.subjects[0].withdrawal_time.is_infinite());
        assert_eq!(data.group_size(Group::Y), 1);

        let mut buf = Vec::new();
        {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
            data.to_csv_writer(&mut w).unwrap();
        }
        let mut rdr2 = csv::Reader::from_reader(buf.as_slice());
        let data2 = TrialData::from_csv_reader(&mut rdr2).unwrap();
        assert_eq!(data2.n(), 2);
        assert_eq!(data2.subjects[1].survival_time, 2.0);
    }

    #[test]
    fn monotone_revelation() {
        let data = TrialData::new(vec![
            subj(1.0, 2.0, f64::INFINITY, Group::X),
            subj(0.0, 4.0, 3.0, Group::Y),
        ])
        .unwrap();
        let mut prev: Option<Vec<(f64, bool)>> = None;
        for t in [0.0, 0.5, 1.5, 2.5, 4.0, 8.0] {
            // Index by subject, not sorted order.
            let cur: Vec<(f64, bool)> = data
                .subjects
                .iter()
                .map(|s| {
                    let fu = (t - s.entry_time).max(0.0);
                    let time = s.survival_time.min(s.withdrawal_time).min(fu);
                    (time, time == s.survival_time)
                })
                .collect();
            if let Some(p) = prev {
                for (a, b) in p.iter().zip(cur.iter()) {
                    assert!(a.0 <= b.0);
                    assert!(!a.1 || b.1);
                }
            }
            prev = Some(cur);
        }
    }
}
