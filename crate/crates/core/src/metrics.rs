//! Figures of merit estimated from disclosed rounds, and the abort rule.
//!
//! Conditional probabilities are estimated from disclosed rounds only (the
//! only rounds whose settings are public). The multiple-count rate and the
//! loss estimate need no settings and use Alice's full announcement stream.

use serde::{Deserialize, Serialize};
use std::fmt::{self, Write as _};

use crate::analysis::visibility_from_error_rate;
use crate::channel::ChannelConfig;
use crate::parties::RoundRecord;
use crate::photonics::{Action, Announcement};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Figure {
    Kappa,
    Visibility,
    Bias,
    ErrorRate,
    MultiCount,
    Loss,
}

impl Figure {
    /// Order in which failing figures are reported; the first is the
    /// primary abort reason.
    pub const PRIORITY: [Figure; 6] = [
        Figure::ErrorRate,
        Figure::Kappa,
        Figure::Bias,
        Figure::Visibility,
        Figure::MultiCount,
        Figure::Loss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Kappa => "kappa",
            Figure::Visibility => "visibility",
            Figure::Bias => "bias",
            Figure::ErrorRate => "errorRate",
            Figure::MultiCount => "r",
            Figure::Loss => "lambda",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Figure::Kappa => 1,
            Figure::Visibility => 2,
            Figure::Bias => 3,
            Figure::ErrorRate => 4,
            Figure::MultiCount => 5,
            Figure::Loss => 6,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Figure::PRIORITY.into_iter().find(|f| f.code() == code)
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// Rounds the estimate is a frequency over.
    pub count: usize,
}

/// Outcome tallies for one `(Bob, Charlie)` settings cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub rounds: usize,
    pub d1: usize,
    pub d2: usize,
    pub null: usize,
    /// Both `D_B` and `D_C` clicked.
    pub coincidences: usize,
}

impl Cell {
    pub fn clicks(&self) -> usize {
        self.d1 + self.d2
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    cells: [[Cell; 2]; 2],
}

fn idx(a: Action) -> usize {
    match a {
        Action::F => 0,
        Action::A => 1,
    }
}

impl CellCounts {
    pub fn tally<'a>(sample: impl IntoIterator<Item = &'a RoundRecord>) -> Self {
        let mut out = Self::default();
        for r in sample {
            let c = &mut out.cells[idx(r.setting_b)][idx(r.setting_c)];
            c.rounds += 1;
            match r.outcome_alice {
                Announcement::D1 => c.d1 += 1,
                Announcement::D2 => c.d2 += 1,
                Announcement::Null => c.null += 1,
            }
            c.coincidences += (r.outcome_b && r.outcome_c) as usize;
        }
        out
    }

    pub fn cell(&self, bob: Action, charlie: Action) -> &Cell {
        &self.cells[idx(bob)][idx(charlie)]
    }

    pub fn total_d1(&self) -> usize {
        self.cells.iter().flatten().map(|c| c.d1).sum()
    }
}

fn insufficient(figure: Figure) -> Error {
    Error::InsufficientSample { figure: figure.name() }
}

/// `κ = P(D_B D_C | AA)`.
pub fn estimate_kappa(sample: &[RoundRecord]) -> Result<Estimate> {
    let aa = *CellCounts::tally(sample).cell(Action::A, Action::A);
    if aa.rounds == 0 {
        return Err(insufficient(Figure::Kappa));
    }
    Ok(Estimate {
        value: aa.coincidences as f64 / aa.rounds as f64,
        count: aa.rounds,
    })
}

/// `𝒱 = (P(D2|FF) − P(D1|FF)) / (P(D1|FF) + P(D2|FF))`.
pub fn estimate_visibility(sample: &[RoundRecord]) -> Result<Estimate> {
    let ff = *CellCounts::tally(sample).cell(Action::F, Action::F);
    if ff.clicks() == 0 {
        return Err(insufficient(Figure::Visibility));
    }
    Ok(Estimate {
        value: (ff.d2 as f64 - ff.d1 as f64) / ff.clicks() as f64,
        count: ff.clicks(),
    })
}

/// Largest `|P(D1|cell) − P(D2|cell)|` over the anti-correlated cells, each
/// normalized by the cell's click rounds.
pub fn estimate_bias(sample: &[RoundRecord]) -> Result<Estimate> {
    let counts = CellCounts::tally(sample);
    [counts.cell(Action::A, Action::F), counts.cell(Action::F, Action::A)]
        .into_iter()
        .filter(|c| c.clicks() > 0)
        .map(|c| Estimate {
            value: (c.d1 as f64 - c.d2 as f64).abs() / c.clicks() as f64,
            count: c.clicks(),
        })
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or(insufficient(Figure::Bias))
}

/// `e = P(FF|D1) + P(AA|D1)`.
pub fn estimate_error_rate(sample: &[RoundRecord]) -> Result<Estimate> {
    let counts = CellCounts::tally(sample);
    let d1 = counts.total_d1();
    if d1 == 0 {
        return Err(insufficient(Figure::ErrorRate));
    }
    let wrong = counts.cell(Action::F, Action::F).d1 + counts.cell(Action::A, Action::A).d1;
    Ok(Estimate {
        value: wrong as f64 / d1 as f64,
        count: d1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    /// Multiple-count rate.
    pub r: Estimate,
    /// Loss estimate from the excess of click-free rounds over the ideal 1/2.
    pub lambda: Estimate,
    /// Fraction of rounds without any click at Alice.
    pub zero_click: f64,
}

pub fn estimate_rates(all: &[RoundRecord]) -> Rates {
    let n = all.len();
    let nf = n.max(1) as f64;
    let multi = all.iter().filter(|r| r.multiple).count();
    let zero = all
        .iter()
        .filter(|r| r.outcome_alice == Announcement::Null && !r.multiple)
        .count();
    let zero_click = zero as f64 / nf;
    Rates {
        r: Estimate {
            value: multi as f64 / nf,
            count: n,
        },
        lambda: Estimate {
            value: (2.0 * zero_click - 1.0).clamp(0.0, 1.0),
            count: n,
        },
        zero_click,
    }
}

/// Honest-protocol values of the figures under a given channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Expectations {
    pub kappa: f64,
    pub visibility: f64,
    pub bias: f64,
    pub error_rate: f64,
    pub r: f64,
    pub zero_click: f64,
    pub lambda: f64,
}

impl Expectations {
    /// In an honest round the photon survives absorption with probability
    /// 1/2 and reaches Alice with probability `(1 − λ)/2`. A double click
    /// needs one dark count beside the photon or two without it; a `(A,A)`
    /// coincidence needs a dark count at the non-absorbing detector.
    pub fn for_channel(cfg: &ChannelConfig) -> Self {
        let (l, d) = (cfg.loss_rate, cfg.dark_rate);
        let arrive = (1.0 - l) / 2.0;
        let zero_click = (1.0 - arrive) * (1.0 - d).powi(2);
        Self {
            kappa: d,
            visibility: 1.0,
            bias: 0.0,
            error_rate: 0.0,
            r: arrive * d + (1.0 - arrive) * d * d,
            zero_click,
            lambda: (2.0 * zero_click - 1.0).clamp(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeProbabilities {
    pub d1: f64,
    pub d2: f64,
    pub null: f64,
}

/// Alice's outcome distribution for one settings cell under a probe of
/// strength `theta` (0 for no probe) and loss `loss`, without dark counts.
pub fn predicted_outcomes(bob: Action, charlie: Action, theta: f64, loss: f64) -> OutcomeProbabilities {
    let s2 = theta.sin().powi(2);
    let t = 1.0 - loss;
    let (d1, d2) = match (bob, charlie) {
        (Action::F, Action::F) => (t * s2 / 2.0, t * (1.0 - s2 / 2.0)),
        (Action::A, Action::A) => (0.0, 0.0),
        _ => (t / 4.0, t / 4.0),
    };
    OutcomeProbabilities {
        d1,
        d2,
        null: 1.0 - d1 - d2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolerancePolicy {
    /// Absolute tolerance floor.
    pub floor: f64,
    /// Binomial z-score.
    pub z: f64,
    /// Highest error rate that still leaves a positive key rate.
    pub error_ceiling: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self {
            floor: 0.02,
            z: 4.0,
            error_ceiling: 0.1425,
        }
    }
}

impl TolerancePolicy {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, value| Error::Domain {
            name,
            value,
            domain: "see policy docs",
        };
        if !(self.floor.is_finite() && self.floor >= 0.0) {
            return Err(bad("floor", self.floor));
        }
        if !(self.z.is_finite() && self.z >= 0.0) {
            return Err(bad("z", self.z));
        }
        if !(self.error_ceiling > 0.0 && self.error_ceiling < 0.5) {
            return Err(bad("error_ceiling", self.error_ceiling));
        }
        Ok(())
    }

    fn binomial(&self, p0: f64, m: usize) -> f64 {
        let sigma = if m == 0 { f64::INFINITY } else { (p0 * (1.0 - p0) / m as f64).sqrt() };
        self.floor.max(self.z * sigma)
    }

    /// Lowest visibility consistent with the error ceiling in a lossless
    /// channel.
    pub fn visibility_floor(&self) -> f64 {
        visibility_from_error_rate(self.error_ceiling)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FigureCheck {
    pub figure: Figure,
    pub estimate: Option<f64>,
    pub count: usize,
    pub expected: f64,
    /// Allowed deviation from `expected` (one-sided for visibility and error rate).
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    /// Failing figures in [`Figure::PRIORITY`] order.
    Fail(Vec<Figure>),
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn primary_reason(&self) -> Option<Figure> {
        match self {
            Verdict::Pass => None,
            Verdict::Fail(f) => f.first().copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub checks: Vec<FigureCheck>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeritReport {
    pub n: usize,
    pub kappa: Option<Estimate>,
    pub visibility: Option<Estimate>,
    pub bias: Option<Estimate>,
    pub error_rate: Option<Estimate>,
    pub rates: Rates,
    pub cells: CellCounts,
    pub expected: Expectations,
    pub assessment: Assessment,
}

/// Compares every figure with its honest value.
///
/// `κ`, `B`, `r` and `λ̂` fail when they deviate by more than
/// `max(floor, z·σ)`. `e` fails at or above the error ceiling and `𝒱` below
/// the visibility that ceiling implies; a missing estimate fails.
pub fn abort_decision(report: &MeritReport, policy: &TolerancePolicy) -> Assessment {
    let exp = &report.expected;
    let mut checks = Vec::with_capacity(6);

    let two_sided = |figure, est: Option<Estimate>, expected: f64, tol: &dyn Fn(usize) -> f64| {
        let count = est.map_or(0, |e| e.count);
        let tolerance = tol(count);
        FigureCheck {
            figure,
            estimate: est.map(|e| e.value),
            count,
            expected,
            tolerance,
            passed: est.is_some_and(|e| (e.value - expected).abs() <= tolerance),
        }
    };

    checks.push(two_sided(Figure::Kappa, report.kappa, exp.kappa, &|m| {
        policy.binomial(exp.kappa, m)
    }));

    let v_floor = policy.visibility_floor();
    checks.push(FigureCheck {
        figure: Figure::Visibility,
        estimate: report.visibility.map(|e| e.value),
        count: report.visibility.map_or(0, |e| e.count),
        expected: exp.visibility,
        tolerance: exp.visibility - v_floor,
        passed: report.visibility.is_some_and(|e| e.value >= v_floor),
    });

    // B = |2p̂ − 1| with p̂ ~ Bin(m, 1/2)/m has σ = 1/√m
    checks.push(two_sided(Figure::Bias, report.bias, exp.bias, &|m| {
        policy.binomial(0.5, m) * 2.0
    }));

    checks.push(FigureCheck {
        figure: Figure::ErrorRate,
        estimate: report.error_rate.map(|e| e.value),
        count: report.error_rate.map_or(0, |e| e.count),
        expected: exp.error_rate,
        tolerance: policy.error_ceiling,
        passed: report.error_rate.is_some_and(|e| e.value < policy.error_ceiling),
    });

    let n = report.n;
    checks.push(two_sided(Figure::MultiCount, Some(report.rates.r), exp.r, &|_| {
        policy.binomial(exp.r, n)
    }));
    checks.push(two_sided(Figure::Loss, Some(report.rates.lambda), exp.lambda, &|_| {
        policy.floor.max(2.0 * policy.z * (exp.zero_click * (1.0 - exp.zero_click) / n.max(1) as f64).sqrt())
    }));

    let failing: Vec<Figure> = Figure::PRIORITY
        .into_iter()
        .filter(|f| checks.iter().any(|c| c.figure == *f && !c.passed))
        .collect();
    let verdict = if failing.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail(failing)
    };
    Assessment { checks, verdict }
}

impl MeritReport {
    /// Estimates every figure from `sample` (disclosed rounds) and `all`
    /// (the full announcement stream), then applies `policy`.
    pub fn build(
        sample: &[RoundRecord],
        all: &[RoundRecord],
        channel: &ChannelConfig,
        policy: &TolerancePolicy,
    ) -> Self {
        let mut report = Self {
            n: all.len(),
            kappa: estimate_kappa(sample).ok(),
            visibility: estimate_visibility(sample).ok(),
            bias: estimate_bias(sample).ok(),
            error_rate: estimate_error_rate(sample).ok(),
            rates: estimate_rates(all),
            cells: CellCounts::tally(sample),
            expected: Expectations::for_channel(channel),
            assessment: Assessment {
                checks: Vec::new(),
                verdict: Verdict::Pass,
            },
        };
        report.assessment = abort_decision(&report, policy);
        report
    }

    pub fn verdict(&self) -> &Verdict {
        &self.assessment.verdict
    }

    pub fn verdict_label(&self) -> String {
        match self.verdict() {
            Verdict::Pass => "pass".to_string(),
            Verdict::Fail(f) => format!("abort:{}", f[0]),
        }
    }

    /// Flat `key = value` block.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "n = {}", self.n);
        let mut est = |key: &str, e: Option<Estimate>| {
            match e {
                Some(e) => {
                    let _ = writeln!(out, "{key} = {:.6}", e.value);
                    let _ = writeln!(out, "{key}_count = {}", e.count);
                }
                None => {
                    let _ = writeln!(out, "{key} = NA");
                    let _ = writeln!(out, "{key}_count = 0");
                }
            }
        };
        est("kappa", self.kappa);
        est("visibility", self.visibility);
        est("bias", self.bias);
        est("errorRate", self.error_rate);
        est("r", Some(self.rates.r));
        est("lambda", Some(self.rates.lambda));
        for c in &self.assessment.checks {
            let _ = writeln!(out, "check.{} = {}", c.figure, if c.passed { "pass" } else { "fail" });
        }
        let _ = writeln!(out, "verdict = {}", self.verdict_label());
        if let Verdict::Fail(f) = self.verdict() {
            let names: Vec<&str> = f.iter().map(|x| x.name()).collect();
            let _ = writeln!(out, "abort_reason = {}", f[0]);
            let _ = writeln!(out, "abort_reasons = {}", names.join(","));
        }
        out
    }

    pub const CSV_HEADER: &'static str = "n,kappa,visibility,bias,errorRate,r,lambda,verdict";

    pub fn to_csv_row(&self) -> String {
        let f = |e: Option<Estimate>| e.map_or("NA".to_string(), |e| format!("{:.6}", e.value));
        format!(
            "{},{},{},{},{},{},{},{}",
            self.n,
            f(self.kappa),
            f(self.visibility),
            f(self.bias),
            f(self.error_rate),
            f(Some(self.rates.r)),
            f(Some(self.rates.lambda)),
            self.verdict_label()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(b: Action, c: Action, a: Announcement, ob: bool, oc: bool) -> RoundRecord {
        RoundRecord {
            round_id: 0,
            setting_b: b,
            setting_c: c,
            outcome_alice: a,
            outcome_b: ob,
            outcome_c: oc,
            sampled: true,
            sifted_bit: None,
            multiple: false,
        }
    }

    use Action::{A, F};
    use Announcement::{Null, D1, D2};

    #[test]
    fn estimators_on_a_hand_built_sample() {
        let sample = vec![
            rec(A, A, Null, true, false),
            rec(A, A, Null, true, true),
            rec(F, F, D2, false, false),
            rec(F, F, D2, false, false),
            rec(F, F, D2, false, false),
            rec(F, F, D1, false, false),
            rec(A, F, D1, false, false),
            rec(A, F, D2, false, false),
            rec(A, F, Null, true, false),
            rec(F, A, D2, false, false),
        ];
        let k = estimate_kappa(&sample).unwrap();
        assert_eq!((k.value, k.count), (0.5, 2));
        let v = estimate_visibility(&sample).unwrap();
        assert_eq!((v.value, v.count), (0.5, 4));
        let b = estimate_bias(&sample).unwrap();
        assert_eq!((b.value, b.count), (1.0, 1));
        let e = estimate_error_rate(&sample).unwrap();
        assert_eq!((e.value, e.count), (0.5, 2));
    }

    #[test]
    fn empty_cells_are_insufficient() {
        let only_ff = vec![rec(F, F, D2, false, false)];
        assert_eq!(
            estimate_kappa(&only_ff),
            Err(Error::InsufficientSample { figure: "kappa" })
        );
        assert!(estimate_bias(&only_ff).is_err());
        assert!(estimate_error_rate(&only_ff).is_err());
        assert!(estimate_visibility(&[rec(F, F, Null, false, false)]).is_err());
    }

    #[test]
    fn rates_from_announcements() {
        let mut all = vec![rec(F, F, D2, false, false); 6];
        all.push(rec(A, A, Null, true, false));
        all.push(rec(A, A, Null, true, false));
        all.push(rec(A, F, Null, true, false));
        let mut multi = rec(F, F, Null, false, false);
        multi.multiple = true;
        all.push(multi);
        let r = estimate_rates(&all);
        assert!((r.r.value - 0.1).abs() < 1e-15);
        assert!((r.zero_click - 0.3).abs() < 1e-15);
        assert_eq!(r.lambda.value, 0.0);
    }

    #[test]
    fn honest_expectations() {
        let e = Expectations::for_channel(&ChannelConfig::default());
        assert_eq!((e.kappa, e.r, e.lambda), (0.0, 0.0, 0.0));
        assert!((e.zero_click - 0.5).abs() < 1e-15);
        let e = Expectations::for_channel(&ChannelConfig {
            loss_rate: 0.05,
            ..Default::default()
        });
        assert!((e.lambda - 0.05).abs() < 1e-12);
    }

    fn report_with(e: f64, v: f64) -> MeritReport {
        let est = |value| {
            Some(Estimate {
                value,
                count: 10_000,
            })
        };
        let mut r = MeritReport {
            n: 100_000,
            kappa: est(0.0),
            visibility: est(v),
            bias: est(0.0),
            error_rate: est(e),
            rates: Rates {
                r: Estimate { value: 0.0, count: 100_000 },
                lambda: Estimate { value: 0.0, count: 100_000 },
                zero_click: 0.5,
            },
            cells: CellCounts::default(),
            expected: Expectations::for_channel(&ChannelConfig::default()),
            assessment: Assessment {
                checks: vec![],
                verdict: Verdict::Pass,
            },
        };
        r.assessment = abort_decision(&r, &TolerancePolicy::default());
        r
    }

    #[test]
    fn abort_on_error_rate_first() {
        // θ = 0.6: e = sin²/(1 + sin²) ≈ 0.2417, 𝒱 = cos² ≈ 0.6812
        let theta: f64 = 0.6;
        let s2 = theta.sin().powi(2);
        let r = report_with(s2 / (1.0 + s2), 1.0 - s2);
        assert_eq!(r.verdict().primary_reason(), Some(Figure::ErrorRate));
        assert_eq!(r.verdict(), &Verdict::Fail(vec![Figure::ErrorRate, Figure::Visibility]));
        assert!(r.to_key_values().contains("abort_reason = errorRate"));
        assert!(r.to_csv_row().ends_with("abort:errorRate"));
    }

    #[test]
    fn moderate_eve_passes() {
        // θ = 0.2: e ≈ 0.0380 below the ceiling
        let theta: f64 = 0.2;
        let s2 = theta.sin().powi(2);
        let r = report_with(s2 / (1.0 + s2), 1.0 - s2);
        assert!(r.verdict().passed(), "{:?}", r.assessment);
    }

    #[test]
    fn coincidences_abort() {
        let mut r = report_with(0.0, 1.0);
        r.kappa = Some(Estimate { value: 0.5, count: 1000 });
        let a = abort_decision(&r, &TolerancePolicy::default());
        assert_eq!(a.verdict.primary_reason(), Some(Figure::Kappa));
    }

    #[test]
    fn missing_estimate_fails() {
        let mut r = report_with(0.0, 1.0);
        r.error_rate = None;
        let a = abort_decision(&r, &TolerancePolicy::default());
        assert_eq!(a.verdict, Verdict::Fail(vec![Figure::ErrorRate]));
    }

    #[test]
    fn predictions_reduce_to_the_honest_table() {
        let ff = predicted_outcomes(F, F, 0.0, 0.0);
        assert_eq!((ff.d1, ff.d2, ff.null), (0.0, 1.0, 0.0));
        let af = predicted_outcomes(A, F, 0.7, 0.0);
        assert_eq!((af.d1, af.d2, af.null), (0.25, 0.25, 0.5));
        assert_eq!(predicted_outcomes(A, A, 0.3, 0.1).null, 1.0);
        // e = P(D1|FF) / Σ P(D1|cell) reproduces sin²/(1 + sin²)
        let theta: f64 = 0.35;
        let d1 = [(F, F), (A, F), (F, A)].map(|(b, c)| predicted_outcomes(b, c, theta, 0.2).d1);
        let s2 = theta.sin().powi(2);
        assert!((d1[0] / d1.iter().sum::<f64>() - s2 / (1.0 + s2)).abs() < 1e-15);
    }

    #[test]
    fn figure_codes_round_trip() {
        for f in Figure::PRIORITY {
            assert_eq!(Figure::from_code(f.code()), Some(f));
        }
        assert_eq!(Figure::from_code(0), None);
    }

    #[test]
    fn csv_layout() {
        let r = report_with(0.0, 1.0);
        assert_eq!(
            r.to_csv_row(),
            "100000,0.000000,1.000000,0.000000,0.000000,0.000000,0.000000,pass"
        );
        assert_eq!(MeritReport::CSV_HEADER.split(',').count(), r.to_csv_row().split(',').count());
    }
}
