//! Single-photon amplitudes in the two-arm interferometer.
//!
//! The photon lives in one of two arms (B for Bob, C for Charlie). When Eve is
//! active each arm branch is tensored with a two-probe state expanded in the
//! product basis `{|y,y>, |y,y⊥>, |y⊥,y>, |y⊥,y⊥>}`; otherwise the probe space
//! is the trivial singleton. States are dense vectors of at most 2 x 4
//! amplitudes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

use crate::error::check_range;
use crate::rng::RandomStream;
use crate::{Error, Result};

pub type Complex = Complex64;

const ZERO: Complex = Complex::new(0.0, 0.0);
const I: Complex = Complex::new(0.0, 1.0);

/// Probe index of `|y,y>`, `|y,y⊥>`, `|y⊥,y>` and `|y⊥,y⊥>`.
pub const YY: usize = 0;
pub const Y_YP: usize = 1;
pub const YP_Y: usize = 2;
pub const YP_YP: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeBasis {
    /// No probe attached.
    Trivial,
    /// Eve's probe pair `E1 E2`.
    Pair,
}

impl ProbeBasis {
    pub fn dim(self) -> usize {
        match self {
            ProbeBasis::Trivial => 1,
            ProbeBasis::Pair => 4,
        }
    }

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            ProbeBasis::Trivial => &["-"],
            ProbeBasis::Pair => &["y,y", "y,y⊥", "y⊥,y", "y⊥,y⊥"],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    B,
    C,
}

/// What a party does to its arm: reflect with the Faraday mirror or absorb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    F,
    A,
}

impl Action {
    pub fn as_char(self) -> char {
        match self {
            Action::F => 'F',
            Action::A => 'A',
        }
    }
}

/// Alice's public report for a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Announcement {
    D1,
    D2,
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectionOutcome {
    D1,
    D2,
    DB,
    DC,
    Null,
}

/// Photon (arm) ⊗ probe state. Amplitudes are absolute: after a
/// non-absorbing `A` the surviving branch keeps its original weight.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    basis: ProbeBasis,
    amp_b: Vec<Complex>,
    amp_c: Vec<Complex>,
}

impl JointState {
    pub fn new(basis: ProbeBasis, amp_b: Vec<Complex>, amp_c: Vec<Complex>) -> Result<Self> {
        if amp_b.len() != basis.dim() || amp_c.len() != basis.dim() {
            return Err(Error::InvalidConfig(format!(
                "amplitude vectors must have length {}",
                basis.dim()
            )));
        }
        if amp_b.iter().chain(&amp_c).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidConfig("non-finite amplitude".into()));
        }
        Ok(Self { basis, amp_b, amp_c })
    }

    /// State with nothing left in flight.
    fn vacuum(basis: ProbeBasis) -> Self {
        Self {
            basis,
            amp_b: vec![ZERO; basis.dim()],
            amp_c: vec![ZERO; basis.dim()],
        }
    }

    pub fn basis(&self) -> ProbeBasis {
        self.basis
    }

    pub fn amp(&self, arm: Arm) -> &[Complex] {
        match arm {
            Arm::B => &self.amp_b,
            Arm::C => &self.amp_c,
        }
    }

    fn amp_mut(&mut self, arm: Arm) -> &mut Vec<Complex> {
        match arm {
            Arm::B => &mut self.amp_b,
            Arm::C => &mut self.amp_c,
        }
    }

    pub fn arm_norm_sqr(&self, arm: Arm) -> f64 {
        norm_sqr(self.amp(arm))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.arm_norm_sqr(Arm::B) + self.arm_norm_sqr(Arm::C)
    }
}

pub fn norm_sqr(v: &[Complex]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `<u|v>`, conjugate-linear in the first argument.
pub fn inner(u: &[Complex], v: &[Complex]) -> Complex {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

fn normalized(v: &[Complex]) -> Option<Vec<Complex>> {
    let n = norm_sqr(v).sqrt();
    (n > 1e-300).then(|| v.iter().map(|z| z / n).collect())
}

/// The photon right after Alice's beam splitter: transmitted into Charlie's
/// arm with amplitude `1/√2`, reflected into Bob's arm with `i/√2`.
pub fn emit() -> JointState {
    JointState {
        basis: ProbeBasis::Trivial,
        amp_b: vec![I * FRAC_1_SQRT_2],
        amp_c: vec![Complex::new(FRAC_1_SQRT_2, 0.0)],
    }
}

pub fn check_theta(theta: f64) -> Result<f64> {
    check_range("theta", theta, 0.0, FRAC_PI_2, "[0, pi/2]")
}

/// Probe vectors carried by the B branch (`|y,n>`) and the C branch
/// (`|n,y>`), with `|n> = cos θ |y> + sin θ |y⊥>`.
pub fn branch_probes(theta: f64) -> ([Complex; 4], [Complex; 4]) {
    let (s, c) = theta.sin_cos();
    let c = Complex::new(c, 0.0);
    let s = Complex::new(s, 0.0);
    ([c, s, ZERO, ZERO], [c, ZERO, s, ZERO])
}

pub fn attach_eve_probe(state: &JointState, theta: f64) -> Result<JointState> {
    check_theta(theta)?;
    if state.basis != ProbeBasis::Trivial {
        return Err(Error::InvalidConfig("probe already attached".into()));
    }
    let (probe_b, probe_c) = branch_probes(theta);
    let b = state.amp_b[0];
    let c = state.amp_c[0];
    Ok(JointState {
        basis: ProbeBasis::Pair,
        amp_b: probe_b.iter().map(|p| b * p).collect(),
        amp_c: probe_c.iter().map(|p| c * p).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionOutcome {
    pub state: JointState,
    pub absorbed: bool,
    /// Normalized probe state left behind when the photon was absorbed.
    pub absorbed_probe: Option<Vec<Complex>>,
}

/// Applies `F` (identity) or `A` to one arm.
///
/// `A` absorbs with probability `‖amp_arm‖² / ‖state‖²`, which is
/// `‖amp_arm‖²` on a freshly emitted state. On absorption nothing remains in
/// flight. Otherwise the arm is zeroed without renormalizing, so the surviving
/// norm is the probability of having reached this point.
pub fn apply_party_action(
    state: &JointState,
    arm: Arm,
    action: Action,
    rng: &mut RandomStream,
) -> ActionOutcome {
    if action == Action::F {
        return ActionOutcome {
            state: state.clone(),
            absorbed: false,
            absorbed_probe: None,
        };
    }
    let total = state.norm_sqr();
    let in_arm = state.arm_norm_sqr(arm);
    let p_absorb = if total > 0.0 { in_arm / total } else { 0.0 };
    if rng.bernoulli(p_absorb) {
        ActionOutcome {
            absorbed_probe: normalized(state.amp(arm)),
            state: JointState::vacuum(state.basis),
            absorbed: true,
        }
    } else {
        let mut next = state.clone();
        next.amp_mut(arm).iter_mut().for_each(|z| *z = ZERO);
        ActionOutcome {
            state: next,
            absorbed: false,
            absorbed_probe: None,
        }
    }
}

/// Amplitudes at Alice's two output ports.
#[derive(Debug, Clone, PartialEq)]
pub struct PortAmplitudes {
    pub d1: Vec<Complex>,
    pub d2: Vec<Complex>,
}

impl PortAmplitudes {
    pub fn d1_norm_sqr(&self) -> f64 {
        norm_sqr(&self.d1)
    }

    pub fn d2_norm_sqr(&self) -> f64 {
        norm_sqr(&self.d2)
    }
}

/// Second pass through the beam splitter:
/// `d1 = (b − i c)/√2`, `d2 = (b + i c)/√2`.
pub fn recombine_at_bs(state: &JointState) -> PortAmplitudes {
    let (d1, d2) = state
        .amp_b
        .iter()
        .zip(&state.amp_c)
        .map(|(&b, &c)| ((b - I * c) * FRAC_1_SQRT_2, (b + I * c) * FRAC_1_SQRT_2))
        .unzip();
    PortAmplitudes { d1, d2 }
}

/// Clicks at Alice's detectors in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Detection {
    pub d1: bool,
    pub d2: bool,
}

impl Detection {
    pub fn outcome(self) -> DetectionOutcome {
        match (self.d1, self.d2) {
            (true, false) => DetectionOutcome::D1,
            (false, true) => DetectionOutcome::D2,
            _ => DetectionOutcome::Null,
        }
    }

    /// Alice announces a port only when exactly one clicked.
    pub fn announcement(self) -> Announcement {
        match self.outcome() {
            DetectionOutcome::D1 => Announcement::D1,
            DetectionOutcome::D2 => Announcement::D2,
            _ => Announcement::Null,
        }
    }

    pub fn is_multiple(self) -> bool {
        self.d1 && self.d2
    }
}

/// Samples Alice's detectors.
///
/// The photon reaches `D1`/`D2` in proportion to the port weights (the
/// surviving norm is the conditioning event, absorption having been sampled
/// already), is lost with probability `loss_rate`, and each detector fires a
/// dark count independently with probability `dark_rate`.
pub fn sample_detection(
    ports: &PortAmplitudes,
    loss_rate: f64,
    dark_rate: f64,
    rng: &mut RandomStream,
) -> Detection {
    let w1 = ports.d1_norm_sqr();
    let w2 = ports.d2_norm_sqr();
    let total = w1 + w2;
    let mut det = Detection::default();
    let u = rng.uniform();
    if total > 0.0 {
        let keep = 1.0 - loss_rate;
        if u < keep * w1 / total {
            det.d1 = true;
        } else if u < keep * (w1 + w2) / total {
            det.d2 = true;
        }
    }
    det.d1 |= rng.bernoulli(dark_rate);
    det.d2 |= rng.bernoulli(dark_rate);
    det
}

/// Eve's probes after Alice's announcement.
#[derive(Debug, Clone, PartialEq)]
pub struct EveProbePair {
    pub theta: f64,
    pub announcement: Announcement,
    pub collapsed: Vec<Complex>,
}

impl EveProbePair {
    /// Conditional probe state given the announced port. `None` when the
    /// port carries no amplitude (e.g. a dark-count-only click).
    pub fn conditioned(theta: f64, announcement: Announcement, ports: &PortAmplitudes) -> Option<Self> {
        let amp = match announcement {
            Announcement::D1 => &ports.d1,
            Announcement::D2 => &ports.d2,
            Announcement::Null => return None,
        };
        if amp.len() != ProbeBasis::Pair.dim() {
            return None;
        }
        normalized(amp).map(|collapsed| Self {
            theta,
            announcement,
            collapsed,
        })
    }
}

/// Minimum-error success probability for telling `|y,n>` from `|n,y>`.
pub fn helstrom_success_probability(theta: f64) -> f64 {
    let overlap = theta.cos().powi(2);
    0.5 * (1.0 + (1.0 - overlap * overlap).max(0.0).sqrt())
}

/// Helstrom measurement vectors `(m0, m1)` for bit 0 ↔ `|n,y>` and
/// bit 1 ↔ `|y,n>`. `None` when the two hypotheses coincide.
pub fn helstrom_basis(theta: f64) -> Option<([Complex; 4], [Complex; 4])> {
    let (one, zero) = branch_probes(theta);
    let sum: Vec<Complex> = one.iter().zip(&zero).map(|(a, b)| a + b).collect();
    let diff: Vec<Complex> = one.iter().zip(&zero).map(|(a, b)| a - b).collect();
    if norm_sqr(&diff) < 1e-24 {
        return None;
    }
    let u = normalized(&sum)?;
    let v = normalized(&diff)?;
    let mut m0 = [ZERO; 4];
    let mut m1 = [ZERO; 4];
    for k in 0..4 {
        m1[k] = (u[k] + v[k]) * FRAC_1_SQRT_2;
        m0[k] = (u[k] - v[k]) * FRAC_1_SQRT_2;
    }
    Some((m0, m1))
}

/// Eve's guess of the key bit from her collapsed probes.
pub fn helstrom_guess(probe: &EveProbePair, rng: &mut RandomStream) -> Result<u8> {
    if probe.announcement != Announcement::D1 {
        return Err(Error::NotAnnouncedD1);
    }
    let Some((m0, m1)) = helstrom_basis(probe.theta) else {
        return Ok(rng.coin() as u8);
    };
    let p0 = inner(&m0, &probe.collapsed).norm_sqr();
    let p1 = inner(&m1, &probe.collapsed).norm_sqr();
    let u = rng.uniform();
    Ok(if u < p1 {
        1
    } else if u < p1 + p0 {
        0
    } else {
        // outside span{|y,n>, |n,y>}: no information
        rng.coin() as u8
    })
}
