//! Quantum arms B and C: loss, dark counts, emission timing and the point
//! where an eavesdropper couples in.

use serde::{Deserialize, Serialize};

use crate::error::check_range;
use crate::photonics::{self, Arm, JointState};
use crate::rng::RandomStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub loss_rate: f64,
    pub dark_rate: f64,
    /// Alice randomizes her emission schedule.
    pub timing_jitter: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            loss_rate: 0.0,
            dark_rate: 0.0,
            timing_jitter: true,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        check_range("loss_rate", self.loss_rate, 0.0, 1.0, "[0, 1)")?;
        check_range("dark_rate", self.dark_rate, 0.0, 1.0, "[0, 1)")?;
        if self.loss_rate >= 1.0 {
            return Err(Error::Domain {
                name: "loss_rate",
                value: self.loss_rate,
                domain: "[0, 1)",
            });
        }
        if self.dark_rate >= 1.0 {
            return Err(Error::Domain {
                name: "dark_rate",
                value: self.dark_rate,
                domain: "[0, 1)",
            });
        }
        Ok(())
    }
}

/// How a semihonest Alice fakes her announcement on a single-path round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FakeStrategy {
    /// D1 with probability 1/4, D2 otherwise.
    RandomQuarter,
    AlwaysD2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AttackKind {
    None,
    EveProbe {
        theta: f64,
    },
    AliceSinglePath {
        p: f64,
        target: Arm,
        strategy: FakeStrategy,
    },
    AliceDoublePath {
        p: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Eve knows Alice's emission schedule (worst case).
    pub knows_schedule: bool,
    /// Fraction of jittered emissions an unsynchronized Eve still hits.
    pub schedule_guess_rate: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self::honest()
    }
}

impl AttackConfig {
    pub fn honest() -> Self {
        Self {
            kind: AttackKind::None,
            knows_schedule: true,
            schedule_guess_rate: 0.0,
        }
    }

    /// Worst-case Eve with full knowledge of the schedule.
    pub fn eve(theta: f64) -> Self {
        Self {
            kind: AttackKind::EveProbe { theta },
            ..Self::honest()
        }
    }

    pub fn alice_single_path(p: f64, target: Arm, strategy: FakeStrategy) -> Self {
        Self {
            kind: AttackKind::AliceSinglePath { p, target, strategy },
            ..Self::honest()
        }
    }

    pub fn alice_double_path(p: f64) -> Self {
        Self {
            kind: AttackKind::AliceDoublePath { p },
            ..Self::honest()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            AttackKind::None => {}
            AttackKind::EveProbe { theta } => {
                photonics::check_theta(theta)?;
            }
            AttackKind::AliceSinglePath { p, .. } | AttackKind::AliceDoublePath { p } => {
                check_range("p", p, 0.0, 1.0, "[0, 1]")?;
            }
        }
        check_range("schedule_guess_rate", self.schedule_guess_rate, 0.0, 1.0, "[0, 1]")?;
        Ok(())
    }

    pub fn eve_theta(&self) -> Option<f64> {
        match self.kind {
            AttackKind::EveProbe { theta } => Some(theta),
            _ => None,
        }
    }

    /// Probability that Alice diverts a given round into her own attack.
    pub fn alice_attack_rate(&self) -> f64 {
        match self.kind {
            AttackKind::AliceSinglePath { p, .. } | AttackKind::AliceDoublePath { p } => p,
            _ => 0.0,
        }
    }
}

/// Onward leg from Alice's beam splitter to the parties' stations.
///
/// Eve couples her probes in when she can synchronize with the photon: always
/// if she knows the schedule or the schedule is regular, otherwise only on the
/// fraction `schedule_guess_rate` of rounds. Alice's own attacks do not pass
/// through here. Returns the state and whether the probe was attached.
pub fn transmit_onward(
    state: &JointState,
    cfg: &ChannelConfig,
    atk: &AttackConfig,
    rng: &mut RandomStream,
) -> Result<(JointState, bool)> {
    let AttackKind::EveProbe { theta } = atk.kind else {
        return Ok((state.clone(), false));
    };
    let synchronized = atk.knows_schedule || !cfg.timing_jitter || rng.bernoulli(atk.schedule_guess_rate);
    if synchronized {
        Ok((photonics::attach_eve_probe(state, theta)?, true))
    } else {
        Ok((state.clone(), false))
    }
}

/// Return leg from the mirrors back to Alice. Eve gains nothing by attacking
/// here, so it is the identity; kept as an explicit hook.
pub fn return_leg(state: JointState) -> JointState {
    state
}
