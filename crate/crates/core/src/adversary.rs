//! Adversary strategies.
//!
//! A semihonest Alice can replace the honest superposition with photons sent
//! down one arm (learning one setting, then faking her announcement) or down
//! both arms (learning both settings, caught by coincidences). Eve couples a
//! probe pair to the onward leg (see [`crate::channel::transmit_onward`]) and
//! measures it after Alice announces `D1`.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::analysis::binary_entropy_unchecked;
use crate::channel::FakeStrategy;
use crate::photonics::{self, Action, Announcement, Arm, EveProbePair};
use crate::rng::RandomStream;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeResult {
    Returned,
    NotReturned,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliceAttackState {
    pub attacked_round: bool,
    pub target: Option<Arm>,
    pub probe_result: ProbeResult,
    pub fake_announcement: Announcement,
}

impl AliceAttackState {
    pub fn idle() -> Self {
        Self {
            attacked_round: false,
            target: None,
            probe_result: ProbeResult::NotApplicable,
            fake_announcement: Announcement::Null,
        }
    }
}

/// Alice sends a bare photon down `target` only. If it does not come back the
/// target absorbed it and the only consistent report is NULL; otherwise she
/// fakes a port according to `strategy`.
pub fn alice_single_path(
    target: Arm,
    strategy: FakeStrategy,
    target_setting: Action,
    rng: &mut RandomStream,
) -> (Announcement, AliceAttackState) {
    let (probe_result, announcement) = match target_setting {
        Action::A => (ProbeResult::NotReturned, Announcement::Null),
        Action::F => {
            let fake = match strategy {
                FakeStrategy::RandomQuarter => {
                    if rng.bernoulli(0.25) {
                        Announcement::D1
                    } else {
                        Announcement::D2
                    }
                }
                FakeStrategy::AlwaysD2 => Announcement::D2,
            };
            (ProbeResult::Returned, fake)
        }
    };
    (
        announcement,
        AliceAttackState {
            attacked_round: true,
            target: Some(target),
            probe_result,
            fake_announcement: announcement,
        },
    )
}

/// Settings Alice reads off the return pattern of a double-path round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferredSettings {
    pub bob: Action,
    pub charlie: Action,
}

/// Alice sends one photon down each arm. A returned photon means `F`, a
/// missing one `A`. She then announces what an honest interferometer would
/// have shown for those settings, sampled from her own duplicate apparatus.
pub fn alice_double_path(
    bob: Action,
    charlie: Action,
    rng: &mut RandomStream,
) -> (Announcement, InferredSettings) {
    let inferred = InferredSettings { bob, charlie };
    let announcement = match (bob, charlie) {
        (Action::F, Action::F) => Announcement::D2,
        (Action::A, Action::A) => Announcement::Null,
        _ => {
            let u = rng.uniform();
            if u < 0.25 {
                Announcement::D1
            } else if u < 0.5 {
                Announcement::D2
            } else {
                Announcement::Null
            }
        }
    };
    (announcement, inferred)
}

/// Eve's log for one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EveRecord {
    pub round_id: u64,
    pub guess: Option<u8>,
    pub true_bit: Option<u8>,
}

pub fn eve_extract_bit(probe: &EveProbePair, rng: &mut RandomStream) -> Result<u8> {
    photonics::helstrom_guess(probe, rng)
}

/// Mutual information Eve's Helstrom measurement achieves per sifted bit.
pub fn helstrom_mutual_information(theta: f64) -> f64 {
    1.0 - binary_entropy_unchecked(1.0 - photonics::helstrom_success_probability(theta))
}

/// Plug-in estimate of `I(guess; bit)` in bits, with its sampling spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MutualInformationEstimate {
    pub bits: f64,
    pub samples: usize,
    /// Leading-order upward bias of the plug-in estimator, `1/(2N ln 2)`.
    pub bias: f64,
    /// Standard deviation: delta method, floored by the spread of the
    /// `χ²₁/(2N ln 2)` null distribution.
    pub sigma: f64,
}

impl MutualInformationEstimate {
    /// Upper limit `bias + z σ` allowed above a theoretical bound.
    pub fn tolerance(&self, z: f64) -> f64 {
        self.bias + z * self.sigma
    }
}

/// Estimates Eve's information from records carrying both a guess and the
/// true key bit. Returns `None` when there are no such records.
pub fn empirical_mutual_information(records: &[EveRecord]) -> Option<MutualInformationEstimate> {
    let mut counts = [[0usize; 2]; 2];
    for r in records {
        if let (Some(g), Some(t)) = (r.guess, r.true_bit) {
            counts[t as usize][g as usize] += 1;
        }
    }
    let n: usize = counts.iter().flatten().sum();
    if n == 0 {
        return None;
    }
    let nf = n as f64;
    let p = |t: usize, g: usize| counts[t][g] as f64 / nf;
    let pt = [p(0, 0) + p(0, 1), p(1, 0) + p(1, 1)];
    let pg = [p(0, 0) + p(1, 0), p(0, 1) + p(1, 1)];
    let mut info = 0.0;
    let mut second = 0.0;
    for t in 0..2 {
        for g in 0..2 {
            let pj = p(t, g);
            if pj > 0.0 {
                let l = (pj / (pt[t] * pg[g])).log2();
                info += pj * l;
                second += pj * l * l;
            }
        }
    }
    let info = info.max(0.0);
    let delta_sd = ((second - info * info).max(0.0) / nf).sqrt();
    let null_sd = 2f64.sqrt() / (2.0 * nf * LN_2);
    Some(MutualInformationEstimate {
        bits: info,
        samples: n,
        bias: 1.0 / (2.0 * nf * LN_2),
        sigma: delta_sd.max(null_sd),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::holevo_chi;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn blocked_single_path_announces_null() {
        let mut rng = RandomStream::from_seed(9);
        for strategy in [FakeStrategy::RandomQuarter, FakeStrategy::AlwaysD2] {
            let (ann, st) = alice_single_path(Arm::B, strategy, Action::A, &mut rng);
            assert_eq!(ann, Announcement::Null);
            assert_eq!(st.probe_result, ProbeResult::NotReturned);
            assert!(st.attacked_round);
        }
    }

    #[test]
    fn random_quarter_fakes_one_in_four() {
        let mut rng = RandomStream::from_seed(10);
        let n = 40_000;
        let d1 = (0..n)
            .filter(|_| {
                alice_single_path(Arm::C, FakeStrategy::RandomQuarter, Action::F, &mut rng).0 == Announcement::D1
            })
            .count();
        let p = d1 as f64 / n as f64;
        assert!((p - 0.25).abs() < 3.0 * (0.1875 / n as f64).sqrt());
    }

    #[test]
    fn always_d2_never_fakes_d1() {
        let mut rng = RandomStream::from_seed(11);
        for _ in 0..1000 {
            let (ann, st) = alice_single_path(Arm::B, FakeStrategy::AlwaysD2, Action::F, &mut rng);
            assert_eq!(ann, Announcement::D2);
            assert_eq!(st.probe_result, ProbeResult::Returned);
        }
    }

    #[test]
    fn double_path_reads_both_settings() {
        let mut rng = RandomStream::from_seed(12);
        for bob in [Action::F, Action::A] {
            for charlie in [Action::F, Action::A] {
                let (ann, inferred) = alice_double_path(bob, charlie, &mut rng);
                assert_eq!(inferred, InferredSettings { bob, charlie });
                if (bob, charlie) == (Action::F, Action::F) {
                    assert_eq!(ann, Announcement::D2);
                }
                if (bob, charlie) == (Action::A, Action::A) {
                    assert_eq!(ann, Announcement::Null);
                }
            }
        }
    }

    #[test]
    fn helstrom_information_limits() {
        assert!(helstrom_mutual_information(0.0).abs() < 1e-15);
        assert!((helstrom_mutual_information(FRAC_PI_2) - 1.0).abs() < 1e-12);
        for k in 0..=50 {
            let theta = FRAC_PI_2 * k as f64 / 50.0;
            assert!(helstrom_mutual_information(theta) <= holevo_chi(theta).unwrap() + 1e-12);
        }
        assert!(helstrom_mutual_information(FRAC_PI_4) < holevo_chi(FRAC_PI_4).unwrap());
    }

    #[test]
    fn mutual_information_of_perfect_and_independent_tables() {
        let perfect: Vec<EveRecord> = (0..1000)
            .map(|k| EveRecord {
                round_id: k,
                guess: Some((k % 2) as u8),
                true_bit: Some((k % 2) as u8),
            })
            .collect();
        let est = empirical_mutual_information(&perfect).unwrap();
        assert!((est.bits - 1.0).abs() < 1e-12);

        let independent: Vec<EveRecord> = (0..1000)
            .map(|k| EveRecord {
                round_id: k,
                guess: Some((k % 2) as u8),
                true_bit: Some(((k / 2) % 2) as u8),
            })
            .collect();
        let est = empirical_mutual_information(&independent).unwrap();
        assert!(est.bits.abs() < 1e-12);
        assert!(est.sigma > 0.0);

        assert!(empirical_mutual_information(&[]).is_none());
    }
}
