//! Amplitude-exact simulator for a tripartite counterfactual certificate-authorization
//! protocol, with its adversary models and closed-form security analysis.
//!
//! A trusted authority (Alice) splits single photons into two arms held by a
//! server (Bob) and a client (Charlie). Each of them either reflects (`F`) or
//! absorbs (`A`) the arm. Alice's dark-port clicks on anti-correlated settings
//! become a shared key between Bob and Charlie, although the photon never
//! travelled through one of the two arms.
//!
//! Module map:
//!
//! * [`photonics`]: the photon/probe state vector, party actions, beam-splitter
//!   recombination, detection sampling and Eve's Helstrom measurement.
//! * [`channel`]: loss, dark counts, timing and the attack insertion point.
//! * [`adversary`]: semihonest-Alice strategies and Eve's bit extraction.
//! * [`parties`]: per-round simulation, the hybrid packet codec and the full
//!   protocol state machine producing a [`parties::Transcript`].
//! * [`metrics`]: figure-of-merit estimators and the abort rule.
//! * [`analysis`]: entropies, the probe density matrix, the Holevo bound,
//!   the key rate and the security threshold.

pub mod adversary;
pub mod analysis;
pub mod channel;
mod error;
pub mod metrics;
pub mod parties;
pub mod photonics;
pub mod rng;

pub use error::{Error, Result};
