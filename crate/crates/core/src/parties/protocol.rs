//! The full session: handshake, quantum rounds, announcements, sampling,
//! disclosure, checks and sifting.
//!
//! Every classical message travels as an encoded [`HybridPacket`] and each
//! party acts on the decoded copy, never on the simulator's ground truth.

use rand::seq::index;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::packet::{
    decode_packet, encode_packet, AnnouncedOutcome, Control, DisclosedEntry, HybridPacket, Message,
    PacketHeader, PartyId, VERSION,
};
use super::record::RoundRecord;
use super::round::simulate_rounds;
use crate::adversary::EveRecord;
use crate::analysis::key_rate_from_error_rate;
use crate::channel::{AttackConfig, ChannelConfig};
use crate::metrics::{Figure, MeritReport, TolerancePolicy, Verdict};
use crate::photonics::{Action, Announcement};
use crate::rng::{RandomStream, Role};
use crate::{Error, Result};

const ANNOUNCE_CHUNK: usize = 8192;
const INDEX_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n: u64,
    /// Fraction of rounds disclosed for the checks.
    pub f: f64,
    pub seed: u64,
    pub channel: ChannelConfig,
    pub attack: AttackConfig,
    pub policy: TolerancePolicy,
}

impl ProtocolParams {
    pub fn new(n: u64, f: f64, seed: u64) -> Self {
        Self {
            n,
            f,
            seed,
            channel: ChannelConfig::default(),
            attack: AttackConfig::honest(),
            policy: TolerancePolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > u32::MAX as u64 / 2 {
            return Err(Error::InvalidConfig(format!("n = {} out of range [1, 2^31)", self.n)));
        }
        if !(self.f > 0.0 && self.f < 1.0) {
            return Err(Error::Domain {
                name: "f",
                value: self.f,
                domain: "(0, 1)",
            });
        }
        self.channel.validate()?;
        self.attack.validate()?;
        self.policy.validate()
    }

    /// Number of rounds disclosed, `⌊n f⌋`.
    pub fn sample_size(&self) -> usize {
        (self.n as f64 * self.f).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProtocolVerdict {
    KeyProduced,
    Aborted { reason: Figure, failing: Vec<Figure> },
}

impl ProtocolVerdict {
    pub fn is_key_produced(&self) -> bool {
        matches!(self, ProtocolVerdict::KeyProduced)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub params: ProtocolParams,
    pub rounds: Vec<RoundRecord>,
    pub packets: Vec<HybridPacket>,
    /// Figures as computed by Bob from decoded announcements and disclosures.
    pub report: MeritReport,
    pub verdict: ProtocolVerdict,
    /// Round ids behind each key position; empty after an abort.
    pub key_rounds: Vec<u64>,
    pub key_bob: Vec<u8>,
    pub key_charlie: Vec<u8>,
    /// Eve's guesses on unsampled `D1` rounds she probed.
    pub eve: Vec<EveRecord>,
    /// Asymptotic secret bits after reconciliation and privacy amplification.
    pub distillable_bits: f64,
}

impl Transcript {
    pub fn key_mismatches(&self) -> usize {
        self.key_bob.iter().zip(&self.key_charlie).filter(|(a, b)| a != b).count()
    }
}

/// Bit a party derives from its own setting: Bob reads `F` as 1, Charlie
/// reads `A` as 1, so `(A,F) → 0` and `(F,A) → 1` on both sides.
pub fn local_bit(party: PartyId, setting: Action) -> u8 {
    match party {
        PartyId::Charlie => (setting == Action::A) as u8,
        _ => (setting == Action::F) as u8,
    }
}

/// A party's sifted key from its own settings, Alice's announcements and the
/// disclosed-round mask.
pub fn local_sift(
    party: PartyId,
    own_settings: &[Action],
    announced: &[AnnouncedOutcome],
    sampled: &[bool],
) -> Vec<u8> {
    own_settings
        .iter()
        .zip(announced)
        .zip(sampled)
        .filter(|((_, a), s)| a.announcement == Announcement::D1 && !**s)
        .map(|((&setting, _), _)| local_bit(party, setting))
        .collect()
}

/// Sifts both keys from complete round records.
pub fn sift_key(rounds: &[RoundRecord]) -> (Vec<u8>, Vec<u8>) {
    rounds
        .iter()
        .filter(|r| r.is_d1() && !r.sampled)
        .map(|r| (local_bit(PartyId::Bob, r.setting_b), local_bit(PartyId::Charlie, r.setting_c)))
        .unzip()
}

/// Packs bits MSB-first and renders them as lowercase hex.
pub fn key_to_hex(bits: &[u8]) -> String {
    bits.chunks(8)
        .map(|c| {
            let byte = c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b & 1) << (7 - i)));
            format!("{byte:02x}")
        })
        .collect()
}

/// Classical channel with per-direction packet numbering.
struct Wire {
    counters: HashMap<(PartyId, PartyId), u32>,
    log: Vec<HybridPacket>,
}

impl Wire {
    fn new() -> Self {
        Self {
            counters: HashMap::new(),
            log: Vec::new(),
        }
    }

    /// Encodes, logs and delivers a message; the receiver gets the decoded copy.
    fn send(&mut self, origin: PartyId, destination: PartyId, msg: &Message) -> Result<Message> {
        let counter = self.counters.entry((origin, destination)).or_insert(0);
        let packet = HybridPacket {
            header: PacketHeader {
                version: VERSION,
                packet_number: *counter,
                origin,
                destination,
                body_type: msg.body_type(),
            },
            body: msg.encode_body()?,
        };
        *counter = counter
            .checked_add(1)
            .ok_or_else(|| Error::InvalidConfig("packet counter overflow".into()))?;
        let received = decode_packet(&encode_packet(&packet)?)?;
        let decoded = Message::decode_body(received.header.body_type, &received.body)?;
        self.log.push(packet);
        Ok(decoded)
    }
}

fn protocol_error(reason: &str) -> Error {
    Error::MalformedPacket { reason: reason.to_string() }
}

/// What one of Bob/Charlie holds after the classical exchange.
struct PartyView {
    settings: Vec<Action>,
    clicks: Vec<bool>,
    announced: Vec<AnnouncedOutcome>,
}

impl PartyView {
    fn disclosure(&self, sample: &[u64]) -> Vec<DisclosedEntry> {
        sample
            .iter()
            .map(|&k| DisclosedEntry {
                round_id: k,
                setting: self.settings[k as usize],
                click: self.clicks[k as usize],
            })
            .collect()
    }
}

fn receive_announcements(
    wire: &mut Wire,
    to: PartyId,
    outcomes: &[AnnouncedOutcome],
) -> Result<Vec<AnnouncedOutcome>> {
    let mut got = Vec::with_capacity(outcomes.len());
    for (i, chunk) in outcomes.chunks(ANNOUNCE_CHUNK).enumerate() {
        let msg = Message::Announce {
            first_round: (i * ANNOUNCE_CHUNK) as u64,
            outcomes: chunk.to_vec(),
        };
        match wire.send(PartyId::Alice, to, &msg)? {
            Message::Announce { first_round, outcomes } if first_round == got.len() as u64 => {
                got.extend(outcomes)
            }
            _ => return Err(protocol_error("out-of-order announcement")),
        }
    }
    Ok(got)
}

fn exchange_disclosures(
    wire: &mut Wire,
    from: PartyId,
    to: PartyId,
    entries: &[DisclosedEntry],
) -> Result<Vec<DisclosedEntry>> {
    let mut got = Vec::with_capacity(entries.len());
    for chunk in entries.chunks(INDEX_CHUNK) {
        match wire.send(from, to, &Message::Disclose(chunk.to_vec()))? {
            Message::Disclose(e) => got.extend(e),
            _ => return Err(protocol_error("expected a disclosure")),
        }
    }
    Ok(got)
}

/// Sample records assembled by one party from its own disclosure, the peer's
/// decoded disclosure and Alice's decoded announcements.
fn sample_records(
    bob: &[DisclosedEntry],
    charlie: &[DisclosedEntry],
    announced: &[AnnouncedOutcome],
) -> Result<Vec<RoundRecord>> {
    if bob.len() != charlie.len() {
        return Err(protocol_error("disclosures differ in length"));
    }
    bob.iter()
        .zip(charlie)
        .map(|(b, c)| {
            if b.round_id != c.round_id {
                return Err(protocol_error("disclosures reference different rounds"));
            }
            let a = announced
                .get(b.round_id as usize)
                .ok_or_else(|| protocol_error("disclosure references an unannounced round"))?;
            Ok(RoundRecord {
                round_id: b.round_id,
                setting_b: b.setting,
                setting_c: c.setting,
                outcome_alice: a.announcement,
                outcome_b: b.click,
                outcome_c: c.click,
                sampled: true,
                sifted_bit: None,
                multiple: a.multiple,
            })
        })
        .collect()
}

/// Records built from the announcement stream alone; enough for `r` and `λ̂`.
fn announcement_records(announced: &[AnnouncedOutcome]) -> Vec<RoundRecord> {
    announced
        .iter()
        .enumerate()
        .map(|(k, a)| RoundRecord {
            round_id: k as u64,
            setting_b: Action::F,
            setting_c: Action::F,
            outcome_alice: a.announcement,
            outcome_b: false,
            outcome_c: false,
            sampled: false,
            sifted_bit: None,
            multiple: a.multiple,
        })
        .collect()
}

pub fn run_protocol(params: &ProtocolParams) -> Result<Transcript> {
    params.validate()?;
    let n = params.n as usize;
    let mut wire = Wire::new();

    // (1) Charlie asks Alice to certify Bob; Alice brings Bob in.
    wire.send(PartyId::Charlie, PartyId::Alice, &Message::Control(Control::Request))?;
    wire.send(PartyId::Alice, PartyId::Charlie, &Message::Control(Control::Acknowledge))?;
    wire.send(PartyId::Alice, PartyId::Bob, &Message::Control(Control::Notify))?;

    // (2) quantum rounds
    let obs = simulate_rounds(params.n, params.seed, &params.channel, &params.attack)?;
    for k in 0..params.n {
        for to in [PartyId::Bob, PartyId::Charlie] {
            match wire.send(PartyId::Alice, to, &Message::QuantumSlot { round_id: k })? {
                Message::QuantumSlot { round_id } if round_id == k => {}
                _ => return Err(protocol_error("quantum slot out of sequence")),
            }
        }
    }

    // (3) Alice announces every round
    let outcomes: Vec<AnnouncedOutcome> = obs
        .iter()
        .map(|o| AnnouncedOutcome {
            announcement: o.announcement,
            multiple: o.is_multiple(),
        })
        .collect();
    let bob = PartyView {
        settings: obs.iter().map(|o| o.setting_b).collect(),
        clicks: obs.iter().map(|o| o.b_click).collect(),
        announced: receive_announcements(&mut wire, PartyId::Bob, &outcomes)?,
    };
    let charlie = PartyView {
        settings: obs.iter().map(|o| o.setting_c).collect(),
        clicks: obs.iter().map(|o| o.c_click).collect(),
        announced: receive_announcements(&mut wire, PartyId::Charlie, &outcomes)?,
    };

    // (4) Bob proposes the disclosed rounds, Charlie confirms
    let mut sampler = RandomStream::lane(params.seed, Role::Sampling, 0);
    let mut proposal: Vec<u64> = index::sample(&mut sampler, n, params.sample_size())
        .into_iter()
        .map(|k| k as u64)
        .collect();
    proposal.sort_unstable();
    let mut sample = Vec::with_capacity(proposal.len());
    for chunk in proposal.chunks(INDEX_CHUNK) {
        match wire.send(PartyId::Bob, PartyId::Charlie, &Message::Control(Control::SampleProposal(chunk.to_vec())))? {
            Message::Control(Control::SampleProposal(ids)) => sample.extend(ids),
            _ => return Err(protocol_error("expected a sample proposal")),
        }
    }
    if sample.iter().any(|&k| k >= params.n) {
        return Err(protocol_error("sample index out of range"));
    }
    let total = u32::try_from(sample.len()).map_err(|_| protocol_error("sample too large"))?;
    match wire.send(PartyId::Charlie, PartyId::Bob, &Message::Control(Control::SampleConfirm(total)))? {
        Message::Control(Control::SampleConfirm(t)) if t as usize == proposal.len() => {}
        _ => return Err(protocol_error("sample confirmation mismatch")),
    }

    let bob_entries = exchange_disclosures(&mut wire, PartyId::Bob, PartyId::Charlie, &bob.disclosure(&sample))?;
    let charlie_entries = exchange_disclosures(&mut wire, PartyId::Charlie, PartyId::Bob, &charlie.disclosure(&sample))?;
    let bob_own = bob.disclosure(&sample);
    let charlie_own = charlie.disclosure(&sample);

    // both sides evaluate the checks on what they received
    let policy = &params.policy;
    let report_bob = MeritReport::build(
        &sample_records(&bob_own, &charlie_entries, &bob.announced)?,
        &announcement_records(&bob.announced),
        &params.channel,
        policy,
    );
    let report_charlie = MeritReport::build(
        &sample_records(&bob_entries, &charlie_own, &charlie.announced)?,
        &announcement_records(&charlie.announced),
        &params.channel,
        policy,
    );
    if report_bob.verdict() != report_charlie.verdict() {
        return Err(protocol_error("parties disagree on the verdict"));
    }

    let (abort, reason) = match report_bob.verdict() {
        Verdict::Pass => (false, 0),
        Verdict::Fail(f) => (true, f[0].code()),
    };
    for to in [PartyId::Alice, PartyId::Charlie] {
        wire.send(PartyId::Bob, to, &Message::Control(Control::Verdict { abort, reason }))?;
    }

    let mut sampled = vec![false; n];
    sample.iter().for_each(|&k| sampled[k as usize] = true);
    let rounds: Vec<RoundRecord> = obs.iter().map(|o| o.to_record(sampled[o.round_id as usize])).collect();
    let eve = obs
        .iter()
        .filter(|o| o.announcement == Announcement::D1 && !sampled[o.round_id as usize])
        .filter(|o| o.eve_guess.is_some())
        .map(|o| EveRecord {
            round_id: o.round_id,
            guess: o.eve_guess,
            true_bit: o.true_bit(),
        })
        .collect();

    // (5) sifting, each side from its own view
    let (verdict, key_rounds, key_bob, key_charlie, distillable_bits) = match report_bob.verdict() {
        Verdict::Fail(f) => (
            ProtocolVerdict::Aborted {
                reason: f[0],
                failing: f.clone(),
            },
            Vec::new(),
            Vec::new(),
            Vec::new(),
            0.0,
        ),
        Verdict::Pass => {
            let key_bob = local_sift(PartyId::Bob, &bob.settings, &bob.announced, &sampled);
            let key_charlie = local_sift(PartyId::Charlie, &charlie.settings, &charlie.announced, &sampled);
            let key_rounds: Vec<u64> = rounds.iter().filter(|r| r.is_d1() && !r.sampled).map(|r| r.round_id).collect();
            let rate = report_bob
                .error_rate
                .and_then(|e| key_rate_from_error_rate(e.value).ok())
                .unwrap_or(0.0)
                .max(0.0);
            let bits = rate * key_bob.len() as f64;
            (ProtocolVerdict::KeyProduced, key_rounds, key_bob, key_charlie, bits)
        }
    };

    Ok(Transcript {
        params: params.clone(),
        rounds,
        packets: wire.log,
        report: report_bob,
        verdict,
        key_rounds,
        key_bob,
        key_charlie,
        eve,
        distillable_bits,
    })
}
