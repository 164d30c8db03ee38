//! Hybrid packet codec.
//!
//! Wire layout (big-endian):
//!
//! ```text
//! header  magic C1 CA | version u8 | packet number u32 | origin u8 | destination u8
//!         | body length u16 | body type u8
//! body    body length octets
//! footer  terminator 0b11 (low bits of one octet) | XOR checksum of body u8
//! ```
//!
//! A `QUANTUM_SLOT` body is only the round identifier of the simulated photon;
//! classical bodies carry a serialized [`Message`].

use serde::{Deserialize, Serialize};

use crate::photonics::{Action, Announcement};
use crate::{Error, Result};

pub const MAGIC: [u8; 2] = [0xC1, 0xCA];
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 12;
pub const FOOTER_LEN: usize = 2;
pub const TERMINATOR: u8 = 0b11;
pub const MAX_BODY: usize = u16::MAX as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PartyId {
    Alice,
    Bob,
    Charlie,
    Eve,
}

impl PartyId {
    pub fn octet(self) -> u8 {
        match self {
            PartyId::Alice => 1,
            PartyId::Bob => 2,
            PartyId::Charlie => 3,
            PartyId::Eve => 4,
        }
    }

    /// Parses an endpoint octet. Eve is never a legitimate endpoint.
    pub fn endpoint_from_octet(b: u8) -> Result<Self> {
        match b {
            1 => Ok(PartyId::Alice),
            2 => Ok(PartyId::Bob),
            3 => Ok(PartyId::Charlie),
            4 => Err(malformed("Eve cannot be a packet endpoint")),
            other => Err(malformed(format!("unknown party octet {other:#04x}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BodyType {
    QuantumSlot,
    Control,
    Announce,
    Disclose,
}

impl BodyType {
    pub fn octet(self) -> u8 {
        match self {
            BodyType::QuantumSlot => 1,
            BodyType::Control => 2,
            BodyType::Announce => 3,
            BodyType::Disclose => 4,
        }
    }

    pub fn from_octet(b: u8) -> Result<Self> {
        match b {
            1 => Ok(BodyType::QuantumSlot),
            2 => Ok(BodyType::Control),
            3 => Ok(BodyType::Announce),
            4 => Ok(BodyType::Disclose),
            other => Err(malformed(format!("unknown body type {other:#04x}"))),
        }
    }
}

fn malformed(reason: impl Into<String>) -> Error {
    Error::MalformedPacket { reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketHeader {
    pub version: u8,
    pub packet_number: u32,
    pub origin: PartyId,
    pub destination: PartyId,
    pub body_type: BodyType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HybridPacket {
    pub header: PacketHeader,
    pub body: Vec<u8>,
}

pub fn checksum(body: &[u8]) -> u8 {
    body.iter().fold(0, |acc, b| acc ^ b)
}

impl HybridPacket {
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.body.len() + FOOTER_LEN
    }
}

pub fn encode_packet(p: &HybridPacket) -> Result<Vec<u8>> {
    let h = &p.header;
    if h.origin == PartyId::Eve || h.destination == PartyId::Eve {
        return Err(malformed("Eve cannot be a packet endpoint"));
    }
    if p.body.len() > MAX_BODY {
        return Err(malformed(format!("body of {} octets exceeds {MAX_BODY}", p.body.len())));
    }
    let mut out = Vec::with_capacity(p.encoded_len());
    out.extend_from_slice(&MAGIC);
    out.push(h.version);
    out.extend_from_slice(&h.packet_number.to_be_bytes());
    out.push(h.origin.octet());
    out.push(h.destination.octet());
    out.extend_from_slice(&(p.body.len() as u16).to_be_bytes());
    out.push(h.body_type.octet());
    out.extend_from_slice(&p.body);
    out.push(TERMINATOR);
    out.push(checksum(&p.body));
    Ok(out)
}

/// Decodes the packet at the front of `octets`, returning it and the number
/// of octets consumed.
pub fn decode_packet_prefix(octets: &[u8]) -> Result<(HybridPacket, usize)> {
    if octets.len() < HEADER_LEN {
        return Err(malformed("truncated header"));
    }
    if octets[..2] != MAGIC {
        return Err(malformed("bad magic"));
    }
    let version = octets[2];
    if version != VERSION {
        return Err(malformed(format!("unsupported version {version}")));
    }
    let packet_number = u32::from_be_bytes([octets[3], octets[4], octets[5], octets[6]]);
    let origin = PartyId::endpoint_from_octet(octets[7])?;
    let destination = PartyId::endpoint_from_octet(octets[8])?;
    let body_len = u16::from_be_bytes([octets[9], octets[10]]) as usize;
    let body_type = BodyType::from_octet(octets[11])?;
    let total = HEADER_LEN + body_len + FOOTER_LEN;
    if octets.len() < total {
        return Err(malformed("truncated: body length exceeds remaining octets"));
    }
    let body = octets[HEADER_LEN..HEADER_LEN + body_len].to_vec();
    let footer = &octets[HEADER_LEN + body_len..total];
    if footer[0] != TERMINATOR {
        return Err(malformed("bad terminator"));
    }
    if footer[1] != checksum(&body) {
        return Err(malformed("checksum mismatch"));
    }
    Ok((
        HybridPacket {
            header: PacketHeader {
                version,
                packet_number,
                origin,
                destination,
                body_type,
            },
            body,
        },
        total,
    ))
}

/// Decodes exactly one packet; trailing octets are rejected.
pub fn decode_packet(octets: &[u8]) -> Result<HybridPacket> {
    let (p, used) = decode_packet_prefix(octets)?;
    if used != octets.len() {
        return Err(malformed(format!("{} trailing octets", octets.len() - used)));
    }
    Ok(p)
}

/// Decodes a concatenation of packets.
pub fn decode_stream(mut octets: &[u8]) -> Result<Vec<HybridPacket>> {
    let mut out = Vec::new();
    while !octets.is_empty() {
        let (p, used) = decode_packet_prefix(octets)?;
        out.push(p);
        octets = &octets[used..];
    }
    Ok(out)
}

/// Classical control messages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Control {
    /// Charlie asks Alice to certify Bob.
    Request,
    Acknowledge,
    /// Alice tells Bob about Charlie's contact.
    Notify,
    /// Bob's proposed disclosure indices (one chunk).
    SampleProposal(Vec<u64>),
    /// Charlie accepts the proposal; carries the total number of indices.
    SampleConfirm(u32),
    /// Outcome of the checks. `reason` is the failing figure's code on abort.
    Verdict { abort: bool, reason: u8 },
}

/// One party's disclosed setting and click for a sampled round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisclosedEntry {
    pub round_id: u64,
    pub setting: Action,
    pub click: bool,
}

/// Alice's report for a round: the announcement plus the multiple-count flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnouncedOutcome {
    pub announcement: Announcement,
    pub multiple: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Message {
    QuantumSlot { round_id: u64 },
    Control(Control),
    Announce { first_round: u64, outcomes: Vec<AnnouncedOutcome> },
    Disclose(Vec<DisclosedEntry>),
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(malformed("truncated body"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().unwrap()))
    }

    fn finish(self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(malformed("trailing body octets"))
        }
    }
}

fn setting_octet(a: Action) -> u8 {
    a.as_char() as u8
}

fn setting_from_octet(b: u8) -> Result<Action> {
    match b {
        b'F' => Ok(Action::F),
        b'A' => Ok(Action::A),
        other => Err(malformed(format!("bad setting octet {other:#04x}"))),
    }
}

fn outcome_octet(o: AnnouncedOutcome) -> u8 {
    let base = match o.announcement {
        Announcement::Null => 0,
        Announcement::D1 => 1,
        Announcement::D2 => 2,
    };
    base | if o.multiple { 0x80 } else { 0 }
}

fn outcome_from_octet(b: u8) -> Result<AnnouncedOutcome> {
    let announcement = match b & 0x7f {
        0 => Announcement::Null,
        1 => Announcement::D1,
        2 => Announcement::D2,
        other => return Err(malformed(format!("bad announcement octet {other:#04x}"))),
    };
    Ok(AnnouncedOutcome {
        announcement,
        multiple: b & 0x80 != 0,
    })
}

impl Message {
    pub fn body_type(&self) -> BodyType {
        match self {
            Message::QuantumSlot { .. } => BodyType::QuantumSlot,
            Message::Control(_) => BodyType::Control,
            Message::Announce { .. } => BodyType::Announce,
            Message::Disclose(_) => BodyType::Disclose,
        }
    }

    pub fn encode_body(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        match self {
            Message::QuantumSlot { round_id } => out.extend_from_slice(&round_id.to_be_bytes()),
            Message::Control(c) => match c {
                Control::Request => out.push(0x01),
                Control::Acknowledge => out.push(0x02),
                Control::Notify => out.push(0x03),
                Control::SampleProposal(ids) => {
                    out.push(0x10);
                    out.extend_from_slice(&count_u16(ids.len())?.to_be_bytes());
                    ids.iter().for_each(|id| out.extend_from_slice(&id.to_be_bytes()));
                }
                Control::SampleConfirm(total) => {
                    out.push(0x11);
                    out.extend_from_slice(&total.to_be_bytes());
                }
                Control::Verdict { abort, reason } => {
                    out.extend_from_slice(&[0x20, *abort as u8, *reason]);
                }
            },
            Message::Announce { first_round, outcomes } => {
                out.extend_from_slice(&first_round.to_be_bytes());
                out.extend_from_slice(&count_u16(outcomes.len())?.to_be_bytes());
                out.extend(outcomes.iter().map(|&o| outcome_octet(o)));
            }
            Message::Disclose(entries) => {
                out.extend_from_slice(&count_u16(entries.len())?.to_be_bytes());
                for e in entries {
                    out.extend_from_slice(&e.round_id.to_be_bytes());
                    out.push(setting_octet(e.setting));
                    out.push(e.click as u8);
                }
            }
        }
        if out.len() > MAX_BODY {
            return Err(malformed("message does not fit in one packet"));
        }
        Ok(out)
    }

    pub fn decode_body(body_type: BodyType, body: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: body };
        let msg = match body_type {
            BodyType::QuantumSlot => Message::QuantumSlot { round_id: r.u64()? },
            BodyType::Control => Message::Control(match r.u8()? {
                0x01 => Control::Request,
                0x02 => Control::Acknowledge,
                0x03 => Control::Notify,
                0x10 => {
                    let n = r.u16()? as usize;
                    Control::SampleProposal((0..n).map(|_| r.u64()).collect::<Result<_>>()?)
                }
                0x11 => Control::SampleConfirm(r.u32()?),
                0x20 => {
                    let abort = match r.u8()? {
                        0 => false,
                        1 => true,
                        other => return Err(malformed(format!("bad verdict flag {other}"))),
                    };
                    Control::Verdict {
                        abort,
                        reason: r.u8()?,
                    }
                }
                other => return Err(malformed(format!("unknown control tag {other:#04x}"))),
            }),
            BodyType::Announce => {
                let first_round = r.u64()?;
                let n = r.u16()? as usize;
                let outcomes = r.take(n)?.iter().map(|&b| outcome_from_octet(b)).collect::<Result<_>>()?;
                Message::Announce { first_round, outcomes }
            }
            BodyType::Disclose => {
                let n = r.u16()? as usize;
                let mut entries = Vec::with_capacity(n);
                for _ in 0..n {
                    let round_id = r.u64()?;
                    let setting = setting_from_octet(r.u8()?)?;
                    let click = match r.u8()? {
                        0 => false,
                        1 => true,
                        other => return Err(malformed(format!("bad click octet {other}"))),
                    };
                    entries.push(DisclosedEntry {
                        round_id,
                        setting,
                        click,
                    });
                }
                Message::Disclose(entries)
            }
        };
        r.finish()?;
        Ok(msg)
    }
}

fn count_u16(n: usize) -> Result<u16> {
    u16::try_from(n).map_err(|_| malformed(format!("{n} items exceed one packet")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn announce_packet() -> HybridPacket {
        let msg = Message::Announce {
            first_round: 4096,
            outcomes: vec![
                AnnouncedOutcome {
                    announcement: Announcement::D1,
                    multiple: false,
                },
                AnnouncedOutcome {
                    announcement: Announcement::Null,
                    multiple: true,
                },
            ],
        };
        HybridPacket {
            header: PacketHeader {
                version: VERSION,
                packet_number: 7,
                origin: PartyId::Alice,
                destination: PartyId::Charlie,
                body_type: msg.body_type(),
            },
            body: msg.encode_body().unwrap(),
        }
    }

    #[test]
    fn announce_round_trip() {
        let p = announce_packet();
        let bytes = encode_packet(&p).unwrap();
        assert_eq!(&bytes[..2], &MAGIC);
        assert_eq!(bytes.len(), p.encoded_len());
        let back = decode_packet(&bytes).unwrap();
        assert_eq!(back, p);
        let msg = Message::decode_body(back.header.body_type, &back.body).unwrap();
        assert!(matches!(msg, Message::Announce { first_round: 4096, ref outcomes } if outcomes.len() == 2));
    }

    #[test]
    fn exact_header_layout() {
        let p = HybridPacket {
            header: PacketHeader {
                version: VERSION,
                packet_number: 0x0102_0304,
                origin: PartyId::Bob,
                destination: PartyId::Alice,
                body_type: BodyType::QuantumSlot,
            },
            body: vec![0xF0, 0x0F],
        };
        let bytes = encode_packet(&p).unwrap();
        assert_eq!(
            bytes,
            vec![0xC1, 0xCA, 1, 1, 2, 3, 4, 2, 1, 0, 2, 1, 0xF0, 0x0F, 0b11, 0xFF]
        );
    }

    #[test]
    fn flipped_checksum_is_rejected() {
        let mut bytes = encode_packet(&announce_packet()).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        assert!(matches!(decode_packet(&bytes), Err(Error::MalformedPacket { reason }) if reason.contains("checksum")));
    }

    #[test]
    fn oversized_body_length_is_truncation() {
        let mut bytes = encode_packet(&announce_packet()).unwrap();
        bytes[9] = 0xFF;
        assert!(matches!(decode_packet(&bytes), Err(Error::MalformedPacket { reason }) if reason.contains("truncated")));
        assert!(decode_packet(&bytes[..5]).is_err());
    }

    #[test]
    fn bad_magic_terminator_and_endpoints() {
        let good = encode_packet(&announce_packet()).unwrap();

        let mut b = good.clone();
        b[0] = 0x00;
        assert!(decode_packet(&b).is_err());

        let mut b = good.clone();
        let t = b.len() - 2;
        b[t] = 0x01;
        assert!(decode_packet(&b).is_err());

        let mut b = good.clone();
        b[7] = PartyId::Eve.octet();
        assert!(decode_packet(&b).is_err());

        let mut b = good.clone();
        b.push(0);
        assert!(decode_packet(&b).is_err());

        let mut p = announce_packet();
        p.header.destination = PartyId::Eve;
        assert!(encode_packet(&p).is_err());
    }

    #[test]
    fn stream_decoding() {
        let a = encode_packet(&announce_packet()).unwrap();
        let mut both = a.clone();
        both.extend_from_slice(&a);
        assert_eq!(decode_stream(&both).unwrap().len(), 2);
    }

    #[test]
    fn control_and_disclose_bodies() {
        for msg in [
            Message::Control(Control::Request),
            Message::Control(Control::SampleProposal(vec![1, 5, 1 << 40])),
            Message::Control(Control::SampleConfirm(3)),
            Message::Control(Control::Verdict { abort: true, reason: 4 }),
            Message::Disclose(vec![DisclosedEntry {
                round_id: 9,
                setting: Action::A,
                click: true,
            }]),
            Message::QuantumSlot { round_id: 123 },
        ] {
            let body = msg.encode_body().unwrap();
            assert_eq!(Message::decode_body(msg.body_type(), &body).unwrap(), msg);
        }
        assert!(Message::decode_body(BodyType::Control, &[0x7e]).is_err());
        assert!(Message::decode_body(BodyType::QuantumSlot, &[0; 9]).is_err());
    }

    fn arb_packet() -> impl Strategy<Value = HybridPacket> {
        let party = prop_oneof![Just(PartyId::Alice), Just(PartyId::Bob), Just(PartyId::Charlie)];
        let kind = prop_oneof![
            Just(BodyType::QuantumSlot),
            Just(BodyType::Control),
            Just(BodyType::Announce),
            Just(BodyType::Disclose)
        ];
        (any::<u32>(), party.clone(), party, kind, proptest::collection::vec(any::<u8>(), 0..512)).prop_map(
            |(packet_number, origin, destination, body_type, body)| HybridPacket {
                header: PacketHeader {
                    version: VERSION,
                    packet_number,
                    origin,
                    destination,
                    body_type,
                },
                body,
            },
        )
    }

    proptest! {
        #[test]
        fn codec_round_trip(p in arb_packet()) {
            let bytes = encode_packet(&p).unwrap();
            prop_assert_eq!(decode_packet(&bytes).unwrap(), p);
        }

        #[test]
        fn single_bit_corruption_of_body_is_caught(p in arb_packet(), bit in 0usize..8, pos in any::<prop::sample::Index>()) {
            prop_assume!(!p.body.is_empty());
            let mut bytes = encode_packet(&p).unwrap();
            let i = HEADER_LEN + pos.index(p.body.len());
            bytes[i] ^= 1 << bit;
            prop_assert!(decode_packet(&bytes).is_err());
        }
    }
}
