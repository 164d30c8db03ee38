//! Alice, Bob and Charlie: per-round physics, the classical packet layer and
//! the session state machine.

pub mod packet;
pub mod protocol;
pub mod record;
pub mod round;

pub use packet::{HybridPacket, Message, PartyId};
pub use protocol::{
    key_to_hex, local_bit, local_sift, run_protocol, sift_key, ProtocolParams, ProtocolVerdict, Transcript,
};
pub use record::{parse_records, write_records, RoundRecord};
pub use round::{choose_setting, simulate_round, simulate_rounds, RoundObservation};
