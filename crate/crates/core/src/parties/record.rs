//! Per-round records and their line-delimited file format.
//!
//! One record per line, space separated, in this order:
//!
//! ```text
//! round_id setting_b setting_c alice b_click c_click sampled sifted_bit multiple
//! 17       F         A         1     0       0       0       1          0
//! ```
//!
//! `alice` is `1`, `2` or `N`; settings are `F`/`A`; flags are `0`/`1`;
//! `sifted_bit` is `0`, `1` or `-`. Lines starting with `#` are comments.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::photonics::{Action, Announcement};
use crate::{Error, Result};

pub const RECORD_FILE_HEADER: &str =
    "# round_id setting_b setting_c alice b_click c_click sampled sifted_bit multiple";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_id: u64,
    pub setting_b: Action,
    pub setting_c: Action,
    pub outcome_alice: Announcement,
    pub outcome_b: bool,
    pub outcome_c: bool,
    pub sampled: bool,
    /// Key bit of an unsampled `D1` round with anti-correlated settings.
    pub sifted_bit: Option<u8>,
    /// Alice saw clicks on both ports.
    pub multiple: bool,
}

impl RoundRecord {
    pub fn settings(&self) -> (Action, Action) {
        (self.setting_b, self.setting_c)
    }

    pub fn is_d1(&self) -> bool {
        self.outcome_alice == Announcement::D1
    }

    /// Alice reported a single-port click.
    pub fn alice_clicked(&self) -> bool {
        self.outcome_alice != Announcement::Null
    }
}

fn flag(b: bool) -> char {
    if b {
        '1'
    } else {
        '0'
    }
}

impl fmt::Display for RoundRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let alice = match self.outcome_alice {
            Announcement::D1 => '1',
            Announcement::D2 => '2',
            Announcement::Null => 'N',
        };
        let bit = match self.sifted_bit {
            Some(0) => '0',
            Some(_) => '1',
            None => '-',
        };
        write!(
            f,
            "{} {} {} {} {} {} {} {} {}",
            self.round_id,
            self.setting_b.as_char(),
            self.setting_c.as_char(),
            alice,
            flag(self.outcome_b),
            flag(self.outcome_c),
            flag(self.sampled),
            bit,
            flag(self.multiple)
        )
    }
}

fn parse_line(line: &str) -> std::result::Result<RoundRecord, String> {
    let fields: Vec<&str> = line.split_ascii_whitespace().collect();
    if fields.len() != 9 {
        return Err(format!("expected 9 fields, found {}", fields.len()));
    }
    let setting = |s: &str| match s {
        "F" => Ok(Action::F),
        "A" => Ok(Action::A),
        other => Err(format!("bad setting {other:?}")),
    };
    let flag = |s: &str| match s {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(format!("bad flag {other:?}")),
    };
    Ok(RoundRecord {
        round_id: fields[0].parse().map_err(|e| format!("bad round id: {e}"))?,
        setting_b: setting(fields[1])?,
        setting_c: setting(fields[2])?,
        outcome_alice: match fields[3] {
            "1" => Announcement::D1,
            "2" => Announcement::D2,
            "N" => Announcement::Null,
            other => return Err(format!("bad announcement {other:?}")),
        },
        outcome_b: flag(fields[4])?,
        outcome_c: flag(fields[5])?,
        sampled: flag(fields[6])?,
        sifted_bit: match fields[7] {
            "0" => Some(0),
            "1" => Some(1),
            "-" => None,
            other => return Err(format!("bad sifted bit {other:?}")),
        },
        multiple: flag(fields[8])?,
    })
}

pub fn write_records(records: &[RoundRecord]) -> String {
    let mut out = String::with_capacity(24 * (records.len() + 1));
    out.push_str(RECORD_FILE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_records(text: &str) -> Result<Vec<RoundRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| parse_line(l).map_err(|reason| Error::MalformedRecord { line: i + 1, reason }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn line_layout() {
        let r = RoundRecord {
            round_id: 17,
            setting_b: Action::F,
            setting_c: Action::A,
            outcome_alice: Announcement::D1,
            outcome_b: false,
            outcome_c: false,
            sampled: false,
            sifted_bit: Some(1),
            multiple: false,
        };
        assert_eq!(r.to_string(), "17 F A 1 0 0 0 1 0");
        let text = write_records(&[r]);
        assert_eq!(parse_records(&text).unwrap(), vec![r]);
    }

    #[test]
    fn malformed_lines_report_position() {
        let err = parse_records("# header\n1 F A 1 0 0 0 1 0\n2 F X 1 0 0 0 1 0\n").unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 3, .. }));
        assert!(parse_records("1 F A 1 0 0 0 1").is_err());
    }

    fn arb_record() -> impl Strategy<Value = RoundRecord> {
        let action = prop_oneof![Just(Action::F), Just(Action::A)];
        let ann = prop_oneof![Just(Announcement::D1), Just(Announcement::D2), Just(Announcement::Null)];
        (
            any::<u64>(),
            action.clone(),
            action,
            ann,
            any::<(bool, bool, bool, bool)>(),
            prop::option::of(0u8..2),
        )
            .prop_map(|(round_id, b, c, a, (ob, oc, s, m), bit)| RoundRecord {
                round_id,
                setting_b: b,
                setting_c: c,
                outcome_alice: a,
                outcome_b: ob,
                outcome_c: oc,
                sampled: s,
                sifted_bit: bit,
                multiple: m,
            })
    }

    proptest! {
        #[test]
        fn record_file_round_trip(rs in proptest::collection::vec(arb_record(), 0..50)) {
            prop_assert_eq!(parse_records(&write_records(&rs)).unwrap(), rs);
        }
    }
}
