use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("malformed packet: {reason}")]
    MalformedPacket { reason: String },

    #[error("insufficient sample for {figure}")]
    InsufficientSample { figure: &'static str },

    #[error("probe measurement requested on a round without a D1 announcement")]
    NotAnnouncedD1,

    #[error("eigensolver did not converge")]
    EigenNonConvergence,

    #[error("key rate is not bracketed on [0, pi/2]: K(lo) = {lo}, K(hi) = {hi}")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("malformed round record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub(crate) fn check_range(
    name: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    domain: &'static str,
) -> Result<f64> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(value)
    } else {
        Err(Error::Domain { name, value, domain })
    }
}
