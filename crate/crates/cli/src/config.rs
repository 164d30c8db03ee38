//! Run configuration: defaults, the `key = value` file format and the
//! effective-config echo.

use std::fmt::Write as _;
use std::path::PathBuf;

use cqca_core::channel::{AttackConfig, AttackKind, ChannelConfig, FakeStrategy};
use cqca_core::metrics::TolerancePolicy;
use cqca_core::photonics::Arm;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown key `{0}` (valid keys: {keys})", keys = RunConfig::KEYS.join(", "))]
    UnknownKey(String),
    #[error("bad value for `{key}`: {value:?} ({expected})")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("line {0}: expected `key = value`")]
    Syntax(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Protocol,
    Analyze,
    Threshold,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Protocol => "protocol",
            Command::Analyze => "analyze",
            Command::Threshold => "threshold",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackChoice {
    None,
    Eve,
    AliceSingle,
    AliceDouble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    JsonLines,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub n: u64,
    pub f: f64,
    pub seed: u64,
    pub attack: AttackChoice,
    pub theta: f64,
    pub p: f64,
    pub strategy: FakeStrategy,
    pub target: Arm,
    pub knows_schedule: bool,
    pub schedule_guess_rate: f64,
    pub loss_rate: f64,
    pub dark_rate: f64,
    pub timing_jitter: bool,
    pub floor: f64,
    pub z: f64,
    pub error_ceiling: f64,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub grid_points: usize,
    pub tol: f64,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        let policy = TolerancePolicy::default();
        let channel = ChannelConfig::default();
        Self {
            command,
            n: 100_000,
            f: 0.25,
            seed: 1,
            attack: AttackChoice::None,
            theta: 0.0,
            p: 0.0,
            strategy: FakeStrategy::RandomQuarter,
            target: Arm::B,
            knows_schedule: true,
            schedule_guess_rate: 0.0,
            loss_rate: channel.loss_rate,
            dark_rate: channel.dark_rate,
            timing_jitter: channel.timing_jitter,
            floor: policy.floor,
            z: policy.z,
            error_ceiling: policy.error_ceiling,
            output: None,
            format: Format::Text,
            grid_points: 200,
            tol: 1e-10,
        }
    }

    pub const KEYS: [&'static str; 21] = [
        "command",
        "n",
        "f",
        "seed",
        "attack",
        "theta",
        "p",
        "strategy",
        "target",
        "knows_schedule",
        "schedule_guess_rate",
        "loss_rate",
        "dark_rate",
        "timing_jitter",
        "floor",
        "z",
        "error_ceiling",
        "output",
        "format",
        "grid_points",
        "tol",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |expected| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            expected,
        };
        let real = || value.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| bad("a finite number"));
        let boolean = || match value {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(bad("true or false")),
        };
        match key {
            "command" => {
                self.command = match value {
                    "simulate" => Command::Simulate,
                    "protocol" => Command::Protocol,
                    "analyze" => Command::Analyze,
                    "threshold" => Command::Threshold,
                    _ => return Err(bad("simulate, protocol, analyze or threshold")),
                }
            }
            "n" => self.n = value.parse().map_err(|_| bad("a positive integer"))?,
            "f" => self.f = real()?,
            "seed" => self.seed = value.parse().map_err(|_| bad("an unsigned 64-bit integer"))?,
            "attack" => {
                self.attack = match value {
                    "none" => AttackChoice::None,
                    "eve" => AttackChoice::Eve,
                    "alice-single" => AttackChoice::AliceSingle,
                    "alice-double" => AttackChoice::AliceDouble,
                    _ => return Err(bad("none, eve, alice-single or alice-double")),
                }
            }
            "theta" => self.theta = real()?,
            "p" => self.p = real()?,
            "strategy" => {
                self.strategy = match value {
                    "random-quarter" => FakeStrategy::RandomQuarter,
                    "always-d2" => FakeStrategy::AlwaysD2,
                    _ => return Err(bad("random-quarter or always-d2")),
                }
            }
            "target" => {
                self.target = match value {
                    "b" | "B" => Arm::B,
                    "c" | "C" => Arm::C,
                    _ => return Err(bad("b or c")),
                }
            }
            "knows_schedule" => self.knows_schedule = boolean()?,
            "schedule_guess_rate" => self.schedule_guess_rate = real()?,
            "loss_rate" => self.loss_rate = real()?,
            "dark_rate" => self.dark_rate = real()?,
            "timing_jitter" => self.timing_jitter = boolean()?,
            "floor" => self.floor = real()?,
            "z" => self.z = real()?,
            "error_ceiling" => self.error_ceiling = real()?,
            "output" => {
                self.output = match value {
                    "" | "-" => None,
                    path => Some(PathBuf::from(path)),
                }
            }
            "format" => {
                self.format = match value {
                    "text" => Format::Text,
                    "csv" => Format::Csv,
                    "json-lines" => Format::JsonLines,
                    _ => return Err(bad("text, csv or json-lines")),
                }
            }
            "grid_points" => self.grid_points = value.parse().map_err(|_| bad("an integer >= 2"))?,
            "tol" => self.tol = real()?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies a `key = value` file; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax(i + 1))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(ConfigError::Syntax(i + 1));
            }
            self.set(k, v.trim())?;
        }
        Ok(())
    }

    /// Every key with its effective value, in a form [`apply_text`](Self::apply_text) accepts.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# effective-config\n");
        let attack = match self.attack {
            AttackChoice::None => "none",
            AttackChoice::Eve => "eve",
            AttackChoice::AliceSingle => "alice-single",
            AttackChoice::AliceDouble => "alice-double",
        };
        let strategy = match self.strategy {
            FakeStrategy::RandomQuarter => "random-quarter",
            FakeStrategy::AlwaysD2 => "always-d2",
        };
        let target = match self.target {
            Arm::B => "b",
            Arm::C => "c",
        };
        let format = match self.format {
            Format::Text => "text",
            Format::Csv => "csv",
            Format::JsonLines => "json-lines",
        };
        let output = self.output.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        let pairs: [(&str, String); 21] = [
            ("command", self.command.name().into()),
            ("n", self.n.to_string()),
            ("f", self.f.to_string()),
            ("seed", self.seed.to_string()),
            ("attack", attack.into()),
            ("theta", self.theta.to_string()),
            ("p", self.p.to_string()),
            ("strategy", strategy.into()),
            ("target", target.into()),
            ("knows_schedule", self.knows_schedule.to_string()),
            ("schedule_guess_rate", self.schedule_guess_rate.to_string()),
            ("loss_rate", self.loss_rate.to_string()),
            ("dark_rate", self.dark_rate.to_string()),
            ("timing_jitter", self.timing_jitter.to_string()),
            ("floor", self.floor.to_string()),
            ("z", self.z.to_string()),
            ("error_ceiling", self.error_ceiling.to_string()),
            ("output", output),
            ("format", format.into()),
            ("grid_points", self.grid_points.to_string()),
            ("tol", self.tol.to_string()),
        ];
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn channel(&self) -> ChannelConfig {
        ChannelConfig {
            loss_rate: self.loss_rate,
            dark_rate: self.dark_rate,
            timing_jitter: self.timing_jitter,
        }
    }

    pub fn attack_config(&self) -> AttackConfig {
        let kind = match self.attack {
            AttackChoice::None => AttackKind::None,
            AttackChoice::Eve => AttackKind::EveProbe { theta: self.theta },
            AttackChoice::AliceSingle => AttackKind::AliceSinglePath {
                p: self.p,
                target: self.target,
                strategy: self.strategy,
            },
            AttackChoice::AliceDouble => AttackKind::AliceDoublePath { p: self.p },
        };
        AttackConfig {
            kind,
            knows_schedule: self.knows_schedule,
            schedule_guess_rate: self.schedule_guess_rate,
        }
    }

    pub fn policy(&self) -> TolerancePolicy {
        TolerancePolicy {
            floor: self.floor,
            z: self.z,
            error_ceiling: self.error_ceiling,
        }
    }

    /// Range checks that the core types do not perform themselves.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: String, expected| {
            Err(ConfigError::BadValue {
                key: key.to_string(),
                value,
                expected,
            })
        };
        if self.n == 0 {
            return bad("n", "0".into(), "a positive integer");
        }
        if self.grid_points < 2 {
            return bad("grid_points", self.grid_points.to_string(), "an integer >= 2");
        }
        if self.tol <= 0.0 {
            return bad("tol", self.tol.to_string(), "a positive number");
        }
        Ok(())
    }
}
