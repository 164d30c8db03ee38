use std::fmt::Write as _;
use std::io::Write as _;

use cqca_core::adversary::{self, EveRecord};
use cqca_core::analysis::{self, format_significant};
use cqca_core::metrics::{predicted_outcomes, MeritReport};
use cqca_core::parties::{self, key_to_hex, ProtocolParams, ProtocolVerdict, RoundRecord};
use cqca_core::photonics::{Action, Announcement};
use serde_json::json;

use crate::config::{AttackChoice, Command, Format, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] cqca_core::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

/// Runs the configured command and returns the process exit code.
pub fn run(cfg: &RunConfig) -> Result<u8, RunError> {
    let (text, code) = match cfg.command {
        Command::Simulate => simulate(cfg)?,
        Command::Protocol => protocol(cfg)?,
        Command::Analyze => (analyze(cfg)?, 0),
        Command::Threshold => (threshold(cfg)?, 0),
    };
    match (&cfg.output, cfg.command) {
        (Some(path), Command::Simulate | Command::Analyze | Command::Threshold) => std::fs::write(path, text)?,
        _ => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(code)
}

struct Row {
    quantity: String,
    empirical: Option<f64>,
    theory: Option<f64>,
    sigma: Option<f64>,
    count: usize,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("NA".to_string(), |v| format!("{v:.6}"))
}

fn comparison_rows(cfg: &RunConfig, records: &[RoundRecord], eve: &[EveRecord], report: &MeritReport) -> Vec<Row> {
    let theta = match cfg.attack {
        AttackChoice::None => Some(0.0),
        AttackChoice::Eve => Some(cfg.theta),
        _ => None,
    };
    // cell predictions ignore dark counts
    let cell_theory = theta.filter(|_| cfg.dark_rate == 0.0);
    let mut rows = Vec::new();
    let binomial = |p: Option<f64>, m: usize| p.filter(|_| m > 0).map(|p| (p * (1.0 - p) / m as f64).sqrt());

    for (b, c) in [(Action::F, Action::F), (Action::A, Action::F), (Action::F, Action::A), (Action::A, Action::A)] {
        let cell = report.cells.cell(b, c);
        let pred = cell_theory.map(|t| predicted_outcomes(b, c, t, cfg.loss_rate));
        let m = cell.rounds;
        for (label, count, theory) in [
            ("D1", cell.d1, pred.map(|p| p.d1)),
            ("D2", cell.d2, pred.map(|p| p.d2)),
            ("NULL", cell.null, pred.map(|p| p.null)),
        ] {
            rows.push(Row {
                quantity: format!("P({label}|{}{})", b.as_char(), c.as_char()),
                empirical: (m > 0).then(|| count as f64 / m as f64),
                theory,
                sigma: binomial(theory, m),
                count: m,
            });
        }
    }

    let n = records.len();
    let d1 = records.iter().filter(|r| r.outcome_alice == Announcement::D1).count();
    let d1_theory = cell_theory.map(|t| {
        [(Action::F, Action::F), (Action::A, Action::F), (Action::F, Action::A)]
            .iter()
            .map(|&(b, c)| predicted_outcomes(b, c, t, cfg.loss_rate).d1)
            .sum::<f64>()
            / 4.0
    });
    rows.push(Row {
        quantity: "P(D1)".into(),
        empirical: Some(d1 as f64 / n as f64),
        theory: d1_theory,
        sigma: binomial(d1_theory, n),
        count: n,
    });

    let exp = &report.expected;
    let est = |e: Option<cqca_core::metrics::Estimate>| (e.map(|e| e.value), e.map_or(0, |e| e.count));
    let (e_val, e_n) = est(report.error_rate);
    let e_theory = theta.map(|t| analysis::error_rate_theory(t).unwrap_or(f64::NAN)).filter(|_| cfg.dark_rate == 0.0);
    rows.push(Row {
        quantity: "errorRate".into(),
        empirical: e_val,
        theory: e_theory,
        sigma: binomial(e_theory, e_n),
        count: e_n,
    });
    let (v_val, v_n) = est(report.visibility);
    let v_theory = theta.map(|t| analysis::visibility_theory(t).unwrap_or(f64::NAN)).filter(|_| cfg.dark_rate == 0.0);
    rows.push(Row {
        quantity: "visibility".into(),
        empirical: v_val,
        theory: v_theory,
        // 𝒱 = 1 − 2 P(D1 | FF click)
        sigma: binomial(v_theory.map(|v| (1.0 - v) / 2.0), v_n).map(|s| 2.0 * s),
        count: v_n,
    });
    let (k_val, k_n) = est(report.kappa);
    let honest_theory = |x: f64| matches!(cfg.attack, AttackChoice::None | AttackChoice::Eve).then_some(x);
    rows.push(Row {
        quantity: "kappa".into(),
        empirical: k_val,
        theory: honest_theory(exp.kappa),
        sigma: binomial(honest_theory(exp.kappa), k_n),
        count: k_n,
    });
    let (b_val, b_n) = est(report.bias);
    rows.push(Row {
        quantity: "bias".into(),
        empirical: b_val,
        theory: honest_theory(exp.bias),
        sigma: (b_n > 0).then(|| 1.0 / (b_n as f64).sqrt()),
        count: b_n,
    });
    rows.push(Row {
        quantity: "r".into(),
        empirical: Some(report.rates.r.value),
        theory: honest_theory(exp.r),
        sigma: binomial(honest_theory(exp.r), n),
        count: n,
    });
    rows.push(Row {
        quantity: "lambda".into(),
        empirical: Some(report.rates.lambda.value),
        theory: Some(exp.lambda),
        sigma: binomial(Some(exp.zero_click), n).map(|s| 2.0 * s),
        count: n,
    });

    if let AttackChoice::Eve = cfg.attack {
        if let Some(mi) = adversary::empirical_mutual_information(eve) {
            rows.push(Row {
                quantity: "eve_information".into(),
                empirical: Some(mi.bits),
                theory: Some(adversary::helstrom_mutual_information(cfg.theta)),
                sigma: Some(mi.sigma),
                count: mi.samples,
            });
        }
        rows.push(Row {
            quantity: "holevo_chi".into(),
            empirical: None,
            theory: analysis::holevo_chi(cfg.theta).ok(),
            sigma: None,
            count: 0,
        });
    }
    rows
}

fn render_rows(rows: &[Row], format: Format) -> String {
    let mut out = String::new();
    match format {
        Format::Text => {
            let _ = writeln!(out, "{:<16} {:>10} {:>10} {:>10} {:>8}", "quantity", "empirical", "theory", "sigma", "count");
            for r in rows {
                let _ = writeln!(
                    out,
                    "{:<16} {:>10} {:>10} {:>10} {:>8}",
                    r.quantity,
                    fmt_opt(r.empirical),
                    fmt_opt(r.theory),
                    fmt_opt(r.sigma),
                    r.count
                );
            }
        }
        Format::Csv => {
            out.push_str("quantity,empirical,theory,sigma,count\n");
            for r in rows {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    r.quantity,
                    fmt_opt(r.empirical),
                    fmt_opt(r.theory),
                    fmt_opt(r.sigma),
                    r.count
                );
            }
        }
        Format::JsonLines => {
            for r in rows {
                let line = json!({
                    "quantity": r.quantity,
                    "empirical": r.empirical,
                    "theory": r.theory,
                    "sigma": r.sigma,
                    "count": r.count,
                });
                let _ = writeln!(out, "{line}");
            }
        }
    }
    out
}

fn render_report(report: &MeritReport, format: Format) -> Result<String, RunError> {
    Ok(match format {
        Format::Text => report.to_key_values(),
        Format::Csv => format!("{}\n{}\n", MeritReport::CSV_HEADER, report.to_csv_row()),
        Format::JsonLines => format!("{}\n", json!({ "report": report, "verdict": report.verdict_label() })),
    })
}

fn simulate(cfg: &RunConfig) -> Result<(String, u8), RunError> {
    let channel = cfg.channel();
    let attack = cfg.attack_config();
    let obs = parties::simulate_rounds(cfg.n, cfg.seed, &channel, &attack)?;
    let records: Vec<RoundRecord> = obs.iter().map(|o| o.to_record(true)).collect();
    let eve: Vec<EveRecord> = obs
        .iter()
        .filter(|o| o.eve_guess.is_some())
        .map(|o| EveRecord {
            round_id: o.round_id,
            guess: o.eve_guess,
            true_bit: o.true_bit(),
        })
        .collect();
    let policy = cfg.policy();
    policy.validate()?;
    let report = MeritReport::build(&records, &records, &channel, &policy);
    let mut out = render_report(&report, cfg.format)?;
    if cfg.format != Format::JsonLines {
        out.push('\n');
    }
    out.push_str(&render_rows(&comparison_rows(cfg, &records, &eve, &report), cfg.format));
    Ok((out, 0))
}

fn protocol(cfg: &RunConfig) -> Result<(String, u8), RunError> {
    let params = ProtocolParams {
        n: cfg.n,
        f: cfg.f,
        seed: cfg.seed,
        channel: cfg.channel(),
        attack: cfg.attack_config(),
        policy: cfg.policy(),
    };
    let t = parties::run_protocol(&params)?;
    if let Some(path) = &cfg.output {
        std::fs::write(path, parties::write_records(&t.rounds))?;
    }
    let rounds: Vec<String> = t.key_rounds.iter().map(u64::to_string).collect();
    let mut out = render_report(&t.report, cfg.format)?;
    match cfg.format {
        Format::JsonLines => {
            let line = json!({
                "key_length": t.key_bob.len(),
                "key_mismatches": t.key_mismatches(),
                "distillable_bits": t.distillable_bits,
                "key_bob": key_to_hex(&t.key_bob),
                "key_charlie": key_to_hex(&t.key_charlie),
                "key_rounds": t.key_rounds,
            });
            let _ = writeln!(out, "{line}");
        }
        Format::Csv => {
            let _ = writeln!(out, "\nkey_length,key_mismatches,distillable_bits,key_bob,key_charlie");
            let _ = writeln!(
                out,
                "{},{},{:.3},{},{}",
                t.key_bob.len(),
                t.key_mismatches(),
                t.distillable_bits,
                key_to_hex(&t.key_bob),
                key_to_hex(&t.key_charlie)
            );
        }
        Format::Text => {
            let _ = writeln!(out, "key_length = {}", t.key_bob.len());
            let _ = writeln!(out, "key_mismatches = {}", t.key_mismatches());
            let _ = writeln!(out, "distillable_bits = {:.3}", t.distillable_bits);
            let _ = writeln!(out, "key_bob = {}", key_to_hex(&t.key_bob));
            let _ = writeln!(out, "key_charlie = {}", key_to_hex(&t.key_charlie));
            let _ = writeln!(out, "key_rounds = {}", rounds.join(","));
        }
    }
    let code = match &t.verdict {
        ProtocolVerdict::KeyProduced => 0,
        ProtocolVerdict::Aborted { reason, .. } => {
            eprintln!("aborted: {reason}");
            2
        }
    };
    Ok((out, code))
}

fn analyze(cfg: &RunConfig) -> Result<String, RunError> {
    let curve = analysis::sweep_curves(&analysis::uniform_grid(cfg.grid_points))?;
    Ok(match cfg.format {
        Format::JsonLines => {
            let mut out = String::new();
            for p in &curve.points {
                let _ = writeln!(out, "{}", serde_json::to_string(p)?);
            }
            out
        }
        _ => curve.to_csv(),
    })
}

fn threshold(cfg: &RunConfig) -> Result<String, RunError> {
    let t = analysis::security_threshold(cfg.tol)?;
    let theta = format_significant(t.theta, 10);
    let e = format_significant(t.e, 10);
    Ok(match cfg.format {
        Format::Text => format!("theta_star = {theta}\ne_star = {e}\niterations = {}\n", t.iterations),
        Format::Csv => format!("theta_star,e_star\n{theta},{e}\n"),
        Format::JsonLines => format!("{}\n", json!({ "theta_star": t.theta, "e_star": t.e, "iterations": t.iterations })),
    })
}
