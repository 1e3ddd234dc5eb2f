//! CSV output. Floats are written with nine significant digits; absent
//! values are empty fields.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::experiment::RunRecord;
use super::report::BoundRow;
use super::sweep::SweepRow;
use crate::error::{Error, Result};
use crate::optimizer::ActivationPlan;

pub const RECORD_HEADER: [&str; 7] = [
    "round",
    "strategy",
    "test_accuracy",
    "test_loss",
    "n_error_free",
    "divergence_sample",
    "wall_time",
];

pub const BOUND_HEADER: [&str; 11] = [
    "K",
    "N",
    "p_min",
    "p_max",
    "zeta1_mc",
    "zeta1_se",
    "zeta1_bound",
    "zeta2_mc",
    "zeta2_se",
    "zeta2_bound",
    "gap_lower",
];

pub const SWEEP_HEADER: [&str; 10] = [
    "axis",
    "value",
    "strategy",
    "n_participating",
    "p_min",
    "p_max",
    "final_accuracy_mean",
    "final_accuracy_std",
    "final_loss_mean",
    "trials",
];

pub const PLAN_HEADER: [&str; 4] = ["N", "objective", "p_min", "p_max"];

/// Nine significant digits, `%g` style: fixed notation for decimal
/// exponents in `[-5, 9)`, scientific otherwise, trailing zeros removed.
pub fn fmt_sig9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig9).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<csv output>", io),
        other => Error::Format {
            path: "<csv>".into(),
            reason: format!("{other:?}"),
        },
    }
}

pub fn write_records<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.round.to_string(),
            r.strategy.as_str().to_string(),
            opt(r.test_accuracy),
            fmt_sig9(r.test_loss),
            r.n_error_free.to_string(),
            opt(r.divergence_sample),
            fmt_sig9(r.wall_time),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))
}

/// Writes run records to `path`, naming the path in any I/O error.
pub fn emit_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(BufWriter::new(file), records).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Parses a run-record CSV written by [`write_records`].
pub fn read_records<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(RECORD_HEADER) {
        return Err(Error::Format {
            path: "<csv>".into(),
            reason: format!("unexpected header {header:?}"),
        });
    }
    let bad = |line: usize, what: &str| Error::Format {
        path: "<csv>".into(),
        reason: format!("row {line}: bad {what}"),
    };
    let num = |s: &str, line: usize, what: &str| s.parse::<f64>().map_err(|_| bad(line, what));
    let opt_num = |s: &str, line: usize, what: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s, line, what).map(Some)
        }
    };
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(csv_err)?;
            let line = i + 2;
            Ok(RunRecord {
                round: rec[0].parse().map_err(|_| bad(line, "round"))?,
                strategy: rec[1].parse().map_err(|_| bad(line, "strategy"))?,
                test_accuracy: opt_num(&rec[2], line, "test_accuracy")?,
                test_loss: num(&rec[3], line, "test_loss")?,
                n_error_free: rec[4].parse().map_err(|_| bad(line, "n_error_free"))?,
                divergence_sample: opt_num(&rec[5], line, "divergence_sample")?,
                wall_time: num(&rec[6], line, "wall_time")?,
            })
        })
        .collect()
}

pub fn write_bounds<W: Write>(out: W, rows: &[BoundRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BOUND_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.n.to_string(),
            fmt_sig9(r.p_min),
            fmt_sig9(r.p_max),
            opt(r.zeta1_mc),
            opt(r.zeta1_se),
            fmt_sig9(r.zeta1_bound),
            opt(r.zeta2_mc),
            opt(r.zeta2_se),
            opt(r.zeta2_bound),
            opt(r.gap_lower),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))
}

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.axis.as_str().to_string(),
            fmt_sig9(r.value),
            r.strategy.as_str().to_string(),
            r.n_participating.to_string(),
            fmt_sig9(r.p_min),
            fmt_sig9(r.p_max),
            opt(r.final_accuracy_mean),
            opt(r.final_accuracy_std),
            fmt_sig9(r.final_loss_mean),
            r.trials.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))
}

/// Planner curve; `probs` gives the per-device probabilities at each `N`.
pub fn write_plan<W: Write>(out: W, plan: &ActivationPlan, probs: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PLAN_HEADER).map_err(csv_err)?;
    for (i, (v, p)) in plan.objective_values.iter().zip(probs).enumerate() {
        let p_min = p.iter().copied().fold(f64::INFINITY, f64::min);
        let p_max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        w.write_record([
            (i + 1).to_string(),
            fmt_sig9(*v),
            fmt_sig9(p_min),
            fmt_sig9(p_max),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))
}
