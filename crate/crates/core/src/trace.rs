//! Iteration traces and voltage profiles as CSV.
//!
//! Floats are written with 9 significant digits: plain decimal notation for
//! decimal exponents in `[-5, 9)`, scientific notation otherwise.

use serde::{Deserialize, Serialize};

use crate::phase::Phase;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    /// Smallest voltage magnitude over all nodes, p.u.
    pub min_v: f64,
    pub max_v: f64,
    pub du_norm: f64,
    pub mu_norm: f64,
    pub violations: usize,
    pub ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub bus: usize,
    pub phase: Phase,
    pub vmag_pu: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub profile: Vec<ProfileRow>,
}

/// `%g`-style formatting with 9 significant digits.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

const TRACE_HEADER: [&str; 8] = [
    "iter",
    "objective",
    "min_v",
    "max_v",
    "du_norm",
    "mu_norm",
    "violations",
    "ms",
];

pub fn write_trace_csv(records: &[IterationRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER).expect("in-memory write");
    for r in records {
        w.write_record([
            r.iter.to_string(),
            format_sig9(r.objective),
            format_sig9(r.min_v),
            format_sig9(r.max_v),
            format_sig9(r.du_norm),
            format_sig9(r.mu_norm),
            r.violations.to_string(),
            format_sig9(r.ms),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn read_trace_csv(text: &str) -> Result<Vec<IterationRecord>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect()
}

pub fn write_profile_csv(rows: &[ProfileRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bus", "phase", "vmag_pu"]).expect("in-memory write");
    for r in rows {
        w.write_record([r.bus.to_string(), r.phase.to_string(), format_sig9(r.vmag_pu)])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn read_profile_csv(text: &str) -> Result<Vec<ProfileRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect()
}
