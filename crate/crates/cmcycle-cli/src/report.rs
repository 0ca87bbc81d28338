//! Output records: JSON lines for machines and an aligned CSV table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;
use sha2::{Digest, Sha256};

use cmcycle::cycles::q_exponent;

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct Fraction {
    pub num: String,
    pub den: String,
}

impl From<&BigRational> for Fraction {
    fn from(r: &BigRational) -> Self {
        Self { num: r.numer().to_string(), den: r.denom().to_string() }
    }
}

/// `value = q^exp`.
#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct QPower {
    pub q: u32,
    pub exp: i64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub command: String,
    pub inputs: BTreeMap<String, String>,
    pub value: Option<Fraction>,
    pub q_power_form: Option<QPower>,
    pub decimal: Option<String>,
    pub cells_used: u64,
    pub wall_ms: u64,
    pub fingerprint: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub detail: BTreeMap<String, String>,
}

impl Record {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_owned(),
            inputs: BTreeMap::new(),
            value: None,
            q_power_form: None,
            decimal: None,
            cells_used: 0,
            wall_ms: 0,
            fingerprint: String::new(),
            detail: BTreeMap::new(),
        }
    }

    pub fn input(mut self, k: &str, v: impl ToString) -> Self {
        self.inputs.insert(k.to_owned(), v.to_string());
        self
    }

    pub fn detail(mut self, k: &str, v: impl ToString) -> Self {
        self.detail.insert(k.to_owned(), v.to_string());
        self
    }

    /// Sets the value; the `q`-power form is filled when it applies.
    pub fn value(mut self, v: &BigRational, q: u32) -> Self {
        self.value = Some(v.into());
        self.q_power_form = q_exponent(v, q).map(|exp| QPower { q, exp });
        self.decimal = Some(decimal(v));
        self
    }

    pub fn cells(mut self, n: u64) -> Self {
        self.cells_used = n;
        self
    }

    pub fn norm_exponent(mut self, q: u32, exp: i64) -> Self {
        self.q_power_form = Some(QPower { q, exp });
        self
    }
}

/// Six significant digits in scientific notation.
pub fn decimal(v: &BigRational) -> String {
    if v.is_zero() {
        return "0".into();
    }
    format!("{:.6e}", v.to_f64().unwrap_or(f64::NAN))
}

/// SHA-256 of the canonical JSON of everything that determines the output.
pub fn fingerprint(canonical: &serde_json::Value) -> String {
    let digest = Sha256::digest(canonical.to_string().as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn to_jsonl(records: &[Record]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("records serialize") + "\n").collect()
}

const COLUMNS: [&str; 9] =
    ["command", "inputs", "value", "q_exp", "decimal", "cells_used", "wall_ms", "detail", "fingerprint"];

fn joined(m: &BTreeMap<String, String>) -> String {
    m.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

/// Comma-separated table with every column padded to a common width.
pub fn to_csv(records: &[Record]) -> String {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.command.clone(),
                joined(&r.inputs),
                r.value.as_ref().map_or(String::new(), |f| format!("{}/{}", f.num, f.den)),
                r.q_power_form.as_ref().map_or(String::new(), |p| p.exp.to_string()),
                r.decimal.clone().unwrap_or_default(),
                r.cells_used.to_string(),
                r.wall_ms.to_string(),
                joined(&r.detail),
                r.fingerprint.clone(),
            ]
            .into_iter()
            .map(|c| c.replace(',', ";"))
            .collect()
        })
        .collect();
    let mut widths: Vec<usize> = COLUMNS.iter().map(|c| c.len()).collect();
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join(", ").trim_end().to_owned() + "\n"
    };
    let mut out = line(COLUMNS.to_vec());
    for row in &rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    #[test]
    fn q_power_form_only_for_powers() {
        let a = Record::new("x").value(&r(1, 9), 3);
        assert_eq!(a.q_power_form, Some(QPower { q: 3, exp: -2 }));
        assert_eq!(a.value, Some(Fraction { num: "1".into(), den: "9".into() }));
        assert_eq!(Record::new("x").value(&r(3, 4), 3).q_power_form, None);
    }

    #[test]
    fn csv_columns_line_up() {
        let rows = [Record::new("a").value(&r(1, 3), 3), Record::new("long-name").value(&r(-25, 7), 3)];
        let csv = to_csv(&rows);
        let commas: Vec<Vec<usize>> =
            csv.lines().map(|l| l.match_indices(',').map(|(i, _)| i).collect()).collect();
        assert!(commas.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn fingerprint_is_key_order_independent() {
        let a: serde_json::Value = serde_json::from_str(r#"{"x": 1, "y": [2, 3]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"y": [2, 3], "x": 1}"#).unwrap();
        assert_eq!(fingerprint(&a), fingerprint(&b));
        assert_eq!(fingerprint(&a).len(), 64);
    }
}
