//! Fixed-precision float output.
//!
//! Every float written to JSON or CSV goes through [`sig17`] so repeated runs
//! diff byte-for-byte.

use serde::ser::{SerializeSeq, Serializer};
use serde_json::value::RawValue;

/// Formats `x` with 17 significant digits. Non-finite values become `null`.
pub fn sig17(x: f64) -> String {
    if !x.is_finite() {
        return "null".to_owned();
    }
    if x == 0.0 {
        // collapse -0.0
        return "0.0000000000000000e0".to_owned();
    }
    format!("{x:.16e}")
}

fn raw(x: f64) -> Box<RawValue> {
    RawValue::from_string(sig17(x)).expect("formatted float is valid JSON")
}

pub fn ser_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_some(&raw(*x))
}

pub fn ser_opt_f64<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_some(&raw(*v)),
        None => s.serialize_none(),
    }
}

pub fn ser_vec<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for &x in xs {
        seq.serialize_element(&raw(x))?;
    }
    seq.end()
}

pub fn ser_vec_vec<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(rows.len()))?;
    for row in rows {
        let cells: Vec<Box<RawValue>> = row.iter().map(|&x| raw(x)).collect();
        seq.serialize_element(&cells)?;
    }
    seq.end()
}
