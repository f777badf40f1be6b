//! Number formatting shared by every emitted file.

use std::str::FromStr;

use serde_json::{Number, Value};

/// 17 significant digits, enough to round-trip any f64.
pub fn f17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// JSON number carrying [`f17`] digits verbatim; non-finite values become null.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    Value::Number(Number::from_str(&f17(x)).expect("f17 output is a valid JSON number"))
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}
