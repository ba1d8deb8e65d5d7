//! Canonical JSON: object keys sorted, floats with 17 significant digits in
//! exponent form, non-finite floats as `null`. Equal values always produce
//! equal bytes, so payloads can be hashed and compared.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub fn to_canonical_value<T: Serialize>(v: &T) -> serde_json::Result<Value> {
    serde_json::to_value(v)
}

/// Canonical text of a JSON value.
pub fn canonical_string(v: &Value) -> String {
    let mut out = String::new();
    write_value(v, &mut out);
    out
}

pub fn to_canonical_string<T: Serialize>(v: &T) -> serde_json::Result<String> {
    Ok(canonical_string(&to_canonical_value(v)?))
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_u64() {
                out.push_str(&i.to_string());
            } else if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else {
                write_float(n.as_f64().unwrap_or(f64::NAN), out);
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(x, out);
            }
            out.push(']');
        }
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_value(&m[k], out);
            }
            out.push('}');
        }
    }
}

fn write_float(x: f64, out: &mut String) {
    if x.is_finite() {
        // Normalize negative zero so that equal values print equally.
        let x = if x == 0.0 { 0.0 } else { x };
        out.push_str(&format!("{x:.16e}"));
    } else {
        out.push_str("null");
    }
}
