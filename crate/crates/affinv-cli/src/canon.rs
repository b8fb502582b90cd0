//! Canonical JSON serialization for experiment records.
//!
//! Identical inputs must produce byte-identical records, so the writer
//! pins down everything the generic serializer leaves open: object keys
//! are emitted in sorted order (serde_json's default map already sorts),
//! floating-point numbers are always written as 17-significant-digit
//! scientific notation (which round-trips f64 exactly), and integers are
//! written as plain integers, never in float form. Parsing a record and
//! re-serializing it reproduces the same bytes: the float/integer
//! distinction survives because floats always carry an exponent.

use serde_json::Value;

/// Render a JSON value in canonical form, newline-terminated.
pub fn to_canonical_string(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value);
    out.push('\n');
    out
}

/// The one float format used everywhere: 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_value(out: &mut String, value: &Value) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let f = n.as_f64().expect("JSON numbers are i64, u64, or f64");
                out.push_str(&format_float(f));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("strings always serialize"));
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            for (i, (key, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("keys always serialize"));
                out.push(':');
                write_value(out, item);
            }
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn floats_and_integers_are_distinguishable() {
        let value = json!({"count": 42, "ratio": 0.25, "half": 0.5, "whole": 1.0});
        let text = to_canonical_string(&value);
        assert_eq!(
            text,
            "{\"count\":42,\"half\":5.0000000000000000e-1,\
             \"ratio\":2.5000000000000000e-1,\"whole\":1.0000000000000000e0}\n"
        );
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let value = json!({
            "z": [1, 2.5e-300, -0.0, 1e300],
            "a": {"nested": true, "s": "he said \"hi\"", "none": null},
        });
        let first = to_canonical_string(&value);
        let reparsed: Value = serde_json::from_str(&first).unwrap();
        let second = to_canonical_string(&reparsed);
        assert_eq!(first, second);
    }

    #[test]
    fn keys_are_sorted() {
        let parsed: Value = serde_json::from_str("{\"b\":1,\"a\":2}").unwrap();
        assert_eq!(to_canonical_string(&parsed), "{\"a\":2,\"b\":1}\n");
    }
}
