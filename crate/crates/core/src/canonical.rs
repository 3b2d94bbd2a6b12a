//! Canonical structured-text encoding.
//!
//! Every document the toolkit writes goes through here: object keys sorted
//! lexicographically, floating-point numbers in fixed notation with six
//! decimals, integers verbatim. Parsing a canonical document and writing it
//! again reproduces the same bytes.

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

pub const FLOAT_DECIMALS: usize = 6;

/// Multi-line, two-space indented canonical form. Ends with a newline.
pub fn to_canonical_pretty<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Serialize(e.to_string()))?;
    let mut out = String::new();
    write_value(&v, &mut out, Some(0));
    out.push('\n');
    Ok(out)
}

/// Single-line canonical form, used for line-oriented files and hashing.
pub fn to_canonical_line<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Serialize(e.to_string()))?;
    let mut out = String::new();
    write_value(&v, &mut out, None);
    Ok(out)
}

/// 64-bit FNV-1a. Stable across platforms and releases, used wherever a
/// string has to be mixed into a seed or bucketed.
pub fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn format_float(f: f64) -> String {
    let s = format!("{:.*}", FLOAT_DECIMALS, f);
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn write_value(v: &Value, out: &mut String, indent: Option<usize>) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                out.push_str(&n.to_string());
            } else {
                out.push_str(&format_float(n.as_f64().unwrap_or(0.0)));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string encodes")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, indent.map(|d| d + 1));
                write_value(item, out, indent.map(|d| d + 1));
            }
            newline(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                newline(out, indent.map(|d| d + 1));
                out.push_str(&serde_json::to_string(key).expect("key encodes"));
                out.push(':');
                if indent.is_some() {
                    out.push(' ');
                }
                write_value(&map[key], out, indent.map(|d| d + 1));
            }
            newline(out, indent);
            out.push('}');
        }
    }
}

fn newline(out: &mut String, indent: Option<usize>) {
    if let Some(depth) = indent {
        out.push('\n');
        for _ in 0..depth {
            out.push_str("  ");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64("a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64("foobar"), 0x85944171f73967e8);
    }
    use serde_json::json;

    #[test]
    fn keys_sorted_and_floats_fixed() {
        let v = json!({"b": 1.5, "a": [1, -0.0000001], "c": {"z": "x", "y": null}});
        assert_eq!(
            to_canonical_line(&v).unwrap(),
            r#"{"a":[1,0.000000],"b":1.500000,"c":{"y":null,"z":"x"}}"#
        );
    }

    #[test]
    fn pretty_layout() {
        let v = json!({"k": [1, 2], "e": []});
        assert_eq!(
            to_canonical_pretty(&v).unwrap(),
            "{\n  \"e\": [],\n  \"k\": [\n    1,\n    2\n  ]\n}\n"
        );
    }

    proptest! {
        #[test]
        fn reparse_is_byte_stable(xs in proptest::collection::vec(-1.0e6f64..1.0e6, 0..8), n in any::<i64>()) {
            let v = json!({"xs": xs, "n": n});
            let first = to_canonical_pretty(&v).unwrap();
            let back: Value = serde_json::from_str(&first).unwrap();
            prop_assert_eq!(first, to_canonical_pretty(&back).unwrap());
        }
    }
}
