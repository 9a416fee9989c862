//! Report assembly: JSON values with explicit infinities and CSV tables.

use std::fmt::Write as _;

use ell_lab_core::branch::Window;
use serde_json::{json, Map, Value};

/// A finite number, or the strings `+inf`, `-inf`, `nan`.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("+inf")
    } else {
        json!("-inf")
    }
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

pub fn opt(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

fn cell(x: f64) -> String {
    match num(x) {
        Value::String(s) => s,
        v => v.to_string(),
    }
}

pub fn window(w: &Window) -> Value {
    json!({
        "lambda1_v": num(w.lambda1_v),
        "lambda1_vh": num(w.lambda1_vh),
        "lambda1_minus_zero": num(w.lambda1_minus_zero),
    })
}

/// Rows of numbers under a mandatory header.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&x| cell(x)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// `key,value` rows for every non-null scalar of a JSON object, nested keys joined by `.`.
pub fn flatten_csv(value: &Value) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                for (k, x) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, x, out);
                }
            }
            Value::Array(_) | Value::Null => {}
            Value::String(s) => {
                let _ = writeln!(out, "{prefix},{s}");
            }
            other => {
                let _ = writeln!(out, "{prefix},{other}");
            }
        }
    }
    let mut out = String::from("key,value\n");
    walk("", value, &mut out);
    out
}

pub fn object(pairs: Vec<(&str, Value)>) -> Value {
    let mut m = Map::new();
    for (k, v) in pairs {
        m.insert(k.to_string(), v);
    }
    Value::Object(m)
}
