//! CSV and JSON writers.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use crate::config::{emit, RunConfig};
use crate::run::ResultRow;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Written for values that do not apply to a row.
pub const NULL_TOKEN: &str = "NA";

pub const COLUMNS: [&str; 19] = [
    "sweep_value",
    "g",
    "kappa",
    "chi",
    "lambda",
    "var_c",
    "var_fb_mean",
    "var_fb_min",
    "var_fb_max",
    "db_c",
    "db_fb",
    "threshold",
    "adiabatic",
    "excess_Q",
    "avg_force_dimensionless",
    "avg_force_newton",
    "converged",
    "runtime_s",
    "status",
];

/// C-style `%.12e`: twelve fraction digits, signed exponent of at least two digits.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| NULL_TOKEN.to_string(), format_float)
}

/// Quotes a field when it contains a delimiter, quote or line break.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cells(r: &ResultRow) -> [String; 19] {
    [
        opt(r.sweep_value),
        format_float(r.g),
        opt(r.kappa),
        opt(r.chi),
        opt(r.lambda),
        opt(r.var_c),
        opt(r.var_fb_mean),
        opt(r.var_fb_min),
        opt(r.var_fb_max),
        opt(r.db_c),
        opt(r.db_fb),
        opt(r.threshold),
        opt(r.adiabatic),
        opt(r.excess_q),
        opt(r.avg_force_dimensionless),
        opt(r.avg_force_newton),
        r.converged.map_or_else(|| NULL_TOKEN.to_string(), |c| c.to_string()),
        opt(r.runtime_s),
        csv_field(&r.status),
    ]
}

/// Comment lines recording the tool version and the fully resolved configuration.
pub fn header_comment(cfg: &RunConfig, tool: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# mechsqueeze {VERSION} {tool}");
    let _ = writeln!(s, "# null token: {NULL_TOKEN}; variances are <dQ^2> with vacuum = 0.5");
    if cfg.kappa_auto || cfg.lambda.is_some_and(|l| !matches!(l, crate::config::LambdaSetting::Value(_))) {
        let _ = writeln!(s, "# optimal kappa: minimum of the RWA conditional variance over 61 log-spaced points in [1e-3, 1e2]");
    }
    let _ = writeln!(s, "# resolved configuration:");
    for line in emit(cfg).lines() {
        let _ = writeln!(s, "#   {line}");
    }
    s
}

pub fn to_csv(cfg: &RunConfig, rows: &[ResultRow]) -> String {
    let mut s = header_comment(cfg, "sweep");
    s.push_str(&COLUMNS.join(","));
    s.push('\n');
    for r in rows {
        s.push_str(&cells(r).join(","));
        s.push('\n');
    }
    s
}

pub fn to_json(cfg: &RunConfig, rows: &[ResultRow]) -> String {
    let rows: Vec<Value> = rows
        .iter()
        .map(|r| {
            let v = serde_json::to_value(r).expect("row serializes");
            let Value::Object(mut m) = v else { unreachable!() };
            let ordered: Map<String, Value> =
                COLUMNS.iter().map(|c| (c.to_string(), m.remove(*c).unwrap_or(Value::Null))).collect();
            Value::Object(ordered)
        })
        .collect();
    let doc = json!({
        "tool": "mechsqueeze",
        "version": VERSION,
        "config": cfg,
        "config_text": emit(cfg),
        "columns": COLUMNS,
        "rows": rows,
    });
    serde_json::to_string_pretty(&doc).expect("json") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_style_floats() {
        assert_eq!(format_float(0.0012345), "1.234500000000e-03");
        assert_eq!(format_float(12.5), "1.250000000000e+01");
        assert_eq!(format_float(0.0), "0.000000000000e+00");
        assert_eq!(format_float(-3e-120), "-3.000000000000e-120");
        assert_eq!(format_float(1.0), "1.000000000000e+00");
    }

    #[test]
    fn quoting() {
        assert_eq!(csv_field("ok"), "ok");
        assert_eq!(csv_field("a, b"), "\"a, b\"");
        assert_eq!(csv_field("say \"x\""), "\"say \"\"x\"\"\"");
    }
}
