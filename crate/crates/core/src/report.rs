//! Result tables and their CSV form.
//!
//! Floating-point fields are written with nine significant digits in
//! exponent notation, so output is byte-stable and re-parses to the same
//! table. Empty fields mean "not applicable".

use std::fmt::Write as _;

use thiserror::Error;

pub const CSV_HEADER: &str = "scenario,method,t_seconds,value,err_low,err_high,n_samples,wall_ms";

/// One output row: a method evaluated at one time point.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub scenario: String,
    pub method: String,
    pub t_seconds: f64,
    /// `None` when the computation failed.
    pub value: Option<f64>,
    /// Lower end of the error band (quadrature error or Wilson interval).
    pub err_low: Option<f64>,
    pub err_high: Option<f64>,
    /// Monte Carlo sample count; empty for analytic rows.
    pub n_samples: Option<u64>,
    pub wall_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CsvError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

fn float(x: f64) -> String {
    format!("{x:.8e}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

/// Rounds `x` to the precision kept in CSV.
pub fn rounded(x: f64) -> f64 {
    float(x).parse().expect("formatted float parses")
}

impl Row {
    fn write_csv(&self, out: &mut String) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            self.scenario,
            self.method,
            float(self.t_seconds),
            opt_float(self.value),
            opt_float(self.err_low),
            opt_float(self.err_high),
            self.n_samples.map(|n| n.to_string()).unwrap_or_default(),
            opt_float(self.wall_ms),
        );
    }
}

pub fn to_csv(rows: &[Row]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        row.write_csv(&mut out);
    }
    out
}

pub fn from_csv(text: &str) -> Result<Vec<Row>, CsvError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(CsvError::Malformed { line: 1, message: "missing or wrong header".into() }),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        let bad = |message: String| CsvError::Malformed { line: line_no, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(bad(format!("expected 8 fields, found {}", fields.len())));
        }
        let req_f = |s: &str, name: &str| s.parse::<f64>().map_err(|_| bad(format!("bad {name} '{s}'")));
        let opt_f = |s: &str, name: &str| if s.is_empty() { Ok(None) } else { req_f(s, name).map(Some) };
        rows.push(Row {
            scenario: fields[0].to_string(),
            method: fields[1].to_string(),
            t_seconds: req_f(fields[2], "t_seconds")?,
            value: opt_f(fields[3], "value")?,
            err_low: opt_f(fields[4], "err_low")?,
            err_high: opt_f(fields[5], "err_high")?,
            n_samples: if fields[6].is_empty() {
                None
            } else {
                Some(fields[6].parse().map_err(|_| bad(format!("bad n_samples '{}'", fields[6])))?)
            },
            wall_ms: opt_f(fields[7], "wall_ms")?,
        });
    }
    Ok(rows)
}
