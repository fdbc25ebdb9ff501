//! Sweep result rows and their CSV form.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stored::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Infeasible,
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowStatus::Ok => "ok",
            RowStatus::Infeasible => "infeasible",
        })
    }
}

impl FromStr for RowStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(RowStatus::Ok),
            "infeasible" => Ok(RowStatus::Infeasible),
            other => Err(Error::Format(format!("unknown status '{other}'"))),
        }
    }
}

/// One record per (configuration, trial). Infeasible configurations get one
/// row with the trial-level fields left empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub dataset: String,
    pub method: Method,
    /// Requested budget fraction `x`.
    pub budget: f64,
    pub k: Option<u32>,
    pub n: Option<usize>,
    pub sparsity: Option<f64>,
    pub bits: Option<u8>,
    pub p: Option<f64>,
    /// Class-axis fraction recomputed from the stored payload.
    pub fraction: Option<f64>,
    pub trial: Option<usize>,
    pub accuracy: Option<f64>,
    pub clean_accuracy: Option<f64>,
    pub seed: Option<u64>,
    pub status: RowStatus,
}

pub const COLUMNS: [&str; 14] = [
    "dataset",
    "method",
    "budget",
    "k",
    "n",
    "sparsity",
    "bits",
    "p",
    "fraction",
    "trial",
    "accuracy",
    "clean_accuracy",
    "seed",
    "status",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Six significant digits, fixed notation for ordinary magnitudes.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci[sci.find('e').expect("scientific form") + 1..]
        .parse()
        .expect("exponent");
    if (-5..=5).contains(&exp) {
        format!("{:.*}", (5 - exp).max(0) as usize, x)
    } else {
        sci
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_f(v: Option<f64>) -> String {
    v.map(format_sig6).unwrap_or_default()
}

impl SweepRow {
    fn fields(&self) -> [String; 14] {
        [
            self.dataset.clone(),
            self.method.to_string(),
            format_sig6(self.budget),
            opt(self.k),
            opt(self.n),
            opt_f(self.sparsity),
            opt(self.bits),
            opt_f(self.p),
            opt_f(self.fraction),
            opt(self.trial),
            opt_f(self.accuracy),
            opt_f(self.clean_accuracy),
            opt(self.seed),
            self.status.to_string(),
        ]
    }
}

pub fn results_to_csv(results: &SweepResult) -> Result<String> {
    if results.rows.is_empty() {
        return Err(Error::Config("refusing to emit an empty sweep".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(COLUMNS).map_err(io)?;
    for row in &results.rows {
        w.write_record(row.fields()).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

/// Header plus one line per row, stable column order.
pub fn emit_results(results: &SweepResult, path: &Path) -> Result<()> {
    let text = results_to_csv(results)?;
    std::fs::write(path, text)?;
    Ok(())
}

fn parse_opt<T: FromStr>(field: &str, name: &str) -> Result<Option<T>> {
    if field.is_empty() {
        return Ok(None);
    }
    field
        .parse()
        .map(Some)
        .map_err(|_| Error::Format(format!("column {name}: cannot parse '{field}'")))
}

pub fn parse_results(text: &str) -> Result<SweepResult> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .clone();
    if header.iter().ne(COLUMNS) {
        return Err(Error::Format("unexpected results header".into()));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record.map_err(|e| Error::Format(e.to_string()))?;
        let req = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::Format(format!("missing {name}")));
        rows.push(SweepRow {
            dataset: r[0].to_string(),
            method: r[1].parse().map_err(|e: Error| Error::Format(e.to_string()))?,
            budget: req(parse_opt(&r[2], "budget")?, "budget")?,
            k: parse_opt(&r[3], "k")?,
            n: parse_opt(&r[4], "n")?,
            sparsity: parse_opt(&r[5], "sparsity")?,
            bits: parse_opt(&r[6], "bits")?,
            p: parse_opt(&r[7], "p")?,
            fraction: parse_opt(&r[8], "fraction")?,
            trial: parse_opt(&r[9], "trial")?,
            accuracy: parse_opt(&r[10], "accuracy")?,
            clean_accuracy: parse_opt(&r[11], "clean_accuracy")?,
            seed: parse_opt(&r[12], "seed")?,
            status: r[13].parse()?,
        });
    }
    Ok(SweepResult { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_formatting() {
        assert_eq!(format_sig6(0.9), "0.900000");
        assert_eq!(format_sig6(0.0625), "0.0625000");
        assert_eq!(format_sig6(1.0), "1.00000");
        assert_eq!(format_sig6(0.3125), "0.312500");
        assert_eq!(format_sig6(123456.7), "123457");
        assert_eq!(format_sig6(9.999_999), "10.0000");
        assert_eq!(format_sig6(1.5e-7), "1.50000e-7");
        assert_eq!(format_sig6(0.0), "0");
    }

    fn row(method: Method, trial: usize, acc: f64) -> SweepRow {
        SweepRow {
            dataset: "blobs".into(),
            method,
            budget: 0.25,
            k: Some(2),
            n: Some(4),
            sparsity: Some(0.0),
            bits: Some(8),
            p: Some(0.1),
            fraction: Some(0.25),
            trial: Some(trial),
            accuracy: Some(acc),
            clean_accuracy: Some(0.95),
            seed: Some(100 + trial as u64),
            status: RowStatus::Ok,
        }
    }

    #[test]
    fn empty_sweep_is_refused() {
        assert!(results_to_csv(&SweepResult::default()).is_err());
    }

    #[test]
    fn three_row_fixture() {
        let mut infeasible = row(Method::LogHd, 0, 0.0);
        infeasible.k = Some(3);
        infeasible.n = None;
        infeasible.sparsity = None;
        infeasible.bits = None;
        infeasible.p = None;
        infeasible.fraction = None;
        infeasible.trial = None;
        infeasible.accuracy = None;
        infeasible.clean_accuracy = None;
        infeasible.seed = None;
        infeasible.status = RowStatus::Infeasible;
        let results = SweepResult {
            rows: vec![row(Method::LogHd, 0, 0.9125), row(Method::SparseHd, 1, 1.0 / 3.0), infeasible],
        };
        let expected = "\
dataset,method,budget,k,n,sparsity,bits,p,fraction,trial,accuracy,clean_accuracy,seed,status
blobs,loghd,0.250000,2,4,0,8,0.100000,0.250000,0,0.912500,0.950000,100,ok
blobs,sparsehd,0.250000,2,4,0,8,0.100000,0.250000,1,0.333333,0.950000,101,ok
blobs,loghd,0.250000,3,,,,,,,,,,infeasible
";
        assert_eq!(results_to_csv(&results).unwrap(), expected);
    }

    #[test]
    fn parse_back_matches() {
        let results = SweepResult {
            rows: vec![row(Method::Hybrid, 0, 0.875), row(Method::Conventional, 3, 0.5)],
        };
        let text = results_to_csv(&results).unwrap();
        let parsed = parse_results(&text).unwrap();
        assert_eq!(parsed, results);
        assert_eq!(results_to_csv(&parsed).unwrap(), text);
    }
}
