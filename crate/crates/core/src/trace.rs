//! Solver traces and their CSV form.
//!
//! A trace file is a block of `# key=value` header lines followed by a CSV
//! table with the fixed columns in [`COLUMNS`]. Floats are written in the
//! shortest form that parses back to the same value; absent values are
//! empty fields.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{OsgmError, Result};

pub const COLUMNS: [&str; 10] = [
    "k",
    "f_gap",
    "grad_norm",
    "feedback",
    "progress",
    "eta",
    "drift",
    "potential_phi",
    "potential_omega",
    "oracle_calls",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIters,
    Stationary,
    Diverged,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::MaxIters => "max_iters",
            Status::Stationary => "stationary",
            Status::Diverged => "diverged",
        })
    }
}

impl FromStr for Status {
    type Err = OsgmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "converged" => Ok(Status::Converged),
            "max_iters" => Ok(Status::MaxIters),
            "stationary" => Ok(Status::Stationary),
            "diverged" => Ok(Status::Diverged),
            _ => Err(OsgmError::Parse(format!("unknown status `{s}`"))),
        }
    }
}

/// One iteration, describing the state at x^k and the step taken from it.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub f_gap: Option<f64>,
    pub grad_norm: f64,
    pub feedback: Option<f64>,
    /// r_k for ratio runs, h_k otherwise.
    pub progress: Option<f64>,
    pub eta: Option<f64>,
    /// ‖P_k − P₁‖ in the stepsize's parameter space.
    pub drift: Option<f64>,
    pub potential_phi: Option<f64>,
    pub potential_omega: Option<f64>,
    /// Cumulative function plus gradient evaluations after this iteration.
    pub oracle_calls: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub method: String,
    pub problem: String,
    pub dim: usize,
    pub smoothness: f64,
    pub strong_convexity: f64,
    pub kappa: Option<f64>,
    pub kappa_star: Option<f64>,
    pub f_star: Option<f64>,
    pub f_star_estimated: bool,
    /// Ordered `config.<key>` entries.
    pub config: Vec<(String, String)>,
    pub note: Option<String>,
    pub status: Status,
    pub final_f_gap: Option<f64>,
    pub final_grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub header: TraceHeader,
    pub rows: Vec<TraceRow>,
}

impl SolverTrace {
    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    /// f(x^k) − f* for k = 1..K+1 (the last entry is the final iterate).
    pub fn gaps(&self) -> Option<Vec<f64>> {
        let mut out: Vec<f64> = self.rows.iter().map(|r| r.f_gap).collect::<Option<_>>()?;
        out.push(self.header.final_f_gap?);
        Some(out)
    }

    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.header.config.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let h = &self.header;
        let mut lines = vec![
            ("method".to_string(), h.method.clone()),
            ("problem".to_string(), h.problem.clone()),
            ("dim".to_string(), h.dim.to_string()),
            ("L".to_string(), fmt_f64(h.smoothness)),
            ("mu".to_string(), fmt_f64(h.strong_convexity)),
            ("kappa".to_string(), fmt_opt(h.kappa)),
            ("kappa_star".to_string(), fmt_opt(h.kappa_star)),
            ("f_star".to_string(), fmt_opt(h.f_star)),
            ("f_star_estimated".to_string(), h.f_star_estimated.to_string()),
        ];
        lines.extend(h.config.iter().map(|(k, v)| (format!("config.{k}"), v.clone())));
        if let Some(note) = &h.note {
            lines.push(("note".to_string(), note.clone()));
        }
        lines.push(("status".to_string(), h.status.to_string()));
        lines.push(("final_f_gap".to_string(), fmt_opt(h.final_f_gap)));
        lines.push(("final_grad_norm".to_string(), fmt_f64(h.final_grad_norm)));
        for (k, v) in &lines {
            if v.contains('\n') || k.contains('=') {
                return Err(OsgmError::InvalidConfig(format!("header entry `{k}` cannot be serialized")));
            }
            writeln!(out, "# {k}={v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COLUMNS).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.k.to_string(),
                fmt_opt(r.f_gap),
                fmt_f64(r.grad_norm),
                fmt_opt(r.feedback),
                fmt_opt(r.progress),
                fmt_opt(r.eta),
                fmt_opt(r.drift),
                fmt_opt(r.potential_phi),
                fmt_opt(r.potential_omega),
                r.oracle_calls.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| OsgmError::Parse(e.to_string()))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut header_lines = Vec::new();
        let mut body = String::new();
        let mut line = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                break;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim_end_matches(['\n', '\r']);
                let rest = rest.strip_prefix(' ').unwrap_or(rest);
                let (k, v) = rest
                    .split_once('=')
                    .ok_or_else(|| OsgmError::Parse(format!("malformed header line `{}`", line.trim_end())))?;
                header_lines.push((k.to_string(), v.to_string()));
            } else {
                body.push_str(&line);
                reader.read_to_string(&mut body)?;
                break;
            }
        }
        let header = parse_header(&header_lines)?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let cols = rdr.headers().map_err(csv_err)?.clone();
        if cols.iter().ne(COLUMNS.iter().copied()) {
            return Err(OsgmError::Parse(format!("unexpected trace columns `{}`", cols.iter().collect::<Vec<_>>().join(","))));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let field = |j: usize| rec.get(j).unwrap_or("");
            let ctx = |j: usize| format!("row {} column {}", i + 1, COLUMNS[j]);
            rows.push(TraceRow {
                k: parse_req(field(0), &ctx(0))?,
                f_gap: parse_opt(field(1), &ctx(1))?,
                grad_norm: parse_req(field(2), &ctx(2))?,
                feedback: parse_opt(field(3), &ctx(3))?,
                progress: parse_opt(field(4), &ctx(4))?,
                eta: parse_opt(field(5), &ctx(5))?,
                drift: parse_opt(field(6), &ctx(6))?,
                potential_phi: parse_opt(field(7), &ctx(7))?,
                potential_omega: parse_opt(field(8), &ctx(8))?,
                oracle_calls: parse_req(field(9), &ctx(9))?,
            });
        }
        Ok(SolverTrace { header, rows })
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        Self::read_csv(text.as_bytes())
    }

    /// Writes through a temporary file in the same directory, then renames.
    pub fn write_csv_atomic(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = self.to_csv_string()?;
        write_atomic(path.as_ref(), text.as_bytes())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| OsgmError::Io(e.error))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> OsgmError {
    OsgmError::Parse(format!("csv: {e}"))
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn parse_req<T: FromStr>(s: &str, ctx: &str) -> Result<T> {
    s.parse().map_err(|_| OsgmError::Parse(format!("{ctx}: cannot parse `{s}`")))
}

fn parse_opt(s: &str, ctx: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_req(s, ctx).map(Some)
    }
}

fn parse_header(lines: &[(String, String)]) -> Result<TraceHeader> {
    let get = |key: &str| -> Result<&str> {
        lines
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| OsgmError::Parse(format!("trace header is missing `{key}`")))
    };
    let ctx = |key: &str| format!("header `{key}`");
    Ok(TraceHeader {
        method: get("method")?.to_string(),
        problem: get("problem")?.to_string(),
        dim: parse_req(get("dim")?, &ctx("dim"))?,
        smoothness: parse_req(get("L")?, &ctx("L"))?,
        strong_convexity: parse_req(get("mu")?, &ctx("mu"))?,
        kappa: parse_opt(get("kappa")?, &ctx("kappa"))?,
        kappa_star: parse_opt(get("kappa_star")?, &ctx("kappa_star"))?,
        f_star: parse_opt(get("f_star")?, &ctx("f_star"))?,
        f_star_estimated: parse_req(get("f_star_estimated")?, &ctx("f_star_estimated"))?,
        config: lines
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("config.").map(|k| (k.to_string(), v.clone())))
            .collect(),
        note: lines.iter().find(|(k, _)| k == "note").map(|(_, v)| v.clone()),
        status: get("status")?.parse()?,
        final_f_gap: parse_opt(get("final_f_gap")?, &ctx("final_f_gap"))?,
        final_grad_norm: parse_req(get("final_grad_norm")?, &ctx("final_grad_norm"))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SolverTrace {
        SolverTrace {
            header: TraceHeader {
                method: "lookahead-osgm-r".into(),
                problem: "tridiagonal:3".into(),
                dim: 3,
                smoothness: 3.414213562373095,
                strong_convexity: 0.5857864376269049,
                kappa: Some(5.828427124746186),
                kappa_star: None,
                f_star: Some(0.0),
                f_star_estimated: false,
                config: vec![("set".into(), "box:0,0.5".into()), ("eta".into(), "4.2e-2".into())],
                note: None,
                status: Status::MaxIters,
                final_f_gap: Some(1.0e-300),
                final_grad_norm: 3.0e-151,
            },
            rows: vec![
                TraceRow {
                    k: 1,
                    f_gap: Some(0.1 + 0.2),
                    grad_norm: 1.0 / 3.0,
                    feedback: Some(-0.0),
                    progress: None,
                    eta: Some(f64::MIN_POSITIVE),
                    drift: Some(0.0),
                    potential_phi: Some(-12.5),
                    potential_omega: None,
                    oracle_calls: 4,
                },
                TraceRow {
                    k: 2,
                    f_gap: Some(5e-324),
                    grad_norm: 1e300,
                    feedback: None,
                    progress: Some(0.999999999999),
                    eta: None,
                    drift: None,
                    potential_phi: None,
                    potential_omega: Some(7.0),
                    oracle_calls: 8,
                },
            ],
        }
    }

    #[test]
    fn round_trip() {
        let t = sample();
        let text = t.to_csv_string().unwrap();
        let back = SolverTrace::from_csv_str(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_csv_string().unwrap(), text);
        assert!(text.starts_with("# method=lookahead-osgm-r\n"));
        assert!(text.contains("\nk,f_gap,grad_norm,feedback,progress,eta,drift,potential_phi,potential_omega,oracle_calls\n"));
    }

    #[test]
    fn rejects_wrong_columns() {
        let text = sample().to_csv_string().unwrap().replace("oracle_calls\n", "calls\n");
        assert!(SolverTrace::from_csv_str(&text).is_err());
    }
}
