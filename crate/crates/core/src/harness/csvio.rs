//! CSV input and output: observation matrices in, result tables out.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::eval::PerfCurve;
use crate::matrix::DataMatrix;

/// Decimal rendering with at most 10 significant digits. Re-parsing and
/// re-rendering gives the same text.
pub fn sig10(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.9e}").parse().expect("scientific notation parses");
    format!("{rounded}")
}

fn parse_cell(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    t.parse::<f64>().ok()
}

/// Parses numeric CSV: rows are observations. A first row with any
/// non-numeric cell is taken as a header and skipped.
pub fn parse_data_csv(text: &str) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<(usize, usize)> = None;
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(k + 1, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let cells: Vec<Option<f64>> = rec.iter().map(parse_cell).collect();
        if rows.is_empty() && width.is_none() && cells.iter().any(Option::is_none) {
            width = Some((rec.len(), line));
            continue;
        }
        if let Some((w, at)) = width {
            if rec.len() != w {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} fields (as on line {at}), found {}", rec.len()),
                });
            }
        } else {
            width = Some((rec.len(), line));
        }
        let mut row = Vec::with_capacity(cells.len());
        for (col, (c, raw)) in cells.into_iter().zip(rec.iter()).enumerate() {
            match c {
                Some(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(Error::Parse {
                        line,
                        message: format!("column {}: {raw:?} is not a finite number", col + 1),
                    })
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no numeric rows".into(),
        });
    }
    DataMatrix::from_rows(&rows)
}

pub fn read_data_csv(path: &Path) -> Result<DataMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_data_csv(&text).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Writes a data matrix as headerless CSV.
pub fn write_data_csv(x: &DataMatrix, mut out: impl Write) -> std::io::Result<()> {
    let v = x.values();
    for i in 0..x.n() {
        let row: Vec<String> = (0..x.p()).map(|j| format!("{}", v[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub const PLOT_HEADER: [&str; 7] = ["scenario", "n", "method", "param", "power_mean", "fdr_mean", "auc"];

/// One row of the long-format curve file.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotRow {
    pub scenario: String,
    pub n: usize,
    pub method: Method,
    pub param: f64,
    pub power_mean: f64,
    pub fdr_mean: f64,
    pub auc: f64,
}

/// Long-format rows, grouped by method in canonical order; within a method
/// curves keep their input order and points their grid order.
pub fn plot_rows(curves: &[PerfCurve]) -> Vec<PlotRow> {
    let mut rows = Vec::new();
    for m in Method::ALL {
        for c in curves.iter().filter(|c| c.method == m) {
            for p in &c.points {
                rows.push(PlotRow {
                    scenario: c.scenario.clone(),
                    n: c.n,
                    method: c.method,
                    param: p.param,
                    power_mean: p.power,
                    fdr_mean: p.fdr,
                    auc: c.auc,
                });
            }
        }
    }
    rows
}

pub fn write_plot_csv(curves: &[PerfCurve], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidData(e.to_string());
    w.write_record(PLOT_HEADER).map_err(io)?;
    for r in plot_rows(curves) {
        w.write_record([
            r.scenario,
            r.n.to_string(),
            r.method.to_string(),
            sig10(r.param),
            sig10(r.power_mean),
            sig10(r.fdr_mean),
            sig10(r.auc),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidData(e.to_string()))
}

/// Writes the curve file to `path`.
pub fn emit_plot_data(curves: &[PerfCurve], path: &Path) -> Result<()> {
    if curves.is_empty() {
        return Err(Error::arg("no curves to write"));
    }
    let mut buf = Vec::new();
    write_plot_csv(curves, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn parse_plot_csv(text: &str) -> Result<Vec<PlotRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(PLOT_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", PLOT_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |what: &str, v: &str| Error::Parse {
            line,
            message: format!("invalid {what} {v:?}"),
        };
        let num = |k: usize, what: &str| -> Result<f64> {
            rec[k].parse::<f64>().map_err(|_| bad(what, &rec[k]))
        };
        out.push(PlotRow {
            scenario: rec[0].to_string(),
            n: rec[1].parse().map_err(|_| bad("n", &rec[1]))?,
            method: rec[2].parse().map_err(|_| bad("method", &rec[2]))?,
            param: num(3, "param")?,
            power_mean: num(4, "power_mean")?,
            fdr_mean: num(5, "fdr_mean")?,
            auc: num(6, "auc")?,
        });
    }
    Ok(out)
}
