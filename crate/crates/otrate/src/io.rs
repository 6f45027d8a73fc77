//! Measure files (`w,x1,...,xd`) and result tables.

use std::io::{Read, Write};
use std::path::Path;

use otrate_core::experiment::GapBracket;
use otrate_core::DiscreteMeasure;

use crate::error::{HarnessError, HarnessResult};

fn parse_error(name: &str, line: u64, msg: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        path: name.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Reads a measure from CSV with header `w,x1,...,xd`; `name` labels errors.
pub fn read_measure<R: Read>(reader: R, name: &str) -> HarnessResult<DiscreteMeasure> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| parse_error(name, 1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.first() != Some(&"w") {
        return Err(parse_error(name, 1, "header must start with column `w`"));
    }
    let dim = cols.len() - 1;
    if dim == 0 {
        return Err(parse_error(name, 1, "header has no coordinate columns"));
    }
    for (k, c) in cols[1..].iter().enumerate() {
        if *c != format!("x{}", k + 1) {
            return Err(parse_error(name, 1, format!("expected column `x{}`, found `{c}`", k + 1)));
        }
    }
    let mut weights = Vec::new();
    let mut coords = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_error(name, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let mut vals = Vec::with_capacity(rec.len());
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(name, line, format!("not a number: `{field}`")))?;
            vals.push(v);
        }
        weights.push(vals[0]);
        coords.extend_from_slice(&vals[1..]);
    }
    if weights.is_empty() {
        return Err(parse_error(name, 1, "no atoms"));
    }
    Ok(DiscreteMeasure::from_flat(dim, coords, weights)?)
}

pub fn load_measure(path: &Path) -> HarnessResult<DiscreteMeasure> {
    let file = std::fs::File::open(path)?;
    read_measure(file, &path.display().to_string())
}

/// Writes a measure with shortest round-trip float formatting.
pub fn write_measure<W: Write>(mu: &DiscreteMeasure, writer: W) -> HarnessResult<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["w".to_string()];
    header.extend((1..=mu.dim()).map(|k| format!("x{k}")));
    w.write_record(&header).map_err(csv_io)?;
    for i in 0..mu.len() {
        let mut row = vec![format!("{:?}", mu.weight(i))];
        row.extend(mu.point(i).iter().map(|x| format!("{x:?}")));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_measure(mu: &DiscreteMeasure, path: &Path) -> HarnessResult<()> {
    write_measure(mu, std::fs::File::create(path)?)
}

fn csv_io(e: csv::Error) -> HarnessError {
    HarnessError::Io(std::io::Error::other(e))
}

pub const RESULTS_HEADER: [&str; 8] = ["eps", "gap", "lower", "upper", "candidate_kind", "ot_value", "reg_value", "iters"];

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes gap brackets sorted by `eps` descending, floats with 17
/// significant digits.
pub fn write_results<W: Write>(results: &[GapBracket], writer: W) -> HarnessResult<()> {
    let mut rows: Vec<&GapBracket> = results.iter().collect();
    rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULTS_HEADER).map_err(csv_io)?;
    for b in rows {
        w.write_record([
            sci(b.eps),
            sci(b.gap),
            sci(b.lower),
            sci(b.upper),
            b.candidate_kind.as_str().to_string(),
            sci(b.ot_value),
            sci(b.reg_value),
            b.iters.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(results: &[GapBracket], path: &Path) -> HarnessResult<()> {
    write_results(results, std::fs::File::create(path)?)
}

/// One row of a results table, as read back for offline fits.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub eps: f64,
    pub gap: f64,
    pub lower: f64,
    pub upper: f64,
    pub candidate_kind: String,
    pub ot_value: f64,
    pub reg_value: f64,
    pub iters: usize,
}

pub fn read_results<R: Read>(reader: R, name: &str) -> HarnessResult<Vec<ResultRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| parse_error(name, 1, e.to_string()))?
        .clone();
    if header.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(parse_error(name, 1, format!("expected header `{}`", RESULTS_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_error(name, line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let num = |k: usize| -> HarnessResult<f64> {
            rec[k]
                .parse()
                .map_err(|_| parse_error(name, line, format!("column `{}` is not a number: `{}`", RESULTS_HEADER[k], &rec[k])))
        };
        out.push(ResultRow {
            eps: num(0)?,
            gap: num(1)?,
            lower: num(2)?,
            upper: num(3)?,
            candidate_kind: rec[4].to_string(),
            ot_value: num(5)?,
            reg_value: num(6)?,
            iters: rec[7]
                .parse()
                .map_err(|_| parse_error(name, line, format!("column `iters` is not an integer: `{}`", &rec[7])))?,
        });
    }
    Ok(out)
}

pub fn load_results(path: &Path) -> HarnessResult<Vec<ResultRow>> {
    read_results(std::fs::File::open(path)?, &path.display().to_string())
}
