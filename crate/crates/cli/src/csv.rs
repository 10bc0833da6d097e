//! RFC-4180 style CSV with 17 significant digits, so every double survives
//! a write/read cycle exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::{CliError, CliResult};

/// `{:.16e}` keeps 17 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn check_finite(rows: &[Vec<f64>]) -> CliResult<()> {
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::Numerical("non-finite value in CSV output".into()));
    }
    Ok(())
}

/// Header line followed by one line per row, CRLF-free.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> CliResult<()> {
    check_finite(rows)?;
    if rows.iter().any(|r| r.len() != header.len()) {
        return Err(CliError::Config("CSV row width differs from header".into()));
    }
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "{}", header.iter().map(|h| quote(h)).collect::<Vec<_>>().join(","))?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        writeln!(f, "{}", line.join(","))?;
    }
    f.flush()?;
    Ok(())
}

/// A square or rectangular matrix with header `c0,c1,…`.
pub fn write_matrix(path: &Path, rows: &[Vec<f64>]) -> CliResult<()> {
    let width = rows.first().map_or(0, Vec::len);
    let names: Vec<String> = (0..width).map(|i| format!("c{i}")).collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    write_table(path, &header, rows)
}

/// Text-keyed rows: `name,value` pairs under the header `metric,value`.
pub fn write_metrics(path: &Path, metrics: &[(String, f64)]) -> CliResult<()> {
    check_finite(&[metrics.iter().map(|m| m.1).collect()])?;
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "metric,value")?;
    for (name, v) in metrics {
        writeln!(f, "{},{}", quote(name), format_value(*v))?;
    }
    f.flush()?;
    Ok(())
}

/// Splits one CSV record, honouring double-quoted fields.
pub fn split_record(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(ch) = chars.next() {
        match (ch, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => out.push(std::mem::take(&mut cur)),
            _ => cur.push(ch),
        }
    }
    out.push(cur);
    out
}

/// Header and numeric rows of a file written by [`write_table`].
pub fn read_table(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => split_record(&l?),
        None => return Err(CliError::Data(format!("{}: empty CSV", path.display()))),
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let row = split_record(&line)
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Data(format!("{}: line {}: {e}", path.display(), i + 2)))?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Rows of a `metric,value` file.
pub fn read_metrics(path: &Path) -> CliResult<Vec<(String, f64)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines().skip(1) {
        let rec = split_record(&line?);
        if rec.len() != 2 {
            return Err(CliError::Data(format!("{}: malformed metric row", path.display())));
        }
        let v = rec[1].parse().map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        out.push((rec[0].clone(), v));
    }
    Ok(out)
}
