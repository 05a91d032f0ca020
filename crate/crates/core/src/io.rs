//! Plain-text tabular I/O: comma separated, one header row with units.

use std::io::{BufRead, Write};

use crate::error::{domain, Error, Result};
use crate::scalar::Real;

/// Writes equally long columns as CSV.
///
/// An optional manifest reference is emitted first as a `#` comment line.
/// Numbers use Rust's shortest round-trip exponent format so identical
/// values always produce identical bytes.
pub fn write_columns<T: Real, W: Write>(
    mut out: W,
    header: &[&str],
    columns: &[&[T]],
    manifest: Option<&str>,
) -> Result<()> {
    if header.len() != columns.len() {
        return domain("header and column counts differ");
    }
    let rows = columns.first().map_or(0, |c| c.len());
    if columns.iter().any(|c| c.len() != rows) {
        return domain("columns have different lengths");
    }
    if let Some(m) = manifest {
        writeln!(out, "# manifest: {m}")?;
    }
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for r in 0..rows {
        line.clear();
        for (c, col) in columns.iter().enumerate() {
            if c > 0 {
                line.push(',');
            }
            line.push_str(&format!("{:e}", col[r].as_f64()));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the first two numeric columns of a CSV stream.
///
/// Blank lines and `#` comments are skipped, as is a non-numeric first data
/// line (a header). Any later malformed row is an error naming its line.
pub fn read_two_columns<R: BufRead>(input: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut seen_row = false;
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed
            .split(|c: char| c == ',' || c == ';' || c == '\t' || c == ' ')
            .filter(|f| !f.is_empty());
        let parsed = match (fields.next(), fields.next()) {
            (Some(a), Some(b)) => a.trim().parse::<f64>().and_then(|x| Ok((x, b.trim().parse::<f64>()?))),
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    message: "expected two columns".into(),
                })
            }
        };
        match parsed {
            Ok((x, y)) if x.is_finite() && y.is_finite() => {
                xs.push(x);
                ys.push(y);
                seen_row = true;
            }
            Ok(_) => {
                return Err(Error::Parse {
                    line: lineno,
                    message: "non-finite value".into(),
                })
            }
            Err(_) if !seen_row && xs.is_empty() => {
                // header row
                seen_row = true;
            }
            Err(e) => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("malformed number: {e}"),
                })
            }
        }
    }
    Ok((xs, ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_comments_skipped() {
        let text = "# manifest: m.json\ntime_ps,value\n0,1\n0.5, 2\n\n1e0,3\n";
        let (x, y) = read_two_columns(text.as_bytes()).unwrap();
        assert_eq!(x, vec![0.0, 0.5, 1.0]);
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "t,v\n0,1\n1,abc\n";
        match read_two_columns(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match read_two_columns("0,1\n2\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn written_csv_reads_back() {
        let mut buf = Vec::new();
        write_columns(&mut buf, &["t_ps", "v"], &[&[0.0, 0.1], &[1.5e-7, -2.0]], Some("x.json")).unwrap();
        let (x, y) = read_two_columns(buf.as_slice()).unwrap();
        assert_eq!(x, vec![0.0, 0.1]);
        assert_eq!(y, vec![1.5e-7, -2.0]);
    }
}
