//! Fixed-schema CSV for market data.
//!
//! Layout: a header `t,<name_1>,...,<name_m>` (names are free-form but may
//! not contain commas), then one line per session holding the session index
//! followed by `m` decimal values; UTF-8 with LF line endings (a trailing
//! `\r` per line is tolerated on read). Floats are written with Rust's
//! shortest round-trip formatting, so a written file parses back to
//! bit-identical values.

use std::fmt::Write as _;
use std::path::Path;

use upairs::{Error, ReturnSequence, Result};

/// How to interpret the data rows of an input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Rows are gross returns, used as-is.
    Returns,
    /// Rows are price levels; gross returns are the ratios of consecutive
    /// rows, so `T+1` price rows yield `T` return sessions.
    Prices,
}

fn read_error(path: &Path, detail: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("{}: {detail}", path.display()))
}

/// Reads a market CSV, converts prices to returns when asked, and keeps only
/// the first `keep` return sessions when `keep` is given.
pub fn read_market(path: &Path, mode: Mode, keep: Option<usize>) -> Result<ReturnSequence> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());

    let (_, header) = lines
        .next()
        .ok_or_else(|| read_error(path, "empty file; expected a header line"))?;
    let mut fields = header.split(',');
    let first = fields.next().unwrap_or("");
    if first.trim() != "t" {
        return Err(read_error(
            path,
            format!("header must start with a 't' column, found '{first}'"),
        ));
    }
    let names: Vec<&str> = fields.collect();
    let m = names.len();
    if m == 0 || names.iter().any(|n| n.trim().is_empty()) {
        return Err(read_error(path, "header needs at least one non-empty asset name"));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != m + 1 {
            return Err(read_error(
                path,
                format!(
                    "line {lineno} has {} fields, expected {} (session index + {m} assets)",
                    cells.len(),
                    m + 1
                ),
            ));
        }
        cells[0].trim().parse::<i64>().map_err(|_| {
            read_error(
                path,
                format!("line {lineno}: session index '{}' is not an integer", cells[0]),
            )
        })?;
        let mut row = Vec::with_capacity(m);
        for (j, cell) in cells[1..].iter().enumerate() {
            let value: f64 = cell.trim().parse().map_err(|_| {
                read_error(
                    path,
                    format!("line {lineno}, asset '{}': '{cell}' is not a number", names[j]),
                )
            })?;
            if !value.is_finite() || value < 0.0 {
                return Err(read_error(
                    path,
                    format!(
                        "line {lineno}, asset '{}': {value} — entries must be finite and >= 0",
                        names[j]
                    ),
                ));
            }
            row.push(value);
        }
        rows.push(row);
    }

    let mut returns = match mode {
        Mode::Returns => rows,
        Mode::Prices => {
            if rows.len() < 2 {
                return Err(read_error(
                    path,
                    format!("prices mode needs >= 2 price rows, found {}", rows.len()),
                ));
            }
            let mut out = Vec::with_capacity(rows.len() - 1);
            for t in 1..rows.len() {
                let mut row = Vec::with_capacity(m);
                for j in 0..m {
                    let prev = rows[t - 1][j];
                    if prev == 0.0 {
                        return Err(read_error(
                            path,
                            format!(
                                "cannot form the return of session {t}: asset '{}' had price 0 \
                                 in the previous row",
                                names[j]
                            ),
                        ));
                    }
                    row.push(rows[t][j] / prev);
                }
                out.push(row);
            }
            out
        }
    };

    if let Some(k) = keep {
        if k == 0 {
            return Err(Error::InvalidInput("requested T = 0; need >= 1 session".into()));
        }
        if k > returns.len() {
            return Err(Error::InvalidInput(format!(
                "requested T = {k} but {} holds only {} return sessions",
                path.display(),
                returns.len()
            )));
        }
        returns.truncate(k);
    }

    ReturnSequence::from_rows(returns)
}

/// Writes a return sequence in the schema above, with generated asset names.
pub fn write_market(path: &Path, seq: &ReturnSequence) -> Result<()> {
    let mut out = String::new();
    out.push('t');
    for j in 1..=seq.assets() {
        write!(out, ",asset_{j}").expect("string write");
    }
    out.push('\n');
    for (t, row) in seq.iter_rows().enumerate() {
        write!(out, "{}", t + 1).expect("string write");
        for &x in row {
            write!(out, ",{x}").expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(path, out)
        .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn temp_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().expect("temp file");
        f.write_all(content.as_bytes()).expect("write");
        f
    }

    #[test]
    fn returns_mode_is_an_exact_passthrough() {
        let f = temp_csv("t,a,b\n1,1.25,0.8\n2,0.1,3.5\n");
        let seq = read_market(f.path(), Mode::Returns, None).unwrap();
        assert_eq!(seq.sessions(), 2);
        assert_eq!(seq.assets(), 2);
        assert_eq!(seq.row(0), &[1.25, 0.8]);
        assert_eq!(seq.row(1), &[0.1, 3.5]);
    }

    #[test]
    fn prices_mode_differences_consecutive_rows() {
        let f = temp_csv("t,a,b\n0,1,2\n1,2,1\n2,4,0.5\n");
        let seq = read_market(f.path(), Mode::Prices, None).unwrap();
        assert_eq!(seq.sessions(), 2, "3 price rows make 2 return rows");
        assert_eq!(seq.row(0), &[2.0, 0.5]);
        assert_eq!(seq.row(1), &[2.0, 0.5]);
    }

    #[test]
    fn prices_mode_rejects_a_zero_previous_price() {
        let f = temp_csv("t,a,b\n0,1,0\n1,2,1\n");
        let err = read_market(f.path(), Mode::Prices, None).unwrap_err();
        assert!(err.to_string().contains("price 0"), "{err}");
    }

    #[test]
    fn truncation_keeps_a_prefix_and_rejects_overshoot() {
        let f = temp_csv("t,a\n1,1\n2,2\n3,3\n");
        let seq = read_market(f.path(), Mode::Returns, Some(2)).unwrap();
        assert_eq!(seq.sessions(), 2);
        assert_eq!(seq.row(1), &[2.0]);
        let err = read_market(f.path(), Mode::Returns, Some(5)).unwrap_err();
        assert!(err.to_string().contains("only 3"), "{err}");
    }

    #[test]
    fn malformed_cells_name_the_line_and_asset() {
        let ragged = temp_csv("t,a,b\n1,1.0\n");
        let err = read_market(ragged.path(), Mode::Returns, None).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");

        let bad_cell = temp_csv("t,a,b\n1,1.0,two\n");
        let err = read_market(bad_cell.path(), Mode::Returns, None).unwrap_err();
        assert!(
            err.to_string().contains("line 2") && err.to_string().contains("'b'"),
            "{err}"
        );

        let negative = temp_csv("t,a,b\n1,1.0,-0.5\n");
        let err = read_market(negative.path(), Mode::Returns, None).unwrap_err();
        assert!(err.to_string().contains(">= 0"), "{err}");

        let zero_row = temp_csv("t,a,b\n1,1.0,1.0\n2,0,0\n");
        let err = read_market(zero_row.path(), Mode::Returns, None).unwrap_err();
        assert!(err.to_string().contains("all-zero"), "{err}");
    }

    #[test]
    fn crlf_and_blank_lines_are_tolerated() {
        let f = temp_csv("t,a,b\r\n1,1.5,0.5\r\n\n2,0.5,1.5\r\n\n");
        let seq = read_market(f.path(), Mode::Returns, None).unwrap();
        assert_eq!(seq.sessions(), 2);
        assert_eq!(seq.row(0), &[1.5, 0.5]);
    }

    #[test]
    fn write_then_read_is_bit_identical() {
        let rows = vec![
            vec![1.0 / 3.0, std::f64::consts::PI, 1e-300],
            vec![0.1 + 0.2, 2.0f64.sqrt(), 7.0],
        ];
        let seq = ReturnSequence::from_rows(rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("market.csv");
        write_market(&path, &seq).unwrap();
        let back = read_market(&path, Mode::Returns, None).unwrap();
        assert_eq!(back.assets(), seq.assets());
        for t in 0..seq.sessions() {
            for j in 0..seq.assets() {
                assert_eq!(
                    back.get(t, j).to_bits(),
                    seq.get(t, j).to_bits(),
                    "entry ({t},{j}) must round-trip exactly"
                );
            }
        }
    }
}
