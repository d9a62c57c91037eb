//! Plain-text tables: whitespace- or comma-separated numeric columns in,
//! CSV with a stamped header out.

use std::io::{BufRead, Write};

use crate::{Error, Result};

/// Read rows of exactly `ncols` numbers. Blank lines and lines starting with
/// `#` are skipped; a first non-numeric row is treated as a column header.
pub fn read_columns<R: BufRead>(reader: R, ncols: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    let mut seen_data = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if !seen_data && rows.is_empty() && fields.iter().all(|f| f.parse::<f64>().is_err()) => {
                seen_data = true;
                continue;
            }
            Err(e) => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("invalid number: {e}"),
                })
            }
        };
        if values.len() != ncols {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {ncols} columns, found {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: lineno,
                message: "non-finite value".into(),
            });
        }
        seen_data = true;
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no data rows".into(),
        });
    }
    Ok(rows)
}

/// A CSV table with a leading `#` stamp line and optional trailing `#`
/// summary lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub stamp: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub footer: Vec<String>,
}

impl Table {
    pub fn new(stamp: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            stamp: stamp.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            footer: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {}", self.stamp)?;
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        for line in &self.footer {
            writeln!(w, "# {line}")?;
        }
        Ok(())
    }

    /// Parse a table written by [`Table::write_csv`].
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut stamp = String::new();
        let mut columns: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        let mut footer = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                if columns.is_none() && stamp.is_empty() {
                    stamp = rest.trim().to_string();
                } else {
                    footer.push(rest.trim().to_string());
                }
                continue;
            }
            match &columns {
                None => columns = Some(trimmed.split(',').map(|c| c.trim().to_string()).collect()),
                Some(cols) => {
                    let row = trimmed
                        .split(',')
                        .map(|c| c.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<f64>, _>>()
                        .map_err(|e| Error::Parse {
                            line: idx + 1,
                            message: e.to_string(),
                        })?;
                    if row.len() != cols.len() {
                        return Err(Error::Parse {
                            line: idx + 1,
                            message: format!("expected {} columns, found {}", cols.len(), row.len()),
                        });
                    }
                    rows.push(row);
                }
            }
        }
        Ok(Self {
            stamp,
            columns: columns.ok_or(Error::Parse {
                line: 0,
                message: "missing header".into(),
            })?,
            rows,
            footer,
        })
    }
}

/// Structured `key = value` report with a stamp line.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub stamp: String,
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn new(stamp: impl Into<String>) -> Self {
        Self {
            stamp: stamp.into(),
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, key: &str, value: impl std::fmt::Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# {}", self.stamp)?;
        for (k, v) in &self.entries {
            writeln!(w, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_mixed_separators_and_comments() {
        let text = "# comment\n\nV I\n1.0, 2.0\n3 4\n  5.5\t-6e-3\n";
        let rows = read_columns(text.as_bytes(), 2).unwrap();
        assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.5, -6e-3]]);
    }

    #[test]
    fn reports_bad_lines() {
        match read_columns("1 2\n3 x\n".as_bytes(), 2) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match read_columns("1 2 3\n".as_bytes(), 2) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        assert!(read_columns("# nothing\n".as_bytes(), 2).is_err());
        assert!(read_columns("1 nan\n".as_bytes(), 2).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut t = Table::new("preset=x seed=1", &["a", "b"]);
        t.push(vec![1.0, -2.5e-9]);
        t.push(vec![3.25, 4.0]);
        t.footer.push("summary x=1".into());
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = Table::read_csv(&buf[..]).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.column("b").unwrap(), vec![-2.5e-9, 4.0]);
        assert!(back.column("c").is_none());
    }
}
