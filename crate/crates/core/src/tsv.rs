//! Tab-separated table helpers shared by the exporters.

use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TsvError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
}

/// Header plus rows of a TSV file, `#` comment lines collected separately.
#[derive(Debug, Clone)]
pub struct Table {
    pub path: String,
    pub comments: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, TsvError> {
        let display = path.display().to_string();
        let io = |source| TsvError::Io {
            path: display.clone(),
            source,
        };
        let file = std::fs::File::open(path).map_err(io)?;
        let mut comments = Vec::new();
        let mut header = None;
        let mut rows = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                comments.push(c.trim().to_string());
                continue;
            }
            let cells: Vec<String> = line.split('\t').map(str::to_string).collect();
            if header.is_none() {
                header = Some(cells);
            } else {
                rows.push((i + 1, cells));
            }
        }
        let header = header.ok_or_else(|| TsvError::Malformed {
            path: display.clone(),
            line: 0,
            message: "missing header".into(),
        })?;
        Ok(Self {
            path: display,
            comments,
            header,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Result<usize, TsvError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TsvError::Malformed {
                path: self.path.clone(),
                line: 1,
                message: format!("missing column `{name}`"),
            })
    }

    pub fn malformed(&self, line: usize, message: impl Into<String>) -> TsvError {
        TsvError::Malformed {
            path: self.path.clone(),
            line,
            message: message.into(),
        }
    }

    pub fn cell<'a>(&self, row: &'a (usize, Vec<String>), col: usize) -> Result<&'a str, TsvError> {
        row.1
            .get(col)
            .map(String::as_str)
            .ok_or_else(|| self.malformed(row.0, format!("missing cell {col}")))
    }

    pub fn parse<T: std::str::FromStr>(&self, row: &(usize, Vec<String>), col: usize) -> Result<T, TsvError> {
        let raw = self.cell(row, col)?;
        raw.parse()
            .map_err(|_| self.malformed(row.0, format!("cannot parse `{raw}`")))
    }

    /// `NA` reads as `None`.
    pub fn parse_opt<T: std::str::FromStr>(
        &self,
        row: &(usize, Vec<String>),
        col: usize,
    ) -> Result<Option<T>, TsvError> {
        if self.cell(row, col)? == "NA" {
            Ok(None)
        } else {
            self.parse(row, col).map(Some)
        }
    }
}

pub fn fixed(value: Option<f64>, decimals: usize) -> String {
    match value {
        Some(v) if v.is_finite() => {
            let s = format!("{v:.decimals$}");
            // avoid "-0.0000"
            if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
                s.trim_start_matches('-').to_string()
            } else {
                s
            }
        }
        _ => "NA".to_string(),
    }
}

pub fn sci(value: Option<f64>) -> String {
    match value {
        Some(v) if v.is_finite() => format!("{v:.6e}"),
        _ => "NA".to_string(),
    }
}

pub fn write_file(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, contents)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_formatting() {
        assert_eq!(fixed(Some(0.28641), 4), "0.2864");
        assert_eq!(fixed(Some(-0.00001), 4), "0.0000");
        assert_eq!(fixed(Some(-9.14), 1), "-9.1");
        assert_eq!(fixed(None, 4), "NA");
        assert_eq!(fixed(Some(f64::NAN), 2), "NA");
    }
}
