use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Reported case counts at increasing times.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservedSeries {
    pub times: Vec<f64>,
    pub cases: Vec<f64>,
    pub label: String,
}

impl ObservedSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub fn load_observed(path: &Path) -> Result<ObservedSeries> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_observed(&text, path, label)
}

/// Parse `t,cases` text. Row numbers in errors count the header as row 1.
pub fn parse_observed(text: &str, origin: &Path, label: impl Into<String>) -> Result<ObservedSeries> {
    let fail = |message: String| Error::Parse {
        path: origin.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| fail(format!("row 1: {e}")))?;
    if header.len() != 2 || &header[0] != "t" || &header[1] != "cases" {
        return Err(fail(format!(
            "row 1: expected header `t,cases`, got `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut times: Vec<f64> = Vec::new();
    let mut cases = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 2;
        let record = record.map_err(|e| fail(format!("row {row}: {e}")))?;
        let field = |i: usize, name: &str| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| fail(format!("row {row}: `{name}` is not a finite number: `{}`", &record[i])))
        };
        let t = field(0, "t")?;
        let c = field(1, "cases")?;
        if c < 0.0 {
            return Err(fail(format!("row {row}: cases must be nonnegative, got {c}")));
        }
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(fail(format!(
                    "row {row}: times must be strictly increasing ({t} after {prev})"
                )));
            }
        }
        times.push(t);
        cases.push(c);
    }
    if times.is_empty() {
        return Err(fail("no data rows".into()));
    }
    Ok(ObservedSeries {
        times,
        cases,
        label: label.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ObservedSeries> {
        parse_observed(text, Path::new("obs.csv"), "obs")
    }

    #[test]
    fn minimal_file() {
        let s = parse("t,cases\n0,106\n1,98").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.cases, vec![106.0, 98.0]);
        assert_eq!(parse("t,cases\r\n0,106\r\n1,98\r\n").unwrap().len(), 2);
    }

    #[test]
    fn rejects_bad_rows() {
        let err = parse("t,cases\n0,106\n0,98").unwrap_err().to_string();
        assert!(err.contains("row 3") && err.contains("increasing"), "{err}");
        let err = parse("t,cases\n0,106\n1,abc").unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");
        let err = parse("t,cases\n0,106,7").unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
        assert!(parse("time,cases\n0,1").is_err());
        assert!(parse("t,cases\n0,-1").is_err());
        assert!(parse("t,cases\n").is_err());
    }
}
