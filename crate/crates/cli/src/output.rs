use std::fs;
use std::path::{Path, PathBuf};

use sirvs_core::dynamics::Trajectory;
use sirvs_core::error::{Error, Result};

/// 17 significant digits, enough to round-trip any double.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(format!("{other:?}")),
        },
    }
}

/// Output directory; every written file is recorded for the manifest.
pub struct Bundle {
    dir: PathBuf,
    files: Vec<String>,
}

impl Bundle {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Bundle {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(header).map_err(|e| csv_err(&path, e))?;
        for row in rows {
            w.write_record(row).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(io_err(&path))?;
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))?;
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn trajectory(&mut self, tr: &Trajectory, h: f64) -> Result<PathBuf> {
        let rows: Vec<Vec<String>> = tr
            .states
            .iter()
            .enumerate()
            .map(|(k, s)| vec![num(tr.time(k)), num(s.s), num(s.i), num(s.r), num(s.v)])
            .collect();
        self.csv(&trajectory_name(tr, h), &["t", "S", "I", "R", "V"], &rows)
    }
}

pub fn trajectory_name(tr: &Trajectory, h: f64) -> String {
    format!("trajectory_{}_h{h}.csv", tr.method.name())
}
