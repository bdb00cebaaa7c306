//! Output directory bookkeeping: CSV tables, snapshots and the manifest.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use sbdf_core::snapshot::encode;
use sbdf_core::Field;
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// One CSV cell. Floats use the shortest representation that parses back
/// to the same bits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    F(f64),
    U(usize),
    Empty,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::F(v) => write!(f, "{v:?}"),
            Cell::U(v) => write!(f, "{v}"),
            Cell::Empty => Ok(()),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::F)
    }
}

pub struct Csv {
    columns: usize,
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            columns: header.len(),
            text: format!("{}\n", header.join(",")),
        }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        assert_eq!(cells.len(), self.columns, "csv row width");
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            write!(self.text, "{c}").expect("writing to a String cannot fail");
        }
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// SHA-256 over `blob <len>\0<bytes>`, the object id git uses for a file in
/// a SHA-256 repository.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Tracks every file written below `root` so the manifest can hash them.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<(String, String)>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|source| HarnessError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `bytes` to `root/name`; `name` may contain `/`.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        let io = |source| HarnessError::Io {
            path: path.clone(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        fs::write(&path, bytes).map_err(|source| HarnessError::Io {
            path: path.clone(),
            source,
        })?;
        self.written.retain(|(n, _)| n != name);
        self.written.push((name.to_string(), blob_hash(bytes)));
        Ok(path)
    }

    pub fn csv(&mut self, name: &str, csv: Csv) -> Result<PathBuf> {
        self.write(name, csv.into_string().as_bytes())
    }

    pub fn snapshot(&mut self, name: &str, field: &Field) -> Result<PathBuf> {
        self.write(name, &encode(field))
    }

    /// Writes `manifest.txt`: the command, the effective configuration,
    /// free-form notes and the hash of every file written so far.
    pub fn manifest(
        &mut self,
        command: &str,
        echo: &[(String, String)],
        notes: &[(String, String)],
    ) -> Result<PathBuf> {
        let mut text = format!("command = {command}\n\n[config]\n");
        for (k, v) in echo {
            writeln!(text, "{k} = {v}").unwrap();
        }
        text.push_str("\n[notes]\n");
        for (k, v) in notes {
            writeln!(text, "{k} = {v}").unwrap();
        }
        text.push_str("\n[outputs]\n");
        let mut files = self.written.clone();
        files.sort();
        for (name, hash) in files {
            writeln!(text, "{hash}  {name}").unwrap();
        }
        self.write("manifest.txt", text.as_bytes())
    }
}

/// File name of a snapshot taken at the configured time `label`.
pub fn snapshot_name(label: &str, suffix: Option<&str>) -> String {
    match suffix {
        Some(s) => format!("snapshot_t{label}_{s}.sbdfgrid"),
        None => format!("snapshot_t{label}.sbdfgrid"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn git_blob_ids() {
        // `git hash-object --object-format=sha256` on an empty file
        assert_eq!(
            blob_hash(b""),
            "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813"
        );
    }

    #[test]
    fn cells_round_trip() {
        for v in [0.1, 1.0, -2.5e-300, 6.02e23, 0.0] {
            let s = Cell::F(v).to_string();
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(Cell::Empty.to_string(), "");
        let mut c = Csv::new(&["a", "b"]);
        c.row(&[1usize.into(), None.into()]);
        assert_eq!(c.into_string(), "a,b\n1,\n");
    }
}
