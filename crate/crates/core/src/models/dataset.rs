use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major features with one real target per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    d: usize,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 && !y.is_empty() {
            return Err(Error::DimMismatch { expected: 1, got: 0 });
        }
        if x.len() != y.len() * d {
            return Err(Error::LengthMismatch { left: x.len(), right: y.len() * d });
        }
        Ok(Self { x, y, d })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn target(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn features(&self) -> &[f64] {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }
}

/// JSON sidecar written next to a persisted dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: String,
    pub seed: Option<u64>,
    pub n: usize,
    pub d: usize,
    #[serde(default)]
    pub params: serde_json::Value,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `x_0, .., x_{d-1}, y` rows plus a header, and the sidecar.
pub fn save_dataset(path: &Path, data: &Dataset, meta: &DatasetMeta) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(data.dim() + 1);
    for i in 0..data.len() {
        rec.clear();
        rec.extend(data.row(i).iter().map(|v| v.to_string()));
        rec.push(data.target(i).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    let side = BufWriter::new(File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(side, meta)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<(Dataset, Option<DatasetMeta>)> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let cols = r.headers()?.len();
    if cols < 1 {
        return Err(Error::Format(format!("{}: empty header", path.display())));
    }
    let d = cols - 1;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(Error::Format(format!("{}: ragged row", path.display())));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Format(format!("bad number {field:?}")))?;
            if j < d {
                x.push(v);
            } else {
                y.push(v);
            }
        }
    }
    let side = sidecar_path(path);
    let meta = if side.exists() { Some(serde_json::from_reader(BufReader::new(File::open(side)?))?) } else { None };
    Ok((Dataset::new(x, y, d)?, meta))
}
