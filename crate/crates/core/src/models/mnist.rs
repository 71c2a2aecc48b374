//! MNIST IDX ingestion and the 7-vs-9 logistic regression task.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::models::{Dataset, LogisticReg, Pca};

pub const EXPECTED_TRAIN: usize = 12214;
pub const EXPECTED_TEST: usize = 2037;
pub const PCA_COMPONENTS: usize = 50;

/// A decoded IDX array of unsigned bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses an IDX byte buffer (`0x00 0x00 0x08 ndim`, big-endian u32 dims).
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(Error::Format("bad IDX magic".into()));
    }
    if bytes[2] != 0x08 {
        return Err(Error::Format(format!("unsupported IDX element type 0x{:02x}", bytes[2])));
    }
    let ndim = bytes[3] as usize;
    let header = 4 + 4 * ndim;
    if ndim == 0 || bytes.len() < header {
        return Err(Error::Format("truncated IDX header".into()));
    }
    let dims: Vec<usize> =
        (0..ndim).map(|k| u32::from_be_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes")) as usize).collect();
    let total: usize = dims.iter().product();
    if bytes.len() - header != total {
        return Err(Error::Format(format!("IDX payload has {} bytes, header says {total}", bytes.len() - header)));
    }
    Ok(IdxArray { dims, data: bytes[header..].to_vec() })
}

/// Reads a raw or gzip-compressed IDX file.
pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let mut raw = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut raw)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        raw = out;
    }
    parse_idx(&raw).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MnistFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistFiles {
    /// Locates the four standard file names in `dir`, with or without `.gz`.
    pub fn in_dir(dir: &Path) -> Result<Self> {
        let find = |stem: &str| -> Result<PathBuf> {
            for name in [stem.to_string(), format!("{stem}.gz"), stem.replacen("-idx", ".idx", 1)] {
                let p = dir.join(&name);
                if p.is_file() {
                    return Ok(p);
                }
            }
            Err(Error::Io(format!("{}: missing {stem}[.gz]", dir.display())))
        };
        Ok(Self {
            train_images: find("train-images-idx3-ubyte")?,
            train_labels: find("train-labels-idx1-ubyte")?,
            test_images: find("t10k-images-idx3-ubyte")?,
            test_labels: find("t10k-labels-idx1-ubyte")?,
        })
    }
}

/// Pixels in `[0, 1]` and `{0, 1}` labels (7 → 0, 9 → 1).
#[derive(Clone, Debug)]
pub struct RawSplit {
    pub pixels: Vec<f64>,
    pub labels: Vec<f64>,
    pub p: usize,
}

pub fn filter_79(images: &IdxArray, labels: &IdxArray) -> Result<RawSplit> {
    if images.dims.len() != 3 || labels.dims.len() != 1 {
        return Err(Error::Format("expected 3-d images and 1-d labels".into()));
    }
    let n = images.dims[0];
    if labels.dims[0] != n {
        return Err(Error::LengthMismatch { left: n, right: labels.dims[0] });
    }
    let p = images.dims[1] * images.dims[2];
    let mut pixels = Vec::new();
    let mut out = Vec::new();
    for (i, &l) in labels.data.iter().enumerate() {
        let y = match l {
            7 => 0.0,
            9 => 1.0,
            _ => continue,
        };
        pixels.extend(images.data[i * p..(i + 1) * p].iter().map(|&v| v as f64 / 255.0));
        out.push(y);
    }
    Ok(RawSplit { pixels, labels: out, p })
}

pub struct MnistTask {
    pub model: LogisticReg,
    pub test: Dataset,
    pub pca: Pca,
    /// Count mismatches tolerated under non-strict loading.
    pub warnings: Vec<String>,
}

/// Loads the 7-vs-9 subset and projects both splits onto the top
/// principal components of the training pixels.
pub fn load_mnist_79(files: &MnistFiles, components: usize, strict: bool) -> Result<MnistTask> {
    let train = filter_79(&read_idx(&files.train_images)?, &read_idx(&files.train_labels)?)?;
    let test = filter_79(&read_idx(&files.test_images)?, &read_idx(&files.test_labels)?)?;
    let mut warnings = Vec::new();
    for (got, want, split) in [(train.labels.len(), EXPECTED_TRAIN, "train"), (test.labels.len(), EXPECTED_TEST, "test")] {
        if got != want {
            if strict {
                return Err(Error::CountMismatch { expected: want, found: got });
            }
            warnings.push(format!("{split}: expected {want} examples, found {got}"));
        }
    }
    let pca = Pca::fit(&train.pixels, train.p, components)?;
    let model = LogisticReg::new(Dataset::new(pca.transform(&train.pixels)?, train.labels, components)?)?;
    let test = Dataset::new(pca.transform(&test.pixels)?, test.labels, components)?;
    Ok(MnistTask { model, test, pca, warnings })
}
