//! Loaders for the MNIST IDX files and the CIFAR-10 binary batches.
//!
//! Pixels are scaled by 1/255 into `[0, 1]`. Malformed files are rejected,
//! never clamped or padded.

use std::fs;
use std::path::Path;

use neuropath_core::Dataset;

use crate::error::{Error, Result};

const IDX_IMAGES_MAGIC: u32 = 2051;
const IDX_LABELS_MAGIC: u32 = 2049;
const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn header(path: &Path, bytes: &[u8], magic: u32, words: usize) -> Result<Vec<usize>> {
    if bytes.len() < 4 * words {
        return Err(Error::format(path, "file shorter than its IDX header"));
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::format(path, format!("bad IDX magic {found}, expected {magic}")));
    }
    Ok((1..words).map(|w| be_u32(bytes, 4 * w) as usize).collect())
}

/// Loads an IDX image file and its matching label file.
pub fn load_mnist(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = read(images)?;
    let lab = read(labels)?;
    let dims = header(images, &img, IDX_IMAGES_MAGIC, 4)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let label_count = header(labels, &lab, IDX_LABELS_MAGIC, 2)?[0];
    if count != label_count {
        return Err(Error::Core(neuropath_core::Error::Data(format!(
            "{} holds {count} images but {} holds {label_count} labels",
            images.display(),
            labels.display()
        ))));
    }
    let dim = rows * cols;
    if img.len() != 16 + count * dim {
        return Err(Error::format(
            images,
            format!("expected {} bytes for {count} images of {rows}x{cols}, found {}", 16 + count * dim, img.len()),
        ));
    }
    if lab.len() != 8 + count {
        return Err(Error::format(labels, format!("expected {} bytes, found {}", 8 + count, lab.len())));
    }
    let inputs = img[16..].iter().map(|&b| f64::from(b) / 255.0).collect();
    let label_values: Vec<usize> = lab[8..].iter().map(|&b| usize::from(b)).collect();
    if let Some(bad) = label_values.iter().find(|&&l| l > 9) {
        return Err(Error::format(labels, format!("label {bad} outside 0..=9")));
    }
    let name = images
        .file_name()
        .map_or_else(|| "mnist".to_string(), |n| n.to_string_lossy().into_owned());
    Ok(Dataset::new(name, dim, inputs, label_values, 10)?)
}

/// Loads the standard file pair `<split>-images-idx3-ubyte` and
/// `<split>-labels-idx1-ubyte` from `dir`, where `split` is `train` or `t10k`.
pub fn load_mnist_split(dir: &Path, split: &str) -> Result<Dataset> {
    load_mnist(
        &dir.join(format!("{split}-images-idx3-ubyte")),
        &dir.join(format!("{split}-labels-idx1-ubyte")),
    )
}

/// Loads and concatenates CIFAR-10 binary batches. Images are stored
/// channels-first, `3 x 32 x 32`.
pub fn load_cifar10(paths: &[&Path]) -> Result<Dataset> {
    if paths.is_empty() {
        return Err(Error::Usage("no CIFAR-10 batch files given".into()));
    }
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for &path in paths {
        let bytes = read(path)?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
            return Err(Error::format(
                path,
                format!("length {} is not a multiple of the {CIFAR_RECORD}-byte record", bytes.len()),
            ));
        }
        for record in bytes.chunks_exact(CIFAR_RECORD) {
            if record[0] > 9 {
                return Err(Error::format(path, format!("label {} outside 0..=9", record[0])));
            }
            labels.push(usize::from(record[0]));
            inputs.extend(record[1..].iter().map(|&b| f64::from(b) / 255.0));
        }
    }
    Ok(Dataset::new("cifar10", CIFAR_RECORD - 1, inputs, labels, 10)?)
}
