use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Labelled inputs, stored as one contiguous buffer of `len * dim` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    dim: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    /// Builds a dataset, rejecting entries outside `[0, 1]` and labels
    /// outside `[0, num_classes)`.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        inputs: Vec<f64>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("input dimension is zero".into()));
        }
        if inputs.len() != dim * labels.len() {
            return Err(Error::Data(format!(
                "{} input values do not form {} samples of length {dim}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(i) = inputs.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data(format!(
                "sample {} entry {} = {} outside [0, 1]",
                i / dim,
                i % dim,
                inputs[i]
            )));
        }
        if let Some(i) = labels.iter().position(|&l| l >= num_classes) {
            return Err(Error::Data(format!(
                "label {} of sample {i} outside [0, {num_classes})",
                labels[i]
            )));
        }
        Ok(Dataset {
            name: name.into(),
            dim,
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn from_samples(
        name: impl Into<String>,
        samples: &[Vec<f64>],
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let dim = samples.first().map_or(0, Vec::len);
        if let Some(i) = samples.iter().position(|s| s.len() != dim) {
            return Err(Error::Data(format!("sample {i} has inconsistent length")));
        }
        Self::new(name, dim, samples.concat(), labels, num_classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[f64], usize)> + '_ {
        self.inputs
            .chunks_exact(self.dim)
            .zip(self.labels.iter().copied())
    }

    /// The first `n` samples (or all, if fewer).
    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            name: self.name.clone(),
            dim: self.dim,
            inputs: self.inputs[..n * self.dim].to_vec(),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
        }
    }

    /// Samples at the given indices, in order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
        }
        Dataset {
            name: self.name.clone(),
            dim: self.dim,
            inputs,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_out_of_range_pixels_and_labels() {
        assert!(Dataset::new("x", 2, vec![0.0, 1.5], vec![0], 2).is_err());
        assert!(Dataset::new("x", 2, vec![0.0, -0.1], vec![0], 2).is_err());
        assert!(Dataset::new("x", 2, vec![0.0, 1.0], vec![2], 2).is_err());
        assert!(Dataset::new("x", 2, vec![0.0, 1.0, 0.5], vec![0], 2).is_err());
        let d = Dataset::new("x", 2, vec![0.0, 1.0, 0.5, 0.5], vec![0, 1], 2).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.input(1), &[0.5, 0.5]);
        assert_eq!(d.select(&[1]).labels(), &[1]);
        assert_eq!(d.truncated(5).len(), 2);
    }
}
