//! Critical decision paths: per hidden layer, the smallest set of
//! positive-relevance neurons whose summed relevance exceeds
//! `alpha * g_f(x)`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::relevance::RelevanceMap;

/// Thresholds shared by path extraction and spectrum accumulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    /// Criticality coefficient, in `(0, 1]`.
    pub alpha: f64,
    /// A neuron is active when its post-activation is strictly above `beta`.
    pub beta: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            alpha: 0.7,
            beta: 0.0,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        validate_alpha(self.alpha)?;
        if !self.beta.is_finite() {
            return Err(Error::Usage(format!("beta must be finite, got {}", self.beta)));
        }
        Ok(())
    }
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::Usage(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

/// Sorted critical neuron indices for each hidden layer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CriticalPath {
    pub per_layer: Vec<Vec<usize>>,
}

impl CriticalPath {
    pub fn contains(&self, layer: usize, neuron: usize) -> bool {
        self.per_layer[layer].binary_search(&neuron).is_ok()
    }

    pub fn len(&self) -> usize {
        self.per_layer.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Extracts the critical path from a relevance map.
///
/// Returns [`Error::Degenerate`] when `g_f(x) <= 0`; callers skip such
/// inputs.
pub fn extract_cdp(rmap: &RelevanceMap, alpha: f64) -> Result<CriticalPath> {
    validate_alpha(alpha)?;
    // Written negated so that a NaN total is degenerate too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(rmap.total > 0.0) {
        return Err(Error::Degenerate(rmap.total));
    }
    let threshold = alpha * rmap.total;
    let per_layer = rmap
        .hidden()
        .map(|rel| critical_in_layer(rel, threshold))
        .collect();
    Ok(CriticalPath { per_layer })
}

/// Shortest descending-relevance prefix of the positive neurons whose sum
/// is strictly above `threshold`, or all positive neurons if none is.
pub fn critical_in_layer(relevance: &[f64], threshold: f64) -> Vec<usize> {
    let mut positive: Vec<usize> = (0..relevance.len()).filter(|&i| relevance[i] > 0.0).collect();
    // Stable sort keeps lower indices first among equal relevance.
    positive.sort_by(|&a, &b| relevance[b].total_cmp(&relevance[a]));
    let mut sum = 0.0;
    let mut take = positive.len();
    for (n, &i) in positive.iter().enumerate() {
        sum += relevance[i];
        if sum > threshold {
            take = n + 1;
            break;
        }
    }
    positive.truncate(take);
    positive.sort_unstable();
    positive
}
