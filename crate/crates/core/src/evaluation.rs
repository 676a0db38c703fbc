//! Metrics over synthesized inputs: activation coverage of the suspicious
//! set, accuracy and loss of the synthesized set, and mean distances.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::localization::SuspiciousSet;
use crate::network::Network;
use crate::synthesis::{Distances, SynthesisResult};
use crate::train::cross_entropy;

/// When a synthesized input counts as activating the suspicious set.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ActivationQuantifier {
    /// Every selected neuron is active.
    #[default]
    All,
    /// At least this fraction of the selected neurons is active.
    AtLeast(f64),
}

impl ActivationQuantifier {
    fn accepts(self, active: usize, total: usize) -> bool {
        match self {
            ActivationQuantifier::All => active == total,
            ActivationQuantifier::AtLeast(f) => active as f64 >= f * total as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageReport {
    /// Percent of synthesized inputs activating the suspicious set.
    pub c: f64,
    /// Percent of misclassified synthesized inputs activating it. Zero when
    /// nothing was misclassified.
    pub f: f64,
    pub n_synth: usize,
    pub n_failed: usize,
    pub n_activating: usize,
    pub n_failed_activating: usize,
}

/// Recomputes target activations on every synthesized input and reports the
/// C and F percentages.
pub fn coverage_and_failures(
    net: &Network,
    results: &[SynthesisResult],
    targets: &SuspiciousSet,
    beta: f64,
    quantifier: ActivationQuantifier,
) -> Result<CoverageReport> {
    let inputs: Vec<&[f64]> = results.iter().map(|r| r.synthesized.as_slice()).collect();
    let labels: Vec<usize> = results.iter().map(|r| r.label).collect();
    coverage_of_inputs(net, &inputs, &labels, targets, beta, quantifier)
}

/// As [`coverage_and_failures`], for synthesized inputs and their original
/// labels given separately.
pub fn coverage_of_inputs(
    net: &Network,
    inputs: &[&[f64]],
    labels: &[usize],
    targets: &SuspiciousSet,
    beta: f64,
    quantifier: ActivationQuantifier,
) -> Result<CoverageReport> {
    if inputs.is_empty() {
        return Err(Error::Usage("coverage needs at least one synthesized input".into()));
    }
    if inputs.len() != labels.len() {
        return Err(Error::Usage(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if let ActivationQuantifier::AtLeast(f) = quantifier {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Usage(format!("activation fraction must lie in [0, 1], got {f}")));
        }
    }
    let hidden = net.hidden_layers();
    if hidden.len() != targets.num_layers() {
        return Err(Error::Usage(format!(
            "suspicious set has {} layers, network has {} hidden layers",
            targets.num_layers(),
            hidden.len()
        )));
    }
    let total = targets.len();
    let (mut n_failed, mut n_activating, mut n_failed_activating) = (0, 0, 0);
    for (x, &label) in inputs.iter().zip(labels) {
        let trace = net.forward(x)?;
        let active = targets
            .suspects
            .iter()
            .filter(|s| trace.post_activations[hidden[s.layer]][s.neuron] > beta)
            .count();
        let activates = quantifier.accepts(active, total);
        let failed = trace.predicted_class != label;
        n_activating += activates as usize;
        n_failed += failed as usize;
        n_failed_activating += (activates && failed) as usize;
    }
    let percent = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
    Ok(CoverageReport {
        c: percent(n_activating, inputs.len()),
        f: percent(n_failed_activating, n_failed),
        n_synth: inputs.len(),
        n_failed,
        n_activating,
        n_failed_activating,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesizedMetrics {
    /// Percent of synthesized inputs still classified as their label.
    pub accuracy: f64,
    /// Mean cross-entropy against the label.
    pub loss: f64,
    pub mean_l1: f64,
    pub mean_l2: f64,
    pub mean_linf: f64,
    pub count: usize,
}

pub fn synthesized_metrics(
    net: &Network,
    originals: &[Vec<f64>],
    labels: &[usize],
    synthesized: &[Vec<f64>],
) -> Result<SynthesizedMetrics> {
    if originals.len() != synthesized.len() || originals.len() != labels.len() {
        return Err(Error::Usage(format!(
            "metric inputs are not paired: {} originals, {} labels, {} synthesized",
            originals.len(),
            labels.len(),
            synthesized.len()
        )));
    }
    if originals.is_empty() {
        return Err(Error::Usage("metrics need at least one pair".into()));
    }
    let mut correct = 0;
    let (mut loss, mut l1, mut l2, mut linf) = (0.0, 0.0, 0.0, 0.0);
    for ((o, s), &label) in originals.iter().zip(synthesized).zip(labels) {
        if o.len() != s.len() {
            return Err(Error::Usage("paired inputs differ in length".into()));
        }
        let trace = net.forward(s)?;
        if label >= trace.logits.len() {
            return Err(Error::Index {
                what: "class",
                index: label,
                len: trace.logits.len(),
            });
        }
        correct += (trace.predicted_class == label) as usize;
        loss += cross_entropy(&trace.logits, label);
        let d = Distances::between(o, s);
        l1 += d.l1;
        l2 += d.l2;
        linf += d.linf;
    }
    let n = originals.len() as f64;
    Ok(SynthesizedMetrics {
        accuracy: 100.0 * correct as f64 / n,
        loss: loss / n,
        mean_l1: l1 / n,
        mean_l2: l2 / n,
        mean_linf: linf / n,
        count: originals.len(),
    })
}
