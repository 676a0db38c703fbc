//! Suspiciousness-guided input synthesis by gradient ascent on the
//! pre-activations of target neurons.
//!
//! Plain gradient ascent (GA) takes one step per iteration on the joint
//! objective of all targets. Multi-stage gradient ascent (MGA) walks the
//! hidden layers in order within every iteration; stage `L` minimizes
//!
//! ```text
//! loss_L = -sum(target^L) + sum_{l<L} ( -sum(target^l) + |target^l - target^l| )
//! ```
//!
//! whose absolute term is identically zero as written. With
//! [`SynthesisParams::anchor`] the term compares each earlier layer's
//! targets against the values recorded right after that layer's own stage.
//!
//! After every step the input is clamped to `[0, 1]` and projected into the
//! L∞ box of radius `d_max` around either the pre-step input
//! ([`DistanceBound::PerStep`]) or the original ([`DistanceBound::Ball`]).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::localization::{SelectionMode, SuspiciousSet};
use crate::network::{ActivationTrace, Network, Objective, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SynthMethod {
    Ga,
    Mga,
}

impl SynthMethod {
    pub fn name(self) -> &'static str {
        match self {
            SynthMethod::Ga => "ga",
            SynthMethod::Mga => "mga",
        }
    }
}

impl fmt::Display for SynthMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ga" => Ok(SynthMethod::Ga),
            "mga" => Ok(SynthMethod::Mga),
            _ => Err(Error::Usage(format!("unknown synthesizer `{s}` (expected ga or mga)"))),
        }
    }
}

/// What `d_max` bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistanceBound {
    /// Each step may move every entry by at most `d_max`.
    PerStep,
    /// The synthesized input stays within `d_max` of the original in L∞.
    Ball,
}

impl DistanceBound {
    pub fn name(self) -> &'static str {
        match self {
            DistanceBound::PerStep => "per-step",
            DistanceBound::Ball => "ball",
        }
    }
}

impl fmt::Display for DistanceBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceBound {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "per-step" | "step" => Ok(DistanceBound::PerStep),
            "ball" => Ok(DistanceBound::Ball),
            _ => Err(Error::Usage(format!(
                "unknown distance bound `{s}` (expected per-step or ball)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisParams {
    pub method: SynthMethod,
    /// Gradient step size (learning rate).
    pub step: f64,
    pub d_max: f64,
    pub iterations: usize,
    /// Activity threshold on post-activations.
    pub beta: f64,
    pub bound: DistanceBound,
    /// Penalize drift of earlier layers' targets in MGA.
    pub anchor: bool,
}

impl Default for SynthesisParams {
    fn default() -> Self {
        SynthesisParams {
            method: SynthMethod::Mga,
            step: 5.0,
            d_max: 0.006,
            iterations: 10,
            beta: 0.0,
            bound: DistanceBound::PerStep,
            anchor: false,
        }
    }
}

impl SynthesisParams {
    pub fn validate(&self) -> Result<()> {
        // step = 0 is accepted as a null step.
        if !(self.step >= 0.0 && self.step.is_finite()) {
            return Err(Error::Usage(format!("step must be non-negative, got {}", self.step)));
        }
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            return Err(Error::Usage(format!("d_max must be positive, got {}", self.d_max)));
        }
        if self.iterations == 0 {
            return Err(Error::Usage("iterations must be at least 1".into()));
        }
        if !self.beta.is_finite() {
            return Err(Error::Usage("beta must be finite".into()));
        }
        Ok(())
    }
}

/// L1, L2 and L∞ distances between two inputs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Distances {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

impl Distances {
    pub fn between(a: &[f64], b: &[f64]) -> Self {
        let mut d = Distances::default();
        let mut sq = 0.0;
        for (x, y) in a.iter().zip(b) {
            let diff = libm::fabs(x - y);
            d.l1 += diff;
            sq += diff * diff;
            d.linf = d.linf.max(diff);
        }
        d.l2 = libm::sqrt(sq);
        d
    }
}

/// Loss of one stage, evaluated before its step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageLoss {
    pub iteration: usize,
    /// Hidden-layer position of the stage (GA uses the last target layer).
    pub stage: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetActivation {
    pub layer: usize,
    pub neuron: usize,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub original: Vec<f64>,
    pub synthesized: Vec<f64>,
    pub label: usize,
    pub stage_losses: Vec<StageLoss>,
    pub final_class: usize,
    pub misclassified: bool,
    pub activated_targets: Vec<TargetActivation>,
    pub distances: Distances,
    /// Iterations started before stopping.
    pub iterations_run: usize,
    /// Gradient steps taken.
    pub steps: usize,
}

impl SynthesisResult {
    pub fn all_targets_active(&self) -> bool {
        self.activated_targets.iter().all(|t| t.active)
    }
}

/// Clamps `x` to `[0, 1]` and then to `[anchor - d_max, anchor + d_max]`.
pub fn apply_domain_constraints(x: &[f64], anchor: &[f64], d_max: f64) -> Vec<f64> {
    x.iter()
        .zip(anchor)
        .map(|(&v, &a)| v.clamp(0.0, 1.0).clamp(a - d_max, a + d_max))
        .collect()
}

/// Targets of each hidden layer as network-level units.
fn target_layers(net: &Network, targets: &SuspiciousSet) -> Result<Vec<(usize, Vec<usize>)>> {
    let hidden = net.hidden_layers();
    let widths: Vec<usize> = hidden.iter().map(|&l| net.layers()[l].output_len()).collect();
    if widths != targets.widths {
        return Err(Error::Usage(format!(
            "suspicious set shaped {:?} does not match hidden layers {widths:?}",
            targets.widths
        )));
    }
    if targets.is_empty() {
        return Err(Error::Usage("no target neurons".into()));
    }
    Ok(hidden
        .into_iter()
        .zip(targets.per_layer())
        .collect())
}

fn target_sum(trace: &ActivationTrace, layer: usize, neurons: &[usize]) -> f64 {
    neurons.iter().map(|&n| trace.pre_activations[layer][n]).sum()
}

/// Synthesizes one input. Returns `Ok(None)` when `input` is not correctly
/// classified to begin with.
pub fn synthesize(
    net: &Network,
    input: &[f64],
    label: usize,
    targets: &SuspiciousSet,
    params: &SynthesisParams,
) -> Result<Option<SynthesisResult>> {
    params.validate()?;
    if params.method == SynthMethod::Mga && targets.mode != SelectionMode::Pathway {
        return Err(Error::Usage("multi-stage synthesis needs pathway-mode targets".into()));
    }
    let layers = target_layers(net, targets)?;
    let first = net.forward(input)?;
    if first.predicted_class != label {
        return Ok(None);
    }

    let mut x = input.to_vec();
    let mut stage_losses = Vec::new();
    let mut steps = 0;
    let mut iterations_run = 0;
    let mut trace = first;
    let active_stages: Vec<usize> = (0..layers.len()).filter(|&s| !layers[s].1.is_empty()).collect();

    for iteration in 0..params.iterations {
        if iteration > 0 {
            trace = net.forward(&x)?;
        }
        if trace.predicted_class != label {
            break;
        }
        iterations_run += 1;
        match params.method {
            SynthMethod::Ga => {
                let mut objective = Objective::new();
                let mut loss = 0.0;
                for (layer, neurons) in &layers {
                    loss -= target_sum(&trace, *layer, neurons);
                    for &n in neurons {
                        objective.add(Unit::Pre { layer: *layer, index: n }, 1.0);
                    }
                }
                stage_losses.push(StageLoss {
                    iteration,
                    stage: *active_stages.last().expect("targets are non-empty"),
                    loss,
                });
                x = ascend(net, &trace, &objective, &x, input, params)?;
                steps += 1;
            }
            SynthMethod::Mga => {
                let mut recorded: Vec<Option<Vec<f64>>> = vec![None; layers.len()];
                let mut previous: Option<usize> = None;
                for &stage in &active_stages {
                    if previous.is_some() {
                        trace = net.forward(&x)?;
                    }
                    if let (true, Some(p)) = (params.anchor, previous) {
                        let (layer, neurons) = &layers[p];
                        recorded[p] = Some(
                            neurons.iter().map(|&n| trace.pre_activations[*layer][n]).collect(),
                        );
                    }
                    let mut objective = Objective::new();
                    let mut loss = 0.0;
                    for (s, (layer, neurons)) in layers.iter().enumerate().take(stage + 1) {
                        loss -= target_sum(&trace, *layer, neurons);
                        for (t, &n) in neurons.iter().enumerate() {
                            let mut coeff = 1.0;
                            if let (true, Some(rec)) = (s < stage, &recorded[s]) {
                                let drift = trace.pre_activations[*layer][n] - rec[t];
                                loss += libm::fabs(drift);
                                coeff -= sign(drift);
                            }
                            if coeff != 0.0 {
                                objective.add(Unit::Pre { layer: *layer, index: n }, coeff);
                            }
                        }
                    }
                    stage_losses.push(StageLoss {
                        iteration,
                        stage,
                        loss,
                    });
                    x = ascend(net, &trace, &objective, &x, input, params)?;
                    steps += 1;
                    previous = Some(stage);
                }
            }
        }
    }

    let last = net.forward(&x)?;
    let activated_targets = layers
        .iter()
        .enumerate()
        .flat_map(|(pos, (layer, neurons))| {
            let post = &last.post_activations[*layer];
            neurons.iter().map(move |&n| TargetActivation {
                layer: pos,
                neuron: n,
                active: post[n] > params.beta,
            })
        })
        .collect();
    Ok(Some(SynthesisResult {
        distances: Distances::between(input, &x),
        original: input.to_vec(),
        synthesized: x,
        label,
        stage_losses,
        final_class: last.predicted_class,
        misclassified: last.predicted_class != label,
        activated_targets,
        iterations_run,
        steps,
    }))
}

pub fn synthesize_mga(
    net: &Network,
    input: &[f64],
    label: usize,
    targets: &SuspiciousSet,
    params: &SynthesisParams,
) -> Result<Option<SynthesisResult>> {
    synthesize(
        net,
        input,
        label,
        targets,
        &SynthesisParams {
            method: SynthMethod::Mga,
            ..*params
        },
    )
}

pub fn synthesize_ga(
    net: &Network,
    input: &[f64],
    label: usize,
    targets: &SuspiciousSet,
    params: &SynthesisParams,
) -> Result<Option<SynthesisResult>> {
    synthesize(
        net,
        input,
        label,
        targets,
        &SynthesisParams {
            method: SynthMethod::Ga,
            ..*params
        },
    )
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One step `x <- x - step * d(loss)/dx` with `loss = -objective`,
/// followed by the domain constraints.
fn ascend(
    net: &Network,
    trace: &ActivationTrace,
    objective: &Objective,
    x: &[f64],
    original: &[f64],
    params: &SynthesisParams,
) -> Result<Vec<f64>> {
    let grad = net.input_gradient_from_trace(trace, objective)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric {
            stage: "synthesis gradient",
            layer: 0,
        });
    }
    let stepped: Vec<f64> = x.iter().zip(&grad).map(|(v, g)| v + params.step * g).collect();
    let anchor = match params.bound {
        DistanceBound::PerStep => x,
        DistanceBound::Ball => original,
    };
    Ok(apply_domain_constraints(&stepped, anchor, params.d_max))
}
