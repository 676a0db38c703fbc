//! Layer-wise relevance propagation.
//!
//! The output layer is seeded with the target logit (all other outputs 0)
//! and relevance is pushed down one layer at a time with the
//! epsilon-stabilized redistribution rule
//!
//! ```text
//! R_j = sum_k  z_jk / (d_k + eps * sign(d_k)) * R_k,    z_jk = a_j * w_jk
//! ```
//!
//! where `d_k = sum_j z_jk` (optionally plus the bias `b_k`). Pooling layers
//! route relevance to the winning input, flatten layers pass it through, and
//! relu is treated as part of its neuron.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::network::{ActivationTrace, Layer, Network};

/// Redistribution rule parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrpRule {
    /// Stabilizer added to every denominator, with the denominator's sign.
    /// The default sits at the rounding scale of unit-sized denominators, so
    /// it only matters for exactly cancelling or dead units; larger values
    /// leak roughly `epsilon * sum |w|` relevance per layer.
    pub epsilon: f64,
    /// Include the bias in the denominator. The bias then absorbs its share
    /// of relevance, which is dropped, so layer sums only approximately
    /// conserve `f(x)`. Without it the layer sums are conserved up to the
    /// stabilizer.
    pub bias_in_denominator: bool,
}

impl Default for LrpRule {
    fn default() -> Self {
        LrpRule {
            epsilon: 1e-15,
            bias_in_denominator: false,
        }
    }
}

impl LrpRule {
    #[inline]
    fn stabilize(&self, d: f64) -> f64 {
        if d >= 0.0 {
            d + self.epsilon
        } else {
            d - self.epsilon
        }
    }
}

/// Relevance of every unit of every layer for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMap {
    /// Entry 0 is the input layer; entry `i + 1` is the output of network
    /// layer `i`.
    pub per_layer: Vec<Vec<f64>>,
    /// Cumulative relevance at the input layer, `g_f(x)`.
    pub total: f64,
    /// The seeded prediction score `f(x)`.
    pub output: f64,
    pub target_class: usize,
    /// Network indices of the hidden parameterized layers.
    pub hidden_layers: Vec<usize>,
}

impl RelevanceMap {
    /// Relevance of the outputs of network layer `layer`.
    pub fn layer(&self, layer: usize) -> &[f64] {
        &self.per_layer[layer + 1]
    }

    pub fn input(&self) -> &[f64] {
        &self.per_layer[0]
    }

    /// Relevance vectors of the hidden layers, in order.
    pub fn hidden(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.hidden_layers.iter().map(move |&l| self.layer(l))
    }
}

pub fn propagate_relevance(
    net: &Network,
    trace: &ActivationTrace,
    target_class: usize,
) -> Result<RelevanceMap> {
    propagate_relevance_with(net, trace, target_class, &LrpRule::default())
}

pub fn propagate_relevance_with(
    net: &Network,
    trace: &ActivationTrace,
    target_class: usize,
    rule: &LrpRule,
) -> Result<RelevanceMap> {
    let outputs = net.output_len();
    if target_class >= outputs {
        return Err(Error::Index {
            what: "class",
            index: target_class,
            len: outputs,
        });
    }
    let layers = net.layers();
    if trace.post_activations.len() != layers.len() {
        return Err(Error::Usage("trace does not belong to this network".into()));
    }
    let output = trace.logits[target_class];
    let mut per_layer: Vec<Vec<f64>> = vec![Vec::new(); layers.len() + 1];
    let mut seed = vec![0.0; outputs];
    seed[target_class] = output;
    per_layer[layers.len()] = seed;

    for (i, layer) in layers.iter().enumerate().rev() {
        let upper = &per_layer[i + 1];
        let input = trace.layer_input(i);
        let lower = match layer {
            Layer::Dense(d) => {
                let mut r = vec![0.0; d.inputs];
                for (k, (row, &rk)) in d.weights.chunks_exact(d.inputs).zip(upper).enumerate() {
                    if rk == 0.0 {
                        continue;
                    }
                    let mut denom: f64 = row.iter().zip(input).map(|(w, a)| w * a).sum();
                    if rule.bias_in_denominator {
                        denom += d.bias[k];
                    }
                    let s = rk / rule.stabilize(denom);
                    for ((rj, w), a) in r.iter_mut().zip(row).zip(input) {
                        *rj += a * w * s;
                    }
                }
                r
            }
            Layer::Conv2d(c) => {
                let out = c.output_shape();
                let mut r = vec![0.0; c.input.len()];
                let mut pos = 0;
                for oc in 0..out.channels {
                    for y in 0..out.height {
                        for x in 0..out.width {
                            let rk = upper[pos];
                            pos += 1;
                            if rk == 0.0 {
                                continue;
                            }
                            let mut denom = 0.0;
                            c.for_each_connection(oc, y, x, |j, w| {
                                denom += input[j] * c.weights[w]
                            });
                            if rule.bias_in_denominator {
                                denom += c.bias[oc];
                            }
                            let s = rk / rule.stabilize(denom);
                            c.for_each_connection(oc, y, x, |j, w| {
                                r[j] += input[j] * c.weights[w] * s
                            });
                        }
                    }
                }
                r
            }
            Layer::MaxPool2d(p) => {
                let mut r = vec![0.0; p.input.len()];
                for (j, &rk) in p.argmax_positions(input).into_iter().zip(upper) {
                    r[j] += rk;
                }
                r
            }
            Layer::Flatten(_) => upper.clone(),
        };
        if lower.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                stage: "relevance",
                layer: i,
            });
        }
        per_layer[i] = lower;
    }
    let total = per_layer[0].iter().sum();
    Ok(RelevanceMap {
        per_layer,
        total,
        output,
        target_class,
        hidden_layers: net.hidden_layers(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, Dense};

    fn dense(inputs: usize, outputs: usize, w: &[f64], b: &[f64], act: Activation) -> Layer {
        Layer::Dense(Dense::new(inputs, outputs, w.to_vec(), b.to_vec(), act).unwrap())
    }

    #[test]
    fn hand_evaluated_two_to_one() {
        let net = Network::new(
            vec![2],
            vec![dense(2, 1, &[1.0, 1.0], &[0.0], Activation::Identity)],
        )
        .unwrap();
        let t = net.forward(&[2.0, 1.0]).unwrap();
        let r = propagate_relevance(&net, &t, 0).unwrap();
        assert_eq!(r.output, 3.0);
        assert!((r.input()[0] - 2.0).abs() < 1e-6);
        assert!((r.input()[1] - 1.0).abs() < 1e-6);
        assert!((r.total - 3.0).abs() < 1e-6);
    }

    #[test]
    fn unit_chain_passes_relevance_unchanged() {
        let net = Network::new(
            vec![1],
            vec![
                dense(1, 1, &[1.0], &[0.0], Activation::Relu),
                dense(1, 1, &[1.0], &[0.0], Activation::Relu),
                dense(1, 1, &[1.0], &[0.0], Activation::Identity),
            ],
        )
        .unwrap();
        let t = net.forward(&[0.7]).unwrap();
        let r = propagate_relevance(&net, &t, 0).unwrap();
        for l in &r.per_layer {
            assert!((l[0] - 0.7).abs() < 1e-6);
        }
    }

    #[test]
    fn output_is_one_hot_at_target() {
        let net = Network::new(
            vec![2],
            vec![dense(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[0.0; 3], Activation::Identity)],
        )
        .unwrap();
        let t = net.forward(&[0.5, 0.5]).unwrap();
        let r = propagate_relevance(&net, &t, 1).unwrap();
        assert_eq!(r.per_layer[1], vec![0.0, t.logits[1], 0.0]);
    }

    #[test]
    fn bias_in_denominator_leaks_relevance() {
        let net = Network::new(
            vec![2],
            vec![dense(2, 1, &[1.0, 1.0], &[1.0], Activation::Identity)],
        )
        .unwrap();
        let t = net.forward(&[2.0, 1.0]).unwrap();
        let plain = propagate_relevance(&net, &t, 0).unwrap();
        assert!((plain.total - 4.0).abs() < 1e-6);
        let rule = LrpRule {
            bias_in_denominator: true,
            ..LrpRule::default()
        };
        let leaky = propagate_relevance_with(&net, &t, 0, &rule).unwrap();
        // The bias keeps 1/4 of f(x) = 4.
        assert!((leaky.total - 3.0).abs() < 1e-6);
    }

    #[test]
    fn zero_denominator_is_stabilized() {
        let net = Network::new(
            vec![2],
            vec![dense(2, 1, &[1.0, -1.0], &[0.5], Activation::Identity)],
        )
        .unwrap();
        let t = net.forward(&[1.0, 1.0]).unwrap();
        let r = propagate_relevance(&net, &t, 0).unwrap();
        assert!(r.input().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn target_out_of_range() {
        let net = Network::new(
            vec![1],
            vec![dense(1, 2, &[1.0, 1.0], &[0.0; 2], Activation::Identity)],
        )
        .unwrap();
        let t = net.forward(&[1.0]).unwrap();
        assert!(matches!(
            propagate_relevance(&net, &t, 2),
            Err(Error::Index { what: "class", .. })
        ));
    }
}
