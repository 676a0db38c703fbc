//! Mini-batch SGD with a softmax cross-entropy head.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{Network, ParamGrads};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Usage(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Usage("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of the softmax of `logits` against class `label`.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|&z| libm::exp(z - max)).sum::<f64>());
    lse - logits[label]
}

/// Trains a copy of `net` and returns it. Single-threaded and fully
/// determined by `cfg.seed`.
pub fn train(net: &Network, data: &Dataset, cfg: &TrainConfig) -> Result<Network> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let classes = net.output_len();
    if let Some(i) = data.labels().iter().position(|&l| l >= classes) {
        return Err(Error::Data(format!(
            "label {} of sample {i} outside the network's {classes} outputs",
            data.label(i)
        )));
    }
    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads: Vec<ParamGrads> = net
        .layers()
        .iter()
        .map(|l| match l.params() {
            Some((w, b)) => ParamGrads {
                weights: vec![0.0; w.len()],
                bias: vec![0.0; b.len()],
            },
            None => ParamGrads::default(),
        })
        .collect();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            for g in &mut grads {
                g.weights.fill(0.0);
                g.bias.fill(0.0);
            }
            for &i in batch {
                accumulate_sample(&net, data.input(i), data.label(i), &mut grads)?;
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for (layer, g) in net.layers_mut().iter_mut().zip(&grads) {
                if let Some((w, b)) = layer.params_mut() {
                    for (p, d) in w.iter_mut().zip(&g.weights) {
                        *p -= scale * d;
                    }
                    for (p, d) in b.iter_mut().zip(&g.bias) {
                        *p -= scale * d;
                    }
                }
            }
        }
        if let Some(i) = net
            .layers()
            .iter()
            .position(|l| l.params().is_some_and(|(w, b)| !w.iter().chain(b).all(|v| v.is_finite())))
        {
            return Err(Error::Numeric {
                stage: "training",
                layer: i,
            });
        }
    }
    Ok(net)
}

fn accumulate_sample(
    net: &Network,
    input: &[f64],
    label: usize,
    grads: &mut [ParamGrads],
) -> Result<()> {
    let trace = net.forward(input)?;
    let mut g = softmax(&trace.logits);
    g[label] -= 1.0;
    for (i, layer) in net.layers().iter().enumerate().rev() {
        let act = layer.activation();
        for (gv, &p) in g.iter_mut().zip(&trace.pre_activations[i]) {
            *gv *= act.derivative(p);
        }
        let target = if layer.is_parameterized() {
            Some(&mut grads[i])
        } else {
            None
        };
        g = layer.backward(trace.layer_input(i), &g, target);
    }
    Ok(())
}

/// Fraction of samples whose predicted class equals the label.
pub fn accuracy(net: &Network, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (x, y) in data.iter() {
        if net.predict(x)?.0 == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::Architecture;

    fn separable() -> Dataset {
        let pts = [
            ([0.1, 0.2], 0),
            ([0.2, 0.1], 0),
            ([0.3, 0.2], 0),
            ([0.1, 0.4], 0),
            ([0.9, 0.8], 1),
            ([0.8, 0.9], 1),
            ([0.7, 0.8], 1),
            ([0.9, 0.6], 1),
        ];
        let samples: Vec<Vec<f64>> = pts.iter().map(|(p, _)| p.to_vec()).collect();
        let labels = pts.iter().map(|&(_, l)| l).collect();
        Dataset::from_samples("toy", &samples, labels, 2).unwrap()
    }

    #[test]
    fn separable_toy_set_reaches_full_accuracy() {
        let net: Network = "<4>, <2>".parse::<Architecture>().unwrap().build(&[2], 3).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 4,
            learning_rate: 0.5,
            seed: 1,
        };
        let trained = train(&net, &separable(), &cfg).unwrap();
        assert_eq!(accuracy(&trained, &separable()).unwrap(), 1.0);
    }

    #[test]
    fn zero_epochs_leaves_weights_unchanged() {
        let net: Network = "<4>, <2>".parse::<Architecture>().unwrap().build(&[2], 3).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert_eq!(train(&net, &separable(), &cfg).unwrap(), net);
    }

    #[test]
    fn training_is_deterministic() {
        let net: Network = "<4>, <2>".parse::<Architecture>().unwrap().build(&[2], 3).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 3,
            learning_rate: 0.1,
            seed: 42,
        };
        assert_eq!(
            train(&net, &separable(), &cfg).unwrap(),
            train(&net, &separable(), &cfg).unwrap()
        );
    }

    #[test]
    fn label_beyond_outputs_is_data_error() {
        let net: Network = "<4>, <2>".parse::<Architecture>().unwrap().build(&[2], 3).unwrap();
        let d = Dataset::from_samples("x", &[vec![0.1, 0.1]], vec![2], 3).unwrap();
        assert!(matches!(
            train(&net, &d, &TrainConfig::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cross_entropy_matches_softmax() {
        let z = [1.0, 2.0, 0.5];
        let p = softmax(&z);
        assert!((cross_entropy(&z, 1) + libm::log(p[1])).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
