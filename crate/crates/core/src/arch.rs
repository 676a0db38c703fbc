//! Compact architecture notation, e.g. `8 * <20>, <10>` for eight hidden
//! dense layers of width 20 followed by a 10-way output, or
//! `2 * <32@3x3>, 2 * <64@3x3>, <128>, <10>` for convolutional stacks.
//!
//! Each `n * <c@khxkw>` group becomes `n` valid-padding convolutions
//! followed by one 2x2 max pool. A flatten layer is inserted before the
//! first dense layer of an image-shaped network. Hidden layers use relu,
//! the final dense layer is linear.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{Activation, Conv2d, Dense, Flatten, Layer, MaxPool2d, Network, Shape3};
use crate::rng::standard_normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Dense { width: usize },
    Conv { channels: usize, kernel: (usize, usize) },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Group {
    pub repeat: usize,
    pub block: Block,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub groups: Vec<Group>,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.groups.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            if g.repeat > 1 {
                write!(f, "{} * ", g.repeat)?;
            }
            match g.block {
                Block::Dense { width } => write!(f, "<{width}>")?,
                Block::Conv { channels, kernel } => {
                    write!(f, "<{channels}@{}x{}>", kernel.0, kernel.1)?
                }
            }
        }
        Ok(())
    }
}

impl core::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidNetwork(format!("architecture `{s}`: {msg}"));
        let mut groups = Vec::new();
        for part in s.split(',') {
            let part = part.trim();
            if part.is_empty() {
                return Err(bad("empty group".into()));
            }
            let (repeat, body) = match part.split_once('*') {
                Some((n, rest)) => (
                    n.trim()
                        .parse::<usize>()
                        .map_err(|_| bad(format!("bad repeat count in `{part}`")))?,
                    rest.trim(),
                ),
                None => (1, part),
            };
            let inner = body
                .strip_prefix('<')
                .and_then(|b| b.strip_suffix('>'))
                .ok_or_else(|| bad(format!("expected <...> in `{part}`")))?
                .trim();
            let block = match inner.split_once('@') {
                Some((ch, k)) => {
                    let (kh, kw) = k
                        .split_once('x')
                        .ok_or_else(|| bad(format!("bad kernel `{k}`")))?;
                    let parse = |v: &str| {
                        v.trim()
                            .parse::<usize>()
                            .map_err(|_| bad(format!("bad number `{v}`")))
                    };
                    Block::Conv {
                        channels: parse(ch)?,
                        kernel: (parse(kh)?, parse(kw)?),
                    }
                }
                None => Block::Dense {
                    width: inner
                        .parse()
                        .map_err(|_| bad(format!("bad width `{inner}`")))?,
                },
            };
            if repeat == 0 {
                return Err(bad("repeat count must be positive".into()));
            }
            groups.push(Group { repeat, block });
        }
        match groups.last() {
            Some(Group {
                block: Block::Dense { .. },
                repeat: 1,
            }) => {}
            _ => return Err(bad("must end with a single dense output group".into())),
        }
        Ok(Architecture { groups })
    }
}

impl Architecture {
    /// Instantiates the architecture with He-normal weights and zero biases.
    pub fn build(&self, input_shape: &[usize], seed: u64) -> Result<Network> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut he = |fan_in: usize, n: usize| -> Vec<f64> {
            let std = libm::sqrt(2.0 / fan_in as f64);
            (0..n).map(|_| std * standard_normal(&mut rng)).collect()
        };
        let mut image = match *input_shape {
            [c, h, w] => Some(Shape3::new(c, h, w)),
            _ => None,
        };
        let mut width: usize = input_shape.iter().product();
        let mut layers = Vec::new();
        let last = self.groups.len() - 1;
        for (gi, group) in self.groups.iter().enumerate() {
            match group.block {
                Block::Conv { channels, kernel } => {
                    for _ in 0..group.repeat {
                        let shape = image.ok_or_else(|| {
                            Error::InvalidNetwork(
                                "convolution requires a [c, h, w] input that has not been flattened"
                                    .to_string(),
                            )
                        })?;
                        let fan_in = shape.channels * kernel.0 * kernel.1;
                        let conv = Conv2d::new(
                            shape,
                            channels,
                            kernel,
                            he(fan_in, channels * fan_in),
                            vec![0.0; channels],
                            Activation::Relu,
                        )?;
                        image = Some(conv.output_shape());
                        layers.push(Layer::Conv2d(conv));
                    }
                    let pool = MaxPool2d::new(image.expect("set above"))?;
                    image = Some(pool.output_shape());
                    width = pool.output_shape().len();
                    layers.push(Layer::MaxPool2d(pool));
                }
                Block::Dense { width: out } => {
                    if image.take().is_some() && !layers.is_empty() {
                        layers.push(Layer::Flatten(Flatten { len: width }));
                    }
                    for _ in 0..group.repeat {
                        let act = if gi == last {
                            Activation::Identity
                        } else {
                            Activation::Relu
                        };
                        layers.push(Layer::Dense(Dense::new(
                            width,
                            out,
                            he(width, width * out),
                            vec![0.0; out],
                            act,
                        )?));
                        width = out;
                    }
                }
            }
        }
        Network::new(input_shape.to_vec(), layers)
    }
}
