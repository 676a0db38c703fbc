//! Feedforward network representation, inference with activation recording,
//! and exact reverse-mode gradients with respect to the input.
//!
//! All tensors are flat `f64` buffers. Image-shaped data is stored
//! channels-first (`[c][h][w]`), dense weights row-major `[out][in]` and
//! convolution kernels `[out_ch][in_ch][kh][kw]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Elementwise nonlinearity applied after a parameterized layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative of the activation at `pre`. The relu subgradient at 0 is 0.
    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "linear",
        }
    }
}

/// Channels-first image shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape3 {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape3 {
            channels,
            height,
            width,
        }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `[outputs][inputs]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new(
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::InvalidNetwork(format!(
                "dense layer with zero dimension ({inputs}x{outputs})"
            )));
        }
        if weights.len() != inputs * outputs {
            return Err(Error::InvalidNetwork(format!(
                "dense weights have {} entries, expected {}x{}",
                weights.len(),
                outputs,
                inputs
            )));
        }
        if bias.len() != outputs {
            return Err(Error::InvalidNetwork(format!(
                "dense bias has {} entries, expected {}",
                bias.len(),
                outputs
            )));
        }
        Ok(Dense {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        })
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    fn forward_pre(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + dot(row, input))
            .collect()
    }

    fn backward(&self, input: &[f64], g_pre: &[f64], grads: Option<&mut ParamGrads>) -> Vec<f64> {
        let mut g_in = vec![0.0; self.inputs];
        for (row, &g) in self.weights.chunks_exact(self.inputs).zip(g_pre) {
            if g != 0.0 {
                for (gi, w) in g_in.iter_mut().zip(row) {
                    *gi += w * g;
                }
            }
        }
        if let Some(grads) = grads {
            for (o, &g) in g_pre.iter().enumerate() {
                if g != 0.0 {
                    let row = &mut grads.weights[o * self.inputs..(o + 1) * self.inputs];
                    for (gw, a) in row.iter_mut().zip(input) {
                        *gw += g * a;
                    }
                    grads.bias[o] += g;
                }
            }
        }
        g_in
    }
}

/// 2-D convolution with valid padding and stride 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub input: Shape3,
    pub out_channels: usize,
    /// Kernel `(height, width)`.
    pub kernel: (usize, usize),
    /// `[out_ch][in_ch][kh][kw]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Conv2d {
    pub fn new(
        input: Shape3,
        out_channels: usize,
        kernel: (usize, usize),
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        let (kh, kw) = kernel;
        if input.is_empty() || out_channels == 0 || kh == 0 || kw == 0 {
            return Err(Error::InvalidNetwork("conv2d with zero dimension".into()));
        }
        if kh > input.height || kw > input.width {
            return Err(Error::InvalidNetwork(format!(
                "conv2d kernel {kh}x{kw} larger than input {}x{}",
                input.height, input.width
            )));
        }
        let expected = out_channels * input.channels * kh * kw;
        if weights.len() != expected {
            return Err(Error::InvalidNetwork(format!(
                "conv2d weights have {} entries, expected {expected}",
                weights.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::InvalidNetwork(format!(
                "conv2d bias has {} entries, expected {out_channels}",
                bias.len()
            )));
        }
        Ok(Conv2d {
            input,
            out_channels,
            kernel,
            weights,
            bias,
            activation,
        })
    }

    pub fn output_shape(&self) -> Shape3 {
        Shape3::new(
            self.out_channels,
            self.input.height - self.kernel.0 + 1,
            self.input.width - self.kernel.1 + 1,
        )
    }

    #[inline]
    fn weight_index(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> usize {
        ((oc * self.input.channels + ic) * self.kernel.0 + ky) * self.kernel.1 + kx
    }

    #[inline]
    fn input_index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.input.height + y) * self.input.width + x
    }

    /// Calls `f(input_index, weight_index)` for every connection feeding
    /// output position `(oc, y, x)`.
    #[inline]
    pub(crate) fn for_each_connection(
        &self,
        oc: usize,
        y: usize,
        x: usize,
        mut f: impl FnMut(usize, usize),
    ) {
        let (kh, kw) = self.kernel;
        for ic in 0..self.input.channels {
            for ky in 0..kh {
                for kx in 0..kw {
                    f(
                        self.input_index(ic, y + ky, x + kx),
                        self.weight_index(oc, ic, ky, kx),
                    );
                }
            }
        }
    }

    fn forward_pre(&self, input: &[f64]) -> Vec<f64> {
        let out = self.output_shape();
        let mut pre = Vec::with_capacity(out.len());
        for oc in 0..out.channels {
            for y in 0..out.height {
                for x in 0..out.width {
                    let mut acc = self.bias[oc];
                    self.for_each_connection(oc, y, x, |i, w| acc += self.weights[w] * input[i]);
                    pre.push(acc);
                }
            }
        }
        pre
    }

    fn backward(&self, input: &[f64], g_pre: &[f64], mut grads: Option<&mut ParamGrads>) -> Vec<f64> {
        let out = self.output_shape();
        let mut g_in = vec![0.0; self.input.len()];
        let mut pos = 0;
        for oc in 0..out.channels {
            for y in 0..out.height {
                for x in 0..out.width {
                    let g = g_pre[pos];
                    pos += 1;
                    if g == 0.0 {
                        continue;
                    }
                    match grads.as_deref_mut() {
                        Some(grads) => {
                            grads.bias[oc] += g;
                            self.for_each_connection(oc, y, x, |i, w| {
                                g_in[i] += self.weights[w] * g;
                                grads.weights[w] += input[i] * g;
                            });
                        }
                        None => self.for_each_connection(oc, y, x, |i, w| {
                            g_in[i] += self.weights[w] * g;
                        }),
                    }
                }
            }
        }
        g_in
    }
}

/// 2x2 max pooling with stride 2 (odd trailing rows/columns are dropped).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    pub input: Shape3,
}

impl MaxPool2d {
    pub fn new(input: Shape3) -> Result<Self> {
        if input.height < 2 || input.width < 2 || input.channels == 0 {
            return Err(Error::InvalidNetwork(format!(
                "maxpool input {}x{}x{} too small",
                input.channels, input.height, input.width
            )));
        }
        Ok(MaxPool2d { input })
    }

    pub fn output_shape(&self) -> Shape3 {
        Shape3::new(self.input.channels, self.input.height / 2, self.input.width / 2)
    }

    /// Index into the input of the winning element for every output
    /// position; the first maximum in row-major window order wins.
    pub fn argmax_positions(&self, input: &[f64]) -> Vec<usize> {
        let out = self.output_shape();
        let (h, w) = (self.input.height, self.input.width);
        let mut winners = Vec::with_capacity(out.len());
        for c in 0..out.channels {
            for y in 0..out.height {
                for x in 0..out.width {
                    let mut best = (c * h + 2 * y) * w + 2 * x;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = (c * h + 2 * y + dy) * w + 2 * x + dx;
                        if input[i] > input[best] {
                            best = i;
                        }
                    }
                    winners.push(best);
                }
            }
        }
        winners
    }
}

/// Reshape of an image tensor into a flat vector. Storage is already flat,
/// so this is the identity on values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Flatten {
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    MaxPool2d(MaxPool2d),
    Flatten(Flatten),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool2d(_) => "maxpool",
            Layer::Flatten(_) => "flatten",
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            Layer::Dense(d) => d.inputs,
            Layer::Conv2d(c) => c.input.len(),
            Layer::MaxPool2d(p) => p.input.len(),
            Layer::Flatten(f) => f.len,
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            Layer::Dense(d) => d.outputs,
            Layer::Conv2d(c) => c.output_shape().len(),
            Layer::MaxPool2d(p) => p.output_shape().len(),
            Layer::Flatten(f) => f.len,
        }
    }

    pub fn activation(&self) -> Activation {
        match self {
            Layer::Dense(d) => d.activation,
            Layer::Conv2d(c) => c.activation,
            Layer::MaxPool2d(_) | Layer::Flatten(_) => Activation::Identity,
        }
    }

    pub fn is_parameterized(&self) -> bool {
        matches!(self, Layer::Dense(_) | Layer::Conv2d(_))
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.weights.len() + d.bias.len(),
            Layer::Conv2d(c) => c.weights.len() + c.bias.len(),
            _ => 0,
        }
    }

    pub(crate) fn params(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Layer::Dense(d) => Some((&d.weights, &d.bias)),
            Layer::Conv2d(c) => Some((&c.weights, &c.bias)),
            _ => None,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Option<(&mut [f64], &mut [f64])> {
        match self {
            Layer::Dense(d) => Some((&mut d.weights, &mut d.bias)),
            Layer::Conv2d(c) => Some((&mut c.weights, &mut c.bias)),
            _ => None,
        }
    }

    fn forward_pre(&self, input: &[f64]) -> Vec<f64> {
        match self {
            Layer::Dense(d) => d.forward_pre(input),
            Layer::Conv2d(c) => c.forward_pre(input),
            Layer::MaxPool2d(p) => p.argmax_positions(input).into_iter().map(|i| input[i]).collect(),
            Layer::Flatten(_) => input.to_vec(),
        }
    }

    /// Back-propagates a gradient on this layer's pre-activation to its
    /// input, optionally accumulating parameter gradients.
    pub(crate) fn backward(
        &self,
        input: &[f64],
        g_pre: &[f64],
        grads: Option<&mut ParamGrads>,
    ) -> Vec<f64> {
        match self {
            Layer::Dense(d) => d.backward(input, g_pre, grads),
            Layer::Conv2d(c) => c.backward(input, g_pre, grads),
            Layer::MaxPool2d(p) => {
                let mut g_in = vec![0.0; p.input.len()];
                for (i, g) in p.argmax_positions(input).into_iter().zip(g_pre) {
                    g_in[i] += g;
                }
                g_in
            }
            Layer::Flatten(_) => g_pre.to_vec(),
        }
    }
}

/// Parameter gradient buffers for one layer.
#[derive(Debug, Clone, Default)]
pub(crate) struct ParamGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Per-layer record of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub input: Vec<f64>,
    /// Pre-activation output of every layer (for pooling and flatten layers
    /// this equals the post-activation output).
    pub pre_activations: Vec<Vec<f64>>,
    pub post_activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub predicted_class: usize,
}

impl ActivationTrace {
    /// Input vector that fed layer `layer`.
    pub fn layer_input(&self, layer: usize) -> &[f64] {
        if layer == 0 {
            &self.input
        } else {
            &self.post_activations[layer - 1]
        }
    }
}

/// A neuron-level quantity that an input-gradient objective can select.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Pre { layer: usize, index: usize },
    Post { layer: usize, index: usize },
    Logit(usize),
}

/// Scalar objective `sum_i coeff_i * unit_i`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Objective {
    pub terms: Vec<(Unit, f64)>,
}

impl Objective {
    pub fn new() -> Self {
        Objective::default()
    }

    pub fn single(unit: Unit) -> Self {
        Objective {
            terms: vec![(unit, 1.0)],
        }
    }

    pub fn add(&mut self, unit: Unit, coeff: f64) -> &mut Self {
        self.terms.push((unit, coeff));
        self
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Value of the objective on a recorded trace.
    pub fn evaluate(&self, trace: &ActivationTrace) -> f64 {
        self.terms
            .iter()
            .map(|&(unit, c)| {
                c * match unit {
                    Unit::Pre { layer, index } => trace.pre_activations[layer][index],
                    Unit::Post { layer, index } => trace.post_activations[layer][index],
                    Unit::Logit(i) => trace.logits[i],
                }
            })
            .sum()
    }
}

/// Ordered stack of layers; immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("no layers".into()));
        }
        let mut width: usize = input_shape.iter().product();
        if input_shape.is_empty() || width == 0 {
            return Err(Error::InvalidNetwork("empty input shape".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.input_len() != width {
                return Err(Error::InvalidNetwork(format!(
                    "layer {i} ({}) expects {} inputs but receives {width}",
                    layer.kind(),
                    layer.input_len()
                )));
            }
            if let Some((w, b)) = layer.params() {
                if !w.iter().chain(b).all(|v| v.is_finite()) {
                    return Err(Error::InvalidNetwork(format!(
                        "layer {i} has non-finite parameters"
                    )));
                }
            }
            width = layer.output_len();
        }
        if !layers.iter().any(Layer::is_parameterized) {
            return Err(Error::InvalidNetwork("no parameterized layer".into()));
        }
        Ok(Network {
            input_shape,
            layers,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_len)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Number of parameterized (dense or conv) layers.
    pub fn num_layers(&self) -> usize {
        self.layers.iter().filter(|l| l.is_parameterized()).count()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    /// Indices of the parameterized layers whose neurons are under test:
    /// every parameterized layer except the output layer.
    pub fn hidden_layers(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.layers.len())
            .filter(|&i| self.layers[i].is_parameterized())
            .collect();
        idx.pop();
        idx
    }

    pub fn forward(&self, input: &[f64]) -> Result<ActivationTrace> {
        if input.len() != self.input_len() {
            return Err(Error::Dimension {
                layer: 0,
                expected: self.input_len(),
                actual: input.len(),
            });
        }
        if let Some(i) = input.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("input entry {i} is not finite")));
        }
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut post_activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = post_activations.last().map_or(input, Vec::as_slice);
            let pre = layer.forward_pre(x);
            let act = layer.activation();
            let post = pre.iter().map(|&v| act.apply(v)).collect();
            pre_activations.push(pre);
            post_activations.push(post);
        }
        let logits = post_activations.last().cloned().unwrap_or_default();
        let predicted_class = argmax(&logits);
        Ok(ActivationTrace {
            input: input.to_vec(),
            pre_activations,
            post_activations,
            logits,
            predicted_class,
        })
    }

    /// Predicted class (lowest index among maxima) and logits.
    pub fn predict(&self, input: &[f64]) -> Result<(usize, Vec<f64>)> {
        let trace = self.forward(input)?;
        Ok((trace.predicted_class, trace.logits))
    }

    fn check_unit(&self, unit: Unit) -> Result<(usize, usize, bool)> {
        let last = self.layers.len() - 1;
        let (layer, index, is_pre) = match unit {
            Unit::Pre { layer, index } => (layer, index, true),
            Unit::Post { layer, index } => (layer, index, false),
            Unit::Logit(i) => (last, i, false),
        };
        if layer > last {
            return Err(Error::Index {
                what: "layer",
                index: layer,
                len: self.layers.len(),
            });
        }
        let width = self.layers[layer].output_len();
        if index >= width {
            return Err(Error::Index {
                what: "neuron",
                index,
                len: width,
            });
        }
        Ok((layer, index, is_pre))
    }

    /// Exact gradient of `objective` with respect to `input`.
    pub fn input_gradient(&self, input: &[f64], objective: &Objective) -> Result<Vec<f64>> {
        let trace = self.forward(input)?;
        self.input_gradient_from_trace(&trace, objective)
    }

    /// As [`Network::input_gradient`], reusing an existing forward trace.
    pub fn input_gradient_from_trace(
        &self,
        trace: &ActivationTrace,
        objective: &Objective,
    ) -> Result<Vec<f64>> {
        let n = self.layers.len();
        let mut pre_seeds: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut post_seeds: Vec<Option<Vec<f64>>> = vec![None; n];
        for &(unit, coeff) in &objective.terms {
            let (layer, index, is_pre) = self.check_unit(unit)?;
            let seeds = if is_pre {
                &mut pre_seeds
            } else {
                &mut post_seeds
            };
            seeds[layer].get_or_insert_with(|| vec![0.0; self.layers[layer].output_len()])
                [index] += coeff;
        }
        let mut g = vec![0.0; self.output_len()];
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            if let Some(seed) = &post_seeds[i] {
                add_assign(&mut g, seed);
            }
            let act = layer.activation();
            for (gv, &p) in g.iter_mut().zip(&trace.pre_activations[i]) {
                *gv *= act.derivative(p);
            }
            if let Some(seed) = &pre_seeds[i] {
                add_assign(&mut g, seed);
            }
            g = layer.backward(trace.layer_input(i), &g, None);
        }
        Ok(g)
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_assign(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}
