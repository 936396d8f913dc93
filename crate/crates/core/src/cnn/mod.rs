//! Convolutional classifier over normalized motion matrices.
//!
//! The network is `conv(3×3)+relu [+maxpool 2×2]` repeated per
//! [`ConvSpec`], then flatten, a ReLU dense layer and a softmax output over
//! the 11 gesture classes. Parameters live in one flat list of tensors in
//! declaration order (conv weights, conv bias, ..., hidden weights, hidden
//! bias, output weights, output bias); optimizer state, gradients and the
//! weight file all share that order.
//!
//! The engine is generic over the float type: `f32` is the product path,
//! `f64` exists so gradient checks can isolate numerical error.

mod kernels;
mod train;
mod weights;

use std::borrow::Borrow;
use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landmark::GestureClass;
use crate::matrix::{MotionMatrix, MATRIX_COLS, MATRIX_ROWS};

pub use train::{
    evaluate, train, train_with_progress, EpochMetrics, EvalReport, TrainConfig, TrainError, TrainReport,
};
pub use weights::{
    load_weights, read_weights, save_weights, write_weights, WeightsError, FORMAT_VERSION, MAGIC,
    NORMALIZATION_TAG,
};

/// Product-path model.
pub type CnnModel = Network<f32>;

/// Input tensor: one channel, 90 rows (time × axis), 21 columns (keypoints).
pub const INPUT_SHAPE: TensorShape = TensorShape {
    channels: 1,
    height: MATRIX_ROWS,
    width: MATRIX_COLS,
};

pub trait Real:
    Float + AddAssign + SubAssign + MulAssign + Sum + Default + Debug + Send + Sync + 'static
{
    fn of(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("f64 converts to any Real")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    Config(String),
    #[error("model input must be a normalized motion matrix")]
    NotNormalized,
    #[error("empty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Valid,
    Same,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub pool_after: bool,
}

impl ConvSpec {
    pub fn new(filters: usize, pool_after: bool) -> Self {
        Self {
            filters,
            kernel_h: 3,
            kernel_w: 3,
            pool_after,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub conv_layers: Vec<ConvSpec>,
    pub dense_hidden: usize,
    pub num_classes: usize,
    pub l1_lambda: f64,
    pub padding: Padding,
}

impl Default for ArchitectureConfig {
    /// 33 → pool → 64 → 64 filters, 64 hidden units, L1 1e-4, valid padding.
    fn default() -> Self {
        Self {
            conv_layers: vec![
                ConvSpec::new(33, true),
                ConvSpec::new(64, false),
                ConvSpec::new(64, false),
            ],
            dense_hidden: 64,
            num_classes: GestureClass::COUNT,
            l1_lambda: 1e-4,
            padding: Padding::Valid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl TensorShape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Geometry of one conv block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub input: TensorShape,
    /// `(top, bottom, left, right)` zero padding.
    pub pad: (usize, usize, usize, usize),
    pub kernel_h: usize,
    pub kernel_w: usize,
    /// Convolution output, before pooling.
    pub conv_out: TensorShape,
    /// Block output (after pooling when configured).
    pub output: TensorShape,
    pub pool: bool,
}

impl ConvGeometry {
    fn padded(&self) -> (usize, usize) {
        (
            self.input.height + self.pad.0 + self.pad.1,
            self.input.width + self.pad.2 + self.pad.3,
        )
    }

    fn patch_len(&self) -> usize {
        self.input.channels * self.kernel_h * self.kernel_w
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Included in the L1 penalty.
    pub l1: bool,
    /// Fan-in used for initialization; zero for biases.
    pub fan_in: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub convs: Vec<ConvGeometry>,
    pub flatten: usize,
    pub hidden: usize,
    pub classes: usize,
    pub params: Vec<ParamSpec>,
}

impl ArchitectureConfig {
    /// Validate against the 90×21×1 input and derive every tensor shape.
    pub fn layout(&self) -> Result<Layout, ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.conv_layers.is_empty() {
            return bad("at least one convolutional layer is required".into());
        }
        if self.num_classes != GestureClass::COUNT {
            return bad(format!(
                "num_classes must be {}, got {}",
                GestureClass::COUNT,
                self.num_classes
            ));
        }
        if self.dense_hidden == 0 {
            return bad("dense_hidden must be at least 1".into());
        }
        if !(self.l1_lambda.is_finite() && self.l1_lambda >= 0.0) {
            return bad(format!("l1_lambda must be finite and >= 0, got {}", self.l1_lambda));
        }

        let mut convs = Vec::with_capacity(self.conv_layers.len());
        let mut params = Vec::new();
        let mut shape = INPUT_SHAPE;
        for (i, spec) in self.conv_layers.iter().enumerate() {
            let layer = i + 1;
            if spec.filters == 0 || spec.kernel_h == 0 || spec.kernel_w == 0 {
                return bad(format!("conv layer {layer}: filters and kernel must be >= 1"));
            }
            let pad = match self.padding {
                Padding::Valid => (0, 0, 0, 0),
                Padding::Same => {
                    let (ph, pw) = (spec.kernel_h - 1, spec.kernel_w - 1);
                    (ph / 2, ph - ph / 2, pw / 2, pw - pw / 2)
                }
            };
            let padded_h = shape.height + pad.0 + pad.1;
            let padded_w = shape.width + pad.2 + pad.3;
            if padded_h < spec.kernel_h || padded_w < spec.kernel_w {
                return bad(format!(
                    "conv layer {layer}: kernel {}x{} does not fit a {}x{} input",
                    spec.kernel_h, spec.kernel_w, shape.height, shape.width
                ));
            }
            let conv_out = TensorShape {
                channels: spec.filters,
                height: padded_h - spec.kernel_h + 1,
                width: padded_w - spec.kernel_w + 1,
            };
            let output = if spec.pool_after {
                TensorShape {
                    channels: spec.filters,
                    height: conv_out.height / 2,
                    width: conv_out.width / 2,
                }
            } else {
                conv_out
            };
            if output.height == 0 || output.width == 0 {
                return bad(format!(
                    "conv layer {layer}: pooling collapses a {}x{} map",
                    conv_out.height, conv_out.width
                ));
            }
            let geometry = ConvGeometry {
                input: shape,
                pad,
                kernel_h: spec.kernel_h,
                kernel_w: spec.kernel_w,
                conv_out,
                output,
                pool: spec.pool_after,
            };
            params.push(ParamSpec {
                name: format!("conv{layer}.weight"),
                shape: vec![spec.filters, shape.channels, spec.kernel_h, spec.kernel_w],
                l1: i > 0,
                fan_in: geometry.patch_len(),
            });
            params.push(ParamSpec {
                name: format!("conv{layer}.bias"),
                shape: vec![spec.filters],
                l1: false,
                fan_in: 0,
            });
            convs.push(geometry);
            shape = output;
        }
        let flatten = shape.len();
        params.push(ParamSpec {
            name: "hidden.weight".into(),
            shape: vec![self.dense_hidden, flatten],
            l1: true,
            fan_in: flatten,
        });
        params.push(ParamSpec {
            name: "hidden.bias".into(),
            shape: vec![self.dense_hidden],
            l1: false,
            fan_in: 0,
        });
        params.push(ParamSpec {
            name: "output.weight".into(),
            shape: vec![self.num_classes, self.dense_hidden],
            l1: false,
            fan_in: self.dense_hidden,
        });
        params.push(ParamSpec {
            name: "output.bias".into(),
            shape: vec![self.num_classes],
            l1: false,
            fan_in: 0,
        });
        Ok(Layout {
            convs,
            flatten,
            hidden: self.dense_hidden,
            classes: self.num_classes,
            params,
        })
    }

    pub fn param_count(&self) -> Result<usize, ModelError> {
        Ok(self.layout()?.params.iter().map(ParamSpec::len).sum())
    }
}

/// Output of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: [f64; GestureClass::COUNT],
    pub class: GestureClass,
    pub confidence: f64,
}

impl Prediction {
    fn from_logits<T: Real>(logits: &[T]) -> Self {
        let probabilities = softmax(logits);
        let (best, &confidence) = probabilities
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, (i, p)| if *p > *acc.1 { (i, p) } else { acc });
        let mut out = [0.0; GestureClass::COUNT];
        out.copy_from_slice(&probabilities);
        Self {
            probabilities: out,
            class: GestureClass::from_index(best).expect("class index in range"),
            confidence,
        }
    }
}

fn softmax<T: Real>(logits: &[T]) -> Vec<f64> {
    let max = logits.iter().map(|z| z.f64()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z.f64() - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-ln softmax(logits)[label]`, computed stably.
fn cross_entropy<T: Real>(logits: &[T], label: usize) -> f64 {
    let max = logits.iter().map(|z| z.f64()).fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z.f64() - max).exp()).sum::<f64>().ln();
    lse - logits[label].f64()
}

/// A normalized matrix with its true class.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub matrix: MotionMatrix,
    pub label: GestureClass,
}

impl Sample {
    pub fn new(matrix: MotionMatrix, label: GestureClass) -> Result<Self, ModelError> {
        if !matrix.is_normalized() {
            return Err(ModelError::NotNormalized);
        }
        Ok(Self { matrix, label })
    }

    pub fn from_capture(capture: &crate::landmark::Capture) -> Self {
        let matrix = MotionMatrix::encode_normalized(capture.frames())
            .expect("a capture always holds a full, finite window");
        Self {
            matrix,
            label: capture.label(),
        }
    }
}

/// Per-tensor gradients in parameter declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Vec<T>>,
}

/// Intermediate activations kept for backpropagation.
struct Trace<T> {
    /// Per conv block: im2col patches and post-ReLU conv output.
    convs: Vec<ConvTrace<T>>,
    flat: Vec<T>,
    hidden: Vec<T>,
    logits: Vec<T>,
}

struct ConvTrace<T> {
    cols: Vec<T>,
    activ: Vec<T>,
    /// Index into `activ` of each pooled maximum.
    argmax: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    config: ArchitectureConfig,
    layout: Layout,
    seed: u64,
    params: Vec<Vec<T>>,
}

impl<T: Real> Network<T> {
    /// Uniform fan-in initialization (`±sqrt(6 / fan_in)`), zero biases.
    pub fn init(config: ArchitectureConfig, seed: u64) -> Result<Self, ModelError> {
        let layout = config.layout()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = layout
            .params
            .iter()
            .map(|spec| {
                if spec.fan_in == 0 {
                    return vec![T::zero(); spec.len()];
                }
                let limit = (6.0 / spec.fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
                (0..spec.len()).map(|_| T::of(dist.sample(&mut rng))).collect()
            })
            .collect();
        Ok(Self {
            config,
            layout,
            seed,
            params,
        })
    }

    /// Every weight and bias zero.
    pub fn zeros(config: ArchitectureConfig) -> Result<Self, ModelError> {
        let layout = config.layout()?;
        let params = layout.params.iter().map(|s| vec![T::zero(); s.len()]).collect();
        Ok(Self {
            config,
            layout,
            seed: 0,
            params,
        })
    }

    pub(crate) fn from_parts(
        config: ArchitectureConfig,
        seed: u64,
        params: Vec<Vec<T>>,
    ) -> Result<Self, ModelError> {
        let layout = config.layout()?;
        debug_assert!(layout.params.iter().zip(&params).all(|(s, p)| s.len() == p.len()));
        Ok(Self {
            config,
            layout,
            seed,
            params,
        })
    }

    pub fn config(&self) -> &ArchitectureConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Seed the weights were initialized from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    pub fn params(&self) -> &[Vec<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.params
    }

    pub fn set_l1_lambda(&mut self, lambda: f64) {
        self.config.l1_lambda = lambda;
    }

    /// Convert every parameter to another float width.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            config: self.config.clone(),
            layout: self.layout.clone(),
            seed: self.seed,
            params: self
                .params
                .iter()
                .map(|t| t.iter().map(|v| U::of(v.f64())).collect())
                .collect(),
        }
    }

    pub fn forward(&self, matrix: &MotionMatrix) -> Result<Prediction, ModelError> {
        Ok(Prediction::from_logits(&self.logits(matrix)?))
    }

    pub fn logits(&self, matrix: &MotionMatrix) -> Result<Vec<T>, ModelError> {
        let input = to_input(matrix)?;
        Ok(self.trace(&input).logits)
    }

    /// Shape of every intermediate activation of one forward pass, paired
    /// with the number of values actually produced.
    pub fn activation_shapes(&self, matrix: &MotionMatrix) -> Result<Vec<(String, TensorShape, usize)>, ModelError> {
        let input = to_input(matrix)?;
        let trace = self.trace(&input);
        let mut out = vec![("input".to_string(), INPUT_SHAPE, input.len())];
        for (i, (g, t)) in self.layout.convs.iter().zip(&trace.convs).enumerate() {
            out.push((format!("conv{}", i + 1), g.conv_out, t.activ.len()));
            if g.pool {
                out.push((format!("pool{}", i + 1), g.output, t.argmax.len()));
            }
        }
        let flat = |n| TensorShape { channels: n, height: 1, width: 1 };
        out.push(("flatten".into(), flat(self.layout.flatten), trace.flat.len()));
        out.push(("hidden".into(), flat(self.layout.hidden), trace.hidden.len()));
        out.push(("output".into(), flat(self.layout.classes), trace.logits.len()));
        Ok(out)
    }

    /// `lambda * sum |w|` over the regularized weight tensors.
    pub fn l1_penalty(&self) -> f64 {
        if self.config.l1_lambda == 0.0 {
            return 0.0;
        }
        let mass: f64 = self
            .layout
            .params
            .iter()
            .zip(&self.params)
            .filter(|(spec, _)| spec.l1)
            .map(|(_, values)| values.iter().map(|w| w.f64().abs()).sum::<f64>())
            .sum();
        self.config.l1_lambda * mass
    }

    /// Mean categorical cross-entropy over the batch plus the L1 penalty.
    pub fn loss<S: Borrow<Sample>>(&self, batch: &[S]) -> Result<f64, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let mut total = 0.0;
        for sample in batch {
            let sample = sample.borrow();
            let input = to_input(&sample.matrix)?;
            total += cross_entropy(&self.trace(&input).logits, sample.label.index());
        }
        Ok(total / batch.len() as f64 + self.l1_penalty())
    }

    /// Loss and its exact gradient with respect to every parameter.
    ///
    /// ReLU and the L1 term use the zero subgradient at their kinks; max
    /// pooling routes the gradient to the first maximum of each window.
    pub fn backward<S: Borrow<Sample>>(&self, batch: &[S]) -> Result<(f64, Gradients<T>), ModelError> {
        let (loss, grads, _) = self.backward_counting(batch)?;
        Ok((loss, grads))
    }

    /// Like [`Network::backward`], also counting correct argmax predictions.
    pub(crate) fn backward_counting<S: Borrow<Sample>>(
        &self,
        batch: &[S],
    ) -> Result<(f64, Gradients<T>, usize), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grads: Vec<Vec<T>> = self.params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        let mut data_loss = 0.0;
        let mut correct = 0;
        for sample in batch {
            let sample = sample.borrow();
            let input = to_input(&sample.matrix)?;
            let trace = self.trace(&input);
            let label = sample.label.index();
            data_loss += cross_entropy(&trace.logits, label);
            let probs = softmax(&trace.logits);
            if argmax(&probs) == label {
                correct += 1;
            }
            let dlogits: Vec<T> = probs
                .iter()
                .enumerate()
                .map(|(c, p)| T::of((p - if c == label { 1.0 } else { 0.0 }) * scale))
                .collect();
            self.accumulate(&trace, &dlogits, &mut grads);
        }

        let lambda = T::of(self.config.l1_lambda);
        if self.config.l1_lambda != 0.0 {
            for ((spec, values), grad) in self.layout.params.iter().zip(&self.params).zip(&mut grads) {
                if !spec.l1 {
                    continue;
                }
                for (g, w) in grad.iter_mut().zip(values) {
                    if *w > T::zero() {
                        *g += lambda;
                    } else if *w < T::zero() {
                        *g -= lambda;
                    }
                }
            }
        }
        let loss = data_loss * scale + self.l1_penalty();
        Ok((loss, Gradients { tensors: grads }, correct))
    }

    fn trace(&self, input: &[T]) -> Trace<T> {
        let mut convs = Vec::with_capacity(self.layout.convs.len());
        let mut x = input.to_vec();
        for (i, geometry) in self.layout.convs.iter().enumerate() {
            let padded = kernels::pad(&x, geometry);
            let cols = kernels::im2col(&padded, geometry);
            let mut activ = kernels::conv_gemm(&cols, &self.params[2 * i], &self.params[2 * i + 1], geometry);
            kernels::relu(&mut activ);
            let (next, argmax) = if geometry.pool {
                kernels::max_pool(&activ, geometry)
            } else {
                (activ.clone(), Vec::new())
            };
            convs.push(ConvTrace { cols, activ, argmax });
            x = next;
        }
        let base = 2 * self.layout.convs.len();
        let flat = x;
        let mut hidden = kernels::dense(&flat, &self.params[base], &self.params[base + 1]);
        kernels::relu(&mut hidden);
        let logits = kernels::dense(&hidden, &self.params[base + 2], &self.params[base + 3]);
        Trace {
            convs,
            flat,
            hidden,
            logits,
        }
    }

    fn accumulate(&self, trace: &Trace<T>, dlogits: &[T], grads: &mut [Vec<T>]) {
        let base = 2 * self.layout.convs.len();
        let (conv_grads, dense_grads) = grads.split_at_mut(base);

        // output layer
        let (gw_h, rest) = dense_grads.split_at_mut(1);
        let (gb_h, rest) = rest.split_at_mut(1);
        let (gw_o, gb_o) = rest.split_at_mut(1);
        let mut dhidden = kernels::dense_backward(
            &trace.hidden,
            &self.params[base + 2],
            dlogits,
            &mut gw_o[0],
            &mut gb_o[0],
            true,
        );
        kernels::relu_mask(&mut dhidden, &trace.hidden);

        // hidden layer
        let mut dx = kernels::dense_backward(
            &trace.flat,
            &self.params[base],
            &dhidden,
            &mut gw_h[0],
            &mut gb_h[0],
            true,
        );

        for (i, geometry) in self.layout.convs.iter().enumerate().rev() {
            let t = &trace.convs[i];
            let mut dconv = if geometry.pool {
                kernels::max_pool_backward(&dx, &t.argmax, geometry.conv_out.len())
            } else {
                dx
            };
            kernels::relu_mask(&mut dconv, &t.activ);
            let (gw, gb) = conv_grads[2 * i..2 * i + 2].split_at_mut(1);
            dx = kernels::conv_backward(
                &t.cols,
                &self.params[2 * i],
                &dconv,
                &mut gw[0],
                &mut gb[0],
                geometry,
                i > 0,
            );
        }
    }
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
        .0
}

fn to_input<T: Real>(matrix: &MotionMatrix) -> Result<Vec<T>, ModelError> {
    if !matrix.is_normalized() {
        return Err(ModelError::NotNormalized);
    }
    Ok(matrix.values().iter().map(|&v| T::of(v)).collect())
}
