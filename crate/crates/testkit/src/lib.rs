//! Fixtures and independent oracles shared by the test suites.
//!
//! The naive forward pass here is written directly from the layer
//! definitions with explicit loops and bounds checks; it shares no code with
//! the im2col engine it is used to check.

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use gestr_core::cnn::{self, load_weights, save_weights, Padding, TrainReport};
use gestr_core::matrix::{MATRIX_COLS, MATRIX_ROWS};
use gestr_core::synth::generate_dataset;
use gestr_core::{ArchitectureConfig, Capture, CnnModel, GestureClass, MotionMatrix, Network, Sample, TrainConfig};

pub const REFERENCE_SEED: u64 = 7;

/// 10 captures per class plus 20 neutral.
pub fn reference_train_set() -> Vec<Capture> {
    generate_dataset(REFERENCE_SEED, 10, 2)
}

/// Held-out set drawn from an unrelated seed.
pub fn reference_val_set() -> Vec<Capture> {
    generate_dataset(1007, 4, 2)
}

/// Defaults except the learning rate.
pub fn reference_train_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-4,
        seed: REFERENCE_SEED,
        ..TrainConfig::default()
    }
}

pub fn samples(captures: &[Capture]) -> Vec<Sample> {
    captures.iter().map(Sample::from_capture).collect()
}

pub fn train_reference() -> (CnnModel, TrainReport) {
    let model = CnnModel::init(ArchitectureConfig::default(), REFERENCE_SEED).expect("default architecture");
    cnn::train(
        model,
        &samples(&reference_train_set()),
        &samples(&reference_val_set()),
        &reference_train_config(),
    )
    .expect("reference training converges")
}

fn reference_cache_path(cache_dir: &Path) -> PathBuf {
    let mut h = DefaultHasher::new();
    env!("CARGO_PKG_VERSION").hash(&mut h);
    format!("{:?}", reference_train_config()).hash(&mut h);
    format!("{:?}", ArchitectureConfig::default()).hash(&mut h);
    for c in reference_train_set() {
        c.to_text().hash(&mut h);
    }
    cache_dir.join(format!("reference-{:016x}.gstr", h.finish()))
}

/// Store a freshly trained reference model for later [`reference_model`]
/// calls.
pub fn store_reference(cache_dir: &Path, model: &CnnModel) {
    let path = reference_cache_path(cache_dir);
    fs::create_dir_all(cache_dir).expect("cache dir");
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    save_weights(model, &tmp).expect("write cached model");
    fs::rename(&tmp, &path).expect("publish cached model");
}

/// The reference model, trained on first use and cached in `cache_dir`.
/// Training is deterministic, so a cached copy equals a fresh one.
pub fn reference_model(cache_dir: &Path) -> CnnModel {
    let path = reference_cache_path(cache_dir);
    if let Ok(model) = load_weights(&path) {
        return model;
    }
    let (model, _) = train_reference();
    store_reference(cache_dir, &model);
    model
}

/// Result of the naive forward pass: logits plus the discrete choices made
/// along the way (ReLU on/off per unit, argmax per pooling window).
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveTrace {
    pub logits: Vec<f64>,
    pub pattern: Vec<usize>,
}

/// Reference forward pass in f64 with explicit loops.
pub fn naive_forward<T: gestr_core::cnn::Real>(model: &Network<T>, matrix: &MotionMatrix) -> NaiveTrace {
    let config = model.config();
    let params: Vec<Vec<f64>> = model
        .params()
        .iter()
        .map(|t| t.iter().map(|v| v.f64()).collect())
        .collect();
    let mut pattern = Vec::new();

    // activation as [channel][row][col]
    let mut act: Vec<Vec<Vec<f64>>> = vec![(0..MATRIX_ROWS).map(|r| matrix.row(r).to_vec()).collect()];
    for (i, spec) in config.conv_layers.iter().enumerate() {
        let weights = &params[2 * i];
        let bias = &params[2 * i + 1];
        let in_ch = act.len();
        let (h, w) = (act[0].len(), act[0][0].len());
        let (kh, kw) = (spec.kernel_h, spec.kernel_w);
        let (top, left, oh, ow) = match config.padding {
            Padding::Valid => (0isize, 0isize, h + 1 - kh, w + 1 - kw),
            Padding::Same => (((kh - 1) / 2) as isize, ((kw - 1) / 2) as isize, h, w),
        };
        let mut out = vec![vec![vec![0.0; ow]; oh]; spec.filters];
        for (o, plane) in out.iter_mut().enumerate() {
            for (y, row) in plane.iter_mut().enumerate() {
                for (x, cell) in row.iter_mut().enumerate() {
                    let mut s = bias[o];
                    for c in 0..in_ch {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let sy = y as isize + ky as isize - top;
                                let sx = x as isize + kx as isize - left;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                let wi = ((o * in_ch + c) * kh + ky) * kw + kx;
                                s += weights[wi] * act[c][sy as usize][sx as usize];
                            }
                        }
                    }
                    pattern.push(usize::from(s > 0.0));
                    *cell = s.max(0.0);
                }
            }
        }
        if spec.pool_after {
            out = out
                .iter()
                .map(|plane| {
                    (0..plane.len() / 2)
                        .map(|y| {
                            (0..plane[0].len() / 2)
                                .map(|x| {
                                    let cands = [
                                        plane[2 * y][2 * x],
                                        plane[2 * y][2 * x + 1],
                                        plane[2 * y + 1][2 * x],
                                        plane[2 * y + 1][2 * x + 1],
                                    ];
                                    let mut best = 0;
                                    for k in 1..4 {
                                        if cands[k] > cands[best] {
                                            best = k;
                                        }
                                    }
                                    pattern.push(best);
                                    cands[best]
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
        }
        act = out;
    }

    let flat: Vec<f64> = act.into_iter().flatten().flatten().collect();
    let base = 2 * config.conv_layers.len();
    let dense = |x: &[f64], w: &[f64], b: &[f64]| -> Vec<f64> {
        (0..b.len())
            .map(|o| b[o] + (0..x.len()).map(|k| w[o * x.len() + k] * x[k]).sum::<f64>())
            .collect()
    };
    let hidden: Vec<f64> = dense(&flat, &params[base], &params[base + 1])
        .into_iter()
        .map(|v| {
            pattern.push(usize::from(v > 0.0));
            v.max(0.0)
        })
        .collect();
    let logits = dense(&hidden, &params[base + 2], &params[base + 3]);
    NaiveTrace { logits, pattern }
}

/// Softmax cross-entropy of the naive logits, computed the textbook way.
pub fn naive_cross_entropy(logits: &[f64], label: GestureClass) -> f64 {
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    -(logits[label.index()].exp() / z).ln()
}

pub fn random_normalized_matrix(state: &mut u64) -> MotionMatrix {
    let values = (0..MATRIX_ROWS * MATRIX_COLS).map(|_| next_unit(state) * 3.0 - 1.0).collect();
    MotionMatrix::from_raw(values).expect("finite").normalize().expect("normalizes")
}

/// SplitMix64 step mapped to [0, 1).
pub fn next_unit(state: &mut u64) -> f64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Debug, Clone, Default)]
pub struct GradientCheck {
    pub checked: usize,
    /// Entries whose perturbation changed a ReLU or pooling decision; the
    /// central difference is not a derivative there, so they are rechecked
    /// with a smaller step.
    pub kinks_rechecked: usize,
    /// Largest relative error over entries whose gradient magnitude exceeds
    /// the absolute floor.
    pub worst_relative: f64,
    /// Entries with `max(|analytic|, |numeric|) > 1e-6`.
    pub above_floor: usize,
    pub failures: Vec<String>,
}

impl GradientCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

/// Agreement rule: relative error at most `1e-3`, or absolute error at most
/// `1e-6`.
pub fn gradients_agree(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= 1e-6 || diff <= 1e-3 * analytic.abs().max(numeric.abs())
}

/// Scale every tensor by `scale` and push each regularized weight at least
/// `2h` away from zero so the L1 term stays differentiable under a step of
/// `h`.
pub fn prepare_for_gradient_check(model: &mut Network<f64>, scale: f64, h: f64) {
    let specs = model.layout().params.clone();
    for (spec, tensor) in specs.iter().zip(model.params_mut()) {
        for w in tensor.iter_mut() {
            *w *= scale;
            if spec.l1 && w.abs() < 2.0 * h {
                *w = if *w < 0.0 { -2.0 * h } else { 2.0 * h };
            }
        }
    }
}

/// Central finite differences of the full loss against [`Network::backward`].
///
/// `per_tensor = None` checks every entry; `Some(k)` checks `k` evenly
/// spread entries of each tensor.
pub fn finite_difference_check(model: &Network<f64>, batch: &[Sample], h: f64, per_tensor: Option<usize>) -> GradientCheck {
    let (_, grads) = model.backward(batch).expect("valid batch");
    let base_pattern: Vec<Vec<usize>> = batch.iter().map(|s| naive_forward(model, &s.matrix).pattern).collect();
    let mut report = GradientCheck::default();
    let mut probe = model.clone();
    for (t, spec) in model.layout().params.iter().enumerate() {
        let len = spec.len();
        let indices: Vec<usize> = match per_tensor {
            None => (0..len).collect(),
            Some(k) => {
                let k = k.min(len);
                (0..k).map(|j| j * len / k).collect()
            }
        };
        for i in indices {
            let analytic = grads.tensors[t][i];
            let numeric_at = |probe: &mut Network<f64>, step: f64| -> (f64, bool) {
                let original = probe.params()[t][i];
                let mut smooth = true;
                let mut side = |probe: &mut Network<f64>, v: f64| {
                    probe.params_mut()[t][i] = v;
                    for (s, base) in batch.iter().zip(&base_pattern) {
                        if naive_forward(probe, &s.matrix).pattern != *base {
                            smooth = false;
                        }
                    }
                    probe.loss(batch).expect("valid batch")
                };
                let plus = side(probe, original + step);
                let minus = side(probe, original - step);
                probe.params_mut()[t][i] = original;
                ((plus - minus) / (2.0 * step), smooth)
            };
            let (mut numeric, smooth) = numeric_at(&mut probe, h);
            if !smooth {
                report.kinks_rechecked += 1;
                numeric = numeric_at(&mut probe, h * 1e-3).0;
            }
            report.checked += 1;
            let magnitude = analytic.abs().max(numeric.abs());
            if magnitude > 1e-6 {
                report.above_floor += 1;
                report.worst_relative = report.worst_relative.max((analytic - numeric).abs() / magnitude);
            }
            if !gradients_agree(analytic, numeric) {
                report.failures.push(format!("{}[{i}]: analytic {analytic:e}, numeric {numeric:e}", spec.name));
            }
        }
    }
    report
}
