//! Fixing policies: trace of recent iterates -> probability of converging to 1.
//!
//! The learned policy cuts each variable's `beta`-long trace into `alpha`
//! windows of width `d_h`, appends a sinusoidal positional code to every
//! window, and runs the resulting `alpha` tokens through a small attention
//! encoder followed by an MLP head with a sigmoid output. A non-learned
//! baseline, [`heuristic_policy`], is provided for comparison.

mod model_file;
mod network;

pub use model_file::MODEL_FORMAT_VERSION;
pub use network::{
    sigmoid, BatchStats, ForwardCache, Mode, PolicyWeights, Scalar, TensorKind, TensorView,
    TensorViewMut, BN_MOMENTUM,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network shape and initialisation seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    /// Trace length.
    pub beta: usize,
    /// Sliding-window width `d_h`.
    pub window: usize,
    pub stride: usize,
    /// Token width `d_n`.
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub d_ff: usize,
    pub mlp_dims: Vec<usize>,
    pub use_attention: bool,
    pub seed: u64,
}

impl PolicyConfig {
    /// Default architecture with `d_h = stride = beta / 10`.
    pub fn for_beta(beta: usize) -> Self {
        let window = (beta / 10).max(1);
        PolicyConfig {
            beta,
            window,
            stride: window,
            d_model: 128,
            heads: 8,
            layers: 2,
            d_ff: 512,
            mlp_dims: vec![256, 128, 16],
            use_attention: true,
            seed: 0,
        }
    }

    /// Number of windows (tokens) per trace.
    pub fn alpha(&self) -> usize {
        (self.beta - self.window) / self.stride + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window > self.beta {
            return Err(Error::invalid("window", "must lie in [1, beta]"));
        }
        if self.stride == 0 || (self.beta - self.window) % self.stride != 0 {
            return Err(Error::invalid("stride", "must be positive and divide beta - window"));
        }
        if self.use_attention {
            if self.heads == 0 || self.d_model == 0 || self.d_model % self.heads != 0 {
                return Err(Error::invalid("heads", "d_model must be a positive multiple of heads"));
            }
            if self.d_ff == 0 {
                return Err(Error::invalid("d_ff", "must be positive"));
            }
        }
        if self.mlp_dims.contains(&0) {
            return Err(Error::invalid("mlp_dims", "hidden widths must be positive"));
        }
        Ok(())
    }

    /// Width of the flattened token sequence fed to the MLP head.
    pub fn flat_width(&self) -> usize {
        if self.use_attention {
            self.alpha() * self.d_model
        } else {
            self.alpha() * 2 * self.window
        }
    }
}

/// Cuts a trace into `alpha` rows; row `k` is `trace[k*stride .. k*stride + d_h]`.
pub fn embed_window(trace: &[f64], cfg: &PolicyConfig) -> Result<Array2<f64>> {
    if trace.len() != cfg.beta {
        return Err(Error::invalid(
            "trace",
            format!("expected {} values, got {}", cfg.beta, trace.len()),
        ));
    }
    let alpha = cfg.alpha();
    Ok(Array2::from_shape_fn((alpha, cfg.window), |(k, j)| trace[k * cfg.stride + j]))
}

/// Sinusoidal code for positions `1..=alpha`:
/// `PE(k, 2j) = sin(k / 10000^(2j/d_h))`, `PE(k, 2j+1) = cos(k / 10000^(2j/d_h))`.
pub fn positional_encoding(alpha: usize, d_h: usize) -> Array2<f64> {
    Array2::from_shape_fn((alpha, d_h), |(row, col)| {
        let k = (row + 1) as f64;
        let j = (col / 2) as f64;
        let angle = k / 10000f64.powf(2.0 * j / d_h as f64);
        if col % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Column-wise concatenation `[z | pe]`.
pub fn attach_pe(z: &Array2<f64>, pe: &Array2<f64>) -> Result<Array2<f64>> {
    if z.dim() != pe.dim() {
        return Err(Error::invalid(
            "pe",
            format!("shape {:?} does not match embedding {:?}", pe.dim(), z.dim()),
        ));
    }
    Ok(ndarray::concatenate![ndarray::Axis(1), *z, *pe])
}

/// Fraction of the trace strictly above 0.5.
pub fn heuristic_policy(trace: &[f64]) -> f64 {
    if trace.is_empty() {
        return 0.5;
    }
    trace.iter().filter(|&&v| v > 0.5).count() as f64 / trace.len() as f64
}

/// Probabilities for a row-major `u x beta` batch of traces, using the
/// batch-norm statistics selected by the weights' mode.
pub fn forward<F: Scalar>(traces: &[f64], weights: &PolicyWeights<F>) -> Result<Vec<f64>> {
    weights.predict(traces)
}
