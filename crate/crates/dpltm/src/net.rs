//! Dense feed-forward ReLU network with hand-rolled reverse-mode gradients.
//!
//! The network computes `(W_K relu(.) + v_K) o ... o (W_0 x + v_0)`; zero
//! hidden layers degenerate to an affine map. Training mode applies inverted
//! dropout to hidden activations (survivors scaled by `1/(1-rate)`), so
//! eval-mode forward needs no correction. Forward passes record a tape of
//! pre-activations and dropout scales; `backward` replays it exactly.
//!
//! Forward/backward on a shared net are read-only with per-call tapes;
//! weight updates are the trainer's job (single writer).

use crate::error::{Error, Result};
use crate::num::Scalar;
use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Forward-pass mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// Dense ReLU network. Weights are `out_dim x in_dim`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepNet<T> {
    widths: Vec<usize>,
    weights: Vec<Array2<T>>,
    biases: Vec<Array1<T>>,
    dropout_rate: T,
    mode: Mode,
}

/// Activation record from one forward pass.
///
/// Holds the input, every pre-activation, and the realized dropout scale per
/// hidden unit (0 for dropped, `1/(1-rate)` for kept, 1 with dropout off).
#[derive(Debug, Clone)]
pub struct Tape<T> {
    widths: Vec<usize>,
    input: Array1<T>,
    pre: Vec<Array1<T>>,
    hidden: Vec<Array1<T>>,
    scales: Vec<Array1<T>>,
}

/// Gradient accumulator shaped like a [`DeepNet`].
#[derive(Debug, Clone)]
pub struct NetGradients<T> {
    pub d_weights: Vec<Array2<T>>,
    pub d_biases: Vec<Array1<T>>,
}

impl<T: Scalar> NetGradients<T> {
    pub fn zeros_like(net: &DeepNet<T>) -> Self {
        Self {
            d_weights: net.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            d_biases: net.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for w in &mut self.d_weights {
            w.fill(T::zero());
        }
        for b in &mut self.d_biases {
            b.fill(T::zero());
        }
    }
}

impl<T: Scalar> DeepNet<T> {
    /// Network with He-uniform weights (uniform on +-sqrt(6/fan_in)) and zero
    /// biases. `widths` runs input through hidden layers to the output.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], dropout_rate: T, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Dimension(
                "network needs at least input and output widths".into(),
            ));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::Dimension("layer widths must be positive".into()));
        }
        if !(dropout_rate >= T::zero() && dropout_rate < T::one()) {
            return Err(Error::Domain(format!(
                "dropout rate must lie in [0,1), got {dropout_rate}"
            )));
        }
        let mut weights = Vec::with_capacity(widths.len() - 1);
        let mut biases = Vec::with_capacity(widths.len() - 1);
        for k in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[k], widths[k + 1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| {
                T::of(rng.random_range(-bound..bound))
            });
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            widths: widths.to_vec(),
            weights,
            biases,
            dropout_rate,
            mode: Mode::Eval,
        })
    }

    /// Build from explicit parameters (used by tests and deserialization).
    pub fn from_parts(
        widths: Vec<usize>,
        weights: Vec<Array2<T>>,
        biases: Vec<Array1<T>>,
        dropout_rate: T,
    ) -> Result<Self> {
        if widths.len() < 2 || weights.len() != widths.len() - 1 || biases.len() != weights.len() {
            return Err(Error::Dimension("inconsistent layer list".into()));
        }
        for k in 0..weights.len() {
            if weights[k].dim() != (widths[k + 1], widths[k]) || biases[k].len() != widths[k + 1] {
                return Err(Error::Dimension(format!(
                    "layer {k} shape mismatch: weight {:?}, bias {}, expected ({}, {})",
                    weights[k].dim(),
                    biases[k].len(),
                    widths[k + 1],
                    widths[k]
                )));
            }
        }
        Ok(Self {
            widths,
            weights,
            biases,
            dropout_rate,
            mode: Mode::Eval,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Hidden-layer count.
    pub fn depth(&self) -> usize {
        self.widths.len() - 2
    }

    pub fn dropout_rate(&self) -> T {
        self.dropout_rate
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn weights(&self) -> &[Array2<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<T>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<T>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<T>] {
        &mut self.biases
    }

    /// Total parameter count.
    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn dropout_active(&self) -> bool {
        self.mode == Mode::Train && self.dropout_rate > T::zero()
    }

    /// Forward pass for general output width.
    ///
    /// `rng` is required exactly when dropout is active (train mode with a
    /// positive rate).
    pub fn forward_multi<R: Rng + ?Sized>(
        &self,
        x: &Array1<T>,
        mut rng: Option<&mut R>,
    ) -> Result<(Array1<T>, Tape<T>)> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if self.dropout_active() && rng.is_none() {
            return Err(Error::Domain(
                "train-mode forward with dropout needs a random stream".into(),
            ));
        }
        let layers = self.weights.len();
        let mut pre = Vec::with_capacity(layers);
        let mut hidden = Vec::with_capacity(layers.saturating_sub(1));
        let mut scales = Vec::with_capacity(layers.saturating_sub(1));
        let mut act = x.clone();
        for k in 0..layers {
            let z = self.weights[k].dot(&act) + &self.biases[k];
            pre.push(z.clone());
            if k + 1 == layers {
                act = z;
            } else {
                let mut h = z.mapv(|v| v.max(T::zero()));
                let scale = if self.dropout_active() {
                    let rng = rng.as_deref_mut().expect("checked above");
                    let keep = T::one() - self.dropout_rate;
                    let inv = keep.recip();
                    Array1::from_shape_fn(h.len(), |_| {
                        if T::of(rng.random::<f64>()) < keep {
                            inv
                        } else {
                            T::zero()
                        }
                    })
                } else {
                    Array1::from_elem(h.len(), T::one())
                };
                h = h * &scale;
                scales.push(scale);
                hidden.push(h.clone());
                act = h;
            }
        }
        let tape = Tape {
            widths: self.widths.clone(),
            input: x.clone(),
            pre,
            hidden,
            scales,
        };
        Ok((act, tape))
    }

    /// Scalar forward pass; the network must have output width 1.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &Array1<T>,
        rng: Option<&mut R>,
    ) -> Result<(T, Tape<T>)> {
        if self.output_dim() != 1 {
            return Err(Error::Dimension(format!(
                "scalar forward on a network with output width {}",
                self.output_dim()
            )));
        }
        let (out, tape) = self.forward_multi(x, rng)?;
        Ok((out[0], tape))
    }

    /// Reverse-mode gradients for the realized tape, accumulated into `grads`.
    ///
    /// `d_out` is the loss gradient with respect to the network outputs. The
    /// ReLU subgradient at exactly zero is taken as zero. Returns the loss
    /// gradient with respect to the input.
    pub fn backward_into(
        &self,
        tape: &Tape<T>,
        d_out: &Array1<T>,
        grads: &mut NetGradients<T>,
    ) -> Result<Array1<T>> {
        if tape.widths != self.widths {
            return Err(Error::TapeMismatch);
        }
        if d_out.len() != self.output_dim() {
            return Err(Error::Dimension(format!(
                "output gradient has {} entries, expected {}",
                d_out.len(),
                self.output_dim()
            )));
        }
        let layers = self.weights.len();
        let mut delta = d_out.clone();
        for k in (0..layers).rev() {
            let upstream = if k == 0 {
                &tape.input
            } else {
                &tape.hidden[k - 1]
            };
            for i in 0..delta.len() {
                let di = delta[i];
                if di != T::zero() {
                    for j in 0..upstream.len() {
                        grads.d_weights[k][[i, j]] += di * upstream[j];
                    }
                }
                grads.d_biases[k][i] += di;
            }
            // Gradient with respect to the layer input.
            let mut prev = self.weights[k].t().dot(&delta);
            if k > 0 {
                // Through dropout scaling and the ReLU gate.
                let z = &tape.pre[k - 1];
                let s = &tape.scales[k - 1];
                for j in 0..prev.len() {
                    prev[j] = if z[j] > T::zero() {
                        prev[j] * s[j]
                    } else {
                        T::zero()
                    };
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Convenience wrapper for scalar-output networks.
    pub fn backward(&self, tape: &Tape<T>, dl_dg: T) -> Result<(NetGradients<T>, Array1<T>)> {
        let mut grads = NetGradients::zeros_like(self);
        let d_out = Array1::from_elem(self.output_dim(), T::zero()) + dl_dg;
        let d_in = self.backward_into(tape, &d_out, &mut grads)?;
        Ok((grads, d_in))
    }
}
