//! Joint maximum-likelihood fitting: full-batch Adam on the mean negative
//! log-likelihood with early stopping on the validation loss, plus data
//! splitting and hyperparameter grid search.
//!
//! Protocol: `beta` starts at zero, every free spline parameter at -1, the
//! network at He-uniform; one Adam step per epoch on the full training batch;
//! after each epoch the validation loss is computed with dropout disabled;
//! training stops when it fails to improve for `patience` consecutive epochs
//! and the best-epoch parameters are restored.

use crate::data::{SplitTag, SurvivalDataset};
use crate::error::{Error, Result};
use crate::error_family::ErrorModel;
use crate::model::{DpltmParams, SplineDesign};
use crate::net::{DeepNet, Mode};
use crate::num::Scalar;
use crate::opt::{Adam, AdamConfig};
use crate::spline::{MonotoneSpline, SplineBasis};
use ndarray::Array1;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Hyperparameters for one fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<T> {
    pub epochs: usize,
    pub learning_rate: T,
    pub dropout_rate: T,
    /// Hidden-layer count; zero degenerates the network to an affine map.
    pub hidden_layers: usize,
    /// Shared width of every hidden layer.
    pub hidden_width: usize,
    pub interior_knots: usize,
    pub spline_order: usize,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub adam_beta1: T,
    pub adam_beta2: T,
    pub adam_epsilon: T,
    /// Global-norm bound applied to the mean-objective gradient before the
    /// Adam update; `None` disables clipping. The hazard of the error family
    /// is exponential in the linear predictor, so a transiently inflated
    /// transformation can emit gradient spikes that poison Adam's second
    /// moment for thousands of steps; a generous bound only ever touches
    /// those spikes.
    pub grad_clip_norm: Option<T>,
    pub seed: u64,
}

impl<T: Scalar> TrainConfig<T> {
    /// Defaults that fit the simulated designs well under full-batch Adam:
    /// cubic splines, a 2x20 network with dropout 0.1, one gradient step per
    /// epoch with a unit global-norm clip, and a long patience window (the
    /// validation loss is noisy at one step per epoch).
    pub fn new(seed: u64) -> Self {
        Self {
            epochs: 1000,
            learning_rate: T::of(2e-2),
            dropout_rate: T::of(0.1),
            hidden_layers: 2,
            hidden_width: 20,
            interior_knots: 8,
            spline_order: 4,
            patience: 100,
            adam_beta1: T::of(0.9),
            adam_beta2: T::of(0.999),
            adam_epsilon: T::of(1e-8),
            grad_clip_norm: Some(T::of(1.0)),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Domain("epochs must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Domain("patience must be at least 1".into()));
        }
        if !(self.learning_rate > T::zero()) {
            return Err(Error::Domain("learning rate must be positive".into()));
        }
        if !(self.dropout_rate >= T::zero() && self.dropout_rate < T::one()) {
            return Err(Error::Domain("dropout rate must lie in [0,1)".into()));
        }
        if self.hidden_layers > 0 && self.hidden_width == 0 {
            return Err(Error::Domain("hidden width must be positive".into()));
        }
        Ok(())
    }
}

/// Scale `grad` down to the given global norm when it exceeds it.
pub fn clip_global_norm<T: Scalar>(grad: &mut [T], bound: T) {
    let norm = grad.iter().map(|g| *g * *g).sum::<T>().sqrt();
    if norm > bound {
        let scale = bound / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
}

/// Default interior-knot count `floor(n^(1/3))` for a training-split size,
/// tunable up to twice that by grid search.
pub fn default_interior_knots(n: usize) -> usize {
    let mut k = 1usize;
    while (k + 1).pow(3) <= n {
        k += 1;
    }
    k.max(1)
}

/// Outcome of one fit.
#[derive(Debug, Clone)]
pub struct FitResult<T> {
    pub params: DpltmParams<T>,
    /// Mean training negative log-likelihood per epoch; entry 0 is the
    /// initialization, entry e the state after epoch e (dropout disabled).
    pub train_curve: Vec<T>,
    /// Mean validation negative log-likelihood on the same schedule.
    pub val_curve: Vec<T>,
    /// Epoch whose parameters were restored (the running validation minimum).
    pub best_epoch: usize,
    /// Validation log-likelihood (sum over records) at the best epoch.
    pub best_val_loglik: T,
    pub config: TrainConfig<T>,
}

/// One leaderboard row from a grid search, in grid order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridEntry<T> {
    pub index: usize,
    pub val_loglik: T,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub selected: bool,
}

/// Fit all parameters jointly on the training split, early-stopping on the
/// validation split, and return the best-epoch model (mean-centered).
pub fn fit<T: Scalar>(
    train: &SurvivalDataset<T>,
    validation: &SurvivalDataset<T>,
    error: ErrorModel<T>,
    config: &TrainConfig<T>,
) -> Result<FitResult<T>> {
    config.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Domain(
            "training and validation splits must be nonempty".into(),
        ));
    }
    if train.p() != validation.p() || train.d() != validation.d() {
        return Err(Error::Dimension(
            "training and validation splits disagree on covariate dimensions".into(),
        ));
    }

    // Spline support is the observed training time range.
    let (lo, hi) = train.time_range()?;
    if !(lo < hi) {
        return Err(Error::Domain(
            "training times are all equal; spline support is degenerate".into(),
        ));
    }
    let basis = SplineBasis::new(config.spline_order, config.interior_knots, lo, hi)?;
    let spline = MonotoneSpline::with_constant_free(basis, T::of(-1.0));

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut widths = vec![train.d()];
    widths.extend(std::iter::repeat(config.hidden_width).take(config.hidden_layers));
    widths.push(1);
    let net = DeepNet::init(&widths, config.dropout_rate, &mut rng)?;

    let beta = Array1::zeros(train.p());
    let mut params = DpltmParams::new(beta, spline, net, error)?;

    let train_design = SplineDesign::new(&params, train);
    let val_design = SplineDesign::new(&params, validation);
    let n_train = T::from_usize(train.len()).unwrap();
    let n_val = T::from_usize(validation.len()).unwrap();

    let mut flat = params.pack();
    let adam_config = AdamConfig {
        learning_rate: config.learning_rate,
        beta1: config.adam_beta1,
        beta2: config.adam_beta2,
        epsilon: config.adam_epsilon,
    };
    let mut adam = Adam::new(adam_config, flat.len());

    let eval_nll = |params: &DpltmParams<T>,
                    data: &SurvivalDataset<T>,
                    design: &SplineDesign<T>,
                    n: T|
     -> Result<T> { Ok(-params.loglik_with_design(data, design)? / n) };

    let mut train_curve = vec![eval_nll(&params, train, &train_design, n_train)?];
    let mut val_curve = vec![eval_nll(&params, validation, &val_design, n_val)?];
    if !train_curve[0].is_finite() || !val_curve[0].is_finite() {
        return Err(Error::NonFinite {
            epoch: 0,
            context: "initial loss".into(),
        });
    }

    let mut best_epoch = 0usize;
    let mut best_val = val_curve[0];
    let mut best_flat = flat.clone();
    let mut strikes = 0usize;

    for epoch in 1..=config.epochs {
        params.unpack(&flat);
        let (loglik, grad) =
            params.loglik_with_grad(train, &train_design, Mode::Train, Some(&mut rng))?;
        if !loglik.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                context: "gradient pass".into(),
            });
        }
        // Minimize the mean negative log-likelihood.
        let mut flat_grad = params.pack_grad(&grad);
        for g in &mut flat_grad {
            *g = -*g / n_train;
        }
        if let Some(bound) = config.grad_clip_norm {
            clip_global_norm(&mut flat_grad, bound);
        }
        adam.step(&mut flat, &flat_grad);

        params.unpack(&flat);
        let train_nll = eval_nll(&params, train, &train_design, n_train)?;
        let val_nll = eval_nll(&params, validation, &val_design, n_val)?;
        if !train_nll.is_finite() || !val_nll.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                context: "epoch evaluation".into(),
            });
        }
        train_curve.push(train_nll);
        val_curve.push(val_nll);

        if val_nll < best_val {
            best_val = val_nll;
            best_epoch = epoch;
            best_flat.copy_from_slice(&flat);
            strikes = 0;
        } else {
            strikes += 1;
            if strikes >= config.patience {
                break;
            }
        }
    }

    // Restore the best-epoch parameters and center the network output on the
    // training sample.
    params.unpack(&best_flat);
    params.finalize_centering(train)?;

    Ok(FitResult {
        params,
        train_curve,
        val_curve,
        best_epoch,
        best_val_loglik: -best_val * n_val,
        config: *config,
    })
}

/// Fit every config and keep the best validation log-likelihood; ties go to
/// the earliest grid entry.
pub fn grid_search<T: Scalar>(
    train: &SurvivalDataset<T>,
    validation: &SurvivalDataset<T>,
    error: ErrorModel<T>,
    grid: &[TrainConfig<T>],
) -> Result<(FitResult<T>, Vec<GridEntry<T>>)> {
    if grid.is_empty() {
        return Err(Error::Domain(
            "grid search needs at least one config".into(),
        ));
    }
    let mut best: Option<FitResult<T>> = None;
    let mut board = Vec::with_capacity(grid.len());
    for (index, config) in grid.iter().enumerate() {
        let result = fit(train, validation, error, config)?;
        board.push(GridEntry {
            index,
            val_loglik: result.best_val_loglik,
            best_epoch: result.best_epoch,
            epochs_run: result.val_curve.len() - 1,
            selected: false,
        });
        let better = match &best {
            None => true,
            Some(b) => result.best_val_loglik > b.best_val_loglik,
        };
        if better {
            best = Some(result);
        }
    }
    let best = best.expect("nonempty grid");
    let chosen = best_entry_index(&board);
    board[chosen].selected = true;
    Ok((best, board))
}

fn best_entry_index<T: Scalar>(board: &[GridEntry<T>]) -> usize {
    let mut idx = 0;
    for (i, e) in board.iter().enumerate().skip(1) {
        if e.val_loglik > board[idx].val_loglik {
            idx = i;
        }
    }
    idx
}

/// Seeded uniform shuffle followed by contiguous cuts. The partition is
/// exact and disjoint; fractional row counts are settled by largest
/// remainder, earliest split first. Two fractions tag the outputs
/// train/validation, three tag train/validation/test.
pub fn split<T: Scalar>(
    data: &SurvivalDataset<T>,
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<SurvivalDataset<T>>> {
    if fractions.len() < 2 {
        return Err(Error::Domain("need at least two split fractions".into()));
    }
    if fractions.iter().any(|&f| f <= 0.0) {
        return Err(Error::Domain("split fractions must be positive".into()));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "split fractions must sum to 1, got {total}"
        )));
    }
    let n = data.len();
    let mut counts: Vec<usize> = fractions
        .iter()
        .map(|f| (f * n as f64).floor() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = fractions[a] * n as f64 - counts[a] as f64;
        let rb = fractions[b] * n as f64 - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for k in 0..n - assigned {
        counts[order[k % order.len()]] += 1;
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let tags: &[SplitTag] = match fractions.len() {
        2 => &[SplitTag::Train, SplitTag::Validation],
        3 => &[SplitTag::Train, SplitTag::Validation, SplitTag::Test],
        _ => &[],
    };
    let mut out = Vec::with_capacity(fractions.len());
    let mut start = 0;
    for (k, &count) in counts.iter().enumerate() {
        let mut part = data.subset(&indices[start..start + count]);
        if let Some(&tag) = tags.get(k) {
            part.set_split_tag(tag);
        }
        out.push(part);
        start += count;
    }
    Ok(out)
}
