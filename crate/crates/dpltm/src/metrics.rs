//! Evaluation metrics: relative error of the nonparametric estimate, weighted
//! integrated squared error of the transformation, concordance index, and the
//! integrated calibration index.
//!
//! All functions here are pure over arrays and safe to run in parallel across
//! replications.

use crate::error::{Error, Result};
use crate::num::Scalar;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One evaluation summary. `re_g` and `wise_h` need ground truth and stay
/// empty when none is available.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport<T> {
    pub re_g: Option<T>,
    pub wise_h: Option<T>,
    pub c_index: T,
    /// Keyed by horizon label (`t25`, `t50`, `t75`, or explicit times).
    pub ici: BTreeMap<String, T>,
}

/// Relative error of the recentred nonparametric estimate:
///
/// ```text
/// RE = sqrt( sum_i [(ghat_i - mean ghat) - g0_i]^2 / sum_i g0_i^2 )
/// ```
///
/// The recentring happens inside the metric, on the evaluation sample.
pub fn relative_error_g<T: Scalar>(g_hat: &[T], g0: &[T]) -> Result<T> {
    if g_hat.len() != g0.len() || g_hat.is_empty() {
        return Err(Error::Dimension(format!(
            "estimate and truth lengths disagree: {} vs {}",
            g_hat.len(),
            g0.len()
        )));
    }
    let n = T::from_usize(g_hat.len()).unwrap();
    let mean = g_hat.iter().copied().sum::<T>() / n;
    let mut num = T::zero();
    let mut den = T::zero();
    for (&gh, &g0v) in g_hat.iter().zip(g0) {
        let diff = (gh - mean) - g0v;
        num += diff * diff;
        den += g0v * g0v;
    }
    if den == T::zero() {
        return Err(Error::DegenerateTruth);
    }
    Ok((num / den).sqrt())
}

/// Weighted integrated squared error of the transformation estimate over
/// `[0, t_max]` with weight `1/t_max`, by the trapezoidal rule on
/// `grid_size` nodes.
///
/// The first node sits one step above zero: all three reference
/// transformations diverge to minus infinity at the origin while their
/// squared difference stays integrable, so the quadrature simply starts
/// inside the domain.
pub fn wise_h<T: Scalar>(
    h_hat: impl Fn(T) -> T,
    h0: impl Fn(T) -> T,
    t_max: T,
    grid_size: usize,
) -> Result<T> {
    if !(t_max > T::zero()) {
        return Err(Error::Domain(format!(
            "t_max must be positive, got {t_max}"
        )));
    }
    if grid_size < 2 {
        return Err(Error::Domain("need at least two grid nodes".into()));
    }
    let m = T::from_usize(grid_size).unwrap();
    let step = t_max / m;
    let sq = |t: T| {
        let d = h_hat(t) - h0(t);
        d * d
    };
    let mut acc = T::zero();
    let mut prev = sq(step);
    for k in 2..=grid_size {
        let t = t_max * T::from_usize(k).unwrap() / m;
        let cur = sq(t);
        acc += (prev + cur) * step / T::of(2.0);
        prev = cur;
    }
    Ok(acc / t_max)
}

/// Concordance index, computed exactly as the empirical double sum
///
/// ```text
/// C = sum_ij D_i 1(T_i <= T_j) 1(score_i >= score_j)
///     ------------------------------------------------
///     sum_ij D_i 1(T_i <= T_j)
/// ```
///
/// including the `i = j` diagonal terms, which the printed formula counts in
/// both sums. Ties on scores count through the `>=`.
pub fn c_index<T: Scalar>(scores: &[T], times: &[T], events: &[u8]) -> Result<T> {
    let n = times.len();
    if scores.len() != n || events.len() != n {
        return Err(Error::Dimension("c-index input lengths disagree".into()));
    }
    let mut num = 0u64;
    let mut den = 0u64;
    for i in 0..n {
        if events[i] == 0 {
            continue;
        }
        for j in 0..n {
            if times[i] <= times[j] {
                den += 1;
                if scores[i] >= scores[j] {
                    num += 1;
                }
            }
        }
    }
    if den == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(T::of(num as f64 / den as f64))
}

/// Empirical percentiles of the observed event times (`t25`, `t50`, `t75`),
/// with linear interpolation between order statistics.
pub fn percentile_times<T: Scalar>(times: &[T], events: &[u8]) -> Result<(T, T, T)> {
    let mut event_times: Vec<T> = times
        .iter()
        .zip(events)
        .filter(|&(_, &d)| d == 1)
        .map(|(&t, _)| t)
        .collect();
    if event_times.is_empty() {
        return Err(Error::Domain("no events: percentiles undefined".into()));
    }
    event_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((
        sorted_quantile(&event_times, 0.25),
        sorted_quantile(&event_times, 0.50),
        sorted_quantile(&event_times, 0.75),
    ))
}

/// Interpolated quantile of a sorted slice (the `h = (n-1)p` convention).
fn sorted_quantile<T: Scalar>(sorted: &[T], p: f64) -> T {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let w = T::of(h - lo as f64);
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

/// Integrated calibration index at horizon `t0`: the mean absolute gap
/// between the predicted event probabilities and observed probabilities
/// estimated by a calibration model.
///
/// The calibration model is a proportional-hazards regression on a natural
/// cubic spline (4 df) in the complementary log-log of the prediction,
/// `log(-log(1 - p))`, with the baseline cumulative hazard from the
/// Nelson-Aalen-style step estimator restricted to `t0`. Degenerate
/// predictions (all equal) reduce the model to intercept-only and the index
/// stays defined.
pub fn ici<T: Scalar>(p_hat: &[T], times: &[T], events: &[u8], t0: T) -> Result<T> {
    let n = times.len();
    if p_hat.len() != n || events.len() != n || n == 0 {
        return Err(Error::Dimension("ici input lengths disagree".into()));
    }
    if !(t0 > T::zero()) {
        return Err(Error::Domain(format!("t0 must be positive, got {t0}")));
    }
    // Complementary log-log transform, with a guard against probabilities
    // that have saturated numerically.
    let cll: Vec<f64> = p_hat
        .iter()
        .map(|&p| {
            let p = p.as_f64().clamp(1e-12, 1.0 - 1e-12);
            (-(-p).ln_1p()).ln()
        })
        .collect();
    let times_f: Vec<f64> = times.iter().map(|t| t.as_f64()).collect();

    let features = natural_spline_features(&cll);
    let theta = match &features {
        Some(f) => cox_newton(f, &times_f, events)?,
        None => Array1::zeros(0),
    };
    let eta: Vec<f64> = match &features {
        Some(f) => (0..n).map(|i| f.row(i).dot(&theta)).collect(),
        None => vec![0.0; n],
    };

    // Breslow cumulative baseline hazard restricted to t0.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times_f[a].partial_cmp(&times_f[b]).unwrap());
    let mut lambda0 = 0.0;
    let mut idx = n;
    let mut risk_sum = 0.0;
    // Walk from the largest time down, keeping the risk-set sum, then replay
    // event times upward.
    let mut risk_at = vec![0.0; n];
    for k in (0..n).rev() {
        risk_sum += eta[order[k]].exp();
        risk_at[k] = risk_sum;
        idx = k;
    }
    debug_assert_eq!(idx, 0);
    let mut k = 0;
    while k < n {
        // All records tied at this time share one risk set.
        let t = times_f[order[k]];
        if t > t0.as_f64() {
            break;
        }
        let mut events_here = 0usize;
        let mut kk = k;
        while kk < n && times_f[order[kk]] == t {
            if events[order[kk]] == 1 {
                events_here += 1;
            }
            kk += 1;
        }
        if events_here > 0 {
            lambda0 += events_here as f64 / risk_at[k];
        }
        k = kk;
    }

    let mut acc = T::zero();
    for i in 0..n {
        let observed = 1.0 - (-(lambda0 * eta[i].exp())).exp();
        let gap = (observed - p_hat[i].as_f64()).abs();
        acc += T::of(gap);
    }
    Ok(acc / T::from_usize(n).unwrap())
}

/// Natural cubic spline features with 4 degrees of freedom in one covariate:
/// boundary knots at the extremes, interior knots at the quartiles. Returns
/// `None` when the covariate is (numerically) constant.
fn natural_spline_features(c: &[f64]) -> Option<Array2<f64>> {
    let mut sorted = c.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quant = |p: f64| sorted_quantile(&sorted, p);
    let mut knots = vec![
        sorted[0],
        quant(0.25),
        quant(0.50),
        quant(0.75),
        sorted[sorted.len() - 1],
    ];
    knots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if knots.len() < 2 {
        return None;
    }
    let k_count = knots.len();
    let last = knots[k_count - 1];
    let second_last = knots[k_count - 2];
    let d = |x: f64, knot: f64| {
        let cube = |v: f64| {
            let r = (x - v).max(0.0);
            r * r * r
        };
        (cube(knot) - cube(last)) / (last - knot)
    };
    // Basis: x, then d_k(x) - d_{K-1}(x) for the interior-cut columns.
    let cols = 1 + k_count.saturating_sub(2);
    let mut f = Array2::zeros((c.len(), cols));
    for (i, &x) in c.iter().enumerate() {
        f[[i, 0]] = x;
        for (col, &knot) in knots[..k_count - 2].iter().enumerate() {
            f[[i, col + 1]] = d(x, knot) - d(x, second_last);
        }
    }
    // Standardize columns; drop degenerate ones by zeroing (their
    // coefficients are then pinned at zero by a ridge term in the fit).
    let n = c.len() as f64;
    for mut col in f.columns_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if var < 1e-24 {
            col.fill(0.0);
        } else {
            let sd = var.sqrt();
            col.mapv_inplace(|v| (v - mean) / sd);
        }
    }
    Some(f)
}

/// Fit a proportional-hazards model by Newton iteration on the partial
/// likelihood (Breslow tie convention), with a small ridge for stability.
fn cox_newton(features: &Array2<f64>, times: &[f64], events: &[u8]) -> Result<Array1<f64>> {
    let n = times.len();
    let k = features.ncols();
    let mut theta = Array1::<f64>::zeros(k);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap());

    let loglik_grad_hess = |theta: &Array1<f64>| {
        let eta: Vec<f64> = (0..n).map(|i| features.row(i).dot(theta)).collect();
        let mut ll = 0.0;
        let mut grad = Array1::<f64>::zeros(k);
        let mut hess = Array2::<f64>::zeros((k, k));
        // Sweep from the largest time down, accumulating risk-set moments.
        let mut s0 = 0.0;
        let mut s1 = Array1::<f64>::zeros(k);
        let mut s2 = Array2::<f64>::zeros((k, k));
        let mut pos = n;
        while pos > 0 {
            // Add everybody tied at this time to the risk set first.
            let t = times[order[pos - 1]];
            let mut start = pos;
            while start > 0 && times[order[start - 1]] == t {
                let i = order[start - 1];
                let w = eta[i].exp();
                s0 += w;
                for a in 0..k {
                    s1[a] += w * features[[i, a]];
                    for b in 0..k {
                        s2[[a, b]] += w * features[[i, a]] * features[[i, b]];
                    }
                }
                start -= 1;
            }
            for idx in start..pos {
                let i = order[idx];
                if events[i] == 1 {
                    ll += eta[i] - s0.ln();
                    for a in 0..k {
                        grad[a] += features[[i, a]] - s1[a] / s0;
                        for b in 0..k {
                            hess[[a, b]] -= s2[[a, b]] / s0 - s1[a] * s1[b] / (s0 * s0);
                        }
                    }
                }
            }
            pos = start;
        }
        (ll, grad, hess)
    };

    let ridge = 1e-8;
    let (mut ll, mut grad, mut hess) = loglik_grad_hess(&theta);
    for _ in 0..30 {
        if grad.iter().map(|g| g.abs()).fold(0.0, f64::max) < 1e-9 {
            break;
        }
        // Solve (-H + ridge I) step = grad.
        let mut m = hess.mapv(|v| -v);
        for a in 0..k {
            m[[a, a]] += ridge;
        }
        let Some((m_inv, _)) = crate::inference::invert_with_condition(&m) else {
            break;
        };
        let step = m_inv.dot(&grad);
        // Step-halving on the partial likelihood.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let candidate = &theta + &(step.mapv(|v| v * scale));
            let (ll_new, g_new, h_new) = loglik_grad_hess(&candidate);
            if ll_new.is_finite() && ll_new >= ll - 1e-12 {
                theta = candidate;
                ll = ll_new;
                grad = g_new;
                hess = h_new;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            epoch: 0,
            context: "calibration regression".into(),
        });
    }
    Ok(theta)
}
