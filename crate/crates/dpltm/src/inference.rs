//! Semiparametric inference for the linear coefficients.
//!
//! The efficient score subtracts from `Z Phi` its projection onto the
//! nuisance directions: with `a` a spline function of time and `b` a network
//! function of the deep covariates,
//!
//! ```text
//! s_i = (Z_i - a(T_i) - b(X_i)) Phi_i  -  Delta_i a'(T_i) / H'(T_i),
//! ```
//!
//! where `(a, b)` minimize the empirical mean of the componentwise square of
//! `s_i`. The information bound is the empirical second moment of the
//! minimized scores; its inverse over `n` gives Wald standard errors,
//! confidence intervals, and p-values.
//!
//! The fitted model is frozen throughout: `Phi` and `H'` are evaluated once
//! and never updated while the directions are trained.

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::model::{DpltmParams, SplineDesign, H_DERIV_FLOOR};
use crate::net::{DeepNet, NetGradients};
use crate::num::{normal_cdf, normal_quantile, Scalar};
use crate::opt::{Adam, AdamConfig};
use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Half-width multiplier of the 95% Wald interval.
pub const Z_95: f64 = 1.96;

/// Condition-number ceiling beyond which the information matrix is treated
/// as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Optimization protocol for the direction fit: a small network and a short
/// fixed-epoch Adam run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionConfig<T> {
    pub epochs: usize,
    pub learning_rate: T,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub seed: u64,
}

impl<T: Scalar> DirectionConfig<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            epochs: 100,
            learning_rate: T::of(2e-3),
            hidden_layers: 2,
            hidden_width: 10,
            seed,
        }
    }
}

/// Estimated least favorable directions plus the information bound.
#[derive(Debug, Clone)]
pub struct InfoBoundEstimate<T> {
    /// Spline coefficients of `a`, one row per linear coefficient
    /// (unconstrained: the least favorable direction need not be monotone).
    pub a_star: Array2<T>,
    /// Network for `b`, with one output per linear coefficient.
    pub b_star: DeepNet<T>,
    /// Empirical information bound, `p x p`.
    pub i_hat: Array2<T>,
    pub i_hat_inv: Array2<T>,
    pub converged: bool,
}

/// Inference summary for one coefficient.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoefficientInference<T> {
    pub estimate: T,
    pub std_error: T,
    pub ci_low: T,
    pub ci_high: T,
    pub statistic: T,
    pub p_value: T,
}

/// Wald inference for every linear coefficient.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceReport<T> {
    pub coefficients: Vec<CoefficientInference<T>>,
    pub n: usize,
}

/// Direction parameters during/after optimization.
#[derive(Debug, Clone)]
pub struct DirectionEstimate<T> {
    pub a_coeffs: Array2<T>,
    pub b_net: DeepNet<T>,
    /// Objective after each Adam step; entry 0 is the initial value.
    pub objective_curve: Vec<T>,
}

/// Frozen per-record quantities from the fitted model.
struct FrozenScores<T> {
    phi_score: Vec<T>,
    inv_h_deriv: Vec<T>,
    design: SplineDesign<T>,
}

fn freeze<T: Scalar>(fit: &DpltmParams<T>, data: &SurvivalDataset<T>) -> Result<FrozenScores<T>> {
    let design = SplineDesign::new(fit, data);
    let floor = T::of(H_DERIV_FLOOR);
    let mut phi_score = Vec::with_capacity(data.len());
    let mut inv_h_deriv = Vec::with_capacity(data.len());
    for rec in data.records() {
        let se = fit.spline.eval(rec.time);
        let phi = se.h + fit.beta.dot(&rec.z) + fit.g_raw(&rec.x.to_owned())?;
        phi_score.push(fit.phi_score_at(phi, rec.event));
        inv_h_deriv.push(if rec.event {
            se.h_deriv.max(floor).recip()
        } else {
            T::zero()
        });
    }
    Ok(FrozenScores {
        phi_score,
        inv_h_deriv,
        design,
    })
}

struct DirectionProblem<'a, T> {
    data: &'a SurvivalDataset<T>,
    frozen: &'a FrozenScores<T>,
    q: usize,
    p: usize,
}

impl<T: Scalar> DirectionProblem<'_, T> {
    /// Objective only.
    fn objective(&self, a: &Array2<T>, net: &DeepNet<T>) -> Result<T> {
        let n = T::from_usize(self.data.len()).unwrap();
        let mut total = T::zero();
        for (i, rec) in self.data.records().enumerate() {
            let (b, _) = net.forward_multi::<ChaCha12Rng>(&rec.x.to_owned(), None)?;
            for m in 0..self.p {
                let e = self.residual(a, &b, i, m, &rec.z);
                total += e * e;
            }
        }
        Ok(total / n)
    }

    #[inline]
    fn residual(
        &self,
        a: &Array2<T>,
        b: &Array1<T>,
        i: usize,
        m: usize,
        z: &ndarray::ArrayView1<'_, T>,
    ) -> T {
        let mut a_val = T::zero();
        let mut a_deriv = T::zero();
        for j in 0..self.q {
            a_val += a[[m, j]] * self.frozen.design.basis_rows()[[i, j]];
            a_deriv += a[[m, j]] * self.frozen.design.deriv_rows()[[i, j]];
        }
        (z[m] - a_val - b[m]) * self.frozen.phi_score[i] - a_deriv * self.frozen.inv_h_deriv[i]
    }

    /// Objective and gradient with respect to the spline coefficients and the
    /// network parameters.
    fn objective_grad(
        &self,
        a: &Array2<T>,
        net: &DeepNet<T>,
    ) -> Result<(T, Array2<T>, NetGradients<T>)> {
        let n = T::from_usize(self.data.len()).unwrap();
        let two = T::of(2.0);
        let mut total = T::zero();
        let mut d_a = Array2::zeros((self.p, self.q));
        let mut d_net = NetGradients::zeros_like(net);
        let mut d_out = Array1::zeros(self.p);
        for (i, rec) in self.data.records().enumerate() {
            let x = rec.x.to_owned();
            let (b, tape) = net.forward_multi::<ChaCha12Rng>(&x, None)?;
            let phi_score = self.frozen.phi_score[i];
            let inv_hd = self.frozen.inv_h_deriv[i];
            for m in 0..self.p {
                let e = self.residual(a, &b, i, m, &rec.z);
                total += e * e;
                let coeff = two * e / n;
                for j in 0..self.q {
                    d_a[[m, j]] -= coeff
                        * (phi_score * self.frozen.design.basis_rows()[[i, j]]
                            + inv_hd * self.frozen.design.deriv_rows()[[i, j]]);
                }
                d_out[m] = -coeff * phi_score;
            }
            net.backward_into(&tape, &d_out, &mut d_net)?;
        }
        Ok((total / n, d_a, d_net))
    }
}

fn pack_direction<T: Scalar>(a: &Array2<T>, net: &DeepNet<T>) -> Vec<T> {
    let mut flat: Vec<T> = a.iter().copied().collect();
    for k in 0..net.weights().len() {
        flat.extend(net.weights()[k].iter().copied());
        flat.extend(net.biases()[k].iter().copied());
    }
    flat
}

fn unpack_direction<T: Scalar>(flat: &[T], a: &mut Array2<T>, net: &mut DeepNet<T>) {
    let mut pos = 0;
    for v in a.iter_mut() {
        *v = flat[pos];
        pos += 1;
    }
    for k in 0..net.weights().len() {
        let len = net.weights()[k].len();
        for (w, &v) in net.weights_mut()[k].iter_mut().zip(&flat[pos..pos + len]) {
            *w = v;
        }
        pos += len;
        let len = net.biases()[k].len();
        for (b, &v) in net.biases_mut()[k].iter_mut().zip(&flat[pos..pos + len]) {
            *b = v;
        }
        pos += len;
    }
    debug_assert_eq!(pos, flat.len());
}

/// Minimize the empirical efficient-score objective over the spline
/// coefficients of `a` and the parameters of `b`.
///
/// `a` shares the fitted transformation's basis; `b` starts from a fresh
/// He-uniform network; the spline coefficients start at zero.
pub fn estimate_directions<T: Scalar>(
    fit: &DpltmParams<T>,
    data: &SurvivalDataset<T>,
    config: &DirectionConfig<T>,
) -> Result<DirectionEstimate<T>> {
    let p = fit.p();
    if p == 0 {
        return Err(Error::Domain(
            "no linear coefficients: nothing to infer".into(),
        ));
    }
    if data.is_empty() {
        return Err(Error::Domain("direction estimation needs data".into()));
    }
    let frozen = freeze(fit, data)?;
    let q = fit.spline.basis().basis_count();
    let problem = DirectionProblem {
        data,
        frozen: &frozen,
        q,
        p,
    };

    let mut a = Array2::zeros((p, q));
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut widths = vec![data.d()];
    widths.extend(std::iter::repeat(config.hidden_width).take(config.hidden_layers));
    widths.push(p);
    let mut net = DeepNet::init(&widths, T::zero(), &mut rng)?;

    let mut flat = pack_direction(&a, &net);
    let mut adam = Adam::new(
        AdamConfig::with_learning_rate(config.learning_rate),
        flat.len(),
    );

    let mut curve = Vec::with_capacity(config.epochs + 1);
    for epoch in 1..=config.epochs {
        unpack_direction(&flat, &mut a, &mut net);
        let (value, d_a, d_net) = problem.objective_grad(&a, &net)?;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                context: "direction objective".into(),
            });
        }
        if epoch == 1 {
            curve.push(value);
        }
        let mut grad: Vec<T> = d_a.iter().copied().collect();
        for k in 0..d_net.d_weights.len() {
            grad.extend(d_net.d_weights[k].iter().copied());
            grad.extend(d_net.d_biases[k].iter().copied());
        }
        adam.step(&mut flat, &grad);
        unpack_direction(&flat, &mut a, &mut net);
        let value = problem.objective(&a, &net)?;
        curve.push(value);
    }
    if curve.last().map(|v| !v.is_finite()).unwrap_or(true) {
        return Err(Error::NonFinite {
            epoch: config.epochs,
            context: "direction objective".into(),
        });
    }
    Ok(DirectionEstimate {
        a_coeffs: a,
        b_net: net,
        objective_curve: curve,
    })
}

/// Per-record efficient scores under the estimated directions, `n x p`.
pub fn efficient_scores<T: Scalar>(
    fit: &DpltmParams<T>,
    data: &SurvivalDataset<T>,
    a_star: &Array2<T>,
    b_star: &DeepNet<T>,
) -> Result<Array2<T>> {
    let p = fit.p();
    let frozen = freeze(fit, data)?;
    let q = fit.spline.basis().basis_count();
    let problem = DirectionProblem {
        data,
        frozen: &frozen,
        q,
        p,
    };
    let mut scores = Array2::zeros((data.len(), p));
    for (i, rec) in data.records().enumerate() {
        let (b, _) = b_star.forward_multi::<ChaCha12Rng>(&rec.x.to_owned(), None)?;
        for m in 0..p {
            scores[[i, m]] = problem.residual(a_star, &b, i, m, &rec.z);
        }
    }
    Ok(scores)
}

/// Assemble the information bound from the fitted model and the estimated
/// directions: the empirical mean of the score outer products, inverted by
/// Gaussian elimination with partial pivoting.
pub fn information_bound<T: Scalar>(
    fit: &DpltmParams<T>,
    data: &SurvivalDataset<T>,
    directions: &DirectionEstimate<T>,
) -> Result<InfoBoundEstimate<T>> {
    let scores = efficient_scores(fit, data, &directions.a_coeffs, &directions.b_net)?;
    let p = scores.ncols();
    let n = T::from_usize(scores.nrows()).unwrap();
    let mut i_hat = Array2::zeros((p, p));
    for row in scores.rows() {
        for a in 0..p {
            for b in a..p {
                i_hat[[a, b]] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            i_hat[[a, b]] = i_hat[[a, b]] / n;
            i_hat[[b, a]] = i_hat[[a, b]];
        }
    }

    let inv = match invert_with_condition(&i_hat) {
        Some((inv, cond)) if cond <= CONDITION_LIMIT => inv,
        other => {
            let cond = other.map(|(_, c)| c).unwrap_or(f64::INFINITY);
            let (i, j) = most_collinear_pair(&i_hat);
            return Err(Error::SingularInformation { cond, i, j });
        }
    };

    let converged = directions
        .objective_curve
        .last()
        .zip(directions.objective_curve.first())
        .map(|(last, first)| last.is_finite() && *last <= *first)
        .unwrap_or(false);

    Ok(InfoBoundEstimate {
        a_star: directions.a_coeffs.clone(),
        b_star: directions.b_net.clone(),
        i_hat,
        i_hat_inv: inv,
        converged,
    })
}

/// Invert by Gaussian elimination with partial pivoting; returns the inverse
/// and an infinity-norm condition estimate, or `None` on a vanishing pivot.
pub fn invert_with_condition<T: Scalar>(a: &Array2<T>) -> Option<(Array2<T>, f64)> {
    let p = a.nrows();
    assert_eq!(p, a.ncols());
    let mut work = a.mapv(|v| v.as_f64());
    let mut inv = Array2::<f64>::eye(p);
    for col in 0..p {
        let mut pivot = col;
        for row in col + 1..p {
            if work[[row, col]].abs() > work[[pivot, col]].abs() {
                pivot = row;
            }
        }
        if work[[pivot, col]].abs() < f64::MIN_POSITIVE.sqrt() {
            return None;
        }
        if pivot != col {
            for k in 0..p {
                work.swap([pivot, k], [col, k]);
                inv.swap([pivot, k], [col, k]);
            }
        }
        let diag = work[[col, col]];
        for k in 0..p {
            work[[col, k]] /= diag;
            inv[[col, k]] /= diag;
        }
        for row in 0..p {
            if row != col {
                let factor = work[[row, col]];
                if factor != 0.0 {
                    for k in 0..p {
                        work[[row, k]] -= factor * work[[col, k]];
                        inv[[row, k]] -= factor * inv[[col, k]];
                    }
                }
            }
        }
    }
    let norm_inf = |m: &Array2<f64>| {
        m.rows()
            .into_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0_f64, f64::max)
    };
    let cond = norm_inf(&a.mapv(|v| v.as_f64())) * norm_inf(&inv);
    Some((inv.mapv(T::of), cond))
}

/// Most correlated off-diagonal pair of a covariance-like matrix, reported
/// when the information matrix degenerates.
fn most_collinear_pair<T: Scalar>(i_hat: &Array2<T>) -> (usize, usize) {
    let p = i_hat.nrows();
    if p < 2 {
        return (0, 0);
    }
    let mut best = (0, 1);
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..p {
        for j in i + 1..p {
            let denom = (i_hat[[i, i]].as_f64() * i_hat[[j, j]].as_f64()).sqrt();
            let rho = if denom > 0.0 {
                (i_hat[[i, j]].as_f64() / denom).abs()
            } else {
                f64::INFINITY
            };
            if rho > best_val {
                best_val = rho;
                best = (i, j);
            }
        }
    }
    best
}

/// Wald summary at the 95% level: `SE_j = sqrt((I^-1)_jj / n)`,
/// `CI = estimate +- 1.96 SE`, `Z = estimate / SE`,
/// `p = 2 (1 - Phi(|Z|))`.
pub fn wald_report<T: Scalar>(
    beta: &Array1<T>,
    info: &InfoBoundEstimate<T>,
    n: usize,
) -> InferenceReport<T> {
    wald_report_at_level(beta, info, n, None)
}

/// Wald summary at an arbitrary confidence level; `None` pins the standard
/// 95% multiplier 1.96, other levels use the exact normal quantile.
pub fn wald_report_at_level<T: Scalar>(
    beta: &Array1<T>,
    info: &InfoBoundEstimate<T>,
    n: usize,
    level: Option<T>,
) -> InferenceReport<T> {
    let zmult = match level {
        None => T::of(Z_95),
        Some(level) => {
            let alpha = T::one() - level;
            normal_quantile(T::one() - alpha / T::of(2.0))
        }
    };
    let nf = T::from_usize(n).unwrap();
    let coefficients = beta
        .iter()
        .enumerate()
        .map(|(j, &est)| {
            let se = (info.i_hat_inv[[j, j]] / nf).sqrt();
            let z = est / se;
            let p_value = T::of(2.0) * (T::one() - normal_cdf(z.abs()));
            CoefficientInference {
                estimate: est,
                std_error: se,
                ci_low: est - zmult * se,
                ci_high: est + zmult * se,
                statistic: z,
                p_value,
            }
        })
        .collect();
    InferenceReport { coefficients, n }
}

impl<T: Scalar> InferenceReport<T> {
    /// Tab-delimited table with EST/ESE/statistic/p columns.
    pub fn to_delimited(&self, names: &[String]) -> String {
        let mut out =
            String::from("coefficient\testimate\tese\tstatistic\tp_value\tci_low\tci_high\n");
        for (j, c) in self.coefficients.iter().enumerate() {
            let name = names
                .get(j)
                .cloned()
                .unwrap_or_else(|| format!("beta{}", j + 1));
            out.push_str(&format!(
                "{name}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
                c.estimate.as_f64(),
                c.std_error.as_f64(),
                c.statistic.as_f64(),
                c.p_value.as_f64(),
                c.ci_low.as_f64(),
                c.ci_high.as_f64(),
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error_family::ErrorModel;
    use crate::spline::{MonotoneSpline, SplineBasis};
    use ndarray::array;
    use rand::Rng;

    fn fixture(seed: u64, n: usize, p: usize) -> (DpltmParams<f64>, SurvivalDataset<f64>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let d = 3;
        let basis = SplineBasis::new(4, 4, 0.05, 3.0).unwrap();
        let gt: Vec<f64> = (0..basis.basis_count())
            .map(|_| rng.random_range(-1.5..0.0))
            .collect();
        let spline = MonotoneSpline::new(basis, gt).unwrap();
        let net = DeepNet::init(&[d, 6, 1], 0.0, &mut rng).unwrap();
        let beta = Array1::from_shape_fn(p, |_| rng.random_range(-1.0..1.0));
        let params = DpltmParams::new(beta, spline, net, ErrorModel::new(0.5).unwrap()).unwrap();

        let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..3.0)).collect();
        let status: Vec<u8> = (0..n)
            .map(|_| u8::from(rng.random::<f64>() < 0.6))
            .collect();
        let z = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(0.0..2.0));
        let data = SurvivalDataset::new(times, status, z, x).unwrap();
        (params, data)
    }

    /// Jacobi eigenvalue sweep for small symmetric matrices (test oracle).
    fn jacobi_eigenvalues(m: &Array2<f64>) -> Vec<f64> {
        let p = m.nrows();
        let mut a = m.clone();
        for _ in 0..100 {
            let mut off = 0.0;
            for i in 0..p {
                for j in i + 1..p {
                    off += a[[i, j]].abs();
                }
            }
            if off < 1e-14 {
                break;
            }
            for i in 0..p {
                for j in i + 1..p {
                    if a[[i, j]].abs() < 1e-18 {
                        continue;
                    }
                    let theta = 0.5 * (a[[j, j]] - a[[i, i]]) / a[[i, j]];
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..p {
                        let aik = a[[i, k]];
                        let ajk = a[[j, k]];
                        a[[i, k]] = c * aik - s * ajk;
                        a[[j, k]] = s * aik + c * ajk;
                    }
                    for k in 0..p {
                        let aki = a[[k, i]];
                        let akj = a[[k, j]];
                        a[[k, i]] = c * aki - s * akj;
                        a[[k, j]] = s * aki + c * akj;
                    }
                }
            }
        }
        (0..p).map(|i| a[[i, i]]).collect()
    }

    #[test]
    fn direction_gradient_matches_finite_differences() {
        let (params, data) = fixture(1, 12, 2);
        let frozen = freeze(&params, &data).unwrap();
        let q = params.spline.basis().basis_count();
        let problem = DirectionProblem {
            data: &data,
            frozen: &frozen,
            q,
            p: 2,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut a = Array2::from_shape_fn((2, q), |_| rng.random_range(-0.5..0.5));
        let mut net = DeepNet::init(&[3, 4, 2], 0.0, &mut rng).unwrap();
        let (_, d_a, d_net) = problem.objective_grad(&a, &net).unwrap();

        let h = 1e-6;
        for m in 0..2 {
            for j in 0..q {
                let orig = a[[m, j]];
                a[[m, j]] = orig + h;
                let up = problem.objective(&a, &net).unwrap();
                a[[m, j]] = orig - h;
                let down = problem.objective(&a, &net).unwrap();
                a[[m, j]] = orig;
                let fd = (up - down) / (2.0 * h);
                let scale = d_a[[m, j]].abs().max(fd.abs()).max(1.0);
                assert!((d_a[[m, j]] - fd).abs() / scale <= 1e-5, "a[{m},{j}]");
            }
        }
        // Spot-check a few network weights.
        for (k, i, j) in [(0usize, 0usize, 0usize), (0, 3, 2), (1, 1, 3)] {
            let orig = net.weights()[k][[i, j]];
            net.weights_mut()[k][[i, j]] = orig + h;
            let up = problem.objective(&a, &net).unwrap();
            net.weights_mut()[k][[i, j]] = orig - h;
            let down = problem.objective(&a, &net).unwrap();
            net.weights_mut()[k][[i, j]] = orig;
            let fd = (up - down) / (2.0 * h);
            let analytic = d_net.d_weights[k][[i, j]];
            let scale = analytic.abs().max(fd.abs()).max(1.0);
            assert!((analytic - fd).abs() / scale <= 1e-5, "w[{k}][{i},{j}]");
        }
    }

    #[test]
    fn objective_nonincreasing_with_small_lr() {
        let (params, data) = fixture(3, 40, 1);
        let mut config = DirectionConfig::new(4);
        config.epochs = 50;
        config.learning_rate = 1e-4;
        let est = estimate_directions(&params, &data, &config).unwrap();
        for w in est.objective_curve.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "objective rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn representable_target_reaches_near_zero() {
        // All-censored data, constant phi (so constant score), and Z exactly
        // a spline function of T: the objective can be driven to ~0 with
        // b == 0.
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let n = 60;
        let basis = SplineBasis::new(4, 3, 0.1, 2.0).unwrap();
        let q = basis.basis_count();
        // Constant H: level 0.4, increments ~0.
        let mut gt = vec![-700.0; q];
        gt[0] = 0.4;
        let spline = MonotoneSpline::new(basis.clone(), gt).unwrap();
        let net = DeepNet::from_parts(
            vec![2, 1],
            vec![Array2::zeros((1, 2))],
            vec![Array1::zeros(1)],
            0.0,
        )
        .unwrap();
        let params = DpltmParams::new(
            array![0.0],
            spline,
            net,
            ErrorModel::<f64>::proportional_hazards(),
        )
        .unwrap();

        let target: Vec<f64> = (0..q).map(|_| rng.random_range(-1.0..1.0)).collect();
        let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let z: Vec<f64> = times
            .iter()
            .map(|&t| {
                let be = basis.eval(t);
                be.values.iter().zip(&target).map(|(b, c)| b * c).sum()
            })
            .collect();
        let data = SurvivalDataset::new(
            times,
            vec![0; n],
            Array2::from_shape_vec((n, 1), z).unwrap(),
            Array2::from_shape_fn((n, 2), |_| rng.random_range(0.0..2.0)),
        )
        .unwrap();

        let mut config = DirectionConfig::new(6);
        config.epochs = 3000;
        config.learning_rate = 5e-3;
        config.hidden_layers = 0;
        let est = estimate_directions(&params, &data, &config).unwrap();
        let first = est.objective_curve[0];
        let last = *est.objective_curve.last().unwrap();
        assert!(last < 1e-4 * first, "objective {first} -> {last}");
    }

    #[test]
    fn constant_scores_give_closed_form_information() {
        // p=1, a == 0, b == 0, all-censored data with constant phi: every
        // score is (z_i - 0 - 0) * (-lambda(c)); choosing z_i == 1 makes the
        // scores all equal, so I = s^2 and SE = 1/(|s| sqrt(n)).
        let n = 25;
        let basis = SplineBasis::new(4, 2, 0.1, 2.0).unwrap();
        let q = basis.basis_count();
        let mut gt = vec![-700.0; q];
        gt[0] = 0.0;
        let spline = MonotoneSpline::new(basis, gt).unwrap();
        let net = DeepNet::from_parts(
            vec![1, 1],
            vec![Array2::zeros((1, 1))],
            vec![Array1::zeros(1)],
            0.0,
        )
        .unwrap();
        let params = DpltmParams::new(
            array![0.0],
            spline,
            net.clone(),
            ErrorModel::<f64>::proportional_hazards(),
        )
        .unwrap();
        let times: Vec<f64> = (0..n).map(|i| 0.2 + 1.5 * i as f64 / n as f64).collect();
        let data = SurvivalDataset::new(
            times,
            vec![0; n],
            Array2::from_elem((n, 1), 1.0),
            Array2::from_elem((n, 1), 0.5),
        )
        .unwrap();

        let directions = DirectionEstimate {
            a_coeffs: Array2::zeros((1, q)),
            b_net: DeepNet::from_parts(
                vec![1, 1],
                vec![Array2::zeros((1, 1))],
                vec![Array1::zeros(1)],
                0.0,
            )
            .unwrap(),
            objective_curve: vec![1.0, 0.5],
        };
        let info = information_bound(&params, &data, &directions).unwrap();
        let lam = ErrorModel::<f64>::proportional_hazards().hazard(0.0); // = 1
        let expect = lam * lam;
        assert!((info.i_hat[[0, 0]] - expect).abs() < 1e-12);
        let report = wald_report(&array![0.7], &info, n);
        let se_expect = 1.0 / (lam * (n as f64).sqrt());
        assert!((report.coefficients[0].std_error - se_expect).abs() < 1e-12);
    }

    #[test]
    fn information_matches_outer_product_oracle_and_is_symmetric_psd() {
        let (params, data) = fixture(7, 80, 2);
        let mut config = DirectionConfig::new(8);
        config.epochs = 30;
        let est = estimate_directions(&params, &data, &config).unwrap();
        let info = information_bound(&params, &data, &est).unwrap();

        // Independent implementation of the outer-product mean.
        let scores = efficient_scores(&params, &data, &est.a_coeffs, &est.b_net).unwrap();
        let n = scores.nrows() as f64;
        let mut oracle = Array2::<f64>::zeros((2, 2));
        for i in 0..scores.nrows() {
            for a in 0..2 {
                for b in 0..2 {
                    oracle[[a, b]] += scores[[i, a]] * scores[[i, b]] / n;
                }
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                assert!((info.i_hat[[a, b]] - oracle[[a, b]]).abs() < 1e-10);
            }
        }
        // Exact symmetry by construction.
        assert_eq!(info.i_hat[[0, 1]], info.i_hat[[1, 0]]);
        // PSD up to tolerance, by a Jacobi eigenvalue check.
        for ev in jacobi_eigenvalues(&info.i_hat) {
            assert!(ev >= -1e-8, "eigenvalue {ev}");
        }
        assert!(info.converged);

        // The inverse really inverts.
        let prod = info.i_hat.dot(&info.i_hat_inv);
        for a in 0..2 {
            for b in 0..2 {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((prod[[a, b]] - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn singular_information_is_reported_with_pair() {
        // Duplicate covariate columns make the scores collinear.
        let (mut params, mut data) = fixture(9, 40, 2);
        let z = data.z().clone();
        let mut z2 = z.clone();
        for i in 0..z.nrows() {
            z2[[i, 1]] = z[[i, 0]];
        }
        data = SurvivalDataset::new(
            data.times().to_vec(),
            data.status().to_vec(),
            z2,
            data.x().clone(),
        )
        .unwrap();
        params.beta = array![0.3, 0.3];
        let q = params.spline.basis().basis_count();
        let directions = DirectionEstimate {
            a_coeffs: Array2::zeros((2, q)),
            b_net: DeepNet::from_parts(
                vec![3, 2],
                vec![Array2::zeros((2, 3))],
                vec![Array1::zeros(2)],
                0.0,
            )
            .unwrap(),
            objective_curve: vec![1.0, 0.9],
        };
        let err = information_bound(&params, &data, &directions).unwrap_err();
        match err {
            Error::SingularInformation { i, j, .. } => assert_eq!((i, j), (0, 1)),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn wald_report_reference_identities() {
        let info = InfoBoundEstimate {
            a_star: Array2::zeros((1, 4)),
            b_star: DeepNet::from_parts(
                vec![1, 1],
                vec![Array2::zeros((1, 1))],
                vec![Array1::zeros(1)],
                0.0,
            )
            .unwrap(),
            i_hat: array![[4.0]],
            i_hat_inv: array![[0.25]],
            converged: true,
        };
        // Zero estimate: Z = 0, p = 1.
        let report = wald_report(&array![0.0_f64], &info, 100);
        let c = &report.coefficients[0];
        assert_eq!(c.statistic, 0.0);
        assert!((c.p_value - 1.0).abs() < 1e-12);
        // CI width is exactly 2 * 1.96 * SE.
        assert!((c.ci_high - c.ci_low - 2.0 * 1.96 * c.std_error).abs() < 1e-15);

        // Estimate 1.96 SE: p ~ 0.05.
        let se = (0.25_f64 / 100.0).sqrt();
        let report = wald_report(&array![1.96 * se], &info, 100);
        assert!((report.coefficients[0].p_value - 0.05).abs() < 1e-3);

        // Custom level reproduces the 95% multiplier through the quantile.
        let at95 = wald_report_at_level(&array![0.3], &info, 100, Some(0.95));
        let pinned = wald_report(&array![0.3], &info, 100);
        assert!((at95.coefficients[0].ci_low - pinned.coefficients[0].ci_low).abs() < 1e-4);
        assert!((0.0..=1.0).contains(&report.coefficients[0].p_value));
    }

    #[test]
    fn delimited_report_layout() {
        let info = InfoBoundEstimate {
            a_star: Array2::zeros((2, 4)),
            b_star: DeepNet::from_parts(
                vec![1, 2],
                vec![Array2::zeros((2, 1))],
                vec![Array1::zeros(2)],
                0.0,
            )
            .unwrap(),
            i_hat: array![[4.0, 0.0], [0.0, 1.0]],
            i_hat_inv: array![[0.25, 0.0], [0.0, 1.0]],
            converged: true,
        };
        let report = wald_report(&array![0.4343, -0.3224], &info, 1000);
        let table = report.to_delimited(&["gender".into(), "married".into()]);
        let mut lines = table.lines();
        assert_eq!(
            lines.next().unwrap(),
            "coefficient\testimate\tese\tstatistic\tp_value\tci_low\tci_high"
        );
        assert!(lines.next().unwrap().starts_with("gender\t0.4343"));
        assert!(lines.next().unwrap().starts_with("married\t-0.3224"));
    }
}
