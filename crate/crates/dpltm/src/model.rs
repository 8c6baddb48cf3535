//! The assembled model: linear coefficients, monotone spline transformation,
//! deep network, and error family, with the log-likelihood
//!
//! ```text
//! l(eta) = sum_i [ D_i log H'(T_i) + D_i log lambda(phi_i) - Lambda(phi_i) ],
//! phi_i  = H(T_i) + beta' Z_i + g(X_i)
//! ```
//!
//! and exact analytic gradients with respect to every parameter. Likelihood
//! and gradient sums are associative over records; the implementations below
//! accumulate in record order so fixed seeds reproduce bitwise.

use crate::data::{Record, SurvivalDataset};
use crate::error::{Error, Result};
use crate::error_family::ErrorModel;
use crate::net::{DeepNet, Mode, NetGradients};
use crate::num::Scalar;
use crate::spline::{chain_to_free, MonotoneSpline};
use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Floor inside `log H'` and the `Delta/H'` gradient term: the exp
/// reparameterization lets increments underflow to zero numerically.
pub const H_DERIV_FLOOR: f64 = 1e-10;

/// Full parameter set of a fitted (or in-training) model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpltmParams<T> {
    pub beta: Array1<T>,
    pub spline: MonotoneSpline<T>,
    pub net: DeepNet<T>,
    pub error: ErrorModel<T>,
    /// Post-fit centering constant: the training-sample mean of the raw
    /// network output. Applied in reporting and display only; the linear
    /// predictor `phi` always uses the raw network output, so predictions
    /// are unaffected by centering.
    pub g_offset: T,
}

/// Per-parameter gradient of the log-likelihood.
#[derive(Debug, Clone)]
pub struct LoglikGradient<T> {
    pub d_beta: Array1<T>,
    pub d_gamma_tilde: Vec<T>,
    pub net: NetGradients<T>,
}

/// Cached per-record spline design rows for one dataset: basis values and
/// derivatives at each observed time. Times never change during a fit, so
/// these are computed once.
#[derive(Debug, Clone)]
pub struct SplineDesign<T> {
    basis_rows: Array2<T>,
    deriv_rows: Array2<T>,
}

impl<T: Scalar> SplineDesign<T> {
    pub fn new(params: &DpltmParams<T>, data: &SurvivalDataset<T>) -> Self {
        let q = params.spline.basis().basis_count();
        let mut basis_rows = Array2::zeros((data.len(), q));
        let mut deriv_rows = Array2::zeros((data.len(), q));
        for (i, &t) in data.times().iter().enumerate() {
            let be = params.spline.basis().eval_with_deriv(t);
            for j in 0..q {
                basis_rows[[i, j]] = be.values[j];
                deriv_rows[[i, j]] = be.derivs[j];
            }
        }
        Self {
            basis_rows,
            deriv_rows,
        }
    }

    pub fn basis_rows(&self) -> &Array2<T> {
        &self.basis_rows
    }

    pub fn deriv_rows(&self) -> &Array2<T> {
        &self.deriv_rows
    }
}

impl<T: Scalar> DpltmParams<T> {
    pub fn new(
        beta: Array1<T>,
        spline: MonotoneSpline<T>,
        net: DeepNet<T>,
        error: ErrorModel<T>,
    ) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::Dimension(
                "the nonparametric component must have a scalar output".into(),
            ));
        }
        Ok(Self {
            beta,
            spline,
            net,
            error,
            g_offset: T::zero(),
        })
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn d(&self) -> usize {
        self.net.input_dim()
    }

    fn check_record(&self, record: &Record<'_, T>) -> Result<()> {
        if record.z.len() != self.p() || record.x.len() != self.d() {
            return Err(Error::Dimension(format!(
                "record has (p={}, d={}), model expects (p={}, d={})",
                record.z.len(),
                record.x.len(),
                self.p(),
                self.d()
            )));
        }
        Ok(())
    }

    /// Raw network output `g(x)` in eval mode (no centering applied).
    pub fn g_raw(&self, x: &Array1<T>) -> Result<T> {
        let mut net = self.net.clone();
        net.set_mode(Mode::Eval);
        Ok(net.forward::<rand_chacha::ChaCha12Rng>(x, None)?.0)
    }

    /// Centered network output `g(x) - g_offset`, the reported estimate.
    pub fn g_centered(&self, x: &Array1<T>) -> Result<T> {
        Ok(self.g_raw(x)? - self.g_offset)
    }

    /// Linear predictor `phi = H(T) + beta' Z + g(X)` (eval mode, raw `g`).
    pub fn phi(&self, record: &Record<'_, T>) -> Result<T> {
        self.check_record(record)?;
        let h = self.spline.eval_h(record.time);
        let bz = self.beta.dot(&record.z);
        let g = self.g_raw(&record.x.to_owned())?;
        Ok(h + bz + g)
    }

    /// Per-record score `Phi = Delta lambda'(phi)/lambda(phi) - lambda(phi)`,
    /// the derivative of the record's log-likelihood in `phi`.
    pub fn phi_score(&self, record: &Record<'_, T>) -> Result<T> {
        let phi = self.phi(record)?;
        Ok(self.phi_score_at(phi, record.event))
    }

    #[inline]
    pub fn phi_score_at(&self, phi: T, event: bool) -> T {
        let lam = self.error.hazard(phi);
        if event {
            self.error.hazard_deriv(phi) / lam - lam
        } else {
            -lam
        }
    }

    /// Log-likelihood of the dataset (sum over records, eval mode).
    pub fn loglik(&self, data: &SurvivalDataset<T>) -> Result<T> {
        self.check_data(data)?;
        let floor = T::of(H_DERIV_FLOOR);
        let mut net = self.net.clone();
        net.set_mode(Mode::Eval);
        let mut total = T::zero();
        for rec in data.records() {
            let se = self.spline.eval(rec.time);
            let g = net
                .forward::<rand_chacha::ChaCha12Rng>(&rec.x.to_owned(), None)?
                .0;
            let phi = se.h + self.beta.dot(&rec.z) + g;
            total += self.record_loglik(phi, se.h_deriv.max(floor), rec.event);
        }
        Ok(total)
    }

    /// Log-likelihood using precomputed spline design rows (eval mode).
    pub fn loglik_with_design(
        &self,
        data: &SurvivalDataset<T>,
        design: &SplineDesign<T>,
    ) -> Result<T> {
        self.check_data(data)?;
        let q = self.spline.basis().basis_count();
        let floor = T::of(H_DERIV_FLOOR);
        let gammas = self.spline.gammas();
        let mut net = self.net.clone();
        net.set_mode(Mode::Eval);
        let mut total = T::zero();
        let mut x_buf = Array1::zeros(self.d());
        for (i, rec) in data.records().enumerate() {
            let mut h = T::zero();
            let mut hd = T::zero();
            for j in 0..q {
                h += gammas[j] * design.basis_rows[[i, j]];
                hd += gammas[j] * design.deriv_rows[[i, j]];
            }
            x_buf.assign(&rec.x);
            let (g, _) = net.forward_multi::<rand_chacha::ChaCha12Rng>(&x_buf, None)?;
            let phi = h + self.beta.dot(&rec.z) + g[0];
            total += self.record_loglik(phi, hd.max(floor), rec.event);
        }
        Ok(total)
    }

    #[inline]
    fn record_loglik(&self, phi: T, h_deriv_floored: T, event: bool) -> T {
        let mut l = -self.error.cum_hazard(phi);
        if event {
            l += h_deriv_floored.ln() + self.error.hazard(phi).ln();
        }
        l
    }

    fn check_data(&self, data: &SurvivalDataset<T>) -> Result<()> {
        if data.p() != self.p() || data.d() != self.d() {
            return Err(Error::Dimension(format!(
                "dataset has (p={}, d={}), model expects (p={}, d={})",
                data.p(),
                data.d(),
                self.p(),
                self.d()
            )));
        }
        Ok(())
    }

    /// Log-likelihood and its gradient in one pass.
    ///
    /// Per record, the chain rule routes the score `Phi` into each block:
    /// `dl/dbeta = Z Phi`, the network receives `Phi` at its output, and the
    /// spline coefficients receive `Phi B_j(T) + Delta B'_j(T)/max(H',floor)`
    /// before the reparameterization chain. With `mode = Train` and dropout
    /// on, each record draws a fresh dropout mask from `rng` and the gradient
    /// is exact for the realized masks.
    pub fn loglik_with_grad<R: Rng + ?Sized>(
        &self,
        data: &SurvivalDataset<T>,
        design: &SplineDesign<T>,
        mode: Mode,
        mut rng: Option<&mut R>,
    ) -> Result<(T, LoglikGradient<T>)> {
        self.check_data(data)?;
        let q = self.spline.basis().basis_count();
        let floor = T::of(H_DERIV_FLOOR);
        let gammas = self.spline.gammas();

        let mut net = self.net.clone();
        net.set_mode(mode);

        let mut total = T::zero();
        let mut d_beta = Array1::zeros(self.p());
        let mut d_gamma = vec![T::zero(); q];
        let mut net_grads = NetGradients::zeros_like(&net);

        let mut x_buf = Array1::zeros(self.d());
        for (i, rec) in data.records().enumerate() {
            let mut h = T::zero();
            let mut hd = T::zero();
            for j in 0..q {
                h += gammas[j] * design.basis_rows[[i, j]];
                hd += gammas[j] * design.deriv_rows[[i, j]];
            }
            let hd_floored = hd.max(floor);

            x_buf.assign(&rec.x);
            let (g, tape) = net.forward_multi(&x_buf, rng.as_deref_mut())?;
            let phi = h + self.beta.dot(&rec.z) + g[0];

            total += self.record_loglik(phi, hd_floored, rec.event);

            let score = self.phi_score_at(phi, rec.event);
            for (db, &z) in d_beta.iter_mut().zip(rec.z.iter()) {
                *db += z * score;
            }
            let d_hd = if rec.event {
                hd_floored.recip()
            } else {
                T::zero()
            };
            for j in 0..q {
                d_gamma[j] += score * design.basis_rows[[i, j]] + d_hd * design.deriv_rows[[i, j]];
            }
            let d_out = Array1::from_elem(1, score);
            net.backward_into(&tape, &d_out, &mut net_grads)?;
        }

        let d_gamma_tilde = chain_to_free(self.spline.free(), &d_gamma);
        Ok((
            total,
            LoglikGradient {
                d_beta,
                d_gamma_tilde,
                net: net_grads,
            },
        ))
    }

    /// Set `g_offset` to the training-sample mean of the raw network output,
    /// so the reported nonparametric estimate is mean-zero over the training
    /// data. `beta`, the spline, and every `phi` are untouched.
    pub fn finalize_centering(&mut self, train: &SurvivalDataset<T>) -> Result<()> {
        self.check_data(train)?;
        if train.is_empty() {
            return Err(Error::Domain("cannot center on an empty dataset".into()));
        }
        let mut sum = T::zero();
        for rec in train.records() {
            sum += self.g_raw(&rec.x.to_owned())?;
        }
        self.g_offset = sum / T::from_usize(train.len()).unwrap();
        Ok(())
    }

    /// Transformation estimate with the centering shift absorbed, the
    /// display/metric counterpart of the mean-zero `g`:
    /// `H_adj(t) = H(t) + g_offset`, so `H_adj + g_centered = H + g_raw`.
    pub fn transform_adjusted(&self, t: T) -> T {
        self.spline.eval_h(t) + self.g_offset
    }

    /// Linear predictor at an arbitrary horizon `t` (clamped to the spline
    /// domain if necessary; the flag reports clamping).
    pub fn phi_at(&self, record: &Record<'_, T>, t: T) -> Result<(T, bool)> {
        self.check_record(record)?;
        let se = self.spline.eval(t);
        let g = self.g_raw(&record.x.to_owned())?;
        Ok((se.h + self.beta.dot(&record.z) + g, se.clamped))
    }

    /// Conditional survival probability
    /// `S(t | Z, X) = exp(-Lambda(H(t) + beta' Z + g(X)))`.
    pub fn predict_survival(&self, record: &Record<'_, T>, t: T) -> Result<T> {
        let (phi, _) = self.phi_at(record, t)?;
        Ok(self.error.survival(phi))
    }

    /// Event probability prior to `t0`: the complement of survival.
    pub fn predict_event_prob(&self, record: &Record<'_, T>, t0: T) -> Result<T> {
        Ok(T::one() - self.predict_survival(record, t0)?)
    }

    /// Risk score `beta' Z + g(X)` used for concordance ranking.
    pub fn risk_score(&self, record: &Record<'_, T>) -> Result<T> {
        self.check_record(record)?;
        Ok(self.beta.dot(&record.z) + self.g_raw(&record.x.to_owned())?)
    }

    // ---- flat parameter packing (trainer interface) -----------------------

    /// Total number of free parameters.
    pub fn param_count(&self) -> usize {
        self.p() + self.spline.basis().basis_count() + self.net.param_count()
    }

    /// Pack `beta`, the free spline parameters, and the network weights and
    /// biases into one flat vector (layer by layer, weights row-major then
    /// bias).
    pub fn pack(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend(self.beta.iter().copied());
        out.extend(self.spline.free().iter().copied());
        for k in 0..self.net.weights().len() {
            out.extend(self.net.weights()[k].iter().copied());
            out.extend(self.net.biases()[k].iter().copied());
        }
        out
    }

    /// Inverse of [`DpltmParams::pack`].
    pub fn unpack(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length");
        let mut pos = 0;
        for b in self.beta.iter_mut() {
            *b = flat[pos];
            pos += 1;
        }
        let q = self.spline.basis().basis_count();
        self.spline.set_free(&flat[pos..pos + q]);
        pos += q;
        for k in 0..self.net.weights().len() {
            let len = self.net.weights()[k].len();
            for (w, &v) in self.net.weights_mut()[k]
                .iter_mut()
                .zip(&flat[pos..pos + len])
            {
                *w = v;
            }
            pos += len;
            let len = self.net.biases()[k].len();
            for (b, &v) in self.net.biases_mut()[k]
                .iter_mut()
                .zip(&flat[pos..pos + len])
            {
                *b = v;
            }
            pos += len;
        }
        debug_assert_eq!(pos, flat.len());
    }

    /// Pack a gradient in the same layout as [`DpltmParams::pack`].
    pub fn pack_grad(&self, grad: &LoglikGradient<T>) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend(grad.d_beta.iter().copied());
        out.extend(grad.d_gamma_tilde.iter().copied());
        for k in 0..grad.net.d_weights.len() {
            out.extend(grad.net.d_weights[k].iter().copied());
            out.extend(grad.net.d_biases[k].iter().copied());
        }
        out
    }
}

/// Serialized form of a fitted model: a single self-describing JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile<T> {
    pub format_version: u32,
    pub params: DpltmParams<T>,
    /// Free-form training metadata (selected r, config echo, losses).
    pub metadata: serde_json::Value,
}

impl<T: Scalar + Serialize + for<'de> Deserialize<'de>> ModelFile<T> {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn new(params: DpltmParams<T>, metadata: serde_json::Value) -> Self {
        Self {
            format_version: Self::FORMAT_VERSION,
            params,
            metadata,
        }
    }

    pub fn save<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        let json =
            serde_json::to_string_pretty(self).map_err(|e| Error::ModelFile(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: Self =
            serde_json::from_str(&text).map_err(|e| Error::ModelFile(e.to_string()))?;
        if file.format_version != Self::FORMAT_VERSION {
            return Err(Error::ModelFile(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::{free_from_gammas, SplineBasis};
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn constant_spline(c: f64, lo: f64, hi: f64) -> MonotoneSpline<f64> {
        // gamma all equal is unreachable through the reparameterization, so
        // approximate: gamma_1 = c and increments exp(-700) ~ 0.
        let basis = SplineBasis::new(4, 2, lo, hi).unwrap();
        let q = basis.basis_count();
        let mut gt = vec![-700.0; q];
        gt[0] = c;
        MonotoneSpline::new(basis, gt).unwrap()
    }

    fn zero_net(d: usize) -> DeepNet<f64> {
        DeepNet::from_parts(
            vec![d, 1],
            vec![Array2::zeros((1, d))],
            vec![Array1::zeros(1)],
            0.0,
        )
        .unwrap()
    }

    fn random_params(
        seed: u64,
        p: usize,
        d: usize,
        widths: &[usize],
        r: f64,
        domain: (f64, f64),
    ) -> DpltmParams<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let basis = SplineBasis::new(4, 4, domain.0, domain.1).unwrap();
        let gt: Vec<f64> = (0..basis.basis_count())
            .map(|_| rng.random_range(-1.5..0.5))
            .collect();
        let spline = MonotoneSpline::new(basis, gt).unwrap();
        let mut full_widths = vec![d];
        full_widths.extend_from_slice(widths);
        full_widths.push(1);
        let net = DeepNet::init(&full_widths, 0.0, &mut rng).unwrap();
        let beta = Array1::from_shape_fn(p, |_| rng.random_range(-1.0..1.0));
        DpltmParams::new(beta, spline, net, ErrorModel::new(r).unwrap()).unwrap()
    }

    fn random_dataset(seed: u64, n: usize, p: usize, d: usize) -> SurvivalDataset<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..3.0)).collect();
        let status: Vec<u8> = (0..n)
            .map(|_| u8::from(rng.random::<f64>() < 0.6))
            .collect();
        let z = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
        let x = Array2::from_shape_fn((n, d), |_| rng.random_range(0.0..2.0));
        SurvivalDataset::new(times, status, z, x).unwrap()
    }

    #[test]
    fn phi_is_the_sum_of_parts() {
        // Constant H == c1, beta = 0, zero net  =>  phi = c1.
        let params = DpltmParams::new(
            Array1::zeros(0),
            constant_spline(2.5, 0.0, 4.0),
            zero_net(3),
            ErrorModel::proportional_hazards(),
        )
        .unwrap();
        let ds = SurvivalDataset::new(
            vec![1.0],
            vec![1],
            Array2::zeros((1, 0)),
            array![[0.5, 0.5, 0.5]],
        )
        .unwrap();
        assert!((params.phi(&ds.record(0)).unwrap() - 2.5).abs() < 1e-12);

        // H == 0, g == 0, p=1: phi = beta z = 6.
        let params = DpltmParams::new(
            array![3.0],
            constant_spline(0.0, 0.0, 4.0),
            zero_net(1),
            ErrorModel::proportional_hazards(),
        )
        .unwrap();
        let ds = SurvivalDataset::new(vec![1.0], vec![1], array![[2.0]], array![[0.0]]).unwrap();
        assert!((params.phi(&ds.record(0)).unwrap() - 6.0).abs() < 1e-12);

        // Random params: phi equals the three parts evaluated separately.
        let params = random_params(5, 2, 4, &[6], 0.5, (0.05, 3.0));
        let ds = random_dataset(6, 10, 2, 4);
        for rec in ds.records() {
            let expect = params.spline.eval_h(rec.time)
                + params.beta.dot(&rec.z)
                + params.g_raw(&rec.x.to_owned()).unwrap();
            assert!((params.phi(&rec).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn phi_score_reference_points() {
        let params = DpltmParams::new(
            Array1::zeros(0),
            constant_spline(0.0, 0.0, 4.0),
            zero_net(1),
            ErrorModel::proportional_hazards(),
        )
        .unwrap();
        // r=0: lambda'/lambda = 1, so Delta=1, phi=0 -> 0.
        assert!(params.phi_score_at(0.0, true).abs() < 1e-15);

        let params = DpltmParams::new(
            Array1::zeros(0),
            constant_spline(0.0, 0.0, 4.0),
            zero_net(1),
            ErrorModel::proportional_odds(),
        )
        .unwrap();
        assert!((params.phi_score_at(0.0, false) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn phi_score_is_dloglik_dphi() {
        let params = random_params(11, 2, 3, &[5], 0.5, (0.05, 3.0));
        for &(phi, event) in &[(0.3, true), (-1.2, false), (2.0, true), (0.0, false)] {
            let h = 1e-6;
            let f = |p: f64| params.record_loglik(p, 1.0, event);
            let fd = (f(phi + h) - f(phi - h)) / (2.0 * h);
            assert!((params.phi_score_at(phi, event) - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn loglik_reference_cases() {
        // Single censored record: -Lambda(phi).
        let params = DpltmParams::new(
            Array1::zeros(0),
            constant_spline(0.7, 0.5, 2.0),
            zero_net(1),
            ErrorModel::proportional_odds(),
        )
        .unwrap();
        let ds =
            SurvivalDataset::new(vec![1.0], vec![0], Array2::zeros((1, 0)), array![[1.0]]).unwrap();
        let expect = -params.error.cum_hazard(0.7);
        assert!((params.loglik(&ds).unwrap() - expect).abs() < 1e-12);

        // Event with H'(T)=1, phi=0, r=0: log 1 + log 1 - 1 = -1.
        // Greville coefficients make H the identity (H' = 1); time 1 with
        // beta z = -1 and g = 0 gives phi = 0.
        let basis = SplineBasis::new(4, 3, 0.5, 2.0).unwrap();
        let gammas = basis.greville();
        let spline = MonotoneSpline::new(basis, free_from_gammas(&gammas).unwrap()).unwrap();
        let params = DpltmParams::new(
            array![1.0],
            spline,
            zero_net(1),
            ErrorModel::proportional_hazards(),
        )
        .unwrap();
        let ds = SurvivalDataset::new(vec![1.0], vec![1], array![[-1.0]], array![[0.3]]).unwrap();
        assert!((params.loglik(&ds).unwrap() + 1.0).abs() < 1e-10);
    }

    #[test]
    fn loglik_matches_independent_sum() {
        // Separately coded direct sum over records.
        let params = random_params(21, 2, 4, &[7, 5], 1.0, (0.05, 3.0));
        let ds = random_dataset(22, 10, 2, 4);
        let mut expect = 0.0;
        for rec in ds.records() {
            let h = params.spline.eval_h(rec.time);
            let hd = params.spline.eval_h_deriv(rec.time).max(1e-10);
            let phi = h + params.beta.dot(&rec.z) + params.g_raw(&rec.x.to_owned()).unwrap();
            let delta = f64::from(rec.event);
            expect += delta * hd.ln() + delta * params.error.hazard(phi).ln()
                - params.error.cum_hazard(phi);
        }
        assert!((params.loglik(&ds).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let params = random_params(33, 2, 5, &[10, 10], 0.5, (0.05, 3.0));
        let ds = random_dataset(34, 50, 2, 5);
        let design = SplineDesign::new(&params, &ds);
        let (_, grad) = params
            .loglik_with_grad::<ChaCha12Rng>(&ds, &design, Mode::Eval, None)
            .unwrap();
        let flat_grad = params.pack_grad(&grad);
        let theta = params.pack();

        let h = 1e-5;
        for k in 0..theta.len() {
            let mut plus = params.clone();
            let mut tp = theta.clone();
            tp[k] += h;
            plus.unpack(&tp);
            let mut minus = params.clone();
            let mut tm = theta.clone();
            tm[k] -= h;
            minus.unpack(&tm);
            let fd = (plus.loglik(&ds).unwrap() - minus.loglik(&ds).unwrap()) / (2.0 * h);
            let scale = flat_grad[k].abs().max(fd.abs()).max(1.0);
            assert!(
                (flat_grad[k] - fd).abs() / scale <= 1e-5,
                "coordinate {k}: analytic {} vs fd {}",
                flat_grad[k],
                fd
            );
        }
    }

    #[test]
    fn beta_gradient_is_score_weighted_covariates() {
        let params = random_params(44, 3, 4, &[6], 0.0, (0.05, 3.0));
        let ds = random_dataset(45, 30, 3, 4);
        let design = SplineDesign::new(&params, &ds);
        let (_, grad) = params
            .loglik_with_grad::<ChaCha12Rng>(&ds, &design, Mode::Eval, None)
            .unwrap();
        let mut expect = Array1::<f64>::zeros(3);
        for rec in ds.records() {
            let score = params.phi_score(&rec).unwrap();
            expect = expect + rec.z.to_owned() * score;
        }
        for j in 0..3 {
            assert!((grad.d_beta[j] - expect[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn censored_zero_score_rows_give_zero_beta_gradient() {
        // All-censored dataset with hazard forced tiny: scores ~ -lambda(phi)
        // with phi very negative, so the beta gradient vanishes.
        let params = DpltmParams::new(
            array![0.5],
            constant_spline(-100.0, 0.5, 2.0),
            zero_net(1),
            ErrorModel::proportional_hazards(),
        )
        .unwrap();
        let ds = SurvivalDataset::new(
            vec![1.0, 1.5],
            vec![0, 0],
            array![[1.0], [2.0]],
            array![[0.1], [0.2]],
        )
        .unwrap();
        let design = SplineDesign::new(&params, &ds);
        let (_, grad) = params
            .loglik_with_grad::<ChaCha12Rng>(&ds, &design, Mode::Eval, None)
            .unwrap();
        assert!(grad.d_beta[0].abs() < 1e-40);
    }

    #[test]
    fn centering_examples() {
        // Constant net output c: offset = c, centered g == 0.
        let mut net = zero_net(2);
        net.biases_mut()[0][0] = 1.9;
        let mut params = DpltmParams::new(
            Array1::zeros(0),
            constant_spline(0.0, 0.5, 2.0),
            net,
            ErrorModel::proportional_hazards(),
        )
        .unwrap();
        let ds = random_dataset(50, 20, 0, 2);
        params.finalize_centering(&ds).unwrap();
        assert!((params.g_offset - 1.9).abs() < 1e-12);
        for rec in ds.records() {
            assert!(params.g_centered(&rec.x.to_owned()).unwrap().abs() < 1e-12);
        }

        // After centering the training-sample mean of centered g is 0.
        let mut params = random_params(51, 0, 3, &[8], 0.5, (0.05, 3.0));
        let ds = random_dataset(52, 40, 0, 3);
        params.finalize_centering(&ds).unwrap();
        let mean: f64 = ds
            .records()
            .map(|r| params.g_centered(&r.x.to_owned()).unwrap())
            .sum::<f64>()
            / ds.len() as f64;
        assert!(mean.abs() <= 1e-10);

        // phi-differences between records are unchanged by the shift.
        let r0 = ds.record(0);
        let r1 = ds.record(1);
        let before = params.phi(&r0).unwrap() - params.phi(&r1).unwrap();
        params.g_offset = 123.0;
        let after = params.phi(&r0).unwrap() - params.phi(&r1).unwrap();
        assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn identifiability_shift_leaves_loglik_unchanged() {
        // Shift the spline level by c and subtract c from the output bias.
        let params = random_params(61, 2, 3, &[6], 0.5, (0.05, 3.0));
        let ds = random_dataset(62, 25, 2, 3);
        let base = params.loglik(&ds).unwrap();

        let c = 0.8;
        let mut shifted = params.clone();
        let mut gt = shifted.spline.free().to_vec();
        gt[0] += c;
        shifted.spline.set_free(&gt);
        let last = shifted.net.biases().len() - 1;
        shifted.net.biases_mut()[last][0] -= c;
        let after = shifted.loglik(&ds).unwrap();
        assert!((base - after).abs() <= 1e-10 * base.abs().max(1.0));
    }

    #[test]
    fn loglik_invariant_under_centering_reassignment() {
        // Evaluating at finalize-centered params with the shift reassigned to
        // the spline level reproduces the pre-centering value.
        let mut params = random_params(63, 1, 3, &[5], 0.0, (0.05, 3.0));
        let ds = random_dataset(64, 30, 1, 3);
        let before = params.loglik(&ds).unwrap();
        params.finalize_centering(&ds).unwrap();
        let offset = params.g_offset;

        let mut reassigned = params.clone();
        // Push the offset into the spline level and remove it from the net.
        let mut gt = reassigned.spline.free().to_vec();
        gt[0] += offset;
        reassigned.spline.set_free(&gt);
        let last = reassigned.net.biases().len() - 1;
        reassigned.net.biases_mut()[last][0] -= offset;
        let after = reassigned.loglik(&ds).unwrap();
        assert!((before - after).abs() <= 1e-10 * before.abs().max(1.0));
    }

    #[test]
    fn survival_predictions() {
        // r=0, phi(t)=0 -> exp(-1).
        let params = DpltmParams::new(
            Array1::zeros(0),
            constant_spline(0.0, 0.5, 2.0),
            zero_net(1),
            ErrorModel::proportional_hazards(),
        )
        .unwrap();
        let ds =
            SurvivalDataset::new(vec![1.0], vec![1], Array2::zeros((1, 0)), array![[0.5]]).unwrap();
        let s = params.predict_survival(&ds.record(0), 1.0).unwrap();
        assert!((s - (-1.0_f64).exp()).abs() < 1e-12);
        let f = params.predict_event_prob(&ds.record(0), 1.0).unwrap();
        assert!((s + f - 1.0).abs() < 1e-12);

        // Very negative H: survival approaches 1.
        let params = DpltmParams::new(
            Array1::zeros(0),
            constant_spline(-200.0, 0.5, 2.0),
            zero_net(1),
            ErrorModel::proportional_hazards(),
        )
        .unwrap();
        assert!(params.predict_survival(&ds.record(0), 0.5).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn survival_is_monotone_in_t_and_bounded() {
        let params = random_params(71, 2, 3, &[7], 1.0, (0.05, 3.0));
        let ds = random_dataset(72, 5, 2, 3);
        for rec in ds.records() {
            let mut prev = 1.0;
            for i in 0..200 {
                let t = 0.01 + 3.5 * i as f64 / 199.0;
                let s = params.predict_survival(&rec, t).unwrap();
                assert!((0.0..=1.0).contains(&s));
                assert!(s <= prev + 1e-12);
                prev = s;
            }
        }
    }

    #[test]
    fn pack_unpack_round_trip() {
        let params = random_params(81, 2, 4, &[6, 3], 0.5, (0.05, 3.0));
        let flat = params.pack();
        assert_eq!(flat.len(), params.param_count());
        let mut other = random_params(82, 2, 4, &[6, 3], 0.5, (0.05, 3.0));
        other.unpack(&flat);
        assert_eq!(other.pack(), flat);
        assert_eq!(other.beta, params.beta);
        assert_eq!(other.spline.free(), params.spline.free());
    }

    #[test]
    fn model_file_round_trip() {
        let params = random_params(91, 2, 3, &[4], 1.0, (0.05, 3.0));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let file = ModelFile::new(params.clone(), serde_json::json!({"note": "test"}));
        file.save(&path).unwrap();
        let loaded = ModelFile::<f64>::load(&path).unwrap();
        assert_eq!(loaded.params, params);

        let ds = random_dataset(92, 10, 2, 3);
        assert!((loaded.params.loglik(&ds).unwrap() - params.loglik(&ds).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let params = random_params(95, 2, 3, &[4], 0.0, (0.05, 3.0));
        let ds = random_dataset(96, 5, 1, 3);
        assert!(params.loglik(&ds).is_err());
    }
}
