//! Synthetic right-censored data generation.
//!
//! Covariates: `Z1 ~ Bernoulli(0.5)`, `Z2 ~ Normal(mean 0.5, sd 0.5)` (the
//! scale that puts the signal ratio `Var{g0}/Var{beta0'Z}` inside the [5,7]
//! design band for all three cases),
//! and a 5-dimensional `X` from a Gaussian copula with pairwise correlation
//! 0.5 and Uniform[0,2] marginals. Survival times come from the inverse
//! transform `U = H0^{-1}(quantile(V) - beta0'Z - g0(X))`; censoring is
//! Uniform(0, c0) with the tabulated `c0` per error index and target rate.
//!
//! All randomness flows through a counter-based ChaCha12 stream seeded from
//! the design, so a design plus seed reproduces a dataset byte for byte.
//! Replications derive independent streams from (master seed, replicate
//! index).

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::error_family::ErrorModel;
use crate::num::{normal_cdf, Scalar};
use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Dimension of the nonparametrically modelled covariate vector.
pub const X_DIM: usize = 5;

/// The three designs for the true nonparametric function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GCase {
    Linear,
    Additive,
    Deep,
}

/// Censoring specification: calibrated table lookup by target rate, or an
/// explicit upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Censoring<T> {
    TargetRate(T),
    FixedC0(T),
}

/// One simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign<T> {
    pub n: usize,
    /// Error family index; the closed-form transformations exist for
    /// `r` in {0, 0.5, 1} only.
    pub r: T,
    pub case: GCase,
    pub beta0: Vec<T>,
    pub censoring: Censoring<T>,
    pub seed: u64,
}

/// Ground truth emitted alongside a simulated dataset, one row per record:
/// the uncensored time, `g0(X)`, and the linear predictor `beta0'Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecords<T> {
    pub u_true: Vec<T>,
    pub g0: Vec<T>,
    pub linpred: Vec<T>,
}

impl<T: Scalar> SimDesign<T> {
    /// Paper-style design: `beta0 = (1, -1)` with a target censoring rate.
    pub fn new(n: usize, r: T, case: GCase, target_rate: T, seed: u64) -> Self {
        Self {
            n,
            r,
            case,
            beta0: vec![T::one(), -T::one()],
            censoring: Censoring::TargetRate(target_rate),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Domain("need at least one record".into()));
        }
        transform_kind(self.r)?;
        if self.beta0.len() != 2 {
            return Err(Error::Domain(
                "the covariate law fixes two linear covariates; beta0 must have length 2".into(),
            ));
        }
        if let Censoring::FixedC0(c0) = self.censoring {
            if !(c0 > T::zero()) {
                return Err(Error::Domain("c0 must be positive".into()));
            }
        }
        Ok(())
    }

    /// Resolve the censoring bound: explicit value, or the calibrated table
    /// for target rates 40%/60% under `r` in {0, 0.5, 1}.
    pub fn resolve_c0(&self) -> Result<T> {
        match self.censoring {
            Censoring::FixedC0(c0) => Ok(c0),
            Censoring::TargetRate(rate) => c0_table(self.r, rate),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TransformKind {
    R0,
    RHalf,
    ROne,
}

fn transform_kind<T: Scalar>(r: T) -> Result<TransformKind> {
    let r = r.as_f64();
    if (r - 0.0).abs() < 1e-9 {
        Ok(TransformKind::R0)
    } else if (r - 0.5).abs() < 1e-9 {
        Ok(TransformKind::RHalf)
    } else if (r - 1.0).abs() < 1e-9 {
        Ok(TransformKind::ROne)
    } else {
        Err(Error::Domain(format!(
            "closed-form transformation is defined for r in {{0, 0.5, 1}}, got {r}"
        )))
    }
}

/// Tabulated censoring bounds achieving roughly 40%/60% censoring.
pub fn c0_table<T: Scalar>(r: T, target_rate: T) -> Result<T> {
    let kind = transform_kind(r)?;
    let rate = target_rate.as_f64();
    let value = if (rate - 0.4).abs() < 1e-9 {
        match kind {
            TransformKind::R0 => 2.95,
            TransformKind::RHalf => 2.75,
            TransformKind::ROne => 2.55,
        }
    } else if (rate - 0.6).abs() < 1e-9 {
        match kind {
            TransformKind::R0 => 0.85,
            TransformKind::RHalf => 0.9,
            TransformKind::ROne => 1.0,
        }
    } else {
        return Err(Error::Domain(format!(
            "no tabulated c0 for censoring rate {rate}; pass an explicit c0 or calibrate one"
        )));
    };
    Ok(T::of(value))
}

/// True transformation `H0`: `log t` for r=0, `log(2 e^{t/2} - 2)` for
/// r=0.5, `log(e^t - 1)` for r=1.
pub fn h0<T: Scalar>(r: T, t: T) -> Result<T> {
    if !(t > T::zero()) {
        return Err(Error::Domain(format!("H0 needs t > 0, got {t}")));
    }
    let kind = transform_kind(r)?;
    let t = t.as_f64();
    let value = match kind {
        TransformKind::R0 => t.ln(),
        // log(2 e^{t/2} - 2) = log 2 + t/2 + log1p(-e^{-t/2})
        TransformKind::RHalf => 2.0_f64.ln() + 0.5 * t + (-(-0.5 * t).exp()).ln_1p(),
        // log(e^t - 1) = t + log1p(-e^{-t})
        TransformKind::ROne => t + (-(-t).exp()).ln_1p(),
    };
    Ok(T::of(value))
}

/// Inverse of [`h0`]: `e^x`, `2 log((e^x + 2)/2)`, `log(e^x + 1)`.
pub fn h0_inverse<T: Scalar>(r: T, x: T) -> Result<T> {
    let kind = transform_kind(r)?;
    let x = x.as_f64();
    let value = match kind {
        TransformKind::R0 => x.exp(),
        TransformKind::RHalf => {
            if x > 500.0 {
                // 2(log(e^x + 2) - log 2) = 2(x + log1p(2 e^{-x}) - log 2)
                2.0 * (x + (2.0 * (-x).exp()).ln_1p() - 2.0_f64.ln())
            } else {
                2.0 * ((x.exp() + 2.0) / 2.0).ln()
            }
        }
        TransformKind::ROne => {
            if x > 500.0 {
                x + (-x).exp().ln_1p()
            } else {
                x.exp().ln_1p()
            }
        }
    };
    Ok(T::of(value))
}

/// True nonparametric function for each design, on `[0,2]^5`.
pub fn g0<T: Scalar>(case: GCase, x: &Array1<T>) -> T {
    assert_eq!(x.len(), X_DIM, "g0 is defined on [0,2]^5");
    let v: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    let (x1, x2, x3, x4, x5) = (v[0], v[1], v[2], v[3], v[4]);
    let value = match case {
        GCase::Linear => 0.25 * (x1 + 2.0 * x2 + 3.0 * x3 + 4.0 * x4 + 5.0 * x5 - 15.0),
        GCase::Additive => {
            2.5 * ((2.0 * x1).sin()
                + (x2 / 2.0).cos() / 2.0
                + (x3 * x3 + 1.0).ln() / 3.0
                + (x4 - x4.powi(3)) / 4.0
                + (x5.exp() - 1.0) / 5.0
                - 1.27)
        }
        GCase::Deep => {
            2.45 * ((2.0 * x1 * x2).sin()
                + (x2 * x3 / 2.0).cos() / 2.0
                + (x3 * x4 + 1.0).ln() / 3.0
                + (x4 - x3 * x4 * x5) / 4.0
                + (x5.exp() - 1.0) / 5.0
                - 1.16)
        }
    };
    T::of(value)
}

/// Lower-triangular Cholesky factor of the 5x5 equicorrelation matrix with
/// off-diagonal 0.5.
fn equicorrelation_cholesky() -> [[f64; X_DIM]; X_DIM] {
    let mut a = [[0.0_f64; X_DIM]; X_DIM];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if i == j { 1.0 } else { 0.5 };
        }
    }
    let mut l = [[0.0_f64; X_DIM]; X_DIM];
    for i in 0..X_DIM {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    l
}

/// Draw one covariate pair `(Z, X)`.
///
/// `X` comes from correlated standard normals pushed through the normal CDF
/// and scaled to `[0, 2]`.
pub fn sample_covariates<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> (Array1<T>, Array1<T>) {
    let z1 = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
    let z2 = 0.5 + 0.5 * rng.sample::<f64, _>(StandardNormal);
    let l = equicorrelation_cholesky();
    let w: Vec<f64> = (0..X_DIM)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut x = Array1::zeros(X_DIM);
    for i in 0..X_DIM {
        let mut corr = 0.0;
        for k in 0..=i {
            corr += l[i][k] * w[k];
        }
        x[i] = T::of(2.0 * normal_cdf(corr));
    }
    (Array1::from_vec(vec![T::of(z1), T::of(z2)]), x)
}

/// Inverse-transform draw of the uncensored survival time given covariates.
pub fn sample_event_time<T: Scalar, R: Rng + ?Sized>(
    design: &SimDesign<T>,
    z: &Array1<T>,
    x: &Array1<T>,
    rng: &mut R,
) -> Result<T> {
    let error = ErrorModel::new(design.r)?;
    let mut v = rng.random::<f64>();
    while v <= 0.0 {
        v = rng.random::<f64>();
    }
    let eps = error.quantile(T::of(v))?;
    let beta0 = Array1::from_vec(design.beta0.clone());
    let shift = beta0.dot(z) + g0(design.case, x);
    h0_inverse(design.r, eps - shift)
}

/// Apply uniform censoring on `(0, c0)`: observed time and event indicator.
pub fn censor<T: Scalar, R: Rng + ?Sized>(c0: T, u: T, rng: &mut R) -> (T, u8) {
    let mut draw = rng.random::<f64>();
    while draw <= 0.0 {
        draw = rng.random::<f64>();
    }
    let c = c0 * T::of(draw);
    if u <= c {
        (u, 1)
    } else {
        (c, 0)
    }
}

/// Generate a full dataset plus ground truth for one design.
pub fn generate<T: Scalar>(design: &SimDesign<T>) -> Result<(SurvivalDataset<T>, TruthRecords<T>)> {
    design.validate()?;
    let c0 = design.resolve_c0()?;
    let mut rng = ChaCha12Rng::seed_from_u64(design.seed);
    generate_with_rng(design, c0, &mut rng)
}

/// Generate with the replicate-indexed stream of a master seed, so
/// replications are independent and parallelism-invariant.
pub fn generate_replicate<T: Scalar>(
    design: &SimDesign<T>,
    replicate: u64,
) -> Result<(SurvivalDataset<T>, TruthRecords<T>)> {
    design.validate()?;
    let c0 = design.resolve_c0()?;
    let mut rng = ChaCha12Rng::seed_from_u64(design.seed);
    rng.set_stream(replicate.wrapping_add(1));
    generate_with_rng(design, c0, &mut rng)
}

fn generate_with_rng<T: Scalar>(
    design: &SimDesign<T>,
    c0: T,
    rng: &mut ChaCha12Rng,
) -> Result<(SurvivalDataset<T>, TruthRecords<T>)> {
    let n = design.n;
    let beta0 = Array1::from_vec(design.beta0.clone());
    let mut times = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    let mut z_rows = Array2::zeros((n, 2));
    let mut x_rows = Array2::zeros((n, X_DIM));
    let mut truth = TruthRecords {
        u_true: Vec::with_capacity(n),
        g0: Vec::with_capacity(n),
        linpred: Vec::with_capacity(n),
    };
    for i in 0..n {
        let (z, x) = sample_covariates::<T, _>(rng);
        let u = sample_event_time(design, &z, &x, rng)?;
        let (t, delta) = censor(c0, u, rng);
        times.push(t.max(T::of(1e-300)));
        status.push(delta);
        z_rows.row_mut(i).assign(&z);
        x_rows.row_mut(i).assign(&x);
        truth.u_true.push(u);
        truth.g0.push(g0(design.case, &x));
        truth.linpred.push(beta0.dot(&z));
    }
    let data = SurvivalDataset::new(times, status, z_rows, x_rows)?;
    Ok((data, truth))
}

/// Find `c0` hitting a target censoring rate by bisection on a Monte Carlo
/// probe with common random numbers (one fixed sample of survival times and
/// censoring uniforms, `draws` of them).
pub fn calibrate_c0<T: Scalar>(
    design: &SimDesign<T>,
    target_rate: T,
    precision: T,
    draws: usize,
) -> Result<T> {
    design.validate()?;
    let target = target_rate.as_f64();
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::SearchFailed(format!(
            "target censoring rate must lie in (0,1), got {target}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(design.seed ^ 0xc0c0_c0c0);
    let mut u_draws = Vec::with_capacity(draws);
    let mut unif = Vec::with_capacity(draws);
    for _ in 0..draws {
        let (z, x) = sample_covariates::<T, _>(&mut rng);
        let u = sample_event_time(design, &z, &x, &mut rng)?;
        u_draws.push(u.as_f64());
        unif.push(rng.random::<f64>());
    }
    // Censored iff U > c0 * unif; rate is nonincreasing in c0.
    let rate = |c0: f64| -> f64 {
        let censored = u_draws
            .iter()
            .zip(&unif)
            .filter(|&(&u, &v)| u > c0 * v)
            .count();
        censored as f64 / draws as f64
    };
    let mut lo = 1e-9;
    let mut hi = 1.0;
    const C0_BOUND: f64 = 1e9;
    while rate(hi) > target {
        hi *= 2.0;
        if hi > C0_BOUND {
            return Err(Error::SearchFailed(format!(
                "no c0 below {C0_BOUND} reaches censoring rate {target}"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (rate(mid) - target).abs() <= precision.as_f64() {
            return Ok(T::of(mid));
        }
    }
    let mid = 0.5 * (lo + hi);
    if (rate(mid) - target).abs() <= precision.as_f64() {
        Ok(T::of(mid))
    } else {
        Err(Error::SearchFailed(format!(
            "bisection stalled at c0 = {mid} with rate {}",
            rate(mid)
        )))
    }
}

impl<T: Scalar> TruthRecords<T> {
    pub fn len(&self) -> usize {
        self.u_true.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_true.is_empty()
    }

    /// Write as CSV with columns `u_true,g0,linpred`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["u_true", "g0", "linpred"])
            .map_err(|e| Error::Csv {
                line: 1,
                message: e.to_string(),
            })?;
        for i in 0..self.len() {
            w.write_record(&[
                format!("{}", self.u_true[i].as_f64()),
                format!("{}", self.g0[i].as_f64()),
                format!("{}", self.linpred[i].as_f64()),
            ])
            .map_err(|e| Error::Csv {
                line: i + 2,
                message: e.to_string(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path.as_ref())?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Read the `u_true,g0,linpred` CSV back.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Csv {
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols != ["u_true", "g0", "linpred"] {
            return Err(Error::Csv {
                line: 1,
                message: format!("expected header u_true,g0,linpred, got {cols:?}"),
            });
        }
        let mut out = Self {
            u_true: Vec::new(),
            g0: Vec::new(),
            linpred: Vec::new(),
        };
        for (idx, rec) in rdr.records().enumerate() {
            let line = idx + 2;
            let rec = rec.map_err(|e| Error::Csv {
                line,
                message: e.to_string(),
            })?;
            let parse = |s: &str| -> Result<T> {
                s.trim().parse::<f64>().map(T::of).map_err(|_| Error::Csv {
                    line,
                    message: format!("cannot parse {s:?} as a number"),
                })
            };
            out.u_true.push(parse(&rec[0])?);
            out.g0.push(parse(&rec[1])?);
            out.linpred.push(parse(&rec[2])?);
        }
        Ok(out)
    }

    pub fn read_csv_path<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}
