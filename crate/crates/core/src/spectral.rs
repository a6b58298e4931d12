//! Discrete Fourier machinery shared by the rest of the crate.
//!
//! Convention: a [`CircleSignal`] of length `N` holds samples `f(t_j)` on the grid
//! `t_j = 2πj/N`, and its [`Spectrum`] holds the coefficients `c_k` with
//! `f(t) = Σ c_k e^{ikt}`. Frequencies are indexed over `(-N/2, N/2]`; for even `N`
//! the Nyquist bin is counted as the nonnegative frequency `+N/2`.

use std::cell::RefCell;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{PduError, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealSignal {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl RealSignal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(PduError::invalid("signal has no samples"));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(PduError::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(PduError::invalid(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Length of the record in seconds (`len / fs`).
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn to_circle(&self) -> Result<CircleSignal> {
        CircleSignal::new(
            self.samples
                .iter()
                .map(|&x| Complex64::new(x, 0.0))
                .collect(),
        )
    }
}

/// Complex samples on the uniform grid of `[0, 2π)`: boundary values of a function on the disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleSignal {
    values: Vec<Complex64>,
}

impl CircleSignal {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(PduError::invalid(format!(
                "circle signal needs at least 2 samples, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(PduError::invalid(format!("value {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub(crate) fn from_vec_unchecked(values: Vec<Complex64>) -> Self {
        debug_assert!(values.len() >= 2);
        Self { values }
    }

    /// Samples a function of the angle `t ∈ [0, 2π)` on an `n`-point grid.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let step = 2.0 * PI / n as f64;
        Self::new((0..n).map(|j| f(j as f64 * step)).collect())
    }

    /// Samples a polynomial `Σ coeffs[k] z^k` on the unit circle.
    pub fn from_polynomial(n: usize, coeffs: &[Complex64]) -> Result<Self> {
        Self::from_fn(n, |t| {
            let z = Complex64::from_polar(1.0, t);
            coeffs
                .iter()
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
        })
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spectrum(&self) -> Spectrum {
        Spectrum {
            coefficients: forward(&self.values),
        }
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub(crate) fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self::from_vec_unchecked(self.values.iter().map(|&z| f(z)).collect())
    }

    pub(crate) fn zip_with(
        &self,
        other: &CircleSignal,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self::from_vec_unchecked(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub(crate) fn zeros(n: usize) -> Self {
        Self::from_vec_unchecked(vec![Complex64::new(0.0, 0.0); n])
    }
}

/// Fourier coefficients of a [`CircleSignal`], stored in FFT order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    coefficients: Vec<Complex64>,
}

impl Spectrum {
    pub fn from_fft_order(coefficients: Vec<Complex64>) -> Self {
        Self { coefficients }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Coefficients in FFT storage order (`k = 0, 1, ..., N/2, -N/2+1, ..., -1`).
    pub fn fft_order(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// Coefficient of `e^{ikt}`; `None` when `k` is outside `(-N/2, N/2]`.
    pub fn coefficient(&self, k: i64) -> Option<Complex64> {
        let n = self.coefficients.len() as i64;
        if k > n / 2 || k <= n / 2 - n {
            return None;
        }
        Some(self.coefficients[k.rem_euclid(n) as usize])
    }

    /// Iterates `(k, c_k)` pairs in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let n = self.coefficients.len();
        self.coefficients
            .iter()
            .enumerate()
            .map(move |(j, &c)| (frequency_index(j, n), c))
    }

    pub fn to_signal(&self) -> Result<CircleSignal> {
        CircleSignal::new(inverse(&self.coefficients))
    }
}

/// Signed frequency of FFT bin `j` for a length-`n` transform, in `(-n/2, n/2]`.
pub fn frequency_index(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// `c_k = (1/N) Σ_j f_j e^{-ikt_j}`, FFT order.
pub(crate) fn forward(values: &[Complex64]) -> Vec<Complex64> {
    let n = values.len();
    let mut buf = values.to_vec();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n).process(&mut buf));
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

/// `f_j = Σ_k c_k e^{ikt_j}` from FFT-ordered coefficients.
pub(crate) fn inverse(coefficients: &[Complex64]) -> Vec<Complex64> {
    let n = coefficients.len();
    let mut buf = coefficients.to_vec();
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n).process(&mut buf));
    buf
}

/// Weights `1` at `k = 0` and the Nyquist bin, `2` at `k > 0`, `0` at `k < 0`.
///
/// Applied to the spectrum of a real sequence this yields the analytic function whose
/// real part is the sequence.
pub(crate) fn one_sided_in_place(coefficients: &mut [Complex64]) {
    let n = coefficients.len();
    for (j, c) in coefficients.iter_mut().enumerate() {
        let k = frequency_index(j, n);
        if k < 0 {
            *c = Complex64::new(0.0, 0.0);
        } else if k > 0 && !(n.is_multiple_of(2) && j == n / 2) {
            *c *= 2.0;
        }
    }
}

pub(crate) fn l2_norm(values: &[Complex64]) -> f64 {
    values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn l2_norm_real(values: &[f64]) -> f64 {
    values.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Analytic signal `c_0 + 2 Σ_{k>0} c_k e^{ikt}` of a real sequence; its real part is the input.
pub fn analytic_projection(s: &RealSignal) -> Result<CircleSignal> {
    if s.len() < 2 {
        return Err(PduError::invalid("analytic projection needs at least 2 samples"));
    }
    let values: Vec<Complex64> = s.samples().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut coeffs = forward(&values);
    one_sided_in_place(&mut coeffs);
    Ok(CircleSignal::from_vec_unchecked(inverse(&coeffs)))
}

/// Keeps only the `k >= 0` coefficients of an arbitrary complex boundary signal (Szegő projection).
pub fn positive_projection(s: &CircleSignal) -> CircleSignal {
    let n = s.len();
    let mut coeffs = forward(s.values());
    for (j, c) in coeffs.iter_mut().enumerate() {
        if frequency_index(j, n) < 0 {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    CircleSignal::from_vec_unchecked(inverse(&coeffs))
}

/// Even extension `[f(1..N), f(N..1)]`, so the periodic extension has no jump.
pub fn flip_periodize(s: &RealSignal) -> RealSignal {
    RealSignal {
        samples: mirror(s.samples()),
        sample_rate_hz: s.sample_rate_hz(),
    }
}

pub(crate) fn mirror<T: Clone>(values: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(2 * values.len());
    out.extend_from_slice(values);
    out.extend(values.iter().rev().cloned());
    out
}

/// Undo [`flip_periodize`]: keep the first half of an even-length sequence.
pub trait Unflip: Sized {
    fn unflip(&self) -> Result<Self>;
}

fn first_half<T: Clone>(values: &[T]) -> Result<Vec<T>> {
    if !values.len().is_multiple_of(2) {
        return Err(PduError::invalid(format!(
            "unflip needs an even length, got {}",
            values.len()
        )));
    }
    Ok(values[..values.len() / 2].to_vec())
}

impl Unflip for RealSignal {
    fn unflip(&self) -> Result<Self> {
        RealSignal::new(first_half(self.samples())?, self.sample_rate_hz())
    }
}

impl Unflip for CircleSignal {
    fn unflip(&self) -> Result<Self> {
        CircleSignal::new(first_half(self.values())?)
    }
}

/// Band-limited interpolation by zero padding in frequency.
pub fn upsample(s: &CircleSignal, factor: usize) -> Result<CircleSignal> {
    if factor == 0 {
        return Err(PduError::invalid("upsample factor must be at least 1"));
    }
    if factor == 1 {
        return Ok(s.clone());
    }
    let n = s.len();
    let m = n * factor;
    let coeffs = forward(s.values());
    let mut padded = vec![Complex64::new(0.0, 0.0); m];
    for (j, c) in coeffs.into_iter().enumerate() {
        let k = frequency_index(j, n);
        padded[k.rem_euclid(m as i64) as usize] = c;
    }
    Ok(CircleSignal::from_vec_unchecked(inverse(&padded)))
}

/// Keeps every `factor`-th grid sample.
pub fn downsample(s: &CircleSignal, factor: usize) -> Result<CircleSignal> {
    if factor == 0 || !s.len().is_multiple_of(factor) {
        return Err(PduError::invalid(format!(
            "downsample factor {factor} does not divide length {}",
            s.len()
        )));
    }
    CircleSignal::new(s.values().iter().step_by(factor).copied().collect())
}

/// Discrete antiderivative on the sample grid (trapezoid rule, starting at zero).
pub fn cumulative_sum(s: &RealSignal) -> RealSignal {
    let h = 1.0 / s.sample_rate_hz();
    let x = s.samples();
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in x.windows(2) {
        acc += 0.5 * h * (w[0] + w[1]);
        out.push(acc);
    }
    RealSignal {
        samples: out,
        sample_rate_hz: s.sample_rate_hz(),
    }
}

/// Multiplies `c_k` by `ik·2π/duration_s`.
pub fn spectral_derivative(s: &CircleSignal, duration_s: f64) -> Result<CircleSignal> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(PduError::invalid("duration must be positive"));
    }
    let n = s.len();
    let omega = 2.0 * PI / duration_s;
    let mut coeffs = forward(s.values());
    for (j, c) in coeffs.iter_mut().enumerate() {
        let k = frequency_index(j, n) as f64;
        *c *= Complex64::new(0.0, k * omega);
    }
    Ok(CircleSignal::from_vec_unchecked(inverse(&coeffs)))
}

/// Time derivative of a complex sequence on a non-periodic record, taken spectrally on the
/// extension `[c, conj(reversed c)]`.
///
/// Analytic components of an even-extended record continue past its ends exactly this way
/// (real part even, imaginary part odd). For real input this is the even extension.
pub fn derivative_on_record(values: &[Complex64], sample_rate_hz: f64) -> Result<Vec<Complex64>> {
    let mut ext = values.to_vec();
    ext.extend(values.iter().rev().map(|z| z.conj()));
    let ext = CircleSignal::new(ext)?;
    let duration = ext.len() as f64 / sample_rate_hz;
    Ok(spectral_derivative(&ext, duration)?.unflip()?.into_values())
}

/// Band-limited upsampling of a real record: even extension, zero padding, then the first half.
pub fn upsample_real(s: &RealSignal, factor: usize) -> Result<RealSignal> {
    if factor == 0 {
        return Err(PduError::invalid("upsample factor must be at least 1"));
    }
    if factor == 1 {
        return Ok(s.clone());
    }
    let ext = flip_periodize(s).to_circle()?;
    let up = upsample(&ext, factor)?;
    let half: Vec<f64> = up.values()[..up.len() / 2].iter().map(|z| z.re).collect();
    RealSignal::new(half, s.sample_rate_hz() * factor as f64)
}

/// Least-squares polynomial trend, coefficients in ascending powers of the
/// normalized time `u = k/(N-1) ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialTrend {
    pub coefficients: Vec<f64>,
    pub len: usize,
}

impl PolynomialTrend {
    pub fn evaluate(&self) -> Vec<f64> {
        let denom = (self.len.max(2) - 1) as f64;
        (0..self.len)
            .map(|k| {
                let u = k as f64 / denom;
                self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * u + c)
            })
            .collect()
    }

    /// Time derivative of the fitted polynomial at each sample.
    pub fn derivative(&self, sample_rate_hz: f64) -> Vec<f64> {
        let denom = (self.len.max(2) - 1) as f64;
        let du_dt = sample_rate_hz / denom;
        (0..self.len)
            .map(|k| {
                let u = k as f64 / denom;
                let dp = self
                    .coefficients
                    .iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |acc, (j, &c)| acc * u + j as f64 * c);
                dp * du_dt
            })
            .collect()
    }
}

/// Removes the least-squares polynomial of the given degree (2 or 3).
pub fn polynomial_detrend(s: &RealSignal, degree: usize) -> Result<(RealSignal, PolynomialTrend)> {
    if !(2..=3).contains(&degree) {
        return Err(PduError::invalid(format!(
            "detrend degree must be 2 or 3, got {degree}"
        )));
    }
    let n = s.len();
    if n <= degree {
        return Err(PduError::invalid(format!(
            "detrend of degree {degree} needs more than {degree} samples, got {n}"
        )));
    }
    let denom = (n - 1) as f64;
    let design = DMatrix::from_fn(n, degree + 1, |r, c| (r as f64 / denom).powi(c as i32));
    let rhs = DVector::from_column_slice(s.samples());
    let coeffs = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| PduError::DegenerateSignal(format!("detrend solve failed: {e}")))?;
    let trend = PolynomialTrend {
        coefficients: coeffs.iter().copied().collect(),
        len: n,
    };
    let fitted = trend.evaluate();
    let residual = s
        .samples()
        .iter()
        .zip(&fitted)
        .map(|(x, p)| x - p)
        .collect();
    Ok((RealSignal::new(residual, s.sample_rate_hz())?, trend))
}

/// Unwraps a phase sequence by removing `2π` jumps, scanning left to right with `t = 0` as anchor.
pub fn unwrap_phase(phase: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phase.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &p in phase {
        if let Some(q) = prev {
            let d = p - q;
            if d > PI {
                offset -= 2.0 * PI * ((d + PI) / (2.0 * PI)).floor();
            } else if d < -PI {
                offset += 2.0 * PI * ((-d + PI) / (2.0 * PI)).floor();
            }
        }
        out.push(p + offset);
        prev = Some(p);
    }
    out
}
