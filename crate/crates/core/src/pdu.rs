//! Phase dynamics unwinding: repeated low-pass removal and Blaschke factorization.
//!
//! Starting from `F`, each step writes `G_{k-1} − F_L G_{k-1} = B_k G_k`, so that
//!
//! ```text
//! F = F_L F + Σ_k F_L G_k · B_1⋯B_k + remainder
//! ```
//!
//! where `F_L` keeps Fourier coefficients `0..=L`. With `L = 0` this is the vanilla
//! expansion with constant amplitudes `G_k(0)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::blaschke::factorize;
use crate::error::{PduError, Result};
use crate::spectral::{
    analytic_projection, cumulative_sum, derivative_on_record, downsample, flip_periodize,
    forward, frequency_index, inverse, polynomial_detrend, upsample, upsample_real,
    CircleSignal, RealSignal, Unflip,
};
use crate::windowed::{build_partition, windowed_decompose, Tapering, WindowSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PduConfig {
    /// Order `L` of the low-pass filter; `0` gives vanilla PDU.
    pub lowpass_order: usize,
    pub n_components: usize,
    /// Regularization of `ln|·|`, relative to the maximum magnitude of each factorized signal.
    pub epsilon: f64,
    pub upsample_factor: usize,
    /// Stop once the remainder holds less than this fraction of the input energy.
    pub residual_energy_stop: f64,
}

impl Default for PduConfig {
    fn default() -> Self {
        Self {
            lowpass_order: 5,
            n_components: 2,
            epsilon: 1e-6,
            upsample_factor: 16,
            residual_energy_stop: 1e-4,
        }
    }
}

impl PduConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_components == 0 {
            return Err(PduError::invalid("n_components must be at least 1"));
        }
        if self.upsample_factor == 0 {
            return Err(PduError::invalid("upsample_factor must be at least 1"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(PduError::invalid("epsilon must be positive"));
        }
        if !(0.0..1.0).contains(&self.residual_energy_stop) {
            return Err(PduError::invalid("residual_energy_stop must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Trend, ordered components and remainder of an unwinding.
#[derive(Debug, Clone, PartialEq)]
pub struct PduDecomposition {
    pub trend: CircleSignal,
    pub components: Vec<CircleSignal>,
    /// Per-component amplitude factor `F_L G_k`.
    pub amplitudes: Vec<CircleSignal>,
    /// Per-component accumulated inner factor `B_1⋯B_k`.
    pub unimodular_parts: Vec<CircleSignal>,
    pub residual: CircleSignal,
}

impl PduDecomposition {
    pub fn len(&self) -> usize {
        self.trend.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trend.is_empty()
    }

    /// `trend + Σ components + residual`.
    pub fn total(&self) -> CircleSignal {
        let mut acc = self.trend.zip_with(&self.residual, |a, b| a + b);
        for c in &self.components {
            acc = acc.zip_with(c, |a, b| a + b);
        }
        acc
    }

    /// Energy `‖component‖²` of each component.
    pub fn component_energies(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.norm().powi(2)).collect()
    }

    fn map_all(&self, f: impl Fn(&CircleSignal) -> Result<CircleSignal>) -> Result<Self> {
        Ok(Self {
            trend: f(&self.trend)?,
            components: self.components.iter().map(&f).collect::<Result<_>>()?,
            amplitudes: self.amplitudes.iter().map(&f).collect::<Result<_>>()?,
            unimodular_parts: self.unimodular_parts.iter().map(&f).collect::<Result<_>>()?,
            residual: f(&self.residual)?,
        })
    }
}

/// Keeps Fourier coefficients `0..=L` and zeros everything else.
pub fn lowpass(f: &CircleSignal, order: usize) -> Result<CircleSignal> {
    let n = f.len();
    if order >= n {
        return Err(PduError::invalid(format!(
            "low-pass order {order} must be below the grid size {n}"
        )));
    }
    let mut coeffs = forward(f.values());
    for (j, c) in coeffs.iter_mut().enumerate() {
        let k = frequency_index(j, n);
        if k < 0 || k as usize > order {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    Ok(CircleSignal::from_vec_unchecked(inverse(&coeffs)))
}

/// One unwinding step: `g = am + inner·next_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnwindStep {
    pub am: CircleSignal,
    pub inner: CircleSignal,
    pub next_g: CircleSignal,
}

/// Relative size below which `g − F_L g` counts as identically zero.
const CONVERGED_TOL: f64 = 1e-13;

/// Returns `None` when `g` has nothing left above the low-pass band (the unwinding has converged).
///
/// `epsilon` is relative to `max|g − F_L g|`.
pub fn unwind_step(g: &CircleSignal, order: usize, epsilon: f64) -> Result<Option<UnwindStep>> {
    let am = lowpass(g, order)?;
    let high = g.zip_with(&am, |a, b| a - b);
    let scale = g.max_abs();
    let high_max = high.max_abs();
    if high_max == 0.0 || high_max <= CONVERGED_TOL * scale {
        return Ok(None);
    }
    let bg = factorize(&high, epsilon * high_max)?;
    Ok(Some(UnwindStep {
        am,
        inner: bg.inner,
        next_g: bg.outer,
    }))
}

/// Unwinds a boundary signal into at most `cfg.n_components` components.
pub fn decompose(f: &CircleSignal, cfg: &PduConfig) -> Result<PduDecomposition> {
    cfg.validate()?;
    if f.max_abs() == 0.0 {
        return Err(PduError::DegenerateSignal(
            "cannot decompose an all-zero signal".into(),
        ));
    }
    let order = cfg.lowpass_order;
    let n = f.len();
    let energy = f.norm().powi(2);

    let first = match unwind_step(f, order, cfg.epsilon)? {
        Some(step) => step,
        None => {
            let trend = lowpass(f, order)?;
            let residual = f.zip_with(&trend, |a, b| a - b);
            return Ok(PduDecomposition {
                trend,
                components: vec![],
                amplitudes: vec![],
                unimodular_parts: vec![],
                residual,
            });
        }
    };

    let trend = first.am;
    let mut product = first.inner;
    let mut g = first.next_g;
    let mut components = Vec::new();
    let mut amplitudes = Vec::new();
    let mut unimodular_parts = Vec::new();
    let mut residual = CircleSignal::zeros(n);

    for k in 1..=cfg.n_components {
        let am = lowpass(&g, order)?;
        let high = g.zip_with(&am, |a, b| a - b);
        components.push(am.zip_with(&product, |a, b| a * b));
        residual = high.zip_with(&product, |a, b| a * b);
        amplitudes.push(am);
        unimodular_parts.push(product.clone());

        if k == cfg.n_components || residual.norm().powi(2) < cfg.residual_energy_stop * energy {
            break;
        }
        let high_max = high.max_abs();
        if high_max <= CONVERGED_TOL * g.max_abs() {
            break;
        }
        let bg = factorize(&high, cfg.epsilon * high_max)?;
        product = product.zip_with(&bg.inner, |a, b| a * b);
        g = bg.outer;
    }

    Ok(PduDecomposition {
        trend,
        components,
        amplitudes,
        unimodular_parts,
        residual,
    })
}

/// Decomposes a real record: even extension, analytic projection and upsampling before
/// unwinding; every output is mapped back to the original sample grid.
pub fn decompose_signal(s: &RealSignal, cfg: &PduConfig) -> Result<PduDecomposition> {
    cfg.validate()?;
    if s.len() < 2 {
        return Err(PduError::invalid("signal needs at least 2 samples"));
    }
    let analytic = analytic_projection(&flip_periodize(s))?;
    let lifted = upsample(&analytic, cfg.upsample_factor)?;
    let d = decompose(&lifted, cfg)?;
    d.map_all(|c| downsample(c, cfg.upsample_factor)?.unflip())
}

/// Partial reconstruction `trend + Σ_{l<=k} components_l`.
pub fn reconstruct(d: &PduDecomposition, k: usize) -> Result<CircleSignal> {
    if k > d.components.len() {
        return Err(PduError::invalid(format!(
            "requested {k} components but only {} are available",
            d.components.len()
        )));
    }
    Ok(d.components[..k]
        .iter()
        .fold(d.trend.clone(), |acc, c| acc.zip_with(c, |a, b| a + b)))
}

/// Decomposition applied to the detrended integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Plain,
    Windowed { window: WindowSpec, tapering: Tapering },
}

/// Antiderivative preprocessing: decompose the detrended cumulative integral of `s` and
/// differentiate the resulting components.
///
/// The signal is first upsampled by `cfg.upsample_factor`; the inner decomposition then runs
/// without further upsampling. The derivative of the removed polynomial is returned as part of
/// the trend. Outputs are on the original sample grid.
pub fn cumsum_decompose(
    s: &RealSignal,
    cfg: &PduConfig,
    strategy: &Strategy,
    detrend_degree: usize,
) -> Result<PduDecomposition> {
    cfg.validate()?;
    let factor = cfg.upsample_factor;
    let fine = upsample_real(s, factor)?;
    let fs = fine.sample_rate_hz();
    let integral = cumulative_sum(&fine);
    let (detrended, poly) = polynomial_detrend(&integral, detrend_degree)?;
    let slope = CircleSignal::new(
        poly.derivative(fs).into_iter().map(|p| Complex64::new(p, 0.0)).collect(),
    )?;
    let slope = downsample(&slope, factor)?;

    let scale = integral.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if detrended.samples().iter().all(|&x| x.abs() <= 1e-12 * (1.0 + scale)) {
        let zero = CircleSignal::zeros(s.len());
        return Ok(PduDecomposition {
            trend: slope,
            components: vec![zero.clone(); cfg.n_components],
            amplitudes: vec![zero.clone(); cfg.n_components],
            unimodular_parts: vec![zero.map(|_| Complex64::new(1.0, 0.0)); cfg.n_components],
            residual: zero,
        });
    }

    let inner_cfg = PduConfig {
        upsample_factor: 1,
        ..cfg.clone()
    };
    let d = match strategy {
        Strategy::Plain => decompose_signal(&detrended, &inner_cfg)?,
        Strategy::Windowed { window, tapering } => {
            let plan = build_partition(window, detrended.duration_s())?.with_tapering(*tapering);
            windowed_decompose(&detrended, &plan, &inner_cfg, cfg.n_components)?
        }
    };

    let differentiate = |c: &CircleSignal| -> Result<CircleSignal> {
        downsample(&CircleSignal::new(derivative_on_record(c.values(), fs)?)?, factor)
    };
    let components: Vec<CircleSignal> = d.components.iter().map(differentiate).collect::<Result<_>>()?;
    let amplitudes: Vec<CircleSignal> = components
        .iter()
        .map(|c| c.map(|z| Complex64::new(z.norm(), 0.0)))
        .collect();
    let unimodular_parts: Vec<CircleSignal> = components
        .iter()
        .map(|c| c.map(|z| if z.norm() > 0.0 { z / z.norm() } else { Complex64::new(1.0, 0.0) }))
        .collect();
    let trend = differentiate(&d.trend)?;
    let trend = CircleSignal::new(trend.values().iter().zip(slope.values()).map(|(a, b)| a + b).collect())?;
    // The residual closes the identity exactly, absorbing derivative error at the record ends.
    let residual = s
        .samples()
        .iter()
        .enumerate()
        .map(|(k, &x)| x - trend.values()[k] - components.iter().map(|c| c.values()[k]).sum::<Complex64>())
        .collect();
    Ok(PduDecomposition {
        trend,
        components,
        amplitudes,
        unimodular_parts,
        residual: CircleSignal::new(residual)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blaschke::{eval_blaschke_product, winding_number, RootSet};
    use crate::spectral::unwrap_phase;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    fn rel_diff(a: &CircleSignal, b: &CircleSignal) -> f64 {
        let num: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        num / b.norm()
    }

    fn vanilla(n: usize) -> PduConfig {
        PduConfig {
            lowpass_order: 0,
            n_components: n,
            epsilon: 1e-12,
            upsample_factor: 1,
            residual_energy_stop: 0.0,
        }
    }

    #[test]
    fn lowpass_examples() {
        let f = CircleSignal::new((0..64).map(|j| c((j as f64 * 0.7).sin(), (j as f64).cos())).collect()).unwrap();
        let l0 = lowpass(&f, 0).unwrap();
        let mean = f.values().iter().sum::<Complex64>() / 64.0;
        assert!(l0.values().iter().all(|z| (z - mean).norm() < 1e-14));

        let two = CircleSignal::from_fn(64, |t| Complex64::from_polar(1.0, t) + Complex64::from_polar(1.0, 7.0 * t)).unwrap();
        let kept = lowpass(&two, 5).unwrap();
        let e = CircleSignal::from_fn(64, |t| Complex64::from_polar(1.0, t)).unwrap();
        assert!(max_err(kept.values(), e.values()) < 1e-13);

        let p = CircleSignal::from_polynomial(64, &[c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 0.5)]).unwrap();
        assert!(max_err(lowpass(&p, 2).unwrap().values(), p.values()) < 1e-13);
        assert!(lowpass(&p, 64).is_err());
    }

    #[test]
    fn unwind_step_constant_converges() {
        let g = CircleSignal::new(vec![c(3.0, 0.0); 32]).unwrap();
        assert!(unwind_step(&g, 0, 1e-6).unwrap().is_none());
    }

    #[test]
    fn unwind_step_one_plus_z() {
        let g = CircleSignal::from_polynomial(256, &[c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let step = unwind_step(&g, 0, 1e-12).unwrap().unwrap();
        assert!(step.am.values().iter().all(|z| (z - 1.0).norm() < 1e-12));
        let e = CircleSignal::from_fn(256, |t| Complex64::from_polar(1.0, t)).unwrap();
        assert!(max_err(step.inner.values(), e.values()) < 1e-9);
        assert!(step.next_g.values().iter().all(|z| (z - 1.0).norm() < 1e-9));
    }

    #[test]
    fn unwind_step_shifted_linear() {
        let n = 1024;
        // high part z(z - 1/2) = [z(z - 1/2)/(1 - z/2)] · (1 - z/2)
        let g = CircleSignal::from_polynomial(n, &[c(2.5, 0.0), c(-0.5, 0.0), c(1.0, 0.0)]).unwrap();
        let step = unwind_step(&g, 0, 1e-12).unwrap().unwrap();
        assert!(step.am.values().iter().all(|z| (z - 2.5).norm() < 1e-12));
        let b = CircleSignal::from_fn(n, |t| {
            let z = Complex64::from_polar(1.0, t);
            z * (z - 0.5) / (1.0 - 0.5 * z)
        })
        .unwrap();
        let gg = CircleSignal::from_polynomial(n, &[c(1.0, 0.0), c(-0.5, 0.0)]).unwrap();
        assert!(max_err(step.inner.values(), b.values()) < 1e-6);
        assert!(max_err(step.next_g.values(), gg.values()) < 1e-6);
        let prod = step.inner.zip_with(&step.next_g, |a, b| a * b);
        let high = g.zip_with(&step.am, |a, b| a - b);
        assert!(rel_diff(&prod, &high) < 1e-6);
    }

    #[test]
    fn decompose_constant_is_trend_only() {
        let f = CircleSignal::new(vec![c(1.5, 0.0); 64]).unwrap();
        let d = decompose(&f, &vanilla(3)).unwrap();
        assert!(d.components.is_empty());
        assert!(d.residual.max_abs() < 1e-14);
        assert!(max_err(d.trend.values(), f.values()) < 1e-14);
    }

    #[test]
    fn decompose_zero_is_degenerate() {
        let f = CircleSignal::new(vec![c(0.0, 0.0); 64]).unwrap();
        assert!(matches!(decompose(&f, &vanilla(3)), Err(PduError::DegenerateSignal(_))));
    }

    #[test]
    fn decompose_scaled_blaschke_product() {
        let r = RootSet::new(1, vec![c(0.4, 0.2), c(-0.3, 0.5)]).unwrap();
        let b = eval_blaschke_product(&r, 2048).unwrap();
        // B(0) = 0 because of the root at the origin, so the mean of c·B vanishes
        let f = b.map(|z| z * 1.7);
        let d = decompose(&f, &vanilla(2)).unwrap();
        assert!(max_err(d.components[0].values(), f.values()) < 1e-6);
    }

    #[test]
    fn decompose_polynomial_is_exact_after_degree_steps() {
        let coeffs = [c(1.0, 0.0), c(0.5, 0.2), c(-0.3, 0.1), c(0.2, 0.0), c(0.0, -0.1), c(0.1, 0.05)];
        let f = CircleSignal::from_polynomial(4096, &coeffs).unwrap();
        let d = decompose(&f, &vanilla(5)).unwrap();
        assert!(d.residual.norm() / f.norm() < 1e-6, "{}", d.residual.norm() / f.norm());
    }

    #[test]
    fn decomposition_invariants() {
        let f = CircleSignal::from_fn(2048, |t| {
            c(1.0 + 0.3 * t.cos(), 0.0) * Complex64::from_polar(1.0, 3.0 * t + 0.5 * (2.0 * t).sin())
                + Complex64::from_polar(0.4, 11.0 * t)
        })
        .unwrap();
        let cfg = PduConfig { lowpass_order: 2, n_components: 4, epsilon: 1e-9, upsample_factor: 1, residual_energy_stop: 0.0 };
        let d = decompose(&f, &cfg).unwrap();
        assert!(rel_diff(&d.total(), &f) < 1e-8);
        let mut last_winding = 0;
        for (k, ((comp, am), u)) in d.components.iter().zip(&d.amplitudes).zip(&d.unimodular_parts).enumerate() {
            assert!(u.values().iter().all(|z| (z.norm() - 1.0).abs() < 1e-6), "component {k}");
            let prod = am.zip_with(u, |a, b| a * b);
            assert!(max_err(prod.values(), comp.values()) < 1e-10);
            let w = winding_number(u).unwrap();
            assert!(w >= last_winding);
            last_winding = w;
            let phase = unwrap_phase(&u.values().iter().map(|z| z.arg()).collect::<Vec<_>>());
            assert!(phase.windows(2).all(|p| p[1] - p[0] > -1e-6));
        }
    }

    #[test]
    fn reconstruct_examples() {
        let coeffs = [c(1.0, 0.0), c(0.5, 0.2), c(-0.3, 0.1), c(0.2, 0.0)];
        let f = CircleSignal::from_polynomial(1024, &coeffs).unwrap();
        let d = decompose(&f, &vanilla(3)).unwrap();
        let all = reconstruct(&d, d.components.len()).unwrap();
        let expected = f.zip_with(&d.residual, |a, b| a - b);
        assert!(rel_diff(&all, &expected) < 1e-8);
        assert_eq!(reconstruct(&d, 0).unwrap(), d.trend);
        assert!(reconstruct(&d, d.components.len() + 1).is_err());

        let mut last = f64::INFINITY;
        for k in 0..=d.components.len() {
            let e = rel_diff(&reconstruct(&d, k).unwrap(), &f);
            assert!(e <= last + 1e-12);
            last = e;
        }
    }

    #[test]
    fn real_signal_pipeline_is_additive() {
        let fs = 256.0;
        let x: Vec<f64> = (0..512).map(|k| { let t = k as f64 / fs; 2.0 * (2.0 * PI * 3.0 * t).cos() + 0.5 * (2.0 * PI * 20.0 * t).sin() }).collect();
        let s = RealSignal::new(x.clone(), fs).unwrap();
        let d = decompose_signal(&s, &PduConfig { upsample_factor: 4, ..PduConfig::default() }).unwrap();
        let total = d.total();
        let err = total.values().iter().zip(&x).map(|(z, v)| (z.re - v).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8);
        assert_eq!(d.len(), 512);
    }

    #[test]
    fn cumsum_constant_has_no_components() {
        let s = RealSignal::new(vec![2.0; 256], 64.0).unwrap();
        let d = cumsum_decompose(&s, &PduConfig { upsample_factor: 4, ..PduConfig::default() }, &Strategy::Plain, 2).unwrap();
        assert!(d.components.iter().all(|c| c.max_abs() < 1e-6));
    }

    #[test]
    fn cumsum_windowed_rejects_window_longer_than_record() {
        let x: Vec<f64> = (0..1024).map(|k| (k as f64 * 0.1).sin()).collect();
        let s = RealSignal::new(x, 64.0).unwrap();
        let strategy = Strategy::Windowed {
            window: WindowSpec::new(10.0, 1.0).unwrap(),
            tapering: Tapering::Before,
        };
        let r = cumsum_decompose(&s, &PduConfig { upsample_factor: 2, ..PduConfig::default() }, &strategy, 2);
        assert!(matches!(r, Err(PduError::InvalidArgument(_))));
    }
}
