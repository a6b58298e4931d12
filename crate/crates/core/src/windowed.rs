//! Windowed unwinding: split the record with a tapered partition of unity, unwind each
//! dilated segment, stitch the first components back together, and repeat on the residual.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{PduError, Result};
use crate::pdu::{decompose_signal, PduConfig, PduDecomposition};
use crate::spectral::{CircleSignal, RealSignal};

/// Taper window supported on `[-T, T]` with `sin²`/`cos²` ramps of length `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Half support `T`, seconds.
    pub half_support: f64,
    /// Ramp length `B`, seconds.
    pub taper: f64,
}

impl WindowSpec {
    pub fn new(half_support: f64, taper: f64) -> Result<Self> {
        let spec = Self {
            half_support,
            taper,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (t, b) = (self.half_support, self.taper);
        if !(t.is_finite() && b.is_finite() && b > 0.0 && b < t) {
            return Err(PduError::invalid(format!(
                "window needs 0 < B < T, got T = {t}, B = {b}"
            )));
        }
        Ok(())
    }

    /// Distance between consecutive window centers, `2T − B`.
    pub fn shift(&self) -> f64 {
        2.0 * self.half_support - self.taper
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            half_support: 0.25,
            taper: 0.0625,
        }
    }
}

/// The window's piecewise formula with its branches tested in order, for any `T, B > 0`.
///
/// With `B >= T` the ramps overlap and the rising branch covers the whole support; such a
/// window is not part of any partition of unity.
pub fn taper_formula(t_half: f64, b: f64, t: f64) -> f64 {
    if t < -t_half || t > t_half {
        0.0
    } else if t <= -t_half + b {
        (PI * (t + t_half) / (2.0 * b)).sin().powi(2)
    } else if t <= t_half - b {
        1.0
    } else {
        (PI * (t - t_half + b) / (2.0 * b)).cos().powi(2)
    }
}

/// Window value at offset `t` seconds from its center.
pub fn taper_window(spec: &WindowSpec, t: f64) -> Result<f64> {
    spec.validate()?;
    Ok(taper_formula(spec.half_support, spec.taper, t))
}

/// One window of a [`SegmentPlan`]; supported on `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub center: f64,
    /// Ramp removed on the left (first window).
    pub clamp_left: bool,
    /// Ramp removed on the right (last window).
    pub clamp_right: bool,
}

impl Segment {
    fn weight(&self, spec: &WindowSpec, t: f64) -> f64 {
        // clamped sides extend past the record ends
        if (!self.clamp_left && t < self.start) || (!self.clamp_right && t > self.end) {
            return 0.0;
        }
        if (self.clamp_left && t <= self.center) || (self.clamp_right && t >= self.center) {
            return 1.0;
        }
        taper_formula(spec.half_support, spec.taper, t - self.center)
    }

    fn index_range(&self, fs: f64, n: usize) -> (usize, usize) {
        let lo = ((self.start * fs - 1e-9).ceil().max(0.0) as usize).min(n);
        let hi = if self.clamp_right {
            n
        } else {
            ((self.end * fs - 1e-9).ceil().max(0.0) as usize).min(n)
        };
        (lo, hi.max(lo))
    }

    /// Window values at the sample times inside this segment.
    pub fn window_samples(&self, spec: &WindowSpec, fs: f64, n: usize) -> Vec<f64> {
        let (lo, hi) = self.index_range(fs, n);
        (lo..hi).map(|i| self.weight(spec, i as f64 / fs)).collect()
    }
}

/// Where the window weights enter the per-segment unwinding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tapering {
    /// Each segment is `f·w_j` and its first component is stitched as is.
    #[default]
    Before,
    /// Each segment is `f` cut to the support of `w_j`; its first component is weighted by
    /// `w_j` before stitching. The AM seen by the unwinding then carries no taper ramps.
    After,
}

/// Partition of unity over `[0, duration]` made of shifted copies of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPlan {
    pub window: WindowSpec,
    pub duration_s: f64,
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub tapering: Tapering,
}

impl SegmentPlan {
    pub fn with_tapering(mut self, tapering: Tapering) -> Self {
        self.tapering = tapering;
        self
    }

    /// `Σ_j w_j(t)`.
    pub fn weight_sum(&self, t: f64) -> f64 {
        self.segments.iter().map(|s| s.weight(&self.window, t)).sum()
    }
}

/// Windows start at multiples of `2T − B`; the first and last have their outer ramps
/// replaced by `1` and the last is truncated at `duration_s`, so the weights sum to one on
/// the whole record.
pub fn build_partition(spec: &WindowSpec, duration_s: f64) -> Result<SegmentPlan> {
    spec.validate()?;
    let width = 2.0 * spec.half_support;
    if !(duration_s.is_finite() && duration_s > width) {
        return Err(PduError::invalid(format!(
            "duration {duration_s} s must exceed the window support {width} s"
        )));
    }
    let shift = spec.shift();
    let mut segments = Vec::new();
    let mut j = 0usize;
    loop {
        let start = j as f64 * shift;
        let end = start + width;
        let last = end >= duration_s;
        segments.push(Segment {
            start,
            end: end.min(duration_s),
            center: start + spec.half_support,
            clamp_left: j == 0,
            clamp_right: last,
        });
        if last {
            break;
        }
        j += 1;
    }
    Ok(SegmentPlan {
        window: *spec,
        duration_s,
        segments,
        tapering: Tapering::Before,
    })
}

/// A windowed piece of the record, dilated to its own grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DilatedSegment {
    /// Index of the first sample in the global record.
    pub start_index: usize,
    pub signal: RealSignal,
}

fn check_duration(s: &RealSignal, plan: &SegmentPlan) -> Result<()> {
    let half_sample = 0.5 / s.sample_rate_hz();
    if (s.duration_s() - plan.duration_s).abs() > half_sample {
        return Err(PduError::invalid(format!(
            "plan covers {} s but the signal lasts {} s",
            plan.duration_s,
            s.duration_s()
        )));
    }
    Ok(())
}

/// `f·w_j` restricted to each window's support. Dilation onto `[0, 1)` is a pure reindexing
/// of the samples, so each segment keeps its samples in order.
pub fn segment_and_dilate(s: &RealSignal, plan: &SegmentPlan) -> Result<Vec<DilatedSegment>> {
    cut_segments(s, plan, true)
}

fn cut_segments(s: &RealSignal, plan: &SegmentPlan, weighted: bool) -> Result<Vec<DilatedSegment>> {
    check_duration(s, plan)?;
    let fs = s.sample_rate_hz();
    let n = s.len();
    plan.segments
        .iter()
        .map(|seg| {
            let (lo, hi) = seg.index_range(fs, n);
            if hi - lo < 2 {
                return Err(PduError::invalid(format!(
                    "segment [{}, {}] holds fewer than 2 samples",
                    seg.start, seg.end
                )));
            }
            let samples = if weighted {
                let w = seg.window_samples(&plan.window, fs, n);
                s.samples()[lo..hi].iter().zip(w).map(|(x, w)| x * w).collect()
            } else {
                s.samples()[lo..hi].to_vec()
            };
            Ok(DilatedSegment {
                start_index: lo,
                signal: RealSignal::new(samples, fs)?,
            })
        })
        .collect()
}

/// First unwinding component of every segment (trend excluded), summed back on the global grid.
pub fn extract_component(s: &RealSignal, plan: &SegmentPlan, cfg: &PduConfig) -> Result<CircleSignal> {
    cfg.validate()?;
    let after = plan.tapering == Tapering::After;
    let segments = cut_segments(s, plan, !after)?;
    let seg_cfg = PduConfig {
        n_components: 1,
        ..cfg.clone()
    };
    let pieces: Vec<Option<Vec<Complex64>>> = segments
        .par_iter()
        .map(|seg| {
            if seg.signal.samples().iter().all(|&x| x == 0.0) {
                return Ok(None);
            }
            let d = decompose_signal(&seg.signal, &seg_cfg)?;
            Ok(d.components.into_iter().next().map(|c| c.into_values()))
        })
        .collect::<Result<_>>()?;

    let fs = s.sample_rate_hz();
    let mut out = vec![Complex64::new(0.0, 0.0); s.len()];
    for ((seg, window), piece) in segments.iter().zip(&plan.segments).zip(pieces) {
        let Some(values) = piece else { continue };
        let slots = out[seg.start_index..].iter_mut().zip(values);
        if after {
            let w = window.window_samples(&plan.window, fs, s.len());
            for ((slot, v), w) in slots.zip(w) {
                *slot += v * w;
            }
        } else {
            for (slot, v) in slots {
                *slot += v;
            }
        }
    }
    CircleSignal::new(out)
}

/// Extracts `n` components, each from the real residual left by the previous ones.
///
/// Components are analytic (complex); the residual is real, stored with zero imaginary part,
/// and the trend is zero, so `Re(Σ components) + residual` reproduces the input.
pub fn windowed_decompose(
    s: &RealSignal,
    plan: &SegmentPlan,
    cfg: &PduConfig,
    n: usize,
) -> Result<PduDecomposition> {
    let plans = vec![plan.clone(); n];
    windowed_decompose_with_schedule(s, &plans, cfg)
}

/// As [`windowed_decompose`], with one partition per extraction (e.g. widening windows).
pub fn windowed_decompose_with_schedule(
    s: &RealSignal,
    plans: &[SegmentPlan],
    cfg: &PduConfig,
) -> Result<PduDecomposition> {
    cfg.validate()?;
    let mut residual = s.samples().to_vec();
    let mut components = Vec::with_capacity(plans.len());
    for plan in plans {
        let current = RealSignal::new(residual.clone(), s.sample_rate_hz())?;
        let comp = if current.samples().iter().all(|&x| x == 0.0) {
            check_duration(&current, plan)?;
            CircleSignal::zeros(s.len().max(2))
        } else {
            extract_component(&current, plan, cfg)?
        };
        residual
            .iter_mut()
            .zip(comp.values())
            .for_each(|(r, c)| *r -= c.re);
        components.push(comp);
    }
    let n = s.len().max(2);
    let amplitudes: Vec<CircleSignal> = components
        .iter()
        .map(|c| c.map(|z| Complex64::new(z.norm(), 0.0)))
        .collect();
    let unimodular_parts = components
        .iter()
        .map(|c| c.map(|z| if z.norm() > 0.0 { z / z.norm() } else { Complex64::new(1.0, 0.0) }))
        .collect();
    Ok(PduDecomposition {
        trend: CircleSignal::zeros(n),
        components,
        amplitudes,
        unimodular_parts,
        residual: CircleSignal::new(residual.into_iter().map(|r| Complex64::new(r, 0.0)).collect())?,
    })
}
