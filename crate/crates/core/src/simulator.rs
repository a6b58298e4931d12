//! Seeded two-component adaptive-harmonic-model signals with known amplitude, phase and
//! instantaneous frequency.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64(seed)` (rand_chacha) with standard
//! normal increments drawn through `rand_distr::StandardNormal`. Given the same parameters
//! and seed the output is bit-identical on a given platform.

use std::collections::HashMap;
use std::io::{self, Write};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{PduError, Result};
use crate::spectral::RealSignal;

pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhmParams {
    pub a1: f64,
    pub a2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Base frequencies, Hz.
    pub xi1: f64,
    pub xi2: f64,
    /// Frequency excursions, Hz.
    pub beta1: f64,
    pub beta2: f64,
    pub fs: f64,
    /// Record length, seconds.
    pub t0: f64,
    /// Required separation `min(if2 − if1)`, Hz.
    pub min_if_gap: f64,
}

impl AhmParams {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("a1", self.a1),
            ("a2", self.a2),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("xi1", self.xi1),
            ("xi2", self.xi2),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ];
        if let Some((name, v)) = nonneg.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(PduError::invalid(format!("{name} must be nonnegative, got {v}")));
        }
        if !(self.fs.is_finite() && self.fs > 0.0 && self.t0.is_finite() && self.t0 > 0.0) {
            return Err(PduError::invalid("fs and t0 must be positive"));
        }
        if self.is_empty() {
            return Err(PduError::invalid("fs·t0 yields no samples"));
        }
        Ok(())
    }

    /// Number of samples, `⌊fs·T0⌋`.
    pub fn len(&self) -> usize {
        (self.fs * self.t0 + 1e-9).floor() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Experiment1,
    Experiment2,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Experiment1 => "experiment1",
            Preset::Experiment2 => "experiment2",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = PduError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "experiment1" => Ok(Preset::Experiment1),
            "experiment2" => Ok(Preset::Experiment2),
            other => Err(PduError::invalid(format!(
                "unknown preset '{other}' (expected experiment1 or experiment2)"
            ))),
        }
    }
}

/// Parameters of the two simulated experiments (fs = 512 Hz, 16 s).
pub fn preset(p: Preset) -> AhmParams {
    let xi1 = 2.0 + std::f64::consts::PI;
    match p {
        // strong slow component, weak fast component
        Preset::Experiment1 => AhmParams {
            a1: 2.0,
            a2: 0.8,
            alpha1: 1.0,
            alpha2: 1.0,
            xi1,
            xi2: 8.0,
            beta1: 2.5,
            beta2: 3.0,
            fs: 512.0,
            t0: 16.0,
            min_if_gap: 0.5,
        },
        // weak slow component, strong fast component
        Preset::Experiment2 => AhmParams {
            a1: 0.8,
            a2: 2.0,
            alpha1: 0.1,
            alpha2: 0.1,
            xi1,
            xi2: 26.0,
            beta1: 2.5,
            beta2: 3.0,
            fs: 512.0,
            t0: 16.0,
            min_if_gap: 0.5,
        },
    }
}

/// One synthesized record with its ground truth. Phases are in cycles, IFs in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhmRealization {
    pub signal: RealSignal,
    pub am1: Vec<f64>,
    pub am2: Vec<f64>,
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub if1: Vec<f64>,
    pub if2: Vec<f64>,
    pub seed: u64,
    /// Number of draws needed to satisfy the IF separation.
    pub attempts: usize,
}

impl AhmRealization {
    /// Sample times `l/fs`, `l = 1..=n`.
    pub fn times(&self) -> Vec<f64> {
        let fs = self.signal.sample_rate_hz();
        (1..=self.signal.len()).map(|l| l as f64 / fs).collect()
    }

    pub fn ams(&self) -> [&[f64]; 2] {
        [&self.am1, &self.am2]
    }

    pub fn phases(&self) -> [&[f64]; 2] {
        [&self.phi1, &self.phi2]
    }

    pub fn ifs(&self) -> [&[f64]; 2] {
        [&self.if1, &self.if2]
    }

    /// CSV with `#`-prefixed metadata lines followed by `t,f,A1,A2,phi1,phi2,if1,if2`.
    pub fn write_csv<W: Write>(&self, mut w: W, params: &AhmParams, preset: Option<Preset>) -> io::Result<()> {
        if let Some(p) = preset {
            writeln!(w, "# preset={}", p.name())?;
        }
        writeln!(w, "# seed={}", self.seed)?;
        writeln!(w, "# fs={}", params.fs)?;
        writeln!(w, "# t0={}", params.t0)?;
        writeln!(
            w,
            "# a1={} a2={} alpha1={} alpha2={}",
            params.a1, params.a2, params.alpha1, params.alpha2
        )?;
        writeln!(
            w,
            "# xi1={} xi2={} beta1={} beta2={}",
            params.xi1, params.xi2, params.beta1, params.beta2
        )?;
        writeln!(w, "t,f,A1,A2,phi1,phi2,if1,if2")?;
        for (l, t) in self.times().into_iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                t,
                self.signal.samples()[l],
                self.am1[l],
                self.am2[l],
                self.phi1[l],
                self.phi2[l],
                self.if1[l],
                self.if2[l]
            )?;
        }
        Ok(())
    }
}

fn walk_from<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut w = 0.0;
    out.push(w);
    for _ in 1..n {
        let step: f64 = rng.sample(StandardNormal);
        w += step;
        out.push(w);
    }
    out
}

/// Standard Gaussian random walk with `W(0) = 0`.
pub fn gaussian_random_walk(n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(PduError::invalid("walk length must be at least 1"));
    }
    Ok(walk_from(&mut ChaCha8Rng::seed_from_u64(seed), n))
}

/// Local quadratic regression with tricube weights over the `span` nearest samples.
///
/// Windows are centered where possible and shifted inward near the ends. Distances are
/// scaled by one more than the largest in-window distance so every point carries weight.
pub fn loess_smooth(x: &[f64], span: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if span < 3 || span > n {
        return Err(PduError::invalid(format!(
            "loess span must lie in [3, {n}], got {span}"
        )));
    }
    let half = (span - 1) / 2;
    let mut hats: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half).min(n - span);
        let pos = i - lo;
        let hat = hats.entry(pos).or_insert_with(|| local_quadratic_hat(span, pos));
        out.push(hat.iter().zip(&x[lo..lo + span]).map(|(h, v)| h * v).sum());
    }
    Ok(out)
}

/// Weights `ℓ_j` such that the weighted quadratic fit over `span` points evaluated at
/// position `pos` equals `Σ ℓ_j y_j`.
fn local_quadratic_hat(span: usize, pos: usize) -> Vec<f64> {
    let offsets: Vec<f64> = (0..span).map(|j| j as f64 - pos as f64).collect();
    let dmax = offsets.iter().fold(0.0f64, |m, d| m.max(d.abs())) + 1.0;
    let weights: Vec<f64> = offsets
        .iter()
        .map(|d| (1.0 - (d.abs() / dmax).powi(3)).powi(3))
        .collect();
    // scale offsets for conditioning
    let scale = dmax;
    let mut gram = Matrix3::zeros();
    for (d, w) in offsets.iter().zip(&weights) {
        let u = d / scale;
        let b = Vector3::new(1.0, u, u * u);
        gram += b * b.transpose() * *w;
    }
    let inv = gram.try_inverse().expect("tricube-weighted quadratic design is nonsingular for span >= 3");
    let row = inv.row(0).transpose();
    offsets
        .iter()
        .zip(&weights)
        .map(|(d, w)| {
            let u = d / scale;
            w * (row[0] + row[1] * u + row[2] * u * u)
        })
        .collect()
}

/// Nearest odd integer to `x` (ties go up), clamped to `[3, n]` when possible.
fn odd_span(x: f64, n: usize) -> usize {
    let mut s = 2 * (x / 2.0).floor() as usize + 1;
    if s > n {
        s = if n % 2 == 1 { n } else { n - 1 };
    }
    s.max(3)
}

fn normalized_abs(w: &[f64]) -> Vec<f64> {
    let max = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return vec![0.0; w.len()];
    }
    w.iter().map(|v| v.abs() / max).collect()
}

fn smoothed_walk<R: Rng>(rng: &mut R, n: usize, span: usize) -> Result<Vec<f64>> {
    let w = walk_from(rng, n);
    if n < 3 {
        return Ok(normalized_abs(&w));
    }
    Ok(normalized_abs(&loess_smooth(&w, span)?))
}

/// [`synthesize_with_cap`] with the default cap of 1000 attempts.
pub fn synthesize(p: &AhmParams, seed: u64) -> Result<AhmRealization> {
    synthesize_with_cap(p, seed, DEFAULT_MAX_ATTEMPTS)
}

/// Draws the four modulation processes jointly until `min(if2 − if1) > min_if_gap`.
pub fn synthesize_with_cap(p: &AhmParams, seed: u64, max_attempts: usize) -> Result<AhmRealization> {
    p.validate()?;
    let n = p.len();
    let slow_span = odd_span(2.2 * p.fs, n);
    let fast_span = odd_span(2.0 * p.fs, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for attempt in 1..=max_attempts {
        let m1 = smoothed_walk(&mut rng, n, slow_span)?;
        let m2 = smoothed_walk(&mut rng, n, fast_span)?;
        let f1 = smoothed_walk(&mut rng, n, slow_span)?;
        let f2 = smoothed_walk(&mut rng, n, fast_span)?;

        let if1: Vec<f64> = f1.iter().map(|v| p.xi1 + p.beta1 * v).collect();
        let if2: Vec<f64> = f2.iter().map(|v| p.xi2 + p.beta2 * v).collect();
        let gap = if1
            .iter()
            .zip(&if2)
            .map(|(a, b)| b - a)
            .fold(f64::INFINITY, f64::min);
        if !(gap > p.min_if_gap) {
            continue;
        }

        let am1: Vec<f64> = m1.iter().map(|v| p.a1 * (1.0 + p.alpha1 * v)).collect();
        let am2: Vec<f64> = m2.iter().map(|v| p.a2 * (1.0 + p.alpha2 * v)).collect();
        let phi1 = integrate_phase(&if1, p.fs);
        let phi2 = integrate_phase(&if2, p.fs);
        let two_pi = 2.0 * std::f64::consts::PI;
        let samples = (0..n)
            .map(|l| am1[l] * (two_pi * phi1[l]).cos() + am2[l] * (two_pi * phi2[l]).cos())
            .collect();
        return Ok(AhmRealization {
            signal: RealSignal::new(samples, p.fs)?,
            am1,
            am2,
            phi1,
            phi2,
            if1,
            if2,
            seed,
            attempts: attempt,
        });
    }
    Err(PduError::GenerationFailure {
        attempts: max_attempts,
        reason: format!("IF separation never exceeded {} Hz", p.min_if_gap),
    })
}

/// `φ(l) = Σ_{j<=l} φ'(j)/fs`.
fn integrate_phase(ifs: &[f64], fs: f64) -> Vec<f64> {
    ifs.iter()
        .scan(0.0, |acc, f| {
            *acc += f / fs;
            Some(*acc)
        })
        .collect()
}
