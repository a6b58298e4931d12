//! Scoring decompositions against ground truth, and the paired signed-rank test used to
//! compare methods.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{PduError, Result};
use crate::spectral::{l2_norm_real, unwrap_phase};

/// Per-component AM error (`delta1`), phase spread (`delta2`, radians) and overall
/// reconstruction error (`delta3`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompMetrics {
    pub delta1: Vec<f64>,
    pub delta2: Vec<f64>,
    pub delta3: f64,
}

impl DecompMetrics {
    /// `[Δ1_1, Δ1_2, Δ2_1, Δ2_2, Δ3]` for a two-component score.
    pub fn indices(&self) -> Vec<f64> {
        self.delta1
            .iter()
            .chain(&self.delta2)
            .copied()
            .chain(std::iter::once(self.delta3))
            .collect()
    }
}

/// `‖|component| − A‖₂ / ‖A‖₂`.
pub fn am_nrmse(component: &[Complex64], truth_am: &[f64]) -> Result<f64> {
    if component.len() != truth_am.len() {
        return Err(PduError::invalid(format!(
            "length mismatch: {} vs {}",
            component.len(),
            truth_am.len()
        )));
    }
    let denom = l2_norm_real(truth_am);
    if denom == 0.0 {
        return Err(PduError::invalid("ground-truth amplitude has zero norm"));
    }
    let num = component
        .iter()
        .zip(truth_am)
        .map(|(z, a)| (z.norm() - a).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

/// Angular deviation `sqrt(2(1 − R))` of a set of angles, `R` the mean resultant length.
///
/// Matches the ordinary standard deviation for tight spreads and stays finite (√2) for
/// uniformly spread angles.
pub fn circular_sd(angles: &[f64]) -> Result<f64> {
    if angles.is_empty() {
        return Err(PduError::UndefinedMetric("no angles".into()));
    }
    let sum: Complex64 = angles.iter().map(|&a| Complex64::from_polar(1.0, a)).sum();
    let r = (sum.norm() / angles.len() as f64).min(1.0);
    Ok((2.0 * (1.0 - r)).sqrt())
}

/// Spread of the phase error `arg(p̃ · e^{−i2πφ})`, `p̃ = component/|component|`.
///
/// Samples with `|component| < 1e-12 · max|component|` are skipped.
pub fn phase_sd(component: &[Complex64], truth_phase_cycles: &[f64]) -> Result<f64> {
    if component.len() != truth_phase_cycles.len() {
        return Err(PduError::invalid(format!(
            "length mismatch: {} vs {}",
            component.len(),
            truth_phase_cycles.len()
        )));
    }
    let max = component.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let floor = 1e-12 * max;
    let angles: Vec<f64> = component
        .iter()
        .zip(truth_phase_cycles)
        .filter(|(z, _)| max > 0.0 && z.norm() >= floor)
        .map(|(z, phi)| (z / z.norm() * Complex64::from_polar(1.0, -2.0 * PI * phi)).arg())
        .collect();
    if angles.is_empty() {
        return Err(PduError::UndefinedMetric(
            "component vanishes at every sample".into(),
        ));
    }
    circular_sd(&angles)
}

/// `‖f − Re(Σ components)‖₂ / ‖f‖₂`.
pub fn recon_nrmse(f: &[f64], components: &[&[Complex64]]) -> Result<f64> {
    let denom = l2_norm_real(f);
    if denom == 0.0 {
        return Err(PduError::invalid("reference signal has zero norm"));
    }
    if let Some(c) = components.iter().find(|c| c.len() != f.len()) {
        return Err(PduError::invalid(format!(
            "length mismatch: {} vs {}",
            c.len(),
            f.len()
        )));
    }
    let num = f
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let s: f64 = components.iter().map(|c| c[k].re).sum();
            (v - s).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

/// Average frequency (Hz) of a complex component from its unwrapped phase.
pub fn mean_frequency(component: &[Complex64], sample_rate_hz: f64) -> f64 {
    if component.len() < 2 {
        return 0.0;
    }
    let phase = unwrap_phase(&component.iter().map(|z| z.arg()).collect::<Vec<_>>());
    let span = phase[phase.len() - 1] - phase[0];
    span / (2.0 * PI) * sample_rate_hz / (component.len() - 1) as f64
}

/// Assigns components to ground-truth modes by closest mean IF, greedily from the closest
/// pair; ties go to the lower indices. Entry `i` is the truth index for component `i`.
pub fn match_components(
    components: &[&[Complex64]],
    sample_rate_hz: f64,
    truth_ifs: &[&[f64]],
) -> Vec<Option<usize>> {
    let comp_freqs: Vec<f64> = components
        .iter()
        .map(|c| mean_frequency(c, sample_rate_hz))
        .collect();
    let truth_freqs: Vec<f64> = truth_ifs
        .iter()
        .map(|f| f.iter().sum::<f64>() / f.len().max(1) as f64)
        .collect();
    let mut pairs: Vec<(f64, usize, usize)> = comp_freqs
        .iter()
        .enumerate()
        .flat_map(|(i, cf)| {
            truth_freqs
                .iter()
                .enumerate()
                .map(move |(j, tf)| ((cf - tf).abs(), i, j))
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assignment = vec![None; components.len()];
    let mut taken = vec![false; truth_ifs.len()];
    for (_, i, j) in pairs {
        if assignment[i].is_none() && !taken[j] {
            assignment[i] = Some(j);
            taken[j] = true;
        }
    }
    assignment
}

/// Scores components against the two-mode ground truth, pairing component `l` with mode `l`.
pub fn score(
    signal: &[f64],
    components: &[&[Complex64]],
    truth_am: &[&[f64]],
    truth_phase_cycles: &[&[f64]],
) -> Result<DecompMetrics> {
    let m = truth_am.len().min(truth_phase_cycles.len());
    let mut delta1 = Vec::with_capacity(m);
    let mut delta2 = Vec::with_capacity(m);
    let zeros = vec![Complex64::new(0.0, 0.0); signal.len()];
    for l in 0..m {
        let c: &[Complex64] = components.get(l).copied().unwrap_or(&zeros);
        delta1.push(am_nrmse(c, truth_am[l])?);
        // a missing or vanishing component has no phase; treat it as uniformly spread
        delta2.push(match phase_sd(c, truth_phase_cycles[l]) {
            Ok(v) => v,
            Err(PduError::UndefinedMetric(_)) => std::f64::consts::SQRT_2,
            Err(e) => return Err(e),
        });
    }
    let used: Vec<&[Complex64]> = components.iter().take(m).copied().collect();
    Ok(DecompMetrics {
        delta1,
        delta2,
        delta3: recon_nrmse(signal, &used)?,
    })
}

/// Outcome of a two-sided Wilcoxon signed-rank test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    /// Sum of the ranks of positive differences `x − y`.
    pub statistic: f64,
    pub p_value: f64,
    /// Number of nonzero differences.
    pub n: usize,
    pub bonferroni_m: usize,
    /// `p < 0.05 / bonferroni_m`.
    pub significant: bool,
    pub exact: bool,
}

/// Largest number of nonzero differences handled by exact enumeration.
pub const EXACT_MAX_N: usize = 25;

struct SignedRanks {
    /// Midranks of `|d|`, doubled so they are integers.
    doubled_ranks: Vec<u64>,
    positive: Vec<bool>,
    tie_sizes: Vec<usize>,
}

fn signed_ranks(x: &[f64], y: &[f64]) -> SignedRanks {
    let mut diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    diffs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let n = diffs.len();
    let mut doubled_ranks = vec![0u64; n];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        // ranks i+1..=j+1, midrank (i+j+2)/2, doubled
        let r2 = (i + j + 2) as u64;
        doubled_ranks[i..=j].iter_mut().for_each(|r| *r = r2);
        tie_sizes.push(j - i + 1);
        i = j + 1;
    }
    SignedRanks {
        doubled_ranks,
        positive: diffs.iter().map(|d| *d > 0.0).collect(),
        tie_sizes,
    }
}

fn validate_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(PduError::invalid(format!(
            "paired samples differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 5 {
        return Err(PduError::invalid(format!(
            "signed-rank test needs at least 5 pairs, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// Exact two-sided p-value by enumerating the null distribution of the (midrank) statistic.
pub fn wilcoxon_exact_p(x: &[f64], y: &[f64]) -> Result<f64> {
    validate_pair(x, y)?;
    let sr = signed_ranks(x, y);
    Ok(exact_p(&sr))
}

fn exact_p(sr: &SignedRanks) -> f64 {
    let n = sr.doubled_ranks.len();
    if n == 0 {
        return 1.0;
    }
    let total: u64 = sr.doubled_ranks.iter().sum();
    // counts[s] = number of sign patterns with doubled positive-rank sum s
    let mut counts = vec![0.0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in &sr.doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let observed: u64 = sr
        .doubled_ranks
        .iter()
        .zip(&sr.positive)
        .filter(|(_, p)| **p)
        .map(|(r, _)| *r)
        .sum();
    let all = 2f64.powi(n as i32);
    let lower: f64 = counts[..=observed as usize].iter().sum::<f64>() / all;
    let upper: f64 = counts[observed as usize..].iter().sum::<f64>() / all;
    (2.0 * lower.min(upper)).min(1.0)
}

/// Normal approximation with tie-corrected variance and continuity correction.
pub fn wilcoxon_normal_p(x: &[f64], y: &[f64]) -> Result<f64> {
    validate_pair(x, y)?;
    Ok(normal_p(&signed_ranks(x, y)))
}

fn normal_p(sr: &SignedRanks) -> f64 {
    let n = sr.doubled_ranks.len() as f64;
    if n == 0.0 {
        return 1.0;
    }
    let w = positive_rank_sum(sr);
    let mean = n * (n + 1.0) / 4.0;
    let ties: f64 = sr
        .tie_sizes
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = (((w - mean).abs() - 0.5).max(0.0)) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}

fn positive_rank_sum(sr: &SignedRanks) -> f64 {
    sr.doubled_ranks
        .iter()
        .zip(&sr.positive)
        .filter(|(_, p)| **p)
        .map(|(r, _)| *r as f64 / 2.0)
        .sum()
}

/// Two-sided signed-rank test of `x − y`; exact for up to 25 nonzero differences, normal
/// approximation beyond. Significance uses the Bonferroni threshold `0.05 / bonferroni_m`.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64], bonferroni_m: usize) -> Result<PairedTestResult> {
    validate_pair(x, y)?;
    if bonferroni_m == 0 {
        return Err(PduError::invalid("bonferroni_m must be at least 1"));
    }
    let sr = signed_ranks(x, y);
    let n = sr.doubled_ranks.len();
    let exact = n <= EXACT_MAX_N;
    let p_value = if n == 0 {
        1.0
    } else if exact {
        exact_p(&sr)
    } else {
        normal_p(&sr)
    };
    Ok(PairedTestResult {
        statistic: positive_rank_sum(&sr),
        p_value,
        n,
        bonferroni_m,
        significant: p_value < 0.05 / bonferroni_m as f64,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tone(n: usize, amp: f64, cycles: f64) -> (Vec<Complex64>, Vec<f64>) {
        let phi: Vec<f64> = (0..n).map(|k| cycles * k as f64 / n as f64).collect();
        let z = phi.iter().map(|p| Complex64::from_polar(amp, 2.0 * PI * p)).collect();
        (z, phi)
    }

    #[test]
    fn am_nrmse_examples() {
        let a: Vec<f64> = (0..100).map(|k| 1.0 + 0.01 * k as f64).collect();
        let exact: Vec<Complex64> = a.iter().enumerate().map(|(k, &v)| Complex64::from_polar(v, k as f64)).collect();
        assert!(am_nrmse(&exact, &a).unwrap() < 1e-15);
        assert!((am_nrmse(&vec![Complex64::new(0.0, 0.0); 100], &a).unwrap() - 1.0).abs() < 1e-15);
        let scaled: Vec<Complex64> = exact.iter().map(|z| z * 1.1).collect();
        assert!((am_nrmse(&scaled, &a).unwrap() - 0.1).abs() < 1e-12);
        assert!(am_nrmse(&exact, &vec![0.0; 100]).is_err());
        assert!(am_nrmse(&exact[..10], &a).is_err());
    }

    #[test]
    fn phase_sd_examples() {
        let (z, phi) = tone(1000, 2.0, 7.3);
        assert!(phase_sd(&z, &phi).unwrap() < 1e-7);
        let shifted: Vec<Complex64> = z.iter().map(|v| v * Complex64::from_polar(1.0, 0.8)).collect();
        assert!(phase_sd(&shifted, &phi).unwrap() < 1e-7);
        assert!(matches!(phase_sd(&[Complex64::new(0.0, 0.0); 10], &[0.0; 10]), Err(PduError::UndefinedMetric(_))));
    }

    #[test]
    fn phase_sd_of_uniform_angles() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let (z0, phi) = tone(n, 1.0, 3.0);
        let z: Vec<Complex64> = z0.iter().map(|v| v * Complex64::from_polar(1.0, rng.random_range(-PI..PI))).collect();
        // uniform law: mean resultant length 0, so the deviation is √2
        let sd = phase_sd(&z, &phi).unwrap();
        assert!((sd - std::f64::consts::SQRT_2).abs() / std::f64::consts::SQRT_2 < 0.02, "{sd}");
    }

    #[test]
    fn circular_sd_small_spread_matches_plain_sd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let angles: Vec<f64> = (0..50_000).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.05).collect();
        let m = angles.iter().sum::<f64>() / angles.len() as f64;
        let plain = (angles.iter().map(|a| (a - m).powi(2)).sum::<f64>() / angles.len() as f64).sqrt();
        assert!((circular_sd(&angles).unwrap() - plain).abs() / plain < 0.01);
    }

    #[test]
    fn recon_nrmse_examples() {
        let (z, _) = tone(256, 1.5, 4.0);
        let f: Vec<f64> = z.iter().map(|v| v.re).collect();
        assert!(recon_nrmse(&f, &[&z]).unwrap() < 1e-10);
        assert_eq!(recon_nrmse(&f, &[]).unwrap(), 1.0);
        let half: Vec<Complex64> = z.iter().map(|v| v * 0.5).collect();
        assert!((recon_nrmse(&f, &[&half]).unwrap() - 0.5).abs() < 1e-10);
        assert!(recon_nrmse(&vec![0.0; 256], &[&z]).is_err());
    }

    #[test]
    fn metrics_are_scale_covariant() {
        let (z, _) = tone(300, 1.0, 5.0);
        let a: Vec<f64> = (0..300).map(|k| 1.2 + (k as f64 * 0.01).sin()).collect();
        let f: Vec<f64> = a.iter().map(|v| v * 0.9).collect();
        for c in [0.3, 7.0] {
            let zc: Vec<Complex64> = z.iter().map(|v| v * c).collect();
            let ac: Vec<f64> = a.iter().map(|v| v * c).collect();
            let fc: Vec<f64> = f.iter().map(|v| v * c).collect();
            assert!((am_nrmse(&zc, &ac).unwrap() - am_nrmse(&z, &a).unwrap()).abs() < 1e-12);
            assert!((recon_nrmse(&fc, &[&zc]).unwrap() - recon_nrmse(&f, &[&z]).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_sd_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (z0, phi) = tone(2000, 1.0, 9.0);
        let z: Vec<Complex64> = z0.iter().map(|v| v * Complex64::from_polar(1.0, rng.random_range(-0.7..0.7))).collect();
        let base = phase_sd(&z, &phi).unwrap();
        for delta in [0.4, 2.5, -3.0] {
            let r: Vec<Complex64> = z.iter().map(|v| v * Complex64::from_polar(1.0, delta)).collect();
            assert!((phase_sd(&r, &phi).unwrap() - base).abs() < 1e-10);
        }
    }

    #[test]
    fn matching_examples() {
        let fs = 100.0;
        let n = 1000;
        let low: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(1.0, 2.0 * PI * 3.0 * k as f64 / fs)).collect();
        let high: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(1.0, 2.0 * PI * 11.0 * k as f64 / fs)).collect();
        let if_low = vec![3.0; n];
        let if_high = vec![11.0; n];
        let truths: [&[f64]; 2] = [&if_low, &if_high];
        assert_eq!(match_components(&[&high, &low], fs, &truths), vec![Some(1), Some(0)]);
        assert_eq!(match_components(&[&high], fs, &truths), vec![Some(1)]);
        assert!((mean_frequency(&low, fs) - 3.0).abs() < 1e-9);
        // equidistant: lower truth index wins
        let mid: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(1.0, 2.0 * PI * 7.0 * k as f64 / fs)).collect();
        assert_eq!(match_components(&[&mid], fs, &truths), vec![Some(0)]);
    }

    #[test]
    fn wilcoxon_identical_samples() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let r = wilcoxon_signed_rank(&x, &x, 1).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(!r.significant);
    }

    #[test]
    fn wilcoxon_exact_five_positive() {
        // all 2^5 sign patterns: only one reaches the maximal rank sum
        let x = [1.1, 2.3, 3.2, 4.9, 5.4];
        let y = [0.0; 5];
        let r = wilcoxon_signed_rank(&x, &y, 1).unwrap();
        assert!(r.exact);
        assert!((r.p_value - 0.0625).abs() < 1e-15);
        assert_eq!(r.statistic, 15.0);
    }

    /// Brute-force p over all sign patterns of the given midranks.
    fn brute_force_p(x: &[f64], y: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
        let n = d.len();
        let ranks: Vec<f64> = d
            .iter()
            .map(|v| {
                let less = d.iter().filter(|w| w.abs() < v.abs()).count() as f64;
                let eq = d.iter().filter(|w| w.abs() == v.abs()).count() as f64;
                less + (eq + 1.0) / 2.0
            })
            .collect();
        let obs: f64 = ranks.iter().zip(&d).filter(|(_, v)| **v > 0.0).map(|(r, _)| r).sum();
        let (mut lo, mut hi) = (0usize, 0usize);
        for mask in 0u32..(1 << n) {
            let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            if s <= obs + 1e-9 { lo += 1; }
            if s >= obs - 1e-9 { hi += 1; }
        }
        (2.0 * lo.min(hi) as f64 / (1u64 << n) as f64).min(1.0)
    }

    #[test]
    fn wilcoxon_exact_matches_brute_force_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let n = rng.random_range(5..14);
            let x: Vec<f64> = (0..n).map(|_| (rng.random_range(-4..5)) as f64).collect();
            let y: Vec<f64> = (0..n).map(|_| (rng.random_range(-4..5)) as f64 * 0.5).collect();
            let p = wilcoxon_exact_p(&x, &y).unwrap();
            assert!((p - brute_force_p(&x, &y)).abs() < 1e-12);
        }
    }

    #[test]
    fn wilcoxon_large_sample_all_positive() {
        let x: Vec<f64> = (1..=1000).map(|k| k as f64 * 0.01).collect();
        let y = vec![0.0; 1000];
        let r = wilcoxon_signed_rank(&x, &y, 5).unwrap();
        assert!(!r.exact);
        assert!(r.p_value < 1e-10);
        assert!(r.significant);
    }

    #[test]
    fn wilcoxon_exact_and_normal_agree_at_25() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let x: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.5)).collect();
            let y: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
            let pe = wilcoxon_exact_p(&x, &y).unwrap();
            let pn = wilcoxon_normal_p(&x, &y).unwrap();
            assert!((pe - pn).abs() < 0.01, "{pe} vs {pn}");
        }
    }

    #[test]
    fn wilcoxon_rejects_short_or_mismatched() {
        assert!(wilcoxon_signed_rank(&[1.0; 4], &[0.0; 4], 1).is_err());
        assert!(wilcoxon_signed_rank(&[1.0; 6], &[0.0; 5], 1).is_err());
    }

    #[test]
    fn bonferroni_threshold() {
        // n = 6 all positive: exact p = 2/64 = 0.03125, below 0.05 but above 0.05/5
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let r1 = wilcoxon_signed_rank(&x, &[0.0; 6], 1).unwrap();
        let r5 = wilcoxon_signed_rank(&x, &[0.0; 6], 5).unwrap();
        assert!((r1.p_value - 0.03125).abs() < 1e-15);
        assert!(r1.significant && !r5.significant);
    }
}
