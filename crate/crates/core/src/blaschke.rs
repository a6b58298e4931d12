//! Blaschke factorization `F = B·G` of boundary signals, finite Blaschke products and
//! their instantaneous frequency, winding numbers, and harmonic extension into the disk.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;

use crate::error::{PduError, Result};
use crate::spectral::{forward, inverse, one_sided_in_place, unwrap_phase, CircleSignal};

/// Inner/outer pair of a boundary signal.
#[derive(Debug, Clone, PartialEq)]
pub struct BlaschkeFactorization {
    /// Unimodular factor `B` (roots inside the disk).
    pub inner: CircleSignal,
    /// Root-free factor `G`, with `|G| = |F| + ε` on the grid.
    pub outer: CircleSignal,
}

/// Default regularization for [`factorize`]: `1e-6 · max|f|`.
pub fn default_epsilon(f: &CircleSignal) -> f64 {
    1e-6 * f.max_abs()
}

/// Factorizes `f` as `B·G` with `G = exp(H[ln(|f| + ε)])`, where `H` keeps the mean, doubles
/// positive frequencies and drops negative ones, and `B = f/G` entrywise.
pub fn factorize(f: &CircleSignal, epsilon: f64) -> Result<BlaschkeFactorization> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(PduError::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if f.max_abs() == 0.0 {
        return Err(PduError::DegenerateSignal(
            "cannot factorize an all-zero signal".into(),
        ));
    }
    let log_mag: Vec<Complex64> = f
        .values()
        .iter()
        .map(|z| Complex64::new((z.norm() + epsilon).ln(), 0.0))
        .collect();
    let mut coeffs = forward(&log_mag);
    one_sided_in_place(&mut coeffs);
    let outer: Vec<Complex64> = inverse(&coeffs).into_iter().map(|w| w.exp()).collect();
    let inner: Vec<Complex64> = f
        .values()
        .iter()
        .zip(&outer)
        .map(|(&v, &g)| v / g)
        .collect();
    Ok(BlaschkeFactorization {
        inner: CircleSignal::new(inner)?,
        outer: CircleSignal::new(outer)?,
    })
}

/// Zeros of a finite Blaschke product: `m` zeros at the origin plus `roots` inside the disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RootSet {
    zero_multiplicity: usize,
    roots: Vec<Complex64>,
}

impl RootSet {
    pub fn new(zero_multiplicity: usize, roots: Vec<Complex64>) -> Result<Self> {
        if let Some(a) = roots.iter().find(|a| !(a.norm() < 1.0)) {
            return Err(PduError::invalid(format!(
                "root {a} is not strictly inside the unit disk"
            )));
        }
        Ok(Self {
            zero_multiplicity,
            roots,
        })
    }

    pub fn zero_multiplicity(&self) -> usize {
        self.zero_multiplicity
    }

    pub fn roots(&self) -> &[Complex64] {
        &self.roots
    }

    /// Total number of zeros counted with multiplicity.
    pub fn degree(&self) -> usize {
        self.zero_multiplicity + self.roots.len()
    }

    fn eval(&self, z: Complex64) -> Complex64 {
        self.roots
            .iter()
            .fold(z.powu(self.zero_multiplicity as u32), |acc, &a| {
                acc * (z - a) / (Complex64::new(1.0, 0.0) - a.conj() * z)
            })
    }

    fn phase_derivative(&self, t: f64) -> f64 {
        let z = Complex64::from_polar(1.0, t);
        self.zero_multiplicity as f64
            + self
                .roots
                .iter()
                .map(|&a| (1.0 - a.norm_sqr()) / (z - a).norm_sqr())
                .sum::<f64>()
    }
}

fn grid_angle(j: usize, n: usize) -> f64 {
    2.0 * PI * j as f64 / n as f64
}

/// `B(e^{it}) = e^{imt} Π (e^{it} − α_k)/(1 − conj(α_k) e^{it})` on the `n`-point grid.
pub fn eval_blaschke_product(r: &RootSet, n: usize) -> Result<CircleSignal> {
    CircleSignal::new(
        (0..n)
            .map(|j| r.eval(Complex64::from_polar(1.0, grid_angle(j, n))))
            .collect(),
    )
}

/// Phase derivative `m + Σ (1 − |α_k|²)/|e^{it} − α_k|²` of the product on the `n`-point grid.
pub fn blaschke_if(r: &RootSet, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(PduError::invalid("grid size must be positive"));
    }
    Ok((0..n).map(|j| r.phase_derivative(grid_angle(j, n))).collect())
}

/// Oscillation template `(e^{i2πt} − α)/(1 − conj(α) e^{i2πt})` at time `t ∈ [0, 1)`.
pub fn template(alpha: Complex64, t: f64) -> Complex64 {
    let z = Complex64::from_polar(1.0, 2.0 * PI * t);
    (z - alpha) / (Complex64::new(1.0, 0.0) - alpha.conj() * z)
}

/// Largest wrapped phase step accepted between neighbouring samples.
const MAX_PHASE_STEP: f64 = 0.9 * PI;

/// Winding number of the closed curve `f` around the origin, with the default floor
/// `1e-9 · max|f|`.
pub fn winding_number(f: &CircleSignal) -> Result<i64> {
    winding_number_with_floor(f, 1e-9 * f.max_abs())
}

/// Winding number; fails when any `|f(k)| <= floor` or when a phase step is too large to
/// unwrap unambiguously.
pub fn winding_number_with_floor(f: &CircleSignal, floor: f64) -> Result<i64> {
    let vals = f.values();
    if let Some((index, z)) = vals.iter().enumerate().find(|(_, z)| z.norm() <= floor) {
        return Err(PduError::CurveThroughOrigin {
            index,
            magnitude: z.norm(),
        });
    }
    let mut total = 0.0;
    for (k, pair) in vals.iter().zip(vals.iter().cycle().skip(1)).enumerate() {
        let step = (pair.1 / pair.0).arg();
        if step.abs() > MAX_PHASE_STEP {
            return Err(PduError::CurveThroughOrigin {
                index: k,
                magnitude: pair.0.norm().min(pair.1.norm()),
            });
        }
        total += step;
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

/// Unwrapped phase of a sampled curve, anchored at `t = 0`.
pub fn unwrapped_phase(f: &CircleSignal) -> Vec<f64> {
    unwrap_phase(&f.values().iter().map(|z| z.arg()).collect::<Vec<_>>())
}

/// Harmonic extension of a boundary signal sampled on a polar grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskField {
    radii: Vec<f64>,
    angles: Vec<f64>,
    /// Row-major `radii.len() × angles.len()`.
    values: Vec<Vec<Complex64>>,
}

impl DiskField {
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn values(&self) -> &[Vec<Complex64>] {
        &self.values
    }

    pub fn value(&self, radius_index: usize, angle_index: usize) -> Complex64 {
        self.values[radius_index][angle_index]
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> DiskField {
        DiskField {
            radii: self.radii.clone(),
            angles: self.angles.clone(),
            values: self
                .values
                .iter()
                .map(|row| row.iter().map(|z| z * factor).collect())
                .collect(),
        }
    }

    /// Writes `radius,angle,re,im,mask` rows; `mask` is `0/1`, or empty when not supplied.
    pub fn write_csv<W: Write>(&self, mut w: W, mask: Option<&[Vec<bool>]>) -> io::Result<()> {
        writeln!(w, "radius,angle,re,im,mask")?;
        for (i, row) in self.values.iter().enumerate() {
            for (j, z) in row.iter().enumerate() {
                let m = match mask {
                    Some(m) => if m[i][j] { "1" } else { "0" },
                    None => "",
                };
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    self.radii[i], self.angles[j], z.re, z.im, m
                )?;
            }
        }
        Ok(())
    }
}

/// Evaluates `Σ c_k r^{|k|} e^{ikθ}` (the Poisson integral of `f`) at each radius.
pub fn poisson_extend(f: &CircleSignal, radii: &[f64]) -> Result<DiskField> {
    if radii.is_empty() {
        return Err(PduError::invalid("no radii given"));
    }
    if let Some(r) = radii.iter().find(|r| !(**r >= 0.0 && **r < 1.0)) {
        return Err(PduError::invalid(format!("radius {r} is outside [0, 1)")));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PduError::invalid("radii must be strictly increasing"));
    }
    let n = f.len();
    let spectrum = f.spectrum();
    let values = radii
        .iter()
        .map(|&r| {
            let scaled: Vec<Complex64> = spectrum
                .iter()
                .map(|(k, c)| {
                    if r == 0.0 {
                        if k == 0 { c } else { Complex64::new(0.0, 0.0) }
                    } else {
                        c * r.powi(k.unsigned_abs() as i32)
                    }
                })
                .collect();
            inverse(&scaled)
        })
        .collect();
    Ok(DiskField {
        radii: radii.to_vec(),
        angles: (0..n).map(|j| grid_angle(j, n)).collect(),
        values,
    })
}

/// `true` where `|value| < threshold`.
pub fn root_region_map(field: &DiskField, threshold: f64) -> Result<Vec<Vec<bool>>> {
    if !(threshold >= 0.0) {
        return Err(PduError::invalid(format!(
            "threshold must be nonnegative, got {threshold}"
        )));
    }
    Ok(field
        .values
        .iter()
        .map(|row| row.iter().map(|z| z.norm() < threshold).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn factorize_monomial_is_inner() {
        let f = CircleSignal::from_polynomial(256, &[c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        let bg = factorize(&f, 1e-12).unwrap();
        assert!(max_err(bg.inner.values(), f.values()) < 1e-10);
        assert!(bg.outer.values().iter().all(|g| (g - 1.0).norm() < 1e-10));
    }

    #[test]
    fn factorize_constant_is_outer() {
        let f = CircleSignal::new(vec![c(2.0, 0.0); 64]).unwrap();
        let bg = factorize(&f, 1e-12).unwrap();
        assert!(bg.inner.values().iter().all(|b| (b - 1.0).norm() < 1e-10));
        assert!(bg.outer.values().iter().all(|g| (g - 2.0).norm() < 1e-10));
    }

    #[test]
    fn factorize_linear_factor_closed_form() {
        let n = 1024;
        let f = CircleSignal::from_polynomial(n, &[c(-0.5, 0.0), c(1.0, 0.0)]).unwrap();
        let bg = factorize(&f, 1e-12).unwrap();
        let b_exact = CircleSignal::from_fn(n, |t| {
            let z = Complex64::from_polar(1.0, t);
            (z - 0.5) / (1.0 - 0.5 * z)
        })
        .unwrap();
        let g_exact = CircleSignal::from_polynomial(n, &[c(1.0, 0.0), c(-0.5, 0.0)]).unwrap();
        assert!(max_err(bg.inner.values(), b_exact.values()) < 1e-6);
        assert!(max_err(bg.outer.values(), g_exact.values()) < 1e-6);
    }

    #[test]
    fn factorize_rejects_zero_and_bad_epsilon() {
        let z = CircleSignal::new(vec![c(0.0, 0.0); 8]).unwrap();
        assert!(matches!(factorize(&z, 1e-6), Err(PduError::DegenerateSignal(_))));
        let f = CircleSignal::new(vec![c(1.0, 0.0); 8]).unwrap();
        assert!(factorize(&f, 0.0).is_err());
    }

    #[test]
    fn blaschke_product_examples() {
        let r = RootSet::new(1, vec![]).unwrap();
        let b = eval_blaschke_product(&r, 128).unwrap();
        let e = CircleSignal::from_fn(128, |t| Complex64::from_polar(1.0, t)).unwrap();
        assert!(max_err(b.values(), e.values()) < 1e-13);

        let r = RootSet::new(0, vec![c(0.5, 0.0)]).unwrap();
        let b = eval_blaschke_product(&r, 16).unwrap();
        assert!((b.values()[0] - 1.0).norm() < 1e-15);

        assert!(RootSet::new(0, vec![c(1.0, 0.0)]).is_err());
        assert!(RootSet::new(0, vec![c(0.6, 0.8)]).is_err());
    }

    #[test]
    fn blaschke_if_examples() {
        let r = RootSet::new(1, vec![]).unwrap();
        assert!(blaschke_if(&r, 32).unwrap().iter().all(|&v| (v - 1.0).abs() < 1e-15));

        // peak (1 + r)/(1 − r) at t = θ
        let theta = 2.0 * PI * 0.25;
        let r = RootSet::new(0, vec![Complex64::from_polar(0.9, theta)]).unwrap();
        let n = 1024;
        let ifs = blaschke_if(&r, n).unwrap();
        let (argmax, max) = ifs
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        assert!((max - 19.0).abs() < 1e-9);
        assert_eq!(argmax, n / 4);
    }

    #[test]
    fn blaschke_if_integrates_to_degree() {
        let r = RootSet::new(2, vec![c(0.3, -0.4), c(-0.7, 0.1), c(0.0, 0.85)]).unwrap();
        let n = 4096;
        let ifs = blaschke_if(&r, n).unwrap();
        // periodic trapezoid rule
        let integral: f64 = ifs.iter().sum::<f64>() * 2.0 * PI / n as f64;
        let expected = 2.0 * PI * 5.0;
        assert!((integral - expected).abs() / expected < 1e-6);
    }

    #[test]
    fn winding_examples() {
        let e = CircleSignal::from_fn(64, |t| Complex64::from_polar(1.0, t)).unwrap();
        assert_eq!(winding_number(&e).unwrap(), 1);
        let g = CircleSignal::from_polynomial(1024, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(3.0, 0.0)]).unwrap();
        assert_eq!(winding_number(&g).unwrap(), 3);
        let h = CircleSignal::from_polynomial(1024, &[c(0.0, 0.0), c(3.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert_eq!(winding_number(&h).unwrap(), 1);
    }

    #[test]
    fn winding_detects_curve_through_origin() {
        // z - 1 vanishes at t = 0
        let f = CircleSignal::from_polynomial(64, &[c(-1.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!(matches!(winding_number(&f), Err(PduError::CurveThroughOrigin { .. })));
        // half a turn between neighbouring samples is ambiguous
        let f = CircleSignal::from_fn(8, |t| Complex64::from_polar(1.0, 4.0 * t)).unwrap();
        assert!(winding_number(&f).is_err());
    }

    #[test]
    fn poisson_examples() {
        let n = 128;
        let e = CircleSignal::from_fn(n, |t| Complex64::from_polar(1.0, t)).unwrap();
        let field = poisson_extend(&e, &[0.0, 0.5]).unwrap();
        assert!(field.values()[0].iter().all(|z| z.norm() < 1e-14));
        for (j, &theta) in field.angles().iter().enumerate() {
            assert!((field.value(1, j) - Complex64::from_polar(0.5, theta)).norm() < 1e-13);
        }

        let k = CircleSignal::new(vec![c(1.5, -2.0); n]).unwrap();
        let field = poisson_extend(&k, &[0.0, 0.3, 0.99]).unwrap();
        assert!(field.values().iter().flatten().all(|z| (z - c(1.5, -2.0)).norm() < 1e-13));

        assert!(poisson_extend(&k, &[0.2, 1.0]).is_err());
        assert!(poisson_extend(&k, &[0.5, 0.2]).is_err());
    }

    #[test]
    fn poisson_field_vanishes_at_root() {
        let n = 200;
        let f = CircleSignal::from_polynomial(n, &[c(-0.3, 0.0), c(1.0, 0.0)]).unwrap();
        let radii: Vec<f64> = (0..20).map(|i| i as f64 * 0.05).collect();
        let field = poisson_extend(&f, &radii).unwrap();
        // radius 0.3 is index 6, angle 0 is index 0
        assert!(field.value(6, 0).norm() < 1e-6);

        let mask = root_region_map(&field, 0.005).unwrap();
        for (i, row) in mask.iter().enumerate() {
            for (j, &m) in row.iter().enumerate() {
                if m {
                    let p = Complex64::from_polar(radii[i], field.angles()[j]);
                    assert!((p - 0.3).norm() < 0.005 + 1e-12);
                }
            }
        }
        assert!(mask[6][0]);
    }

    #[test]
    fn root_region_map_edge_cases() {
        let k = CircleSignal::new(vec![c(1.0, 0.0); 16]).unwrap();
        let field = poisson_extend(&k, &[0.0, 0.5]).unwrap();
        assert!(root_region_map(&field, 0.005).unwrap().iter().flatten().all(|m| !m));
        assert!(root_region_map(&field, 2.0).unwrap().iter().flatten().all(|m| *m));
        assert!(root_region_map(&field, -1.0).is_err());
    }

    #[test]
    fn disk_field_csv_layout() {
        let k = CircleSignal::new(vec![c(1.0, 0.0); 4]).unwrap();
        let field = poisson_extend(&k, &[0.0, 0.5]).unwrap();
        let mask = root_region_map(&field, 0.5).unwrap();
        let mut buf = Vec::new();
        field.write_csv(&mut buf, Some(&mask)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "radius,angle,re,im,mask");
        assert_eq!(lines.len(), 1 + 8);
        assert!(lines[1].ends_with(",0"));
    }

    fn root_set() -> impl Strategy<Value = RootSet> {
        (
            0usize..3,
            prop::collection::vec((0.0f64..0.9, 0.0f64..2.0 * PI), 0..6),
        )
            .prop_map(|(m, polar)| {
                RootSet::new(m, polar.into_iter().map(|(r, t)| Complex64::from_polar(r, t)).collect()).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn product_is_unimodular(r in root_set()) {
            let b = eval_blaschke_product(&r, 512).unwrap();
            prop_assert!(b.values().iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        }

        #[test]
        fn if_is_positive(r in root_set()) {
            prop_assume!(r.degree() > 0);
            prop_assert!(blaschke_if(&r, 512).unwrap().iter().all(|&v| v > 0.0));
        }

        #[test]
        fn winding_counts_zeros(r in root_set()) {
            prop_assume!(r.degree() > 0);
            let b = eval_blaschke_product(&r, 4096).unwrap();
            prop_assert_eq!(winding_number(&b).unwrap(), r.degree() as i64);
        }

        #[test]
        fn if_matches_phase_finite_difference(r in root_set()) {
            prop_assume!(r.degree() > 0);
            let n = 4096;
            let b = eval_blaschke_product(&r, n).unwrap();
            let phase = unwrapped_phase(&b);
            let ifs = blaschke_if(&r, n).unwrap();
            let h = 2.0 * PI / n as f64;
            for k in 1..n - 1 {
                let fd = (phase[k + 1] - phase[k - 1]) / (2.0 * h);
                prop_assert!((fd - ifs[k]).abs() / ifs[k] < 1e-3);
            }
        }

        #[test]
        fn poisson_matches_polynomial_inside_disk(
            coeffs in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..11),
            r in 0.0f64..0.99,
        ) {
            let coeffs: Vec<Complex64> = coeffs.into_iter().map(|(a, b)| c(a, b)).collect();
            let n = 64;
            let f = CircleSignal::from_polynomial(n, &coeffs).unwrap();
            let field = poisson_extend(&f, &[r]).unwrap();
            for (j, &theta) in field.angles().iter().enumerate() {
                let z = Complex64::from_polar(r, theta);
                let exact = coeffs.iter().rev().fold(c(0.0, 0.0), |acc, &a| acc * z + a);
                prop_assert!((field.value(0, j) - exact).norm() < 1e-10);
            }
        }
    }
}
