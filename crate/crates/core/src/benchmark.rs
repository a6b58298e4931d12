//! Seeded Monte-Carlo comparison of decomposition methods on simulated AHM signals.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PduError, Result};
use crate::metrics::{score, wilcoxon_signed_rank, DecompMetrics, PairedTestResult};
use crate::pdu::{cumsum_decompose, decompose_signal, PduConfig, PduDecomposition, Strategy};
use crate::simulator::{synthesize, AhmParams, AhmRealization};
use crate::windowed::{build_partition, windowed_decompose, Tapering, WindowSpec};

/// Names of the five scored indices, in report order.
pub const INDEX_NAMES: [&str; 5] = ["d1_1", "d1_2", "d2_1", "d2_2", "d3"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pdu,
    Windowed,
    PduCumsum,
    WindowedCumsum,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Pdu,
        Method::Windowed,
        Method::PduCumsum,
        Method::WindowedCumsum,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Pdu => "pdu",
            Method::Windowed => "windowed",
            Method::PduCumsum => "pdu-cumsum",
            Method::WindowedCumsum => "windowed-cumsum",
        }
    }

    pub fn uses_cumsum(&self) -> bool {
        matches!(self, Method::PduCumsum | Method::WindowedCumsum)
    }

    pub fn is_windowed(&self) -> bool {
        matches!(self, Method::Windowed | Method::WindowedCumsum)
    }

    /// The plain-PDU counterpart a windowed method is tested against.
    pub fn baseline(&self) -> Option<Method> {
        match self {
            Method::Windowed => Some(Method::Pdu),
            Method::WindowedCumsum => Some(Method::PduCumsum),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = PduError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| PduError::invalid(format!("unknown method '{s}'")))
    }
}

/// Settings shared by every method in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSettings {
    pub pdu: PduConfig,
    pub window: WindowSpec,
    #[serde(default)]
    pub tapering: Tapering,
    pub detrend_degree: usize,
}

impl Default for MethodSettings {
    fn default() -> Self {
        MethodSettings {
            pdu: PduConfig::default(),
            window: WindowSpec::default(),
            tapering: Tapering::Before,
            detrend_degree: 2,
        }
    }
}

/// Runs one method on a realization's signal.
pub fn run_method(r: &AhmRealization, method: Method, settings: &MethodSettings) -> Result<PduDecomposition> {
    let cfg = &settings.pdu;
    let s = &r.signal;
    match method {
        Method::Pdu => decompose_signal(s, cfg),
        Method::Windowed => {
            let plan = build_partition(&settings.window, s.duration_s())?.with_tapering(settings.tapering);
            windowed_decompose(s, &plan, cfg, cfg.n_components)
        }
        Method::PduCumsum => cumsum_decompose(s, cfg, &Strategy::Plain, settings.detrend_degree),
        Method::WindowedCumsum => cumsum_decompose(
            s,
            cfg,
            &Strategy::Windowed {
                window: settings.window,
                tapering: settings.tapering,
            },
            settings.detrend_degree,
        ),
    }
}

/// Scores a decomposition against the realization, component `l` against mode `l`.
pub fn score_decomposition(r: &AhmRealization, d: &PduDecomposition) -> Result<DecompMetrics> {
    let comps: Vec<&[Complex64]> = d.components.iter().map(|c| c.values()).collect();
    score(r.signal.samples(), &comps, &r.ams(), &r.phases())
}

/// SHA-256 of the signal samples, sample rate and seed.
pub fn realization_digest(r: &AhmRealization) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(r.seed.to_le_bytes());
    h.update(r.signal.sample_rate_hz().to_le_bytes());
    for v in r.signal.samples() {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub seed: u64,
    pub method: Method,
    pub metrics: DecompMetrics,
}

impl MetricsRecord {
    /// Index value by position in [`INDEX_NAMES`]; missing modes read as NaN.
    pub fn index(&self, i: usize) -> f64 {
        let m = &self.metrics;
        match i {
            0 | 1 => m.delta1.get(i).copied().unwrap_or(f64::NAN),
            2 | 3 => m.delta2.get(i - 2).copied().unwrap_or(f64::NAN),
            _ => m.delta3,
        }
    }
}

/// One index of a windowed-vs-plain comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexComparison {
    pub index: String,
    pub median: f64,
    pub baseline_median: f64,
    /// `None` when there are too few realizations to test.
    pub test: Option<PairedTestResult>,
}

impl IndexComparison {
    /// Lower median and a significant paired test.
    pub fn improves(&self) -> bool {
        self.median < self.baseline_median && self.test.as_ref().is_some_and(|t| t.significant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method: Method,
    pub baseline: Method,
    pub indices: Vec<IndexComparison>,
}

impl Comparison {
    pub fn improves_all(&self) -> bool {
        self.indices.iter().all(IndexComparison::improves)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub preset: Option<String>,
    pub realizations: usize,
    pub seed0: u64,
    pub methods: Vec<Method>,
    pub medians: Vec<MethodMedians>,
    pub comparisons: Vec<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMedians {
    pub method: Method,
    pub d1_1: f64,
    pub d1_2: f64,
    pub d2_1: f64,
    pub d2_2: f64,
    pub d3: f64,
}

impl MethodMedians {
    pub fn get(&self, i: usize) -> f64 {
        [self.d1_1, self.d1_2, self.d2_1, self.d2_2, self.d3][i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    pub records: Vec<MetricsRecord>,
    pub report: BenchmarkReport,
}

impl BenchmarkOutcome {
    pub fn medians(&self, method: Method) -> Option<&MethodMedians> {
        self.report.medians.iter().find(|m| m.method == method)
    }

    pub fn comparison(&self, method: Method) -> Option<&Comparison> {
        self.report.comparisons.iter().find(|c| c.method == method)
    }

    /// Aggregate CSV: `seed,method,d1_1,d1_2,d2_1,d2_2,d3`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "seed,method,{}", INDEX_NAMES.join(","))?;
        for r in &self.records {
            write!(w, "{},{}", r.seed, r.method)?;
            for i in 0..INDEX_NAMES.len() {
                write!(w, ",{}", r.index(i))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| !x.is_nan());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn evaluate_seed(
    params: &AhmParams,
    seed: u64,
    methods: &[Method],
    settings: &MethodSettings,
) -> Result<Vec<MetricsRecord>> {
    let r = synthesize(params, seed)?;
    let digest = realization_digest(&r);
    methods
        .iter()
        .map(|&m| {
            if realization_digest(&r) != digest {
                return Err(PduError::invalid(format!(
                    "realization for seed {seed} changed before dispatch to {m}"
                )));
            }
            let d = run_method(&r, m, settings)?;
            Ok(MetricsRecord {
                seed,
                method: m,
                metrics: score_decomposition(&r, &d)?,
            })
        })
        .collect()
}

/// Runs every method on realizations `seed0 .. seed0 + n`, in parallel across seeds, and
/// tests each windowed method against its plain counterpart on all five indices
/// (Bonferroni `m = 5`). Tests are skipped below five realizations.
pub fn run_benchmark(
    params: &AhmParams,
    preset: Option<&str>,
    n: usize,
    methods: &[Method],
    seed0: u64,
    settings: &MethodSettings,
) -> Result<BenchmarkOutcome> {
    if n == 0 {
        return Err(PduError::invalid("benchmark needs at least one realization"));
    }
    if methods.is_empty() {
        return Err(PduError::invalid("benchmark needs at least one method"));
    }
    params.validate()?;
    settings.pdu.validate()?;
    settings.window.validate()?;
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();

    let per_seed: Vec<Vec<MetricsRecord>> = (0..n as u64)
        .into_par_iter()
        .map(|i| evaluate_seed(params, seed0 + i, &methods, settings))
        .collect::<Result<_>>()?;
    let records: Vec<MetricsRecord> = per_seed.into_iter().flatten().collect();

    let column = |m: Method, i: usize| -> Vec<f64> {
        records
            .iter()
            .filter(|r| r.method == m)
            .map(|r| r.index(i))
            .collect()
    };

    let medians = methods
        .iter()
        .map(|&m| MethodMedians {
            method: m,
            d1_1: median(column(m, 0)),
            d1_2: median(column(m, 1)),
            d2_1: median(column(m, 2)),
            d2_2: median(column(m, 3)),
            d3: median(column(m, 4)),
        })
        .collect();

    let mut comparisons = Vec::new();
    for &m in &methods {
        let Some(base) = m.baseline().filter(|b| methods.contains(b)) else {
            continue;
        };
        let indices = INDEX_NAMES
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let x = column(m, i);
                let y = column(base, i);
                let test = if n >= 5 {
                    Some(wilcoxon_signed_rank(&x, &y, INDEX_NAMES.len())?)
                } else {
                    None
                };
                Ok(IndexComparison {
                    index: name.to_string(),
                    median: median(x),
                    baseline_median: median(y),
                    test,
                })
            })
            .collect::<Result<_>>()?;
        comparisons.push(Comparison {
            method: m,
            baseline: base,
            indices,
        });
    }

    Ok(BenchmarkOutcome {
        records,
        report: BenchmarkReport {
            preset: preset.map(str::to_string),
            realizations: n,
            seed0,
            methods,
            medians,
            comparisons,
        },
    })
}
