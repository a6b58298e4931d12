use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use pdu_core::benchmark::{run_benchmark, Method};
use pdu_core::blaschke::{poisson_extend, root_region_map};
use pdu_core::metrics::recon_nrmse;
use pdu_core::pdu::{cumsum_decompose, decompose_signal, reconstruct, PduDecomposition, Strategy};
use pdu_core::simulator::{preset, synthesize, Preset};
use pdu_core::spectral::{analytic_projection, positive_projection, CircleSignal, RealSignal};
use pdu_core::windowed::{build_partition, taper_formula, windowed_decompose_with_schedule, SegmentPlan};
use serde::Serialize;
use serde_json::json;

use crate::config::{ConfigArgs, MethodKind, RunConfig};
use crate::error::CliError;
use crate::input::read_signal;

#[derive(Debug, clap::Args)]
pub struct DecomposeArgs {
    /// Signal CSV: one value column (with --fs) or t,value columns.
    #[arg(long)]
    pub input: PathBuf,
    /// Sample rate in Hz; required for single-column input without a '# fs=' comment.
    #[arg(long)]
    pub fs: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also write the input minus the sum of the first K components to subtracted.csv.
    #[arg(long, value_name = "K")]
    pub subtract_k: Option<usize>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, clap::Args)]
pub struct BenchmarkArgs {
    /// Comma-separated methods: pdu, windowed, pdu-cumsum, windowed-cumsum.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// First seed; realization i uses seed0 + i. Defaults to the config seed.
    #[arg(long)]
    pub seed0: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, clap::Args)]
pub struct RootmapArgs {
    /// Signal CSV; with --complex the columns are t,re,im.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub fs: Option<f64>,
    #[arg(long)]
    pub complex: bool,
    /// Window center, seconds from the first sample.
    #[arg(long)]
    pub center: f64,
    /// Window half-support, seconds.
    #[arg(long = "T")]
    pub half_support: f64,
    /// Window ramp length, seconds (default T/4). Any positive value is accepted; the window
    /// formula is evaluated as written.
    #[arg(long = "B")]
    pub taper: Option<f64>,
    /// Number of radii, evenly spaced from 0 to --max-radius.
    #[arg(long, default_value_t = 100)]
    pub radii: usize,
    #[arg(long, default_value_t = 0.99)]
    pub max_radius: f64,
    /// Mask cells where the normalized field magnitude is below this value.
    #[arg(long, default_value_t = 0.005)]
    pub threshold: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn finish<W: Write>(path: &Path, r: std::io::Result<()>, mut w: W) -> Result<(), CliError> {
    r.and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// A decomposition together with the partitions that produced it, if windowed.
struct Decomposed {
    decomposition: PduDecomposition,
    plans: Vec<SegmentPlan>,
}

fn run_decomposition(s: &RealSignal, cfg: &RunConfig) -> Result<Decomposed, CliError> {
    let pdu = cfg.pdu();
    match (cfg.method, cfg.use_cumsum) {
        (MethodKind::Pdu, false) => Ok(Decomposed {
            decomposition: decompose_signal(s, &pdu)?,
            plans: vec![],
        }),
        (MethodKind::Pdu, true) => Ok(Decomposed {
            decomposition: cumsum_decompose(s, &pdu, &Strategy::Plain, cfg.detrend_degree)?,
            plans: vec![],
        }),
        (MethodKind::Windowed, false) => {
            let plans = cfg
                .window_plan()?
                .iter()
                .map(|w| Ok(build_partition(w, s.duration_s())?.with_tapering(cfg.tapering)))
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok(Decomposed {
                decomposition: windowed_decompose_with_schedule(s, &plans, &pdu)?,
                plans,
            })
        }
        (MethodKind::Windowed, true) => {
            if cfg.window_schedule.is_some() {
                return Err(CliError::Usage(
                    "window_schedule is not supported together with use_cumsum".into(),
                ));
            }
            let window = cfg.required_window()?;
            // The antiderivative is decomposed on an upsampled grid of the same duration.
            let plan = build_partition(&window, s.duration_s())?.with_tapering(cfg.tapering);
            let strategy = Strategy::Windowed {
                window,
                tapering: cfg.tapering,
            };
            Ok(Decomposed {
                decomposition: cumsum_decompose(s, &pdu, &strategy, cfg.detrend_degree)?,
                plans: vec![plan],
            })
        }
    }
}

pub fn decompose(args: &DecomposeArgs) -> Result<(), CliError> {
    let cfg = args.config.resolve()?;
    if cfg.method == MethodKind::Windowed {
        cfg.window_plan()?;
    }
    if let Some(k) = args.subtract_k {
        if k > cfg.n_components {
            return Err(CliError::Usage(format!(
                "--subtract-k {k} exceeds n_components {}",
                cfg.n_components
            )));
        }
    }
    let table = read_signal(&args.input, args.fs, 1)?;
    let fs = table.sample_rate_hz;
    let s = RealSignal::new(table.real().to_vec(), fs).map_err(CliError::from)?;
    if s.len() < 2 {
        return Err(CliError::Usage("input needs at least 2 samples".into()));
    }
    let Decomposed { decomposition: d, plans } = run_decomposition(&s, &cfg)?;
    out_dir(&args.out_dir)?;
    let times: Vec<f64> = (0..s.len()).map(|k| table.start_time + k as f64 / fs).collect();

    let path = args.out_dir.join("components.csv");
    let mut w = create(&path)?;
    let r = write_components(&mut w, &times, &d);
    finish(&path, r, w)?;

    let mut parts: Vec<&[Complex64]> = d.components.iter().map(|c| c.values()).collect();
    parts.push(d.trend.values());
    let recon = recon_nrmse(s.samples(), &parts).ok();
    let summary = json!({
        "method": cfg.method,
        "use_cumsum": cfg.use_cumsum,
        "L": cfg.lowpass_order,
        "n": s.len(),
        "sample_rate_hz": fs,
        "epsilon": cfg.epsilon,
        "upsample_factor": cfg.upsample_factor,
        "n_components": d.components.len(),
        "component_energy": d.component_energies(),
        "trend_energy": d.trend.norm().powi(2),
        "residual_energy": d.residual.norm().powi(2),
        "recon_nrmse": recon,
        "window": cfg.window,
        "tapering": cfg.tapering,
        "detrend_degree": cfg.use_cumsum.then_some(cfg.detrend_degree),
    });
    write_json(&args.out_dir.join("summary.json"), &summary)?;
    if !plans.is_empty() {
        write_json(&args.out_dir.join("plan.json"), &plans)?;
    }

    if let Some(k) = args.subtract_k {
        let without_trend = reconstruct(&d, k)?;
        let path = args.out_dir.join("subtracted.csv");
        let mut w = create(&path)?;
        let r = (|| {
            writeln!(w, "t,value")?;
            for (i, x) in s.samples().iter().enumerate() {
                writeln!(w, "{},{}", times[i], x - (without_trend.values()[i] - d.trend.values()[i]).re)?;
            }
            Ok(())
        })();
        finish(&path, r, w)?;
    }

    match recon {
        Some(e) => println!("{} components, reconstruction NRMSE {e:.3e}", d.components.len()),
        None => println!("{} components, reconstruction NRMSE undefined (zero input)", d.components.len()),
    }
    Ok(())
}

fn write_components<W: Write>(w: &mut W, times: &[f64], d: &PduDecomposition) -> std::io::Result<()> {
    write!(w, "t")?;
    for k in 1..=d.components.len() {
        write!(w, ",c{k}_re,c{k}_im")?;
    }
    writeln!(w, ",trend_re,trend_im,residual_re,residual_im")?;
    for (i, t) in times.iter().enumerate() {
        write!(w, "{t}")?;
        for z in d.components.iter().map(|c| c.values()[i]).chain([d.trend.values()[i], d.residual.values()[i]]) {
            write!(w, ",{},{}", z.re, z.im)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn parse_preset(cfg: &RunConfig) -> Result<Preset, CliError> {
    let name = cfg
        .preset
        .as_deref()
        .ok_or_else(|| CliError::Usage("a preset is required (--preset experiment1|experiment2)".into()))?;
    Ok(Preset::from_str(name)?)
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = args.config.resolve()?;
    let p = parse_preset(&cfg)?;
    let params = preset(p);
    let r = synthesize(&params, cfg.seed)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        out_dir(dir)?;
    }
    let mut w = create(&args.out)?;
    let res = r.write_csv(&mut w, &params, Some(p));
    finish(&args.out, res, w)?;
    println!("{} seed {}: {} samples", p.name(), cfg.seed, r.signal.len());
    Ok(())
}

pub fn benchmark(args: &BenchmarkArgs) -> Result<(), CliError> {
    let cfg = args.config.resolve()?;
    if cfg.realizations == 0 {
        return Err(CliError::Usage("realizations must be at least 1".into()));
    }
    let p = parse_preset(&cfg)?;
    let methods = match &args.methods {
        Some(list) => list
            .iter()
            .map(|m| Method::from_str(m.trim()).map_err(CliError::from))
            .collect::<Result<Vec<_>, _>>()?,
        None => cfg.default_methods(),
    };
    if methods.is_empty() {
        return Err(CliError::Usage("no methods given".into()));
    }
    let settings = cfg.method_settings()?;
    let seed0 = args.seed0.unwrap_or(cfg.seed);
    let outcome = run_benchmark(&preset(p), Some(p.name()), cfg.realizations, &methods, seed0, &settings)?;

    out_dir(&args.out_dir)?;
    let path = args.out_dir.join("metrics.csv");
    let mut w = create(&path)?;
    let r = outcome.write_csv(&mut w);
    finish(&path, r, w)?;

    let path = args.out_dir.join("records.jsonl");
    let mut w = create(&path)?;
    for rec in &outcome.records {
        serde_json::to_writer(&mut w, rec).map_err(|e| CliError::Usage(e.to_string()))?;
        writeln!(w).map_err(|e| CliError::io(&path, e))?;
    }
    finish(&path, Ok(()), w)?;
    write_json(
        &args.out_dir.join("report.json"),
        &json!({ "settings": settings, "report": outcome.report }),
    )?;

    for m in &outcome.report.medians {
        println!(
            "{:<16} medians d1_1 {:.3} d1_2 {:.3} d2_1 {:.3} d2_2 {:.3} d3 {:.3}",
            m.method.name(),
            m.d1_1,
            m.d1_2,
            m.d2_1,
            m.d2_2,
            m.d3
        );
    }
    for c in &outcome.report.comparisons {
        let tested = c.indices.iter().any(|i| i.test.is_some());
        let verdict = if !tested {
            "not tested"
        } else if c.improves_all() {
            "improves on all indices"
        } else {
            "does not improve on all indices"
        };
        println!("{} vs {}: {verdict}", c.method.name(), c.baseline.name());
    }
    Ok(())
}

/// Result of a root map, as written to summary.json.
#[derive(Debug, Clone, Serialize)]
pub struct RootmapSummary {
    pub center: f64,
    #[serde(rename = "T")]
    pub half_support: f64,
    #[serde(rename = "B")]
    pub taper: f64,
    pub segment_samples: usize,
    pub radii: usize,
    pub max_radius: f64,
    pub threshold: f64,
    /// Largest field magnitude before normalization.
    pub normalization: f64,
    pub masked_cells: usize,
    pub max_masked_radius: Option<f64>,
}

pub fn rootmap(args: &RootmapArgs) -> Result<RootmapSummary, CliError> {
    let (half, taper) = (args.half_support, args.taper.unwrap_or(args.half_support / 4.0));
    if !(half.is_finite() && half > 0.0 && taper.is_finite() && taper > 0.0) {
        return Err(CliError::Usage(format!("window needs T > 0 and B > 0, got T = {half}, B = {taper}")));
    }
    if taper >= half {
        eprintln!("note: B >= T, the window formula is evaluated literally (rising ramp over the support)");
    }
    if args.radii < 2 {
        return Err(CliError::Usage("--radii must be at least 2".into()));
    }
    if !(args.max_radius > 0.0 && args.max_radius < 1.0) {
        return Err(CliError::Usage(format!("--max-radius must lie in (0, 1), got {}", args.max_radius)));
    }
    let table = read_signal(&args.input, args.fs, if args.complex { 2 } else { 1 })?;
    let fs = table.sample_rate_hz;
    let values: Vec<Complex64> = if args.complex {
        table.complex()?
    } else {
        table.real().iter().map(|&x| Complex64::new(x, 0.0)).collect()
    };
    let duration = (values.len() - 1) as f64 / fs;
    let (lo_t, hi_t) = (args.center - half, args.center + half);
    if lo_t < -1e-9 || hi_t > duration + 1e-9 {
        return Err(CliError::Usage(format!(
            "window [{lo_t}, {hi_t}] s does not fit in the record [0, {duration}] s"
        )));
    }
    let lo = (lo_t * fs - 1e-9).ceil().max(0.0) as usize;
    let hi = ((hi_t * fs + 1e-9).floor() as usize).min(values.len() - 1);
    if hi <= lo {
        return Err(CliError::Usage("window holds fewer than 2 samples".into()));
    }
    let segment = (lo..=hi)
        .map(|i| values[i] * taper_formula(half, taper, i as f64 / fs - args.center))
        .collect::<Vec<_>>();
    let boundary = if args.complex {
        positive_projection(&CircleSignal::new(segment)?)
    } else {
        analytic_projection(&RealSignal::new(segment.iter().map(|z| z.re).collect(), fs)?)?
    };
    let radii: Vec<f64> = (0..args.radii)
        .map(|i| args.max_radius * i as f64 / (args.radii - 1) as f64)
        .collect();
    let field = poisson_extend(&boundary, &radii)?;
    let peak = field.max_abs();
    if peak == 0.0 {
        return Err(CliError::Numerical("windowed signal is identically zero".into()));
    }
    let field = field.scaled(1.0 / peak);
    let mask = root_region_map(&field, args.threshold)?;

    out_dir(&args.out_dir)?;
    let path = args.out_dir.join("field.csv");
    let mut w = create(&path)?;
    let r = field.write_csv(&mut w, Some(&mask));
    finish(&path, r, w)?;

    let path = args.out_dir.join("mask.csv");
    let mut w = create(&path)?;
    let mut masked = 0;
    let mut max_masked_radius: Option<f64> = None;
    let r = (|| {
        writeln!(w, "radius,angle")?;
        for (i, row) in mask.iter().enumerate() {
            for (j, &m) in row.iter().enumerate() {
                if m {
                    masked += 1;
                    max_masked_radius = Some(max_masked_radius.map_or(radii[i], |r| r.max(radii[i])));
                    writeln!(w, "{},{}", radii[i], field.angles()[j])?;
                }
            }
        }
        Ok(())
    })();
    finish(&path, r, w)?;

    let summary = RootmapSummary {
        center: args.center,
        half_support: half,
        taper,
        segment_samples: hi - lo + 1,
        radii: args.radii,
        max_radius: args.max_radius,
        threshold: args.threshold,
        normalization: peak,
        masked_cells: masked,
        max_masked_radius,
    };
    write_json(&args.out_dir.join("summary.json"), &summary)?;
    match max_masked_radius {
        Some(r) => println!("{masked} cells below {}, largest radius {r:.4}", args.threshold),
        None => println!("no cells below {}", args.threshold),
    }
    Ok(summary)
}
