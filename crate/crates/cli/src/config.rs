use std::path::Path;

use pdu_core::benchmark::{Method, MethodSettings};
use pdu_core::pdu::PduConfig;
use pdu_core::windowed::{Tapering, WindowSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Pdu,
    Windowed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowBlock {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

impl WindowBlock {
    pub fn spec(&self) -> Result<WindowSpec, CliError> {
        WindowSpec::new(self.t, self.b).map_err(|e| CliError::Usage(e.to_string()))
    }
}

/// Declarative run description; every field can be overridden from the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: MethodKind,
    pub use_cumsum: bool,
    #[serde(rename = "L")]
    pub lowpass_order: usize,
    pub n_components: usize,
    pub epsilon: f64,
    pub upsample_factor: usize,
    pub residual_energy_stop: f64,
    pub window: Option<WindowBlock>,
    /// One window per extraction, overriding `window` for windowed decompositions.
    pub window_schedule: Option<Vec<WindowBlock>>,
    pub tapering: Tapering,
    pub detrend_degree: usize,
    pub seed: u64,
    pub realizations: usize,
    pub preset: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pdu = PduConfig::default();
        Self {
            method: MethodKind::Pdu,
            use_cumsum: false,
            lowpass_order: pdu.lowpass_order,
            n_components: pdu.n_components,
            epsilon: pdu.epsilon,
            upsample_factor: pdu.upsample_factor,
            residual_energy_stop: pdu.residual_energy_stop,
            window: None,
            window_schedule: None,
            tapering: Tapering::Before,
            detrend_degree: 2,
            seed: 0,
            realizations: 100,
            preset: None,
        }
    }
}

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct ConfigArgs {
    /// JSON run configuration; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<MethodKind>,
    /// Decompose the antiderivative and differentiate the components.
    #[arg(long)]
    pub cumsum: bool,
    /// Low-pass order L.
    #[arg(long = "L", visible_alias = "lowpass-order")]
    pub lowpass_order: Option<usize>,
    #[arg(long)]
    pub n_components: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long = "upsample")]
    pub upsample_factor: Option<usize>,
    #[arg(long)]
    pub residual_energy_stop: Option<f64>,
    /// Window half-support T, seconds.
    #[arg(long = "T")]
    pub window_t: Option<f64>,
    /// Window ramp length B, seconds (defaults to T/4 when only T is given).
    #[arg(long = "B")]
    pub window_b: Option<f64>,
    #[arg(long, value_parser = parse_tapering)]
    pub tapering: Option<Tapering>,
    #[arg(long)]
    pub detrend_degree: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub realizations: Option<usize>,
    #[arg(long)]
    pub preset: Option<String>,
}

fn parse_tapering(s: &str) -> Result<Tapering, String> {
    match s {
        "before" => Ok(Tapering::Before),
        "after" => Ok(Tapering::After),
        other => Err(format!("unknown tapering '{other}' (expected before or after)")),
    }
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => load(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if self.cumsum {
            cfg.use_cumsum = true;
        }
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field.clone() { cfg.$field = v; })*
            };
        }
        set!(lowpass_order, n_components, epsilon, upsample_factor, residual_energy_stop, tapering, detrend_degree, seed, realizations);
        if let Some(p) = &self.preset {
            cfg.preset = Some(p.clone());
        }
        match (self.window_t, self.window_b) {
            (Some(t), b) => cfg.window = Some(WindowBlock { t, b: b.unwrap_or(t / 4.0) }),
            (None, Some(b)) => match cfg.window.as_mut() {
                Some(w) => w.b = b,
                None => return Err(CliError::Usage("--B needs a window half-support (--T or config)".into())),
            },
            (None, None) => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.pdu().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if !(2..=3).contains(&self.detrend_degree) {
            return Err(CliError::Usage(format!(
                "detrend_degree must be 2 or 3, got {}",
                self.detrend_degree
            )));
        }
        if let Some(w) = &self.window {
            w.spec()?;
        }
        if let Some(schedule) = &self.window_schedule {
            if schedule.is_empty() {
                return Err(CliError::Usage("window_schedule is empty".into()));
            }
            for w in schedule {
                w.spec()?;
            }
        }
        Ok(())
    }

    pub fn pdu(&self) -> PduConfig {
        PduConfig {
            lowpass_order: self.lowpass_order,
            n_components: self.n_components,
            epsilon: self.epsilon,
            upsample_factor: self.upsample_factor,
            residual_energy_stop: self.residual_energy_stop,
        }
    }

    /// The explicit window; decomposing recorded data never falls back to a default.
    pub fn required_window(&self) -> Result<WindowSpec, CliError> {
        match &self.window {
            Some(w) => w.spec(),
            None => Err(CliError::Usage(
                "method windowed needs a window: give --T (and --B) or a \"window\" block".into(),
            )),
        }
    }

    /// Windows for each extraction of a windowed decomposition.
    pub fn window_plan(&self) -> Result<Vec<WindowSpec>, CliError> {
        match &self.window_schedule {
            Some(schedule) => {
                let mut specs: Vec<WindowSpec> = schedule.iter().map(WindowBlock::spec).collect::<Result<_, _>>()?;
                let last = *specs.last().expect("schedule validated non-empty");
                specs.resize(self.n_components.max(specs.len()), last);
                specs.truncate(self.n_components);
                Ok(specs)
            }
            None => Ok(vec![self.required_window()?; self.n_components]),
        }
    }

    /// Simulation settings; the window defaults to T = 1/4 s, B = T/4.
    pub fn method_settings(&self) -> Result<MethodSettings, CliError> {
        Ok(MethodSettings {
            pdu: self.pdu(),
            window: match &self.window {
                Some(w) => w.spec()?,
                None => WindowSpec::default(),
            },
            tapering: self.tapering,
            detrend_degree: self.detrend_degree,
        })
    }

    /// Benchmark methods implied by `method` and `use_cumsum` when none are listed.
    pub fn default_methods(&self) -> Vec<Method> {
        if self.use_cumsum {
            vec![Method::Pdu, Method::Windowed, Method::PduCumsum, Method::WindowedCumsum]
        } else {
            vec![Method::Pdu, Method::Windowed]
        }
    }
}
