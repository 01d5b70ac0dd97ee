//! Run configuration, initial-data builders and presets.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use plate_core::analysis::{default_d, log_spaced, NormDescriptor, NormKind, Quantity};
use plate_core::grid::read_field;
use plate_core::{GridSpec, IntegratorConfig, MaterialModel, SpectralField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 8] = [
    "linear_decay_n1",
    "linear_decay_n2",
    "regularity_loss_envelope",
    "moment_zero_gain",
    "profile_convergence_linear",
    "nonlinear_smalldata_n2",
    "energy_identity",
    "symbol_validation",
];

/// Fraction of the torus validity time `(L/pi)^4` a run may reach without
/// `allow_long_time`.
pub const VALIDITY_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub amplitude: f64,
    /// Integer lattice index; the wavevector is `pi * index / L`.
    pub index: Vec<i64>,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Zero,
    /// `A exp(-|x - c|^2 / (2 w^2))`.
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// `d/dx_axis` of the Gaussian; has zero mean.
    DerivativeOfGaussian {
        amplitude: f64,
        width: f64,
        axis: usize,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// `sum A cos(xi . x + phase)`.
    ModeSum {
        modes: Vec<Mode>,
    },
    /// `count` random low modes with amplitudes up to `amplitude`, drawn from the run seed.
    RandomModes {
        count: usize,
        amplitude: f64,
        max_index: i64,
    },
    /// Samples written by [`plate_core::grid::write_field`].
    File {
        path: PathBuf,
    },
}

impl DataSpec {
    pub fn is_zero_mean(&self) -> bool {
        match self {
            DataSpec::Zero | DataSpec::DerivativeOfGaussian { .. } => true,
            DataSpec::ModeSum { modes } => modes.iter().all(|m| m.index.iter().any(|&i| i != 0)),
            _ => false,
        }
    }

    pub fn build(&self, grid: GridSpec, rng: &mut ChaCha8Rng) -> Result<SpectralField, CliError> {
        let n = grid.dim;
        let center_of = |c: &Option<Vec<f64>>| -> Result<Vec<f64>, CliError> {
            match c {
                None => Ok(vec![0.0; n]),
                Some(v) if v.len() == n => Ok(v.clone()),
                Some(v) => Err(CliError::Config(format!(
                    "center has {} components for a {n}-dimensional grid",
                    v.len()
                ))),
            }
        };
        let field = match self {
            DataSpec::Zero => SpectralField::zeros(grid),
            DataSpec::Gaussian {
                amplitude,
                width,
                center,
            } => {
                let c = center_of(center)?;
                let (a, w) = (*amplitude, *width);
                SpectralField::from_fn(grid, |x| {
                    let r2: f64 = x.iter().zip(&c).map(|(x, c)| (x - c) * (x - c)).sum();
                    a * (-r2 / (2.0 * w * w)).exp()
                })?
            }
            DataSpec::DerivativeOfGaussian {
                amplitude,
                width,
                axis,
                center,
            } => {
                if *axis >= n {
                    return Err(CliError::Config(format!(
                        "axis {axis} out of range for dimension {n}"
                    )));
                }
                let c = center_of(center)?;
                let (a, w, ax) = (*amplitude, *width, *axis);
                SpectralField::from_fn(grid, |x| {
                    let r2: f64 = x.iter().zip(&c).map(|(x, c)| (x - c) * (x - c)).sum();
                    -a * (x[ax] - c[ax]) / (w * w) * (-r2 / (2.0 * w * w)).exp()
                })?
            }
            DataSpec::ModeSum { modes } => {
                for m in modes {
                    if m.index.len() != n {
                        return Err(CliError::Config(format!(
                            "mode index {:?} does not have {n} components",
                            m.index
                        )));
                    }
                }
                mode_sum(grid, modes)?
            }
            DataSpec::RandomModes {
                count,
                amplitude,
                max_index,
            } => {
                let modes: Vec<Mode> = (0..*count)
                    .map(|_| Mode {
                        amplitude: rng.gen_range(-1.0..1.0) * amplitude,
                        index: (0..n)
                            .map(|_| rng.gen_range(-max_index..=*max_index))
                            .collect(),
                        phase: rng.gen_range(0.0..2.0 * PI),
                    })
                    .collect();
                mode_sum(grid, &modes)?
            }
            DataSpec::File { path } => {
                let (g, samples) = read_field(path)?;
                if g != grid {
                    return Err(CliError::Config(format!(
                        "field file {} was written on a different grid",
                        path.display()
                    )));
                }
                SpectralField::forward(grid, &samples)?
            }
        };
        Ok(field)
    }
}

fn mode_sum(grid: GridSpec, modes: &[Mode]) -> Result<SpectralField, CliError> {
    let l = grid.half_length;
    Ok(SpectralField::from_fn(grid, |x| {
        modes
            .iter()
            .map(|m| {
                let phase: f64 = m
                    .index
                    .iter()
                    .zip(x)
                    .map(|(i, x)| PI * *i as f64 / l * x)
                    .sum();
                m.amplitude * (phase + m.phase).cos()
            })
            .sum()
    })?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub u0: DataSpec,
    pub u1: DataSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    /// Uniform in `log(1 + t)`.
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum CheckpointSpec {
    Count { count: usize, spacing: Spacing },
    Times { times: Vec<f64> },
}

impl CheckpointSpec {
    /// Checkpoint times including `t = 0`.
    pub fn times(&self, t_end: f64) -> Vec<f64> {
        match self {
            CheckpointSpec::Times { times } => times.clone(),
            CheckpointSpec::Count { count, spacing } => {
                let count = (*count).max(2);
                match spacing {
                    Spacing::Linear => (0..count)
                        .map(|i| {
                            if i + 1 == count {
                                t_end
                            } else {
                                t_end * i as f64 / (count - 1) as f64
                            }
                        })
                        .collect(),
                    Spacing::Log => log_spaced(0.0, t_end, count),
                }
            }
        }
    }
}

fn default_s() -> u32 {
    2
}

fn default_norms() -> Vec<NormDescriptor> {
    vec![NormDescriptor::l2(Quantity::U, 0)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    /// Regularity index used for data and weighted norms.
    #[serde(default = "default_s")]
    pub s: u32,
    /// Fit windows; empty means `[t_end / 10, t_end]`.
    #[serde(default)]
    pub fit_windows: Vec<(f64, f64)>,
    /// Weight exponent of `N_d(T)`; defaults to `n/8 + 0.55`.
    #[serde(default)]
    pub d: Option<f64>,
    #[serde(default = "default_norms")]
    pub norms: Vec<NormDescriptor>,
    /// Record the profile decomposition at every checkpoint.
    #[serde(default)]
    pub profile: bool,
    /// Tabulate the smoothing envelope and fit the regularity-loss constant.
    #[serde(default)]
    pub envelope: bool,
    /// Check characteristic residuals and propagator identities on the lattice.
    #[serde(default)]
    pub symbol_checks: bool,
    /// Evaluate `E(T)`, `D(T)`, `M0`, `M1`, `L(T)` and `N_d(T)`.
    #[serde(default = "yes")]
    pub weighted_norms: bool,
}

fn yes() -> bool {
    true
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        AnalysisSpec {
            s: default_s(),
            fit_windows: Vec::new(),
            d: None,
            norms: default_norms(),
            profile: false,
            envelope: false,
            symbol_checks: false,
            weighted_norms: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Write binary field dumps for every checkpoint.
    #[serde(default = "yes")]
    pub fields: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: None,
            fields: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub description: String,
    pub grid: GridSpec,
    pub model: ModelSpec,
    pub initial_data: InitialData,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub t_end: f64,
    pub checkpoints: CheckpointSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub allow_long_time: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("{e}")))
    }

    /// Parses a JSON document after applying `KEY=VALUE` overrides.
    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("{e}")))
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, CliError> {
        let mut value = self.to_value();
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("{e}")))
    }

    pub fn model(&self) -> Result<MaterialModel, CliError> {
        MaterialModel::from_name(&self.model.name, self.grid.dim, &self.model.params)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn checkpoint_times(&self) -> Vec<f64> {
        self.checkpoints.times(self.t_end)
    }

    pub fn fit_windows(&self) -> Vec<(f64, f64)> {
        if self.analysis.fit_windows.is_empty() {
            vec![plate_core::analysis::default_window(self.t_end)]
        } else {
            self.analysis.fit_windows.clone()
        }
    }

    pub fn d(&self) -> f64 {
        self.analysis.d.unwrap_or_else(|| default_d(self.grid.dim))
    }

    pub fn zero_mean(&self) -> bool {
        self.initial_data.u0.is_zero_mean() && self.initial_data.u1.is_zero_mean()
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<(), CliError> {
        self.grid
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.integrator
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.model()?;
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(CliError::Config(format!(
                "t_end must be positive (got {})",
                self.t_end
            )));
        }
        let limit = VALIDITY_FRACTION * self.grid.validity_time();
        if self.t_end > limit && !self.allow_long_time {
            return Err(CliError::Config(format!(
                "t_end = {} exceeds the torus validity limit {limit:.6e}; set allow_long_time to proceed",
                self.t_end
            )));
        }
        let times = self.checkpoint_times();
        if times.windows(2).any(|w| w[1] <= w[0])
            || times.iter().any(|t| !(0.0..=self.t_end).contains(t))
        {
            return Err(CliError::Config(
                "checkpoints must increase strictly within [0, t_end]".into(),
            ));
        }
        for (lo, hi) in self.fit_windows() {
            if !(lo < hi) {
                return Err(CliError::Config(format!(
                    "fit window ({lo}, {hi}) is empty"
                )));
            }
        }
        if let Some(d) = self.analysis.d {
            let threshold = self.grid.dim as f64 / 8.0 + 0.5;
            if d <= threshold {
                return Err(CliError::Config(format!(
                    "analysis.d = {d} must exceed {threshold}"
                )));
            }
        }
        if self.analysis.weighted_norms && self.analysis.s < 2 {
            return Err(CliError::Config(
                "analysis.s must be at least 2 for weighted norms".into(),
            ));
        }
        Ok(())
    }

    /// Builds `(u0, u1)` on the configured grid.
    pub fn initial_fields(&self) -> Result<(SpectralField, SpectralField), CliError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let u0 = self.initial_data.u0.build(self.grid, &mut rng)?;
        let u1 = self.initial_data.u1.build(self.grid, &mut rng)?;
        Ok((u0, u1))
    }
}

/// Sets the dotted path `KEY` of a JSON document to `VALUE`, which is parsed
/// as JSON when possible and kept as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not KEY=VALUE")))?;
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| {
                    CliError::Config(format!("`{part}` in `{key}` is not an array index"))
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    CliError::Config(format!("index {idx} out of range ({len}) in `{key}`"))
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(CliError::Config(format!(
                    "cannot descend into `{part}` of `{key}`"
                )))
            }
        };
    }
    Ok(())
}

fn gaussian(amplitude: f64, width: f64) -> DataSpec {
    DataSpec::Gaussian {
        amplitude,
        width,
        center: None,
    }
}

fn l2(q: Quantity, k: u32) -> NormDescriptor {
    NormDescriptor::new(q, k, NormKind::L2)
}

fn linear() -> ModelSpec {
    ModelSpec {
        name: "linear_isotropic".into(),
        params: BTreeMap::new(),
    }
}

fn base(
    description: &str,
    grid: GridSpec,
    model: ModelSpec,
    u0: DataSpec,
    u1: DataSpec,
    t_end: f64,
) -> RunConfig {
    RunConfig {
        description: description.into(),
        grid,
        model,
        initial_data: InitialData { u0, u1 },
        integrator: IntegratorConfig::default(),
        t_end,
        checkpoints: CheckpointSpec::Count {
            count: 64,
            spacing: Spacing::Log,
        },
        analysis: AnalysisSpec::default(),
        output: OutputSpec::default(),
        seed: 0,
        allow_long_time: false,
    }
}

/// Fully populated configuration for a named experiment.
pub fn preset(name: &str) -> Result<RunConfig, CliError> {
    let grid = |n: usize, l: f64, points: usize| {
        GridSpec::new(n, l, points).expect("preset grid is valid")
    };
    let decay_norms = vec![
        l2(Quantity::U, 0),
        l2(Quantity::U, 1),
        l2(Quantity::U, 2),
        l2(Quantity::Ut, 0),
    ];
    let cfg = match name {
        "linear_decay_n1" => {
            let mut c = base(
                "Optimal L2 decay (1+t)^{-1/8-k/4} of the linear problem in one dimension",
                grid(1, 64.0 * PI, 1024),
                linear(),
                gaussian(0.1, 2.0),
                DataSpec::Zero,
                500.0,
            );
            c.integrator.dt = 0.25;
            c.analysis.norms = decay_norms;
            c
        }
        "linear_decay_n2" => {
            let mut c = base(
                "Optimal L2 decay (1+t)^{-n/8-k/4} of u and (1+t)^{-n/8-1} of u_t, linear problem, n = 2",
                grid(2, 32.0 * PI, 256),
                linear(),
                gaussian(0.1, 2.0),
                DataSpec::Zero,
                500.0,
            );
            c.integrator.dt = 0.25;
            c.analysis.norms = decay_norms;
            c.analysis.s = 8;
            c.analysis.profile = true;
            c
        }
        "regularity_loss_envelope" => {
            let mut c = base(
                "Spectral bound Re lambda <= -c|xi|^4/(1+|xi|^2)^3 and the smoothing envelope sup|G|/(1+|xi|^2)",
                grid(2, 16.0 * PI, 128),
                linear(),
                gaussian(0.1, 2.0),
                DataSpec::Zero,
                100.0,
            );
            c.analysis.envelope = true;
            c.analysis.weighted_norms = false;
            c.output.fields = false;
            c
        }
        "moment_zero_gain" => {
            let mut c = base(
                "Extra (1+t)^{-1/4} decay for zero-mean data: derivative-of-Gaussian initial velocity",
                grid(2, 32.0 * PI, 256),
                linear(),
                DataSpec::Zero,
                DataSpec::DerivativeOfGaussian { amplitude: 0.1, width: 2.0, axis: 0, center: None },
                500.0,
            );
            c.integrator.dt = 0.25;
            c.analysis.norms = vec![l2(Quantity::U, 0), l2(Quantity::U, 1)];
            c
        }
        "profile_convergence_linear" => {
            let mut c = base(
                "Convergence of the linear solution to the self-similar profile M G0(x, t+1)",
                grid(2, 32.0 * PI, 256),
                linear(),
                gaussian(0.1, 2.0),
                gaussian(0.05, 2.0),
                500.0,
            );
            c.integrator.dt = 0.25;
            c.analysis.profile = true;
            c.analysis.norms = vec![l2(Quantity::U, 0), l2(Quantity::ProfileDeviation, 0)];
            c
        }
        "nonlinear_smalldata_n2" => {
            let mut c = base(
                "Small-data global solution of the quasi-linear problem: decay and asymptotic profile",
                grid(2, 16.0 * PI, 128),
                ModelSpec { name: "quartic".into(), params: BTreeMap::from([("beta".into(), 1.0)]) },
                gaussian(0.01, 2.0),
                gaussian(0.005, 2.0),
                500.0,
            );
            c.analysis.profile = true;
            c.analysis.norms = vec![
                l2(Quantity::U, 0),
                l2(Quantity::U, 1),
                l2(Quantity::ProfileDeviation, 0),
                l2(Quantity::Nonlinear, 0),
                l2(Quantity::Linear, 0),
            ];
            c
        }
        "energy_identity" => {
            let mut c = base(
                "Energy balance d/dt{1/2||u_t||_{H^1}^2 + int phi} + ||u_t||^2 = 0 for small quasi-linear data",
                grid(2, 16.0 * PI, 128),
                ModelSpec { name: "quartic".into(), params: BTreeMap::from([("beta".into(), 1.0)]) },
                gaussian(0.01, 2.0),
                gaussian(0.005, 2.0),
                50.0,
            );
            c.checkpoints = CheckpointSpec::Count {
                count: 51,
                spacing: Spacing::Linear,
            };
            c.analysis.norms = vec![l2(Quantity::U, 0), l2(Quantity::Ut, 0)];
            c.analysis.weighted_norms = false;
            c
        }
        "symbol_validation" => {
            let mut c = base(
                "Characteristic-root residuals, propagator initial values and root-swap invariance on the lattice",
                grid(2, 32.0 * PI, 256),
                linear(),
                gaussian(0.1, 2.0),
                DataSpec::Zero,
                1.0,
            );
            c.checkpoints = CheckpointSpec::Times {
                times: vec![0.0, 0.5, 1.0],
            };
            c.analysis.symbol_checks = true;
            c.analysis.weighted_norms = false;
            c.analysis.norms.clear();
            c.output.fields = false;
            c
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown preset `{other}` (available: {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
            let echo = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
            assert_eq!(echo, cfg);
        }
        assert!(preset("unknown").is_err());
    }

    #[test]
    fn linear_decay_n2_shape() {
        let c = preset("linear_decay_n2").unwrap();
        assert_eq!(c.grid.dim, 2);
        assert_eq!(c.grid.half_length, 32.0 * PI);
        assert_eq!(c.grid.points_per_axis, 256);
        assert!(matches!(c.initial_data.u0, DataSpec::Gaussian { .. }));
        assert_eq!(c.t_end, 500.0);
        assert!(c.grid.validity_time() > 1000.0 * c.t_end);
    }

    #[test]
    fn moment_zero_preset_is_zero_mean() {
        let c = preset("moment_zero_gain").unwrap();
        assert!(c.zero_mean());
        assert!(matches!(
            c.initial_data.u1,
            DataSpec::DerivativeOfGaussian { .. }
        ));
        let (u0, u1) = c.initial_fields().unwrap();
        assert!((u0.integral() + u1.integral()).abs() < 1e-12);
        assert!(!preset("linear_decay_n2").unwrap().zero_mean());
    }

    #[test]
    fn overrides_follow_dotted_paths() {
        let c = preset("energy_identity").unwrap();
        let o = c
            .with_overrides(&[
                "integrator.dt=0.05".into(),
                "model.params.beta=2".into(),
                "description=x y".into(),
            ])
            .unwrap();
        assert_eq!(o.integrator.dt, 0.05);
        assert_eq!(o.model.params["beta"], 2.0);
        assert_eq!(o.description, "x y");
        assert!(c.with_overrides(&["integrator.dtt=0.05".into()]).is_err());
        assert!(c.with_overrides(&["nonsense".into()]).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = preset("energy_identity").unwrap().to_value();
        v["grid"]["points"] = 3.into();
        let err = RunConfig::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("points"));
    }

    #[test]
    fn long_runs_need_the_override() {
        let mut c = preset("energy_identity").unwrap();
        c.grid = GridSpec::new(2, 2.0 * PI, 16).unwrap();
        assert!(c.validate().is_err());
        c.allow_long_time = true;
        c.validate().unwrap();
    }

    #[test]
    fn checkpoint_layouts() {
        let lin = CheckpointSpec::Count {
            count: 5,
            spacing: Spacing::Linear,
        }
        .times(2.0);
        assert_eq!(lin, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let log = CheckpointSpec::Count {
            count: 4,
            spacing: Spacing::Log,
        }
        .times(100.0);
        assert_eq!(log[0], 0.0);
        assert_eq!(*log.last().unwrap(), 100.0);
        let parsed: CheckpointSpec = serde_json::from_str(r#"{"times": [0, 1]}"#).unwrap();
        assert_eq!(parsed.times(5.0), vec![0.0, 1.0]);
    }

    #[test]
    fn random_modes_follow_the_seed() {
        let mut c = preset("energy_identity").unwrap();
        c.initial_data.u0 = DataSpec::RandomModes {
            count: 4,
            amplitude: 1e-3,
            max_index: 3,
        };
        let a = c.initial_fields().unwrap().0;
        let b = c.initial_fields().unwrap().0;
        assert_eq!(a, b);
        c.seed = 9;
        assert_ne!(c.initial_fields().unwrap().0, a);
    }
}
