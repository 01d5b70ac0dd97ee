//! The run pipeline: validate, simulate, analyse, write outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use plate_core::analysis::{
    fit_power_law, fmt17, linfty_integrals, optimal_decay_norms, profile_error,
    weighted_energy_norms, write_rate_table, DataNorms, NormDescriptor, NormKind, NormSeries,
    Quantity, RateRow,
};
use plate_core::grid::write_field;
use plate_core::symbols::regularity_envelope;
use plate_core::{
    energy_monitor, EnergyReport, Integrator, SimulationState, SymbolTable, ValidationReport,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{CliError, EXIT_OK};

/// Tolerance handed to the structural model checks.
pub const STRUCTURE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub t: f64,
    pub energy: f64,
    pub dissipation_accum: f64,
    pub max_hessian: f64,
    /// Field stems relative to the run directory.
    pub u_field: Option<String>,
    pub u_t_field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    pub max_residual: f64,
    pub max_residual_per_time: f64,
    pub max_trapezoid_residual: f64,
    /// Largest increase `E(t_{i+1}) - E(t_i)` relative to `E(0)`; negative when `E` decreases.
    pub max_relative_increase: f64,
    pub nonincreasing: bool,
    pub intervals: Vec<EnergyReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRecord {
    pub descriptor: NormDescriptor,
    pub window: (f64, f64),
    pub exponent: f64,
    pub intercept: f64,
    pub residual: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSummary {
    pub s: u32,
    pub e_t: f64,
    pub d_t: f64,
    pub truncated: Vec<String>,
    pub m0: f64,
    pub m1: f64,
    pub d: f64,
    pub l_t: f64,
    pub n_d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSummary {
    pub c: f64,
    pub min_margin: f64,
    pub probe_radii: Vec<f64>,
    pub probe_max_re: Vec<f64>,
    /// Power-law exponent of the smoothing envelope over the first fit window.
    pub smoothing_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolSummary {
    pub max_characteristic_residual: f64,
    /// `max(|G(0)|, |H(0) - 1|, |G'(0) - 1|, |H'(0) + 1|)`.
    pub max_initial_defect: f64,
    /// Largest change of any propagator when the roots are swapped.
    pub max_swap_defect: f64,
}

/// Everything a run records about itself, written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub status: String,
    pub exit_code: i32,
    pub message: Option<String>,
    pub config: RunConfig,
    pub model_validation: Option<ValidationReport>,
    pub data_norms: Option<DataNorms>,
    pub mass: f64,
    pub zero_mean: bool,
    pub steps: usize,
    pub halvings: usize,
    pub checkpoints: Vec<CheckpointRecord>,
    pub energy: Option<EnergySummary>,
    pub rates: Vec<RateRecord>,
    pub weighted: Option<WeightedSummary>,
    pub envelope: Option<EnvelopeSummary>,
    pub symbols: Option<SymbolSummary>,
    pub files: Vec<String>,
}

impl Manifest {
    fn new(cfg: &RunConfig) -> Self {
        Manifest {
            version: env!("CARGO_PKG_VERSION").into(),
            status: "running".into(),
            exit_code: EXIT_OK,
            message: None,
            config: cfg.clone(),
            model_validation: None,
            data_norms: None,
            mass: 0.0,
            zero_mean: cfg.zero_mean(),
            steps: 0,
            halvings: 0,
            checkpoints: Vec::new(),
            energy: None,
            rates: Vec::new(),
            weighted: None,
            envelope: None,
            symbols: None,
            files: Vec::new(),
        }
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))
    }

    pub fn rate(&self, descriptor: &NormDescriptor) -> Option<&RateRecord> {
        self.rates.iter().find(|r| &r.descriptor == descriptor)
    }
}

fn status_of(e: &CliError) -> &'static str {
    match e {
        CliError::Config(_) => "config_error",
        CliError::Structure(_) => "structural_failure",
        CliError::Bound(_) => "bound_violation",
        CliError::Analysis(_) | CliError::Io(_) => "analysis_failure",
    }
}

/// Runs one experiment into `out`.
///
/// Configuration errors are returned before anything is written. Every later
/// failure is recorded in the manifest, whose `exit_code` is the process status.
pub fn run_experiment(cfg: &RunConfig, out: &Path) -> Result<Manifest, CliError> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let mut manifest = Manifest::new(cfg);
    match pipeline(cfg, out, &mut manifest) {
        Ok(()) => manifest.status = "ok".into(),
        Err(e) => {
            manifest.status = status_of(&e).into();
            manifest.exit_code = e.exit_code();
            manifest.message = Some(e.to_string());
        }
    }
    manifest.files.push("manifest.json".into());
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(out.join("manifest.json"), text)?;
    Ok(manifest)
}

fn pipeline(cfg: &RunConfig, out: &Path, manifest: &mut Manifest) -> Result<(), CliError> {
    let grid = cfg.grid;
    let model = cfg.model()?;
    let report = model.validate_structure(STRUCTURE_TOL);
    let passed = report.passed;
    manifest.model_validation = Some(report);
    if !passed {
        return Err(CliError::Structure(format!(
            "model `{}` failed its structural checks",
            model.name()
        )));
    }

    let (u0, u1) = cfg.initial_fields()?;
    manifest.data_norms = Some(plate_core::data_norms(&u0, &u1, cfg.analysis.s)?);
    manifest.mass = u0.integral() + u1.integral();
    let times = cfg.checkpoint_times();

    if cfg.analysis.symbol_checks {
        manifest.symbols = Some(symbol_checks(cfg, &model, &times)?);
    }
    if cfg.analysis.envelope {
        manifest.envelope = Some(envelope(cfg, &model, &times, out, manifest)?);
    }

    let mut integ = Integrator::new(grid, model.clone(), cfg.integrator)?;
    let (traj, failure) = match integ.run(&u0, &u1, cfg.t_end, &times) {
        Ok(t) => (t, None),
        Err(abort) => (abort.partial, Some(CliError::from(abort.error))),
    };
    manifest.steps = traj.steps;
    manifest.halvings = traj.halvings;
    let states = traj.states;
    record_checkpoints(cfg, &states, out, manifest)?;
    if let Some(e) = failure {
        return Err(e);
    }

    manifest.energy = Some(energy_summary(&states));

    let series = norm_series(cfg, &states, &u0, &u1, &model)?;
    write_norms(&series, out, manifest)?;

    if cfg.analysis.weighted_norms {
        let s = cfg.analysis.s;
        let w = weighted_energy_norms(&states, s)?;
        let (m0, m1) = optimal_decay_norms(&states, s, grid.dim as u32)?;
        let d = cfg.d();
        let (l_t, n_d) = linfty_integrals(&states, d)?;
        manifest.weighted = Some(WeightedSummary {
            s,
            e_t: w.e_t,
            d_t: w.d_t,
            truncated: w.truncated,
            m0,
            m1,
            d,
            l_t,
            n_d,
        });
    }

    let mut failures = Vec::new();
    for d in series.descriptors() {
        let column = series.column(&d);
        for window in cfg.fit_windows() {
            match fit_power_law(&column, window) {
                Ok(fit) => manifest.rates.push(RateRecord {
                    descriptor: d,
                    window,
                    exponent: fit.exponent,
                    intercept: fit.intercept,
                    residual: fit.residual,
                    points: fit.points,
                }),
                Err(e) => failures.push(format!("{d} on [{}, {}]: {e}", window.0, window.1)),
            }
        }
    }
    write_rates(&manifest.rates, out)?;
    manifest.files.push("rates.csv".into());
    if !failures.is_empty() {
        return Err(CliError::Analysis(failures.join("; ")));
    }
    Ok(())
}

fn symbol_checks(
    cfg: &RunConfig,
    model: &plate_core::MaterialModel,
    times: &[f64],
) -> Result<SymbolSummary, CliError> {
    let table = SymbolTable::new(cfg.grid, model)?;
    let p0 = table.propagators(0.0);
    let mut initial: f64 = 0.0;
    for i in 0..p0.g.len() {
        initial = initial
            .max(p0.g[i].abs())
            .max((p0.h[i] - 1.0).abs())
            .max((p0.g_dot[i] - 1.0).abs())
            .max((p0.h_dot[i] + 1.0).abs());
    }
    let mut swap: f64 = 0.0;
    for &t in times {
        let a = table.propagators(t);
        let b = table.propagators_swapped(t);
        for (x, y) in [
            (&a.g, &b.g),
            (&a.h, &b.h),
            (&a.g_dot, &b.g_dot),
            (&a.h_dot, &b.h_dot),
        ] {
            for (p, q) in x.iter().zip(y) {
                swap = swap.max((p - q).abs());
            }
        }
    }
    Ok(SymbolSummary {
        max_characteristic_residual: table.max_characteristic_residual(),
        max_initial_defect: initial,
        max_swap_defect: swap,
    })
}

fn envelope(
    cfg: &RunConfig,
    model: &plate_core::MaterialModel,
    times: &[f64],
    out: &Path,
    manifest: &mut Manifest,
) -> Result<EnvelopeSummary, CliError> {
    let env = regularity_envelope(model, 0.1, 40.0, 400, 64, &[1.0, 2.0, 4.0, 8.0, 16.0]);
    let table = SymbolTable::new(cfg.grid, model)?;
    let data: Vec<(f64, f64)> = times
        .iter()
        .map(|&t| (t, table.smoothing_envelope(t)))
        .collect();
    let rate = fit_power_law(&data, cfg.fit_windows()[0])
        .ok()
        .map(|f| f.exponent);
    let rows: Vec<RateRow> = data
        .iter()
        .map(|&(t, v)| RateRow {
            t,
            k: 0,
            norm: v,
            fitted_rate: rate.unwrap_or(f64::NAN),
        })
        .collect();
    write_rate_table(&out.join("envelope.csv"), &rows)?;
    manifest.files.push("envelope.csv".into());
    Ok(EnvelopeSummary {
        c: env.c,
        min_margin: env.min_margin,
        probe_radii: env.probe_radii,
        probe_max_re: env.probe_max_re,
        smoothing_rate: rate,
    })
}

fn record_checkpoints(
    cfg: &RunConfig,
    states: &[SimulationState],
    out: &Path,
    manifest: &mut Manifest,
) -> Result<(), CliError> {
    if cfg.output.fields && !states.is_empty() {
        fs::create_dir_all(out.join("fields"))?;
    }
    for (i, st) in states.iter().enumerate() {
        let mut rec = CheckpointRecord {
            t: st.t,
            energy: st.diagnostics.energy,
            dissipation_accum: st.diagnostics.dissipation_accum,
            max_hessian: st.diagnostics.max_hessian,
            u_field: None,
            u_t_field: None,
        };
        if cfg.output.fields {
            let u = format!("fields/u_{i:04}");
            let ut = format!("fields/u_t_{i:04}");
            write_field(&out.join(&u), &cfg.grid, &st.u.to_physical())?;
            write_field(&out.join(&ut), &cfg.grid, &st.u_t.to_physical())?;
            rec.u_field = Some(u);
            rec.u_t_field = Some(ut);
        }
        manifest.checkpoints.push(rec);
    }
    Ok(())
}

fn energy_summary(states: &[SimulationState]) -> EnergySummary {
    let e0 = states.first().map_or(0.0, |s| s.diagnostics.energy);
    let intervals: Vec<EnergyReport> = states
        .windows(2)
        .map(|w| energy_monitor(&w[0], &w[1], e0))
        .collect();
    let max = |f: fn(&EnergyReport) -> f64| intervals.iter().map(f).fold(0.0, f64::max);
    let scale = if e0 > 0.0 { e0 } else { 1.0 };
    let max_increase = intervals
        .iter()
        .map(|r| (r.energy_after - r.energy_before) / scale)
        .fold(f64::NEG_INFINITY, f64::max);
    EnergySummary {
        max_residual: max(|r| r.residual),
        max_residual_per_time: max(|r| r.residual_per_time),
        max_trapezoid_residual: max(|r| r.trapezoid_residual),
        max_relative_increase: max_increase,
        nonincreasing: max_increase <= 0.0,
        intervals,
    }
}

fn norm_series(
    cfg: &RunConfig,
    states: &[SimulationState],
    u0: &plate_core::SpectralField,
    u1: &plate_core::SpectralField,
    model: &plate_core::MaterialModel,
) -> Result<NormSeries, CliError> {
    let direct = |q: Quantity| matches!(q, Quantity::U | Quantity::Ut);
    let mut profile_ks: Vec<u32> = Vec::new();
    for d in &cfg.analysis.norms {
        if !direct(d.quantity) {
            if d.norm != NormKind::L2 {
                return Err(CliError::Config(format!(
                    "{d}: decomposition quantities support L2 norms only"
                )));
            }
            if !profile_ks.contains(&d.k) {
                profile_ks.push(d.k);
            }
        }
    }
    if cfg.analysis.profile && !profile_ks.contains(&0) {
        profile_ks.push(0);
    }
    let profile = if profile_ks.is_empty() {
        None
    } else {
        Some(profile_error(states, u0, u1, model, &profile_ks)?)
    };
    let mut series = NormSeries::new();
    for (i, st) in states.iter().enumerate() {
        let mut rec = BTreeMap::new();
        for d in cfg.analysis.norms.iter().filter(|d| direct(d.quantity)) {
            let f = if d.quantity == Quantity::U {
                &st.u
            } else {
                &st.u_t
            };
            rec.insert(*d, d.measure(f)?);
        }
        if let Some(p) = &profile {
            let (_, values) = &p.records[i];
            for (d, v) in values {
                let requested = cfg.analysis.norms.contains(d);
                let auto = cfg.analysis.profile
                    && d.k == 0
                    && d.quantity != Quantity::U
                    && !(model.is_linear() && d.quantity == Quantity::Nonlinear);
                if requested || auto {
                    rec.insert(*d, *v);
                }
            }
        }
        series.push(st.t, rec)?;
    }
    Ok(series)
}

fn write_norms(series: &NormSeries, out: &Path, manifest: &mut Manifest) -> Result<(), CliError> {
    let mut csv = String::from("t,descriptor,value\n");
    for (t, values) in &series.records {
        for (d, v) in values {
            let _ = writeln!(csv, "{},{d},{}", fmt17(*t), fmt17(*v));
        }
    }
    fs::write(out.join("norms.csv"), csv)?;
    manifest.files.push("norms.csv".into());
    fs::create_dir_all(out.join("plots"))?;
    for d in series.descriptors() {
        let mut text = String::from("# log(1+t) log(norm)\n");
        for (t, v) in series.column(&d) {
            if v > 0.0 {
                let _ = writeln!(text, "{} {}", fmt17((1.0 + t).ln()), fmt17(v.ln()));
            }
        }
        let name = format!("plots/{}.dat", d.to_string().replace('/', "_"));
        fs::write(out.join(&name), text)?;
        manifest.files.push(name);
    }
    Ok(())
}

fn write_rates(rates: &[RateRecord], out: &Path) -> Result<(), CliError> {
    let mut csv = String::from("descriptor,exponent,residual,window\n");
    for r in rates {
        let _ = writeln!(
            csv,
            "{},{},{},{}..{}",
            r.descriptor,
            fmt17(r.exponent),
            fmt17(r.residual),
            r.window.0,
            r.window.1
        );
    }
    fs::write(out.join("rates.csv"), csv)?;
    Ok(())
}

/// One finished member of a sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub dir: PathBuf,
    pub overrides: Vec<String>,
    pub exit_code: i32,
    pub message: Option<String>,
}

/// Cartesian product of `KEY=V1,V2,...` axes.
pub fn sweep_overrides(axes: &[String]) -> Result<Vec<Vec<String>>, CliError> {
    let mut combos: Vec<Vec<String>> = vec![Vec::new()];
    for axis in axes {
        let (key, values) = axis
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("sweep axis `{axis}` is not KEY=V1,V2,...")))?;
        let mut next = Vec::new();
        for combo in &combos {
            for v in values.split(',') {
                let mut c = combo.clone();
                c.push(format!("{key}={v}"));
                next.push(c);
            }
        }
        combos = next;
    }
    Ok(combos)
}

/// Runs every member of the sweep on `threads` worker threads, writing
/// `run_NNN/` directories and a `sweep.json` summary under `out`.
pub fn sweep(
    base: &RunConfig,
    axes: &[String],
    out: &Path,
    threads: usize,
) -> Result<Vec<SweepEntry>, CliError> {
    let combos = sweep_overrides(axes)?;
    let configs: Vec<RunConfig> = combos
        .iter()
        .map(|o| base.with_overrides(o))
        .collect::<Result<_, _>>()?;
    for c in &configs {
        c.validate()?;
    }
    fs::create_dir_all(out)?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<SweepEntry>>> = Mutex::new(vec![None; configs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..threads.max(1).min(configs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= configs.len() {
                    break;
                }
                let dir = out.join(format!("run_{i:03}"));
                let entry = match run_experiment(&configs[i], &dir) {
                    Ok(m) => SweepEntry {
                        dir: dir.clone(),
                        overrides: combos[i].clone(),
                        exit_code: m.exit_code,
                        message: m.message,
                    },
                    Err(e) => SweepEntry {
                        dir: dir.clone(),
                        overrides: combos[i].clone(),
                        exit_code: e.exit_code(),
                        message: Some(e.to_string()),
                    },
                };
                results.lock().expect("sweep results lock")[i] = Some(entry);
            });
        }
    });
    let entries: Vec<SweepEntry> = results
        .into_inner()
        .expect("sweep results lock")
        .into_iter()
        .map(|e| e.expect("every sweep member ran"))
        .collect();
    fs::write(
        out.join("sweep.json"),
        serde_json::to_string_pretty(&entries).expect("sweep summary serializes"),
    )?;
    Ok(entries)
}
