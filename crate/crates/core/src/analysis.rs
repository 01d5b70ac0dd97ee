//! Decay measurements: regularity-loss indices, norm time series, power-law
//! fits, time-weighted norms and asymptotic-profile errors.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, LpNorm, SpectralField};
use crate::model::MaterialModel;
use crate::solver::SimulationState;
use crate::symbols::SymbolTable;

/// Fraction of a weighted norm carried by the outer third of the lattice
/// above which a Sobolev order is reported as unresolved.
pub const TRUNCATION_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularityIndices {
    pub k: u32,
    pub n: u32,
    pub sigma0: u32,
    pub sigma1: u32,
    pub sigma: u32,
    /// Minimal data regularity `s(n)`; `None` for `n = 1`, where it is not defined.
    pub s_min: Option<u32>,
}

pub fn sigma0(k: u32) -> u32 {
    k + k.div_ceil(2)
}

pub fn sigma1(k: u32, n: u32) -> u32 {
    k + (n + 2 * k - 1) / 4
}

pub fn s_min(n: u32) -> Option<u32> {
    match n {
        0 | 1 => None,
        2 => Some(8),
        3 => Some(6),
        _ => Some(3 * (n / 4) + 5),
    }
}

pub fn regularity_indices(k: u32, n: u32) -> Result<RegularityIndices> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "dimension must be at least 1".into(),
        ));
    }
    let (s0, s1) = (sigma0(k), sigma1(k, n));
    Ok(RegularityIndices {
        k,
        n,
        sigma0: s0,
        sigma1: s1,
        sigma: s0.max(s1),
        s_min: s_min(n),
    })
}

/// Quantity whose norm is tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    U,
    Ut,
    /// `u(t) - M G0(., t+1)`.
    ProfileDeviation,
    /// The linear solution `u_bar` with the same data.
    Linear,
    /// `u - u_bar`.
    Nonlinear,
    /// `u_bar(t) - G0(t) * (u0 + u1)`.
    LinearMinusHeat,
    /// `G0(t) * (u0 + u1 - M phi0)`.
    HeatMinusProfile,
}

impl Quantity {
    pub fn label(&self) -> &'static str {
        match self {
            Quantity::U => "u",
            Quantity::Ut => "u_t",
            Quantity::ProfileDeviation => "u_minus_profile",
            Quantity::Linear => "u_bar",
            Quantity::Nonlinear => "u_minus_u_bar",
            Quantity::LinearMinusHeat => "u_bar_minus_heat",
            Quantity::HeatMinusProfile => "heat_minus_profile",
        }
    }

    const ALL: [Quantity; 7] = [
        Quantity::U,
        Quantity::Ut,
        Quantity::ProfileDeviation,
        Quantity::Linear,
        Quantity::Nonlinear,
        Quantity::LinearMinusHeat,
        Quantity::HeatMinusProfile,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    L2,
    Hs(u32),
    LInf,
    L1,
}

/// `|| d^k quantity ||_norm`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NormDescriptor {
    pub quantity: Quantity,
    pub k: u32,
    pub norm: NormKind,
}

impl NormDescriptor {
    pub fn new(quantity: Quantity, k: u32, norm: NormKind) -> Self {
        NormDescriptor { quantity, k, norm }
    }

    pub fn l2(quantity: Quantity, k: u32) -> Self {
        Self::new(quantity, k, NormKind::L2)
    }

    /// Evaluates the descriptor's norm on a field.
    pub fn measure(&self, f: &SpectralField) -> Result<f64> {
        Ok(match self.norm {
            NormKind::L2 => f.derivative_sobolev_norm(self.k, 0),
            NormKind::Hs(s) => f.derivative_sobolev_norm(self.k, s),
            NormKind::LInf | NormKind::L1 => {
                let p = if self.norm == NormKind::LInf {
                    LpNorm::LInf
                } else {
                    LpNorm::L1
                };
                if self.k == 0 {
                    f.lp_norm(p, false)
                } else {
                    derivative_lp_norm(f, self.k, p)?
                }
            }
        })
    }
}

impl fmt::Display for NormDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let norm = match self.norm {
            NormKind::L2 => "L2".to_string(),
            NormKind::Hs(s) => format!("H{s}"),
            NormKind::LInf => "Linf".to_string(),
            NormKind::L1 => "L1".to_string(),
        };
        write!(f, "{}/k{}/{}", self.quantity.label(), self.k, norm)
    }
}

impl FromStr for NormDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::InvalidArgument(format!(
                "cannot parse norm descriptor `{s}` (expected quantity/kN/NORM)"
            ))
        };
        let parts: Vec<&str> = s.split('/').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let quantity = Quantity::ALL
            .iter()
            .copied()
            .find(|q| q.label() == parts[0])
            .ok_or_else(bad)?;
        let k = parts[1]
            .strip_prefix('k')
            .and_then(|v| v.parse().ok())
            .ok_or_else(bad)?;
        let norm = match parts[2] {
            "L2" => NormKind::L2,
            "Linf" => NormKind::LInf,
            "L1" => NormKind::L1,
            other => NormKind::Hs(
                other
                    .strip_prefix('H')
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(bad)?,
            ),
        };
        Ok(NormDescriptor { quantity, k, norm })
    }
}

impl Serialize for NormDescriptor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for NormDescriptor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Time-stamped norm values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormSeries {
    pub records: Vec<(f64, BTreeMap<NormDescriptor, f64>)>,
}

impl NormSeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record; times must increase strictly and values be finite and nonnegative.
    pub fn push(&mut self, t: f64, values: BTreeMap<NormDescriptor, f64>) -> Result<()> {
        if let Some((last, _)) = self.records.last() {
            if t <= *last {
                return Err(Error::InvalidArgument(format!(
                    "record time {t} does not follow {last}"
                )));
            }
        }
        if let Some((d, v)) = values.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "value {v} for {d} is not a finite nonnegative number"
            )));
        }
        self.records.push((t, values));
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|(t, _)| *t).collect()
    }

    /// `(t, value)` pairs for one descriptor, skipping records that lack it.
    pub fn column(&self, d: &NormDescriptor) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .filter_map(|(t, m)| m.get(d).map(|v| (*t, *v)))
            .collect()
    }

    pub fn descriptors(&self) -> Vec<NormDescriptor> {
        let mut all: Vec<NormDescriptor> = self
            .records
            .iter()
            .flat_map(|(_, m)| m.keys().copied())
            .collect();
        all.sort();
        all.dedup();
        all
    }

    /// Builds a series from a single `(t, value)` column.
    pub fn from_column(d: NormDescriptor, data: &[(f64, f64)]) -> Result<Self> {
        let mut s = Self::new();
        for &(t, v) in data {
            s.push(t, BTreeMap::from([(d, v)]))?;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Slope of `log value` against `log(1 + t)`.
    pub exponent: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    /// Largest absolute deviation of `log value` from the fitted line.
    pub residual: f64,
    pub points: usize,
}

/// Minimum number of records a fit window must contain.
pub const MIN_FIT_POINTS: usize = 8;

pub fn fit_rate(
    series: &NormSeries,
    descriptor: &NormDescriptor,
    window: (f64, f64),
) -> Result<RateFit> {
    fit_power_law(&series.column(descriptor), window)
}

/// Least-squares fit of `value ~ C (1 + t)^p` over the records inside `window`.
pub fn fit_power_law(data: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    if !(window.0 < window.1) {
        return Err(Error::InvalidArgument(format!(
            "empty fit window {window:?}"
        )));
    }
    let pts: Vec<(f64, f64)> = data
        .iter()
        .copied()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidArgument(format!(
            "fit window {window:?} holds {} records, need at least {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "nonpositive value {v} at t = {t}"
        )));
    }
    let xs: Vec<f64> = pts.iter().map(|(t, _)| (1.0 + t).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument(
            "fit window has no spread in time".into(),
        ));
    }
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - exponent * x).abs())
        .fold(0.0, f64::max);
    Ok(RateFit {
        exponent,
        intercept,
        window,
        residual,
        points: pts.len(),
    })
}

/// Default fit window `[t_end / 10, t_end]`.
pub fn default_window(t_end: f64) -> (f64, f64) {
    (t_end / 10.0, t_end)
}

/// `n_points` times spread geometrically over `[t_lo, t_hi]`.
pub fn log_spaced(t_lo: f64, t_hi: f64, n_points: usize) -> Vec<f64> {
    if n_points < 2 {
        return vec![t_lo];
    }
    let (a, b) = ((1.0 + t_lo).ln(), (1.0 + t_hi).ln());
    (0..n_points)
        .map(|i| {
            if i + 1 == n_points {
                t_hi
            } else {
                (a + (b - a) * i as f64 / (n_points - 1) as f64).exp() - 1.0
            }
        })
        .collect()
}

pub fn trapezoid(data: &[(f64, f64)]) -> f64 {
    data.windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum()
}

/// Share of `sum w(|xi|^2)|f^|^2` held by modes with some `|m_i| >= N/3`.
fn outer_band_fraction(f: &SpectralField, order: u32) -> f64 {
    let grid = *f.grid();
    let cut = grid.points_per_axis as i64 / 3;
    let (mut outer, mut total) = (0.0, 0.0);
    for (p, c) in f.coeffs().iter().enumerate() {
        let idx = grid.unravel(p);
        let xi = grid.wavevector(p);
        let k2: f64 = xi.iter().map(|x| x * x).sum();
        let w = k2.powi(order as i32) * c.norm_sqr();
        total += w;
        if (0..grid.dim).any(|a| grid.mode_index(idx[a]).abs() >= cut) {
            outer += w;
        }
    }
    if total > 0.0 {
        outer / total
    } else {
        0.0
    }
}

/// Time-weighted energy and dissipation norms over a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorms {
    pub e_t: f64,
    pub d_t: f64,
    /// Terms whose top derivative order is not resolved by the lattice.
    pub truncated: Vec<String>,
}

fn flag(trunc: &mut Vec<String>, label: String, f: &SpectralField, top: u32) {
    if outer_band_fraction(f, top) > TRUNCATION_THRESHOLD && !trunc.contains(&label) {
        trunc.push(label);
    }
}

/// `E(T)` (discrete sup over checkpoints) and `D(T)` (trapezoid in time).
pub fn weighted_energy_norms(states: &[SimulationState], s: u32) -> Result<WeightedNorms> {
    if s < 2 {
        return Err(Error::InvalidArgument(format!(
            "weighted norms need s >= 2 (got {s})"
        )));
    }
    let mut trunc = Vec::new();
    let ju = (s + 1) / 3;
    let jv = (s - 2) / 3;
    let mut sup_u = vec![0.0f64; ju as usize + 1];
    let mut sup_v = vec![0.0f64; jv as usize + 1];
    let mut sup_v_top = 0.0f64;
    let mut d_u: Vec<Vec<(f64, f64)>> = vec![Vec::new(); ju as usize + 1];
    let mut d_v: Vec<Vec<(f64, f64)>> = vec![Vec::new(); jv as usize + 1];
    let mut d_v_top = Vec::new();
    for st in states {
        let w = 1.0 + st.t;
        for j in 0..=ju {
            let order = s + 1 - 3 * j;
            let v = st.u.derivative_sobolev_norm(2 * j, order).powi(2);
            flag(
                &mut trunc,
                format!("u/k{}/H{}", 2 * j, order),
                &st.u,
                2 * j + order,
            );
            sup_u[j as usize] = sup_u[j as usize].max(w.powi(j as i32) * v);
            if j >= 1 {
                d_u[j as usize].push((st.t, w.powi(j as i32 - 1) * v));
            }
        }
        sup_v_top = sup_v_top.max(st.u_t.sobolev_norm(s).powi(2));
        flag(&mut trunc, format!("u_t/k0/H{s}"), &st.u_t, s);
        d_v_top.push((st.t, st.u_t.sobolev_norm(s - 1).powi(2)));
        for j in 0..=jv {
            let order = s - 3 * j - 1;
            let v = st.u_t.derivative_sobolev_norm(2 * j, order).powi(2);
            sup_v[j as usize] = sup_v[j as usize].max(w.powi(j as i32 + 1) * v);
            let dorder = s - 3 * j - 2;
            let dv = st.u_t.derivative_sobolev_norm(2 * j, dorder).powi(2);
            d_v[j as usize].push((st.t, w.powi(j as i32 + 1) * dv));
        }
    }
    let e2 = sup_u.iter().sum::<f64>() + sup_v_top + sup_v.iter().sum::<f64>();
    let d2 = d_u.iter().map(|c| trapezoid(c)).sum::<f64>()
        + trapezoid(&d_v_top)
        + d_v.iter().map(|c| trapezoid(c)).sum::<f64>();
    Ok(WeightedNorms {
        e_t: e2.sqrt(),
        d_t: d2.sqrt(),
        truncated: trunc,
    })
}

/// Optimal-decay norms `M0(T)` and `M1(T)` as sups over checkpoints.
pub fn optimal_decay_norms(states: &[SimulationState], s: u32, n: u32) -> Result<(f64, f64)> {
    let mut m0 = 0.0;
    let mut m1 = 0.0;
    let mut k = 0;
    loop {
        let sig = regularity_indices(k, n)?.sigma;
        if sig + 1 > s {
            break;
        }
        let p = n as f64 / 8.0 + k as f64 / 4.0;
        m0 += states
            .iter()
            .map(|st| (1.0 + st.t).powf(p) * st.u.derivative_sobolev_norm(k, s - 1 - sig))
            .fold(0.0, f64::max);
        if sig + 4 <= s {
            m1 += states
                .iter()
                .map(|st| {
                    (1.0 + st.t).powf(p + 1.0) * st.u_t.derivative_sobolev_norm(k, s - 4 - sig)
                })
                .fold(0.0, f64::max);
        }
        k += 1;
    }
    Ok((m0, m1))
}

/// Grid `L^inf` norm of the full `k`-th derivative tensor (Frobenius per point).
pub fn derivative_linf(f: &SpectralField, k: u32) -> Result<f64> {
    derivative_lp_norm(f, k, LpNorm::LInf)
}

fn derivative_lp_norm(f: &SpectralField, k: u32, p: LpNorm) -> Result<f64> {
    let grid = *f.grid();
    let samples = derivative_tensor_magnitude(f, k)?;
    Ok(crate::grid::lp_norm_of_samples(&grid, &samples, p, false))
}

/// Pointwise `(sum_{i1..ik} (d_{i1..ik} f)^2)^{1/2}`.
fn derivative_tensor_magnitude(f: &SpectralField, k: u32) -> Result<Vec<f64>> {
    let grid = *f.grid();
    let n = grid.dim;
    let mut acc = vec![0.0; grid.len()];
    let mut counts: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let total = n.pow(k);
    for code in 0..total {
        let mut alpha = vec![0usize; n];
        let mut c = code;
        for _ in 0..k {
            alpha[c % n] += 1;
            c /= n;
        }
        *counts.entry(alpha).or_insert(0.0) += 1.0;
    }
    for (alpha, mult) in counts {
        let d = f.derivative(&alpha)?.to_physical();
        for (a, v) in acc.iter_mut().zip(d) {
            *a += mult * v * v;
        }
    }
    Ok(acc.into_iter().map(f64::sqrt).collect())
}

/// `L(T) = int ||(d^2 u_t, d^3 u)||_inf` (trapezoid) and
/// `N_d(T) = sup (1+t)^d ||d^2 u||_inf`.
pub fn linfty_integrals(states: &[SimulationState], d: f64) -> Result<(f64, f64)> {
    let Some(first) = states.first() else {
        return Ok((0.0, 0.0));
    };
    check_d(d, first.u.grid().dim)?;
    let mut l_data = Vec::with_capacity(states.len());
    let mut hess = Vec::with_capacity(states.len());
    for st in states {
        l_data.push((
            st.t,
            derivative_linf(&st.u_t, 2)? + derivative_linf(&st.u, 3)?,
        ));
        hess.push((st.t, derivative_linf(&st.u, 2)?));
    }
    Ok(linfty_integrals_from_samples(&l_data, &hess, d))
}

fn check_d(d: f64, n: usize) -> Result<()> {
    let threshold = n as f64 / 8.0 + 0.5;
    if d > threshold {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "d = {d} must exceed n/8 + 1/2 = {threshold}"
        )))
    }
}

/// Same as [`linfty_integrals`] from precomputed `L^inf` time series.
pub fn linfty_integrals_from_samples(
    sum_series: &[(f64, f64)],
    hessian_series: &[(f64, f64)],
    d: f64,
) -> (f64, f64) {
    let n_d = hessian_series
        .iter()
        .map(|(t, v)| (1.0 + t).powf(d) * v)
        .fold(0.0, f64::max);
    (trapezoid(sum_series), n_d)
}

/// Default weight exponent `d = n/8 + 0.55`.
pub fn default_d(n: usize) -> f64 {
    n as f64 / 8.0 + 0.55
}

/// Norms of the profile decomposition
/// `u - M G0(t+1) = (u - u_bar) + (u_bar - G0(t)*(u0+u1)) + G0(t)*(u0+u1 - M phi0)`.
pub fn profile_error(
    states: &[SimulationState],
    u0: &SpectralField,
    u1: &SpectralField,
    model: &MaterialModel,
    ks: &[u32],
) -> Result<NormSeries> {
    u0.ensure_same_grid(u1)?;
    let grid = *u0.grid();
    let table = SymbolTable::new(grid, model)?;
    let data = u0 + u1;
    let mass = data.integral();
    let phi0 = table.heat_kernel(1.0);
    let remainder = &data - &phi0.scaled(mass);
    let mut series = NormSeries::new();
    for st in states {
        st.u.ensure_same_grid(u0)?;
        let t = st.t;
        let linear = table.linear_solution(u0, u1, t)?;
        let heat = table.heat_flow(&data, t)?;
        let pieces = [
            (Quantity::U, st.u.clone()),
            (Quantity::Linear, linear.clone()),
            (Quantity::Nonlinear, &st.u - &linear),
            (Quantity::LinearMinusHeat, &linear - &heat),
            (Quantity::HeatMinusProfile, table.heat_flow(&remainder, t)?),
            (
                Quantity::ProfileDeviation,
                &st.u - &table.heat_kernel(t + 1.0).scaled(mass),
            ),
        ];
        let mut rec = BTreeMap::new();
        for &k in ks {
            for (q, f) in &pieces {
                rec.insert(NormDescriptor::l2(*q, k), f.derivative_sobolev_norm(k, 0));
            }
        }
        series.push(t, rec)?;
    }
    Ok(series)
}

/// Data sizes `E0`, `E1`, `E2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataNorms {
    pub s: u32,
    pub u0_h_s_plus_1: f64,
    pub u1_h_s: f64,
    pub l1: f64,
    pub l1_weighted: f64,
    pub e0: f64,
    pub e1: f64,
    pub e2: f64,
}

pub fn data_norms(u0: &SpectralField, u1: &SpectralField, s: u32) -> Result<DataNorms> {
    u0.ensure_same_grid(u1)?;
    let a = u0.sobolev_norm(s + 1);
    let b = u1.sobolev_norm(s);
    let l1 = u0.lp_norm(LpNorm::L1, false) + u1.lp_norm(LpNorm::L1, false);
    let l1w = u0.lp_norm(LpNorm::L1, true) + u1.lp_norm(LpNorm::L1, true);
    let e0 = a + b;
    Ok(DataNorms {
        s,
        u0_h_s_plus_1: a,
        u1_h_s: b,
        l1,
        l1_weighted: l1w,
        e0,
        e1: e0 + l1,
        e2: e0 + l1w,
    })
}

/// One row of an envelope or rate table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub t: f64,
    pub k: u32,
    pub norm: f64,
    pub fitted_rate: f64,
}

/// Writes `t,k,norm,fitted_rate` with 17 significant digits.
pub fn write_rate_table(path: &Path, rows: &[RateRow]) -> Result<()> {
    let mut out = String::from("t,k,norm,fitted_rate\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt17(r.t),
            r.k,
            fmt17(r.norm),
            fmt17(r.fitted_rate)
        ));
    }
    fs::File::create(path)?.write_all(out.as_bytes())?;
    Ok(())
}

/// Floating-point value with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Grid on which the self-similar profile `phi0` is sampled so that its
/// lattice points are those of `grid` scaled by `t^{-1/4}`.
pub fn profile_grid(grid: &GridSpec, t: f64) -> Result<GridSpec> {
    GridSpec::new(
        grid.dim,
        grid.half_length * t.powf(-0.25),
        grid.points_per_axis,
    )
}

/// `max_x |G0(x, t) - t^{-n/4} phi0(x / t^{1/4})|` over the lattice points.
pub fn self_similarity_defect(model: &MaterialModel, grid: &GridSpec, t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "time must be positive (got {t})"
        )));
    }
    let g0 = SymbolTable::new(*grid, model)?.heat_kernel(t).to_physical();
    let scaled = profile_grid(grid, t)?;
    let phi0 = SymbolTable::new(scaled, model)?
        .heat_kernel(1.0)
        .to_physical();
    let factor = t.powf(-(grid.dim as f64) / 4.0);
    Ok(g0
        .iter()
        .zip(&phi0)
        .map(|(a, b)| (a - factor * b).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Diagnostics;
    use std::f64::consts::PI;

    #[test]
    fn index_examples() {
        let r = regularity_indices(0, 2).unwrap();
        assert_eq!((r.sigma0, r.sigma1, r.sigma, r.s_min), (0, 0, 0, Some(8)));
        let r = regularity_indices(2, 2).unwrap();
        assert_eq!((r.sigma0, r.sigma1, r.sigma), (3, 3, 3));
        let r = regularity_indices(3, 3).unwrap();
        assert_eq!((r.sigma0, r.sigma1, r.sigma, r.s_min), (5, 5, 5, Some(6)));
        assert_eq!(s_min(4), Some(8));
        assert_eq!(s_min(8), Some(11));
        assert!(regularity_indices(0, 0).is_err());
    }

    #[test]
    fn sigma_branches_agree_in_three_dimensions() {
        for k in 0..=20 {
            assert_eq!(sigma0(k), sigma1(k, 3));
        }
        for n in 1..=3 {
            for k in 0..=20 {
                assert_eq!(regularity_indices(k, n).unwrap().sigma, sigma0(k));
            }
        }
        for n in 3..=12 {
            for k in 0..=20 {
                assert_eq!(regularity_indices(k, n).unwrap().sigma, sigma1(k, n));
            }
        }
    }

    #[test]
    fn descriptor_round_trip() {
        for d in [
            NormDescriptor::l2(Quantity::U, 0),
            NormDescriptor::new(Quantity::Ut, 2, NormKind::Hs(3)),
            NormDescriptor::new(Quantity::ProfileDeviation, 1, NormKind::LInf),
            NormDescriptor::new(Quantity::HeatMinusProfile, 0, NormKind::L1),
        ] {
            assert_eq!(d.to_string().parse::<NormDescriptor>().unwrap(), d);
        }
        assert!("u/0/L2".parse::<NormDescriptor>().is_err());
        assert!("v/k0/L2".parse::<NormDescriptor>().is_err());
    }

    #[test]
    fn series_rejects_bad_records() {
        let d = NormDescriptor::l2(Quantity::U, 0);
        let mut s = NormSeries::new();
        s.push(1.0, BTreeMap::from([(d, 1.0)])).unwrap();
        assert!(s.push(1.0, BTreeMap::from([(d, 1.0)])).is_err());
        assert!(s.push(2.0, BTreeMap::from([(d, -1.0)])).is_err());
        assert!(s.push(2.0, BTreeMap::from([(d, f64::NAN)])).is_err());
    }

    #[test]
    fn exact_power_law_fit() {
        let ts = log_spaced(1.0, 1000.0, 20);
        let data: Vec<(f64, f64)> = ts.iter().map(|t| (*t, (1.0 + t).powf(-0.25))).collect();
        let fit = fit_power_law(&data, (0.5, 2000.0)).unwrap();
        assert!((fit.exponent + 0.25).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn perturbed_power_law_fit() {
        let ts = log_spaced(1.0, 1e4, 40);
        let data: Vec<(f64, f64)> = ts
            .iter()
            .map(|t| {
                (
                    *t,
                    (1.0 + t).powf(-0.5) * (2.0 + 0.01 * (1.0 + t).ln().sin()),
                )
            })
            .collect();
        let fit = fit_power_law(&data, (1.0, 1e4)).unwrap();
        assert!((fit.exponent + 0.5).abs() < 0.01);
    }

    #[test]
    fn fit_preconditions() {
        let data: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 1.0)).collect();
        assert!(fit_power_law(&data[..5], (0.0, 10.0)).is_err());
        let mut bad = data.clone();
        bad[3].1 = 0.0;
        assert!(fit_power_law(&bad, (0.0, 10.0)).is_err());
        assert!(fit_power_law(&data, (5.0, 5.0)).is_err());
    }

    fn state(t: f64, u: SpectralField, u_t: SpectralField) -> SimulationState {
        SimulationState {
            t,
            u,
            u_t,
            diagnostics: Diagnostics::default(),
        }
    }

    #[test]
    fn zero_trajectory_norms_vanish() {
        let grid = GridSpec::new(2, PI, 16).unwrap();
        let z = SpectralField::zeros(grid);
        let states: Vec<SimulationState> = (0..4)
            .map(|i| state(i as f64, z.clone(), z.clone()))
            .collect();
        let w = weighted_energy_norms(&states, 3).unwrap();
        assert_eq!((w.e_t, w.d_t), (0.0, 0.0));
        assert_eq!(optimal_decay_norms(&states, 3, 2).unwrap(), (0.0, 0.0));
        assert_eq!(linfty_integrals(&states, 0.8).unwrap(), (0.0, 0.0));
        assert!(linfty_integrals(&states, 0.7).is_err());
        assert!(weighted_energy_norms(&states, 1).is_err());
    }

    #[test]
    fn single_checkpoint_weighted_norms() {
        let grid = GridSpec::new(1, PI, 16).unwrap();
        let u = SpectralField::from_fn(grid, |x| x[0].cos()).unwrap();
        let v = SpectralField::from_fn(grid, |x| (2.0 * x[0]).sin()).unwrap();
        let s = 2;
        let w = weighted_energy_norms(&[state(0.0, u.clone(), v.clone())], s).unwrap();
        // j = 0, 1 for u: ||u||_{H^3}^2 + ||d^2 u||_{H^0}^2 ; u_t: ||v||_{H^2}^2 + ||v||_{H^1}^2
        let expect = u.sobolev_norm(3).powi(2)
            + u.derivative_sobolev_norm(2, 0).powi(2)
            + v.sobolev_norm(2).powi(2)
            + v.sobolev_norm(1).powi(2);
        assert!((w.e_t * w.e_t - expect).abs() < 1e-12 * expect);
        assert_eq!(w.d_t, 0.0);
        assert!(w.truncated.is_empty());
    }

    #[test]
    fn truncated_orders_are_flagged() {
        let grid = GridSpec::new(1, PI, 8).unwrap();
        let u = SpectralField::from_fn(grid, |x| (3.0 * x[0]).cos()).unwrap();
        let w = weighted_energy_norms(&[state(0.0, u.clone(), u)], 2).unwrap();
        assert!(!w.truncated.is_empty());
    }

    #[test]
    fn synthetic_linf_integral() {
        // int_0^T (1+t)^{-1.1} = 10 (1 - (1+T)^{-0.1}) approaches 10 only for huge T
        let ts = log_spaced(0.0, 1e30, 8000);
        let series: Vec<(f64, f64)> = ts.iter().map(|t| (*t, (1.0 + t).powf(-1.1))).collect();
        let (l, nd) = linfty_integrals_from_samples(&series, &series, 0.8);
        assert!((l - 10.0).abs() < 0.1, "{l}");
        assert!((nd - 1.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_tensor_of_plane_wave() {
        let grid = GridSpec::new(2, PI, 16).unwrap();
        let f = SpectralField::from_fn(grid, |x| (x[0] + x[1]).cos()).unwrap();
        // d^2 cos(x+y) has four entries of magnitude |cos|, Frobenius 2
        assert!((derivative_linf(&f, 2).unwrap() - 2.0).abs() < 1e-12);
        assert!((derivative_linf(&f, 3).unwrap() - 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn data_norm_examples() {
        let grid = GridSpec::new(1, 12.0, 4096).unwrap();
        let g = SpectralField::from_fn(grid, |x| (-x[0] * x[0] / 2.0).exp()).unwrap();
        let z = SpectralField::zeros(grid);
        let r = data_norms(&g, &z, 0).unwrap();
        assert!((r.l1 - (2.0 * PI).sqrt()).abs() < 1e-5);
        assert!((r.l1_weighted - (2.0 * PI).sqrt() - 2.0).abs() < 1e-5);
        let r2 = data_norms(&g.scaled(2.0), &z, 0).unwrap();
        assert!(
            (r2.e0 - 2.0 * r.e0).abs() < 1e-12 * r.e0 && (r2.e1 - 2.0 * r.e1).abs() < 1e-12 * r.e1
        );
        assert!((r2.e2 - 2.0 * r.e2).abs() < 1e-12 * r.e2);
        let zero = data_norms(&z, &z, 2).unwrap();
        assert_eq!((zero.e0, zero.e1, zero.e2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn self_similarity_on_grid() {
        let grid = GridSpec::new(2, 20.0, 64).unwrap();
        let m = MaterialModel::linear_isotropic(2);
        for t in [1.0, 4.0, 16.0] {
            assert!(self_similarity_defect(&m, &grid, t).unwrap() < 1e-10);
        }
    }

    #[test]
    fn rate_table_format() {
        let dir = std::env::temp_dir().join(format!("rate-table-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rates.csv");
        write_rate_table(
            &path,
            &[RateRow {
                t: 0.1,
                k: 1,
                norm: 1.0 / 3.0,
                fitted_rate: -0.25,
            }],
        )
        .unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let line = text.lines().nth(1).unwrap();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[2].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(fields[1], "1");
        fs::remove_dir_all(&dir).unwrap();
    }
}
