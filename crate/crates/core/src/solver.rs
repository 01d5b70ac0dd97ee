//! Time integration of the quasi-linear plate equation.
//!
//! In Fourier variables the equation reads
//! `(1+|xi|^2) u'' + u' + q(xi) u + N(u) = 0` with
//! `N = F[sum_ij d_i d_j g^{ij}(d^2 u)]`. The primary scheme applies the linear
//! flow exactly and treats the Duhamel integral
//! `int_0^h K(h - s) N(s) ds`, `K = -G / (1+|xi|^2)`, by Gauss-Legendre
//! quadrature whose stage values are found by Picard iteration.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, SpectralField};
use crate::model::{FluxForm, MaterialModel, NonlinearEvaluator, DEFAULT_HESSIAN_BOUND};
use crate::quadrature::gauss_legendre_unit;
use crate::symbols::{ModePropagator, SymbolTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    DuhamelEtd,
    SemiImplicitCn,
}

fn default_dt() -> f64 {
    0.1
}
fn default_substeps() -> usize {
    3
}
fn default_picard_iters() -> usize {
    3
}
fn default_picard_tol() -> f64 {
    1e-10
}
fn default_dealias() -> f64 {
    2.0 / 3.0
}
fn default_bound() -> f64 {
    DEFAULT_HESSIAN_BOUND
}
fn default_halvings() -> u32 {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Gauss-Legendre nodes per step for the Duhamel integral.
    #[serde(default = "default_substeps")]
    pub quadrature_substeps: usize,
    #[serde(default = "default_picard_iters")]
    pub picard_iters: usize,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_dealias")]
    pub dealias_fraction: f64,
    /// Ceiling on the grid `L^inf` norm of `d^2 u`.
    #[serde(default = "default_bound")]
    pub hessian_bound: f64,
    /// How many times a failing step may be split in half.
    #[serde(default = "default_halvings")]
    pub max_halvings: u32,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: default_dt(),
            scheme: Scheme::default(),
            quadrature_substeps: default_substeps(),
            picard_iters: default_picard_iters(),
            picard_tol: default_picard_tol(),
            dealias_fraction: default_dealias(),
            hessian_bound: default_bound(),
            max_halvings: default_halvings(),
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive (got {})", self.dt));
        }
        if !(self.picard_tol > 0.0) {
            return bad(format!(
                "picard_tol must be positive (got {})",
                self.picard_tol
            ));
        }
        if self.quadrature_substeps == 0 || self.picard_iters == 0 {
            return bad("quadrature_substeps and picard_iters must be at least 1".into());
        }
        if !(self.dealias_fraction > 0.0 && self.dealias_fraction <= 1.0) {
            return bad(format!(
                "dealias_fraction must lie in (0, 1] (got {})",
                self.dealias_fraction
            ));
        }
        if !(self.hessian_bound > 0.0) {
            return bad(format!(
                "hessian_bound must be positive (got {})",
                self.hessian_bound
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Diagnostics {
    pub energy: f64,
    /// `int_0^t ||u_t||^2 ds`.
    pub dissipation_accum: f64,
    pub max_hessian: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationState {
    pub t: f64,
    pub u: SpectralField,
    pub u_t: SpectralField,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub states: Vec<SimulationState>,
    pub steps: usize,
    pub halvings: usize,
}

/// A run stopped early; `partial` holds the checkpoints reached.
#[derive(Debug)]
pub struct RunAbort {
    pub error: Error,
    pub partial: Trajectory,
}

/// Per-step multipliers for one step size.
#[derive(Debug)]
struct StepWeights {
    /// `(A, B)` and `(A', B')` at each stage time `c_i h`.
    stage_u: Vec<[Vec<f64>; 2]>,
    stage_v: Vec<[Vec<f64>; 2]>,
    /// `W[i][j]` maps `N_j` into stage `i`.
    w_u: Vec<Vec<Vec<f64>>>,
    w_v: Vec<Vec<Vec<f64>>>,
    end_u: [Vec<f64>; 2],
    end_v: [Vec<f64>; 2],
    end_wu: Vec<Vec<f64>>,
    end_wv: Vec<Vec<f64>>,
}

/// Owns the symbol table, the nonlinear evaluator and cached step weights.
#[derive(Debug)]
pub struct Integrator {
    grid: GridSpec,
    model: MaterialModel,
    cfg: IntegratorConfig,
    table: SymbolTable,
    evaluator: NonlinearEvaluator,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    cache: HashMap<u64, Arc<StepWeights>>,
    /// Nonlinear term at the current state, reused as the first Picard guess.
    current_n: Option<(f64, SpectralField)>,
    /// Nonlinear term one step back, for the extrapolated scheme.
    previous_n: Option<SpectralField>,
    steps: usize,
    halvings: usize,
}

impl Integrator {
    pub fn new(grid: GridSpec, model: MaterialModel, cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        let table = SymbolTable::new(grid, &model)?;
        let evaluator = NonlinearEvaluator::new(
            grid,
            model.clone(),
            cfg.dealias_fraction,
            FluxForm::Residual,
        )?;
        let (nodes, weights) = gauss_legendre_unit(cfg.quadrature_substeps);
        Ok(Integrator {
            grid,
            model,
            cfg,
            table,
            evaluator,
            nodes,
            weights,
            cache: HashMap::new(),
            current_n: None,
            previous_n: None,
            steps: 0,
            halvings: 0,
        })
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    pub fn model(&self) -> &MaterialModel {
        &self.model
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.table
    }

    fn nonlinear(&self) -> bool {
        !self.model.is_linear()
    }

    /// Builds the initial state; for nonlinear models the data is projected
    /// onto the dealiased modes.
    pub fn initial_state(
        &mut self,
        u0: &SpectralField,
        u1: &SpectralField,
    ) -> Result<SimulationState> {
        if *u0.grid() != self.grid || *u1.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let (u, u_t) = if self.nonlinear() {
            (
                u0.dealias(self.cfg.dealias_fraction),
                u1.dealias(self.cfg.dealias_fraction),
            )
        } else {
            (u0.clone(), u1.clone())
        };
        self.current_n = None;
        self.previous_n = None;
        let mut state = SimulationState {
            t: 0.0,
            u,
            u_t,
            diagnostics: Diagnostics::default(),
        };
        state.diagnostics.max_hessian = self.max_hessian(&state.u);
        state.diagnostics.energy = self.energy(&state.u, &state.u_t);
        Ok(state)
    }

    fn max_hessian(&self, u: &SpectralField) -> f64 {
        self.evaluator.hessian(u).max_norm()
    }

    /// `E = 1/2 ||u_t||_{H^1}^2 + int phi(d^2 u) dx`.
    pub fn energy(&self, u: &SpectralField, u_t: &SpectralField) -> f64 {
        let kinetic = 0.5 * u_t.weighted_energy(|k2| 1.0 + k2);
        kinetic + self.model.potential_integral(&self.evaluator.hessian(u))
    }

    /// Evaluates `N(u)`, failing if the Hessian bound is exceeded at `time`.
    fn evaluate_n(&self, u: &SpectralField, time: f64) -> Result<SpectralField> {
        let term = self.evaluator.evaluate(u)?;
        if term.max_hessian > self.cfg.hessian_bound {
            return Err(Error::BoundViolation {
                time,
                value: term.max_hessian,
                bound: self.cfg.hessian_bound,
            });
        }
        Ok(term.field)
    }

    fn n_at(&mut self, state: &SimulationState) -> Result<SpectralField> {
        if let Some((t, n)) = &self.current_n {
            if *t == state.t {
                return Ok(n.clone());
            }
        }
        let n = self.evaluate_n(&state.u, state.t)?;
        self.current_n = Some((state.t, n.clone()));
        Ok(n)
    }

    fn step_weights(&mut self, h: f64) -> Arc<StepWeights> {
        if let Some(w) = self.cache.get(&h.to_bits()) {
            return w.clone();
        }
        let w = Arc::new(self.build_weights(h));
        if self.cache.len() > 64 {
            self.cache.clear();
        }
        self.cache.insert(h.to_bits(), w.clone());
        w
    }

    fn build_weights(&self, h: f64) -> StepWeights {
        let s = self.nodes.len();
        let len = self.grid.len();
        let c = &self.nodes;
        let w = &self.weights;
        let xi_sq = self.table.xi_sq();
        let lp = self.table.lambda_plus();
        let lm = self.table.lambda_minus();
        let lagrange = |j: usize, x: f64| -> f64 {
            (0..s)
                .filter(|&m| m != j)
                .map(|m| (x - c[m]) / (c[j] - c[m]))
                .product()
        };
        let zeros = || vec![0.0; len];
        let mut out = StepWeights {
            stage_u: (0..s).map(|_| [zeros(), zeros()]).collect(),
            stage_v: (0..s).map(|_| [zeros(), zeros()]).collect(),
            w_u: (0..s).map(|_| (0..s).map(|_| zeros()).collect()).collect(),
            w_v: (0..s).map(|_| (0..s).map(|_| zeros()).collect()).collect(),
            end_u: [zeros(), zeros()],
            end_v: [zeros(), zeros()],
            end_wu: (0..s).map(|_| zeros()).collect(),
            end_wv: (0..s).map(|_| zeros()).collect(),
        };
        // ell[i][l][j] = ell_j(c_i c_l)
        let ell: Vec<Vec<Vec<f64>>> = (0..s)
            .map(|i| {
                (0..s)
                    .map(|l| (0..s).map(|j| lagrange(j, c[i] * c[l])).collect())
                    .collect()
            })
            .collect();
        for p in 0..len {
            let inv_a = 1.0 / (1.0 + xi_sq[p]);
            let prop = |t: f64| ModePropagator::from_roots(lp[p], lm[p], t);
            for i in 0..s {
                let m = prop(c[i] * h);
                out.stage_u[i][0][p] = m.g + m.h;
                out.stage_u[i][1][p] = m.g;
                out.stage_v[i][0][p] = m.g_dot + m.h_dot;
                out.stage_v[i][1][p] = m.g_dot;
                for l in 0..s {
                    let k = prop(c[i] * h * (1.0 - c[l]));
                    let base = c[i] * h * w[l] * inv_a;
                    for j in 0..s {
                        out.w_u[i][j][p] -= base * k.g * ell[i][l][j];
                        out.w_v[i][j][p] -= base * k.g_dot * ell[i][l][j];
                    }
                }
            }
            let m = prop(h);
            out.end_u[0][p] = m.g + m.h;
            out.end_u[1][p] = m.g;
            out.end_v[0][p] = m.g_dot + m.h_dot;
            out.end_v[1][p] = m.g_dot;
            for j in 0..s {
                let k = prop(h * (1.0 - c[j]));
                out.end_wu[j][p] = -h * w[j] * inv_a * k.g;
                out.end_wv[j][p] = -h * w[j] * inv_a * k.g_dot;
            }
        }
        out
    }

    /// One step of size `h` with the configured scheme.
    pub fn step(&mut self, state: &SimulationState, h: f64) -> Result<SimulationState> {
        if *state.u.grid() != self.grid || *state.u_t.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let next = match self.cfg.scheme {
            Scheme::DuhamelEtd => self.step_duhamel(state, h)?,
            Scheme::SemiImplicitCn => self.step_cn(state, h)?,
        };
        self.steps += 1;
        Ok(next)
    }

    fn step_duhamel(&mut self, state: &SimulationState, h: f64) -> Result<SimulationState> {
        let sw = self.step_weights(h);
        let s = self.nodes.len();
        let len = self.grid.len();
        let u = state.u.coeffs();
        let v = state.u_t.coeffs();
        let combine =
            |lin: &[Vec<f64>; 2], forcing: &[&[f64]], ns: &[SpectralField]| -> Vec<Complex64> {
                let mut out: Vec<Complex64> = (0..len)
                    .map(|p| u[p] * lin[0][p] + v[p] * lin[1][p])
                    .collect();
                for (wj, nj) in forcing.iter().zip(ns) {
                    for (o, (w, n)) in out.iter_mut().zip(wj.iter().zip(nj.coeffs())) {
                        *o += n * w;
                    }
                }
                out
            };
        let mut ns: Vec<SpectralField> = if self.nonlinear() {
            let n0 = self.n_at(state)?;
            vec![n0; s]
        } else {
            vec![SpectralField::zeros(self.grid); s]
        };
        if self.nonlinear() {
            let mut converged = false;
            let mut change = f64::INFINITY;
            for _ in 0..self.cfg.picard_iters {
                let mut fresh = Vec::with_capacity(s);
                for i in 0..s {
                    let forcing: Vec<&[f64]> = sw.w_u[i].iter().map(|x| x.as_slice()).collect();
                    let ui = SpectralField::from_coeffs(
                        self.grid,
                        combine(&sw.stage_u[i], &forcing, &ns),
                    )?;
                    fresh.push(self.evaluate_n(&ui, state.t + self.nodes[i] * h)?);
                }
                let mut diff: f64 = 0.0;
                let mut scale: f64 = 0.0;
                for (a, b) in fresh.iter().zip(&ns) {
                    scale = scale.max(a.max_abs_coeff());
                    diff = diff.max((a - b).max_abs_coeff());
                }
                ns = fresh;
                change = if scale > 0.0 { diff / scale } else { diff };
                if diff <= self.cfg.picard_tol * scale {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::PicardDivergence {
                    time: state.t,
                    iterations: self.cfg.picard_iters,
                    change,
                });
            }
        }
        let end_u: Vec<&[f64]> = sw.end_wu.iter().map(|x| x.as_slice()).collect();
        let end_v: Vec<&[f64]> = sw.end_wv.iter().map(|x| x.as_slice()).collect();
        let u_new = SpectralField::from_coeffs(self.grid, combine(&sw.end_u, &end_u, &ns))?;
        let v_new = SpectralField::from_coeffs(self.grid, combine(&sw.end_v, &end_v, &ns))?;
        let mut dissipation = 0.0;
        for i in 0..s {
            let forcing: Vec<&[f64]> = sw.w_v[i].iter().map(|x| x.as_slice()).collect();
            let vi = SpectralField::from_coeffs(self.grid, combine(&sw.stage_v[i], &forcing, &ns))?;
            dissipation += h * self.weights[i] * vi.weighted_energy(|_| 1.0);
        }
        self.finish_step(state, h, u_new, v_new, dissipation)
    }

    fn step_cn(&mut self, state: &SimulationState, h: f64) -> Result<SimulationState> {
        let len = self.grid.len();
        let forcing: Vec<Complex64> = if self.nonlinear() {
            let n_now = self.n_at(state)?;
            let extrapolated = match &self.previous_n {
                Some(prev) => &(&n_now * 1.5) - &(prev * 0.5),
                None => n_now.clone(),
            };
            self.previous_n = Some(n_now);
            extrapolated.into_coeffs()
        } else {
            vec![Complex64::default(); len]
        };
        let xi_sq = self.table.xi_sq();
        let quartic = self.table.quartic();
        let mut u_new = vec![Complex64::default(); len];
        let mut v_new = vec![Complex64::default(); len];
        let half = 0.5 * h;
        for p in 0..len {
            let a = 1.0 + xi_sq[p];
            let (k, d) = (quartic[p] / a, 1.0 / a);
            // y' = [[0, 1], [-k, -d]] y + (0, -N/a)
            let (u, v) = (state.u.coeffs()[p], state.u_t.coeffs()[p]);
            let ru = u + v * half;
            let rv = v + (-k * u - d * v) * half - forcing[p] * (h / a);
            // (I - h/2 A) = [[1, -h/2], [h/2 k, 1 + h/2 d]]
            let det = (1.0 + half * d) + half * half * k;
            u_new[p] = ((1.0 + half * d) * ru + half * rv) / det;
            v_new[p] = (rv - half * k * ru) / det;
        }
        let u_new = SpectralField::from_coeffs(self.grid, u_new)?;
        let v_new = SpectralField::from_coeffs(self.grid, v_new)?;
        let dissipation =
            half * (state.u_t.weighted_energy(|_| 1.0) + v_new.weighted_energy(|_| 1.0));
        self.finish_step(state, h, u_new, v_new, dissipation)
    }

    fn finish_step(
        &mut self,
        state: &SimulationState,
        h: f64,
        u: SpectralField,
        u_t: SpectralField,
        dissipation: f64,
    ) -> Result<SimulationState> {
        let t = state.t + h;
        let max_hessian = if self.nonlinear() {
            let term = self.evaluator.evaluate(&u)?;
            self.current_n = Some((t, term.field));
            term.max_hessian
        } else {
            self.max_hessian(&u)
        };
        if max_hessian > self.cfg.hessian_bound {
            return Err(Error::BoundViolation {
                time: t,
                value: max_hessian,
                bound: self.cfg.hessian_bound,
            });
        }
        Ok(SimulationState {
            t,
            u,
            u_t,
            diagnostics: Diagnostics {
                energy: f64::NAN,
                dissipation_accum: state.diagnostics.dissipation_accum + dissipation,
                max_hessian,
            },
        })
    }

    /// Step of size `h`, split recursively in halves when Picard iteration fails.
    fn robust_step(
        &mut self,
        state: &SimulationState,
        h: f64,
        depth: u32,
    ) -> Result<SimulationState> {
        match self.step(state, h) {
            Err(Error::PicardDivergence { .. }) if depth < self.cfg.max_halvings => {
                self.halvings += 1;
                self.previous_n = None;
                let mid = self.robust_step(state, 0.5 * h, depth + 1)?;
                self.robust_step(&mid, 0.5 * h, depth + 1)
            }
            other => other,
        }
    }

    /// Integrates from `state.t` to `target` with uniform steps no larger than `dt`.
    pub fn advance_to(&mut self, state: &SimulationState, target: f64) -> Result<SimulationState> {
        let span = target - state.t;
        if span < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "cannot integrate backwards from {} to {target}",
                state.t
            )));
        }
        if span == 0.0 {
            return Ok(state.clone());
        }
        let count = ((span / self.cfg.dt) - 1e-9).ceil().max(1.0) as usize;
        let h = span / count as f64;
        let mut cur = state.clone();
        for i in 0..count {
            cur = self.robust_step(&cur, h, 0)?;
            // pin the clock to the uniform grid
            let t = if i + 1 == count {
                target
            } else {
                state.t + (i + 1) as f64 * h
            };
            if let Some((tn, _)) = self.current_n.as_mut() {
                if *tn == cur.t {
                    *tn = t;
                }
            }
            cur.t = t;
        }
        Ok(cur)
    }

    /// Fills the energy diagnostic of a state.
    pub fn record(&self, mut state: SimulationState) -> SimulationState {
        state.diagnostics.energy = self.energy(&state.u, &state.u_t);
        state
    }

    /// Integrates to `t_end`, recording states at the requested checkpoints.
    pub fn run(
        &mut self,
        u0: &SpectralField,
        u1: &SpectralField,
        t_end: f64,
        checkpoints: &[f64],
    ) -> Result<Trajectory, RunAbort> {
        let abort = |error: Error, partial: Trajectory| RunAbort { error, partial };
        let mut traj = Trajectory::default();
        if !(t_end > 0.0) {
            return Err(abort(
                Error::InvalidArgument(format!("t_end must be positive (got {t_end})")),
                traj,
            ));
        }
        if checkpoints.windows(2).any(|w| w[1] <= w[0])
            || checkpoints.iter().any(|&t| !(0.0..=t_end).contains(&t))
        {
            return Err(abort(
                Error::InvalidArgument(
                    "checkpoints must be strictly increasing within [0, t_end]".into(),
                ),
                traj,
            ));
        }
        self.steps = 0;
        self.halvings = 0;
        let mut state = match self.initial_state(u0, u1) {
            Ok(s) => s,
            Err(e) => return Err(abort(e, traj)),
        };
        if state.diagnostics.max_hessian > self.cfg.hessian_bound {
            let e = Error::BoundViolation {
                time: 0.0,
                value: state.diagnostics.max_hessian,
                bound: self.cfg.hessian_bound,
            };
            return Err(abort(e, traj));
        }
        let mut targets: Vec<f64> = checkpoints.to_vec();
        if targets.last().is_none_or(|&t| t < t_end) {
            targets.push(t_end);
        }
        for &target in &targets {
            match self.advance_to(&state, target) {
                Ok(s) => state = s,
                Err(e) => {
                    traj.steps = self.steps;
                    traj.halvings = self.halvings;
                    return Err(abort(e, traj));
                }
            }
            if checkpoints.contains(&target) {
                traj.states.push(self.record(state.clone()));
            }
        }
        traj.steps = self.steps;
        traj.halvings = self.halvings;
        Ok(traj)
    }
}

/// One Duhamel step from `state` with a fresh integrator.
pub fn step_duhamel(
    state: &SimulationState,
    model: &MaterialModel,
    cfg: &IntegratorConfig,
) -> Result<SimulationState> {
    let mut cfg = *cfg;
    cfg.scheme = Scheme::DuhamelEtd;
    let mut integ = Integrator::new(*state.u.grid(), model.clone(), cfg)?;
    let mut next = integ.step(state, cfg.dt)?;
    next.diagnostics.energy = integ.energy(&next.u, &next.u_t);
    Ok(next)
}

/// Convenience wrapper around [`Integrator::run`].
pub fn run(
    u0: &SpectralField,
    u1: &SpectralField,
    model: &MaterialModel,
    cfg: &IntegratorConfig,
    t_end: f64,
    checkpoints: &[f64],
) -> Result<Trajectory, RunAbort> {
    let mut integ = Integrator::new(*u0.grid(), model.clone(), *cfg).map_err(|error| RunAbort {
        error,
        partial: Trajectory::default(),
    })?;
    integ.run(u0, u1, t_end, checkpoints)
}

/// Energy balance between two checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t_before: f64,
    pub t_after: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    /// `int ||u_t||^2` over the interval as accumulated by the integrator.
    pub dissipation: f64,
    /// `|dE + dissipation| / E(0)`.
    pub residual: f64,
    pub residual_per_time: f64,
    /// Same balance with the dissipation replaced by the two-point trapezoid rule.
    pub trapezoid_residual: f64,
    /// `1/2 ||u||^2 + <u_t, u - Delta u>` at both ends.
    pub lyapunov_before: f64,
    pub lyapunov_after: f64,
}

/// `1/2 ||u||^2 + <u_t, u - Delta u>`.
pub fn lyapunov_functional(u: &SpectralField, u_t: &SpectralField) -> f64 {
    let grid = u.grid();
    let mut cross = 0.0;
    for (p, (a, b)) in u.coeffs().iter().zip(u_t.coeffs()).enumerate() {
        let xi = grid.wavevector(p);
        let k2: f64 = xi.iter().map(|x| x * x).sum();
        cross += (1.0 + k2) * (b.conj() * a).re;
    }
    0.5 * u.weighted_energy(|_| 1.0) + cross / grid.volume()
}

pub fn energy_monitor(
    before: &SimulationState,
    after: &SimulationState,
    reference_energy: f64,
) -> EnergyReport {
    let d_e = after.diagnostics.energy - before.diagnostics.energy;
    let dissipation = after.diagnostics.dissipation_accum - before.diagnostics.dissipation_accum;
    let dt = after.t - before.t;
    let scale = if reference_energy > 0.0 {
        reference_energy
    } else {
        1.0
    };
    let trapezoid =
        0.5 * dt * (before.u_t.weighted_energy(|_| 1.0) + after.u_t.weighted_energy(|_| 1.0));
    let residual = (d_e + dissipation).abs() / scale;
    EnergyReport {
        t_before: before.t,
        t_after: after.t,
        energy_before: before.diagnostics.energy,
        energy_after: after.diagnostics.energy,
        dissipation,
        residual,
        residual_per_time: if dt > 0.0 { residual / dt } else { 0.0 },
        trapezoid_residual: (d_e + trapezoid).abs() / scale,
        lyapunov_before: lyapunov_functional(&before.u, &before.u_t),
        lyapunov_after: lyapunov_functional(&after.u, &after.u_t),
    }
}

/// `int phi(d^2 u) dx / sum_ij ||u_{x_i x_j}||^2`; zero for a field without curvature.
pub fn positivity_check(model: &MaterialModel, u: &SpectralField) -> Result<f64> {
    let eval = NonlinearEvaluator::new(*u.grid(), model.clone(), 1.0, FluxForm::Residual)?;
    let hess = eval.hessian(u);
    let denom = hess.l2_norm_sq();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(model.potential_integral(&hess) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian(grid: GridSpec, amp: f64, width: f64) -> SpectralField {
        SpectralField::from_fn(grid, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            amp * (-r2 / (2.0 * width * width)).exp()
        })
        .unwrap()
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = IntegratorConfig::default();
        assert_eq!(cfg.dt, 0.1);
        assert_eq!(cfg.quadrature_substeps, 3);
        assert_eq!(cfg.picard_iters, 3);
        assert_eq!(cfg.picard_tol, 1e-10);
        assert!(cfg.validate().is_ok());
        let parsed: IntegratorConfig =
            serde_json::from_str(r#"{"scheme": "semi_implicit_cn"}"#).unwrap();
        assert_eq!(parsed.scheme, Scheme::SemiImplicitCn);
        assert!(serde_json::from_str::<IntegratorConfig>(r#"{"dtt": 0.1}"#).is_err());
        for bad in [
            IntegratorConfig { dt: 0.0, ..cfg },
            IntegratorConfig {
                picard_tol: 0.0,
                ..cfg
            },
            IntegratorConfig {
                dealias_fraction: 1.5,
                ..cfg
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn linear_step_matches_propagators() {
        let grid = GridSpec::new(2, 8.0, 32).unwrap();
        let model = MaterialModel::linear_isotropic(2);
        let u0 = gaussian(grid, 0.05, 1.5);
        let u1 = gaussian(grid, -0.02, 2.0);
        let mut integ = Integrator::new(grid, model.clone(), IntegratorConfig::default()).unwrap();
        let s0 = integ.initial_state(&u0, &u1).unwrap();
        let s1 = integ.step(&s0, 0.1).unwrap();
        let table = SymbolTable::new(grid, &model).unwrap();
        let (u, v) = table.linear_state(&u0, &u1, 0.1).unwrap();
        assert!((&s1.u - &u).max_abs_coeff() <= 1e-10 * u.max_abs_coeff());
        assert!((&s1.u_t - &v).max_abs_coeff() <= 1e-10 * u.max_abs_coeff());
    }

    #[test]
    fn zero_data_stays_zero() {
        let grid = GridSpec::new(2, PI, 16).unwrap();
        for scheme in [Scheme::DuhamelEtd, Scheme::SemiImplicitCn] {
            let cfg = IntegratorConfig {
                scheme,
                ..Default::default()
            };
            let z = SpectralField::zeros(grid);
            let traj = run(
                &z,
                &z,
                &MaterialModel::quartic(2),
                &cfg,
                2.0,
                &[0.0, 1.0, 2.0],
            )
            .unwrap();
            for s in &traj.states {
                assert_eq!(s.u.max_abs_coeff(), 0.0);
                assert_eq!(s.u_t.max_abs_coeff(), 0.0);
                assert_eq!(s.diagnostics.energy, 0.0);
            }
        }
    }

    #[test]
    fn checkpoints_are_hit_exactly() {
        let grid = GridSpec::new(1, 10.0, 32).unwrap();
        let u0 = gaussian(grid, 0.01, 1.0);
        let z = SpectralField::zeros(grid);
        let times = [0.0, 0.25, 1.0, 1.33];
        let traj = run(
            &u0,
            &z,
            &MaterialModel::linear_isotropic(1),
            &IntegratorConfig::default(),
            2.0,
            &times,
        )
        .unwrap();
        let got: Vec<f64> = traj.states.iter().map(|s| s.t).collect();
        assert_eq!(got, times);
        assert!(run(
            &u0,
            &z,
            &MaterialModel::linear_isotropic(1),
            &IntegratorConfig::default(),
            2.0,
            &[1.0, 0.5]
        )
        .is_err());
    }

    #[test]
    fn large_data_trips_the_bound() {
        let grid = GridSpec::new(2, 8.0, 32).unwrap();
        let u0 = gaussian(grid, 10.0, 1.5);
        let z = SpectralField::zeros(grid);
        let err = run(
            &u0,
            &z,
            &MaterialModel::quartic(2),
            &IntegratorConfig::default(),
            1.0,
            &[1.0],
        )
        .unwrap_err();
        assert!(matches!(err.error, Error::BoundViolation { .. }));
        assert!(err.partial.states.is_empty());
    }

    #[test]
    fn zero_mode_is_exact_in_nonlinear_runs() {
        let grid = GridSpec::new(2, 6.0, 32).unwrap();
        let u0 = gaussian(grid, 0.02, 1.5);
        let u1 = gaussian(grid, 0.01, 1.0);
        let traj = run(
            &u0,
            &u1,
            &MaterialModel::quartic(2),
            &IntegratorConfig::default(),
            3.0,
            &[1.0, 3.0],
        )
        .unwrap();
        let (a, b) = (u0.coeffs()[0].re, u1.coeffs()[0].re);
        for s in &traj.states {
            let exact = (1.0 - (-s.t).exp()) * (a + b) + (-s.t).exp() * a;
            assert!(
                (s.u.coeffs()[0].re - exact).abs() < 1e-12 * exact.abs(),
                "{}",
                s.t
            );
        }
    }

    #[test]
    fn positivity_ratio_for_quadratic_and_quartic() {
        let grid = GridSpec::new(2, PI, 16).unwrap();
        let u =
            SpectralField::from_fn(grid, |x| x[0].cos() + 0.5 * (x[0] + 2.0 * x[1]).sin()).unwrap();
        let r = positivity_check(&MaterialModel::linear_isotropic(2), &u).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        let tiny = positivity_check(&MaterialModel::quartic(2), &u.scaled(1e-4)).unwrap();
        assert!((tiny - 0.5).abs() < 1e-7);
        let hess_max =
            NonlinearEvaluator::new(grid, MaterialModel::quartic(2), 1.0, FluxForm::Residual)
                .unwrap()
                .hessian(&u)
                .max_norm();
        let r = positivity_check(&MaterialModel::quartic(2), &u.scaled(0.1 / hess_max)).unwrap();
        assert!(r > 0.5 && r < 0.51, "{r}");
        assert_eq!(
            positivity_check(&MaterialModel::quartic(2), &SpectralField::zeros(grid)).unwrap(),
            0.0
        );
    }

    #[test]
    fn energy_monitor_on_linear_mode() {
        let grid = GridSpec::new(1, PI, 16).unwrap();
        let u0 = SpectralField::from_fn(grid, |x| 0.01 * (2.0 * x[0]).cos()).unwrap();
        let z = SpectralField::zeros(grid);
        let traj = run(
            &u0,
            &z,
            &MaterialModel::linear_isotropic(1),
            &IntegratorConfig::default(),
            4.0,
            &[0.0, 2.0, 4.0],
        )
        .unwrap();
        let e0 = traj.states[0].diagnostics.energy;
        for pair in traj.states.windows(2) {
            let rep = energy_monitor(&pair[0], &pair[1], e0);
            assert!(rep.residual < 1e-8, "{rep:?}");
            assert!(rep.energy_after <= rep.energy_before);
        }
        let zero = SimulationState {
            t: 0.0,
            u: z.clone(),
            u_t: z.clone(),
            diagnostics: Diagnostics::default(),
        };
        let rep = energy_monitor(&zero, &zero, 0.0);
        assert_eq!(rep.residual, 0.0);
        assert_eq!(rep.lyapunov_after, 0.0);
    }
}
