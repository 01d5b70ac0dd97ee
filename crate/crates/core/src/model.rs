//! Constitutive laws `b^{ij}(V)`, their potentials and structural checks.
//!
//! Matrices are stored as fixed `3 x 3` arrays; only the leading `dim x dim`
//! block is meaningful.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dealias_mask, GridSpec, SpectralField};

pub type Mat = [[f64; 3]; 3];
pub type Tensor4 = [[[[f64; 3]; 3]; 3]; 3];

pub const ZERO_MAT: Mat = [[0.0; 3]; 3];
pub const ZERO_TENSOR: Tensor4 = [[[[0.0; 3]; 3]; 3]; 3];

/// Step of the central differences used when no analytic tangent exists.
pub const TANGENT_FD_STEP: f64 = 1e-5;

/// Default a-priori bound on `|d^2 u|_inf`.
pub const DEFAULT_HESSIAN_BOUND: f64 = 0.1;

/// A flux law `V -> b(V)` deriving from a free energy `phi(V)`.
pub trait Constitutive: Send + Sync + Debug {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn potential(&self, v: &Mat) -> f64;
    fn flux(&self, v: &Mat) -> Mat;

    /// Analytic `b^{ij}_{ab}(V)`, when the law provides one.
    fn tangent(&self, _v: &Mat) -> Option<Tensor4> {
        None
    }

    /// True when `b` is linear in `V`, so the residual `g` vanishes.
    fn is_linear(&self) -> bool {
        false
    }
}

/// `phi(V) = offset + 1/2 sum C^{ij}_{ab} V_ij V_ab`, `b = C : V`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticLaw {
    pub label: String,
    pub dim: usize,
    pub tensor: Tensor4,
    pub phi_offset: f64,
}

impl QuadraticLaw {
    /// `C^{ij}_{ab} = scale * delta_ij delta_ab`, i.e. `phi = scale/2 (tr V)^2`.
    pub fn isotropic(dim: usize, scale: f64) -> Self {
        let mut tensor = ZERO_TENSOR;
        for i in 0..dim {
            for a in 0..dim {
                tensor[i][i][a][a] = scale;
            }
        }
        QuadraticLaw {
            label: "linear_isotropic".into(),
            dim,
            tensor,
            phi_offset: 0.0,
        }
    }

    /// Isotropic tensor with `extra` added to `C^{11}_{11}`.
    pub fn anisotropic(dim: usize, extra: f64) -> Self {
        let mut law = Self::isotropic(dim, 1.0);
        law.tensor[0][0][0][0] += extra;
        law.label = "anisotropic".into();
        law
    }
}

impl Constitutive for QuadraticLaw {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn potential(&self, v: &Mat) -> f64 {
        self.phi_offset + 0.5 * double_contract(&self.tensor, v, v, self.dim)
    }

    fn flux(&self, v: &Mat) -> Mat {
        contract(&self.tensor, v, self.dim)
    }

    fn tangent(&self, _v: &Mat) -> Option<Tensor4> {
        Some(self.tensor)
    }

    fn is_linear(&self) -> bool {
        true
    }
}

/// `phi(V) = 1/2 |V|^2 + beta/4 |V|^4` with the Frobenius norm.
#[derive(Debug, Clone, PartialEq)]
pub struct QuarticLaw {
    pub dim: usize,
    pub beta: f64,
}

impl Constitutive for QuarticLaw {
    fn name(&self) -> String {
        "quartic".into()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn potential(&self, v: &Mat) -> f64 {
        let s = frobenius_sq(v, self.dim);
        0.5 * s + 0.25 * self.beta * s * s
    }

    fn flux(&self, v: &Mat) -> Mat {
        let f = 1.0 + self.beta * frobenius_sq(v, self.dim);
        let mut out = ZERO_MAT;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[i][j] = f * v[i][j];
            }
        }
        out
    }

    fn tangent(&self, v: &Mat) -> Option<Tensor4> {
        let n = self.dim;
        let f = 1.0 + self.beta * frobenius_sq(v, n);
        let mut t = ZERO_TENSOR;
        for i in 0..n {
            for j in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        let sym = 0.5
                            * (f64::from(u8::from(i == a && j == b))
                                + f64::from(u8::from(i == b && j == a)));
                        t[i][j][a][b] = f * sym + 2.0 * self.beta * v[i][j] * v[a][b];
                    }
                }
            }
        }
        Some(t)
    }
}

/// A constitutive law together with its tangent at the origin.
#[derive(Debug, Clone)]
pub struct MaterialModel {
    law: Arc<dyn Constitutive>,
    origin_tangent: Tensor4,
}

impl MaterialModel {
    pub fn new<L: Constitutive + 'static>(law: L) -> Self {
        Self::from_arc(Arc::new(law))
    }

    pub fn from_arc(law: Arc<dyn Constitutive>) -> Self {
        let origin_tangent = law
            .tangent(&ZERO_MAT)
            .unwrap_or_else(|| fd_tangent(law.as_ref(), &ZERO_MAT));
        MaterialModel {
            law,
            origin_tangent,
        }
    }

    pub fn linear_isotropic(dim: usize) -> Self {
        Self::new(QuadraticLaw::isotropic(dim, 1.0))
    }

    pub fn quartic(dim: usize) -> Self {
        Self::new(QuarticLaw { dim, beta: 1.0 })
    }

    pub fn anisotropic(dim: usize, extra: f64) -> Self {
        Self::new(QuadraticLaw::anisotropic(dim, extra))
    }

    /// Looks up a built-in law by name.
    ///
    /// | name | parameters |
    /// |------|------------|
    /// | `linear_isotropic` | `scale` (1), `phi_offset` (0) |
    /// | `anisotropic` | `extra` (1) |
    /// | `quartic` | `beta` (1) |
    pub fn from_name(name: &str, dim: usize, params: &BTreeMap<String, f64>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!(
                "unsupported dimension {dim}"
            )));
        }
        let allowed: &[&str] = match name {
            "linear_isotropic" => &["scale", "phi_offset"],
            "anisotropic" => &["extra"],
            "quartic" => &["beta"],
            other => {
                return Err(Error::InvalidArgument(format!("unknown model `{other}`")));
            }
        };
        if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidArgument(format!(
                "model `{name}` has no parameter `{bad}` (allowed: {})",
                allowed.join(", ")
            )));
        }
        let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
        Ok(match name {
            "linear_isotropic" => {
                let mut law = QuadraticLaw::isotropic(dim, get("scale", 1.0));
                law.phi_offset = get("phi_offset", 0.0);
                Self::new(law)
            }
            "anisotropic" => Self::new(QuadraticLaw::anisotropic(dim, get("extra", 1.0))),
            _ => Self::new(QuarticLaw {
                dim,
                beta: get("beta", 1.0),
            }),
        })
    }

    pub fn name(&self) -> String {
        self.law.name()
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    pub fn is_linear(&self) -> bool {
        self.law.is_linear()
    }

    pub fn law(&self) -> &dyn Constitutive {
        self.law.as_ref()
    }

    pub fn potential(&self, v: &Mat) -> f64 {
        self.law.potential(v)
    }

    pub fn flux(&self, v: &Mat) -> Mat {
        self.law.flux(v)
    }

    /// `b^{ij}_{ab}(V)`: analytic when available, central differences otherwise.
    pub fn tangent(&self, v: &Mat) -> Tensor4 {
        self.law
            .tangent(v)
            .unwrap_or_else(|| fd_tangent(self.law.as_ref(), v))
    }

    pub fn origin_tangent(&self) -> &Tensor4 {
        &self.origin_tangent
    }

    /// `g^{ij}(V) = b^{ij}(V) - sum b^{ij}_{ab}(O) V_ab`.
    pub fn residual_flux(&self, v: &Mat) -> Mat {
        let n = self.dim();
        if self.is_linear() {
            return ZERO_MAT;
        }
        let b = self.flux(v);
        let lin = contract(&self.origin_tangent, v, n);
        let mut g = ZERO_MAT;
        for i in 0..n {
            for j in 0..n {
                g[i][j] = b[i][j] - lin[i][j];
            }
        }
        g
    }

    /// `sum b^{ij}_{ab}(O) xi_i xi_j xi_a xi_b = gamma(xi/|xi|) |xi|^4`.
    pub fn quartic_form(&self, xi: &[f64]) -> f64 {
        quartic_form(&self.origin_tangent, xi, self.dim())
    }

    /// `gamma(omega)` for a unit direction.
    pub fn gamma_of_direction(&self, omega: &[f64]) -> Result<f64> {
        if omega.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "direction has {} components, model dimension is {}",
                omega.len(),
                self.dim()
            )));
        }
        let norm = omega.iter().map(|w| w * w).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::NonUnitDirection(norm));
        }
        Ok(self.quartic_form(omega))
    }

    /// Minimum of `gamma` over the unit sphere from `samples` quasi-uniform
    /// directions plus one local refinement pass.
    pub fn gamma_min(&self, samples: usize) -> Result<f64> {
        if samples < 100 {
            return Err(Error::InvalidArgument(format!(
                "gamma_min needs at least 100 samples (got {samples})"
            )));
        }
        let n = self.dim();
        let g = |w: &[f64]| self.quartic_form(w);
        let min = match n {
            1 => g(&[1.0]),
            2 => {
                // gamma is even, so half a turn suffices
                let step = PI / samples as f64;
                let (best, _) = (0..samples)
                    .map(|k| {
                        let th = k as f64 * step;
                        (th, g(&[th.cos(), th.sin()]))
                    })
                    .fold(
                        (0.0, f64::INFINITY),
                        |acc, x| if x.1 < acc.1 { x } else { acc },
                    );
                let f = |th: f64| g(&[th.cos(), th.sin()]);
                golden_section_min(f, best - step, best + step, 1e-12)
            }
            _ => {
                let golden = PI * (3.0 - 5f64.sqrt());
                let mut best = ([0.0, 0.0, 1.0], f64::INFINITY);
                for i in 0..samples {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / samples as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * i as f64;
                    let w = [r * phi.cos(), r * phi.sin(), z];
                    let v = g(&w);
                    if v < best.1 {
                        best = (w, v);
                    }
                }
                refine_on_sphere(&g, best.0, (4.0 * PI / samples as f64).sqrt())
            }
        };
        if min > 0.0 {
            Ok(min)
        } else {
            Err(Error::StructureViolation(format!(
                "gamma(omega) attains {min:.6e} <= 0 on the unit sphere"
            )))
        }
    }

    /// Checks normalization, tangent symmetries, gradient consistency,
    /// quadratic smallness of `g` and positivity of `gamma`.
    pub fn validate_structure(&self, tol: f64) -> ValidationReport {
        let n = self.dim();
        let phi0 = self.potential(&ZERO_MAT);
        let b0 = self.flux(&ZERO_MAT);
        let flux0 = max_abs_mat(&b0, n);

        let samples = sample_matrices(n, 0.1, 8, 17);
        let mut symmetry: f64 = symmetry_residual(&self.origin_tangent, n);
        let mut gradient: f64 = 0.0;
        let mut tangent_fd: Option<f64> = None;
        for v in &samples {
            let t = self.tangent(v);
            symmetry = symmetry.max(symmetry_residual(&t, n));
            let b = self.flux(v);
            let grad = fd_gradient(self.law.as_ref(), v);
            gradient = gradient.max(max_abs_diff_mat(&b, &grad, n));
            if self.law.tangent(v).is_some() {
                let fd = fd_tangent(self.law.as_ref(), v);
                let d = max_abs_diff_tensor(&t, &fd, n);
                tangent_fd = Some(tangent_fd.map_or(d, |x: f64| x.max(d)));
            }
        }

        // ||g(eps V)|| / (eps |V|)^2 must stay bounded as eps -> 0
        let mut ratios = Vec::new();
        for eps in [1e-1, 1e-2, 1e-3] {
            let mut worst: f64 = 0.0;
            for v in &samples {
                let sv = scale_mat(v, eps, n);
                let g = self.residual_flux(&sv);
                let denom = frobenius_sq(&sv, n);
                if denom > 0.0 {
                    worst = worst.max(frobenius_sq(&g, n).sqrt() / denom);
                }
            }
            ratios.push(worst);
        }
        let residual_ratio = ratios.iter().copied().fold(0.0, f64::max);
        let residual_ok = ratios[2] <= 10.0 * ratios[0] + 1e-6;

        let gamma = self.gamma_min(if n == 1 { 100 } else { 2000 });
        let (gamma_min, gamma_ok) = match gamma {
            Ok(g) => (g, true),
            Err(_) => (self.raw_gamma_min(), false),
        };

        let normalization_ok = phi0.abs() <= tol && flux0 <= tol;
        let symmetry_ok = symmetry <= tol;
        let gradient_ok = gradient <= tol;
        let tangent_ok = tangent_fd.is_none_or(|d| d <= tol.max(1e-6));
        ValidationReport {
            model: self.name(),
            dim: n,
            tolerance: tol,
            phi_at_origin: phi0,
            flux_at_origin: flux0,
            normalization_ok,
            symmetry_residual: symmetry,
            symmetry_ok,
            gradient_residual: gradient,
            gradient_ok,
            tangent_fd_residual: tangent_fd,
            tangent_ok,
            residual_quadratic_ratio: residual_ratio,
            residual_ok,
            gamma_min,
            ellipticity_constant: gamma_min,
            gamma_ok,
            passed: normalization_ok
                && symmetry_ok
                && gradient_ok
                && tangent_ok
                && residual_ok
                && gamma_ok,
        }
    }

    /// Plain sampled minimum of `gamma` without the positivity requirement.
    fn raw_gamma_min(&self) -> f64 {
        let n = self.dim();
        match n {
            1 => self.quartic_form(&[1.0]),
            2 => (0..720)
                .map(|k| {
                    let th = k as f64 * PI / 720.0;
                    self.quartic_form(&[th.cos(), th.sin()])
                })
                .fold(f64::INFINITY, f64::min),
            _ => (0..4000)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / 4000.0;
                    let r = (1.0 - z * z).sqrt();
                    let phi = PI * (3.0 - 5f64.sqrt()) * i as f64;
                    self.quartic_form(&[r * phi.cos(), r * phi.sin(), z])
                })
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// `int phi(d^2 u) dx` by lattice quadrature.
    pub fn potential_integral(&self, hessian: &HessianSamples) -> f64 {
        let mut total = 0.0;
        for p in 0..hessian.len() {
            total += self.potential(&hessian.at(p));
        }
        total * hessian.grid.cell_volume()
    }
}

/// Outcome of [`MaterialModel::validate_structure`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub model: String,
    pub dim: usize,
    pub tolerance: f64,
    pub phi_at_origin: f64,
    pub flux_at_origin: f64,
    pub normalization_ok: bool,
    pub symmetry_residual: f64,
    pub symmetry_ok: bool,
    pub gradient_residual: f64,
    pub gradient_ok: bool,
    /// Analytic tangent against central differences of the flux.
    pub tangent_fd_residual: Option<f64>,
    pub tangent_ok: bool,
    pub residual_quadratic_ratio: f64,
    pub residual_ok: bool,
    pub gamma_min: f64,
    pub ellipticity_constant: f64,
    pub gamma_ok: bool,
    pub passed: bool,
}

/// Physical samples of the Hessian `d^2 u`, one array per entry `i <= j`.
#[derive(Debug, Clone)]
pub struct HessianSamples {
    pub grid: GridSpec,
    entries: Vec<Vec<f64>>,
}

impl HessianSamples {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn at(&self, p: usize) -> Mat {
        let n = self.grid.dim;
        let mut v = ZERO_MAT;
        let mut e = 0;
        for i in 0..n {
            for j in i..n {
                v[i][j] = self.entries[e][p];
                v[j][i] = self.entries[e][p];
                e += 1;
            }
        }
        v
    }

    /// `max_x |d^2 u(x)|` with the Frobenius norm.
    pub fn max_norm(&self) -> f64 {
        (0..self.len())
            .map(|p| frobenius_sq(&self.at(p), self.grid.dim).sqrt())
            .fold(0.0, f64::max)
    }

    /// `sum_ij || u_{x_i x_j} ||_{L^2}^2` by lattice quadrature.
    pub fn l2_norm_sq(&self) -> f64 {
        (0..self.len())
            .map(|p| frobenius_sq(&self.at(p), self.grid.dim))
            .sum::<f64>()
            * self.grid.cell_volume()
    }
}

/// Which flux the pseudospectral divergence is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FluxForm {
    /// `g^{ij}`, the part beyond the linearization.
    #[default]
    Residual,
    /// The full `b^{ij}`.
    Full,
}

/// Result of a nonlinear term evaluation.
#[derive(Debug, Clone)]
pub struct NonlinearTerm {
    /// Coefficients of `sum_ij d_i d_j g^{ij}(d^2 u)`.
    pub field: SpectralField,
    pub max_hessian: f64,
}

/// Pseudospectral evaluator of `sum_ij d_i d_j g^{ij}(d^2 u)` bound to one grid.
#[derive(Debug, Clone)]
pub struct NonlinearEvaluator {
    grid: GridSpec,
    model: MaterialModel,
    dealias_fraction: f64,
    form: FluxForm,
    keep: Vec<bool>,
    /// `-xi_i xi_j` per entry `i <= j`, zero on odd Nyquist factors.
    hess_symbols: Vec<Vec<f64>>,
}

impl NonlinearEvaluator {
    pub fn new(
        grid: GridSpec,
        model: MaterialModel,
        dealias_fraction: f64,
        form: FluxForm,
    ) -> Result<Self> {
        if model.dim() != grid.dim {
            return Err(Error::InvalidArgument(format!(
                "model dimension {} does not match grid dimension {}",
                model.dim(),
                grid.dim
            )));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "dealias fraction must lie in (0, 1] (got {dealias_fraction})"
            )));
        }
        let keep = if dealias_fraction >= 1.0 {
            vec![true; grid.len()]
        } else {
            dealias_mask(&grid, dealias_fraction)
        };
        let n = grid.dim;
        let mut hess_symbols = Vec::new();
        for i in 0..n {
            for j in i..n {
                let sym = (0..grid.len())
                    .map(|p| {
                        let idx = grid.unravel(p);
                        if i != j && (grid.is_nyquist(idx[i]) || grid.is_nyquist(idx[j])) {
                            return 0.0;
                        }
                        -grid.wavenumber(idx[i]) * grid.wavenumber(idx[j])
                    })
                    .collect();
                hess_symbols.push(sym);
            }
        }
        Ok(NonlinearEvaluator {
            grid,
            model,
            dealias_fraction,
            form,
            keep,
            hess_symbols,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn model(&self) -> &MaterialModel {
        &self.model
    }

    pub fn dealias_fraction(&self) -> f64 {
        self.dealias_fraction
    }

    /// Physical Hessian of `u` (without dealiasing).
    pub fn hessian(&self, u: &SpectralField) -> HessianSamples {
        self.hessian_masked(u, false)
    }

    fn hessian_masked(&self, u: &SpectralField, dealiased: bool) -> HessianSamples {
        let entries = self
            .hess_symbols
            .iter()
            .map(|sym| {
                let mut work: Vec<Complex64> = u
                    .coeffs()
                    .iter()
                    .zip(sym)
                    .zip(&self.keep)
                    .map(|((c, s), &k)| {
                        if k || !dealiased {
                            c * s
                        } else {
                            Complex64::default()
                        }
                    })
                    .collect();
                u.inverse_in_place(&mut work);
                work.into_iter().map(|c| c.re).collect()
            })
            .collect();
        HessianSamples {
            grid: self.grid,
            entries,
        }
    }

    /// `sum_ij d_i d_j g^{ij}(d^2 u)` (or of `b^{ij}` for [`FluxForm::Full`]),
    /// dealiased on input and output.
    pub fn evaluate(&self, u: &SpectralField) -> Result<NonlinearTerm> {
        u.ensure_same_grid(&SpectralField::zeros(self.grid))?;
        let hess = self.hessian_masked(u, true);
        let max_hessian = hess.max_norm();
        if self.form == FluxForm::Residual && self.model.is_linear() {
            return Ok(NonlinearTerm {
                field: SpectralField::zeros(self.grid),
                max_hessian,
            });
        }
        let n = self.grid.dim;
        let npairs = n * (n + 1) / 2;
        let mut flux: Vec<Vec<f64>> = vec![vec![0.0; self.grid.len()]; npairs];
        for p in 0..self.grid.len() {
            let v = hess.at(p);
            let g = match self.form {
                FluxForm::Residual => self.model.residual_flux(&v),
                FluxForm::Full => self.model.flux(&v),
            };
            let mut e = 0;
            for i in 0..n {
                for j in i..n {
                    flux[e][p] = if i == j { g[i][i] } else { g[i][j] + g[j][i] };
                    e += 1;
                }
            }
        }
        let mut out = vec![Complex64::default(); self.grid.len()];
        for (e, samples) in flux.iter().enumerate() {
            let fhat = SpectralField::forward(self.grid, samples)?;
            for ((o, c), s) in out.iter_mut().zip(fhat.coeffs()).zip(&self.hess_symbols[e]) {
                *o += c * s;
            }
        }
        for (o, &k) in out.iter_mut().zip(&self.keep) {
            if !k {
                *o = Complex64::default();
            }
        }
        Ok(NonlinearTerm {
            field: SpectralField::from_coeffs(self.grid, out)?,
            max_hessian,
        })
    }
}

/// One-shot evaluation of the nonlinear term with an optional amplitude guard.
pub fn evaluate_nonlinear_term(
    model: &MaterialModel,
    u: &SpectralField,
    dealias_fraction: f64,
    form: FluxForm,
    hessian_bound: Option<f64>,
) -> Result<NonlinearTerm> {
    let eval = NonlinearEvaluator::new(*u.grid(), model.clone(), dealias_fraction, form)?;
    let term = eval.evaluate(u)?;
    if let Some(bound) = hessian_bound {
        if term.max_hessian > bound {
            return Err(Error::BoundViolation {
                time: f64::NAN,
                value: term.max_hessian,
                bound,
            });
        }
    }
    Ok(term)
}

pub fn quartic_form(t: &Tensor4, xi: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let xij = xi[i] * xi[j];
            for a in 0..n {
                for b in 0..n {
                    acc += t[i][j][a][b] * xij * xi[a] * xi[b];
                }
            }
        }
    }
    acc
}

/// Full symmetrization over `i<->j`, `a<->b` and `(ij)<->(ab)`.
pub fn symmetrized(t: &Tensor4, n: usize) -> Tensor4 {
    let mut s = ZERO_TENSOR;
    for i in 0..n {
        for j in 0..n {
            for a in 0..n {
                for b in 0..n {
                    s[i][j][a][b] = (t[i][j][a][b]
                        + t[j][i][a][b]
                        + t[i][j][b][a]
                        + t[j][i][b][a]
                        + t[a][b][i][j]
                        + t[b][a][i][j]
                        + t[a][b][j][i]
                        + t[b][a][j][i])
                        / 8.0;
                }
            }
        }
    }
    s
}

/// Largest violation of the index symmetries of a tangent tensor.
pub fn symmetry_residual(t: &Tensor4, n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for a in 0..n {
                for b in 0..n {
                    let v = t[i][j][a][b];
                    worst = worst
                        .max((v - t[j][i][a][b]).abs())
                        .max((v - t[i][j][b][a]).abs())
                        .max((v - t[a][b][i][j]).abs());
                }
            }
        }
    }
    worst
}

fn contract(t: &Tensor4, v: &Mat, n: usize) -> Mat {
    let mut out = ZERO_MAT;
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    acc += t[i][j][a][b] * v[a][b];
                }
            }
            out[i][j] = acc;
        }
    }
    out
}

fn double_contract(t: &Tensor4, v: &Mat, w: &Mat, n: usize) -> f64 {
    let c = contract(t, w, n);
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += v[i][j] * c[i][j];
        }
    }
    acc
}

pub fn frobenius_sq(v: &Mat, n: usize) -> f64 {
    let mut s = 0.0;
    for row in v.iter().take(n) {
        for x in row.iter().take(n) {
            s += x * x;
        }
    }
    s
}

fn scale_mat(v: &Mat, s: f64, n: usize) -> Mat {
    let mut out = ZERO_MAT;
    for i in 0..n {
        for j in 0..n {
            out[i][j] = s * v[i][j];
        }
    }
    out
}

fn max_abs_mat(v: &Mat, n: usize) -> f64 {
    let mut m: f64 = 0.0;
    for row in v.iter().take(n) {
        for x in row.iter().take(n) {
            m = m.max(x.abs());
        }
    }
    m
}

fn max_abs_diff_mat(a: &Mat, b: &Mat, n: usize) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

fn max_abs_diff_tensor(a: &Tensor4, b: &Tensor4, n: usize) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            m = m.max(max_abs_diff_mat(&a[i][j], &b[i][j], n));
        }
    }
    m
}

/// Unit perturbation along the symmetric direction `(E_ab + E_ba) / 2`.
fn symmetric_direction(a: usize, b: usize) -> Mat {
    let mut e = ZERO_MAT;
    if a == b {
        e[a][a] = 1.0;
    } else {
        e[a][b] = 0.5;
        e[b][a] = 0.5;
    }
    e
}

fn add_scaled(v: &Mat, e: &Mat, s: f64) -> Mat {
    let mut out = *v;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += s * e[i][j];
        }
    }
    out
}

/// Central-difference gradient of the potential on symmetric matrices.
pub fn fd_gradient(law: &dyn Constitutive, v: &Mat) -> Mat {
    let n = law.dim();
    let h = TANGENT_FD_STEP;
    let mut out = ZERO_MAT;
    for a in 0..n {
        for b in 0..n {
            let e = symmetric_direction(a, b);
            out[a][b] = (law.potential(&add_scaled(v, &e, h))
                - law.potential(&add_scaled(v, &e, -h)))
                / (2.0 * h);
        }
    }
    out
}

/// Central-difference tangent `d b^{ij} / d V_ab` on symmetric matrices.
pub fn fd_tangent(law: &dyn Constitutive, v: &Mat) -> Tensor4 {
    let n = law.dim();
    let h = TANGENT_FD_STEP;
    let mut t = ZERO_TENSOR;
    for a in 0..n {
        for b in 0..n {
            let e = symmetric_direction(a, b);
            let plus = law.flux(&add_scaled(v, &e, h));
            let minus = law.flux(&add_scaled(v, &e, -h));
            for i in 0..n {
                for j in 0..n {
                    t[i][j][a][b] = (plus[i][j] - minus[i][j]) / (2.0 * h);
                }
            }
        }
    }
    t
}

fn sample_matrices(n: usize, amplitude: f64, count: usize, seed: u64) -> Vec<Mat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut v = ZERO_MAT;
            for i in 0..n {
                for j in i..n {
                    let x = rng.gen_range(-amplitude..amplitude);
                    v[i][j] = x;
                    v[j][i] = x;
                }
            }
            v
        })
        .collect()
}

fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    f(0.5 * (a + b)).min(fc).min(fd)
}

/// Pattern search on the sphere starting from `w` with initial angular step.
fn refine_on_sphere<F: Fn(&[f64]) -> f64>(f: &F, w: [f64; 3], step: f64) -> f64 {
    let normalize = |v: [f64; 3]| {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / r, v[1] / r, v[2] / r]
    };
    let mut best = w;
    let mut val = f(&best);
    let mut h = step;
    while h > 1e-10 {
        // tangent basis at the current point
        let helper = if best[0].abs() < 0.9 {
            [1.0, 0.0, 0.0]
        } else {
            [0.0, 1.0, 0.0]
        };
        let dot = helper[0] * best[0] + helper[1] * best[1] + helper[2] * best[2];
        let t1 = normalize([
            helper[0] - dot * best[0],
            helper[1] - dot * best[1],
            helper[2] - dot * best[2],
        ]);
        let t2 = [
            best[1] * t1[2] - best[2] * t1[1],
            best[2] * t1[0] - best[0] * t1[2],
            best[0] * t1[1] - best[1] * t1[0],
        ];
        let mut improved = false;
        for (s1, s2) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            let cand = normalize([
                best[0] + h * (s1 * t1[0] + s2 * t2[0]),
                best[1] + h * (s1 * t1[1] + s2 * t2[1]),
                best[2] + h * (s1 * t1[2] + s2 * t2[2]),
            ]);
            let v = f(&cand);
            if v < val {
                best = cand;
                val = v;
                improved = true;
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    val
}
