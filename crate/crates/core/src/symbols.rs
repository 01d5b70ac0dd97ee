//! Fourier symbols of the linearized plate operator.
//!
//! Each mode obeys `(1+|xi|^2) v'' + v' + gamma(omega)|xi|^4 v = 0` with roots
//! `lambda_+/-`. The propagators are
//!
//! * `G = (e^{l+ t} - e^{l- t}) / (l+ - l-)` (data `v(0) = 0`, `v'(0) = 1`),
//! * `H = ((1+l+) e^{l- t} - (1+l-) e^{l+ t}) / (l+ - l-)`,
//!
//! so the linear solution is `G (u0 + u1) + H u0`. Divided differences are
//! evaluated through `phi1(z) = (e^z - 1)/z` so nearly equal roots cause no
//! cancellation.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, SpectralField};
use crate::model::MaterialModel;

/// `(e^z - 1) / z`, accurate near `z = 0`.
pub fn phi1(z: Complex64) -> Complex64 {
    if z.norm() < 0.1 {
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for k in 2..16 {
            term *= z / k as f64;
            sum += term;
        }
        sum
    } else {
        (z.exp() - 1.0) / z
    }
}

/// `(e^{a t} - e^{b t}) / (a - b)`, factored on the root whose exponential
/// dominates so that neither overflow nor cancellation occurs.
pub fn exp_divided_difference(a: Complex64, b: Complex64, t: f64) -> Complex64 {
    let (big, small) = if (a.re - b.re) * t >= 0.0 {
        (a, b)
    } else {
        (b, a)
    };
    (big * t).exp() * t * phi1((small - big) * t)
}

/// Roots of `(1 + k2) l^2 + l + q = 0` with `k2 = |xi|^2`, `q = gamma |xi|^4`.
///
/// The first root has the larger real part; for complex pairs the principal
/// square root fixes the branch.
pub fn eigenvalues_from(xi_sq: f64, quartic: f64) -> (Complex64, Complex64) {
    let a = 1.0 + xi_sq;
    let disc = 1.0 - 4.0 * quartic * a;
    if disc >= 0.0 {
        let r = disc.sqrt();
        let minus = -(1.0 + r) / (2.0 * a);
        // product of roots is q / a
        let plus = -2.0 * quartic / (1.0 + r);
        (Complex64::new(plus, 0.0), Complex64::new(minus, 0.0))
    } else {
        let r = Complex64::new(disc, 0.0).sqrt();
        (
            (Complex64::new(-1.0, 0.0) + r) / (2.0 * a),
            (Complex64::new(-1.0, 0.0) - r) / (2.0 * a),
        )
    }
}

/// Roots for a wavevector and direction constant `gamma`.
pub fn eigenvalues(xi: &[f64], gamma: f64) -> Result<(Complex64, Complex64)> {
    if gamma <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "gamma must be positive (got {gamma})"
        )));
    }
    let k2: f64 = xi.iter().map(|x| x * x).sum();
    Ok(eigenvalues_from(k2, gamma * k2 * k2))
}

/// Residual of the characteristic polynomial, scaled by the size of its terms.
pub fn characteristic_residual(xi_sq: f64, quartic: f64, lambda: Complex64) -> f64 {
    let a = 1.0 + xi_sq;
    let r = a * lambda * lambda + lambda + quartic;
    let scale = a * lambda.norm_sqr() + lambda.norm() + quartic.abs();
    if scale == 0.0 {
        r.norm()
    } else {
        r.norm() / scale
    }
}

/// `G`, `H` and their time derivatives for one mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModePropagator {
    pub g: f64,
    pub h: f64,
    pub g_dot: f64,
    pub h_dot: f64,
}

impl ModePropagator {
    /// Evaluates the propagators from a root pair in the given order.
    ///
    /// `G` is symmetric in the roots; the remaining formulas are written in
    /// terms of `second`, so calling with swapped roots exercises a different
    /// algebraic route to the same values.
    pub fn from_roots(first: Complex64, second: Complex64, t: f64) -> Self {
        let g = exp_divided_difference(first, second, t);
        let e2 = (second * t).exp();
        let h = e2 - (1.0 + second) * g;
        let g_dot = e2 + first * g;
        let h_dot = second * e2 - (1.0 + second) * g_dot;
        ModePropagator {
            g: g.re,
            h: h.re,
            g_dot: g_dot.re,
            h_dot: h_dot.re,
        }
    }

    pub fn new(xi_sq: f64, quartic: f64, t: f64) -> Self {
        let (p, m) = eigenvalues_from(xi_sq, quartic);
        Self::from_roots(p, m, t)
    }

    /// The 2x2 map `(v, v') (0) -> (v, v') (t)`.
    pub fn flow_matrix(&self) -> [[f64; 2]; 2] {
        [
            [self.g + self.h, self.g],
            [self.g_dot + self.h_dot, self.g_dot],
        ]
    }
}

/// Real multipliers of the four propagators on a lattice.
#[derive(Debug, Clone)]
pub struct Propagators {
    pub t: f64,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub g_dot: Vec<f64>,
    pub h_dot: Vec<f64>,
}

/// Per-lattice-point eigenvalues of the linearized operator.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    grid: GridSpec,
    xi_sq: Vec<f64>,
    quartic: Vec<f64>,
    gamma_at_xi: Vec<f64>,
    lambda_plus: Vec<Complex64>,
    lambda_minus: Vec<Complex64>,
}

impl SymbolTable {
    pub fn new(grid: GridSpec, model: &MaterialModel) -> Result<Self> {
        grid.validate()?;
        if model.dim() != grid.dim {
            return Err(Error::InvalidArgument(format!(
                "model dimension {} does not match grid dimension {}",
                model.dim(),
                grid.dim
            )));
        }
        let len = grid.len();
        let mut xi_sq = Vec::with_capacity(len);
        let mut quartic = Vec::with_capacity(len);
        let mut gamma_at_xi = Vec::with_capacity(len);
        let mut lambda_plus = Vec::with_capacity(len);
        let mut lambda_minus = Vec::with_capacity(len);
        let mut e1 = [0.0; 3];
        e1[0] = 1.0;
        let gamma_axis = model.quartic_form(&e1[..grid.dim]);
        for p in 0..len {
            let xi = grid.wavevector(p);
            let k2: f64 = xi.iter().map(|x| x * x).sum();
            // contracting with xi directly gives gamma(omega)|xi|^4 and an exact
            // zero at the origin, where omega is undefined
            let q = model.quartic_form(&xi[..grid.dim]);
            let (lp, lm) = eigenvalues_from(k2, q);
            xi_sq.push(k2);
            quartic.push(q);
            gamma_at_xi.push(if k2 > 0.0 { q / (k2 * k2) } else { gamma_axis });
            lambda_plus.push(lp);
            lambda_minus.push(lm);
        }
        Ok(SymbolTable {
            grid,
            xi_sq,
            quartic,
            gamma_at_xi,
            lambda_plus,
            lambda_minus,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn xi_sq(&self) -> &[f64] {
        &self.xi_sq
    }

    /// `gamma(omega) |xi|^4` per lattice point.
    pub fn quartic(&self) -> &[f64] {
        &self.quartic
    }

    pub fn gamma_at_xi(&self) -> &[f64] {
        &self.gamma_at_xi
    }

    pub fn lambda_plus(&self) -> &[Complex64] {
        &self.lambda_plus
    }

    pub fn lambda_minus(&self) -> &[Complex64] {
        &self.lambda_minus
    }

    /// Largest scaled characteristic-polynomial residual over both roots.
    pub fn max_characteristic_residual(&self) -> f64 {
        (0..self.xi_sq.len())
            .map(|p| {
                characteristic_residual(self.xi_sq[p], self.quartic[p], self.lambda_plus[p]).max(
                    characteristic_residual(self.xi_sq[p], self.quartic[p], self.lambda_minus[p]),
                )
            })
            .fold(0.0, f64::max)
    }

    pub fn propagators(&self, t: f64) -> Propagators {
        self.propagators_with(t, false)
    }

    /// Same as [`propagators`](Self::propagators) but evaluated with the roots
    /// interchanged.
    pub fn propagators_swapped(&self, t: f64) -> Propagators {
        self.propagators_with(t, true)
    }

    fn propagators_with(&self, t: f64, swapped: bool) -> Propagators {
        let len = self.xi_sq.len();
        let mut out = Propagators {
            t,
            g: Vec::with_capacity(len),
            h: Vec::with_capacity(len),
            g_dot: Vec::with_capacity(len),
            h_dot: Vec::with_capacity(len),
        };
        for p in 0..len {
            let (a, b) = if swapped {
                (self.lambda_minus[p], self.lambda_plus[p])
            } else {
                (self.lambda_plus[p], self.lambda_minus[p])
            };
            let m = ModePropagator::from_roots(a, b, t);
            out.g.push(m.g);
            out.h.push(m.h);
            out.g_dot.push(m.g_dot);
            out.h_dot.push(m.h_dot);
        }
        out
    }

    /// `(G(t), H(t))` multipliers.
    pub fn propagator_symbols(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if t < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "time must be nonnegative (got {t})"
            )));
        }
        let p = self.propagators(t);
        Ok((p.g, p.h))
    }

    fn check(&self, f: &SpectralField) -> Result<()> {
        if *f.grid() == self.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `u(t) = G(t)(u0 + u1) + H(t) u0` together with `u_t(t)`.
    pub fn linear_state(
        &self,
        u0: &SpectralField,
        u1: &SpectralField,
        t: f64,
    ) -> Result<(SpectralField, SpectralField)> {
        self.check(u0)?;
        self.check(u1)?;
        let p = self.propagators(t);
        let mut u = SpectralField::zeros(self.grid);
        let mut v = SpectralField::zeros(self.grid);
        for (i, (cu, cv)) in u.coeffs_mut().iter_mut().zip(v.coeffs_mut()).enumerate() {
            let a = u0.coeffs()[i];
            let s = a + u1.coeffs()[i];
            *cu = s * p.g[i] + a * p.h[i];
            *cv = s * p.g_dot[i] + a * p.h_dot[i];
        }
        Ok((u, v))
    }

    pub fn linear_solution(
        &self,
        u0: &SpectralField,
        u1: &SpectralField,
        t: f64,
    ) -> Result<SpectralField> {
        Ok(self.linear_state(u0, u1, t)?.0)
    }

    /// `G(t) (1 - Delta)^{-1} phi`.
    pub fn smoothing_propagator(&self, phi: &SpectralField, t: f64) -> Result<SpectralField> {
        self.check(phi)?;
        if t < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "time must be nonnegative (got {t})"
            )));
        }
        let p = self.propagators(t);
        let mult: Vec<f64> =
            p.g.iter()
                .zip(&self.xi_sq)
                .map(|(g, k2)| g / (1.0 + k2))
                .collect();
        Ok(phi.multiplied(&mult))
    }

    /// `sup_xi |G(xi, t)| / (1 + |xi|^2)` over the lattice, excluding `xi = 0`.
    pub fn smoothing_envelope(&self, t: f64) -> f64 {
        let p = self.propagators(t);
        p.g.iter()
            .zip(&self.xi_sq)
            .skip(1)
            .map(|(g, k2)| g.abs() / (1.0 + k2))
            .fold(0.0, f64::max)
    }

    /// `exp(-gamma(omega) |xi|^4 t)` per lattice point.
    pub fn heat_symbol(&self, t: f64) -> Vec<f64> {
        self.quartic.iter().map(|q| (-q * t).exp()).collect()
    }

    /// `G0(t) * f`.
    pub fn heat_flow(&self, f: &SpectralField, t: f64) -> Result<SpectralField> {
        self.check(f)?;
        Ok(f.multiplied(&self.heat_symbol(t)))
    }

    /// The kernel `G0(., t)` itself.
    pub fn heat_kernel(&self, t: f64) -> SpectralField {
        let coeffs = self
            .heat_symbol(t)
            .into_iter()
            .map(|v| Complex64::new(v, 0.0))
            .collect();
        SpectralField::from_coeffs(self.grid, coeffs).expect("symbol has grid length")
    }
}

/// `exp(-gamma |xi|^4 t)`.
pub fn g0_symbol(xi: &[f64], gamma: f64, t: f64) -> f64 {
    let k2: f64 = xi.iter().map(|x| x * x).sum();
    (-gamma * k2 * k2 * t).exp()
}

/// Best constant in `Re l+(xi) <= -c |xi|^4 / (1 + |xi|^2)^3` over a radial range.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityEnvelope {
    pub c: f64,
    /// `max |Re l+|` on each probe radius.
    pub probe_radii: Vec<f64>,
    pub probe_max_re: Vec<f64>,
    /// Smallest margin `-Re l+ - c |xi|^4/(1+|xi|^2)^3` over the samples.
    pub min_margin: f64,
}

/// Samples `radial` log-spaced radii in `[r_lo, r_hi]` times `angular`
/// directions and fits the regularity-loss envelope constant.
pub fn regularity_envelope(
    model: &MaterialModel,
    r_lo: f64,
    r_hi: f64,
    radial: usize,
    angular: usize,
    probe_radii: &[f64],
) -> RegularityEnvelope {
    let dirs = directions(model.dim(), angular);
    let bound = |r: f64| r.powi(4) / (1.0 + r * r).powi(3);
    let re_plus = |r: f64, w: &[f64]| {
        let q = model.quartic_form(w) * r.powi(4);
        eigenvalues_from(r * r, q).0.re
    };
    let mut c = f64::INFINITY;
    let radii: Vec<f64> = (0..radial)
        .map(|i| r_lo * (r_hi / r_lo).powf(i as f64 / (radial - 1) as f64))
        .collect();
    for &r in &radii {
        for w in &dirs {
            c = c.min(-re_plus(r, w) / bound(r));
        }
    }
    let mut min_margin = f64::INFINITY;
    for &r in &radii {
        for w in &dirs {
            min_margin = min_margin.min(-re_plus(r, w) - c * bound(r));
        }
    }
    let probe_max_re = probe_radii
        .iter()
        .map(|&r| dirs.iter().map(|w| re_plus(r, w).abs()).fold(0.0, f64::max))
        .collect();
    RegularityEnvelope {
        c,
        probe_radii: probe_radii.to_vec(),
        probe_max_re,
        min_margin,
    }
}

/// Quasi-uniform unit directions (half of them suffice since `gamma` is even).
pub(crate) fn directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0]],
        2 => (0..count)
            .map(|k| {
                let th = std::f64::consts::PI * k as f64 / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        _ => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * i as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
    }
}
