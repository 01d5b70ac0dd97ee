//! Whole-space norms of propagated data by direct quadrature in Fourier space.
//!
//! `|| d^k S(t) f ||_{L^2(R^n)}^2 = (2 pi)^{-n} int |xi|^{2k} |S^(xi, t) f^(xi)|^2 dxi`
//! is evaluated with composite Gauss-Legendre panels in the radius, graded
//! geometrically towards the origin and cut off where the data symbol is
//! negligible, times a trapezoid (n = 2) or Gauss-Legendre-in-`cos(theta)`
//! times trapezoid (n = 3) angular rule. Panels are halved and angular nodes
//! doubled until the relative change drops below the tolerance.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MaterialModel;
use crate::quadrature::{gauss_legendre, gauss_legendre_unit};
use crate::symbols::{eigenvalues_from, ModePropagator};

pub const QUADRATURE_TOLERANCE: f64 = 1e-8;

/// Analytic initial data with closed-form transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataProfile {
    Zero,
    /// `A exp(-|x|^2 / (2 w^2))`.
    Gaussian {
        amplitude: f64,
        width: f64,
    },
    /// `d/dx_axis` of the Gaussian above; has zero mean.
    DerivativeOfGaussian {
        amplitude: f64,
        width: f64,
        axis: usize,
    },
}

impl DataProfile {
    pub fn symbol(&self, xi: &[f64]) -> Complex64 {
        match *self {
            DataProfile::Zero => Complex64::default(),
            DataProfile::Gaussian { amplitude, width } => {
                Complex64::new(gaussian_hat(amplitude, width, xi), 0.0)
            }
            DataProfile::DerivativeOfGaussian {
                amplitude,
                width,
                axis,
            } => Complex64::new(0.0, xi[axis] * gaussian_hat(amplitude, width, xi)),
        }
    }

    /// Physical-space samples of the profile.
    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            DataProfile::Zero => 0.0,
            DataProfile::Gaussian { amplitude, width } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
            DataProfile::DerivativeOfGaussian {
                amplitude,
                width,
                axis,
            } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                -amplitude * x[axis] / (width * width) * (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    fn width(&self) -> f64 {
        match *self {
            DataProfile::Zero => 1.0,
            DataProfile::Gaussian { width, .. }
            | DataProfile::DerivativeOfGaussian { width, .. } => width,
        }
    }
}

fn gaussian_hat(amplitude: f64, width: f64, xi: &[f64]) -> f64 {
    let n = xi.len() as i32;
    let k2: f64 = xi.iter().map(|v| v * v).sum();
    amplitude * (2.0 * PI * width * width).powf(n as f64 / 2.0) * (-0.5 * width * width * k2).exp()
}

/// Which solution operator is applied to the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Propagated {
    /// `u = G (u0 + u1) + H u0`.
    Linear { u0: DataProfile, u1: DataProfile },
    /// `u_t` of the linear solution.
    Velocity { u0: DataProfile, u1: DataProfile },
    /// `G0(t) * f`.
    Heat { data: DataProfile },
    /// `u - G0(t) * (u0 + u1)` for the linear solution `u`.
    LinearMinusHeat { u0: DataProfile, u1: DataProfile },
    /// `G(t) (1 - Delta)^{-1} f`.
    Smoothing { data: DataProfile },
}

impl Propagated {
    fn symbol(&self, model: &MaterialModel, xi: &[f64], t: f64) -> Complex64 {
        let k2: f64 = xi.iter().map(|v| v * v).sum();
        let q = model.quartic_form(xi);
        let prop = || {
            let (p, m) = eigenvalues_from(k2, q);
            ModePropagator::from_roots(p, m, t)
        };
        match *self {
            Propagated::Linear { u0, u1 } => {
                let a = u0.symbol(xi);
                let m = prop();
                (a + u1.symbol(xi)) * m.g + a * m.h
            }
            Propagated::Velocity { u0, u1 } => {
                let a = u0.symbol(xi);
                let m = prop();
                (a + u1.symbol(xi)) * m.g_dot + a * m.h_dot
            }
            Propagated::Heat { data } => data.symbol(xi) * (-q * t).exp(),
            Propagated::LinearMinusHeat { u0, u1 } => {
                let a = u0.symbol(xi);
                let s = a + u1.symbol(xi);
                let m = prop();
                s * (m.g - (-q * t).exp()) + a * m.h
            }
            Propagated::Smoothing { data } => data.symbol(xi) * (prop().g / (1.0 + k2)),
        }
    }

    fn length_scale(&self) -> f64 {
        match *self {
            Propagated::Linear { u0, u1 }
            | Propagated::Velocity { u0, u1 }
            | Propagated::LinearMinusHeat { u0, u1 } => u0.width().max(u1.width()),
            Propagated::Heat { data } | Propagated::Smoothing { data } => data.width(),
        }
    }
}

/// `|| d^k S(t) f ||_{L^2(R^n)}` for the operator/data pair in `quantity`.
pub fn continuum_norm_quadrature(
    model: &MaterialModel,
    quantity: &Propagated,
    k: u32,
    t: f64,
) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "time must be nonnegative (got {t})"
        )));
    }
    // the squared data symbol falls below e^{-80} beyond this radius
    let radius = 9.0 / quantity.length_scale() + 2.0;
    let scale = 0.25 * (1.0 + t).powf(-0.25);
    let integrand = |xi: &[f64]| {
        let k2: f64 = xi.iter().map(|v| v * v).sum();
        k2.powi(k as i32) * quantity.symbol(model, xi, t).norm_sqr()
    };
    let value = adaptive_spherical(model.dim(), scale, radius, integrand)?;
    Ok((value / (2.0 * PI).powi(model.dim() as i32)).sqrt())
}

/// Point value `(2 pi)^{-n} int e^{i x.xi} exp(-gamma |xi|^4 t) dxi` of the
/// parabolic kernel.
pub fn heat_kernel_value(model: &MaterialModel, x: &[f64], t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "time must be positive (got {t})"
        )));
    }
    let gmin = model.gamma_min(200)?;
    let radius = (80.0 / (gmin * t)).powf(0.25);
    let value = adaptive_spherical(model.dim(), 0.25 * t.powf(-0.25), radius, |xi: &[f64]| {
        let phase: f64 = x.iter().zip(xi).map(|(a, b)| a * b).sum();
        phase.cos() * (-model.quartic_form(xi) * t).exp()
    })?;
    Ok(value / (2.0 * PI).powi(model.dim() as i32))
}

const PANEL_NODES: usize = 10;
const MAX_LEVELS: usize = 9;

fn adaptive_spherical<F: Fn(&[f64]) -> f64>(
    dim: usize,
    scale: f64,
    radius: f64,
    f: F,
) -> Result<f64> {
    let (gx, gw) = gauss_legendre_unit(PANEL_NODES);
    let mut width = radius / 8.0;
    let mut angular = 16;
    let mut prev = spherical_rule(dim, scale, radius, width, angular, &gx, &gw, &f);
    let mut change = f64::INFINITY;
    for _ in 0..MAX_LEVELS {
        width *= 0.5;
        angular = match dim {
            2 => (2 * angular).min(1024),
            _ => (2 * angular).min(64),
        };
        let next = spherical_rule(dim, scale, radius, width, angular, &gx, &gw, &f);
        change = if next != 0.0 {
            ((next - prev) / next).abs()
        } else {
            (next - prev).abs()
        };
        if change < QUADRATURE_TOLERANCE {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature {
        estimate: prev,
        change,
    })
}

/// Radial breakpoints: geometric from `scale` up, then uniform pieces no wider than `width`.
fn radial_panels(scale: f64, radius: f64, width: f64) -> Vec<(f64, f64)> {
    let mut cuts = vec![0.0];
    let mut b = scale.min(radius);
    while b < radius {
        cuts.push(b);
        b *= 2.0;
    }
    cuts.push(radius);
    let mut panels = Vec::new();
    for w in cuts.windows(2) {
        let pieces = ((w[1] - w[0]) / width).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / pieces as f64;
        for p in 0..pieces {
            panels.push((w[0] + p as f64 * h, w[0] + (p + 1) as f64 * h));
        }
    }
    panels
}

#[allow(clippy::too_many_arguments)]
fn spherical_rule<F: Fn(&[f64]) -> f64>(
    dim: usize,
    scale: f64,
    radius: f64,
    width: f64,
    angular: usize,
    gx: &[f64],
    gw: &[f64],
    f: &F,
) -> f64 {
    let (mu, wmu) = if dim == 3 {
        gauss_legendre(angular)
    } else {
        (Vec::new(), Vec::new())
    };
    let mut total = 0.0;
    let mut xi = [0.0; 3];
    for (a, b) in radial_panels(scale, radius, width) {
        for (xr, wr) in gx.iter().zip(gw) {
            let r = a + (b - a) * xr;
            let dr = (b - a) * wr;
            let shell = match dim {
                1 => {
                    let mut s = 0.0;
                    for sign in [1.0, -1.0] {
                        xi[0] = sign * r;
                        s += f(&xi[..1]);
                    }
                    s
                }
                2 => {
                    let h = 2.0 * PI / angular as f64;
                    let mut s = 0.0;
                    for j in 0..angular {
                        let th = h * j as f64;
                        xi[0] = r * th.cos();
                        xi[1] = r * th.sin();
                        s += f(&xi[..2]);
                    }
                    s * h * r
                }
                _ => {
                    let nphi = 2 * angular;
                    let h = 2.0 * PI / nphi as f64;
                    let mut s = 0.0;
                    for (c, wc) in mu.iter().zip(&wmu) {
                        let sn = (1.0 - c * c).sqrt();
                        let mut ring = 0.0;
                        for j in 0..nphi {
                            let ph = h * j as f64;
                            xi[0] = r * sn * ph.cos();
                            xi[1] = r * sn * ph.sin();
                            xi[2] = r * c;
                            ring += f(&xi[..3]);
                        }
                        s += ring * h * wc;
                    }
                    s * r * r
                }
            };
            total += shell * dr;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(width: f64) -> DataProfile {
        DataProfile::Gaussian {
            amplitude: 1.0,
            width,
        }
    }

    #[test]
    fn gaussian_norms_match_closed_forms() {
        // at t = 0 the heat flow is the identity: ||A e^{-x^2/2}||^2 = A^2 pi^{n/2}
        for dim in 1..=3 {
            let m = MaterialModel::linear_isotropic(dim);
            let v = continuum_norm_quadrature(&m, &Propagated::Heat { data: gauss(1.0) }, 0, 0.0)
                .unwrap();
            assert!(
                (v * v - PI.powf(dim as f64 / 2.0)).abs() < 1e-8,
                "{dim} {v}"
            );
        }
        // ||grad e^{-|x|^2/2}||^2 = n/2 pi^{n/2}
        let m = MaterialModel::linear_isotropic(2);
        let v =
            continuum_norm_quadrature(&m, &Propagated::Heat { data: gauss(1.0) }, 1, 0.0).unwrap();
        assert!((v * v - PI).abs() < 1e-8);
    }

    #[test]
    fn linear_solution_starts_from_data() {
        let m = MaterialModel::linear_isotropic(2);
        let q = Propagated::Linear {
            u0: gauss(1.0),
            u1: DataProfile::Zero,
        };
        let v = continuum_norm_quadrature(&m, &q, 0, 0.0).unwrap();
        assert!((v - PI.sqrt()).abs() < 1e-8);
        let q = Propagated::Velocity {
            u0: DataProfile::Zero,
            u1: gauss(1.0),
        };
        let v = continuum_norm_quadrature(&m, &q, 0, 0.0).unwrap();
        assert!((v - PI.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn heat_flow_scaling_ratio() {
        let m = MaterialModel::linear_isotropic(2);
        let q = Propagated::Heat { data: gauss(1.0) };
        let a = continuum_norm_quadrature(&m, &q, 0, 100.0).unwrap();
        let b = continuum_norm_quadrature(&m, &q, 0, 400.0).unwrap();
        assert!(((b / a) / 2f64.powf(-0.5) - 1.0).abs() < 0.01);
    }

    #[test]
    fn heat_kernel_at_origin() {
        // int_R e^{-xi^4 t} dxi = 2 Gamma(5/4) t^{-1/4} = Gamma(1/4) t^{-1/4} / 2
        let m = MaterialModel::linear_isotropic(1);
        let gamma_quarter = 3.625_609_908_221_908;
        for t in [1.0, 16.0] {
            let v = heat_kernel_value(&m, &[0.0], t).unwrap();
            let exact = gamma_quarter / 2.0 * t.powf(-0.25) / (2.0 * PI);
            assert!((v - exact).abs() < 1e-10, "{v} {exact}");
        }
    }
}
