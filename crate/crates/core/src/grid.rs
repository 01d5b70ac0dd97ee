//! Periodic lattice, Fourier transform and norms.
//!
//! The box is `[-L, L)^n` sampled with `N` points per axis. Coefficients follow
//! the continuum convention `f^(xi) = int e^{-i x.xi} f(x) dx`, approximated by
//! the lattice quadrature, so that norms evaluated here agree with their
//! whole-space values for data that is negligible near the box boundary.
//!
//! Arrays are stored row-major with axis 0 slowest, both in physical space and
//! in FFT index order in spectral space.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::ops::{Add, Mul, Sub};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Description of the periodic lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub half_length: f64,
    pub points_per_axis: usize,
}

impl GridSpec {
    pub fn new(dim: usize, half_length: f64, points_per_axis: usize) -> Result<Self> {
        let grid = GridSpec {
            dim,
            half_length,
            points_per_axis,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1, 2 or 3 (got {})",
                self.dim
            )));
        }
        if !(self.half_length.is_finite() && self.half_length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half length must be positive (got {})",
                self.half_length
            )));
        }
        if self.points_per_axis < 4 || !self.points_per_axis.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and at least 4 (got {})",
                self.points_per_axis
            )));
        }
        Ok(())
    }

    /// Total number of lattice points, `N^n`.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.points_per_axis as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Volume of the periodic box, `(2L)^n`.
    pub fn volume(&self) -> f64 {
        (2.0 * self.half_length).powi(self.dim as i32)
    }

    /// Signed lattice index `m` for FFT position `j` along one axis.
    pub fn mode_index(&self, j: usize) -> i64 {
        let n = self.points_per_axis;
        if j < n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    }

    /// Wavenumber `pi m / L` for FFT position `j` along one axis.
    pub fn wavenumber(&self, j: usize) -> f64 {
        PI * self.mode_index(j) as f64 / self.half_length
    }

    pub fn is_nyquist(&self, j: usize) -> bool {
        j == self.points_per_axis / 2
    }

    /// Splits a flat index into per-axis positions (unused axes are zero).
    pub fn unravel(&self, flat: usize) -> [usize; 3] {
        let n = self.points_per_axis;
        let mut out = [0usize; 3];
        let mut rest = flat;
        for axis in (0..self.dim).rev() {
            out[axis] = rest % n;
            rest /= n;
        }
        out
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter()
            .take(self.dim)
            .fold(0, |acc, &j| acc * self.points_per_axis + j)
    }

    /// Physical coordinates of a lattice point.
    pub fn coordinates(&self, flat: usize) -> [f64; 3] {
        let idx = self.unravel(flat);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = -self.half_length + idx[axis] as f64 * h;
        }
        x
    }

    /// Wavevector of a spectral position.
    pub fn wavevector(&self, flat: usize) -> [f64; 3] {
        let idx = self.unravel(flat);
        let mut xi = [0.0; 3];
        for axis in 0..self.dim {
            xi[axis] = self.wavenumber(idx[axis]);
        }
        xi
    }

    /// `|xi|^2` at every spectral position.
    pub fn xi_squared(&self) -> Vec<f64> {
        (0..self.len())
            .map(|f| self.wavevector(f).iter().map(|x| x * x).sum())
            .collect()
    }

    /// Largest resolved wavenumber magnitude along one axis.
    pub fn max_wavenumber(&self) -> f64 {
        PI * (self.points_per_axis / 2) as f64 / self.half_length
    }

    /// Time scale `(L/pi)^4` beyond which the lowest nonzero mode has decayed
    /// and the torus no longer mimics the whole space.
    pub fn validity_time(&self) -> f64 {
        (self.half_length / PI).powi(4)
    }

    /// Samples a function on the lattice.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let x = self.coordinates(i);
                f(&x[..self.dim])
            })
            .collect()
    }
}

/// Applies an unnormalized multi-dimensional FFT in place.
fn fft_nd(data: &mut [Complex64], dim: usize, n: usize, direction: FftDirection) {
    PLANNER.with(|planner| {
        let fft = planner.borrow_mut().plan_fft(n, direction);
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        // last axis is contiguous
        fft.process_with_scratch(data, &mut scratch);
        if dim == 1 {
            return;
        }
        let mut lines = Vec::new();
        for axis in 0..dim - 1 {
            let stride = n.pow((dim - 1 - axis) as u32);
            let block = stride * n;
            lines.resize(block, Complex64::default());
            for start in (0..data.len()).step_by(block) {
                let chunk = &mut data[start..start + block];
                // gather the strided lines of this block into contiguous rows
                for offset in 0..stride {
                    for j in 0..n {
                        lines[offset * n + j] = chunk[j * stride + offset];
                    }
                }
                fft.process_with_scratch(&mut lines, &mut scratch);
                for offset in 0..stride {
                    for j in 0..n {
                        chunk[j * stride + offset] = lines[offset * n + j];
                    }
                }
            }
        }
    });
}

/// `(-1)^(j_1 + ... + j_n)`: the phase that shifts the DFT origin to the box centre.
fn centre_phase(grid: &GridSpec, flat: usize) -> f64 {
    let idx = grid.unravel(flat);
    if idx.iter().take(grid.dim).sum::<usize>() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Which `L^p` norm to evaluate on physical samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpNorm {
    L1,
    LInf,
}

/// Fourier coefficients of a real field on the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: GridSpec) -> Self {
        SpectralField {
            grid,
            coeffs: vec![Complex64::default(); grid.len()],
        }
    }

    pub fn from_coeffs(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::Shape {
                expected: grid.len(),
                actual: coeffs.len(),
            });
        }
        Ok(SpectralField { grid, coeffs })
    }

    /// Forward transform of physical samples.
    pub fn forward(grid: GridSpec, samples: &[f64]) -> Result<Self> {
        grid.validate()?;
        if samples.len() != grid.len() {
            return Err(Error::Shape {
                expected: grid.len(),
                actual: samples.len(),
            });
        }
        let mut coeffs: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(
            &mut coeffs,
            grid.dim,
            grid.points_per_axis,
            FftDirection::Forward,
        );
        let scale = grid.cell_volume();
        for (i, c) in coeffs.iter_mut().enumerate() {
            *c *= scale * centre_phase(&grid, i);
        }
        Ok(SpectralField { grid, coeffs })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: GridSpec, f: F) -> Result<Self> {
        Self::forward(grid, &grid.sample(f))
    }

    /// Field whose coefficients are given by a function of the wavevector.
    pub fn from_symbol<F: Fn(&[f64]) -> Complex64>(grid: GridSpec, f: F) -> Self {
        let coeffs = (0..grid.len())
            .map(|i| {
                let xi = grid.wavevector(i);
                f(&xi[..grid.dim])
            })
            .collect();
        SpectralField { grid, coeffs }
    }

    /// Inverse transform to physical samples (real part).
    pub fn to_physical(&self) -> Vec<f64> {
        let mut work = self.coeffs.clone();
        self.inverse_in_place(&mut work);
        work.into_iter().map(|c| c.re).collect()
    }

    pub(crate) fn inverse_in_place(&self, work: &mut [Complex64]) {
        let grid = &self.grid;
        let scale = 1.0 / grid.volume();
        for (i, c) in work.iter_mut().enumerate() {
            *c *= scale * centre_phase(grid, i);
        }
        fft_nd(work, grid.dim, grid.points_per_axis, FftDirection::Inverse);
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient at the zero wavevector, i.e. the integral of the field.
    pub fn integral(&self) -> f64 {
        self.coeffs[0].re
    }

    pub fn ensure_same_grid(&self, other: &SpectralField) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Multiplies every coefficient by a real multiplier table.
    pub fn multiplied(&self, symbol: &[f64]) -> SpectralField {
        debug_assert_eq!(symbol.len(), self.coeffs.len());
        let coeffs = self.coeffs.iter().zip(symbol).map(|(c, s)| c * s).collect();
        SpectralField {
            grid: self.grid,
            coeffs,
        }
    }

    pub fn scaled(&self, factor: f64) -> SpectralField {
        SpectralField {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    /// Partial derivative with the given per-axis orders.
    ///
    /// Odd derivatives annihilate the Nyquist mode along that axis so that the
    /// result stays the transform of a real field.
    pub fn derivative(&self, multi_index: &[usize]) -> Result<SpectralField> {
        if multi_index.len() != self.grid.dim {
            return Err(Error::InvalidArgument(format!(
                "multi-index has {} entries for a {}-dimensional grid",
                multi_index.len(),
                self.grid.dim
            )));
        }
        let grid = self.grid;
        let mut out = self.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            let idx = grid.unravel(i);
            let mut factor = Complex64::new(1.0, 0.0);
            for (axis, &order) in multi_index.iter().enumerate() {
                if order == 0 {
                    continue;
                }
                if order % 2 == 1 && grid.is_nyquist(idx[axis]) {
                    factor = Complex64::default();
                    break;
                }
                let ik = Complex64::new(0.0, grid.wavenumber(idx[axis]));
                factor *= ik.powu(order as u32);
            }
            *c *= factor;
        }
        Ok(out)
    }

    pub fn laplacian(&self) -> SpectralField {
        let xi_sq = self.grid.xi_squared();
        let neg: Vec<f64> = xi_sq.iter().map(|k| -k).collect();
        self.multiplied(&neg)
    }

    /// `(2L)^{-n} sum w(|xi|^2) |f^|^2` for a radial weight.
    pub fn weighted_energy<W: Fn(f64) -> f64>(&self, weight: W) -> f64 {
        let grid = &self.grid;
        let mut total = 0.0;
        for (i, c) in self.coeffs.iter().enumerate() {
            let xi = grid.wavevector(i);
            let k2: f64 = xi.iter().map(|x| x * x).sum();
            total += weight(k2) * c.norm_sqr();
        }
        total / grid.volume()
    }

    pub fn l2_norm(&self) -> f64 {
        self.weighted_energy(|_| 1.0).sqrt()
    }

    /// `H^s` norm with the isotropic regrouping `sum_{k<=s} || |xi|^k f^ ||^2`.
    pub fn sobolev_norm(&self, s: u32) -> f64 {
        self.derivative_sobolev_norm(0, s)
    }

    /// `|| d^k f ||_{H^s}` evaluated as `sum_{l<=s} || |xi|^{k+l} f^ ||^2`.
    pub fn derivative_sobolev_norm(&self, k: u32, s: u32) -> f64 {
        self.weighted_energy(|k2| {
            let mut acc = 0.0;
            let mut p = k2.powi(k as i32);
            for _ in 0..=s {
                acc += p;
                p *= k2;
            }
            acc
        })
        .sqrt()
    }

    /// Physical-space `L^1`, weighted `L^1_1` or `L^inf` norm.
    pub fn lp_norm(&self, p: LpNorm, weighted: bool) -> f64 {
        lp_norm_of_samples(&self.grid, &self.to_physical(), p, weighted)
    }

    /// Zeroes every coefficient with some `|m_i| >= fraction * N / 2`.
    pub fn dealias(&self, fraction: f64) -> SpectralField {
        let mut out = self.clone();
        out.dealias_in_place(fraction);
        out
    }

    pub fn dealias_in_place(&mut self, fraction: f64) {
        if fraction >= 1.0 {
            return;
        }
        let mask = dealias_mask(&self.grid, fraction);
        for (c, keep) in self.coeffs.iter_mut().zip(mask) {
            if !keep {
                *c = Complex64::default();
            }
        }
    }

    /// Largest violation of `c(-xi) = conj(c(xi))`.
    pub fn hermitian_defect(&self) -> f64 {
        let grid = &self.grid;
        let n = grid.points_per_axis;
        let mut worst: f64 = 0.0;
        let mut mirror = [0usize; 3];
        for (i, c) in self.coeffs.iter().enumerate() {
            let idx = grid.unravel(i);
            for axis in 0..grid.dim {
                mirror[axis] = (n - idx[axis]) % n;
            }
            let j = grid.ravel(&mirror[..grid.dim]);
            worst = worst.max((self.coeffs[j] - c.conj()).norm());
        }
        worst
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        assert_eq!(self.grid, rhs.grid, "adding fields on different grids");
        SpectralField {
            grid: self.grid,
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        assert_eq!(self.grid, rhs.grid, "subtracting fields on different grids");
        SpectralField {
            grid: self.grid,
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scaled(rhs)
    }
}

/// Keep-mask of the dealiasing rule.
pub fn dealias_mask(grid: &GridSpec, fraction: f64) -> Vec<bool> {
    let cutoff = fraction * (grid.points_per_axis / 2) as f64;
    (0..grid.len())
        .map(|i| {
            let idx = grid.unravel(i);
            (0..grid.dim).all(|axis| (grid.mode_index(idx[axis]).abs() as f64) < cutoff)
        })
        .collect()
}

pub fn lp_norm_of_samples(grid: &GridSpec, samples: &[f64], p: LpNorm, weighted: bool) -> f64 {
    match p {
        LpNorm::LInf => samples.iter().map(|v| v.abs()).fold(0.0, f64::max),
        LpNorm::L1 => {
            let dv = grid.cell_volume();
            samples
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let w = if weighted {
                        let x = grid.coordinates(i);
                        1.0 + x.iter().map(|c| c * c).sum::<f64>().sqrt()
                    } else {
                        1.0
                    };
                    w * v.abs()
                })
                .sum::<f64>()
                * dv
        }
    }
}

/// Writes physical samples as `<stem>.bin` (little-endian f64, row-major) with a
/// `<stem>.json` header holding the grid description.
pub fn write_field(stem: &Path, grid: &GridSpec, samples: &[f64]) -> Result<()> {
    if samples.len() != grid.len() {
        return Err(Error::Shape {
            expected: grid.len(),
            actual: samples.len(),
        });
    }
    let mut bytes = Vec::with_capacity(samples.len() * 8);
    for v in samples {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(with_extension(stem, "bin"))?.write_all(&bytes)?;
    fs::write(
        with_extension(stem, "json"),
        serde_json::to_string_pretty(grid)?,
    )?;
    Ok(())
}

/// Reads a field written by [`write_field`].
pub fn read_field(stem: &Path) -> Result<(GridSpec, Vec<f64>)> {
    let grid: GridSpec = serde_json::from_str(&fs::read_to_string(with_extension(stem, "json"))?)?;
    grid.validate()?;
    let mut bytes = Vec::new();
    fs::File::open(with_extension(stem, "bin"))?.read_to_end(&mut bytes)?;
    if bytes.len() != grid.len() * 8 {
        return Err(Error::Shape {
            expected: grid.len(),
            actual: bytes.len() / 8,
        });
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight bytes")))
        .collect();
    Ok((grid, samples))
}

fn with_extension(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}
