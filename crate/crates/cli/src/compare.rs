//! Side-by-side comparison of two finished runs.

use std::path::Path;

use plate_core::analysis::NormDescriptor;
use plate_core::grid::read_field;
use serde::{Deserialize, Serialize};

use crate::experiment::Manifest;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDifference {
    pub t: f64,
    /// `||u_a - u_b||_{L2}`.
    pub u_l2: f64,
    pub u_t_l2: f64,
    /// Same differences divided by `||u_a||_{L2}` and `||u_t,a||_{L2}`.
    pub u_relative: f64,
    pub u_t_relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateDifference {
    pub descriptor: NormDescriptor,
    pub window: (f64, f64),
    pub exponent_a: f64,
    pub exponent_b: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub fields: Vec<FieldDifference>,
    pub rates: Vec<RateDifference>,
    pub max_u_l2: f64,
    pub max_rate_difference: f64,
}

/// Compares the checkpoint fields and fitted rates of two run directories.
///
/// Runs on different grids or with different checkpoint times are rejected.
pub fn compare_runs(a: &Path, b: &Path) -> Result<CompareReport, CliError> {
    let ma = Manifest::read(a)?;
    let mb = Manifest::read(b)?;
    if ma.config.grid != mb.config.grid {
        return Err(CliError::Config(format!(
            "runs use different grids: {:?} vs {:?}",
            ma.config.grid, mb.config.grid
        )));
    }
    let ta: Vec<f64> = ma.checkpoints.iter().map(|c| c.t).collect();
    let tb: Vec<f64> = mb.checkpoints.iter().map(|c| c.t).collect();
    if ta != tb {
        return Err(CliError::Config(
            "runs have different checkpoint times".into(),
        ));
    }
    let grid = ma.config.grid;
    let mut fields = Vec::new();
    for (ca, cb) in ma.checkpoints.iter().zip(&mb.checkpoints) {
        let (Some(ua), Some(ub), Some(va), Some(vb)) =
            (&ca.u_field, &cb.u_field, &ca.u_t_field, &cb.u_t_field)
        else {
            continue;
        };
        let load = |dir: &Path, stem: &str| -> Result<Vec<f64>, CliError> {
            let (g, s) = read_field(&dir.join(stem))?;
            if g != grid {
                return Err(CliError::Config(format!(
                    "{stem} was written on a different grid"
                )));
            }
            Ok(s)
        };
        let diff = |x: &[f64], y: &[f64]| -> (f64, f64) {
            let dv = grid.cell_volume();
            let dn = (x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() * dv).sqrt();
            let xn = (x.iter().map(|p| p * p).sum::<f64>() * dv).sqrt();
            (dn, if xn > 0.0 { dn / xn } else { dn })
        };
        let (u_l2, u_relative) = diff(&load(a, ua)?, &load(b, ub)?);
        let (u_t_l2, u_t_relative) = diff(&load(a, va)?, &load(b, vb)?);
        fields.push(FieldDifference {
            t: ca.t,
            u_l2,
            u_t_l2,
            u_relative,
            u_t_relative,
        });
    }
    let mut rates = Vec::new();
    for ra in &ma.rates {
        if let Some(rb) = mb
            .rates
            .iter()
            .find(|r| r.descriptor == ra.descriptor && r.window == ra.window)
        {
            rates.push(RateDifference {
                descriptor: ra.descriptor,
                window: ra.window,
                exponent_a: ra.exponent,
                exponent_b: rb.exponent,
                difference: ra.exponent - rb.exponent,
            });
        }
    }
    Ok(CompareReport {
        max_u_l2: fields.iter().map(|f| f.u_l2).fold(0.0, f64::max),
        max_rate_difference: rates.iter().map(|r| r.difference.abs()).fold(0.0, f64::max),
        fields,
        rates,
    })
}
