//! Normal-metal temperature and drive-line bath from a cooling curve n̄(V).
//!
//! The resonator sees two baths, the QCR and the drive line:
//! `n̄ = (γ_QCR n_QCR + γ_dr n_dr) / (γ_QCR + γ_dr)`.
//! The QCR side depends on `T_N` only through the tunneling rates, which are
//! cached per temperature during a fit.

use std::collections::HashMap;
use std::io::BufRead;

use rayon::prelude::*;

use super::lsq::{least_squares, Bounds, LeastSquaresOptions, LeastSquaresReport, Termination};
use crate::engine::{qcr_rates, QcrCircuit};
use crate::physics::QuadratureSpec;
use crate::units::E_CHARGE;
use crate::{Error, Result};

/// Measured mean photon number against QCR bias.
#[derive(Debug, Clone, PartialEq)]
pub struct CoolingCurve {
    voltage: Vec<f64>,
    occupation: Vec<f64>,
}

impl CoolingCurve {
    pub fn new(voltage: Vec<f64>, occupation: Vec<f64>) -> Result<Self> {
        if voltage.len() != occupation.len() {
            return Err(Error::domain("voltage and occupation lengths differ"));
        }
        if voltage.len() < 2 {
            return Err(Error::domain("a cooling curve needs at least two points"));
        }
        if occupation.iter().any(|n| !(*n > 0.0 && n.is_finite())) {
            return Err(Error::domain("mean photon numbers must be positive"));
        }
        if voltage.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("voltages must be finite"));
        }
        Ok(Self { voltage, occupation })
    }

    pub fn voltage(&self) -> &[f64] {
        &self.voltage
    }

    pub fn occupation(&self) -> &[f64] {
        &self.occupation
    }

    pub fn len(&self) -> usize {
        self.voltage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voltage.is_empty()
    }

    /// Two columns: V in μV, n̄.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let rows = crate::cli::io::read_columns(r, 2)?;
        Self::new(
            rows.iter().map(|r| r[0] * 1e-6).collect(),
            rows.iter().map(|r| r[1]).collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoolingOptions {
    /// Points with |V| above this are excluded; defaults to Δ/e.
    pub voltage_cutoff: Option<f64>,
    /// Off-plateau window |V| ≤ this; defaults to Δ/4e.
    pub plateau_voltage: Option<f64>,
    /// Search range for T_N (K).
    pub temperature_range: (f64, f64),
}

impl Default for CoolingOptions {
    fn default() -> Self {
        Self {
            voltage_cutoff: None,
            plateau_voltage: None,
            temperature_range: (0.03, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoolingFit {
    pub seed_temperature: f64,
    pub seed_drive_coupling: f64,
    pub seed_drive_occupation: f64,
    /// T_N (K).
    pub temperature: f64,
    /// γ_dr (1/s).
    pub drive_coupling: f64,
    pub drive_occupation: f64,
    /// One-sigma uncertainties of (T_N, γ_dr, n_dr), when available.
    pub std_errors: Option<[f64; 3]>,
    /// Number of data points used after the voltage cutoff.
    pub points_used: usize,
    pub report: LeastSquaresReport,
}

/// `(γ_QCR, n_QCR)` at each voltage for the circuit at temperature `t`.
pub fn qcr_baths(voltages: &[f64], c: &QcrCircuit, t: f64, q: &QuadratureSpec) -> Result<Vec<(f64, f64)>> {
    let mut circuit = *c;
    circuit.junction = circuit.junction.with_temperature(t);
    circuit.validate()?;
    voltages
        .par_iter()
        .map(|v| {
            let r = qcr_rates(*v, &circuit, q)?;
            Ok((r.gamma, r.occupation()?))
        })
        .collect()
}

fn mix(baths: &[(f64, f64)], gamma_dr: f64, n_dr: f64) -> Vec<f64> {
    baths
        .iter()
        .map(|(g, n)| (g * n + gamma_dr * n_dr) / (g + gamma_dr))
        .collect()
}

/// Model cooling curve for given free parameters.
pub fn cooling_model(
    voltages: &[f64],
    c: &QcrCircuit,
    temperature: f64,
    drive_coupling: f64,
    drive_occupation: f64,
    q: &QuadratureSpec,
) -> Result<Vec<f64>> {
    if !(drive_coupling >= 0.0 && drive_occupation >= 0.0) {
        return Err(Error::domain("drive-line coupling and occupation must be non-negative"));
    }
    Ok(mix(
        &qcr_baths(voltages, c, temperature, q)?,
        drive_coupling,
        drive_occupation,
    ))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Drive coupling implied by each point, `γ_QCR (n_QCR − n̄)/(n̄ − n_dr)`,
/// over points that sit clearly away from the plateau.
fn coupling_estimate(baths: &[(f64, f64)], data: &[f64], n_dr: f64) -> Option<f64> {
    let values: Vec<f64> = baths
        .iter()
        .zip(data)
        .filter(|(_, n)| (**n - n_dr).abs() > 0.2 * n_dr)
        .map(|((g, nq), n)| g * (nq - n) / (n - n_dr))
        .filter(|v| *v > 0.0 && v.is_finite())
        .collect();
    median(values)
}

/// Two-stage fit of `(T_N, γ_dr, n_dr)`. All other circuit parameters are
/// held at the values in `c`; `T_S` follows `T_N`.
pub fn fit_cooling_curve(
    data: &CoolingCurve,
    c: &QcrCircuit,
    q: &QuadratureSpec,
    opts: &CoolingOptions,
) -> Result<CoolingFit> {
    c.validate()?;
    let gap_v = c.junction.gap / E_CHARGE;
    let cutoff = opts.voltage_cutoff.unwrap_or(gap_v);
    let plateau = opts.plateau_voltage.unwrap_or(0.25 * gap_v);
    let (t_lo, t_hi) = opts.temperature_range;
    if !(t_lo > 0.0 && t_hi > t_lo) {
        return Err(Error::domain("invalid temperature search range"));
    }

    let (voltages, occupations): (Vec<f64>, Vec<f64>) = data
        .voltage
        .iter()
        .zip(&data.occupation)
        .filter(|(v, _)| v.abs() <= cutoff)
        .map(|(v, n)| (*v, *n))
        .unzip();
    if voltages.len() < 3 {
        return Err(Error::domain(format!(
            "only {} points below the {:.1} μV cutoff",
            voltages.len(),
            cutoff * 1e6
        )));
    }
    let off: Vec<f64> = voltages
        .iter()
        .zip(&occupations)
        .filter(|(v, _)| v.abs() <= plateau)
        .map(|(_, n)| *n)
        .collect();
    if off.is_empty() {
        return Err(Error::domain(format!(
            "no off-plateau points with |V| <= {:.1} μV",
            plateau * 1e6
        )));
    }
    let seed_n_dr = off.iter().sum::<f64>() / off.len() as f64;

    let mut cache: HashMap<u64, Vec<(f64, f64)>> = HashMap::new();
    let mut baths_at = |t: f64| -> Result<Vec<(f64, f64)>> {
        if let Some(b) = cache.get(&t.to_bits()) {
            return Ok(b.clone());
        }
        let b = qcr_baths(&voltages, c, t, q)?;
        cache.insert(t.to_bits(), b.clone());
        Ok(b)
    };
    let relative_cost =
        |model: &[f64]| -> f64 { model.iter().zip(&occupations).map(|(m, d)| ((m - d) / d).powi(2)).sum() };

    // Stage 1: coarse temperature scan with the closed-form coupling.
    let steps = 48;
    let mut best: Option<(f64, f64, f64)> = None;
    for k in 0..=steps {
        let t = t_lo * (t_hi / t_lo).powf(k as f64 / steps as f64);
        let baths = baths_at(t)?;
        let Some(g) = coupling_estimate(&baths, &occupations, seed_n_dr) else {
            continue;
        };
        let cost = relative_cost(&mix(&baths, g, seed_n_dr));
        if best.is_none_or(|(_, _, c0)| cost < c0) {
            best = Some((t, g, cost));
        }
    }
    let (seed_t, seed_g, _) =
        best.ok_or_else(|| Error::domain("cooling curve never leaves the off plateau; QCR-on region not detected"))?;

    // Stage 2: refine all three parameters.
    let residuals = |p: &[f64]| -> Result<Vec<f64>> {
        let baths = baths_at(p[0])?;
        Ok(mix(&baths, p[1].exp(), p[2])
            .iter()
            .zip(&occupations)
            .map(|(m, d)| (m - d) / d)
            .collect())
    };
    let bounds = Bounds::new(
        vec![t_lo, (seed_g * 1e-3).ln(), 0.0],
        vec![t_hi, (seed_g * 1e3).ln(), 10.0 * seed_n_dr + 1.0],
    )?;
    let lsq = LeastSquaresOptions {
        fd_step: 1e-5,
        ..LeastSquaresOptions::default()
    };
    let report = least_squares(residuals, &[seed_t, seed_g.ln(), seed_n_dr], Some(&bounds), &lsq)?;
    if report.termination == Termination::MaxIterations {
        return Err(Error::NonConvergence {
            iterations: report.iterations,
            cost: report.cost,
            params: vec![report.params[0], report.params[1].exp(), report.params[2]],
        });
    }
    let gamma_dr = report.params[1].exp();
    let std_errors = report.std_errors().map(|se| [se[0], se[1] * gamma_dr, se[2]]);
    Ok(CoolingFit {
        seed_temperature: seed_t,
        seed_drive_coupling: seed_g,
        seed_drive_occupation: seed_n_dr,
        temperature: report.params[0],
        drive_coupling: gamma_dr,
        drive_occupation: report.params[2],
        std_errors,
        points_used: voltages.len(),
        report,
    })
}
