//! Tunneling resistance and Dynes parameter from a junction IV curve.

use std::io::BufRead;

use rayon::prelude::*;

use super::lsq::{least_squares, Bounds, LeastSquaresOptions, LeastSquaresReport, Termination};
use crate::physics::{nis_current, JunctionParams, QuadratureSpec};
use crate::units::E_CHARGE;
use crate::{Error, Result};

/// Minimum number of samples in an IV curve.
pub const MIN_POINTS: usize = 20;

/// Current–voltage samples (V, A) on a strictly increasing voltage grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IvData {
    voltage: Vec<f64>,
    current: Vec<f64>,
}

impl IvData {
    pub fn new(voltage: Vec<f64>, current: Vec<f64>) -> Result<Self> {
        if voltage.len() != current.len() {
            return Err(Error::domain("voltage and current lengths differ"));
        }
        if voltage.len() < MIN_POINTS {
            return Err(Error::domain(format!(
                "IV curve needs at least {MIN_POINTS} points, got {}",
                voltage.len()
            )));
        }
        if voltage.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("IV voltages must be strictly increasing"));
        }
        if voltage.iter().chain(&current).any(|v| !v.is_finite()) {
            return Err(Error::domain("IV data contains non-finite values"));
        }
        Ok(Self { voltage, current })
    }

    pub fn voltage(&self) -> &[f64] {
        &self.voltage
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }

    pub fn len(&self) -> usize {
        self.voltage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voltage.is_empty()
    }

    /// Two columns: V in μV, I in nA. Rows are sorted by voltage.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut rows = crate::cli::io::read_columns(r, 2)?;
        rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
        Self::new(
            rows.iter().map(|r| r[0] * 1e-6).collect(),
            rows.iter().map(|r| r[1] * 1e-9).collect(),
        )
    }

    /// Model IV on `voltages`, evaluated in parallel.
    pub fn synthesize(voltages: &[f64], j: &JunctionParams, q: &QuadratureSpec) -> Result<Self> {
        let current = voltages
            .par_iter()
            .map(|v| nis_current(*v, j, q))
            .collect::<Result<Vec<f64>>>()?;
        Self::new(voltages.to_vec(), current)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvFit {
    /// Stage 1: R_T from the above-gap slope.
    pub seed_resistance: f64,
    /// Stage 1: γ_D from the subgap-to-normal conductance ratio.
    pub seed_dynes: f64,
    pub tunneling_resistance: f64,
    pub dynes: f64,
    /// One-sigma uncertainties of (R_T, γ_D), when available.
    pub std_errors: Option<[f64; 2]>,
    pub report: LeastSquaresReport,
}

/// Least-squares slope of `y` against `x`.
fn slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Slope over `|V| ≥ lo` (and `≤ hi`), fitted separately on each branch and
/// averaged.
fn branch_slope(iv: &IvData, lo: f64, hi: f64) -> Option<f64> {
    let pick = |sign: f64| -> Vec<(f64, f64)> {
        iv.voltage
            .iter()
            .zip(&iv.current)
            .filter(|(v, _)| sign * **v >= lo && sign * **v <= hi)
            .map(|(v, i)| (*v, *i))
            .collect()
    };
    let slopes: Vec<f64> = [1.0, -1.0].iter().filter_map(|s| slope(&pick(*s))).collect();
    (!slopes.is_empty()).then(|| slopes.iter().sum::<f64>() / slopes.len() as f64)
}

/// Two-stage extraction of `(R_T, γ_D)`. `seed` supplies Δ and the lead
/// temperatures, which are held fixed.
pub fn extract_rt_gammad(iv: &IvData, seed: &JunctionParams, q: &QuadratureSpec) -> Result<IvFit> {
    seed.validate()?;
    let gap_v = seed.gap / E_CHARGE;
    let vmax = iv.voltage.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if vmax <= 2.0 * gap_v {
        return Err(Error::domain(format!(
            "IV span {:.1} μV does not reach 2Δ/e = {:.1} μV",
            vmax * 1e6,
            2.0 * gap_v * 1e6
        )));
    }
    let normal = branch_slope(iv, 2.0 * gap_v, f64::INFINITY)
        .ok_or_else(|| Error::domain("fewer than two points above 2Δ/e"))?;
    let subgap = branch_slope(iv, 0.0, 0.5 * gap_v).ok_or_else(|| Error::domain("fewer than two points below Δ/2e"))?;
    if !(normal > 0.0) {
        return Err(Error::domain("IV curve has no positive above-gap conductance"));
    }
    let seed_resistance = 1.0 / normal;
    // The Dynes conductance at zero bias is γ_D/sqrt(1+γ_D²) in units of 1/R_T.
    let ratio = (subgap / normal).clamp(1e-7, 0.5);
    let seed_dynes = ratio / (1.0 - ratio * ratio).sqrt();

    let scale_floor = 1e-6 * iv.current.iter().fold(0.0_f64, |m, i| m.max(i.abs()));
    let weights: Vec<f64> = iv.current.iter().map(|i| 1.0 / i.abs().max(scale_floor)).collect();
    let model = |p: &[f64]| -> Result<Vec<f64>> {
        let mut j = *seed;
        j.tunneling_resistance = p[0].exp();
        j.dynes = p[1].exp();
        iv.voltage
            .par_iter()
            .zip(&iv.current)
            .zip(&weights)
            .map(|((v, i), w)| Ok((nis_current(*v, &j, q)? - i) * w))
            .collect()
    };
    let bounds = Bounds::new(
        vec![(seed_resistance / 10.0).ln(), 1e-7_f64.ln()],
        vec![(seed_resistance * 10.0).ln(), 0.5_f64.ln()],
    )?;
    let opts = LeastSquaresOptions {
        relative_tolerance: 1e-12,
        ..LeastSquaresOptions::default()
    };
    let report = least_squares(model, &[seed_resistance.ln(), seed_dynes.ln()], Some(&bounds), &opts)?;
    if report.termination == Termination::MaxIterations {
        return Err(Error::NonConvergence {
            iterations: report.iterations,
            cost: report.cost,
            params: report.params.iter().map(|p| p.exp()).collect(),
        });
    }
    let rt = report.params[0].exp();
    let dynes = report.params[1].exp();
    let std_errors = report.std_errors().map(|se| [se[0] * rt, se[1] * dynes]);
    Ok(IvFit {
        seed_resistance,
        seed_dynes,
        tunneling_resistance: rt,
        dynes,
        std_errors,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{micro_ev, micro_volt};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn junction() -> JunctionParams {
        JunctionParams::new(micro_ev(220.0), 9.25e-3, 14.7e3, 0.15, 0.15, 0.54e-15).unwrap()
    }

    fn grid() -> Vec<f64> {
        (0..=120).map(|k| micro_volt(-600.0 + 10.0 * k as f64)).collect()
    }

    fn synthetic(noise: f64, seed: u64) -> IvData {
        let clean = IvData::synthesize(&grid(), &junction(), &QuadratureSpec::iv()).unwrap();
        let normal = Normal::new(0.0, noise).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let current = clean
            .current()
            .iter()
            .map(|i| i * (1.0 + normal.sample(&mut rng)))
            .collect();
        IvData::new(clean.voltage().to_vec(), current).unwrap()
    }

    #[test]
    fn noise_free_recovery() {
        let fit = extract_rt_gammad(&synthetic(0.0, 0), &junction(), &QuadratureSpec::iv()).unwrap();
        assert!(
            (fit.tunneling_resistance / 14.7e3 - 1.0).abs() < 5e-3,
            "{}",
            fit.tunneling_resistance
        );
        assert!((fit.dynes / 9.25e-3 - 1.0).abs() < 5e-3, "{}", fit.dynes);
        // The slope seed is biased by the gap-edge DOS but lands nearby.
        assert!((fit.seed_resistance / 14.7e3 - 1.0).abs() < 0.2);
        assert!(fit.seed_dynes > 9.25e-4 && fit.seed_dynes < 9.25e-2);
    }

    #[test]
    fn one_percent_noise_recovery() {
        for seed in [1, 2, 3] {
            let fit = extract_rt_gammad(&synthetic(0.01, seed), &junction(), &QuadratureSpec::iv()).unwrap();
            assert!((fit.tunneling_resistance / 14.7e3 - 1.0).abs() < 0.05, "seed {seed}");
            assert!((fit.dynes / 9.25e-3 - 1.0).abs() < 0.05, "seed {seed}: {}", fit.dynes);
        }
    }

    #[test]
    fn flat_iv_is_a_domain_error() {
        let iv = IvData::new(grid(), vec![0.0; grid().len()]).unwrap();
        assert!(matches!(
            extract_rt_gammad(&iv, &junction(), &QuadratureSpec::iv()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn narrow_span_is_a_domain_error() {
        let v: Vec<f64> = (0..40).map(|k| micro_volt(-200.0 + 10.0 * k as f64)).collect();
        let iv = IvData::synthesize(&v, &junction(), &QuadratureSpec::iv()).unwrap();
        assert!(matches!(
            extract_rt_gammad(&iv, &junction(), &QuadratureSpec::iv()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn data_validation() {
        assert!(IvData::new(vec![0.0; 5], vec![0.0; 5]).is_err());
        let mut v = grid();
        v.swap(3, 4);
        assert!(IvData::new(v, vec![0.0; grid().len()]).is_err());
        assert!(IvData::new(grid(), vec![0.0; 3]).is_err());
    }

    #[test]
    fn text_input_in_lab_units() {
        let mut text = String::from("# V_uV I_nA\n");
        for k in (0..30).rev() {
            text.push_str(&format!(
                "{} {}\n",
                k as f64 * 20.0 - 300.0,
                (k as f64 * 20.0 - 300.0) / 14.7
            ));
        }
        let iv = IvData::read_text(text.as_bytes()).unwrap();
        assert_eq!(iv.len(), 30);
        assert!((iv.voltage()[0] + 300e-6).abs() < 1e-18);
        assert!((iv.current()[29] - 280e-6 / 14.7e3 * 1e3 * 1e-3).abs() < 1e-15);
    }
}
