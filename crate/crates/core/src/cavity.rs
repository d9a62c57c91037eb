//! Photon statistics of the resonator mode coupled to several baths.

use std::fmt;

use crate::units::{BOLTZMANN, HBAR};
use crate::{Error, Result};

mod master;

pub use master::{BathSchedule, ConstantBaths, Generator, Integrator, MasterEquation, SquareWave, Trajectory};

/// Largest allowed value of the last retained Fock probability.
pub const TAIL_TOLERANCE: f64 = 1e-6;
/// Default Fock-space truncation.
pub const DEFAULT_NMAX: usize = 60;

/// Normalized populations `P_0 .. P_nmax` of the resonator Fock states.
#[derive(Debug, Clone, PartialEq)]
pub struct FockDistribution {
    probs: Vec<f64>,
}

impl FockDistribution {
    /// Validate non-negative weights summing to one (within 1e-9) and
    /// renormalize exactly.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("probabilities sum to {total}, expected 1")));
        }
        Self::from_weights(probs)
    }

    /// Normalize arbitrary non-negative weights.
    pub fn from_weights(mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::domain("empty distribution"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::domain("probabilities must be finite and non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) {
            return Err(Error::domain("distribution has zero total weight"));
        }
        for p in probs.iter_mut() {
            *p /= total;
        }
        Ok(Self { probs })
    }

    pub fn vacuum(nmax: usize) -> Self {
        let mut probs = vec![0.0; nmax + 1];
        probs[0] = 1.0;
        Self { probs }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probabilities(self) -> Vec<f64> {
        self.probs
    }

    pub fn nmax(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        mean_photon(self)
    }

    /// Zero-pad (or truncate and renormalize) to `nmax`.
    pub fn with_nmax(&self, nmax: usize) -> Result<Self> {
        let mut probs = self.probs.clone();
        probs.resize(nmax + 1, 0.0);
        Self::from_weights(probs)
    }

    /// Total-variation distance `½ Σ |P_n − Q_n|`.
    pub fn total_variation(&self, other: &Self) -> f64 {
        let n = self.len().max(other.len());
        0.5 * (0..n).map(|i| (self.get(i) - other.get(i)).abs()).sum::<f64>()
    }

    /// Index of the most probable Fock state.
    pub fn argmax(&self) -> usize {
        self.probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Convex combination `a P + (1 − a) Q`.
    pub fn mix(&self, other: &Self, a: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::domain("mixing weight must lie in [0, 1]"));
        }
        let n = self.len().max(other.len());
        let probs = (0..n).map(|i| a * self.get(i) + (1.0 - a) * other.get(i)).collect();
        Self::from_weights(probs)
    }
}

/// `Σ_n n P_n`.
pub fn mean_photon(p: &FockDistribution) -> f64 {
    p.probs.iter().enumerate().map(|(n, x)| n as f64 * x).sum()
}

/// Which physical channel a bath represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BathLabel {
    Qcr,
    DriveLine,
    Intrinsic,
}

impl fmt::Display for BathLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BathLabel::Qcr => "qcr",
            BathLabel::DriveLine => "drive_line",
            BathLabel::Intrinsic => "intrinsic",
        };
        f.write_str(s)
    }
}

/// A dissipative channel with thermal occupation `occupation` and energy
/// decay rate `coupling` (1/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bath {
    pub label: BathLabel,
    pub occupation: f64,
    pub coupling: f64,
}

impl Bath {
    pub fn new(label: BathLabel, occupation: f64, coupling: f64) -> Result<Self> {
        if !(occupation >= 0.0 && occupation.is_finite()) {
            return Err(Error::domain(format!(
                "bath occupation must be finite and non-negative, got {occupation}"
            )));
        }
        if !(coupling >= 0.0 && coupling.is_finite()) {
            return Err(Error::domain(format!(
                "bath coupling must be finite and non-negative, got {coupling}"
            )));
        }
        Ok(Self {
            label,
            occupation,
            coupling,
        })
    }
}

/// Bose–Einstein occupation `1/(exp(ħω/k_BT) − 1)`.
pub fn bose_occupation(temperature: f64, omega: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::domain(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if !(omega > 0.0) {
        return Err(Error::domain("frequency must be positive"));
    }
    Ok(1.0 / (HBAR * omega / (BOLTZMANN * temperature)).exp_m1())
}

/// Inverse of [`bose_occupation`]: `T = (ħω/k_B) / ln(1 + 1/n̄)`.
pub fn temperature_from_occupation(occupation: f64, omega: f64) -> Result<f64> {
    if !(occupation > 0.0) {
        return Err(Error::domain(format!("occupation must be positive, got {occupation}")));
    }
    if !(omega > 0.0) {
        return Err(Error::domain("frequency must be positive"));
    }
    Ok(HBAR * omega / (BOLTZMANN * (1.0 / occupation).ln_1p()))
}

/// Coupling-weighted mean occupation of the resonator in contact with
/// `baths`: `Σ n_b γ_b / Σ γ_b`.
pub fn steady_state_mean(baths: &[Bath]) -> Result<f64> {
    let total: f64 = baths.iter().map(|b| b.coupling).sum();
    if !(total > 0.0) {
        return Err(Error::domain("total bath coupling must be positive"));
    }
    let weighted: f64 = baths.iter().map(|b| b.occupation * b.coupling).sum();
    Ok(weighted / total)
}

/// Build a distribution from a term generator, extending the cutoff past
/// `nmax` until the last element is below [`TAIL_TOLERANCE`].
fn truncated<F: Fn(usize) -> f64>(mean: f64, nmax: usize, term: F) -> Result<FockDistribution> {
    let mut probs: Vec<f64> = (0..=nmax).map(&term).collect();
    let limit = nmax.max(1) * 64 + 10_000;
    loop {
        let last = *probs.last().expect("non-empty");
        let n = probs.len() - 1;
        let total: f64 = probs.iter().sum();
        if (last < TAIL_TOLERANCE * total && n as f64 > mean) || n >= limit {
            break;
        }
        probs.push(term(n + 1));
    }
    FockDistribution::from_weights(probs)
}

/// Coherent-state statistics `P_n = e^{−n̄} n̄^n / n!`.
pub fn poisson_distribution(mean: f64, nmax: usize) -> Result<FockDistribution> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(Error::domain("mean photon number must be non-negative"));
    }
    if mean == 0.0 {
        return Ok(FockDistribution::vacuum(nmax));
    }
    let log_mean = mean.ln();
    truncated(mean, nmax, |n| {
        let log_fact: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
        (n as f64 * log_mean - mean - log_fact).exp()
    })
}

/// Thermal statistics `P_n = n̄^n / (n̄ + 1)^{n+1}`.
pub fn gibbs_distribution(mean: f64, nmax: usize) -> Result<FockDistribution> {
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(Error::domain("mean photon number must be non-negative"));
    }
    if mean == 0.0 {
        return Ok(FockDistribution::vacuum(nmax));
    }
    let ratio = mean / (mean + 1.0);
    truncated(mean, nmax, |n| ratio.powi(n as i32) / (mean + 1.0))
}

/// Energy decay rate `γ = P_r / (ħω_r n̄)` from the power balance of a
/// coherently driven resonator.
pub fn coherent_drive_decay_rate(power: f64, omega: f64, mean: f64) -> Result<f64> {
    if !(power > 0.0) {
        return Err(Error::domain("drive power must be positive"));
    }
    if !(omega > 0.0) {
        return Err(Error::domain("frequency must be positive"));
    }
    if !(mean > 0.0) {
        return Err(Error::domain("mean photon number must be positive"));
    }
    Ok(power / (HBAR * omega * mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{dbm_to_watts, ghz_to_angular, mhz_to_angular};
    use std::f64::consts::LN_2;

    fn omega_r() -> f64 {
        ghz_to_angular(4.6704)
    }

    #[test]
    fn bose_ln2_identity() {
        let w = omega_r();
        let t = HBAR * w / (BOLTZMANN * LN_2);
        assert!((bose_occupation(t, w).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bose_reference_points() {
        let w = omega_r();
        // ħω_r/k_B = 224.15 mK
        assert!((HBAR * w / BOLTZMANN - 0.224_15).abs() < 1e-5);
        assert!((bose_occupation(0.3234, w).unwrap() - 1.0).abs() < 0.01);
        assert!((bose_occupation(1.004, w).unwrap() - 4.0).abs() < 0.05);
        assert!(bose_occupation(0.0, w).is_err());
    }

    #[test]
    fn occupation_to_temperature() {
        let w = omega_r();
        let t = temperature_from_occupation(1.0, w).unwrap();
        assert!((t - HBAR * w / (BOLTZMANN * LN_2)).abs() < 1e-15);
        let t = temperature_from_occupation(0.119, w).unwrap();
        assert!((t - 0.0999).abs() < 5e-4, "{t}");
        let t = 0.15;
        let back = temperature_from_occupation(bose_occupation(t, w).unwrap(), w).unwrap();
        assert!(((back - t) / t).abs() < 1e-12);
        assert!(temperature_from_occupation(0.0, w).is_err());
    }

    #[test]
    fn mixing_formula() {
        let single = [Bath::new(BathLabel::DriveLine, 0.7, 3.0).unwrap()];
        assert!((steady_state_mean(&single).unwrap() - 0.7).abs() < 1e-15);

        let baths = [
            Bath::new(BathLabel::Qcr, 0.05, mhz_to_angular(20.0)).unwrap(),
            Bath::new(BathLabel::DriveLine, 1.0, mhz_to_angular(2.0)).unwrap(),
        ];
        assert!((steady_state_mean(&baths).unwrap() - 0.136_364).abs() < 1e-6);

        let dominated = [
            Bath::new(BathLabel::Qcr, 0.05, 1e5).unwrap(),
            Bath::new(BathLabel::DriveLine, 1.0, 1.0).unwrap(),
        ];
        let n = steady_state_mean(&dominated).unwrap();
        assert!(((n - 0.05) / 0.05).abs() < 1e-3);
        assert!(steady_state_mean(&[]).is_err());
    }

    #[test]
    fn distributions_basic() {
        let g = gibbs_distribution(0.8, DEFAULT_NMAX).unwrap();
        assert!((g.get(0) - 1.0 / 1.8).abs() < 1e-6);
        let p = poisson_distribution(1.21, DEFAULT_NMAX).unwrap();
        assert!((p.get(0) - 0.2982).abs() < 5e-5);
        assert!((p.get(1) - 0.3608).abs() < 5e-5);
        assert!((p.mean() - 1.21).abs() < 1e-9);
        for d in [
            gibbs_distribution(0.0, 10).unwrap(),
            poisson_distribution(0.0, 10).unwrap(),
        ] {
            assert_eq!(d.get(0), 1.0);
            assert_eq!(d.mean(), 0.0);
        }
        assert!((gibbs_distribution(2.0, DEFAULT_NMAX).unwrap().mean() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn truncation_extends_for_hot_states() {
        let g = gibbs_distribution(4.0, 10).unwrap();
        assert!(g.nmax() > 10);
        let last = g.probabilities()[g.nmax()];
        assert!(last < TAIL_TOLERANCE);
        assert!((g.mean() - 4.0).abs() < 1e-3);
        let p = poisson_distribution(30.0, 5).unwrap();
        assert!(p.nmax() > 30);
        assert!((p.mean() - 30.0).abs() < 1e-3);
    }

    #[test]
    fn distribution_validation() {
        assert!(FockDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(FockDistribution::new(vec![1.2, -0.2]).is_err());
        assert!(FockDistribution::from_weights(vec![0.0, 0.0]).is_err());
        let d = FockDistribution::from_weights(vec![2.0, 2.0]).unwrap();
        assert_eq!(d.probabilities(), &[0.5, 0.5]);
        assert!(Bath::new(BathLabel::Qcr, -0.1, 1.0).is_err());
        assert!(Bath::new(BathLabel::Qcr, 0.1, -1.0).is_err());
        assert!(Bath::new(BathLabel::Qcr, 0.0, 1.0).is_ok());
    }

    #[test]
    fn power_balance() {
        let w = omega_r();
        let g = coherent_drive_decay_rate(dbm_to_watts(-130.0), w, 1.21).unwrap();
        assert!((g / 2.67e7 - 1.0).abs() < 5e-3, "{g}");
        let g2 = coherent_drive_decay_rate(2.0 * dbm_to_watts(-130.0), w, 1.21).unwrap();
        assert!((g2 / g - 2.0).abs() < 1e-14);
        assert!(coherent_drive_decay_rate(1e-16, w, 1e300).unwrap() < 1e-270);
        assert!(coherent_drive_decay_rate(0.0, w, 1.0).is_err());
        assert!(coherent_drive_decay_rate(1e-16, w, 0.0).is_err());
    }
}
