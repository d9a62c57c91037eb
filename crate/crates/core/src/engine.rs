//! QCR-induced decay rate and effective temperature of the resonator mode.
//!
//! For single-photon processes the QCR acts on the resonator as a bath with
//!
//! ```text
//! γ_QCR = π (C_c/C_N)² (Z_r/R_T) Σ_{ℓ,τ=±1} ℓ F(τeV + ℓħω_r − E_N)
//! T_QCR = (ħω_r/k_B) / ln[F(eV + ħω_r − E_N) / F(eV − ħω_r − E_N)]
//! ```
//!
//! An rf tone on the bias line replaces `F` by a weighted sum of copies
//! shifted by integer multiples of the rf photon energy.

use std::f64::consts::PI;

use crate::cavity::{Bath, BathLabel};
use crate::physics::{forward_rate, JunctionParams, QuadratureSpec};
use crate::units::{BOLTZMANN, E_CHARGE, HBAR, PLANCK, VON_KLITZING};
use crate::{Error, Result};

/// Junction plus the resonator mode it is attached to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QcrCircuit {
    pub junction: JunctionParams,
    /// ω_r (rad/s).
    pub resonator_frequency: f64,
    /// Lumped-element characteristic impedance Z_r (Ω).
    pub impedance: f64,
    /// C_c/C_N; 1 for a junction attached directly to the resonator.
    pub capacitance_ratio: f64,
    /// Island charging energy E_N (J); 0 for a directly attached junction.
    pub charging_energy: f64,
}

impl QcrCircuit {
    /// Directly attached junction (`C_c/C_N = 1`, `E_N = 0`).
    pub fn new(junction: JunctionParams, resonator_frequency: f64, impedance: f64) -> Result<Self> {
        let c = Self {
            junction,
            resonator_frequency,
            impedance,
            capacitance_ratio: 1.0,
            charging_energy: 0.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.junction.validate()?;
        if !(self.resonator_frequency > 0.0 && self.resonator_frequency.is_finite()) {
            return Err(Error::domain("resonator frequency must be positive"));
        }
        if !(self.impedance > 0.0 && self.impedance.is_finite()) {
            return Err(Error::domain("characteristic impedance must be positive"));
        }
        if !(self.capacitance_ratio > 0.0 && self.capacitance_ratio <= 1.0) {
            return Err(Error::domain("capacitance ratio must lie in (0, 1]"));
        }
        if !self.charging_energy.is_finite() {
            return Err(Error::domain("charging energy must be finite"));
        }
        Ok(())
    }

    /// ħω_r (J).
    pub fn photon_energy(&self) -> f64 {
        HBAR * self.resonator_frequency
    }

    fn prefactor(&self) -> f64 {
        PI * self.capacitance_ratio.powi(2) * self.impedance / self.junction.tunneling_resistance
    }
}

/// Sideband weight model for an rf tone on the junction bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SidebandModel {
    /// Every tunneling event absorbs exactly one rf photon (`w₊₁ = 1`).
    SinglePhoton,
    /// Harmonic junction-voltage drive: `w_k = J_k(α)²`.
    TienGordon,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfDrive {
    /// Carrier frequency f_rf (Hz).
    pub carrier_frequency: f64,
    /// Junction-voltage amplitude in units of h f_rf / e.
    pub amplitude: f64,
    /// Largest sideband order |k| retained.
    pub sideband_cutoff: usize,
    pub model: SidebandModel,
}

impl RfDrive {
    pub fn single_photon(carrier_frequency: f64) -> Self {
        Self {
            carrier_frequency,
            amplitude: 1.0,
            sideband_cutoff: 1,
            model: SidebandModel::SinglePhoton,
        }
    }

    /// Tien–Gordon drive with a cutoff large enough for `amplitude`.
    pub fn tien_gordon(carrier_frequency: f64, amplitude: f64) -> Self {
        let sideband_cutoff = (amplitude.abs() + 10.0 * amplitude.abs().cbrt() + 12.0).ceil() as usize;
        Self {
            carrier_frequency,
            amplitude,
            sideband_cutoff,
            model: SidebandModel::TienGordon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_frequency > 0.0 && self.carrier_frequency.is_finite()) {
            return Err(Error::domain("rf carrier frequency must be positive"));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::domain("rf amplitude must be non-negative"));
        }
        if self.sideband_cutoff < 1 {
            return Err(Error::domain("sideband cutoff must be at least 1"));
        }
        Ok(())
    }

    /// rf photon energy h f_rf (J).
    pub fn photon_energy(&self) -> f64 {
        PLANCK * self.carrier_frequency
    }

    /// Non-zero sideband weights `(k, w_k)`, normalized to unit sum.
    ///
    /// Zero amplitude yields exactly `[(0, 1.0)]` for both models.
    pub fn weights(&self) -> Result<Vec<(i32, f64)>> {
        self.validate()?;
        if self.amplitude == 0.0 {
            return Ok(vec![(0, 1.0)]);
        }
        match self.model {
            SidebandModel::SinglePhoton => Ok(vec![(1, 1.0)]),
            SidebandModel::TienGordon => {
                let kmax = self.sideband_cutoff;
                let j = bessel_j_integer_orders(self.amplitude, kmax);
                let mut w = Vec::with_capacity(2 * kmax + 1);
                for k in -(kmax as i32)..=(kmax as i32) {
                    let jk = j[k.unsigned_abs() as usize];
                    w.push((k, jk * jk));
                }
                let sum: f64 = w.iter().map(|(_, x)| x).sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::SidebandWeights { sum });
                }
                Ok(w.into_iter()
                    .filter(|(_, x)| *x > 0.0)
                    .map(|(k, x)| (k, x / sum))
                    .collect())
            }
        }
    }
}

/// Bessel functions `J_0(x) .. J_kmax(x)` of the first kind by Miller's
/// downward recurrence, normalized with `J_0 + 2 Σ J_2k = 1`.
pub fn bessel_j_integer_orders(x: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let start = {
        let m = kmax.max(ax.ceil() as usize) + 30 + (40.0 * ax.max(1.0)).sqrt() as usize;
        m + (m % 2)
    };
    let mut above = 0.0;
    let mut current = 1e-300;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let below = 2.0 * k as f64 / ax * current - above;
        above = current;
        current = below;
        if k - 1 <= kmax {
            out[k - 1] = current;
        }
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * current;
        }
        if current.abs() > 1e250 {
            let s = 1e-250;
            current *= s;
            above *= s;
            norm *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    norm += current;
    // The k = 0 slot was written last as `current`.
    for (k, v) in out.iter_mut().enumerate() {
        *v /= norm;
        if x < 0.0 && k % 2 == 1 {
            *v = -*v;
        }
    }
    out
}

/// Decay rate and up/down ratio of the QCR bath at one bias point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QcrRates {
    /// γ_QCR (1/s).
    pub gamma: f64,
    /// `F(eV + ħω_r − E_N) / F(eV − ħω_r − E_N)`.
    pub rate_ratio: f64,
    /// ħω_r (J).
    pub photon_energy: f64,
}

impl QcrRates {
    /// Effective bath temperature T_QCR (K). Ratios at or below one are a
    /// population-inversion regime and are reported as [`Error::Inverted`].
    pub fn temperature(&self) -> Result<f64> {
        if !(self.rate_ratio > 1.0) {
            return Err(Error::Inverted { ratio: self.rate_ratio });
        }
        Ok(self.photon_energy / (BOLTZMANN * self.rate_ratio.ln()))
    }

    /// Bath occupation `1/(ratio − 1)`, computed without going through the
    /// temperature.
    pub fn occupation(&self) -> Result<f64> {
        if !(self.rate_ratio > 1.0) {
            return Err(Error::Inverted { ratio: self.rate_ratio });
        }
        Ok(1.0 / (self.rate_ratio - 1.0))
    }

    pub fn bath(&self) -> Result<Bath> {
        Bath::new(BathLabel::Qcr, self.occupation()?, self.gamma)
    }
}

fn rates_with<R>(voltage: f64, c: &QcrCircuit, rate: R) -> Result<QcrRates>
where
    R: Fn(f64) -> Result<f64>,
{
    let ev = E_CHARGE * voltage;
    let hw = c.photon_energy();
    let en = c.charging_energy;
    let up_fwd = rate(ev + hw - en)?;
    let dn_fwd = rate(ev - hw - en)?;
    let up_bwd = rate(-ev + hw - en)?;
    let dn_bwd = rate(-ev - hw - en)?;
    let gamma = c.prefactor() * ((up_fwd - dn_fwd) + (up_bwd - dn_bwd));
    Ok(QcrRates {
        gamma,
        rate_ratio: up_fwd / dn_fwd,
        photon_energy: hw,
    })
}

/// γ_QCR and the T_QCR rate ratio at dc bias `voltage`.
pub fn qcr_rates(voltage: f64, c: &QcrCircuit, q: &QuadratureSpec) -> Result<QcrRates> {
    rates_with(voltage, c, |e| forward_rate(e, &c.junction, q))
}

/// QCR-induced resonator decay rate γ_QCR (1/s).
pub fn gamma_qcr(voltage: f64, c: &QcrCircuit, q: &QuadratureSpec) -> Result<f64> {
    qcr_rates(voltage, c, q).map(|r| r.gamma)
}

/// Effective temperature of the QCR bath (K).
pub fn t_qcr(voltage: f64, c: &QcrCircuit, q: &QuadratureSpec) -> Result<f64> {
    let ev = E_CHARGE * voltage;
    let hw = c.photon_energy();
    let en = c.charging_energy;
    let ratio = forward_rate(ev + hw - en, &c.junction, q)? / forward_rate(ev - hw - en, &c.junction, q)?;
    QcrRates {
        gamma: f64::NAN,
        rate_ratio: ratio,
        photon_energy: hw,
    }
    .temperature()
}

/// Occupation of the QCR bath, `1/[F(eV+ħω_r−E_N)/F(eV−ħω_r−E_N) − 1]`.
pub fn n_qcr(voltage: f64, c: &QcrCircuit, q: &QuadratureSpec) -> Result<f64> {
    let ev = E_CHARGE * voltage;
    let hw = c.photon_energy();
    let en = c.charging_energy;
    let ratio = forward_rate(ev + hw - en, &c.junction, q)? / forward_rate(ev - hw - en, &c.junction, q)?;
    QcrRates {
        gamma: f64::NAN,
        rate_ratio: ratio,
        photon_energy: hw,
    }
    .occupation()
}

/// Direction of a charge transfer across the junction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// Rate Γ±_{q m m'} of a transition `|q m⟩ → |q+1 m'⟩` with caller-supplied
/// matrix element `M_{mm'}`.
#[allow(clippy::too_many_arguments)]
pub fn general_transition_rate(
    charge_state: i32,
    from: u32,
    to: u32,
    matrix_element: f64,
    voltage: f64,
    c: &QcrCircuit,
    direction: Direction,
    q: &QuadratureSpec,
) -> Result<f64> {
    if matrix_element == 0.0 {
        return Ok(0.0);
    }
    let s = direction.sign();
    let ell = from as f64 - to as f64;
    let charging = c.charging_energy * (1.0 + s * 2.0 * charge_state as f64);
    let energy = s * E_CHARGE * voltage + ell * c.photon_energy() - charging;
    let f = forward_rate(energy, &c.junction, q)?;
    Ok(matrix_element.powi(2) * VON_KLITZING / c.junction.tunneling_resistance * f)
}

/// Resonator transition rate Γ_{mm'} summed over both tunneling directions.
pub fn resonator_transition_rate(
    from: u32,
    to: u32,
    matrix_element: f64,
    voltage: f64,
    c: &QcrCircuit,
    q: &QuadratureSpec,
) -> Result<f64> {
    if matrix_element == 0.0 {
        return Ok(0.0);
    }
    let ell = from as f64 - to as f64;
    let ev = E_CHARGE * voltage;
    let base = ell * c.photon_energy() - c.charging_energy;
    let sum = forward_rate(ev + base, &c.junction, q)? + forward_rate(-ev + base, &c.junction, q)?;
    Ok(matrix_element.powi(2) * VON_KLITZING / c.junction.tunneling_resistance * sum)
}

/// Lumped impedance `(4/π) Z_0` of the fundamental mode of a quarter-wave
/// coplanar-waveguide resonator with characteristic impedance `Z_0`.
pub fn lumped_impedance(z0: f64) -> Result<f64> {
    if !(z0 >= 0.0) {
        return Err(Error::domain("characteristic impedance must be non-negative"));
    }
    Ok(4.0 / PI * z0)
}

/// γ_QCR and rate ratio with the rf-dressed rate
/// `F_eff(E) = Σ_k w_k F(E + k h f_rf)`.
pub fn rf_effective_rates(voltage: f64, rf: &RfDrive, c: &QcrCircuit, q: &QuadratureSpec) -> Result<QcrRates> {
    let weights = rf.weights()?;
    let sum: f64 = weights.iter().map(|(_, w)| w).sum();
    if (sum - 1.0).abs() > 1e-9 || weights.iter().any(|(_, w)| *w < 0.0) {
        return Err(Error::SidebandWeights { sum });
    }
    let hf = rf.photon_energy();
    rates_with(voltage, c, |e| {
        let mut acc = 0.0;
        for &(k, w) in &weights {
            acc += w * forward_rate(e + k as f64 * hf, &c.junction, q)?;
        }
        Ok(acc)
    })
}

/// Periodic square-wave modulation of the QCR bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseProfile {
    /// Period (s).
    pub period: f64,
    /// Fraction of the period spent in the on state.
    pub duty_cycle: f64,
    pub on_bias: f64,
    pub off_bias: f64,
    pub on_rf: Option<RfDrive>,
}

impl PulseProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::domain("pulse period must be positive"));
        }
        if !(0.0..=1.0).contains(&self.duty_cycle) {
            return Err(Error::domain("duty cycle must lie in [0, 1]"));
        }
        if let Some(rf) = &self.on_rf {
            rf.validate()?;
        }
        Ok(())
    }

    /// Whether the pulse is in its on state at time `t`.
    pub fn is_on(&self, t: f64) -> bool {
        let phase = (t / self.period).rem_euclid(1.0);
        phase < self.duty_cycle
    }
}

/// Rates of the QCR bath in the on and off states of a pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseRates {
    pub on: QcrRates,
    pub off: QcrRates,
}

impl PulseRates {
    pub fn evaluate(p: &PulseProfile, c: &QcrCircuit, q: &QuadratureSpec) -> Result<Self> {
        p.validate()?;
        let on = match &p.on_rf {
            Some(rf) => rf_effective_rates(p.on_bias, rf, c, q)?,
            None => qcr_rates(p.on_bias, c, q)?,
        };
        let off = qcr_rates(p.off_bias, c, q)?;
        Ok(Self { on, off })
    }
}

/// Duty-weighted QCR rate `γ̄` and occupation-rate product `(n γ)̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseAverage {
    pub gamma: f64,
    pub occupation_rate: f64,
}

impl PulseAverage {
    /// The averaged pair as an effective bath.
    pub fn bath(&self) -> Result<Bath> {
        let occupation = if self.gamma > 0.0 {
            self.occupation_rate / self.gamma
        } else {
            0.0
        };
        Bath::new(BathLabel::Qcr, occupation, self.gamma)
    }
}

/// Time-averaged QCR bath for a pulse whose period is short compared to
/// the resonator response time.
pub fn pulse_averaged_rates(p: &PulseProfile, c: &QcrCircuit, q: &QuadratureSpec) -> Result<PulseAverage> {
    p.validate()?;
    let on = match &p.on_rf {
        Some(rf) => rf_effective_rates(p.on_bias, rf, c, q)?,
        None => qcr_rates(p.on_bias, c, q)?,
    };
    if p.duty_cycle == 1.0 {
        return Ok(PulseAverage {
            gamma: on.gamma,
            occupation_rate: on.occupation()? * on.gamma,
        });
    }
    let off = qcr_rates(p.off_bias, c, q)?;
    average_pulse(p.duty_cycle, &on, &off)
}

pub(crate) fn average_pulse(duty: f64, on: &QcrRates, off: &QcrRates) -> Result<PulseAverage> {
    let d = duty;
    let on_product = if d > 0.0 { on.occupation()? * on.gamma } else { 0.0 };
    let off_product = if d < 1.0 { off.occupation()? * off.gamma } else { 0.0 };
    Ok(PulseAverage {
        gamma: d * on.gamma + (1.0 - d) * off.gamma,
        occupation_rate: d * on_product + (1.0 - d) * off_product,
    })
}

/// Bias voltage at which `gamma(V)` first reaches `threshold`, searched on
/// `[0, v_max]` and refined by bisection.
pub fn onset_voltage<G>(gamma: G, threshold: f64, v_max: f64, steps: usize) -> Result<f64>
where
    G: Fn(f64) -> Result<f64>,
{
    let mut prev_v = 0.0;
    if gamma(prev_v)? >= threshold {
        return Ok(0.0);
    }
    for i in 1..=steps {
        let v = v_max * i as f64 / steps as f64;
        if gamma(v)? >= threshold {
            let (mut lo, mut hi) = (prev_v, v);
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if gamma(mid)? >= threshold {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
        prev_v = v;
    }
    Err(Error::domain(
        "rate never reaches the onset threshold in the searched range",
    ))
}
