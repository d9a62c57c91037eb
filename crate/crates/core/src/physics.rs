//! Tunneling kernel of a normal-metal–insulator–superconductor junction.
//!
//! Everything downstream reduces to the normalized forward tunneling rate
//!
//! ```text
//! F(E) = (1/h) ∫ dε n_S(ε) [1 − f_S(ε)] f_N(ε − E)
//! ```
//!
//! with `n_S` the Dynes-broadened BCS density of states and `f_N`, `f_S` the
//! Fermi functions of the normal and superconducting leads.

use num_complex::Complex64;

pub use crate::quadrature::QuadratureSpec;
use crate::quadrature::{integrate, Integral};
use crate::units::{BOLTZMANN, E_CHARGE, PLANCK, VON_KLITZING};
use crate::{Error, Result};

/// Largest reduced energy passed to `exp` in occupation factors.
const EXP_CLAMP: f64 = 700.0;

/// The integrand envelope is cut once its Fermi tail has decayed by
/// `exp(-TAIL_EXPONENT)` from the edge of the transport window.
const TAIL_EXPONENT: f64 = 52.0;

/// Physical parameters of the NIS junction. Energies in J, temperatures in K.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JunctionParams {
    /// Superconductor gap Δ.
    pub gap: f64,
    /// Dynes broadening γ_D (dimensionless).
    pub dynes: f64,
    /// Tunneling resistance R_T (Ω).
    pub tunneling_resistance: f64,
    /// Normal-metal electron temperature T_N.
    pub t_normal: f64,
    /// Superconductor temperature T_S. Not independently known for the
    /// measured device; presets set it equal to `t_normal`.
    pub t_super: f64,
    /// Junction capacitance C_NIS (F). Stored for bookkeeping only; it does
    /// not enter the tunneling rates.
    pub junction_capacitance: f64,
}

impl JunctionParams {
    pub fn new(
        gap: f64,
        dynes: f64,
        tunneling_resistance: f64,
        t_normal: f64,
        t_super: f64,
        junction_capacitance: f64,
    ) -> Result<Self> {
        let j = Self {
            gap,
            dynes,
            tunneling_resistance,
            t_normal,
            t_super,
            junction_capacitance,
        };
        j.validate()?;
        Ok(j)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gap > 0.0 && self.gap.is_finite()) {
            return Err(Error::domain(format!("gap must be positive, got {}", self.gap)));
        }
        if !(self.dynes > 0.0 && self.dynes < 1.0) {
            return Err(Error::domain(format!(
                "Dynes parameter must lie in (0, 1), got {}",
                self.dynes
            )));
        }
        if !(self.tunneling_resistance > 0.0 && self.tunneling_resistance.is_finite()) {
            return Err(Error::domain("tunneling resistance must be positive"));
        }
        if !(self.t_normal > 0.0 && self.t_super > 0.0) {
            return Err(Error::domain("lead temperatures must be positive"));
        }
        if !(self.junction_capacitance >= 0.0) {
            return Err(Error::domain("junction capacitance must be non-negative"));
        }
        Ok(())
    }

    /// Same junction with both leads at `temperature`.
    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.t_normal = temperature;
        self.t_super = temperature;
        self
    }
}

/// `1 / (exp(x) + 1)` with the exponent clamped to ±700.
#[inline]
pub(crate) fn fermi_reduced(x: f64) -> f64 {
    1.0 / (x.clamp(-EXP_CLAMP, EXP_CLAMP).exp() + 1.0)
}

/// Fermi–Dirac occupation of a level at energy `energy` (J) measured from
/// the chemical potential.
pub fn fermi_occupation(energy: f64, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::domain(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    Ok(fermi_reduced(energy / (BOLTZMANN * temperature)))
}

/// Dynes DOS in units of the gap: `x = ε/Δ`.
#[inline]
pub(crate) fn dos_reduced(x: f64, dynes: f64) -> f64 {
    let z = Complex64::new(x, dynes);
    let ratio = z / (z * z - 1.0).sqrt();
    ratio.re.abs()
}

/// Normalized quasiparticle density of states of a Dynes superconductor,
/// `|Re[(ε + iγΔ)/sqrt((ε + iγΔ)² − Δ²)]|`.
pub fn dynes_dos(energy: f64, gap: f64, dynes: f64) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(Error::domain("gap must be positive"));
    }
    if !(dynes > 0.0) {
        return Err(Error::domain(
            "Dynes parameter must be positive (the γ_D = 0 limit is not supported)",
        ));
    }
    Ok(dos_reduced(energy / gap, dynes))
}

/// Forward tunneling rate with its quadrature error estimate, both in 1/s.
pub fn forward_rate_integral(energy: f64, j: &JunctionParams, q: &QuadratureSpec) -> Result<Integral> {
    let gap = j.gap;
    let e = energy / gap;
    // Thermal energies in units of the gap.
    let ts = BOLTZMANN * j.t_super / gap;
    let tn = BOLTZMANN * j.t_normal / gap;
    let dynes = j.dynes;

    let integrand = move |x: f64| dos_reduced(x, dynes) * fermi_reduced(-x / ts) * fermi_reduced((x - e) / tn);

    // Below min(0, e) the weight decays as exp(x/ts), above max(0, e) as
    // exp(-x/tn).
    let lower = e.min(0.0) - TAIL_EXPONENT * ts;
    let upper = e.max(0.0) + TAIL_EXPONENT * tn;
    let peak = 10.0 * dynes;
    let breakpoints = [-1.0 - peak, -1.0, -1.0 + peak, 0.0, e, 1.0 - peak, 1.0, 1.0 + peak];

    let scale = gap / PLANCK;
    let r = integrate(
        integrand,
        lower,
        upper,
        &breakpoints,
        q.relative_tolerance,
        q.absolute_floor / scale,
        q.max_subdivisions,
    )
    .map_err(|err| match err {
        Error::Quadrature {
            estimate,
            error,
            subdivisions,
        } => Error::Quadrature {
            estimate: estimate * scale,
            error: error * scale,
            subdivisions,
        },
        other => other,
    })?;
    Ok(Integral {
        value: r.value * scale,
        error: r.error * scale,
        panels: r.panels,
    })
}

/// Normalized forward tunneling rate `F(E)` (1/s) for an energy offset `E`
/// (J) between the normal-metal and superconductor Fermi levels.
pub fn forward_rate(energy: f64, j: &JunctionParams, q: &QuadratureSpec) -> Result<f64> {
    forward_rate_integral(energy, j, q).map(|r| r.value)
}

/// Quasiparticle current (A) through the junction at bias `voltage` (V):
/// `I = e (R_K/R_T) [F(eV) − F(−eV)]`.
pub fn nis_current(voltage: f64, j: &JunctionParams, q: &QuadratureSpec) -> Result<f64> {
    let ev = E_CHARGE * voltage;
    let forward = forward_rate(ev, j, q)?;
    let backward = forward_rate(-ev, j, q)?;
    Ok(E_CHARGE * (VON_KLITZING / j.tunneling_resistance) * (forward - backward))
}

/// Differential conductance dI/dV (1/Ω) by a central difference with half
/// step `dv`.
pub fn differential_conductance(voltage: f64, dv: f64, j: &JunctionParams, q: &QuadratureSpec) -> Result<f64> {
    if !(dv > 0.0) {
        return Err(Error::domain("voltage step must be positive"));
    }
    let hi = nis_current(voltage + dv, j, q)?;
    let lo = nis_current(voltage - dv, j, q)?;
    Ok((hi - lo) / (2.0 * dv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{micro_ev, micro_volt, milli_kelvin, HBAR};
    use std::f64::consts::PI;

    fn table_junction(t: f64) -> JunctionParams {
        JunctionParams::new(micro_ev(220.0), 9.25e-3, 14.7e3, t, t, 0.54e-15).unwrap()
    }

    fn photon_energy() -> f64 {
        HBAR * 2.0 * PI * 4.6704e9
    }

    /// Plain trapezoid rule on a uniform grid; independent of the adaptive
    /// integrator.
    fn trapezoid_rate(energy: f64, j: &JunctionParams, points: usize) -> f64 {
        let kts = BOLTZMANN * j.t_super;
        let ktn = BOLTZMANN * j.t_normal;
        let a = -50.0 * j.gap + energy.min(0.0);
        let b = 50.0 * j.gap + energy.max(0.0);
        let h = (b - a) / (points - 1) as f64;
        let f = |eps: f64| {
            let z = Complex64::new(eps, j.dynes * j.gap);
            let n = (z / (z * z - j.gap * j.gap).sqrt()).re.abs();
            let one_minus_fs = 1.0 / ((-eps / kts).exp() + 1.0);
            let fn_ = 1.0 / (((eps - energy) / ktn).exp() + 1.0);
            n * one_minus_fs * fn_
        };
        let mut sum = 0.5 * (f(a) + f(b));
        for i in 1..points - 1 {
            sum += f(a + i as f64 * h);
        }
        sum * h / PLANCK
    }

    #[test]
    fn fermi_symmetry_point() {
        assert_eq!(fermi_occupation(0.0, 0.1).unwrap(), 0.5);
        assert_eq!(fermi_occupation(0.0, 3.0).unwrap(), 0.5);
    }

    #[test]
    fn fermi_complement() {
        let t = 0.15;
        let e = 3.0 * BOLTZMANN * t;
        let s = fermi_occupation(e, t).unwrap() + fermi_occupation(-e, t).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fermi_ten_kt() {
        // 1/(e^10 + 1) = 4.5397868702434395e-5
        let t = 0.1;
        let v = fermi_occupation(10.0 * BOLTZMANN * t, t).unwrap();
        assert!((v - 4.539_786_870_243_44e-5).abs() < 1e-17);
    }

    #[test]
    fn fermi_extreme_arguments_saturate() {
        let t = 0.01;
        let kt = BOLTZMANN * t;
        let hi = fermi_occupation(1e4 * kt, t).unwrap();
        let lo = fermi_occupation(-1e4 * kt, t).unwrap();
        assert!((0.0..1e-300).contains(&hi));
        assert_eq!(lo, 1.0);
    }

    #[test]
    fn fermi_rejects_non_positive_temperature() {
        assert!(matches!(fermi_occupation(0.0, 0.0), Err(Error::Domain(_))));
        assert!(fermi_occupation(0.0, -1.0).is_err());
    }

    #[test]
    fn dos_at_zero_energy() {
        let g = 9.25e-3;
        let v = dynes_dos(0.0, 1.0, g).unwrap();
        assert!((v - g / (1.0 + g * g).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dos_high_energy_limit() {
        let v = dynes_dos(100.0, 1.0, 1e-2).unwrap();
        assert!((v - 1.0).abs() < 1e-3);
    }

    #[test]
    fn dos_at_gap_edge() {
        // At ε = Δ: |Re[(1+iγ)/sqrt(2iγ − γ²)]| = 5.2349 for γ = 9.25e-3;
        // leading small-γ estimate 1/(2√γ) = 5.1988.
        let g: f64 = 9.25e-3;
        let v = dynes_dos(1.0, 1.0, g).unwrap();
        let estimate = 1.0 / (2.0 * g.sqrt());
        assert!((v - 5.2349).abs() < 1e-3, "{v}");
        assert!((v - estimate).abs() / estimate < 1e-2);
    }

    #[test]
    fn dos_rejects_zero_dynes() {
        assert!(dynes_dos(1.0, 1.0, 0.0).is_err());
        assert!(dynes_dos(1.0, 0.0, 1e-3).is_err());
    }

    #[test]
    fn dos_is_even() {
        for k in -40..=40 {
            let x = 1e-3 * 10f64.powf(k as f64 / 10.0);
            for g in [1e-6, 1e-4, 9.25e-3, 0.1] {
                let p = dos_reduced(x, g);
                let m = dos_reduced(-x, g);
                assert!((p - m).abs() <= 1e-14 * p.max(1.0), "x={x} g={g}");
            }
        }
    }

    #[test]
    fn dos_tail_integral_is_bounded() {
        // ∫_{-W}^{W} [n_S(ε) − 1] dε stays O(Δ) and settles as W grows.
        let g = 9.25e-3;
        let tail = |w: f64| {
            integrate(
                |x| dos_reduced(x, g) - 1.0,
                -w,
                w,
                &[
                    -1.0 - 10.0 * g,
                    -1.0,
                    -1.0 + 10.0 * g,
                    1.0 - 10.0 * g,
                    1.0,
                    1.0 + 10.0 * g,
                ],
                1e-10,
                1e-14,
                4000,
            )
            .unwrap()
            .value
        };
        let values: Vec<f64> = [10.0, 20.0, 40.0, 80.0].iter().map(|&w| tail(w)).collect();
        for v in &values {
            assert!(v.abs() < 2.0, "{values:?}");
        }
        let d1 = (values[1] - values[0]).abs();
        let d2 = (values[2] - values[1]).abs();
        let d3 = (values[3] - values[2]).abs();
        assert!(d2 < d1 && d3 < d2, "{values:?}");
    }

    #[test]
    fn detailed_balance_at_photon_energy() {
        let t = 0.15;
        let q = QuadratureSpec::default();
        let tight = QuadratureSpec {
            relative_tolerance: 1e-10,
            ..q
        };
        let e = photon_energy();
        for g in [1e-4, 9.25e-3, 0.05] {
            let mut j = table_junction(t);
            j.dynes = g;
            let ratio = forward_rate(e, &j, &q).unwrap() / forward_rate(-e, &j, &q).unwrap();
            let tight_ratio = forward_rate(e, &j, &tight).unwrap() / forward_rate(-e, &j, &tight).unwrap();
            let expected = (e / (BOLTZMANN * t)).exp();
            assert!((ratio / expected - 1.0).abs() < 1e-7, "g={g}");
            assert!((tight_ratio / expected - 1.0).abs() < 1e-8, "g={g}");
        }
    }

    #[test]
    fn detailed_balance_property_grid() {
        let t = 0.1;
        let q = QuadratureSpec::default();
        for g in [1e-6, 1e-4, 1e-2, 1e-1] {
            let mut j = table_junction(t);
            j.dynes = g;
            for e in [photon_energy(), j.gap / 2.0, 2.0 * j.gap] {
                for s in [1.0, -1.0] {
                    let e = s * e;
                    let fwd = forward_rate(e, &j, &q).unwrap();
                    let bwd = forward_rate(-e, &j, &q).unwrap();
                    let mismatch = fwd - (e / (BOLTZMANN * t)).exp() * bwd;
                    assert!(mismatch.abs() < 1e-7 * fwd, "g={g} E={e} fwd={fwd} bwd={bwd}");
                }
            }
        }
    }

    #[test]
    fn high_bias_asymptote() {
        let j = table_junction(0.15);
        let e = 10.0 * j.gap;
        let f = forward_rate(e, &j, &QuadratureSpec::default()).unwrap();
        let linear = e / PLANCK;
        assert!((f / linear - 1.0).abs() < 0.05);
        // The BCS branch gives sqrt(E² − Δ²)/h for T → 0.
        let bcs = (e * e - j.gap * j.gap).sqrt() / PLANCK;
        assert!((f / bcs - 1.0).abs() < 1e-3);
    }

    #[test]
    fn forward_rate_is_increasing() {
        let j = table_junction(0.15);
        let q = QuadratureSpec::default();
        let mut prev = 0.0;
        for k in -60..=60 {
            let e = k as f64 * j.gap / 20.0;
            let f = forward_rate(e, &j, &q).unwrap();
            assert!(f > 0.0);
            assert!(f > prev, "not increasing at E = {k}/20 Δ");
            prev = f;
        }
    }

    #[test]
    fn matches_trapezoid_oracle() {
        let j = table_junction(0.15);
        let q = QuadratureSpec::default();
        for e in [
            photon_energy(),
            -photon_energy(),
            j.gap / 2.0,
            -j.gap / 2.0,
            2.0 * j.gap,
        ] {
            let adaptive = forward_rate(e, &j, &q).unwrap();
            let brute = trapezoid_rate(e, &j, 1_000_000);
            assert!((adaptive / brute - 1.0).abs() < 1e-6, "E={e}: {adaptive} vs {brute}");
        }
    }

    #[test]
    fn non_convergence_carries_estimate() {
        let j = table_junction(0.15);
        let q = QuadratureSpec {
            relative_tolerance: 1e-9,
            absolute_floor: 0.0,
            max_subdivisions: 16,
        };
        match forward_rate(j.gap, &j, &q) {
            Err(Error::Quadrature { estimate, error, .. }) => {
                assert!(estimate > 0.0 && error > 0.0);
            }
            other => panic!("expected quadrature error, got {other:?}"),
        }
    }

    #[test]
    fn current_is_antisymmetric() {
        let j = table_junction(0.15);
        let q = QuadratureSpec::iv();
        let v = micro_volt(150.0);
        let ip = nis_current(v, &j, &q).unwrap();
        let im = nis_current(-v, &j, &q).unwrap();
        assert_eq!(ip, -im);
        assert_eq!(nis_current(0.0, &j, &q).unwrap(), 0.0);
    }

    #[test]
    fn conductance_above_gap_follows_bcs_dos() {
        // At eV = 3Δ the low-temperature conductance is n_S(3Δ)/R_T
        // = (3/sqrt(8))/R_T, about 6% above the normal-state value.
        let j = table_junction(0.15);
        let q = QuadratureSpec::iv();
        let v = 3.0 * j.gap / E_CHARGE;
        let g = differential_conductance(v, micro_volt(0.5), &j, &q).unwrap();
        let oracle = dos_reduced(3.0, j.dynes) / j.tunneling_resistance;
        assert!(
            (g / oracle - 1.0).abs() < 2e-3,
            "{} vs {}",
            g * j.tunneling_resistance,
            oracle * j.tunneling_resistance
        );
        // And it approaches 1/R_T far above the gap.
        let v = 20.0 * j.gap / E_CHARGE;
        let g = differential_conductance(v, micro_volt(0.5), &j, &q).unwrap();
        assert!((g * j.tunneling_resistance - 1.0).abs() < 2e-3);
    }

    #[test]
    fn zero_bias_conductance_is_dynes_leakage() {
        let j = table_junction(milli_kelvin(10.0));
        let q = QuadratureSpec::iv();
        let g = differential_conductance(0.0, micro_volt(0.2), &j, &q).unwrap();
        let ratio = g * j.tunneling_resistance / j.dynes;
        assert!(ratio > 0.5 && ratio < 2.0, "{ratio}");
    }

    #[test]
    fn junction_validation() {
        assert!(JunctionParams::new(0.0, 1e-3, 1e4, 0.1, 0.1, 0.0).is_err());
        assert!(JunctionParams::new(1e-23, 0.0, 1e4, 0.1, 0.1, 0.0).is_err());
        assert!(JunctionParams::new(1e-23, 1.0, 1e4, 0.1, 0.1, 0.0).is_err());
        assert!(JunctionParams::new(1e-23, 1e-3, -1.0, 0.1, 0.1, 0.0).is_err());
        assert!(JunctionParams::new(1e-23, 1e-3, 1e4, 0.0, 0.1, 0.0).is_err());
        assert!(JunctionParams::new(1e-23, 1e-3, 1e4, 0.1, 0.1, -1.0).is_err());
        assert!(JunctionParams::new(1e-23, 1e-3, 1e4, 0.1, 0.1, 0.0).is_ok());
    }
}
