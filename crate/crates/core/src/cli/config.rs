//! Scenario configuration: TOML with units in the key names.
//!
//! A configuration is a preset (optional) with a user file deep-merged on
//! top. Every physical section is converted into the library types and
//! validated before any command runs.

#![allow(non_snake_case)]

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::cavity::{coherent_drive_decay_rate, Integrator};
use crate::engine::{QcrCircuit, RfDrive};
use crate::physics::{JunctionParams, QuadratureSpec};
use crate::spectroscopy::QubitParams;
use crate::units::{dbm_to_watts, ghz_to_angular, mhz_to_angular, micro_ev, micro_volt, milli_kelvin};
use crate::{Error, Result};

use super::presets;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JunctionSection {
    pub gap_ueV: f64,
    pub dynes: f64,
    pub r_t_kOhm: f64,
    pub t_n_mK: f64,
    /// Defaults to `t_n_mK`.
    pub t_s_mK: Option<f64>,
    #[serde(default)]
    pub c_nis_fF: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorSection {
    pub f_r_GHz: f64,
    pub z_r_Ohm: f64,
    pub capacitance_ratio: Option<f64>,
    pub charging_energy_ueV: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitSection {
    pub f_q_GHz: f64,
    pub anharmonicity_MHz: f64,
    pub g_MHz: f64,
    pub chi_MHz: f64,
    pub kappa_MHz: f64,
    pub gamma_MHz: f64,
    pub f_ro_GHz: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    pub gamma_dr_MHz: Option<f64>,
    pub n_dr: Option<f64>,
    /// Constant decay rate γ_{V=0}/2π added in the rates table.
    pub gamma_background_MHz: Option<f64>,
    /// Alternatively, derive the background from a coherent drive power
    /// and the zero-bias occupation it produces.
    pub drive_power_dBm: Option<f64>,
    pub nbar_at_zero_bias: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub v_min_uV: f64,
    pub v_max_uV: f64,
    pub points: usize,
    /// Multiplicative Gaussian noise on synthesized currents (iv only).
    #[serde(default)]
    pub current_noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SidebandKind {
    SinglePhoton,
    TienGordon,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfSection {
    pub frequency_GHz: f64,
    pub model: SidebandKind,
    /// Tien–Gordon amplitude α = eV_rf/(h f_rf); single-photon mode treats
    /// any positive value as "on".
    pub amplitude: f64,
    pub sideband_cutoff: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorKind {
    Rk4,
    BackwardEuler,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    pub period_ns: f64,
    pub duty: f64,
    #[serde(default)]
    pub on_bias_uV: f64,
    #[serde(default)]
    pub off_bias_uV: f64,
    /// Apply the `[rf]` tone during the on state.
    #[serde(default)]
    pub rf_on: bool,
    /// Override the on-state QCR decay rate γ_on/2π, keeping the modeled
    /// bath occupation.
    pub gamma_on_MHz: Option<f64>,
    pub duration_ns: f64,
    pub dt_ns: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Average the transient over t ≥ this.
    pub average_from_ns: Option<f64>,
    pub nmax: Option<usize>,
    pub integrator: Option<IntegratorKind>,
}

fn default_record_every() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Coherent,
    Thermal,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub state: StateKind,
    pub nbar: f64,
    pub nmax: usize,
    pub points: usize,
    /// Additive Gaussian noise at this SNR (dB, relative to the tallest
    /// line); omitted for a clean spectrum.
    pub snr_dB: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub voltage_cutoff_uV: Option<f64>,
    pub plateau_uV: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    pub relative_tolerance: Option<f64>,
    pub max_subdivisions: Option<usize>,
}

/// Parsed configuration, before conversion to library types.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub junction: JunctionSection,
    pub resonator: ResonatorSection,
    pub qubit: Option<QubitSection>,
    #[serde(default)]
    pub baths: BathSection,
    pub sweep: Option<SweepSection>,
    pub rf: Option<RfSection>,
    pub pulse: Option<PulseSection>,
    pub spectrum: Option<SpectrumSection>,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
}

/// Recursively overlay `top` onto `base`; tables merge, everything else is
/// replaced.
pub fn deep_merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => deep_merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, String>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            toml::Value::String(s) => {
                out.insert(key, s.clone());
            }
            other => {
                out.insert(key, other.to_string());
            }
        }
    }
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::config(origin, e.message().to_string()))
}

/// Merged raw configuration plus its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub preset: Option<String>,
    pub table: toml::Table,
    pub config: ScenarioConfig,
}

impl LoadedConfig {
    /// Load a preset, a config file, or a preset overlaid by a file.
    pub fn load(preset: Option<&str>, path: Option<&Path>) -> Result<Self> {
        let mut table = match preset {
            Some(name) => presets::preset_table(name)?,
            None => toml::Table::new(),
        };
        if let Some(path) = path {
            let text =
                std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
            deep_merge(&mut table, parse_table(&text, &path.display().to_string())?);
        }
        if preset.is_none() && path.is_none() {
            return Err(Error::config("config", "either --config or --preset is required"));
        }
        Self::from_table(preset.map(str::to_string), table)
    }

    pub fn from_table(preset: Option<String>, table: toml::Table) -> Result<Self> {
        let config = ScenarioConfig::deserialize(toml::Value::Table(table.clone()))
            .map_err(|e| Error::config("config", e.message().to_string()))?;
        Ok(Self { preset, table, config })
    }

    /// One line `key=value ...` with the preset name and every parameter.
    pub fn stamp(&self, command: &str, seed: u64) -> String {
        let mut flat = BTreeMap::new();
        flatten("", &self.table, &mut flat);
        let mut parts = vec![
            format!("qcrsim {}", env!("CARGO_PKG_VERSION")),
            format!("command={command}"),
            format!("preset={}", self.preset.as_deref().unwrap_or("none")),
            format!("seed={seed}"),
        ];
        parts.extend(flat.into_iter().map(|(k, v)| format!("{k}={v}")));
        parts.join(" ")
    }
}

/// Library-typed scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub circuit: QcrCircuit,
    pub qubit: Option<QubitParams>,
    pub drive_coupling: Option<f64>,
    pub drive_occupation: Option<f64>,
    /// γ_{V=0} (1/s).
    pub background_rate: Option<f64>,
    /// Sweep grid in μV as configured, and the same points in V.
    pub sweep_uv: Option<Vec<f64>>,
    pub voltages: Option<Vec<f64>>,
    pub rf: Option<RfDrive>,
    pub quadrature: QuadratureSpec,
}

fn require(ok: bool, field: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, message))
    }
}

fn in_section<T>(section: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { .. } => e,
        other => Error::config(section, other.to_string()),
    })
}

impl ScenarioConfig {
    pub fn junction(&self) -> Result<JunctionParams> {
        let j = &self.junction;
        let t_n = milli_kelvin(j.t_n_mK);
        let t_s = j.t_s_mK.map(milli_kelvin).unwrap_or(t_n);
        in_section(
            "junction",
            JunctionParams::new(
                micro_ev(j.gap_ueV),
                j.dynes,
                j.r_t_kOhm * 1e3,
                t_n,
                t_s,
                j.c_nis_fF * 1e-15,
            ),
        )
    }

    pub fn circuit(&self) -> Result<QcrCircuit> {
        let r = &self.resonator;
        let mut c = in_section(
            "resonator",
            QcrCircuit::new(self.junction()?, ghz_to_angular(r.f_r_GHz), r.z_r_Ohm),
        )?;
        if let Some(ratio) = r.capacitance_ratio {
            c.capacitance_ratio = ratio;
        }
        if let Some(en) = r.charging_energy_ueV {
            c.charging_energy = micro_ev(en);
        }
        in_section("resonator", c.validate())?;
        Ok(c)
    }

    pub fn qubit_params(&self) -> Result<Option<QubitParams>> {
        let Some(q) = &self.qubit else {
            return Ok(None);
        };
        let p = QubitParams {
            qubit_frequency: ghz_to_angular(q.f_q_GHz),
            anharmonicity: mhz_to_angular(q.anharmonicity_MHz),
            coupling: mhz_to_angular(q.g_MHz),
            dispersive_shift: mhz_to_angular(q.chi_MHz),
            qubit_linewidth: mhz_to_angular(q.kappa_MHz),
            resonator_linewidth: mhz_to_angular(q.gamma_MHz),
            readout_frequency: ghz_to_angular(q.f_ro_GHz),
        };
        in_section("qubit", p.validate())?;
        Ok(Some(p))
    }

    /// Sweep grid in μV.
    pub fn sweep_uv(&self) -> Result<Option<Vec<f64>>> {
        let Some(s) = &self.sweep else {
            return Ok(None);
        };
        require(s.points >= 2, "sweep.points", "at least two points are required")?;
        require(
            s.v_max_uV > s.v_min_uV && s.v_min_uV.is_finite() && s.v_max_uV.is_finite(),
            "sweep.v_max_uV",
            "must exceed sweep.v_min_uV",
        )?;
        require(
            s.current_noise >= 0.0 && s.current_noise < 1.0,
            "sweep.current_noise",
            "must lie in [0, 1)",
        )?;
        let step = (s.v_max_uV - s.v_min_uV) / (s.points - 1) as f64;
        Ok(Some((0..s.points).map(|i| s.v_min_uV + step * i as f64).collect()))
    }

    pub fn rf_drive(&self) -> Result<Option<RfDrive>> {
        let Some(r) = &self.rf else {
            return Ok(None);
        };
        let f = r.frequency_GHz * 1e9;
        let mut drive = match r.model {
            SidebandKind::SinglePhoton => RfDrive {
                amplitude: r.amplitude,
                ..RfDrive::single_photon(f)
            },
            SidebandKind::TienGordon => RfDrive::tien_gordon(f, r.amplitude),
        };
        if let Some(cut) = r.sideband_cutoff {
            drive.sideband_cutoff = cut;
        }
        in_section("rf", drive.validate())?;
        in_section("rf", drive.weights().map(|_| ()))?;
        Ok(Some(drive))
    }

    pub fn quadrature_spec(&self) -> Result<QuadratureSpec> {
        let mut q = QuadratureSpec::default();
        if let Some(r) = self.quadrature.relative_tolerance {
            q.relative_tolerance = r;
        }
        if let Some(m) = self.quadrature.max_subdivisions {
            q.max_subdivisions = m;
        }
        in_section("quadrature", q.validate())?;
        Ok(q)
    }

    fn background_rate(&self, circuit: &QcrCircuit) -> Result<Option<f64>> {
        let b = &self.baths;
        match (b.gamma_background_MHz, b.drive_power_dBm, b.nbar_at_zero_bias) {
            (Some(g), None, None) => {
                require(g >= 0.0, "baths.gamma_background_MHz", "must be non-negative")?;
                Ok(Some(mhz_to_angular(g)))
            }
            (None, Some(p), Some(n)) => in_section(
                "baths",
                coherent_drive_decay_rate(dbm_to_watts(p), circuit.resonator_frequency, n).map(Some),
            ),
            (None, None, None) => Ok(None),
            _ => Err(Error::config(
                "baths",
                "give either gamma_background_MHz or both drive_power_dBm and nbar_at_zero_bias",
            )),
        }
    }

    /// Convert and validate every section.
    pub fn build(&self) -> Result<Scenario> {
        let circuit = self.circuit()?;
        let b = &self.baths;
        if let Some(g) = b.gamma_dr_MHz {
            require(g >= 0.0 && g.is_finite(), "baths.gamma_dr_MHz", "must be non-negative")?;
        }
        if let Some(n) = b.n_dr {
            require(n >= 0.0 && n.is_finite(), "baths.n_dr", "must be non-negative")?;
        }
        if let Some(p) = &self.pulse {
            require(p.period_ns > 0.0, "pulse.period_ns", "must be positive")?;
            require((0.0..=1.0).contains(&p.duty), "pulse.duty", "must lie in [0, 1]")?;
            require(p.dt_ns > 0.0, "pulse.dt_ns", "must be positive")?;
            require(p.duration_ns > p.dt_ns, "pulse.duration_ns", "must exceed pulse.dt_ns")?;
            require(p.record_every >= 1, "pulse.record_every", "must be at least 1")?;
            require(!p.rf_on || self.rf.is_some(), "pulse.rf_on", "requires an [rf] section")?;
            if let Some(g) = p.gamma_on_MHz {
                require(g > 0.0, "pulse.gamma_on_MHz", "must be positive")?;
            }
        }
        if let Some(s) = &self.spectrum {
            require(
                s.nbar >= 0.0 && s.nbar.is_finite(),
                "spectrum.nbar",
                "must be non-negative",
            )?;
            require(s.points >= 2, "spectrum.points", "at least two points are required")?;
            require(self.qubit.is_some(), "spectrum", "requires a [qubit] section")?;
        }
        if let Some(c) = self.fit.voltage_cutoff_uV {
            require(c > 0.0, "fit.voltage_cutoff_uV", "must be positive")?;
        }
        if let Some(c) = self.fit.plateau_uV {
            require(c > 0.0, "fit.plateau_uV", "must be positive")?;
        }
        let sweep_uv = self.sweep_uv()?;
        Ok(Scenario {
            qubit: self.qubit_params()?,
            drive_coupling: b.gamma_dr_MHz.map(mhz_to_angular),
            drive_occupation: b.n_dr,
            background_rate: self.background_rate(&circuit)?,
            voltages: sweep_uv.as_ref().map(|v| v.iter().map(|x| micro_volt(*x)).collect()),
            sweep_uv,
            rf: self.rf_drive()?,
            quadrature: self.quadrature_spec()?,
            circuit,
        })
    }

    pub fn integrator(&self) -> Integrator {
        match self.pulse.as_ref().and_then(|p| p.integrator) {
            Some(IntegratorKind::BackwardEuler) => Integrator::BackwardEuler,
            _ => Integrator::Rk4,
        }
    }
}
