//! Table-producing commands. Each takes a validated scenario and returns an
//! in-memory table or report; writing is left to the caller.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::config::{LoadedConfig, Scenario, StateKind};
use super::io::{Report, Table};
use crate::cavity::{
    gibbs_distribution, poisson_distribution, steady_state_mean, temperature_from_occupation, Bath, BathLabel,
    MasterEquation, SquareWave, DEFAULT_NMAX,
};
use crate::engine::{average_pulse, qcr_rates, rf_effective_rates, QcrRates};
use crate::fit::cooling::{fit_cooling_curve, CoolingCurve, CoolingOptions};
use crate::fit::iv::{extract_rt_gammad, IvData};
use crate::physics::{differential_conductance, nis_current, QuadratureSpec};
use crate::spectroscopy::{classify_state, default_grid, extract_populations, synthesize_spectrum, Spectrum};
use crate::units::micro_volt;
use crate::{Error, Result};

/// Half-width of the central difference used for dI/dV.
const CONDUCTANCE_STEP_UV: f64 = 0.1;

/// Loaded configuration, converted scenario and noise seed.
#[derive(Debug, Clone)]
pub struct Context {
    pub loaded: LoadedConfig,
    pub scenario: Scenario,
    pub seed: u64,
}

impl Context {
    pub fn new(loaded: LoadedConfig, seed: u64) -> Result<Self> {
        let scenario = loaded.config.build()?;
        Ok(Self { loaded, scenario, seed })
    }

    pub fn from_preset(name: &str, seed: u64) -> Result<Self> {
        Self::new(LoadedConfig::load(Some(name), None)?, seed)
    }

    fn stamp(&self, command: &str) -> String {
        self.loaded.stamp(command, self.seed)
    }

    /// Sweep points as `(V_uV, V)` pairs.
    fn sweep(&self) -> Result<Vec<(f64, f64)>> {
        match (&self.scenario.sweep_uv, &self.scenario.voltages) {
            (Some(uv), Some(v)) => Ok(uv.iter().copied().zip(v.iter().copied()).collect()),
            _ => Err(Error::config("sweep", "a [sweep] section is required")),
        }
    }

    fn drive_bath(&self) -> Result<Bath> {
        let g = self
            .scenario
            .drive_coupling
            .ok_or_else(|| Error::config("baths.gamma_dr_MHz", "required for this command"))?;
        let n = self
            .scenario
            .drive_occupation
            .ok_or_else(|| Error::config("baths.n_dr", "required for this command"))?;
        Bath::new(BathLabel::DriveLine, n, g)
    }

    /// QCR rates at `v`, rf-dressed when an `[rf]` section is present.
    fn rates_at(&self, v: f64) -> Result<QcrRates> {
        let s = &self.scenario;
        match &s.rf {
            Some(rf) => rf_effective_rates(v, rf, &s.circuit, &s.quadrature),
            None => qcr_rates(v, &s.circuit, &s.quadrature),
        }
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn to_mk(t: f64) -> f64 {
    t * 1e3
}

/// V_uV, I_nA, dIdV_Ohm_inv.
pub fn cmd_iv(ctx: &Context) -> Result<Table> {
    let s = &ctx.scenario;
    let j = s.circuit.junction;
    let q = QuadratureSpec {
        relative_tolerance: s
            .quadrature
            .relative_tolerance
            .max(QuadratureSpec::iv().relative_tolerance),
        ..s.quadrature
    };
    let rows = ctx
        .sweep()?
        .par_iter()
        .map(|&(uv, v)| {
            let i = nis_current(v, &j, &q)?;
            let g = differential_conductance(v, micro_volt(CONDUCTANCE_STEP_UV), &j, &q)?;
            Ok((uv, i, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let noise = ctx.loaded.config.sweep.as_ref().map_or(0.0, |s| s.current_noise);
    let normal = (noise > 0.0)
        .then(|| Normal::new(0.0, noise))
        .transpose()
        .map_err(|e| Error::config("sweep.current_noise", e.to_string()))?;
    let mut rng = ctx.rng();
    let mut table = Table::new(ctx.stamp("iv"), &["V_uV", "I_nA", "dIdV_Ohm_inv"]);
    for (v, i, g) in rows {
        let i = match &normal {
            Some(d) => i * (1.0 + d.sample(&mut rng)),
            None => i,
        };
        table.push(vec![v, i * 1e9, g]);
    }
    Ok(table)
}

/// V_uV, gamma_qcr_Hz, gamma_total_Hz, T_qcr_mK, n_qcr. Rates are energy
/// decay rates in 1/s; inverted points report NaN temperature and
/// occupation.
pub fn cmd_rates(ctx: &Context) -> Result<Table> {
    let background = ctx.scenario.background_rate.unwrap_or(0.0);
    let rates = ctx
        .sweep()?
        .par_iter()
        .map(|&(uv, v)| ctx.rates_at(v).map(|r| (uv, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(
        ctx.stamp("rates"),
        &["V_uV", "gamma_qcr_Hz", "gamma_total_Hz", "T_qcr_mK", "n_qcr"],
    );
    for (v, r) in rates {
        let (t, n) = match (r.temperature(), r.occupation()) {
            (Ok(t), Ok(n)) => (to_mk(t), n),
            _ => {
                log::warn!("population inversion at V = {v:.3} uV (ratio {:.6})", r.rate_ratio);
                (f64::NAN, f64::NAN)
            }
        };
        table.push(vec![v, r.gamma, r.gamma + background, t, n]);
    }
    Ok(table)
}

/// V_uV, nbar, T_eff_mK from the QCR and drive-line baths.
pub fn cmd_cool(ctx: &Context) -> Result<Table> {
    let drive = ctx.drive_bath()?;
    let omega = ctx.scenario.circuit.resonator_frequency;
    let rows = ctx
        .sweep()?
        .par_iter()
        .map(|&(uv, v)| {
            let qcr = ctx.rates_at(v)?.bath()?;
            let n = steady_state_mean(&[qcr, drive])?;
            Ok((uv, n, temperature_from_occupation(n, omega)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(ctx.stamp("cool"), &["V_uV", "nbar", "T_eff_mK"]);
    for (v, n, t) in rows {
        table.push(vec![v, n, to_mk(t)]);
    }
    Ok(table)
}

/// Time-averaged pulsed occupation against the duty-weighted continuous
/// steady state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSummary {
    pub time_average: f64,
    pub continuous: f64,
}

impl PulseSummary {
    pub fn relative_difference(&self) -> f64 {
        (self.time_average - self.continuous) / self.continuous
    }
}

/// t_ns, nbar transient under square-wave QCR modulation, with a summary
/// footer line.
pub fn cmd_pulse(ctx: &Context) -> Result<(Table, PulseSummary)> {
    let cfg = &ctx.loaded.config;
    let p = cfg
        .pulse
        .as_ref()
        .ok_or_else(|| Error::config("pulse", "a [pulse] section is required"))?;
    let s = &ctx.scenario;
    let drive = ctx.drive_bath()?;

    let mut on = if p.rf_on {
        rf_effective_rates(
            micro_volt(p.on_bias_uV),
            s.rf.as_ref().expect("validated"),
            &s.circuit,
            &s.quadrature,
        )?
    } else {
        qcr_rates(micro_volt(p.on_bias_uV), &s.circuit, &s.quadrature)?
    };
    if let Some(g) = p.gamma_on_MHz {
        on.gamma = crate::units::mhz_to_angular(g);
    }
    let off = qcr_rates(micro_volt(p.off_bias_uV), &s.circuit, &s.quadrature)?;
    let on_baths = vec![Bath::new(BathLabel::Qcr, on.occupation()?, on.gamma)?, drive];
    let off_baths = vec![Bath::new(BathLabel::Qcr, off.occupation()?, off.gamma)?, drive];
    let continuous = steady_state_mean(&[average_pulse(p.duty, &on, &off)?.bath()?, drive])?;

    let period = p.period_ns * 1e-9;
    let schedule = SquareWave {
        period,
        duty: p.duty,
        on: on_baths,
        off: off_baths.clone(),
    };
    let start = gibbs_distribution(steady_state_mean(&off_baths)?, p.nmax.unwrap_or(DEFAULT_NMAX))?;
    let trajectory = MasterEquation::new(cfg.integrator())
        .record_every(p.record_every)
        .evolve(&start, &schedule, p.duration_ns * 1e-9, p.dt_ns * 1e-9)?;
    let from = p.average_from_ns.unwrap_or(0.5 * p.duration_ns) * 1e-9;
    let time_average = trajectory.time_average_mean(from)?;
    let summary = PulseSummary {
        time_average,
        continuous,
    };

    let mut table = Table::new(ctx.stamp("pulse"), &["t_ns", "nbar"]);
    for (t, n) in trajectory.times.iter().zip(trajectory.means()) {
        table.push(vec![t * 1e9, n]);
    }
    table.footer.push(format!(
        "summary time_average_nbar={:e} continuous_nbar={:e} relative_difference={:e} average_from_ns={}",
        summary.time_average,
        summary.continuous,
        summary.relative_difference(),
        from * 1e9
    ));
    Ok((table, summary))
}

/// Synthesis (no input): f_GHz, response. Extraction (with input): n, P_n
/// and a footer with the state class and n̄.
pub fn cmd_spectrum(ctx: &Context, input: Option<&Path>) -> Result<Table> {
    let q = ctx
        .scenario
        .qubit
        .ok_or_else(|| Error::config("qubit", "a [qubit] section is required"))?;
    let section = ctx.loaded.config.spectrum.as_ref();
    match input {
        None => {
            let sec = section.ok_or_else(|| Error::config("spectrum", "a [spectrum] section is required"))?;
            let p = match sec.state {
                StateKind::Coherent => poisson_distribution(sec.nbar, sec.nmax)?,
                StateKind::Thermal => gibbs_distribution(sec.nbar, sec.nmax)?,
            };
            let grid = default_grid(&q, p.nmax(), sec.points)?;
            let mut spectrum = synthesize_spectrum(&p, &q, &grid)?;
            if let Some(snr) = sec.snr_dB {
                let peak = spectrum.response().iter().cloned().fold(0.0, f64::max);
                let normal = Normal::new(0.0, peak * 10f64.powf(-snr / 20.0))
                    .map_err(|e| Error::config("spectrum.snr_dB", e.to_string()))?;
                let mut rng = ctx.rng();
                let noisy = spectrum
                    .response()
                    .iter()
                    .map(|r| r + normal.sample(&mut rng))
                    .collect();
                spectrum = spectrum.with_response(noisy)?;
            }
            let mut table = Table::new(ctx.stamp("spectrum"), &["f_GHz", "response"]);
            for (w, r) in spectrum.frequencies().iter().zip(spectrum.response()) {
                table.push(vec![crate::units::angular_to_ghz(*w), *r]);
            }
            Ok(table)
        }
        Some(path) => {
            let file =
                std::fs::File::open(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
            let spectrum = Spectrum::read_text(std::io::BufReader::new(file))?;
            let nmax = section.map_or(10, |s| s.nmax);
            let fit = extract_populations(&spectrum, &q, nmax)?;
            let class = classify_state(&fit.distribution)?;
            let mut table = Table::new(ctx.stamp("spectrum-extract"), &["n", "P_n"]);
            for (n, p) in fit.distribution.probabilities().iter().enumerate() {
                table.push(vec![n as f64, *p]);
            }
            table.footer.push(format!(
                "class={} nbar_fit={:e} nbar_sum={:e} linewidth_MHz={:e} residual_poisson={:e} residual_gibbs={:e} rms_residual={:e}",
                class.class,
                class.mean,
                fit.distribution.mean(),
                crate::units::angular_to_mhz(fit.linewidth),
                class.poisson.residual,
                class.gibbs.residual,
                fit.rms_residual
            ));
            Ok(table)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitKind {
    Iv,
    Cooling,
}

fn open_data(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    Ok(std::io::BufReader::new(file))
}

/// Two-stage calibration report.
pub fn cmd_fit(ctx: &Context, kind: FitKind, data: &Path) -> Result<Report> {
    let s = &ctx.scenario;
    match kind {
        FitKind::Iv => {
            let iv = IvData::read_text(open_data(data)?)?;
            let fit = extract_rt_gammad(&iv, &s.circuit.junction, &QuadratureSpec::iv())?;
            let mut r = Report::new(ctx.stamp("fit-iv"));
            r.add("data", data.display());
            r.add("points", iv.len());
            r.add("stage1.r_t_kOhm", fit.seed_resistance * 1e-3);
            r.add("stage1.dynes", fit.seed_dynes);
            r.add("stage2.r_t_kOhm", fit.tunneling_resistance * 1e-3);
            r.add("stage2.dynes", fit.dynes);
            if let Some([se_r, se_d]) = fit.std_errors {
                r.add("stage2.r_t_stderr_kOhm", se_r * 1e-3);
                r.add("stage2.dynes_stderr", se_d);
            }
            r.add("residual.weighted_rms", fit.report.rms_residual());
            r.add("iterations", fit.report.iterations);
            r.add("termination", format!("{:?}", fit.report.termination));
            r.add("tolerance.relative_cost_change", 1e-12);
            r.add("tolerance.quadrature_relative", QuadratureSpec::iv().relative_tolerance);
            Ok(r)
        }
        FitKind::Cooling => {
            let curve = CoolingCurve::read_text(open_data(data)?)?;
            let opts = CoolingOptions {
                voltage_cutoff: ctx.loaded.config.fit.voltage_cutoff_uV.map(micro_volt),
                plateau_voltage: ctx.loaded.config.fit.plateau_uV.map(micro_volt),
                ..CoolingOptions::default()
            };
            let fit = fit_cooling_curve(&curve, &s.circuit, &s.quadrature, &opts)?;
            let to_mhz = crate::units::angular_to_mhz;
            let mut r = Report::new(ctx.stamp("fit-cooling"));
            r.add("data", data.display());
            r.add("points_used", fit.points_used);
            r.add("stage1.t_n_mK", to_mk(fit.seed_temperature));
            r.add("stage1.gamma_dr_MHz", to_mhz(fit.seed_drive_coupling));
            r.add("stage1.n_dr", fit.seed_drive_occupation);
            r.add("stage2.t_n_mK", to_mk(fit.temperature));
            r.add("stage2.gamma_dr_MHz", to_mhz(fit.drive_coupling));
            r.add("stage2.n_dr", fit.drive_occupation);
            if let Some([t, g, n]) = fit.std_errors {
                r.add("stage2.t_n_stderr_mK", to_mk(t));
                r.add("stage2.gamma_dr_stderr_MHz", to_mhz(g));
                r.add("stage2.n_dr_stderr", n);
            }
            if let Ok(t) = temperature_from_occupation(fit.drive_occupation, s.circuit.resonator_frequency) {
                r.add("stage2.t_drive_mK", to_mk(t));
            }
            r.add("residual.relative_rms", fit.report.rms_residual());
            r.add("iterations", fit.report.iterations);
            r.add("termination", format!("{:?}", fit.report.termination));
            r.add("tolerance.relative_cost_change", 1e-10);
            Ok(r)
        }
    }
}
