//! Number-splitting spectroscopy of a transmon dispersively coupled to the
//! resonator.
//!
//! In the strong-dispersive regime each resonator Fock state `n` shifts the
//! qubit line to `ω_q + 2χn`, and the height of that line is `P_n`.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cavity::FockDistribution;
use crate::fit::lsq::{least_squares, Bounds, LeastSquaresOptions};
use crate::{Error, Result};

/// Qubit and coupling parameters, all as angular frequencies (rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitParams {
    pub qubit_frequency: f64,
    /// Transmon anharmonicity α (negative).
    pub anharmonicity: f64,
    pub coupling: f64,
    /// Signed dispersive shift χ; lines sit at `ω_q + 2χn`.
    pub dispersive_shift: f64,
    /// Qubit linewidth κ (FWHM of each line).
    pub qubit_linewidth: f64,
    /// Resonator energy decay rate γ.
    pub resonator_linewidth: f64,
    pub readout_frequency: f64,
}

impl QubitParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.qubit_frequency > 0.0) {
            return Err(Error::domain("qubit frequency must be positive"));
        }
        if !(self.dispersive_shift != 0.0 && self.dispersive_shift.is_finite()) {
            return Err(Error::domain("dispersive shift must be non-zero"));
        }
        if !(self.qubit_linewidth > 0.0) {
            return Err(Error::domain("qubit linewidth must be positive"));
        }
        if !(self.resonator_linewidth >= 0.0) {
            return Err(Error::domain("resonator linewidth must be non-negative"));
        }
        if !(self.coupling >= 0.0) {
            return Err(Error::domain("coupling must be non-negative"));
        }
        Ok(())
    }

    /// `|2χ| > κ` and `|2χ| > γ`.
    pub fn is_resolvable(&self) -> bool {
        let split = (2.0 * self.dispersive_shift).abs();
        split > self.qubit_linewidth && split > self.resonator_linewidth
    }

    /// Qubit line position with `n` photons in the resonator.
    pub fn line_center(&self, n: usize) -> f64 {
        self.qubit_frequency + 2.0 * self.dispersive_shift * n as f64
    }
}

/// `[(ω_q − ω_r)/(2g)]²`.
pub fn critical_photon_number(q: &QubitParams, resonator_frequency: f64) -> Result<f64> {
    if !(q.coupling > 0.0) {
        return Err(Error::domain("coupling must be positive"));
    }
    let x = (q.qubit_frequency - resonator_frequency) / (2.0 * q.coupling);
    Ok(x * x)
}

/// Unit-height Lorentzian of full width `fwhm`.
pub fn lorentzian(omega: f64, center: f64, fwhm: f64) -> f64 {
    let x = 2.0 * (omega - center) / fwhm;
    1.0 / (1.0 + x * x)
}

/// Sampled qubit response on a strictly increasing angular-frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    frequencies: Vec<f64>,
    response: Vec<f64>,
}

impl Spectrum {
    pub fn new(frequencies: Vec<f64>, response: Vec<f64>) -> Result<Self> {
        if frequencies.len() != response.len() {
            return Err(Error::domain(format!(
                "grid has {} points but response has {}",
                frequencies.len(),
                response.len()
            )));
        }
        if frequencies.len() < 2 {
            return Err(Error::domain("spectrum needs at least two points"));
        }
        if frequencies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("frequency grid must be strictly increasing"));
        }
        if response.iter().chain(&frequencies).any(|v| !v.is_finite()) {
            return Err(Error::domain("spectrum contains non-finite values"));
        }
        Ok(Self { frequencies, response })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Multiply the response by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            frequencies: self.frequencies.clone(),
            response: self.response.iter().map(|r| r * c).collect(),
        }
    }

    /// Replace the response, keeping the grid.
    pub fn with_response(&self, response: Vec<f64>) -> Result<Self> {
        Self::new(self.frequencies.clone(), response)
    }

    fn covers(&self, omega: f64) -> bool {
        let lo = self.frequencies[0];
        let hi = self.frequencies[self.frequencies.len() - 1];
        omega >= lo && omega <= hi
    }

    /// Two-column text: frequency in GHz (ω/2π), response.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# frequency_ghz response")?;
        for (f, r) in self.frequencies.iter().zip(&self.response) {
            writeln!(w, "{:.9} {:.9e}", crate::units::angular_to_ghz(*f), r)?;
        }
        Ok(())
    }

    /// Parse the format written by [`Spectrum::write_text`]. Blank lines and
    /// `#` comments are skipped; columns may be separated by whitespace or
    /// commas.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let rows = crate::cli::io::read_columns(r, 2)?;
        let frequencies = rows.iter().map(|row| crate::units::ghz_to_angular(row[0])).collect();
        let response = rows.iter().map(|row| row[1]).collect();
        Self::new(frequencies, response)
    }
}

/// Uniform grid spanning lines `0..=nmax` with five linewidths of margin on
/// either side.
pub fn default_grid(q: &QubitParams, nmax: usize, points: usize) -> Result<Vec<f64>> {
    q.validate()?;
    if points < 2 {
        return Err(Error::domain("grid needs at least two points"));
    }
    let a = q.line_center(0);
    let b = q.line_center(nmax);
    let margin = 5.0 * q.qubit_linewidth.max(q.dispersive_shift.abs());
    let lo = a.min(b) - margin;
    let hi = a.max(b) + margin;
    let step = (hi - lo) / (points - 1) as f64;
    Ok((0..points).map(|i| lo + step * i as f64).collect())
}

/// `Σ_n P_n L(ω; ω_q + 2χn, κ)` on `grid`.
pub fn synthesize_spectrum(p: &FockDistribution, q: &QubitParams, grid: &[f64]) -> Result<Spectrum> {
    q.validate()?;
    if !q.is_resolvable() {
        log::warn!(
            "number-splitting lines are not resolvable: |2chi| = {:.3e} rad/s, kappa = {:.3e}, gamma = {:.3e}",
            (2.0 * q.dispersive_shift).abs(),
            q.qubit_linewidth,
            q.resonator_linewidth
        );
    }
    let empty = Spectrum::new(grid.to_vec(), vec![0.0; grid.len()])?;
    for n in [0, p.nmax()] {
        if !empty.covers(q.line_center(n)) {
            return Err(Error::domain(format!(
                "grid does not cover the n = {n} line at {:.6} GHz",
                crate::units::angular_to_ghz(q.line_center(n))
            )));
        }
    }
    let response = grid
        .iter()
        .map(|&w| {
            p.probabilities()
                .iter()
                .enumerate()
                .map(|(n, pn)| pn * lorentzian(w, q.line_center(n), q.qubit_linewidth))
                .sum()
        })
        .collect();
    empty.with_response(response)
}

/// Result of a multi-Lorentzian population fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationFit {
    /// Normalized line heights.
    pub distribution: FockDistribution,
    /// Fitted heights before clipping and normalization.
    pub heights: Vec<f64>,
    /// Shared fitted linewidth (FWHM, rad/s).
    pub linewidth: f64,
    /// RMS of the fit residual.
    pub rms_residual: f64,
}

/// Heights below `−NEGATIVE_TOLERANCE · max(height)` are rejected.
const NEGATIVE_TOLERANCE: f64 = 0.05;

fn design_matrix(grid: &[f64], q: &QubitParams, nmax: usize, width: f64) -> DMatrix<f64> {
    DMatrix::from_fn(grid.len(), nmax + 1, |i, n| {
        lorentzian(grid[i], q.line_center(n), width)
    })
}

/// Linear least-squares heights for a fixed width.
fn solve_heights(a: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let ata = a.transpose() * a;
    let aty = a.transpose() * y;
    match ata.clone().cholesky() {
        Some(ch) => ch.solve(&aty),
        None => ata
            .svd(true, true)
            .solve(&aty, 1e-13)
            .unwrap_or_else(|_| DVector::zeros(a.ncols())),
    }
}

/// Fit heights of lines `0..=nmax` at the fixed centers `ω_q + 2χn` with a
/// shared width. The width is optimized on a log scale and the heights are
/// eliminated linearly at every width.
pub fn extract_populations(s: &Spectrum, q: &QubitParams, nmax: usize) -> Result<PopulationFit> {
    q.validate()?;
    for n in [0, nmax] {
        if !s.covers(q.line_center(n)) {
            return Err(Error::domain(format!("spectrum does not cover the n = {n} line")));
        }
    }
    let peak = s.response.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    if peak == 0.0 {
        return Err(Error::Extraction {
            reason: "spectrum has no signal".into(),
            residual: 0.0,
        });
    }
    // Work on a unit-scale copy so the result is invariant under scaling.
    let y = DVector::from_iterator(s.len(), s.response.iter().map(|r| r / peak));
    let grid = &s.frequencies;

    let residual_at = |log_width: f64| -> (DVector<f64>, DVector<f64>) {
        let a = design_matrix(grid, q, nmax, log_width.exp());
        let h = solve_heights(&a, &y);
        let r = &a * &h - &y;
        (h, r)
    };

    let seed = q.qubit_linewidth.ln();
    let span = (grid[grid.len() - 1] - grid[0]).max(q.qubit_linewidth);
    let min_step = grid.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let bounds = Bounds::new(vec![(0.5 * min_step).ln().min(seed)], vec![span.ln().max(seed)])?;
    let report = least_squares(
        |p| Ok(residual_at(p[0]).1.as_slice().to_vec()),
        &[seed],
        Some(&bounds),
        &LeastSquaresOptions::default(),
    )?;
    let log_width = report.params[0];
    let (h, r) = residual_at(log_width);
    let rms = (r.norm_squared() / r.len() as f64).sqrt() * peak;
    let heights: Vec<f64> = h.iter().map(|v| v * peak).collect();

    let hmax = heights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hmax > 0.0) {
        return Err(Error::Extraction {
            reason: "no positive line heights".into(),
            residual: rms,
        });
    }
    if let Some((n, hn)) = heights
        .iter()
        .enumerate()
        .find(|(_, hn)| **hn < -NEGATIVE_TOLERANCE * hmax)
    {
        return Err(Error::Extraction {
            reason: format!("line {n} has negative height {hn:.3e} (max {hmax:.3e})"),
            residual: rms,
        });
    }
    let distribution = FockDistribution::from_weights(heights.iter().map(|v| v.max(0.0)).collect())?;
    Ok(PopulationFit {
        distribution,
        heights,
        linewidth: log_width.exp(),
        rms_residual: rms,
    })
}

/// Extract several spectra in parallel.
pub fn extract_batch(spectra: &[Spectrum], q: &QubitParams, nmax: usize) -> Vec<Result<PopulationFit>> {
    spectra.par_iter().map(|s| extract_populations(s, q, nmax)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateClass {
    Coherent,
    Thermal,
    Ambiguous,
}

impl std::fmt::Display for StateClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StateClass::Coherent => "coherent",
            StateClass::Thermal => "thermal",
            StateClass::Ambiguous => "ambiguous",
        })
    }
}

/// Best fit of one model family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelFit {
    pub mean: f64,
    /// L2 norm of `P − model` over the retained levels.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub class: StateClass,
    /// Mean of the preferred model; the Poisson mean when ambiguous.
    pub mean: f64,
    pub poisson: ModelFit,
    pub gibbs: ModelFit,
}

/// Below this residual both models describe the data to within the
/// resolution of a line-height measurement.
pub const RESIDUAL_FLOOR: f64 = 0.01;
/// Minimum relative residual difference for a decisive classification.
pub const DISCRIMINATION_THRESHOLD: f64 = 0.2;

fn poisson_terms(mean: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut term = (-mean).exp();
    for n in 0..len {
        out.push(term);
        term *= mean / (n + 1) as f64;
    }
    out
}

fn gibbs_terms(mean: f64, len: usize) -> Vec<f64> {
    let r = mean / (mean + 1.0);
    let mut out = Vec::with_capacity(len);
    let mut term = 1.0 / (mean + 1.0);
    for _ in 0..len {
        out.push(term);
        term *= r;
    }
    out
}

fn fit_family(p: &FockDistribution, terms: fn(f64, usize) -> Vec<f64>) -> Result<ModelFit> {
    let target = p.probabilities();
    let len = target.len();
    let model = |m: f64| {
        let t = terms(m, len);
        let total: f64 = t.iter().sum();
        t.into_iter().map(move |v| v / total)
    };
    let upper = (len as f64).max(1.0) * 4.0;
    let bounds = Bounds::new(vec![1e-12], vec![upper])?;
    let seed = p.mean().clamp(1e-6, upper);
    let report = least_squares(
        |x| Ok(model(x[0]).zip(target).map(|(a, b)| a - b).collect()),
        &[seed],
        Some(&bounds),
        &LeastSquaresOptions::default(),
    )?;
    let mean = report.params[0];
    let residual = model(mean)
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(ModelFit { mean, residual })
}

/// Compare Poisson and Gibbs fits of `P`.
pub fn classify_state(p: &FockDistribution) -> Result<Classification> {
    let poisson = fit_family(p, poisson_terms)?;
    let gibbs = fit_family(p, gibbs_terms)?;
    let larger = poisson.residual.max(gibbs.residual);
    let relative = if larger > 0.0 {
        (poisson.residual - gibbs.residual).abs() / larger
    } else {
        0.0
    };
    let (class, mean) = if larger < RESIDUAL_FLOOR || relative < DISCRIMINATION_THRESHOLD {
        (StateClass::Ambiguous, poisson.mean)
    } else if poisson.residual < gibbs.residual {
        (StateClass::Coherent, poisson.mean)
    } else {
        (StateClass::Thermal, gibbs.mean)
    };
    Ok(Classification {
        class,
        mean,
        poisson,
        gibbs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cavity::{gibbs_distribution, poisson_distribution};
    use crate::units::{ghz_to_angular, mhz_to_angular};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn qubit() -> QubitParams {
        QubitParams {
            qubit_frequency: ghz_to_angular(4.1024),
            anharmonicity: mhz_to_angular(-273.0),
            coupling: mhz_to_angular(80.7),
            dispersive_shift: mhz_to_angular(-3.725),
            qubit_linewidth: mhz_to_angular(0.5),
            resonator_linewidth: mhz_to_angular(2.0),
            readout_frequency: ghz_to_angular(7.4386),
        }
    }

    fn truncated(p: FockDistribution, nmax: usize) -> FockDistribution {
        FockDistribution::from_weights(p.probabilities()[..=nmax].to_vec()).unwrap()
    }

    fn add_noise(s: &Spectrum, snr_db: f64, seed: u64) -> Spectrum {
        let peak = s.response().iter().cloned().fold(0.0, f64::max);
        let sigma = peak * 10f64.powf(-snr_db / 20.0);
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        s.with_response(s.response().iter().map(|r| r + normal.sample(&mut rng)).collect())
            .unwrap()
    }

    #[test]
    fn critical_photon_number_table_values() {
        let q = qubit();
        let n = critical_photon_number(&q, ghz_to_angular(4.6704)).unwrap();
        let oracle = ((4.1024 - 4.6704) / (2.0 * 0.0807_f64)).powi(2);
        assert!((n - oracle).abs() < 1e-9);
        assert!((n - 12.4).abs() < 0.05);
        let mut q2 = q;
        q2.coupling *= 2.0;
        let n2 = critical_photon_number(&q2, ghz_to_angular(4.6704)).unwrap();
        assert!((n2 - n / 4.0).abs() < 1e-12);
        assert_eq!(critical_photon_number(&q, q.qubit_frequency).unwrap(), 0.0);
    }

    #[test]
    fn table_device_is_resolvable() {
        let q = qubit();
        assert!(q.is_resolvable());
        let mut broad = q;
        broad.qubit_linewidth = mhz_to_angular(10.0);
        assert!(!broad.is_resolvable());
        let mut leaky = q;
        leaky.resonator_linewidth = mhz_to_angular(8.0);
        assert!(!leaky.is_resolvable());
    }

    #[test]
    fn vacuum_gives_single_peak_at_qubit_frequency() {
        let q = qubit();
        let grid = default_grid(&q, 3, 4001).unwrap();
        let s = synthesize_spectrum(&FockDistribution::vacuum(0), &q, &grid).unwrap();
        let (i, _) = s
            .response()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert!((s.frequencies()[i] - q.qubit_frequency).abs() <= grid[1] - grid[0]);
    }

    #[test]
    fn peak_spacing_is_two_chi() {
        let q = qubit();
        let spacing = angular_to_mhz_signed(q.line_center(1) - q.line_center(0));
        assert!((spacing + 7.45).abs() < 1e-9);
        // Locate the n = 0 and n = 1 maxima on a fine grid.
        let p = FockDistribution::new(vec![0.5, 0.5]).unwrap();
        let grid = default_grid(&q, 1, 200_001).unwrap();
        let s = synthesize_spectrum(&p, &q, &grid).unwrap();
        let local_max = |lo: f64, hi: f64| {
            s.frequencies()
                .iter()
                .zip(s.response())
                .filter(|(f, _)| **f >= lo && **f <= hi)
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(f, _)| *f)
                .unwrap()
        };
        let half = q.dispersive_shift.abs();
        let f0 = local_max(q.line_center(0) - half, q.line_center(0) + half);
        let f1 = local_max(q.line_center(1) - half, q.line_center(1) + half);
        let measured = angular_to_mhz_signed(f1 - f0);
        assert!((measured + 7.45).abs() < 0.01, "{measured}");
    }

    fn angular_to_mhz_signed(w: f64) -> f64 {
        w / (2.0 * std::f64::consts::PI * 1e6)
    }

    #[test]
    fn poisson_height_ratio() {
        let q = qubit();
        assert!((2.0 * q.dispersive_shift).abs() / q.qubit_linewidth >= 10.0);
        let p = poisson_distribution(1.21, 12).unwrap();
        let grid = default_grid(&q, p.nmax(), 20_001).unwrap();
        let s = synthesize_spectrum(&p, &q, &grid).unwrap();
        let height_at = |w: f64| {
            let i = s
                .frequencies()
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - w).abs().total_cmp(&(b.1 - w).abs()))
                .unwrap()
                .0;
            s.response()[i]
        };
        let ratio = height_at(q.line_center(1)) / height_at(q.line_center(0));
        assert!((ratio / 1.21 - 1.0).abs() < 0.02, "{ratio}");
    }

    #[test]
    fn grid_must_cover_all_lines() {
        let q = qubit();
        let p = poisson_distribution(1.21, 12).unwrap();
        let grid = default_grid(&q, 3, 1001).unwrap();
        assert!(matches!(synthesize_spectrum(&p, &q, &grid), Err(Error::Domain(_))));
    }

    #[test]
    fn synthesis_is_linear() {
        let q = qubit();
        let a = gibbs_distribution(1.0, 10).unwrap().with_nmax(20).unwrap();
        let b = poisson_distribution(2.0, 10).unwrap().with_nmax(20).unwrap();
        let grid = default_grid(&q, 20, 3001).unwrap();
        let sa = synthesize_spectrum(&a, &q, &grid).unwrap();
        let sb = synthesize_spectrum(&b, &q, &grid).unwrap();
        let w = 0.3;
        let mixed = synthesize_spectrum(&a.mix(&b, w).unwrap(), &q, &grid).unwrap();
        for i in 0..grid.len() {
            let lin = w * sa.response()[i] + (1.0 - w) * sb.response()[i];
            assert!((mixed.response()[i] - lin).abs() < 1e-14);
        }
    }

    #[test]
    fn gibbs_round_trip() {
        let q = qubit();
        let p = gibbs_distribution(1.0, 10).unwrap();
        let grid = default_grid(&q, p.nmax(), 8001).unwrap();
        let s = synthesize_spectrum(&p, &q, &grid).unwrap();
        let fit = extract_populations(&s, &q, p.nmax()).unwrap();
        assert!(fit.distribution.total_variation(&p) < 1e-6);
        assert!((fit.linewidth / q.qubit_linewidth - 1.0).abs() < 1e-6);
    }

    #[test]
    fn poisson_round_trip_mean() {
        let q = qubit();
        let p = poisson_distribution(1.21, 10).unwrap();
        let grid = default_grid(&q, p.nmax(), 8001).unwrap();
        let s = synthesize_spectrum(&p, &q, &grid).unwrap();
        let fit = extract_populations(&s, &q, p.nmax()).unwrap();
        assert!((fit.distribution.mean() - 1.21).abs() < 0.04);
        assert!((fit.distribution.mean() - p.mean()).abs() < 1e-6);
    }

    #[test]
    fn noisy_round_trip_at_20_db() {
        let q = qubit();
        let nmax = 10;
        for (k, p) in [
            truncated(gibbs_distribution(1.0, nmax).unwrap(), nmax),
            truncated(poisson_distribution(1.21, nmax).unwrap(), nmax),
            truncated(poisson_distribution(3.0, nmax).unwrap(), nmax),
        ]
        .into_iter()
        .enumerate()
        {
            let grid = default_grid(&q, nmax, 20_001).unwrap();
            let clean = synthesize_spectrum(&p, &q, &grid).unwrap();
            let noisy = add_noise(&clean, 20.0, 100 + k as u64);
            let fit = extract_populations(&noisy, &q, nmax).unwrap();
            let tv = fit.distribution.total_variation(&p);
            assert!(tv < 0.03, "case {k}: tv = {tv}");
            assert_eq!(fit.distribution.argmax(), p.argmax(), "case {k}");
        }
    }

    #[test]
    fn extraction_is_scale_invariant() {
        let q = qubit();
        let p = truncated(poisson_distribution(2.0, 8).unwrap(), 8);
        let grid = default_grid(&q, 8, 8001).unwrap();
        let s = add_noise(&synthesize_spectrum(&p, &q, &grid).unwrap(), 30.0, 5);
        let a = extract_populations(&s, &q, 8).unwrap();
        let b = extract_populations(&s.scaled(37.5), &q, 8).unwrap();
        assert!(a.distribution.total_variation(&b.distribution) < 1e-9);
    }

    #[test]
    fn flat_spectrum_is_rejected() {
        let q = qubit();
        let grid = default_grid(&q, 4, 501).unwrap();
        let s = Spectrum::new(grid.clone(), vec![0.0; grid.len()]).unwrap();
        assert!(matches!(extract_populations(&s, &q, 4), Err(Error::Extraction { .. })));
    }

    #[test]
    fn inverted_spectrum_is_rejected() {
        let q = qubit();
        let grid = default_grid(&q, 4, 2001).unwrap();
        let p = truncated(poisson_distribution(1.0, 4).unwrap(), 4);
        let s = synthesize_spectrum(&p, &q, &grid).unwrap();
        let mut r = s.response().to_vec();
        // Subtract a strong n = 2 line.
        for (ri, w) in r.iter_mut().zip(&grid) {
            *ri -= 0.8 * lorentzian(*w, q.line_center(2), q.qubit_linewidth);
        }
        let s = s.with_response(r).unwrap();
        assert!(matches!(extract_populations(&s, &q, 4), Err(Error::Extraction { .. })));
    }

    #[test]
    fn batch_matches_serial() {
        let q = qubit();
        let grid = default_grid(&q, 6, 3001).unwrap();
        let spectra: Vec<Spectrum> = [0.3, 1.0, 2.0]
            .iter()
            .map(|m| synthesize_spectrum(&truncated(gibbs_distribution(*m, 6).unwrap(), 6), &q, &grid).unwrap())
            .collect();
        let batch = extract_batch(&spectra, &q, 6);
        for (s, b) in spectra.iter().zip(batch) {
            assert_eq!(b.unwrap(), extract_populations(s, &q, 6).unwrap());
        }
    }

    #[test]
    fn text_round_trip() {
        let q = qubit();
        let grid = default_grid(&q, 3, 101).unwrap();
        let s = synthesize_spectrum(&truncated(gibbs_distribution(0.5, 3).unwrap(), 3), &q, &grid).unwrap();
        let mut buf = Vec::new();
        s.write_text(&mut buf).unwrap();
        let back = Spectrum::read_text(&buf[..]).unwrap();
        assert_eq!(back.len(), s.len());
        for i in 0..s.len() {
            assert!((back.frequencies()[i] / s.frequencies()[i] - 1.0).abs() < 1e-9);
            assert!((back.response()[i] - s.response()[i]).abs() <= 1e-9 * s.response()[i].abs().max(1e-300));
        }
    }

    #[test]
    fn spectrum_validation() {
        assert!(Spectrum::new(vec![1.0, 2.0], vec![0.0]).is_err());
        assert!(Spectrum::new(vec![2.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(Spectrum::new(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(Spectrum::new(vec![1.0, 2.0], vec![0.0, f64::NAN]).is_err());
        assert!(Spectrum::new(vec![1.0, 2.0], vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn exact_models_classify_with_zero_residual() {
        let g = classify_state(&gibbs_distribution(0.9, 40).unwrap()).unwrap();
        assert_eq!(g.class, StateClass::Thermal);
        assert!((g.mean - 0.9).abs() < 1e-6, "{}", g.mean);
        assert!(g.gibbs.residual < 1e-9);

        let p = classify_state(&poisson_distribution(1.21, 40).unwrap()).unwrap();
        assert_eq!(p.class, StateClass::Coherent);
        assert!((p.mean - 1.21).abs() < 1e-6);
        assert!(p.poisson.residual < 1e-9);
    }

    #[test]
    fn small_occupation_is_ambiguous() {
        for d in [
            gibbs_distribution(0.05, 40).unwrap(),
            poisson_distribution(0.05, 40).unwrap(),
        ] {
            assert_eq!(classify_state(&d).unwrap().class, StateClass::Ambiguous);
        }
    }

    #[test]
    fn discrimination_threshold_scan() {
        // Smallest n̄ on a grid at which both model families are classified
        // correctly; it must sit between the ambiguous and resolved examples.
        let grid: Vec<f64> = (1..=100).map(|k| 0.02 * k as f64).collect();
        let resolved = |m: f64| {
            classify_state(&gibbs_distribution(m, 40).unwrap()).unwrap().class == StateClass::Thermal
                && classify_state(&poisson_distribution(m, 40).unwrap()).unwrap().class == StateClass::Coherent
        };
        let threshold = grid
            .iter()
            .cloned()
            .find(|m| resolved(*m))
            .expect("no threshold below 2");
        assert!(threshold > 0.05 && threshold < 0.9, "{threshold}");
        for m in grid.iter().filter(|m| **m >= threshold) {
            assert!(resolved(*m), "not resolved at {m}");
        }
    }
}
