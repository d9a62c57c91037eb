//! Thermal birth–death master equation for Fock populations:
//!
//! ```text
//! dP_n/dt = Σ_b γ_b [(n̄_b+1)((n+1)P_{n+1} − nP_n) + n̄_b(nP_{n−1} − (n+1)P_n)]
//! ```
//!
//! Summed over baths this is a single chain with down rate `n Γ↓` and up
//! rate `(n+1) Γ↑`, `Γ↓ = Σ γ_b(n̄_b+1)`, `Γ↑ = Σ γ_b n̄_b`. The up
//! transition out of the last retained level is dropped so that columns of
//! the generator sum to zero.

use super::{Bath, FockDistribution};
use crate::{Error, Result};

/// Tridiagonal generator of the truncated chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator {
    /// Γ↓ = Σ γ_b (n̄_b + 1).
    pub down: f64,
    /// Γ↑ = Σ γ_b n̄_b.
    pub up: f64,
    /// Number of retained levels (nmax + 1).
    pub size: usize,
}

impl Generator {
    pub fn from_baths(baths: &[Bath], size: usize) -> Self {
        let down = baths.iter().map(|b| b.coupling * (b.occupation + 1.0)).sum();
        let up = baths.iter().map(|b| b.coupling * b.occupation).sum();
        Self { down, up, size }
    }

    fn leave_rate(&self, n: usize) -> f64 {
        let down = n as f64 * self.down;
        let up = if n + 1 < self.size {
            (n + 1) as f64 * self.up
        } else {
            0.0
        };
        down + up
    }

    /// `out = L p`.
    pub fn apply(&self, p: &[f64], out: &mut [f64]) {
        let m = self.size;
        for n in 0..m {
            let mut v = -self.leave_rate(n) * p[n];
            if n + 1 < m {
                v += (n + 1) as f64 * self.down * p[n + 1];
            }
            if n > 0 {
                v += n as f64 * self.up * p[n - 1];
            }
            out[n] = v;
        }
    }

    /// Dense copy, row-major; used for checking conservation.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let m = self.size;
        let mut a = vec![vec![0.0; m]; m];
        for n in 0..m {
            a[n][n] = -self.leave_rate(n);
            if n + 1 < m {
                a[n][n + 1] = (n + 1) as f64 * self.down;
                a[n + 1][n] = (n + 1) as f64 * self.up;
            }
        }
        a
    }

    /// Largest exit rate of any retained level.
    pub fn max_rate(&self) -> f64 {
        (0..self.size).map(|n| self.leave_rate(n)).fold(0.0, f64::max)
    }

    /// Solve `(I − h L) x = b` in place (Thomas algorithm; the matrix is an
    /// M-matrix so no pivoting is needed).
    fn solve_implicit(&self, h: f64, b: &mut [f64]) {
        let m = self.size;
        // Row n: sub[n] x[n-1] + diag[n] x[n] + sup[n] x[n+1] = b[n]
        let mut c = vec![0.0; m];
        let diag = |n: usize| 1.0 + h * self.leave_rate(n);
        let sub = |n: usize| -h * n as f64 * self.up;
        let sup = |n: usize| -h * (n + 1) as f64 * self.down;
        let mut denom = diag(0);
        c[0] = if m > 1 { sup(0) / denom } else { 0.0 };
        b[0] /= denom;
        for n in 1..m {
            denom = diag(n) - sub(n) * c[n - 1];
            if n + 1 < m {
                c[n] = sup(n) / denom;
            }
            b[n] = (b[n] - sub(n) * b[n - 1]) / denom;
        }
        for n in (0..m - 1).rev() {
            b[n] -= c[n] * b[n + 1];
        }
    }
}

/// Bath configuration as a function of time.
pub trait BathSchedule {
    /// Baths acting on the interval containing `t`.
    fn baths_at(&self, t: f64) -> &[Bath];

    /// Every distinct bath set the schedule can produce.
    fn bath_sets(&self) -> Vec<&[Bath]>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantBaths(pub Vec<Bath>);

impl BathSchedule for ConstantBaths {
    fn baths_at(&self, _t: f64) -> &[Bath] {
        &self.0
    }

    fn bath_sets(&self) -> Vec<&[Bath]> {
        vec![&self.0]
    }
}

/// Periodic switching between two complete bath sets; `on` during the first
/// `duty` fraction of each period.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareWave {
    pub period: f64,
    pub duty: f64,
    pub on: Vec<Bath>,
    pub off: Vec<Bath>,
}

impl BathSchedule for SquareWave {
    fn baths_at(&self, t: f64) -> &[Bath] {
        if (t / self.period).rem_euclid(1.0) < self.duty {
            &self.on
        } else {
            &self.off
        }
    }

    fn bath_sets(&self) -> Vec<&[Bath]> {
        vec![&self.on, &self.off]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Classical fourth-order Runge–Kutta; requires `dt · max rate < 0.1`.
    #[default]
    Rk4,
    /// Backward Euler; unconditionally stable and positivity preserving.
    BackwardEuler,
}

/// Sampled solution of the master equation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<FockDistribution>,
}

impl Trajectory {
    pub fn means(&self) -> Vec<f64> {
        self.states.iter().map(|p| p.mean()).collect()
    }

    pub fn last(&self) -> &FockDistribution {
        self.states.last().expect("trajectory always holds the initial state")
    }

    /// Trapezoidal time average of `n̄(t)` over samples with `t >= from`.
    pub fn time_average_mean(&self, from: f64) -> Result<f64> {
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.states)
            .filter(|(t, _)| **t >= from)
            .map(|(t, p)| (*t, p.mean()))
            .collect();
        if pts.len() < 2 {
            return Err(Error::domain("need at least two samples to average"));
        }
        let mut area = 0.0;
        for w in pts.windows(2) {
            area += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
        }
        Ok(area / (pts[pts.len() - 1].0 - pts[0].0))
    }
}

/// Time stepper for the birth–death equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MasterEquation {
    pub integrator: Integrator,
    /// Store every `record_every`-th step (the initial and final states are
    /// always stored).
    pub record_every: usize,
}

impl Default for MasterEquation {
    fn default() -> Self {
        Self {
            integrator: Integrator::Rk4,
            record_every: 1,
        }
    }
}

impl MasterEquation {
    pub fn new(integrator: Integrator) -> Self {
        Self {
            integrator,
            ..Self::default()
        }
    }

    pub fn record_every(mut self, n: usize) -> Self {
        self.record_every = n.max(1);
        self
    }

    /// Evolve `initial` for `duration` seconds in steps of `dt`. Bath rates
    /// are sampled at the midpoint of each step, so piecewise-constant
    /// schedules are exact when their switching times fall on step edges.
    pub fn evolve<S: BathSchedule + ?Sized>(
        &self,
        initial: &FockDistribution,
        schedule: &S,
        duration: f64,
        dt: f64,
    ) -> Result<Trajectory> {
        if !(dt > 0.0 && duration >= 0.0) {
            return Err(Error::domain("time step must be positive and duration non-negative"));
        }
        let size = initial.len();
        if self.integrator == Integrator::Rk4 {
            let stiffness = schedule
                .bath_sets()
                .iter()
                .map(|b| Generator::from_baths(b, size).max_rate())
                .fold(0.0, f64::max)
                * dt;
            if stiffness >= 0.1 {
                return Err(Error::Stiff { stiffness });
            }
        }

        let steps = (duration / dt).round() as usize;
        let mut p = initial.probabilities().to_vec();
        let mut times = vec![0.0];
        let mut states = vec![initial.clone()];
        let mut k1 = vec![0.0; size];
        let mut k2 = vec![0.0; size];
        let mut k3 = vec![0.0; size];
        let mut k4 = vec![0.0; size];
        let mut tmp = vec![0.0; size];

        for step in 0..steps {
            let t = step as f64 * dt;
            let generator = Generator::from_baths(schedule.baths_at(t + 0.5 * dt), size);
            match self.integrator {
                Integrator::Rk4 => {
                    generator.apply(&p, &mut k1);
                    for i in 0..size {
                        tmp[i] = p[i] + 0.5 * dt * k1[i];
                    }
                    generator.apply(&tmp, &mut k2);
                    for i in 0..size {
                        tmp[i] = p[i] + 0.5 * dt * k2[i];
                    }
                    generator.apply(&tmp, &mut k3);
                    for i in 0..size {
                        tmp[i] = p[i] + dt * k3[i];
                    }
                    generator.apply(&tmp, &mut k4);
                    for i in 0..size {
                        p[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                    }
                }
                Integrator::BackwardEuler => generator.solve_implicit(dt, &mut p),
            }
            for x in p.iter_mut() {
                if *x < 0.0 {
                    *x = 0.0;
                }
            }
            let total: f64 = p.iter().sum();
            for x in p.iter_mut() {
                *x /= total;
            }
            if (step + 1) % self.record_every == 0 || step + 1 == steps {
                times.push((step + 1) as f64 * dt);
                states.push(FockDistribution::from_weights(p.clone())?);
            }
        }
        Ok(Trajectory { times, states })
    }
}
