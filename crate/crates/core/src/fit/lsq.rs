//! Box-constrained Levenberg–Marquardt with a MINPACK-style trust region.
//!
//! Each outer iteration forms a finite-difference Jacobian, takes the
//! Gauss–Newton step when it fits inside the trust region and otherwise
//! solves for the damping that puts the scaled step on the region boundary.
//! Trial points are projected onto the bounds before evaluation.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// A cost this far below the starting cost counts as an exact fit.
const EXACT_FIT_FRACTION: f64 = 1e-24;

/// Inclusive box bounds on the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate(b.lower.len())?;
        Ok(b)
    }

    pub fn unbounded(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::domain(format!(
                "bounds have {} / {} entries for {n} parameters",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::domain(format!("invalid bounds for parameter {i}: [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    fn project(&self, x: &mut DVector<f64>) {
        for i in 0..x.len() {
            x[i] = x[i].clamp(self.lower[i], self.upper[i]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeastSquaresOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step changes the cost by less than this
    /// fraction.
    pub relative_tolerance: f64,
    /// Relative finite-difference step for the Jacobian.
    pub fd_step: f64,
    /// Use central differences (two evaluations per parameter).
    pub central_differences: bool,
    /// Initial trust radius as a multiple of the scaled parameter norm.
    pub initial_radius_factor: f64,
}

impl Default for LeastSquaresOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            relative_tolerance: 1e-10,
            fd_step: 1e-7,
            central_differences: true,
            initial_radius_factor: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative cost change below tolerance.
    CostConverged,
    /// Zero residual or vanishing gradient.
    ExactFit,
    /// Trust region collapsed without further decrease.
    StepTooSmall,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresReport {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `½ Σ r²` at the solution.
    pub cost: f64,
    /// Cost at the start and after every accepted step.
    pub cost_history: Vec<f64>,
    /// Parameter covariance `s² (JᵀJ)⁻¹`, when the problem is overdetermined
    /// and `JᵀJ` is invertible.
    pub covariance: Option<DMatrix<f64>>,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

impl LeastSquaresReport {
    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxIterations
    }

    /// One-sigma parameter uncertainties from the covariance diagonal.
    pub fn std_errors(&self) -> Option<Vec<f64>> {
        self.covariance
            .as_ref()
            .map(|c| (0..c.nrows()).map(|i| c[(i, i)].max(0.0).sqrt()).collect())
    }

    pub fn rms_residual(&self) -> f64 {
        (2.0 * self.cost / self.residuals.len().max(1) as f64).sqrt()
    }
}

struct Problem<'a, F> {
    residuals: F,
    bounds: &'a Bounds,
    opts: &'a LeastSquaresOptions,
    evaluations: usize,
    m: usize,
}

impl<F> Problem<'_, F>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    fn eval(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.evaluations += 1;
        let r = (self.residuals)(x.as_slice())?;
        if r.len() != self.m {
            return Err(Error::domain(format!(
                "residual length changed from {} to {}",
                self.m,
                r.len()
            )));
        }
        Ok(DVector::from_vec(r))
    }

    fn jacobian(&mut self, x: &DVector<f64>, r: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = x.len();
        let mut jac = DMatrix::zeros(self.m, n);
        for j in 0..n {
            let h = self.opts.fd_step * x[j].abs().max(self.opts.fd_step.sqrt());
            let (lo, hi) = (self.bounds.lower[j], self.bounds.upper[j]);
            let can_up = x[j] + h <= hi;
            let can_down = x[j] - h >= lo;
            let column = if self.opts.central_differences && can_up && can_down {
                let mut xp = x.clone();
                xp[j] += h;
                let mut xm = x.clone();
                xm[j] -= h;
                let rp = self.eval(&xp)?;
                let rm = self.eval(&xm)?;
                (rp - rm) / (2.0 * h)
            } else if can_up {
                let mut xp = x.clone();
                xp[j] += h;
                (self.eval(&xp)? - r) / h
            } else {
                let mut xm = x.clone();
                xm[j] -= h;
                (r - self.eval(&xm)?) / h
            };
            jac.set_column(j, &column);
        }
        Ok(jac)
    }
}

/// Solve `(A + λ D²) p = −g`, falling back to a pseudo-inverse when the
/// system is singular.
fn damped_step(a: &DMatrix<f64>, g: &DVector<f64>, d: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let mut m = a.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += lambda * d[i] * d[i];
    }
    if let Some(ch) = m.clone().cholesky() {
        return -ch.solve(g);
    }
    let svd = m.svd(true, true);
    match svd.solve(g, 1e-14) {
        Ok(p) => -p,
        Err(_) => DVector::zeros(g.len()),
    }
}

fn scaled_norm(d: &DVector<f64>, p: &DVector<f64>) -> f64 {
    d.component_mul(p).norm()
}

/// Step of scaled length at most `radius`; returns the step.
fn trust_region_step(a: &DMatrix<f64>, g: &DVector<f64>, d: &DVector<f64>, radius: f64) -> DVector<f64> {
    let gn = damped_step(a, g, d, 0.0);
    if gn.iter().all(|v| v.is_finite()) && scaled_norm(d, &gn) <= radius {
        return gn;
    }
    // ‖D p(λ)‖ decreases monotonically in λ; bracket then bisect in log λ.
    let mut lo = 0.0_f64;
    let mut hi = 1e-8_f64.max(g.norm() / radius);
    while scaled_norm(d, &damped_step(a, g, d, hi)) > radius {
        lo = hi;
        hi *= 10.0;
        if hi > 1e300 {
            break;
        }
    }
    for _ in 0..60 {
        let mid = if lo == 0.0 { hi / 10.0 } else { (lo * hi).sqrt() };
        let len = scaled_norm(d, &damped_step(a, g, d, mid));
        if (len - radius).abs() < 0.05 * radius {
            return damped_step(a, g, d, mid);
        }
        if len > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if lo > 0.0 && hi / lo < 1.0 + 1e-6 {
            break;
        }
    }
    damped_step(a, g, d, hi)
}

/// Minimize `½ Σ r_i(x)²` subject to optional box bounds.
///
/// `residuals` maps parameters to the residual vector, whose length must
/// not change between calls. Errors from `residuals` propagate unchanged.
pub fn least_squares<F>(
    residuals: F,
    params0: &[f64],
    bounds: Option<&Bounds>,
    opts: &LeastSquaresOptions,
) -> Result<LeastSquaresReport>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = params0.len();
    if n == 0 {
        return Err(Error::domain("no parameters to fit"));
    }
    let unbounded = Bounds::unbounded(n);
    let bounds = bounds.unwrap_or(&unbounded);
    bounds.validate(n)?;

    let mut x = DVector::from_column_slice(params0);
    bounds.project(&mut x);
    let mut residuals = residuals;
    let r0 = residuals(x.as_slice())?;
    let m = r0.len();
    if m == 0 {
        return Err(Error::domain("empty residual vector"));
    }
    let mut r = DVector::from_vec(r0);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("model residuals are not finite at the starting point"));
    }
    let mut problem = Problem {
        residuals,
        bounds,
        opts,
        evaluations: 1,
        m,
    };

    let mut cost = 0.5 * r.norm_squared();
    let mut history = vec![cost];
    let mut diag: DVector<f64> = DVector::from_element(n, 0.0);
    let mut radius = 0.0;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let mut jac = DMatrix::zeros(m, n);

    while iterations < opts.max_iterations {
        iterations += 1;
        if cost == 0.0 {
            termination = Termination::ExactFit;
            break;
        }
        jac = problem.jacobian(&x, &r)?;
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        for j in 0..n {
            let col = jac.column(j).norm();
            diag[j] = diag[j].max(if col > 0.0 { col } else { 1.0 });
        }
        if iterations == 1 {
            let xn = scaled_norm(&diag, &x);
            radius = opts.initial_radius_factor * if xn > 0.0 { xn } else { 1.0 };
        }
        if g.amax() == 0.0 {
            termination = Termination::ExactFit;
            break;
        }

        // Inner loop: shrink the region until a step is accepted.
        let mut accepted = false;
        while !accepted {
            let p = trust_region_step(&a, &g, &diag, radius);
            let mut trial = &x + &p;
            bounds.project(&mut trial);
            let step = &trial - &x;
            let step_norm = scaled_norm(&diag, &step);
            if step_norm <= 1e-15 * scaled_norm(&diag, &x).max(1e-300) || step_norm == 0.0 {
                termination = Termination::StepTooSmall;
                break;
            }
            let predicted = -(g.dot(&step) + 0.5 * step.dot(&(&a * &step)));
            let r_trial = problem.eval(&trial)?;
            let cost_trial = 0.5 * r_trial.norm_squared();
            let ratio = if cost_trial.is_finite() && predicted > 0.0 {
                (cost - cost_trial) / predicted
            } else {
                -1.0
            };

            if ratio < 0.25 {
                radius = 0.25 * step_norm;
            } else if ratio > 0.75 {
                radius = radius.max(2.0 * step_norm);
            }

            if ratio > 1e-4 && cost_trial <= cost {
                let change = cost - cost_trial;
                x = trial;
                r = r_trial;
                let previous = cost;
                cost = cost_trial;
                history.push(cost);
                accepted = true;
                if cost <= EXACT_FIT_FRACTION * history[0] {
                    termination = Termination::ExactFit;
                } else if change <= opts.relative_tolerance * previous {
                    termination = Termination::CostConverged;
                }
            } else if radius <= 1e-15 * scaled_norm(&diag, &x).max(1e-300) {
                termination = Termination::StepTooSmall;
                break;
            }
        }
        if termination != Termination::MaxIterations {
            break;
        }
    }

    // Covariance from the last Jacobian, refreshed at the solution when a
    // step was taken after it was formed.
    if termination != Termination::ExactFit || iterations > 0 {
        jac = problem.jacobian(&x, &r)?;
    }
    let covariance = if m > n {
        let s2 = 2.0 * cost / (m - n) as f64;
        (jac.transpose() * &jac).try_inverse().map(|inv| inv * s2)
    } else {
        None
    };

    Ok(LeastSquaresReport {
        params: x.as_slice().to_vec(),
        residuals: r.as_slice().to_vec(),
        cost,
        cost_history: history,
        covariance,
        iterations,
        evaluations: problem.evaluations,
        termination,
    })
}
