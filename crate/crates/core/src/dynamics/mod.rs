//! Fully discrete controlled Cahn-Hilliard dynamics: Galerkin in space,
//! implicit Euler in time, Newton's method per step.
//!
//! Each step solves
//! ⟨d_τ yⁿ, v⟩ + ν⟨Δyⁿ, Δv⟩ = ⟨φ(yⁿ), Δv⟩ + ⟨hⁿ, v⟩ − ⟨F(yⁿ − y_rⁿ), v⟩
//! for all v in the truncated basis. Because the basis is L²-orthonormal and
//! diagonalizes Δ, the residual and its Jacobian act directly on coefficient
//! vectors (see [`newton`]).
//!
//! A [`simulate`] run records per-step tracking norms, the two sides of the
//! discrete energy inequality (1 + τγ)‖zⁿ‖² ≤ ‖zⁿ⁻¹‖² + τ‖gⁿ‖², feedback
//! magnitudes and Newton statistics for post-hoc decay analysis.

mod newton;

use crate::feedback::FeedbackOperator;
use crate::gap::GapCertificate;
use crate::spectral::{same_disc, Discretization, SpectralError, SpectralField};
use nalgebra::{DMatrix, DVector};
use newton::StepProblem;
use std::sync::Arc;
use thiserror::Error;

/// Slack factor for the per-step energy-inequality check, scaled by ‖z⁰‖².
pub const ENERGY_TOLERANCE_FACTOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("nu must be positive, got {0}")]
    NonpositiveNu(f64),
    #[error("tau must be positive, got {0}")]
    NonpositiveTau(f64),
    #[error("time horizon must cover at least one step (t_end {t_end}, tau {tau})")]
    EmptyHorizon { t_end: f64, tau: f64 },
    #[error("manufactured forcing needs at least 2 time levels, got {0}")]
    TooFewTimeLevels(usize),
    #[error("reference trajectory has {got} states, expected {expected} (steps + 1)")]
    ReferenceLengthMismatch { expected: usize, got: usize },
    #[error("forcing sequence has {got} entries, expected {expected} (one per step)")]
    ForcingLengthMismatch { expected: usize, got: usize },
    #[error("Newton did not converge{} after {iterations} iterations (residual {residual:.3e})", step.map(|n| format!(" at step {n}")).unwrap_or_default())]
    NewtonDivergence {
        step: Option<usize>,
        iterations: usize,
        residual: f64,
    },
    #[error("inner linear solver stalled after {iterations} iterations (residual {residual:.3e})")]
    LinearSolveStalled { iterations: usize, residual: f64 },
    #[error("decay window contains {0} samples, need at least 3")]
    WindowTooSmall(usize),
    #[error("decay fit requires positive squared norms, sample at t = {0} is not")]
    NonpositiveDecaySample(f64),
    #[error("gamma_tilde undefined: 1 + tau*gamma = {0} is not positive")]
    GammaTildeDomain(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Feedback(#[from] crate::feedback::FeedbackError),
}

/// Model and integrator parameters.
#[derive(Debug, Clone, Copy)]
pub struct ModelParams {
    /// Interface parameter ν > 0.
    pub nu: f64,
    /// Time step τ > 0.
    pub tau: f64,
    pub t_end: f64,
    /// Optional declared bound on ‖y_r‖_{W^{1,∞}} (checked against the
    /// measured bound by the caller).
    pub r_declared: Option<f64>,
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.nu <= 0.0 || !self.nu.is_finite() {
            return Err(DynamicsError::NonpositiveNu(self.nu));
        }
        if self.tau <= 0.0 || !self.tau.is_finite() {
            return Err(DynamicsError::NonpositiveTau(self.tau));
        }
        if self.num_steps() == 0 {
            return Err(DynamicsError::EmptyHorizon {
                t_end: self.t_end,
                tau: self.tau,
            });
        }
        Ok(())
    }

    /// Number of implicit Euler steps covering [0, t_end].
    pub fn num_steps(&self) -> usize {
        (self.t_end / self.tau).round().max(0.0) as usize
    }
}

/// Linear solver for the Newton systems. Both routes apply the same analytic
/// Jacobian; `Auto` uses dense LU up to 512 unknowns and preconditioned
/// matrix-free GMRES above.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LinearSolver {
    #[default]
    Auto,
    Dense,
    MatrixFree,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Converged when ‖G‖ ≤ tolerance_factor · (1 + ‖c‖/τ).
    pub tolerance_factor: f64,
    pub max_damping_halvings: usize,
    pub solver: LinearSolver,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance_factor: 1e-11,
            max_damping_halvings: 30,
            solver: LinearSolver::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonStats {
    pub iterations: usize,
    pub residual_norm: f64,
    pub damping_halvings: usize,
}

/// Discrete target trajectory together with the forcing h_rⁿ that makes it an
/// exact solution of the discrete scheme.
pub struct Reference {
    states: Vec<SpectralField>,
    /// forcing[n − 1] = h_rⁿ for steps n = 1..=num_steps.
    forcing: Vec<SpectralField>,
}

impl Reference {
    /// y_r ≡ 0 with zero forcing.
    pub fn zero(disc: &Arc<Discretization>, num_steps: usize) -> Self {
        let zero = SpectralField::zero(disc);
        Self {
            states: vec![zero.clone(); num_steps + 1],
            forcing: vec![zero; num_steps],
        }
    }

    /// Constant-in-space-and-time reference; all forcing terms vanish since
    /// Δφ(const) = Δ²const = 0.
    pub fn constant(disc: &Arc<Discretization>, value: f64, num_steps: usize) -> Self {
        let state = SpectralField::constant(disc, value);
        let zero = SpectralField::zero(disc);
        Self {
            states: vec![state; num_steps + 1],
            forcing: vec![zero; num_steps],
        }
    }

    /// Time-independent reference state with its steady residual forcing
    /// h_r = νΔ²y_r − Δφ(y_r).
    pub fn steady(state: SpectralField, nu: f64, num_steps: usize) -> Self {
        let disc = Arc::clone(state.disc());
        let phi = state.apply_phi();
        let mu = disc.mu();
        let coeffs = DVector::from_fn(disc.num_modes(), |k, _| {
            nu * mu[k] * mu[k] * state.coeffs()[k] + mu[k] * phi.coeffs()[k]
        });
        let h = SpectralField::from_coeffs(&disc, coeffs).expect("same discretization");
        Self {
            states: vec![state; num_steps + 1],
            forcing: vec![h; num_steps],
        }
    }

    /// Arbitrary discrete trajectory; the forcing is manufactured so the
    /// states satisfy the scheme exactly.
    pub fn from_states(
        states: Vec<SpectralField>,
        nu: f64,
        tau: f64,
    ) -> Result<Self, DynamicsError> {
        let forcing = manufacture_forcing(&states, nu, tau)?;
        Ok(Self { states, forcing })
    }

    pub fn num_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn state(&self, n: usize) -> &SpectralField {
        &self.states[n]
    }

    pub fn states(&self) -> &[SpectralField] {
        &self.states
    }

    /// h_rⁿ for a step index n ≥ 1.
    pub fn forcing_at(&self, n: usize) -> &SpectralField {
        &self.forcing[n - 1]
    }

    /// Measured sup-norm bound max_n ‖y_rⁿ‖_{W^{1,∞}} (grid max of |y_r| and
    /// |∇y_r|, gradient spectrally exact).
    pub fn sup_bound(&self) -> f64 {
        self.states
            .iter()
            .map(|s| {
                let (v, g) = s.sup_norms();
                v.max(g)
            })
            .fold(0.0, f64::max)
    }
}

/// Projection of the tanh interface profile y₀(x) = tanh((2x₁ − 1)/√(8ν))
/// onto the basis (constant in the second coordinate for d = 2).
pub fn initial_tanh(disc: &Arc<Discretization>, nu: f64) -> SpectralField {
    assert!(nu > 0.0, "initial_tanh requires nu > 0");
    let width = (8.0 * nu).sqrt();
    let values = DVector::from_fn(disc.num_grid_points(), |q, _| {
        let x = disc.grid_coords(q)[0];
        ((2.0 * x - 1.0) / width).tanh()
    });
    SpectralField::from_grid(disc, &values).expect("grid sizes match")
}

/// h_rⁿ := d_τ y_rⁿ + νΔ²y_rⁿ − Δφ(y_rⁿ) for n = 1..states.len()−1, computed
/// spectrally, so the given states satisfy the discrete scheme exactly.
pub fn manufacture_forcing(
    states: &[SpectralField],
    nu: f64,
    tau: f64,
) -> Result<Vec<SpectralField>, DynamicsError> {
    if states.len() < 2 {
        return Err(DynamicsError::TooFewTimeLevels(states.len()));
    }
    if tau <= 0.0 || tau.is_nan() {
        return Err(DynamicsError::NonpositiveTau(tau));
    }
    let disc = states[0].disc();
    let mu = disc.mu();
    let mut forcing = Vec::with_capacity(states.len() - 1);
    for n in 1..states.len() {
        if !same_disc(states[n].disc(), disc) {
            return Err(SpectralError::DiscretizationMismatch.into());
        }
        let current = &states[n];
        let previous = &states[n - 1];
        let phi = current.apply_phi();
        let coeffs = DVector::from_fn(disc.num_modes(), |k, _| {
            (current.coeffs()[k] - previous.coeffs()[k]) / tau
                + nu * mu[k] * mu[k] * current.coeffs()[k]
                + mu[k] * phi.coeffs()[k]
        });
        forcing.push(SpectralField::from_coeffs(disc, coeffs).expect("same discretization"));
    }
    Ok(forcing)
}

/// Coefficient-space residual of the scheme at state `y` (diagnostic surface
/// for the Newton iteration; `step` drives this same function to zero).
pub fn scheme_residual(
    y: &SpectralField,
    y_prev: &SpectralField,
    forcing: Option<&SpectralField>,
    reference_state: &SpectralField,
    feedback: &FeedbackOperator,
    params: &ModelParams,
) -> Result<DVector<f64>, DynamicsError> {
    params.validate()?;
    let disc = y.disc();
    if !same_disc(disc, y_prev.disc())
        || !same_disc(disc, reference_state.disc())
        || !same_disc(disc, feedback.disc())
        || forcing.map(|h| !same_disc(disc, h.disc())).unwrap_or(false)
    {
        return Err(SpectralError::DiscretizationMismatch.into());
    }
    let problem = StepProblem {
        disc,
        nu: params.nu,
        tau: params.tau,
        feedback,
        c_prev: y_prev.coeffs(),
        c_ref: reference_state.coeffs(),
        forcing: forcing.map(|h| h.coeffs()),
    };
    Ok(problem.residual(y.coeffs()))
}

/// Dense analytic Jacobian of the scheme residual at state `y`.
pub fn scheme_jacobian(
    y: &SpectralField,
    feedback: &FeedbackOperator,
    params: &ModelParams,
) -> Result<DMatrix<f64>, DynamicsError> {
    params.validate()?;
    let disc = y.disc();
    if !same_disc(disc, feedback.disc()) {
        return Err(SpectralError::DiscretizationMismatch.into());
    }
    let zero = DVector::zeros(disc.num_modes());
    let problem = StepProblem {
        disc,
        nu: params.nu,
        tau: params.tau,
        feedback,
        c_prev: &zero,
        c_ref: &zero,
        forcing: None,
    };
    let phi_prime = problem.phi_prime_grid(y.coeffs());
    Ok(problem.dense_jacobian(&phi_prime))
}

/// One implicit Euler step: solve G(yⁿ) = 0 by damped Newton starting from
/// the previous state.
pub fn step(
    y_prev: &SpectralField,
    forcing: Option<&SpectralField>,
    reference_state: &SpectralField,
    feedback: &FeedbackOperator,
    params: &ModelParams,
    options: &NewtonOptions,
) -> Result<(SpectralField, NewtonStats), DynamicsError> {
    params.validate()?;
    let disc = y_prev.disc();
    if !same_disc(disc, reference_state.disc())
        || !same_disc(disc, feedback.disc())
        || forcing.map(|h| !same_disc(disc, h.disc())).unwrap_or(false)
    {
        return Err(SpectralError::DiscretizationMismatch.into());
    }
    let problem = StepProblem {
        disc,
        nu: params.nu,
        tau: params.tau,
        feedback,
        c_prev: y_prev.coeffs(),
        c_ref: reference_state.coeffs(),
        forcing: forcing.map(|h| h.coeffs()),
    };
    let (coeffs, stats) = newton::newton_solve(&problem, y_prev.coeffs().clone(), options)?;
    let state = SpectralField::from_coeffs(disc, coeffs).expect("same discretization");
    Ok((state, stats))
}

/// Computed states yⁿ at times tⁿ = nτ, plus the forcing that produced them.
pub struct Trajectory {
    pub states: Vec<SpectralField>,
    pub tau: f64,
    pub forcing: Option<Vec<SpectralField>>,
}

impl Trajectory {
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.tau
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|n| self.time(n)).collect()
    }
}

/// Per-step diagnostics of a run.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    /// ‖zⁿ‖²_{L²} with z = y − y_r.
    pub z_norm_sq: f64,
    /// (1 + τγ)‖zⁿ‖² with γ from the attached certificate (0 when absent).
    pub energy_lhs: f64,
    /// ‖zⁿ⁻¹‖² + τ‖gⁿ‖² with g = h − h_r.
    pub energy_rhs: f64,
    /// ⟨F zⁿ, zⁿ⟩.
    pub feedback_energy: f64,
    pub newton_iterations: usize,
}

/// Run-level record for post-hoc decay analysis.
pub struct TrajectoryRecord {
    pub steps: Vec<StepRecord>,
    /// γ used for the energy columns (certificate margin, when attached).
    pub gamma_used: Option<f64>,
    /// Measured max_n ‖y_rⁿ‖_{W^{1,∞}}.
    pub reference_sup_bound: f64,
    /// Steps violating the per-step inequality beyond the tolerance; only
    /// counted when a certificate is attached (soft check, recorded not fatal).
    pub energy_violations: usize,
    pub initial_z_norm_sq: f64,
}

impl TrajectoryRecord {
    pub fn final_z_norm_sq(&self) -> f64 {
        self.steps.last().map(|s| s.z_norm_sq).unwrap_or(0.0)
    }

    pub fn samples(&self) -> Vec<(f64, f64)> {
        self.steps.iter().map(|s| (s.time, s.z_norm_sq)).collect()
    }
}

/// Run the controlled system from `y0` against a reference trajectory.
///
/// `forcing` is the external forcing hⁿ (indexed per step, `None` = 0); the
/// reference carries its own h_rⁿ. When a certificate is attached its margin
/// γ enters the recorded energy inequality and violations are counted
/// against the tolerance [`ENERGY_TOLERANCE_FACTOR`]·‖z⁰‖².
pub fn simulate(
    y0: &SpectralField,
    reference: &Reference,
    forcing: Option<&[SpectralField]>,
    feedback: &FeedbackOperator,
    params: &ModelParams,
    certificate: Option<&GapCertificate>,
    options: &NewtonOptions,
) -> Result<(Trajectory, TrajectoryRecord), DynamicsError> {
    params.validate()?;
    let steps = params.num_steps();
    if reference.states.len() != steps + 1 {
        return Err(DynamicsError::ReferenceLengthMismatch {
            expected: steps + 1,
            got: reference.states.len(),
        });
    }
    if let Some(h) = forcing {
        if h.len() != steps {
            return Err(DynamicsError::ForcingLengthMismatch {
                expected: steps,
                got: h.len(),
            });
        }
    }
    let gamma = certificate.map(|c| c.gamma);
    let gamma_eff = gamma.unwrap_or(0.0);

    let z0 = y0.sub(reference.state(0))?;
    let initial_z_norm_sq = z0.norm_l2().powi(2);
    let energy_tol = ENERGY_TOLERANCE_FACTOR * initial_z_norm_sq;

    let mut states = Vec::with_capacity(steps + 1);
    states.push(y0.clone());
    let mut records = Vec::with_capacity(steps + 1);
    records.push(StepRecord {
        step: 0,
        time: 0.0,
        z_norm_sq: initial_z_norm_sq,
        energy_lhs: 0.0,
        energy_rhs: 0.0,
        feedback_energy: feedback.quadratic_form(&z0)?,
        newton_iterations: 0,
    });

    let mut violations = 0usize;
    let mut prev_z_sq = initial_z_norm_sq;
    for n in 1..=steps {
        let h_n = forcing.map(|h| &h[n - 1]);
        let (y_n, stats) = step(
            &states[n - 1],
            h_n,
            reference.state(n),
            feedback,
            params,
            options,
        )
        .map_err(|e| match e {
            DynamicsError::NewtonDivergence {
                iterations,
                residual,
                ..
            } => DynamicsError::NewtonDivergence {
                step: Some(n),
                iterations,
                residual,
            },
            other => other,
        })?;
        let z_n = y_n.sub(reference.state(n))?;
        let z_sq = z_n.norm_l2().powi(2);
        let g_sq = match h_n {
            Some(h) => h.sub(reference.forcing_at(n))?.norm_l2().powi(2),
            None => reference.forcing_at(n).norm_l2().powi(2),
        };
        let energy_lhs = (1.0 + params.tau * gamma_eff) * z_sq;
        let energy_rhs = prev_z_sq + params.tau * g_sq;
        if gamma.is_some() && energy_lhs > energy_rhs + energy_tol {
            violations += 1;
        }
        records.push(StepRecord {
            step: n,
            time: n as f64 * params.tau,
            z_norm_sq: z_sq,
            energy_lhs,
            energy_rhs,
            feedback_energy: feedback.quadratic_form(&z_n)?,
            newton_iterations: stats.iterations,
        });
        prev_z_sq = z_sq;
        states.push(y_n);
    }

    Ok((
        Trajectory {
            states,
            tau: params.tau,
            forcing: forcing.map(|h| h.to_vec()),
        },
        TrajectoryRecord {
            steps: records,
            gamma_used: gamma,
            reference_sup_bound: reference.sup_bound(),
            energy_violations: violations,
            initial_z_norm_sq,
        },
    ))
}

/// Least-squares decay fit of log ‖z‖² over a time window.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    /// γ̂ = −slope of log ‖z‖² vs t.
    pub gamma_hat: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Fit over raw (t, ‖z‖²) samples with t ∈ [window.0, window.1].
pub fn decay_fit_samples(
    samples: &[(f64, f64)],
    window: (f64, f64),
) -> Result<DecayFit, DynamicsError> {
    let selected: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|(t, _)| *t >= window.0 - 1e-12 && *t <= window.1 + 1e-12)
        .collect();
    if selected.len() < 3 {
        return Err(DynamicsError::WindowTooSmall(selected.len()));
    }
    for (t, z) in &selected {
        if *z <= 0.0 || z.is_nan() {
            return Err(DynamicsError::NonpositiveDecaySample(*t));
        }
    }
    let n = selected.len() as f64;
    let mean_t = selected.iter().map(|(t, _)| t).sum::<f64>() / n;
    let mean_y = selected.iter().map(|(_, z)| z.ln()).sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    for (t, z) in &selected {
        let dt = t - mean_t;
        stt += dt * dt;
        sty += dt * (z.ln() - mean_y);
    }
    let slope = sty / stt;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (t, z) in &selected {
        let y = z.ln();
        let fit = mean_y + slope * (t - mean_t);
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot <= f64::MIN_POSITIVE {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(DecayFit {
        gamma_hat: -slope,
        r_squared,
        samples: selected.len(),
    })
}

/// Fit over a recorded run.
pub fn decay_fit(record: &TrajectoryRecord, window: (f64, f64)) -> Result<DecayFit, DynamicsError> {
    decay_fit_samples(&record.samples(), window)
}

/// Discrete decay rate γ̃ with τγ̃ = log(1 + τγ).
pub fn gamma_tilde(gamma: f64, tau: f64) -> Result<f64, DynamicsError> {
    if tau <= 0.0 || tau.is_nan() {
        return Err(DynamicsError::NonpositiveTau(tau));
    }
    let arg = 1.0 + tau * gamma;
    if arg <= 0.0 {
        return Err(DynamicsError::GammaTildeDomain(arg));
    }
    Ok(arg.ln() / tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn disc_1d(n: usize) -> Arc<Discretization> {
        Discretization::with_default_grid(1, n).unwrap()
    }

    fn params(nu: f64, tau: f64, t_end: f64) -> ModelParams {
        ModelParams {
            nu,
            tau,
            t_end,
            r_declared: None,
        }
    }

    #[test]
    fn model_params_validation() {
        assert!(params(0.01, 1e-3, 1.0).validate().is_ok());
        assert!(matches!(
            params(0.0, 1e-3, 1.0).validate(),
            Err(DynamicsError::NonpositiveNu(_))
        ));
        assert!(matches!(
            params(0.01, 0.0, 1.0).validate(),
            Err(DynamicsError::NonpositiveTau(_))
        ));
        assert!(matches!(
            params(0.01, 1.0, 0.0).validate(),
            Err(DynamicsError::EmptyHorizon { .. })
        ));
        assert_eq!(params(0.01, 1e-3, 1.0).num_steps(), 1000);
    }

    #[test]
    fn initial_tanh_profile_values() {
        let disc = Discretization::with_default_grid(1, 64).unwrap();
        let nu = 0.01;
        let field = initial_tanh(&disc, nu);
        // odd about x = 1/2: spatial mean vanishes
        assert!(field.mean().abs() < 1e-10);
        // value near the right boundary approaches tanh(1/√(8ν)) ≈ 0.9983
        let grid = field.to_grid();
        let last = grid[grid.len() - 1];
        let x_last = disc.grid_coords(disc.num_grid_points() - 1)[0];
        let exact = ((2.0 * x_last - 1.0) / (8.0 * nu).sqrt()).tanh();
        assert!((last - exact).abs() < 1e-4, "{last} vs {exact}");
        let boundary = (1.0f64 / (8.0 * nu).sqrt()).tanh();
        assert!((boundary - 0.9983).abs() < 1e-4);
        // odd symmetry: value at the grid midpoint pair straddling 1/2 is ±
        let q = disc.num_grid_points();
        assert!((grid[q / 2 - 1] + grid[q / 2]).abs() < 1e-10);
    }

    #[test]
    fn manufacture_forcing_trivial_references() {
        let disc = disc_1d(8);
        let zero = vec![SpectralField::zero(&disc); 4];
        let f = manufacture_forcing(&zero, 0.01, 0.1).unwrap();
        assert!(f.iter().all(|h| h.norm_l2() < 1e-14));

        let constant = vec![SpectralField::constant(&disc, 0.4); 4];
        let f = manufacture_forcing(&constant, 0.01, 0.1).unwrap();
        assert!(f.iter().all(|h| h.norm_l2() < 1e-13));

        assert!(matches!(
            manufacture_forcing(&zero[..1], 0.01, 0.1),
            Err(DynamicsError::TooFewTimeLevels(1))
        ));
    }

    #[test]
    fn manufacture_forcing_matches_hand_expansion() {
        // y_r = a cos(πx), time-independent:
        // h_r = (νπ⁴a + π²(3a³/4 − a)) cos πx + (9π²a³/4) cos 3πx
        let disc = disc_1d(8);
        let a = 0.6;
        let nu = 0.02;
        let y_r = SpectralField::mode(&disc, [1, 0], a / std::f64::consts::SQRT_2);
        let states = vec![y_r.clone(), y_r.clone()];
        let forcing = manufacture_forcing(&states, nu, 0.05).unwrap();
        let h = &forcing[0];
        let pi = std::f64::consts::PI;
        let c1_expected =
            (nu * pi.powi(4) * a + pi * pi * (0.75 * a * a * a - a)) / std::f64::consts::SQRT_2;
        let c3_expected = (9.0 * pi * pi * a * a * a / 4.0) / std::f64::consts::SQRT_2;
        assert!(
            (h.coeffs()[1] - c1_expected).abs() < 1e-10,
            "{}",
            h.coeffs()[1]
        );
        assert!(
            (h.coeffs()[3] - c3_expected).abs() < 1e-10,
            "{}",
            h.coeffs()[3]
        );
        for (k, c) in h.coeffs().iter().enumerate() {
            if k != 1 && k != 3 {
                assert!(c.abs() < 1e-10, "mode {k} unexpected: {c}");
            }
        }
    }

    #[test]
    fn step_fixed_point_at_origin() {
        let disc = disc_1d(6);
        let p = params(0.01, 1e-2, 1e-2);
        let fb = FeedbackOperator::pointwise(&disc, 1, 2.0).unwrap();
        let zero = SpectralField::zero(&disc);
        let (y, stats) = step(&zero, None, &zero, &fb, &p, &NewtonOptions::default()).unwrap();
        assert!(y.norm_l2() < 1e-14);
        assert_eq!(stats.iterations, 1);
    }

    #[test]
    fn step_constant_mode_closed_form() {
        // N = 2 with M = 1 keeps the dynamics in the constant mode:
        // y = (c₀ + τλ c_r)/(1 + τλ).
        let disc = Discretization::new(1, 2, 4).unwrap();
        let tau = 0.05;
        let lambda = 3.0;
        let p = params(0.01, tau, tau);
        let fb = FeedbackOperator::pointwise(&disc, 1, lambda).unwrap();
        let y_prev = SpectralField::constant(&disc, 0.7);
        let y_ref = SpectralField::constant(&disc, 0.2);
        let (y, _) = step(&y_prev, None, &y_ref, &fb, &p, &NewtonOptions::default()).unwrap();
        let expected = (0.7 + tau * lambda * 0.2) / (1.0 + tau * lambda);
        assert!((y.mean() - expected).abs() < 1e-11, "{}", y.mean());
        assert!(y.coeffs()[1].abs() < 1e-11);
    }

    #[test]
    fn newton_divergence_is_reported_with_step_index() {
        // starving Newton of iterations must surface as a divergence error,
        // annotated with the failing step by `simulate`
        let disc = disc_1d(8);
        let p = params(0.01, 0.5, 1.0);
        let fb = FeedbackOperator::pointwise(&disc, 2, 100.0).unwrap();
        let y0 = initial_tanh(&disc, p.nu);
        let reference = Reference::zero(&disc, p.num_steps());
        let options = NewtonOptions {
            max_iterations: 1,
            ..NewtonOptions::default()
        };
        match simulate(&y0, &reference, None, &fb, &p, None, &options) {
            Err(DynamicsError::NewtonDivergence { step: Some(1), .. }) => {}
            Err(other) => panic!("unexpected error: {other}"),
            Ok(_) => panic!("expected NewtonDivergence, but the run converged"),
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let disc = disc_1d(8);
        let p = params(0.05, 0.02, 0.02);
        let fb = FeedbackOperator::pointwise(&disc, 2, 4.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let zero = SpectralField::zero(&disc);
        for _ in 0..20 {
            let coeffs = DVector::from_fn(disc.num_modes(), |_, _| rng.random_range(-0.7..0.7));
            let y = SpectralField::from_coeffs(&disc, coeffs).unwrap();
            let jac = scheme_jacobian(&y, &fb, &p).unwrap();
            let n = disc.num_modes();
            let eps = 1e-6;
            let mut fd = DMatrix::zeros(n, n);
            for j in 0..n {
                let mut up = y.coeffs().clone();
                up[j] += eps;
                let mut dn = y.coeffs().clone();
                dn[j] -= eps;
                let yu = SpectralField::from_coeffs(&disc, up).unwrap();
                let yd = SpectralField::from_coeffs(&disc, dn).unwrap();
                let ru = scheme_residual(&yu, &zero, None, &zero, &fb, &p).unwrap();
                let rd = scheme_residual(&yd, &zero, None, &zero, &fb, &p).unwrap();
                fd.set_column(j, &((ru - rd) / (2.0 * eps)));
            }
            let rel = (&jac - &fd).norm() / jac.norm();
            assert!(rel <= 1e-6, "relative Jacobian error {rel}");
        }
    }

    #[test]
    fn dense_and_matrix_free_steps_agree() {
        let disc = Discretization::with_default_grid(2, 6).unwrap();
        let p = params(0.02, 5e-3, 5e-3);
        let fb = FeedbackOperator::pointwise(&disc, 2, 10.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        let coeffs = DVector::from_fn(disc.num_modes(), |_, _| rng.random_range(-0.5..0.5));
        let y0 = SpectralField::from_coeffs(&disc, coeffs).unwrap();
        let y_ref = SpectralField::zero(&disc);
        let dense_opts = NewtonOptions {
            solver: LinearSolver::Dense,
            ..NewtonOptions::default()
        };
        let mf_opts = NewtonOptions {
            solver: LinearSolver::MatrixFree,
            ..NewtonOptions::default()
        };
        let (yd, _) = step(&y0, None, &y_ref, &fb, &p, &dense_opts).unwrap();
        let (ym, _) = step(&y0, None, &y_ref, &fb, &p, &mf_opts).unwrap();
        let diff = yd.sub(&ym).unwrap().norm_l2();
        assert!(diff < 1e-9, "solver routes disagree by {diff}");
    }

    #[test]
    fn simulate_exact_tracking_fixed_point() {
        // y0 = y_r, h = h_r manufactured: z stays at solver tolerance.
        let disc = disc_1d(8);
        let tau = 1e-2;
        let steps = 50;
        let p = params(0.02, tau, tau * steps as f64);
        let fb = FeedbackOperator::pointwise(&disc, 2, 5.0).unwrap();
        // smooth time-varying reference
        let states: Vec<SpectralField> = (0..=steps)
            .map(|n| {
                let t = n as f64 * tau;
                let amp = 0.3 + 0.1 * (t * std::f64::consts::PI).sin();
                SpectralField::mode(&disc, [1, 0], amp)
            })
            .collect();
        let reference = Reference::from_states(states, p.nu, tau).unwrap();
        let h: Vec<SpectralField> = (1..=steps)
            .map(|n| reference.forcing_at(n).clone())
            .collect();
        let y0 = reference.state(0).clone();
        let (_, record) = simulate(
            &y0,
            &reference,
            Some(&h),
            &fb,
            &p,
            None,
            &NewtonOptions::default(),
        )
        .unwrap();
        for s in &record.steps {
            assert!(
                s.z_norm_sq.sqrt() <= 1e-9,
                "step {}: {}",
                s.step,
                s.z_norm_sq
            );
        }
    }

    #[test]
    fn simulate_conserves_mass_without_feedback() {
        let disc = disc_1d(8);
        let steps = 200;
        let tau = 1e-3;
        let p = params(0.01, tau, tau * steps as f64);
        let off = FeedbackOperator::pointwise(&disc, 0, 0.0).unwrap();
        let y0 = initial_tanh(&disc, p.nu)
            .add(&SpectralField::constant(&disc, 0.3))
            .unwrap();
        let reference = Reference::zero(&disc, steps);
        let (traj, _) = simulate(
            &y0,
            &reference,
            None,
            &off,
            &p,
            None,
            &NewtonOptions::default(),
        )
        .unwrap();
        let m0 = traj.states[0].mean();
        for s in &traj.states {
            assert!((s.mean() - m0).abs() <= 1e-10);
        }
    }

    #[test]
    fn simulate_validates_lengths() {
        let disc = disc_1d(4);
        let p = params(0.01, 1e-2, 5e-2);
        let off = FeedbackOperator::pointwise(&disc, 0, 0.0).unwrap();
        let y0 = SpectralField::zero(&disc);
        let reference = Reference::zero(&disc, 3);
        assert!(matches!(
            simulate(
                &y0,
                &reference,
                None,
                &off,
                &p,
                None,
                &NewtonOptions::default()
            ),
            Err(DynamicsError::ReferenceLengthMismatch {
                expected: 6,
                got: 4
            })
        ));
        let reference = Reference::zero(&disc, 5);
        let h = vec![SpectralField::zero(&disc); 2];
        assert!(matches!(
            simulate(
                &y0,
                &reference,
                Some(&h),
                &off,
                &p,
                None,
                &NewtonOptions::default()
            ),
            Err(DynamicsError::ForcingLengthMismatch {
                expected: 5,
                got: 2
            })
        ));
    }

    #[test]
    fn per_step_energy_inequality_holds_with_certificate() {
        // d=1, ν=1, M=2, λ=5: α_min = 2λ = 10 > C*(0,1) = 2.5, so γ = 7.5
        // certifies the decay; every recorded step must satisfy the inequality.
        let disc = disc_1d(8);
        let nu = 1.0;
        let tau = 1e-2;
        let steps = 60;
        let p = params(nu, tau, tau * steps as f64);
        let fb = FeedbackOperator::pointwise(&disc, 2, 5.0).unwrap();
        let cert = crate::gap::certify(&disc, nu, 0.0, &fb).unwrap();
        assert!(cert.gamma > 0.0, "test needs a certified regime");
        let y0 = initial_tanh(&disc, 0.05);
        let reference = Reference::zero(&disc, steps);
        let (_, record) = simulate(
            &y0,
            &reference,
            None,
            &fb,
            &p,
            Some(&cert),
            &NewtonOptions::default(),
        )
        .unwrap();
        assert_eq!(record.energy_violations, 0);
        assert_eq!(record.gamma_used, Some(cert.gamma));
        // cumulative discrete bound ‖zⁿ‖² ≤ e^{−γ̃ tⁿ} ‖z⁰‖² + tol
        let gt = gamma_tilde(cert.gamma, tau).unwrap();
        let tol = ENERGY_TOLERANCE_FACTOR * record.initial_z_norm_sq;
        for s in &record.steps {
            let bound = (-gt * s.time).exp() * record.initial_z_norm_sq + tol;
            assert!(
                s.z_norm_sq <= bound * (1.0 + 1e-12),
                "step {}: {} > {}",
                s.step,
                s.z_norm_sq,
                bound
            );
        }
    }

    #[test]
    fn implicit_euler_is_first_order() {
        // manufactured smooth solution y(t,x) = a(t) cos(πx) with the forcing
        // evaluated from the continuous equation at the right endpoint;
        // halving τ must reduce the final error at a fitted order near 1.
        let disc = disc_1d(8);
        let nu = 0.02;
        let pi = std::f64::consts::PI;
        let amp = |t: f64| 0.4 + 0.2 * (2.0 * t).sin();
        let amp_dot = |t: f64| 0.4 * (2.0 * t).cos();
        let exact = |t: f64| SpectralField::mode(&disc, [1, 0], amp(t) / std::f64::consts::SQRT_2);
        // h(t) = ∂_t y + νΔ²y − Δφ(y) for y = a(t)cos(πx), computed from the
        // trig expansion of the cubic (independent of the solver's nonlinearity
        // path, which is checked elsewhere):
        let forcing_at = |t: f64| {
            let a = amp(t);
            let c1 = (amp_dot(t) + nu * pi.powi(4) * a + pi * pi * (0.75 * a.powi(3) - a))
                / std::f64::consts::SQRT_2;
            let c3 = (9.0 * pi * pi * a.powi(3) / 4.0) / std::f64::consts::SQRT_2;
            let mut coeffs = DVector::zeros(disc.num_modes());
            coeffs[1] = c1;
            coeffs[3] = c3;
            SpectralField::from_coeffs(&disc, coeffs).unwrap()
        };
        let t_end = 0.5;
        let off = FeedbackOperator::pointwise(&disc, 0, 0.0).unwrap();
        let mut errors = Vec::new();
        for steps in [16usize, 32, 64] {
            let tau = t_end / steps as f64;
            let p = params(nu, tau, t_end);
            let reference = Reference::zero(&disc, steps);
            let h: Vec<SpectralField> = (1..=steps).map(|n| forcing_at(n as f64 * tau)).collect();
            let (traj, _) = simulate(
                &exact(0.0),
                &reference,
                Some(&h),
                &off,
                &p,
                None,
                &NewtonOptions::default(),
            )
            .unwrap();
            let err = traj.states[steps].sub(&exact(t_end)).unwrap().norm_l2();
            errors.push(err);
        }
        let order1 = (errors[0] / errors[1]).log2();
        let order2 = (errors[1] / errors[2]).log2();
        for order in [order1, order2] {
            assert!(
                (0.8..=1.2).contains(&order),
                "implicit Euler order fit {order} outside [0.8, 1.2] ({errors:?})"
            );
        }
    }

    #[test]
    fn decay_fit_recovers_synthetic_rates() {
        let samples: Vec<(f64, f64)> = (0..100)
            .map(|n| {
                let t = n as f64 * 0.01;
                (t, (-2.0 * t).exp())
            })
            .collect();
        let fit = decay_fit_samples(&samples, (0.0, 1.0)).unwrap();
        assert!((fit.gamma_hat - 2.0).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);

        let flat: Vec<(f64, f64)> = (0..50).map(|n| (n as f64 * 0.01, 0.5)).collect();
        let fit = decay_fit_samples(&flat, (0.0, 1.0)).unwrap();
        assert!(fit.gamma_hat.abs() < 1e-12);

        assert!(matches!(
            decay_fit_samples(&samples[..2], (0.0, 1.0)),
            Err(DynamicsError::WindowTooSmall(_))
        ));
        let degenerate = vec![(0.0, 1.0), (0.1, 0.0), (0.2, 1.0)];
        assert!(matches!(
            decay_fit_samples(&degenerate, (0.0, 1.0)),
            Err(DynamicsError::NonpositiveDecaySample(_))
        ));
    }

    #[test]
    fn gamma_tilde_values() {
        assert_eq!(gamma_tilde(0.0, 0.1).unwrap(), 0.0);
        let g = gamma_tilde(5.0, 1e-8).unwrap();
        assert!((g - 5.0).abs() < 5.0 * 1e-6);
        let g = gamma_tilde(10.0, 0.1).unwrap();
        assert!((g - 2.0f64.ln() / 0.1).abs() < 1e-12);
        assert!(matches!(
            gamma_tilde(-20.0, 0.1),
            Err(DynamicsError::GammaTildeDomain(_))
        ));
    }
}
