//! Newton solver for one implicit Euler step of the controlled system.
//!
//! The coefficient-space residual of the scheme is
//! G(c) = (c − c_prev)/τ + ν diag(μ²) c + diag(μ) P_φ(c)
//!        + λ B W Bᵀ (c − c_ref) − h,
//! where P_φ(c) are the coefficients of the projected nonlinearity φ(y).
//! Its analytic Jacobian is
//! J(c) = (1/τ) I + ν diag(μ²) + diag(μ) J_φ(c) + λ B W Bᵀ,
//! with J_φ = analysis ∘ (pointwise multiply by 3y² − 1) ∘ synthesis.
//!
//! The linear systems are solved either densely (LU) or matrix-free with a
//! diagonally preconditioned GMRES; both routes use the same analytic
//! Jacobian and agree to solver tolerance. The matrix-free route exists
//! because a dense factorization per Newton iterate is an order of magnitude
//! too slow at the default 2-D resolution.

use super::{DynamicsError, NewtonOptions, NewtonStats};
use crate::feedback::FeedbackOperator;
use crate::linalg::gmres;
use crate::spectral::Discretization;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Unknowns above this count switch the `Auto` solver to matrix-free GMRES.
pub(crate) const DENSE_SOLVE_LIMIT: usize = 512;

pub(crate) struct StepProblem<'a> {
    pub disc: &'a Arc<Discretization>,
    pub nu: f64,
    pub tau: f64,
    pub feedback: &'a FeedbackOperator,
    pub c_prev: &'a DVector<f64>,
    pub c_ref: &'a DVector<f64>,
    pub forcing: Option<&'a DVector<f64>>,
}

impl StepProblem<'_> {
    pub(crate) fn residual(&self, c: &DVector<f64>) -> DVector<f64> {
        let grid = self.disc.synthesize(c);
        let phi = self.disc.analyze(&grid.map(|y| y * y * y - y));
        let mut r = self.feedback.apply_coeffs(&(c - self.c_ref));
        let mu = self.disc.mu();
        let inv_tau = 1.0 / self.tau;
        for k in 0..c.len() {
            r[k] +=
                (c[k] - self.c_prev[k]) * inv_tau + self.nu * mu[k] * mu[k] * c[k] + mu[k] * phi[k];
            if let Some(h) = self.forcing {
                r[k] -= h[k];
            }
        }
        r
    }

    /// φ′(y) = 3y² − 1 on the collocation grid for the current iterate.
    pub(crate) fn phi_prime_grid(&self, c: &DVector<f64>) -> DVector<f64> {
        self.disc.synthesize(c).map(|y| 3.0 * y * y - 1.0)
    }

    /// J(c) v without forming the matrix.
    pub(crate) fn jacobian_matvec(
        &self,
        phi_prime: &DVector<f64>,
        v: &DVector<f64>,
    ) -> DVector<f64> {
        let gv = self.disc.synthesize(v);
        let jphi = self.disc.analyze(&gv.component_mul(phi_prime));
        let mut out = self.feedback.apply_coeffs(v);
        let mu = self.disc.mu();
        let inv_tau = 1.0 / self.tau;
        for k in 0..v.len() {
            out[k] += v[k] * inv_tau + self.nu * mu[k] * mu[k] * v[k] + mu[k] * jphi[k];
        }
        out
    }

    /// Dense J(c): exact same operator as `jacobian_matvec`.
    pub(crate) fn dense_jacobian(&self, phi_prime: &DVector<f64>) -> DMatrix<f64> {
        let disc = self.disc;
        let n1 = disc.modes_per_axis();
        let q1 = disc.grid_per_axis();
        let s = disc.synthesis_matrix();
        let n = disc.num_modes();

        // J_φ = w Sᵀ diag(φ′) S with the tensor structure exploited in 2-D.
        let jphi = if disc.dim() == 1 {
            let scaled = DMatrix::from_fn(q1, n1, |q, k| phi_prime[q] * s[(q, k)]);
            s.transpose() * scaled / q1 as f64
        } else {
            let pair = DMatrix::from_fn(q1, n1 * n1, |q, kl| s[(q, kl / n1)] * s[(q, kl % n1)]);
            let m = DMatrix::from_fn(q1, q1, |a, b| phi_prime[a * q1 + b]);
            let t = &m * &pair; // (q1 × n1²)
            let u = pair.transpose() * t; // (n1² × n1²), indexed [(k1,l1),(k2,l2)]
            let w = 1.0 / (q1 * q1) as f64;
            DMatrix::from_fn(n, n, |row, col| {
                let (k1, k2) = (row / n1, row % n1);
                let (l1, l2) = (col / n1, col % n1);
                w * u[(k1 * n1 + l1, k2 * n1 + l2)]
            })
        };

        let mut j = self.feedback.dense_gain();
        let mu = disc.mu();
        let inv_tau = 1.0 / self.tau;
        for r in 0..n {
            for c in 0..n {
                j[(r, c)] += mu[r] * jphi[(r, c)];
            }
            j[(r, r)] += inv_tau + self.nu * mu[r] * mu[r];
        }
        j
    }

    /// Diagonal preconditioner 1/τ + ν μ² + μ·mean(φ′), clamped positive.
    fn preconditioner(&self, phi_prime: &DVector<f64>) -> DVector<f64> {
        let mean = phi_prime.mean();
        let inv_tau = 1.0 / self.tau;
        let floor = 0.5 * inv_tau;
        DVector::from_fn(self.disc.num_modes(), |k, _| {
            let mu = self.disc.mu()[k];
            (inv_tau + self.nu * mu * mu + mu * mean).max(floor)
        })
    }
}

pub(crate) fn newton_solve(
    problem: &StepProblem,
    initial: DVector<f64>,
    options: &NewtonOptions,
) -> Result<(DVector<f64>, NewtonStats), DynamicsError> {
    let n = initial.len();
    let use_dense = match options.solver {
        super::LinearSolver::Dense => true,
        super::LinearSolver::MatrixFree => false,
        super::LinearSolver::Auto => n <= DENSE_SOLVE_LIMIT,
    };
    let mut c = initial;
    let mut residual = problem.residual(&c);
    let mut updates = 0usize;
    let mut halvings = 0usize;

    for _ in 0..options.max_iterations {
        let g_norm = residual.norm();
        let tol = options.tolerance_factor * (1.0 + c.norm() / problem.tau);
        if g_norm <= tol {
            return Ok((
                c,
                NewtonStats {
                    iterations: updates.max(1),
                    residual_norm: g_norm,
                    damping_halvings: halvings,
                },
            ));
        }

        let phi_prime = problem.phi_prime_grid(&c);
        let delta = if use_dense {
            let jac = problem.dense_jacobian(&phi_prime);
            jac.lu()
                .solve(&(-&residual))
                .ok_or(DynamicsError::LinearSolveStalled {
                    iterations: 0,
                    residual: g_norm,
                })?
        } else {
            let precond = problem.preconditioner(&phi_prime);
            let rhs = (-&residual).component_div(&precond);
            let apply = |v: &DVector<f64>| {
                problem
                    .jacobian_matvec(&phi_prime, v)
                    .component_div(&precond)
            };
            let max_inner = n.min(400);
            // purely relative inner tolerance: an absolute floor in the
            // preconditioned norm would translate to ‖M‖·floor on the true
            // residual and stall the outer iteration near convergence
            match gmres(apply, &rhs, 1e-12, 0.0, max_inner) {
                Ok((x, _)) => x,
                Err(f) => {
                    return Err(DynamicsError::LinearSolveStalled {
                        iterations: f.iterations,
                        residual: f.residual,
                    })
                }
            }
        };

        // damped update: halve until the residual norm decreases
        let mut accepted = false;
        let mut scale = 1.0;
        for step_halvings in 0..=options.max_damping_halvings {
            let trial = &c + &delta * scale;
            let trial_residual = problem.residual(&trial);
            if trial_residual.norm() < g_norm {
                c = trial;
                residual = trial_residual;
                halvings += step_halvings;
                updates += 1;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(DynamicsError::NewtonDivergence {
                step: None,
                iterations: updates,
                residual: g_norm,
            });
        }
    }

    let g_norm = residual.norm();
    let tol = options.tolerance_factor * (1.0 + c.norm() / problem.tau);
    if g_norm <= tol {
        return Ok((
            c,
            NewtonStats {
                iterations: updates.max(1),
                residual_norm: g_norm,
                damping_halvings: halvings,
            },
        ));
    }
    Err(DynamicsError::NewtonDivergence {
        step: None,
        iterations: updates,
        residual: g_norm,
    })
}
