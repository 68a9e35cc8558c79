//! Function representation on the box Ω = (0,1)^d (d = 1, 2) in the
//! orthonormal cosine eigenbasis of −Δ with homogeneous Neumann conditions.
//!
//! The basis functions are tensor products
//! φ_k(x) = ∏_i c(k_i) cos(k_i π x_i) with c(0) = 1 and c(k) = √2 for k ≥ 1,
//! so that Δφ_k = −μ_k φ_k with μ_k = π²(k_1² + … + k_d²). Every φ_k satisfies
//! ∂_n φ_k = ∂_n Δφ_k = 0 on ∂Ω, so the truncated space is a conforming
//! subspace of H²_n(Ω) and both −Δ and Δ² act diagonally on coefficients.
//!
//! Collocation uses the midpoint grid x_q = (q + 1/2)/Q per axis. On that grid
//! the basis is discretely orthonormal for k < Q, which makes analysis
//! (a type-II discrete cosine transform) the exact L² projection for fields in
//! the truncated space. Transforms are evaluated as dense per-axis
//! matrix products; no FFT is needed at the problem sizes of interest.

use nalgebra::{DMatrix, DVector};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("spatial dimension must be 1 or 2, got {0}")]
    InvalidDimension(usize),
    #[error("modes_per_axis must be at least 1")]
    NoModes,
    #[error("grid_per_axis {grid} too small for dealiased cubic evaluation of {modes} modes (need at least {needed})")]
    GridTooSmall {
        grid: usize,
        modes: usize,
        needed: usize,
    },
    #[error("expected {expected} grid values, got {got}")]
    GridSizeMismatch { expected: usize, got: usize },
    #[error("coefficient vector has length {got}, discretization retains {expected} modes")]
    CoefficientSizeMismatch { expected: usize, got: usize },
    #[error("fields live on different discretizations")]
    DiscretizationMismatch,
    #[error("interpolation requires at least one cell per axis")]
    NoCells,
}

/// Basis truncation, collocation grid and precomputed Laplacian symbols.
///
/// `grid_per_axis` must satisfy Q ≥ ⌈3N/2⌉ so that the cubic nonlinearity can
/// be evaluated without aliasing the dominant modes; the default constructor
/// uses Q = 2N, for which the projected cubic is exact on the whole truncated
/// space (products reach mode 3(N−1) < 2Q − N).
pub struct Discretization {
    dim: usize,
    modes_per_axis: usize,
    grid_per_axis: usize,
    /// Laplacian symbol per flat mode index: Δφ_k = −μ_k φ_k.
    mu: Vec<f64>,
    /// Q×N synthesis matrix, entry (q, k) = c(k) cos(k π x_q).
    synth: DMatrix<f64>,
    /// Q×N first-derivative synthesis, entry (q, k) = −c(k) kπ sin(k π x_q).
    grad_synth: DMatrix<f64>,
}

impl PartialEq for Discretization {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.modes_per_axis == other.modes_per_axis
            && self.grid_per_axis == other.grid_per_axis
    }
}

/// Orthonormal 1-D basis value c(k) cos(kπx).
fn basis_1d(k: usize, x: f64) -> f64 {
    let scale = if k == 0 {
        1.0
    } else {
        std::f64::consts::SQRT_2
    };
    scale * (k as f64 * std::f64::consts::PI * x).cos()
}

/// Midpoint lattice evaluation matrix: (points × modes), row q holds the
/// basis values at x_q = (q + 1/2)/points.
fn midpoint_synthesis(points: usize, modes: usize) -> DMatrix<f64> {
    DMatrix::from_fn(points, modes, |q, k| {
        basis_1d(k, (q as f64 + 0.5) / points as f64)
    })
}

impl Discretization {
    pub fn new(
        dim: usize,
        modes_per_axis: usize,
        grid_per_axis: usize,
    ) -> Result<Arc<Self>, SpectralError> {
        if dim != 1 && dim != 2 {
            return Err(SpectralError::InvalidDimension(dim));
        }
        if modes_per_axis == 0 {
            return Err(SpectralError::NoModes);
        }
        let needed = (3 * modes_per_axis).div_ceil(2);
        if grid_per_axis < needed {
            return Err(SpectralError::GridTooSmall {
                grid: grid_per_axis,
                modes: modes_per_axis,
                needed,
            });
        }
        let n = modes_per_axis;
        let q = grid_per_axis;
        let num_modes = n.pow(dim as u32);
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mut mu = Vec::with_capacity(num_modes);
        if dim == 1 {
            for k in 0..n {
                mu.push(pi2 * (k * k) as f64);
            }
        } else {
            for k1 in 0..n {
                for k2 in 0..n {
                    mu.push(pi2 * (k1 * k1 + k2 * k2) as f64);
                }
            }
        }
        let synth = midpoint_synthesis(q, n);
        let grad_synth = DMatrix::from_fn(q, n, |row, k| {
            let x = (row as f64 + 0.5) / q as f64;
            let scale = if k == 0 {
                1.0
            } else {
                std::f64::consts::SQRT_2
            };
            let kpi = k as f64 * std::f64::consts::PI;
            -scale * kpi * (kpi * x).sin()
        });
        Ok(Arc::new(Self {
            dim,
            modes_per_axis,
            grid_per_axis,
            mu,
            synth,
            grad_synth,
        }))
    }

    /// Q = 2N: alias-free cubic evaluation for every retained mode.
    pub fn with_default_grid(
        dim: usize,
        modes_per_axis: usize,
    ) -> Result<Arc<Self>, SpectralError> {
        Self::new(dim, modes_per_axis, 2 * modes_per_axis)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes_per_axis(&self) -> usize {
        self.modes_per_axis
    }

    pub fn grid_per_axis(&self) -> usize {
        self.grid_per_axis
    }

    /// Total number of retained modes N^d.
    pub fn num_modes(&self) -> usize {
        self.mu.len()
    }

    /// Total number of collocation points Q^d.
    pub fn num_grid_points(&self) -> usize {
        self.grid_per_axis.pow(self.dim as u32)
    }

    /// Laplacian symbols μ_k, flat (row-major) mode order.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Flat index of the mode with per-axis indices `k` (second entry ignored
    /// for d = 1).
    pub fn mode_index(&self, k: [usize; 2]) -> usize {
        debug_assert!(k[0] < self.modes_per_axis);
        if self.dim == 1 {
            k[0]
        } else {
            debug_assert!(k[1] < self.modes_per_axis);
            k[0] * self.modes_per_axis + k[1]
        }
    }

    /// Physical coordinates of the flat grid index (second entry 0 for d = 1).
    pub fn grid_coords(&self, q: usize) -> [f64; 2] {
        let h = 1.0 / self.grid_per_axis as f64;
        if self.dim == 1 {
            [(q as f64 + 0.5) * h, 0.0]
        } else {
            let q1 = q / self.grid_per_axis;
            let q2 = q % self.grid_per_axis;
            [(q1 as f64 + 0.5) * h, (q2 as f64 + 0.5) * h]
        }
    }

    /// Value of the orthonormal basis function with flat index `k` at a
    /// point (second coordinate ignored for d = 1).
    pub fn basis_value(&self, k: usize, x: [f64; 2]) -> f64 {
        if self.dim == 1 {
            basis_1d(k, x[0])
        } else {
            basis_1d(k / self.modes_per_axis, x[0]) * basis_1d(k % self.modes_per_axis, x[1])
        }
    }

    /// Basis values at the midpoint lattice with `points` cells per axis,
    /// as an (points^d × N^d) matrix. Used for pointwise measurements and
    /// piecewise-constant interpolation.
    pub fn lattice_values(&self, points: usize) -> DMatrix<f64> {
        let p1 = midpoint_synthesis(points, self.modes_per_axis);
        if self.dim == 1 {
            return p1;
        }
        let n = self.modes_per_axis;
        let m = points;
        DMatrix::from_fn(m * m, n * n, |row, col| {
            let (j1, j2) = (row / m, row % m);
            let (k1, k2) = (col / n, col % n);
            p1[(j1, k1)] * p1[(j2, k2)]
        })
    }

    /// Coefficients → values on the Q^d midpoint grid (row-major).
    pub fn synthesize(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        let n = self.modes_per_axis;
        let q = self.grid_per_axis;
        if self.dim == 1 {
            &self.synth * coeffs
        } else {
            let c = DMatrix::from_fn(n, n, |k1, k2| coeffs[k1 * n + k2]);
            let v = &self.synth * c * self.synth.transpose();
            DVector::from_fn(q * q, |i, _| v[(i / q, i % q)])
        }
    }

    /// Values on the Q^d midpoint grid → coefficients of the L² projection
    /// onto the truncated basis (midpoint quadrature, weight Q^{−d}).
    pub fn analyze(&self, values: &DVector<f64>) -> DVector<f64> {
        let n = self.modes_per_axis;
        let q = self.grid_per_axis;
        if self.dim == 1 {
            self.synth.transpose() * values / q as f64
        } else {
            let v = DMatrix::from_fn(q, q, |q1, q2| values[q1 * q + q2]);
            let c = self.synth.transpose() * v * &self.synth / (q * q) as f64;
            DVector::from_fn(n * n, |i, _| c[(i / n, i % n)])
        }
    }

    pub(crate) fn synthesis_matrix(&self) -> &DMatrix<f64> {
        &self.synth
    }

    pub(crate) fn gradient_matrix(&self) -> &DMatrix<f64> {
        &self.grad_synth
    }
}

pub(crate) fn same_disc(a: &Arc<Discretization>, b: &Arc<Discretization>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// A function on Ω stored as coefficients in the orthonormal cosine basis.
///
/// Values are immutable; all operations return new fields. By Parseval,
/// ‖f‖²_{L²} = Σ_k c_k² and ‖Δf‖²_{L²} = Σ_k μ_k² c_k².
#[derive(Clone)]
pub struct SpectralField {
    disc: Arc<Discretization>,
    coeffs: DVector<f64>,
}

impl SpectralField {
    pub fn zero(disc: &Arc<Discretization>) -> Self {
        Self {
            disc: Arc::clone(disc),
            coeffs: DVector::zeros(disc.num_modes()),
        }
    }

    /// The constant function with value `a` (only the k = 0 coefficient set).
    pub fn constant(disc: &Arc<Discretization>, a: f64) -> Self {
        let mut coeffs = DVector::zeros(disc.num_modes());
        coeffs[0] = a;
        Self {
            disc: Arc::clone(disc),
            coeffs,
        }
    }

    pub fn from_coeffs(
        disc: &Arc<Discretization>,
        coeffs: DVector<f64>,
    ) -> Result<Self, SpectralError> {
        if coeffs.len() != disc.num_modes() {
            return Err(SpectralError::CoefficientSizeMismatch {
                expected: disc.num_modes(),
                got: coeffs.len(),
            });
        }
        Ok(Self {
            disc: Arc::clone(disc),
            coeffs,
        })
    }

    /// Single basis function φ_k scaled by `amplitude`.
    pub fn mode(disc: &Arc<Discretization>, k: [usize; 2], amplitude: f64) -> Self {
        let mut coeffs = DVector::zeros(disc.num_modes());
        coeffs[disc.mode_index(k)] = amplitude;
        Self {
            disc: Arc::clone(disc),
            coeffs,
        }
    }

    pub fn disc(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    /// L² norm via Parseval.
    pub fn norm_l2(&self) -> f64 {
        self.coeffs.norm()
    }

    /// ‖Δf‖_{L²} = (Σ μ_k² c_k²)^{1/2}.
    pub fn laplacian_norm_l2(&self) -> f64 {
        self.coeffs
            .iter()
            .zip(self.disc.mu())
            .map(|(c, mu)| (c * mu) * (c * mu))
            .sum::<f64>()
            .sqrt()
    }

    /// Spatial mean ∫_Ω f dx (the coefficient of the constant mode).
    pub fn mean(&self) -> f64 {
        self.coeffs[0]
    }

    /// L² inner product ⟨f, g⟩.
    pub fn inner(&self, other: &Self) -> f64 {
        self.coeffs.dot(&other.coeffs)
    }

    /// Evaluate on the Q^d midpoint grid (row-major; exact for fields in the
    /// truncated basis).
    pub fn to_grid(&self) -> DVector<f64> {
        self.disc.synthesize(&self.coeffs)
    }

    /// L² projection of midpoint-grid samples onto the truncated basis.
    /// Round-trips `to_grid` exactly (up to rounding) since Q ≥ N.
    pub fn from_grid(
        disc: &Arc<Discretization>,
        values: &DVector<f64>,
    ) -> Result<Self, SpectralError> {
        if values.len() != disc.num_grid_points() {
            return Err(SpectralError::GridSizeMismatch {
                expected: disc.num_grid_points(),
                got: values.len(),
            });
        }
        Ok(Self {
            disc: Arc::clone(disc),
            coeffs: disc.analyze(values),
        })
    }

    /// Projection of φ(f) = f³ − f onto the truncated basis, evaluated
    /// pointwise on the collocation grid. With the default grid Q = 2N the
    /// projection carries no aliasing error for any truncated field.
    pub fn apply_phi(&self) -> Self {
        let grid = self.to_grid();
        let cubed = grid.map(|y| y * y * y - y);
        Self {
            disc: Arc::clone(&self.disc),
            coeffs: self.disc.analyze(&cubed),
        }
    }

    /// Coefficient-wise multiply by −μ_k.
    pub fn laplacian(&self) -> Self {
        let coeffs = DVector::from_fn(self.coeffs.len(), |k, _| {
            -self.disc.mu()[k] * self.coeffs[k]
        });
        Self {
            disc: Arc::clone(&self.disc),
            coeffs,
        }
    }

    /// Coefficient-wise multiply by μ_k².
    pub fn bilaplacian(&self) -> Self {
        let coeffs = DVector::from_fn(self.coeffs.len(), |k, _| {
            let mu = self.disc.mu()[k];
            mu * mu * self.coeffs[k]
        });
        Self {
            disc: Arc::clone(&self.disc),
            coeffs,
        }
    }

    /// Piecewise-constant surrogate: point values at the M^d cell centers
    /// ξ_j = (j − 1/2)/M, together with the quadrature L² error
    /// ‖f − I⁰_H f‖_{L²} of the induced interpolant.
    pub fn interpolate_pw(
        &self,
        cells_per_axis: usize,
    ) -> Result<PiecewiseInterpolant, SpectralError> {
        if cells_per_axis == 0 {
            return Err(SpectralError::NoCells);
        }
        let lattice = self.disc.lattice_values(cells_per_axis);
        let values = lattice * &self.coeffs;
        let grid = self.to_grid();
        let q = self.disc.grid_per_axis();
        let m = cells_per_axis;
        let cell_of = |x: f64| ((x * m as f64) as usize).min(m - 1);
        let mut err_sq = 0.0;
        for (idx, g) in grid.iter().enumerate() {
            let xy = self.disc.grid_coords(idx);
            let cell = if self.disc.dim() == 1 {
                cell_of(xy[0])
            } else {
                cell_of(xy[0]) * m + cell_of(xy[1])
            };
            let d = g - values[cell];
            err_sq += d * d;
        }
        err_sq /= q.pow(self.disc.dim() as u32) as f64;
        Ok(PiecewiseInterpolant {
            cells_per_axis,
            values: values.iter().copied().collect(),
            l2_error: err_sq.sqrt(),
        })
    }

    /// Grid sup norms (max |f|, max |∇f|) with the gradient evaluated
    /// spectrally. Used to measure ‖·‖_{W^{1,∞}} of reference trajectories.
    pub fn sup_norms(&self) -> (f64, f64) {
        if self.coeffs.iter().all(|c| *c == 0.0) {
            return (0.0, 0.0);
        }
        let disc = &self.disc;
        let n = disc.modes_per_axis();
        let s = disc.synthesis_matrix();
        let d = disc.gradient_matrix();
        if disc.dim() == 1 {
            let vals = s * &self.coeffs;
            let grads = d * &self.coeffs;
            let vmax = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let gmax = grads.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            (vmax, gmax)
        } else {
            let c = DMatrix::from_fn(n, n, |k1, k2| self.coeffs[k1 * n + k2]);
            let vals = s * &c * s.transpose();
            let gx = d * &c * s.transpose();
            let gy = s * &c * d.transpose();
            let mut vmax = 0.0f64;
            let mut gmax = 0.0f64;
            for i in 0..vals.nrows() {
                for j in 0..vals.ncols() {
                    vmax = vmax.max(vals[(i, j)].abs());
                    gmax = gmax.max(gx[(i, j)].hypot(gy[(i, j)]));
                }
            }
            (vmax, gmax)
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            disc: Arc::clone(&self.disc),
            coeffs: &self.coeffs * s,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, SpectralError> {
        if !same_disc(&self.disc, &other.disc) {
            return Err(SpectralError::DiscretizationMismatch);
        }
        Ok(Self {
            disc: Arc::clone(&self.disc),
            coeffs: &self.coeffs + &other.coeffs,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SpectralError> {
        if !same_disc(&self.disc, &other.disc) {
            return Err(SpectralError::DiscretizationMismatch);
        }
        Ok(Self {
            disc: Arc::clone(&self.disc),
            coeffs: &self.coeffs - &other.coeffs,
        })
    }
}

/// Cell-center values of the piecewise-constant interpolant I⁰_H f and its
/// quadrature L² distance to f.
pub struct PiecewiseInterpolant {
    pub cells_per_axis: usize,
    /// Row-major over the M^d cell centers.
    pub values: Vec<f64>,
    pub l2_error: f64,
}
