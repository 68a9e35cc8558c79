//! Finite-dimensional static output feedback operators.
//!
//! All operators have the low-rank symmetric form F z = λ Σ_T |T| ⟨Φ_T, z⟩ Φ_T
//! over the uniform partition of Ω into M^d cells T with centers
//! ξ_j = (j − 1/2)/M and volume |T| = M^{−d}. In coefficients the action is
//! c ↦ λ B W Bᵀ c with the measurement matrix B[k][T] = ⟨Φ_T, φ_k⟩ and a
//! symmetric positive (semi-)definite weight W, so ⟨Fz, z⟩ ≥ 0 and
//! rank(BWBᵀ) ≤ M^d by construction.

use crate::spectral::{same_disc, Discretization, SpectralField};
use nalgebra::{DMatrix, DVector};
use std::fmt::Write as _;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error("feedback gain must be nonnegative, got {0}")]
    NegativeGain(f64),
    #[error("omega_fraction must lie in (0, 1], got {0}")]
    InvalidOmegaFraction(f64),
    #[error("weight vector has length {got}, expected one entry per cell ({expected})")]
    WeightSizeMismatch { expected: usize, got: usize },
    #[error("weights must be positive and finite, entry {index} is {value}")]
    NonpositiveWeight { index: usize, value: f64 },
    #[error("nonlocal weight matrix must be {expected}×{expected}, got {rows}×{cols}")]
    WeightShapeMismatch {
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("nonlocal weight matrix is not symmetric (|β − βᵀ| up to {0:.3e})")]
    NonSymmetricWeights(f64),
    #[error("nonlocal weight matrix must have positive eigenvalues, smallest is {0:.6e}")]
    IndefiniteWeights(f64),
    #[error("actuator {index} at ({}, {}) lies outside the open domain", location[0], location[1])]
    LocationOutsideDomain { index: usize, location: [f64; 2] },
    #[error("field and feedback operator live on different discretizations")]
    DiscretizationMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackKind {
    PointwiseDelta,
    CellAverage,
    WeightedPointwise,
    NonlocalPointwise,
}

impl FeedbackKind {
    pub fn label(&self) -> &'static str {
        match self {
            FeedbackKind::PointwiseDelta => "pointwise_delta",
            FeedbackKind::CellAverage => "cell_average",
            FeedbackKind::WeightedPointwise => "weighted_pointwise",
            FeedbackKind::NonlocalPointwise => "nonlocal_pointwise",
        }
    }
}

/// Low-rank symmetric PSD feedback operator acting on spectral fields.
///
/// `actuators_per_axis` = 0 gives the zero operator F ≡ 0.
pub struct FeedbackOperator {
    disc: Arc<Discretization>,
    kind: FeedbackKind,
    actuators_per_axis: usize,
    lambda: f64,
    omega_fraction: Option<f64>,
    /// N^d × M^d measurement matrix.
    measurement: DMatrix<f64>,
    /// M^d × M^d symmetric PSD weight matrix.
    weight: DMatrix<f64>,
}

impl FeedbackOperator {
    /// Delta actuators at the cell centers:
    /// ⟨Fz, v⟩ = λ M^{−d} Σ_j z(ξ_j) v(ξ_j).
    pub fn pointwise(
        disc: &Arc<Discretization>,
        actuators_per_axis: usize,
        lambda: f64,
    ) -> Result<Self, FeedbackError> {
        check_gain(lambda)?;
        let (b, m) = pointwise_measurement(disc, actuators_per_axis);
        let cell_volume = volume_per_cell(disc, actuators_per_axis);
        Ok(Self {
            disc: Arc::clone(disc),
            kind: FeedbackKind::PointwiseDelta,
            actuators_per_axis,
            lambda,
            omega_fraction: None,
            measurement: b,
            weight: DMatrix::identity(m, m) * cell_volume,
        })
    }

    /// Delta actuators at arbitrary locations inside Ω with uniform weight
    /// 1/(number of points). On the midpoint lattice this coincides with
    /// [`FeedbackOperator::pointwise`]; off-lattice placements carry no
    /// guarantees beyond symmetry and positive semi-definiteness.
    pub fn pointwise_at(
        disc: &Arc<Discretization>,
        locations: &[[f64; 2]],
        lambda: f64,
    ) -> Result<Self, FeedbackError> {
        check_gain(lambda)?;
        for (index, x) in locations.iter().enumerate() {
            let inside =
                x[0] > 0.0 && x[0] < 1.0 && (disc.dim() == 1 || (x[1] > 0.0 && x[1] < 1.0));
            if !inside {
                return Err(FeedbackError::LocationOutsideDomain {
                    index,
                    location: *x,
                });
            }
        }
        let n = disc.num_modes();
        let m = locations.len();
        let b = DMatrix::from_fn(n, m, |row, col| disc.basis_value(row, locations[col]));
        let volume = if m == 0 { 0.0 } else { 1.0 / m as f64 };
        Ok(Self {
            disc: Arc::clone(disc),
            kind: FeedbackKind::PointwiseDelta,
            actuators_per_axis: 0,
            lambda,
            omega_fraction: None,
            measurement: b,
            weight: DMatrix::identity(m, m) * volume,
        })
    }

    /// Indicator actuators Φ_T = χ_{ω_T}/|ω_T| over centered sub-cells ω_T of
    /// side `omega_fraction`·H: ⟨Fz, v⟩ = λ Σ_T |T| z̄(x_T) v̄(x_T).
    pub fn cell_average(
        disc: &Arc<Discretization>,
        actuators_per_axis: usize,
        lambda: f64,
        omega_fraction: f64,
    ) -> Result<Self, FeedbackError> {
        check_gain(lambda)?;
        if !(omega_fraction > 0.0 && omega_fraction <= 1.0) {
            return Err(FeedbackError::InvalidOmegaFraction(omega_fraction));
        }
        let b = average_measurement(disc, actuators_per_axis, omega_fraction);
        let m = b.ncols();
        let cell_volume = volume_per_cell(disc, actuators_per_axis);
        Ok(Self {
            disc: Arc::clone(disc),
            kind: FeedbackKind::CellAverage,
            actuators_per_axis,
            lambda,
            omega_fraction: Some(omega_fraction),
            measurement: b,
            weight: DMatrix::identity(m, m) * cell_volume,
        })
    }

    /// Pointwise actuators with per-cell weights β_T > 0:
    /// ⟨Fz, v⟩ = λ Σ_T |T| β_T z(x_T) v(x_T).
    pub fn weighted(
        disc: &Arc<Discretization>,
        actuators_per_axis: usize,
        lambda: f64,
        beta: &[f64],
    ) -> Result<Self, FeedbackError> {
        check_gain(lambda)?;
        let (b, m) = pointwise_measurement(disc, actuators_per_axis);
        if beta.len() != m {
            return Err(FeedbackError::WeightSizeMismatch {
                expected: m,
                got: beta.len(),
            });
        }
        for (index, &value) in beta.iter().enumerate() {
            if value <= 0.0 || !value.is_finite() {
                return Err(FeedbackError::NonpositiveWeight { index, value });
            }
        }
        let cell_volume = volume_per_cell(disc, actuators_per_axis);
        let weight = DMatrix::from_fn(
            m,
            m,
            |i, j| {
                if i == j {
                    cell_volume * beta[i]
                } else {
                    0.0
                }
            },
        );
        Ok(Self {
            disc: Arc::clone(disc),
            kind: FeedbackKind::WeightedPointwise,
            actuators_per_axis,
            lambda,
            omega_fraction: None,
            measurement: b,
            weight,
        })
    }

    /// Pointwise actuators with nonlocal cell coupling:
    /// ⟨Fz, v⟩ = λ Σ_{T,T′} |T||T′| β_{T,T′} z(x_T) v(x_{T′}).
    /// β must be symmetric with strictly positive eigenvalues.
    pub fn nonlocal(
        disc: &Arc<Discretization>,
        actuators_per_axis: usize,
        lambda: f64,
        beta: &DMatrix<f64>,
    ) -> Result<Self, FeedbackError> {
        check_gain(lambda)?;
        let (b, m) = pointwise_measurement(disc, actuators_per_axis);
        if beta.nrows() != m || beta.ncols() != m {
            return Err(FeedbackError::WeightShapeMismatch {
                expected: m,
                rows: beta.nrows(),
                cols: beta.ncols(),
            });
        }
        let scale = beta.amax().max(1.0);
        let asym = (beta - beta.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(FeedbackError::NonSymmetricWeights(asym));
        }
        if m > 0 {
            let eigs = beta.clone().symmetric_eigenvalues();
            let min_eig = eigs.min();
            if min_eig <= 0.0 {
                return Err(FeedbackError::IndefiniteWeights(min_eig));
            }
        }
        let cell_volume = volume_per_cell(disc, actuators_per_axis);
        Ok(Self {
            disc: Arc::clone(disc),
            kind: FeedbackKind::NonlocalPointwise,
            actuators_per_axis,
            lambda,
            omega_fraction: None,
            measurement: b,
            weight: beta * (cell_volume * cell_volume),
        })
    }

    /// Same operator with a different gain (shares measurement structure).
    pub fn with_lambda(&self, lambda: f64) -> Result<Self, FeedbackError> {
        check_gain(lambda)?;
        Ok(Self {
            disc: Arc::clone(&self.disc),
            kind: self.kind,
            actuators_per_axis: self.actuators_per_axis,
            lambda,
            omega_fraction: self.omega_fraction,
            measurement: self.measurement.clone(),
            weight: self.weight.clone(),
        })
    }

    pub fn disc(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn kind(&self) -> FeedbackKind {
        self.kind
    }

    pub fn actuators_per_axis(&self) -> usize {
        self.actuators_per_axis
    }

    /// Number of measurement/actuation channels M^d.
    pub fn num_channels(&self) -> usize {
        self.measurement.ncols()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn omega_fraction(&self) -> Option<f64> {
        self.omega_fraction
    }

    pub fn measurement_matrix(&self) -> &DMatrix<f64> {
        &self.measurement
    }

    pub fn weight_matrix(&self) -> &DMatrix<f64> {
        &self.weight
    }

    /// λ B W Bᵀ applied through the low-rank factors.
    pub(crate) fn apply_coeffs(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        if self.num_channels() == 0 || self.lambda == 0.0 {
            return DVector::zeros(coeffs.len());
        }
        let measured = self.measurement.tr_mul(coeffs);
        let weighted = &self.weight * measured;
        (&self.measurement * weighted) * self.lambda
    }

    /// F z as a spectral field (the L² projection of the actuation onto the
    /// truncated basis).
    pub fn apply(&self, z: &SpectralField) -> Result<SpectralField, FeedbackError> {
        if !same_disc(&self.disc, z.disc()) {
            return Err(FeedbackError::DiscretizationMismatch);
        }
        let coeffs = self.apply_coeffs(z.coeffs());
        Ok(SpectralField::from_coeffs(&self.disc, coeffs).expect("sizes match by construction"))
    }

    /// ⟨F z, v⟩.
    pub fn bilinear_form(
        &self,
        z: &SpectralField,
        v: &SpectralField,
    ) -> Result<f64, FeedbackError> {
        if !same_disc(&self.disc, z.disc()) || !same_disc(&self.disc, v.disc()) {
            return Err(FeedbackError::DiscretizationMismatch);
        }
        Ok(self.apply_coeffs(z.coeffs()).dot(v.coeffs()))
    }

    /// ⟨F z, z⟩ ≥ 0.
    pub fn quadratic_form(&self, z: &SpectralField) -> Result<f64, FeedbackError> {
        self.bilinear_form(z, z)
    }

    /// Dense gain matrix λ B W Bᵀ (N^d × N^d).
    pub fn dense_gain(&self) -> DMatrix<f64> {
        let n = self.disc.num_modes();
        if self.num_channels() == 0 || self.lambda == 0.0 {
            return DMatrix::zeros(n, n);
        }
        let bw = &self.measurement * &self.weight;
        let mut gain = bw * self.measurement.transpose() * self.lambda;
        // enforce exact symmetry against rounding in the triple product
        for i in 0..n {
            for j in (i + 1)..n {
                let s = 0.5 * (gain[(i, j)] + gain[(j, i)]);
                gain[(i, j)] = s;
                gain[(j, i)] = s;
            }
        }
        gain
    }

    /// Key-value description for experiment logs; the β matrix is emitted as
    /// CSV rows following the `beta =` line.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        writeln!(out, "kind = {}", self.kind.label()).unwrap();
        writeln!(out, "actuators_per_axis = {}", self.actuators_per_axis).unwrap();
        writeln!(out, "lambda = {}", self.lambda).unwrap();
        if let Some(frac) = self.omega_fraction {
            writeln!(out, "omega_fraction = {frac}").unwrap();
        }
        let m = self.num_channels();
        let cell_volume = volume_per_cell(&self.disc, self.actuators_per_axis);
        match self.kind {
            FeedbackKind::WeightedPointwise => {
                writeln!(out, "beta =").unwrap();
                let row: Vec<String> = (0..m)
                    .map(|i| format!("{}", self.weight[(i, i)] / cell_volume))
                    .collect();
                writeln!(out, "{}", row.join(",")).unwrap();
            }
            FeedbackKind::NonlocalPointwise => {
                writeln!(out, "beta =").unwrap();
                for i in 0..m {
                    let row: Vec<String> = (0..m)
                        .map(|j| format!("{}", self.weight[(i, j)] / (cell_volume * cell_volume)))
                        .collect();
                    writeln!(out, "{}", row.join(",")).unwrap();
                }
            }
            _ => {}
        }
        out
    }
}

fn check_gain(lambda: f64) -> Result<(), FeedbackError> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(FeedbackError::NegativeGain(lambda));
    }
    Ok(())
}

fn volume_per_cell(disc: &Discretization, actuators_per_axis: usize) -> f64 {
    if actuators_per_axis == 0 {
        return 0.0;
    }
    1.0 / (actuators_per_axis.pow(disc.dim() as u32) as f64)
}

fn pointwise_measurement(
    disc: &Arc<Discretization>,
    actuators_per_axis: usize,
) -> (DMatrix<f64>, usize) {
    let n = disc.num_modes();
    if actuators_per_axis == 0 {
        return (DMatrix::zeros(n, 0), 0);
    }
    // lattice_values is (M^d × N^d); B is its transpose
    let b = disc.lattice_values(actuators_per_axis).transpose();
    let m = b.ncols();
    (b, m)
}

/// Mean of c(k) cos(kπx) over the centered sub-interval of width
/// `fraction`/M inside cell j (closed-form cosine integral).
fn averaged_basis_1d(k: usize, cell: usize, cells: usize, fraction: f64) -> f64 {
    let scale = if k == 0 {
        1.0
    } else {
        std::f64::consts::SQRT_2
    };
    if k == 0 {
        return scale;
    }
    let center = (cell as f64 + 0.5) / cells as f64;
    let half_width = 0.5 * fraction / cells as f64;
    let (a, b) = (center - half_width, center + half_width);
    let kpi = k as f64 * std::f64::consts::PI;
    scale * ((kpi * b).sin() - (kpi * a).sin()) / (kpi * (b - a))
}

fn average_measurement(
    disc: &Arc<Discretization>,
    actuators_per_axis: usize,
    fraction: f64,
) -> DMatrix<f64> {
    let n1 = disc.modes_per_axis();
    let n = disc.num_modes();
    let m1 = actuators_per_axis;
    if m1 == 0 {
        return DMatrix::zeros(n, 0);
    }
    let avg = DMatrix::from_fn(m1, n1, |j, k| averaged_basis_1d(k, j, m1, fraction));
    if disc.dim() == 1 {
        return avg.transpose();
    }
    DMatrix::from_fn(n, m1 * m1, |row, col| {
        let (k1, k2) = (row / n1, row % n1);
        let (j1, j2) = (col / m1, col % m1);
        avg[(j1, k1)] * avg[(j2, k2)]
    })
}

#[cfg(test)]
fn basis_1d_test(k: usize, x: f64) -> f64 {
    let scale = if k == 0 {
        1.0
    } else {
        std::f64::consts::SQRT_2
    };
    scale * (k as f64 * std::f64::consts::PI * x).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn disc_1d(n: usize, q: usize) -> Arc<Discretization> {
        Discretization::new(1, n, q).unwrap()
    }

    fn random_field(
        disc: &Arc<Discretization>,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> SpectralField {
        let coeffs = DVector::from_fn(disc.num_modes(), |_, _| rng.random_range(-1.0..1.0));
        SpectralField::from_coeffs(disc, coeffs).unwrap()
    }

    #[test]
    fn zero_channels_or_zero_gain_vanish() {
        let disc = disc_1d(4, 8);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let z = random_field(&disc, &mut rng);
        let off = FeedbackOperator::pointwise(&disc, 0, 7.0).unwrap();
        assert_eq!(off.quadratic_form(&z).unwrap(), 0.0);
        let lam0 = FeedbackOperator::pointwise(&disc, 3, 0.0).unwrap();
        assert_eq!(lam0.quadratic_form(&z).unwrap(), 0.0);
        assert!(lam0.apply(&z).unwrap().coeffs().iter().all(|c| *c == 0.0));
    }

    #[test]
    fn pointwise_node_of_mode_gives_zero() {
        // d=1, M=1: single measurement at x = 1/2 where cos(πx) vanishes.
        let disc = disc_1d(4, 8);
        let z = SpectralField::mode(&disc, [1, 0], 1.0 / std::f64::consts::SQRT_2);
        let f = FeedbackOperator::pointwise(&disc, 1, 5.0).unwrap();
        let fz = f.apply(&z).unwrap();
        assert!(fz.coeffs().iter().all(|c| c.abs() < 1e-14));
    }

    #[test]
    fn pointwise_hand_assembled_two_mode_case() {
        // d=1, M=1, N=2, basis {1, √2 cos πx}: B = [[1],[0]] so the gain
        // matrix λ B W Bᵀ = diag(λ, 0) and twice that is diag(2λ, 0).
        let disc = Discretization::new(1, 2, 4).unwrap();
        let f = FeedbackOperator::pointwise(&disc, 1, 5.0).unwrap();
        let b = f.measurement_matrix();
        assert!((b[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(b[(1, 0)].abs() < 1e-15);
        let gain = f.dense_gain();
        assert!((gain[(0, 0)] - 5.0).abs() < 1e-14);
        assert!(gain[(0, 1)].abs() < 1e-15);
        assert!(gain[(1, 1)].abs() < 1e-15);
    }

    #[test]
    fn pointwise_matches_direct_sum_oracle() {
        let disc = disc_1d(6, 12);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let f = FeedbackOperator::pointwise(&disc, 3, 2.5).unwrap();
        for _ in 0..20 {
            let z = random_field(&disc, &mut rng);
            let v = random_field(&disc, &mut rng);
            // λ M^{−d} Σ_j z(ξ_j) v(ξ_j)
            let mut direct = 0.0;
            for j in 0..3 {
                let x = (j as f64 + 0.5) / 3.0;
                let zx: f64 = (0..6)
                    .map(|k| z.coeffs()[k] * super::basis_1d_test(k, x))
                    .sum();
                let vx: f64 = (0..6)
                    .map(|k| v.coeffs()[k] * super::basis_1d_test(k, x))
                    .sum();
                direct += zx * vx;
            }
            direct *= 2.5 / 3.0;
            let form = f.bilinear_form(&z, &v).unwrap();
            assert!((form - direct).abs() < 1e-12, "{form} vs {direct}");
        }
    }

    #[test]
    fn pointwise_at_reduces_to_lattice_and_validates_domain() {
        let disc = disc_1d(6, 12);
        // the midpoint lattice reproduces the standard constructor exactly
        let lattice: Vec<[f64; 2]> = (0..3).map(|j| [(j as f64 + 0.5) / 3.0, 0.0]).collect();
        let free = FeedbackOperator::pointwise_at(&disc, &lattice, 2.5).unwrap();
        let std = FeedbackOperator::pointwise(&disc, 3, 2.5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let z = random_field(&disc, &mut rng);
            let a = free.quadratic_form(&z).unwrap();
            let b = std.quadratic_form(&z).unwrap();
            assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        }
        // off-lattice placements stay symmetric PSD
        let skew = FeedbackOperator::pointwise_at(&disc, &[[0.13, 0.0], [0.7, 0.0]], 1.0).unwrap();
        for _ in 0..20 {
            let z = random_field(&disc, &mut rng);
            assert!(skew.quadratic_form(&z).unwrap() >= -1e-10);
        }
        assert!(matches!(
            FeedbackOperator::pointwise_at(&disc, &[[1.5, 0.0]], 1.0),
            Err(FeedbackError::LocationOutsideDomain { index: 0, .. })
        ));
    }

    #[test]
    fn cell_average_constant_and_odd_mode() {
        let disc = disc_1d(6, 12);
        let a = 1.3;
        let z = SpectralField::constant(&disc, a);
        let f = FeedbackOperator::cell_average(&disc, 2, 4.0, 1.0).unwrap();
        // every average is a, ⟨Fz,z⟩ = λ a²
        assert!((f.quadratic_form(&z).unwrap() - 4.0 * a * a).abs() < 1e-12);

        // cos(πx) averages to zero over the whole domain (M=1)
        let g = FeedbackOperator::cell_average(&disc, 1, 4.0, 1.0).unwrap();
        let zc = SpectralField::mode(&disc, [1, 0], 1.0 / std::f64::consts::SQRT_2);
        assert!(g.quadratic_form(&zc).unwrap().abs() < 1e-14);
    }

    #[test]
    fn cell_average_closed_form_two_cells() {
        // z = cos πx, M = 2, ω_T = T: averages ±2/π, ⟨Fz,z⟩ = 4λ/π².
        let disc = disc_1d(6, 12);
        let z = SpectralField::mode(&disc, [1, 0], 1.0 / std::f64::consts::SQRT_2);
        let lambda = 3.0;
        let f = FeedbackOperator::cell_average(&disc, 2, lambda, 1.0).unwrap();
        let expect = 4.0 * lambda / std::f64::consts::PI.powi(2);
        assert!((f.quadratic_form(&z).unwrap() - expect).abs() < 1e-12);
        assert!(matches!(
            FeedbackOperator::cell_average(&disc, 2, lambda, 0.0),
            Err(FeedbackError::InvalidOmegaFraction(_))
        ));
        assert!(matches!(
            FeedbackOperator::cell_average(&disc, 2, lambda, 1.5),
            Err(FeedbackError::InvalidOmegaFraction(_))
        ));
    }

    #[test]
    fn cell_average_matches_quadrature_oracle() {
        // closed-form cosine integrals vs quadrature on a fine grid
        let disc = disc_1d(5, 10);
        let f = FeedbackOperator::cell_average(&disc, 3, 1.0, 0.5).unwrap();
        let b = f.measurement_matrix();
        let fine = 200_000;
        for cell in 0..3 {
            for k in 0..5 {
                let center = (cell as f64 + 0.5) / 3.0;
                let hw = 0.25 / 3.0;
                let mut acc = 0.0;
                for i in 0..fine {
                    let x = center - hw + (i as f64 + 0.5) / fine as f64 * 2.0 * hw;
                    acc += super::basis_1d_test(k, x);
                }
                acc /= fine as f64;
                assert!(
                    (b[(k, cell)] - acc).abs() < 1e-9,
                    "cell {cell} mode {k}: {} vs {acc}",
                    b[(k, cell)]
                );
            }
        }
    }

    #[test]
    fn weighted_reduces_to_pointwise_for_unit_weights() {
        let disc = disc_1d(5, 10);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let w = FeedbackOperator::weighted(&disc, 2, 3.0, &[1.0, 1.0]).unwrap();
        let p = FeedbackOperator::pointwise(&disc, 2, 3.0).unwrap();
        for _ in 0..10 {
            let z = random_field(&disc, &mut rng);
            let a = w.quadratic_form(&z).unwrap();
            let b = p.quadratic_form(&z).unwrap();
            assert!((a - b).abs() < 1e-13);
        }
        assert!(matches!(
            FeedbackOperator::weighted(&disc, 2, 3.0, &[1.0, -0.5]),
            Err(FeedbackError::NonpositiveWeight { index: 1, .. })
        ));
        assert!(matches!(
            FeedbackOperator::weighted(&disc, 2, 3.0, &[1.0]),
            Err(FeedbackError::WeightSizeMismatch { .. })
        ));
    }

    #[test]
    fn nonlocal_validates_and_matches_double_sum_oracle() {
        let disc = disc_1d(5, 10);
        let beta = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let lambda = 1.7;
        let f = FeedbackOperator::nonlocal(&disc, 2, lambda, &beta).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let z = random_field(&disc, &mut rng);
            // brute force λ Σ_{T,T'} |T||T'| z(x_T) z(x_{T'}) β_{T,T'}
            let samples: Vec<f64> = (0..2)
                .map(|j| {
                    let x = (j as f64 + 0.5) / 2.0;
                    (0..5)
                        .map(|k| z.coeffs()[k] * super::basis_1d_test(k, x))
                        .sum()
                })
                .collect();
            let mut direct = 0.0;
            for t in 0..2 {
                for tp in 0..2 {
                    direct += 0.5 * 0.5 * samples[t] * samples[tp] * beta[(t, tp)];
                }
            }
            direct *= lambda;
            let form = f.quadratic_form(&z).unwrap();
            assert!((form - direct).abs() < 1e-12);
        }

        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 2.0]);
        assert!(matches!(
            FeedbackOperator::nonlocal(&disc, 2, lambda, &asym),
            Err(FeedbackError::NonSymmetricWeights(_))
        ));
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            FeedbackOperator::nonlocal(&disc, 2, lambda, &indef),
            Err(FeedbackError::IndefiniteWeights(_))
        ));
    }

    #[test]
    fn nonlocal_with_inverse_volume_identity_reduces_to_pointwise() {
        // β = M^d · I makes |T||T'| β_{T,T'} = |T| δ_{T,T'}, the pointwise weight.
        let disc = disc_1d(5, 10);
        let beta = DMatrix::identity(2, 2) * 2.0;
        let nl = FeedbackOperator::nonlocal(&disc, 2, 3.0, &beta).unwrap();
        let p = FeedbackOperator::pointwise(&disc, 2, 3.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let z = random_field(&disc, &mut rng);
            let a = nl.quadratic_form(&z).unwrap();
            let b = p.quadratic_form(&z).unwrap();
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn apply_trivial_cases_and_mismatch() {
        let disc = disc_1d(4, 8);
        let f = FeedbackOperator::pointwise(&disc, 2, 3.0).unwrap();
        let z = SpectralField::zero(&disc);
        assert!(f.apply(&z).unwrap().coeffs().iter().all(|c| *c == 0.0));
        let other = disc_1d(5, 10);
        let zo = SpectralField::zero(&other);
        assert!(matches!(
            f.apply(&zo),
            Err(FeedbackError::DiscretizationMismatch)
        ));
    }

    #[test]
    fn psd_symmetry_and_gain_scaling() {
        let disc = Discretization::new(2, 4, 6).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let ops = vec![
            FeedbackOperator::pointwise(&disc, 2, 2.0).unwrap(),
            FeedbackOperator::cell_average(&disc, 2, 2.0, 0.6).unwrap(),
            FeedbackOperator::weighted(&disc, 2, 2.0, &[0.5, 1.0, 1.5, 2.0]).unwrap(),
            FeedbackOperator::nonlocal(
                &disc,
                2,
                2.0,
                &(DMatrix::identity(4, 4) * 2.0 + DMatrix::from_element(4, 4, 0.3)),
            )
            .unwrap(),
        ];
        for op in &ops {
            for _ in 0..100 {
                let z = random_field(&disc, &mut rng);
                let v = random_field(&disc, &mut rng);
                assert!(op.quadratic_form(&z).unwrap() >= -1e-10);
                let zv = op.bilinear_form(&z, &v).unwrap();
                let vz = op.bilinear_form(&v, &z).unwrap();
                assert!((zv - vz).abs() < 1e-12);
            }
            // exact scaling identity ⟨F_λ z, z⟩ = (λ/λ′) ⟨F_λ′ z, z⟩
            let z = random_field(&disc, &mut rng);
            let double = op.with_lambda(4.0).unwrap();
            let a = op.quadratic_form(&z).unwrap();
            let b = double.quadratic_form(&z).unwrap();
            assert!((b - 2.0 * a).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn gain_matrix_rank_bounded_by_channels() {
        let disc = disc_1d(8, 16);
        let f = FeedbackOperator::pointwise(&disc, 3, 1.0).unwrap();
        let gain = f.dense_gain();
        let eigs = gain.symmetric_eigenvalues();
        let scale = eigs.amax().max(1e-30);
        let rank = eigs.iter().filter(|e| e.abs() > 1e-10 * scale).count();
        assert!(rank <= 3, "numerical rank {rank} exceeds channel count");
    }

    #[test]
    fn describe_contains_parameters() {
        let disc = disc_1d(4, 8);
        let f = FeedbackOperator::cell_average(&disc, 2, 7.5, 0.5).unwrap();
        let text = f.describe();
        assert!(text.contains("kind = cell_average"));
        assert!(text.contains("actuators_per_axis = 2"));
        assert!(text.contains("lambda = 7.5"));
        assert!(text.contains("omega_fraction = 0.5"));
        let w = FeedbackOperator::weighted(&disc, 2, 1.0, &[0.5, 2.0]).unwrap();
        assert!(w.describe().contains("beta =\n0.5,2"));
    }
}
