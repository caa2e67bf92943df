//! Two-mode Gaussian states.
//!
//! Quadratures are ordered `(X_A, Y_A, X_B, Y_B)` everywhere and a vacuum
//! quadrature has variance 1/2. A covariance matrix is split into 2×2 blocks
//!
//! ```text
//! V = | A   D |
//!     | Dᵀ  B |
//! ```
//!
//! with `A`, `B` the local blocks and `D` the cross correlations.

use nalgebra::{Matrix2, Matrix4, Vector4};

use crate::constants::VACUUM_VARIANCE;
use crate::error::{Error, Result};

/// Largest asymmetry `|V_ij − V_ji|` (relative to `max(1, max |V_ij|)`) that
/// construction silently symmetrizes away.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Slack on the uncertainty bound `ν ≥ 1/2` when testing physicality.
pub const PHYSICALITY_TOLERANCE: f64 = 1e-10;

/// Negative discriminants `Σ² − 4 det V` down to this (relative) size are
/// treated as a degenerate spectrum and clamped to zero.
pub const DISCRIMINANT_CLAMP: f64 = 1e-12;

/// Symmetric 4×4 covariance matrix of a two-mode Gaussian state.
///
/// Construction enforces symmetry only. Physicality is a separate check
/// ([`check_physicality`]) because several callers need to reason about
/// candidate matrices that are not states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix4(Matrix4<f64>);

/// The 2×2 blocks of a [`CovarianceMatrix4`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockDecomposition {
    /// Local block of mode A.
    pub a: Matrix2<f64>,
    /// Local block of mode B.
    pub b: Matrix2<f64>,
    /// Cross block `⟨{R_A, R_Bᵀ}⟩/2`.
    pub d: Matrix2<f64>,
}

impl BlockDecomposition {
    pub fn reassemble(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<2, 2>(0, 0).copy_from(&self.a);
        m.fixed_view_mut::<2, 2>(0, 2).copy_from(&self.d);
        m.fixed_view_mut::<2, 2>(2, 0)
            .copy_from(&self.d.transpose());
        m.fixed_view_mut::<2, 2>(2, 2).copy_from(&self.b);
        m
    }
}

impl CovarianceMatrix4 {
    /// Wraps `m`, symmetrizing round-off asymmetry and rejecting anything larger.
    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain(
                "covariance matrix has non-finite entries".into(),
            ));
        }
        let scale = m.amax().max(1.0);
        let asymmetry = (m - m.transpose()).amax();
        if asymmetry > SYMMETRY_TOLERANCE * scale {
            return Err(Error::Domain(format!(
                "covariance matrix is not symmetric (max |V_ij - V_ji| = {asymmetry:.3e})"
            )));
        }
        Ok(Self((m + m.transpose()) * 0.5))
    }

    pub fn from_blocks(a: Matrix2<f64>, b: Matrix2<f64>, d: Matrix2<f64>) -> Result<Self> {
        Self::new(BlockDecomposition { a, b, d }.reassemble())
    }

    /// `v · 1`, e.g. `v = 1/2` for the two-mode vacuum.
    pub fn scaled_identity(v: f64) -> Self {
        Self(Matrix4::identity() * v)
    }

    pub fn vacuum() -> Self {
        Self::scaled_identity(VACUUM_VARIANCE)
    }

    /// Two-mode squeezed vacuum with squeezing parameter `r`:
    /// `A = B = cosh(2r)/2 · 1`, `D = sinh(2r)/2 · diag(1, −1)`.
    pub fn two_mode_squeezed_vacuum(r: f64) -> Self {
        let c = (2.0 * r).cosh() * VACUUM_VARIANCE;
        let s = (2.0 * r).sinh() * VACUUM_VARIANCE;
        let local = Matrix2::identity() * c;
        let cross = Matrix2::new(s, 0.0, 0.0, -s);
        Self(
            BlockDecomposition {
                a: local,
                b: local,
                d: cross,
            }
            .reassemble(),
        )
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix4<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn blocks(&self) -> BlockDecomposition {
        BlockDecomposition {
            a: self.0.fixed_view::<2, 2>(0, 0).into_owned(),
            b: self.0.fixed_view::<2, 2>(2, 2).into_owned(),
            d: self.0.fixed_view::<2, 2>(0, 2).into_owned(),
        }
    }

    /// Determinant via partial-pivoting LU (keeps the error relative to the
    /// condition number, which matters for strongly squeezed states).
    pub fn determinant(&self) -> f64 {
        self.0.lu().determinant()
    }

    /// `Σ(V) = det A + det B − 2 det D`, the local invariant of the partial transpose.
    pub fn seralian_pt(&self) -> f64 {
        let k = self.blocks();
        k.a.determinant() + k.b.determinant() - 2.0 * k.d.determinant()
    }

    /// `Δ(V) = det A + det B + 2 det D`.
    pub fn seralian(&self) -> f64 {
        let k = self.blocks();
        k.a.determinant() + k.b.determinant() + 2.0 * k.d.determinant()
    }

    /// Conjugates by a 4×4 matrix: `S V Sᵀ`.
    pub(crate) fn congruence(&self, s: &Matrix4<f64>) -> Self {
        let m = s * self.0 * s.transpose();
        Self((m + m.transpose()) * 0.5)
    }
}

/// A covariance matrix together with its first moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeGaussianState {
    pub cov: CovarianceMatrix4,
    /// Mean quadratures `(⟨X_A⟩, ⟨Y_A⟩, ⟨X_B⟩, ⟨Y_B⟩)`.
    pub drift: Vector4<f64>,
}

impl TwoModeGaussianState {
    pub fn new(cov: CovarianceMatrix4, drift: Vector4<f64>) -> Result<Self> {
        if drift.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("drift vector has non-finite entries".into()));
        }
        Ok(Self { cov, drift })
    }

    /// Zero-mean state.
    pub fn centered(cov: CovarianceMatrix4) -> Self {
        Self {
            cov,
            drift: Vector4::zeros(),
        }
    }
}

impl From<CovarianceMatrix4> for TwoModeGaussianState {
    fn from(cov: CovarianceMatrix4) -> Self {
        Self::centered(cov)
    }
}

/// Outcome of [`check_physicality`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physicality {
    pub physical: bool,
    /// Smallest symplectic eigenvalue, or `NaN` if `V` is not positive definite.
    pub min_symplectic_eigenvalue: f64,
}

/// Smaller root of `x² − s·x + p = 0` (with `x = ν²`), computed without cancellation.
fn smaller_root(s: f64, p: f64) -> Result<f64> {
    let mut disc = s * s - 4.0 * p;
    if disc < 0.0 {
        if disc < -DISCRIMINANT_CLAMP * (s * s).max(1.0) {
            return Err(Error::numerical(format!(
                "negative discriminant {disc:.3e} in symplectic spectrum (corrupted matrix?)"
            )));
        }
        disc = 0.0;
    }
    let large = 0.5 * (s + disc.sqrt());
    if large <= 0.0 {
        return Ok(0.0);
    }
    Ok(p / large)
}

/// The symplectic form `Ω = [[0, 1], [−1, 0]] ⊕ [[0, 1], [−1, 0]]`.
pub fn symplectic_form() -> Matrix4<f64> {
    let mut o = Matrix4::zeros();
    o[(0, 1)] = 1.0;
    o[(1, 0)] = -1.0;
    o[(2, 3)] = 1.0;
    o[(3, 2)] = -1.0;
    o
}

/// Symplectic eigenvalues `(ν₋, ν₊)` of a positive definite `V`.
///
/// With `V = LLᵀ`, the squares `ν²` are the (doubly degenerate) eigenvalues of
/// the symmetric matrix `Lᵀ Ωᵀ V Ω L`, which keeps degenerate spectra (pure
/// states) accurate to round-off. Returns `None` if `V` is not positive definite.
pub fn symplectic_eigenvalues(v: &CovarianceMatrix4) -> Option<(f64, f64)> {
    let l = v.matrix().cholesky()?.unpack();
    let omega = symplectic_form();
    let s = l.transpose() * omega.transpose() * v.matrix() * omega * l;
    let s = (s + s.transpose()) * 0.5;
    let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let lo = 0.5 * (ev[0] + ev[1]);
    let hi = 0.5 * (ev[2] + ev[3]);
    Some((lo.max(0.0).sqrt(), hi.max(0.0).sqrt()))
}

/// Tests the uncertainty principle `V + (i/2)Ω ≥ 0`: `V` must be positive
/// definite with both symplectic eigenvalues at least 1/2 (up to
/// [`PHYSICALITY_TOLERANCE`]).
pub fn check_physicality(v: &CovarianceMatrix4) -> Physicality {
    match symplectic_eigenvalues(v) {
        Some((nu, _)) => Physicality {
            physical: nu >= VACUUM_VARIANCE - PHYSICALITY_TOLERANCE,
            min_symplectic_eigenvalue: nu,
        },
        None => Physicality {
            physical: false,
            min_symplectic_eigenvalue: f64::NAN,
        },
    }
}

pub(crate) fn ensure_physical(v: &CovarianceMatrix4, what: &str) -> Result<()> {
    let p = check_physicality(v);
    if p.physical {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{what} is not a physical covariance matrix (min symplectic eigenvalue {:.6e})",
            p.min_symplectic_eigenvalue
        )))
    }
}

/// Smallest symplectic eigenvalue `η₋` of the partially transposed covariance matrix,
///
/// `η₋ = 2^{-1/2} [Σ − (Σ² − 4 det V)^{1/2}]^{1/2}`, `Σ = det A + det B − 2 det D`,
///
/// evaluated in the cancellation-free form `η₋² = 2 det V / (Σ + (Σ² − 4 det V)^{1/2})`.
pub fn min_symplectic_eigenvalue_pt(v: &CovarianceMatrix4) -> Result<f64> {
    ensure_physical(v, "input")?;
    let sigma = v.seralian_pt();
    let det = v.determinant();
    Ok(smaller_root(sigma, det)?.sqrt())
}

/// Logarithmic negativity `E_N = max(0, −ln 2η₋)`.
pub fn log_negativity(v: &CovarianceMatrix4) -> Result<f64> {
    let eta = min_symplectic_eigenvalue_pt(v)?;
    Ok((-(2.0 * eta).ln()).max(0.0))
}

/// Planar rotation by `theta`.
pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

pub(crate) fn local_rotation_matrix(theta_a: f64, theta_b: f64) -> Matrix4<f64> {
    let mut r = Matrix4::zeros();
    r.fixed_view_mut::<2, 2>(0, 0).copy_from(&rotation(theta_a));
    r.fixed_view_mut::<2, 2>(2, 2).copy_from(&rotation(theta_b));
    r
}

/// Applies independent phase-space rotations to the two modes.
pub fn local_rotation(
    state: &TwoModeGaussianState,
    theta_a: f64,
    theta_b: f64,
) -> TwoModeGaussianState {
    let r = local_rotation_matrix(theta_a, theta_b);
    TwoModeGaussianState {
        cov: state.cov.congruence(&r),
        drift: r * state.drift,
    }
}
