//! Entanglement swapping, loss channels and swap chains.
//!
//! A swap takes two two-mode states whose second modes (the `C` arms) meet at
//! an intermediate station. Homodyne detection of `X_C1 − X_C2` and
//! `Y_C1 + Y_C2` leaves the first modes in a conditional Gaussian state whose
//! covariance does not depend on the outcome; only the drift does.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::constants::VACUUM_VARIANCE;
use crate::error::{Error, Result};
use crate::gaussian::{ensure_physical, log_negativity, CovarianceMatrix4, TwoModeGaussianState};

/// Determinants of `M` below this are treated as singular.
pub const DETERMINANT_GUARD: f64 = 1e-30;

/// Largest accepted condition number of `M`.
pub const MAX_CONDITION: f64 = 1e12;

const Z: Matrix2<f64> = Matrix2::new(1.0, 0.0, 0.0, -1.0);

/// Homodyne results `k = (x₋, y₊)` of a Bell measurement.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BellOutcome {
    pub x_minus: f64,
    pub y_plus: f64,
}

impl BellOutcome {
    pub fn new(x_minus: f64, y_plus: f64) -> Result<Self> {
        if !(x_minus.is_finite() && y_plus.is_finite()) {
            return Err(Error::Domain("Bell outcome must be finite".into()));
        }
        Ok(Self { x_minus, y_plus })
    }

    fn vector(&self) -> Vector2<f64> {
        Vector2::new(self.x_minus, self.y_plus)
    }
}

/// How attenuation in dB/km (or 1/km) turns into a transmissivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossLaw {
    /// `η = η₀ · 10^(−α l / 10)` with `α` in dB/km.
    #[default]
    Decibel,
    /// `η = η₀ · e^(−α l)` with `α` in 1/km.
    Exponential,
}

/// Detection efficiency plus fibre or free-space attenuation for one arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub eta0: f64,
    pub alpha: f64,
    pub length_km: f64,
    pub law: LossLaw,
    eta: f64,
}

impl LossParams {
    pub fn new(eta0: f64, alpha: f64, length_km: f64, law: LossLaw) -> Result<Self> {
        if !(eta0 > 0.0 && eta0 <= 1.0) {
            return Err(Error::validation(
                "eta0",
                format!("must lie in (0, 1], got {eta0}"),
            ));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::validation(
                "alpha",
                format!("must be non-negative, got {alpha}"),
            ));
        }
        if !(length_km.is_finite() && length_km >= 0.0) {
            return Err(Error::validation(
                "length",
                format!("must be non-negative, got {length_km}"),
            ));
        }
        let attenuation = match law {
            LossLaw::Decibel => 10f64.powf(-alpha * length_km / 10.0),
            LossLaw::Exponential => (-alpha * length_km).exp(),
        };
        let eta = eta0 * attenuation;
        if !(eta > 0.0) {
            return Err(Error::validation(
                "length",
                "total transmissivity underflows to zero",
            ));
        }
        Ok(Self {
            eta0,
            alpha,
            length_km,
            law,
            eta,
        })
    }

    /// Perfect detection and no attenuation.
    pub fn lossless() -> Self {
        Self {
            eta0: 1.0,
            alpha: 0.0,
            length_km: 0.0,
            law: LossLaw::Decibel,
            eta: 1.0,
        }
    }

    /// Total transmissivity.
    pub fn eta(&self) -> f64 {
        self.eta
    }
}

impl Default for LossParams {
    fn default() -> Self {
        Self::lossless()
    }
}

/// Pure-loss channel on each mode: `V ← S V S + (1 − S²)/2`, `d ← S d`,
/// with `S = diag(√η_A, √η_A, √η_B, √η_B)`.
pub fn apply_loss(
    state: &TwoModeGaussianState,
    loss_a: &LossParams,
    loss_b: &LossParams,
) -> TwoModeGaussianState {
    let (sa, sb) = (loss_a.eta().sqrt(), loss_b.eta().sqrt());
    let s = Matrix4::from_diagonal(&Vector4::new(sa, sa, sb, sb));
    let noise = Vector4::new(
        1.0 - loss_a.eta(),
        1.0 - loss_a.eta(),
        1.0 - loss_b.eta(),
        1.0 - loss_b.eta(),
    );
    let m = s * state.cov.matrix() * s + Matrix4::from_diagonal(&(noise * VACUUM_VARIANCE));
    TwoModeGaussianState {
        cov: CovarianceMatrix4::new((m + m.transpose()) * 0.5).expect("loss preserves symmetry"),
        drift: s * state.drift,
    }
}

fn block(v: &Matrix4<f64>, r: usize, c: usize) -> Matrix2<f64> {
    v.fixed_view::<2, 2>(r, c).into_owned()
}

/// `M = Z C₁ Z + C₂` and its inverse.
fn measurement_matrix(
    c1: &Matrix2<f64>,
    c2: &Matrix2<f64>,
) -> Result<(Matrix2<f64>, Matrix2<f64>)> {
    let m = Z * c1 * Z + c2;
    let m = (m + m.transpose()) * 0.5;
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if !(det.abs() > DETERMINANT_GUARD) {
        return Err(Error::Domain(format!(
            "measurement matrix M is singular (det = {det:.3e})"
        )));
    }
    let inv = Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det;
    // Frobenius norms bound the 2-norm condition number within a factor of 2.
    let cond = m.norm() * inv.norm();
    if !(cond <= MAX_CONDITION) {
        return Err(Error::Domain(format!(
            "measurement matrix M is ill-conditioned (cond ≈ {cond:.3e})"
        )));
    }
    Ok((m, inv))
}

/// Outcome mean implied by the drifts of the measured arms.
fn outcome_mean(d1: &Vector4<f64>, d2: &Vector4<f64>) -> Vector2<f64> {
    Vector2::new(-(d1[2] - d2[2]) / 2.0, (d1[3] + d2[3]) / 2.0)
}

/// Bell-measurement swap of the second modes of `state_ac` and `state_bc`.
///
/// The result holds mode 1 of `state_ac` and mode 1 of `state_bc`:
///
/// ```text
/// | A − D₁ZM⁻¹ZD₁ᵀ   D₁ZM⁻¹D₂ᵀ  |
/// | D₂M⁻¹ZD₁ᵀ        B − D₂M⁻¹D₂ᵀ |,   M = ZC₁Z + C₂,  Z = diag(1, −1)
/// ```
///
/// and drift `2(−D₁ZM⁻¹k, D₂M⁻¹k)` for zero-mean inputs, where `k` is the
/// outcome measured relative to its mean.
pub fn swap(
    state_ac: &TwoModeGaussianState,
    state_bc: &TwoModeGaussianState,
    outcome: &BellOutcome,
) -> Result<TwoModeGaussianState> {
    ensure_physical(&state_ac.cov, "first swap input")?;
    ensure_physical(&state_bc.cov, "second swap input")?;
    let (v1, v2) = (state_ac.cov.matrix(), state_bc.cov.matrix());
    let (a, d1, c1) = (block(v1, 0, 0), block(v1, 0, 2), block(v1, 2, 2));
    let (b, d2, c2) = (block(v2, 0, 0), block(v2, 0, 2), block(v2, 2, 2));
    let (_, minv) = measurement_matrix(&c1, &c2)?;

    let aa = a - d1 * Z * minv * Z * d1.transpose();
    let ab = d1 * Z * minv * d2.transpose();
    let bb = b - d2 * minv * d2.transpose();
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&aa);
    m.fixed_view_mut::<2, 2>(0, 2).copy_from(&ab);
    m.fixed_view_mut::<2, 2>(2, 0).copy_from(&ab.transpose());
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(&bb);
    let cov = CovarianceMatrix4::new(m)?;

    let k = outcome.vector() - outcome_mean(&state_ac.drift, &state_bc.drift);
    let shift_a = -2.0 * d1 * Z * minv * k;
    let shift_b = 2.0 * d2 * minv * k;
    let drift = Vector4::new(
        state_ac.drift[0] + shift_a[0],
        state_ac.drift[1] + shift_a[1],
        state_bc.drift[0] + shift_b[0],
        state_bc.drift[1] + shift_b[1],
    );
    TwoModeGaussianState::new(cov, drift)
}

/// Elementwise blocks `(V₁₁, V₁₂)` of a swap between two copies of `v`, so
/// that the swapped covariance is `[[V₁₁, V₁₂], [V₁₂, V₁₁]]`.
pub fn explicit_swap_blocks(v: &CovarianceMatrix4) -> Result<(Matrix2<f64>, Matrix2<f64>)> {
    // 1-based names to keep the formulas readable.
    let e = |i: usize, j: usize| v.get(i - 1, j - 1);
    let (v33, v44) = (e(3, 3), e(4, 4));
    if v33 == 0.0 || v44 == 0.0 {
        return Err(Error::Domain(
            "explicit swap blocks need nonzero V33 and V44".into(),
        ));
    }
    let p11 = e(1, 3) * e(1, 3) / v33;
    let q11 = e(1, 4) * e(1, 4) / v44;
    let p12 = e(1, 3) * e(2, 3) / v33;
    let q12 = e(1, 4) * e(2, 4) / v44;
    let p22 = e(2, 3) * e(2, 3) / v33;
    let q22 = e(2, 4) * e(2, 4) / v44;
    let off11 = e(1, 2) - 0.5 * (p12 + q12);
    let v11 = Matrix2::new(
        e(1, 1) - 0.5 * (p11 + q11),
        off11,
        off11,
        e(2, 2) - 0.5 * (p22 + q22),
    );
    let off12 = 0.5 * (p12 - q12);
    let v12 = Matrix2::new(0.5 * (p11 - q11), off12, off12, 0.5 * (p22 - q22));
    Ok((v11, v12))
}

/// Draws a Bell outcome `k ~ N(k̄, M/2)` deterministically from `seed`.
///
/// `k̄` is the outcome mean implied by the input drifts (zero for centred
/// inputs). The spread `M/2` is a modelling convention; covariances and the
/// corrected fidelity never depend on the outcome.
pub fn sample_bell_outcome(
    state_ac: &TwoModeGaussianState,
    state_bc: &TwoModeGaussianState,
    seed: u64,
) -> Result<BellOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_with(state_ac, state_bc, &mut rng)
}

fn sample_with(
    state_ac: &TwoModeGaussianState,
    state_bc: &TwoModeGaussianState,
    rng: &mut ChaCha8Rng,
) -> Result<BellOutcome> {
    let c1 = block(state_ac.cov.matrix(), 2, 2);
    let c2 = block(state_bc.cov.matrix(), 2, 2);
    let (m, _) = measurement_matrix(&c1, &c2)?;
    let l = (m * 0.5)
        .cholesky()
        .ok_or_else(|| Error::Domain("measurement matrix M is not positive definite".into()))?
        .unpack();
    let z = Vector2::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
    let k = outcome_mean(&state_ac.drift, &state_bc.drift) + l * z;
    BellOutcome::new(k[0], k[1])
}

/// Mixes a base seed with an index (SplitMix64 finalizer), so that parallel
/// tasks get independent, reproducible streams.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutcomePolicy {
    /// Every Bell measurement returns `k = k̄`.
    #[default]
    Zero,
    /// Outcomes are sampled; stage `s` uses `derive_seed(seed, s)`.
    Sampled { seed: u64 },
}

/// An N-link chain. The running Alice-side state's second mode is swapped
/// with the second mode of the next link, whose first mode becomes the new
/// far end. Link 0's first mode is Alice's arm and the last link's first mode
/// is Bob's; every other arm travels to a Bell station.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapChainConfig {
    pub links: Vec<TwoModeGaussianState>,
    /// Loss on every arm that travels to a Bell station.
    pub measured_loss: LossParams,
    /// Loss on Alice's and Bob's arms; `None` leaves them lossless.
    pub end_loss: Option<LossParams>,
    pub outcome_policy: OutcomePolicy,
}

impl SwapChainConfig {
    /// Lossless chain of `n` identical sources with zero outcomes.
    pub fn repeated(source: TwoModeGaussianState, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation(
                "chain.links",
                "a chain needs at least one link",
            ));
        }
        Ok(Self {
            links: vec![source; n],
            measured_loss: LossParams::lossless(),
            end_loss: None,
            outcome_policy: OutcomePolicy::Zero,
        })
    }

    pub fn with_measured_loss(mut self, loss: LossParams) -> Self {
        self.measured_loss = loss;
        self
    }

    pub fn with_end_loss(mut self, loss: Option<LossParams>) -> Self {
        self.end_loss = loss;
        self
    }

    pub fn with_outcome_policy(mut self, policy: OutcomePolicy) -> Self {
        self.outcome_policy = policy;
        self
    }

    /// Losses `(mode 1, mode 2)` applied to link `l` before it enters the chain.
    fn link_losses(&self, l: usize) -> (LossParams, LossParams) {
        let n = self.links.len();
        let end = self.end_loss.unwrap_or_default();
        if n == 1 {
            return (end, end);
        }
        let first = if l == 0 || l == n - 1 {
            end
        } else {
            self.measured_loss
        };
        (first, self.measured_loss)
    }
}

/// State after one swap of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTrace {
    /// 1-based swap index.
    pub stage: usize,
    pub outcome: BellOutcome,
    pub state: TwoModeGaussianState,
    pub log_negativity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub state: TwoModeGaussianState,
    pub stages: Vec<StageTrace>,
}

/// Runs the `N − 1` swaps of an `N`-link chain from Alice towards Bob.
///
/// Errors are wrapped in [`Error::Stage`] with the 1-based swap index (0 for
/// the inputs).
pub fn concatenate_chain(config: &SwapChainConfig) -> Result<ChainResult> {
    let stage_err = |stage: usize| {
        move |e: Error| Error::Stage {
            stage,
            source: Box::new(e),
        }
    };
    if config.links.is_empty() {
        return Err(Error::validation(
            "chain.links",
            "a chain needs at least one link",
        ));
    }
    let lossy: Vec<TwoModeGaussianState> = config
        .links
        .iter()
        .enumerate()
        .map(|(l, s)| {
            ensure_physical(&s.cov, &format!("link {l}")).map_err(stage_err(0))?;
            let (la, lb) = config.link_losses(l);
            Ok(apply_loss(s, &la, &lb))
        })
        .collect::<Result<_>>()?;

    let mut running = lossy[0];
    let mut stages = Vec::with_capacity(lossy.len() - 1);
    for (i, next) in lossy.iter().enumerate().skip(1) {
        let outcome = match config.outcome_policy {
            OutcomePolicy::Zero => {
                let m = outcome_mean(&running.drift, &next.drift);
                BellOutcome {
                    x_minus: m[0],
                    y_plus: m[1],
                }
            }
            OutcomePolicy::Sampled { seed } => {
                sample_bell_outcome(&running, next, derive_seed(seed, i as u64))
                    .map_err(stage_err(i))?
            }
        };
        running = swap(&running, next, &outcome).map_err(stage_err(i))?;
        let log_negativity = log_negativity(&running.cov).map_err(stage_err(i))?;
        stages.push(StageTrace {
            stage: i,
            outcome,
            state: running,
            log_negativity,
        });
    }
    Ok(ChainResult {
        state: running,
        stages,
    })
}
