//! Optomechanical entangler: from device parameters to the stationary
//! covariance matrix of two filtered output modes.
//!
//! A cavity with two driven optical modes `a`, `b` couples to one mechanical
//! mode. After linearization around the mean field the fluctuations obey
//! `ẋ = 𝒜 x + n(t)` with `x = (q, p, X_a, Y_a, X_b, Y_b)` and white noise of
//! diffusion matrix `𝒟`. The output fields are filtered by one-pole filters
//! `f_j(ω) = √(τ_j/π) / (1 + iτ_j(Ω_j − ω))` and the covariance matrix of the
//! filtered quadratures is the spectral integral
//!
//! ```text
//! V_out = ∫ T(ω) [(iω + 𝒜)⁻¹ + 𝒫] 𝒟 [(−iω + 𝒜)⁻¹ + 𝒫]ᵀ T(−ω)ᵀ dω
//! ```
//!
//! evaluated here by adaptive quadrature over the whole real line.

use nalgebra::{Matrix6, SMatrix};
use num_complex::Complex64;

use crate::constants::{BOLTZMANN, HBAR, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::gaussian::{ensure_physical, CovarianceMatrix4};
use crate::quadrature::{self, QuadratureOptions};

pub type FilterMatrix = SMatrix<Complex64, 4, 6>;

/// Mechanical resonator parameters. `gamma_m` and `n_th` are derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanicalParams {
    /// Angular frequency ω_m, rad/s.
    pub omega_m: f64,
    /// Quality factor Q_m = ω_m/γ_m.
    pub q_m: f64,
    /// Energy damping rate γ_m, rad/s.
    pub gamma_m: f64,
    /// Effective mass, kg.
    pub mass: f64,
    /// Bath temperature, K.
    pub temperature: f64,
    /// Mean thermal phonon number.
    pub n_th: f64,
}

impl MechanicalParams {
    pub fn new(omega_m: f64, q_m: f64, mass: f64, temperature: f64) -> Result<Self> {
        positive("mech.omega_m", omega_m)?;
        positive("mech.Q_m", q_m)?;
        positive("mech.mass", mass)?;
        non_negative("mech.temperature", temperature)?;
        Ok(Self {
            omega_m,
            q_m,
            gamma_m: omega_m / q_m,
            mass,
            temperature,
            n_th: thermal_occupation(temperature, omega_m),
        })
    }
}

/// Inputs describing one driven optical mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalDrive {
    /// Drive wavelength, m.
    pub wavelength: f64,
    /// Cavity amplitude decay rate κ, rad/s.
    pub kappa: f64,
    /// Cavity-drive detuning Δ, rad/s.
    pub detuning: f64,
    /// Drive power, W.
    pub power: f64,
    /// Replaces the mean-field effective coupling when set, rad/s.
    pub effective_coupling: Option<f64>,
}

/// A driven optical mode together with its derived couplings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalModeParams {
    pub wavelength: f64,
    pub kappa: f64,
    pub detuning: f64,
    pub power: f64,
    /// |E| = √(2Pκ/ħω_L).
    pub drive_amplitude: f64,
    /// Single-photon coupling g, rad/s.
    pub bare_coupling: f64,
    /// Linearized coupling G, rad/s.
    pub effective_coupling: f64,
}

/// One-pole filter selecting a temporal output mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    /// Central frequency Ω, rad/s.
    pub center: f64,
    /// Duration τ, s (bandwidth 1/τ).
    pub duration: f64,
}

/// Raw device inputs, all in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntanglerParams {
    pub omega_m: f64,
    pub q_m: f64,
    pub mass: f64,
    pub temperature: f64,
    pub mode_a: OpticalDrive,
    pub mode_b: OpticalDrive,
    pub cavity_length: f64,
    pub filter_a: FilterSpec,
    pub filter_b: FilterSpec,
    /// Use `q̇ = ω_m p`, `ṗ = −ω_m q − γ_m p + …`; `false` flips the sign of
    /// the `q̇` entry.
    pub standard_signs: bool,
}

/// Default effective mass when none is given, kg (10 ng).
pub const DEFAULT_MASS: f64 = 1e-11;

impl EntanglerParams {
    /// The baseline device: ω_m = 2π×10 MHz, L = 1 mm, κ_a = κ_b = 0.2ω_m,
    /// T = 4.2 K, ω_mτ = 300, λ = 1550/810 nm, P = 17/6 mW, Δ_a = −Δ_b = ω_m,
    /// Ω_a = −ω_m, Ω_b = ω_m, Q_m = 10⁷ and m = [`DEFAULT_MASS`].
    pub fn baseline() -> Self {
        let omega_m = 2.0 * std::f64::consts::PI * 10e6;
        let kappa = 0.2 * omega_m;
        let tau = 300.0 / omega_m;
        Self {
            omega_m,
            q_m: 1e7,
            mass: DEFAULT_MASS,
            temperature: 4.2,
            mode_a: OpticalDrive {
                wavelength: 1550e-9,
                kappa,
                detuning: omega_m,
                power: 17e-3,
                effective_coupling: None,
            },
            mode_b: OpticalDrive {
                wavelength: 810e-9,
                kappa,
                detuning: -omega_m,
                power: 6e-3,
                effective_coupling: None,
            },
            cavity_length: 1e-3,
            filter_a: FilterSpec {
                center: -omega_m,
                duration: tau,
            },
            filter_b: FilterSpec {
                center: omega_m,
                duration: tau,
            },
            standard_signs: true,
        }
    }

    pub fn build(&self) -> Result<EntanglerConfig> {
        EntanglerConfig::new(self)
    }
}

/// A validated device with all derived quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntanglerConfig {
    pub mech: MechanicalParams,
    pub mode_a: OpticalModeParams,
    pub mode_b: OpticalModeParams,
    pub cavity_length: f64,
    pub filter_a: FilterSpec,
    pub filter_b: FilterSpec,
    pub standard_signs: bool,
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(
            field,
            format!("must be positive and finite, got {v}"),
        ))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::validation(
            field,
            format!("must be non-negative and finite, got {v}"),
        ))
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be finite, got {v}")))
    }
}

fn optical_mode(
    name: &str,
    drive: &OpticalDrive,
    mech: &MechanicalParams,
    cavity_length: f64,
) -> Result<OpticalModeParams> {
    positive(&format!("{name}.wavelength"), drive.wavelength)?;
    positive(&format!("{name}.kappa"), drive.kappa)?;
    finite(&format!("{name}.detuning"), drive.detuning)?;
    non_negative(&format!("{name}.power"), drive.power)?;
    let e = drive_amplitude(drive.power, drive.kappa, drive.wavelength);
    let g = bare_coupling(mech.mass, mech.omega_m, cavity_length, drive.wavelength);
    let big_g = match drive.effective_coupling {
        Some(v) => {
            finite(&format!("{name}.effective_coupling"), v)?;
            v
        }
        None => effective_coupling(g, e, drive.kappa, drive.detuning),
    };
    Ok(OpticalModeParams {
        wavelength: drive.wavelength,
        kappa: drive.kappa,
        detuning: drive.detuning,
        power: drive.power,
        drive_amplitude: e,
        bare_coupling: g,
        effective_coupling: big_g,
    })
}

impl EntanglerConfig {
    pub fn new(p: &EntanglerParams) -> Result<Self> {
        let mech = MechanicalParams::new(p.omega_m, p.q_m, p.mass, p.temperature)?;
        positive("cavity_length", p.cavity_length)?;
        for (name, f) in [("filter_a", &p.filter_a), ("filter_b", &p.filter_b)] {
            finite(&format!("{name}.center"), f.center)?;
            positive(&format!("{name}.duration"), f.duration)?;
        }
        Ok(Self {
            mech,
            mode_a: optical_mode("mode_a", &p.mode_a, &mech, p.cavity_length)?,
            mode_b: optical_mode("mode_b", &p.mode_b, &mech, p.cavity_length)?,
            cavity_length: p.cavity_length,
            filter_a: p.filter_a,
            filter_b: p.filter_b,
            standard_signs: p.standard_signs,
        })
    }
}

/// Bose–Einstein occupation `1/(exp(ħω/k_B T) − 1)`; zero at `T = 0`.
pub fn thermal_occupation(temperature: f64, omega_m: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    1.0 / (HBAR * omega_m / (BOLTZMANN * temperature)).exp_m1()
}

/// Drive strength `|E| = √(2Pκ/ħω_L)` with `ω_L = 2πc/λ`.
pub fn drive_amplitude(power: f64, kappa: f64, wavelength: f64) -> f64 {
    let omega_l = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / wavelength;
    (2.0 * power * kappa / (HBAR * omega_l)).sqrt()
}

/// Single-photon optomechanical coupling `g = √(ħ/mω_m) · (2πc/λ)/L`.
pub fn bare_coupling(mass: f64, omega_m: f64, cavity_length: f64, wavelength: f64) -> f64 {
    let omega_c = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / wavelength;
    (HBAR / (mass * omega_m)).sqrt() * omega_c / cavity_length
}

/// Mean-field enhanced coupling `G = g|α_s|`, `|α_s| = |E|/√(κ² + Δ²)`.
pub fn effective_coupling(g: f64, drive: f64, kappa: f64, detuning: f64) -> f64 {
    g * drive.abs() / kappa.hypot(detuning)
}

/// Drift matrix 𝒜 in the ordering `(q, p, X_a, Y_a, X_b, Y_b)`.
pub fn build_drift_matrix(config: &EntanglerConfig) -> Matrix6<f64> {
    let m = &config.mech;
    let (a, b) = (&config.mode_a, &config.mode_b);
    let (ga, gb) = (a.effective_coupling, b.effective_coupling);
    let mut d = Matrix6::zeros();
    d[(0, 1)] = if config.standard_signs {
        m.omega_m
    } else {
        -m.omega_m
    };
    d[(1, 0)] = -m.omega_m;
    d[(1, 1)] = -m.gamma_m;
    d[(1, 2)] = ga;
    d[(1, 4)] = gb;
    d[(2, 2)] = -a.kappa;
    d[(2, 3)] = a.detuning;
    d[(3, 0)] = ga;
    d[(3, 2)] = -a.detuning;
    d[(3, 3)] = -a.kappa;
    d[(4, 4)] = -b.kappa;
    d[(4, 5)] = b.detuning;
    d[(5, 0)] = gb;
    d[(5, 4)] = -b.detuning;
    d[(5, 5)] = -b.kappa;
    d
}

/// Diffusion matrix `Diag[0, γ_m(2n_th + 1), κ_a, κ_a, κ_b, κ_b]`.
pub fn build_diffusion_matrix(config: &EntanglerConfig) -> Matrix6<f64> {
    let m = &config.mech;
    let (ka, kb) = (config.mode_a.kappa, config.mode_b.kappa);
    Matrix6::from_diagonal(&nalgebra::Vector6::new(
        0.0,
        m.gamma_m * (2.0 * m.n_th + 1.0),
        ka,
        ka,
        kb,
        kb,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    pub stable: bool,
    /// Largest real part among the eigenvalues of the drift matrix, rad/s.
    pub max_real_part: f64,
}

impl Stability {
    /// `−max Re λ / ω_m`; positive for stable systems.
    pub fn margin(&self, omega_m: f64) -> f64 {
        -self.max_real_part / omega_m
    }
}

/// Eigenvalue test: stable iff every eigenvalue has real part below `−10⁻¹² ω_m`.
pub fn check_stability(drift: &Matrix6<f64>, omega_m: f64) -> Result<Stability> {
    if drift.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("drift matrix has non-finite entries".into()));
    }
    let schur = nalgebra::linalg::Schur::try_new(*drift, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::numerical("eigenvalue solver did not converge"))?;
    let max_real_part = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Stability {
        stable: max_real_part < -1e-12 * omega_m,
        max_real_part,
    })
}

/// Stability verdict for a device.
pub fn stability(config: &EntanglerConfig) -> Result<Stability> {
    check_stability(&build_drift_matrix(config), config.mech.omega_m)
}

/// Filter transfer function `f(ω) = √(τ/π) / (1 + iτ(Ω − ω))`.
pub fn filter_transfer(omega: f64, spec: &FilterSpec) -> Complex64 {
    let tau = spec.duration;
    Complex64::new((tau / std::f64::consts::PI).sqrt(), 0.0)
        / Complex64::new(1.0, tau * (spec.center - omega))
}

/// `(h⁺, h⁻)` with `h^±(ω) = f(ω) ± f(−ω)*`.
fn filter_pair(omega: f64, spec: &FilterSpec) -> (Complex64, Complex64) {
    let f = filter_transfer(omega, spec);
    let g = filter_transfer(-omega, spec).conj();
    (f + g, f - g)
}

/// The 4×6 filter matrix T(ω).
///
/// Each filtered mode contributes the row pair
/// `√(κ/2) · [[h⁺, −i h⁻], [i h⁻, h⁺]]` in the columns of its cavity
/// quadratures; the mechanical columns are zero. The filter centre Ω
/// labels the output sideband at `ω_L − Ω` (the sign convention under which
/// two-mode squeezing for Δ_a = −Δ_b = ω_m appears at Ω_a = −Ω_b = −ω_m).
pub fn build_filter_matrix(omega: f64, config: &EntanglerConfig) -> FilterMatrix {
    let mut t = FilterMatrix::zeros();
    let i = Complex64::i();
    for (row, col, kappa, spec) in [
        (0, 2, config.mode_a.kappa, &config.filter_a),
        (2, 4, config.mode_b.kappa, &config.filter_b),
    ] {
        let (hp, hm) = filter_pair(omega, spec);
        let s = (kappa / 2.0).sqrt();
        t[(row, col)] = hp * s;
        t[(row, col + 1)] = -i * hm * s;
        t[(row + 1, col)] = i * hm * s;
        t[(row + 1, col + 1)] = hp * s;
    }
    t
}

/// Result of the spectral integration, with diagnostics.
#[derive(Debug, Clone)]
pub struct SpectralCovariance {
    pub cov: CovarianceMatrix4,
    /// `max |Im V_raw| / max |Re V_raw|`; vanishes analytically.
    pub imaginary_ratio: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

/// Hermitian integrand packed as 10 real upper-triangle entries followed by
/// the 6 imaginary strictly-upper entries.
const PACKED: usize = 16;

fn upper_pairs() -> impl Iterator<Item = (usize, usize)> {
    (0..4).flat_map(|i| (i..4).map(move |j| (i, j)))
}

struct Integrand {
    drift: Matrix6<f64>,
    /// 𝒫 entries for the optical quadratures.
    p: [f64; 6],
    sqrt_diffusion: [f64; 6],
    config: EntanglerConfig,
}

impl Integrand {
    fn new(config: &EntanglerConfig) -> Self {
        let (ka, kb) = (config.mode_a.kappa, config.mode_b.kappa);
        let d = build_diffusion_matrix(config);
        let mut sqrt_diffusion = [0.0; 6];
        for (k, s) in sqrt_diffusion.iter_mut().enumerate() {
            *s = d[(k, k)].sqrt();
        }
        Self {
            drift: build_drift_matrix(config),
            p: [0.0, 0.0, 0.5 / ka, 0.5 / ka, 0.5 / kb, 0.5 / kb],
            sqrt_diffusion,
            config: *config,
        }
    }

    fn eval(&self, omega: f64) -> [f64; PACKED] {
        let mut m = self.drift.map(|x| Complex64::new(x, 0.0));
        for k in 0..6 {
            m[(k, k)] += Complex64::new(0.0, omega);
        }
        let mut k = match m.lu().try_inverse() {
            Some(inv) => inv,
            None => return [f64::NAN; PACKED],
        };
        for j in 0..6 {
            k[(j, j)] += self.p[j];
        }
        let mut w = build_filter_matrix(omega, &self.config) * k;
        for j in 0..6 {
            let s = self.sqrt_diffusion[j];
            for r in 0..4 {
                w[(r, j)] *= s;
            }
        }
        let v = w * w.adjoint();
        let mut out = [0.0; PACKED];
        for (n, (i, j)) in upper_pairs().enumerate() {
            out[n] = v[(i, j)].re;
        }
        for (n, (i, j)) in upper_pairs().filter(|(i, j)| i != j).enumerate() {
            out[10 + n] = v[(i, j)].im;
        }
        out
    }
}

/// Frequency scale beyond which the integrand is treated as a tail:
/// `W = 10 · max(ω_m + max|Δ|, max κ)`.
fn tail_start(config: &EntanglerConfig) -> f64 {
    let dmax = config
        .mode_a
        .detuning
        .abs()
        .max(config.mode_b.detuning.abs());
    let kmax = config.mode_a.kappa.max(config.mode_b.kappa);
    let wmax = config
        .filter_a
        .center
        .abs()
        .max(config.filter_b.center.abs());
    10.0 * (config.mech.omega_m + dmax).max(kmax).max(wmax)
}

/// Break points in the mapped variable `x ∈ [−2W, 2W]`, where `ω = x` on
/// `|x| ≤ W` and `ω = ±W/(2 − |x|/W)` on the tails.
fn breakpoints(config: &EntanglerConfig, w: f64) -> Vec<f64> {
    let m = &config.mech;
    let tau = config.filter_a.duration.min(config.filter_b.duration);
    let mut centers = vec![0.0, m.omega_m, -m.omega_m];
    for f in [&config.filter_a, &config.filter_b] {
        centers.push(f.center);
        centers.push(-f.center);
    }
    let mut pts = vec![-2.0 * w, -w, w, 2.0 * w];
    for &c in &centers {
        pts.push(c);
        for k in [1.0, 8.0, 64.0] {
            pts.push(c + k / tau);
            pts.push(c - k / tau);
        }
    }
    pts.retain(|x| x.abs() <= 2.0 * w);
    pts.sort_by(f64::total_cmp);
    let min_gap = 1e-9 * w;
    let mut out: Vec<f64> = Vec::with_capacity(pts.len());
    for x in pts {
        if out.last().map_or(true, |&l| x - l > min_gap) {
            out.push(x);
        }
    }
    out
}

/// Stationary covariance of the filtered outputs with default quadrature settings.
pub fn output_covariance(config: &EntanglerConfig) -> Result<CovarianceMatrix4> {
    Ok(output_covariance_with(config, &QuadratureOptions::default())?.cov)
}

pub fn output_covariance_with(
    config: &EntanglerConfig,
    opts: &QuadratureOptions,
) -> Result<SpectralCovariance> {
    let s = stability(config)?;
    if !s.stable {
        return Err(Error::Domain(format!(
            "drift matrix is unstable (max Re λ = {:.3e} ω_m)",
            s.max_real_part / config.mech.omega_m
        )));
    }
    let integrand = Integrand::new(config);
    let w = tail_start(config);
    let mapped = |x: f64| {
        let ax = x.abs();
        if ax <= w {
            return integrand.eval(x);
        }
        let t = 2.0 - ax / w;
        let omega = x.signum() * w / t;
        let jac = 1.0 / (t * t);
        let mut v = integrand.eval(omega);
        for e in v.iter_mut() {
            *e *= jac;
        }
        v
    };
    let r = quadrature::integrate(mapped, &breakpoints(config, w), opts)?;
    if r.value.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical(
            "spectral integrand is singular on the real axis",
        ));
    }
    let mut re = nalgebra::Matrix4::zeros();
    for (n, (i, j)) in upper_pairs().enumerate() {
        re[(i, j)] = r.value[n];
        re[(j, i)] = r.value[n];
    }
    let im_max = r.value[10..].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let cov = CovarianceMatrix4::new(re)?;
    ensure_physical(&cov, "output covariance")?;
    Ok(SpectralCovariance {
        cov,
        imaginary_ratio: im_max / re.amax(),
        error_estimate: r.error,
        evaluations: r.evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::log_negativity;

    fn baseline() -> EntanglerConfig {
        EntanglerParams::baseline().build().unwrap()
    }

    #[test]
    fn thermal_occupation_cases() {
        assert_eq!(thermal_occupation(0.0, 1e7), 0.0);
        let omega = 1e7;
        let t = HBAR * omega / (BOLTZMANN * std::f64::consts::LN_2);
        assert!((thermal_occupation(t, omega) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coupling_scaling_laws() {
        let w = 2.0 * std::f64::consts::PI * 1e7;
        assert_eq!(drive_amplitude(0.0, 1e6, 1550e-9), 0.0);
        let e1 = drive_amplitude(1e-3, 1e6, 1550e-9);
        let e2 = drive_amplitude(2e-3, 1e6, 1550e-9);
        assert!((e2 / e1 - 2f64.sqrt()).abs() < 1e-14);
        let g1 = bare_coupling(1e-11, w, 1e-3, 1550e-9);
        let g4 = bare_coupling(4e-11, w, 1e-3, 1550e-9);
        assert!((g1 / g4 - 2.0).abs() < 1e-14);
        let gb = bare_coupling(1e-11, w, 1e-3, 810e-9);
        assert!((gb / g1 - 1550.0 / 810.0).abs() < 1e-13);
        assert_eq!(effective_coupling(3.0, 0.0, 1.0, 0.0), 0.0);
        assert!((effective_coupling(3.0, 5.0, 2.0, 0.0) - 7.5).abs() < 1e-15);
        assert!((effective_coupling(3.0, 5.0, 2.0, 2.0) - 7.5 / 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn drift_matrix_structure() {
        let c = baseline();
        let a = build_drift_matrix(&c);
        let expected = -c.mech.gamma_m - 2.0 * c.mode_a.kappa - 2.0 * c.mode_b.kappa;
        assert!((a.trace() - expected).abs() < 1e-9 * expected.abs());
        assert_eq!(a[(3, 0)], c.mode_a.effective_coupling);
        assert_eq!(a[(1, 2)], c.mode_a.effective_coupling);
        assert_eq!(a[(5, 0)], c.mode_b.effective_coupling);
        assert_eq!(a[(1, 4)], c.mode_b.effective_coupling);
        assert_eq!(a[(2, 3)], c.mode_a.detuning);
        assert_eq!(a[(4, 5)], c.mode_b.detuning);

        let mut p = EntanglerParams::baseline();
        p.mode_a.effective_coupling = Some(0.0);
        p.mode_b.effective_coupling = Some(0.0);
        let a = build_drift_matrix(&p.build().unwrap());
        for i in 0..2 {
            for j in 2..6 {
                assert_eq!(a[(i, j)], 0.0);
                assert_eq!(a[(j, i)], 0.0);
            }
        }
    }

    #[test]
    fn printed_mechanical_rows_are_unstable() {
        let mut p = EntanglerParams::baseline();
        p.standard_signs = false;
        let c = p.build().unwrap();
        assert_eq!(build_drift_matrix(&c)[(0, 1)], -c.mech.omega_m);
        assert!(!stability(&c).unwrap().stable);
    }

    #[test]
    fn diffusion_entries() {
        let c = baseline();
        let d = build_diffusion_matrix(&c);
        assert_eq!(d[(0, 0)], 0.0);
        assert!((d[(1, 1)] - c.mech.gamma_m * (2.0 * c.mech.n_th + 1.0)).abs() < 1e-9);
        assert_eq!(d[(2, 2)], c.mode_a.kappa);
        assert_eq!(d[(5, 5)], c.mode_b.kappa);
        let mut p = EntanglerParams::baseline();
        p.temperature = 0.0;
        let c = p.build().unwrap();
        assert_eq!(build_diffusion_matrix(&c)[(1, 1)], c.mech.gamma_m);
    }

    #[test]
    fn stability_cases() {
        let mut p = EntanglerParams::baseline();
        p.mode_a.effective_coupling = Some(0.0);
        p.mode_b.effective_coupling = Some(0.0);
        assert!(stability(&p.build().unwrap()).unwrap().stable);
        // γ_m → 0 leaves an undamped mechanical mode.
        let c = p.build().unwrap();
        let mut a = build_drift_matrix(&c);
        a[(1, 1)] = 0.0;
        let s = check_stability(&a, c.mech.omega_m).unwrap();
        assert!(!s.stable);
        assert!(s.max_real_part.abs() < 1e-6 * c.mech.omega_m);
        assert!(stability(&baseline()).unwrap().stable);
    }

    #[test]
    fn filter_shape() {
        let spec = FilterSpec {
            center: 3.0,
            duration: 2.0,
        };
        let peak = filter_transfer(3.0, &spec);
        assert!((peak.re - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert_eq!(peak.im, 0.0);
        let half = filter_transfer(3.5, &spec).norm_sqr();
        assert!((half - 0.5 * peak.norm_sqr()).abs() < 1e-15);
    }

    #[test]
    fn filter_matrix_columns_and_symmetry() {
        let c = baseline();
        let t = build_filter_matrix(0.37 * c.mech.omega_m, &c);
        for r in 0..4 {
            assert_eq!(t[(r, 0)], Complex64::new(0.0, 0.0));
            assert_eq!(t[(r, 1)], Complex64::new(0.0, 0.0));
        }
        // Mode-B rows are mode-A rows with a → b.
        let mut swapped = c;
        swapped.mode_b = c.mode_a;
        swapped.filter_b = c.filter_a;
        let t = build_filter_matrix(1.3e7, &swapped);
        for r in 0..2 {
            for k in 0..2 {
                assert_eq!(t[(r, 2 + k)], t[(r + 2, 4 + k)]);
            }
        }
    }

    #[test]
    fn decoupled_outputs_are_vacuum() {
        let mut p = EntanglerParams::baseline();
        p.mode_a.effective_coupling = Some(0.0);
        p.mode_b.effective_coupling = Some(0.0);
        let v = output_covariance(&p.build().unwrap()).unwrap();
        let diff = v.matrix() - nalgebra::Matrix4::identity() * 0.5;
        assert!(diff.amax() < 1e-8, "{v:?}");
    }

    #[test]
    fn baseline_is_entangled_and_physical() {
        let r = output_covariance_with(&baseline(), &QuadratureOptions::default()).unwrap();
        assert!(log_negativity(&r.cov).unwrap() > 0.5);
        assert!(r.imaginary_ratio < 1e-8);
    }

    #[test]
    fn unstable_config_is_rejected() {
        let mut p = EntanglerParams::baseline();
        p.mode_b.effective_coupling = Some(0.5 * p.omega_m);
        let c = p.build().unwrap();
        assert!(matches!(output_covariance(&c), Err(Error::Domain(_))));
    }

    #[test]
    fn validation_names_field() {
        let mut p = EntanglerParams::baseline();
        p.q_m = -1.0;
        match p.build() {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "mech.Q_m"),
            other => panic!("{other:?}"),
        }
    }
}
