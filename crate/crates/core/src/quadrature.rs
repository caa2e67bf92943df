//! Globally adaptive Gauss–Kronrod (10/21 point) quadrature for vector-valued
//! integrands on a finite interval with user-supplied break points.
//!
//! Panels are refined in order of decreasing error estimate; ties are broken
//! by position so the refinement sequence, and therefore the result, is a
//! pure function of the integrand. The final reduction sums panels left to
//! right with Neumaier compensation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Kronrod abscissae on [0, 1); the Gauss nodes are the odd entries.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_015_402_272,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Weights of the embedded 10-point Gauss rule, paired with `XGK[1], XGK[3], ..., XGK[9]`.
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Function evaluations per panel.
pub const POINTS_PER_PANEL: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Target for the summed error estimate of every component.
    pub abs_tol: f64,
    /// Relative target, measured against the largest component of the result.
    pub rel_tol: f64,
    pub max_evaluations: usize,
    /// Each interval between consecutive break points starts out split into
    /// this many equal panels.
    pub initial_subdivision: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-8,
            rel_tol: 0.0,
            max_evaluations: 1 << 20,
            initial_subdivision: 1,
        }
    }
}

impl QuadratureOptions {
    /// Same scheme at twice the resolution: half the tolerance, twice the initial panels.
    pub fn doubled(&self) -> Self {
        Self {
            abs_tol: self.abs_tol / 2.0,
            rel_tol: self.rel_tol / 2.0,
            max_evaluations: self.max_evaluations.saturating_mul(2),
            initial_subdivision: self.initial_subdivision * 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuadratureResult<const N: usize> {
    pub value: [f64; N],
    /// Summed per-panel error estimate of the worst component.
    pub error: f64,
    pub evaluations: usize,
    pub panels: usize,
}

#[derive(Debug, Clone)]
struct Panel<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: f64,
}

impl<const N: usize> PartialEq for Panel<N> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<const N: usize> Eq for Panel<N> {}

impl<const N: usize> PartialOrd for Panel<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<const N: usize> Ord for Panel<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn gauss_kronrod<const N: usize, F>(f: &F, a: f64, b: f64) -> Panel<N>
where
    F: Fn(f64) -> [f64; N],
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = [0.0; N];
    let mut gauss = [0.0; N];
    for c in 0..N {
        kronrod[c] = WGK[10] * fc[c];
    }
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(10).enumerate() {
        let dx = half * x;
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        for c in 0..N {
            let sum = f1[c] + f2[c];
            kronrod[c] += w * sum;
            if j % 2 == 1 {
                gauss[c] += WG[j / 2] * sum;
            }
        }
    }
    let mut error: f64 = 0.0;
    for c in 0..N {
        kronrod[c] *= half;
        gauss[c] *= half;
        error = error.max((kronrod[c] - gauss[c]).abs());
    }
    Panel {
        a,
        b,
        value: kronrod,
        error,
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Integrates `f` over `[breakpoints[0], breakpoints[last]]`.
///
/// `breakpoints` must be strictly increasing and contain at least two points.
pub fn integrate<const N: usize, F>(
    f: F,
    breakpoints: &[f64],
    opts: &QuadratureOptions,
) -> Result<QuadratureResult<N>>
where
    F: Fn(f64) -> [f64; N],
{
    if breakpoints.len() < 2 || breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain(
            "quadrature break points must be strictly increasing".into(),
        ));
    }
    let sub = opts.initial_subdivision.max(1);
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in breakpoints.windows(2) {
        let h = (w[1] - w[0]) / sub as f64;
        for k in 0..sub {
            let a = w[0] + h * k as f64;
            let b = if k + 1 == sub { w[1] } else { a + h };
            heap.push(gauss_kronrod(&f, a, b));
            evaluations += POINTS_PER_PANEL;
        }
    }

    let total_error = |heap: &BinaryHeap<Panel<N>>| compensated_sum(heap.iter().map(|p| p.error));
    let magnitude = |heap: &BinaryHeap<Panel<N>>| {
        (0..N)
            .map(|c| compensated_sum(heap.iter().map(|p| p.value[c])).abs())
            .fold(0.0, f64::max)
    };

    loop {
        if heap
            .iter()
            .any(|p| !p.error.is_finite() || p.value.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::numerical(
                "integrand is not finite on the integration range",
            ));
        }
        let err = total_error(&heap);
        let target = opts.abs_tol.max(opts.rel_tol * magnitude(&heap));
        if err <= target {
            break;
        }
        if evaluations + 2 * POINTS_PER_PANEL > opts.max_evaluations {
            return Err(Error::Numerical {
                message: format!(
                    "adaptive quadrature did not converge within {evaluations} evaluations"
                ),
                residual: Some(err),
            });
        }
        let worst = heap.pop().expect("at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        if !(worst.a < mid && mid < worst.b) {
            return Err(Error::Numerical {
                message: format!(
                    "panel [{:e}, {:e}] cannot be subdivided further",
                    worst.a, worst.b
                ),
                residual: Some(err),
            });
        }
        heap.push(gauss_kronrod(&f, worst.a, mid));
        heap.push(gauss_kronrod(&f, mid, worst.b));
        evaluations += 2 * POINTS_PER_PANEL;
    }

    let mut panels = heap.into_vec();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut value = [0.0; N];
    for (c, v) in value.iter_mut().enumerate() {
        *v = compensated_sum(panels.iter().map(|p| p.value[c]));
    }
    let error = compensated_sum(panels.iter().map(|p| p.error));
    Ok(QuadratureResult {
        value,
        error,
        evaluations,
        panels: panels.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_are_normalized() {
        let k = 2.0 * WGK[..10].iter().sum::<f64>() + WGK[10];
        let g = 2.0 * WG.iter().sum::<f64>();
        assert!((k - 2.0).abs() < 1e-15);
        assert!((g - 2.0).abs() < 1e-15);
    }

    #[test]
    fn polynomial_exactness() {
        // Kronrod-21 integrates degree 31 exactly, Gauss-10 degree 19.
        for deg in [0, 5, 19, 30, 31] {
            let p = gauss_kronrod(&|x: f64| [x.powi(deg)], -1.0, 1.0);
            let exact = if deg % 2 == 1 {
                0.0
            } else {
                2.0 / (deg as f64 + 1.0)
            };
            assert!((p.value[0] - exact).abs() < 1e-14, "degree {deg}");
            if deg <= 19 {
                assert!(p.error < 1e-14, "degree {deg}");
            }
        }
    }

    #[test]
    fn narrow_lorentzian() {
        let width = 1e-4;
        let f = |x: f64| [width / std::f64::consts::PI / (x * x + width * width)];
        let opts = QuadratureOptions {
            abs_tol: 1e-12,
            ..Default::default()
        };
        let r = integrate(f, &[-1.0, 0.0, 1.0], &opts).unwrap();
        let exact = 2.0 / std::f64::consts::PI * (1.0 / width).atan();
        assert!((r.value[0] - exact).abs() < 1e-11);
    }

    #[test]
    fn evaluation_cap_reports_residual() {
        let f = |x: f64| [1.0 / x.abs().sqrt()];
        let opts = QuadratureOptions {
            abs_tol: 1e-14,
            max_evaluations: 2_000,
            ..Default::default()
        };
        match integrate(f, &[-1.0, 0.7], &opts) {
            Err(Error::Numerical {
                residual: Some(r), ..
            }) => assert!(r > 0.0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        assert!(integrate(
            |x: f64| [1.0 / x],
            &[-1.0, 1.0],
            &QuadratureOptions::default()
        )
        .is_err());
    }

    #[test]
    fn rejects_bad_breakpoints() {
        assert!(integrate(|x| [x], &[1.0, 0.0], &QuadratureOptions::default()).is_err());
    }
}
