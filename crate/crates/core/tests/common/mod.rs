//! Random physical states shared by the property suites.
#![allow(dead_code)]

use cvrelay::gaussian::CovarianceMatrix4;
use nalgebra::{Matrix2, Matrix4, Vector4};
use proptest::prelude::*;
use rand::Rng;

fn embed(a: Matrix2<f64>, b: Matrix2<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&a);
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(&b);
    m
}

fn rot(t: f64) -> Matrix2<f64> {
    let (s, c) = t.sin_cos();
    Matrix2::new(c, -s, s, c)
}

fn squeeze(r: f64) -> Matrix2<f64> {
    Matrix2::new(r.exp(), 0.0, 0.0, (-r).exp())
}

fn beam_splitter(t: f64) -> Matrix4<f64> {
    let (s, c) = t.sin_cos();
    let i = Matrix2::identity();
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&(i * c));
    m.fixed_view_mut::<2, 2>(0, 2).copy_from(&(i * s));
    m.fixed_view_mut::<2, 2>(2, 0).copy_from(&(i * -s));
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(&(i * c));
    m
}

fn two_mode_squeezer(r: f64) -> Matrix4<f64> {
    let z = Matrix2::new(1.0, 0.0, 0.0, -1.0);
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0)
        .copy_from(&(Matrix2::identity() * r.cosh()));
    m.fixed_view_mut::<2, 2>(0, 2).copy_from(&(z * r.sinh()));
    m.fixed_view_mut::<2, 2>(2, 0).copy_from(&(z * r.sinh()));
    m.fixed_view_mut::<2, 2>(2, 2)
        .copy_from(&(Matrix2::identity() * r.cosh()));
    m
}

#[derive(Debug, Clone)]
pub struct Draw {
    pub nu: (f64, f64),
    pub angles: [f64; 6],
    pub squeezes: [f64; 3],
}

pub fn draws() -> impl Strategy<Value = Draw> {
    (
        (0.5f64..4.0, 0.5f64..4.0),
        prop::array::uniform6(0.0f64..std::f64::consts::TAU),
        (-1.0f64..1.0, -1.0f64..1.0, 0.0f64..1.5),
    )
        .prop_map(|(nu, angles, (s1, s2, r))| Draw {
            nu,
            angles,
            squeezes: [s1, s2, r],
        })
}

/// `V = S diag(ν₁, ν₁, ν₂, ν₂) Sᵀ` for a symplectic `S` built from local
/// rotations and squeezers, a beam splitter and a two-mode squeezer.
pub fn random_state(d: &Draw) -> CovarianceMatrix4 {
    let a = d.angles;
    let s = embed(rot(a[0]), rot(a[1]))
        * two_mode_squeezer(d.squeezes[2])
        * embed(
            squeeze(d.squeezes[0]) * rot(a[2]),
            squeeze(d.squeezes[1]) * rot(a[3]),
        )
        * beam_splitter(a[4])
        * embed(rot(a[5]), Matrix2::identity());
    let w = Matrix4::from_diagonal(&Vector4::new(d.nu.0, d.nu.0, d.nu.1, d.nu.1));
    let v = s * w * s.transpose();
    CovarianceMatrix4::new((v + v.transpose()) * 0.5).unwrap()
}

/// Same distribution as [`draws`], from a plain RNG for large loops.
pub fn draw_with(rng: &mut impl Rng) -> Draw {
    let tau = std::f64::consts::TAU;
    Draw {
        nu: (rng.gen_range(0.5..4.0), rng.gen_range(0.5..4.0)),
        angles: std::array::from_fn(|_| rng.gen_range(0.0..tau)),
        squeezes: [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.0..1.5),
        ],
    }
}

/// Moderately squeezed draws, so that quadrature oracles stay cheap.
pub fn mild_draw_with(rng: &mut impl Rng) -> Draw {
    let tau = std::f64::consts::TAU;
    Draw {
        nu: (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)),
        angles: std::array::from_fn(|_| rng.gen_range(0.0..tau)),
        squeezes: [
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(0.0..1.0),
        ],
    }
}
