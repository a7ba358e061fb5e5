use kfp_core::field::ScalarField;
use kfp_core::fractional::{
    additivity_residual, balakrishnan_apply, ell_kernel, ell_l1, inversion_residual, ledoux_check, riesz_apply, FracQuadSpec,
};
use kfp_core::matlin::SquareMatrix;
use kfp_core::mc::McConfig;
use kfp_core::operator::catalog;
use kfp_core::quad::integrate_to_infinity;
use kfp_core::KfpError;
use proptest::prelude::*;
use statrs::function::erf::erf;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

const SEED: u64 = 0xF4AC;

/// (-d²/dx²)^s e^{-x²/2} through the Fourier multiplier |ξ|^{2s}.
fn fourier(s: f64, x: f64) -> f64 {
    let g = |xi: f64| xi.powf(2.0 * s) * (-xi * xi / 2.0).exp() * (x * xi).cos();
    2.0 / (2.0 * PI).sqrt() * integrate_to_infinity(g, 0.0, 1e-13, 1e-12).value
}

fn cheap(s: f64) -> FracQuadSpec {
    FracQuadSpec { near_decades: 6, panels_per_decade: 2, ..FracQuadSpec::new(s) }
}

#[test]
fn fourier_oracle_at_the_origin() {
    // At x = 0 the multiplier integral is 2^s Γ(s + 1/2)/√π.
    for s in [0.25, 0.5, 0.75] {
        let closed = 2f64.powf(s) * gamma(s + 0.5) / PI.sqrt();
        assert!((fourier(s, 0.0) - closed).abs() < 1e-10 * closed);
    }
}

#[test]
fn fractional_laplacian_of_a_gaussian() {
    let spec = catalog("laplace", 1).unwrap();
    let f = ScalarField::standard_gaussian(1);
    for (k, (s, x)) in [(0.25, 0.0), (0.5, 0.4), (0.75, 0.2)].into_iter().enumerate() {
        let r = balakrishnan_apply(&spec, &f, &[x], &cheap(s), &McConfig::new(20_000, SEED).derive(k as u64)).unwrap();
        let want = fourier(s, x);
        assert!((r.value - want).abs() <= 4.0 * r.total_error(), "s={s} x={x}: {} vs {want} (err {})", r.value, r.total_error());
    }
}

#[test]
fn newtonian_potential_in_three_dimensions() {
    // ℐ₂ = (-Δ)^{-1}; for e^{-|x|²/2} it is √(π/2) erf(r/√2)/r, equal to 1 at the origin.
    let spec = catalog("laplace", 3).unwrap();
    let f = ScalarField::standard_gaussian(3);
    let q = FracQuadSpec { panels_per_decade: 2, ..FracQuadSpec::new(0.5) };
    for (k, r) in [0.0f64, 0.8].into_iter().enumerate() {
        let want = if r == 0.0 { 1.0 } else { (PI / 2.0).sqrt() * erf(r / 2f64.sqrt()) / r };
        let got = riesz_apply(&spec, &f, &[r, 0.0, 0.0], 2.0, &q, &McConfig::new(20_000, SEED).derive(10 + k as u64)).unwrap();
        assert!((got.value - want).abs() <= 4.0 * got.total_error() + 1e-3, "r={r}: {} vs {want}", got.value);
    }
}

#[test]
fn riesz_potential_diverges_at_the_volume_dimension() {
    let spec = catalog("laplace", 2).unwrap();
    let f = ScalarField::standard_gaussian(2);
    let r = riesz_apply(&spec, &f, &[0.0, 0.0], 2.0, &FracQuadSpec::new(0.5), &McConfig::new(100, SEED));
    assert!(matches!(r, Err(KfpError::DivergentPotential { .. })));
}

#[test]
fn power_of_a_constant_vanishes() {
    let spec = catalog("kolmogorov", 1).unwrap();
    let c = ScalarField::constant(2, 3.0);
    let r = balakrishnan_apply(&spec, &c, &[0.1, 0.1], &FracQuadSpec::new(0.4), &McConfig::new(100, SEED)).unwrap();
    assert_eq!(r.value, 0.0);
}

#[test]
fn order_outside_the_unit_interval() {
    let spec = catalog("laplace", 1).unwrap();
    let f = ScalarField::standard_gaussian(1);
    for s in [0.0, 1.0, -0.2] {
        let r = balakrishnan_apply(&spec, &f, &[0.0], &FracQuadSpec::new(s), &McConfig::new(100, SEED));
        assert!(matches!(r, Err(KfpError::Domain(_))), "s={s}");
    }
}

#[test]
fn inversion_and_additivity() {
    let spec = catalog("kolmogorov", 1).unwrap();
    let f = ScalarField::gaussian(vec![0.2, -0.1], SquareMatrix::diag(&[0.5, 0.8]), 1.0).unwrap();
    let x = [0.1, 0.2];
    let inv = inversion_residual(&spec, &f, &x, 0.3, &McConfig::new(4_000, SEED)).unwrap();
    assert!(inv.residual < 2e-2 && inv.residual_reverse < 2e-2, "{inv:?}");
    let add = additivity_residual(&spec, &f, &x, 0.2, 0.3, &McConfig::new(4_000, SEED)).unwrap();
    assert!(add.residual < 5e-2 && add.residual_reverse < 5e-2, "{add:?}");
}

#[test]
fn ledoux_estimate_holds() {
    let spec = catalog("kolmogorov", 1).unwrap();
    let f = ScalarField::gaussian(vec![0.0, 0.5], SquareMatrix::diag(&[1.0, 0.3]), 2.0).unwrap();
    for (k, (s, t, tau)) in [(0.3, 0.5, 0.2), (0.6, 1.0, 0.1)].into_iter().enumerate() {
        for p in [1, 2] {
            let r = ledoux_check(&spec, &f, s, t, tau, p, &McConfig::new(4_000, SEED).derive(20 + 2 * k as u64 + p as u64)).unwrap();
            assert!(r.ok && r.monotone, "s={s} t={t} tau={tau} p={p}: {r:?}");
        }
    }
}

#[test]
fn ledoux_needs_the_trace_condition() {
    let spec = catalog("ornstein_uhlenbeck", 1).unwrap();
    let f = ScalarField::standard_gaussian(1);
    let r = ledoux_check(&spec, &f, 0.3, 1.0, 0.5, 1, &McConfig::new(100, SEED));
    assert!(matches!(r, Err(KfpError::TraceCondition(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ledoux_kernel_l1_norm(lt in -3.0f64..1.0, ltau in -3.0f64..1.0, s in 0.05f64..0.95) {
        let (t, tau) = (10f64.powf(lt), 10f64.powf(ltau));
        let want = 2.0 * (t - tau).abs().powf(s) / gamma(1.0 + s);
        let got = ell_l1(t, tau, s);
        prop_assert!((got - want).abs() <= 1e-8 * want.max(1e-300), "{got} vs {want}");
    }

    #[test]
    fn ledoux_kernel_is_antisymmetric(sigma in 0.0f64..5.0, t in 0.01f64..3.0, tau in 0.01f64..3.0, s in 0.1f64..0.9) {
        let a = ell_kernel(sigma, t, tau, s);
        let b = ell_kernel(sigma, tau, t, s);
        prop_assert!((a + b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}
