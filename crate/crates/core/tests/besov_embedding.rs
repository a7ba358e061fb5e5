use kfp_core::besov::{besov_seminorm, coarea_residual, layercake_check, sobolev_ratio, LevelSetProfile};
use kfp_core::field::ScalarField;
use kfp_core::fractional::FracQuadSpec;
use kfp_core::matlin::SquareMatrix;
use kfp_core::mc::McConfig;
use kfp_core::operator::catalog;
use kfp_core::perimeter::frac_perimeter;
use kfp_core::quad::{integrate, integrate_to_infinity};
use kfp_core::region::Region;
use kfp_core::KfpError;
use proptest::prelude::*;
use statrs::function::erf::erf;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

const SEED: u64 = 0xBE50;

/// 𝒩_{2s,1}(e^{-x²/2}) for d²/dx² as 2∫₀^∞ K(u) g(u) du with
/// K(u) = ∫ t^{-1-s} (4πt)^{-1/2} e^{-u²/4t} dt = (4π)^{-1/2} Γ(s+1/2) (u²/4)^{-s-1/2}
/// and g(u) = ∫|f(x+u) - f(x)| dx = 2√(2π) erf(u/(2√2)).
fn gaussian_oracle(s: f64) -> f64 {
    let k = |u: f64| (4.0 * PI).powf(-0.5) * gamma(s + 0.5) * (u * u / 4.0).powf(-s - 0.5);
    let g = |u: f64| 2.0 * (2.0 * PI).sqrt() * erf(u / (2.0 * 2f64.sqrt()));
    // u = v² removes the u^{-2s} singularity at 0
    let near = integrate(|v| if v == 0.0 { 0.0 } else { 2.0 * v * k(v * v) * g(v * v) }, 0.0, 1.0, 1e-13, 1e-12).value;
    let far = integrate_to_infinity(|u| k(u) * g(u), 1.0, 1e-13, 1e-12).value;
    2.0 * (near + far)
}

fn quad(s: f64) -> FracQuadSpec {
    FracQuadSpec { near_decades: 8, panels_per_decade: 2, ..FracQuadSpec::new(s) }
}

#[test]
fn oracle_value_is_frozen() {
    assert!((gaussian_oracle(0.25) - 23.847201).abs() < 1e-5, "{}", gaussian_oracle(0.25));
}

#[test]
fn seminorm_of_a_gaussian() {
    let spec = catalog("laplace", 1).unwrap();
    let f = ScalarField::standard_gaussian(1);
    let want = gaussian_oracle(0.25);
    let e = besov_seminorm(&spec, &f, 0.5, &quad(0.25), &McConfig::new(8_000, SEED)).unwrap();
    assert!((e.value - want).abs() <= 4.0 * e.total_error(), "{} vs {want} (err {})", e.value, e.total_error());
}

#[test]
fn seminorm_is_absolutely_homogeneous() {
    let spec = catalog("kolmogorov", 1).unwrap();
    let f = ScalarField::gaussian(vec![0.1, 0.0], SquareMatrix::diag(&[0.6, 0.4]), 1.0).unwrap();
    let cfg = McConfig::new(3_000, SEED);
    let a = besov_seminorm(&spec, &f, 0.5, &quad(0.25), &cfg).unwrap();
    for c in [3.0, -0.5] {
        let b = besov_seminorm(&spec, &f.scaled(c), 0.5, &quad(0.25), &cfg).unwrap();
        // The far cutoff follows an absolute tolerance, so the two runs use different
        // time nodes and agree only within their errors.
        let budget = 4.0 * (b.total_error() + c.abs() * a.total_error());
        assert!((b.value - c.abs() * a.value).abs() <= budget, "c={c}: {} vs {}", b.value, c.abs() * a.value);
    }
}

#[test]
fn zero_field_has_zero_seminorm() {
    let spec = catalog("laplace", 2).unwrap();
    let e = besov_seminorm(&spec, &ScalarField::constant(2, 0.0), 0.5, &quad(0.25), &McConfig::new(100, SEED)).unwrap();
    assert_eq!(e.value, 0.0);
}

#[test]
fn order_must_lie_in_the_unit_interval() {
    let spec = catalog("laplace", 1).unwrap();
    let f = ScalarField::standard_gaussian(1);
    let r = besov_seminorm(&spec, &f, 1.2, &quad(0.25), &McConfig::new(100, SEED));
    assert!(matches!(r, Err(KfpError::Domain(_))));
}

#[test]
fn indicator_seminorm_is_a_multiple_of_the_perimeter() {
    let spec = catalog("laplace", 1).unwrap();
    let e = Region::boxed(vec![0.0], vec![1.0]).unwrap();
    let s = 0.25;
    let nb = besov_seminorm(&spec, &ScalarField::indicator(e.clone()), 2.0 * s, &quad(s), &McConfig::new(8_000, SEED)).unwrap();
    let p = frac_perimeter(&spec, &e, &quad(s), &McConfig::new(8_000, SEED + 1)).unwrap();
    let c = gamma(1.0 - s) / s;
    let gap = (nb.value - c * p.value).abs();
    assert!(gap <= 4.0 * (nb.total_error() + c * p.total_error()), "{} vs {}", nb.value, c * p.value);
}

#[test]
fn coarea_for_a_one_dimensional_bump() {
    let spec = catalog("laplace", 1).unwrap();
    let prof = LevelSetProfile::new(ScalarField::bump(vec![0.0], SquareMatrix::identity(1), 1.0, 3).unwrap()).unwrap();
    let r = coarea_residual(&spec, &prof, 0.25, 16, &quad(0.25), &McConfig::new(3_000, SEED)).unwrap();
    assert!(r.residual < 0.05, "{} vs {}", r.lhs.value, r.rhs);
    let mut levels = r.levels.clone();
    levels.sort_by(|a, b| a.sigma.total_cmp(&b.sigma));
    assert!(levels.windows(2).all(|w| w[1].measure <= w[0].measure));
}

#[test]
fn sobolev_embedding_for_a_kolmogorov_bump() {
    let spec = catalog("kolmogorov", 1).unwrap();
    let prof = LevelSetProfile::new(ScalarField::bump(vec![0.0, 0.0], SquareMatrix::diag(&[1.0, 4.0]), 1.0, 3).unwrap()).unwrap();
    let r = sobolev_ratio(&spec, &prof, 0.25, &quad(0.25), &McConfig::new(3_000, SEED)).unwrap();
    assert!(r.ok, "{r:?}");
    assert!(r.split.is_none());
}

#[test]
fn sobolev_embedding_splits_for_two_regimes() {
    let spec = catalog("kramers", 0).unwrap();
    let prof = LevelSetProfile::new(ScalarField::bump(vec![0.0, 0.0], SquareMatrix::diag(&[0.25, 0.25]), 1.0, 3).unwrap()).unwrap();
    let r = sobolev_ratio(&spec, &prof, 0.25, &quad(0.25), &McConfig::new(3_000, SEED)).unwrap();
    assert!(r.ok, "{r:?}");
    let sp = r.split.expect("two volume regimes");
    assert!(sp.q_small < sp.q_large);
}

#[test]
fn layercake_on_a_step() {
    // G = 1 on [0, 1): both sides equal 1.
    let lc = layercake_check(&[(0.0, 1.0), (1.0, 1.0), (1.0, 0.0)], 3.0, 0.4).unwrap();
    assert!((lc.lhs - 1.0).abs() < 1e-12 && (lc.rhs - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn layercake_for_non_increasing_profiles(
        steps in prop::collection::vec((0.01f64..2.0, 0.0f64..1.0), 1..8),
        d in 1.0f64..8.0,
        frac in 0.05f64..0.95,
    ) {
        let s = frac * d / 2.0;
        let mut knots = vec![(0.0, 1.0)];
        let (mut t, mut g) = (0.0, 1.0);
        for (dt, drop) in steps {
            t += dt;
            g *= 1.0 - drop;
            knots.push((t, g));
        }
        knots.push((t + 1.0, 0.0));
        let lc = layercake_check(&knots, d, s).unwrap();
        prop_assert!(lc.ok, "{lc:?}");
    }
}
