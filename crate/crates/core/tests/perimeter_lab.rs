use kfp_core::fractional::FracQuadSpec;
use kfp_core::mc::McConfig;
use kfp_core::operator::{catalog, catalog_from_str};
use kfp_core::perimeter::{
    bbm_upper_bound, frac_perimeter, heat_content_deficit, heat_content_deficit_direct, interpolation_bound, iso_ratio_sweep,
    perbelow_gap, upper_bound_rhs, Interpolant, RegimeCase, TwoRegime,
};
use kfp_core::region::Region;
use kfp_core::KfpError;
use proptest::prelude::*;
use statrs::function::erf::erf;
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

const SEED: u64 = 0x9E41;

/// (s, perimeter of (0,1), deficit-based upper bound) for d²/dx², frozen.
const UNIT_INTERVAL: [(f64, f64, f64); 4] = [
    (0.25, 3.1915382, 3.4673982),
    (0.4, 7.0489613, 7.3962789),
    (0.45, 13.438688, 13.796369),
    (0.49, 64.39078, 64.751895),
];

/// ‖(-d²/dx²)^s 1_{(0,1)}‖₁ from the Gagliardo form: 2 C_{1,s} / (s(1 - 2s)),
/// C_{1,s} = 4^s Γ(1/2 + s) / (√π |Γ(-s)|).
fn gagliardo_interval(s: f64) -> f64 {
    let c = 4f64.powf(s) * gamma(0.5 + s) / (PI.sqrt() * gamma(-s).abs());
    2.0 * c / (s * (1.0 - 2.0 * s))
}

/// ‖P_t 1_{(0,1)} - 1_{(0,1)}‖₁ for the heat kernel of variance 2t.
fn interval_deficit(t: f64) -> f64 {
    let sg = (2.0 * t).sqrt();
    let inside = erf(1.0 / (sg * 2f64.sqrt())) - 2.0 * sg / (2.0 * PI).sqrt() * (1.0 - (-1.0 / (2.0 * sg * sg)).exp());
    2.0 * (1.0 - inside)
}

fn unit_interval() -> Region {
    Region::boxed(vec![0.0], vec![1.0]).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn frozen_values_match_closed_forms() {
    let sup = 4.0 / PI.sqrt();
    for (s, per, ub) in UNIT_INTERVAL {
        assert!(rel(gagliardo_interval(s), per) < 1e-7, "s={s}");
        assert!(rel(upper_bound_rhs(1.0, s, sup), ub) < 1e-7, "s={s}");
        assert!(per <= ub);
    }
}

#[test]
fn rescaled_perimeter_approaches_its_limit() {
    // (1/2 - s)·per decreases towards sup (4πτ)^{-1/2}·deficit = 2/π as s → 1/2.
    let scaled: Vec<f64> = UNIT_INTERVAL.iter().map(|(s, p, _)| (0.5 - s) * p).collect();
    assert!(scaled.windows(2).all(|w| w[1] < w[0]));
    assert!(scaled.iter().all(|v| *v > 2.0 / PI));
    assert!(scaled[3] - 2.0 / PI < 0.01);
}

#[test]
fn interval_perimeter_by_sampling() {
    let spec = catalog("laplace", 1).unwrap();
    for (k, (s, per, _)) in UNIT_INTERVAL[..2].iter().enumerate() {
        let q = FracQuadSpec { panels_per_decade: 2, ..FracQuadSpec::new(*s) };
        let p = frac_perimeter(&spec, &unit_interval(), &q, &McConfig::new(10_000, SEED).derive(k as u64)).unwrap();
        assert!((p.value - per).abs() <= 4.0 * p.total_error(), "s={s}: {} vs {per} (err {})", p.value, p.total_error());
        assert!((p.near_exponent - 0.5).abs() < 0.05, "near exponent {}", p.near_exponent);
    }
}

#[test]
fn deficit_of_the_interval() {
    let spec = catalog("laplace", 1).unwrap();
    for (k, t) in [1e-3, 0.05, 1.0].into_iter().enumerate() {
        let want = interval_deficit(t);
        let a = heat_content_deficit(&spec, &unit_interval(), t, &McConfig::new(40_000, SEED).derive(10 + k as u64)).unwrap();
        let b = heat_content_deficit_direct(&spec, &unit_interval(), t, &McConfig::new(40_000, SEED).derive(20 + k as u64)).unwrap();
        assert!((a.value - want).abs() <= 4.0 * a.std_error, "t={t}: {} vs {want}", a.value);
        assert!((b.value - want).abs() <= 4.0 * b.std_error, "t={t}: {} vs {want}", b.value);
    }
    // Short-time asymptote 4√(t/π).
    let t = 1e-4;
    assert!(rel(interval_deficit(t), 4.0 * (t / PI).sqrt()) < 1e-4);
}

#[test]
fn deficit_routes_agree_for_the_kolmogorov_ball() {
    let spec = catalog("kolmogorov", 1).unwrap();
    let e = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
    for (k, t) in [0.05, 0.5].into_iter().enumerate() {
        let a = heat_content_deficit(&spec, &e, t, &McConfig::new(20_000, SEED).derive(30 + k as u64)).unwrap();
        let b = heat_content_deficit_direct(&spec, &e, t, &McConfig::new(20_000, SEED).derive(40 + k as u64)).unwrap();
        assert!(a.z_score(&b) < 4.0, "t={t}: {} vs {}", a.value, b.value);
    }
}

#[test]
fn deficit_lower_bound() {
    for (k, name) in ["laplace:2", "kolmogorov:1", "kramers"].into_iter().enumerate() {
        let spec = catalog_from_str(name).unwrap();
        let e = Region::ball(vec![0.0; 2], 1.0).unwrap();
        for (j, t) in [0.1, 1.0].into_iter().enumerate() {
            let g = perbelow_gap(&spec, &e, t, &McConfig::new(5_000, SEED).derive(50 + 10 * k as u64 + j as u64)).unwrap();
            assert!(g.ok, "{name} t={t}: {g:?}");
        }
    }
}

#[test]
fn perimeter_scales_under_adapted_dilation() {
    // λ ↦ (λ, λ³) maps kolmogorov(1) to itself up to time scaling λ², so per_s ∝ |E|^{(4-2s)/4}.
    let spec = catalog("kolmogorov", 1).unwrap();
    let base = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
    let family: Vec<Region> = [0.7f64, 1.4].iter().map(|&l| base.scaled(&[l, l.powi(3)]).unwrap()).collect();
    let q = FracQuadSpec { panels_per_decade: 2, ..FracQuadSpec::new(0.25) };
    let r = iso_ratio_sweep(&spec, &family, &q, &McConfig::new(6_000, SEED)).unwrap();
    assert!(r.max_z < 4.0, "{r:?}");
}

#[test]
fn upper_bound_for_the_interval() {
    let spec = catalog("laplace", 1).unwrap();
    let q = FracQuadSpec { panels_per_decade: 2, ..FracQuadSpec::new(0.4) };
    let r = bbm_upper_bound(&spec, &unit_interval(), &q, &McConfig::new(8_000, SEED)).unwrap();
    assert!(r.ok, "{r:?}");
    assert!(rel(r.sup_scaled_deficit, 4.0 / PI.sqrt()) < 0.05, "{}", r.sup_scaled_deficit);
}

#[test]
fn bound_holds_for_the_kolmogorov_ball() {
    let spec = catalog("kolmogorov", 1).unwrap();
    let e = Region::ball(vec![0.0, 0.0], 1.0).unwrap();
    let q = FracQuadSpec { panels_per_decade: 2, ..FracQuadSpec::new(0.25) };
    let p = frac_perimeter(&spec, &e, &q, &McConfig::new(6_000, SEED)).unwrap();
    let r = interpolation_bound(&spec, e.measure(), 0.25, p.value - 4.0 * p.total_error()).unwrap();
    assert!(r.bound_holds && e.measure() <= r.h_value, "{r:?}");
    assert!(rel(r.t_star, r.t_numeric) < 1e-6);
}

#[test]
fn all_three_cases_are_reached() {
    let s = 0.25;
    let two = TwoRegime { d0: 4.0, dinf: 2.0, s, c1: 2.0 / gamma(1.0 + s), c2: 1.0 };
    let c = two.c();
    let cases: Vec<RegimeCase> = [2.0 * c * 4.0, c * 8f64.sqrt(), c]
        .into_iter()
        .map(|per| two.evaluate(1.0, per).unwrap().case)
        .collect();
    assert_eq!(cases, vec![RegimeCase::Small, RegimeCase::Middle, RegimeCase::Large]);
    let o = two.evaluate(1.0, c * 8f64.sqrt()).unwrap();
    assert_eq!(o.time, 1.0);
    assert!(o.implied_constant > 0.0 && o.implied_constant <= 1.0 / o.case_constant * (1.0 + 1e-12));
}

#[test]
fn vanishing_perimeter_is_a_contradiction() {
    let spec = catalog("laplace", 2).unwrap();
    assert!(matches!(interpolation_bound(&spec, 1.0, 0.25, 0.0), Err(KfpError::Contradiction(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn minimizer_closed_form(
        c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, dim in 0.0f64..1.0,
        s in 0.05f64..0.95, measure in -3.0f64..3.0, per in -2.0f64..2.0,
    ) {
        let h = Interpolant {
            c1: 10f64.powf(c1), c2: 10f64.powf(c2), dim: 10f64.powf(dim), s,
            measure: 10f64.powf(measure), per: 10f64.powf(per),
        };
        let t = h.argmin();
        // H'(t) = 0: s c1 per t^s = (D/2) c2 |E|² t^{-D/2}.
        let lhs = h.s * h.c1 * h.per * t.powf(h.s);
        let rhs = h.dim / 2.0 * h.c2 * h.measure * h.measure * t.powf(-h.dim / 2.0);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs);
        prop_assert!(rel(h.argmin_numeric(), t) < 1e-6);
        prop_assert!(h.eval(t) <= h.eval(t * 1.01) && h.eval(t) <= h.eval(t / 1.01));
    }
}
