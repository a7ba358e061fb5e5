use kfp_core::field::ScalarField;
use kfp_core::matlin::SquareMatrix;
use kfp_core::mc::McConfig;
use kfp_core::operator::{catalog, covariance, kernel_constant};
use kfp_core::semigroup::{apply_adjoint, apply_semigroup, chapman_kolmogorov_residual, lp_distance, ultracontractive_ratio, Sampler, Trajectory};
use kfp_core::KfpError;

const SEED: u64 = 0x5EED_0001;

fn z(value: f64, se: f64, want: f64) -> f64 {
    (value - want).abs() / se.max(1e-300)
}

#[test]
fn heat_flow_of_a_gaussian() {
    // P_t e^{-x²/2} = (1 + 2t)^{-1/2} exp(-x²/(2(1 + 2t))) for d²/dx².
    let spec = catalog("laplace", 1).unwrap();
    let f = ScalarField::standard_gaussian(1);
    for (k, (x, t)) in [(0.0f64, 0.1f64), (0.7, 1.0), (-1.2, 3.0)].into_iter().enumerate() {
        let want = (1.0 + 2.0 * t).powf(-0.5) * (-x * x / (2.0 * (1.0 + 2.0 * t))).exp();
        let e = apply_semigroup(&spec, &f, &[x], t, &McConfig::new(20_000, SEED).derive(k as u64)).unwrap();
        assert!(z(e.value, e.std_error, want) < 4.0, "x={x} t={t}: {} vs {want}", e.value);
        let exact = f.evolve(&spec, t).unwrap().eval(&[x]);
        assert!((exact - want).abs() < 1e-13);
    }
}

#[test]
fn ou_adjoint_of_a_gaussian() {
    // B = -1, Q = 1: the first-argument law is Y = e^{t}(x - ξ), ξ ~ N(0, 1 - e^{-2t}), with mass e^{t}.
    let spec = catalog("ornstein_uhlenbeck", 1).unwrap();
    let f = ScalarField::standard_gaussian(1);
    for (k, (x, t)) in [(0.2f64, 0.3f64), (-0.5, 1.0)].into_iter().enumerate() {
        let a = (2.0f64 * t).exp();
        let v = -(-2.0f64 * t).exp_m1();
        let want = t.exp() * (1.0 + a * v).powf(-0.5) * (-a * x * x / (2.0 * (1.0 + a * v))).exp();
        let e = apply_adjoint(&spec, &f, &[x], t, &McConfig::new(20_000, SEED).derive(10 + k as u64)).unwrap();
        assert!(z(e.value, e.std_error, want) < 4.0, "x={x} t={t}: {} vs {want}", e.value);
    }
}

#[test]
fn closed_form_evolution_matches_sampling() {
    let spec = catalog("kolmogorov", 1).unwrap();
    let f = ScalarField::gaussian(vec![0.2, -0.1], SquareMatrix::diag(&[0.5, 0.8]), 1.5).unwrap();
    for (k, t) in [0.05, 0.5, 2.0].into_iter().enumerate() {
        let x = [0.1, 0.3];
        let want = f.evolve(&spec, t).unwrap().eval(&x);
        let e = apply_semigroup(&spec, &f, &x, t, &McConfig::new(20_000, SEED).derive(20 + k as u64)).unwrap();
        assert!(z(e.value, e.std_error, want) < 4.0, "t={t}");
    }
}

#[test]
fn constants_and_linear_functions() {
    let spec = catalog("kramers", 0).unwrap();
    let c = ScalarField::constant(2, 2.5);
    let e = apply_semigroup(&spec, &c, &[0.3, 0.1], 1.0, &McConfig::new(1_000, SEED)).unwrap();
    assert!((e.value - 2.5).abs() < 1e-12);
    // P_t <a, ·>(X) = <a, e^{tB} X>.
    let lin = ScalarField::linear(vec![1.0, -2.0], 0.5);
    let t = 0.7;
    let mean = covariance(&spec, t).unwrap().mean(&[0.3, 0.1]);
    let want = mean[0] - 2.0 * mean[1] + 0.5;
    assert!((lin.evolve(&spec, t).unwrap().eval(&[0.3, 0.1]) - want).abs() < 1e-12);
}

#[test]
fn chapman_kolmogorov() {
    for (k, name) in ["kolmogorov", "kramers"].into_iter().enumerate() {
        let spec = catalog(name, 1).unwrap();
        let f = ScalarField::gaussian(vec![0.0, 0.5], SquareMatrix::diag(&[1.0, 0.3]), 1.0).unwrap();
        let (zs, _, _) = chapman_kolmogorov_residual(&spec, &f, &[0.2, -0.2], 0.3, 0.4, &McConfig::new(10_000, SEED).derive(30 + k as u64)).unwrap();
        assert!(zs < 4.0, "{name}: z = {zs}");
    }
}

#[test]
fn ultracontractivity() {
    let spec = catalog("kolmogorov", 1).unwrap();
    let f = ScalarField::gaussian(vec![0.0, 0.0], SquareMatrix::diag(&[0.2, 0.2]), 1.0).unwrap();
    for (k, t) in [0.1, 1.0, 5.0].into_iter().enumerate() {
        let r = ultracontractive_ratio(&spec, &f, &[0.0, 0.0], t, &McConfig::new(10_000, SEED).derive(40 + k as u64)).unwrap();
        assert!(r.value <= kernel_constant(2) + 4.0 * r.std_error, "t={t}");
    }
}

#[test]
fn lp_distance_of_shifted_gaussians() {
    // ‖f - g‖₂² for two unit gaussians at distance d in 1D: 2√π (1 - e^{-d²/4}).
    let f = ScalarField::standard_gaussian(1);
    let g = ScalarField::gaussian(vec![1.0], SquareMatrix::identity(1), 1.0).unwrap();
    let want = (2.0 * std::f64::consts::PI.sqrt() * (1.0 - (-0.25f64).exp())).sqrt();
    let e = lp_distance(&f, &g, 2, &Sampler::Auto, &McConfig::new(40_000, SEED)).unwrap();
    assert!(z(e.value, e.std_error, want) < 4.0, "{} vs {want}", e.value);
}

#[test]
fn trajectory_is_unbiased_along_the_path() {
    let spec = catalog("laplace", 1).unwrap();
    let f = ScalarField::standard_gaussian(1);
    let times = [1e-3f64, 0.1, 1.0, 10.0, 100.0];
    let traj = Trajectory::new(&spec, &f, &[0.4], &times).unwrap();
    let rows: Vec<Vec<f64>> = (0..times.len()).map(|i| (0..times.len()).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let est = traj.functionals(&rows, &McConfig::new(20_000, SEED)).unwrap();
    for (e, t) in est.iter().zip(times) {
        let want = (1.0 + 2.0 * t).powf(-0.5) * (-0.16 / (2.0 * (1.0 + 2.0 * t))).exp();
        assert!(z(e.value, e.std_error, want) < 4.0, "t={t}: {} vs {want}", e.value);
    }
}

#[test]
fn repeatable_for_fixed_seed_and_workers() {
    let spec = catalog("kolmogorov", 1).unwrap();
    let f = ScalarField::standard_gaussian(2);
    let run = |w| apply_semigroup(&spec, &f, &[0.1, 0.2], 0.5, &McConfig::new(5_000, 9).with_workers(w)).unwrap();
    assert_eq!(run(1).value.to_bits(), run(1).value.to_bits());
    assert_eq!(run(4).value.to_bits(), run(4).value.to_bits());
}

#[test]
fn invalid_inputs() {
    let spec = catalog("laplace", 1).unwrap();
    let f = ScalarField::standard_gaussian(1);
    assert!(apply_semigroup(&spec, &f, &[0.0], 1.0, &McConfig::new(0, SEED)).is_err());
    assert!(matches!(apply_semigroup(&spec, &f, &[0.0], -1.0, &McConfig::new(10, SEED)), Err(KfpError::Domain(_))));
}
