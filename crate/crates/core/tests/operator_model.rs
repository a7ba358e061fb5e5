use kfp_core::matlin::SquareMatrix;
use kfp_core::operator::{
    catalog, catalog_from_str, check_hypoelliptic, covariance, default_time_grid, gramian, gramian_by_quadrature,
    gramian_gap, intrinsic_dimensions, kalman_rank, kernel_density, pseudo_distance, volume, OperatorSpec, Regime,
};
use kfp_core::perimeter::{a_const, b_const, kernel_square_integral};
use kfp_core::KfpError;
use std::f64::consts::PI;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Density of N(mean, cov) in two dimensions, written out by hand.
fn gauss2(mean: [f64; 2], cov: [[f64; 2]; 2], y: [f64; 2]) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let (a, b) = (y[0] - mean[0], y[1] - mean[1]);
    let q = (cov[1][1] * a * a - 2.0 * cov[0][1] * a * b + cov[0][0] * b * b) / det;
    (-q / 2.0).exp() / (2.0 * PI * det.sqrt())
}

#[test]
fn kolmogorov_covariance_in_closed_form() {
    let spec = catalog("kolmogorov", 1).unwrap();
    for t in [0.01, 0.5, 1.0, 7.0] {
        let k = covariance(&spec, t).unwrap().k;
        let want = [[1.0, t / 2.0], [t / 2.0, t * t / 3.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((k.get(i, j) - want[i][j]).abs() < 1e-10 * (1.0 + want[i][j]), "t={t} ({i},{j})");
            }
        }
    }
}

#[test]
fn kolmogorov_density_matches_explicit_gaussian() {
    let spec = catalog("kolmogorov", 1).unwrap();
    let x = [0.3, -0.4];
    for t in [0.2f64, 1.0, 3.0] {
        // Law of (x1 + W, x2 + t x1 + ∫W) with W of variance 2t.
        let mean = [x[0], x[1] + t * x[0]];
        let cov = [[2.0 * t, t * t], [t * t, 2.0 * t.powi(3) / 3.0]];
        for y in [[0.0, 0.0], [0.5, 1.0], [-1.0, 0.2]] {
            let got = kernel_density(&spec, &x, &y, t).unwrap();
            assert!(rel(got, gauss2(mean, cov, y)) < 1e-10, "t={t} y={y:?}");
        }
    }
}

#[test]
fn kramers_density_matches_explicit_gaussian() {
    let spec = catalog("kramers", 0).unwrap();
    let x = [0.1, 0.7];
    let t = 0.8f64;
    // B is the rotation generator, so the mean rotates and the Gramian is ∫ (cos s, sin s)(cos s, sin s)ᵀ ds.
    let mean = [t.cos() * x[0] - t.sin() * x[1], t.sin() * x[0] + t.cos() * x[1]];
    let s2 = (2.0 * t).sin();
    let g = [[t / 2.0 + s2 / 4.0, (1.0 - (2.0 * t).cos()) / 4.0], [(1.0 - (2.0 * t).cos()) / 4.0, t / 2.0 - s2 / 4.0]];
    let cov = [[2.0 * g[0][0], 2.0 * g[0][1]], [2.0 * g[1][0], 2.0 * g[1][1]]];
    for y in [[0.0, 0.0], [0.4, 0.9], [-0.3, 0.1]] {
        let got = kernel_density(&spec, &x, &y, t).unwrap();
        assert!(rel(got, gauss2(mean, cov, y)) < 1e-9);
    }
}

#[test]
fn laplace_density_is_heat_kernel() {
    let spec = catalog("laplace", 3).unwrap();
    let (x, y, t) = ([0.1, 0.2, -0.3], [0.5, -0.1, 0.0], 0.6);
    let r2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
    let want = (4.0 * PI * t).powf(-1.5) * (-r2 / (4.0 * t)).exp();
    assert!(rel(kernel_density(&spec, &x, &y, t).unwrap(), want) < 1e-12);
    assert!(rel(pseudo_distance(&spec, t, &x, &y).unwrap(), r2.sqrt()) < 1e-12);
}

#[test]
fn gramian_routes_agree() {
    for name in ["kolmogorov:1", "kolmogorov:2", "kramers", "ornstein_uhlenbeck:2"] {
        let spec = catalog_from_str(name).unwrap();
        for t in [0.05, 1.0, 4.0] {
            let (w, _) = gramian(&spec, t).unwrap();
            let q = gramian_by_quadrature(&spec, t, 1e-11).unwrap();
            assert!(gramian_gap(&w, &q) < 1e-8, "{name} t={t}");
        }
    }
}

#[test]
fn ou_volume_in_closed_form() {
    // tK(t) = (1 - e^{-2t})/2 · I for Q = I, B = -I.
    let spec = catalog("ornstein_uhlenbeck", 2).unwrap();
    for t in [0.1, 1.0, 3.0] {
        let v = volume(&spec, t).unwrap();
        assert!(rel(v, -PI * (-2.0 * t).exp_m1() / 2.0) < 1e-10);
    }
}

#[test]
fn kernel_square_integral_closed_form() {
    // ∫ N(m, Σ)(X)² dm = (4π)^{-N/2} det Σ^{-1/2} with Σ = 2tK, times e^{-t tr B} from the change of variables.
    for name in ["laplace:1", "laplace:3", "kolmogorov:1", "kramers", "ornstein_uhlenbeck:2"] {
        let spec = catalog_from_str(name).unwrap();
        let n = spec.dim as i32;
        let y = vec![0.2; spec.dim];
        for t in [0.3, 2.0] {
            let det = covariance(&spec, t).unwrap().det_tk;
            let want = (8.0 * PI).powi(-n).sqrt() / det.sqrt() * (-t * spec.trace_b()).exp();
            let got = kernel_square_integral(&spec, &y, t, 40).unwrap();
            assert!(rel(got, want) < 1e-8, "{name} t={t}: {got} vs {want}");
            let via_const = a_const(spec.dim) * (-t * spec.trace_b()).exp() / volume(&spec, t).unwrap();
            assert!(rel(via_const, want) < 1e-12);
        }
    }
}

#[test]
fn constants_in_low_dimensions() {
    assert!(rel(a_const(1), 2.0 / (8.0 * PI).sqrt()) < 1e-14);
    assert!(rel(a_const(2), PI / (8.0 * PI)) < 1e-14);
    for n in 1..6 {
        assert!(rel(b_const(n), 2.0 * a_const(n)) < 1e-14);
    }
}

#[test]
fn dimensions_of_the_catalog() {
    let cases = [("laplace:3", 3.0, 3.0, Regime::Homogeneous), ("kolmogorov:2", 8.0, 8.0, Regime::Homogeneous), ("kramers", 4.0, 2.0, Regime::Crossing)];
    for (name, d0, dinf, regime) in cases {
        let r = intrinsic_dimensions(&catalog_from_str(name).unwrap()).unwrap();
        let (a, b) = r.snapped();
        assert_eq!((a, b, r.regime), (d0, dinf, regime), "{name}");
    }
    let ou = intrinsic_dimensions(&catalog("ornstein_uhlenbeck", 2).unwrap()).unwrap();
    // Bounded volume: no growth at infinity.
    assert!(ou.dinf.abs() < 0.05, "{}", ou.dinf);
}

#[test]
fn kalman_rank_and_hypoellipticity_agree() {
    let grid = default_time_grid();
    for name in ["laplace:2", "kolmogorov:1", "kramers", "ornstein_uhlenbeck:2"] {
        let spec = catalog_from_str(name).unwrap();
        assert_eq!(kalman_rank(&spec), spec.dim, "{name}");
        assert!(check_hypoelliptic(&spec, &grid).hypoelliptic, "{name}");
    }
    // Diffusion in the first coordinate only, with no drift to spread it.
    let stuck = OperatorSpec::new(SquareMatrix::diag(&[1.0, 0.0]), SquareMatrix::zeros(2), None).unwrap();
    assert_eq!(kalman_rank(&stuck), 1);
    assert!(!check_hypoelliptic(&stuck, &grid).hypoelliptic);
    assert!(matches!(covariance(&stuck, 1.0), Err(KfpError::Hypoellipticity { .. })));
}

#[test]
fn spec_json_round_trip() {
    let spec = catalog("kramers", 0).unwrap();
    let back = OperatorSpec::from_json(&spec.to_json()).unwrap();
    assert_eq!(spec, back);
    let bad = r#"{"dim": 3, "Q": [[1,0],[0,1]], "B": [[0,0],[0,0]]}"#;
    assert!(OperatorSpec::from_json(bad).is_err());
    assert!(OperatorSpec::new(SquareMatrix::diag(&[1.0, -1.0]), SquareMatrix::zeros(2), None).is_err());
}

#[test]
fn trace_condition() {
    assert!(catalog("kramers", 0).unwrap().trace_flag());
    let ou = catalog("ornstein_uhlenbeck", 1).unwrap();
    assert!(!ou.trace_flag());
    assert!(matches!(ou.require_trace(), Err(KfpError::TraceCondition(_))));
}
