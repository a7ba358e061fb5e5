use kfp_core::matlin::{correlation, mat_exp, psd_sqrt, sym_spectrum, SquareMatrix};
use proptest::prelude::*;

fn square(n: usize) -> impl Strategy<Value = SquareMatrix> {
    prop::collection::vec(-1.5f64..1.5, n * n).prop_map(move |d| SquareMatrix::new(n, d).unwrap())
}

fn sized() -> impl Strategy<Value = SquareMatrix> {
    (1usize..=4).prop_flat_map(square)
}

fn close(a: &SquareMatrix, b: &SquareMatrix, tol: f64) -> bool {
    a.sub(b).max_abs() <= tol * (1.0 + b.max_abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_inverse(a in sized(), t in -2.0f64..2.0) {
        let n = a.dim();
        let prod = mat_exp(&a, t).unwrap().matmul(&mat_exp(&a, -t).unwrap());
        prop_assert!(close(&prod, &SquareMatrix::identity(n), 1e-10));
    }

    #[test]
    fn exp_group_law(a in sized(), s in -1.0f64..1.0, t in -1.0f64..1.0) {
        let lhs = mat_exp(&a, s + t).unwrap();
        let rhs = mat_exp(&a, s).unwrap().matmul(&mat_exp(&a, t).unwrap());
        prop_assert!(close(&lhs, &rhs, 1e-10));
    }

    #[test]
    fn exp_derivative_commutes(a in sized(), t in 0.1f64..1.0) {
        // d/dt e^{tA} = A e^{tA} = e^{tA} A
        let e = mat_exp(&a, t).unwrap();
        prop_assert!(close(&a.matmul(&e), &e.matmul(&a), 1e-10));
    }

    #[test]
    fn sqrt_squares_back(l in sized()) {
        let m = l.matmul(&l.transpose()).symmetrize();
        let r = psd_sqrt(&m).unwrap();
        prop_assert!(r.is_symmetric(1e-10));
        prop_assert!(close(&r.matmul(&r), &m, 1e-8));
    }

    #[test]
    fn spectrum_brackets(l in sized()) {
        let n = l.dim();
        let m = l.matmul(&l.transpose()).add(&SquareMatrix::identity(n).scale(0.1)).symmetrize();
        let sp = sym_spectrum(&m).unwrap();
        prop_assert!(sp.min_eig > 0.0 && sp.min_eig <= sp.max_eig * (1.0 + 1e-12));
        prop_assert!((sp.det - m.determinant()).abs() <= 1e-10 * m.determinant().abs().max(1.0));
        prop_assert!(sp.det <= sp.max_eig.powi(n as i32) * (1.0 + 1e-9));
        prop_assert!(sp.det >= sp.min_eig.powi(n as i32) * (1.0 - 1e-9));
        let tr = m.trace();
        prop_assert!(tr >= n as f64 * sp.min_eig - 1e-9 && tr <= n as f64 * sp.max_eig + 1e-9);
    }

    #[test]
    fn correlation_unit_diagonal(l in sized()) {
        let n = l.dim();
        let m = l.matmul(&l.transpose()).add(&SquareMatrix::identity(n).scale(0.05)).symmetrize();
        let (c, d) = correlation(&m).unwrap();
        for i in 0..n {
            prop_assert!((c.get(i, i) - 1.0).abs() < 1e-12);
            prop_assert!((d[i] * d[i] - m.get(i, i)).abs() < 1e-12 * m.get(i, i).max(1.0));
        }
    }

    #[test]
    fn inverse_round_trip(l in sized()) {
        let n = l.dim();
        let m = l.matmul(&l.transpose()).add(&SquareMatrix::identity(n)).symmetrize();
        let prod = m.matmul(&m.inverse().unwrap());
        prop_assert!(close(&prod, &SquareMatrix::identity(n), 1e-10));
    }
}

#[test]
fn exp_of_rotation_generator() {
    let j = SquareMatrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
    let t = 0.7f64;
    let e = mat_exp(&j, t).unwrap();
    let want = SquareMatrix::from_rows(&[vec![t.cos(), -t.sin()], vec![t.sin(), t.cos()]]).unwrap();
    assert!(close(&e, &want, 1e-13));
}

#[test]
fn oversized_matrix_rejected() {
    assert!(SquareMatrix::new(17, vec![0.0; 17 * 17]).is_err());
    assert!(SquareMatrix::new(2, vec![0.0; 3]).is_err());
}
