use nalgebra::DMatrix;
use proptest::prelude::*;
use taylor_hjb::albrekht::{self, PolySystem};
use taylor_hjb::polytensor::monomials;
use taylor_hjb::SymTensor;

fn diagonalizable(eigs: &[f64], mix: &[f64]) -> DMatrix<f64> {
    let n = eigs.len();
    let v = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.4 * mix[i * n + j] });
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(eigs));
    &v * d * v.clone().try_inverse().unwrap()
}

/// Random stabilizable system with quadratic and cubic dynamics, one control.
fn nonlinear(n: usize, vals: &[f64]) -> PolySystem {
    let mut it = vals.iter().copied().cycle();
    let mut next = || it.next().unwrap();
    let f = DMatrix::from_fn(n, n, |_, _| next());
    let g = DMatrix::from_fn(n, 1, |_, _| 1.0 + next().abs());
    let sys = PolySystem::new(f, g, DMatrix::identity(n, n), DMatrix::zeros(n, 1), DMatrix::identity(1, 1)).unwrap();
    let quad: Vec<SymTensor> = (0..n).map(|_| SymTensor::from_fn(n + 1, 2, |_| 0.5 * next())).collect();
    let cubic: Vec<SymTensor> = (0..n).map(|_| SymTensor::from_fn(n + 1, 3, |_| 0.3 * next())).collect();
    sys.with_dynamics(2, quad).unwrap().with_dynamics(3, cubic).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operator_spectrum_is_sums(
        eigs in prop::collection::vec(-3.0..-0.2f64, 1..=3),
        mix in prop::collection::vec(-1.0..1.0f64, 9),
        k in 1usize..=3,
    ) {
        let n = eigs.len();
        let a = diagonalizable(&eigs, &mix);
        let op = albrekht::cost_operator(&a, k);
        let mut got: Vec<f64> = op.complex_eigenvalues().iter().map(|c| c.re).collect();
        let mut want: Vec<f64> = monomials(n, k).map(|mi| mi.indices().iter().map(|&i| eigs[i]).sum()).collect();
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-6 * (1.0 + w.abs()), "{:?} vs {:?}", got, want);
        }
    }

    #[test]
    fn residuals_vanish_through_solved_degrees(n in 1usize..=2, vals in prop::collection::vec(-1.0..1.0f64, 40)) {
        let sys = nonlinear(n, &vals);
        let exp = albrekht::expand(&sys, 3).unwrap();
        let (h, grads) = albrekht::hjb_residual_polys(&sys, &exp, 4).unwrap();
        let scale = 1.0 + exp.cost.terms().map(|t| t.max_abs()).fold(0.0, f64::max);
        prop_assert!(h.max_abs_in(0, 4) <= 1e-9 * scale);
        for g in grads {
            prop_assert!(g.max_abs_in(0, 3) <= 1e-9 * scale);
        }
    }

    #[test]
    fn lower_degrees_do_not_depend_on_target(n in 1usize..=2, vals in prop::collection::vec(-1.0..1.0f64, 40)) {
        let sys = nonlinear(n, &vals);
        let low = albrekht::expand(&sys, 2).unwrap();
        let high = albrekht::expand(&sys, 3).unwrap();
        for k in 2..=3 {
            let (a, b) = (low.cost.term(k).unwrap(), high.cost.term(k).unwrap());
            for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
                prop_assert_eq!(x, y);
            }
        }
        prop_assert_eq!(low.feedback[0].term(2), high.feedback[0].term(2));
    }

    #[test]
    fn riccati_residual_small(n in 1usize..=4, vals in prop::collection::vec(-1.0..1.0f64, 40)) {
        let sys = nonlinear(n, &vals);
        let lqr = albrekht::solve_are(&sys).unwrap();
        prop_assert!(albrekht::are_residual(&sys, &lqr.p) <= 1e-10 * (1.0 + lqr.p.norm()));
        prop_assert!(lqr.mu.iter().all(|m| m.re < 0.0));
    }
}

#[test]
fn numeric_and_polynomial_residuals_agree() {
    let sys = nonlinear(2, &[0.3, -0.7, 0.2, 0.9, -0.4, 0.1, 0.6, -0.2, 0.8, -0.5, 0.05, 0.33]);
    let exp = albrekht::expand(&sys, 3).unwrap();
    let z = [0.05, -0.03];
    let (scalar, vector) = albrekht::hjb_residual(&sys, &exp, &z).unwrap();
    // the polynomial form truncated at a high degree must reproduce the direct evaluation
    let (h, grads) = albrekht::hjb_residual_polys(&sys, &exp, 12).unwrap();
    assert!((h.eval(&z).unwrap() - scalar).abs() <= 1e-12 * (1.0 + scalar.abs()));
    assert!((grads[0].eval(&z).unwrap() - vector[0]).abs() <= 1e-12 * (1.0 + vector[0].abs()));
}
