use taylor_hjb::albrekht;
use taylor_hjb::galerkin::{project, Normalization};
use taylor_hjb::polytensor::monomials;
use taylor_hjb::spectral::{riccati_modes, KernelCoeffs, RecursionVariant, SpectralModel};

#[test]
fn diagonal_closed_form_up_to_eight_modes() {
    for n in 1..=8 {
        let model = SpectralModel::heated_rod(n).unwrap();
        let rm = riccati_modes(&model).unwrap();
        for i in 0..n {
            let l = model.basis.lambda(i);
            assert!((rm.pi2[(i, i)] - (l + (l * l + 1.0).sqrt())).abs() < 1e-10);
            assert!((rm.mu[i] + (l * l + 1.0).sqrt()).abs() < 1e-10);
        }
        assert!(rm.residual < 1e-10 * (1.0 + rm.pi2.norm()));
    }
}

#[test]
fn low_modes_stable_under_truncation() {
    for variant in RecursionVariant::ALL {
        let small = KernelCoeffs::compute(&SpectralModel::heated_rod(6).unwrap(), variant).unwrap();
        let large = KernelCoeffs::compute(&SpectralModel::heated_rod(12).unwrap(), variant).unwrap();
        for (a, b) in [(&small.pi3, &large.pi3), (&small.pi4, &large.pi4)] {
            for mi in monomials(3, a.degree()) {
                let d = (a.monomial_coefficient(&mi) - b.monomial_coefficient(&mi)).abs();
                assert!(d < 1e-6, "{variant} {mi}: {d}");
            }
        }
    }
}

#[test]
fn orthonormal_recursion_matches_projected_expansion() {
    let model = SpectralModel::heated_rod(3).unwrap();
    let kc = KernelCoeffs::compute(&model, RecursionVariant::Orthonormal).unwrap();
    let gal = project(&model, 3, Normalization::Orthonormal).unwrap();
    let exp = albrekht::expand(&gal.sys, 3).unwrap();
    for (recursion, engine) in [(&kc.pi3, exp.cost.term(3).unwrap()), (&kc.pi4, exp.cost.term(4).unwrap())] {
        for mi in monomials(3, recursion.degree()) {
            let d = (recursion.monomial_coefficient(&mi) - engine.monomial_coefficient(&mi)).abs();
            assert!(d < 1e-6, "{mi}: {d}");
        }
    }
    let z = [0.02, -0.01, 0.015];
    let fb = kc.kernels.feedback_polys().unwrap();
    for (a, b) in fb.iter().zip(&exp.feedback) {
        assert!((a.eval(&z).unwrap() - b.eval(&z).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn printed_recursion_matches_printed_projection() {
    let model = SpectralModel::heated_rod(3).unwrap();
    let kc = KernelCoeffs::compute(&model, RecursionVariant::PaperPrinted).unwrap();
    let gal = project(&model, 3, Normalization::AsPrinted).unwrap();
    let exp = albrekht::expand(&gal.sys, 3).unwrap();
    let cost = kc.cost_poly().unwrap();
    let z = [0.3, -0.2, 0.1];
    assert!((cost.eval(&z).unwrap() - exp.cost_at(&z).unwrap()).abs() < 1e-10);
}

#[test]
fn kernels_are_exactly_symmetric() {
    let kc = KernelCoeffs::compute(&SpectralModel::heated_rod(5).unwrap(), RecursionVariant::PaperPrinted).unwrap();
    assert_eq!(kc.pi3.get_ordered(&[1, 2, 3]), kc.pi3.get_ordered(&[3, 1, 2]));
    assert_eq!(kc.pi4.get_ordered(&[0, 1, 1, 4]), kc.pi4.get_ordered(&[1, 4, 0, 1]));
    assert_eq!(kc.pi2, kc.pi2.transpose());
}

#[test]
fn printed_and_orthonormal_differ_off_the_corner() {
    let model = SpectralModel::heated_rod(4).unwrap();
    let a = KernelCoeffs::compute(&model, RecursionVariant::PaperPrinted).unwrap();
    let b = KernelCoeffs::compute(&model, RecursionVariant::Orthonormal).unwrap();
    assert_eq!(a.pi3.get_ordered(&[0, 0, 0]), b.pi3.get_ordered(&[0, 0, 0]));
    assert!((a.pi3.get_ordered(&[0, 1, 1]) - b.pi3.get_ordered(&[0, 1, 1])).abs() > 1e-4);
}
