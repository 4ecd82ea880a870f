use std::collections::BTreeMap;

use proptest::prelude::*;
use taylor_hjb::polytensor::{distinct_orderings, monomials, symmetrize};
use taylor_hjb::{CoefficientFile, MultiIndex, Poly, SymTensor, SymTensorF32, SymmetrizeMode};

fn tensor(dim: usize, degree: usize) -> impl Strategy<Value = SymTensor> {
    let len = monomials(dim, degree).count();
    prop::collection::vec(-2.0..2.0f64, len).prop_map(move |c| SymTensor::from_monomial_coefficients(dim, degree, &c).unwrap())
}

fn shaped() -> impl Strategy<Value = (SymTensor, Vec<f64>)> {
    (1usize..=3, 1usize..=4).prop_flat_map(|(n, k)| (tensor(n, k), prop::collection::vec(-1.5..1.5f64, n)))
}

proptest! {
    #[test]
    fn symmetrize_is_idempotent(n in 1usize..=3, k in 1usize..=4, seed in prop::collection::vec(-1.0..1.0f64, 81)) {
        let raw: BTreeMap<Vec<usize>, f64> = (0..n.pow(k as u32))
            .map(|code| {
                let mut c = code;
                let t: Vec<usize> = (0..k).map(|_| { let v = c % n; c /= n; v }).collect();
                (t, seed[code % seed.len()] * (code as f64 + 1.0))
            })
            .collect();
        let once = symmetrize(n, k, &raw, SymmetrizeMode::Strict).unwrap();
        let twice = symmetrize(n, k, &once.to_ordered(), SymmetrizeMode::Strict).unwrap();
        for (a, b) in once.coeffs().iter().zip(twice.coeffs()) {
            prop_assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn orderings_share_one_value((t, _) in shaped()) {
        for mi in monomials(t.dim(), t.degree()) {
            let v = t.get(&mi);
            for perm in distinct_orderings(mi.indices()) {
                prop_assert_eq!(t.get_ordered(&perm), v);
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences((t, z) in shaped()) {
        let g = t.gradient(&z).unwrap();
        let h = 1e-5;
        for i in 0..z.len() {
            let mut up = z.clone();
            let mut down = z.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (t.eval(&up).unwrap() - t.eval(&down).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()), "{} vs {}", fd, g[i]);
        }
    }

    #[test]
    fn full_contraction_is_evaluation((t, z) in shaped()) {
        let slots: Vec<&[f64]> = vec![z.as_slice(); t.degree()];
        let c = t.contract(&slots).unwrap().scalar().unwrap();
        let e = t.eval(&z).unwrap();
        prop_assert!((c - e).abs() <= 1e-12 * (1.0 + e.abs()));
    }

    #[test]
    fn single_precision_tracks_double((t, z) in shaped()) {
        let t32 = SymTensorF32::from_monomial_coefficients(
            t.dim(),
            t.degree(),
            &monomials(t.dim(), t.degree()).map(|mi| t.monomial_coefficient(&mi) as f32).collect::<Vec<_>>(),
        ).unwrap();
        let z32: Vec<f32> = z.iter().map(|&v| v as f32).collect();
        let e = t.eval(&z).unwrap();
        let e32 = t32.eval(&z32).unwrap() as f64;
        let scale: f64 = monomials(t.dim(), t.degree()).map(|mi| t.monomial_coefficient(&mi).abs()).sum::<f64>() * 3.375f64.powi(t.degree() as i32);
        prop_assert!((e - e32).abs() <= 1e-5 * (1.0 + scale));
    }

    #[test]
    fn product_evaluates_to_product(a in tensor(2, 2), b in tensor(2, 1), z in prop::collection::vec(-1.0..1.0f64, 2)) {
        let pa = Poly::from_sym(&a, 3);
        let pb = Poly::from_sym(&b, 3);
        let lhs = pa.mul(&pb).eval(&z).unwrap();
        let rhs = a.eval(&z).unwrap() * b.eval(&z).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn text_round_trip((t, _) in shaped()) {
        let text = CoefficientFile::new(t.clone()).with("variant", "orthonormal").to_string();
        let back: CoefficientFile = text.parse().unwrap();
        prop_assert_eq!(back.extra, vec![("variant".to_string(), "orthonormal".to_string())]);
        for (a, b) in t.coeffs().iter().zip(back.tensor.coeffs()) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }
}

#[test]
fn rank_is_dimension_free() {
    let mi = MultiIndex::new(vec![2, 0, 1]);
    let r = mi.rank();
    for n in 3..7 {
        assert_eq!(monomials(n, 3).position(|m| m == mi), Some(r));
    }
}
