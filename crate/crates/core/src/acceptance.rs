//! End-to-end verification checks, one per acceptance criterion.
//!
//! Each check returns a [`Criterion`] instead of panicking so the same code
//! backs the `acceptance` test target and the command-line `verify` report.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::albrekht::{self, PolySystem};
use crate::error::Result;
use crate::galerkin::{self, Normalization};
use crate::simulate::{self, FeedbackPolicy, SimConfig, Status};
use crate::spectral::{riccati_modes, KernelCoeffs, RecursionVariant, SpectralModel};
use crate::{MultiIndex, SymTensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Criterion {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {:>2} {}: {}", self.id, self.title, self.detail)
    }
}

fn finish(id: usize, title: &'static str, outcome: Result<(bool, String)>) -> Criterion {
    match outcome {
        Ok((passed, detail)) => Criterion { id, title, passed, detail },
        Err(e) => Criterion { id, title, passed: false, detail: format!("error: {e}") },
    }
}

/// `ẋ = u + x²` with `l = ½(x² + u²)`.
pub fn scalar_system() -> PolySystem {
    let one = DMatrix::from_element(1, 1, 1.0);
    let square = SymTensor::from_entries(2, 2, [(MultiIndex::new(vec![0, 0]), 1.0)]).expect("in range");
    PolySystem::new(DMatrix::zeros(1, 1), one.clone(), one.clone(), DMatrix::zeros(1, 1), one)
        .and_then(|s| s.with_dynamics(2, vec![square]))
        .expect("valid scalar system")
}

fn printed_galerkin() -> Result<galerkin::GalerkinSystem> {
    galerkin::project(&SpectralModel::heated_rod(3)?, 3, Normalization::AsPrinted)
}

/// Stabilizing ARE solution from the matrix sign function of the Hamiltonian.
///
/// Independent of the Newton–Kleinman solver; used as an oracle.
pub fn hamiltonian_are(sys: &PolySystem) -> Option<DMatrix<f64>> {
    let n = sys.state_dim();
    let r_inv = sys.r().clone().try_inverse()?;
    let a = sys.f() - sys.g() * &r_inv * sys.s().transpose();
    let w = sys.g() * &r_inv * sys.g().transpose();
    let qt = sys.q() - sys.s() * &r_inv * sys.s().transpose();
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&w));
    h.view_mut((n, 0), (n, n)).copy_from(&(-&qt));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut z = h;
    for _ in 0..100 {
        let inv = z.clone().try_inverse()?;
        let det = z.determinant().abs();
        let c = det.powf(-1.0 / (2 * n) as f64);
        let c = if c.is_finite() && c > 0.0 { c } else { 1.0 };
        let next = (&z * c + inv / c) * 0.5;
        let change = (&next - &z).norm() / next.norm();
        z = next;
        if change < 1e-14 {
            break;
        }
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let z11 = z.view((0, 0), (n, n)).into_owned();
    let z12 = z.view((0, n), (n, n)).into_owned();
    let z21 = z.view((n, 0), (n, n)).into_owned();
    let z22 = z.view((n, n), (n, n)).into_owned();
    let mut lhs = DMatrix::<f64>::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&z12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(z22 + &eye));
    let mut rhs = DMatrix::<f64>::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(z11 + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-z21));
    let p = lhs.svd(true, true).solve(&rhs, 1e-13).ok()?;
    Some((&p + p.transpose()) * 0.5)
}

/// Seeded random stabilizable system with `n ≤ 4` states and a cross weight.
pub fn random_system(rng: &mut ChaCha8Rng) -> PolySystem {
    loop {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=n.min(2));
        let mut mat = |r: usize, c: usize, s: f64| DMatrix::from_fn(r, c, |_, _| s * rng.random_range(-1.0..1.0));
        let f = mat(n, n, 1.5);
        let g = mat(n, m, 1.0);
        let c = mat(n, n, 1.0);
        let d = mat(m, m, 1.0);
        let s = mat(n, m, 0.1);
        let q = c.transpose() * c + DMatrix::identity(n, n) * 0.5;
        let r = d.transpose() * d + DMatrix::identity(m, m);
        if let Ok(sys) = PolySystem::new(f, g, q, s, r) {
            if albrekht::solve_are(&sys).is_ok() {
                return sys;
            }
        }
    }
}

pub fn riccati_closed_form() -> Criterion {
    finish(1, "diagonal Riccati closed form", (|| {
        let model = SpectralModel::heated_rod(8)?;
        let rm = riccati_modes(&model)?;
        let mut worst = 0.0f64;
        for i in 0..8 {
            for j in 0..8 {
                let expect = if i == j {
                    let l = model.basis.lambda(i);
                    l + (l * l + 1.0).sqrt()
                } else {
                    0.0
                };
                worst = worst.max((rm.pi2[(i, j)] - expect).abs());
            }
        }
        let h11 = 0.5 * rm.pi2[(1, 1)];
        let h22 = 0.5 * rm.pi2[(2, 2)];
        let passed = worst <= 1e-10 && (h11 - 0.0253).abs() <= 5e-5 && (h22 - 0.0063).abs() <= 5e-5;
        Ok((passed, format!("max |err| {worst:.2e}, ½Π11 = {h11:.6}, ½Π22 = {h22:.6}")))
    })())
}

pub fn closed_loop_spectrum() -> Criterion {
    finish(2, "closed-loop spectrum", (|| {
        let model = SpectralModel::heated_rod(8)?;
        let rm = riccati_modes(&model)?;
        let worst = (0..8)
            .map(|i| {
                let l = model.basis.lambda(i);
                (rm.mu[i] + (l * l + 1.0).sqrt()).abs()
            })
            .fold(0.0, f64::max);
        let sys = model.lq_system()?;
        let lqr = albrekht::solve_are(&sys)?;
        let mut sorted = rm.mu.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let spectrum_gap = lqr.mu.iter().zip(&sorted).map(|(c, r)| (c.re - r).abs() + c.im.abs()).fold(0.0, f64::max);
        let mu3 = rm.mu[3];
        let passed = worst <= 1e-10 && spectrum_gap <= 1e-8 && (mu3 + 88.8321).abs() <= 1e-3;
        Ok((passed, format!("max |err| {worst:.2e}, μ3 = {mu3:.4}, spectrum gap {spectrum_gap:.2e}")))
    })())
}

pub fn galerkin_table() -> Criterion {
    finish(3, "Galerkin cost table", (|| {
        let table = galerkin::cost_table(&printed_galerkin()?, 3)?;
        let printed: [(&[usize], f64); 13] = [
            (&[0, 0], 0.5),
            (&[1, 1], 0.0253),
            (&[2, 2], 0.0063),
            (&[0, 0, 0], 0.3333),
            (&[0, 1, 1], 0.0288),
            (&[0, 2, 2], 0.0066),
            (&[1, 1, 2], 0.0010),
            (&[0, 0, 0, 0], 0.1250),
            (&[0, 0, 1, 1], 0.0281),
            (&[0, 0, 2, 2], 0.0065),
            (&[0, 1, 1, 2], 0.0012),
            (&[1, 1, 1, 1], 0.0004),
            (&[1, 1, 2, 2], 0.0002),
        ];
        let mut worst = 0.0f64;
        let mut worst_at = String::new();
        for (mono, v) in printed {
            let err = (table.coefficient(mono) - v).abs();
            if err > worst {
                worst = err;
                worst_at = format!("{mono:?}");
            }
        }
        let z2 = table.coefficient(&[2, 2, 2, 2]);
        let passed = worst <= 1e-3 && z2.abs() < 5e-5;
        Ok((passed, format!("max |err| {worst:.2e} at {worst_at}, z2^4 coefficient {z2:.2e}")))
    })())
}

pub fn spectral_recursions() -> Criterion {
    finish(4, "spectral recursions", (|| {
        let model = SpectralModel::heated_rod(8)?;
        let kc = KernelCoeffs::compute(&model, RecursionVariant::PaperPrinted)?;
        let p000 = kc.pi3.get_ordered(&[0, 0, 0]);
        let c011 = kc.pi3.monomial_coefficient(&MultiIndex::new(vec![0, 1, 1]));
        let c112 = kc.pi3.monomial_coefficient(&MultiIndex::new(vec![1, 1, 2]));
        let p0000 = kc.pi4.get_ordered(&[0, 0, 0, 0]);
        let passed = (p000 - 1.0 / 3.0).abs() <= 1e-12
            && (c011 - 0.0288).abs() <= 2e-4
            && (c112 - 0.00096).abs() <= 5e-5
            && (p0000 - 0.125).abs() <= 1e-12;
        Ok((passed, format!("Π000 = {p000:.12}, z0z1^2 {c011:.6}, z1^2z2 {c112:.6}, Π0000 = {p0000:.12}")))
    })())
}

pub fn scalar_oracle() -> Criterion {
    finish(5, "scalar oracle", (|| {
        let exp = albrekht::expand(&scalar_system(), 3)?;
        let coeff = |p: &crate::GradedPoly, k: usize| p.term(k).map_or(0.0, |t| t.monomial_coefficient(&MultiIndex::new(vec![0; k])));
        let cost: Vec<f64> = (2..=4).map(|k| coeff(&exp.cost, k)).collect();
        let fb: Vec<f64> = (1..=3).map(|k| coeff(&exp.feedback[0], k)).collect();
        let worst = cost
            .iter()
            .zip([0.5, 1.0 / 3.0, 0.125])
            .chain(fb.iter().zip([-1.0, -1.0, -0.5]))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let show = |v: &[f64]| v.iter().map(|c| format!("{c:.10}")).collect::<Vec<_>>().join(", ");
        Ok((worst <= 1e-10, format!("cost [{}], feedback [{}], max |err| {worst:.2e}", show(&cost), show(&fb))))
    })())
}

pub fn residual_order() -> Criterion {
    finish(6, "HJB residual order", (|| {
        let gal = printed_galerkin()?;
        let exp = albrekht::expand(&gal.sys, 3)?;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = 1e-2;
        let mut min_ratio = f64::INFINITY;
        for _ in 0..20 {
            let dir: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let at = |scale: f64| -> Vec<f64> { dir.iter().map(|v| v * scale / len).collect() };
            let (r1, _) = albrekht::hjb_residual(&gal.sys, &exp, &at(s))?;
            let (r2, _) = albrekht::hjb_residual(&gal.sys, &exp, &at(s / 2.0))?;
            min_ratio = min_ratio.min(r1.abs() / r2.abs());
        }
        Ok((min_ratio >= 16.0 * 0.8, format!("min ratio over 20 directions {min_ratio:.3}")))
    })())
}

fn figure_setup() -> Result<(galerkin::GalerkinSystem, albrekht::PolyExpansion, albrekht::LqrData)> {
    let gal = printed_galerkin()?;
    let lqr = albrekht::solve_are(&gal.sys)?;
    let exp = albrekht::expand_with(&gal.sys, &lqr, 3)?;
    Ok((gal, exp, lqr))
}

pub fn stabilization() -> Criterion {
    finish(7, "stabilization beyond the linear basin", (|| {
        let (gal, exp, _) = figure_setup()?;
        let full = FeedbackPolicy::from_expansion(&exp, 3)?;
        let linear = FeedbackPolicy::from_expansion(&exp, 1)?;
        let big = simulate::integrate(&gal.sys, &full, &SimConfig::new(vec![5.0; 3], 5.0, 1e-4))?;
        let small = simulate::integrate(&gal.sys, &linear, &SimConfig::new(vec![1.1, 0.0, 0.0], 5.0, 1e-4))?;
        let passed = big.status == Status::Converged && matches!(small.status, Status::Escaped(_));
        Ok((
            passed,
            format!(
                "cubic from (5,5,5): {} with |z(5)| = {:.6}; linear from (1.1,0,0): {}",
                big.status,
                big.final_norm(),
                small.status
            ),
        ))
    })())
}

pub fn partial_feedback() -> Criterion {
    finish(8, "partial feedback experiment", (|| {
        let (gal, exp, lqr) = figure_setup()?;
        let mu: Vec<f64> = (0..3).map(|i| lqr.closed_loop(&gal.sys)[(i, i)]).collect();
        let full = FeedbackPolicy::from_expansion(&exp, 3)?;
        let partial = FeedbackPolicy::partial(exp.feedback.clone(), &mu, -20.0)?;
        let cfg = SimConfig::new(vec![5.0; 3], 5.0, 1e-4);
        let a = simulate::integrate(&gal.sys, &full, &cfg)?;
        let b = simulate::integrate(&gal.sys, &partial, &cfg)?;
        let cmp = simulate::compare(&a, &b)?;
        let finite = cmp.per_mode.iter().all(|v| v.is_finite()) && cmp.aggregate.is_finite();
        let passed = a.status == Status::Converged && b.status == Status::Converged && finite;
        Ok((
            passed,
            format!(
                "full {} (|z(5)| = {:.6}), partial {} (|z(5)| = {:.6}), relative sup differences [{}], aggregate {:.4e}",
                a.status,
                a.final_norm(),
                b.status,
                b.final_norm(),
                cmp.per_mode.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>().join(", "),
                cmp.aggregate
            ),
        ))
    })())
}

pub fn are_residuals() -> Criterion {
    finish(9, "ARE residuals and Hamiltonian oracle", (|| {
        let mut systems = vec![
            scalar_system(),
            printed_galerkin()?.sys,
            SpectralModel::heated_rod(8)?.lq_system()?,
            galerkin::project(&SpectralModel::heated_rod(6)?, 6, Normalization::Orthonormal)?.sys,
        ];
        let fixed = systems.len();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        systems.extend((0..10).map(|_| random_system(&mut rng)));
        let mut worst_res = 0.0f64;
        let mut worst_oracle = 0.0f64;
        let mut failures = 0;
        for (idx, sys) in systems.iter().enumerate() {
            let lqr = albrekht::solve_are(sys)?;
            let pn = lqr.p.norm();
            let res = albrekht::are_residual(sys, &lqr.p) / (1.0 + pn);
            worst_res = worst_res.max(res);
            if res > 1e-10 {
                failures += 1;
            }
            if idx >= fixed {
                match hamiltonian_are(sys) {
                    Some(p) => {
                        let gap = (&p - &lqr.p).amax();
                        worst_oracle = worst_oracle.max(gap);
                        if gap > 1e-8 {
                            failures += 1;
                        }
                    }
                    None => failures += 1,
                }
            }
        }
        Ok((
            failures == 0,
            format!(
                "{} systems, max residual/(1+|P|) {worst_res:.2e}, max oracle gap {worst_oracle:.2e} over 10 random",
                systems.len()
            ),
        ))
    })())
}

pub fn cost_consistency() -> Criterion {
    finish(10, "cost consistency", (|| {
        let sys = scalar_system();
        let exp = albrekht::expand(&sys, 3)?;
        let cfg = SimConfig::new(vec![1.0], 20.0, 1e-3);
        let gaps = simulate::cost_consistency(&sys, &exp, &[1.0], &[0.2, 0.1, 0.05], &cfg)?;
        let r1 = gaps[0].gap / gaps[1].gap;
        let r2 = gaps[1].gap / gaps[2].gap;
        Ok((
            r1 >= 20.0 && r2 >= 20.0,
            format!(
                "gaps {:.3e}, {:.3e}, {:.3e}; ratios {r1:.2}, {r2:.2}",
                gaps[0].gap, gaps[1].gap, gaps[2].gap
            ),
        ))
    })())
}

pub fn run_all() -> Vec<Criterion> {
    vec![
        riccati_closed_form(),
        closed_loop_spectrum(),
        galerkin_table(),
        spectral_recursions(),
        scalar_oracle(),
        residual_order(),
        stabilization(),
        partial_feedback(),
        are_residuals(),
        cost_consistency(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_function_oracle_on_scalar() {
        let p = hamiltonian_are(&scalar_system()).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_systems_are_reproducible() {
        let a = random_system(&mut ChaCha8Rng::seed_from_u64(1));
        let b = random_system(&mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
    }
}
