//! Mode-space solution of the controlled reaction–diffusion problem
//!
//! ```text
//! z_t = z_xx + F z + G u + ∫∫ F2(x, x1, x2) z(x1) z(x2) dx1 dx2,   z_x(0) = z_x(1) = 0
//! ```
//!
//! with spatially constant `F`, `G` and cost `½ ∫∫ (z² + u²) dx dt`. Every
//! Fredholm kernel is expanded in the Neumann cosine eigenbasis, truncated to
//! `N` modes: `P[2] ↔ Π[i,j]`, `P[3] ↔ Π[i,j,k]`, `P[4] ↔ Π[i,j,k,l]`.
//!
//! The cubic and quartic coefficients come from per-tuple recursions
//!
//! ```text
//! 0 = (μi+μj+μk) Π[i,j,k] + Σm Π[i,m] B[m,j,k]
//! 0 = (μi+μj+μk+μl) Π[i,j,k,l] + 3 Σm Π[i,j,m] B[m,k,l] - (9/2) G² Σr Π[i,j,r] Π[r,k,l]
//! ```
//!
//! whose ordered solutions are then symmetrized. `B[m,j,k]` is the mode form
//! of the quadratic reaction term. For the point-square reaction `z²` it is
//! the cosine product rule of the chosen [`RecursionVariant`].

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::albrekht::{self, PolySystem};
use crate::error::{Error, Result};
use crate::polytensor::{symmetrize, SymmetrizeMode};
use crate::{GradedPoly, MultiIndex, SymTensor};

/// Neumann eigenpairs of `d²/dx²` on `[0, 1]`: `λ_i = -i²π²`, `φ_0 = 1`,
/// `φ_i = √2 cos(iπx)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NeumannBasis {
    lambdas: Vec<f64>,
}

impl NeumannBasis {
    pub fn new(modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidArgument("basis needs at least one mode".into()));
        }
        let lambdas = (0..modes).map(|i| if i == 0 { 0.0 } else { -((i * i) as f64) * PI * PI }).collect();
        Ok(NeumannBasis { lambdas })
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.lambdas[i]
    }

    /// `φ_i(x)`.
    pub fn phi(i: usize, x: f64) -> f64 {
        if i == 0 {
            1.0
        } else {
            SQRT_2 * (i as f64 * PI * x).cos()
        }
    }

    /// `(φ_0(x), ..., φ_{N-1}(x))`.
    pub fn values(&self, x: f64) -> Vec<f64> {
        (0..self.len()).map(|i| Self::phi(i, x)).collect()
    }
}

pub fn build_basis(modes: usize) -> Result<NeumannBasis> {
    NeumannBasis::new(modes)
}

/// `∫₀¹ φ_i φ_j φ_k dx` for the orthonormal cosine basis, in closed form.
pub fn triple_product(i: usize, j: usize, k: usize) -> f64 {
    let mut idx = [i, j, k];
    idx.sort_unstable();
    match idx {
        [0, 0, 0] => 1.0,
        [0, 0, c] => {
            debug_assert!(c > 0);
            0.0
        }
        [0, b, c] => {
            if b == c {
                1.0
            } else {
                0.0
            }
        }
        [a, b, c] => {
            // cos·cos·cos: the largest index must equal the sum of the other two
            let hit = c == a + b;
            if hit {
                SQRT_2 / 2.0
            } else {
                0.0
            }
        }
    }
}

/// Which cosine product rule feeds the kernel recursions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecursionVariant {
    /// `B[m,j,k] = ½(δ[m,j+k] + δ[m,|j−k|])`, the product rule of unnormalized cosines.
    PaperPrinted,
    /// `B[m,j,k] = ∫ φ_m φ_j φ_k dx` for the √2-normalized basis.
    Orthonormal,
}

impl RecursionVariant {
    pub const ALL: [RecursionVariant; 2] = [RecursionVariant::PaperPrinted, RecursionVariant::Orthonormal];

    pub fn product_coefficient(self, m: usize, j: usize, k: usize) -> f64 {
        match self {
            RecursionVariant::PaperPrinted => {
                let sum = f64::from(u8::from(m == j + k));
                let diff = f64::from(u8::from(m == j.abs_diff(k)));
                0.5 * (sum + diff)
            }
            RecursionVariant::Orthonormal => triple_product(m, j, k),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RecursionVariant::PaperPrinted => "paper-printed",
            RecursionVariant::Orthonormal => "orthonormal",
        }
    }
}

impl fmt::Display for RecursionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecursionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-printed" => Ok(RecursionVariant::PaperPrinted),
            "orthonormal" => Ok(RecursionVariant::Orthonormal),
            other => Err(Error::InvalidArgument(format!("unknown recursion variant `{other}`"))),
        }
    }
}

/// Quadratic reaction term of the model.
#[derive(Clone, Debug, PartialEq)]
pub enum Nonlinearity {
    /// `F2(x, x1, x2) = δ(x − x1) δ(x − x2)`, i.e. the reaction `z²`.
    PointSquare,
    /// Explicit mode tensor: entry `m` holds `B[m, ·, ·]` as a degree-2 tensor over the modes.
    ModeTensor(Vec<SymTensor>),
}

/// The reaction–diffusion problem in mode space.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralModel {
    pub basis: NeumannBasis,
    pub fmul: f64,
    pub gmul: f64,
    pub nonlinearity: Nonlinearity,
}

impl SpectralModel {
    pub fn new(modes: usize, fmul: f64, gmul: f64, nonlinearity: Nonlinearity) -> Result<Self> {
        let basis = NeumannBasis::new(modes)?;
        if let Nonlinearity::ModeTensor(ts) = &nonlinearity {
            if ts.len() != modes {
                return Err(Error::DimensionMismatch { expected: modes, found: ts.len() });
            }
            for t in ts {
                if t.dim() != modes {
                    return Err(Error::DimensionMismatch { expected: modes, found: t.dim() });
                }
                if t.degree() != 2 {
                    return Err(Error::InconsistentDegree { expected: 2, found: t.degree() });
                }
            }
        }
        if !fmul.is_finite() || !gmul.is_finite() {
            return Err(Error::InvalidArgument("multipliers must be finite".into()));
        }
        Ok(SpectralModel { basis, fmul, gmul, nonlinearity })
    }

    /// The rod example: `z_t = z_xx + u + z²`.
    pub fn heated_rod(modes: usize) -> Result<Self> {
        Self::new(modes, 0.0, 1.0, Nonlinearity::PointSquare)
    }

    pub fn modes(&self) -> usize {
        self.basis.len()
    }

    /// `B[m, j, k]` used by the recursions.
    pub fn source_coefficient(&self, variant: RecursionVariant, m: usize, j: usize, k: usize) -> f64 {
        match &self.nonlinearity {
            Nonlinearity::PointSquare => variant.product_coefficient(m, j, k),
            Nonlinearity::ModeTensor(ts) => ts[m].get(&MultiIndex::new(vec![j, k])),
        }
    }

    /// Linear-quadratic part in mode coordinates, `Q = R = I`.
    pub fn lq_system(&self) -> Result<PolySystem> {
        let n = self.modes();
        let f = DMatrix::from_fn(n, n, |i, j| if i == j { self.basis.lambda(i) + self.fmul } else { 0.0 });
        let g = DMatrix::<f64>::identity(n, n) * self.gmul;
        PolySystem::new(f, g, DMatrix::identity(n, n), DMatrix::zeros(n, n), DMatrix::identity(n, n))
    }
}

/// Quadratic kernel, linear feedback kernel and per-mode closed-loop eigenvalues.
#[derive(Clone, Debug, PartialEq)]
pub struct RiccatiModes {
    pub pi2: DMatrix<f64>,
    pub k1: DMatrix<f64>,
    /// `mu[i]` is the closed-loop rate of mode `i` (the closed loop is diagonal in the cosine basis).
    pub mu: Vec<f64>,
    /// Frobenius-norm Riccati residual of `pi2`.
    pub residual: f64,
}

/// Solves the `N`-mode Riccati equation.
pub fn riccati_modes(model: &SpectralModel) -> Result<RiccatiModes> {
    let sys = model.lq_system()?;
    let lqr = albrekht::solve_are(&sys)?;
    let closed = lqr.closed_loop(&sys);
    let n = model.modes();
    let off_diag = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|ij| closed[ij].abs())
        .fold(0.0, f64::max);
    if off_diag > 1e-8 * (1.0 + closed.amax()) {
        return Err(Error::InvalidArgument("closed loop is not diagonal in the cosine basis".into()));
    }
    let mu = (0..n).map(|i| closed[(i, i)]).collect();
    let residual = albrekht::are_residual(&sys, &lqr.p);
    Ok(RiccatiModes { k1: -(&lqr.p) * model.gmul, pi2: lqr.p, mu, residual })
}

fn ordered_tuples(n: usize, degree: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = n.pow(degree as u32);
    (0..total).map(move |mut code| {
        let mut t = vec![0; degree];
        for slot in t.iter_mut().rev() {
            *slot = code % n;
            code /= n;
        }
        t
    })
}

/// Unsymmetrized solutions of the cubic recursion, one per ordered tuple.
pub fn cubic_ordered(
    model: &SpectralModel,
    pi2: &DMatrix<f64>,
    mu: &[f64],
    variant: RecursionVariant,
) -> BTreeMap<Vec<usize>, f64> {
    let n = model.modes();
    ordered_tuples(n, 3)
        .map(|t| {
            let (i, j, k) = (t[0], t[1], t[2]);
            let source: f64 = (0..n).map(|m| pi2[(i, m)] * model.source_coefficient(variant, m, j, k)).sum();
            let value = -source / (mu[i] + mu[j] + mu[k]);
            (t, value)
        })
        .collect()
}

/// Symmetrized cubic cost coefficients `Π[i,j,k]`.
pub fn cubic_coeffs(model: &SpectralModel, pi2: &DMatrix<f64>, mu: &[f64], variant: RecursionVariant) -> Result<SymTensor> {
    let raw = cubic_ordered(model, pi2, mu, variant);
    symmetrize(model.modes(), 3, &raw, SymmetrizeMode::Strict)
}

/// Unsymmetrized solutions of the quartic recursion; `pi3` must already be symmetric.
pub fn quartic_ordered(
    model: &SpectralModel,
    pi3: &SymTensor,
    mu: &[f64],
    variant: RecursionVariant,
) -> BTreeMap<Vec<usize>, f64> {
    let n = model.modes();
    let g2 = model.gmul * model.gmul;
    // Π[i,j,·] rows, indexed by the sorted pair
    let row = |i: usize, j: usize| -> Vec<f64> { (0..n).map(|m| pi3.get_ordered(&[i, j, m])).collect() };
    let rows: Vec<Vec<Vec<f64>>> = (0..n).map(|i| (0..n).map(|j| row(i, j)).collect()).collect();
    ordered_tuples(n, 4)
        .map(|t| {
            let (i, j, k, l) = (t[0], t[1], t[2], t[3]);
            let ij = &rows[i][j];
            let kl = &rows[k][l];
            let transport: f64 = (0..n).map(|m| ij[m] * model.source_coefficient(variant, m, k, l)).sum();
            let quadratic: f64 = (0..n).map(|r| ij[r] * kl[r]).sum();
            let source = 3.0 * transport - 4.5 * g2 * quadratic;
            let value = -source / (mu[i] + mu[j] + mu[k] + mu[l]);
            (t, value)
        })
        .collect()
}

/// Symmetrized quartic cost coefficients `Π[i,j,k,l]`.
pub fn quartic_coeffs(model: &SpectralModel, pi3: &SymTensor, mu: &[f64], variant: RecursionVariant) -> Result<SymTensor> {
    if pi3.dim() != model.modes() || pi3.degree() != 3 {
        return Err(Error::DimensionMismatch { expected: model.modes(), found: pi3.dim() });
    }
    let raw = quartic_ordered(model, pi3, mu, variant);
    symmetrize(model.modes(), 4, &raw, SymmetrizeMode::Strict)
}

/// Feedback kernels in mode form: `ν_i = Σ K1[i,j] ζ_j + Σ K2[i,j,k] ζ_j ζ_k + Σ K3[i,j,k,l] ζ_j ζ_k ζ_l`.
///
/// `K2 = −3 G Π[3]` and `K3 = −4 G Π[4]`; the first tensor slot is the output mode.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackKernels {
    pub k1: DMatrix<f64>,
    pub k2: SymTensor,
    pub k3: SymTensor,
}

pub fn feedback_kernels(pi2: &DMatrix<f64>, pi3: &SymTensor, pi4: &SymTensor, gmul: f64) -> FeedbackKernels {
    FeedbackKernels { k1: -pi2 * gmul, k2: pi3.scale(-3.0 * gmul), k3: pi4.scale(-4.0 * gmul) }
}

impl FeedbackKernels {
    /// Per-control feedback polynomials; degree-`k` terms come from contracting the output slot.
    pub fn feedback_polys(&self) -> Result<Vec<GradedPoly>> {
        let n = self.k1.nrows();
        (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                let row: Vec<f64> = self.k1.row(i).iter().copied().collect();
                GradedPoly::new(n)
                    .with(SymTensor::from_vector(&row))?
                    .with(self.k2.contract(&[&e])?)?
                    .with(self.k3.contract(&[&e])?)
            })
            .collect()
    }
}

/// Everything the spectral recursion produces for one variant.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelCoeffs {
    pub variant: RecursionVariant,
    pub pi2: DMatrix<f64>,
    pub pi3: SymTensor,
    pub pi4: SymTensor,
    pub kernels: FeedbackKernels,
    pub mu: Vec<f64>,
}

impl KernelCoeffs {
    pub fn compute(model: &SpectralModel, variant: RecursionVariant) -> Result<Self> {
        let rm = riccati_modes(model)?;
        Self::from_riccati(model, &rm, variant)
    }

    pub fn from_riccati(model: &SpectralModel, rm: &RiccatiModes, variant: RecursionVariant) -> Result<Self> {
        let pi3 = cubic_coeffs(model, &rm.pi2, &rm.mu, variant)?;
        let pi4 = quartic_coeffs(model, &pi3, &rm.mu, variant)?;
        let kernels = feedback_kernels(&rm.pi2, &pi3, &pi4, model.gmul);
        Ok(KernelCoeffs { variant, pi2: rm.pi2.clone(), pi3, pi4, kernels, mu: rm.mu.clone() })
    }

    pub fn pi2_tensor(&self) -> SymTensor {
        let n = self.pi2.nrows();
        SymTensor::from_matrix(n, self.pi2.transpose().as_slice()).expect("square")
    }

    /// `½ ζ'Π[2]ζ + Π[3](ζ) + Π[4](ζ)` in the symmetric-sum convention.
    pub fn cost_poly(&self) -> Result<GradedPoly> {
        GradedPoly::new(self.pi2.nrows())
            .with(self.pi2_tensor().scale(0.5))?
            .with(self.pi3.clone())?
            .with(self.pi4.clone())
    }
}

/// Samples `Σ Π[i1..ik] φ_i1(x1)···φ_ik(xk)` on the tensor grid `grid^k`.
///
/// Rows are `(x1, ..., xk, value)` with the last coordinate varying fastest.
pub fn kernel_on_grid(coeffs: &SymTensor, grid: &[f64]) -> Result<Vec<(Vec<f64>, f64)>> {
    if let Some(x) = grid.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InvalidArgument(format!("grid point {x} outside [0, 1]")));
    }
    let degree = coeffs.degree();
    let n = coeffs.dim();
    let values: Vec<Vec<f64>> = grid.iter().map(|&x| (0..n).map(|i| NeumannBasis::phi(i, x)).collect()).collect();
    let mut out = Vec::with_capacity(grid.len().pow(degree as u32));
    for pts in ordered_tuples(grid.len(), degree) {
        let slots: Vec<&[f64]> = pts.iter().map(|&p| values[p].as_slice()).collect();
        let v = coeffs.contract(&slots)?.scalar().expect("fully contracted");
        out.push((pts.iter().map(|&p| grid[p]).collect(), v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, intervals: usize) -> f64 {
        let h = 1.0 / intervals as f64;
        let mut acc = f(0.0) + f(1.0);
        for s in 1..intervals {
            let w = if s % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(s as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn basis_eigenvalues() {
        assert_eq!(build_basis(1).unwrap().lambdas(), &[0.0]);
        let b = build_basis(4).unwrap();
        assert!((b.lambda(3) + 88.8264).abs() < 1e-4);
        assert!(b.lambdas().windows(2).all(|w| w[1] < w[0]));
        assert!(build_basis(0).is_err());
    }

    #[test]
    fn orthonormal_by_quadrature() {
        for i in 0..8 {
            for j in 0..8 {
                let v = simpson(|x| NeumannBasis::phi(i, x) * NeumannBasis::phi(j, x), 2000);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-10, "({i},{j}) {v}");
            }
        }
    }

    #[test]
    fn triple_product_against_quadrature() {
        assert_eq!(triple_product(0, 0, 0), 1.0);
        assert_eq!(triple_product(0, 1, 1), 1.0);
        assert!((triple_product(2, 1, 1) - SQRT_2 / 2.0).abs() < 1e-15);
        assert_eq!(triple_product(1, 2, 4), 0.0);
        for i in 0..6 {
            for j in 0..6 {
                for k in 0..6 {
                    let q = simpson(
                        |x| NeumannBasis::phi(i, x) * NeumannBasis::phi(j, x) * NeumannBasis::phi(k, x),
                        2000,
                    );
                    assert!((q - triple_product(i, j, k)).abs() < 1e-10, "({i},{j},{k})");
                }
            }
        }
    }

    #[test]
    fn single_mode_riccati() {
        let rm = riccati_modes(&SpectralModel::heated_rod(1).unwrap()).unwrap();
        assert!((rm.pi2[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((rm.k1[(0, 0)] + 1.0).abs() < 1e-12);
        assert!((rm.mu[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn printed_product_rule() {
        let v = RecursionVariant::PaperPrinted;
        assert_eq!(v.product_coefficient(0, 0, 0), 1.0);
        assert_eq!(v.product_coefficient(0, 1, 1), 0.5);
        assert_eq!(v.product_coefficient(1, 0, 1), 1.0);
        assert_eq!(v.product_coefficient(2, 1, 1), 0.5);
        assert_eq!(v.product_coefficient(3, 1, 2), 0.5);
        assert_eq!(v.product_coefficient(4, 1, 2), 0.0);
    }

    #[test]
    fn cubic_ordered_solves() {
        let model = SpectralModel::heated_rod(8).unwrap();
        let rm = riccati_modes(&model).unwrap();
        let raw = cubic_ordered(&model, &rm.pi2, &rm.mu, RecursionVariant::PaperPrinted);
        assert!((raw[&vec![0, 0, 0]] - 1.0 / 3.0).abs() < 1e-12);
        assert!((raw[&vec![0, 1, 1]] - 0.023992).abs() < 1e-6);
        assert!((raw[&vec![1, 0, 1]] - 0.0024246).abs() < 1e-7);
        assert_eq!(raw[&vec![1, 0, 1]], raw[&vec![1, 1, 0]]);
        let pi3 = cubic_coeffs(&model, &rm.pi2, &rm.mu, RecursionVariant::Orthonormal).unwrap();
        assert!((pi3.get_ordered(&[0, 0, 0]) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn quartic_corner() {
        let model = SpectralModel::heated_rod(4).unwrap();
        for variant in RecursionVariant::ALL {
            let kc = KernelCoeffs::compute(&model, variant).unwrap();
            assert!((kc.pi4.get_ordered(&[0, 0, 0, 0]) - 0.125).abs() < 1e-12);
        }
    }

    #[test]
    fn kernels_vanish_without_actuation_scale() {
        let pi2 = DMatrix::identity(2, 2);
        let pi3 = SymTensor::from_fn(2, 3, |_| 1.0);
        let pi4 = SymTensor::from_fn(2, 4, |_| 1.0);
        let k = feedback_kernels(&pi2, &pi3, &pi4, 0.0);
        assert!(k.k1.iter().all(|&v| v == 0.0));
        assert!(k.k2.is_zero() && k.k3.is_zero());
        let k = feedback_kernels(&pi2, &pi3, &pi4, 1.0);
        assert_eq!(k.k2.get_ordered(&[0, 1, 1]), -3.0);
        assert_eq!(k.k3.get_ordered(&[0, 1, 1, 0]), -4.0);
    }

    #[test]
    fn grid_sampling() {
        let one = SymTensor::from_entries(1, 2, [(MultiIndex::new(vec![0, 0]), 1.0)]).unwrap();
        let g = kernel_on_grid(&one, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(g.len(), 9);
        assert!(g.iter().all(|(_, v)| (v - 1.0).abs() < 1e-15));

        let model = SpectralModel::heated_rod(4).unwrap();
        let kc = KernelCoeffs::compute(&model, RecursionVariant::PaperPrinted).unwrap();
        let at0 = kernel_on_grid(&kc.pi2_tensor(), &[0.0]).unwrap()[0].1;
        let oracle: f64 = (0..4)
            .map(|i| {
                let l = model.basis.lambda(i);
                (l + (l * l + 1.0).sqrt()) * NeumannBasis::phi(i, 0.0).powi(2)
            })
            .sum();
        assert!((at0 - oracle).abs() < 1e-10);
        assert!((at0 - 1.13765).abs() < 1e-5);

        let grid = [0.1, 0.35, 0.8];
        let vals = kernel_on_grid(&kc.pi2_tensor(), &grid).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert!((vals[a * 3 + b].1 - vals[b * 3 + a].1).abs() < 1e-14);
            }
        }
        assert!(kernel_on_grid(&one, &[1.5]).is_err());
    }
}
