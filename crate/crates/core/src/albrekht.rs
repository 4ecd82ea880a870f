//! Degree-by-degree Taylor expansion of the optimal cost and optimal feedback
//! of a smooth finite-dimensional control problem.
//!
//! The problem is `ż = f(z, u)`, minimize `∫ l(z, u) dt`, with
//!
//! ```text
//! f(z, u) = F z + G u + f[2](z, u) + f[3](z, u) + ...
//! l(z, u) = ½ (z'Qz + 2 z'Su + u'Ru) + l[3](z, u) + ...
//! ```
//!
//! The linear-quadratic part is solved first (Riccati equation, Newton–Kleinman
//! iteration). Each further cost degree `π[k+1]` solves the linear equation
//! `∂π[k+1]/∂z · (F+GK) z = -(known terms)` on the degree-`(k+1)` monomial
//! space, and each feedback degree `κ[k]` follows from the stationarity
//! condition in `u`. The higher terms `f[k]`, `l[k]` may depend on `u`; the
//! current feedback truncation is substituted for `u` and re-expanded.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::polytensor::{monomials, space_dim, MultiIndex};
use crate::{GradedPoly, Poly, SymTensor};

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-12;
const SHIFT_MAX_STEPS: usize = 200;

/// Finite-dimensional control system given by its graded Taylor data.
#[derive(Clone, Debug, PartialEq)]
pub struct PolySystem {
    n: usize,
    m: usize,
    f: DMatrix<f64>,
    g: DMatrix<f64>,
    q: DMatrix<f64>,
    s: DMatrix<f64>,
    r: DMatrix<f64>,
    /// degree → one tensor per state coordinate, over the `n+m` variables `(z, u)`
    dynamics_terms: BTreeMap<usize, Vec<SymTensor>>,
    /// degree → tensor over `(z, u)`
    lagrangian_terms: BTreeMap<usize, SymTensor>,
}

impl PolySystem {
    /// Linear-quadratic part. Checks shapes, `R > 0` and `Q - S R⁻¹ S' ≥ 0`.
    pub fn new(
        f: DMatrix<f64>,
        g: DMatrix<f64>,
        q: DMatrix<f64>,
        s: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        let n = f.nrows();
        let m = g.ncols();
        let shape = |mat: &DMatrix<f64>, rows: usize, cols: usize| -> Result<()> {
            if mat.nrows() != rows {
                return Err(Error::DimensionMismatch { expected: rows, found: mat.nrows() });
            }
            if mat.ncols() != cols {
                return Err(Error::DimensionMismatch { expected: cols, found: mat.ncols() });
            }
            Ok(())
        };
        shape(&f, n, n)?;
        shape(&g, n, m)?;
        shape(&q, n, n)?;
        shape(&s, n, m)?;
        shape(&r, m, m)?;
        if !linalg::is_symmetric_positive_definite(&r) {
            return Err(Error::IndefiniteR);
        }
        let r_inv = r.clone().cholesky().ok_or(Error::IndefiniteR)?.inverse();
        let reduced = &q - &s * &r_inv * s.transpose();
        let asym = (&q - q.transpose()).amax();
        let min_eig = linalg::min_symmetric_eigenvalue(&reduced);
        if asym > 1e-12 * (1.0 + q.amax()) || min_eig < -1e-10 {
            return Err(Error::IndefiniteStateWeight { min_eigenvalue: min_eig });
        }
        Ok(PolySystem {
            n,
            m,
            f,
            g,
            q,
            s,
            r,
            dynamics_terms: BTreeMap::new(),
            lagrangian_terms: BTreeMap::new(),
        })
    }

    /// Adds the degree-`degree` dynamics term, one tensor per state coordinate.
    pub fn with_dynamics(mut self, degree: usize, terms: Vec<SymTensor>) -> Result<Self> {
        if degree < 2 {
            return Err(Error::InvalidArgument("dynamics terms start at degree 2".into()));
        }
        if terms.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: terms.len() });
        }
        for t in &terms {
            self.check_term(t, degree)?;
        }
        self.dynamics_terms.insert(degree, terms);
        Ok(self)
    }

    /// Adds the degree-`degree` Lagrangian term.
    pub fn with_lagrangian(mut self, degree: usize, term: SymTensor) -> Result<Self> {
        if degree < 3 {
            return Err(Error::InvalidArgument("Lagrangian terms start at degree 3".into()));
        }
        self.check_term(&term, degree)?;
        self.lagrangian_terms.insert(degree, term);
        Ok(self)
    }

    fn check_term(&self, t: &SymTensor, degree: usize) -> Result<()> {
        if t.dim() != self.n + self.m {
            return Err(Error::DimensionMismatch { expected: self.n + self.m, found: t.dim() });
        }
        if t.degree() != degree {
            return Err(Error::InconsistentDegree { expected: degree, found: t.degree() });
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn dynamics_terms(&self) -> &BTreeMap<usize, Vec<SymTensor>> {
        &self.dynamics_terms
    }

    pub fn lagrangian_terms(&self) -> &BTreeMap<usize, SymTensor> {
        &self.lagrangian_terms
    }

    fn r_inv(&self) -> DMatrix<f64> {
        self.r.clone().cholesky().expect("validated at construction").inverse()
    }

    fn joint(&self, z: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: z.len() });
        }
        if u.len() != self.m {
            return Err(Error::DimensionMismatch { expected: self.m, found: u.len() });
        }
        Ok(z.iter().chain(u).copied().collect())
    }

    /// `f(z, u)`.
    pub fn dynamics(&self, z: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let w = self.joint(z, u)?;
        let zv = DVector::from_column_slice(z);
        let uv = DVector::from_column_slice(u);
        let mut out: Vec<f64> = (&self.f * zv + &self.g * uv).iter().copied().collect();
        for terms in self.dynamics_terms.values() {
            for (o, t) in out.iter_mut().zip(terms) {
                *o += t.eval(&w)?;
            }
        }
        Ok(out)
    }

    /// `l(z, u)`.
    pub fn running_cost(&self, z: &[f64], u: &[f64]) -> Result<f64> {
        let w = self.joint(z, u)?;
        let zv = DVector::from_column_slice(z);
        let uv = DVector::from_column_slice(u);
        let quad = zv.dot(&(&self.q * &zv)) + 2.0 * zv.dot(&(&self.s * &uv)) + uv.dot(&(&self.r * &uv));
        let mut l = 0.5 * quad;
        for t in self.lagrangian_terms.values() {
            l += t.eval(&w)?;
        }
        Ok(l)
    }

    /// `∂f/∂u (z, u)` as an `n × m` matrix.
    pub fn control_jacobian(&self, z: &[f64], u: &[f64]) -> Result<DMatrix<f64>> {
        let w = self.joint(z, u)?;
        let mut jac = self.g.clone();
        for terms in self.dynamics_terms.values() {
            for (i, t) in terms.iter().enumerate() {
                let grad = t.gradient(&w)?;
                for c in 0..self.m {
                    jac[(i, c)] += grad[self.n + c];
                }
            }
        }
        Ok(jac)
    }

    /// `∂l/∂u (z, u)`.
    pub fn lagrangian_control_gradient(&self, z: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let w = self.joint(z, u)?;
        let zv = DVector::from_column_slice(z);
        let uv = DVector::from_column_slice(u);
        let mut out: Vec<f64> = (self.s.transpose() * zv + &self.r * uv).iter().copied().collect();
        for t in self.lagrangian_terms.values() {
            let grad = t.gradient(&w)?;
            for c in 0..self.m {
                out[c] += grad[self.n + c];
            }
        }
        Ok(out)
    }

    /// `f` as polynomials over the `n+m` variables `(z, u)`, truncated at `max_degree`.
    pub fn dynamics_polys(&self, max_degree: usize) -> Vec<Poly> {
        let nm = self.n + self.m;
        (0..self.n)
            .map(|i| {
                let mut p = Poly::zero(nm, max_degree);
                if max_degree >= 1 {
                    for j in 0..self.n {
                        p.add_coeff(&MultiIndex::new(vec![j]), self.f[(i, j)]);
                    }
                    for c in 0..self.m {
                        p.add_coeff(&MultiIndex::new(vec![self.n + c]), self.g[(i, c)]);
                    }
                }
                for terms in self.dynamics_terms.values() {
                    p.add_sym(&terms[i]);
                }
                p
            })
            .collect()
    }

    /// `l` as a polynomial over `(z, u)`, truncated at `max_degree`.
    pub fn lagrangian_poly(&self, max_degree: usize) -> Poly {
        let nm = self.n + self.m;
        let mut weight = DMatrix::<f64>::zeros(nm, nm);
        weight.view_mut((0, 0), (self.n, self.n)).copy_from(&self.q);
        weight.view_mut((0, self.n), (self.n, self.m)).copy_from(&self.s);
        weight.view_mut((self.n, 0), (self.m, self.n)).copy_from(&self.s.transpose());
        weight.view_mut((self.n, self.n), (self.m, self.m)).copy_from(&self.r);
        let half: Vec<f64> = (weight * 0.5).transpose().as_slice().to_vec();
        let quad = SymTensor::from_matrix(nm, &half).expect("square");
        let mut p = Poly::from_sym(&quad, max_degree);
        for t in self.lagrangian_terms.values() {
            p.add_sym(t);
        }
        p
    }
}

/// Solution of the linear-quadratic part.
#[derive(Clone, Debug, PartialEq)]
pub struct LqrData {
    /// Quadratic cost kernel: the optimal LQ cost is `½ z'Pz`.
    pub p: DMatrix<f64>,
    /// Optimal gain, `u = K z`.
    pub k: DMatrix<f64>,
    /// Closed-loop eigenvalues in spectral order.
    pub mu: Vec<Complex64>,
    /// Unit-norm left row eigenvectors of `F + GK`, one row per eigenvalue.
    pub psi: DMatrix<Complex64>,
}

impl LqrData {
    pub fn closed_loop(&self, sys: &PolySystem) -> DMatrix<f64> {
        sys.f() + sys.g() * &self.k
    }
}

/// Frobenius norm of `F'P + PF + Q - (PG+S) R⁻¹ (PG+S)'`.
pub fn are_residual(sys: &PolySystem, p: &DMatrix<f64>) -> f64 {
    are_residual_shifted(sys, p, 0.0, &sys.r_inv())
}

fn are_residual_shifted(sys: &PolySystem, p: &DMatrix<f64>, shift: f64, r_inv: &DMatrix<f64>) -> f64 {
    let f = sys.f() - DMatrix::<f64>::identity(sys.n, sys.n) * shift;
    let pgs = p * sys.g() + sys.s();
    (f.transpose() * p + p * &f + sys.q() - &pgs * r_inv * pgs.transpose()).norm()
}

/// Newton–Kleinman iteration on `F - shift·I` from a gain that stabilizes it.
fn newton_kleinman(
    sys: &PolySystem,
    shift: f64,
    k0: DMatrix<f64>,
    r_inv: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = sys.n;
    let f = sys.f() - DMatrix::<f64>::identity(n, n) * shift;
    let mut k = k0;
    let mut best: Option<(f64, DMatrix<f64>, DMatrix<f64>)> = None;
    let mut stalled = 0;
    for _ in 0..NEWTON_MAX_ITER {
        let a = &f + sys.g() * &k;
        let m = sys.q() + sys.s() * &k + k.transpose() * sys.s().transpose() + k.transpose() * sys.r() * &k;
        let p = linalg::lyapunov(&a, &m)
            .ok_or_else(|| Error::NonStabilizable("Lyapunov operator singular along the iteration".into()))?;
        k = -(r_inv * (sys.g().transpose() * &p + sys.s().transpose()));
        let res = are_residual_shifted(sys, &p, shift, r_inv);
        let scale = 1.0 + p.norm();
        if !res.is_finite() {
            return Err(Error::NonStabilizable("non-finite Riccati residual".into()));
        }
        if res <= NEWTON_TOL * scale {
            return Ok((p, k));
        }
        match &best {
            Some((b, _, _)) if res >= *b => stalled += 1,
            _ => {
                stalled = 0;
                best = Some((res, p, k.clone()));
            }
        }
        // rounding floor reached above the target: accept if within the invariant bound
        if stalled >= 3 {
            break;
        }
    }
    match best {
        Some((res, p, k)) if res <= 1e-10 * (1.0 + p.norm()) => Ok((p, k)),
        Some((res, _, _)) => Err(Error::NonStabilizable(format!("Newton–Kleinman did not converge (residual {res:e})"))),
        None => Err(Error::NonStabilizable("no iterations performed".into())),
    }
}

/// Solves the algebraic Riccati equation and reports the closed-loop spectrum.
///
/// When `F` is not Hurwitz, a stabilizing starting gain is found by shift
/// continuation: solve for `F - βI` (stable for large β), then lower β by half
/// the current closed-loop stability margin, warm-starting each solve.
pub fn solve_are(sys: &PolySystem) -> Result<LqrData> {
    let n = sys.n;
    let r_inv = sys.r_inv();
    let mut k = DMatrix::<f64>::zeros(sys.m, n);
    let open_max = if n == 0 { f64::NEG_INFINITY } else { linalg::max_real_part(sys.f()) };
    let mut shift = if open_max < -1e-9 { 0.0 } else { open_max.max(0.0) + 1.0 };

    let mut steps = 0;
    let (p, k) = loop {
        let (p, k_next) = newton_kleinman(sys, shift, k, &r_inv)?;
        if shift == 0.0 {
            break (p, k_next);
        }
        let a = sys.f() - DMatrix::<f64>::identity(n, n) * shift + sys.g() * &k_next;
        let margin = -linalg::max_real_part(&a);
        if margin <= 0.0 {
            return Err(Error::NonStabilizable("shifted closed loop lost stability".into()));
        }
        shift = (shift - 0.5 * margin).max(0.0);
        if shift < 1e-12 {
            shift = 0.0;
        }
        k = k_next;
        steps += 1;
        if steps > SHIFT_MAX_STEPS {
            return Err(Error::NonStabilizable("shift continuation stalled; (F, G) looks unstabilizable".into()));
        }
    };

    let closed = sys.f() + sys.g() * &k;
    if n > 0 && linalg::max_real_part(&closed) >= 0.0 {
        return Err(Error::NonStabilizable("closed loop is not Hurwitz".into()));
    }
    let (mu, psi) = linalg::left_eigen(&closed)?;
    Ok(LqrData { p, k, mu, psi })
}

/// Closed-loop eigenvalues (spectral order) and unit-norm left eigenvectors of `F + GK`.
pub fn closed_loop_spectrum(sys: &PolySystem, lqr: &LqrData) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    linalg::left_eigen(&lqr.closed_loop(sys))
}

/// Matrix of `π ↦ ∂π/∂z · A z` on degree-`degree` polynomials, in the
/// monomial-coefficient basis ordered by canonical rank.
pub fn cost_operator(a: &DMatrix<f64>, degree: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let dim = space_dim(n, degree);
    let mut op = DMatrix::<f64>::zeros(dim, dim);
    for (col, mi) in monomials(n, degree).enumerate() {
        for (var, mult) in mi.multiplicities() {
            let rest = mi.without(var).expect("variable present");
            for j in 0..n {
                let aij = a[(var, j)];
                if aij != 0.0 {
                    let row = rest.merge(&MultiIndex::new(vec![j])).rank();
                    op[(row, col)] += mult as f64 * aij;
                }
            }
        }
    }
    op
}

/// Truncated Taylor expansion of the optimal cost and feedback.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyExpansion {
    /// Feedback degree `d`; the cost runs through degree `d + 1`.
    pub degree: usize,
    /// `π[2] + ... + π[d+1]` over the state variables.
    pub cost: GradedPoly,
    /// `κ[1] + ... + κ[d]`, one polynomial per control coordinate.
    pub feedback: Vec<GradedPoly>,
}

impl PolyExpansion {
    /// Degree-1 expansion built from the LQ solution: `π[2] = ½ z'Pz`, `κ[1] = K z`.
    pub fn from_lqr(lqr: &LqrData) -> Self {
        let n = lqr.p.nrows();
        let half_p: Vec<f64> = (&lqr.p * 0.5).transpose().as_slice().to_vec();
        let mut cost = GradedPoly::new(n);
        cost.insert(SymTensor::from_matrix(n, &half_p).expect("square")).expect("dimension");
        let feedback = (0..lqr.k.nrows())
            .map(|c| {
                let row: Vec<f64> = lqr.k.row(c).iter().copied().collect();
                GradedPoly::new(n).with(SymTensor::from_vector(&row)).expect("dimension")
            })
            .collect();
        PolyExpansion { degree: 1, cost, feedback }
    }

    pub fn cost_at(&self, z: &[f64]) -> Result<f64> {
        self.cost.eval(z)
    }

    pub fn feedback_at(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.feedback.iter().map(|k| k.eval(z)).collect()
    }
}

fn check_partial(sys: &PolySystem, partial: &PolyExpansion) -> Result<()> {
    if partial.cost.dim() != sys.n {
        return Err(Error::DimensionMismatch { expected: sys.n, found: partial.cost.dim() });
    }
    if partial.feedback.len() != sys.m {
        return Err(Error::DimensionMismatch { expected: sys.m, found: partial.feedback.len() });
    }
    Ok(())
}

/// Substitution vector `(z, κ(z))` as polynomials in `z`.
fn closed_loop_arguments(sys: &PolySystem, feedback: &[GradedPoly], max_degree: usize) -> Vec<Poly> {
    (0..sys.n)
        .map(|i| Poly::variable(sys.n, max_degree, i))
        .chain(feedback.iter().map(|k| Poly::from_graded(k, max_degree)))
        .collect()
}

/// `∂π/∂z · f(z, κ(z)) + l(z, κ(z))` as a polynomial in `z`, truncated at `max_degree`.
pub fn hamiltonian_poly(
    sys: &PolySystem,
    cost: &GradedPoly,
    feedback: &[GradedPoly],
    max_degree: usize,
) -> Result<Poly> {
    let w = closed_loop_arguments(sys, feedback, max_degree);
    let pi = Poly::from_graded(cost, max_degree + 1);
    let mut h = sys.lagrangian_poly(max_degree).compose(&w, max_degree)?;
    for (i, fi) in sys.dynamics_polys(max_degree).iter().enumerate() {
        let dpi = pi.derivative(i).truncated(max_degree);
        h.add_assign(&dpi.mul(&fi.compose(&w, max_degree)?));
    }
    Ok(h)
}

/// `∂π/∂z · ∂f/∂u(z, κ(z)) + ∂l/∂u(z, κ(z))`, one polynomial per control coordinate.
pub fn control_stationarity_polys(
    sys: &PolySystem,
    cost: &GradedPoly,
    feedback: &[GradedPoly],
    max_degree: usize,
) -> Result<Vec<Poly>> {
    let w = closed_loop_arguments(sys, feedback, max_degree);
    let pi = Poly::from_graded(cost, max_degree + 1);
    let grads: Vec<Poly> = (0..sys.n).map(|i| pi.derivative(i).truncated(max_degree)).collect();
    let fpolys = sys.dynamics_polys(max_degree + 1);
    let lag = sys.lagrangian_poly(max_degree + 1);
    (0..sys.m)
        .map(|c| {
            let uvar = sys.n + c;
            let mut out = lag.derivative(uvar).compose(&w, max_degree)?;
            for (gi, fi) in grads.iter().zip(&fpolys) {
                out.add_assign(&gi.mul(&fi.derivative(uvar).compose(&w, max_degree)?));
            }
            Ok(out)
        })
        .collect()
}

/// Solves for `π[k+1]` given cost degrees `2..=k` and feedback degrees `1..k`.
pub fn solve_cost_degree(sys: &PolySystem, lqr: &LqrData, partial: &PolyExpansion, k: usize) -> Result<SymTensor> {
    if k < 2 {
        return Err(Error::InvalidArgument("cost degrees above the LQ part start at k = 2".into()));
    }
    check_partial(sys, partial)?;
    let target = k + 1;
    let cost = partial.cost.restricted(2, k);
    let feedback: Vec<GradedPoly> = partial.feedback.iter().map(|p| p.restricted(1, k - 1)).collect();
    let h = hamiltonian_poly(sys, &cost, &feedback, target)?;
    let rhs = -DVector::from_column_slice(h.degree_coeffs(target));

    let op = cost_operator(&lqr.closed_loop(sys), target);
    let lu = op.full_piv_lu();
    let pivots = lu.u().diagonal().map(f64::abs);
    let (lo, hi) = (pivots.min(), pivots.max());
    if !pivots.is_empty() && (hi == 0.0 || lo <= 1e-12 * hi) {
        return Err(Error::ResonantOperator { degree: target, pivot: if hi > 0.0 { lo / hi } else { 0.0 } });
    }
    let x = lu
        .solve(&rhs)
        .ok_or(Error::ResonantOperator { degree: target, pivot: 0.0 })?;
    SymTensor::from_monomial_coefficients(sys.n, target, x.as_slice())
}

/// Solves for `κ[k]` given cost degrees `2..=k+1` and feedback degrees `1..k`.
pub fn solve_feedback_degree(
    sys: &PolySystem,
    _lqr: &LqrData,
    partial: &PolyExpansion,
    k: usize,
) -> Result<Vec<SymTensor>> {
    if k < 2 {
        return Err(Error::InvalidArgument("feedback degrees above the LQ gain start at k = 2".into()));
    }
    check_partial(sys, partial)?;
    let cost = partial.cost.restricted(2, k + 1);
    let feedback: Vec<GradedPoly> = partial.feedback.iter().map(|p| p.restricted(1, k - 1)).collect();
    let stationarity = control_stationarity_polys(sys, &cost, &feedback, k)?;
    let r_inv = sys.r_inv();
    let dim = space_dim(sys.n, k);
    (0..sys.m)
        .map(|c| {
            let mut mono = vec![0.0; dim];
            for (d, poly) in stationarity.iter().enumerate() {
                let w = r_inv[(c, d)];
                for (acc, v) in mono.iter_mut().zip(poly.degree_coeffs(k)) {
                    *acc -= w * v;
                }
            }
            SymTensor::from_monomial_coefficients(sys.n, k, &mono)
        })
        .collect()
}

/// Runs the full degree-by-degree procedure up to feedback degree `d`.
pub fn expand(sys: &PolySystem, d: usize) -> Result<PolyExpansion> {
    if d < 1 {
        return Err(Error::InvalidArgument("expansion degree must be at least 1".into()));
    }
    let lqr = solve_are(sys)?;
    expand_with(sys, &lqr, d)
}

/// [`expand`] reusing an already solved LQ part.
pub fn expand_with(sys: &PolySystem, lqr: &LqrData, d: usize) -> Result<PolyExpansion> {
    if d < 1 {
        return Err(Error::InvalidArgument("expansion degree must be at least 1".into()));
    }
    let mut exp = PolyExpansion::from_lqr(lqr);
    for k in 2..=d {
        let cost_k = solve_cost_degree(sys, lqr, &exp, k)?;
        exp.cost.insert(cost_k)?;
        let fb = solve_feedback_degree(sys, lqr, &exp, k)?;
        for (poly, t) in exp.feedback.iter_mut().zip(fb) {
            poly.insert(t)?;
        }
        exp.degree = k;
    }
    Ok(exp)
}

/// Both sHJB left-hand sides at `state`, evaluated with the truncated expansion.
pub fn hjb_residual(sys: &PolySystem, exp: &PolyExpansion, state: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_partial(sys, exp)?;
    let grad = exp.cost.gradient(state)?;
    let u = exp.feedback_at(state)?;
    let f = sys.dynamics(state, &u)?;
    let scalar = grad.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>() + sys.running_cost(state, &u)?;
    let jac = sys.control_jacobian(state, &u)?;
    let mut vector = sys.lagrangian_control_gradient(state, &u)?;
    for (c, v) in vector.iter_mut().enumerate() {
        *v += (0..sys.n).map(|i| grad[i] * jac[(i, c)]).sum::<f64>();
    }
    Ok((scalar, vector))
}

/// Polynomial forms of both sHJB residuals, truncated at `max_degree`.
pub fn hjb_residual_polys(sys: &PolySystem, exp: &PolyExpansion, max_degree: usize) -> Result<(Poly, Vec<Poly>)> {
    check_partial(sys, exp)?;
    Ok((
        hamiltonian_poly(sys, &exp.cost, &exp.feedback, max_degree)?,
        control_stationarity_polys(sys, &exp.cost, &exp.feedback, max_degree)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    /// ẋ = u + x², l = ½(x² + u²)
    fn scalar_quadratic() -> PolySystem {
        let f2 = SymTensor::from_entries(2, 2, [(MultiIndex::new(vec![0, 0]), 1.0)]).unwrap();
        PolySystem::new(scalar(0.0), scalar(1.0), scalar(1.0), scalar(0.0), scalar(1.0))
            .unwrap()
            .with_dynamics(2, vec![f2])
            .unwrap()
    }

    #[test]
    fn scalar_are() {
        let sys = PolySystem::new(scalar(0.0), scalar(1.0), scalar(1.0), scalar(0.0), scalar(1.0)).unwrap();
        let lqr = solve_are(&sys).unwrap();
        assert!((lqr.p[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((lqr.k[(0, 0)] + 1.0).abs() < 1e-12);
        assert!((lqr.mu[0].re + 1.0).abs() < 1e-12);
    }

    #[test]
    fn neumann_mode_are() {
        let lam = -std::f64::consts::PI.powi(2);
        let sys = PolySystem::new(scalar(lam), scalar(1.0), scalar(1.0), scalar(0.0), scalar(1.0)).unwrap();
        let lqr = solve_are(&sys).unwrap();
        assert!((lqr.p[(0, 0)] - (lam + (lam * lam + 1.0).sqrt())).abs() < 1e-12);
        assert!((lqr.p[(0, 0)] - 0.050531).abs() < 1e-6);
    }

    #[test]
    fn unstable_open_loop_needs_shift() {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 2.0]);
        let g = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let sys = PolySystem::new(f, g, DMatrix::identity(2, 2), DMatrix::zeros(2, 1), scalar(1.0)).unwrap();
        let lqr = solve_are(&sys).unwrap();
        assert!(are_residual(&sys, &lqr.p) <= 1e-10 * (1.0 + lqr.p.norm()));
        assert!(lqr.mu.iter().all(|m| m.re < 0.0));
    }

    #[test]
    fn unstabilizable_is_reported() {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let g = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let sys = PolySystem::new(f, g, DMatrix::identity(2, 2), DMatrix::zeros(2, 1), scalar(1.0)).unwrap();
        assert!(matches!(solve_are(&sys), Err(Error::NonStabilizable(_))));
    }

    #[test]
    fn indefinite_weights_rejected() {
        let r = PolySystem::new(scalar(0.0), scalar(1.0), scalar(1.0), scalar(0.0), scalar(-1.0));
        assert_eq!(r.unwrap_err(), Error::IndefiniteR);
        let r = PolySystem::new(scalar(0.0), scalar(1.0), scalar(-1.0), scalar(0.0), scalar(1.0));
        assert!(matches!(r, Err(Error::IndefiniteStateWeight { .. })));
    }

    #[test]
    fn diagonal_spectrum() {
        let f = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let sys = PolySystem::new(
            f,
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            scalar(1.0),
        )
        .unwrap();
        let lqr = solve_are(&sys).unwrap();
        let (mu, psi) = closed_loop_spectrum(&sys, &lqr).unwrap();
        assert_eq!(mu[0], Complex64::new(-1.0, 0.0));
        assert_eq!(mu[1], Complex64::new(-2.0, 0.0));
        assert!((psi[(0, 0)].norm() - 1.0).abs() < 1e-12 && (psi[(1, 1)].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_cost_and_feedback_degrees() {
        let sys = scalar_quadratic();
        let lqr = solve_are(&sys).unwrap();
        let mut exp = PolyExpansion::from_lqr(&lqr);

        let c3 = solve_cost_degree(&sys, &lqr, &exp, 2).unwrap();
        assert!((c3.coeffs()[0] - 1.0 / 3.0).abs() < 1e-12);
        exp.cost.insert(c3).unwrap();
        let k2 = solve_feedback_degree(&sys, &lqr, &exp, 2).unwrap();
        assert!((k2[0].coeffs()[0] + 1.0).abs() < 1e-12);
        exp.feedback[0].insert(k2[0].clone()).unwrap();

        let c4 = solve_cost_degree(&sys, &lqr, &exp, 3).unwrap();
        assert!((c4.coeffs()[0] - 0.125).abs() < 1e-12);
        exp.cost.insert(c4).unwrap();
        let k3 = solve_feedback_degree(&sys, &lqr, &exp, 3).unwrap();
        assert!((k3[0].coeffs()[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_quadratic_terms_give_zero_cubic() {
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.5]);
        let g = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let sys = PolySystem::new(f, g, DMatrix::identity(2, 2), DMatrix::zeros(2, 1), scalar(1.0)).unwrap();
        let exp = expand(&sys, 3).unwrap();
        for k in 3..=4 {
            assert!(exp.cost.term(k).unwrap().max_abs() < 1e-14);
        }
        for k in 2..=3 {
            assert!(exp.feedback[0].term(k).unwrap().max_abs() < 1e-14);
        }
    }

    #[test]
    fn lq_residuals_vanish() {
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, -1.0]);
        let g = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let sys = PolySystem::new(f, g, DMatrix::identity(2, 2), DMatrix::from_row_slice(2, 1, &[0.1, 0.0]), scalar(2.0)).unwrap();
        let exp = expand(&sys, 2).unwrap();
        for z in [[0.0, 0.0], [1.0, -2.0], [0.3, 0.7]] {
            let (s, v) = hjb_residual(&sys, &exp, &z).unwrap();
            assert!(s.abs() < 1e-10, "{s}");
            assert!(v[0].abs() < 1e-10);
        }
    }

    #[test]
    fn u_dependent_higher_terms() {
        // ẋ = u + x u, l = ½(x² + u²) + x²u: hand check against the
        // polynomial residual rather than a closed form.
        let f2 = SymTensor::from_entries(2, 2, [(MultiIndex::new(vec![0, 1]), 0.5)]).unwrap();
        let l3 = SymTensor::from_entries(2, 3, [(MultiIndex::new(vec![0, 0, 1]), 1.0 / 3.0)]).unwrap();
        let sys = PolySystem::new(scalar(-0.5), scalar(1.0), scalar(1.0), scalar(0.0), scalar(1.0))
            .unwrap()
            .with_dynamics(2, vec![f2])
            .unwrap()
            .with_lagrangian(3, l3)
            .unwrap();
        let exp = expand(&sys, 3).unwrap();
        let (h, g) = hjb_residual_polys(&sys, &exp, 6).unwrap();
        assert!(h.max_abs_in(0, 4) < 1e-12);
        assert!(g[0].max_abs_in(0, 3) < 1e-12);
        assert!(h.max_abs_in(5, 5) > 1e-6);
    }
}
