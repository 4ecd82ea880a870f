//! Fully symmetric coefficient tensors and graded multivariate polynomials.
//!
//! Two storage conventions live here:
//!
//! * [`SymTensor`] uses the *symmetric-sum* convention. A degree-`k` tensor over
//!   `n` variables represents `Σ T[i1..ik] z[i1]···z[ik]` where the sum runs
//!   over **all ordered** index tuples. Only one coefficient per sorted tuple is
//!   stored, so the monomial coefficient of `z^m` is `k!/Π m_i! · T[sorted]`.
//! * [`Poly`] stores plain monomial coefficients and is the working type for
//!   products, derivatives and substitution.
//!
//! Sorted tuples are laid out densely in graded-colex order. The colex rank of
//! a sorted tuple does not depend on the number of variables, so truncating a
//! tensor to fewer variables keeps every surviving coefficient in place.

use std::collections::BTreeMap;
use std::fmt::{self, Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};

/// Floating point scalar usable by the tensor algebra (`f32` or `f64`).
pub trait Scalar: Float + FromPrimitive + Debug + Display + Send + Sync + 'static {}

impl<T> Scalar for T where T: Float + FromPrimitive + Debug + Display + Send + Sync + 'static {}

fn cast<T: Scalar>(v: usize) -> T {
    T::from_usize(v).expect("usize fits in a float")
}

/// Binomial coefficient `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Number of sorted degree-`k` tuples over `n` variables, `C(n+k-1, k)`.
pub fn space_dim(n: usize, k: usize) -> usize {
    if n == 0 {
        return usize::from(k == 0);
    }
    binomial(n + k - 1, k)
}

/// A sorted (non-decreasing) tuple of variable indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    /// Builds the canonical (sorted) form of an arbitrary index tuple.
    pub fn new(indices: impl Into<Vec<usize>>) -> Self {
        let mut v = indices.into();
        v.sort_unstable();
        MultiIndex(v)
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn max_index(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// Colex position among sorted tuples of the same degree.
    pub fn rank(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .map(|(t, &a)| binomial(a + t, t + 1))
            .sum()
    }

    /// `(variable, multiplicity)` pairs in increasing variable order.
    pub fn multiplicities(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for &i in &self.0 {
            match out.last_mut() {
                Some((v, c)) if *v == i => *c += 1,
                _ => out.push((i, 1)),
            }
        }
        out
    }

    /// Number of distinct orderings, `k! / Π m_i!`.
    pub fn multinomial(&self) -> usize {
        let mut acc = 1usize;
        let mut placed = 0usize;
        for (_, m) in self.multiplicities() {
            placed += m;
            acc *= binomial(placed, m);
        }
        acc
    }

    /// Merges two sorted tuples (the product of the two monomials).
    pub fn merge(&self, other: &MultiIndex) -> MultiIndex {
        let mut v = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut a, mut b) = (0, 0);
        while a < self.0.len() && b < other.0.len() {
            if self.0[a] <= other.0[b] {
                v.push(self.0[a]);
                a += 1;
            } else {
                v.push(other.0[b]);
                b += 1;
            }
        }
        v.extend_from_slice(&self.0[a..]);
        v.extend_from_slice(&other.0[b..]);
        MultiIndex(v)
    }

    /// Removes one occurrence of `var`, if present.
    pub fn without(&self, var: usize) -> Option<MultiIndex> {
        let pos = self.0.iter().position(|&i| i == var)?;
        let mut v = self.0.clone();
        v.remove(pos);
        Some(MultiIndex(v))
    }

    /// Evaluates the monomial `Π z[i]`.
    pub fn monomial<T: Scalar>(&self, state: &[T]) -> T {
        self.0.iter().fold(T::one(), |acc, &i| acc * state[i])
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        match self.max_index() {
            Some(i) if i >= n => Err(Error::IndexOutOfRange { index: i, dim: n }),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Rank of `mi` in the graded-colex enumeration of degree-`k` tuples over `n` variables.
pub fn canonical_rank(mi: &MultiIndex, n: usize) -> Result<usize> {
    mi.check_dim(n)?;
    Ok(mi.rank())
}

/// Iterator over all sorted degree-`k` tuples over `n` variables in colex order.
#[derive(Clone, Debug)]
pub struct Monomials {
    n: usize,
    current: Option<Vec<usize>>,
}

/// Enumerates the degree-`k` monomial basis over `n` variables in rank order.
pub fn monomials(n: usize, k: usize) -> Monomials {
    let current = if n == 0 && k > 0 { None } else { Some(vec![0; k]) };
    Monomials { n, current }
}

impl Iterator for Monomials {
    type Item = MultiIndex;

    fn next(&mut self) -> Option<MultiIndex> {
        let cur = self.current.take()?;
        let k = cur.len();
        let mut next = cur.clone();
        let mut advanced = false;
        for t in 0..k {
            let cap = if t + 1 < k { next[t + 1] } else { self.n - 1 };
            if next[t] < cap {
                next[t] += 1;
                for s in next.iter_mut().take(t) {
                    *s = 0;
                }
                advanced = true;
                break;
            }
        }
        if advanced {
            self.current = Some(next);
        }
        Some(MultiIndex(cur))
    }
}

/// How [`symmetrize`] treats orderings of a sorted tuple that are absent from the input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SymmetrizeMode {
    /// Average over the orderings actually supplied.
    #[default]
    Supplied,
    /// Every distinct ordering of every supplied tuple must be present.
    Strict,
}

/// Degree-`k` fully symmetric tensor over `n` variables (symmetric-sum convention).
#[derive(Clone, Debug, PartialEq)]
pub struct SymTensor<T> {
    dim: usize,
    degree: usize,
    coeffs: Vec<T>,
}

impl<T: Scalar> SymTensor<T> {
    pub fn zeros(dim: usize, degree: usize) -> Self {
        SymTensor { dim, degree, coeffs: vec![T::zero(); space_dim(dim, degree)] }
    }

    pub fn from_fn(dim: usize, degree: usize, mut f: impl FnMut(&MultiIndex) -> T) -> Self {
        let coeffs = monomials(dim, degree).map(|mi| f(&mi)).collect();
        SymTensor { dim, degree, coeffs }
    }

    /// Builds a tensor from `(tuple, value)` pairs. Tuples are canonicalized;
    /// a later pair for the same sorted tuple overwrites an earlier one.
    pub fn from_entries(
        dim: usize,
        degree: usize,
        entries: impl IntoIterator<Item = (MultiIndex, T)>,
    ) -> Result<Self> {
        let mut t = Self::zeros(dim, degree);
        for (mi, v) in entries {
            t.check_index(&mi)?;
            let r = mi.rank();
            t.coeffs[r] = v;
        }
        Ok(t)
    }

    /// Degree-1 tensor with the given coordinates.
    pub fn from_vector(v: &[T]) -> Self {
        SymTensor { dim: v.len(), degree: 1, coeffs: v.to_vec() }
    }

    /// Degree-2 tensor from a square matrix given row-major; the matrix is
    /// averaged with its transpose.
    pub fn from_matrix(dim: usize, rows: &[T]) -> Result<Self> {
        if rows.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: rows.len() });
        }
        let half = T::from_f64(0.5).unwrap();
        Ok(Self::from_fn(dim, 2, |mi| {
            let (i, j) = (mi.indices()[0], mi.indices()[1]);
            half * (rows[i * dim + j] + rows[j * dim + i])
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Coefficients in rank order.
    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn get(&self, mi: &MultiIndex) -> T {
        debug_assert_eq!(mi.degree(), self.degree);
        self.coeffs[mi.rank()]
    }

    /// Coefficient at an arbitrary (unsorted) ordered tuple.
    pub fn get_ordered(&self, indices: &[usize]) -> T {
        self.get(&MultiIndex::new(indices.to_vec()))
    }

    /// The single coefficient of a degree-0 tensor.
    pub fn scalar(&self) -> Option<T> {
        (self.degree == 0).then(|| self.coeffs[0])
    }

    pub fn iter(&self) -> impl Iterator<Item = (MultiIndex, T)> + '_ {
        monomials(self.dim, self.degree).zip(self.coeffs.iter().copied())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    pub fn max_abs(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |m, c| m.max(c.abs()))
    }

    pub fn scale(&self, s: T) -> Self {
        SymTensor { dim: self.dim, degree: self.degree, coeffs: self.coeffs.iter().map(|&c| c * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| a + b).collect();
        Ok(SymTensor { dim: self.dim, degree: self.degree, coeffs })
    }

    /// Monomial coefficient of the monomial named by `mi` (multinomial × stored value).
    pub fn monomial_coefficient(&self, mi: &MultiIndex) -> T {
        cast::<T>(mi.multinomial()) * self.get(mi)
    }

    /// Inverse of [`SymTensor::monomial_coefficient`] applied to a dense rank-ordered vector.
    pub fn from_monomial_coefficients(dim: usize, degree: usize, mono: &[T]) -> Result<Self> {
        if mono.len() != space_dim(dim, degree) {
            return Err(Error::DimensionMismatch { expected: space_dim(dim, degree), found: mono.len() });
        }
        let coeffs = monomials(dim, degree)
            .zip(mono)
            .map(|(mi, &c)| c / cast::<T>(mi.multinomial()))
            .collect();
        Ok(SymTensor { dim, degree, coeffs })
    }

    /// Every distinct ordered tuple with its (shared) coefficient.
    pub fn to_ordered(&self) -> BTreeMap<Vec<usize>, T> {
        let mut out = BTreeMap::new();
        for (mi, c) in self.iter() {
            for perm in distinct_orderings(mi.indices()) {
                out.insert(perm, c);
            }
        }
        out
    }

    /// Full symmetric sum `Σ T[i1..ik] z[i1]···z[ik]`.
    pub fn eval(&self, state: &[T]) -> Result<T> {
        self.check_state(state)?;
        Ok(self.iter().fold(T::zero(), |acc, (mi, c)| {
            if c.is_zero() {
                acc
            } else {
                acc + cast::<T>(mi.multinomial()) * c * mi.monomial(state)
            }
        }))
    }

    /// Analytic gradient of [`SymTensor::eval`].
    pub fn gradient(&self, state: &[T]) -> Result<Vec<T>> {
        self.check_state(state)?;
        let mut g = vec![T::zero(); self.dim];
        for (mi, c) in self.iter() {
            if c.is_zero() {
                continue;
            }
            let w = cast::<T>(mi.multinomial()) * c;
            for (var, m) in mi.multiplicities() {
                let rest = mi.without(var).expect("variable present");
                g[var] = g[var] + w * cast::<T>(m) * rest.monomial(state);
            }
        }
        Ok(g)
    }

    /// Fills `slots.len()` argument slots with the given vectors.
    ///
    /// The result has degree `degree - slots.len()`; filling every slot with the
    /// same vector `z` gives the degree-0 tensor holding `eval(z)`.
    pub fn contract(&self, slots: &[&[T]]) -> Result<SymTensor<T>> {
        if slots.len() > self.degree {
            return Err(Error::InvalidArgument(format!(
                "cannot fill {} slots of a degree-{} tensor",
                slots.len(),
                self.degree
            )));
        }
        for s in slots {
            self.check_state(s)?;
        }
        let rest_degree = self.degree - slots.len();
        let n = self.dim;
        let mut out = SymTensor::zeros(n, rest_degree);
        let filled = slots.len();
        let total = n.pow(filled as u32);
        for (r, rest) in monomials(n, rest_degree).enumerate() {
            let mut acc = T::zero();
            let mut tuple = vec![0usize; filled];
            for code in 0..total {
                let mut c = code;
                let mut weight = T::one();
                for (s, slot) in tuple.iter_mut().enumerate() {
                    *slot = c % n;
                    c /= n;
                    weight = weight * slots[s][*slot];
                }
                if weight.is_zero() {
                    continue;
                }
                let full = rest.merge(&MultiIndex::new(tuple.clone()));
                acc = acc + weight * self.coeffs[full.rank()];
            }
            out.coeffs[r] = acc;
        }
        Ok(out)
    }

    /// Restricts to the first `dim` variables.
    pub fn truncate_dim(&self, dim: usize) -> Self {
        let dim = dim.min(self.dim);
        Self::from_fn(dim, self.degree, |mi| self.get(mi))
    }

    /// Re-embeds into a larger variable space; new coefficients are zero.
    pub fn embed(&self, dim: usize) -> Result<Self> {
        if dim < self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: dim });
        }
        let mut out = SymTensor::zeros(dim, self.degree);
        out.coeffs[..self.coeffs.len()].copy_from_slice(&self.coeffs);
        Ok(out)
    }

    pub(crate) fn set(&mut self, mi: &MultiIndex, v: T) {
        let r = mi.rank();
        self.coeffs[r] = v;
    }

    fn check_index(&self, mi: &MultiIndex) -> Result<()> {
        if mi.degree() != self.degree {
            return Err(Error::InconsistentDegree { expected: self.degree, found: mi.degree() });
        }
        mi.check_dim(self.dim)
    }

    fn check_state(&self, state: &[T]) -> Result<()> {
        if state.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: state.len() });
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        if self.degree != other.degree {
            return Err(Error::InconsistentDegree { expected: self.degree, found: other.degree });
        }
        Ok(())
    }
}

/// All distinct permutations of a sorted tuple, in lexicographic order.
pub fn distinct_orderings(sorted: &[usize]) -> Vec<Vec<usize>> {
    let mut cur = sorted.to_vec();
    cur.sort_unstable();
    let mut out = vec![cur.clone()];
    // next lexicographic permutation
    loop {
        let k = cur.len();
        if k < 2 {
            break;
        }
        let Some(i) = (0..k - 1).rev().find(|&i| cur[i] < cur[i + 1]) else {
            break;
        };
        let j = (i + 1..k).rev().find(|&j| cur[j] > cur[i]).expect("successor exists");
        cur.swap(i, j);
        cur[i + 1..].reverse();
        out.push(cur.clone());
    }
    out
}

/// Averages ordered-tuple values onto their sorted tuple.
///
/// With [`SymmetrizeMode::Supplied`] the average runs over the orderings that
/// are present; [`SymmetrizeMode::Strict`] rejects input missing any ordering.
pub fn symmetrize<T: Scalar>(
    dim: usize,
    degree: usize,
    raw: &BTreeMap<Vec<usize>, T>,
    mode: SymmetrizeMode,
) -> Result<SymTensor<T>> {
    let mut sums: BTreeMap<MultiIndex, (T, usize)> = BTreeMap::new();
    for (tuple, &v) in raw {
        if tuple.len() != degree {
            return Err(Error::InconsistentDegree { expected: degree, found: tuple.len() });
        }
        let mi = MultiIndex::new(tuple.clone());
        mi.check_dim(dim)?;
        let e = sums.entry(mi).or_insert((T::zero(), 0));
        e.0 = e.0 + v;
        e.1 += 1;
    }
    let mut out = SymTensor::zeros(dim, degree);
    for (mi, (sum, count)) in sums {
        if mode == SymmetrizeMode::Strict && count != mi.multinomial() {
            return Err(Error::MissingOrdering { tuple: mi.indices().to_vec() });
        }
        out.set(&mi, sum / cast::<T>(count));
    }
    Ok(out)
}

/// Sum of homogeneous symmetric tensors of degree ≥ 1 over a common variable space.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedPoly<T> {
    dim: usize,
    terms: BTreeMap<usize, SymTensor<T>>,
}

impl<T: Scalar> GradedPoly<T> {
    pub fn new(dim: usize) -> Self {
        GradedPoly { dim, terms: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds (or replaces) the homogeneous term of `t.degree()`.
    pub fn insert(&mut self, t: SymTensor<T>) -> Result<()> {
        if t.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: t.dim() });
        }
        if t.degree() == 0 {
            return Err(Error::InvalidArgument("graded polynomials start at degree 1".into()));
        }
        self.terms.insert(t.degree(), t);
        Ok(())
    }

    pub fn with(mut self, t: SymTensor<T>) -> Result<Self> {
        self.insert(t)?;
        Ok(self)
    }

    pub fn term(&self, degree: usize) -> Option<&SymTensor<T>> {
        self.terms.get(&degree)
    }

    pub fn terms(&self) -> impl Iterator<Item = &SymTensor<T>> {
        self.terms.values()
    }

    pub fn degrees(&self) -> impl Iterator<Item = usize> + '_ {
        self.terms.keys().copied()
    }

    pub fn max_degree(&self) -> usize {
        self.terms.keys().next_back().copied().unwrap_or(0)
    }

    /// Keeps only the terms with degree in `lo..=hi`.
    pub fn restricted(&self, lo: usize, hi: usize) -> Self {
        GradedPoly {
            dim: self.dim,
            terms: self.terms.range(lo..=hi).map(|(&d, t)| (d, t.clone())).collect(),
        }
    }

    pub fn eval(&self, state: &[T]) -> Result<T> {
        self.check_state(state)?;
        self.terms.values().try_fold(T::zero(), |acc, t| Ok(acc + t.eval(state)?))
    }

    pub fn gradient(&self, state: &[T]) -> Result<Vec<T>> {
        self.check_state(state)?;
        let mut g = vec![T::zero(); self.dim];
        for t in self.terms.values() {
            for (gi, di) in g.iter_mut().zip(t.gradient(state)?) {
                *gi = *gi + di;
            }
        }
        Ok(g)
    }

    fn check_state(&self, state: &[T]) -> Result<()> {
        if state.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: state.len() });
        }
        Ok(())
    }
}

/// Gradient of a graded polynomial (free-function form).
pub fn gradient<T: Scalar>(p: &GradedPoly<T>, state: &[T]) -> Result<Vec<T>> {
    p.gradient(state)
}

/// Truncated multivariate polynomial in plain monomial coefficients, degrees `0..=max_degree`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly<T> {
    dim: usize,
    max_degree: usize,
    graded: Vec<Vec<T>>,
}

impl<T: Scalar> Poly<T> {
    pub fn zero(dim: usize, max_degree: usize) -> Self {
        let graded = (0..=max_degree).map(|k| vec![T::zero(); space_dim(dim, k)]).collect();
        Poly { dim, max_degree, graded }
    }

    pub fn constant(dim: usize, max_degree: usize, c: T) -> Self {
        let mut p = Self::zero(dim, max_degree);
        p.graded[0][0] = c;
        p
    }

    /// The coordinate polynomial `z[var]`.
    pub fn variable(dim: usize, max_degree: usize, var: usize) -> Self {
        let mut p = Self::zero(dim, max_degree);
        if max_degree >= 1 {
            p.graded[1][var] = T::one();
        }
        p
    }

    pub fn from_sym(t: &SymTensor<T>, max_degree: usize) -> Self {
        let mut p = Self::zero(t.dim(), max_degree);
        p.add_sym(t);
        p
    }

    pub fn from_graded(g: &GradedPoly<T>, max_degree: usize) -> Self {
        let mut p = Self::zero(g.dim(), max_degree);
        for t in g.terms() {
            p.add_sym(t);
        }
        p
    }

    /// Adds a symmetric tensor (ignored if its degree exceeds `max_degree`).
    pub fn add_sym(&mut self, t: &SymTensor<T>) {
        debug_assert_eq!(t.dim(), self.dim);
        let k = t.degree();
        if k > self.max_degree {
            return;
        }
        for (r, (mi, c)) in t.iter().enumerate() {
            self.graded[k][r] = self.graded[k][r] + cast::<T>(mi.multinomial()) * c;
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Monomial coefficients of degree `k` in rank order (empty above `max_degree`).
    pub fn degree_coeffs(&self, k: usize) -> &[T] {
        self.graded.get(k).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn coeff(&self, mi: &MultiIndex) -> T {
        self.graded.get(mi.degree()).map_or(T::zero(), |g| g[mi.rank()])
    }

    pub fn add_coeff(&mut self, mi: &MultiIndex, c: T) {
        if let Some(g) = self.graded.get_mut(mi.degree()) {
            let r = mi.rank();
            g[r] = g[r] + c;
        }
    }

    /// Homogeneous degree-`k` part in the symmetric-sum convention.
    pub fn homogeneous(&self, k: usize) -> SymTensor<T> {
        if k > self.max_degree {
            return SymTensor::zeros(self.dim, k);
        }
        SymTensor::from_monomial_coefficients(self.dim, k, &self.graded[k]).expect("consistent sizes")
    }

    pub fn truncated(&self, max_degree: usize) -> Self {
        let mut p = Self::zero(self.dim, max_degree);
        for k in 0..=max_degree.min(self.max_degree) {
            p.graded[k].copy_from_slice(&self.graded[k]);
        }
        p
    }

    /// Drops every degree outside `lo..=hi`.
    pub fn band(&self, lo: usize, hi: usize) -> Self {
        let mut p = self.clone();
        for (k, g) in p.graded.iter_mut().enumerate() {
            if k < lo || k > hi {
                g.iter_mut().for_each(|c| *c = T::zero());
            }
        }
        p
    }

    pub fn scale(&self, s: T) -> Self {
        let mut p = self.clone();
        p.graded.iter_mut().flatten().for_each(|c| *c = *c * s);
        p
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.graded.iter_mut().zip(&other.graded) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x = *x + y;
            }
        }
    }

    /// Adds `s · other`.
    pub fn axpy(&mut self, s: T, other: &Self) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.graded.iter_mut().zip(&other.graded) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x = *x + s * y;
            }
        }
    }

    /// Product truncated at `self.max_degree`.
    pub fn mul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let cap = self.max_degree;
        let mut out = Self::zero(self.dim, cap);
        for da in 0..=self.max_degree {
            let a_nz: Vec<(MultiIndex, T)> = monomials(self.dim, da)
                .zip(self.graded[da].iter().copied())
                .filter(|(_, c)| !c.is_zero())
                .collect();
            if a_nz.is_empty() {
                continue;
            }
            for db in 0..=other.max_degree.min(cap - da) {
                for (mb, cb) in monomials(other.dim, db).zip(other.graded[db].iter().copied()) {
                    if cb.is_zero() {
                        continue;
                    }
                    for (ma, ca) in &a_nz {
                        let r = ma.merge(&mb).rank();
                        out.graded[da + db][r] = out.graded[da + db][r] + *ca * cb;
                    }
                }
            }
        }
        out
    }

    /// Partial derivative with respect to `var`.
    pub fn derivative(&self, var: usize) -> Self {
        let mut out = Self::zero(self.dim, self.max_degree);
        for k in 1..=self.max_degree {
            for (mi, c) in monomials(self.dim, k).zip(self.graded[k].iter().copied()) {
                if c.is_zero() {
                    continue;
                }
                let m = mi.indices().iter().filter(|&&i| i == var).count();
                if m == 0 {
                    continue;
                }
                let rest = mi.without(var).expect("variable present");
                out.add_coeff(&rest, c * cast::<T>(m));
            }
        }
        out
    }

    /// Substitutes `subs[i]` for variable `i`, truncating the result at `max_degree`.
    pub fn compose(&self, subs: &[Poly<T>], max_degree: usize) -> Result<Self> {
        if subs.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: subs.len() });
        }
        let out_dim = subs.first().map_or(0, |s| s.dim);
        let subs: Vec<Poly<T>> = subs.iter().map(|s| s.truncated(max_degree)).collect();
        let mut out = Self::zero(out_dim, max_degree);
        for k in 0..=self.max_degree {
            for (mi, c) in monomials(self.dim, k).zip(self.graded[k].iter().copied()) {
                if c.is_zero() {
                    continue;
                }
                let mut term = Self::constant(out_dim, max_degree, c);
                for &i in mi.indices() {
                    term = term.mul(&subs[i]);
                }
                out.add_assign(&term);
            }
        }
        Ok(out)
    }

    pub fn eval(&self, state: &[T]) -> Result<T> {
        if state.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: state.len() });
        }
        let mut acc = T::zero();
        for k in 0..=self.max_degree {
            for (mi, c) in monomials(self.dim, k).zip(self.graded[k].iter().copied()) {
                if !c.is_zero() {
                    acc = acc + c * mi.monomial(state);
                }
            }
        }
        Ok(acc)
    }

    /// Largest coefficient magnitude among degrees `lo..=hi`.
    pub fn max_abs_in(&self, lo: usize, hi: usize) -> T {
        self.graded
            .iter()
            .enumerate()
            .filter(|(k, _)| *k >= lo && *k <= hi)
            .flat_map(|(_, g)| g.iter())
            .fold(T::zero(), |m, c| m.max(c.abs()))
    }
}

/// Header of the coefficient text format.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientFile<T> {
    pub tensor: SymTensor<T>,
    /// Extra `key=value` pairs carried on the header line.
    pub extra: Vec<(String, String)>,
}

impl<T: Scalar + fmt::LowerExp> CoefficientFile<T> {
    pub fn new(tensor: SymTensor<T>) -> Self {
        CoefficientFile { tensor, extra: Vec::new() }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.extra.push((key.to_string(), value.to_string()));
        self
    }
}

impl<T: Scalar + fmt::LowerExp> fmt::Display for CoefficientFile<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "# degree={} dim={} convention=symmetric-sum",
            self.tensor.degree(),
            self.tensor.dim()
        )?;
        for (k, v) in &self.extra {
            write!(f, " {k}={v}")?;
        }
        writeln!(f)?;
        for (mi, c) in self.tensor.iter() {
            for i in mi.indices() {
                write!(f, "{i},")?;
            }
            writeln!(f, "{c:.9e}")?;
        }
        Ok(())
    }
}

impl<T: Scalar + FromStr> FromStr for CoefficientFile<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Format { line: 1, message: "empty input".into() })?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| Error::Format { line: 1, message: "missing header".into() })?;
        let (mut degree, mut dim, mut extra) = (None, None, Vec::new());
        for field in header.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| Error::Format { line: 1, message: format!("bad header field `{field}`") })?;
            let bad = || Error::Format { line: 1, message: format!("bad value for `{k}`") };
            match k {
                "degree" => degree = Some(v.parse::<usize>().map_err(|_| bad())?),
                "dim" => dim = Some(v.parse::<usize>().map_err(|_| bad())?),
                "convention" if v == "symmetric-sum" => {}
                "convention" => return Err(bad()),
                _ => extra.push((k.to_string(), v.to_string())),
            }
        }
        let (degree, dim) = match (degree, dim) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Format { line: 1, message: "header needs degree and dim".into() }),
        };
        let mut tensor = SymTensor::zeros(dim, degree);
        for (ln, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |m: &str| Error::Format { line: ln + 1, message: m.to_string() };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != degree + 1 {
                return Err(err("wrong field count"));
            }
            let idx = fields[..degree]
                .iter()
                .map(|f| f.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| err("bad index"))?;
            let value: T = fields[degree].trim().parse().map_err(|_| err("bad value"))?;
            let mi = MultiIndex::new(idx);
            tensor.check_index(&mi).map_err(|e| err(&e.to_string()))?;
            tensor.set(&mi, value);
        }
        Ok(CoefficientFile { tensor, extra })
    }
}
