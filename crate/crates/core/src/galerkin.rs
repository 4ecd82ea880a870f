//! Projection of the reaction–diffusion problem onto the first `N` cosine modes.
//!
//! With `ζ_i = ⟨φ_i, z⟩` and `ν_i = ⟨φ_i, u⟩` the orthonormal projection is
//!
//! ```text
//! ζ̇_i = (λ_i + F) ζ_i + G ν_i + Σ_{j,k} B[i,j,k] ζ_j ζ_k
//! ```
//!
//! with cost `½ Σ (ζ_i² + ν_i²)`. The as-printed three-mode system uses
//! unnormalized cosine products instead; it is related to the orthonormal one
//! by `ζ̃_i = √2 ζ_i` for `i ≥ 1` in the dynamics while keeping identity weights.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::albrekht::{self, PolyExpansion, PolySystem};
use crate::error::{Error, Result};
use crate::polytensor::monomials;
use crate::spectral::{Nonlinearity, RecursionVariant, SpectralModel};
use crate::{MultiIndex, SymTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Normalization {
    Orthonormal,
    AsPrinted,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::Orthonormal => "orthonormal",
            Normalization::AsPrinted => "as-printed",
        }
    }

    fn variant(self) -> RecursionVariant {
        match self {
            Normalization::Orthonormal => RecursionVariant::Orthonormal,
            Normalization::AsPrinted => RecursionVariant::PaperPrinted,
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orthonormal" => Ok(Normalization::Orthonormal),
            "as-printed" => Ok(Normalization::AsPrinted),
            other => Err(Error::InvalidArgument(format!("unknown normalization `{other}`"))),
        }
    }
}

/// A projected model ready for the finite-dimensional engine.
#[derive(Clone, Debug, PartialEq)]
pub struct GalerkinSystem {
    pub sys: PolySystem,
    pub normalization: Normalization,
    pub description: String,
}

/// Projects `model` onto its first `modes` cosine modes.
pub fn project(model: &SpectralModel, modes: usize, normalization: Normalization) -> Result<GalerkinSystem> {
    if modes == 0 {
        return Err(Error::InvalidArgument("projection needs at least one mode".into()));
    }
    if modes > model.modes() {
        return Err(Error::DimensionMismatch { expected: model.modes(), found: modes });
    }
    if normalization == Normalization::AsPrinted
        && (modes != 3 || !matches!(model.nonlinearity, Nonlinearity::PointSquare))
    {
        return Err(Error::AsPrintedUnavailable { modes });
    }
    let n = modes;
    let variant = normalization.variant();
    let f = DMatrix::from_fn(n, n, |i, j| if i == j { model.basis.lambda(i) + model.fmul } else { 0.0 });
    let g = DMatrix::<f64>::identity(n, n) * model.gmul;
    let eye = DMatrix::<f64>::identity(n, n);
    let quadratic: Vec<SymTensor> = (0..n)
        .map(|i| {
            SymTensor::from_fn(2 * n, 2, |mi| {
                let (j, k) = (mi.indices()[0], mi.indices()[1]);
                if k < n {
                    model.source_coefficient(variant, i, j, k)
                } else {
                    0.0
                }
            })
        })
        .collect();
    let sys = PolySystem::new(f, g, eye.clone(), DMatrix::zeros(n, n), eye)?.with_dynamics(2, quadratic)?;
    let reaction = match model.nonlinearity {
        Nonlinearity::PointSquare => "z^2",
        Nonlinearity::ModeTensor(_) => "mode tensor",
    };
    let description = format!(
        "{n}-mode {normalization} projection, F={}, G={}, reaction {reaction}",
        model.fmul, model.gmul
    );
    Ok(GalerkinSystem { sys, normalization, description })
}

impl GalerkinSystem {
    pub fn modes(&self) -> usize {
        self.sys.state_dim()
    }

    /// Quadratic dynamics as monomial coefficients `(i, j, k, c)` with `j ≤ k`:
    /// `ζ̇_i` contains `c ζ_j ζ_k`. Zero entries are skipped.
    pub fn quadratic_monomials(&self) -> Vec<(usize, usize, usize, f64)> {
        let n = self.modes();
        let Some(terms) = self.sys.dynamics_terms().get(&2) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for (i, t) in terms.iter().enumerate() {
            for mi in monomials(n, 2) {
                let c = t.monomial_coefficient(&mi);
                if c != 0.0 {
                    out.push((i, mi.indices()[0], mi.indices()[1], c));
                }
            }
        }
        out
    }

    /// Right-hand side `ζ̇` at mode state `zeta` and mode control `nu`.
    pub fn rhs(&self, zeta: &[f64], nu: &[f64]) -> Result<Vec<f64>> {
        self.sys.dynamics(zeta, nu)
    }
}

/// One line of a cost report.
#[derive(Clone, Debug, PartialEq)]
pub struct CostEntry {
    pub monomial: MultiIndex,
    pub coefficient: f64,
}

impl fmt::Display for CostEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.coefficient)?;
        for (var, power) in self.monomial.multiplicities() {
            if power == 1 {
                write!(f, " z{var}")?;
            } else {
                write!(f, " z{var}^{power}")?;
            }
        }
        Ok(())
    }
}

/// Optimal-cost expansion of a projected system, tabulated by monomial.
#[derive(Clone, Debug, PartialEq)]
pub struct CostTable {
    pub expansion: PolyExpansion,
    /// `(degree, entries)` for cost degrees `2..=d+1`, entries in graded-colex order.
    pub degrees: Vec<(usize, Vec<CostEntry>)>,
}

impl CostTable {
    pub fn coefficient(&self, monomial: &[usize]) -> f64 {
        let mi = MultiIndex::new(monomial.to_vec());
        self.expansion.cost.term(mi.degree()).map_or(0.0, |t| t.monomial_coefficient(&mi))
    }
}

impl fmt::Display for CostTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (degree, entries) in &self.degrees {
            writeln!(f, "degree {degree}")?;
            for e in entries {
                writeln!(f, "  {e}")?;
            }
        }
        Ok(())
    }
}

/// Expands the optimal cost to degree `d + 1` and lists its monomial coefficients.
pub fn cost_table(gal: &GalerkinSystem, d: usize) -> Result<CostTable> {
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidArgument(format!("cost tables support d in 1..=3, got {d}")));
    }
    let expansion = albrekht::expand(&gal.sys, d)?;
    let n = gal.modes();
    let degrees = (2..=d + 1)
        .map(|k| {
            let t = expansion.cost.term(k);
            let entries = monomials(n, k)
                .map(|mi| {
                    let coefficient = t.map_or(0.0, |t| t.monomial_coefficient(&mi));
                    CostEntry { monomial: mi, coefficient }
                })
                .collect();
            (k, entries)
        })
        .collect();
    Ok(CostTable { expansion, degrees })
}
