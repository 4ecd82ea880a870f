//! Closed-loop simulation under polynomial feedback.
//!
//! The running cost is carried as an extra state so the classical RK4 step
//! integrates it with the same order as the trajectory.

use std::collections::BTreeMap;
use std::fmt;

use crate::albrekht::{PolyExpansion, PolySystem};
use crate::error::{Error, Result};
use crate::polytensor::{monomials, space_dim};
use crate::{GradedPoly, Scalar};

/// One classical Runge–Kutta step of `y' = f(y)`.
pub fn rk4_step<T: Scalar>(f: impl Fn(&[T]) -> Vec<T>, y: &[T], dt: T) -> Vec<T> {
    let two = T::one() + T::one();
    let six = two + two + two;
    let half = dt / two;
    let shifted = |base: &[T], k: &[T], h: T| -> Vec<T> { base.iter().zip(k).map(|(&b, &k)| b + h * k).collect() };
    let k1 = f(y);
    let k2 = f(&shifted(y, &k1, half));
    let k3 = f(&shifted(y, &k2, half));
    let k4 = f(&shifted(y, &k3, dt));
    (0..y.len())
        .map(|i| y[i] + dt / six * (k1[i] + two * k2[i] + two * k3[i] + k4[i]))
        .collect()
}

/// Keeps the degree-`degree` monomials whose decay rate `Σ μ` is at least `threshold`.
///
/// The result is indexed by graded-colex rank over `mu.len()` variables.
pub fn decay_mask(mu: &[f64], degree: usize, threshold: f64) -> Vec<bool> {
    monomials(mu.len(), degree)
        .map(|mi| mi.indices().iter().map(|&i| mu[i]).sum::<f64>() >= threshold)
        .collect()
}

/// Polynomial state feedback, optionally with monomials switched off.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackPolicy {
    feedback: Vec<GradedPoly>,
    mask: BTreeMap<usize, Vec<bool>>,
    /// per control: (variables with repetition, monomial coefficient)
    compiled: Vec<Vec<(Vec<usize>, f64)>>,
}

impl FeedbackPolicy {
    pub fn new(feedback: Vec<GradedPoly>) -> Result<Self> {
        let dim = feedback.first().map_or(0, GradedPoly::dim);
        if let Some(bad) = feedback.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.dim() });
        }
        let mut policy = FeedbackPolicy { feedback, mask: BTreeMap::new(), compiled: Vec::new() };
        policy.compile();
        Ok(policy)
    }

    /// The expansion's feedback truncated at degree `max_degree`.
    pub fn from_expansion(exp: &PolyExpansion, max_degree: usize) -> Result<Self> {
        Self::new(exp.feedback.iter().map(|p| p.restricted(1, max_degree)).collect())
    }

    /// Drops degree-`k ≥ 2` monomials decaying faster than `threshold`; the linear gain is kept whole.
    pub fn partial(feedback: Vec<GradedPoly>, mu: &[f64], threshold: f64) -> Result<Self> {
        let degrees: Vec<usize> = feedback.iter().flat_map(|p| p.degrees()).filter(|&k| k >= 2).collect();
        let mut policy = Self::new(feedback)?;
        for k in degrees {
            policy = policy.with_mask(k, decay_mask(mu, k, threshold))?;
        }
        Ok(policy)
    }

    pub fn with_mask(mut self, degree: usize, keep: Vec<bool>) -> Result<Self> {
        let expected = space_dim(self.state_dim(), degree);
        if keep.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: keep.len() });
        }
        self.mask.insert(degree, keep);
        self.compile();
        Ok(self)
    }

    fn compile(&mut self) {
        let n = self.state_dim();
        self.compiled = self
            .feedback
            .iter()
            .map(|p| {
                let mut terms = Vec::new();
                for k in p.degrees() {
                    let t = p.term(k).expect("listed degree");
                    let keep = self.mask.get(&k);
                    for (rank, mi) in monomials(n, k).enumerate() {
                        if keep.is_some_and(|m| !m[rank]) {
                            continue;
                        }
                        let c = t.monomial_coefficient(&mi);
                        if c != 0.0 {
                            terms.push((mi.indices().to_vec(), c));
                        }
                    }
                }
                terms
            })
            .collect();
    }

    pub fn state_dim(&self) -> usize {
        self.feedback.first().map_or(0, GradedPoly::dim)
    }

    pub fn control_dim(&self) -> usize {
        self.feedback.len()
    }

    pub fn feedback(&self) -> &[GradedPoly] {
        &self.feedback
    }

    /// Number of monomials in use, summed over controls.
    pub fn active_terms(&self) -> usize {
        self.compiled.iter().map(Vec::len).sum()
    }

    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.compiled
            .iter()
            .map(|terms| terms.iter().map(|(vars, c)| c * vars.iter().map(|&v| z[v]).product::<f64>()).sum())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub z0: Vec<f64>,
    pub t_end: f64,
    pub dt: f64,
    pub escape_radius: f64,
    /// `Converged` requires `‖ζ(t_end)‖` below this.
    pub converge_tol: f64,
}

impl SimConfig {
    pub fn new(z0: Vec<f64>, t_end: f64, dt: f64) -> Self {
        SimConfig { z0, t_end, dt, escape_radius: 1e3, converge_tol: 1e-2 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument("t_end must be at least dt".into()));
        }
        if self.escape_radius.is_nan() || self.escape_radius <= 0.0 {
            return Err(Error::InvalidArgument("escape radius must be positive".into()));
        }
        if self.converge_tol.is_nan() || self.converge_tol <= 0.0 {
            return Err(Error::InvalidArgument("convergence tolerance must be positive".into()));
        }
        if self.z0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("initial state must be finite".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Status {
    Converged,
    Escaped(f64),
    HorizonReached,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Converged => f.write_str("Converged"),
            Status::Escaped(t) => write!(f, "Escaped({t})"),
            Status::HorizonReached => f.write_str("HorizonReached"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    /// Accumulated running cost at each time.
    pub cost: Vec<f64>,
    pub status: Status,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    pub fn final_norm(&self) -> f64 {
        norm(self.final_state())
    }

    pub fn total_cost(&self) -> f64 {
        self.cost.last().copied().unwrap_or(0.0)
    }

    /// Every `stride`-th sample, always including the last one.
    pub fn subsample(&self, stride: usize) -> Trajectory {
        let stride = stride.max(1);
        let last = self.times.len().saturating_sub(1);
        let keep: Vec<usize> = (0..self.times.len()).filter(|&i| i % stride == 0 || i == last).collect();
        let pick = |v: &Vec<f64>| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let pick_rows = |v: &Vec<Vec<f64>>| keep.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
        Trajectory {
            times: pick(&self.times),
            states: pick_rows(&self.states),
            controls: pick_rows(&self.controls),
            cost: pick(&self.cost),
            status: self.status,
        }
    }

    /// CSV with header `t,zeta0..,nu0..,cost` and a trailing `# status=` line.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, Vec::len);
        let m = self.controls.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("zeta{i}")));
        header.extend((0..m).map(|i| format!("nu{i}")));
        header.push("cost".into());
        let mut out = header.join(",");
        out.push('\n');
        for i in 0..self.times.len() {
            let row: Vec<String> = std::iter::once(self.times[i])
                .chain(self.states[i].iter().copied())
                .chain(self.controls[i].iter().copied())
                .chain(std::iter::once(self.cost[i]))
                .map(|v| format!("{v:.9e}"))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out.push_str(&format!("# status={}\n", self.status));
        out
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Integrates `ζ̇ = f(ζ, κ(ζ))` with fixed-step RK4 and accumulates `∫ l(ζ, κ(ζ)) dt`.
pub fn integrate(sys: &PolySystem, policy: &FeedbackPolicy, cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let n = sys.state_dim();
    if cfg.z0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: cfg.z0.len() });
    }
    if policy.control_dim() != sys.control_dim() {
        return Err(Error::DimensionMismatch { expected: sys.control_dim(), found: policy.control_dim() });
    }
    if policy.control_dim() > 0 && policy.state_dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: policy.state_dim() });
    }

    let rhs = |y: &[f64]| -> Vec<f64> {
        let z = &y[..n];
        let u = policy.eval(z);
        let mut dy = sys.dynamics(z, &u).expect("dimensions checked");
        dy.push(sys.running_cost(z, &u).expect("dimensions checked"));
        dy
    };

    let steps = cfg.steps();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps + 1);
    let mut cost = Vec::with_capacity(steps + 1);

    let mut y: Vec<f64> = cfg.z0.iter().copied().chain(std::iter::once(0.0)).collect();
    let mut status = Status::HorizonReached;
    for step in 0..=steps {
        let t = step as f64 * cfg.dt;
        let z = &y[..n];
        if z.iter().any(|v| !v.is_finite()) || norm(z) > cfg.escape_radius || !y[n].is_finite() {
            status = Status::Escaped(t);
            break;
        }
        times.push(t);
        states.push(z.to_vec());
        controls.push(policy.eval(z));
        cost.push(y[n]);
        if step < steps {
            y = rk4_step(rhs, &y, cfg.dt);
        }
    }
    if status == Status::HorizonReached && norm(&y[..n]) < cfg.converge_tol {
        status = Status::Converged;
    }
    Ok(Trajectory { times, states, controls, cost, status })
}

/// Sup-norm differences of `b` from `a`, relative to the sup-norm of `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub per_mode: Vec<f64>,
    pub aggregate: f64,
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode,relative_sup_difference")?;
        for (i, v) in self.per_mode.iter().enumerate() {
            writeln!(f, "{i},{v:.9e}")?;
        }
        writeln!(f, "all,{:.9e}", self.aggregate)
    }
}

pub fn compare(a: &Trajectory, b: &Trajectory) -> Result<Comparison> {
    if a.times.len() != b.times.len()
        || a.times.iter().zip(&b.times).any(|(x, y)| (x - y).abs() > 1e-9 * (1.0 + x.abs()))
    {
        return Err(Error::GridMismatch);
    }
    let n = a.states.first().map_or(0, Vec::len);
    if b.states.first().map_or(0, Vec::len) != n {
        return Err(Error::GridMismatch);
    }
    let relative = |diff: f64, size: f64| if size > 0.0 { diff / size } else { diff };
    let mut per_mode = Vec::with_capacity(n);
    let (mut diff_all, mut size_all) = (0.0f64, 0.0f64);
    for i in 0..n {
        let diff = a.states.iter().zip(&b.states).map(|(x, y)| (x[i] - y[i]).abs()).fold(0.0, f64::max);
        let size = a.states.iter().map(|x| x[i].abs()).fold(0.0, f64::max);
        per_mode.push(relative(diff, size));
        diff_all = diff_all.max(diff);
        size_all = size_all.max(size);
    }
    Ok(Comparison { per_mode, aggregate: relative(diff_all, size_all) })
}

/// Simulated cost against the polynomial cost at one scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostGap {
    pub scale: f64,
    pub simulated: f64,
    pub predicted: f64,
    pub gap: f64,
}

/// Compares `J(s·z0)` under the expansion's full feedback with `π(s·z0)` for each scale `s`.
pub fn cost_consistency(
    sys: &PolySystem,
    exp: &PolyExpansion,
    z0: &[f64],
    scales: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<CostGap>> {
    let policy = FeedbackPolicy::from_expansion(exp, exp.degree)?;
    scales
        .iter()
        .map(|&scale| {
            let start: Vec<f64> = z0.iter().map(|v| v * scale).collect();
            let run = integrate(sys, &policy, &SimConfig { z0: start.clone(), ..cfg.clone() })?;
            if let Status::Escaped(time) = run.status {
                return Err(Error::Diverged { scale, time });
            }
            let simulated = run.total_cost();
            let predicted = exp.cost_at(&start)?;
            Ok(CostGap { scale, simulated, predicted, gap: (simulated - predicted).abs() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SymTensor;
    use nalgebra::DMatrix;

    fn decay() -> PolySystem {
        let one = DMatrix::from_element(1, 1, 1.0);
        PolySystem::new(-one.clone(), DMatrix::zeros(1, 1), one.clone(), DMatrix::zeros(1, 1), one).unwrap()
    }

    fn zero_policy() -> FeedbackPolicy {
        FeedbackPolicy::new(vec![GradedPoly::new(1)]).unwrap()
    }

    #[test]
    fn exponential_decay() {
        let traj = integrate(&decay(), &zero_policy(), &SimConfig::new(vec![1.0], 1.0, 1e-3)).unwrap();
        assert!((traj.final_state()[0] - (-1.0f64).exp()).abs() < 1e-8);
        let exact_cost = 0.25 * (1.0 - (-2.0f64).exp());
        assert!((traj.total_cost() - exact_cost).abs() < 1e-10);
        assert_eq!(traj.status, Status::HorizonReached);
        assert_eq!(traj.times.len(), 1001);
    }

    #[test]
    fn escape_detected() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let sys = PolySystem::new(one.clone(), one.clone(), one.clone(), DMatrix::zeros(1, 1), one).unwrap();
        let mut cfg = SimConfig::new(vec![1.0], 20.0, 1e-2);
        cfg.escape_radius = 10.0;
        let traj = integrate(&sys, &zero_policy(), &cfg).unwrap();
        let Status::Escaped(t) = traj.status else { panic!("{:?}", traj.status) };
        assert!((t - 10f64.ln()).abs() < 0.02);
        assert!(traj.final_norm() <= 10.0);
    }

    #[test]
    fn mask_examples() {
        let mu = [-1.0, -9.9201, -39.4911];
        let m = decay_mask(&mu, 3, -20.0);
        let ranks: Vec<_> = monomials(3, 3).collect();
        let at = |idx: &[usize]| m[ranks.iter().position(|mi| mi.indices() == idx).unwrap()];
        assert!(at(&[0, 0, 0]));
        assert!(at(&[0, 0, 1]));
        assert!(!at(&[0, 1, 1]));
        assert!(decay_mask(&mu, 2, f64::NEG_INFINITY).iter().all(|&b| b));
        assert!(decay_mask(&mu, 2, 0.0).iter().all(|&b| !b));
    }

    #[test]
    fn masked_policy_drops_terms() {
        let quad = SymTensor::from_fn(2, 2, |_| 1.0);
        let fb = GradedPoly::new(2).with(SymTensor::from_vector(&[-1.0, 0.0])).unwrap().with(quad).unwrap();
        let full = FeedbackPolicy::new(vec![fb.clone()]).unwrap();
        assert_eq!(full.eval(&[1.0, 2.0]), vec![-1.0 + 9.0]);
        let part = FeedbackPolicy::partial(vec![fb], &[-1.0, -30.0], -20.0).unwrap();
        assert_eq!(part.active_terms(), 2);
        assert_eq!(part.eval(&[1.0, 2.0]), vec![0.0]);
        assert!(full.clone().with_mask(2, vec![true; 2]).is_err());
    }

    #[test]
    fn compare_reports() {
        let a = integrate(&decay(), &zero_policy(), &SimConfig::new(vec![1.0], 1.0, 1e-2)).unwrap();
        let c = compare(&a, &a).unwrap();
        assert_eq!(c.aggregate, 0.0);
        let mut b = a.clone();
        b.states[10][0] += 0.5;
        assert!((compare(&a, &b).unwrap().per_mode[0] - 0.5).abs() < 1e-15);
        let short = a.subsample(2);
        assert!(matches!(compare(&a, &short), Err(Error::GridMismatch)));
        assert_eq!(short.times.len(), 51);
        assert_eq!(a.subsample(3).times.last(), a.times.last());
    }

    #[test]
    fn csv_layout() {
        let traj = integrate(&decay(), &zero_policy(), &SimConfig::new(vec![1.0], 0.2, 0.1)).unwrap();
        let csv = traj.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,zeta0,nu0,cost");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0.000000000e0,1.000000000e0,"));
        assert_eq!(lines[4], "# status=HorizonReached");
    }

    #[test]
    fn rk4_generic_scalar() {
        let y = rk4_step(|y: &[f32]| vec![-y[0]], &[1.0f32], 0.1);
        assert!((y[0] - (-0.1f32).exp()).abs() < 1e-6);
    }

    #[test]
    fn bad_configs() {
        assert!(SimConfig::new(vec![1.0], 1.0, 0.0).validate().is_err());
        assert!(SimConfig::new(vec![1.0], 1e-4, 1e-3).validate().is_err());
        let err = integrate(&decay(), &zero_policy(), &SimConfig::new(vec![1.0, 2.0], 1.0, 0.1));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }
}
