//! Subcommand bodies. Each one computes every artifact in memory first; the
//! caller writes them only when the whole computation succeeded.

use std::fmt::Write as _;

use serde_json::json;
use taylor_hjb::acceptance;
use taylor_hjb::albrekht;
use taylor_hjb::galerkin::{self, GalerkinSystem};
use taylor_hjb::simulate::{self, FeedbackPolicy, SimConfig};
use taylor_hjb::spectral::{kernel_on_grid, riccati_modes, KernelCoeffs, Nonlinearity, RecursionVariant, SpectralModel};
use taylor_hjb::{CoefficientFile, SymTensor};

use crate::config::{Reaction, RunConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Basis,
    Lqr,
    Kernels,
    Galerkin,
    Simulate,
    Verify,
}

/// Files to write (name, contents) plus the text printed to stdout.
#[derive(Debug, Default)]
pub struct Output {
    pub files: Vec<(String, String)>,
    pub stdout: String,
}

impl Output {
    fn file(&mut self, name: &str, contents: impl Into<String>) {
        self.files.push((name.to_string(), contents.into()));
    }
}

fn e(v: f64) -> String {
    format!("{v:.9e}")
}

fn model(cfg: &RunConfig) -> taylor_hjb::Result<SpectralModel> {
    let reaction = match cfg.reaction {
        Reaction::PointSquare => Nonlinearity::PointSquare,
        Reaction::None => Nonlinearity::ModeTensor(vec![SymTensor::zeros(cfg.modes, 2); cfg.modes]),
    };
    SpectralModel::new(cfg.modes, cfg.fmul, cfg.gmul, reaction)
}

fn projected(cfg: &RunConfig) -> taylor_hjb::Result<(SpectralModel, GalerkinSystem)> {
    let m = model(cfg)?;
    let gal = galerkin::project(&m, cfg.modes, cfg.normalization)?;
    Ok((m, gal))
}

pub fn run(command: Command, cfg: &RunConfig) -> taylor_hjb::Result<Output> {
    let mut out = match command {
        Command::Basis => basis(cfg)?,
        Command::Lqr => lqr(cfg)?,
        Command::Kernels => kernels(cfg)?,
        Command::Galerkin => galerkin_cmd(cfg)?,
        Command::Simulate => simulate_cmd(cfg)?,
        Command::Verify => verify(),
    };
    out.file("resolved_config.txt", cfg.to_string());
    Ok(out)
}

fn basis(cfg: &RunConfig) -> taylor_hjb::Result<Output> {
    let m = model(cfg)?;
    let mut out = Output::default();
    let mut csv = String::from("i,lambda\n");
    writeln!(out.stdout, "{:>4} {:>14}", "i", "lambda").unwrap();
    for (i, l) in m.basis.lambdas().iter().enumerate() {
        writeln!(csv, "{i},{}", e(*l)).unwrap();
        writeln!(out.stdout, "{i:>4} {l:>14.6}").unwrap();
    }
    out.file("basis.csv", csv);
    Ok(out)
}

fn lqr(cfg: &RunConfig) -> taylor_hjb::Result<Output> {
    let m = model(cfg)?;
    let rm = riccati_modes(&m)?;
    let n = cfg.modes;
    let mut out = Output::default();
    let pi2 = SymTensor::from_matrix(n, rm.pi2.transpose().as_slice())?;
    out.file("pi2.txt", CoefficientFile::new(pi2).with("N", n).to_string());
    let mut k1 = String::from("i,j,value\n");
    for i in 0..n {
        for j in 0..n {
            writeln!(k1, "{i},{j},{}", e(rm.k1[(i, j)])).unwrap();
        }
    }
    out.file("k1.csv", k1);
    let mut mu = String::from("i,mu\n");
    writeln!(out.stdout, "{:>4} {:>14} {:>14} {:>14}", "i", "lambda", "Pi_ii", "mu_i").unwrap();
    for i in 0..n {
        writeln!(mu, "{i},{}", e(rm.mu[i])).unwrap();
        writeln!(out.stdout, "{i:>4} {:>14.6} {:>14.6} {:>14.4}", m.basis.lambda(i), rm.pi2[(i, i)], rm.mu[i]).unwrap();
    }
    writeln!(out.stdout, "Riccati residual {:.3e}", rm.residual).unwrap();
    out.file("mu.csv", mu);
    Ok(out)
}

fn kernels(cfg: &RunConfig) -> taylor_hjb::Result<Output> {
    let m = model(cfg)?;
    let rm = riccati_modes(&m)?;
    let n = cfg.modes;
    let mut out = Output::default();
    let mut chosen = None;
    for variant in RecursionVariant::ALL {
        let kc = KernelCoeffs::from_riccati(&m, &rm, variant)?;
        for (name, t) in [("pi3", &kc.pi3), ("pi4", &kc.pi4), ("k2", &kc.kernels.k2), ("k3", &kc.kernels.k3)] {
            let file = CoefficientFile::new(t.clone()).with("variant", variant).with("N", n);
            out.file(&format!("kernels_{variant}_{name}.txt"), file.to_string());
        }
        writeln!(out.stdout, "{variant}: leading monomial coefficients").unwrap();
        for t in [&kc.pi3, &kc.pi4] {
            let low = t.truncate_dim(n.min(3));
            for (mi, _) in low.iter() {
                let c = low.monomial_coefficient(&mi);
                if c.abs() > 1e-12 {
                    writeln!(out.stdout, "  {c:>12.6} {mi}").unwrap();
                }
            }
        }
        if variant == cfg.variant {
            chosen = Some(kc);
        }
    }
    let kc = chosen.expect("configured variant is one of ALL");
    let grid: Vec<f64> = (0..cfg.grid_points).map(|i| i as f64 / (cfg.grid_points - 1) as f64).collect();
    for (name, t) in [("pi2", kc.pi2_tensor()), ("pi3", kc.pi3.clone())] {
        let mut csv = (1..=t.degree()).map(|d| format!("x{d}")).collect::<Vec<_>>().join(",");
        csv.push_str(",value\n");
        for (xs, v) in kernel_on_grid(&t, &grid)? {
            for x in xs {
                write!(csv, "{},", e(x)).unwrap();
            }
            writeln!(csv, "{}", e(v)).unwrap();
        }
        out.file(&format!("kernel_grid_{name}.csv"), csv);
    }
    Ok(out)
}

fn galerkin_cmd(cfg: &RunConfig) -> taylor_hjb::Result<Output> {
    let (_, gal) = projected(cfg)?;
    let table = galerkin::cost_table(&gal, cfg.degree)?;
    let n = gal.modes();
    let quadratic: Vec<String> =
        gal.quadratic_monomials().into_iter().map(|(i, j, k, c)| format!("{i}|{j},{k}|{}", e(c))).collect();
    let system = json!({
        "normalization": gal.normalization.as_str(),
        "description": gal.description,
        "modes": n,
        "F": (0..n).map(|i| e(gal.sys.f()[(i, i)])).collect::<Vec<_>>(),
        "G": (0..n).map(|i| e(gal.sys.g()[(i, i)])).collect::<Vec<_>>(),
        "quadratic_convention": "monomial",
        "quadratic": quadratic,
    });
    let mut out = Output::default();
    out.file("galerkin_system.json", serde_json::to_string_pretty(&system).expect("plain values") + "\n");
    let mut report = String::from("degree,monomial,coefficient\n");
    for (degree, entries) in &table.degrees {
        for entry in entries {
            let mono: Vec<String> = entry.monomial.indices().iter().map(ToString::to_string).collect();
            writeln!(report, "{degree},{},{}", mono.join(" "), e(entry.coefficient)).unwrap();
        }
    }
    out.file("cost_table.csv", report);
    writeln!(out.stdout, "{}", gal.description).unwrap();
    write!(out.stdout, "{table}").unwrap();
    Ok(out)
}

fn simulate_cmd(cfg: &RunConfig) -> taylor_hjb::Result<Output> {
    let (m, gal) = projected(cfg)?;
    let lqr = albrekht::solve_are(&gal.sys)?;
    let exp = albrekht::expand_with(&gal.sys, &lqr, cfg.degree)?;
    let mu = riccati_modes(&m)?.mu;
    let full = FeedbackPolicy::from_expansion(&exp, cfg.degree)?;
    let partial = FeedbackPolicy::partial(exp.feedback.clone(), &mu, cfg.threshold)?;
    let sim = SimConfig {
        z0: cfg.initial_state(),
        t_end: cfg.t_end,
        dt: cfg.dt,
        escape_radius: cfg.escape_radius,
        converge_tol: cfg.converge_tol,
    };
    let a = simulate::integrate(&gal.sys, &full, &sim)?;
    let b = simulate::integrate(&gal.sys, &partial, &sim)?;
    let mut out = Output::default();
    out.file("trajectory_full.csv", a.subsample(cfg.stride).to_csv());
    out.file("trajectory_partial.csv", b.subsample(cfg.stride).to_csv());
    writeln!(out.stdout, "full:    {} terms, {} with |z(end)| = {:.6e}", full.active_terms(), a.status, a.final_norm()).unwrap();
    writeln!(out.stdout, "partial: {} terms, {} with |z(end)| = {:.6e}", partial.active_terms(), b.status, b.final_norm())
        .unwrap();
    match simulate::compare(&a, &b) {
        Ok(cmp) => {
            out.file("comparison.csv", cmp.to_string());
            writeln!(out.stdout, "relative sup difference {}", e(cmp.aggregate)).unwrap();
        }
        Err(_) => writeln!(out.stdout, "comparison skipped: the runs stopped at different times").unwrap(),
    }
    Ok(out)
}

fn verify() -> Output {
    let results = acceptance::run_all();
    let mut report = String::new();
    for c in &results {
        writeln!(report, "{c}").unwrap();
    }
    let failed = results.iter().filter(|c| !c.passed).count();
    writeln!(report, "{} passed, {failed} failed", results.len() - failed).unwrap();
    let mut out = Output { stdout: report.clone(), ..Output::default() };
    out.file("acceptance.txt", report);
    out
}
