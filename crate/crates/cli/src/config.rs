//! Line-oriented run configuration: `section.key = value`, `#` starts a comment.

use std::fmt;
use std::path::PathBuf;

use taylor_hjb::galerkin::Normalization;
use taylor_hjb::spectral::RecursionVariant;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Validation { key: key.to_string(), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reaction {
    PointSquare,
    None,
}

impl Reaction {
    fn as_str(self) -> &'static str {
        match self {
            Reaction::PointSquare => "point-square",
            Reaction::None => "none",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub modes: usize,
    pub fmul: f64,
    pub gmul: f64,
    pub reaction: Reaction,
    pub normalization: Normalization,
    pub degree: usize,
    pub variant: RecursionVariant,
    pub grid_points: usize,
    /// `None` means 5 in every mode.
    pub z0: Option<Vec<f64>>,
    pub dt: f64,
    pub t_end: f64,
    pub escape_radius: f64,
    pub threshold: f64,
    pub converge_tol: f64,
    pub stride: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            modes: 3,
            fmul: 0.0,
            gmul: 1.0,
            reaction: Reaction::PointSquare,
            normalization: Normalization::AsPrinted,
            degree: 3,
            variant: RecursionVariant::PaperPrinted,
            grid_points: 11,
            z0: None,
            dt: 1e-4,
            t_end: 5.0,
            escape_radius: 1e3,
            threshold: -20.0,
            converge_tol: 1e-2,
            stride: 10,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn initial_state(&self) -> Vec<f64> {
        self.z0.clone().unwrap_or_else(|| vec![5.0; self.modes])
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.modes == 0 {
            return Err(invalid("model.N", "must be at least 1"));
        }
        for (key, v) in [
            ("model.Fmul", self.fmul),
            ("model.Gmul", self.gmul),
            ("sim.dt", self.dt),
            ("sim.t_end", self.t_end),
            ("sim.escape_radius", self.escape_radius),
            ("sim.converge_tol", self.converge_tol),
        ] {
            if !v.is_finite() {
                return Err(invalid(key, "must be finite"));
            }
        }
        if !(1..=3).contains(&self.degree) {
            return Err(invalid("expand.d", "must be 1, 2 or 3"));
        }
        if self.dt <= 0.0 {
            return Err(invalid("sim.dt", "must be positive"));
        }
        if self.t_end < self.dt {
            return Err(invalid("sim.t_end", "must be at least sim.dt"));
        }
        if self.escape_radius <= 0.0 {
            return Err(invalid("sim.escape_radius", "must be positive"));
        }
        if self.converge_tol <= 0.0 {
            return Err(invalid("sim.converge_tol", "must be positive"));
        }
        if self.threshold.is_nan() {
            return Err(invalid("sim.threshold", "must be a number"));
        }
        if self.stride == 0 {
            return Err(invalid("sim.stride", "must be at least 1"));
        }
        if self.grid_points < 2 {
            return Err(invalid("kernels.grid", "must be at least 2"));
        }
        if let Some(z0) = &self.z0 {
            if z0.len() != self.modes {
                return Err(invalid("sim.z0", format!("expected {} entries, found {}", self.modes, z0.len())));
            }
            if z0.iter().any(|v| !v.is_finite()) {
                return Err(invalid("sim.z0", "entries must be finite"));
            }
        }
        Ok(())
    }
}

fn number(key: &str, value: &str) -> Result<f64, ConfigError> {
    match value {
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => value.parse::<f64>().map_err(|_| invalid(key, format!("`{value}` is not a number"))),
    }
}

fn count(key: &str, value: &str) -> Result<usize, ConfigError> {
    value.parse::<usize>().map_err(|_| invalid(key, format!("`{value}` is not a non-negative integer")))
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut seen: Vec<String> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: idx + 1,
            message: format!("expected `section.key = value`, found `{line}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !key.contains('.') || key.split('.').any(str::is_empty) {
            return Err(ConfigError::Parse { line: idx + 1, message: format!("malformed key `{key}`") });
        }
        if seen.iter().any(|k| k == key) {
            return Err(invalid(key, "given more than once"));
        }
        seen.push(key.to_string());
        match key {
            "model.N" => cfg.modes = count(key, value)?,
            "model.Fmul" => cfg.fmul = number(key, value)?,
            "model.Gmul" => cfg.gmul = number(key, value)?,
            "model.nonlinearity" => {
                cfg.reaction = match value {
                    "point-square" => Reaction::PointSquare,
                    "none" => Reaction::None,
                    _ => return Err(invalid(key, "expected point-square or none")),
                }
            }
            "model.normalization" => {
                cfg.normalization = value.parse().map_err(|_| invalid(key, "expected orthonormal or as-printed"))?
            }
            "expand.d" => cfg.degree = count(key, value)?,
            "kernels.variant" => {
                cfg.variant = value.parse().map_err(|_| invalid(key, "expected paper-printed or orthonormal"))?
            }
            "kernels.grid" => cfg.grid_points = count(key, value)?,
            "sim.z0" => {
                let z0 = value.split(',').map(|v| number(key, v.trim())).collect::<Result<Vec<_>, _>>()?;
                cfg.z0 = Some(z0);
            }
            "sim.dt" => cfg.dt = number(key, value)?,
            "sim.t_end" => cfg.t_end = number(key, value)?,
            "sim.escape_radius" => cfg.escape_radius = number(key, value)?,
            "sim.threshold" => cfg.threshold = number(key, value)?,
            "sim.converge_tol" => cfg.converge_tol = number(key, value)?,
            "sim.stride" => cfg.stride = count(key, value)?,
            "output.dir" => {
                if value.is_empty() {
                    return Err(invalid(key, "must not be empty"));
                }
                cfg.out_dir = PathBuf::from(value);
            }
            _ => return Err(invalid(key, "unknown key")),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let z0: Vec<String> = self.initial_state().iter().map(|v| format!("{v:.9e}")).collect();
        writeln!(f, "model.N = {}", self.modes)?;
        writeln!(f, "model.Fmul = {:.9e}", self.fmul)?;
        writeln!(f, "model.Gmul = {:.9e}", self.gmul)?;
        writeln!(f, "model.nonlinearity = {}", self.reaction.as_str())?;
        writeln!(f, "model.normalization = {}", self.normalization)?;
        writeln!(f, "expand.d = {}", self.degree)?;
        writeln!(f, "kernels.variant = {}", self.variant)?;
        writeln!(f, "kernels.grid = {}", self.grid_points)?;
        writeln!(f, "sim.z0 = {}", z0.join(", "))?;
        writeln!(f, "sim.dt = {:.9e}", self.dt)?;
        writeln!(f, "sim.t_end = {:.9e}", self.t_end)?;
        writeln!(f, "sim.escape_radius = {:.9e}", self.escape_radius)?;
        if self.threshold == f64::NEG_INFINITY {
            writeln!(f, "sim.threshold = -inf")?;
        } else {
            writeln!(f, "sim.threshold = {:.9e}", self.threshold)?;
        }
        writeln!(f, "sim.converge_tol = {:.9e}", self.converge_tol)?;
        writeln!(f, "sim.stride = {}", self.stride)?;
        writeln!(f, "output.dir = {}", self.out_dir.display())
    }
}
