//! JSON experiment configuration consumed by the command-line front end.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dist::SignalDistribution;
use crate::empirics::LqlsSettings;
use crate::risk::QuadConfig;
use crate::se::{SeConfig, SolverConfig};
use crate::theory::QStarConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `sigma_w -> 0` at fixed `delta`, standard noise model.
    #[default]
    SmallNoise,
    /// `delta -> infinity`, noise scaled by `1/sqrt(delta)`.
    LargeDelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub n: usize,
    pub p: usize,
    pub seeds: Vec<u64>,
    pub fista_tol: f64,
    pub max_iter: usize,
    pub scaled: bool,
    pub accelerate: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n: 2000,
            p: 1000,
            seeds: vec![0],
            fista_tol: 1e-9,
            max_iter: 50_000,
            scaled: false,
            accelerate: false,
        }
    }
}

impl McConfig {
    pub fn settings(&self) -> LqlsSettings {
        LqlsSettings {
            tol: self.fista_tol,
            max_iter: self.max_iter,
            accelerate: self.accelerate,
            ..LqlsSettings::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dist: SignalDistribution,
    #[serde(default)]
    pub q_grid: Vec<f64>,
    #[serde(default)]
    pub delta_grid: Vec<f64>,
    #[serde(default)]
    pub sigma_w_grid: Vec<f64>,
    #[serde(default)]
    pub lambda_grid: Vec<f64>,
    /// Noise model for `amse` and `phase`.
    #[serde(default)]
    pub scaled: bool,
    /// Expansion family for `expand`.
    #[serde(default)]
    pub regime: Regime,
    #[serde(default)]
    pub quadrature: QuadConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub qstar: QStarConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Amse,
    Expand,
    Qstar,
    Mc,
    Phase,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Amse => "amse",
            Command::Expand => "expand",
            Command::Qstar => "qstar",
            Command::Mc => "mc",
            Command::Phase => "phase",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: Option<String>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        ConfigError {
            field: Some(field.to_string()),
            line: None,
            column: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.field, self.line, self.column) {
            (Some(field), _, _) => write!(f, "field `{field}`: {}", self.message),
            (None, Some(line), Some(col)) => write!(f, "line {line}, column {col}: {}", self.message),
            _ => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError {
            field: None,
            line: Some(e.line()),
            column: Some(e.column()),
            message: e.to_string(),
        })
    }

    pub fn se_config(&self) -> SeConfig {
        SeConfig {
            quadrature: self.quadrature.clone(),
            solver: self.solver.clone(),
        }
    }

    /// Checks the fields `command` needs.
    pub fn validate(&self, command: Command) -> Result<(), ConfigError> {
        self.dist.validate().map_err(|e| ConfigError::field("dist", e.to_string()))?;
        let needs: &[&str] = match command {
            Command::Amse | Command::Expand => &["q_grid", "delta_grid", "sigma_w_grid"],
            Command::Phase => &["q_grid", "delta_grid", "sigma_w_grid"],
            Command::Mc => &["q_grid", "sigma_w_grid", "lambda_grid"],
            Command::Qstar => &[],
        };
        for &name in needs {
            let grid = self.grid(name);
            if grid.is_empty() {
                return Err(ConfigError::field(name, format!("must be nonempty for `{}`", command.name())));
            }
            if let Some(bad) = grid.iter().find(|v| !v.is_finite()) {
                return Err(ConfigError::field(name, format!("contains non-finite value {bad}")));
            }
        }
        if let Some(bad) = self.q_grid.iter().find(|q| !(1.0..=2.0).contains(*q)) {
            return Err(ConfigError::field("q_grid", format!("q must lie in [1, 2], got {bad}")));
        }
        if let Some(bad) = self.lambda_grid.iter().find(|l| **l < 0.0) {
            return Err(ConfigError::field("lambda_grid", format!("lambda must be >= 0, got {bad}")));
        }
        self.solver
            .validate()
            .map_err(|e| ConfigError::field("solver", e.to_string()))?;
        if self.quadrature.b_nodes < 8 || self.quadrature.hermite_nodes < 2 || self.quadrature.panel_nodes < 2 {
            return Err(ConfigError::field("quadrature", "node counts too small"));
        }
        if command == Command::Mc {
            let mc = &self.mc;
            if mc.n == 0 || mc.p == 0 {
                return Err(ConfigError::field("mc", "n and p must be >= 1"));
            }
            if mc.seeds.is_empty() {
                return Err(ConfigError::field("mc.seeds", "must be nonempty"));
            }
            if !(mc.fista_tol > 0.0) || mc.max_iter == 0 {
                return Err(ConfigError::field("mc", "fista_tol and max_iter must be > 0"));
            }
        }
        if command == Command::Qstar && (self.qstar.points < 3 || !(self.qstar.golden_tol > 0.0)) {
            return Err(ConfigError::field("qstar", "needs >= 3 points and golden_tol > 0"));
        }
        Ok(())
    }

    fn grid(&self, name: &str) -> &[f64] {
        match name {
            "q_grid" => &self.q_grid,
            "delta_grid" => &self.delta_grid,
            "sigma_w_grid" => &self.sigma_w_grid,
            "lambda_grid" => &self.lambda_grid,
            _ => &[],
        }
    }
}
