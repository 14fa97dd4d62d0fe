//! Declarative experiment configuration: problem, basis, target, noise,
//! model parameters, and optimizer settings, parsed from a TOML file.
//!
//! Diffusivity, source, and true-solution expressions are polynomials given
//! as ascending coefficient lists, e.g. `[1.0, 3.0]` for `1 + 3x`.

use crate::assembly::DirichletBC;
use crate::basis::Interval;
use crate::criteria::SparsityMode;
use crate::data::NoiseSpec;
use crate::mco::{BoxBounds, EpsilonBounds, Goals, OptimizerSettings, Weights};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Errors from reading and validating a configuration file.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config syntax error: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Polynomial with ascending coefficients: `c[0] + c[1] x + c[2] x^2 + ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial(Vec<f64>);

impl Polynomial {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self(coefficients)
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }
}

/// How the target solution entering the collage system is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    /// Sample the configured true solution on a uniform grid of
    /// `grid_points` points (merged with the basis breakpoints).
    Exact { grid_points: usize },
    /// Sample the true solution at equispaced interior points, apply the
    /// configured noise, and interpolate.
    Sampled { n_interior: usize },
    /// Load observations from a CSV file and interpolate.
    File { path: PathBuf },
}

/// Which scalarization the run executes.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Model1 { weights: Vec<Weights> },
    Model2(EpsilonBounds),
    Model3(Goals),
    Sweep { weights: Vec<Weights> },
}

/// A validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub interval: Interval,
    pub k_true: Option<Polynomial>,
    pub u_true: Option<Polynomial>,
    pub source: Polynomial,
    pub bc: DirichletBC,
    pub interior_counts: Vec<usize>,
    pub include_half_hats: bool,
    pub target: TargetSpec,
    pub noise: NoiseSpec,
    pub sparsity: SparsityMode,
    pub bounds: BoxBounds,
    pub optimizer: OptimizerSettings,
    pub model: ModelSpec,
    pub forward_mesh_nodes: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    problem: RawProblem,
    basis: RawBasis,
    target: RawTarget,
    noise: Option<RawNoise>,
    sparsity: Option<RawSparsity>,
    #[serde(rename = "box")]
    bounds: Option<RawBox>,
    optimizer: Option<RawOptimizer>,
    model1: Option<RawModel1>,
    model2: Option<RawModel2>,
    model3: Option<RawModel3>,
    sweep: Option<RawModel1>,
    forward: Option<RawForward>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    interval: [f64; 2],
    k_true: Option<Vec<f64>>,
    u_true: Option<Vec<f64>>,
    f: Vec<f64>,
    bc: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBasis {
    interior_counts: Vec<usize>,
    include_half_hats: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTarget {
    kind: String,
    grid_points: Option<usize>,
    n_interior: Option<usize>,
    path: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    relative_level: f64,
    seed: Option<u64>,
    distribution: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSparsity {
    mode: String,
    alpha: Option<f64>,
    tau: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lo: f64,
    hi: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimizer {
    max_iterations: Option<usize>,
    gradient_tolerance: Option<f64>,
    epsilon_smooth: Option<f64>,
    random_starts: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel1 {
    weights: Vec<[f64; 3]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel2 {
    neg_entropy_max: f64,
    sparsity_max: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel3 {
    goals: [f64; 3],
    over_weights: [f64; 3],
    under_weights: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForward {
    mesh_nodes: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: PathBuf,
}

/// Overrides supplied on the command line.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Reads, parses, and validates a config file.
    pub fn load(
        path: impl AsRef<Path>,
        overrides: &ConfigOverrides,
    ) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, overrides)
    }

    /// Parses and validates config text.
    pub fn parse(text: &str, overrides: &ConfigOverrides) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        Self::validate(raw, overrides)
    }

    fn validate(raw: RawConfig, overrides: &ConfigOverrides) -> Result<Self, ConfigError> {
        let seed = overrides.seed.or(raw.seed).unwrap_or(42);

        let interval = Interval::new(raw.problem.interval[0], raw.problem.interval[1])
            .map_err(|e| invalid(format!("problem.interval: {e}")))?;
        if raw.problem.f.is_empty() {
            return Err(invalid("problem.f needs at least one coefficient"));
        }
        let source = Polynomial::new(raw.problem.f.clone());
        let k_true = raw.problem.k_true.clone().map(Polynomial::new);
        let u_true = raw.problem.u_true.clone().map(Polynomial::new);
        let bc = DirichletBC::new(raw.problem.bc[0], raw.problem.bc[1]);

        if raw.basis.interior_counts.is_empty() {
            return Err(invalid("basis.interior_counts must be nonempty"));
        }
        if raw.basis.interior_counts.contains(&0) {
            return Err(invalid("basis.interior_counts entries must be positive"));
        }
        let include_half_hats = raw.basis.include_half_hats.unwrap_or(true);

        let target = match raw.target.kind.as_str() {
            "exact" => {
                let grid_points = raw.target.grid_points.unwrap_or(2001);
                if grid_points < 2 {
                    return Err(invalid("target.grid_points must be at least 2"));
                }
                if u_true.is_none() {
                    return Err(invalid("target.kind = \"exact\" requires problem.u_true"));
                }
                TargetSpec::Exact { grid_points }
            }
            "sampled" => {
                let n_interior = raw
                    .target
                    .n_interior
                    .ok_or_else(|| invalid("target.kind = \"sampled\" requires n_interior"))?;
                if n_interior < 1 {
                    return Err(invalid("target.n_interior must be at least 1"));
                }
                if u_true.is_none() {
                    return Err(invalid("target.kind = \"sampled\" requires problem.u_true"));
                }
                TargetSpec::Sampled { n_interior }
            }
            "file" => {
                let path = raw
                    .target
                    .path
                    .ok_or_else(|| invalid("target.kind = \"file\" requires target.path"))?;
                TargetSpec::File { path }
            }
            other => {
                return Err(invalid(format!(
                    "target.kind must be exact, sampled, or file, got {other:?}"
                )))
            }
        };

        let noise = match &raw.noise {
            Some(n) => {
                if n.relative_level < 0.0 || !n.relative_level.is_finite() {
                    return Err(invalid("noise.relative_level must be nonnegative"));
                }
                match n.distribution.as_deref() {
                    None | Some("uniform") => {}
                    Some(other) => {
                        return Err(invalid(format!(
                            "noise.distribution must be uniform, got {other:?}"
                        )))
                    }
                }
                NoiseSpec::uniform(n.relative_level, n.seed.unwrap_or(seed))
            }
            None => NoiseSpec::uniform(0.0, seed),
        };

        let sparsity = match &raw.sparsity {
            None => SparsityMode::L1,
            Some(s) => {
                let mode = match s.mode.as_str() {
                    "l0" => SparsityMode::L0 {
                        threshold: s.tau.unwrap_or(1e-6),
                    },
                    "l1" => SparsityMode::L1,
                    "exp_star" => SparsityMode::ExpStar {
                        alpha: s.alpha.unwrap_or(1.0),
                    },
                    "exp_star_squared" => SparsityMode::ExpStarSquared {
                        alpha: s.alpha.unwrap_or(1.0),
                    },
                    other => {
                        return Err(invalid(format!(
                            "sparsity.mode must be l0, l1, exp_star, or exp_star_squared, got {other:?}"
                        )))
                    }
                };
                mode.validate()
                    .map_err(|e| invalid(format!("sparsity: {e}")))?;
                mode
            }
        };

        let bounds = match &raw.bounds {
            None => BoxBounds::default(),
            Some(b) => BoxBounds::new(b.lo, b.hi).map_err(|e| invalid(format!("box: {e}")))?,
        };

        let defaults = OptimizerSettings::default();
        let optimizer = OptimizerSettings {
            max_iterations: raw
                .optimizer
                .as_ref()
                .and_then(|o| o.max_iterations)
                .unwrap_or(defaults.max_iterations),
            gradient_tolerance: raw
                .optimizer
                .as_ref()
                .and_then(|o| o.gradient_tolerance)
                .unwrap_or(defaults.gradient_tolerance),
            epsilon_smooth: raw
                .optimizer
                .as_ref()
                .and_then(|o| o.epsilon_smooth)
                .unwrap_or(defaults.epsilon_smooth),
            random_starts: raw
                .optimizer
                .as_ref()
                .and_then(|o| o.random_starts)
                .unwrap_or(defaults.random_starts),
            seed,
            constant_start: 1.0 / raw.basis.interior_counts.len() as f64,
        };
        if optimizer.gradient_tolerance <= 0.0 || optimizer.epsilon_smooth <= 0.0 {
            return Err(invalid(
                "optimizer tolerances and smoothing must be positive",
            ));
        }

        let parse_weights = |list: &[[f64; 3]], section: &str| -> Result<Vec<Weights>, ConfigError> {
            if list.is_empty() {
                return Err(invalid(format!("{section}.weights must be nonempty")));
            }
            list.iter()
                .map(|w| {
                    Weights::new(w[0], w[1], w[2])
                        .map_err(|e| invalid(format!("{section}.weights: {e}")))
                })
                .collect()
        };

        let mut models = Vec::new();
        if let Some(m) = &raw.model1 {
            models.push(ModelSpec::Model1 {
                weights: parse_weights(&m.weights, "model1")?,
            });
        }
        if let Some(m) = &raw.model2 {
            if !m.neg_entropy_max.is_finite() || !m.sparsity_max.is_finite() {
                return Err(invalid("model2 caps must be finite"));
            }
            models.push(ModelSpec::Model2(EpsilonBounds {
                neg_entropy_max: m.neg_entropy_max,
                sparsity_max: m.sparsity_max,
            }));
        }
        if let Some(m) = &raw.model3 {
            let goals = Goals {
                targets: m.goals,
                over_weights: m.over_weights,
                under_weights: m.under_weights,
            };
            goals
                .validate()
                .map_err(|e| invalid(format!("model3: {e}")))?;
            models.push(ModelSpec::Model3(goals));
        }
        if let Some(m) = &raw.sweep {
            models.push(ModelSpec::Sweep {
                weights: parse_weights(&m.weights, "sweep")?,
            });
        }
        if models.len() != 1 {
            return Err(invalid(format!(
                "exactly one of [model1], [model2], [model3], [sweep] must be present, found {}",
                models.len()
            )));
        }
        let model = models.pop().expect("checked length above");

        let forward_mesh_nodes = raw.forward.as_ref().map(|f| f.mesh_nodes).unwrap_or(128);
        if forward_mesh_nodes < 3 {
            return Err(invalid("forward.mesh_nodes must be at least 3"));
        }

        let output_dir = overrides
            .output_dir
            .clone()
            .or_else(|| raw.output.as_ref().map(|o| o.dir.clone()))
            .unwrap_or_else(|| PathBuf::from("out"));

        Ok(Self {
            interval,
            k_true,
            u_true,
            source,
            bc,
            interior_counts: raw.basis.interior_counts,
            include_half_hats,
            target,
            noise,
            sparsity,
            bounds,
            optimizer,
            model,
            forward_mesh_nodes,
            output_dir,
            seed,
        })
    }
}
