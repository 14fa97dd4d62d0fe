//! Synthetic observation generation, noise injection, target interpolation,
//! and observation persistence.

use crate::assembly::{AssemblyError, DirichletBC, PiecewiseLinearFn};
use crate::basis::Interval;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

/// Errors from observation handling and persistence.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("need at least one interior sample point")]
    NoSamplePoints,
    #[error("observation abscissae must be strictly increasing (line {line})")]
    UnsortedPoints { line: usize },
    #[error("observation x = {x} lies outside the open interval")]
    OutOfInterval { x: f64 },
    #[error("observation file line {line} is malformed: {content:?}")]
    MalformedLine { line: usize, content: String },
    #[error("observation file is missing the `x,u` header")]
    MissingHeader,
    #[error("observation file has no data rows")]
    EmptyFile,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

/// Interior samples of a solution, together with the interval and boundary
/// values they belong to. Boundary values are never part of the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    points: Vec<(f64, f64)>,
    interval: Interval,
    bc: DirichletBC,
}

impl ObservationSet {
    pub fn new(
        points: Vec<(f64, f64)>,
        interval: Interval,
        bc: DirichletBC,
    ) -> Result<Self, DataError> {
        if points.is_empty() {
            return Err(DataError::NoSamplePoints);
        }
        for (line, w) in points.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return Err(DataError::UnsortedPoints { line: line + 1 });
            }
        }
        for &(x, _) in &points {
            if x <= interval.left() || x >= interval.right() {
                return Err(DataError::OutOfInterval { x });
            }
        }
        Ok(Self {
            points,
            interval,
            bc,
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn bc(&self) -> DirichletBC {
        self.bc
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Multiplicative noise specification: each sample is scaled by
/// `1 + relative_level * xi` with `xi` uniform on `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub relative_level: f64,
    pub seed: u64,
    pub distribution: NoiseDistribution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseDistribution {
    Uniform,
}

impl NoiseSpec {
    pub fn uniform(relative_level: f64, seed: u64) -> Self {
        Self {
            relative_level,
            seed,
            distribution: NoiseDistribution::Uniform,
        }
    }

    pub fn noiseless() -> Self {
        Self::uniform(0.0, 0)
    }
}

/// Samples a solution at `n_interior` equispaced interior points.
pub fn sample_solution(
    u_true: impl Fn(f64) -> f64,
    n_interior: usize,
    interval: Interval,
    bc: DirichletBC,
) -> Result<ObservationSet, DataError> {
    if n_interior < 1 {
        return Err(DataError::NoSamplePoints);
    }
    let points = (1..=n_interior)
        .map(|k| {
            let x = interval.left()
                + (k as f64) * interval.length() / ((n_interior + 1) as f64);
            (x, u_true(x))
        })
        .collect();
    ObservationSet::new(points, interval, bc)
}

/// Perturbs each sample value multiplicatively with seeded uniform noise.
/// Boundary values are untouched.
pub fn add_noise(obs: &ObservationSet, spec: &NoiseSpec) -> ObservationSet {
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let points = obs
        .points
        .iter()
        .map(|&(x, u)| {
            let xi: f64 = match spec.distribution {
                NoiseDistribution::Uniform => rng.random_range(-1.0..=1.0),
            };
            (x, u * (1.0 + spec.relative_level * xi))
        })
        .collect();
    ObservationSet {
        points,
        interval: obs.interval,
        bc: obs.bc,
    }
}

/// Piecewise-linear interpolant through the boundary values and every
/// observation point.
pub fn interpolate_target(obs: &ObservationSet) -> PiecewiseLinearFn {
    let mut breakpoints = Vec::with_capacity(obs.len() + 2);
    let mut values = Vec::with_capacity(obs.len() + 2);
    breakpoints.push(obs.interval.left());
    values.push(obs.bc.value_left);
    for &(x, u) in &obs.points {
        breakpoints.push(x);
        values.push(u);
    }
    breakpoints.push(obs.interval.right());
    values.push(obs.bc.value_right);
    PiecewiseLinearFn::new(breakpoints, values)
        .expect("observation invariants give a valid grid")
}

/// Writes observations as CSV with an `x,u` header, one point per line,
/// shortest exact decimal notation, LF line endings.
pub fn save_observations(obs: &ObservationSet, path: impl AsRef<Path>) -> Result<(), DataError> {
    let mut out = String::from("x,u\n");
    for &(x, u) in &obs.points {
        writeln!(out, "{x},{u}").expect("writing to a string cannot fail");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads observations saved by [`save_observations`], validating them
/// against the interval and boundary values they are to be used with.
pub fn load_observations(
    path: impl AsRef<Path>,
    interval: Interval,
    bc: DirichletBC,
) -> Result<ObservationSet, DataError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "x,u" => {}
        Some(_) => return Err(DataError::MissingHeader),
        None => return Err(DataError::EmptyFile),
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = || DataError::MalformedLine {
            line: line_no,
            content: line.to_string(),
        };
        let (xs, us) = line.split_once(',').ok_or_else(malformed)?;
        let x: f64 = xs.trim().parse().map_err(|_| malformed())?;
        let u: f64 = us.trim().parse().map_err(|_| malformed())?;
        if !x.is_finite() || !u.is_finite() {
            return Err(malformed());
        }
        if let Some(&(prev, _)) = points.last() {
            if x <= prev {
                return Err(DataError::UnsortedPoints { line: line_no });
            }
        }
        points.push((x, u));
    }
    if points.is_empty() {
        return Err(DataError::EmptyFile);
    }
    ObservationSet::new(points, interval, bc)
}
