//! Experiment orchestration: build a basis, obtain the target solution,
//! assemble the collage system, run the configured model over its parameter
//! rows, and emit result tables, recovered coefficients, and plot data.

use crate::assembly::{
    self, assemble_collage, merge_breakpoints, solve_forward, CollageSystem, PiecewiseLinearFn,
};
use crate::basis::HatBasis;
use crate::config::{ExperimentConfig, ModelSpec, Polynomial, TargetSpec};
use crate::criteria;
use crate::data;
use crate::mco::{self, Solution};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Any failure while running an experiment end to end.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Basis(#[from] crate::basis::BasisError),
    #[error(transparent)]
    Assembly(#[from] crate::assembly::AssemblyError),
    #[error(transparent)]
    Mco(#[from] crate::mco::McoError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl RunError {
    /// Process exit code: 1 for configuration problems, 2 for numeric or
    /// runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            _ => 2,
        }
    }
}

/// Outcome of one solver row.
#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    NotConverged,
    Failed(String),
}

impl std::fmt::Display for RowStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowStatus::Ok => write!(f, "ok"),
            RowStatus::NotConverged => write!(f, "not_converged"),
            RowStatus::Failed(msg) => {
                write!(f, "error: {}", msg.replace([',', '\n'], ";"))
            }
        }
    }
}

/// One table row: the model parameters and the recomputed criteria. For the
/// weighted-sum model the parameters are the weights; for the constraint
/// model the two caps; for the goal model the three goal levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub params: [Option<f64>; 3],
    pub cd: f64,
    pub ent: f64,
    pub sp: usize,
    pub er: Option<f64>,
    pub status: RowStatus,
}

/// Table output format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

/// Everything a run produced in memory; files land in the output directory.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
    /// Per-row solutions; failed rows carry no solution.
    pub solutions: Vec<Option<Solution>>,
    pub table_path: PathBuf,
}

/// Formats a real with 15 significant digits in plain decimal notation.
/// Non-finite values map to the empty field.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return String::new();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (14 - exponent).clamp(0, 60) as usize;
    format!("{x:.decimals$}")
}

/// Builds the target solution the collage system is assembled against.
pub fn build_target(config: &ExperimentConfig, trial: &HatBasis) -> Result<PiecewiseLinearFn, RunError> {
    match &config.target {
        TargetSpec::Exact { grid_points } => {
            let u = config
                .u_true
                .as_ref()
                .expect("validation requires u_true for exact targets");
            let n = grid_points - 1;
            let uniform: Vec<f64> = (0..=n)
                .map(|k| {
                    config.interval.left()
                        + (k as f64) * config.interval.length() / (n as f64)
                })
                .collect();
            // merging in the basis nodes lets exactly representable
            // diffusivities reach near-zero residuals
            let grid = merge_breakpoints(&[&uniform, &trial.breakpoints()]);
            Ok(PiecewiseLinearFn::sample(|x| u.eval(x), grid)?)
        }
        TargetSpec::Sampled { n_interior } => {
            let u = config
                .u_true
                .as_ref()
                .expect("validation requires u_true for sampled targets");
            let clean = data::sample_solution(
                |x| u.eval(x),
                *n_interior,
                config.interval,
                config.bc,
            )?;
            let noisy = data::add_noise(&clean, &config.noise);
            Ok(data::interpolate_target(&noisy))
        }
        TargetSpec::File { path } => {
            let obs = data::load_observations(path, config.interval, config.bc)?;
            Ok(data::interpolate_target(&obs))
        }
    }
}

/// Assembles the collage system for a config: trial basis as configured,
/// test basis with the same levels but interior hats only (the test space
/// must vanish at the boundary).
pub fn build_system(
    config: &ExperimentConfig,
) -> Result<(HatBasis, CollageSystem, PiecewiseLinearFn), RunError> {
    let trial = HatBasis::multiresolution(
        config.interval,
        &config.interior_counts,
        config.include_half_hats,
    )?;
    let test = HatBasis::multiresolution(config.interval, &config.interior_counts, false)?;
    let u_target = build_target(config, &trial)?;
    let source = config.source.clone();
    let system = assemble_collage(&trial, &test, &u_target, |x| source.eval(x))?;
    Ok((trial, system, u_target))
}

fn row_from_solution(
    params: [Option<f64>; 3],
    solution: &Solution,
    trial: &HatBasis,
    k_true: Option<&Polynomial>,
) -> Result<ResultRow, RunError> {
    let er = match k_true {
        Some(k) => Some(criteria::l2_error(
            trial,
            solution.lambda.as_slice(),
            |x| k.eval(x),
        )?),
        None => None,
    };
    let status = if solution.converged {
        RowStatus::Ok
    } else {
        RowStatus::NotConverged
    };
    Ok(ResultRow {
        params,
        cd: solution.criteria.cd,
        ent: solution.criteria.ent,
        sp: solution.criteria.sp,
        er,
        status,
    })
}

fn failed_row(params: [Option<f64>; 3], message: String) -> ResultRow {
    ResultRow {
        params,
        cd: f64::NAN,
        ent: f64::NAN,
        sp: 0,
        er: None,
        status: RowStatus::Failed(message),
    }
}

/// Runs the configured experiment and writes all artifacts into the output
/// directory: `results.csv`, `results.md`, and per-row `lambda_NNN.csv` and
/// `plot_NNN.csv` files. Solver failures are recorded in the row status
/// without aborting the remaining rows.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, RunError> {
    let (trial, system, u_target) = build_system(config)?;
    let k_true = config.k_true.as_ref();

    let mut rows = Vec::new();
    let mut solutions: Vec<Option<Solution>> = Vec::new();

    match &config.model {
        ModelSpec::Model1 { weights } => {
            // rows are independent solves; results merge in grid order
            let solved: Vec<_> = weights
                .par_iter()
                .map(|w| {
                    mco::solve_model1(
                        &system,
                        w,
                        &config.sparsity,
                        &config.bounds,
                        &config.optimizer,
                    )
                })
                .collect();
            for (w, result) in weights.iter().zip(solved) {
                let params = [Some(w.cd), Some(w.ent), Some(w.sp)];
                match result {
                    Ok(solution) => {
                        rows.push(row_from_solution(params, &solution, &trial, k_true)?);
                        solutions.push(Some(solution));
                    }
                    Err(e) => {
                        rows.push(failed_row(params, e.to_string()));
                        solutions.push(None);
                    }
                }
            }
        }
        ModelSpec::Model2(eps) => {
            let params = [Some(eps.neg_entropy_max), Some(eps.sparsity_max), None];
            match mco::solve_model2(
                &system,
                eps,
                &config.sparsity,
                &config.bounds,
                &config.optimizer,
            ) {
                Ok(solution) => {
                    rows.push(row_from_solution(params, &solution, &trial, k_true)?);
                    solutions.push(Some(solution));
                }
                Err(e) => {
                    rows.push(failed_row(params, e.to_string()));
                    solutions.push(None);
                }
            }
        }
        ModelSpec::Model3(goals) => {
            let params = [
                Some(goals.targets[0]),
                Some(goals.targets[1]),
                Some(goals.targets[2]),
            ];
            match mco::solve_model3(
                &system,
                goals,
                &config.sparsity,
                &config.bounds,
                &config.optimizer,
            ) {
                Ok(solution) => {
                    rows.push(row_from_solution(params, &solution, &trial, k_true)?);
                    solutions.push(Some(solution));
                }
                Err(e) => {
                    rows.push(failed_row(params, e.to_string()));
                    solutions.push(None);
                }
            }
        }
        ModelSpec::Sweep { weights } => {
            let entries = mco::pareto_sweep(
                &system,
                weights,
                &config.sparsity,
                &config.bounds,
                &config.optimizer,
            )?;
            for entry in entries {
                let params = [
                    Some(entry.weights.cd),
                    Some(entry.weights.ent),
                    Some(entry.weights.sp),
                ];
                rows.push(row_from_solution(params, &entry.solution, &trial, k_true)?);
                solutions.push(Some(entry.solution));
            }
        }
    }

    std::fs::create_dir_all(&config.output_dir).map_err(|source| RunError::Write {
        path: config.output_dir.clone(),
        source,
    })?;
    let table_path = config.output_dir.join("results.csv");
    emit_table(&rows, &table_path, TableFormat::Csv)?;
    emit_table(
        &rows,
        config.output_dir.join("results.md"),
        TableFormat::Markdown,
    )?;

    for (index, solution) in solutions.iter().enumerate() {
        if let Some(solution) = solution {
            write_lambda(
                solution,
                config.output_dir.join(format!("lambda_{index:03}.csv")),
            )?;
            let u_recovered = recover_solution(config, &trial, solution);
            emit_plot_data(
                &trial,
                solution.lambda.as_slice(),
                k_true.map(|k| move |x: f64| k.eval(x)),
                &u_target,
                u_recovered.as_ref(),
                config.output_dir.join(format!("plot_{index:03}.csv")),
            )?;
        }
    }

    Ok(ExperimentOutcome {
        rows,
        solutions,
        table_path,
    })
}

/// Forward-solves with the recovered diffusivity when it stays coercive;
/// otherwise logs a warning and yields nothing.
fn recover_solution(
    config: &ExperimentConfig,
    trial: &HatBasis,
    solution: &Solution,
) -> Option<PiecewiseLinearFn> {
    let coeffs = solution.lambda.as_slice();
    let bound = assembly::coercivity_lower_bound(trial, coeffs).ok()?;
    if bound <= 0.0 {
        eprintln!(
            "warning: recovered diffusivity loses coercivity (lower bound {bound:.3e}); \
             skipping the forward re-solve"
        );
        return None;
    }
    let source = &config.source;
    match solve_forward(
        config.interval,
        |x| trial.expand_unchecked(coeffs, x),
        |x| source.eval(x),
        config.bc,
        config.forward_mesh_nodes,
    ) {
        Ok(u) => Some(u),
        Err(e) => {
            eprintln!("warning: forward re-solve with the recovered diffusivity failed: {e}");
            None
        }
    }
}

/// Writes the result table. CSV columns are
/// `eta1,eta2,eta3,CD,ENT,SP,ER,status` with reals at 15 significant digits
/// and SP as an integer; markdown mirrors the same layout.
pub fn emit_table(
    rows: &[ResultRow],
    path: impl AsRef<Path>,
    format: TableFormat,
) -> Result<(), RunError> {
    let path = path.as_ref();
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str("eta1,eta2,eta3,CD,ENT,SP,ER,status\n");
            for row in rows {
                let p = |v: Option<f64>| v.map(fmt_sig).unwrap_or_default();
                let er = row.er.map(fmt_sig).unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    p(row.params[0]),
                    p(row.params[1]),
                    p(row.params[2]),
                    fmt_sig(row.cd),
                    fmt_sig(row.ent),
                    row.sp,
                    er,
                    row.status
                )
                .expect("writing to a string cannot fail");
            }
        }
        TableFormat::Markdown => {
            out.push_str("| eta1 | eta2 | eta3 | CD | ENT | SP | ER | status |\n");
            out.push_str("|---|---|---|---|---|---|---|---|\n");
            for row in rows {
                let p = |v: Option<f64>| v.map(fmt_sig).unwrap_or_default();
                let er = row.er.map(fmt_sig).unwrap_or_default();
                writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} | {} | {} |",
                    p(row.params[0]),
                    p(row.params[1]),
                    p(row.params[2]),
                    fmt_sig(row.cd),
                    fmt_sig(row.ent),
                    row.sp,
                    er,
                    row.status
                )
                .expect("writing to a string cannot fail");
            }
        }
    }
    std::fs::write(path, out).map_err(|source| RunError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a CSV written by [`emit_table`] back into rows.
pub fn parse_table(text: &str) -> Result<Vec<ResultRow>, RunError> {
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || {
            RunError::Config(crate::config::ConfigError::Invalid(format!(
                "malformed results row: {line:?}"
            )))
        };
        if fields.len() != 8 {
            return Err(bad());
        }
        let opt = |s: &str| -> Result<Option<f64>, RunError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad())
            }
        };
        let num = |s: &str| -> Result<f64, RunError> {
            if s.is_empty() {
                Ok(f64::NAN)
            } else {
                s.parse().map_err(|_| bad())
            }
        };
        let status = match fields[7] {
            "ok" => RowStatus::Ok,
            "not_converged" => RowStatus::NotConverged,
            other => RowStatus::Failed(
                other
                    .strip_prefix("error: ")
                    .unwrap_or(other)
                    .to_string(),
            ),
        };
        rows.push(ResultRow {
            params: [opt(fields[0])?, opt(fields[1])?, opt(fields[2])?],
            cd: num(fields[3])?,
            ent: num(fields[4])?,
            sp: fields[5].parse().map_err(|_| bad())?,
            er: opt(fields[6])?,
            status,
        });
    }
    Ok(rows)
}

fn write_lambda(solution: &Solution, path: impl AsRef<Path>) -> Result<(), RunError> {
    let path = path.as_ref();
    let mut out = String::from("index,coefficient\n");
    for (i, c) in solution.lambda.iter().enumerate() {
        writeln!(out, "{i},{}", fmt_sig(*c)).expect("writing to a string cannot fail");
    }
    std::fs::write(path, out).map_err(|source| RunError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes plot data on a 401-point uniform grid: `x,K_true,K_rec,u_true,u_rec`.
/// Missing references and a failed recovery leave their columns empty.
pub fn emit_plot_data<K>(
    basis: &HatBasis,
    coeffs: &[f64],
    k_true: Option<K>,
    u_target: &PiecewiseLinearFn,
    u_recovered: Option<&PiecewiseLinearFn>,
    path: impl AsRef<Path>,
) -> Result<(), RunError>
where
    K: Fn(f64) -> f64,
{
    basis.check_len(coeffs)?;
    let path = path.as_ref();
    let interval = basis.interval();
    let mut out = String::from("x,K_true,K_rec,u_true,u_rec\n");
    for k in 0..=400 {
        let x = interval.left() + (k as f64) * interval.length() / 400.0;
        let k_ref = k_true
            .as_ref()
            .map(|f| fmt_sig(f(x)))
            .unwrap_or_default();
        let u_rec = u_recovered.map(|u| fmt_sig(u.eval(x))).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_sig(x),
            k_ref,
            fmt_sig(basis.expand_unchecked(coeffs, x)),
            fmt_sig(u_target.eval(x)),
            u_rec
        )
        .expect("writing to a string cannot fail");
    }
    std::fs::write(path, out).map_err(|source| RunError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Forward solve for the configured problem; requires a diffusivity.
pub fn run_forward(config: &ExperimentConfig) -> Result<PiecewiseLinearFn, RunError> {
    let k = config.k_true.as_ref().ok_or_else(|| {
        RunError::Config(crate::config::ConfigError::Invalid(
            "forward solves require problem.k_true".into(),
        ))
    })?;
    let source = &config.source;
    Ok(solve_forward(
        config.interval,
        |x| k.eval(x),
        |x| source.eval(x),
        config.bc,
        config.forward_mesh_nodes,
    )?)
}

/// Generates observations per the sampled-target settings and writes them to
/// `observations.csv` in the output directory.
pub fn run_synth(config: &ExperimentConfig) -> Result<PathBuf, RunError> {
    let u = config.u_true.as_ref().ok_or_else(|| {
        RunError::Config(crate::config::ConfigError::Invalid(
            "synthetic observations require problem.u_true".into(),
        ))
    })?;
    let n_interior = match &config.target {
        TargetSpec::Sampled { n_interior } => *n_interior,
        _ => {
            return Err(RunError::Config(crate::config::ConfigError::Invalid(
                "synthetic observations require target.kind = \"sampled\"".into(),
            )))
        }
    };
    let clean = data::sample_solution(|x| u.eval(x), n_interior, config.interval, config.bc)?;
    let noisy = data::add_noise(&clean, &config.noise);
    std::fs::create_dir_all(&config.output_dir).map_err(|source| RunError::Write {
        path: config.output_dir.clone(),
        source,
    })?;
    let path = config.output_dir.join("observations.csv");
    data::save_observations(&noisy, &path)?;
    Ok(path)
}
