//! Reduction of the three-criteria minimization (collage distance,
//! neg-entropy, sparsity) to smooth single-criterion problems, a projected
//! quasi-Newton optimizer over box constraints, and Pareto sweeps.
//!
//! Three scalarizations are provided: a weighted sum, an epsilon-constraint
//! form solved by quadratic exterior penalties, and weighted-deviation goal
//! attainment with the slack variables eliminated in closed form. Every
//! solver recomputes the reported criteria from the returned coefficients.

use crate::assembly::{AssemblyError, CollageSystem};
use crate::criteria::{self, CriteriaError, CriteriaValues, SparsityMode};
use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use std::collections::VecDeque;
use thiserror::Error;

/// Errors from model solves and sweeps.
#[derive(Debug, Error)]
pub enum McoError {
    #[error("weights must be nonnegative with a positive sum")]
    InvalidWeights,
    #[error("box bounds must be finite with lo < hi, got [{lo}, {hi}]")]
    InvalidBox { lo: f64, hi: f64 },
    #[error("goal deviation weights must be nonnegative and finite")]
    InvalidGoals,
    #[error("no feasible start point was supplied")]
    NoFeasibleStart,
    #[error("objective is not finite at start {start_index}")]
    NonFiniteObjective { start_index: usize },
    #[error("weight grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Criteria(#[from] CriteriaError),
}

/// Trade-off weights for (collage distance, entropy, sparsity).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub cd: f64,
    pub ent: f64,
    pub sp: f64,
}

impl Weights {
    pub fn new(cd: f64, ent: f64, sp: f64) -> Result<Self, McoError> {
        let w = Self { cd, ent, sp };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), McoError> {
        let all = [self.cd, self.ent, self.sp];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) || all.iter().sum::<f64>() <= 0.0 {
            return Err(McoError::InvalidWeights);
        }
        Ok(())
    }
}

/// Componentwise box `[lo, hi]` constraining every coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxBounds {
    lo: f64,
    hi: f64,
}

impl BoxBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self, McoError> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(McoError::InvalidBox { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn clamp_value(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| v.clamp(self.lo, self.hi))
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter().all(|&v| v >= self.lo && v <= self.hi)
    }
}

impl Default for BoxBounds {
    fn default() -> Self {
        Self { lo: -10.0, hi: 10.0 }
    }
}

/// Caps for the epsilon-constraint model: neg-entropy at most `neg_entropy_max`
/// and (smoothed) sparsity at most `sparsity_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonBounds {
    pub neg_entropy_max: f64,
    pub sparsity_max: f64,
}

/// Goal levels and deviation weights for (CD, -ENT, SP). `over_weights`
/// penalize exceeding a goal, `under_weights` penalize falling short.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Goals {
    pub targets: [f64; 3],
    pub over_weights: [f64; 3],
    pub under_weights: [f64; 3],
}

impl Goals {
    pub fn validate(&self) -> Result<(), McoError> {
        let finite = self.targets.iter().all(|t| t.is_finite());
        let weights_ok = self
            .over_weights
            .iter()
            .chain(&self.under_weights)
            .all(|w| w.is_finite() && *w >= 0.0);
        if finite && weights_ok {
            Ok(())
        } else {
            Err(McoError::InvalidGoals)
        }
    }
}

/// Optimizer configuration shared by all model solves.
#[derive(Debug, Clone)]
pub struct OptimizerSettings {
    /// Cap on accepted descent steps per start.
    pub max_iterations: usize,
    /// Stop when the projected gradient infinity norm falls below
    /// `gradient_tolerance * (1 + |objective|)`.
    pub gradient_tolerance: f64,
    /// Smoothing width for `|x|` inside entropy and sparsity surrogates.
    pub epsilon_smooth: f64,
    /// Number of seeded random start points appended to the fixed starts.
    pub random_starts: usize,
    /// Seed for the random start points.
    pub seed: u64,
    /// Component value of the constant-profile start; for an L-level basis,
    /// `1/L` expands to the constant function 1.
    pub constant_start: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            gradient_tolerance: 1e-9,
            epsilon_smooth: 1e-8,
            random_starts: 2,
            seed: 42,
            constant_start: 1.0,
        }
    }
}

/// Raw optimizer result before criteria are attached.
#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub point: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Which multi-start produced the returned point.
    pub start_index: usize,
}

/// A model solve: the winning coefficients with criteria recomputed from
/// them, never copied from optimizer internals.
#[derive(Debug, Clone)]
pub struct Solution {
    pub lambda: DVector<f64>,
    pub criteria: CriteriaValues,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub start_index: usize,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const LBFGS_MEMORY: usize = 10;
/// Margin below which two multi-start results count as a tie; earlier
/// starts win ties.
const TIE_MARGIN: f64 = 1e-12;
/// Feasibility tolerance of the exterior penalty method.
const CONSTRAINT_TOL: f64 = 1e-6;

struct LbfgsMemory {
    pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)>,
}

impl LbfgsMemory {
    fn new() -> Self {
        Self {
            pairs: VecDeque::with_capacity(LBFGS_MEMORY),
        }
    }

    fn push(&mut self, s: DVector<f64>, y: DVector<f64>) {
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if self.pairs.len() == LBFGS_MEMORY {
                self.pairs.pop_front();
            }
            self.pairs.push_back((s, y, 1.0 / sy));
        }
    }

    /// Two-loop recursion for `-H g` with the implicit inverse Hessian.
    fn direction(&self, grad: &DVector<f64>) -> DVector<f64> {
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let alpha = rho * s.dot(&q);
            q.axpy(-alpha, y, 1.0);
            alphas.push(alpha);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            q *= s.dot(y) / y.dot(y);
        }
        for ((s, y, rho), &alpha) in self.pairs.iter().zip(alphas.iter().rev()) {
            let beta = rho * y.dot(&q);
            q.axpy(alpha - beta, s, 1.0);
        }
        -q
    }
}

fn projected_gradient_norm(bounds: &BoxBounds, x: &DVector<f64>, grad: &DVector<f64>) -> f64 {
    let mut norm = 0.0_f64;
    for i in 0..x.len() {
        let step = x[i] - bounds.clamp_value(x[i] - grad[i]);
        norm = norm.max(step.abs());
    }
    norm
}

fn run_start<F>(
    objective: &F,
    bounds: &BoxBounds,
    start: DVector<f64>,
    settings: &OptimizerSettings,
) -> (DVector<f64>, f64, usize, bool)
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut x = start;
    let (mut f, mut grad) = objective(&x);
    let mut memory = LbfgsMemory::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < settings.max_iterations {
        let pg = projected_gradient_norm(bounds, &x, &grad);
        if pg <= settings.gradient_tolerance * (1.0 + f.abs()) {
            converged = true;
            break;
        }

        let mut accepted = None;
        for attempt in 0..2 {
            let mut direction = if attempt == 0 {
                memory.direction(&grad)
            } else {
                -&grad
            };
            if direction.dot(&grad) >= 0.0 {
                direction = -&grad;
            }
            let mut t = 1.0_f64;
            for _ in 0..MAX_HALVINGS {
                let candidate = bounds.project(&(&x + &direction * t));
                let step = &candidate - &x;
                if step.norm() == 0.0 {
                    break;
                }
                let (f_new, g_new) = objective(&candidate);
                if f_new.is_finite() && f_new <= f + ARMIJO_C1 * grad.dot(&step) {
                    accepted = Some((candidate, f_new, g_new, step));
                    break;
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }

        match accepted {
            Some((x_new, f_new, g_new, step)) => {
                memory.push(step, &g_new - &grad);
                x = x_new;
                f = f_new;
                grad = g_new;
                iterations += 1;
            }
            // no direction yields progress at this scale
            None => break,
        }
    }

    (x, f, iterations, converged)
}

/// Projected quasi-Newton descent from every start, keeping the best final
/// point. A later start replaces the incumbent only when strictly better by
/// more than `1e-12 * (1 + |f|)`, so the returned objective is within that
/// margin of the best over all starts and never above any start's value.
/// Deterministic given starts and settings.
pub fn optimize<F>(
    objective: F,
    bounds: &BoxBounds,
    starts: &[DVector<f64>],
    settings: &OptimizerSettings,
) -> Result<OptimizeOutcome, McoError>
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut best: Option<OptimizeOutcome> = None;
    for (index, start) in starts.iter().enumerate() {
        if start.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let clamped = bounds.project(start);
        if !objective(&clamped).0.is_finite() {
            return Err(McoError::NonFiniteObjective { start_index: index });
        }
        let (point, value, iterations, converged) =
            run_start(&objective, bounds, clamped, settings);
        let replace = match &best {
            None => true,
            Some(incumbent) => value < incumbent.objective - TIE_MARGIN * (1.0 + value.abs()),
        };
        if replace {
            best = Some(OptimizeOutcome {
                point,
                objective: value,
                iterations,
                converged,
                start_index: index,
            });
        }
    }
    best.ok_or(McoError::NoFeasibleStart)
}

/// The fixed multi-start set: minimum-norm least squares (clamped), the
/// constant profile, the zero vector, then seeded random points. Earlier
/// entries win near-ties in `optimize`.
pub fn default_starts(
    system: &CollageSystem,
    bounds: &BoxBounds,
    settings: &OptimizerSettings,
) -> Vec<DVector<f64>> {
    let n = system.trial_count();
    let mut starts = Vec::with_capacity(3 + settings.random_starts);
    starts.push(bounds.project(&system.min_norm_least_squares()));
    starts.push(DVector::from_element(n, bounds.clamp_value(settings.constant_start)));
    starts.push(bounds.project(&DVector::zeros(n)));
    let mut rng = StdRng::seed_from_u64(settings.seed);
    for _ in 0..settings.random_starts {
        starts.push(DVector::from_fn(n, |_, _| {
            rng.random_range(bounds.lo()..=bounds.hi())
        }));
    }
    starts
}

fn effective_smooth_mode(mode: &SparsityMode) -> SparsityMode {
    // the counting measure is not differentiable; objectives use its convex
    // surrogate while reporting still counts
    match mode {
        SparsityMode::L0 { .. } => SparsityMode::L1,
        other => *other,
    }
}

fn finish(system: &CollageSystem, outcome: OptimizeOutcome) -> Result<Solution, McoError> {
    let criteria = criteria::evaluate(system, &outcome.point)?;
    Ok(Solution {
        lambda: outcome.point,
        criteria,
        objective: outcome.objective,
        iterations: outcome.iterations,
        converged: outcome.converged,
        start_index: outcome.start_index,
    })
}

/// Weighted-sum scalarization: minimizes
/// `w.cd * CD^2 + w.ent * (-ENT_smooth) + w.sp * SP_smooth` over the box.
pub fn solve_model1(
    system: &CollageSystem,
    weights: &Weights,
    sp_mode: &SparsityMode,
    bounds: &BoxBounds,
    settings: &OptimizerSettings,
) -> Result<Solution, McoError> {
    weights.validate()?;
    sp_mode.validate()?;
    let smooth_mode = effective_smooth_mode(sp_mode);
    let eps = settings.epsilon_smooth;
    let w = *weights;
    let objective = move |x: &DVector<f64>| -> (f64, DVector<f64>) {
        let mut value = 0.0;
        let mut grad = DVector::zeros(x.len());
        if w.cd != 0.0 {
            let (v, g) = system
                .squared_with_gradient(x)
                .expect("starts share the system dimension");
            value += w.cd * v;
            grad.axpy(w.cd, &g, 1.0);
        }
        if w.ent != 0.0 {
            let (v, g) = criteria::neg_entropy_smooth(x.as_slice(), eps);
            value += w.ent * v;
            for (gi, gv) in grad.iter_mut().zip(&g) {
                *gi += w.ent * gv;
            }
        }
        if w.sp != 0.0 {
            let (v, g) = criteria::sparsity_smooth(x.as_slice(), &smooth_mode, eps)
                .expect("smooth mode never rejects gradients");
            value += w.sp * v;
            for (gi, gv) in grad.iter_mut().zip(&g) {
                *gi += w.sp * gv;
            }
        }
        (value, grad)
    };
    let starts = default_starts(system, bounds, settings);
    let outcome = optimize(objective, bounds, &starts, settings)?;
    finish(system, outcome)
}

/// Epsilon-constraint model: minimizes the squared collage distance subject
/// to `-ENT <= eps.neg_entropy_max` and `SP <= eps.sparsity_max`, via a
/// quadratic exterior penalty with the multiplier escalating tenfold from 1
/// to 1e6 or until the constraint violation drops below 1e-6. The smoothed
/// criteria measure both the penalty and the reported feasibility.
pub fn solve_model2(
    system: &CollageSystem,
    eps_bounds: &EpsilonBounds,
    sp_mode: &SparsityMode,
    bounds: &BoxBounds,
    settings: &OptimizerSettings,
) -> Result<Solution, McoError> {
    sp_mode.validate()?;
    let smooth_mode = effective_smooth_mode(sp_mode);
    let eps = settings.epsilon_smooth;

    let violation = |x: &DVector<f64>| -> f64 {
        let ne = criteria::neg_entropy_smooth(x.as_slice(), eps).0;
        let sp = criteria::sparsity_smooth(x.as_slice(), &smooth_mode, eps)
            .expect("smooth mode never rejects gradients")
            .0;
        (ne - eps_bounds.neg_entropy_max)
            .max(sp - eps_bounds.sparsity_max)
            .max(0.0)
    };

    // best candidate across penalty stages: feasible with smallest CD first,
    // otherwise least infeasible
    let mut best: Option<(OptimizeOutcome, f64, f64)> = None;
    let mut warm: Option<DVector<f64>> = None;
    let mut total_iterations = 0;

    let mut rho = 1.0_f64;
    loop {
        let objective = |x: &DVector<f64>| -> (f64, DVector<f64>) {
            let (cd2, cd2_grad) = system
                .squared_with_gradient(x)
                .expect("starts share the system dimension");
            let (ne, ne_grad) = criteria::neg_entropy_smooth(x.as_slice(), eps);
            let (sp, sp_grad) = criteria::sparsity_smooth(x.as_slice(), &smooth_mode, eps)
                .expect("smooth mode never rejects gradients");
            let v_ent = (ne - eps_bounds.neg_entropy_max).max(0.0);
            let v_sp = (sp - eps_bounds.sparsity_max).max(0.0);
            let value = cd2 + rho * (v_ent * v_ent + v_sp * v_sp);
            let mut grad = cd2_grad;
            for ((gi, ge), gs) in grad.iter_mut().zip(&ne_grad).zip(&sp_grad) {
                *gi += 2.0 * rho * (v_ent * ge + v_sp * gs);
            }
            (value, grad)
        };

        let outcome = match &warm {
            None => {
                let starts = default_starts(system, bounds, settings);
                optimize(objective, bounds, &starts, settings)?
            }
            Some(point) => optimize(objective, bounds, std::slice::from_ref(point), settings)?,
        };
        total_iterations += outcome.iterations;
        let viol = violation(&outcome.point);
        let cd2 = system.collage_distance_squared(&outcome.point)?;

        let replace = match &best {
            None => true,
            Some((_, best_viol, best_cd2)) => {
                let feasible = viol <= CONSTRAINT_TOL;
                let best_feasible = *best_viol <= CONSTRAINT_TOL;
                match (feasible, best_feasible) {
                    (true, true) => cd2 < *best_cd2,
                    (true, false) => true,
                    (false, true) => false,
                    (false, false) => viol < *best_viol,
                }
            }
        };
        if replace {
            best = Some((outcome.clone(), viol, cd2));
        }

        if viol <= CONSTRAINT_TOL || rho >= 1e6 {
            break;
        }
        warm = Some(outcome.point);
        rho *= 10.0;
    }

    let (outcome, viol, _) = best.expect("at least one penalty stage ran");
    // converged reports feasibility: false means the caps could not be met
    // even after the final escalation
    let feasible = viol <= CONSTRAINT_TOL;
    let mut solution = finish(
        system,
        OptimizeOutcome {
            iterations: total_iterations,
            ..outcome
        },
    )?;
    solution.converged = feasible;
    Ok(solution)
}

/// Smoothed positive part `(z + sqrt(z^2 + eps^2)) / 2` and its derivative.
fn smooth_plus(z: f64, eps: f64) -> (f64, f64) {
    let root = (z * z + eps * eps).sqrt();
    (0.5 * (z + root), 0.5 * (1.0 + z / root))
}

/// Goal-attainment model: minimizes the weighted one-sided deviations of
/// `J = (CD, -ENT, SP)` from the goal levels. The slack variables of the
/// classical formulation are eliminated exactly: at the optimum the positive
/// deviation is `max(J - g, 0)` and the negative one `max(g - J, 0)`; both
/// are smoothed for differentiability.
pub fn solve_model3(
    system: &CollageSystem,
    goals: &Goals,
    sp_mode: &SparsityMode,
    bounds: &BoxBounds,
    settings: &OptimizerSettings,
) -> Result<Solution, McoError> {
    goals.validate()?;
    sp_mode.validate()?;
    let smooth_mode = effective_smooth_mode(sp_mode);
    let eps = settings.epsilon_smooth;
    let g = *goals;

    let objective = move |x: &DVector<f64>| -> (f64, DVector<f64>) {
        let (cd2, cd2_grad) = system
            .squared_with_gradient(x)
            .expect("starts share the system dimension");
        // smooth the root so the collage criterion stays differentiable at 0
        let cd = (cd2 + eps * eps).sqrt();
        let cd_grad = cd2_grad / (2.0 * cd);
        let (ne, ne_grad) = criteria::neg_entropy_smooth(x.as_slice(), eps);
        let (sp, sp_grad) = criteria::sparsity_smooth(x.as_slice(), &smooth_mode, eps)
            .expect("smooth mode never rejects gradients");

        let values = [cd, ne, sp];
        let mut total = 0.0;
        let mut weights_j = [0.0; 3];
        for i in 0..3 {
            let (over, d_over) = smooth_plus(values[i] - g.targets[i], eps);
            let (under, d_under) = smooth_plus(g.targets[i] - values[i], eps);
            total += g.over_weights[i] * over + g.under_weights[i] * under;
            weights_j[i] = g.over_weights[i] * d_over - g.under_weights[i] * d_under;
        }
        let mut grad = cd_grad * weights_j[0];
        for ((gi, ge), gs) in grad.iter_mut().zip(&ne_grad).zip(&sp_grad) {
            *gi += weights_j[1] * ge + weights_j[2] * gs;
        }
        (total, grad)
    };

    let starts = default_starts(system, bounds, settings);
    let outcome = optimize(objective, bounds, &starts, settings)?;
    finish(system, outcome)
}

/// Componentwise dominance for minimization: `p` dominates `q` when every
/// component is no worse and at least one is strictly better.
pub fn dominates(p: &[f64; 3], q: &[f64; 3]) -> bool {
    p.iter().zip(q).all(|(a, b)| a <= b) && p.iter().zip(q).any(|(a, b)| a < b)
}

/// The criteria triple `(CD, -ENT, SP)` ordered for minimization.
pub fn criteria_triple(values: &CriteriaValues) -> [f64; 3] {
    [values.cd, -values.ent, values.sp as f64]
}

/// Indices of the triples not dominated by any other triple, in input order.
pub fn nondominated_indices(triples: &[[f64; 3]]) -> Vec<usize> {
    (0..triples.len())
        .filter(|&i| {
            !triples
                .iter()
                .enumerate()
                .any(|(j, other)| j != i && dominates(other, &triples[i]))
        })
        .collect()
}

/// One sweep result: the weight triple that produced a nondominated solution.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub weights: Weights,
    pub solution: Solution,
}

/// Runs the weighted-sum model once per weight triple (in parallel), filters
/// the results to the nondominated subset of their `(CD, -ENT, SP)` triples,
/// and orders the survivors by descending collage weight, then descending
/// entropy weight. Results merge in grid order regardless of scheduling.
pub fn pareto_sweep(
    system: &CollageSystem,
    grid: &[Weights],
    sp_mode: &SparsityMode,
    bounds: &BoxBounds,
    settings: &OptimizerSettings,
) -> Result<Vec<SweepEntry>, McoError> {
    if grid.is_empty() {
        return Err(McoError::EmptyGrid);
    }
    let solutions: Vec<Solution> = grid
        .par_iter()
        .map(|w| solve_model1(system, w, sp_mode, bounds, settings))
        .collect::<Result<_, _>>()?;

    let triples: Vec<[f64; 3]> = solutions
        .iter()
        .map(|s| criteria_triple(&s.criteria))
        .collect();
    let keep = nondominated_indices(&triples);
    let mut entries: Vec<SweepEntry> = grid
        .iter()
        .zip(solutions)
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, (w, solution))| SweepEntry {
            weights: *w,
            solution,
        })
        .collect();

    entries.sort_by(|a, b| {
        b.weights
            .cd
            .partial_cmp(&a.weights.cd)
            .expect("weights are finite")
            .then(
                b.weights
                    .ent
                    .partial_cmp(&a.weights.ent)
                    .expect("weights are finite"),
            )
    });
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn quadratic_center(center: &DVector<f64>) -> impl Fn(&DVector<f64>) -> (f64, DVector<f64>) + '_ {
        move |x| {
            let d = x - center;
            (d.norm_squared(), 2.0 * d)
        }
    }

    fn settings() -> OptimizerSettings {
        OptimizerSettings::default()
    }

    fn small_system(seed: u64, rows: usize, cols: usize) -> CollageSystem {
        let mut rng = StdRng::seed_from_u64(seed);
        let a = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(rows, |_, _| rng.random_range(-1.0..1.0));
        CollageSystem::from_parts(a, b).unwrap()
    }

    #[test]
    fn unconstrained_quadratic_reaches_center() {
        let center = DVector::from_vec(vec![0.3, -1.2, 2.5]);
        let bounds = BoxBounds::default();
        let start = DVector::zeros(3);
        let outcome = optimize(quadratic_center(&center), &bounds, &[start], &settings()).unwrap();
        assert!((&outcome.point - &center).norm() <= 1e-8);
        assert!(outcome.converged);
    }

    #[test]
    fn constrained_quadratic_clamps_to_box() {
        let center = DVector::from_vec(vec![15.0, -20.0, 0.5]);
        let bounds = BoxBounds::default();
        let start = DVector::zeros(3);
        let outcome = optimize(quadratic_center(&center), &bounds, &[start], &settings()).unwrap();
        let expected = DVector::from_vec(vec![10.0, -10.0, 0.5]);
        assert!((&outcome.point - &expected).norm() <= 1e-8);
    }

    #[test]
    fn rejects_empty_and_non_finite_starts() {
        let bounds = BoxBounds::default();
        let center = DVector::zeros(2);
        assert!(matches!(
            optimize(quadratic_center(&center), &bounds, &[], &settings()),
            Err(McoError::NoFeasibleStart)
        ));
        let bad = DVector::from_vec(vec![f64::NAN, 0.0]);
        assert!(matches!(
            optimize(quadratic_center(&center), &bounds, &[bad], &settings()),
            Err(McoError::NoFeasibleStart)
        ));
    }

    #[test]
    fn rejects_non_finite_objective() {
        let bounds = BoxBounds::default();
        let objective = |_: &DVector<f64>| (f64::NAN, DVector::zeros(2));
        assert!(matches!(
            optimize(objective, &bounds, &[DVector::zeros(2)], &settings()),
            Err(McoError::NonFiniteObjective { start_index: 0 })
        ));
    }

    #[test]
    fn descent_never_exceeds_any_start_value() {
        let system = small_system(1, 6, 9);
        let bounds = BoxBounds::default();
        let objective = |x: &DVector<f64>| system.squared_with_gradient(x).unwrap();
        let starts = default_starts(&system, &bounds, &settings());
        let start_values: Vec<f64> = starts.iter().map(|s| objective(s).0).collect();
        let outcome = optimize(objective, &bounds, &starts, &settings()).unwrap();
        for v in start_values {
            assert!(outcome.objective <= v + 1e-10);
        }
    }

    #[test]
    fn residual_matches_normal_equation_pseudoinverse_oracle() {
        // independent oracle: x = pinv(A^T A) A^T b via eigendecomposition
        let system = small_system(7, 6, 9);
        let a = system.matrix();
        let ata = a.transpose() * a;
        let atb = a.transpose() * system.rhs();
        let eig = nalgebra::SymmetricEigen::new(ata.clone());
        let cut = 1e-10 * eig.eigenvalues.amax();
        let mut x = DVector::zeros(a.ncols());
        for k in 0..eig.eigenvalues.len() {
            let lam = eig.eigenvalues[k];
            if lam > cut {
                let v = eig.eigenvectors.column(k);
                x += v * (v.dot(&atb) / lam);
            }
        }
        let oracle_residual = (a * &x - system.rhs()).norm();

        let bounds = BoxBounds::default();
        let objective = |x: &DVector<f64>| system.squared_with_gradient(x).unwrap();
        let starts = default_starts(&system, &bounds, &settings());
        let outcome = optimize(objective, &bounds, &starts, &settings()).unwrap();
        let residual = system.collage_distance(&outcome.point).unwrap();
        assert!(
            residual <= oracle_residual + 1e-8,
            "optimizer residual {residual} vs oracle {oracle_residual}"
        );
    }

    #[test]
    fn model1_pure_sparsity_returns_zero_vector() {
        let system = small_system(3, 6, 9);
        let weights = Weights::new(0.0, 0.0, 1.0).unwrap();
        let solution = solve_model1(
            &system,
            &weights,
            &SparsityMode::L1,
            &BoxBounds::default(),
            &settings(),
        )
        .unwrap();
        assert!(solution.lambda.amax() <= 1e-8);
        assert_eq!(solution.criteria.sp, 0);
        assert_abs_diff_eq!(
            solution.criteria.cd,
            system.rhs().norm(),
            epsilon = 1e-8
        );
    }

    #[test]
    fn model1_pure_entropy_equalizes_magnitudes() {
        let system = small_system(5, 6, 9);
        let weights = Weights::new(0.0, 1.0, 0.0).unwrap();
        let solution = solve_model1(
            &system,
            &weights,
            &SparsityMode::L1,
            &BoxBounds::default(),
            &settings(),
        )
        .unwrap();
        let n = system.trial_count() as f64;
        assert!(
            solution.criteria.ent >= n.ln() - 1e-3,
            "entropy {} below ln(n) = {}",
            solution.criteria.ent,
            n.ln()
        );
        let mags: Vec<f64> = solution.lambda.iter().map(|v| v.abs()).collect();
        let mean = mags.iter().sum::<f64>() / n;
        assert!(mean > 0.0);
        for m in mags {
            assert!((m - mean).abs() / mean <= 1e-2);
        }
    }

    #[test]
    fn model1_scaling_all_weights_leaves_argmin_unchanged() {
        let system = small_system(11, 6, 9);
        let sp = SparsityMode::L1;
        let bounds = BoxBounds::default();
        let w1 = Weights::new(0.6, 0.3, 0.1).unwrap();
        let w5 = Weights::new(3.0, 1.5, 0.5).unwrap();
        let a = solve_model1(&system, &w1, &sp, &bounds, &settings()).unwrap();
        let b = solve_model1(&system, &w5, &sp, &bounds, &settings()).unwrap();
        assert!(
            (&a.lambda - &b.lambda).norm() <= 1e-6,
            "argmin moved by {}",
            (&a.lambda - &b.lambda).norm()
        );
    }

    #[test]
    fn model1_is_deterministic() {
        let system = small_system(13, 6, 9);
        let w = Weights::new(0.7, 0.2, 0.1).unwrap();
        let sp = SparsityMode::L1;
        let bounds = BoxBounds::default();
        let a = solve_model1(&system, &w, &sp, &bounds, &settings()).unwrap();
        let b = solve_model1(&system, &w, &sp, &bounds, &settings()).unwrap();
        assert_eq!(a.lambda.as_slice(), b.lambda.as_slice());
    }

    #[test]
    fn invalid_weights_are_rejected() {
        assert!(Weights::new(-0.1, 0.5, 0.5).is_err());
        assert!(Weights::new(0.0, 0.0, 0.0).is_err());
        assert!(BoxBounds::new(1.0, 1.0).is_err());
    }

    #[test]
    fn model2_with_inactive_constraints_matches_model1() {
        let system = small_system(17, 6, 9);
        let bounds = BoxBounds::default();
        let sp = SparsityMode::L1;
        let m1 = solve_model1(
            &system,
            &Weights::new(1.0, 0.0, 0.0).unwrap(),
            &sp,
            &bounds,
            &settings(),
        )
        .unwrap();
        let m2 = solve_model2(
            &system,
            &EpsilonBounds {
                neg_entropy_max: 1e6,
                sparsity_max: 1e6,
            },
            &sp,
            &bounds,
            &settings(),
        )
        .unwrap();
        assert!(m2.converged);
        assert_abs_diff_eq!(m1.criteria.cd, m2.criteria.cd, epsilon = 1e-6);
    }

    #[test]
    fn model2_zero_sparsity_cap_forces_zero_vector() {
        let system = small_system(19, 6, 9);
        let solution = solve_model2(
            &system,
            &EpsilonBounds {
                neg_entropy_max: 1e6,
                sparsity_max: 0.0,
            },
            &SparsityMode::L1,
            &BoxBounds::default(),
            &settings(),
        )
        .unwrap();
        assert!(solution.lambda.amax() <= 1e-4);
        assert_abs_diff_eq!(
            solution.criteria.cd,
            system.rhs().norm(),
            epsilon = 1e-3 * system.rhs().norm()
        );
    }

    #[test]
    fn model3_attainable_goals_stay_put() {
        let system = small_system(23, 6, 9);
        let bounds = BoxBounds::default();
        // pick a known point, start there, and aim exactly at its criteria
        let s = OptimizerSettings {
            constant_start: 0.5,
            ..settings()
        };
        let lambda0 = DVector::from_element(system.trial_count(), 0.5);
        let cd = (system.collage_distance_squared(&lambda0).unwrap()
            + s.epsilon_smooth * s.epsilon_smooth)
            .sqrt();
        let ne = criteria::neg_entropy_smooth(lambda0.as_slice(), s.epsilon_smooth).0;
        let sp = criteria::sparsity_smooth(lambda0.as_slice(), &SparsityMode::L1, s.epsilon_smooth)
            .unwrap()
            .0;
        let goals = Goals {
            targets: [cd, ne, sp],
            over_weights: [1.0, 1.0, 1.0],
            under_weights: [1.0, 1.0, 1.0],
        };
        let objective_at = |x: &DVector<f64>| {
            // recompute the model objective externally for the assertion
            let cd_x = (system.collage_distance_squared(x).unwrap()
                + s.epsilon_smooth * s.epsilon_smooth)
                .sqrt();
            let ne_x = criteria::neg_entropy_smooth(x.as_slice(), s.epsilon_smooth).0;
            let sp_x =
                criteria::sparsity_smooth(x.as_slice(), &SparsityMode::L1, s.epsilon_smooth)
                    .unwrap()
                    .0;
            (cd_x - cd).abs() + (ne_x - ne).abs() + (sp_x - sp).abs()
        };
        let solution = solve_model3(&system, &goals, &SparsityMode::L1, &bounds, &s).unwrap();
        assert!(
            solution.objective <= 1e-6,
            "objective {} should be near zero",
            solution.objective
        );
        assert!(objective_at(&solution.lambda) <= 1e-4);
    }

    #[test]
    fn model3_one_sided_objective_identity() {
        // with all undershoot weights zero, the minimized objective must equal
        // the weighted sum of smoothed overshoots at the returned point
        let system = small_system(29, 5, 7);
        let s = settings();
        let goals = Goals {
            targets: [0.1, -1.0, 2.0],
            over_weights: [2.0, 3.0, 4.0],
            under_weights: [0.0, 0.0, 0.0],
        };
        let solution = solve_model3(
            &system,
            &goals,
            &SparsityMode::L1,
            &BoxBounds::default(),
            &s,
        )
        .unwrap();
        let x = &solution.lambda;
        let cd = (system.collage_distance_squared(x).unwrap()
            + s.epsilon_smooth * s.epsilon_smooth)
            .sqrt();
        let ne = criteria::neg_entropy_smooth(x.as_slice(), s.epsilon_smooth).0;
        let sp = criteria::sparsity_smooth(x.as_slice(), &SparsityMode::L1, s.epsilon_smooth)
            .unwrap()
            .0;
        let expected: f64 = [cd, ne, sp]
            .iter()
            .enumerate()
            .map(|(i, &j)| {
                goals.over_weights[i] * smooth_plus(j - goals.targets[i], s.epsilon_smooth).0
            })
            .sum();
        assert_abs_diff_eq!(solution.objective, expected, epsilon = 1e-10);
    }

    #[test]
    fn dominance_cases() {
        assert!(dominates(&[1.0, 2.0, 3.0], &[2.0, 2.0, 4.0]));
        assert!(!dominates(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]));
        assert!(!dominates(&[1.0, 5.0, 3.0], &[2.0, 2.0, 4.0]));
    }

    #[test]
    fn strictly_dominated_triple_is_filtered_out() {
        let kept = nondominated_indices(&[[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]);
        assert_eq!(kept, vec![0]);
        let incomparable = nondominated_indices(&[[1.0, 3.0, 1.0], [2.0, 2.0, 2.0]]);
        assert_eq!(incomparable, vec![0, 1]);
    }

    #[test]
    fn sweep_single_weight_returns_single_solution() {
        let system = small_system(37, 6, 9);
        let grid = [Weights::new(1.0, 0.0, 0.0).unwrap()];
        let entries = pareto_sweep(
            &system,
            &grid,
            &SparsityMode::L1,
            &BoxBounds::default(),
            &settings(),
        )
        .unwrap();
        assert_eq!(entries.len(), 1);
    }

    #[test]
    fn sweep_rejects_empty_grid() {
        let system = small_system(37, 6, 9);
        assert!(matches!(
            pareto_sweep(
                &system,
                &[],
                &SparsityMode::L1,
                &BoxBounds::default(),
                &settings()
            ),
            Err(McoError::EmptyGrid)
        ));
    }

    #[test]
    fn sweep_output_is_never_dominated() {
        let system = small_system(41, 6, 9);
        let grid: Vec<Weights> = (0..6)
            .map(|k| {
                let t = k as f64 / 5.0;
                Weights::new(1.0 - t + 1e-3, t + 1e-3, 0.1).unwrap()
            })
            .collect();
        let entries = pareto_sweep(
            &system,
            &grid,
            &SparsityMode::L1,
            &BoxBounds::default(),
            &settings(),
        )
        .unwrap();
        // brute-force pairwise oracle over the full grid results
        let all: Vec<[f64; 3]> = grid
            .iter()
            .map(|w| {
                let s = solve_model1(
                    &system,
                    w,
                    &SparsityMode::L1,
                    &BoxBounds::default(),
                    &settings(),
                )
                .unwrap();
                criteria_triple(&s.criteria)
            })
            .collect();
        for entry in &entries {
            let t = criteria_triple(&entry.solution.criteria);
            for other in &all {
                assert!(!dominates(other, &t));
            }
        }
        // ordering: descending collage weight
        for pair in entries.windows(2) {
            assert!(pair[0].weights.cd >= pair[1].weights.cd);
        }
    }
}
