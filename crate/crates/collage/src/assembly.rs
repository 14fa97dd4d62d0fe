//! Quadrature, forward Galerkin solves of the steady-state diffusion
//! equation, and assembly of the collage least-squares system.
//!
//! The collage system pairs a trial basis (carrying the unknown diffusivity
//! coefficients) with a test basis of compactly supported hats. Its residual
//! `A c - b` discretizes the weak-form defect of a candidate diffusivity
//! against a fixed target solution, so the collage distance is `||A c - b||`.
//! All integrals run on merged breakpoint grids where the integrands are
//! piecewise polynomial, making the 3-point Gauss rule exact for them.

use crate::basis::{HatBasis, Interval};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Errors from quadrature, forward solves, and collage assembly.
#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("integration needs at least 2 breakpoints, got {0}")]
    TooFewBreakpoints(usize),
    #[error("breakpoints must be strictly increasing")]
    UnsortedBreakpoints,
    #[error("breakpoints and values differ in length: {breakpoints} vs {values}")]
    LengthMismatch { breakpoints: usize, values: usize },
    #[error("diffusivity is not coercive: K({x}) = {value} at a quadrature node")]
    NonCoercive { x: f64, value: f64 },
    #[error("forward mesh needs at least 3 interior nodes, got {0}")]
    MeshTooCoarse(usize),
    #[error("stiffness matrix is singular")]
    SingularSystem,
    #[error("coefficient vector has length {got}, system has {expected} trial functions")]
    CoefficientLength { got: usize, expected: usize },
    #[error("bases and target are defined on mismatched intervals")]
    IntervalMismatch,
    #[error("matrix has {rows} rows but right-hand side has length {rhs}")]
    ShapeMismatch { rows: usize, rhs: usize },
    #[error("error bound requires a positive coercivity constant, got {0}")]
    NonPositiveCoercivity(f64),
    #[error(transparent)]
    Basis(#[from] crate::basis::BasisError),
}

// 3-point Gauss-Legendre rule on [-1, 1]: exact for polynomials of degree <= 5.
const GAUSS_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// The three Gauss nodes and weights mapped onto `[a, b]`.
pub fn gauss_points(a: f64, b: f64) -> [(f64, f64); 3] {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    [
        (mid + half * GAUSS_NODES[0], half * GAUSS_WEIGHTS[0]),
        (mid, half * GAUSS_WEIGHTS[1]),
        (mid + half * GAUSS_NODES[2], half * GAUSS_WEIGHTS[2]),
    ]
}

/// Composite 3-point Gauss-Legendre quadrature over consecutive breakpoint
/// pairs. Exact for integrands that are polynomial of degree at most 5 on
/// each subinterval.
pub fn integrate(g: impl Fn(f64) -> f64, breakpoints: &[f64]) -> Result<f64, AssemblyError> {
    if breakpoints.len() < 2 {
        return Err(AssemblyError::TooFewBreakpoints(breakpoints.len()));
    }
    if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AssemblyError::UnsortedBreakpoints);
    }
    let mut total = 0.0;
    for w in breakpoints.windows(2) {
        for (x, weight) in gauss_points(w[0], w[1]) {
            total += weight * g(x);
        }
    }
    Ok(total)
}

/// Merges breakpoint lists into one strictly increasing grid, collapsing
/// points closer than `1e-12` times the span.
pub fn merge_breakpoints(lists: &[&[f64]]) -> Vec<f64> {
    let mut points: Vec<f64> = lists.iter().flat_map(|l| l.iter().copied()).collect();
    points.sort_by(|a, b| a.partial_cmp(b).expect("breakpoints are finite"));
    if let (Some(&lo), Some(&hi)) = (points.first(), points.last()) {
        let tol = 1e-12 * (hi - lo).max(1.0);
        points.dedup_by(|a, b| (*a - *b).abs() <= tol);
    }
    points
}

/// Splits every cell of a strictly increasing grid into `parts` equal pieces.
pub fn refine_breakpoints(breakpoints: &[f64], parts: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(breakpoints.len() * parts);
    for w in breakpoints.windows(2) {
        for j in 0..parts {
            out.push(w[0] + (w[1] - w[0]) * (j as f64) / (parts as f64));
        }
    }
    out.push(*breakpoints.last().expect("grid is nonempty"));
    out
}

/// Continuous piecewise-linear function on a strictly increasing breakpoint
/// grid. Evaluation clamps to the boundary values outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearFn {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinearFn {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, AssemblyError> {
        if breakpoints.len() != values.len() {
            return Err(AssemblyError::LengthMismatch {
                breakpoints: breakpoints.len(),
                values: values.len(),
            });
        }
        if breakpoints.len() < 2 {
            return Err(AssemblyError::TooFewBreakpoints(breakpoints.len()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AssemblyError::UnsortedBreakpoints);
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    /// Samples `f` at the given breakpoints.
    pub fn sample(f: impl Fn(f64) -> f64, breakpoints: Vec<f64>) -> Result<Self, AssemblyError> {
        let values = breakpoints.iter().map(|&x| f(x)).collect();
        Self::new(breakpoints, values)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    /// Index of the grid cell containing `x`, clamped to the grid.
    fn cell(&self, x: f64) -> usize {
        let n = self.breakpoints.len();
        let pos = self.breakpoints.partition_point(|&b| b <= x);
        pos.clamp(1, n - 1) - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.cell(x);
        let (x0, x1) = (self.breakpoints[i], self.breakpoints[i + 1]);
        let t = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }

    /// Piecewise-constant derivative. At a breakpoint the right-hand slope is
    /// returned, except at the last breakpoint where only the left-hand slope
    /// exists.
    pub fn deriv(&self, x: f64) -> f64 {
        let i = self.cell(x);
        (self.values[i + 1] - self.values[i]) / (self.breakpoints[i + 1] - self.breakpoints[i])
    }

    /// L2 distance `sqrt(int (self - g)^2)` over the function's domain. Each
    /// cell is split in four for quadrature so that smooth non-polynomial `g`
    /// is integrated accurately; piecewise-polynomial cases stay exact.
    pub fn l2_distance(&self, g: impl Fn(f64) -> f64) -> f64 {
        let grid = refine_breakpoints(&self.breakpoints, 4);
        let sq = integrate(
            |x| {
                let d = self.eval(x) - g(x);
                d * d
            },
            &grid,
        )
        .expect("grid from a valid function is valid");
        sq.max(0.0).sqrt()
    }
}

/// Dirichlet boundary values at the two interval endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletBC {
    pub value_left: f64,
    pub value_right: f64,
}

impl DirichletBC {
    pub fn new(value_left: f64, value_right: f64) -> Self {
        Self {
            value_left,
            value_right,
        }
    }

    pub fn homogeneous() -> Self {
        Self::new(0.0, 0.0)
    }
}

/// Galerkin solution of `-(K u')' = f` with Dirichlet data on a uniform
/// single-level hat mesh with `mesh_nodes` interior nodes. Nonzero boundary
/// values are handled by lifting: the homogeneous problem is solved for the
/// remainder and the linear interpolant of the boundary data is added back.
pub fn solve_forward(
    interval: Interval,
    diffusivity: impl Fn(f64) -> f64,
    source: impl Fn(f64) -> f64,
    bc: DirichletBC,
    mesh_nodes: usize,
) -> Result<PiecewiseLinearFn, AssemblyError> {
    if mesh_nodes < 3 {
        return Err(AssemblyError::MeshTooCoarse(mesh_nodes));
    }
    let n = mesh_nodes;
    let h = interval.length() / ((n + 1) as f64);
    let node = |k: usize| interval.left() + (k as f64) * interval.length() / ((n + 1) as f64);

    let lift_slope = (bc.value_right - bc.value_left) / interval.length();
    let lift = |x: f64| bc.value_left + lift_slope * (x - interval.left());

    let mut stiffness = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);

    // Element loop: on [node(e), node(e+1)] the active nodal hats are e and
    // e+1; nodes 0 and n+1 are boundary nodes and carry no unknown.
    for e in 0..=n {
        let (a, b) = (node(e), node(e + 1));
        let mut k_int = 0.0;
        for (x, w) in gauss_points(a, b) {
            let k_val = diffusivity(x);
            if k_val <= 0.0 {
                return Err(AssemblyError::NonCoercive { x, value: k_val });
            }
            k_int += w * k_val;
        }
        let active: [(usize, f64); 2] = [(e, -1.0 / h), (e + 1, 1.0 / h)];
        for &(i, si) in &active {
            if i == 0 || i > n {
                continue;
            }
            for &(j, sj) in &active {
                if j == 0 || j > n {
                    continue;
                }
                stiffness[(i - 1, j - 1)] += si * sj * k_int;
            }
            let mut load = 0.0;
            for (x, w) in gauss_points(a, b) {
                let phi = if i == e { (b - x) / h } else { (x - a) / h };
                load += w * source(x) * phi;
            }
            rhs[i - 1] += load - k_int * lift_slope * si;
        }
    }

    let solution = stiffness
        .lu()
        .solve(&rhs)
        .ok_or(AssemblyError::SingularSystem)?;

    let mut breakpoints = Vec::with_capacity(n + 2);
    let mut values = Vec::with_capacity(n + 2);
    breakpoints.push(interval.left());
    values.push(bc.value_left);
    for k in 1..=n {
        let x = node(k);
        breakpoints.push(x);
        values.push(solution[k - 1] + lift(x));
    }
    breakpoints.push(interval.right());
    values.push(bc.value_right);
    PiecewiseLinearFn::new(breakpoints, values)
}

/// The discretized collage least-squares system: residual `A c - b` over the
/// test functions, with one column per trial function.
///
/// Immutable after assembly; shared read-only across sweep workers.
#[derive(Debug, Clone)]
pub struct CollageSystem {
    matrix: DMatrix<f64>,
    rhs: DVector<f64>,
}

impl CollageSystem {
    /// Wraps a raw matrix and right-hand side (used for synthetic instances).
    pub fn from_parts(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Result<Self, AssemblyError> {
        if matrix.nrows() != rhs.len() {
            return Err(AssemblyError::ShapeMismatch {
                rows: matrix.nrows(),
                rhs: rhs.len(),
            });
        }
        Ok(Self { matrix, rhs })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn test_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trial_count(&self) -> usize {
        self.matrix.ncols()
    }

    fn check_len(&self, coeffs: &DVector<f64>) -> Result<(), AssemblyError> {
        if coeffs.len() != self.trial_count() {
            return Err(AssemblyError::CoefficientLength {
                got: coeffs.len(),
                expected: self.trial_count(),
            });
        }
        Ok(())
    }

    pub fn residual(&self, coeffs: &DVector<f64>) -> Result<DVector<f64>, AssemblyError> {
        self.check_len(coeffs)?;
        Ok(&self.matrix * coeffs - &self.rhs)
    }

    /// Collage distance `||A c - b||_2`.
    pub fn collage_distance(&self, coeffs: &DVector<f64>) -> Result<f64, AssemblyError> {
        Ok(self.residual(coeffs)?.norm())
    }

    /// Squared collage distance, the smooth form minimized by the optimizer.
    pub fn collage_distance_squared(&self, coeffs: &DVector<f64>) -> Result<f64, AssemblyError> {
        Ok(self.residual(coeffs)?.norm_squared())
    }

    /// Squared collage distance together with its gradient `2 A^T (A c - b)`.
    pub fn squared_with_gradient(
        &self,
        coeffs: &DVector<f64>,
    ) -> Result<(f64, DVector<f64>), AssemblyError> {
        let r = self.residual(coeffs)?;
        Ok((r.norm_squared(), 2.0 * self.matrix.transpose() * r))
    }

    /// Minimum-norm least-squares solution of `A c = b` via SVD, dropping
    /// singular values below `1e-10` times the largest.
    pub fn min_norm_least_squares(&self) -> DVector<f64> {
        let svd = self.matrix.clone().svd(true, true);
        let cutoff = 1e-10 * svd.singular_values.max();
        svd.solve(&self.rhs, cutoff)
            .expect("SVD computed with both factors")
    }
}

/// Assembles the collage system for a trial basis (diffusivity expansion),
/// a test basis, a piecewise-linear target solution, and a source term:
/// `A[i][j] = int phi_j u' v_i'` and `b[i] = int f v_i`, integrated on the
/// merged breakpoint grid of both bases and the target.
pub fn assemble_collage(
    trial: &HatBasis,
    test: &HatBasis,
    u_target: &PiecewiseLinearFn,
    source: impl Fn(f64) -> f64,
) -> Result<CollageSystem, AssemblyError> {
    let tol = 1e-9 * trial.interval().length();
    let (lo, hi) = u_target.domain();
    let same_interval = (trial.interval().left() - test.interval().left()).abs() <= tol
        && (trial.interval().right() - test.interval().right()).abs() <= tol;
    if !same_interval
        || (trial.interval().left() - lo).abs() > tol
        || (trial.interval().right() - hi).abs() > tol
    {
        return Err(AssemblyError::IntervalMismatch);
    }

    let trial_points = trial.breakpoints();
    let test_points = test.breakpoints();
    let grid = merge_breakpoints(&[&trial_points, &test_points, u_target.breakpoints()]);

    let mut matrix = DMatrix::<f64>::zeros(test.len(), trial.len());
    let mut rhs = DVector::<f64>::zeros(test.len());

    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let du = u_target.deriv(mid);
        let points = gauss_points(a, b);

        // cell integrals of the (piecewise linear) trial hats, exact here
        let mut trial_mass: Vec<(usize, f64)> = Vec::new();
        for (j, hat) in trial.functions().iter().enumerate() {
            if hat.overlaps(a, b) {
                let m: f64 = points.iter().map(|&(x, wt)| wt * hat.value(x)).sum();
                trial_mass.push((j, m));
            }
        }

        for (i, hat) in test.functions().iter().enumerate() {
            if !hat.overlaps(a, b) {
                continue;
            }
            let slope = hat.slope_right(mid);
            if slope != 0.0 && du != 0.0 {
                for &(j, m) in &trial_mass {
                    matrix[(i, j)] += slope * du * m;
                }
            }
            rhs[i] += points
                .iter()
                .map(|&(x, wt)| wt * source(x) * hat.value(x))
                .sum::<f64>();
        }
    }

    CollageSystem::from_parts(matrix, rhs)
}

/// Minimum of the expanded diffusivity over the quadrature nodes of the
/// basis grid: a computable proxy for the coercivity constant. A value at
/// or below zero signals loss of coercivity.
pub fn coercivity_lower_bound(trial: &HatBasis, coeffs: &[f64]) -> Result<f64, AssemblyError> {
    trial.check_len(coeffs)?;
    let grid = trial.breakpoints();
    let mut min = f64::INFINITY;
    for w in grid.windows(2) {
        for (x, _) in gauss_points(w[0], w[1]) {
            min = min.min(trial.expand_unchecked(coeffs, x));
        }
    }
    Ok(min)
}

/// Upper bound `cd / m_lower` on the solution error implied by the collage
/// distance and a positive coercivity lower bound.
pub fn error_bound(cd: f64, m_lower: f64) -> Result<f64, AssemblyError> {
    if m_lower <= 0.0 {
        return Err(AssemblyError::NonPositiveCoercivity(m_lower));
    }
    Ok(cd / m_lower)
}
