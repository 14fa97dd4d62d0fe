//! Overlapping multiresolution hat-function bases on an interval.
//!
//! A resolution level with `n` interior functions places `n + 2` uniformly
//! spaced nodes across the interval (endpoints included) and attaches a
//! piecewise-linear bump to each interior node. Optional boundary "half hats"
//! let an expansion take nonzero values at the endpoints. Several levels are
//! concatenated, coarse first, into one flat index space so a single
//! coefficient vector spans all resolutions.

use thiserror::Error;

/// Errors from basis construction and evaluation.
#[derive(Debug, Error)]
pub enum BasisError {
    #[error("interval endpoints must be finite with left < right, got [{left}, {right}]")]
    InvalidInterval { left: f64, right: f64 },
    #[error("at least one resolution level is required")]
    EmptyLevels,
    #[error("level {level} requests zero interior functions; each level needs at least one")]
    EmptyLevel { level: usize },
    #[error("function index {index} out of range for a basis of {len} functions")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("coefficient vector has length {got}, basis has {expected} functions")]
    CoefficientLength { got: usize, expected: usize },
    #[error("level index {level} out of range, basis has {levels} levels")]
    LevelOutOfRange { level: usize, levels: usize },
}

/// Closed interval `[left, right]` with `left < right`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    left: f64,
    right: f64,
}

impl Interval {
    pub fn new(left: f64, right: f64) -> Result<Self, BasisError> {
        if !left.is_finite() || !right.is_finite() || left >= right {
            return Err(BasisError::InvalidInterval { left, right });
        }
        Ok(Self { left, right })
    }

    /// The unit interval `[0, 1]`.
    pub fn unit() -> Self {
        Self {
            left: 0.0,
            right: 1.0,
        }
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn length(&self) -> f64 {
        self.right - self.left
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.left && x <= self.right
    }
}

/// Shape of a hat function relative to the interval boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HatKind {
    Interior,
    LeftHalf,
    RightHalf,
}

/// A piecewise-linear bump: 1 at `peak`, 0 outside `[left, right]`, linear on
/// `[left, peak]` and `[peak, right]`. Half hats sit at a boundary, where the
/// peak coincides with `left` or `right` and only one linear leg remains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HatFunction {
    left: f64,
    peak: f64,
    right: f64,
    kind: HatKind,
}

impl HatFunction {
    pub fn interior(left: f64, peak: f64, right: f64) -> Self {
        debug_assert!(left < peak && peak < right);
        Self {
            left,
            peak,
            right,
            kind: HatKind::Interior,
        }
    }

    pub fn left_half(peak: f64, right: f64) -> Self {
        debug_assert!(peak < right);
        Self {
            left: peak,
            peak,
            right,
            kind: HatKind::LeftHalf,
        }
    }

    pub fn right_half(left: f64, peak: f64) -> Self {
        debug_assert!(left < peak);
        Self {
            left,
            peak,
            right: peak,
            kind: HatKind::RightHalf,
        }
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn kind(&self) -> HatKind {
        self.kind
    }

    /// True when the support `[left, right]` overlaps the open interval `(a, b)`.
    pub fn overlaps(&self, a: f64, b: f64) -> bool {
        self.left < b && self.right > a
    }

    pub fn value(&self, x: f64) -> f64 {
        if x < self.left || x > self.right {
            return 0.0;
        }
        if x <= self.peak {
            if self.peak > self.left {
                (x - self.left) / (self.peak - self.left)
            } else {
                // left half hat: the peak is the left endpoint itself
                1.0
            }
        } else {
            (self.right - x) / (self.right - self.peak)
        }
    }

    /// Slope on the side immediately to the right of `x`; zero outside the support.
    pub fn slope_right(&self, x: f64) -> f64 {
        if x < self.left || x >= self.right {
            0.0
        } else if x < self.peak {
            1.0 / (self.peak - self.left)
        } else {
            -1.0 / (self.right - self.peak)
        }
    }

    /// Slope on the side immediately to the left of `x`; zero outside the support.
    pub fn slope_left(&self, x: f64) -> f64 {
        if x <= self.left || x > self.right {
            0.0
        } else if x <= self.peak {
            1.0 / (self.peak - self.left)
        } else {
            -1.0 / (self.right - self.peak)
        }
    }
}

/// Index layout of one resolution level inside the flat function list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelLayout {
    pub interior_count: usize,
    /// Index of the level's first function in the flat list.
    pub offset: usize,
    /// Number of functions the level contributes.
    pub len: usize,
}

/// Multiresolution hat basis: one or more levels on a shared interval,
/// flattened into a single ordered function list.
///
/// Immutable after construction and safe to share across threads.
#[derive(Debug, Clone)]
pub struct HatBasis {
    interval: Interval,
    levels: Vec<LevelLayout>,
    functions: Vec<HatFunction>,
    include_half_hats: bool,
}

impl HatBasis {
    /// Builds a basis with one level per entry of `interior_counts`, coarse
    /// first. With half hats a level of count `n` contributes `n + 2`
    /// functions peaked at the `n + 2` uniform nodes; without them only the
    /// `n` interior nodes carry functions.
    pub fn multiresolution(
        interval: Interval,
        interior_counts: &[usize],
        include_half_hats: bool,
    ) -> Result<Self, BasisError> {
        if interior_counts.is_empty() {
            return Err(BasisError::EmptyLevels);
        }
        let mut functions = Vec::new();
        let mut levels = Vec::with_capacity(interior_counts.len());
        for (level, &count) in interior_counts.iter().enumerate() {
            if count == 0 {
                return Err(BasisError::EmptyLevel { level });
            }
            let offset = functions.len();
            let node = |k: usize| {
                interval.left() + (k as f64) * interval.length() / ((count + 1) as f64)
            };
            if include_half_hats {
                functions.push(HatFunction::left_half(interval.left(), node(1)));
            }
            for k in 1..=count {
                functions.push(HatFunction::interior(node(k - 1), node(k), node(k + 1)));
            }
            if include_half_hats {
                functions.push(HatFunction::right_half(node(count), interval.right()));
            }
            levels.push(LevelLayout {
                interior_count: count,
                offset,
                len: functions.len() - offset,
            });
        }
        Ok(Self {
            interval,
            levels,
            functions,
            include_half_hats,
        })
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn levels(&self) -> &[LevelLayout] {
        &self.levels
    }

    pub fn include_half_hats(&self) -> bool {
        self.include_half_hats
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[HatFunction] {
        &self.functions
    }

    pub fn function(&self, index: usize) -> Result<&HatFunction, BasisError> {
        self.functions.get(index).ok_or(BasisError::IndexOutOfRange {
            index,
            len: self.functions.len(),
        })
    }

    pub fn eval(&self, index: usize, x: f64) -> Result<f64, BasisError> {
        Ok(self.function(index)?.value(x))
    }

    /// Derivative of the `index`-th function at `x`. At a breakpoint the
    /// right-hand slope is returned, except at the right end of the interval
    /// where only the left-hand slope exists.
    pub fn eval_deriv(&self, index: usize, x: f64) -> Result<f64, BasisError> {
        let hat = self.function(index)?;
        if x >= self.interval.right() {
            Ok(hat.slope_left(x))
        } else {
            Ok(hat.slope_right(x))
        }
    }

    /// Evaluates the expansion `sum_i coeffs[i] * phi_i(x)`.
    pub fn expand(&self, coeffs: &[f64], x: f64) -> Result<f64, BasisError> {
        self.check_len(coeffs)?;
        Ok(self.expand_unchecked(coeffs, x))
    }

    pub(crate) fn expand_unchecked(&self, coeffs: &[f64], x: f64) -> f64 {
        self.functions
            .iter()
            .zip(coeffs)
            .map(|(hat, &c)| c * hat.value(x))
            .sum()
    }

    pub(crate) fn check_len(&self, coeffs: &[f64]) -> Result<(), BasisError> {
        if coeffs.len() != self.functions.len() {
            return Err(BasisError::CoefficientLength {
                got: coeffs.len(),
                expected: self.functions.len(),
            });
        }
        Ok(())
    }

    /// All distinct node coordinates across levels, sorted ascending and
    /// including both interval endpoints. These are the breakpoints of every
    /// expansion in the basis.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut points = vec![self.interval.left(), self.interval.right()];
        for hat in &self.functions {
            points.push(hat.left());
            points.push(hat.peak());
            points.push(hat.right());
        }
        points.sort_by(|a, b| a.partial_cmp(b).expect("basis nodes are finite"));
        let tol = 1e-12 * self.interval.length();
        points.dedup_by(|a, b| (*a - *b).abs() <= tol);
        points
    }

    /// Coefficient vector whose expansion interpolates `f` at the nodes of a
    /// single level, with zeros on every other level. Reproduces `f` exactly
    /// when `f` is piecewise linear on the level's node grid (and, at the
    /// boundary, when half hats are present).
    pub fn interpolate_on_level(
        &self,
        level: usize,
        f: impl Fn(f64) -> f64,
    ) -> Result<Vec<f64>, BasisError> {
        let layout = *self.levels.get(level).ok_or(BasisError::LevelOutOfRange {
            level,
            levels: self.levels.len(),
        })?;
        let mut coeffs = vec![0.0; self.functions.len()];
        let span = layout.offset..layout.offset + layout.len;
        for (c, hat) in coeffs[span.clone()].iter_mut().zip(&self.functions[span]) {
            *c = f(hat.peak());
        }
        Ok(coeffs)
    }
}
