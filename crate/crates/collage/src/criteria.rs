//! The three competing criteria evaluated on a coefficient vector: collage
//! distance (delegated to the assembled system), entropy of the normalized
//! absolute coefficients, and sparsity, plus the ground-truth recovery error.
//!
//! Smoothed variants replace `|x|` with `sqrt(x^2 + eps^2)` so the optimizer
//! always sees differentiable objectives.

use crate::assembly::{self, AssemblyError, CollageSystem};
use crate::basis::{BasisError, HatBasis};
use nalgebra::DVector;
use thiserror::Error;

/// Errors from criteria evaluation.
#[derive(Debug, Error)]
pub enum CriteriaError {
    #[error("the counting sparsity measure has no gradient; use a smooth surrogate")]
    UnsupportedGradient,
    #[error("sparsity parameter {name} must be positive, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// Sparsity measure applied to a coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SparsityMode {
    /// Number of entries with `|x| > threshold`.
    L0 { threshold: f64 },
    /// Sum of absolute values, the convex surrogate of the count.
    L1,
    /// `sum_i max(exp(-alpha x_i), exp(alpha x_i))`.
    ExpStar { alpha: f64 },
    /// The squared variant, `sum_i max(exp(-alpha x_i), exp(alpha x_i))^2`.
    ExpStarSquared { alpha: f64 },
}

impl SparsityMode {
    pub fn validate(&self) -> Result<(), CriteriaError> {
        match *self {
            SparsityMode::L0 { threshold } if threshold <= 0.0 => {
                Err(CriteriaError::InvalidParameter {
                    name: "threshold",
                    value: threshold,
                })
            }
            SparsityMode::ExpStar { alpha } | SparsityMode::ExpStarSquared { alpha }
                if alpha <= 0.0 =>
            {
                Err(CriteriaError::InvalidParameter {
                    name: "alpha",
                    value: alpha,
                })
            }
            _ => Ok(()),
        }
    }
}

/// The reported values for one recovered coefficient vector. `er` is only
/// available when the true diffusivity is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriteriaValues {
    pub cd: f64,
    pub ent: f64,
    pub sp: usize,
    pub er: Option<f64>,
}

/// Shannon entropy of the normalized absolute coefficients. Zero entries
/// contribute nothing (the 0 ln 0 limit) and the all-zero vector has entropy
/// zero by the same convention.
pub fn entropy(coeffs: &[f64]) -> f64 {
    let total: f64 = coeffs.iter().map(|c| c.abs()).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut ent = 0.0;
    for &c in coeffs {
        let a = c.abs();
        if a > 0.0 {
            let p = a / total;
            ent -= p * p.ln();
        }
    }
    ent
}

/// Smoothed neg-entropy and its exact gradient. `|x|` is replaced by
/// `sqrt(x^2 + eps^2)` throughout, including in the normalizing sum, so the
/// all-zero vector evaluates to `-ln n` rather than the convention value 0.
pub fn neg_entropy_smooth(coeffs: &[f64], eps_smooth: f64) -> (f64, Vec<f64>) {
    let n = coeffs.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    let smooth: Vec<f64> = coeffs
        .iter()
        .map(|&c| (c * c + eps_smooth * eps_smooth).sqrt())
        .collect();
    let total: f64 = smooth.iter().sum();
    let mut value = 0.0;
    for &s in &smooth {
        let p = s / total;
        value += p * p.ln();
    }
    // d/dx_k [sum p ln p] = (x_k / s_k) * (ln p_k - value) / total
    let grad = coeffs
        .iter()
        .zip(&smooth)
        .map(|(&c, &s)| {
            let p = s / total;
            (c / s) * (p.ln() - value) / total
        })
        .collect();
    (value, grad)
}

/// Sparsity of a coefficient vector under the given mode.
pub fn sparsity(coeffs: &[f64], mode: &SparsityMode) -> f64 {
    match *mode {
        SparsityMode::L0 { threshold } => {
            coeffs.iter().filter(|c| c.abs() > threshold).count() as f64
        }
        SparsityMode::L1 => coeffs.iter().map(|c| c.abs()).sum(),
        SparsityMode::ExpStar { alpha } => coeffs
            .iter()
            .map(|&c| (-alpha * c).exp().max((alpha * c).exp()))
            .sum(),
        SparsityMode::ExpStarSquared { alpha } => coeffs
            .iter()
            .map(|&c| {
                let e = (-alpha * c).exp().max((alpha * c).exp());
                e * e
            })
            .sum(),
    }
}

/// Smoothed sparsity value and gradient for the differentiable modes.
/// The counting mode has no gradient and is rejected.
pub fn sparsity_smooth(
    coeffs: &[f64],
    mode: &SparsityMode,
    eps_smooth: f64,
) -> Result<(f64, Vec<f64>), CriteriaError> {
    let smooth = |c: f64| (c * c + eps_smooth * eps_smooth).sqrt();
    match *mode {
        SparsityMode::L0 { .. } => Err(CriteriaError::UnsupportedGradient),
        SparsityMode::L1 => {
            let value = coeffs.iter().map(|&c| smooth(c)).sum();
            let grad = coeffs.iter().map(|&c| c / smooth(c)).collect();
            Ok((value, grad))
        }
        SparsityMode::ExpStar { alpha } => {
            let value = coeffs.iter().map(|&c| (alpha * smooth(c)).exp()).sum();
            let grad = coeffs
                .iter()
                .map(|&c| {
                    let s = smooth(c);
                    alpha * (alpha * s).exp() * c / s
                })
                .collect();
            Ok((value, grad))
        }
        SparsityMode::ExpStarSquared { alpha } => {
            let value = coeffs
                .iter()
                .map(|&c| (2.0 * alpha * smooth(c)).exp())
                .sum();
            let grad = coeffs
                .iter()
                .map(|&c| {
                    let s = smooth(c);
                    2.0 * alpha * (2.0 * alpha * s).exp() * c / s
                })
                .collect();
            Ok((value, grad))
        }
    }
}

/// Gradient of the smoothed sparsity expression.
pub fn sparsity_smooth_grad(
    coeffs: &[f64],
    mode: &SparsityMode,
    eps_smooth: f64,
) -> Result<Vec<f64>, CriteriaError> {
    Ok(sparsity_smooth(coeffs, mode, eps_smooth)?.1)
}

/// Counting threshold used for reporting: `1e-6 * max(1, ||x||_inf)`.
pub fn default_l0_threshold(coeffs: &[f64]) -> f64 {
    let max = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    1e-6 * max.max(1.0)
}

/// The reported sparsity: entries exceeding the default counting threshold.
pub fn support_count(coeffs: &[f64]) -> usize {
    let tau = default_l0_threshold(coeffs);
    coeffs.iter().filter(|c| c.abs() > tau).count()
}

/// L2 distance between the expanded coefficients and a reference diffusivity,
/// integrated on the basis grid with a fixed fourfold refinement so smooth
/// non-polynomial references are handled accurately.
pub fn l2_error(
    basis: &HatBasis,
    coeffs: &[f64],
    k_true: impl Fn(f64) -> f64,
) -> Result<f64, BasisError> {
    basis.check_len(coeffs)?;
    let grid = assembly::refine_breakpoints(&basis.breakpoints(), 4);
    let sq = assembly::integrate(
        |x| {
            let d = basis.expand_unchecked(coeffs, x) - k_true(x);
            d * d
        },
        &grid,
    )
    .expect("basis grid is valid");
    Ok(sq.max(0.0).sqrt())
}

/// Recomputes the reported criteria from a coefficient vector: unsquared
/// collage distance, exact entropy, and the counting sparsity. The recovery
/// error is left unset; fill it in where the true diffusivity is known.
pub fn evaluate(
    system: &CollageSystem,
    coeffs: &DVector<f64>,
) -> Result<CriteriaValues, AssemblyError> {
    Ok(CriteriaValues {
        cd: system.collage_distance(coeffs)?,
        ent: entropy(coeffs.as_slice()),
        sp: support_count(coeffs.as_slice()),
        er: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{HatBasis, Interval};
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_vector(rng: &mut StdRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
    }

    #[test]
    fn entropy_of_uniform_vector_is_ln_n() {
        assert_abs_diff_eq!(entropy(&[1.0, 1.0, 1.0, 1.0]), 4.0_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn entropy_of_certain_outcome_is_zero() {
        assert_eq!(entropy(&[0.0, 0.0, 5.0]), 0.0);
        assert_eq!(entropy(&[0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn entropy_direct_value() {
        // normalized magnitudes (0.25, 0.25, 0.5)
        let expected = -(0.25_f64 * 0.25_f64.ln() * 2.0 + 0.5 * 0.5_f64.ln());
        assert_abs_diff_eq!(entropy(&[1.0, 1.0, 2.0]), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(entropy(&[1.0, 1.0, 2.0]), 1.0397208, epsilon = 1e-7);
    }

    #[test]
    fn entropy_bounds_permutation_and_scale_invariance() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..200 {
            let n: usize = rng.random_range(1..12);
            let v = random_vector(&mut rng, n);
            let e = entropy(&v);
            assert!(e >= 0.0 && e <= (n as f64).ln() + 1e-12);
            let mut reversed = v.clone();
            reversed.reverse();
            assert_abs_diff_eq!(entropy(&reversed), e, epsilon = 1e-12);
            let scaled: Vec<f64> = v.iter().map(|x| -2.5 * x).collect();
            assert_abs_diff_eq!(entropy(&scaled), e, epsilon = 1e-12);
        }
    }

    #[test]
    fn smoothed_neg_entropy_approaches_exact_value() {
        let (value, _) = neg_entropy_smooth(&[1.0, 1.0, 1.0, 1.0], 1e-8);
        assert_abs_diff_eq!(value, -(4.0_f64.ln()), epsilon = 1e-6);
    }

    #[test]
    fn smoothed_neg_entropy_at_zero_is_minus_ln_n() {
        // the smoothing makes all normalized magnitudes uniform at the origin
        let (value, grad) = neg_entropy_smooth(&[0.0; 5], 1e-8);
        assert_abs_diff_eq!(value, -(5.0_f64.ln()), epsilon = 1e-12);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn smoothed_neg_entropy_gradient_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..100 {
            let n = rng.random_range(2..10);
            let v = random_vector(&mut rng, n);
            let eps = 1e-4;
            let (_, grad) = neg_entropy_smooth(&v, eps);
            for i in 0..n {
                let h = 1e-6 * (1.0 + v[i].abs());
                let mut plus = v.clone();
                plus[i] += h;
                let mut minus = v.clone();
                minus[i] -= h;
                let fd = (neg_entropy_smooth(&plus, eps).0 - neg_entropy_smooth(&minus, eps).0)
                    / (2.0 * h);
                let scale = grad[i].abs().max(1e-3);
                assert!(
                    (grad[i] - fd).abs() / scale <= 1e-5,
                    "component {i}: analytic {} vs fd {fd}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn sparsity_counting_and_l1() {
        let mode = SparsityMode::L0 { threshold: 1e-9 };
        assert_eq!(sparsity(&[0.0, 1e-12, 0.5], &mode), 1.0);
        assert_eq!(sparsity(&[1.0, -2.0, 3.0], &SparsityMode::L1), 6.0);
    }

    #[test]
    fn sparsity_exponential_modes() {
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(
            sparsity(&[1.0], &SparsityMode::ExpStar { alpha: 1.0 }),
            e,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            sparsity(&[1.0], &SparsityMode::ExpStarSquared { alpha: 1.0 }),
            e * e,
            epsilon = 1e-12
        );
    }

    #[test]
    fn exp_mode_identity_squared_equals_doubled_alpha() {
        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..200 {
            let n: usize = rng.random_range(1..8);
            let v = random_vector(&mut rng, n);
            let alpha = rng.random_range(0.1..2.0);
            let squared = sparsity(&v, &SparsityMode::ExpStarSquared { alpha });
            let doubled = sparsity(&v, &SparsityMode::ExpStar { alpha: 2.0 * alpha });
            assert_abs_diff_eq!(squared, doubled, epsilon = 1e-12 * squared.max(1.0));
        }
    }

    #[test]
    fn sparsity_is_monotone_in_magnitudes() {
        let mut rng = StdRng::seed_from_u64(31);
        for mode in [
            SparsityMode::L1,
            SparsityMode::ExpStar { alpha: 0.7 },
            SparsityMode::ExpStarSquared { alpha: 0.7 },
        ] {
            for _ in 0..50 {
                let v = random_vector(&mut rng, 6);
                let base = sparsity(&v, &mode);
                let i = rng.random_range(0..v.len());
                let mut bumped = v.clone();
                bumped[i] += bumped[i].signum() * 0.5;
                assert!(sparsity(&bumped, &mode) > base);
            }
        }
    }

    #[test]
    fn smoothed_l1_gradient_approaches_sign_vector() {
        let grad = sparsity_smooth_grad(&[2.0, -3.0], &SparsityMode::L1, 1e-10).unwrap();
        assert_abs_diff_eq!(grad[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(grad[1], -1.0, epsilon = 1e-9);
    }

    #[test]
    fn counting_mode_has_no_gradient() {
        assert!(matches!(
            sparsity_smooth_grad(&[1.0], &SparsityMode::L0 { threshold: 1e-6 }, 1e-8),
            Err(CriteriaError::UnsupportedGradient)
        ));
    }

    #[test]
    fn smoothed_sparsity_gradients_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(41);
        for mode in [
            SparsityMode::L1,
            SparsityMode::ExpStar { alpha: 0.9 },
            SparsityMode::ExpStarSquared { alpha: 0.4 },
        ] {
            for _ in 0..40 {
                let n: usize = rng.random_range(2..8);
                let v = random_vector(&mut rng, n);
                let eps = 1e-4;
                let (_, grad) = sparsity_smooth(&v, &mode, eps).unwrap();
                for i in 0..v.len() {
                    let h = 1e-6 * (1.0 + v[i].abs());
                    let mut plus = v.clone();
                    plus[i] += h;
                    let mut minus = v.clone();
                    minus[i] -= h;
                    let fd = (sparsity_smooth(&plus, &mode, eps).unwrap().0
                        - sparsity_smooth(&minus, &mode, eps).unwrap().0)
                        / (2.0 * h);
                    let scale = grad[i].abs().max(1e-3);
                    assert!(
                        (grad[i] - fd).abs() / scale <= 1e-5,
                        "mode {mode:?} component {i}: analytic {} vs fd {fd}",
                        grad[i]
                    );
                }
            }
        }
    }

    #[test]
    fn mode_parameters_are_validated() {
        assert!(SparsityMode::L0 { threshold: 0.0 }.validate().is_err());
        assert!(SparsityMode::ExpStar { alpha: -1.0 }.validate().is_err());
        assert!(SparsityMode::L1.validate().is_ok());
    }

    #[test]
    fn recovery_error_of_zero_vector_is_reference_norm() {
        let basis = HatBasis::multiresolution(Interval::unit(), &[11, 23], true).unwrap();
        let zero = vec![0.0; basis.len()];
        let er = l2_error(&basis, &zero, |x| 1.0 + 3.0 * x).unwrap();
        assert_abs_diff_eq!(er, 7.0_f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(er, 2.64575131106459, epsilon = 1e-12);
        let unit = l2_error(&basis, &zero, |_| 1.0).unwrap();
        assert_abs_diff_eq!(unit, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn recovery_error_vanishes_for_representable_reference() {
        let basis = HatBasis::multiresolution(Interval::unit(), &[11, 23], true).unwrap();
        let k = |x: f64| 1.0 + 3.0 * x;
        let coeffs = basis.interpolate_on_level(0, k).unwrap();
        assert!(l2_error(&basis, &coeffs, k).unwrap() <= 1e-12);
    }

    #[test]
    fn recovery_error_checks_length() {
        let basis = HatBasis::multiresolution(Interval::unit(), &[3], true).unwrap();
        assert!(l2_error(&basis, &[0.0], |_| 1.0).is_err());
    }

    #[test]
    fn support_count_uses_relative_threshold() {
        assert_eq!(support_count(&[0.0, 1e-8, 2.0]), 1);
        assert_eq!(support_count(&[0.0, 0.0]), 0);
        // with a large max the threshold scales up to 2.0 here
        assert_eq!(support_count(&[2e6, 1.5, 0.0]), 1);
        assert_eq!(support_count(&[2e6, 3.0, 0.0]), 2);
    }
}
