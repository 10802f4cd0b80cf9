//! Realized and threshold (co-)variation estimators.
//!
//! Given grid increments `D_k X_l` of a path, the plain realized vector sums
//! squares and cross products:
//!
//! ```text
//! ( sum (D_k X_1)^2,  sum (D_k X_2)^2,  sum D_k X_1 D_k X_2 ).
//! ```
//!
//! The threshold estimator truncates cells where the increment is too large
//! to be plausibly diffusive.  With threshold `r`:
//!
//! * `q_l` keeps `(D_k X_l)^2` iff `(D_k X_l)^2 <= r` (per coordinate);
//! * `c` keeps `D_k X_1 D_k X_2` iff `max_l (D_k X_l)^2 <= r` (both
//!   coordinates must look diffusive).
//!
//! Ties at the threshold are kept (non-strict inequality).  The threshold is
//! passed as a realized value; the power-law family `r(h) = scale * h^beta`
//! lives in [`ThresholdFn`], and the regime checks for the exponent live in
//! the `regimes` module.

pub use crate::model::VolVector;
use crate::model::{ModelError, ModelSpec};
use crate::simulate::{JumpTruth, SampledPath};
use thiserror::Error;

/// Errors from estimator evaluation.
#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("threshold must be positive and finite, got {0}")]
    BadThreshold(f64),
    #[error("prefix length {upto} exceeds path length {n}")]
    UptoOutOfRange { upto: usize, n: usize },
    #[error("threshold scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("threshold exponent must lie strictly between 0 and 1, got {0}")]
    BadExponent(f64),
}

/// Power-law threshold family `r(h) = scale * h^beta` in the step `h`.
///
/// The exponent constraint `0 < beta < 1` makes `r(1/n) -> 0` while
/// `n * r(1/n) -> infinity`: the cut vanishes, but slowly enough to retain
/// all diffusive cells asymptotically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdFn {
    scale: f64,
    beta: f64,
}

impl ThresholdFn {
    pub fn new(scale: f64, beta: f64) -> Result<Self, EstimateError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(EstimateError::BadScale(scale));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(EstimateError::BadExponent(beta));
        }
        Ok(Self { scale, beta })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Realized threshold at step `h`.
    pub fn r(&self, h: f64) -> f64 {
        self.scale * h.powf(self.beta)
    }

    /// Realized threshold on an `n`-cell grid, `r(1/n)`.
    pub fn r_for(&self, n: usize) -> f64 {
        self.r(1.0 / n as f64)
    }
}

fn check_upto(path: &SampledPath, upto: usize) -> Result<(), EstimateError> {
    if upto > path.n {
        return Err(EstimateError::UptoOutOfRange { upto, n: path.n });
    }
    Ok(())
}

fn check_r(r: f64) -> Result<(), EstimateError> {
    if !(r > 0.0) || r.is_nan() {
        return Err(EstimateError::BadThreshold(r));
    }
    Ok(())
}

/// Plain realized (co-)variation over the first `upto` cells, no truncation.
pub fn realized_vector(path: &SampledPath, upto: usize) -> Result<VolVector, EstimateError> {
    check_upto(path, upto)?;
    let mut v = VolVector::ZERO;
    for k in 0..upto {
        let (d1, d2) = (path.dx1[k], path.dx2[k]);
        v.q1 += d1 * d1;
        v.q2 += d2 * d2;
        v.c += d1 * d2;
    }
    Ok(v)
}

/// Threshold (co-)variation over the first `upto` cells.
///
/// Accepts `r = +infinity`, in which case the result equals
/// [`realized_vector`].
pub fn threshold_vector(
    path: &SampledPath,
    r: f64,
    upto: usize,
) -> Result<VolVector, EstimateError> {
    check_r(r)?;
    check_upto(path, upto)?;
    let mut v = VolVector::ZERO;
    for k in 0..upto {
        let (d1, d2) = (path.dx1[k], path.dx2[k]);
        let (s1, s2) = (d1 * d1, d2 * d2);
        if s1 <= r {
            v.q1 += s1;
        }
        if s2 <= r {
            v.q2 += s2;
        }
        if s1.max(s2) <= r {
            v.c += d1 * d2;
        }
    }
    Ok(v)
}

/// The full quadratic (co-)variation of the simulated path at time 1: the
/// integrated diffusion part plus the exact event-level jump sums.
///
/// ```text
/// [X_l]_1     = int sigma_l^2           + sum (jump_l)^2
/// [X_1,X_2]_1 = int sigma_1 sigma_2 rho + sum jump_1 * jump_2  (common times)
/// ```
///
/// The continuous part is a model integral, so the model (not the sampled
/// increments) is the first argument; `truth` must come from the same
/// simulation as the path under study.
pub fn full_quadratic_variation(
    model: &ModelSpec,
    truth: &JumpTruth,
) -> Result<VolVector, ModelError> {
    let base = model.true_vol_vector(1.0)?;
    Ok(VolVector::new(
        base.q1 + truth.sum_sq1,
        base.q2 + truth.sum_sq2,
        base.c + truth.sum_cross,
    ))
}

/// The running threshold estimator: entry `k` (0-based) is
/// `threshold_vector(path, r, k + 1)`, computed in one pass.
pub fn running_estimator(path: &SampledPath, r: f64) -> Result<Vec<VolVector>, EstimateError> {
    check_r(r)?;
    let mut out = Vec::with_capacity(path.n);
    let mut v = VolVector::ZERO;
    for k in 0..path.n {
        let (d1, d2) = (path.dx1[k], path.dx2[k]);
        let (s1, s2) = (d1 * d1, d2 * d2);
        if s1 <= r {
            v.q1 += s1;
        }
        if s2 <= r {
            v.q2 += s2;
        }
        if s1.max(s2) <= r {
            v.c += d1 * d2;
        }
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JumpCoupling, JumpSpec, ModelSpec, SizeLaw};
    use crate::simulate::{derive_subseed, GridLayout, SampledPath};

    fn hand_path() -> SampledPath {
        SampledPath::from_increments(vec![0.1, 0.5], vec![0.2, 0.1], 0).unwrap()
    }

    #[test]
    fn realized_vector_matches_hand_sum() {
        let p = hand_path();
        let v = realized_vector(&p, 2).unwrap();
        assert!((v.q1 - 0.26).abs() < 1e-15, "0.01 + 0.25 = 0.26, got {}", v.q1);
        assert!((v.q2 - 0.05).abs() < 1e-15);
        assert!((v.c - 0.07).abs() < 1e-15, "0.02 + 0.05 = 0.07, got {}", v.c);
        assert_eq!(realized_vector(&p, 0).unwrap(), VolVector::ZERO);
    }

    #[test]
    fn threshold_vector_matches_hand_truncation() {
        // r = 0.09: 0.5^2 = 0.25 > r drops out of q1, both cells pass for
        // q2, and only cell 0 passes the max test for c.
        let p = hand_path();
        let v = threshold_vector(&p, 0.09, 2).unwrap();
        assert!((v.q1 - 0.01).abs() < 1e-15);
        assert!((v.q2 - 0.05).abs() < 1e-15);
        assert!((v.c - 0.02).abs() < 1e-15);
    }

    #[test]
    fn infinite_threshold_recovers_realized_vector() {
        let p = hand_path();
        assert_eq!(
            threshold_vector(&p, f64::INFINITY, 2).unwrap(),
            realized_vector(&p, 2).unwrap()
        );
        // Tiny threshold excludes everything.
        assert_eq!(threshold_vector(&p, 1e-9, 2).unwrap(), VolVector::ZERO);
    }

    #[test]
    fn ties_at_the_threshold_are_kept() {
        // dx = 0.5 gives squared increment exactly 0.25; r = 0.25 keeps it.
        let p = SampledPath::from_increments(vec![0.5], vec![0.5], 0).unwrap();
        let v = threshold_vector(&p, 0.25, 1).unwrap();
        assert_eq!(v.q1, 0.25, "non-strict inequality keeps the tied cell");
        assert_eq!(v.c, 0.25);
    }

    #[test]
    fn running_estimator_is_prefix_consistent() {
        let p = hand_path();
        let run = running_estimator(&p, 0.09).unwrap();
        assert_eq!(run.len(), 2);
        assert!((run[0].q1 - 0.01).abs() < 1e-15);
        assert!((run[0].q2 - 0.04).abs() < 1e-15);
        assert!((run[0].c - 0.02).abs() < 1e-15);
        assert_eq!(run[1], threshold_vector(&p, 0.09, 2).unwrap());
        for k in 0..run.len() {
            assert_eq!(run[k], threshold_vector(&p, 0.09, k + 1).unwrap());
        }
    }

    #[test]
    fn running_q_components_are_nondecreasing() {
        let m = ModelSpec::constant(1.0, 0.8, 0.4).unwrap();
        let (p, _) = crate::simulate::simulate_path(&m, 200, 17).unwrap();
        let run = running_estimator(&p, 0.01).unwrap();
        for w in run.windows(2) {
            assert!(w[1].q1 >= w[0].q1);
            assert!(w[1].q2 >= w[0].q2);
        }
    }

    #[test]
    fn full_quadratic_variation_adds_jump_truth() {
        let m = ModelSpec::constant(1.0, 1.0, 0.0).unwrap();
        // Jump-only arithmetic: one leg-1 jump of size 2 adds (4, 0, 0).
        let t = JumpTruth { sum_sq1: 4.0, sum_sq2: 0.0, sum_cross: 0.0 };
        let v = full_quadratic_variation(&m, &t).unwrap();
        assert_eq!(v.as_array(), [5.0, 1.0, 0.0]);
        // A common jump time with sizes (1, 3) adds (1, 9, 3).
        let t = JumpTruth { sum_sq1: 1.0, sum_sq2: 9.0, sum_cross: 3.0 };
        let v = full_quadratic_variation(&m, &t).unwrap();
        assert_eq!(v.as_array(), [2.0, 10.0, 3.0]);
        // No jumps: exactly the integrated diffusion vector.
        let v = full_quadratic_variation(&m, &JumpTruth::default()).unwrap();
        assert_eq!(v, m.true_vol_vector(1.0).unwrap());
    }

    #[test]
    fn threshold_fn_power_law() {
        let f = ThresholdFn::new(2.0, 0.5).unwrap();
        assert!((f.r(0.25) - 1.0).abs() < 1e-15, "2 * 0.25^0.5 = 1");
        assert_eq!(f.r_for(4), f.r(0.25));
        assert!(matches!(
            ThresholdFn::new(0.0, 0.5),
            Err(EstimateError::BadScale(_))
        ));
        assert!(matches!(
            ThresholdFn::new(1.0, 1.0),
            Err(EstimateError::BadExponent(_))
        ));
        assert!(matches!(
            ThresholdFn::new(1.0, 0.0),
            Err(EstimateError::BadExponent(_))
        ));
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        let p = hand_path();
        assert!(matches!(
            realized_vector(&p, 3),
            Err(EstimateError::UptoOutOfRange { upto: 3, n: 2 })
        ));
        assert!(matches!(
            threshold_vector(&p, 0.0, 2),
            Err(EstimateError::BadThreshold(_))
        ));
        assert!(matches!(
            threshold_vector(&p, -1.0, 2),
            Err(EstimateError::BadThreshold(_))
        ));
        assert!(matches!(
            running_estimator(&p, f64::NAN),
            Err(EstimateError::BadThreshold(_))
        ));
    }

    #[test]
    fn polarization_identity_holds_exactly_for_plain_sums() {
        let m = ModelSpec::constant(1.2, 0.9, -0.5).unwrap();
        let (p, _) = crate::simulate::simulate_path(&m, 300, 23).unwrap();
        let v = realized_vector(&p, p.n).unwrap();
        let sum_sq_both: f64 = (0..p.n)
            .map(|k| (p.dx1[k] + p.dx2[k]) * (p.dx1[k] + p.dx2[k]))
            .sum();
        let polarized = 0.5 * (sum_sq_both - v.q1 - v.q2);
        assert!(
            (polarized - v.c).abs() < 1e-12,
            "cross sum {} vs polarization {}",
            v.c,
            polarized
        );
    }

    #[test]
    fn truncated_moment_matches_gaussian_closed_form() {
        // For diffusive increments sqrt(n) * D X ~ N(0,1), the threshold
        // estimator with r = n^(-0.9) has mean E[Z^2; Z^2 <= n^0.1], which
        // at n = 10^4 is 0.52685... — a unit threshold scale truncates away
        // nearly half the diffusive mass at this sample size, so practical
        // scales must sit well above 1 (see the robustness test below).
        let n = 10_000usize;
        let m = ModelSpec::constant(1.0, 1.0, 0.0).unwrap();
        let layout = GridLayout::new(&m, n).unwrap();
        let r = (n as f64).powf(-0.9);
        let reps = 40;
        let mut acc = 0.0;
        for i in 0..reps {
            let (p, _) = layout.sample(derive_subseed(2024, i));
            acc += threshold_vector(&p, r, n).unwrap().q1;
        }
        let mean = acc / reps as f64;
        let expected = 0.526_853_231_456_253_3;
        assert!(
            (mean - expected).abs() < 0.02,
            "truncated mean {mean} vs closed form {expected}"
        );
    }

    #[test]
    fn thresholding_restores_accuracy_under_jumps() {
        // Constant sigma = 1 with intensity-5 standard Gaussian jumps: the
        // plain estimator is off by about E[N] * E[Y^2] = 5, while the
        // threshold estimator (r = 4 * n^(-0.9), wide enough to keep the
        // diffusive mass, far below typical jump sizes) stays within 0.1.
        let n = 10_000usize;
        let m = ModelSpec::constant(1.0, 1.0, 0.0)
            .unwrap()
            .with_jumps(
                JumpSpec::new(5.0, SizeLaw::Gaussian { mean: 0.0, stddev: 1.0 }).unwrap(),
                JumpSpec::new(5.0, SizeLaw::Gaussian { mean: 0.0, stddev: 1.0 }).unwrap(),
                JumpCoupling::Independent,
            )
            .unwrap();
        let layout = GridLayout::new(&m, n).unwrap();
        let r = 4.0 * (n as f64).powf(-0.9);
        let reps = 200;
        let (mut thr_err, mut plain_err) = (0.0, 0.0);
        for i in 0..reps {
            let (p, _) = layout.sample(derive_subseed(77, i));
            thr_err += (threshold_vector(&p, r, n).unwrap().q1 - 1.0).abs();
            plain_err += (realized_vector(&p, n).unwrap().q1 - 1.0).abs();
        }
        let (thr_err, plain_err) = (thr_err / reps as f64, plain_err / reps as f64);
        assert!(thr_err < 0.1, "mean threshold error {thr_err} should be < 0.1");
        assert!(plain_err > 1.0, "mean plain error {plain_err} should exceed 1");
    }
}
