//! Model specification for a bivariate jump-diffusion on the unit time interval.
//!
//! The process observed on `[0, 1]` is
//!
//! ```text
//! dX_1(t) = b_1(t) dt + sigma_1(t) dW_1(t) + dJ_1(t)
//! dX_2(t) = b_2(t) dt + sigma_2(t) dW_2(t) + dJ_2(t)
//! ```
//!
//! where `W_2 = rho . W_1 + sqrt(1 - rho^2) . W_3` for independent Brownian
//! motions `W_1, W_3`, and `J_1, J_2` are compound Poisson processes with
//! constant intensities and i.i.d. jump sizes.  All coefficient functions
//! (`sigma_1, sigma_2, rho, b_1, b_2`) are piecewise constant, which keeps
//! every integral used downstream (cell covariances, volatility vectors,
//! fourth-moment matrices) an exact finite sum.
//!
//! The estimation target is the integrated (co-)volatility vector
//!
//! ```text
//! [V](t) = ( int_0^t sigma_1^2,  int_0^t sigma_2^2,  int_0^t sigma_1 sigma_2 rho )
//! ```
//!
//! returned by [`ModelSpec::true_vol_vector`].

use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

/// Errors arising from model construction, evaluation, or file parsing.
#[derive(Debug, Error)]
pub enum ModelError {
    #[error("breakpoints must start at 0 and end at 1, got [{0}, {1}]")]
    BadSupport(f64, f64),
    #[error("breakpoints must be strictly increasing (violated at index {0})")]
    NonIncreasingBreakpoints(usize),
    #[error("need at least two breakpoints, got {0}")]
    TooFewBreakpoints(usize),
    #[error("expected {expected} piece values for the given breakpoints, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("coefficient value at piece {0} is not finite")]
    NonFiniteValue(usize),
    #[error("{name} must be strictly positive on every piece; piece {piece} has value {value}")]
    NonPositiveSigma {
        name: &'static str,
        piece: usize,
        value: f64,
    },
    #[error("rho must lie in (-1, 1) on every piece; piece {piece} has value {value}")]
    RhoOutOfRange { piece: usize, value: f64 },
    #[error("jump intensity must be finite and >= 0, got {0}")]
    BadIntensity(f64),
    #[error("gaussian jump stddev must be finite and >= 0, got {0}")]
    BadStddev(f64),
    #[error("gaussian jump mean must be finite, got {0}")]
    BadMean(f64),
    #[error("fixed-signed jump magnitude must be finite and > 0, got {0}")]
    BadMagnitude(f64),
    #[error("up-probability must lie in [0, 1], got {0}")]
    BadProbability(f64),
    #[error("laplace scale must be finite and > 0, got {0}")]
    BadScale(f64),
    #[error("common-clock coupling requires equal jump intensities, got {0} and {1}")]
    UnequalClockIntensities(f64, f64),
    #[error("time {0} outside [0, 1]")]
    TimeOutOfRange(f64),
    #[error("integration bounds must satisfy 0 <= a <= b <= 1, got [{0}, {1}]")]
    BadBounds(f64, f64),
    #[error("failed to read model file {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid model file: {0}")]
    Parse(#[from] toml::de::Error),
}

/// A right-continuous piecewise-constant function on `[0, 1]`.
///
/// `breakpoints` has length `m + 1` with `breakpoints[0] = 0` and
/// `breakpoints[m] = 1`; `values[i]` is the value on
/// `[breakpoints[i], breakpoints[i+1])`, with the final piece closed at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl CoefficientFunction {
    /// Builds a piecewise-constant coefficient, validating that breakpoints
    /// are strictly increasing from 0 to 1 and all values are finite.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, ModelError> {
        if breakpoints.len() < 2 {
            return Err(ModelError::TooFewBreakpoints(breakpoints.len()));
        }
        let first = breakpoints[0];
        let last = *breakpoints.last().expect("nonempty");
        if first != 0.0 || last != 1.0 {
            return Err(ModelError::BadSupport(first, last));
        }
        for (i, w) in breakpoints.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(ModelError::NonIncreasingBreakpoints(i + 1));
            }
        }
        if values.len() != breakpoints.len() - 1 {
            return Err(ModelError::LengthMismatch {
                expected: breakpoints.len() - 1,
                got: values.len(),
            });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(ModelError::NonFiniteValue(i));
            }
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    /// Constant coefficient on all of `[0, 1]`.
    ///
    /// # Panics
    /// Panics if `value` is not finite.
    pub fn constant(value: f64) -> Self {
        Self::new(vec![0.0, 1.0], vec![value]).expect("constant coefficient requires finite value")
    }

    /// Value at time `t` in `[0, 1]` (right-continuous; `t = 1` uses the last piece).
    pub fn eval(&self, t: f64) -> Result<f64, ModelError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(ModelError::TimeOutOfRange(t));
        }
        Ok(self.eval_unchecked(t))
    }

    /// As [`eval`](Self::eval) but assumes `t` in `[0, 1]`.
    fn eval_unchecked(&self, t: f64) -> f64 {
        // partition_point returns the count of breakpoints <= t, so the piece
        // index is that count minus one, clamped into range for t = 1.
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        let piece = (idx - 1).min(self.values.len() - 1);
        self.values[piece]
    }

    /// The breakpoint grid, including both endpoints 0 and 1.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Per-piece values (one fewer than breakpoints).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest absolute value over all pieces.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Distribution of a single jump size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SizeLaw {
    /// Normal with the given mean and standard deviation (stddev >= 0).
    Gaussian { mean: f64, stddev: f64 },
    /// `+magnitude` with probability `up_prob`, else `-magnitude`.
    FixedSigned { magnitude: f64, up_prob: f64 },
    /// Symmetric Laplace (double exponential) with the given scale.
    Laplace { scale: f64 },
}

impl SizeLaw {
    fn validate(&self) -> Result<(), ModelError> {
        match *self {
            SizeLaw::Gaussian { mean, stddev } => {
                if !mean.is_finite() {
                    return Err(ModelError::BadMean(mean));
                }
                if !stddev.is_finite() || stddev < 0.0 {
                    return Err(ModelError::BadStddev(stddev));
                }
            }
            SizeLaw::FixedSigned { magnitude, up_prob } => {
                if !magnitude.is_finite() || magnitude <= 0.0 {
                    return Err(ModelError::BadMagnitude(magnitude));
                }
                if !(0.0..=1.0).contains(&up_prob) {
                    return Err(ModelError::BadProbability(up_prob));
                }
            }
            SizeLaw::Laplace { scale } => {
                if !scale.is_finite() || scale <= 0.0 {
                    return Err(ModelError::BadScale(scale));
                }
            }
        }
        Ok(())
    }

    /// `E[Y]` of a single jump size.
    pub fn mean(&self) -> f64 {
        match *self {
            SizeLaw::Gaussian { mean, .. } => mean,
            SizeLaw::FixedSigned { magnitude, up_prob } => magnitude * (2.0 * up_prob - 1.0),
            SizeLaw::Laplace { .. } => 0.0,
        }
    }

    /// `E[Y^2]` of a single jump size.
    pub fn mean_square(&self) -> f64 {
        match *self {
            SizeLaw::Gaussian { mean, stddev } => mean * mean + stddev * stddev,
            SizeLaw::FixedSigned { magnitude, .. } => magnitude * magnitude,
            SizeLaw::Laplace { scale } => 2.0 * scale * scale,
        }
    }
}

/// Compound Poisson jump component: arrival intensity plus a size law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpSpec {
    intensity: f64,
    law: SizeLaw,
}

impl JumpSpec {
    /// Validates `intensity >= 0` (finite) and the size-law parameters.
    pub fn new(intensity: f64, law: SizeLaw) -> Result<Self, ModelError> {
        if !intensity.is_finite() || intensity < 0.0 {
            return Err(ModelError::BadIntensity(intensity));
        }
        law.validate()?;
        Ok(Self { intensity, law })
    }

    /// No jumps at all (intensity zero).
    pub fn none() -> Self {
        Self {
            intensity: 0.0,
            law: SizeLaw::Gaussian {
                mean: 0.0,
                stddev: 1.0,
            },
        }
    }

    /// Expected number of jumps on `[0, 1]`.
    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    /// Distribution of a single jump size.
    pub fn law(&self) -> SizeLaw {
        self.law
    }
}

/// How the two jump legs share arrival times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpCoupling {
    /// Two independent Poisson clocks: almost surely no common jump times.
    Independent,
    /// One shared Poisson clock; at each arrival both legs jump, with sizes
    /// drawn independently from their own laws.  Requires equal intensities.
    CommonClock,
}

/// The integrand selected by [`ModelSpec::integrate_product`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrandKind {
    /// `sigma_1(s)^2`
    Var1,
    /// `sigma_2(s)^2`
    Var2,
    /// `sigma_1(s) sigma_2(s) rho(s)`
    Cov,
}

/// Integrated (co-)volatility vector, also used as the argument of the
/// large/moderate deviation rate functions.
///
/// Components: `q1 = int sigma_1^2`, `q2 = int sigma_2^2`,
/// `c = int sigma_1 sigma_2 rho` (or their estimates).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolVector {
    pub q1: f64,
    pub q2: f64,
    pub c: f64,
}

impl VolVector {
    pub const ZERO: VolVector = VolVector {
        q1: 0.0,
        q2: 0.0,
        c: 0.0,
    };

    pub fn new(q1: f64, q2: f64, c: f64) -> Self {
        Self { q1, q2, c }
    }

    pub fn as_array(self) -> [f64; 3] {
        [self.q1, self.q2, self.c]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self {
            q1: a[0],
            q2: a[1],
            c: a[2],
        }
    }

    /// Euclidean inner product with a direction vector.
    pub fn dot(self, direction: [f64; 3]) -> f64 {
        self.q1 * direction[0] + self.q2 * direction[1] + self.c * direction[2]
    }

    /// Componentwise difference `self - other`.
    pub fn sub(self, other: VolVector) -> VolVector {
        VolVector {
            q1: self.q1 - other.q1,
            q2: self.q2 - other.q2,
            c: self.c - other.c,
        }
    }

    /// Componentwise scaling.
    pub fn scale(self, k: f64) -> VolVector {
        VolVector {
            q1: k * self.q1,
            q2: k * self.q2,
            c: k * self.c,
        }
    }

    /// Largest absolute component.
    pub fn max_abs(self) -> f64 {
        self.q1.abs().max(self.q2.abs()).max(self.c.abs())
    }
}

/// Full specification of the bivariate jump-diffusion.
///
/// Invariants enforced at construction: `sigma_1, sigma_2 > 0` on every
/// piece, `rho` in `(-1, 1)` on every piece, jump parameters valid, and
/// equal intensities under [`JumpCoupling::CommonClock`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    sigma1: CoefficientFunction,
    sigma2: CoefficientFunction,
    rho: CoefficientFunction,
    drift1: CoefficientFunction,
    drift2: CoefficientFunction,
    jumps1: JumpSpec,
    jumps2: JumpSpec,
    coupling: JumpCoupling,
}

impl ModelSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sigma1: CoefficientFunction,
        sigma2: CoefficientFunction,
        rho: CoefficientFunction,
        drift1: CoefficientFunction,
        drift2: CoefficientFunction,
        jumps1: JumpSpec,
        jumps2: JumpSpec,
        coupling: JumpCoupling,
    ) -> Result<Self, ModelError> {
        for (name, sigma) in [("sigma1", &sigma1), ("sigma2", &sigma2)] {
            for (i, v) in sigma.values().iter().enumerate() {
                if *v <= 0.0 {
                    return Err(ModelError::NonPositiveSigma {
                        name,
                        piece: i,
                        value: *v,
                    });
                }
            }
        }
        for (i, v) in rho.values().iter().enumerate() {
            if v.abs() >= 1.0 {
                return Err(ModelError::RhoOutOfRange {
                    piece: i,
                    value: *v,
                });
            }
        }
        if coupling == JumpCoupling::CommonClock && jumps1.intensity() != jumps2.intensity() {
            return Err(ModelError::UnequalClockIntensities(
                jumps1.intensity(),
                jumps2.intensity(),
            ));
        }
        Ok(Self {
            sigma1,
            sigma2,
            rho,
            drift1,
            drift2,
            jumps1,
            jumps2,
            coupling,
        })
    }

    /// Constant-coefficient model with no drift and no jumps.
    pub fn constant(sigma1: f64, sigma2: f64, rho: f64) -> Result<Self, ModelError> {
        Self::new(
            CoefficientFunction::constant(sigma1),
            CoefficientFunction::constant(sigma2),
            CoefficientFunction::constant(rho),
            CoefficientFunction::constant(0.0),
            CoefficientFunction::constant(0.0),
            JumpSpec::none(),
            JumpSpec::none(),
            JumpCoupling::Independent,
        )
    }

    /// Replaces both jump components (helper for building test models).
    pub fn with_jumps(
        mut self,
        jumps1: JumpSpec,
        jumps2: JumpSpec,
        coupling: JumpCoupling,
    ) -> Result<Self, ModelError> {
        if coupling == JumpCoupling::CommonClock && jumps1.intensity() != jumps2.intensity() {
            return Err(ModelError::UnequalClockIntensities(
                jumps1.intensity(),
                jumps2.intensity(),
            ));
        }
        self.jumps1 = jumps1;
        self.jumps2 = jumps2;
        self.coupling = coupling;
        Ok(self)
    }

    pub fn sigma1(&self) -> &CoefficientFunction {
        &self.sigma1
    }

    pub fn sigma2(&self) -> &CoefficientFunction {
        &self.sigma2
    }

    pub fn rho(&self) -> &CoefficientFunction {
        &self.rho
    }

    pub fn drift1(&self) -> &CoefficientFunction {
        &self.drift1
    }

    pub fn drift2(&self) -> &CoefficientFunction {
        &self.drift2
    }

    pub fn jumps1(&self) -> &JumpSpec {
        &self.jumps1
    }

    pub fn jumps2(&self) -> &JumpSpec {
        &self.jumps2
    }

    pub fn coupling(&self) -> JumpCoupling {
        self.coupling
    }

    /// True when drift is identically zero and both jump intensities vanish.
    pub fn is_pure_diffusion(&self) -> bool {
        self.jumps1.intensity() == 0.0
            && self.jumps2.intensity() == 0.0
            && self.drift1.values().iter().all(|v| *v == 0.0)
            && self.drift2.values().iter().all(|v| *v == 0.0)
    }

    /// Exact integral of the selected coefficient product over `[a, b]`.
    ///
    /// Because the coefficients are piecewise constant, the integral is a
    /// finite sum of `piece value x piece length` terms over the merged
    /// breakpoint grid: no quadrature error.
    pub fn integrate_product(
        &self,
        kind: IntegrandKind,
        a: f64,
        b: f64,
    ) -> Result<f64, ModelError> {
        match kind {
            IntegrandKind::Var1 => {
                piecewise_integral(&[&self.sigma1], a, b, |v| v[0] * v[0])
            }
            IntegrandKind::Var2 => {
                piecewise_integral(&[&self.sigma2], a, b, |v| v[0] * v[0])
            }
            IntegrandKind::Cov => piecewise_integral(&[&self.sigma1, &self.sigma2, &self.rho], a, b, |v| {
                v[0] * v[1] * v[2]
            }),
        }
    }

    /// Exact integral of the drift `b_leg` over `[a, b]` (`leg` is 1 or 2).
    pub fn integrate_drift(&self, leg: u8, a: f64, b: f64) -> Result<f64, ModelError> {
        let drift = if leg == 1 { &self.drift1 } else { &self.drift2 };
        piecewise_integral(&[drift], a, b, |v| v[0])
    }

    /// Integrated (co-)volatility vector `[V](t)` up to time `t`.
    pub fn true_vol_vector(&self, t: f64) -> Result<VolVector, ModelError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(ModelError::TimeOutOfRange(t));
        }
        Ok(VolVector {
            q1: self.integrate_product(IntegrandKind::Var1, 0.0, t)?,
            q2: self.integrate_product(IntegrandKind::Var2, 0.0, t)?,
            c: self.integrate_product(IntegrandKind::Cov, 0.0, t)?,
        })
    }

    /// Segments of the merged breakpoint grid of `sigma1`, `sigma2`, `rho`,
    /// as `(t0, t1, sigma1, sigma2, rho)` tuples covering `[0, 1]`.
    pub(crate) fn merged_pieces(&self) -> Vec<(f64, f64, f64, f64, f64)> {
        let cuts = merged_cuts(&[&self.sigma1, &self.sigma2, &self.rho], 0.0, 1.0);
        cuts.windows(2)
            .map(|w| {
                let t = w[0];
                (
                    w[0],
                    w[1],
                    self.sigma1.eval_unchecked(t),
                    self.sigma2.eval_unchecked(t),
                    self.rho.eval_unchecked(t),
                )
            })
            .collect()
    }
}

/// Sorted, deduplicated cut points: `a`, `b`, and every breakpoint of the
/// given functions that falls strictly inside `(a, b)`.
fn merged_cuts(fns: &[&CoefficientFunction], a: f64, b: f64) -> Vec<f64> {
    let mut cuts = vec![a, b];
    for f in fns {
        cuts.extend(
            f.breakpoints()
                .iter()
                .copied()
                .filter(|t| *t > a && *t < b),
        );
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts
}

/// Exact integral over `[a, b]` of a function of several piecewise-constant
/// coefficients, evaluated at the left endpoint of each merged segment.
fn piecewise_integral(
    fns: &[&CoefficientFunction],
    a: f64,
    b: f64,
    integrand: impl Fn(&[f64]) -> f64,
) -> Result<f64, ModelError> {
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a > b {
        return Err(ModelError::BadBounds(a, b));
    }
    if a == b {
        return Ok(0.0);
    }
    let cuts = merged_cuts(fns, a, b);
    let mut vals = vec![0.0; fns.len()];
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (s, e) = (w[0], w[1]);
        for (slot, f) in vals.iter_mut().zip(fns) {
            *slot = f.eval_unchecked(s);
        }
        total += (e - s) * integrand(&vals);
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

/// On-disk model layout (TOML).  See `parse_model_str` for the schema.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(default = "default_coupling")]
    jump_coupling: JumpCoupling,
    sigma1: RawCoefficient,
    sigma2: RawCoefficient,
    rho: RawCoefficient,
    drift1: Option<RawCoefficient>,
    drift2: Option<RawCoefficient>,
    jumps1: Option<RawJumps>,
    jumps2: Option<RawJumps>,
}

fn default_coupling() -> JumpCoupling {
    JumpCoupling::Independent
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoefficient {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJumps {
    intensity: f64,
    law: RawLaw,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawLaw {
    Gaussian { mean: f64, stddev: f64 },
    FixedSigned { magnitude: f64, up_prob: f64 },
    Laplace { scale: f64 },
}

impl RawCoefficient {
    fn build(self) -> Result<CoefficientFunction, ModelError> {
        CoefficientFunction::new(self.breakpoints, self.values)
    }
}

impl RawJumps {
    fn build(self) -> Result<JumpSpec, ModelError> {
        let law = match self.law {
            RawLaw::Gaussian { mean, stddev } => SizeLaw::Gaussian { mean, stddev },
            RawLaw::FixedSigned { magnitude, up_prob } => {
                SizeLaw::FixedSigned { magnitude, up_prob }
            }
            RawLaw::Laplace { scale } => SizeLaw::Laplace { scale },
        };
        JumpSpec::new(self.intensity, law)
    }
}

/// Parses a model from its TOML text representation.
///
/// Schema (drift and jump sections are optional and default to zero):
///
/// ```toml
/// jump_coupling = "independent"          # or "common_clock"
///
/// [sigma1]
/// breakpoints = [0.0, 0.5, 1.0]
/// values = [1.0, 2.0]
///
/// [sigma2]
/// breakpoints = [0.0, 1.0]
/// values = [1.0]
///
/// [rho]
/// breakpoints = [0.0, 1.0]
/// values = [0.0]
///
/// [drift1]
/// breakpoints = [0.0, 1.0]
/// values = [0.0]
///
/// [jumps1]
/// intensity = 5.0
/// law = { type = "gaussian", mean = 0.0, stddev = 1.0 }
/// ```
///
/// Size laws: `gaussian { mean, stddev }`, `fixed_signed { magnitude, up_prob }`,
/// `laplace { scale }`.
pub fn parse_model_str(text: &str) -> Result<ModelSpec, ModelError> {
    let raw: RawModel = toml::from_str(text)?;
    let zero = || CoefficientFunction::constant(0.0);
    ModelSpec::new(
        raw.sigma1.build()?,
        raw.sigma2.build()?,
        raw.rho.build()?,
        raw.drift1.map_or_else(|| Ok(zero()), RawCoefficient::build)?,
        raw.drift2.map_or_else(|| Ok(zero()), RawCoefficient::build)?,
        raw.jumps1.map_or_else(|| Ok(JumpSpec::none()), RawJumps::build)?,
        raw.jumps2.map_or_else(|| Ok(JumpSpec::none()), RawJumps::build)?,
        raw.jump_coupling,
    )
}

/// Loads a model file from disk; the error names the offending path.
pub fn load_model_file(path: impl AsRef<Path>) -> Result<ModelSpec, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_model_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_piece_sigma1() -> ModelSpec {
        ModelSpec::new(
            CoefficientFunction::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0]).unwrap(),
            CoefficientFunction::constant(1.0),
            CoefficientFunction::constant(0.0),
            CoefficientFunction::constant(0.0),
            CoefficientFunction::constant(0.0),
            JumpSpec::none(),
            JumpSpec::none(),
            JumpCoupling::Independent,
        )
        .unwrap()
    }

    #[test]
    fn eval_is_right_continuous_with_closed_last_piece() {
        let f = CoefficientFunction::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(f.eval(0.25).unwrap(), 1.0);
        assert_eq!(f.eval(0.75).unwrap(), 2.0);
        assert_eq!(f.eval(0.5).unwrap(), 2.0, "right-continuous at breakpoints");
        assert_eq!(f.eval(0.0).unwrap(), 1.0);
        assert_eq!(f.eval(1.0).unwrap(), 2.0, "t = 1 belongs to the last piece");
        assert!(matches!(f.eval(1.5), Err(ModelError::TimeOutOfRange(_))));
        assert!(matches!(f.eval(-0.1), Err(ModelError::TimeOutOfRange(_))));
    }

    #[test]
    fn constant_sigma_integrates_to_square_times_length() {
        let m = ModelSpec::constant(0.5, 1.0, 0.0).unwrap();
        let v = m.integrate_product(IntegrandKind::Var1, 0.0, 1.0).unwrap();
        assert_eq!(v, 0.25);
    }

    #[test]
    fn piecewise_var_integral_is_exact_sum() {
        let m = two_piece_sigma1();
        let v = m.integrate_product(IntegrandKind::Var1, 0.0, 1.0).unwrap();
        assert_eq!(v, 0.5 * 1.0 + 0.5 * 4.0, "0.5*1 + 0.5*4 = 2.5");
    }

    #[test]
    fn cov_integral_with_constant_coefficients() {
        let m = ModelSpec::constant(1.0, 2.0, 0.5).unwrap();
        let v = m.integrate_product(IntegrandKind::Cov, 0.0, 1.0).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn cov_integral_merges_misaligned_breakpoints() {
        let m = ModelSpec::new(
            CoefficientFunction::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0]).unwrap(),
            CoefficientFunction::constant(1.0),
            CoefficientFunction::new(vec![0.0, 0.25, 1.0], vec![0.8, 0.2]).unwrap(),
            CoefficientFunction::constant(0.0),
            CoefficientFunction::constant(0.0),
            JumpSpec::none(),
            JumpSpec::none(),
            JumpCoupling::Independent,
        )
        .unwrap();
        // Segments: [0,.25) 1*0.8, [.25,.5) 1*0.2, [.5,1) 2*0.2.
        let v = m.integrate_product(IntegrandKind::Cov, 0.0, 1.0).unwrap();
        assert!((v - 0.45).abs() < 1e-15, "got {v}");
    }

    #[test]
    fn integral_is_additive_over_adjacent_intervals() {
        let m = two_piece_sigma1();
        for (a, b, c) in [(0.0, 0.3, 1.0), (0.1, 0.5, 0.9), (0.0, 0.5, 0.5)] {
            let whole = m.integrate_product(IntegrandKind::Var1, a, c).unwrap();
            let left = m.integrate_product(IntegrandKind::Var1, a, b).unwrap();
            let right = m.integrate_product(IntegrandKind::Var1, b, c).unwrap();
            assert!((whole - (left + right)).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_interval_integrates_to_zero() {
        let m = two_piece_sigma1();
        assert_eq!(m.integrate_product(IntegrandKind::Var1, 0.3, 0.3).unwrap(), 0.0);
        assert!(matches!(
            m.integrate_product(IntegrandKind::Var1, 0.6, 0.4),
            Err(ModelError::BadBounds(_, _))
        ));
    }

    #[test]
    fn true_vol_vector_matches_hand_integrals() {
        let m = ModelSpec::constant(1.0, 2.0, 0.5).unwrap();
        let v = m.true_vol_vector(1.0).unwrap();
        assert_eq!(v, VolVector::new(1.0, 4.0, 1.0));
        let half = m.true_vol_vector(0.5).unwrap();
        assert_eq!(half, VolVector::new(0.5, 2.0, 0.5));
    }

    #[test]
    fn cauchy_schwarz_bounds_the_cov_integral() {
        let m = ModelSpec::new(
            CoefficientFunction::new(vec![0.0, 0.3, 1.0], vec![0.7, 1.9]).unwrap(),
            CoefficientFunction::new(vec![0.0, 0.6, 1.0], vec![1.2, 0.4]).unwrap(),
            CoefficientFunction::new(vec![0.0, 0.5, 1.0], vec![0.9, -0.8]).unwrap(),
            CoefficientFunction::constant(0.0),
            CoefficientFunction::constant(0.0),
            JumpSpec::none(),
            JumpSpec::none(),
            JumpCoupling::Independent,
        )
        .unwrap();
        for (a, b) in [(0.0, 1.0), (0.2, 0.7), (0.55, 0.95)] {
            let v1 = m.integrate_product(IntegrandKind::Var1, a, b).unwrap();
            let v2 = m.integrate_product(IntegrandKind::Var2, a, b).unwrap();
            let cv = m.integrate_product(IntegrandKind::Cov, a, b).unwrap();
            assert!(
                cv * cv <= v1 * v2 * (1.0 + 1e-12),
                "Cauchy-Schwarz violated on [{a}, {b}]: {cv}^2 > {v1}*{v2}"
            );
        }
    }

    #[test]
    fn breakpoint_validation_rejects_bad_grids() {
        assert!(matches!(
            CoefficientFunction::new(vec![0.1, 1.0], vec![1.0]),
            Err(ModelError::BadSupport(_, _))
        ));
        assert!(matches!(
            CoefficientFunction::new(vec![0.0, 0.9], vec![1.0]),
            Err(ModelError::BadSupport(_, _))
        ));
        assert!(matches!(
            CoefficientFunction::new(vec![0.0, 0.5, 0.5, 1.0], vec![1.0, 2.0, 3.0]),
            Err(ModelError::NonIncreasingBreakpoints(_))
        ));
        assert!(matches!(
            CoefficientFunction::new(vec![0.0, 1.0], vec![1.0, 2.0]),
            Err(ModelError::LengthMismatch { .. })
        ));
        assert!(matches!(
            CoefficientFunction::new(vec![0.0, 1.0], vec![f64::NAN]),
            Err(ModelError::NonFiniteValue(0))
        ));
    }

    #[test]
    fn model_validation_rejects_bad_coefficients() {
        let ok = CoefficientFunction::constant(1.0);
        let zero = CoefficientFunction::constant(0.0);
        assert!(matches!(
            ModelSpec::constant(0.0, 1.0, 0.0),
            Err(ModelError::NonPositiveSigma { name: "sigma1", .. })
        ));
        assert!(matches!(
            ModelSpec::constant(1.0, -2.0, 0.0),
            Err(ModelError::NonPositiveSigma { name: "sigma2", .. })
        ));
        assert!(matches!(
            ModelSpec::constant(1.0, 1.0, 1.0),
            Err(ModelError::RhoOutOfRange { .. })
        ));
        assert!(matches!(
            ModelSpec::constant(1.0, 1.0, -1.2),
            Err(ModelError::RhoOutOfRange { .. })
        ));
        // CommonClock with unequal intensities must be rejected.
        let j1 = JumpSpec::new(
            2.0,
            SizeLaw::Gaussian {
                mean: 0.0,
                stddev: 1.0,
            },
        )
        .unwrap();
        let j2 = JumpSpec::new(
            3.0,
            SizeLaw::Gaussian {
                mean: 0.0,
                stddev: 1.0,
            },
        )
        .unwrap();
        assert!(matches!(
            ModelSpec::new(
                ok.clone(),
                ok.clone(),
                zero.clone(),
                zero.clone(),
                zero,
                j1,
                j2,
                JumpCoupling::CommonClock
            ),
            Err(ModelError::UnequalClockIntensities(_, _))
        ));
    }

    #[test]
    fn jump_law_validation() {
        assert!(matches!(
            JumpSpec::new(-1.0, SizeLaw::Laplace { scale: 1.0 }),
            Err(ModelError::BadIntensity(_))
        ));
        assert!(matches!(
            JumpSpec::new(1.0, SizeLaw::FixedSigned { magnitude: 0.0, up_prob: 0.5 }),
            Err(ModelError::BadMagnitude(_))
        ));
        assert!(matches!(
            JumpSpec::new(1.0, SizeLaw::FixedSigned { magnitude: 1.0, up_prob: 1.5 }),
            Err(ModelError::BadProbability(_))
        ));
        assert!(matches!(
            JumpSpec::new(1.0, SizeLaw::Laplace { scale: -0.5 }),
            Err(ModelError::BadScale(_))
        ));
        assert!(matches!(
            JumpSpec::new(1.0, SizeLaw::Gaussian { mean: 0.0, stddev: -1.0 }),
            Err(ModelError::BadStddev(_))
        ));
    }

    #[test]
    fn size_law_moments() {
        let g = SizeLaw::Gaussian { mean: 0.5, stddev: 2.0 };
        assert_eq!(g.mean(), 0.5);
        assert_eq!(g.mean_square(), 4.25);
        let f = SizeLaw::FixedSigned { magnitude: 2.0, up_prob: 0.75 };
        assert_eq!(f.mean(), 1.0);
        assert_eq!(f.mean_square(), 4.0);
        let l = SizeLaw::Laplace { scale: 3.0 };
        assert_eq!(l.mean(), 0.0);
        assert_eq!(l.mean_square(), 18.0);
    }

    #[test]
    fn model_file_round_trip() {
        let text = r#"
jump_coupling = "common_clock"

[sigma1]
breakpoints = [0.0, 0.5, 1.0]
values = [1.0, 2.0]

[sigma2]
breakpoints = [0.0, 1.0]
values = [1.5]

[rho]
breakpoints = [0.0, 1.0]
values = [0.3]

[drift1]
breakpoints = [0.0, 1.0]
values = [0.1]

[jumps1]
intensity = 5.0
law = { type = "gaussian", mean = 0.0, stddev = 1.0 }

[jumps2]
intensity = 5.0
law = { type = "fixed_signed", magnitude = 0.5, up_prob = 0.5 }
"#;
        let m = parse_model_str(text).unwrap();
        assert_eq!(m.coupling(), JumpCoupling::CommonClock);
        assert_eq!(m.sigma1().values(), &[1.0, 2.0]);
        assert_eq!(m.sigma2().values(), &[1.5]);
        assert_eq!(m.drift1().values(), &[0.1]);
        assert_eq!(m.drift2().values(), &[0.0], "drift2 defaults to zero");
        assert_eq!(m.jumps1().intensity(), 5.0);
        assert_eq!(
            m.jumps2().law(),
            SizeLaw::FixedSigned { magnitude: 0.5, up_prob: 0.5 }
        );
    }

    #[test]
    fn model_file_laplace_law_and_default_coupling() {
        let text = r#"
[sigma1]
breakpoints = [0.0, 1.0]
values = [1.0]

[sigma2]
breakpoints = [0.0, 1.0]
values = [1.0]

[rho]
breakpoints = [0.0, 1.0]
values = [0.0]

[jumps1]
intensity = 2.0
law = { type = "laplace", scale = 0.7 }
"#;
        let m = parse_model_str(text).unwrap();
        assert_eq!(m.coupling(), JumpCoupling::Independent);
        assert_eq!(m.jumps1().law(), SizeLaw::Laplace { scale: 0.7 });
        assert_eq!(m.jumps2().intensity(), 0.0);
    }

    #[test]
    fn model_file_errors_are_informative() {
        let bad_toml = "[sigma1]\nbreakpoints = \"oops\"";
        assert!(matches!(parse_model_str(bad_toml), Err(ModelError::Parse(_))));

        let invalid = r#"
[sigma1]
breakpoints = [0.0, 1.0]
values = [-1.0]

[sigma2]
breakpoints = [0.0, 1.0]
values = [1.0]

[rho]
breakpoints = [0.0, 1.0]
values = [0.0]
"#;
        assert!(matches!(
            parse_model_str(invalid),
            Err(ModelError::NonPositiveSigma { .. })
        ));

        let missing = load_model_file("/definitely/not/here.toml");
        match missing {
            Err(ModelError::Io { path, .. }) => assert!(path.contains("not/here.toml")),
            other => panic!("expected Io error, got {other:?}"),
        }
    }

    #[test]
    fn merged_pieces_cover_unit_interval() {
        let m = two_piece_sigma1();
        let pieces = m.merged_pieces();
        let total: f64 = pieces.iter().map(|p| p.1 - p.0).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(pieces.len(), 2);
        assert_eq!((pieces[0].0, pieces[0].1), (0.0, 0.5));
        assert_eq!(pieces[0].2, 1.0);
        assert_eq!(pieces[1].2, 2.0);
    }
}
