//! Rate functions for the large- and moderate-deviation asymptotics of the
//! threshold estimator.
//!
//! The building block is the cumulant-type function of a correlated Gaussian
//! pair `(Z_1, Z_2)` with unit variances and correlation `c`: with
//! `u = 1 - c^2`,
//!
//! ```text
//! P_c(l) = -1/2 * log( ((1 - 2*l1*u)(1 - 2*l2*u) - (l3*u + c)^2) / u )
//! ```
//!
//! on the open domain `D_c` where `1 - 2*l1*u > 0`, `1 - 2*l2*u > 0` and the
//! argument of the logarithm is positive; `+infinity` elsewhere.  Its
//! Legendre transform has the closed form
//!
//! ```text
//! P*_c(x) = 1/2 * log(u / (x1*x2 - x3^2)) - 1 + (x1 + x2 - 2*c*x3) / (2*u)
//! ```
//!
//! on the open cone `x1 > 0, x2 > 0, x1*x2 > x3^2`, and `+infinity`
//! elsewhere; it vanishes exactly at `(1, 1, c)`.
//!
//! For a model with piecewise-constant `sigma_1, sigma_2, rho` the scaled
//! cumulant limit is the exact finite sum
//!
//! ```text
//! Lambda(l) = sum over pieces of len * P_rho(l1*s1^2, l2*s2^2, l3*s1*s2),
//! ```
//!
//! whose conjugate `I_ldp = Lambda*` is the large-deviation rate of the
//! estimator at time 1.  The moderate-deviation rate is the quadratic form
//! `I_mdp(x) = 1/2 <x, Sigma_1^{-1} x>` built from the fourth-moment matrix
//! `Sigma_1`.  Path-level (functional) rates live in the [`functional`]
//! submodule.
//!
//! Everything here is exact piecewise algebra plus a guarded Newton ascent
//! for `I_ldp`; there is no quadrature error anywhere.

mod functional;

pub use functional::{j_ldp_ac, j_mdp, PiecewiseLinearPath};

use crate::model::{ModelError, ModelSpec, VolVector};
use nalgebra::{Cholesky, Matrix3, SymmetricEigen, Vector3};
use std::fmt;
use thiserror::Error;

/// Gradient-norm tolerance for declaring the ascent converged.
const GRAD_TOL: f64 = 1e-8;
/// Secondary tolerance when the line search can no longer improve the
/// objective at floating-point resolution.  Near the domain boundary the
/// Hessian is ill-conditioned and Armijo progress underflows before the
/// primary test fires; the residual value error is second order in the
/// gradient, so a stalled iterate this close is accepted as converged.
const STALL_GRAD_TOL: f64 = 1e-5;
/// Ascent values beyond this cap are reported as `+infinity` (divergence).
const VALUE_CAP: f64 = 1e6;
/// Iteration cap for the ascent; exceeding it is an explicit error.
const MAX_ITER: usize = 200;
/// Condition-number guard for inverting `Sigma_1`.
const COND_LIMIT: f64 = 1e12;

/// Errors from rate-function evaluation.
#[derive(Debug, Error)]
pub enum RateError {
    #[error("correlation parameter must satisfy |c| < 1, got {0}")]
    BadCorrelation(f64),
    #[error("volatility parameter must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("direction vector must be nonzero and finite")]
    BadDirection,
    #[error(
        "matrix is numerically singular: condition estimate {cond:.3e} exceeds limit {limit:.1e}"
    )]
    IllConditioned { cond: f64, limit: f64 },
    #[error(
        "optimizer failed to converge after {iterations} iterations (gradient norm {grad_norm:.3e})"
    )]
    NonConvergence { iterations: usize, grad_norm: f64 },
    #[error("invalid piecewise-linear path: {0}")]
    BadPath(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A nonnegative extended-real value: finite or `+infinity`.
///
/// Rate functions take the value `+infinity` off their effective domains;
/// this tagged representation avoids sentinel numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PosInfinity,
}

impl ExtReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// The finite value, if any.
    pub fn value(&self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(*v),
            ExtReal::PosInfinity => None,
        }
    }

    /// The value as an `f64`, mapping `+infinity` to `f64::INFINITY`.
    pub fn as_f64(&self) -> f64 {
        match self {
            ExtReal::Finite(v) => *v,
            ExtReal::PosInfinity => f64::INFINITY,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInfinity => write!(f, "+inf"),
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.as_f64().partial_cmp(&other.as_f64())
    }
}

/// Conjugate variables `(l1, l2, l3)` dual to the (co-)volatility vector.
///
/// Non-finite components are treated as lying outside every domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaVec {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl LambdaVec {
    pub const ZERO: LambdaVec = LambdaVec { l1: 0.0, l2: 0.0, l3: 0.0 };

    pub fn new(l1: f64, l2: f64, l3: f64) -> Self {
        Self { l1, l2, l3 }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.l1, self.l2, self.l3]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self { l1: a[0], l2: a[1], l3: a[2] }
    }
}

fn check_corr(c: f64) -> Result<(), RateError> {
    if !(c.abs() < 1.0) {
        return Err(RateError::BadCorrelation(c));
    }
    Ok(())
}

fn check_sigma(s: f64) -> Result<(), RateError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(RateError::BadSigma(s));
    }
    Ok(())
}

/// The four derived quantities of `P_c` at `(l1, l2, l3)`:
/// `u = 1 - c^2`, `A = 1 - 2*l1*u`, `B = 1 - 2*l2*u`, `E = l3*u + c`,
/// and the log argument numerator `G = A*B - E^2`.
#[inline]
fn p_parts(c: f64, l1: f64, l2: f64, l3: f64) -> (f64, f64, f64, f64, f64) {
    let u = 1.0 - c * c;
    let a = 1.0 - 2.0 * l1 * u;
    let b = 1.0 - 2.0 * l2 * u;
    let e = l3 * u + c;
    (u, a, b, e, a * b - e * e)
}

/// `P_c` at raw coordinates, `None` off the domain.  Shared fast path for
/// the public wrappers and the grid search.
#[inline]
fn p_c_raw(c: f64, l1: f64, l2: f64, l3: f64) -> Option<f64> {
    let (u, a, b, _, g) = p_parts(c, l1, l2, l3);
    (a > 0.0 && b > 0.0 && g > 0.0).then(|| -0.5 * (g / u).ln())
}

/// Whether `lam` lies in the open domain `D_c` of `P_c`.
pub fn in_domain(c: f64, lam: LambdaVec) -> Result<bool, RateError> {
    check_corr(c)?;
    let (_, a, b, _, g) = p_parts(c, lam.l1, lam.l2, lam.l3);
    Ok(a > 0.0 && b > 0.0 && g > 0.0)
}

/// The Gaussian-pair cumulant function `P_c`, `+infinity` off `D_c`.
pub fn p_c(c: f64, lam: LambdaVec) -> Result<ExtReal, RateError> {
    check_corr(c)?;
    Ok(match p_c_raw(c, lam.l1, lam.l2, lam.l3) {
        Some(v) => ExtReal::Finite(v),
        None => ExtReal::PosInfinity,
    })
}

/// The Legendre transform `P*_c`, finite exactly on the open cone
/// `x1 > 0, x2 > 0, x1*x2 > x3^2`, with unique zero at `(1, 1, c)`.
pub fn p_star(c: f64, x: VolVector) -> Result<ExtReal, RateError> {
    check_corr(c)?;
    let det = x.q1 * x.q2 - x.c * x.c;
    if !(x.q1 > 0.0 && x.q2 > 0.0 && det > 0.0) {
        return Ok(ExtReal::PosInfinity);
    }
    let u = 1.0 - c * c;
    let v = 0.5 * (u / det).ln() - 1.0 + (x.q1 + x.q2 - 2.0 * c * x.c) / (2.0 * u);
    Ok(ExtReal::Finite(v))
}

// ---------------------------------------------------------------------------
// Model-level context
// ---------------------------------------------------------------------------

/// One segment of the merged coefficient grid.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Piece {
    pub t0: f64,
    pub t1: f64,
    pub s1: f64,
    pub s2: f64,
    pub rho: f64,
}

impl Piece {
    pub(crate) fn len(&self) -> f64 {
        self.t1 - self.t0
    }
}

/// Precomputed per-model data shared by all rate-function evaluations:
/// the merged coefficient pieces, the mean vector `(int sigma_1^2,
/// int sigma_2^2, int sigma_1 sigma_2 rho)`, and the fourth-moment matrix
/// `Sigma_1`.
///
/// Immutable after construction; cheap to clone and safe to share across
/// threads.
#[derive(Debug, Clone)]
pub struct RateContext {
    pieces: Vec<Piece>,
    mean: VolVector,
    sigma1: Matrix3<f64>,
}

impl RateContext {
    pub fn new(model: &ModelSpec) -> Result<Self, RateError> {
        let pieces: Vec<Piece> = model
            .merged_pieces()
            .into_iter()
            .map(|(t0, t1, s1, s2, rho)| Piece { t0, t1, s1, s2, rho })
            .collect();
        let mean = model.true_vol_vector(1.0)?;
        let mut sigma1 = Matrix3::zeros();
        for p in &pieces {
            let (v1, v2) = (p.s1 * p.s1, p.s2 * p.s2);
            let len = p.len();
            sigma1[(0, 0)] += len * v1 * v1;
            sigma1[(0, 1)] += len * v1 * v2 * p.rho * p.rho;
            sigma1[(0, 2)] += len * v1 * p.s1 * p.s2 * p.rho;
            sigma1[(1, 1)] += len * v2 * v2;
            sigma1[(1, 2)] += len * v2 * p.s1 * p.s2 * p.rho;
            sigma1[(2, 2)] += len * 0.5 * v1 * v2 * (1.0 + p.rho * p.rho);
        }
        sigma1[(1, 0)] = sigma1[(0, 1)];
        sigma1[(2, 0)] = sigma1[(0, 2)];
        sigma1[(2, 1)] = sigma1[(1, 2)];
        Ok(Self { pieces, mean, sigma1 })
    }

    /// The limit vector of the estimator, `true_vol_vector` at time 1.
    pub fn mean(&self) -> VolVector {
        self.mean
    }

    /// The fourth-moment matrix `Sigma_1` as a plain array.
    pub fn sigma1_matrix(&self) -> [[f64; 3]; 3] {
        let m = &self.sigma1;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub(crate) fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// `Lambda` at `lam`, `None` if any piece's scaled argument leaves its
    /// domain.
    fn lambda_value(&self, lam: &Vector3<f64>) -> Option<f64> {
        let mut total = 0.0;
        for p in &self.pieces {
            let (l1, l2, l3) = scale_lambda(p, lam);
            total += p.len() * p_c_raw(p.rho, l1, l2, l3)?;
        }
        Some(total)
    }

    /// `Lambda`, its gradient, and its Hessian at `lam`; `None` off-domain.
    ///
    /// Per piece with scaling matrix `S = diag(s1^2, s2^2, s1*s2)` the chain
    /// rule gives contributions `len * P`, `len * S grad P`, and
    /// `len * S H_P S`, where at scaled argument `m`:
    ///
    /// ```text
    /// grad P = (u*B/G, u*A/G, u*E/G),
    /// H_P = (2u^2/G^2) * [ B^2  E^2  B*E ;  E^2  A^2  A*E ;  B*E  A*E  (G + 2E^2)/2 ].
    /// ```
    fn lambda_full(&self, lam: &Vector3<f64>) -> Option<(f64, Vector3<f64>, Matrix3<f64>)> {
        let mut val = 0.0;
        let mut grad = Vector3::zeros();
        let mut hess = Matrix3::zeros();
        for p in &self.pieces {
            let (l1, l2, l3) = scale_lambda(p, lam);
            let (u, a, b, e, g) = p_parts(p.rho, l1, l2, l3);
            if !(a > 0.0 && b > 0.0 && g > 0.0) {
                return None;
            }
            let len = p.len();
            val += len * (-0.5 * (g / u).ln());

            let s = Vector3::new(p.s1 * p.s1, p.s2 * p.s2, p.s1 * p.s2);
            let gp = Vector3::new(u * b / g, u * a / g, u * e / g);
            grad += len * s.component_mul(&gp);

            let f = 2.0 * u * u / (g * g);
            let hp = Matrix3::new(
                b * b,
                e * e,
                b * e,
                e * e,
                a * a,
                a * e,
                b * e,
                a * e,
                0.5 * (g + 2.0 * e * e),
            );
            for i in 0..3 {
                for j in 0..3 {
                    hess[(i, j)] += len * f * s[i] * hp[(i, j)] * s[j];
                }
            }
        }
        Some((val, grad, hess))
    }
}

#[inline]
fn scale_lambda(p: &Piece, lam: &Vector3<f64>) -> (f64, f64, f64) {
    (
        lam[0] * p.s1 * p.s1,
        lam[1] * p.s2 * p.s2,
        lam[2] * p.s1 * p.s2,
    )
}

/// The scaled cumulant limit `Lambda(lam)`: an exact finite sum of `P_rho`
/// values over the merged coefficient pieces, `+infinity` as soon as one
/// piece's scaled argument leaves its domain.
pub fn lambda_fn(ctx: &RateContext, lam: LambdaVec) -> ExtReal {
    match ctx.lambda_value(&Vector3::new(lam.l1, lam.l2, lam.l3)) {
        Some(v) => ExtReal::Finite(v),
        None => ExtReal::PosInfinity,
    }
}

// ---------------------------------------------------------------------------
// I_ldp: conjugate of Lambda by guarded Newton ascent
// ---------------------------------------------------------------------------

/// Diagnostics of an `i_ldp` solve.
#[derive(Debug, Clone)]
pub struct LdpSolve {
    /// The rate value `sup_lam <lam, x> - Lambda(lam)`.
    pub value: ExtReal,
    /// The maximizing `lam`, when the supremum is attained at a point.
    pub argmax: Option<[f64; 3]>,
    /// Ascent iterations consumed.
    pub iterations: usize,
    /// Final gradient norm of the objective.
    pub grad_norm: f64,
}

/// The large-deviation rate `I_ldp(x) = sup_lam <lam, x> - Lambda(lam)`.
///
/// The supremum is finite exactly on the open cone `x1 > 0, x2 > 0,
/// x1*x2 > x3^2`: each piece's conjugate is finite exactly there, and the
/// infimal convolution of such functions over positive piece lengths keeps
/// the same effective domain (the cone is closed under addition and
/// positive scaling, viewed as 2x2 positive definite matrices).  Off the
/// cone this returns `+infinity` directly; on it, a damped Newton ascent
/// from `lam = 0` with a domain-respecting backtracking line search.  The
/// log-barrier blow-up of `Lambda` at the domain boundary keeps iterates
/// interior without explicit constraints.
pub fn i_ldp(ctx: &RateContext, x: VolVector) -> Result<ExtReal, RateError> {
    Ok(i_ldp_detailed(ctx, x)?.value)
}

/// [`i_ldp`] with optimizer diagnostics.
pub fn i_ldp_detailed(ctx: &RateContext, x: VolVector) -> Result<LdpSolve, RateError> {
    if !(x.q1 > 0.0 && x.q2 > 0.0 && x.q1 * x.q2 - x.c * x.c > 0.0) {
        return Ok(LdpSolve {
            value: ExtReal::PosInfinity,
            argmax: None,
            iterations: 0,
            grad_norm: f64::INFINITY,
        });
    }
    let xv = Vector3::new(x.q1, x.q2, x.c);
    let mut lam = Vector3::zeros();
    // Objective f(lam) = <lam, x> - Lambda(lam); f(0) = 0.
    let mut fval = 0.0;
    let mut grad_norm = f64::INFINITY;

    for iter in 0..MAX_ITER {
        let (lval, lgrad, lhess) = ctx
            .lambda_full(&lam)
            .expect("iterates stay inside the domain by construction");
        debug_assert!((xv.dot(&lam) - lval - fval).abs() <= 1e-9 * (1.0 + fval.abs()));
        let g = xv - lgrad;
        grad_norm = g.norm();
        if grad_norm < GRAD_TOL {
            return Ok(LdpSolve {
                value: ExtReal::Finite(fval),
                argmax: Some([lam[0], lam[1], lam[2]]),
                iterations: iter,
                grad_norm,
            });
        }

        // Newton direction on the concave objective: solve H d = g with the
        // positive definite Hessian of Lambda; fall back to the gradient if
        // the factorization fails or the direction is not an ascent one.
        let dir = match Cholesky::new(lhess) {
            Some(ch) => {
                let d = ch.solve(&g);
                if d.dot(&g) > 0.0 {
                    d
                } else {
                    g
                }
            }
            None => g,
        };

        // Backtracking Armijo line search that rejects off-domain trials.
        let slope = g.dot(&dir);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..80 {
            let cand = lam + t * dir;
            if let Some(lc) = ctx.lambda_value(&cand) {
                let fc = xv.dot(&cand) - lc;
                if fc >= fval + 1e-4 * t * slope {
                    lam = cand;
                    fval = fc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            if grad_norm < STALL_GRAD_TOL {
                return Ok(LdpSolve {
                    value: ExtReal::Finite(fval),
                    argmax: Some([lam[0], lam[1], lam[2]]),
                    iterations: iter,
                    grad_norm,
                });
            }
            return Err(RateError::NonConvergence {
                iterations: iter,
                grad_norm,
            });
        }
        if fval > VALUE_CAP {
            return Ok(LdpSolve {
                value: ExtReal::PosInfinity,
                argmax: None,
                iterations: iter + 1,
                grad_norm,
            });
        }
    }
    if grad_norm < STALL_GRAD_TOL {
        return Ok(LdpSolve {
            value: ExtReal::Finite(fval),
            argmax: Some([lam[0], lam[1], lam[2]]),
            iterations: MAX_ITER,
            grad_norm,
        });
    }
    Err(RateError::NonConvergence {
        iterations: MAX_ITER,
        grad_norm,
    })
}

/// Closed-form `I_ldp` for constant coefficients:
/// `P*_rho(x1/s1^2, x2/s2^2, x3/(s1*s2))`.
pub fn i_ldp_constant(
    sigma1: f64,
    sigma2: f64,
    rho: f64,
    x: VolVector,
) -> Result<ExtReal, RateError> {
    check_sigma(sigma1)?;
    check_sigma(sigma2)?;
    check_corr(rho)?;
    p_star(
        rho,
        VolVector::new(
            x.q1 / (sigma1 * sigma1),
            x.q2 / (sigma2 * sigma2),
            x.c / (sigma1 * sigma2),
        ),
    )
}

// ---------------------------------------------------------------------------
// Moderate deviations: Sigma_1 quadratic form
// ---------------------------------------------------------------------------

/// The moderate-deviation rate `I_mdp(x) = 1/2 <x, Sigma_1^{-1} x>`.
///
/// `Sigma_1` is applied through a Cholesky solve, never an explicit
/// inverse, and is rejected as numerically singular when its eigenvalue
/// condition estimate exceeds `1e12` (e.g. correlation pinned against
/// `+-1`).
pub fn i_mdp(ctx: &RateContext, x: VolVector) -> Result<f64, RateError> {
    let chol = checked_cholesky(&ctx.sigma1)?;
    let xv = Vector3::new(x.q1, x.q2, x.c);
    let sol = chol.solve(&xv);
    Ok(0.5 * xv.dot(&sol))
}

fn checked_cholesky(m: &Matrix3<f64>) -> Result<Cholesky<f64, nalgebra::U3>, RateError> {
    let eig = SymmetricEigen::new(*m);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for ev in eig.eigenvalues.iter() {
        lo = lo.min(*ev);
        hi = hi.max(ev.abs());
    }
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= COND_LIMIT) {
        return Err(RateError::IllConditioned {
            cond,
            limit: COND_LIMIT,
        });
    }
    Cholesky::new(*m).ok_or(RateError::IllConditioned {
        cond,
        limit: COND_LIMIT,
    })
}

/// The pointwise fourth-moment matrix `Sigma_bar` for constant parameters,
/// with its closed-form inverse and determinant.
#[derive(Debug, Clone, Copy)]
pub struct SigmaBar {
    pub matrix: [[f64; 3]; 3],
    pub inverse: [[f64; 3]; 3],
    pub det: f64,
}

/// Builds `Sigma_bar` at parameters `(sigma1, sigma2, rho)`:
///
/// ```text
///             [ s1^4        s1^2 s2^2 r^2   s1^3 s2 r      ]
/// Sigma_bar = [ s1^2s2^2r^2 s2^4            s1 s2^3 r      ]
///             [ s1^3 s2 r   s1 s2^3 r       s1^2s2^2(1+r^2)/2 ]
/// ```
///
/// with `det = s1^6 s2^6 (1 - r^2)^3 / 2` and inverse entries proportional
/// to `1/(1 - r^2)^2` (verified against numeric inversion in the tests).
pub fn sigma_bar(sigma1: f64, sigma2: f64, rho: f64) -> Result<SigmaBar, RateError> {
    check_sigma(sigma1)?;
    check_sigma(sigma2)?;
    check_corr(rho)?;
    let (v1, v2, r) = (sigma1 * sigma1, sigma2 * sigma2, rho);
    let cross = sigma1 * sigma2;
    let matrix = [
        [v1 * v1, v1 * v2 * r * r, v1 * cross * r],
        [v1 * v2 * r * r, v2 * v2, v2 * cross * r],
        [v1 * cross * r, v2 * cross * r, 0.5 * v1 * v2 * (1.0 + r * r)],
    ];
    let omr = 1.0 - r * r;
    let det = 0.5 * v1 * v1 * v1 * v2 * v2 * v2 * omr * omr * omr;
    let w = 1.0 / (omr * omr);
    let inverse = [
        [
            w / (v1 * v1),
            w * r * r / (v1 * v2),
            -2.0 * w * r / (v1 * cross),
        ],
        [
            w * r * r / (v1 * v2),
            w / (v2 * v2),
            -2.0 * w * r / (v2 * cross),
        ],
        [
            -2.0 * w * r / (v1 * cross),
            -2.0 * w * r / (v2 * cross),
            2.0 * w * (1.0 + r * r) / (v1 * v2),
        ],
    ];
    Ok(SigmaBar {
        matrix,
        inverse,
        det,
    })
}

// ---------------------------------------------------------------------------
// Half-space contraction
// ---------------------------------------------------------------------------

/// `inf { I_ldp(x) : <direction, x> >= level }` via convex duality.
///
/// The infimum over the closed half-space equals
/// `sup_{t >= 0} [ t*level - Lambda(t * direction) ]`, which is zero when
/// the mean already satisfies the constraint and otherwise is found by
/// bisection on the strictly decreasing derivative
/// `level - <direction, grad Lambda(t * direction)>` (the derivative drops
/// to `-infinity` at the domain edge along the ray, so the maximizer is
/// interior whenever the level is attainable; an unattainable level makes
/// the dual value grow past the cap and is reported as `+infinity`).
pub fn contract_ldp(
    ctx: &RateContext,
    direction: [f64; 3],
    level: f64,
) -> Result<ExtReal, RateError> {
    let u = Vector3::new(direction[0], direction[1], direction[2]);
    if !(u.norm() > 0.0) || !u.iter().all(|v| v.is_finite()) || !level.is_finite() {
        return Err(RateError::BadDirection);
    }
    let mean = ctx.mean();
    let proj = u[0] * mean.q1 + u[1] * mean.q2 + u[2] * mean.c;
    if level <= proj {
        return Ok(ExtReal::Finite(0.0));
    }

    // g(t) = t*level - Lambda(t*u) is concave with g(0) = 0, g'(0) > 0.
    // classify(t): does g'(t) stay positive (off-domain counts as negative,
    // consistent with the boundary blow-up)?
    let gprime_pos = |t: f64| -> bool {
        match ctx.lambda_full(&(t * u)) {
            Some((_, grad, _)) => level - u.dot(&grad) > 0.0,
            None => false,
        }
    };
    let gval = |t: f64| -> Option<f64> { ctx.lambda_value(&(t * u)).map(|l| t * level - l) };

    let mut t_lo = 0.0;
    let mut t_hi = 1.0;
    let mut expansions = 0usize;
    while gprime_pos(t_hi) {
        t_lo = t_hi;
        t_hi *= 2.0;
        expansions += 1;
        if expansions > 200 {
            // The derivative never turns: the dual value grows without
            // bound, i.e. the half-space misses the reachable cone.
            let v = gval(t_lo).unwrap_or(f64::INFINITY);
            return Ok(if v > VALUE_CAP {
                ExtReal::PosInfinity
            } else {
                ExtReal::Finite(v)
            });
        }
    }
    for _ in 0..200 {
        if t_hi - t_lo <= 1e-15 * t_hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (t_lo + t_hi);
        if gprime_pos(mid) {
            t_lo = mid;
        } else {
            t_hi = mid;
        }
    }
    let v = gval(t_lo).expect("t_lo kept inside the domain by the bisection invariant");
    Ok(ExtReal::Finite(v))
}

/// `inf { I_mdp(x) : <direction, x> >= level }`, in closed form:
/// `level^2 / (2 <direction, Sigma_1 direction>)` for positive levels and
/// zero otherwise (the origin is the centering of the moderate regime).
pub fn contract_mdp(ctx: &RateContext, direction: [f64; 3], level: f64) -> Result<f64, RateError> {
    let u = Vector3::new(direction[0], direction[1], direction[2]);
    if !(u.norm() > 0.0) || !u.iter().all(|v| v.is_finite()) || !level.is_finite() {
        return Err(RateError::BadDirection);
    }
    // Guard against a degenerate quadratic form before trusting the formula.
    checked_cholesky(&ctx.sigma1)?;
    if level <= 0.0 {
        return Ok(0.0);
    }
    let quad = u.dot(&(ctx.sigma1 * u));
    Ok(level * level / (2.0 * quad))
}

// ---------------------------------------------------------------------------
// Independent numeric conjugate (verification oracle)
// ---------------------------------------------------------------------------

/// Derivative-free numeric evaluation of `sup_lam <lam, x> - P_c(lam)` by
/// an adaptive coordinate grid: a 9-point-per-axis box is recentered on the
/// incumbent, expanded along axes whose argmax sits on a box face, and
/// shrunk geometrically otherwise, until the box radius falls below `1e-9`.
///
/// This deliberately shares no code path with [`p_star`] beyond `P_c`
/// itself, and serves as the independent cross-check of the closed-form
/// conjugate in the verification suite.  Intended for feasible `x`; an
/// infeasible `x` drives the value past the divergence cap and returns
/// `+infinity`.
pub fn grid_conjugate(c: f64, x: VolVector) -> Result<ExtReal, RateError> {
    check_corr(c)?;
    let u = 1.0 - c * c;
    // lam1, lam2 live below 1/(2u); clamp grid points just inside.
    let ub = (1.0 - 1e-9) / (2.0 * u);
    const PTS: usize = 9;
    let xv = [x.q1, x.q2, x.c];

    let mut center = [0.0f64; 3];
    let mut half = [4.0f64; 3];
    let mut best_val = 0.0; // objective at lam = 0 is <0,x> - P_c(0) = 0
    let mut best_pt = [0.0f64; 3];

    for _round in 0..200 {
        if half.iter().all(|h| *h < 1e-9) {
            break;
        }
        // Axis grids, clamped to the domain's upper bounds on l1 and l2.
        let mut axes = [[0.0f64; PTS]; 3];
        for i in 0..3 {
            for (j, slot) in axes[i].iter_mut().enumerate() {
                let frac = j as f64 / (PTS - 1) as f64;
                let mut v = center[i] - half[i] + 2.0 * half[i] * frac;
                if i < 2 && v > ub {
                    v = ub;
                }
                *slot = v;
            }
        }
        let mut round_best: Option<(f64, [usize; 3])> = None;
        for (i1, l1) in axes[0].iter().enumerate() {
            for (i2, l2) in axes[1].iter().enumerate() {
                for (i3, l3) in axes[2].iter().enumerate() {
                    if let Some(p) = p_c_raw(c, *l1, *l2, *l3) {
                        let v = xv[0] * l1 + xv[1] * l2 + xv[2] * l3 - p;
                        if round_best.is_none_or(|(bv, _)| v > bv) {
                            round_best = Some((v, [i1, i2, i3]));
                        }
                    }
                }
            }
        }
        let Some((val, idx)) = round_best else {
            // Entire box infeasible: contract towards the incumbent.
            for h in &mut half {
                *h *= 0.5;
            }
            center = best_pt;
            continue;
        };
        let pt = [axes[0][idx[0]], axes[1][idx[1]], axes[2][idx[2]]];
        if val > best_val {
            best_val = val;
            best_pt = pt;
        }
        if best_val > VALUE_CAP {
            return Ok(ExtReal::PosInfinity);
        }
        center = pt;
        for i in 0..3 {
            let on_face = idx[i] == 0 || idx[i] == PTS - 1;
            // Expanding past the clamped domain bound is pointless: the
            // supremum cannot sit on the barrier side.
            let clamped = i < 2 && idx[i] == PTS - 1 && pt[i] >= ub;
            if on_face && !clamped {
                half[i] *= 2.5;
            } else {
                let spacing = 2.0 * half[i] / (PTS - 1) as f64;
                half[i] = 1.25 * spacing;
            }
        }
    }
    Ok(ExtReal::Finite(best_val))
}
