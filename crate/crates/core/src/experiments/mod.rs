//! Monte Carlo and exact-oracle verification harness.
//!
//! Experiments tie the simulated estimator distribution back to the
//! theoretical objects: consistency of the threshold estimator, the CLT
//! covariance, deviation-probability slopes against the rate functions,
//! and the jump-filtering behaviour of the threshold.
//!
//! Seed discipline: every operation takes one master seed.  Stage `s` of a
//! grid sweep uses `derive_subseed(master, s)`, and path `i` within a stage
//! uses `derive_subseed(stage_seed, i)`.  Paths are sampled in parallel but
//! collected in index order and reduced sequentially, so every reported
//! number is a pure function of `(inputs, seed)` — independent of worker
//! count and scheduling.
//!
//! Where an exact oracle exists (constant volatility, pure diffusion, no
//! drift, untruncated, coordinate direction) the chi-square tail
//! `P(Q_l >= a) = Q(n/2, n a / (2 sigma^2))` replaces Monte Carlo entirely;
//! such rows are marked by `reps = 0`.

pub mod special;

use crate::estimate::{realized_vector, threshold_vector, EstimateError};
use crate::model::{ModelError, ModelSpec, VolVector};
use crate::rates::{contract_ldp, contract_mdp, RateContext, RateError};
use crate::regimes::{check_mdp, PowerLawRegime, RegimeError};
use crate::simulate::{derive_subseed, GridLayout, SampledPath, SimulateError};
use rayon::prelude::*;
use thiserror::Error;

/// Errors from experiment execution.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("grid of sample sizes must be nonempty")]
    EmptyGrid,
    #[error("grid of sample sizes must be strictly increasing")]
    GridNotIncreasing,
    #[error("{required} replications required for stable estimates, got {got}")]
    TooFewReps { required: usize, got: usize },
    #[error("invalid event: {0}")]
    BadEvent(String),
    #[error("regime fails admissibility: {0}")]
    RegimeRejected(String),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("thread pool construction failed: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Simulate(#[from] SimulateError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Regime(#[from] RegimeError),
}

/// Which functional of the estimator the deviation event refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    /// The estimator vector `V_1^n` itself (speed `n`).
    LdpLevel,
    /// The scaled fluctuation `(sqrt(n)/v_n) (V_1^n - [V]_1)` with
    /// `v_n = n^gamma` (speed `v_n^2`).
    MdpScaled,
}

/// A half-space deviation event `{ <direction, statistic> >= level }`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventSpec {
    statistic: Statistic,
    direction: [f64; 3],
    level: f64,
    gamma: Option<f64>,
}

impl EventSpec {
    pub fn new(
        statistic: Statistic,
        direction: [f64; 3],
        level: f64,
        gamma: Option<f64>,
    ) -> Result<Self, ExperimentError> {
        let norm: f64 = direction.iter().map(|d| d * d).sum();
        if !(norm > 0.0) || direction.iter().any(|d| !d.is_finite()) {
            return Err(ExperimentError::BadEvent(
                "direction must be nonzero and finite".into(),
            ));
        }
        if !level.is_finite() {
            return Err(ExperimentError::BadEvent("level must be finite".into()));
        }
        match (statistic, gamma) {
            (Statistic::LdpLevel, Some(_)) => {
                return Err(ExperimentError::BadEvent(
                    "gamma only applies to the scaled statistic".into(),
                ));
            }
            (Statistic::MdpScaled, None) => {
                return Err(ExperimentError::BadEvent(
                    "the scaled statistic requires gamma".into(),
                ));
            }
            (Statistic::MdpScaled, Some(g)) if !(g > 0.0 && g < 0.5) => {
                return Err(ExperimentError::BadEvent(format!(
                    "gamma must lie strictly between 0 and 1/2, got {g}"
                )));
            }
            _ => {}
        }
        Ok(Self {
            statistic,
            direction,
            level,
            gamma,
        })
    }

    pub fn statistic(&self) -> Statistic {
        self.statistic
    }

    pub fn direction(&self) -> [f64; 3] {
        self.direction
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    /// The deviation speed at grid size `n`: `n` for level events,
    /// `v_n^2 = n^(2 gamma)` for scaled events.
    fn speed(&self, n: usize) -> f64 {
        match self.statistic {
            Statistic::LdpLevel => n as f64,
            Statistic::MdpScaled => (n as f64).powf(2.0 * self.gamma.expect("validated")),
        }
    }
}

/// A deviation-probability estimate with a 95% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    pub n: usize,
    pub reps: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `-log(p_hat) / speed`; for `p_hat = 0` this is computed from the
    /// interval's upper end and flagged as a lower bound only.
    pub neg_log_over_speed: f64,
    pub lower_bound_only: bool,
}

/// 95% Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64, f64) {
    assert!(trials > 0, "wilson interval needs at least one trial");
    const Z: f64 = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    (p, (center - half).max(0.0), (center + half).min(1.0))
}

/// Exact tail of the plain realized variance for one leg under constant
/// volatility, no drift, and no jumps: `n Q / sigma^2` is chi-square with
/// `n` degrees of freedom, so
/// `P(Q >= a) = Q_gamma(n/2, n a / (2 sigma^2))`.
pub fn chi2_tail_exact(n: usize, a: f64, sigma_sq: f64) -> Result<f64, ExperimentError> {
    if n == 0 {
        return Err(ExperimentError::BadParameter(
            "degrees of freedom must be >= 1".into(),
        ));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(ExperimentError::BadParameter(format!(
            "level must be positive and finite, got {a}"
        )));
    }
    if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
        return Err(ExperimentError::BadParameter(format!(
            "variance must be positive and finite, got {sigma_sq}"
        )));
    }
    Ok(special::reg_upper_gamma(
        n as f64 / 2.0,
        n as f64 * a / (2.0 * sigma_sq),
    ))
}

/// Builds a rayon pool with a fixed worker count for scheduling-independent
/// parallel runs (results do not depend on the count; only wall time does).
pub fn build_pool(workers: usize) -> Result<rayon::ThreadPool, ExperimentError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ExperimentError::ThreadPool(e.to_string()))
}

fn estimator_vector(
    path: &SampledPath,
    r: Option<f64>,
) -> Result<VolVector, EstimateError> {
    match r {
        Some(r) => threshold_vector(path, r, path.n),
        None => realized_vector(path, path.n),
    }
}

const MIN_REPS: usize = 1_000;

fn require_reps(reps: usize, required: usize) -> Result<(), ExperimentError> {
    if reps < required {
        return Err(ExperimentError::TooFewReps { required, got: reps });
    }
    Ok(())
}

fn check_grid(ns: &[usize]) -> Result<(), ExperimentError> {
    if ns.is_empty() {
        return Err(ExperimentError::EmptyGrid);
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ExperimentError::GridNotIncreasing);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Consistency
// ---------------------------------------------------------------------------

/// Mean absolute errors at one grid size: threshold and plain estimators
/// against the integrated-diffusion vector, componentwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyRow {
    pub n: usize,
    pub reps: usize,
    pub threshold_err: [f64; 3],
    pub plain_err: [f64; 3],
}

/// Per grid size: mean absolute deviation of both estimators from the
/// integrated-diffusion vector (the limit the threshold estimator filters
/// jumps towards; the plain estimator keeps the jump contribution and its
/// column exposes that bias).
pub fn run_consistency(
    model: &ModelSpec,
    regime: &PowerLawRegime,
    n_list: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<ConsistencyRow>, ExperimentError> {
    check_grid(n_list)?;
    require_reps(reps, 1)?;
    let truth = model.true_vol_vector(1.0)?;
    let mut rows = Vec::with_capacity(n_list.len());
    for (stage, &n) in n_list.iter().enumerate() {
        let layout = GridLayout::new(model, n)?;
        let r = regime.threshold().r_for(n);
        let stage_seed = derive_subseed(seed, stage as u64);
        let pairs: Vec<([f64; 3], [f64; 3])> = (0..reps as u64)
            .into_par_iter()
            .map(|i| -> Result<_, ExperimentError> {
                let (path, _) = layout.sample(derive_subseed(stage_seed, i));
                let thr = threshold_vector(&path, r, n)?.sub(truth);
                let plain = realized_vector(&path, n)?.sub(truth);
                Ok((
                    [thr.q1.abs(), thr.q2.abs(), thr.c.abs()],
                    [plain.q1.abs(), plain.q2.abs(), plain.c.abs()],
                ))
            })
            .collect::<Result<_, _>>()?;
        let mut acc_t = [0.0; 3];
        let mut acc_p = [0.0; 3];
        for (t, p) in &pairs {
            for k in 0..3 {
                acc_t[k] += t[k];
                acc_p[k] += p[k];
            }
        }
        let norm = reps as f64;
        rows.push(ConsistencyRow {
            n,
            reps,
            threshold_err: acc_t.map(|v| v / norm),
            plain_err: acc_p.map(|v| v / norm),
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// CLT covariance
// ---------------------------------------------------------------------------

/// Sample covariance of the scaled estimation error against the
/// fourth-moment reference matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CltReport {
    pub n: usize,
    pub reps: usize,
    pub sample_mean: [f64; 3],
    /// Sample covariance (denominator `reps - 1`) of
    /// `sqrt(n) (V_1^n - [V]_1)` across paths.
    pub sample_cov: [[f64; 3]; 3],
    /// The model's `Sigma_1` matrix, for entrywise comparison.
    pub reference: [[f64; 3]; 3],
    /// `|sample/reference - 1|` on the diagonal.
    pub diag_rel_err: [f64; 3],
    /// `|sample - reference|` on the off-diagonal entries (0,1), (0,2), (1,2).
    pub offdiag_abs_err: [f64; 3],
}

/// Estimates the covariance of `sqrt(n) (V_1^n - [V]_1)` across paths and
/// compares it entrywise with `Sigma_1`.
pub fn run_clt(
    model: &ModelSpec,
    regime: Option<&PowerLawRegime>,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<CltReport, ExperimentError> {
    require_reps(reps, MIN_REPS)?;
    let layout = GridLayout::new(model, n)?;
    let r = regime.map(|rg| rg.threshold().r_for(n));
    let truth = model.true_vol_vector(1.0)?;
    let scale = (n as f64).sqrt();
    let devs: Vec<[f64; 3]> = (0..reps as u64)
        .into_par_iter()
        .map(|i| -> Result<_, ExperimentError> {
            let (path, _) = layout.sample(derive_subseed(seed, i));
            let d = estimator_vector(&path, r)?.sub(truth).scale(scale);
            Ok(d.as_array())
        })
        .collect::<Result<_, _>>()?;

    let nf = reps as f64;
    let mut mean = [0.0; 3];
    for d in &devs {
        for k in 0..3 {
            mean[k] += d[k] / nf;
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for d in &devs {
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += (d[i] - mean[i]) * (d[j] - mean[j]) / (nf - 1.0);
            }
        }
    }
    let reference = RateContext::new(model)?.sigma1_matrix();
    let diag_rel_err = [
        (cov[0][0] / reference[0][0] - 1.0).abs(),
        (cov[1][1] / reference[1][1] - 1.0).abs(),
        (cov[2][2] / reference[2][2] - 1.0).abs(),
    ];
    let offdiag_abs_err = [
        (cov[0][1] - reference[0][1]).abs(),
        (cov[0][2] - reference[0][2]).abs(),
        (cov[1][2] - reference[1][2]).abs(),
    ];
    Ok(CltReport {
        n,
        reps,
        sample_mean: mean,
        sample_cov: cov,
        reference,
        diag_rel_err,
        offdiag_abs_err,
    })
}

// ---------------------------------------------------------------------------
// Tail estimation
// ---------------------------------------------------------------------------

/// Monte Carlo estimate of a half-space deviation probability.
///
/// `regime = None` evaluates the plain (untruncated) estimator; `Some`
/// applies the regime's threshold at `r(1/n)`.
pub fn estimate_tail(
    model: &ModelSpec,
    regime: Option<&PowerLawRegime>,
    event: &EventSpec,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<TailEstimate, ExperimentError> {
    require_reps(reps, MIN_REPS)?;
    let layout = GridLayout::new(model, n)?;
    let r = regime.map(|rg| rg.threshold().r_for(n));
    let truth = model.true_vol_vector(1.0)?;
    let mdp_scale = match event.statistic {
        Statistic::LdpLevel => 1.0,
        Statistic::MdpScaled => {
            let g = event.gamma.expect("validated");
            (n as f64).sqrt() / (n as f64).powf(g)
        }
    };
    let hits: Vec<bool> = (0..reps as u64)
        .into_par_iter()
        .map(|i| -> Result<bool, ExperimentError> {
            let (path, _) = layout.sample(derive_subseed(seed, i));
            let v = estimator_vector(&path, r)?;
            let stat = match event.statistic {
                Statistic::LdpLevel => v,
                Statistic::MdpScaled => v.sub(truth).scale(mdp_scale),
            };
            Ok(stat.dot(event.direction) >= event.level)
        })
        .collect::<Result<_, _>>()?;
    let successes = hits.iter().filter(|h| **h).count() as u64;
    Ok(tail_from_counts(successes, reps, n, event))
}

fn tail_from_counts(successes: u64, reps: usize, n: usize, event: &EventSpec) -> TailEstimate {
    let (p_hat, ci_low, ci_high) = wilson_interval(successes, reps as u64);
    let speed = event.speed(n);
    let (neg_log, lower_bound_only) = if successes > 0 {
        (-p_hat.ln() / speed, false)
    } else {
        // Zero observed hits: the only honest statement is a lower bound
        // derived from the interval's upper end.
        (-ci_high.ln() / speed, true)
    };
    TailEstimate {
        n,
        reps,
        p_hat,
        ci_low,
        ci_high,
        neg_log_over_speed: neg_log,
        lower_bound_only,
    }
}

// ---------------------------------------------------------------------------
// Deviation slopes
// ---------------------------------------------------------------------------

/// One grid size of a slope experiment.  `reps = 0` marks an exact-oracle
/// row (zero-width interval, no sampling).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeRow {
    pub n: usize,
    pub reps: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `-log(p) / speed` at this grid size.
    pub slope: f64,
    /// The rate-function prediction for the event (same at every n).
    pub reference_rate: f64,
    /// `|slope - reference_rate|`.
    pub gap: f64,
    pub lower_bound_only: bool,
}

/// A slope sweep across grid sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeReport {
    pub rows: Vec<SlopeRow>,
}

impl SlopeReport {
    /// Whether the gap to the reference shrinks monotonically along the
    /// grid (ignoring lower-bound-only rows).
    pub fn gaps_shrink(&self) -> bool {
        let gaps: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| !r.lower_bound_only)
            .map(|r| r.gap)
            .collect();
        gaps.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Detects the exact chi-square oracle case: untruncated level statistic,
/// pure diffusion without drift, a positive-multiple-of-coordinate
/// direction, and constant volatility on that leg.  Returns the effective
/// level and variance for [`chi2_tail_exact`].
fn chi2_oracle_case(
    model: &ModelSpec,
    regime: Option<&PowerLawRegime>,
    event: &EventSpec,
) -> Option<(f64, f64)> {
    if regime.is_some() || event.statistic != Statistic::LdpLevel {
        return None;
    }
    if !model.is_pure_diffusion() {
        return None;
    }
    let drift_free = |f: &crate::model::CoefficientFunction| f.values().iter().all(|v| *v == 0.0);
    if !drift_free(model.drift1()) || !drift_free(model.drift2()) {
        return None;
    }
    let [d1, d2, d3] = event.direction;
    if d3 != 0.0 {
        return None;
    }
    let (mult, sigma) = if d1 > 0.0 && d2 == 0.0 {
        (d1, model.sigma1())
    } else if d2 > 0.0 && d1 == 0.0 {
        (d2, model.sigma2())
    } else {
        return None;
    };
    if sigma.values().len() != 1 {
        return None;
    }
    let s = sigma.values()[0];
    Some((event.level / mult, s * s))
}

/// Deviation slopes `-log p / n` against the rate-function prediction for
/// a level event, per grid size.  Uses the exact chi-square tail where the
/// oracle applies (marked `reps = 0`) and Monte Carlo elsewhere.
pub fn ldp_slope(
    model: &ModelSpec,
    regime: Option<&PowerLawRegime>,
    event: &EventSpec,
    n_grid: &[usize],
    reps: usize,
    seed: u64,
) -> Result<SlopeReport, ExperimentError> {
    check_grid(n_grid)?;
    if event.statistic != Statistic::LdpLevel {
        return Err(ExperimentError::BadEvent(
            "ldp_slope expects the level statistic".into(),
        ));
    }
    let ctx = RateContext::new(model)?;
    let reference = contract_ldp(&ctx, event.direction, event.level)?.as_f64();
    let oracle = chi2_oracle_case(model, regime, event);
    let mut rows = Vec::with_capacity(n_grid.len());
    for (stage, &n) in n_grid.iter().enumerate() {
        let row = match oracle {
            Some((a_eff, sigma_sq)) => {
                // Nonpositive effective level: the event is almost sure.
                let p = if a_eff > 0.0 {
                    chi2_tail_exact(n, a_eff, sigma_sq)?
                } else {
                    1.0
                };
                let slope = -p.ln() / n as f64;
                SlopeRow {
                    n,
                    reps: 0,
                    p_hat: p,
                    ci_low: p,
                    ci_high: p,
                    slope,
                    reference_rate: reference,
                    gap: (slope - reference).abs(),
                    lower_bound_only: false,
                }
            }
            None => {
                let t = estimate_tail(
                    model,
                    regime,
                    event,
                    n,
                    reps,
                    derive_subseed(seed, stage as u64),
                )?;
                SlopeRow {
                    n,
                    reps,
                    p_hat: t.p_hat,
                    ci_low: t.ci_low,
                    ci_high: t.ci_high,
                    slope: t.neg_log_over_speed,
                    reference_rate: reference,
                    gap: (t.neg_log_over_speed - reference).abs(),
                    lower_bound_only: t.lower_bound_only,
                }
            }
        };
        rows.push(row);
    }
    Ok(SlopeReport { rows })
}

/// Moderate-deviation slopes `-log p / v_n^2` against the quadratic
/// contraction, per grid size; Monte Carlo only.  Requires an admissible
/// regime whose `gamma` matches the event's.
pub fn mdp_slope(
    model: &ModelSpec,
    regime: &PowerLawRegime,
    event: &EventSpec,
    n_grid: &[usize],
    reps: usize,
    seed: u64,
) -> Result<SlopeReport, ExperimentError> {
    check_grid(n_grid)?;
    let Some(gamma) = event.gamma else {
        return Err(ExperimentError::BadEvent(
            "mdp_slope expects the scaled statistic with gamma".into(),
        ));
    };
    if regime.gamma() != Some(gamma) {
        return Err(ExperimentError::BadEvent(format!(
            "event gamma {gamma} does not match the regime's {:?}",
            regime.gamma()
        )));
    }
    let report = check_mdp(regime, model)?;
    if !report.all_pass() {
        let failing: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name)
            .collect();
        return Err(ExperimentError::RegimeRejected(failing.join(", ")));
    }
    let ctx = RateContext::new(model)?;
    let reference = contract_mdp(&ctx, event.direction, event.level)?;
    let mut rows = Vec::with_capacity(n_grid.len());
    for (stage, &n) in n_grid.iter().enumerate() {
        let t = estimate_tail(
            model,
            Some(regime),
            event,
            n,
            reps,
            derive_subseed(seed, stage as u64),
        )?;
        rows.push(SlopeRow {
            n,
            reps,
            p_hat: t.p_hat,
            ci_low: t.ci_low,
            ci_high: t.ci_high,
            slope: t.neg_log_over_speed,
            reference_rate: reference,
            gap: (t.neg_log_over_speed - reference).abs(),
            lower_bound_only: t.lower_bound_only,
        });
    }
    Ok(SlopeReport { rows })
}

// ---------------------------------------------------------------------------
// Jump filtering
// ---------------------------------------------------------------------------

/// How the threshold treats jump-bearing cells at one grid size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterReport {
    pub n: usize,
    pub reps: usize,
    /// Total jump-bearing (cell, leg) pairs across all paths.
    pub jump_cells: u64,
    /// Fraction of jump-bearing cells whose squared increment exceeds the
    /// threshold (0 when there are no jump cells).
    pub flagged_fraction: f64,
    /// Mean per path of the squared increments of jump-bearing cells that
    /// slip under the threshold.
    pub residual_mass: f64,
    /// Mean signed error of the threshold estimator against the
    /// integrated-diffusion vector.
    pub mean_bias: [f64; 3],
}

/// Measures how effectively the threshold flags jump-bearing cells.
pub fn jump_filter_report(
    model: &ModelSpec,
    regime: &PowerLawRegime,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<FilterReport, ExperimentError> {
    require_reps(reps, 1)?;
    let layout = GridLayout::new(model, n)?;
    let r = regime.threshold().r_for(n);
    let truth = model.true_vol_vector(1.0)?;
    let stats: Vec<(u64, u64, f64, [f64; 3])> = (0..reps as u64)
        .into_par_iter()
        .map(|i| -> Result<_, ExperimentError> {
            let (path, _) = layout.sample(derive_subseed(seed, i));
            let mut cells = 0u64;
            let mut flagged = 0u64;
            let mut residual = 0.0;
            for k in 0..path.n {
                for (count, dx) in [
                    (path.jump_counts1[k], path.dx1[k]),
                    (path.jump_counts2[k], path.dx2[k]),
                ] {
                    if count > 0 {
                        cells += 1;
                        if dx * dx > r {
                            flagged += 1;
                        } else {
                            residual += dx * dx;
                        }
                    }
                }
            }
            let bias = threshold_vector(&path, r, n)?.sub(truth);
            Ok((cells, flagged, residual, bias.as_array()))
        })
        .collect::<Result<_, _>>()?;
    let mut jump_cells = 0u64;
    let mut flagged = 0u64;
    let mut residual = 0.0;
    let mut bias = [0.0; 3];
    for (c, f, res, b) in &stats {
        jump_cells += c;
        flagged += f;
        residual += res;
        for k in 0..3 {
            bias[k] += b[k];
        }
    }
    let nf = reps as f64;
    Ok(FilterReport {
        n,
        reps,
        jump_cells,
        flagged_fraction: if jump_cells > 0 {
            flagged as f64 / jump_cells as f64
        } else {
            0.0
        },
        residual_mass: residual / nf,
        mean_bias: bias.map(|b| b / nf),
    })
}
