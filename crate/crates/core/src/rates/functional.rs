//! Path-level (functional) rate objects.
//!
//! Inputs are piecewise-linear paths `phi : [0, 1] -> R^3` with
//! `phi(0) = 0`, which are exactly the absolutely continuous paths with
//! piecewise-constant derivative.  Restricting to this class keeps every
//! integral an exact finite sum once the path knots are merged with the
//! coefficient breakpoints:
//!
//! ```text
//! J_mdp(phi)   = int_0^1 1/2 <phi'(t), SigmaBar_t^{-1} phi'(t)> dt,
//! J_ldp_ac(f)  = int_0^1 P*_{rho_t}( f1'/s1^2, f2'/s2^2, f3'/(s1 s2) ) dt.
//! ```
//!
//! Paths with a genuinely singular part carry an extra term in the
//! large-deviation functional that has no finite representation here; such
//! inputs are unrepresentable by construction, and the restriction is
//! intentional.

use super::{p_star, sigma_bar, ExtReal, Piece, RateContext, RateError};
use crate::model::VolVector;

/// A continuous piecewise-linear path `[0, 1] -> R^3` started at the
/// origin, stored as strictly increasing knots `0 = s_0 < ... < s_m = 1`
/// and the values at the knots.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearPath {
    knots: Vec<f64>,
    values: Vec<[f64; 3]>,
}

impl PiecewiseLinearPath {
    pub fn new(knots: Vec<f64>, values: Vec<[f64; 3]>) -> Result<Self, RateError> {
        let bad = |reason: String| Err(RateError::BadPath(reason));
        if knots.len() < 2 {
            return bad("need at least two knots".into());
        }
        if knots.len() != values.len() {
            return bad(format!(
                "{} knots but {} values",
                knots.len(),
                values.len()
            ));
        }
        if knots[0] != 0.0 || *knots.last().unwrap() != 1.0 {
            return bad("knots must start at 0 and end at 1".into());
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return bad("knots must be strictly increasing".into());
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return bad("values must be finite".into());
        }
        if values[0] != [0.0; 3] {
            return bad("path must start at the origin".into());
        }
        Ok(Self { knots, values })
    }

    /// The straight path `t -> t * target`.
    pub fn linear(target: [f64; 3]) -> Self {
        Self {
            knots: vec![0.0, 1.0],
            values: vec![[0.0; 3], target],
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }

    /// Linear interpolation at `t` in `[0, 1]`.
    pub fn eval(&self, t: f64) -> Result<[f64; 3], RateError> {
        if !(0.0..=1.0).contains(&t) {
            return Err(RateError::BadPath(format!(
                "evaluation time {t} outside [0, 1]"
            )));
        }
        let seg = self.segment_containing(t);
        let (a, b) = (self.knots[seg], self.knots[seg + 1]);
        let w = (t - a) / (b - a);
        let (va, vb) = (self.values[seg], self.values[seg + 1]);
        Ok([
            va[0] + w * (vb[0] - va[0]),
            va[1] + w * (vb[1] - va[1]),
            va[2] + w * (vb[2] - va[2]),
        ])
    }

    /// Derivative on segment `seg` (constant there).
    fn slope(&self, seg: usize) -> [f64; 3] {
        let dt = self.knots[seg + 1] - self.knots[seg];
        let (va, vb) = (self.values[seg], self.values[seg + 1]);
        [
            (vb[0] - va[0]) / dt,
            (vb[1] - va[1]) / dt,
            (vb[2] - va[2]) / dt,
        ]
    }

    /// Index of the segment whose closed-open span contains `t` (the last
    /// segment also owns `t = 1`).
    fn segment_containing(&self, t: f64) -> usize {
        let idx = self.knots.partition_point(|k| *k <= t);
        idx.clamp(1, self.knots.len() - 1) - 1
    }
}

/// Merged integration cells: `(length, path slope, coefficient piece)` over
/// the union of path knots and coefficient breakpoints.  Both the slope and
/// the coefficients are constant on each cell, so integrals over cells are
/// products.
fn merged_cells<'c>(
    ctx: &'c RateContext,
    path: &PiecewiseLinearPath,
) -> Vec<(f64, [f64; 3], &'c Piece)> {
    let mut cuts: Vec<f64> = Vec::new();
    for p in ctx.pieces() {
        cuts.push(p.t0);
        cuts.push(p.t1);
    }
    cuts.extend_from_slice(path.knots());
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    cuts.windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let piece = ctx
                .pieces()
                .iter()
                .find(|p| p.t0 <= mid && mid < p.t1)
                .or_else(|| ctx.pieces().last())
                .expect("pieces cover [0, 1]");
            let slope = path.slope(path.segment_containing(mid));
            (w[1] - w[0], slope, piece)
        })
        .collect()
}

/// The moderate-deviation path functional
/// `J_mdp(phi) = int 1/2 <phi', SigmaBar_t^{-1} phi'> dt`, evaluated as an
/// exact sum over merged cells.
pub fn j_mdp(ctx: &RateContext, phi: &PiecewiseLinearPath) -> Result<f64, RateError> {
    let mut total = 0.0;
    for (len, slope, piece) in merged_cells(ctx, phi) {
        let sb = sigma_bar(piece.s1, piece.s2, piece.rho)?;
        let inv = &sb.inverse;
        let mut quad = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                quad += slope[i] * inv[i][j] * slope[j];
            }
        }
        total += len * 0.5 * quad;
    }
    Ok(total)
}

/// The absolutely continuous part of the large-deviation path functional,
/// `int P*_{rho_t}(f1'/s1^2, f2'/s2^2, f3'/(s1 s2)) dt`; `+infinity` as
/// soon as the scaled slope is infeasible on a cell of positive length.
pub fn j_ldp_ac(ctx: &RateContext, f: &PiecewiseLinearPath) -> Result<ExtReal, RateError> {
    let mut total = 0.0;
    for (len, slope, piece) in merged_cells(ctx, f) {
        let scaled = VolVector::new(
            slope[0] / (piece.s1 * piece.s1),
            slope[1] / (piece.s2 * piece.s2),
            slope[2] / (piece.s1 * piece.s2),
        );
        match p_star(piece.rho, scaled)? {
            ExtReal::Finite(v) => total += len * v,
            ExtReal::PosInfinity => return Ok(ExtReal::PosInfinity),
        }
    }
    Ok(ExtReal::Finite(total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefficientFunction, JumpCoupling, JumpSpec, ModelSpec};

    fn unit_ctx() -> RateContext {
        RateContext::new(&ModelSpec::constant(1.0, 1.0, 0.0).unwrap()).unwrap()
    }

    fn two_piece_ctx() -> RateContext {
        let m = ModelSpec::new(
            CoefficientFunction::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0]).unwrap(),
            CoefficientFunction::constant(1.0),
            CoefficientFunction::constant(0.5),
            CoefficientFunction::constant(0.0),
            CoefficientFunction::constant(0.0),
            JumpSpec::none(),
            JumpSpec::none(),
            JumpCoupling::Independent,
        )
        .unwrap();
        RateContext::new(&m).unwrap()
    }

    #[test]
    fn path_validation_rejects_malformed_inputs() {
        let ok = PiecewiseLinearPath::new(
            vec![0.0, 0.5, 1.0],
            vec![[0.0; 3], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]],
        );
        assert!(ok.is_ok());
        let cases = [
            PiecewiseLinearPath::new(vec![0.0], vec![[0.0; 3]]),
            PiecewiseLinearPath::new(vec![0.0, 1.0], vec![[0.0; 3]]),
            PiecewiseLinearPath::new(vec![0.1, 1.0], vec![[0.0; 3], [1.0; 3]]),
            PiecewiseLinearPath::new(vec![0.0, 0.9], vec![[0.0; 3], [1.0; 3]]),
            PiecewiseLinearPath::new(vec![0.0, 0.5, 0.5, 1.0], vec![[0.0; 3]; 4]),
            PiecewiseLinearPath::new(vec![0.0, 1.0], vec![[0.1, 0.0, 0.0], [1.0; 3]]),
            PiecewiseLinearPath::new(vec![0.0, 1.0], vec![[0.0; 3], [f64::NAN; 3]]),
        ];
        for (i, c) in cases.into_iter().enumerate() {
            assert!(
                matches!(c, Err(RateError::BadPath(_))),
                "case {i} should be rejected"
            );
        }
    }

    #[test]
    fn evaluation_interpolates_linearly() {
        let p = PiecewiseLinearPath::new(
            vec![0.0, 0.25, 1.0],
            vec![[0.0; 3], [1.0, -2.0, 0.5], [1.0, 0.0, 2.0]],
        )
        .unwrap();
        assert_eq!(p.eval(0.0).unwrap(), [0.0; 3]);
        assert_eq!(p.eval(0.25).unwrap(), [1.0, -2.0, 0.5]);
        assert_eq!(p.eval(1.0).unwrap(), [1.0, 0.0, 2.0]);
        let mid = p.eval(0.125).unwrap();
        assert!((mid[0] - 0.5).abs() < 1e-15);
        assert!((mid[1] + 1.0).abs() < 1e-15);
        assert!(p.eval(1.5).is_err());
    }

    #[test]
    fn j_mdp_zero_path_costs_nothing() {
        let ctx = unit_ctx();
        let zero = PiecewiseLinearPath::linear([0.0; 3]);
        assert_eq!(j_mdp(&ctx, &zero).unwrap(), 0.0);
    }

    #[test]
    fn j_mdp_hand_values_on_the_unit_model() {
        let ctx = unit_ctx();
        // phi(t) = (0, 0, t): the (3,3) entry of the inverse is 2.
        let v = j_mdp(&ctx, &PiecewiseLinearPath::linear([0.0, 0.0, 1.0])).unwrap();
        assert!((v - 1.0).abs() < 1e-14, "got {v}");
        // phi(t) = t (1, 1, 0): 1/2 (1 + 1) integrated over [0, 1].
        let v = j_mdp(&ctx, &PiecewiseLinearPath::linear([1.0, 1.0, 0.0])).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        // Two segments with slopes e1 then e2: 1/2 each over half lengths.
        let p = PiecewiseLinearPath::new(
            vec![0.0, 0.5, 1.0],
            vec![[0.0; 3], [0.5, 0.0, 0.0], [0.5, 0.5, 0.0]],
        )
        .unwrap();
        let v = j_mdp(&ctx, &p).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
    }

    #[test]
    fn j_mdp_merges_coefficient_breakpoints() {
        // sigma1 jumps 1 -> 2 at 1/2 with rho = 0.5: the (3,3) inverse
        // entry is 40/9 then 10/9, so phi(t) = (0,0,t) costs 25/18.
        let ctx = two_piece_ctx();
        let v = j_mdp(&ctx, &PiecewiseLinearPath::linear([0.0, 0.0, 1.0])).unwrap();
        assert!((v - 25.0 / 18.0).abs() < 1e-13, "got {v}");
    }

    #[test]
    fn knot_refinement_leaves_functionals_unchanged() {
        let ctx = two_piece_ctx();
        let coarse = PiecewiseLinearPath::linear([1.5, 0.9, 0.3]);
        // Same function with redundant interior knots.
        let fine = PiecewiseLinearPath::new(
            vec![0.0, 0.3, 0.5, 0.8, 1.0],
            vec![
                [0.0; 3],
                [0.45, 0.27, 0.09],
                [0.75, 0.45, 0.15],
                [1.2, 0.72, 0.24],
                [1.5, 0.9, 0.3],
            ],
        )
        .unwrap();
        let (a, b) = (j_mdp(&ctx, &coarse).unwrap(), j_mdp(&ctx, &fine).unwrap());
        assert!((a - b).abs() < 1e-12, "j_mdp {a} vs refined {b}");
        let (a, b) = (
            j_ldp_ac(&ctx, &coarse).unwrap().value().unwrap(),
            j_ldp_ac(&ctx, &fine).unwrap().value().unwrap(),
        );
        assert!((a - b).abs() < 1e-12, "j_ldp_ac {a} vs refined {b}");
    }

    #[test]
    fn j_ldp_ac_vanishes_on_the_mean_path() {
        let (s1, s2, rho) = (1.3, 0.8, 0.4);
        let ctx = RateContext::new(&ModelSpec::constant(s1, s2, rho).unwrap()).unwrap();
        let mean_path = PiecewiseLinearPath::linear([s1 * s1, s2 * s2, s1 * s2 * rho]);
        let v = j_ldp_ac(&ctx, &mean_path).unwrap().value().unwrap();
        assert!(v.abs() < 1e-14, "rate along the mean path, got {v}");
    }

    #[test]
    fn j_ldp_ac_constant_slope_reduces_to_p_star() {
        let ctx = unit_ctx();
        let v = j_ldp_ac(&ctx, &PiecewiseLinearPath::linear([2.0, 1.0, 0.0]))
            .unwrap()
            .value()
            .unwrap();
        assert!((v - 0.153_426_409_720_027_3).abs() < 1e-14);
    }

    #[test]
    fn j_ldp_ac_infeasible_slope_is_infinite() {
        let ctx = unit_ctx();
        // Negative first slope on [1/2, 1].
        let p = PiecewiseLinearPath::new(
            vec![0.0, 0.5, 1.0],
            vec![[0.0; 3], [1.0, 0.5, 0.0], [0.5, 1.0, 0.0]],
        )
        .unwrap();
        assert_eq!(j_ldp_ac(&ctx, &p).unwrap(), ExtReal::PosInfinity);
    }

    #[test]
    fn functionals_are_additive_over_concatenation() {
        // Slopes u on [0, 1/2] and w on [1/2, 1] on a constant model: the
        // cost is the average of the two constant-slope costs.
        let ctx = unit_ctx();
        let u = [1.2, 0.9, 0.2];
        let w = [0.8, 1.4, -0.3];
        let p = PiecewiseLinearPath::new(
            vec![0.0, 0.5, 1.0],
            vec![
                [0.0; 3],
                [0.6, 0.45, 0.1],
                [0.6 + 0.4, 0.45 + 0.7, 0.1 - 0.15],
            ],
        )
        .unwrap();
        let ju = j_mdp(&ctx, &PiecewiseLinearPath::linear(u)).unwrap();
        let jw = j_mdp(&ctx, &PiecewiseLinearPath::linear(w)).unwrap();
        let j = j_mdp(&ctx, &p).unwrap();
        assert!((j - 0.5 * (ju + jw)).abs() < 1e-13);

        let lu = j_ldp_ac(&ctx, &PiecewiseLinearPath::linear(u))
            .unwrap()
            .value()
            .unwrap();
        let lw = j_ldp_ac(&ctx, &PiecewiseLinearPath::linear(w))
            .unwrap()
            .value()
            .unwrap();
        let l = j_ldp_ac(&ctx, &p).unwrap().value().unwrap();
        assert!((l - 0.5 * (lu + lw)).abs() < 1e-13);
    }

    #[test]
    fn two_piece_j_ldp_ac_is_the_length_weighted_sum() {
        let ctx = two_piece_ctx();
        let f = PiecewiseLinearPath::linear([1.8, 1.0, 0.5]);
        // First piece scales by (1, 1, 1), second by (4, 1, 2).
        let first = p_star(0.5, VolVector::new(1.8, 1.0, 0.5))
            .unwrap()
            .value()
            .unwrap();
        let second = p_star(0.5, VolVector::new(0.45, 1.0, 0.25))
            .unwrap()
            .value()
            .unwrap();
        let expected = 0.5 * first + 0.5 * second;
        let got = j_ldp_ac(&ctx, &f).unwrap().value().unwrap();
        assert!((got - expected).abs() < 1e-13, "{got} vs {expected}");
    }
}
