//! Exact closed-form evaluation of the Bell statistics, plus threshold and
//! maximum finders over the squeezing parameter.
//!
//! Everything here is a pure function of the parameter point; the
//! truncated-Fock oracle recomputes the same quantities independently and the
//! two routes are compared in tests.

use rayon::prelude::*;

use crate::model::{BellResult, ClosedFormCoefficients, ExperimentParams, PhaseQuad};
use crate::search::{bisect, golden_section_max};
use crate::{Error, Result};

/// One evaluated cell of a parameter sweep.
#[derive(Copy, Clone, Debug)]
pub struct SweepPoint {
    pub params: ExperimentParams,
    pub psi: f64,
    pub result: BellResult,
}

/// A sweep cell: either an evaluated point or a degenerate parameter
/// combination that was skipped.
#[derive(Clone, Debug)]
pub enum SweepCell {
    Point(SweepPoint),
    Degenerate { r: f64, reflectance: f64, reason: String },
}

/// Closed-form coefficient set at one parameter point and phase sum.
///
/// `a = sin^2(theta) sinh(2r) cos(phi_sum)` carries the whole phase
/// dependence; the remaining coefficients depend only on `(r, R, eta)`.
pub fn coefficients(params: &ExperimentParams, phi_sum: f64) -> Result<ClosedFormCoefficients> {
    let s2 = params.reflectance();
    let c2 = 1.0 - s2;
    let r = params.r();
    let eta = params.eta();
    let sh2 = r.sinh() * r.sinh();

    let a = s2 * (2.0 * r).sinh() * phi_sum.cos();
    let b1 = 1.0 + 2.0 * s2 * sh2;
    let d1 = b1 + eta * c2 * sh2;
    let d2 = d1 - 2.0 * eta * s2 * c2 * sh2;
    let b2 = (d1 * d2).sqrt();
    let b3 = b1 + eta * (2.0 - eta) * c2 * c2 * sh2;
    let c1 = 1.0;
    let c2_ = -2.0 / (1.0 + d1 - b1);
    let c3 = 1.0 / (1.0 + b3 - b1 + d1 - d2);
    let big_b = eta * c2;

    let out = ClosedFormCoefficients { a, b1, b2, b3, c1, c2: c2_, c3, d1, d2, big_b };
    out.check()?;
    Ok(out)
}

/// Joint click probability of the two conditioning photodetectors.
///
/// Strictly positive for valid parameters, monotonically increasing in `r`,
/// and approaching 1 as `r -> inf` (the conditioning stops being selective).
pub fn p_joint_click(params: &ExperimentParams) -> f64 {
    let big_b = params.eta() * (1.0 - params.reflectance());
    let t2 = params.r().tanh().powi(2);
    let u = (1.0 - big_b) * t2;
    big_b * big_b * t2 * (1.0 + u) / ((1.0 - u) * (1.0 - (1.0 - big_b) * u))
}

/// The arctan sum of the binning probability, compensated (Kahan) because the
/// three terms cancel to O(eta^2) as eta -> 0 while the individual terms stay
/// O(1). In double precision the surviving relative error grows like
/// 1e-16 / eta^2, so results below eta ~ 1e-3 lose digits; the supported scan
/// range starts at eta = 0.05 where the loss is negligible.
fn arctan_sum(c: &ClosedFormCoefficients) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (ci, bi) in [(c.c1, c.b1), (c.c2, c.b2), (c.c3, c.b3)] {
        let term = ci * (c.a / (bi * bi - c.a * c.a).sqrt()).atan();
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Probability that both binned homodyne outcomes are `+1`, as a function of
/// the phase sum only. Lies in `[0, 1/2]`; equals `1/4` exactly when the
/// phase-dependent numerator vanishes (`phi_sum = pi/2`).
pub fn p_plus_plus(params: &ExperimentParams, phi_sum: f64) -> Result<f64> {
    let c = coefficients(params, phi_sum)?;
    let p34 = p_joint_click(params);
    Ok(0.25 + arctan_sum(&c) / (2.0 * std::f64::consts::PI * p34))
}

/// Correlation of the two binned outcomes, `E = 4 P++ - 1`.
pub fn correlation(params: &ExperimentParams, phi_sum: f64) -> Result<f64> {
    Ok(4.0 * p_plus_plus(params, phi_sum)? - 1.0)
}

/// Signed Bell combination `E(base) - E(cross1) + E(cross2) + E(alt)`.
fn bell_combination(params: &ExperimentParams, phases: &PhaseQuad) -> Result<f64> {
    Ok(correlation(params, phases.sum_base())? - correlation(params, phases.sum_cross1())?
        + correlation(params, phases.sum_cross2())?
        + correlation(params, phases.sum_alt())?)
}

/// CHSH statistic; local realism bounds it by 2.
pub fn bell_chsh(params: &ExperimentParams, phases: &PhaseQuad) -> Result<f64> {
    Ok(bell_combination(params, phases)?.abs())
}

/// CH statistic; local realism bounds it by 1. The local marginals are
/// phase-independent and equal to 1/2, so the denominator is exactly 1.
pub fn bell_ch(params: &ExperimentParams, phases: &PhaseQuad) -> Result<f64> {
    let num = p_plus_plus(params, phases.sum_base())?
        - p_plus_plus(params, phases.sum_cross1())?
        + p_plus_plus(params, phases.sum_cross2())?
        + p_plus_plus(params, phases.sum_alt())?;
    Ok(num)
}

/// Evaluate the full statistics record at one parameter point.
pub fn bell_result(params: &ExperimentParams, phases: &PhaseQuad) -> Result<BellResult> {
    let p_pp = p_plus_plus(params, phases.sum_base())?;
    let e_corr = 4.0 * p_pp - 1.0;
    let b_chsh = bell_chsh(params, phases)?;
    let b_ch = bell_ch(params, phases)?;
    BellResult::new(p_pp, e_corr, b_chsh, b_ch, p_joint_click(params))
}

/// Default search bracket for [`threshold_r`].
pub const THRESHOLD_BRACKET: (f64, f64) = (1e-4, 2.0);
/// Default search bracket for [`argmax_r`].
pub const ARGMAX_BRACKET: (f64, f64) = (1e-4, 3.0);

/// Smallest squeezing at which the CHSH statistic crosses 2, located by a
/// coarse scan over `bracket` followed by bisection to `1e-6` in `r`.
///
/// Only the lower crossing is searched for; the decay of the violation at
/// large `r` shows up in sweep data instead. Returns [`Error::NoCrossing`]
/// when the statistic stays below 2 on the whole bracket.
pub fn threshold_r(reflectance: f64, eta: f64, psi: f64) -> Result<f64> {
    threshold_r_bracketed(reflectance, eta, psi, THRESHOLD_BRACKET, 64)
}

/// [`threshold_r`] with an explicit bracket and coarse-scan resolution.
pub fn threshold_r_bracketed(
    reflectance: f64,
    eta: f64,
    psi: f64,
    bracket: (f64, f64),
    coarse_n: usize,
) -> Result<f64> {
    let phases = PhaseQuad::standard(psi)?;
    let f = |r: f64| -> Result<f64> {
        let params = ExperimentParams::new(r, reflectance, eta)?;
        Ok(bell_chsh(&params, &phases)? - 2.0)
    };
    let (lo, hi) = bracket;
    let n = coarse_n.max(2);
    let step = (hi - lo) / (n - 1) as f64;
    let mut prev_r = lo;
    let mut prev_f = f(lo)?;
    for i in 1..n {
        let r = lo + step * i as f64;
        let fr = f(r)?;
        if prev_f < 0.0 && fr >= 0.0 {
            let root = bisect(|x| f(x).unwrap_or(f64::NAN), prev_r, r, 1e-6);
            return Ok(root);
        }
        prev_r = r;
        prev_f = fr;
    }
    Err(Error::NoCrossing(format!(
        "CHSH stays below 2 for r in ({lo}, {hi}] at reflectance {reflectance}, eta {eta}"
    )))
}

/// Location and value of the maximal CHSH violation over the squeezing
/// parameter: coarse scan of `(0, 3]` followed by golden-section refinement
/// to `1e-4` in `r`.
pub fn argmax_r(reflectance: f64, eta: f64, psi: f64) -> Result<(f64, f64)> {
    argmax_r_bracketed(reflectance, eta, psi, ARGMAX_BRACKET, 96)
}

/// [`argmax_r`] with an explicit bracket and coarse-scan resolution.
pub fn argmax_r_bracketed(
    reflectance: f64,
    eta: f64,
    psi: f64,
    bracket: (f64, f64),
    coarse_n: usize,
) -> Result<(f64, f64)> {
    let phases = PhaseQuad::standard(psi)?;
    // validate the fixed knobs once up front
    ExperimentParams::new(1.0, reflectance, eta)?;
    let f = |r: f64| -> f64 {
        ExperimentParams::new(r, reflectance, eta)
            .and_then(|p| bell_chsh(&p, &phases))
            .unwrap_or(f64::NEG_INFINITY)
    };
    let (lo, hi) = bracket;
    let n = coarse_n.max(3);
    let step = (hi - lo) / (n - 1) as f64;
    let mut best_i = 0;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..n {
        let v = f(lo + step * i as f64);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let a = lo + step * best_i.saturating_sub(1) as f64;
    let b = (lo + step * (best_i + 1) as f64).min(hi);
    Ok(golden_section_max(f, a, b, 1e-4))
}

/// Evaluate every `(r, reflectance)` grid cell at fixed `(eta, psi)`.
///
/// Output is row-major with `r` as the outer index, deterministic regardless
/// of how the cells are scheduled. Degenerate cells are flagged instead of
/// aborting the sweep.
pub fn sweep(r_grid: &[f64], reflectance_grid: &[f64], eta: f64, psi: f64) -> Vec<SweepCell> {
    let cells: Vec<(f64, f64)> = r_grid
        .iter()
        .flat_map(|&r| reflectance_grid.iter().map(move |&refl| (r, refl)))
        .collect();
    cells
        .into_par_iter()
        .map(|(r, reflectance)| {
            let evaluated = ExperimentParams::new(r, reflectance, eta).and_then(|params| {
                let phases = PhaseQuad::standard(psi)?;
                let result = bell_result(&params, &phases)?;
                Ok(SweepPoint { params, psi, result })
            });
            match evaluated {
                Ok(point) => SweepCell::Point(point),
                Err(e) => SweepCell::Degenerate { r, reflectance, reason: e.to_string() },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn params(r: f64, refl: f64, eta: f64) -> ExperimentParams {
        ExperimentParams::new(r, refl, eta).unwrap()
    }

    // Reference values evaluated directly from the coefficient definitions at
    // (r, R, eta, phi) = (0.6, 0.9891, 1, pi/4); the downstream P++ at this
    // point is cross-checked against the Fock oracle in the integration suite.
    #[test]
    fn coefficients_at_the_reference_point() {
        let c = coefficients(&params(0.6, 0.9891, 1.0), FRAC_PI_4).unwrap();
        assert_abs_diff_eq!(c.a, 1.05571624142316, epsilon = 1e-13);
        assert_abs_diff_eq!(c.b1, 1.80181942164054, epsilon = 1e-13);
        assert_abs_diff_eq!(c.b2, 1.80186227963452, epsilon = 1e-13);
        assert_abs_diff_eq!(c.b3, 1.80186757863452, epsilon = 1e-13);
        assert_abs_diff_eq!(c.c2, -1.99120272133412, epsilon = 1e-12);
        assert_abs_diff_eq!(c.c3, 0.991288567282336, epsilon = 1e-13);
        assert_abs_diff_eq!(c.d1, 1.80623749448246, epsilon = 1e-13);
        assert_abs_diff_eq!(c.d2, 1.79749766278657, epsilon = 1e-13);
        assert_abs_diff_eq!(c.big_b, 0.0109, epsilon = 1e-15);
    }

    #[test]
    fn phase_numerator_vanishes_at_half_pi() {
        let c = coefficients(&params(0.7, 0.8, 0.9), FRAC_PI_2).unwrap();
        assert!(c.a.abs() < 1e-15);
    }

    #[test]
    fn small_eta_limit_of_the_coefficients() {
        let p = params(0.7, 0.9, 1e-9);
        let c = coefficients(&p, 0.3).unwrap();
        assert_abs_diff_eq!(c.d1, c.b1, epsilon = 1e-8);
        assert_abs_diff_eq!(c.d2, c.d1, epsilon = 1e-8);
        assert_abs_diff_eq!(c.b2, c.b1, epsilon = 1e-8);
        assert_abs_diff_eq!(c.b3, c.b1, epsilon = 1e-8);
        assert_abs_diff_eq!(c.c2, -2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(c.c3, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn p34_at_the_reference_point() {
        assert_abs_diff_eq!(
            p_joint_click(&params(0.6, 0.9891, 1.0)),
            8.58459482156933e-5,
            epsilon = 1e-17
        );
    }

    #[test]
    fn p34_approaches_unity_at_large_squeezing() {
        let p = p_joint_click(&params(10.0, 0.9, 1.0));
        assert!((1.0 - p).abs() < 1e-3, "p34 = {p}");
    }

    #[test]
    fn p34_monotone_in_r_and_in_channel_strength() {
        // increasing in r at fixed (R, eta)
        let mut prev = 0.0;
        for i in 1..=60 {
            let r = 0.05 * i as f64;
            let v = p_joint_click(&params(r, 0.9, 0.7));
            assert!(v > prev, "p34 not increasing at r = {r}");
            prev = v;
        }
        // increasing in eta (hence in B) at fixed (r, R); eta = 0.5 halves B
        for &r in &[0.3, 0.8] {
            let mut prev = 0.0;
            for i in 1..=20 {
                let eta = 0.05 * i as f64;
                let v = p_joint_click(&params(r, 0.9, eta));
                assert!(v > prev, "p34 not increasing at eta = {eta}");
                prev = v;
            }
            assert!(p_joint_click(&params(r, 0.9, 0.5)) < p_joint_click(&params(r, 0.9, 1.0)));
        }
    }

    #[test]
    fn p_plus_plus_is_exactly_one_quarter_at_half_pi() {
        for &(r, refl, eta) in &[(0.3, 0.5, 0.9), (0.6, 0.9891, 1.0), (1.5, 0.99, 0.2)] {
            let v = p_plus_plus(&params(r, refl, eta), FRAC_PI_2).unwrap();
            assert_abs_diff_eq!(v, 0.25, epsilon = 1e-14);
        }
    }

    #[test]
    fn p_plus_plus_reference_point_exceeds_three_eighths() {
        let v = p_plus_plus(&params(0.6, 0.9891, 1.0), FRAC_PI_4).unwrap();
        assert!(v > 0.375, "P++ = {v}");
        // frozen from direct evaluation of the closed form
        assert_abs_diff_eq!(v, 0.3776054643203797, epsilon = 1e-12);
    }

    #[test]
    fn correlation_vanishes_at_half_pi_and_is_odd_about_it() {
        let p = params(0.8, 0.9, 0.6);
        assert!(correlation(&p, FRAC_PI_2).unwrap().abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let p = params(
                rng.gen_range(0.05..1.5),
                rng.gen_range(0.1..0.999),
                rng.gen_range(0.05..1.0),
            );
            let phi = rng.gen_range(-PI..PI);
            let e1 = correlation(&p, phi).unwrap();
            let e2 = correlation(&p, PI - phi).unwrap();
            assert!((e1 + e2).abs() < 1e-12, "oddness violated: {e1} vs {e2}");
        }
    }

    #[test]
    fn correlation_exceeds_half_near_the_optimum() {
        let e = correlation(&params(0.65, 0.99, 1.0), FRAC_PI_4).unwrap();
        assert!(e > 0.5, "E = {e}");
    }

    #[test]
    fn chsh_equals_four_times_the_base_correlation_at_standard_phases() {
        let phases = PhaseQuad::standard(FRAC_PI_4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p = params(
                rng.gen_range(0.05..1.8),
                rng.gen_range(0.1..0.999),
                rng.gen_range(0.05..1.0),
            );
            let b = bell_chsh(&p, &phases).unwrap();
            let e4 = 4.0 * correlation(&p, FRAC_PI_4).unwrap();
            assert!((b - e4).abs() < 1e-12, "b = {b}, 4E = {e4}");
        }
    }

    #[test]
    fn chsh_violation_at_the_figure_reference() {
        let phases = PhaseQuad::standard(FRAC_PI_4).unwrap();
        assert!(bell_chsh(&params(0.6, 0.9891, 1.0), &phases).unwrap() > 2.0);
        assert!(bell_chsh(&params(0.6, 0.9891, 0.3), &phases).unwrap() > 2.0);
    }

    #[test]
    fn chsh_vanishes_when_every_phase_sum_is_half_pi() {
        // arm settings (pi/4, pi/4, pi/4, pi/4): all four sums equal pi/2
        let phases = PhaseQuad::new(FRAC_PI_4, FRAC_PI_4, FRAC_PI_4, FRAC_PI_4).unwrap();
        let b = bell_chsh(&params(0.7, 0.9, 0.8), &phases).unwrap();
        assert!(b.abs() < 1e-13, "b = {b}");
    }

    #[test]
    fn ch_ties_to_chsh_and_violates_with_it() {
        let phases = PhaseQuad::standard(FRAC_PI_4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let p = params(
                rng.gen_range(0.05..1.8),
                rng.gen_range(0.1..0.999),
                rng.gen_range(0.05..1.0),
            );
            let b_chsh = bell_chsh(&p, &phases).unwrap();
            let b_ch = bell_ch(&p, &phases).unwrap();
            assert!((4.0 * b_ch - b_chsh - 2.0).abs() < 1e-12);
        }
        let b_ch = bell_ch(&params(0.65, 0.99, 1.0), &phases).unwrap();
        assert!(b_ch > 1.0, "B_CH = {b_ch}");
    }

    #[test]
    fn threshold_matches_the_reported_window() {
        let r_star = threshold_r(0.99, 1.0, FRAC_PI_4).unwrap();
        assert!((0.46..=0.50).contains(&r_star), "r* = {r_star}");
        // frozen from an independent bracketing run of the same closed form
        assert_abs_diff_eq!(r_star, 0.4918921410643433, epsilon = 2e-6);
    }

    #[test]
    fn threshold_is_insensitive_to_detector_efficiency() {
        let a = threshold_r(0.9891, 1.0, FRAC_PI_4).unwrap();
        let b = threshold_r(0.9891, 0.3, FRAC_PI_4).unwrap();
        assert!((a - b).abs() < 0.02, "thresholds {a} vs {b}");
    }

    #[test]
    fn threshold_reports_no_crossing_at_low_reflectance() {
        assert!(matches!(
            threshold_r(0.2, 1.0, FRAC_PI_4),
            Err(Error::NoCrossing(_))
        ));
    }

    #[test]
    fn threshold_invariant_under_coarse_grid_refinement() {
        let a = threshold_r_bracketed(0.99, 1.0, FRAC_PI_4, THRESHOLD_BRACKET, 64).unwrap();
        let b = threshold_r_bracketed(0.99, 1.0, FRAC_PI_4, THRESHOLD_BRACKET, 257).unwrap();
        assert!((a - b).abs() < 2e-6, "{a} vs {b}");
    }

    #[test]
    fn argmax_matches_the_reported_window() {
        let (r_max, b_max) = argmax_r(0.99, 1.0, FRAC_PI_4).unwrap();
        assert!((0.60..=0.70).contains(&r_max), "r_max = {r_max}");
        assert!(b_max > 2.0 && b_max <= 2.0 * std::f64::consts::SQRT_2 + 1e-9);
        assert_abs_diff_eq!(r_max, 0.6603790153238216, epsilon = 2e-4);
        assert_abs_diff_eq!(b_max, 2.046009047281478, epsilon = 1e-9);
        // decreasing beyond the maximum
        let phases = PhaseQuad::standard(FRAC_PI_4).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..120 {
            let r = r_max + (3.0 - r_max) * i as f64 / 119.0;
            let v = bell_chsh(&params(r, 0.99, 1.0), &phases).unwrap();
            assert!(v <= prev + 1e-12, "not decreasing at r = {r}");
            prev = v;
        }
    }

    #[test]
    fn argmax_invariant_under_coarse_grid_refinement() {
        let (a, _) = argmax_r_bracketed(0.99, 1.0, FRAC_PI_4, ARGMAX_BRACKET, 96).unwrap();
        let (b, _) = argmax_r_bracketed(0.99, 1.0, FRAC_PI_4, ARGMAX_BRACKET, 301).unwrap();
        assert!((a - b).abs() < 2e-4, "{a} vs {b}");
    }

    #[test]
    fn guard_inequality_on_a_random_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10_000 {
            let p = params(
                rng.gen_range(0.01..2.5),
                rng.gen_range(0.01..0.999),
                rng.gen_range(0.01..1.0),
            );
            let c = coefficients(&p, rng.gen_range(-PI..PI)).unwrap();
            let abs_a = c.a.abs();
            assert!(c.b1 > abs_a && c.b2 > abs_a && c.b3 > abs_a);
        }
    }

    #[test]
    fn single_cell_sweep_matches_direct_evaluation() {
        let cells = sweep(&[0.6], &[0.9891], 1.0, FRAC_PI_4);
        assert_eq!(cells.len(), 1);
        match &cells[0] {
            SweepCell::Point(pt) => {
                let phases = PhaseQuad::standard(FRAC_PI_4).unwrap();
                let direct = bell_result(&params(0.6, 0.9891, 1.0), &phases).unwrap();
                assert_eq!(pt.result.b_chsh, direct.b_chsh);
                assert_eq!(pt.result.p_pp, direct.p_pp);
            }
            other => panic!("expected a point, got {other:?}"),
        }
    }

    #[test]
    fn sweep_flags_degenerate_cells_without_aborting() {
        let cells = sweep(&[0.0, 0.5], &[0.9], 1.0, FRAC_PI_4);
        assert_eq!(cells.len(), 2);
        assert!(matches!(cells[0], SweepCell::Degenerate { .. }));
        assert!(matches!(cells[1], SweepCell::Point(_)));
    }

    #[test]
    fn sweep_order_is_row_major_in_r() {
        let cells = sweep(&[0.3, 0.6], &[0.5, 0.9], 1.0, FRAC_PI_4);
        let rs: Vec<f64> = cells
            .iter()
            .map(|c| match c {
                SweepCell::Point(p) => p.params.r(),
                SweepCell::Degenerate { r, .. } => *r,
            })
            .collect();
        assert_eq!(rs, vec![0.3, 0.3, 0.6, 0.6]);
    }
}
