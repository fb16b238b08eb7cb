//! Quadrature-space route: harmonic-oscillator eigenfunctions, joint
//! homodyne densities, and quadrant integration of the binning probability.
//!
//! Quadrature convention: `x_phi = (a e^{-i phi} + a_dag e^{i phi}) / 2`,
//! vacuum variance 1/4. The eigenfunctions in this scaling are
//! `psi_n(x) = (2/pi)^(1/4) H_n(sqrt(2) x) e^{-x^2} / sqrt(2^n n!)`.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use super::TruncatedTwoModeState;
use crate::search::linspace;
use crate::{Error, Result};

/// Tolerance on the on-grid normalization of a joint density.
const DENSITY_NORM_TOL: f64 = 1e-6;
/// Convergence target for grid-refined quadrant integrals.
const REFINE_TOL: f64 = 1e-6;

/// Uniform symmetric sample grid for one quadrature axis.
///
/// The grid always contains `x = 0` as a node (so sign binning never slices
/// a cell) and has an even number of intervals on each half-axis, as
/// composite Simpson requires. `x_max` should be at least five standard
/// deviations of the widest marginal; [`QuadratureGrid::for_state`] sizes it
/// from the state's own second moments, which for a squeezed input of
/// parameter `r` reproduces the `5 sqrt(cosh 2r) / 2` bound.
#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    points: Vec<f64>,
    step: f64,
    x_max: f64,
}

impl QuadratureGrid {
    /// Build a symmetric grid over `[-x_max, x_max]` with `half_intervals`
    /// cells per half-axis (rounded up to an even count).
    pub fn symmetric(x_max: f64, half_intervals: usize) -> Result<Self> {
        if !(x_max > 0.0) || !x_max.is_finite() {
            return Err(Error::Range(format!("x_max = {x_max} must be positive")));
        }
        let m = half_intervals.max(2).div_ceil(2) * 2;
        let points = linspace(-x_max, x_max, 2 * m + 1);
        let step = points[1] - points[0];
        Ok(Self { points, step, x_max })
    }

    /// Grid sized from the state's marginal moments: five standard
    /// deviations of the widest mode, `sigma^2 = (2 nbar + 1) / 4`.
    pub fn for_state(state: &TruncatedTwoModeState, half_intervals: usize) -> Result<Self> {
        let sigma = (0..2)
            .map(|mode| (0.5 * state.mean_photon(mode) + 0.25).sqrt())
            .fold(0.0f64, f64::max);
        Self::symmetric(5.0 * sigma, half_intervals)
    }

    pub fn points(&self) -> &[f64] { &self.points }
    pub fn step(&self) -> f64 { self.step }
    pub fn x_max(&self) -> f64 { self.x_max }
    pub fn len(&self) -> usize { self.points.len() }
    pub fn is_empty(&self) -> bool { self.points.is_empty() }
    /// Index of the `x = 0` node.
    pub fn zero_index(&self) -> usize { (self.points.len() - 1) / 2 }
}

/// Composite Simpson weights for `n_points` uniformly spaced samples
/// (`n_points` odd).
pub(crate) fn simpson_weights(n_points: usize, step: f64) -> Vec<f64> {
    debug_assert!(n_points % 2 == 1);
    let mut w = vec![1.0; n_points];
    for (i, wi) in w.iter_mut().enumerate().take(n_points - 1).skip(1) {
        *wi = if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    w.iter_mut().for_each(|wi| *wi *= step / 3.0);
    w
}

/// Table of oscillator eigenfunctions `psi_n(x)` for `n < dim` over `xs`.
fn hermite_table(dim: usize, xs: &[f64]) -> Array2<f64> {
    let g = xs.len();
    let mut tab = Array2::<f64>::zeros((dim, g));
    let amp0 = (2.0 / std::f64::consts::PI).powf(0.25);
    for (j, &x) in xs.iter().enumerate() {
        tab[(0, j)] = amp0 * (-x * x).exp();
        if dim > 1 {
            tab[(1, j)] = 2.0 * x * tab[(0, j)];
        }
        for n in 1..dim - 1 {
            let nf = n as f64;
            tab[(n + 1, j)] =
                (2.0 * x * tab[(n, j)] - nf.sqrt() * tab[(n - 1, j)]) / (nf + 1.0).sqrt();
        }
    }
    tab
}

/// Joint probability density `p(x1, x2)` of measuring `x_phi1` on mode 1 and
/// `x_phi2` on mode 2, sampled on the tensor grid.
///
/// The values are checked to be nonnegative (to -1e-10) and to integrate to
/// the state's trace within 1e-6 under composite Simpson; a normalization
/// failure reports [`Error::GridTooCoarse`].
pub fn quadrature_density(
    state: &TruncatedTwoModeState,
    phi1: f64,
    phi2: f64,
    grid: &QuadratureGrid,
) -> Result<Array2<f64>> {
    let dim = state.dim();
    let g = grid.len();
    let tab = hermite_table(dim, grid.points());

    // fold the local-oscillator rotations into the state once
    let m = state.matrix();
    let mut rot = Array2::<C64>::zeros((dim * dim, dim * dim));
    for n1 in 0..dim {
        for n2 in 0..dim {
            let i = n1 * dim + n2;
            for m1 in 0..dim {
                for m2 in 0..dim {
                    let ph = -phi1 * (n1 as f64 - m1 as f64) - phi2 * (n2 as f64 - m2 as f64);
                    rot[(i, m1 * dim + m2)] = m[(i, m1 * dim + m2)] * C64::from_polar(1.0, ph);
                }
            }
        }
    }

    // contract mode 2 against the eigenfunction table for every x2, then
    // evaluate the mode-1 quadratic form at every x1
    let columns: Vec<Vec<f64>> = (0..g)
        .into_par_iter()
        .map(|j2| {
            let mut mode1 = Array2::<C64>::zeros((dim, dim));
            for n1 in 0..dim {
                for m1 in 0..dim {
                    let mut acc = C64::new(0.0, 0.0);
                    for n2 in 0..dim {
                        let i = n1 * dim + n2;
                        let t2 = tab[(n2, j2)];
                        if t2 == 0.0 {
                            continue;
                        }
                        let row = m1 * dim;
                        for m2 in 0..dim {
                            acc += rot[(i, row + m2)] * (t2 * tab[(m2, j2)]);
                        }
                    }
                    mode1[(n1, m1)] = acc;
                }
            }
            (0..g)
                .map(|j1| {
                    let mut acc = C64::new(0.0, 0.0);
                    for n1 in 0..dim {
                        let t1 = tab[(n1, j1)];
                        if t1 == 0.0 {
                            continue;
                        }
                        for m1 in 0..dim {
                            acc += mode1[(n1, m1)] * (t1 * tab[(m1, j1)]);
                        }
                    }
                    acc.re
                })
                .collect()
        })
        .collect();

    let mut density = Array2::<f64>::zeros((g, g));
    for (j2, col) in columns.iter().enumerate() {
        for (j1, &v) in col.iter().enumerate() {
            density[(j1, j2)] = v;
        }
    }

    let min = density.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -1e-10 {
        return Err(Error::InternalInconsistency(format!(
            "joint density attains {min:.3e} < -1e-10"
        )));
    }
    let w = simpson_weights(g, grid.step());
    let mut total = 0.0;
    for j1 in 0..g {
        for j2 in 0..g {
            total += w[j1] * w[j2] * density[(j1, j2)];
        }
    }
    if (total - state.trace()).abs() > DENSITY_NORM_TOL {
        return Err(Error::GridTooCoarse(format!(
            "density integrates to {total}, trace is {}; grid x_max = {}, step = {}",
            state.trace(),
            grid.x_max(),
            grid.step()
        )));
    }
    Ok(density)
}

/// Simpson integral of a sampled density over the positive quadrant.
fn quadrant_mass(density: &Array2<f64>, grid: &QuadratureGrid) -> f64 {
    let z = grid.zero_index();
    let n_pos = grid.len() - z;
    let w = simpson_weights(n_pos, grid.step());
    let mut acc = 0.0;
    for (a, wa) in w.iter().enumerate() {
        for (b, wb) in w.iter().enumerate() {
            acc += wa * wb * density[(z + a, z + b)];
        }
    }
    acc
}

/// Binning probability from the quadrature-density route: integrate the
/// joint density over the positive quadrant with composite Simpson, refining
/// the grid until successive estimates agree to 1e-6.
pub fn p_plus_plus_oracle(state: &TruncatedTwoModeState, phi1: f64, phi2: f64) -> Result<f64> {
    let mut prev: Option<f64> = None;
    for &half in &[100usize, 200, 400] {
        let grid = QuadratureGrid::for_state(state, half)?;
        let density = quadrature_density(state, phi1, phi2, &grid)?;
        let cur = quadrant_mass(&density, &grid);
        if let Some(p) = prev {
            if (cur - p).abs() < REFINE_TOL {
                return Ok(cur);
            }
        }
        prev = Some(cur);
    }
    Err(Error::GridTooCoarse(
        "quadrant integral did not converge to 1e-6 under grid refinement".into(),
    ))
}

/// Probability that a homodyne measurement of one mode at phase `phi` gives
/// a nonnegative result, from the reduced state's 1D density. Refined like
/// [`p_plus_plus_oracle`]; the physical value is 1/2 independent of phase.
pub fn marginal_plus_probability(
    state: &TruncatedTwoModeState,
    mode: usize,
    phi: f64,
) -> Result<f64> {
    if mode > 1 {
        return Err(Error::Range(format!("mode = {mode} must be 0 or 1")));
    }
    let dim = state.dim();
    let red = state.reduced_mode(mode);
    let sigma = (0.5 * state.mean_photon(mode) + 0.25).sqrt();
    let mut prev: Option<f64> = None;
    for &half in &[100usize, 200, 400] {
        let grid = QuadratureGrid::symmetric(5.0 * sigma, half)?;
        let g = grid.len();
        let tab = hermite_table(dim, grid.points());
        let mut density = vec![0.0f64; g];
        for (j, dj) in density.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for n in 0..dim {
                for m in 0..dim {
                    let ph = C64::from_polar(1.0, -phi * (n as f64 - m as f64));
                    acc += red[(n, m)] * ph * (tab[(n, j)] * tab[(m, j)]);
                }
            }
            *dj = acc.re;
        }
        let z = grid.zero_index();
        let w = simpson_weights(g - z, grid.step());
        let cur: f64 = w.iter().zip(&density[z..]).map(|(wi, di)| wi * di).sum();
        if let Some(p) = prev {
            if (cur - p).abs() < REFINE_TOL {
                return Ok(cur);
            }
        }
        prev = Some(cur);
    }
    Err(Error::GridTooCoarse(
        "marginal integral did not converge to 1e-6 under grid refinement".into(),
    ))
}
