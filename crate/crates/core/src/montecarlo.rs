//! Monte-Carlo simulation of the conditioned homodyne records an experiment
//! would collect, with statistical-error estimates for the Bell statistics.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::fock_oracle::{
    conditioned_state, quadrature_density, QuadratureGrid, TruncatedTwoModeState,
};
use crate::model::{ExperimentParams, PhaseQuad};
use crate::{Error, Result};

/// Half-axis cell count of the tabulated sampling grid.
const SAMPLER_HALF_INTERVALS: usize = 160;

/// A batch of joint quadrature samples drawn at one phase setting.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub pairs: Vec<(f64, f64)>,
    pub seed: u64,
    pub n: usize,
    pub phi1: f64,
    pub phi2: f64,
}

/// Sign-binned joint counts of one phase setting.
#[derive(Copy, Clone, Debug)]
pub struct SettingCounts {
    pub phi1: f64,
    pub phi2: f64,
    pub n_pp: u64,
    pub n_pm: u64,
    pub n_mp: u64,
    pub n_mm: u64,
}

impl SettingCounts {
    pub fn phi_sum(&self) -> f64 {
        self.phi1 + self.phi2
    }

    pub fn total(&self) -> u64 {
        self.n_pp + self.n_pm + self.n_mp + self.n_mm
    }

    /// Empirical correlation of the binned outcomes. All four joint
    /// frequencies enter; the symmetry `P-- = P++` is left as a checkable
    /// outcome of the data rather than assumed.
    pub fn correlation(&self) -> f64 {
        let n = self.total() as f64;
        (self.n_pp as f64 + self.n_mm as f64 - self.n_pm as f64 - self.n_mp as f64) / n
    }

    fn correlation_variance(&self) -> f64 {
        let e = self.correlation();
        (1.0 - e * e) / self.total() as f64
    }
}

/// Point estimate of the CHSH statistic with its standard error.
#[derive(Clone, Debug)]
pub struct BellEstimate {
    pub b_chsh_hat: f64,
    /// Standard error propagated from the binomial variances of the four
    /// per-setting correlations.
    pub stderr: f64,
    pub n_per_setting: usize,
    /// Counts in the fixed setting order `(base, cross1, cross2, alt)`.
    pub settings: [SettingCounts; 4],
    /// Joint click probability: the acquisition rate of conditioned data.
    pub p34: f64,
}

/// Inverse-CDF sampler on a tabulated joint density: the marginal of `x1` is
/// inverted on the grid nodes, then `x2` is drawn from the conditional
/// obtained by linear interpolation between the two neighboring grid rows.
struct TabulatedSampler {
    points: Vec<f64>,
    step: f64,
    /// `row_cdf[(i, j)]`: cumulative (trapezoid) mass of row `i` up to node `j`.
    row_cdf: Array2<f64>,
    /// Node CDF of the `x1` marginal.
    x1_cdf: Vec<f64>,
}

impl TabulatedSampler {
    fn build(state: &TruncatedTwoModeState, phi1: f64, phi2: f64) -> Result<Self> {
        let grid = QuadratureGrid::for_state(state, SAMPLER_HALF_INTERVALS)?;
        let density = quadrature_density(state, phi1, phi2, &grid)?;
        let g = grid.len();
        let h = grid.step();
        let mut row_cdf = Array2::<f64>::zeros((g, g));
        for i in 0..g {
            let mut acc = 0.0;
            for j in 1..g {
                acc += 0.5 * h * (density[(i, j - 1)] + density[(i, j)]);
                row_cdf[(i, j)] = acc;
            }
        }
        let mut x1_cdf = vec![0.0; g];
        for i in 1..g {
            let mass_prev = row_cdf[(i - 1, g - 1)];
            let mass = row_cdf[(i, g - 1)];
            x1_cdf[i] = x1_cdf[i - 1] + 0.5 * h * (mass_prev + mass);
        }
        Ok(Self { points: grid.points().to_vec(), step: h, row_cdf, x1_cdf })
    }

    /// Largest index `k` with `cdf[k] <= target`, capped at `len - 2`.
    fn locate(cdf: impl Fn(usize) -> f64, len: usize, target: f64) -> usize {
        let mut lo = 0usize;
        let mut hi = len - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if cdf(mid) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let g = self.points.len();
        let total = self.x1_cdf[g - 1];
        let u1 = rng.gen::<f64>() * total;
        let k = Self::locate(|i| self.x1_cdf[i], g, u1);
        let seg = self.x1_cdf[k + 1] - self.x1_cdf[k];
        let t = if seg > 0.0 { (u1 - self.x1_cdf[k]) / seg } else { 0.5 };
        let x1 = self.points[k] + t * self.step;

        let blended = |j: usize| (1.0 - t) * self.row_cdf[(k, j)] + t * self.row_cdf[(k + 1, j)];
        let row_total = blended(g - 1);
        let u2 = rng.gen::<f64>() * row_total;
        let j = Self::locate(&blended, g, u2);
        let seg2 = blended(j + 1) - blended(j);
        let t2 = if seg2 > 0.0 { (u2 - blended(j)) / seg2 } else { 0.5 };
        let x2 = self.points[j] + t2 * self.step;
        (x1, x2)
    }
}

/// Draw `n` i.i.d. joint quadrature samples from the state's homodyne
/// density at phases `(phi1, phi2)`. Same seed, same settings: identical
/// batch.
pub fn sample_quadratures(
    state: &TruncatedTwoModeState,
    phi1: f64,
    phi2: f64,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    if n == 0 {
        return Err(Error::Range("sample count must be >= 1".into()));
    }
    let sampler = TabulatedSampler::build(state, phi1, phi2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..n).map(|_| sampler.draw(&mut rng)).collect();
    Ok(SampleBatch { pairs, seed, n, phi1, phi2 })
}

fn bin_batch(phi1: f64, phi2: f64, pairs: &[(f64, f64)]) -> SettingCounts {
    let mut counts = SettingCounts { phi1, phi2, n_pp: 0, n_pm: 0, n_mp: 0, n_mm: 0 };
    for &(x1, x2) in pairs {
        // nonnegative bins as +1
        match (x1 >= 0.0, x2 >= 0.0) {
            (true, true) => counts.n_pp += 1,
            (true, false) => counts.n_pm += 1,
            (false, true) => counts.n_mp += 1,
            (false, false) => counts.n_mm += 1,
        }
    }
    counts
}

/// Simulate a full Bell run: draw `n_per_setting` conditioned samples at each
/// of the four phase settings, bin by sign, and form the CHSH estimate.
///
/// Each setting consumes an independent substream (`1 + setting index`) of
/// the ChaCha generator seeded by `seed`, so settings can be generated
/// concurrently with a deterministic result.
pub fn estimate_bell(
    params: &ExperimentParams,
    phases: &PhaseQuad,
    n_per_setting: usize,
    seed: u64,
) -> Result<BellEstimate> {
    if n_per_setting < 100 {
        return Err(Error::Range(format!(
            "n_per_setting = {n_per_setting} must be >= 100"
        )));
    }
    let (state, p34) = conditioned_state(params)?;
    let settings = phases.settings();
    let counts: Vec<SettingCounts> = settings
        .par_iter()
        .enumerate()
        .map(|(k, &(phi1, phi2))| -> Result<SettingCounts> {
            let sampler = TabulatedSampler::build(&state, phi1, phi2)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1 + k as u64);
            let mut pairs = Vec::with_capacity(n_per_setting);
            for _ in 0..n_per_setting {
                pairs.push(sampler.draw(&mut rng));
            }
            Ok(bin_batch(phi1, phi2, &pairs))
        })
        .collect::<Result<Vec<_>>>()?;
    let settings: [SettingCounts; 4] = [counts[0], counts[1], counts[2], counts[3]];
    let combination = settings[0].correlation() - settings[1].correlation()
        + settings[2].correlation()
        + settings[3].correlation();
    let variance: f64 = settings.iter().map(|s| s.correlation_variance()).sum();
    Ok(BellEstimate {
        b_chsh_hat: combination.abs(),
        stderr: variance.sqrt(),
        n_per_setting,
        settings,
        p34,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic;
    use crate::fock_oracle::TwoModeVec;
    use num_complex::Complex64 as C64;
    use std::f64::consts::FRAC_PI_4;

    fn vacuum_state(dim: usize) -> TruncatedTwoModeState {
        let mut amps = Array2::<C64>::zeros((dim, dim));
        amps[(0, 0)] = C64::new(1.0, 0.0);
        TwoModeVec::from_amplitudes(amps).unwrap().density()
    }

    #[test]
    fn vacuum_samples_have_the_right_moments() {
        let state = vacuum_state(6);
        let n = 100_000;
        let batch = sample_quadratures(&state, 0.0, 0.0, n, 7).unwrap();
        assert_eq!(batch.pairs.len(), n);
        let mean: f64 = batch.pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
        let var: f64 = batch.pairs.iter().map(|p| p.0 * p.0).sum::<f64>() / n as f64;
        // sigma = 1/2, so a 4 sigma/sqrt(n) window around 0
        assert!(mean.abs() < 4.0 * 0.5 / (n as f64).sqrt(), "mean = {mean}");
        assert!((var - 0.25).abs() < 0.05 * 0.25, "variance = {var}");
    }

    #[test]
    fn fixed_seed_reproduces_the_batch_exactly() {
        let state = vacuum_state(4);
        let a = sample_quadratures(&state, 0.3, -0.2, 500, 99).unwrap();
        let b = sample_quadratures(&state, 0.3, -0.2, 500, 99).unwrap();
        assert_eq!(a.pairs, b.pairs);
        let c = sample_quadratures(&state, 0.3, -0.2, 500, 100).unwrap();
        assert_ne!(a.pairs, c.pairs);
    }

    #[test]
    fn plus_plus_fraction_tracks_the_closed_form() {
        let params = ExperimentParams::new(0.6, 0.9891, 1.0).unwrap();
        let (state, _) = conditioned_state(&params).unwrap();
        let n = 100_000;
        let batch = sample_quadratures(&state, 0.0, FRAC_PI_4, n, 12345).unwrap();
        let counts = bin_batch(0.0, FRAC_PI_4, &batch.pairs);
        let p_hat = counts.n_pp as f64 / n as f64;
        let p_ref = analytic::p_plus_plus(&params, FRAC_PI_4).unwrap();
        let stderr = (p_ref * (1.0 - p_ref) / n as f64).sqrt();
        assert!(
            (p_hat - p_ref).abs() < 3.0 * stderr,
            "p_hat = {p_hat}, p_ref = {p_ref}, stderr = {stderr}"
        );
    }

    #[test]
    fn estimate_is_deterministic_and_counts_are_complete() {
        let params = ExperimentParams::new(0.5, 0.95, 1.0).unwrap();
        let phases = PhaseQuad::standard(FRAC_PI_4).unwrap();
        let a = estimate_bell(&params, &phases, 2000, 3).unwrap();
        let b = estimate_bell(&params, &phases, 2000, 3).unwrap();
        assert_eq!(a.b_chsh_hat, b.b_chsh_hat);
        assert_eq!(a.stderr, b.stderr);
        for s in &a.settings {
            assert_eq!(s.total(), 2000);
        }
        assert!(a.stderr > 0.0);
    }

    #[test]
    fn no_violation_estimate_below_threshold_squeezing() {
        let params = ExperimentParams::new(0.2, 0.99, 1.0).unwrap();
        let phases = PhaseQuad::standard(FRAC_PI_4).unwrap();
        let est = estimate_bell(&params, &phases, 20_000, 5).unwrap();
        assert!(est.b_chsh_hat < 2.0, "estimate = {}", est.b_chsh_hat);
    }

    #[test]
    fn rejects_tiny_sample_counts() {
        let params = ExperimentParams::new(0.5, 0.95, 1.0).unwrap();
        let phases = PhaseQuad::standard(FRAC_PI_4).unwrap();
        assert!(matches!(
            estimate_bell(&params, &phases, 10, 1),
            Err(Error::Range(_))
        ));
        let state = vacuum_state(4);
        assert!(matches!(
            sample_quadratures(&state, 0.0, 0.0, 0, 1),
            Err(Error::Range(_))
        ));
    }
}
