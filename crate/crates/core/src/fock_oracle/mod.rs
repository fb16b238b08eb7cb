//! Brute-force verification path in a truncated two-mode Fock basis.
//!
//! States are built and conditioned here without ever touching the closed
//! forms, so agreement between the two routes is a genuine cross-check.
//!
//! Conventions, fixed once and referenced by every test:
//!
//! - The two-mode squeezed input is the Schmidt-form vector with amplitudes
//!   `sqrt(1 - lam^2) lam^n` on `|n, n>`, `lam = tanh r`.
//! - Each beam splitter routes the signal into the homodyne arm with
//!   amplitude `sin(theta)` and into the click-detector arm with amplitude
//!   `cos(theta)`, both real and nonnegative: `|n, 0> ->
//!   sum_m sqrt(C(n, m)) sin(theta)^(n-m) cos(theta)^m |n-m, m>`. The overall
//!   phase of the reflected arm is unobservable through the photon-number
//!   diagonal click POVM, and no test depends on it.
//! - Detector inefficiency is folded into the click POVM element
//!   `I - (1 - eta)^n` rather than materializing extra loss modes; for
//!   threshold detectors the two descriptions are identical.
//! - Two-mode matrices use the composite row index `n1 * dim + n2`.

mod displacement;
mod quadrature;

pub use displacement::{
    char_value_of_matrix, conditional_char_value, p_plus_plus_via_wigner, wigner_value,
};
pub use quadrature::{
    marginal_plus_probability, p_plus_plus_oracle, quadrature_density, QuadratureGrid,
};

use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::model::ExperimentParams;
use crate::{Error, Result};

/// Hard cap on the per-mode truncation size. Dense two-mode matrices scale as
/// `dim^4`, so this keeps everything tractable at desk scale.
pub const MAX_FOCK_DIM: usize = 40;

/// Threshold on the discarded Schmidt weight accepted by the state builder.
pub const TRUNCATION_TOL: f64 = 1e-10;

/// Smallest per-mode dimension whose discarded Schmidt weight
/// `tanh(r)^(2 dim)` falls below 1e-12.
///
/// Truncation cost grows with `r`; beyond `r ~ 1.5` the required dimension
/// exceeds [`MAX_FOCK_DIM`] and the oracle refuses rather than degrade.
pub fn fock_dim_for(r: f64) -> Result<usize> {
    if !(r > 0.0) {
        return Err(Error::Range(format!("r = {r} must be > 0")));
    }
    let lam = r.tanh();
    let dim = ((-12.0 * std::f64::consts::LN_10) / (2.0 * lam.ln())).ceil() as usize;
    let dim = dim.max(2);
    if dim > MAX_FOCK_DIM {
        return Err(Error::DimensionOverflow(format!(
            "r = {r} needs dim = {dim} > {MAX_FOCK_DIM} for a 1e-12 tail"
        )));
    }
    Ok(dim)
}

fn binomial_table(dim: usize) -> Array2<f64> {
    let mut t = Array2::<f64>::zeros((dim, dim));
    for n in 0..dim {
        t[(n, 0)] = 1.0;
        for m in 1..=n {
            t[(n, m)] = if m == n {
                1.0
            } else {
                t[(n - 1, m - 1)] + t[(n - 1, m)]
            };
        }
    }
    t
}

/// Pure two-mode state vector on a truncated Fock basis.
#[derive(Clone, Debug)]
pub struct TwoModeVec {
    dim: usize,
    amps: Array2<C64>,
    trunc_error: f64,
}

impl TwoModeVec {
    /// Wrap explicit amplitudes `amps[(n1, n2)]`. The vector is taken as
    /// given (no renormalization) and assumed exact (zero truncation error).
    pub fn from_amplitudes(amps: Array2<C64>) -> Result<Self> {
        let (d1, d2) = amps.dim();
        if d1 != d2 || d1 < 2 {
            return Err(Error::Range(format!("amplitude array must be square, >= 2x2, got {d1}x{d2}")));
        }
        if d1 > MAX_FOCK_DIM {
            return Err(Error::DimensionOverflow(format!("dim = {d1} > {MAX_FOCK_DIM}")));
        }
        Ok(Self { dim: d1, amps, trunc_error: 0.0 })
    }

    pub fn dim(&self) -> usize { self.dim }
    pub fn amps(&self) -> &Array2<C64> { &self.amps }
    /// Bound on the probability weight discarded by the truncation.
    pub fn trunc_error(&self) -> f64 { self.trunc_error }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Dense density matrix `|psi><psi|` of this vector.
    pub fn density(&self) -> TruncatedTwoModeState {
        let d = self.dim;
        let flat: Vec<C64> = self.amps.iter().copied().collect();
        let mut m = Array2::<C64>::zeros((d * d, d * d));
        for (i, &vi) in flat.iter().enumerate() {
            if vi == C64::new(0.0, 0.0) {
                continue;
            }
            for (j, &vj) in flat.iter().enumerate() {
                m[(i, j)] = vi * vj.conj();
            }
        }
        TruncatedTwoModeState { dim: d, matrix: m, trunc_error: self.trunc_error }
    }
}

/// Schmidt-form two-mode squeezed vector, truncated at `dim - 1` photons per
/// mode. The discarded weight is exactly `tanh(r)^(2 dim)` (geometric tail).
pub fn two_mode_squeezed(r: f64, dim: usize) -> Result<TwoModeVec> {
    if !(r > 0.0) {
        return Err(Error::Range(format!("r = {r} must be > 0")));
    }
    if dim < 2 {
        return Err(Error::Range(format!("dim = {dim} must be >= 2")));
    }
    if dim > MAX_FOCK_DIM {
        return Err(Error::DimensionOverflow(format!("dim = {dim} > {MAX_FOCK_DIM}")));
    }
    let lam = r.tanh();
    let tail = lam.powi(2 * dim as i32);
    if tail > TRUNCATION_TOL {
        return Err(Error::TruncationTooCoarse(format!(
            "discarded weight {tail:.3e} > {TRUNCATION_TOL:.0e} at r = {r}, dim = {dim}"
        )));
    }
    let scale = (1.0 - lam * lam).sqrt();
    let mut amps = Array2::<C64>::zeros((dim, dim));
    let mut coeff = scale;
    for n in 0..dim {
        amps[(n, n)] = C64::new(coeff, 0.0);
        coeff *= lam;
    }
    Ok(TwoModeVec { dim, amps, trunc_error: tail })
}

/// The two homodyne modes and two click-detector modes after beam splitting,
/// kept in product form: the full four-mode tensor is never materialized.
/// Detector-outcome blocks are generated on demand from the input amplitudes
/// and the photon-routing table of the two sequential two-mode mixings.
#[derive(Clone, Debug)]
pub struct FourModeState {
    input: TwoModeVec,
    theta: f64,
    /// `route[(m, n)] = sqrt(C(n, m)) sin(theta)^(n-m) cos(theta)^m`:
    /// amplitude for `m` of `n` photons leaving through the detector arm.
    route: Array2<f64>,
}

/// Mix each mode of `input` with a vacuum mode on a beam splitter of angle
/// `theta` (reflectance `sin^2 theta` toward the homodyne side).
///
/// The transformation is unitary, so the total norm over all detector
/// outcomes equals the input norm.
pub fn beamsplit_with_vacuum(input: &TwoModeVec, theta: f64) -> Result<FourModeState> {
    if !theta.is_finite() || !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(Error::Range(format!("theta = {theta} outside [0, pi/2]")));
    }
    let dim = input.dim();
    if dim > MAX_FOCK_DIM {
        return Err(Error::DimensionOverflow(format!("dim = {dim} > {MAX_FOCK_DIM}")));
    }
    let binom = binomial_table(dim);
    let (s, c) = (theta.sin(), theta.cos());
    let mut route = Array2::<f64>::zeros((dim, dim));
    for n in 0..dim {
        for m in 0..=n {
            route[(m, n)] = binom[(n, m)].sqrt() * s.powi((n - m) as i32) * c.powi(m as i32);
        }
    }
    Ok(FourModeState { input: input.clone(), theta, route })
}

impl FourModeState {
    pub fn dim(&self) -> usize { self.input.dim() }
    pub fn theta(&self) -> f64 { self.theta }

    /// Homodyne-side amplitudes conditioned on the detector modes carrying
    /// exactly `(m3, m4)` photons (unnormalized).
    pub fn detector_block(&self, m3: usize, m4: usize) -> Array2<C64> {
        let d = self.dim();
        let mut blk = Array2::<C64>::zeros((d, d));
        for n1 in m3..d {
            let r1 = self.route[(m3, n1)];
            if r1 == 0.0 {
                continue;
            }
            for n2 in m4..d {
                let a = self.input.amps[(n1, n2)];
                if a != C64::new(0.0, 0.0) {
                    blk[(n1 - m3, n2 - m4)] = a * (r1 * self.route[(m4, n2)]);
                }
            }
        }
        blk
    }

    /// Total squared norm over all detector outcomes; equals the input norm
    /// because the mixing is unitary.
    pub fn norm_sqr(&self) -> f64 {
        let d = self.dim();
        let mut total = 0.0;
        for m3 in 0..d {
            for m4 in 0..d {
                total += self
                    .detector_block(m3, m4)
                    .iter()
                    .map(|a| a.norm_sqr())
                    .sum::<f64>();
            }
        }
        total
    }
}

/// Density matrix on the truncated two-mode Fock space, composite index
/// `n1 * dim + n2`.
///
/// `trunc_error` bounds the probability weight the representation is missing
/// relative to the untruncated physical state; for conditioned states it is
/// the input tail amplified by the conditioning normalization.
#[derive(Clone, Debug)]
pub struct TruncatedTwoModeState {
    dim: usize,
    matrix: Array2<C64>,
    trunc_error: f64,
}

impl TruncatedTwoModeState {
    pub fn dim(&self) -> usize { self.dim }
    pub fn matrix(&self) -> &Array2<C64> { &self.matrix }
    pub fn trunc_error(&self) -> f64 { self.trunc_error }

    pub fn trace(&self) -> f64 {
        (0..self.dim * self.dim).map(|i| self.matrix[(i, i)].re).sum()
    }

    /// Largest absolute deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim * self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Whether all eigenvalues exceed `-tol`, decided by a Cholesky
    /// factorization of the shifted matrix.
    pub fn is_positive_semidefinite(&self, tol: f64) -> bool {
        let n = self.dim * self.dim;
        let mut m = DMatrix::<C64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                // hermitize to protect the factorization from rounding noise
                m[(i, j)] = 0.5 * (self.matrix[(i, j)] + self.matrix[(j, i)].conj());
            }
            m[(i, i)] += C64::new(tol, 0.0);
        }
        m.cholesky().is_some()
    }

    /// Mean photon number of one mode (0 or 1).
    pub fn mean_photon(&self, mode: usize) -> f64 {
        let d = self.dim;
        let mut nbar = 0.0;
        for n1 in 0..d {
            for n2 in 0..d {
                let i = n1 * d + n2;
                let n = if mode == 0 { n1 } else { n2 };
                nbar += self.matrix[(i, i)].re * n as f64;
            }
        }
        nbar
    }

    /// Occupation probabilities of one mode (diagonal of the reduced state).
    pub(crate) fn mode_occupations(&self, mode: usize) -> Vec<f64> {
        let d = self.dim;
        let mut occ = vec![0.0; d];
        for n1 in 0..d {
            for n2 in 0..d {
                let i = n1 * d + n2;
                let n = if mode == 0 { n1 } else { n2 };
                occ[n] += self.matrix[(i, i)].re;
            }
        }
        occ
    }

    /// Reduced density matrix of one mode.
    pub fn reduced_mode(&self, mode: usize) -> Array2<C64> {
        let d = self.dim;
        let mut red = Array2::<C64>::zeros((d, d));
        for a in 0..d {
            for b in 0..d {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..d {
                    let (i, j) = if mode == 0 { (a * d + k, b * d + k) } else { (k * d + a, k * d + b) };
                    acc += self.matrix[(i, j)];
                }
                red[(a, b)] = acc;
            }
        }
        red
    }
}

fn click_weight(eta: f64, m: usize) -> f64 {
    1.0 - (1.0 - eta).powi(m as i32)
}

/// Unnormalized conditioned matrix and its trace.
fn condition_unnormalized(bs: &FourModeState, eta: f64) -> (Array2<C64>, f64) {
    let d = bs.dim();
    let mut rho = Array2::<C64>::zeros((d * d, d * d));
    let mut p34 = 0.0;
    for m3 in 1..d {
        let w3 = click_weight(eta, m3);
        for m4 in 1..d {
            let w = w3 * click_weight(eta, m4);
            let blk = bs.detector_block(m3, m4);
            let nonzero: Vec<(usize, C64)> = blk
                .indexed_iter()
                .filter(|(_, a)| **a != C64::new(0.0, 0.0))
                .map(|((n1, n2), a)| (n1 * d + n2, *a))
                .collect();
            for &(i, vi) in &nonzero {
                p34 += w * vi.norm_sqr();
                for &(j, vj) in &nonzero {
                    rho[(i, j)] += w * vi * vj.conj();
                }
            }
        }
    }
    (rho, p34)
}

/// Project onto "both detectors fire" with the click POVM
/// `I - (1 - eta)^n` on each detector mode, trace the detector modes out,
/// and normalize. Returns the conditional homodyne-side state and the joint
/// click probability.
pub fn condition_on_clicks(
    bs: &FourModeState,
    eta: f64,
) -> Result<(TruncatedTwoModeState, f64)> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Range(format!("eta = {eta} outside (0, 1]")));
    }
    let (mut rho, p34) = condition_unnormalized(bs, eta);
    if p34 < 1e-14 {
        return Err(Error::DegenerateConditioning(format!(
            "joint click probability {p34:.3e} below 1e-14"
        )));
    }
    rho.mapv_inplace(|x| x / p34);
    let state = TruncatedTwoModeState {
        dim: bs.dim(),
        matrix: rho,
        trunc_error: bs.input.trunc_error() / p34,
    };
    Ok((state, p34))
}

/// Full pipeline at one parameter point: squeezed input at the automatic
/// truncation, beam splitting, click conditioning.
pub fn conditioned_state(params: &ExperimentParams) -> Result<(TruncatedTwoModeState, f64)> {
    let dim = fock_dim_for(params.r())?;
    let input = two_mode_squeezed(params.r(), dim)?;
    let bs = beamsplit_with_vacuum(&input, params.theta())?;
    condition_on_clicks(&bs, params.eta())
}

/// Series cutoff for the vacuum superoperator terms.
const SUPEROP_TERM_TOL: f64 = 1e-14;

/// One-mode map `(I - S) rho` with
/// `S = sum_k ((-big_b)^k / k!) a^k rho a_dag^k`, evaluated by the term
/// recurrence and truncated once terms fall below 1e-14 in magnitude.
///
/// The `k = 0` term of `S` is the identity, so the result is
/// `-sum_{k>=1} ((-big_b)^k / k!) a^k rho a_dag^k`.
pub fn apply_vacuum_superoperator_single(rho: &Array2<C64>, big_b: f64) -> Array2<C64> {
    let d = rho.nrows();
    let mut out = Array2::<C64>::zeros((d, d));
    let mut term = rho.clone();
    for k in 1..d {
        let mut next = Array2::<C64>::zeros((d, d));
        for n in 0..d - 1 {
            let fa = ((n + 1) as f64).sqrt();
            for m in 0..d - 1 {
                let fb = ((m + 1) as f64).sqrt();
                next[(n, m)] = term[(n + 1, m + 1)] * (fa * fb);
            }
        }
        next.mapv_inplace(|x| x * (-big_b / k as f64));
        term = next;
        out -= &term;
        let max = term.iter().map(|x| x.norm()).fold(0.0f64, f64::max);
        if max < SUPEROP_TERM_TOL {
            break;
        }
    }
    out
}

fn superop_two_mode_one_side(rho: &Array2<C64>, dim: usize, big_b: f64, mode: usize) -> Array2<C64> {
    let lower = |m: &Array2<C64>| -> Array2<C64> {
        let mut next = Array2::<C64>::zeros((dim * dim, dim * dim));
        for n1 in 0..dim {
            for n2 in 0..dim {
                let (na, fa_ok) = if mode == 0 { (n1, n1 + 1 < dim) } else { (n2, n2 + 1 < dim) };
                if !fa_ok {
                    continue;
                }
                let fa = ((na + 1) as f64).sqrt();
                let i = n1 * dim + n2;
                let i_up = if mode == 0 { (n1 + 1) * dim + n2 } else { n1 * dim + (n2 + 1) };
                for m1 in 0..dim {
                    for m2 in 0..dim {
                        let (mb, fb_ok) =
                            if mode == 0 { (m1, m1 + 1 < dim) } else { (m2, m2 + 1 < dim) };
                        if !fb_ok {
                            continue;
                        }
                        let fb = ((mb + 1) as f64).sqrt();
                        let j = m1 * dim + m2;
                        let j_up = if mode == 0 { (m1 + 1) * dim + m2 } else { m1 * dim + (m2 + 1) };
                        next[(i, j)] = m[(i_up, j_up)] * (fa * fb);
                    }
                }
            }
        }
        next
    };
    let mut out = Array2::<C64>::zeros((dim * dim, dim * dim));
    let mut term = rho.clone();
    for k in 1..dim {
        let mut next = lower(&term);
        next.mapv_inplace(|x| x * (-big_b / k as f64));
        term = next;
        out -= &term;
        let max = term.iter().map(|x| x.norm()).fold(0.0f64, f64::max);
        if max < SUPEROP_TERM_TOL {
            break;
        }
    }
    out
}

/// Two-mode map `(I - S_1) (x) (I - S_2) rho12` with the loss-adjusted
/// channel strength `big_b = eta cos^2(theta)` folded into each factor.
///
/// The trace of the result is the joint click probability, and displacing it
/// by `lambda_i sin(theta)` together with the vacuum envelope factors
/// reassembles the conditional characteristic function.
pub fn apply_vacuum_superoperator(rho12: &Array2<C64>, theta: f64, eta: f64) -> Result<Array2<C64>> {
    let n = rho12.nrows();
    if rho12.ncols() != n {
        return Err(Error::Range("density matrix must be square".into()));
    }
    let dim = (n as f64).sqrt().round() as usize;
    if dim * dim != n {
        return Err(Error::Range(format!(
            "matrix size {n} is not a squared mode dimension"
        )));
    }
    let big_b = eta * theta.cos().powi(2);
    let after1 = superop_two_mode_one_side(rho12, dim, big_b, 0);
    Ok(superop_two_mode_one_side(&after1, dim, big_b, 1))
}

/// Trace distance `|| a - b ||_1 / 2` between two Hermitian matrices.
pub fn trace_distance(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    let n = a.nrows();
    let mut m = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let d = a[(i, j)] - b[(i, j)];
            let dt = (a[(j, i)] - b[(j, i)]).conj();
            m[(i, j)] = 0.5 * (d + dt);
        }
    }
    let eig = m.symmetric_eigen();
    0.5 * eig.eigenvalues.iter().map(|l| l.abs()).sum::<f64>()
}

/// How far the conditioning map is from acting linearly on mixtures: the
/// trace distance between the image of `weight a + (1 - weight) b` and the
/// same mixture of the individual images. Zero for identical inputs,
/// strictly positive for generic distinct ones.
pub fn nonlinearity_witness(
    a: &TwoModeVec,
    b: &TwoModeVec,
    weight: f64,
    theta: f64,
    eta: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(Error::Range(format!("weight = {weight} outside [0, 1]")));
    }
    if a.dim() != b.dim() {
        return Err(Error::Range(format!(
            "input dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let (la, pa) = condition_unnormalized(&beamsplit_with_vacuum(a, theta)?, eta);
    let (lb, pb) = condition_unnormalized(&beamsplit_with_vacuum(b, theta)?, eta);
    if pa < 1e-14 || pb < 1e-14 {
        return Err(Error::DegenerateConditioning(format!(
            "click probabilities {pa:.3e}, {pb:.3e} too small"
        )));
    }
    let p_mix = weight * pa + (1.0 - weight) * pb;
    let wa = C64::new(weight, 0.0);
    let wb = C64::new(1.0 - weight, 0.0);
    let image_of_mixture = (&la * wa + &lb * wb) / C64::new(p_mix, 0.0);
    let mixture_of_images = &la * (wa / pa) + &lb * (wb / pb);
    Ok(trace_distance(&image_of_mixture, &mixture_of_images))
}
