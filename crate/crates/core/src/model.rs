//! Domain types shared by the closed-form, oracle, and sampling modules.

use crate::{Error, Result};

/// Physical knob set: squeezing strength, beam-splitter reflectance, and
/// conditioning-detector quantum efficiency.
///
/// Valid parameters live in the open box `(0, inf) x (0, 1) x (0, 1]`.
/// Points outside it either make the joint click probability vanish (no
/// conditional state exists) or are meaningless, and are rejected at
/// construction so that downstream formulas never divide by zero.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct ExperimentParams {
    r: f64,
    reflectance: f64,
    eta: f64,
}

impl ExperimentParams {
    /// Validate `(r, reflectance, eta)` and build the parameter set.
    ///
    /// Degenerate points (`r <= 0`, `reflectance >= 1`, `eta <= 0`) force the
    /// joint click probability to zero and are reported as
    /// [`Error::DegenerateConditioning`]; non-finite inputs, `reflectance <= 0`,
    /// and `eta > 1` are reported as [`Error::Range`].
    pub fn new(r: f64, reflectance: f64, eta: f64) -> Result<Self> {
        if !r.is_finite() || !reflectance.is_finite() || !eta.is_finite() {
            return Err(Error::Range(format!(
                "non-finite input: r={r}, reflectance={reflectance}, eta={eta}"
            )));
        }
        if r <= 0.0 {
            return Err(Error::DegenerateConditioning(format!(
                "r = {r} <= 0 gives no squeezing and zero click probability"
            )));
        }
        if reflectance >= 1.0 {
            return Err(Error::DegenerateConditioning(format!(
                "reflectance = {reflectance} >= 1 sends no light to the click detectors"
            )));
        }
        if reflectance <= 0.0 {
            return Err(Error::Range(format!(
                "reflectance = {reflectance} must lie in (0, 1)"
            )));
        }
        if eta <= 0.0 {
            return Err(Error::DegenerateConditioning(format!(
                "eta = {eta} <= 0 means the click detectors never fire"
            )));
        }
        if eta > 1.0 {
            return Err(Error::Range(format!("eta = {eta} must lie in (0, 1]")));
        }
        Ok(Self { r, reflectance, eta })
    }

    /// Squeezing parameter.
    pub fn r(&self) -> f64 { self.r }

    /// Beam-splitter reflectance, the fraction of each beam routed to the
    /// homodyne detectors.
    pub fn reflectance(&self) -> f64 { self.reflectance }

    /// Quantum efficiency of the conditioning photodetectors.
    pub fn eta(&self) -> f64 { self.eta }

    /// Beam-splitter mixing angle `theta = asin(sqrt(reflectance))`.
    pub fn theta(&self) -> f64 { self.reflectance.sqrt().asin() }
}

/// The four per-arm local-oscillator phases of a Bell run.
///
/// Storing per-arm settings (rather than the four sums entering the Bell
/// combinations) guarantees by construction that the sums satisfy
/// `sum_base + sum_alt = sum_cross1 + sum_cross2`, which is what makes the
/// CHSH combination meaningful.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PhaseQuad {
    arm1: f64,
    arm1_alt: f64,
    arm2: f64,
    arm2_alt: f64,
}

impl PhaseQuad {
    /// Build from the two settings of each arm, in radians.
    pub fn new(arm1: f64, arm1_alt: f64, arm2: f64, arm2_alt: f64) -> Result<Self> {
        if ![arm1, arm1_alt, arm2, arm2_alt].iter().all(|p| p.is_finite()) {
            return Err(Error::Range("non-finite phase".into()));
        }
        Ok(Self { arm1, arm1_alt, arm2, arm2_alt })
    }

    /// The one-parameter family used throughout: arm 1 at `(0, 2 psi)` and
    /// arm 2 at `(psi, -psi)`, so the four sums are `(psi, 3 psi, -psi, psi)`.
    /// The optimal violation occurs at `psi = pi/4`, realized by the settings
    /// `(0, pi/2, pi/4, -pi/4)`.
    pub fn standard(psi: f64) -> Result<Self> {
        Self::new(0.0, 2.0 * psi, psi, -psi)
    }

    pub fn arm1(&self) -> f64 { self.arm1 }
    pub fn arm1_alt(&self) -> f64 { self.arm1_alt }
    pub fn arm2(&self) -> f64 { self.arm2 }
    pub fn arm2_alt(&self) -> f64 { self.arm2_alt }

    /// Phase sum with both arms at their base setting.
    pub fn sum_base(&self) -> f64 { self.arm1 + self.arm2 }

    /// Phase sum with arm 1 switched to its alternate setting.
    pub fn sum_cross1(&self) -> f64 { self.arm1_alt + self.arm2 }

    /// Phase sum with arm 2 switched to its alternate setting.
    pub fn sum_cross2(&self) -> f64 { self.arm1 + self.arm2_alt }

    /// Phase sum with both arms at their alternate setting.
    pub fn sum_alt(&self) -> f64 { self.arm1_alt + self.arm2_alt }

    /// The four joint settings in the fixed order used by the Bell
    /// combination and by sampled-data records: `(base, cross1, cross2, alt)`
    /// as `(arm-1 phase, arm-2 phase)` pairs.
    pub fn settings(&self) -> [(f64, f64); 4] {
        [
            (self.arm1, self.arm2),
            (self.arm1_alt, self.arm2),
            (self.arm1, self.arm2_alt),
            (self.arm1_alt, self.arm2_alt),
        ]
    }
}

/// Coefficients of the closed-form binning probability.
///
/// `a` is the phase-dependent numerator; `b1..b3`, `c1..c3`, `d1`, `d2` are
/// the phase-independent coefficient set; `big_b = eta * cos^2(theta)` is the
/// effective conditioning-channel strength.
#[derive(Copy, Clone, Debug)]
pub struct ClosedFormCoefficients {
    pub a: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub d1: f64,
    pub d2: f64,
    pub big_b: f64,
}

impl ClosedFormCoefficients {
    /// Check the guard inequalities that make the closed form well defined:
    /// every `b_i` exceeds `|a|` (keeps the square roots real), the `b` and
    /// `d` coefficients are at least 1, and `big_b` lies in `(0, 1)`.
    ///
    /// These hold analytically for every valid parameter point, so a failure
    /// indicates an implementation bug, not a user error.
    pub fn check(&self) -> Result<()> {
        let abs_a = self.a.abs();
        for (name, b) in [("b1", self.b1), ("b2", self.b2), ("b3", self.b3)] {
            if b <= abs_a {
                return Err(Error::InternalInconsistency(format!(
                    "{name} = {b} <= |a| = {abs_a}"
                )));
            }
        }
        for (name, v) in [
            ("b1", self.b1),
            ("b2", self.b2),
            ("b3", self.b3),
            ("d1", self.d1),
            ("d2", self.d2),
        ] {
            if v < 1.0 - 1e-12 {
                return Err(Error::InternalInconsistency(format!("{name} = {v} < 1")));
            }
        }
        if self.big_b <= 0.0 || self.big_b >= 1.0 {
            return Err(Error::InternalInconsistency(format!(
                "big_b = {} outside (0, 1)",
                self.big_b
            )));
        }
        Ok(())
    }
}

/// The Bell statistics of one parameter point.
#[derive(Copy, Clone, Debug)]
pub struct BellResult {
    /// Probability that both binned homodyne outcomes are `+1`.
    pub p_pp: f64,
    /// Correlation at the base phase sum, `4 p_pp - 1`.
    pub e_corr: f64,
    /// CHSH combination (absolute value); violation iff `> 2`.
    pub b_chsh: f64,
    /// CH combination; violation iff `> 1`.
    pub b_ch: f64,
    /// Joint click probability, the conditional-data acquisition rate.
    pub p34: f64,
}

impl BellResult {
    /// Assemble a result and check its internal consistency: `p_pp` in
    /// `[0, 1/2]`, `|e_corr| <= 1`, `p34` in `(0, 1]`, and the algebraic tie
    /// `4 b_ch - 2 = +/- b_chsh` to 1e-12 (the `+` branch holds whenever the
    /// signed Bell combination is nonnegative, which covers the standard
    /// phase family near `psi = pi/4`).
    pub fn new(p_pp: f64, e_corr: f64, b_chsh: f64, b_ch: f64, p34: f64) -> Result<Self> {
        const SLACK: f64 = 1e-9;
        if !(-SLACK..=0.5 + SLACK).contains(&p_pp) {
            return Err(Error::InternalInconsistency(format!(
                "p_pp = {p_pp} outside [0, 1/2]"
            )));
        }
        if e_corr.abs() > 1.0 + SLACK {
            return Err(Error::InternalInconsistency(format!(
                "|E| = {} > 1",
                e_corr.abs()
            )));
        }
        if p34 <= 0.0 || p34 > 1.0 + SLACK {
            return Err(Error::InternalInconsistency(format!(
                "p34 = {p34} outside (0, 1]"
            )));
        }
        let tie = 4.0 * b_ch - 2.0;
        if (tie - b_chsh).abs() > 1e-12 && (tie + b_chsh).abs() > 1e-12 {
            return Err(Error::InternalInconsistency(format!(
                "4 b_ch - 2 = {tie} does not match +/- b_chsh = {b_chsh}"
            )));
        }
        Ok(Self { p_pp, e_corr, b_chsh, b_ch, p34 })
    }
}
