//! Two-space description of a partially polarized beam.
//!
//! A beam is held either in Schmidt form, `sqrt(I) (k1 |u1>|f1> + k2 |u2>|f2>)`,
//! or as the 2x2 second-moment (coherence) matrix of its field components in
//! the fixed `(h, v)` lab frame. The two are related by a closed-form 2x2
//! Hermitian eigen-solve.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance on `k1^2 + k2^2 = 1` for user-supplied coefficients.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Relative tolerance for positive semidefiniteness: `det >= -PSD_TOL * trace^2`.
pub const PSD_TOL: f64 = 1e-12;

/// `k1^2 - k2^2` below this is treated as a degenerate (thermal) decomposition.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// A polarizer or basis-rotation angle in radians, reduced modulo `pi` into `[0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    pub fn new(radians: f64) -> Self {
        let r = radians.rem_euclid(PI);
        // rem_euclid can round up to exactly pi for tiny negative inputs
        if r >= PI {
            Angle(0.0)
        } else {
            Angle(r)
        }
    }

    pub fn from_degrees(degrees: f64) -> Self {
        Angle::new(degrees.to_radians())
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }
}

impl From<f64> for Angle {
    fn from(radians: f64) -> Self {
        Angle::new(radians)
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} rad", self.0)
    }
}

/// Normalized Schmidt form of a beam plus its total intensity.
///
/// Construction enforces `kappa1 >= kappa2 >= 0` and `kappa1^2 + kappa2^2 = 1`.
/// When the two coefficients coincide the Schmidt axes are arbitrary; the
/// orientation is then pinned to zero and [`SchmidtBeam::orientation_unique`]
/// returns `false`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchmidtBeam {
    kappa1: f64,
    kappa2: f64,
    lab_orientation: Angle,
    intensity: f64,
    orientation_unique: bool,
}

impl SchmidtBeam {
    /// Builds a beam from Schmidt coefficients. If `kappa1 < kappa2` the labels
    /// are swapped and the orientation advanced by a quarter turn, which
    /// describes the same field.
    pub fn new(kappa1: f64, kappa2: f64, orientation: f64, intensity: f64) -> Result<Self> {
        if !(kappa1.is_finite() && kappa2.is_finite() && orientation.is_finite()) {
            return Err(Error::InvalidBeam("non-finite parameter".into()));
        }
        if kappa1 < 0.0 || kappa2 < 0.0 {
            return Err(Error::InvalidBeam(format!(
                "Schmidt coefficients must be nonnegative (got {kappa1}, {kappa2})"
            )));
        }
        let norm = kappa1 * kappa1 + kappa2 * kappa2;
        if (norm - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidBeam(format!(
                "kappa1^2 + kappa2^2 = {norm}, expected 1"
            )));
        }
        Self::from_kappa1_sq(kappa1 * kappa1 / norm, orientation, intensity)
    }

    /// Builds a beam from `kappa1^2` in `[0, 1]`; `kappa2^2 = 1 - kappa1^2`.
    pub fn from_kappa1_sq(kappa1_sq: f64, orientation: f64, intensity: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&kappa1_sq) {
            return Err(Error::InvalidBeam(format!(
                "kappa1^2 must lie in [0, 1] (got {kappa1_sq})"
            )));
        }
        if !orientation.is_finite() {
            return Err(Error::InvalidBeam("orientation must be finite".into()));
        }
        if !(intensity.is_finite() && intensity >= 0.0) {
            return Err(Error::InvalidBeam(format!(
                "intensity must be finite and nonnegative (got {intensity})"
            )));
        }
        let (big, small, orientation) = if kappa1_sq >= 0.5 {
            (kappa1_sq, 1.0 - kappa1_sq, orientation)
        } else {
            (1.0 - kappa1_sq, kappa1_sq, orientation + PI / 2.0)
        };
        Ok(Self::from_ordered_squares(big, small, orientation, intensity))
    }

    /// The exactly thermal (unpolarized, maximally entangled) beam.
    pub fn thermal(intensity: f64) -> Result<Self> {
        Self::from_kappa1_sq(0.5, 0.0, intensity)
    }

    /// Callers guarantee `big >= small >= 0`.
    fn from_ordered_squares(big: f64, small: f64, orientation: f64, intensity: f64) -> Self {
        let k1 = big.sqrt();
        let k2 = small.max(0.0).sqrt();
        let h = k1.hypot(k2);
        let (kappa1, kappa2) = (k1 / h, k2 / h);
        let degenerate = big - small <= DEGENERACY_TOL;
        SchmidtBeam {
            kappa1,
            kappa2,
            lab_orientation: if degenerate {
                Angle::ZERO
            } else {
                Angle::new(orientation)
            },
            intensity,
            orientation_unique: !degenerate,
        }
    }

    pub fn kappa1(&self) -> f64 {
        self.kappa1
    }

    pub fn kappa2(&self) -> f64 {
        self.kappa2
    }

    pub fn kappas(&self) -> [f64; 2] {
        [self.kappa1, self.kappa2]
    }

    /// Angle of `|u1>` measured from the fixed `h` axis.
    pub fn lab_orientation(&self) -> Angle {
        self.lab_orientation
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn orientation_unique(&self) -> bool {
        self.orientation_unique
    }

    pub fn with_intensity(&self, intensity: f64) -> Result<Self> {
        if !(intensity.is_finite() && intensity >= 0.0) {
            return Err(Error::InvalidBeam(format!(
                "intensity must be finite and nonnegative (got {intensity})"
            )));
        }
        Ok(SchmidtBeam { intensity, ..*self })
    }

    pub fn is_separable(&self) -> bool {
        self.kappa2 == 0.0
    }

    pub fn degree_of_polarization(&self) -> f64 {
        degree_of_polarization(self)
    }

    pub fn concurrence(&self) -> f64 {
        concurrence(self)
    }
}

/// Hermitian second-moment matrix `[[<E_h E_h*>, <E_h E_v*>], [c.c., <E_v E_v*>]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceMatrix {
    j11: f64,
    j22: f64,
    j12: Complex64,
}

impl CoherenceMatrix {
    /// Validates finiteness, nonnegative diagonal and positive semidefiniteness.
    pub fn new(j11: f64, j22: f64, j12: Complex64) -> Result<Self> {
        if !(j11.is_finite() && j22.is_finite() && j12.re.is_finite() && j12.im.is_finite()) {
            return Err(Error::InvalidArgument("coherence matrix entries must be finite".into()));
        }
        if j11 < 0.0 || j22 < 0.0 {
            return Err(Error::NotPsd {
                det: j11 * j22 - j12.norm_sqr(),
                trace: j11 + j22,
            });
        }
        let m = CoherenceMatrix { j11, j22, j12 };
        let (det, trace) = (m.det(), m.trace());
        if det < -PSD_TOL * trace * trace {
            return Err(Error::NotPsd { det, trace });
        }
        Ok(m)
    }

    pub fn real(j11: f64, j22: f64, j12: f64) -> Result<Self> {
        Self::new(j11, j22, Complex64::new(j12, 0.0))
    }

    pub fn j11(&self) -> f64 {
        self.j11
    }

    pub fn j22(&self) -> f64 {
        self.j22
    }

    pub fn j12(&self) -> Complex64 {
        self.j12
    }

    pub fn j21(&self) -> Complex64 {
        self.j12.conj()
    }

    pub fn trace(&self) -> f64 {
        self.j11 + self.j22
    }

    pub fn det(&self) -> f64 {
        self.j11 * self.j22 - self.j12.norm_sqr()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.j11 * factor, self.j22 * factor, self.j12 * factor)
    }

    /// Descending eigenvalues from the characteristic polynomial. The smaller
    /// root is taken as `det / larger` to avoid cancellation.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let tr = self.trace();
        let half_gap = 0.5 * (self.j11 - self.j22).hypot(2.0 * self.j12.norm());
        let big = 0.5 * tr + half_gap;
        let small = if big > 0.0 { self.det() / big } else { 0.0 };
        [big, small]
    }

    /// Textbook degree of polarization `sqrt(1 - 4 det / trace^2)`.
    pub fn degree_of_polarization(&self) -> f64 {
        let tr = self.trace();
        (1.0 - 4.0 * self.det() / (tr * tr)).clamp(0.0, 1.0).sqrt()
    }
}

/// Schmidt decomposition of a coherence matrix.
///
/// The orientation is the azimuth `0.5 * atan2(2 Re j12, j11 - j22)` of the
/// dominant eigenvector. For real `j12` that is exactly the eigenvector angle;
/// for complex `j12` the eigenbasis is elliptical and only its azimuth is kept.
pub fn schmidt_decompose(j: &CoherenceMatrix) -> Result<SchmidtBeam> {
    let trace = j.trace();
    if !(trace > 0.0) {
        return Err(Error::ZeroIntensity { trace });
    }
    let det = j.det();
    if det < -PSD_TOL * trace * trace || j.j11 < 0.0 || j.j22 < 0.0 {
        return Err(Error::NotPsd { det, trace });
    }
    let [big, small] = j.eigenvalues();
    let big_sq = big / trace;
    let small_sq = (small / trace).max(0.0);
    let orientation = 0.5 * (2.0 * j.j12.re).atan2(j.j11 - j.j22);
    let norm = big_sq + small_sq;
    Ok(SchmidtBeam::from_ordered_squares(
        big_sq / norm,
        small_sq / norm,
        orientation,
        trace,
    ))
}

/// `I * R(theta) diag(k1^2, k2^2) R(theta)^T` with `R(theta)` the rotation
/// whose columns are `u1`, `u2` in the fixed frame.
pub fn to_coherence(beam: &SchmidtBeam) -> CoherenceMatrix {
    let (s, c) = beam.lab_orientation.radians().sin_cos();
    let (p1, p2) = (beam.kappa1 * beam.kappa1, beam.kappa2 * beam.kappa2);
    let i = beam.intensity;
    CoherenceMatrix {
        j11: i * (p1 * c * c + p2 * s * s),
        j22: i * (p1 * s * s + p2 * c * c),
        j12: Complex64::new(i * (p1 - p2) * c * s, 0.0),
    }
}

/// `k1^2 - k2^2`.
pub fn degree_of_polarization(beam: &SchmidtBeam) -> f64 {
    beam.kappa1 * beam.kappa1 - beam.kappa2 * beam.kappa2
}

/// `2 k1 k2`, the entanglement monotone of the two-space state.
pub fn concurrence(beam: &SchmidtBeam) -> f64 {
    2.0 * beam.kappa1 * beam.kappa2
}
