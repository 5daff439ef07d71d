//! The CHSH combination `S = C(a,b) - C(a,b') + C(a',b) + C(a',b')`.

mod lhv;
mod optimize;

use std::f64::consts::PI;

pub use lhv::{
    lhv_estimate_s, ContinuousStrategy, HiddenVariable, LhvEstimate, LhvStrategy,
    RandomStrategy, SignStrategy,
};
pub use optimize::{max_s_over_angles, violation_threshold, DEFAULT_GRID_RESOLUTION};

use crate::measurement::{correlation, correlation_from_table};
use crate::model::{Angle, SchmidtBeam};

/// The four analyzer angles `(a, a', b, b')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleSet {
    pub a: Angle,
    pub a_prime: Angle,
    pub b: Angle,
    pub b_prime: Angle,
}

impl AngleSet {
    pub fn new(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Self {
        AngleSet {
            a: Angle::new(a),
            a_prime: Angle::new(a_prime),
            b: Angle::new(b),
            b_prime: Angle::new(b_prime),
        }
    }

    /// `(0, pi/4, pi/8, 3pi/8)`, which reaches `2 sqrt 2` for a thermal beam.
    pub fn canonical() -> Self {
        AngleSet::new(0.0, PI / 4.0, PI / 8.0, 3.0 * PI / 8.0)
    }

    pub fn as_array(&self) -> [Angle; 4] {
        [self.a, self.a_prime, self.b, self.b_prime]
    }

    /// The four `(lab, function)` pairs in S order with their signs:
    /// `(a,b,+) (a,b',-) (a',b,+) (a',b',+)`.
    pub fn pairs(&self) -> [(Angle, Angle, f64); 4] {
        [
            (self.a, self.b, 1.0),
            (self.a, self.b_prime, -1.0),
            (self.a_prime, self.b, 1.0),
            (self.a_prime, self.b_prime, 1.0),
        ]
    }

    /// Every angle advanced by the same `phi`.
    pub fn shifted(&self, phi: f64) -> Self {
        AngleSet::new(
            self.a.radians() + phi,
            self.a_prime.radians() + phi,
            self.b.radians() + phi,
            self.b_prime.radians() + phi,
        )
    }
}

impl Default for AngleSet {
    fn default() -> Self {
        AngleSet::canonical()
    }
}

/// Combines four correlations, given in [`AngleSet::pairs`] order.
pub fn combine(correlations: [f64; 4]) -> f64 {
    correlations[0] - correlations[1] + correlations[2] + correlations[3]
}

/// An evaluated S with the correlations it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SValue {
    /// Four-correlation combination.
    pub s: f64,
    /// Trigonometric closed form, when available.
    pub closed_form: Option<f64>,
    pub angle_set: AngleSet,
    /// `[C(a,b), C(a,b'), C(a',b), C(a',b')]`.
    pub breakdown: [f64; 4],
}

impl SValue {
    pub fn from_correlations(angle_set: AngleSet, breakdown: [f64; 4]) -> Self {
        SValue {
            s: combine(breakdown),
            closed_form: None,
            angle_set,
            breakdown,
        }
    }
}

/// Closed-form S for a Schmidt beam:
///
/// ```text
/// S = 2 k1 k2 [sin 2a (sin 2b - sin 2b') + sin 2a' (sin 2b + sin 2b')]
///     + cos 2a (cos 2b - cos 2b') + cos 2a' (cos 2b + cos 2b')
/// ```
pub fn s_closed_form(beam: &SchmidtBeam, angles: &AngleSet) -> f64 {
    let sc = |x: Angle| (2.0 * x.radians()).sin_cos();
    let (sa, ca) = sc(angles.a);
    let (sap, cap) = sc(angles.a_prime);
    let (sb, cb) = sc(angles.b);
    let (sbp, cbp) = sc(angles.b_prime);
    beam.concurrence() * (sa * (sb - sbp) + sap * (sb + sbp)) + ca * (cb - cbp) + cap * (cb + cbp)
}

/// Evaluates S from the four table-based correlations and records the closed form beside it.
pub fn s_from_correlations(beam: &SchmidtBeam, angles: &AngleSet) -> SValue {
    let breakdown = angles
        .pairs()
        .map(|(x, y, _)| correlation_from_table(beam, x, y));
    SValue {
        s: combine(breakdown),
        closed_form: Some(s_closed_form(beam, angles)),
        angle_set: *angles,
        breakdown,
    }
}

/// S assembled from the closed-form correlation `C(a, b)`.
pub fn s_analytic(beam: &SchmidtBeam, angles: &AngleSet) -> f64 {
    combine(angles.pairs().map(|(x, y, _)| correlation(beam, x, y)))
}

/// `sqrt 2 (1 + 2 k1 k2)`, the value at [`AngleSet::canonical`].
pub fn s_canonical_law(beam: &SchmidtBeam) -> f64 {
    std::f64::consts::SQRT_2 * (1.0 + beam.concurrence())
}

/// `2 sqrt(1 + 4 k1^2 k2^2)`, the maximum of S over all angle sets.
pub fn s_max_law(beam: &SchmidtBeam) -> f64 {
    let c = beam.concurrence();
    2.0 * (1.0 + c * c).sqrt()
}
