//! Projection algebra on the Schmidt span.
//!
//! Analyzer angles are measured from the beam's own Schmidt axes `|u1>`,
//! `|f1>`. The rotated bases are
//!
//! ```text
//! |u1^a> = cos a |u1> - sin a |u2>
//! |u2^a> = sin a |u1> + cos a |u2>
//! ```
//!
//! and the same for `|f_l^b>`. In the fixed lab frame `|u_k^a>` therefore
//! points along `orientation - a + (k - 1) pi/2`; see [`analyzer_direction`].

use std::f64::consts::FRAC_PI_2;

use crate::model::{Angle, SchmidtBeam};

/// Rows are the rotated basis vectors `|x_1^theta>`, `|x_2^theta>` expressed
/// in the unrotated basis.
pub fn rotate_basis(theta: Angle) -> [[f64; 2]; 2] {
    let (s, c) = theta.radians().sin_cos();
    [[c, -s], [s, c]]
}

/// Fixed-frame angle of the lab analyzer vector `|u_k^a>`, `k` in `{1, 2}`.
pub fn analyzer_direction(beam: &SchmidtBeam, a: Angle, k: usize) -> Angle {
    debug_assert!(k == 1 || k == 2);
    let quarter = if k == 2 { FRAC_PI_2 } else { 0.0 };
    Angle::new(beam.lab_orientation().radians() - a.radians() + quarter)
}

/// Signed amplitudes `<u_k^a|<f_l^b|e>` of the normalized beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeTable {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl AmplitudeTable {
    pub fn get(&self, k: usize, l: usize) -> f64 {
        match (k, l) {
            (1, 1) => self.a11,
            (1, 2) => self.a12,
            (2, 1) => self.a21,
            (2, 2) => self.a22,
            _ => panic!("amplitude index ({k}, {l}) out of range"),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.a11 * self.a11 + self.a12 * self.a12 + self.a21 * self.a21 + self.a22 * self.a22
    }
}

/// The 2x2 table `P_kl(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointProbabilityTable {
    pub p11: f64,
    pub p12: f64,
    pub p21: f64,
    pub p22: f64,
    pub angle_a: Angle,
    pub angle_b: Angle,
}

impl JointProbabilityTable {
    pub fn get(&self, k: usize, l: usize) -> f64 {
        match (k, l) {
            (1, 1) => self.p11,
            (1, 2) => self.p12,
            (2, 1) => self.p21,
            (2, 2) => self.p22,
            _ => panic!("probability index ({k}, {l}) out of range"),
        }
    }

    pub fn total(&self) -> f64 {
        self.p11 + self.p12 + self.p21 + self.p22
    }

    /// `P_1(a)`, the lab-side row sum.
    pub fn lab_marginal(&self) -> f64 {
        self.p11 + self.p12
    }

    /// `P_1(b)`, the function-side column sum.
    pub fn function_marginal(&self) -> f64 {
        self.p11 + self.p21
    }

    /// `p11 - p12 - p21 + p22`.
    pub fn correlation(&self) -> f64 {
        self.p11 - self.p12 - self.p21 + self.p22
    }

    pub fn max_abs_diff(&self, other: &JointProbabilityTable) -> f64 {
        [
            self.p11 - other.p11,
            self.p12 - other.p12,
            self.p21 - other.p21,
            self.p22 - other.p22,
        ]
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()))
    }
}

/// `R(a) diag(k1, k2) R(b)^T`.
pub fn amplitudes(beam: &SchmidtBeam, a: Angle, b: Angle) -> AmplitudeTable {
    let [k1, k2] = beam.kappas();
    let (sa, ca) = a.radians().sin_cos();
    let (sb, cb) = b.radians().sin_cos();
    AmplitudeTable {
        a11: k1 * ca * cb + k2 * sa * sb,
        a12: k1 * ca * sb - k2 * sa * cb,
        a21: k1 * sa * cb - k2 * ca * sb,
        a22: k1 * sa * sb + k2 * ca * cb,
    }
}

pub fn joint_probabilities(beam: &SchmidtBeam, a: Angle, b: Angle) -> JointProbabilityTable {
    let amp = amplitudes(beam, a, b);
    JointProbabilityTable {
        p11: amp.a11 * amp.a11,
        p12: amp.a12 * amp.a12,
        p21: amp.a21 * amp.a21,
        p22: amp.a22 * amp.a22,
        angle_a: a,
        angle_b: b,
    }
}

/// Lab-space fraction `P_k(a) = |<u_k^a|e>|^2`.
pub fn marginal_probability(beam: &SchmidtBeam, a: Angle, k: usize) -> f64 {
    let [k1, k2] = beam.kappas();
    let (sa, ca) = a.radians().sin_cos();
    match k {
        1 => k1 * k1 * ca * ca + k2 * k2 * sa * sa,
        2 => k1 * k1 * sa * sa + k2 * k2 * ca * ca,
        _ => panic!("marginal index {k} out of range"),
    }
}

/// `A(a) = <e|A_a|e> = P_1(a) - P_2(a)`.
pub fn marginal_a(beam: &SchmidtBeam, a: Angle) -> f64 {
    marginal_probability(beam, a, 1) - marginal_probability(beam, a, 2)
}

/// `B(b) = <e|B_b|e>`, the function-space analogue of [`marginal_a`].
pub fn marginal_b(beam: &SchmidtBeam, b: Angle) -> f64 {
    // the Schmidt form is symmetric between the two spaces
    marginal_a(beam, b)
}

/// `C(a, b) = <e|A_a (x) B_b|e>` in closed form:
/// `cos 2a cos 2b + 2 k1 k2 sin 2a sin 2b`.
pub fn correlation(beam: &SchmidtBeam, a: Angle, b: Angle) -> f64 {
    let (s2a, c2a) = (2.0 * a.radians()).sin_cos();
    let (s2b, c2b) = (2.0 * b.radians()).sin_cos();
    c2a * c2b + beam.concurrence() * s2a * s2b
}

/// Correlation assembled from the four joint probabilities.
pub fn correlation_from_table(beam: &SchmidtBeam, a: Angle, b: Angle) -> f64 {
    joint_probabilities(beam, a, b).correlation()
}
