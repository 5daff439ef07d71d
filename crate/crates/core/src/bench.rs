//! Virtual optics bench for the intensity-only measurement of `P_kl(a, b)`.
//!
//! ```text
//!            +--> M1 --> pol u_k^a --------------------+
//!  E_in --> BS1                                        BS2 (50:50) --> detector
//!            +--> pol u_1^s --> M2 --> pol u_k^a ------+
//! ```
//!
//! The test arm measures `I` and `I_k^a`. The reference arm is stripped of
//! its `f_2^b` component by the polarizer at the stripping angle `s`, then
//! analyzed along `u_k^a`. Recombining the two arms gives `I_k^T`, whose
//! interference term fixes `|A_k1|`. Every reflection, at BS1 and at BS2,
//! multiplies the field by the same phase (`i` by default).
//!
//! Fields are `2 x 2` complex matrices: fixed lab axis `(h, v)` by Schmidt
//! function `(f_1, f_2)`. In analytic mode the detected intensity is the
//! Frobenius norm (the functions are orthonormal); in Monte Carlo mode each
//! realization is propagated and its instantaneous power averaged.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::io::{self, Write};

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::chsh::{AngleSet, SValue};
use crate::error::{Error, Result};
use crate::format::fmt12;
use crate::measurement::analyzer_direction;
use crate::model::{Angle, SchmidtBeam};
use crate::stats::{substream, BlockSums, JACKKNIFE_BLOCKS};
use crate::stochastic::{sample_ensemble, EnsembleConfig};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I_UNIT: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Tolerance below which `2 I_k^T - I_k1^ab - I_k^a` is treated as zero, relative to `I`.
pub const INTERFERENCE_TOL: f64 = 1e-12;
/// Recovered probabilities may undershoot zero by this much before the readings are rejected.
pub const CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpticalElement {
    /// Returns `(transmitted, reflected)`; the reflected port picks up the reflection phase.
    BeamSplitter { transmittance: f64 },
    /// Passes the lab component along the given fixed-frame direction.
    Polarizer { angle: Angle },
    Mirror,
    /// Exactly 50:50; output port `(E_1 + phase E_2) / sqrt 2`.
    Combiner,
}

/// A field on the bench.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchBeam {
    field: [[Complex64; 2]; 2],
}

impl BenchBeam {
    /// The beam `sqrt(I) sum_j k_j |u_j>|f_j>` in the fixed lab frame.
    pub fn from_schmidt(beam: &SchmidtBeam) -> Self {
        let (s, c) = beam.lab_orientation().radians().sin_cos();
        let r = beam.intensity().sqrt();
        let [k1, k2] = beam.kappas();
        BenchBeam {
            field: [
                [Complex64::new(r * k1 * c, 0.0), Complex64::new(-r * k2 * s, 0.0)],
                [Complex64::new(r * k1 * s, 0.0), Complex64::new(r * k2 * c, 0.0)],
            ],
        }
    }

    /// A single realization carrying fixed-frame field values `(E_h, E_v)`.
    pub fn realization(e_h: Complex64, e_v: Complex64) -> Self {
        BenchBeam {
            field: [[e_h, ZERO], [e_v, ZERO]],
        }
    }

    pub fn field(&self) -> &[[Complex64; 2]; 2] {
        &self.field
    }

    /// Ensemble-average intensity (orthonormal function basis).
    pub fn intensity(&self) -> f64 {
        self.field.iter().flatten().map(|z| z.norm_sqr()).sum()
    }

    /// Instantaneous power of a realization: the function contributions add coherently.
    pub fn realized_power(&self) -> f64 {
        self.field.iter().map(|row| (row[0] + row[1]).norm_sqr()).sum()
    }

    /// Unit lab vector when the field is confined to one real lab direction.
    pub fn lab_vector(&self) -> Option<[f64; 2]> {
        let (h, v) = (
            self.field[0][0].norm_sqr() + self.field[0][1].norm_sqr(),
            self.field[1][0].norm_sqr() + self.field[1][1].norm_sqr(),
        );
        let total = h + v;
        if total == 0.0 {
            return None;
        }
        let cross = self.field[0][0] * self.field[1][0].conj() + self.field[0][1] * self.field[1][1].conj();
        // rank one with a real direction iff |cross|^2 = h v and cross is real
        if (cross.norm_sqr() - h * v).abs() > 1e-12 * total * total || cross.im.abs() > 1e-12 * total {
            return None;
        }
        let angle = 0.5 * (2.0 * cross.re).atan2(h - v);
        Some([angle.cos(), angle.sin()])
    }

    /// Normalized amplitudes on `(f_1^b, f_2^b)` of a single-direction beam,
    /// with the global phase divided out.
    pub fn function_amplitudes(&self, b: Angle) -> Option<[f64; 2]> {
        let dir = self.lab_vector()?;
        let proj = [0, 1].map(|l| self.field[0][l] * dir[0] + self.field[1][l] * dir[1]);
        let (sb, cb) = b.radians().sin_cos();
        // f_1^b = cos b f_1 - sin b f_2, f_2^b = sin b f_1 + cos b f_2
        let fb = [cb * proj[0] - sb * proj[1], sb * proj[0] + cb * proj[1]];
        let phase = self.global_phase();
        let norm = self.intensity().sqrt();
        Some(fb.map(|z| (z * phase.conj()).re / norm))
    }

    /// Phase of the largest entry.
    pub fn global_phase(&self) -> Complex64 {
        let big = self
            .field
            .iter()
            .flatten()
            .fold(ZERO, |m, z| if z.norm_sqr() > m.norm_sqr() { *z } else { m });
        if big == ZERO {
            Complex64::new(1.0, 0.0)
        } else {
            big / big.norm()
        }
    }

    fn scaled(&self, factor: Complex64) -> Self {
        BenchBeam {
            field: self.field.map(|row| row.map(|z| z * factor)),
        }
    }

    fn polarized(&self, angle: Angle) -> Self {
        let (s, c) = angle.radians().sin_cos();
        let mut out = self.field;
        for l in 0..2 {
            let along = self.field[0][l] * c + self.field[1][l] * s;
            out[0][l] = along * c;
            out[1][l] = along * s;
        }
        BenchBeam { field: out }
    }

    fn plus(&self, other: &BenchBeam) -> Self {
        let mut out = self.field;
        for (row, orow) in out.iter_mut().zip(&other.field) {
            for (z, o) in row.iter_mut().zip(orow) {
                *z += o;
            }
        }
        BenchBeam { field: out }
    }
}

impl OpticalElement {
    /// Single-output elements: polarizer and mirror.
    pub fn apply(&self, input: &BenchBeam) -> BenchBeam {
        match *self {
            OpticalElement::Polarizer { angle } => input.polarized(angle),
            // every arm carries one mirror; a common phase drops out
            OpticalElement::Mirror => *input,
            OpticalElement::BeamSplitter { .. } | OpticalElement::Combiner => {
                panic!("{self:?} is not a single-input single-output element")
            }
        }
    }

    pub fn split(&self, input: &BenchBeam, phase: Complex64) -> (BenchBeam, BenchBeam) {
        match *self {
            OpticalElement::BeamSplitter { transmittance } => (
                input.scaled(Complex64::new(transmittance.sqrt(), 0.0)),
                input.scaled(phase * (1.0 - transmittance).sqrt()),
            ),
            _ => panic!("{self:?} is not a beam splitter"),
        }
    }

    /// Output `(first + phase * second) / sqrt 2` of the 50:50 combiner.
    pub fn combine(&self, first: &BenchBeam, second: &BenchBeam, phase: Complex64) -> BenchBeam {
        match self {
            OpticalElement::Combiner => first
                .plus(&second.scaled(phase))
                .scaled(Complex64::new(FRAC_1_SQRT_2, 0.0)),
            _ => panic!("{self:?} is not a combiner"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    /// BS1 transmittance, in `(0, 1)`.
    pub transmittance: f64,
    /// Phase acquired on every reflection.
    pub reflection_phase: Complex64,
    /// Relative standard deviation of additive Gaussian detector noise, scaled by `I`.
    pub noise_sigma: Option<f64>,
    pub noise_seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            transmittance: 0.5,
            reflection_phase: I_UNIT,
            noise_sigma: None,
            noise_seed: 0,
        }
    }
}

impl BenchOptions {
    fn validate(&self) -> Result<()> {
        if !(self.transmittance > 0.0 && self.transmittance < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "BS1 transmittance must lie in (0, 1) (got {})",
                self.transmittance
            )));
        }
        if (self.reflection_phase.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("reflection phase must be unimodular".into()));
        }
        if let Some(s) = self.noise_sigma {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidArgument(format!("noise sigma must be >= 0 (got {s})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMode {
    Analytic,
    MonteCarlo,
}

/// Intensities recorded for one `(a, b, k)` setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReadings {
    pub a: Angle,
    pub b: Angle,
    pub k: usize,
    /// `I`, the test-arm beam after BS1.
    pub i_total: f64,
    /// `I_k^a`, test arm after the analyzer.
    pub i_k_a: f64,
    /// `I_1^s`, reference arm after the stripping polarizer.
    pub i_1_s: f64,
    /// `I_k1^ab`, stripped reference arm after the analyzer.
    pub i_k1_ab: f64,
    /// `I_k^T`, recombined output.
    pub i_k_t: f64,
}

impl BenchReadings {
    fn from_array(a: Angle, b: Angle, k: usize, v: &[f64]) -> Self {
        BenchReadings {
            a,
            b,
            k,
            i_total: v[0],
            i_k_a: v[1],
            i_1_s: v[2],
            i_k1_ab: v[3],
            i_k_t: v[4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveredProbabilities {
    pub p_k1: f64,
    pub p_k2: f64,
    /// The interference term vanished to within tolerance and `p_k1` was set to zero.
    pub degenerate: bool,
}

/// Kappas and orientation recovered from a polarizer scan.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationScan {
    pub kappa1: f64,
    pub kappa2: f64,
    pub orientation: Angle,
    /// `(polarizer angle, transmitted intensity)` per scan point.
    pub samples: Vec<(Angle, f64)>,
}

/// Scans an analyzer over `scan_points` equally spaced angles in `[0, pi)` and
/// fits the Malus form `I (k1^2 cos^2(t - t0) + k2^2 sin^2(t - t0))`.
///
/// The form has only a constant and a second harmonic, which equispaced
/// points integrate exactly, so the fit is exact: `k1^2 = I_max / (I_max + I_min)`
/// and `t0` is the phase of the second harmonic.
pub fn characterize_polarization(beam: &SchmidtBeam, scan_points: usize) -> Result<PolarizationScan> {
    if scan_points < 8 {
        return Err(Error::InvalidArgument(format!(
            "scan needs at least 8 points (got {scan_points})"
        )));
    }
    let input = BenchBeam::from_schmidt(beam);
    let samples: Vec<(Angle, f64)> = (0..scan_points)
        .map(|i| {
            let t = Angle::new(i as f64 * PI / scan_points as f64);
            (t, OpticalElement::Polarizer { angle: t }.apply(&input).intensity())
        })
        .collect();
    let n = scan_points as f64;
    let mean = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let (mut c2, mut s2) = (0.0, 0.0);
    for &(t, v) in &samples {
        let (s, c) = (2.0 * t.radians()).sin_cos();
        c2 += v * c;
        s2 += v * s;
    }
    let (c2, s2) = (2.0 * c2 / n, 2.0 * s2 / n);
    let amp = c2.hypot(s2);
    if !(mean > 0.0) || amp <= 1e-12 * mean {
        return Err(Error::DegenerateScan);
    }
    let (i_max, i_min) = (mean + amp, (mean - amp).max(0.0));
    let k1_sq = i_max / (i_max + i_min);
    Ok(PolarizationScan {
        kappa1: k1_sq.sqrt(),
        kappa2: (1.0 - k1_sq).max(0.0).sqrt(),
        orientation: Angle::new(0.5 * s2.atan2(c2)),
        samples,
    })
}

/// Output of BS1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bs1Split {
    pub transmitted: SchmidtBeam,
    pub reflected: SchmidtBeam,
    /// Phase carried by the reflected beam.
    pub reflected_phase: Complex64,
}

/// Both outputs keep the input's Schmidt coefficients and orientation.
pub fn split_bs1(beam: &SchmidtBeam, transmittance: f64) -> Result<Bs1Split> {
    if !(transmittance > 0.0 && transmittance < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "transmittance must lie in (0, 1) (got {transmittance})"
        )));
    }
    Ok(Bs1Split {
        transmitted: beam.with_intensity(transmittance * beam.intensity())?,
        reflected: beam.with_intensity((1.0 - transmittance) * beam.intensity())?,
        reflected_phase: I_UNIT,
    })
}

/// Lab rotation `s` with `tan s = (k1 / k2) tan b` whose analyzer `u_1^s`
/// removes the `f_2^b` component. Computed as `atan2(k1 sin b, k2 cos b)`.
pub fn stripping_angle(beam: &SchmidtBeam, b: Angle) -> Result<Angle> {
    if beam.is_separable() {
        return Err(Error::SeparableBeam);
    }
    let (sb, cb) = b.radians().sin_cos();
    Ok(Angle::new((beam.kappa1() * sb).atan2(beam.kappa2() * cb)))
}

/// Amplitudes `(on f_1^b, on f_2^b)` of `<u_1^s|e>`, the normalized beam after
/// the stripping polarizer.
pub fn stripped_amplitudes(beam: &SchmidtBeam, s: Angle, b: Angle) -> (f64, f64) {
    let (ss, cs) = s.radians().sin_cos();
    let (sb, cb) = b.radians().sin_cos();
    let [k1, k2] = beam.kappas();
    (k1 * cs * cb + k2 * ss * sb, k1 * cs * sb - k2 * ss * cb)
}

/// Polarizer directions of one `(a, b, k)` setting.
#[derive(Debug, Clone, Copy)]
struct Setting {
    analyzer: Angle,
    stripper: Angle,
}

impl Setting {
    fn new(beam: &SchmidtBeam, a: Angle, b: Angle, k: usize) -> Result<Self> {
        if k != 1 && k != 2 {
            return Err(Error::InvalidArgument(format!("k must be 1 or 2 (got {k})")));
        }
        let s = stripping_angle(beam, b)?;
        Ok(Setting {
            analyzer: analyzer_direction(beam, a, k),
            // u_1^s sits at orientation - s
            stripper: analyzer_direction(beam, s, 1),
        })
    }

    /// `[I, I_k^a, I_1^s, I_k1^ab, I_k^T]` for one input field.
    fn propagate(&self, input: &BenchBeam, opts: &BenchOptions, detect: fn(&BenchBeam) -> f64) -> [f64; 5] {
        let phase = opts.reflection_phase;
        let bs1 = OpticalElement::BeamSplitter {
            transmittance: opts.transmittance,
        };
        let (test, reference) = bs1.split(input, phase);
        let analyzer = OpticalElement::Polarizer { angle: self.analyzer };

        let test_k = analyzer.apply(&OpticalElement::Mirror.apply(&test));
        let stripped = OpticalElement::Polarizer { angle: self.stripper }.apply(&reference);
        let reference_k = analyzer.apply(&OpticalElement::Mirror.apply(&stripped));
        let out = OpticalElement::Combiner.combine(&reference_k, &test_k, phase);
        [
            detect(&test),
            detect(&test_k),
            detect(&stripped),
            detect(&reference_k),
            detect(&out),
        ]
    }
}

fn add_noise(values: &mut [f64], opts: &BenchOptions, stream: u64) {
    if let Some(sigma) = opts.noise_sigma.filter(|s| *s > 0.0) {
        let mut rng = substream(opts.noise_seed, stream);
        let scale = sigma * values[0];
        for v in values.iter_mut() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *v = (*v + scale * n).max(0.0);
        }
    }
}

fn ensemble_for(beam: &SchmidtBeam, mode: BenchMode, mc: Option<&EnsembleConfig>) -> Result<Option<EnsembleConfig>> {
    match (mode, mc) {
        (BenchMode::Analytic, _) => Ok(None),
        (BenchMode::MonteCarlo, None) => Err(Error::EnsembleRequired),
        // the bench always samples the beam under test
        (BenchMode::MonteCarlo, Some(cfg)) => Ok(Some(EnsembleConfig { beam: *beam, ..*cfg })),
    }
}

/// Readings of every setting, `5` values each, with block sums in Monte Carlo mode.
fn run_settings(
    beam: &SchmidtBeam,
    settings: &[Setting],
    opts: &BenchOptions,
    ensemble: Option<EnsembleConfig>,
) -> Result<(Vec<f64>, Option<BlockSums>)> {
    match ensemble {
        None => {
            let input = BenchBeam::from_schmidt(beam);
            let values = settings
                .iter()
                .flat_map(|s| s.propagate(&input, opts, BenchBeam::intensity))
                .collect();
            Ok((values, None))
        }
        Some(cfg) => {
            let ens = sample_ensemble(&cfg)?;
            let (so, co) = ens.orientation().radians().sin_cos();
            let blocks = BlockSums::accumulate(ens.len(), JACKKNIFE_BLOCKS, 5 * settings.len(), |i, out| {
                let [e1, e2] = ens.lab_fields(i);
                let input = BenchBeam::realization(co * e1 - so * e2, so * e1 + co * e2);
                for (s, chunk) in settings.iter().zip(out.chunks_exact_mut(5)) {
                    chunk.copy_from_slice(&s.propagate(&input, opts, BenchBeam::realized_power));
                }
            });
            Ok((blocks.means(), Some(blocks)))
        }
    }
}

/// Simulates one `(a, b, k)` setting and records all five intensities.
pub fn run_bench(
    beam: &SchmidtBeam,
    a: Angle,
    b: Angle,
    k: usize,
    mode: BenchMode,
    mc: Option<&EnsembleConfig>,
    opts: &BenchOptions,
) -> Result<BenchReadings> {
    opts.validate()?;
    let setting = Setting::new(beam, a, b, k)?;
    let ensemble = ensemble_for(beam, mode, mc)?;
    let (mut values, _) = run_settings(beam, &[setting], opts, ensemble)?;
    add_noise(&mut values, opts, k as u64);
    Ok(BenchReadings::from_array(a, b, k, &values))
}

/// Inverts the four intensities:
///
/// ```text
/// p_k1 = (2 I_k^T - I_k1^ab - I_k^a)^2 / (4 I I_k1^ab)
/// p_k2 = I_k^a / I - p_k1
/// ```
pub fn recover_probabilities(readings: &BenchReadings) -> Result<RecoveredProbabilities> {
    let r = readings;
    if !(r.i_k1_ab > 0.0) {
        return Err(Error::ZeroReferenceIntensity(r.i_k1_ab));
    }
    if !(r.i_total > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "total intensity must be positive (got {})",
            r.i_total
        )));
    }
    let interference = 2.0 * r.i_k_t - r.i_k1_ab - r.i_k_a;
    let degenerate = interference.abs() <= INTERFERENCE_TOL * r.i_total;
    let p_k1 = if degenerate {
        0.0
    } else {
        interference * interference / (4.0 * r.i_total * r.i_k1_ab)
    };
    let p_k2 = r.i_k_a / r.i_total - p_k1;
    for (index, value) in [(1, p_k1), (2, p_k2)] {
        if !(-CONSISTENCY_TOL..=1.0 + CONSISTENCY_TOL).contains(&value) {
            return Err(Error::InconsistentReadings { index, value });
        }
    }
    Ok(RecoveredProbabilities {
        p_k1: p_k1.clamp(0.0, 1.0),
        p_k2: p_k2.clamp(0.0, 1.0),
        degenerate,
    })
}

/// Readings and recovered probabilities of one bench run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub readings: BenchReadings,
    pub recovered: RecoveredProbabilities,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchChsh {
    pub s_value: SValue,
    /// Jackknife standard error of S in Monte Carlo mode.
    pub standard_error: Option<f64>,
    /// Eight rows: per angle pair in [`AngleSet::pairs`] order, `k = 1` then `k = 2`.
    pub rows: Vec<BenchRow>,
}

fn correlation_from_rows(rows: &[RecoveredProbabilities]) -> f64 {
    // k = 1 row: (p11, p12); k = 2 row: (p21, p22)
    rows[0].p_k1 - rows[0].p_k2 - rows[1].p_k1 + rows[1].p_k2
}

fn recover_all(pairs: &[(Angle, Angle)], values: &[f64]) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(2 * pairs.len());
    for (idx, chunk) in values.chunks_exact(5).enumerate() {
        let (a, b) = pairs[idx / 2];
        let readings = BenchReadings::from_array(a, b, idx % 2 + 1, chunk);
        rows.push(BenchRow {
            readings,
            recovered: recover_probabilities(&readings)?,
        });
    }
    Ok(rows)
}

fn s_from_rows(rows: &[BenchRow]) -> [f64; 4] {
    let rec: Vec<RecoveredProbabilities> = rows.iter().map(|r| r.recovered).collect();
    [0, 1, 2, 3].map(|p| correlation_from_rows(&rec[2 * p..2 * p + 2]))
}

/// Runs the bench for all four angle pairs and both analyzer outputs and
/// assembles S from the recovered tables.
pub fn bench_chsh(
    beam: &SchmidtBeam,
    angles: &AngleSet,
    mode: BenchMode,
    mc: Option<&EnsembleConfig>,
    opts: &BenchOptions,
) -> Result<BenchChsh> {
    opts.validate()?;
    let pairs: Vec<(Angle, Angle)> = angles.pairs().iter().map(|&(a, b, _)| (a, b)).collect();
    let mut settings = Vec::with_capacity(8);
    for &(a, b) in &pairs {
        for k in 1..=2 {
            settings.push(Setting::new(beam, a, b, k)?);
        }
    }
    let ensemble = ensemble_for(beam, mode, mc)?;
    let (mut values, blocks) = run_settings(beam, &settings, opts, ensemble)?;
    for (i, chunk) in values.chunks_exact_mut(5).enumerate() {
        add_noise(chunk, opts, i as u64);
    }
    let rows = recover_all(&pairs, &values)?;
    let breakdown = s_from_rows(&rows);
    let standard_error = blocks.map(|b| {
        b.jackknife(|means| match recover_all(&pairs, means) {
            Ok(r) => crate::chsh::combine(s_from_rows(&r)),
            Err(_) => f64::NAN,
        })
        .standard_error
    });
    Ok(BenchChsh {
        s_value: SValue::from_correlations(*angles, breakdown),
        standard_error,
        rows,
    })
}

pub const BENCH_CSV_HEADER: &str = "a,b,k,I,I_k_a,I_1_s,I_k1_ab,I_k_T,p_k1,p_k2";

/// Writes the bench report with 12 significant digits.
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{BENCH_CSV_HEADER}")?;
    for row in rows {
        let r = &row.readings;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt12(r.a.radians()),
            fmt12(r.b.radians()),
            r.k,
            fmt12(r.i_total),
            fmt12(r.i_k_a),
            fmt12(r.i_1_s),
            fmt12(r.i_k1_ab),
            fmt12(r.i_k_t),
            fmt12(row.recovered.p_k1),
            fmt12(row.recovered.p_k2),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chsh::s_from_correlations;
    use crate::measurement::{amplitudes, joint_probabilities};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::SQRT_2;

    fn beam(k1sq: f64, orientation: f64) -> SchmidtBeam {
        SchmidtBeam::from_kappa1_sq(k1sq, orientation, 1.0).unwrap()
    }

    fn analytic(beam: &SchmidtBeam, a: f64, b: f64, k: usize) -> BenchReadings {
        run_bench(
            beam,
            Angle::new(a),
            Angle::new(b),
            k,
            BenchMode::Analytic,
            None,
            &BenchOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn characterize_examples() {
        let scan = characterize_polarization(&beam(0.7, PI / 6.0), 16).unwrap();
        assert_abs_diff_eq!(scan.kappa1, 0.7f64.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(scan.kappa2, 0.3f64.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(scan.orientation.radians(), PI / 6.0, epsilon = 1e-9);

        let scan = characterize_polarization(&beam(1.0, 0.0), 8).unwrap();
        let (t, min) = scan
            .samples
            .iter()
            .cloned()
            .fold((Angle::ZERO, f64::INFINITY), |m, s| if s.1 < m.1 { s } else { m });
        assert_abs_diff_eq!(min, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.radians(), PI / 2.0, epsilon = 1e-15);

        assert_eq!(characterize_polarization(&beam(0.5, 0.0), 12), Err(Error::DegenerateScan));
        assert!(characterize_polarization(&beam(0.7, 0.0), 4).is_err());
    }

    #[test]
    fn split_examples() {
        let b = SchmidtBeam::from_kappa1_sq(0.6, 0.2, 2.0).unwrap();
        let sp = split_bs1(&b, 0.5).unwrap();
        assert_eq!((sp.transmitted.intensity(), sp.reflected.intensity()), (1.0, 1.0));
        assert_eq!(sp.transmitted.kappas(), b.kappas());
        assert_eq!(sp.reflected.lab_orientation(), b.lab_orientation());
        assert_eq!(sp.reflected_phase, I_UNIT);
        let sp = split_bs1(&b.with_intensity(1.0).unwrap(), 0.7).unwrap();
        assert_abs_diff_eq!(sp.transmitted.intensity(), 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(sp.reflected.intensity(), 0.3, epsilon = 1e-15);
        assert!(split_bs1(&b, 1.0).is_err());
    }

    #[test]
    fn stripping_examples() {
        let thermal = beam(0.5, 0.0);
        assert_abs_diff_eq!(
            stripping_angle(&thermal, Angle::new(PI / 8.0)).unwrap().radians(),
            PI / 8.0,
            epsilon = 1e-15
        );
        let b = beam(0.9, 0.0);
        assert_eq!(stripping_angle(&b, Angle::ZERO).unwrap(), Angle::ZERO);
        assert_abs_diff_eq!(
            stripping_angle(&b, Angle::new(PI / 2.0)).unwrap().radians(),
            PI / 2.0,
            epsilon = 1e-15
        );
        let s = stripping_angle(&b, Angle::new(PI / 8.0)).unwrap();
        assert_abs_diff_eq!(s.radians(), (3.0 * (PI / 8.0).tan()).atan(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.radians(), 0.893173, epsilon = 1e-6);
        assert!(stripped_amplitudes(&b, s, Angle::new(PI / 8.0)).1.abs() < 1e-12);
        assert_eq!(stripping_angle(&beam(1.0, 0.0), Angle::ZERO), Err(Error::SeparableBeam));
    }

    #[test]
    fn element_energy_bookkeeping() {
        let input = BenchBeam::from_schmidt(&SchmidtBeam::from_kappa1_sq(0.8, 0.3, 1.7).unwrap());
        let (t, r) = OpticalElement::BeamSplitter { transmittance: 0.3 }.split(&input, I_UNIT);
        assert_abs_diff_eq!(t.intensity() + r.intensity(), input.intensity(), epsilon = 1e-12);
        for i in 0..20 {
            let p = OpticalElement::Polarizer { angle: Angle::new(i as f64 * 0.17) }.apply(&input);
            assert!(p.intensity() <= input.intensity() + 1e-15);
            assert!(p.lab_vector().is_some());
        }
        assert_eq!(OpticalElement::Mirror.apply(&input), input);
        assert!(input.lab_vector().is_none());
    }

    #[test]
    fn test_arm_carries_eq9_amplitudes() {
        let b = beam(0.7, 0.4);
        let (a, bb) = (Angle::new(PI / 5.0), Angle::new(PI / 7.0));
        let amp = amplitudes(&b, a, bb);
        for k in 1..=2 {
            let out = OpticalElement::Polarizer { angle: analyzer_direction(&b, a, k) }
                .apply(&BenchBeam::from_schmidt(&b));
            let f = out.function_amplitudes(bb).unwrap();
            let norm = (amp.get(k, 1).powi(2) + amp.get(k, 2).powi(2)).sqrt();
            // equal up to an overall sign
            let sign = (f[0] * amp.get(k, 1) + f[1] * amp.get(k, 2)).signum();
            assert_abs_diff_eq!(sign * f[0], amp.get(k, 1) / norm, epsilon = 1e-12);
            assert_abs_diff_eq!(sign * f[1], amp.get(k, 2) / norm, epsilon = 1e-12);
        }
    }

    #[test]
    fn stripped_arm_has_no_f2b_component() {
        let b = beam(0.8, 1.1);
        for bb in [0.1, 0.7, 1.4, 2.9] {
            let bb = Angle::new(bb);
            let s = stripping_angle(&b, bb).unwrap();
            let out = OpticalElement::Polarizer { angle: analyzer_direction(&b, s, 1) }
                .apply(&BenchBeam::from_schmidt(&b));
            let f = out.function_amplitudes(bb).unwrap();
            assert!(f[1].abs() < 1e-12, "residual {}", f[1]);
        }
    }

    #[test]
    fn readings_match_closed_forms() {
        let b = beam(0.7, 0.0);
        let (a, bb) = (PI / 5.0, PI / 7.0);
        let amp = amplitudes(&b, Angle::new(a), Angle::new(bb));
        let s = stripping_angle(&b, Angle::new(bb)).unwrap();
        let (c1, _) = stripped_amplitudes(&b, s, Angle::new(bb));
        for k in 1..=2 {
            let r = analytic(&b, a, bb, k);
            let i = 0.5;
            assert_abs_diff_eq!(r.i_total, i, epsilon = 1e-15);
            let ak = amp.get(k, 1).powi(2) + amp.get(k, 2).powi(2);
            assert_abs_diff_eq!(r.i_k_a, i * ak, epsilon = 1e-14);
            assert_abs_diff_eq!(r.i_1_s, 0.5 * c1 * c1, epsilon = 1e-14);
            let rel = analyzer_direction(&b, Angle::new(a), k).radians()
                - analyzer_direction(&b, s, 1).radians();
            assert_abs_diff_eq!(r.i_k1_ab, r.i_1_s * rel.cos().powi(2), epsilon = 1e-14);
            let hat = amp.get(k, 1) / ak.sqrt();
            let expect = 0.5 * (r.i_k1_ab + r.i_k_a + 2.0 * (r.i_k1_ab * r.i_k_a).sqrt() * hat);
            let flipped = 0.5 * (r.i_k1_ab + r.i_k_a - 2.0 * (r.i_k1_ab * r.i_k_a).sqrt() * hat);
            assert!(
                (r.i_k_t - expect).abs() < 1e-14 || (r.i_k_t - flipped).abs() < 1e-14,
                "I_T {} vs {expect}",
                r.i_k_t
            );
        }
    }

    #[test]
    fn thermal_aligned_bench() {
        let r = analytic(&beam(0.5, 0.0), 0.0, 0.0, 1);
        assert_abs_diff_eq!(r.i_k_a, r.i_total / 2.0, epsilon = 1e-15);
        let p = recover_probabilities(&r).unwrap();
        assert_abs_diff_eq!(p.p_k1, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.p_k2, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn recovery_matches_direct_table() {
        let b = beam(0.7, 0.35);
        let (a, bb) = (PI / 5.0, PI / 7.0);
        let t = joint_probabilities(&b, Angle::new(a), Angle::new(bb));
        for k in 1..=2 {
            let p = recover_probabilities(&analytic(&b, a, bb, k)).unwrap();
            assert_abs_diff_eq!(p.p_k1, t.get(k, 1), epsilon = 1e-10);
            assert_abs_diff_eq!(p.p_k2, t.get(k, 2), epsilon = 1e-10);
        }
        let p = recover_probabilities(&analytic(&beam(0.5, 0.0), 0.0, PI / 8.0, 1)).unwrap();
        assert_abs_diff_eq!(p.p_k1, 0.426777, epsilon = 1e-6);
        assert_abs_diff_eq!(p.p_k2, 0.073223, epsilon = 1e-6);
    }

    #[test]
    fn recovery_edge_cases() {
        let base = BenchReadings {
            a: Angle::ZERO,
            b: Angle::ZERO,
            k: 1,
            i_total: 1.0,
            i_k_a: 0.4,
            i_1_s: 0.5,
            i_k1_ab: 0.2,
            i_k_t: 0.3,
        };
        let p = recover_probabilities(&base).unwrap();
        assert_eq!(p.p_k1, 0.0);
        assert!(p.degenerate);
        assert_abs_diff_eq!(p.p_k2, 0.4, epsilon = 1e-15);

        let zero = BenchReadings { i_k1_ab: 0.0, ..base };
        assert!(matches!(recover_probabilities(&zero), Err(Error::ZeroReferenceIntensity(_))));

        let bad = BenchReadings { i_k_t: 0.9, ..base };
        assert!(matches!(
            recover_probabilities(&bad),
            Err(Error::InconsistentReadings { index: 1, .. })
        ));
        let bad = BenchReadings { i_k_a: 0.01, i_k_t: 0.4, ..base };
        assert!(matches!(
            recover_probabilities(&bad),
            Err(Error::InconsistentReadings { index: 2, .. })
        ));
    }

    #[test]
    fn orthogonal_reference_is_extinguished() {
        // thermal: s = b, and u_2^a is orthogonal to u_1^s when a = s
        let r = analytic(&beam(0.5, 0.0), PI / 8.0, PI / 8.0, 2);
        assert!(r.i_k1_ab < 1e-30);
    }

    #[test]
    fn guards() {
        let sep = beam(1.0, 0.0);
        let opts = BenchOptions::default();
        assert_eq!(
            run_bench(&sep, Angle::ZERO, Angle::ZERO, 1, BenchMode::Analytic, None, &opts),
            Err(Error::SeparableBeam)
        );
        assert_eq!(
            run_bench(&beam(0.5, 0.0), Angle::ZERO, Angle::ZERO, 1, BenchMode::MonteCarlo, None, &opts),
            Err(Error::EnsembleRequired)
        );
        assert!(run_bench(&beam(0.5, 0.0), Angle::ZERO, Angle::ZERO, 3, BenchMode::Analytic, None, &opts).is_err());
        let bad = BenchOptions { transmittance: 0.0, ..opts };
        assert!(run_bench(&beam(0.5, 0.0), Angle::ZERO, Angle::ZERO, 1, BenchMode::Analytic, None, &bad).is_err());
    }

    #[test]
    fn reflection_phase_is_irrelevant() {
        let b = beam(0.66, 0.2);
        let set = AngleSet::new(0.3, 1.0, 0.5, 2.5);
        let plus = bench_chsh(&b, &set, BenchMode::Analytic, None, &BenchOptions::default()).unwrap();
        let minus = bench_chsh(
            &b,
            &set,
            BenchMode::Analytic,
            None,
            &BenchOptions {
                reflection_phase: -I_UNIT,
                ..BenchOptions::default()
            },
        )
        .unwrap();
        for (p, m) in plus.rows.iter().zip(&minus.rows) {
            assert_abs_diff_eq!(p.recovered.p_k1, m.recovered.p_k1, epsilon = 1e-12);
            assert_abs_diff_eq!(p.recovered.p_k2, m.recovered.p_k2, epsilon = 1e-12);
        }
    }

    #[test]
    fn transmittance_is_irrelevant() {
        let b = beam(0.75, 0.0);
        let set = AngleSet::canonical();
        let base = bench_chsh(&b, &set, BenchMode::Analytic, None, &BenchOptions::default()).unwrap();
        let skew = bench_chsh(
            &b,
            &set,
            BenchMode::Analytic,
            None,
            &BenchOptions {
                transmittance: 0.83,
                ..BenchOptions::default()
            },
        )
        .unwrap();
        assert_abs_diff_eq!(base.s_value.s, skew.s_value.s, epsilon = 1e-12);
    }

    #[test]
    fn bench_chsh_examples() {
        let thermal = beam(0.5, 0.0);
        let v = bench_chsh(&thermal, &AngleSet::canonical(), BenchMode::Analytic, None, &BenchOptions::default())
            .unwrap();
        assert_abs_diff_eq!(v.s_value.s, 2.0 * SQRT_2, epsilon = 1e-9);
        assert_eq!(v.rows.len(), 8);
        assert!(v.standard_error.is_none());

        let b = beam(0.75, 0.0);
        let v = bench_chsh(&b, &AngleSet::canonical(), BenchMode::Analytic, None, &BenchOptions::default())
            .unwrap();
        let expect = SQRT_2 * (1.0 + 2.0 * 0.1875f64.sqrt());
        assert_abs_diff_eq!(v.s_value.s, expect, epsilon = 1e-9);
        assert_abs_diff_eq!(v.s_value.s, 2.639, epsilon = 1e-3);
        assert_abs_diff_eq!(v.s_value.s, s_from_correlations(&b, &AngleSet::canonical()).s, epsilon = 1e-9);
    }

    #[test]
    fn monte_carlo_bench_is_seeded() {
        let b = beam(0.5, 0.0);
        let cfg = EnsembleConfig::new(b, 20_000, 4);
        let run = || {
            bench_chsh(&b, &AngleSet::canonical(), BenchMode::MonteCarlo, Some(&cfg), &BenchOptions::default())
                .unwrap()
        };
        let (x, y) = (run(), run());
        assert_eq!(x, y);
        let se = x.standard_error.unwrap();
        assert!(se > 0.0 && se.is_finite());
        assert!((x.s_value.s - 2.0 * SQRT_2).abs() < 5.0 * se);
    }

    #[test]
    fn noise_is_seeded_and_optional() {
        let b = beam(0.6, 0.0);
        let noisy = BenchOptions {
            noise_sigma: Some(1e-3),
            noise_seed: 5,
            ..BenchOptions::default()
        };
        let run = |o: &BenchOptions| {
            run_bench(&b, Angle::new(0.2), Angle::new(0.5), 1, BenchMode::Analytic, None, o).unwrap()
        };
        assert_eq!(run(&noisy), run(&noisy));
        assert_ne!(run(&noisy), run(&BenchOptions::default()));
    }

    #[test]
    fn csv_layout() {
        let v = bench_chsh(&beam(0.5, 0.0), &AngleSet::canonical(), BenchMode::Analytic, None, &BenchOptions::default())
            .unwrap();
        let mut buf = Vec::new();
        write_bench_csv(&v.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(BENCH_CSV_HEADER));
        assert_eq!(lines.count(), 8);
        assert!(!text.contains('\r'));
    }
}
