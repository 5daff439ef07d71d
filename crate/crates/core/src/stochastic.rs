//! Gaussian ensemble realization of a Schmidt beam.
//!
//! One realization stores a `2 x embed_dim` complex matrix. Entry `(k, l)`
//! is the contribution of Schmidt function `f_l` to the field on lab axis
//! `u_k`; only the diagonal `(k, k)` for `k < 2` is populated, with
//! `sqrt(I) k_k z_k` and `z_1`, `z_2` independent circular complex Gaussians
//! of unit variance. The realized field on axis `k` is the row sum.
//!
//! Function-space inner products are ensemble averages, so every estimator
//! below is a functional of empirical second moments: `G_ij = <E_i* E_j>`
//! between the two lab components and `<w_l* E_k>` between the function
//! modes and the lab components. Standard errors come from a 100-block
//! jackknife over those moments.

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::{self, Write};

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::chsh::{combine, AngleSet, SValue};
use crate::error::{Error, Result};
use crate::format::fmt12;
use crate::measurement::{rotate_basis, JointProbabilityTable};
use crate::model::{schmidt_decompose, Angle, CoherenceMatrix, SchmidtBeam};
use crate::stats::{
    partition_range, substream, BlockSums, Estimate, DEFAULT_PARTITIONS, JACKKNIFE_BLOCKS,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    pub beam: SchmidtBeam,
    pub samples: usize,
    pub seed: u64,
    /// Function-space dimension; modes beyond the first two carry no weight.
    pub embed_dim: usize,
    /// Number of seeded substreams. Output is bit-identical for a fixed value.
    pub partitions: usize,
}

impl EnsembleConfig {
    pub fn new(beam: SchmidtBeam, samples: usize, seed: u64) -> Self {
        EnsembleConfig {
            beam,
            samples,
            seed,
            embed_dim: 2,
            partitions: DEFAULT_PARTITIONS,
        }
    }

    pub fn with_embed_dim(mut self, embed_dim: usize) -> Self {
        self.embed_dim = embed_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 1 {
            return Err(Error::InvalidArgument("ensemble needs at least one sample".into()));
        }
        if self.embed_dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "embed_dim must be at least 2 (got {})",
                self.embed_dim
            )));
        }
        if self.partitions < 1 {
            return Err(Error::InvalidArgument("partitions must be at least 1".into()));
        }
        Ok(())
    }
}

/// A borrowed view of one realization.
#[derive(Debug, Clone, Copy)]
pub struct FieldSample<'a> {
    components: &'a [Complex64],
    embed_dim: usize,
}

impl<'a> FieldSample<'a> {
    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Entry `(k, l)`, zero-based: lab axis `k` in `{0, 1}`, function mode `l`.
    pub fn amplitude(&self, k: usize, l: usize) -> Complex64 {
        self.components[k * self.embed_dim + l]
    }

    /// Realized field on Schmidt lab axis `k` (row sum).
    pub fn lab_field(&self, k: usize) -> Complex64 {
        self.components[k * self.embed_dim..(k + 1) * self.embed_dim]
            .iter()
            .sum()
    }

    pub fn components(&self) -> &'a [Complex64] {
        self.components
    }
}

/// Realizations stored row-major, `2 * embed_dim` entries per sample, in the
/// Schmidt lab frame of a beam with the given orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    embed_dim: usize,
    orientation: Angle,
    data: Vec<Complex64>,
}

impl Ensemble {
    /// Wraps raw realizations. `data.len()` must be a multiple of `2 * embed_dim`.
    pub fn from_raw(embed_dim: usize, orientation: Angle, data: Vec<Complex64>) -> Result<Self> {
        if embed_dim < 2 || !data.len().is_multiple_of(2 * embed_dim) {
            return Err(Error::InvalidArgument(format!(
                "{} entries do not form 2 x {embed_dim} samples",
                data.len()
            )));
        }
        Ok(Ensemble {
            embed_dim,
            orientation,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len() / (2 * self.embed_dim)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Orientation of the Schmidt lab frame relative to the fixed `h` axis.
    pub fn orientation(&self) -> Angle {
        self.orientation
    }

    pub fn sample(&self, i: usize) -> FieldSample<'_> {
        let w = 2 * self.embed_dim;
        FieldSample {
            components: &self.data[i * w..(i + 1) * w],
            embed_dim: self.embed_dim,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = FieldSample<'_>> + '_ {
        (0..self.len()).map(move |i| self.sample(i))
    }

    /// Realized `(E_1, E_2)` of sample `i` in the Schmidt lab frame.
    pub fn lab_fields(&self, i: usize) -> [Complex64; 2] {
        let s = self.sample(i);
        [s.lab_field(0), s.lab_field(1)]
    }
}

/// Draws the ensemble. Each partition has its own substream and draws
/// `(Re z_1, Im z_1, Re z_2, Im z_2)` per sample in that order regardless of
/// `embed_dim`, so configurations that differ only in `embed_dim` produce
/// identical estimates.
pub fn sample_ensemble(config: &EnsembleConfig) -> Result<Ensemble> {
    config.validate()?;
    let beam = config.beam;
    let d = config.embed_dim;
    let scale = beam.intensity().sqrt() * FRAC_1_SQRT_2;
    let weights = [scale * beam.kappa1(), scale * beam.kappa2()];
    let chunks: Vec<Vec<Complex64>> = (0..config.partitions)
        .into_par_iter()
        .map(|p| {
            let range = partition_range(config.samples, config.partitions, p);
            let mut rng = substream(config.seed, p as u64);
            let mut out = vec![Complex64::new(0.0, 0.0); range.len() * 2 * d];
            for sample in out.chunks_exact_mut(2 * d) {
                for (k, w) in weights.iter().enumerate() {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    sample[k * d + k] = Complex64::new(w * re, w * im);
                }
            }
            out
        })
        .collect();
    Ensemble::from_raw(d, beam.lab_orientation(), chunks.concat())
}

/// Number of per-sample statistics in [`moment_blocks`].
const MOMENT_WIDTH: usize = 14;

/// Block sums of the second moments. Per sample, with `E_k` the realized
/// field on lab axis `k` (row sum) and `w_l` the realized contribution of
/// function mode `l` (column sum):
///
/// ```text
/// [ |E_1|^2, |E_2|^2, Re E_1* E_2, Im E_1* E_2,
///   |w_1|^2, |w_2|^2, (Re, Im) w_l* E_k for (l, k) = (1,1), (1,2), (2,1), (2,2) ]
/// ```
fn moment_blocks(ensemble: &Ensemble) -> Result<BlockSums> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    Ok(BlockSums::accumulate(
        ensemble.len(),
        JACKKNIFE_BLOCKS,
        MOMENT_WIDTH,
        |i, out| {
            let s = ensemble.sample(i);
            let e = [s.lab_field(0), s.lab_field(1)];
            let w = [0, 1].map(|l| s.amplitude(0, l) + s.amplitude(1, l));
            let cross = e[0].conj() * e[1];
            out[0] = e[0].norm_sqr();
            out[1] = e[1].norm_sqr();
            out[2] = cross.re;
            out[3] = cross.im;
            out[4] = w[0].norm_sqr();
            out[5] = w[1].norm_sqr();
            for l in 0..2 {
                for k in 0..2 {
                    let h = w[l].conj() * e[k];
                    out[6 + 4 * l + 2 * k] = h.re;
                    out[7 + 4 * l + 2 * k] = h.im;
                }
            }
        },
    ))
}

/// Second moments in the Schmidt frame.
#[derive(Debug, Clone, Copy)]
struct Moments {
    g11: f64,
    g22: f64,
    /// `<E_1* E_2>`
    g12: Complex64,
    /// `<|w_l|^2>`
    norms: [f64; 2],
    /// `h[l][k] = <w_l* E_k>`
    h: [[Complex64; 2]; 2],
}

impl Moments {
    fn from_means(m: &[f64]) -> Self {
        let c = |i: usize| Complex64::new(m[i], m[i + 1]);
        Moments {
            g11: m[0],
            g22: m[1],
            g12: c(2),
            norms: [m[4], m[5]],
            h: [[c(6), c(8)], [c(10), c(12)]],
        }
    }

    /// `[p11, p12, p21, p22]`, normalized by the empirical total power.
    ///
    /// `p_k1 = |<u_k^a f_1^b|e>|^2 / I` projects the realized lab field onto
    /// the function `f_1^b = sum_j R(b)[0][j] w_j / |w_j|`; the second column
    /// is the remainder of the lab marginal, `p_k2 = <|E_k^a|^2> / I - p_k1`.
    /// This is the same split the bench makes with its stripped reference
    /// arm, and it makes every row sum to the lab marginal exactly.
    fn joint_table(&self, a: Angle, b: Angle) -> [f64; 4] {
        let (ra, rb) = (rotate_basis(a), rotate_basis(b));
        let total = self.g11 + self.g22;
        let mut p = [0.0; 4];
        for k in 0..2 {
            let mut amp = Complex64::new(0.0, 0.0);
            for (j, norm) in self.norms.iter().enumerate() {
                // a mode that never carries power has no direction to project on
                if *norm > 0.0 {
                    for i in 0..2 {
                        amp += ra[k][i] * rb[0][j] * self.h[j][i] / norm.sqrt();
                    }
                }
            }
            let (x, y) = (ra[k][0], ra[k][1]);
            let marginal = x * x * self.g11 + y * y * self.g22 + 2.0 * x * y * self.g12.re;
            let p1 = amp.norm_sqr() / total;
            p[2 * k] = p1;
            p[2 * k + 1] = marginal / total - p1;
        }
        p
    }

    fn correlation(&self, a: Angle, b: Angle) -> f64 {
        let p = self.joint_table(a, b);
        p[0] - p[1] - p[2] + p[3]
    }

    fn chsh(&self, angles: &AngleSet) -> f64 {
        combine(angles.pairs().map(|(x, y, _)| self.correlation(x, y)))
    }

    /// Coherence matrix in the fixed frame, `U J U^T` with `J_ij = <E_i E_j*>`.
    fn fixed_frame(&self, orientation: Angle) -> (f64, f64, Complex64) {
        let (s, c) = orientation.radians().sin_cos();
        let u = [[c, -s], [s, c]];
        let j = [
            [Complex64::new(self.g11, 0.0), self.g12.conj()],
            [self.g12, Complex64::new(self.g22, 0.0)],
        ];
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (col, v) in row.iter_mut().enumerate() {
                for m in 0..2 {
                    for n in 0..2 {
                        *v += u[r][m] * j[m][n] * u[col][n];
                    }
                }
            }
        }
        (out[0][0].re, out[1][1].re, out[0][1])
    }
}

/// Sample-mean coherence matrix in the fixed `(h, v)` frame.
pub fn empirical_coherence(ensemble: &Ensemble) -> Result<CoherenceMatrix> {
    let blocks = moment_blocks(ensemble)?;
    let m = Moments::from_means(&blocks.means());
    let (j11, j22, j12) = m.fixed_frame(ensemble.orientation());
    CoherenceMatrix::new(j11, j22, j12)
}

/// Jackknife estimate of `kappa1^2` from the empirical coherence matrix.
pub fn empirical_kappa1_sq(ensemble: &Ensemble) -> Result<Estimate> {
    let blocks = moment_blocks(ensemble)?;
    Ok(blocks.jackknife(|m| {
        let g = Moments::from_means(m);
        let j = CoherenceMatrix::new(g.g11, g.g22, g.g12.conj());
        match j.and_then(|j| schmidt_decompose(&j)) {
            Ok(b) => b.kappa1() * b.kappa1(),
            Err(_) => f64::NAN,
        }
    }))
}

pub fn empirical_joint_probabilities(
    ensemble: &Ensemble,
    a: Angle,
    b: Angle,
) -> Result<JointProbabilityTable> {
    Ok(empirical_joint_probabilities_with_errors(ensemble, a, b)?.0)
}

/// The empirical table together with jackknife standard errors of
/// `[p11, p12, p21, p22]`.
pub fn empirical_joint_probabilities_with_errors(
    ensemble: &Ensemble,
    a: Angle,
    b: Angle,
) -> Result<(JointProbabilityTable, [f64; 4])> {
    let blocks = moment_blocks(ensemble)?;
    let p = Moments::from_means(&blocks.means()).joint_table(a, b);
    let se = [0, 1, 2, 3].map(|idx| {
        blocks
            .jackknife(|m| Moments::from_means(m).joint_table(a, b)[idx])
            .standard_error
    });
    Ok((
        JointProbabilityTable {
            p11: p[0],
            p12: p[1],
            p21: p[2],
            p22: p[3],
            angle_a: a,
            angle_b: b,
        },
        se,
    ))
}

pub fn empirical_correlation(ensemble: &Ensemble, a: Angle, b: Angle) -> Result<Estimate> {
    let blocks = moment_blocks(ensemble)?;
    Ok(blocks.jackknife(|m| Moments::from_means(m).correlation(a, b)))
}

/// Empirical S with the four correlations. The standard error is the
/// jackknife error of S as a whole, so correlations between the four
/// estimates are accounted for.
pub fn empirical_chsh(ensemble: &Ensemble, angles: &AngleSet) -> Result<(SValue, Estimate)> {
    let blocks = moment_blocks(ensemble)?;
    let m = Moments::from_means(&blocks.means());
    let breakdown = angles.pairs().map(|(x, y, _)| m.correlation(x, y));
    let est = blocks.jackknife(|m| Moments::from_means(m).chsh(angles));
    Ok((SValue::from_correlations(*angles, breakdown), est))
}

/// Writes `sample_index,k,l,re,im` rows (1-based `k`, `l`) with a header.
pub fn write_ensemble_csv<W: Write>(ensemble: &Ensemble, mut out: W) -> io::Result<()> {
    writeln!(out, "sample_index,k,l,re,im")?;
    for (i, s) in ensemble.iter().enumerate() {
        for k in 0..2 {
            for l in 0..s.embed_dim() {
                let z = s.amplitude(k, l);
                writeln!(out, "{},{},{},{},{}", i, k + 1, l + 1, fmt12(z.re), fmt12(z.im))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::joint_probabilities;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn beam(k1sq: f64) -> SchmidtBeam {
        SchmidtBeam::from_kappa1_sq(k1sq, 0.0, 1.0).unwrap()
    }

    #[test]
    fn separable_beam_has_empty_second_row() {
        let e = sample_ensemble(&EnsembleConfig::new(beam(1.0), 500, 3)).unwrap();
        assert_eq!(e.len(), 500);
        for s in e.iter() {
            for l in 0..2 {
                assert_eq!(s.amplitude(1, l), Complex64::new(0.0, 0.0));
            }
        }
        let (t, _) =
            empirical_joint_probabilities_with_errors(&e, Angle::ZERO, Angle::ZERO).unwrap();
        assert!((t.p11 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_sample_coherence() {
        let e = Ensemble::from_raw(
            2,
            Angle::ZERO,
            vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        )
        .unwrap();
        let j = empirical_coherence(&e).unwrap();
        assert_eq!((j.j11(), j.j22(), j.j12()), (1.0, 0.0, Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn empty_ensemble_errors() {
        let e = Ensemble::from_raw(2, Angle::ZERO, vec![]).unwrap();
        assert_eq!(empirical_coherence(&e), Err(Error::EmptyEnsemble));
        assert!(empirical_correlation(&e, Angle::ZERO, Angle::ZERO).is_err());
        assert!(empirical_joint_probabilities(&e, Angle::ZERO, Angle::ZERO).is_err());
        assert!(Ensemble::from_raw(2, Angle::ZERO, vec![Complex64::new(0.0, 0.0); 3]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(sample_ensemble(&EnsembleConfig::new(beam(0.5), 0, 1)).is_err());
        assert!(sample_ensemble(&EnsembleConfig::new(beam(0.5), 10, 1).with_embed_dim(1)).is_err());
    }

    #[test]
    fn deterministic_and_embedding_invariant() {
        let cfg = EnsembleConfig::new(beam(0.7), 2000, 17);
        let a = sample_ensemble(&cfg).unwrap();
        let b = sample_ensemble(&cfg).unwrap();
        assert_eq!(a, b);
        let wide = sample_ensemble(&cfg.with_embed_dim(8)).unwrap();
        let (x, y) = (Angle::new(0.3), Angle::new(1.0));
        let ea = empirical_correlation(&a, x, y).unwrap();
        let ew = empirical_correlation(&wide, x, y).unwrap();
        assert_eq!(ea.value.to_bits(), ew.value.to_bits());
        assert_eq!(ea.standard_error.to_bits(), ew.standard_error.to_bits());
    }

    #[test]
    fn tables_sum_to_one() {
        let e = sample_ensemble(&EnsembleConfig::new(beam(0.6), 300, 5)).unwrap();
        for (a, b) in [(0.0, 0.0), (0.4, 2.1), (1.5, 0.2)] {
            let t = empirical_joint_probabilities(&e, Angle::new(a), Angle::new(b)).unwrap();
            assert_abs_diff_eq!(t.total(), 1.0, epsilon = 1e-12);
            assert!(t.p11 + t.p12 > 0.0 && t.p21 + t.p22 > 0.0);
        }
    }

    #[test]
    fn converges_to_analytic_table() {
        let b = SchmidtBeam::from_kappa1_sq(0.7, 0.5, 2.0).unwrap();
        let e = sample_ensemble(&EnsembleConfig::new(b, 200_000, 8)).unwrap();
        for (x, y) in [(0.0, PI / 8.0), (PI / 4.0, PI / 4.0), (0.9, 2.4)] {
            let (x, y) = (Angle::new(x), Angle::new(y));
            let (t, se) = empirical_joint_probabilities_with_errors(&e, x, y).unwrap();
            let exact = joint_probabilities(&b, x, y);
            let worst = se.iter().cloned().fold(0.0, f64::max);
            assert!(
                t.max_abs_diff(&exact) < 5.0 * worst,
                "diff {} vs 5 sigma {}",
                t.max_abs_diff(&exact),
                5.0 * worst
            );
        }
    }

    #[test]
    fn coherence_in_fixed_frame() {
        let b = SchmidtBeam::from_kappa1_sq(0.8, PI / 3.0, 1.0).unwrap();
        let e = sample_ensemble(&EnsembleConfig::new(b, 100_000, 2)).unwrap();
        let j = empirical_coherence(&e).unwrap();
        let d = schmidt_decompose(&j).unwrap();
        assert!((d.lab_orientation().radians() - PI / 3.0).abs() < 0.02);
        assert!((d.kappa1().powi(2) - 0.8).abs() < 0.01);
    }

    #[test]
    fn csv_dump() {
        let e = sample_ensemble(&EnsembleConfig::new(beam(1.0), 2, 0)).unwrap();
        let mut buf = Vec::new();
        write_ensemble_csv(&e, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "sample_index,k,l,re,im");
        assert_eq!(lines.len(), 1 + 2 * 4);
        assert!(lines[2].starts_with("0,1,2,0,0"));
    }
}
