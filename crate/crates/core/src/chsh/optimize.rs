//! Maximization of S over analyzer angles: exhaustive grid, then coordinate ascent.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::{s_analytic, AngleSet};
use crate::measurement::correlation;
use crate::model::{Angle, SchmidtBeam};

pub const DEFAULT_GRID_RESOLUTION: usize = 32;

/// Stop refining once a full sweep gains less than this in S.
const REFINE_TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 100_000;

/// Maximizes S over `[0, pi)^4`.
///
/// Every grid point `i pi / n` is evaluated from a precomputed `n x n`
/// correlation table, then the best point (or the canonical set, if better)
/// is refined by cyclic coordinate ascent. S is a pure second harmonic in each
/// angle separately, `alpha cos 2x + beta sin 2x + const`, so each coordinate
/// step is an exact one-dimensional maximization.
///
/// Panics if `grid_resolution < 8`.
pub fn max_s_over_angles(beam: &SchmidtBeam, grid_resolution: usize) -> (AngleSet, f64) {
    assert!(grid_resolution >= 8, "grid resolution must be at least 8");
    let n = grid_resolution;
    let step = PI / n as f64;
    let table: Vec<f64> = (0..n * n)
        .map(|ij| correlation(beam, Angle::new((ij / n) as f64 * step), Angle::new((ij % n) as f64 * step)))
        .collect();
    let c = |i: usize, j: usize| table[i * n + j];

    // best per `a` index, reduced in index order for a deterministic tie-break
    let per_a: Vec<(f64, [usize; 4])> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = (f64::NEG_INFINITY, [0; 4]);
            for ip in 0..n {
                for j in 0..n {
                    let head = c(i, j) + c(ip, j);
                    for jp in 0..n {
                        let s = head - c(i, jp) + c(ip, jp);
                        if s > best.0 {
                            best = (s, [i, ip, j, jp]);
                        }
                    }
                }
            }
            best
        })
        .collect();
    let (_, idx) = per_a
        .into_iter()
        .fold((f64::NEG_INFINITY, [0; 4]), |acc, x| if x.0 > acc.0 { x } else { acc });
    let grid_best = AngleSet::new(
        idx[0] as f64 * step,
        idx[1] as f64 * step,
        idx[2] as f64 * step,
        idx[3] as f64 * step,
    );
    let canonical = AngleSet::canonical();
    let start = if s_analytic(beam, &canonical) > s_analytic(beam, &grid_best) {
        canonical
    } else {
        grid_best
    };
    refine(beam, start)
}

fn refine(beam: &SchmidtBeam, start: AngleSet) -> (AngleSet, f64) {
    let conc = beam.concurrence();
    let mut x = start.as_array().map(|a| a.radians());
    let mut s = s_analytic(beam, &start);
    let harmonics = |t: f64| {
        let (sn, cs) = (2.0 * t).sin_cos();
        (cs, conc * sn)
    };
    for _ in 0..MAX_SWEEPS {
        for coord in 0..4 {
            let [a, ap, b, bp] = x.map(harmonics);
            // (alpha, beta) of the coefficient on (cos 2x, sin 2x) for this coordinate
            let (alpha, beta) = match coord {
                0 => (b.0 - bp.0, b.1 - bp.1),
                1 => (b.0 + bp.0, b.1 + bp.1),
                2 => (a.0 + ap.0, a.1 + ap.1),
                _ => (ap.0 - a.0, ap.1 - a.1),
            };
            if alpha != 0.0 || beta != 0.0 {
                let candidate = 0.5 * beta.atan2(alpha);
                let old = x[coord];
                x[coord] = candidate;
                let trial = s_analytic(beam, &AngleSet::new(x[0], x[1], x[2], x[3]));
                if trial < s {
                    x[coord] = old;
                }
            }
        }
        let next = s_analytic(beam, &AngleSet::new(x[0], x[1], x[2], x[3]));
        let gain = next - s;
        s = s.max(next);
        if gain < REFINE_TOL {
            break;
        }
    }
    let set = AngleSet::new(x[0], x[1], x[2], x[3]);
    (set, s_analytic(beam, &set))
}

/// True iff the maximal S exceeds the local bound of 2 by more than `1e-9`.
pub fn violation_threshold(beam: &SchmidtBeam) -> bool {
    max_s_over_angles(beam, DEFAULT_GRID_RESOLUTION).1 > 2.0 + 1e-9
}
