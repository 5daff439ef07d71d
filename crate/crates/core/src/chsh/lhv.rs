//! Factorizable local-hidden-variable models and a seeded Monte Carlo S estimator.
//!
//! A strategy supplies bounded responses `A(a, lambda)` and `B(b, lambda)`
//! that share only the hidden variable. Per draw,
//! `A(a)[B(b) - B(b')] + A(a')[B(b) + B(b')]` is bounded by 2 in magnitude,
//! so the estimate of S obeys the CHSH bound up to sampling error.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{combine, AngleSet};
use crate::error::{Error, Result};
use crate::model::Angle;
use crate::stats::{partition_range, substream, Estimate, DEFAULT_PARTITIONS};

/// Hidden variable; strategies use as many components as they need.
pub type HiddenVariable = [f64; 4];

pub trait LhvStrategy: Sync {
    fn name(&self) -> String;
    fn sample_lambda(&self, rng: &mut ChaCha8Rng) -> HiddenVariable;
    fn a_response(&self, angle: Angle, lambda: &HiddenVariable) -> f64;
    fn b_response(&self, angle: Angle, lambda: &HiddenVariable) -> f64;
}

fn uniform_angle(rng: &mut ChaCha8Rng) -> HiddenVariable {
    [rng.random::<f64>() * PI, 0.0, 0.0, 0.0]
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `A = sign cos 2(lambda - a)`, `B = sign cos 2(lambda - b)`, lambda uniform on `[0, pi)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SignStrategy;

impl LhvStrategy for SignStrategy {
    fn name(&self) -> String {
        "sign".into()
    }

    fn sample_lambda(&self, rng: &mut ChaCha8Rng) -> HiddenVariable {
        uniform_angle(rng)
    }

    fn a_response(&self, angle: Angle, lambda: &HiddenVariable) -> f64 {
        sign((2.0 * (lambda[0] - angle.radians())).cos())
    }

    fn b_response(&self, angle: Angle, lambda: &HiddenVariable) -> f64 {
        sign((2.0 * (lambda[0] - angle.radians())).cos())
    }
}

/// `A = cos 2(lambda - a)`, `B = cos 2(lambda - b)`; gives `C = cos 2(a - b) / 2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ContinuousStrategy;

impl LhvStrategy for ContinuousStrategy {
    fn name(&self) -> String {
        "continuous".into()
    }

    fn sample_lambda(&self, rng: &mut ChaCha8Rng) -> HiddenVariable {
        uniform_angle(rng)
    }

    fn a_response(&self, angle: Angle, lambda: &HiddenVariable) -> f64 {
        (2.0 * (lambda[0] - angle.radians())).cos()
    }

    fn b_response(&self, angle: Angle, lambda: &HiddenVariable) -> f64 {
        (2.0 * (lambda[0] - angle.radians())).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Squash {
    Sign,
    Clip,
    Tanh(f64),
}

#[derive(Debug, Clone, PartialEq)]
struct Response {
    /// `(amplitude, phase)` per harmonic `m = 1, 2, 3` of `2 m (theta - angle)`.
    harmonics: Vec<(f64, f64)>,
    /// Weights of the auxiliary hidden components.
    aux: [f64; 3],
    squash: Squash,
}

impl Response {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let harmonics = (0..3)
            .map(|m| {
                let amp = rng.random_range(-1.0..1.0) / (1 + m) as f64;
                (amp, rng.random_range(0.0..2.0 * PI))
            })
            .collect();
        let aux = [
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
        ];
        let squash = match rng.random_range(0..3) {
            0 => Squash::Sign,
            1 => Squash::Clip,
            _ => Squash::Tanh(rng.random_range(0.5..5.0)),
        };
        Response {
            harmonics,
            aux,
            squash,
        }
    }

    fn eval(&self, angle: Angle, lambda: &HiddenVariable) -> f64 {
        let d = lambda[0] - angle.radians();
        let mut x: f64 = self
            .harmonics
            .iter()
            .enumerate()
            .map(|(m, &(amp, phase))| amp * (2.0 * (m + 1) as f64 * d + phase).cos())
            .sum();
        x += self.aux[0] * lambda[1] + self.aux[1] * lambda[2] + self.aux[2] * lambda[3];
        match self.squash {
            Squash::Sign => sign(x),
            Squash::Clip => x.clamp(-1.0, 1.0),
            Squash::Tanh(gain) => (gain * x).tanh(),
        }
    }
}

/// A randomly generated bounded strategy: each side is a squashed low-order
/// Fourier series in the shared angle plus a random mix of three auxiliary
/// uniform hidden components on `[-1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomStrategy {
    seed: u64,
    a: Response,
    b: Response,
}

impl RandomStrategy {
    pub fn generate(seed: u64) -> Self {
        let mut rng = substream(seed, u64::MAX);
        RandomStrategy {
            seed,
            a: Response::random(&mut rng),
            b: Response::random(&mut rng),
        }
    }
}

impl LhvStrategy for RandomStrategy {
    fn name(&self) -> String {
        format!("random:{}", self.seed)
    }

    fn sample_lambda(&self, rng: &mut ChaCha8Rng) -> HiddenVariable {
        [
            rng.random::<f64>() * PI,
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ]
    }

    fn a_response(&self, angle: Angle, lambda: &HiddenVariable) -> f64 {
        self.a.eval(angle, lambda)
    }

    fn b_response(&self, angle: Angle, lambda: &HiddenVariable) -> f64 {
        self.b.eval(angle, lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LhvEstimate {
    pub s: Estimate,
    /// Estimated `[C(a,b), C(a,b'), C(a',b), C(a',b')]`.
    pub correlations: [f64; 4],
    pub samples: usize,
}

fn checked(angle: Angle, value: f64) -> Result<f64> {
    if (-1.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::StrategyOutOfRange {
            angle: angle.radians(),
            value,
        })
    }
}

/// Monte Carlo estimate of S under `C(a, b) = E_lambda[A(a, lambda) B(b, lambda)]`.
///
/// The same draw feeds all four correlations, so the standard error is that
/// of the per-draw S combination. Draws are split over a fixed number of
/// seeded substreams and reduced in partition order; output is bit-identical
/// for a given seed.
pub fn lhv_estimate_s(
    strategy: &dyn LhvStrategy,
    angles: &AngleSet,
    samples: usize,
    seed: u64,
) -> Result<LhvEstimate> {
    if samples < 1000 {
        return Err(Error::InvalidArgument(format!(
            "LHV estimation needs at least 1000 samples (got {samples})"
        )));
    }
    let [a, ap, b, bp] = angles.as_array();
    let parts: Vec<Result<[f64; 6]>> = (0..DEFAULT_PARTITIONS)
        .into_par_iter()
        .map(|p| {
            let mut rng = substream(seed, p as u64);
            // [sum C(a,b), sum C(a,b'), sum C(a',b), sum C(a',b'), sum S, sum S^2]
            let mut acc = [0.0; 6];
            for _ in partition_range(samples, DEFAULT_PARTITIONS, p) {
                let lambda = strategy.sample_lambda(&mut rng);
                let ra = checked(a, strategy.a_response(a, &lambda))?;
                let rap = checked(ap, strategy.a_response(ap, &lambda))?;
                let rb = checked(b, strategy.b_response(b, &lambda))?;
                let rbp = checked(bp, strategy.b_response(bp, &lambda))?;
                let c = [ra * rb, ra * rbp, rap * rb, rap * rbp];
                let s = combine(c);
                for (acc, v) in acc.iter_mut().zip(c) {
                    *acc += v;
                }
                acc[4] += s;
                acc[5] += s * s;
            }
            Ok(acc)
        })
        .collect();
    let mut total = [0.0; 6];
    for part in parts {
        for (t, v) in total.iter_mut().zip(part?) {
            *t += v;
        }
    }
    let n = samples as f64;
    let mean = total[4] / n;
    let var = ((total[5] - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(LhvEstimate {
        s: Estimate {
            value: mean,
            standard_error: (var / n).sqrt(),
        },
        correlations: [total[0] / n, total[1] / n, total[2] / n, total[3] / n],
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    struct Broken;

    impl LhvStrategy for Broken {
        fn name(&self) -> String {
            "broken".into()
        }
        fn sample_lambda(&self, rng: &mut ChaCha8Rng) -> HiddenVariable {
            uniform_angle(rng)
        }
        fn a_response(&self, _: Angle, lambda: &HiddenVariable) -> f64 {
            1.0 + lambda[0]
        }
        fn b_response(&self, _: Angle, _: &HiddenVariable) -> f64 {
            1.0
        }
    }

    /// Midpoint-rule integral over lambda in [0, pi) of A(a) B(b) / pi.
    fn lambda_integral(s: &dyn LhvStrategy, a: f64, b: f64) -> f64 {
        let n = 200_000;
        (0..n)
            .map(|i| {
                let l = [(i as f64 + 0.5) * PI / n as f64, 0.0, 0.0, 0.0];
                s.a_response(Angle::new(a), &l) * s.b_response(Angle::new(b), &l)
            })
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn equal_angles_give_perfect_correlation() {
        let set = AngleSet::new(0.3, 0.3, 0.3, 0.3);
        let est = lhv_estimate_s(&SignStrategy, &set, 10_000, 1).unwrap();
        assert_eq!(est.correlations[0], 1.0);
        assert_eq!(est.s.value, 2.0);
    }

    #[test]
    fn sign_model_quarter_turn_is_uncorrelated() {
        let set = AngleSet::new(0.0, 0.0, PI / 4.0, PI / 4.0);
        assert_abs_diff_eq!(lambda_integral(&SignStrategy, 0.0, PI / 4.0), 0.0, epsilon = 1e-4);
        let est = lhv_estimate_s(&SignStrategy, &set, 100_000, 9).unwrap();
        // C(a,b) has unit-variance draws here
        let se = 1.0 / (100_000f64).sqrt();
        assert!(est.correlations[0].abs() < 5.0 * se);
    }

    #[test]
    fn continuous_model_matches_integral() {
        let (a, b) = (0.2, 0.9);
        let expect = lambda_integral(&ContinuousStrategy, a, b);
        assert_abs_diff_eq!(expect, 0.5 * (2.0 * (a - b)).cos(), epsilon = 1e-6);
        let set = AngleSet::new(a, a, b, b);
        let est = lhv_estimate_s(&ContinuousStrategy, &set, 200_000, 3).unwrap();
        assert!((est.correlations[0] - expect).abs() < 5.0 * 0.5 / (200_000f64).sqrt() * 2.0);
    }

    #[test]
    fn canonical_angles_respect_bound() {
        let set = AngleSet::canonical();
        for strat in [&SignStrategy as &dyn LhvStrategy, &ContinuousStrategy] {
            let est = lhv_estimate_s(strat, &set, 100_000, 5).unwrap();
            assert!(est.s.value.abs() <= 2.0 + 5.0 * est.s.standard_error);
        }
        // the sign model saturates the bound at the canonical angles
        let est = lhv_estimate_s(&SignStrategy, &set, 100_000, 5).unwrap();
        assert!((est.s.value - 2.0).abs() < 5.0 * est.s.standard_error + 1e-12);
    }

    #[test]
    fn random_strategies_are_bounded_and_reproducible() {
        for seed in 0..5 {
            let s = RandomStrategy::generate(seed);
            assert_eq!(s, RandomStrategy::generate(seed));
            let mut rng = substream(seed, 0);
            for _ in 0..1000 {
                let l = s.sample_lambda(&mut rng);
                let x = Angle::new(rng.random::<f64>() * PI);
                assert!(s.a_response(x, &l).abs() <= 1.0);
                assert!(s.b_response(x, &l).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let s = RandomStrategy::generate(11);
        let x = lhv_estimate_s(&s, &AngleSet::canonical(), 5000, 42).unwrap();
        let y = lhv_estimate_s(&s, &AngleSet::canonical(), 5000, 42).unwrap();
        assert_eq!(x, y);
        let z = lhv_estimate_s(&s, &AngleSet::canonical(), 5000, 43).unwrap();
        assert_ne!(x.s.value, z.s.value);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            lhv_estimate_s(&Broken, &AngleSet::canonical(), 1000, 0),
            Err(Error::StrategyOutOfRange { .. })
        ));
        assert!(matches!(
            lhv_estimate_s(&SignStrategy, &AngleSet::canonical(), 999, 0),
            Err(Error::InvalidArgument(_))
        ));
    }
}
