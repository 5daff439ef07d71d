use std::f64::consts::PI;

use bellbeam_core::bench::{bench_chsh, recover_probabilities, run_bench, BenchMode, BenchOptions};
use bellbeam_core::chsh::{
    max_s_over_angles, s_analytic, s_closed_form, s_from_correlations, s_max_law, AngleSet,
};
use bellbeam_core::measurement::{correlation, joint_probabilities, marginal_a, marginal_b};
use bellbeam_core::model::{schmidt_decompose, to_coherence, Angle, CoherenceMatrix, SchmidtBeam};
use num_complex::Complex64;
use proptest::prelude::*;

fn beam_strategy() -> impl Strategy<Value = SchmidtBeam> {
    (0.5f64..=1.0, 0.0f64..PI, 0.01f64..100.0)
        .prop_map(|(k, o, i)| SchmidtBeam::from_kappa1_sq(k, o, i).unwrap())
}

fn entangled_beam() -> impl Strategy<Value = SchmidtBeam> {
    (0.5f64..=0.9975, 0.0f64..PI, 0.01f64..100.0)
        .prop_map(|(k, o, i)| SchmidtBeam::from_kappa1_sq(k, o, i).unwrap())
}

fn angle_set() -> impl Strategy<Value = AngleSet> {
    [0.0f64..PI, 0.0f64..PI, 0.0f64..PI, 0.0f64..PI].prop_map(|[a, ap, b, bp]| AngleSet::new(a, ap, b, bp))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn decompose_inverts_to_coherence(beam in beam_strategy()) {
        let back = schmidt_decompose(&to_coherence(&beam)).unwrap();
        prop_assert!((back.kappa1() - beam.kappa1()).abs() < 1e-9);
        prop_assert!((back.kappa2() - beam.kappa2()).abs() < 1e-7);
        prop_assert!((back.intensity() - beam.intensity()).abs() < 1e-12 * beam.intensity());
        if beam.kappa1() - beam.kappa2() > 1e-4 {
            let d = (back.lab_orientation().radians() - beam.lab_orientation().radians()).rem_euclid(PI);
            prop_assert!(d.min(PI - d) < 1e-7, "orientation off by {d}");
        }
    }

    #[test]
    fn polarization_and_concurrence_are_complementary(
        j11 in 0.0f64..10.0, j22 in 0.0f64..10.0, t in 0.0f64..=1.0, phase in 0.0f64..(2.0 * PI)
    ) {
        prop_assume!(j11 + j22 > 1e-3);
        let j12 = Complex64::from_polar(t * (j11 * j22).sqrt(), phase);
        let j = CoherenceMatrix::new(j11, j22, j12).unwrap();
        let b = schmidt_decompose(&j).unwrap();
        let (p, c) = (b.degree_of_polarization(), b.concurrence());
        prop_assert!((p * p + c * c - 1.0).abs() < 1e-12);
        prop_assert!((p - j.degree_of_polarization()).abs() < 1e-9);
    }

    #[test]
    fn decomposition_is_scale_covariant(beam in beam_strategy(), scale in 1e-3f64..1e3) {
        let j = to_coherence(&beam);
        let a = schmidt_decompose(&j).unwrap();
        let b = schmidt_decompose(&j.scaled(scale).unwrap()).unwrap();
        prop_assert!((a.kappa1() - b.kappa1()).abs() < 1e-12);
        prop_assert!((b.intensity() / a.intensity() - scale).abs() < 1e-12 * scale);
    }

    #[test]
    fn correlations_are_bounded(beam in beam_strategy(), a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let (a, b) = (Angle::new(a), Angle::new(b));
        let c = correlation(&beam, a, b);
        prop_assert!(c.abs() <= 1.0 + 1e-15);
        let t = joint_probabilities(&beam, a, b);
        prop_assert!((t.total() - 1.0).abs() < 1e-12);
        prop_assert!((t.correlation() - c).abs() < 1e-12);
        prop_assert!([t.p11, t.p12, t.p21, t.p22].iter().all(|p| *p >= -1e-15));
        let rows = (t.p11 + t.p12) - (t.p21 + t.p22);
        let cols = (t.p11 + t.p21) - (t.p12 + t.p22);
        prop_assert!((marginal_a(&beam, a) - rows).abs() < 1e-12);
        prop_assert!((marginal_b(&beam, b) - cols).abs() < 1e-12);
    }

    #[test]
    fn s_is_below_the_maximum_law(beam in beam_strategy(), set in angle_set()) {
        let s = s_analytic(&beam, &set);
        prop_assert!(s.abs() <= s_max_law(&beam) + 1e-12);
        prop_assert!((s - s_closed_form(&beam, &set)).abs() < 1e-12);
    }

    #[test]
    fn s_is_invariant_under_a_common_rotation(k in 0.5f64..=1.0, set in angle_set(), phi in 0.0f64..PI) {
        // C(a, b) depends on (a, b) separately, but a rigid shift of all four
        // angles by a multiple of pi/2 maps the cos and sin harmonics onto themselves
        let beam = SchmidtBeam::from_kappa1_sq(k, 0.0, 1.0).unwrap();
        let shifted = set.shifted(PI / 2.0);
        prop_assert!((s_analytic(&beam, &set) - s_analytic(&beam, &shifted)).abs() < 1e-12);
        let thermal = SchmidtBeam::thermal(1.0).unwrap();
        prop_assert!((s_analytic(&thermal, &set) - s_analytic(&thermal, &set.shifted(phi))).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn bench_recovers_the_joint_table(beam in entangled_beam(), a in 0.0f64..PI, b in 0.0f64..PI) {
        let (a, b) = (Angle::new(a), Angle::new(b));
        let t = joint_probabilities(&beam, a, b);
        for k in 1..=2 {
            let r = run_bench(&beam, a, b, k, BenchMode::Analytic, None, &BenchOptions::default());
            match r.and_then(|r| recover_probabilities(&r)) {
                Ok(p) => {
                    prop_assert!((p.p_k1 - t.get(k, 1)).abs() < 1e-10);
                    prop_assert!((p.p_k2 - t.get(k, 2)).abs() < 1e-10);
                }
                // only when the stripped reference is orthogonal to the analyzer
                Err(bellbeam_core::Error::ZeroReferenceIntensity(_)) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }

    #[test]
    fn bench_is_insensitive_to_the_reflection_phase(
        beam in entangled_beam(), set in angle_set(), phase in 0.0f64..(2.0 * PI), t in 0.05f64..0.95
    ) {
        let opts = BenchOptions {
            transmittance: t,
            reflection_phase: Complex64::from_polar(1.0, phase),
            ..BenchOptions::default()
        };
        let base = bench_chsh(&beam, &set, BenchMode::Analytic, None, &BenchOptions::default());
        let other = bench_chsh(&beam, &set, BenchMode::Analytic, None, &opts);
        if let (Ok(x), Ok(y)) = (base, other) {
            prop_assert!((x.s_value.s - y.s_value.s).abs() < 1e-9);
            prop_assert!((x.s_value.s - s_analytic(&beam, &set)).abs() < 1e-9);
        }
    }
}

#[test]
fn optimizer_matches_the_maximum_law() {
    for i in 0..=10 {
        let k = 0.5 + 0.05 * i as f64;
        let beam = SchmidtBeam::from_kappa1_sq(k, 0.3 * i as f64, 1.0).unwrap();
        let (set, s) = max_s_over_angles(&beam, 16);
        assert!((s - s_max_law(&beam)).abs() < 1e-6, "kappa1^2 = {k}: {s}");
        assert!((s_from_correlations(&beam, &set).s - s).abs() < 1e-12);
    }
}
