//! Property tests for the invariants the signal chain promises:
//! transform invertibility, correlation affine invariance, normalisation
//! bounds, quantiser error bounds, greedy-recovery residual monotonicity,
//! and wire-format round trips.

use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;

use csilab_core::{
    cs_encode, from_angular_delay, gaussian_ensemble, mag_phase_quantize, omp_recover, pearson,
    serialize_phase_feedback, deserialize_phase_feedback, to_angular_delay_with, uniform_dequantize,
    uniform_quantize, BandSpec, CsiMatrix, PhaseTiers,
};
use csilab_core::represent::{decompose, ReprMode};
use csilab_core::transform::AngularDelayCsi;

const NT: usize = 4;
const NC: usize = 16;

fn test_band() -> BandSpec {
    BandSpec::half_wavelength(5.3e9, 20e6, NC, NT).unwrap()
}

/// A strategy for dense complex matrices with entries in a bounded box.
fn complex_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<Complex64>> {
    proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), rows * cols).prop_map(
        move |pairs| {
            Array2::from_shape_vec(
                (rows, cols),
                pairs.into_iter().map(|(re, im)| Complex64::new(re, im)).collect(),
            )
            .expect("length matches")
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Full-width angular-delay transforms invert exactly (to 1e-10), with
    /// and without the antenna-axis DFT.
    #[test]
    fn transform_round_trip_is_exact(values in complex_matrix(NT, NC), angular in any::<bool>()) {
        let csi = CsiMatrix { values: values.clone(), band: test_band() };
        let ad = to_angular_delay_with(&csi, NC, angular).unwrap();
        let back = from_angular_delay(&ad, NC).unwrap();
        for (a, b) in back.values.iter().zip(values.iter()) {
            prop_assert!((a - b).norm() < 1e-10);
        }
    }

    /// The transform is unitary: energy is preserved in both domains.
    #[test]
    fn transform_preserves_energy(values in complex_matrix(NT, NC), angular in any::<bool>()) {
        let csi = CsiMatrix { values: values.clone(), band: test_band() };
        let ad = to_angular_delay_with(&csi, NC, angular).unwrap();
        let before: f64 = values.iter().map(|v| v.norm_sqr()).sum();
        let after: f64 = ad.values.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!((before - after).abs() <= 1e-9 * before.max(1.0));
    }
}

proptest! {
    /// Pearson correlation is invariant under affine maps of either
    /// argument, up to the sign of the scales.
    #[test]
    fn pearson_is_affine_invariant(
        xs in proptest::collection::vec(-100.0f64..100.0, 3..40),
        a in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        b in -50.0f64..50.0,
    ) {
        // Need genuine variance in the base vector.
        let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - xs.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-6);

        let ys: Vec<f64> = xs.iter().map(|&v| a * v + b).collect();
        let r = pearson(&xs, &ys).unwrap();
        prop_assert!((r - a.signum()).abs() < 1e-9, "corr {r} for scale {a}");
    }

    /// The uniform quantiser's reconstruction error never exceeds half a
    /// step, and its codes are monotone in the input.
    #[test]
    fn quantizer_error_is_bounded_by_half_a_step(
        lo in -1000.0f64..1000.0,
        width in 1e-3f64..2000.0,
        bits in 1u32..=12,
        raw in proptest::collection::vec(0.0f64..1.0, 1..50),
    ) {
        let hi = lo + width;
        let values: Vec<f64> = raw.iter().map(|&u| lo + u * width).collect();
        let codes = uniform_quantize(&values, bits, (lo, hi)).unwrap();
        let back = uniform_dequantize(&codes, bits, (lo, hi)).unwrap();
        let step = width / (1u64 << bits) as f64;
        for (v, r) in values.iter().zip(&back) {
            prop_assert!((v - r).abs() <= step / 2.0 + 1e-9 * width);
        }

        // Monotonicity: sorting inputs sorts codes.
        let mut pairs: Vec<(f64, u32)> = values.iter().cloned().zip(codes.iter().cloned()).collect();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        for w in pairs.windows(2) {
            prop_assert!(w[0].1 <= w[1].1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Greedy sparse recovery never increases the residual as atoms are
    /// added, and it stops within the sparsity budget.
    #[test]
    fn omp_residual_history_is_monotone(
        seed in 0u64..5000,
        k_true in 1usize..5,
        k_budget in 1usize..8,
        coeffs in proptest::collection::vec(prop_oneof![-5.0f64..-0.5, 0.5f64..5.0], 4),
        noise in proptest::collection::vec(-0.01f64..0.01, 16),
    ) {
        let ensemble = gaussian_ensemble(16, 32, seed).unwrap();
        let mut x = vec![0.0; 32];
        for (i, &c) in coeffs.iter().take(k_true).enumerate() {
            x[(seed as usize + i * 7) % 32] = c;
        }
        let mut y = cs_encode(&x, &ensemble).unwrap();
        for (yi, &n) in y.iter_mut().zip(&noise) {
            *yi += n;
        }
        let result = omp_recover(&y, &ensemble, k_budget, 0.0).unwrap();
        prop_assert!(result.iterations <= k_budget);
        prop_assert_eq!(result.residual_history.len(), result.iterations);
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if let Some(&first) = result.residual_history.first() {
            prop_assert!(first <= y_norm + 1e-9);
        }
        for w in result.residual_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "residual grew: {:?}", result.residual_history);
        }
        prop_assert_eq!(result.support.len(), result.iterations);
    }

    /// Magnitude-ranked phase feedback survives the wire format exactly.
    #[test]
    fn phase_feedback_wire_round_trip(
        mags in proptest::collection::vec(0.0f64..10.0, NT * 8),
        raw_phases in proptest::collection::vec(-3.14f64..3.14, NT * 8),
        n1 in 1usize..16,
        b1 in 0u32..8,
        n2 in 0usize..16,
        b2 in 0u32..8,
    ) {
        let mag = Array2::from_shape_vec((NT, 8), mags).unwrap();
        let phases = Array2::from_shape_vec((NT, 8), raw_phases).unwrap();
        let tiers: PhaseTiers = vec![(n1, b1), (n2, b2)];
        prop_assume!(n1 + n2 <= NT * 8);
        let feedback = mag_phase_quantize(&phases, &mag, &tiers).unwrap();
        let wire = serialize_phase_feedback(&feedback).unwrap();
        let back = deserialize_phase_feedback(&wire, &mag).unwrap();
        prop_assert_eq!(back.codes, feedback.codes);
        prop_assert_eq!(back.tap_indices, feedback.tap_indices);
        prop_assert_eq!(back.total_bits, feedback.total_bits);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Every representation's normalised planes live in [0, 1] and invert
    /// back to the raw plane values.
    #[test]
    fn representations_normalise_and_invert(
        values in complex_matrix(NT, 8),
        mode_idx in 0usize..3,
    ) {
        let mode = [ReprMode::Org, ReprMode::Polar, ReprMode::Abs][mode_idx];
        let ad = AngularDelayCsi { values: values.clone(), band: test_band(), angular: false };
        let planes = decompose(&ad, mode);
        for plane in &planes.planes {
            for &v in plane.iter() {
                prop_assert!((0.0..=1.0).contains(&v), "normalised value {v} out of range");
            }
        }
        // Denormalisation reproduces the raw planes.
        for i in 0..2 {
            let raw = planes.denormalized(i);
            for ((r, c), &got) in raw.indexed_iter() {
                let z = values[(r, c)];
                let want = match (mode, i) {
                    (ReprMode::Org, 0) => z.re,
                    (ReprMode::Org, 1) => z.im,
                    (ReprMode::Polar, 0) => z.norm(),
                    (ReprMode::Polar, 1) => if z.norm() == 0.0 { 0.0 } else { z.arg() },
                    (ReprMode::Abs, 0) => z.re.abs(),
                    (ReprMode::Abs, 1) => z.im.abs(),
                    _ => unreachable!(),
                };
                prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0));
            }
        }
    }
}
