use proptest::prelude::*;

use overair_core::psycho::{
    bin_absolute_threshold, compute_masking_thresholds, level_db, MaskingThresholdMatrix, PamEvaluator, CEILING_DB, FLOOR_DB,
};
use overair_core::signal::stft::stft_samples;
use overair_core::signal::StftConfig;

const HOP: usize = 256;

fn thresholds(x: &[f64], cfg: &StftConfig) -> MaskingThresholdMatrix {
    compute_masking_thresholds(&stft_samples(x, 16000, cfg).unwrap(), cfg).unwrap()
}

/// A carrier with some structure: a few tones plus noise.
fn carrier() -> impl Strategy<Value = Vec<f64>> {
    (
        prop::collection::vec((100.0f64..7500.0, 0.0f64..0.5), 1..4),
        prop::collection::vec(-0.05f64..0.05, 2400),
    )
        .prop_map(|(tones, noise)| {
            noise
                .iter()
                .enumerate()
                .map(|(i, n)| {
                    let t = i as f64 / 16000.0;
                    n + tones.iter().map(|(f, a)| a * (2.0 * std::f64::consts::PI * f * t).sin()).sum::<f64>()
                })
                .collect()
        })
}

fn zeros_then(lead: usize, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; lead];
    out.extend_from_slice(x);
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn thresholds_never_fall_below_the_clamped_quiet_threshold(x in carrier()) {
        let cfg = StftConfig::default();
        let m = thresholds(&x, &cfg);
        for t in 0..m.frames() {
            for k in 0..m.bins() {
                let ath = bin_absolute_threshold(k as f64 * 16000.0 / 512.0).clamp(FLOOR_DB, CEILING_DB);
                prop_assert!(m.get(t, k) >= ath);
                prop_assert!(m.get(t, k) <= CEILING_DB);
            }
        }
    }

    #[test]
    fn thresholds_are_deterministic(x in carrier()) {
        let cfg = StftConfig::default();
        let a = thresholds(&x, &cfg);
        let b = thresholds(&x, &cfg);
        prop_assert!(a.as_slice().iter().zip(b.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn penalty_is_the_norm_of_the_cell_excess(x in carrier(), scale in 1e-4f64..1.0, seed in any::<u64>()) {
        let cfg = StftConfig::default();
        let m = thresholds(&x, &cfg);
        let delta: Vec<f64> = (0..x.len())
            .map(|i| scale * (((seed ^ i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11) as f64 / (1u64 << 53) as f64 - 0.5))
            .collect();
        let f = PamEvaluator::new(&m, &cfg).value(&delta).unwrap();
        prop_assert!(f >= 0.0);
        let spec = stft_samples(&delta, 16000, &cfg).unwrap();
        let excess: Vec<f64> = spec
            .data()
            .iter()
            .zip(m.as_slice())
            .map(|(c, th)| (level_db(*c, m.reference_db()) - th).max(0.0))
            .collect();
        let norm = excess.iter().map(|e| e * e).sum::<f64>().sqrt();
        prop_assert!((f - norm).abs() <= 1e-12 * norm.max(1.0));
        prop_assert_eq!(f == 0.0, excess.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn penalty_is_invariant_to_hop_multiple_shifts(x in carrier(), shift in 1usize..6, seed in any::<u64>()) {
        let cfg = StftConfig::default();
        let delta: Vec<f64> = (0..x.len())
            .map(|i| 0.1 * (((seed ^ i as u64).wrapping_mul(0xD1B5_4A32_D192_ED03) >> 11) as f64 / (1u64 << 53) as f64 - 0.5))
            .collect();
        // both grids start with at least one hop of silence, so the extra leading frames see only zeros
        let lead = HOP;
        let base_c = zeros_then(lead, &x);
        let base_d = zeros_then(lead, &delta);
        let moved_c = zeros_then(lead + shift * HOP, &x);
        let moved_d = zeros_then(lead + shift * HOP, &delta);
        let f0 = PamEvaluator::new(&thresholds(&base_c, &cfg), &cfg).value(&base_d).unwrap();
        let f1 = PamEvaluator::new(&thresholds(&moved_c, &cfg), &cfg).value(&moved_d).unwrap();
        prop_assert!((f0 - f1).abs() <= 1e-12 * f0.max(1.0), "{} vs {}", f0, f1);
    }
}

#[test]
fn zero_perturbation_has_zero_penalty_and_gradient() {
    let cfg = StftConfig::default();
    let x: Vec<f64> = (0..4000).map(|i| (i as f64 * 0.3).sin() * 0.4).collect();
    let m = thresholds(&x, &cfg);
    let (f, g) = PamEvaluator::new(&m, &cfg).value_and_gradient(&vec![0.0; 4000]).unwrap();
    assert_eq!(f, 0.0);
    assert!(g.iter().all(|v| *v == 0.0));
}
