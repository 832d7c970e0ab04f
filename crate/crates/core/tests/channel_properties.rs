use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use overair_core::channel::{random_pad, AugmentConfig, Channel};
use overair_core::room::{compute_rir, generate_rooms, Rir, RirConfig, Room, RoomGenConfig};
use overair_core::signal::{convolve_samples, Waveform};
use overair_core::rng;

const LEN: usize = 600;

fn rirs() -> Vec<Rir> {
    let cfg = RoomGenConfig {
        count: 3,
        seed: 11,
        ..RoomGenConfig::default()
    };
    let rir_cfg = RirConfig {
        max_order: 3,
        max_len_s: 0.04,
        ..RirConfig::default()
    };
    generate_rooms(&Room::default(), &cfg)
        .unwrap()
        .iter()
        .map(|v| compute_rir(v, &rir_cfg).unwrap())
        .collect()
}

fn flags(bits: u8) -> AugmentConfig {
    AugmentConfig {
        enable_fr: bits & 1 != 0,
        enable_rooms: bits & 2 != 0,
        enable_timeshift: bits & 4 != 0,
        pad_max: 120,
        ..AugmentConfig::default()
    }
}

fn signal() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, LEN)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn channel_is_linear_for_every_flag_combination(
        u in signal(), v in signal(), a in -2.0f64..2.0, b in -2.0f64..2.0, key in any::<u64>(),
    ) {
        let rooms = rirs();
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        for bits in 0..8 {
            let ch = Channel::new(LEN, &rooms, &flags(bits)).unwrap();
            for (room, l, r) in ch.draw(key) {
                let cu = ch.forward(&u, room, l, r).unwrap();
                let cv = ch.forward(&v, room, l, r).unwrap();
                let cm = ch.forward(&mix, room, l, r).unwrap();
                let scale = cm.iter().fold(1e-12f64, |m, x| m.max(x.abs()));
                for i in 0..cm.len() {
                    prop_assert!((cm[i] - (a * cu[i] + b * cv[i])).abs() <= 1e-9 * scale, "flags {bits:03b}");
                }
            }
        }
    }

    #[test]
    fn all_stages_off_is_the_identity(u in signal(), key in any::<u64>()) {
        let ch = Channel::new(LEN, &rirs(), &flags(0)).unwrap();
        for (room, l, r) in ch.draw(key) {
            prop_assert_eq!((l, r), (0, 0));
            prop_assert_eq!(ch.forward(&u, room, l, r).unwrap(), u.clone());
        }
    }

    #[test]
    fn time_shift_alone_only_pads(u in signal(), key in any::<u64>()) {
        let ch = Channel::new(LEN, &rirs(), &flags(4)).unwrap();
        for (room, l, r) in ch.draw(key) {
            let out = ch.forward(&u, room, l, r).unwrap();
            prop_assert!(out[..l].iter().all(|x| *x == 0.0));
            prop_assert_eq!(&out[l..l + LEN], &u[..]);
            prop_assert!(out[l + LEN..].iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn frozen_input_differs_across_draws_only_by_the_pads(u in signal(), k1 in any::<u64>(), k2 in any::<u64>()) {
        let ch = Channel::new(LEN, &rirs(), &flags(7)).unwrap();
        let (room, l1, r1) = ch.draw(k1)[1];
        let (_, l2, r2) = ch.draw(k2)[1];
        let a = ch.forward(&u, room, l1, r1).unwrap();
        let b = ch.forward(&u, room, l2, r2).unwrap();
        let unpadded = ch.forward(&u, room, 0, 0).unwrap();
        let scale = unpadded.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let body = ch.out_len() - 2 * ch.config().pad_max;
        for i in 0..body {
            prop_assert!((a[l1 + i] - unpadded[i]).abs() <= 1e-12 * scale);
            prop_assert!((b[l2 + i] - unpadded[i]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn adjoint_satisfies_the_dot_product_identity(u in signal(), key in any::<u64>(), seed in any::<u64>()) {
        let rooms = rirs();
        for bits in 0..8 {
            let ch = Channel::new(LEN, &rooms, &flags(bits)).unwrap();
            let mut r = rng::seeded(seed);
            let g: Vec<f64> = (0..ch.out_len()).map(|_| rand::Rng::gen_range(&mut r, -1.0..1.0)).collect();
            let (room, l, rp) = ch.draw(key)[0];
            let y = ch.forward(&u, room, l, rp).unwrap();
            let back = ch.adjoint(&g, room, l, rp).unwrap();
            let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
            let rhs: f64 = u.iter().zip(&back).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0), "flags {bits:03b}");
        }
    }
}

#[test]
fn filter_only_channel_applies_the_band_pass_twice() {
    let u: Vec<f64> = (0..LEN).map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0).collect();
    let ch = Channel::new(LEN, &rirs(), &flags(1)).unwrap();
    let fr = overair_core::channel::standard_fr().unwrap();
    let want = convolve_samples(&convolve_samples(&u, fr.taps()).unwrap(), fr.taps()).unwrap();
    let got = ch.forward(&u, 2, 0, 0).unwrap();
    assert_eq!(got.len(), want.len());
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn chi_square_p(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let expected = n as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

#[test]
fn random_pad_lengths_are_uniform() {
    let w = Waveform::new(vec![0.5; 8], 16000).unwrap();
    let mut r = rng::seeded(2024);
    let mut left = vec![0u64; 1601];
    let mut right = vec![0u64; 1601];
    for _ in 0..10_000 {
        let (padded, l, rp) = random_pad(&w, 1600, &mut r);
        assert_eq!(padded.len(), l + 8 + rp);
        left[l] += 1;
        right[rp] += 1;
    }
    let (pl, pr) = (chi_square_p(&left), chi_square_p(&right));
    assert!(pl > 0.01 && pr > 0.01, "p = {pl}, {pr}");
}

#[test]
fn channel_pad_draws_are_uniform() {
    let ch = Channel::new(LEN, &rirs(), &AugmentConfig::default()).unwrap();
    let mut counts = vec![0u64; 1601];
    for key in 0..5_000u64 {
        let (l, r) = ch.draw_pads(rng::mix64(key), 0);
        counts[l] += 1;
        counts[r] += 1;
    }
    let p = chi_square_p(&counts);
    assert!(p > 0.01, "p = {p}");
}
