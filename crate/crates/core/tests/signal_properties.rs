use proptest::prelude::*;

use overair_core::signal::stft::stft_samples;
use overair_core::signal::{convolve_adjoint, convolve_samples, design_bandpass, istft, StftConfig, Waveform};

fn signal(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn rel_close(a: f64, b: f64, tol: f64, scale: f64) -> bool {
    (a - b).abs() <= tol * scale.max(1e-300)
}

fn naive_convolution(x: &[f64], k: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + k.len() - 1);
    for n in 0..x.len() + k.len() - 1 {
        let mut acc = 0.0;
        for (j, kj) in k.iter().enumerate() {
            if n >= j && n - j < x.len() {
                acc += x[n - j] * kj;
            }
        }
        out.push(acc);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stft_is_linear(u in signal(1500), v in signal(1500), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let cfg = StftConfig::default();
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let su = stft_samples(&u, 16000, &cfg).unwrap();
        let sv = stft_samples(&v, 16000, &cfg).unwrap();
        let sm = stft_samples(&mix, 16000, &cfg).unwrap();
        let scale = sm.data().iter().fold(0.0f64, |m, c| m.max(c.norm()));
        for ((m, x), y) in sm.data().iter().zip(su.data()).zip(sv.data()) {
            let want = x * a + y * b;
            prop_assert!((m - want).norm() <= 1e-9 * scale);
        }
    }

    #[test]
    fn convolution_is_linear_and_matches_the_naive_sum(
        u in signal(300), v in signal(300), k in signal(90), a in -3.0f64..3.0, b in -3.0f64..3.0,
    ) {
        let mix: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let cu = convolve_samples(&u, &k).unwrap();
        let cv = convolve_samples(&v, &k).unwrap();
        let cm = convolve_samples(&mix, &k).unwrap();
        let naive = naive_convolution(&mix, &k);
        let scale = naive.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..cm.len() {
            prop_assert!(rel_close(cm[i], a * cu[i] + b * cv[i], 1e-9, scale));
            prop_assert!(rel_close(cm[i], naive[i], 1e-9, scale));
        }
    }

    #[test]
    fn per_frame_parseval(x in signal(2000)) {
        let cfg = StftConfig::default();
        let s = stft_samples(&x, 16000, &cfg).unwrap();
        let n = cfg.window_len();
        for t in 0..s.frames() {
            let time: f64 = (0..n)
                .map(|i| {
                    let v = x.get(t * cfg.hop() + i).copied().unwrap_or(0.0) * cfg.window()[i];
                    v * v
                })
                .sum();
            let frame = s.frame(t);
            let last = frame.len() - 1;
            let spectral: f64 = frame
                .iter()
                .enumerate()
                .map(|(k, c)| if k == 0 || k == last { c.norm_sqr() } else { 2.0 * c.norm_sqr() })
                .sum::<f64>()
                / n as f64;
            prop_assert!(rel_close(time, spectral, 1e-6, time));
        }
    }

    #[test]
    fn istft_reconstructs_the_interior(x in signal(3000)) {
        let cfg = StftConfig::default();
        let w = Waveform::new(x.clone(), 16000).unwrap();
        let back = istft(&overair_core::signal::stft(&w, &cfg).unwrap(), &cfg).unwrap();
        prop_assert_eq!(back.len(), x.len());
        // the periodic window is zero at the first sample, which no frame can recover
        let hop = cfg.hop();
        for (a, b) in back.samples()[hop..x.len() - hop].iter().zip(&x[hop..]) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn filtering_is_time_invariant(x in signal(400), shift in 1usize..200) {
        let k = design_bandpass(300.0, 3000.0, 16000, 41).unwrap();
        let mut shifted = vec![0.0; shift];
        shifted.extend_from_slice(&x);
        let y = convolve_samples(&x, k.taps()).unwrap();
        let ys = convolve_samples(&shifted, k.taps()).unwrap();
        prop_assert!(ys[..shift].iter().all(|v| *v == 0.0));
        prop_assert_eq!(&ys[shift..], &y[..]);
    }

    #[test]
    fn long_filter_shift_matches_to_rounding(x in signal(700), shift in 1usize..300) {
        let k = design_bandpass(50.0, 7900.0, 16000, 511).unwrap();
        let mut shifted = vec![0.0; shift];
        shifted.extend_from_slice(&x);
        let y = convolve_samples(&x, k.taps()).unwrap();
        let ys = convolve_samples(&shifted, k.taps()).unwrap();
        for (a, b) in ys[shift..].iter().zip(&y) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn convolution_adjoint_satisfies_the_dot_product_identity(x in signal(200), g in signal(289), k in signal(90)) {
        let y = convolve_samples(&x, &k).unwrap();
        let back = convolve_adjoint(&g, &k, x.len()).unwrap();
        let lhs: f64 = y.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        prop_assert!(rel_close(lhs, rhs, 1e-9, lhs.abs().max(1.0)));
    }
}
