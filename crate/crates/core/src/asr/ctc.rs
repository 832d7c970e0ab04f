//! Connectionist temporal classification loss, computed with the
//! forward-backward recursion entirely in log space.

use super::model::Logits;
use super::vocab::Vocab;
use crate::error::{Error, Result};

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub(crate) fn log_softmax_rows(l: &Logits) -> Vec<f64> {
    let c = l.classes();
    let mut out = vec![0.0; l.data().len()];
    for t in 0..l.frames() {
        let row = l.row(t);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for (o, v) in out[t * c..(t + 1) * c].iter_mut().zip(row) {
            *o = v - lse;
        }
    }
    out
}

/// Minimum number of frames able to emit `target`: one per symbol plus one
/// separating blank per adjacent repeat.
pub fn required_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Negative log-likelihood of `target` and its gradient w.r.t. the logits.
pub fn ctc_loss(l: &Logits, target: &[usize]) -> Result<(f64, Vec<f64>)> {
    let classes = l.classes();
    if let Some(&bad) = target.iter().find(|&&s| s == Vocab::BLANK || s >= classes) {
        return Err(Error::invalid(format!("target symbol {bad} is not a label")));
    }
    let frames = l.frames();
    if frames < required_frames(target).max(1) {
        return Err(Error::invalid(format!(
            "{frames} frames cannot emit a {}-symbol target (needs {})",
            target.len(),
            required_frames(target)
        )));
    }
    let lp = log_softmax_rows(l);
    let s_len = 2 * target.len() + 1;
    let label = |s: usize| if s % 2 == 0 { Vocab::BLANK } else { target[s / 2] };
    let can_skip = |s: usize| s >= 2 && s % 2 == 1 && label(s) != label(s - 2);
    let ninf = f64::NEG_INFINITY;

    let mut alpha = vec![ninf; frames * s_len];
    alpha[0] = lp[Vocab::BLANK];
    if s_len > 1 {
        alpha[1] = lp[label(1)];
    }
    for t in 1..frames {
        for s in 0..s_len {
            let prev = &alpha[(t - 1) * s_len..t * s_len];
            let mut acc = prev[s];
            if s >= 1 {
                acc = log_sum_exp(acc, prev[s - 1]);
            }
            if can_skip(s) {
                acc = log_sum_exp(acc, prev[s - 2]);
            }
            alpha[t * s_len + s] = acc + lp[t * classes + label(s)];
        }
    }
    let last = (frames - 1) * s_len;
    let log_p = if s_len > 1 {
        log_sum_exp(alpha[last + s_len - 1], alpha[last + s_len - 2])
    } else {
        alpha[last]
    };
    if !log_p.is_finite() {
        return Err(Error::Numeric("target has zero probability".into()));
    }

    // beta[t][s]: log-probability of completing the target from state s at t,
    // excluding the emission at t
    let mut beta = vec![ninf; frames * s_len];
    beta[last + s_len - 1] = 0.0;
    if s_len > 1 {
        beta[last + s_len - 2] = 0.0;
    }
    for t in (0..frames - 1).rev() {
        for s in 0..s_len {
            let next = (t + 1) * s_len;
            let emit = |s2: usize| beta[next + s2] + lp[(t + 1) * classes + label(s2)];
            let mut acc = emit(s);
            if s + 1 < s_len {
                acc = log_sum_exp(acc, emit(s + 1));
            }
            if s + 2 < s_len && can_skip(s + 2) {
                acc = log_sum_exp(acc, emit(s + 2));
            }
            beta[t * s_len + s] = acc;
        }
    }

    let mut grad = vec![0.0; frames * classes];
    for t in 0..frames {
        let row = &mut grad[t * classes..(t + 1) * classes];
        for (k, g) in row.iter_mut().enumerate() {
            *g = lp[t * classes + k].exp();
        }
        for s in 0..s_len {
            let occ = alpha[t * s_len + s] + beta[t * s_len + s] - log_p;
            if occ > ninf {
                row[label(s)] -= occ.exp();
            }
        }
    }
    Ok((-log_p, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_frame_uniform_example() {
        let l = Logits::new(2, 3, vec![0.0; 6]).unwrap();
        let (loss, _) = ctc_loss(&l, &[1]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_path_has_near_zero_loss() {
        // path a a - b
        let mut data = vec![-30.0; 4 * 3];
        for (t, k) in [(0, 1), (1, 1), (2, 0), (3, 2)] {
            data[t * 3 + k] = 30.0;
        }
        let l = Logits::new(4, 3, data).unwrap();
        let (loss, _) = ctc_loss(&l, &[1, 2]).unwrap();
        assert!(loss >= 0.0 && loss < 1e-10, "{loss}");
    }

    #[test]
    fn infeasible_targets_are_rejected() {
        let l = Logits::new(2, 3, vec![0.0; 6]).unwrap();
        assert!(ctc_loss(&l, &[1, 1]).is_err(), "repeat needs a blank between");
        assert!(ctc_loss(&l, &[1, 2, 1]).is_err());
        assert!(ctc_loss(&l, &[0]).is_err(), "blank is not a target label");
        assert!(ctc_loss(&l, &[3]).is_err());
        assert_eq!(required_frames(&[1, 1, 2, 2, 2]), 8);
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let data: Vec<f64> = (0..20).map(|i| ((i * 7) % 5) as f64 * 0.3).collect();
        let l = Logits::new(5, 4, data).unwrap();
        let (_, g) = ctc_loss(&l, &[2, 3]).unwrap();
        for t in 0..5 {
            let s: f64 = g[t * 4..(t + 1) * 4].iter().sum();
            assert!(s.abs() < 1e-12);
        }
    }
}
