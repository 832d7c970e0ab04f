//! Perturbation search: multi-room CTC loss plus a scheduled masking penalty.

mod checkpoint;
mod export;

pub use checkpoint::AttackState;
pub use export::{clipped_sum, export_attack, iterations_per_lambda, read_history_csv, write_history_csv, ExportSummary, HISTORY_HEADER};

use std::path::PathBuf;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asr::ctc::required_frames;
use crate::asr::Recognizer;
use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::optim::OptimizerParams;
use crate::psycho::{compute_masking_thresholds, MaskingThresholdMatrix, PamEvaluator};
use crate::signal::{stft, StftConfig, Waveform};
use crate::{registry, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub lambda_step: f64,
    pub lambda_max: f64,
    pub check_interval: usize,
    pub max_iterations: usize,
    pub optimizer: String,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Largest allowed |Δ| per sample.
    pub clip: f64,
    /// Half-width of the uniform noise Δ starts from.
    pub init_noise: f64,
    /// Write a checkpoint after every this many checks; 0 disables.
    pub checkpoint_every: usize,
    pub checkpoint_path: Option<PathBuf>,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            lambda_step: 0.05,
            lambda_max: 1.0,
            check_interval: 10,
            max_iterations: 20_000,
            optimizer: "adam".into(),
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip: 0.5,
            init_noise: 1e-4,
            checkpoint_every: 0,
            checkpoint_path: None,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_step > 0.0 && self.lambda_step <= 1.0) {
            return Err(Error::Config(format!("lambda_step {} outside (0, 1]", self.lambda_step)));
        }
        if !(self.lambda_max >= 0.0 && self.lambda_max <= 1.0) {
            return Err(Error::Config(format!("lambda_max {} outside [0, 1]", self.lambda_max)));
        }
        if self.check_interval == 0 {
            return Err(Error::Config("check_interval must be at least 1".into()));
        }
        if !(self.clip > 0.0 && self.clip <= 1.0) {
            return Err(Error::Config(format!("clip {} outside (0, 1]", self.clip)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..=self.clip).contains(&self.init_noise) {
            return Err(Error::Config("init_noise must lie in [0, clip]".into()));
        }
        Ok(())
    }

    /// Number of increments from zero to `lambda_max`.
    pub fn lambda_steps(&self) -> u64 {
        // the small slack keeps 1 / 0.05 from rounding up to 21
        ((self.lambda_max / self.lambda_step) - 1e-9).ceil().max(0.0) as u64
    }

    /// λ after `k` increments.
    pub fn lambda_at(&self, k: u64) -> f64 {
        if k >= self.lambda_steps() {
            self.lambda_max
        } else {
            k as f64 * self.lambda_step
        }
    }

    fn optimizer_params(&self) -> OptimizerParams {
        OptimizerParams {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// One row of the run history, written at every match check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRecord {
    pub iteration: u64,
    /// λ in force when the check ran.
    pub lambda: f64,
    /// CTC loss summed over every room of the check channel.
    pub ctc_sum: f64,
    pub f_pam: f64,
    pub matches: u32,
    pub total_rooms: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackStatus {
    Success,
    IterationBudgetExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub delta: Waveform,
    pub adversarial: Waveform,
    pub lambda: f64,
    pub status: AttackStatus,
    pub iterations: u64,
    pub history: Vec<HistoryRecord>,
    /// Check-channel transcripts for the returned Δ.
    pub transcripts: Vec<String>,
}

/// Value of the combined objective and its parts.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub ctc_sum: f64,
    pub f_pam: f64,
    pub gradient: Vec<f64>,
}

/// A carrier, a target, a planned channel and a recognizer: everything the
/// objective needs besides Δ and λ.
pub struct AttackProblem<'a> {
    carrier: &'a Waveform,
    target: Vec<usize>,
    target_text: String,
    channel: &'a Channel,
    recognizer: &'a dyn Recognizer,
    mask: MaskingThresholdMatrix,
    stft: StftConfig,
}

impl<'a> AttackProblem<'a> {
    pub fn new(carrier: &'a Waveform, target: &str, channel: &'a Channel, recognizer: &'a dyn Recognizer) -> Result<Self> {
        let stft_cfg = StftConfig::default();
        let mask = compute_masking_thresholds(&stft(carrier, &stft_cfg)?, &stft_cfg)?;
        Self::with_mask(carrier, target, channel, recognizer, mask)
    }

    pub fn with_mask(
        carrier: &'a Waveform,
        target: &str,
        channel: &'a Channel,
        recognizer: &'a dyn Recognizer,
        mask: MaskingThresholdMatrix,
    ) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::invalid("target transcript is empty"));
        }
        let classes = recognizer.vocab().encode(target)?;
        if carrier.len() != channel.input_len() {
            return Err(Error::invalid(format!(
                "carrier has {} samples, channel planned for {}",
                carrier.len(),
                channel.input_len()
            )));
        }
        let frames = recognizer.output_frames(channel.out_len());
        if required_frames(&classes) > frames {
            return Err(Error::invalid(format!(
                "target {target:?} needs {} frames, channel output yields {frames}",
                required_frames(&classes)
            )));
        }
        Ok(Self {
            carrier,
            target: classes,
            target_text: target.to_string(),
            channel,
            recognizer,
            mask,
            stft: StftConfig::default(),
        })
    }

    pub fn mask(&self) -> &MaskingThresholdMatrix {
        &self.mask
    }

    pub fn target(&self) -> &str {
        &self.target_text
    }

    fn attacked(&self, delta: &[f64]) -> Result<Vec<f64>> {
        if delta.len() != self.carrier.len() {
            return Err(Error::invalid(format!(
                "perturbation has {} samples, carrier {}",
                delta.len(),
                self.carrier.len()
            )));
        }
        Ok(self.carrier.samples().iter().zip(delta).map(|(x, d)| x + d).collect())
    }

    /// `Σ_rooms CTC(channel(x + Δ)) + λ·f_PAM(Δ)` over the rooms and pads
    /// drawn for `key`, with its gradient in Δ.
    pub fn combined_loss(&self, delta: &[f64], lambda: f64, key: u64) -> Result<LossValue> {
        self.loss_over(delta, lambda, &self.channel.draw(key))
    }

    /// As [`combined_loss`](Self::combined_loss) over explicit (room, left, right) draws.
    pub fn loss_over(&self, delta: &[f64], lambda: f64, draws: &[(usize, usize, usize)]) -> Result<LossValue> {
        let input = self.attacked(delta)?;
        let parts: Vec<(f64, Vec<f64>)> = draws
            .par_iter()
            .map(|&(room, l, r)| {
                let y = self.channel.forward(&input, room, l, r)?;
                let (loss, gy) = self.recognizer.loss_and_gradient(&y, &self.target)?;
                Ok((loss, self.channel.adjoint(&gy, room, l, r)?))
            })
            .zip(draws.par_iter())
            .map(|(res, &(room, _, _))| res.map_err(|e: Error| e.context(format!("room {room}"))))
            .collect::<Result<_>>()?;
        let mut gradient = vec![0.0; delta.len()];
        let mut ctc_sum = 0.0;
        for (loss, g) in &parts {
            ctc_sum += loss;
            for (a, b) in gradient.iter_mut().zip(g) {
                *a += b;
            }
        }
        let mut f_pam = 0.0;
        if lambda != 0.0 {
            let (v, g) = PamEvaluator::new(&self.mask, &self.stft).value_and_gradient(delta)?;
            f_pam = v;
            for (a, b) in gradient.iter_mut().zip(&g) {
                *a += lambda * b;
            }
        }
        Ok(LossValue {
            total: ctc_sum + lambda * f_pam,
            ctc_sum,
            f_pam,
            gradient,
        })
    }

    /// Transcripts and CTC losses of every room under the fixed check pads.
    pub fn check_rooms(&self, delta: &[f64]) -> Result<Vec<(String, f64)>> {
        let input = self.attacked(delta)?;
        self.channel
            .canonical()
            .par_iter()
            .map(|&(room, l, r)| {
                let y = self.channel.forward(&input, room, l, r)?;
                self.recognizer
                    .evaluate(&y, &self.target)
                    .map_err(|e| e.context(format!("room {room}")))
            })
            .collect()
    }

    /// Whether every room of the check channel decodes exactly to the target.
    pub fn check_total_match(&self, delta: &[f64]) -> Result<(bool, Vec<String>)> {
        let transcripts: Vec<String> = self.check_rooms(delta)?.into_iter().map(|(t, _)| t).collect();
        let all = transcripts.iter().all(|t| *t == self.target_text);
        Ok((all, transcripts))
    }

    pub fn f_pam(&self, delta: &[f64]) -> Result<f64> {
        PamEvaluator::new(&self.mask, &self.stft).value(delta)
    }
}

fn numeric_failure(iteration: u64, lambda: f64, loss: &LossValue, delta: &[f64]) -> Error {
    let bad = loss.gradient.iter().filter(|g| !g.is_finite()).count();
    let peak = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    Error::Numeric(format!(
        "iteration {iteration}, lambda {lambda}: ctc_sum {}, f_pam {}, {bad} non-finite gradient entries, max |delta| {peak}",
        loss.ctc_sum, loss.f_pam
    ))
}

/// Runs the λ-scheduled search from a fresh state.
pub fn generate_attack(problem: &AttackProblem, cfg: &AttackConfig) -> Result<AttackResult> {
    cfg.validate()?;
    let mut r = rng::stream(cfg.seed, &[0]);
    let delta: Vec<f64> = (0..problem.carrier.len())
        .map(|_| {
            if cfg.init_noise > 0.0 {
                r.gen_range(-cfg.init_noise..=cfg.init_noise)
            } else {
                0.0
            }
        })
        .collect();
    resume_attack(problem, cfg, AttackState::fresh(delta))
}

/// Continues a search from `state`, for example one read from a checkpoint.
pub fn resume_attack(problem: &AttackProblem, cfg: &AttackConfig, mut state: AttackState) -> Result<AttackResult> {
    cfg.validate()?;
    if state.delta.len() != problem.carrier.len() {
        return Err(Error::invalid("checkpoint perturbation does not fit the carrier"));
    }
    let mut opt = registry::make_optimizer(&cfg.optimizer, &cfg.optimizer_params(), state.delta.len())?;
    if state.optimizer.step > 0 {
        opt.restore(state.optimizer.clone());
    }
    let total_rooms = problem.channel.rooms() as u32;
    let mut checks_since_save = 0;

    while state.iteration < cfg.max_iterations as u64 {
        state.iteration += 1;
        let it = state.iteration;
        let lambda = cfg.lambda_at(state.lambda_k);
        let key = rng::mix64(rng::mix64(cfg.seed) ^ it);
        let loss = problem.combined_loss(&state.delta, lambda, key)?;
        if !loss.total.is_finite() || loss.gradient.iter().any(|g| !g.is_finite()) {
            return Err(numeric_failure(it, lambda, &loss, &state.delta));
        }
        opt.step(&mut state.delta, &loss.gradient);
        for d in &mut state.delta {
            *d = d.clamp(-cfg.clip, cfg.clip);
        }

        if it % cfg.check_interval as u64 != 0 {
            continue;
        }
        let rooms = problem.check_rooms(&state.delta)?;
        let ctc_sum: f64 = rooms.iter().map(|(_, l)| l).sum();
        let matches = rooms.iter().filter(|(t, _)| *t == problem.target_text).count() as u32;
        let f_pam = problem.f_pam(&state.delta)?;
        if !ctc_sum.is_finite() || !f_pam.is_finite() {
            return Err(Error::Numeric(format!("iteration {it}: check ctc_sum {ctc_sum}, f_pam {f_pam}")));
        }
        state.history.push(HistoryRecord {
            iteration: it,
            lambda,
            ctc_sum,
            f_pam,
            matches,
            total_rooms,
        });
        let transcripts: Vec<String> = rooms.into_iter().map(|(t, _)| t).collect();
        if matches == total_rooms {
            state.best = Some(checkpoint::Best {
                lambda,
                ctc_sum,
                matched: true,
                delta: state.delta.clone(),
                transcripts: transcripts.clone(),
            });
            if state.lambda_k >= cfg.lambda_steps() {
                state.optimizer = opt.state();
                return Ok(finish(problem, state, AttackStatus::Success));
            }
            state.lambda_k += 1;
        } else if state.best.as_ref().map_or(true, |b| !b.matched && ctc_sum < b.ctc_sum) {
            state.best = Some(checkpoint::Best {
                lambda,
                ctc_sum,
                matched: false,
                delta: state.delta.clone(),
                transcripts,
            });
        }
        checks_since_save += 1;
        if cfg.checkpoint_every > 0 && checks_since_save >= cfg.checkpoint_every {
            if let Some(path) = &cfg.checkpoint_path {
                state.optimizer = opt.state();
                state.save(path)?;
            }
            checks_since_save = 0;
        }
    }
    state.optimizer = opt.state();
    if state.best.is_none() {
        let (_, transcripts) = problem.check_total_match(&state.delta)?;
        state.best = Some(checkpoint::Best {
            lambda: cfg.lambda_at(state.lambda_k),
            ctc_sum: f64::INFINITY,
            matched: false,
            delta: state.delta.clone(),
            transcripts,
        });
    }
    Ok(finish(problem, state, AttackStatus::IterationBudgetExhausted))
}

fn finish(problem: &AttackProblem, state: AttackState, status: AttackStatus) -> AttackResult {
    let best = state.best.expect("a best state is recorded before finishing");
    let adversarial: Vec<f64> = problem.carrier.samples().iter().zip(&best.delta).map(|(x, d)| x + d).collect();
    let sr = problem.carrier.sample_rate();
    AttackResult {
        delta: Waveform::new(best.delta, sr).expect("finite perturbation"),
        adversarial: Waveform::new(adversarial, sr).expect("finite attack"),
        lambda: best.lambda,
        status,
        iterations: state.iteration,
        history: state.history,
        transcripts: best.transcripts,
    }
}
