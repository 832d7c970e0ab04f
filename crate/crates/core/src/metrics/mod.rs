//! Edit-distance error rates and the held-out room evaluation harness.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asr::Recognizer;
use crate::channel::{AugmentConfig, Channel};
use crate::error::{Error, Result};
use crate::room::Rir;
use crate::rng;
use crate::signal::Waveform;

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = diag + usize::from(x != y);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(row[j + 1] + 1);
        }
    }
    row[b.len()]
}

/// Word error rate over whitespace tokens.
pub fn wer(reference: &str, hypothesis: &str) -> Result<f64> {
    let r: Vec<&str> = reference.split_whitespace().collect();
    if r.is_empty() {
        return Err(Error::invalid("reference has no words"));
    }
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    Ok(edit_distance(&r, &h) as f64 / r.len() as f64)
}

/// Character error rate with whitespace removed, standing in for phoneme error rate.
pub fn per(reference: &str, hypothesis: &str) -> Result<f64> {
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    if r.is_empty() {
        return Err(Error::invalid("reference has no characters"));
    }
    let h: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();
    Ok(edit_distance(&r, &h) as f64 / r.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub trials: usize,
    /// Share of generated rooms kept out of attack generation.
    pub heldout_fraction: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            trials: 10,
            heldout_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub room: usize,
    pub left_pad: usize,
    pub right_pad: usize,
    pub transcript: String,
    pub success: bool,
    pub per: f64,
    pub wer: f64,
}

/// How the evaluated attack was produced; echoed into the report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationInfo {
    pub fr: bool,
    pub rs: bool,
    pub ts: bool,
    pub lambda: f64,
    pub iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub channel: String,
    pub per_note: String,
    pub target: String,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub per: f64,
    pub wer: f64,
    pub generation: Option<GenerationInfo>,
    pub trial_results: Vec<Trial>,
}

pub const REPORT_CSV_HEADER: &str = "fr,rs,ts,lambda,success_rate,per,wer,generation_iterations";

impl EvalReport {
    fn from_trials(target: &str, trials: Vec<Trial>) -> Self {
        let n = trials.len();
        let successes = trials.iter().filter(|t| t.success).count();
        Self {
            channel: "simulated".into(),
            per_note: "PER is a character error rate; the toy vocabulary has no phoneme layer".into(),
            target: target.into(),
            trials: n,
            successes,
            success_rate: successes as f64 / n as f64,
            per: trials.iter().map(|t| t.per).sum::<f64>() / n as f64,
            wer: trials.iter().map(|t| t.wer).sum::<f64>() / n as f64,
            generation: None,
            trial_results: trials,
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    /// One header line and one row in the order FR, RS, TS, λ, success rate, PER, WER, iterations.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::fs::File::create(path)?;
        let sign = |b: bool| if b { "+" } else { "-" };
        let (fr, rs, ts, lambda, iterations) = match &self.generation {
            Some(g) => (sign(g.fr), sign(g.rs), sign(g.ts), format!("{:.6}", g.lambda), g.iterations.to_string()),
            None => ("", "", "", String::new(), String::new()),
        };
        writeln!(out, "{REPORT_CSV_HEADER}")?;
        writeln!(
            out,
            "{fr},{rs},{ts},{lambda},{:.6},{:.6},{:.6},{iterations}",
            self.success_rate, self.per, self.wer
        )?;
        Ok(())
    }
}

/// Plays `attack` through randomly drawn held-out rooms with random pads and
/// scores each transcript against `target`.
pub fn evaluate_attack(
    attack: &Waveform,
    target: &str,
    heldout: &[Rir],
    recognizer: &dyn Recognizer,
    augment: &AugmentConfig,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if cfg.trials == 0 {
        return Err(Error::Config("evaluation needs at least one trial".into()));
    }
    let channel = Channel::new(
        attack.len(),
        heldout,
        &AugmentConfig {
            room_batch: None,
            ..augment.clone()
        },
    )?;
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let key = rng::stream(cfg.seed, &[i as u64]).gen::<u64>();
            let room = rng::stream(key, &[u64::MAX]).gen_range(0..heldout.len());
            let (l, r) = channel.draw_pads(key, room);
            let y = channel.forward(attack.samples(), room, l, r)?;
            let transcript = recognizer.transcribe(&y)?;
            Ok(Trial {
                room,
                left_pad: l,
                right_pad: r,
                success: transcript == target,
                per: per(target, &transcript)?,
                wer: wer(target, &transcript)?,
                transcript,
            })
        })
        .enumerate()
        .map(|(i, t): (usize, Result<Trial>)| t.map_err(|e| e.context(format!("trial {i}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_trials(target, trials))
}
