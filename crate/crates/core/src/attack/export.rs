//! History CSV and playable WAV output.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{AttackResult, HistoryRecord};
use crate::error::{Error, Result};
use crate::signal::{write_wav, Waveform};

pub const HISTORY_HEADER: &str = "iteration,lambda,ctc_sum,f_pam,matches,total_rooms";

pub fn write_history_csv(path: &Path, history: &[HistoryRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "{HISTORY_HEADER}")?;
    for h in history {
        writeln!(
            out,
            "{},{:.6},{},{},{},{}",
            h.iteration, h.lambda, h.ctc_sum, h.f_pam, h.matches, h.total_rooms
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_history_csv(path: &Path) -> Result<Vec<HistoryRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(HISTORY_HEADER) {
        return Err(Error::Format(format!("{}: unexpected history header", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Format(format!("{}: line {}: {line:?}", path.display(), i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad());
            }
            Ok(HistoryRecord {
                iteration: f[0].parse().map_err(|_| bad())?,
                lambda: f[1].parse().map_err(|_| bad())?,
                ctc_sum: f[2].parse().map_err(|_| bad())?,
                f_pam: f[3].parse().map_err(|_| bad())?,
                matches: f[4].parse().map_err(|_| bad())?,
                total_rooms: f[5].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// For each λ that achieved a total match, the first iteration it did so.
pub fn iterations_per_lambda(history: &[HistoryRecord]) -> Vec<(f64, u64)> {
    let mut out: Vec<(f64, u64)> = Vec::new();
    for h in history.iter().filter(|h| h.matches == h.total_rooms) {
        if out.last().map_or(true, |&(l, _)| h.lambda > l) {
            out.push((h.lambda, h.iteration));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExportSummary {
    pub attack_path: PathBuf,
    pub delta_path: PathBuf,
    /// Samples of x + Δ that fell outside [-1, 1].
    pub clipped: usize,
}

/// Writes `attack.wav` (x + Δ) and `delta.wav` (Δ) into `dir`.
pub fn export_attack(result: &AttackResult, dir: &Path) -> Result<ExportSummary> {
    std::fs::create_dir_all(dir)?;
    let attack_path = dir.join("attack.wav");
    let delta_path = dir.join("delta.wav");
    let clipped = result.adversarial.samples().iter().filter(|s| s.abs() > 1.0).count();
    write_wav(&attack_path, &result.adversarial)?;
    write_wav(&delta_path, &result.delta)?;
    Ok(ExportSummary {
        attack_path,
        delta_path,
        clipped,
    })
}

/// `x + Δ` as the exporter writes it, before quantization.
pub fn clipped_sum(x: &Waveform, delta: &Waveform) -> Result<Waveform> {
    if x.len() != delta.len() {
        return Err(Error::invalid("carrier and perturbation lengths differ"));
    }
    let s = x.samples().iter().zip(delta.samples()).map(|(a, b)| (a + b).clamp(-1.0, 1.0)).collect();
    Waveform::new(s, x.sample_rate())
}
