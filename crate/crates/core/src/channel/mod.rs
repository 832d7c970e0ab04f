//! The playback channel: random time-shift padding, speaker band-pass,
//! room impulse response, microphone band-pass.
//!
//! Every stage is linear, so a [`Channel`] fuses the active filters of each
//! room into one kernel and exposes the exact adjoint for backpropagation.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::room::Rir;
use crate::rng;
use crate::signal::{convolve_samples, design_bandpass, FftConvolver, FilterKernel, Waveform, SAMPLE_RATE};

pub const FR_LOW_HZ: f64 = 50.0;
pub const FR_HIGH_HZ: f64 = 7900.0;
pub const FR_TAPS: usize = 511;

/// The speaker and microphone band-pass used on both sides of the room.
pub fn standard_fr() -> Result<FilterKernel> {
    design_bandpass(FR_LOW_HZ, FR_HIGH_HZ, SAMPLE_RATE, FR_TAPS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub enable_fr: bool,
    pub enable_rooms: bool,
    pub enable_timeshift: bool,
    /// Largest zero pad on either side, in samples.
    pub pad_max: usize,
    /// Rooms drawn per call; `None` uses every room.
    pub room_batch: Option<usize>,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enable_fr: true,
            enable_rooms: true,
            enable_timeshift: true,
            pad_max: 1600,
            room_batch: None,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn all_off() -> Self {
        Self {
            enable_fr: false,
            enable_rooms: false,
            enable_timeshift: false,
            ..Self::default()
        }
    }

    /// Pad drawn on each side by the deterministic check channel.
    pub fn canonical_pad(&self) -> usize {
        if self.enable_timeshift {
            self.pad_max / 2
        } else {
            0
        }
    }

    fn effective_pad_max(&self) -> usize {
        if self.enable_timeshift {
            self.pad_max
        } else {
            0
        }
    }
}

/// One channel realization: the processed waveform and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelOutput {
    /// Index into the room list given to the channel.
    pub room: usize,
    pub left_pad: usize,
    pub right_pad: usize,
    pub waveform: Waveform,
}

/// Zero-pads both ends with lengths drawn independently from `0..=pad_max`.
pub fn random_pad<R: Rng + ?Sized>(w: &Waveform, pad_max: usize, rng: &mut R) -> (Waveform, usize, usize) {
    let left = rng.gen_range(0..=pad_max);
    let right = rng.gen_range(0..=pad_max);
    (pad(w, left, right), left, right)
}

fn pad(w: &Waveform, left: usize, right: usize) -> Waveform {
    let mut out = vec![0.0; left];
    out.extend_from_slice(w.samples());
    out.resize(left + w.len() + right, 0.0);
    Waveform::new(out, w.sample_rate()).expect("padding keeps samples finite")
}

/// A planned channel for inputs of one fixed length over a fixed room list.
#[derive(Clone)]
pub struct Channel {
    cfg: AugmentConfig,
    input_len: usize,
    out_len: usize,
    rooms: usize,
    /// One fused kernel per room, or a single shared one when rooms are off.
    plans: Vec<FftConvolver>,
}

impl std::fmt::Debug for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Channel")
            .field("cfg", &self.cfg)
            .field("input_len", &self.input_len)
            .field("out_len", &self.out_len)
            .field("rooms", &self.rooms)
            .finish()
    }
}

impl Channel {
    /// Plans the channel for `input_len`-sample inputs.
    ///
    /// Outputs have one canonical length: the longest padded input plus the
    /// longest fused kernel, minus one.
    pub fn new(input_len: usize, rirs: &[Rir], cfg: &AugmentConfig) -> Result<Self> {
        if input_len == 0 {
            return Err(Error::invalid("channel input is empty"));
        }
        if rirs.is_empty() {
            return Err(Error::invalid("channel needs at least one room"));
        }
        if let Some(b) = cfg.room_batch {
            if b == 0 || b > rirs.len() {
                return Err(Error::invalid(format!(
                    "room batch {b} outside 1..={} rooms",
                    rirs.len()
                )));
            }
        }
        let fr = if cfg.enable_fr { Some(standard_fr()?) } else { None };
        let kernels: Vec<Vec<f64>> = if cfg.enable_rooms {
            rirs.par_iter()
                .map(|rir| fuse(fr.as_ref(), Some(rir.taps())))
                .collect::<Result<_>>()?
        } else if fr.is_some() {
            vec![fuse(fr.as_ref(), None)?]
        } else {
            Vec::new()
        };
        let max_input = input_len + 2 * cfg.effective_pad_max();
        let longest = kernels.iter().map(Vec::len).max().unwrap_or(1);
        let out_len = max_input + longest - 1;
        let plans = kernels
            .par_iter()
            .map(|k| FftConvolver::new(k, max_input, out_len))
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            input_len,
            out_len,
            rooms: rirs.len(),
            plans,
        })
    }

    pub fn config(&self) -> &AugmentConfig {
        &self.cfg
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    pub fn rooms(&self) -> usize {
        self.rooms
    }

    fn plan(&self, room: usize) -> Option<&FftConvolver> {
        match self.plans.len() {
            0 => None,
            1 if !self.cfg.enable_rooms => Some(&self.plans[0]),
            _ => Some(&self.plans[room]),
        }
    }

    fn check(&self, room: usize, left: usize, right: usize) -> Result<()> {
        if room >= self.rooms {
            return Err(Error::invalid(format!("room {room} outside 0..{}", self.rooms)));
        }
        let limit = self.cfg.effective_pad_max();
        if left > limit || right > limit {
            return Err(Error::invalid(format!("pads ({left}, {right}) exceed {limit}")));
        }
        Ok(())
    }

    /// Channel output for one room and fixed pads.
    pub fn forward(&self, x: &[f64], room: usize, left: usize, right: usize) -> Result<Vec<f64>> {
        if x.len() != self.input_len {
            return Err(Error::invalid(format!(
                "channel planned for {} samples, got {}",
                self.input_len,
                x.len()
            )));
        }
        self.check(room, left, right)?;
        let mut padded = vec![0.0; left];
        padded.extend_from_slice(x);
        padded.resize(left + x.len() + right, 0.0);
        let mut out = match self.plan(room) {
            Some(p) => p.apply(&padded),
            None => padded,
        };
        out.resize(self.out_len, 0.0);
        Ok(out)
    }

    /// Adjoint of [`forward`](Self::forward): maps an output gradient back to the input.
    pub fn adjoint(&self, grad: &[f64], room: usize, left: usize, right: usize) -> Result<Vec<f64>> {
        if grad.len() != self.out_len {
            return Err(Error::invalid(format!(
                "channel output has {} samples, gradient has {}",
                self.out_len,
                grad.len()
            )));
        }
        self.check(room, left, right)?;
        let padded_len = left + self.input_len + right;
        let g = match self.plan(room) {
            Some(p) => p.adjoint(grad, padded_len),
            None => grad[..padded_len].to_vec(),
        };
        Ok(g[left..left + self.input_len].to_vec())
    }

    /// Pads for one room under the call key `key`.
    pub fn draw_pads(&self, key: u64, room: usize) -> (usize, usize) {
        if !self.cfg.enable_timeshift {
            return (0, 0);
        }
        let mut r = rng::stream(key, &[room as u64]);
        (r.gen_range(0..=self.cfg.pad_max), r.gen_range(0..=self.cfg.pad_max))
    }

    /// Rooms used under the call key `key`, ascending.
    pub fn select_rooms(&self, key: u64) -> Vec<usize> {
        match self.cfg.room_batch {
            Some(b) if b < self.rooms => {
                let mut r = rng::stream(key, &[u64::MAX]);
                let mut picked = sample(&mut r, self.rooms, b).into_vec();
                picked.sort_unstable();
                picked
            }
            _ => (0..self.rooms).collect(),
        }
    }

    /// The rooms and pads of one randomized call.
    pub fn draw(&self, key: u64) -> Vec<(usize, usize, usize)> {
        self.select_rooms(key)
            .into_iter()
            .map(|room| {
                let (l, r) = self.draw_pads(key, room);
                (room, l, r)
            })
            .collect()
    }

    /// Every room with the fixed mid-range pads.
    pub fn canonical(&self) -> Vec<(usize, usize, usize)> {
        let p = self.cfg.canonical_pad();
        (0..self.rooms).map(|room| (room, p, p)).collect()
    }

    fn output(&self, w: &Waveform, room: usize, left: usize, right: usize) -> Result<ChannelOutput> {
        let out = self.forward(w.samples(), room, left, right)?;
        Ok(ChannelOutput {
            room,
            left_pad: left,
            right_pad: right,
            waveform: Waveform::new(out, w.sample_rate())?,
        })
    }
}

/// Convolves the optional band-pass, room, band-pass chain into one kernel.
fn fuse(fr: Option<&FilterKernel>, rir: Option<&[f64]>) -> Result<Vec<f64>> {
    match (fr, rir) {
        (Some(f), Some(r)) => {
            let once = convolve_samples(f.taps(), r)?;
            convolve_samples(&once, f.taps())
        }
        (Some(f), None) => convolve_samples(f.taps(), f.taps()),
        (None, Some(r)) => Ok(r.to_vec()),
        (None, None) => Ok(vec![1.0]),
    }
}

/// One randomized channel pass through a single room.
pub fn simulate_channel<R: Rng + ?Sized>(w: &Waveform, rir: &Rir, cfg: &AugmentConfig, rng: &mut R) -> Result<ChannelOutput> {
    w.ensure_non_empty("channel input")?;
    let single = AugmentConfig {
        room_batch: None,
        ..cfg.clone()
    };
    let channel = Channel::new(w.len(), std::slice::from_ref(rir), &single)?;
    let (left, right) = channel.draw_pads(rng.gen(), 0);
    channel.output(w, 0, left, right)
}

/// One randomized channel pass per selected room.
///
/// The rooms and the pads of each room come from counter-based streams keyed
/// by a single draw from `rng`, so the result does not depend on scheduling.
pub fn batch_channel<R: Rng + ?Sized>(
    x: &Waveform,
    rirs: &[Rir],
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<Vec<ChannelOutput>> {
    x.ensure_non_empty("channel input")?;
    let channel = Channel::new(x.len(), rirs, cfg)?;
    let key = rng.gen();
    channel
        .draw(key)
        .par_iter()
        .map(|&(room, l, r)| channel.output(x, room, l, r).map_err(|e| e.context(format!("room {room}"))))
        .collect()
}
