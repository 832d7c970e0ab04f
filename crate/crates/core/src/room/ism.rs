//! Image-source impulse responses for a rectangular room.
//!
//! Along each axis an image is indexed by `(n, q)`: its coordinate is
//! `(1 - 2q)·s + 2nL`, and it has undergone `|n - q|` reflections from the
//! wall at 0 and `|n|` from the wall at `L`. Each image contributes a
//! band-limited impulse of amplitude `Π β / d` at delay `d / c`, with
//! `β = sqrt(1 - α)` per reflection.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::geometry::{distance, Room, RoomVariant};
use crate::error::{Error, Result};
use crate::signal::{convolve, Waveform, SAMPLE_RATE};

pub const SPEED_OF_SOUND: f64 = 343.0;
/// Taps of the windowed-sinc fractional-delay kernel.
const DELAY_TAPS: usize = 81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RirConfig {
    pub max_order: usize,
    pub max_len_s: f64,
    pub sample_rate: u32,
}

impl Default for RirConfig {
    fn default() -> Self {
        Self {
            max_order: 6,
            max_len_s: 0.5,
            sample_rate: SAMPLE_RATE,
        }
    }
}

impl RirConfig {
    pub fn max_taps(&self) -> usize {
        (self.max_len_s * self.sample_rate as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    taps: Vec<f64>,
    peak_delay: usize,
}

impl Rir {
    pub fn from_taps(taps: Vec<f64>) -> Result<Self> {
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("impulse response has non-finite taps"));
        }
        let peak_delay = taps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .ok_or_else(|| Error::invalid("impulse response is empty"))?;
        if taps[peak_delay] == 0.0 {
            return Err(Error::invalid("impulse response is all zeros"));
        }
        Ok(Self { taps, peak_delay })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn peak_delay(&self) -> usize {
        self.peak_delay
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }

    /// Peak-normalized copy for listening.
    pub fn to_waveform(&self, sample_rate: u32) -> Waveform {
        let peak = self.taps[self.peak_delay].abs();
        let samples = self.taps.iter().map(|t| 0.9 * t / peak).collect();
        Waveform::new(samples, sample_rate).expect("taps are finite")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub position: [f64; 3],
    /// Reflections per surface, x0, x1, y0, y1, floor, ceiling.
    pub reflections: [u32; 6],
    pub gain: f64,
}

impl ImageSource {
    pub fn order(&self) -> u32 {
        self.reflections.iter().sum()
    }
}

/// All image sources of reflection order `<= max_order`, including the source itself.
pub fn image_sources(room: &Room, max_order: usize) -> Vec<ImageSource> {
    let beta = room.surface_absorption().map(|a| (1.0 - a).max(0.0).sqrt());
    let m = max_order as i64;
    // per axis: (coordinate, reflections at 0, reflections at L)
    let axis = |a: usize| -> Vec<(f64, u32, u32)> {
        let s = room.speaker[a];
        let l = room.dimensions[a];
        let mut out = Vec::new();
        for n in -m..=m + 1 {
            for q in 0..=1i64 {
                let lo = (n - q).unsigned_abs() as u32;
                let hi = n.unsigned_abs() as u32;
                if (lo + hi) as usize <= max_order {
                    out.push(((1 - 2 * q) as f64 * s + 2.0 * n as f64 * l, lo, hi));
                }
            }
        }
        out
    };
    let (xs, ys, zs) = (axis(0), axis(1), axis(2));
    let mut images = Vec::new();
    for &(x, x0, x1) in &xs {
        for &(y, y0, y1) in &ys {
            for &(z, z0, z1) in &zs {
                let reflections = [x0, x1, y0, y1, z0, z1];
                if reflections.iter().sum::<u32>() as usize > max_order {
                    continue;
                }
                let gain = reflections
                    .iter()
                    .zip(&beta)
                    .map(|(&r, &b)| b.powi(r as i32))
                    .product();
                images.push(ImageSource {
                    position: [x, y, z],
                    reflections,
                    gain,
                });
            }
        }
    }
    images
}

fn delay_window(t: f64) -> f64 {
    let half = (DELAY_TAPS / 2) as f64 + 1.0;
    if t.abs() >= half {
        0.0
    } else {
        0.5 * (1.0 + (PI * t / half).cos())
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

pub fn compute_rir(variant: &RoomVariant, cfg: &RirConfig) -> Result<Rir> {
    let room = &variant.room;
    room.validate()
        .map_err(|e| Error::invalid(format!("room {}: degenerate geometry ({e})", variant.id)))?;
    if cfg.sample_rate == 0 || cfg.max_taps() == 0 {
        return Err(Error::invalid("impulse response length must be positive"));
    }
    let sr = cfg.sample_rate as f64;
    let len = cfg.max_taps();
    let mut taps = vec![0.0; len];
    let half = (DELAY_TAPS / 2) as i64;
    for img in image_sources(room, cfg.max_order) {
        if img.gain == 0.0 {
            continue;
        }
        let d = distance(img.position, room.mic);
        let centre = d / SPEED_OF_SOUND * sr;
        let amp = img.gain / d;
        let base = centre.round() as i64;
        for n in (base - half).max(0)..=(base + half) {
            if n as usize >= len {
                break;
            }
            let t = n as f64 - centre;
            taps[n as usize] += amp * sinc(t) * delay_window(t);
        }
    }
    Rir::from_taps(taps).map_err(|e| e.context(format!("room {}", variant.id)))
}

pub fn apply_rir(w: &Waveform, rir: &Rir) -> Result<Waveform> {
    convolve(w, rir.taps())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn variant(room: Room) -> RoomVariant {
        RoomVariant { id: 0, room }
    }

    fn anechoic() -> Room {
        let mut r = Room::default();
        r.absorption.floor = 1.0;
        r.absorption.ceiling = 1.0;
        r.absorption.walls = [1.0; 4];
        r.absorption.sofa = 1.0;
        r
    }

    #[test]
    fn fully_absorbing_room_has_only_the_direct_path() {
        let mut room = anechoic();
        room.speaker = [0.5, 0.5, 1.2];
        room.mic = [4.5, 3.5, 1.2];
        let d = room.source_distance();
        assert!((d - 5.0).abs() < 1e-9);
        let rir = compute_rir(&variant(room), &RirConfig::default()).unwrap();
        let centre = d / SPEED_OF_SOUND * 16000.0;
        assert!((centre - 233.236).abs() < 1e-3);
        assert!((rir.peak_delay() as f64 - centre).abs() <= 0.5);
        let nonzero: Vec<usize> = (0..rir.len()).filter(|&i| rir.taps()[i] != 0.0).collect();
        assert!(*nonzero.first().unwrap() >= 233 - 40);
        assert!(*nonzero.last().unwrap() <= 233 + 40);
        let area: f64 = rir.taps().iter().sum();
        assert!((area - 1.0 / d).abs() / (1.0 / d) < 0.01, "{area}");
    }

    #[test]
    fn order_zero_ignores_absorption() {
        let room = Room::default();
        let cfg = RirConfig {
            max_order: 0,
            ..Default::default()
        };
        let a = compute_rir(&variant(room), &cfg).unwrap();
        let b = compute_rir(&variant(anechoic_with_positions(&room)), &cfg).unwrap();
        assert_eq!(a, b);
    }

    fn anechoic_with_positions(room: &Room) -> Room {
        let mut a = anechoic();
        a.speaker = room.speaker;
        a.mic = room.mic;
        a
    }

    #[test]
    fn tail_energy_falls_as_absorption_rises() {
        let room = Room::default();
        let mut damp = room;
        damp.absorption.walls[0] = 0.6;
        let cfg = RirConfig::default();
        let live = compute_rir(&variant(room), &cfg).unwrap();
        let dead = compute_rir(&variant(damp), &cfg).unwrap();
        let start = live.peak_delay() + 41;
        let tail = |r: &Rir| r.taps()[start..].iter().map(|t| t * t).sum::<f64>();
        assert!(tail(&dead) < tail(&live));
    }

    #[test]
    fn reciprocity() {
        let room = Room::default();
        let mut swapped = room;
        swapped.speaker = room.mic;
        swapped.mic = room.speaker;
        let cfg = RirConfig::default();
        let a = compute_rir(&variant(room), &cfg).unwrap();
        let b = compute_rir(&variant(swapped), &cfg).unwrap();
        for (x, y) in a.taps().iter().zip(b.taps()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    /// Independent listing: every sequence of up to `order` mirror operations
    /// across the six surfaces, deduplicated by resulting position.
    fn mirrored_images(room: &Room, order: usize) -> BTreeMap<[i64; 3], (u32, f64)> {
        let beta = room.surface_absorption().map(|a| (1.0 - a).sqrt());
        let planes: [(usize, f64); 6] = [
            (0, 0.0),
            (0, room.dimensions[0]),
            (1, 0.0),
            (1, room.dimensions[1]),
            (2, 0.0),
            (2, room.dimensions[2]),
        ];
        let key = |p: [f64; 3]| p.map(|v| (v * 1e6).round() as i64);
        let mut found = BTreeMap::new();
        let mut frontier = vec![(room.speaker, None::<usize>, 0u32, 1.0)];
        found.insert(key(room.speaker), (0, 1.0));
        for _ in 0..order {
            let mut next = Vec::new();
            for &(p, last, ord, gain) in &frontier {
                for (s, &(axis, at)) in planes.iter().enumerate() {
                    if last == Some(s) {
                        continue;
                    }
                    let mut q = p;
                    q[axis] = 2.0 * at - p[axis];
                    let g = gain * beta[s];
                    found.entry(key(q)).or_insert((ord + 1, g));
                    next.push((q, Some(s), ord + 1, g));
                }
            }
            frontier = next;
        }
        found
    }

    #[test]
    fn lattice_matches_mirror_enumeration() {
        let room = Room::default();
        for order in 0..=2 {
            let lattice = image_sources(&room, order);
            let listing = mirrored_images(&room, order);
            assert_eq!(lattice.len(), listing.len(), "order {order}");
            for img in &lattice {
                let k = img.position.map(|v| (v * 1e6).round() as i64);
                let (ord, gain) = listing[&k];
                assert_eq!(ord, img.order());
                assert!((gain - img.gain).abs() < 1e-12);
            }
        }
        assert_eq!(image_sources(&room, 2).len(), 25);
    }

    #[test]
    fn apply_rir_identity_and_delay() {
        let w = Waveform::new(vec![0.1, -0.2, 0.3], 16000).unwrap();
        let id = Rir::from_taps(vec![1.0]).unwrap();
        assert_eq!(apply_rir(&w, &id).unwrap().samples(), w.samples());
        let delay = Rir::from_taps(vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(apply_rir(&w, &delay).unwrap().samples(), &[0.0, 0.0, 0.1, -0.2, 0.3]);
        assert!(Rir::from_taps(vec![0.0; 4]).is_err());
    }

    #[test]
    fn rir_is_deterministic() {
        let v = variant(Room::default());
        let cfg = RirConfig::default();
        assert_eq!(compute_rir(&v, &cfg).unwrap(), compute_rir(&v, &cfg).unwrap());
    }
}
