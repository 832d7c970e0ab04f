use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ism::RirConfig;
use crate::error::{Error, Result};
use crate::rng;

const MAX_RETRIES: usize = 1000;
/// Closest allowed speaker/microphone spacing in metres.
const MIN_SPACING: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SofaBox {
    /// Corner closest to the origin, metres.
    pub min: [f64; 3],
    pub size: [f64; 3],
}

impl SofaBox {
    pub fn max(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| self.min[i] + self.size[i])
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let max = self.max();
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= max[i])
    }
}

/// Absorption coefficients in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Absorption {
    pub floor: f64,
    pub ceiling: f64,
    /// Walls at x = 0, x = width, y = 0, y = depth.
    pub walls: [f64; 4],
    /// Index into `walls` of the wall carrying the curtain.
    pub curtain_wall: usize,
    pub sofa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    /// Width (x), depth (y), height (z) in metres.
    pub dimensions: [f64; 3],
    pub sofa: SofaBox,
    pub absorption: Absorption,
    pub speaker: [f64; 3],
    pub mic: [f64; 3],
}

impl Default for Room {
    fn default() -> Self {
        Self {
            dimensions: [5.0, 4.0, 2.7],
            sofa: SofaBox {
                min: [1.6, 2.4, 0.0],
                size: [1.8, 0.8, 0.7],
            },
            absorption: Absorption {
                floor: 0.25,
                ceiling: 0.15,
                walls: [0.10, 0.40, 0.10, 0.10],
                curtain_wall: 1,
                sofa: 0.60,
            },
            speaker: [1.0, 1.2, 1.0],
            mic: [3.0, 1.5, 1.2],
        }
    }
}

fn inside(p: [f64; 3], dims: [f64; 3]) -> bool {
    (0..3).all(|i| p[i] > 0.0 && p[i] < dims[i])
}

fn unit(a: f64) -> bool {
    (0.0..=1.0).contains(&a)
}

impl Room {
    pub fn validate(&self) -> Result<()> {
        let d = self.dimensions;
        if d.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::invalid(format!("room dimensions {d:?} must be positive")));
        }
        let s = &self.sofa;
        let max = s.max();
        if (0..3).any(|i| !(s.size[i] > 0.0 && s.min[i] >= 0.0 && max[i] < d[i])) {
            return Err(Error::invalid("sofa box is not strictly inside the room"));
        }
        for (name, p) in [("speaker", self.speaker), ("mic", self.mic)] {
            if !inside(p, d) {
                return Err(Error::invalid(format!("{name} {p:?} is outside the room")));
            }
            if s.contains(p) {
                return Err(Error::invalid(format!("{name} {p:?} is inside the sofa")));
            }
        }
        if distance(self.speaker, self.mic) < MIN_SPACING {
            return Err(Error::invalid("speaker and mic coincide"));
        }
        let a = &self.absorption;
        if !(unit(a.floor) && unit(a.ceiling) && unit(a.sofa) && a.walls.iter().all(|&w| unit(w))) {
            return Err(Error::invalid("absorption coefficients must lie in [0, 1]"));
        }
        if a.curtain_wall >= 4 {
            return Err(Error::invalid("curtain wall index must be 0..4"));
        }
        Ok(())
    }

    /// Floor absorption blended with the sofa fabric over the sofa's footprint.
    pub fn effective_floor_absorption(&self) -> f64 {
        let floor_area = self.dimensions[0] * self.dimensions[1];
        let ratio = (self.sofa.size[0] * self.sofa.size[1] / floor_area).min(1.0);
        (1.0 - ratio) * self.absorption.floor + ratio * self.absorption.sofa
    }

    /// Absorption per surface in the order x0, x1, y0, y1, floor, ceiling.
    pub fn surface_absorption(&self) -> [f64; 6] {
        let w = self.absorption.walls;
        [w[0], w[1], w[2], w[3], self.effective_floor_absorption(), self.absorption.ceiling]
    }

    pub fn source_distance(&self) -> f64 {
        distance(self.speaker, self.mic)
    }
}

pub(crate) fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoomGenConfig {
    pub count: usize,
    /// ± metres applied independently to width, depth and height.
    pub wall_jitter: f64,
    /// ± metres applied independently per axis to speaker and mic.
    pub position_jitter: f64,
    pub seed: u64,
}

impl Default for RoomGenConfig {
    fn default() -> Self {
        Self {
            count: 700,
            wall_jitter: 0.5,
            position_jitter: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomVariant {
    pub id: usize,
    pub room: Room,
}

fn jitter(rng: &mut impl Rng, range: f64) -> f64 {
    if range > 0.0 {
        rng.gen_range(-range..=range)
    } else {
        0.0
    }
}

pub fn generate_rooms(template: &Room, cfg: &RoomGenConfig) -> Result<Vec<RoomVariant>> {
    template.validate()?;
    if cfg.count == 0 {
        return Err(Error::Config("room count must be positive".into()));
    }
    if !(cfg.wall_jitter >= 0.0 && cfg.position_jitter >= 0.0) {
        return Err(Error::Config("jitter ranges must be non-negative".into()));
    }
    (0..cfg.count)
        .map(|id| {
            let mut r = rng::stream(cfg.seed, &[id as u64]);
            for _ in 0..MAX_RETRIES {
                let mut room = *template;
                for d in &mut room.dimensions {
                    *d += jitter(&mut r, cfg.wall_jitter);
                }
                for i in 0..3 {
                    room.speaker[i] += jitter(&mut r, cfg.position_jitter);
                    room.mic[i] += jitter(&mut r, cfg.position_jitter);
                }
                if room.validate().is_ok() {
                    return Ok(RoomVariant { id, room });
                }
            }
            Err(Error::Generation(format!(
                "room {id}: no valid placement after {MAX_RETRIES} attempts"
            )))
        })
        .collect()
}

/// Serialized room specification: template, generator settings and the
/// generated variants for attack generation and held-out evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSet {
    pub template: Room,
    pub generation_config: RoomGenConfig,
    pub heldout_config: RoomGenConfig,
    pub rir: RirConfig,
    pub generation: Vec<RoomVariant>,
    pub heldout: Vec<RoomVariant>,
}

impl RoomSet {
    pub fn generate(
        template: &Room,
        generation_config: RoomGenConfig,
        heldout_config: RoomGenConfig,
        rir: RirConfig,
    ) -> Result<Self> {
        if generation_config.seed == heldout_config.seed {
            return Err(Error::Config(
                "held-out rooms need a seed distinct from the generation rooms".into(),
            ));
        }
        Ok(Self {
            template: *template,
            generation: generate_rooms(template, &generation_config)?,
            heldout: generate_rooms(template, &heldout_config)?,
            generation_config,
            heldout_config,
            rir,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }
}
