//! End-to-end workflow configuration and the stages shared by the CLI and tests.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asr::{featurize, synth_corpus, AcousticModel, CorpusConfig, Example, ModelDims, TrainConfig, TrainReport, ToyCtcRecognizer, Utterance, Vocab};
use crate::attack::AttackConfig;
use crate::channel::{AugmentConfig, Channel};
use crate::error::{Error, Result};
use crate::metrics::EvalConfig;
use crate::room::{compute_rir, generate_rooms, Rir, RirConfig, Room, RoomGenConfig, RoomSet, RoomVariant};
use crate::rng;
use crate::signal::Waveform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsrConfig {
    /// Registered recognizer name used to load model files.
    pub recognizer: String,
    pub hidden1: usize,
    pub hidden2: usize,
    /// Rooms drawn, separately from attack and evaluation rooms, to
    /// reverberate the training corpus.
    pub training_rooms: usize,
    /// Pass training audio through the channel; otherwise train on clean audio.
    pub augment_training: bool,
    pub train: TrainConfig,
}

impl Default for AsrConfig {
    fn default() -> Self {
        Self {
            recognizer: ToyCtcRecognizer::NAME.into(),
            hidden1: 32,
            hidden2: 32,
            training_rooms: 40,
            augment_training: true,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoomsConfig {
    pub template: Room,
    /// Rooms the attack is optimized over.
    pub generation: usize,
    /// Rooms reserved for evaluation.
    pub heldout: usize,
    pub wall_jitter: f64,
    pub position_jitter: f64,
    pub rir: RirConfig,
}

impl Default for RoomsConfig {
    fn default() -> Self {
        Self {
            template: Room::default(),
            generation: 20,
            heldout: 10,
            wall_jitter: 0.5,
            position_jitter: 0.3,
            rir: RirConfig {
                max_len_s: 0.25,
                ..RirConfig::default()
            },
        }
    }
}

/// Which utterance to attack and what it should become.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetConfig {
    /// Text rendered as the carrier when no carrier file is given.
    pub carrier_text: String,
    pub target: String,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            carrier_text: "bad".into(),
            target: "fec".into(),
        }
    }
}

/// One document configuring every workflow.
///
/// Section seeds are replaced by values derived from the top-level `seed`,
/// so a single number pins the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus: CorpusConfig,
    pub asr: AsrConfig,
    pub rooms: RoomsConfig,
    pub augment: AugmentConfig,
    pub attack: AttackConfig,
    pub eval: EvalConfig,
    pub carrier: TargetConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::reference()
    }
}

// Stage identifiers for seed derivation.
const CORPUS: u64 = 1;
const TRAIN: u64 = 2;
const TRAIN_ROOMS: u64 = 3;
const GEN_ROOMS: u64 = 4;
const HELDOUT_ROOMS: u64 = 5;
const AUGMENT: u64 = 6;
const ATTACK: u64 = 7;
const EVAL: u64 = 8;
const CARRIER: u64 = 9;

impl RunConfig {
    /// The desk-scale reference configuration.
    pub fn reference() -> Self {
        Self {
            seed: 2024,
            corpus: CorpusConfig::default(),
            asr: AsrConfig::default(),
            rooms: RoomsConfig::default(),
            augment: AugmentConfig::default(),
            attack: AttackConfig {
                lambda_max: 0.15,
                ..AttackConfig::default()
            },
            eval: EvalConfig::default(),
            carrier: TargetConfig::default(),
        }
        .derived()
    }

    pub fn stage_seed(&self, stage: u64) -> u64 {
        rng::mix64(rng::mix64(self.seed) ^ stage)
    }

    /// Copies the top-level seed into every section.
    pub fn derived(mut self) -> Self {
        self.corpus.seed = self.stage_seed(CORPUS);
        self.asr.train.seed = self.stage_seed(TRAIN);
        self.augment.seed = self.stage_seed(AUGMENT);
        self.attack.seed = self.stage_seed(ATTACK);
        self.eval.seed = self.stage_seed(EVAL);
        self
    }

    pub fn validate(&self) -> Result<()> {
        Vocab::new(&self.corpus.vocab).map_err(|e| Error::Config(e.to_string()))?;
        self.attack.validate()?;
        if self.rooms.generation == 0 || self.rooms.heldout == 0 {
            return Err(Error::Config("generation and held-out room counts must be positive".into()));
        }
        if let Some(b) = self.augment.room_batch {
            if b == 0 || b > self.rooms.generation {
                return Err(Error::Config(format!(
                    "room_batch {b} outside 1..={} generation rooms",
                    self.rooms.generation
                )));
            }
        }
        if self.eval.trials == 0 {
            return Err(Error::Config("eval.trials must be at least 1".into()));
        }
        if self.asr.augment_training && self.asr.training_rooms == 0 {
            return Err(Error::Config("augmented training needs training rooms".into()));
        }
        Ok(())
    }

    fn gen_config(&self, count: usize, stage: u64) -> RoomGenConfig {
        RoomGenConfig {
            count,
            wall_jitter: self.rooms.wall_jitter,
            position_jitter: self.rooms.position_jitter,
            seed: self.stage_seed(stage),
        }
    }

    pub fn make_rooms(&self) -> Result<RoomSet> {
        RoomSet::generate(
            &self.rooms.template,
            self.gen_config(self.rooms.generation, GEN_ROOMS),
            self.gen_config(self.rooms.heldout, HELDOUT_ROOMS),
            self.rooms.rir,
        )
    }

    pub fn training_rooms(&self) -> Result<Vec<Rir>> {
        let variants = generate_rooms(&self.rooms.template, &self.gen_config(self.asr.training_rooms, TRAIN_ROOMS))?;
        compute_rirs(&variants, &self.rooms.rir)
    }

    pub fn synth_corpus(&self) -> Result<Vec<Utterance>> {
        synth_corpus(&self.corpus)
    }

    /// The rendered carrier for `carrier.carrier_text`.
    pub fn carrier(&self) -> Result<Waveform> {
        let vocab = Vocab::new(&self.corpus.vocab)?;
        let mut r = rng::seeded(self.stage_seed(CARRIER));
        crate::asr::corpus::render(&self.carrier.carrier_text, &vocab, self.corpus.snr_db, &mut r)
    }

    pub fn train_recognizer(&self, corpus: &[Utterance]) -> Result<(ToyCtcRecognizer, TrainReport)> {
        let vocab = Vocab::new(&self.corpus.vocab)?;
        let rirs = if self.asr.augment_training {
            self.training_rooms()?
        } else {
            Vec::new()
        };
        let examples = training_examples(corpus, &vocab, &rirs, &self.augment, self.stage_seed(TRAIN))?;
        let dims = ModelDims::new(crate::asr::features::MEL_BINS, self.asr.hidden1, self.asr.hidden2, vocab.classes());
        let stats: Vec<_> = examples.iter().map(|e| e.features.clone()).collect();
        let mut model = AcousticModel::init(dims, &stats, self.asr.train.seed)?;
        let report = crate::asr::train(&mut model, &examples, &self.asr.train)?;
        Ok((ToyCtcRecognizer::new(model, vocab)?, report))
    }
}

pub fn compute_rirs(variants: &[RoomVariant], cfg: &RirConfig) -> Result<Vec<Rir>> {
    variants.par_iter().map(|v| compute_rir(v, cfg)).collect()
}

/// Features and labels for training, each utterance passed once through a
/// randomly drawn room (with the band-pass and random pads of `augment`)
/// when `rirs` is non-empty.
pub fn training_examples(
    corpus: &[Utterance],
    vocab: &Vocab,
    rirs: &[Rir],
    augment: &AugmentConfig,
    seed: u64,
) -> Result<Vec<Example>> {
    corpus
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let audio = if rirs.is_empty() {
                u.waveform.clone()
            } else {
                let mut r = rng::stream(seed, &[i as u64]);
                let room = r.gen_range(0..rirs.len());
                let cfg = AugmentConfig {
                    room_batch: None,
                    ..augment.clone()
                };
                let ch = Channel::new(u.waveform.len(), std::slice::from_ref(&rirs[room]), &cfg)?;
                let (left, right) = ch.draw_pads(r.gen(), 0);
                Waveform::new(ch.forward(u.waveform.samples(), 0, left, right)?, u.waveform.sample_rate())?
            };
            Ok(Example {
                features: featurize(&audio)?,
                target: vocab.encode(&u.transcript)?,
            })
        })
        .collect::<Result<Vec<_>>>()
}
