//! Name-keyed registries for interchangeable strategies.
//!
//! Every family of swappable components (analysis windows, optimizers,
//! recognizers) implements a common trait and is registered here under a
//! stable name, so configs and the CLI can select an implementation at
//! runtime without the call sites knowing the concrete type.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use crate::asr::{Recognizer, ToyCtcRecognizer};
use crate::error::{Error, Result};
use crate::optim::{Adam, MomentumSgd, Optimizer, OptimizerParams};
use crate::signal::window::{Hamming, Hann, Rectangular, Taper};

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<String, Arc<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `item` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: impl Into<String>, item: Arc<T>) {
        self.entries.insert(name.into(), item);
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries.get(name).cloned().ok_or_else(|| {
            Error::Config(format!(
                "unknown {} `{}` (available: {})",
                self.kind,
                name,
                self.names().join(", ")
            ))
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

pub type OptimizerFactory = dyn Fn(&OptimizerParams, usize) -> Box<dyn Optimizer> + Send + Sync;
pub type RecognizerLoader = dyn Fn(&Path) -> Result<Box<dyn Recognizer>> + Send + Sync;

pub fn windows() -> &'static Registry<dyn Taper> {
    static REG: OnceLock<Registry<dyn Taper>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut reg: Registry<dyn Taper> = Registry::new("window");
        reg.register("hann", Arc::new(Hann));
        reg.register("hamming", Arc::new(Hamming));
        reg.register("rect", Arc::new(Rectangular));
        reg
    })
}

pub fn optimizers() -> &'static Registry<OptimizerFactory> {
    static REG: OnceLock<Registry<OptimizerFactory>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut reg: Registry<OptimizerFactory> = Registry::new("optimizer");
        reg.register(
            "adam",
            Arc::new(|p: &OptimizerParams, n: usize| Box::new(Adam::new(p, n)) as Box<dyn Optimizer>),
        );
        reg.register(
            "momentum",
            Arc::new(|p: &OptimizerParams, n: usize| {
                Box::new(MomentumSgd::new(p, n)) as Box<dyn Optimizer>
            }),
        );
        reg
    })
}

pub fn recognizers() -> &'static Registry<RecognizerLoader> {
    static REG: OnceLock<Registry<RecognizerLoader>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut reg: Registry<RecognizerLoader> = Registry::new("recognizer");
        reg.register(
            ToyCtcRecognizer::NAME,
            Arc::new(|path: &Path| {
                Ok(Box::new(ToyCtcRecognizer::load(path)?) as Box<dyn Recognizer>)
            }),
        );
        reg
    })
}

/// Builds a fresh optimizer named `name` for a parameter vector of length `n`.
pub fn make_optimizer(name: &str, params: &OptimizerParams, n: usize) -> Result<Box<dyn Optimizer>> {
    let factory = optimizers().get(name)?;
    Ok(factory(params, n))
}

pub fn load_recognizer(name: &str, path: &Path) -> Result<Box<dyn Recognizer>> {
    let loader = recognizers().get(name)?;
    loader(path)
}
