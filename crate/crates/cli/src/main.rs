use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use overair_core::asr::corpus::{export_corpus, import_corpus};
use overair_core::asr::Recognizer;
use overair_core::attack::{export_attack, generate_attack, write_history_csv, AttackProblem, AttackStatus};
use overair_core::channel::{AugmentConfig, Channel};
use overair_core::metrics::{evaluate_attack, GenerationInfo};
use overair_core::pipeline::{compute_rirs, RunConfig};
use overair_core::psycho::compute_masking_thresholds;
use overair_core::registry;
use overair_core::room::RoomSet;
use overair_core::signal::{read_wav, stft, write_wav, StftConfig, Waveform};
use overair_core::{rng, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "overair", version, about = "Room-robust, masked adversarial audio against a toy CTC recognizer")]
struct Cli {
    /// JSON run configuration; omitted keys take reference values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override a configuration value, e.g. `attack.lambda_max=0.15`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the synthetic chord corpus to WAV files plus a manifest.
    SynthCorpus,
    /// Train the recognizer and write `model.asrt`.
    TrainAsr {
        /// Corpus directory from `synth-corpus`; synthesized in memory when omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Generate attack and held-out rooms into `rooms.json`.
    MakeRooms,
    /// Pass a WAV through one randomized channel realization.
    Channel {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        rooms: Option<PathBuf>,
        /// Index into the generation rooms.
        #[arg(long, default_value_t = 0)]
        room: usize,
    },
    /// Optimize a perturbation and write `attack.wav`, `delta.wav`, `history.csv`.
    Attack {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        rooms: Option<PathBuf>,
        /// Carrier WAV; rendered from `carrier.carrier_text` when omitted.
        #[arg(long)]
        carrier: Option<PathBuf>,
        #[arg(long)]
        target: Option<String>,
    },
    /// Score an attack over held-out rooms into `report.json` and `report.csv`.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        rooms: Option<PathBuf>,
        #[arg(long)]
        attack: PathBuf,
        #[arg(long)]
        target: Option<String>,
        /// Attack summary to echo into the report; defaults to `attack.json` beside the WAV.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Write the carrier's masking thresholds to `mpam.csv`.
    InspectMask {
        #[arg(long)]
        carrier: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) => 2,
        Error::InvalidInput(_) | Error::Format(_) | Error::Io(_) => 3,
        _ => 4,
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("--set {key}: {part:?} is not inside a section")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| json!({}));
    }
    Err(Error::Config("--set needs a key".into()))
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut doc = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<Value>(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => json!({}),
    };
    // start from the reference so partial documents fill in the rest
    let mut base = serde_json::to_value(RunConfig::reference()).expect("config serializes");
    merge(&mut base, doc.take());
    for item in &cli.set {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set {item:?} is not KEY=VALUE")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut base, key, value)?;
    }
    if let Some(seed) = cli.seed {
        base["seed"] = json!(seed);
    }
    let cfg: RunConfig = serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))?;
    let cfg = cfg.derived();
    cfg.validate()?;
    Ok(cfg)
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn load_rooms(cfg: &RunConfig, path: Option<&Path>) -> Result<RoomSet> {
    match path {
        Some(p) => RoomSet::from_json(&std::fs::read_to_string(p)?).map_err(|e| e.context(p.display().to_string())),
        None => cfg.make_rooms(),
    }
}

fn load_model(cfg: &RunConfig, path: &Path) -> Result<Box<dyn Recognizer>> {
    registry::load_recognizer(&cfg.asr.recognizer, path).map_err(|e| e.context(path.display().to_string()))
}

fn run(cli: &Cli) -> Result<Value> {
    let cfg = load_config(cli)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let out = &cli.out;
    match &cli.command {
        Command::SynthCorpus => {
            let corpus = cfg.synth_corpus()?;
            let dir = out.join("corpus");
            export_corpus(&dir, &corpus)?;
            Ok(json!({"command": "synth-corpus", "utterances": corpus.len(), "dir": dir}))
        }
        Command::TrainAsr { corpus } => {
            let utterances = match corpus {
                Some(dir) => import_corpus(dir)?,
                None => cfg.synth_corpus()?,
            };
            std::fs::create_dir_all(out)?;
            let (recognizer, report) = cfg.train_recognizer(&utterances)?;
            let model = out.join("model.asrt");
            recognizer.save(&model)?;
            write_json(&out.join("train_report.json"), &serde_json::to_value(&report).expect("report serializes"))?;
            Ok(json!({
                "command": "train-asr",
                "model": model,
                "heldout_accuracy": report.heldout_accuracy,
                "final_loss": report.epoch_loss.last(),
            }))
        }
        Command::MakeRooms => {
            let rooms = cfg.make_rooms()?;
            std::fs::create_dir_all(out)?;
            let path = out.join("rooms.json");
            std::fs::write(&path, rooms.to_json()? + "\n")?;
            Ok(json!({
                "command": "make-rooms",
                "rooms": path,
                "generation": rooms.generation.len(),
                "heldout": rooms.heldout.len(),
            }))
        }
        Command::Channel { input, rooms, room } => {
            let w = read_wav(input)?;
            let set = load_rooms(&cfg, rooms.as_deref())?;
            let variant = set
                .generation
                .get(*room)
                .ok_or_else(|| Error::invalid(format!("room {room} outside 0..{}", set.generation.len())))?;
            let rir = compute_rirs(std::slice::from_ref(variant), &set.rir)?;
            let augment = AugmentConfig {
                room_batch: None,
                ..cfg.augment.clone()
            };
            let channel = Channel::new(w.len(), &rir, &augment)?;
            let (left, right) = channel.draw_pads(rng::mix64(cfg.augment.seed), 0);
            let y = Waveform::new(channel.forward(w.samples(), 0, left, right)?, w.sample_rate())?;
            std::fs::create_dir_all(out)?;
            let path = out.join("channel.wav");
            let clipped = write_wav(&path, &y)?;
            Ok(json!({
                "command": "channel",
                "output": path,
                "room": room,
                "left_pad": left,
                "right_pad": right,
                "samples": y.len(),
                "clipped": clipped,
            }))
        }
        Command::Attack {
            model,
            rooms,
            carrier,
            target,
        } => {
            let recognizer = load_model(&cfg, model)?;
            let set = load_rooms(&cfg, rooms.as_deref())?;
            let rendered = carrier.is_none();
            let carrier = match carrier {
                Some(p) => read_wav(p)?,
                None => cfg.carrier()?,
            };
            let target = target.clone().unwrap_or_else(|| cfg.carrier.target.clone());
            let rirs = compute_rirs(&set.generation, &set.rir)?;
            let channel = Channel::new(carrier.len(), &rirs, &cfg.augment)?;
            let problem = AttackProblem::new(&carrier, &target, &channel, recognizer.as_ref())?;
            let mut attack_cfg = cfg.attack.clone();
            if attack_cfg.checkpoint_every > 0 && attack_cfg.checkpoint_path.is_none() {
                attack_cfg.checkpoint_path = Some(out.join("checkpoint.atks"));
            }
            std::fs::create_dir_all(out)?;
            let started = Instant::now();
            let result = generate_attack(&problem, &attack_cfg)?;
            let elapsed = started.elapsed().as_secs_f64();
            let exported = export_attack(&result, out)?;
            write_history_csv(&out.join("history.csv"), &result.history)?;
            if rendered {
                write_wav(&out.join("carrier.wav"), &carrier)?;
            }
            let status = match result.status {
                AttackStatus::Success => "success",
                AttackStatus::IterationBudgetExhausted => "iteration-budget-exhausted",
            };
            let summary = json!({
                "target": target,
                "status": status,
                "lambda": result.lambda,
                "iterations": result.iterations,
                "fr": cfg.augment.enable_fr,
                "rs": cfg.augment.enable_rooms,
                "ts": cfg.augment.enable_timeshift,
                "clipped": exported.clipped,
                "transcripts": result.transcripts,
            });
            write_json(&out.join("attack.json"), &summary)?;
            let mut line = summary;
            line["command"] = json!("attack");
            line["elapsed_s"] = json!(elapsed);
            line["attack"] = json!(exported.attack_path);
            Ok(line)
        }
        Command::Evaluate {
            model,
            rooms,
            attack,
            target,
            summary,
        } => {
            let recognizer = load_model(&cfg, model)?;
            let set = load_rooms(&cfg, rooms.as_deref())?;
            let audio = read_wav(attack)?;
            let summary_path = summary
                .clone()
                .unwrap_or_else(|| attack.with_file_name("attack.json"));
            let summary: Option<Value> = match std::fs::read_to_string(&summary_path) {
                Ok(text) => Some(serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", summary_path.display())))?),
                Err(_) if summary.is_none() => None,
                Err(e) => return Err(Error::Io(e)),
            };
            let target = match (target, &summary) {
                (Some(t), _) => t.clone(),
                (None, Some(s)) if s["target"].is_string() => s["target"].as_str().unwrap_or_default().to_string(),
                _ => cfg.carrier.target.clone(),
            };
            let heldout = compute_rirs(&set.heldout, &set.rir)?;
            // evaluation always plays through the full channel
            let full = AugmentConfig {
                enable_fr: true,
                enable_rooms: true,
                enable_timeshift: true,
                room_batch: None,
                ..cfg.augment.clone()
            };
            let mut report = evaluate_attack(&audio, &target, &heldout, recognizer.as_ref(), &full, &cfg.eval)?;
            report.generation = summary.as_ref().and_then(|s| {
                Some(GenerationInfo {
                    fr: s["fr"].as_bool()?,
                    rs: s["rs"].as_bool()?,
                    ts: s["ts"].as_bool()?,
                    lambda: s["lambda"].as_f64()?,
                    iterations: s["iterations"].as_u64()?,
                })
            });
            std::fs::create_dir_all(out)?;
            report.write_json(&out.join("report.json"))?;
            report.write_csv(&out.join("report.csv"))?;
            Ok(json!({
                "command": "evaluate",
                "trials": report.trials,
                "success_rate": report.success_rate,
                "per": report.per,
                "wer": report.wer,
                "report": out.join("report.json"),
            }))
        }
        Command::InspectMask { carrier } => {
            let w = read_wav(carrier)?;
            let stft_cfg = StftConfig::default();
            let mask = compute_masking_thresholds(&stft(&w, &stft_cfg)?, &stft_cfg)?;
            std::fs::create_dir_all(out)?;
            let path = out.join("mpam.csv");
            let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
            mask.write_csv(&mut file)?;
            std::io::Write::flush(&mut file)?;
            Ok(json!({
                "command": "inspect-mask",
                "output": path,
                "frames": mask.frames(),
                "bins": mask.bins(),
            }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("overair: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
