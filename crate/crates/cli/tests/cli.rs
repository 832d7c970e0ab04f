use std::path::Path;
use std::process::{Command, Output};

use overair_core::signal::{write_wav, Waveform};

fn overair(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_overair"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn tone_wav(path: &Path, len: usize) {
    let x = (0..len).map(|i| 0.3 * (i as f64 * 0.4).sin()).collect();
    write_wav(path, &Waveform::new(x, 16000).unwrap()).unwrap();
}

fn is_empty_or_missing(dir: &Path) -> bool {
    std::fs::read_dir(dir).map_or(true, |mut d| d.next().is_none())
}

#[test]
fn unknown_config_key_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"attack": {"lamda_max": 0.2}}"#).unwrap();
    let out = dir.path().join("out");
    let res = overair(&out, &["make-rooms", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("lamda_max"));
    assert!(is_empty_or_missing(&out));
}

#[test]
fn unknown_set_path_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = overair(&out, &["make-rooms", "--set", "rooms.colour=3"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(is_empty_or_missing(&out));
}

#[test]
fn invalid_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = overair(&out, &["make-rooms", "--set", "attack.lambda_step=0"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(is_empty_or_missing(&out));
}

#[test]
fn make_rooms_is_reproducible_and_summarised_on_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let res = overair(out, &["make-rooms", "--seed", "5", "--set", "rooms.generation=4", "--set", "rooms.heldout=2"]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        let line = String::from_utf8(res.stdout).unwrap();
        let summary: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        assert!(summary.is_object());
    }
    let ra = std::fs::read(a.join("rooms.json")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("rooms.json")).unwrap());
    let other = dir.path().join("c");
    overair(&other, &["make-rooms", "--seed", "6", "--set", "rooms.generation=4", "--set", "rooms.heldout=2"]);
    assert_ne!(ra, std::fs::read(other.join("rooms.json")).unwrap());
}

#[test]
fn channel_and_mask_commands_leave_their_inputs_alone() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("in.wav");
    tone_wav(&wav, 4000);
    let before = std::fs::read(&wav).unwrap();
    let out = dir.path().join("out");
    let settings = ["--set", "rooms.generation=2", "--set", "rooms.heldout=1"];

    let res = overair(&out, &[&["make-rooms"][..], &settings].concat());
    assert!(res.status.success());
    let rooms = out.join("rooms.json");
    let rooms_before = std::fs::read(&rooms).unwrap();

    let args = [&["channel", "--input", wav.to_str().unwrap(), "--rooms", rooms.to_str().unwrap(), "--room", "1"][..], &settings].concat();
    let res = overair(&out, &args);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("channel.wav").exists());

    let res = overair(&out, &["inspect-mask", "--carrier", wav.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(out.join("mpam.csv")).unwrap();
    assert!(csv.lines().count() > 1);

    assert_eq!(std::fs::read(&wav).unwrap(), before);
    assert_eq!(std::fs::read(&rooms).unwrap(), rooms_before);
}

#[test]
fn room_index_out_of_range_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("in.wav");
    tone_wav(&wav, 4000);
    let out = dir.path().join("out");
    let res = overair(&out, &["channel", "--input", wav.to_str().unwrap(), "--room", "99", "--set", "rooms.generation=2", "--set", "rooms.heldout=1"]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn missing_input_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = overair(&out, &["inspect-mask", "--carrier", dir.path().join("nope.wav").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
}
