//! End-to-end pipeline runs against the compiled `xtts` binary.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Output;

use xtts::audio::{wav_write, Waveform};
use xtts::datasel::{save_manifest, CorpusManifest, UtteranceRecord};

fn xtts(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_xtts"))
        .args(args)
        .output()
        .expect("binary launches")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr_line(out: &Output) -> String {
    let text = String::from_utf8_lossy(&out.stderr).trim_end().to_string();
    assert_eq!(text.lines().count(), 1, "expected one error line, got: {text}");
    text
}

fn rec(id: &str, audio: &str, text: &str, speaker: &str) -> UtteranceRecord {
    UtteranceRecord {
        id: id.into(),
        audio: audio.into(),
        text: text.into(),
        speaker: speaker.into(),
        lang_spans: None,
        metrics: None,
        kept: None,
        provenance: None,
        extra: serde_json::Map::new(),
    }
}

fn write_tone(path: &Path, samples: usize, freq: f64) {
    let data: Vec<f64> = (0..samples)
        .map(|i| 0.4 * (2.0 * PI * freq * i as f64 / 8000.0).sin())
        .collect();
    wav_write(path, &Waveform::new(data, 8000).unwrap()).unwrap();
}

const CONFIG: &str = r#"{
  "model": {
    "encoder_kind": "shared",
    "symbol_embed_dim": 8,
    "encoder_hidden": 8,
    "speaker_embed_dim": 4,
    "num_speakers": 1,
    "attention_mixtures": 2,
    "attention_rnn_dim": 8,
    "decoder_rnn_dim": 8,
    "mel_bins": 4,
    "reduction_factor": 2,
    "postnet_channels": 6,
    "max_decoder_steps": 40
  },
  "training": {
    "batch_size": 2,
    "lr_initial": 0.005,
    "lr_floor": 0.001,
    "pretrain_steps": 8,
    "finetune_max_steps": 6,
    "val_interval": 4
  },
  "stft": {
    "sample_rate": 8000,
    "fft_size": 256,
    "hop": 64,
    "win_length": 128,
    "mel_bins": 4,
    "fmax": 3500.0
  }
}"#;

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();

        let found_spec = [
            ("f1", "ab", "spk_a", 300.0, 1344),
            ("f2", "ba", "spk_a", 350.0, 1472),
            ("f3", "bb", "spk_b", 500.0, 1344),
            ("f4", "ab", "spk_b", 550.0, 1600),
            ("f5", "ba", "spk_c", 700.0, 1344),
            ("f6", "aba", "spk_c", 750.0, 1472),
        ];
        let mut records = Vec::new();
        for (id, text, speaker, freq, samples) in found_spec {
            let name = format!("{id}.wav");
            write_tone(&root.join(&name), samples, freq);
            records.push(rec(id, &name, text, speaker));
        }
        let found = CorpusManifest::new(records, root.to_path_buf(), None).unwrap();
        save_manifest(&root.join("found.jsonl"), &found).unwrap();

        let mut records = Vec::new();
        for (id, text, freq) in [("t1", "ab", 900.0), ("t2", "ba", 950.0)] {
            let name = format!("{id}.wav");
            write_tone(&root.join(&name), 1344, freq);
            records.push(rec(id, &name, text, "target"));
        }
        let target = CorpusManifest::new(records, root.to_path_buf(), None).unwrap();
        save_manifest(&root.join("target.jsonl"), &target).unwrap();

        std::fs::write(root.join("config.json"), CONFIG).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

#[test]
fn full_pipeline_runs_end_to_end() {
    let fx = Fixture::new();
    let config = fx.arg("config.json");

    assert_ok(&xtts(&[
        "prepare", "--manifest", &fx.arg("found.jsonl"), "--mode", "char",
        "--out", &fx.arg("inv.json"),
    ]));
    let inventory: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fx.path("inv.json")).unwrap()).unwrap();
    assert!(inventory["symbols"].as_array().unwrap().len() >= 4);

    assert_ok(&xtts(&[
        "score", "--config", &config, "--manifest", &fx.arg("found.jsonl"),
        "--out", &fx.arg("scored.jsonl"),
    ]));
    let scored = std::fs::read_to_string(fx.path("scored.jsonl")).unwrap();
    assert!(scored.lines().all(|l| l.contains("\"snr_db\"")));

    assert_ok(&xtts(&[
        "filter", "--manifest", &fx.arg("scored.jsonl"), "--drop", "0.34",
        "--out", &fx.arg("kept.jsonl"),
    ]));
    let kept = std::fs::read_to_string(fx.path("kept.jsonl")).unwrap();
    assert_eq!(kept.lines().filter(|l| l.contains("\"kept\":false")).count(), 3);

    assert_ok(&xtts(&[
        "merge", "--found", &fx.arg("kept.jsonl"), "--target", &fx.arg("target.jsonl"),
        "--out", &fx.arg("merged.jsonl"),
    ]));
    let merged = std::fs::read_to_string(fx.path("merged.jsonl")).unwrap();
    assert_eq!(merged.lines().count(), 8);
    assert_eq!(merged.matches("\"provenance\":\"target\"").count(), 2);

    assert_ok(&xtts(&[
        "pretrain", "--config", &config, "--manifest", &fx.arg("merged.jsonl"),
        "--inventory", &fx.arg("inv.json"), "--out", &fx.arg("pre.ckpt"),
    ]));

    assert_ok(&xtts(&[
        "finetune", "--config", &config, "--ckpt", &fx.arg("pre.ckpt"),
        "--manifest", &fx.arg("target.jsonl"), "--out", &fx.arg("fine.ckpt"),
    ]));

    assert_ok(&xtts(&[
        "synth", "--config", &config, "--ckpt", &fx.arg("fine.ckpt"),
        "--text", "ab", "--speaker", "target",
        "--mel", &fx.arg("out.mel"), "--wav", &fx.arg("out.wav"),
        "--griffin-lim-iters", "10",
    ]));
    assert!(fx.path("out.mel").exists());
    let wav = hound::WavReader::open(fx.path("out.wav")).unwrap();
    assert!(wav.duration() > 0);

    assert_ok(&xtts(&[
        "diag", "--config", &config, "--ckpt", &fx.arg("fine.ckpt"),
        "--manifest", &fx.arg("target.jsonl"), "--out", &fx.arg("report.jsonl"),
    ]));
    let report = std::fs::read_to_string(fx.path("report.jsonl")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 3);
    for line in &lines {
        let _: serde_json::Value = serde_json::from_str(line).unwrap();
    }
    assert!(lines[2].contains("\"mean_loss\""));
}

#[test]
fn outputs_are_idempotent_across_reruns() {
    let fx = Fixture::new();
    let config = fx.arg("config.json");

    for out in ["inv1.json", "inv2.json"] {
        assert_ok(&xtts(&[
            "prepare", "--manifest", &fx.arg("found.jsonl"), "--mode", "char",
            "--out", &fx.arg(out),
        ]));
    }
    assert_eq!(
        std::fs::read(fx.path("inv1.json")).unwrap(),
        std::fs::read(fx.path("inv2.json")).unwrap()
    );

    for out in ["s1.jsonl", "s2.jsonl"] {
        assert_ok(&xtts(&[
            "score", "--config", &config, "--manifest", &fx.arg("found.jsonl"),
            "--out", &fx.arg(out),
        ]));
    }
    assert_eq!(
        std::fs::read(fx.path("s1.jsonl")).unwrap(),
        std::fs::read(fx.path("s2.jsonl")).unwrap()
    );

    for out in ["p1.ckpt", "p2.ckpt"] {
        assert_ok(&xtts(&[
            "pretrain", "--config", &config, "--seed", "42",
            "--manifest", &fx.arg("found.jsonl"), "--out", &fx.arg(out),
        ]));
    }
    assert_eq!(
        std::fs::read(fx.path("p1.ckpt")).unwrap(),
        std::fs::read(fx.path("p2.ckpt")).unwrap()
    );
}

#[test]
fn bad_invocations_exit_with_one_error_line() {
    let fx = Fixture::new();

    let out = xtts(&[
        "filter", "--manifest", &fx.arg("found.jsonl"), "--drop", "1.0",
        "--out", &fx.arg("kept.jsonl"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let line = stderr_line(&out);
    assert!(line.starts_with("error:") && line.contains("1"), "{line}");

    let out = xtts(&["score", "--manifest", &fx.arg("missing.jsonl"), "--out", &fx.arg("x")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).starts_with("error:"));
}

#[test]
fn unknown_speaker_is_reported_with_the_known_list() {
    let fx = Fixture::new();
    let config = fx.arg("config.json");

    assert_ok(&xtts(&[
        "pretrain", "--config", &config, "--manifest", &fx.arg("target.jsonl"),
        "--out", &fx.arg("t.ckpt"),
    ]));

    let out = xtts(&[
        "synth", "--config", &config, "--ckpt", &fx.arg("t.ckpt"),
        "--text", "ab", "--speaker", "mallory",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let line = stderr_line(&out);
    assert!(line.contains("mallory") && line.contains("target"), "{line}");
}
