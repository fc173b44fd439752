use clap::CommandFactory;
use clap::Parser;

use super::*;

#[test]
fn argument_definitions_are_consistent() {
    Cli::command().debug_assert();
}

#[test]
fn default_config_round_trips() {
    let cfg = RunConfig::default();
    let json = serde_json::to_string(&cfg).unwrap();
    let back: RunConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn partial_config_fills_defaults() {
    let cfg: RunConfig = serde_json::from_str(r#"{"training":{"seed":7}}"#).unwrap();
    assert_eq!(cfg.training.seed, 7);
    assert_eq!(cfg.model, ModelConfig::default());
    assert_eq!(cfg.stft, StftConfig::default());
    assert_eq!(cfg.mode, Mode::Character);
}

#[test]
fn unknown_top_level_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(&path, r#"{"modle":{}}"#).unwrap();
    let err = load_config(Some(&path), None).unwrap_err();
    let msg = format!("{err}");
    assert!(msg.contains("modle"), "{msg}");
}

#[test]
fn unknown_nested_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(&path, r#"{"model":{"bogus":1}}"#).unwrap();
    let err = load_config(Some(&path), None).unwrap_err();
    let msg = format!("{err}");
    assert!(msg.contains("bogus"), "{msg}");
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(&path, r#"{"training":{"seed":7}}"#).unwrap();
    let cfg = load_config(Some(&path), Some(99)).unwrap();
    assert_eq!(cfg.training.seed, 99);
}

#[test]
fn invalid_config_values_are_rejected_up_front() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(&path, r#"{"training":{"batch_size":0}}"#).unwrap();
    assert!(load_config(Some(&path), None).is_err());
}

#[test]
fn mode_flag_maps_onto_tokenization_modes() {
    assert_eq!(Mode::from(ModeArg::Char), Mode::Character);
    assert_eq!(Mode::from(ModeArg::Phoneme), Mode::Phoneme);
}

#[test]
fn zero_threads_are_rejected() {
    assert!(matches!(
        configure_threads(Some(0)),
        Err(CliError::BadThreads { .. })
    ));
}

#[test]
fn broken_inventory_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inv.json");
    std::fs::write(&path, r#"{"symbols":["a"],"mode":"character"}"#).unwrap();
    let err = load_inventory(&path).unwrap_err();
    assert!(matches!(err, CliError::BadInventory { .. }), "{err}");
}

#[test]
fn subcommands_parse_their_flags() {
    let cli = Cli::try_parse_from([
        "xtts", "filter", "--manifest", "scored.jsonl", "--drop", "0.1", "--top-speakers", "3",
        "--out", "kept.jsonl",
    ])
    .unwrap();
    match cli.command {
        Command::Filter {
            drop, top_speakers, ..
        } => {
            assert_eq!(drop, 0.1);
            assert_eq!(top_speakers, Some(3));
        }
        other => panic!("parsed {other:?}"),
    }

    let cli = Cli::try_parse_from([
        "xtts", "synth", "--ckpt", "c", "--text", "hi", "--speaker", "alice", "--seed", "7",
    ])
    .unwrap();
    assert_eq!(cli.seed, Some(7));
    assert!(matches!(cli.command, Command::Synth { .. }));

    assert!(Cli::try_parse_from(["xtts", "score", "--bogus-flag", "x"]).is_err());
}
