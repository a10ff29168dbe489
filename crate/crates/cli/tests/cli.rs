use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn passval(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_passval"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = passval(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn league(games: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out", ".", "--games", games, "--teams", "6"]);
    dir
}

#[test]
fn stages_compose_on_a_small_league() {
    let dir = league("40");
    let d = dir.path();
    for stage in ["ingest", "train-xg", "build-index", "value", "rate", "predict"] {
        ok(d, &["--config", "passval.toml", stage]);
        assert!(d.join(format!("run/{stage}.manifest.json")).exists());
    }
    ok(d, &["--config", "passval.toml", "sweep-k", "--ks", "1,5,10"]);

    let table = fs::read_to_string(d.join("run/log_loss.csv")).unwrap();
    let losses: Vec<f64> = table.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(losses.len(), 3);
    assert!(losses.windows(2).all(|w| w[0] <= w[1]));
    let sweep = fs::read_to_string(d.join("run/sweep_k.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 3 + 2);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("run/value.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "value");
    assert!(manifest["inputs"].as_object().unwrap().len() >= 2);

    // a player who rated in the validation games
    let ratings = fs::read_to_string(d.join("run/ratings.csv")).unwrap();
    let player = ratings.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    let listing = ok(d, &["--config", "passval.toml", "similar", "--player", &player, "--top", "3"]);
    assert_eq!(listing.lines().count(), 3);
    assert_eq!(fs::read_to_string(d.join("run/similar.csv")).unwrap().lines().count(), 4);

    // a second value run reuses the cached index and writes the same bytes
    let before = fs::read(d.join("run/pass_values.csv")).unwrap();
    ok(d, &["--config", "passval.toml", "value"]);
    assert_eq!(fs::read(d.join("run/pass_values.csv")).unwrap(), before);
    let manifest = fs::read_to_string(d.join("run/value.manifest.json")).unwrap();
    assert!(manifest.contains("\"hit\""));
}

#[test]
fn one_cell_grid_matches_exhaustive_search() {
    // small: the exhaustive side compares every query with every stored subsequence
    let dir = league("4");
    let d = dir.path();
    ok(d, &["--config", "passval.toml", "train-xg"]);
    for out in ["whole", "flat"] {
        fs::create_dir_all(d.join(out)).unwrap();
        fs::copy(d.join("run/xg_model.txt"), d.join(out).join("xg_model.txt")).unwrap();
    }
    ok(d, &["--config", "passval.toml", "--cell", "105x68", "--out", "whole", "build-index"]);
    ok(d, &["--config", "passval.toml", "--cell", "105x68", "--out", "whole", "value"]);
    ok(d, &["--config", "passval.toml", "--no-cluster", "--out", "flat", "build-index"]);
    ok(d, &["--config", "passval.toml", "--no-cluster", "--out", "flat", "value"]);
    assert_eq!(
        fs::read(d.join("whole/pass_values.csv")).unwrap(),
        fs::read(d.join("flat/pass_values.csv")).unwrap()
    );
}

#[test]
fn valuing_no_games_writes_a_header_only_file() {
    let dir = league("12");
    let d = dir.path();
    ok(d, &["--config", "passval.toml", "train-xg"]);
    let events = fs::read_to_string(d.join("events.csv")).unwrap();
    fs::write(d.join("events.csv"), events.lines().next().unwrap().to_string() + "\n").unwrap();
    ok(d, &["--config", "passval.toml", "build-index"]);
    ok(d, &["--config", "passval.toml", "value"]);
    let values = fs::read_to_string(d.join("run/pass_values.csv")).unwrap();
    assert_eq!(values.lines().count(), 1);
    assert!(values.starts_with("game_id,sequence_id,pass_index,player_id,before,after,value"));
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = league("12");
    let d = dir.path();
    let code = |args: &[&str]| passval(d, args).status.code();

    // value before the index exists
    assert_eq!(code(&["--config", "passval.toml", "value"]), Some(2));
    assert_eq!(code(&["--config", "missing.toml", "ingest"]), Some(2));
    assert_eq!(code(&["--config", "passval.toml", "--k", "0", "ingest"]), Some(3));
    fs::write(d.join("bad.toml"), "k = \"ten\"\n").unwrap();
    assert_eq!(code(&["--config", "bad.toml", "ingest"]), Some(3));
    fs::write(d.join("overlap.toml"), "train_games = \"1-10\"\ntest_games = \"5-20\"\n").unwrap();
    assert_eq!(code(&["--config", "overlap.toml", "ingest"]), Some(3));

    let out = passval(d, &["--config", "passval.toml", "--k", "0", "ingest"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("k must be at least 1"));
}

#[test]
fn rating_by_date_range() {
    let dir = league("24");
    let d = dir.path();
    for stage in ["train-xg", "build-index", "value"] {
        ok(d, &["--config", "passval.toml", stage]);
    }
    ok(
        d,
        &["--config", "passval.toml", "--min-minutes", "0", "rate", "--period", "*", "--from", "2019-08-10", "--to", "2019-08-17"],
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("run/rate.manifest.json")).unwrap()).unwrap();
    // rounds two and three of a six-team league
    assert_eq!(manifest["notes"]["period"], "4-9");
}
