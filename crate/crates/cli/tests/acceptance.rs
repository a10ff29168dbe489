//! Acceptance checks. Run with `cargo test --test acceptance`; prints one
//! PASS/FAIL line per criterion and exits nonzero if any fail.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::Deserialize;

use passval::metrics::spearman;
use passval::pipeline::{self, load_events, obtain_index, ratings_for, SynthArgs};
use passval::{GameSet, Manifest, RunConfig};
use passval_core::event_model::{parse_lineups, Event, EventKind, PitchPoint, PlayerId, SubKind};
use passval_core::knn_index::{cluster_key, ClusterIndex, Grid};
use passval_core::outcome_eval::{log_loss, skellam_probs, Outcome, OutcomeForecast, PRIOR};
use passval_core::possession::{segment_possessions, SequenceRef, Subsequence};
use passval_core::synth::{sample_shots, TrueXg};
use passval_core::traj::{dtw_distance, interpolate, Trajectory};
use passval_core::valuation::{read_pass_values, value_pass};
use passval_core::xg::{predict_xg, shot_features, train_xg, GbtParams};

type Check = anyhow::Result<(bool, String)>;

// ---------------------------------------------------------------- helpers

fn pass(t: f64, from: (f64, f64), to: (f64, f64)) -> Event {
    Event {
        game_id: 1,
        half: 1,
        timestamp: t,
        team_id: 1,
        player_id: 9,
        kind: EventKind::Pass,
        subkind: SubKind::OpenPlay,
        type_code: 8,
        subtype_code: 85,
        start: PitchPoint { x: from.0, y: from.1 },
        end: PitchPoint { x: to.0, y: to.1 },
    }
}

fn sub(events: &[Event], label: f64, seq: u32) -> Subsequence<'_> {
    Subsequence {
        parent: SequenceRef {
            game_id: 0,
            sequence_id: seq,
        },
        pass_index: events.len() - 1,
        event_index: events.len() - 1,
        events,
        label,
    }
}

type Bounds = (f64, f64, f64, f64);

/// A chain of 1-3 passes starting in `origin` and ending in `dest`, with
/// intermediate points anywhere in `middle`.
fn random_chain(rng: &mut ChaCha8Rng, origin: Bounds, middle: Bounds, dest: Bounds) -> Vec<Event> {
    let at = |rng: &mut ChaCha8Rng, b: Bounds| (rng.random_range(b.0..b.1), rng.random_range(b.2..b.3));
    let n = rng.random_range(1..=3);
    let mut p = at(rng, origin);
    let mut t = rng.random_range(0.0..2000.0);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let q = if i + 1 == n { at(rng, dest) } else { at(rng, middle) };
        out.push(pass(t, p, q));
        t += rng.random_range(1.0..5.0);
        p = q;
    }
    out
}

fn walk(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(&path, base, out)?;
        } else {
            out.push(path.strip_prefix(base).unwrap().to_path_buf());
        }
    }
    Ok(())
}

/// Every file under `dir` except run manifests, which carry timings.
fn artifacts(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    walk(dir, dir, &mut files)?;
    files.retain(|p| !p.to_string_lossy().ends_with(".manifest.json"));
    files.sort();
    Ok(files)
}

struct Run {
    _dir: tempfile::TempDir,
    root: PathBuf,
    cfg: RunConfig,
    seconds: f64,
}

fn full_run(seed: u64) -> anyhow::Result<Run> {
    let dir = tempfile::tempdir()?;
    let root = dir.path().to_path_buf();
    let start = Instant::now();
    let base = RunConfig {
        out_dir: root.clone(),
        seed,
        ..RunConfig::default()
    };
    pipeline::cmd_synth(&base, &SynthArgs { games: 200, teams: 10 })?;
    let cfg = RunConfig::load(&root.join(pipeline::SYNTH_CONFIG_FILE))?;
    cfg.validate()?;
    pipeline::run_all(&cfg)?;
    Ok(Run {
        _dir: dir,
        root,
        cfg,
        seconds: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------- criteria

fn brute_dtw(a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
    let c = (a[i] - b[j]).abs();
    if i + 1 == a.len() && j + 1 == b.len() {
        return c;
    }
    let mut best = f64::INFINITY;
    if i + 1 < a.len() {
        best = best.min(brute_dtw(a, b, i + 1, j));
    }
    if j + 1 < b.len() {
        best = best.min(brute_dtw(a, b, i, j + 1));
    }
    if i + 1 < a.len() && j + 1 < b.len() {
        best = best.min(brute_dtw(a, b, i + 1, j + 1));
    }
    c + best
}

fn ac1_dtw_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut int_bad, mut real_err) = (0, 0.0f64);
    for trial in 0..1000 {
        let integer = trial % 2 == 0;
        let series = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let n = rng.random_range(1..=6);
            (0..n)
                .map(|_| {
                    if integer {
                        rng.random_range(-20i32..=20) as f64
                    } else {
                        rng.random_range(-50.0..50.0)
                    }
                })
                .collect()
        };
        let (a, b) = (series(&mut rng), series(&mut rng));
        let dp = dtw_distance(&a, &b)?;
        let brute = brute_dtw(&a, &b, 0, 0);
        if integer {
            int_bad += (dp != brute) as usize;
        } else {
            real_err = real_err.max((dp - brute).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        int_bad == 0 && real_err <= 1e-9 && secs < 10.0,
        format!("integer mismatches {int_bad}/500, max real error {real_err:.1e}, {secs:.2}s"),
    ))
}

fn ac2_single_cell_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let origin = (0.0, 15.0, 0.0, 17.0);
    let middle = (0.0, 30.0, 0.0, 34.0);
    let dest = (15.0, 30.0, 17.0, 34.0);
    let stored: Vec<Vec<Event>> = (0..500).map(|_| random_chain(&mut rng, origin, middle, dest)).collect();
    let labels: Vec<f64> = (0..stored.len()).map(|_| rng.random::<f64>()).collect();
    let subs: Vec<Subsequence> = stored
        .iter()
        .zip(&labels)
        .enumerate()
        .map(|(i, (e, &l))| sub(e, l, i as u32))
        .collect();
    let clustered = ClusterIndex::build(Grid::default(), &subs)?;
    let flat = ClusterIndex::build(Grid::single(), &subs)?;
    if clustered.non_empty_clusters() != 1 {
        return Ok((false, format!("dataset spans {} clusters", clustered.non_empty_clusters())));
    }
    let queries: Vec<Vec<Event>> = (0..200).map(|_| random_chain(&mut rng, origin, middle, dest)).collect();
    let mut compared = 0;
    let mut mismatches = 0;
    for (i, q) in queries.iter().enumerate() {
        let s = sub(q, 0.0, 10_000 + i as u32);
        for k in [1, 2, 5, 10] {
            compared += 1;
            mismatches += (clustered.expected_reward(&s, k)? != flat.expected_reward(&s, k)?) as usize;
        }
    }
    Ok((mismatches == 0, format!("{mismatches} of {compared} rewards differ, k in {{1,2,5,10}}")))
}

fn ac3_clustering_speedup() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pitch = (0.0, 105.0, 0.0, 68.0);
    let stored: Vec<Vec<Event>> = (0..10_000).map(|_| random_chain(&mut rng, pitch, pitch, pitch)).collect();
    let subs: Vec<Subsequence> = stored
        .iter()
        .enumerate()
        .map(|(i, e)| sub(e, (i % 7) as f64 / 7.0, i as u32))
        .collect();
    let queries: Vec<Vec<Event>> = (0..1000).map(|_| random_chain(&mut rng, pitch, pitch, pitch)).collect();

    let search = |index: &ClusterIndex| -> anyhow::Result<(usize, f64)> {
        let prepared: Vec<(Trajectory, _)> = queries
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let s = sub(q, 0.0, 20_000 + i as u32);
                Ok((interpolate(q)?, cluster_key(index.grid(), &s)?))
            })
            .collect::<anyhow::Result<_>>()?;
        let t = Instant::now();
        let mut computations = 0;
        for (traj, key) in &prepared {
            computations += index.neighbors(traj, *key, 10, None).distance_computations;
        }
        Ok((computations, t.elapsed().as_secs_f64()))
    };
    let clustered = ClusterIndex::build(Grid::default(), &subs)?;
    let flat = ClusterIndex::build(Grid::single(), &subs)?;
    let (c_ops, c_secs) = search(&clustered)?;
    let (f_ops, f_secs) = search(&flat)?;
    let share = c_ops as f64 / f_ops as f64;
    let speedup = f_secs / c_secs.max(1e-9);
    let total = start.elapsed().as_secs_f64();
    Ok((
        share <= 0.10 && speedup >= 5.0 && total < 300.0,
        format!(
            "distance computations {c_ops} vs {f_ops} ({:.2}%), search {c_secs:.3}s vs {f_secs:.3}s ({speedup:.0}x), {total:.1}s total",
            100.0 * share
        ),
    ))
}

fn ac4_telescoping(run: &Run) -> Check {
    let cfg = &run.cfg;
    let mut m = Manifest::new("acceptance", cfg);
    let store = load_events(cfg, &mut m)?;
    let index = obtain_index(cfg, &mut m, &store, false)?;
    let values = read_pass_values(fs::File::open(cfg.out_dir.join(pipeline::VALUES_FILE))?)?;
    let mut sums: BTreeMap<(u64, u32), (f64, usize)> = BTreeMap::new();
    for v in &values {
        let e = sums.entry((v.game_id, v.sequence_id)).or_default();
        e.0 += v.value;
        e.1 += 1;
    }

    let (mut checked, mut worst, mut count_bad) = (0usize, 0.0f64, 0usize);
    for (&game, events) in &store.games {
        for seq in segment_possessions(events) {
            let subs = seq.subsequences();
            let Some(last) = subs.last() else { continue };
            let (sum, n) = sums.get(&(game, seq.sequence_id)).copied().unwrap_or((0.0, 0));
            count_bad += (n != seq.pass_count()) as usize;
            let expected = if seq.pass_success(last.event_index)? {
                let key = cluster_key(index.grid(), last)?;
                let exclude = cfg.train_games.contains(game).then_some(last.parent);
                index.neighbors(&interpolate(last.events)?, key, cfg.k, exclude).mean_label(cfg.k)
            } else {
                0.0
            };
            worst = worst.max((sum - expected).abs());
            checked += 1;
        }
    }
    Ok((
        worst <= 1e-12 && count_bad == 0 && store.games.len() == 200,
        format!(
            "{checked} sequences over {} games, max |sum - final reward| {worst:.1e}, {count_bad} sequences with wrong pass count",
            store.games.len()
        ),
    ))
}

fn ac5_worked_example() -> Check {
    let b = vec![pass(0.0, (5.0, 5.0), (20.0, 5.0))];
    let b_far = vec![pass(0.0, (5.0, 5.0), (20.0, 12.0))];
    let b_farther = vec![pass(0.0, (9.0, 12.0), (29.0, 16.0))];
    let a = vec![pass(0.0, (5.0, 5.0), (20.0, 5.0)), pass(2.0, (20.0, 5.0), (50.0, 40.0))];
    let a_far = vec![pass(0.0, (5.0, 5.0), (20.0, 5.0)), pass(2.0, (20.0, 5.0), (55.0, 48.0))];
    let a_farther = vec![pass(0.0, (6.0, 5.0), (20.0, 5.0)), pass(2.0, (20.0, 5.0), (59.0, 50.0))];
    let pool = [(&b, 0.0), (&b_far, 0.6), (&b_farther, 1.0), (&a, 0.4), (&a_far, 0.5), (&a_farther, 1.0)];
    let subs: Vec<Subsequence> = pool.iter().enumerate().map(|(i, (e, l))| sub(e, *l, i as u32)).collect();
    let index = ClusterIndex::build(Grid::default(), &subs)?;

    let q = vec![pass(0.0, (5.0, 5.0), (20.0, 5.0)), pass(2.0, (20.0, 5.0), (50.0, 40.0))];
    let v = value_pass(&index, Some(&sub(&q[..1], 0.0, 100)), &sub(&q, 0.0, 100), true, 2)?;
    Ok((
        v.before == 0.3 && v.after == 0.45 && (v.value - 0.15).abs() <= f64::EPSILON,
        format!("before {} after {} value {}", v.before, v.after, v.value),
    ))
}

fn ac6_xg_calibration() -> Check {
    let start = Instant::now();
    let truth = TrueXg::default();
    let rows = |n, seed| -> Vec<_> {
        sample_shots(n, seed, &truth)
            .into_iter()
            .map(|(p, goal)| (shot_features(p), goal))
            .collect()
    };
    let train = rows(50_000, 61);
    let held = rows(50_000, 62);
    let model = train_xg(&train, &GbtParams::default())?;

    let base = train.iter().filter(|r| r.1).count() as f64 / train.len() as f64;
    let n = held.len() as f64;
    let (mut mean_pred, mut rate, mut ll, mut ll_base) = (0.0, 0.0, 0.0, 0.0);
    for (f, goal) in &held {
        let p = predict_xg(&model, f).clamp(1e-15, 1.0 - 1e-15);
        mean_pred += p / n;
        rate += (*goal as u8 as f64) / n;
        ll -= if *goal { p.ln() } else { (1.0 - p).ln() } / n;
        ll_base -= if *goal { base.ln() } else { (1.0 - base).ln() } / n;
    }
    Ok((
        (mean_pred - rate).abs() <= 0.01 && ll < ll_base,
        format!(
            "held-out mean predicted {mean_pred:.4} vs goal rate {rate:.4}, log loss {ll:.4} vs base rate {ll_base:.4}, {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    ))
}

fn ac7_skellam() -> Check {
    let f = skellam_probs(1.0, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pois = Poisson::new(1.0)?;
    let draws = 1_000_000;
    let ties = (0..draws)
        .filter(|_| pois.sample(&mut rng) == pois.sample(&mut rng))
        .count();
    let simulated = ties as f64 / draws as f64;
    let mut worst = 0.0f64;
    for i in 1..=20 {
        for j in 1..=20 {
            let g = skellam_probs(0.25 * i as f64, 0.25 * j as f64)?;
            worst = worst.max((g.p_home + g.p_draw + g.p_away - 1.0).abs());
        }
    }
    Ok((
        (f.p_draw - 0.30851).abs() <= 1e-4 && (simulated - f.p_draw).abs() <= 0.005 && worst <= 1e-9,
        format!(
            "p_draw(1,1) {:.6}, simulated {simulated:.5}, worst sum error on 20x20 grid {worst:.1e}",
            f.p_draw
        ),
    ))
}

fn ac8_prior_entropy() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let outcomes: Vec<Outcome> = (0..100_000)
        .map(|_| {
            let u: f64 = rng.random();
            if u < PRIOR.p_home {
                Outcome::Home
            } else if u < PRIOR.p_home + PRIOR.p_draw {
                Outcome::Draw
            } else {
                Outcome::Away
            }
        })
        .collect();
    let forecasts = vec![OutcomeForecast::new(PRIOR.p_home, PRIOR.p_draw, PRIOR.p_away)?; outcomes.len()];
    let ll = log_loss(&forecasts, &outcomes)?;
    let entropy: f64 = [PRIOR.p_home, PRIOR.p_draw, PRIOR.p_away].iter().map(|p| -p * p.ln()).sum();
    Ok((
        (ll - 1.048).abs() <= 0.01 && (entropy - 1.048).abs() <= 0.001,
        format!("log loss {ll:.4}, entropy {entropy:.4}"),
    ))
}

#[derive(Deserialize)]
struct PlantedRow {
    player_id: PlayerId,
    planted_skill: f64,
}

fn ac9_recoverability(run: &Run) -> Check {
    let cfg = RunConfig {
        min_minutes: 900.0,
        ..run.cfg.clone()
    };
    let values = read_pass_values(fs::File::open(cfg.out_dir.join(pipeline::VALUES_FILE))?)?;
    let lineups = parse_lineups(fs::File::open(&cfg.lineups)?)?;
    let ratings = ratings_for(&cfg, &values, &lineups, &GameSet::all())?;
    let planted: BTreeMap<PlayerId, f64> = csv::Reader::from_path(run.root.join("players.csv"))?
        .deserialize::<PlantedRow>()
        .map(|r| r.map(|r| (r.player_id, r.planted_skill)))
        .collect::<Result<_, _>>()?;
    let (skill, contribution): (Vec<f64>, Vec<f64>) =
        ratings.iter().map(|r| (planted[&r.player_id], r.contribution_p90)).unzip();
    let rho = spearman(&skill, &contribution);

    let mut sweep = BTreeMap::new();
    for row in csv::Reader::from_path(cfg.out_dir.join(pipeline::SWEEP_FILE))?.records() {
        let row = row?;
        if let Some(k) = row[0].strip_prefix("k=") {
            sweep.insert(k.parse::<usize>()?, row[1].parse::<f64>()?);
        }
    }
    let k_max = sweep.keys().max().copied().unwrap_or(1);
    let at_one = sweep.get(&1).copied().unwrap_or(f64::INFINITY);
    let (best_k, best) = sweep
        .iter()
        .filter(|(&k, _)| k > 1 && k < k_max)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(&k, &v)| (k, v))
        .unwrap_or((0, f64::INFINITY));
    let shape: Vec<String> = sweep.iter().map(|(k, v)| format!("{k}:{v:.4}")).collect();
    Ok((
        rho > 0.6 && best <= at_one,
        format!(
            "Spearman {rho:.3} over {} players; log loss by k [{}], best interior k={best_k}",
            ratings.len(),
            shape.join(" ")
        ),
    ))
}

fn ac10_determinism(a: &Run, b: &Run) -> Check {
    let files_a = artifacts(&a.root)?;
    let files_b = artifacts(&b.root)?;
    let mut differing: Vec<String> = Vec::new();
    if files_a != files_b {
        differing.push("file lists".into());
    }
    for f in &files_a {
        if fs::read(a.root.join(f))? != fs::read(b.root.join(f)).unwrap_or_default() {
            differing.push(f.display().to_string());
        }
    }
    Ok((
        differing.is_empty() && a.seconds < 600.0,
        format!(
            "{} files compared, differing: [{}]; full pipeline {:.1}s",
            files_a.len(),
            differing.join(", "),
            a.seconds
        ),
    ))
}

// ---------------------------------------------------------------- driver

fn report(id: &str, name: &str, result: Check, failures: &mut usize) {
    let (ok, detail) = result.unwrap_or_else(|e| (false, format!("error: {e:#}")));
    *failures += !ok as usize;
    println!("{id} {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
}

fn main() -> ExitCode {
    let mut failures = 0;
    report("AC1", "DTW equals exhaustive alignment", ac1_dtw_oracle(), &mut failures);
    report("AC2", "single-cell cluster/exhaustive equivalence", ac2_single_cell_equivalence(), &mut failures);
    report("AC3", "clustering speedup", ac3_clustering_speedup(), &mut failures);

    let runs = full_run(7).and_then(|a| Ok((a, full_run(7)?)));
    match &runs {
        Ok((a, _)) => report("AC4", "telescoping pass values", ac4_telescoping(a), &mut failures),
        Err(e) => report("AC4", "telescoping pass values", Err(anyhow::anyhow!("{e:#}")), &mut failures),
    }
    report("AC5", "two-neighbor worked example", ac5_worked_example(), &mut failures);
    report("AC6", "xG calibration", ac6_xg_calibration(), &mut failures);
    report("AC7", "Skellam probabilities", ac7_skellam(), &mut failures);
    report("AC8", "prior log loss equals entropy", ac8_prior_entropy(), &mut failures);
    match &runs {
        Ok((a, b)) => {
            report("AC9", "planted skill recovery and k sweep", ac9_recoverability(a), &mut failures);
            report("AC10", "end-to-end determinism", ac10_determinism(a, b), &mut failures);
        }
        Err(e) => {
            report("AC9", "planted skill recovery and k sweep", Err(anyhow::anyhow!("{e:#}")), &mut failures);
            report("AC10", "end-to-end determinism", Err(anyhow::anyhow!("{e:#}")), &mut failures);
        }
    }

    println!("{} of 10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
