use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinodal::adapt::BLOCK_CSV_HEADER;
use spinodal::analytic::Circle;
use spinodal::chsolver::Scheme;
use spinodal::interface::{LevelSet, Polyline};
use spinodal::runner::{execute, parse_config, read_snapshot, write_snapshot, Preset, RunConfig, RunOptions};

fn random_config(rng: &mut ChaCha8Rng) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.preset = match rng.gen_range(0..5) {
        0 => Preset::Test1,
        1 => Preset::Test2,
        2 => Preset::Test3,
        3 => Preset::Manufactured,
        _ => Preset::Custom(
            (0..rng.gen_range(1..4))
                .map(|_| Circle {
                    cx: rng.gen_range(-0.9..0.9),
                    cy: rng.gen_range(-0.9..0.9),
                    r: rng.gen_range(0.01..0.5),
                })
                .collect(),
        ),
    };
    let s = &mut cfg.stepper;
    s.epsilon = 10f64.powf(rng.gen_range(-3.0..0.0));
    s.scheme = if rng.gen_bool(0.5) { Scheme::Bdf2 } else { Scheme::BackwardEuler };
    s.dt_min = 10f64.powf(rng.gen_range(-14.0..-8.0));
    s.dt_init = s.dt_min * 10f64.powf(rng.gen_range(0.0..4.0));
    s.dt_max = s.dt_init * 10f64.powf(rng.gen_range(0.0..4.0));
    s.newton_tol = 10f64.powf(rng.gen_range(-13.0..-6.0));
    s.newton_max_iter = rng.gen_range(1..50);
    s.temporal_rtol = rng.gen_range(1e-7..1e-2);
    s.linearized = rng.gen_bool(0.3);
    s.convex_splitting = !s.linearized && rng.gen_bool(0.3);
    s.reuse_jacobian = rng.gen_bool(0.5);
    let a = &mut cfg.adapt;
    a.tol = rng.gen_range(1e-4..1.0);
    a.t_end = 10f64.powf(rng.gen_range(-5.0..1.0));
    a.block_steps = rng.gen_range(1..40);
    a.max_redo = rng.gen_range(0..20);
    a.refine_budget_factor = rng.gen_range(0.5..3.0);
    a.coarsen_budget_divisor = rng.gen_range(10.0..1000.0);
    a.max_generation = rng.gen_range(0..60);
    a.initial_subdivisions = rng.gen_range(1..20);
    a.degree = rng.gen_range(1..=2);
    cfg.bound.c = rng.gen_range(1e-3..10.0);
    cfg.bound.c0 = rng.gen_range(1e-3..10.0);
    cfg.output_dir = PathBuf::from(format!("runs/r{}", rng.gen_range(0..1000)));
    cfg.seed = rng.gen();
    cfg.snapshot_every_blocks = rng.gen_range(1..20);
    cfg
}

#[test]
fn random_configs_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let cfg = random_config(&mut rng);
        let text = cfg.to_text();
        assert_eq!(parse_config(&text).unwrap(), cfg, "{text}");
    }
}

fn small_config(dir: &Path) -> RunConfig {
    parse_config(&format!(
        "preset = test1\nepsilon = 0.08\ntol = 0.1\nt_end = 0.0002\nsnapshot_every_blocks = 2\noutput_dir = {}\n",
        dir.display()
    ))
    .unwrap()
}

#[test]
fn runs_are_deterministic_and_conserve_mass() {
    let tmp = tempfile::tempdir().unwrap();
    let quiet = RunOptions {
        quiet: true,
        ..Default::default()
    };
    let mut csv = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        let out = execute(&small_config(&dir), &quiet).unwrap();
        assert!(out.snapshots >= 2);
        // Every row, including refine+redo rows rolled back to the checkpoint.
        for r in &out.summary.records {
            assert!((r.mass - out.summary.initial_mass).abs() <= 1e-9, "{r:?}");
        }
        csv.push(fs::read_to_string(dir.join("blocks.csv")).unwrap());
    }
    assert_eq!(csv[0], csv[1]);
    assert!(csv[0].starts_with(BLOCK_CSV_HEADER));
    assert!(csv[0].lines().nth(1).unwrap().contains(",initial,"));
}

#[test]
fn written_snapshots_read_back_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let out = execute(
        &small_config(&dir),
        &RunOptions {
            quiet: true,
            vtk: true,
            ..Default::default()
        },
    )
    .unwrap();
    let mut snaps: Vec<PathBuf> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("snap_") && p.extension().unwrap() == "txt")
        .collect();
    snaps.sort();
    assert_eq!(snaps.len(), out.snapshots);
    for p in &snaps {
        assert!(p.with_extension("vtk").exists());
        let text = fs::read_to_string(p).unwrap();
        let state = read_snapshot(&text, "snap").unwrap();
        assert_eq!(write_snapshot(&state), text);
    }
    let last = read_snapshot(&fs::read_to_string(snaps.last().unwrap()).unwrap(), "snap").unwrap();
    // Snapshots hold the state the block was estimated on, before coarsening.
    let accepted = out.summary.records.iter().rev().find(|r| r.action.to_string() == "accept+coarsen").unwrap();
    assert_eq!(last.t, out.summary.final_state.t);
    assert_eq!(last.space().ndofs(), accepted.dofs);
    assert_eq!(last.mass(), accepted.mass);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinodal"))
}

#[test]
fn info_prints_defaults_that_parse_back() {
    let out = bin().arg("info").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(parse_config(&text).unwrap(), RunConfig::default());

    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("empty.cfg");
    fs::write(&cfg, "").unwrap();
    let out = bin().arg("info").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
}

#[test]
fn bad_config_fails_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "tol = 0.1\nepsilon = zero\n").unwrap();
    let out = bin().arg("info").arg("--config").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error:") && err.contains('2'), "{err}");
}

/// A run directory whose level set is the vertical line `x = shift`.
fn synthetic_run(root: &Path, name: &str, tol: f64, dofs: usize, shift: f64) -> PathBuf {
    let dir = root.join(name);
    fs::create_dir_all(&dir).unwrap();
    let mut cfg = RunConfig::default();
    cfg.preset = Preset::Test1;
    cfg.stepper.epsilon = 0.04;
    cfg.adapt.tol = tol;
    fs::write(dir.join("config.cfg"), cfg.to_text()).unwrap();
    let t = 0.001;
    fs::write(
        dir.join("blocks.csv"),
        format!(
            "{BLOCK_CSV_HEADER}\n0,0,0.01,initial,0,10,{n0},0,1,0,0\n1,{t},0.2,refine+redo,3,20,7,0,1,0,0\n1,{t},0.01,accept+coarsen,0,20,{dofs},0,1,0,0\n",
            n0 = dofs / 2
        ),
    )
    .unwrap();
    let points = (0..=8).map(|i| [shift, -1.0 + 0.25 * i as f64]).collect();
    let ls = LevelSet {
        polylines: vec![Polyline { points, closed: false }],
        t,
        generation: 0,
    };
    fs::write(dir.join("ls_00001.txt"), ls.to_text()).unwrap();
    dir
}

#[test]
fn rate_study_cli_on_synthetic_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs = [
        synthetic_run(tmp.path(), "a", 0.08, 5995, 0.0),
        synthetic_run(tmp.path(), "b", 0.04, 9766, 0.5),
        synthetic_run(tmp.path(), "c", 0.02, 12565, 0.75),
    ];
    let out = bin().arg("rate-study").args(&dirs).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("distance 0-1: 0.5\n"), "{text}");
    assert!(text.contains("distance 1-2: 0.25\n"), "{text}");
    let ratio = text.lines().find(|l| l.starts_with("ratio 0:")).unwrap();
    let fields: Vec<&str> = ratio.split_whitespace().collect();
    assert_eq!(fields[3], "0.5");
    // The DOF triple in increasing order gives a predictor of its own.
    let p: f64 = fields[5].parse().unwrap();
    let q = [5995.0f64, 9766.0, 12565.0].map(|n| 1.0 / (n * n));
    assert!((p - (q[1] - q[2]) / (q[0] - q[1])).abs() < 1e-12);

    let out = bin().arg("rate-study").args(&dirs[..2]).output().unwrap();
    assert!(!out.status.success());
    let out = bin().arg("rate-study").args([&dirs[1], &dirs[0], &dirs[2]]).output().unwrap();
    assert!(!out.status.success());
}
