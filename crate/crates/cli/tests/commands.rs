use std::path::Path;
use std::process::Command;

use dynfold::commands::{cmd_demos, cmd_eval, cmd_identify, cmd_replay, cmd_train, EvalOptions, Mode, CHECKPOINT_FILE, METRICS_FILE};
use dynfold::config::RunConfig;
use dynfold::report::{Stat, Undefined};
use dynfold::CliError;
use dynfold_core::env::ObservationMode;
use dynfold_learn::checkpoint::Checkpoint;

const SMALL: &str = r#"
seed = 11
cloth = { grid_n = 5, mass_per_point = 0.01, k_bend = 1.0 }
ranges = { grid_n = [5, 5], side_length = [0.3, 0.3], mass_per_point = [0.008, 0.012], k_struct = [80.0, 120.0], k_shear = [15.0, 25.0], k_bend = [0.8, 1.2], damping = [0.04, 0.06], air_drag = [0.004, 0.006], friction = [0.4, 0.6] }
identify = { candidates = 8, pool_size = 3 }
demos.count = 1
visual.image_size = 16
schedule = { epochs = 2, cycles = 1, env_steps = 30, grad_steps = 3, eval_episodes = 2 }
paths = { demos = "demos.json", pool = "pool.json" }

[learner]
batch_size = 8
random_steps = 10
demo_fraction = 0.5
net = { image_size = 16, channels = [2], latent = 8, actor_hidden = [8], aux_hidden = [8], critic_hidden = [8] }
"#;

fn setup(dir: &Path) -> RunConfig {
    let path = dir.join("run.toml");
    std::fs::write(&path, SMALL).unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    cmd_demos(&cfg, &dir.join("demos.json")).unwrap();
    cfg
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dynfold"))
}

#[test]
fn exit_codes_distinguish_usage_from_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin().arg("no-such-command").output().unwrap();
    assert_eq!(status.status.code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));

    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = bin().args(["--config", cfg.to_str().unwrap(), "identify", "--out", "x.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("demos.json"));

    let bad = dir.path().join("bad.log");
    std::fs::write(&bad, "{\"seed\": 1\n").unwrap();
    let out = bin().args(["replay", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identify_writes_m_entries_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let pool = cmd_identify(&cfg, &a).unwrap();
    cmd_identify(&cfg, &b).unwrap();
    assert_eq!(pool.entries.len(), 3);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn missing_demo_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, SMALL).unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    let err = cmd_identify(&cfg, &dir.path().join("pool.json")).unwrap_err();
    assert!(matches!(err, CliError::MissingFile { what: "demos", .. }), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn fixed_training_writes_one_row_per_epoch_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = setup(dir.path());
    cfg.paths.pool = None;
    let run = |name: &str| {
        let out = dir.path().join(name);
        let rows = cmd_train(&cfg, Mode::Fixed, &out, false).unwrap();
        (rows, std::fs::read_to_string(out.join(METRICS_FILE)).unwrap(), std::fs::read(out.join(CHECKPOINT_FILE)).unwrap())
    };
    let (rows, csv_a, ckpt_a) = run("a");
    let (_, csv_b, ckpt_b) = run("b");
    assert_eq!(rows.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert_eq!(csv_a.lines().count(), 1 + 3);
    assert_eq!(csv_a, csv_b);
    assert_eq!(ckpt_a, ckpt_b);
    assert!(rows[1].demo_trajectories > 0);
    // the fixed baseline's actor is built for tracked-point state, never images
    let manifest = Checkpoint::from_bytes(&ckpt_a).unwrap().manifest;
    assert_eq!(manifest.net.observation, ObservationMode::State);
}

#[test]
fn interrupted_training_resumes_after_the_last_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = setup(dir.path());
    cfg.paths.pool = None;
    let out = dir.path().join("run");
    cmd_train(&cfg, Mode::Fixed, &out, false).unwrap();
    cfg.schedule.epochs = 3;
    let rows = cmd_train(&cfg, Mode::Fixed, &out, true).unwrap();
    assert_eq!(rows.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    let csv = std::fs::read_to_string(out.join(METRICS_FILE)).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert_eq!(Checkpoint::load(out.join(CHECKPOINT_FILE)).unwrap().manifest.epoch, 3);
}

#[test]
fn visual_mode_trains_on_the_pool() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    cmd_identify(&cfg, cfg.paths.pool.as_ref().unwrap()).unwrap();
    let rows = cmd_train(&cfg, Mode::Ours, &dir.path().join("ours"), false).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.mean_d_sum.is_finite() && r.discarded_episodes == 0));
    let ckpt = Checkpoint::load(dir.path().join("ours").join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(ckpt.manifest.net.observation, ObservationMode::Image);
}

#[test]
fn evaluation_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = setup(dir.path());
    cmd_identify(&cfg, cfg.paths.pool.as_ref().unwrap()).unwrap();
    cfg.paths.pool = None;
    cmd_train(&cfg, Mode::Fixed, &dir.path().join("fixed"), false).unwrap();
    let ckpt = dir.path().join("fixed").join(CHECKPOINT_FILE);

    let empty = cmd_eval(&cfg, Some(&ckpt), &EvalOptions { episodes: 0, ..EvalOptions::default() }).unwrap();
    assert_eq!(empty.aggregates.success_rate, Stat::Undefined(Undefined::Undefined));

    // the scripted demonstration replayed on its own fabric always succeeds
    let demos: dynfold_core::randomization::DemoSet = dynfold_core::randomization::DemoSet::load(dir.path().join("demos.json")).unwrap();
    let demo_file = dir.path().join("demo0.json");
    std::fs::write(&demo_file, serde_json::to_string(&demos.demos[0]).unwrap()).unwrap();
    let scripted = cmd_eval(&cfg, None, &EvalOptions { episodes: 4, actions: Some(demo_file), ..EvalOptions::default() }).unwrap();
    assert_eq!(scripted.aggregates.success_rate, Stat::Value(1.0));

    cfg.paths.pool = Some(dir.path().join("pool.json"));
    let opts = EvalOptions { episodes: 10, per_fabric: true, fixed_trajectory: true, ..EvalOptions::default() };
    let report = cmd_eval(&cfg, Some(&ckpt), &opts).unwrap();
    assert_eq!(report.episodes.len(), 30);
    assert_eq!(report.per_fabric.iter().map(|g| (g.fabric, g.aggregates.episodes)).collect::<Vec<_>>(), vec![(0, 10), (1, 10), (2, 10)]);
    assert!(report.is_consistent());
    let saved = dir.path().join("report.json");
    report.save(&saved).unwrap();
    assert_eq!(dynfold::report::EvalReport::load(&saved).unwrap(), report);
}

#[test]
fn replay_renders_one_frame_per_logged_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path());
    let demos = dynfold_core::randomization::DemoSet::load(dir.path().join("demos.json")).unwrap();
    let demo_file = dir.path().join("demo0.json");
    std::fs::write(&demo_file, serde_json::to_string(&demos.demos[0]).unwrap()).unwrap();
    let log = dir.path().join("episode.log");
    let mut cfg = cfg;
    cfg.paths.pool = None;
    cmd_eval(&cfg, None, &EvalOptions { episodes: 1, actions: Some(demo_file), log: Some(log.clone()), ..EvalOptions::default() }).unwrap();
    let lines = std::fs::read_to_string(&log).unwrap().lines().count();

    let frames = dir.path().join("frames");
    let summary = cmd_replay(&log, &frames).unwrap();
    assert_eq!(summary.frames, lines);
    assert_eq!(std::fs::read_dir(&frames).unwrap().count(), lines);
    assert!((summary.d_sum.last().unwrap() - summary.logged_final_d_sum).abs() < 1e-12);
    let first = std::fs::read(frames.join("frame_00000.pgm")).unwrap();
    assert!(dynfold_core::render::GrayImage::from_pgm(&first).unwrap().count_nonzero() > 0);

    let text = std::fs::read_to_string(&log).unwrap();
    let mut broken: Vec<&str> = text.lines().collect();
    let cut = &broken[2][..broken[2].len() / 2];
    broken[2] = cut;
    let bad = dir.path().join("broken.log");
    std::fs::write(&bad, broken.join("\n")).unwrap();
    let err = cmd_replay(&bad, &frames).unwrap_err();
    assert!(err.to_string().contains("line 3"), "{err}");
}
