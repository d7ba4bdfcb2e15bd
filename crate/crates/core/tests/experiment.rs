use foa_reid::embed::{train_student, StudentModel, Teacher};
use foa_reid::experiment::io::{MIXTURE_FILE, SPEC_FILE, TRUTH_FILE, WET_FILE};
use foa_reid::experiment::{
    cmd_eval, cmd_gen, cmd_run, cmd_sweep, cmd_train, generate_specs, ExperimentConfig,
    ExtractorKind, SceneBatch, BASELINE, REPORT_FILE,
};
use foa_reid::scene::render_scene;
use foa_reid::tracker::ErrorModel;

fn small(out: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        out: out.to_path_buf(),
        seed: 77,
        ..ExperimentConfig::default()
    };
    cfg.scenes.count = 2;
    cfg.scenes.duration_s = 10.0;
    cfg
}

fn set(cfg: &ExperimentConfig, key: &str, v: toml::Value) -> ExperimentConfig {
    cfg.with_values(&[(key.to_string(), v)]).unwrap()
}

#[test]
fn one_scene_batch_has_four_files_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.scenes.count = 1;
    let g = cmd_gen(&cfg).unwrap();
    assert_eq!(g.scenes, 1);
    let batch = SceneBatch::open(&cfg.batch_dir()).unwrap();
    assert_eq!(batch.len(), 1);
    let mut names: Vec<String> = std::fs::read_dir(&batch.dirs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let mut want = vec![MIXTURE_FILE, SPEC_FILE, TRUTH_FILE, WET_FILE];
    want.sort();
    assert_eq!(names, want);
    let s = batch.load(0).unwrap();
    assert_eq!(s.scene.wet.len(), 2);
    assert_eq!(s.scene.truth.tracks.len(), 2);
}

#[test]
fn batch_overlap_hits_target() {
    let mut cfg = ExperimentConfig::default();
    cfg.scenes.count = 20;
    cfg.scenes.overlap = 0.3;
    let specs = generate_specs(&cfg).unwrap();
    let mean = specs
        .iter()
        .map(|s| render_scene(s).unwrap().truth.overlap_ratio())
        .sum::<f64>()
        / specs.len() as f64;
    assert!((mean - 0.30).abs() <= 0.03, "mean overlap {mean}");
}

#[test]
fn zero_epochs_writes_the_initial_model() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.train.epochs = 0;
    cmd_gen(&cfg).unwrap();
    let t = cmd_train(&cfg).unwrap();
    assert!(!t.failed());
    let written = StudentModel::load(&t.model_path).unwrap();
    let teacher = Teacher::new(cfg.extractor.teacher.clone()).unwrap();
    let tcfg = foa_reid::embed::TrainConfig {
        seed: foa_reid::scene::derive_seed(cfg.seed, cfg.train.seed),
        ..cfg.train.clone()
    };
    let batch = SceneBatch::open(&cfg.batch_dir()).unwrap();
    let direct = train_student(&batch, &teacher, &tcfg, 1).unwrap().model;
    assert_eq!(written, direct);
}

#[test]
fn default_training_lowers_epoch_mean_loss() {
    let cfg = ExperimentConfig::default();
    let teacher = Teacher::new(cfg.extractor.teacher.clone()).unwrap();
    let specs = generate_specs(&cfg).unwrap();
    assert_eq!(specs.len(), 50);
    let r = train_student(&specs[..], &teacher, &cfg.train, 0).unwrap();
    assert!(r.final_loss < r.initial_loss);
    assert!(
        r.epoch_losses.windows(2).all(|w| w[1] < w[0]),
        "{:?}",
        r.epoch_losses
    );
}

#[test]
fn error_free_oracle_run_is_perfect_and_eval_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.tracker = ErrorModel::perfect();
    cfg.extractor.kind = ExtractorKind::Oracle;
    cmd_gen(&cfg).unwrap();
    let run = cmd_run(&cfg).unwrap();
    assert!(run
        .rows
        .iter()
        .filter(|r| r.condition != BASELINE)
        .all(|r| r.assa == 1.0));
    let eval = cmd_eval(&cfg).unwrap();
    assert_eq!(run.rows, eval.rows);
    assert!(run.dir.join(REPORT_FILE).is_file());
}

#[test]
fn block_sweep_gives_one_row_per_size() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    cmd_gen(&cfg).unwrap();
    let s = cmd_sweep(&cfg).unwrap();
    let method: Vec<_> = s.rows.iter().filter(|r| r.condition != BASELINE).collect();
    let values: Vec<&str> = method.iter().map(|r| r.value.as_str()).collect();
    assert_eq!(values, ["8", "25", "50", "100", "200"]);
    let text = std::fs::read_to_string(&s.csv_path).unwrap();
    assert_eq!(text.lines().count(), 1 + s.rows.len());
}

#[test]
fn single_value_sweep_equals_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = set(
        &small(dir.path()),
        "sweep.values",
        toml::Value::Array(vec![toml::Value::Integer(25)]),
    );
    cmd_gen(&cfg).unwrap();
    let run = cmd_run(&cfg).unwrap();
    let sweep = cmd_sweep(&cfg).unwrap();
    let runs: Vec<f64> = run.summaries.iter().map(|s| s.mean_assa).collect();
    let sweeps: Vec<f64> = sweep.rows.iter().map(|r| r.mean_assa).collect();
    assert_eq!(runs, sweeps);
    let a = std::fs::read(run.dir.join(REPORT_FILE)).unwrap();
    let b = std::fs::read(dir.path().join("sweep/block_frames=25").join(REPORT_FILE)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn start_policies_give_distinct_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = set(
        &small(dir.path()),
        "reassign.mode",
        toml::Value::String("fragment".into()),
    );
    cmd_gen(&cfg).unwrap();
    let mut conditions = Vec::new();
    for p in ["beginning", "random"] {
        let mut c = set(&cfg, "reassign.start_policy", toml::Value::String(p.into()));
        c.out = dir.path().join(p);
        c.batch_dir = Some(cfg.batch_dir());
        let run = cmd_run(&c).unwrap();
        conditions.push(run.summaries[0].condition.clone());
    }
    assert_eq!(conditions, ["fragment-beginning", "fragment-random"]);
}

#[test]
fn missing_batch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    assert!(cmd_run(&cfg).is_err());
    assert!(cmd_train(&cfg).is_err());
}
