use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pdl_cli::ExperimentConfig;

fn pdl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pdl")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

const QP: &str = r#"
out = "OUT"
seeds = [4]
reference = "auto"

[family]
kind = "convex-qp"
n = 6
n_eq = 2
n_ineq = 3
seed = 1

[data]
count = 60
seed = 2

[alm]
num_starts = 1
seed = 3

[alm.solver]
rho = 1.0
alpha = 10.0
tau = 0.5
rho_max = 1e6
max_outer = 20
inner_tol = 1e-6
inner_cap_per_var = 1000
epsilon = 1e-6
init_radius = 1.0
dual_init_radius = 0.0
feasibility_tol = 1e-3
divergence_window = 5

[scheme]
kind = "pdl"
rho = 0.5
alpha = 10.0
tau = 0.8
rho_max = 5000.0
outer_iters = 2
inner_iters = 3
budget = "epochs"
valid_every = 1
batch_size = 16
lr = LR
lr_decay = 0.99
dual_norm = "l1"
hidden = [8]
"#;

fn write_config(dir: &Path, lr: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    let out = dir.join("run");
    fs::write(&path, QP.replace("OUT", out.to_str().unwrap()).replace("LR", lr)).unwrap();
    path
}

#[test]
fn presets_snapshot_round_trip() {
    for name in pdl_cli::config::PRESETS {
        let cfg = ExperimentConfig::preset(name).unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::parse(&text, Path::new("snapshot")).unwrap(), cfg);
    }
    let qp = ExperimentConfig::preset("qp-default").unwrap();
    assert_eq!(qp.alm.solver.alpha, 10.0);
    assert_eq!(ExperimentConfig::preset("qcqp-default").unwrap().alm.num_starts, 50);
}

#[test]
fn full_pipeline_on_a_small_qp() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "1e-3");
    let c = cfg.to_str().unwrap();
    let run = dir.path().join("run");

    ok(&pdl(&["generate", "--config", c]));
    let first: Vec<Vec<u8>> = ["train.pdl", "test.pdl", "reference.csv"]
        .iter()
        .map(|f| fs::read(run.join("data").join(f)).unwrap())
        .collect();
    ok(&pdl(&["generate", "--config", c, "--jobs", "2"]));
    let second: Vec<Vec<u8>> = ["train.pdl", "test.pdl", "reference.csv"]
        .iter()
        .map(|f| fs::read(run.join("data").join(f)).unwrap())
        .collect();
    assert_eq!(first, second);

    let snapshot = fs::read_to_string(run.join("config.toml")).unwrap();
    let parsed = ExperimentConfig::parse(&snapshot, Path::new("snapshot")).unwrap();
    assert_eq!(parsed, ExperimentConfig::load(&cfg).unwrap());

    ok(&pdl(&["alm-solve", "--config", c]));
    assert!(fs::read_to_string(run.join("alm/traces.csv"))
        .unwrap()
        .starts_with("instance,k,f,v_k,rho,inner_iters"));

    ok(&pdl(&["train", "--config", c]));
    let model = run.join("models/pdl/seed-4");
    assert!(model.join("primal.ckpt").exists() && model.join("dual.ckpt").exists());
    let trace = fs::read_to_string(model.join("trace.csv")).unwrap();
    assert!(trace.starts_with("outer_k,inner_step,scheme,train_loss,valid_loss,v_k,rho,lr"));
    assert_eq!(trace.lines().count(), 1 + 2 * 2 * 3);

    let table = ok(&pdl(&["eval", "--config", c]));
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "Method,Type,Obj.,Opt. Gap(%),Max eq.,Max ineq.,Mean eq.,Mean ineq."
    );
    let alm_row = lines.next().unwrap();
    assert!(alm_row.starts_with("alm,Solver,"), "{alm_row}");
    assert!(alm_row.ends_with(",0.000,0.000,0.000,0.000,0.000"), "{alm_row}");
    assert!(lines.next().unwrap().starts_with("pdl,SSL,"));

    let report = ok(&pdl(&["report", "--config", c]));
    assert_eq!(report, fs::read_to_string(run.join("report.csv")).unwrap());
    assert_eq!(report.lines().count(), 3);

    // retraining with the same seed is byte-identical
    let before = fs::read(model.join("primal.ckpt")).unwrap();
    ok(&pdl(&["train", "--config", c]));
    assert_eq!(fs::read(model.join("primal.ckpt")).unwrap(), before);
}

#[test]
fn supervised_training_without_sidecar_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "1e-3");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("count = 60\nseed = 2", "count = 60\nseed = 2\nreference = false");
    fs::write(&cfg, text).unwrap();
    let c = cfg.to_str().unwrap();
    ok(&pdl(&["generate", "--config", c]));
    let out = pdl(&["train", "--config", c, "--scheme", "naive-mae"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("generate"));
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "1e-3");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("seeds = [4]", "seeds = [4]\nbogus = 1");
    fs::write(&cfg, text).unwrap();
    let out = pdl(&["generate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    assert_eq!(pdl(&["train", "--preset", "nope"]).status.code(), Some(2));
    assert_eq!(pdl(&["train"]).status.code(), Some(2));
    let empty = write_config(dir.path(), "1e-3");
    fs::write(
        &empty,
        fs::read_to_string(&empty).unwrap().replace("seeds = [4]", "seeds = []"),
    )
    .unwrap();
    assert_eq!(
        pdl(&["train", "--config", empty.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn diverging_training_exits_4_and_keeps_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "1e300");
    let c = cfg.to_str().unwrap();
    ok(&pdl(&["generate", "--config", c]));
    let out = pdl(&["train", "--config", c]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("run/models/pdl/seed-4/trace.csv").exists());
}

#[test]
fn qcqp_best_of_several_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::preset("qcqp-default").unwrap();
    cfg.out = dir.path().join("run");
    cfg.family.dims = pdl_core::problems::Dims::qcqp(5, 7);
    cfg.data.count = 48;
    cfg.seeds = vec![1, 2, 3];
    if let pdl_core::schemes::SchemeConfig::Pdl(p) = &mut cfg.scheme {
        p.outer_iters = 2;
        p.inner_iters = 4;
        p.valid_every = 2;
        p.batch_size = 8;
        p.hidden = vec![8];
    }
    let path = dir.path().join("q.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    let c = path.to_str().unwrap();
    ok(&pdl(&["generate", "--config", c]));
    ok(&pdl(&["train", "--config", c]));
    let table = ok(&pdl(&["eval", "--config", c]));
    assert!(table.contains("pdl (best of 3),SSL,"), "{table}");
    let summary = fs::read_to_string(dir.path().join("run/eval/pdl.summary.toml")).unwrap();
    let r: pdl_core::eval::EvalReport = toml::from_str(&summary).unwrap();
    assert_eq!(r.aggregates.max_eq, 0.0);
}
