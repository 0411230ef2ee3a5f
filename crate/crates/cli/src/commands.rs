use std::fs::{self, File};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use pdl_core::alm::{alm_multistart, AlmOutcome};
use pdl_core::eval::{evaluate, evaluate_best_of, write_table_csv, EvalReport};
use pdl_core::problems::{qcqp_bruteforce, Dataset, GroundTruth, ProblemKind, Solution, BRUTEFORCE_MAX_VARS};
use pdl_core::schemes::{baseline_train, pdl_train, Scheme, SchemeConfig, TraceRow, TrainedModel};
use pdl_core::seeding::derive_seed;
use pdl_core::{Error, Result};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ReferenceSolver};

fn csv_err(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}

fn write_snapshot(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("config.toml"), cfg.to_toml()?)?;
    Ok(())
}

fn load_split(cfg: &ExperimentConfig, split: &str) -> Result<Dataset<f64>> {
    let path = cfg.dataset_path(split);
    if !path.exists() {
        return Err(Error::Data(format!(
            "{} not found; run `generate` first",
            path.display()
        )));
    }
    let d = Dataset::load(&path)?;
    if d.family().spec() != cfg.family {
        return Err(Error::Data(format!(
            "{} was generated for a different family; rerun `generate`",
            path.display()
        )));
    }
    Ok(d)
}

fn load_reference(cfg: &ExperimentConfig) -> Result<GroundTruth> {
    let path = cfg.reference_path();
    if !path.exists() {
        return Err(Error::Data(format!(
            "{} not found; run `generate` with `data.reference = true`",
            path.display()
        )));
    }
    GroundTruth::load(&path)
}

fn resolve_solver(cfg: &ExperimentConfig) -> ReferenceSolver {
    match (cfg.reference, cfg.family.kind) {
        (ReferenceSolver::Auto, ProblemKind::Qcqp) if cfg.family.dims.n <= 16 => ReferenceSolver::Bruteforce,
        (ReferenceSolver::Auto, _) => ReferenceSolver::Alm,
        (r, _) => r,
    }
}

/// Multi-start ALM on every instance; each instance's starts are seeded
/// from its corpus index.
fn alm_all(cfg: &ExperimentConfig, data: &Dataset<f64>) -> Result<Vec<AlmOutcome<f64>>> {
    let fam = data.family();
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            let inst = fam.instance(data.x(i))?;
            alm_multistart(
                &inst,
                &cfg.alm.solver,
                cfg.alm.num_starts,
                derive_seed(cfg.alm.seed, data.indices()[i] as u64),
            )
        })
        .collect()
}

fn solve_reference(cfg: &ExperimentConfig, data: &Dataset<f64>) -> Result<GroundTruth> {
    let fam = data.family();
    let sols: Vec<Solution> = match resolve_solver(cfg) {
        ReferenceSolver::Bruteforce => {
            if fam.kind() != ProblemKind::Qcqp {
                return Err(Error::Config("brute force only applies to the QCQP family".into()));
            }
            if fam.num_vars() > BRUTEFORCE_MAX_VARS {
                return Err(Error::Budget {
                    n: fam.num_vars(),
                    limit: BRUTEFORCE_MAX_VARS,
                });
            }
            (0..data.len())
                .into_par_iter()
                .map(|i| {
                    let (y, f) = qcqp_bruteforce(&fam.instance(data.x(i))?)?;
                    Ok(Solution { objective: f, y })
                })
                .collect::<Result<_>>()?
        }
        _ => alm_all(cfg, data)?
            .into_iter()
            .map(|o| Solution {
                objective: o.objective,
                y: o.y().to_vec(),
            })
            .collect(),
    };
    let mut gt = GroundTruth::new();
    for (&i, s) in data.indices().iter().zip(sols) {
        gt.insert(i, s);
    }
    Ok(gt)
}

pub fn generate(cfg: &ExperimentConfig) -> Result<()> {
    write_snapshot(cfg)?;
    let fam = Arc::new(cfg.family.generate::<f64>()?);
    let all = Dataset::sample(fam, cfg.data.count, cfg.data.seed)?;
    let (train, valid, test) = all.split(cfg.data.ratio)?;
    fs::create_dir_all(cfg.out.join("data"))?;
    for (name, d) in [("train", &train), ("valid", &valid), ("test", &test)] {
        d.save(&cfg.dataset_path(name))?;
    }
    let mut log = format!(
        "family {:?} seed {}\ninstances {} (train {}, valid {}, test {}) seed {}\n",
        cfg.family.kind,
        cfg.family.seed,
        all.len(),
        train.len(),
        valid.len(),
        test.len(),
        cfg.data.seed
    );
    if cfg.data.reference {
        let solver = resolve_solver(cfg);
        let gt = solve_reference(cfg, &all)?;
        gt.save(&cfg.reference_path())?;
        log += &format!(
            "reference {solver:?} alm seed {} starts {}\n",
            cfg.alm.seed, cfg.alm.num_starts
        );
    }
    fs::write(cfg.out.join("data").join("generate.log"), &log)?;
    eprint!("{log}");
    Ok(())
}

pub fn alm_solve(cfg: &ExperimentConfig) -> Result<()> {
    write_snapshot(cfg)?;
    let test = load_split(cfg, "test")?;
    let outcomes = alm_all(cfg, &test)?;
    let dir = cfg.alm_dir();
    fs::create_dir_all(&dir)?;
    let mut gt = GroundTruth::new();
    let mut traces = csv::Writer::from_path(dir.join("traces.csv")).map_err(csv_err)?;
    traces
        .write_record(["instance", "k", "f", "v_k", "rho", "inner_iters"])
        .map_err(csv_err)?;
    let (mut converged, mut diverged) = (0, 0);
    for (&i, o) in test.indices().iter().zip(&outcomes) {
        gt.insert(
            i,
            Solution {
                objective: o.objective,
                y: o.y().to_vec(),
            },
        );
        converged += o.converged as usize;
        diverged += o.diverged as usize;
        for r in &o.trace {
            traces
                .write_record([
                    i.to_string(),
                    r.k.to_string(),
                    r.f.to_string(),
                    r.v_k.to_string(),
                    r.rho.to_string(),
                    r.inner_iters.to_string(),
                ])
                .map_err(csv_err)?;
        }
    }
    traces.flush()?;
    gt.save(&dir.join("solutions.csv"))?;
    eprintln!(
        "alm: {} instances, {converged} converged, {diverged} diverged",
        outcomes.len()
    );
    Ok(())
}

fn trace_sink(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

pub fn train(cfg: &ExperimentConfig) -> Result<()> {
    write_snapshot(cfg)?;
    let train = load_split(cfg, "train")?;
    let valid = load_split(cfg, "valid")?;
    let scheme = cfg.scheme_tag();
    let targets = if scheme.is_supervised() {
        let gt = load_reference(cfg)?;
        Some((gt.targets_for(&train)?, gt.targets_for(&valid)?))
    } else {
        None
    };
    for &seed in &cfg.seeds {
        let dir = cfg.model_dir(scheme, seed);
        fs::create_dir_all(&dir)?;
        let mut out = trace_sink(&dir.join("trace.csv"))?;
        let mut failed = None;
        let mut sink = |r: &TraceRow| {
            if failed.is_none() {
                if let Err(e) = out.serialize(r).and_then(|_| out.flush().map_err(csv::Error::from)) {
                    failed = Some(e);
                }
            }
        };
        let model = match &cfg.scheme {
            SchemeConfig::Pdl(c) => pdl_train(&train, &valid, c, seed, &mut sink),
            SchemeConfig::Baseline(c) => {
                let (tt, tv) = match &targets {
                    Some((a, b)) => (Some(a), Some(b)),
                    None => (None, None),
                };
                baseline_train(&train, &valid, tt, tv, c, seed, &mut sink)
            }
        };
        if let Some(e) = failed {
            return Err(csv_err(e));
        }
        let model = model?;
        model.save(&dir)?;
        let last = model.trace.last();
        eprintln!(
            "{} seed {seed}: final train loss {:.6}, valid loss {:.6}",
            scheme.name(),
            last.map_or(f64::NAN, |r| r.train_loss),
            last.map_or(f64::NAN, |r| r.valid_loss)
        );
    }
    Ok(())
}

fn write_report(dir: &Path, r: &EvalReport, name: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_table_csv(File::create(dir.join(format!("{name}.csv")))?, std::slice::from_ref(r))?;
    r.write_instances_csv(File::create(dir.join(format!("{name}.instances.csv")))?)?;
    fs::write(dir.join(format!("{name}.summary.toml")), r.summary_toml()?)?;
    Ok(())
}

pub fn eval(cfg: &ExperimentConfig) -> Result<()> {
    write_snapshot(cfg)?;
    let test = load_split(cfg, "test")?;
    let reference = load_reference(cfg)?;
    let scheme = cfg.scheme_tag();
    let models = cfg
        .seeds
        .iter()
        .map(|&s| {
            let dir = cfg.model_dir(scheme, s);
            if !dir.join("model.toml").exists() {
                return Err(Error::Data(format!(
                    "no trained model in {}; run `train` first",
                    dir.display()
                )));
            }
            TrainedModel::<f64>::load(&dir)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = if models.len() == 1 {
        evaluate(&models[0], &test, &reference)?
    } else {
        evaluate_best_of(&models, &test, &reference)?
    };
    write_report(&cfg.eval_dir(), &report, scheme.name())?;
    let alm = cfg.alm_dir().join("solutions.csv");
    let mut rows = vec![report];
    if alm.exists() {
        let sols = GroundTruth::load(&alm)?;
        let ys = sols.targets_for(&test)?;
        let r = EvalReport::from_decisions("alm", &test, &ys, &reference.objectives_for(&test)?, 0.0)?;
        write_report(&cfg.eval_dir(), &r, "alm")?;
        rows.insert(0, r);
    }
    write_table_csv(std::io::stdout().lock(), &rows)
}

fn method_rank(method: &str) -> usize {
    let base = method.split(' ').next().unwrap_or("");
    Scheme::parse(base).map_or(0, |s| 1 + Scheme::ALL.iter().position(|&t| t == s).unwrap_or(0))
}

pub fn report(cfg: &ExperimentConfig) -> Result<()> {
    let dir = cfg.eval_dir();
    if !dir.exists() {
        return Err(Error::Data(format!("{} not found; run `eval` first", dir.display())));
    }
    let mut reports = Vec::new();
    let mut names: Vec<_> = fs::read_dir(&dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    names.sort();
    for path in names {
        if path.to_string_lossy().ends_with(".summary.toml") {
            let text = fs::read_to_string(&path)?;
            let r: EvalReport = toml::from_str(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                location: e.span().map_or("file".into(), |s| format!("byte {}", s.start)),
                message: e.message().to_string(),
            })?;
            reports.push(r);
        }
    }
    if reports.is_empty() {
        return Err(Error::Data(format!("no evaluation summaries in {}", dir.display())));
    }
    reports.sort_by_key(|r| method_rank(&r.method));
    let mut buf = Vec::new();
    write_table_csv(&mut buf, &reports)?;
    fs::write(cfg.out.join("report.csv"), &buf)?;
    std::io::stdout().lock().write_all(&buf)?;
    Ok(())
}
