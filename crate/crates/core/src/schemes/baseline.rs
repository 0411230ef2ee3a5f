use super::common::{eval_loss, mean, network_widths, train_step, unit_batches, Batch};
use super::config::{BaselineConfig, Budget, Scheme};
use super::losses::{ld_update, naive_supervised_loss, ssl_penalty_loss, supervised_penalty_loss};
use super::model::{primal_head, SchemeConfig, TraceRow, TrainedModel};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{Adam, Mlp};
use crate::problems::{Dataset, ProblemFamily};
use crate::scalar::Scalar;
use crate::seeding::{derive_seed, rng_for};

struct Weights<T> {
    g: Vec<T>,
    h: Vec<T>,
}

fn scheme_loss<T: Scalar>(
    g: &mut Graph<T>,
    scheme: Scheme,
    fam: &ProblemFamily<T>,
    xs: &Tensor<T>,
    y: Var,
    y_true: Option<&Tensor<T>>,
    w: &Weights<T>,
) -> Result<Var> {
    match (scheme.supervised_norm(), y_true) {
        (Some(norm), Some(t)) if scheme.penalized() => supervised_penalty_loss(g, fam, xs, y, t, norm, &w.g, &w.h),
        (Some(norm), Some(t)) => naive_supervised_loss(g, y, t, norm),
        (Some(_), None) => Err(Error::Data(format!(
            "scheme {} needs ground-truth targets",
            scheme.name()
        ))),
        (None, _) => ssl_penalty_loss(g, fam, xs, y, &w.g, &w.h),
    }
}

/// Per-constraint mean violation over `xs`: `max(g_j, 0)` and `|h_j|`.
fn mean_violations<T: Scalar>(net: &Mlp<T>, fam: &ProblemFamily<T>, xs: &Tensor<T>) -> Result<(Vec<T>, Vec<T>)> {
    let y = net.predict(xs)?;
    let gv = fam.ineq_residuals_batch(xs, &y)?;
    let hv = fam.eq_residuals_batch(xs, &y)?;
    let b = T::cast(xs.rows() as f64);
    let col_mean = |t: &Tensor<T>, f: fn(T) -> T| {
        (0..t.cols())
            .map(|j| (0..t.rows()).map(|i| f(t.row(i)[j])).sum::<T>() / b)
            .collect::<Vec<T>>()
    };
    Ok((col_mean(&gv, |v| v.max(T::zero())), col_mean(&hv, |v| v.abs())))
}

/// Trains one baseline network. Supervised schemes need optimal decisions
/// for the training and validation sets (`[N, n]`, rows aligned with the
/// datasets).
pub fn baseline_train<T: Scalar>(
    train: &Dataset<T>,
    valid: &Dataset<T>,
    targets_train: Option<&Tensor<T>>,
    targets_valid: Option<&Tensor<T>>,
    cfg: &BaselineConfig,
    seed: u64,
    sink: &mut dyn FnMut(&TraceRow),
) -> Result<TrainedModel<T>> {
    cfg.validate()?;
    let fam = train.family();
    let scheme = cfg.scheme;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Config("training and validation sets must be non-empty".into()));
    }
    if scheme.is_supervised() {
        if cfg.budget == Budget::Iterations {
            return Err(Error::Config(format!(
                "supervised scheme {} cannot sample parameters on the fly",
                scheme.name()
            )));
        }
        for (t, d) in [(targets_train, train), (targets_valid, valid)] {
            let t = t.ok_or_else(|| {
                Error::Data(format!(
                    "scheme {} needs ground-truth targets; run `generate` first",
                    scheme.name()
                ))
            })?;
            if t.shape() != [d.len(), fam.num_vars()] {
                return Err(Error::dim(
                    "baseline_targets",
                    format!("[{}, {}]", d.len(), fam.num_vars()),
                    format!("{:?}", t.shape()),
                ));
            }
        }
    }
    let mut net = Mlp::new(
        &network_widths(fam.num_params(), &cfg.hidden, fam.num_vars()),
        primal_head(fam.kind()),
        false,
        derive_seed(seed, 1),
    )?;
    let mut adam = Adam::new(net.parameters(), T::cast(cfg.lr));
    let mut rng = rng_for(seed, 3);
    let mut w = Weights {
        g: vec![T::cast(cfg.penalty.rho_g); fam.num_ineq()],
        h: vec![T::cast(cfg.penalty.rho_h); fam.num_eq()],
    };
    let gamma = T::cast(cfg.penalty.ld_step);
    let mut trace = Vec::new();
    let mut losses = Vec::new();
    for u in 1..=cfg.iters {
        for batch in unit_batches(cfg.budget, train, fam, cfg.batch_size, &mut rng)? {
            let (xs, t) = match batch {
                Batch::Rows(rows) => (
                    train.xs().select_rows(&rows),
                    targets_train.map(|t| t.select_rows(&rows)),
                ),
                Batch::Fresh(xs) => (xs, None),
            };
            let l = train_step(&mut net, &mut adam, &xs, |g, y| {
                scheme_loss(g, scheme, fam, &xs, y, t.as_ref(), &w)
            })?;
            losses.push(l);
        }
        if scheme == Scheme::Ld && u % cfg.penalty.ld_period == 0 {
            let (ng, nh) = mean_violations(&net, fam, train.xs())?;
            ld_update(&mut w.g, &ng, gamma)?;
            ld_update(&mut w.h, &nh, gamma)?;
        }
        if u % cfg.valid_every == 0 || u == cfg.iters {
            let y = net.predict(valid.xs())?;
            let vl = eval_loss(&y, |g, yv| {
                scheme_loss(g, scheme, fam, valid.xs(), yv, targets_valid, &w)
            })?;
            let row = TraceRow {
                outer_k: 0,
                inner_step: u,
                scheme: scheme.name().into(),
                train_loss: mean(&losses).to_f64_lossless(),
                valid_loss: vl.to_f64_lossless(),
                v_k: None,
                rho: None,
                lr: cfg.lr,
            };
            losses.clear();
            sink(&row);
            trace.push(row);
        }
    }
    let weights = scheme.penalized().then(|| {
        (
            w.g.iter().map(|v| v.to_f64_lossless()).collect(),
            w.h.iter().map(|v| v.to_f64_lossless()).collect(),
        )
    });
    Ok(TrainedModel {
        scheme,
        kind: fam.kind(),
        primal: net,
        dual: None,
        config: SchemeConfig::Baseline(cfg.clone()),
        trace,
        rho: None,
        weights,
    })
}
