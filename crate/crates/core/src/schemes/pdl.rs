use rand_chacha::ChaCha8Rng;

use super::common::{eval_loss, network_widths, train_step, unit_batches, Batch};
use super::config::{PdlConfig, Scheme};
use super::losses::{dual_loss_pdl, dual_targets, primal_loss_pdl};
use super::model::{primal_head, read_duals, SchemeConfig, TraceRow, TrainedModel};
use crate::alm::{update_rho, violation};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::{Adam, LrSchedule, Mlp, OutputHead};
use crate::problems::{Dataset, ProblemFamily};
use crate::scalar::Scalar;
use crate::seeding::{derive_seed, rng_for};

/// Primal-dual learning, exposed phase by phase.
///
/// Each outer iteration runs [`PdlTrainer::primal_phase`] with the dual
/// network frozen, measures the violation over the training set, snapshots
/// the dual network, runs [`PdlTrainer::dual_phase`] against targets built
/// from the snapshot and the frozen primal network, and finally updates the
/// penalty coefficient. [`PdlTrainer::run`] does all of that `K` times.
pub struct PdlTrainer<'a, T: Scalar> {
    cfg: PdlConfig,
    fam: &'a ProblemFamily<T>,
    train: &'a Dataset<T>,
    valid: &'a Dataset<T>,
    primal: Mlp<T>,
    dual: Mlp<T>,
    adam_p: Adam<T>,
    adam_d: Adam<T>,
    lr_p: T,
    lr_d: T,
    rho: T,
    v_prev: Option<T>,
    k: usize,
    rng: ChaCha8Rng,
    trace: Vec<TraceRow>,
}

impl<'a, T: Scalar> PdlTrainer<'a, T> {
    pub fn new(
        fam: &'a ProblemFamily<T>,
        train: &'a Dataset<T>,
        valid: &'a Dataset<T>,
        cfg: PdlConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() || valid.is_empty() {
            return Err(Error::Config("PDL needs non-empty training and validation sets".into()));
        }
        let p = fam.num_params();
        let primal = Mlp::new(
            &network_widths(p, &cfg.hidden, fam.num_vars()),
            primal_head(fam.kind()),
            false,
            derive_seed(seed, 1),
        )?;
        let dual_out = fam.num_ineq() + fam.num_eq();
        let dual = Mlp::new(
            &network_widths(p, &cfg.hidden, dual_out),
            OutputHead::Identity,
            true,
            derive_seed(seed, 2),
        )?;
        let lr = T::cast(cfg.lr);
        Ok(Self {
            adam_p: Adam::new(primal.parameters(), lr),
            adam_d: Adam::new(dual.parameters(), lr),
            primal,
            dual,
            lr_p: lr,
            lr_d: lr,
            rho: T::cast(cfg.rho),
            v_prev: None,
            k: 0,
            rng: rng_for(seed, 3),
            trace: Vec::new(),
            cfg,
            fam,
            train,
            valid,
        })
    }

    pub fn primal(&self) -> &Mlp<T> {
        &self.primal
    }

    pub fn dual(&self) -> &Mlp<T> {
        &self.dual
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    pub fn outer_iteration(&self) -> usize {
        self.k
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    /// Multipliers read from the current dual network (clamped `lambda_g`).
    pub fn duals(&self, xs: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        read_duals(&self.dual, self.fam, xs)
    }

    fn units(&self) -> (usize, usize) {
        (self.cfg.inner_iters, self.cfg.valid_every)
    }

    fn push(&mut self, row: TraceRow, sink: &mut dyn FnMut(&TraceRow)) {
        sink(&row);
        self.trace.push(row);
    }

    /// Starts outer iteration `k + 1` and trains the primal network on the
    /// augmented Lagrangian loss with the dual network frozen.
    pub fn primal_phase(&mut self, sink: &mut dyn FnMut(&TraceRow)) -> Result<()> {
        self.k += 1;
        let fam = self.fam;
        let (lg_train, lh_train) = read_duals(&self.dual, fam, self.train.xs())?;
        let (lg_valid, lh_valid) = read_duals(&self.dual, fam, self.valid.xs())?;
        let mut sched = LrSchedule::new(T::cast(self.cfg.lr_decay));
        let (units, every) = self.units();
        let mut losses = Vec::new();
        for u in 1..=units {
            for batch in unit_batches(self.cfg.budget, self.train, fam, self.cfg.batch_size, &mut self.rng)? {
                let (xs, lg, lh) = match batch {
                    Batch::Rows(rows) => (
                        self.train.xs().select_rows(&rows),
                        lg_train.select_rows(&rows),
                        lh_train.select_rows(&rows),
                    ),
                    Batch::Fresh(xs) => {
                        let (lg, lh) = read_duals(&self.dual, fam, &xs)?;
                        (xs, lg, lh)
                    }
                };
                let rho = self.rho;
                self.adam_p.set_lr(self.lr_p);
                let l = train_step(&mut self.primal, &mut self.adam_p, &xs, |g, y| {
                    primal_loss_pdl(g, fam, &xs, y, &lg, &lh, rho)
                })?;
                losses.push(l);
            }
            if u % every == 0 || u == units {
                let y = self.primal.predict(self.valid.xs())?;
                let vx = self.valid.xs();
                let vl = eval_loss(&y, |g, yv| {
                    primal_loss_pdl(g, fam, vx, yv, &lg_valid, &lh_valid, self.rho)
                })?;
                self.lr_p = sched.maybe_decay(vl, self.lr_p)?;
                let row = TraceRow {
                    outer_k: self.k,
                    inner_step: u,
                    scheme: "pdl-primal".into(),
                    train_loss: super::common::mean(&losses).to_f64_lossless(),
                    valid_loss: vl.to_f64_lossless(),
                    v_k: None,
                    rho: Some(self.rho.to_f64_lossless()),
                    lr: self.lr_p.to_f64_lossless(),
                };
                losses.clear();
                self.push(row, sink);
            }
        }
        Ok(())
    }

    /// `v_k = max over the training set of max(|h|_inf, |sigma|_inf)`, with
    /// `sigma` built from the current (pre-update) dual estimates.
    pub fn violation_pass(&self) -> Result<T> {
        let xs = self.train.xs();
        let y = self.primal.predict(xs)?;
        let gv = self.fam.ineq_residuals_batch(xs, &y)?;
        let hv = self.fam.eq_residuals_batch(xs, &y)?;
        let (lg, _) = read_duals(&self.dual, self.fam, xs)?;
        let mut v = T::zero();
        for i in 0..xs.rows() {
            v = v.max(violation(hv.row(i), gv.row(i), lg.row(i), self.rho));
        }
        Ok(v)
    }

    fn targets(&self, snapshot: &Mlp<T>, xs: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.primal.predict(xs)?;
        let gv = self.fam.ineq_residuals_batch(xs, &y)?;
        let hv = self.fam.eq_residuals_batch(xs, &y)?;
        let (lgk, lhk) = read_duals(snapshot, self.fam, xs)?;
        dual_targets(&lgk, &lhk, &gv, &hv, self.rho)
    }

    /// Trains the dual network towards the multiplier update computed from a
    /// snapshot of itself and the frozen primal network.
    pub fn dual_phase(&mut self, v_k: T, sink: &mut dyn FnMut(&TraceRow)) -> Result<()> {
        let snapshot = self.dual.clone();
        let t_train = self.targets(&snapshot, self.train.xs())?;
        let t_valid = self.targets(&snapshot, self.valid.xs())?;
        let norm = self.cfg.dual_norm;
        let mut sched = LrSchedule::new(T::cast(self.cfg.lr_decay));
        let (units, every) = self.units();
        let mut losses = Vec::new();
        for u in 1..=units {
            for batch in unit_batches(
                self.cfg.budget,
                self.train,
                self.fam,
                self.cfg.batch_size,
                &mut self.rng,
            )? {
                let (xs, t) = match batch {
                    Batch::Rows(rows) => (self.train.xs().select_rows(&rows), t_train.select_rows(&rows)),
                    Batch::Fresh(xs) => {
                        let t = self.targets(&snapshot, &xs)?;
                        (xs, t)
                    }
                };
                self.adam_d.set_lr(self.lr_d);
                let l = train_step(&mut self.dual, &mut self.adam_d, &xs, |g, lam| {
                    dual_loss_pdl(g, lam, &t, norm)
                })?;
                losses.push(l);
            }
            if u % every == 0 || u == units {
                let out = self.dual.predict(self.valid.xs())?;
                let vl = eval_loss(&out, |g, lam| dual_loss_pdl(g, lam, &t_valid, norm))?;
                self.lr_d = sched.maybe_decay(vl, self.lr_d)?;
                let row = TraceRow {
                    outer_k: self.k,
                    inner_step: u,
                    scheme: "pdl-dual".into(),
                    train_loss: super::common::mean(&losses).to_f64_lossless(),
                    valid_loss: vl.to_f64_lossless(),
                    v_k: Some(v_k.to_f64_lossless()),
                    rho: Some(self.rho.to_f64_lossless()),
                    lr: self.lr_d.to_f64_lossless(),
                };
                losses.clear();
                self.push(row, sink);
            }
        }
        Ok(())
    }

    /// Penalty update closing the outer iteration.
    pub fn finish_outer(&mut self, v_k: T) {
        let c = &self.cfg;
        self.rho = update_rho(
            self.rho,
            v_k,
            self.v_prev,
            T::cast(c.alpha),
            T::cast(c.tau),
            T::cast(c.rho_max),
        );
        self.v_prev = Some(v_k);
    }

    pub fn outer_step(&mut self, sink: &mut dyn FnMut(&TraceRow)) -> Result<T> {
        self.primal_phase(sink)?;
        let v = self.violation_pass()?;
        self.dual_phase(v, sink)?;
        self.finish_outer(v);
        Ok(v)
    }

    pub fn run(mut self, sink: &mut dyn FnMut(&TraceRow)) -> Result<TrainedModel<T>> {
        for _ in 0..self.cfg.outer_iters {
            self.outer_step(sink)?;
        }
        Ok(self.into_model())
    }

    pub fn into_model(self) -> TrainedModel<T> {
        TrainedModel {
            scheme: Scheme::Pdl,
            kind: self.fam.kind(),
            primal: self.primal,
            dual: Some(self.dual),
            rho: Some(self.rho.to_f64_lossless()),
            config: SchemeConfig::Pdl(self.cfg),
            trace: self.trace,
            weights: None,
        }
    }
}

/// Trains primal and dual networks with PDL for `outer_iters` outer iterations.
pub fn pdl_train<T: Scalar>(
    train: &Dataset<T>,
    valid: &Dataset<T>,
    cfg: &PdlConfig,
    seed: u64,
    sink: &mut dyn FnMut(&TraceRow),
) -> Result<TrainedModel<T>> {
    PdlTrainer::new(train.family(), train, valid, cfg.clone(), seed)?.run(sink)
}
