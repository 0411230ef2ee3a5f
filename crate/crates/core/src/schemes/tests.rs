use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{Graph, Tensor};
use crate::problems::{Dataset, Dims, ProblemFamily, ProblemKind, SplitRatio};

/// One variable with `f = y^2`, `g = y - 1`, `h = y - x`.
fn toy() -> ProblemFamily<f64> {
    ProblemFamily::qp_from_data(
        ProblemKind::ConvexQp,
        0,
        &[2.0],
        &[0.0],
        &[1.0],
        &[1.0],
        Dims::qp(1, 1, 1),
    )
    .unwrap()
}

fn scalar(v: f64) -> Tensor<f64> {
    Tensor::matrix(1, 1, vec![v]).unwrap()
}

fn empty_row() -> Tensor<f64> {
    Tensor::matrix(1, 0, vec![]).unwrap()
}

fn value_at(
    y: f64,
    loss: impl FnOnce(&mut Graph<f64>, crate::autodiff::Var) -> crate::Result<crate::autodiff::Var>,
) -> f64 {
    let mut g = Graph::new();
    let yv = g.constant(scalar(y));
    let l = loss(&mut g, yv).unwrap();
    g.value(l).item().unwrap()
}

fn small_pdl() -> PdlConfig {
    PdlConfig {
        outer_iters: 3,
        inner_iters: 2,
        batch_size: 16,
        hidden: vec![12],
        lr: 1e-3,
        ..PdlConfig::qp_default()
    }
}

fn small_split(seed: u64) -> (Dataset<f64>, Dataset<f64>, Dataset<f64>) {
    let fam = Arc::new(ProblemFamily::generate(ProblemKind::ConvexQp, Dims::qp(6, 2, 3), seed).unwrap());
    Dataset::sample(fam, 60, seed)
        .unwrap()
        .split(SplitRatio::default())
        .unwrap()
}

#[test]
fn toy_primal_loss_is_18() {
    let fam = toy();
    let v = value_at(3.0, |g, y| {
        primal_loss_pdl(g, &fam, &scalar(2.0), y, &scalar(1.0), &scalar(2.0), 2.0)
    });
    assert_eq!(v, 18.0);
}

#[test]
fn primal_loss_rejects_negative_inequality_duals() {
    let fam = toy();
    let mut g = Graph::new();
    let y = g.constant(scalar(0.0));
    let r = primal_loss_pdl(&mut g, &fam, &scalar(2.0), y, &scalar(-0.1), &scalar(0.0), 1.0);
    assert!(matches!(r, Err(crate::Error::Contract(_))));
}

#[test]
fn feasible_point_with_zero_duals_gives_mean_objective() {
    let fam = toy();
    // y = 1 satisfies g = 0 and h = 0 when x = 1.
    let v = value_at(1.0, |g, y| {
        primal_loss_pdl(g, &fam, &scalar(1.0), y, &scalar(0.0), &scalar(0.0), 7.0)
    });
    assert_eq!(v, 1.0);
}

#[test]
fn zero_duals_reduce_to_squared_penalty() {
    let fam = ProblemFamily::<f64>::generate(ProblemKind::NonconvexQp, Dims::qp(10, 4, 5), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let b = 7;
        let xs = Tensor::matrix(b, 4, (0..b * 4).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let ys = Tensor::matrix(b, 10, (0..b * 10).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        let rho = rng.gen_range(0.1..50.0);
        let mut g = Graph::new();
        let y = g.constant(ys);
        let a = primal_loss_pdl(
            &mut g,
            &fam,
            &xs,
            y,
            &Tensor::zeros(&[b, 5]),
            &Tensor::zeros(&[b, 4]),
            rho,
        )
        .unwrap();
        let s = squared_penalty_loss(&mut g, &fam, &xs, y, rho).unwrap();
        let (a, s) = (g.value(a).item().unwrap(), g.value(s).item().unwrap());
        assert!((a - s).abs() <= 1e-12, "{a} vs {s}");
    }
}

#[test]
fn dual_loss_examples() {
    // lambda_hk = 0.2, h = 0.1, rho = 2: target 0.4
    let t = dual_targets(&empty_row(), &scalar(0.2), &empty_row(), &scalar(0.1), 2.0).unwrap();
    assert!((t.data()[0] - 0.4).abs() < 1e-15);
    let mut g = Graph::new();
    let lam = g.constant(scalar(0.0));
    let l = dual_loss_pdl(&mut g, lam, &t, Norm::L1).unwrap();
    assert!((g.value(l).item().unwrap() - 0.4).abs() < 1e-15);

    // lambda_gk = 0, g = -1 clamps to a zero target
    let t = dual_targets(&scalar(0.0), &empty_row(), &scalar(-1.0), &empty_row(), 1.0).unwrap();
    assert_eq!(t.data(), &[0.0]);
    let mut g = Graph::new();
    let lam = g.constant(scalar(-0.3));
    let l = dual_loss_pdl(&mut g, lam, &t, Norm::L1).unwrap();
    assert!((g.value(l).item().unwrap() - 0.3).abs() < 1e-15);

    let mut g = Graph::new();
    let lam = g.constant(t.clone());
    let l = dual_loss_pdl(&mut g, lam, &t, Norm::L2Squared).unwrap();
    assert_eq!(g.value(l).item().unwrap(), 0.0);
}

#[test]
fn naive_losses() {
    let mut g = Graph::new();
    let y = g.constant(Tensor::matrix(1, 2, vec![3.0, -4.0]).unwrap());
    let zero = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
    let mae = naive_supervised_loss(&mut g, y, &zero, Norm::L1).unwrap();
    let mse = naive_supervised_loss(&mut g, y, &zero, Norm::L2Squared).unwrap();
    assert_eq!(g.value(mae).item().unwrap(), 3.5);
    assert_eq!(g.value(mse).item().unwrap(), 12.5);
}

#[test]
fn supervised_penalty_is_4_5() {
    let fam = toy();
    // y = 1.5, x = 1.7: g = 0.5, h = -0.2; |y - 0.5| = 1
    let v = value_at(1.5, |g, y| {
        supervised_penalty_loss(g, &fam, &scalar(1.7), y, &scalar(0.5), Norm::L1, &[5.0], &[5.0])
    });
    assert!((v - 4.5).abs() < 1e-12, "{v}");
}

#[test]
fn ssl_penalty_is_52() {
    // f = y, g = 0.5 y - 0.5; at y = 2: f = 2, g = 0.5
    let fam = ProblemFamily::qp_from_data(
        ProblemKind::ConvexQp,
        0,
        &[0.0],
        &[1.0],
        &[1.0],
        &[0.5],
        Dims::qp(1, 1, 1),
    )
    .unwrap();
    let v = value_at(2.0, |g, y| ssl_penalty_loss(g, &fam, &scalar(0.3), y, &[100.0], &[0.0]));
    assert_eq!(v, 52.0);
}

#[test]
fn ld_step_arithmetic() {
    let mut w = vec![1.0f64, 3.0];
    ld_update(&mut w, &[2.0, 0.0], 1e-3).unwrap();
    assert!((w[0] - 1.002).abs() < 1e-15);
    assert_eq!(w[1], 3.0);
}

#[test]
fn sign_rounding_ties_to_plus_one() {
    assert_eq!(round_to_sign(0.0), 1.0);
    assert_eq!(round_to_sign(-0.0), 1.0);
    assert_eq!(round_to_sign(-1e-9), -1.0);
}

#[test]
fn phases_freeze_the_other_network() {
    let (train, valid, _) = small_split(4);
    let mut t = PdlTrainer::new(train.family(), &train, &valid, small_pdl(), 11).unwrap();
    let mut sink = |_: &TraceRow| {};
    let dual_before = t.dual().flat_parameters();
    let primal_before = t.primal().flat_parameters();
    t.primal_phase(&mut sink).unwrap();
    assert_eq!(t.dual().flat_parameters(), dual_before);
    assert_ne!(t.primal().flat_parameters(), primal_before);
    let primal_mid = t.primal().flat_parameters();
    let v = t.violation_pass().unwrap();
    t.dual_phase(v, &mut sink).unwrap();
    assert_eq!(t.primal().flat_parameters(), primal_mid);
    assert_ne!(t.dual().flat_parameters(), dual_before);
}

#[test]
fn first_primal_phase_is_squared_penalty_training() {
    use super::common::{network_widths, train_step, unit_batches, Batch};
    use crate::nn::{Adam, Mlp, OutputHead};
    use crate::seeding::{derive_seed, rng_for};

    let (train, valid, _) = small_split(5);
    let cfg = small_pdl();
    let seed = 21;
    let mut t = PdlTrainer::new(train.family(), &train, &valid, cfg.clone(), seed).unwrap();
    t.primal_phase(&mut |_| {}).unwrap();

    let fam = train.family();
    let mut net = Mlp::new(
        &network_widths(fam.num_params(), &cfg.hidden, fam.num_vars()),
        OutputHead::Identity,
        false,
        derive_seed(seed, 1),
    )
    .unwrap();
    let mut adam = Adam::new(net.parameters(), cfg.lr);
    let mut rng = rng_for(seed, 3);
    for _ in 0..cfg.inner_iters {
        for batch in unit_batches(cfg.budget, &train, fam, cfg.batch_size, &mut rng).unwrap() {
            let Batch::Rows(rows) = batch else { unreachable!() };
            let xs = train.xs().select_rows(&rows);
            train_step(&mut net, &mut adam, &xs, |g, y| {
                squared_penalty_loss(g, fam, &xs, y, cfg.rho)
            })
            .unwrap();
        }
    }
    let (a, b) = (t.primal().flat_parameters(), net.flat_parameters());
    let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-12, "{diff}");
}

#[test]
fn rho_is_monotone_and_capped() {
    let (train, valid, _) = small_split(6);
    let cfg = PdlConfig {
        outer_iters: 6,
        rho_max: 40.0,
        ..small_pdl()
    };
    let mut t = PdlTrainer::new(train.family(), &train, &valid, cfg, 3).unwrap();
    let mut rhos = vec![t.rho()];
    for _ in 0..6 {
        t.outer_step(&mut |_| {}).unwrap();
        rhos.push(t.rho());
    }
    assert!(rhos.windows(2).all(|w| w[1] >= w[0]), "{rhos:?}");
    assert!(rhos.iter().all(|&r| r <= 40.0));
    assert_eq!(t.outer_iteration(), 6);
}

#[test]
fn pdl_trace_and_duals() {
    let (train, valid, test) = small_split(7);
    let mut rows = 0;
    let model = pdl_train(&train, &valid, &small_pdl(), 1, &mut |_| rows += 1).unwrap();
    assert_eq!(rows, model.trace.len());
    // one validation row per inner epoch per phase
    assert_eq!(model.trace.len(), 3 * 2 * 2);
    assert!(model
        .trace
        .iter()
        .filter(|r| r.scheme == "pdl-dual")
        .all(|r| r.v_k.is_some()));
    let (lg, lh) = model.duals(train.family(), test.xs()).unwrap();
    assert_eq!(lg.shape(), &[test.len(), 3]);
    assert_eq!(lh.shape(), &[test.len(), 2]);
    assert!(lg.data().iter().all(|&v| v >= 0.0));
}

#[test]
fn pdl_is_deterministic_and_round_trips() {
    let (train, valid, test) = small_split(8);
    let a = pdl_train(&train, &valid, &small_pdl(), 5, &mut |_| {}).unwrap();
    let b = pdl_train(&train, &valid, &small_pdl(), 5, &mut |_| {}).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    a.save(dir.path()).unwrap();
    let back = TrainedModel::<f64>::load(dir.path()).unwrap();
    assert_eq!(back.primal, a.primal);
    assert_eq!(back.dual, a.dual);
    assert_eq!(back.config, a.config);
    assert_eq!(back.predict(test.xs()).unwrap(), a.predict(test.xs()).unwrap());
    assert!(std::fs::read_to_string(dir.path().join("trace.csv"))
        .unwrap()
        .starts_with("outer_k,inner_step,scheme"));
}

fn small_baseline(scheme: Scheme) -> BaselineConfig {
    BaselineConfig {
        iters: 4,
        batch_size: 16,
        hidden: vec![12],
        lr: 1e-3,
        penalty: PenaltyConfig {
            ld_period: 2,
            ..BaselineConfig::default_for(scheme, ProblemKind::ConvexQp)
                .unwrap()
                .penalty
        },
        ..BaselineConfig::default_for(scheme, ProblemKind::ConvexQp).unwrap()
    }
}

fn fake_targets(d: &Dataset<f64>) -> Tensor<f64> {
    let n = d.family().num_vars();
    Tensor::matrix(d.len(), n, (0..d.len() * n).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap()
}

#[test]
fn supervised_baselines_need_targets() {
    let (train, valid, _) = small_split(9);
    let r = baseline_train(
        &train,
        &valid,
        None,
        None,
        &small_baseline(Scheme::NaiveMae),
        0,
        &mut |_| {},
    );
    assert!(matches!(r, Err(crate::Error::Data(_))));
    assert!(baseline_train(
        &train,
        &valid,
        None,
        None,
        &small_baseline(Scheme::PenaltySsl),
        0,
        &mut |_| {}
    )
    .is_ok());
}

#[test]
fn ld_with_zero_step_matches_static_penalty() {
    let (train, valid, _) = small_split(10);
    let (tt, tv) = (fake_targets(&train), fake_targets(&valid));
    let mut ld = small_baseline(Scheme::Ld);
    ld.penalty.ld_step = 0.0;
    let mut pen = small_baseline(Scheme::MaePenalty);
    pen.penalty.rho_g = ld.penalty.rho_g;
    pen.penalty.rho_h = ld.penalty.rho_h;
    let a = baseline_train(&train, &valid, Some(&tt), Some(&tv), &ld, 2, &mut |_| {}).unwrap();
    let b = baseline_train(&train, &valid, Some(&tt), Some(&tv), &pen, 2, &mut |_| {}).unwrap();
    assert_eq!(a.primal, b.primal);
}

#[test]
fn ld_weights_grow_and_baselines_are_deterministic() {
    let (train, valid, _) = small_split(11);
    let (tt, tv) = (fake_targets(&train), fake_targets(&valid));
    let cfg = small_baseline(Scheme::Ld);
    let a = baseline_train(&train, &valid, Some(&tt), Some(&tv), &cfg, 3, &mut |_| {}).unwrap();
    let b = baseline_train(&train, &valid, Some(&tt), Some(&tv), &cfg, 3, &mut |_| {}).unwrap();
    assert_eq!(a, b);
    let (wg, wh) = a.weights.clone().unwrap();
    assert!(wg.iter().chain(&wh).all(|&w| w >= 5.0));
    assert!(wg.iter().chain(&wh).any(|&w| w > 5.0));
    assert!(a.dual.is_none());
}

#[test]
fn qcqp_decisions_are_signs() {
    let fam = Arc::new(ProblemFamily::generate(ProblemKind::Qcqp, Dims::qcqp(4, 6), 1).unwrap());
    let (train, valid, test) = Dataset::sample(fam, 36, 2)
        .unwrap()
        .split(SplitRatio::default())
        .unwrap();
    let cfg = BaselineConfig {
        iters: 3,
        valid_every: 1,
        batch_size: 8,
        hidden: vec![8],
        ..BaselineConfig::default_for(Scheme::PenaltySsl, ProblemKind::Qcqp).unwrap()
    };
    let m = baseline_train(&train, &valid, None, None, &cfg, 0, &mut |_| {}).unwrap();
    let raw = m.predict(test.xs()).unwrap();
    assert!(raw.data().iter().all(|&v| (-1.0..=1.0).contains(&v)));
    assert!(m.decisions(test.xs()).unwrap().data().iter().all(|&v| v * v == 1.0));
}

#[test]
fn supervised_schemes_reject_sampled_budgets() {
    let (train, valid, _) = small_split(12);
    let cfg = BaselineConfig {
        budget: Budget::Iterations,
        ..small_baseline(Scheme::NaiveMse)
    };
    let t = fake_targets(&train);
    let r = baseline_train(
        &train,
        &valid,
        Some(&t),
        Some(&fake_targets(&valid)),
        &cfg,
        0,
        &mut |_| {},
    );
    assert!(matches!(r, Err(crate::Error::Config(_))));
}

#[test]
fn configs_round_trip_through_toml() {
    for kind in [ProblemKind::ConvexQp, ProblemKind::Qcqp] {
        let c = SchemeConfig::Pdl(PdlConfig::default_for(kind));
        assert_eq!(
            toml::from_str::<SchemeConfig>(&toml::to_string(&c).unwrap()).unwrap(),
            c
        );
        for s in Scheme::ALL.into_iter().skip(1) {
            let c = SchemeConfig::Baseline(BaselineConfig::default_for(s, kind).unwrap());
            assert_eq!(
                toml::from_str::<SchemeConfig>(&toml::to_string(&c).unwrap()).unwrap(),
                c
            );
        }
    }
    let qp = PdlConfig::qp_default();
    assert_eq!(
        (qp.outer_iters, qp.inner_iters, qp.batch_size, qp.lr, qp.rho_max),
        (10, 500, 200, 1e-4, 5000.0)
    );
    assert_eq!(
        BaselineConfig::default_for(Scheme::MaePenalty, ProblemKind::ConvexQp)
            .unwrap()
            .penalty
            .rho_g,
        5.0
    );
}

proptest! {
    #[test]
    fn dual_targets_are_nonnegative(lg in proptest::collection::vec(0.0f64..10.0, 4), gv in proptest::collection::vec(-10.0f64..10.0, 4), rho in 0.01f64..100.0) {
        let lg = Tensor::matrix(2, 2, lg).unwrap();
        let gv = Tensor::matrix(2, 2, gv).unwrap();
        let z = Tensor::matrix(2, 0, vec![]).unwrap();
        let t = dual_targets(&lg, &z, &gv, &z, rho).unwrap();
        prop_assert!(t.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn ssl_loss_is_monotone_in_weights(y in -3.0f64..3.0, w1 in 0.0f64..50.0, dw in 0.0f64..50.0) {
        let fam = toy();
        let a = value_at(y, |g, yv| ssl_penalty_loss(g, &fam, &scalar(0.4), yv, &[w1], &[w1]));
        let b = value_at(y, |g, yv| ssl_penalty_loss(g, &fam, &scalar(0.4), yv, &[w1 + dw], &[w1 + dw]));
        prop_assert!(b >= a);
    }

    #[test]
    fn naive_loss_is_permutation_invariant(v in proptest::collection::vec(-5.0f64..5.0, 6)) {
        let y = Tensor::matrix(3, 2, v.clone()).unwrap();
        let rows = [2usize, 0, 1];
        let t = Tensor::matrix(3, 2, vec![0.5; 6]).unwrap();
        let a = value_at_tensor(&y, &t);
        let b = value_at_tensor(&y.select_rows(&rows), &t);
        prop_assert!((a - b).abs() < 1e-12);
    }
}

fn value_at_tensor(y: &Tensor<f64>, t: &Tensor<f64>) -> f64 {
    let mut g = Graph::new();
    let yv = g.constant(y.clone());
    let l = naive_supervised_loss(&mut g, yv, t, Norm::L1).unwrap();
    g.value(l).item().unwrap()
}
