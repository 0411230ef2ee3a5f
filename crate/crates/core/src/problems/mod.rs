//! Parametric problem families: convex QP, non-convex QP and binary least
//! squares (QCQP), with instance sampling, splitting and file formats.

mod bruteforce;
mod dataset;
mod family;
mod sidecar;
mod traits;

pub use bruteforce::{qcqp_bruteforce, BRUTEFORCE_MAX_VARS};
pub use dataset::{Dataset, Split, SplitRatio, DATASET_VERSION};
pub use family::{
    pseudo_inverse, Dims, FamilyData, FamilySpec, Instance, ProblemFamily, ProblemKind, QcqpData, QpData,
};
pub use sidecar::{GroundTruth, Solution};
pub use traits::{ConstrainedProblem, GraphProblem};

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::autodiff::{Graph, Tensor};
    use crate::error::Error;

    fn qp(kind: ProblemKind, n: usize, n_eq: usize, n_ineq: usize, seed: u64) -> ProblemFamily<f64> {
        ProblemFamily::generate(kind, Dims::qp(n, n_eq, n_ineq), seed).unwrap()
    }

    #[test]
    fn identity_a_gives_row_sums_of_g() {
        let g = [0.3, -0.7, 1.5, 0.25];
        let fam = ProblemFamily::<f64>::qp_from_data(
            ProblemKind::ConvexQp,
            0,
            &[0.5, 0.5],
            &[0.0, 0.0],
            &[1.0, 0.0, 0.0, 1.0],
            &g,
            Dims::qp(2, 2, 2),
        )
        .unwrap();
        let FamilyData::Qp(d) = fam.data() else { unreachable!() };
        assert_eq!(d.a_pinv.data(), &[1.0, 0.0, 0.0, 1.0]);
        assert!((d.h[0] - 1.0).abs() < 1e-14);
        assert!((d.h[1] - 1.75).abs() < 1e-14);
    }

    #[test]
    fn pseudo_inverse_satisfies_penrose_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, n) = (4, 7);
        let a: Vec<f64> = (0..m * n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let (p, rank) = pseudo_inverse(m, n, &a);
        assert_eq!(rank, m);
        let a_t = Tensor::matrix(m, n, a).unwrap();
        let p_t = Tensor::matrix(n, m, p).unwrap();
        let apa = a_t.matmul(&p_t).unwrap().matmul(&a_t).unwrap();
        for (x, y) in apa.data().iter().zip(a_t.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn witness_is_feasible_for_sampled_parameters() {
        let fam = Arc::new(qp(ProblemKind::ConvexQp, 30, 10, 15, 11));
        let ds = Dataset::sample(fam.clone(), 1000, 5).unwrap();
        for i in 0..ds.len() {
            let x = ds.x(i);
            let y = fam.feasibility_witness(x).unwrap();
            assert!(fam.ineq_constraints(x, &y).unwrap().iter().all(|&g| g <= 1e-12));
            assert!(fam.eq_constraints(x, &y).unwrap().iter().all(|&h| h.abs() < 1e-10));
        }
    }

    #[test]
    fn headline_dims_generate() {
        let fam = qp(ProblemKind::ConvexQp, 100, 50, 50, 0);
        assert_eq!(
            (fam.num_vars(), fam.num_eq(), fam.num_ineq(), fam.num_params()),
            (100, 50, 50, 50)
        );
        let FamilyData::Qp(d) = fam.data() else { unreachable!() };
        assert!(d.q.iter().all(|&q| (0.0..=1.0).contains(&q)));
    }

    #[test]
    fn invalid_dims_are_rejected() {
        assert!(matches!(
            ProblemFamily::<f64>::generate(ProblemKind::ConvexQp, Dims::qp(3, 4, 1), 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ProblemFamily::<f64>::generate(ProblemKind::Qcqp, Dims::qcqp(5, 3), 0),
            Err(Error::Generation(_))
        ));
    }

    #[test]
    fn qcqp_matrix_has_full_column_rank() {
        let fam = ProblemFamily::<f64>::generate(ProblemKind::Qcqp, Dims::qcqp(12, 18), 4).unwrap();
        let FamilyData::Qcqp(d) = fam.data() else {
            unreachable!()
        };
        assert_eq!(pseudo_inverse(18, 12, d.a.data()).1, 12);
    }

    #[test]
    fn generation_is_pure() {
        for kind in [ProblemKind::ConvexQp, ProblemKind::NonconvexQp] {
            assert_eq!(qp(kind, 8, 3, 4, 9), qp(kind, 8, 3, 4, 9));
            assert_ne!(qp(kind, 8, 3, 4, 9), qp(kind, 8, 3, 4, 10));
        }
        let spec = FamilySpec {
            kind: ProblemKind::Qcqp,
            dims: Dims::qcqp(4, 6),
            seed: 2,
        };
        assert_eq!(spec.generate::<f64>().unwrap(), spec.generate::<f64>().unwrap());
    }

    #[test]
    fn family_spec_round_trips_through_toml() {
        let spec = FamilySpec {
            kind: ProblemKind::NonconvexQp,
            dims: Dims::qp(50, 25, 25),
            seed: 7,
        };
        let text = toml::to_string(&spec).unwrap();
        assert_eq!(toml::from_str::<FamilySpec>(&text).unwrap(), spec);
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let fam = Arc::new(qp(ProblemKind::ConvexQp, 6, 3, 2, 1));
        let a = Dataset::sample(fam.clone(), 200, 42).unwrap();
        let b = Dataset::sample(fam.clone(), 200, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.xs().data().iter().all(|v| (-1.0..=1.0).contains(v)));
        let prefix = Dataset::sample(fam.clone(), 50, 42).unwrap();
        assert_eq!(prefix.xs().data(), &a.xs().data()[..50 * 3]);
        assert!(Dataset::sample(fam, 0, 42).is_err());
    }

    #[test]
    fn ten_one_one_split_of_1200() {
        let fam = Arc::new(qp(ProblemKind::ConvexQp, 4, 2, 2, 1));
        let ds = Dataset::sample(fam, 1200, 1).unwrap();
        let (tr, va, te) = ds.split(SplitRatio::default()).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (1000, 100, 100));
        let mut all: Vec<usize> = tr
            .indices()
            .iter()
            .chain(va.indices())
            .chain(te.indices())
            .copied()
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 1200);
        assert_eq!(te.split_tag(), Split::Test);
        assert_eq!(te.x(0), ds.x(1100));
    }

    #[test]
    fn objective_examples() {
        let fam = ProblemFamily::<f64>::qp_from_data(
            ProblemKind::ConvexQp,
            0,
            &[2.0],
            &[0.0],
            &[1.0],
            &[],
            Dims::qp(1, 1, 0),
        )
        .unwrap();
        assert_eq!(fam.objective(&[0.0], &[3.0]).unwrap(), 9.0);
        let q = ProblemFamily::<f64>::qcqp_from_data(0, 1, 1, &[1.0]).unwrap();
        assert_eq!(q.objective(&[0.5], &[1.0]).unwrap(), 0.25);
        assert_eq!(q.eq_constraints(&[0.5], &[1.0]).unwrap(), vec![0.0]);
        assert!(q.ineq_constraints(&[0.5], &[1.0]).unwrap().is_empty());
        assert!(matches!(
            fam.objective(&[0.0], &[1.0, 2.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn qcqp_residuals_vanish_on_sign_vectors() {
        let fam = ProblemFamily::<f64>::generate(ProblemKind::Qcqp, Dims::qcqp(6, 9), 1).unwrap();
        let x = vec![0.1; 9];
        for code in 0..64u32 {
            let y: Vec<f64> = (0..6).map(|j| if code >> j & 1 == 1 { 1.0 } else { -1.0 }).collect();
            assert!(fam.eq_constraints(&x, &y).unwrap().iter().all(|&h| h == 0.0));
        }
    }

    fn central_grad(f: impl Fn(&[f64]) -> f64, y: &[f64]) -> Vec<f64> {
        let h = 1e-5;
        (0..y.len())
            .map(|i| {
                let mut p = y.to_vec();
                let mut m = y.to_vec();
                p[i] += h;
                m[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let fams = [
            qp(ProblemKind::ConvexQp, 7, 3, 4, 1),
            qp(ProblemKind::NonconvexQp, 7, 3, 4, 2),
            ProblemFamily::generate(ProblemKind::Qcqp, Dims::qcqp(5, 7), 3).unwrap(),
        ];
        for fam in &fams {
            let x: Vec<f64> = (0..fam.num_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..fam.num_vars()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let inst = fam.instance(&x).unwrap();
            let mut grad = vec![0.0; y.len()];
            inst.objective_grad(&y, &mut grad);
            let fd = central_grad(|v| inst.objective(v), &y);
            for (a, b) in grad.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
            }
            let w_eq: Vec<f64> = (0..fam.num_eq()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut vjp = vec![0.0; y.len()];
            inst.eq_vjp(&y, &w_eq, &mut vjp);
            let fd = central_grad(
                |v| {
                    let mut h = vec![0.0; w_eq.len()];
                    inst.eq_residuals(v, &mut h);
                    h.iter().zip(&w_eq).map(|(a, b)| a * b).sum()
                },
                &y,
            );
            for (a, b) in vjp.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn batched_nodes_agree_with_plain_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for fam in [
            qp(ProblemKind::NonconvexQp, 6, 2, 3, 1),
            ProblemFamily::generate(ProblemKind::Qcqp, Dims::qcqp(4, 6), 3).unwrap(),
        ] {
            let fam = Arc::new(fam);
            let ds = Dataset::sample(fam.clone(), 5, 1).unwrap();
            let ys = Tensor::matrix(
                5,
                fam.num_vars(),
                (0..5 * fam.num_vars()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let f = fam.objective_values_batch(ds.xs(), &ys).unwrap();
            let h = fam.eq_residuals_batch(ds.xs(), &ys).unwrap();
            let g = fam.ineq_residuals_batch(ds.xs(), &ys).unwrap();
            assert_eq!(g.shape(), &[5, fam.num_ineq()]);
            for i in 0..5 {
                assert!((f.data()[i] - fam.objective(ds.x(i), ys.row(i)).unwrap()).abs() < 1e-12);
                let hp = fam.eq_constraints(ds.x(i), ys.row(i)).unwrap();
                for (a, b) in h.row(i).iter().zip(&hp) {
                    assert!((a - b).abs() < 1e-12);
                }
                let gp = fam.ineq_constraints(ds.x(i), ys.row(i)).unwrap();
                for (a, b) in g.row(i).iter().zip(&gp) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn graph_objective_gradient_matches_analytic() {
        let fam = qp(ProblemKind::NonconvexQp, 5, 2, 2, 4);
        let x = [0.3, -0.6];
        let inst = fam.instance(&x).unwrap();
        let y0 = [0.1, -0.4, 0.9, 1.3, -2.0];
        let mut g = Graph::new();
        let y = g.param(Tensor::matrix(1, 5, y0.to_vec()).unwrap());
        let f = inst.objective_node(&mut g, y).unwrap();
        let grads = g.backward(f).unwrap();
        let mut analytic = vec![0.0; 5];
        inst.objective_grad(&y0, &mut analytic);
        for (a, b) in grads.get(y).unwrap().data().iter().zip(&analytic) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bruteforce_single_variable() {
        let fam = ProblemFamily::<f64>::qcqp_from_data(0, 1, 1, &[1.0]).unwrap();
        let x = [0.9];
        let (y, f) = qcqp_bruteforce(&fam.instance(&x).unwrap()).unwrap();
        assert_eq!(y, vec![1.0]);
        assert!((f - 0.01).abs() < 1e-15);
    }

    #[test]
    fn bruteforce_ties_resolve_lexicographically() {
        let fam = ProblemFamily::<f64>::qcqp_from_data(0, 2, 2, &[0.0; 4]).unwrap();
        let x = [0.0, 0.0];
        let (y, f) = qcqp_bruteforce(&fam.instance(&x).unwrap()).unwrap();
        assert_eq!((y, f), (vec![-1.0, -1.0], 0.0));
    }

    #[test]
    fn bruteforce_matches_explicit_candidate_list() {
        let fam = ProblemFamily::<f64>::generate(ProblemKind::Qcqp, Dims::qcqp(2, 3), 17).unwrap();
        let FamilyData::Qcqp(d) = fam.data() else {
            unreachable!()
        };
        let a = d.a.data().to_vec();
        let x = [0.4, -0.8, 0.1];
        let candidates = [[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]];
        let f = |y: &[f64; 2]| -> f64 {
            (0..3)
                .map(|i| (a[2 * i] * y[0] + a[2 * i + 1] * y[1] - x[i]).powi(2))
                .sum()
        };
        let mut best = candidates[0];
        for c in &candidates[1..] {
            if f(c) < f(&best) {
                best = *c;
            }
        }
        let (y, fstar) = qcqp_bruteforce(&fam.instance(&x).unwrap()).unwrap();
        assert_eq!(y, best.to_vec());
        assert!((fstar - f(&best)).abs() < 1e-14);
    }

    #[test]
    fn bruteforce_respects_sign_symmetry() {
        let fam = ProblemFamily::<f64>::generate(ProblemKind::Qcqp, Dims::qcqp(6, 8), 5).unwrap();
        let FamilyData::Qcqp(d) = fam.data() else {
            unreachable!()
        };
        let mut a = d.a.data().to_vec();
        for i in 0..8 {
            a[i * 6 + 2] = -a[i * 6 + 2];
        }
        let flipped = ProblemFamily::<f64>::qcqp_from_data(0, 8, 6, &a).unwrap();
        let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin()).collect();
        let (y1, f1) = qcqp_bruteforce(&fam.instance(&x).unwrap()).unwrap();
        let (y2, f2) = qcqp_bruteforce(&flipped.instance(&x).unwrap()).unwrap();
        assert!((f1 - f2).abs() < 1e-12);
        assert!(
            (flipped
                .objective(&x, &{
                    let mut y = y1.clone();
                    y[2] = -y[2];
                    y
                })
                .unwrap()
                - f2)
                .abs()
                < 1e-12
        );
        let _ = y2;
    }

    #[test]
    fn bruteforce_budget() {
        let fam = ProblemFamily::<f64>::qcqp_from_data(0, 21, 21, &vec![0.0; 21 * 21]).unwrap();
        let x = vec![0.0; 21];
        assert!(matches!(
            qcqp_bruteforce(&fam.instance(&x).unwrap()),
            Err(Error::Budget { n: 21, limit: 20 })
        ));
    }

    #[test]
    fn dataset_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        for fam in [
            qp(ProblemKind::NonconvexQp, 9, 4, 3, 2),
            ProblemFamily::generate(ProblemKind::Qcqp, Dims::qcqp(3, 5), 2).unwrap(),
        ] {
            let ds = Dataset::sample(Arc::new(fam), 24, 3).unwrap();
            let (_, _, te) = ds.split(SplitRatio::default()).unwrap();
            let path = dir.path().join("d.bin");
            te.save(&path).unwrap();
            let back = Dataset::<f64>::load(&path).unwrap();
            assert_eq!(back, te);
        }
    }

    #[test]
    fn malformed_dataset_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let ds = Dataset::sample(Arc::new(qp(ProblemKind::ConvexQp, 5, 2, 2, 1)), 10, 1).unwrap();
        ds.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(Dataset::<f64>::load(&path), Err(Error::Parse { .. })));

        let mut v = bytes.clone();
        v[8..12].copy_from_slice(&9u32.to_le_bytes());
        std::fs::write(&path, &v).unwrap();
        assert!(matches!(
            Dataset::<f64>::load(&path),
            Err(Error::Version { found: 9, .. })
        ));

        let mut v = bytes.clone();
        v[0] = b'X';
        std::fs::write(&path, &v).unwrap();
        assert!(matches!(Dataset::<f64>::load(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn sidecar_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.csv");
        let mut gt = GroundTruth::new();
        gt.insert(
            3,
            Solution {
                objective: -1.0 / 3.0,
                y: vec![0.1, f64::MIN_POSITIVE],
            },
        );
        gt.insert(
            7,
            Solution {
                objective: 2.5e-300,
                y: vec![-1.0, 1.0],
            },
        );
        gt.save(&path).unwrap();
        assert_eq!(GroundTruth::load(&path).unwrap(), gt);
        assert!(matches!(gt.require(4), Err(Error::Data(_))));

        std::fs::write(&path, "index,objective,y0\n0,1.0,2.0\n1,abc,2.0\n").unwrap();
        match GroundTruth::load(&path) {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "line 3"),
            other => panic!("{other:?}"),
        }
    }

    proptest! {
        #[test]
        fn convex_qp_objective_is_midpoint_convex(seed in 0u64..50, a in prop::collection::vec(-3.0f64..3.0, 6), b in prop::collection::vec(-3.0f64..3.0, 6)) {
            let fam = qp(ProblemKind::ConvexQp, 6, 2, 2, seed);
            let x = [0.0, 0.0];
            let mid: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect();
            let f = |y: &[f64]| fam.objective(&x, y).unwrap();
            prop_assert!(f(&mid) <= 0.5 * (f(&a) + f(&b)) + 1e-12);
        }
    }
}
