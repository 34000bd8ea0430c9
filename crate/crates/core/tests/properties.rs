use ctecs::bits;
use ctecs::circuit::{random_family_instance, InstanceParams};
use ctecs::ctstate::ct_state_of;
use ctecs::ecs::{ecs_for, EcsLimits};
use ctecs::fourier::{build_low_degree_table, noise_operator_apply};
use ctecs::oracle::{
    apply_depolarizing_rates, dense_unitary, flip_convolution, fourier_attenuation, fourier_transform, inverse_fourier,
    l1_distance, matrix_from_columns, max_abs_diff, max_abs_diff_up_to_phase, model_b_factorization_check,
    noisy_input_distribution_iqp, output_distribution, z_string_matrix, DEFAULT_DENSE_CAP,
};
use ctecs::sampler::enumerate_alg_distribution;
use ctecs::seed::StreamRng;
use ctecs::{Circuit, ColumnOracle, CoefficientSource, CtState, DistVector, DyadicAngle, Family, FourierTable, Gate};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

const CAP: usize = DEFAULT_DENSE_CAP;

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![
        Just(Family::Iqp),
        Just(Family::CliffordMagic),
        Just(Family::ConjugatedClifford),
        Just(Family::ConstantDepth)
    ]
}

fn instance(family: Family, n: usize, seed: u64) -> ctecs::CtEcsDecomposition {
    let mut rng = StreamRng::seed_from_u64(seed);
    random_family_instance(family, n, &InstanceParams::default(), &mut rng).unwrap()
}

fn random_dist(n: usize, seed: u64) -> DistVector {
    let mut rng = StreamRng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..1 << n).map(|_| rng.gen::<f64>().powi(3)).collect();
    let total: f64 = raw.iter().sum();
    DistVector::new(n, raw.iter().map(|v| v / total).collect()).unwrap()
}

fn rates(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = StreamRng::seed_from_u64(seed ^ 0x5eed);
    (0..n).map(|_| rng.gen_range(0.01..0.99)).collect()
}

fn gate_kind_samples() -> Vec<Gate> {
    let a = |s, t| DyadicAngle::new(s, t).unwrap();
    vec![
        Gate::h(0),
        Gate::x(0),
        Gate::y(0),
        Gate::z(0),
        Gate::s(0),
        Gate::t(0),
        Gate::rx(a(1, 3), 0),
        Gate::rz(a(-1, 4), 0),
        Gate::cz(0, 1),
        Gate::ccz(0, 1, 2),
        Gate::ccz(2, 0, 1),
    ]
}

#[test]
fn native_decompositions_match_up_to_phase() {
    for g in gate_kind_samples() {
        let original = dense_unitary(&Circuit::new(3, vec![g.clone()]).unwrap()).unwrap();
        let native = Circuit::new(3, g.to_native()).unwrap();
        assert!(native.gates().iter().all(|h| matches!(
            h.kind(),
            ctecs::GateKind::Rx(_) | ctecs::GateKind::Rz(_) | ctecs::GateKind::Cz
        )));
        let d = max_abs_diff_up_to_phase(&dense_unitary(&native).unwrap(), &original);
        assert!(d < 1e-12, "{g}: {d}");
    }
}

#[test]
fn s_and_t_are_exact_rotations() {
    let s = dense_unitary(&Circuit::new(1, vec![Gate::s(0)]).unwrap()).unwrap();
    let rz2 = dense_unitary(&Circuit::new(1, vec![Gate::rz(DyadicAngle::new(1, 2).unwrap(), 0)]).unwrap()).unwrap();
    assert!(max_abs_diff(&s, &rz2) < 1e-15);
    let t = dense_unitary(&Circuit::new(1, vec![Gate::t(0)]).unwrap()).unwrap();
    let rz3 = dense_unitary(&Circuit::new(1, vec![Gate::rz(DyadicAngle::new(1, 3).unwrap(), 0)]).unwrap()).unwrap();
    assert!(max_abs_diff(&t, &rz3) < 1e-15);
}

#[test]
fn composed_blocks_match_defining_circuit() {
    for family in Family::ALL {
        for seed in 0..50u64 {
            let n = 2 + (seed as usize % 7);
            let d = instance(family, n, seed);
            let a = dense_unitary(&d.composed()).unwrap();
            let b = dense_unitary(&d.defining_circuit()).unwrap();
            assert!(max_abs_diff(&a, &b) < 1e-9, "{family} n={n} seed={seed}");
        }
    }
}

#[test]
fn iqp_ccz_conjugates_to_x() {
    let d = ctecs::circuit::build_iqp(3, vec![Gate::ccz(0, 1, 2)]).unwrap();
    let v = dense_unitary(d.v_block()).unwrap();
    for j in 0..3 {
        let b = bits::qubit_bit(3, j);
        let conj = v.adjoint() * z_string_matrix(3, b) * &v;
        let x = ctecs::oracle::pauli_string_matrix(3, 0, b, 0);
        assert!(max_abs_diff(&conj, &x) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn depth_is_bounded_and_monotone(seed in any::<u64>(), n in 1usize..8, extra in 0usize..6) {
        let mut rng = StreamRng::seed_from_u64(seed);
        let mut c = Circuit::empty(n).unwrap();
        let mut last = 0;
        for _ in 0..10 + extra {
            let q = rng.gen_range(0..n);
            let g = if n > 1 && rng.gen_bool(0.4) {
                let r = (q + rng.gen_range(1..n)) % n;
                Gate::cz(q, r)
            } else {
                Gate::h(q)
            };
            c.push(g).unwrap();
            let d = c.depth();
            prop_assert!(d >= 1 && d <= c.size());
            prop_assert!(d >= last);
            last = d;
        }
    }

    #[test]
    fn ct_states_are_normalized_with_unit_phases(family in family(), n in 1usize..9, seed in any::<u64>()) {
        let d = instance(family, n, seed);
        let s = ct_state_of(d.u_block()).unwrap();
        let mut total = 0.0;
        for x in 0..1u64 << n {
            let a = s.amplitude(x);
            total += a.norm_sqr();
            let base = s.base().amplitude(x);
            if base.norm() > 1e-300 {
                prop_assert!(((a / base).norm() - 1.0).abs() < 1e-12);
            }
            prop_assert!((a.norm_sqr() - base.norm_sqr()).abs() < 1e-12);
        }
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ecs_columns_match_dense(family in family(), n in 1usize..7, seed in any::<u64>(), pick in any::<u64>()) {
        let d = instance(family, n, seed);
        let masks: Vec<u64> = bits::masks_up_to(n, 3).into_iter().filter(|&s| s != 0).collect();
        let s = masks[(pick % masks.len() as u64) as usize];
        let op = ecs_for(&d, s, &EcsLimits::default()).unwrap();
        let v = dense_unitary(d.v_block()).unwrap();
        let want = v.adjoint() * z_string_matrix(n, s) * &v;
        let got = matrix_from_columns(&op).unwrap();
        prop_assert!(max_abs_diff(&got, &want) < 1e-9);
        for x in 0..1u64 << n {
            let col = op.columns(x);
            prop_assert!(col.len() <= op.sparsity_bound());
            let mut twice = vec![ctecs::Complex64::new(0.0, 0.0); 1 << n];
            for &(b, g) in &col {
                prop_assert!(b.norm() > 0.0);
                for (c, h) in op.columns(g) {
                    twice[h as usize] += b * c;
                }
                let back: ctecs::Complex64 = op.columns(g).iter().filter(|e| e.1 == x).map(|e| e.0).sum();
                prop_assert!((back - b.conj()).norm() < 1e-9);
            }
            for (y, v) in twice.iter().enumerate() {
                let want = if y as u64 == x { 1.0 } else { 0.0 };
                prop_assert!((v - want).norm() < 1e-9);
            }
        }
        if let ctecs::EcsOperation::Product(p) = &op {
            let bound: usize = p.factors().iter().map(|f| f.sparsity_bound()).product();
            prop_assert!(op.sparsity_bound() <= bound);
        }
    }

    #[test]
    fn transform_round_trips(n in 1usize..10, seed in any::<u64>()) {
        let mut rng = StreamRng::seed_from_u64(seed);
        let f: Vec<f64> = (0..1 << n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let back = inverse_fourier(&fourier_transform(&f));
        prop_assert!(f.iter().zip(&back).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn noise_routes_agree(n in 1usize..9, seed in any::<u64>()) {
        let p = random_dist(n, seed);
        let r = rates(n, seed);
        let a = flip_convolution(p.probs(), &r);
        let b = fourier_attenuation(p.probs(), &r);
        prop_assert!(l1_distance(&a, &b) < 1e-9);
    }

    #[test]
    fn lemma9_factorization(n in 1usize..9, seed in any::<u64>()) {
        let p = random_dist(n, seed);
        let (lhs, rhs) = model_b_factorization_check(&p, &rates(n, seed)).unwrap();
        prop_assert!(l1_distance(lhs.probs(), rhs.probs()) < 1e-9);
    }

    #[test]
    fn noise_operators_contract_and_commute(n in 2usize..8, seed in any::<u64>()) {
        let mut rng = StreamRng::seed_from_u64(seed);
        let f: Vec<f64> = (0..1 << n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (j, k) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let (dj, dk) = (rng.gen::<f64>(), rng.gen::<f64>());
        let tf = noise_operator_apply(n, j, dj, &f);
        let l1 = |v: &[f64]| v.iter().map(|x| x.abs()).sum::<f64>();
        prop_assert!(l1(&tf) <= l1(&f) + 1e-12);
        let ab = noise_operator_apply(n, k, dk, &tf);
        let ba = noise_operator_apply(n, j, dj, &noise_operator_apply(n, k, dk, &f));
        prop_assert!(ab.iter().zip(&ba).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn iqp_input_noise_equals_output_noise(n in 1usize..9, seed in any::<u64>(), uniform in any::<bool>()) {
        let d = instance(Family::Iqp, n, seed);
        let eps = if uniform { vec![0.3; n] } else { rates(n, seed) };
        let p = output_distribution(&d.defining_circuit(), CAP).unwrap();
        let out = apply_depolarizing_rates(&p, &eps).unwrap();
        let inp = noisy_input_distribution_iqp(&d, &eps, CAP).unwrap();
        prop_assert!(l1_distance(out.probs(), inp.probs()) < 1e-10);
    }

    #[test]
    fn attenuated_exact_table_is_noisy_distribution(family in family(), n in 1usize..9, seed in any::<u64>()) {
        let d = instance(family, n, seed);
        let eps = 0.05 + (seed % 90) as f64 / 100.0;
        let (t, _) = build_low_degree_table(&d, n, &CoefficientSource::exact(), 1 << 12).unwrap();
        let q = t.attenuate(eps).unwrap();
        let p = output_distribution(&d.defining_circuit(), CAP).unwrap();
        let noisy = apply_depolarizing_rates(&p, &vec![eps; n]).unwrap();
        let dense = q.to_dense(CAP).unwrap();
        prop_assert!(l1_distance(&dense, noisy.probs()) < 1e-9);
        prop_assert!((dense.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fix_identity_and_path_invariant(n in 1usize..11, seed in any::<u64>()) {
        let mut rng = StreamRng::seed_from_u64(seed);
        let c = rng.gen_range(0..=n.min(4));
        let scale = 1.0 / (1u64 << n) as f64;
        let entries: Vec<(u64, f64)> = bits::masks_up_to(n, c)
            .into_iter()
            .filter(|&s| s != 0)
            .map(|s| (s, rng.gen_range(-1.0..1.0) * scale))
            .collect();
        let t = FourierTable::new(n, c, entries).unwrap();
        let q = t.to_dense(CAP).unwrap();
        let alg = enumerate_alg_distribution(&t, CAP).unwrap();
        let neg: f64 = q.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
        prop_assert!((l1_distance(&q, alg.probs()) - 2.0 * neg).abs() < 1e-9);
        prop_assert!(alg.probs().iter().all(|&v| v >= 0.0));
    }
}
