use mastereq_core::basis::BiorthogonalSystem;
use mastereq_core::compensated;
use mastereq_core::evolution::{self, spectral_propagate};
use mastereq_core::secular::{alt_characterization_residual, solve_spectrum, SolverOptions};
use mastereq_core::{LevelSpec, ProbabilityVector, TruncatedModel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn affine_model() -> impl Strategy<Value = TruncatedModel> {
    (0.3f64..2.0, -1.0f64..1.0, 1.2f64..2.8, 2usize..24).prop_map(|(omega, offset, alpha, n)| {
        LevelSpec::affine(omega, offset, alpha, 0.1, 1.0).unwrap().truncate(n).unwrap()
    })
}

fn explicit_model() -> impl Strategy<Value = TruncatedModel> {
    (prop::collection::vec(0.05f64..1.5, 1..16), 1.1f64..3.5).prop_map(|(gaps, alpha)| {
        let mut levels = vec![0.0];
        for g in gaps {
            levels.push(levels.last().unwrap() + g);
        }
        let n = levels.len();
        LevelSpec::explicit(levels, alpha, 0.2, 0.01).unwrap().truncate(n).unwrap()
    })
}

fn any_model() -> impl Strategy<Value = TruncatedModel> {
    prop_oneof![affine_model(), explicit_model()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_structure(model in any_model()) {
        let gen = model.generator();
        prop_assert!(gen.column_sums().iter().all(|&s| s == 0.0));
        let b = model.b();
        prop_assert!(b.windows(2).all(|w| w[1] < w[0]));
        let n = model.n();
        let r = gen.rates();
        for m in 0..n {
            for k in 0..n {
                let (i, j) = ((m + 1) % n, (k + 2) % n);
                let lhs = r[[m, k]] * r[[i, j]];
                let rhs = r[[m, j]] * r[[i, k]];
                prop_assert!(((lhs - rhs) / lhs).abs() <= 1e-14);
            }
        }
        prop_assert!(model.detailed_balance_residual() <= 1e-15);
        prop_assert!(model.trace_identity_residual().abs() <= 1e-12 * gen.trace().abs());
        let g = model.gibbs_vector(1.0).unwrap();
        prop_assert!(g.components().iter().all(|&p| p > 0.0));
        prop_assert!(g.components().windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn spectrum_properties(model in any_model()) {
        let ctx = model.secular_context().unwrap();
        let spectrum = solve_spectrum(&ctx, &SolverOptions::default()).unwrap();
        prop_assert_eq!(spectrum.interlacing_violations(), 0);
        prop_assert!(spectrum.trace_check().abs() <= 1e-10 * spectrum.trace().abs());
        for rec in &spectrum.records()[1..] {
            prop_assert!(rec.fprime < 0.0);
            prop_assert!(rec.secular_residual <= 1e-11);
            prop_assert!(alt_characterization_residual(&ctx, rec).unwrap() <= 1e-9);
        }
        let system = BiorthogonalSystem::build(model.generator(), &spectrum).unwrap();
        prop_assert!(system.biorthogonality_defect(model.n()) <= 1e-6);
        for (r, l) in system.rights().iter().zip(system.lefts()) {
            prop_assert!(r.residual <= 1e-9 && l.residual <= 1e-9);
        }
    }

    #[test]
    fn evolution_conserves_mass(model in affine_model(), seed in any::<u64>()) {
        let spectrum = solve_spectrum(&model.secular_context().unwrap(), &SolverOptions::default()).unwrap();
        let system = BiorthogonalSystem::build(model.generator(), &spectrum).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..model.n()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let p0 = ProbabilityVector::new(raw, mastereq_core::Normalization::Normalize).unwrap();
        let taus = evolution::uniform_taus(10.0, 11).unwrap();
        let traj = spectral_propagate(&system, &p0, &taus).unwrap();
        for s in &traj.states {
            prop_assert!((s.sum() - 1.0).abs() <= 1e-10);
        }
        let report = evolution::positivity_conservation_check(&traj);
        prop_assert!(report.passed());
    }
}

#[test]
fn reconstruction_over_seeded_random_vectors() {
    let model = LevelSpec::affine(1.0, 0.0, 2.0, 0.4, 1.0).unwrap().truncate(64).unwrap();
    let spectrum = solve_spectrum(&model.secular_context().unwrap(), &SolverOptions::default()).unwrap();
    let system = BiorthogonalSystem::build(model.generator(), &spectrum).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let p: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        assert!(system.reconstruction_error(&p) <= 1e-6);
    }
}

#[test]
fn semigroup_over_random_splits() {
    let model = LevelSpec::affine(1.0, 0.0, 2.0, 0.4, 1.0).unwrap().truncate(32).unwrap();
    let spectrum = solve_spectrum(&model.secular_context().unwrap(), &SolverOptions::default()).unwrap();
    let system = BiorthogonalSystem::build(model.generator(), &spectrum).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p0 = ProbabilityVector::basis_state(32, 1).unwrap();
    for _ in 0..20 {
        let (t1, t2) = (rng.gen_range(0.0..20.0), rng.gen_range(0.0..20.0));
        let direct = evolution::evolve_vector(&system, p0.components(), t1 + t2);
        let staged = evolution::evolve_vector(&system, &evolution::evolve_vector(&system, p0.components(), t1), t2);
        let d: Vec<f64> = direct.iter().zip(&staged).map(|(a, b)| a - b).collect();
        assert!(compensated::norm2(&d) <= 1e-8);
    }
}

#[test]
fn distance_to_equilibrium_is_monotone_on_grid() {
    let model = LevelSpec::affine(1.0, 0.0, 2.0, 0.4, 1.0).unwrap().truncate(32).unwrap();
    let spectrum = solve_spectrum(&model.secular_context().unwrap(), &SolverOptions::default()).unwrap();
    let system = BiorthogonalSystem::build(model.generator(), &spectrum).unwrap();
    let taus = evolution::uniform_taus(200.0, 101).unwrap();
    for m in [1, 5, 32] {
        let p0 = ProbabilityVector::basis_state(32, m).unwrap();
        let traj = spectral_propagate(&system, &p0, &taus).unwrap();
        let d = traj.transients.unwrap();
        assert!(d.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)), "m={m}");
    }
}
