use lattice_mcmc::diagnostics::{
    build_mtmk_matrix, exact_target, mhk_acceptance_rate, tv_distance,
};
use lattice_mcmc::klein::KleinSampler;
use lattice_mcmc::lattice::{Basis, GaussianSpec};
use lattice_mcmc::rng::stream_rng;
use lattice_mcmc::samplers::{run_chain, MarkovSampler, MhkSampler, MtmkSampler};
use nalgebra::DVector;

fn small_instance() -> (Basis, GaussianSpec) {
    (
        Basis::from_rows(&[[1.0, 0.45], [0.0, 0.35]]).unwrap(),
        GaussianSpec::new(0.2, DVector::from_vec(vec![0.37, 0.11])).unwrap(),
    )
}

#[test]
fn mhk_acceptance_rate_matches_transition_matrix() {
    const MOVES: u64 = 100_000;
    let (b, spec) = small_instance();
    let space = exact_target(&b, &spec, 1.0 - 1e-9).unwrap();
    let expected = mhk_acceptance_rate(&space);
    let mhk = MhkSampler::new(KleinSampler::new(b, spec).unwrap());
    let mut rng = stream_rng(21, 0);
    // burn in from the mode, then count
    let start = run_chain(&mhk, space.states[0].clone(), 200, &mut rng, |_, _| {});
    let mut accepted = 0u64;
    run_chain(&mhk, start.x, MOVES, &mut rng, |_, a| {
        accepted += u64::from(a)
    });
    let rate = accepted as f64 / MOVES as f64;
    // consecutive moves are correlated; inflate the i.i.d. error by 2
    let se = 2.0 * (expected * (1.0 - expected) / MOVES as f64).sqrt();
    assert!(
        (rate - expected).abs() < 3.0 * se,
        "empirical {rate} vs matrix {expected} (se {se})"
    );
}

#[test]
fn mtmk_long_run_law_matches_exact_kernel() {
    const MOVES: u64 = 200_000;
    let (b, spec) = small_instance();
    let space = exact_target(&b, &spec, 1.0 - 1e-9).unwrap();
    let p = build_mtmk_matrix(&space, 3).unwrap();
    assert!(p.stationarity_defect(&space.pi) < 1e-12);

    let sampler = MtmkSampler::new(KleinSampler::new(b, spec).unwrap(), 3).unwrap();
    let mut counts = vec![0.0; space.len()];
    let mut rng = stream_rng(22, 0);
    let x0 = sampler.init_state(space.states[5].clone()).x;
    run_chain(&sampler, x0, MOVES, &mut rng, |s, _| {
        if let Some(i) = space.index_of(&s.x) {
            counts[i] += 1.0;
        }
    });
    let total: f64 = counts.iter().sum();
    let freq: Vec<f64> = counts.iter().map(|c| c / total).collect();
    let tv = tv_distance(&freq, &space.pi).unwrap();
    assert!(tv < 0.01, "TV(empirical, pi) = {tv}");
}
