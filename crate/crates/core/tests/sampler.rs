mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dmd_core::archive::{Archive, SamplerConfig};

#[test]
fn cluster_frequencies_match_the_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (i, tau_c) in [0.1, 0.2, 0.35, 0.5, 1.0, 2.0].into_iter().enumerate() {
        let archive = common::random_archive(&mut rng, 2 + i);
        let fit = common::sampler_fit(&archive, tau_c, 100_000, &mut rng);
        assert!(fit.chi2_ok, "config {i} (tau_c {tau_c}): {fit:?}");
        assert!(fit.island_sigmas <= 3.0, "config {i}: island marginal off by {} sigma", fit.island_sigmas);
    }
}

#[test]
fn two_cluster_example() {
    // Means -1 and -2 at tau_c = 0.2: P(first) = 1/(1 + e^-5).
    let p = 1.0 / (1.0 + (-5.0f64).exp());
    assert!((p - 0.9933).abs() < 1e-4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut archive = Archive::seeded(1, common::scored(0, -1.0));
    archive.register(0, common::scored(1, -2.0));
    let probs = archive.islands()[0].cluster_probabilities(0.2);
    assert_eq!(probs[1].0, -1000);
    assert!((probs[1].1 - p).abs() < 1e-12);
    let n = 100_000;
    let hits = (0..n).filter(|_| archive.sample_cluster(0.2, &mut rng).1 == -1000).count();
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((hits as f64 - n as f64 * p).abs() < 4.0 * sd, "{hits}");
}

#[test]
fn examples_come_from_one_island_worst_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let archive = common::random_archive(&mut rng, 4);
    let cfg = SamplerConfig {
        examples_per_prompt: 3,
        ..Default::default()
    };
    for _ in 0..500 {
        let (k, ex) = archive.sample_examples(&cfg, &mut rng);
        let island = &archive.islands()[k];
        assert!(!ex.is_empty());
        assert!(ex.len() <= 3.min(island.n_members()));
        for e in &ex {
            assert!(island.clusters().any(|c| c.members().iter().any(|m| m.canonical_text() == e.canonical_text())));
        }
        assert!(ex.windows(2).all(|w| w[0].score <= w[1].score));
        let mut texts: Vec<String> = ex.iter().map(|e| e.canonical_text()).collect();
        texts.dedup();
        assert_eq!(texts.len(), ex.len());
    }
}
