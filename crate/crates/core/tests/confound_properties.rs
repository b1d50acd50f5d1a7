use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use tar4c::confound::{default_span, dpca_scores, estimate_spectrum, neutralize, DpcaScores};
use tar4c::series::{mean, variance};

fn noise(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            v
        })
        .collect()
}

fn scores(seed: u64, len: usize) -> (DpcaScores, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = noise(len, &mut rng);
    let z: Vec<Vec<f64>> = (0..3)
        .map(|k| {
            let e = noise(len, &mut rng);
            f.iter().zip(&e).map(|(a, b)| a * (1.0 + k as f64) + 0.5 * b).collect()
        })
        .collect();
    let sd = estimate_spectrum(&z, default_span(len)).unwrap();
    (dpca_scores(&sd, &z, 0.85, 10, Some(3)).unwrap(), rng)
}

fn rel_dev(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn neutralize_is_a_projection(seed in any::<u64>(), a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let (sc, mut rng) = scores(seed, 256);
        let y1: Vec<f64> = sc.scores[0].iter().zip(noise(256, &mut rng)).map(|(s, e)| 0.7 * s + e).collect();
        let y2 = noise(256, &mut rng);
        let once = neutralize(&y1, &sc, 2).unwrap();
        let twice = neutralize(&once, &sc, 2).unwrap();
        prop_assert!(rel_dev(&twice, &once) <= 1e-8);

        let combo: Vec<f64> = y1.iter().zip(&y2).map(|(u, v)| a * u + b * v).collect();
        let n2 = neutralize(&y2, &sc, 2).unwrap();
        let lhs = neutralize(&combo, &sc, 2).unwrap();
        let rhs: Vec<f64> = once.iter().zip(&n2).map(|(u, v)| a * u + b * v).collect();
        let scale = combo.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let dev = lhs.iter().zip(&rhs).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        prop_assert!(dev <= 1e-8 * scale.max(1.0));

        let centred: Vec<f64> = y1.iter().map(|v| v - mean(&y1)).collect();
        prop_assert!(variance(&once) <= variance(&centred) * (1.0 + 1e-12));
        prop_assert!(mean(&once).abs() <= 1e-10 * scale.max(1.0));
    }
}

#[test]
fn explained_fraction_is_cumulative() {
    let (sc, _) = scores(9, 512);
    assert!(sc.n_components() >= 1);
    assert!(sc.explained_fraction.windows(2).all(|w| w[0] <= w[1]));
    assert!(sc.explained_fraction.iter().all(|&f| f <= 1.0));
}
