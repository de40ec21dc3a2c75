use std::collections::HashMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use poms::archive::bd_to_cell;
use poms::envs::EnvSpec;
use poms::latent::AeParams;
use poms::search::{run, Budget, RunSettings, Variant, VariantKind};

/// Expected coverage and its standard deviation after `n` uniform draws of a
/// linear probe policy, from the analytic descriptor map.
fn uniform_probe_coverage(env: &EnvSpec, n: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws = 1_000_000;
    let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
    let (p1, p2) = (&env.probes[0], &env.probes[1]);
    for _ in 0..draws {
        let w: [f64; 3] = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let bd = [
            w[0] * p1[0] + w[1] * p1[1] + w[2],
            w[0] * p2[0] + w[1] * p2[1] + w[2],
        ];
        *counts.entry(bd_to_cell(&bd, &env.grid).unwrap()).or_default() += 1;
    }
    let total = env.grid.total_cells() as f64;
    let mut mean = 0.0;
    let mut var = 0.0;
    for &c in counts.values() {
        let p = c as f64 / draws as f64;
        let occupied = 1.0 - (1.0 - p).powf(n as f64);
        mean += occupied;
        // indicator covariances are negative, so this bounds the variance
        var += occupied * (1.0 - occupied);
    }
    (mean / total, var.sqrt() / total)
}

#[test]
fn uniform_search_matches_analytic_coverage() {
    let env = EnvSpec::probe_bd();
    let shape = env.policy_shape(vec![]).unwrap();
    let budget = Budget {
        bootstrap: 50,
        loops: 3,
        iterations: 5,
        batch: 10,
    };
    let (expected, sd) = uniform_probe_coverage(&env, budget.total_evals());
    let seeds = 5;
    let observed: f64 = (0..seeds)
        .map(|seed| {
            let settings = RunSettings {
                env: env.clone(),
                shape: shape.clone(),
                variant: Variant::new(VariantKind::PsUniform, None),
                budget,
                seed,
                threads: 1,
            };
            run(&settings, |_, _, _| {}).unwrap().archive.coverage()
        })
        .sum::<f64>()
        / seeds as f64;
    let bound = 3.0 * sd / (seeds as f64).sqrt();
    assert!(
        (observed - expected).abs() <= bound,
        "observed {observed}, expected {expected} +/- {bound}"
    );
}

fn random_ae(rng: &mut ChaCha8Rng, p: usize, h: usize, m: usize) -> AeParams {
    let len = AeParams::zeros(p, h, m).len();
    let flat: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    AeParams::from_flat(p, h, m, &flat).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn jacobian_matches_central_differences(
        seed in any::<u64>(),
        p in 1usize..40,
        h in 1usize..20,
        m in 1usize..6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ae = random_ae(&mut rng, p, h, m);
        let z: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let j = ae.decoder_jacobian(ndarray::ArrayView1::from(&z[..]));
        let step = 1e-5;
        for col in 0..m {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[col] += step;
            zm[col] -= step;
            let dp = ae.decode(ndarray::ArrayView1::from(&zp[..]));
            let dm = ae.decode(ndarray::ArrayView1::from(&zm[..]));
            for row in 0..p {
                let fd = (dp[row] - dm[row]) / (2.0 * step);
                let an = j[(row, col)];
                prop_assert!((an - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "{an} vs {fd}");
            }
        }
    }

    #[test]
    fn loss_gradient_matches_central_differences(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, h, m) = (5, 3, 2);
        let ae = random_ae(&mut rng, p, h, m);
        let x = ndarray::Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
        let grad = ae.loss_and_grad(x.view()).1.to_flat();
        let base = ae.to_flat();
        let step = 1e-5;
        for k in 0..base.len() {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[k] += step;
            minus[k] -= step;
            let lp = AeParams::from_flat(p, h, m, &plus).unwrap().loss_and_grad(x.view()).0;
            let lm = AeParams::from_flat(p, h, m, &minus).unwrap().loss_and_grad(x.view()).0;
            let fd = (lp - lm) / (2.0 * step);
            prop_assert!((grad[k] - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "param {k}: {} vs {fd}", grad[k]);
        }
    }
}
