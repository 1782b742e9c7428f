use asyncdgd_core::asynchrony::{delay_metrics, gen_partial_async, gen_total_async, verify_partial_async, Schedule};
use asyncdgd_core::mixing::{lazy_transform, metropolis_weights, Graph};
use asyncdgd_core::operators::{contraction_factor, max_stepsize, measure_pseudo_contraction, AlgorithmKind, AlgorithmSpec};
use asyncdgd_core::analysis::fixed_point_quadratic_direct;
use asyncdgd_core::problem::{
    block_max_norm, make_logistic_oracle, make_quadratic_oracle, synthetic, BlockVector, ProxOracle, SmoothOracle,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn prox_oracle(kind: u8, d: usize, rng: &mut ChaCha8Rng) -> ProxOracle {
    match kind % 4 {
        0 => ProxOracle::zero(d),
        1 => ProxOracle::l1(d, rng.gen_range(0.01..2.0)).unwrap(),
        2 => {
            let lo: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..0.0)).collect();
            let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.0..3.0)).collect();
            ProxOracle::boxed(lo, hi).unwrap()
        }
        _ => {
            let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            ProxOracle::ball(c, rng.gen_range(0.1..2.0)).unwrap()
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn prox_objective(h: &ProxOracle, scale: f64, v: &[f64], z: &[f64]) -> f64 {
    scale * h.value(z) + 0.5 * dist(z, v).powi(2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prox_minimizes_its_objective(kind in 0u8..4, d in 1usize..6, seed in any::<u64>(), scale in 0.01f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = prox_oracle(kind, d, &mut rng);
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let p = h.prox(&v, scale).unwrap();
        let best = prox_objective(&h, scale, &v, &p);
        prop_assert!(best.is_finite());
        for _ in 0..1000 {
            let r = 10f64.powf(rng.gen_range(-6.0..0.0));
            let shifted: Vec<f64> = p.iter().map(|x| x + r * rng.gen_range(-1.0..1.0)).collect();
            // a vanishing scale maps any point into dom h without moving it otherwise
            let z = h.prox(&shifted, 1e-300).unwrap();
            prop_assert!(prox_objective(&h, scale, &v, &z) >= best - 1e-12 * (1.0 + best.abs()));
        }
    }

    #[test]
    fn prox_is_firmly_nonexpansive(kind in 0u8..4, d in 1usize..6, seed in any::<u64>(), scale in 0.01f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = prox_oracle(kind, d, &mut rng);
        for _ in 0..4 {
            let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let (pu, pv) = (h.prox(&u, scale).unwrap(), h.prox(&v, scale).unwrap());
            let diff: Vec<f64> = pu.iter().zip(&pv).map(|(a, b)| a - b).collect();
            let inner: f64 = diff.iter().zip(u.iter().zip(&v)).map(|(x, (a, b))| x * (a - b)).sum();
            prop_assert!(dist(&pu, &pv) <= dist(&u, &v) + 1e-12);
            prop_assert!(dist(&pu, &pv).powi(2) <= inner + 1e-12);
        }
    }

    #[test]
    fn block_max_norm_is_a_norm(n in 1usize..6, d in 1usize..5, seed in any::<u64>(), c in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen = || BlockVector::new(n, d, (0..n * d).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        let (x, y, z) = (gen(), gen(), gen());
        let xz = block_max_norm(&x, &z).unwrap();
        prop_assert!(xz <= block_max_norm(&x, &y).unwrap() + block_max_norm(&y, &z).unwrap() + 1e-12);
        let zero = BlockVector::zeros(n, d);
        let scaled = BlockVector::new(n, d, x.as_slice().iter().map(|v| c * v).collect()).unwrap();
        let lhs = block_max_norm(&scaled, &zero).unwrap();
        prop_assert!((lhs - c.abs() * x.block_max()).abs() <= 1e-12 * (1.0 + lhs));
        prop_assert_eq!(block_max_norm(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn gradients_match_finite_differences(d in 1usize..5, rows in 1usize..8, seed in any::<u64>(), logistic in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..rows * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f: SmoothOracle = if logistic {
            let labels: Vec<f64> = (0..rows).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
            make_logistic_oracle(&a, rows, d, &labels, rng.gen_range(0.0..0.5)).unwrap()
        } else {
            let b: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
            make_quadratic_oracle(&a, rows, d, &b).unwrap()
        };
        for _ in 0..2 {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let g = f.gradient(&x);
            for c in 0..d {
                let h = 1e-5;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += h;
                xm[c] -= h;
                let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * h);
                prop_assert!((fd - g[c]).abs() <= 1e-6 * (1.0 + g[c].abs()), "fd {} grad {}", fd, g[c]);
            }
        }
    }

    #[test]
    fn metropolis_matrices_are_valid(n in 2usize..14, extra in 0usize..10, seed in any::<u64>()) {
        let m = (n - 1 + extra).min(n * (n - 1) / 2);
        let g = Graph::random_connected(n, m, seed).unwrap();
        let w = metropolis_weights(&g).unwrap();
        for i in 0..n {
            let row: f64 = (0..n).map(|j| w.weight(i, j)).sum();
            prop_assert!((row - 1.0).abs() <= 1e-12);
            for j in 0..n {
                prop_assert_eq!(w.weight(i, j), w.weight(j, i));
                let linked = i == j || g.neighbors(i).contains(&j);
                prop_assert_eq!(w.weight(i, j) > 0.0, linked);
            }
        }
        prop_assert!(w.beta() < 1.0);
        let lazy = lazy_transform(&w).unwrap();
        prop_assert!(lazy.positive_definite() && lazy.beta() < 1.0);
    }

    #[test]
    fn atc_factor_never_exceeds_prox_factor(n in 3usize..9, d in 1usize..4, seed in any::<u64>(), frac in 0.05f64..0.95) {
        let p = synthetic::random_quadratic_problem(n, d, 2 * d + 1, false, seed).unwrap();
        let w = lazy_transform(&metropolis_weights(&Graph::random_connected(n, n, seed).unwrap()).unwrap()).unwrap();
        let alpha = frac * max_stepsize(AlgorithmKind::ProxDgd, &p, &w).min(max_stepsize(AlgorithmKind::DgdAtc, &p, &w));
        let rho = contraction_factor(&AlgorithmSpec::new(AlgorithmKind::ProxDgd, p.clone(), w.clone(), alpha).unwrap());
        let rho_hat = contraction_factor(&AlgorithmSpec::new(AlgorithmKind::DgdAtc, p, w, alpha).unwrap());
        prop_assert!(rho_hat.factor <= rho.factor);
    }

    #[test]
    fn pseudo_contraction_respects_factor(n in 3usize..8, d in 1usize..4, seed in any::<u64>(), frac in 0.1f64..0.99) {
        let p = synthetic::random_quadratic_problem(n, d, 2 * d + 1, false, seed).unwrap();
        let w = metropolis_weights(&Graph::random_connected(n, n, seed).unwrap()).unwrap();
        let alpha = frac * max_stepsize(AlgorithmKind::ProxDgd, &p, &w);
        let spec = AlgorithmSpec::new(AlgorithmKind::ProxDgd, p, w, alpha).unwrap();
        let xs = fixed_point_quadratic_direct(&spec).unwrap().x_star;
        let ratio = measure_pseudo_contraction(&spec, &xs, 40, seed).unwrap();
        prop_assert!(ratio <= contraction_factor(&spec).factor + 1e-9);
    }

    #[test]
    fn partial_async_epochs_stay_between_extremes(n in 3usize..8, b_extra in 0usize..10, d in 0usize..12, seed in any::<u64>()) {
        let g = Graph::random_connected(n, n, seed).unwrap();
        let b = n - 1 + b_extra;
        let horizon = 10 * (b + d + 1);
        let s = gen_partial_async(&g, b, d, horizon, seed).unwrap();
        let r = verify_partial_async(&s);
        prop_assert!(r.holds && r.b_min <= b && r.d_min <= d);
        let m = delay_metrics(&s);
        let period = b + d + 1;
        for k in 0..=horizon {
            prop_assert!(m.m[k] >= k / period && m.m[k] <= k / n);
            if k > 0 {
                prop_assert!(m.m[k] >= m.m[k - 1]);
            }
        }
        prop_assert_eq!(Schedule::parse(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn total_async_delays_stay_in_window(n in 2usize..7, seed in any::<u64>()) {
        let g = Graph::random_connected(n, n - 1, seed).unwrap();
        let s = gen_total_async(&g, 2000, 1.0, seed).unwrap();
        let m = delay_metrics(&s);
        prop_assert!(m.holds);
        prop_assert!(m.m[2000] >= 1);
    }
}
