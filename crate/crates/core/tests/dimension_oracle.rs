//! Brute-force checks for the dimension calculators.

use mg_golf_core::complexity::{
    be_dimension, build_dist_families, de_dimension, effective_dimension, ResidualKind, SearchMode,
};
use mg_golf_core::envs::make_random_tabular;
use mg_golf_core::model::{sample_episode, state_occupancy};
use mg_golf_core::{Dims, FunctionClass, MarkovPolicy, Side, ValueFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Does every element of `seq` pass the independence test at `eps_prime`?
fn sequence_ok(res: &[Vec<f64>], fam: &[Vec<f64>], seq: &[usize], eps_prime: f64) -> bool {
    (0..seq.len()).all(|i| {
        res.iter().any(|g| {
            let ss: f64 = seq[..i].iter().map(|&k| dot(&fam[k], g).powi(2)).sum();
            ss.sqrt() <= eps_prime && eps_prime < dot(&fam[seq[i]], g).abs()
        })
    })
}

/// Longest valid sequence, allowing repeats, over lengths up to `max_len`.
/// Candidate ε′ values are `eps` and every prefix norm at least `eps`.
fn brute_de(res: &[Vec<f64>], fam: &[Vec<f64>], eps: f64, max_len: usize) -> usize {
    let mut best = 0;
    let mut stack: Vec<Vec<usize>> = vec![vec![]];
    while let Some(seq) = stack.pop() {
        let mut cands = vec![eps];
        for i in 0..=seq.len() {
            for g in res {
                let ss: f64 = seq[..i].iter().map(|&k| dot(&fam[k], g).powi(2)).sum();
                if ss.sqrt() >= eps {
                    cands.push(ss.sqrt());
                }
            }
        }
        if !seq.is_empty() && !cands.iter().any(|&e| sequence_ok(res, fam, &seq, e)) {
            continue;
        }
        best = best.max(seq.len());
        if seq.len() < max_len {
            for k in 0..fam.len() {
                let mut s = seq.clone();
                s.push(k);
                stack.push(s);
            }
        }
    }
    best
}

fn random_vectors(rng: &mut ChaCha8Rng, count: usize, len: usize) -> Vec<Vec<f64>> {
    (0..count).map(|_| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

fn random_dists(rng: &mut ChaCha8Rng, count: usize, len: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let w: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..1.0)).collect();
            let t: f64 = w.iter().sum();
            w.iter().map(|x| x / t).collect()
        })
        .collect()
}

#[test]
fn exact_de_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..25 {
        let res = random_vectors(&mut rng, 5, 3);
        let fam = random_dists(&mut rng, 4, 3);
        for eps in [0.05, 0.15, 0.4] {
            let exact = de_dimension(&res, &fam, eps, SearchMode::Exact).unwrap().dimension;
            assert_eq!(exact, brute_de(&res, &fam, eps, 5), "eps {eps}");
        }
    }
}

#[test]
fn single_point_mass_has_dimension_one() {
    let fam = vec![vec![0.0, 1.0]];
    let res = vec![vec![0.0, 0.5]];
    assert_eq!(de_dimension(&res, &fam, 0.1, SearchMode::Exact).unwrap().dimension, 1);
    assert_eq!(brute_de(&res, &fam, 0.1, 3), 1);
}

#[test]
fn greedy_is_a_lower_bound_on_fifty_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let res = random_vectors(&mut rng, 8, 4);
        let fam = random_dists(&mut rng, 6, 4);
        let eps = rng.gen_range(0.02..0.5);
        let exact = de_dimension(&res, &fam, eps, SearchMode::Exact).unwrap();
        let greedy = de_dimension(&res, &fam, eps, SearchMode::Greedy).unwrap();
        assert!(greedy.dimension <= exact.dimension);
        assert!(exact.certificate.verify(&res, &fam, eps));
    }
}

#[test]
fn tabular_be_dimension_respects_the_cell_bound() {
    for seed in 0..3 {
        let mg = make_random_tabular(2, 2, 2, 2, 0.0, seed).unwrap();
        let dims = mg.dims();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let members = (0..3)
            .map(|_| {
                let t = (0..2).map(|_| (0..dims.sab()).map(|_| rng.gen_range(0.0..0.5)).collect()).collect();
                ValueFunction::new(dims, t).unwrap()
            })
            .collect();
        let f = FunctionClass::from_members(dims, members).unwrap();
        for eps in [0.05f64, 0.2] {
            let bound = dims.sab() as f64 * (1.0f64 + 1.0 / eps).log2().ceil();
            for kind in [ResidualKind::Q, ResidualKind::Online, ResidualKind::V] {
                let r = be_dimension(&mg, &f, eps, kind, SearchMode::Exact).unwrap();
                assert!(r.dimension as f64 <= bound);
                let g = be_dimension(&mg, &f, eps, kind, SearchMode::Greedy).unwrap();
                assert!(g.dimension <= r.dimension);
            }
        }
    }
}

#[test]
fn basis_effective_dimension_golden() {
    // Balanced counts maximize Σ log(1 + 100 c_i); 84 is the first length
    // where the average drops below 1/e.
    let z: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    assert_eq!(effective_dimension(&z, 0.1, SearchMode::Exact).unwrap().value, 84);
    let closed = |n: usize| -> f64 { (0..4).map(|i| (1.0 + 100.0 * (n / 4 + usize::from(i < n % 4)) as f64).ln()).sum::<f64>() / n as f64 };
    assert!(closed(84) <= (-1.0f64).exp() && closed(83) > (-1.0f64).exp());
    assert!(effective_dimension(&z, 0.1, SearchMode::Greedy).unwrap().value <= 84);
    let half: Vec<Vec<f64>> = z.iter().map(|v| v.iter().map(|x| x * 0.5).collect()).collect();
    assert_eq!(effective_dimension(&half, 0.05, SearchMode::Exact).unwrap().value, 84);
}

#[test]
fn roll_in_occupancy_matches_monte_carlo() {
    let mg = make_random_tabular(3, 2, 2, 3, 0.0, 4).unwrap();
    let dims: Dims = mg.dims();
    let mu = MarkovPolicy::uniform(Side::Max, dims);
    let nu = MarkovPolicy::uniform(Side::Min, dims);
    let occ = state_occupancy(&mg, &mu, &nu).unwrap();
    let n = 100_000;
    let mut counts = vec![vec![0usize; 3]; 3];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..n {
        let t = sample_episode(&mg, &mu, &nu, &mut rng).unwrap();
        for (h, step) in t.steps.iter().enumerate() {
            counts[h][step.s] += 1;
        }
    }
    for h in 0..3 {
        for s in 0..3 {
            let p = occ[h][s];
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!((counts[h][s] as f64 / n as f64 - p).abs() <= 3.0 * sigma + 1e-12);
        }
    }
    let one = FunctionClass::from_members(dims, vec![ValueFunction::constant(dims, 0.2).unwrap()]).unwrap();
    let fam = build_dist_families(&mg, &one).unwrap();
    assert_eq!(fam.roll_states[0], vec![vec![1.0, 0.0, 0.0]]);
}
