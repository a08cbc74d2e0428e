//! Remainder forests against the direct per-prime product.

use hgm_amortized::arith::{IntegerMatrix, PolyMatrix};
use hgm_amortized::forest::{naive_product, run_forest, run_forest_with, Exponents, ForestConfig, ForestJob, MatrixGenerator};
use hgm_amortized::primes::primes_up_to;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Integer;

pub const JOBS: usize = 200;

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> IntegerMatrix {
    random_rows(rng, n, n)
}

fn random_rows(rng: &mut ChaCha8Rng, k: usize, n: usize) -> IntegerMatrix {
    let rows = (0..k).map(|_| (0..n).map(|_| Integer::from(rng.gen_range(-1000i64..1000))).collect()).collect();
    IntegerMatrix::from_rows(rows).unwrap()
}

/// A job with dimension ≤ 6, generator length ≤ 200 and exponents ≤ 4.
pub fn random_job(rng: &mut ChaCha8Rng) -> ForestJob {
    let n = rng.gen_range(1..=6);
    let b = rng.gen_range(1..=200);
    let generator = if rng.gen_bool(0.5) {
        MatrixGenerator::Explicit((0..b).map(|_| random_matrix(rng, n)).collect())
    } else {
        let mut m = PolyMatrix::new(n, n);
        for i in 0..n {
            for j in 0..n {
                let deg = rng.gen_range(0..=2);
                m.set(i, j, (0..=deg).map(|_| Integer::from(rng.gen_range(-50i64..50))).collect());
            }
        }
        MatrixGenerator::Polynomial { matrix: m, start: rng.gen_range(-5..5), len: b }
    };
    let pool: Vec<u64> = primes_up_to(400).into_iter().skip(1).collect();
    let mut primes: Vec<u64> = pool.into_iter().filter(|_| rng.gen_bool(0.2)).collect();
    if primes.is_empty() {
        primes.push(3);
    }
    let cuts = primes.iter().map(|_| rng.gen_range(0..=b)).collect();
    let exponents = if rng.gen_bool(0.5) {
        Exponents::Uniform(rng.gen_range(1..=4))
    } else {
        Exponents::PerPrime(primes.iter().map(|_| rng.gen_range(1..=4)).collect())
    };
    let mut job = ForestJob::new(generator, primes, cuts, 1);
    job.exponents = exponents;
    if rng.gen_bool(0.5) {
        let k = rng.gen_range(1..=n);
        job = job.with_row_selector(random_rows(rng, k, n));
    }
    job
}

#[test]
fn forest_matches_naive_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for t in 0..JOBS {
        let job = random_job(&mut rng);
        let want = naive_product(&job).unwrap();
        assert_eq!(run_forest(&job).unwrap(), want, "job {t}");
    }
}

#[test]
fn tuning_knobs_do_not_change_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dir = tempfile::tempdir().unwrap();
    for t in 0..20 {
        let job = random_job(&mut rng);
        let want = naive_product(&job).unwrap();
        for blocks in [1, 2, 5] {
            let cfg = ForestConfig { blocks: Some(blocks), spill_dir: Some(dir.path().to_path_buf()), memory_budget: None };
            assert_eq!(run_forest_with(&job, &cfg).unwrap(), want, "job {t}, {blocks} blocks");
        }
    }
}
