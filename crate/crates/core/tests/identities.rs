//! Classical congruences and Γ_p identities.

use hgm_amortized::gamma::{factorial_batch, harmonic_sums, GammaOptions, GammaStore};
use hgm_amortized::oracle::gamma_p_direct;
use hgm_amortized::primes::primes_up_to;
use hgm_amortized::{Fraction, PrimePower, ResidueElement};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Integer;

const SAMPLES: usize = 500;

#[test]
fn wilson() {
    let f = factorial_batch(Fraction::one(), 1, 10_000).unwrap();
    assert_eq!(f.len(), primes_up_to(10_000).len() - 1);
    for (p, v) in f {
        assert_eq!(*v.value(), Integer::from(p - 1), "p = {p}");
    }
}

#[test]
fn wolstenholme() {
    let h = harmonic_sums(1, Fraction::one(), 3, 10_000).unwrap();
    let primes: Vec<u64> = h.values.keys().copied().collect();
    assert_eq!(primes.first(), Some(&5));
    for (p, v) in h.values {
        assert_eq!(v.exponent(), 2);
        assert_eq!(*v.value(), 0, "p = {p}");
    }
}

fn random_prime(rng: &mut ChaCha8Rng, lo: u64, hi: u64) -> u64 {
    let ps: Vec<u64> = primes_up_to(hi).into_iter().filter(|&p| p >= lo).collect();
    ps[rng.gen_range(0..ps.len())]
}

fn random_point(rng: &mut ChaCha8Rng, p: u64) -> Fraction {
    loop {
        let den = rng.gen_range(1..=12i64);
        let x = Fraction::new(rng.gen_range(-200..200), den).unwrap();
        if x.den() % p as i64 != 0 {
            return x;
        }
    }
}

/// Γ_p(x + 1) = ω(x)Γ_p(x) with ω(x) = −x, or −1 when p | x.
#[test]
fn functional_equation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..SAMPLES {
        let p = random_prime(&mut rng, 3, 60);
        let e = rng.gen_range(1..=3);
        let ring = PrimePower::new(p, e).unwrap();
        let x = random_point(&mut rng, p);
        let lhs = gamma_p_direct(&(x + Fraction::one()), p, e).unwrap();
        let g = gamma_p_direct(&x, p, e).unwrap();
        let xr = ring.fraction(&x).unwrap();
        let omega = if ring.is_unit(&xr) { ring.neg(&xr) } else { ring.from_i64(-1) };
        assert_eq!(*lhs.value(), ring.mul(&omega, g.value()), "p = {p}, e = {e}, x = {x}");
    }
}

/// Γ_p(x)Γ_p(1 − x) = (−1)^{x₀} with x₀ ∈ [1, p], x₀ ≡ x mod p.
#[test]
fn reflection() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..SAMPLES {
        let p = random_prime(&mut rng, 3, 60);
        let e = rng.gen_range(1..=3);
        let x = random_point(&mut rng, p);
        let a = gamma_p_direct(&x, p, e).unwrap();
        let b = gamma_p_direct(&(Fraction::one() - x), p, e).unwrap();
        let x0 = PrimePower::new(p, 1).unwrap().fraction(&x).unwrap().to_u64().unwrap();
        let x0 = if x0 == 0 { p } else { x0 };
        let want = ResidueElement::new(p, e, if x0 % 2 == 0 { 1 } else { -1 }).unwrap();
        assert_eq!(a.mul(&b).unwrap(), want, "p = {p}, e = {e}, x = {x}");
    }
}

/// x ≡ y mod p^k implies Γ_p(x) ≡ Γ_p(y) mod p^k.
#[test]
fn lipschitz() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..SAMPLES {
        let p = random_prime(&mut rng, 3, 40);
        let e = 3;
        let k = rng.gen_range(1..=e);
        let x = random_point(&mut rng, p);
        let y = x + Fraction::int((p as i64).pow(k) * rng.gen_range(-3..=3));
        let a = gamma_p_direct(&x, p, e).unwrap().reduce_to(k).unwrap();
        let b = gamma_p_direct(&y, p, e).unwrap().reduce_to(k).unwrap();
        assert_eq!(a, b, "p = {p}, x = {x}, y = {y}");
    }
}

/// The same identities through the batched tables, for many primes at once.
#[test]
fn table_reflection_and_shift() {
    let e = 3;
    let store = GammaStore::build(&[5, 12], e, 400, &GammaOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let primes: Vec<u64> = store.table(12).unwrap().primes.clone();
    for _ in 0..SAMPLES {
        let p = primes[rng.gen_range(0..primes.len())];
        let ring = PrimePower::new(p, e).unwrap();
        let d = if rng.gen_bool(0.5) { 5 } else { 12 };
        let x = Fraction::new(rng.gen_range(-3 * d..3 * d), d).unwrap();
        if x.den() != d {
            continue;
        }
        let (c1, _) = store.shifted(&ring, x).unwrap();
        let (c2, _) = store.shifted(&ring, Fraction::one() - x).unwrap();
        let x0 = PrimePower::new(p, 1).unwrap().fraction(&x).unwrap().to_u64().unwrap();
        let x0 = if x0 == 0 { p } else { x0 };
        assert_eq!(ring.mul(&c1, &c2), ring.from_i64(if x0 % 2 == 0 { 1 } else { -1 }), "p = {p}, x = {x}");
        let (c3, _) = store.shifted(&ring, x + Fraction::one()).unwrap();
        assert_eq!(c3, ring.mul(&ring.neg(&ring.fraction(&x).unwrap()), &c1));
    }
}
