//! Batched Γ_p expansions against the direct evaluator.

use hgm_amortized::arith::series;
use hgm_amortized::gamma::gamma_expansion_tables;
use hgm_amortized::oracle::{GammaOracle, OracleConfig};
use hgm_amortized::primes::gcd;
use hgm_amortized::{Fraction, PrimePower};
use rug::Integer;

const DENOMINATORS: [u64; 7] = [3, 4, 5, 6, 8, 10, 12];
const LIMIT: u64 = 500;
const YS: [i64; 4] = [0, 1, -1, 2];

/// Returns the number of (p, γ, y) points compared.
pub fn check_tables(d: u64, e: u32) -> usize {
    let table = gamma_expansion_tables(d, e, LIMIT).unwrap();
    let mut n = 0;
    for &p in &table.primes {
        let ring = PrimePower::new(p, e).unwrap();
        // Literal product loop below p^e = 2^14, interpolation above it.
        let mut oracle = GammaOracle::new(p, e, OracleConfig { bound: 1 << 14, memoize: true }).unwrap();
        for a in (1..=d).filter(|&a| gcd(a, d) == 1) {
            let g = Fraction::new(a as i64, d as i64).unwrap();
            let ex = table.expansion(g, p).unwrap();
            for y in YS {
                let s = series::eval(&ring, &ex.series, &ring.from_i64(y));
                let exp_s = hgm_amortized::arith::padic::exp_zero_mod_p(&ring, &s).unwrap();
                let got = ring.mul(&ex.constant, &exp_s);
                let x = g + Fraction::int(p as i64 * y);
                let want = oracle.gamma(&x).unwrap();
                assert_eq!(&got, want.value(), "d = {d}, e = {e}, p = {p}, γ = {g}, y = {y}");
                n += 1;
            }
        }
    }
    n
}

#[test]
fn tables_match_direct_gamma() {
    for d in DENOMINATORS {
        for e in 1..=4 {
            assert!(check_tables(d, e) > 0);
        }
    }
}

#[test]
fn constant_is_gamma_at_gamma() {
    let t = gamma_expansion_tables(3, 1, 10).unwrap();
    let ex = t.expansion(Fraction::new(1, 3).unwrap(), 7).unwrap();
    assert_eq!(ex.constant, Integer::from(4));
}
