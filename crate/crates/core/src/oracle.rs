//! Slow evaluators taken straight from the definitions, for checking the
//! amortized pipeline. Arithmetic here is plain `u128` so that it shares no
//! code with the residue and series layers.

use std::collections::HashMap;

use rug::Integer;

use crate::arith::{teichmuller_lift, Fraction, ResidueElement};
use crate::datum::{classify_prime, HypergeometricDatum, PrimeClass};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct OracleConfig {
    /// Largest `p^e` for which a full factorial loop is run.
    pub bound: u64,
    /// Cache per-residue interpolation polynomials inside a sweep.
    pub memoize: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { bound: 1 << 31, memoize: true }
    }
}

/// Moduli below `2^63` only, so products fit in `u128`.
#[derive(Clone, Copy, Debug)]
struct Zm {
    m: u128,
}

impl Zm {
    fn new(p: u64, e: u32) -> Result<Self> {
        let m = (p as u128).checked_pow(e).filter(|&m| m < 1 << 63);
        m.map(|m| Zm { m }).ok_or(Error::OracleBoundExceeded { p, e })
    }

    fn mul(&self, a: u128, b: u128) -> u128 {
        a * b % self.m
    }

    fn add(&self, a: u128, b: u128) -> u128 {
        (a + b) % self.m
    }

    fn sub(&self, a: u128, b: u128) -> u128 {
        (a + self.m - b) % self.m
    }

    fn reduce_i128(&self, a: i128) -> u128 {
        a.rem_euclid(self.m as i128) as u128
    }

    fn pow(&self, mut a: u128, mut n: u64) -> u128 {
        let mut acc = 1 % self.m;
        while n > 0 {
            if n & 1 == 1 {
                acc = self.mul(acc, a);
            }
            a = self.mul(a, a);
            n >>= 1;
        }
        acc
    }

    fn inv(&self, a: u128) -> Option<u128> {
        let (mut r0, mut r1) = (self.m as i128, (a % self.m) as i128);
        let (mut t0, mut t1) = (0i128, 1i128);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (t0, t1) = (t1, t0 - q * t1);
        }
        (r0 == 1).then(|| self.reduce_i128(t0))
    }

    fn fraction(&self, x: &Fraction) -> Option<u128> {
        let d = self.inv(self.reduce_i128(x.den() as i128))?;
        Some(self.mul(self.reduce_i128(x.num() as i128), d))
    }
}

/// `Γ_p(n) = (−1)^n ∏_{i<n, p∤i} i mod m` by the full loop.
fn gamma_loop(zm: &Zm, p: u64, n: u128) -> u128 {
    let mut acc = 1 % zm.m;
    for i in 1..n {
        if i % p as u128 != 0 {
            acc = zm.mul(acc, i % zm.m);
        }
    }
    if n % 2 == 1 {
        zm.sub(0, acc)
    } else {
        acc
    }
}

/// `Γ_p(x) mod p^e` from the product formula, using a representative
/// `N ∈ [1, p^e]` of `x`. Falls back to [`GammaOracle`] when `p^e` exceeds
/// the default bound and `p > e`.
pub fn gamma_p_direct(x: &Fraction, p: u64, e: u32) -> Result<ResidueElement> {
    gamma_p_direct_with(&OracleConfig::default(), x, p, e)
}

pub fn gamma_p_direct_with(
    cfg: &OracleConfig,
    x: &Fraction,
    p: u64,
    e: u32,
) -> Result<ResidueElement> {
    if p == 2 {
        return Err(Error::EvenPrime);
    }
    if (x.den() as u64).is_multiple_of(p) {
        return Err(Error::DivisibleByP(p));
    }
    let zm = Zm::new(p, e)?;
    if zm.m <= cfg.bound as u128 {
        let mut n = zm.fraction(x).ok_or(Error::DivisibleByP(p))?;
        if n == 0 {
            n = zm.m;
        }
        return ResidueElement::new(p, e, Integer::from(gamma_loop(&zm, p, n)));
    }
    let mut g = GammaOracle::new(p, e, OracleConfig { memoize: false, ..*cfg })?;
    g.gamma(x)
}

/// `Γ_p` at many arguments for one `(p, e)` with `p > e`.
///
/// For each `a ∈ [1, p]` the map `t ↦ Γ_p(a + pt)` agrees mod `p^e` with the
/// polynomial of degree `< e` through its values at `t = 0, …, e−1`, and
/// those values only need factorials up to `pe`.
pub struct GammaOracle {
    p: u64,
    e: u32,
    zm: Zm,
    cfg: OracleConfig,
    table: Vec<u128>,
    polys: HashMap<u64, Vec<u128>>,
}

impl GammaOracle {
    pub fn new(p: u64, e: u32, cfg: OracleConfig) -> Result<Self> {
        if p == 2 {
            return Err(Error::EvenPrime);
        }
        let zm = Zm::new(p, e)?;
        let len = if p > e as u64 { (p * e as u64 + 1) as usize } else { 0 };
        // table[n] = Γ_p(n)
        let mut table = Vec::with_capacity(len);
        let mut prod = 1 % zm.m;
        for n in 0..len as u64 {
            table.push(if n % 2 == 1 { zm.sub(0, prod) } else { prod });
            if n % p != 0 {
                prod = zm.mul(prod, n as u128);
            }
        }
        if len > 0 {
            table[0] = 1 % zm.m;
        }
        Ok(GammaOracle { p, e, zm, cfg, table, polys: HashMap::new() })
    }

    fn newton(&self, a: u64) -> Vec<u128> {
        let e = self.e as usize;
        let zm = &self.zm;
        let mut diffs: Vec<u128> = (0..e).map(|t| self.table[(a + self.p * t as u64) as usize]).collect();
        // forward differences, then Σ Δ^k binom(t, k) expanded to monomials
        let mut lead = Vec::with_capacity(e);
        for _ in 0..e {
            lead.push(diffs[0]);
            diffs = diffs.windows(2).map(|w| zm.sub(w[1], w[0])).collect();
        }
        let mut out = vec![0u128; e];
        let mut falling = vec![1 % zm.m];
        let mut fact = 1 % zm.m;
        for (k, d) in lead.iter().enumerate() {
            if k > 0 {
                // falling ← falling·(t − (k−1))
                let c = zm.reduce_i128(-(k as i128 - 1));
                let mut next = vec![0u128; falling.len() + 1];
                for (i, v) in falling.iter().enumerate() {
                    next[i + 1] = zm.add(next[i + 1], *v);
                    next[i] = zm.add(next[i], zm.mul(*v, c));
                }
                falling = next;
                fact = zm.mul(fact, k as u128);
            }
            let s = zm.mul(*d, zm.inv(fact).expect("k! is a unit for k < p"));
            for (o, v) in out.iter_mut().zip(&falling) {
                *o = zm.add(*o, zm.mul(s, *v));
            }
        }
        out
    }

    fn gamma_raw(&mut self, x: &Fraction) -> Result<u128> {
        let (p, zm) = (self.p, self.zm);
        let n = zm.fraction(x).ok_or(Error::DivisibleByP(p))?;
        if self.table.is_empty() {
            if zm.m > self.cfg.bound as u128 {
                return Err(Error::OracleBoundExceeded { p, e: self.e });
            }
            return Ok(gamma_loop(&zm, p, if n == 0 { zm.m } else { n }));
        }
        let mut a = (n % p as u128) as u64;
        if a == 0 {
            a = p;
        }
        // t = (x − a)/p as a p-adic integer
        let num = x.num() as i128 - a as i128 * x.den() as i128;
        debug_assert!(num % p as i128 == 0);
        let t = zm.mul(zm.reduce_i128(num / p as i128), zm.inv(zm.reduce_i128(x.den() as i128)).unwrap());
        let poly = match self.polys.get(&a) {
            Some(q) => q.clone(),
            None => {
                let q = self.newton(a);
                if self.cfg.memoize {
                    self.polys.insert(a, q.clone());
                }
                q
            }
        };
        Ok(poly.iter().rev().fold(0, |acc, c| zm.add(zm.mul(acc, t), *c)))
    }

    pub fn gamma(&mut self, x: &Fraction) -> Result<ResidueElement> {
        let v = self.gamma_raw(x)?;
        ResidueElement::new(self.p, self.e, Integer::from(v))
    }
}

/// `(γ)*_m = Γ_p({γ + m/(1−p)}) / Γ_p({γ})`.
pub fn pochhammer_star(gamma: &Fraction, m: u64, p: u64, e: u32) -> Result<ResidueElement> {
    let mut g = GammaOracle::new(p, e, OracleConfig::default())?;
    let q = Fraction::new(m as i64, 1 - p as i64)?;
    let num = g.gamma_raw(&(*gamma + q).fract())?;
    let den = g.gamma_raw(&gamma.fract())?;
    let v = g.zm.mul(num, g.zm.inv(den).ok_or(Error::NotUnit(p))?);
    ResidueElement::new(p, e, Integer::from(v))
}

/// `P_m = [z]^m ∏_α (α)*_m / ∏_β (β)*_m`, the summand without its p-power
/// prefactor.
pub fn summand_direct(
    datum: &HypergeometricDatum,
    z: &Fraction,
    p: u64,
    e: u32,
    m: u64,
) -> Result<ResidueElement> {
    let mut g = GammaOracle::new(p, e, OracleConfig::default())?;
    let tz = teichmuller_lift(z, p, e)?.value().to_u128().unwrap();
    let v = pochhammer_product(&mut g, datum, p, m)?;
    let zm = g.zm;
    ResidueElement::new(p, e, Integer::from(zm.mul(v, zm.pow(tz, m))))
}

fn pochhammer_product(g: &mut GammaOracle, datum: &HypergeometricDatum, p: u64, m: u64) -> Result<u128> {
    let q = Fraction::new(m as i64, 1 - p as i64)?;
    let zm = g.zm;
    let mut num = 1 % zm.m;
    let mut den = 1 % zm.m;
    for x in datum.alpha() {
        num = zm.mul(num, g.gamma_raw(&(*x + q).fract())?);
        den = zm.mul(den, g.gamma_raw(x)?);
    }
    for x in datum.beta() {
        den = zm.mul(den, g.gamma_raw(&(*x + q).fract())?);
        num = zm.mul(num, g.gamma_raw(x)?);
    }
    Ok(zm.mul(num, zm.inv(den).ok_or(Error::NotUnit(p))?))
}

/// `H_p(α, β | z) mod p^e` as the full `(p−1)`-term sum. Data with `0 ∈ α`
/// are evaluated as `(β, α | 1/z)`.
pub fn hp_direct(datum: &HypergeometricDatum, z: &Fraction, p: u64, e: u32) -> Result<ResidueElement> {
    hp_direct_with(&OracleConfig::default(), datum, z, p, e)
}

pub fn hp_direct_with(
    cfg: &OracleConfig,
    datum: &HypergeometricDatum,
    z: &Fraction,
    p: u64,
    e: u32,
) -> Result<ResidueElement> {
    if datum.contains_zero_alpha() {
        return hp_direct_with(cfg, &datum.swapped()?, &z.recip()?, p, e);
    }
    if matches!(classify_prime(datum, *z, p, e), PrimeClass::Wild | PrimeClass::Tame) {
        return Err(Error::NonGoodPrime(p));
    }
    let mut g = GammaOracle::new(p, e, *cfg)?;
    let zm = g.zm;
    let tz = teichmuller_lift(z, p, e)?.value().to_u128().unwrap();
    let shift = datum.hodge_shift();
    let mut total = 0u128;
    let mut zpow = 1 % zm.m;
    for m in 0..p - 1 {
        let (eta, xi) = datum.eta_xi_direct(p, m);
        let ex = eta + shift + xi;
        assert!(ex >= 0, "negative p-exponent at m = {m}");
        if ex < e as i64 {
            let term = zm.mul(zm.mul(zpow, pochhammer_product(&mut g, datum, p, m)?), zm.pow(p as u128, ex as u64));
            total = if eta.rem_euclid(2) == 0 { zm.add(total, term) } else { zm.sub(total, term) };
        }
        zpow = zm.mul(zpow, tz);
    }
    let scale = zm.inv(zm.reduce_i128(1 - p as i128)).unwrap();
    ResidueElement::new(p, e, Integer::from(zm.mul(total, scale)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primes::primes_up_to;

    fn fr(s: &str) -> Fraction {
        s.parse().unwrap()
    }

    #[test]
    fn gamma_examples() {
        for p in [3, 5, 7, 11] {
            assert_eq!(*gamma_p_direct(&Fraction::one(), p, 1).unwrap().value(), p - 1);
            for e in 1..4 {
                assert_eq!(*gamma_p_direct(&Fraction::zero(), p, e).unwrap().value(), 1);
            }
        }
        assert_eq!(*gamma_p_direct(&fr("1/2"), 7, 1).unwrap().value(), 6);
    }

    #[test]
    fn interpolation_matches_loop() {
        for p in [7u64, 11, 13, 31] {
            for e in 1..=4 {
                let mut g = GammaOracle::new(p, e, OracleConfig::default()).unwrap();
                for x in ["1/2", "1/3", "-5/6", "7/4", "123/5", "0", "1", "-1"] {
                    let x = fr(x);
                    if (x.den() as u64).is_multiple_of(p) {
                        continue;
                    }
                    let a = gamma_p_direct(&x, p, e).unwrap();
                    assert_eq!(g.gamma(&x).unwrap(), a, "p={p} e={e} x={x}");
                }
            }
        }
    }

    #[test]
    fn bound_is_enforced() {
        let cfg = OracleConfig { bound: 1000, memoize: true };
        assert!(gamma_p_direct_with(&cfg, &fr("1/2"), 3, 7).is_err());
        assert!(gamma_p_direct_with(&cfg, &fr("1/2"), 3, 6).is_ok());
        // p > e goes through interpolation instead
        assert!(gamma_p_direct_with(&cfg, &fr("1/2"), 101, 3).is_ok());
    }

    #[test]
    fn pochhammer_m_zero() {
        assert_eq!(*pochhammer_star(&fr("1/6"), 0, 13, 2).unwrap().value(), 1);
        let v = pochhammer_star(&fr("1/6"), 2, 13, 1).unwrap();
        let num = gamma_p_direct(&(fr("1/6") + fr("-2/12")).fract(), 13, 1).unwrap();
        let den = gamma_p_direct(&fr("1/6"), 13, 1).unwrap();
        assert_eq!(v.mul(&den).unwrap(), num);
    }

    #[test]
    fn swap_identity() {
        let d = HypergeometricDatum::parse("1/4,3/4;1/6,5/6").unwrap();
        let s = d.swapped().unwrap();
        let z = fr("314/159");
        for p in primes_up_to(200) {
            if matches!(classify_prime(&d, z, p, 2), PrimeClass::Wild | PrimeClass::Tame) {
                continue;
            }
            for e in 1..=2 {
                let a = hp_direct(&d, &z, p, e).unwrap();
                let b = hp_direct(&s, &z.recip().unwrap(), p, e).unwrap();
                assert_eq!(a, b, "p={p} e={e}");
            }
        }
    }

    #[test]
    fn permutation_invariance() {
        let a = HypergeometricDatum::new(
            vec![fr("3/4"), fr("1/4")],
            vec![fr("5/6"), fr("1/6")],
        )
        .unwrap();
        let b = HypergeometricDatum::parse("1/4,3/4;1/6,5/6").unwrap();
        assert_eq!(hp_direct(&a, &fr("2"), 13, 1).unwrap(), hp_direct(&b, &fr("2"), 13, 1).unwrap());
    }

    #[test]
    fn matches_reference_values() {
        // computed separately with exact rational arithmetic in Python
        let z = fr("314/159");
        let cases = [
            ("1/4,3/4;1/6,5/6", 1, [30, 10, 6, 42]),
            ("1/4,1/3,2/3,3/4;1/6,1/6,5/6,5/6", 2, [137, 1459, 1207, 2062]),
        ];
        for (text, e, want) in cases {
            let d = HypergeometricDatum::parse(text).unwrap();
            for (p, w) in [37u64, 41, 43, 47].into_iter().zip(want) {
                assert_eq!(*hp_direct(&d, &z, p, e).unwrap().value(), w, "{text} p={p}");
            }
        }
    }
}
