use rug::Integer;

use super::{Fraction, PrimePower, ResidueElement};
use crate::error::{Error, Result};

fn floor_log(p: u64, n: u64) -> u32 {
    let mut k = 0;
    let mut q = p;
    while q <= n {
        k += 1;
        q = match q.checked_mul(p) {
            Some(v) => v,
            None => break,
        };
    }
    k
}

fn p_adic_val(p: u64, mut n: u64) -> u32 {
    let mut v = 0;
    while n.is_multiple_of(p) {
        n /= p;
        v += 1;
    }
    v
}

/// `log u` for `u ≡ 1 (mod p)`, as a residue mod `p^e`.
///
/// Each term `t^n / n` is formed exactly: `t^n` is computed modulo
/// `p^(e + v)` and the power `p^v` dividing `n` is divided out before the
/// unit part of `n` is inverted, so no guard digits are needed.
pub fn log_one_unit(ring: &PrimePower, u: &Integer) -> Result<Integer> {
    let p = ring.p();
    let e = ring.e();
    if p == 2 {
        return Err(Error::EvenPrime);
    }
    let t = ring.reduce(Integer::from(u - 1u32));
    if !t.is_divisible(&Integer::from(p)) {
        return Err(Error::NotOneModP(p));
    }
    if t == 0 {
        return Ok(t);
    }
    let mut terms = 0u64;
    while (terms + 1) - (floor_log(p, terms + 1) as u64) < (e as u64) {
        terms += 1;
    }
    let guard = floor_log(p, terms.max(1));
    let wide = ring.with_exponent(e + guard);
    let mut acc = Integer::new();
    let mut power = Integer::from(1);
    for n in 1..=terms {
        power = wide.mul(&power, &t);
        let v = p_adic_val(p, n);
        let unit = n / p.pow(v);
        let mut term = power.clone();
        if v > 0 {
            term /= ring.p_pow(v);
        }
        let term = ring.mul(&ring.reduce(term), &ring.inv(&Integer::from(unit))?);
        if n % 2 == 1 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    Ok(ring.reduce(acc))
}

/// `exp x` for `x ≡ 0 (mod p)`, as a residue mod `p^e`; requires `p > e`.
pub fn exp_zero_mod_p(ring: &PrimePower, x: &Integer) -> Result<Integer> {
    let p = ring.p();
    let e = ring.e();
    if p == 2 {
        return Err(Error::EvenPrime);
    }
    if p <= e as u64 {
        return Err(Error::PrimeTooSmall { p, e });
    }
    let x = ring.reduce_ref(x);
    if !x.is_divisible(&Integer::from(p)) {
        return Err(Error::NotZeroModP(p));
    }
    // Terms with n − (n−1)/(p−1) ≥ e vanish; with p > e all kept n have n < p,
    // so n! is a unit.
    let mut acc = Integer::from(1);
    let mut term = Integer::from(1);
    let mut n = 1u64;
    while n * (p - 1) - (n - 1) < e as u64 * (p - 1) {
        term = ring.mul(&term, &x);
        term = ring.mul(&term, &ring.inv(&Integer::from(n))?);
        acc += &term;
        n += 1;
    }
    Ok(ring.reduce(acc))
}

/// The Teichmüller representative of a residue prime to `p`.
pub fn teichmuller_residue(ring: &PrimePower, z: &Integer) -> Integer {
    let mut x = ring.reduce_ref(z);
    for _ in 1..ring.e() {
        x = ring.pow(&x, ring.p());
    }
    x
}

pub fn padic_log(u: &ResidueElement) -> Result<ResidueElement> {
    let ring = u.ring();
    Ok(ResidueElement::in_ring(&ring, log_one_unit(&ring, u.value())?))
}

pub fn padic_exp(x: &ResidueElement) -> Result<ResidueElement> {
    let ring = x.ring();
    Ok(ResidueElement::in_ring(&ring, exp_zero_mod_p(&ring, x.value())?))
}

/// `[z] mod p^e`: the `(p−1)`-st root of unity congruent to `z` mod `p`.
pub fn teichmuller_lift(z: &Fraction, p: u64, e: u32) -> Result<ResidueElement> {
    let ring = PrimePower::new(p, e)?;
    if !z.is_p_unit(p) {
        return Err(Error::DivisibleByP(p));
    }
    let zr = ring.fraction(z)?;
    Ok(ResidueElement::in_ring(&ring, teichmuller_residue(&ring, &zr)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::Reduce;
    use rug::ops::Pow;

    fn r(p: u64, e: u32, v: i64) -> ResidueElement {
        ResidueElement::new(p, e, v).unwrap()
    }

    #[test]
    fn log_examples() {
        assert_eq!(padic_log(&r(5, 2, 1)).unwrap().value(), &0);
        assert_eq!(padic_log(&r(5, 2, 6)).unwrap().value(), &5);
        assert_eq!(padic_log(&r(7, 2, 15)).unwrap().value(), &14);
        assert_eq!(padic_log(&r(7, 2, 3)), Err(Error::NotOneModP(7)));
    }

    #[test]
    fn exp_examples() {
        assert_eq!(padic_exp(&r(7, 3, 0)).unwrap().value(), &1);
        assert_eq!(padic_exp(&r(7, 2, 14)).unwrap().value(), &15);
        assert_eq!(padic_exp(&r(7, 2, 3)), Err(Error::NotZeroModP(7)));
        assert_eq!(padic_exp(&r(3, 3, 3)), Err(Error::PrimeTooSmall { p: 3, e: 3 }));
    }

    #[test]
    fn exp_at_p_equals_e_plus_one() {
        // p = 5, e = 4 is the largest admissible precision at p = 5.
        assert_eq!(padic_exp(&r(5, 4, 0)).unwrap().value(), &1);
        let x = r(5, 4, 5);
        let back = padic_log(&padic_exp(&x).unwrap()).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn log_small_prime_high_precision() {
        // Terms 3^n/n with 3 | n lose precision; compare against a long
        // exact rational partial sum.
        let ring = PrimePower::new(3, 5).unwrap();
        let got = log_one_unit(&ring, &Integer::from(4)).unwrap();
        let mut exact = rug::Rational::new();
        for n in 1..200u32 {
            let term = rug::Rational::from((Integer::from(3).pow(n), n));
            if n % 2 == 1 {
                exact += term;
            } else {
                exact -= term;
            }
        }
        let (num, den) = exact.into_numer_denom();
        let m = ring.modulus().clone();
        let v = (num * den.invert(&m).unwrap()).reduced_mod(&m);
        assert_eq!(got, v);
    }

    #[test]
    fn teichmuller_examples() {
        assert_eq!(teichmuller_lift(&Fraction::int(1), 13, 3).unwrap().value(), &1);
        assert_eq!(teichmuller_lift(&Fraction::int(2), 7, 1).unwrap().value(), &2);
        let t = teichmuller_lift(&Fraction::int(2), 7, 2).unwrap();
        assert_eq!(t.value(), &30);
        assert_eq!(t.pow(6).value(), &1);
        assert!(teichmuller_lift(&Fraction::new(7, 3).unwrap(), 7, 2).is_err());
    }
}
