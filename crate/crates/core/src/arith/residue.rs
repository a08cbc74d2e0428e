use std::fmt;

use rug::integer::IsPrime;
use rug::ops::Pow;
use rug::Integer;

use super::Fraction;
use crate::arith::Reduce;
use crate::error::{Error, Result};

/// The ring `Z/p^e` for an odd prime `p`. Raw `Integer` arithmetic in the hot
/// paths goes through this context so that the modulus is built once.
#[derive(Clone, PartialEq, Eq)]
pub struct PrimePower {
    p: u64,
    e: u32,
    m: Integer,
}

impl PrimePower {
    pub fn new(p: u64, e: u32) -> Result<Self> {
        if p == 2 {
            return Err(Error::EvenPrime);
        }
        if e == 0 {
            return Err(Error::ZeroPrecision);
        }
        if Integer::from(p).is_probably_prime(25) == IsPrime::No {
            return Err(Error::NotPrime(p));
        }
        Ok(Self::unchecked(p, e))
    }

    pub(crate) fn unchecked(p: u64, e: u32) -> Self {
        PrimePower { p, e, m: Integer::from(p).pow(e) }
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn e(&self) -> u32 {
        self.e
    }

    pub fn modulus(&self) -> &Integer {
        &self.m
    }

    /// The same prime at a different precision.
    pub fn with_exponent(&self, e: u32) -> Self {
        Self::unchecked(self.p, e)
    }

    pub fn p_pow(&self, k: u32) -> Integer {
        Integer::from(self.p).pow(k)
    }

    pub fn reduce(&self, mut x: Integer) -> Integer {
        x.reduce_mod(&self.m);
        x
    }

    pub fn reduce_ref(&self, x: &Integer) -> Integer {
        x.reduced_mod(&self.m)
    }

    pub fn add(&self, a: &Integer, b: &Integer) -> Integer {
        self.reduce(Integer::from(a + b))
    }

    pub fn sub(&self, a: &Integer, b: &Integer) -> Integer {
        self.reduce(Integer::from(a - b))
    }

    pub fn mul(&self, a: &Integer, b: &Integer) -> Integer {
        self.reduce(Integer::from(a * b))
    }

    pub fn neg(&self, a: &Integer) -> Integer {
        self.reduce(Integer::from(-a))
    }

    pub fn mul_i64(&self, a: &Integer, b: i64) -> Integer {
        self.reduce(Integer::from(a * b))
    }

    pub fn inv(&self, a: &Integer) -> Result<Integer> {
        a.invert_ref(&self.m).map(Integer::from).ok_or(Error::NotUnit(self.p))
    }

    pub fn pow(&self, a: &Integer, n: u64) -> Integer {
        Integer::from(a.pow_mod_ref(&Integer::from(n), &self.m).expect("nonnegative exponent"))
    }

    /// Signed exponent; negative powers require a unit.
    pub fn pow_signed(&self, a: &Integer, n: i64) -> Result<Integer> {
        if n >= 0 {
            Ok(self.pow(a, n as u64))
        } else {
            Ok(self.pow(&self.inv(a)?, n.unsigned_abs()))
        }
    }

    pub fn from_i64(&self, v: i64) -> Integer {
        self.reduce(Integer::from(v))
    }

    pub fn fraction(&self, f: &Fraction) -> Result<Integer> {
        f.residue(&self.m).ok_or(Error::DivisibleByP(self.p))
    }

    pub fn is_unit(&self, a: &Integer) -> bool {
        match u32::try_from(self.p) {
            Ok(p) => !a.is_divisible_u(p),
            Err(_) => !a.is_divisible(&Integer::from(self.p)),
        }
    }

    /// `v_p(a)` for a residue, capped at `e`.
    pub fn valuation(&self, a: &Integer) -> u32 {
        let r = self.reduce_ref(a);
        if r == 0 {
            return self.e;
        }
        let p = Integer::from(self.p);
        let mut v = 0;
        let mut r = r;
        while r.is_divisible(&p) {
            r /= &p;
            v += 1;
        }
        v
    }
}

impl fmt::Debug for PrimePower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}^{}", self.p, self.e)
    }
}

/// An integer residue modulo `p^e`, carrying its modulus.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ResidueElement {
    p: u64,
    e: u32,
    value: Integer,
}

impl ResidueElement {
    pub fn new(p: u64, e: u32, value: impl Into<Integer>) -> Result<Self> {
        let ring = PrimePower::new(p, e)?;
        Ok(Self::in_ring(&ring, value.into()))
    }

    pub fn in_ring(ring: &PrimePower, value: Integer) -> Self {
        ResidueElement { p: ring.p, e: ring.e, value: ring.reduce(value) }
    }

    pub fn from_fraction(p: u64, e: u32, f: &Fraction) -> Result<Self> {
        let ring = PrimePower::new(p, e)?;
        Ok(Self::in_ring(&ring, ring.fraction(f)?))
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    pub fn exponent(&self) -> u32 {
        self.e
    }

    pub fn value(&self) -> &Integer {
        &self.value
    }

    pub fn into_value(self) -> Integer {
        self.value
    }

    pub fn ring(&self) -> PrimePower {
        PrimePower::unchecked(self.p, self.e)
    }

    pub fn modulus(&self) -> Integer {
        Integer::from(self.p).pow(self.e)
    }

    fn check(&self, other: &Self) -> Result<PrimePower> {
        if self.p != other.p || self.e != other.e {
            return Err(Error::RingMismatch(self.p, self.e, other.p, other.e));
        }
        Ok(self.ring())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let r = self.check(other)?;
        Ok(Self::in_ring(&r, Integer::from(&self.value + &other.value)))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let r = self.check(other)?;
        Ok(Self::in_ring(&r, Integer::from(&self.value - &other.value)))
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        let r = self.check(other)?;
        Ok(Self::in_ring(&r, Integer::from(&self.value * &other.value)))
    }

    pub fn neg(&self) -> Self {
        Self::in_ring(&self.ring(), Integer::from(-&self.value))
    }

    pub fn inv(&self) -> Result<Self> {
        let r = self.ring();
        Ok(Self::in_ring(&r, r.inv(&self.value)?))
    }

    pub fn pow(&self, n: u64) -> Self {
        let r = self.ring();
        Self::in_ring(&r, r.pow(&self.value, n))
    }

    pub fn is_unit(&self) -> bool {
        self.ring().is_unit(&self.value)
    }

    pub fn valuation(&self) -> u32 {
        self.ring().valuation(&self.value)
    }

    /// Image in `Z/p^f` for `f ≤ e`.
    pub fn reduce_to(&self, f: u32) -> Result<Self> {
        if f == 0 {
            return Err(Error::ZeroPrecision);
        }
        if f > self.e {
            return Err(Error::Invalid(format!("cannot raise precision from {} to {f}", self.e)));
        }
        Ok(Self::in_ring(&PrimePower::unchecked(self.p, f), self.value.clone()))
    }
}

impl fmt::Debug for ResidueElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} mod {}^{}", self.value, self.p, self.e)
    }
}

impl fmt::Display for ResidueElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_rings() {
        assert_eq!(PrimePower::new(2, 3), Err(Error::EvenPrime));
        assert_eq!(PrimePower::new(9, 1), Err(Error::NotPrime(9)));
        assert_eq!(PrimePower::new(5, 0), Err(Error::ZeroPrecision));
    }

    #[test]
    fn arithmetic_and_mismatch() {
        let a = ResidueElement::new(5, 2, 23).unwrap();
        let b = ResidueElement::new(5, 2, 7).unwrap();
        assert_eq!(a.add(&b).unwrap().value(), &5);
        assert_eq!(a.sub(&b).unwrap().value(), &16);
        assert_eq!(a.mul(&b).unwrap().value(), &(161 % 25));
        assert_eq!(b.neg().value(), &18);
        let c = ResidueElement::new(5, 1, 2).unwrap();
        assert!(matches!(a.add(&c), Err(Error::RingMismatch(..))));
        assert_eq!(a.reduce_to(1).unwrap().value(), &3);
        assert!(a.reduce_to(3).is_err());
        assert_eq!(ResidueElement::new(5, 2, 10).unwrap().valuation(), 1);
        assert!(ResidueElement::new(5, 2, 10).unwrap().inv().is_err());
        assert_eq!(ResidueElement::new(7, 2, -1).unwrap().value(), &48);
    }
}
