use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use rug::Integer;

use crate::arith::Reduce;
use crate::error::{Error, Result};

/// An exact rational number in lowest terms with positive denominator.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fraction(Ratio<i64>);

impl Fraction {
    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den == 0 {
            return Err(Error::Parse(format!("zero denominator in {num}/{den}")));
        }
        Ok(Fraction(Ratio::new(num, den)))
    }

    pub fn int(n: i64) -> Self {
        Fraction(Ratio::from_integer(n))
    }

    pub fn zero() -> Self {
        Fraction(Ratio::zero())
    }

    pub fn one() -> Self {
        Fraction(Ratio::one())
    }

    pub fn num(&self) -> i64 {
        *self.0.numer()
    }

    pub fn den(&self) -> i64 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn floor(&self) -> i64 {
        num_integer::Integer::div_floor(&self.num(), &self.den())
    }

    pub fn ceil(&self) -> i64 {
        -num_integer::Integer::div_floor(&-self.num(), &self.den())
    }

    /// `{x} = x − ⌊x⌋ ∈ [0, 1)`.
    pub fn fract(&self) -> Self {
        *self - Fraction::int(self.floor())
    }

    pub fn abs(&self) -> Self {
        Fraction(self.0.abs())
    }

    pub fn recip(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::Invalid("reciprocal of zero".into()));
        }
        Ok(Fraction(self.0.recip()))
    }

    /// True when `p` divides neither numerator nor denominator.
    pub fn is_p_unit(&self, p: u64) -> bool {
        let p = p as i64;
        self.num() % p != 0 && self.den() % p != 0
    }

    /// The image of `self` in `Z/m`, provided the denominator is invertible.
    pub fn residue(&self, m: &Integer) -> Option<Integer> {
        let den = Integer::from(self.den());
        let inv = den.invert(m).ok()?;
        let mut v = inv * self.num();
        v.reduce_mod(m);
        Some(v)
    }

    pub fn to_rational(&self) -> rug::Rational {
        rug::Rational::from((self.num(), self.den()))
    }
}

impl Default for Fraction {
    fn default() -> Self {
        Fraction::zero()
    }
}

impl From<i64> for Fraction {
    fn from(n: i64) -> Self {
        Fraction::int(n)
    }
}

impl Ord for Fraction {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.cmp(&other.0)
    }
}

impl PartialOrd for Fraction {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

macro_rules! binop {
    ($tr:ident, $f:ident) => {
        impl $tr for Fraction {
            type Output = Fraction;
            fn $f(self, rhs: Fraction) -> Fraction {
                Fraction(self.0.$f(rhs.0))
            }
        }
        impl $tr<i64> for Fraction {
            type Output = Fraction;
            fn $f(self, rhs: i64) -> Fraction {
                Fraction(self.0.$f(Ratio::from_integer(rhs)))
            }
        }
    };
}
binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

impl Neg for Fraction {
    type Output = Fraction;
    fn neg(self) -> Fraction {
        Fraction(-self.0)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den() == 1 {
            write!(f, "{}", self.num())
        } else {
            write!(f, "{}/{}", self.num(), self.den())
        }
    }
}

impl fmt::Debug for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Fraction {
    type Err = Error;

    /// Accepts `a/b` (whitespace allowed around each part) or a bare integer.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("not a fraction: {s:?}"));
        let mut parts = s.split('/');
        let num: i64 = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        let den: i64 = match parts.next() {
            Some(d) => d.trim().parse().map_err(|_| bad())?,
            None => 1,
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Fraction::new(num, den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_reduce() {
        let f: Fraction = " 6 / 8 ".parse().unwrap();
        assert_eq!((f.num(), f.den()), (3, 4));
        let g: Fraction = "-5".parse().unwrap();
        assert_eq!(g, Fraction::int(-5));
        assert!("1/0".parse::<Fraction>().is_err());
        assert!("1/2/3".parse::<Fraction>().is_err());
        assert!("x".parse::<Fraction>().is_err());
    }

    #[test]
    fn floor_ceil_fract() {
        let x = Fraction::new(-7, 3).unwrap();
        assert_eq!(x.floor(), -3);
        assert_eq!(x.ceil(), -2);
        assert_eq!(x.fract(), Fraction::new(2, 3).unwrap());
        assert_eq!(Fraction::int(4).fract(), Fraction::zero());
    }

    #[test]
    fn residues() {
        let half = Fraction::new(1, 2).unwrap();
        assert_eq!(half.residue(&Integer::from(25)).unwrap(), 13);
        assert!(half.residue(&Integer::from(4)).is_none());
        let neg = Fraction::new(-1, 3).unwrap();
        assert_eq!(neg.residue(&Integer::from(7)).unwrap(), 2);
    }
}
