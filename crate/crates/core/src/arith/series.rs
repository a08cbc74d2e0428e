//! Truncated power series over `Z/p^e`.
//!
//! Two precision schedules are supported. In the uniform schedule every
//! coefficient is a residue mod `p^e`. In the graded schedule the series is in
//! a variable `x` that will only be evaluated at multiples of `p`, so the
//! coefficient of `x^h` only matters mod `p^(e−h)` and terms from `x^e` on are
//! dropped.
//!
//! Most of the pipeline works with "y-form" polynomials: uniform series in
//! `y` where `x = py`, so that the coefficient of `y^h` is divisible by `p^h`.
//! The free functions at the bottom of this module operate on those directly.

use rug::ops::Pow;
use rug::Integer;

use super::{Fraction, PrimePower, ResidueElement};
use crate::arith::Reduce;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    Uniform,
    Graded,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncatedSeries {
    p: u64,
    e: u32,
    schedule: Schedule,
    coeffs: Vec<Integer>,
}

impl TruncatedSeries {
    /// Builds a series, reducing each coefficient to its scheduled precision.
    /// Graded series are cut to at most `e` terms.
    pub fn new(p: u64, e: u32, schedule: Schedule, coeffs: Vec<Integer>) -> Result<Self> {
        PrimePower::new(p, e)?;
        Ok(Self::build(p, e, schedule, coeffs))
    }

    fn build(p: u64, e: u32, schedule: Schedule, mut coeffs: Vec<Integer>) -> Self {
        if schedule == Schedule::Graded {
            coeffs.truncate(e as usize);
        }
        let mut s = TruncatedSeries { p, e, schedule, coeffs };
        s.normalize();
        s
    }

    pub fn uniform(ring: &PrimePower, coeffs: Vec<Integer>) -> Self {
        Self::build(ring.p(), ring.e(), Schedule::Uniform, coeffs)
    }

    pub fn graded(ring: &PrimePower, coeffs: Vec<Integer>) -> Self {
        Self::build(ring.p(), ring.e(), Schedule::Graded, coeffs)
    }

    fn normalize(&mut self) {
        for h in 0..self.coeffs.len() {
            let m = Integer::from(self.p).pow(self.precision_of(h));
            self.coeffs[h].reduce_mod(&m);
        }
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    pub fn exponent(&self) -> u32 {
        self.e
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    pub fn coeffs(&self) -> &[Integer] {
        &self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// The exponent `k` such that coefficient `h` is meaningful mod `p^k`.
    pub fn precision_of(&self, h: usize) -> u32 {
        match self.schedule {
            Schedule::Uniform => self.e,
            Schedule::Graded => self.e.saturating_sub(h as u32),
        }
    }

    fn ring(&self) -> PrimePower {
        PrimePower::unchecked(self.p, self.e)
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.p != other.p || self.e != other.e {
            return Err(Error::RingMismatch(self.p, self.e, other.p, other.e));
        }
        if self.schedule != other.schedule {
            return Err(Error::Invalid("mixed precision schedules".into()));
        }
        Ok(())
    }

    pub fn truncate(&self, n: usize) -> Self {
        let mut c = self.coeffs.clone();
        c.truncate(n);
        Self::build(self.p, self.e, self.schedule, c)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let n = self.len().max(other.len());
        let c = (0..n)
            .map(|i| {
                let a = self.coeffs.get(i).cloned().unwrap_or_default();
                a + other.coeffs.get(i).cloned().unwrap_or_default()
            })
            .collect();
        Ok(Self::build(self.p, self.e, self.schedule, c))
    }

    /// Product truncated to the shorter operand's length (uniform) or to `e`
    /// terms (graded).
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let n = match self.schedule {
            Schedule::Uniform => self.len().min(other.len()),
            Schedule::Graded => (self.len() + other.len()).saturating_sub(1).min(self.e as usize),
        };
        let mut c = vec![Integer::new(); n];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                if i + j < n {
                    c[i + j] += Integer::from(a * b);
                }
            }
        }
        Ok(Self::build(self.p, self.e, self.schedule, c))
    }

    /// Evaluates the series. Graded series require `at ≡ 0 (mod p)`.
    pub fn eval(&self, at: &ResidueElement) -> Result<ResidueElement> {
        if at.prime() != self.p || at.exponent() != self.e {
            return Err(Error::RingMismatch(self.p, self.e, at.prime(), at.exponent()));
        }
        let ring = self.ring();
        if self.schedule == Schedule::Graded && ring.is_unit(at.value()) && !self.coeffs.is_empty() {
            return Err(Error::NotZeroModP(self.p));
        }
        Ok(ResidueElement::in_ring(&ring, eval(&ring, &self.coeffs, at.value())))
    }

    /// `s(y + offset)`.
    ///
    /// For the uniform schedule the offset must be a `p`-adic integer. For the
    /// graded schedule the offset must be divisible by `p`, so that the result
    /// still only needs the scheduled precision.
    pub fn compose_shift(&self, offset: &Fraction) -> Result<Self> {
        let ring = self.ring();
        if offset.den() % self.p as i64 == 0 {
            return Err(Error::DivisibleByP(self.p));
        }
        match self.schedule {
            Schedule::Uniform => {
                let o = ring.fraction(offset)?;
                Ok(Self::uniform(&ring, shift(&ring, &self.coeffs, &o)))
            }
            Schedule::Graded => {
                if offset.num() % self.p as i64 != 0 {
                    return Err(Error::NotZeroModP(self.p));
                }
                let scaled = self.to_scaled()?;
                let o = ring.fraction(&(*offset / self.p as i64))?;
                let shifted = Self::uniform(&ring, shift(&ring, &scaled.coeffs, &o));
                shifted.to_graded()
            }
        }
    }

    /// Graded series in `x` to the uniform series in `y = x/p`: coefficient
    /// `h` is multiplied by `p^h`.
    pub fn to_scaled(&self) -> Result<Self> {
        if self.schedule != Schedule::Graded {
            return Err(Error::Invalid("series is already uniform".into()));
        }
        let ring = self.ring();
        let c = self.coeffs.iter().enumerate().map(|(h, a)| a * ring.p_pow(h as u32)).collect();
        Ok(Self::uniform(&ring, c))
    }

    /// Inverse of [`to_scaled`](Self::to_scaled); each coefficient `h < e`
    /// must be divisible by `p^h`, and later coefficients must vanish.
    pub fn to_graded(&self) -> Result<Self> {
        if self.schedule != Schedule::Uniform {
            return Err(Error::Invalid("series is already graded".into()));
        }
        let ring = self.ring();
        let mut c = Vec::new();
        for (h, a) in self.coeffs.iter().enumerate() {
            if h >= self.e as usize {
                if *a != 0 {
                    return Err(Error::NotZeroModP(self.p));
                }
                continue;
            }
            let ph = ring.p_pow(h as u32);
            if !a.is_divisible(&ph) {
                return Err(Error::NotZeroModP(self.p));
            }
            c.push(Integer::from(a / &ph));
        }
        Ok(Self::graded(&ring, c))
    }
}

/// Horner evaluation mod `p^e`.
pub fn eval(ring: &PrimePower, a: &[Integer], y: &Integer) -> Integer {
    let mut acc = Integer::new();
    for c in a.iter().rev() {
        acc *= y;
        acc += c;
        acc.reduce_mod(ring.modulus());
    }
    acc
}

/// Product truncated to `n` terms.
pub fn mul_trunc(ring: &PrimePower, a: &[Integer], b: &[Integer], n: usize) -> Vec<Integer> {
    let mut c = vec![Integer::new(); n];
    for (i, x) in a.iter().enumerate().take(n) {
        if *x == 0 {
            continue;
        }
        for (j, y) in b.iter().enumerate().take(n - i) {
            c[i + j] += Integer::from(x * y);
        }
    }
    for v in c.iter_mut() {
        v.reduce_mod(ring.modulus());
    }
    c
}

/// `a(y + o)` for a residue `o`.
pub fn shift(ring: &PrimePower, a: &[Integer], o: &Integer) -> Vec<Integer> {
    // Horner in the ring of polynomials: acc ← acc·(y + o) + c.
    let n = a.len();
    let mut acc: Vec<Integer> = Vec::with_capacity(n);
    for c in a.iter().rev() {
        let mut next = vec![Integer::new(); acc.len() + 1];
        for (i, v) in acc.iter().enumerate() {
            next[i + 1] += v;
            next[i] += Integer::from(v * o);
        }
        next[0] += c;
        for v in next.iter_mut() {
            v.reduce_mod(ring.modulus());
        }
        acc = next;
    }
    acc.resize(n, Integer::new());
    acc
}

/// `a(−y)`.
pub fn negate_variable(ring: &PrimePower, a: &[Integer]) -> Vec<Integer> {
    a.iter()
        .enumerate()
        .map(|(h, c)| if h % 2 == 1 { ring.neg(c) } else { c.clone() })
        .collect()
}

/// `exp a` for a y-form polynomial with zero constant term, truncated to `n`
/// terms. Requires `n ≤ p`, so that `k!` is a unit for every `k < n`.
pub fn exp_poly(ring: &PrimePower, a: &[Integer], n: usize) -> Result<Vec<Integer>> {
    if a.first().is_some_and(|c| ring.reduce_ref(c) != 0) {
        return Err(Error::Invalid("exp of a series with nonzero constant term".into()));
    }
    if n as u64 > ring.p() {
        return Err(Error::PrimeTooSmall { p: ring.p(), e: n as u32 });
    }
    let mut out = vec![Integer::new(); n];
    if n == 0 {
        return Ok(out);
    }
    out[0] = Integer::from(1);
    let mut term = out.clone();
    for k in 1..n {
        term = mul_trunc(ring, &term, a, n);
        let inv = ring.inv(&Integer::from(k))?;
        for v in term.iter_mut() {
            *v = ring.mul(v, &inv);
        }
        for (o, t) in out.iter_mut().zip(&term) {
            *o += t;
        }
    }
    for v in out.iter_mut() {
        v.reduce_mod(ring.modulus());
    }
    Ok(out)
}

/// Multiplicative inverse of a series with unit constant term.
pub fn inverse(ring: &PrimePower, a: &[Integer], n: usize) -> Result<Vec<Integer>> {
    let a0 = a.first().ok_or(Error::NotUnit(ring.p()))?;
    let inv0 = ring.inv(a0)?;
    let mut out = vec![Integer::new(); n];
    if n == 0 {
        return Ok(out);
    }
    out[0] = inv0.clone();
    for k in 1..n {
        let mut s = Integer::new();
        for j in 1..=k.min(a.len().saturating_sub(1)) {
            s += Integer::from(&a[j] * &out[k - j]);
        }
        out[k] = ring.neg(&ring.mul(&ring.reduce(s), &inv0));
    }
    Ok(out)
}

pub fn scale(ring: &PrimePower, a: &[Integer], c: &Integer) -> Vec<Integer> {
    a.iter().map(|v| ring.mul(v, c)).collect()
}

pub fn add(ring: &PrimePower, a: &[Integer], b: &[Integer]) -> Vec<Integer> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| {
            let mut v = a.get(i).cloned().unwrap_or_default();
            if let Some(w) = b.get(i) {
                v += w;
            }
            ring.reduce(v)
        })
        .collect()
}

pub fn sub(ring: &PrimePower, a: &[Integer], b: &[Integer]) -> Vec<Integer> {
    let nb: Vec<Integer> = b.iter().map(|v| ring.neg(v)).collect();
    add(ring, a, &nb)
}
