//! Hypergeometric data and the combinatorics that depend only on `(α, β)`:
//! zigzag, weight, breakpoints, prime classes, range geometry per residue
//! class, and the p-power prefactors on each range.

use std::collections::BTreeMap;
use std::fmt;

use rug::Integer;

use crate::arith::poly::RatPoly;
use crate::arith::Fraction;
use crate::error::{Error, Result};
use crate::primes::gcd;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HypergeometricDatum {
    alpha: Vec<Fraction>,
    beta: Vec<Fraction>,
    d: u64,
    weight: i64,
    hodge_shift: Option<i64>,
    zero_beta: usize,
    breakpoints: Vec<Fraction>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrimeClass {
    Wild,
    Tame,
    Good,
    Small,
}

impl PrimeClass {
    /// The label used in output records; small primes are good primes.
    pub fn label(self) -> &'static str {
        match self {
            PrimeClass::Wild => "wild",
            PrimeClass::Tame => "tame",
            PrimeClass::Good | PrimeClass::Small => "good",
        }
    }
}

fn multiset(v: &[Fraction]) -> BTreeMap<Fraction, usize> {
    let mut m = BTreeMap::new();
    for x in v {
        *m.entry(*x).or_insert(0) += 1;
    }
    m
}

fn check_galois(v: &[Fraction]) -> Result<()> {
    let m = multiset(v);
    for (x, &k) in &m {
        let n = x.den() as u64;
        for a in 0..n {
            if gcd(a, n) != 1 {
                continue;
            }
            let y = Fraction::new(a as i64, n as i64)?;
            let ky = m.get(&y).copied().unwrap_or(0);
            if ky != k {
                return Err(Error::GaloisStabilityViolation(format!(
                    "{x} occurs {k} times but {y} occurs {ky} times"
                )));
            }
        }
    }
    Ok(())
}

/// Builds and checks a datum.
pub fn validate_datum(alpha: &[Fraction], beta: &[Fraction]) -> Result<HypergeometricDatum> {
    HypergeometricDatum::new(alpha.to_vec(), beta.to_vec())
}

impl HypergeometricDatum {
    pub fn new(mut alpha: Vec<Fraction>, mut beta: Vec<Fraction>) -> Result<Self> {
        if alpha.len() != beta.len() {
            return Err(Error::LengthMismatch(alpha.len(), beta.len()));
        }
        if alpha.is_empty() {
            return Err(Error::Invalid("empty datum".into()));
        }
        for x in alpha.iter().chain(&beta) {
            if *x < Fraction::zero() || *x >= Fraction::one() {
                return Err(Error::OutOfRange(x.to_string()));
            }
        }
        alpha.sort();
        beta.sort();
        if let Some(x) = alpha.iter().find(|x| beta.binary_search(x).is_ok()) {
            return Err(Error::DisjointnessViolation(x.to_string()));
        }
        check_galois(&alpha)?;
        check_galois(&beta)?;

        let d = alpha.iter().chain(&beta).map(|x| x.den() as u64).max().unwrap_or(1);
        let zero_beta = beta.iter().filter(|x| x.is_zero()).count();
        let mut datum = HypergeometricDatum {
            alpha,
            beta,
            d,
            weight: 0,
            hodge_shift: None,
            zero_beta,
            breakpoints: Vec::new(),
        };
        let zmax = datum.alpha.iter().map(|&x| datum.zigzag(x)).max().unwrap();
        let zmin = datum.beta.iter().map(|&x| datum.zigzag(x)).min().unwrap();
        datum.weight = zmax - zmin - 1;
        // Only integral once 0 ∉ α; such data get swapped before use.
        let twice = datum.weight + 1 - zero_beta as i64;
        if twice % 2 == 0 && twice >= 0 {
            datum.hodge_shift = Some(twice / 2);
        }
        let mut bp: Vec<Fraction> = datum.alpha.iter().chain(&datum.beta).copied().collect();
        bp.push(Fraction::zero());
        bp.push(Fraction::one());
        bp.sort();
        bp.dedup();
        datum.breakpoints = bp;
        Ok(datum)
    }

    /// Parses `"a1,a2;b1,b2"`, or JSON: either `[[[n,d],...],[[n,d],...]]` or
    /// `{"alpha": [[n,d],...], "beta": [[n,d],...]}`.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if t.starts_with('[') || t.starts_with('{') {
            return Self::parse_json(t);
        }
        let (a, b) = t
            .split_once(';')
            .ok_or_else(|| Error::Parse(format!("expected 'alpha;beta', got {t:?}")))?;
        Self::new(parse_tuple(a)?, parse_tuple(b)?)
    }

    fn parse_json(t: &str) -> Result<Self> {
        let v: serde_json::Value =
            serde_json::from_str(t).map_err(|e| Error::Parse(e.to_string()))?;
        let (a, b) = match &v {
            serde_json::Value::Array(parts) if parts.len() == 2 => (&parts[0], &parts[1]),
            serde_json::Value::Object(o) => (
                o.get("alpha").ok_or_else(|| Error::Parse("missing alpha".into()))?,
                o.get("beta").ok_or_else(|| Error::Parse("missing beta".into()))?,
            ),
            _ => return Err(Error::Parse("expected two arrays of [num, den] pairs".into())),
        };
        Self::new(json_tuple(a)?, json_tuple(b)?)
    }

    pub fn alpha(&self) -> &[Fraction] {
        &self.alpha
    }

    pub fn beta(&self) -> &[Fraction] {
        &self.beta
    }

    pub fn r(&self) -> usize {
        self.alpha.len()
    }

    /// Largest denominator among the entries.
    pub fn d(&self) -> u64 {
        self.d
    }

    pub fn weight(&self) -> i64 {
        self.weight
    }

    /// `D = (w + 1 − #{β = 0}) / 2`.
    pub fn hodge_shift(&self) -> i64 {
        let twice = self.weight + 1 - self.zero_beta as i64;
        self.hodge_shift
            .unwrap_or_else(|| panic!("w + 1 − #{{β = 0}} = {twice} is not a nonnegative even integer"))
    }

    pub fn zero_beta(&self) -> usize {
        self.zero_beta
    }

    /// `0 = γ_0 < γ_1 < … < γ_s = 1`.
    pub fn breakpoints(&self) -> &[Fraction] {
        &self.breakpoints
    }

    /// Number of ranges `s`.
    pub fn ranges(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Distinct denominators of the entries.
    pub fn denominators(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self.alpha.iter().chain(&self.beta).map(|x| x.den() as u64).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Default working precision `⌈(w+1)/2⌉`.
    pub fn default_precision(&self) -> u32 {
        ((self.weight + 2) / 2).max(1) as u32
    }

    /// `Z(x) = #{α ≤ x} − #{β ≤ x}`.
    pub fn zigzag(&self, x: Fraction) -> i64 {
        let a = self.alpha.iter().filter(|&&v| v <= x).count() as i64;
        let b = self.beta.iter().filter(|&&v| v <= x).count() as i64;
        a - b
    }

    pub fn contains_zero_alpha(&self) -> bool {
        self.alpha.first().is_some_and(|x| x.is_zero())
    }

    /// `(β, α)`; pair with `1/z`.
    pub fn swapped(&self) -> Result<Self> {
        Self::new(self.beta.clone(), self.alpha.clone())
    }

    fn mult_beta(&self, x: Fraction) -> usize {
        self.beta.iter().filter(|&&v| v == x).count()
    }

    /// `(η_m(α) − η_m(β), ξ_m(β))` straight from the definitions.
    pub fn eta_xi_direct(&self, p: u64, m: u64) -> (i64, i64) {
        let q = Fraction::new(m as i64, 1 - p as i64).unwrap();
        let eta = |v: &[Fraction]| {
            v.iter().fold(Fraction::zero(), |acc, &x| acc + ((x + q).fract() - x.fract()))
        };
        let diff = eta(&self.alpha) - eta(&self.beta);
        assert!(diff.is_integer());
        let hits = self.beta.iter().filter(|&&x| (x + q).is_zero()).count();
        (diff.num(), self.zero_beta as i64 - hits as i64)
    }
}

impl fmt::Display for HypergeometricDatum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[Fraction]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        write!(f, "{};{}", join(&self.alpha), join(&self.beta))
    }
}

/// Comma-separated fractions.
pub fn parse_tuple(s: &str) -> Result<Vec<Fraction>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(|t| t.parse()).collect()
}

fn json_tuple(v: &serde_json::Value) -> Result<Vec<Fraction>> {
    let bad = || Error::Parse(format!("expected [num, den] pairs, got {v}"));
    v.as_array()
        .ok_or_else(bad)?
        .iter()
        .map(|pair| {
            let a = pair.as_array().filter(|a| a.len() == 2).ok_or_else(bad)?;
            let n = a[0].as_i64().ok_or_else(bad)?;
            let d = a[1].as_i64().ok_or_else(bad)?;
            Fraction::new(n, d)
        })
        .collect()
}

fn divides(p: u64, n: i64) -> bool {
    n.unsigned_abs().is_multiple_of(p)
}

/// Classifies `p` for the datum at `z`. Good primes at or below
/// `max{e, d(d−1), 4r²}` come back as `Small`.
pub fn classify_prime(datum: &HypergeometricDatum, z: Fraction, p: u64, e: u32) -> PrimeClass {
    if datum.alpha.iter().chain(&datum.beta).any(|x| divides(p, x.den())) {
        return PrimeClass::Wild;
    }
    let z1 = z - Fraction::one();
    if divides(p, z.num()) || divides(p, z.den()) || divides(p, z1.num()) {
        return PrimeClass::Tame;
    }
    let r = datum.r() as u64;
    let bound = (e as u64).max(datum.d * (datum.d - 1)).max(4 * r * r);
    if p <= bound || p == 2 {
        PrimeClass::Small
    } else {
        PrimeClass::Good
    }
}

/// Everything about range `i` that depends only on `p mod b_i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RangeGeometry {
    pub i: usize,
    pub c: u64,
    pub a: i64,
    pub b: i64,
    pub r: i64,
    /// `γ_{i,c} = r_i / b_i`.
    pub gamma_c: Fraction,
    /// `h_c(γ, γ_i)` per entry of α, in order.
    pub h_alpha: Vec<Fraction>,
    pub h_beta: Vec<Fraction>,
    pub eps_alpha: Vec<bool>,
    pub eps_beta: Vec<bool>,
    /// Integer polynomials `f_{i,c}(k)`, `g_{i,c}(k)` (ascending) sharing the
    /// clearing constant `clear`.
    pub f: Vec<Integer>,
    pub g: Vec<Integer>,
    pub clear: Integer,
}

fn iota(x: Fraction, y: Fraction) -> i64 {
    (x <= y) as i64
}

fn product_poly(hs: &[Fraction]) -> RatPoly {
    hs.iter().fold(RatPoly::one(), |acc, h| acc.mul(&RatPoly::linear(h.to_rational())))
}

pub fn range_geometry(datum: &HypergeometricDatum, i: usize, c: u64) -> Result<RangeGeometry> {
    if i >= datum.ranges() {
        return Err(Error::Invalid(format!("range index {i} out of bounds")));
    }
    let gi = datum.breakpoints[i];
    let (a, b) = (gi.num(), gi.den());
    if b > 1 && gcd(c % b as u64, b as u64) != 1 {
        return Err(Error::Invalid(format!("{c} is not a unit mod {b}")));
    }
    let r = (a * (c as i64 - 1)).rem_euclid(b);
    let gamma_c = Fraction::new(r, b)?;
    let h = |x: &Fraction| *x - gi + Fraction::int(iota(*x, gi)) - gamma_c;
    let h_alpha: Vec<Fraction> = datum.alpha.iter().map(h).collect();
    let h_beta: Vec<Fraction> = datum.beta.iter().map(h).collect();
    let eps_alpha = datum.alpha.iter().map(|x| *x == gi).collect();
    let eps_beta = datum.beta.iter().map(|x| *x == gi).collect();
    let fa = product_poly(&h_alpha);
    let gb = product_poly(&h_beta);
    let clear = fa.denominator_lcm().lcm(&gb.denominator_lcm());
    Ok(RangeGeometry {
        i,
        c,
        a,
        b,
        r,
        gamma_c,
        f: fa.to_integer(&clear),
        g: gb.to_integer(&clear),
        h_alpha,
        h_beta,
        eps_alpha,
        eps_beta,
        clear,
    })
}

impl RangeGeometry {
    /// `m_i = ⌊γ_i (p−1)⌋`, computed as `(a_i(p−1) − r_i)/b_i`.
    pub fn m(&self, p: u64) -> u64 {
        let t = self.a * (p as i64 - 1) - self.r;
        debug_assert!(t % self.b == 0, "p = {p} is not in class {} mod {}", self.c, self.b);
        (t / self.b) as u64
    }

    /// `f` and `g` as rational polynomials without the clearing constant.
    pub fn f_rational(&self) -> RatPoly {
        product_poly(&self.h_alpha)
    }

    pub fn g_rational(&self) -> RatPoly {
        product_poly(&self.h_beta)
    }
}

/// Sign and precision of the p-power prefactors for range `i`, class `c`.
/// A zero sign means the prefactor vanishes mod `p^e`; the matching precision
/// is then reported as `e`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RangeConstants {
    pub sigma: i8,
    pub e_sigma: u32,
    pub tau: i8,
    pub e_tau: u32,
}

fn sign(n: i64) -> i8 {
    if n.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

fn constant(exponent: i64, s: i8, e: u32) -> (i8, u32) {
    assert!(exponent >= 0, "negative p-exponent {exponent}");
    if exponent >= e as i64 {
        (0, e)
    } else {
        (s, e - exponent as u32)
    }
}

pub fn range_constants(datum: &HypergeometricDatum, e: u32, i: usize, c: u64) -> RangeConstants {
    let bp = &datum.breakpoints;
    let gi = bp[i];
    let base = datum.hodge_shift() + datum.zero_beta as i64;
    let zi = datum.zigzag(gi);
    let (sigma, e_sigma) = constant(zi + base, sign(zi), e);
    let (tau, e_tau) = if i == 0 {
        constant(datum.hodge_shift(), 1, e)
    } else {
        let zp = datum.zigzag(bp[i - 1]);
        // b_i | p − 1 exactly when r_i = 0; then m_i/(p−1) hits γ_i itself.
        let b = gi.den();
        let r = (gi.num() * (c as i64 - 1)).rem_euclid(b);
        let hit = if r == 0 { datum.mult_beta(gi) as i64 } else { 0 };
        constant(zp + base - hit, sign(zp), e)
    };
    RangeConstants { sigma, e_sigma, tau, e_tau }
}

/// The five data of the timing table, in order.
pub fn timing_table_data() -> Vec<HypergeometricDatum> {
    [
        "1/4,3/4;1/6,5/6",
        "1/10,3/10,7/10,9/10;1/6,1/6,5/6,5/6",
        "1/4,1/3,2/3,3/4;1/6,1/6,5/6,5/6",
        "1/5,2/5,1/2,1/2,3/5,4/5;1/6,1/6,1/6,5/6,5/6,5/6",
        "1/5,1/3,2/5,1/2,1/2,3/5,2/3,4/5;1/6,1/6,1/6,1/6,5/6,5/6,5/6,5/6",
    ]
    .iter()
    .map(|s| HypergeometricDatum::parse(s).unwrap())
    .collect()
}
