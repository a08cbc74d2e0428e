//! The per-range pipeline: precomputed `P_{m_i}` and `c_{i,h}(p)` per prime,
//! one remainder forest per (range, residue class), and the final assembly
//! of `H_p mod p^e`.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use rug::ops::Pow;
use rug::{Integer, Rational};

use crate::arith::poly::RatPoly;
use crate::arith::series;
use crate::arith::padic::{exp_zero_mod_p, log_one_unit};
use crate::arith::{Fraction, IntegerMatrix, PolyMatrix, PrimePower, ResidueElement};
use crate::datum::{
    classify_prime, range_constants, range_geometry, HypergeometricDatum, PrimeClass, RangeConstants,
    RangeGeometry,
};
use crate::error::{Error, Result};
use crate::forest::{run_forest_with, ForestConfig, ForestJob, MatrixGenerator};
use crate::gamma::{GammaOptions, GammaStore};
use crate::oracle::{hp_direct_with, OracleConfig};
use crate::primes::{primes_up_to, unit_classes};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Amortized,
    Oracle,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Amortized => "amortized",
            Method::Oracle => "oracle",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceResult {
    pub p: u64,
    pub class: PrimeClass,
    pub e: u32,
    /// `H_p mod p^e`; absent for tame and wild primes.
    pub residue: Option<ResidueElement>,
    pub lifted: Option<Integer>,
    pub method: Option<Method>,
}

#[derive(Clone, Debug, Default)]
pub struct EngineOptions {
    /// Defaults to `⌈(w+1)/2⌉`.
    pub precision: Option<u32>,
    pub gamma: GammaOptions,
    pub forest: ForestConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PhaseTimings {
    pub gamma: Duration,
    pub precompute: Duration,
    pub forests: Duration,
}

#[derive(Clone, Debug)]
pub struct TraceRun {
    pub e: u32,
    pub results: Vec<TraceResult>,
    pub timings: PhaseTimings,
}

fn class_of(p: u64, b: i64) -> u64 {
    if b == 1 {
        0
    } else {
        p % b as u64
    }
}

fn check_datum(datum: &HypergeometricDatum) -> Result<()> {
    if datum.contains_zero_alpha() {
        return Err(Error::Invalid("datum has 0 in alpha; swap it first".into()));
    }
    Ok(())
}

fn geometry_for(datum: &HypergeometricDatum, i: usize, p: u64) -> Result<RangeGeometry> {
    let b = datum.breakpoints()[i].den();
    range_geometry(datum, i, class_of(p, b))
}

/// `m_{i+1} − m_i − 1`, the number of matrices in range `i` for `p`.
fn cut(datum: &HypergeometricDatum, geom: &RangeGeometry, p: u64) -> Result<usize> {
    let next = datum.breakpoints().get(geom.i + 1).copied().unwrap_or_else(Fraction::one);
    let hi = (next * (p as i64 - 1)).floor();
    let lo = geom.m(p) as i64;
    usize::try_from(hi - lo - 1).map_err(|_| Error::Invalid(format!("range {} is empty at p = {p}", geom.i)))
}

/// Denominators of every Γ_p argument the engine will ask for.
pub fn needed_denominators(datum: &HypergeometricDatum) -> Result<Vec<u64>> {
    let mut out: Vec<u64> = datum.denominators();
    for i in 0..datum.ranges() {
        let b = datum.breakpoints()[i].den() as u64;
        let classes = if b == 1 { vec![0] } else { unit_classes(b) };
        for c in classes {
            let g = range_geometry(datum, i, c)?;
            let hs = g.h_alpha.iter().zip(&g.eps_alpha).chain(g.h_beta.iter().zip(&g.eps_beta));
            for (h, &eps) in hs {
                out.push(h.fract().den() as u64);
                out.push((*h - Fraction::int(eps as i64)).fract().den() as u64);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// z-independent pieces for one prime and range: the Γ quotient at `m_i`
/// and the Γ quotient series feeding `c_{i,h}`.
#[derive(Clone, Debug)]
struct GammaParts {
    at_m: Integer,
    series: Vec<Integer>,
}

fn base_gamma(datum: &HypergeometricDatum, store: &GammaStore, ring: &PrimePower) -> Result<Integer> {
    let mut num = Integer::from(1);
    let mut den = Integer::from(1);
    for a in datum.alpha() {
        num = ring.mul(&num, &store.shifted(ring, *a)?.0);
    }
    for b in datum.beta() {
        den = ring.mul(&den, &store.shifted(ring, *b)?.0);
    }
    Ok(ring.mul(&num, &ring.inv(&den)?))
}

/// `∏_α Γ_p(py + a_α) / ∏_β Γ_p(py + a_β)` as `(C, S)` with the product
/// equal to `C·exp S(y)`.
fn gamma_quotient(
    store: &GammaStore,
    ring: &PrimePower,
    num: impl Iterator<Item = Fraction>,
    den: impl Iterator<Item = Fraction>,
) -> Result<(Integer, Vec<Integer>)> {
    let e = ring.e() as usize;
    let mut c = Integer::from(1);
    let mut s = vec![Integer::new(); e];
    for a in num {
        let (ca, sa) = store.shifted(ring, a)?;
        c = ring.mul(&c, &ca);
        s = series::add(ring, &s, &sa);
    }
    for a in den {
        let (ca, sa) = store.shifted(ring, a)?;
        c = ring.mul(&c, &ring.inv(&ca)?);
        s = series::sub(ring, &s, &sa);
    }
    Ok((c, s))
}

fn y0(ring: &PrimePower, geom: &RangeGeometry) -> Result<Integer> {
    // −γ_{i,c}/(1 − p)
    let one_minus_p = ring.from_i64(1 - ring.p() as i64);
    let g = ring.fraction(&geom.gamma_c)?;
    Ok(ring.neg(&ring.mul(&g, &ring.inv(&one_minus_p)?)))
}

fn gamma_parts(geom: &RangeGeometry, store: &GammaStore, ring: &PrimePower, base: &Integer) -> Result<GammaParts> {
    let e = ring.e() as usize;
    let inv_base = ring.inv(base)?;
    let shifted = |h: &[Fraction], eps: &[bool]| -> Vec<Fraction> {
        h.iter().zip(eps).map(|(h, &x)| *h - Fraction::int(x as i64)).collect()
    };
    let (c, s) = gamma_quotient(
        store,
        ring,
        shifted(&geom.h_alpha, &geom.eps_alpha).into_iter(),
        shifted(&geom.h_beta, &geom.eps_beta).into_iter(),
    )?;
    let at = series::eval(ring, &s, &y0(ring, geom)?);
    let at_m = ring.mul(&ring.mul(&c, &exp_zero_mod_p(ring, &at)?), &inv_base);

    let one = Fraction::one();
    let (c, s) = gamma_quotient(
        store,
        ring,
        geom.h_alpha.iter().map(|h| *h + one),
        geom.h_beta.iter().map(|h| *h + one),
    )?;
    let series = series::scale(ring, &series::exp_poly(ring, &s, e)?, &ring.mul(&c, &inv_base));
    Ok(GammaParts { at_m, series })
}

/// z-dependent data for one prime: `z mod p^e` and `ℓ = log z^(p−1)`.
struct ZParts {
    z: Integer,
    ell: Integer,
}

fn z_parts(ring: &PrimePower, z: &Fraction) -> Result<ZParts> {
    let zr = ring.fraction(z)?;
    let ell = log_one_unit(ring, &ring.pow(&zr, ring.p() - 1))?;
    Ok(ZParts { z: zr, ell })
}

fn pmi_from_parts(ring: &PrimePower, geom: &RangeGeometry, p: u64, gp: &GammaParts, zp: &ZParts) -> Result<Integer> {
    // [z]^{m_i} = z^{m_i}·exp((y0 − γ_i)ℓ)
    let gi = ring.fraction(&Fraction::new(geom.a, geom.b)?)?;
    let t = ring.mul(&ring.sub(&y0(ring, geom)?, &gi), &zp.ell);
    let lift = ring.mul(&ring.pow(&zp.z, geom.m(p)), &exp_zero_mod_p(ring, &t)?);
    Ok(ring.mul(&lift, &gp.at_m))
}

/// `c_{i,h}(p)` for `h < n`, each as an integer known mod `p^(e−h)`.
fn cih_from_parts(
    ring: &PrimePower,
    geom: &RangeGeometry,
    p: u64,
    gp: &GammaParts,
    zp: &ZParts,
    n: usize,
) -> Result<Vec<Integer>> {
    let e = ring.e() as usize;
    let gi = ring.fraction(&Fraction::new(geom.a, geom.b)?)?;
    let scalar = ring.mul(
        &ring.pow(&zp.z, geom.m(p) + 1),
        &exp_zero_mod_p(ring, &ring.neg(&ring.mul(&gi, &zp.ell)))?,
    );
    let lin = [Integer::new(), zp.ell.clone()];
    let g = series::mul_trunc(ring, &series::exp_poly(ring, &lin, e)?, &gp.series, e);
    let g = series::scale(ring, &g, &scalar);
    let mut out = Vec::with_capacity(n);
    for (h, v) in g.into_iter().take(n).enumerate() {
        let ph = ring.p_pow(h as u32);
        if !v.is_divisible(&ph) {
            return Err(Error::Invalid(format!("c_{{i,{h}}} numerator not divisible by p^{h}")));
        }
        out.push(v / ph);
    }
    Ok(out)
}

/// `P_{m_i} mod p^e` for the range `i` containing `p`'s class.
pub fn compute_pmi(
    datum: &HypergeometricDatum,
    z: &Fraction,
    i: usize,
    p: u64,
    e: u32,
    store: &GammaStore,
) -> Result<ResidueElement> {
    check_datum(datum)?;
    if e > store.e {
        return Err(Error::Invalid(format!("gamma tables are at precision {}, not {e}", store.e)));
    }
    if matches!(classify_prime(datum, *z, p, e), PrimeClass::Wild | PrimeClass::Tame) {
        return Err(Error::NonGoodPrime(p));
    }
    let ring = PrimePower::new(p, e)?;
    let geom = geometry_for(datum, i, p)?;
    let base = base_gamma(datum, store, &ring)?;
    let gp = gamma_parts(&geom, store, &ring, &base)?;
    let zp = z_parts(&ring, z)?;
    Ok(ResidueElement::in_ring(&ring, pmi_from_parts(&ring, &geom, p, &gp, &zp)?))
}

/// `c_{i,0..n−1}(p)`, with `c_{i,h}` reduced mod `p^(n−h)`.
pub fn compute_cih(
    datum: &HypergeometricDatum,
    z: &Fraction,
    i: usize,
    p: u64,
    n: u32,
    store: &GammaStore,
) -> Result<Vec<ResidueElement>> {
    check_datum(datum)?;
    if n == 0 || n > store.e {
        return Err(Error::Invalid(format!("series precision {n} outside 1..={}", store.e)));
    }
    if matches!(classify_prime(datum, *z, p, n), PrimeClass::Wild | PrimeClass::Tame) {
        return Err(Error::NonGoodPrime(p));
    }
    let ring = PrimePower::new(p, n)?;
    let geom = geometry_for(datum, i, p)?;
    let base = base_gamma(datum, store, &ring)?;
    let gp = gamma_parts(&geom, store, &ring, &base)?;
    let zp = z_parts(&ring, z)?;
    let cs = cih_from_parts(&ring, &geom, p, &gp, &zp, n as usize)?;
    cs.into_iter()
        .enumerate()
        .map(|(h, v)| ResidueElement::new(p, n - h as u32, v))
        .collect()
}

/// The polynomial matrix `A_{i,c}(k)` of one range and class, already
/// multiplied by a constant that makes every entry integral.
#[derive(Clone, Debug)]
pub struct RangeJob {
    pub i: usize,
    pub c: u64,
    pub e_sigma: u32,
    pub e_tau: u32,
    pub sigma: i8,
    pub tau: i8,
    pub geometry: RangeGeometry,
    pub matrix: PolyMatrix,
    /// The integer constant applied to every entry.
    pub scalar: Integer,
}

impl RangeJob {
    pub fn size(&self) -> usize {
        self.matrix.rows()
    }

    /// The last `e_i + 1` rows of the identity.
    pub fn row_selector(&self) -> IntegerMatrix {
        let n = self.e_sigma as usize;
        IntegerMatrix::row_selector(2 * n, n - 1, n + 1)
    }
}

fn binom_neg(mu: u32, t: u32) -> Integer {
    // binom(−μ, t) = (−1)^t binom(μ + t − 1, t)
    let v = Integer::from(Integer::binomial_u(mu + t - 1, t));
    if t % 2 == 1 {
        -v
    } else {
        v
    }
}

/// Multiply two polynomials in `x` with coefficients in `Q[k]`, mod `x^n`.
fn mul_x(a: &[RatPoly], b: &[RatPoly], n: usize) -> Vec<RatPoly> {
    let mut out = vec![RatPoly::default(); n];
    for (i, u) in a.iter().enumerate() {
        for (j, v) in b.iter().enumerate().take(n.saturating_sub(i)) {
            out[i + j] = out[i + j].add(&u.mul(v));
        }
    }
    out
}

pub fn build_range_matrix(
    datum: &HypergeometricDatum,
    i: usize,
    c: u64,
    e: u32,
    z: &Fraction,
) -> Result<RangeJob> {
    check_datum(datum)?;
    let geometry = range_geometry(datum, i, c)?;
    let RangeConstants { sigma, e_sigma, tau, e_tau } = range_constants(datum, e, i, c);
    let n = e_sigma as usize;
    let rat = |f: &Fraction| f.to_rational();
    let lin = |a: Rational| RatPoly::linear(a);
    let one = RatPoly::one();

    let mut distinct: Vec<(Fraction, u32)> = Vec::new();
    for h in &geometry.h_beta {
        match distinct.iter_mut().find(|(x, _)| x == h) {
            Some((_, m)) => *m += 1,
            None => distinct.push((*h, 1)),
        }
    }

    // s(k) = g(k)·rad(g)(k)^{n−1}
    let mut s = geometry.h_beta.iter().fold(one.clone(), |acc, h| acc.mul(&lin(rat(h))));
    for (h, _) in &distinct {
        s = s.mul(&lin(rat(h)).pow(n as u32 - 1));
    }

    // f(x + k)·s(k)/g(x + k), expanded in x
    let mut fx = vec![one.clone()];
    for h in &geometry.h_alpha {
        fx = mul_x(&fx, &[lin(rat(h)), one.clone()], n);
    }
    for (h, mu) in &distinct {
        let term: Vec<RatPoly> = (0..n as u32)
            .map(|t| lin(rat(h)).pow(n as u32 - 1 - t).scale(&Rational::from(binom_neg(*mu, t))))
            .collect();
        fx = mul_x(&fx, &term, n);
    }
    fx.resize(n, RatPoly::default());

    let zf = Rational::from(z.num());
    let zg = Rational::from(z.den());
    let sig = Rational::from(sigma as i64);
    let zs = s.scale(&zg);
    let shift = lin(-rat(&geometry.gamma_c));

    let mut entries: Vec<((usize, usize), RatPoly)> = Vec::new();
    for j in 0..n {
        entries.push(((j, j), zs.clone()));
        entries.push(((n + j, j), zs.mul(&shift.pow((n - 1 - j) as u32)).scale(&sig)));
        for h2 in 0..=j {
            entries.push(((n + j, n + h2), fx[j - h2].scale(&zf)));
        }
    }
    let scalar = entries.iter().fold(Integer::from(1), |acc, (_, p)| acc.lcm(&p.denominator_lcm()));
    let mut matrix = PolyMatrix::new(2 * n, 2 * n);
    for ((r, c), p) in entries {
        matrix.set(r, c, p.to_integer(&scalar));
    }
    Ok(RangeJob { i, c, e_sigma, e_tau, sigma, tau, geometry, matrix, scalar })
}

/// Products `V·A(1)⋯A(K_p) mod p^{e_i}` for every prime of the job's class.
pub fn run_range(
    datum: &HypergeometricDatum,
    job: &RangeJob,
    primes: &[u64],
    cfg: &ForestConfig,
) -> Result<BTreeMap<u64, IntegerMatrix>> {
    if primes.is_empty() {
        return Ok(BTreeMap::new());
    }
    let cuts = primes.iter().map(|&p| cut(datum, &job.geometry, p)).collect::<Result<Vec<_>>>()?;
    let len = cuts.iter().copied().max().unwrap_or(0);
    let generator = MatrixGenerator::Polynomial { matrix: job.matrix.clone(), start: 1, len };
    let fj = ForestJob::new(generator, primes.to_vec(), cuts, job.e_sigma).with_row_selector(job.row_selector());
    Ok(run_forest_with(&fj, cfg)?.into_map())
}

/// `(v Σ wᵀ)/Δ mod p^n` from the selected rows of one range product.
fn range_sum(p: u64, n: u32, cs: &[Integer], vs: &IntegerMatrix) -> Result<Integer> {
    let ring = PrimePower::unchecked(p, n);
    let n = n as usize;
    let delta = ring.reduce_ref(vs.get(0, n - 1));
    let inv_delta = ring.inv(&delta).map_err(|_| Error::DenominatorCollision(p))?;
    let q = ring.mul(&Integer::from(p), &ring.inv(&ring.from_i64(1 - p as i64))?);
    let w: Vec<Integer> = (0..n).map(|h2| ring.pow(&q, (n - 1 - h2) as u64)).collect();
    let mut acc = Integer::new();
    for h1 in 0..n {
        let mut row = Integer::new();
        for (h2, wv) in w.iter().enumerate().take(h1 + 1) {
            row += Integer::from(vs.get(1 + h1, h2) * wv);
        }
        acc += ring.reduce(row) * &cs[n - 1 - h1];
    }
    Ok(ring.mul(&ring.reduce(acc), &inv_delta))
}

/// Combine the per-range pieces for one prime into `H_p mod p^e`.
fn assemble(
    datum: &HypergeometricDatum,
    ring: &PrimePower,
    jobs: &BTreeMap<(usize, u64), RangeJob>,
    parts: &[Option<GammaParts>],
    products: &BTreeMap<(usize, u64), BTreeMap<u64, IntegerMatrix>>,
    zp: &ZParts,
) -> Result<ResidueElement> {
    let p = ring.p();
    let e = ring.e();
    let mut total = Integer::new();
    for (i, gp) in parts.iter().enumerate() {
        let Some(gp) = gp else { continue };
        let key = (i, class_of(p, datum.breakpoints()[i].den()));
        let job = &jobs[&key];
        if job.tau != 0 {
            let pm = pmi_from_parts(ring, &job.geometry, p, gp, zp)?;
            let t = ring.mul(&pm, &ring.p_pow(e - job.e_tau));
            total += if job.tau > 0 { t } else { -t };
        }
        if job.sigma != 0 {
            let n = job.e_sigma;
            let cs = cih_from_parts(ring, &job.geometry, p, gp, zp, n as usize)?;
            let vs = products
                .get(&key)
                .and_then(|m| m.get(&p))
                .ok_or_else(|| Error::Invalid(format!("missing range product for p = {p}")))?;
            total += range_sum(p, n, &cs, vs)? * ring.p_pow(e - n);
        }
    }
    let h = ring.mul(&ring.reduce(total), &ring.inv(&ring.from_i64(1 - p as i64))?);
    Ok(ResidueElement::in_ring(ring, h))
}

/// The unique integer `t ≡ residue` with `|t| ≤ r·p^{w/2}`.
///
/// `None` when `e < ⌈(w+1)/2⌉` or nothing fits; `AmbiguousLift` when two
/// candidates fit.
pub fn lift_trace(residue: &ResidueElement, r: usize, w: i64) -> Result<Option<Integer>> {
    let e = residue.exponent() as i64;
    if w < 0 || e < (w + 2) / 2 {
        return Ok(None);
    }
    let p = Integer::from(residue.prime());
    let m = residue.modulus();
    let bound_sq = Integer::from(r * r) * p.pow(w as u32);
    let bound = bound_sq.sqrt();
    let t0 = residue.value().clone();
    // smallest t ≡ t0 with t ≥ −bound
    let k = Integer::from(&t0 + &bound).div_rem_floor(m.clone()).0;
    let mut t = t0 - k * &m;
    let mut found: Option<Integer> = None;
    while t <= bound {
        if found.is_some() {
            return Err(Error::AmbiguousLift);
        }
        found = Some(t.clone());
        t += &m;
    }
    Ok(found)
}

/// Smallest `e' ≥ e` with `p^{2e'} > 4r²p^w`, so that a lift is unique.
fn unique_lift_precision(p: u64, r: usize, w: i64, e: u32) -> u32 {
    let target = Integer::from(4 * r * r) * Integer::from(p).pow(w.max(0) as u32);
    let mut e2 = e;
    while Integer::from(p).pow(2 * e2) <= target {
        e2 += 1;
    }
    e2
}

fn small_prime_result(datum: &HypergeometricDatum, z: &Fraction, p: u64, e: u32) -> Result<TraceResult> {
    let (r, w) = (datum.r(), datum.weight());
    let lifting = e >= datum.default_precision();
    let mut e2 = if lifting { unique_lift_precision(p, r, w, e) } else { e };
    // The oracle's word arithmetic needs p^e < 2^62.
    if (p as f64).powi(e2 as i32) >= (1u64 << 62) as f64 {
        e2 = e;
    }
    let cfg = OracleConfig::default();
    let wide = hp_direct_with(&cfg, datum, z, p, e2)?;
    let lifted = if lifting { lift_trace(&wide, r, w).unwrap_or(None) } else { None };
    Ok(TraceResult {
        p,
        class: PrimeClass::Small,
        e,
        residue: Some(wide.reduce_to(e)?),
        lifted,
        method: Some(Method::Oracle),
    })
}

pub fn hypergeometric_traces(
    datum: &HypergeometricDatum,
    z: &Fraction,
    limit: u64,
    e: Option<u32>,
) -> Result<Vec<TraceResult>> {
    let opts = EngineOptions { precision: e, ..Default::default() };
    Ok(run_traces(datum, z, limit, &opts)?.results)
}

pub fn run_traces(datum: &HypergeometricDatum, z: &Fraction, limit: u64, opts: &EngineOptions) -> Result<TraceRun> {
    if z.is_zero() || *z == Fraction::one() {
        return Err(Error::InvalidZ);
    }
    if datum.contains_zero_alpha() {
        return run_traces(&datum.swapped()?, &z.recip()?, limit, opts);
    }
    let e = opts.precision.unwrap_or_else(|| datum.default_precision());
    if e == 0 {
        return Err(Error::ZeroPrecision);
    }
    let mut timings = PhaseTimings::default();
    let primes = primes_up_to(limit);
    let classes: Vec<PrimeClass> = primes.iter().map(|&p| classify_prime(datum, *z, p, e)).collect();
    let good: Vec<u64> =
        primes.iter().zip(&classes).filter(|(_, c)| **c == PrimeClass::Good).map(|(p, _)| *p).collect();

    let mut amortized: BTreeMap<u64, ResidueElement> = BTreeMap::new();
    if !good.is_empty() {
        let t = Instant::now();
        let store = GammaStore::build(&needed_denominators(datum)?, e, limit, &opts.gamma)?;
        timings.gamma = t.elapsed();

        // Phase 2: everything that does not depend on z.
        let t = Instant::now();
        let mut jobs: BTreeMap<(usize, u64), RangeJob> = BTreeMap::new();
        for i in 0..datum.ranges() {
            let b = datum.breakpoints()[i].den() as u64;
            for c in if b == 1 { vec![0] } else { unit_classes(b) } {
                jobs.insert((i, c), build_range_matrix(datum, i, c, e, z)?);
            }
        }
        let parts: Vec<Vec<Option<GammaParts>>> = good
            .par_iter()
            .map(|&p| {
                let ring = PrimePower::unchecked(p, e);
                let base = base_gamma(datum, &store, &ring)?;
                (0..datum.ranges())
                    .map(|i| {
                        let job = &jobs[&(i, class_of(p, datum.breakpoints()[i].den()))];
                        if job.sigma == 0 && job.tau == 0 {
                            return Ok(None);
                        }
                        gamma_parts(&job.geometry, &store, &ring, &base).map(Some)
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        timings.precompute = t.elapsed();

        // Phase 3: forests, then z-dependent assembly.
        let t = Instant::now();
        let active: Vec<(&(usize, u64), &RangeJob)> = jobs.iter().filter(|(_, j)| j.sigma != 0).collect();
        let products: BTreeMap<(usize, u64), BTreeMap<u64, IntegerMatrix>> = active
            .par_iter()
            .map(|(key, job)| {
                let b = datum.breakpoints()[job.i].den();
                let ps: Vec<u64> = good.iter().copied().filter(|&p| class_of(p, b) == job.c).collect();
                Ok((**key, run_range(datum, job, &ps, &opts.forest)?))
            })
            .collect::<Result<_>>()?;
        let residues: Vec<ResidueElement> = good
            .par_iter()
            .zip(parts.par_iter())
            .map(|(&p, pp)| {
                let ring = PrimePower::unchecked(p, e);
                let zp = z_parts(&ring, z)?;
                assemble(datum, &ring, &jobs, pp, &products, &zp)
            })
            .collect::<Result<_>>()?;
        timings.forests = t.elapsed();
        amortized = good.iter().copied().zip(residues).collect();
    }

    let (r, w) = (datum.r(), datum.weight());
    let results = primes
        .par_iter()
        .zip(classes.par_iter())
        .map(|(&p, &class)| match class {
            PrimeClass::Wild | PrimeClass::Tame => {
                Ok(TraceResult { p, class, e, residue: None, lifted: None, method: None })
            }
            PrimeClass::Small => small_prime_result(datum, z, p, e),
            PrimeClass::Good => {
                let residue = amortized[&p].clone();
                let lifted = lift_trace(&residue, r, w)?;
                Ok(TraceResult { p, class, e, residue: Some(residue), lifted, method: Some(Method::Amortized) })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TraceRun { e, results, timings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datum::timing_table_data;
    use crate::oracle::{hp_direct, summand_direct};

    fn fr(s: &str) -> Fraction {
        s.parse().unwrap()
    }

    fn check_against_oracle(datum: &HypergeometricDatum, z: Fraction, limit: u64, e: Option<u32>) {
        let res = hypergeometric_traces(datum, &z, limit, e).unwrap();
        for t in res.iter().filter(|t| t.class == PrimeClass::Good) {
            let want = hp_direct(datum, &z, t.p, t.e).unwrap();
            assert_eq!(t.residue.as_ref(), Some(&want), "{datum} p = {}", t.p);
        }
    }

    #[test]
    fn table_data_match_oracle() {
        let z = fr("314/159");
        for d in timing_table_data() {
            check_against_oracle(&d, z, 300, None);
        }
    }

    #[test]
    fn higher_precision_matches_oracle() {
        let d = HypergeometricDatum::parse("1/4,3/4;1/6,5/6").unwrap();
        for e in 2..=4 {
            check_against_oracle(&d, fr("314/159"), 200, Some(e));
        }
        let d = HypergeometricDatum::parse("1/4,1/3,2/3,3/4;1/6,1/6,5/6,5/6").unwrap();
        check_against_oracle(&d, fr("-7/3"), 200, Some(3));
    }

    #[test]
    fn pmi_matches_oracle() {
        let d = HypergeometricDatum::parse("1/4,3/4;1/6,5/6").unwrap();
        let z = fr("2");
        let store = GammaStore::build(&needed_denominators(&d).unwrap(), 2, 100, &GammaOptions::default()).unwrap();
        for (p, e) in [(13, 1), (37, 2), (97, 2)] {
            for i in 0..d.ranges() {
                let g = geometry_for(&d, i, p).unwrap();
                let want = summand_direct(&d, &z, p, e, g.m(p)).unwrap();
                assert_eq!(compute_pmi(&d, &z, i, p, e, &store).unwrap(), want, "p = {p}, i = {i}");
            }
        }
        assert_eq!(compute_pmi(&d, &z, 0, 41, 2, &store).unwrap().value(), &Integer::from(1));
    }

    #[test]
    fn cih_substitution_matches_oracle() {
        let d = HypergeometricDatum::parse("1/4,1/3,2/3,3/4;1/6,1/6,5/6,5/6").unwrap();
        let z = fr("314/159");
        let store = GammaStore::build(&needed_denominators(&d).unwrap(), 2, 200, &GammaOptions::default()).unwrap();
        for p in [37u64, 61, 113] {
            let ring = PrimePower::new(p, 2).unwrap();
            for i in 0..d.ranges() {
                let g = geometry_for(&d, i, p).unwrap();
                let cs = compute_cih(&d, &z, i, p, 2, &store).unwrap();
                // Σ_h c_h x^h·Φ_k(x) at x = (k − γ)p/(1−p), k = 1, 2
                let x = |k: i64| {
                    let v = Fraction::int(k) - g.gamma_c;
                    ring.mul(&ring.fraction(&v).unwrap(), &ring.fraction(&Fraction::new(p as i64, 1 - p as i64).unwrap()).unwrap())
                };
                let at = |k: i64| {
                    let xv = x(k);
                    ring.add(cs[0].value(), &ring.mul(cs[1].value(), &xv))
                };
                let want1 = summand_direct(&d, &z, p, 2, g.m(p) + 1).unwrap();
                assert_eq!(at(1), *want1.value(), "p = {p}, i = {i}");
                // one step of z f/g at x + 1
                let xv = x(2);
                let mut ratio = ring.fraction(&z).unwrap();
                for h in &g.h_alpha {
                    ratio = ring.mul(&ratio, &ring.add(&xv, &ring.fraction(&(*h + Fraction::int(1))).unwrap()));
                }
                for h in &g.h_beta {
                    let t = ring.add(&xv, &ring.fraction(&(*h + Fraction::int(1))).unwrap());
                    ratio = ring.mul(&ratio, &ring.inv(&t).unwrap());
                }
                let want2 = summand_direct(&d, &z, p, 2, g.m(p) + 2).unwrap();
                assert_eq!(ring.mul(&at(2), &ratio), *want2.value(), "p = {p}, i = {i}");
            }
        }
    }

    #[test]
    fn two_by_two_matrix_shape() {
        let d = HypergeometricDatum::parse("1/4,3/4;1/6,5/6").unwrap();
        let job = build_range_matrix(&d, 1, 1, 1, &fr("2")).unwrap();
        assert_eq!(job.size(), 2);
        let m = job.matrix.eval(&Integer::from(5));
        // [[z_g g, 0], [σ̄ z_g g, z_f f]] up to the common scalar
        assert_eq!(*m.get(0, 1), 0);
        assert_eq!(*m.get(1, 0), Integer::from(job.sigma as i64) * m.get(0, 0));
        let g = &job.geometry;
        let k = Fraction::int(5);
        let f: Fraction = g.h_alpha.iter().fold(Fraction::one(), |a, h| a * (k + *h));
        let gg: Fraction = g.h_beta.iter().fold(Fraction::one(), |a, h| a * (k + *h));
        let ratio = rug::Rational::from((m.get(1, 1).clone(), m.get(0, 0).clone()));
        assert_eq!(ratio, (f * Fraction::int(2) / gg).to_rational());
    }

    #[test]
    fn lift_examples() {
        let r = ResidueElement::new(13, 1, 12).unwrap();
        assert_eq!(lift_trace(&r, 2, 1).unwrap(), Some(Integer::from(-1)));
        let r = ResidueElement::new(101, 2, 0).unwrap();
        assert_eq!(lift_trace(&r, 4, 3).unwrap(), Some(Integer::new()));
        let r = ResidueElement::new(11, 1, 5).unwrap();
        assert_eq!(lift_trace(&r, 2, 1), Err(Error::AmbiguousLift));
        // precision too low for the weight
        let r = ResidueElement::new(101, 1, 5).unwrap();
        assert_eq!(lift_trace(&r, 4, 3).unwrap(), None);
    }

    #[test]
    fn only_classification_below_first_good_prime() {
        let d = HypergeometricDatum::parse("1/4,3/4;1/6,5/6").unwrap();
        let res = hypergeometric_traces(&d, &fr("314/159"), 3, None).unwrap();
        assert_eq!(res.len(), 2);
        assert!(res.iter().all(|t| t.residue.is_none()));
    }
}
