//! Expansions of `Γ_p` near rational points, for all primes up to a bound at
//! once.
//!
//! Everything is built from remainder forests over the matrices
//! `[[k^j, 0], [1, k^j]]`, whose products up to `⌈γp⌉ − 1` carry both the
//! factorial power and the harmonic sum `H_{j,γ}(p) = Σ_{i<⌈γp⌉} i^{−j}`.
//! From those, `log Γ_p(py)` is solved for as a polynomial in `y`, and then
//! for each `γ = c/d` the pair `(c_γ, s_γ)` with
//! `Γ_p(py + γ) ≡ c_γ · exp s_γ(y) mod p^e`.
//!
//! Series are stored in y-form: coefficient `h` of `s_γ` is divisible by
//! `p^h`, and `s_γ(0) = 0`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rug::ops::Pow;
use rug::Integer;
use sha2::{Digest, Sha256};

use crate::arith::padic::{exp_zero_mod_p, log_one_unit};
use crate::arith::series::{self, negate_variable, shift};
use crate::arith::{Fraction, IntegerMatrix, PolyMatrix, PrimePower, ResidueElement, Schedule, TruncatedSeries};
use crate::error::{Error, Result};
use crate::forest::{read_integer, read_u32, read_u64, run_forest, write_integer, ForestJob, MatrixGenerator};
use crate::primes::{primes_up_to, unit_classes};

/// `H_{j,γ}(p) mod p^{e−j}` for a range of primes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HarmonicTable {
    pub j: u32,
    pub gamma: Fraction,
    pub values: BTreeMap<u64, ResidueElement>,
}

/// Coefficients `w_1, …, w_{e−1}` of `log Γ_p(py) = Σ w_j y^j mod p^e`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogGammaAtZero {
    pub p: u64,
    pub e: u32,
    pub coeffs: Vec<Integer>,
}

/// `Γ_p(py + γ) ≡ c · exp s(y) mod p^e` for integer `y`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GammaExpansion {
    pub gamma: Fraction,
    pub p: u64,
    pub e: u32,
    pub constant: Integer,
    /// y-form, length `e`, zero constant term.
    pub series: Vec<Integer>,
}

impl GammaExpansion {
    pub fn constant(&self) -> ResidueElement {
        ResidueElement::in_ring(&PrimePower::unchecked(self.p, self.e), self.constant.clone())
    }

    /// `s` as a graded series in `x = py`.
    pub fn series_in_x(&self) -> TruncatedSeries {
        let ring = PrimePower::unchecked(self.p, self.e);
        let scaled = TruncatedSeries::uniform(&ring, self.series.clone());
        debug_assert_eq!(scaled.schedule(), Schedule::Uniform);
        scaled.to_graded().expect("coefficient h is divisible by p^h")
    }
}

/// `Γ_p(t + γ) mod p^e` for `t ≡ 0 mod p`.
pub fn eval_gamma(exp: &GammaExpansion, t: &ResidueElement) -> Result<ResidueElement> {
    if t.prime() != exp.p || t.exponent() < exp.e {
        return Err(Error::RingMismatch(t.prime(), t.exponent(), exp.p, exp.e));
    }
    let ring = PrimePower::unchecked(exp.p, exp.e);
    let tv = ring.reduce_ref(t.value());
    if !tv.is_divisible(&Integer::from(exp.p)) {
        return Err(Error::NotZeroModP(exp.p));
    }
    // s(y) at y = t/p: substitute coefficient by coefficient.
    let p = Integer::from(exp.p);
    let y_scaled: Vec<Integer> = exp
        .series
        .iter()
        .enumerate()
        .map(|(h, c)| {
            let ph = p.clone().pow(h as u32);
            let q = Integer::from(c / &ph);
            ring.mul(&q, &ring.pow(&tv, h as u64))
        })
        .collect();
    let s = y_scaled.iter().fold(Integer::new(), |acc, v| acc + v);
    let v = ring.mul(&exp.constant, &exp_zero_mod_p(&ring, &ring.reduce(s))?);
    Ok(ResidueElement::in_ring(&ring, v))
}

fn harmonic_generator(j: u32, len: usize) -> MatrixGenerator {
    let mut kj = vec![Integer::new(); j as usize + 1];
    kj[j as usize] = Integer::from(1);
    let mut m = PolyMatrix::new(2, 2);
    m.set(0, 0, kj.clone());
    m.set(1, 0, vec![Integer::from(1)]);
    m.set(1, 1, kj);
    MatrixGenerator::Polynomial { matrix: m, start: 1, len }
}

/// `⌈bp/d⌉ − 1`.
fn cut(b: u64, d: u64, p: u64) -> usize {
    ((b * p).div_ceil(d) - 1) as usize
}

/// For each prime, `(∏ k^j, Σ_k ∏_{i≠k} i^j)` over `k < ⌈(b/d)p⌉`, mod `p^prec`.
fn harmonic_forest(b: u64, d: u64, j: u32, prec: u32, primes: &[u64]) -> Result<Vec<(Integer, Integer)>> {
    if primes.is_empty() {
        return Ok(Vec::new());
    }
    let cuts: Vec<usize> = primes.iter().map(|&p| cut(b, d, p)).collect();
    let len = *cuts.iter().max().unwrap();
    let job = ForestJob::new(harmonic_generator(j, len), primes.to_vec(), cuts, prec)
        .with_row_selector(IntegerMatrix::row_selector(2, 1, 1));
    let res = run_forest(&job)?;
    Ok(primes
        .iter()
        .map(|p| {
            let s = res.get(*p).expect("every prime has a result");
            (s.get(0, 1).clone(), s.get(0, 0).clone())
        })
        .collect())
}

fn check_gamma(gamma: &Fraction) -> Result<()> {
    if *gamma <= Fraction::zero() || *gamma > Fraction::one() {
        return Err(Error::OutOfRange(gamma.to_string()));
    }
    Ok(())
}

fn table_primes(e: u32, d: u64, limit: u64) -> Vec<u64> {
    primes_up_to(limit)
        .into_iter()
        .filter(|&p| p > 2 && p > e as u64 && p > d && !d.is_multiple_of(p))
        .collect()
}

/// `(⌈γp⌉ − 1)! mod p^e` for the odd primes `p` in `(max(e, d), X]` prime to `d`,
/// where `d` is the denominator of `γ`.
pub fn factorial_batch(gamma: Fraction, e: u32, limit: u64) -> Result<BTreeMap<u64, ResidueElement>> {
    check_gamma(&gamma)?;
    let (b, d) = (gamma.num() as u64, gamma.den() as u64);
    let primes = table_primes(e, d, limit);
    let rows = harmonic_forest(b, d, 1, e, &primes)?;
    Ok(primes
        .iter()
        .zip(rows)
        .map(|(&p, (f, _))| (p, ResidueElement::in_ring(&PrimePower::unchecked(p, e), f)))
        .collect())
}

/// `H_{j,γ}(p) mod p^{e−j}` for the same primes as [`factorial_batch`].
pub fn harmonic_sums(j: u32, gamma: Fraction, e: u32, limit: u64) -> Result<HarmonicTable> {
    check_gamma(&gamma)?;
    if j == 0 || j >= e {
        return Err(Error::Invalid(format!("harmonic sum H_{j} needs 1 ≤ j < e = {e}")));
    }
    let (b, d) = (gamma.num() as u64, gamma.den() as u64);
    let primes = table_primes(e, d, limit);
    let prec = e - j;
    let rows = harmonic_forest(b, d, j, prec, &primes)?;
    let mut values = BTreeMap::new();
    for (&p, (s11, s21)) in primes.iter().zip(rows) {
        let ring = PrimePower::unchecked(p, prec);
        let h = ring.mul(&s21, &ring.inv(&s11)?);
        values.insert(p, ResidueElement::in_ring(&ring, h));
    }
    Ok(HarmonicTable { j, gamma, values })
}

/// Factorials and harmonic sums for one `b/d` over a list of primes.
/// `fact[p] = (⌈bp/d⌉−1)! mod p^e`, `harm[j−1][p] = H_j mod p^e` (only
/// meaningful mod `p^{e−j}`), for `j = 1..max(1, e−1)`.
struct Batch {
    fact: Vec<Integer>,
    harm: Vec<Vec<Integer>>,
}

fn batch(b: u64, d: u64, e: u32, jmax: u32, primes: &[u64]) -> Result<Batch> {
    // j = 1 runs at full precision so that its S11 is the factorial.
    let jobs: Vec<(u32, u32)> = (1..=jmax.max(1)).map(|j| (j, if j == 1 { e } else { e - j })).collect();
    let rows: Vec<Vec<(Integer, Integer)>> =
        jobs.par_iter().map(|&(j, prec)| harmonic_forest(b, d, j, prec, primes)).collect::<Result<_>>()?;
    let fact = rows[0].iter().map(|(f, _)| f.clone()).collect();
    let harm = rows
        .iter()
        .zip(&jobs)
        .map(|(r, &(_, prec))| {
            r.iter()
                .zip(primes)
                .map(|((s11, s21), &p)| {
                    let ring = PrimePower::unchecked(p, prec);
                    ring.mul(s21, &ring.inv(s11).expect("factorial below p is a unit"))
                })
                .collect()
        })
        .collect();
    Ok(Batch { fact, harm })
}

/// Coefficients `w_1..w_{e−1}` from `−(p−1)!` and `H_{j,1}(p)`, `j ≤ e−2`.
fn solve_log_gamma(ring: &PrimePower, fact: &Integer, harm: &[Integer]) -> Result<Vec<Integer>> {
    let e = ring.e() as usize;
    if e < 2 {
        return Ok(Vec::new());
    }
    let n = e - 1;
    let p = Integer::from(ring.p());
    let mut v = vec![Integer::new(); n];
    v[0] = log_one_unit(ring, &ring.neg(fact))?;
    for j in 2..=n {
        let t = ring.mul(&Integer::from((&p).pow(j as u32 - 1)), &harm[j - 2]);
        let t = ring.mul(&t, &ring.inv(&Integer::from(j - 1))?);
        v[j - 1] = if j % 2 == 0 { t } else { ring.neg(&t) };
    }
    // A_{ij} = binom(j, i−1), upper triangular with diagonal i
    let mut w = vec![Integer::new(); n];
    for i in (1..=n).rev() {
        let mut acc = v[i - 1].clone();
        for j in i + 1..=n {
            acc -= Integer::from(Integer::binomial_u(j as u32, i as u32 - 1)) * &w[j - 1];
        }
        w[i - 1] = ring.mul(&ring.reduce(acc), &ring.inv(&Integer::from(i))?);
    }
    Ok(w)
}

/// `log Γ_p(py)` for the odd primes in `(e, X]`.
pub fn log_gamma_at_zero(e: u32, limit: u64) -> Result<BTreeMap<u64, LogGammaAtZero>> {
    if e < 2 {
        return Err(Error::Invalid("log Γ_p(py) has no coefficients below precision 2".into()));
    }
    let primes = table_primes(e, 1, limit);
    let bt = batch(1, 1, e, e.saturating_sub(2), &primes)?;
    let mut out = BTreeMap::new();
    for (n, &p) in primes.iter().enumerate() {
        let ring = PrimePower::unchecked(p, e);
        let harm: Vec<Integer> = bt.harm.iter().map(|h| h[n].clone()).collect();
        out.insert(p, LogGammaAtZero { p, e, coeffs: solve_log_gamma(&ring, &bt.fact[n], &harm)? });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GammaEntry {
    pub constant: Integer,
    pub series: Vec<Integer>,
}

/// All expansions at fractions with exact denominator `d` (for `d = 1`, the
/// single point `0`, where the constant is 1 and the series is `log Γ_p(py)`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GammaTable {
    pub d: u64,
    pub e: u32,
    pub limit: u64,
    pub primes: Vec<u64>,
    /// Numerators `c` of `γ = c/d`, ascending.
    pub numerators: Vec<u64>,
    /// `entries[prime index][numerator index]`.
    pub entries: Vec<Vec<GammaEntry>>,
}

impl GammaTable {
    pub fn entry(&self, p: u64, num: u64) -> Result<&GammaEntry> {
        let missing = || Error::MissingGammaEntry { d: self.d, p };
        let i = self.primes.binary_search(&p).map_err(|_| missing())?;
        let k = self.numerators.binary_search(&num).map_err(|_| missing())?;
        Ok(&self.entries[i][k])
    }

    pub fn expansion(&self, gamma: Fraction, p: u64) -> Result<GammaExpansion> {
        if gamma.den() as u64 != self.d {
            return Err(Error::MissingGammaEntry { d: gamma.den() as u64, p });
        }
        let en = self.entry(p, gamma.num() as u64)?;
        Ok(GammaExpansion { gamma, p, e: self.e, constant: en.constant.clone(), series: en.series.clone() })
    }
}

#[derive(Clone, Debug)]
pub struct GammaOptions {
    /// Run forests only for `b/d ≤ 1/2` and get the rest by reflection.
    pub half_interval: bool,
    pub cache_dir: Option<PathBuf>,
}

impl Default for GammaOptions {
    fn default() -> Self {
        GammaOptions { half_interval: true, cache_dir: None }
    }
}

fn build_log_table(e: u32, limit: u64) -> Result<GammaTable> {
    let primes = table_primes(e, 1, limit);
    let bt = if e >= 2 { Some(batch(1, 1, e, e - 2, &primes)?) } else { None };
    let entries = primes
        .iter()
        .enumerate()
        .map(|(n, &p)| {
            let ring = PrimePower::unchecked(p, e);
            let mut series = vec![Integer::new()];
            if let Some(bt) = &bt {
                let harm: Vec<Integer> = bt.harm.iter().map(|h| h[n].clone()).collect();
                series.extend(solve_log_gamma(&ring, &bt.fact[n], &harm)?);
            }
            series.resize(e as usize, Integer::new());
            Ok(vec![GammaEntry { constant: Integer::from(1), series }])
        })
        .collect::<Result<_>>()?;
    Ok(GammaTable { d: 1, e, limit, primes, numerators: vec![0], entries })
}

fn build_table(d: u64, e: u32, limit: u64, log: &GammaTable, half: bool) -> Result<GammaTable> {
    let primes = table_primes(e, d, limit);
    let numerators = unit_classes(d);
    let bs: Vec<u64> = numerators.iter().copied().filter(|&b| !half || 2 * b <= d).collect();
    let batches: Vec<Batch> = bs.iter().map(|&b| batch(b, d, e, e - 1, &primes)).collect::<Result<_>>()?;
    let bindex = |b: u64| bs.binary_search(&b).ok();

    let entries = primes
        .par_iter()
        .enumerate()
        .map(|(n, &p)| -> Result<Vec<GammaEntry>> {
            let ring = PrimePower::unchecked(p, e);
            let logp = &log.entry(p, 0)?.series;
            // direct: b ↦ (c, s) for the computed b
            let direct = |b: u64, bt: &Batch| -> Result<GammaEntry> {
                let a = (b * p).div_ceil(d);
                let mut l = logp.clone();
                for (j, lj) in l.iter_mut().enumerate().take(e as usize).skip(1) {
                    // L(y) = log Γ_p(py) − Σ (−p)^j H_j / j · y^j
                    let pj = Integer::from(p).pow(j as u32);
                    let t = ring.mul(&ring.mul(&pj, &bt.harm[j - 1][n]), &ring.inv(&Integer::from(j))?);
                    *lj = if j % 2 == 0 { ring.sub(lj, &t) } else { ring.add(lj, &t) };
                }
                let off = ring.fraction(&Fraction::new(-(b as i64), d as i64)?)?;
                let shifted = shift(&ring, &l, &off);
                let mut s = shifted;
                let l0 = std::mem::take(&mut s[0]);
                let gamma_a = if a.is_multiple_of(2) { bt.fact[n].clone() } else { ring.neg(&bt.fact[n]) };
                let constant = ring.mul(&gamma_a, &exp_zero_mod_p(&ring, &l0)?);
                Ok(GammaEntry { constant, series: s })
            };
            numerators
                .iter()
                .map(|&c| {
                    let pinv = Integer::from(p % d).invert(&Integer::from(d)).map_err(|_| Error::DivisibleByP(p))?;
                    let b = (Integer::from(d - c) * pinv).to_u64().unwrap() % d;
                    if let Some(k) = bindex(b) {
                        return direct(b, &batches[k]);
                    }
                    // reflection: Γ_p(x)Γ_p(1−x) = (−1)^{x_0}, x_0 = ⌈bp/d⌉
                    let k = bindex(d - b).expect("reflected point is tabulated");
                    let other = direct(d - b, &batches[k])?;
                    let a = (b * p).div_ceil(d);
                    let inv = ring.inv(&other.constant)?;
                    let constant = if a.is_multiple_of(2) { inv } else { ring.neg(&inv) };
                    let series = series::scale(&ring, &negate_variable(&ring, &other.series), &ring.from_i64(-1));
                    Ok(GammaEntry { constant, series })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(GammaTable { d, e, limit, primes, numerators, entries })
}

/// Expansion tables for every fraction with exact denominator `d`.
pub fn gamma_expansion_tables(d: u64, e: u32, limit: u64) -> Result<GammaTable> {
    if d < 2 {
        return Err(Error::Invalid("denominator must be at least 2".into()));
    }
    let log = build_log_table(e, limit)?;
    build_table(d, e, limit, &log, true)
}

/// All tables needed by one run, keyed by denominator (including `d = 1`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GammaStore {
    pub e: u32,
    pub limit: u64,
    pub tables: BTreeMap<u64, GammaTable>,
}

impl GammaStore {
    pub fn build(denominators: &[u64], e: u32, limit: u64, opts: &GammaOptions) -> Result<Self> {
        let mut ds: Vec<u64> = denominators.iter().copied().filter(|&d| d >= 2).collect();
        ds.sort_unstable();
        ds.dedup();
        let mut tables = BTreeMap::new();
        let cache = opts.cache_dir.as_deref();
        let log = match cache.and_then(|c| load_table(c, 1, e, limit).transpose()) {
            Some(t) => t?,
            None => {
                let t = build_log_table(e, limit)?;
                if let Some(c) = cache {
                    save_table(c, &t)?;
                }
                t
            }
        };
        for &d in &ds {
            let t = match cache.and_then(|c| load_table(c, d, e, limit).transpose()) {
                Some(t) => t?,
                None => {
                    let t = build_table(d, e, limit, &log, opts.half_interval)?;
                    if let Some(c) = cache {
                        save_table(c, &t)?;
                    }
                    t
                }
            };
            tables.insert(d, t);
        }
        tables.insert(1, log);
        Ok(GammaStore { e, limit, tables })
    }

    pub fn table(&self, d: u64) -> Result<&GammaTable> {
        self.tables.get(&d).ok_or(Error::MissingGammaEntry { d, p: 0 })
    }

    /// `Γ_p(py + a) ≡ C·exp S(y) mod p^e` for any rational `a` prime to `p`,
    /// with `S(0) = 0`. Integer shifts go through the functional equation.
    pub fn shifted(&self, ring: &PrimePower, a: Fraction) -> Result<(Integer, Vec<Integer>)> {
        let p = ring.p();
        let e = ring.e() as usize;
        let frac = a.fract();
        let base_table = self.table(frac.den() as u64)?;
        let en = base_table.entry(p, frac.num() as u64)?;
        let mut c = ring.reduce_ref(&en.constant);
        let mut s: Vec<Integer> = en.series.iter().take(e).map(|v| ring.reduce_ref(v)).collect();
        s.resize(e, Integer::new());
        let n = a.floor();
        // Γ_p(x + 1) = ω(x)Γ_p(x): ω = −1 if p | x, else −x.
        let steps: Vec<(i64, bool)> = if n >= 0 { (0..n).map(|j| (j, true)).collect() } else { (n..0).map(|j| (j, false)).collect() };
        for (j, up) in steps {
            let x = frac + Fraction::int(j);
            let (factor, log) = if x.num() % p as i64 == 0 {
                (ring.from_i64(-1), None)
            } else {
                let u = ring.fraction(&x)?;
                (ring.neg(&u), Some(log_linear(ring, &ring.inv(&u)?)))
            };
            if up {
                c = ring.mul(&c, &factor);
                if let Some(l) = log {
                    s = series::add(ring, &s, &l);
                }
            } else {
                c = ring.mul(&c, &ring.inv(&factor)?);
                if let Some(l) = log {
                    s = series::sub(ring, &s, &l);
                }
            }
        }
        Ok((c, s))
    }

    /// The same as [`shifted`](Self::shifted), as a [`GammaExpansion`].
    pub fn expansion(&self, a: Fraction, p: u64) -> Result<GammaExpansion> {
        let ring = PrimePower::unchecked(p, self.e);
        let (constant, series) = self.shifted(&ring, a)?;
        Ok(GammaExpansion { gamma: a, p, e: self.e, constant, series })
    }
}

/// `log(1 + p·u·y)` as a y-form polynomial of length `e`.
fn log_linear(ring: &PrimePower, u: &Integer) -> Vec<Integer> {
    let e = ring.e() as usize;
    let pu = ring.mul(&Integer::from(ring.p()), u);
    let mut out = vec![Integer::new(); e];
    let mut pw = Integer::from(1);
    for (k, slot) in out.iter_mut().enumerate().skip(1) {
        pw = ring.mul(&pw, &pu);
        let t = ring.mul(&pw, &ring.inv(&Integer::from(k)).expect("k < p"));
        *slot = if k % 2 == 1 { t } else { ring.neg(&t) };
    }
    out
}

const CACHE_MAGIC: &[u8; 8] = b"HGMGAMMA";
const CACHE_VERSION: u32 = 1;

fn cache_name(d: u64, e: u32, limit: u64) -> String {
    let key = format!("hgm-gamma-table v{CACHE_VERSION} d={d} e={e} X={limit} class=0");
    let digest = Sha256::digest(key.as_bytes());
    format!("{}.gamma", hex::encode(digest))
}

pub fn cache_path(dir: &Path, d: u64, e: u32, limit: u64) -> PathBuf {
    dir.join(cache_name(d, e, limit))
}

/// Header: magic, version, d, e, X, class, prime count. Then per prime: `p`,
/// and per numerator the constant and `e` series coefficients, each as a sign
/// byte, a u64 byte length and little-endian magnitude bytes.
pub fn save_table(dir: &Path, t: &GammaTable) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = cache_path(dir, t.d, t.e, t.limit);
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&t.d.to_le_bytes())?;
        w.write_all(&t.e.to_le_bytes())?;
        w.write_all(&t.limit.to_le_bytes())?;
        w.write_all(&0u64.to_le_bytes())?;
        w.write_all(&(t.primes.len() as u64).to_le_bytes())?;
        for (p, row) in t.primes.iter().zip(&t.entries) {
            w.write_all(&p.to_le_bytes())?;
            for en in row {
                write_integer(&mut w, &en.constant)?;
                for c in &en.series {
                    write_integer(&mut w, c)?;
                }
            }
        }
        w.flush()?;
    }
    fs::rename(&tmp, &path)?;
    Ok(())
}

/// `Ok(None)` when there is no cache file.
pub fn load_table(dir: &Path, d: u64, e: u32, limit: u64) -> Result<Option<GammaTable>> {
    let path = cache_path(dir, d, e, limit);
    let f = match File::open(&path) {
        Ok(f) => f,
        Err(err) if err.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(err) => return Err(err.into()),
    };
    let mut r = BufReader::new(f);
    let bad = |what: &str| Error::Cache(format!("{}: {what}", path.display()));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(bad("bad magic"));
    }
    if read_u32(&mut r)? != CACHE_VERSION {
        return Err(bad("unsupported version"));
    }
    let (fd, fe, fx, _class) = (read_u64(&mut r)?, read_u32(&mut r)?, read_u64(&mut r)?, read_u64(&mut r)?);
    if (fd, fe, fx) != (d, e, limit) {
        return Err(bad("header does not match key"));
    }
    let count = read_u64(&mut r)? as usize;
    let numerators = unit_classes(d);
    let mut primes = Vec::with_capacity(count);
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        primes.push(read_u64(&mut r)?);
        let mut row = Vec::with_capacity(numerators.len());
        for _ in &numerators {
            let constant = read_integer(&mut r)?;
            let series = (0..e).map(|_| read_integer(&mut r)).collect::<std::io::Result<_>>()?;
            row.push(GammaEntry { constant, series });
        }
        entries.push(row);
    }
    if primes != table_primes(e, d, limit) {
        return Err(bad("prime list does not match"));
    }
    Ok(Some(GammaTable { d, e, limit, primes, numerators, entries }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::gamma_p_direct;
    use crate::arith::series::eval;

    fn fr(s: &str) -> Fraction {
        s.parse().unwrap()
    }

    #[test]
    fn factorial_examples() {
        assert_eq!(*factorial_batch(Fraction::one(), 2, 5).unwrap()[&5].value(), 24);
        assert_eq!(*factorial_batch(fr("1/2"), 1, 7).unwrap()[&7].value(), 6);
        assert_eq!(*factorial_batch(Fraction::one(), 1, 3).unwrap()[&3].value(), 2);
    }

    #[test]
    fn harmonic_examples() {
        assert_eq!(*harmonic_sums(1, Fraction::one(), 3, 5).unwrap().values[&5].value(), 0);
        assert_eq!(*harmonic_sums(2, Fraction::one(), 3, 5).unwrap().values[&5].value(), 0);
        assert_eq!(*harmonic_sums(1, fr("1/2"), 2, 5).unwrap().values[&5].value(), 4);
    }

    #[test]
    fn log_gamma_examples() {
        assert_eq!(log_gamma_at_zero(2, 7).unwrap()[&7].coeffs, vec![Integer::from(14)]);
        assert_eq!(log_gamma_at_zero(2, 5).unwrap()[&5].coeffs, vec![Integer::from(0)]);
    }

    #[test]
    fn log_gamma_matches_direct() {
        for e in 2..=4 {
            for (p, lg) in log_gamma_at_zero(e, 40).unwrap() {
                let ring = PrimePower::new(p, e).unwrap();
                let mut poly = vec![Integer::new()];
                poly.extend(lg.coeffs.clone());
                let ex = series::exp_poly(&ring, &poly, e as usize).unwrap();
                for y in [-1i64, 1, 2, 3] {
                    let want = gamma_p_direct(&Fraction::int(p as i64 * y), p, e).unwrap();
                    let got = eval(&ring, &ex, &Integer::from(y));
                    assert_eq!(got, *want.value(), "p={p} e={e} y={y}");
                }
            }
        }
    }

    #[test]
    fn expansion_examples() {
        let t = gamma_expansion_tables(2, 1, 7).unwrap();
        let x = t.expansion(fr("1/2"), 7).unwrap();
        assert_eq!(x.constant, 6);
        assert!(x.series.iter().all(|c| *c == 0));
        let r = PrimePower::new(7, 1).unwrap();
        assert_eq!(r.mul(&x.constant, &x.constant), 1);
        // 1/3 ≡ 5 mod 7, so c = Γ_7(5) = −4! ≡ 4
        let t = gamma_expansion_tables(3, 1, 7).unwrap();
        assert_eq!(t.expansion(fr("1/3"), 7).unwrap().constant, 4);
        assert_eq!(*gamma_p_direct(&fr("1/3"), 7, 1).unwrap().value(), 4);
        let t = gamma_expansion_tables(2, 2, 7).unwrap();
        let x = t.expansion(fr("1/2"), 7).unwrap();
        let at = eval_gamma(&x, &ResidueElement::new(7, 2, 7).unwrap()).unwrap();
        assert_eq!(at, gamma_p_direct(&fr("15/2"), 7, 2).unwrap());
        let at0 = eval_gamma(&x, &ResidueElement::new(7, 2, 0).unwrap()).unwrap();
        assert_eq!(at0, x.constant());
        assert!(eval_gamma(&x, &ResidueElement::new(7, 2, 3).unwrap()).is_err());
    }

    #[test]
    fn half_interval_agrees_with_full() {
        for e in 1..=3 {
            let log = build_log_table(e, 150).unwrap();
            for d in [3, 5, 8, 12] {
                let a = build_table(d, e, 150, &log, true).unwrap();
                let b = build_table(d, e, 150, &log, false).unwrap();
                assert_eq!(a, b, "d={d} e={e}");
            }
        }
    }

    #[test]
    fn shifted_points_match_direct() {
        let store = GammaStore::build(&[4, 6, 12], 3, 100, &GammaOptions::default()).unwrap();
        for p in [13u64, 37, 97] {
            let ring = PrimePower::new(p, 3).unwrap();
            for a in ["-7/12", "5/12", "17/12", "0", "1", "2", "-1", "3/4", "-5/6", "7/4"] {
                let a = fr(a);
                let (c, s) = store.shifted(&ring, a).unwrap();
                assert_eq!(s[0], 0);
                let ex = series::exp_poly(&ring, &s, 3).unwrap();
                for y in [-1i64, 0, 1, 2] {
                    let x = a + Fraction::int(p as i64 * y);
                    let want = gamma_p_direct(&x, p, 3).unwrap();
                    let got = ring.mul(&c, &eval(&ring, &ex, &Integer::from(y)));
                    assert_eq!(got, *want.value(), "p={p} a={a} y={y}");
                }
            }
        }
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let opts = GammaOptions { cache_dir: Some(dir.path().to_path_buf()), ..Default::default() };
        let a = GammaStore::build(&[4, 6], 2, 200, &opts).unwrap();
        let files: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 3);
        let b = GammaStore::build(&[4, 6], 2, 200, &opts).unwrap();
        assert_eq!(a, b);
        let fresh = GammaStore::build(&[4, 6], 2, 200, &GammaOptions::default()).unwrap();
        assert_eq!(a, fresh);
    }
}
