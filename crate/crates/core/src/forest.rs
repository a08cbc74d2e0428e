//! Accumulating remainder forests: for a sequence of square matrices
//! `A_0, …, A_{b−1}` and primes `p_n` with cut points `b_n`, compute
//! `V·A_0⋯A_{b_n−1} mod p_n^{e_n}` for every `n` at once.
//!
//! The cut points split `[0, b)` into leaf intervals whose exact products are
//! formed by binary splitting. Leaves are then grouped into contiguous blocks;
//! each block gets a product tree (built level by level, optionally spilled to
//! disk) and the accumulated prefix is pushed down the tree, reduced at every
//! node modulo the product of the moduli below it. The prefix is carried from
//! block to block modulo the moduli of all later blocks.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rug::integer::Order;
use rug::ops::Pow;
use rug::Integer;

use crate::arith::{IntegerMatrix, PolyMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub enum MatrixGenerator {
    Explicit(Vec<IntegerMatrix>),
    /// `A_j = matrix(start + j)` for `j = 0..len`.
    Polynomial { matrix: PolyMatrix, start: i64, len: usize },
}

impl MatrixGenerator {
    pub fn len(&self) -> usize {
        match self {
            MatrixGenerator::Explicit(v) => v.len(),
            MatrixGenerator::Polynomial { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dims(&self) -> Result<usize> {
        let (r, c) = match self {
            MatrixGenerator::Explicit(v) => {
                let first = v.first().ok_or_else(|| Error::DimensionMismatch("empty generator".into()))?;
                if v.iter().any(|m| m.rows() != first.rows() || m.cols() != first.cols()) {
                    return Err(Error::DimensionMismatch("generator matrices differ in shape".into()));
                }
                (first.rows(), first.cols())
            }
            MatrixGenerator::Polynomial { matrix, .. } => (matrix.rows(), matrix.cols()),
        };
        if r != c {
            return Err(Error::DimensionMismatch(format!("generator is {r}x{c}, not square")));
        }
        Ok(r)
    }

    pub fn at(&self, j: usize) -> IntegerMatrix {
        match self {
            MatrixGenerator::Explicit(v) => v[j].clone(),
            MatrixGenerator::Polynomial { matrix, start, .. } => matrix.eval(&(Integer::from(*start) + j as u64)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Exponents {
    Uniform(u32),
    PerPrime(Vec<u32>),
}

#[derive(Clone, Debug)]
pub struct ForestJob {
    pub generator: MatrixGenerator,
    pub primes: Vec<u64>,
    pub cuts: Vec<usize>,
    pub exponents: Exponents,
    pub row_selector: Option<IntegerMatrix>,
}

impl ForestJob {
    pub fn new(generator: MatrixGenerator, primes: Vec<u64>, cuts: Vec<usize>, e: u32) -> Self {
        ForestJob { generator, primes, cuts, exponents: Exponents::Uniform(e), row_selector: None }
    }

    pub fn with_row_selector(mut self, v: IntegerMatrix) -> Self {
        self.row_selector = Some(v);
        self
    }

    fn exponent(&self, n: usize) -> u32 {
        match &self.exponents {
            Exponents::Uniform(e) => *e,
            Exponents::PerPrime(v) => v[n],
        }
    }

    fn modulus(&self, n: usize) -> Integer {
        Integer::from(self.primes[n]).pow(self.exponent(n))
    }

    fn validate(&self) -> Result<usize> {
        let n = self.generator.dims()?;
        if self.cuts.len() != self.primes.len() {
            return Err(Error::DimensionMismatch("one cut point per prime required".into()));
        }
        if let Exponents::PerPrime(v) = &self.exponents {
            if v.len() != self.primes.len() {
                return Err(Error::DimensionMismatch("one exponent per prime required".into()));
            }
        }
        for w in self.primes.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicatePrime(w[0]));
            }
            if w[0] > w[1] {
                return Err(Error::UnsortedPrimes);
            }
        }
        for (i, &p) in self.primes.iter().enumerate() {
            if p == 2 {
                return Err(Error::EvenPrime);
            }
            if p < 2 {
                return Err(Error::NotPrime(p));
            }
            if self.exponent(i) == 0 {
                return Err(Error::ZeroPrecision);
            }
        }
        let len = self.generator.len();
        if let Some(&cut) = self.cuts.iter().find(|&&c| c > len) {
            return Err(Error::CutPointTooLarge { cut, len });
        }
        if let Some(v) = &self.row_selector {
            if v.cols() != n {
                return Err(Error::DimensionMismatch(format!("selector has {} columns, generator is {n}x{n}", v.cols())));
            }
        }
        Ok(n)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ForestResult {
    map: BTreeMap<u64, IntegerMatrix>,
}

impl ForestResult {
    pub fn get(&self, p: u64) -> Option<&IntegerMatrix> {
        self.map.get(&p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&u64, &IntegerMatrix)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn into_map(self) -> BTreeMap<u64, IntegerMatrix> {
        self.map
    }
}

/// Tuning knobs. None of them changes the output.
#[derive(Clone, Debug, Default)]
pub struct ForestConfig {
    /// Number of contiguous leaf blocks; `None` picks one from a memory budget.
    pub blocks: Option<usize>,
    /// When set, product-tree levels are written here between the two passes.
    pub spill_dir: Option<PathBuf>,
    /// Memory budget in bytes for the automatic block count.
    pub memory_budget: Option<u64>,
}

const DEFAULT_BUDGET: u64 = 1 << 30;

pub fn run_forest(job: &ForestJob) -> Result<ForestResult> {
    run_forest_with(job, &ForestConfig::default())
}

/// Direct left-to-right multiplication per prime; the reference contract.
pub fn naive_product(job: &ForestJob) -> Result<ForestResult> {
    let n = job.validate()?;
    let mut map = BTreeMap::new();
    for (i, &p) in job.primes.iter().enumerate() {
        let m = job.modulus(i);
        let mut acc = match &job.row_selector {
            Some(v) => v.reduced(&m),
            None => IntegerMatrix::identity(n).reduced(&m),
        };
        for j in 0..job.cuts[i] {
            acc = acc.mul_mod(&job.generator.at(j), &m)?;
        }
        map.insert(p, acc);
    }
    Ok(ForestResult { map })
}

struct Leaf {
    /// Positions (into the job's prime list) whose cut ends this leaf.
    members: Vec<usize>,
    modulus: Integer,
    /// Exact product over the leaf interval; `None` for the empty product.
    product: Option<IntegerMatrix>,
}

fn range_product(gen: &MatrixGenerator, lo: usize, hi: usize) -> Option<IntegerMatrix> {
    match hi - lo {
        0 => None,
        1 => Some(gen.at(lo)),
        len => {
            let mid = lo + len / 2;
            let (a, b) = if len > 64 {
                rayon::join(|| range_product(gen, lo, mid), || range_product(gen, mid, hi))
            } else {
                (range_product(gen, lo, mid), range_product(gen, mid, hi))
            };
            Some(mul_opt(a, b).expect("nonempty range"))
        }
    }
}

fn mul_opt(a: Option<IntegerMatrix>, b: Option<IntegerMatrix>) -> Option<IntegerMatrix> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => Some(a.mul_unchecked(&b)),
    }
}

fn mul_opt_ref(a: &IntegerMatrix, b: &Option<IntegerMatrix>) -> IntegerMatrix {
    match b {
        None => a.clone(),
        Some(b) => a.mul_unchecked(b),
    }
}

/// One level of a block's product tree: node products and node moduli.
struct Level {
    products: Vec<Option<IntegerMatrix>>,
    moduli: Vec<Integer>,
}

pub fn run_forest_with(job: &ForestJob, cfg: &ForestConfig) -> Result<ForestResult> {
    let n = job.validate()?;
    if job.primes.is_empty() {
        return Ok(ForestResult::default());
    }

    // Group primes by cut point, ascending.
    let mut by_cut: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in job.cuts.iter().enumerate() {
        by_cut.entry(c).or_default().push(i);
    }
    let bounds: Vec<(usize, usize)> = {
        let mut prev = 0;
        by_cut
            .keys()
            .map(|&c| {
                let r = (prev, c);
                prev = c;
                r
            })
            .collect()
    };
    let members: Vec<Vec<usize>> = by_cut.into_values().collect();
    let mut leaves: Vec<Leaf> = bounds
        .par_iter()
        .zip(members.into_par_iter())
        .map(|(&(lo, hi), members)| {
            let modulus = members.iter().fold(Integer::from(1), |acc, &i| acc * job.modulus(i));
            Leaf { members, modulus, product: range_product(&job.generator, lo, hi) }
        })
        .collect();

    let blocks = choose_blocks(&leaves, cfg).clamp(1, leaves.len());
    let block_len = leaves.len().div_ceil(blocks);

    // Suffix products of block moduli, for carrying the prefix forward.
    let block_moduli: Vec<Integer> = leaves
        .chunks(block_len)
        .map(|c| product_of(c.iter().map(|l| &l.modulus)))
        .collect();
    let mut suffix = vec![Integer::from(1); block_moduli.len() + 1];
    for j in (0..block_moduli.len()).rev() {
        suffix[j] = Integer::from(&block_moduli[j] * &suffix[j + 1]);
    }

    let start = match &job.row_selector {
        Some(v) => v.clone(),
        None => IntegerMatrix::identity(n),
    };
    let mut carry = start.reduced(&suffix[0]);
    let mut out: Vec<(u64, IntegerMatrix)> = Vec::with_capacity(job.primes.len());
    let nblocks = block_moduli.len();

    let mut rest: &mut [Leaf] = &mut leaves;
    for b in 0..nblocks {
        let take = block_len.min(rest.len());
        let (block, tail) = rest.split_at_mut(take);
        rest = tail;
        let need_root = b + 1 < nblocks;
        let (leaf_carries, root) = descend_block(block, &carry, need_root, cfg.spill_dir.as_deref(), b)?;
        for (leaf, c) in block.iter().zip(leaf_carries) {
            let full = mul_opt_ref(&c, &leaf.product);
            for &i in &leaf.members {
                out.push((job.primes[i], full.reduced(&job.modulus(i))));
            }
        }
        if need_root {
            carry = mul_opt_ref(&carry, &root);
            carry.reduce_mut(&suffix[b + 1]);
        }
    }
    Ok(ForestResult { map: out.into_iter().collect() })
}

fn product_of<'a>(it: impl Iterator<Item = &'a Integer>) -> Integer {
    let v: Vec<&Integer> = it.collect();
    fn rec(v: &[&Integer]) -> Integer {
        match v.len() {
            0 => Integer::from(1),
            1 => v[0].clone(),
            n => rec(&v[..n / 2]) * rec(&v[n / 2..]),
        }
    }
    rec(&v)
}

fn choose_blocks(leaves: &[Leaf], cfg: &ForestConfig) -> usize {
    if let Some(b) = cfg.blocks {
        return b.max(1);
    }
    let bits: u64 = leaves.iter().map(|l| l.product.as_ref().map_or(0, IntegerMatrix::bit_size)).sum();
    let depth = (leaves.len() as f64).log2().ceil().max(1.0) as u64;
    let bytes = bits / 8 * depth;
    let budget = cfg.memory_budget.unwrap_or(DEFAULT_BUDGET).max(1);
    (bytes / budget + 1).next_power_of_two() as usize
}

/// Pushes `carry` (already reduced mod the product of all moduli from this
/// block on) down the block's product tree. Returns the per-leaf prefixes
/// reduced mod each leaf's modulus, and, if requested, the exact product of
/// the whole block.
fn descend_block(
    block: &mut [Leaf],
    carry: &IntegerMatrix,
    need_root: bool,
    spill: Option<&Path>,
    block_index: usize,
) -> Result<(Vec<IntegerMatrix>, Option<IntegerMatrix>)> {
    // Up pass. Level 0 holds the leaves; the last level a single node.
    let mut levels: Vec<Level> = Vec::new();
    let mut spilled: Vec<PathBuf> = Vec::new();
    let mut cur = Level {
        products: block.iter_mut().map(|l| l.product.take()).collect(),
        moduli: block.iter().map(|l| l.modulus.clone()).collect(),
    };
    while cur.moduli.len() > 1 {
        let count = cur.moduli.len();
        let parents = count.div_ceil(2);
        let next_products: Vec<Option<IntegerMatrix>> = (0..parents)
            .into_par_iter()
            .map(|i| {
                // The last node of a level never serves as a left sibling, so
                // its product only matters for the block root.
                if !need_root && i + 1 == parents {
                    return None;
                }
                let b = cur.products.get(2 * i + 1).and_then(Option::as_ref);
                match (cur.products[2 * i].as_ref(), b) {
                    (Some(a), Some(b)) => Some(a.mul_unchecked(b)),
                    (Some(x), None) | (None, Some(x)) => Some(x.clone()),
                    (None, None) => None,
                }
            })
            .collect();
        let next_moduli: Vec<Integer> = (0..parents)
            .into_par_iter()
            .map(|i| match cur.moduli.get(2 * i + 1) {
                Some(m) => Integer::from(&cur.moduli[2 * i] * m),
                None => cur.moduli[2 * i].clone(),
            })
            .collect();
        let next = Level { products: next_products, moduli: next_moduli };
        if let Some(dir) = spill {
            let path = dir.join(format!("block{block_index}-level{}.spill", levels.len()));
            write_spill(&path, levels.len() as u32, &cur.products)?;
            spilled.push(path);
            cur.products = Vec::new();
        }
        levels.push(cur);
        cur = next;
    }
    let top_product = cur.products.pop().flatten();
    let top_modulus = cur.moduli.pop().expect("nonempty block");
    if levels.is_empty() {
        // A single leaf: its product was never moved into a tree level.
        block[0].product = top_product.clone();
        return Ok((vec![carry.reduced(&top_modulus)], top_product.filter(|_| need_root)));
    }
    let root = if need_root { top_product } else { None };

    // Down pass, level by level.
    let mut carries = vec![carry.reduced(&top_modulus)];
    for depth in (0..levels.len()).rev() {
        let products = match spill {
            Some(_) => {
                let v = read_spill(&spilled[depth])?;
                let _ = std::fs::remove_file(&spilled[depth]);
                v
            }
            None => std::mem::take(&mut levels[depth].products),
        };
        let moduli = &levels[depth].moduli;
        carries = (0..moduli.len())
            .into_par_iter()
            .map(|i| {
                let parent = &carries[i / 2];
                if i % 2 == 0 {
                    parent.reduced(&moduli[i])
                } else {
                    let left = products[i - 1].as_ref().map(|m| m.reduced(&moduli[i]));
                    let mut c = mul_opt_ref(parent, &left);
                    c.reduce_mut(&moduli[i]);
                    c
                }
            })
            .collect();
        if depth == 0 {
            for (leaf, p) in block.iter_mut().zip(products) {
                leaf.product = p;
            }
        }
    }
    Ok((carries, root))
}

const SPILL_MAGIC: &[u8; 8] = b"HGMSPILL";
const SPILL_VERSION: u32 = 1;

/// Writes one tree level: magic, version, level index, node count, then per
/// node a presence byte, dimensions and entries as sign byte + u64 length +
/// little-endian magnitude bytes.
pub fn write_spill(path: &Path, level: u32, nodes: &[Option<IntegerMatrix>]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(SPILL_MAGIC)?;
    w.write_all(&SPILL_VERSION.to_le_bytes())?;
    w.write_all(&level.to_le_bytes())?;
    w.write_all(&(nodes.len() as u64).to_le_bytes())?;
    for node in nodes {
        match node {
            None => w.write_all(&[0])?,
            Some(m) => {
                w.write_all(&[1])?;
                w.write_all(&(m.rows() as u32).to_le_bytes())?;
                w.write_all(&(m.cols() as u32).to_le_bytes())?;
                for x in m.entries() {
                    write_integer(&mut w, x)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_spill(path: &Path) -> Result<Vec<Option<IntegerMatrix>>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SPILL_MAGIC {
        return Err(Error::Io(format!("{}: bad spill header", path.display())));
    }
    if read_u32(&mut r)? != SPILL_VERSION {
        return Err(Error::Io(format!("{}: unsupported spill version", path.display())));
    }
    let _level = read_u32(&mut r)?;
    let count = read_u64(&mut r)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        if tag[0] == 0 {
            out.push(None);
            continue;
        }
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let mut m = IntegerMatrix::zeros(rows, cols);
        for x in m.entries_mut() {
            *x = read_integer(&mut r)?;
        }
        out.push(Some(m));
    }
    Ok(out)
}

pub(crate) fn write_integer(w: &mut impl Write, x: &Integer) -> std::io::Result<()> {
    let bytes = x.to_digits::<u8>(Order::Lsf);
    w.write_all(&[u8::from(*x < 0)])?;
    w.write_all(&(bytes.len() as u64).to_le_bytes())?;
    w.write_all(&bytes)
}

pub(crate) fn read_integer(r: &mut impl Read) -> std::io::Result<Integer> {
    let mut sign = [0u8; 1];
    r.read_exact(&mut sign)?;
    let len = read_u64(r)? as usize;
    let mut bytes = vec![0u8; len];
    r.read_exact(&mut bytes)?;
    let v = Integer::from_digits(&bytes, Order::Lsf);
    Ok(if sign[0] == 1 { -v } else { v })
}

pub(crate) fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
