use std::fmt;

use rug::{Assign, Integer};

use crate::arith::Reduce;
use crate::error::{Error, Result};

/// A dense matrix of arbitrary-precision integers, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct IntegerMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Integer>,
}

impl IntegerMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntegerMatrix { rows, cols, data: vec![Integer::new(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Integer::from(1);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Integer>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 {
            return Err(Error::DimensionMismatch("empty matrix".into()));
        }
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(IntegerMatrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    pub fn from_i64(rows: &[&[i64]]) -> Result<Self> {
        Self::from_rows(rows.iter().map(|r| r.iter().map(|&x| Integer::from(x)).collect()).collect())
    }

    /// The rows `first..first+count` of the `n × n` identity.
    pub fn row_selector(n: usize, first: usize, count: usize) -> Self {
        let mut m = Self::zeros(count, n);
        for i in 0..count {
            m.data[i * n + first + i] = Integer::from(1);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Integer {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Integer) {
        self.data[i * self.cols + j] = v;
    }

    pub fn entries(&self) -> &[Integer] {
        &self.data
    }

    pub fn entries_mut(&mut self) -> &mut [Integer] {
        &mut self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| *x == 0)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self.mul_unchecked(other))
    }

    pub(crate) fn mul_unchecked(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.rows, other.cols);
        let mut tmp = Integer::new();
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self.data[i * self.cols + k];
                // Block-triangular generators are mostly zeros.
                if *a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    let b = &other.data[k * other.cols + j];
                    if *b == 0 {
                        continue;
                    }
                    tmp.assign(a * b);
                    out.data[i * other.cols + j] += &tmp;
                }
            }
        }
        out
    }

    /// Product followed by reduction of every entry mod `m`.
    pub fn mul_mod(&self, other: &Self, m: &Integer) -> Result<Self> {
        let mut out = self.mul(other)?;
        out.reduce_mut(m);
        Ok(out)
    }

    pub fn reduce_mut(&mut self, m: &Integer) {
        for x in self.data.iter_mut() {
            x.reduce_mod(m);
        }
    }

    pub fn reduced(&self, m: &Integer) -> Self {
        let mut out = self.clone();
        out.reduce_mut(m);
        out
    }

    /// Total bit size of the entries; a cost proxy for scheduling.
    pub fn bit_size(&self) -> u64 {
        self.data.iter().map(|x| x.significant_bits() as u64).sum()
    }
}

impl fmt::Debug for IntegerMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "[")?;
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

/// A matrix whose entries are integer polynomials in one variable `k`,
/// stored as ascending coefficient lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Vec<Integer>>,
}

impl PolyMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        PolyMatrix { rows, cols, entries: vec![Vec::new(); rows * cols] }
    }

    pub fn from_entries(rows: usize, cols: usize, entries: Vec<Vec<Integer>>) -> Result<Self> {
        if entries.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch("polynomial matrix shape".into()));
        }
        Ok(PolyMatrix { rows, cols, entries })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn set(&mut self, i: usize, j: usize, poly: Vec<Integer>) {
        self.entries[i * self.cols + j] = poly;
    }

    pub fn get(&self, i: usize, j: usize) -> &[Integer] {
        &self.entries[i * self.cols + j]
    }

    pub fn degree(&self) -> usize {
        self.entries.iter().map(|p| p.len().saturating_sub(1)).max().unwrap_or(0)
    }

    pub fn eval(&self, k: &Integer) -> IntegerMatrix {
        let mut m = IntegerMatrix::zeros(self.rows, self.cols);
        for (slot, poly) in m.data.iter_mut().zip(&self.entries) {
            let mut acc = Integer::new();
            for c in poly.iter().rev() {
                acc *= k;
                acc += c;
            }
            *slot = acc;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiply_and_reduce() {
        let a = IntegerMatrix::from_i64(&[&[1, 2], &[3, 4]]).unwrap();
        let b = IntegerMatrix::from_i64(&[&[0, 1], &[1, 0]]).unwrap();
        let c = a.mul(&b).unwrap();
        assert_eq!(c, IntegerMatrix::from_i64(&[&[2, 1], &[4, 3]]).unwrap());
        assert_eq!(a.mul_mod(&a, &Integer::from(5)).unwrap(), IntegerMatrix::from_i64(&[&[2, 0], &[0, 2]]).unwrap());
        let v = IntegerMatrix::row_selector(2, 1, 1);
        assert_eq!(v.mul(&a).unwrap(), IntegerMatrix::from_i64(&[&[3, 4]]).unwrap());
        assert!(v.mul(&v).is_err());
    }

    #[test]
    fn poly_eval() {
        let mut pm = PolyMatrix::new(1, 2);
        pm.set(0, 0, vec![Integer::from(1), Integer::from(1)]);
        pm.set(0, 1, vec![Integer::from(0), Integer::from(0), Integer::from(2)]);
        assert_eq!(pm.degree(), 2);
        assert_eq!(pm.eval(&Integer::from(3)), IntegerMatrix::from_i64(&[&[4, 18]]).unwrap());
    }
}
