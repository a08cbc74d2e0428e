//! Exact rational, modular and truncated-series arithmetic.

mod fraction;
mod matrix;
pub mod padic;
pub mod poly;
mod residue;
pub mod series;

pub use fraction::Fraction;
pub use matrix::{IntegerMatrix, PolyMatrix};
pub use padic::{padic_exp, padic_log, teichmuller_lift};
pub use residue::{PrimePower, ResidueElement};
pub use series::{Schedule, TruncatedSeries};

/// Least nonnegative residues.
pub(crate) trait Reduce {
    fn reduce_mod(&mut self, m: &rug::Integer);
    fn reduced_mod(&self, m: &rug::Integer) -> rug::Integer;
}

impl Reduce for rug::Integer {
    fn reduce_mod(&mut self, m: &rug::Integer) {
        *self %= m;
        if *self < 0 {
            *self += m;
        }
    }

    fn reduced_mod(&self, m: &rug::Integer) -> rug::Integer {
        let mut r = rug::Integer::from(self % m);
        if r < 0 {
            r += m;
        }
        r
    }
}
