use rug::{Integer, Rational};

/// A polynomial with rational coefficients, ascending order.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct RatPoly(pub Vec<Rational>);

impl RatPoly {
    pub fn constant(c: Rational) -> Self {
        RatPoly(vec![c])
    }

    pub fn one() -> Self {
        Self::constant(Rational::from(1))
    }

    /// `k + a`.
    pub fn linear(a: Rational) -> Self {
        RatPoly(vec![a, Rational::from(1)])
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|c| *c == 0)
    }

    pub fn add(&self, o: &Self) -> Self {
        let n = self.0.len().max(o.0.len());
        RatPoly(
            (0..n)
                .map(|i| {
                    let mut v = self.0.get(i).cloned().unwrap_or_default();
                    if let Some(w) = o.0.get(i) {
                        v += w;
                    }
                    v
                })
                .collect(),
        )
    }

    pub fn mul(&self, o: &Self) -> Self {
        if self.0.is_empty() || o.0.is_empty() {
            return RatPoly::default();
        }
        let mut c = vec![Rational::new(); self.0.len() + o.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in o.0.iter().enumerate() {
                c[i + j] += Rational::from(a * b);
            }
        }
        RatPoly(c)
    }

    pub fn scale(&self, s: &Rational) -> Self {
        RatPoly(self.0.iter().map(|c| Rational::from(c * s)).collect())
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut out = RatPoly::one();
        for _ in 0..n {
            out = out.mul(self);
        }
        out
    }

    /// Least common multiple of the coefficient denominators.
    pub fn denominator_lcm(&self) -> Integer {
        self.0.iter().fold(Integer::from(1), |acc, c| acc.lcm(c.denom()))
    }

    /// Coefficients times `lambda`, which must clear every denominator.
    pub fn to_integer(&self, lambda: &Integer) -> Vec<Integer> {
        let mut out: Vec<Integer> = self
            .0
            .iter()
            .map(|c| {
                let v = Rational::from(c * lambda);
                assert!(*v.denom() == 1, "scalar does not clear denominators");
                v.into_numer_denom().0
            })
            .collect();
        while out.last().is_some_and(|c| *c == 0) {
            out.pop();
        }
        out
    }
}
