//! Prime enumeration and residue-class bookkeeping.

/// All primes `≤ limit`, ascending (sieve of Eratosthenes over odd numbers).
pub fn primes_up_to(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize;
    // index i represents 2i + 1
    let half = n.div_ceil(2);
    let mut composite = vec![false; half];
    let mut i = 1;
    while (2 * i + 1) * (2 * i + 1) <= n {
        if !composite[i] {
            let p = 2 * i + 1;
            let mut j = p * p / 2;
            while j < half {
                composite[j] = true;
                j += p;
            }
        }
        i += 1;
    }
    let mut out = vec![2];
    out.extend((1..half).filter(|&i| !composite[i]).map(|i| (2 * i + 1) as u64));
    out
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// The units of `Z/n`, ascending; `{0}` for `n = 1`.
pub fn unit_classes(n: u64) -> Vec<u64> {
    if n == 1 {
        return vec![0];
    }
    (1..n).filter(|&c| gcd(c, n) == 1).collect()
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sieve() {
        assert_eq!(primes_up_to(1), Vec::<u64>::new());
        assert_eq!(primes_up_to(2), vec![2]);
        assert_eq!(primes_up_to(30), vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
        assert_eq!(primes_up_to(10_000).len(), 1229);
        assert!(primes_up_to(10_000).iter().all(|&p| is_prime(p)));
    }

    #[test]
    fn classes() {
        assert_eq!(unit_classes(1), vec![0]);
        assert_eq!(unit_classes(6), vec![1, 5]);
        assert_eq!(unit_classes(10), vec![1, 3, 7, 9]);
    }
}
