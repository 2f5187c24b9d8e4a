//! Greedy water-filling of a demand sequence `p` from supplies `q`.

use crate::error::{Error, Result};
use crate::rational::Rational;
use num::{One, Zero};

/// Splits `s[k][j]` with `s[k][j] = 0` for `j > k`, `sum_k s[k][j] = 1` and
/// `sum_j s[k][j] q_j = p_k`. Needs `sum p = sum q` and `sum_{k<=i} p_k <= sum_{j<=i} q_j`.
/// Supplies with `q_j = 0` get `s[j][j] = 1` when row `j` exists.
pub fn water_fill(p: &[Rational], q: &[Rational]) -> Result<Vec<Vec<Rational>>> {
    if p.iter().chain(q).any(|x| *x < Rational::zero()) {
        return Err(Error::InvalidArgument("water_fill needs nonnegative inputs".into()));
    }
    let sp: Rational = p.iter().sum();
    let sq: Rational = q.iter().sum();
    if sp != sq {
        return Err(Error::InvalidArgument("water_fill needs equal totals".into()));
    }
    let mut alloc = Allocator::new(q.to_vec());
    let mut s = vec![vec![Rational::zero(); q.len()]; p.len()];
    for (k, pk) in p.iter().enumerate() {
        for (j, a) in alloc.take(k, pk)? {
            s[k][j] = a / &q[j];
        }
    }
    for (j, qj) in q.iter().enumerate() {
        if qj.is_zero() {
            if j >= p.len() {
                return Err(Error::DominationViolated(j));
            }
            s[j][j] = Rational::one();
        }
    }
    Ok(s)
}

/// Streaming form: demands arrive in index order and take from the lowest supplies first.
#[derive(Debug, Clone)]
pub struct Allocator {
    left: Vec<Rational>,
    cursor: usize,
}

impl Allocator {
    pub fn new(q: Vec<Rational>) -> Self {
        Allocator { left: q, cursor: 0 }
    }

    /// Serves demand `need` at index `k`; returns `(j, amount)` pieces with `j <= k`.
    pub fn take(&mut self, k: usize, need: &Rational) -> Result<Vec<(usize, Rational)>> {
        let mut need = need.clone();
        let mut out = Vec::new();
        while need > Rational::zero() {
            while self.cursor < self.left.len() && self.left[self.cursor].is_zero() {
                self.cursor += 1;
            }
            if self.cursor > k || self.cursor >= self.left.len() {
                return Err(Error::DominationViolated(k));
            }
            let j = self.cursor;
            let a = if self.left[j] >= need { need.clone() } else { self.left[j].clone() };
            self.left[j] -= &a;
            need -= &a;
            out.push((j, a));
        }
        Ok(out)
    }

    pub fn remaining(&self) -> Rational {
        self.left.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};
    use proptest::prelude::*;

    fn check(p: &[Rational], q: &[Rational], s: &[Vec<Rational>]) {
        for j in 0..q.len() {
            let col: Rational = s.iter().map(|r| r[j].clone()).sum();
            assert_eq!(col, int(1), "column {j}");
        }
        for (k, row) in s.iter().enumerate() {
            let lhs: Rational = row.iter().zip(q).map(|(a, b)| a * b).sum();
            assert_eq!(lhs, p[k], "row {k}");
            for (j, v) in row.iter().enumerate() {
                assert!(*v >= int(0));
                if j > k {
                    assert!(v.is_zero());
                }
            }
        }
    }

    #[test]
    fn small_example() {
        let p = [rat(3, 10), rat(7, 10)];
        let q = [int(1)];
        let s = water_fill(&p, &q).unwrap();
        assert_eq!(s[0][0], rat(3, 10));
        assert_eq!(s[1][0], rat(7, 10));
        check(&p, &q, &s);
    }

    #[test]
    fn domination_failure_is_reported() {
        let p = [rat(1, 2), rat(1, 2)];
        let q = [rat(1, 4), rat(3, 4)];
        assert!(matches!(water_fill(&p, &q), Err(Error::DominationViolated(0))));
    }

    #[test]
    fn zero_supply_column() {
        let p = [rat(1, 2), rat(1, 2), int(0)];
        let q = [int(1), int(0)];
        check(&p, &q, &water_fill(&p, &q).unwrap());
    }

    fn instance() -> impl Strategy<Value = (Vec<Rational>, Vec<Rational>)> {
        (1usize..=12, proptest::collection::vec(0i64..50, 12), proptest::collection::vec(0i64..50, 12)).prop_map(|(len, a, b)| {
            // p is built so every partial sum sits below the matching partial sum of q.
            let q: Vec<Rational> = b[..len].iter().map(|&x| rat(x + 1, 97)).collect();
            let mut p = Vec::with_capacity(len);
            let mut slack = int(0);
            for k in 0..len {
                slack += &q[k];
                let take = if k + 1 == len { slack.clone() } else { &slack * rat(a[k], 49) };
                slack -= &take;
                p.push(take);
            }
            (p, q)
        })
    }

    proptest! {
        #[test]
        fn random_instances_satisfy_all_identities((p, q) in instance()) {
            let s = water_fill(&p, &q).unwrap();
            check(&p, &q, &s);
        }
    }
}
