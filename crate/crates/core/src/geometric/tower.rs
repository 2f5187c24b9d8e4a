//! Finite affine towers and cell-constant densities on them.

use crate::error::{Error, Result};
use crate::map_models::InducedScheme;
use crate::rational::{self, int, Rational};
use num::{Integer, One, Signed, Zero};
use std::collections::BTreeMap;

/// A Young tower over a finite, exact, affine full-branch scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteTower {
    pub scheme: InducedScheme,
    pub masses: Vec<Rational>,
    pub taus: Vec<u32>,
    pub tau_bar: Rational,
}

impl FiniteTower {
    pub fn new(scheme: InducedScheme) -> Result<Self> {
        if !scheme.is_exact() {
            return Err(Error::InvalidScheme("the tower needs an exact affine scheme".into()));
        }
        if !scheme.deficit.exact().is_some_and(|d| d.is_zero()) {
            return Err(Error::InvalidScheme("the tower needs a finite alphabet with zero truncation deficit".into()));
        }
        let masses: Vec<Rational> = scheme.branches.iter().map(|b| b.measure_exact.clone().unwrap()).collect();
        let taus: Vec<u32> = scheme.branches.iter().map(|b| b.tau).collect();
        let g = taus.iter().fold(0u64, |g, &t| g.gcd(&(t as u64)));
        if g != 1 {
            return Err(Error::NotMixing(g));
        }
        let tau_bar = masses.iter().zip(&taus).map(|(m, &t)| m * int(t as i64)).sum();
        Ok(FiniteTower { scheme, masses, taus, tau_bar })
    }

    pub fn alphabet(&self) -> usize {
        self.masses.len()
    }

    pub fn tau_max(&self) -> u32 {
        *self.taus.iter().max().unwrap()
    }

    /// `m(tau >= ell)`.
    pub fn tail(&self, ell: u32) -> Rational {
        self.masses.iter().zip(&self.taus).filter(|(_, &t)| t >= ell).map(|(m, _)| m.clone()).sum()
    }

    /// `m_Delta(Delta_ell) = m(tau >= ell + 1) / tau_bar`.
    pub fn level_mass(&self, ell: u32) -> Rational {
        self.tail(ell + 1) / &self.tau_bar
    }

    /// `m_Delta(union_{l >= ell} Delta_l)`.
    pub fn upper_mass(&self, ell: u32) -> Rational {
        (ell..self.tau_max()).map(|l| self.level_mass(l)).sum()
    }

    /// Renewal sequence `u_n = sum_a m(a) u_{n - tau(a)}`, `u_0 = 1`.
    pub fn renewal(&self, n_max: usize) -> Vec<Rational> {
        let mut u = vec![Rational::zero(); n_max + 1];
        u[0] = Rational::one();
        for n in 1..=n_max {
            let mut acc = Rational::zero();
            for (m, &t) in self.masses.iter().zip(&self.taus) {
                if t as usize <= n {
                    acc += m * &u[n - t as usize];
                }
            }
            u[n] = acc;
        }
        u
    }

    /// The level-uniform `m_Delta` mass of cell `(word, level)`.
    pub fn cell_mass(&self, word: &[u32]) -> Rational {
        word.iter().map(|&a| self.masses[a as usize].clone()).product::<Rational>() / &self.tau_bar
    }
}

/// A cell of depth `D`: the base cylinder of `word` (length `D`) at `level < tau(word[0])`.
pub type Cell = (Vec<u32>, u32);

/// A nonnegative function on the tower, constant on cells of a fixed depth.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    depth: usize,
    values: BTreeMap<Cell, Rational>,
}

fn words(alphabet: usize, depth: usize) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = vec![vec![]];
    for _ in 0..depth {
        out = out.into_iter().flat_map(|w| (0..alphabet as u32).map(move |a| [w.clone(), vec![a]].concat())).collect();
    }
    out
}

impl Density {
    pub fn from_fn(t: &FiniteTower, depth: usize, mut f: impl FnMut(&[u32], u32) -> Rational) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArgument("density depth must be at least 1".into()));
        }
        let mut values = BTreeMap::new();
        for w in words(t.alphabet(), depth) {
            for ell in 0..t.taus[w[0] as usize] {
                let v = f(&w, ell);
                values.insert((w.clone(), ell), v);
            }
        }
        Ok(Density { depth, values })
    }

    pub fn zero(t: &FiniteTower, depth: usize) -> Result<Self> {
        Self::from_fn(t, depth, |_, _| Rational::zero())
    }

    /// `c * 1_{Delta_0}`.
    pub fn base_constant(t: &FiniteTower, depth: usize, c: &Rational) -> Result<Self> {
        Self::from_fn(t, depth, |_, ell| if ell == 0 { c.clone() } else { Rational::zero() })
    }

    /// `tau_bar * 1_{Delta_0}`, the density of `m` with respect to `m_Delta`.
    pub fn reference(t: &FiniteTower, depth: usize) -> Result<Self> {
        Self::base_constant(t, depth, &t.tau_bar)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn cells(&self) -> impl Iterator<Item = (&Cell, &Rational)> {
        self.values.iter()
    }

    pub fn get(&self, word: &[u32], level: u32) -> Option<&Rational> {
        self.values.get(&(word.to_vec(), level))
    }

    pub fn map(&self, f: impl Fn(&Cell, &Rational) -> Rational) -> Density {
        Density { depth: self.depth, values: self.values.iter().map(|(c, v)| (c.clone(), f(c, v))).collect() }
    }

    pub fn scale(&self, s: &Rational) -> Density {
        self.map(|_, v| v * s)
    }

    pub fn add(&self, other: &Density) -> Result<Density> {
        if self.depth != other.depth {
            return Err(Error::InvalidArgument("density depths differ".into()));
        }
        Ok(self.map(|c, v| v + &other.values[c]))
    }

    pub fn sub(&self, other: &Density) -> Result<Density> {
        self.add(&other.scale(&-Rational::one()))
    }

    /// Restriction to the cells satisfying `keep`.
    pub fn restrict(&self, keep: impl Fn(&Cell) -> bool) -> Density {
        self.map(|c, v| if keep(c) { v.clone() } else { Rational::zero() })
    }

    pub fn integral(&self, t: &FiniteTower) -> Rational {
        self.values.iter().map(|((w, _), v)| v * t.cell_mass(w)).sum()
    }

    pub fn integral_where(&self, t: &FiniteTower, keep: impl Fn(&Cell) -> bool) -> Rational {
        self.values.iter().filter(|(c, _)| keep(c)).map(|((w, _), v)| v * t.cell_mass(w)).sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.values().all(|v| !v.is_negative())
    }

    pub fn sup(&self) -> Rational {
        self.values.values().cloned().fold(Rational::zero(), |a, b| if b > a { b } else { a })
    }

    /// Refines to depth `depth + 1` without changing the function.
    pub fn lift(&self, t: &FiniteTower) -> Density {
        let mut values = BTreeMap::new();
        for ((w, ell), v) in &self.values {
            for a in 0..t.alphabet() as u32 {
                values.insert(([w.clone(), vec![a]].concat(), *ell), v.clone());
            }
        }
        Density { depth: self.depth + 1, values }
    }

    /// True if the value on every level does not depend on the word.
    pub fn is_level_uniform(&self) -> bool {
        let mut seen: BTreeMap<u32, &Rational> = BTreeMap::new();
        self.values.iter().all(|((_, ell), v)| *seen.entry(*ell).or_insert(v) == v)
    }

    /// Per-level values of a level-uniform density (levels absent from all cells are zero).
    pub fn level_values(&self, t: &FiniteTower) -> Option<Vec<Rational>> {
        if !self.is_level_uniform() {
            return None;
        }
        let mut out = vec![Rational::zero(); t.tau_max() as usize];
        for ((_, ell), v) in &self.values {
            out[*ell as usize] = v.clone();
        }
        Some(out)
    }

    /// The log-Hölder seminorm over same-level cell pairs, with the distance between
    /// cells whose words first differ at index `s` taken as `xi^(eta * s)`.
    pub fn log_seminorm(&self, xi: f64, eta: f64) -> f64 {
        let mut worst = 0.0f64;
        let cells: Vec<(&Cell, &Rational)> = self.values.iter().collect();
        for (i, ((w1, l1), v1)) in cells.iter().enumerate() {
            for ((w2, l2), v2) in &cells[i + 1..] {
                if l1 != l2 || w1 == w2 || v1 == v2 {
                    continue;
                }
                if v1.is_zero() || v2.is_zero() {
                    return f64::INFINITY;
                }
                let s = w1.iter().zip(w2.iter()).take_while(|(a, b)| a == b).count();
                let d = xi.powf(eta * s as f64);
                let gap = (rational::to_f64(v1).ln() - rational::to_f64(v2).ln()).abs();
                worst = worst.max(gap / d);
            }
        }
        worst
    }
}

/// `L^n psi` for the transfer operator of the tower map with respect to `m_Delta`.
/// Exact at every depth: climbing levels is measure preserving, and the base value at
/// `b_1..b_D` collects `m(a) psi(a b_1..b_{D-1}, tau(a) - 1)` over letters `a`.
pub fn transfer_apply(t: &FiniteTower, psi: &Density, n: usize) -> Density {
    let mut cur = psi.clone();
    for _ in 0..n {
        let mut values = BTreeMap::new();
        for (w, ell) in cur.values.keys() {
            let v = if *ell > 0 {
                cur.values[&(w.clone(), ell - 1)].clone()
            } else {
                let tail = &w[..w.len() - 1];
                (0..t.alphabet())
                    .map(|a| {
                        let mut src = Vec::with_capacity(w.len());
                        src.push(a as u32);
                        src.extend_from_slice(tail);
                        &t.masses[a] * &cur.values[&(src, t.taus[a] - 1)]
                    })
                    .sum()
            };
            values.insert((w.clone(), *ell), v);
        }
        cur = Density { depth: cur.depth, values };
    }
    cur
}

/// `int psi * (phi o f) dm_Delta` for `phi` constant on cells one level coarser than `psi`.
pub fn pair_with_composition(t: &FiniteTower, psi: &Density, phi: &Density) -> Result<Rational> {
    if phi.depth + 1 != psi.depth {
        return Err(Error::InvalidArgument("phi must be one depth coarser than psi".into()));
    }
    let mut acc = Rational::zero();
    for ((w, ell), v) in &psi.values {
        let image = if ell + 1 < t.taus[w[0] as usize] {
            phi.values[&(w[..phi.depth].to_vec(), ell + 1)].clone()
        } else {
            phi.values[&(w[1..].to_vec(), 0)].clone()
        };
        acc += v * image * t.cell_mass(w);
    }
    Ok(acc)
}

/// `E_k`: the base for `k = 0`, otherwise cells `k` steps below their roof above the base.
pub fn in_e(t: &FiniteTower, cell: &Cell, k: u32) -> bool {
    let (w, ell) = cell;
    if k == 0 {
        *ell == 0
    } else {
        *ell >= 1 && t.taus[w[0] as usize] == ell + k
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_models::{doubling_first_return, piecewise_linear_gm, truncate_renormalized};
    use crate::rational::rat;
    use crate::rng;
    use rand::Rng;

    pub(crate) fn doubling3() -> FiniteTower {
        FiniteTower::new(truncate_renormalized(&doubling_first_return(), 3).unwrap()).unwrap()
    }

    #[test]
    fn truncated_doubling_constants() {
        let t = doubling3();
        assert_eq!(t.tau_bar, rat(11, 7));
        let total: Rational = (0..3).map(|l| t.level_mass(l)).sum();
        assert_eq!(total, int(1));
        assert_eq!(t.level_mass(1), rat(3, 11));
    }

    #[test]
    fn non_mixing_rejected() {
        let s = piecewise_linear_gm(&[rat(1, 2), rat(1, 2)], &[2, 4]).unwrap();
        assert!(matches!(FiniteTower::new(s), Err(Error::NotMixing(2))));
        assert!(FiniteTower::new(doubling_first_return()).is_err());
    }

    #[test]
    fn full_shift_uniform_is_invariant() {
        let s = piecewise_linear_gm(&[rat(1, 2), rat(1, 2)], &[1, 1]).unwrap();
        let t = FiniteTower::new(s).unwrap();
        let one = Density::from_fn(&t, 2, |_, _| int(1)).unwrap();
        assert_eq!(transfer_apply(&t, &one, 1), one);
        assert_eq!(transfer_apply(&t, &one, 0), one);
    }

    #[test]
    fn duality_on_random_test_functions() {
        let t = doubling3();
        let psi = transfer_apply(&t, &Density::reference(&t, 2).unwrap(), 0);
        let lpsi = transfer_apply(&t, &psi, 1);
        let mut rng = rng::stream(11, &[]);
        for _ in 0..10 {
            let phi = Density::from_fn(&t, 1, |_, _| rat(rng.gen_range(0..20), rng.gen_range(1..9))).unwrap();
            let left: Rational = lpsi.cells().map(|((w, l), v)| v * &phi.values[&(w[..1].to_vec(), *l)] * t.cell_mass(w)).sum();
            assert_eq!(left, pair_with_composition(&t, &psi, &phi).unwrap());
        }
    }

    #[test]
    fn duality_at_depth_three_with_nonuniform_density() {
        let t = doubling3();
        let mut rng = rng::stream(12, &[]);
        let psi = Density::from_fn(&t, 3, |_, _| rat(rng.gen_range(0..30), 7)).unwrap();
        let lpsi = transfer_apply(&t, &psi, 1);
        for _ in 0..10 {
            let phi = Density::from_fn(&t, 2, |_, _| rat(rng.gen_range(0..20), rng.gen_range(1..9))).unwrap();
            let left: Rational = lpsi.cells().map(|((w, l), v)| v * &phi.values[&(w[..2].to_vec(), *l)] * t.cell_mass(w)).sum();
            assert_eq!(left, pair_with_composition(&t, &psi, &phi).unwrap());
        }
    }

    #[test]
    fn transfer_preserves_mass_and_uniformity() {
        let t = doubling3();
        let b = Density::reference(&t, 1).unwrap();
        let u = t.renewal(40);
        let mut cur = b.clone();
        for n in 1..=40usize {
            cur = transfer_apply(&t, &cur, 1);
            assert_eq!(cur.integral(&t), int(1));
            let lv = cur.level_values(&t).unwrap();
            // Oracle: the base value of L^n(tau_bar 1_base) is tau_bar * u_n.
            assert_eq!(lv[0], &t.tau_bar * &u[n]);
        }
        assert!(cur.log_seminorm(0.5, 1.0) == 0.0);
    }

    #[test]
    fn e_sets_partition_the_tower() {
        let t = doubling3();
        let one = Density::from_fn(&t, 1, |_, _| int(1)).unwrap();
        let total: Rational = (0..3).map(|k| one.integral_where(&t, |c| in_e(&t, c, k))).sum();
        assert_eq!(total, int(1));
        for k in 0..3 {
            assert_eq!(one.integral_where(&t, |c| in_e(&t, c, k)), t.level_mass(k));
        }
    }
}
