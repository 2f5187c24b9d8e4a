//! Replays the decomposition at time zero on cylinder cells and exports the word law.
//!
//! Functions live on the minimal words `u` with `h(u) >= C`. At a clock `c <= C` every
//! cell either has a return at `c` (then its prefix of height `c` is the resolved word)
//! or is still climbing, and the class of a cell is the time to its next return.

use super::decompose::WordDecomposition;
use super::tower::FiniteTower;
use super::water::Allocator;
use crate::error::{Error, Result};
use crate::rational::{self, Rational, Scalar};
use crate::tower_coding::{Bridge, GeometricTail, HeightLaw, Remainder, Word, WordLaw};
use num::{One, Signed, Zero};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy)]
pub struct ExportOptions {
    /// Heights up to `cutoff` get explicit word masses.
    pub cutoff: u64,
    /// Largest height the sampling bridge can produce.
    pub bridge_max: u64,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions { cutoff: 10, bridge_max: 4096 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeZeroReport {
    pub cutoff: u64,
    pub cells: usize,
    pub clocks_checked: usize,
    pub words: usize,
    /// Pending mass, base mass and class masses equal the pushed computation at every clock.
    pub matches_pushforward: bool,
    /// Word masses at each height sum to `P(r = h)`.
    pub heights_match_law: bool,
    pub remainder_nonnegative: bool,
    #[serde(with = "rational::as_string")]
    pub remainder_mass: Rational,
}

struct Cell {
    word: Vec<u32>,
    mass: Rational,
    returns: Vec<u64>,
}

fn cells(t: &FiniteTower, cutoff: u64) -> Vec<Cell> {
    let mut out = Vec::new();
    let mut stack = vec![(Vec::new(), Rational::one(), vec![0u64])];
    while let Some((word, mass, returns)) = stack.pop() {
        let h = *returns.last().unwrap();
        if h >= cutoff && !word.is_empty() {
            out.push(Cell { word, mass, returns });
            continue;
        }
        for a in (0..t.alphabet()).rev() {
            let mut w = word.clone();
            w.push(a as u32);
            let mut r = returns.clone();
            r.push(h + t.taus[a] as u64);
            stack.push((w, &mass * &t.masses[a], r));
        }
    }
    out
}

/// The resolved words `(v, P(v))` with `h(v) <= cutoff` (the empty word included)
/// and the remainder mass on each cell.
pub struct TimeZero {
    pub words: Vec<(Vec<u32>, Rational)>,
    pub remainder: Vec<(Vec<u32>, u64, Rational)>,
    pub report: TimeZeroReport,
}

pub fn time_zero(t: &FiniteTower, d: &WordDecomposition, cutoff: u64) -> Result<TimeZero> {
    let plan = &d.plan;
    let n = plan.n;
    if cutoff == 0 || cutoff > d.horizon {
        return Err(Error::InvalidArgument(format!("cutoff must lie in 1..={}", d.horizon)));
    }
    let cs = cells(t, cutoff);
    let tb = &t.tau_bar;
    let p_minus1 = plan.p_minus1();
    let mut pending: BTreeMap<u64, Vec<Rational>> = BTreeMap::new();
    pending.insert(0, vec![tb.clone(); cs.len()]);
    let mut flat_total = vec![Rational::zero(); cs.len()];
    let mut words: BTreeMap<Vec<u32>, Rational> = BTreeMap::new();
    let mut matches = true;
    let mut clocks_checked = 0;

    let mass_of = |f: &[Rational], keep: &dyn Fn(usize) -> bool| -> Rational {
        cs.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(i, c)| &f[i] * &c.mass).sum::<Rational>() / tb
    };

    while let Some((c, f)) = pending.pop_first() {
        if c > cutoff {
            break;
        }
        let rec = d.records.iter().find(|r| r.clock == c);
        let m = mass_of(&f, &|_| true);
        let renews: Vec<bool> = cs.iter().map(|cell| cell.returns.contains(&c)).collect();
        let base = mass_of(&f, &|i| renews[i]);
        let tt = &p_minus1 * &m / &base;

        // Flat part: t times the average of f over each resolved word's cylinder.
        let mut groups: BTreeMap<Vec<u32>, (Rational, Rational)> = BTreeMap::new();
        for (i, cell) in cs.iter().enumerate() {
            if renews[i] {
                let len = cell.returns.iter().position(|&r| r == c).unwrap();
                let e = groups.entry(cell.word[..len].to_vec()).or_insert((Rational::zero(), Rational::zero()));
                e.0 += &f[i] * &cell.mass;
                e.1 += &cell.mass;
            }
        }
        let mut g = f.clone();
        for (i, cell) in cs.iter().enumerate() {
            if renews[i] {
                let len = cell.returns.iter().position(|&r| r == c).unwrap();
                let (fm, mm) = &groups[&cell.word[..len]];
                let flat = &tt * fm / mm;
                g[i] -= &flat;
                flat_total[i] += flat;
                if g[i].is_negative() {
                    return Err(Error::NegativeDensity { clock: c });
                }
            }
        }
        for (v, (fm, _)) in groups {
            let p = &tt * fm / tb;
            if !p.is_zero() {
                *words.entry(v).or_insert_with(Rational::zero) += p;
            }
        }

        let class: Vec<usize> = cs.iter().map(|cell| (*cell.returns.iter().find(|&&r| r >= c).unwrap() - c) as usize).collect();
        let width = t.tau_max() as usize;
        let q: Vec<Rational> = (0..width).map(|j| mass_of(&g, &|i| class[i] == j)).collect();
        if let Some(rec) = rec {
            matches &= rec.pending == m && rec.base == base && rec.q == q;
        } else {
            matches = false;
        }
        clocks_checked += 1;

        let mut alloc = Allocator::new(q.clone());
        let mut k = 0;
        while c + k + n <= cutoff {
            let child = pending.entry(c + k + n).or_insert_with(|| vec![Rational::zero(); cs.len()]);
            for (j, a) in alloc.take(k as usize, &(plan.p(k) * &m))? {
                let s = a / &q[j];
                for i in 0..cs.len() {
                    if class[i] == j {
                        child[i] += &s * &g[i];
                    }
                }
            }
            k += n;
        }
    }

    let remainder: Vec<(Vec<u32>, u64, Rational)> = cs
        .iter()
        .zip(&flat_total)
        .map(|(cell, fl)| (cell.word.clone(), *cell.returns.last().unwrap(), (tb - fl) * &cell.mass / tb))
        .collect();
    let remainder_nonnegative = remainder.iter().all(|r| !r.2.is_negative());
    let remainder_mass: Rational = remainder.iter().map(|r| r.2.clone()).sum();

    let mut by_height: BTreeMap<u64, Rational> = BTreeMap::new();
    for (v, p) in &words {
        let h: u64 = v.iter().map(|&a| t.taus[a as usize] as u64).sum();
        *by_height.entry(h).or_insert_with(Rational::zero) += p;
    }
    let resolved_upto: Rational = (0..=cutoff).map(|c| d.r_law.prob(c)).sum();
    let heights_match_law = (0..=cutoff).all(|h| by_height.get(&h).cloned().unwrap_or_else(Rational::zero) == d.r_law.prob(h))
        && remainder_mass == Rational::one() - resolved_upto;

    let report = TimeZeroReport {
        cutoff,
        cells: cs.len(),
        clocks_checked,
        words: words.len(),
        matches_pushforward: matches,
        heights_match_law,
        remainder_nonnegative,
        remainder_mass,
    };
    Ok(TimeZero { words: words.into_iter().collect(), remainder, report })
}

/// The word law of the decomposition with the empty word removed and the rest renormalized
/// by `1 / (1 - p_{-1})`. Heights follow `P(h = nN) = C_2 theta^n / (1 - p_{-1})`.
pub fn export_geometric_law(t: &FiniteTower, d: &WordDecomposition, opts: ExportOptions) -> Result<(WordLaw, TimeZeroReport)> {
    let tz = time_zero(t, d, opts.cutoff)?;
    let rep = &tz.report;
    if !(rep.matches_pushforward && rep.heights_match_law && rep.remainder_nonnegative) {
        return Err(Error::InvalidArgument("time-zero replay disagrees with the pushed decomposition".into()));
    }
    let norm = Rational::one() / (Rational::one() - d.plan.p_minus1());
    let mut words: BTreeMap<u64, Vec<(Word, Scalar)>> = BTreeMap::new();
    for (v, p) in tz.words {
        if v.is_empty() {
            continue;
        }
        let w = Word::new(v)?;
        words.entry(w.height(&t.scheme)).or_default().push((w, Scalar::Exact(p * &norm)));
    }
    let law = &d.r_law;
    let tail = GeometricTail {
        start: law.n,
        step: law.n,
        first: Scalar::Exact(&law.c2 * &law.theta * &norm),
        ratio: Scalar::Exact(law.theta.clone()),
    };
    let remainder = Remainder {
        cutoff: opts.cutoff,
        cells: tz
            .remainder
            .into_iter()
            .map(|(v, h, p)| Ok((Word::new(v)?, h, Scalar::Exact(p * &norm))))
            .collect::<Result<_>>()?,
        letter_masses: t.masses.iter().cloned().map(Scalar::Exact).collect(),
    };
    let out = WordLaw {
        name: format!("geometric tail (N = {})", law.n),
        heights: HeightLaw { atoms: Vec::new(), tail: Some(tail) },
        words,
        bridge: Some(Bridge::new(&t.scheme, opts.bridge_max)),
        remainder: Some(remainder),
    };
    Ok((out, tz.report))
}
