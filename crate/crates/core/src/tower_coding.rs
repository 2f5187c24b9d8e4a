//! The Bernoulli tower over a word law, and the coding maps back into `[0, 1]`.
//!
//! Infinite sequences are finite prefixes; every coded point carries a radius.

use crate::error::{Error, Result};
use crate::map_models::InducedScheme;
use crate::rational::{self, Rational, Scalar};
use crate::rng;
use num::{One, Zero};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A nonempty finite sequence of branch indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    letters: Vec<u32>,
}

impl Word {
    pub fn new(letters: Vec<u32>) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::InvalidWord("empty word".into()));
        }
        Ok(Word { letters })
    }

    pub fn letter(a: u32) -> Self {
        Word { letters: vec![a] }
    }

    pub fn letters(&self) -> &[u32] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        Word { letters }
    }

    pub fn height(&self, s: &InducedScheme) -> u64 {
        self.letters.iter().map(|&a| s.branches[a as usize].tau as u64).sum()
    }

    pub fn symbols(&self, s: &InducedScheme) -> Vec<String> {
        self.letters.iter().map(|&a| s.branches[a as usize].symbol.clone()).collect()
    }

    pub fn check(&self, s: &InducedScheme) -> Result<()> {
        match self.letters.iter().find(|&&a| a as usize >= s.len()) {
            Some(a) => Err(Error::InvalidWord(format!("letter index {a} not in a {}-letter alphabet", s.len()))),
            None => Ok(()),
        }
    }
}

/// Parses whitespace-separated symbols such as `"a_1 a_2"`.
pub fn parse_word(s: &InducedScheme, text: &str) -> Result<Word> {
    let letters = text
        .split_whitespace()
        .map(|sym| {
            s.symbol_index(sym)
                .map(|i| i as u32)
                .ok_or_else(|| Error::InvalidWord(format!("unknown symbol {sym:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Word::new(letters)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cylinder {
    pub word: Word,
    /// Normalized `Y` coordinates.
    pub interval: [f64; 2],
    pub exact_interval: Option<[Rational; 2]>,
    pub exact_mass: Option<Rational>,
}

impl Cylinder {
    pub fn mass(&self) -> f64 {
        self.exact_mass.as_ref().map_or(self.interval[1] - self.interval[0], rational::to_f64)
    }
}

fn letters_interval(s: &InducedScheme, letters: &[u32]) -> Result<[f64; 2]> {
    let (mut lo, mut hi) = (0.0, 1.0);
    for &a in letters.iter().rev() {
        lo = s.inverse(a as usize, lo)?;
        hi = s.inverse(a as usize, hi)?;
    }
    Ok([lo, hi])
}

fn letters_interval_exact(s: &InducedScheme, letters: &[u32]) -> Option<[Rational; 2]> {
    let (mut lo, mut hi) = (Rational::zero(), Rational::one());
    for &a in letters.iter().rev() {
        lo = s.inverse_exact(a as usize, &lo)?;
        hi = s.inverse_exact(a as usize, &hi)?;
    }
    Some([lo, hi])
}

/// `Y_w`: preimage of `Y` under the composed branches of `w`.
pub fn cylinder_of(word: &Word, s: &InducedScheme) -> Result<Cylinder> {
    word.check(s)?;
    let exact_interval = if s.is_exact() { letters_interval_exact(s, word.letters()) } else { None };
    let interval = match &exact_interval {
        Some([lo, hi]) => [rational::to_f64(lo), rational::to_f64(hi)],
        None => letters_interval(s, word.letters())?,
    };
    let exact_mass = exact_interval.as_ref().map(|[lo, hi]| hi - lo);
    Ok(Cylinder { word: word.clone(), interval, exact_interval, exact_mass })
}

/// A coded point in ambient coordinates with a certified radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coded {
    pub value: f64,
    pub radius: f64,
}

fn coding_radius(s: &InducedScheme, n_letters: usize) -> f64 {
    s.lambda.powi(-(n_letters.min(i32::MAX as usize) as i32)) * s.diam_y()
}

fn code_letters(s: &InducedScheme, letters: &[u32]) -> Result<Coded> {
    let [lo, hi] = letters_interval(s, letters)?;
    Ok(Coded { value: s.to_ambient(0.5 * (lo + hi)), radius: coding_radius(s, letters.len()) + 1e-13 })
}

/// `pi_X`: the point of `Y` coded by the concatenated prefix.
pub fn pi_x(prefix: &[Word], s: &InducedScheme) -> Result<Coded> {
    if prefix.is_empty() {
        return Err(Error::InvalidArgument("pi_X needs a nonempty prefix".into()));
    }
    let letters: Vec<u32> = prefix.iter().flat_map(|w| w.letters().iter().copied()).collect();
    for w in prefix {
        w.check(s)?;
    }
    code_letters(s, &letters)
}

/// A point `(x, level)` of the tower with `x` known through a finite prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerPoint {
    prefix: Vec<Word>,
    level: u64,
}

impl TowerPoint {
    pub fn new(prefix: Vec<Word>, level: u64, s: &InducedScheme) -> Result<Self> {
        let first = prefix.first().ok_or_else(|| Error::InvalidArgument("empty prefix".into()))?;
        for w in &prefix {
            w.check(s)?;
        }
        let roof = first.height(s);
        if level >= roof {
            return Err(Error::LevelAboveRoof { level, roof });
        }
        Ok(TowerPoint { prefix, level })
    }

    pub fn prefix(&self) -> &[Word] {
        &self.prefix
    }

    pub fn level(&self) -> u64 {
        self.level
    }

    /// The tower map: climb one level, or return to the base and shift.
    pub fn step(&self, s: &InducedScheme) -> Result<TowerPoint> {
        if self.level + 1 < self.prefix[0].height(s) {
            return Ok(TowerPoint { prefix: self.prefix.clone(), level: self.level + 1 });
        }
        if self.prefix.len() < 2 {
            return Err(Error::WindowExhausted("prefix consumed by the tower map".into()));
        }
        Ok(TowerPoint { prefix: self.prefix[1..].to_vec(), level: 0 })
    }
}

/// Separation time of two base prefixes; a lower bound when one is a prefix of the other.
pub fn separation_time(x: &[Word], y: &[Word]) -> usize {
    x.iter().zip(y).take_while(|(a, b)| a == b).count()
}

/// `xi = 1 / lambda`.
pub fn xi(s: &InducedScheme) -> f64 {
    1.0 / s.lambda
}

pub fn tower_distance(p: &TowerPoint, q: &TowerPoint, s: &InducedScheme) -> f64 {
    if p.level != q.level {
        return 1.0;
    }
    xi(s).powi(separation_time(&p.prefix, &q.prefix) as i32)
}

/// `pi(x, l) = T^l(pi_X(x))`, evaluated from the shifted coding to avoid forward error growth.
pub fn pi(p: &TowerPoint, s: &InducedScheme) -> Result<Coded> {
    let letters: Vec<u32> = p.prefix.iter().flat_map(|w| w.letters().iter().copied()).collect();
    let mut ell = p.level;
    let mut k = 0;
    while ell >= s.branches[letters[k] as usize].tau as u64 {
        ell -= s.branches[letters[k] as usize].tau as u64;
        k += 1;
    }
    let rest = &letters[k..];
    let base = code_letters(s, rest)?;
    if ell == 0 {
        return Ok(base);
    }
    let a = rest[0] as usize;
    let [lo, hi] = letters_interval(s, rest)?;
    let mid = 0.5 * (lo + hi);
    // `T^ell` multiplies the rounding error of `mid` by the expansion at every step.
    let exact = if s.is_exact() { exact_intermediate(s, rest, ell as u32) } else { None };
    let value = match exact {
        Some(x) => x,
        None => s.intermediate(a, mid, ell as u32)?,
    };
    let radius = s.intermediate_c * coding_radius(s, rest.len() - 1) + 1e-12;
    Ok(Coded { value, radius })
}

/// Only the first letter is inverted exactly: `T^ell` with `ell < tau` expands by at most
/// what that inverse contracted, so the float rounding of the tail stays at the last bit.
fn exact_intermediate(s: &InducedScheme, letters: &[u32], ell: u32) -> Option<f64> {
    let tail = if letters.len() > 1 {
        let [lo, hi] = letters_interval(s, &letters[1..]).ok()?;
        0.5 * (lo + hi)
    } else {
        0.5
    };
    let u = s.inverse_exact(letters[0] as usize, &Rational::from_float(tail)?)?;
    let (y0, y1) = (Rational::from_float(s.y_embedding[0])?, Rational::from_float(s.y_embedding[1])?);
    let x = &y0 + u * (y1 - &y0);
    s.ambient_iterate_exact(&x, ell).map(|y| rational::to_f64(&y))
}

/// Lipschitz constant of the ambient map, used to propagate coding radii.
fn ambient_lipschitz(s: &InducedScheme) -> f64 {
    use crate::map_models::Ambient;
    match s.ambient {
        Ambient::Doubling => 2.0,
        Ambient::Lsv { gamma } => 2.0 + gamma,
        Ambient::InducedOnly => (0..s.len()).map(|a| s.induced_derivative(a, 0.5)).fold(0.0, f64::max),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiconjugacyReport {
    pub points: usize,
    pub steps: usize,
    pub depth: usize,
    pub max_discrepancy: f64,
    pub max_bound: f64,
    pub violations: u64,
}

impl SemiconjugacyReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Letter sampler weighted by the represented branch masses.
pub fn letter_sampler(s: &InducedScheme) -> WeightedIndex<f64> {
    WeightedIndex::new(s.branches.iter().map(|b| b.measure)).expect("positive branch masses")
}

/// Compares `T(pi(p))` with `pi(f(p))` along tower orbits started from points
/// whose base sequence is iid with law `m(a)`.
pub fn check_semiconjugacy(
    s: &InducedScheme,
    n_points: usize,
    n_steps: usize,
    depth: usize,
    seed: u64,
) -> Result<SemiconjugacyReport> {
    if !s.has_ambient_map() {
        return Err(Error::Unsupported("semiconjugacy needs an ambient map".into()));
    }
    let lip = ambient_lipschitz(s);
    let sampler = letter_sampler(s);
    let results: Vec<Result<(f64, f64, u64)>> = (0..n_points)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, &[i as u64]);
            // Each step shifts at most one word, so keep `depth` letters in reserve.
            let prefix: Vec<Word> =
                (0..depth + n_steps + 1).map(|_| Word::letter(sampler.sample(&mut rng) as u32)).collect();
            let roof = prefix[0].height(s);
            let mut p = TowerPoint::new(prefix, rng.gen_range(0..roof), s)?;
            let (mut worst, mut bound, mut bad) = (0.0f64, 0.0f64, 0u64);
            for _ in 0..n_steps {
                let here = pi(&p, s)?;
                let next = p.step(s)?;
                let there = pi(&next, s)?;
                let gap = (s.ambient_map(here.value)? - there.value).abs();
                let allowed = lip * here.radius + there.radius + 1e-12;
                worst = worst.max(gap);
                bound = bound.max(allowed);
                if gap > allowed {
                    bad += 1;
                }
                p = next;
            }
            Ok((worst, bound, bad))
        })
        .collect();
    let mut report =
        SemiconjugacyReport { points: n_points, steps: n_steps, depth, max_discrepancy: 0.0, max_bound: 0.0, violations: 0 };
    for r in results {
        let (w, b, v) = r?;
        report.max_discrepancy = report.max_discrepancy.max(w);
        report.max_bound = report.max_bound.max(b);
        report.violations += v;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Word laws

/// Geometric tail of a height law: mass `first * ratio^k` at `start + k * step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricTail {
    pub start: u64,
    pub step: u64,
    pub first: Scalar,
    pub ratio: Scalar,
}

/// Law of `h_A(w)`: explicit atoms plus an optional geometric tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightLaw {
    pub atoms: Vec<(u64, Scalar)>,
    pub tail: Option<GeometricTail>,
}

impl HeightLaw {
    pub fn total(&self) -> f64 {
        let t = self.tail.as_ref().map_or(0.0, |g| g.first.to_f64() / (1.0 - g.ratio.to_f64()));
        self.atoms.iter().map(|(_, p)| p.to_f64()).sum::<f64>() + t
    }

    pub fn total_exact(&self) -> Option<Rational> {
        let mut acc = Rational::zero();
        for (_, p) in &self.atoms {
            acc += p.exact()?;
        }
        if let Some(g) = &self.tail {
            acc += g.first.exact()? / (Rational::one() - g.ratio.exact()?);
        }
        Some(acc)
    }

    pub fn mass_at(&self, n: u64) -> f64 {
        let mut p: f64 = self.atoms.iter().filter(|(h, _)| *h == n).map(|(_, q)| q.to_f64()).sum();
        if let Some(g) = &self.tail {
            if n >= g.start && (n - g.start) % g.step == 0 {
                p += g.first.to_f64() * g.ratio.to_f64().powi(((n - g.start) / g.step) as i32);
            }
        }
        p
    }

    /// `P(h >= ell)` (unnormalized).
    pub fn tail_prob(&self, ell: u64) -> f64 {
        let mut p: f64 = self.atoms.iter().filter(|(h, _)| *h >= ell).map(|(_, q)| q.to_f64()).sum();
        if let Some(g) = &self.tail {
            let k = if ell <= g.start { 0 } else { (ell - g.start).div_ceil(g.step) };
            let r = g.ratio.to_f64();
            p += g.first.to_f64() * r.powi(k as i32) / (1.0 - r);
        }
        p
    }

    pub fn mean(&self) -> f64 {
        let mut m: f64 = self.atoms.iter().map(|(h, q)| *h as f64 * q.to_f64()).sum();
        if let Some(g) = &self.tail {
            let (a, r) = (g.first.to_f64(), g.ratio.to_f64());
            m += a * (g.start as f64 / (1.0 - r) + g.step as f64 * r / (1.0 - r).powi(2));
        }
        m / self.total()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let total = self.total();
        let mut u = rng.gen::<f64>() * total;
        for (h, q) in &self.atoms {
            let q = q.to_f64();
            if u < q {
                return *h;
            }
            u -= q;
        }
        match &self.tail {
            Some(g) => {
                // Inverse CDF of the geometric index given we are in the tail.
                let r = g.ratio.to_f64();
                let v: f64 = rng.gen::<f64>();
                let k = ((1.0 - v).ln() / r.ln()).floor().max(0.0) as u64;
                g.start + k * g.step
            }
            None => self.atoms.last().map_or(0, |(h, _)| *h),
        }
    }
}

/// Conditional word law for heights without explicit words: words of height `n`
/// weighted by `prod m(a_i)` (an `m`-bridge), sampled with a renewal table.
#[derive(Debug, Clone, PartialEq)]
pub struct Bridge {
    masses: Vec<f64>,
    taus: Vec<u64>,
    renewal: Vec<f64>,
}

impl Bridge {
    pub fn new(s: &InducedScheme, max_height: u64) -> Self {
        let masses: Vec<f64> = s.branches.iter().map(|b| b.measure).collect();
        let taus: Vec<u64> = s.branches.iter().map(|b| b.tau as u64).collect();
        let mut renewal = vec![0.0; max_height as usize + 1];
        renewal[0] = 1.0;
        for n in 1..=max_height as usize {
            renewal[n] = masses
                .iter()
                .zip(&taus)
                .filter(|(_, &t)| t as usize <= n)
                .map(|(m, &t)| m * renewal[n - t as usize])
                .sum();
        }
        Bridge { masses, taus, renewal }
    }

    pub fn max_height(&self) -> u64 {
        self.renewal.len() as u64 - 1
    }

    /// Renewal probability that some partial sum of return times equals `n`.
    pub fn renewal(&self, n: u64) -> f64 {
        self.renewal.get(n as usize).copied().unwrap_or(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> Result<Word> {
        if n == 0 || n > self.max_height() {
            return Err(Error::InvalidArgument(format!("bridge height {n} outside 1..={}", self.max_height())));
        }
        if self.renewal(n) <= 0.0 {
            return Err(Error::EmptyHeight(n));
        }
        let mut left = n as usize;
        let mut letters = Vec::new();
        while left > 0 {
            let weights: Vec<f64> = self
                .masses
                .iter()
                .zip(&self.taus)
                .map(|(m, &t)| if t as usize <= left { m * self.renewal[left - t as usize] } else { 0.0 })
                .collect();
            let a = WeightedIndex::new(&weights).map_err(|_| Error::EmptyHeight(n))?.sample(rng);
            letters.push(a as u32);
            left -= self.taus[a] as usize;
        }
        Word::new(letters)
    }
}

/// A probability law on words, organized by height.
#[derive(Debug, Clone, PartialEq)]
pub struct WordLaw {
    pub name: String,
    pub heights: HeightLaw,
    /// Explicit joint masses `P_A(w)`, grouped by height.
    pub words: BTreeMap<u64, Vec<(Word, Scalar)>>,
    /// Used for heights absent from `words`.
    pub bridge: Option<Bridge>,
    pub remainder: Option<Remainder>,
}

/// Mass of words taller than `cutoff`, as masses on the minimal words `c` with
/// `h(c) >= cutoff`. Inside each cell the mass is spread like `m` restricted to `Y_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Remainder {
    pub cutoff: u64,
    pub cells: Vec<(Word, u64, Scalar)>,
    pub letter_masses: Vec<Scalar>,
}

impl Remainder {
    fn is_exact(&self) -> bool {
        self.cells.iter().all(|c| c.2.exact().is_some()) && self.letter_masses.iter().all(|m| m.exact().is_some())
    }

    /// Words of height `n > cutoff`: a cell chosen with weight `rem(c) u_{n - h(c)}`,
    /// then an `m`-bridge of the remaining height.
    fn sample<R: Rng + ?Sized>(&self, bridge: &Bridge, n: u64, rng: &mut R) -> Result<Word> {
        let weights: Vec<f64> = self
            .cells
            .iter()
            .map(|(_, h, p)| if *h <= n { p.to_f64() * bridge.renewal(n - h) } else { 0.0 })
            .collect();
        let idx = WeightedIndex::new(&weights).map_err(|_| Error::EmptyHeight(n))?.sample(rng);
        let (cell, h, _) = &self.cells[idx];
        if *h == n {
            Ok(cell.clone())
        } else {
            Ok(cell.concat(&bridge.sample(n - h, rng)?))
        }
    }
}

impl WordLaw {
    /// Finite law from explicit word masses.
    pub fn explicit(name: &str, s: &InducedScheme, entries: Vec<(Word, Scalar)>) -> Result<Self> {
        let mut words: BTreeMap<u64, Vec<(Word, Scalar)>> = BTreeMap::new();
        for (w, p) in entries {
            w.check(s)?;
            words.entry(w.height(s)).or_default().push((w, p));
        }
        let atoms = words
            .iter()
            .map(|(&h, ws)| {
                let exact: Option<Rational> = ws.iter().map(|(_, p)| p.exact().cloned()).sum();
                let mass = match exact {
                    Some(q) => Scalar::Exact(q),
                    None => Scalar::Float(ws.iter().map(|(_, p)| p.to_f64()).sum()),
                };
                (h, mass)
            })
            .collect();
        Ok(WordLaw { name: name.into(), heights: HeightLaw { atoms, tail: None }, words, bridge: None, remainder: None })
    }

    pub fn is_finite(&self) -> bool {
        self.heights.tail.is_none() && self.bridge.is_none() && self.remainder.is_none()
    }

    pub fn entries(&self) -> impl Iterator<Item = &(Word, Scalar)> {
        self.words.values().flatten()
    }

    pub fn total(&self) -> f64 {
        self.heights.total()
    }

    pub fn mean_height(&self) -> f64 {
        self.heights.mean()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Word> {
        let n = self.heights.sample(rng);
        self.sample_given_height(n, rng)
    }

    pub fn sample_given_height<R: Rng + ?Sized>(&self, n: u64, rng: &mut R) -> Result<Word> {
        if let (Some(rem), Some(b)) = (&self.remainder, &self.bridge) {
            if n > rem.cutoff {
                return rem.sample(b, n, rng);
            }
        }
        match (self.words.get(&n), &self.bridge) {
            (Some(ws), _) => {
                let idx = WeightedIndex::new(ws.iter().map(|(_, p)| p.to_f64())).map_err(|_| Error::EmptyHeight(n))?;
                Ok(ws[idx.sample(rng)].0.clone())
            }
            (None, Some(b)) => b.sample(n, rng),
            (None, None) => Err(Error::EmptyHeight(n)),
        }
    }

    /// `P_X(x starts with the letters v)`, for finite exact laws and exact laws with a remainder.
    pub fn prefix_prob_exact(&self, v: &[u32]) -> Option<Rational> {
        let exact_rem = match &self.remainder {
            Some(r) if r.is_exact() => Some(r),
            Some(_) => return None,
            None if self.is_finite() => None,
            None => return None,
        };
        let entries: Vec<(&Word, Rational)> =
            self.entries().map(|(w, p)| p.exact().cloned().map(|p| (w, p))).collect::<Option<_>>()?;
        Some(prefix_prob_rec(&entries, exact_rem, v))
    }

    pub fn has_exact_prefixes(&self) -> bool {
        self.prefix_prob_exact(&[0]).is_some()
    }
}

fn prefix_prob_rec(entries: &[(&Word, Rational)], rem: Option<&Remainder>, v: &[u32]) -> Rational {
    if v.is_empty() {
        return Rational::one();
    }
    let mut acc = Rational::zero();
    if let Some(rem) = rem {
        for (c, _, p) in &rem.cells {
            let l = c.letters();
            let p = p.exact().unwrap();
            if l.len() >= v.len() {
                if l[..v.len()] == *v {
                    acc += p;
                }
            } else if v[..l.len()] == *l {
                let inside: Rational = v[l.len()..].iter().map(|&a| rem.letter_masses[a as usize].exact().unwrap().clone()).product();
                acc += p * inside;
            }
        }
    }
    for (w, p) in entries {
        let l = w.letters();
        if l.len() >= v.len() {
            if l[..v.len()] == *v {
                acc += p;
            }
        } else if v[..l.len()] == *l {
            acc += p * prefix_prob_rec(entries, rem, &v[l.len()..]);
        }
    }
    acc
}

/// The Bernoulli tower measure built over a word law.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerMeasure {
    pub law: WordLaw,
    pub mean_height: f64,
}

impl TowerMeasure {
    pub fn new(law: WordLaw) -> Self {
        let mean_height = law.mean_height();
        TowerMeasure { law, mean_height }
    }

    /// `P(Delta_ell) = P_A(h > ell) / mean height`.
    pub fn level_mass(&self, ell: u64) -> f64 {
        self.law.heights.tail_prob(ell + 1) / self.law.total() / self.mean_height
    }
}

/// Samples `count` words and concatenates them until at least `letters` letters are present.
pub fn sample_prefix<R: Rng + ?Sized>(law: &WordLaw, letters: usize, rng: &mut R) -> Result<Vec<Word>> {
    let mut out = Vec::new();
    let mut n = 0;
    while n < letters {
        let w = law.sample(rng)?;
        n += w.len();
        out.push(w);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushforwardReport {
    pub exact_words_checked: usize,
    pub exact_max_discrepancy: Option<Scalar>,
    pub exact_pass: Option<bool>,
    pub ks_samples: usize,
    pub ks_distance: f64,
    pub ks_threshold: f64,
    pub ks_pass: bool,
}

impl PushforwardReport {
    pub fn passed(&self) -> bool {
        self.ks_pass && self.exact_pass.unwrap_or(true)
    }
}

/// Largest alphabet enumerated by the exact pushforward check.
pub const EXACT_ALPHABET_CAP: usize = 6;

/// Checks `(pi_X)_* P_X = m`: exactly on cylinders of length `<= min(depth, 3)` for
/// exact laws (over the first `EXACT_ALPHABET_CAP` letters), and by a Kolmogorov–Smirnov test on `n_samples` coded points.
pub fn check_pushforward(
    s: &InducedScheme,
    law: &WordLaw,
    depth: usize,
    n_samples: usize,
    seed: u64,
) -> Result<PushforwardReport> {
    let (mut checked, mut worst, mut exact_pass) = (0usize, None, None);
    if s.is_exact() && law.has_exact_prefixes() {
        let alphabet = s.len().min(EXACT_ALPHABET_CAP) as u32;
        let mut max = Rational::zero();
        let mut frontier: Vec<Vec<u32>> = vec![vec![]];
        for _ in 0..depth.min(3) {
            frontier = frontier
                .into_iter()
                .flat_map(|v| (0..alphabet).map(move |a| [v.clone(), vec![a]].concat()))
                .collect();
            for v in &frontier {
                let p = law.prefix_prob_exact(v).expect("finite exact law");
                let m = cylinder_of(&Word::new(v.clone())?, s)?.exact_mass.expect("exact scheme");
                let d = if p > m { p - m } else { m - p };
                if d > max {
                    max = d;
                }
                checked += 1;
            }
        }
        exact_pass = Some(max.is_zero());
        worst = Some(Scalar::Exact(max));
    }
    let letters = 40;
    let mut us: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, &[i as u64]);
            let prefix = sample_prefix(law, letters, &mut rng)?;
            Ok(s.from_ambient(pi_x(&prefix, s)?.value))
        })
        .collect::<Result<_>>()?;
    let ks = ks_uniform(&mut us);
    let threshold = 1.36 / (n_samples.max(1) as f64).sqrt();
    Ok(PushforwardReport {
        exact_words_checked: checked,
        exact_max_discrepancy: worst,
        exact_pass,
        ks_samples: n_samples,
        ks_distance: ks,
        ks_threshold: threshold,
        ks_pass: ks <= threshold,
    })
}

/// KS distance of a sample to the uniform law on `[0, 1]`; sorts in place.
pub fn ks_uniform(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            (x - i as f64 / n).max((i + 1) as f64 / n - x)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub pairs: usize,
    pub constant: f64,
    pub max_ratio: f64,
    pub violations: u64,
}

/// Samples pairs sharing a random number of leading words and checks
/// `|pi(a) - pi(b)| <= lambda * C_ell * diam * d(a, b) + radii`.
pub fn check_lipschitz(s: &InducedScheme, law: &WordLaw, pairs: usize, depth: usize, seed: u64) -> Result<LipschitzReport> {
    let constant = s.lambda * s.intermediate_c * s.diam_lambda;
    let out: Vec<(f64, u64)> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, &[i as u64]);
            let shared = rng.gen_range(0..8usize);
            let common: Vec<Word> = (0..shared).map(|_| law.sample(&mut rng)).collect::<Result<_>>()?;
            let mut x = common.clone();
            let mut y = common;
            x.extend(sample_prefix(law, depth, &mut rng)?);
            y.extend(sample_prefix(law, depth, &mut rng)?);
            let lx = rng.gen_range(0..x[0].height(s));
            let ly = if shared > 0 && rng.gen_bool(0.8) { lx } else { rng.gen_range(0..y[0].height(s)) };
            let (p, q) = (TowerPoint::new(x, lx, s)?, TowerPoint::new(y, ly, s)?);
            let (a, b) = (pi(&p, s)?, pi(&q, s)?);
            let d = tower_distance(&p, &q, s);
            let gap = (a.value - b.value).abs();
            let bad = gap > constant * d + a.radius + b.radius;
            let ratio = if d > 0.0 { (gap - a.radius - b.radius).max(0.0) / d } else { 0.0 };
            Ok((ratio, u64::from(bad)))
        })
        .collect::<Result<_>>()?;
    Ok(LipschitzReport {
        pairs,
        constant,
        max_ratio: out.iter().map(|r| r.0).fold(0.0, f64::max),
        violations: out.iter().map(|r| r.1).sum(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CylinderLine {
    pub word: Vec<String>,
    pub interval: [Scalar; 2],
    pub mass: Scalar,
}

pub fn cylinder_line(c: &Cylinder, s: &InducedScheme) -> CylinderLine {
    let (interval, mass) = match (&c.exact_interval, &c.exact_mass) {
        (Some([lo, hi]), Some(m)) => ([Scalar::Exact(lo.clone()), Scalar::Exact(hi.clone())], Scalar::Exact(m.clone())),
        _ => ([Scalar::Float(c.interval[0]), Scalar::Float(c.interval[1])], Scalar::Float(c.mass())),
    };
    CylinderLine { word: c.word.symbols(s), interval, mass }
}

/// The word law `P_A(a) = m(a)` on single letters.
pub fn letter_law(s: &InducedScheme) -> Result<WordLaw> {
    let entries = (0..s.len())
        .map(|a| {
            let b = &s.branches[a];
            let p = b.measure_exact.clone().map_or(Scalar::Float(b.measure), Scalar::Exact);
            (Word::letter(a as u32), p)
        })
        .collect();
    WordLaw::explicit("single letters", s, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_models::{doubling_first_return, lsv_induced, piecewise_linear_gm};
    use crate::rational::{int, rat};
    use proptest::prelude::*;

    fn w(s: &InducedScheme, t: &str) -> Word {
        parse_word(s, t).unwrap()
    }

    #[test]
    fn high_levels_of_deep_branches_stay_accurate() {
        let s = doubling_first_return();
        let mut letters = vec![29u32];
        letters.extend((0..40).map(|i| (i % 3) as u32));
        let prefix: Vec<Word> = letters.iter().map(|&a| Word::letter(a)).collect();
        let p = TowerPoint::new(prefix, 29, &s).unwrap();
        let [lo, hi] = letters_interval_exact(&s, &letters).unwrap();
        let mut x = (lo + hi) / int(4);
        for _ in 0..29 {
            x = &x * int(2);
            if x >= Rational::one() {
                x -= Rational::one();
            }
        }
        // Iterating a rounded float midpoint would be off by about 2^29 ulps.
        assert!((pi(&p, &s).unwrap().value - rational::to_f64(&x)).abs() < 1e-12);
    }

    #[test]
    fn single_letter_cylinders() {
        let s = doubling_first_return();
        let c = cylinder_of(&w(&s, "a_1"), &s).unwrap();
        assert_eq!(c.exact_interval, Some([int(0), rat(1, 2)]));
        assert_eq!(c.exact_mass, Some(rat(1, 2)));
        for a in 0..5 {
            let c = cylinder_of(&Word::letter(a), &s).unwrap();
            assert_eq!(c.exact_interval, s.branches[a as usize].exact_domain);
        }
        assert!(Word::new(vec![]).is_err());
        assert!(parse_word(&s, "b_7").is_err());
    }

    #[test]
    fn two_letter_cylinder_nested_and_small() {
        let s = doubling_first_return();
        let c1 = cylinder_of(&w(&s, "a_1"), &s).unwrap();
        let c2 = cylinder_of(&w(&s, "a_1 a_1"), &s).unwrap();
        // Oracle: x in [0, 1/4) with 2x in [0, 1/4): u in [0, 1/4) in Y coordinates.
        assert_eq!(c2.exact_interval, Some([int(0), rat(1, 4)]));
        assert!(c2.interval[0] >= c1.interval[0] && c2.interval[1] <= c1.interval[1]);
        assert!((c2.interval[1] - c2.interval[0]) * s.diam_y() <= 0.25 * s.diam_y());
    }

    #[test]
    fn pi_x_fixed_point() {
        let s = doubling_first_return();
        let prefix = vec![Word::letter(0); 20];
        let c = pi_x(&prefix, &s).unwrap();
        assert!(c.value.abs() <= c.radius);
        assert!((c.radius - 0.5f64.powi(20) * 0.5).abs() < 1e-12);
    }

    #[test]
    fn pi_level_one_lands_in_right_half() {
        let s = doubling_first_return();
        let p = TowerPoint::new(vec![w(&s, "a_2"), w(&s, "a_1")], 1, &s).unwrap();
        let c = pi(&p, &s).unwrap();
        assert!((0.5..1.0).contains(&c.value));
        let x = pi_x(p.prefix(), &s).unwrap();
        assert!((0.25..0.5).contains(&x.value));
        assert!((2.0 * x.value - c.value).abs() <= 2.0 * x.radius + c.radius);
        assert!(matches!(TowerPoint::new(vec![w(&s, "a_2")], 2, &s), Err(Error::LevelAboveRoof { .. })));
        let p0 = TowerPoint::new(vec![w(&s, "a_2")], 0, &s).unwrap();
        assert_eq!(pi(&p0, &s).unwrap(), pi_x(p0.prefix(), &s).unwrap());
    }

    #[test]
    fn semiconjugacy_doubling() {
        let s = doubling_first_return();
        let r = check_semiconjugacy(&s, 1000, 50, 40, 5).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.max_discrepancy <= 1e-9, "{r:?}");
    }

    #[test]
    fn semiconjugacy_full_shift() {
        let s = piecewise_linear_gm(&[rat(1, 2), rat(1, 2)], &[1, 1]).unwrap();
        let r = check_semiconjugacy(&s, 200, 20, 40, 5).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn semiconjugacy_lsv() {
        let s = lsv_induced(0.5, 60).unwrap();
        let r = check_semiconjugacy(&s, 100, 20, 40, 5).unwrap();
        assert!(r.max_discrepancy <= 1e-6, "{r:?}");
    }

    #[test]
    fn pushforward_exact_full_shift() {
        let s = piecewise_linear_gm(&[rat(1, 2), rat(1, 2)], &[1, 1]).unwrap();
        let law = letter_law(&s).unwrap();
        let r = check_pushforward(&s, &law, 3, 2000, 1).unwrap();
        assert_eq!(r.exact_words_checked, 14);
        assert_eq!(r.exact_pass, Some(true));
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn pushforward_detects_broken_law() {
        let s = piecewise_linear_gm(&[rat(1, 2), rat(1, 2)], &[1, 1]).unwrap();
        let law = WordLaw::explicit("point mass", &s, vec![(Word::letter(0), Scalar::Exact(int(1)))]).unwrap();
        let r = check_pushforward(&s, &law, 3, 2000, 1).unwrap();
        assert_eq!(r.exact_pass, Some(false));
        assert!(!r.passed());
    }

    #[test]
    fn prefix_probability_for_two_letter_words() {
        // Law on {a_1, a_2 a_1} with masses 1/2 each over the doubling alphabet.
        let s = doubling_first_return();
        let law = WordLaw::explicit(
            "t",
            &s,
            vec![(w(&s, "a_1"), Scalar::Exact(rat(1, 2))), (w(&s, "a_2 a_1"), Scalar::Exact(rat(1, 2)))],
        )
        .unwrap();
        // Oracle by hand: P(starts a_2) = 1/2; P(a_1 a_2) = 1/2 * 1/2.
        assert_eq!(law.prefix_prob_exact(&[1]), Some(rat(1, 2)));
        assert_eq!(law.prefix_prob_exact(&[0, 1]), Some(rat(1, 4)));
        assert_eq!(law.prefix_prob_exact(&[1, 0]), Some(rat(1, 2)));
        assert_eq!(law.mean_height(), 2.0);
    }

    #[test]
    fn level_masses_sum_to_one() {
        let s = doubling_first_return();
        let tm = TowerMeasure::new(letter_law(&s).unwrap());
        assert!((tm.mean_height - 2.0).abs() < 1e-12);
        let total: f64 = (0..200).map(|l| tm.level_mass(l)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_doubling() {
        let s = doubling_first_return();
        let law = letter_law(&s).unwrap();
        let r = check_lipschitz(&s, &law, 2000, 40, 9).unwrap();
        assert_eq!(r.violations, 0, "{r:?}");
    }

    #[test]
    fn bridge_samples_have_requested_height() {
        let s = doubling_first_return();
        let b = Bridge::new(&s, 30);
        // Doubling renewal: u_n = 1/2 for n >= 1 (oracle: u_n = sum_k 2^-k u_{n-k}).
        assert!((b.renewal(7) - 0.5).abs() < 1e-12);
        let mut rng = rng::stream(1, &[]);
        for n in 1..=30 {
            assert_eq!(b.sample(n, &mut rng).unwrap().height(&s), n);
        }
    }

    #[test]
    fn geometric_height_tail() {
        let h = HeightLaw {
            atoms: vec![],
            tail: Some(GeometricTail { start: 2, step: 2, first: Scalar::Exact(rat(1, 2)), ratio: Scalar::Exact(rat(1, 2)) }),
        };
        assert_eq!(h.total_exact(), Some(int(1)));
        assert!((h.mean() - 4.0).abs() < 1e-12);
        assert!((h.tail_prob(3) - 0.5).abs() < 1e-12);
        assert!((h.mass_at(4) - 0.25).abs() < 1e-12);
        assert_eq!(h.mass_at(3), 0.0);
    }

    proptest! {
        #[test]
        fn concatenation_is_a_homomorphism(a in proptest::collection::vec(0u32..6, 1..5), b in proptest::collection::vec(0u32..6, 1..5)) {
            let s = doubling_first_return();
            let (wa, wb) = (Word::new(a).unwrap(), Word::new(b).unwrap());
            let wab = wa.concat(&wb);
            prop_assert_eq!(wab.height(&s), wa.height(&s) + wb.height(&s));
            prop_assert_eq!(wab.len(), wa.len() + wb.len());
            let (ca, cab) = (cylinder_of(&wa, &s).unwrap(), cylinder_of(&wab, &s).unwrap());
            let [lo, hi] = ca.exact_interval.unwrap();
            let [lo2, hi2] = cab.exact_interval.unwrap();
            prop_assert!(lo <= lo2 && hi2 <= hi);
            let bound = rational::pow(&rat(1, 2), wab.len() as u32);
            prop_assert!(hi2 - lo2 <= bound);
        }

        #[test]
        fn separation_metric_ultrametric(x in proptest::collection::vec(0u32..3, 6), y in proptest::collection::vec(0u32..3, 6), z in proptest::collection::vec(0u32..3, 6)) {
            let to = |v: Vec<u32>| v.into_iter().map(Word::letter).collect::<Vec<_>>();
            let (x, y, z) = (to(x), to(y), to(z));
            prop_assert_eq!(separation_time(&x, &y), separation_time(&y, &x));
            prop_assert!(separation_time(&x, &z) >= separation_time(&x, &y).min(separation_time(&y, &z)));
        }
    }
}
