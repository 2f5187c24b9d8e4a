//! The iid coupling: a shift on `Omega^Z` whose image under `g` is the tower.
//!
//! Coordinate `k` carries a renewal bit `z_k ~ Bernoulli(theta)` and the seed of a word.
//! With `t_0 = sup{k <= 0 : z_k = 1}` and later renewals `t_1 < t_2 < ...`, the point
//! `g(omega)` sits at level `N (-t_0) + phase` of the word chain
//! `A_{t_1 - t_0}(omega_{t_0}), A_{t_2 - t_1}(omega_{t_1}), ...`, where `A_n` has height `n N`.
//! The shift advances the tower by `N` steps; the phase is a fixed uniform offset in `0..N`.

use crate::disintegration::linear_fit;
use crate::error::{Error, Result};
use crate::map_models::InducedScheme;
use crate::rng;
use crate::tower_coding::{TowerPoint, Word, WordLaw};
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;

const Z_TAG: u64 = 0;
const WORD_TAG: u64 = 1;
const PHASE_KEY: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IidConfig {
    /// Renewal probability per block.
    pub theta: f64,
    /// Block length: heights are multiples of it.
    pub n_step: u64,
    /// Base of the tower metric `d = xi^{separation}`.
    pub xi: f64,
    /// How far back to look for `t_0`.
    pub window: u64,
}

impl IidConfig {
    pub fn new(theta: f64, n_step: u64, xi: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) || n_step == 0 || !(xi > 0.0 && xi < 1.0) {
            return Err(Error::InvalidArgument(format!("need theta in (0, 1], N >= 1, xi in (0, 1); got {theta}, {n_step}, {xi}")));
        }
        Ok(IidConfig { theta, n_step, xi, window: 1 << 20 })
    }

    /// The tower metric of a scheme has `xi = 1 / lambda`.
    pub fn for_scheme(theta: f64, n_step: u64, s: &InducedScheme) -> Result<Self> {
        Self::new(theta, n_step, crate::tower_coding::xi(s))
    }
}

/// Word laws conditioned on height, indexed by the number of blocks.
pub struct ConditionalAlphabet<'a> {
    pub law: &'a WordLaw,
    pub n_step: u64,
}

impl ConditionalAlphabet<'_> {
    pub fn sample_a_n(&self, blocks: u64, seed: u64, key: i64, salt: u64) -> Result<Word> {
        let mut r = rng::stream(seed, &[key as u64, WORD_TAG, salt]);
        self.law.sample_given_height(blocks * self.n_step, &mut r)
    }
}

/// A point of `Omega^Z` given by a seed, with optional overrides at single coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftState {
    pub seed: u64,
    /// Position of coordinate zero after shifting.
    pub offset: i64,
    /// `(coordinate, flipped bit, word salt)` overrides.
    pub edits: Vec<(i64, bool, u64)>,
}

impl ShiftState {
    pub fn new(seed: u64) -> Self {
        ShiftState { seed, offset: 0, edits: Vec::new() }
    }

    pub fn shifted(&self, by: i64) -> Self {
        ShiftState { offset: self.offset + by, ..self.clone() }
    }

    fn edit(&self, k: i64) -> Option<&(i64, bool, u64)> {
        self.edits.iter().find(|e| e.0 == k)
    }

    pub fn z(&self, cfg: &IidConfig, k: i64) -> bool {
        let abs = k + self.offset;
        let bit = rng::unit_f64(rng::derive(self.seed, &[abs as u64, Z_TAG])) < cfg.theta;
        match self.edit(abs) {
            Some((_, flip, _)) => bit ^ flip,
            None => bit,
        }
    }

    fn salt(&self, k: i64) -> u64 {
        self.edit(k + self.offset).map_or(0, |e| e.2)
    }

    pub fn phase(&self, cfg: &IidConfig) -> u64 {
        rng::derive(self.seed, &[PHASE_KEY]) % cfg.n_step
    }
}

/// Renewal indices `t_0 <= 0 < t_1 < ...` until `words` words are covered.
pub fn renewals(cfg: &IidConfig, st: &ShiftState, words: usize) -> Result<Vec<i64>> {
    let mut k = 0i64;
    while !st.z(cfg, k) {
        k -= 1;
        if (-k) as u64 > cfg.window {
            return Err(Error::WindowExhausted(format!("no renewal within {} coordinates", cfg.window)));
        }
    }
    let mut out = vec![k];
    let mut j = 1i64;
    while out.len() < words + 1 {
        if st.z(cfg, j) {
            out.push(j);
        }
        j += 1;
        if j as u64 > cfg.window {
            return Err(Error::WindowExhausted("forward renewals".into()));
        }
    }
    Ok(out)
}

/// `g(omega)` with a prefix of `words` words.
pub fn g_map(cfg: &IidConfig, alpha: &ConditionalAlphabet, s: &InducedScheme, st: &ShiftState, words: usize) -> Result<TowerPoint> {
    let ts = renewals(cfg, st, words)?;
    let prefix: Vec<Word> = ts
        .windows(2)
        .map(|w| alpha.sample_a_n((w[1] - w[0]) as u64, st.seed, w[0] + st.offset, st.salt(w[0])))
        .collect::<Result<_>>()?;
    let level = cfg.n_step * (-ts[0]) as u64 + st.phase(cfg);
    TowerPoint::new(prefix, level, s)
}

/// `g(sigma^j omega)` for `j = 0..len`.
pub fn sample_trajectory(
    cfg: &IidConfig,
    alpha: &ConditionalAlphabet,
    s: &InducedScheme,
    seed: u64,
    len: usize,
    words: usize,
) -> Result<Vec<TowerPoint>> {
    let st = ShiftState::new(seed);
    (0..len as i64).map(|j| g_map(cfg, alpha, s, &st.shifted(j), words)).collect()
}

fn distance(cfg: &IidConfig, a: &TowerPoint, b: &TowerPoint) -> f64 {
    if a.level() != b.level() {
        return 1.0;
    }
    let sep = a.prefix().iter().zip(b.prefix()).take_while(|(x, y)| x == y).count();
    if sep == a.prefix().len().min(b.prefix().len()) && a.prefix() == b.prefix() {
        return 0.0;
    }
    cfg.xi.powi(sep as i32)
}

/// `(1 - theta + theta xi^p)^{k-1}` for `k >= 1`, `(1 - theta)^{|k|}` for `k <= 0`.
pub fn delta_bound(cfg: &IidConfig, k: i64, p: f64) -> f64 {
    if k >= 1 {
        (1.0 - cfg.theta + cfg.theta * cfg.xi.powf(p)).powi((k - 1) as i32)
    } else {
        (1.0 - cfg.theta).powi((-k) as i32)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaEstimate {
    pub k: i64,
    pub estimate: f64,
    pub std_err: f64,
    pub bound: f64,
    pub pass: bool,
}

/// `sup_{omega'_k} d(g omega, g omega')^p` from the renewal structure: for `k >= 1` only
/// words after the `c_k` renewals in `(0, k)` can change, and redrawing `z_k` always changes
/// the height of the word covering `k`; for `k <= 0` the level moves iff `t_0 <= k`.
pub fn analytic_sup(cfg: &IidConfig, st: &ShiftState, k: i64, p: f64) -> Result<f64> {
    if k >= 1 {
        let c = (1..k).filter(|&j| st.z(cfg, j)).count();
        Ok(cfg.xi.powf(p * c as f64))
    } else {
        let t0 = renewals(cfg, st, 0)?[0];
        Ok(if t0 <= k { 1.0 } else { 0.0 })
    }
}

/// The same supremum by explicit replacement at coordinate `k`: redraw the word seed,
/// flip `z_k`, or both, and take the largest distance.
pub fn replacement_sup(cfg: &IidConfig, alpha: &ConditionalAlphabet, s: &InducedScheme, st: &ShiftState, k: i64, p: f64) -> Result<f64> {
    let words = (k.max(0) as usize) + 2;
    let x = g_map(cfg, alpha, s, st, words)?;
    let mut worst = 0.0f64;
    for (flip, salt) in [(false, 1u64), (true, 0), (true, 1)] {
        let mut other = st.clone();
        other.edits.push((k + st.offset, flip, salt));
        let y = g_map(cfg, alpha, s, &other, words)?;
        worst = worst.max(distance(cfg, &x, &y).powf(p));
    }
    Ok(worst)
}

/// Monte Carlo estimate of `delta_{k,p} = E sup_{omega'_k} d(g omega, g omega')^p`.
pub fn estimate_delta_kp(cfg: &IidConfig, k: i64, p: f64, replicates: usize, seed: u64) -> Result<DeltaEstimate> {
    if replicates < 2 {
        return Err(Error::InvalidArgument("need at least two replicates".into()));
    }
    let vals: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| analytic_sup(cfg, &ShiftState::new(rng::derive(seed, &[r as u64, k as u64])), k, p))
        .collect::<Result<_>>()?;
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std_err = (var / n).sqrt();
    let bound = delta_bound(cfg, k, p);
    Ok(DeltaEstimate { k, estimate: mean, std_err, bound, pass: mean <= bound + 3.0 * std_err })
}

pub fn delta_csv(rows: &[DeltaEstimate]) -> String {
    let mut out = String::from("k,estimate,std_err,bound,pass\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.10e},{:.10e},{:.10e},{}", r.k, r.estimate, r.std_err, r.bound, r.pass);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least squares fit of `log delta_{k,p}` against `|k|` over the rows with positive estimates.
pub fn fit_dependence_decay(rows: &[DeltaEstimate]) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.estimate > 0.0).map(|r| (r.k.unsigned_abs() as f64, r.estimate.ln())).collect();
    if pts.len() < 4 {
        return Err(Error::InvalidArgument("fewer than four positive estimates: decay fit inconclusive".into()));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    Ok(DecayFit { slope, intercept, r2, points: pts.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_models::piecewise_linear_gm;
    use crate::rational::rat;
    use crate::tower_coding::{Bridge, GeometricTail, HeightLaw, WordLaw};
    use crate::rational::Scalar;

    /// Full shift on two letters of return time one, with geometric heights: words of
    /// height n are m-bridges of length n.
    fn setup(theta: f64) -> (InducedScheme, WordLaw) {
        let s = piecewise_linear_gm(&[rat(1, 2), rat(1, 2)], &[1, 1]).unwrap();
        let law = WordLaw {
            name: "geometric".into(),
            heights: HeightLaw {
                atoms: vec![],
                tail: Some(GeometricTail { start: 1, step: 1, first: Scalar::Float(theta), ratio: Scalar::Float(1.0 - theta) }),
            },
            words: Default::default(),
            bridge: Some(Bridge::new(&s, 512)),
            remainder: None,
        };
        (s, law)
    }

    #[test]
    fn level_law_is_stationary() {
        let theta = 0.5;
        let (s, law) = setup(theta);
        let cfg = IidConfig::new(theta, 1, 0.5).unwrap();
        let alpha = ConditionalAlphabet { law: &law, n_step: 1 };
        let n = 20000;
        let mut counts = [0usize; 4];
        for i in 0..n {
            let x = g_map(&cfg, &alpha, &s, &ShiftState::new(rng::derive(3, &[i])), 2).unwrap();
            if x.level() < 4 {
                counts[x.level() as usize] += 1;
            }
        }
        // P(level = l) = P(h > l) / E h = (1 - theta)^l theta.
        for (l, &c) in counts.iter().enumerate() {
            let expect = theta * (1.0 - theta).powi(l as i32);
            let f = c as f64 / n as f64;
            assert!((f - expect).abs() < 4.0 * (expect / n as f64).sqrt() + 1e-3, "level {l}: {f} vs {expect}");
        }
    }

    #[test]
    fn shift_moves_the_tower_by_one_block() {
        let (s, law) = setup(0.3);
        let cfg = IidConfig::new(0.3, 1, 0.5).unwrap();
        let alpha = ConditionalAlphabet { law: &law, n_step: 1 };
        let traj = sample_trajectory(&cfg, &alpha, &s, 9, 50, 6).unwrap();
        for w in traj.windows(2) {
            let next = w[0].step(&s).unwrap();
            assert_eq!(next.level(), w[1].level());
            assert_eq!(next.prefix()[0], w[1].prefix()[0]);
        }
    }

    #[test]
    fn delta_at_k10_below_bound() {
        let (s, law) = setup(0.5);
        let cfg = IidConfig::new(0.5, 1, 0.5).unwrap();
        let alpha = ConditionalAlphabet { law: &law, n_step: 1 };
        let e = estimate_delta_kp(&cfg, 10, 3.0, 4000, 1).unwrap();
        assert!(e.pass, "{e:?}");
        // Flipping z_k attains the supremum, so the estimate is the bound itself in expectation.
        assert!((e.estimate - e.bound).abs() < 4.0 * e.std_err + 1e-3);
        for r in 0..200u64 {
            let st = ShiftState::new(rng::derive(77, &[r]));
            for k in [-4i64, -1, 0, 1, 2, 5, 9] {
                let a = analytic_sup(&cfg, &st, k, 3.0).unwrap();
                let b = replacement_sup(&cfg, &alpha, &s, &st, k, 3.0).unwrap();
                assert!((a - b).abs() <= 1e-12 * a.max(1e-300), "replicate {r}, k = {k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn delta_for_nonpositive_k() {
        let (s, law) = setup(0.4);
        let cfg = IidConfig::new(0.4, 1, 0.5).unwrap();
        let alpha = ConditionalAlphabet { law: &law, n_step: 1 };
        let e0 = estimate_delta_kp(&cfg, 0, 3.0, 500, 2).unwrap();
        assert_eq!(e0.estimate, 1.0);
        let e = estimate_delta_kp(&cfg, -3, 3.0, 4000, 2).unwrap();
        assert!(e.pass && (e.estimate - 0.216).abs() < 0.03, "{e:?}");
        let far = estimate_delta_kp(&IidConfig::new(0.5, 1, 0.5).unwrap(), 40, 3.0, 1000, 3).unwrap();
        assert!(far.estimate < 1e-6);
        let _ = (&s, &alpha);
    }

    #[test]
    fn decay_fit_and_csv() {
        let cfg = IidConfig::new(0.5, 1, 0.5).unwrap();
        let rows: Vec<DeltaEstimate> = (1..=8)
            .map(|k| DeltaEstimate { k, estimate: delta_bound(&cfg, k, 3.0), std_err: 0.0, bound: delta_bound(&cfg, k, 3.0), pass: true })
            .collect();
        let fit = fit_dependence_decay(&rows).unwrap();
        assert!((fit.slope - (0.5f64 + 0.5 / 8.0).ln()).abs() < 1e-12);
        assert!(fit.r2 > 0.999);
        let flat: Vec<DeltaEstimate> = (1..=8).map(|k| DeltaEstimate { k, estimate: 0.3, std_err: 0.0, bound: 1.0, pass: true }).collect();
        assert_eq!(fit_dependence_decay(&flat).unwrap().slope, 0.0);
        assert!(delta_csv(&rows).starts_with("k,estimate"));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(IidConfig::new(0.0, 1, 0.5).is_err());
        assert!(IidConfig::new(0.5, 0, 0.5).is_err());
    }
}
