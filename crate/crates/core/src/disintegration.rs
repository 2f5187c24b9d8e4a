//! Decompositions `m = sum_w P_A(w) m_w` with each `m_w` supported on `Y_w`, and
//! empirical checks that moments of the return time transfer to word heights.

use crate::error::{Error, Result};
use crate::map_models::{tail_mass, InducedScheme, TailKind, TailProfile};
use crate::rational::{self, Rational, Scalar};
use crate::rng;
use crate::tower_coding::{cylinder_of, letter_law, Cylinder, Word, WordLaw};
use num::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One term `P(w_0) ... P(w_n) m_{w_0 ... w_n}`; the conditional measure is
/// normalized Lebesgue on `cylinder`.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub words: Vec<Word>,
    pub prob: Scalar,
    pub cylinder: Cylinder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Disintegration {
    pub base: Vec<(Word, Scalar)>,
    pub entries: Vec<Entry>,
    /// Number of refinements applied (0 for the base decomposition).
    pub depth: usize,
    /// Mass not represented: truncated alphabet plus entries dropped by refinement caps.
    pub residual: Scalar,
}

fn mul(a: &Scalar, b: &Scalar) -> Scalar {
    match (a, b) {
        (Scalar::Exact(x), Scalar::Exact(y)) => Scalar::Exact(x * y),
        _ => Scalar::Float(a.to_f64() * b.to_f64()),
    }
}

fn add(a: &Scalar, b: &Scalar) -> Scalar {
    match (a, b) {
        (Scalar::Exact(x), Scalar::Exact(y)) => Scalar::Exact(x + y),
        _ => Scalar::Float(a.to_f64() + b.to_f64()),
    }
}

fn sum<'a>(xs: impl Iterator<Item = &'a Scalar>) -> Scalar {
    xs.fold(Scalar::Exact(Rational::zero()), |acc, x| add(&acc, x))
}

fn one_minus(x: &Scalar) -> Scalar {
    match x {
        Scalar::Exact(q) => Scalar::Exact(Rational::one() - q),
        Scalar::Float(f) => Scalar::Float(1.0 - f),
    }
}

fn flat(words: &[Word]) -> Word {
    let letters = words.iter().flat_map(|w| w.letters().iter().copied()).collect();
    Word::new(letters).expect("nonempty")
}

/// Rejects schemes whose branches do not have constant Jacobian.
fn require_affine(s: &InducedScheme) -> Result<()> {
    if s.is_affine() {
        return Ok(());
    }
    for (a, b) in s.branches.iter().enumerate() {
        let (l, r) = (s.induced_derivative(a, b.domain[0]), s.induced_derivative(a, b.domain[1]));
        if (l - r).abs() > 1e-12 * l.abs() {
            return Err(Error::NonConstantJacobian { branch: b.symbol.clone() });
        }
    }
    Err(Error::NonConstantJacobian { branch: "unknown".into() })
}

fn from_base(s: &InducedScheme, base: Vec<(Word, Scalar)>) -> Result<Disintegration> {
    let entries = base
        .iter()
        .map(|(w, p)| Ok(Entry { words: vec![w.clone()], prob: p.clone(), cylinder: cylinder_of(w, s)? }))
        .collect::<Result<Vec<_>>>()?;
    let residual = one_minus(&sum(base.iter().map(|(_, p)| p)));
    Ok(Disintegration { base, entries, depth: 0, residual })
}

/// `P_A(a) = m(a)` on single letters, `m_a = m|_a / m(a)`.
pub fn trivial_disintegration(s: &InducedScheme) -> Result<Disintegration> {
    require_affine(s)?;
    let law = letter_law(s)?;
    from_base(s, law.entries().cloned().collect())
}

/// Disintegration along a finite explicit word law with uniform conditionals on each `Y_w`.
/// Whether the terms actually sum to `m` is checked by [`cell_discrepancy`].
pub fn from_word_law(s: &InducedScheme, law: &WordLaw) -> Result<Disintegration> {
    require_affine(s)?;
    if !law.is_finite() {
        return Err(Error::Unsupported("disintegration needs a finite explicit word law".into()));
    }
    from_base(s, law.entries().cloned().collect())
}

/// Appends `levels` further words to every entry, keeping at most `max_entries`
/// (largest first); dropped mass moves into the residual.
pub fn refine(d: &Disintegration, s: &InducedScheme, levels: usize, max_entries: usize) -> Result<Disintegration> {
    let mut out = d.clone();
    for _ in 0..levels {
        let mut next: Vec<Entry> = Vec::with_capacity(out.entries.len() * out.base.len());
        for e in &out.entries {
            for (w, p) in &out.base {
                let mut words = e.words.clone();
                words.push(w.clone());
                let cylinder = cylinder_of(&flat(&words), s)?;
                next.push(Entry { words, prob: mul(&e.prob, p), cylinder });
            }
        }
        if next.len() > max_entries {
            next.sort_by(|a, b| b.prob.to_f64().total_cmp(&a.prob.to_f64()));
            let dropped = sum(next[max_entries..].iter().map(|e| &e.prob));
            next.truncate(max_entries);
            out.residual = add(&out.residual, &dropped);
        }
        // Each surviving parent also loses its share of the base residual.
        let lost = sum(out.entries.iter().map(|e| &e.prob));
        let base_res = one_minus(&sum(out.base.iter().map(|(_, p)| p)));
        out.residual = add(&out.residual, &mul(&lost, &base_res));
        out.entries = next;
        out.depth += 1;
    }
    Ok(out)
}

/// Sums entries over their last word; inverse of one refinement step when nothing was dropped.
pub fn marginalize_last(d: &Disintegration, s: &InducedScheme) -> Result<Disintegration> {
    if d.depth == 0 {
        return Err(Error::InvalidArgument("nothing to marginalize at depth 0".into()));
    }
    let mut groups: BTreeMap<Vec<Word>, Scalar> = BTreeMap::new();
    for e in &d.entries {
        let key = e.words[..e.words.len() - 1].to_vec();
        let acc = groups.entry(key).or_insert(Scalar::Exact(Rational::zero()));
        *acc = add(acc, &e.prob);
    }
    let entries = groups
        .into_iter()
        .map(|(words, prob)| Ok(Entry { cylinder: cylinder_of(&flat(&words), s)?, words, prob }))
        .collect::<Result<Vec<_>>>()?;
    let total = sum(entries.iter().map(|e| &e.prob));
    Ok(Disintegration { base: d.base.clone(), entries, depth: d.depth - 1, residual: one_minus(&total) })
}

/// Largest `|sum_e P(e) m_e(Y_v) - m(Y_v)|` over cells `Y_v` with `|v| = cell_depth`
/// over the first `alphabet_cap` letters. Exact on exact schemes.
pub fn cell_discrepancy(d: &Disintegration, s: &InducedScheme, cell_depth: usize, alphabet_cap: usize) -> Result<Scalar> {
    let alphabet = s.len().min(alphabet_cap) as u32;
    let mut cells: Vec<Vec<u32>> = vec![vec![]];
    for _ in 0..cell_depth {
        cells = cells.into_iter().flat_map(|v| (0..alphabet).map(move |a| [v.clone(), vec![a]].concat())).collect();
    }
    let mut worst = Scalar::Exact(Rational::zero());
    for v in cells {
        let cell = cylinder_of(&Word::new(v)?, s)?;
        let mut acc = Scalar::Exact(Rational::zero());
        for e in &d.entries {
            let share = overlap_share(&e.cylinder, &cell);
            acc = add(&acc, &mul(&e.prob, &share));
        }
        let target = cell.exact_mass.clone().map_or(Scalar::Float(cell.mass()), Scalar::Exact);
        let gap = match (&acc, &target) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Scalar::Exact(if a > b { a - b } else { b - a }),
            _ => Scalar::Float((acc.to_f64() - target.to_f64()).abs()),
        };
        if gap.to_f64() > worst.to_f64() || matches!((&gap, &worst), (Scalar::Exact(g), Scalar::Exact(w)) if g > w) {
            worst = gap;
        }
    }
    Ok(worst)
}

/// Fraction of the normalized Lebesgue measure on `c` that falls in `cell`.
fn overlap_share(c: &Cylinder, cell: &Cylinder) -> Scalar {
    match (&c.exact_interval, &cell.exact_interval) {
        (Some([a0, a1]), Some([b0, b1])) => {
            let lo = if a0 > b0 { a0 } else { b0 };
            let hi = if a1 < b1 { a1 } else { b1 };
            if hi <= lo {
                Scalar::Exact(Rational::zero())
            } else {
                Scalar::Exact((hi - lo) / (a1 - a0))
            }
        }
        _ => {
            let lo = c.interval[0].max(cell.interval[0]);
            let hi = c.interval[1].min(cell.interval[1]);
            Scalar::Float(((hi - lo) / (c.interval[1] - c.interval[0])).max(0.0))
        }
    }
}

/// Checks `(T_{Y,w})_* m_w = m` on every cell of depth `cell_depth`:
/// `m(Y_{wv}) / m(Y_w) = m(Y_v)`. Returns the number of failing (entry, cell) pairs.
pub fn pushforward_identity_failures(d: &Disintegration, s: &InducedScheme, cell_depth: usize, alphabet_cap: usize) -> Result<usize> {
    let alphabet = s.len().min(alphabet_cap) as u32;
    let mut cells: Vec<Vec<u32>> = vec![vec![]];
    for _ in 0..cell_depth {
        cells = cells.into_iter().flat_map(|v| (0..alphabet).map(move |a| [v.clone(), vec![a]].concat())).collect();
    }
    let mut failures = 0;
    for e in &d.entries {
        let w = flat(&e.words);
        let mw = e.cylinder.exact_mass.clone();
        for v in &cells {
            let wv = cylinder_of(&w.concat(&Word::new(v.clone())?), s)?;
            let cv = cylinder_of(&Word::new(v.clone())?, s)?;
            let ok = match (&mw, &wv.exact_mass, &cv.exact_mass) {
                (Some(a), Some(b), Some(c)) => b / a == *c,
                _ => (wv.mass() / e.cylinder.mass() - cv.mass()).abs() <= 1e-9 * cv.mass(),
            };
            failures += usize::from(!ok);
        }
    }
    Ok(failures)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryDoc {
    pub letters: Vec<String>,
    pub prob: Scalar,
    pub support: [Scalar; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisintegrationDoc {
    pub words: Vec<EntryDoc>,
    pub depth: usize,
    pub residual: Scalar,
}

pub fn to_doc(d: &Disintegration, s: &InducedScheme) -> DisintegrationDoc {
    DisintegrationDoc {
        words: d
            .entries
            .iter()
            .map(|e| EntryDoc {
                letters: flat(&e.words).symbols(s),
                prob: e.prob.clone(),
                support: match &e.cylinder.exact_interval {
                    Some([lo, hi]) => [Scalar::Exact(lo.clone()), Scalar::Exact(hi.clone())],
                    None => [Scalar::Float(e.cylinder.interval[0]), Scalar::Float(e.cylinder.interval[1])],
                },
            })
            .collect(),
        depth: d.depth,
        residual: d.residual.clone(),
    }
}

// ---------------------------------------------------------------------------
// Moment transfer

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMoment {
    pub beta_prime: f64,
    pub half_sample: f64,
    pub full_sample: f64,
    pub finite: bool,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub samples: usize,
    pub p_h_ge_1: f64,
    pub mean_height: f64,
    pub fitted_exponent: Option<f64>,
    pub tau_tail_exponent: Option<f64>,
    pub fit_range: Option<[u64; 2]>,
    pub weak_constant: Option<f64>,
    pub exp_moments: Vec<ExpMoment>,
    pub inconclusive: bool,
    pub passed: bool,
}

const SHARDS: u64 = 16;

/// Least-squares slope and intercept.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

/// Samples heights under `law` and tests the moment/tail property named by `profile`.
pub fn verify_moment_transfer(
    s: &InducedScheme,
    law: &WordLaw,
    profile: &TailProfile,
    n_samples: usize,
    seed: u64,
) -> Result<MomentReport> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let per = n_samples as u64 / SHARDS;
    let mut hs: Vec<u64> = (0..SHARDS)
        .into_par_iter()
        .flat_map_iter(|shard| {
            let n = per + u64::from(shard < n_samples as u64 % SHARDS);
            let mut rng = rng::stream(seed, &[shard]);
            (0..n).map(move |_| law.heights.sample(&mut rng)).collect::<Vec<_>>()
        })
        .collect();
    let n = hs.len() as f64;
    let p_h_ge_1 = hs.iter().filter(|&&h| h >= 1).count() as f64 / n;
    let mean_height = hs.iter().map(|&h| h as f64).sum::<f64>() / n;
    let half: Vec<u64> = hs.iter().step_by(2).copied().collect();
    let mut report = MomentReport {
        samples: hs.len(),
        p_h_ge_1,
        mean_height,
        fitted_exponent: None,
        tau_tail_exponent: None,
        fit_range: None,
        weak_constant: None,
        exp_moments: vec![],
        inconclusive: false,
        passed: false,
    };
    match profile.kind {
        TailKind::Polynomial { beta } => {
            hs.sort_unstable();
            let mut distinct = hs.clone();
            distinct.dedup();
            let (q1, q3) = (distinct[distinct.len() / 4], distinct[3 * distinct.len() / 4]);
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            let mut ts = Vec::new();
            let mut weak = 0.0f64;
            for &l in distinct.iter().filter(|&&l| l >= q1.max(1) && l <= q3) {
                let count = hs.len() - hs.partition_point(|&h| h < l);
                if count < 10 {
                    continue;
                }
                let surv = count as f64 / n;
                xs.push((l as f64).ln());
                ys.push(surv.ln());
                ts.push(tail_mass(s, l as u32)?.value.to_f64().ln());
                weak = weak.max(surv * (l as f64).powf(beta));
            }
            if xs.len() < 5 {
                report.inconclusive = true;
                return Ok(report);
            }
            let fitted = -linear_fit(&xs, &ys).0;
            let tau_exp = -linear_fit(&xs, &ts).0;
            report.fitted_exponent = Some(fitted);
            report.tau_tail_exponent = Some(tau_exp);
            report.fit_range = Some([q1.max(1), q3]);
            report.weak_constant = Some(weak);
            report.passed = (fitted - tau_exp).abs() <= 0.3 && fitted >= beta - 0.3;
        }
        TailKind::Exponential { beta } | TailKind::StretchedExponential { beta, .. } => {
            let gamma = match profile.kind {
                TailKind::StretchedExponential { gamma, .. } => gamma,
                _ => 1.0,
            };
            let moment = |xs: &[u64], b: f64| xs.iter().map(|&h| (b * (h as f64).powf(gamma)).exp()).sum::<f64>() / xs.len() as f64;
            let mut betas = vec![beta / 2.0];
            if 0.2 < beta / 2.0 {
                betas.insert(0, 0.2);
            }
            for b in betas {
                let (h, f) = (moment(&half, b), moment(&hs, b));
                report.exp_moments.push(ExpMoment {
                    beta_prime: b,
                    half_sample: h,
                    full_sample: f,
                    finite: f.is_finite(),
                    stable: ((h - f) / f).abs() < 0.05,
                });
            }
            report.passed = report.exp_moments.iter().all(|m| m.finite) && report.exp_moments[0].stable;
        }
    }
    Ok(report)
}

/// Exact total mass of a disintegration including the residual (should be 1).
pub fn total_mass(d: &Disintegration) -> Scalar {
    add(&sum(d.entries.iter().map(|e| &e.prob)), &d.residual)
}

pub fn is_normalized(d: &Disintegration) -> bool {
    match total_mass(d) {
        Scalar::Exact(q) => q.is_one(),
        Scalar::Float(x) => (x - 1.0).abs() < 1e-12,
    }
}

pub fn format_prob(p: &Scalar) -> String {
    match p {
        Scalar::Exact(q) => rational::format(q),
        Scalar::Float(x) => format!("{x}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map_models::{doubling_first_return, lsv_induced, piecewise_linear_gm};
    use crate::rational::{int, pow2_inv, rat};
    use crate::tower_coding::HeightLaw;

    fn full_shift() -> InducedScheme {
        piecewise_linear_gm(&[rat(1, 2), rat(1, 2)], &[1, 1]).unwrap()
    }

    #[test]
    fn trivial_doubling() {
        let s = doubling_first_return();
        let d = trivial_disintegration(&s).unwrap();
        for (n, e) in d.entries.iter().enumerate().take(10) {
            assert_eq!(e.prob, Scalar::Exact(pow2_inv(n as u32 + 1)));
            assert_eq!(e.cylinder.exact_interval, s.branches[n].exact_domain);
        }
        assert!(is_normalized(&d));
        assert_eq!(d.residual, Scalar::Exact(pow2_inv(48)));
    }

    #[test]
    fn trivial_full_shift_is_bernoulli() {
        let d = trivial_disintegration(&full_shift()).unwrap();
        assert_eq!(d.entries.len(), 2);
        assert!(d.entries.iter().all(|e| e.prob == Scalar::Exact(rat(1, 2))));
        assert_eq!(d.residual, Scalar::Exact(int(0)));
    }

    #[test]
    fn lsv_rejected_naming_branch() {
        let s = lsv_induced(0.5, 10).unwrap();
        match trivial_disintegration(&s) {
            Err(Error::NonConstantJacobian { branch }) => assert_eq!(branch, "a_2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn refine_doubling_two_levels() {
        let s = doubling_first_return();
        let d = refine(&trivial_disintegration(&s).unwrap(), &s, 1, usize::MAX).unwrap();
        for e in d.entries.iter().take(100) {
            let (i, j) = (e.words[0].letters()[0] + 1, e.words[1].letters()[0] + 1);
            assert_eq!(e.prob, Scalar::Exact(pow2_inv(i + j)));
            assert_eq!(e.cylinder.exact_mass, Some(pow2_inv(i + j)));
        }
        assert!(is_normalized(&d));
    }

    #[test]
    fn refine_zero_is_identity_and_full_shift_cells() {
        let s = full_shift();
        let d = trivial_disintegration(&s).unwrap();
        assert_eq!(refine(&d, &s, 0, 10).unwrap(), d);
        let d3 = refine(&d, &s, 2, usize::MAX).unwrap();
        assert_eq!(d3.entries.len(), 8);
        assert!(d3.entries.iter().all(|e| e.prob == Scalar::Exact(rat(1, 8))));
    }

    #[test]
    fn refinement_cap_moves_mass_to_residual() {
        let s = full_shift();
        let d = refine(&trivial_disintegration(&s).unwrap(), &s, 2, 5).unwrap();
        assert_eq!(d.entries.len(), 5);
        assert_eq!(d.residual, Scalar::Exact(rat(3, 8)));
        assert!(is_normalized(&d));
    }

    #[test]
    fn marginalization_inverts_refinement() {
        let s = piecewise_linear_gm(&[rat(1, 4), rat(1, 4), rat(1, 2)], &[1, 3, 2]).unwrap();
        let d1 = trivial_disintegration(&s).unwrap();
        let d2 = refine(&d1, &s, 1, usize::MAX).unwrap();
        let back = marginalize_last(&d2, &s).unwrap();
        let mut a: Vec<_> = back.entries.iter().map(|e| (e.words.clone(), e.prob.clone())).collect();
        let mut b: Vec<_> = d1.entries.iter().map(|e| (e.words.clone(), e.prob.clone())).collect();
        a.sort_by(|x, y| x.0.cmp(&y.0));
        b.sort_by(|x, y| x.0.cmp(&y.0));
        assert_eq!(a, b);
    }

    #[test]
    fn cells_and_pushforward_exact() {
        let s = piecewise_linear_gm(&[rat(1, 4), rat(1, 4), rat(1, 2)], &[1, 3, 2]).unwrap();
        let d = refine(&trivial_disintegration(&s).unwrap(), &s, 1, usize::MAX).unwrap();
        assert_eq!(cell_discrepancy(&d, &s, 2, 8).unwrap(), Scalar::Exact(int(0)));
        assert_eq!(pushforward_identity_failures(&d, &s, 2, 8).unwrap(), 0);
    }

    #[test]
    fn bad_law_has_cell_discrepancy() {
        let s = full_shift();
        let law = WordLaw::explicit("skewed", &s, vec![
            (Word::letter(0), Scalar::Exact(rat(3, 4))),
            (Word::letter(1), Scalar::Exact(rat(1, 4))),
        ])
        .unwrap();
        let d = from_word_law(&s, &law).unwrap();
        assert_eq!(cell_discrepancy(&d, &s, 1, 8).unwrap(), Scalar::Exact(rat(1, 4)));
    }

    #[test]
    fn moment_transfer_h_ge_one() {
        let s = doubling_first_return();
        let law = letter_law(&s).unwrap();
        let p = TailProfile::new(TailKind::Exponential { beta: 2f64.ln() }, 1.0).unwrap();
        let r = verify_moment_transfer(&s, &law, &p, 100_000, 1).unwrap();
        assert_eq!(r.p_h_ge_1, 1.0);
        assert!(r.passed, "{r:?}");
        // Oracle: E e^{0.2 h} for h ~ Geometric(1/2) on {1, 2, ...}.
        let q = 0.2f64.exp() / 2.0;
        assert!((r.exp_moments[0].full_sample - q / (1.0 - q)).abs() < 0.03);
    }

    #[test]
    fn polynomial_fit_on_synthetic_pareto_heights() {
        // Heights with P(h >= l) = l^-2 exactly, as a finite law truncated at 4000.
        let s = doubling_first_return();
        let atoms: Vec<(u64, Scalar)> = (1..4000u64)
            .map(|l| (l, Scalar::Float((l as f64).powi(-2) - ((l + 1) as f64).powi(-2))))
            .collect();
        let law = WordLaw { name: "pareto".into(), heights: HeightLaw { atoms, tail: None }, words: Default::default(), bridge: None, remainder: None };
        let p = TailProfile::new(TailKind::Polynomial { beta: 2.0 }, 1.0).unwrap();
        let r = verify_moment_transfer(&s, &law, &p, 1_000_000, 3).unwrap();
        let fitted = r.fitted_exponent.unwrap();
        assert!((fitted - 2.0).abs() < 0.3, "{r:?}");
    }

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn random_affine_refinements_stay_consistent(raw in proptest::collection::vec(1i64..6, 2..4), taus in proptest::collection::vec(1u32..4, 4)) {
            let total: i64 = raw.iter().sum();
            let ms: Vec<Rational> = raw.iter().map(|&r| rat(r, total)).collect();
            prop_assume!(ms.iter().all(|m| *m < int(1)));
            let s = piecewise_linear_gm(&ms, &taus[..ms.len()]).unwrap();
            let d = refine(&trivial_disintegration(&s).unwrap(), &s, 1, usize::MAX).unwrap();
            prop_assert!(is_normalized(&d));
            prop_assert_eq!(cell_discrepancy(&d, &s, 2, 8).unwrap(), Scalar::Exact(int(0)));
            let back = marginalize_last(&d, &s).unwrap();
            prop_assert!(back.entries.iter().zip(&s.branches).all(|(e, b)| e.prob == Scalar::Exact(b.measure_exact.clone().unwrap())));
        }
    }
}
