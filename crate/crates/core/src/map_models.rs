//! Concrete nonuniformly expanding maps given by full-branch induced schemes.
//!
//! The ambient space is `[0, 1]` with the Euclidean metric. The inducing set `Y` is
//! an interval `[y_lo, y_hi]` inside it; branch domains are stored in normalized
//! `Y` coordinates `u = (x - y_lo) / (y_hi - y_lo)`, so every branch maps its
//! closed domain onto `[0, 1]`. Distances reported in checks are ambient distances.

use crate::error::{Error, Result};
use crate::rational::{self, int, pow2_inv, rat, Rational, Scalar};
use crate::rng;
use num::{One, Signed, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// How the induced branches act.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchMaps {
    /// Each branch is the increasing affine bijection of its domain onto `[0, 1]`.
    Affine,
    /// First-return branches of the Liverani–Saussol–Vaienti map with parameter `gamma`.
    Lsv { gamma: f64 },
}

/// The underlying (non-induced) map `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ambient {
    /// `T(x) = 2x mod 1`.
    Doubling,
    /// `T(x) = x(1 + (2x)^gamma)` on `[0, 1/2)`, `2x - 1` on `[1/2, 1]`.
    Lsv { gamma: f64 },
    /// No ambient map is modelled; the space is `Y` itself and `T = T_Y`.
    /// Only meaningful when every return time is 1.
    InducedOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub symbol: String,
    pub domain: [f64; 2],
    pub exact_domain: Option<[Rational; 2]>,
    pub tau: u32,
    pub measure: f64,
    pub measure_exact: Option<Rational>,
}

impl Branch {
    pub fn width(&self) -> f64 {
        self.domain[1] - self.domain[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InducedScheme {
    pub name: String,
    pub branches: Vec<Branch>,
    pub maps: BranchMaps,
    pub ambient: Ambient,
    pub lambda: f64,
    pub lambda_exact: Option<Rational>,
    pub eta: f64,
    /// True distortion bound; 0 for affine branches.
    pub distortion_k: f64,
    pub intermediate_c: f64,
    pub diam_lambda: f64,
    pub y_embedding: [f64; 2],
    /// Mass of the branches cut off by truncation.
    pub deficit: Scalar,
    pub truncation_warning: bool,
}

/// Left branch of the LSV map and its inverse.
#[derive(Debug, Clone, Copy)]
pub struct LsvLeft {
    pub gamma: f64,
}

impl LsvLeft {
    pub fn apply(self, x: f64) -> f64 {
        x * (1.0 + (2.0 * x).powf(self.gamma))
    }

    pub fn derivative(self, x: f64) -> f64 {
        1.0 + (1.0 + self.gamma) * (2.0 * x).powf(self.gamma)
    }

    /// Solves `apply(x) = t` on `[0, 1/2]` by bisection.
    pub fn inverse(self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::RootFind(format!("target {t} outside the left-branch image [0, 1]")));
        }
        let (mut lo, mut hi) = (0.0f64, 0.5f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.apply(mid) < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = 0.5 * (lo + hi);
        if (hi - lo) > 1e-12 * x.max(1e-300) && (hi - lo) > 1e-300 {
            return Err(Error::RootFind(format!("bisection for target {t} stalled at width {}", hi - lo)));
        }
        Ok(x)
    }
}

pub fn lsv_full_map(gamma: f64, x: f64) -> f64 {
    if x < 0.5 {
        LsvLeft { gamma }.apply(x)
    } else {
        2.0 * x - 1.0
    }
}

impl InducedScheme {
    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn is_affine(&self) -> bool {
        matches!(self.maps, BranchMaps::Affine)
    }

    /// All branch data (domains and masses) are exact rationals.
    pub fn is_exact(&self) -> bool {
        self.is_affine()
            && self.branches.iter().all(|b| b.exact_domain.is_some() && b.measure_exact.is_some())
    }

    pub fn tau_max(&self) -> u32 {
        self.branches.iter().map(|b| b.tau).max().unwrap_or(0)
    }

    pub fn mean_tau(&self) -> f64 {
        self.branches.iter().map(|b| b.tau as f64 * b.measure).sum()
    }

    pub fn mean_tau_exact(&self) -> Option<Rational> {
        self.branches
            .iter()
            .map(|b| b.measure_exact.as_ref().map(|m| m * int(b.tau as i64)))
            .sum()
    }

    /// `K` clamped to the axiom range `K >= 1`.
    pub fn distortion_k_clamped(&self) -> f64 {
        self.distortion_k.max(1.0)
    }

    pub fn diam_y(&self) -> f64 {
        self.y_embedding[1] - self.y_embedding[0]
    }

    pub fn to_ambient(&self, u: f64) -> f64 {
        self.y_embedding[0] + u * self.diam_y()
    }

    pub fn from_ambient(&self, x: f64) -> f64 {
        (x - self.y_embedding[0]) / self.diam_y()
    }

    pub fn symbol_index(&self, symbol: &str) -> Option<usize> {
        self.branches.iter().position(|b| b.symbol == symbol)
    }

    /// Branch containing `u` (half-open domains, last branch closed).
    pub fn branch_of(&self, u: f64) -> Option<usize> {
        self.branches
            .iter()
            .position(|b| u >= b.domain[0] && u < b.domain[1])
            .or_else(|| self.branches.iter().position(|b| u == b.domain[1]))
    }

    /// `T_{Y,a}` in normalized coordinates.
    pub fn induced(&self, a: usize, u: f64) -> f64 {
        let b = &self.branches[a];
        match self.maps {
            BranchMaps::Affine => (u - b.domain[0]) / b.width(),
            BranchMaps::Lsv { gamma } => {
                let left = LsvLeft { gamma };
                let mut z = u;
                for _ in 1..b.tau {
                    z = left.apply(z);
                }
                2.0 * z - 1.0
            }
        }
    }

    pub fn induced_exact(&self, a: usize, u: &Rational) -> Option<Rational> {
        let [lo, hi] = self.branches[a].exact_domain.as_ref()?;
        Some((u - lo) / (hi - lo))
    }

    /// Derivative of `T_{Y,a}`; equals the inverse Jacobian reciprocal for Lebesgue `m`.
    pub fn induced_derivative(&self, a: usize, u: f64) -> f64 {
        let b = &self.branches[a];
        match self.maps {
            BranchMaps::Affine => 1.0 / b.width(),
            BranchMaps::Lsv { gamma } => {
                let left = LsvLeft { gamma };
                let (mut z, mut d) = (u, 2.0);
                for _ in 1..b.tau {
                    d *= left.derivative(z);
                    z = left.apply(z);
                }
                d
            }
        }
    }

    /// Inverse branch `T_{Y,a}^{-1}: [0,1] -> domain(a)`.
    pub fn inverse(&self, a: usize, v: f64) -> Result<f64> {
        let b = &self.branches[a];
        match self.maps {
            BranchMaps::Affine => Ok(b.domain[0] + v * b.width()),
            BranchMaps::Lsv { gamma } => {
                let left = LsvLeft { gamma };
                let mut z = 0.5 * (1.0 + v);
                for _ in 1..b.tau {
                    z = left.inverse(z)?;
                }
                Ok(z)
            }
        }
    }

    pub fn inverse_exact(&self, a: usize, v: &Rational) -> Option<Rational> {
        let [lo, hi] = self.branches[a].exact_domain.as_ref()?;
        Some(lo + v * (hi - lo))
    }

    /// `T^ell` applied to the ambient point of `u` in branch `a`, for `0 <= ell < tau(a)`.
    pub fn intermediate(&self, a: usize, u: f64, ell: u32) -> Result<f64> {
        let tau = self.branches[a].tau;
        if ell >= tau {
            return Err(Error::LevelAboveRoof { level: ell as u64, roof: tau as u64 });
        }
        let mut x = self.to_ambient(u);
        if ell == 0 {
            return Ok(x);
        }
        match self.ambient {
            Ambient::InducedOnly => Err(Error::Unsupported(
                "intermediate iterates need an ambient map when tau > 1".into(),
            )),
            _ => {
                for _ in 0..ell {
                    x = self.ambient_map(x)?;
                }
                Ok(x)
            }
        }
    }

    /// The ambient map `T`.
    pub fn ambient_map(&self, x: f64) -> Result<f64> {
        match self.ambient {
            Ambient::Doubling => {
                let y = 2.0 * x;
                Ok(if y >= 1.0 { y - 1.0 } else { y })
            }
            Ambient::Lsv { gamma } => Ok(lsv_full_map(gamma, x)),
            Ambient::InducedOnly => {
                let u = self.from_ambient(x);
                let a = self
                    .branch_of(u)
                    .ok_or_else(|| Error::InvalidArgument(format!("point {x} outside every branch")))?;
                if self.branches[a].tau != 1 {
                    return Err(Error::Unsupported("induced-only scheme with tau > 1 has no ambient map".into()));
                }
                Ok(self.to_ambient(self.induced(a, u)))
            }
        }
    }

    /// `T^ell` of an exact ambient point, for ambient maps with rational coefficients.
    pub fn ambient_iterate_exact(&self, x: &Rational, ell: u32) -> Option<Rational> {
        match self.ambient {
            Ambient::Doubling => {
                let mut y = x.clone();
                for _ in 0..ell {
                    y = &y * int(2);
                    if y >= Rational::one() {
                        y -= Rational::one();
                    }
                }
                Some(y)
            }
            _ => None,
        }
    }

    pub fn has_ambient_map(&self) -> bool {
        !matches!(self.ambient, Ambient::InducedOnly) || self.branches.iter().all(|b| b.tau == 1)
    }

    pub fn total_measure(&self) -> f64 {
        self.branches.iter().map(|b| b.measure).sum::<f64>() + self.deficit.to_f64()
    }

    pub fn total_measure_exact(&self) -> Option<Rational> {
        let s: Option<Rational> = self.branches.iter().map(|b| b.measure_exact.clone()).sum();
        Some(s? + self.deficit.exact()?.clone())
    }
}

/// First return of the doubling map to `[0, 1/2)`, truncated to return times `<= depth`.
pub fn doubling_first_return_truncated(depth: u32) -> Result<InducedScheme> {
    if depth == 0 || depth > 52 {
        return Err(Error::InvalidArgument(format!("doubling depth {depth} outside 1..=52")));
    }
    let branches = (1..=depth)
        .map(|n| {
            let lo = Rational::one() - pow2_inv(n - 1);
            let hi = Rational::one() - pow2_inv(n);
            Branch {
                symbol: format!("a_{n}"),
                domain: [rational::to_f64(&lo), rational::to_f64(&hi)],
                exact_domain: Some([lo, hi]),
                tau: n,
                measure: 0.5f64.powi(n as i32),
                measure_exact: Some(pow2_inv(n)),
            }
        })
        .collect();
    Ok(InducedScheme {
        name: format!("doubling_first_return(depth={depth})"),
        branches,
        maps: BranchMaps::Affine,
        ambient: Ambient::Doubling,
        lambda: 2.0,
        lambda_exact: Some(int(2)),
        eta: 1.0,
        distortion_k: 0.0,
        intermediate_c: 1.0,
        diam_lambda: 1.0,
        y_embedding: [0.0, 0.5],
        deficit: Scalar::Exact(pow2_inv(depth)),
        truncation_warning: false,
    })
}

/// Doubling first-return scheme at the default depth 48 (deficit `2^-48`).
pub fn doubling_first_return() -> InducedScheme {
    doubling_first_return_truncated(48).expect("default depth is valid")
}

/// Full-branch affine Gibbs–Markov scheme with prescribed masses and return times.
/// Branches are laid out left to right in `[0, 1]`, which is also the ambient space.
pub fn piecewise_linear_gm(measures: &[Rational], taus: &[u32]) -> Result<InducedScheme> {
    if measures.is_empty() || measures.len() != taus.len() {
        return Err(Error::InvalidScheme("measures and taus must be nonempty and of equal length".into()));
    }
    if measures.iter().any(|m| !m.is_positive()) {
        return Err(Error::InvalidScheme("every branch measure must be positive".into()));
    }
    if taus.iter().any(|&t| t == 0) {
        return Err(Error::InvalidScheme("return times must be positive".into()));
    }
    let total: Rational = measures.iter().cloned().sum();
    if !total.is_one() {
        return Err(Error::InvalidScheme(format!("measures sum to {}, not 1", rational::format(&total))));
    }
    let max_m = measures.iter().max().expect("nonempty");
    let lambda = max_m.recip();
    if lambda <= Rational::one() {
        return Err(Error::InvalidScheme("expansion factor lambda = 1/max m(a) must exceed 1".into()));
    }
    let mut lo = Rational::zero();
    let mut branches = Vec::with_capacity(measures.len());
    for (i, (m, &tau)) in measures.iter().zip(taus).enumerate() {
        let hi = &lo + m;
        branches.push(Branch {
            symbol: format!("a_{}", i + 1),
            domain: [rational::to_f64(&lo), rational::to_f64(&hi)],
            exact_domain: Some([lo.clone(), hi.clone()]),
            tau,
            measure: rational::to_f64(m),
            measure_exact: Some(m.clone()),
        });
        lo = hi;
    }
    Ok(InducedScheme {
        name: format!("piecewise_linear_gm({} branches)", branches.len()),
        branches,
        maps: BranchMaps::Affine,
        ambient: Ambient::InducedOnly,
        lambda: rational::to_f64(&lambda),
        lambda_exact: Some(lambda),
        eta: 1.0,
        distortion_k: 0.0,
        intermediate_c: 1.0,
        diam_lambda: 1.0,
        y_embedding: [0.0, 1.0],
        deficit: Scalar::Exact(Rational::zero()),
        truncation_warning: false,
    })
}

/// The first `k` branches of an exact scheme, masses renormalized, as a finite
/// piecewise-linear scheme with the same return times.
pub fn truncate_renormalized(s: &InducedScheme, k: usize) -> Result<InducedScheme> {
    if k == 0 || k > s.len() || !s.is_exact() {
        return Err(Error::InvalidArgument("truncation needs an exact scheme and 1 <= k <= len".into()));
    }
    let kept: Vec<Rational> = s.branches[..k].iter().map(|b| b.measure_exact.clone().unwrap()).collect();
    let total: Rational = kept.iter().cloned().sum();
    let measures: Vec<Rational> = kept.iter().map(|m| m / &total).collect();
    let taus: Vec<u32> = s.branches[..k].iter().map(|b| b.tau).collect();
    let mut out = piecewise_linear_gm(&measures, &taus)?;
    out.name = format!("{} truncated to {k} symbols", s.name);
    Ok(out)
}

/// First return of the LSV map to `Y = [1/2, 1]`, truncated to `tau <= depth`.
pub fn lsv_induced(gamma: f64, depth: u32) -> Result<InducedScheme> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma = {gamma} must lie in (0, 1)")));
    }
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    let left = LsvLeft { gamma };
    // Preimages of 1/2 under the left branch, in ambient coordinates (= Y coordinates of the branch split).
    let mut x = vec![1.0, 0.5];
    while x.len() <= depth as usize {
        let prev = *x.last().unwrap();
        x.push(left.inverse(prev)?);
    }
    let branches: Vec<Branch> = (1..=depth as usize)
        .map(|n| Branch {
            symbol: format!("a_{n}"),
            domain: [x[n], x[n - 1]],
            exact_domain: None,
            tau: n as u32,
            measure: x[n - 1] - x[n],
            measure_exact: None,
        })
        .collect();
    let deficit = x[depth as usize];
    let mut s = InducedScheme {
        name: format!("lsv_induced(gamma={gamma}, depth={depth})"),
        branches,
        maps: BranchMaps::Lsv { gamma },
        ambient: Ambient::Lsv { gamma },
        lambda: 2.0,
        lambda_exact: None,
        eta: 1.0,
        distortion_k: 0.0,
        intermediate_c: 1.0,
        diam_lambda: 1.0,
        y_embedding: [0.5, 1.0],
        deficit: Scalar::Float(deficit),
        truncation_warning: deficit > 0.01,
    };
    // Derivatives increase along each branch, so the infimum sits at the left endpoint.
    s.lambda = (0..s.len()).map(|a| s.induced_derivative(a, s.branches[a].domain[0])).fold(f64::INFINITY, f64::min);
    s.distortion_k = estimate_distortion(&s);
    Ok(s)
}

/// Grid estimate of `sup |log zeta(x) - log zeta(y)| / |T_Y x - T_Y y|^eta`, inflated by 1.5.
fn estimate_distortion(s: &InducedScheme) -> f64 {
    const GRID: usize = 256;
    let mut worst = 0.0f64;
    for a in 0..s.len() {
        let [lo, hi] = s.branches[a].domain;
        let pts: Vec<(f64, f64)> = (0..=GRID)
            .map(|i| {
                let u = lo + (hi - lo) * i as f64 / GRID as f64;
                (s.to_ambient(s.induced(a, u)), s.induced_derivative(a, u).ln())
            })
            .collect();
        for i in 0..GRID {
            for j in [i + 1, GRID] {
                if j <= i {
                    continue;
                }
                let dx = (pts[j].0 - pts[i].0).abs().powf(s.eta);
                if dx > 0.0 {
                    worst = worst.max((pts[j].1 - pts[i].1).abs() / dx);
                }
            }
        }
    }
    1.5 * worst
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: u64,
    pub expansion_violations: u64,
    pub intermediate_violations: u64,
    pub intermediate_unchecked: u64,
    pub bijectivity_violations: u64,
    pub distortion_violations: u64,
    pub mass_defect: f64,
}

impl ValidationReport {
    pub fn total_violations(&self) -> u64 {
        self.expansion_violations
            + self.intermediate_violations
            + self.bijectivity_violations
            + self.distortion_violations
            + u64::from(self.mass_defect > 1e-12)
    }

    pub fn passed(&self) -> bool {
        self.total_violations() == 0
    }

    /// Names of the axioms with at least one violation.
    pub fn failing_axioms(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.expansion_violations > 0 {
            out.push("expansion");
        }
        if self.intermediate_violations > 0 {
            out.push("intermediate_iterates");
        }
        if self.bijectivity_violations > 0 {
            out.push("bijectivity");
        }
        if self.distortion_violations > 0 {
            out.push("distortion");
        }
        if self.mass_defect > 1e-12 {
            out.push("mass_normalization");
        }
        out
    }
}

const SHARDS: u64 = 16;
const REL_TOL: f64 = 1e-9;

/// Monte-Carlo check of the expansion, intermediate-iterate, bijectivity and
/// distortion axioms. Shard `i` draws from `rng::stream(seed, [i])`.
pub fn validate_scheme(s: &InducedScheme, samples: u64, seed: u64) -> Result<ValidationReport> {
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be at least 1".into()));
    }
    let mut report = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let n = samples / SHARDS + u64::from(shard < samples % SHARDS);
            validate_shard(s, n, rng::stream(seed, &[shard]))
        })
        .reduce(ValidationReport::default, |mut a, b| {
            a.samples += b.samples;
            a.expansion_violations += b.expansion_violations;
            a.intermediate_violations += b.intermediate_violations;
            a.intermediate_unchecked += b.intermediate_unchecked;
            a.distortion_violations += b.distortion_violations;
            a.bijectivity_violations += b.bijectivity_violations;
            a
        });
    for a in 0..s.len() {
        let [lo, hi] = s.branches[a].domain;
        let (l, h) = (s.induced(a, lo), s.induced(a, hi));
        if l.abs() > 1e-9 || (h - 1.0).abs() > 1e-9 || !(lo < hi) {
            report.bijectivity_violations += 1;
        }
    }
    report.mass_defect = match s.total_measure_exact() {
        Some(total) => rational::to_f64(&(total - Rational::one()).abs()),
        None => (s.total_measure() - 1.0).abs(),
    };
    Ok(report)
}

fn validate_shard(s: &InducedScheme, n: u64, mut rng: rand_chacha::ChaCha8Rng) -> ValidationReport {
    let mut r = ValidationReport { samples: n, ..Default::default() };
    let dy = s.diam_y();
    for _ in 0..n {
        let a = rng.gen_range(0..s.len());
        let b = &s.branches[a];
        let [lo, hi] = b.domain;
        let u = lo + (hi - lo) * rng.gen::<f64>();
        let v = lo + (hi - lo) * rng.gen::<f64>();
        if u == v {
            continue;
        }
        let (tu, tv) = (s.induced(a, u), s.induced(a, v));
        let image_dist = dy * (tu - tv).abs();
        let dist = dy * (u - v).abs();
        if image_dist < s.lambda * dist * (1.0 - REL_TOL) {
            r.expansion_violations += 1;
        }
        // The image must stay inside Y and preserve order.
        if !(-1e-9..=1.0 + 1e-9).contains(&tu) || (tu - tv) * (u - v) <= 0.0 {
            r.bijectivity_violations += 1;
        }
        let ell = rng.gen_range(0..b.tau);
        match (s.intermediate(a, u, ell), s.intermediate(a, v, ell)) {
            (Ok(xu), Ok(xv)) => {
                if (xu - xv).abs() > s.intermediate_c * image_dist * (1.0 + REL_TOL) + 1e-15 {
                    r.intermediate_violations += 1;
                }
            }
            _ => r.intermediate_unchecked += 1,
        }
        let dlog = (s.induced_derivative(a, u).ln() - s.induced_derivative(a, v).ln()).abs();
        if dlog > s.distortion_k * image_dist.powf(s.eta) * (1.0 + REL_TOL) + 1e-12 {
            r.distortion_violations += 1;
        }
    }
    r
}

/// `m(tau >= ell)`: mass of represented branches plus the truncation deficit
/// (which only carries return times beyond the represented depth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailMass {
    pub value: Scalar,
    pub represented: Scalar,
    pub deficit: Scalar,
}

pub fn tail_mass(s: &InducedScheme, ell: u32) -> Result<TailMass> {
    if ell == 0 {
        return Err(Error::InvalidArgument("ell must be at least 1".into()));
    }
    let picked = s.branches.iter().filter(|b| b.tau >= ell);
    if let (true, Some(d)) = (s.is_exact(), s.deficit.exact()) {
        let rep: Rational = picked.map(|b| b.measure_exact.clone().unwrap()).sum();
        let value = &rep + d;
        return Ok(TailMass { value: Scalar::Exact(value), represented: Scalar::Exact(rep), deficit: Scalar::Exact(d.clone()) });
    }
    let rep: f64 = picked.map(|b| b.measure).sum();
    let d = s.deficit.to_f64();
    Ok(TailMass { value: Scalar::Float(rep + d), represented: Scalar::Float(rep), deficit: Scalar::Float(d) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailKind {
    Exponential { beta: f64 },
    Polynomial { beta: f64 },
    StretchedExponential { beta: f64, gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailProfile {
    pub kind: TailKind,
    pub constant: f64,
}

impl TailProfile {
    pub fn new(kind: TailKind, constant: f64) -> Result<Self> {
        let ok = constant > 0.0
            && match kind {
                TailKind::Exponential { beta } => beta > 0.0,
                TailKind::Polynomial { beta } => beta > 1.0,
                TailKind::StretchedExponential { beta, gamma } => beta > 0.0 && gamma > 0.0 && gamma <= 1.0,
            };
        if ok {
            Ok(Self { kind, constant })
        } else {
            Err(Error::InvalidArgument(format!("invalid tail profile {kind:?} with constant {constant}")))
        }
    }
}

// ---------------------------------------------------------------------------
// JSON

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchDoc {
    pub symbol: String,
    pub domain: [Scalar; 2],
    pub tau: u32,
    pub measure: Scalar,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeDoc {
    pub name: String,
    pub alphabet: Vec<BranchDoc>,
    pub lambda: Scalar,
    pub eta: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "C_ell")]
    pub c_ell: f64,
    pub diam_lambda: f64,
    pub y_embedding: [f64; 2],
    pub maps: BranchMaps,
    pub ambient: Ambient,
    pub deficit: Scalar,
}

impl From<&InducedScheme> for SchemeDoc {
    fn from(s: &InducedScheme) -> Self {
        SchemeDoc {
            name: s.name.clone(),
            alphabet: s
                .branches
                .iter()
                .map(|b| BranchDoc {
                    symbol: b.symbol.clone(),
                    domain: match &b.exact_domain {
                        Some([lo, hi]) => [Scalar::Exact(lo.clone()), Scalar::Exact(hi.clone())],
                        None => [Scalar::Float(b.domain[0]), Scalar::Float(b.domain[1])],
                    },
                    tau: b.tau,
                    measure: match &b.measure_exact {
                        Some(m) => Scalar::Exact(m.clone()),
                        None => Scalar::Float(b.measure),
                    },
                })
                .collect(),
            lambda: match &s.lambda_exact {
                Some(l) => Scalar::Exact(l.clone()),
                None => Scalar::Float(s.lambda),
            },
            eta: s.eta,
            k: s.distortion_k,
            c_ell: s.intermediate_c,
            diam_lambda: s.diam_lambda,
            y_embedding: s.y_embedding,
            maps: s.maps.clone(),
            ambient: s.ambient.clone(),
            deficit: s.deficit.clone(),
        }
    }
}

impl TryFrom<SchemeDoc> for InducedScheme {
    type Error = Error;

    fn try_from(d: SchemeDoc) -> Result<Self> {
        if d.alphabet.is_empty() {
            return Err(Error::InvalidScheme("empty alphabet".into()));
        }
        let branches = d
            .alphabet
            .into_iter()
            .map(|b| {
                let exact_domain = match (&b.domain[0], &b.domain[1]) {
                    (Scalar::Exact(lo), Scalar::Exact(hi)) => Some([lo.clone(), hi.clone()]),
                    _ => None,
                };
                Branch {
                    symbol: b.symbol,
                    domain: [b.domain[0].to_f64(), b.domain[1].to_f64()],
                    exact_domain,
                    tau: b.tau,
                    measure: b.measure.to_f64(),
                    measure_exact: b.measure.exact().cloned(),
                }
            })
            .collect();
        Ok(InducedScheme {
            name: d.name,
            branches,
            maps: d.maps,
            ambient: d.ambient,
            lambda: d.lambda.to_f64(),
            lambda_exact: d.lambda.exact().cloned(),
            eta: d.eta,
            distortion_k: d.k,
            intermediate_c: d.c_ell,
            diam_lambda: d.diam_lambda,
            y_embedding: d.y_embedding,
            truncation_warning: d.deficit.to_f64() > 0.01,
            deficit: d.deficit,
        })
    }
}

pub fn scheme_to_json(s: &InducedScheme) -> String {
    serde_json::to_string_pretty(&SchemeDoc::from(s)).expect("scheme serializes")
}

pub fn scheme_from_json(text: &str) -> Result<InducedScheme> {
    let doc: SchemeDoc =
        serde_json::from_str(text).map_err(|e| Error::InvalidScheme(format!("scheme JSON: {e}")))?;
    doc.try_into()
}

/// `1/2` as a rational; shared by tests and examples.
pub fn half() -> Rational {
    rat(1, 2)
}
