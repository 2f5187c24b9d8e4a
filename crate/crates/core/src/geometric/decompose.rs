//! The geometric tail decomposition of `tau_bar 1_{Delta_0}` on a finite tower.
//!
//! Mass that is not resolved at clock `c` is split by class `j` (steps left before the
//! next base visit) and handed to the children at clocks `c + k + N`. All children born at
//! one clock are carried together: the pending mass `M_c` and the pushed density
//! `Psi_c = L^c phi_c`. On a depth-one tower every piece lands uniformly on the base, so
//! `Psi_c` is a nonnegative combination of `B_n = L^n(tau_bar 1_{Delta_0})`.

use super::laws::{r_law, RLaw};
use super::plan::RedistributionPlan;
use super::tower::{in_e, transfer_apply, Density, FiniteTower};
use super::water::{water_fill, Allocator};
use crate::error::{Error, Result};
use crate::rational::{self, Rational};
use num::{One, Signed, Zero};
use serde::Serialize;

/// Output of one split: everything is expressed at the pushed time `n`.
#[derive(Debug, Clone)]
pub struct LemWSplit {
    pub t: Rational,
    pub mass: Rational,
    pub resolved: Rational,
    /// `L^n psi_{-1}`: a constant on the base.
    pub flat: Density,
    /// `L^n g` restricted to `E_j`.
    pub classes: Vec<Density>,
    pub q: Vec<Rational>,
    /// `(k, int psi_k, L^n psi_k)` for `k <= k_max`.
    pub children: Vec<(u64, Rational, Density)>,
    /// Supply not handed to children with `k <= k_max`.
    pub leftover: Rational,
}

/// Splits `psi` (supported anywhere on the tower) after `n` steps.
pub fn split_lem_w(t: &FiniteTower, psi: &Density, n: u64, plan: &RedistributionPlan, k_max: u64) -> Result<LemWSplit> {
    let pushed = transfer_apply(t, psi, n as usize);
    let mass = psi.integral(t);
    let resolved = plan.p_minus1() * &mass;
    let base = pushed.integral_where(t, |c| c.1 == 0);
    if base.is_zero() {
        return Err(Error::SplitParameter { t: f64::INFINITY, xi: rational::to_f64(&plan.xi), clock: n });
    }
    let tt = &resolved / &base;
    if tt > plan.xi {
        return Err(Error::SplitParameter { t: rational::to_f64(&tt), xi: rational::to_f64(&plan.xi), clock: n });
    }
    let level = &resolved * &t.tau_bar;
    let flat = Density::base_constant(t, pushed.depth(), &level)?;
    let g = pushed.sub(&flat)?;
    if !g.is_nonnegative() {
        return Err(Error::NegativeDensity { clock: n });
    }
    let classes: Vec<Density> = (0..t.tau_max()).map(|j| g.restrict(|c| in_e(t, c, j))).collect();
    let q: Vec<Rational> = classes.iter().map(|d| d.integral(t)).collect();
    let mut alloc = Allocator::new(q.clone());
    let mut children = Vec::new();
    let mut k = 0;
    while k <= k_max {
        let need = plan.p(k) * &mass;
        let mut child = Density::zero(t, pushed.depth())?;
        for (j, a) in alloc.take(k as usize, &need)? {
            child = child.add(&classes[j].scale(&(a / &q[j])))?;
        }
        children.push((k, need, child));
        k += plan.n;
    }
    Ok(LemWSplit { t: tt, mass, resolved, flat, classes, q, children, leftover: alloc.remaining() })
}

#[derive(Debug, Clone, Copy)]
pub struct DecomposeOptions {
    pub mass_resolution: f64,
    /// Hard cap on the horizon; the residual is reported if it binds.
    pub max_clock: u64,
    pub prop_e_levels: u64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions { mass_resolution: 1e-4, max_clock: 4000, prop_e_levels: 20 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClockRecord {
    pub clock: u64,
    #[serde(with = "rational::as_string")]
    pub pending: Rational,
    #[serde(with = "rational::as_string")]
    pub resolved: Rational,
    /// `int_{Delta_0} Psi_c`.
    #[serde(skip)]
    pub base: Rational,
    /// Class masses `q_j` of the remainder after the flat piece.
    #[serde(skip)]
    pub q: Vec<Rational>,
    pub t: f64,
    pub sup_ratio: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CheckCounts {
    pub clocks: usize,
    pub flat_top: usize,
    pub nonnegative: usize,
    pub class_membership: usize,
    pub prop_e: usize,
    pub pending_closed_form: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct WordDecomposition {
    pub plan: RedistributionPlan,
    pub r_law: RLaw,
    pub horizon: u64,
    pub records: Vec<ClockRecord>,
    #[serde(with = "rational::as_string")]
    pub resolved_total: Rational,
    #[serde(with = "rational::as_string")]
    pub residual: Rational,
    /// The residual equals `P(r > horizon)` and the mass carried past the horizon.
    pub residual_matches_law: bool,
    pub checks: CheckCounts,
    pub max_t: f64,
}

impl WordDecomposition {
    pub fn residual_f64(&self) -> f64 {
        rational::to_f64(&self.residual)
    }

    pub fn mass_at(&self, clock: u64) -> Rational {
        self.records.iter().find(|r| r.clock == clock).map_or_else(Rational::zero, |r| r.resolved.clone())
    }

    /// `P_W(w)` for the word of child indices `ks`; its clock is `sum (k_i + N)`.
    pub fn word_mass(&self, ks: &[u64]) -> Rational {
        ks.iter().fold(self.plan.p_minus1(), |acc, &k| acc * self.plan.p(k))
    }

    pub fn word_clock(&self, ks: &[u64]) -> u64 {
        ks.iter().map(|k| k + self.plan.n).sum()
    }
}

/// `B_n = L^n(tau_bar 1_{Delta_0})` at depth one, `n = 0..=n_max`.
pub fn base_pushforwards(t: &FiniteTower, n_max: u64) -> Result<Vec<Density>> {
    let mut out = Vec::with_capacity(n_max as usize + 1);
    out.push(Density::reference(t, 1)?);
    for n in 1..=n_max as usize {
        out.push(transfer_apply(t, &out[n - 1], 1));
    }
    Ok(out)
}

pub fn decompose(t: &FiniteTower, plan: &RedistributionPlan, opts: DecomposeOptions) -> Result<WordDecomposition> {
    let law = r_law(plan);
    let horizon = law.horizon(opts.mass_resolution).min(opts.max_clock - opts.max_clock % plan.n);
    let b = base_pushforwards(t, horizon)?;
    let n = plan.n;
    let p_minus1 = plan.p_minus1();
    let e_r = plan.r.exp();
    let tau_bar = t.tau_bar.clone();
    let p_needed: Vec<Rational> = (0..=horizon).map(|k| plan.p(k)).collect();
    let t_needed: Vec<Rational> = (0..=opts.prop_e_levels).map(|k| plan.t(k)).collect();

    let mut psi: Vec<Option<Density>> = vec![None; horizon as usize + 1];
    let mut pending = vec![Rational::zero(); horizon as usize + 1];
    psi[0] = Some(b[0].clone());
    pending[0] = Rational::one();

    let mut records = Vec::new();
    let mut checks = CheckCounts::default();
    let mut beyond = Rational::zero();
    let mut resolved_total = Rational::zero();
    let mut max_t = 0.0f64;

    for c in 0..=horizon {
        let Some(cur) = psi[c as usize].take() else { continue };
        let m = pending[c as usize].clone();
        checks.clocks += 1;

        if cur.integral(t) != m {
            return Err(Error::InvalidArgument(format!("pending mass bookkeeping broke at clock {c}")));
        }
        if !p_minus1.is_zero() && m != law.prob(c) / &p_minus1 {
            return Err(Error::InvalidArgument(format!("pending mass at clock {c} differs from the resolution law")));
        }
        checks.pending_closed_form += 1;

        let resolved = &p_minus1 * &m;
        let base = cur.integral_where(t, |cell| cell.1 == 0);
        let tt = &resolved / &base;
        let tf = rational::to_f64(&tt);
        if tt > plan.xi {
            return Err(Error::SplitParameter { t: tf, xi: rational::to_f64(&plan.xi), clock: c });
        }
        max_t = max_t.max(tf);

        // The flat piece t * Psi_c on the base must be the constant p_{-1} M_c tau_bar.
        let level = &resolved * &tau_bar;
        for ((_, ell), v) in cur.cells() {
            if *ell == 0 && &tt * v != level {
                return Err(Error::InvalidArgument(format!("flat-top identity fails at clock {c}")));
            }
        }
        checks.flat_top += 1;

        for ((_, ell), v) in cur.cells() {
            let rest = if *ell == 0 { v - &level } else { v.clone() };
            if v.is_negative() || rest.is_negative() {
                return Err(Error::NegativeDensity { clock: c });
            }
        }
        checks.nonnegative += 1;

        let sup_ratio = rational::to_f64(&(cur.sup() / (&tau_bar * &m)));
        if sup_ratio > e_r || cur.log_seminorm(1.0, 1.0) > plan.r {
            return Err(Error::InvalidArgument(format!("pushed density leaves the class at clock {c}")));
        }
        checks.class_membership += 1;

        let mut q: Vec<Rational> = (0..t.tau_max()).map(|j| cur.integral_where(t, |cell| in_e(t, cell, j))).collect();
        q[0] -= &resolved;
        let mut upper = Rational::zero();
        for lvl in (1..=opts.prop_e_levels).rev() {
            if let Some(qj) = q.get(lvl as usize) {
                upper += qj;
            }
            if upper > &t_needed[lvl as usize] * &m {
                return Err(Error::InvalidArgument(format!("tail mass bound fails at clock {c}, level {lvl}")));
            }
            checks.prop_e += 1;
        }

        let mut alloc = Allocator::new(q.clone());
        let mut k = 0;
        while c + k + n <= horizon {
            let child = c + k + n;
            let need = &p_needed[k as usize] * &m;
            for (j, a) in alloc.take(k as usize, &need)? {
                let add = b[(k + n) as usize - j].scale(&a);
                let slot = &mut psi[child as usize];
                *slot = Some(match slot.take() {
                    Some(d) => d.add(&add)?,
                    None => add,
                });
                pending[child as usize] += &a;
            }
            k += n;
        }
        beyond += alloc.remaining();
        resolved_total += &resolved;
        records.push(ClockRecord { clock: c, pending: m, resolved, base, q, t: tf, sup_ratio });
    }

    let residual = Rational::one() - &resolved_total;
    let residual_matches_law = residual == beyond && residual == law.tail(horizon);
    if !residual_matches_law {
        return Err(Error::InvalidArgument("residual does not match the resolution law".into()));
    }
    Ok(WordDecomposition {
        plan: plan.clone(),
        r_law: law,
        horizon,
        records,
        resolved_total,
        residual,
        residual_matches_law,
        checks,
        max_t,
    })
}

/// The `s_{k,j}` matrix of one clock, for inspection.
pub fn split_matrix(q: &[Rational], p: &[Rational]) -> Result<Vec<Vec<Rational>>> {
    water_fill(p, q)
}
