//! Laws of geometric sums of geometric variables.

use super::plan::RedistributionPlan;
use crate::rational::{self, Rational};
use num::{Num, One, Zero};
use serde::Serialize;

/// Law of `sum_{i <= M} X_i` with `P(M = m) = theta_M (1 - theta_M)^m` and iid
/// `P(X = n) = theta_X (1 - theta_X)^{n-1}`, `n >= 1`:
/// an atom `eta_1 + (1 - eta_1) eta_2` at zero and `(1 - eta_1) eta_2 (1 - eta_2)^n` for `n >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeomSumLaw<T> {
    pub eta1: T,
    pub eta2: T,
}

pub fn geom_sum_law<T: Num + Clone>(theta_x: T, theta_m: T) -> GeomSumLaw<T> {
    let one = T::one();
    let eta2 = theta_x * theta_m.clone();
    if eta2 == one {
        return GeomSumLaw { eta1: one, eta2 };
    }
    let eta1 = (theta_m - eta2.clone()) / (one - eta2.clone());
    GeomSumLaw { eta1, eta2 }
}

impl<T: Num + Clone> GeomSumLaw<T> {
    pub fn pmf(&self, n: u64) -> T {
        let one = T::one();
        let body = (one.clone() - self.eta1.clone()) * self.eta2.clone();
        if n == 0 {
            return self.eta1.clone() + body;
        }
        let mut v = body;
        for _ in 0..n {
            v = v * (one.clone() - self.eta2.clone());
        }
        v
    }

    /// `P(Y > n)`.
    pub fn tail(&self, n: u64) -> T {
        let one = T::one();
        let mut v = one.clone() - self.eta1.clone();
        for _ in 0..=n {
            v = v * (one.clone() - self.eta2.clone());
        }
        v
    }
}

/// Law of the resolution clock `r`: `P(r = 0) = C_1`, `P(r = nN) = C_2 theta^n` for `n >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RLaw {
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "C_1", with = "rational::as_string")]
    pub c1: Rational,
    #[serde(rename = "C_2", with = "rational::as_string")]
    pub c2: Rational,
    #[serde(with = "rational::as_string")]
    pub theta: Rational,
}

/// `r` is `N` times a geometric sum with `theta_M = p_{-1}` and `theta_X = theta_1`.
pub fn r_law(plan: &RedistributionPlan) -> RLaw {
    let g = geom_sum_law(plan.theta1(), plan.p_minus1());
    let one = Rational::from_integer(1.into());
    RLaw { n: plan.n, c1: plan.p_minus1(), c2: (&one - &g.eta1) * &g.eta2, theta: &one - &g.eta2 }
}

impl RLaw {
    pub fn prob(&self, clock: u64) -> Rational {
        if clock == 0 {
            return self.c1.clone();
        }
        if clock % self.n != 0 {
            return Rational::from_integer(0.into());
        }
        &self.c2 * rational::pow(&self.theta, (clock / self.n) as u32)
    }

    /// `P(r > clock)`.
    pub fn tail(&self, clock: u64) -> Rational {
        let one = Rational::from_integer(1.into());
        let k = clock / self.n + 1;
        &self.c2 * rational::pow(&self.theta, k as u32) / (&one - &self.theta)
    }

    /// Smallest multiple `H` of `N` with `P(r > H) < resolution`.
    pub fn horizon(&self, resolution: f64) -> u64 {
        let mut h = 0;
        while rational::to_f64(&self.tail(h)) >= resolution {
            h += self.n;
        }
        h
    }
}

/// Lists every word `(k_1, ..., k_m)` of child indices with clock `sum (k_i + N) <= clock_max`
/// and adds its mass `p_{-1} prod p_{k_i}` to the clock's total.
pub fn enumerate_clock_masses(plan: &RedistributionPlan, clock_max: u64) -> Vec<Rational> {
    fn walk(plan: &RedistributionPlan, clock: u64, weight: Rational, clock_max: u64, out: &mut Vec<Rational>) {
        out[clock as usize] += &weight * plan.p_minus1();
        let mut k = 0;
        while clock + k + plan.n <= clock_max {
            walk(plan, clock + k + plan.n, &weight * plan.p(k), clock_max, out);
            k += plan.n;
        }
    }
    let mut out = vec![Rational::zero(); clock_max as usize + 1];
    walk(plan, 0, Rational::one(), clock_max, &mut out);
    out
}

/// Brute force: `sum_m P(M = m) P(X_1 + ... + X_m = n)` for `n <= n_max`, with the
/// sum over `m` stopped once `P(M >= m)` drops below `cutoff`.
pub fn geom_sum_convolution(theta_x: f64, theta_m: f64, n_max: usize, cutoff: f64) -> Vec<f64> {
    let x: Vec<f64> = (0..=n_max).map(|n| if n == 0 { 0.0 } else { theta_x * (1.0 - theta_x).powi(n as i32 - 1) }).collect();
    let mut power = vec![0.0; n_max + 1];
    power[0] = 1.0;
    let mut out = vec![0.0; n_max + 1];
    let mut weight = theta_m;
    // The m-fold sum is at least m, so terms with m > n_max add nothing.
    for _ in 0..=n_max {
        for n in 0..=n_max {
            out[n] += weight * power[n];
        }
        let mut next = vec![0.0; n_max + 1];
        for n in 0..=n_max {
            for k in 1..=n {
                next[n] += power[n - k] * x[k];
            }
        }
        power = next;
        weight *= 1.0 - theta_m;
        if weight / theta_m.max(f64::MIN_POSITIVE) < cutoff {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    #[test]
    fn matches_convolution_on_grid() {
        let grid = [0.1, 0.3, 0.5, 0.7, 0.9];
        let mut worst: f64 = 0.0;
        for &tx in &grid {
            for &tm in &[0.2, 0.8] {
                let law = geom_sum_law(tx, tm);
                let oracle = geom_sum_convolution(tx, tm, 60, 1e-300);
                let oracle_tail = 1.0 - oracle.iter().sum::<f64>();
                let tv: f64 = (0..=60).map(|n| (law.pmf(n as u64) - oracle[n]).abs()).sum::<f64>() + (law.tail(60) - oracle_tail).abs();
                worst = worst.max(tv);
            }
        }
        assert!(worst <= 1e-10, "{worst}");
    }

    #[test]
    fn exact_law_sums_to_one() {
        let law = geom_sum_law(rat(2, 7), rat(3, 11));
        let partial: Rational = (0..=40).map(|n| law.pmf(n)).sum();
        assert_eq!(partial + law.tail(40), int(1));
    }

    #[test]
    fn theta_m_one_is_the_point_mass() {
        let law = geom_sum_law(rat(1, 3), int(1));
        assert_eq!(law.pmf(0), int(1));
        assert!(law.pmf(1).is_zero());
        let law = geom_sum_law(int(1), int(1));
        assert_eq!(law.pmf(0), Rational::one());
    }

    #[test]
    fn r_law_matches_enumeration() {
        let plan = RedistributionPlan::new(0.05, rat(2, 5), 2, rat(54, 100)).unwrap();
        let law = r_law(&plan);
        let en = enumerate_clock_masses(&plan, 20);
        for c in 0..=20u64 {
            assert_eq!(law.prob(c), en[c as usize], "clock {c}");
        }
        let partial: Rational = (0..=20).map(|c| law.prob(c)).sum();
        assert_eq!(partial + law.tail(20), int(1));
        let h = law.horizon(1e-4);
        assert!(rational::to_f64(&law.tail(h)) < 1e-4);
        assert!(rational::to_f64(&law.tail(h - 2)) >= 1e-4);
    }
}
