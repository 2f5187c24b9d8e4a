//! Birkhoff sums of the doubling map and the statistical checks run on them.

use crate::disintegration::linear_fit;
use crate::error::{Error, Result};
use crate::rng;
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// Doubling orbit of a uniform point, read from a random bit string: `T^j x` is the
/// string shifted by `j` bits, so the orbit carries no floating point drift.
pub struct BitOrbit {
    words: Vec<u64>,
}

impl BitOrbit {
    pub fn new(seed: u64, trajectory: u64, len: usize) -> Self {
        let mut r = rng::stream(seed, &[trajectory]);
        let words = (0..len / 64 + 3).map(|_| r.next_u64()).collect();
        BitOrbit { words }
    }

    /// `T^j x`, to 53 bits.
    pub fn point(&self, j: usize) -> f64 {
        let (i, r) = (j / 64, j % 64);
        let w = if r == 0 { self.words[i] } else { (self.words[i] << r) | (self.words[i + 1] >> (64 - r)) };
        rng::unit_f64(w)
    }

    pub fn capacity(&self) -> usize {
        (self.words.len() - 2) * 64
    }
}

pub fn cos_observable(x: f64) -> f64 {
    (2.0 * PI * x).cos()
}

/// Partial Birkhoff sums `S_n` at each `n` in `checkpoints` (ascending).
pub fn birkhoff(orbit: &BitOrbit, v: impl Fn(f64) -> f64, checkpoints: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut acc = 0.0;
    let mut j = 0;
    for &n in checkpoints {
        while j < n {
            acc += v(orbit.point(j));
            j += 1;
        }
        out.push(acc);
    }
    out
}

/// `sum_{|k| <= lag} Cov(v, v o T^k)` estimated along one long orbit.
pub fn green_kubo(seed: u64, len: usize, lag: usize, v: impl Fn(f64) -> f64) -> f64 {
    let orbit = BitOrbit::new(seed, u64::MAX, len + lag);
    let xs: Vec<f64> = (0..len + lag).map(|j| v(orbit.point(j))).collect();
    let mean = xs[..len].iter().sum::<f64>() / len as f64;
    let cov = |k: usize| (0..len).map(|j| (xs[j] - mean) * (xs[j + k] - mean)).sum::<f64>() / len as f64;
    cov(0) + 2.0 * (1..=lag).map(cov).sum::<f64>()
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceGrowth {
    pub n: Vec<usize>,
    pub variance: Vec<f64>,
    pub slope: f64,
    pub r2: f64,
}

/// Sample variance of `S_n` across trajectories at each checkpoint, and its slope in `n`.
pub fn variance_growth(sums: &[Vec<f64>], checkpoints: &[usize]) -> VarianceGrowth {
    let m = sums.len() as f64;
    let variance: Vec<f64> = (0..checkpoints.len())
        .map(|i| {
            let mean = sums.iter().map(|s| s[i]).sum::<f64>() / m;
            sums.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / (m - 1.0)
        })
        .collect();
    let xs: Vec<f64> = checkpoints.iter().map(|&n| n as f64).collect();
    // Through the origin: Var(S_n) is close to sigma^2 n without an offset.
    let slope = xs.iter().zip(&variance).map(|(x, v)| x * v).sum::<f64>() / xs.iter().map(|x| x * x).sum::<f64>();
    let (_, _, r2) = linear_fit(&xs, &variance);
    VarianceGrowth { n: checkpoints.to_vec(), variance, slope, r2 }
}

/// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
pub fn kolmogorov_p(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        p += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
        if term < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

pub fn ks_normal(xs: &mut [f64]) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct CltReport {
    pub trajectories: usize,
    pub length: usize,
    pub sigma2_green_kubo: f64,
    pub sigma2_exact: Option<f64>,
    pub ks_distance: f64,
    pub ks_p_value: f64,
    pub variance: VarianceGrowth,
    pub slope_relative_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct CltOptions {
    pub trajectories: usize,
    pub length: usize,
    pub checkpoints: usize,
    pub gk_length: usize,
    pub gk_lag: usize,
    pub ks_max: f64,
    pub slope_tolerance: f64,
}

impl Default for CltOptions {
    fn default() -> Self {
        CltOptions { trajectories: 10_000, length: 10_000, checkpoints: 10, gk_length: 1_000_000, gk_lag: 20, ks_max: 0.02, slope_tolerance: 0.1 }
    }
}

/// CLT check for `cos(2 pi x)` under doubling. `Var(S_n) = n / 2` exactly since the
/// correlations `E[v . v o T^k]` vanish for `k >= 1`.
pub fn clt_test(seed: u64, opts: CltOptions) -> Result<CltReport> {
    if opts.trajectories < 2 || opts.length == 0 || opts.checkpoints == 0 {
        return Err(Error::InvalidArgument("need at least two trajectories and a positive length".into()));
    }
    let checkpoints: Vec<usize> = (1..=opts.checkpoints).map(|i| opts.length * i / opts.checkpoints).collect();
    let sums: Vec<Vec<f64>> = (0..opts.trajectories)
        .into_par_iter()
        .map(|t| birkhoff(&BitOrbit::new(seed, t as u64, opts.length), cos_observable, &checkpoints))
        .collect();
    let gk = green_kubo(seed, opts.gk_length, opts.gk_lag, cos_observable);
    let mut z: Vec<f64> = sums.iter().map(|s| s[s.len() - 1] / (gk * opts.length as f64).sqrt()).collect();
    let ks = ks_normal(&mut z);
    let variance = variance_growth(&sums, &checkpoints);
    let rel = (variance.slope - gk).abs() / gk;
    Ok(CltReport {
        trajectories: opts.trajectories,
        length: opts.length,
        sigma2_green_kubo: gk,
        sigma2_exact: Some(0.5),
        ks_distance: ks,
        ks_p_value: kolmogorov_p(ks, opts.trajectories),
        pass: ks <= opts.ks_max && rel <= opts.slope_tolerance,
        variance,
        slope_relative_error: rel,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TailFit {
    pub exponential_slope: f64,
    pub exponential_r2: f64,
    pub polynomial_slope: f64,
    pub polynomial_r2: f64,
    /// `"exponential"` or `"polynomial"`, whichever fits the survival function better.
    pub verdict: String,
}

/// Fits `log P(h >= x)` against `x` and against `log x` over the distinct values with at least `min_count` samples above.
pub fn tail_fit(samples: &[u64], min_count: usize) -> Result<TailFit> {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut pts = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let above = sorted.len() - i;
        if above < min_count {
            break;
        }
        if x > 0 {
            pts.push((x as f64, (above as f64 / n).ln()));
        }
        while i < sorted.len() && sorted[i] == x {
            i += 1;
        }
    }
    if pts.len() < 3 {
        return Err(Error::InvalidArgument("too few distinct values for a tail fit".into()));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (es, _, er) = linear_fit(&xs, &ys);
    let (ps, _, pr) = linear_fit(&lx, &ys);
    Ok(TailFit {
        exponential_slope: es,
        exponential_r2: er,
        polynomial_slope: ps,
        polynomial_r2: pr,
        verdict: if er >= pr { "exponential".into() } else { "polynomial".into() },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StatReport {
    pub clt: CltReport,
    pub tail: Option<TailFit>,
}

impl StatReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn variance_csv(&self) -> String {
        let mut out = String::from("n,variance\n");
        for (n, v) in self.clt.variance.n.iter().zip(&self.clt.variance.variance) {
            let _ = writeln!(out, "{n},{v:.10e}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_orbit_is_the_doubling_map() {
        let o = BitOrbit::new(1, 0, 200);
        for j in 0..150 {
            let x = o.point(j);
            let y = o.point(j + 1);
            // 2x mod 1 agrees with the shifted string up to the last retained bit.
            assert!(((2.0 * x) % 1.0 - y).abs() < 1e-15, "{j}");
        }
        assert!(o.capacity() >= 200);
    }

    #[test]
    fn green_kubo_for_cosine_is_one_half() {
        let gk = green_kubo(4, 200_000, 10, cos_observable);
        assert!((gk - 0.5).abs() < 0.02, "{gk}");
    }

    #[test]
    fn small_clt_run() {
        let opts = CltOptions { trajectories: 2000, length: 1000, gk_length: 100_000, ks_max: 0.04, slope_tolerance: 0.15, ..Default::default() };
        let r = clt_test(8, opts).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.ks_p_value > 0.01);
    }

    #[test]
    fn kolmogorov_p_values() {
        assert!((kolmogorov_p(0.0, 100) - 1.0).abs() < 1e-12);
        // The 5% critical value is about 1.358 / sqrt(n).
        let p = kolmogorov_p(1.358 / 100.0, 10_000);
        assert!((p - 0.05).abs() < 0.005, "{p}");
    }

    #[test]
    fn tail_fit_tells_geometric_from_pareto() {
        let mut r = rng::stream(5, &[]);
        let geo: Vec<u64> = (0..50_000).map(|_| 1 + (rng::unit_f64(r.next_u64()).ln() / 0.7f64.ln()) as u64).collect();
        let par: Vec<u64> = (0..50_000).map(|_| (1.0 / (1.0 - rng::unit_f64(r.next_u64()))).powf(1.0 / 1.5) as u64).collect();
        assert_eq!(tail_fit(&geo, 20).unwrap().verdict, "exponential");
        let pf = tail_fit(&par, 20).unwrap();
        assert_eq!(pf.verdict, "polynomial");
        assert!((pf.polynomial_slope + 1.5).abs() < 0.3, "{pf:?}");
    }
}
