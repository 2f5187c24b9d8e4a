//! The stages, in order. Each stage draws its randomness from `derive(seed, [stage index])`.

use crate::config::{ExperimentConfig, SchemeKind};
use crate::stage::Stage;
use anyhow::{anyhow, Context as _, Result};
use bytower_core::disintegration::{self, cell_discrepancy, pushforward_identity_failures, trivial_disintegration, verify_moment_transfer};
use bytower_core::geometric::{
    admissible_xi, decompose, enumerate_clock_masses, export_geometric_law, find_n_eps, geom_sum_convolution, geom_sum_law,
    p_sequence, r_law, DecomposeOptions, ExportOptions, FiniteTower, RedistributionPlan, SearchOptions, WordDecomposition,
};
use bytower_core::iid_sampler::{self, ConditionalAlphabet, IidConfig, ShiftState};
use bytower_core::map_models::{
    doubling_first_return_truncated, lsv_induced, piecewise_linear_gm, scheme_to_json, truncate_renormalized, validate_scheme,
    InducedScheme, TailKind, TailProfile,
};
use bytower_core::rational::{self, Rational};
use bytower_core::statistics::{self, CltOptions};
use bytower_core::tower_coding::{check_lipschitz, check_pushforward, check_semiconjugacy, letter_law, pi_x, TowerMeasure, WordLaw};
use bytower_core::{rng, Scalar};
use num::{One, Zero};
use serde_json::json;
use std::fmt::Write as _;

pub const STAGES: [&str; 9] = ["validate", "build-tower", "disintegrate", "plan", "decompose", "laws", "sample", "dependence", "stats"];

/// Shared state: later stages reuse what earlier ones built.
pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub scheme: InducedScheme,
    tower: Option<std::result::Result<FiniteTower, String>>,
    plan: Option<RedistributionPlan>,
    decomposition: Option<WordDecomposition>,
    exported: Option<WordLaw>,
}

pub fn build_scheme(cfg: &ExperimentConfig) -> Result<InducedScheme> {
    let c = &cfg.scheme;
    let mut s = match c.kind {
        SchemeKind::Doubling => doubling_first_return_truncated(c.depth.unwrap_or(48))?,
        SchemeKind::Lsv => lsv_induced(c.gamma.expect("checked"), c.depth.unwrap_or(200))?,
        SchemeKind::PiecewiseLinear => {
            let masses: Vec<Rational> =
                c.masses.as_ref().expect("checked").iter().map(|m| rational::parse(m)).collect::<std::result::Result<_, _>>()?;
            piecewise_linear_gm(&masses, c.taus.as_ref().expect("checked"))?
        }
    };
    if let Some(l) = c.lambda_override {
        s.lambda = l;
        s.lambda_exact = None;
    }
    Ok(s)
}

fn stage_seed(cfg: &ExperimentConfig, name: &str) -> u64 {
    let idx = STAGES.iter().position(|s| *s == name).expect("known stage") as u64;
    rng::derive(cfg.seed, &[idx])
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        let scheme = build_scheme(&cfg)?;
        Ok(Pipeline { cfg, scheme, tower: None, plan: None, decomposition: None, exported: None })
    }

    pub fn run(&mut self, name: &str) -> Result<Stage> {
        match name {
            "validate" => self.validate(),
            "build-tower" => self.build_tower(),
            "disintegrate" => self.disintegrate(),
            "plan" => self.plan_stage(),
            "decompose" => self.decompose_stage(),
            "laws" => self.laws(),
            "sample" => self.sample(),
            "dependence" => self.dependence(),
            "stats" => self.stats(),
            other => Err(anyhow!("unknown stage {other}")),
        }
    }

    /// Mass dropped by the scheme's own truncation.
    pub fn truncation_deficit(&self) -> String {
        match &self.scheme.deficit {
            Scalar::Exact(q) => rational::format(q),
            Scalar::Float(x) => format!("{x:e}"),
        }
    }

    fn tower(&mut self) -> std::result::Result<&FiniteTower, String> {
        if self.tower.is_none() {
            let k = self.cfg.scheme.tower_alphabet;
            let built = if !self.scheme.is_exact() {
                Err("the scheme has no exact masses".to_string())
            } else if k > self.scheme.len() {
                Err(format!("tower_alphabet {k} exceeds the {} branches of the scheme", self.scheme.len()))
            } else {
                truncate_renormalized(&self.scheme, k).and_then(FiniteTower::new).map_err(|e| e.to_string())
            };
            self.tower = Some(built);
        }
        self.tower.as_ref().unwrap().as_ref().map_err(|e| e.clone())
    }

    /// Mass of the branches dropped when the finite tower was cut to `tower_alphabet` letters.
    pub fn tower_truncation(&self) -> Option<String> {
        let kept: Option<Rational> =
            self.scheme.branches.iter().take(self.cfg.scheme.tower_alphabet).map(|b| b.measure_exact.clone()).sum();
        kept.map(|k| rational::format(&(Rational::one() - k)))
    }

    pub fn residual(&self) -> Option<String> {
        self.decomposition.as_ref().map(|d| rational::format(&d.residual))
    }

    fn validate(&mut self) -> Result<Stage> {
        let mut st = Stage::new("validate");
        let r = validate_scheme(&self.scheme, self.cfg.validate.samples, stage_seed(&self.cfg, "validate"))?;
        st.set("scheme", &self.scheme.name);
        st.set("branches", self.scheme.len());
        st.set("lambda", self.scheme.lambda);
        st.set("deficit", self.truncation_deficit());
        st.set("report", &r);
        for axiom in r.failing_axioms() {
            st.failures.push(format!("validate.{axiom}"));
        }
        st.file("scheme.json", scheme_to_json(&self.scheme));
        Ok(st)
    }

    fn build_tower(&mut self) -> Result<Stage> {
        let mut st = Stage::new("build-tower");
        let c = self.cfg.coding.clone();
        let seed = stage_seed(&self.cfg, "build-tower");
        let s = &self.scheme;
        let law = letter_law(s)?;
        let push = check_pushforward(s, &law, c.exact_depth, c.pushforward_samples, rng::derive(seed, &[0]))?;
        st.require(push.exact_pass != Some(false), "coding.pushforward_exact");
        st.require(push.ks_pass, "coding.pushforward_ks");
        st.set("pushforward", &push);
        let lip = check_lipschitz(s, &law, c.lipschitz_pairs, c.lipschitz_depth, rng::derive(seed, &[1]))?;
        st.require(lip.violations == 0, "coding.lipschitz");
        st.set("lipschitz", &lip);
        if s.has_ambient_map() {
            let sc = check_semiconjugacy(s, c.semiconjugacy_points, c.semiconjugacy_steps, c.semiconjugacy_depth, rng::derive(seed, &[2]))?;
            st.require(sc.passed() && sc.max_discrepancy <= c.semiconjugacy_tolerance, "coding.semiconjugacy");
            st.set("semiconjugacy", &sc);
        } else {
            st.set("semiconjugacy", "no ambient map");
        }
        Ok(st)
    }

    fn disintegrate(&mut self) -> Result<Stage> {
        let mut st = Stage::new("disintegrate");
        let seed = stage_seed(&self.cfg, "disintegrate");
        let s = &self.scheme;
        match trivial_disintegration(s) {
            Ok(d) => {
                let cap = bytower_core::tower_coding::EXACT_ALPHABET_CAP;
                let gap = cell_discrepancy(&d, s, 2, cap)?;
                let fails = pushforward_identity_failures(&d, s, 2, cap)?;
                let zero = match &gap {
                    Scalar::Exact(q) => q.is_zero(),
                    Scalar::Float(x) => *x <= 1e-12,
                };
                st.require(zero, "disintegration.cell_masses");
                st.require(fails == 0, "disintegration.pushforward_identity");
                st.require(disintegration::is_normalized(&d), "disintegration.normalization");
                st.set("entries", d.entries.len());
                st.set("cell_discrepancy", disintegration::format_prob(&gap));
                st.set("pushforward_failures", fails);
                st.set("residual", disintegration::format_prob(&d.residual));
            }
            Err(e) => st.set("trivial", format!("not applicable: {e}")),
        }
        let m = &self.cfg.moments;
        if m.enabled {
            let lsv = lsv_induced(m.gamma, m.depth)?;
            let law = letter_law(&lsv)?;
            let profile = TailProfile::new(TailKind::Polynomial { beta: 1.0 / m.gamma }, 1.0)?;
            let r = verify_moment_transfer(&lsv, &law, &profile, m.samples, seed)?;
            st.require(r.passed, "moments.lsv_tail_exponent");
            st.set("lsv_moments", &r);
        }
        Ok(st)
    }

    fn ensure_plan(&mut self) -> Result<RedistributionPlan> {
        if let Some(p) = &self.plan {
            return Ok(p.clone());
        }
        let pc = self.cfg.plan.clone();
        let t = self.tower().map_err(|e| anyhow!(e))?;
        let (k, lambda) = (t.scheme.distortion_k, t.scheme.lambda);
        let r = pc.r.unwrap_or(0.05);
        let xi = match &pc.xi {
            Some(x) => rational::parse(x)?,
            None => admissible_xi(r, k, lambda, pc.xi_denominator)?,
        };
        let (n, eps) = match (pc.n, &pc.eps) {
            (Some(n), Some(e)) => (n, rational::parse(e)?),
            _ => {
                let opts = SearchOptions { max_n: pc.max_n, horizon: pc.tail_horizon, eps_denominator: pc.eps_denominator };
                find_n_eps(t, r, &xi, opts)?
            }
        };
        let plan = RedistributionPlan::new(r, xi, n, eps)?;
        self.plan = Some(plan.clone());
        Ok(plan)
    }

    fn plan_stage(&mut self) -> Result<Stage> {
        let mut st = Stage::new("plan");
        if let Err(e) = self.tower() {
            return Ok(Stage::skip("plan", &e));
        }
        let plan = self.ensure_plan()?;
        let law = r_law(&plan);
        let t = self.tower().expect("built");
        let ok = bytower_core::geometric::check_r_xi(t.scheme.distortion_k, t.scheme.lambda, plan.r, rational::to_f64(&plan.xi));
        st.require(ok, "plan.r_xi_condition");
        st.set(
            "constants",
            json!({
                "R": plan.r,
                "xi": rational::format(&plan.xi),
                "N": plan.n,
                "eps": rational::format(&plan.eps),
                "theta": rational::format(&law.theta),
                "C_1": rational::format(&law.c1),
                "C_2": rational::format(&law.c2),
            }),
        );
        st.set("tower", json!({"alphabet": t.alphabet(), "tau_bar": rational::format(&t.tau_bar), "lambda": t.scheme.lambda}));
        let seq = p_sequence(&plan.xi, &plan.eps, plan.n, self.cfg.plan.p_sequence_len)?;
        let mut csv = String::from("k,p_k,t_k\n");
        let _ = writeln!(csv, "-1,{},", rational::format(&seq.p_minus1));
        for (k, (p, tk)) in seq.p.iter().zip(&seq.t).enumerate() {
            let _ = writeln!(csv, "{k},{},{}", rational::format(p), rational::format(tk));
        }
        let closed = (0..seq.t.len() as u64).all(|k| seq.t[k as usize] == plan.t(k));
        st.require(closed, "plan.p_sequence_closed_form");
        st.file("p_sequence.csv", csv);
        st.file("plan.json", serde_json::to_string_pretty(&plan)?);
        Ok(st)
    }
}

impl Pipeline {
    fn ensure_export(&mut self) -> Result<()> {
        if self.exported.is_some() {
            return Ok(());
        }
        let plan = self.ensure_plan()?;
        let dc = self.cfg.decompose.clone();
        let t = self.tower().map_err(|e| anyhow!(e))?.clone();
        let opts = DecomposeOptions { mass_resolution: dc.mass_resolution, max_clock: dc.max_clock, prop_e_levels: dc.prop_e_levels };
        let d = decompose(&t, &plan, opts).context("decomposition")?;
        let cutoff = dc.export_cutoff.min(d.horizon);
        let (law, _) = export_geometric_law(&t, &d, ExportOptions { cutoff, bridge_max: dc.bridge_max }).context("export")?;
        self.decomposition = Some(d);
        self.exported = Some(law);
        Ok(())
    }

    fn decompose_stage(&mut self) -> Result<Stage> {
        let mut st = Stage::new("decompose");
        if let Err(e) = self.tower() {
            return Ok(Stage::skip("decompose", &e));
        }
        self.ensure_export()?;
        let dc = self.cfg.decompose.clone();
        let t = self.tower().expect("built").clone();
        let d = self.decomposition.as_ref().expect("built");
        let c = &d.checks;
        st.require(d.residual_f64() <= dc.mass_resolution, "decompose.residual");
        st.require(&d.resolved_total + &d.residual == Rational::one(), "decompose.conservation");
        st.require(d.residual_matches_law, "decompose.residual_law");
        st.require(c.flat_top == c.clocks, "decompose.flat_top");
        st.require(c.nonnegative == c.clocks, "decompose.nonnegative");
        st.require(c.class_membership == c.clocks, "decompose.class_membership");
        st.require(c.prop_e as u64 == c.clocks as u64 * dc.prop_e_levels, "decompose.prop_e");
        st.require(c.pending_closed_form == c.clocks, "decompose.pending_closed_form");
        st.set("horizon", d.horizon);
        st.set("resolved_total", rational::format(&d.resolved_total));
        st.set("residual", rational::format(&d.residual));
        st.set("residual_f64", d.residual_f64());
        st.set("checks", c);
        st.set("max_t", d.max_t);

        let cutoff = dc.export_cutoff.min(d.horizon);
        let tz = bytower_core::geometric::export::time_zero(&t, d, cutoff)?.report;
        st.set("time_zero", &tz);
        let law = self.exported.as_ref().expect("built");
        let (ok, ratio) = geometric_ratios(law, d.plan.n);
        st.require(ok, "export.geometric_ratios");
        st.set("height_ratio", ratio);
        let pf = &self.cfg.coding;
        let push = check_pushforward(&t.scheme, law, pf.exact_depth, pf.pushforward_samples, stage_seed(&self.cfg, "decompose"))?;
        st.require(push.exact_pass == Some(true), "export.pushforward_exact");
        st.require(push.ks_pass, "export.pushforward_ks");
        st.set("export_pushforward", &push);

        let mut csv = String::from("clock,pending,resolved,t,sup_ratio\n");
        for r in &d.records {
            let _ = writeln!(csv, "{},{},{},{:.12e},{:.12e}", r.clock, rational::format(&r.pending), rational::format(&r.resolved), r.t, r.sup_ratio);
        }
        st.file("clocks.csv", csv);
        st.file("decomposition.json", serde_json::to_string_pretty(d)?);
        Ok(st)
    }

    fn laws(&mut self) -> Result<Stage> {
        let mut st = Stage::new("laws");
        let lc = self.cfg.laws.clone();
        let mut worst: f64 = 0.0;
        let mut table = String::from("theta_m,theta_x,n,pmf,exact\n");
        for &tm in &lc.theta_m {
            for &tx in &lc.theta_x {
                let law = geom_sum_law(tx, tm);
                let n_max = lc.oracle_n_max as usize;
                let oracle = geom_sum_convolution(tx, tm, n_max, 1e-12);
                let oracle_tail = 1.0 - oracle.iter().sum::<f64>();
                let tv = (0..=n_max).map(|n| (law.pmf(n as u64) - oracle[n]).abs()).sum::<f64>() + (law.tail(n_max as u64) - oracle_tail).abs();
                worst = worst.max(tv);
                let exact = match (rational::from_decimal(tx), rational::from_decimal(tm)) {
                    (Some(x), Some(m)) => Some(geom_sum_law(x, m)),
                    _ => None,
                };
                for n in 0..=lc.table_max {
                    let e = exact.as_ref().map_or(String::new(), |l| rational::format(&l.pmf(n)));
                    let _ = writeln!(table, "{tm},{tx},{n},{:.15e},{e}", law.pmf(n));
                }
            }
        }
        st.require(worst <= 1e-10, "laws.convolution_tv");
        st.set("grid_points", lc.theta_m.len() * lc.theta_x.len());
        st.set("max_tv", worst);
        st.file("geom_sum_law.csv", table);

        if self.tower().is_ok() {
            let plan = self.ensure_plan()?;
            let law = r_law(&plan);
            let clock_max = lc.enumerate_multiples * plan.n;
            let en = enumerate_clock_masses(&plan, clock_max);
            let agree = (0..=clock_max).all(|c| law.prob(c) == en[c as usize]);
            st.require(agree, "laws.r_enumeration");
            let partial: Rational = (0..=clock_max).map(|c| law.prob(c)).sum();
            st.require(&partial + law.tail(clock_max) == Rational::one(), "laws.r_normalization");
            let far = law.horizon(1e-15);
            let float_sum: f64 = (0..=far).map(|c| rational::to_f64(&law.prob(c))).sum();
            st.require((float_sum - 1.0).abs() <= 1e-12, "laws.r_float_normalization");
            st.set("r_law", &law);
            st.set("enumerated_clocks", clock_max + 1);
            let mut csv = String::from("clock,prob\n");
            for c in 0..=clock_max {
                let _ = writeln!(csv, "{c},{}", rational::format(&law.prob(c)));
            }
            st.file("r_law.csv", csv);
        }
        Ok(st)
    }

    fn iid_config(&mut self) -> Result<(IidConfig, f64)> {
        self.ensure_export()?;
        let d = self.decomposition.as_ref().expect("built");
        let law_theta = 1.0 - rational::to_f64(&d.r_law.theta);
        let n = d.plan.n;
        let theta = self.cfg.sampler.theta.unwrap_or(law_theta);
        let t = self.tower().map_err(|e| anyhow!(e))?;
        Ok((IidConfig::for_scheme(theta, n, &t.scheme)?, law_theta))
    }

    fn sample(&mut self) -> Result<Stage> {
        let mut st = Stage::new("sample");
        if let Err(e) = self.tower() {
            return Ok(Stage::skip("sample", &e));
        }
        let (cfg, law_theta) = self.iid_config()?;
        let sc = self.cfg.sampler.clone();
        let seed = stage_seed(&self.cfg, "sample");
        let t = self.tower().expect("built").clone();
        let law = self.exported.as_ref().expect("built");
        let alpha = ConditionalAlphabet { law, n_step: cfg.n_step };
        let words = sc.words.max(2);
        let traj = iid_sampler::sample_trajectory(&cfg, &alpha, &t.scheme, rng::derive(seed, &[0]), sc.length, words)?;
        let mut mismatches = 0usize;
        for w in traj.windows(2) {
            let mut p = w[0].clone();
            for _ in 0..cfg.n_step {
                p = p.step(&t.scheme)?;
            }
            let k = p.prefix().len().min(w[1].prefix().len());
            if p.level() != w[1].level() || p.prefix()[..k] != w[1].prefix()[..k] {
                mismatches += 1;
            }
        }
        st.require(mismatches == 0, "sample.shift_equivariance");
        st.set("theta", cfg.theta);
        st.set("N", cfg.n_step);
        st.set("xi", cfg.xi);
        st.set("trajectory_length", traj.len());
        st.set("equivariance_mismatches", mismatches);
        let mut csv = String::from("j,level,x\n");
        for (j, p) in traj.iter().enumerate() {
            let _ = writeln!(csv, "{j},{},{:.17e}", p.level(), pi_x(p.prefix(), &t.scheme)?.value);
        }
        st.file("trajectory.csv", csv);

        let levels: Vec<u64> = (0..sc.level_samples)
            .map(|i| {
                // The level coordinate of `g`, without drawing the words.
                let s = ShiftState::new(rng::derive(seed, &[1, i as u64]));
                iid_sampler::renewals(&cfg, &s, 0).map(|r| cfg.n_step * r[0].unsigned_abs() + s.phase(&cfg))
            })
            .collect::<bytower_core::Result<_>>()?;
        let top = levels.iter().copied().max().unwrap_or(0);
        let mut counts = vec![0usize; top as usize + 1];
        for &l in &levels {
            counts[l as usize] += 1;
        }
        let tm = TowerMeasure::new(law.clone());
        let n = levels.len() as f64;
        let (mut tv, mut ks, mut cdf, mut emp) = (0.0f64, 0.0f64, 0.0, 0.0);
        for l in 0..=top {
            let m = tm.level_mass(l);
            let e = counts[l as usize] as f64 / n;
            tv += (e - m).abs();
            cdf += m;
            emp += e;
            ks = ks.max((emp - cdf).abs());
        }
        tv = (tv + 1.0 - cdf) / 2.0;
        let threshold = sc.level_ks_coefficient / n.sqrt();
        st.set("level_tv", tv);
        st.set("level_ks", ks);
        st.set("level_ks_threshold", threshold);
        if (cfg.theta - law_theta).abs() <= 1e-12 * law_theta {
            st.require(ks <= threshold, "sample.level_law");
        } else {
            st.set("level_law", "theta differs from the exported law; not compared");
        }
        Ok(st)
    }

    fn dependence(&mut self) -> Result<Stage> {
        let mut st = Stage::new("dependence");
        if let Err(e) = self.tower() {
            return Ok(Stage::skip("dependence", &e));
        }
        let (cfg, _) = self.iid_config()?;
        let sc = self.cfg.sampler.clone();
        let seed = stage_seed(&self.cfg, "dependence");
        let ks: Vec<i64> = (-sc.k_max..=-1).chain(1..=sc.k_max).collect();
        let rows = ks
            .iter()
            .map(|&k| iid_sampler::estimate_delta_kp(&cfg, k, sc.p, sc.replicates, seed))
            .collect::<bytower_core::Result<Vec<_>>>()?;
        let bad: Vec<i64> = rows.iter().filter(|r| !r.pass).map(|r| r.k).collect();
        st.require(bad.is_empty(), "dependence.delta_bound");
        let forward: Vec<_> = rows.iter().filter(|r| r.k >= 1).cloned().collect();
        let backward: Vec<_> = rows.iter().filter(|r| r.k <= 0).cloned().collect();
        for (name, side) in [("forward", &forward), ("backward", &backward)] {
            match iid_sampler::fit_dependence_decay(side) {
                Ok(fit) => {
                    st.require(fit.slope < 0.0 && fit.r2 > sc.r2_min, &format!("dependence.decay_fit_{name}"));
                    st.set(&format!("fit_{name}"), &fit);
                }
                Err(e) => {
                    st.failures.push(format!("dependence.decay_fit_{name}"));
                    st.set(&format!("fit_{name}"), e.to_string());
                }
            }
        }
        st.set("theta", cfg.theta);
        st.set("xi", cfg.xi);
        st.set("p", sc.p);
        st.set("replicates", sc.replicates);
        st.set("bound_violations", &bad);
        st.set("estimates", &rows);
        st.file("delta.csv", iid_sampler::delta_csv(&rows));
        Ok(st)
    }

    fn stats(&mut self) -> Result<Stage> {
        let mut st = Stage::new("stats");
        if self.cfg.scheme.kind != SchemeKind::Doubling {
            return Ok(Stage::skip("stats", "the CLT check runs on the doubling map"));
        }
        let sc = self.cfg.statistics.clone();
        let seed = stage_seed(&self.cfg, "stats");
        let opts = CltOptions {
            trajectories: sc.trajectories,
            length: sc.length,
            checkpoints: sc.checkpoints,
            gk_length: sc.gk_length,
            gk_lag: sc.gk_lag,
            ks_max: sc.ks_max,
            slope_tolerance: sc.slope_tolerance,
        };
        let clt = statistics::clt_test(rng::derive(seed, &[0]), opts)?;
        st.require(clt.ks_distance <= sc.ks_max, "stats.clt_ks");
        st.require(clt.slope_relative_error <= sc.slope_tolerance, "stats.variance_slope");
        let tail = if self.tower().is_ok() && sc.height_samples > 0 {
            self.ensure_export()?;
            let law = self.exported.as_ref().expect("built");
            let mut r = rng::stream(seed, &[1]);
            let hs: Vec<u64> = (0..sc.height_samples).map(|_| law.heights.sample(&mut r)).collect();
            let fit = statistics::tail_fit(&hs, 20)?;
            st.require(fit.verdict == "exponential", "stats.height_tail");
            Some(fit)
        } else {
            None
        };
        let report = statistics::StatReport { clt, tail };
        st.file("variance.csv", report.variance_csv());
        st.set("clt", &report.clt);
        st.set("height_tail", &report.tail);
        Ok(st)
    }
}

/// Explicit word masses per height are supported on multiples of `N` and follow the tail's
/// ratio exactly; returns the ratio as a string.
pub fn geometric_ratios(law: &WordLaw, n: u64) -> (bool, String) {
    let Some(tail) = &law.heights.tail else { return (false, "no tail".into()) };
    let (Some(first), Some(ratio)) = (tail.first.exact(), tail.ratio.exact()) else { return (false, "inexact".into()) };
    let mut ok = tail.start == n && tail.step == n;
    for (&h, ws) in &law.words {
        let total: Option<Rational> = ws.iter().map(|(_, p)| p.exact().cloned()).sum();
        let Some(total) = total else { return (false, "inexact".into()) };
        ok &= h % n == 0 && h >= n && total == first * rational::pow(ratio, (h / n - 1) as u32);
    }
    (ok && !law.words.is_empty(), rational::format(ratio))
}
