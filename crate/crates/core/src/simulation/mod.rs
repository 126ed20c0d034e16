//! Beta-regression simulation study.
//!
//! Data follow `Y ~ Beta(a, b)` with `log a = β₀ + β₁x₁ + β₂x₂`,
//! `x₁ ~ N(0, 1)`, `x₂ ~ Bernoulli(0.5)`; the working model drops `x₂`.
//! Each replication fits the working model, builds one predictive draw set
//! per unit and records how often R*, calibrated R* and R‡ reject on the
//! right at the nominal level.

pub mod mcmc;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use mcmc::{fit, gelman_rubin, McmcOutput, McmcSettings};

use crate::calibration::{plugin_calibrated_alpha, TestSpec};
use crate::distributions::{normal, sample_beta};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fmt::sig10;
use crate::residuals::{residual_record, standard_residual, ResidualRecord};

fn d_k() -> usize {
    1000
}
fn d_beta1() -> f64 {
    1.0
}
fn d_beta2_alt() -> f64 {
    -5.0
}
fn d_b() -> f64 {
    3.0
}
fn d_iter() -> usize {
    2000
}
fn d_burnin() -> usize {
    1000
}
fn d_chains() -> usize {
    2
}
fn d_reps() -> usize {
    200
}
fn d_alpha() -> f64 {
    0.05
}
fn d_seed() -> u64 {
    20_240_601
}
fn d_n() -> usize {
    200
}
fn d_trunc() -> f64 {
    crate::residuals::DEFAULT_TRUNC_BOUND
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Units in the single-replication figure data.
    #[serde(rename = "K", alias = "k", default = "d_k")]
    pub k: usize,
    #[serde(default)]
    pub beta0: f64,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default)]
    pub beta2_null: f64,
    #[serde(default = "d_beta2_alt")]
    pub beta2_alternative: f64,
    #[serde(default = "d_b")]
    pub b_true: f64,
    #[serde(default = "d_iter")]
    pub n_iter: usize,
    #[serde(default = "d_burnin")]
    pub n_burnin: usize,
    #[serde(default = "d_chains")]
    pub n_chains: usize,
    #[serde(default = "d_reps")]
    pub n_replications: usize,
    #[serde(default = "d_alpha")]
    pub alpha_nominal: f64,
    #[serde(default = "d_seed")]
    pub master_seed: u64,
    /// Units generated and fitted in each study replication.
    #[serde(rename = "sample_size_N", alias = "sample_size_n", default = "d_n")]
    pub sample_size_n: usize,
    #[serde(default = "d_trunc")]
    pub trunc_bound: f64,
    /// Test only this unit (1-based) in each replication instead of all of them.
    #[serde(default)]
    pub tested_unit: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_iter <= self.n_burnin {
            return fail("n_iter must exceed n_burnin");
        }
        if self.n_iter - self.n_burnin < 20 {
            return fail("need at least 20 retained iterations");
        }
        if self.n_chains == 0 {
            return fail("n_chains must be at least 1");
        }
        if !(self.b_true > 0.0 && self.b_true.is_finite()) {
            return fail("b_true must be positive");
        }
        for v in [self.beta0, self.beta1, self.beta2_null, self.beta2_alternative] {
            if !v.is_finite() {
                return fail("regression coefficients must be finite");
            }
        }
        if !(self.alpha_nominal > 0.0 && self.alpha_nominal < 1.0) {
            return fail("alpha_nominal must lie in (0, 1)");
        }
        if self.sample_size_n < 2 {
            return fail("sample_size_N must be at least 2");
        }
        if self.k < 8 {
            return fail("K must be at least 8");
        }
        if !(self.trunc_bound > 0.0) {
            return fail("trunc_bound must be positive");
        }
        if let Some(u) = self.tested_unit {
            if u == 0 || u > self.sample_size_n {
                return fail("tested_unit must be in 1..=sample_size_N");
            }
        }
        Ok(())
    }

    pub fn settings(&self) -> McmcSettings {
        McmcSettings {
            n_iter: self.n_iter,
            n_burnin: self.n_burnin,
            n_chains: self.n_chains,
        }
    }

    pub fn beta2(&self, h: Hypothesis) -> f64 {
        match h {
            Hypothesis::Null => self.beta2_null,
            Hypothesis::Alternative => self.beta2_alternative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    Null,
    Alternative,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 2] = [Hypothesis::Null, Hypothesis::Alternative];

    pub fn label(self) -> &'static str {
        match self {
            Hypothesis::Null => "null",
            Hypothesis::Alternative => "alternative",
        }
    }

    fn index(self) -> u64 {
        match self {
            Hypothesis::Null => 0,
            Hypothesis::Alternative => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub unit_id: usize,
    pub x1: f64,
    pub x2: f64,
    pub y: f64,
}

/// What a generator stream is used for within one replication.
#[derive(Debug, Clone, Copy)]
pub enum Purpose {
    Data,
    Chain(usize),
}

/// Replication index reserved for the single figure replication.
pub const FIGURE_REPLICATION: u64 = (1 << 32) - 1;

/// Independent generator for `(hypothesis, replication, purpose)`, derived
/// from the master seed.
pub fn stream_rng(master_seed: u64, h: Hypothesis, replication: u64, purpose: Purpose) -> ChaCha8Rng {
    let p = match purpose {
        Purpose::Data => 0,
        Purpose::Chain(c) => 1 + c as u64,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((h.index() << 63) | ((replication & 0xFFFF_FFFF) << 24) | (p & 0xFF_FFFF));
    rng
}

/// Draws `n` covariate pairs `(x₁, x₂)`.
pub fn draw_covariates<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<(f64, f64)> {
    (0..n)
        .map(|_| {
            let x1: f64 = StandardNormal.sample(rng);
            (x1, f64::from(rng.random_bool(0.5)))
        })
        .collect()
}

/// Responses for given covariates under coefficient `beta2` on `x₂`.
pub fn generate_responses<R: Rng + ?Sized>(
    cfg: &SimConfig,
    beta2: f64,
    covariates: &[(f64, f64)],
    rng: &mut R,
) -> Vec<Unit> {
    covariates
        .iter()
        .enumerate()
        .map(|(i, &(x1, x2))| {
            let a = (cfg.beta0 + cfg.beta1 * x1 + beta2 * x2).exp();
            Unit {
                unit_id: i + 1,
                x1,
                x2,
                y: sample_beta(a, cfg.b_true, rng),
            }
        })
        .collect()
}

/// `n` units for the given hypothesis; covariates are drawn before responses.
pub fn generate_dataset<R: Rng + ?Sized>(cfg: &SimConfig, h: Hypothesis, n: usize, rng: &mut R) -> Vec<Unit> {
    let cov = draw_covariates(n, rng);
    generate_responses(cfg, cfg.beta2(h), &cov, rng)
}

/// Fits the working model to a dataset with the chain streams of one replication.
pub fn fit_working_model(data: &[Unit], cfg: &SimConfig, h: Hypothesis, replication: u64) -> Result<McmcOutput> {
    let x1: Vec<f64> = data.iter().map(|u| u.x1).collect();
    let y: Vec<f64> = data.iter().map(|u| u.y).collect();
    let mut rngs: Vec<ChaCha8Rng> = (0..cfg.n_chains)
        .map(|c| stream_rng(cfg.master_seed, h, replication, Purpose::Chain(c)))
        .collect();
    fit(&x1, &y, cfg.settings(), &mut rngs)
}

/// Dataset, fit and residual records of one replication.
#[derive(Debug, Clone)]
pub struct Replication {
    pub data: Vec<Unit>,
    pub mcmc: McmcOutput,
    pub records: Vec<ResidualRecord>,
}

pub fn run_replication(cfg: &SimConfig, h: Hypothesis, replication: u64, n_units: usize) -> Result<Replication> {
    let mut rng = stream_rng(cfg.master_seed, h, replication, Purpose::Data);
    let data = generate_dataset(cfg, h, n_units, &mut rng);
    let mcmc = fit_working_model(&data, cfg, h, replication)?;
    let records = data
        .iter()
        .zip(&mcmc.predictive)
        .map(|(u, d)| residual_record(u.unit_id.to_string(), u.y, d, cfg.trunc_bound))
        .collect::<Result<Vec<_>>>()?;
    Ok(Replication { data, mcmc, records })
}

/// The single figure replication with `K` units.
pub fn figure_replication(cfg: &SimConfig, h: Hypothesis) -> Result<Replication> {
    cfg.validate()?;
    run_replication(cfg, h, FIGURE_REPLICATION, cfg.k)
}

/// Rejection fractions of one replication over its tested units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rate_star: f64,
    pub rate_star_calibrated: f64,
    pub rate_ddag: f64,
    pub mean_calibrated_alpha: f64,
    pub nonconverged: bool,
}

fn upper_threshold(level: f64) -> f64 {
    if level <= 0.0 {
        f64::INFINITY
    } else if level >= 1.0 {
        f64::NEG_INFINITY
    } else {
        -normal::ppnd16(level)
    }
}

pub fn evaluate_replication(cfg: &SimConfig, rep: &Replication) -> Result<RepOutcome> {
    let spec = TestSpec::right(cfg.alpha_nominal)?;
    let z = upper_threshold(cfg.alpha_nominal);
    let tested: Vec<usize> = match cfg.tested_unit {
        Some(u) => vec![u - 1],
        None => (0..rep.data.len()).collect(),
    };
    let (mut star, mut cal, mut ddag, mut alpha_sum) = (0usize, 0usize, 0usize, 0.0);
    for &k in &tested {
        let d = &rep.mcmc.predictive[k];
        let y = rep.data[k].y;
        let r_star = standard_residual(y, d)?;
        let r_ddag = crate::residuals::raw_percentile_residual(y, d).residual;
        let a_star = plugin_calibrated_alpha(d, spec)?;
        star += usize::from(r_star > z);
        cal += usize::from(r_star > upper_threshold(a_star));
        ddag += usize::from(r_ddag > z);
        alpha_sum += a_star;
    }
    let n = tested.len() as f64;
    Ok(RepOutcome {
        rate_star: star as f64 / n,
        rate_star_calibrated: cal as f64 / n,
        rate_ddag: ddag as f64 / n,
        mean_calibrated_alpha: alpha_sum / n,
        nonconverged: rep.mcmc.nonconverged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub hypothesis: Hypothesis,
    pub sample_size_n: usize,
    pub replications: usize,
    pub dropped: usize,
    pub nonconverged: usize,
    pub rate_star: f64,
    pub se_star: f64,
    pub rate_star_calibrated: f64,
    pub se_star_calibrated: f64,
    pub rate_ddag: f64,
    pub se_ddag: f64,
    pub mean_calibrated_alpha: f64,
    pub se_calibrated_alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: SimConfig,
    pub rows: Vec<StudyRow>,
    /// One message per dropped replication.
    pub failures: Vec<String>,
}

fn mean_se(values: &[f64], binary: bool) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = values.iter().sum::<f64>() / n;
    let se = if binary {
        (m * (1.0 - m) / n).sqrt()
    } else if values.len() < 2 {
        f64::NAN
    } else {
        (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
    };
    (m, se)
}

pub fn summarize(cfg: &SimConfig, h: Hypothesis, outcomes: &[Result<RepOutcome>]) -> (StudyRow, Vec<String>) {
    let ok: Vec<RepOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok().copied()).collect();
    let failures = outcomes
        .iter()
        .enumerate()
        .filter_map(|(i, o)| o.as_ref().err().map(|e| format!("{} replication {}: {e}", h.label(), i + 1)))
        .collect();
    let binary = cfg.tested_unit.is_some();
    let col = |f: fn(&RepOutcome) -> f64| mean_se(&ok.iter().map(f).collect::<Vec<_>>(), binary);
    let (rate_star, se_star) = col(|o| o.rate_star);
    let (rate_star_calibrated, se_star_calibrated) = col(|o| o.rate_star_calibrated);
    let (rate_ddag, se_ddag) = col(|o| o.rate_ddag);
    let (mean_calibrated_alpha, se_calibrated_alpha) =
        mean_se(&ok.iter().map(|o| o.mean_calibrated_alpha).collect::<Vec<_>>(), false);
    (
        StudyRow {
            hypothesis: h,
            sample_size_n: cfg.sample_size_n,
            replications: ok.len(),
            dropped: outcomes.len() - ok.len(),
            nonconverged: ok.iter().filter(|o| o.nonconverged).count(),
            rate_star,
            se_star,
            rate_star_calibrated,
            se_star_calibrated,
            rate_ddag,
            se_ddag,
            mean_calibrated_alpha,
            se_calibrated_alpha,
        },
        failures,
    )
}

pub fn run_study(cfg: &SimConfig) -> Result<StudyReport> {
    run_study_with(cfg, Execution::default())
}

pub fn run_study_with(cfg: &SimConfig, exec: Execution) -> Result<StudyReport> {
    cfg.validate()?;
    let mut report = StudyReport {
        config: cfg.clone(),
        rows: Vec::new(),
        failures: Vec::new(),
    };
    if cfg.n_replications == 0 {
        return Ok(report);
    }
    let reps = cfg.n_replications;
    let outcomes = exec.map_indexed(2 * reps, |i| {
        let h = Hypothesis::ALL[i / reps];
        let r = (i % reps) as u64;
        run_replication(cfg, h, r, cfg.sample_size_n).and_then(|rep| evaluate_replication(cfg, &rep))
    });
    for (hi, h) in Hypothesis::ALL.into_iter().enumerate() {
        let (row, failures) = summarize(cfg, h, &outcomes[hi * reps..(hi + 1) * reps]);
        report.rows.push(row);
        report.failures.extend(failures);
    }
    Ok(report)
}

pub const STUDY_CSV_HEADER: &str = "true_model,hypothesis,N,replications,dropped,nonconverged,\
rejection_rate_star,se_star,rejection_rate_star_calibrated,se_star_calibrated,\
rejection_rate_ddag,se_ddag,mean_calibrated_alpha,se_calibrated_alpha";

impl StudyReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{STUDY_CSV_HEADER}")?;
        for r in &self.rows {
            let model = match r.hypothesis {
                Hypothesis::Null => "F0",
                Hypothesis::Alternative => "F1",
            };
            writeln!(
                w,
                "{model},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.hypothesis.label(),
                r.sample_size_n,
                r.replications,
                r.dropped,
                r.nonconverged,
                sig10(r.rate_star),
                sig10(r.se_star),
                sig10(r.rate_star_calibrated),
                sig10(r.se_star_calibrated),
                sig10(r.rate_ddag),
                sig10(r.se_ddag),
                sig10(r.mean_calibrated_alpha),
                sig10(r.se_calibrated_alpha),
            )?;
        }
        Ok(())
    }

    pub fn row(&self, h: Hypothesis) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.hypothesis == h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            k: 50,
            n_iter: 300,
            n_burnin: 150,
            n_replications: 3,
            sample_size_n: 40,
            ..SimConfig::default()
        }
    }

    #[test]
    fn defaults_and_validation() {
        let c = SimConfig::default();
        assert_eq!((c.k, c.n_iter, c.n_burnin, c.n_chains, c.sample_size_n), (1000, 2000, 1000, 2, 200));
        assert_eq!((c.beta0, c.beta1, c.b_true, c.beta2_alternative), (0.0, 1.0, 3.0, -5.0));
        c.validate().unwrap();
        assert!(SimConfig { n_burnin: 2000, ..c.clone() }.validate().is_err());
        assert!(SimConfig { n_chains: 0, ..c.clone() }.validate().is_err());
        assert!(SimConfig { tested_unit: Some(0), ..c.clone() }.validate().is_err());
        let parsed: SimConfig = serde_json::from_str(r#"{"K": 10, "sample_size_N": 150}"#).unwrap();
        assert_eq!((parsed.k, parsed.sample_size_n), (10, 150));
        assert!(serde_json::from_str::<SimConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn x2_has_no_effect_under_null() {
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cov = draw_covariates(200, &mut rng);
        let flipped: Vec<_> = cov.iter().map(|&(a, b)| (a, 1.0 - b)).collect();
        let y1 = generate_responses(&cfg, 0.0, &cov, &mut ChaCha8Rng::seed_from_u64(2));
        let y2 = generate_responses(&cfg, 0.0, &flipped, &mut ChaCha8Rng::seed_from_u64(2));
        for (u, v) in y1.iter().zip(&y2) {
            assert_eq!(u.y.to_bits(), v.y.to_bits());
        }
    }

    #[test]
    fn baseline_mean() {
        let cfg = SimConfig::default();
        let cov = vec![(0.0, 0.0); 100_000];
        let data = generate_responses(&cfg, -5.0, &cov, &mut ChaCha8Rng::seed_from_u64(7));
        let m = data.iter().map(|u| u.y).sum::<f64>() / data.len() as f64;
        assert!((m - 0.25).abs() < 0.005, "{m}");
    }

    #[test]
    fn dataset_is_deterministic() {
        let cfg = SimConfig::default();
        for h in Hypothesis::ALL {
            let a = generate_dataset(&cfg, h, 50, &mut stream_rng(9, h, 4, Purpose::Data));
            let b = generate_dataset(&cfg, h, 50, &mut stream_rng(9, h, 4, Purpose::Data));
            assert_eq!(a, b);
            assert!(a.iter().all(|u| u.y > 0.0 && u.y < 1.0));
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = stream_rng(1, Hypothesis::Null, 0, Purpose::Data);
        let mut b = stream_rng(1, Hypothesis::Null, 0, Purpose::Chain(0));
        let mut c = stream_rng(1, Hypothesis::Alternative, 0, Purpose::Data);
        let (x, y, z): (u64, u64, u64) = (a.random(), b.random(), c.random());
        assert!(x != y && x != z && y != z);
    }

    #[test]
    fn small_study_runs() {
        let cfg = small();
        let rep = run_study_with(&cfg, Execution::Sequential).unwrap();
        assert_eq!(rep.rows.len(), 2);
        for r in &rep.rows {
            assert_eq!(r.replications + r.dropped, 3);
            for v in [r.rate_star, r.rate_star_calibrated, r.rate_ddag, r.mean_calibrated_alpha] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("true_model,hypothesis,N,"));
    }

    #[test]
    fn zero_replications() {
        let rep = run_study(&SimConfig {
            n_replications: 0,
            ..small()
        })
        .unwrap();
        assert!(rep.rows.is_empty());
    }

    #[test]
    fn single_unit_mode() {
        let cfg = SimConfig {
            tested_unit: Some(1),
            ..small()
        };
        let rep = run_study_with(&cfg, Execution::Sequential).unwrap();
        for r in &rep.rows {
            for v in [r.rate_star, r.rate_ddag] {
                assert!((v * 3.0 - (v * 3.0).round()).abs() < 1e-12);
            }
            assert!((r.se_ddag - (r.rate_ddag * (1.0 - r.rate_ddag) / 3.0).sqrt()).abs() < 1e-15);
        }
    }
}
