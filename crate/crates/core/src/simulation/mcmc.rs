//! Metropolis-within-Gibbs for the working Beta regression
//! `Y_k ~ Beta(exp(β₀ + β₁ x₁ₖ), b)` with `β₀, β₁ ~ N(0, 100)` and
//! `b ~ Uniform(0, 5)`.

use libm::lgamma;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distributions::{sample_beta, PredictiveDistribution};
use crate::error::{Error, Result};

pub const PRIOR_VAR_BETA: f64 = 100.0;
pub const B_UPPER: f64 = 5.0;
pub const RHAT_THRESHOLD: f64 = 1.1;
pub const TARGET_ACCEPTANCE: f64 = 0.35;
const INITIAL_STEPS: [f64; 3] = [0.1, 0.1, 0.2];
/// Adapted steps are kept inside this factor range of the initial step.
const STEP_RANGE: (f64, f64) = (1e-4, 1e2);

pub const PARAM_NAMES: [&str; 3] = ["beta0", "beta1", "b"];

/// Sampler settings for one fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcSettings {
    pub n_iter: usize,
    pub n_burnin: usize,
    pub n_chains: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McmcOutput {
    /// Predictive law of each unit, from one Beta draw per retained
    /// iteration, pooled over chains.
    #[serde(skip)]
    pub predictive: Vec<PredictiveDistribution>,
    /// `[chain][retained iteration] = (β₀, β₁, b)`.
    #[serde(skip)]
    pub posterior: Vec<Vec<[f64; 3]>>,
    pub rhat: [f64; 3],
    /// Post-burn-in acceptance rate per block, averaged over chains.
    pub acceptance: [f64; 3],
    pub nonconverged: bool,
}

impl McmcOutput {
    pub fn posterior_mean(&self, param: usize) -> f64 {
        let (s, n) = self
            .posterior
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, n), th| (s + th[param], n + 1));
        s / n as f64
    }

    pub fn posterior_sd(&self, param: usize) -> f64 {
        let m = self.posterior_mean(param);
        let (s, n) = self
            .posterior
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, n), th| (s + (th[param] - m).powi(2), n + 1));
        (s / (n as f64 - 1.0)).sqrt()
    }

    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Potential scale reduction factor `sqrt(((n-1)/n · W + B/n) / W)` over
/// equal-length chains.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: chains.len(),
        });
    }
    let n = chains[0].len();
    if n < 10 {
        return Err(Error::TooFewPoints { needed: 10, got: n });
    }
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidParameter("chains must have equal length".into()));
    }
    let m = chains.len() as f64;
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m;
    if !(w > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let grand = means.iter().sum::<f64>() / m;
    let b_over_n = means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1.0);
    Ok((((nf - 1.0) / nf * w + b_over_n) / w).sqrt())
}

/// Per-unit likelihood pieces that depend on `a` for the current `b`.
struct Chain<'a> {
    x1: &'a [f64],
    ln_y: &'a [f64],
    sum_ln_1my: f64,
    theta: [f64; 3],
    a: Vec<f64>,
    lg_a: Vec<f64>,
    /// `lnΓ(a + b) - lnΓ(a) + a ln y`
    term: Vec<f64>,
    sum_term: f64,
    scratch: (Vec<f64>, Vec<f64>, Vec<f64>),
}

fn ln_prior_beta(v: f64) -> f64 {
    -0.5 * v * v / PRIOR_VAR_BETA
}

impl<'a> Chain<'a> {
    fn new(x1: &'a [f64], ln_y: &'a [f64], sum_ln_1my: f64, theta: [f64; 3]) -> Self {
        let n = x1.len();
        let mut c = Chain {
            x1,
            ln_y,
            sum_ln_1my,
            theta,
            a: vec![0.0; n],
            lg_a: vec![0.0; n],
            term: vec![0.0; n],
            sum_term: 0.0,
            scratch: (vec![0.0; n], vec![0.0; n], vec![0.0; n]),
        };
        c.sum_term = Self::fill(x1, ln_y, theta, &mut c.a, &mut c.lg_a, &mut c.term);
        c
    }

    fn fill(x1: &[f64], ln_y: &[f64], th: [f64; 3], a: &mut [f64], lg_a: &mut [f64], term: &mut [f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..x1.len() {
            let ak = (th[0] + th[1] * x1[k]).exp();
            let lga = lgamma(ak);
            let t = lgamma(ak + th[2]) - lga + ak * ln_y[k];
            a[k] = ak;
            lg_a[k] = lga;
            term[k] = t;
            s += t;
        }
        s
    }

    /// Log posterior up to a constant, given `Σ term` and `b`.
    fn ln_post(&self, sum_term: f64, th: [f64; 3]) -> f64 {
        let n = self.x1.len() as f64;
        sum_term - n * lgamma(th[2]) + (th[2] - 1.0) * self.sum_ln_1my + ln_prior_beta(th[0]) + ln_prior_beta(th[1])
    }

    fn current(&self) -> f64 {
        self.ln_post(self.sum_term, self.theta)
    }

    /// One random-walk proposal on block `j`; returns whether it was accepted.
    fn step<R: Rng + ?Sized>(&mut self, j: usize, scale: f64, rng: &mut R) -> bool {
        let z: f64 = StandardNormal.sample(rng);
        let mut prop = self.theta;
        prop[j] += scale * z;
        if j == 2 && !(prop[2] > 0.0 && prop[2] < B_UPPER) {
            return false;
        }
        let old = self.current();
        let (new, swap) = if j == 2 {
            let mut s = 0.0;
            let t = &mut self.scratch.2;
            for k in 0..self.x1.len() {
                t[k] = lgamma(self.a[k] + prop[2]) - self.lg_a[k] + self.a[k] * self.ln_y[k];
                s += t[k];
            }
            (self.ln_post(s, prop), s)
        } else {
            let (a, lg_a, t) = (&mut self.scratch.0, &mut self.scratch.1, &mut self.scratch.2);
            let s = Self::fill(self.x1, self.ln_y, prop, a, lg_a, t);
            (self.ln_post(s, prop), s)
        };
        let delta = new - old;
        if delta.is_nan() {
            return false;
        }
        let u: f64 = rng.random();
        if delta >= 0.0 || u.ln() < delta {
            self.theta = prop;
            self.sum_term = swap;
            std::mem::swap(&mut self.term, &mut self.scratch.2);
            if j != 2 {
                std::mem::swap(&mut self.a, &mut self.scratch.0);
                std::mem::swap(&mut self.lg_a, &mut self.scratch.1);
            }
            true
        } else {
            false
        }
    }
}

struct ChainRun {
    trace: Vec<[f64; 3]>,
    acceptance: [f64; 3],
}

fn run_chain<R: Rng + ?Sized>(
    x1: &[f64],
    ln_y: &[f64],
    sum_ln_1my: f64,
    settings: McmcSettings,
    draws: &mut [Vec<f64>],
    rng: &mut R,
) -> Result<ChainRun> {
    // dispersed starting point
    let init = [
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        rng.random_range(0.5..4.5),
    ];
    let mut chain = Chain::new(x1, ln_y, sum_ln_1my, init);
    if !chain.current().is_finite() {
        return Err(Error::Sampler(format!("non-finite log posterior at initial values {init:?}")));
    }
    let mut log_step = INITIAL_STEPS.map(f64::ln);
    let bounds: [(f64, f64); 3] =
        std::array::from_fn(|j| ((INITIAL_STEPS[j] * STEP_RANGE.0).ln(), (INITIAL_STEPS[j] * STEP_RANGE.1).ln()));
    let mut accepted = [0usize; 3];
    let retained = settings.n_iter - settings.n_burnin;
    let mut trace = Vec::with_capacity(retained);
    for t in 0..settings.n_iter {
        let burnin = t < settings.n_burnin;
        for j in 0..3 {
            let ok = chain.step(j, log_step[j].exp(), rng);
            if burnin {
                let gain = 1.0 / ((t + 1) as f64).powf(0.6);
                log_step[j] = (log_step[j] + gain * (f64::from(u8::from(ok)) - TARGET_ACCEPTANCE))
                    .clamp(bounds[j].0, bounds[j].1);
            } else if ok {
                accepted[j] += 1;
            }
        }
        if !burnin {
            trace.push(chain.theta);
            let b = chain.theta[2];
            for (k, d) in draws.iter_mut().enumerate() {
                d.push(sample_beta(chain.a[k], b, rng));
            }
        }
    }
    Ok(ChainRun {
        trace,
        acceptance: accepted.map(|c| c as f64 / retained as f64),
    })
}

/// Fits the working model to `(x1, y)` pairs. Each chain draws from its own
/// generator in `chain_rngs`.
///
/// With a single chain the convergence statistic compares its two halves.
pub fn fit<R: Rng>(x1: &[f64], y: &[f64], settings: McmcSettings, chain_rngs: &mut [R]) -> Result<McmcOutput> {
    if settings.n_iter <= settings.n_burnin {
        return Err(Error::Config("n_iter must exceed n_burnin".into()));
    }
    if chain_rngs.len() != settings.n_chains || settings.n_chains == 0 {
        return Err(Error::Config("need one generator per chain".into()));
    }
    if x1.len() != y.len() || x1.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&bad) = y.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
        return Err(Error::Domain {
            value: bad,
            domain: "(0, 1)",
        });
    }
    let ln_y: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let sum_ln_1my: f64 = y.iter().map(|v| (-v).ln_1p()).sum();
    let retained = settings.n_iter - settings.n_burnin;
    let mut draws: Vec<Vec<f64>> = (0..x1.len())
        .map(|_| Vec::with_capacity(retained * settings.n_chains))
        .collect();
    let mut posterior = Vec::with_capacity(settings.n_chains);
    let mut acceptance = [0.0; 3];
    for rng in chain_rngs.iter_mut() {
        let run = run_chain(x1, &ln_y, sum_ln_1my, settings, &mut draws, rng)?;
        for j in 0..3 {
            acceptance[j] += run.acceptance[j] / settings.n_chains as f64;
        }
        posterior.push(run.trace);
    }
    let mut rhat = [0.0; 3];
    for (j, r) in rhat.iter_mut().enumerate() {
        let traces: Vec<Vec<f64>> = if posterior.len() == 1 {
            let half = retained / 2;
            vec![
                posterior[0][..half].iter().map(|th| th[j]).collect(),
                posterior[0][half..2 * half].iter().map(|th| th[j]).collect(),
            ]
        } else {
            posterior.iter().map(|c| c.iter().map(|th| th[j]).collect()).collect()
        };
        *r = gelman_rubin(&traces)?;
    }
    let predictive = draws
        .into_iter()
        .map(PredictiveDistribution::empirical)
        .collect::<Result<Vec<_>>>()?;
    Ok(McmcOutput {
        predictive,
        posterior,
        rhat,
        acceptance,
        nonconverged: rhat.iter().any(|r| !(*r <= RHAT_THRESHOLD)),
    })
}
