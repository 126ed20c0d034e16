//! Predictive distributions: parametric continuous and discrete families plus
//! empirical draw sets, all behind one CDF/quantile/moment/sampling surface.

pub mod normal;
mod samplers;
mod solve;
mod spec;

use rand::Rng;
use statrs::function::beta::{beta_reg, inv_beta_reg, ln_beta};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

pub use samplers::sample_beta;
pub use spec::{DistSpec, EmpiricalSource};

/// Parameterization of a predictive law.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Normal { mu: f64, sigma: f64 },
    LogNormal { mu_log: f64, sigma_log: f64 },
    Beta { a: f64, b: f64 },
    Gamma { shape: f64, rate: f64 },
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Bernoulli { p: f64 },
    Binomial { n: u64, p: f64 },
    Poisson { lambda: f64 },
    PointMass { c: f64 },
    Empirical(Empirical),
}

/// A finite draw set, stored sorted after canonical rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct Empirical {
    draws: Vec<f64>,
}

/// Rounds to 12 significant decimal digits.
///
/// Draws and observations are compared in this canonical form so that values
/// which went through a text file still tie with their in-memory originals.
pub fn canonical(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let exp = x.abs().log10().floor() as i32;
    let shift = 11 - exp;
    if (-290..=290).contains(&shift) {
        let scale = 10f64.powi(shift);
        let r = (x * scale).round() / scale;
        if r.is_finite() {
            return r;
        }
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

impl Empirical {
    pub fn new(mut draws: Vec<f64>) -> Result<Self> {
        if draws.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "empirical distribution needs at least 2 draws, got {}",
                draws.len()
            )));
        }
        if let Some(bad) = draws.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite draw {bad}")));
        }
        for d in draws.iter_mut() {
            *d = canonical(*d);
        }
        draws.sort_by(f64::total_cmp);
        Ok(Self { draws })
    }

    pub fn draws(&self) -> &[f64] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    fn count_le(&self, y: f64) -> usize {
        let y = canonical(y);
        self.draws.partition_point(|&d| d <= y)
    }

    fn count_lt(&self, y: f64) -> usize {
        let y = canonical(y);
        self.draws.partition_point(|&d| d < y)
    }

    fn cdf(&self, y: f64) -> f64 {
        self.count_le(y) as f64 / self.len() as f64
    }

    fn mass(&self, y: f64) -> f64 {
        (self.count_le(y) - self.count_lt(y)) as f64 / self.len() as f64
    }

    /// Smallest draw `x` with `#(draws <= x) / n >= u`.
    fn quantile(&self, u: f64) -> f64 {
        let n = self.len();
        let nf = n as f64;
        let mut k = (u * nf).ceil().max(1.0) as usize;
        while k > 1 && (k - 1) as f64 / nf >= u {
            k -= 1;
        }
        while k < n && (k as f64) / nf < u {
            k += 1;
        }
        self.draws[k.min(n) - 1]
    }

    fn mean_sd(&self) -> (f64, f64) {
        let n = self.len() as f64;
        let mean = self.draws.iter().sum::<f64>() / n;
        let ss: f64 = self.draws.iter().map(|x| (x - mean) * (x - mean)).sum();
        (mean, (ss / (n - 1.0)).sqrt())
    }
}

/// A validated predictive law `D_k` (or a truth law `F_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    family: Family,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")))
    }
}

fn probability(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn open_unit(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain { value: u, domain: "(0, 1)" })
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

impl PredictiveDistribution {
    pub fn new(family: Family) -> Result<Self> {
        match &family {
            Family::Normal { mu, sigma } => {
                finite("mu", *mu)?;
                positive("sigma", *sigma)?;
            }
            Family::LogNormal { mu_log, sigma_log } => {
                finite("mu_log", *mu_log)?;
                positive("sigma_log", *sigma_log)?;
            }
            Family::Beta { a, b } => {
                positive("a", *a)?;
                positive("b", *b)?;
            }
            Family::Gamma { shape, rate } => {
                positive("shape", *shape)?;
                positive("rate", *rate)?;
            }
            Family::Exponential { rate } => positive("rate", *rate)?,
            Family::Uniform { lo, hi } => {
                finite("lo", *lo)?;
                finite("hi", *hi)?;
                if lo >= hi {
                    return Err(Error::InvalidParameter(format!("need lo < hi, got [{lo}, {hi}]")));
                }
            }
            Family::Bernoulli { p } => probability("p", *p)?,
            Family::Binomial { p, .. } => probability("p", *p)?,
            Family::Poisson { lambda } => positive("lambda", *lambda)?,
            Family::PointMass { c } => finite("c", *c)?,
            Family::Empirical(e) => {
                if e.len() < 2 {
                    return Err(Error::InvalidParameter("empirical needs at least 2 draws".into()));
                }
            }
        }
        Ok(Self { family })
    }

    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Normal { mu, sigma })
    }
    pub fn lognormal(mu_log: f64, sigma_log: f64) -> Result<Self> {
        Self::new(Family::LogNormal { mu_log, sigma_log })
    }
    pub fn beta(a: f64, b: f64) -> Result<Self> {
        Self::new(Family::Beta { a, b })
    }
    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        Self::new(Family::Gamma { shape, rate })
    }
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(Family::Exponential { rate })
    }
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(Family::Uniform { lo, hi })
    }
    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::new(Family::Bernoulli { p })
    }
    pub fn binomial(n: u64, p: f64) -> Result<Self> {
        Self::new(Family::Binomial { n, p })
    }
    pub fn poisson(lambda: f64) -> Result<Self> {
        Self::new(Family::Poisson { lambda })
    }
    pub fn point_mass_at(c: f64) -> Result<Self> {
        Self::new(Family::PointMass { c })
    }
    pub fn empirical(draws: Vec<f64>) -> Result<Self> {
        Self::new(Family::Empirical(Empirical::new(draws)?))
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            Family::Normal { .. } => "normal",
            Family::LogNormal { .. } => "lognormal",
            Family::Beta { .. } => "beta",
            Family::Gamma { .. } => "gamma",
            Family::Exponential { .. } => "exponential",
            Family::Uniform { .. } => "uniform",
            Family::Bernoulli { .. } => "bernoulli",
            Family::Binomial { .. } => "binomial",
            Family::Poisson { .. } => "poisson",
            Family::PointMass { .. } => "point_mass",
            Family::Empirical(_) => "empirical",
        }
    }

    /// True for families with a density. Empirical draw sets are atomic.
    pub fn is_continuous(&self) -> bool {
        matches!(
            self.family,
            Family::Normal { .. }
                | Family::LogNormal { .. }
                | Family::Beta { .. }
                | Family::Gamma { .. }
                | Family::Exponential { .. }
                | Family::Uniform { .. }
        )
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match &self.family {
            Family::Normal { mu, sigma } => normal::cdf((y - mu) / sigma),
            Family::LogNormal { mu_log, sigma_log } => {
                if y <= 0.0 {
                    0.0
                } else {
                    normal::cdf((y.ln() - mu_log) / sigma_log)
                }
            }
            Family::Beta { a, b } => {
                if y <= 0.0 {
                    0.0
                } else if y >= 1.0 {
                    1.0
                } else {
                    beta_reg(*a, *b, y)
                }
            }
            Family::Gamma { shape, rate } => {
                if y <= 0.0 {
                    0.0
                } else {
                    gamma_lr(*shape, rate * y)
                }
            }
            Family::Exponential { rate } => {
                if y <= 0.0 {
                    0.0
                } else {
                    -(-rate * y).exp_m1()
                }
            }
            Family::Uniform { lo, hi } => ((y - lo) / (hi - lo)).clamp(0.0, 1.0),
            Family::Bernoulli { p } => {
                if y < 0.0 {
                    0.0
                } else if y < 1.0 {
                    1.0 - p
                } else {
                    1.0
                }
            }
            Family::Binomial { n, p } => {
                if y < 0.0 {
                    return 0.0;
                }
                let k = y.floor();
                if k >= *n as f64 {
                    1.0
                } else if *p == 0.0 {
                    1.0
                } else if *p == 1.0 {
                    0.0
                } else {
                    let k = k as u64;
                    beta_reg((n - k) as f64, k as f64 + 1.0, 1.0 - p)
                }
            }
            Family::Poisson { lambda } => {
                if y < 0.0 {
                    0.0
                } else {
                    gamma_ur(y.floor() + 1.0, *lambda)
                }
            }
            Family::PointMass { c } => {
                if y < *c {
                    0.0
                } else {
                    1.0
                }
            }
            Family::Empirical(e) => e.cdf(y),
        }
    }

    /// Survival function `P(Y > y)`, evaluated without cancellation where a
    /// closed form exists.
    pub fn sf(&self, y: f64) -> f64 {
        match &self.family {
            Family::Normal { mu, sigma } => normal::sf((y - mu) / sigma),
            Family::LogNormal { mu_log, sigma_log } => {
                if y <= 0.0 {
                    1.0
                } else {
                    normal::sf((y.ln() - mu_log) / sigma_log)
                }
            }
            Family::Beta { a, b } => {
                if y <= 0.0 {
                    1.0
                } else if y >= 1.0 {
                    0.0
                } else {
                    beta_reg(*b, *a, 1.0 - y)
                }
            }
            Family::Gamma { shape, rate } => {
                if y <= 0.0 {
                    1.0
                } else {
                    gamma_ur(*shape, rate * y)
                }
            }
            Family::Exponential { rate } => {
                if y <= 0.0 {
                    1.0
                } else {
                    (-rate * y).exp()
                }
            }
            Family::Uniform { lo, hi } => ((hi - y) / (hi - lo)).clamp(0.0, 1.0),
            Family::Poisson { lambda } => {
                if y < 0.0 {
                    1.0
                } else {
                    gamma_lr(y.floor() + 1.0, *lambda)
                }
            }
            _ => 1.0 - self.cdf(y),
        }
    }

    /// Density for continuous families; `None` for atomic ones.
    pub fn pdf(&self, y: f64) -> Option<f64> {
        let v = match &self.family {
            Family::Normal { mu, sigma } => normal::pdf((y - mu) / sigma) / sigma,
            Family::LogNormal { mu_log, sigma_log } => {
                if y <= 0.0 {
                    0.0
                } else {
                    normal::pdf((y.ln() - mu_log) / sigma_log) / (sigma_log * y)
                }
            }
            Family::Beta { a, b } => {
                if y <= 0.0 || y >= 1.0 {
                    0.0
                } else {
                    ((a - 1.0) * y.ln() + (b - 1.0) * (-y).ln_1p() - ln_beta(*a, *b)).exp()
                }
            }
            Family::Gamma { shape, rate } => {
                if y <= 0.0 {
                    0.0
                } else {
                    (shape * rate.ln() + (shape - 1.0) * y.ln() - rate * y - ln_gamma(*shape)).exp()
                }
            }
            Family::Exponential { rate } => {
                if y < 0.0 {
                    0.0
                } else {
                    rate * (-rate * y).exp()
                }
            }
            Family::Uniform { lo, hi } => {
                if y < *lo || y > *hi {
                    0.0
                } else {
                    1.0 / (hi - lo)
                }
            }
            _ => return None,
        };
        Some(v)
    }

    /// Probability of the atom at `y`; zero for continuous families.
    pub fn point_mass(&self, y: f64) -> f64 {
        match &self.family {
            Family::Bernoulli { p } => {
                if y == 1.0 {
                    *p
                } else if y == 0.0 {
                    1.0 - p
                } else {
                    0.0
                }
            }
            Family::Binomial { n, p } => {
                if y < 0.0 || y.fract() != 0.0 || y > *n as f64 {
                    return 0.0;
                }
                let k = y as u64;
                match *p {
                    p if p == 0.0 => f64::from(k == 0),
                    p if p == 1.0 => f64::from(k == *n),
                    p => (ln_choose(*n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp(),
                }
            }
            Family::Poisson { lambda } => {
                if y < 0.0 || y.fract() != 0.0 {
                    return 0.0;
                }
                (y * lambda.ln() - lambda - ln_gamma(y + 1.0)).exp()
            }
            Family::PointMass { c } => f64::from(y == *c),
            Family::Empirical(e) => e.mass(y),
            _ => 0.0,
        }
    }

    /// Quantile function. Continuous families need `u` in (0, 1) and return
    /// the exact inverse; atomic families accept (0, 1] and return the
    /// generalized inverse `inf { y : cdf(y) >= u }`.
    pub fn inv_cdf(&self, u: f64) -> Result<f64> {
        if self.is_continuous() {
            open_unit(u)?;
        } else if !(u > 0.0 && u <= 1.0) {
            return Err(Error::Domain { value: u, domain: "(0, 1]" });
        }
        let x = match &self.family {
            Family::Normal { mu, sigma } => mu + sigma * normal::ppnd16(u),
            Family::LogNormal { mu_log, sigma_log } => (mu_log + sigma_log * normal::ppnd16(u)).exp(),
            Family::Exponential { rate } => -(-u).ln_1p() / rate,
            Family::Uniform { lo, hi } => lo + u * (hi - lo),
            Family::Beta { a, b } => {
                let guess = inv_beta_reg(*a, *b, u);
                solve::invert_cdf(|x| self.cdf(x), |x| self.pdf(x).unwrap_or(0.0), u, 0.0, 1.0, guess)
            }
            Family::Gamma { shape, rate } => {
                let guess = solve::gamma_guess(*shape, u) / rate;
                let hi = solve::expand_upper(|x| self.cdf(x) >= u, guess.max(1.0 / rate));
                solve::invert_cdf(|x| self.cdf(x), |x| self.pdf(x).unwrap_or(0.0), u, 0.0, hi, guess)
            }
            Family::Bernoulli { p } => {
                if u <= 1.0 - p {
                    0.0
                } else {
                    1.0
                }
            }
            Family::Binomial { n, .. } => solve::integer_inverse(|k| self.cdf(k as f64), u, *n),
            Family::Poisson { .. } => solve::integer_inverse(|k| self.cdf(k as f64), u, u64::MAX),
            Family::PointMass { c } => *c,
            Family::Empirical(e) => e.quantile(u),
        };
        Ok(x)
    }

    /// Upper-tail quantile: the `y` with `sf(y) = p`. Keeps full precision
    /// for small `p`, where `inv_cdf(1 - p)` would lose it.
    pub fn inv_sf(&self, p: f64) -> Result<f64> {
        if !self.is_continuous() {
            return self.inv_cdf(1.0 - p);
        }
        open_unit(p)?;
        let x = match &self.family {
            Family::Normal { mu, sigma } => mu - sigma * normal::ppnd16(p),
            Family::LogNormal { mu_log, sigma_log } => (mu_log - sigma_log * normal::ppnd16(p)).exp(),
            Family::Exponential { rate } => -p.ln() / rate,
            Family::Uniform { lo, hi } => hi - p * (hi - lo),
            Family::Beta { a, b } => {
                // Y ~ Beta(a, b)  <=>  1 - Y ~ Beta(b, a)
                let mirrored = PredictiveDistribution { family: Family::Beta { a: *b, b: *a } };
                1.0 - mirrored.inv_cdf(p)?
            }
            Family::Gamma { shape, rate } => {
                let guess = solve::gamma_guess(*shape, 1.0 - p) / rate;
                let hi = solve::expand_upper(|x| self.sf(x) <= p, guess.max(1.0 / rate));
                solve::invert_sf(|x| self.sf(x), |x| self.pdf(x).unwrap_or(0.0), p, 0.0, hi, guess)
            }
            _ => unreachable!("continuous families are handled above"),
        };
        Ok(x)
    }

    /// Mean and standard deviation on the data scale (sample sd with divisor
    /// n - 1 for empirical draw sets).
    pub fn mean_sd(&self) -> (f64, f64) {
        match &self.family {
            Family::Normal { mu, sigma } => (*mu, *sigma),
            Family::LogNormal { mu_log, sigma_log } => {
                let s2 = sigma_log * sigma_log;
                let mean = (mu_log + 0.5 * s2).exp();
                (mean, mean * s2.exp_m1().sqrt())
            }
            Family::Beta { a, b } => {
                let t = a + b;
                (a / t, (a * b / (t * t * (t + 1.0))).sqrt())
            }
            Family::Gamma { shape, rate } => (shape / rate, shape.sqrt() / rate),
            Family::Exponential { rate } => (1.0 / rate, 1.0 / rate),
            Family::Uniform { lo, hi } => (0.5 * (lo + hi), (hi - lo) / 12f64.sqrt()),
            Family::Bernoulli { p } => (*p, (p * (1.0 - p)).sqrt()),
            Family::Binomial { n, p } => {
                let n = *n as f64;
                (n * p, (n * p * (1.0 - p)).sqrt())
            }
            Family::Poisson { lambda } => (*lambda, lambda.sqrt()),
            Family::PointMass { c } => (*c, 0.0),
            Family::Empirical(e) => e.mean_sd(),
        }
    }

    /// [`mean_sd`](Self::mean_sd) for callers that divide by the sd.
    pub fn standardizing_moments(&self) -> Result<(f64, f64)> {
        let (mu, sd) = self.mean_sd();
        if sd > 0.0 && sd.is_finite() {
            Ok((mu, sd))
        } else {
            Err(Error::Degenerate(format!("{} has standard deviation {sd}", self.name())))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        samplers::sample(&self.family, rng)
    }
}
