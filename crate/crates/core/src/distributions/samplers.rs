use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp, Gamma, LogNormal, Poisson, StandardNormal};

use super::Family;

pub(super) fn sample<R: Rng + ?Sized>(family: &Family, rng: &mut R) -> f64 {
    // parameters were validated at construction, so the constructors below cannot fail
    match family {
        Family::Normal { mu, sigma } => {
            let z: f64 = StandardNormal.sample(rng);
            mu + sigma * z
        }
        Family::LogNormal { mu_log, sigma_log } => LogNormal::new(*mu_log, *sigma_log)
            .expect("validated")
            .sample(rng),
        Family::Beta { a, b } => sample_beta(*a, *b, rng),
        Family::Gamma { shape, rate } => ln_gamma_variate(*shape, rng).exp() / rate,
        Family::Exponential { rate } => Exp::new(*rate).expect("validated").sample(rng),
        Family::Uniform { lo, hi } => rng.random_range(*lo..*hi),
        Family::Bernoulli { p } => f64::from(rng.random_bool(*p)),
        Family::Binomial { n, p } => Binomial::new(*n, *p).expect("validated").sample(rng) as f64,
        Family::Poisson { lambda } => Poisson::new(*lambda).expect("validated").sample(rng),
        Family::PointMass { c } => *c,
        Family::Empirical(e) => e.draws()[rng.random_range(0..e.len())],
    }
}

/// Log of a unit-rate Gamma(shape) variate. For shape < 1 uses
/// `G(shape) = G(shape + 1) * U^(1/shape)` in log space, which stays finite
/// when the variate itself would underflow.
fn ln_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).expect("shape > 0").sample(rng).ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("shape > 0").sample(rng);
        let u: f64 = rng.random::<f64>();
        // random::<f64>() is in [0, 1); map 0 to the smallest positive step
        let u = if u == 0.0 { f64::EPSILON / 2.0 } else { u };
        g.ln() + u.ln() / shape
    }
}

/// Beta(a, b) draw that stays strictly inside (0, 1).
///
/// Draws whose exact value is below the smallest positive normal double, or
/// rounds to 1, are clamped to the nearest representable interior point.
pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let lx = ln_gamma_variate(a, rng);
    let ly = ln_gamma_variate(b, rng);
    // y = x / (x + y) = 1 / (1 + exp(ly - lx))
    let d = ly - lx;
    let v = if d > 0.0 {
        let e = (-d).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + d.exp())
    };
    v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}
