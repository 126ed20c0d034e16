#![allow(dead_code)]

use rand::Rng;
use residkit::distributions::PredictiveDistribution;

/// A continuous law with moderate, randomly drawn parameters.
pub fn random_continuous<R: Rng>(rng: &mut R) -> PredictiveDistribution {
    match rng.random_range(0..6) {
        0 => PredictiveDistribution::normal(rng.random_range(-3.0..3.0), rng.random_range(0.3..3.0)),
        1 => PredictiveDistribution::lognormal(rng.random_range(-1.0..1.0), rng.random_range(0.2..0.8)),
        2 => PredictiveDistribution::beta(rng.random_range(0.8..6.0), rng.random_range(0.8..6.0)),
        3 => PredictiveDistribution::gamma(rng.random_range(0.8..6.0), rng.random_range(0.5..3.0)),
        4 => PredictiveDistribution::exponential(rng.random_range(0.3..3.0)),
        _ => {
            let lo = rng.random_range(-2.0..2.0);
            PredictiveDistribution::uniform(lo, lo + rng.random_range(0.5..3.0))
        }
    }
    .unwrap()
}

/// Binomial standard error of a rate `p` estimated from `n` trials.
pub fn binom_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Adaptive Simpson integral of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(a, m, fa, flm, fm);
        let right = simpson(m, b, fm, frm, fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// [`integrate`] over `pieces` equal subintervals, so narrow features are not missed.
pub fn integrate_pieces(f: &dyn Fn(f64) -> f64, a: f64, b: f64, pieces: usize, tol: f64) -> f64 {
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| integrate(f, a + i as f64 * h, a + (i + 1) as f64 * h, tol / pieces as f64))
        .sum()
}
