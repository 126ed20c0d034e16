//! Root finding for quantiles of families without closed-form inverses:
//! bracketed bisection with Newton steps on the analytic density.

const MAX_ITER: usize = 300;

/// Solves `cdf(x) = u` on `[lo, hi]` with `cdf` nondecreasing.
pub(super) fn invert_cdf(
    cdf: impl Fn(f64) -> f64,
    pdf: impl Fn(f64) -> f64,
    u: f64,
    lo: f64,
    hi: f64,
    guess: f64,
) -> f64 {
    safeguarded_newton(|x| cdf(x) - u, pdf, u.min(1.0 - u), lo, hi, guess)
}

/// Solves `sf(x) = p` on `[lo, hi]` with `sf` nonincreasing.
pub(super) fn invert_sf(
    sf: impl Fn(f64) -> f64,
    pdf: impl Fn(f64) -> f64,
    p: f64,
    lo: f64,
    hi: f64,
    guess: f64,
) -> f64 {
    safeguarded_newton(|x| p - sf(x), pdf, p.min(1.0 - p), lo, hi, guess)
}

// `h` is nondecreasing with derivative `dh`; `scale` is the magnitude of the
// target probability, used for a relative stopping rule.
fn safeguarded_newton(
    h: impl Fn(f64) -> f64,
    dh: impl Fn(f64) -> f64,
    scale: f64,
    mut lo: f64,
    mut hi: f64,
    guess: f64,
) -> f64 {
    let tol = 1e-12 * scale.min(1.0);
    let mut x = if guess.is_finite() && guess > lo && guess < hi {
        guess
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..MAX_ITER {
        let hx = h(x);
        if hx.abs() <= tol {
            return x;
        }
        if hx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return x;
        }
        let d = dh(x);
        let newton = x - hx / d;
        x = if d > 0.0 && newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if lo > 0.0 && hi / lo > 1e3 {
            // geometric bisection so tiny quantiles are reached quickly
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
    }
    x
}

/// Grows `hi` geometrically from `start` until `done(hi)` holds.
pub(super) fn expand_upper(done: impl Fn(f64) -> bool, start: f64) -> f64 {
    let mut hi = start.max(f64::MIN_POSITIVE);
    for _ in 0..2000 {
        if done(hi) {
            return hi;
        }
        hi *= 2.0;
    }
    hi
}

/// Wilson-Hilferty starting point for a unit-rate Gamma quantile.
pub(super) fn gamma_guess(shape: f64, u: f64) -> f64 {
    let z = super::normal::ppnd16(u.clamp(1e-300, 1.0 - 1e-16));
    if shape >= 1.0 {
        let c = 1.0 / (9.0 * shape);
        let t = 1.0 - c + z * c.sqrt();
        if t > 0.0 {
            return shape * t * t * t;
        }
    }
    // small-shape lower tail behaves like (u * shape * Gamma(shape))^(1/shape)
    let lg = statrs::function::gamma::ln_gamma(shape + 1.0);
    ((u.ln() + lg) / shape).exp()
}

/// Smallest integer `k <= max_k` with `cdf(k) >= u`.
pub(super) fn integer_inverse(cdf: impl Fn(u64) -> f64, u: f64, max_k: u64) -> f64 {
    if cdf(0) >= u {
        return 0.0;
    }
    let mut hi: u64 = 1;
    while hi < max_k && cdf(hi) < u {
        hi = hi.saturating_mul(2).min(max_k);
    }
    let mut lo: u64 = hi / 2;
    // invariant: cdf(lo) < u <= cdf(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if cdf(mid) >= u {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi as f64
}
