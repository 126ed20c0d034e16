//! Analytic calibration theory for residual-based tests.
//!
//! Given a working law `D` (mean `μ₀`, sd `σ₀`) and, for power, a truth law
//! `F`, this module computes the actual Type-I error of the standard residual
//! test referred to N(0, 1), the nominal level that calibrates it, the power
//! of both residual kinds, and the exact law of the percentile residual.
//!
//! Everything here assumes continuous `D`; atomic laws are rejected and must
//! be handled by simulation. Upper-tail quantities are evaluated through
//! survival functions so small levels keep full precision.

use serde::{Deserialize, Serialize};

use crate::distributions::{normal, DistSpec, PredictiveDistribution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Right,
    Left,
    #[serde(rename = "two")]
    TwoSided,
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "right" => Ok(Side::Right),
            "left" => Ok(Side::Left),
            "two" | "two-sided" | "two_sided" => Ok(Side::TwoSided),
            other => Err(Error::Config(format!("unknown test side `{other}`"))),
        }
    }
}

/// Rejection side and nominal level. Two-sided tests split `alpha` evenly
/// between the tails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub side: Side,
    pub alpha: f64,
}

impl TestSpec {
    pub fn new(side: Side, alpha: f64) -> Result<Self> {
        let max = if side == Side::TwoSided { 0.5 } else { 1.0 };
        let ok = alpha > 0.0 && (alpha < max || (side == Side::TwoSided && alpha == max));
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, {max}{} for a {side:?} test, got {alpha}",
                if side == Side::TwoSided { "]" } else { ")" }
            )));
        }
        Ok(Self { side, alpha })
    }

    pub fn right(alpha: f64) -> Result<Self> {
        Self::new(Side::Right, alpha)
    }

    pub fn left(alpha: f64) -> Result<Self> {
        Self::new(Side::Left, alpha)
    }

    pub fn two_sided(alpha: f64) -> Result<Self> {
        Self::new(Side::TwoSided, alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Inflated,
    Exact,
    Conservative,
}

/// Relative tolerance for calling the standard-residual test exact.
pub const EXACT_TOL: f64 = 1e-9;

const ROOT_LO: f64 = 1e-12;
const ROOT_HI: f64 = 1.0 - 1e-12;
const ROOT_TOL: f64 = 1e-10;
const ROOT_MAX_ITER: usize = 200;

fn require_continuous(d: &PredictiveDistribution) -> Result<()> {
    if d.is_continuous() {
        Ok(())
    } else {
        Err(Error::NotContinuous(d.name()))
    }
}

fn moments(d: &PredictiveDistribution) -> Result<(f64, f64)> {
    let m = d.standardizing_moments()?;
    require_continuous(d)?;
    Ok(m)
}

/// `Φ⁻¹(1 - p)` via symmetry, exact for small `p`.
fn upper_z(p: f64) -> Result<f64> {
    Ok(-normal::quantile(p)?)
}

/// Probability that a law puts on the rejection region of the standard
/// residual test at `level`, where the region is expressed on the data scale
/// through `(mu, sd)`.
fn standard_rejection_prob(law: &PredictiveDistribution, mu: f64, sd: f64, side: Side, level: f64) -> Result<f64> {
    Ok(match side {
        Side::Right => law.sf(mu + sd * upper_z(level)?),
        Side::Left => {
            let t = mu - sd * upper_z(level)?;
            law.cdf(t) - law.point_mass(t)
        }
        Side::TwoSided => {
            let z = upper_z(0.5 * level)?;
            let t = mu - sd * z;
            law.sf(mu + sd * z) + law.cdf(t) - law.point_mass(t)
        }
    })
}

/// Actual false-positive rate of the standard residual referred to N(0, 1)
/// when the data really follow `d`.
pub fn type1_error_standard(d: &PredictiveDistribution, spec: TestSpec) -> Result<f64> {
    let (mu, sd) = moments(d)?;
    standard_rejection_prob(d, mu, sd, spec.side, spec.alpha)
}

/// Outcome of the two-sided calibration root search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootSolution {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Nominal two-sided level `x` at which the standard-residual test under `d`
/// has actual Type-I error `alpha`: the root of
/// `1 - D(Φ⁻¹_{μ₀,σ₀}(1 - x/2)) + D(Φ⁻¹_{μ₀,σ₀}(x/2)) - alpha`.
pub fn two_sided_calibration_root(d: &PredictiveDistribution, alpha: f64) -> Result<RootSolution> {
    let (mu, sd) = moments(d)?;
    let h = |x: f64| -> Result<f64> { Ok(standard_rejection_prob(d, mu, sd, Side::TwoSided, x)? - alpha) };
    let (mut lo, mut hi) = (ROOT_LO, ROOT_HI);
    let (f_lo, f_hi) = (h(lo)?, h(hi)?);
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::RootNotBracketed { lo, hi, f_lo, f_hi });
    }
    let mut best = RootSolution {
        value: lo,
        residual: f_lo,
        iterations: 0,
    };
    if f_hi.abs() < f_lo.abs() {
        best = RootSolution {
            value: hi,
            residual: f_hi,
            iterations: 0,
        };
    }
    for it in 1..=ROOT_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let f_mid = h(mid)?;
        if f_mid.abs() < best.residual.abs() {
            best = RootSolution {
                value: mid,
                residual: f_mid,
                iterations: it,
            };
        }
        if f_mid.abs() < ROOT_TOL {
            return Ok(best);
        }
        if f_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.residual.abs() < ROOT_TOL {
        Ok(best)
    } else {
        Err(Error::RootNotBracketed {
            lo,
            hi,
            f_lo: h(lo)?,
            f_hi: h(hi)?,
        })
    }
}

/// Whether the standard-residual test under `d` over-, under- or exactly
/// rejects at the nominal level.
///
/// One-sided tests compare the Gaussian plug-in threshold with the matching
/// quantile of `d`; two-sided tests compare the actual error with `alpha`.
pub fn classify_standard(d: &PredictiveDistribution, spec: TestSpec) -> Result<Classification> {
    let (mu, sd) = moments(d)?;
    let order = |gauss: f64, exact: f64, tol: f64| {
        if (gauss - exact).abs() <= tol {
            Classification::Exact
        } else if gauss < exact {
            Classification::Inflated
        } else {
            Classification::Conservative
        }
    };
    Ok(match spec.side {
        Side::Right => {
            let gauss = mu + sd * upper_z(spec.alpha)?;
            let exact = d.inv_sf(spec.alpha)?;
            order(gauss, exact, EXACT_TOL * sd.max(exact.abs()))
        }
        Side::Left => {
            // mirrored: a Gaussian threshold above the true lower quantile inflates
            let gauss = mu - sd * upper_z(spec.alpha)?;
            let exact = d.inv_cdf(spec.alpha)?;
            order(-gauss, -exact, EXACT_TOL * sd.max(exact.abs()))
        }
        Side::TwoSided => {
            let eff = type1_error_standard(d, spec)?;
            order(spec.alpha, eff, EXACT_TOL * spec.alpha)
        }
    })
}

/// Nominal level that gives the standard-residual test actual size `alpha`
/// under `d`. One-sided levels are closed form; two-sided levels come from
/// [`two_sided_calibration_root`].
pub fn calibrated_alpha(d: &PredictiveDistribution, spec: TestSpec) -> Result<f64> {
    let (mu, sd) = moments(d)?;
    calibrated_alpha_with_moments(d, mu, sd, spec)
}

/// Plug-in calibrated level for any law with a quantile function, including
/// empirical draw sets: `Φ_{μ₀,σ₀}` uses the given moments and `D⁻¹` is the
/// (generalized) inverse of `d`. Right and left sides only.
pub fn plugin_calibrated_alpha(d: &PredictiveDistribution, spec: TestSpec) -> Result<f64> {
    let (mu, sd) = d.standardizing_moments()?;
    if spec.side == Side::TwoSided {
        return Err(Error::InvalidParameter("plug-in calibration is one-sided only".into()));
    }
    calibrated_alpha_with_moments(d, mu, sd, spec)
}

fn calibrated_alpha_with_moments(d: &PredictiveDistribution, mu: f64, sd: f64, spec: TestSpec) -> Result<f64> {
    match spec.side {
        Side::Right => Ok(normal::sf((d.inv_sf(spec.alpha)? - mu) / sd)),
        Side::Left => Ok(normal::cdf((d.inv_cdf(spec.alpha)? - mu) / sd)),
        Side::TwoSided => Ok(two_sided_calibration_root(d, spec.alpha)?.value),
    }
}

/// Raw power of the standard residual test: probability under `f` of
/// landing in the N(0, 1) rejection region built from `d`'s moments.
pub fn power_standard(f: &PredictiveDistribution, d: &PredictiveDistribution, spec: TestSpec) -> Result<f64> {
    power_standard_at(f, d, spec.side, spec.alpha)
}

/// [`power_standard`] at an arbitrary nominal level, e.g. a calibrated one.
pub fn power_standard_at(f: &PredictiveDistribution, d: &PredictiveDistribution, side: Side, level: f64) -> Result<f64> {
    let (mu, sd) = d.standardizing_moments()?;
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::Domain { value: level, domain: "(0, 1]" });
    }
    if level == 1.0 {
        return Ok(1.0);
    }
    standard_rejection_prob(f, mu, sd, side, level)
}

/// Power of the percentile residual test, whose size under `d` is exactly
/// the nominal level.
pub fn power_percentile(f: &PredictiveDistribution, d: &PredictiveDistribution, spec: TestSpec) -> Result<f64> {
    require_continuous(d)?;
    let a = spec.alpha;
    Ok(match spec.side {
        Side::Right => f.sf(d.inv_sf(a)?),
        Side::Left => f.cdf(d.inv_cdf(a)?),
        Side::TwoSided => f.sf(d.inv_sf(0.5 * a)?) + f.cdf(d.inv_cdf(0.5 * a)?),
    })
}

/// CDF and density of the percentile residual `Φ⁻¹(D(Y))` when `Y ~ F`:
/// `G(r) = F(D⁻¹(Φ(r)))`, `g(r) = φ(r) f(x) / d(x)` at `x = D⁻¹(Φ(r))`.
pub fn rddag_law(f: &PredictiveDistribution, d: &PredictiveDistribution, r: f64) -> Result<(f64, f64)> {
    require_continuous(f)?;
    require_continuous(d)?;
    let (x, cdf) = if r <= 0.0 {
        let x = d.inv_cdf(normal::cdf(r))?;
        (x, f.cdf(x))
    } else {
        let x = d.inv_sf(normal::sf(r))?;
        (x, 1.0 - f.sf(x))
    };
    let dx = d.pdf(x).expect("continuous");
    if !(dx > 0.0) {
        return Err(Error::DensityZero(x));
    }
    let fx = f.pdf(x).expect("continuous");
    Ok((cdf, normal::pdf(r) * fx / dx))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub spec: TestSpec,
    pub f: DistSpec,
    pub d: DistSpec,
    pub mu0: f64,
    pub sigma0: f64,
    pub effective_alpha: f64,
    pub classification: Classification,
    pub calibrated_alpha: f64,
    pub pow_star_raw: f64,
    pub pow_star_calibrated: f64,
    pub pow_ddag: f64,
    /// Residual of the two-sided calibration root search.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub root_residual: Option<f64>,
    /// Raw standard-residual power and size move together: an inflated test
    /// is at least as powerful as the percentile test, a conservative one at
    /// most as powerful. Checked for one-sided tests.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size_power_consistent: Option<bool>,
    /// `|pow_star_calibrated - pow_ddag|`; zero up to rounding for one-sided tests.
    pub power_gap: f64,
}

pub fn full_report(f: &PredictiveDistribution, d: &PredictiveDistribution, spec: TestSpec) -> Result<CalibrationReport> {
    let (mu0, sigma0) = moments(d)?;
    let effective_alpha = type1_error_standard(d, spec)?;
    let classification = classify_standard(d, spec)?;
    let (calibrated, root_residual) = match spec.side {
        Side::TwoSided => {
            let root = two_sided_calibration_root(d, spec.alpha)?;
            (root.value, Some(root.residual))
        }
        _ => (calibrated_alpha(d, spec)?, None),
    };
    let pow_star_raw = power_standard(f, d, spec)?;
    let pow_star_calibrated = power_standard_at(f, d, spec.side, calibrated)?;
    let pow_ddag = power_percentile(f, d, spec)?;
    let size_power_consistent = match spec.side {
        Side::TwoSided => None,
        _ => {
            let slack = 1e-12;
            Some(match classification {
                Classification::Inflated => pow_star_raw >= pow_ddag - slack,
                Classification::Conservative => pow_star_raw <= pow_ddag + slack,
                Classification::Exact => (pow_star_raw - pow_ddag).abs() <= 1e-8,
            })
        }
    };
    Ok(CalibrationReport {
        spec,
        f: f.into(),
        d: d.into(),
        mu0,
        sigma0,
        effective_alpha,
        classification,
        calibrated_alpha: calibrated,
        pow_star_raw,
        pow_star_calibrated,
        pow_ddag,
        root_residual,
        size_power_consistent,
        power_gap: (pow_star_calibrated - pow_ddag).abs(),
    })
}
