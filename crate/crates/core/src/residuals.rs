//! Standard residuals `(y - mean) / sd` and percentile-based residuals
//! `Φ⁻¹(D(y))`, with the half-mass correction for atomic laws and truncation
//! at a configurable bound.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::distributions::{normal, PredictiveDistribution};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fmt::sig10;

pub const DEFAULT_TRUNC_BOUND: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub unit_id: String,
    pub y: f64,
    /// Argument handed to Φ⁻¹: `D(y)`, or `D(y) - mass(y) / 2` for atomic laws.
    pub percentile: f64,
    pub r_star: f64,
    pub r_ddag: f64,
    pub r_star_truncated: bool,
    pub r_ddag_truncated: bool,
}

/// Percentile location and its Gaussian quantile, before truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PercentileResidual {
    pub percentile: f64,
    pub residual: f64,
}

/// `(y - μ₀) / σ₀`, untruncated.
pub fn standard_residual(y: f64, d: &PredictiveDistribution) -> Result<f64> {
    let (mu, sd) = d.standardizing_moments()?;
    Ok((y - mu) / sd)
}

/// Untruncated percentile residual; can be infinite when `y` sits outside
/// the support.
pub fn raw_percentile_residual(y: f64, d: &PredictiveDistribution) -> PercentileResidual {
    let half_mass = if d.is_continuous() { 0.0 } else { 0.5 * d.point_mass(y) };
    let lower = d.cdf(y) - half_mass;
    let residual = if lower <= 0.0 {
        f64::NEG_INFINITY
    } else if lower <= 0.5 {
        normal::ppnd16(lower)
    } else {
        // go through the upper tail so values near 1 keep their precision
        let upper = d.sf(y) + half_mass;
        if upper <= 0.0 {
            f64::INFINITY
        } else {
            -normal::ppnd16(upper.min(0.5))
        }
    };
    PercentileResidual {
        percentile: lower.clamp(0.0, 1.0),
        residual,
    }
}

/// Clamps `r` to `[-bound, bound]`, reporting whether it was clamped.
pub fn truncate(r: f64, bound: f64) -> (f64, bool) {
    if r > bound {
        (bound, true)
    } else if r < -bound {
        (-bound, true)
    } else {
        (r, false)
    }
}

/// Percentile residual truncated to `[-trunc_bound, trunc_bound]`.
pub fn percentile_residual(y: f64, d: &PredictiveDistribution, trunc_bound: f64) -> (PercentileResidual, bool) {
    let raw = raw_percentile_residual(y, d);
    let (residual, clipped) = truncate(raw.residual, trunc_bound);
    (
        PercentileResidual {
            percentile: raw.percentile,
            residual,
        },
        clipped,
    )
}

/// Builds the full record for one unit.
///
/// A zero-variance law has no standard residual in the usual sense; the
/// record then carries 0 when `y` equals the atom and the signed bound
/// otherwise, flagged as truncated.
pub fn residual_record(
    unit_id: impl Into<String>,
    y: f64,
    d: &PredictiveDistribution,
    trunc_bound: f64,
) -> Result<ResidualRecord> {
    if !y.is_finite() {
        return Err(Error::Domain { value: y, domain: "finite reals" });
    }
    let r_star_raw = match standard_residual(y, d) {
        Ok(r) => r,
        Err(Error::Degenerate(_)) => {
            let (mu, _) = d.mean_sd();
            if y == mu {
                0.0
            } else {
                f64::INFINITY.copysign(y - mu)
            }
        }
        Err(e) => return Err(e),
    };
    let (r_star, r_star_truncated) = truncate(r_star_raw, trunc_bound);
    let (p, r_ddag_truncated) = percentile_residual(y, d, trunc_bound);
    Ok(ResidualRecord {
        unit_id: unit_id.into(),
        y,
        percentile: p.percentile,
        r_star,
        r_ddag: p.residual,
        r_star_truncated,
        r_ddag_truncated,
    })
}

/// Records for every observation that has a distribution, plus the unit id
/// and error of each observation that could not be processed.
#[derive(Debug, Clone, Default)]
pub struct BatchResiduals {
    pub records: Vec<ResidualRecord>,
    pub errors: Vec<(String, Error)>,
}

impl BatchResiduals {
    pub fn truncated_counts(&self) -> (usize, usize) {
        let star = self.records.iter().filter(|r| r.r_star_truncated).count();
        let ddag = self.records.iter().filter(|r| r.r_ddag_truncated).count();
        (star, ddag)
    }
}

pub fn batch_residuals(
    observations: &[(String, f64)],
    dists: &HashMap<String, PredictiveDistribution>,
    trunc_bound: f64,
) -> Result<BatchResiduals> {
    batch_residuals_with(Execution::default(), observations, dists, trunc_bound)
}

pub fn batch_residuals_with(
    exec: Execution,
    observations: &[(String, f64)],
    dists: &HashMap<String, PredictiveDistribution>,
    trunc_bound: f64,
) -> Result<BatchResiduals> {
    if !(trunc_bound > 0.0) {
        return Err(Error::InvalidParameter(format!("trunc_bound must be > 0, got {trunc_bound}")));
    }
    let results = exec.map_slice(observations, |(id, y)| match dists.get(id) {
        Some(d) => residual_record(id.clone(), *y, d, trunc_bound),
        None => Err(Error::MissingDistribution(id.clone())),
    });
    let mut out = BatchResiduals::default();
    for (r, (id, _)) in results.into_iter().zip(observations) {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(e) => out.errors.push((id.clone(), e)),
        }
    }
    Ok(out)
}

pub const CSV_HEADER: [&str; 7] = [
    "unit_id",
    "y",
    "percentile",
    "r_star",
    "r_ddag",
    "r_star_truncated",
    "r_ddag_truncated",
];

pub fn write_csv<W: Write>(records: &[ResidualRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.unit_id.clone(),
            sig10(r.y),
            sig10(r.percentile),
            sig10(r.r_star),
            sig10(r.r_ddag),
            r.r_star_truncated.to_string(),
            r.r_ddag_truncated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> csv::Result<Vec<ResidualRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n01() -> PredictiveDistribution {
        PredictiveDistribution::normal(0.0, 1.0).unwrap()
    }

    #[test]
    fn standard_residual_examples() {
        let g = PredictiveDistribution::gamma(3.0, 2.0).unwrap();
        assert_eq!(standard_residual(1.5, &g).unwrap(), 0.0);
        assert_eq!(standard_residual(2.0, &n01()).unwrap(), 2.0);
        let e = PredictiveDistribution::exponential(1.0).unwrap();
        assert_eq!(standard_residual(1.0, &e).unwrap(), 0.0);
        let pm = PredictiveDistribution::point_mass_at(1.0).unwrap();
        assert!(matches!(standard_residual(1.0, &pm), Err(Error::Degenerate(_))));
    }

    #[test]
    fn point_mass_residual_is_zero() {
        let pm = PredictiveDistribution::point_mass_at(2.5).unwrap();
        let (p, clipped) = percentile_residual(2.5, &pm, 5.0);
        assert_eq!((p.percentile, p.residual, clipped), (0.5, 0.0, false));
        let rec = residual_record("u", 2.5, &pm, 5.0).unwrap();
        assert_eq!((rec.r_star, rec.r_ddag), (0.0, 0.0));
        let off = residual_record("u", 3.0, &pm, 5.0).unwrap();
        assert_eq!((off.r_star, off.r_star_truncated), (5.0, true));
    }

    #[test]
    fn bernoulli_half_correction() {
        let b = PredictiveDistribution::bernoulli(0.5).unwrap();
        let one = raw_percentile_residual(1.0, &b);
        let zero = raw_percentile_residual(0.0, &b);
        assert_eq!(one.percentile, 0.75);
        assert!((one.residual - 0.674_489_750_196_081_7).abs() < 1e-12);
        assert_eq!(one.residual, -zero.residual);
    }

    #[test]
    fn empirical_half_ties() {
        let e = PredictiveDistribution::empirical((1..=100).map(f64::from).collect()).unwrap();
        let r = raw_percentile_residual(50.0, &e);
        // exhaustive count: 49 draws strictly below, one tie
        let below = (1..=100).filter(|&v| v < 50).count() as f64;
        assert_eq!(r.percentile, (below + 0.5) / 100.0);
        assert!((r.residual - -0.012_533_469_508_069_263).abs() < 1e-12);
    }

    #[test]
    fn out_of_support_truncates() {
        let g = PredictiveDistribution::gamma(2.0, 1.0).unwrap();
        let rec = residual_record("u", -1.0, &g, 5.0).unwrap();
        assert_eq!(rec.percentile, 0.0);
        assert_eq!((rec.r_ddag, rec.r_ddag_truncated), (-5.0, true));
        let b = PredictiveDistribution::beta(2.0, 2.0).unwrap();
        let rec = residual_record("u", 1.5, &b, 8.0).unwrap();
        assert_eq!((rec.r_ddag, rec.r_ddag_truncated), (8.0, true));
        assert!(residual_record("u", f64::NAN, &b, 5.0).is_err());
    }

    #[test]
    fn batch_examples() {
        let dists: HashMap<String, PredictiveDistribution> =
            ["a", "b", "c"].iter().map(|k| (k.to_string(), n01())).collect();
        let empty = batch_residuals(&[], &dists, 5.0).unwrap();
        assert!(empty.records.is_empty() && empty.errors.is_empty());

        let obs = vec![("a".to_string(), 0.0), ("b".to_string(), 1.96), ("c".to_string(), -1.96)];
        let out = batch_residuals(&obs, &dists, 5.0).unwrap();
        let r: Vec<f64> = out.records.iter().map(|r| r.r_ddag).collect();
        for (got, want) in r.iter().zip([0.0, 1.96, -1.96]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(out.records[1].unit_id, "b");

        let obs = vec![("a".to_string(), 0.3), ("zzz".to_string(), 1.0)];
        let out = batch_residuals(&obs, &dists, 5.0).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.errors, vec![("zzz".to_string(), Error::MissingDistribution("zzz".into()))]);

        assert!(batch_residuals(&obs, &dists, 0.0).is_err());
    }

    #[test]
    fn sequential_and_default_agree() {
        let dists: HashMap<String, PredictiveDistribution> = (0..200)
            .map(|i| (i.to_string(), PredictiveDistribution::gamma(1.0 + i as f64 / 50.0, 2.0).unwrap()))
            .collect();
        let obs: Vec<(String, f64)> = (0..200).map(|i| (i.to_string(), i as f64 / 100.0)).collect();
        let a = batch_residuals_with(Execution::Sequential, &obs, &dists, 5.0).unwrap();
        let b = batch_residuals(&obs, &dists, 5.0).unwrap();
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn csv_round_trip() {
        let g = PredictiveDistribution::beta(2.0, 5.0).unwrap();
        let recs: Vec<ResidualRecord> = [0.1, 0.5, 0.999_999_9]
            .iter()
            .enumerate()
            .map(|(i, &y)| residual_record(format!("k{i}"), y, &g, 5.0).unwrap())
            .collect();
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("unit_id,y,percentile,r_star,r_ddag,r_star_truncated,r_ddag_truncated\n"));
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        assert!((back[1].r_ddag - recs[1].r_ddag).abs() < 1e-9);
        assert_eq!(back[2].r_ddag_truncated, recs[2].r_ddag_truncated);
    }
}
