//! Decisions and plot data from a residual set: per-unit outlier tests with
//! multiple-testing correction, a Kolmogorov-Smirnov check against N(0, 1),
//! and Q-Q / density / ECDF panel data.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{Side, TestSpec};
use crate::distributions::normal;
use crate::error::{Error, Result};
use crate::fmt::sig10;
use crate::residuals::ResidualRecord;

/// Number of KDE grid points.
pub const KDE_GRID: usize = 512;
/// Grid padding beyond the data range, in bandwidths.
pub const KDE_PAD: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Star,
    Ddag,
}

impl Which {
    pub fn pick(self, r: &ResidualRecord) -> f64 {
        match self {
            Which::Star => r.r_star,
            Which::Ddag => r.r_ddag,
        }
    }

    pub fn truncated(self, r: &ResidualRecord) -> bool {
        match self {
            Which::Star => r.r_star_truncated,
            Which::Ddag => r.r_ddag_truncated,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Which::Star => "star",
            Which::Ddag => "ddag",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Correction {
    #[default]
    None,
    Bonferroni,
    #[serde(rename = "BH")]
    Bh,
}

impl std::str::FromStr for Correction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Correction::None),
            "bonferroni" => Ok(Correction::Bonferroni),
            "bh" | "fdr" => Ok(Correction::Bh),
            _ => Err(Error::Config(format!("unknown correction `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outlier {
    pub unit_id: String,
    pub residual: f64,
    pub raw_pvalue: f64,
    pub adjusted_pvalue: f64,
    pub rejected: bool,
    pub truncated: bool,
}

/// p-value of `r` against N(0, 1) for the given side.
pub fn normal_pvalue(r: f64, side: Side) -> f64 {
    match side {
        Side::Right => normal::sf(r),
        Side::Left => normal::cdf(r),
        Side::TwoSided => (2.0 * normal::sf(r.abs())).min(1.0),
    }
}

/// Adjusted p-values in input order.
pub fn adjust_pvalues(p: &[f64], correction: Correction) -> Vec<f64> {
    let k = p.len() as f64;
    match correction {
        Correction::None => p.to_vec(),
        Correction::Bonferroni => p.iter().map(|&v| (v * k).min(1.0)).collect(),
        Correction::Bh => {
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.sort_by(|&i, &j| p[i].total_cmp(&p[j]));
            let mut adj = vec![0.0; p.len()];
            let mut running = 1.0f64;
            for (rank, &i) in order.iter().enumerate().rev() {
                running = running.min(p[i] * k / (rank + 1) as f64);
                adj[i] = running.max(p[i]);
            }
            adj
        }
    }
}

pub fn outlier_test(
    records: &[ResidualRecord],
    which: Which,
    spec: TestSpec,
    correction: Correction,
) -> Result<Vec<Outlier>> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let raw: Vec<f64> = records.iter().map(|r| normal_pvalue(which.pick(r), spec.side)).collect();
    let adj = adjust_pvalues(&raw, correction);
    Ok(records
        .iter()
        .zip(raw.iter().zip(&adj))
        .map(|(r, (&p, &a))| Outlier {
            unit_id: r.unit_id.clone(),
            residual: which.pick(r),
            raw_pvalue: p,
            adjusted_pvalue: a,
            rejected: a <= spec.alpha,
            truncated: which.truncated(r),
        })
        .collect())
}

/// Survival function of the Kolmogorov distribution, `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // Jacobi theta form converges fast for small x
        let mut s = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            s += (-m * m * std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp();
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * x * x).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

pub const KS_MIN_POINTS: usize = 8;

/// One-sample KS statistic against N(0, 1) and its asymptotic p-value.
pub fn ks_test_vs_std_normal(residuals: &[f64]) -> Result<(f64, f64)> {
    if residuals.len() < KS_MIN_POINTS {
        return Err(Error::TooFewPoints {
            needed: KS_MIN_POINTS,
            got: residuals.len(),
        });
    }
    let mut xs = residuals.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let c = normal::cdf(x);
        d = d.max((i + 1) as f64 / n - c).max(c - i as f64 / n);
    }
    Ok((d, kolmogorov_sf(n.sqrt() * d)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub theoretical: f64,
    pub sample: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityPoint {
    pub x: f64,
    pub kde: f64,
    pub normal_pdf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcdfPoint {
    pub x: f64,
    pub ecdf: f64,
    pub normal_cdf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panels {
    pub bandwidth: f64,
    pub qq: Vec<QqPoint>,
    pub density: Vec<DensityPoint>,
    pub ecdf: Vec<EcdfPoint>,
}

/// Linear-interpolation sample quantile of sorted data.
fn sorted_quantile(xs: &[f64], p: f64) -> f64 {
    let h = (xs.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(xs.len() - 1);
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Silverman's rule `0.9 · min(sd, IQR/1.34) · n^(-1/5)` for sorted data,
/// falling back to the sd, then `|x₁|`, then 1 when the spread is zero.
pub fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let (_, sd) = mean_sd(sorted);
    let iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
    let mut lo = sd.min(iqr / 1.34);
    if !(lo > 0.0) {
        lo = if sd > 0.0 {
            sd
        } else if sorted[0] != 0.0 {
            sorted[0].abs()
        } else {
            1.0
        };
    }
    0.9 * lo * (sorted.len() as f64).powf(-0.2)
}

pub fn panel_data_from(values: &[f64]) -> Result<Panels> {
    if values.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: values.len(),
        });
    }
    if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain {
            value: bad,
            domain: "finite reals",
        });
    }
    let mut xs = values.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let nf = n as f64;

    let qq = xs
        .iter()
        .enumerate()
        .map(|(i, &s)| QqPoint {
            theoretical: normal::ppnd16((i as f64 + 0.5) / nf),
            sample: s,
        })
        .collect();

    let h = silverman_bandwidth(&xs);
    let (lo, hi) = (xs[0] - KDE_PAD * h, xs[n - 1] + KDE_PAD * h);
    let step = (hi - lo) / (KDE_GRID - 1) as f64;
    let norm = 1.0 / (nf * h);
    let density = (0..KDE_GRID)
        .map(|j| {
            let x = if j == KDE_GRID - 1 { hi } else { lo + j as f64 * step };
            // only kernels within 40 bandwidths contribute at double precision
            let from = xs.partition_point(|&v| v < x - 40.0 * h);
            let to = xs.partition_point(|&v| v <= x + 40.0 * h);
            let kde = xs[from..to].iter().map(|&v| normal::pdf((x - v) / h)).sum::<f64>() * norm;
            DensityPoint {
                x,
                kde,
                normal_pdf: normal::pdf(x),
            }
        })
        .collect();

    let mut ecdf = Vec::new();
    for (i, &x) in xs.iter().enumerate() {
        if i + 1 < n && xs[i + 1] == x {
            continue;
        }
        ecdf.push(EcdfPoint {
            x,
            ecdf: (i + 1) as f64 / nf,
            normal_cdf: normal::cdf(x),
        });
    }

    Ok(Panels {
        bandwidth: h,
        qq,
        density,
        ecdf,
    })
}

pub fn panel_data(records: &[ResidualRecord], which: Which) -> Result<Panels> {
    let values: Vec<f64> = records.iter().map(|r| which.pick(r)).collect();
    panel_data_from(&values)
}

/// Trapezoid integral of the KDE column.
pub fn kde_integral(density: &[DensityPoint]) -> f64 {
    density
        .windows(2)
        .map(|w| 0.5 * (w[1].x - w[0].x) * (w[0].kde + w[1].kde))
        .sum()
}

impl Panels {
    /// Writes `qq{suffix}.csv`, `density{suffix}.csv` and `ecdf{suffix}.csv`.
    pub fn write_csvs(&self, dir: &Path, suffix: &str) -> std::io::Result<()> {
        let open = |name: &str| -> std::io::Result<BufWriter<File>> {
            Ok(BufWriter::new(File::create(dir.join(format!("{name}{suffix}.csv")))?))
        };
        let mut w = open("qq")?;
        writeln!(w, "theoretical_quantile,sample_quantile")?;
        for p in &self.qq {
            writeln!(w, "{},{}", sig10(p.theoretical), sig10(p.sample))?;
        }
        w.flush()?;
        let mut w = open("density")?;
        writeln!(w, "grid_x,kde_value,normal_pdf")?;
        for p in &self.density {
            writeln!(w, "{},{},{}", sig10(p.x), sig10(p.kde), sig10(p.normal_pdf))?;
        }
        w.flush()?;
        let mut w = open("ecdf")?;
        writeln!(w, "x,ecdf_value,normal_cdf")?;
        for p in &self.ecdf {
            writeln!(w, "{},{},{}", sig10(p.x), sig10(p.ecdf), sig10(p.normal_cdf))?;
        }
        w.flush()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub which: Which,
    pub spec: TestSpec,
    pub correction: Correction,
    pub n_units: usize,
    pub n_truncated: usize,
    pub n_rejected: usize,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
    pub outliers: Vec<Outlier>,
    pub panels: Panels,
}

/// Runs every diagnostic on one residual kind. Needs at least
/// [`KS_MIN_POINTS`] records.
pub fn diagnose(
    records: &[ResidualRecord],
    which: Which,
    spec: TestSpec,
    correction: Correction,
) -> Result<DiagnosticsReport> {
    let outliers = outlier_test(records, which, spec, correction)?;
    let values: Vec<f64> = records.iter().map(|r| which.pick(r)).collect();
    let (ks_statistic, ks_pvalue) = ks_test_vs_std_normal(&values)?;
    let panels = panel_data_from(&values)?;
    Ok(DiagnosticsReport {
        which,
        spec,
        correction,
        n_units: records.len(),
        n_truncated: records.iter().filter(|r| which.truncated(r)).count(),
        n_rejected: outliers.iter().filter(|o| o.rejected).count(),
        ks_statistic,
        ks_pvalue,
        outliers,
        panels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, r: f64) -> ResidualRecord {
        ResidualRecord {
            unit_id: id.into(),
            y: r,
            percentile: normal::cdf(r),
            r_star: r,
            r_ddag: r,
            r_star_truncated: false,
            r_ddag_truncated: false,
        }
    }

    #[test]
    fn single_record_not_rejected() {
        let out = outlier_test(&[rec("a", 0.0)], Which::Ddag, TestSpec::right(0.05).unwrap(), Correction::None).unwrap();
        assert_eq!(out[0].raw_pvalue, 0.5);
        assert!(!out[0].rejected);
        assert!(matches!(
            outlier_test(&[], Which::Ddag, TestSpec::right(0.05).unwrap(), Correction::None),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn bonferroni_threshold() {
        // residuals placed on either side of the alpha/K = 0.005 cut
        let z_in = -normal::quantile(0.0049).unwrap();
        let z_out = -normal::quantile(0.0051).unwrap();
        let mut recs: Vec<_> = (0..8).map(|i| rec(&i.to_string(), 0.0)).collect();
        recs.push(rec("in", z_in));
        recs.push(rec("out", z_out));
        let out = outlier_test(&recs, Which::Star, TestSpec::right(0.05).unwrap(), Correction::Bonferroni).unwrap();
        assert!(out[8].rejected);
        assert!(!out[9].rejected);
        for o in &out {
            assert!(o.adjusted_pvalue >= o.raw_pvalue);
        }
    }

    #[test]
    fn bh_example() {
        let adj = adjust_pvalues(&[0.01, 0.02, 0.9], Correction::Bh);
        assert!((adj[0] - 0.03).abs() < 1e-15);
        assert!((adj[1] - 0.03).abs() < 1e-15);
        assert!((adj[2] - 0.9).abs() < 1e-15);
        let rejected: Vec<bool> = adj.iter().map(|&a| a <= 0.05).collect();
        assert_eq!(rejected, vec![true, true, false]);
    }

    #[test]
    fn two_sided_pvalues() {
        assert!((normal_pvalue(-1.959963984540054, Side::TwoSided) - 0.05).abs() < 1e-15);
        assert!((normal_pvalue(1.959963984540054, Side::Left) - 0.975).abs() < 1e-15);
        assert_eq!(normal_pvalue(0.0, Side::TwoSided), 1.0);
    }

    #[test]
    fn kolmogorov_reference_values() {
        // scipy.special.kolmogorov
        assert!((kolmogorov_sf(1.0) - 0.26999967167735456).abs() < 1e-12);
        assert!((kolmogorov_sf(0.5) - 0.9639452436648751).abs() < 1e-12);
        assert!((kolmogorov_sf(1.36) - 0.049485876755377876).abs() < 1e-12);
        assert!((kolmogorov_sf(0.2) - 0.999999999999495).abs() < 1e-14);
    }

    #[test]
    fn ks_on_spaced_quantiles() {
        for n in [8usize, 10, 57, 1000] {
            let xs: Vec<f64> = (1..=n).map(|i| normal::ppnd16((i as f64 - 0.5) / n as f64)).collect();
            let (d, _) = ks_test_vs_std_normal(&xs).unwrap();
            assert!((d - 0.5 / n as f64).abs() < 1e-12, "n={n}: {d}");
        }
        assert!(matches!(
            ks_test_vs_std_normal(&[0.0; 7]),
            Err(Error::TooFewPoints { needed: 8, got: 7 })
        ));
    }

    #[test]
    fn panel_examples() {
        let p = panel_data_from(&[1.0, -1.0, 0.0]).unwrap();
        let e: Vec<(f64, f64)> = p.ecdf.iter().map(|e| (e.x, e.ecdf)).collect();
        assert_eq!(e, vec![(-1.0, 1.0 / 3.0), (0.0, 2.0 / 3.0), (1.0, 1.0)]);
        assert_eq!(p.qq.len(), 3);
        assert_eq!(p.qq[1].theoretical, 0.0);
        assert_eq!(p.density.len(), KDE_GRID);
        assert!((kde_integral(&p.density) - 1.0).abs() < 1e-3);

        let ties = panel_data_from(&[2.0, 2.0, 3.0]).unwrap();
        assert_eq!(ties.ecdf.len(), 2);
        assert!((ties.ecdf[0].ecdf - 2.0 / 3.0).abs() < 1e-15);

        let flat = panel_data_from(&[0.0, 0.0]).unwrap();
        assert!(flat.bandwidth > 0.0);
        assert!((kde_integral(&flat.density) - 1.0).abs() < 1e-3);
        assert!(panel_data_from(&[0.0]).is_err());
    }

    #[test]
    fn panels_write_three_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = panel_data_from(&[0.3, -0.1, 1.2, 2.0]).unwrap();
        p.write_csvs(dir.path(), "_ddag").unwrap();
        for name in ["qq_ddag.csv", "density_ddag.csv", "ecdf_ddag.csv"] {
            let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
            assert!(text.lines().count() > 1, "{name}");
        }
    }

    #[test]
    fn report_serializes() {
        let recs: Vec<_> = (0..10).map(|i| rec(&i.to_string(), i as f64 / 3.0 - 1.5)).collect();
        let rep = diagnose(&recs, Which::Ddag, TestSpec::two_sided(0.05).unwrap(), Correction::Bh).unwrap();
        let json = serde_json::to_value(&rep).unwrap();
        assert_eq!(json["correction"], "BH");
        assert_eq!(json["which"], "ddag");
        assert_eq!(json["n_units"], 10);
    }
}
