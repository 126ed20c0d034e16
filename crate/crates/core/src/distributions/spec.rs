//! JSON descriptor for predictive distributions:
//! `{"kind": "<family>", "params": {...}}`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Family, PredictiveDistribution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum DistSpec {
    Normal { mu: f64, sigma: f64 },
    #[serde(rename = "lognormal")]
    LogNormal { mu_log: f64, sigma_log: f64 },
    Beta { a: f64, b: f64 },
    Gamma { shape: f64, rate: f64 },
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Bernoulli { p: f64 },
    Binomial { n: u64, p: f64 },
    Poisson { lambda: f64 },
    PointMass { c: f64 },
    Empirical(EmpiricalSource),
}

/// Draws given inline, or as one column of a CSV file with a header row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EmpiricalSource {
    Inline { draws: Vec<f64> },
    File { file: PathBuf, column: String },
}

impl DistSpec {
    /// Builds the distribution; relative `file` references resolve against `base`.
    pub fn resolve(&self, base: Option<&Path>) -> Result<PredictiveDistribution> {
        let family = match self.clone() {
            DistSpec::Normal { mu, sigma } => Family::Normal { mu, sigma },
            DistSpec::LogNormal { mu_log, sigma_log } => Family::LogNormal { mu_log, sigma_log },
            DistSpec::Beta { a, b } => Family::Beta { a, b },
            DistSpec::Gamma { shape, rate } => Family::Gamma { shape, rate },
            DistSpec::Exponential { rate } => Family::Exponential { rate },
            DistSpec::Uniform { lo, hi } => Family::Uniform { lo, hi },
            DistSpec::Bernoulli { p } => Family::Bernoulli { p },
            DistSpec::Binomial { n, p } => Family::Binomial { n, p },
            DistSpec::Poisson { lambda } => Family::Poisson { lambda },
            DistSpec::PointMass { c } => Family::PointMass { c },
            DistSpec::Empirical(EmpiricalSource::Inline { draws }) => {
                return PredictiveDistribution::empirical(draws)
            }
            DistSpec::Empirical(EmpiricalSource::File { file, column }) => {
                let path = match base {
                    Some(b) if file.is_relative() => b.join(&file),
                    _ => file,
                };
                return PredictiveDistribution::empirical(read_column(&path, &column)?);
            }
        };
        PredictiveDistribution::new(family)
    }
}

fn read_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        .clone();
    let idx = headers
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| Error::Config(format!("{}: no column `{column}`", path.display())))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let field = rec.get(idx).unwrap_or("").trim();
        let v: f64 = field.parse().map_err(|_| {
            Error::Config(format!("{}: line {}: bad number `{field}`", path.display(), i + 2))
        })?;
        out.push(v);
    }
    Ok(out)
}

impl From<&PredictiveDistribution> for DistSpec {
    fn from(d: &PredictiveDistribution) -> Self {
        match d.family().clone() {
            Family::Normal { mu, sigma } => DistSpec::Normal { mu, sigma },
            Family::LogNormal { mu_log, sigma_log } => DistSpec::LogNormal { mu_log, sigma_log },
            Family::Beta { a, b } => DistSpec::Beta { a, b },
            Family::Gamma { shape, rate } => DistSpec::Gamma { shape, rate },
            Family::Exponential { rate } => DistSpec::Exponential { rate },
            Family::Uniform { lo, hi } => DistSpec::Uniform { lo, hi },
            Family::Bernoulli { p } => DistSpec::Bernoulli { p },
            Family::Binomial { n, p } => DistSpec::Binomial { n, p },
            Family::Poisson { lambda } => DistSpec::Poisson { lambda },
            Family::PointMass { c } => DistSpec::PointMass { c },
            Family::Empirical(e) => DistSpec::Empirical(EmpiricalSource::Inline {
                draws: e.draws().to_vec(),
            }),
        }
    }
}

impl Serialize for PredictiveDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DistSpec::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for PredictiveDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        DistSpec::deserialize(d)?
            .resolve(None)
            .map_err(serde::de::Error::custom)
    }
}
