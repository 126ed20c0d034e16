mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use common::binom_se;
use residkit::calibration::{type1_error_standard, TestSpec};
use residkit::diagnostics::{ks_test_vs_std_normal, outlier_test, panel_data_from, Correction, Which};
use residkit::distributions::PredictiveDistribution;
use residkit::residuals::{residual_record, ResidualRecord};

fn normals(n: usize, shift: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            shift + z
        })
        .collect()
}

fn records_under_truth(d: &PredictiveDistribution, n: usize, seed: u64) -> Vec<ResidualRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| residual_record(i.to_string(), d.sample(&mut rng), d, 5.0).unwrap())
        .collect()
}

#[test]
fn ks_simulation_examples() {
    let (_, p) = ks_test_vs_std_normal(&normals(1000, 0.0, 1)).unwrap();
    assert!(p > 0.01, "{p}");
    let (_, p) = ks_test_vs_std_normal(&normals(1000, 0.5, 2)).unwrap();
    assert!(p < 1e-6, "{p}");
}

#[test]
fn qq_slope_near_one() {
    let p = panel_data_from(&normals(10_000, 0.0, 3)).unwrap();
    let n = p.qq.len() as f64;
    let (mx, my) = p.qq.iter().fold((0.0, 0.0), |(a, b), q| (a + q.theoretical / n, b + q.sample / n));
    let (sxy, sxx) = p.qq.iter().fold((0.0, 0.0), |(a, b), q| {
        (a + (q.theoretical - mx) * (q.sample - my), b + (q.theoretical - mx).powi(2))
    });
    let slope = sxy / sxx;
    assert!((0.98..=1.02).contains(&slope), "{slope}");
}

#[test]
fn percentile_test_is_exact_under_truth() {
    let d = PredictiveDistribution::gamma(2.0, 1.0).unwrap();
    let recs = records_under_truth(&d, 100_000, 4);
    let spec = TestSpec::right(0.05).unwrap();
    let out = outlier_test(&recs, Which::Ddag, spec, Correction::None).unwrap();
    let frac = out.iter().filter(|o| o.rejected).count() as f64 / out.len() as f64;
    assert!((frac - 0.05).abs() < 0.01, "{frac}");
}

#[test]
fn standard_test_inflates_by_analytic_excess() {
    let d = PredictiveDistribution::exponential(1.0).unwrap();
    let recs = records_under_truth(&d, 100_000, 5);
    let spec = TestSpec::right(0.05).unwrap();
    let out = outlier_test(&recs, Which::Star, spec, Correction::None).unwrap();
    let frac = out.iter().filter(|o| o.rejected).count() as f64 / out.len() as f64;
    let expected = type1_error_standard(&d, spec).unwrap();
    assert!(frac > 0.05);
    assert!((frac - expected).abs() < 3.0 * binom_se(expected, out.len()), "{frac} vs {expected}");
}

#[test]
fn corrections_control_familywise_rejections() {
    let d = PredictiveDistribution::normal(0.0, 1.0).unwrap();
    let recs = records_under_truth(&d, 2000, 6);
    let spec = TestSpec::two_sided(0.05).unwrap();
    let none = outlier_test(&recs, Which::Ddag, spec, Correction::None).unwrap();
    let bonf = outlier_test(&recs, Which::Ddag, spec, Correction::Bonferroni).unwrap();
    let bh = outlier_test(&recs, Which::Ddag, spec, Correction::Bh).unwrap();
    let count = |v: &[residkit::diagnostics::Outlier]| v.iter().filter(|o| o.rejected).count();
    assert!(count(&none) > 50);
    assert!(count(&bonf) <= count(&bh));
    assert!(count(&bh) <= 2);
}
