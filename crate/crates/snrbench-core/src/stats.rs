//! Two-sample significance testing over per-recording scores.
//!
//! The Student-t survival function is computed from first principles via
//! the regularized incomplete beta function (Lentz continued fraction with
//! the symmetry switch at x = (a+1)/(a+b+2), 1e-12 convergence epsilon,
//! 300-iteration cap). A level counts as significant when the t statistic
//! is negative and the two-sided p-value is below alpha; contiguous
//! significant grid levels are reported as [lo, hi] dB ranges.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::SnrGrid;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("samples disagree on metric: {0:?} vs {1:?}")]
    MetricMismatch(Metric, Metric),
    #[error("samples disagree on SNR level: {0} vs {1}")]
    SnrMismatch(f64, f64),
    #[error("paired test requires equal lengths, got {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 values per sample, got {0}")]
    TooFewSamples(usize),
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("incomplete beta continued fraction did not converge within 300 iterations (a={a}, b={b}, x={x})")]
    ConvergenceFailure { a: f64, b: f64, x: f64 },
}

/// Which score a sample holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Precision,
    Recall,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Precision, Metric::Recall, Metric::F1];

    pub fn label(&self) -> &'static str {
        match self {
            Metric::Precision => "Precision",
            Metric::Recall => "Recall",
            Metric::F1 => "F1 Score",
        }
    }

    pub fn of(&self, result: &crate::eval::EvalResult) -> f64 {
        match self {
            Metric::Precision => result.precision,
            Metric::Recall => result.recall,
            Metric::F1 => result.f1,
        }
    }
}

/// Per-recording scores for one (system, SNR, metric) cell, ordered by
/// recording id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreSample {
    pub system_id: String,
    pub snr_db: f64,
    pub metric: Metric,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TTestKind {
    Paired,
    Welch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
    pub kind: TTestKind,
}

/// Maximal run of consecutive significant grid levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRange {
    pub metric: Metric,
    pub lo_db: f64,
    pub hi_db: f64,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance (n-1 denominator).
fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Two-sample t-test with the baseline-minus-variant sign convention:
/// t < 0 means the variant mean exceeds the baseline mean. p is two-sided.
pub fn t_test(
    baseline: &ScoreSample,
    variant: &ScoreSample,
    kind: TTestKind,
) -> Result<TTestResult, StatsError> {
    if baseline.metric != variant.metric {
        return Err(StatsError::MetricMismatch(baseline.metric, variant.metric));
    }
    if (baseline.snr_db - variant.snr_db).abs() > 1e-9 {
        return Err(StatsError::SnrMismatch(baseline.snr_db, variant.snr_db));
    }
    let n1 = baseline.values.len();
    let n2 = variant.values.len();
    if n1 < 2 {
        return Err(StatsError::TooFewSamples(n1));
    }
    if n2 < 2 {
        return Err(StatsError::TooFewSamples(n2));
    }
    for sample in [baseline, variant] {
        if let Some(bad) = sample.values.iter().find(|v| !v.is_finite()) {
            return Err(StatsError::DegenerateSample(format!(
                "non-finite value {bad} in {}",
                sample.system_id
            )));
        }
    }

    let (t, df) = match kind {
        TTestKind::Paired => {
            if n1 != n2 {
                return Err(StatsError::LengthMismatch(n1, n2));
            }
            let diffs: Vec<f64> = baseline
                .values
                .iter()
                .zip(&variant.values)
                .map(|(&b, &v)| b - v)
                .collect();
            let var = sample_variance(&diffs);
            if var <= 0.0 {
                return Err(StatsError::DegenerateSample(
                    "variance of paired differences is zero".into(),
                ));
            }
            let n = n1 as f64;
            (mean(&diffs) / (var / n).sqrt(), n - 1.0)
        }
        TTestKind::Welch => {
            let (v1, v2) = (
                sample_variance(&baseline.values),
                sample_variance(&variant.values),
            );
            let (n1f, n2f) = (n1 as f64, n2 as f64);
            let se2 = v1 / n1f + v2 / n2f;
            if se2 <= 0.0 {
                return Err(StatsError::DegenerateSample(
                    "both sample variances are zero".into(),
                ));
            }
            let t = (mean(&baseline.values) - mean(&variant.values)) / se2.sqrt();
            let df =
                se2 * se2 / ((v1 / n1f).powi(2) / (n1f - 1.0) + (v2 / n2f).powi(2) / (n2f - 1.0));
            (t, df)
        }
    };

    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: two_sided_p(t, df),
        kind,
    })
}

/// P(T > t) for Student's t with `df` degrees of freedom.
///
/// Uses I_x(df/2, 1/2) with x = df/(df + t^2); absolute accuracy is
/// comfortably inside 1e-10 for df up to 1e4.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    assert!(df > 0.0, "degrees of freedom must be positive, got {df}");
    assert!(t.is_finite(), "t must be finite");
    if t == 0.0 {
        return 0.5;
    }
    if t < 0.0 {
        return 1.0 - student_t_sf(-t, df);
    }
    let x = df / (df + t * t);
    0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x)
        .expect("t-distribution beta arguments converge within the iteration cap")
}

/// Two-sided p-value, 2 * P(T > |t|).
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    (2.0 * student_t_sf(t.abs(), df)).min(1.0)
}

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction,
/// switching to 1 - I_{1-x}(b, a) when x is past (a+1)/(a+b+2).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64, StatsError> {
    assert!(a > 0.0 && b > 0.0, "beta parameters must be positive");
    assert!((0.0..=1.0).contains(&x), "x must lie in [0, 1], got {x}");
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let front =
        (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_continued_fraction(a, b, x)? / a)
    } else {
        Ok(1.0 - front * beta_continued_fraction(b, a, 1.0 - x)? / b)
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> Result<f64, StatsError> {
    const EPS: f64 = 1e-12;
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;

    for m in 1..=MAX_ITER {
        let mf = m as f64;
        let m2 = 2.0 * mf;

        let numerator = mf * (b - mf) * x / ((qam + m2) * (a + m2));
        d = 1.0 + numerator * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + numerator / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let numerator = -(a + mf) * (qab + mf) * x / ((a + m2) * (qap + m2));
        d = 1.0 + numerator * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + numerator / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;

        if (delta - 1.0).abs() < EPS {
            return Ok(h);
        }
    }
    Err(StatsError::ConvergenceFailure { a, b, x })
}

/// Natural log of the gamma function (Lanczos, g = 7, 9 terms).
#[allow(clippy::excessive_precision)] // published coefficients, kept verbatim
pub fn ln_gamma(z: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if z < 0.5 {
        // Reflection for the left half-plane.
        std::f64::consts::PI.ln() - (std::f64::consts::PI * z).sin().ln() - ln_gamma(1.0 - z)
    } else {
        let z = z - 1.0;
        let mut x = 0.999_999_999_999_809_93;
        for (i, &c) in COEFFS.iter().enumerate() {
            x += c / (z + (i + 1) as f64);
        }
        let t = z + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
    }
}

/// Extract maximal runs of consecutive significant grid levels.
///
/// A level is significant iff its test has t < 0 and p < alpha. `tests`
/// pairs grid levels with results; levels without a test entry are treated
/// as not significant.
pub fn significant_ranges(
    metric: Metric,
    tests: &[(f64, TTestResult)],
    alpha: f64,
    grid: &SnrGrid,
) -> Vec<SignificanceRange> {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    let significant = |level: f64| {
        tests
            .iter()
            .find(|(snr, _)| (snr - level).abs() < 1e-9)
            .map(|(_, r)| r.t_statistic < 0.0 && r.p_value < alpha)
            .unwrap_or(false)
    };

    let mut ranges = Vec::new();
    let mut run_start: Option<f64> = None;
    let mut run_end = 0.0;
    for level in grid.levels() {
        if significant(level) {
            if run_start.is_none() {
                run_start = Some(level);
            }
            run_end = level;
        } else if let Some(lo) = run_start.take() {
            ranges.push(SignificanceRange {
                metric,
                lo_db: lo,
                hi_db: run_end,
            });
        }
    }
    if let Some(lo) = run_start {
        ranges.push(SignificanceRange {
            metric,
            lo_db: lo,
            hi_db: run_end,
        });
    }
    ranges
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn sample(values: Vec<f64>) -> ScoreSample {
        ScoreSample {
            system_id: "sys".into(),
            snr_db: 0.0,
            metric: Metric::F1,
            values,
        }
    }

    fn uniform(rng: &mut ChaCha8Rng) -> f64 {
        (rng.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    #[test]
    fn sf_at_zero_is_half() {
        for df in [1.0, 2.0, 17.0, 176.0] {
            assert_eq!(student_t_sf(0.0, df), 0.5);
            assert_eq!(two_sided_p(0.0, df), 1.0);
        }
    }

    #[test]
    fn df_one_matches_cauchy_closed_form() {
        for t in [-4.0f64, -1.0, 0.5, 1.0, 2.0, 7.5] {
            let exact = 0.5 - t.atan() / std::f64::consts::PI;
            assert!(
                (student_t_sf(t, 1.0) - exact).abs() < 1e-12,
                "t={t}: {} vs {exact}",
                student_t_sf(t, 1.0)
            );
        }
        assert!((student_t_sf(1.0, 1.0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn sf_symmetry_holds() {
        for df in [1.0, 2.0, 5.0, 30.0, 176.0] {
            for t in [-6.0, -2.5, -0.3, 0.0, 0.7, 3.0, 8.0] {
                let s = student_t_sf(t, df) + student_t_sf(-t, df);
                assert!((s - 1.0).abs() < 1e-12, "df={df} t={t}: {s}");
            }
        }
    }

    #[test]
    fn p_is_monotone_in_abs_t() {
        for df in [1.0, 5.0, 176.0] {
            let mut last = 1.0 + 1e-12;
            for i in 0..200 {
                let t = i as f64 * 0.05;
                let p = two_sided_p(t, df);
                assert!(p <= last, "df={df} t={t}");
                last = p;
            }
        }
    }

    #[test]
    fn large_df_approaches_normal_tail() {
        let p = student_t_sf(1.96, 1e5);
        assert!((p - 0.025).abs() < 2e-4, "{p}");
    }

    #[test]
    fn ln_gamma_spot_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(2.0)).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        // Gamma(1/2) = sqrt(pi)
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-12);
    }

    #[test]
    fn paired_test_detects_planted_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let baseline: Vec<f64> = (0..20).map(|_| 0.5 + 0.01 * uniform(&mut rng)).collect();
        let variant: Vec<f64> = baseline
            .iter()
            .map(|&b| b + 0.1)
            .enumerate()
            .map(|(i, v)| v + 1e-4 * ((i % 7) as f64 - 3.0))
            .collect();
        let b = sample(baseline);
        let v = sample(variant);
        let r = t_test(&b, &v, TTestKind::Paired).unwrap();
        assert!(r.t_statistic < 0.0);
        assert!(r.p_value < 1e-10);
        assert_eq!(r.degrees_of_freedom, 19.0);
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let b = sample(vec![0.5, 0.6, 0.7]);
        assert!(matches!(
            t_test(&b, &b.clone(), TTestKind::Paired),
            Err(StatsError::DegenerateSample(_))
        ));
        let c = sample(vec![0.5, 0.5, 0.5]);
        assert!(matches!(
            t_test(&c, &c.clone(), TTestKind::Welch),
            Err(StatsError::DegenerateSample(_))
        ));
    }

    #[test]
    fn shrinking_jitter_drives_t_to_minus_infinity() {
        // d = -0.1 everywhere except one element at -0.1 + eps.
        let baseline = vec![0.5; 8];
        let mut last_t = 0.0;
        for eps in [1e-2, 1e-4, 1e-6] {
            let mut variant = vec![0.6; 8];
            variant[3] -= eps;
            let r = t_test(
                &sample(baseline.clone()),
                &sample(variant),
                TTestKind::Paired,
            )
            .unwrap();
            assert!(r.t_statistic < last_t);
            last_t = r.t_statistic;
        }
        assert!(last_t < -1e5);
        assert!(two_sided_p(last_t, 7.0) < 1e-20);
    }

    #[test]
    fn paired_length_mismatch_is_an_error() {
        let b = sample(vec![0.1, 0.2, 0.3]);
        let v = sample(vec![0.1, 0.2]);
        assert!(matches!(
            t_test(&b, &v, TTestKind::Paired),
            Err(StatsError::LengthMismatch(3, 2))
        ));
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let b = sample(vec![0.1, f64::NAN, 0.3]);
        let v = sample(vec![0.1, 0.2, 0.3]);
        assert!(matches!(
            t_test(&b, &v, TTestKind::Paired),
            Err(StatsError::DegenerateSample(_))
        ));
    }

    #[test]
    fn swapping_samples_negates_t_and_preserves_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for kind in [TTestKind::Paired, TTestKind::Welch] {
            let a: Vec<f64> = (0..12).map(|_| uniform(&mut rng)).collect();
            let b: Vec<f64> = (0..12).map(|_| uniform(&mut rng)).collect();
            let fwd = t_test(&sample(a.clone()), &sample(b.clone()), kind).unwrap();
            let rev = t_test(&sample(b), &sample(a), kind).unwrap();
            assert!((fwd.t_statistic + rev.t_statistic).abs() < 1e-12);
            assert!((fwd.p_value - rev.p_value).abs() < 1e-12);
            assert!((fwd.degrees_of_freedom - rev.degrees_of_freedom).abs() < 1e-9);
        }
    }

    fn result(t: f64, p: f64) -> TTestResult {
        TTestResult {
            t_statistic: t,
            degrees_of_freedom: 19.0,
            p_value: p,
            kind: TTestKind::Paired,
        }
    }

    #[test]
    fn contiguous_levels_merge_into_one_range() {
        let grid = SnrGrid::sweep_default();
        let tests: Vec<(f64, TTestResult)> = grid
            .levels()
            .into_iter()
            .map(|snr| {
                if snr <= 12.0 {
                    (snr, result(-3.0, 0.001))
                } else {
                    (snr, result(1.0, 0.5))
                }
            })
            .collect();
        let ranges = significant_ranges(Metric::F1, &tests, 0.05, &grid);
        assert_eq!(ranges.len(), 1);
        assert_eq!((ranges[0].lo_db, ranges[0].hi_db), (-6.0, 12.0));
    }

    #[test]
    fn no_significance_yields_empty_list() {
        let grid = SnrGrid::sweep_default();
        let tests: Vec<(f64, TTestResult)> = grid
            .levels()
            .into_iter()
            .map(|snr| (snr, result(1.0, 0.5)))
            .collect();
        assert!(significant_ranges(Metric::F1, &tests, 0.05, &grid).is_empty());
    }

    #[test]
    fn gaps_split_runs() {
        let grid = SnrGrid::sweep_default();
        let tests: Vec<(f64, TTestResult)> = grid
            .levels()
            .into_iter()
            .map(|snr| {
                if snr == -6.0 || snr == 0.0 {
                    (snr, result(-2.5, 0.01))
                } else {
                    (snr, result(-0.1, 0.9))
                }
            })
            .collect();
        let ranges = significant_ranges(Metric::F1, &tests, 0.05, &grid);
        let bounds: Vec<(f64, f64)> = ranges.iter().map(|r| (r.lo_db, r.hi_db)).collect();
        assert_eq!(bounds, vec![(-6.0, -6.0), (0.0, 0.0)]);
    }

    #[test]
    fn negative_t_is_required_not_just_small_p() {
        let grid = SnrGrid::new(0.0, 3.0, 3.0).unwrap();
        let tests = vec![(0.0, result(2.5, 0.001)), (3.0, result(-2.5, 0.001))];
        let ranges = significant_ranges(Metric::F1, &tests, 0.05, &grid);
        assert_eq!(ranges.len(), 1);
        assert_eq!((ranges[0].lo_db, ranges[0].hi_db), (3.0, 3.0));
    }

    #[test]
    fn per_metric_cutoffs_produce_a_full_table_row() {
        // One table row with the three metrics significant over different
        // spans: precision up to 30 dB, recall up to 9 dB, F1 up to 12 dB.
        let grid = SnrGrid::sweep_default();
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        let baseline: Vec<f64> = (0..20).map(|_| 0.4 + 0.2 * uniform(&mut rng)).collect();
        let mut row = Vec::new();
        for (metric, cutoff) in [
            (Metric::Precision, 30.0),
            (Metric::Recall, 9.0),
            (Metric::F1, 12.0),
        ] {
            let tests: Vec<(f64, TTestResult)> = grid
                .levels()
                .into_iter()
                .map(|snr| {
                    let shift = if snr <= cutoff { 0.1 } else { -0.05 };
                    let variant: Vec<f64> = baseline
                        .iter()
                        .map(|b| b + shift + 0.004 * (uniform(&mut rng) - 0.5))
                        .collect();
                    let mk = |values: Vec<f64>| ScoreSample {
                        system_id: "s".into(),
                        snr_db: snr,
                        metric,
                        values,
                    };
                    let r = t_test(&mk(baseline.clone()), &mk(variant), TTestKind::Paired).unwrap();
                    (snr, r)
                })
                .collect();
            row.extend(significant_ranges(metric, &tests, 0.05, &grid));
        }
        let bounds: Vec<(Metric, f64, f64)> =
            row.iter().map(|r| (r.metric, r.lo_db, r.hi_db)).collect();
        assert_eq!(
            bounds,
            vec![
                (Metric::Precision, -6.0, 30.0),
                (Metric::Recall, -6.0, 9.0),
                (Metric::F1, -6.0, 12.0),
            ]
        );
    }
}
