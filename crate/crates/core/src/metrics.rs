//! Component-wise errors, boxplot summaries over repetitions and the
//! parametric-versus-Plasmode crossover.

use crate::engine::{MseEstimate, TrueMse};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Errors of one estimated MSE vector against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorReport {
    /// Estimated minus true MSE.
    pub absolute: Vec<f64>,
    /// Absolute error divided by the true MSE.
    pub relative: Vec<f64>,
    /// Mean of `|relative|`.
    pub run_aggregate: f64,
    /// Mean of `relative`.
    pub signed_run_aggregate: f64,
}

/// Absolute and relative errors per coefficient.
///
/// A zero true MSE gives a relative error of 0 when the estimate is also 0 and
/// [`Error::RelativeUndefined`] otherwise.
pub fn component_errors(estimate: &MseEstimate, truth: &TrueMse) -> Result<ErrorReport> {
    let (est, tru) = (&estimate.per_coefficient, &truth.per_coefficient);
    if est.len() != tru.len() || est.is_empty() {
        return Err(Error::dims(format!("estimate has {} entries, truth has {}", est.len(), tru.len())));
    }
    let absolute: Vec<f64> = est.iter().zip(tru).map(|(e, t)| e - t).collect();
    let mut relative = Vec::with_capacity(est.len());
    for (j, (&a, &t)) in absolute.iter().zip(tru).enumerate() {
        relative.push(if t != 0.0 {
            a / t
        } else if a == 0.0 {
            0.0
        } else {
            return Err(Error::RelativeUndefined(j));
        });
    }
    let k = relative.len() as f64;
    Ok(ErrorReport {
        run_aggregate: relative.iter().map(|r| r.abs()).sum::<f64>() / k,
        signed_run_aggregate: relative.iter().sum::<f64>() / k,
        absolute,
        relative,
    })
}

/// Boxplot statistics. Quartiles interpolate linearly between order
/// statistics; whiskers reach the most extreme values within 1.5 IQR of the
/// quartiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RepetitionSummary {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    pub outliers: Vec<f64>,
}

/// Quantile of sorted data by linear interpolation (`h = (n - 1) q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize_repetitions(values: &[f64]) -> Result<RepetitionSummary> {
    if values.is_empty() {
        return Err(Error::Empty("no values to summarize".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("cannot summarize NaN values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || sorted.iter().copied().filter(|v| (lo_fence..=hi_fence).contains(v));
    Ok(RepetitionSummary {
        count: sorted.len(),
        min: sorted[0],
        q1,
        median: quantile_sorted(&sorted, 0.5),
        q3,
        max: sorted[sorted.len() - 1],
        lower_whisker: inside().next().unwrap_or(q1),
        upper_whisker: inside().next_back().unwrap_or(q3),
        outliers: sorted.iter().copied().filter(|v| *v < lo_fence || *v > hi_fence).collect(),
    })
}

/// Direction in which deviation magnitudes grow along an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AxisOrder {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CrossoverResult {
    /// Deviation values in order of growing magnitude.
    pub deviation_axis: Vec<f64>,
    /// Per Plasmode variant, the first axis value at which the parametric
    /// median exceeds the variant's median.
    pub first_worse: Vec<(String, Option<f64>)>,
}

/// `parametric` holds (deviation value, summary) pairs in any order; they are
/// sorted by `order` before the scan. `baselines` holds the true-model
/// summaries of the Plasmode variants.
pub fn crossover(
    parametric: &[(f64, RepetitionSummary)],
    order: AxisOrder,
    baselines: &[(String, RepetitionSummary)],
) -> Result<CrossoverResult> {
    if parametric.is_empty() {
        return Err(Error::Empty("crossover axis has no deviations".into()));
    }
    let mut axis: Vec<&(f64, RepetitionSummary)> = parametric.iter().collect();
    axis.sort_by(|a, b| match order {
        AxisOrder::Increasing => a.0.total_cmp(&b.0),
        AxisOrder::Decreasing => b.0.total_cmp(&a.0),
    });
    let first_worse = baselines
        .iter()
        .map(|(name, base)| {
            let hit = axis.iter().find(|(_, s)| s.median > base.median).map(|(v, _)| *v);
            (name.clone(), hit)
        })
        .collect();
    Ok(CrossoverResult { deviation_axis: axis.iter().map(|(v, _)| *v).collect(), first_worse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn estimate(v: &[f64]) -> MseEstimate {
        MseEstimate { per_coefficient: v.to_vec(), successful_iterations: 1, rank_deficient_skipped: 0 }
    }

    fn truth(v: &[f64]) -> TrueMse {
        TrueMse {
            per_coefficient: v.to_vec(),
            standard_errors: vec![0.0; v.len()],
            replications: 1000,
            rank_deficient_skipped: 0,
        }
    }

    fn summary_with_median(m: f64) -> RepetitionSummary {
        summarize_repetitions(&[m]).unwrap()
    }

    #[test]
    fn estimate_equal_to_truth() {
        let r = component_errors(&estimate(&[0.1, 0.2]), &truth(&[0.1, 0.2])).unwrap();
        assert_eq!(r.absolute, vec![0.0, 0.0]);
        assert_eq!(r.relative, vec![0.0, 0.0]);
        assert_eq!(r.run_aggregate, 0.0);
    }

    #[test]
    fn aggregates_of_relative_errors() {
        let r = component_errors(&estimate(&[1.1, 0.7, 1.2]), &truth(&[1.0, 1.0, 1.0])).unwrap();
        assert!((r.run_aggregate - 0.2).abs() < 1e-12);
        assert!(r.signed_run_aggregate.abs() < 1e-12);
    }

    #[test]
    fn relative_undefined_for_zero_truth() {
        assert_eq!(component_errors(&estimate(&[0.1, 0.2]), &truth(&[0.1, 0.0])), Err(Error::RelativeUndefined(1)));
        let ok = component_errors(&estimate(&[0.1, 0.0]), &truth(&[0.1, 0.0])).unwrap();
        assert_eq!(ok.relative, vec![0.0, 0.0]);
        assert!(component_errors(&estimate(&[0.1]), &truth(&[0.1, 0.0])).is_err());
    }

    #[test]
    fn scaled_pair_has_identical_relative_errors() {
        let a = component_errors(&estimate(&[0.011, 0.0095]), &truth(&[0.01, 0.01])).unwrap();
        let b = component_errors(&estimate(&[1.1, 0.95]), &truth(&[1.0, 1.0])).unwrap();
        for (x, y) in a.relative.iter().zip(&b.relative) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_vector_summary() {
        let s = summarize_repetitions(&[2.5; 7]).unwrap();
        for v in [s.min, s.q1, s.median, s.q3, s.max, s.lower_whisker, s.upper_whisker] {
            assert_eq!(v, 2.5);
        }
        assert!(s.outliers.is_empty());
    }

    #[test]
    fn iqr_rule_flags_outlier() {
        let s = summarize_repetitions(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (2.0, 3.0, 4.0));
        assert_eq!(s.outliers, vec![100.0]);
        assert_eq!(s.upper_whisker, 4.0);
        assert_eq!(s.lower_whisker, 1.0);
    }

    #[test]
    fn type7_quartiles() {
        // R: quantile(c(1, 2, 4, 8), c(.25, .5, .75)) = 1.75 3 5
        let s = summarize_repetitions(&[8.0, 1.0, 4.0, 2.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (1.75, 3.0, 5.0));
    }

    #[test]
    fn summary_rejects_empty_and_nan() {
        assert!(summarize_repetitions(&[]).is_err());
        assert!(summarize_repetitions(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn crossover_examples() {
        let axis: Vec<(f64, RepetitionSummary)> = [(0.1, 0.05), (0.2, 0.08), (0.3, 0.2), (0.4, 0.5)]
            .iter()
            .map(|&(v, m)| (v, summary_with_median(m)))
            .collect();
        let baselines = vec![
            ("low".to_string(), summary_with_median(0.07)),
            ("high".to_string(), summary_with_median(0.3)),
            ("never".to_string(), summary_with_median(0.9)),
            ("always".to_string(), summary_with_median(0.0)),
        ];
        let r = crossover(&axis, AxisOrder::Increasing, &baselines).unwrap();
        assert_eq!(r.deviation_axis, vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(
            r.first_worse,
            vec![
                ("low".to_string(), Some(0.2)),
                ("high".to_string(), Some(0.4)),
                ("never".to_string(), None),
                ("always".to_string(), Some(0.1)),
            ]
        );
        assert!(crossover(&[], AxisOrder::Increasing, &baselines).is_err());
    }

    #[test]
    fn decreasing_axis_scans_from_largest() {
        let axis: Vec<(f64, RepetitionSummary)> =
            [(0.5, 0.4), (0.9, 0.01), (0.7, 0.1)].iter().map(|&(v, m)| (v, summary_with_median(m))).collect();
        let r = crossover(&axis, AxisOrder::Decreasing, &[("v".into(), summary_with_median(0.05))]).unwrap();
        assert_eq!(r.deviation_axis, vec![0.9, 0.7, 0.5]);
        assert_eq!(r.first_worse[0].1, Some(0.7));
    }

    proptest! {
        #[test]
        fn summary_order_statistics(mut v in prop::collection::vec(-1e3..1e3_f64, 1..60), seed in any::<u64>()) {
            let s = summarize_repetitions(&v).unwrap();
            prop_assert!(s.min <= s.lower_whisker && s.lower_whisker <= s.q1);
            prop_assert!(s.q1 <= s.median && s.median <= s.q3);
            prop_assert!(s.q3 <= s.upper_whisker && s.upper_whisker <= s.max);
            // permutation invariance
            let k = v.len();
            v.rotate_left((seed as usize) % k);
            v.reverse();
            prop_assert_eq!(summarize_repetitions(&v).unwrap(), s);
        }

        #[test]
        fn component_errors_linear(
            a in prop::collection::vec(0.0..1.0_f64, 3),
            b in prop::collection::vec(0.0..1.0_f64, 3),
            t in prop::collection::vec(0.01..1.0_f64, 3),
            c in -3.0..3.0_f64,
        ) {
            let tr = truth(&t);
            let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + c * y).collect();
            let ra = component_errors(&estimate(&a), &tr).unwrap();
            let rb = component_errors(&estimate(&b), &tr).unwrap();
            let rc = component_errors(&estimate(&combo), &tr).unwrap();
            for j in 0..3 {
                // Err(a + c b) = Err(a) + c (b - 0) since truth enters once
                let expected = ra.absolute[j] + c * (rb.absolute[j] + t[j]);
                prop_assert!((rc.absolute[j] - expected).abs() < 1e-12);
                prop_assert!((rc.relative[j] * t[j] - rc.absolute[j]).abs() < 1e-12);
            }
        }

        #[test]
        fn crossover_monotone_stable(
            medians in prop::collection::vec(0.0..1.0_f64, 1..12),
            extra in 0.0..1.0_f64,
            base in 0.0..1.0_f64,
        ) {
            let axis: Vec<(f64, RepetitionSummary)> =
                medians.iter().enumerate().map(|(i, &m)| (i as f64, summary_with_median(m))).collect();
            let baselines = vec![("v".to_string(), summary_with_median(base))];
            let before = crossover(&axis, AxisOrder::Increasing, &baselines).unwrap();
            let mut longer = axis.clone();
            longer.push((axis.len() as f64, summary_with_median(extra)));
            let after = crossover(&longer, AxisOrder::Increasing, &baselines).unwrap();
            if let Some(v) = before.first_worse[0].1 {
                prop_assert_eq!(after.first_worse[0].1, Some(v));
                prop_assert!(before.deviation_axis.contains(&v));
            }
        }
    }
}
