//! Metric engine: ROC curves over scored sets, operating-point selection at
//! a fixed false-positive budget, and report assembly with lower-bound TPR
//! semantics (unknown labels count as negatives).

use std::io::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("scored set needs at least one positive and one negative")]
    DegenerateSet,
    #[error("target fpr must be in (0,1), got {0}")]
    InvalidTarget(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Benign,
    Phish,
    Unknown,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScoredSet {
    pub items: Vec<(f64, Label)>,
}

impl ScoredSet {
    pub fn new(items: Vec<(f64, Label)>) -> ScoredSet {
        assert!(items.iter().all(|(s, _)| s.is_finite()), "scores must be finite");
        ScoredSet { items }
    }

    fn positives(&self) -> usize {
        self.items.iter().filter(|(_, l)| *l == Label::Phish).count()
    }

    /// Unknown counts as negative: lower-bound semantics.
    fn negatives(&self) -> usize {
        self.items.len() - self.positives()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// One point per distinct score, descending, with a +inf sentinel so the
/// curve starts at (0,0); positives are `score >= threshold`, so the last
/// point is (1,1).
pub fn roc(set: &ScoredSet) -> Result<Vec<RocPoint>, EvalError> {
    let p = set.positives();
    let n = set.negatives();
    if p == 0 || n == 0 {
        return Err(EvalError::DegenerateSet);
    }
    let mut items: Vec<(f64, Label)> = set.items.clone();
    items.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite score"));

    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < items.len() {
        let threshold = items[i].0;
        while i < items.len() && items[i].0 == threshold {
            match items[i].1 {
                Label::Phish => tp += 1,
                _ => fp += 1,
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
        });
    }
    Ok(points)
}

/// Smallest candidate threshold whose empirical FPR stays within the
/// target. Candidates are the distinct positive-class scores plus +inf, so
/// the result maximizes TPR under the budget and, among thresholds with
/// that TPR, admits the fewest false positives.
pub fn threshold_at_fpr(set: &ScoredSet, target_fpr: f64) -> Result<f64, EvalError> {
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(EvalError::InvalidTarget(target_fpr));
    }
    let p = set.positives();
    let n = set.negatives();
    if p == 0 || n == 0 {
        return Err(EvalError::DegenerateSet);
    }
    let mut candidates: Vec<f64> =
        set.items.iter().filter(|(_, l)| *l == Label::Phish).map(|(s, _)| *s).collect();
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("finite score"));
    candidates.dedup();

    for &t in &candidates {
        let fp = set
            .items
            .iter()
            .filter(|(s, l)| *l != Label::Phish && *s >= t)
            .count();
        if fp as f64 / n as f64 <= target_fpr {
            return Ok(t);
        }
    }
    Ok(f64::INFINITY)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub classifier: String,
    pub target_fpr: f64,
    pub threshold: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub known_phish: usize,
    pub negatives: usize,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Report {
    pub points: Vec<OperatingPoint>,
}

/// Builds the operating report. `verifier(classifier, item_index)` is
/// consulted for unknown-label positives; a true verdict promotes the item
/// to a confirmed true positive, everything else consumes FP budget.
pub fn report<F>(
    results: &[(String, ScoredSet)],
    targets: &[f64],
    mut verifier: F,
) -> Result<Report, EvalError>
where
    F: FnMut(&str, usize) -> bool,
{
    let mut points = Vec::new();
    for (name, set) in results {
        for &target in targets {
            let threshold = threshold_at_fpr(set, target)?;
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut confirmed_unknown = 0usize;
            for (i, (score, label)) in set.items.iter().enumerate() {
                if *score < threshold {
                    continue;
                }
                match label {
                    Label::Phish => tp += 1,
                    Label::Unknown if verifier(name, i) => {
                        tp += 1;
                        confirmed_unknown += 1;
                    }
                    _ => fp += 1,
                }
            }
            let known_phish = set.positives() + confirmed_unknown;
            points.push(OperatingPoint {
                classifier: name.clone(),
                target_fpr: target,
                threshold,
                true_positives: tp,
                false_positives: fp,
                known_phish,
                negatives: set.negatives(),
                tpr: if known_phish == 0 { 0.0 } else { tp as f64 / known_phish as f64 },
            });
        }
    }
    Ok(Report { points })
}

impl Report {
    /// Fixed-width text table, one row per classifier and FPR target.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:>10} {:>12} {:>8} {:>8} {:>8}\n",
            "classifier", "target_fpr", "threshold", "tp", "fp", "tpr"
        ));
        for p in &self.points {
            out.push_str(&format!(
                "{:<24} {:>10} {:>12.6} {:>8} {:>8} {:>8.4}\n",
                p.classifier, p.target_fpr, p.threshold, p.true_positives, p.false_positives, p.tpr
            ));
        }
        out
    }
}

/// CSV columns: threshold,fpr,tpr.
pub fn write_roc_csv<W: Write>(mut w: W, points: &[RocPoint]) -> std::io::Result<()> {
    writeln!(w, "threshold,fpr,tpr")?;
    for p in points {
        writeln!(w, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[(f64, Label)]) -> ScoredSet {
        ScoredSet::new(items.to_vec())
    }

    #[test]
    fn perfect_scorer_passes_through_corner() {
        let s = set(&[(1.0, Label::Phish), (1.0, Label::Phish), (0.0, Label::Benign)]);
        let curve = roc(&s).unwrap();
        assert!(curve.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(curve.first().unwrap().tpr, 0.0);
        assert_eq!(curve.last().unwrap().fpr, 1.0);
        assert_eq!(curve.last().unwrap().tpr, 1.0);
    }

    #[test]
    fn six_point_hand_curve() {
        let s = set(&[
            (0.9, Label::Phish),
            (0.8, Label::Benign),
            (0.7, Label::Phish),
            (0.4, Label::Benign),
            (0.3, Label::Phish),
            (0.1, Label::Benign),
        ]);
        let curve = roc(&s).unwrap();
        let third = 1.0 / 3.0;
        let expect = [
            (f64::INFINITY, 0.0, 0.0),
            (0.9, 0.0, third),
            (0.8, third, third),
            (0.7, third, 2.0 * third),
            (0.4, 2.0 * third, 2.0 * third),
            (0.3, 2.0 * third, 1.0),
            (0.1, 1.0, 1.0),
        ];
        assert_eq!(curve.len(), expect.len());
        for (p, (t, fpr, tpr)) in curve.iter().zip(expect) {
            assert_eq!(p.threshold, t);
            assert!((p.fpr - fpr).abs() < 1e-12);
            assert!((p.tpr - tpr).abs() < 1e-12);
        }
        // curve is monotone along both axes
        for w in curve.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
    }

    #[test]
    fn threshold_picks_zero_fp_point_when_available() {
        let s = set(&[(0.95, Label::Phish), (0.9, Label::Benign), (0.1, Label::Benign)]);
        let t = threshold_at_fpr(&s, 0.5).unwrap();
        assert_eq!(t, 0.95);
        let fp = s.items.iter().filter(|(v, l)| *l != Label::Phish && *v >= t).count();
        assert_eq!(fp, 0);
    }

    #[test]
    fn infeasible_top_score_yields_infinite_threshold() {
        // every phish sits below a benign score and the budget admits no FP
        let s = set(&[(0.9, Label::Benign), (0.5, Label::Phish)]);
        let t = threshold_at_fpr(&s, 0.4).unwrap();
        assert_eq!(t, f64::INFINITY);
    }

    #[test]
    fn relaxing_the_target_never_lowers_tpr() {
        let s = set(&[
            (0.9, Label::Phish),
            (0.85, Label::Benign),
            (0.8, Label::Phish),
            (0.5, Label::Benign),
            (0.4, Label::Phish),
            (0.2, Label::Benign),
            (0.1, Label::Benign),
        ]);
        let tpr_at = |target: f64| {
            let t = threshold_at_fpr(&s, target).unwrap();
            s.items.iter().filter(|(v, l)| *l == Label::Phish && *v >= t).count()
        };
        let mut last = 0;
        for target in [0.01, 0.25, 0.26, 0.5, 0.75, 0.99] {
            let tp = tpr_at(target);
            assert!(tp >= last);
            last = tp;
        }
    }

    #[test]
    fn unknowns_count_as_negatives_until_verified() {
        let s = set(&[
            (0.9, Label::Phish),
            (0.8, Label::Unknown),
            (0.7, Label::Unknown),
            (0.1, Label::Benign),
        ]);
        let r = report(&[("m".to_string(), s)], &[0.5], |_, i| i == 1).unwrap();
        let p = &r.points[0];
        // threshold 0.9 keeps FPR 0; only the phish item is positive
        assert_eq!(p.threshold, 0.9);
        assert_eq!(p.true_positives, 1);
        assert_eq!(p.false_positives, 0);
        assert_eq!(p.negatives, 3);
    }

    #[test]
    fn degenerate_sets_are_rejected() {
        let all_phish = set(&[(0.9, Label::Phish)]);
        assert!(matches!(roc(&all_phish), Err(EvalError::DegenerateSet)));
        let s = set(&[(0.9, Label::Phish), (0.1, Label::Benign)]);
        assert!(matches!(threshold_at_fpr(&s, 0.0), Err(EvalError::InvalidTarget(_))));
        assert!(matches!(threshold_at_fpr(&s, 1.0), Err(EvalError::InvalidTarget(_))));
    }

    #[test]
    fn roc_csv_has_pinned_columns() {
        let s = set(&[(0.9, Label::Phish), (0.1, Label::Benign)]);
        let mut buf = Vec::new();
        write_roc_csv(&mut buf, &roc(&s).unwrap()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("threshold,fpr,tpr\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
