//! Equal-error operating point of a score vector.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionReport {
    /// A device is declared active when its score exceeds this.
    pub threshold: f64,
    pub detected: Vec<bool>,
    pub missed_detection_rate: f64,
    pub false_alarm_rate: f64,
    /// Mean of the two rates at the chosen point (their common value when
    /// they coincide).
    pub pe: f64,
    /// True when the truth has no active or no inactive devices.
    pub degenerate: bool,
}

/// Threshold sweep over midpoints of consecutive distinct scores plus ±∞,
/// keeping the point where missed detection and false alarm are closest.
pub fn equal_error_threshold(scores: &[f64], truth: &[bool]) -> Result<DetectionReport> {
    if scores.len() != truth.len() {
        return Err(Error::Shape(format!("{} scores for {} devices", scores.len(), truth.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Shape("NaN score".into()));
    }
    let n_active = truth.iter().filter(|&&t| t).count();
    let n_inactive = truth.len() - n_active;
    let rate = |k: usize, total: usize| if total == 0 { 0.0 } else { k as f64 / total as f64 };

    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // threshold below everything: nothing missed, every inactive device alarms
    let mut missed = 0usize;
    let mut alarms = n_inactive;
    let mut best = (f64::NEG_INFINITY, rate(missed, n_active), rate(alarms, n_inactive));
    let mut i = 0;
    while i < idx.len() {
        let v = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == v {
            if truth[idx[i]] {
                missed += 1;
            } else {
                alarms -= 1;
            }
            i += 1;
        }
        let t = if i < idx.len() { 0.5 * (v + scores[idx[i]]) } else { f64::INFINITY };
        let (md, fa) = (rate(missed, n_active), rate(alarms, n_inactive));
        let gap = (md - fa).abs();
        let best_gap = (best.1 - best.2).abs();
        if gap < best_gap || (gap == best_gap && md + fa < best.1 + best.2) {
            best = (t, md, fa);
        }
    }
    let (threshold, md, fa) = best;
    Ok(DetectionReport {
        threshold,
        detected: scores.iter().map(|&s| s > threshold).collect(),
        missed_detection_rate: md,
        false_alarm_rate: fa,
        pe: 0.5 * (md + fa),
        degenerate: n_active == 0 || n_inactive == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfectly_separated_scores() {
        let r = equal_error_threshold(&[1.0, 0.0, 0.0, 1.0], &[true, false, false, true]).unwrap();
        assert_eq!(r.pe, 0.0);
        assert_eq!(r.detected, vec![true, false, false, true]);
        assert!(r.threshold > 0.0 && r.threshold < 1.0);
        assert!(!r.degenerate);
    }

    #[test]
    fn identical_scores_cannot_separate() {
        let truth = [true, false, false, false];
        let r = equal_error_threshold(&[0.3; 4], &truth).unwrap();
        // only the two infinite thresholds exist: (md, fa) = (0, 1) or (1, 0)
        assert!(r.missed_detection_rate + r.false_alarm_rate >= 1.0);
        assert_eq!((r.missed_detection_rate - r.false_alarm_rate).abs(), 1.0);
    }

    #[test]
    fn degenerate_truth_is_flagged() {
        let r = equal_error_threshold(&[0.1, 0.5, 0.2], &[false; 3]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.pe, 0.0);
        assert!(r.detected.iter().all(|&d| !d));
        let r = equal_error_threshold(&[0.1, 0.5, 0.2], &[true; 3]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.pe, 0.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(equal_error_threshold(&[0.0], &[true, false]).is_err());
    }
}
