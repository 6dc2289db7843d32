use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RocLevel {
    Frame,
    Pixel,
}

impl std::str::FromStr for RocLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frame" => Ok(Self::Frame),
            "pixel" => Ok(Self::Pixel),
            other => Err(Error::Argument(format!("level `{other}` is not frame or pixel"))),
        }
    }
}

impl std::fmt::Display for RocLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Frame => "frame",
            Self::Pixel => "pixel",
        })
    }
}

/// ROC curve with one vertex per distinct score. The first vertex is the
/// `(0, 0)` sentinel at threshold `+inf`; the last one is `(1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocReport {
    pub level: RocLevel,
    /// Descending; a sample is flagged when its score is `>=` the threshold.
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub auc: f64,
}

impl RocReport {
    /// `{level, auc, points: [{threshold, fpr, tpr}]}`; the sentinel's
    /// threshold is written as `null`.
    pub fn to_json(&self) -> Value {
        let points: Vec<Value> = self
            .thresholds
            .iter()
            .zip(&self.fpr)
            .zip(&self.tpr)
            .map(|((&t, &f), &p)| {
                let t = if t.is_finite() { json!(t) } else { Value::Null };
                json!({ "threshold": t, "fpr": f, "tpr": p })
            })
            .collect();
        json!({ "level": self.level, "auc": self.auc, "points": points })
    }

    pub fn write_curve_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "fpr,tpr")?;
        for (f, t) in self.fpr.iter().zip(&self.tpr) {
            writeln!(out, "{f},{t}")?;
        }
        Ok(())
    }
}

/// Builds the ROC of `scores` against binary `labels`.
///
/// Equal scores form a single vertex, so the trapezoid area equals the
/// Mann-Whitney statistic with ties counted as one half.
pub fn roc(level: RocLevel, scores: &[f64], labels: &[bool]) -> Result<RocReport> {
    if scores.len() != labels.len() {
        return Err(Error::Alignment(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Data(format!("score {i} is not finite")));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut thresholds = vec![f64::INFINITY];
    let mut tpr = vec![0.0];
    let mut fpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(t);
        tpr.push(tp as f64 / positives as f64);
        fpr.push(fp as f64 / negatives as f64);
    }
    let auc = trapezoid(&fpr, &tpr);
    Ok(RocReport {
        level,
        thresholds,
        tpr,
        fpr,
        auc,
    })
}

/// Frame-level ROC: a frame is positive when its label is set.
pub fn frame_auc(scores: &[f64], labels: &[bool]) -> Result<RocReport> {
    roc(RocLevel::Frame, scores, labels)
}

/// Area under the polyline `(x[i], y[i])`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| (xs[1] - xs[0]) * (ys[0] + ys[1]) / 2.0)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_constant() {
        let labels = [false, true, false, true];
        let perfect = [0.0, 1.0, 0.0, 1.0];
        assert_eq!(frame_auc(&perfect, &labels).unwrap().auc, 1.0);
        assert_eq!(frame_auc(&[0.3; 4], &labels).unwrap().auc, 0.5);
    }

    #[test]
    fn four_point_example() {
        let r = frame_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert!((r.auc - 0.75).abs() < 1e-12);
        assert_eq!(r.thresholds.len(), 5);
        assert_eq!((r.fpr[0], r.tpr[0]), (0.0, 0.0));
        assert_eq!((*r.fpr.last().unwrap(), *r.tpr.last().unwrap()), (1.0, 1.0));
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(frame_auc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedAuc)));
        assert!(matches!(frame_auc(&[0.1], &[true, false]), Err(Error::Alignment(_))));
    }

    #[test]
    fn json_and_csv() {
        let r = frame_auc(&[0.2, 0.9], &[false, true]).unwrap();
        let v = r.to_json();
        assert_eq!(v["level"], "frame");
        assert_eq!(v["auc"], 1.0);
        assert!(v["points"][0]["threshold"].is_null());
        assert_eq!(v["points"][1]["threshold"], 0.9);
        let mut buf = Vec::new();
        r.write_curve_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "fpr,tpr\n0,0\n0,1\n1,1\n");
    }
}
