//! Segmentation and depth metrics, and the relative multi-task gain.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// `counts[g * C + p]` = pixels with ground truth `g` predicted as `p`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { classes, counts: vec![0; classes * classes] }
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds pixels; ground-truth pixels equal to `ignore_index` are skipped.
    pub fn accumulate(&mut self, pred: &[u8], gt: &[u8], ignore_index: u8) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(CoreError::Metric(format!("{} predictions vs {} labels", pred.len(), gt.len())));
        }
        let c = self.classes;
        for (&p, &g) in pred.iter().zip(gt) {
            if g == ignore_index {
                continue;
            }
            if g as usize >= c || p as usize >= c {
                return Err(CoreError::Metric(format!("class id out of range: gt {g}, pred {p}, C={c}")));
            }
            self.counts[g as usize * c + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
    }
}

pub fn confusion_matrix(pred: &[u8], gt: &[u8], classes: usize, ignore_index: u8) -> Result<ConfusionMatrix> {
    let mut m = ConfusionMatrix::new(classes);
    m.accumulate(pred, gt, ignore_index)?;
    Ok(m)
}

/// Per-class IoU (`None` for classes absent from both prediction and ground
/// truth), their mean over present classes, and pixel accuracy.
pub fn miou_pixacc(conf: &ConfusionMatrix) -> Result<(f64, f64, Vec<Option<f64>>)> {
    let c = conf.classes;
    let total = conf.total();
    if total == 0 {
        return Err(CoreError::Metric("empty confusion matrix".into()));
    }
    let mut per_class = Vec::with_capacity(c);
    let mut trace = 0u64;
    for k in 0..c {
        let tp = conf.get(k, k);
        trace += tp;
        let fn_: u64 = (0..c).filter(|&p| p != k).map(|p| conf.get(k, p)).sum();
        let fp: u64 = (0..c).filter(|&g| g != k).map(|g| conf.get(g, k)).sum();
        let union = tp + fp + fn_;
        per_class.push((union > 0).then(|| tp as f64 / union as f64));
    }
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let miou = present.iter().sum::<f64>() / present.len() as f64;
    Ok((miou, trace as f64 / total as f64, per_class))
}

/// Running sums for mean absolute and mean relative depth error.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DepthErrorSums {
    pub abs: f64,
    pub rel: f64,
    pub count: u64,
}

impl DepthErrorSums {
    pub fn accumulate(&mut self, pred: &[f64], gt: &[f64], valid: &[bool]) -> Result<()> {
        if pred.len() != gt.len() || gt.len() != valid.len() {
            return Err(CoreError::Metric("depth error inputs differ in length".into()));
        }
        for ((&p, &g), &v) in pred.iter().zip(gt).zip(valid) {
            if !v {
                continue;
            }
            if g <= 0.0 {
                return Err(CoreError::Metric(format!("non-positive ground-truth depth {g} inside mask")));
            }
            let e = (p - g).abs();
            self.abs += e;
            self.rel += e / g;
            self.count += 1;
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<(f64, f64)> {
        if self.count == 0 {
            return Err(CoreError::EmptyMask("depth_errors"));
        }
        Ok((self.abs / self.count as f64, self.rel / self.count as f64))
    }
}

/// `(abs_err, rel_err)` over valid pixels; `rel_err` is a ratio.
pub fn depth_errors(pred: &[f64], gt: &[f64], valid: &[bool]) -> Result<(f64, f64)> {
    let mut s = DepthErrorSums::default();
    s.accumulate(pred, gt, valid)?;
    s.finish()
}

/// Mean signed relative change of each metric against the baseline, sign
/// flipped for lower-is-better metrics, in percent.
pub fn delta_m(model: &[f64], base: &[f64], lower_is_better: &[bool]) -> Result<f64> {
    if model.len() != base.len() || base.len() != lower_is_better.len() || base.is_empty() {
        return Err(CoreError::Metric("delta_m inputs must be nonempty and equally long".into()));
    }
    let mut acc = 0.0;
    for ((&m, &b), &lower) in model.iter().zip(base).zip(lower_is_better) {
        if b == 0.0 {
            return Err(CoreError::Metric("delta_m baseline entry is zero".into()));
        }
        let gain = (m - b) / b;
        acc += if lower { -gain } else { gain };
    }
    Ok(100.0 * acc / base.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub miou: f64,
    pub pix_acc: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    /// `null` marks classes absent from prediction and ground truth.
    pub per_class_iou: Vec<Option<f64>>,
}

impl MetricsReport {
    /// Direction flags for [`MetricsReport::values`].
    pub const LOWER_IS_BETTER: [bool; 4] = [false, false, true, true];

    /// `[miou, pix_acc, abs_err, rel_err]`.
    pub fn values(&self) -> [f64; 4] {
        [self.miou, self.pix_acc, self.abs_err, self.rel_err]
    }

    pub fn delta_m_against(&self, baseline: &MetricsReport) -> Result<f64> {
        delta_m(&self.values(), &baseline.values(), &Self::LOWER_IS_BETTER)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_enumerated_two_class_case() {
        let conf = confusion_matrix(&[0, 0, 1, 1], &[0, 1, 1, 1], 2, 255).unwrap();
        let (miou, acc, per) = miou_pixacc(&conf).unwrap();
        assert!((per[0].unwrap() - 0.5).abs() < 1e-15);
        assert!((per[1].unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((miou - 7.0 / 12.0).abs() < 1e-15);
        assert_eq!(acc, 0.75);
    }

    #[test]
    fn perfect_and_absent_classes() {
        let conf = confusion_matrix(&[0, 1, 2], &[0, 1, 2], 3, 255).unwrap();
        assert_eq!(miou_pixacc(&conf).unwrap().0, 1.0);
        for k in 0..3 {
            for j in 0..3 {
                assert_eq!(conf.get(k, j), u64::from(k == j));
            }
        }
        let conf = confusion_matrix(&[0, 0], &[0, 0], 2, 255).unwrap();
        let (miou, acc, per) = miou_pixacc(&conf).unwrap();
        assert_eq!((miou, acc), (1.0, 1.0));
        assert_eq!(per[1], None);
    }

    #[test]
    fn all_ignored_is_zero_matrix() {
        let conf = confusion_matrix(&[0, 1], &[255, 255], 2, 255).unwrap();
        assert_eq!(conf.total(), 0);
        assert!(miou_pixacc(&conf).is_err());
    }

    #[test]
    fn depth_error_arithmetic() {
        assert_eq!(depth_errors(&[1.0, 2.0], &[1.0, 2.0], &[true, true]).unwrap(), (0.0, 0.0));
        assert_eq!(depth_errors(&[3.0; 4], &[2.0; 4], &[true; 4]).unwrap(), (1.0, 0.5));
        assert!(depth_errors(&[1.0], &[1.0], &[false]).is_err());
        assert!(depth_errors(&[1.0], &[0.0], &[true]).is_err());
    }

    #[test]
    fn delta_m_hand_value() {
        let b = [50.0, 90.0, 0.02, 20.0];
        let m = [55.0, 90.0, 0.018, 20.0];
        let d = delta_m(&m, &b, &MetricsReport::LOWER_IS_BETTER).unwrap();
        assert!((d - 5.0).abs() < 1e-12);
        assert_eq!(delta_m(&b, &b, &MetricsReport::LOWER_IS_BETTER).unwrap(), 0.0);
        assert!(delta_m(&[1.0], &[0.0], &[false]).is_err());
    }

    #[test]
    fn delta_m_sign_flips_on_swap() {
        for (m, b) in [(3.0, 2.0), (0.5, 4.0)] {
            let fwd = delta_m(&[m], &[b], &[false]).unwrap();
            let rev = delta_m(&[b], &[m], &[false]).unwrap();
            assert!((fwd > 0.0) == (rev < 0.0));
        }
    }
}
