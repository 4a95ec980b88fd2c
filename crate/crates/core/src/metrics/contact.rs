use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Frame-level confusion counts of predicted versus reference contact.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactStats {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub threshold: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ContactStats {
    pub fn from_flags(pred: &[bool], gt: &[bool], threshold: f64) -> Result<Self> {
        if pred.len() != gt.len() {
            return Err(Error::Shape {
                op: "contact flags",
                left: alloc::vec![pred.len()],
                right: alloc::vec![gt.len()],
            });
        }
        let mut s = Self { threshold, ..Default::default() };
        for (&p, &g) in pred.iter().zip(gt) {
            match (p, g) {
                (true, true) => s.tp += 1,
                (true, false) => s.fp += 1,
                (false, true) => s.fn_ += 1,
                (false, false) => s.tn += 1,
            }
        }
        Ok(s)
    }

    pub fn frames(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Sums raw counts; rates are computed afterwards.
    pub fn merge(&mut self, other: &ContactStats) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.frames())
    }

    /// Fraction of frames with predicted contact.
    pub fn contact_pct(&self) -> f64 {
        ratio(self.tp + self.fp, self.frames())
    }

    pub fn gt_contact_pct(&self) -> f64 {
        ratio(self.tp + self.fn_, self.frames())
    }

    /// True when some rate had a zero denominator and was reported as 0.
    pub fn degenerate(&self) -> bool {
        self.frames() == 0 || self.tp + self.fp == 0 || self.tp + self.fn_ == 0
    }
}

fn dist(a: [f32; 3], b: [f32; 3]) -> f64 {
    let d: [f64; 3] = core::array::from_fn(|i| a[i] as f64 - b[i] as f64);
    libm::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
}

/// Per frame: does either hand come within `threshold` of any object point?
pub fn contact_flags(hands: &[[[f32; 3]; 2]], object_points: &[Vec<[f32; 3]>], threshold: f64) -> Result<Vec<bool>> {
    if hands.len() != object_points.len() {
        return Err(Error::Shape {
            op: "contact frames",
            left: alloc::vec![hands.len()],
            right: alloc::vec![object_points.len()],
        });
    }
    Ok(hands
        .iter()
        .zip(object_points)
        .map(|(h, pts)| {
            pts.iter()
                .any(|&p| dist(h[0], p) < threshold || dist(h[1], p) < threshold)
        })
        .collect())
}

/// Contact confusion of predicted against reference hands, both measured
/// against the same world-space object points per frame.
pub fn contact_metrics(
    pred_hands: &[[[f32; 3]; 2]],
    gt_hands: &[[[f32; 3]; 2]],
    object_points: &[Vec<[f32; 3]>],
    threshold: f64,
) -> Result<ContactStats> {
    if pred_hands.len() != gt_hands.len() {
        return Err(Error::Shape {
            op: "contact_metrics",
            left: alloc::vec![pred_hands.len()],
            right: alloc::vec![gt_hands.len()],
        });
    }
    let p = contact_flags(pred_hands, object_points, threshold)?;
    let g = contact_flags(gt_hands, object_points, threshold)?;
    ContactStats::from_flags(&p, &g, threshold)
}
