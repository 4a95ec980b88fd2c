//! Evaluation metrics: contact statistics, joint and object-pose errors,
//! point-set distances and distribution-level surrogates. All arithmetic is
//! in `f64`.

mod contact;
mod distance;
mod distribution;
mod retrieval;

use alloc::string::String;

use serde::{Deserialize, Serialize};

pub use contact::{contact_flags, contact_metrics, ContactStats};
pub use distance::{chamfer, e_c, e_v2v, e_v2v_per_frame, joint_errors, pose_points};
pub use distribution::{diversity, frechet_distance, COV_RIDGE};
pub use retrieval::{pooled_latents, r_precision_surrogate};

/// Flat metric record; metrics that were not computed are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub c_prec: Option<f64>,
    pub c_rec: Option<f64>,
    pub c_acc: Option<f64>,
    pub contact_pct: Option<f64>,
    pub gt_contact_pct: Option<f64>,
    pub hand_jpe_cm: Option<f64>,
    pub mpjpe_cm: Option<f64>,
    pub e_v2v: Option<f64>,
    pub e_c: Option<f64>,
    pub e_ch: Option<f64>,
    pub fid: Option<f64>,
    pub diversity: Option<f64>,
    pub r_precision_top1: Option<f64>,
    pub r_precision_top2: Option<f64>,
    pub r_precision_top3: Option<f64>,
    /// A rate had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

impl MetricReport {
    pub fn set_contact(&mut self, s: &ContactStats) {
        self.c_prec = Some(s.precision());
        self.c_rec = Some(s.recall());
        self.c_acc = Some(s.accuracy());
        self.contact_pct = Some(s.contact_pct());
        self.gt_contact_pct = Some(s.gt_contact_pct());
        self.degenerate |= s.degenerate();
    }

    /// `(name, value)` for every field in declaration order.
    pub fn entries(&self) -> [(&'static str, Option<f64>); 15] {
        [
            ("c_prec", self.c_prec),
            ("c_rec", self.c_rec),
            ("c_acc", self.c_acc),
            ("contact_pct", self.contact_pct),
            ("gt_contact_pct", self.gt_contact_pct),
            ("hand_jpe_cm", self.hand_jpe_cm),
            ("mpjpe_cm", self.mpjpe_cm),
            ("e_v2v", self.e_v2v),
            ("e_c", self.e_c),
            ("e_ch", self.e_ch),
            ("fid", self.fid),
            ("diversity", self.diversity),
            ("r_precision_top1", self.r_precision_top1),
            ("r_precision_top2", self.r_precision_top2),
            ("r_precision_top3", self.r_precision_top3),
        ]
    }

    /// Aligned two-column text table; uncomputed metrics show `-`.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for (name, v) in self.entries() {
            let v = v.map_or_else(|| String::from("-"), |v| alloc::format!("{v:.4}"));
            out += &alloc::format!("{name:<18} {v:>12}\n");
        }
        out += &alloc::format!("{:<18} {:>12}\n", "degenerate", self.degenerate);
        out
    }
}

#[cfg(test)]
mod tests;
