use alloc::vec::Vec;

use crate::data::rotate;
use crate::{Error, Result};

fn mismatch(op: &'static str, a: usize, b: usize) -> Error {
    Error::Shape {
        op,
        left: alloc::vec![a],
        right: alloc::vec![b],
    }
}

fn norm3(a: [f64; 3], b: [f64; 3]) -> f64 {
    libm::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]))
}

fn f64x3(p: [f32; 3]) -> [f64; 3] {
    p.map(|v| v as f64)
}

/// `(HandJPE, MPJPE)` in centimetres for per-frame joint lists in metres.
pub fn joint_errors(pred: &[Vec<[f32; 3]>], gt: &[Vec<[f32; 3]>], hands: &[usize]) -> Result<(f64, f64)> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(mismatch("joint_errors", pred.len(), gt.len()));
    }
    let (mut all, mut n_all, mut hand, mut n_hand) = (0.0, 0usize, 0.0, 0usize);
    for (p, g) in pred.iter().zip(gt) {
        if p.len() != g.len() {
            return Err(mismatch("joint_errors joints", p.len(), g.len()));
        }
        for (j, (&a, &b)) in p.iter().zip(g).enumerate() {
            let d = norm3(f64x3(a), f64x3(b));
            all += d;
            n_all += 1;
            if hands.contains(&j) {
                hand += d;
                n_hand += 1;
            }
        }
    }
    let hand = if n_hand == 0 { 0.0 } else { hand / n_hand as f64 };
    Ok((hand * 100.0, all / n_all as f64 * 100.0))
}

/// Local points posed by `[tx, ty, tz, wx, wy, wz]` in double precision.
pub fn pose_points(points: &[[f32; 3]], pose: &[f32; 6]) -> Vec<[f64; 3]> {
    let w = [pose[3] as f64, pose[4] as f64, pose[5] as f64];
    points
        .iter()
        .map(|&p| {
            let r = rotate(w, f64x3(p));
            [r[0] + pose[0] as f64, r[1] + pose[1] as f64, r[2] + pose[2] as f64]
        })
        .collect()
}

/// Per-frame Frobenius norm between the point sets posed by `pred` and `gt`.
pub fn e_v2v_per_frame(pred: &[[f32; 6]], gt: &[[f32; 6]], points: &[[f32; 3]]) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(mismatch("e_v2v", pred.len(), gt.len()));
    }
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(a, b)| {
            let (pa, pb) = (pose_points(points, a), pose_points(points, b));
            let sq: f64 = pa
                .iter()
                .zip(&pb)
                .map(|(x, y)| (0..3).map(|i| (x[i] - y[i]) * (x[i] - y[i])).sum::<f64>())
                .sum();
            libm::sqrt(sq)
        })
        .collect())
}

/// Mean over frames of [`e_v2v_per_frame`].
pub fn e_v2v(pred: &[[f32; 6]], gt: &[[f32; 6]], points: &[[f32; 3]]) -> Result<f64> {
    let f = e_v2v_per_frame(pred, gt, points)?;
    if f.is_empty() {
        return Err(Error::Domain("e_v2v of an empty sequence".into()));
    }
    Ok(f.iter().sum::<f64>() / f.len() as f64)
}

/// Mean distance between object centres (translations).
pub fn e_c(pred: &[[f32; 6]], gt: &[[f32; 6]]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(mismatch("e_c", pred.len(), gt.len()));
    }
    if pred.is_empty() {
        return Err(Error::Domain("e_c of an empty sequence".into()));
    }
    let t = |p: &[f32; 6]| [p[0] as f64, p[1] as f64, p[2] as f64];
    Ok(pred.iter().zip(gt).map(|(a, b)| norm3(t(a), t(b))).sum::<f64>() / pred.len() as f64)
}

fn mean_nearest(x: &[[f32; 3]], y: &[[f32; 3]]) -> f64 {
    x.iter()
        .map(|&a| y.iter().map(|&b| norm3(f64x3(a), f64x3(b))).fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        / x.len() as f64
}

/// Bidirectional mean closest-point distance.
pub fn chamfer(x: &[[f32; 3]], y: &[[f32; 3]]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Domain("chamfer distance of an empty point set".into()));
    }
    Ok(mean_nearest(x, y) + mean_nearest(y, x))
}
