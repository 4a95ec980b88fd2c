/// Rotates `p` by the axis-angle vector `w` (Rodrigues).
pub fn rotate(w: [f64; 3], p: [f64; 3]) -> [f64; 3] {
    let theta = libm::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
    if theta < 1e-12 {
        return p;
    }
    let k = [w[0] / theta, w[1] / theta, w[2] / theta];
    let (s, c) = (libm::sin(theta), libm::cos(theta));
    let kxp = [k[1] * p[2] - k[2] * p[1], k[2] * p[0] - k[0] * p[2], k[0] * p[1] - k[1] * p[0]];
    let kdp = k[0] * p[0] + k[1] * p[1] + k[2] * p[2];
    core::array::from_fn(|i| p[i] * c + kxp[i] * s + k[i] * kdp * (1.0 - c))
}

/// Poses local-frame points: rotation by `pose[3..6]`, then translation by
/// `pose[0..3]`.
pub fn transform_points(points: &[[f32; 3]], pose: &[f32; 6]) -> alloc::vec::Vec<[f32; 3]> {
    let w = [pose[3] as f64, pose[4] as f64, pose[5] as f64];
    points
        .iter()
        .map(|p| {
            let r = rotate(w, [p[0] as f64, p[1] as f64, p[2] as f64]);
            [
                (r[0] + pose[0] as f64) as f32,
                (r[1] + pose[1] as f64) as f32,
                (r[2] + pose[2] as f64) as f32,
            ]
        })
        .collect()
}
