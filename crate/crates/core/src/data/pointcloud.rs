use alloc::vec::Vec;

use super::{PointCloud, ShapeTag};
use crate::numerics::rng;

/// Frac part of `x` in `[0, 1)`.
fn frac(x: f64) -> f64 {
    x - libm::floor(x)
}

/// Quasi-uniform surface samples of a centred primitive.
///
/// `extent` holds half-sizes: `(hx, hy, hz)` for a box, the radius in
/// `extent[0]` for a sphere, and `(radius, _, half_height)` for a cylinder.
/// Points come in antipodal pairs (all three primitives are centrally
/// symmetric), so for even `n` every point lies on the surface and the
/// centroid is zero up to rounding; the final re-centering then only removes
/// rounding noise. `n` below 4 is raised to 4.
pub fn make_pointcloud(shape: ShapeTag, n: usize, seed: u64, extent: [f64; 3]) -> PointCloud {
    let n = n.max(4);
    let mut r = rng::stream(seed, 0x70C1);
    // R3 low-discrepancy sequence with a seeded Cranley-Patterson shift.
    let g = 1.220_744_084_605_759_5_f64;
    let alpha = [1.0 / g, 1.0 / (g * g), 1.0 / (g * g * g)];
    let shift = [rng::uniform(&mut r), rng::uniform(&mut r), rng::uniform(&mut r)];
    let half = n / 2;
    let mut pts: Vec<[f64; 3]> = Vec::with_capacity(n);
    for k in 0..half.max(1) {
        let q: [f64; 3] = core::array::from_fn(|i| frac(shift[i] + (k as f64 + 1.0) * alpha[i]));
        pts.push(surface_point(shape, extent, q));
    }
    let base = pts.clone();
    for p in base.iter().take(half) {
        pts.push([-p[0], -p[1], -p[2]]);
    }
    pts.truncate(n);
    let mut c = [0.0; 3];
    for p in &pts {
        for i in 0..3 {
            c[i] += p[i];
        }
    }
    let inv = 1.0 / pts.len() as f64;
    let points = pts
        .iter()
        .map(|p| core::array::from_fn(|i| (p[i] - c[i] * inv) as f32))
        .collect();
    PointCloud { points, shape: Some(shape) }
}

fn surface_point(shape: ShapeTag, e: [f64; 3], q: [f64; 3]) -> [f64; 3] {
    use core::f64::consts::PI;
    match shape {
        ShapeTag::Sphere => {
            let z = 2.0 * q[0] - 1.0;
            let rho = libm::sqrt((1.0 - z * z).max(0.0));
            let phi = 2.0 * PI * q[1];
            [e[0] * rho * libm::cos(phi), e[0] * rho * libm::sin(phi), e[0] * z]
        }
        ShapeTag::Box => {
            let (hx, hy, hz) = (e[0], e[1], e[2]);
            let areas = [hy * hz, hx * hz, hx * hy];
            let total: f64 = areas.iter().sum();
            let pick = q[0] * total;
            let (u, v) = (2.0 * q[1] - 1.0, 2.0 * q[2] - 1.0);
            if pick < areas[0] {
                [hx, u * hy, v * hz]
            } else if pick < areas[0] + areas[1] {
                [u * hx, hy, v * hz]
            } else {
                [u * hx, v * hy, hz]
            }
        }
        ShapeTag::Cylinder => {
            let (rad, hz) = (e[0], e[2]);
            let side = 2.0 * PI * rad * 2.0 * hz;
            let caps = 2.0 * PI * rad * rad;
            let phi = 2.0 * PI * q[1];
            if q[0] * (side + caps) < side {
                [rad * libm::cos(phi), rad * libm::sin(phi), (2.0 * q[2] - 1.0) * hz]
            } else {
                let rr = rad * libm::sqrt(q[2]);
                [rr * libm::cos(phi), rr * libm::sin(phi), hz]
            }
        }
    }
}
