use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::numerics::rng;
use crate::{Error, Result};

/// Ridge added to both covariances.
pub const COV_RIDGE: f64 = 1e-6;

fn moments(x: &[Vec<f64>], d: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.len();
    let mut mu = DVector::zeros(d);
    for row in x {
        for (m, v) in mu.iter_mut().zip(row) {
            *m += v;
        }
    }
    mu /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for row in x {
        let c = DVector::from_iterator(d, row.iter().zip(mu.iter()).map(|(v, m)| v - m));
        cov += &c * c.transpose();
    }
    cov /= (n.max(2) - 1) as f64;
    for i in 0..d {
        cov[(i, i)] += COV_RIDGE;
    }
    (mu, cov)
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let s = DMatrix::from_diagonal(&e.eigenvalues.map(|v| libm::sqrt(v.max(0.0))));
    &e.eigenvectors * s * e.eigenvectors.transpose()
}

/// Fréchet distance between Gaussians fitted to two feature sets:
/// `‖μa − μb‖² + Tr(Σa + Σb − 2(ΣaΣb)^½)`. The trace of the product root
/// is taken through the symmetric form `(Σa^½ Σb Σa^½)^½`.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    let d = a.first().map_or(0, Vec::len);
    if a.is_empty() || b.is_empty() || d == 0 {
        return Err(Error::Domain("Fréchet distance needs two non-empty feature sets".into()));
    }
    if a.iter().chain(b).any(|r| r.len() != d) {
        return Err(Error::Domain("feature rows differ in width".into()));
    }
    if a.iter().chain(b).flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite feature".into()));
    }
    let (ma, sa) = moments(a, d);
    let (mb, sb) = moments(b, d);
    let ra = sym_sqrt(&sa);
    let inner = &ra * &sb * &ra;
    let e = SymmetricEigen::new((&inner + inner.transpose()) * 0.5);
    let tr_root: f64 = e.eigenvalues.iter().map(|&v| libm::sqrt(v.max(0.0))).sum();
    let diff = ma - mb;
    Ok((diff.dot(&diff) + sa.trace() + sb.trace() - 2.0 * tr_root).max(0.0))
}

/// Mean Euclidean distance over `n_pairs` seeded pairs. Pairs within one
/// pass over a shuffled index list are disjoint; further passes reshuffle.
pub fn diversity(features: &[Vec<f64>], n_pairs: usize, seed: u64) -> f64 {
    let n = features.len();
    if n < 2 || n_pairs == 0 {
        return 0.0;
    }
    let r = &mut rng::seeded(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let (mut sum, mut done) = (0.0, 0);
    while done < n_pairs {
        rng::shuffle(r, &mut order);
        for pair in order.chunks_exact(2) {
            if done == n_pairs {
                break;
            }
            let (x, y) = (&features[pair[0]], &features[pair[1]]);
            sum += libm::sqrt(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum());
            done += 1;
        }
    }
    sum / n_pairs as f64
}
