use crate::numerics::{Real, Tensor};
use crate::{Error, Result};

use super::TokenizerConfig;

/// The four tokenizer loss terms; `total` excludes `embed` in EMA mode.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VqLoss {
    pub total: f64,
    pub recon: f64,
    pub embed: f64,
    pub commit: f64,
    pub velocity: f64,
}

impl VqLoss {
    pub fn accumulate(&mut self, other: &VqLoss, weight: f64) {
        self.total += weight * other.total;
        self.recon += weight * other.recon;
        self.embed += weight * other.embed;
        self.commit += weight * other.commit;
        self.velocity += weight * other.velocity;
    }
}

fn mse<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    let n = a.len() as f64;
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = (x - y).to_f64();
            d * d
        })
        .sum::<f64>()
        / n
}

/// Mean squared error of frame differences.
fn velocity_mse<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    let (l, d) = (a.rows(), a.cols());
    if l < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for t in 1..l {
        for j in 0..d {
            let da = (a.row(t)[j] - a.row(t - 1)[j]).to_f64();
            let db = (b.row(t)[j] - b.row(t - 1)[j]).to_f64();
            acc += (da - db) * (da - db);
        }
    }
    acc / ((l - 1) * d) as f64
}

pub fn vq_loss<T: Real>(
    motion: &Tensor<T>,
    recon: &Tensor<T>,
    latents: &Tensor<T>,
    quantized: &Tensor<T>,
    cfg: &TokenizerConfig,
) -> Result<VqLoss> {
    if motion.dims() != recon.dims() || latents.dims() != quantized.dims() {
        return Err(Error::Shape {
            op: "vq_loss",
            left: motion.dims().to_vec(),
            right: recon.dims().to_vec(),
        });
    }
    let r = mse(motion, recon);
    let v = cfg.lambda_velocity * velocity_mse(motion, recon);
    let gap = mse(latents, quantized);
    let c = cfg.beta_commit * gap;
    let total = r + v + c + if cfg.ema { 0.0 } else { gap };
    Ok(VqLoss {
        total,
        recon: r,
        embed: gap,
        commit: c,
        velocity: v,
    })
}

/// Gradient of `recon + velocity` with respect to the reconstruction.
pub fn recon_grad<T: Real>(motion: &Tensor<T>, recon: &Tensor<T>, lambda_velocity: f64) -> Tensor<T> {
    let (l, d) = (motion.rows(), motion.cols());
    let mut g = Tensor::zeros([l, d]);
    let scale = T::of(2.0 / (l * d) as f64);
    for ((g, &x), &y) in g.data_mut().iter_mut().zip(motion.data()).zip(recon.data()) {
        *g = scale * (y - x);
    }
    if l >= 2 && lambda_velocity != 0.0 {
        let vs = T::of(2.0 * lambda_velocity / ((l - 1) * d) as f64);
        for t in 1..l {
            for j in 0..d {
                let e = (recon.row(t)[j] - recon.row(t - 1)[j]) - (motion.row(t)[j] - motion.row(t - 1)[j]);
                g.row_mut(t)[j] += vs * e;
                g.row_mut(t - 1)[j] -= vs * e;
            }
        }
    }
    g
}
