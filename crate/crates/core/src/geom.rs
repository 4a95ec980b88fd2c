//! Point-cloud geometry encoder: shared per-point maps with single-group
//! normalization, symmetric max/mean pooling and an MLP head.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::numerics::{relu, relu_backward, GroupNorm, Linear, Module, NormCache, Param, Real, Tensor};
use crate::numerics::rng;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeomEncoderConfig {
    pub conv_widths: Vec<usize>,
    pub mlp_hidden: Vec<usize>,
    pub d_model: usize,
}

impl GeomEncoderConfig {
    pub fn desk(d_model: usize) -> Self {
        Self {
            conv_widths: vec![64, 128, 256],
            mlp_hidden: vec![128, 128],
            d_model,
        }
    }

    pub fn paper() -> Self {
        Self {
            conv_widths: vec![64, 128, 256],
            mlp_hidden: vec![2048, 4096],
            d_model: 4096,
        }
    }

    pub fn pooled(&self) -> usize {
        2 * self.conv_widths.last().copied().unwrap_or(3)
    }

    /// Weights, biases and norm affines of the whole stack.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        let mut c = 3;
        for &w in &self.conv_widths {
            n += c * w + w + 2 * w;
            c = w;
        }
        let mut h = self.pooled();
        for (i, &w) in self.mlp_hidden.iter().chain([self.d_model].iter()).enumerate() {
            n += h * w + w;
            if i < self.mlp_hidden.len() {
                n += 2 * w;
            }
            h = w;
        }
        n
    }
}

#[derive(Clone, Debug)]
pub struct GeomEncoder<T> {
    pub config: GeomEncoderConfig,
    pub convs: Vec<(Linear<T>, GroupNorm<T>)>,
    pub hidden: Vec<(Linear<T>, GroupNorm<T>)>,
    pub out: Linear<T>,
}

struct Stage<T> {
    input: Tensor<T>,
    norm: NormCache<T>,
    pre_relu: Tensor<T>,
}

pub struct GeomCache<T> {
    convs: Vec<Stage<T>>,
    argmax: Vec<usize>,
    n: usize,
    hidden: Vec<Stage<T>>,
    out_input: Tensor<T>,
}

impl<T: Real> GeomEncoder<T> {
    pub fn new(config: GeomEncoderConfig, r: &mut rng::Rng) -> Self {
        let mut c = 3;
        let mut convs = Vec::new();
        for (i, &w) in config.conv_widths.iter().enumerate() {
            convs.push((
                Linear::new(&format!("geom.conv{i}"), c, w, true, Linear::<T>::default_std(c), r),
                GroupNorm::new(&format!("geom.conv_norm{i}"), w),
            ));
            c = w;
        }
        let mut h = config.pooled();
        let mut hidden = Vec::new();
        for (i, &w) in config.mlp_hidden.iter().enumerate() {
            hidden.push((
                Linear::new(&format!("geom.mlp{i}"), h, w, true, Linear::<T>::default_std(h), r),
                GroupNorm::new(&format!("geom.mlp_norm{i}"), w),
            ));
            h = w;
        }
        let out = Linear::new("geom.out", h, config.d_model, true, Linear::<T>::default_std(h), r);
        Self { config, convs, hidden, out }
    }

    fn stage(lin: &Linear<T>, gn: &GroupNorm<T>, x: Tensor<T>) -> Result<(Tensor<T>, Stage<T>)> {
        let y = lin.forward(&x);
        let (z, norm) = gn.forward(&y)?;
        Ok((relu(&z), Stage { input: x, norm, pre_relu: z }))
    }

    fn stage_back(lin: &mut Linear<T>, gn: &mut GroupNorm<T>, s: &Stage<T>, g: &Tensor<T>) -> Result<Tensor<T>> {
        let g = relu_backward(&s.pre_relu, g);
        let g = gn.backward(&s.norm, &g)?;
        Ok(lin.backward(&s.input, &g))
    }

    pub fn forward(&self, points: &Tensor<T>) -> Result<(Tensor<T>, GeomCache<T>)> {
        if points.is_empty() || points.cols() != 3 {
            return Err(Error::EmptyCloud);
        }
        let n = points.rows();
        let mut h = points.clone();
        let mut convs = Vec::new();
        for (lin, gn) in &self.convs {
            let (next, s) = Self::stage(lin, gn, h)?;
            convs.push(s);
            h = next;
        }
        let c = h.cols();
        let mut pooled = Tensor::zeros([1, 2 * c]);
        let mut argmax = vec![0; c];
        for j in 0..c {
            let mut best = h.row(0)[j];
            let mut sum = T::zero();
            for i in 0..n {
                let v = h.row(i)[j];
                if v > best {
                    best = v;
                    argmax[j] = i;
                }
                sum += v;
            }
            pooled.data_mut()[j] = best;
            pooled.data_mut()[c + j] = sum / T::of(n as f64);
        }
        let mut h = pooled;
        let mut hidden = Vec::new();
        for (lin, gn) in &self.hidden {
            let (next, s) = Self::stage(lin, gn, h)?;
            hidden.push(s);
            h = next;
        }
        let y = self.out.forward(&h);
        Ok((
            y,
            GeomCache {
                convs,
                argmax,
                n,
                hidden,
                out_input: h,
            },
        ))
    }

    pub fn encode(&self, points: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(points)?.0)
    }

    /// Accumulates parameter gradients for `grad_out` of shape `1 × d_model`.
    pub fn backward(&mut self, cache: &GeomCache<T>, grad_out: &Tensor<T>) -> Result<()> {
        let mut g = self.out.backward(&cache.out_input, grad_out);
        for ((lin, gn), s) in self.hidden.iter_mut().zip(&cache.hidden).rev() {
            g = Self::stage_back(lin, gn, s, &g)?;
        }
        let c = cache.argmax.len();
        let n = cache.n;
        let inv_n = T::one() / T::of(n as f64);
        let mut gh = Tensor::zeros([n, c]);
        for j in 0..c {
            gh.row_mut(cache.argmax[j])[j] += g.data()[j];
            let gm = g.data()[c + j] * inv_n;
            for i in 0..n {
                gh.row_mut(i)[j] += gm;
            }
        }
        let mut g = gh;
        for ((lin, gn), s) in self.convs.iter_mut().zip(&cache.convs).rev() {
            g = Self::stage_back(lin, gn, s, &g)?;
        }
        Ok(())
    }
}

impl<T: Real> Module<T> for GeomEncoder<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        for (l, g) in self.convs.iter().chain(&self.hidden) {
            l.visit(f);
            g.visit(f);
        }
        self.out.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        for (l, g) in self.convs.iter_mut().chain(self.hidden.iter_mut()) {
            l.visit_mut(f);
            g.visit_mut(f);
        }
        self.out.visit_mut(f);
    }
}

/// `N × 3` tensor of a cloud's points.
pub fn points_tensor<T: Real>(points: &[[f32; 3]]) -> Result<Tensor<T>> {
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Tensor::new([points.len(), 3], points.iter().flat_map(|p| p.map(|v| T::of(v as f64))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_pointcloud, ShapeTag};
    use crate::numerics::{finite_diff_grad, relative_error};

    fn cloud(n: usize, seed: u64) -> Tensor<f32> {
        points_tensor(&make_pointcloud(ShapeTag::Box, n, seed, [0.1, 0.2, 0.15]).points).unwrap()
    }

    #[test]
    fn output_dims_for_any_size() {
        let enc = GeomEncoder::<f32>::new(GeomEncoderConfig::desk(64), &mut rng::seeded(0));
        for n in [4, 64, 340] {
            assert_eq!(enc.encode(&cloud(n, 1)).unwrap().dims(), &[1, 64]);
        }
        assert_eq!(points_tensor::<f32>(&[]), Err(Error::EmptyCloud));
    }

    #[test]
    fn permutation_and_duplication_invariance() {
        let mut r = rng::seeded(1);
        let enc = GeomEncoder::<f32>::new(GeomEncoderConfig::desk(64), &mut r);
        let x = cloud(64, 2);
        let y = enc.encode(&x).unwrap();
        for _ in 0..50 {
            let mut order: Vec<usize> = (0..64).collect();
            rng::shuffle(&mut r, &mut order);
            let p = Tensor::from_fn([64, 3], |i| x.row(order[i / 3])[i % 3]);
            assert!(enc.encode(&p).unwrap().max_abs_diff(&y) < 1e-5);
        }
        let twice = Tensor::from_fn([128, 3], |i| x.data()[i % (64 * 3)]);
        assert!(enc.encode(&twice).unwrap().max_abs_diff(&y) < 1e-5);
    }

    #[test]
    fn paper_scale_parameter_count() {
        let n = GeomEncoderConfig::paper().param_count();
        assert!((n as f64 - 24e6).abs() <= 0.2 * 24e6, "{n}");
        let small = GeomEncoderConfig::desk(16);
        let enc = GeomEncoder::<f32>::new(small.clone(), &mut rng::seeded(0));
        assert_eq!(enc.param_count(), small.param_count());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = GeomEncoderConfig {
            conv_widths: vec![4, 5, 6],
            mlp_hidden: vec![5, 4],
            d_model: 3,
        };
        let mut r = rng::seeded(3);
        for _ in 0..20 {
            let mut enc = GeomEncoder::<f64>::new(cfg.clone(), &mut r);
            enc.visit_mut(&mut |p| {
                if p.name.contains("norm") {
                    p.value = Tensor::randn(p.value.dims().to_vec(), 0.5, &mut rng::seeded(p.name.len() as u64));
                }
            });
            let x = Tensor::<f64>::randn([7, 3], 1.0, &mut r);
            let head = Tensor::<f64>::randn([1, 3], 1.0, &mut r);
            let (_, cache) = enc.forward(&x).unwrap();
            enc.zero_grad();
            enc.backward(&cache, &head).unwrap();
            let probe = |e: &GeomEncoder<f64>| e.encode(&x).unwrap().data().iter().zip(head.data()).map(|(a, b)| a * b).sum::<f64>();
            for name in ["geom.conv0.weight", "geom.conv_norm1.weight", "geom.mlp0.weight", "geom.mlp_norm1.bias", "geom.out.weight"] {
                let mut value = None;
                let mut grad = None;
                enc.visit(&mut |p| {
                    if p.name == name {
                        value = Some(p.value.clone());
                        grad = Some(p.grad.clone());
                    }
                });
                let numeric = finite_diff_grad(
                    |w| {
                        let mut e2 = enc.clone();
                        e2.with_param_mut(name, &mut |p| p.value = w.clone());
                        probe(&e2)
                    },
                    &value.unwrap(),
                    1e-6,
                )
                .unwrap();
                assert!(relative_error(&grad.unwrap(), &numeric) < 1e-4, "{name}");
            }
        }
    }
}
