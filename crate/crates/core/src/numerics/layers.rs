//! Parameterized layers. Each `backward` accumulates parameter gradients and
//! returns the gradient with respect to the layer input.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::ops::{self, gemm_nn, gemm_nt, gemm_tn, NormCache};
use super::param::{Module, Param};
use super::real::Real;
use super::rng::Rng;
use super::tensor::Tensor;
use crate::Result;

/// `y = x·Wᵀ + b` with `W: [out × in]`.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new(name: &str, d_in: usize, d_out: usize, bias: bool, std: f64, rng: &mut Rng) -> Self {
        Self {
            weight: Param::new(format!("{name}.weight"), Tensor::randn([d_out, d_in], std, rng)),
            bias: bias.then(|| Param::new(format!("{name}.bias"), Tensor::zeros([d_out]))),
        }
    }

    /// Kaiming-uniform-like scale `1/sqrt(d_in)`.
    pub fn default_std(d_in: usize) -> f64 {
        1.0 / libm::sqrt(d_in as f64)
    }

    pub fn d_in(&self) -> usize {
        self.weight.value.dims()[1]
    }

    pub fn d_out(&self) -> usize {
        self.weight.value.dims()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let (n, d_in, d_out) = (x.rows(), self.d_in(), self.d_out());
        debug_assert_eq!(x.cols(), d_in);
        let mut y = Tensor::zeros([n, d_out]);
        if let Some(b) = &self.bias {
            for i in 0..n {
                y.row_mut(i).copy_from_slice(b.value.data());
            }
        }
        gemm_nt(x.data(), self.weight.value.data(), y.data_mut(), n, d_in, d_out);
        y
    }

    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
        let (n, d_in, d_out) = (x.rows(), self.d_in(), self.d_out());
        gemm_tn(grad_out.data(), x.data(), self.weight.grad.data_mut(), d_out, n, d_in);
        if let Some(b) = &mut self.bias {
            for i in 0..n {
                for (g, &v) in b.grad.data_mut().iter_mut().zip(grad_out.row(i)) {
                    *g += v;
                }
            }
        }
        let mut gx = Tensor::zeros([n, d_in]);
        gemm_nn(grad_out.data(), self.weight.value.data(), gx.data_mut(), n, d_out, d_in);
        gx
    }
}

impl<T: Real> Module<T> for Linear<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

/// Temporal convolution over `[L × C_in]`.
#[derive(Clone, Debug)]
pub struct Conv1d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Real> Conv1d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(name: &str, c_in: usize, c_out: usize, k: usize, stride: usize, padding: usize, rng: &mut Rng) -> Self {
        let std = 1.0 / libm::sqrt((c_in * k) as f64);
        Self {
            weight: Param::new(format!("{name}.weight"), Tensor::randn([c_out, c_in, k], std, rng)),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros([c_out])),
            stride,
            padding,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::conv1d(x, &self.weight.value, &self.bias.value, self.stride, self.padding)
    }

    pub fn backward(&mut self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = ops::conv1d_backward(x, &self.weight.value, self.stride, self.padding, grad_out)?;
        self.weight.grad.add_assign(&g.weight)?;
        self.bias.grad.add_assign(&g.bias)?;
        Ok(g.input)
    }
}

impl<T: Real> Module<T> for Conv1d<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.weight);
        f(&self.bias);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

/// Single-group normalization with per-channel affine.
#[derive(Clone, Debug)]
pub struct GroupNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub eps: f64,
}

impl<T: Real> GroupNorm<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.weight"), Tensor::filled([channels], T::one())),
            beta: Param::new(format!("{name}.bias"), Tensor::zeros([channels])),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, NormCache<T>)> {
        ops::groupnorm1(x, &self.gamma.value, &self.beta.value, T::of(self.eps))
    }

    pub fn backward(&mut self, cache: &NormCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (gx, gg, gb) = ops::groupnorm1_backward(cache, &self.gamma.value, grad_out);
        self.gamma.grad.add_assign(&gg)?;
        self.beta.grad.add_assign(&gb)?;
        Ok(gx)
    }
}

impl<T: Real> Module<T> for GroupNorm<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.gamma);
        f(&self.beta);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

#[derive(Clone, Debug)]
pub enum SeqLayer<T> {
    Conv(Conv1d<T>),
    Relu,
    Upsample(usize),
}

/// A temporal stack of convolutions, activations and upsampling.
#[derive(Clone, Debug)]
pub struct Sequential<T> {
    pub name: String,
    pub layers: Vec<SeqLayer<T>>,
}

/// Inputs of every layer, kept for the backward pass.
pub struct SeqCache<T> {
    inputs: Vec<Tensor<T>>,
}

impl<T: Real> Sequential<T> {
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, SeqCache<T>)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let next = match layer {
                SeqLayer::Conv(c) => c.forward(&h)?,
                SeqLayer::Relu => ops::relu(&h),
                SeqLayer::Upsample(f) => ops::upsample_nearest(&h, *f)?,
            };
            inputs.push(core::mem::replace(&mut h, next));
        }
        Ok((h, SeqCache { inputs }))
    }

    pub fn backward(&mut self, cache: &SeqCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = grad_out.clone();
        for (layer, input) in self.layers.iter_mut().zip(&cache.inputs).rev() {
            g = match layer {
                SeqLayer::Conv(c) => c.backward(input, &g)?,
                SeqLayer::Relu => ops::relu_backward(input, &g),
                SeqLayer::Upsample(f) => ops::upsample_nearest_backward(&g, *f)?,
            };
        }
        Ok(g)
    }
}

impl<T: Real> Module<T> for Sequential<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        for l in &self.layers {
            if let SeqLayer::Conv(c) = l {
                c.visit(f);
            }
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        for l in &mut self.layers {
            if let SeqLayer::Conv(c) = l {
                c.visit_mut(f);
            }
        }
    }
}
