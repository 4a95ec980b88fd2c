use alloc::format;
use alloc::string::String;

use crate::numerics::{gemm_nn, gemm_nt, gemm_tn, rng, Module, Param, Real, Tensor, Trainable};
use crate::Result;

/// Low-rank additive update `(α/r)·B·A` on a frozen weight.
#[derive(Clone, Debug)]
pub struct LoraAdapter<T> {
    pub a: Param<T>,
    pub b: Param<T>,
    pub rank: usize,
    pub alpha: f64,
}

impl<T: Real> LoraAdapter<T> {
    pub fn scale(&self) -> T {
        T::of(self.alpha / self.rank as f64)
    }
}

/// A bias-free projection `y = x·Wᵀ` with an optional adapter.
#[derive(Clone, Debug)]
pub struct AdaptedLinear<T> {
    pub name: String,
    pub weight: Param<T>,
    pub lora: Option<LoraAdapter<T>>,
}

impl<T: Real> AdaptedLinear<T> {
    pub fn new(name: &str, d_in: usize, d_out: usize, std: f64, r: &mut rng::Rng) -> Self {
        Self {
            name: name.into(),
            weight: Param::new(format!("{name}.weight"), Tensor::randn([d_out, d_in], std, r)),
            lora: None,
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn d_out(&self) -> usize {
        self.weight.value.rows()
    }

    /// `A ~ N(0, 0.02²)`, `B = 0`.
    pub fn attach(&mut self, rank: usize, alpha: f64, r: &mut rng::Rng) {
        let (d_in, d_out) = (self.d_in(), self.d_out());
        self.lora = Some(LoraAdapter {
            a: Param::new(format!("{}.lora_a", self.name), Tensor::randn([rank, d_in], 0.02, r)),
            b: Param::new(format!("{}.lora_b", self.name), Tensor::zeros([d_out, rank])),
            rank,
            alpha,
        });
    }

    /// Folds the adapter into the weight and drops it.
    pub fn merge(&mut self) {
        if let Some(l) = self.lora.take() {
            let (d_out, d_in, r) = (self.d_out(), self.d_in(), l.rank);
            let mut ba = Tensor::zeros([d_out, d_in]);
            gemm_nn(l.b.value.data(), l.a.value.data(), ba.data_mut(), d_out, r, d_in);
            self.weight.value.axpy(l.scale(), &ba).expect("merge shapes");
        }
    }

    /// Returns the output and, when adapted, `x·Aᵀ` for the backward pass.
    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, Option<Tensor<T>>) {
        let n = x.rows();
        let (d_in, d_out) = (self.d_in(), self.d_out());
        let mut y = Tensor::zeros([n, d_out]);
        gemm_nt(x.data(), self.weight.value.data(), y.data_mut(), n, d_in, d_out);
        let Some(l) = &self.lora else { return (y, None) };
        let mut xa = Tensor::zeros([n, l.rank]);
        gemm_nt(x.data(), l.a.value.data(), xa.data_mut(), n, d_in, l.rank);
        let mut delta = Tensor::zeros([n, d_out]);
        gemm_nt(xa.data(), l.b.value.data(), delta.data_mut(), n, l.rank, d_out);
        y.axpy(l.scale(), &delta).expect("lora shapes");
        (y, Some(xa))
    }

    pub fn backward(&mut self, x: &Tensor<T>, xa: Option<&Tensor<T>>, g: &Tensor<T>) -> Result<Tensor<T>> {
        let n = x.rows();
        let (d_in, d_out) = (self.d_in(), self.d_out());
        if self.weight.trainable != Trainable::Frozen {
            gemm_tn(g.data(), x.data(), self.weight.grad.data_mut(), d_out, n, d_in);
        }
        let mut gx = Tensor::zeros([n, d_in]);
        gemm_nn(g.data(), self.weight.value.data(), gx.data_mut(), n, d_out, d_in);
        if let (Some(l), Some(xa)) = (&mut self.lora, xa) {
            let (r, s) = (l.rank, l.scale());
            let mut gs = g.clone();
            gs.scale(s);
            gemm_tn(gs.data(), xa.data(), l.b.grad.data_mut(), d_out, n, r);
            let mut gxa = Tensor::zeros([n, r]);
            gemm_nn(gs.data(), l.b.value.data(), gxa.data_mut(), n, d_out, r);
            gemm_tn(gxa.data(), x.data(), l.a.grad.data_mut(), r, n, d_in);
            gemm_nn(gxa.data(), l.a.value.data(), gx.data_mut(), n, r, d_in);
        }
        Ok(gx)
    }
}

impl<T: Real> Module<T> for AdaptedLinear<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.weight);
        if let Some(l) = &self.lora {
            f(&l.a);
            f(&l.b);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        if let Some(l) = &mut self.lora {
            f(&mut l.a);
            f(&mut l.b);
        }
    }
}
