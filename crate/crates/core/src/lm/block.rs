use alloc::format;

use super::attention::{gqa_attention, gqa_attention_backward, AttnCache, Rope};
use super::config::{FfnKind, NormKind, TransformerConfig};
use super::lora::AdaptedLinear;
use crate::numerics::{
    gelu, gelu_backward, layer_norm, layer_norm_backward, rms_norm, rms_norm_backward, rng, silu, silu_backward, Module,
    NormCache, Param, Real, Tensor,
};
use crate::Result;

#[derive(Clone, Debug)]
pub struct Norm<T> {
    pub kind: NormKind,
    pub gamma: Param<T>,
    pub beta: Option<Param<T>>,
    pub eps: f64,
}

impl<T: Real> Norm<T> {
    pub fn new(name: &str, d: usize, kind: NormKind, eps: f64) -> Self {
        Self {
            kind,
            gamma: Param::new(format!("{name}.weight"), Tensor::filled([d], T::one())),
            beta: (kind == NormKind::Layer).then(|| Param::new(format!("{name}.bias"), Tensor::zeros([d]))),
            eps,
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, NormCache<T>) {
        match &self.beta {
            Some(b) => layer_norm(x, &self.gamma.value, &b.value, T::of(self.eps)),
            None => rms_norm(x, &self.gamma.value, T::of(self.eps)),
        }
    }

    pub fn backward(&mut self, cache: &NormCache<T>, g: &Tensor<T>) -> Result<Tensor<T>> {
        match &mut self.beta {
            Some(b) => {
                let (gx, gg, gb) = layer_norm_backward(cache, &self.gamma.value, g);
                self.gamma.grad.add_assign(&gg)?;
                b.grad.add_assign(&gb)?;
                Ok(gx)
            }
            None => {
                let (gx, gg) = rms_norm_backward(cache, &self.gamma.value, g);
                self.gamma.grad.add_assign(&gg)?;
                Ok(gx)
            }
        }
    }
}

impl<T: Real> Module<T> for Norm<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        f(&self.gamma);
        if let Some(b) = &self.beta {
            f(b);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.gamma);
        if let Some(b) = &mut self.beta {
            f(b);
        }
    }
}

/// Pre-norm decoder block: attention and a gated (or GELU) feed-forward,
/// each wrapped in a residual connection.
#[derive(Clone, Debug)]
pub struct Block<T> {
    pub attn_norm: Norm<T>,
    pub q: AdaptedLinear<T>,
    pub k: AdaptedLinear<T>,
    pub v: AdaptedLinear<T>,
    pub o: AdaptedLinear<T>,
    pub ffn_norm: Norm<T>,
    pub gate: Option<AdaptedLinear<T>>,
    pub up: AdaptedLinear<T>,
    pub down: AdaptedLinear<T>,
    n_q: usize,
    n_kv: usize,
}

type Lin<T> = (Tensor<T>, Option<Tensor<T>>);

pub struct BlockCache<T> {
    x: Tensor<T>,
    n1: NormCache<T>,
    h1: Tensor<T>,
    qa: Option<Tensor<T>>,
    ka: Option<Tensor<T>>,
    va: Option<Tensor<T>>,
    q: Tensor<T>,
    k: Tensor<T>,
    v: Tensor<T>,
    attn: AttnCache<T>,
    a: Lin<T>,
    n2: NormCache<T>,
    h2: Tensor<T>,
    gate: Option<Lin<T>>,
    up: Lin<T>,
    act: Lin<T>,
}

impl<T: Real> Block<T> {
    pub fn new(i: usize, c: &TransformerConfig, r: &mut rng::Rng) -> Self {
        let d = c.d_model;
        let (qd, kvd) = (c.n_q_heads * c.d_kv, c.n_kv_heads * c.d_kv);
        let s = |n: usize| 1.0 / libm::sqrt(n as f64);
        let lin = |name: &str, a, b, r: &mut rng::Rng| AdaptedLinear::new(&format!("layers.{i}.{name}"), a, b, s(a), r);
        Self {
            attn_norm: Norm::new(&format!("layers.{i}.attn_norm"), d, c.norm, c.norm_eps),
            q: lin("attn.q", d, qd, r),
            k: lin("attn.k", d, kvd, r),
            v: lin("attn.v", d, kvd, r),
            o: lin("attn.o", qd, d, r),
            ffn_norm: Norm::new(&format!("layers.{i}.ffn_norm"), d, c.norm, c.norm_eps),
            gate: (c.ffn == FfnKind::SwiGlu).then(|| lin("ffn.gate", d, c.d_ff, r)),
            up: lin("ffn.up", d, c.d_ff, r),
            down: lin("ffn.down", c.d_ff, d, r),
            n_q: c.n_q_heads,
            n_kv: c.n_kv_heads,
        }
    }

    /// The projection called `target` (`attn.q`, …, `ffn.down`).
    pub fn linear_mut(&mut self, target: &str) -> Option<&mut AdaptedLinear<T>> {
        match target {
            "attn.q" => Some(&mut self.q),
            "attn.k" => Some(&mut self.k),
            "attn.v" => Some(&mut self.v),
            "attn.o" => Some(&mut self.o),
            "ffn.gate" => self.gate.as_mut(),
            "ffn.up" => Some(&mut self.up),
            "ffn.down" => Some(&mut self.down),
            _ => None,
        }
    }

    pub fn forward(&self, x: &Tensor<T>, rope: &Rope<T>, key_valid: &[bool]) -> (Tensor<T>, BlockCache<T>) {
        let (h1, n1) = self.attn_norm.forward(x);
        let (mut q, qa) = self.q.forward(&h1);
        let (mut k, ka) = self.k.forward(&h1);
        let (v, va) = self.v.forward(&h1);
        rope.apply(&mut q, self.n_q, false);
        rope.apply(&mut k, self.n_kv, false);
        let (a, attn) = gqa_attention(&q, &k, &v, self.n_q, self.n_kv, key_valid);
        let (o, oa) = self.o.forward(&a);
        let mut x2 = x.clone();
        x2.add_assign(&o).expect("residual");
        let (h2, n2) = self.ffn_norm.forward(&x2);
        let up = self.up.forward(&h2);
        let (act, gate) = match &self.gate {
            Some(g) => {
                let gate = g.forward(&h2);
                let mut act = silu(&gate.0);
                for (a, &u) in act.data_mut().iter_mut().zip(up.0.data()) {
                    *a *= u;
                }
                (act, Some(gate))
            }
            None => (gelu(&up.0), None),
        };
        let (f, fa) = self.down.forward(&act);
        let mut x3 = x2;
        x3.add_assign(&f).expect("residual");
        (
            x3,
            BlockCache {
                x: x.clone(),
                n1,
                h1,
                qa,
                ka,
                va,
                q,
                k,
                v,
                attn,
                a: (a, oa),
                n2,
                h2,
                gate,
                up,
                act: (act, fa),
            },
        )
    }

    pub fn backward(&mut self, c: &BlockCache<T>, rope: &Rope<T>, g: &Tensor<T>) -> Result<Tensor<T>> {
        // FFN branch
        let g_act = self.down.backward(&c.act.0, c.act.1.as_ref(), g)?;
        let mut g_h2 = match (&mut self.gate, &c.gate) {
            (Some(gl), Some(gate)) => {
                let s = silu(&gate.0);
                let mut g_up = g_act.clone();
                for (gu, &sv) in g_up.data_mut().iter_mut().zip(s.data()) {
                    *gu *= sv;
                }
                let mut g_s = g_act;
                for (gs, &u) in g_s.data_mut().iter_mut().zip(c.up.0.data()) {
                    *gs *= u;
                }
                let g_gate = silu_backward(&gate.0, &g_s);
                let mut acc = gl.backward(&c.h2, gate.1.as_ref(), &g_gate)?;
                acc.add_assign(&self.up.backward(&c.h2, c.up.1.as_ref(), &g_up)?)?;
                acc
            }
            _ => {
                let g_up = gelu_backward(&c.up.0, &g_act);
                self.up.backward(&c.h2, c.up.1.as_ref(), &g_up)?
            }
        };
        g_h2 = self.ffn_norm.backward(&c.n2, &g_h2)?;
        let mut g_x2 = g.clone();
        g_x2.add_assign(&g_h2)?;

        // attention branch
        let g_a = self.o.backward(&c.a.0, c.a.1.as_ref(), &g_x2)?;
        let (mut dq, mut dk, dv) = gqa_attention_backward(&c.q, &c.k, &c.v, self.n_q, self.n_kv, &c.attn, &g_a);
        rope.apply(&mut dq, self.n_q, true);
        rope.apply(&mut dk, self.n_kv, true);
        let mut g_h1 = self.q.backward(&c.h1, c.qa.as_ref(), &dq)?;
        g_h1.add_assign(&self.k.backward(&c.h1, c.ka.as_ref(), &dk)?)?;
        g_h1.add_assign(&self.v.backward(&c.h1, c.va.as_ref(), &dv)?)?;
        let g_x = self.attn_norm.backward(&c.n1, &g_h1)?;
        let mut out = g_x2;
        out.add_assign(&g_x)?;
        debug_assert_eq!(out.dims(), c.x.dims());
        Ok(out)
    }
}

impl<T: Real> Module<T> for Block<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.attn_norm.visit(f);
        for l in [&self.q, &self.k, &self.v, &self.o] {
            l.visit(f);
        }
        self.ffn_norm.visit(f);
        if let Some(g) = &self.gate {
            g.visit(f);
        }
        self.up.visit(f);
        self.down.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.attn_norm.visit_mut(f);
        for l in [&mut self.q, &mut self.k, &mut self.v, &mut self.o] {
            l.visit_mut(f);
        }
        self.ffn_norm.visit_mut(f);
        if let Some(g) = &mut self.gate {
            g.visit_mut(f);
        }
        self.up.visit_mut(f);
        self.down.visit_mut(f);
    }
}
