use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use super::param::Module;
use super::real::Real;
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdamWState<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub step: u64,
}

impl<T: Real> AdamWState<T> {
    pub fn new(dims: &[usize]) -> Self {
        Self {
            m: Tensor::zeros(dims.to_vec()),
            v: Tensor::zeros(dims.to_vec()),
            step: 0,
        }
    }
}

/// One decoupled-weight-decay Adam update of `value[start..]`.
pub fn adamw_step<T: Real>(
    value: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut AdamWState<T>,
    cfg: &AdamWConfig,
    start: usize,
) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (lr, decay, eps) = (T::of(cfg.lr), T::of(cfg.lr * cfg.weight_decay), T::of(cfg.eps));
    let (bc1, bc2) = (T::of(bc1), T::of(bc2));
    let (x, g) = (value.data_mut(), grad.data());
    let (m, v) = (state.m.data_mut(), state.v.data_mut());
    for i in start..x.len() {
        x[i] -= decay * x[i];
        m[i] = b1 * m[i] + (T::one() - b1) * g[i];
        v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
        let mh = m[i] / bc1;
        let vh = v[i] / bc2;
        x[i] -= lr * mh / (vh.sqrt() + eps);
    }
}

/// AdamW over every trainable parameter of a module, keyed by name.
#[derive(Clone, Debug)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    states: BTreeMap<String, AdamWState<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            states: BTreeMap::new(),
        }
    }

    pub fn state(&self, name: &str) -> Option<&AdamWState<T>> {
        self.states.get(name)
    }

    /// Applies one update; fails without touching anything if a trainable
    /// gradient is non-finite.
    pub fn step<M: Module<T> + ?Sized>(&mut self, module: &mut M) -> Result<()> {
        let mut bad = None;
        module.visit(&mut |p| {
            let start = p.trainable_start();
            if bad.is_none() && p.grad.data()[start..].iter().any(|g| !g.is_finite()) {
                bad = Some(p.name.clone());
            }
        });
        if let Some(param) = bad {
            return Err(Error::NonFiniteGradient { param });
        }
        let cfg = self.config;
        let states = &mut self.states;
        module.visit_mut(&mut |p| {
            let start = p.trainable_start();
            if start >= p.value.len() {
                return;
            }
            let state = states
                .entry(p.name.clone())
                .or_insert_with(|| AdamWState::new(p.value.dims()));
            if state.m.dims() != p.value.dims() {
                *state = AdamWState::new(p.value.dims());
            }
            adamw_step(&mut p.value, &p.grad, state, &cfg, start);
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Param;
    use alloc::vec;

    #[test]
    fn zero_gradient_without_decay_is_fixed_point() {
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut x = Tensor::<f64>::new([3], vec![1.0, -2.0, 0.5]).unwrap();
        let before = x.clone();
        let mut st = AdamWState::new(&[3]);
        for _ in 0..5 {
            adamw_step(&mut x, &Tensor::zeros([3]), &mut st, &cfg, 0);
        }
        assert_eq!(x, before);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamWConfig {
            lr: 0.01,
            weight_decay: 0.1,
            ..Default::default()
        };
        let x0 = [0.3, -1.2, 2.0];
        let g = [0.5, -0.25, 1e-3];
        let mut x = Tensor::<f64>::new([3], x0.to_vec()).unwrap();
        let mut st = AdamWState::new(&[3]);
        adamw_step(&mut x, &Tensor::new([3], g.to_vec()).unwrap(), &mut st, &cfg, 0);
        for i in 0..3 {
            let decayed = x0[i] * (1.0 - cfg.lr * cfg.weight_decay);
            let expect = decayed - cfg.lr * g[i] / (g[i].abs() + cfg.eps);
            assert!((x.data()[i] - expect).abs() < 1e-9, "{i}");
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut x = Tensor::<f64>::new([1], vec![3.0]).unwrap();
        let mut st = AdamWState::new(&[1]);
        let mut converged_at = None;
        for step in 0..500 {
            let g = Tensor::new([1], vec![2.0 * x.data()[0]]).unwrap();
            adamw_step(&mut x, &g, &mut st, &cfg, 0);
            if x.data()[0].abs() < 1e-3 && converged_at.is_none() {
                converged_at = Some(step);
            }
        }
        assert!(converged_at.is_some(), "x = {}", x.data()[0]);
        assert!(x.data()[0].abs() < 1e-3);
    }

    struct One(Param<f32>);
    impl Module<f32> for One {
        fn visit(&self, f: &mut dyn FnMut(&Param<f32>)) {
            f(&self.0)
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<f32>)) {
            f(&mut self.0)
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut m = One(Param::new("layer.weight", Tensor::zeros([2])));
        m.0.grad.data_mut()[1] = f32::NAN;
        let mut opt = AdamW::new(AdamWConfig::default());
        assert_eq!(
            opt.step(&mut m),
            Err(Error::NonFiniteGradient {
                param: "layer.weight".into()
            })
        );
    }
}
