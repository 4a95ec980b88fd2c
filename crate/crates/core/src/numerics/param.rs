use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::real::Real;
use super::tensor::Tensor;
use crate::{Error, Result};

/// Which elements of a parameter the optimizer may touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trainable {
    All,
    Frozen,
    /// Rows `r..` are trainable, rows `..r` are frozen.
    RowsFrom(usize),
}

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub trainable: Trainable,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.dims().to_vec());
        Self {
            name: name.into(),
            value,
            grad,
            trainable: Trainable::All,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    /// First flat index the optimizer updates (`len()` when frozen).
    pub fn trainable_start(&self) -> usize {
        match self.trainable {
            Trainable::All => 0,
            Trainable::Frozen => self.value.len(),
            Trainable::RowsFrom(r) => (r * self.value.cols()).min(self.value.len()),
        }
    }

    pub fn trainable_len(&self) -> usize {
        self.value.len() - self.trainable_start()
    }
}

/// A container of named parameters.
pub trait Module<T: Real> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>));

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |p| p.zero_grad());
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.value.len());
        n
    }

    fn trainable_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.trainable_len());
        n
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit(&mut |p| names.push(p.name.clone()));
        names
    }

    /// Values of every parameter as 32-bit tensors, in visiting order.
    fn state(&self) -> Vec<(String, Tensor<f32>)> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push((p.name.clone(), p.value.cast())));
        out
    }

    /// Loads every parameter from `entries`; extra entries are ignored.
    fn load_state(&mut self, entries: &BTreeMap<String, Tensor<f32>>) -> Result<()> {
        let mut err = None;
        self.visit_mut(&mut |p| {
            if err.is_some() {
                return;
            }
            match entries.get(&p.name) {
                None => err = Some(Error::Config(format!("checkpoint lacks parameter `{}`", p.name))),
                Some(t) if t.dims() != p.value.dims() => {
                    err = Some(Error::Shape {
                        op: "load_state",
                        left: t.dims().to_vec(),
                        right: p.value.dims().to_vec(),
                    })
                }
                Some(t) => p.value = t.cast(),
            }
        });
        err.map_or(Ok(()), Err)
    }

    /// Mutable access to one parameter's value by name.
    fn with_param_mut(&mut self, name: &str, f: &mut dyn FnMut(&mut Param<T>)) -> bool {
        let mut found = false;
        self.visit_mut(&mut |p| {
            if p.name == name {
                found = true;
                f(p);
            }
        });
        found
    }
}
