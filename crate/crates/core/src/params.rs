//! Named parameter collections and their binding onto an autograd tape.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Ordered map from parameter name to tensor.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self { tensors: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self { tensors: self.tensors.iter().map(|(k, v)| (k.clone(), Tensor::zeros(v.shape()))).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|((ka, a), (kb, b))| ka == kb && a.bit_eq(b))
    }

    /// Order-sensitive 64-bit digest of every value's bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (name, t) in &self.tensors {
            for b in name.bytes() {
                h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
            }
            for v in t.data() {
                h = (h ^ v.bits()).wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet { tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect() }
    }

    /// Place every tensor on the tape; `trainable` decides whether gradients flow.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| {
                let var = if trainable { g.param(v.clone()) } else { g.constant(v.clone()) };
                (k.clone(), var)
            })
            .collect();
        Bound { vars }
    }

    /// Gradients of a bound set after [`Graph::backward`]; missing entries are zero.
    pub fn grads_from(&self, g: &Graph<T>, bound: &Bound) -> ParamSet<T> {
        let tensors = self
            .tensors
            .iter()
            .map(|(k, v)| {
                let grad = bound.vars.get(k).and_then(|&var| g.grad(var)).cloned().unwrap_or_else(|| Tensor::zeros(v.shape()));
                (k.clone(), grad)
            })
            .collect();
        ParamSet { tensors }
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        for (k, v) in self.tensors.iter_mut() {
            let o = other.get(k).ok_or_else(|| Error::shape(format!("missing parameter {k}")))?;
            if o.shape() != v.shape() {
                return Err(Error::shape(format!("parameter {k}: {:?} vs {:?}", v.shape(), o.shape())));
            }
            v.add_assign(o);
        }
        Ok(())
    }

    /// Max absolute elementwise difference, over shared names.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.tensors
            .iter()
            .filter_map(|(k, a)| other.get(k).map(|b| (a, b)))
            .flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (x.as_f64() - y.as_f64()).abs()))
            .fold(0.0, f64::max)
    }

    /// Zero-mean normal weights with std `gain / sqrt(fan_in)`.
    pub fn init_weight(&mut self, name: &str, shape: &[usize], fan_in: usize, gain: f64, rng: &mut impl Rng) {
        let std = gain / (fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let data = (0..shape.iter().product::<usize>()).map(|_| T::of(normal.sample(rng))).collect();
        self.insert(name, Tensor::from_vec(shape, data).expect("shape matches"));
    }

    pub fn init_zeros(&mut self, name: &str, shape: &[usize]) {
        self.insert(name, Tensor::zeros(shape));
    }
}

/// Tape handles for a bound [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        *self.vars.get(name).unwrap_or_else(|| panic!("parameter `{name}` not bound"))
    }

    pub fn opt(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }
}
