use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam moments for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Self {
        Self { config, step: 0, m: params.zeros_like(), v: params.zeros_like() }
    }

    /// One descent step of size `lr` along `grads`.
    pub fn update(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>, lr: f64) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.config.beta1, self.config.beta2);
        let bc1 = 1.0 - b1.powi(t);
        let bc2 = 1.0 - b2.powi(t);
        let step_size = T::of(lr * bc2.sqrt() / bc1);
        let eps = T::of(self.config.eps * bc2.sqrt());
        let (b1t, b2t) = (T::of(b1), T::of(b2));
        let (one_m_b1, one_m_b2) = (T::of(1.0 - b1), T::of(1.0 - b2));
        for (name, p) in params.iter_mut() {
            let g = grads.get(name).ok_or_else(|| Error::shape(format!("no gradient for {name}")))?;
            let m = self.m.get_mut(name).ok_or_else(|| Error::shape(format!("no moment for {name}")))?;
            for (mi, &gi) in m.data_mut().iter_mut().zip(g.data()) {
                *mi = b1t * *mi + one_m_b1 * gi;
            }
            let v = self.v.get_mut(name).ok_or_else(|| Error::shape(format!("no moment for {name}")))?;
            for (vi, &gi) in v.data_mut().iter_mut().zip(g.data()) {
                *vi = b2t * *vi + one_m_b2 * gi * gi;
            }
            let m = self.m.get(name).expect("present");
            let v = self.v.get(name).expect("present");
            for ((pi, &mi), &vi) in p.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
                *pi -= step_size * mi / (vi.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn first_step_moves_each_coordinate_by_lr() {
        // With bias correction the first Adam step is lr * sign(g).
        let mut p = ParamSet::<f64>::new();
        p.insert("w", Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap());
        let mut g = ParamSet::<f64>::new();
        g.insert("w", Tensor::from_vec(&[3], vec![0.5, -2.0, 1e-3]).unwrap());
        let mut adam = Adam::new(&p, AdamConfig::default());
        adam.update(&mut p, &g, 0.1).unwrap();
        let got = p.get("w").unwrap().data();
        assert!((got[0] - 0.9).abs() < 1e-6);
        assert!((got[1] - 2.1).abs() < 1e-6);
        assert!((got[2] - 2.9).abs() < 1e-4);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = ParamSet::<f64>::new();
        p.insert("x", Tensor::from_vec(&[2], vec![3.0, -4.0]).unwrap());
        let mut adam = Adam::new(&p, AdamConfig { beta1: 0.9, ..AdamConfig::default() });
        for _ in 0..2000 {
            let x = p.get("x").unwrap().clone();
            let mut g = ParamSet::new();
            g.insert("x", x.map(|v| 2.0 * v));
            adam.update(&mut p, &g, 0.05).unwrap();
        }
        assert!(p.get("x").unwrap().data().iter().all(|v| v.abs() < 1e-2));
    }
}
