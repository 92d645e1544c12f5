use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Named parameters in registration order. Initialization draws from one
/// seeded stream, so the same registration sequence and seed always produce
/// the same values.
#[derive(Clone, Debug)]
pub struct ParameterStore<T: Scalar> {
    params: IndexMap<String, Tensor<T>>,
    seed: u64,
    rng: ChaCha8Rng,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            params: IndexMap::new(),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::Argument(format!("parameter `{name}` registered twice")));
        }
        self.params.insert(name.to_string(), value);
        Ok(())
    }

    /// Weight of shape `fan_in x fan_out`, uniform in `±1/sqrt(fan_in)`.
    pub fn init_weight(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<()> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| T::lit(self.rng.gen_range(-bound..=bound)))
            .collect();
        self.insert(name, Tensor::matrix(fan_in, fan_out, data)?)
    }

    /// Uniform `±bound` matrix; used for embedding tables.
    pub fn init_uniform(&mut self, name: &str, rows: usize, cols: usize, bound: f64) -> Result<()> {
        let data = (0..rows * cols)
            .map(|_| T::lit(self.rng.gen_range(-bound..=bound)))
            .collect();
        self.insert(name, Tensor::matrix(rows, cols, data)?)
    }

    pub fn init_constant(&mut self, name: &str, len: usize, value: f64) -> Result<()> {
        self.insert(name, Tensor::full(&[len], T::lit(value)))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn zero_grads(&mut self) {
        self.params.values_mut().for_each(Tensor::zero_grad);
    }

    /// `p <- p - lr (grad + weight_decay p)` for every parameter, then clears
    /// the gradients. Every parameter must carry a gradient.
    pub fn sgd_step(&mut self, lr: f64, weight_decay: f64) -> Result<()> {
        if let Some((name, _)) = self.params.iter().find(|(_, p)| p.grad().is_none()) {
            return Err(Error::Training(format!("parameter `{name}` has no gradient")));
        }
        let (lr, wd) = (T::lit(lr), T::lit(weight_decay));
        for p in self.params.values_mut() {
            let g = p.grad().expect("checked above").to_vec();
            for (x, gi) in p.data_mut().iter_mut().zip(g) {
                *x -= lr * (gi + wd * *x);
            }
            p.zero_grad();
        }
        Ok(())
    }

    /// Copies values (not gradients) from a store with the same layout.
    pub fn load_values(&mut self, other: &ParameterStore<T>) -> Result<()> {
        for (name, p) in self.params.iter_mut() {
            let src = other
                .get(name)
                .ok_or_else(|| Error::Argument(format!("missing parameter `{name}`")))?;
            if src.shape() != p.shape() {
                return Err(Error::Shape(format!(
                    "`{name}`: {:?} vs {:?}",
                    src.shape(),
                    p.shape()
                )));
            }
            p.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}
