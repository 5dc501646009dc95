use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{Debug, Display};
use core::iter::Sum;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Gradients;
use crate::{Error, Result};

/// Floating point element type. `f32` is used for training and inference,
/// `f64` for gradient checks.
pub trait Scalar:
    Float + Debug + Display + Default + Send + Sync + 'static + AddAssign + SubAssign + MulAssign + DivAssign + Sum<Self>
{
    fn of(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: alloc::vec![T::zero(); n], grad: None }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                detail: format!("shape {shape:?} needs {n} elements, got {}", data.len()),
            });
        }
        Ok(Self { shape: shape.to_vec(), data, grad: None })
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Columns of the matrix view: the last dimension.
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Rows of the matrix view: the product of all leading dimensions.
    pub fn rows(&self) -> usize {
        if self.cols() == 0 {
            0
        } else {
            self.numel() / self.cols()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform on `(-bound, bound)`.
    Uniform(f64),
    /// Uniform with bound `sqrt(6 / (fan_in + fan_out))`.
    Glorot {
        fan_in: usize,
        fan_out: usize,
    },
}

/// Named trainable tensors. Initialization of each tensor is seeded from the
/// store seed and the tensor name, so a parameter gets the same initial value
/// regardless of which other parameters exist.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: BTreeMap<String, ParamId>,
    seed: u64,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl<T: Scalar> ParamStore<T> {
    pub fn new(seed: u64) -> Self {
        Self { names: Vec::new(), tensors: Vec::new(), index: BTreeMap::new(), seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub(super) fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        let mut t = Tensor::zeros(shape);
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed ^ name_hash(name)));
        let bound = match init {
            Init::Zeros => None,
            Init::Ones => {
                t.data.fill(T::one());
                None
            }
            Init::Uniform(b) => Some(b),
            Init::Glorot { fan_in, fan_out } => Some(Float::sqrt(6.0 / (fan_in + fan_out).max(1) as f64)),
        };
        if let Some(b) = bound {
            for v in &mut t.data {
                *v = T::of(rng.gen_range(-b..b));
            }
        }
        Ok(self.insert(name.to_string(), t))
    }

    /// Inserts a tensor with an explicit value.
    pub fn insert(&mut self, name: String, tensor: Tensor<T>) -> ParamId {
        let id = ParamId(self.tensors.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// (name, tensor) pairs in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> + '_ {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Scalar count of every parameter whose name starts with `prefix`.
    pub fn num_parameters_with_prefix(&self, prefix: &str) -> usize {
        self.iter().filter(|(n, _)| n.starts_with(prefix)).map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            t.grad = None;
        }
    }

    /// Adds `scale * grads` into the gradient buffers.
    pub fn accumulate(&mut self, grads: &Gradients<T>, scale: T) {
        for (id, g) in grads.iter() {
            let t = &mut self.tensors[id.0];
            let buf = t.grad.get_or_insert_with(|| alloc::vec![T::zero(); t.data.len()]);
            for (b, &v) in buf.iter_mut().zip(g) {
                *b += scale * v;
            }
        }
    }

    /// Converts element type, dropping gradients.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let tensors = self
            .tensors
            .iter()
            .map(|t| Tensor {
                shape: t.shape.clone(),
                data: t.data.iter().map(|v| U::of(v.as_f64())).collect(),
                grad: None,
            })
            .collect();
        ParamStore { names: self.names.clone(), tensors, index: self.index.clone(), seed: self.seed }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_name_keyed() {
        let mut a = ParamStore::<f32>::new(7);
        a.add("x", &[3, 4], Init::Uniform(0.1)).unwrap();
        a.add("y", &[2], Init::Glorot { fan_in: 2, fan_out: 2 }).unwrap();
        let mut b = ParamStore::<f32>::new(7);
        b.add("y", &[2], Init::Glorot { fan_in: 2, fan_out: 2 }).unwrap();
        assert_eq!(a.by_name("y"), b.by_name("y"));
        assert!(a.by_name("x").unwrap().data.iter().all(|v| v.abs() < 0.1));
        assert!(a.add("x", &[1], Init::Zeros).is_err());
        assert_eq!(a.num_parameters(), 14);
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = ParamStore::<f64>::new(1);
        let mut b = ParamStore::<f64>::new(2);
        a.add("w", &[8], Init::Uniform(1.0)).unwrap();
        b.add("w", &[8], Init::Uniform(1.0)).unwrap();
        assert_ne!(a.by_name("w"), b.by_name("w"));
    }
}
