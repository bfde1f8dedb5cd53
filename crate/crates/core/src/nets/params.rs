use std::collections::BTreeMap;

use rand::Rng;

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-parameter gradients keyed by parameter name.
pub type Grads<T> = BTreeMap<String, Vec<T>>;

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T> {
    entries: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.entries.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor<T>> {
        self.entries.remove(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(|t| t.len()).sum()
    }

    /// Entries whose name starts with `prefix`.
    pub fn with_prefix(&self, prefix: &str) -> ParamSet<T> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn extend(&mut self, other: ParamSet<T>) {
        self.entries.extend(other.entries);
    }

    /// Replaces every parameter with the same-named entry of `source`,
    /// failing if any name is missing or any shape differs.
    pub fn load_from(&mut self, source: &ParamSet<T>) -> Result<()> {
        for (name, tensor) in &self.entries {
            let other = source.get(name).ok_or_else(|| {
                Error::Checkpoint(format!("parameter {name} missing from checkpoint"))
            })?;
            if other.shape() != tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name}: checkpoint shape {:?}, model shape {:?}",
                    other.shape(),
                    tensor.shape()
                )));
            }
        }
        for (name, tensor) in self.entries.iter_mut() {
            *tensor = source.entries[name].clone();
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|(name, t)| {
                let v = if trainable {
                    tape.leaf(t.clone().with_requires_grad(true))
                } else {
                    tape.constant(t.clone())
                };
                (name.clone(), v)
            })
            .collect();
        Bound { vars }
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }
}

/// Parameter names mapped to their variables on one tape.
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Usage(format!("parameter {name} is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    /// Takes the gradients of every bound parameter after backward.
    pub fn take_grads<T: Scalar>(&self, tape: &mut Tape<T>) -> Grads<T> {
        self.vars
            .iter()
            .filter_map(|(name, &v)| tape.take_grad(v).map(|g| (name.clone(), g)))
            .collect()
    }
}

/// One convolution layer's hyperparameters; weights live in a
/// [`ParamSet`] under `<name>.weight` / `<name>.bias`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize, kernel: usize, stride: usize) -> Self {
        Self {
            name: name.into(),
            cin,
            cout,
            kernel,
            stride,
            padding: kernel / 2,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn out_extent(&self, extent: usize) -> usize {
        (extent + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// Uniform fan-in initialization: weights in `±gain·sqrt(3 / fan_in)`,
    /// biases zero.
    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, params: &mut ParamSet<T>, gain: f64, rng: &mut R) {
        let fan_in = (self.cin * self.kernel * self.kernel) as f64;
        let bound = gain * (3.0 / fan_in).sqrt();
        let shape = [self.cout, self.cin, self.kernel, self.kernel];
        params.insert(self.weight_name(), Tensor::uniform(&shape, -bound, bound, rng));
        params.insert(self.bias_name(), Tensor::zeros(&[self.cout]));
    }

    pub fn apply<T: Scalar>(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        let w = bound.get(&self.weight_name())?;
        let b = bound.get(&self.bias_name())?;
        tape.conv2d(x, w, b, self.stride, self.padding)
    }
}

/// He-style gain for a leaky ReLU with the given negative slope.
pub(crate) fn leaky_gain(slope: f64) -> f64 {
    (2.0 / (1.0 + slope * slope)).sqrt()
}
