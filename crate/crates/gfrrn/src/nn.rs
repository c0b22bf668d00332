//! Layer building blocks on top of the tensor ops, registered into a
//! `ParamStore` through `ParamBuilder`.

use crate::params::{ParamGroup, ParamStore};
use crate::tensor::Tensor;
use ndarray::{ArrayD, IxDyn};
use rand::SeedableRng;
use sha2::{Digest, Sha256};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Parameter initialization schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zero,
    One,
    /// Normal with std sqrt(2 / fan_in); fan_in inferred from the shape
    /// (product of all dims but the first).
    Kaiming,
    Normal(f64),
}

/// Registers parameters under hierarchical names with a group tag.
pub struct ParamBuilder<'a> {
    store: &'a mut ParamStore,
    prefix: Vec<String>,
    group: ParamGroup,
    seed: u64,
}

impl<'a> ParamBuilder<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> ParamBuilder<'a> {
        ParamBuilder {
            store,
            prefix: Vec::new(),
            group: ParamGroup::Task,
            seed,
        }
    }

    pub fn group(&self) -> ParamGroup {
        self.group
    }

    pub fn set_group(&mut self, group: ParamGroup) {
        self.group = group;
    }

    /// Run `f` with `seg` pushed onto the name prefix.
    pub fn scope<T>(&mut self, seg: &str, f: impl FnOnce(&mut ParamBuilder) -> T) -> T {
        self.prefix.push(seg.to_string());
        let out = f(self);
        self.prefix.pop();
        out
    }

    /// Like `scope`, but also sets the group for the duration.
    pub fn scope_group<T>(
        &mut self,
        seg: &str,
        group: ParamGroup,
        f: impl FnOnce(&mut ParamBuilder) -> T,
    ) -> T {
        let prev = self.group;
        self.group = group;
        let out = self.scope(seg, f);
        self.group = prev;
        out
    }

    pub fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Tensor {
        let full = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix.join("."), name)
        };
        // Seed per parameter from (seed, name) so init values are a pure
        // function of the name — model variants that add or omit layers
        // still agree on every shared parameter.
        let mut hash = [0u8; 32];
        let digest = Sha256::digest(full.as_bytes());
        hash.copy_from_slice(&digest);
        hash[..8].copy_from_slice(&self.seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(hash);
        let value = match init {
            Init::Zero => ArrayD::zeros(IxDyn(shape)),
            Init::One => ArrayD::ones(IxDyn(shape)),
            Init::Kaiming => {
                let fan_in: usize = shape[1..].iter().product::<usize>().max(1);
                let std = (2.0 / fan_in as f64).sqrt();
                let dist = Normal::new(0.0, std).unwrap();
                ArrayD::from_shape_fn(IxDyn(shape), |_| dist.sample(&mut rng))
            }
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).unwrap();
                ArrayD::from_shape_fn(IxDyn(shape), |_| dist.sample(&mut rng))
            }
        };
        let tensor = Tensor::leaf(value);
        self.store.insert(full, tensor.clone(), self.group);
        tensor
    }
}

pub struct Conv2d {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        pb: &mut ParamBuilder,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        groups: usize,
        init: Init,
    ) -> Conv2d {
        pb.scope(name, |pb| Conv2d {
            weight: pb.param("weight", &[c_out, c_in / groups, kernel, kernel], init),
            bias: pb.param("bias", &[c_out], Init::Zero),
            stride,
            pad,
            groups,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.conv2d(&self.weight, Some(&self.bias), self.stride, self.pad, self.groups)
    }
}

pub struct Linear {
    pub weight: Tensor, // (out, in)
    pub bias: Tensor,
}

impl Linear {
    pub fn new(pb: &mut ParamBuilder, name: &str, c_in: usize, c_out: usize, init: Init) -> Linear {
        pb.scope(name, |pb| Linear {
            weight: pb.param("weight", &[c_out, c_in], init),
            bias: pb.param("bias", &[c_out], Init::Zero),
        })
    }

    /// Apply over the last axis of an arbitrary-rank input.
    pub fn forward(&self, x: &Tensor) -> Tensor {
        let shape = x.shape();
        let c_in = *shape.last().unwrap();
        let rows: usize = shape[..shape.len() - 1].iter().product();
        let flat = x.reshape(&[rows, c_in]);
        let out = flat.matmul(&self.weight.transpose_last()).add(&self.bias);
        let mut out_shape = shape[..shape.len() - 1].to_vec();
        out_shape.push(self.weight.shape()[0]);
        out.reshape(&out_shape)
    }
}

pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize) -> LayerNorm {
        pb.scope(name, |pb| LayerNorm {
            gamma: pb.param("gamma", &[dim], Init::One),
            beta: pb.param("beta", &[dim], Init::Zero),
            eps: 1e-6,
        })
    }

    /// Normalize over the last axis.
    pub fn forward(&self, x: &Tensor) -> Tensor {
        let last = x.shape().len() - 1;
        let mean = x.mean_axis_keep(last);
        let centered = x.sub(&mean);
        let var = centered.square().mean_axis_keep(last);
        let normed = centered.div(&var.add_scalar(self.eps).sqrt());
        normed.mul(&self.gamma).add(&self.beta)
    }
}

/// Two-layer perceptron with GELU, the transformer FFN shape.
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new(pb: &mut ParamBuilder, name: &str, dim: usize, hidden: usize) -> Mlp {
        pb.scope(name, |pb| Mlp {
            fc1: Linear::new(pb, "fc1", dim, hidden, Init::Kaiming),
            fc2: Linear::new(pb, "fc2", hidden, dim, Init::Kaiming),
        })
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        self.fc2.forward(&self.fc1.forward(x).gelu())
    }
}
