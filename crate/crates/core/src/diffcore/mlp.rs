use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::matrix::{axpy, dot, Matrix};
use super::params::{Param, ParamStore};
use crate::seeding::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

/// Layer sizes and hidden activation of a fully connected network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        output_dim: usize,
        activation: Activation,
    ) -> Self {
        Self {
            input_dim,
            hidden_dims,
            output_dim,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() {
            return Err(Error::Config(
                "an MLP needs at least one hidden layer".into(),
            ));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!("zero-width layer in {self:?}")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in self
            .hidden_dims
            .iter()
            .chain(std::iter::once(&self.output_dim))
        {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    fn num_layers(&self) -> usize {
        self.hidden_dims.len() + 1
    }
}

/// Draws a fresh parameter set: weights uniform in `±1/sqrt(fan_in)`, zero
/// biases, zero moments, optimizer step 0.
///
/// Weights are stored `fan_in x fan_out` row-major under `layer{k}.weight`,
/// biases `1 x fan_out` under `layer{k}.bias`.
pub fn init_params(spec: &MlpSpec, rng: &mut Rng) -> Result<ParamStore> {
    spec.validate()?;
    let mut store = ParamStore::new();
    for (k, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weights = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        store.push(Param::new(
            format!("layer{k}.weight"),
            fan_in,
            fan_out,
            weights,
        )?)?;
        store.push(Param::new(
            format!("layer{k}.bias"),
            1,
            fan_out,
            vec![0.0; fan_out],
        )?)?;
    }
    Ok(store)
}

/// Re-draws every parameter and clears the optimizer state.
pub fn reset_params(store: &mut ParamStore, spec: &MlpSpec, rng: &mut Rng) -> Result<()> {
    *store = init_params(spec, rng)?;
    Ok(())
}

/// Intermediate values kept by a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Matrix,
    hidden: Vec<Matrix>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }
}

fn check_layout(store: &ParamStore, spec: &MlpSpec) -> Result<()> {
    for (k, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
        let ok = store
            .params()
            .get(2 * k)
            .is_some_and(|w| w.shape() == (fan_in, fan_out))
            && store
                .params()
                .get(2 * k + 1)
                .is_some_and(|b| b.shape() == (1, fan_out));
        if !ok {
            return Err(Error::Shape(format!(
                "parameter store does not match layer {k} of {spec:?}"
            )));
        }
    }
    Ok(())
}

fn affine(x: &Matrix, weight: &[f64], bias: &[f64], fan_out: usize) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), fan_out);
    for r in 0..x.rows() {
        let y = out.row_mut(r);
        y.copy_from_slice(bias);
        for (i, &xi) in x.row(r).iter().enumerate() {
            axpy(y, xi, &weight[i * fan_out..(i + 1) * fan_out]);
        }
    }
    out
}

/// Batched forward pass that keeps the activations needed by [`backward`].
pub fn forward_cached(
    store: &ParamStore,
    spec: &MlpSpec,
    input: &Matrix,
) -> Result<(Matrix, ForwardCache)> {
    if input.cols() != spec.input_dim {
        return Err(Error::Dimension {
            context: "network input",
            expected: spec.input_dim,
            got: input.cols(),
        });
    }
    check_layout(store, spec)?;
    let params = store.params();
    let n_layers = spec.num_layers();
    let mut hidden = Vec::with_capacity(n_layers - 1);
    let mut current = input.clone();
    for (k, (_, fan_out)) in spec.layer_dims().into_iter().enumerate() {
        let mut z = affine(
            &current,
            &params[2 * k].value,
            &params[2 * k + 1].value,
            fan_out,
        );
        if k + 1 < n_layers {
            z.as_mut_slice()
                .iter_mut()
                .for_each(|v| *v = spec.activation.apply(*v));
            hidden.push(z.clone());
        }
        current = z;
    }
    Ok((
        current,
        ForwardCache {
            input: input.clone(),
            hidden,
        },
    ))
}

pub fn forward_batch(store: &ParamStore, spec: &MlpSpec, input: &Matrix) -> Result<Matrix> {
    forward_cached(store, spec, input).map(|(out, _)| out)
}

/// Single-input forward pass. Bit-identical to the corresponding row of
/// [`forward_batch`].
pub fn forward(store: &ParamStore, spec: &MlpSpec, input: &[f64]) -> Result<Vec<f64>> {
    forward_batch(store, spec, &Matrix::row_vector(input)).map(Matrix::into_vec)
}

/// Reverse pass for `d_out = dL/d(output)`.
///
/// With `accumulate` set, parameter gradients are added into the store's
/// gradient slots. With `want_input_grad` set, `dL/d(input)` is returned.
pub fn backward(
    store: &mut ParamStore,
    spec: &MlpSpec,
    cache: &ForwardCache,
    d_out: &Matrix,
    accumulate: bool,
    want_input_grad: bool,
) -> Result<Option<Matrix>> {
    let batch = cache.batch_size();
    if d_out.rows() != batch || d_out.cols() != spec.output_dim {
        return Err(Error::Shape(format!(
            "output gradient is {}x{}, network output is {batch}x{}",
            d_out.rows(),
            d_out.cols(),
            spec.output_dim
        )));
    }
    check_layout(store, spec)?;
    let dims = spec.layer_dims();
    let params = store.params_mut();
    let mut delta = d_out.clone();
    for k in (0..dims.len()).rev() {
        let (fan_in, fan_out) = dims[k];
        let x = if k == 0 {
            &cache.input
        } else {
            &cache.hidden[k - 1]
        };
        if accumulate {
            let w = &mut params[2 * k];
            for r in 0..batch {
                let d = delta.row(r);
                for (i, &xi) in x.row(r).iter().enumerate() {
                    axpy(&mut w.grad[i * fan_out..(i + 1) * fan_out], xi, d);
                }
            }
            let b = &mut params[2 * k + 1];
            for r in 0..batch {
                axpy(&mut b.grad, 1.0, delta.row(r));
            }
        }
        if k == 0 && !want_input_grad {
            return Ok(None);
        }
        let weight = &params[2 * k].value;
        let mut dx = Matrix::zeros(batch, fan_in);
        for r in 0..batch {
            let d = delta.row(r);
            let out = dx.row_mut(r);
            for (i, o) in out.iter_mut().enumerate() {
                *o = dot(d, &weight[i * fan_out..(i + 1) * fan_out]);
            }
        }
        if k == 0 {
            return Ok(Some(dx));
        }
        let h = &cache.hidden[k - 1];
        for (g, &y) in dx.as_mut_slice().iter_mut().zip(h.as_slice()) {
            *g *= spec.activation.derivative_from_output(y);
        }
        delta = dx;
    }
    Ok(None)
}

/// `dL/d(input)` for `d_out = dL/d(output)`, leaving the store untouched.
pub fn input_gradient(
    store: &ParamStore,
    spec: &MlpSpec,
    cache: &ForwardCache,
    d_out: &Matrix,
) -> Result<Matrix> {
    let batch = cache.batch_size();
    if d_out.rows() != batch || d_out.cols() != spec.output_dim {
        return Err(Error::Shape(format!(
            "output gradient is {}x{}, network output is {batch}x{}",
            d_out.rows(),
            d_out.cols(),
            spec.output_dim
        )));
    }
    check_layout(store, spec)?;
    let dims = spec.layer_dims();
    let params = store.params();
    let mut delta = d_out.clone();
    for k in (0..dims.len()).rev() {
        let (fan_in, fan_out) = dims[k];
        let weight = &params[2 * k].value;
        let mut dx = Matrix::zeros(batch, fan_in);
        for r in 0..batch {
            let d = delta.row(r);
            for (i, o) in dx.row_mut(r).iter_mut().enumerate() {
                *o = dot(d, &weight[i * fan_out..(i + 1) * fan_out]);
            }
        }
        if k > 0 {
            let h = &cache.hidden[k - 1];
            for (g, &y) in dx.as_mut_slice().iter_mut().zip(h.as_slice()) {
                *g *= spec.activation.derivative_from_output(y);
            }
        }
        delta = dx;
    }
    Ok(delta)
}

/// Evaluates `loss_fn` on the network output and accumulates the gradient of
/// the returned scalar into the store.
///
/// `loss_fn` maps the `batch x output_dim` output to `(loss, dloss/doutput)`.
/// A non-finite loss is reported with `loss_name` and leaves the gradients
/// untouched.
pub fn value_and_grad<F>(
    store: &mut ParamStore,
    spec: &MlpSpec,
    input: &Matrix,
    loss_name: &str,
    loss_fn: F,
) -> Result<f64>
where
    F: FnOnce(&Matrix) -> (f64, Matrix),
{
    let (out, cache) = forward_cached(store, spec, input)?;
    let (loss, d_out) = loss_fn(&out);
    if !loss.is_finite() {
        return Err(Error::NonFinite(loss_name.to_string()));
    }
    backward(store, spec, &cache, &d_out, true, false)?;
    Ok(loss)
}

/// A network specification bundled with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub store: ParamStore,
}

impl Mlp {
    pub fn new(spec: MlpSpec, rng: &mut Rng) -> Result<Self> {
        let store = init_params(&spec, rng)?;
        Ok(Self { spec, store })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        forward(&self.store, &self.spec, input)
    }

    pub fn forward_batch(&self, input: &Matrix) -> Result<Matrix> {
        forward_batch(&self.store, &self.spec, input)
    }

    pub fn forward_cached(&self, input: &Matrix) -> Result<(Matrix, ForwardCache)> {
        forward_cached(&self.store, &self.spec, input)
    }

    pub fn backward(
        &mut self,
        cache: &ForwardCache,
        d_out: &Matrix,
        want_input_grad: bool,
    ) -> Result<Option<Matrix>> {
        backward(
            &mut self.store,
            &self.spec,
            cache,
            d_out,
            true,
            want_input_grad,
        )
    }

    /// `dL/d(input)` without touching the parameter gradients.
    pub fn input_grad(&self, cache: &ForwardCache, d_out: &Matrix) -> Result<Matrix> {
        input_gradient(&self.store, &self.spec, cache, d_out)
    }

    pub fn reset(&mut self, rng: &mut Rng) -> Result<()> {
        reset_params(&mut self.store, &self.spec, rng)
    }
}
