//! Differentiable network substrate: tensors, the gradient tape, the 1-D UNet,
//! time/condition embeddings and the Adam optimizer.

mod adam;
mod embed;
mod graph;
mod layers;
mod params;
mod tensor;
mod unet;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use embed::{sinusoidal_time_embedding, time_embedding_batch, WideDeep};
pub use graph::{Gradients, Graph, Var};
pub use layers::{group_count, Layers};
pub use params::{Initializer, ParameterStore};
pub use tensor::Tensor;
pub use unet::{NetworkConfig, UNet1d};

use crate::error::Result;

/// A map `(x, time, condition) -> tensor shaped like x`, recorded on a graph.
///
/// Diffusion models read the output as predicted noise, flow models as a velocity.
pub trait Field {
    fn forward(&self, g: &mut Graph, x: Var, time: &[f64], cond: &[usize]) -> Result<Var>;

    fn predict(&self, x: &Tensor, time: &[f64], cond: &[usize]) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let y = self.forward(&mut g, xv, time, cond)?;
        Ok(g.value(y).clone())
    }
}

/// A [`UNet1d`] bound to a parameter store.
#[derive(Clone, Copy, Debug)]
pub struct UNetField<'a> {
    pub net: &'a UNet1d,
    pub params: &'a ParameterStore,
}

impl Field for UNetField<'_> {
    fn forward(&self, g: &mut Graph, x: Var, time: &[f64], cond: &[usize]) -> Result<Var> {
        self.net.forward(g, self.params, x, time, cond)
    }
}

/// A fixed, non-trainable field given by a closure.
pub struct FnField<F>(pub F);

impl<F> Field for FnField<F>
where
    F: Fn(&Tensor, &[f64], &[usize]) -> Tensor,
{
    fn forward(&self, g: &mut Graph, x: Var, time: &[f64], cond: &[usize]) -> Result<Var> {
        let out = (self.0)(g.value(x), time, cond);
        g.value(x).same_shape(&out)?;
        Ok(g.constant(out))
    }
}

/// Scalar loss with gradients for every parameter the field touched.
#[derive(Clone, Debug)]
pub struct LossOutput {
    pub loss: f64,
    pub grads: ParameterStore,
}

/// Per-element mean squared error between `field(input)` and `target`, with gradients.
pub fn regression_loss(
    field: &dyn Field,
    input: Tensor,
    time: &[f64],
    cond: &[usize],
    target: &Tensor,
) -> Result<LossOutput> {
    let mut g = Graph::new();
    let x = g.constant(input);
    let y = field.forward(&mut g, x, time, cond)?;
    let loss = g.mse(y, target)?;
    let grads = g.backward(loss)?;
    Ok(LossOutput { loss: g.value(loss).data()[0], grads: grads.parameters(&g) })
}
