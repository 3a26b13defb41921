//! Deterministic neural-network substrate: dense f64 tensors, a small layer
//! set with reverse-mode gradients, weighted losses, RMSprop and a training
//! loop with plateau learning-rate decay.

pub mod checkpoint;
pub mod layers;
pub mod losses;
pub mod optim;
pub mod tensor;
pub mod train;

pub use layers::{Aux, Layer, LayerSpec};
pub use losses::{bce_loss, softmax2, weighted_mse_jhm, weighted_mse_paf, LossWeights};
pub use optim::{OptimizerConfig, RmsProp};
pub use tensor::Tensor;
pub use train::{train, EpochStats, TrainTask};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Declarative description of a network: ordered layer specs plus the
/// initialization seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub init_seed: u64,
}

impl NetworkSpec {
    /// Shape produced by the layer chain, validating adjacency.
    pub fn output_shape(&self) -> Result<Vec<usize>> {
        let mut shape = self.input_shape.clone();
        for spec in &self.layers {
            shape = spec.output_shape(&shape)?;
        }
        Ok(shape)
    }
}

/// A built network; immutable during inference, parameters updated by the
/// optimizer between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    param_count: usize,
}

/// Forward activations cached for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Tensor>,
    aux: Vec<Aux>,
    pub output: Tensor,
}

impl Trace {
    /// Input tensor of layer `i`, as seen during the forward pass.
    pub fn layer_input(&self, i: usize) -> &Tensor {
        &self.inputs[i]
    }

    pub fn layer_aux(&self, i: usize) -> &Aux {
        &self.aux[i]
    }
}

impl Network {
    /// Builds the network, validating layer adjacency and drawing the initial
    /// parameters from the spec seed.
    pub fn build(spec: &NetworkSpec) -> Result<Network> {
        spec.output_shape()?; // validates the chain
        let mut rng = ChaCha8Rng::seed_from_u64(spec.init_seed);
        let layers: Vec<Layer> = spec.layers.iter().map(|s| Layer::build(s, &mut rng)).collect();
        let param_count = layers.iter().map(Layer::param_count).sum();
        Ok(Network { spec: spec.clone(), layers, param_count })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// All parameters, flattened in canonical layer order.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count);
        for layer in &self.layers {
            layer.write_params(&mut out);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count {
            return Err(Error::Contract(format!(
                "parameter vector of {} does not match network size {}",
                params.len(),
                self.param_count
            )));
        }
        let mut rest = params;
        for layer in &mut self.layers {
            rest = layer.read_params(rest);
        }
        Ok(())
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.spec.input_shape.as_slice() {
            return Err(Error::Contract(format!(
                "input shape {:?} does not match declared {:?}",
                input.shape(),
                self.spec.input_shape
            )));
        }
        Ok(())
    }

    /// Forward pass with cached activations.
    pub fn forward(&self, input: &Tensor) -> Result<Trace> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut aux = Vec::with_capacity(self.layers.len());
        let mut current = input.clone();
        for layer in &self.layers {
            let (out, a) = layer.forward(&current)?;
            inputs.push(current);
            aux.push(a);
            current = out;
        }
        Ok(Trace { inputs, aux, output: current })
    }

    /// Forward pass without keeping intermediate activations.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut current = input.clone();
        for layer in &self.layers {
            let (out, _) = layer.forward(&current)?;
            current = out;
        }
        Ok(current)
    }

    /// Reverse-mode pass. Returns the flat parameter gradient (aligned with
    /// [`Network::params_flat`]) and the gradient w.r.t. the network input.
    pub fn backward(&self, trace: &Trace, out_grad: &Tensor) -> Result<(Vec<f64>, Tensor)> {
        if out_grad.shape() != trace.output.shape() {
            return Err(Error::Contract(format!(
                "output gradient shape {:?} does not match output {:?}",
                out_grad.shape(),
                trace.output.shape()
            )));
        }
        if trace.inputs.len() != self.layers.len() {
            return Err(Error::Contract("forward cache does not match this network".into()));
        }
        let mut grads = vec![0.0; self.param_count];
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for layer in &self.layers {
            offsets.push(acc);
            acc += layer.param_count();
        }
        let mut grad = out_grad.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let span = &mut grads[offsets[i]..offsets[i] + layer.param_count()];
            grad = layer.backward(&trace.inputs[i], &trace.aux[i], &grad, span)?;
        }
        Ok((grads, grad))
    }
}

/// Anything trainable by the generic loop: exposes its parameters as one
/// flat vector.
pub trait TrainableModel {
    fn param_count(&self) -> usize;
    fn params_flat(&self) -> Vec<f64>;
    fn set_params_flat(&mut self, params: &[f64]) -> Result<()>;
}

impl TrainableModel for Network {
    fn param_count(&self) -> usize {
        Network::param_count(self)
    }

    fn params_flat(&self) -> Vec<f64> {
        Network::params_flat(self)
    }

    fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        Network::set_params_flat(self, params)
    }
}
