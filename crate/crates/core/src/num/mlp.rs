//! Multilayer perceptron with tanh hidden layers and a linear output layer.
//!
//! Parameters flatten layer by layer: the weight matrix (row-major, shape
//! `out × in`) followed by the bias vector.

use rand::Rng;

use super::{Mat, NumError};

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl Layer {
    fn num_params(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
}

/// Pre- and post-activation values recorded by a forward pass.
struct Trace {
    /// `acts[0]` is the input, `acts[k]` the output of layer `k-1`.
    acts: Vec<Vec<f64>>,
}

impl Mlp {
    /// All-zero network: outputs zero for every input.
    pub fn zeros(sizes: &[usize]) -> Result<Self, NumError> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weight: Mat::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(Mlp {
            sizes: sizes.to_vec(),
            layers,
        })
    }

    /// Weights and biases drawn uniformly from `[-1/√fan_in, 1/√fan_in]`.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self, NumError> {
        let mut net = Mlp::zeros(sizes)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.weight.cols() as f64).sqrt();
            for w in layer.weight.as_mut_slice() {
                *w = rng.random_range(-bound..=bound);
            }
            for b in &mut layer.bias {
                *b = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, NumError> {
        if layers.is_empty() {
            return Err(NumError::InvalidShape("an Mlp needs at least one layer".into()));
        }
        let mut sizes = vec![layers[0].weight.cols()];
        for (k, layer) in layers.iter().enumerate() {
            if layer.weight.cols() != *sizes.last().unwrap() {
                return Err(NumError::InvalidShape(format!(
                    "layer {k} expects {} inputs but previous layer produces {}",
                    layer.weight.cols(),
                    sizes.last().unwrap()
                )));
            }
            if layer.bias.len() != layer.weight.rows() {
                return Err(NumError::InvalidShape(format!(
                    "layer {k} bias has length {} for {} outputs",
                    layer.bias.len(),
                    layer.weight.rows()
                )));
            }
            sizes.push(layer.weight.rows());
        }
        check_sizes(&sizes)?;
        Ok(Mlp { sizes, layers })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend_from_slice(layer.weight.as_slice());
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), NumError> {
        if flat.len() != self.num_params() {
            return Err(NumError::DimensionMismatch {
                context: "Mlp::set_params",
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let mut off = 0;
        for layer in &mut self.layers {
            let nw = layer.weight.rows() * layer.weight.cols();
            layer.weight.as_mut_slice().copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    pub fn with_params(&self, flat: &[f64]) -> Result<Self, NumError> {
        let mut out = self.clone();
        out.set_params(flat)?;
        Ok(out)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NumError> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weight.mul_vec(&a);
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi += b;
                if k != last {
                    *zi = zi.tanh();
                }
            }
            a = z;
        }
        Ok(a)
    }

    /// Forward-mode product: returns the output and `∂output/∂x · tangent`.
    pub fn jvp(&self, x: &[f64], tangent: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NumError> {
        self.check_input(x)?;
        self.check_input(tangent)?;
        let mut a = x.to_vec();
        let mut da = tangent.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weight.mul_vec(&a);
            let mut dz = layer.weight.mul_vec(&da);
            for ((zi, dzi), b) in z.iter_mut().zip(dz.iter_mut()).zip(&layer.bias) {
                *zi += b;
                if k != last {
                    *zi = zi.tanh();
                    *dzi *= 1.0 - *zi * *zi;
                }
            }
            a = z;
            da = dz;
        }
        Ok((a, da))
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weight.mul_vec(acts.last().unwrap());
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi += b;
                if k != last {
                    *zi = zi.tanh();
                }
            }
            acts.push(z);
        }
        Trace { acts }
    }

    /// Vector–Jacobian products of the output with respect to both the flat
    /// parameters and the input, from one forward/backward sweep.
    pub fn vjp(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NumError> {
        self.check_input(x)?;
        self.check_upstream(upstream)?;
        let mut grad_params = vec![0.0; self.num_params()];
        let grad_input = self.backward(x, upstream, Some(&mut grad_params));
        Ok((grad_params, grad_input))
    }

    /// `upstreamᵀ · ∂output/∂params`, flattened in parameter order.
    pub fn vjp_params(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>, NumError> {
        Ok(self.vjp(x, upstream)?.0)
    }

    /// `upstreamᵀ · ∂output/∂x`
    pub fn vjp_input(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>, NumError> {
        self.check_input(x)?;
        self.check_upstream(upstream)?;
        Ok(self.backward(x, upstream, None))
    }

    /// Accumulates `scale · upstreamᵀ ∂output/∂params` into `acc` without
    /// allocating a fresh gradient vector.
    pub fn accumulate_vjp_params(
        &self,
        x: &[f64],
        upstream: &[f64],
        scale: f64,
        acc: &mut [f64],
    ) -> Result<(), NumError> {
        self.check_input(x)?;
        self.check_upstream(upstream)?;
        if acc.len() != self.num_params() {
            return Err(NumError::DimensionMismatch {
                context: "Mlp::accumulate_vjp_params",
                expected: self.num_params(),
                got: acc.len(),
            });
        }
        let scaled: Vec<f64> = upstream.iter().map(|g| g * scale).collect();
        self.backward(x, &scaled, Some(acc));
        Ok(())
    }

    /// Backward sweep. Parameter gradients are added into `grad_params`.
    fn backward(&self, x: &[f64], upstream: &[f64], mut grad_params: Option<&mut [f64]>) -> Vec<f64> {
        let trace = self.trace(x);
        let offsets = self.param_offsets();
        let last = self.layers.len() - 1;
        let mut delta = upstream.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            if k != last {
                // d tanh(z) = 1 - tanh(z)^2, and acts[k+1] holds tanh(z)
                for (d, a) in delta.iter_mut().zip(&trace.acts[k + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let input = &trace.acts[k];
            if let Some(g) = grad_params.as_deref_mut() {
                let off = offsets[k];
                let cols = layer.weight.cols();
                for (r, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &mut g[off + r * cols..off + (r + 1) * cols];
                    for (gw, xi) in row.iter_mut().zip(input) {
                        *gw += d * xi;
                    }
                }
                let boff = off + layer.weight.rows() * cols;
                for (gb, d) in g[boff..boff + delta.len()].iter_mut().zip(&delta) {
                    *gb += d;
                }
            }
            delta = layer.weight.tr_mul_vec(&delta);
        }
        delta
    }

    fn param_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offs.push(off);
            off += layer.num_params();
        }
        offs
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NumError> {
        if x.len() != self.input_dim() {
            return Err(NumError::DimensionMismatch {
                context: "Mlp input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_upstream(&self, g: &[f64]) -> Result<(), NumError> {
        if g.len() != self.output_dim() {
            return Err(NumError::DimensionMismatch {
                context: "Mlp upstream gradient",
                expected: self.output_dim(),
                got: g.len(),
            });
        }
        Ok(())
    }
}

fn check_sizes(sizes: &[usize]) -> Result<(), NumError> {
    if sizes.len() < 2 {
        return Err(NumError::InvalidShape(
            "layer_sizes needs an input and an output size".into(),
        ));
    }
    if sizes.contains(&0) {
        return Err(NumError::InvalidShape(format!(
            "layer sizes must be positive, got {sizes:?}"
        )));
    }
    Ok(())
}
