//! Dense multi-layer perceptron with an optional skip connection, evaluated
//! either directly (no gradients) or on the autodiff tape.

use serde::{Deserialize, Serialize};

use super::FieldError;
use crate::tape::{matmul_kernel, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    /// `softplus(beta x)/beta`; smooth, so second derivatives through the
    /// SDF normal are well defined.
    Softplus { beta: f64 },
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::Softplus { beta } => crate::tape::softplus_scalar(x, beta),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    fn apply_tape(&self, tape: &mut Tape, x: Var) -> Var {
        match *self {
            Activation::Softplus { beta } => tape.softplus(x, beta),
            Activation::Relu => tape.relu(x),
            Activation::Identity => x,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearLayer {
    /// `[in x out]`, row-major.
    pub weight: Tensor,
    /// `[1 x out]`.
    pub bias: Tensor,
    pub activation: Activation,
}

impl LinearLayer {
    pub fn in_dim(&self) -> usize {
        self.weight.rows
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols
    }
}

/// MLP parameters. When `skip_at` is `Some(i)`, the original input is
/// concatenated to the activations entering layer `i`.
#[derive(Debug, Clone)]
pub struct MlpParams {
    pub layers: Vec<LinearLayer>,
    pub skip_at: Option<usize>,
}

impl MlpParams {
    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let input = self.input_dim();
        let mut dim = input;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut expect = dim;
            if self.skip_at == Some(i) && i > 0 {
                expect += input;
            }
            if layer.in_dim() != expect {
                return Err(FieldError::LayerDimensionMismatch {
                    layer: i,
                    got: layer.in_dim(),
                    expected: expect,
                });
            }
            if !layer.weight.is_finite() || !layer.bias.is_finite() {
                return Err(FieldError::NonFiniteParameter(format!("layer {i}")));
            }
            dim = layer.out_dim();
        }
        Ok(())
    }

    /// Batch forward pass without gradients: `input` is `[n x in_dim]`.
    pub fn forward_batch(&self, input: &Tensor) -> Tensor {
        assert_eq!(input.cols, self.input_dim());
        let n = input.rows;
        let mut h = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            if self.skip_at == Some(i) && i > 0 {
                let mut cat = Tensor::zeros(n, h.cols + input.cols);
                for r in 0..n {
                    let dst = &mut cat.data[r * cat.cols..(r + 1) * cat.cols];
                    dst[..h.cols].copy_from_slice(&h.data[r * h.cols..(r + 1) * h.cols]);
                    dst[h.cols..].copy_from_slice(&input.data[r * input.cols..(r + 1) * input.cols]);
                }
                h = cat;
            }
            let mut out = Tensor::zeros(n, layer.out_dim());
            matmul_kernel(
                n,
                layer.in_dim(),
                layer.out_dim(),
                &h.data,
                &layer.weight.data,
                &mut out.data,
            );
            for row in out.data.chunks_exact_mut(layer.out_dim()) {
                for (v, b) in row.iter_mut().zip(layer.bias.data.iter()) {
                    *v = layer.activation.apply(*v + b);
                }
            }
            h = out;
        }
        h
    }

    /// Single-point forward pass.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let t = Tensor::new(1, input.len(), input.to_vec());
        self.forward_batch(&t).data
    }

    /// Registers every layer's parameters as differentiable leaves.
    pub fn bind(&self, tape: &mut Tape) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.leaf(&l.weight), tape.leaf(&l.bias)))
                .collect(),
            skip_at: self.skip_at,
            activations: self.layers.iter().map(|l| l.activation).collect(),
        }
    }
}

/// Tape-bound MLP parameters.
#[derive(Debug, Clone)]
pub struct MlpVars {
    pub layers: Vec<(Var, Var)>,
    pub skip_at: Option<usize>,
    pub activations: Vec<Activation>,
}

impl MlpVars {
    /// Differentiable forward pass over a `[n x in_dim]` batch var.
    pub fn forward(&self, tape: &mut Tape, input: Var) -> Var {
        let mut h = input;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            if self.skip_at == Some(i) && i > 0 {
                h = tape.concat_cols(&[h, input]);
            }
            let z = tape.matmul(h, w);
            let z = tape.add_row(z, b);
            h = self.activations[i].apply_tape(tape, z);
        }
        h
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_mlp(
        rng: &mut impl Rng,
        dims: &[usize],
        skip_at: Option<usize>,
        activation: Activation,
    ) -> MlpParams {
        let input = dims[0];
        let mut layers = Vec::new();
        for i in 0..dims.len() - 1 {
            let mut in_dim = dims[i];
            if skip_at == Some(i) && i > 0 {
                in_dim += input;
            }
            let out_dim = dims[i + 1];
            let act = if i + 2 == dims.len() {
                Activation::Identity
            } else {
                activation
            };
            layers.push(LinearLayer {
                weight: Tensor::new(
                    in_dim,
                    out_dim,
                    (0..in_dim * out_dim)
                        .map(|_| rng.gen_range(-0.5..0.5))
                        .collect(),
                ),
                bias: Tensor::new(1, out_dim, (0..out_dim).map(|_| rng.gen_range(-0.1..0.1)).collect()),
                activation: act,
            });
        }
        MlpParams { layers, skip_at }
    }

    #[test]
    fn forward_matches_manual_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mlp = random_mlp(&mut rng, &[3, 4, 2], None, Activation::Softplus { beta: 2.0 });
        let x = [0.3, -0.2, 0.8];
        let out = mlp.forward(&x);

        // Layer-by-layer oracle.
        let l0 = &mlp.layers[0];
        let mut h = vec![0.0; 4];
        for j in 0..4 {
            let mut acc = l0.bias.data[j];
            for i in 0..3 {
                acc += x[i] * l0.weight.data[i * 4 + j];
            }
            h[j] = crate::tape::softplus_scalar(acc, 2.0);
        }
        let l1 = &mlp.layers[1];
        for j in 0..2 {
            let mut acc = l1.bias.data[j];
            for i in 0..4 {
                acc += h[i] * l1.weight.data[i * 2 + j];
            }
            assert!((out[j] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn skip_connection_concatenates_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mlp = random_mlp(&mut rng, &[3, 4, 4, 1], Some(1), Activation::Relu);
        mlp.validate().unwrap();
        assert_eq!(mlp.layers[1].in_dim(), 7);
        let out = mlp.forward(&[0.1, 0.2, 0.3]);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn tape_forward_matches_batch_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mlp = random_mlp(&mut rng, &[3, 8, 8, 2], Some(1), Activation::Softplus { beta: 3.0 });
        let n = 5;
        let input = Tensor::new(
            n,
            3,
            (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let plain = mlp.forward_batch(&input);
        let mut tape = Tape::new();
        let x = tape.constant(&input);
        let vars = mlp.bind(&mut tape);
        let y = vars.forward(&mut tape, x);
        for (a, b) in tape.data(y).iter().zip(plain.data.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut mlp = random_mlp(&mut rng, &[3, 4, 2], None, Activation::Relu);
        mlp.layers[1].weight = Tensor::zeros(5, 2);
        assert!(matches!(
            mlp.validate(),
            Err(FieldError::LayerDimensionMismatch { layer: 1, .. })
        ));
    }
}
