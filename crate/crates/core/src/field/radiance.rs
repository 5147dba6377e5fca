//! View-dependent radiance field conditioned on position, direction, surface
//! normal, and the geometry feature vector from the SDF trunk.

use super::{positional_encode, MlpParams, PositionalEncodingConfig};
use crate::math::Vec3;

#[derive(Debug, Clone)]
pub struct RadianceField {
    pub mlp: MlpParams,
    pub encoding: PositionalEncodingConfig,
    pub feature_width: usize,
}

impl RadianceField {
    /// Raw network input: `[p, enc(v), n, feat]`.
    pub fn assemble_input(&self, p: Vec3, v: Vec3, n: Vec3, feat: &[f64]) -> Vec<f64> {
        assert_eq!(feat.len(), self.feature_width);
        let mut input = Vec::with_capacity(self.mlp.input_dim());
        input.extend(p.to_array());
        input.extend(positional_encode(
            v,
            self.encoding.direction_frequencies,
            self.encoding.include_input,
        ));
        input.extend(n.to_array());
        input.extend_from_slice(feat);
        input
    }

    pub fn input_dim(&self) -> usize {
        3 + self.encoding.direction_dim() + 3 + self.feature_width
    }
}

/// Evaluates the radiance field; the raw head logits are squashed through a
/// sigmoid so every channel lies in `[0, 1]`.
pub fn radiance_eval(g: &RadianceField, p: Vec3, v: Vec3, n: Vec3, feat: &[f64]) -> [f64; 3] {
    debug_assert!((v.norm() - 1.0).abs() < 1e-9, "view direction must be unit");
    let input = g.assemble_input(p, v, n, feat);
    let logits = g.mlp.forward(&input);
    [
        crate::tape::sigmoid_scalar(logits[0]),
        crate::tape::sigmoid_scalar(logits[1]),
        crate::tape::sigmoid_scalar(logits[2]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::mlp::tests::random_mlp;
    use crate::field::Activation;
    use crate::tape::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_field(rng: &mut impl Rng) -> RadianceField {
        let encoding = PositionalEncodingConfig {
            position_frequencies: 0,
            direction_frequencies: 2,
            include_input: true,
        };
        let input = 3 + PositionalEncodingConfig::encoded_dim(2, true) + 3 + 4;
        RadianceField {
            mlp: random_mlp(rng, &[input, 8, 3], None, Activation::Relu),
            encoding,
            feature_width: 4,
        }
    }

    #[test]
    fn output_stays_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let f = small_field(&mut rng);
        for _ in 0..50 {
            let p = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                .normalized()
                .unwrap();
            let n = Vec3::new(0.0, 0.0, 1.0);
            let feat: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let c = radiance_eval(&f, p, v, n, &feat);
            for ch in c {
                assert!((0.0..=1.0).contains(&ch) && ch.is_finite());
            }
        }
    }

    #[test]
    fn zero_output_layer_gives_mid_gray() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut f = small_field(&mut rng);
        let last = f.mlp.layers.last_mut().unwrap();
        last.weight = Tensor::zeros(last.weight.rows, last.weight.cols);
        last.bias = Tensor::zeros(1, last.bias.cols);
        let c = radiance_eval(
            &f,
            Vec3::ZERO,
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.0, 1.0, 0.0),
            &[0.5; 4],
        );
        assert_eq!(c, [0.5, 0.5, 0.5]);
    }

    #[test]
    fn matches_dense_matmul_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let f = small_field(&mut rng);
        let p = Vec3::new(0.2, -0.3, 0.4);
        let v = Vec3::new(0.0, 1.0, 0.0);
        let n = Vec3::new(1.0, 0.0, 0.0);
        let feat = [0.1, 0.2, -0.3, 0.7];
        let input = f.assemble_input(p, v, n, &feat);
        let logits = f.mlp.forward(&input);
        let c = radiance_eval(&f, p, v, n, &feat);
        for (ci, li) in c.iter().zip(logits.iter()) {
            assert!((ci - crate::tape::sigmoid_scalar(*li)).abs() < 1e-12);
        }
    }
}
