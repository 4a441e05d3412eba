//! Dense multi-layer perceptrons on the tape: SELU hidden activations,
//! optional feature-axis normalization of the output, LeCun-normal
//! initialization.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::neural::params::ParamSet;
use crate::neural::tape::{Tape, Var};

/// Epsilon inside the output-normalization variance square root.
pub const NORM_EPS: f64 = 1e-8;

/// Architecture of one MLP. `n_layers` counts dense layers: one layer maps
/// input directly to output, deeper nets go input -> hidden^(n-1) -> output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_width: usize,
    pub hidden_width: usize,
    pub output_width: usize,
    pub n_layers: usize,
    /// Normalize the final output over the feature axis (per row).
    pub normalize: bool,
}

impl MlpSpec {
    pub fn new(input_width: usize, hidden_width: usize, output_width: usize, n_layers: usize, normalize: bool) -> Self {
        Self { input_width, hidden_width, output_width, n_layers, normalize }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers < 1 {
            return Err(Error::Config("MLP needs at least one layer".into()));
        }
        if self.input_width < 1 || self.hidden_width < 1 || self.output_width < 1 {
            return Err(Error::Config(format!("MLP widths must be >= 1, got {self:?}")));
        }
        Ok(())
    }

    fn layer_dims(&self, layer: usize) -> (usize, usize) {
        let input = if layer == 0 { self.input_width } else { self.hidden_width };
        let output = if layer + 1 == self.n_layers { self.output_width } else { self.hidden_width };
        (input, output)
    }

    pub fn n_scalars(&self) -> usize {
        (0..self.n_layers)
            .map(|l| {
                let (i, o) = self.layer_dims(l);
                i * o + o
            })
            .sum()
    }
}

/// Register the weights and biases of an MLP under `{base}.w{i}` /
/// `{base}.b{i}`. Weights are LeCun-normal (std = 1/sqrt(fan_in)), biases
/// start at zero.
pub fn register_mlp(params: &mut ParamSet, rng: &mut ChaCha8Rng, base: &str, spec: &MlpSpec) -> Result<()> {
    spec.validate()?;
    for layer in 0..spec.n_layers {
        let (fan_in, fan_out) = spec.layer_dims(layer);
        let dist = Normal::new(0.0, (1.0 / fan_in as f64).sqrt())
            .map_err(|e| Error::Config(format!("init distribution: {e}")))?;
        let w: Vec<f64> = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
        params.register(format!("{base}.w{layer}"), vec![fan_in, fan_out], w)?;
        params.register(format!("{base}.b{layer}"), vec![fan_out], vec![0.0; fan_out])?;
    }
    Ok(())
}

/// Run the MLP on a batch (rows) of input vectors previously placed on the
/// tape. SELU follows every layer except the last; when `normalize` is set
/// the final output is normalized over the feature axis.
pub fn mlp_forward(tape: &mut Tape, params: &ParamSet, base: &str, spec: &MlpSpec, input: Var) -> Result<Var> {
    spec.validate()?;
    let got = tape.value(input).ncols();
    if got != spec.input_width {
        return Err(Error::Contract(format!(
            "MLP {base} expects input width {}, got {got}",
            spec.input_width
        )));
    }
    let mut x = input;
    for layer in 0..spec.n_layers {
        let w = tape.param(params, params.index_of(&format!("{base}.w{layer}"))?);
        let b = tape.param(params, params.index_of(&format!("{base}.b{layer}"))?);
        x = tape.linear(x, w, b, layer + 1 < spec.n_layers);
    }
    if spec.normalize {
        x = tape.layer_norm(x, NORM_EPS);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::tape::{SELU_ALPHA, SELU_LAMBDA};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};

    #[test]
    fn identity_single_layer() {
        let spec = MlpSpec::new(3, 3, 3, 1, false);
        let mut params = ParamSet::new();
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        params.register("id.w0", vec![3, 3], eye).unwrap();
        params.register("id.b0", vec![3], vec![0.0; 3]).unwrap();
        let mut tape = Tape::new();
        let input = tape.constant(Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64 * 0.1));
        let out = mlp_forward(&mut tape, &params, "id", &spec, input).unwrap();
        assert_eq!(tape.value(out), tape.value(input));
    }

    #[test]
    fn input_width_mismatch_is_contract_violation() {
        let spec = MlpSpec::new(3, 4, 2, 2, false);
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        register_mlp(&mut params, &mut rng, "m", &spec).unwrap();
        let mut tape = Tape::new();
        let input = tape.constant(Array2::zeros((2, 5)));
        assert!(matches!(
            mlp_forward(&mut tape, &params, "m", &spec, input),
            Err(Error::Contract(_))
        ));
    }

    /// Independent scalar-loop evaluation of a 2-layer MLP.
    #[test]
    fn matches_reference_loop() {
        let spec = MlpSpec::new(5, 7, 4, 2, true);
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        register_mlp(&mut params, &mut rng, "m", &spec).unwrap();
        let input = Array2::from_shape_fn((6, 5), |_| rng.gen::<f64>() * 2.0 - 1.0);
        let mut tape = Tape::new();
        let iv = tape.constant(input.clone());
        let out = mlp_forward(&mut tape, &params, "m", &spec, iv).unwrap();
        let got = tape.value(out);

        let selu = |x: f64| if x > 0.0 { SELU_LAMBDA * x } else { SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0) };
        let w0 = params.get("m.w0").unwrap();
        let b0 = params.get("m.b0").unwrap();
        let w1 = params.get("m.w1").unwrap();
        let b1 = params.get("m.b1").unwrap();
        for row in 0..6 {
            let mut hidden = vec![0.0; 7];
            for o in 0..7 {
                let mut acc = b0.values[o];
                for i in 0..5 {
                    acc += input[[row, i]] * w0.values[i * 7 + o];
                }
                hidden[o] = selu(acc);
            }
            let mut output = vec![0.0; 4];
            for o in 0..4 {
                let mut acc = b1.values[o];
                for i in 0..7 {
                    acc += hidden[i] * w1.values[i * 4 + o];
                }
                output[o] = acc;
            }
            let mean = output.iter().sum::<f64>() / 4.0;
            let var = output.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            for (c, v) in output.iter().enumerate() {
                let expect = (v - mean) * inv;
                assert!(
                    (got[[row, c]] - expect).abs() <= 1e-12,
                    "row {row} col {c}: {} vs {expect}",
                    got[[row, c]]
                );
            }
        }
    }

    #[test]
    fn deterministic_initialization() {
        let spec = MlpSpec::new(3, 8, 2, 3, false);
        let mut a = ParamSet::new();
        let mut rng_a = ChaCha8Rng::seed_from_u64(5);
        register_mlp(&mut a, &mut rng_a, "m", &spec).unwrap();
        let mut b = ParamSet::new();
        let mut rng_b = ChaCha8Rng::seed_from_u64(5);
        register_mlp(&mut b, &mut rng_b, "m", &spec).unwrap();
        for (ta, tb) in a.iter().zip(b.iter()) {
            assert_eq!(ta.values, tb.values);
        }
        assert_eq!(a.n_scalars(), spec.n_scalars());
    }
}
