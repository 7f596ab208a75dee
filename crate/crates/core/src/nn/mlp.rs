//! Fully-connected networks with an exact, hand-written reverse pass.
//!
//! Hidden layers use ReLU. The final layer is followed by an
//! [`OutputTransform`], which is how the same type serves as a policy trunk,
//! a logit head, a bounded ratio model and a Gaussian (mean, log-std) head.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm_acc, gemm_nt, gemm_tn_acc, DenseArray};
use crate::error::{Error, Result};

/// Pre-activations beyond this magnitude are clamped before the sigmoid so the
/// output never rounds onto the boundary of `(0, C)`.
const SIGMOID_INPUT_LIMIT: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HiddenActivation {
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum OutputTransform {
    Identity,
    /// ReLU on the output; used for shared trunks that feed separate heads.
    Relu,
    /// `C · sigmoid(x)`, strictly inside `(0, C)`.
    SigmoidScaled { c: f64 },
    /// The output is read as `[mean | log_std]` halves; the log-std half is
    /// hard-clamped to `[lo, hi]` (zero gradient outside).
    LogStdClamp { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// Shape `(in, out)`.
    pub weight: DenseArray,
    /// Shape `(1, out)`.
    pub bias: DenseArray,
}

impl Linear {
    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layers: Vec<Linear>,
    hidden_activation: HiddenActivation,
    output_transform: OutputTransform,
    init_seed: u64,
}

/// Activations saved by [`MlpModel::forward_cached`] for the reverse pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to every layer (index 0 is the network input).
    layer_inputs: Vec<DenseArray>,
    /// Final-layer output before the output transform.
    pre_output: DenseArray,
    output: DenseArray,
}

impl ForwardCache {
    pub fn output(&self) -> &DenseArray {
        &self.output
    }

    pub fn input(&self) -> &DenseArray {
        &self.layer_inputs[0]
    }
}

/// Parameter gradients in the same order as [`MlpModel::params_mut`], plus the
/// gradient with respect to the network input.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub layers: Vec<(DenseArray, DenseArray)>,
    pub input: DenseArray,
}

impl MlpGradients {
    pub fn flat(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.data(), b.data()])
            .collect()
    }

    pub fn into_flat(self) -> Vec<Vec<f64>> {
        self.layers
            .into_iter()
            .flat_map(|(w, b)| [w.into_data(), b.into_data()])
            .collect()
    }
}

impl MlpModel {
    /// Builds a network with layer widths `dims` (input first, output last).
    ///
    /// Weights and biases are drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(dims: &[usize], output_transform: OutputTransform, init_seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer dims {dims:?}")));
        }
        if let OutputTransform::SigmoidScaled { c } = output_transform {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("sigmoid scale must be positive, got {c}")));
            }
        }
        if let OutputTransform::LogStdClamp { lo, hi } = output_transform {
            if !(lo < hi) || !dims[dims.len() - 1].is_multiple_of(2) {
                return Err(Error::Config("log-std head needs lo < hi and an even output width".into()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weight: Vec<f64> = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                let bias: Vec<f64> = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
                Linear {
                    weight: DenseArray::new(fan_in, fan_out, weight).expect("finite init"),
                    bias: DenseArray::new(1, fan_out, bias).expect("finite init"),
                }
            })
            .collect();
        Ok(Self {
            layers,
            hidden_activation: HiddenActivation::Relu,
            output_transform,
            init_seed,
        })
    }

    pub fn from_layers(layers: Vec<Linear>, output_transform: OutputTransform) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::dim("MlpModel::from_layers", pair[0].out_dim(), format!("{} at layer {}", pair[1].in_dim(), i + 1)));
            }
        }
        for l in &layers {
            if l.bias.shape() != (1, l.out_dim()) {
                return Err(Error::dim("MlpModel::from_layers bias", l.out_dim(), l.bias.cols()));
            }
        }
        Ok(Self {
            layers,
            hidden_activation: HiddenActivation::Relu,
            output_transform,
            init_seed: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn output_transform(&self) -> OutputTransform {
        self.output_transform
    }

    pub fn hidden_activation(&self) -> HiddenActivation {
        self.hidden_activation
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.data()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let Linear { weight, bias } = l;
                [weight.data_mut(), bias.data_mut()]
            })
            .collect()
    }

    pub fn forward(&self, input: &DenseArray) -> Result<DenseArray> {
        Ok(self.forward_cached(input)?.output)
    }

    pub fn forward_cached(&self, input: &DenseArray) -> Result<ForwardCache> {
        if input.cols() != self.input_dim() {
            return Err(Error::dim("mlp_forward input columns", self.input_dim(), input.cols()));
        }
        let n = input.rows();
        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        let mut pre_output = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let (k, m) = (layer.in_dim(), layer.out_dim());
            let mut z = vec![0.0; n * m];
            for row in z.chunks_exact_mut(m) {
                row.copy_from_slice(layer.bias.data());
            }
            gemm_acc(x.data(), n, k, layer.weight.data(), m, &mut z);
            let z = DenseArray::new(n, m, z)?;
            layer_inputs.push(x);
            if i == last {
                pre_output = Some(z);
                break;
            }
            x = z.map(|v| v.max(0.0));
        }
        let pre_output = pre_output.expect("at least one layer");
        let output = self.apply_output_transform(&pre_output);
        output.check_finite("mlp_forward output")?;
        Ok(ForwardCache {
            layer_inputs,
            pre_output,
            output,
        })
    }

    fn apply_output_transform(&self, pre: &DenseArray) -> DenseArray {
        match self.output_transform {
            OutputTransform::Identity => pre.clone(),
            OutputTransform::Relu => pre.map(|v| v.max(0.0)),
            OutputTransform::SigmoidScaled { c } => {
                pre.map(|v| c * sigmoid(v.clamp(-SIGMOID_INPUT_LIMIT, SIGMOID_INPUT_LIMIT)))
            }
            OutputTransform::LogStdClamp { lo, hi } => {
                let half = pre.cols() / 2;
                let mut out = pre.clone();
                for r in 0..out.rows() {
                    for v in &mut out.row_mut(r)[half..] {
                        *v = v.clamp(lo, hi);
                    }
                }
                out
            }
        }
    }

    /// Reverse pass for `upstream = dL/d(output)`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &DenseArray) -> Result<MlpGradients> {
        if upstream.shape() != cache.output.shape() {
            return Err(Error::dim(
                "mlp_backward upstream shape",
                format!("{:?}", cache.output.shape()),
                format!("{:?}", upstream.shape()),
            ));
        }
        upstream.check_finite("mlp_backward upstream")?;
        let n = upstream.rows();

        // Through the output transform.
        let mut delta = upstream.clone();
        match self.output_transform {
            OutputTransform::Identity => {}
            OutputTransform::Relu => {
                for (d, &p) in delta.data_mut().iter_mut().zip(cache.pre_output.data()) {
                    if p <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            OutputTransform::SigmoidScaled { c } => {
                for ((d, &y), &p) in delta
                    .data_mut()
                    .iter_mut()
                    .zip(cache.output.data())
                    .zip(cache.pre_output.data())
                {
                    *d = if p.abs() >= SIGMOID_INPUT_LIMIT { 0.0 } else { *d * y * (1.0 - y / c) };
                }
            }
            OutputTransform::LogStdClamp { lo, hi } => {
                let half = delta.cols() / 2;
                for r in 0..n {
                    let pre = cache.pre_output.row(r).to_vec();
                    for (j, d) in delta.row_mut(r).iter_mut().enumerate().skip(half) {
                        if !(pre[j] > lo && pre[j] < hi) {
                            *d = 0.0;
                        }
                    }
                }
            }
        }

        let mut grads = vec![(DenseArray::zeros(0, 0), DenseArray::zeros(0, 0)); self.layers.len()];
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (k, m) = (layer.in_dim(), layer.out_dim());
            let x = &cache.layer_inputs[i];
            let mut dw = vec![0.0; k * m];
            gemm_tn_acc(x.data(), n, k, delta.data(), m, &mut dw);
            let mut db = vec![0.0; m];
            for row in delta.data().chunks_exact(m) {
                for (b, &d) in db.iter_mut().zip(row) {
                    *b += d;
                }
            }
            grads[i] = (DenseArray::new(k, m, dw)?, DenseArray::new(1, m, db)?);

            let mut dx = vec![0.0; n * k];
            gemm_nt(delta.data(), n, m, layer.weight.data(), k, &mut dx);
            if i > 0 {
                // ReLU derivative: the layer input is a post-activation.
                for (d, &a) in dx.iter_mut().zip(x.data()) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = DenseArray::new(n, k, dx)?;
        }
        Ok(MlpGradients { layers: grads, input: delta })
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_layer(w: f64, b: f64) -> Linear {
        Linear {
            weight: DenseArray::new(1, 1, vec![w]).unwrap(),
            bias: DenseArray::new(1, 1, vec![b]).unwrap(),
        }
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut m = MlpModel::new(&[3, 4, 2], OutputTransform::Identity, 1).unwrap();
        for p in m.params_mut() {
            p.fill(0.0);
        }
        let x = DenseArray::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]]).unwrap();
        let y = m.forward(&x).unwrap();
        assert_eq!(y.shape(), (2, 2));
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn affine_single_layer() {
        let m = MlpModel::from_layers(vec![scalar_layer(2.0, 1.0)], OutputTransform::Identity).unwrap();
        let y = m.forward(&DenseArray::new(1, 1, vec![3.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[7.0]);
    }

    #[test]
    fn sigmoid_scaled_at_zero_is_half() {
        let m = MlpModel::from_layers(vec![scalar_layer(0.0, 0.0)], OutputTransform::SigmoidScaled { c: 1.0 }).unwrap();
        let y = m.forward(&DenseArray::new(1, 1, vec![5.0]).unwrap()).unwrap();
        assert_eq!(y.data(), &[0.5]);
    }

    #[test]
    fn sigmoid_never_touches_boundary() {
        for c in [0.5, 1.0, 2.0, 10.0] {
            let m = MlpModel::from_layers(vec![scalar_layer(1.0, 0.0)], OutputTransform::SigmoidScaled { c }).unwrap();
            let x = DenseArray::column_vector(&[-1e6, -40.0, 40.0, 1e6]).unwrap();
            let y = m.forward(&x).unwrap();
            assert!(y.data().iter().all(|&v| v > 0.0 && v < c), "{:?}", y.data());
        }
    }

    #[test]
    fn scalar_gradient_is_input() {
        let m = MlpModel::from_layers(vec![scalar_layer(0.7, 0.0)], OutputTransform::Identity).unwrap();
        let cache = m.forward_cached(&DenseArray::new(1, 1, vec![3.0]).unwrap()).unwrap();
        let g = m.backward(&cache, &DenseArray::new(1, 1, vec![1.0]).unwrap()).unwrap();
        assert_eq!(g.layers[0].0.data(), &[3.0]);
        assert_eq!(g.layers[0].1.data(), &[1.0]);
        assert_eq!(g.input.data(), &[0.7]);
    }

    #[test]
    fn relu_blocks_gradient_at_negative_preactivation() {
        // hidden unit has pre-activation -1 for input 1
        let hidden = scalar_layer(-2.0, 1.0);
        let out = scalar_layer(5.0, 0.0);
        let m = MlpModel::from_layers(vec![hidden, out], OutputTransform::Identity).unwrap();
        let cache = m.forward_cached(&DenseArray::new(1, 1, vec![1.0]).unwrap()).unwrap();
        let g = m.backward(&cache, &DenseArray::new(1, 1, vec![1.0]).unwrap()).unwrap();
        assert_eq!(g.layers[0].0.data(), &[0.0]);
        assert_eq!(g.layers[0].1.data(), &[0.0]);
        assert_eq!(g.input.data(), &[0.0]);
    }

    #[test]
    fn shape_errors() {
        let m = MlpModel::new(&[3, 2], OutputTransform::Identity, 0).unwrap();
        assert!(matches!(m.forward(&DenseArray::zeros(1, 4)), Err(Error::Dimension { .. })));
        let cache = m.forward_cached(&DenseArray::zeros(2, 3)).unwrap();
        assert!(m.backward(&cache, &DenseArray::zeros(1, 2)).is_err());
        let bad = vec![
            Linear { weight: DenseArray::zeros(3, 2), bias: DenseArray::zeros(1, 2) },
            Linear { weight: DenseArray::zeros(3, 1), bias: DenseArray::zeros(1, 1) },
        ];
        assert!(MlpModel::from_layers(bad, OutputTransform::Identity).is_err());
    }

    #[test]
    fn same_seed_same_weights() {
        let a = MlpModel::new(&[4, 8, 3], OutputTransform::Identity, 9).unwrap();
        let b = MlpModel::new(&[4, 8, 3], OutputTransform::Identity, 9).unwrap();
        let c = MlpModel::new(&[4, 8, 3], OutputTransform::Identity, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
