//! Fully connected sine network over encoded coordinates.
//!
//! Layer 0 computes `sin(sine_scale * (W x + b))`, every further hidden layer
//! `sin(W x + b)`, and the head is affine, optionally followed by softplus.
//! Parameters live in one flat vector so the optimizer, checkpoints and
//! gradient checks can treat every network uniformly.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use super::encoding::{encode_batch, EncodingConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Linear,
    Softplus,
}

impl Head {
    pub fn as_str(&self) -> &'static str {
        match self {
            Head::Linear => "linear",
            Head::Softplus => "softplus",
        }
    }

    pub fn parse(s: &str) -> Result<Head> {
        match s {
            "linear" => Ok(Head::Linear),
            "softplus" => Ok(Head::Softplus),
            other => Err(Error::Invalid(format!("unknown head `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    pub depth: usize,
    pub width: usize,
    pub head: Head,
    pub sine_scale: f64,
}

impl NetworkConfig {
    pub fn new(depth: usize, width: usize, head: Head) -> Self {
        NetworkConfig {
            depth,
            width,
            head,
            sine_scale: 30.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 {
            return Err(Error::Invalid(format!(
                "network depth and width must be >= 1, got {}x{}",
                self.depth, self.width
            )));
        }
        if !(self.sine_scale > 0.0 && self.sine_scale.is_finite()) {
            return Err(Error::Invalid(format!("sine_scale must be positive, got {}", self.sine_scale)));
        }
        Ok(())
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::new(16, 128, Head::Linear)
    }
}

/// Location of one affine layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlot {
    pub rows: usize,
    pub cols: usize,
    pub weight: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    name: String,
    encoding: EncodingConfig,
    config: NetworkConfig,
    out_dim: usize,
    layers: Vec<LayerSlot>,
    params: Vec<f64>,
}

/// Intermediate values kept from a forward pass for backpropagation.
pub struct ForwardCache {
    /// Input of every affine layer; `inputs[0]` is the encoded batch.
    inputs: Vec<Array2<f64>>,
    /// Derivative of each hidden activation with respect to its pre-activation.
    slopes: Vec<Array2<f64>>,
    /// Head pre-activation (needed for softplus).
    head_pre: Array2<f64>,
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn inverse_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
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

fn layout(in_dim: usize, cfg: &NetworkConfig, out_dim: usize) -> (Vec<LayerSlot>, usize) {
    let mut dims = vec![in_dim];
    dims.extend(std::iter::repeat_n(cfg.width, cfg.depth));
    dims.push(out_dim);
    let mut offset = 0;
    let layers = dims
        .windows(2)
        .map(|w| {
            let slot = LayerSlot {
                rows: w[1],
                cols: w[0],
                weight: offset,
                bias: offset + w[0] * w[1],
            };
            offset += w[0] * w[1] + w[1];
            slot
        })
        .collect();
    (layers, offset)
}

impl Network {
    /// Network with all parameters zero.
    pub fn zeros(name: &str, encoding: EncodingConfig, config: NetworkConfig, out_dim: usize) -> Result<Self> {
        encoding.validate()?;
        config.validate()?;
        if out_dim == 0 {
            return Err(Error::Invalid("network needs at least one output".into()));
        }
        let (layers, n) = layout(encoding.encoded_len(), &config, out_dim);
        Ok(Network {
            name: name.to_string(),
            encoding,
            config,
            out_dim,
            layers,
            params: vec![0.0; n],
        })
    }

    /// Sine-network initialization: first layer `U(-1/n, 1/n)`, hidden layers
    /// `U(-sqrt(6/n), sqrt(6/n))`, head `U(-sqrt(6/n), sqrt(6/n)) / sine_scale`,
    /// biases `U(-1/sqrt(n), 1/sqrt(n))`, with `n` the fan-in.
    pub fn init(
        name: &str,
        encoding: EncodingConfig,
        config: NetworkConfig,
        out_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut net = Self::zeros(name, encoding, config, out_dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = net.layers.len() - 1;
        for (l, slot) in net.layers.clone().into_iter().enumerate() {
            let fan_in = slot.cols as f64;
            let w_bound = if l == 0 {
                1.0 / fan_in
            } else if l == last {
                (6.0 / fan_in).sqrt() / config.sine_scale
            } else {
                (6.0 / fan_in).sqrt()
            };
            let b_bound = 1.0 / fan_in.sqrt();
            let wd = Uniform::new_inclusive(-w_bound, w_bound).map_err(|e| Error::Invalid(e.to_string()))?;
            let bd = Uniform::new_inclusive(-b_bound, b_bound).map_err(|e| Error::Invalid(e.to_string()))?;
            for p in &mut net.params[slot.weight..slot.bias] {
                *p = wd.sample(&mut rng);
            }
            for p in &mut net.params[slot.bias..slot.bias + slot.rows] {
                *p = bd.sample(&mut rng);
            }
        }
        Ok(net)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn encoding(&self) -> &EncodingConfig {
        &self.encoding
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn layers(&self) -> &[LayerSlot] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} network expects {} parameters, got {}",
                self.name,
                self.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid(format!("non-finite parameter for {} network", self.name)));
        }
        self.params = params;
        Ok(())
    }

    /// Overwrites the output-layer bias, one value per output.
    pub fn set_head_bias(&mut self, values: &[f64]) -> Result<()> {
        let slot = *self.layers.last().expect("at least one layer");
        if values.len() != slot.rows {
            return Err(Error::DimensionMismatch(format!(
                "{} network has {} outputs, got {} biases",
                self.name,
                slot.rows,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite head bias for {} network", self.name)));
        }
        self.params[slot.bias..slot.bias + slot.rows].copy_from_slice(values);
        Ok(())
    }

    pub fn weight(&self, layer: usize) -> ArrayView2<'_, f64> {
        let s = self.layers[layer];
        ArrayView2::from_shape((s.rows, s.cols), &self.params[s.weight..s.bias]).expect("layout")
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let s = self.layers[layer];
        ArrayView1::from(&self.params[s.bias..s.bias + s.rows])
    }

    fn check_finite(&self, a: &Array2<f64>, layer: usize) -> Result<()> {
        if a.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteActivation {
                network: self.name.clone(),
                layer,
            })
        }
    }

    fn affine(&self, layer: usize, input: &Array2<f64>) -> Array2<f64> {
        let w = self.weight(layer);
        let b = self.bias(layer);
        let mut z = Array2::from_shape_fn((input.nrows(), w.nrows()), |(_, c)| b[c]);
        general_mat_mul(1.0, input, &w.t(), 1.0, &mut z);
        z
    }

    /// Forward pass on an already encoded batch (`N x 4*omega`).
    pub fn forward_encoded(&self, encoded: &Array2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if encoded.ncols() != self.encoding.encoded_len() {
            return Err(Error::DimensionMismatch(format!(
                "{} network expects {} input features, got {}",
                self.name,
                self.encoding.encoded_len(),
                encoded.ncols()
            )));
        }
        let depth = self.config.depth;
        let scale = self.config.sine_scale;
        let mut inputs = Vec::with_capacity(depth + 1);
        let mut slopes = Vec::with_capacity(depth);
        inputs.push(encoded.clone());
        for l in 0..depth {
            let z = self.affine(l, &inputs[l]);
            let s = if l == 0 { scale } else { 1.0 };
            let mut act = z.clone();
            let mut slope = z;
            ndarray::Zip::from(&mut act).and(&mut slope).for_each(|a, d| {
                let (sn, cs) = (s * *d).sin_cos();
                *a = sn;
                *d = s * cs;
            });
            self.check_finite(&act, l)?;
            inputs.push(act);
            slopes.push(slope);
        }
        let head_pre = self.affine(depth, &inputs[depth]);
        let out = match self.config.head {
            Head::Linear => head_pre.clone(),
            Head::Softplus => head_pre.mapv(softplus),
        };
        self.check_finite(&out, depth)?;
        Ok((
            out,
            ForwardCache {
                inputs,
                slopes,
                head_pre,
            },
        ))
    }

    /// Forward pass on coordinates expressed in the encoding's frame.
    pub fn forward(&self, coords: &[(f64, f64)]) -> Result<Array2<f64>> {
        let encoded = encode_batch(coords, &self.encoding);
        self.forward_encoded(&encoded).map(|(out, _)| out)
    }

    /// Reverse-mode gradient of a scalar loss given `d loss / d output`.
    /// Returns a vector congruent to [`Network::params`].
    pub fn backward(&self, cache: &ForwardCache, d_out: &Array2<f64>) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        let depth = self.config.depth;
        let mut delta = match self.config.head {
            Head::Linear => d_out.clone(),
            Head::Softplus => d_out * &cache.head_pre.mapv(sigmoid),
        };
        for l in (0..=depth).rev() {
            let slot = self.layers[l];
            let input = &cache.inputs[l];
            {
                let mut gw = ndarray::ArrayViewMut2::from_shape(
                    (slot.rows, slot.cols),
                    &mut grad[slot.weight..slot.bias],
                )
                .expect("layout");
                general_mat_mul(1.0, &delta.t(), input, 0.0, &mut gw);
            }
            let gb: Array1<f64> = delta.sum_axis(Axis(0));
            grad[slot.bias..slot.bias + slot.rows].copy_from_slice(gb.as_slice().expect("contiguous"));
            if l > 0 {
                let mut upstream = delta.dot(&self.weight(l));
                upstream *= &cache.slopes[l - 1];
                delta = upstream;
            }
        }
        grad
    }
}

/// Gradient of `loss(net(coords))` with respect to every network parameter.
///
/// `evaluator` maps the batch output to the scalar loss and its gradient with
/// respect to that output.
pub fn parameter_gradients<F>(net: &Network, coords: &[(f64, f64)], evaluator: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&Array2<f64>) -> (f64, Array2<f64>),
{
    let encoded = encode_batch(coords, net.encoding());
    let (out, cache) = net.forward_encoded(&encoded)?;
    let (loss, d_out) = evaluator(&out);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { iteration: 0 });
    }
    if d_out.dim() != out.dim() {
        return Err(Error::DimensionMismatch(format!(
            "output gradient {:?} vs output {:?}",
            d_out.dim(),
            out.dim()
        )));
    }
    Ok((loss, net.backward(&cache, &d_out)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::encoding::positional_encode;

    fn small_enc() -> EncodingConfig {
        EncodingConfig { f_min: 1e-2, omega: 3, ..Default::default() }
    }

    fn pts() -> Vec<(f64, f64)> {
        vec![(0.0, 0.0), (0.3, 0.7), (1.0, 0.5), (0.25, 1.0), (0.9, 0.1)]
    }

    #[test]
    fn zero_network_outputs() {
        let lin = Network::zeros("u", small_enc(), NetworkConfig::new(2, 4, Head::Linear), 2).unwrap();
        assert!(lin.forward(&pts()).unwrap().iter().all(|v| *v == 0.0));
        let sp = Network::zeros("E", small_enc(), NetworkConfig::new(2, 4, Head::Softplus), 2).unwrap();
        assert!(sp.forward(&pts()).unwrap().iter().all(|v| *v == std::f64::consts::LN_2));
    }

    #[test]
    fn one_neuron_closed_form() {
        let enc = EncodingConfig { f_min: 0.5, omega: 1, ..Default::default() };
        let cfg = NetworkConfig::new(1, 1, Head::Linear);
        let mut net = Network::zeros("u", enc, cfg, 1).unwrap();
        // layer 0: 1x4 weight, 1 bias; head: 1x1 weight, 1 bias
        let w0 = [0.2, -0.1, 0.05, 0.3];
        let (b0, w1, b1) = (0.01, 1.7, -0.4);
        let mut p = w0.to_vec();
        p.extend([b0, w1, b1]);
        net.set_params(p).unwrap();
        let (x, y) = (0.4, 0.8);
        let e = positional_encode(x, y, &enc);
        let z: f64 = w0.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() + b0;
        let want = w1 * (30.0 * z).sin() + b1;
        let got = net.forward(&[(x, y)]).unwrap()[[0, 0]];
        assert!((got - want).abs() < 1e-13, "{got} vs {want}");
    }

    #[test]
    fn softplus_is_stable_and_positive() {
        assert_eq!(softplus(0.0), std::f64::consts::LN_2);
        assert!(softplus(-800.0) >= 0.0);
        assert_eq!(softplus(800.0), 800.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-16);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        for y in [1e-6, 0.25, 0.3, 1.0, 40.0] {
            assert!((softplus(inverse_softplus(y)) - y).abs() <= 1e-14 * y.max(1.0));
        }
    }

    #[test]
    fn init_is_reproducible() {
        let cfg = NetworkConfig::new(3, 8, Head::Linear);
        let a = Network::init("u", small_enc(), cfg, 2, 9).unwrap();
        let b = Network::init("u", small_enc(), cfg, 2, 9).unwrap();
        let c = Network::init("u", small_enc(), cfg, 2, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.num_params(), 12 * 8 + 8 + 2 * (8 * 8 + 8) + 8 * 2 + 2);
    }

    #[test]
    fn batch_order_invariance() {
        let net = Network::init("u", small_enc(), NetworkConfig::new(3, 16, Head::Softplus), 3, 4).unwrap();
        let p = pts();
        let batch = net.forward(&p).unwrap();
        for (r, pt) in p.iter().enumerate() {
            let single = net.forward(std::slice::from_ref(pt)).unwrap();
            for c in 0..3 {
                assert!((single[[0, c]] - batch[[r, c]]).abs() < 1e-12);
            }
        }
        let rev: Vec<_> = p.iter().rev().copied().collect();
        let rb = net.forward(&rev).unwrap();
        for r in 0..p.len() {
            for c in 0..3 {
                assert!((rb[[p.len() - 1 - r, c]] - batch[[r, c]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_parameters_fail_fast() {
        let mut net = Network::init("u", small_enc(), NetworkConfig::new(2, 4, Head::Linear), 1, 1).unwrap();
        net.params_mut()[0] = f64::INFINITY;
        match net.forward(&[(1.0, 1.0)]) {
            Err(Error::NonFiniteActivation { layer, .. }) => assert_eq!(layer, 0),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    /// Central differences on every parameter.
    fn fd_gradient(net: &Network, loss: &dyn Fn(&Network) -> f64, step: f64) -> Vec<f64> {
        let mut probe = net.clone();
        (0..net.num_params())
            .map(|k| {
                let orig = net.params()[k];
                probe.params_mut()[k] = orig + step;
                let up = loss(&probe);
                probe.params_mut()[k] = orig - step;
                let down = loss(&probe);
                probe.params_mut()[k] = orig;
                (up - down) / (2.0 * step)
            })
            .collect()
    }

    fn cubic_loss(out: &Array2<f64>, targets: &Array2<f64>) -> (f64, Array2<f64>) {
        let d = out - targets;
        let loss = d.mapv(|v| v * v * (1.0 + 0.3 * v)).sum();
        (loss, d.mapv(|v| 2.0 * v + 0.9 * v * v))
    }

    #[test]
    fn gradients_match_finite_differences() {
        for head in [Head::Linear, Head::Softplus] {
            let net = Network::init("n", small_enc(), NetworkConfig::new(2, 6, head), 2, 17).unwrap();
            let p = pts();
            let targets = Array2::from_shape_fn((p.len(), 2), |(i, j)| 0.1 * i as f64 - 0.2 * j as f64);
            let (_, g) = parameter_gradients(&net, &p, |o| cubic_loss(o, &targets)).unwrap();
            let fd = fd_gradient(&net, &|n| cubic_loss(&n.forward(&p).unwrap(), &targets).0, 1e-5);
            for (k, (a, b)) in g.iter().zip(&fd).enumerate() {
                // rtol 1e-5 plus an absolute floor at the central-difference roundoff level
                let ok = (a - b).abs() <= 1e-5 * a.abs() + 1e-10;
                assert!(ok, "{head:?} param {k}: analytic {a} vs fd {b}");
            }
        }
    }

    #[test]
    fn half_squared_norm_of_head_bias() {
        // Zero hidden/head weights make the output equal the head bias, so
        // loss = 1/2 |b|^2 and its gradient is b itself.
        let mut net = Network::zeros("n", small_enc(), NetworkConfig::new(2, 4, Head::Linear), 3).unwrap();
        let bias = net.layers()[2].bias;
        net.params_mut()[bias..bias + 3].copy_from_slice(&[0.5, -1.25, 2.0]);
        let (loss, g) = parameter_gradients(&net, &[(0.2, 0.3)], |o| (0.5 * o.mapv(|v| v * v).sum(), o.clone())).unwrap();
        assert!((loss - 0.5 * (0.25 + 1.5625 + 4.0)).abs() < 1e-15);
        assert_eq!(&g[bias..bias + 3], &[0.5, -1.25, 2.0]);
    }

    #[test]
    fn unused_output_has_zero_gradient_block() {
        let net = Network::init("n", small_enc(), NetworkConfig::new(2, 5, Head::Linear), 2, 3).unwrap();
        let (_, g) = parameter_gradients(&net, &pts(), |o| {
            let mut d = Array2::zeros(o.dim());
            d.column_mut(0).fill(1.0);
            (o.column(0).sum(), d)
        })
        .unwrap();
        let head = net.layers()[2];
        // Row 1 of the head weight and bias entry 1 only feed output channel 1.
        assert!(g[head.weight + head.cols..head.bias].iter().all(|v| *v == 0.0));
        assert_eq!(g[head.bias + 1], 0.0);
    }

    #[test]
    fn non_finite_loss_rejected() {
        let net = Network::init("n", small_enc(), NetworkConfig::new(1, 2, Head::Linear), 1, 3).unwrap();
        let r = parameter_gradients(&net, &pts(), |o| (f64::NAN, o.clone()));
        assert!(matches!(r, Err(Error::NonFiniteLoss { .. })));
    }
}
