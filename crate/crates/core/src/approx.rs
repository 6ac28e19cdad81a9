//! Fully-connected networks with exact reverse-mode gradients (parameters
//! and inputs), Adam, and a streaming input normalizer.
//!
//! Parameters live in one flat `Vec<f64>`; layer `l` stores its weight
//! matrix row-major as `(out, in)` followed by its bias.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};

#[derive(Debug, Error, PartialEq)]
pub enum ApproxError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("corrupt parameter record: {0}")]
    Corrupt(String),
}

impl From<DecodeError> for ApproxError {
    fn from(e: DecodeError) -> Self {
        ApproxError::Corrupt(e.to_string())
    }
}

fn check(expected: usize, got: usize) -> Result<(), ApproxError> {
    if expected == got {
        Ok(())
    } else {
        Err(ApproxError::DimensionMismatch { expected, got })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    weight: usize,
    bias: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    hidden: Activation,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

/// Activations kept by `forward_batch` for the backward pass. `outputs[0]`
/// is the input batch; the last entry is the network output.
pub struct ForwardCache {
    pub outputs: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("cache has at least the input")
    }
}

impl Mlp {
    /// Zero-initialised network with the given layer widths (input first).
    pub fn new(sizes: &[usize], hidden: Activation) -> Self {
        assert!(sizes.len() >= 2, "need an input and an output width");
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        let mut offset = 0;
        for w in sizes.windows(2) {
            let (inputs, outputs) = (w[0], w[1]);
            layers.push(Layer { inputs, outputs, weight: offset, bias: offset + inputs * outputs });
            offset += inputs * outputs + outputs;
        }
        Self { sizes: sizes.to_vec(), hidden, layers, params: vec![0.0; offset] }
    }

    /// Orthogonal weights scaled by `gain` (`output_gain` on the last
    /// layer), zero biases.
    pub fn orthogonal(sizes: &[usize], hidden: Activation, gain: f64, output_gain: f64, rng: &mut impl Rng) -> Self {
        let mut net = Self::new(sizes, hidden);
        let n_layers = net.layers.len();
        for (l, layer) in net.layers.clone().iter().enumerate() {
            let g = if l + 1 == n_layers { output_gain } else { gain };
            let q = orthogonal_matrix(layer.outputs, layer.inputs, rng);
            let w = &mut net.params[layer.weight..layer.weight + layer.inputs * layer.outputs];
            for r in 0..layer.outputs {
                for c in 0..layer.inputs {
                    w[r * layer.inputs + c] = g * q[(r, c)];
                }
            }
        }
        net
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let layer = self.layers[l];
        ArrayView2::from_shape(
            (layer.outputs, layer.inputs),
            &self.params[layer.weight..layer.weight + layer.inputs * layer.outputs],
        )
        .expect("layout")
    }

    fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let layer = self.layers[l];
        ArrayView1::from(&self.params[layer.bias..layer.bias + layer.outputs])
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ApproxError> {
        check(self.input_dim(), x.len())?;
        let batch = ArrayView2::from_shape((1, x.len()), x).expect("row");
        Ok(self.predict_batch(batch)?.into_raw_vec_and_offset().0)
    }

    /// Batched forward pass without keeping intermediates.
    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, ApproxError> {
        check(self.input_dim(), x.ncols())?;
        let n_layers = self.layers.len();
        let mut h = self.affine(0, x);
        if n_layers > 1 {
            h.mapv_inplace(|z| self.hidden.apply(z));
        }
        for l in 1..n_layers {
            h = self.affine(l, h.view());
            if l + 1 < n_layers {
                h.mapv_inplace(|z| self.hidden.apply(z));
            }
        }
        Ok(h)
    }

    fn affine(&self, l: usize, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight(l).t());
        // callers slice rows, so keep row-major whatever the product chose
        if !z.is_standard_layout() {
            z = z.as_standard_layout().into_owned();
        }
        z += &self.bias(l);
        z
    }

    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<ForwardCache, ApproxError> {
        check(self.input_dim(), x.ncols())?;
        let n_layers = self.layers.len();
        let mut outputs = Vec::with_capacity(n_layers + 1);
        outputs.push(x.to_owned());
        for l in 0..n_layers {
            let mut h = self.affine(l, outputs[l].view());
            if l + 1 < n_layers {
                h.mapv_inplace(|z| self.hidden.apply(z));
            }
            outputs.push(h);
        }
        Ok(ForwardCache { outputs })
    }

    /// Gradients of `sum(upstream ⊙ output)` with respect to the flat
    /// parameters and to the input batch.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<'_, f64>,
    ) -> Result<(Vec<f64>, Array2<f64>), ApproxError> {
        let n_layers = self.layers.len();
        check(self.output_dim(), upstream.ncols())?;
        check(cache.outputs[0].nrows(), upstream.nrows())?;
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = upstream.to_owned();
        for l in (0..n_layers).rev() {
            let layer = self.layers[l];
            let gw = delta.t().dot(&cache.outputs[l]);
            // logical (row-major) order; the product's memory layout varies with shape
            for (g, v) in grads[layer.weight..layer.weight + layer.inputs * layer.outputs].iter_mut().zip(gw.iter()) {
                *g = *v;
            }
            let gb = delta.sum_axis(Axis(0));
            for (g, v) in grads[layer.bias..layer.bias + layer.outputs].iter_mut().zip(gb.iter()) {
                *g = *v;
            }
            let mut upstream_h = delta.dot(&self.weight(l));
            if l > 0 {
                let hidden = self.hidden;
                ndarray::Zip::from(&mut upstream_h)
                    .and(&cache.outputs[l])
                    .for_each(|d, &h| *d *= hidden.derivative_from_output(h));
            }
            delta = upstream_h;
        }
        Ok((grads, delta))
    }

    /// Single-sample convenience wrapper around `backward_batch`.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ApproxError> {
        check(self.input_dim(), x.len())?;
        check(self.output_dim(), upstream.len())?;
        let cache = self.forward_batch(ArrayView2::from_shape((1, x.len()), x).unwrap())?;
        let up = ArrayView2::from_shape((1, upstream.len()), upstream).unwrap();
        let (g, gx) = self.backward_batch(&cache, up)?;
        Ok((g, gx.into_raw_vec_and_offset().0))
    }

    /// For a scalar-output network: per-sample squared input-gradient norms
    /// `‖∇ₓ f(xᵢ)‖²` and the parameter gradient of `Σᵢ wᵢ ‖∇ₓ f(xᵢ)‖²`.
    pub fn input_gradient_penalty(
        &self,
        x: ArrayView2<'_, f64>,
        weights: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), ApproxError> {
        check(1, self.output_dim())?;
        check(x.nrows(), weights.len())?;
        let cache = self.forward_batch(x)?;
        let n_layers = self.layers.len();
        let batch = x.nrows();
        let hidden = self.hidden;

        // Reverse pass for the input gradient: gz[l] = ∂f/∂z_l, gh[l] = ∂f/∂h_l.
        let mut gz: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); n_layers];
        let mut gh: Vec<Array2<f64>> = vec![Array2::zeros((0, 0)); n_layers];
        gz[n_layers - 1] = Array2::ones((batch, 1));
        for l in (0..n_layers).rev() {
            let g = gz[l].dot(&self.weight(l));
            if l > 0 {
                let mut z = g.clone();
                ndarray::Zip::from(&mut z)
                    .and(&cache.outputs[l])
                    .for_each(|d, &h| *d *= hidden.derivative_from_output(h));
                gz[l - 1] = z;
            }
            gh[l] = g;
        }
        let input_grad = &gh[0];
        let penalties: Vec<f64> = input_grad.rows().into_iter().map(|r| r.dot(&r)).collect();

        let mut grads = vec![0.0; self.params.len()];
        let mut add = |layer: Layer, gw: &Array2<f64>, gb: Option<&Array1<f64>>| {
            let w = &mut grads[layer.weight..layer.weight + layer.inputs * layer.outputs];
            for (a, b) in w.iter_mut().zip(gw.iter()) {
                *a += b;
            }
            if let Some(gb) = gb {
                for (a, b) in grads[layer.bias..layer.bias + layer.outputs].iter_mut().zip(gb.iter()) {
                    *a += b;
                }
            }
        };

        // Adjoint sweep through the gradient computation, from the input up.
        let mut bar_gh = input_grad.clone();
        for (mut row, &w) in bar_gh.rows_mut().into_iter().zip(weights) {
            row *= 2.0 * w;
        }
        // direct adjoints of hidden outputs through σ'(h)
        let mut bar_h_direct: Vec<Option<Array2<f64>>> = vec![None; n_layers];
        for l in 0..n_layers {
            // gh[l] = gz[l] · W_l
            add(self.layers[l], &gz[l].t().dot(&bar_gh), None);
            if l + 1 == n_layers {
                break;
            }
            let bar_gz = bar_gh.dot(&self.weight(l).t());
            // gz[l] = gh[l + 1] ⊙ σ'(h_{l+1})
            let h = &cache.outputs[l + 1];
            let mut next_bar_gh = bar_gz.clone();
            ndarray::Zip::from(&mut next_bar_gh).and(h).for_each(|d, &hv| *d *= hidden.derivative_from_output(hv));
            if hidden == Activation::Tanh {
                // σ' = 1 - h², so ∂σ'/∂h = -2h
                let mut direct = bar_gz;
                ndarray::Zip::from(&mut direct)
                    .and(&gh[l + 1])
                    .and(h)
                    .for_each(|d, &g, &hv| *d *= -2.0 * hv * g);
                bar_h_direct[l] = Some(direct);
            }
            bar_gh = next_bar_gh;
        }

        // Standard backward through the forward pass, seeded by the direct terms.
        let mut bar_z_above: Option<Array2<f64>> = None;
        for l in (0..n_layers - 1).rev() {
            let mut bar_h = match bar_h_direct[l].take() {
                Some(d) => d,
                None => Array2::zeros((batch, self.layers[l].outputs)),
            };
            if let Some(bz) = &bar_z_above {
                bar_h += &bz.dot(&self.weight(l + 1));
            }
            let mut bar_z = bar_h;
            ndarray::Zip::from(&mut bar_z)
                .and(&cache.outputs[l + 1])
                .for_each(|d, &hv| *d *= hidden.derivative_from_output(hv));
            let gw = bar_z.t().dot(&cache.outputs[l]);
            let gb = bar_z.sum_axis(Axis(0));
            add(self.layers[l], &gw, Some(&gb));
            bar_z_above = Some(bar_z);
        }
        Ok((penalties, grads))
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u32(self.sizes.len() as u32);
        for &s in &self.sizes {
            w.u64(s as u64);
        }
        w.u8(self.hidden.code());
        w.f64_vec(&self.params);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, ApproxError> {
        let n = r.u32()? as usize;
        if !(2..=64).contains(&n) {
            return Err(ApproxError::Corrupt(format!("{n} layer widths")));
        }
        let sizes = (0..n).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
        let hidden = match r.u8()? {
            0 => Activation::Tanh,
            1 => Activation::Relu,
            c => return Err(ApproxError::Corrupt(format!("activation code {c}"))),
        };
        let mut net = Mlp::new(&sizes, hidden);
        let params = r.f64_vec()?;
        check(net.params.len(), params.len())?;
        net.params = params;
        Ok(net)
    }
}

fn orthogonal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let (tall, wide) = (rows.max(cols), rows.min(cols));
    let a = DMatrix::from_fn(tall, wide, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..wide {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; num_params], v: vec![0.0; num_params] }
    }

    pub fn num_params(&self) -> usize {
        self.m.len()
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter count");
        assert_eq!(grads.len(), self.m.len(), "gradient count");
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }

    pub fn encode(&self, w: &mut Writer) {
        w.f64s(&[self.lr, self.beta1, self.beta2, self.eps]);
        w.u64(self.step);
        w.f64_vec(&self.m);
        w.f64_vec(&self.v);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, ApproxError> {
        let h = r.f64s(4)?;
        let step = r.u64()?;
        let m = r.f64_vec()?;
        let v = r.f64_vec()?;
        check(m.len(), v.len())?;
        Ok(Self { lr: h[0], beta1: h[1], beta2: h[2], eps: h[3], step, m, v })
    }
}

/// Rescale `grads` in place so its Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

const STD_FLOOR: f64 = 1e-6;

/// Per-dimension running mean/variance (parallel-merge update) with
/// clipped normalisation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningNormalizer {
    mean: Vec<f64>,
    m2: Vec<f64>,
    count: f64,
    pub clip: f64,
}

impl RunningNormalizer {
    pub fn new(dim: usize, clip: f64) -> Self {
        Self { mean: vec![0.0; dim], m2: vec![0.0; dim], count: 0.0, clip }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Population variance; 1 before any data has been seen.
    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0.0 {
            vec![1.0; self.dim()]
        } else {
            self.m2.iter().map(|m| m / self.count).collect()
        }
    }

    pub fn update<'a>(&mut self, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<(), ApproxError> {
        let dim = self.dim();
        let mut n = 0.0;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        // Welford over the batch
        for row in rows {
            check(dim, row.len())?;
            n += 1.0;
            for i in 0..dim {
                let d = row[i] - mean[i];
                mean[i] += d / n;
                m2[i] += d * (row[i] - mean[i]);
            }
        }
        if n == 0.0 {
            return Ok(());
        }
        let total = self.count + n;
        for i in 0..dim {
            let delta = mean[i] - self.mean[i];
            self.mean[i] += delta * n / total;
            self.m2[i] += m2[i] + delta * delta * self.count * n / total;
        }
        self.count = total;
        Ok(())
    }

    pub fn update_batch(&mut self, batch: ArrayView2<'_, f64>) -> Result<(), ApproxError> {
        check(self.dim(), batch.ncols())?;
        let rows: Vec<Vec<f64>> = batch.rows().into_iter().map(|r| r.to_vec()).collect();
        self.update(rows.iter().map(Vec::as_slice))
    }

    fn scale(&self) -> Vec<f64> {
        self.variance().into_iter().map(|v| v.sqrt().max(STD_FLOOR)).collect()
    }

    pub fn normalize(&self, x: &[f64]) -> Result<Vec<f64>, ApproxError> {
        check(self.dim(), x.len())?;
        let std = self.scale();
        Ok(x.iter()
            .enumerate()
            .map(|(i, v)| ((v - self.mean[i]) / std[i]).clamp(-self.clip, self.clip))
            .collect())
    }

    pub fn normalize_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, ApproxError> {
        check(self.dim(), x.ncols())?;
        let std = self.scale();
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = ((*v - self.mean[i]) / std[i]).clamp(-self.clip, self.clip);
            }
        }
        Ok(out)
    }

    /// Derivative of the normalised value w.r.t. the raw input (0 where clipped).
    pub fn inverse_scale(&self) -> Vec<f64> {
        self.scale().into_iter().map(|s| 1.0 / s).collect()
    }

    pub fn encode(&self, w: &mut Writer) {
        w.f64_vec(&self.mean);
        w.f64_vec(&self.m2);
        w.f64(self.count);
        w.f64(self.clip);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self, ApproxError> {
        let mean = r.f64_vec()?;
        let m2 = r.f64_vec()?;
        check(mean.len(), m2.len())?;
        Ok(Self { mean, m2, count: r.f64()?, clip: r.f64()? })
    }
}
