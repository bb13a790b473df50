//! Scalar-output multilayer perceptron with exact reverse-mode gradients.
//!
//! Parameters live in one flat vector. Dense layers are stored in order
//! (input layer, hidden layers, output layer); within a layer the weights come
//! first as an `out x in` row-major block, followed by the `out` biases.
//!
//! An optional affine input map `(x - shift) / scale` is applied before the
//! first layer; it is part of the architecture, not a trained parameter.
//!
//! With `residual` set, hidden layers after the first are grouped in pairs and
//! each pair adds its output to its input:
//! `h <- h + act(W2 act(W1 h + b1) + b2)`. An odd trailing layer is plain.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows per chunk when splitting a batch across threads. Fixed so that the
/// reduction order, and therefore every sum, does not depend on the pool size.
pub const CHUNK_ROWS: usize = 2048;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu {
        #[serde(default = "default_slope")]
        slope: f64,
    },
}

fn default_slope() -> f64 {
    DEFAULT_LEAKY_SLOPE
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
        }
    }

    #[inline]
    fn slope_at(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }
}

/// Architecture of a scalar-output network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    #[serde(default)]
    pub residual: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_scaling: Option<InputScaling>,
}

/// Per-coordinate input standardization `(x - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputScaling {
    /// Column means and standard deviations of row-major `rows` with `dim`
    /// columns; a constant column keeps unit scale.
    pub fn from_rows(rows: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || rows.is_empty() || !rows.len().is_multiple_of(dim) {
            return Err(Error::Size(
                "cannot standardize an empty or ragged input set".into(),
            ));
        }
        let n = (rows.len() / dim) as f64;
        let mut shift = vec![0.0; dim];
        for row in rows.chunks_exact(dim) {
            for (m, x) in shift.iter_mut().zip(row) {
                *m += x;
            }
        }
        shift.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in rows.chunks_exact(dim) {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&shift) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { shift, scale })
    }
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden: Vec<usize>,
        activation: Activation,
        residual: bool,
    ) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden,
            activation,
            residual,
            input_scaling: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `depth` hidden layers of equal `width`.
    pub fn uniform(
        input_dim: usize,
        depth: usize,
        width: usize,
        activation: Activation,
        residual: bool,
    ) -> Result<Self> {
        Self::new(input_dim, vec![width; depth], activation, residual)
    }

    pub fn with_input_scaling(mut self, scaling: InputScaling) -> Result<Self> {
        self.input_scaling = Some(scaling);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.input_dim) {
            return Err(Error::InvalidSpec(format!(
                "input_dim must be 1 or 2, got {}",
                self.input_dim
            )));
        }
        if let Some(sc) = &self.input_scaling {
            if sc.shift.len() != self.input_dim || sc.scale.len() != self.input_dim {
                return Err(Error::InvalidSpec(
                    "input scaling must match input_dim".into(),
                ));
            }
            if sc.shift.iter().any(|x| !x.is_finite())
                || sc.scale.iter().any(|x| !(*x > 0.0 && x.is_finite()))
            {
                return Err(Error::InvalidSpec(
                    "input scaling needs finite shifts and positive scales".into(),
                ));
            }
        }
        if self.hidden.is_empty() {
            return Err(Error::InvalidSpec(
                "at least one hidden layer is required".into(),
            ));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidSpec("hidden widths must be positive".into()));
        }
        if self.residual && self.hidden.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::InvalidSpec(
                "residual networks need equal hidden widths".into(),
            ));
        }
        if let Activation::LeakyRelu { slope } = self.activation {
            if !slope.is_finite() {
                return Err(Error::InvalidSpec("leaky slope must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        1
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden.len() + 2);
        d.push(self.input_dim);
        d.extend_from_slice(&self.hidden);
        d.push(1);
        d
    }

    /// Number of dense layers, output layer included.
    pub fn n_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn param_count(&self) -> usize {
        self.dims().windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    fn layouts(&self) -> Vec<Layout> {
        let mut offset = 0;
        self.dims()
            .windows(2)
            .map(|w| {
                let l = Layout {
                    offset,
                    fan_in: w[0],
                    fan_out: w[1],
                };
                offset += w[0] * w[1] + w[1];
                l
            })
            .collect()
    }

    /// Hidden-layer grouping: `(first, Some(second))` for a residual pair.
    fn blocks(&self) -> Vec<(usize, Option<usize>)> {
        let n = self.hidden.len();
        let mut blocks = vec![(0, None)];
        let mut i = 1;
        while i < n {
            if self.residual && i + 1 < n {
                blocks.push((i, Some(i + 1)));
                i += 2;
            } else {
                blocks.push((i, None));
                i += 1;
            }
        }
        blocks
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    offset: usize,
    fan_in: usize,
    fan_out: usize,
}

impl Layout {
    fn weights<'a>(&self, p: &'a [f64]) -> ArrayView2<'a, f64> {
        let n = self.fan_in * self.fan_out;
        ArrayView2::from_shape(
            (self.fan_out, self.fan_in),
            &p[self.offset..self.offset + n],
        )
        .expect("layout matches parameter vector")
    }

    fn bias<'a>(&self, p: &'a [f64]) -> ArrayView1<'a, f64> {
        let start = self.offset + self.fan_in * self.fan_out;
        ArrayView1::from(&p[start..start + self.fan_out])
    }

    fn grads<'a>(&self, g: &'a mut [f64]) -> (ArrayViewMut2<'a, f64>, &'a mut [f64]) {
        let n = self.fan_in * self.fan_out;
        let (w, b) = g[self.offset..self.offset + n + self.fan_out].split_at_mut(n);
        (
            ArrayViewMut2::from_shape((self.fan_out, self.fan_in), w)
                .expect("layout matches gradient"),
            b,
        )
    }
}

/// Network parameters together with their architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    spec: MlpSpec,
    params: Vec<f64>,
}

/// Intermediate values of a batched forward pass, consumed by `backward`.
pub struct Trace {
    /// Input to every dense layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of every hidden layer.
    pre: Vec<Array2<f64>>,
    pub outputs: Array1<f64>,
}

impl MlpModel {
    /// He-style initialization: weights drawn from `N(0, 2 / fan_in)`, zero biases.
    pub fn init(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; spec.param_count()];
        for l in spec.layouts() {
            let normal = Normal::new(0.0, (2.0 / l.fan_in as f64).sqrt()).expect("positive std");
            for w in &mut params[l.offset..l.offset + l.fan_in * l.fan_out] {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(Error::InvalidSpec(format!(
                "expected {} parameters, got {}",
                spec.param_count(),
                params.len()
            )));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        let input = self.single_row(x)?;
        Ok(self.forward_batch(input.view())?[0])
    }

    /// Gradient of `upstream * forward(x)` with respect to the parameters.
    pub fn grad_params(&self, x: &[f64], upstream: f64) -> Result<Vec<f64>> {
        let input = self.single_row(x)?;
        let trace = self.forward_trace(input.view())?;
        let mut grad = vec![0.0; self.params.len()];
        self.backward(&trace, ArrayView1::from(&[upstream][..]), &mut grad);
        Ok(grad)
    }

    fn single_row(&self, x: &[f64]) -> Result<Array2<f64>> {
        if x.len() != self.spec.input_dim {
            return Err(Error::Shape {
                expected: self.spec.input_dim,
                got: x.len(),
            });
        }
        Ok(Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row shape"))
    }

    fn check_batch(&self, inputs: &ArrayView2<f64>) -> Result<()> {
        if inputs.ncols() != self.spec.input_dim {
            return Err(Error::Shape {
                expected: self.spec.input_dim,
                got: inputs.ncols(),
            });
        }
        Ok(())
    }

    fn scale_inputs(&self, inputs: &ArrayView2<f64>) -> Option<Array2<f64>> {
        let sc = self.spec.input_scaling.as_ref()?;
        let mut x = inputs.to_owned();
        for (mut col, (m, s)) in x
            .columns_mut()
            .into_iter()
            .zip(sc.shift.iter().zip(&sc.scale))
        {
            col.mapv_inplace(|v| (v - m) / s);
        }
        Some(x)
    }

    /// Outputs for every row of `inputs` (`batch x input_dim`).
    pub fn forward_batch(&self, inputs: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_batch(&inputs)?;
        let scaled = self.scale_inputs(&inputs);
        let inputs = scaled.as_ref().map_or(inputs, |a| a.view());
        let layouts = self.spec.layouts();
        let act = self.spec.activation;
        let p = &self.params[..];
        let mut h = dense(&inputs, &layouts[0], p);
        h.mapv_inplace(|z| act.apply(z));
        for (first, second) in self.spec.blocks().into_iter().skip(1) {
            let mut u = dense(&h.view(), &layouts[first], p);
            u.mapv_inplace(|z| act.apply(z));
            match second {
                Some(k) => {
                    let v = dense(&u.view(), &layouts[k], p);
                    Zip::from(&mut h)
                        .and(&v)
                        .for_each(|h, &z| *h += act.apply(z));
                }
                None => h = u,
            }
        }
        let out = dense(&h.view(), layouts.last().expect("output layer"), p);
        Ok(out.column(0).to_owned())
    }

    /// Forward pass that keeps what `backward` needs.
    pub fn forward_trace(&self, inputs: ArrayView2<f64>) -> Result<Trace> {
        self.check_batch(&inputs)?;
        let scaled = self.scale_inputs(&inputs);
        let inputs = scaled.as_ref().map_or(inputs, |a| a.view());
        let layouts = self.spec.layouts();
        let act = self.spec.activation;
        let p = &self.params[..];
        let n = self.spec.n_layers();
        let mut layer_inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n - 1);

        layer_inputs.push(inputs.to_owned());
        let z = dense(&inputs, &layouts[0], p);
        let mut h = z.mapv(|z| act.apply(z));
        pre.push(z);
        for (first, second) in self.spec.blocks().into_iter().skip(1) {
            let z1 = dense(&h.view(), &layouts[first], p);
            let u = z1.mapv(|z| act.apply(z));
            match second {
                Some(k) => {
                    let z2 = dense(&u.view(), &layouts[k], p);
                    let mut next = h.clone();
                    Zip::from(&mut next)
                        .and(&z2)
                        .for_each(|h, &z| *h += act.apply(z));
                    layer_inputs.push(h);
                    layer_inputs.push(u);
                    pre.push(z1);
                    pre.push(z2);
                    h = next;
                }
                None => {
                    layer_inputs.push(h);
                    pre.push(z1);
                    h = u;
                }
            }
        }
        let out = dense(&h.view(), layouts.last().expect("output layer"), p);
        layer_inputs.push(h);
        Ok(Trace {
            inputs: layer_inputs,
            pre,
            outputs: out.column(0).to_owned(),
        })
    }

    /// Adds `sum_i upstream[i] * d output_i / d params` into `grad`.
    pub fn backward(&self, trace: &Trace, upstream: ArrayView1<f64>, grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer length");
        assert_eq!(upstream.len(), trace.outputs.len(), "upstream length");
        let layouts = self.spec.layouts();
        let act = self.spec.activation;
        let p = &self.params[..];
        let last = layouts.len() - 1;

        let dz_out = upstream.to_owned().insert_axis(Axis(1));
        // gradient w.r.t. the input of the output layer
        let mut dh = accumulate_layer(&layouts[last], p, grad, &dz_out, &trace.inputs[last], true)
            .expect("hidden layers precede the output layer");

        for (first, second) in self.spec.blocks().into_iter().rev() {
            match second {
                Some(k) => {
                    let mut dz2 = dh.clone();
                    Zip::from(&mut dz2)
                        .and(&trace.pre[k])
                        .for_each(|d, &z| *d *= act.slope_at(z));
                    let mut du =
                        accumulate_layer(&layouts[k], p, grad, &dz2, &trace.inputs[k], true)
                            .expect("inner layer");
                    Zip::from(&mut du)
                        .and(&trace.pre[first])
                        .for_each(|d, &z| *d *= act.slope_at(z));
                    let dskip =
                        accumulate_layer(&layouts[first], p, grad, &du, &trace.inputs[first], true)
                            .expect("inner layer");
                    dh += &dskip;
                }
                None => {
                    let mut dz = dh;
                    Zip::from(&mut dz)
                        .and(&trace.pre[first])
                        .for_each(|d, &z| *d *= act.slope_at(z));
                    match accumulate_layer(
                        &layouts[first],
                        p,
                        grad,
                        &dz,
                        &trace.inputs[first],
                        first > 0,
                    ) {
                        Some(d) => dh = d,
                        None => return,
                    }
                }
            }
        }
    }

    /// Batch objective and its parameter gradient, split into fixed chunks of
    /// rows that may run in parallel.
    ///
    /// For each chunk `loss_fn(first_row, outputs)` returns the chunk's loss
    /// contribution and the upstream derivative for each of its outputs.
    /// Chunk results are reduced in index order.
    pub fn loss_and_grad<F>(&self, inputs: ArrayView2<f64>, loss_fn: F) -> Result<(f64, Vec<f64>)>
    where
        F: Fn(usize, &[f64]) -> (f64, Vec<f64>) + Sync,
    {
        self.check_batch(&inputs)?;
        let rows = inputs.nrows();
        let n_chunks = rows.div_ceil(CHUNK_ROWS).max(1);
        let parts: Vec<Result<(f64, Vec<f64>)>> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let start = c * CHUNK_ROWS;
                let end = (start + CHUNK_ROWS).min(rows);
                let chunk = inputs.slice(ndarray::s![start..end, ..]);
                let trace = self.forward_trace(chunk)?;
                let outputs = trace.outputs.as_slice().expect("contiguous outputs");
                let (loss, upstream) = loss_fn(start, outputs);
                let mut grad = vec![0.0; self.params.len()];
                self.backward(&trace, ArrayView1::from(&upstream[..]), &mut grad);
                Ok((loss, grad))
            })
            .collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        for part in parts {
            let (l, g) = part?;
            loss += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        Ok((loss, grad))
    }

    /// Forward pass over many rows in fixed chunks.
    pub fn predict(&self, inputs: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check_batch(&inputs)?;
        let rows = inputs.nrows();
        let parts: Vec<Result<Array1<f64>>> = (0..rows.div_ceil(CHUNK_ROWS))
            .into_par_iter()
            .map(|c| {
                let start = c * CHUNK_ROWS;
                let end = (start + CHUNK_ROWS).min(rows);
                self.forward_batch(inputs.slice(ndarray::s![start..end, ..]))
            })
            .collect();
        let mut out = Vec::with_capacity(rows);
        for part in parts {
            out.extend(part?);
        }
        Ok(out)
    }

    /// Convenience for one-dimensional inputs.
    pub fn predict_scalar(&self, xs: &[f64]) -> Result<Vec<f64>> {
        let inputs = ArrayView2::from_shape((xs.len(), 1), xs).expect("column shape");
        self.predict(inputs)
    }
}

fn dense(input: &ArrayView2<f64>, l: &Layout, p: &[f64]) -> Array2<f64> {
    let mut z = Array2::zeros((input.nrows(), l.fan_out));
    z += &l.bias(p);
    general_mat_mul(1.0, input, &l.weights(p).t(), 1.0, &mut z);
    z
}

/// Accumulates the weight and bias gradients of one dense layer given the
/// gradient at its pre-activation; returns the gradient at its input.
fn accumulate_layer(
    l: &Layout,
    p: &[f64],
    grad: &mut [f64],
    dz: &Array2<f64>,
    input: &Array2<f64>,
    want_input_grad: bool,
) -> Option<Array2<f64>> {
    {
        let (mut gw, gb) = l.grads(grad);
        general_mat_mul(1.0, &dz.t(), input, 1.0, &mut gw);
        for (b, col) in gb.iter_mut().zip(dz.columns()) {
            *b += col.sum();
        }
    }
    want_input_grad.then(|| dz.dot(&l.weights(p)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(depth: usize, width: usize, act: Activation, residual: bool) -> MlpSpec {
        MlpSpec::uniform(1, depth, width, act, residual).unwrap()
    }

    #[test]
    fn param_count_and_layout() {
        let s = MlpSpec::new(2, vec![3, 4], Activation::Relu, false).unwrap();
        assert_eq!(s.param_count(), (2 * 3 + 3) + (3 * 4 + 4) + (4 + 1));
        let l = s.layouts();
        assert_eq!(l[1].offset, 9);
        assert_eq!(l[2].offset, 25);
    }

    #[test]
    fn invalid_specs() {
        assert!(MlpSpec::new(3, vec![4], Activation::Relu, false).is_err());
        assert!(MlpSpec::new(1, vec![], Activation::Relu, false).is_err());
        assert!(MlpSpec::new(1, vec![4, 0], Activation::Relu, false).is_err());
        assert!(MlpSpec::new(1, vec![4, 5, 4], Activation::Relu, true).is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let s = spec(3, 8, Activation::Relu, false);
        let a = MlpModel::init(s.clone(), 11).unwrap();
        let b = MlpModel::init(s.clone(), 11).unwrap();
        assert_eq!(a, b);
        for l in s.layouts() {
            assert!(l.bias(a.params()).iter().all(|&b| b == 0.0));
        }
        assert_eq!(a.forward(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn constant_network() {
        let s = spec(1, 4, Activation::Relu, false);
        let mut params = vec![0.0; s.param_count()];
        *params.last_mut().unwrap() = 0.7;
        let m = MlpModel::from_params(s, params).unwrap();
        for x in [-3.0, 0.0, 0.5, 10.0] {
            assert_eq!(m.forward(&[x]).unwrap(), 0.7);
        }
        // dead hidden units kill every path except the output bias
        let g = m.grad_params(&[1.5], 1.0).unwrap();
        let n = g.len();
        assert!(g[..n - 5].iter().all(|&v| v == 0.0));
        assert_eq!(g[n - 1], 1.0);
    }

    #[test]
    fn identity_network() {
        let s = spec(1, 1, Activation::Relu, false);
        // w1 = 1, b1 = 0, w2 = 1, b2 = 0
        let m = MlpModel::from_params(s, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(m.forward(&[0.5]).unwrap(), 0.5);
    }

    #[test]
    fn residual_with_zero_hidden_weights_is_the_skip_path() {
        let s = spec(5, 4, Activation::Relu, true);
        let mut m = MlpModel::init(s.clone(), 3).unwrap();
        let layouts = s.layouts();
        let plain = {
            // network made of the first hidden layer and the output layer only
            let short = spec(1, 4, Activation::Relu, false);
            let mut p = m.params()[..layouts[1].offset].to_vec();
            let out = layouts.last().unwrap();
            p.extend_from_slice(&m.params()[out.offset..]);
            MlpModel::from_params(short, p).unwrap()
        };
        for l in &layouts[1..layouts.len() - 1] {
            m.params_mut()[l.offset..l.offset + l.fan_in * l.fan_out + l.fan_out].fill(0.0);
        }
        for x in [0.3, 1.0, 2.5] {
            assert!((m.forward(&[x]).unwrap() - plain.forward(&[x]).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_errors() {
        let m = MlpModel::init(spec(1, 2, Activation::Relu, false), 0).unwrap();
        assert!(matches!(m.forward(&[1.0, 2.0]), Err(Error::Shape { .. })));
        assert!(m.grad_params(&[], 1.0).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let m = MlpModel::init(spec(3, 8, Activation::leaky(), false), 5).unwrap();
        assert!(m
            .grad_params(&[0.9], 0.0)
            .unwrap()
            .iter()
            .all(|&g| g == 0.0));
    }

    #[test]
    fn batch_and_single_agree() {
        let m = MlpModel::init(spec(4, 8, Activation::Relu, true), 9).unwrap();
        let xs: Vec<f64> = (0..50).map(|i| 0.5 + 0.03 * i as f64).collect();
        let batch = m.predict_scalar(&xs).unwrap();
        for (x, y) in xs.iter().zip(batch) {
            assert_eq!(m.forward(&[*x]).unwrap(), y);
        }
    }

    #[test]
    fn chunked_gradient_matches_per_sample_sum() {
        let m = MlpModel::init(spec(2, 6, Activation::leaky(), false), 2).unwrap();
        let xs: Vec<f64> = (0..(CHUNK_ROWS + 37))
            .map(|i| 0.2 + 1e-3 * i as f64)
            .collect();
        let inputs = ArrayView2::from_shape((xs.len(), 1), &xs[..]).unwrap();
        // loss = sum_i 0.5 * y_i^2
        let (loss, grad) = m
            .loss_and_grad(inputs, |_, ys| {
                (ys.iter().map(|y| 0.5 * y * y).sum(), ys.to_vec())
            })
            .unwrap();
        let mut expect_grad = vec![0.0; grad.len()];
        let mut expect_loss = 0.0;
        for x in &xs {
            let y = m.forward(&[*x]).unwrap();
            expect_loss += 0.5 * y * y;
            for (e, g) in expect_grad.iter_mut().zip(m.grad_params(&[*x], y).unwrap()) {
                *e += g;
            }
        }
        assert!((loss - expect_loss).abs() < 1e-9 * expect_loss.abs().max(1.0));
        for (a, b) in grad.iter().zip(&expect_grad) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn input_scaling_is_applied_before_the_first_layer() {
        let plain = MlpModel::init(spec(2, 5, Activation::Relu, false), 4).unwrap();
        let sc = InputScaling {
            shift: vec![1.5],
            scale: vec![0.5],
        };
        let scaled = MlpModel::from_params(
            plain.spec().clone().with_input_scaling(sc).unwrap(),
            plain.params().to_vec(),
        )
        .unwrap();
        let y = scaled.forward(&[2.0]).unwrap();
        assert_eq!(y, plain.forward(&[1.0]).unwrap());
        assert_eq!(
            scaled.grad_params(&[2.0], 1.0).unwrap(),
            plain.grad_params(&[1.0], 1.0).unwrap()
        );
    }

    #[test]
    fn standardization_statistics() {
        let sc = InputScaling::from_rows(&[1.0, 5.0, 3.0, 5.0], 2).unwrap();
        assert_eq!(sc.shift, vec![2.0, 5.0]);
        assert_eq!(sc.scale, vec![1.0, 1.0]);
        assert!(InputScaling::from_rows(&[1.0, 2.0, 3.0], 2).is_err());
        let bad = InputScaling {
            shift: vec![0.0],
            scale: vec![0.0],
        };
        assert!(spec(1, 2, Activation::Relu, false)
            .with_input_scaling(bad)
            .is_err());
    }

    #[test]
    fn concurrent_evaluation_is_bitwise_identical() {
        let m = MlpModel::init(spec(3, 16, Activation::Relu, false), 9).unwrap();
        let xs: Vec<f64> = (0..5000).map(|i| 0.5 + 1e-4 * i as f64).collect();
        let reference = m.predict_scalar(&xs).unwrap();
        let results: Vec<Vec<f64>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..4)
                .map(|_| scope.spawn(|| m.predict_scalar(&xs).unwrap()))
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for r in results {
            assert_eq!(r, reference);
        }
    }
}
