//! Dense networks with exact reverse-mode gradients, Adam, the estimator
//! network assembly and the checkpoint format.

mod adam;
mod checkpoint;
mod ppl;

use std::fmt::Debug;

use nalgebra::DMatrix;
use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{clip_grad_norm, AdamConfig, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use ppl::{
    ppl_loss, EstimatorForward, EstimatorOutputGrad, PplDims, PplGrads, PplLoss, PplNet, PplOutput, PplTargets, PplWidths,
    ScanFeatures, COLLISION_CLAMP,
};

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("input width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("collision targets must be 0 or 1, got {0}")]
    NonBinaryTarget(f64),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

/// Scalar type the networks run in; training uses `f32`, gradient checks `f64`.
pub trait Real: Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static {
    /// `c = a · b + beta · c` for strided matrices, `a` m×k, `b` k×n, `c` m×n row-major.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, a: &[Self], rsa: usize, csa: usize, b: &[Self], rsb: usize, csb: usize, beta: Self, c: &mut [Self]);

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("real converts to f64")
    }
}

fn check_gemm_bounds(m: usize, k: usize, n: usize, a: usize, rsa: usize, csa: usize, b: usize, rsb: usize, csb: usize, c: usize) {
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!((m - 1) * rsa + (k - 1) * csa < a, "gemm: a out of bounds");
        assert!((k - 1) * rsb + (n - 1) * csb < b, "gemm: b out of bounds");
    }
    assert!(m * n <= c, "gemm: c out of bounds");
}

impl Real for f32 {
    fn gemm(m: usize, k: usize, n: usize, a: &[f32], rsa: usize, csa: usize, b: &[f32], rsb: usize, csb: usize, beta: f32, c: &mut [f32]) {
        check_gemm_bounds(m, k, n, a.len(), rsa, csa, b.len(), rsb, csb, c.len());
        // SAFETY: every index touched by the strided views lies inside the slices, checked above.
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, 1.0, a.as_ptr(), rsa as isize, csa as isize, b.as_ptr(), rsb as isize, csb as isize, beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
}

impl Real for f64 {
    fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize, beta: f64, c: &mut [f64]) {
        check_gemm_bounds(m, k, n, a.len(), rsa, csa, b.len(), rsb, csb, c.len());
        // SAFETY: every index touched by the strided views lies inside the slices, checked above.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, 1.0, a.as_ptr(), rsa as isize, csa as isize, b.as_ptr(), rsb as isize, csb as isize, beta,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    /// Exponential-linear unit with unit scale.
    Elu,
    Logistic,
}

impl Activation {
    fn code(self) -> u32 {
        match self {
            Activation::Identity => 0,
            Activation::Elu => 1,
            Activation::Logistic => 2,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Elu),
            2 => Some(Activation::Logistic),
            _ => None,
        }
    }

    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Elu => {
                if x > T::zero() {
                    x
                } else {
                    x.exp() - T::one()
                }
            }
            Activation::Logistic => logistic(x),
        }
    }

    /// Derivative at pre-activation `x` given the activation value `y`.
    fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Elu => {
                if x > T::zero() {
                    T::one()
                } else {
                    y + T::one()
                }
            }
            Activation::Logistic => y * (T::one() - y),
        }
    }
}

pub fn logistic<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseNetSpec {
    /// Input, hidden…, output widths.
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl DenseNetSpec {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        DenseNetSpec { widths, hidden: Activation::Elu, output: Activation::Identity }
    }

    pub fn with_output(mut self, output: Activation) -> Self {
        self.output = output;
        self
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.widths.len() < 2 {
            return Err(NeuralError::InvalidSpec("need at least input and output widths".into()));
        }
        if self.widths.contains(&0) {
            return Err(NeuralError::InvalidSpec(format!("zero width in {:?}", self.widths)));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated spec")
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.n_layers() {
            self.output
        } else {
            self.hidden
        }
    }

    /// Offsets of each layer's weight block, followed by its bias block.
    fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut offset = 0;
        self.widths
            .windows(2)
            .map(|w| {
                let weights = offset;
                offset += w[0] * w[1];
                let bias = offset;
                offset += w[1];
                (weights, bias)
            })
            .collect()
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    batch: usize,
    /// Input to each layer; entry 0 is the network input.
    inputs: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    output: Vec<T>,
}

impl<T: Real> Cache<T> {
    pub fn output(&self) -> &[T] {
        &self.output
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Fully connected network with parameters in one flat vector: per layer the
/// out×in row-major weights, then the biases.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet<T> {
    spec: DenseNetSpec,
    offsets: Vec<(usize, usize)>,
    params: Vec<T>,
}

impl<T: Real> DenseNet<T> {
    /// Orthogonal weights scaled by √2 on hidden layers and `output_gain` on the last, zero biases.
    pub fn new<R: Rng + ?Sized>(spec: DenseNetSpec, rng: &mut R, output_gain: f64) -> Result<Self, NeuralError> {
        spec.validate()?;
        let offsets = spec.layer_offsets();
        let mut params = vec![T::zero(); spec.n_params()];
        let layers = spec.n_layers();
        for (l, w) in spec.widths.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let gain = if l + 1 == layers { output_gain } else { std::f64::consts::SQRT_2 };
            let q = orthogonal(n_out, n_in, rng);
            let start = offsets[l].0;
            for (dst, src) in params[start..start + n_out * n_in].iter_mut().zip(q) {
                *dst = T::of(gain * src);
            }
        }
        Ok(DenseNet { spec, offsets, params })
    }

    pub fn from_params(spec: DenseNetSpec, params: Vec<T>) -> Result<Self, NeuralError> {
        spec.validate()?;
        if params.len() != spec.n_params() {
            return Err(NeuralError::WidthMismatch { expected: spec.n_params(), got: params.len() });
        }
        let offsets = spec.layer_offsets();
        Ok(DenseNet { spec, offsets, params })
    }

    pub fn cast<U: Real>(&self) -> DenseNet<U> {
        DenseNet {
            spec: self.spec.clone(),
            offsets: self.offsets.clone(),
            params: self.params.iter().map(|p| U::of(p.as_f64())).collect(),
        }
    }

    pub fn spec(&self) -> &DenseNetSpec {
        &self.spec
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    fn check_input(&self, input: &[T], batch: usize) -> Result<(), NeuralError> {
        let expected = self.input_dim() * batch;
        if input.len() != expected {
            return Err(NeuralError::WidthMismatch { expected, got: input.len() });
        }
        Ok(())
    }

    /// Forward pass over `batch` row-major samples, keeping activations.
    pub fn forward(&self, input: &[T], batch: usize) -> Result<Cache<T>, NeuralError> {
        self.check_input(input, batch)?;
        let mut inputs = Vec::with_capacity(self.spec.n_layers());
        let mut pre = Vec::with_capacity(self.spec.n_layers());
        let mut x = input.to_vec();
        for l in 0..self.spec.n_layers() {
            let (z, y) = self.layer_forward(l, &x, batch);
            inputs.push(std::mem::replace(&mut x, y));
            pre.push(z);
        }
        Ok(Cache { batch, inputs, pre, output: x })
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, input: &[T], batch: usize) -> Result<Vec<T>, NeuralError> {
        self.check_input(input, batch)?;
        let mut x = input.to_vec();
        for l in 0..self.spec.n_layers() {
            x = self.layer_forward(l, &x, batch).1;
        }
        Ok(x)
    }

    fn layer_forward(&self, l: usize, x: &[T], batch: usize) -> (Vec<T>, Vec<T>) {
        let (n_in, n_out) = (self.spec.widths[l], self.spec.widths[l + 1]);
        let (w_off, b_off) = self.offsets[l];
        let w = &self.params[w_off..w_off + n_in * n_out];
        let b = &self.params[b_off..b_off + n_out];
        let mut z: Vec<T> = b.iter().copied().cycle().take(batch * n_out).collect();
        // z = x · Wᵀ + b
        T::gemm(batch, n_in, n_out, x, n_in, 1, w, 1, n_in, T::one(), &mut z);
        let act = self.spec.activation(l);
        let y = z.iter().map(|&v| act.apply(v)).collect();
        (z, y)
    }

    /// Accumulates parameter gradients of `Σ output_grad · output` into
    /// `grads` and returns the gradient with respect to the input.
    pub fn backward(&self, cache: &Cache<T>, output_grad: &[T], grads: &mut [T]) -> Result<Vec<T>, NeuralError> {
        self.backward_impl(cache, output_grad, grads, true).map(|dx| dx.expect("input gradient requested"))
    }

    /// Like [`DenseNet::backward`] but skips the input gradient.
    pub fn accumulate_grads(&self, cache: &Cache<T>, output_grad: &[T], grads: &mut [T]) -> Result<(), NeuralError> {
        self.backward_impl(cache, output_grad, grads, false).map(|_| ())
    }

    fn backward_impl(
        &self,
        cache: &Cache<T>,
        output_grad: &[T],
        grads: &mut [T],
        input_grad: bool,
    ) -> Result<Option<Vec<T>>, NeuralError> {
        let batch = cache.batch;
        let expected = batch * self.output_dim();
        if output_grad.len() != expected {
            return Err(NeuralError::WidthMismatch { expected, got: output_grad.len() });
        }
        if grads.len() != self.n_params() {
            return Err(NeuralError::WidthMismatch { expected: self.n_params(), got: grads.len() });
        }
        let mut dy = output_grad.to_vec();
        for l in (0..self.spec.n_layers()).rev() {
            let (n_in, n_out) = (self.spec.widths[l], self.spec.widths[l + 1]);
            let act = self.spec.activation(l);
            let z = &cache.pre[l];
            let y = if l + 1 == self.spec.n_layers() { &cache.output } else { &cache.inputs[l + 1] };
            for ((d, &zv), &yv) in dy.iter_mut().zip(z).zip(y) {
                *d = *d * act.derivative(zv, yv);
            }
            let (w_off, b_off) = self.offsets[l];
            let x = &cache.inputs[l];
            // dW += dzᵀ · x
            T::gemm(n_out, batch, n_in, &dy, 1, n_out, x, n_in, 1, T::one(), &mut grads[w_off..w_off + n_in * n_out]);
            let db = &mut grads[b_off..b_off + n_out];
            for row in dy.chunks_exact(n_out) {
                for (g, &d) in db.iter_mut().zip(row) {
                    *g = *g + d;
                }
            }
            if l == 0 && !input_grad {
                return Ok(None);
            }
            // dx = dz · W
            let w = &self.params[w_off..w_off + n_in * n_out];
            let mut dx = vec![T::zero(); batch * n_in];
            T::gemm(batch, n_out, n_in, &dy, n_out, 1, w, n_in, 1, T::zero(), &mut dx);
            dy = dx;
        }
        Ok(Some(dy))
    }
}

/// Row-orthonormal (or column-orthonormal when tall) `rows × cols` matrix, row-major.
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // sign fix makes the distribution uniform over orthogonal matrices
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let m = if rows >= cols { q } else { q.transpose() };
    (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| m[(i, j)]).collect()
}
