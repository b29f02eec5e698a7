use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::simenv::ObsDims;

use super::{logistic, Cache, DenseNet, DenseNetSpec, NeuralError, Real};

/// Collision probabilities are clamped to `[ε, 1 − ε]` before the log loss.
pub const COLLISION_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PplDims {
    pub history: usize,
    pub proprio: usize,
    pub n_collision: usize,
    pub velocity: usize,
    pub latent: usize,
    pub scan: usize,
    pub ground_latent: usize,
    pub space_latent: usize,
}

impl PplDims {
    /// Dimensions for an observation layout; `swap_scan_latents` gives the
    /// larger latent to the space encoder instead of the ground encoder.
    pub fn from_obs(d: &ObsDims, swap_scan_latents: bool) -> Self {
        let (ground_latent, space_latent) =
            if swap_scan_latents { (d.space_latent, d.ground_latent) } else { (d.ground_latent, d.space_latent) };
        PplDims {
            history: d.history,
            proprio: d.proprio,
            n_collision: d.collision,
            velocity: d.velocity,
            latent: d.latent,
            scan: crate::sensing::SCAN_LEN,
            ground_latent,
            space_latent,
        }
    }

    pub fn encoder_output(&self) -> usize {
        self.velocity + self.n_collision + self.latent
    }

    pub fn feature_input(&self) -> usize {
        self.ground_latent + self.space_latent
    }
}

/// Hidden widths of the five sub-networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PplWidths {
    pub proprio_encoder: Vec<usize>,
    pub proprio_decoder: Vec<usize>,
    pub ground_encoder: Vec<usize>,
    pub space_encoder: Vec<usize>,
    pub feature_encoder: Vec<usize>,
}

impl Default for PplWidths {
    fn default() -> Self {
        PplWidths {
            proprio_encoder: vec![256, 128],
            proprio_decoder: vec![128, 128],
            ground_encoder: vec![256],
            space_encoder: vec![256],
            feature_encoder: vec![128],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PplNet<T> {
    pub dims: PplDims,
    pub proprio_encoder: DenseNet<T>,
    pub proprio_decoder: DenseNet<T>,
    pub ground_encoder: DenseNet<T>,
    pub space_encoder: DenseNet<T>,
    pub feature_encoder: DenseNet<T>,
}

/// Estimator pass: history → (ṽ, c̃, z̃) → reconstructed next proprioception.
#[derive(Debug, Clone)]
pub struct EstimatorForward<T> {
    pub batch: usize,
    pub v: Vec<T>,
    /// Collision probabilities, logistic of the encoder logits.
    pub c: Vec<T>,
    pub z: Vec<T>,
    pub o_next: Vec<T>,
    encoder: Cache<T>,
    decoder: Cache<T>,
}

#[derive(Debug, Clone)]
pub struct ScanFeatures<T> {
    pub batch: usize,
    pub zg: Vec<T>,
    pub zs: Vec<T>,
    pub zl: Vec<T>,
    pub ground: Cache<T>,
    pub space: Cache<T>,
}

#[derive(Debug, Clone)]
pub struct PplOutput<T> {
    pub estimator: EstimatorForward<T>,
    pub scans: ScanFeatures<T>,
}

/// Supervision targets, row-major over the batch.
#[derive(Debug, Clone, Copy)]
pub struct PplTargets<'a, T> {
    pub c: &'a [T],
    pub v: &'a [T],
    pub zl: &'a [T],
    pub o_next: &'a [T],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PplLoss {
    pub total: f64,
    pub collision: f64,
    pub velocity: f64,
    pub latent: f64,
    pub reconstruction: f64,
}

/// Parameter gradients for every sub-network.
#[derive(Debug, Clone, PartialEq)]
pub struct PplGrads<T> {
    pub proprio_encoder: Vec<T>,
    pub proprio_decoder: Vec<T>,
    pub ground_encoder: Vec<T>,
    pub space_encoder: Vec<T>,
    pub feature_encoder: Vec<T>,
}

/// Loss gradient with respect to the estimator outputs.
#[derive(Debug, Clone)]
pub struct EstimatorOutputGrad<T> {
    /// Over the raw encoder output `[ṽ, logits, z̃]`.
    encoder: Vec<T>,
    decoder: Vec<T>,
}

impl<T: Real> PplNet<T> {
    pub fn new<R: Rng + ?Sized>(dims: PplDims, widths: &PplWidths, rng: &mut R) -> Result<Self, NeuralError> {
        let decoder_in = dims.encoder_output();
        Ok(PplNet {
            dims,
            proprio_encoder: DenseNet::new(
                DenseNetSpec::new(dims.history, &widths.proprio_encoder, dims.encoder_output()),
                rng,
                1.0,
            )?,
            proprio_decoder: DenseNet::new(DenseNetSpec::new(decoder_in, &widths.proprio_decoder, dims.proprio), rng, 1.0)?,
            ground_encoder: DenseNet::new(DenseNetSpec::new(dims.scan, &widths.ground_encoder, dims.ground_latent), rng, 1.0)?,
            space_encoder: DenseNet::new(DenseNetSpec::new(dims.scan, &widths.space_encoder, dims.space_latent), rng, 1.0)?,
            feature_encoder: DenseNet::new(
                DenseNetSpec::new(dims.feature_input(), &widths.feature_encoder, dims.latent),
                rng,
                1.0,
            )?,
        })
    }

    pub fn zero_grads(&self) -> PplGrads<T> {
        PplGrads {
            proprio_encoder: vec![T::zero(); self.proprio_encoder.n_params()],
            proprio_decoder: vec![T::zero(); self.proprio_decoder.n_params()],
            ground_encoder: vec![T::zero(); self.ground_encoder.n_params()],
            space_encoder: vec![T::zero(); self.space_encoder.n_params()],
            feature_encoder: vec![T::zero(); self.feature_encoder.n_params()],
        }
    }

    /// Runs the proprioception encoder-decoder on a batch of histories.
    pub fn estimate(&self, history: &[T], batch: usize) -> Result<EstimatorForward<T>, NeuralError> {
        let d = self.dims;
        let encoder = self.proprio_encoder.forward(history, batch)?;
        let out_w = d.encoder_output();
        let mut v = Vec::with_capacity(batch * d.velocity);
        let mut c = Vec::with_capacity(batch * d.n_collision);
        let mut z = Vec::with_capacity(batch * d.latent);
        let mut decoder_input = Vec::with_capacity(batch * out_w);
        for row in encoder.output().chunks_exact(out_w) {
            let (rv, rest) = row.split_at(d.velocity);
            let (logits, rz) = rest.split_at(d.n_collision);
            v.extend_from_slice(rv);
            z.extend_from_slice(rz);
            decoder_input.extend_from_slice(rv);
            for &l in logits {
                let p = logistic(l);
                c.push(p);
                decoder_input.push(p);
            }
            decoder_input.extend_from_slice(rz);
        }
        let decoder = self.proprio_decoder.forward(&decoder_input, batch)?;
        let o_next = decoder.output().to_vec();
        Ok(EstimatorForward { batch, v, c, z, o_next, encoder, decoder })
    }

    /// Ground and space features and the latent target `z^l` they imply.
    pub fn encode_scans(&self, ground: &[T], space: &[T], batch: usize) -> Result<ScanFeatures<T>, NeuralError> {
        let g = self.ground_encoder.forward(ground, batch)?;
        let s = self.space_encoder.forward(space, batch)?;
        let zg = g.output().to_vec();
        let zs = s.output().to_vec();
        let zl = self.feature_encoder.predict(&concat_rows(&zg, self.dims.ground_latent, &zs, self.dims.space_latent), batch)?;
        Ok(ScanFeatures { batch, zg, zs, zl, ground: g, space: s })
    }

    pub fn forward(&self, history: &[T], ground: &[T], space: &[T], batch: usize) -> Result<PplOutput<T>, NeuralError> {
        Ok(PplOutput { estimator: self.estimate(history, batch)?, scans: self.encode_scans(ground, space, batch)? })
    }

    /// Backpropagates an estimator loss gradient into the encoder and decoder.
    pub fn estimator_backward(
        &self,
        fwd: &EstimatorForward<T>,
        grad: &EstimatorOutputGrad<T>,
        grads: &mut PplGrads<T>,
    ) -> Result<(), NeuralError> {
        let d = self.dims;
        let dec_in = self.proprio_decoder.backward(&fwd.decoder, &grad.decoder, &mut grads.proprio_decoder)?;
        let mut enc = grad.encoder.clone();
        let out_w = d.encoder_output();
        for (b, (row, din)) in enc.chunks_exact_mut(out_w).zip(dec_in.chunks_exact(out_w)).enumerate() {
            for k in 0..out_w {
                let is_logit = k >= d.velocity && k < d.velocity + d.n_collision;
                let chain = if is_logit {
                    let p = fwd.c[b * d.n_collision + k - d.velocity];
                    p * (T::one() - p)
                } else {
                    T::one()
                };
                row[k] = row[k] + din[k] * chain;
            }
        }
        self.proprio_encoder.backward(&fwd.encoder, &enc, &mut grads.proprio_encoder)?;
        Ok(())
    }

    /// Backpropagates gradients on `z^g` and `z^s` into the scan encoders.
    pub fn scan_backward(&self, f: &ScanFeatures<T>, dzg: &[T], dzs: &[T], grads: &mut PplGrads<T>) -> Result<(), NeuralError> {
        self.ground_encoder.accumulate_grads(&f.ground, dzg, &mut grads.ground_encoder)?;
        self.space_encoder.accumulate_grads(&f.space, dzs, &mut grads.space_encoder)?;
        Ok(())
    }
}

/// Interleaves two row-major blocks side by side.
pub(crate) fn concat_rows<T: Copy>(a: &[T], wa: usize, b: &[T], wb: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    for (ra, rb) in a.chunks_exact(wa).zip(b.chunks_exact(wb)) {
        out.extend_from_slice(ra);
        out.extend_from_slice(rb);
    }
    out
}

/// Collision log loss plus velocity, latent and reconstruction squared errors.
///
/// The log loss is summed over collision components and averaged over the
/// batch; each squared error is averaged over components and batch. The
/// latent target is a constant.
pub fn ppl_loss<T: Real>(
    fwd: &EstimatorForward<T>,
    targets: &PplTargets<'_, T>,
) -> Result<(PplLoss, EstimatorOutputGrad<T>), NeuralError> {
    let batch = fwd.batch;
    for (pred, target) in [
        (fwd.c.len(), targets.c.len()),
        (fwd.v.len(), targets.v.len()),
        (fwd.z.len(), targets.zl.len()),
        (fwd.o_next.len(), targets.o_next.len()),
    ] {
        if pred != target {
            return Err(NeuralError::WidthMismatch { expected: pred, got: target });
        }
    }
    if let Some(bad) = targets.c.iter().find(|&&y| y != T::zero() && y != T::one()) {
        return Err(NeuralError::NonBinaryTarget(bad.as_f64()));
    }
    let nc = fwd.c.len().checked_div(batch).unwrap_or(0);
    let n_v = fwd.v.len() / batch.max(1);
    let n_z = fwd.z.len() / batch.max(1);
    let n_o = fwd.o_next.len() / batch.max(1);
    let inv_b = 1.0 / batch.max(1) as f64;

    let (lo, hi) = (COLLISION_CLAMP, 1.0 - COLLISION_CLAMP);
    let mut collision = 0.0;
    let mut d_logits = Vec::with_capacity(fwd.c.len());
    for (&p, &y) in fwd.c.iter().zip(targets.c) {
        let (p, y) = (p.as_f64(), y.as_f64());
        let pc = p.clamp(lo, hi);
        collision -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        let inside = p > lo && p < hi;
        d_logits.push(T::of(if inside { (p - y) * inv_b } else { 0.0 }));
    }
    collision *= inv_b;

    let mse = |pred: &[T], target: &[T], width: usize| -> (f64, Vec<T>) {
        let n = (width * batch).max(1) as f64;
        let loss = pred.iter().zip(target).map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2)).sum::<f64>() / n;
        let grad = pred.iter().zip(target).map(|(&a, &b)| T::of(2.0 * (a.as_f64() - b.as_f64()) / n)).collect();
        (loss, grad)
    };
    let (velocity, dv) = mse(&fwd.v, targets.v, n_v);
    let (latent, dz) = mse(&fwd.z, targets.zl, n_z);
    let (reconstruction, d_o) = mse(&fwd.o_next, targets.o_next, n_o);

    let out_w = n_v + nc + n_z;
    let mut encoder = Vec::with_capacity(batch * out_w);
    for b in 0..batch {
        encoder.extend_from_slice(&dv[b * n_v..(b + 1) * n_v]);
        encoder.extend_from_slice(&d_logits[b * nc..(b + 1) * nc]);
        encoder.extend_from_slice(&dz[b * n_z..(b + 1) * n_z]);
    }
    let loss = PplLoss { total: collision + velocity + latent + reconstruction, collision, velocity, latent, reconstruction };
    Ok((loss, EstimatorOutputGrad { encoder, decoder: d_o }))
}
