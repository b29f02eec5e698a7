//! Binary network checkpoints.
//!
//! Layout, all integers little-endian `u32`:
//! `PPLC`, version byte, network count, then per network the spec as a
//! length-prefixed integer list `[n_widths, widths…, hidden, output]`, the
//! parameter count and the parameters as `f32`. A trailing section holds
//! free vectors (such as the policy log-std) as count, then length-prefixed
//! `f32` runs.

use super::{Activation, DenseNet, DenseNetSpec, NeuralError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PPLC";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub nets: Vec<DenseNet<f32>>,
    pub extras: Vec<Vec<f32>>,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    put_u32(&mut out, ckpt.nets.len());
    for net in &ckpt.nets {
        let spec = net.spec();
        let mut ints: Vec<u32> = vec![spec.widths.len() as u32];
        ints.extend(spec.widths.iter().map(|&w| w as u32));
        ints.push(spec.hidden.code());
        ints.push(spec.output.code());
        put_u32(&mut out, ints.len());
        for i in ints {
            out.extend_from_slice(&i.to_le_bytes());
        }
        put_f32s(&mut out, net.params());
    }
    put_u32(&mut out, ckpt.extras.len());
    for v in &ckpt.extras {
        put_f32s(&mut out, v);
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, NeuralError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(NeuralError::Checkpoint("bad magic".into()));
    }
    let version = r.take(1)?[0];
    if version != CHECKPOINT_VERSION {
        return Err(NeuralError::Checkpoint(format!("unsupported version {version}")));
    }
    let n_nets = r.u32()? as usize;
    let mut nets = Vec::with_capacity(n_nets.min(64));
    for _ in 0..n_nets {
        let n_ints = r.u32()? as usize;
        let ints: Vec<u32> = (0..n_ints).map(|_| r.u32()).collect::<Result<_, _>>()?;
        let (&n_widths, rest) = ints.split_first().ok_or_else(|| NeuralError::Checkpoint("empty spec".into()))?;
        let n_widths = n_widths as usize;
        if rest.len() != n_widths + 2 {
            return Err(NeuralError::Checkpoint("spec length mismatch".into()));
        }
        let act = |code: u32| {
            Activation::from_code(code).ok_or_else(|| NeuralError::Checkpoint(format!("unknown activation {code}")))
        };
        let spec = DenseNetSpec {
            widths: rest[..n_widths].iter().map(|&w| w as usize).collect(),
            hidden: act(rest[n_widths])?,
            output: act(rest[n_widths + 1])?,
        };
        let params = r.f32s()?;
        nets.push(DenseNet::from_params(spec, params)?);
    }
    let n_extras = r.u32()? as usize;
    let extras = (0..n_extras).map(|_| r.f32s()).collect::<Result<_, _>>()?;
    if r.pos != bytes.len() {
        return Err(NeuralError::Checkpoint("trailing bytes".into()));
    }
    Ok(Checkpoint { nets, extras })
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    put_u32(out, v.len());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NeuralError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NeuralError::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NeuralError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn f32s(&mut self) -> Result<Vec<f32>, NeuralError> {
        let n = self.u32()? as usize;
        let raw = self.take(n.checked_mul(4).ok_or_else(|| NeuralError::Checkpoint("length overflow".into()))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("four bytes"))).collect())
    }
}
