//! Binary checkpoint format.
//!
//! ```text
//! "GSTCKPT1" | version u16 | descriptor (u32 length + UTF-8 JSON) | param count u32
//! per param: name (u32 length + UTF-8) | rank u32 | dims u64 × rank | f64 × Π dims
//! step u64
//! ```
//! All integers and floats are little-endian. The JSON descriptor carries the
//! architecture, class labels, frozen parameter names and optional training state.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Architecture, Network};
use crate::error::{ensure, Error, Result};
use crate::tensor::{Param, ParamKind, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GSTCKPT1";
pub const CHECKPOINT_VERSION: u16 = 1;

/// A restored network with its step counter and any saved training state.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub step: u64,
    pub train_state: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct Descriptor {
    arch: Architecture,
    labels: Vec<String>,
    #[serde(default)]
    frozen: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    train_state: Option<serde_json::Value>,
}

pub fn checkpoint_to_bytes(net: &Network, step: u64, train_state: Option<&serde_json::Value>) -> Result<Vec<u8>> {
    let descriptor = Descriptor {
        arch: net.architecture().clone(),
        labels: net.labels.clone(),
        frozen: net.params().iter().filter(|p| !p.trainable).map(|p| p.name.clone()).collect(),
        train_state: train_state.cloned(),
    };
    let json = serde_json::to_string(&descriptor).map_err(|e| Error::contract(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_str(&mut out, &json)?;
    put_u32(&mut out, net.params().len())?;
    for p in net.params() {
        put_str(&mut out, &p.name)?;
        put_u32(&mut out, p.value.rank())?;
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for x in p.value.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out.extend_from_slice(&step.to_le_bytes());
    Ok(out)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
        return Err(Error::NotACheckpoint);
    }
    r.pos = CHECKPOINT_MAGIC.len();
    let version = u16::from_le_bytes(r.take::<2>()?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let json = r.string()?;
    let descriptor: Descriptor =
        serde_json::from_str(&json).map_err(|e| Error::contract(format!("checkpoint descriptor: {e}")))?;
    let count = r.u32()? as usize;
    let mut params = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(usize::try_from(u64::from_le_bytes(r.take::<8>()?)).map_err(|_| Error::CheckpointTruncated)?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(Error::CheckpointTruncated)?;
        if n > (bytes.len() - r.pos) / 8 {
            return Err(Error::CheckpointTruncated);
        }
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(r.take::<8>()?));
        }
        let kind = if name.ends_with(".bias") {
            ParamKind::Bias
        } else {
            ParamKind::Weight
        };
        let mut p = Param::new(name, kind, Tensor::new(shape, data)?);
        p.trainable = !descriptor.frozen.contains(&p.name);
        params.push(p);
    }
    let step = u64::from_le_bytes(r.take::<8>()?);
    ensure!(r.pos == bytes.len(), "{} trailing bytes after checkpoint", bytes.len() - r.pos);
    Ok(Checkpoint {
        network: Network::from_parts(descriptor.arch, params, descriptor.labels)?,
        step,
        train_state: descriptor.train_state,
    })
}

pub fn save_checkpoint(net: &Network, step: u64, path: impl AsRef<Path>) -> Result<()> {
    save_checkpoint_with(net, step, None, path)
}

/// Saves with an opaque training-state document; the file is replaced atomically.
pub fn save_checkpoint_with(
    net: &Network,
    step: u64,
    train_state: Option<&serde_json::Value>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = checkpoint_to_bytes(net, step, train_state)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}

/// Loads a checkpoint that must have been saved from `expected`.
pub fn load_checkpoint_into(path: impl AsRef<Path>, expected: &Architecture) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.network.architecture() != expected {
        return Err(Error::ArchitectureMismatch {
            expected: expected.summary(),
            found: ckpt.network.architecture().summary(),
        });
    }
    Ok(ckpt)
}

fn put_u32(out: &mut Vec<u8>, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| Error::contract(format!("{n} does not fit a u32 field")))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    put_u32(out, s.len())?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos.checked_add(N).ok_or(Error::CheckpointTruncated)?;
        let chunk = self.bytes.get(self.pos..end).ok_or(Error::CheckpointTruncated)?;
        self.pos = end;
        Ok(chunk.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take::<4>()?))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let end = self.pos.checked_add(len).ok_or(Error::CheckpointTruncated)?;
        let raw = self.bytes.get(self.pos..end).ok_or(Error::CheckpointTruncated)?;
        self.pos = end;
        String::from_utf8(raw.to_vec()).map_err(|e| Error::contract(format!("checkpoint string: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_classifier, classifier_architecture};

    fn sample() -> Network {
        let mut net = build_classifier(6, 16, 3).unwrap().with_labels((0..6).map(|i| format!("g{i}")).collect());
        net.params_mut()[1].value.data_mut()[0] = -0.0;
        net.params_mut()[3].value.data_mut()[2] = f64::MIN_POSITIVE / 3.0;
        net.set_trainable("conv", false).unwrap();
        net
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let net = sample();
        let state = serde_json::json!({"epoch": 3});
        save_checkpoint_with(&net, 42, Some(&state), &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.step, 42);
        assert_eq!(back.train_state, Some(state));
        assert_eq!(back.network.labels, net.labels);
        for (a, b) in net.params().iter().zip(back.network.params()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.trainable, b.trainable);
            let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
        assert_eq!(std::fs::read(&path).unwrap(), checkpoint_to_bytes(&back.network, 42, back.train_state.as_ref()).unwrap());
    }

    #[test]
    fn distinct_error_kinds() {
        let net = sample();
        let bytes = checkpoint_to_bytes(&net, 1, None).unwrap();

        assert!(matches!(checkpoint_from_bytes(b"PNG\0\0\0\0\0\0\0"), Err(Error::NotACheckpoint)));
        assert!(matches!(checkpoint_from_bytes(b""), Err(Error::NotACheckpoint)));

        let mut v2 = bytes.clone();
        v2[8..10].copy_from_slice(&2u16.to_le_bytes());
        assert!(matches!(
            checkpoint_from_bytes(&v2),
            Err(Error::CheckpointVersion { found: 2, expected: 1 })
        ));

        for cut in [9, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(checkpoint_from_bytes(&bytes[..cut]), Err(Error::CheckpointTruncated)), "cut {cut}");
        }

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("six.ckpt");
        save_checkpoint(&build_classifier(6, 32, 0).unwrap(), 0, &path).unwrap();
        let ten = classifier_architecture(10, 32).unwrap();
        assert!(matches!(load_checkpoint_into(&path, &ten), Err(Error::ArchitectureMismatch { .. })));
        let six = classifier_architecture(6, 32).unwrap();
        assert!(load_checkpoint_into(&path, &six).is_ok());
    }
}
