//! FXCK checkpoints: named f32 tensors holding the model configuration,
//! parameters, BN running statistics and optional Adam state.
//!
//! Layout (little endian): `"FXCK"`, u32 version, u64 tensor count, then per
//! tensor a u32 name length, the UTF-8 name, u32 rank, u32 dims and f32 data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::adam::AdamState;
use super::model::{ConvGroupSpec, ModelConfig, ModelParams};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FXCK";
const VERSION: u32 = 1;
// Integers stored in f32 tensors are split into 24-bit limbs to stay exact.
const LIMB: u64 = 1 << 24;

/// Everything needed to resume training or run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub adam: Option<AdamState<f32>>,
    /// Epochs completed when the checkpoint was taken.
    pub epoch: u64,
}

fn split(v: u64) -> [f32; 3] {
    [(v / (LIMB * LIMB)) as f32, ((v / LIMB) % LIMB) as f32, (v % LIMB) as f32]
}

fn join(v: &[f32]) -> u64 {
    v.iter().fold(0u64, |acc, &x| acc * LIMB + x as u64)
}

fn named(checkpoint: &Checkpoint) -> Vec<(String, Tensor<f32>)> {
    let p = &checkpoint.params;
    let cfg = &p.config;
    let mut out = Vec::new();
    let groups: Vec<f32> = cfg
        .groups
        .iter()
        .flat_map(|g| [g.filters as f32, g.height as f32, g.width as f32])
        .collect();
    out.push((
        "config.groups".to_string(),
        Tensor::from_vec(&[cfg.groups.len(), 3], groups).expect("sized"),
    ));
    out.push((
        "config.dims".to_string(),
        Tensor::from_vec(
            &[4],
            vec![cfg.n_mels as f32, cfg.n_frames as f32, cfg.n_classes as f32, cfg.dropout as f32],
        )
        .expect("sized"),
    ));
    out.push((
        "train.epoch".to_string(),
        Tensor::from_vec(&[3], split(checkpoint.epoch).to_vec()).expect("sized"),
    ));
    for (name, t) in p.trainable_names().into_iter().zip(p.trainable()) {
        out.push((name, t.clone()));
    }
    out.push(("bn.running_mean".to_string(), p.running_mean.clone()));
    out.push(("bn.running_var".to_string(), p.running_var.clone()));
    if let Some(adam) = &checkpoint.adam {
        out.push((
            "adam.t".to_string(),
            Tensor::from_vec(&[3], split(adam.t).to_vec()).expect("sized"),
        ));
        for (name, (m, v)) in p.trainable_names().iter().zip(adam.m.iter().zip(&adam.v)) {
            out.push((format!("adam.m.{name}"), m.clone()));
            out.push((format!("adam.v.{name}"), v.clone()));
        }
    }
    out
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let tensors = named(checkpoint);
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for (name, t) in &tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io)?;
    w.flush().map_err(io)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                path: self.path.to_path_buf(),
                what: "checkpoint",
                reason: "truncated".into(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        what: "checkpoint",
        reason,
    };
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if cur.take(4)? != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = cur.u64()?;
    let mut tensors = std::collections::BTreeMap::new();
    for _ in 0..count {
        let len = cur.u32()? as usize;
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| bad("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = cur.u32()? as usize;
        if rank > 4 {
            return Err(bad(format!("{name}: rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = cur.take(n * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.insert(name, Tensor::from_vec(&shape, data)?);
    }
    if cur.pos != bytes.len() {
        return Err(bad("trailing bytes".into()));
    }

    let mut get = |name: &str| tensors.remove(name).ok_or_else(|| bad(format!("missing tensor {name}")));
    let groups_t = get("config.groups")?;
    let dims = get("config.dims")?;
    if dims.len() != 4 || groups_t.shape().len() != 2 || groups_t.shape()[1] != 3 {
        return Err(bad("malformed config tensors".into()));
    }
    let d = dims.data();
    let config = ModelConfig {
        n_mels: d[0] as usize,
        n_frames: d[1] as usize,
        n_classes: d[2] as usize,
        dropout: d[3] as f64,
        groups: groups_t
            .data()
            .chunks(3)
            .map(|g| ConvGroupSpec {
                filters: g[0] as usize,
                height: g[1] as usize,
                width: g[2] as usize,
            })
            .collect(),
    };
    config.validate()?;
    let epoch = join(get("train.epoch")?.data());

    let mut params = ModelParams::<f32>::init(config, 0)?;
    let names = params.trainable_names();
    for (name, slot) in names.iter().zip(params.trainable_mut()) {
        let t = get(name)?;
        if t.shape() != slot.shape() {
            return Err(bad(format!("{name}: shape {:?}, expected {:?}", t.shape(), slot.shape())));
        }
        *slot = t;
    }
    for (name, slot) in [
        ("bn.running_mean", &mut params.running_mean),
        ("bn.running_var", &mut params.running_var),
    ] {
        let t = get(name)?;
        if t.shape() != slot.shape() {
            return Err(bad(format!("{name}: shape mismatch")));
        }
        *slot = t;
    }
    let adam = match get("adam.t") {
        Ok(t) => {
            let mut state = AdamState::new(&params);
            state.t = join(t.data());
            for (i, name) in names.iter().enumerate() {
                state.m[i] = get(&format!("adam.m.{name}"))?;
                state.v[i] = get(&format!("adam.v.{name}"))?;
            }
            Some(state)
        }
        Err(_) => None,
    };
    Ok(Checkpoint { params, adam, epoch })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limbs_round_trip() {
        for v in [0u64, 1, 16_777_215, 16_777_216, 123_456_789_012] {
            assert_eq!(join(&split(v)), v);
        }
    }

    #[test]
    fn round_trip_with_adam_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fxck");
        let params = ModelParams::<f32>::init(ModelConfig::single_layer_for(10, 12), 4).unwrap();
        let mut adam = AdamState::new(&params);
        adam.t = 77;
        adam.m[0].data_mut()[0] = 0.25;
        let ck = Checkpoint {
            params,
            adam: Some(adam),
            epoch: 9,
        };
        save_checkpoint(&path, &ck).unwrap();
        assert_eq!(&std::fs::read(&path).unwrap()[..4], b"FXCK");
        assert_eq!(load_checkpoint(&path).unwrap(), ck);
    }

    #[test]
    fn corrupt_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fxck");
        let ck = Checkpoint {
            params: ModelParams::<f32>::init(ModelConfig::gradcheck_small(), 4).unwrap(),
            adam: None,
            epoch: 0,
        };
        save_checkpoint(&path, &ck).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format { .. })));
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format { .. })));
    }
}
