//! Versioned binary model file: magic "RCHM", architecture header,
//! normalization stats and parameters as little-endian f32, trailing
//! CRC32.

use std::io::{Read, Write};
use std::path::Path;

use super::{Activation, DynModel, Layer, NormStats, Variant};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const MODEL_MAGIC: &[u8; 4] = b"RCHM";
const MODEL_VERSION: u32 = 1;

fn variant_tag(v: &Variant) -> (u8, u32) {
    match v {
        Variant::Plain => (0, 0),
        Variant::OneHot { classes } => (1, *classes as u32),
        Variant::Fused { embed_dim } => (2, *embed_dim as u32),
    }
}

fn act_tag(a: Activation) -> u8 {
    match a {
        Activation::Linear => 0,
        Activation::Relu => 1,
    }
}

pub fn save_model(path: &Path, model: &DynModel) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    let (tag, k) = variant_tag(model.variant());
    buf.push(tag);
    buf.extend_from_slice(&k.to_le_bytes());
    buf.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    for l in model.layers() {
        buf.extend_from_slice(&(l.in_dim() as u32).to_le_bytes());
        buf.extend_from_slice(&(l.out_dim() as u32).to_le_bytes());
        buf.push(act_tag(l.act));
    }
    let norm = &model.norm;
    buf.extend_from_slice(&(norm.mean_in.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(norm.mean_out.len() as u32).to_le_bytes());
    for series in [&norm.mean_in, &norm.std_in, &norm.mean_out, &norm.std_out] {
        for v in series {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    for l in model.layers() {
        for v in l.w.data() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        for v in &l.b {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    off: usize,
    path: &'a str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.off + n > self.bytes.len() {
            return Err(Error::Format {
                path: self.path.into(),
                reason: "unexpected end of file".into(),
            });
        }
        let s = &self.bytes[self.off..self.off + n];
        self.off += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

pub fn load_model(path: &Path) -> Result<DynModel> {
    let display = path.display().to_string();
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 {
        return Err(Error::Format {
            path: display,
            reason: "file too short".into(),
        });
    }
    if &bytes[0..4] != MODEL_MAGIC {
        return Err(Error::Format {
            path: display,
            reason: "missing RCHM magic".into(),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(Error::Version {
            path: display,
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let body = &bytes[..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(body) != stored_crc {
        return Err(Error::Checksum(display));
    }

    let mut cur = Cursor {
        bytes: body,
        off: 8,
        path: &display,
    };
    let tag = cur.u8()?;
    let k = cur.u32()? as usize;
    let variant = match tag {
        0 => Variant::Plain,
        1 => Variant::OneHot { classes: k },
        2 => Variant::Fused { embed_dim: k },
        other => {
            return Err(Error::Format {
                path: display,
                reason: format!("unknown variant tag {other}"),
            })
        }
    };
    let n_layers = cur.u32()? as usize;
    let mut shapes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let in_dim = cur.u32()? as usize;
        let out_dim = cur.u32()? as usize;
        let act = match cur.u8()? {
            0 => Activation::Linear,
            1 => Activation::Relu,
            other => {
                return Err(Error::Format {
                    path: display,
                    reason: format!("unknown activation tag {other}"),
                })
            }
        };
        shapes.push((in_dim, out_dim, act));
    }
    let in_dim = cur.u32()? as usize;
    let out_dim = cur.u32()? as usize;
    let norm = NormStats {
        mean_in: cur.f32s(in_dim)?,
        std_in: cur.f32s(in_dim)?,
        mean_out: cur.f32s(out_dim)?,
        std_out: cur.f32s(out_dim)?,
    };
    let mut layers = Vec::with_capacity(n_layers);
    for (li, lo, act) in shapes {
        let w = Matrix::from_flat(li, lo, cur.f32s(li * lo)?);
        let b = cur.f32s(lo)?;
        layers.push(Layer { w, b, act });
    }
    if cur.off != body.len() {
        return Err(Error::Format {
            path: display,
            reason: "trailing bytes after parameters".into(),
        });
    }
    DynModel::from_parts(variant, layers, norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynmodel::{train, TrainConfig};
    use crate::simworld::{Action, ActionKind, StateVector, STATE_DIM};
    use rand::Rng;

    fn trained_tiny() -> DynModel {
        let mut rng = crate::rng::stream(51, 0);
        let rows = 64;
        let mut inputs = Matrix::zeros(rows, super::super::SA_DIM);
        let mut targets = Matrix::zeros(rows, STATE_DIM);
        for i in 0..rows {
            for j in 0..super::super::SA_DIM {
                inputs.set(i, j, rng.gen_range(-1.0..1.0));
            }
            for j in 0..STATE_DIM {
                targets.set(i, j, rng.gen_range(-0.2..0.2));
            }
        }
        let cfg = TrainConfig {
            epochs: 2,
            learning_rate: 0.001,
            batch_size: 32,
            split_ratio: 0.9,
            hidden_plain: vec![16, 16],
            sa_hidden: 8,
            fusion_hidden: 16,
        };
        train(Variant::Plain, &inputs, &targets, &cfg, 3, None)
            .unwrap()
            .model
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rchm");
        let model = trained_tiny();
        save_model(&path, &model).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(model.flatten_params(), loaded.flatten_params());

        let mut s = StateVector::zeros();
        s.0[crate::simworld::idx::COS_ROLL] = 1.0;
        s.0[crate::simworld::idx::COS_PITCH] = 1.0;
        s.0[crate::simworld::idx::COS_YAW] = 1.0;
        s.0[crate::simworld::idx::COS_AL] = 1.0;
        s.0[crate::simworld::idx::COS_AR] = 1.0;
        let a = Action::new(3.0, 4.0, ActionKind::VelocitySetpoint);
        let d1 = model.forward(&s, &a, None).unwrap();
        let d2 = loaded.forward(&s, &a, None).unwrap();
        assert_eq!(d1.map(f64::to_bits), d2.map(f64::to_bits));
    }

    #[test]
    fn truncated_file_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rchm");
        save_model(&path, &trained_tiny()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 7);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Checksum(_))));
    }

    #[test]
    fn corrupted_byte_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rchm");
        save_model(&path, &trained_tiny()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Checksum(_))));
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rchm");
        save_model(&path, &trained_tiny()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0..4].copy_from_slice(b"XXXX");
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rchm");
        save_model(&path, &trained_tiny()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Version { .. })));
    }
}
