//! Model file format, little-endian throughout:
//!
//! ```text
//! magic        8 bytes  "RFSCNN\0\0"
//! version      u32      FORMAT_VERSION
//! frame_len    u32
//! conv_filters u32
//! kernel       u32 ×2   (height, width)
//! n_hidden     u32
//! hidden       u32 × n_hidden
//! dropout      f64
//! train_acc    f64
//! val_acc      f64
//! epochs       u32
//! n_params     u64
//! params       f64 × n_params   (flat layout, see Model)
//! ```
//!
//! Parameters are widened to `f64` on disk, so `f32` and `f64` models both
//! round-trip bit-exactly.

use std::io::{Read, Write};

use super::model::{Model, TrainMeta};
use super::ArchSpec;
use crate::error::{Error, Result};
use crate::Scalar;

pub const FORMAT_MAGIC: &[u8; 8] = b"RFSCNN\0\0";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("value {v} does not fit u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

impl<T: Scalar> Model<T> {
    pub fn save(&self, mut w: impl Write) -> Result<()> {
        let a = self.arch();
        w.write_all(FORMAT_MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        put_u32(&mut w, a.frame_len)?;
        put_u32(&mut w, a.conv_filters)?;
        put_u32(&mut w, a.conv_kernel[0])?;
        put_u32(&mut w, a.conv_kernel[1])?;
        put_u32(&mut w, a.hidden_layers.len())?;
        for &h in &a.hidden_layers {
            put_u32(&mut w, h)?;
        }
        w.write_all(&a.dropout_rate.to_le_bytes())?;
        let m = self.meta();
        w.write_all(&m.train_accuracy.to_le_bytes())?;
        w.write_all(&m.validation_accuracy.to_le_bytes())?;
        put_u32(&mut w, m.epochs)?;
        w.write_all(&(self.param_count() as u64).to_le_bytes())?;
        for p in self.params() {
            w.write_all(&p.to_f64_lossy().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.save(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn load(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != FORMAT_MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = get_u32(&mut r)?;
        if version != FORMAT_VERSION as usize {
            return Err(Error::Format(format!("unsupported layout version {version}")));
        }
        let frame_len = get_u32(&mut r)?;
        let conv_filters = get_u32(&mut r)?;
        let conv_kernel = [get_u32(&mut r)?, get_u32(&mut r)?];
        let n_hidden = get_u32(&mut r)?;
        if n_hidden > 1024 {
            return Err(Error::Format(format!("implausible hidden layer count {n_hidden}")));
        }
        let hidden_layers = (0..n_hidden).map(|_| get_u32(&mut r)).collect::<Result<Vec<_>>>()?;
        let dropout_rate = get_f64(&mut r)?;
        let arch = ArchSpec { frame_len, conv_filters, conv_kernel, hidden_layers, dropout_rate };
        arch.validate().map_err(|e| Error::Format(format!("bad architecture: {e}")))?;
        let meta = TrainMeta {
            train_accuracy: get_f64(&mut r)?,
            validation_accuracy: get_f64(&mut r)?,
            epochs: get_u32(&mut r)?,
        };
        let mut nb = [0u8; 8];
        r.read_exact(&mut nb)?;
        let n = u64::from_le_bytes(nb) as usize;
        if n != arch.param_count() {
            return Err(Error::Format(format!(
                "parameter count {n} does not match architecture ({})",
                arch.param_count()
            )));
        }
        let params = (0..n)
            .map(|_| get_f64(&mut r).map(T::lit))
            .collect::<Result<Vec<T>>>()?;
        Model::from_params(&arch, params, meta).map_err(|e| Error::Format(e.to_string()))
    }
}
