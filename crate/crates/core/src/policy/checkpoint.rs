//! Versioned binary checkpoints for policy parameters.
//!
//! Layout: 8-byte magic, u32 version, the policy meta block, then a tensor
//! manifest (name, rows, cols, little-endian f64 payload). Floats round-trip
//! bit-exactly. EMA statistics are stored as ordinary tensors under
//! reserved names.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Aggregation, PolicyParameters};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ATOPTCK1";
const VERSION: u32 = 1;

pub fn save(params: &PolicyParameters, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());

    let meta = &params.config_meta;
    buf.extend_from_slice(&(meta.n_species as u32).to_le_bytes());
    buf.extend_from_slice(&(meta.width as u32).to_le_bytes());
    buf.extend_from_slice(&(meta.message_passing_steps as u32).to_le_bytes());
    buf.push(match meta.aggregation {
        Aggregation::Mean => 0,
        Aggregation::Sum => 1,
    });
    buf.extend_from_slice(&meta.alpha.to_le_bytes());
    buf.extend_from_slice(&meta.displacement_scale.to_le_bytes());
    buf.extend_from_slice(&meta.leaky_slope.to_le_bytes());
    buf.extend_from_slice(&meta.bn_decay.to_le_bytes());

    let mut tensors: Vec<(String, Array2<f64>)> = Vec::new();
    params.visit(&mut |name, value| tensors.push((name.to_string(), value.clone())));
    tensors.push((
        "ema.mean".to_string(),
        params
            .node_embed_norm
            .ema_mean
            .clone()
            .insert_axis(ndarray::Axis(0)),
    ));
    tensors.push((
        "ema.var".to_string(),
        params
            .node_embed_norm
            .ema_var
            .clone()
            .insert_axis(ndarray::Axis(0)),
    ));

    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, value) in &tensors {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.extend_from_slice(&(value.nrows() as u32).to_le_bytes());
        buf.extend_from_slice(&(value.ncols() as u32).to_le_bytes());
        for v in value.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load(path: &Path) -> Result<PolicyParameters> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let mut r = Reader {
        data: &data,
        pos: 0,
    };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a policy checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }

    let n_species = r.u32()? as usize;
    let width = r.u32()? as usize;
    let message_passing_steps = r.u32()? as usize;
    let aggregation = match r.u8()? {
        0 => Aggregation::Mean,
        1 => Aggregation::Sum,
        other => {
            return Err(Error::Checkpoint(format!(
                "unknown aggregation tag {other}"
            )))
        }
    };
    let alpha = r.f64()?;
    let displacement_scale = r.f64()?;
    let leaky_slope = r.f64()?;
    let bn_decay = r.f64()?;

    let n_tensors = r.u32()? as usize;
    let mut tensors: Vec<(String, Array2<f64>)> = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("bad tensor name".into()))?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let mut value = Array2::zeros((rows, cols));
        for v in value.iter_mut() {
            *v = r.f64()?;
        }
        tensors.push((name, value));
    }
    if r.pos != data.len() {
        return Err(Error::Checkpoint("trailing bytes in checkpoint".into()));
    }

    // rebuild a skeleton with matching architecture, then fill tensors by name
    let config = super::PolicyConfig {
        n_species,
        width,
        message_passing_steps,
        aggregation,
        alpha,
        displacement_scale,
        leaky_slope,
        bn_decay,
    };
    let mut rng = crate::rng::RngStream::new(0, 0);
    let mut params = super::init_params(&mut rng, &config)?;

    let lookup = |name: &str| -> Result<&Array2<f64>> {
        tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
    };
    let mut fill_err = None;
    params.visit_mut(&mut |name, slot| {
        if fill_err.is_some() {
            return;
        }
        match lookup(name) {
            Ok(v) if v.dim() == slot.dim() => *slot = v.clone(),
            Ok(v) => {
                fill_err = Some(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    v.dim(),
                    slot.dim()
                )))
            }
            Err(e) => fill_err = Some(e),
        }
    });
    if let Some(e) = fill_err {
        return Err(e);
    }
    params.node_embed_norm.ema_mean = row_to_1d(lookup("ema.mean")?);
    params.node_embed_norm.ema_var = row_to_1d(lookup("ema.var")?);
    Ok(params)
}

fn row_to_1d(row: &Array2<f64>) -> Array1<f64> {
    row.row(0).to_owned()
}
