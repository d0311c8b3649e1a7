//! Binary weight checkpoints.
//!
//! Layout, all integers `u32` and all weights `f64`, little-endian:
//!
//! ```text
//! "SV2A" version sharing(0 separate | 1 shared) net_count
//! per net: dim embed_dim cond_dim hidden layer_count
//!          per layer: outputs inputs weights[outputs·inputs] biases[outputs]
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::net::{BinauralModel, Dense, NetShape, VelocityFieldNet};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SV2A";
pub const VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> Error {
    Error::Checkpoint(e.to_string())
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in 32 bits")))?;
    w.write_all(&v.to_le_bytes()).map_err(io_err)
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n.min(1 << 20));
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b).map_err(io_err)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

fn write_net(w: &mut impl Write, net: &VelocityFieldNet) -> Result<()> {
    let s = net.shape();
    for v in [s.dim, s.embed_dim, s.cond_dim, s.hidden, net.layers().len()] {
        put_u32(w, v)?;
    }
    for l in net.layers() {
        put_u32(w, l.outputs)?;
        put_u32(w, l.inputs)?;
        for v in l.weights.iter().chain(&l.biases) {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}

fn read_net(r: &mut impl Read) -> Result<VelocityFieldNet> {
    let shape = NetShape {
        dim: get_u32(r)?,
        embed_dim: get_u32(r)?,
        cond_dim: get_u32(r)?,
        hidden: get_u32(r)?,
    };
    let count = get_u32(r)?;
    if count != 3 {
        return Err(Error::Checkpoint(format!("expected 3 layers, found {count}")));
    }
    let mut layers = Vec::with_capacity(3);
    for _ in 0..3 {
        let outputs = get_u32(r)?;
        let inputs = get_u32(r)?;
        let weights = get_f64s(r, outputs * inputs)?;
        let biases = get_f64s(r, outputs)?;
        layers.push(Dense {
            inputs,
            outputs,
            weights,
            biases,
        });
    }
    let layers: [Dense; 3] = layers.try_into().expect("three layers read");
    VelocityFieldNet::from_layers(shape, layers).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn write_checkpoint(mut w: impl Write, model: &BinauralModel) -> Result<()> {
    w.write_all(MAGIC).map_err(io_err)?;
    put_u32(&mut w, VERSION as usize)?;
    let sharing = match model {
        BinauralModel::Separate { .. } => 0,
        BinauralModel::Shared(_) => 1,
    };
    put_u32(&mut w, sharing)?;
    let nets = model.nets();
    put_u32(&mut w, nets.len())?;
    for net in nets {
        write_net(&mut w, net)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_checkpoint(mut r: impl Read) -> Result<BinauralModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION as usize {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let sharing = get_u32(&mut r)?;
    let count = get_u32(&mut r)?;
    let model = match (sharing, count) {
        (0, 2) => {
            let left = read_net(&mut r)?;
            let right = read_net(&mut r)?;
            if left.shape() != right.shape() {
                return Err(Error::Checkpoint("left and right nets differ in shape".into()));
            }
            BinauralModel::Separate { left, right }
        }
        (1, 1) => {
            let net = read_net(&mut r)?;
            if net.shape().cond_dim == 0 {
                return Err(Error::Checkpoint("shared net lacks the channel flag input".into()));
            }
            BinauralModel::Shared(net)
        }
        _ => {
            return Err(Error::Checkpoint(format!("invalid sharing mode {sharing} with {count} nets")));
        }
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io_err)? != 0 {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(model)
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &BinauralModel) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(std::io::BufWriter::new(file), model)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<BinauralModel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}
