//! Binary parameter checkpoint, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "ARNNCKPT"
//! version    u32      1
//! seed       u64
//! rank       u32, then rank x u64 input dims
//! side_dim   u64
//! n_layers   u32, then per layer: kind u8, n_cfg u32, n_cfg x u64
//! n_params   u64, then n_params x f64
//! ```
//!
//! Layer kinds and their config words:
//! 0 dense `[units, act]`, 1 conv2d `[filters, kh, kw, pad, act]`,
//! 2 lstm `[units, return_seq]`, 3 convlstm `[filters, kh, kw, return_seq]`,
//! 4 dropout `[p as f64 bits]`, 5 flatten, 6 activation `[act]`, 7 concat_side.
//! Activation codes: relu 0, sigmoid 1, tanh 2, linear 3. Padding: valid 0, same 1.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{Activation, LayerSpec, ModelGraph, NnError, Padding};

pub const MAGIC: &[u8; 8] = b"ARNNCKPT";
pub const VERSION: u32 = 1;

fn encode(spec: &LayerSpec) -> (u8, Vec<u64>) {
    let pad = |p: Padding| match p {
        Padding::Valid => 0,
        Padding::Same => 1,
    };
    match *spec {
        LayerSpec::Dense { units, activation } => (0, vec![units as u64, activation.code()]),
        LayerSpec::Conv2D { filters, kernel, padding, activation } => {
            (1, vec![filters as u64, kernel.0 as u64, kernel.1 as u64, pad(padding), activation.code()])
        }
        LayerSpec::Lstm { units, return_sequences } => (2, vec![units as u64, return_sequences as u64]),
        LayerSpec::ConvLstm { filters, kernel, return_sequences } => {
            (3, vec![filters as u64, kernel.0 as u64, kernel.1 as u64, return_sequences as u64])
        }
        LayerSpec::Dropout { p } => (4, vec![p.to_bits()]),
        LayerSpec::Flatten => (5, vec![]),
        LayerSpec::Activation { activation } => (6, vec![activation.code()]),
        LayerSpec::ConcatSide => (7, vec![]),
    }
}

fn decode(kind: u8, cfg: &[u64]) -> Result<LayerSpec, NnError> {
    let bad = || NnError::Checkpoint(format!("bad layer record kind={kind} cfg={cfg:?}"));
    let act = |c: u64| Activation::from_code(c).ok_or_else(bad);
    let pad = |c: u64| match c {
        0 => Ok(Padding::Valid),
        1 => Ok(Padding::Same),
        _ => Err(bad()),
    };
    let want = [2usize, 5, 2, 4, 1, 0, 1, 0];
    if kind as usize >= want.len() || cfg.len() != want[kind as usize] {
        return Err(bad());
    }
    Ok(match kind {
        0 => LayerSpec::Dense { units: cfg[0] as usize, activation: act(cfg[1])? },
        1 => LayerSpec::Conv2D {
            filters: cfg[0] as usize,
            kernel: (cfg[1] as usize, cfg[2] as usize),
            padding: pad(cfg[3])?,
            activation: act(cfg[4])?,
        },
        2 => LayerSpec::Lstm { units: cfg[0] as usize, return_sequences: cfg[1] != 0 },
        3 => LayerSpec::ConvLstm {
            filters: cfg[0] as usize,
            kernel: (cfg[1] as usize, cfg[2] as usize),
            return_sequences: cfg[3] != 0,
        },
        4 => LayerSpec::Dropout { p: f64::from_bits(cfg[0]) },
        5 => LayerSpec::Flatten,
        6 => LayerSpec::Activation { activation: act(cfg[0])? },
        _ => LayerSpec::ConcatSide,
    })
}

pub fn write_checkpoint<W: Write>(model: &ModelGraph, mut w: W) -> Result<(), NnError> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u64::<LE>(model.seed())?;
    w.write_u32::<LE>(model.input_shape().len() as u32)?;
    for &d in model.input_shape() {
        w.write_u64::<LE>(d as u64)?;
    }
    w.write_u64::<LE>(model.side_dim() as u64)?;
    let specs = model.specs();
    w.write_u32::<LE>(specs.len() as u32)?;
    for s in &specs {
        let (kind, cfg) = encode(s);
        w.write_u8(kind)?;
        w.write_u32::<LE>(cfg.len() as u32)?;
        for c in cfg {
            w.write_u64::<LE>(c)?;
        }
    }
    w.write_u64::<LE>(model.n_params() as u64)?;
    for &p in model.params() {
        w.write_f64::<LE>(p)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ModelGraph, NnError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("not a model checkpoint (bad magic)".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let seed = r.read_u64::<LE>()?;
    let rank = r.read_u32::<LE>()? as usize;
    if rank > 8 {
        return Err(NnError::Checkpoint(format!("implausible input rank {rank}")));
    }
    let shape = (0..rank).map(|_| r.read_u64::<LE>().map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
    let side_dim = r.read_u64::<LE>()? as usize;
    let n_layers = r.read_u32::<LE>()? as usize;
    let mut specs = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let kind = r.read_u8()?;
        let n_cfg = r.read_u32::<LE>()? as usize;
        if n_cfg > 16 {
            return Err(NnError::Checkpoint(format!("implausible config length {n_cfg}")));
        }
        let cfg = (0..n_cfg).map(|_| r.read_u64::<LE>()).collect::<Result<Vec<_>, _>>()?;
        specs.push(decode(kind, &cfg)?);
    }
    let mut model = ModelGraph::new(shape, side_dim, specs, seed)?;
    let n = r.read_u64::<LE>()? as usize;
    if n != model.n_params() {
        return Err(NnError::Checkpoint(format!("layer table implies {} parameters, file has {n}", model.n_params())));
    }
    for p in model.params_mut() {
        *p = r.read_f64::<LE>()?;
    }
    Ok(model)
}

pub fn save_checkpoint(model: &ModelGraph, path: &Path) -> Result<(), NnError> {
    let mut buf = Vec::with_capacity(64 + 8 * model.n_params());
    write_checkpoint(model, &mut buf)?;
    crate::trace::write_atomic(path, &buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelGraph, NnError> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f))
}
