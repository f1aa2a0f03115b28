//! Model serialization and the training-log CSV.
//!
//! Model file layout (little-endian): 8-byte magic `GCPNET01`, layer
//! count as u32, per-layer dims (kernel, in_maps, out_maps as u32), then
//! per layer the weights as f32 in `[ky][kx][in][out]` order followed by
//! the biases.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::training::EpochStats;
use super::{ConvLayer, NetworkParams, KERNEL_SIZE};
use crate::error::{Error, Result};

const MODEL_MAGIC: &[u8; 8] = b"GCPNET01";

pub fn save_model(params: &NetworkParams, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut write = |bytes: &[u8]| out.write_all(bytes).map_err(|e| Error::io(path, e));

    write(MODEL_MAGIC)?;
    write(&(params.layers().len() as u32).to_le_bytes())?;
    for layer in params.layers() {
        write(&(KERNEL_SIZE as u32).to_le_bytes())?;
        write(&(layer.in_maps() as u32).to_le_bytes())?;
        write(&(layer.out_maps() as u32).to_le_bytes())?;
    }
    for layer in params.layers() {
        for &w in layer.weights() {
            write(&(w as f32).to_le_bytes())?;
        }
        for &b in layer.bias() {
            write(&(b as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_model(path: &Path) -> Result<NetworkParams> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut input = BufReader::new(file);

    let mut magic = [0u8; 8];
    input
        .read_exact(&mut magic)
        .map_err(|e| Error::io(path, e))?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format(format!(
            "{} is not a model file",
            path.display()
        )));
    }

    let mut u32_buf = [0u8; 4];
    let mut read_u32 = |input: &mut BufReader<std::fs::File>| -> Result<u32> {
        input
            .read_exact(&mut u32_buf)
            .map_err(|e| Error::io(path, e))?;
        Ok(u32::from_le_bytes(u32_buf))
    };

    let layer_count = read_u32(&mut input)? as usize;
    let mut dims = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let kernel = read_u32(&mut input)? as usize;
        let in_maps = read_u32(&mut input)? as usize;
        let out_maps = read_u32(&mut input)? as usize;
        if kernel != KERNEL_SIZE {
            return Err(Error::Format(format!(
                "unsupported kernel size {kernel} in {}",
                path.display()
            )));
        }
        dims.push((in_maps, out_maps));
    }

    let mut f32_buf = [0u8; 4];
    let mut read_f32 = |input: &mut BufReader<std::fs::File>| -> Result<f32> {
        input
            .read_exact(&mut f32_buf)
            .map_err(|e| Error::io(path, e))?;
        Ok(f32::from_le_bytes(f32_buf))
    };

    let mut layers = Vec::with_capacity(layer_count);
    for (in_maps, out_maps) in dims {
        let n_w = KERNEL_SIZE * KERNEL_SIZE * in_maps * out_maps;
        let mut weights = Vec::with_capacity(n_w);
        for _ in 0..n_w {
            weights.push(read_f32(&mut input)? as f64);
        }
        let mut bias = Vec::with_capacity(out_maps);
        for _ in 0..out_maps {
            bias.push(read_f32(&mut input)? as f64);
        }
        layers.push(ConvLayer::new(in_maps, out_maps, weights, bias)?);
    }
    NetworkParams::new(layers)
}

/// Writes the per-epoch loss trace as `epoch,mean_loss` CSV.
pub fn write_training_log(trace: &[EpochStats], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "epoch,mean_loss").map_err(|e| Error::io(path, e))?;
    for s in trace {
        writeln!(out, "{},{}", s.epoch, s.mean_loss).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
