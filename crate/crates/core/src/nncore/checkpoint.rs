//! Model checkpoints: a ZRFA-style container holding named f64 tensors plus
//! a JSON header of hyperparameters.
//!
//! Layout: magic `ZRNC`, version (u32 LE = 1), u32 LE JSON length, JSON
//! bytes, u32 LE tensor count, index records (u16 LE name length, name,
//! u32 LE rows, u32 LE cols, u64 LE offset into the payload), then the
//! f64 LE payload concatenated in index order.

use super::{NnError, NnResult};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use std::collections::BTreeMap;
use std::io::{Read, Write};

const MAGIC: [u8; 4] = *b"ZRNC";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(
    mut sink: W,
    header: &serde_json::Value,
    tensors: &BTreeMap<String, Array2<f64>>,
) -> NnResult<()> {
    sink.write_all(&MAGIC)?;
    sink.write_u32::<LittleEndian>(VERSION)?;
    let header_bytes = serde_json::to_vec(header)?;
    sink.write_u32::<LittleEndian>(header_bytes.len() as u32)?;
    sink.write_all(&header_bytes)?;
    sink.write_u32::<LittleEndian>(tensors.len() as u32)?;
    let mut offset = 0u64;
    for (name, tensor) in tensors {
        let name_bytes = name.as_bytes();
        sink.write_u16::<LittleEndian>(name_bytes.len() as u16)?;
        sink.write_all(name_bytes)?;
        sink.write_u32::<LittleEndian>(tensor.nrows() as u32)?;
        sink.write_u32::<LittleEndian>(tensor.ncols() as u32)?;
        sink.write_u64::<LittleEndian>(offset)?;
        offset += tensor.len() as u64 * 8;
    }
    for tensor in tensors.values() {
        for &v in tensor.iter() {
            sink.write_f64::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(
    mut source: R,
) -> NnResult<(serde_json::Value, BTreeMap<String, Array2<f64>>)> {
    let mut magic = [0u8; 4];
    source
        .read_exact(&mut magic)
        .map_err(|_| NnError::Checkpoint("missing magic".into()))?;
    if magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = source.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = source.read_u32::<LittleEndian>()? as usize;
    let mut header_bytes = vec![0u8; header_len];
    source.read_exact(&mut header_bytes)?;
    let header: serde_json::Value = serde_json::from_slice(&header_bytes)?;
    let count = source.read_u32::<LittleEndian>()?;
    let mut index = Vec::with_capacity(count as usize);
    let mut expected = 0u64;
    for _ in 0..count {
        let name_len = source.read_u16::<LittleEndian>()? as usize;
        let mut name_bytes = vec![0u8; name_len];
        source.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| NnError::Checkpoint("tensor name is not UTF-8".into()))?;
        let rows = source.read_u32::<LittleEndian>()? as usize;
        let cols = source.read_u32::<LittleEndian>()? as usize;
        let offset = source.read_u64::<LittleEndian>()?;
        if offset != expected {
            return Err(NnError::Checkpoint(format!(
                "tensor '{name}' offset {offset} != expected {expected}"
            )));
        }
        expected += (rows * cols) as u64 * 8;
        index.push((name, rows, cols));
    }
    let mut tensors = BTreeMap::new();
    for (name, rows, cols) in index {
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            values.push(
                source
                    .read_f64::<LittleEndian>()
                    .map_err(|_| NnError::Checkpoint("truncated payload".into()))?,
            );
        }
        let tensor = Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| NnError::Checkpoint(e.to_string()))?;
        tensors.insert(name, tensor);
    }
    Ok((header, tensors))
}
