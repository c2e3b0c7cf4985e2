//! Model checkpoints: a JSON-described spec followed by named parameter
//! tensors in a compact binary layout.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "NNCK"
//! version u32      1
//! hdr_len u64      length of the JSON header
//! header  bytes    {"spec": ModelSpec, "meta": <caller JSON>}
//! count   u32      number of tensors
//! tensor  repeated name_len u16, name utf8, rank u8, dims u32 each,
//!                  data f32 little-endian
//! ```
//!
//! Tensor names are `n<node>.<param>` for parameters and
//! `n<node>.buf.<name>` for batch-norm running statistics. Tied nodes own
//! no tensors and therefore store none.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ModelSpec;
use crate::model::Model;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"NNCK";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    meta: serde_json::Value,
}

fn write_tensor<W: Write>(w: &mut W, name: &str, t: &Tensor<f32>) -> Result<()> {
    let name_bytes = name.as_bytes();
    if name_bytes.len() > u16::MAX as usize {
        return Err(Error::Checkpoint(format!("tensor name too long: {name}")));
    }
    w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
    w.write_all(name_bytes)?;
    if t.shape().len() > u8::MAX as usize {
        return Err(Error::Checkpoint("tensor rank exceeds 255".into()));
    }
    w.write_all(&[t.shape().len() as u8])?;
    for &d in t.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_tensor<R: Read>(r: &mut R) -> Result<(String, Tensor<f32>)> {
    let name_len = u16::from_le_bytes(read_exact_array(r)?) as usize;
    let mut name_bytes = vec![0u8; name_len];
    r.read_exact(&mut name_bytes)?;
    let name = String::from_utf8(name_bytes)
        .map_err(|_| Error::Checkpoint("tensor name is not valid utf-8".into()))?;
    let rank = read_exact_array::<_, 1>(r)?[0] as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(u32::from_le_bytes(read_exact_array(r)?) as usize);
    }
    let len: usize = shape.iter().product();
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        data.push(f32::from_le_bytes(read_exact_array(r)?));
    }
    Ok((name, Tensor::from_vec(&shape, data)?))
}

/// Writes the model (spec, parameters, batch-norm buffers) plus arbitrary
/// caller metadata to `path`.
pub fn save_model(model: &Model<f32>, meta: &serde_json::Value, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let header = Header {
        spec: model.spec().clone(),
        meta: meta.clone(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Checkpoint(format!("header serialisation failed: {e}")))?;
    w.write_all(&(header_json.len() as u64).to_le_bytes())?;
    w.write_all(&header_json)?;

    let count: usize = model
        .nodes
        .iter()
        .map(|n| n.params.len() + n.buffers.len())
        .sum();
    w.write_all(&(count as u32).to_le_bytes())?;
    for (idx, node) in model.nodes.iter().enumerate() {
        for (name, tensor) in &node.params {
            write_tensor(&mut w, &format!("n{idx}.{name}"), tensor)?;
        }
        for (name, tensor) in &node.buffers {
            write_tensor(&mut w, &format!("n{idx}.buf.{name}"), tensor)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint back into a model, returning the caller metadata
/// stored alongside it.
///
/// Every tensor the spec requires must be present with its exact shape;
/// unknown or duplicate tensors and trailing bytes are rejected.
pub fn load_model(path: &Path) -> Result<(Model<f32>, serde_json::Value)> {
    let mut r = BufReader::new(File::open(path)?);
    let magic = read_exact_array::<_, 4>(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic (not a model checkpoint)".into()));
    }
    let version = u32::from_le_bytes(read_exact_array(&mut r)?);
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let header_len = u64::from_le_bytes(read_exact_array(&mut r)?) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Checkpoint(format!("malformed header: {e}")))?;

    let mut model = Model::<f32>::init(header.spec)?;
    let mut filled = vec![false; 0];
    let mut expected: Vec<(String, usize, usize, bool)> = Vec::new();
    for (idx, node) in model.nodes.iter().enumerate() {
        for (p, (name, _)) in node.params.iter().enumerate() {
            expected.push((format!("n{idx}.{name}"), idx, p, false));
        }
        for (b, (name, _)) in node.buffers.iter().enumerate() {
            expected.push((format!("n{idx}.buf.{name}"), idx, b, true));
        }
    }
    filled.resize(expected.len(), false);

    let count = u32::from_le_bytes(read_exact_array(&mut r)?) as usize;
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint stores {count} tensors, spec requires {}",
            expected.len()
        )));
    }
    for _ in 0..count {
        let (name, tensor) = read_tensor(&mut r)?;
        let slot = expected
            .iter()
            .position(|(n, ..)| *n == name)
            .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name}")))?;
        if filled[slot] {
            return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
        }
        let (_, idx, sub, is_buffer) = expected[slot];
        let dst = if is_buffer {
            &mut model.nodes[idx].buffers[sub].1
        } else {
            &mut model.nodes[idx].params[sub].1
        };
        if dst.shape() != tensor.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has shape {:?}, spec requires {:?}",
                tensor.shape(),
                dst.shape()
            )));
        }
        *dst = tensor;
        filled[slot] = true;
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok((model, header.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, LayerKind};
    use crate::tensor::Tensor;
    use serde_json::json;
    use std::io::{Seek, SeekFrom};

    fn sample_model() -> Model<f32> {
        let mut g = GraphBuilder::new();
        let x = g.input(&[2, 4, 4]);
        let c = g.add(
            LayerKind::Conv2d {
                in_channels: 2,
                out_channels: 3,
            },
            &[x],
        );
        let b = g.add(LayerKind::BatchNorm { channels: 3 }, &[c]);
        let a = g.add(LayerKind::LeakyRelu { slope: 0.3 }, &[b]);
        Model::init(g.finish(&[a], 99).unwrap()).unwrap()
    }

    #[test]
    fn round_trip_preserves_forward_outputs_and_meta() {
        let mut model = sample_model();
        // Touch the running statistics so buffers are non-trivial.
        let x = Tensor::from_vec(&[2, 2, 4, 4], (0..64).map(|v| v as f32 * 0.1).collect())
            .unwrap();
        model.forward_train(std::slice::from_ref(&x)).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.nnck");
        let meta = json!({"label": "round-trip", "epoch": 7});
        save_model(&model, &meta, &path).unwrap();

        let (loaded, loaded_meta) = load_model(&path).unwrap();
        assert_eq!(loaded_meta, meta);
        assert_eq!(loaded.spec(), model.spec());
        let a = model.forward_eval(std::slice::from_ref(&x)).unwrap();
        let b = loaded.forward_eval(std::slice::from_ref(&x)).unwrap();
        assert_eq!(a[0].data(), b[0].data());
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let model = sample_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.nnck");
        save_model(&model, &serde_json::Value::Null, &path).unwrap();

        // Clobber the magic.
        let mut f = std::fs::OpenOptions::new()
            .write(true)
            .open(&path)
            .unwrap();
        f.seek(SeekFrom::Start(0)).unwrap();
        f.write_all(b"XXXX").unwrap();
        drop(f);
        assert!(matches!(load_model(&path), Err(Error::Checkpoint(_))));

        // Truncation loses tensors.
        save_model(&model, &serde_json::Value::Null, &path).unwrap();
        let len = std::fs::metadata(&path).unwrap().len();
        let f = std::fs::OpenOptions::new().write(true).open(&path).unwrap();
        f.set_len(len - 9).unwrap();
        drop(f);
        assert!(load_model(&path).is_err());

        // Trailing garbage is noticed.
        save_model(&model, &serde_json::Value::Null, &path).unwrap();
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .unwrap();
        f.write_all(&[0u8; 3]).unwrap();
        drop(f);
        assert!(matches!(load_model(&path), Err(Error::Checkpoint(_))));
    }
}
