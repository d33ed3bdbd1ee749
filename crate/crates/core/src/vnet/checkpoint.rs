//! Checkpoint persistence: a one-line JSON header (magic, architecture,
//! metadata, parameter manifest) followed by the raw little-endian parameter
//! payloads at the offsets the manifest declares. Writes go through a
//! sibling temp file and an atomic rename, so an interrupted save never
//! leaves a partial checkpoint at the target path.

use super::{build_model, ArchitectureSpec, Model, VnetError};
use crate::autograd::{Element, Tensor};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &str = "MSEG-CKPT";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: [usize; 5],
    /// byte offset into the payload
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    magic: String,
    spec: ArchitectureSpec,
    seed: u64,
    config_digest: String,
    dtype: String,
    manifest: Vec<ManifestEntry>,
}

pub fn save_checkpoint<T: Element>(model: &Model<T>, path: &Path) -> Result<(), VnetError> {
    let elem_size = std::mem::size_of::<T>();
    let mut manifest = Vec::new();
    let mut offset = 0usize;
    for p in model.params() {
        let s = p.tensor.shape();
        manifest.push(ManifestEntry {
            name: p.name.clone(),
            shape: [s.batch, s.channels, s.nx, s.ny, s.nz],
            offset,
        });
        offset += p.tensor.data().len() * elem_size;
    }
    let header = Header {
        magic: MAGIC.into(),
        spec: model.spec(),
        seed: model.seed(),
        config_digest: model.config_digest().to_string(),
        dtype: T::DTYPE.into(),
        manifest,
    };
    let header_json = serde_json::to_string(&header)
        .map_err(|e| VnetError::CorruptCheckpoint(format!("header serialization: {e}")))?;

    let tmp = path.with_extension("ckpt.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(header_json.as_bytes())?;
        w.write_all(b"\n")?;
        for p in model.params() {
            for v in p.tensor.data() {
                let bits = v.to_f64().unwrap();
                if elem_size == 4 {
                    w.write_all(&(bits as f32).to_le_bytes())?;
                } else {
                    w.write_all(&bits.to_le_bytes())?;
                }
            }
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint<T: Element>(path: &Path) -> Result<Model<T>, VnetError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header_bytes = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(VnetError::CorruptCheckpoint("missing header line".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        header_bytes.push(byte[0]);
        if header_bytes.len() > 1 << 20 {
            return Err(VnetError::CorruptCheckpoint("oversized header".into()));
        }
    }
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| VnetError::CorruptCheckpoint(format!("unparseable header: {e}")))?;
    if header.magic != MAGIC {
        return Err(VnetError::CorruptCheckpoint(format!(
            "unknown magic {:?}",
            header.magic
        )));
    }
    if header.dtype != T::DTYPE {
        return Err(VnetError::CorruptCheckpoint(format!(
            "checkpoint dtype {} does not match requested {}",
            header.dtype,
            T::DTYPE
        )));
    }
    let spec = ArchitectureSpec::new(header.spec.input_dims, header.spec.base_filters)?;

    // the architecture dictates the exact parameter inventory
    let skeleton = build_model::<T>(spec, header.seed);
    if skeleton.params().len() != header.manifest.len() {
        return Err(VnetError::CorruptCheckpoint(format!(
            "manifest lists {} parameters, architecture has {}",
            header.manifest.len(),
            skeleton.params().len()
        )));
    }

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let elem_size = std::mem::size_of::<T>();

    let mut tensors = Vec::with_capacity(header.manifest.len());
    let mut expected_offset = 0usize;
    for (entry, param) in header.manifest.iter().zip(skeleton.params()) {
        let shape = param.tensor.shape();
        if entry.name != param.name
            || entry.shape != [shape.batch, shape.channels, shape.nx, shape.ny, shape.nz]
        {
            return Err(VnetError::CorruptCheckpoint(format!(
                "manifest entry {:?} {:?} does not match architecture parameter {:?} {:?}",
                entry.name, entry.shape, param.name, shape
            )));
        }
        if entry.offset != expected_offset {
            return Err(VnetError::CorruptCheckpoint(format!(
                "parameter {:?} at offset {}, expected {}",
                entry.name, entry.offset, expected_offset
            )));
        }
        let nbytes = shape.len() * elem_size;
        let Some(chunk) = payload.get(entry.offset..entry.offset + nbytes) else {
            return Err(VnetError::CorruptCheckpoint(format!(
                "payload truncated at parameter {:?}",
                entry.name
            )));
        };
        let data: Vec<T> = if elem_size == 4 {
            chunk
                .chunks_exact(4)
                .map(|c| {
                    T::from_f32(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                        .expect("f32 fits element")
                })
                .collect()
        } else {
            chunk
                .chunks_exact(8)
                .map(|c| {
                    T::from_f64(f64::from_le_bytes([
                        c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7],
                    ]))
                    .expect("f64 fits element")
                })
                .collect()
        };
        tensors.push(Tensor::new(shape, data).map_err(|e| {
            VnetError::CorruptCheckpoint(format!("parameter {:?}: {e}", entry.name))
        })?);
        expected_offset += nbytes;
    }
    if payload.len() != expected_offset {
        return Err(VnetError::CorruptCheckpoint(format!(
            "payload has {} bytes, manifest accounts for {}",
            payload.len(),
            expected_offset
        )));
    }

    let params = header
        .manifest
        .iter()
        .zip(tensors)
        .map(|(e, tensor)| super::NamedParam {
            name: e.name.clone(),
            tensor,
        })
        .collect();
    Ok(Model::from_parts(
        spec,
        params,
        header.seed,
        header.config_digest,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Shape;

    fn tiny_model() -> Model<f32> {
        let spec = ArchitectureSpec::new((16, 16, 16), 1).unwrap();
        build_model(spec, 77)
    }

    #[test]
    fn round_trip_reproduces_forward_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut model = tiny_model();
        model.set_config_digest("unit-test");
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint::<f32>(&path).unwrap();

        assert_eq!(loaded.config_digest(), "unit-test");
        assert_eq!(loaded.seed(), model.seed());
        assert_eq!(loaded.count_parameters(), model.count_parameters());

        let input = Tensor::from_fn(Shape::new(1, 1, 16, 16, 16), |i| (i as f32 * 0.01).sin());
        let a = model.forward(&input).unwrap();
        let b = loaded.forward(&input).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn truncated_file_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&tiny_model(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 64]).unwrap();
        assert!(matches!(
            load_checkpoint::<f32>(&path),
            Err(VnetError::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn wrong_dtype_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&tiny_model(), &path).unwrap();
        assert!(matches!(
            load_checkpoint::<f64>(&path),
            Err(VnetError::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn no_temp_file_remains_after_save() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&tiny_model(), &path).unwrap();
        let names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names, vec![std::ffi::OsString::from("model.ckpt")]);
    }
}
