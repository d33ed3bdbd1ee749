//! MVOL file format: a one-line UTF-8 JSON header (magic, kind, dims,
//! spacing, dtype) terminated by `\n`, followed by the raw little-endian
//! payload in x-fastest order. Images are f32, masks u8.

use super::{Dims, Mask3D, Spacing, Volume3D, VoxError};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &str = "MVOL";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    magic: String,
    kind: String,
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    dtype: String,
}

/// A volume or mask as stored in an MVOL file.
#[derive(Debug, Clone, PartialEq)]
pub enum Mvol {
    Image(Volume3D),
    Mask(Mask3D),
}

impl Mvol {
    pub fn into_image(self) -> Result<Volume3D, VoxError> {
        match self {
            Mvol::Image(v) => Ok(v),
            Mvol::Mask(_) => Err(VoxError::Format("expected image payload, got mask".into())),
        }
    }

    pub fn into_mask(self) -> Result<Mask3D, VoxError> {
        match self {
            Mvol::Mask(m) => Ok(m),
            Mvol::Image(_) => Err(VoxError::Format("expected mask payload, got image".into())),
        }
    }
}

pub fn write_mvol(value: &Mvol, path: &Path) -> Result<(), VoxError> {
    let mut w = BufWriter::new(File::create(path)?);
    let (header, payload): (Header, Vec<u8>) = match value {
        Mvol::Image(v) => (
            Header {
                magic: MAGIC.into(),
                kind: "image".into(),
                dims: [v.dims().nx, v.dims().ny, v.dims().nz],
                spacing_mm: [v.spacing().dx, v.spacing().dy, v.spacing().dz],
                dtype: "f32".into(),
            },
            v.voxels().iter().flat_map(|f| f.to_le_bytes()).collect(),
        ),
        Mvol::Mask(m) => (
            Header {
                magic: MAGIC.into(),
                kind: "mask".into(),
                dims: [m.dims().nx, m.dims().ny, m.dims().nz],
                spacing_mm: [m.spacing().dx, m.spacing().dy, m.spacing().dz],
                dtype: "u8".into(),
            },
            m.labels().to_vec(),
        ),
    };
    let header_json = serde_json::to_string(&header)
        .map_err(|e| VoxError::Format(format!("header serialization failed: {e}")))?;
    w.write_all(header_json.as_bytes())?;
    w.write_all(b"\n")?;
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

pub fn read_mvol(path: &Path) -> Result<Mvol, VoxError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header_bytes = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = r.read(&mut byte)?;
        if n == 0 {
            return Err(VoxError::Corrupt("missing header newline".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        header_bytes.push(byte[0]);
        if header_bytes.len() > 4096 {
            return Err(VoxError::Format("header exceeds 4096 bytes".into()));
        }
    }
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| VoxError::Format(format!("unparseable header: {e}")))?;
    if header.magic != MAGIC {
        return Err(VoxError::Format(format!(
            "unknown magic {:?}",
            header.magic
        )));
    }
    let dims = Dims::new(header.dims[0], header.dims[1], header.dims[2])?;
    let spacing = Spacing::new(
        header.spacing_mm[0],
        header.spacing_mm[1],
        header.spacing_mm[2],
    )?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;

    match (header.kind.as_str(), header.dtype.as_str()) {
        ("image", "f32") => {
            if payload.len() != dims.len() * 4 {
                return Err(VoxError::Corrupt(format!(
                    "image payload is {} bytes, header declares {} voxels ({} bytes)",
                    payload.len(),
                    dims.len(),
                    dims.len() * 4
                )));
            }
            let voxels: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Ok(Mvol::Image(Volume3D::new(dims, spacing, voxels)?))
        }
        ("mask", "u8") => {
            if payload.len() != dims.len() {
                return Err(VoxError::Corrupt(format!(
                    "mask payload is {} bytes, header declares {} voxels",
                    payload.len(),
                    dims.len()
                )));
            }
            Ok(Mvol::Mask(Mask3D::new(dims, spacing, payload)?))
        }
        (kind, dtype) => Err(VoxError::Format(format!(
            "unsupported kind/dtype combination {kind:?}/{dtype:?}"
        ))),
    }
}
