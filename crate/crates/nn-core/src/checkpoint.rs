//! Named-tensor checkpoint format: magic `OVXW`, version and tensor count
//! as u32 little-endian, then per tensor the name (u32 length + bytes),
//! rank, dims and an f32 little-endian payload.

use std::path::Path;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"OVXW";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: bad magic: expected \"OVXW\"")]
    BadMagic { path: String },
    #[error("{path}: unsupported checkpoint version {version}")]
    Version { path: String, version: u32 },
    #[error("{path}: truncated at byte {offset} while reading {what}")]
    Truncated {
        path: String,
        offset: usize,
        what: &'static str,
    },
    #[error("{path}: tensor name is not valid UTF-8 at byte {offset}")]
    BadName { path: String, offset: usize },
}

/// One named tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

pub fn save_named_tensors(
    path: &Path,
    tensors: &[NamedTensor],
) -> std::result::Result<(), CheckpointError> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(WEIGHTS_MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        debug_assert_eq!(t.dims.iter().product::<usize>(), t.values.len());
        bytes.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        bytes.extend_from_slice(t.name.as_bytes());
        bytes.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            bytes.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_named_tensors(path: &Path) -> std::result::Result<Vec<NamedTensor>, CheckpointError> {
    let display = path.display().to_string();
    let bytes = std::fs::read(path)?;
    let mut offset = 0usize;
    let take = |offset: &mut usize, n: usize, what: &'static str| {
        if *offset + n > bytes.len() {
            return Err(CheckpointError::Truncated {
                path: display.clone(),
                offset: *offset,
                what,
            });
        }
        let slice = &bytes[*offset..*offset + n];
        *offset += n;
        Ok(slice)
    };
    let magic = take(&mut offset, 4, "magic")?;
    if magic != WEIGHTS_MAGIC {
        return Err(CheckpointError::BadMagic { path: display });
    }
    let read_u32 =
        |offset: &mut usize, what: &'static str| -> std::result::Result<u32, CheckpointError> {
            Ok(u32::from_le_bytes(
                take(offset, 4, what)?.try_into().unwrap(),
            ))
        };
    let version = read_u32(&mut offset, "version")?;
    if version != VERSION {
        return Err(CheckpointError::Version {
            path: display,
            version,
        });
    }
    let count = read_u32(&mut offset, "tensor count")? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut offset, "name length")? as usize;
        let name_offset = offset;
        let name_bytes = take(&mut offset, name_len, "name")?.to_vec();
        let name = String::from_utf8(name_bytes).map_err(|_| CheckpointError::BadName {
            path: display.clone(),
            offset: name_offset,
        })?;
        let rank = read_u32(&mut offset, "rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u32(&mut offset, "dim")? as usize);
        }
        let len: usize = dims.iter().product();
        let payload = take(&mut offset, len * 4, "payload")?;
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(NamedTensor { name, dims, values });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bytes_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ovxw");
        let tensors = vec![
            NamedTensor {
                name: "enc.kernel".into(),
                dims: vec![2, 3],
                values: vec![1.0, -2.5, 0.0, 3.25, f32::MIN_POSITIVE, 9.5],
            },
            NamedTensor {
                name: "bias".into(),
                dims: vec![2],
                values: vec![0.5, -0.5],
            },
        ];
        save_named_tensors(&path, &tensors).unwrap();
        let back = load_named_tensors(&path).unwrap();
        assert_eq!(back, tensors);

        save_named_tensors(&path, &back).unwrap();
        let second = std::fs::read(&path).unwrap();
        save_named_tensors(&path, &tensors).unwrap();
        assert_eq!(second, std::fs::read(&path).unwrap());
    }

    #[test]
    fn expected_file_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ovxw");
        let t = NamedTensor {
            name: "ab".into(),
            dims: vec![4],
            values: vec![0.0; 4],
        };
        save_named_tensors(&path, &[t]).unwrap();
        // 12 header + 4 + 2 name + 4 rank + 4 dim + 16 payload
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 42);
    }

    #[test]
    fn truncation_and_magic_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.ovxw");
        let t = NamedTensor {
            name: "t".into(),
            dims: vec![2],
            values: vec![1.0, 2.0],
        };
        save_named_tensors(&path, &[t]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            load_named_tensors(&path).unwrap_err(),
            CheckpointError::Truncated { .. }
        ));
        let mut corrupt = bytes.clone();
        corrupt[1] = b'!';
        std::fs::write(&path, &corrupt).unwrap();
        assert!(matches!(
            load_named_tensors(&path).unwrap_err(),
            CheckpointError::BadMagic { .. }
        ));
    }
}
