//! `TNSR` binary tensor files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "TNSR" | version u8 = 1 | dtype u8 | rank u8 | rank x u32 dims | payload
//! ```
//!
//! dtype 0 stores `f32`, dtype 1 stores `f64`. The payload is row-major.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

pub const MAGIC: &[u8; 4] = b"TNSR";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

impl DType {
    fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

pub fn encode(t: &Tensor, dtype: DType) -> Vec<u8> {
    let mut out = Vec::with_capacity(7 + 4 * t.rank() + dtype.size() * t.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(dtype as u8);
    out.push(u8::try_from(t.rank()).expect("rank fits in u8"));
    for &d in t.dims() {
        out.extend_from_slice(&u32::try_from(d).expect("dim fits in u32").to_le_bytes());
    }
    match dtype {
        DType::F32 => t
            .data()
            .iter()
            .for_each(|&x| out.extend_from_slice(&(x as f32).to_le_bytes())),
        DType::F64 => t.data().iter().for_each(|&x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 7 {
        return Err(Error::format(
            bytes.len(),
            format!("header needs 7 bytes, file has {}", bytes.len()),
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"TNSR\""));
    }
    if bytes[4] != VERSION {
        return Err(Error::format(4, format!("unsupported version {}", bytes[4])));
    }
    let dtype = match bytes[5] {
        0 => DType::F32,
        1 => DType::F64,
        other => return Err(Error::format(5, format!("unknown dtype {other}"))),
    };
    let rank = bytes[6] as usize;
    if rank == 0 {
        return Err(Error::format(6, "rank must be at least 1"));
    }
    let header = 7 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::format(
            bytes.len(),
            format!("truncated dims: header needs {header} bytes, file has {}", bytes.len()),
        ));
    }
    let mut dims = Vec::with_capacity(rank);
    for k in 0..rank {
        let at = 7 + 4 * k;
        let d = u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
        if d == 0 {
            return Err(Error::format(at, "zero-sized dimension"));
        }
        dims.push(d);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(7, "dims overflow"))?;
    let expected = count * dtype.size();
    let actual = bytes.len() - header;
    if actual != expected {
        return Err(Error::format(
            header,
            format!("payload for dims {dims:?} needs {expected} bytes, found {actual}"),
        ));
    }
    let payload = &bytes[header..];
    let data = match dtype {
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        DType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    Tensor::new(dims, data)
}

pub fn write_tensor(t: &Tensor, path: &Path, dtype: DType) -> Result<()> {
    std::fs::write(path, encode(t, dtype)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    dims: Vec<usize>,
    file: String,
}

/// Writes `params.json` plus one `f64` tensor file per parameter.
pub fn save_params(store: &ParamStore, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = Vec::with_capacity(store.len());
    for slot in store.slots() {
        let file = format!("{}.tnsr", slot.name());
        write_tensor(&slot.value, &dir.join(&file), DType::F64)?;
        index.push(ParamEntry {
            name: slot.name().to_string(),
            dims: slot.value.dims().to_vec(),
            file,
        });
    }
    let path = dir.join("params.json");
    let text = serde_json::to_string_pretty(&index).expect("index serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Reads a store written by [`save_params`], in the recorded order.
pub fn load_params(dir: &Path) -> Result<ParamStore> {
    let path = dir.join("params.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: Vec<ParamEntry> = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    let mut store = ParamStore::new();
    for entry in index {
        let t = read_tensor(&dir.join(&entry.file))?;
        if t.dims() != entry.dims.as_slice() {
            return Err(Error::Data(format!(
                "{}: `{}` has dims {:?}, index says {:?}",
                path.display(),
                entry.name,
                t.dims(),
                entry.dims
            )));
        }
        store.insert(entry.name, t)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![2, 3], vec![1.0; 6]).unwrap();
        let b = encode(&t, DType::F64);
        assert_eq!(&b[..7], &[b'T', b'N', b'S', b'R', 1, 1, 2]);
        assert_eq!(&b[7..15], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(b.len(), 15 + 48);
    }

    #[test]
    fn truncated_payload_names_byte_counts() {
        let t = Tensor::new(vec![2, 3], vec![0.5; 6]).unwrap();
        let b = encode(&t, DType::F64);
        let err = decode(&b[..b.len() - 3]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("needs 48 bytes, found 45"), "{msg}");
        assert!(matches!(err, Error::Format { offset: 15, .. }));
    }

    #[test]
    fn payload_count_mismatch() {
        let t = Tensor::new(vec![5], vec![0.5; 5]).unwrap();
        let mut b = encode(&t, DType::F64);
        // Rewrite header to claim dims [2, 3].
        b.truncate(7);
        b[6] = 2;
        b.extend_from_slice(&2u32.to_le_bytes());
        b.extend_from_slice(&3u32.to_le_bytes());
        b.extend(std::iter::repeat_n(0u8, 5 * 8));
        assert!(matches!(decode(&b), Err(Error::Format { .. })));
    }

    #[test]
    fn bad_magic_and_version() {
        let t = Tensor::vector(&[1.0]);
        let mut b = encode(&t, DType::F32);
        b[0] = b'X';
        assert!(matches!(decode(&b), Err(Error::Format { offset: 0, .. })));
        let mut b = encode(&t, DType::F32);
        b[4] = 2;
        assert!(matches!(decode(&b), Err(Error::Format { offset: 4, .. })));
        assert!(matches!(decode(b"TNS"), Err(Error::Format { .. })));
    }

    #[test]
    fn f32_widens() {
        let t = Tensor::vector(&[0.1, -2.5]);
        let back = decode(&encode(&t, DType::F32)).unwrap();
        assert_eq!(back.data(), &[0.1f32 as f64, -2.5]);
    }

    proptest! {
        #[test]
        fn f64_round_trip_is_bit_exact(
            dims in prop::collection::vec(1usize..5, 1..4),
            seed in any::<u64>(),
        ) {
            let n: usize = dims.iter().product();
            let data: Vec<f64> = (0..n)
                .map(|i| f64::from_bits(seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) >> 2))
                .collect();
            let t = Tensor::new(dims, data).unwrap();
            let back = decode(&encode(&t, DType::F64)).unwrap();
            prop_assert_eq!(back.dims(), t.dims());
            for (a, b) in back.data().iter().zip(t.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
