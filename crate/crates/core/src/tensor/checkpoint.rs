// Checkpoint layout:
//
//   MFTC1\n
//   <name> f32 <d0,d1,...> <byte offset>\n     (one line per tensor)
//   \n
//   <little-endian f32 payload, tensors concatenated in manifest order>
//
// Offsets are relative to the first payload byte.

use std::fs;
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "MFTC1\n";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor<f32>,
}

pub fn encode(tensors: &[NamedTensor]) -> Vec<u8> {
    let mut header = String::from(CHECKPOINT_MAGIC);
    let mut offset = 0usize;
    for nt in tensors {
        let shape: Vec<String> = nt.tensor.shape().iter().map(usize::to_string).collect();
        header.push_str(&format!("{} f32 {} {}\n", nt.name, shape.join(","), offset));
        offset += nt.tensor.numel() * 4;
    }
    header.push('\n');
    let mut out = header.into_bytes();
    out.reserve(offset);
    for nt in tensors {
        for v in nt.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Vec<NamedTensor>> {
    let bad = |reason: String| Error::format(path, reason);
    let magic = CHECKPOINT_MAGIC.as_bytes();
    if !bytes.starts_with(magic) {
        return Err(bad("missing MFTC1 magic".into()));
    }
    let mut pos = magic.len();
    let mut entries = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("manifest is not terminated by a blank line".into()))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| bad("manifest is not UTF-8".into()))?;
        pos += end + 1;
        if line.is_empty() {
            break;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [name, dtype, shape, offset] = fields[..] else {
            return Err(bad(format!("malformed manifest line {line:?}")));
        };
        if dtype != "f32" {
            return Err(bad(format!("unsupported dtype {dtype:?} for {name}")));
        }
        let shape: Vec<usize> = shape
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(format!("bad shape for {name}")))?;
        let offset: usize = offset
            .parse()
            .map_err(|_| bad(format!("bad offset for {name}")))?;
        entries.push((name.to_string(), shape, offset));
    }
    let payload = &bytes[pos..];
    let mut expected_offset = 0;
    let mut out = Vec::with_capacity(entries.len());
    for (name, shape, offset) in entries {
        if offset != expected_offset {
            return Err(bad(format!(
                "{name}: offset {offset} but tensors so far end at {expected_offset}"
            )));
        }
        let numel: usize = shape.iter().product();
        let end = offset + numel * 4;
        if end > payload.len() {
            return Err(bad(format!(
                "{name}: payload holds {} bytes, need {end}",
                payload.len()
            )));
        }
        let data = payload[offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let tensor = Tensor::new(shape, data).map_err(|e| bad(format!("{name}: {e}")))?;
        out.push(NamedTensor { name, tensor });
        expected_offset = end;
    }
    if expected_offset != payload.len() {
        return Err(bad(format!(
            "payload holds {} bytes but manifest describes {expected_offset}",
            payload.len()
        )));
    }
    Ok(out)
}

pub fn write_checkpoint(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    fs::write(path, encode(tensors)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<NamedTensor>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn named(name: &str, shape: Vec<usize>, data: Vec<f32>) -> NamedTensor {
        NamedTensor {
            name: name.into(),
            tensor: Tensor::new(shape, data).unwrap(),
        }
    }

    #[test]
    fn layout_is_bit_exact() {
        let bytes = encode(&[
            named("a.weight", vec![1, 2], vec![1.0, -2.0]),
            named("b", vec![1], vec![0.5]),
        ]);
        let header = b"MFTC1\na.weight f32 1,2 0\nb f32 1 8\n\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..header.len() + 4], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), header.len() + 12);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut bytes = encode(&[named("x", vec![2], vec![1.0, 2.0])]);
        bytes.pop();
        assert!(matches!(decode(&bytes, Path::new("t")), Err(Error::Format { .. })));
    }

    proptest! {
        #[test]
        fn round_trip(values in proptest::collection::vec(-1e6f32..1e6, 1..40), split in 1usize..5) {
            let cut = values.len().min(split);
            let tensors = vec![
                named("first", vec![cut], values[..cut].to_vec()),
                named("layer.1.rest", vec![1, values.len() - cut + 1], {
                    let mut v = values[cut..].to_vec();
                    v.push(0.25);
                    v
                }),
            ];
            let back = decode(&encode(&tensors), Path::new("mem")).unwrap();
            prop_assert_eq!(back, tensors);
        }
    }
}
