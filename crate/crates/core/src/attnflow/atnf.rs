//! ATNF: little-endian container for one sequence's attention tensor.
//!
//! ```text
//! "ATNF" | version u8 = 1 | flags u8 | pad u16 = 0 | L u32 | H u32 | n u32
//! L*H*n*n f32 in [l][h][q][k] order
//! u32 token count (= n), then per token: u16 byte length + UTF-8 bytes
//! if flags & 1: n bytes of 0/1 special-token mask
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{AttentionTensor, AttnError};
use crate::Scalar;

pub const ATNF_MAGIC: &[u8; 4] = b"ATNF";
pub const ATNF_VERSION: u8 = 1;
const FLAG_SPECIAL_MASK: u8 = 1;

fn truncated(what: &str) -> impl Fn(std::io::Error) -> AttnError + '_ {
    move |e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            AttnError::Format(format!("file truncated in {what}"))
        } else {
            AttnError::Io(e)
        }
    }
}

pub fn read_tensor_from<T: Scalar, R: Read>(mut r: R) -> Result<AttentionTensor<T>, AttnError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated("magic"))?;
    if &magic != ATNF_MAGIC {
        return Err(AttnError::Format(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = r.read_u8().map_err(truncated("header"))?;
    if version != ATNF_VERSION {
        return Err(AttnError::Format(format!("unsupported version {version}")));
    }
    let flags = r.read_u8().map_err(truncated("header"))?;
    if flags & !FLAG_SPECIAL_MASK != 0 {
        return Err(AttnError::Format(format!("unknown flag bits {flags:#04x}")));
    }
    let pad = r.read_u16::<LittleEndian>().map_err(truncated("header"))?;
    if pad != 0 {
        return Err(AttnError::Format(format!("non-zero padding {pad}")));
    }
    let layers = r.read_u32::<LittleEndian>().map_err(truncated("header"))? as usize;
    let heads = r.read_u32::<LittleEndian>().map_err(truncated("header"))? as usize;
    let n = r.read_u32::<LittleEndian>().map_err(truncated("header"))? as usize;
    let count = layers
        .checked_mul(heads)
        .and_then(|v| v.checked_mul(n))
        .and_then(|v| v.checked_mul(n))
        .ok_or_else(|| AttnError::Format("tensor dimensions overflow".into()))?;

    let mut raw = vec![0f32; count];
    r.read_f32_into::<LittleEndian>(&mut raw)
        .map_err(truncated("attention values"))?;
    let values = raw.into_iter().map(|v| T::lit(f64::from(v))).collect();

    let token_count = r.read_u32::<LittleEndian>().map_err(truncated("token table"))? as usize;
    if token_count != n {
        return Err(AttnError::Format(format!(
            "token table has {token_count} entries for sequence length {n}"
        )));
    }
    let mut tokens = Vec::with_capacity(n);
    for i in 0..n {
        let len = r.read_u16::<LittleEndian>().map_err(truncated("token table"))? as usize;
        let mut bytes = vec![0u8; len];
        r.read_exact(&mut bytes).map_err(truncated("token table"))?;
        let token = String::from_utf8(bytes)
            .map_err(|_| AttnError::Format(format!("token {i} is not valid UTF-8")))?;
        tokens.push(token);
    }

    let special_mask = if flags & FLAG_SPECIAL_MASK != 0 {
        let mut bytes = vec![0u8; n];
        r.read_exact(&mut bytes).map_err(truncated("special mask"))?;
        let mut mask = Vec::with_capacity(n);
        for (i, b) in bytes.into_iter().enumerate() {
            match b {
                0 => mask.push(false),
                1 => mask.push(true),
                other => {
                    return Err(AttnError::Format(format!(
                        "special mask byte {i} is {other}, expected 0 or 1"
                    )))
                }
            }
        }
        Some(mask)
    } else {
        None
    };

    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(AttnError::Format("trailing bytes after tensor".into()));
    }
    AttentionTensor::new(layers, heads, n, values, tokens, special_mask)
}

pub fn write_tensor_to<T: Scalar, W: Write>(tensor: &AttentionTensor<T>, mut w: W) -> Result<(), AttnError> {
    let dim = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| AttnError::Format(format!("{what} {v} exceeds u32")))
    };
    w.write_all(ATNF_MAGIC)?;
    w.write_u8(ATNF_VERSION)?;
    let flags = if tensor.special_mask.is_some() {
        FLAG_SPECIAL_MASK
    } else {
        0
    };
    w.write_u8(flags)?;
    w.write_u16::<LittleEndian>(0)?;
    w.write_u32::<LittleEndian>(dim(tensor.layers(), "layer count")?)?;
    w.write_u32::<LittleEndian>(dim(tensor.heads(), "head count")?)?;
    w.write_u32::<LittleEndian>(dim(tensor.seq_len(), "sequence length")?)?;
    for v in tensor.values() {
        w.write_f32::<LittleEndian>(v.to_f32().unwrap_or(f32::NAN))?;
    }
    w.write_u32::<LittleEndian>(dim(tensor.tokens.len(), "token count")?)?;
    for token in &tensor.tokens {
        let len = u16::try_from(token.len())
            .map_err(|_| AttnError::Format(format!("token of {} bytes exceeds u16", token.len())))?;
        w.write_u16::<LittleEndian>(len)?;
        w.write_all(token.as_bytes())?;
    }
    if let Some(mask) = &tensor.special_mask {
        let bytes: Vec<u8> = mask.iter().map(|&b| u8::from(b)).collect();
        w.write_all(&bytes)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor<T: Scalar>(path: impl AsRef<Path>) -> Result<AttentionTensor<T>, AttnError> {
    read_tensor_from(BufReader::new(File::open(path)?))
}

pub fn write_tensor<T: Scalar>(path: impl AsRef<Path>, tensor: &AttentionTensor<T>) -> Result<(), AttnError> {
    write_tensor_to(tensor, BufWriter::new(File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(mask: bool) -> AttentionTensor<f32> {
        let values = vec![
            0.5, 0.5, 0.0, //
            0.1, 0.7, 0.2, //
            0.0, 0.0, 1.0,
        ];
        let tokens = vec!["[CLS]".into(), "héllo".into(), "[SEP]".into()];
        let mask = mask.then(|| vec![true, false, true]);
        AttentionTensor::new(1, 1, 3, values, tokens, mask).unwrap()
    }

    fn encode<T: Scalar>(t: &AttentionTensor<T>) -> Vec<u8> {
        let mut buf = Vec::new();
        write_tensor_to(t, &mut buf).unwrap();
        buf
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample(true));
        assert_eq!(&bytes[..4], b"ATNF");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 1);
        assert_eq!(&bytes[6..8], &[0, 0]);
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &3u32.to_le_bytes());
        assert_eq!(&bytes[20..24], &0.5f32.to_le_bytes());
        // header + 9 floats + count + tokens (2+5, 2+6, 2+5) + mask
        assert_eq!(bytes.len(), 20 + 36 + 4 + 22 + 3);
        assert_eq!(&bytes[bytes.len() - 3..], &[1, 0, 1]);
    }

    #[test]
    fn byte_identical_round_trip() {
        for mask in [false, true] {
            let bytes = encode(&sample(mask));
            let back: AttentionTensor<f32> = read_tensor_from(bytes.as_slice()).unwrap();
            assert_eq!(back, sample(mask));
            assert_eq!(encode(&back), bytes);
            // widening to f64 is lossless as well
            let wide: AttentionTensor<f64> = read_tensor_from(bytes.as_slice()).unwrap();
            assert_eq!(encode(&wide), bytes);
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = encode(&sample(false));
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(read_tensor_from::<f32, _>(bytes.as_slice()), Err(AttnError::Format(_))));
        let mut bytes = encode(&sample(false));
        bytes[4] = 2;
        assert!(matches!(read_tensor_from::<f32, _>(bytes.as_slice()), Err(AttnError::Format(_))));
    }

    #[test]
    fn truncated_and_trailing() {
        let bytes = encode(&sample(true));
        assert!(matches!(
            read_tensor_from::<f32, _>(&bytes[..bytes.len() - 1]),
            Err(AttnError::Format(_))
        ));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(read_tensor_from::<f32, _>(longer.as_slice()), Err(AttnError::Format(_))));
    }

    #[test]
    fn row_sum_validated_on_read() {
        let mut bytes = encode(&sample(false));
        // first row becomes [0.25, 0.25, 0.0]
        bytes[20..24].copy_from_slice(&0.25f32.to_le_bytes());
        bytes[24..28].copy_from_slice(&0.25f32.to_le_bytes());
        assert!(matches!(
            read_tensor_from::<f32, _>(bytes.as_slice()),
            Err(AttnError::RowSum { layer: 0, head: 0, query: 0, .. })
        ));
    }

    #[test]
    fn bad_mask_byte() {
        let mut bytes = encode(&sample(true));
        let last = bytes.len() - 1;
        bytes[last] = 7;
        assert!(matches!(read_tensor_from::<f32, _>(bytes.as_slice()), Err(AttnError::Format(_))));
    }
}
