use std::io::{Read, Write};

use super::IoError;
use crate::repr::EventFrame;
use crate::Real;

pub const ETF1_MAGIC: &[u8; 4] = b"ETF1";

/// Dense float32 tensor, channel-major planes of row-major pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub channels: u32,
    pub height: u32,
    pub width: u32,
    pub data: Vec<f32>,
}

impl TensorFile {
    pub fn new(channels: u32, height: u32, width: u32, data: Vec<f32>) -> Result<Self, IoError> {
        let expect = channels as usize * height as usize * width as usize;
        if channels == 0 || data.len() != expect {
            return Err(IoError::Dimensions(format!(
                "{channels}x{height}x{width} tensor needs {expect} values, got {}",
                data.len()
            )));
        }
        Ok(TensorFile {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_frame<T: Real>(frame: &EventFrame<T>) -> Self {
        TensorFile {
            channels: frame.channels() as u32,
            height: frame.height() as u32,
            width: frame.width() as u32,
            data: frame.values().iter().map(|v| v.as_f64() as f32).collect(),
        }
    }
}

pub fn write_tensor<W: Write>(tensor: &TensorFile, writer: W) -> Result<(), IoError> {
    let mut w = std::io::BufWriter::new(writer);
    w.write_all(ETF1_MAGIC)?;
    w.write_all(&tensor.channels.to_le_bytes())?;
    w.write_all(&tensor.height.to_le_bytes())?;
    w.write_all(&tensor.width.to_le_bytes())?;
    for v in &tensor.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor<R: Read>(mut reader: R) -> Result<TensorFile, IoError> {
    let mut header = [0u8; 16];
    reader
        .read_exact(&mut header)
        .map_err(|_| IoError::Truncated("ETF1 header needs 16 bytes".into()))?;
    if &header[0..4] != ETF1_MAGIC {
        return Err(IoError::Magic {
            expected: "ETF1".into(),
            found: String::from_utf8_lossy(&header[0..4]).into_owned(),
        });
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    let (channels, height, width) = (word(4), word(8), word(12));
    let n = channels as usize * height as usize * width as usize;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != n * 4 {
        return Err(IoError::Truncated(format!(
            "expected {} data bytes, found {}",
            n * 4,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    TensorFile::new(channels, height, width, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = TensorFile::new(2, 1, 3, vec![0.0, 1.0, 0.5, 0.25, -1.0, 7.0]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&t, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 24);
        assert_eq!(&buf[0..4], b"ETF1");
        assert_eq!(&buf[4..16], &[2, 0, 0, 0, 1, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&buf[20..24], &1.0f32.to_le_bytes());
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(TensorFile::new(1, 2, 2, vec![0.0; 3]).is_err());
        assert!(TensorFile::new(0, 2, 2, vec![]).is_err());
        let t = TensorFile::new(1, 1, 2, vec![0.0; 2]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&t, &mut buf).unwrap();
        buf.pop();
        assert!(matches!(read_tensor(&buf[..]), Err(IoError::Truncated(_))));
    }

    proptest! {
        #[test]
        fn round_trip(c in 1u32..4, h in 1u32..6, w in 1u32..6, seed in any::<u64>()) {
            let n = (c * h * w) as usize;
            let data: Vec<f32> = (0..n).map(|i| f32::from_bits((seed as u32).wrapping_mul(2654435761).wrapping_add(i as u32) & 0x7f7f_ffff)).collect();
            let t = TensorFile::new(c, h, w, data).unwrap();
            let mut buf = Vec::new();
            write_tensor(&t, &mut buf).unwrap();
            prop_assert_eq!(read_tensor(&buf[..]).unwrap(), t);
        }
    }
}
