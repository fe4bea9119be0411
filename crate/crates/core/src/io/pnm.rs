//! Binary PGM (P5) and PPM (P6) images.

use std::io::{Read, Write};

use super::IoError;
use crate::repr::EventFrame;
use crate::Real;

/// Grayscale image as read from a P5 file. Samples are in `0..=maxval`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

impl GrayImage {
    /// Samples scaled to `[0, 1]`.
    pub fn normalized<T: Real>(&self) -> Vec<T> {
        let m = T::lit(self.maxval as f64);
        self.data.iter().map(|&v| T::lit(v as f64) / m).collect()
    }
}

/// Binary segmentation mask; a pixel is inside iff its PGM value is > 127.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    inside: Vec<bool>,
    count: usize,
}

impl Mask {
    pub fn new(width: usize, height: usize, inside: Vec<bool>) -> Result<Self, IoError> {
        if inside.len() != width * height {
            return Err(IoError::Dimensions(format!(
                "{width}x{height} mask needs {} pixels, got {}",
                width * height,
                inside.len()
            )));
        }
        let count = inside.iter().filter(|&&b| b).count();
        Ok(Mask {
            width,
            height,
            inside,
            count,
        })
    }

    /// Mask covering the rectangle `[x, x+w) x [y, y+h)` clipped to the image.
    pub fn from_rect(width: usize, height: usize, x: usize, y: usize, w: usize, h: usize) -> Self {
        let mut inside = vec![false; width * height];
        for row in y..(y + h).min(height) {
            for col in x..(x + w).min(width) {
                inside[row * width + col] = true;
            }
        }
        Mask::new(width, height, inside).expect("sizes agree")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of in-mask pixels (N).
    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn contains_index(&self, i: usize) -> bool {
        self.inside[i]
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.inside[y * self.width + x]
    }

    pub fn pixels(&self) -> &[bool] {
        &self.inside
    }
}

struct HeaderParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderParser<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, IoError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| IoError::Record {
                offset: start as u64,
                msg: format!("expected {what} in PNM header"),
            })
    }
}

/// Reads a binary P5 image (8- or 16-bit samples).
pub fn read_pgm<R: Read>(mut reader: R) -> Result<GrayImage, IoError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() < 2 {
        return Err(IoError::Truncated("PGM magic".into()));
    }
    match &bytes[0..2] {
        b"P5" => {}
        b"P2" => {
            return Err(IoError::Unsupported(
                "ASCII PGM (P2); only binary P5 is accepted".into(),
            ))
        }
        b"P3" | b"P6" => {
            return Err(IoError::Unsupported(
                "colour PNM; masks must be binary PGM (P5)".into(),
            ))
        }
        other => {
            return Err(IoError::Magic {
                expected: "P5".into(),
                found: String::from_utf8_lossy(other).into_owned(),
            })
        }
    }
    let mut p = HeaderParser {
        bytes: &bytes,
        pos: 2,
    };
    let width = p.number("width")?;
    let height = p.number("height")?;
    let maxval = p.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(IoError::Invalid(format!("PGM maxval {maxval} out of range")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    p.pos += 1;
    let n = width * height;
    let raster = &bytes[p.pos.min(bytes.len())..];
    let data: Vec<u16> = if maxval < 256 {
        if raster.len() < n {
            return Err(IoError::Truncated(format!(
                "PGM raster needs {n} bytes, got {}",
                raster.len()
            )));
        }
        raster[..n].iter().map(|&b| b as u16).collect()
    } else {
        if raster.len() < 2 * n {
            return Err(IoError::Truncated(format!(
                "PGM raster needs {} bytes, got {}",
                2 * n,
                raster.len()
            )));
        }
        raster[..2 * n]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok(GrayImage {
        width,
        height,
        maxval: maxval as u16,
        data,
    })
}

/// Reads a P5 mask with maxval 255, optionally checking its dimensions.
pub fn read_mask<R: Read>(reader: R, expected: Option<(usize, usize)>) -> Result<Mask, IoError> {
    let img = read_pgm(reader)?;
    if img.maxval != 255 {
        return Err(IoError::Invalid(format!(
            "mask maxval must be 255, got {}",
            img.maxval
        )));
    }
    if let Some((w, h)) = expected {
        if (img.width, img.height) != (w, h) {
            return Err(IoError::Dimensions(format!(
                "mask is {}x{}, expected {w}x{h}",
                img.width, img.height
            )));
        }
    }
    Mask::new(
        img.width,
        img.height,
        img.data.iter().map(|&v| v > 127).collect(),
    )
}

pub fn write_pgm<W: Write>(
    width: usize,
    height: usize,
    data: &[u8],
    mut writer: W,
) -> Result<(), IoError> {
    if data.len() != width * height {
        return Err(IoError::Dimensions(format!(
            "{width}x{height} image needs {} bytes, got {}",
            width * height,
            data.len()
        )));
    }
    write!(writer, "P5\n{width} {height}\n255\n")?;
    writer.write_all(data)?;
    Ok(())
}

#[inline]
fn quantize<T: Real>(v: T) -> u8 {
    let q = (v.as_f64().clamp(0.0, 1.0) * 255.0 + 0.5).floor();
    q as u8
}

/// Writes a 1-channel frame as P5 or a 3-channel frame as P6, mapping
/// `[0, 1]` to `round(v * 255)` with halves rounded up.
pub fn write_frame_pnm<T: Real, W: Write>(
    frame: &EventFrame<T>,
    mut writer: W,
) -> Result<(), IoError> {
    let (w, h) = (frame.width(), frame.height());
    let plane = w * h;
    let v = frame.values();
    match frame.channels() {
        1 => {
            let bytes: Vec<u8> = v.iter().map(|&x| quantize(x)).collect();
            write_pgm(w, h, &bytes, writer)
        }
        3 => {
            write!(writer, "P6\n{w} {h}\n255\n")?;
            let mut bytes = Vec::with_capacity(plane * 3);
            for i in 0..plane {
                for c in 0..3 {
                    bytes.push(quantize(v[c * plane + i]));
                }
            }
            writer.write_all(&bytes)?;
            Ok(())
        }
        c => Err(IoError::Unsupported(format!(
            "{c}-channel frames have no PNM form; use a tensor file"
        ))),
    }
}
