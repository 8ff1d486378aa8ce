//! Binary greymap (`P5`) images, 8- and 16-bit.

use std::path::Path;

use crate::error::{Error, Result};

/// Greyscale image with samples up to `maxval`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Greymap {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major samples.
    pub pixels: Vec<u16>,
}

impl Greymap {
    pub fn new(width: usize, height: usize, maxval: u16, pixels: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Data("greymap dims must be positive".into()));
        }
        if maxval == 0 {
            return Err(Error::Data("greymap maxval must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::Data(format!(
                "greymap {width}x{height} needs {} samples, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|&&p| p > maxval) {
            return Err(Error::Data(format!("sample {p} exceeds maxval {maxval}")));
        }
        Ok(Greymap {
            width,
            height,
            maxval,
            pixels,
        })
    }

    pub fn from_u8(width: usize, height: usize, pixels: &[u8]) -> Result<Self> {
        Self::new(width, height, 255, pixels.iter().map(|&p| p as u16).collect())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(start, format!("expected {what}")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Greymap> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(0, "bad magic, expected \"P5\""));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > u16::MAX as usize {
        return Err(Error::format(maxval_at, format!("maxval {maxval} out of range")));
    }
    if width == 0 || height == 0 {
        return Err(Error::format(2, "zero image dimension"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::format(cur.pos, "missing whitespace after maxval"));
    }
    let start = cur.pos + 1;
    let sample = if maxval < 256 { 1 } else { 2 };
    let expected = width * height * sample;
    let actual = bytes.len() - start;
    if actual < expected {
        return Err(Error::format(
            start,
            format!("raster needs {expected} bytes, found {actual}"),
        ));
    }
    let raster = &bytes[start..start + expected];
    let pixels: Vec<u16> = if sample == 1 {
        raster.iter().map(|&b| b as u16).collect()
    } else {
        // 16-bit samples are big-endian.
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    if let Some(i) = pixels.iter().position(|&p| p as usize > maxval) {
        return Err(Error::format(
            start + i * sample,
            format!("sample exceeds maxval {maxval}"),
        ));
    }
    Ok(Greymap {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

pub fn encode(map: &Greymap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", map.width, map.height, map.maxval).into_bytes();
    if map.maxval < 256 {
        out.extend(map.pixels.iter().map(|&p| p as u8));
    } else {
        for &p in &map.pixels {
            out.extend_from_slice(&p.to_be_bytes());
        }
    }
    out
}

pub fn read_pgm(path: &Path) -> Result<Greymap> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn write_pgm(map: &Greymap, path: &Path) -> Result<()> {
    std::fs::write(path, encode(map)).map_err(|e| Error::io(path, e))
}
