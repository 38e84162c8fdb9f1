//! Netpbm graymap (PGM) reading and writing, 8-bit only.
//!
//! Both the plain (`P2`) and raw (`P5`) encodings are accepted. Header
//! fields may be separated by any whitespace and interleaved with `#`
//! comments. Errors carry the byte offset at which parsing failed.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::obstacles::TemplateImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Plain,
    Raw,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Pgm { offset: self.pos, message: message.into() })
    }

    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b == b'#' {
                while let Some(&b) = self.data.get(self.pos) {
                    self.pos += 1;
                    if b == b'\n' || b == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.data.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return match self.data.get(self.pos) {
                None => self.err(format!("unexpected end of data while reading {what}")),
                Some(_) => self.err(format!("expected a decimal number for {what}")),
            };
        }
        let digits = std::str::from_utf8(&self.data[start..self.pos]).expect("ascii digits");
        digits.parse().or_else(|_| {
            self.pos = start;
            self.err(format!("{what} out of range"))
        })
    }
}

/// Parses a P2 or P5 graymap with maxval 255.
pub fn decode(data: &[u8]) -> Result<TemplateImage> {
    let mut cur = Cursor { data, pos: 0 };
    let encoding = match data.get(..2) {
        Some(b"P2") => Encoding::Plain,
        Some(b"P5") => Encoding::Raw,
        _ => return cur.err("expected magic number P2 or P5"),
    };
    cur.pos = 2;
    let cols = cur.number("width")?;
    let rows = cur.number("height")?;
    cur.skip_whitespace_and_comments();
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Pgm {
            offset: maxval_at,
            message: format!("unsupported maxval {maxval}, only 255 is accepted"),
        });
    }
    if rows == 0 || cols == 0 {
        return cur.err(format!("image dimensions must be nonzero, got {cols}x{rows}"));
    }
    let count =
        rows.checked_mul(cols).ok_or(Error::Pgm { offset: cur.pos, message: "image dimensions overflow".into() })?;

    let pixels = match encoding {
        Encoding::Raw => {
            // exactly one whitespace byte separates the header from the raster
            match data.get(cur.pos) {
                Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
                _ => return cur.err("expected a single whitespace byte before the raster"),
            }
            let end = cur.pos + count;
            if data.len() < end {
                cur.pos = data.len();
                return cur
                    .err(format!("truncated raster: expected {count} bytes, found {}", data.len() - (end - count)));
            }
            data[cur.pos..end].to_vec()
        }
        Encoding::Plain => {
            let mut px = Vec::with_capacity(count);
            for k in 0..count {
                cur.skip_whitespace_and_comments();
                let at = cur.pos;
                let value = match cur.number("pixel") {
                    Ok(v) => v,
                    Err(Error::Pgm { offset, .. }) if offset >= data.len() => {
                        return Err(Error::Pgm {
                            offset,
                            message: format!("truncated raster: expected {count} samples, found {k}"),
                        })
                    }
                    Err(e) => return Err(e),
                };
                if value > maxval {
                    return Err(Error::Pgm { offset: at, message: format!("sample {value} exceeds maxval {maxval}") });
                }
                px.push(value as u8);
            }
            px
        }
    };
    TemplateImage::new(rows, cols, pixels)
}

pub fn encode(image: &TemplateImage, encoding: Encoding) -> Vec<u8> {
    let mut out = Vec::new();
    let (rows, cols) = (image.rows(), image.cols());
    match encoding {
        Encoding::Raw => {
            out.extend_from_slice(format!("P5\n{cols} {rows}\n255\n").as_bytes());
            out.extend_from_slice(image.pixels());
        }
        Encoding::Plain => {
            out.extend_from_slice(format!("P2\n{cols} {rows}\n255\n").as_bytes());
            for row in image.pixels().chunks(cols) {
                let line: Vec<String> = row.iter().map(u8::to_string).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
    }
    out
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<TemplateImage> {
    decode(&std::fs::read(path)?)
}

pub fn save_pgm(image: &TemplateImage, path: impl AsRef<Path>, encoding: Encoding) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&encode(image, encoding))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_two_by_two() {
        let img = decode(b"P2 2 2 255 0 0 255 255").unwrap();
        assert_eq!((img.rows(), img.cols()), (2, 2));
        assert_eq!(img.pixels(), &[0, 0, 255, 255]);
    }

    #[test]
    fn raw_matches_plain() {
        let plain = decode(b"P2 2 2 255 0 0 255 255").unwrap();
        let raw = decode(b"P5\n2 2\n255\n\x00\x00\xff\xff").unwrap();
        assert_eq!(plain, raw);
    }

    #[test]
    fn comments_in_header() {
        let img = decode(b"P2\n# made by hand\n3 1 # width height\n255\n1 2 3\n").unwrap();
        assert_eq!(img.pixels(), &[1, 2, 3]);
    }

    #[test]
    fn rejects_sixteen_bit() {
        let err = decode(b"P5 1 1 65535\n\x00\x00").unwrap_err();
        match err {
            Error::Pgm { offset, message } => {
                assert_eq!(offset, 7);
                assert!(message.contains("maxval"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reports_truncation_offsets() {
        match decode(b"P5 2 2 255\n\x00\x00").unwrap_err() {
            Error::Pgm { offset, message } => {
                assert_eq!(offset, 13);
                assert!(message.contains("truncated"));
            }
            other => panic!("{other:?}"),
        }
        match decode(b"P2 2 2 255 0 0 9").unwrap_err() {
            Error::Pgm { offset, .. } => assert_eq!(offset, 16),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(matches!(decode(b"P6 1 1 255 \x00"), Err(Error::Pgm { offset: 0, .. })));
        assert!(matches!(decode(b"P2 x 1 255 0"), Err(Error::Pgm { offset: 3, .. })));
        assert!(matches!(decode(b"P2 1 1 255 300"), Err(Error::Pgm { offset: 11, .. })));
    }
}
