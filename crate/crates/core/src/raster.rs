//! 8-bit grayscale images, binary PGM (P5) encoding and pinhole intrinsics.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics used to move between pixels and normalized
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Self {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0 && self.fy > 0.0 && self.width > 0 && self.height > 0;
        let finite = self.fx.is_finite() && self.fy.is_finite() && self.cx.is_finite() && self.cy.is_finite();
        if ok && finite {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "intrinsics need positive finite focal lengths and a non-empty image".into(),
            ))
        }
    }

    pub fn to_pixel(&self, p: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * p.x + self.cx, self.fy * p.y + self.cy)
    }

    pub fn to_normalized(&self, px: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy)
    }

    /// Half-extent of the field of view in normalized units, `(x, y)`.
    pub fn half_fov(&self) -> Vector2<f64> {
        Vector2::new(
            self.cx.max(self.width as f64 - self.cx) / self.fx,
            self.cy.max(self.height as f64 - self.cy) / self.fy,
        )
    }

    /// Normalized bounds `(min, max)` of the image.
    pub fn normalized_bounds(&self) -> (Vector2<f64>, Vector2<f64>) {
        (
            self.to_normalized(&Vector2::new(0.0, 0.0)),
            self.to_normalized(&Vector2::new(self.width as f64, self.height as f64)),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: u8) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    /// Parses a binary 8-bit PGM, allowing `#` comments in the header.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let bad = |why: &str| Error::InvalidInput(format!("malformed PGM: {why}"));
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not ASCII"))?);
        }
        if fields[0] != "P5" {
            return Err(bad("only binary P5 is supported"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric header field"));
        let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
        if maxval != 255 {
            return Err(bad("only 8-bit images are supported"));
        }
        // single whitespace byte separates header and raster
        pos += 1;
        let n = width * height;
        if bytes.len() < pos + n {
            return Err(bad("raster shorter than header claims"));
        }
        Ok(Self {
            width,
            height,
            data: bytes[pos..pos + n].to_vec(),
        })
    }
}
