//! RGB image in `[0,1]` with binary PPM (P6) serialization.
//!
//! PPM is the on-disk image format for generated datasets: codec-free and
//! bit-exact across platforms. Pixels quantize to 8 bits on write and load
//! back as `k/255`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    /// Planar (3, H, W) pixel tensor, values in [0,1].
    pub pixels: Tensor3,
}

impl Image {
    pub fn new(height: usize, width: usize) -> Self {
        Image {
            pixels: Tensor3::zeros(3, height, width),
        }
    }

    pub fn height(&self) -> usize {
        self.pixels.h
    }

    pub fn width(&self) -> usize {
        self.pixels.w
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, ch: usize) -> f64 {
        self.pixels.at(ch, y, x)
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, ch: usize, v: f64) {
        *self.pixels.at_mut(ch, y, x) = v;
    }

    pub fn in_unit_range(&self) -> bool {
        self.pixels.data.iter().all(|&v| (0.0..=1.0).contains(&v))
    }

    /// Clamps every pixel to [0,1].
    pub fn clip(&mut self) {
        self.pixels.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    /// `clip01(self + delta)`: the image actually consumed by training and
    /// evaluation after a perturbation is applied.
    pub fn perturbed(&self, delta: &Tensor3) -> Image {
        assert_eq!(delta.data.len(), self.pixels.data.len());
        let data = self
            .pixels
            .data
            .iter()
            .zip(&delta.data)
            .map(|(&x, &d)| (x + d).clamp(0.0, 1.0))
            .collect();
        Image {
            pixels: Tensor3::from_vec(3, self.height(), self.width(), data),
        }
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let (h, w) = (self.height(), self.width());
        let mut out = format!("P6\n{} {}\n255\n", w, h).into_bytes();
        out.reserve(h * w * 3);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..3 {
                    let q = (self.get(y, x, ch) * 255.0).round().clamp(0.0, 255.0) as u8;
                    out.push(q);
                }
            }
        }
        out
    }

    pub fn from_ppm_bytes(bytes: &[u8], origin: &Path) -> Result<Image> {
        let bad = |msg: &str| Error::Validation(format!("{}: {}", origin.display(), msg));
        let mut pos = 0usize;
        let token = |pos: &mut usize| -> Result<String> {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                    *pos += 1;
                }
            }
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if start == *pos {
                return Err(bad("truncated PPM header"));
            }
            Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
        };

        if token(&mut pos)? != "P6" {
            return Err(bad("not a binary PPM (missing P6 magic)"));
        }
        let w: usize = token(&mut pos)?.parse().map_err(|_| bad("bad width"))?;
        let h: usize = token(&mut pos)?.parse().map_err(|_| bad("bad height"))?;
        let maxval: usize = token(&mut pos)?.parse().map_err(|_| bad("bad maxval"))?;
        if maxval != 255 {
            return Err(bad("only 8-bit PPM supported"));
        }
        pos += 1; // single whitespace after maxval
        let need = w * h * 3;
        if bytes.len() < pos + need {
            return Err(bad("truncated PPM pixel data"));
        }
        let mut img = Image::new(h, w);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..3 {
                    let v = bytes[pos + (y * w + x) * 3 + ch] as f64 / 255.0;
                    img.set(y, x, ch, v);
                }
            }
        }
        Ok(img)
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_ppm_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load_ppm(path: &Path) -> Result<Image> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| Error::io(path, e))?
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        Image::from_ppm_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_roundtrip_is_exact_on_quantized_values() {
        let mut img = Image::new(4, 5);
        for y in 0..4 {
            for x in 0..5 {
                for ch in 0..3 {
                    img.set(y, x, ch, ((y * 5 + x) * 3 + ch) as f64 / 255.0);
                }
            }
        }
        let bytes = img.to_ppm_bytes();
        let back = Image::from_ppm_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn perturbed_clips_to_unit_range() {
        let mut img = Image::new(1, 2);
        img.set(0, 0, 0, 0.99);
        img.set(0, 1, 1, 0.01);
        let mut delta = Tensor3::zeros(3, 1, 2);
        *delta.at_mut(0, 0, 0) = 0.05;
        *delta.at_mut(1, 0, 1) = -0.05;
        let p = img.perturbed(&delta);
        assert_eq!(p.get(0, 0, 0), 1.0);
        assert_eq!(p.get(0, 1, 1), 0.0);
    }

    #[test]
    fn rejects_non_p6() {
        let err = Image::from_ppm_bytes(b"P3\n1 1\n255\n", Path::new("mem"));
        assert!(err.is_err());
    }
}
