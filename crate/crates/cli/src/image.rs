//! Binary PGM (P5) / PPM (P6) with maxval 255, and conversion to feature maps.

use std::path::Path;

use ring_core::tensor::FeatureTensor;

use crate::error::{io, CliError, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    /// 1 (gray) or 3 (RGB)
    pub channels: usize,
    /// `[p][q][c]`
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(CliError::Image("dimensions must be positive".into()));
        }
        if !matches!(channels, 1 | 3) {
            return Err(CliError::Image(format!("{channels} channels; expected 1 or 3")));
        }
        if data.len() != height * width * channels {
            return Err(CliError::Image(format!("{} bytes for {height}x{width}x{channels}", data.len())));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut field = || -> Result<String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(CliError::Image("truncated header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let channels = match field()?.as_str() {
            "P5" => 1,
            "P6" => 3,
            m => return Err(CliError::Image(format!("unsupported magic {m:?}"))),
        };
        let num = |s: String| s.parse::<usize>().map_err(|_| CliError::Image(format!("bad header field {s:?}")));
        let width = num(field()?)?;
        let height = num(field()?)?;
        let maxval = num(field()?)?;
        if maxval != 255 {
            return Err(CliError::Image(format!("maxval {maxval}; only 255 is supported")));
        }
        // exactly one whitespace byte separates the header from the raster
        let start = pos + 1;
        let len = height * width * channels;
        if bytes.len() < start + len {
            return Err(CliError::Image("truncated raster".into()));
        }
        Self::new(height, width, channels, bytes[start..start + len].to_vec())
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path).map_err(io(path))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(io(path))
    }

    /// Pixels scaled to `[0, 1]`, packed into `n`-tuples along the channel
    /// axis and zero-padded to whole tuples.
    pub fn to_features(&self, n: usize) -> FeatureTensor {
        let tuples = self.channels.div_ceil(n);
        let mut x = FeatureTensor::zeros(self.height, self.width, tuples, n);
        for p in 0..self.height {
            for q in 0..self.width {
                for c in 0..self.channels {
                    let v = f64::from(self.data[(p * self.width + q) * self.channels + c]) / 255.0;
                    x.data[((p * self.width + q) * tuples) * n + c] = v;
                }
            }
        }
        x
    }

    /// Inverse of [`Image::to_features`]: the first `channels` real channels,
    /// rounded and clamped to 8 bits.
    pub fn from_features(x: &FeatureTensor, channels: usize) -> Result<Self> {
        let real = x.channels * x.n;
        if real < channels {
            return Err(CliError::Image(format!("{real} real channels cannot fill a {channels}-channel image")));
        }
        let mut data = Vec::with_capacity(x.height * x.width * channels);
        for e in 0..x.height * x.width {
            for c in 0..channels {
                data.push((x.data[e * real + c] * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
        Self::new(x.height, x.width, channels, data)
    }
}

/// `10·log10(255² / MSE)` over all channels; infinite for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if (a.height, a.width, a.channels) != (b.height, b.width, b.channels) {
        return Err(CliError::Image("PSNR of images with different shapes".into()));
    }
    let se: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2)).sum();
    let mse = se / a.data.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (255.0f64 * 255.0 / mse).log10() })
}

pub fn format_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_with_comment() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 200]);
        let img = Image::decode(&bytes).unwrap();
        assert_eq!((img.height, img.width, img.channels), (1, 2, 1));
        assert_eq!(img.data, vec![7, 200]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Image::decode(b"P2\n1 1\n255\n0").is_err());
        assert!(Image::decode(b"P5\n2 2\n255\n\x01").is_err());
        assert!(Image::decode(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(Image::new(0, 1, 1, vec![]).is_err());
    }

    #[test]
    fn features_pad_to_whole_tuples() {
        let img = Image::new(1, 1, 3, vec![255, 0, 51]).unwrap();
        let x = img.to_features(4);
        assert_eq!((x.channels, x.n), (1, 4));
        assert_eq!(x.data, vec![1.0, 0.0, 0.2, 0.0]);
        assert_eq!(Image::from_features(&x, 3).unwrap(), img);
        let x2 = img.to_features(2);
        assert_eq!(x2.channels, 2);
        assert_eq!(Image::from_features(&x2, 3).unwrap(), img);
    }

    #[test]
    fn psnr_values() {
        let a = Image::new(1, 2, 1, vec![0, 0]).unwrap();
        let b = Image::new(1, 2, 1, vec![0, 255]).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!((psnr(&a, &b).unwrap() - 10.0 * 2.0f64.log10()).abs() < 1e-12);
        assert_eq!(format_psnr(f64::INFINITY), "inf");
    }
}
