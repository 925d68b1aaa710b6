//! Binary PPM (P6, maxval 255): `"P6\n<w> <h>\n255\n"` followed by RGB bytes.

use padfree_core::{ImagePatch, SampleSpec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("PPM error: {0}")]
pub struct PpmError(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ppm {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

/// `[-1, 1] → [0, 255]`, rounded, clamped; NaN maps to 0.
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

pub fn dequantize(b: u8) -> f64 {
    b as f64 / 127.5 - 1.0
}

impl Ppm {
    pub fn from_patch(patch: &ImagePatch) -> Self {
        Ppm { width: patch.width(), height: patch.height(), rgb: patch.data.iter().map(|&v| quantize(v)).collect() }
    }

    pub fn to_patch(&self, spec: SampleSpec) -> Result<ImagePatch, PpmError> {
        if spec.resolution != [self.width, self.height] {
            return Err(PpmError(format!(
                "image is {}x{}, spec resolution is {:?}",
                self.width, self.height, spec.resolution
            )));
        }
        Ok(ImagePatch { data: self.rgb.iter().map(|&b| dequantize(b)).collect(), spec })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }

    /// Accepts any P6 file with maxval 255, including `#` comments.
    pub fn decode(bytes: &[u8]) -> Result<Self, PpmError> {
        let mut pos = 0;
        let mut token = || -> Result<String, PpmError> {
            loop {
                match bytes.get(pos) {
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                            pos += 1;
                        }
                    }
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(_) => break,
                    None => return Err(PpmError("unexpected end of header".into())),
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
                pos += 1;
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        let magic = token()?;
        if magic != "P6" {
            return Err(PpmError(format!("expected magic P6, found {magic:?}")));
        }
        let mut number = |what: &str| -> Result<usize, PpmError> {
            let t = token()?;
            t.parse().map_err(|_| PpmError(format!("invalid {what} {t:?}")))
        };
        let width = number("width")?;
        let height = number("height")?;
        let maxval = number("maxval")?;
        if maxval != 255 {
            return Err(PpmError(format!("only maxval 255 is supported, found {maxval}")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        let start = pos + 1;
        let len = width * height * 3;
        let rgb = bytes
            .get(start..start + len)
            .ok_or_else(|| PpmError(format!("raster truncated: need {len} bytes")))?
            .to_vec();
        if bytes.len() != start + len {
            return Err(PpmError(format!("{} trailing bytes after raster", bytes.len() - start - len)));
        }
        Ok(Ppm { width, height, rgb })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let p = Ppm { width: 2, height: 1, rgb: vec![0, 1, 2, 3, 4, 5] };
        assert_eq!(p.encode(), b"P6\n2 1\n255\n\x00\x01\x02\x03\x04\x05");
    }

    #[test]
    fn quantize_endpoints() {
        assert_eq!(quantize(-1.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.0), 128);
        assert_eq!(quantize(7.0), 255);
        for b in 0..=255u8 {
            assert_eq!(quantize(dequantize(b)), b);
        }
    }

    #[test]
    fn comments_are_skipped() {
        let p = Ppm::decode(b"P6 # made by hand\n1 1\n255\n\x0a\x0b\x0c").unwrap();
        assert_eq!(p.rgb, vec![10, 11, 12]);
    }

    #[test]
    fn rejects_other_formats() {
        assert!(Ppm::decode(b"P3\n1 1\n255\n1 2 3").is_err());
        assert!(Ppm::decode(b"P6\n1 1\n65535\n\x00\x00").is_err());
        assert!(Ppm::decode(b"P6\n2 2\n255\n\x00").is_err());
    }
}
