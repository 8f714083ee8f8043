//! Portable pixmaps (P3 and P6, maxval 255).

use std::fs;
use std::path::Path;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major pixels.
    pub pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(CliError::Usage(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

/// Header tokens and the offset just past the single whitespace byte that
/// ends the header.
fn header(bytes: &[u8]) -> Result<([usize; 3], &[u8; 2], usize)> {
    let bad = |msg: &str| CliError::UnsupportedFormat(msg.to_string());
    if bytes.len() < 2 {
        return Err(bad("file too short for a pixmap"));
    }
    let magic: &[u8; 2] = bytes[..2].try_into().expect("two bytes");
    let mut pos = 2;
    let mut vals = [0usize; 3];
    for v in &mut vals {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *v = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("malformed pixmap header"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("malformed pixmap header"));
    }
    Ok((vals, magic, pos + 1))
}

pub fn parse_ppm(bytes: &[u8]) -> Result<RgbImage> {
    match bytes.get(..2) {
        Some(b"P3") | Some(b"P6") => {}
        Some(m) => {
            return Err(CliError::UnsupportedFormat(format!(
                "magic number {}",
                String::from_utf8_lossy(m)
            )))
        }
        None => return Err(CliError::UnsupportedFormat("empty file".into())),
    }
    let ([width, height, maxval], magic, body) = header(bytes)?;
    if maxval != 255 {
        return Err(CliError::UnsupportedFormat(format!("maxval {maxval}")));
    }
    let n = width * height;
    let mut pixels = Vec::with_capacity(n);
    if magic == b"P6" {
        let data = &bytes[body..];
        if data.len() < 3 * n {
            return Err(CliError::UnsupportedFormat("truncated pixel data".into()));
        }
        pixels.extend(data[..3 * n].chunks_exact(3).map(|c| [c[0], c[1], c[2]]));
    } else {
        let text = std::str::from_utf8(&bytes[body..])
            .map_err(|_| CliError::UnsupportedFormat("non-ASCII P3 data".into()))?;
        let mut values = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_ascii_whitespace)
            .map(|t| {
                t.parse::<u8>()
                    .map_err(|_| CliError::UnsupportedFormat(format!("sample `{t}` out of range")))
            });
        for _ in 0..n {
            let mut px = [0u8; 3];
            for c in &mut px {
                *c = values
                    .next()
                    .ok_or_else(|| CliError::UnsupportedFormat("truncated pixel data".into()))??;
            }
            pixels.push(px);
        }
    }
    RgbImage::new(width, height, pixels)
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    parse_ppm(&bytes)
}

/// Binary (P6) encoding.
pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.reserve(3 * img.pixels.len());
    for px in &img.pixels {
        out.extend_from_slice(px);
    }
    out
}

pub fn write_ppm(img: &RgbImage, path: &Path) -> Result<()> {
    fs::write(path, encode_ppm(img)).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn one_white_pixel() {
        let img = parse_ppm(b"P3\n# white\n1 1\n255\n255 255 255\n").unwrap();
        assert_eq!(img.pixels, vec![[255, 255, 255]]);
    }

    #[test]
    fn p6_round_trip_is_byte_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pixels = (0..256).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let img = RgbImage::new(16, 16, pixels).unwrap();
        let bytes = encode_ppm(&img);
        let back = parse_ppm(&bytes).unwrap();
        assert_eq!(back, img);
        assert_eq!(encode_ppm(&back), bytes);
    }

    #[test]
    fn rejects_other_pixmaps() {
        let err = parse_ppm(b"P5\n1 1\n255\n\x00").unwrap_err().to_string();
        assert!(err.contains("unsupported format"), "{err}");
        assert!(parse_ppm(b"P3\n1 1\n65535\n0 0 0\n").is_err());
        assert!(parse_ppm(b"P6\n2 2\n255\n\x00\x00").is_err());
        assert!(parse_ppm(b"P3\n1 1\n255\n0 300 0\n").is_err());
    }
}
