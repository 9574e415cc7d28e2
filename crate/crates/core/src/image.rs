//! Image data model, PPM codec, grayscale conversion, and gray-level
//! quantization.
//!
//! Images are plain immutable rasters. The codec handles the netpbm PPM
//! formats P3 (ASCII) and P6 (binary) with a fixed maxval of 255; header
//! comments (`#` to end of line) are accepted, and a P6 raster starts
//! after exactly one whitespace byte following the maxval.

use thiserror::Error;

/// Errors from image construction and gray-level operations.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("image dimensions must be at least 1x1 (got {width}x{height})")]
    EmptyDimensions { width: usize, height: usize },
    #[error("pixel buffer holds {got} pixels, {width}x{height} needs {need}")]
    PixelCountMismatch {
        width: usize,
        height: usize,
        got: usize,
        need: usize,
    },
    #[error("gray level count must lie in 2..=256 (got {levels})")]
    UnsupportedLevels { levels: usize },
    #[error("gray value {value} outside the {levels}-level alphabet")]
    GrayOutOfRange { value: u8, levels: usize },
    #[error("quantization target {target} outside 2..={max}")]
    QuantizeRange { target: usize, max: usize },
}

/// Errors from the PPM decoder; every variant names the byte offset at
/// which decoding failed.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PpmError {
    #[error("byte {offset}: unsupported magic {found:?} (want \"P3\" or \"P6\")")]
    UnsupportedMagic { offset: usize, found: String },
    #[error("byte {offset}: malformed header: {reason}")]
    MalformedHeader { offset: usize, reason: String },
    #[error("byte {offset}: dimensions {width}x{height} must be at least 1x1")]
    InvalidDimensions {
        offset: usize,
        width: usize,
        height: usize,
    },
    #[error("byte {offset}: maxval {maxval} unsupported (must be 255)")]
    UnsupportedMaxval { offset: usize, maxval: u64 },
    #[error("byte {offset}: truncated pixel data: {detail}")]
    Truncated { offset: usize, detail: String },
    #[error("byte {offset}: sample value {value} exceeds maxval 255")]
    SampleOutOfRange { offset: usize, value: u64 },
}

/// One of the three color planes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::R, Channel::G, Channel::B];

    fn index(self) -> usize {
        match self {
            Channel::R => 0,
            Channel::G => 1,
            Channel::B => 2,
        }
    }
}

/// RGB raster, 8 bits per channel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        let need = width * height;
        if pixels.len() != need {
            return Err(ImageError::PixelCountMismatch {
                width,
                height,
                got: pixels.len(),
                need,
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Uniform fill, handy for tests and synthetic data.
    pub fn filled(width: usize, height: usize, pixel: [u8; 3]) -> Result<Self, ImageError> {
        Self::new(width, height, vec![pixel; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        self.pixels[row * self.width + col]
    }

    pub fn channel_values(&self, channel: Channel) -> impl Iterator<Item = u8> + '_ {
        let idx = channel.index();
        self.pixels.iter().map(move |p| p[idx])
    }

    /// BT.601 luma: `round(0.299 r + 0.587 g + 0.114 b)`, round half up.
    /// The result always has the full 256-level alphabet.
    pub fn to_gray(&self) -> GrayImage {
        let pixels = self
            .pixels
            .iter()
            .map(|&[r, g, b]| {
                let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
                // `round` is half-away-from-zero, which equals half-up for y >= 0.
                y.round().min(255.0) as u8
            })
            .collect();
        GrayImage {
            width: self.width,
            height: self.height,
            levels: 256,
            pixels,
        }
    }
}

/// Gray raster over an `levels`-symbol alphabet (2..=256), row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    levels: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(
        width: usize,
        height: usize,
        levels: usize,
        pixels: Vec<u8>,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        if !(2..=256).contains(&levels) {
            return Err(ImageError::UnsupportedLevels { levels });
        }
        let need = width * height;
        if pixels.len() != need {
            return Err(ImageError::PixelCountMismatch {
                width,
                height,
                got: pixels.len(),
                need,
            });
        }
        if let Some(&value) = pixels.iter().find(|&&p| p as usize >= levels) {
            return Err(ImageError::GrayOutOfRange { value, levels });
        }
        Ok(Self {
            width,
            height,
            levels,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Reduce the gray alphabet: `p -> floor(p * target_levels / levels)`.
    pub fn quantize(&self, target_levels: usize) -> Result<GrayImage, ImageError> {
        if !(2..=self.levels).contains(&target_levels) {
            return Err(ImageError::QuantizeRange {
                target: target_levels,
                max: self.levels,
            });
        }
        let pixels = self
            .pixels
            .iter()
            .map(|&p| ((p as usize * target_levels) / self.levels) as u8)
            .collect();
        Ok(GrayImage {
            width: self.width,
            height: self.height,
            levels: target_levels,
            pixels,
        })
    }
}

/// Serialize as binary PPM (P6, maxval 255).
pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.reserve(img.pixels.len() * 3);
    for p in &img.pixels {
        out.extend_from_slice(p);
    }
    out
}

/// Parse a P3 or P6 PPM file with maxval 255.
pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage, PpmError> {
    let mut scanner = Scanner { bytes, pos: 0 };
    let binary = scanner.magic()?;
    let (dim_offset, width) = scanner.header_number("width")?;
    let (_, height) = scanner.header_number("height")?;
    if width == 0 || height == 0 {
        return Err(PpmError::InvalidDimensions {
            offset: dim_offset,
            width: width as usize,
            height: height as usize,
        });
    }
    let (maxval_offset, maxval) = scanner.header_number("maxval")?;
    if maxval != 255 {
        return Err(PpmError::UnsupportedMaxval {
            offset: maxval_offset,
            maxval,
        });
    }
    let need = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| PpmError::MalformedHeader {
            offset: dim_offset,
            reason: "raster size overflows".into(),
        })?;
    let samples = if binary {
        scanner.binary_raster(need)?.to_vec()
    } else {
        scanner.ascii_raster(need)?
    };
    let pixels = samples
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    Ok(RgbImage::new(width as usize, height as usize, pixels).expect("header already validated"))
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn is_ppm_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c)
}

impl<'a> Scanner<'a> {
    /// Returns true for binary (P6), false for ASCII (P3).
    fn magic(&mut self) -> Result<bool, PpmError> {
        match self.bytes.get(..2) {
            Some(b"P6") => {
                self.pos = 2;
                Ok(true)
            }
            Some(b"P3") => {
                self.pos = 2;
                Ok(false)
            }
            Some(other) => Err(PpmError::UnsupportedMagic {
                offset: 0,
                found: String::from_utf8_lossy(other).into_owned(),
            }),
            None => Err(PpmError::MalformedHeader {
                offset: 0,
                reason: "file shorter than the two magic bytes".into(),
            }),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if is_ppm_space(b) {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    /// Next unsigned decimal token, with the offset it started at.
    fn number(&mut self) -> Result<Option<(usize, u64)>, PpmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        let Some(&first) = self.bytes.get(self.pos) else {
            return Ok(None);
        };
        if !first.is_ascii_digit() {
            return Err(PpmError::MalformedHeader {
                offset: start,
                reason: format!("expected digit, found byte 0x{first:02x}"),
            });
        }
        let mut value: u64 = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add(u64::from(b - b'0')))
                .ok_or(PpmError::MalformedHeader {
                    offset: start,
                    reason: "integer overflow".into(),
                })?;
            self.pos += 1;
        }
        Ok(Some((start, value)))
    }

    fn header_number(&mut self, what: &str) -> Result<(usize, u64), PpmError> {
        self.number()?.ok_or_else(|| PpmError::MalformedHeader {
            offset: self.pos,
            reason: format!("unexpected end of file reading {what}"),
        })
    }

    fn binary_raster(&mut self, need: usize) -> Result<&'a [u8], PpmError> {
        // Exactly one whitespace byte separates the maxval from the raster.
        match self.bytes.get(self.pos) {
            Some(&b) if is_ppm_space(b) => self.pos += 1,
            _ => {
                return Err(PpmError::MalformedHeader {
                    offset: self.pos,
                    reason: "expected one whitespace byte after maxval".into(),
                })
            }
        }
        let found = self.bytes.len() - self.pos;
        if found < need {
            return Err(PpmError::Truncated {
                offset: self.bytes.len(),
                detail: format!("raster needs {need} bytes, found {found}"),
            });
        }
        Ok(&self.bytes[self.pos..self.pos + need])
    }

    fn ascii_raster(&mut self, need: usize) -> Result<Vec<u8>, PpmError> {
        let mut samples = Vec::with_capacity(need);
        for _ in 0..need {
            match self.number()? {
                Some((offset, value)) => {
                    if value > 255 {
                        return Err(PpmError::SampleOutOfRange { offset, value });
                    }
                    samples.push(value as u8);
                }
                None => {
                    return Err(PpmError::Truncated {
                        offset: self.pos,
                        detail: format!("raster needs {need} samples, found {}", samples.len()),
                    })
                }
            }
        }
        Ok(samples)
    }
}
