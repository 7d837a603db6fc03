//! Pixel containers and the preprocessing steps shared by the detector and
//! the embedder: data-URI decoding, bilinear resizing, zero-padded cropping
//! and per-image standardisation.

use std::io::Cursor;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use image::{DynamicImage, ImageFormat, RgbImage};
use thiserror::Error;

use crate::geometry::BoundingBox;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImagingError {
    #[error("malformed data URI: {0}")]
    MalformedUri(String),
    #[error("unsupported image format `{0}` (expected png or jpeg)")]
    UnsupportedFormat(String),
    #[error("corrupt image payload: {0}")]
    CorruptPayload(String),
    #[error("crop box has no area after rounding")]
    EmptyBox,
    #[error("invalid image dimensions {width}x{height} for {len} bytes")]
    InvalidDimensions { width: u32, height: u32, len: usize },
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),
    #[error("image encoding failed: {0}")]
    Encode(String),
}

/// 8-bit RGB image stored row-major, three bytes per pixel.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Image")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Image {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || pixels.len() != width as usize * height as usize * 3 {
            return Err(ImagingError::InvalidDimensions {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Image where every pixel has the colour `rgb`.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut img = Self::filled(width, height, [0, 0, 0]);
        for y in 0..height {
            for x in 0..width {
                img.put(x, y, f(x, y));
            }
        }
        img
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn from_rgb_image(img: RgbImage) -> Result<Self, ImagingError> {
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw())
    }

    pub fn to_rgb_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("pixel buffer length is an Image invariant")
    }

    /// Decodes PNG/JPEG bytes (any other format the codec recognises is
    /// rejected). Alpha is composited onto black.
    pub fn decode(bytes: &[u8]) -> Result<Self, ImagingError> {
        let format = image::guess_format(bytes)
            .map_err(|e| ImagingError::CorruptPayload(e.to_string()))?;
        if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
            return Err(ImagingError::UnsupportedFormat(format!("{format:?}")));
        }
        decode_with_format(bytes, format)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImagingError> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb_image()
            .write_to(&mut out, ImageFormat::Png)
            .map_err(|e| ImagingError::Encode(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn encode_jpeg(&self, quality: u8) -> Result<Vec<u8>, ImagingError> {
        let mut out = Vec::new();
        let encoder = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, quality);
        self.to_rgb_image()
            .write_with_encoder(encoder)
            .map_err(|e| ImagingError::Encode(e.to_string()))?;
        Ok(out)
    }
}

/// Real-valued array with an explicit shape, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f32>) -> Result<Self, ImagingError> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(ImagingError::InvalidTensor(format!(
                "shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ImagingError::InvalidTensor(format!(
                "non-finite value at index {i}"
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![0.0; n],
        }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Row-major flat index of a multi-dimensional position.
    pub fn index_of(&self, pos: &[usize]) -> usize {
        debug_assert_eq!(pos.len(), self.shape.len());
        pos.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&p, &dim)| acc * dim + p)
    }

    #[inline]
    pub fn at(&self, pos: &[usize]) -> f32 {
        self.values[self.index_of(pos)]
    }
}

const DATA_PREFIX: &str = "data:";

/// Decodes a browser canvas export such as `data:image/png;base64,iVBOR…`.
pub fn parse_data_uri(uri: &str) -> Result<Image, ImagingError> {
    let rest = uri
        .strip_prefix(DATA_PREFIX)
        .ok_or_else(|| ImagingError::MalformedUri("missing `data:` scheme".into()))?;
    let (header, payload) = rest
        .split_once(',')
        .ok_or_else(|| ImagingError::MalformedUri("missing `,` separator".into()))?;
    let media = header
        .strip_suffix(";base64")
        .ok_or_else(|| ImagingError::MalformedUri("payload is not base64-encoded".into()))?;
    let subtype = media
        .strip_prefix("image/")
        .ok_or_else(|| ImagingError::MalformedUri(format!("media type `{media}` is not an image")))?;
    let format = match subtype.to_ascii_lowercase().as_str() {
        "png" => ImageFormat::Png,
        "jpeg" | "jpg" => ImageFormat::Jpeg,
        other => return Err(ImagingError::UnsupportedFormat(other.to_string())),
    };
    let bytes = BASE64
        .decode(payload.trim())
        .map_err(|e| ImagingError::CorruptPayload(format!("base64: {e}")))?;
    decode_with_format(&bytes, format)
}

pub fn encode_png_data_uri(img: &Image) -> Result<String, ImagingError> {
    Ok(format!(
        "data:image/png;base64,{}",
        BASE64.encode(img.encode_png()?)
    ))
}

pub fn encode_jpeg_data_uri(img: &Image, quality: u8) -> Result<String, ImagingError> {
    Ok(format!(
        "data:image/jpeg;base64,{}",
        BASE64.encode(img.encode_jpeg(quality)?)
    ))
}

fn decode_with_format(bytes: &[u8], format: ImageFormat) -> Result<Image, ImagingError> {
    let decoded = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| ImagingError::CorruptPayload(e.to_string()))?;
    Image::from_rgb_image(flatten_on_black(decoded))
}

fn flatten_on_black(img: DynamicImage) -> RgbImage {
    if !img.color().has_alpha() {
        return img.to_rgb8();
    }
    let rgba = img.to_rgba8();
    let (w, h) = rgba.dimensions();
    RgbImage::from_fn(w, h, |x, y| {
        let [r, g, b, a] = rgba.get_pixel(x, y).0;
        let blend = |c: u8| ((c as u32 * a as u32 + 127) / 255) as u8;
        image::Rgb([blend(r), blend(g), blend(b)])
    })
}

/// Bilinear resize with pixel-centre alignment; samples outside the source
/// clamp to the nearest edge.
///
/// Panics if `width` or `height` is zero.
pub fn resize(img: &Image, width: u32, height: u32) -> Image {
    assert!(width > 0 && height > 0, "resize target must be non-empty");
    if width == img.width && height == img.height {
        return img.clone();
    }
    let xs = interpolation_taps(img.width, width);
    let ys = interpolation_taps(img.height, height);
    let mut out = Vec::with_capacity(width as usize * height as usize * 3);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let p00 = img.get(x0, y0);
            let p01 = img.get(x1, y0);
            let p10 = img.get(x0, y1);
            let p11 = img.get(x1, y1);
            for c in 0..3 {
                let top = p00[c] as f64 * (1.0 - fx) + p01[c] as f64 * fx;
                let bottom = p10[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image {
        width,
        height,
        pixels: out,
    }
}

/// For every destination coordinate: the two source neighbours and the
/// weight of the second one.
fn interpolation_taps(src: u32, dst: u32) -> Vec<(u32, u32, f64)> {
    let ratio = src as f64 / dst as f64;
    let last = (src - 1) as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * ratio - 0.5).clamp(0.0, last);
            let lo = s.floor();
            let hi = (lo + 1.0).min(last);
            (lo as u32, hi as u32, s - lo)
        })
        .collect()
}

/// Cuts `bbox` out of `img`. The output origin is `bbox`'s top-left corner
/// rounded to the nearest pixel and its size is the box extent rounded;
/// parts of the box outside the image are filled with zeros.
pub fn crop(img: &Image, bbox: &BoundingBox) -> Result<Image, ImagingError> {
    let w = bbox.width().round();
    let h = bbox.height().round();
    if !(w >= 1.0 && h >= 1.0) || !bbox.x1.is_finite() || !bbox.y1.is_finite() {
        return Err(ImagingError::EmptyBox);
    }
    let (w, h) = (w as u32, h as u32);
    let ox = bbox.x1.round() as i64;
    let oy = bbox.y1.round() as i64;
    let mut out = Image::filled(w, h, [0, 0, 0]);

    let x_lo = ox.max(0);
    let x_hi = (ox + w as i64).min(img.width as i64);
    let y_lo = oy.max(0);
    let y_hi = (oy + h as i64).min(img.height as i64);
    if x_lo >= x_hi || y_lo >= y_hi {
        return Ok(out);
    }
    let span = (x_hi - x_lo) as usize * 3;
    for sy in y_lo..y_hi {
        let src = img.offset(x_lo as u32, sy as u32);
        let dst = out.offset((x_lo - ox) as u32, (sy - oy) as u32);
        out.pixels[dst..dst + span].copy_from_slice(&img.pixels[src..src + span]);
    }
    Ok(out)
}

/// Standardises all pixel values of the image jointly:
/// `(x - mean) / max(std, 1/sqrt(N))`. Output shape is `[h, w, 3]`.
pub fn prewhiten(img: &Image) -> Tensor {
    let n = img.pixels.len() as f64;
    let mean = img.pixels.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = img
        .pixels
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let scale = var.sqrt().max(1.0 / n.sqrt());
    let values = img
        .pixels
        .iter()
        .map(|&v| ((v as f64 - mean) / scale) as f32)
        .collect();
    Tensor {
        shape: vec![img.height as usize, img.width as usize, 3],
        values,
    }
}
