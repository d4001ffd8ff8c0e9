//! Image and mask value types in `H x W x C` layout with values in `[0, 1]`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const MIN_SIDE: usize = 8;

/// Quantize to the nearest multiple of 1/255 so 8-bit files round-trip exactly.
pub fn quantize(v: f32) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height < MIN_SIDE || width < MIN_SIDE {
        return Err(Error::InvalidInput(format!("image {height}x{width} is smaller than {MIN_SIDE}x{MIN_SIDE}")));
    }
    Ok(())
}

/// RGB image, row-major `H x W x 3`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width * 3 {
            return Err(Error::shape(format!("{height}x{width}x3 image needs {} values, got {}", height * width * 3, data.len())));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidInput(format!("image value {bad} outside [0, 1]")));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Result<Self> {
        check_dims(height, width)?;
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, r: usize, c: usize) -> [f32; 3] {
        let i = (r * self.width + c) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, r: usize, c: usize, rgb: [f32; 3]) {
        let i = (r * self.width + c) * 3;
        for (k, v) in rgb.into_iter().enumerate() {
            self.data[i + k] = v.clamp(0.0, 1.0);
        }
    }

    pub fn same_size<M: Sized2d>(&self, other: &M) -> bool {
        (self.height, self.width) == other.dims()
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Channel-planar `[3, H, W]` values.
    pub fn to_planar<T: Real>(&self) -> Vec<T> {
        let plane = self.height * self.width;
        let mut out = vec![T::zero(); 3 * plane];
        for p in 0..plane {
            for c in 0..3 {
                out[c * plane + p] = T::of(self.data[p * 3 + c] as f64);
            }
        }
        out
    }

    /// Build from `[3, H, W]` planar values, clamping into `[0, 1]`.
    pub fn from_planar<T: Real>(height: usize, width: usize, planar: &[T]) -> Result<Self> {
        let plane = height * width;
        if planar.len() != 3 * plane {
            return Err(Error::shape(format!("planar image needs {} values, got {}", 3 * plane, planar.len())));
        }
        let mut data = vec![0.0f32; 3 * plane];
        for p in 0..plane {
            for c in 0..3 {
                data[p * 3 + c] = (planar[c * plane + p].as_f64() as f32).clamp(0.0, 1.0);
            }
        }
        Self::new(height, width, data)
    }

    pub fn quantized(&self) -> Self {
        Self { height: self.height, width: self.width, data: self.data.iter().map(|&v| quantize(v)).collect() }
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| to_byte(v)).collect();
        write_png(path, self.width, self.height, png::ColorType::Rgb, &bytes)
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let raw = read_png(path)?;
        let data = match raw.channels {
            1 => raw.bytes.iter().flat_map(|&b| [b; 3]).map(|b| b as f32 / 255.0).collect(),
            3 => raw.bytes.iter().map(|&b| b as f32 / 255.0).collect(),
            4 => raw.bytes.chunks(4).flat_map(|px| [px[0], px[1], px[2]]).map(|b| b as f32 / 255.0).collect(),
            2 => raw.bytes.chunks(2).flat_map(|px| [px[0]; 3]).map(|b| b as f32 / 255.0).collect(),
            c => return Err(Error::Png { path: path.into(), reason: format!("unsupported channel count {c}") }),
        };
        Self::new(raw.height, raw.width, data)
    }
}

/// Single-channel mask, row-major `H x W`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskTensor {
    height: usize,
    width: usize,
    data: Vec<f32>,
    binary: bool,
}

pub trait Sized2d {
    fn dims(&self) -> (usize, usize);
}

impl Sized2d for ImageTensor {
    fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

impl Sized2d for MaskTensor {
    fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Inclusive pixel bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BBox {
    pub r0: usize,
    pub c0: usize,
    pub r1: usize,
    pub c1: usize,
}

impl BBox {
    pub fn height(&self) -> usize {
        self.r1 - self.r0 + 1
    }

    pub fn width(&self) -> usize {
        self.c1 - self.c0 + 1
    }

    pub fn area(&self) -> usize {
        self.height() * self.width()
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let r0 = self.r0.max(other.r0);
        let c0 = self.c0.max(other.c0);
        let r1 = self.r1.min(other.r1);
        let c1 = self.c1.min(other.c1);
        if r0 > r1 || c0 > c1 {
            return 0.0;
        }
        let inter = ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64;
        inter / ((self.area() + other.area()) as f64 - inter)
    }
}

impl MaskTensor {
    /// Mask with arbitrary values in `[0, 1]`; the binary flag is derived.
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!("mask {height}x{width} is empty")));
        }
        if data.len() != height * width {
            return Err(Error::shape(format!("{height}x{width} mask needs {} values, got {}", height * width, data.len())));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidInput(format!("mask value {bad} outside [0, 1]")));
        }
        let binary = data.iter().all(|&v| v == 0.0 || v == 1.0);
        Ok(Self { height, width, data, binary })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0.0; height * width], binary: true }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height * width).map(|i| if f(i / width, i % width) { 1.0 } else { 0.0 }).collect();
        Self { height, width, data, binary: true }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.width + c]
    }

    pub fn is_set(&self, r: usize, c: usize) -> bool {
        self.get(r, c) >= 0.5
    }

    pub fn set(&mut self, r: usize, c: usize, on: bool) {
        self.data[r * self.width + c] = if on { 1.0 } else { 0.0 };
        if !on && !self.binary {
            self.binary = self.data.iter().all(|&v| v == 0.0 || v == 1.0);
        }
    }

    /// Number of pixels at or above one half.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v >= 0.5).count()
    }

    pub fn require_binary(&self, what: &str) -> Result<()> {
        if !self.binary {
            return Err(Error::InvalidInput(format!("{what} must be binary")));
        }
        Ok(())
    }

    pub fn require_same(&self, other: &MaskTensor, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(format!("{what}: {}x{} vs {}x{}", self.height, self.width, other.height, other.width)));
        }
        Ok(())
    }

    /// `value >= threshold` per pixel.
    pub fn threshold(&self, threshold: f32) -> Self {
        let data = self.data.iter().map(|&v| if v >= threshold { 1.0 } else { 0.0 }).collect();
        Self { height: self.height, width: self.width, data, binary: true }
    }

    fn zip_binary(&self, other: &MaskTensor, f: impl Fn(bool, bool) -> bool) -> Result<Self> {
        self.require_same(other, "mask operands")?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| if f(a >= 0.5, b >= 0.5) { 1.0 } else { 0.0 }).collect();
        Ok(Self { height: self.height, width: self.width, data, binary: true })
    }

    pub fn union(&self, other: &MaskTensor) -> Result<Self> {
        self.zip_binary(other, |a, b| a || b)
    }

    pub fn intersect(&self, other: &MaskTensor) -> Result<Self> {
        self.zip_binary(other, |a, b| a && b)
    }

    /// `self AND NOT other`.
    pub fn minus(&self, other: &MaskTensor) -> Result<Self> {
        self.zip_binary(other, |a, b| a && !b)
    }

    /// Pixelwise `self <= other` for binary masks.
    pub fn is_subset_of(&self, other: &MaskTensor) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }

    pub fn bbox(&self) -> Option<BBox> {
        let mut bb: Option<BBox> = None;
        for r in 0..self.height {
            for c in 0..self.width {
                if self.is_set(r, c) {
                    bb = Some(match bb {
                        None => BBox { r0: r, c0: c, r1: r, c1: c },
                        Some(b) => BBox { r0: b.r0.min(r), c0: b.c0.min(c), r1: b.r1.max(r), c1: b.c1.max(c) },
                    });
                }
            }
        }
        bb
    }

    pub fn crop(&self, bb: BBox) -> Self {
        let data = (bb.r0..=bb.r1).flat_map(|r| (bb.c0..=bb.c1).map(move |c| (r, c))).map(|(r, c)| self.get(r, c)).collect();
        Self { height: bb.height(), width: bb.width(), data, binary: self.binary }
    }

    /// Crop to the bounding box of the set pixels; `None` when empty.
    pub fn tight_crop(&self) -> Option<Self> {
        self.bbox().map(|bb| self.crop(bb))
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn to_planar<T: Real>(&self) -> Vec<T> {
        self.data.iter().map(|&v| T::of(v as f64)).collect()
    }

    pub fn from_planar<T: Real>(height: usize, width: usize, planar: &[T]) -> Result<Self> {
        let data = planar.iter().map(|v| (v.as_f64() as f32).clamp(0.0, 1.0)).collect();
        Self::new(height, width, data)
    }

    /// Stored as 8-bit grayscale, `{0, 255}` for binary masks.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| to_byte(v)).collect();
        write_png(path, self.width, self.height, png::ColorType::Grayscale, &bytes)
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let raw = read_png(path)?;
        let gray: Vec<f32> = match raw.channels {
            1 => raw.bytes.iter().map(|&b| b as f32 / 255.0).collect(),
            2 => raw.bytes.chunks(2).map(|p| p[0] as f32 / 255.0).collect(),
            3 => raw.bytes.chunks(3).map(|p| luma(p) / 255.0).collect(),
            4 => raw.bytes.chunks(4).map(|p| luma(p) / 255.0).collect(),
            c => return Err(Error::Png { path: path.into(), reason: format!("unsupported channel count {c}") }),
        };
        Self::new(raw.height, raw.width, gray)
    }
}

fn luma(p: &[u8]) -> f32 {
    (0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32).round()
}

/// Stack images into a `[N, 3, H, W]` tensor.
pub fn images_to_tensor<T: Real>(images: &[&ImageTensor]) -> Result<Tensor<T>> {
    let first = images.first().ok_or(Error::EmptyDataset)?;
    let (h, w) = first.dims();
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for im in images {
        if im.dims() != (h, w) {
            return Err(Error::shape("batch images differ in size"));
        }
        data.extend(im.to_planar::<T>());
    }
    Tensor::from_vec(&[images.len(), 3, h, w], data)
}

/// Stack masks into a `[N, 1, H, W]` tensor.
pub fn masks_to_tensor<T: Real>(masks: &[&MaskTensor]) -> Result<Tensor<T>> {
    let first = masks.first().ok_or(Error::EmptyDataset)?;
    let (h, w) = first.dims();
    let mut data = Vec::with_capacity(masks.len() * h * w);
    for m in masks {
        if m.dims() != (h, w) {
            return Err(Error::shape("batch masks differ in size"));
        }
        data.extend(m.to_planar::<T>());
    }
    Tensor::from_vec(&[masks.len(), 1, h, w], data)
}

struct RawPng {
    width: usize,
    height: usize,
    channels: usize,
    bytes: Vec<u8>,
}

fn write_png(path: &Path, width: usize, height: usize, color: png::ColorType, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| Error::Png { path: path.into(), reason: e.to_string() };
    let mut writer = enc.write_header().map_err(png_err)?;
    writer.write_image_data(bytes).map_err(png_err)?;
    writer.finish().map_err(png_err)?;
    Ok(())
}

fn read_png(path: &Path) -> Result<RawPng> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(std::io::BufReader::new(file));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let png_err = |e: png::DecodingError| Error::Png { path: path.into(), reason: e.to_string() };
    let mut reader = dec.read_info().map_err(png_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::Png { path: path.into(), reason: "image too large".into() })?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    buf.truncate(info.buffer_size());
    let channels = info.color_type.samples();
    Ok(RawPng { width: info.width as usize, height: info.height as usize, channels, bytes: buf })
}
