use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{ensure, Error, Result};

/// Interleaved 8-bit image with one (gray) or three (RGB) channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageU8 {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageU8 {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        ensure!(width > 0 && height > 0, "image must be non-empty, got {width}x{height}");
        ensure!(
            channels == 1 || channels == 3,
            "images have 1 or 3 channels, got {channels}"
        );
        ensure!(
            data.len() == width * height * channels,
            "image {width}x{height}x{channels} needs {} bytes, got {}",
            width * height * channels,
            data.len()
        );
        Ok(ImageU8 {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, pixel: &[u8]) -> Result<Self> {
        let data = pixel
            .iter()
            .copied()
            .cycle()
            .take(width * height * pixel.len())
            .collect();
        Self::new(width, height, pixel.len(), data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [u8] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, u8> {
        self.data.chunks_exact(self.channels)
    }

    /// Luma (BT.601 weights, rounded half-up) as a one-channel image.
    pub fn to_gray(&self) -> ImageU8 {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .pixels()
            .map(|p| {
                let y = 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64;
                (y + 0.5).floor().clamp(0.0, 255.0) as u8
            })
            .collect();
        ImageU8 {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn crop(&self, region: PixelBox) -> Result<ImageU8> {
        ensure!(
            region.x_max < self.width && region.y_max < self.height,
            "crop {region:?} outside {}x{} image",
            self.width,
            self.height
        );
        let mut data = Vec::with_capacity(region.width() * region.height() * self.channels);
        for y in region.y_min..=region.y_max {
            let start = (y * self.width + region.x_min) * self.channels;
            data.extend_from_slice(&self.data[start..start + region.width() * self.channels]);
        }
        Self::new(region.width(), region.height(), self.channels, data)
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<ImageU8> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let bad = |message: String| Error::Image {
            path: path.to_path_buf(),
            message,
        };
        let mut decoder = png::Decoder::new(BufReader::new(file));
        decoder.set_transformations(png::Transformations::normalize_to_color8());
        let mut reader = decoder.read_info().map_err(|e| bad(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| bad("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| bad(e.to_string()))?;
        buf.truncate(info.buffer_size());
        let (w, h) = (info.width as usize, info.height as usize);
        let data = match info.color_type {
            png::ColorType::Grayscale => return Self::new(w, h, 1, buf),
            png::ColorType::Rgb => return Self::new(w, h, 3, buf),
            png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).map(|p| p[0]).collect(),
            png::ColorType::Rgba => buf
                .chunks_exact(4)
                .flat_map(|p| [p[0], p[1], p[2]])
                .collect(),
            other => return Err(bad(format!("unsupported colour type {other:?}"))),
        };
        let channels = if info.color_type == png::ColorType::GrayscaleAlpha { 1 } else { 3 };
        Self::new(w, h, channels, data)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let color = if self.channels == 1 {
            png::ColorType::Grayscale
        } else {
            png::ColorType::Rgb
        };
        write_png(path.as_ref(), self.width, self.height, color, &self.data)
    }
}

fn write_png(path: &Path, width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| match e {
        png::EncodingError::IoError(e) => Error::io(path, e),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    };
    let mut writer = encoder.write_header().map_err(to_io)?;
    writer.write_image_data(data).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

/// One boolean per pixel, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BitMask {
    pub fn new(width: usize, height: usize) -> Self {
        BitMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        ensure!(
            bits.len() == width * height,
            "mask {width}x{height} needs {} bits, got {}",
            width * height,
            bits.len()
        );
        Ok(BitMask { width, height, bits })
    }

    /// Builds a mask from rows of `'#'` (set) and anything else (unset).
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let bits = rows
            .iter()
            .flat_map(|r| r.bytes().map(|b| b == b'#'))
            .collect();
        BitMask { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Coordinates `(x, y)` of every set pixel in row-major order.
    pub fn set_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    pub fn is_subset_of(&self, other: &BitMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Written as an 8-bit gray PNG with 0 for unset and 255 for set.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let data: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        write_png(path.as_ref(), self.width, self.height, png::ColorType::Grayscale, &data)
    }

    /// Any nonzero gray level reads back as set.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = ImageU8::load_png(path)?.to_gray();
        let bits = img.data().iter().map(|&v| v != 0).collect();
        Self::from_bits(img.width(), img.height(), bits)
    }
}

/// Inclusive pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct PixelBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl PixelBox {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Result<Self> {
        ensure!(
            x_min <= x_max && y_min <= y_max,
            "box ({x_min},{y_min},{x_max},{y_max}) has inverted corners"
        );
        Ok(PixelBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    /// Pixel-count IoU of two inclusive boxes.
    pub fn iou(&self, other: &PixelBox) -> f64 {
        let ix0 = self.x_min.max(other.x_min);
        let iy0 = self.y_min.max(other.y_min);
        let ix1 = self.x_max.min(other.x_max);
        let iy1 = self.y_max.min(other.y_max);
        if ix0 > ix1 || iy0 > iy1 {
            return 0.0;
        }
        let inter = ((ix1 - ix0 + 1) * (iy1 - iy0 + 1)) as f64;
        inter / (self.area() as f64 + other.area() as f64 - inter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_rgb_gray_and_mask() {
        let dir = tempfile::tempdir().unwrap();
        let rgb = ImageU8::new(3, 2, 3, (0..18).map(|v| v * 13).collect()).unwrap();
        rgb.save_png(dir.path().join("rgb.png")).unwrap();
        assert_eq!(ImageU8::load_png(dir.path().join("rgb.png")).unwrap(), rgb);

        let gray = rgb.to_gray();
        gray.save_png(dir.path().join("g.png")).unwrap();
        assert_eq!(ImageU8::load_png(dir.path().join("g.png")).unwrap(), gray);

        let mask = BitMask::from_ascii(&["#..", ".##"]);
        mask.save_png(dir.path().join("m.png")).unwrap();
        assert_eq!(BitMask::load_png(dir.path().join("m.png")).unwrap(), mask);
    }

    #[test]
    fn load_reports_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        std::fs::write(&p, b"not a png").unwrap();
        assert!(matches!(ImageU8::load_png(&p), Err(Error::Image { .. })));
        assert!(matches!(ImageU8::load_png(dir.path().join("missing.png")), Err(Error::Io { .. })));
    }

    #[test]
    fn crop_and_box_helpers() {
        let img = ImageU8::new(4, 3, 1, (0..12).collect()).unwrap();
        let c = img.crop(PixelBox::new(1, 1, 2, 2).unwrap()).unwrap();
        assert_eq!(c.data(), &[5, 6, 9, 10]);
        assert!(img.crop(PixelBox::new(0, 0, 4, 0).unwrap()).is_err());
        assert!(PixelBox::new(2, 0, 1, 0).is_err());
        let a = PixelBox::new(0, 0, 1, 1).unwrap();
        let b = PixelBox::new(1, 0, 2, 1).unwrap();
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
    }
}
