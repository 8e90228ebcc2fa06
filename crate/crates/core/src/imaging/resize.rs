use super::ImageU8;
use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResizeMode {
    /// Source index `floor(dst · src_len / dst_len)`.
    Nearest,
    /// Pixel-centre aligned bilinear sampling, edges clamped.
    Bilinear,
}

pub fn resize(img: &ImageU8, new_w: usize, new_h: usize, mode: ResizeMode) -> Result<ImageU8> {
    ensure!(new_w >= 1 && new_h >= 1, "resize target must be at least 1x1");
    let (w, h, c) = (img.width(), img.height(), img.channels());
    if (w, h) == (new_w, new_h) {
        return Ok(img.clone());
    }
    let mut out = Vec::with_capacity(new_w * new_h * c);
    match mode {
        ResizeMode::Nearest => {
            for y in 0..new_h {
                let sy = y * h / new_h;
                for x in 0..new_w {
                    let sx = x * w / new_w;
                    out.extend_from_slice(img.pixel(sx, sy));
                }
            }
        }
        ResizeMode::Bilinear => {
            let axis = |dst: usize, src_len: usize, dst_len: usize| {
                let s = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5)
                    .clamp(0.0, (src_len - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(src_len - 1);
                (i0, i1, s - i0 as f64)
            };
            for y in 0..new_h {
                let (y0, y1, fy) = axis(y, h, new_h);
                for x in 0..new_w {
                    let (x0, x1, fx) = axis(x, w, new_w);
                    for ch in 0..c {
                        let p = |xx: usize, yy: usize| img.pixel(xx, yy)[ch] as f64;
                        let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                        let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                        let v = top * (1.0 - fy) + bottom * fy;
                        out.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
                    }
                }
            }
        }
    }
    ImageU8::new(new_w, new_h, c, out)
}
