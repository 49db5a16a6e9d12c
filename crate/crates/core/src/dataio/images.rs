//! Lossless image files and PNG previews.
//!
//! Raw layout: the 8 magic bytes `AVIMG001`, then width, height and channel
//! count as little-endian `u32`, then `width * height * channels` little-endian
//! `f32` values in row-major, channel-interleaved order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Image;

const MAGIC: &[u8; 8] = b"AVIMG001";

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let mut out = Vec::with_capacity(20 + img.data().len() * 4);
    out.extend_from_slice(MAGIC);
    for v in [img.width(), img.height(), img.channels()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_image(path: &Path) -> Result<Image> {
    let b = std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    if b.len() < 20 || &b[..8] != MAGIC {
        return Err(Error::Format(format!("{} is not a raw image file", path.display())));
    }
    let dim = |i: usize| u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]) as usize;
    let (w, h, c) = (dim(8), dim(12), dim(16));
    let n = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| Error::Format(format!("{}: image header overflows", path.display())))?;
    if b.len() != 20 + 4 * n {
        return Err(Error::Format(format!(
            "{}: expected {} data bytes for {w}x{h}x{c}, found {}",
            path.display(),
            4 * n,
            b.len() - 20
        )));
    }
    let data = b[20..]
        .chunks_exact(4)
        .map(|s| f32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .collect();
    Image::from_data(w, h, c, data)
}

/// 8-bit PNG preview. Values are divided by `scale`, clamped to `[0, 1]`.
/// One-channel images become grayscale, three-channel images RGB.
pub fn write_png(path: &Path, img: &Image, scale: f32) -> Result<()> {
    let to_u8 = |v: f32| ((v / scale).clamp(0.0, 1.0) * 255.0).round() as u8;
    let bytes: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
    let color = match img.channels() {
        1 => image::ExtendedColorType::L8,
        3 => image::ExtendedColorType::Rgb8,
        c => return Err(Error::Input(format!("cannot export {c}-channel image as PNG"))),
    };
    image::save_buffer_with_format(
        path,
        &bytes,
        img.width() as u32,
        img.height() as u32,
        color,
        image::ImageFormat::Png,
    )
    .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
