//! 8-bit grayscale (PGM/PNG) and RGB (PNG) image I/O. Pixel values map
//! linearly between `0..=255` and `[0, 1]`.

use std::path::Path;

use image::{GrayImage, ImageFormat, ImageReader, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::{Mask, SoftMap, Tensor3};

/// Extensions recognised as images when scanning directories.
pub const IMAGE_EXTENSIONS: [&str; 3] = ["png", "pgm", "pnm"];

fn open(path: &Path) -> Result<image::DynamicImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads any supported image as luminance in `[0, 1]`.
pub fn load_gray(path: impl AsRef<Path>) -> Result<SoftMap> {
    let path = path.as_ref();
    let img = open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect();
    SoftMap::from_vec(h as usize, w as usize, data)
}

/// Loads a ground-truth mask; pixels at or above mid-grey are foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    Ok(load_gray(path)?.binarize(0.5))
}

/// Loads an image as a 3-channel tensor; grayscale inputs are replicated.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<Tensor3> {
    let path = path.as_ref();
    let img = open(path)?.into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Tensor3::from_fn(3, h, w, |c, y, x| {
        f64::from(img.get_pixel(x as u32, y as u32).0[c]) / 255.0
    }))
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => Ok(ImageFormat::Png),
        Some("pgm") | Some("pnm") | Some("ppm") => Ok(ImageFormat::Pnm),
        other => Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!("unsupported image extension {other:?}"),
        }),
    }
}

/// Writes a map clamped to `[0, 1]` as 8-bit grayscale; the format follows
/// the file extension.
pub fn save_gray(path: impl AsRef<Path>, map: &SoftMap) -> Result<()> {
    let path = path.as_ref();
    let fmt = format_for(path)?;
    let img = GrayImage::from_fn(map.width() as u32, map.height() as u32, |x, y| {
        Luma([to_byte(map.get(y as usize, x as usize))])
    });
    img.save_with_format(path, fmt)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn save_mask(path: impl AsRef<Path>, mask: &Mask) -> Result<()> {
    save_gray(path, &mask.to_soft())
}

/// Writes the first three channels of `t` as an RGB image.
pub fn save_rgb(path: impl AsRef<Path>, t: &Tensor3) -> Result<()> {
    let path = path.as_ref();
    if t.channels() != 3 {
        return Err(Error::Dimension(format!(
            "RGB output needs 3 channels, found {}",
            t.channels()
        )));
    }
    let fmt = format_for(path)?;
    let img = RgbImage::from_fn(t.width() as u32, t.height() as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        Rgb([
            to_byte(t.get(0, y, x)),
            to_byte(t.get(1, y, x)),
            to_byte(t.get(2, y, x)),
        ])
    });
    img.save_with_format(path, fmt)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}
