//! Binary PGM/PPM export of count and time images.
//!
//! Count images become 8-bit graymaps scaled by their maximum count. Time images become
//! pixmaps coloured from blue (oldest) to green (newest); empty bins stay black.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::projection::{EventCountImage, TimeImage};
use crate::scalar::Scalar;

pub type Rgb = [u8; 3];

pub const BOX_COLOR: Rgb = [255, 0, 0];

/// Colour of a bin with normalized mean timestamp `t`.
pub fn time_color<T: Scalar>(t: T) -> Rgb {
    let t = t.max(T::zero()).min(T::one());
    let g = (t * T::lit(255.0)).round().to_u8().unwrap_or(0);
    [0, g, 255 - g]
}

/// Grayscale levels of a count image: `round(255 c / max)`.
pub fn count_levels<T: Scalar>(image: &EventCountImage<T>) -> Vec<u8> {
    let max = image.max_count();
    if max == 0 {
        return vec![0; image.counts().len()];
    }
    image
        .counts()
        .iter()
        .map(|&c| ((c as u64 * 255 + max as u64 / 2) / max as u64) as u8)
        .collect()
}

/// RGB pixels of a time image, row-major.
pub fn time_pixels<T: Scalar>(image: &TimeImage<T>) -> Vec<Rgb> {
    (0..image.counts().len())
        .map(|k| {
            if image.is_occupied_index(k) {
                time_color(image.means()[k])
            } else {
                [0, 0, 0]
            }
        })
        .collect()
}

/// Draws rectangle outlines given in sensor pixels onto an image of `bin_size` bins.
pub fn draw_boxes<T: Scalar>(
    pixels: &mut [Rgb],
    width: usize,
    height: usize,
    bin_size: T,
    boxes: &[BoundingBox<T>],
    color: Rgb,
) {
    let to_bin = |v: T, max: usize| -> Option<usize> {
        let b = (v / bin_size).floor();
        if b < T::zero() {
            Some(0)
        } else {
            b.to_usize().map(|b| b.min(max - 1))
        }
    };
    if width == 0 || height == 0 {
        return;
    }
    for b in boxes {
        let (Some(i0), Some(j0), Some(i1), Some(j1)) = (
            to_bin(b.x, width),
            to_bin(b.y, height),
            to_bin(b.right(), width),
            to_bin(b.bottom(), height),
        ) else {
            continue;
        };
        for i in i0..=i1 {
            pixels[j0 * width + i] = color;
            pixels[j1 * width + i] = color;
        }
        for j in j0..=j1 {
            pixels[j * width + i0] = color;
            pixels[j * width + i1] = color;
        }
    }
}

pub fn write_pgm<W: Write>(mut w: W, width: usize, height: usize, levels: &[u8]) -> Result<()> {
    let io = |e| Error::io("<writer>", e);
    write!(w, "P5\n{width} {height}\n255\n").map_err(io)?;
    w.write_all(levels).map_err(io)?;
    w.flush().map_err(io)
}

pub fn write_ppm<W: Write>(mut w: W, width: usize, height: usize, pixels: &[Rgb]) -> Result<()> {
    let io = |e| Error::io("<writer>", e);
    write!(w, "P6\n{width} {height}\n255\n").map_err(io)?;
    let bytes: Vec<u8> = pixels.iter().flatten().copied().collect();
    w.write_all(&bytes).map_err(io)?;
    w.flush().map_err(io)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn on_path(r: Result<()>, path: &Path) -> Result<()> {
    r.map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn save_count_image<T: Scalar>(path: &Path, image: &EventCountImage<T>) -> Result<()> {
    let w = create(path)?;
    on_path(write_pgm(w, image.width(), image.height(), &count_levels(image)), path)
}

/// Saves a time image with optional box overlays (sensor pixels).
pub fn save_time_image<T: Scalar>(path: &Path, image: &TimeImage<T>, boxes: &[BoundingBox<T>]) -> Result<()> {
    let mut px = time_pixels(image);
    draw_boxes(
        &mut px,
        image.width(),
        image.height(),
        image.grid().bin_size(),
        boxes,
        BOX_COLOR,
    );
    let w = create(path)?;
    on_path(write_ppm(w, image.width(), image.height(), &px), path)
}
