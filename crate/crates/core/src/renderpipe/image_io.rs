//! PNG import/export for (H, W, 3) images valued in [0, 1].

use std::path::Path;

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::num::Real;

pub fn save_png<T: Real>(image: &Array3<T>, path: impl AsRef<Path>) -> Result<()> {
    let (h, w, c) = image.dim();
    if c != 3 {
        return Err(Error::config("image must have 3 channels"));
    }
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [
                to_u8(image[[y, x, 0]]),
                to_u8(image[[y, x, 1]]),
                to_u8(image[[y, x, 2]]),
            ];
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save(path.as_ref())
        .map_err(|e| Error::format(format!("png save: {e}")))
}

pub fn load_png<T: Real>(path: impl AsRef<Path>) -> Result<Array3<T>> {
    let img = image::open(path.as_ref())
        .map_err(|e| Error::format(format!("png load: {e}")))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Array3::<T>::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let px = img.get_pixel(x as u32, y as u32);
            for c in 0..3 {
                out[[y, x, c]] = T::of(px[c] as f64 / 255.0);
            }
        }
    }
    Ok(out)
}

fn to_u8<T: Real>(v: T) -> u8 {
    (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8
}
