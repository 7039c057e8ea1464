//! Rendering pipeline: z-buffered rasterization with SH shading, detailed
//! albedo extraction from frames, keyframe background matching, background
//! interpolation, and compositing.

mod albedo;
mod background;
mod image_io;
mod raster;

pub use albedo::{extract_detailed_albedo, select_albedo_frame};
pub use background::{
    interpolate_backgrounds, match_background, pose_distance_sq, select_keyframes, BackgroundPlate,
};
pub use image_io::{load_png, save_png};
pub use raster::{rasterize, render_coefficients};

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::face3d::Pose;
use crate::num::Real;

/// A rasterized face frame: RGB image in [0,1], per-pixel face coverage
/// mask, plus per-pixel depth and the pose used.
#[derive(Clone, Debug)]
pub struct RenderedFrame<T> {
    /// (H, W, 3) in [0, 1].
    pub image: Array3<T>,
    /// True exactly where a face triangle covers the pixel center.
    pub mask: Array2<bool>,
    /// View-space depth where mask is set; +inf elsewhere.
    pub depth: Array2<T>,
    pub pose: Pose<T>,
}

impl<T: Real> RenderedFrame<T> {
    pub fn height(&self) -> usize {
        self.image.dim().0
    }

    pub fn width(&self) -> usize {
        self.image.dim().1
    }

    pub fn mask_is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }
}

/// Face pixels from the render where the mask is set, background elsewhere.
pub fn composite<T: Real>(rendered: &RenderedFrame<T>, background: &Array3<T>) -> Result<Array3<T>> {
    if rendered.image.dim() != background.dim() {
        return Err(Error::config(format!(
            "render {:?} and background {:?} dimensions differ",
            rendered.image.dim(),
            background.dim()
        )));
    }
    let (h, w, _) = background.dim();
    let mut out = background.clone();
    for y in 0..h {
        for x in 0..w {
            if rendered.mask[[y, x]] {
                for c in 0..3 {
                    out[[y, x, c]] = rendered.image[[y, x, c]];
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(h: usize, w: usize, value: f64) -> Array3<f64> {
        Array3::from_elem((h, w, 3), value)
    }

    fn frame_with_mask(mask: Array2<bool>, value: f64) -> RenderedFrame<f64> {
        let (h, w) = mask.dim();
        RenderedFrame {
            image: flat(h, w, value),
            depth: Array2::from_elem((h, w), f64::INFINITY),
            mask,
            pose: Pose::default(),
        }
    }

    #[test]
    fn empty_mask_passes_background_through() {
        let frame = frame_with_mask(Array2::from_elem((4, 4), false), 1.0);
        let bg = flat(4, 4, 0.25);
        let out = composite(&frame, &bg).unwrap();
        assert_eq!(out, bg);
    }

    #[test]
    fn full_mask_returns_the_render() {
        let frame = frame_with_mask(Array2::from_elem((4, 4), true), 0.75);
        let bg = flat(4, 4, 0.25);
        let out = composite(&frame, &bg).unwrap();
        assert_eq!(out, frame.image);
    }

    #[test]
    fn checkerboard_mask_matches_pixelwise_select_oracle() {
        let mask = Array2::from_shape_fn((6, 6), |(y, x)| (y + x) % 2 == 0);
        let frame = frame_with_mask(mask.clone(), 0.9);
        let bg = flat(6, 6, 0.1);
        let out = composite(&frame, &bg).unwrap();
        for y in 0..6 {
            for x in 0..6 {
                let expect = if mask[[y, x]] { 0.9 } else { 0.1 };
                for c in 0..3 {
                    assert_eq!(out[[y, x, c]], expect);
                }
            }
        }
    }

    #[test]
    fn compositing_is_idempotent() {
        let mask = Array2::from_shape_fn((5, 5), |(y, _)| y < 2);
        let frame = frame_with_mask(mask, 0.6);
        let bg = flat(5, 5, 0.3);
        let once = composite(&frame, &bg).unwrap();
        let twice = composite(&frame, &once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let frame = frame_with_mask(Array2::from_elem((4, 4), true), 0.5);
        let bg = flat(5, 5, 0.5);
        assert!(composite(&frame, &bg).is_err());
    }
}
