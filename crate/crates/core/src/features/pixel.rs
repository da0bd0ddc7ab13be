use image::imageops::FilterType;
use image::RgbImage;

use crate::stats;

/// Longer side of the working raster for pixel features.
pub const WORKING_SIDE: u32 = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(width * height, data.len(), "gray raster size mismatch");
        Self { width, height, data }
    }

    fn at(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }
}

/// Shrink so the longer side is at most [`WORKING_SIDE`]; smaller rasters pass through.
pub fn downscale(image: &RgbImage) -> RgbImage {
    let (w, h) = image.dimensions();
    let long = w.max(h);
    if long <= WORKING_SIDE {
        return image.clone();
    }
    let scale = WORKING_SIDE as f64 / long as f64;
    let nw = ((w as f64 * scale).round() as u32).max(1);
    let nh = ((h as f64 * scale).round() as u32).max(1);
    image::imageops::resize(image, nw, nh, FilterType::Triangle)
}

/// Luma 0.299 R + 0.587 G + 0.114 B, unrounded.
pub fn to_gray(image: &RgbImage) -> GrayFrame {
    let data = image
        .pixels()
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect();
    GrayFrame::new(image.width() as usize, image.height() as usize, data)
}

/// 4-neighbour Laplacian with replicated borders.
pub fn laplacian(gray: &GrayFrame) -> Vec<f64> {
    let mut out = Vec::with_capacity(gray.data.len());
    for y in 0..gray.height as isize {
        for x in 0..gray.width as isize {
            let c = gray.at(x, y);
            out.push(
                gray.at(x - 1, y) + gray.at(x + 1, y) + gray.at(x, y - 1) + gray.at(x, y + 1)
                    - 4.0 * c,
            );
        }
    }
    out
}

/// Variance of the Laplacian response.
pub fn sharpness(gray: &GrayFrame) -> f64 {
    stats::variance(&laplacian(gray))
}

/// Median absolute gray-level difference, scaled to [0, 1].
pub fn motion(prev: &GrayFrame, curr: &GrayFrame) -> f64 {
    assert!(
        prev.width == curr.width && prev.height == curr.height,
        "motion needs equal rasters: {}x{} vs {}x{}",
        prev.width,
        prev.height,
        curr.width,
        curr.height
    );
    let diffs: Vec<f64> = prev
        .data
        .iter()
        .zip(&curr.data)
        .map(|(a, b)| (b - a).abs())
        .collect();
    stats::median(&diffs) / 255.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use proptest::prelude::*;

    fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> GrayFrame {
        let data = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        GrayFrame::new(w, h, data)
    }

    #[test]
    fn constant_image_has_zero_sharpness() {
        assert_eq!(sharpness(&gray(9, 7, |_, _| 77.0)), 0.0);
    }

    #[test]
    fn impulse_sharpness_closed_form() {
        // Responses: -4a at the centre, +a at four neighbours, zero elsewhere.
        // Mean is 0, so variance = (16a² + 4a²) / (w h).
        let (w, h, a) = (11usize, 9usize, 50.0);
        let img = gray(w, h, |x, y| if (x, y) == (5, 4) { a } else { 0.0 });
        let expected = 20.0 * a * a / (w * h) as f64;
        assert!((sharpness(&img) - expected).abs() < 1e-9);
    }

    #[test]
    fn checkerboard_sharper_than_blurred() {
        let rgb = RgbImage::from_fn(32, 32, |x, y| {
            if (x + y) % 2 == 0 { Rgb([255, 255, 255]) } else { Rgb([0, 0, 0]) }
        });
        let blurred = image::imageops::blur(&rgb, 1.5);
        assert!(sharpness(&to_gray(&rgb)) > sharpness(&to_gray(&blurred)));
    }

    #[test]
    fn luma_weights() {
        let g = to_gray(&RgbImage::from_pixel(1, 1, Rgb([100, 50, 200])));
        assert!((g.data[0] - (29.9 + 29.35 + 22.8)).abs() < 1e-9);
    }

    #[test]
    fn motion_of_constant_offset() {
        let base = RgbImage::from_fn(6, 5, |x, y| Rgb([(x * 10) as u8, (y * 20) as u8, 30]));
        let shifted = RgbImage::from_fn(6, 5, |x, y| {
            Rgb([(x * 10 + 51) as u8, (y * 20 + 51) as u8, 81])
        });
        assert_eq!(motion(&to_gray(&base), &to_gray(&base)), 0.0);
        assert!((motion(&to_gray(&base), &to_gray(&shifted)) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn motion_bimodal_median() {
        let prev = gray(4, 4, |_, _| 10.0);
        let curr = gray(4, 4, |x, _| if x < 2 { 110.0 } else { 10.0 });
        let mut diffs: Vec<f64> = prev.data.iter().zip(&curr.data).map(|(a, b)| (b - a).abs()).collect();
        diffs.sort_by(f64::total_cmp);
        let oracle = (diffs[7] + diffs[8]) / 2.0 / 255.0;
        assert_eq!(motion(&prev, &curr), oracle);
        assert!((oracle - 50.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn downscale_bounds_long_side() {
        let big = RgbImage::new(1280, 720);
        let small = downscale(&big);
        assert_eq!(small.dimensions(), (256, 144));
        assert_eq!(downscale(&RgbImage::new(100, 50)).dimensions(), (100, 50));
    }

    proptest! {
        #[test]
        fn motion_symmetric_and_offset_invariant(
            vals in proptest::collection::vec(0.0f64..200.0, 12),
            other in proptest::collection::vec(0.0f64..200.0, 12),
            offset in 0.0f64..50.0,
        ) {
            let a = GrayFrame::new(4, 3, vals.clone());
            let b = GrayFrame::new(4, 3, other.clone());
            prop_assert_eq!(motion(&a, &b), motion(&b, &a));
            let a2 = GrayFrame::new(4, 3, vals.iter().map(|v| v + offset).collect());
            let b2 = GrayFrame::new(4, 3, other.iter().map(|v| v + offset).collect());
            prop_assert!((motion(&a, &b) - motion(&a2, &b2)).abs() < 1e-9);
        }

        #[test]
        fn sharpness_non_negative(vals in proptest::collection::vec(0.0f64..255.0, 20)) {
            prop_assert!(sharpness(&GrayFrame::new(5, 4, vals)) >= 0.0);
        }
    }
}
