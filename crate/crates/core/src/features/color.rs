use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::stats::EPS;

/// Bins per HSV channel.
pub const BINS: usize = 32;

/// Jointly ℓ1-normalized H, S and V histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorDescriptor {
    pub hist_h: Vec<f64>,
    pub hist_s: Vec<f64>,
    pub hist_v: Vec<f64>,
}

impl ColorDescriptor {
    pub fn total(&self) -> f64 {
        self.hist_h.iter().chain(&self.hist_s).chain(&self.hist_v).sum()
    }

    /// `[h; s; v]`, length `3 * BINS`.
    pub fn concat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * BINS);
        out.extend_from_slice(&self.hist_h);
        out.extend_from_slice(&self.hist_s);
        out.extend_from_slice(&self.hist_v);
        out
    }
}

/// RGB (0–255) to HSV with every channel in [0, 1]; hue covers the full
/// circle and is 0 for achromatic pixels.
pub fn rgb_to_hsv(rgb: [u8; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(|c| c as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    [h.rem_euclid(1.0), s, max]
}

fn bin(x: f64) -> usize {
    ((x * BINS as f64).floor() as usize).min(BINS - 1)
}

pub fn hsv_histogram(image: &RgbImage) -> ColorDescriptor {
    let mut hists = [[0.0f64; BINS]; 3];
    for px in image.pixels() {
        let hsv = rgb_to_hsv(px.0);
        for (hist, value) in hists.iter_mut().zip(hsv) {
            hist[bin(value)] += 1.0;
        }
    }
    let total: f64 = hists.iter().flatten().sum::<f64>() + EPS;
    let [h, s, v] = hists.map(|hist| hist.iter().map(|c| c / total).collect::<Vec<f64>>());
    ColorDescriptor {
        hist_h: h,
        hist_s: s,
        hist_v: v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::cosine_distance;
    use image::Rgb;
    use proptest::prelude::*;

    #[test]
    fn gray_image_uses_one_bin_per_channel() {
        let img = RgbImage::from_pixel(8, 8, Rgb([128, 128, 128]));
        let d = hsv_histogram(&img);
        for hist in [&d.hist_h, &d.hist_s, &d.hist_v] {
            assert_eq!(hist.iter().filter(|&&x| x > 0.0).count(), 1);
        }
        assert!((d.total() - 1.0).abs() < 1e-6);
        // V = 128/255 ≈ 0.502 -> bin 16
        assert!(d.hist_v[16] > 0.0);
    }

    #[test]
    fn red_and_blue_hues_are_orthogonal() {
        let red = hsv_histogram(&RgbImage::from_pixel(4, 4, Rgb([255, 0, 0])));
        let blue = hsv_histogram(&RgbImage::from_pixel(4, 4, Rgb([0, 0, 255])));
        // red hue 0 -> bin 0, blue hue 240/360 -> bin 21
        assert!(red.hist_h[0] > 0.0);
        assert!(blue.hist_h[21] > 0.0);
        assert!((cosine_distance(&red.hist_h, &blue.hist_h) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hsv_of_primaries() {
        assert_eq!(rgb_to_hsv([0, 255, 0]), [1.0 / 3.0, 1.0, 1.0]);
        assert_eq!(rgb_to_hsv([0, 0, 0]), [0.0, 0.0, 0.0]);
        let magenta = rgb_to_hsv([255, 0, 255]);
        assert!((magenta[0] - 5.0 / 6.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn joint_normalization(w in 1u32..12, h in 1u32..12, seed in any::<u64>()) {
            let img = RgbImage::from_fn(w, h, |x, y| {
                let v = crate::rng::derive(&[seed, x as u64, y as u64]);
                Rgb([v as u8, (v >> 8) as u8, (v >> 16) as u8])
            });
            let d = hsv_histogram(&img);
            let total = d.total();
            prop_assert!((1.0 - 1e-6..=1.0).contains(&total));
            prop_assert!(d.concat().iter().all(|&x| x >= 0.0));
        }
    }
}
