//! Automatic ROI proposals from a spectral-residual saliency map.

use image::imageops::{self, FilterType};
use image::{ImageBuffer, Luma};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::mask::Mask;
use crate::warp::Raster;

/// Saliency is computed on a copy whose longer side is at most this many pixels.
const WORK_SIZE: usize = 64;
const CLOSING_RADIUS: isize = 2;
const BORDER_BAND: usize = 2;
const MIN_AREA_FRACTION: f64 = 0.001;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RoiError {
    #[error("fraction {0} outside (0, 1)")]
    InvalidFraction(f64),
    #[error("image is empty")]
    EmptyImage,
    #[error("no salient region survived thresholding")]
    NoComponents,
}

/// Per-pixel saliency in `[0, 1]`, maximum 1 unless the map is all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl SaliencyMap {
    pub fn from_scores(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height, "score count must equal width * height");
        SaliencyMap { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn scores(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn to_raster(&self) -> Raster {
        Raster::from_data(self.width, self.height, 1, self.data.clone()).expect("scores are finite and sized")
    }
}

type GrayF = ImageBuffer<Luma<f32>, Vec<f32>>;

fn fft2(buf: &mut [Complex<f64>], w: usize, h: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row, col) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    for r in buf.chunks_mut(w) {
        row.process(r);
    }
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = buf[y * w + x];
        }
        col.process(&mut column);
        for y in 0..h {
            buf[y * w + x] = column[y];
        }
    }
}

/// Spectral-residual saliency.
///
/// The luma image is shrunk to at most 64 px, its log amplitude spectrum has a 3×3
/// local mean removed, and the residual is recombined with the original phase. The
/// squared magnitude of the inverse transform is blurred, resized back and normalized.
/// The DC term and numerically empty frequencies are dropped, so a constant image maps
/// to all zeros.
pub fn compute_saliency(image: &Raster) -> SaliencyMap {
    let (w, h) = (image.width(), image.height());
    let gray = image.to_gray();
    let full = GrayF::from_raw(w as u32, h as u32, gray.data().to_vec()).expect("sizes agree");
    let scale = (WORK_SIZE as f64 / w.max(h) as f64).min(1.0);
    let (sw, sh) = (((w as f64 * scale).round() as usize).max(1), ((h as f64 * scale).round() as usize).max(1));
    let small = if (sw, sh) == (w, h) { full } else { imageops::resize(&full, sw as u32, sh as u32, FilterType::Triangle) };

    let mut spec: Vec<Complex<f64>> = small.as_raw().iter().map(|&v| Complex::new(v as f64, 0.0)).collect();
    fft2(&mut spec, sw, sh, false);
    let amp: Vec<f64> = spec.iter().map(|z| z.norm()).collect();
    let amp_max = amp.iter().fold(0.0f64, |m, &a| m.max(a));
    let zeros = SaliencyMap { width: w, height: h, data: vec![0.0; w * h] };
    if amp_max == 0.0 {
        return zeros;
    }
    let log_amp: Vec<f64> = amp.iter().map(|&a| (a + 1e-12 * amp_max).ln()).collect();
    for y in 0..sh {
        for x in 0..sw {
            let i = y * sw + x;
            if i == 0 || amp[i] <= 1e-9 * amp_max {
                spec[i] = Complex::new(0.0, 0.0);
                continue;
            }
            let mut mean = 0.0;
            for dy in [sh - 1, 0, 1] {
                for dx in [sw - 1, 0, 1] {
                    mean += log_amp[((y + dy) % sh) * sw + (x + dx) % sw];
                }
            }
            let residual = log_amp[i] - mean / 9.0;
            spec[i] = spec[i] / amp[i] * residual.exp();
        }
    }
    fft2(&mut spec, sw, sh, true);
    let energy: Vec<f32> = spec.iter().map(|z| z.norm_sqr() as f32).collect();
    let emax = energy.iter().fold(0.0f32, |m, &e| m.max(e));
    if !(emax > 0.0) {
        return zeros;
    }
    // normalize before filtering to keep f32 arithmetic well scaled
    let small_map = GrayF::from_raw(sw as u32, sh as u32, energy.iter().map(|e| e / emax).collect()).expect("sizes agree");
    let sigma = (0.04 * sw.max(sh) as f32).max(1.0);
    let blurred = imageops::blur(&small_map, sigma);
    let big = if (sw, sh) == (w, h) { blurred } else { imageops::resize(&blurred, w as u32, h as u32, FilterType::Triangle) };
    let mut data: Vec<f32> = big.into_raw().into_iter().map(|v| v.max(0.0)).collect();
    let max = data.iter().fold(0.0f32, |m, &v| m.max(v));
    if !(max > 0.0) {
        return zeros;
    }
    for v in &mut data {
        *v /= max;
    }
    SaliencyMap { width: w, height: h, data }
}

/// Pixels scoring strictly above the `(1 − fraction)` quantile. With distinct scores
/// this is exactly the top `⌊fraction·N⌋` pixels; ties at the threshold are excluded.
pub fn top_fraction_mask(saliency: &SaliencyMap, fraction: f64) -> Result<Mask, RoiError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(RoiError::InvalidFraction(fraction));
    }
    let n = saliency.data.len();
    if n == 0 {
        return Err(RoiError::EmptyImage);
    }
    let k = (fraction * n as f64).floor() as usize;
    let mut mask = Mask::new(saliency.width, saliency.height);
    if k == 0 {
        return Ok(mask);
    }
    let mut sorted = saliency.data.clone();
    sorted.sort_by(f32::total_cmp);
    let threshold = sorted[n - k - 1];
    for y in 0..saliency.height {
        for x in 0..saliency.width {
            if saliency.get(x, y) > threshold {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}

fn disk_offsets(r: isize) -> Vec<(isize, isize)> {
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Dilation (`outside = false`) or erosion (`outside = true`) with a disk.
fn morph(mask: &Mask, offsets: &[(isize, isize)], erode: bool) -> Mask {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let mut out = Mask::new(mask.width(), mask.height());
    for y in 0..h {
        for x in 0..w {
            let probe = |&(dx, dy): &(isize, isize)| {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    erode
                } else {
                    mask.get(nx as usize, ny as usize)
                }
            };
            let v = if erode { offsets.iter().all(probe) } else { offsets.iter().any(probe) };
            out.set(x as usize, y as usize, v);
        }
    }
    out
}

/// Morphological closing with a disk of radius 2.
pub fn close(mask: &Mask) -> Mask {
    let disk = disk_offsets(CLOSING_RADIUS);
    morph(&morph(mask, &disk, false), &disk, true)
}

/// Turns a saliency map into ROI masks: top-`fraction` selection, closing,
/// 8-connected components, a 2 px band cleared along the image border, and removal
/// of components smaller than 0.1% of the image.
pub fn threshold_rois(saliency: &SaliencyMap, fraction: f64) -> Result<Vec<Mask>, RoiError> {
    let selected = top_fraction_mask(saliency, fraction)?;
    let closed = close(&selected);
    let (w, h) = (saliency.width, saliency.height);
    let min_area = MIN_AREA_FRACTION * (w * h) as f64;
    let mut out = Vec::new();
    for mut comp in closed.components() {
        if comp.touches_border() {
            for y in 0..h {
                for x in 0..w {
                    if x < BORDER_BAND || y < BORDER_BAND || x + BORDER_BAND >= w || y + BORDER_BAND >= h {
                        comp.set(x, y, false);
                    }
                }
            }
        }
        for piece in comp.components() {
            if piece.count() as f64 >= min_area {
                out.push(piece);
            }
        }
    }
    if out.is_empty() {
        return Err(RoiError::NoComponents);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(w: usize, h: usize, cx: f32, cy: f32, r: f32, level: f32) -> Raster {
        Raster::from_fn(w, h, 1, |x, y, _| {
            let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
            if d < r {
                level
            } else {
                0.1 * level
            }
        })
    }

    #[test]
    fn constant_image_has_no_saliency() {
        let s = compute_saliency(&Raster::from_fn(40, 30, 3, |_, _, _| 0.4));
        assert!(s.scores().iter().all(|&v| v == 0.0));
        assert_eq!(threshold_rois(&s, 0.25), Err(RoiError::NoComponents));
    }

    #[test]
    fn blob_beats_background_median() {
        let img = blob(80, 60, 40.0, 30.0, 8.0, 0.9);
        let s = compute_saliency(&img);
        let mut sorted = s.scores().to_vec();
        sorted.sort_by(f32::total_cmp);
        let median = sorted[sorted.len() / 2];
        assert!(s.get(40, 30) > median);
        assert!((s.scores().iter().fold(0.0f32, |m, &v| m.max(v)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scaling_intensity_does_not_change_saliency() {
        let a = compute_saliency(&blob(50, 40, 20.0, 18.0, 6.0, 0.8));
        let b = compute_saliency(&blob(50, 40, 20.0, 18.0, 6.0, 0.4));
        for (x, y) in a.scores().iter().zip(b.scores()) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn two_blobs_two_masks() {
        let mut data = vec![0.0f32; 60 * 40];
        for y in 0..40 {
            for x in 0..60 {
                let d1 = (x as f32 - 15.0).hypot(y as f32 - 20.0);
                let d2 = (x as f32 - 45.0).hypot(y as f32 - 20.0);
                data[y * 60 + x] = (1.0 - d1.min(d2) / 40.0).max(0.0) + 1e-6 * (y * 60 + x) as f32;
            }
        }
        let s = SaliencyMap::from_scores(60, 40, data);
        let masks = threshold_rois(&s, 0.1).unwrap();
        assert_eq!(masks.len(), 2);
        assert!(masks.iter().all(|m| !m.touches_border()));
    }

    #[test]
    fn quantile_selects_exact_count() {
        let data: Vec<f32> = (0..100).map(|i| ((i * 37) % 100) as f32).collect();
        let s = SaliencyMap::from_scores(10, 10, data);
        let m = top_fraction_mask(&s, 0.25).unwrap();
        assert_eq!(m.count(), 25);
        let flat = SaliencyMap::from_scores(10, 10, vec![0.5; 100]);
        assert!(top_fraction_mask(&flat, 0.25).unwrap().is_empty());
    }
}
