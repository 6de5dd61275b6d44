//! Rasters and inverse-map resampling through a simplicial map.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};
use nalgebra::Matrix2;
use rayon::prelude::*;

use crate::geometry::{orient, Point, Vec2};
use crate::mesh::{SimplicialMesh, TriangleGrid};
use crate::solver::SimplicialMap;

#[derive(Debug, thiserror::Error)]
pub enum WarpError {
    #[error("image triangle {0} is flipped or degenerate")]
    FlippedTriangle(usize),
    #[error("index does not match mesh: {0}")]
    IndexMeshMismatch(String),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major image with 1, 3 or 4 channels of samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(matches!(channels, 1 | 3 | 4), "channels must be 1, 3 or 4");
        Raster { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self, WarpError> {
        if !matches!(channels, 1 | 3 | 4) {
            return Err(WarpError::InvalidRaster(format!("{channels} channels")));
        }
        if data.len() != width * height * channels {
            return Err(WarpError::InvalidRaster(format!(
                "{} samples for {width}x{height}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(WarpError::InvalidRaster("non-finite sample".into()));
        }
        let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Raster { width, height, channels, data })
    }

    /// Builds a raster from `f(x, y, channel)`.
    pub fn from_fn(width: usize, height: usize, channels: usize, f: impl Fn(usize, usize, usize) -> f32) -> Self {
        let mut r = Raster::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    r.data[(y * width + x) * channels + c] = f(x, y, c).clamp(0.0, 1.0);
                }
            }
        }
        r
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

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v.clamp(0.0, 1.0);
    }

    /// Bilinear sample at continuous pixel-index coordinates, clamped at the edges.
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f32]) {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (xc.floor() as usize, yc.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = ((xc - x0 as f64) as f32, (yc - y0 as f64) as f32);
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            let top = self.get(x0, y0, c) * (1.0 - fx) + self.get(x1, y0, c) * fx;
            let bottom = self.get(x0, y1, c) * (1.0 - fx) + self.get(x1, y1, c) * fx;
            *o = top * (1.0 - fy) + bottom * fy;
        }
    }

    /// Luma (Rec. 601 weights) as a single-channel raster; alpha is ignored.
    pub fn to_gray(&self) -> Raster {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks(self.channels)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect();
        Raster { width: self.width, height: self.height, channels: 1, data }
    }

    pub fn max_abs_diff(&self, other: &Raster) -> f32 {
        assert_eq!((self.width, self.height, self.channels), (other.width, other.height, other.channels));
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Rounds every sample to the nearest 8-bit level.
    pub fn quantized(&self) -> Raster {
        let data = self.data.iter().map(|&v| (v * 255.0).round() / 255.0).collect();
        Raster { data, ..self.clone() }
    }

    pub fn from_dynamic(img: &DynamicImage) -> Raster {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let (channels, bytes) = match img {
            DynamicImage::ImageLuma8(b) => (1, b.as_raw().clone()),
            DynamicImage::ImageRgb8(b) => (3, b.as_raw().clone()),
            DynamicImage::ImageRgba8(b) => (4, b.as_raw().clone()),
            other if other.color().has_alpha() => (4, other.to_rgba8().into_raw()),
            other if other.color().channel_count() <= 2 => (1, other.to_luma8().into_raw()),
            other => (3, other.to_rgb8().into_raw()),
        };
        let data = bytes.into_iter().map(|b| b as f32 / 255.0).collect();
        Raster { width: w, height: h, channels, data }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let (w, h) = (self.width as u32, self.height as u32);
        let bytes = self.to_bytes();
        match self.channels {
            1 => DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, bytes).expect("sizes agree")),
            3 => DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, bytes).expect("sizes agree")),
            _ => DynamicImage::ImageRgba8(image::RgbaImage::from_raw(w, h, bytes).expect("sizes agree")),
        }
    }

    /// Decodes PNG or PNM bytes.
    pub fn decode(bytes: &[u8]) -> Result<Raster, WarpError> {
        Ok(Raster::from_dynamic(&image::load_from_memory(bytes)?))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, WarpError> {
        let mut buf = Cursor::new(Vec::new());
        self.to_dynamic().write_to(&mut buf, ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    /// Binary PPM (P6); grayscale and alpha are converted to RGB.
    pub fn encode_ppm(&self) -> Vec<u8> {
        let rgb = self.to_dynamic().to_rgb8();
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(rgb.as_raw());
        out
    }

    pub fn load(path: &Path) -> Result<Raster, WarpError> {
        Raster::decode(&std::fs::read(path)?)
    }

    /// Writes PNG or PPM depending on the extension.
    pub fn save(&self, path: &Path) -> Result<(), WarpError> {
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        let bytes = match ext.as_deref() {
            Some("png") => self.encode_png()?,
            Some("ppm") | Some("pnm") => self.encode_ppm(),
            other => return Err(WarpError::UnsupportedFormat(other.unwrap_or("<none>").to_string())),
        };
        std::fs::write(path, bytes)?;
        Ok(())
    }
}

/// Image-space triangles of a map with cached inverse affine transforms.
#[derive(Debug, Clone)]
pub struct TargetMeshIndex {
    positions: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    inverse: Vec<(Matrix2<f64>, Vec2)>,
    grid: TriangleGrid,
    width: f64,
    height: f64,
    source_width: f64,
    source_height: f64,
}

impl TargetMeshIndex {
    /// Target-domain size `(wa, b)`, the bounding box of the image vertices.
    pub fn domain(&self) -> (f64, f64) {
        (self.width, self.height)
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn image_area(&self) -> f64 {
        self.triangles.iter().map(|t| 0.5 * orient(&self.positions[t[0]], &self.positions[t[1]], &self.positions[t[2]])).sum()
    }

    /// Inverse affine map of triangle `t` as `(M, c)` with `q = M p + c`.
    pub fn inverse_affine(&self, t: usize) -> (Matrix2<f64>, Vec2) {
        self.inverse[t]
    }

    /// Image triangle containing `p`, if any.
    pub fn find(&self, p: &Point) -> Option<usize> {
        self.grid.find(&self.positions, &self.triangles, p).map(|l| l.triangle)
    }

    /// Source point mapped to `p`, with the containing triangle. Points outside every
    /// image triangle use the nearest one.
    pub fn pullback(&self, p: &Point) -> (usize, Point) {
        let t = self.find(p).unwrap_or_else(|| self.grid.nearest(&self.positions, &self.triangles, p).0);
        let (m, c) = self.inverse[t];
        (t, Point::from(m * p.coords + c))
    }
}

pub fn build_target_index(mesh: &SimplicialMesh, map: &SimplicialMap) -> Result<TargetMeshIndex, WarpError> {
    if map.positions.len() != mesh.num_vertices() {
        return Err(WarpError::IndexMeshMismatch(format!(
            "map has {} points for {} vertices",
            map.positions.len(),
            mesh.num_vertices()
        )));
    }
    let q = &map.positions;
    let mut inverse = Vec::with_capacity(mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let [p0, p1, p2] = tri.map(|v| mesh.vertices()[v]);
        let [q0, q1, q2] = tri.map(|v| q[v]);
        if !(orient(&q0, &q1, &q2) > 0.0) {
            return Err(WarpError::FlippedTriangle(t));
        }
        let src = Matrix2::from_columns(&[p1 - p0, p2 - p0]);
        let img = Matrix2::from_columns(&[q1 - q0, q2 - q0]);
        let m = src * img.try_inverse().ok_or(WarpError::FlippedTriangle(t))?;
        let c = p0.coords - m * q0.coords;
        inverse.push((m, c));
    }
    let width = q.iter().map(|p| p.x).fold(0.0, f64::max);
    let height = q.iter().map(|p| p.y).fold(0.0, f64::max);
    let grid = TriangleGrid::new(q, mesh.triangles(), Point::origin(), Point::new(width, height));
    Ok(TargetMeshIndex {
        positions: q.clone(),
        triangles: mesh.triangles().to_vec(),
        inverse,
        grid,
        width,
        height,
        source_width: mesh.width(),
        source_height: mesh.height(),
    })
}

/// Output raster width for a target domain width: round half up, at least one pixel.
pub fn output_width(target_width: f64) -> usize {
    ((target_width + 0.5).floor() as usize).max(1)
}

fn check_source(source: &Raster, index: &TargetMeshIndex, mesh: &SimplicialMesh) -> Result<(), WarpError> {
    if index.triangles.as_slice() != mesh.triangles() {
        return Err(WarpError::IndexMeshMismatch("triangle lists differ".into()));
    }
    if source.width() as f64 != index.source_width || source.height() as f64 != index.source_height {
        return Err(WarpError::IndexMeshMismatch(format!(
            "source is {}x{}, mesh domain is {}x{}",
            source.width(),
            source.height(),
            index.source_width,
            index.source_height
        )));
    }
    Ok(())
}

/// Center of output pixel `(x, y)` in target-domain coordinates.
fn pixel_center(index: &TargetMeshIndex, out_w: usize, x: usize, y: usize) -> Point {
    Point::new((x as f64 + 0.5) * index.width / out_w as f64, y as f64 + 0.5)
}

/// Resamples `source` through the inverse map: every output pixel center is pulled back
/// into the source and sampled bilinearly.
pub fn resample(source: &Raster, index: &TargetMeshIndex, mesh: &SimplicialMesh) -> Result<Raster, WarpError> {
    check_source(source, index, mesh)?;
    let out_w = output_width(index.width);
    let out_h = source.height();
    let ch = source.channels();
    let mut data = vec![0.0f32; out_w * out_h * ch];
    data.par_chunks_mut(out_w * ch).enumerate().for_each(|(y, row)| {
        let mut px = [0.0f32; 4];
        for x in 0..out_w {
            let (_, q) = index.pullback(&pixel_center(index, out_w, x, y));
            source.sample_bilinear(q.x - 0.5, q.y - 0.5, &mut px);
            row[x * ch..(x + 1) * ch].copy_from_slice(&px[..ch]);
        }
    });
    Raster::from_data(out_w, out_h, ch, data)
}

/// Grayscale output-sized raster where each pixel shows the density of the image
/// triangle under it, scaled so the maximum density is white.
pub fn render_density(index: &TargetMeshIndex, density: &[f64], out_h: usize) -> Raster {
    assert_eq!(density.len(), index.num_triangles(), "one density per triangle");
    let out_w = output_width(index.width);
    let max = density.iter().fold(0.0f64, |m, &d| m.max(d));
    let mut r = Raster::new(out_w, out_h, 1);
    for y in 0..out_h {
        for x in 0..out_w {
            let (t, _) = index.pullback(&pixel_center(index, out_w, x, y));
            let v = if max > 0.0 { density[t] / max } else { 0.0 };
            r.set(x, y, 0, v as f32);
        }
    }
    r
}
