//! Binary pixel masks describing regions of interest.

use crate::geometry::Point;

/// A binary raster; pixel `(x, y)` covers the closed square `[x, x+1] × [y, y+1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask { width, height, data: vec![false; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), width * height, "mask data length must equal width * height");
        Mask { width, height, data }
    }

    /// Axis-aligned filled rectangle `[x0, x1) × [y0, y1)` in pixel indices.
    pub fn rect(width: usize, height: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        let mut mask = Mask::new(width, height);
        for y in y0..y1.min(height) {
            for x in x0..x1.min(width) {
                mask.set(x, y, true);
            }
        }
        mask
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// True when some set pixel lies on the outermost pixel ring.
    pub fn touches_border(&self) -> bool {
        (0..self.height).any(|y| {
            (0..self.width).any(|x| {
                self.get(x, y) && (x == 0 || y == 0 || x + 1 == self.width || y + 1 == self.height)
            })
        })
    }

    /// Pixel-index bounding box `(x0, y0, x1, y1)`, exclusive upper end.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bbox = Some(match bbox {
                        None => (x, y, x + 1, y + 1),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1)),
                    });
                }
            }
        }
        bbox
    }

    /// Splits the mask into 8-connected components, in raster-scan order of
    /// each component's first pixel.
    pub fn components(&self) -> Vec<Mask> {
        let mut label = vec![usize::MAX; self.data.len()];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..self.data.len() {
            if !self.data[start] || label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut comp = Mask::new(self.width, self.height);
            label[start] = id;
            stack.push(start);
            while let Some(idx) = stack.pop() {
                comp.data[idx] = true;
                let (x, y) = ((idx % self.width) as isize, (idx / self.width) as isize);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= self.width as isize || ny >= self.height as isize {
                            continue;
                        }
                        let n = ny as usize * self.width + nx as usize;
                        if self.data[n] && label[n] == usize::MAX {
                            label[n] = id;
                            stack.push(n);
                        }
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    /// Centroid of the covered pixel squares in continuous coordinates.
    pub fn centroid(&self) -> Option<Point> {
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut n = 0usize;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64 + 0.5;
                    sy += y as f64 + 0.5;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| Point::new(sx / n as f64, sy / n as f64))
    }
}

/// Splits every mask into its connected components; each component is one region.
pub fn split_regions(masks: &[Mask]) -> Vec<Mask> {
    masks.iter().flat_map(|m| m.components()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_pixels_are_connected() {
        let mut m = Mask::new(5, 5);
        m.set(1, 1, true);
        m.set(2, 2, true);
        m.set(4, 0, true);
        let comps = m.components();
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].count(), 1); // (4,0) comes first in scan order
        assert_eq!(comps[1].count(), 2);
    }

    #[test]
    fn border_detection() {
        assert!(Mask::rect(10, 10, 0, 3, 2, 5).touches_border());
        assert!(!Mask::rect(10, 10, 1, 1, 9, 9).touches_border());
        assert_eq!(Mask::rect(10, 10, 2, 3, 5, 7).bounding_box(), Some((2, 3, 5, 7)));
    }
}
