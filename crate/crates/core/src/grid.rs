//! 2.5-D height field shared by occlusion and traversability checks.

use serde::{Deserialize, Serialize};

use crate::model::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightGrid {
    /// World coordinates of the lower-left corner of cell (0, 0).
    pub origin_x: f64,
    pub origin_y: f64,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    cells: Vec<f64>,
}

impl HeightGrid {
    pub fn new(origin_x: f64, origin_y: f64, resolution: f64, width: usize, height: usize) -> Self {
        Self {
            origin_x,
            origin_y,
            resolution,
            width,
            height,
            cells: vec![0.0; width * height],
        }
    }

    /// Grid covering `[x0, x1] x [y0, y1]`.
    pub fn covering(x0: f64, y0: f64, x1: f64, y1: f64, resolution: f64) -> Self {
        let w = ((x1 - x0) / resolution).ceil().max(1.0) as usize;
        let h = ((y1 - y0) / resolution).ceil().max(1.0) as usize;
        Self::new(x0, y0, resolution, w, h)
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let cx = ((x - self.origin_x) / self.resolution).floor();
        let cy = ((y - self.origin_y) / self.resolution).floor();
        if cx < 0.0 || cy < 0.0 {
            return None;
        }
        let (cx, cy) = (cx as usize, cy as usize);
        (cx < self.width && cy < self.height).then_some((cx, cy))
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> (f64, f64) {
        (
            self.origin_x + (cx as f64 + 0.5) * self.resolution,
            self.origin_y + (cy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn get(&self, cx: usize, cy: usize) -> f64 {
        self.cells[cy * self.width + cx]
    }

    pub fn set(&mut self, cx: usize, cy: usize, h: f64) {
        self.cells[cy * self.width + cx] = h;
    }

    /// Height at a world point; zero outside the grid.
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        self.cell_of(x, y).map_or(0.0, |(cx, cy)| self.get(cx, cy))
    }

    /// Raises every cell whose center lies within `radius` of `(x, y)`.
    pub fn raise_disk(&mut self, x: f64, y: f64, radius: f64, h: f64) {
        self.for_cells_near(x, y, radius, |g, cx, cy| {
            if g.get(cx, cy) < h {
                g.set(cx, cy, h);
            }
        });
    }

    /// Raises every cell whose center lies inside the axis-aligned box.
    pub fn raise_box(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, h: f64) {
        for cy in 0..self.height {
            for cx in 0..self.width {
                let (x, y) = self.cell_center(cx, cy);
                if x >= x0 && x <= x1 && y >= y0 && y <= y1 && self.get(cx, cy) < h {
                    self.set(cx, cy, h);
                }
            }
        }
    }

    fn for_cells_near(&mut self, x: f64, y: f64, radius: f64, mut f: impl FnMut(&mut Self, usize, usize)) {
        let r_cells = (radius / self.resolution).ceil() as i64 + 1;
        let cx0 = ((x - self.origin_x) / self.resolution).floor() as i64;
        let cy0 = ((y - self.origin_y) / self.resolution).floor() as i64;
        for cy in (cy0 - r_cells)..=(cy0 + r_cells) {
            for cx in (cx0 - r_cells)..=(cx0 + r_cells) {
                if cx < 0 || cy < 0 || cx as usize >= self.width || cy as usize >= self.height {
                    continue;
                }
                let (px, py) = self.cell_center(cx as usize, cy as usize);
                if (px - x).hypot(py - y) <= radius {
                    f(self, cx as usize, cy as usize);
                }
            }
        }
    }

    /// True when any cell taller than `h_max` has its center within
    /// `radius` of `(x, y)`. Points off the grid count as free.
    pub fn blocked_within(&self, x: f64, y: f64, radius: f64, h_max: f64) -> bool {
        let r_cells = (radius / self.resolution).ceil() as i64 + 1;
        let cx0 = ((x - self.origin_x) / self.resolution).floor() as i64;
        let cy0 = ((y - self.origin_y) / self.resolution).floor() as i64;
        for cy in (cy0 - r_cells)..=(cy0 + r_cells) {
            if cy < 0 || cy as usize >= self.height {
                continue;
            }
            for cx in (cx0 - r_cells)..=(cx0 + r_cells) {
                if cx < 0 || cx as usize >= self.width {
                    continue;
                }
                let (cx, cy) = (cx as usize, cy as usize);
                if self.get(cx, cy) <= h_max {
                    continue;
                }
                let (px, py) = self.cell_center(cx, cy);
                if (px - x).hypot(py - y) <= radius {
                    return true;
                }
            }
        }
        false
    }

    /// Marches from `from` toward `to`, stopping `margin` short of `to`.
    /// Returns true if the segment dips below the height field anywhere.
    pub fn ray_blocked(&self, from: Vec3, to: Vec3, margin: f64) -> bool {
        let d = to - from;
        let len = d.norm();
        if len <= margin {
            return false;
        }
        let step = self.resolution * 0.5;
        let n = ((len - margin) / step).ceil() as usize;
        (1..=n).any(|i| {
            let s = (i as f64 * step).min(len - margin);
            let p = from + d * (s / len);
            self.height_at(p.x, p.y) > p.z
        })
    }

    /// One character per cell, top row first: `#` untraversable, `.` free.
    pub fn to_raster(&self, h_max: f64) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for cy in (0..self.height).rev() {
            for cx in 0..self.width {
                out.push(if self.get(cx, cy) > h_max { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_and_lookup() {
        let mut g = HeightGrid::covering(-1.0, -1.0, 1.0, 1.0, 0.05);
        g.raise_disk(0.5, 0.0, 0.1, 2.0);
        assert_eq!(g.height_at(0.5, 0.0), 2.0);
        assert_eq!(g.height_at(0.0, 0.0), 0.0);
        assert_eq!(g.height_at(5.0, 0.0), 0.0);
        assert!(g.blocked_within(0.3, 0.0, 0.15, 0.15));
        assert!(!g.blocked_within(-0.5, 0.0, 0.3, 0.15));
    }

    #[test]
    fn ray_over_and_through() {
        let mut g = HeightGrid::covering(-1.0, -1.0, 1.0, 1.0, 0.05);
        g.raise_box(0.2, -0.1, 0.3, 0.1, 1.0);
        let a = Vec3::new(0.0, 0.0, 0.5);
        let b = Vec3::new(0.6, 0.0, 0.5);
        assert!(g.ray_blocked(a, b, 0.05));
        let a_high = Vec3::new(0.0, 0.0, 1.5);
        let b_high = Vec3::new(0.6, 0.0, 1.5);
        assert!(!g.ray_blocked(a_high, b_high, 0.05));
    }

    #[test]
    fn raster_shape() {
        let mut g = HeightGrid::new(0.0, 0.0, 1.0, 3, 2);
        g.set(0, 1, 1.0);
        assert_eq!(g.to_raster(0.15), "#..\n...\n");
    }
}
