//! Overlapping tile plans for large-image inference and the matching
//! stitcher. Tiles are read at full patch size; only the interior (the
//! patch minus `margin` on sides that face another tile) is written back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

pub const DEFAULT_PATCH: usize = 512;
pub const DEFAULT_STRIDE: usize = 368;
pub const DEFAULT_MARGIN: usize = 72;

/// Integer pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x0 < other.x0 + other.width
            && other.x0 < self.x0 + self.width
            && self.y0 < other.y0 + other.height
            && other.y0 < self.y0 + self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub read: Rect,
    pub write: Rect,
    /// Write window origin relative to the read window.
    pub paste_offset: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub image_width: usize,
    pub image_height: usize,
    pub patch: usize,
    pub stride: usize,
    pub margin: usize,
    pub columns: usize,
    pub rows: usize,
    /// Row-major over the tile grid.
    pub tiles: Vec<Tile>,
}

/// Read offsets and write spans along one axis.
fn axis_plan(dim: usize, patch: usize, stride: usize, margin: usize) -> Vec<(usize, usize, usize, usize)> {
    if dim <= patch {
        return vec![(0, dim, 0, dim)];
    }
    let mut offsets = Vec::new();
    let mut o = 0;
    while o + patch < dim {
        offsets.push(o);
        o += stride;
    }
    offsets.push(dim - patch);
    offsets.dedup();

    let n = offsets.len();
    let mut spans = Vec::with_capacity(n);
    let mut start = 0;
    for (i, &o) in offsets.iter().enumerate() {
        let end = if i + 1 == n { dim } else { o + patch - margin };
        spans.push((o, patch, start, end - start));
        start = end;
    }
    spans
}

/// Plans tiles of `patch` pixels every `stride` pixels, with the last
/// row/column shifted to end at the image border. Write windows are
/// disjoint and cover the image.
pub fn plan_tiles(image_width: usize, image_height: usize, patch: usize, stride: usize, margin: usize) -> Result<TilePlan> {
    if image_width == 0 || image_height == 0 {
        return Err(Error::argument("image dimensions must be positive"));
    }
    if patch <= 2 * margin {
        return Err(Error::argument(format!("patch {patch} must exceed twice the margin {margin}")));
    }
    if stride == 0 || stride > patch - 2 * margin {
        return Err(Error::argument(format!(
            "stride {stride} must be in 1..={} for patch {patch} and margin {margin}",
            patch - 2 * margin
        )));
    }
    let xs = axis_plan(image_width, patch, stride, margin);
    let ys = axis_plan(image_height, patch, stride, margin);
    let mut tiles = Vec::with_capacity(xs.len() * ys.len());
    for &(ry, rh, wy, wh) in &ys {
        for &(rx, rw, wx, ww) in &xs {
            tiles.push(Tile {
                read: Rect { x0: rx, y0: ry, width: rw, height: rh },
                write: Rect { x0: wx, y0: wy, width: ww, height: wh },
                paste_offset: (wx - rx, wy - ry),
            });
        }
    }
    Ok(TilePlan {
        image_width,
        image_height,
        patch,
        stride,
        margin,
        columns: xs.len(),
        rows: ys.len(),
        tiles,
    })
}

impl TilePlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plans always serialize")
    }

    /// Cuts the read window of every tile out of a full-size grid.
    pub fn crop_tiles<R: Raster>(&self, image: &R) -> Result<Vec<R>> {
        if image.width() != self.image_width || image.height() != self.image_height {
            return Err(Error::shape(format!(
                "image is {}x{}, plan expects {}x{}",
                image.width(),
                image.height(),
                self.image_width,
                self.image_height
            )));
        }
        self.tiles
            .iter()
            .map(|t| {
                let r = t.read;
                let mut data = Vec::with_capacity(r.area());
                for y in r.y0..r.y0 + r.height {
                    let row = y * self.image_width;
                    data.extend_from_slice(&image.values()[row + r.x0..row + r.x0 + r.width]);
                }
                R::from_values(r.width, r.height, data)
            })
            .collect()
    }
}

/// Assembles a full image from per-tile outputs, each the size of its read
/// window, copying only the write windows.
pub fn stitch<R: Raster>(plan: &TilePlan, outputs: &[R]) -> Result<R> {
    if outputs.len() != plan.tiles.len() {
        return Err(Error::shape(format!(
            "{} tile outputs for {} tiles",
            outputs.len(),
            plan.tiles.len()
        )));
    }
    let w = plan.image_width;
    let mut data = vec![R::Value::default(); w * plan.image_height];
    for (k, (tile, out)) in plan.tiles.iter().zip(outputs).enumerate() {
        if out.width() != tile.read.width || out.height() != tile.read.height {
            return Err(Error::shape(format!(
                "tile {k} output is {}x{}, read window is {}x{}",
                out.width(),
                out.height(),
                tile.read.width,
                tile.read.height
            )));
        }
        let (ox, oy) = tile.paste_offset;
        let wr = tile.write;
        for dy in 0..wr.height {
            let src = (oy + dy) * out.width() + ox;
            let dst = (wr.y0 + dy) * w + wr.x0;
            data[dst..dst + wr.width].copy_from_slice(&out.values()[src..src + wr.width]);
        }
    }
    R::from_values(w, plan.image_height, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ScalarField;

    #[test]
    fn single_tile_for_exact_patch() {
        let plan = plan_tiles(512, 512, 512, 368, 72).unwrap();
        assert_eq!(plan.tiles.len(), 1);
        let t = plan.tiles[0];
        assert_eq!(t.write, Rect { x0: 0, y0: 0, width: 512, height: 512 });
        assert_eq!(t.paste_offset, (0, 0));
    }

    #[test]
    fn small_image_clamps_single_tile() {
        let plan = plan_tiles(300, 300, 512, 368, 72).unwrap();
        assert_eq!(plan.tiles.len(), 1);
        assert_eq!(plan.tiles[0].read, Rect { x0: 0, y0: 0, width: 300, height: 300 });
    }

    #[test]
    fn large_image_offsets() {
        let plan = plan_tiles(4096, 4096, 512, 368, 72).unwrap();
        assert_eq!((plan.columns, plan.rows), (11, 11));
        let xs: Vec<usize> = plan.tiles[..11].iter().map(|t| t.read.x0).collect();
        let mut expected: Vec<usize> = (0..10).map(|k| k * 368).collect();
        expected.push(3584);
        assert_eq!(xs, expected);
        assert_eq!(plan.tiles[1].write.x0, 440);
        assert_eq!(plan.tiles[0].write.width, 440);
    }

    #[test]
    fn bad_parameters() {
        assert!(plan_tiles(100, 100, 144, 10, 72).is_err());
        assert!(plan_tiles(100, 100, 512, 369, 72).is_err());
        assert!(plan_tiles(100, 100, 512, 0, 72).is_err());
        assert!(plan_tiles(0, 100, 512, 368, 72).is_err());
    }

    #[test]
    fn stitch_rejects_wrong_sizes() {
        let plan = plan_tiles(600, 600, 512, 368, 72).unwrap();
        let tile = ScalarField::filled(10, 10, 0.0).unwrap();
        assert!(stitch(&plan, &[tile.clone()]).is_err());
        assert!(stitch(&plan, &vec![tile; plan.tiles.len()]).is_err());
    }
}
