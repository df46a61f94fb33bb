use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::OccupancyGrid;

/// Reference rasters are fixed at 128x128.
pub const DEPTH_SIDE: usize = 128;

/// A single-channel reference raster with values in `[0, 1]`, 0 = background.
/// Row-major, row 0 at the top.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    values: Vec<f32>,
}

impl DepthMap {
    pub fn new(values: Vec<f32>) -> Self {
        assert_eq!(values.len(), DEPTH_SIDE * DEPTH_SIDE);
        Self { values }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, px: usize, py: usize) -> f32 {
        self.values[py * DEPTH_SIDE + px]
    }

    /// PFM, grayscale, little-endian (negative scale), bottom row first.
    pub fn write_pfm<W: Write>(&self, out: &mut W) -> Result<()> {
        write!(out, "Pf\n{} {}\n-1.0\n", DEPTH_SIDE, DEPTH_SIDE)?;
        for row in (0..DEPTH_SIDE).rev() {
            for col in 0..DEPTH_SIDE {
                out.write_all(&self.values[row * DEPTH_SIDE + col].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_pfm<R: BufRead>(input: &mut R) -> Result<Self> {
        let mut line = String::new();
        input.read_line(&mut line)?;
        if line.trim() != "Pf" {
            return Err(Error::format("PFM", "expected grayscale magic 'Pf'"));
        }
        line.clear();
        input.read_line(&mut line)?;
        let dims: Vec<&str> = line.split_whitespace().collect();
        if dims.len() != 2 || dims[0] != "128" || dims[1] != "128" {
            return Err(Error::format("PFM", format!("expected 128 128, got {}", line.trim())));
        }
        line.clear();
        input.read_line(&mut line)?;
        let scale: f32 = line
            .trim()
            .parse()
            .map_err(|_| Error::format("PFM", "unparseable scale"))?;
        if scale >= 0.0 {
            return Err(Error::format("PFM", "big-endian PFM not supported"));
        }
        let mut values = vec![0f32; DEPTH_SIDE * DEPTH_SIDE];
        let mut buf = [0u8; 4];
        for row in (0..DEPTH_SIDE).rev() {
            for col in 0..DEPTH_SIDE {
                input
                    .read_exact(&mut buf)
                    .map_err(|_| Error::format("PFM", "truncated pixel data"))?;
                values[row * DEPTH_SIDE + col] = f32::from_le_bytes(buf);
            }
        }
        Ok(Self::new(values))
    }
}

/// Renders an orthographic front view of a grid: rays travel along -z, the
/// pixel takes the normalized depth `(z_hit + 1) / R` of the first occupied
/// voxel (so geometry nearest the viewer is brightest), 0 if the column is
/// empty. The R x R image is upsampled to 128x128 by nearest neighbor.
pub fn render_depth(target: &OccupancyGrid) -> DepthMap {
    let r = target.resolution();
    assert!(r as usize <= DEPTH_SIDE, "resolution {r} exceeds raster side");
    let mut coarse = vec![0f32; (r * r) as usize];
    for y in 0..r {
        for x in 0..r {
            for z in (0..r).rev() {
                if target.get(x, y, z) {
                    coarse[(y * r + x) as usize] = (z + 1) as f32 / r as f32;
                    break;
                }
            }
        }
    }
    let mut values = vec![0f32; DEPTH_SIDE * DEPTH_SIDE];
    for py in 0..DEPTH_SIDE {
        // Image rows run top to bottom; grid y runs bottom to top.
        let gy = (DEPTH_SIDE - 1 - py) * r as usize / DEPTH_SIDE;
        for px in 0..DEPTH_SIDE {
            let gx = px * r as usize / DEPTH_SIDE;
            values[py * DEPTH_SIDE + px] = coarse[gy * r as usize + gx];
        }
    }
    DepthMap::new(values)
}
