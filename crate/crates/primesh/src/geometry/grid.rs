use std::io::{Read, Write};

use crate::error::{Error, Result};

const VOXG_MAGIC: &[u8; 4] = b"VOXG";

/// A boolean voxel field of resolution `R^3` in the canonical frame.
///
/// Cells are stored x-fastest: index = `x + R*(y + R*z)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OccupancyGrid {
    resolution: u32,
    cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(resolution: u32) -> Self {
        assert!(resolution > 0, "resolution must be positive");
        let n = (resolution as usize).pow(3);
        Self { resolution, cells: vec![false; n] }
    }

    pub fn from_cells(resolution: u32, cells: Vec<bool>) -> Self {
        assert_eq!(cells.len(), (resolution as usize).pow(3));
        Self { resolution, cells }
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32, z: u32) -> usize {
        let r = self.resolution as usize;
        x as usize + r * (y as usize + r * z as usize)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, z: u32) -> bool {
        self.cells[self.index(x, y, z)]
    }

    #[inline]
    pub fn get_index(&self, idx: usize) -> bool {
        self.cells[idx]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, z: u32, value: bool) {
        let idx = self.index(x, y, z);
        self.cells[idx] = value;
    }

    #[inline]
    pub fn set_index(&mut self, idx: usize, value: bool) {
        self.cells[idx] = value;
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }

    /// Serializes as a 16-byte header (magic, little-endian resolution, 8
    /// reserved zero bytes) followed by `R^3` occupancy bytes, x-fastest.
    pub fn write_voxg<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(VOXG_MAGIC)?;
        out.write_all(&self.resolution.to_le_bytes())?;
        out.write_all(&[0u8; 8])?;
        let bytes: Vec<u8> = self.cells.iter().map(|&c| c as u8).collect();
        out.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_voxg<R: Read>(input: &mut R) -> Result<Self> {
        let mut header = [0u8; 16];
        input.read_exact(&mut header).map_err(|_| Error::format("VOXG", "truncated header"))?;
        if &header[0..4] != VOXG_MAGIC {
            return Err(Error::format("VOXG", "bad magic"));
        }
        let resolution = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if resolution == 0 || resolution > 1024 {
            return Err(Error::format("VOXG", format!("unreasonable resolution {resolution}")));
        }
        if header[8..16].iter().any(|&b| b != 0) {
            return Err(Error::format("VOXG", "reserved bytes not zero"));
        }
        let n = (resolution as usize).pow(3);
        let mut bytes = vec![0u8; n];
        input.read_exact(&mut bytes).map_err(|_| Error::format("VOXG", "truncated cell data"))?;
        let mut cells = Vec::with_capacity(n);
        for (i, b) in bytes.iter().enumerate() {
            match b {
                0 => cells.push(false),
                1 => cells.push(true),
                other => {
                    return Err(Error::format("VOXG", format!("cell byte {other} at offset {i}")))
                }
            }
        }
        Ok(Self { resolution, cells })
    }
}

/// Volumetric intersection over union. Returns 0 when the union is empty.
pub fn iou(a: &OccupancyGrid, b: &OccupancyGrid) -> Result<f64> {
    if a.resolution != b.resolution {
        return Err(Error::ResolutionMismatch(a.resolution, b.resolution));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&ca, &cb) in a.cells.iter().zip(&b.cells) {
        inter += (ca && cb) as usize;
        union += (ca || cb) as usize;
    }
    if union == 0 {
        Ok(0.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}
