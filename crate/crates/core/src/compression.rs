//! Grid-partition compression of positions into region ids.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Layout, LayoutId, Pos};

pub type RegionId = u32;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid compression: {0}")]
pub struct CompressionError(String);

/// Superimposes a grid of `cell_width` × `cell_height` blocks on the map,
/// starting at `origin`. Positions left of or above the origin fall into the
/// first column or row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressionSpec {
    pub cell_width: i32,
    pub cell_height: i32,
    #[serde(default)]
    pub origin: Pos,
}

impl CompressionSpec {
    pub fn new(cell_width: i32, cell_height: i32, origin: Pos) -> Result<Self, CompressionError> {
        let spec = Self { cell_width, cell_height, origin };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CompressionError> {
        if self.cell_width < 1 || self.cell_height < 1 {
            return Err(CompressionError(format!(
                "cell size {}x{} must be at least 1x1",
                self.cell_width, self.cell_height
            )));
        }
        Ok(())
    }

    /// 4×4 blocks starting at the first interior cell of the four-room maps.
    /// The wall column between rooms shifts the right-hand rooms off the grid,
    /// so the partition does not follow room boundaries (25 regions).
    pub fn four_rooms() -> Self {
        Self { cell_width: 4, cell_height: 4, origin: Pos::new(1, 1) }
    }

    pub fn hazard() -> Self {
        Self { cell_width: 5, cell_height: 5, origin: Pos::new(0, 0) }
    }

    pub fn for_layout(layout: LayoutId) -> Self {
        match layout {
            LayoutId::Hazard => Self::hazard(),
            _ => Self::four_rooms(),
        }
    }

    /// Number of block columns needed to cover a map of `width` cells.
    pub fn columns(&self, width: i32) -> i32 {
        let span = (width - self.origin.x).max(1);
        (span + self.cell_width - 1) / self.cell_width
    }

    pub fn compress(&self, p: Pos, width: i32) -> RegionId {
        let col = (p.x - self.origin.x).max(0) / self.cell_width;
        let row = (p.y - self.origin.y).max(0) / self.cell_height;
        (col + self.columns(width) * row) as RegionId
    }
}

/// A compression spec bound to one map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Compressor {
    pub spec: CompressionSpec,
    pub width: i32,
}

impl Compressor {
    pub fn new(spec: CompressionSpec, layout: &Layout) -> Result<Self, CompressionError> {
        spec.validate()?;
        Ok(Self { spec, width: layout.width() })
    }

    pub fn region(&self, p: Pos) -> RegionId {
        self.spec.compress(p, self.width)
    }
}
