//! Device-precision tiles.
//!
//! A [`Tile`] is a 32×32 grid of `f32` lanes. Lane `k` sits at row `k / 32`,
//! column `k % 32` (row-major). All tile arithmetic is elementwise, so the
//! layout only matters for packing and unpacking particle data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TILE_DIM: usize = 32;
pub const TILE_LANES: usize = TILE_DIM * TILE_DIM;
/// Size of one packed tile in device memory.
pub const TILE_BYTES: usize = TILE_LANES * std::mem::size_of::<f32>();

#[derive(Clone)]
pub struct Tile {
    lanes: [f32; TILE_LANES],
}

impl Tile {
    pub fn zeros() -> Self {
        Self::splat(0.0)
    }

    pub fn splat(value: f32) -> Self {
        Tile {
            lanes: [value; TILE_LANES],
        }
    }

    pub fn from_fn(mut f: impl FnMut(usize) -> f32) -> Self {
        let mut tile = Tile::zeros();
        for (k, lane) in tile.lanes.iter_mut().enumerate() {
            *lane = f(k);
        }
        tile
    }

    #[inline]
    pub fn lanes(&self) -> &[f32; TILE_LANES] {
        &self.lanes
    }

    #[inline]
    pub fn lanes_mut(&mut self) -> &mut [f32; TILE_LANES] {
        &mut self.lanes
    }

    #[inline]
    pub fn lane(&self, k: usize) -> f32 {
        self.lanes[k]
    }

    /// Value at `(row, col)` under the row-major lane order.
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.lanes[row * TILE_DIM + col]
    }

    pub fn is_finite(&self) -> bool {
        self.lanes.iter().all(|v| v.is_finite())
    }

    /// Bit-pattern equality, distinguishing `-0.0` from `0.0`.
    pub fn bits_eq(&self, other: &Tile) -> bool {
        self.lanes
            .iter()
            .zip(other.lanes.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn write_le_bytes(&self, out: &mut [u8]) {
        debug_assert_eq!(out.len(), TILE_BYTES);
        for (chunk, v) in out.chunks_exact_mut(4).zip(self.lanes.iter()) {
            chunk.copy_from_slice(&v.to_le_bytes());
        }
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != TILE_BYTES {
            return Err(Error::InvalidInput(format!(
                "tile needs {TILE_BYTES} bytes, got {}",
                bytes.len()
            )));
        }
        let mut tile = Tile::zeros();
        for (lane, chunk) in tile.lanes.iter_mut().zip(bytes.chunks_exact(4)) {
            *lane = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }
        Ok(tile)
    }
}

impl PartialEq for Tile {
    fn eq(&self, other: &Self) -> bool {
        self.lanes[..] == other.lanes[..]
    }
}

impl std::fmt::Debug for Tile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let first = self.lanes[0];
        if self.lanes.iter().all(|v| v.to_bits() == first.to_bits()) {
            write!(f, "Tile(splat {first})")
        } else {
            write!(f, "Tile({:?}, ..)", &self.lanes[..4])
        }
    }
}

/// A tile holding 1024 copies of `fl32(x)`.
pub fn broadcast_scalar(x: f64) -> Result<Tile> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("broadcast_scalar({x})")));
    }
    Ok(Tile::splat(x as f32))
}

/// Packs exactly 1024 values into a column tile, lane `k` = `fl32(values[k])`.
pub fn pack_column_tile(values: &[f64]) -> Result<Tile> {
    if values.len() != TILE_LANES {
        return Err(Error::InvalidInput(format!(
            "pack_column_tile needs {TILE_LANES} values, got {}",
            values.len()
        )));
    }
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("pack_column_tile lane {k}")));
    }
    Ok(Tile::from_fn(|k| values[k] as f32))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalPrecision {
    Fp32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HostPrecision {
    Fp64,
}

/// Where each stage of a step runs numerically. Fixed by the hardware model:
/// force evaluation in FP32 on the device, everything else in FP64 on the host.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecisionPolicy {
    pub eval_precision: EvalPrecision,
    pub host_precision: HostPrecision,
}

impl Default for PrecisionPolicy {
    fn default() -> Self {
        PrecisionPolicy {
            eval_precision: EvalPrecision::Fp32,
            host_precision: HostPrecision::Fp64,
        }
    }
}
