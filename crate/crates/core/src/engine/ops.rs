//! Elementwise tile arithmetic with binary32 round-to-nearest per operation.

use crate::error::{Error, Result};
use crate::tile::Tile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TileOp {
    Sub,
    Add,
    Mul,
    Square,
    Rsqrt,
    /// `fl32(fl32(a * b) + c)`; two roundings, not a fused multiply-add.
    MulAdd,
}

impl TileOp {
    pub fn arity(self) -> usize {
        match self {
            TileOp::Square | TileOp::Rsqrt => 1,
            TileOp::Sub | TileOp::Add | TileOp::Mul => 2,
            TileOp::MulAdd => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TileOp::Sub => "sub",
            TileOp::Add => "add",
            TileOp::Mul => "mul",
            TileOp::Square => "square",
            TileOp::Rsqrt => "rsqrt",
            TileOp::MulAdd => "mul_add",
        }
    }
}

/// `fl32(1 / sqrt(x))`, correctly rounded via a binary64 intermediate.
#[inline]
pub fn rsqrt_f32(x: f32) -> f32 {
    (1.0 / f64::from(x).sqrt()) as f32
}

/// Applies `op` lane by lane. `b` is `a - b` for [`TileOp::Sub`].
pub fn tile_elementwise(op: TileOp, operands: &[&Tile]) -> Result<Tile> {
    let mut out = Tile::zeros();
    apply_into(op, operands, &mut out)?;
    Ok(out)
}

pub(crate) fn apply_into(op: TileOp, operands: &[&Tile], out: &mut Tile) -> Result<()> {
    if operands.len() != op.arity() {
        return Err(Error::Arity {
            op: op.name(),
            expected: op.arity(),
            got: operands.len(),
        });
    }
    let o = out.lanes_mut();
    match op {
        TileOp::Sub => zip2(o, operands[0], operands[1], |a, b| a - b),
        TileOp::Add => zip2(o, operands[0], operands[1], |a, b| a + b),
        TileOp::Mul => zip2(o, operands[0], operands[1], |a, b| a * b),
        TileOp::Square => {
            for (r, a) in o.iter_mut().zip(operands[0].lanes()) {
                *r = a * a;
            }
        }
        TileOp::Rsqrt => {
            let a = operands[0].lanes();
            if let Some(lane) = a.iter().position(|&v| v < 0.0) {
                return Err(Error::NegativeRsqrt {
                    lane,
                    value: a[lane],
                });
            }
            for (r, &v) in o.iter_mut().zip(a) {
                *r = rsqrt_f32(v);
            }
        }
        TileOp::MulAdd => {
            let (a, b, c) = (operands[0].lanes(), operands[1].lanes(), operands[2].lanes());
            for k in 0..o.len() {
                let prod = a[k] * b[k];
                o[k] = prod + c[k];
            }
        }
    }
    Ok(())
}

#[inline]
fn zip2(o: &mut [f32], a: &Tile, b: &Tile, f: impl Fn(f32, f32) -> f32) {
    for ((r, &x), &y) in o.iter_mut().zip(a.lanes()).zip(b.lanes()) {
        *r = f(x, y);
    }
}
