use crate::engine::ops::{apply_into, TileOp};
use crate::error::{Error, Result};
use crate::tile::Tile;

pub const DST_SLOTS: usize = 8;

/// Operand for a dst-register computation: another slot, or a tile that
/// lives outside the register file (an input page or a constant).
#[derive(Clone, Copy)]
pub enum Operand<'a> {
    Slot(usize),
    Tile(&'a Tile),
}

/// The 8-slot destination register file of one compute core.
///
/// Slots are writable only between [`acquire`](Self::acquire) and
/// [`release`](Self::release). Staged tiles stay readable after release and
/// are cleared by the next acquire.
pub struct DstRegisterFile {
    slots: Vec<Option<Tile>>,
    scratch: Tile,
    acquired: bool,
}

impl Default for DstRegisterFile {
    fn default() -> Self {
        Self::new()
    }
}

impl DstRegisterFile {
    pub fn new() -> Self {
        DstRegisterFile {
            slots: (0..DST_SLOTS).map(|_| None).collect(),
            scratch: Tile::zeros(),
            acquired: false,
        }
    }

    pub fn is_acquired(&self) -> bool {
        self.acquired
    }

    pub fn acquire(&mut self) -> Result<()> {
        if self.acquired {
            return Err(Error::DstProtocol("acquire while already acquired".into()));
        }
        self.slots.iter_mut().for_each(|s| *s = None);
        self.acquired = true;
        Ok(())
    }

    pub fn release(&mut self) -> Result<()> {
        if !self.acquired {
            return Err(Error::DstProtocol("release without acquire".into()));
        }
        self.acquired = false;
        Ok(())
    }

    pub fn resident(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    fn check_write(&self, slot: usize) -> Result<()> {
        if !self.acquired {
            return Err(Error::DstProtocol(format!("write to slot {slot} without acquire")));
        }
        if slot >= DST_SLOTS {
            return Err(Error::DstProtocol(format!(
                "slot {slot} out of range; the register file holds {DST_SLOTS} tiles"
            )));
        }
        Ok(())
    }

    /// Unpacks `tile` into `slot`.
    pub fn copy_tile(&mut self, slot: usize, tile: &Tile) -> Result<()> {
        self.check_write(slot)?;
        match &mut self.slots[slot] {
            Some(t) => t.clone_from(tile),
            s @ None => *s = Some(tile.clone()),
        }
        Ok(())
    }

    pub fn get(&self, slot: usize) -> Result<&Tile> {
        slot_ref(&self.slots, slot)
    }

    /// Computes `op` over `operands` and stores the result in `out`.
    /// `out` may also appear among the operands.
    pub fn compute(&mut self, out: usize, op: TileOp, operands: &[Operand<'_>]) -> Result<()> {
        self.check_write(out)?;
        let slots = &self.slots;
        let refs = operands
            .iter()
            .map(|o| match *o {
                Operand::Tile(t) => Ok(t),
                Operand::Slot(s) => slot_ref(slots, s),
            })
            .collect::<Result<Vec<&Tile>>>()?;
        apply_into(op, &refs, &mut self.scratch)?;
        match &mut self.slots[out] {
            Some(t) => std::mem::swap(t, &mut self.scratch),
            s @ None => *s = Some(self.scratch.clone()),
        }
        Ok(())
    }
}

fn slot_ref(slots: &[Option<Tile>], slot: usize) -> Result<&Tile> {
    slots
        .get(slot)
        .and_then(|s| s.as_ref())
        .ok_or_else(|| Error::DstProtocol(format!("slot {slot} is empty")))
}
