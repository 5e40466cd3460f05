//! Circular buffers: bounded tile FIFOs with reserve/push/wait/pop semantics.
//!
//! The producer reserves space with [`CircularBuffer::reserve_back`] (blocking
//! while the buffer is too full) and then publishes exactly the reserved tiles
//! with [`CircularBuffer::push_back`]. The consumer blocks in
//! [`CircularBuffer::wait_front`] until enough tiles are visible, reads them
//! in place, and frees them with [`CircularBuffer::pop_front`].
//!
//! One producer and one consumer per buffer. [`CircularBuffer::close`] wakes
//! every blocked call with [`Error::CbClosed`] so a failing kernel cannot
//! strand its peers.

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use crate::error::{Error, Result};
use crate::tile::Tile;

/// Default depth: double buffering.
pub const DEFAULT_CB_CAPACITY: usize = 2;

/// Shared push log, used to observe cross-buffer push order in tests.
pub type PushLog = Arc<Mutex<Vec<String>>>;

struct CbState {
    queue: VecDeque<Tile>,
    reserved: usize,
    visible: usize,
    closed: bool,
    pushed_total: u64,
}

pub struct CircularBuffer {
    name: String,
    capacity: usize,
    state: Mutex<CbState>,
    changed: Condvar,
    log: Option<PushLog>,
}

impl CircularBuffer {
    pub fn new(name: impl Into<String>, capacity: usize) -> Result<Self> {
        let name = name.into();
        if capacity == 0 {
            return Err(Error::cb(&name, "capacity must be at least 1"));
        }
        Ok(CircularBuffer {
            name,
            capacity,
            state: Mutex::new(CbState {
                queue: VecDeque::with_capacity(capacity),
                reserved: 0,
                visible: 0,
                closed: false,
                pushed_total: 0,
            }),
            changed: Condvar::new(),
            log: None,
        })
    }

    /// Records `name` into `log` on every pushed tile.
    pub fn traced(mut self, log: PushLog) -> Self {
        self.log = Some(log);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn occupancy(&self) -> usize {
        self.lock().queue.len()
    }

    pub fn pushed_total(&self) -> u64 {
        self.lock().pushed_total
    }

    fn lock(&self) -> MutexGuard<'_, CbState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn check_count(&self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::cb(&self.name, "tile count must be at least 1"));
        }
        if k > self.capacity {
            return Err(Error::cb(
                &self.name,
                format!("request of {k} tiles exceeds capacity {} and would deadlock", self.capacity),
            ));
        }
        Ok(())
    }

    fn free(&self, st: &CbState) -> usize {
        self.capacity - st.queue.len() - st.reserved
    }

    /// Blocks until `k` slots are free, then reserves them for the producer.
    pub fn reserve_back(&self, k: usize) -> Result<()> {
        self.check_count(k)?;
        let mut st = self.lock();
        loop {
            if st.closed {
                return Err(Error::CbClosed(self.name.clone()));
            }
            if self.free(&st) >= k {
                st.reserved += k;
                return Ok(());
            }
            st = self.changed.wait(st).unwrap_or_else(|p| p.into_inner());
        }
    }

    /// Non-blocking reserve; `Ok(false)` when there is not enough room yet.
    pub fn try_reserve_back(&self, k: usize) -> Result<bool> {
        self.check_count(k)?;
        let mut st = self.lock();
        if st.closed {
            return Err(Error::CbClosed(self.name.clone()));
        }
        if self.free(&st) >= k {
            st.reserved += k;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Publishes tiles into previously reserved slots.
    pub fn push_back(&self, tiles: impl IntoIterator<Item = Tile>) -> Result<()> {
        let mut st = self.lock();
        let mut count = 0;
        for tile in tiles {
            if st.reserved == 0 {
                return Err(Error::cb(&self.name, "push without a matching reserve"));
            }
            st.reserved -= 1;
            st.queue.push_back(tile);
            st.pushed_total += 1;
            count += 1;
        }
        if let Some(log) = &self.log {
            let mut log = log.lock().unwrap_or_else(|p| p.into_inner());
            log.extend(std::iter::repeat_n(self.name.clone(), count));
        }
        drop(st);
        self.changed.notify_all();
        Ok(())
    }

    /// Reserve-and-push of a single tile.
    pub fn push_one(&self, tile: Tile) -> Result<()> {
        self.reserve_back(1)?;
        self.push_back(std::iter::once(tile))
    }

    /// Blocks until at least `k` tiles are visible at the front.
    pub fn wait_front(&self, k: usize) -> Result<()> {
        self.check_count(k)?;
        let mut st = self.lock();
        loop {
            if st.queue.len() >= k {
                st.visible = st.visible.max(k);
                return Ok(());
            }
            if st.closed {
                return Err(Error::CbClosed(self.name.clone()));
            }
            st = self.changed.wait(st).unwrap_or_else(|p| p.into_inner());
        }
    }

    pub fn try_wait_front(&self, k: usize) -> Result<bool> {
        self.check_count(k)?;
        let mut st = self.lock();
        if st.queue.len() >= k {
            st.visible = st.visible.max(k);
            Ok(true)
        } else if st.closed {
            Err(Error::CbClosed(self.name.clone()))
        } else {
            Ok(false)
        }
    }

    /// Copies the `i`-th waited-for tile without consuming it.
    pub fn read_front(&self, i: usize) -> Result<Tile> {
        let st = self.lock();
        if i >= st.visible {
            return Err(Error::cb(&self.name, format!("read of tile {i} before wait_front")));
        }
        Ok(st.queue[i].clone())
    }

    /// Frees `k` front tiles and returns them.
    pub fn pop_front(&self, k: usize) -> Result<Vec<Tile>> {
        let mut st = self.lock();
        if k == 0 || k > st.visible {
            return Err(Error::cb(
                &self.name,
                format!("pop of {k} tiles without a covering wait_front (waited {})", st.visible),
            ));
        }
        st.visible -= k;
        let out: Vec<Tile> = st.queue.drain(..k).collect();
        drop(st);
        self.changed.notify_all();
        Ok(out)
    }

    /// Wait-and-pop of a single tile.
    pub fn pop_one(&self) -> Result<Tile> {
        self.wait_front(1)?;
        Ok(self.pop_front(1)?.pop().expect("one tile popped"))
    }

    pub fn close(&self) {
        self.lock().closed = true;
        self.changed.notify_all();
    }
}
