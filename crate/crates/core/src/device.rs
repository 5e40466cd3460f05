//! A simulated accelerator chip: a grid of cores running the kernel pipeline,
//! device DRAM buffers, and host↔device transfers.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::Serialize;

use crate::engine::DEFAULT_CB_CAPACITY;
use crate::error::{Error, Result};
use crate::kernels::{
    run_core_pipeline, tilize_slice, untilize_result_bytes, ForceResult, SourceTile, TargetStream,
    TiledWorkload, OUT_ATTRS, SRC_ATTRS, TGT_ATTRS,
};
use crate::particles::ParticleSystem;
use crate::tile::{Tile, TILE_BYTES};

pub const MAX_CORES: usize = 64;

pub const SRC_BUFFER: &str = "src";
pub const TGT_BUFFER: &str = "tgt";
pub const RESULT_BUFFER: &str = "result";

/// Bytes and commands moved to and from one chip.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TransferLog {
    pub host_to_device_bytes: u64,
    pub device_to_host_bytes: u64,
    /// Bytes that reached this chip over a chip-to-chip link.
    pub chip_to_chip_bytes: u64,
    pub write_commands: u64,
    pub read_commands: u64,
}

impl TransferLog {
    pub fn merge(&mut self, other: &TransferLog) {
        self.host_to_device_bytes += other.host_to_device_bytes;
        self.device_to_host_bytes += other.device_to_host_bytes;
        self.chip_to_chip_bytes += other.chip_to_chip_bytes;
        self.write_commands += other.write_commands;
        self.read_commands += other.read_commands;
    }
}

#[derive(Debug)]
enum Payload {
    Bytes(Vec<u8>),
    /// One scalar record per replicated tile group, expanded on demand.
    Replicated(Vec<[f32; TGT_ATTRS]>),
}

impl Payload {
    fn logical_len(&self) -> usize {
        match self {
            Payload::Bytes(b) => b.len(),
            Payload::Replicated(r) => r.len() * TGT_ATTRS * TILE_BYTES,
        }
    }
}

#[derive(Debug)]
struct DeviceBuffer {
    size: usize,
    data: Option<Payload>,
}

pub struct SimChip {
    name: String,
    core_count: usize,
    workers: usize,
    cb_capacity: usize,
    dram: Mutex<HashMap<String, DeviceBuffer>>,
    pending: Mutex<Vec<(String, Payload)>>,
    log: Mutex<TransferLog>,
}

fn host_parallelism() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

impl SimChip {
    pub fn new(name: impl Into<String>, core_count: usize) -> Result<Self> {
        if !(1..=MAX_CORES).contains(&core_count) {
            return Err(Error::InvalidInput(format!(
                "core_count {core_count} outside 1..={MAX_CORES}"
            )));
        }
        Ok(SimChip {
            name: name.into(),
            core_count,
            workers: host_parallelism(),
            cb_capacity: DEFAULT_CB_CAPACITY,
            dram: Mutex::new(HashMap::new()),
            pending: Mutex::new(Vec::new()),
            log: Mutex::new(TransferLog::default()),
        })
    }

    /// Size of the host worker pool the logical cores multiplex onto.
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn with_cb_capacity(mut self, capacity: usize) -> Self {
        self.cb_capacity = capacity;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn core_count(&self) -> usize {
        self.core_count
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn transfer_log(&self) -> TransferLog {
        *self.log.lock().unwrap()
    }

    pub fn reset_transfer_log(&self) {
        *self.log.lock().unwrap() = TransferLog::default();
    }

    pub(crate) fn log_chip_to_chip(&self, bytes: u64) {
        self.log.lock().unwrap().chip_to_chip_bytes += bytes;
    }

    /// Allocates (or resizes and clears) a device buffer of `size` bytes.
    pub fn create_buffer(&self, key: &str, size: usize) {
        self.dram.lock().unwrap().insert(
            key.to_string(),
            DeviceBuffer { size, data: None },
        );
    }

    fn enqueue(&self, key: &str, payload: Payload) -> Result<()> {
        let len = payload.logical_len();
        let size = self
            .dram
            .lock()
            .unwrap()
            .get(key)
            .map(|b| b.size)
            .ok_or_else(|| Error::MissingBuffer(key.to_string()))?;
        if len != size {
            return Err(Error::InvalidInput(format!(
                "write of {len} bytes into buffer `{key}` of {size} bytes"
            )));
        }
        {
            let mut log = self.log.lock().unwrap();
            log.host_to_device_bytes += len as u64;
            log.write_commands += 1;
        }
        self.pending.lock().unwrap().push((key.to_string(), payload));
        Ok(())
    }

    /// Queues an asynchronous write; it lands at the next [`fence`](Self::fence).
    pub fn enqueue_write_buffer(&self, key: &str, bytes: Vec<u8>) -> Result<()> {
        self.enqueue(key, Payload::Bytes(bytes))
    }

    /// Queues a replicated write: each record stands for `TGT_ATTRS`
    /// broadcast tiles and is logged at full tile size.
    pub fn enqueue_write_replicated(&self, key: &str, records: Vec<[f32; TGT_ATTRS]>) -> Result<()> {
        self.enqueue(key, Payload::Replicated(records))
    }

    /// Completes every queued write in enqueue order.
    pub fn fence(&self) {
        let pending = std::mem::take(&mut *self.pending.lock().unwrap());
        let mut dram = self.dram.lock().unwrap();
        for (key, payload) in pending {
            if let Some(buf) = dram.get_mut(&key) {
                buf.data = Some(payload);
            }
        }
    }

    /// Fences, then returns the full contents of `key`.
    pub fn enqueue_read_buffer(&self, key: &str) -> Result<Vec<u8>> {
        self.fence();
        let dram = self.dram.lock().unwrap();
        let bytes = match dram.get(key).and_then(|b| b.data.as_ref()) {
            Some(Payload::Bytes(b)) => b.clone(),
            Some(Payload::Replicated(_)) => {
                return Err(Error::InvalidInput(format!(
                    "buffer `{key}` is replicated and not host-readable"
                )))
            }
            None => return Err(Error::MissingBuffer(key.to_string())),
        };
        drop(dram);
        let mut log = self.log.lock().unwrap();
        log.device_to_host_bytes += bytes.len() as u64;
        log.read_commands += 1;
        Ok(bytes)
    }

    fn load_workload(&self, source_count: usize, softening_sq: f32) -> Result<TiledWorkload> {
        self.fence();
        let dram = self.dram.lock().unwrap();
        let src = match dram.get(SRC_BUFFER).and_then(|b| b.data.as_ref()) {
            Some(Payload::Bytes(b)) => b,
            _ => return Err(Error::MissingBuffer(SRC_BUFFER.into())),
        };
        let tgt = match dram.get(TGT_BUFFER).and_then(|b| b.data.as_ref()) {
            Some(Payload::Replicated(r)) => r.clone(),
            _ => return Err(Error::MissingBuffer(TGT_BUFFER.into())),
        };
        let source_tiles = src
            .chunks_exact(SRC_ATTRS * TILE_BYTES)
            .map(|group| {
                let mut attrs: [Tile; SRC_ATTRS] = std::array::from_fn(|_| Tile::zeros());
                for (a, t) in attrs.iter_mut().enumerate() {
                    *t = Tile::from_le_bytes(&group[a * TILE_BYTES..(a + 1) * TILE_BYTES])?;
                }
                // Masses travel in the target records; the kernels never read them here.
                Ok(SourceTile {
                    attrs,
                    mass: Tile::zeros(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TiledWorkload {
            source_count,
            source_tiles,
            targets: TargetStream::from_records(tgt),
            softening_sq,
        })
    }
}

/// Contiguous per-core ranges over `num_tiles`; the first
/// `num_tiles % num_cores` cores get one extra tile.
pub fn split_work_to_cores(num_tiles: usize, num_cores: usize) -> Vec<Range<usize>> {
    let num_cores = num_cores.max(1);
    let (base, extra) = (num_tiles / num_cores, num_tiles % num_cores);
    let mut start = 0;
    (0..num_cores)
        .map(|c| {
            let len = base + usize::from(c < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Computes acceleration and jerk of `slice` against all of `system`.
pub fn run_force_program(
    chip: &SimChip,
    system: &ParticleSystem,
    slice: Range<usize>,
    softening: f64,
) -> Result<ForceResult> {
    let host = tilize_slice(system, slice.clone(), softening)?;
    if slice.is_empty() {
        return Ok(ForceResult::default());
    }
    let tiles = host.num_source_tiles();
    let group_bytes = OUT_ATTRS * TILE_BYTES;

    let mut src_bytes = vec![0u8; tiles * SRC_ATTRS * TILE_BYTES];
    for (i, st) in host.source_tiles.iter().enumerate() {
        for (a, t) in st.attrs.iter().enumerate() {
            let off = (i * SRC_ATTRS + a) * TILE_BYTES;
            t.write_le_bytes(&mut src_bytes[off..off + TILE_BYTES]);
        }
    }
    chip.create_buffer(SRC_BUFFER, src_bytes.len());
    chip.create_buffer(TGT_BUFFER, host.targets.len() * TGT_ATTRS * TILE_BYTES);
    chip.create_buffer(RESULT_BUFFER, tiles * group_bytes);
    chip.enqueue_write_buffer(SRC_BUFFER, src_bytes)?;
    chip.enqueue_write_replicated(TGT_BUFFER, host.targets.records().to_vec())?;

    let workload = chip.load_workload(host.source_count, host.softening_sq)?;
    let mut result = vec![0u8; tiles * group_bytes];
    let ranges = split_work_to_cores(tiles, chip.core_count);
    let mut jobs = Vec::new();
    let mut rest: &mut [u8] = &mut result;
    for (core, range) in ranges.into_iter().enumerate() {
        let (mine, tail) = rest.split_at_mut(range.len() * group_bytes);
        rest = tail;
        if !range.is_empty() {
            jobs.push(Mutex::new(Some((core, range, mine))));
        }
    }
    let next = AtomicUsize::new(0);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let workers = chip.workers.min(jobs.len()).max(1);
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(k) else { break };
                if failure.lock().unwrap().is_some() {
                    break;
                }
                let (core, range, region) = job.lock().unwrap().take().expect("job taken once");
                if let Err(e) = run_core_pipeline(&workload, range, region, chip.cb_capacity) {
                    failure.lock().unwrap().get_or_insert(Error::Core {
                        core,
                        source: Box::new(e),
                    });
                    break;
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    chip.enqueue_write_device(RESULT_BUFFER, result);
    let bytes = chip.enqueue_read_buffer(RESULT_BUFFER)?;
    untilize_result_bytes(&bytes, slice.len(), system.grav_const)
}

impl SimChip {
    /// Kernel-side write: lands in DRAM directly and is not a host transfer.
    fn enqueue_write_device(&self, key: &str, bytes: Vec<u8>) {
        if let Some(buf) = self.dram.lock().unwrap().get_mut(key) {
            buf.data = Some(Payload::Bytes(bytes));
        }
    }
}
