//! The force pipeline: tilization, the read → compute → write kernel trio,
//! and the per-tile pairwise acceleration/jerk body.
//!
//! Source tiles are column tiles: lane `k` of source tile `i` holds particle
//! `1024 * i + k`. Targets are streamed one particle at a time as replicated
//! tiles (every lane equal). Folding all targets into a source tile yields the
//! acceleration and jerk of its 1024 particles, so each lane of each
//! accumulator sees the targets in ascending index order regardless of how
//! source tiles are spread over cores.
//!
//! The device computes `Σ m_j (...)`; the gravitational constant is applied in
//! binary64 on the host when results are untilized.

use std::ops::Range;
use std::thread;

use crate::engine::{CircularBuffer, DstRegisterFile, Operand, TileOp};
use crate::error::{Error, Result};
use crate::particles::{ParticleSystem, Vec3};
use crate::tile::{Tile, TILE_BYTES, TILE_LANES};

/// Plummer softening length.
pub const DEFAULT_SOFTENING: f64 = 1.0e-7;
/// Coordinate placed in every padding lane of the last source tile.
pub const PAD_POSITION: f64 = 1.0e6;

/// Attribute tiles per source tile: `r_x r_y r_z v_x v_y v_z`.
pub const SRC_ATTRS: usize = 6;
/// Attribute tiles per target particle: positions, velocities, weight `p_w`.
pub const TGT_ATTRS: usize = 7;
/// Accumulator tiles per source tile: `a_x a_y a_z ȧ_x ȧ_y ȧ_z`.
pub const OUT_ATTRS: usize = 6;

pub type SrcTiles = [Tile; SRC_ATTRS];
pub type TgtTiles = [Tile; TGT_ATTRS];
pub type AccumTiles = [Tile; OUT_ATTRS];

pub fn zero_accum() -> AccumTiles {
    std::array::from_fn(|_| Tile::zeros())
}

/// One column of 1024 source particles.
#[derive(Debug, Clone)]
pub struct SourceTile {
    pub attrs: SrcTiles,
    /// Masses of the source lanes; padding lanes carry 0.
    pub mass: Tile,
}

/// The replicated target stream, stored as one binary32 record per particle
/// and expanded to tiles on demand.
#[derive(Debug, Clone, Default)]
pub struct TargetStream {
    records: Vec<[f32; TGT_ATTRS]>,
}

impl TargetStream {
    pub fn from_records(records: Vec<[f32; TGT_ATTRS]>) -> Self {
        TargetStream { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[[f32; TGT_ATTRS]] {
        &self.records
    }

    /// Target tile `j` for attribute `attr`: a broadcast of the scalar.
    pub fn tile(&self, j: usize, attr: usize) -> Tile {
        Tile::splat(self.records[j][attr])
    }

    pub fn tiles(&self, j: usize) -> TgtTiles {
        std::array::from_fn(|a| self.tile(j, a))
    }
}

#[derive(Debug, Clone)]
pub struct TiledWorkload {
    /// Number of real particles packed into `source_tiles`.
    pub source_count: usize,
    pub source_tiles: Vec<SourceTile>,
    pub targets: TargetStream,
    pub softening_sq: f32,
}

impl TiledWorkload {
    pub fn num_source_tiles(&self) -> usize {
        self.source_tiles.len()
    }
}

pub fn source_tile_count(n: usize) -> usize {
    n.div_ceil(TILE_LANES)
}

fn softening_sq_f32(softening: f64) -> Result<f32> {
    let sq = (softening * softening) as f32;
    if !(softening.is_finite() && sq > 0.0 && sq.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "softening {softening} gives a non-positive binary32 ε²"
        )));
    }
    Ok(sq)
}

/// Tilizes the whole system: every particle is both a source and a target.
pub fn tilize(system: &ParticleSystem, softening: f64) -> Result<TiledWorkload> {
    tilize_slice(system, 0..system.len(), softening)
}

/// Tilizes `slice` as source tiles against the full target stream of `system`.
pub fn tilize_slice(
    system: &ParticleSystem,
    slice: Range<usize>,
    softening: f64,
) -> Result<TiledWorkload> {
    if slice.start > slice.end || slice.end > system.len() {
        return Err(Error::InvalidInput(format!(
            "slice {slice:?} outside 0..{}",
            system.len()
        )));
    }
    let softening_sq = softening_sq_f32(softening)?;
    let count = slice.len();
    let source_tiles = (0..source_tile_count(count))
        .map(|t| {
            let base = slice.start + t * TILE_LANES;
            let real = TILE_LANES.min(slice.end - base);
            let lane = |k: usize, f: &dyn Fn(usize) -> f64, pad: f64| {
                if k < real {
                    f(base + k) as f32
                } else {
                    pad as f32
                }
            };
            let attrs: SrcTiles = std::array::from_fn(|a| {
                Tile::from_fn(|k| {
                    if a < 3 {
                        lane(k, &|i| system.pos[i][a], PAD_POSITION)
                    } else {
                        lane(k, &|i| system.vel[i][a - 3], 0.0)
                    }
                })
            });
            let mass = Tile::from_fn(|k| lane(k, &|i| system.mass[i], 0.0));
            SourceTile { attrs, mass }
        })
        .collect();
    let records = (0..system.len())
        .map(|j| {
            let [x, y, z] = system.pos[j];
            let [vx, vy, vz] = system.vel[j];
            [x, y, z, vx, vy, vz, system.mass[j]].map(|v| v as f32)
        })
        .collect();
    Ok(TiledWorkload {
        source_count: count,
        source_tiles,
        targets: TargetStream { records },
        softening_sq,
    })
}

/// Reads positions and velocities back out of the source tiles.
pub fn untilize_state(workload: &TiledWorkload) -> (Vec<Vec3>, Vec<Vec3>) {
    let mut pos = Vec::with_capacity(workload.source_count);
    let mut vel = Vec::with_capacity(workload.source_count);
    for i in 0..workload.source_count {
        let (t, k) = (i / TILE_LANES, i % TILE_LANES);
        let a = &workload.source_tiles[t].attrs;
        pos.push([0, 1, 2].map(|c| a[c].lane(k) as f64));
        vel.push([3, 4, 5].map(|c| a[c].lane(k) as f64));
    }
    (pos, vel)
}

/// Acceleration and jerk for a contiguous block of particles.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForceResult {
    pub acc: Vec<Vec3>,
    pub jerk: Vec<Vec3>,
}

impl ForceResult {
    pub fn with_len(n: usize) -> Self {
        ForceResult {
            acc: vec![[0.0; 3]; n],
            jerk: vec![[0.0; 3]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.acc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.acc.is_empty()
    }

    /// Bitwise equality of every component.
    pub fn bits_eq(&self, other: &ForceResult) -> bool {
        fn same(a: &[Vec3], b: &[Vec3]) -> bool {
            a.len() == b.len()
                && a.iter()
                    .zip(b)
                    .all(|(x, y)| (0..3).all(|k| x[k].to_bits() == y[k].to_bits()))
        }
        same(&self.acc, &other.acc) && same(&self.jerk, &other.jerk)
    }
}

/// Untilizes accumulator tiles (`OUT_ATTRS` per source tile, tile-major).
pub fn untilize_forces(tiles: &[AccumTiles], count: usize, grav_const: f64) -> ForceResult {
    let mut out = ForceResult::with_len(count);
    for i in 0..count {
        let (t, k) = (i / TILE_LANES, i % TILE_LANES);
        for c in 0..3 {
            out.acc[i][c] = tiles[t][c].lane(k) as f64 * grav_const;
            out.jerk[i][c] = tiles[t][3 + c].lane(k) as f64 * grav_const;
        }
    }
    out
}

/// Same as [`untilize_forces`] but straight from a packed device buffer.
pub fn untilize_result_bytes(bytes: &[u8], count: usize, grav_const: f64) -> Result<ForceResult> {
    let tiles = source_tile_count(count);
    let need = tiles * OUT_ATTRS * TILE_BYTES;
    if bytes.len() < need {
        return Err(Error::BufferTooSmall {
            need,
            have: bytes.len(),
        });
    }
    let groups = (0..tiles)
        .map(|t| {
            let mut g = zero_accum();
            for (a, tile) in g.iter_mut().enumerate() {
                let off = (t * OUT_ATTRS + a) * TILE_BYTES;
                *tile = Tile::from_le_bytes(&bytes[off..off + TILE_BYTES])?;
            }
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(untilize_forces(&groups, count, grav_const))
}

/// The compute core state used by [`PairEngine::compute_pair_tile`]: the dst
/// register file, the two intermediate staging buffers, and constant tiles.
pub struct PairEngine {
    dst: DstRegisterFile,
    /// Staged displacement components `r_x,ij r_y,ij r_z,ij`.
    cb_disp: CircularBuffer,
    /// Staged scaling coefficients `t_j q_ij`.
    cb_coef: CircularBuffer,
    softening_sq: Tile,
    minus_three: Tile,
}

impl PairEngine {
    pub fn new(softening_sq: f32) -> Result<Self> {
        if !(softening_sq > 0.0 && softening_sq.is_finite()) {
            return Err(Error::InvalidInput(format!("softening_sq {softening_sq} must be > 0")));
        }
        Ok(PairEngine {
            dst: DstRegisterFile::new(),
            cb_disp: CircularBuffer::new("cb_disp", 3)?,
            cb_coef: CircularBuffer::new("cb_coef", 2)?,
            softening_sq: Tile::splat(softening_sq),
            minus_three: Tile::splat(-3.0),
        })
    }

    /// Accumulates the interaction of one replicated target into `accum`.
    ///
    /// Per lane, with `r = r_j - r_i` and `v = v_j - v_i`:
    /// `r⁻¹ = rsqrt(|r|² + ε²)`, `t = p_w r⁻³`, `q = -3 r⁻² (r·v)`,
    /// `a += t r`, `ȧ += t (v + q r)`. Every step rounds to binary32.
    pub fn compute_pair_tile(
        &mut self,
        src: &SrcTiles,
        tgt: &TgtTiles,
        accum: &mut AccumTiles,
    ) -> Result<()> {
        use Operand::{Slot, Tile as T};
        let dst = &mut self.dst;

        // displacement
        dst.acquire()?;
        for c in 0..3 {
            dst.compute(c, TileOp::Sub, &[T(&tgt[c]), T(&src[c])])?;
        }
        self.cb_disp.reserve_back(3)?;
        self.cb_disp
            .push_back((0..3).map(|c| dst.get(c).cloned()).collect::<Result<Vec<_>>>()?)?;
        dst.release()?;

        // distance metrics and scaling coefficients
        dst.acquire()?;
        self.cb_disp.wait_front(3)?;
        let r: [Tile; 3] = [
            self.cb_disp.read_front(0)?,
            self.cb_disp.read_front(1)?,
            self.cb_disp.read_front(2)?,
        ];
        for c in 0..3 {
            dst.copy_tile(c, &r[c])?;
        }
        dst.compute(3, TileOp::Square, &[Slot(0)])?;
        dst.compute(3, TileOp::MulAdd, &[Slot(1), Slot(1), Slot(3)])?;
        dst.compute(3, TileOp::MulAdd, &[Slot(2), Slot(2), Slot(3)])?;
        dst.compute(3, TileOp::Add, &[Slot(3), T(&self.softening_sq)])?;
        dst.compute(3, TileOp::Rsqrt, &[Slot(3)])?;
        dst.compute(4, TileOp::Square, &[Slot(3)])?;
        dst.compute(5, TileOp::Mul, &[Slot(4), Slot(3)])?;
        dst.compute(6, TileOp::Mul, &[T(&tgt[6]), Slot(5)])?;
        dst.compute(4, TileOp::Mul, &[Slot(4), T(&self.minus_three)])?;
        dst.compute(3, TileOp::Sub, &[T(&tgt[3]), T(&src[3])])?;
        dst.compute(7, TileOp::Mul, &[Slot(0), Slot(3)])?;
        dst.compute(3, TileOp::Sub, &[T(&tgt[4]), T(&src[4])])?;
        dst.compute(7, TileOp::MulAdd, &[Slot(1), Slot(3), Slot(7)])?;
        dst.compute(3, TileOp::Sub, &[T(&tgt[5]), T(&src[5])])?;
        dst.compute(7, TileOp::MulAdd, &[Slot(2), Slot(3), Slot(7)])?;
        dst.compute(4, TileOp::Mul, &[Slot(4), Slot(7)])?;
        let (t, q) = (dst.get(6)?, dst.get(4)?);
        if !t.is_finite() || !q.is_finite() {
            return Err(Error::NonFinite("t_j or q_ij; check the softening length".into()));
        }
        self.cb_coef.reserve_back(2)?;
        self.cb_coef.push_back([t.clone(), q.clone()])?;
        dst.release()?;

        // acceleration
        dst.acquire()?;
        self.cb_coef.wait_front(2)?;
        let t = self.cb_coef.read_front(0)?;
        let q = self.cb_coef.read_front(1)?;
        for c in 0..3 {
            dst.copy_tile(c, &accum[c])?;
            dst.compute(c, TileOp::MulAdd, &[T(&t), T(&r[c]), Slot(c)])?;
            accum[c].clone_from(dst.get(c)?);
        }
        dst.release()?;

        // jerk
        dst.acquire()?;
        for c in 0..3 {
            dst.compute(c, TileOp::Sub, &[T(&tgt[3 + c]), T(&src[3 + c])])?;
            dst.compute(c, TileOp::MulAdd, &[T(&q), T(&r[c]), Slot(c)])?;
            dst.copy_tile(3 + c, &accum[3 + c])?;
            dst.compute(3 + c, TileOp::MulAdd, &[T(&t), Slot(c), Slot(3 + c)])?;
            accum[3 + c].clone_from(dst.get(3 + c)?);
        }
        dst.release()?;
        self.cb_disp.pop_front(3)?;
        self.cb_coef.pop_front(2)?;

        if accum.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("acceleration/jerk accumulator".into()));
        }
        Ok(())
    }
}

/// One-shot form of [`PairEngine::compute_pair_tile`].
pub fn compute_pair_tile(
    src: &SrcTiles,
    tgt: &TgtTiles,
    accum: &mut AccumTiles,
    softening_sq: f32,
) -> Result<()> {
    PairEngine::new(softening_sq)?.compute_pair_tile(src, tgt, accum)
}

fn expect_len(cbs: &[CircularBuffer], n: usize, role: &str) -> Result<()> {
    if cbs.len() != n {
        return Err(Error::InvalidInput(format!(
            "{role} needs {n} circular buffers, got {}",
            cbs.len()
        )));
    }
    Ok(())
}

/// Streams source tiles in `core_range`, each followed by the full
/// replicated target stream.
pub fn read_kernel(
    workload: &TiledWorkload,
    core_range: Range<usize>,
    cb_src: &[CircularBuffer],
    cb_tgt: &[CircularBuffer],
) -> Result<()> {
    expect_len(cb_src, SRC_ATTRS, "read_kernel source")?;
    expect_len(cb_tgt, TGT_ATTRS, "read_kernel target")?;
    if core_range.end > workload.num_source_tiles() {
        return Err(Error::InvalidInput(format!(
            "core range {core_range:?} beyond {} source tiles",
            workload.num_source_tiles()
        )));
    }
    for i in core_range {
        for cb in cb_src {
            cb.reserve_back(1)?;
        }
        let src = &workload.source_tiles[i].attrs;
        for (cb, tile) in cb_src.iter().zip(src) {
            cb.push_back([tile.clone()])?;
        }
        for j in 0..workload.targets.len() {
            for cb in cb_tgt {
                cb.reserve_back(1)?;
            }
            for (a, cb) in cb_tgt.iter().enumerate() {
                cb.push_back([workload.targets.tile(j, a)])?;
            }
        }
    }
    Ok(())
}

fn pop_group<const N: usize>(cbs: &[CircularBuffer]) -> Result<[Tile; N]> {
    for cb in cbs {
        cb.wait_front(1)?;
    }
    let mut out: [Tile; N] = std::array::from_fn(|_| Tile::zeros());
    for (slot, cb) in out.iter_mut().zip(cbs) {
        *slot = cb.pop_front(1)?.pop().expect("one tile");
    }
    Ok(out)
}

/// Folds every target into each incoming source tile and emits the six
/// accumulator tiles per source tile.
pub fn compute_kernel(
    cb_src: &[CircularBuffer],
    cb_tgt: &[CircularBuffer],
    cb_out: &[CircularBuffer],
    num_source_tiles: usize,
    num_targets: usize,
    softening_sq: f32,
) -> Result<()> {
    expect_len(cb_src, SRC_ATTRS, "compute_kernel source")?;
    expect_len(cb_tgt, TGT_ATTRS, "compute_kernel target")?;
    expect_len(cb_out, OUT_ATTRS, "compute_kernel output")?;
    let mut engine = PairEngine::new(softening_sq)?;
    for _ in 0..num_source_tiles {
        for cb in cb_src {
            cb.wait_front(1)?;
        }
        let mut src: SrcTiles = std::array::from_fn(|_| Tile::zeros());
        for (o, cb) in src.iter_mut().zip(cb_src) {
            *o = cb.read_front(0)?;
        }
        for cb in cb_out {
            cb.reserve_back(1)?;
        }
        let mut accum = zero_accum();
        for _ in 0..num_targets {
            let tgt: TgtTiles = pop_group::<TGT_ATTRS>(cb_tgt)?;
            engine.compute_pair_tile(&src, &tgt, &mut accum)?;
        }
        for cb in cb_src {
            cb.pop_front(1)?;
        }
        for (cb, tile) in cb_out.iter().zip(accum) {
            cb.push_back([tile])?;
        }
    }
    Ok(())
}

/// Drains `num_tiles` accumulator groups into `result`, group `g` at byte
/// offset `g * OUT_ATTRS * TILE_BYTES`.
pub fn write_kernel(cb_out: &[CircularBuffer], num_tiles: usize, result: &mut [u8]) -> Result<()> {
    expect_len(cb_out, OUT_ATTRS, "write_kernel")?;
    let need = num_tiles * OUT_ATTRS * TILE_BYTES;
    if result.len() < need {
        return Err(Error::BufferTooSmall {
            need,
            have: result.len(),
        });
    }
    for g in 0..num_tiles {
        let group: AccumTiles = pop_group::<OUT_ATTRS>(cb_out)?;
        for (a, tile) in group.iter().enumerate() {
            let off = (g * OUT_ATTRS + a) * TILE_BYTES;
            tile.write_le_bytes(&mut result[off..off + TILE_BYTES]);
        }
    }
    Ok(())
}

/// The per-core circular buffers: read → compute and compute → write.
pub struct CoreBuffers {
    pub src: Vec<CircularBuffer>,
    pub tgt: Vec<CircularBuffer>,
    pub out: Vec<CircularBuffer>,
}

impl CoreBuffers {
    pub fn new(capacity: usize) -> Result<Self> {
        let make = |prefix: &str, n: usize| {
            (0..n)
                .map(|a| CircularBuffer::new(format!("{prefix}{a}"), capacity))
                .collect::<Result<Vec<_>>>()
        };
        Ok(CoreBuffers {
            src: make("cb_src", SRC_ATTRS)?,
            tgt: make("cb_tgt", TGT_ATTRS)?,
            out: make("cb_out", OUT_ATTRS)?,
        })
    }

    pub fn close_all(&self) {
        self.src
            .iter()
            .chain(&self.tgt)
            .chain(&self.out)
            .for_each(CircularBuffer::close);
    }
}

/// Runs the three kernels of one core concurrently; `result` receives the
/// accumulator groups of `core_range` starting at offset 0.
pub fn run_core_pipeline(
    workload: &TiledWorkload,
    core_range: Range<usize>,
    result: &mut [u8],
    cb_capacity: usize,
) -> Result<()> {
    let bufs = CoreBuffers::new(cb_capacity)?;
    let tiles = core_range.len();
    let guard = |r: Result<()>| {
        if r.is_err() {
            bufs.close_all();
        }
        r
    };
    let (read, compute, write) = thread::scope(|s| {
        let reader = s.spawn(|| guard(read_kernel(workload, core_range.clone(), &bufs.src, &bufs.tgt)));
        let writer = s.spawn(|| guard(write_kernel(&bufs.out, tiles, result)));
        let compute = guard(compute_kernel(
            &bufs.src,
            &bufs.tgt,
            &bufs.out,
            tiles,
            workload.targets.len(),
            workload.softening_sq,
        ));
        let read = reader.join().unwrap_or_else(|_| Err(Error::InvalidInput("read kernel panicked".into())));
        let write = writer.join().unwrap_or_else(|_| Err(Error::InvalidInput("write kernel panicked".into())));
        (read, compute, write)
    });
    // Report the originating failure, not the CbClosed fallout in the peers.
    let mut errs: Vec<Error> = [read, compute, write].into_iter().filter_map(Result::err).collect();
    if errs.is_empty() {
        return Ok(());
    }
    let first = errs
        .iter()
        .position(|e| !matches!(e, Error::CbClosed(_)))
        .unwrap_or(0);
    Err(errs.swap_remove(first))
}

/// Folds targets into source tiles in `range` without the kernel threads.
/// Same arithmetic, same order as the pipeline.
pub fn evaluate_serial(workload: &TiledWorkload, range: Range<usize>) -> Result<Vec<AccumTiles>> {
    let mut engine = PairEngine::new(workload.softening_sq)?;
    range
        .map(|i| {
            let src = &workload.source_tiles[i].attrs;
            let mut accum = zero_accum();
            for j in 0..workload.targets.len() {
                engine.compute_pair_tile(src, &workload.targets.tiles(j), &mut accum)?;
            }
            Ok(accum)
        })
        .collect()
}
