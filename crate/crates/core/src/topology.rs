//! Cards, chips and links; the three multi-device configurations; rank
//! decomposition and gathering; and an analytic time model.
//!
//! A card carries two chips. The L-chip talks to the host over PCIe; the
//! R-chip is reached only through the L-chip over an Ethernet link.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::device::{run_force_program, split_work_to_cores, SimChip, TransferLog, MAX_CORES};
use crate::engine::DEFAULT_CB_CAPACITY;
use crate::error::{Error, Result};
use crate::kernels::{source_tile_count, ForceResult, DEFAULT_SOFTENING, OUT_ATTRS, SRC_ATTRS, TGT_ATTRS};
use crate::particles::ParticleSystem;
use crate::tile::TILE_BYTES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalingMode {
    /// One rank per card, only the L-chip computes.
    MultiHostSingleChip,
    /// One rank per card, the rank's slice split explicitly over both chips.
    MultiHostMultiChip,
    /// Both chips of a card as a mesh device with sharded source buffers and
    /// replicated target buffers.
    MeshSharded,
}

impl ScalingMode {
    pub const ALL: [ScalingMode; 3] = [
        ScalingMode::MultiHostSingleChip,
        ScalingMode::MultiHostMultiChip,
        ScalingMode::MeshSharded,
    ];

    pub fn number(self) -> u8 {
        match self {
            ScalingMode::MultiHostSingleChip => 1,
            ScalingMode::MultiHostMultiChip => 2,
            ScalingMode::MeshSharded => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalingMode::MultiHostSingleChip => "multi-host-single-chip",
            ScalingMode::MultiHostMultiChip => "multi-host-multi-chip",
            ScalingMode::MeshSharded => "mesh-sharded",
        }
    }

    /// Chips per card that take part in the computation.
    pub fn active_chips(self) -> usize {
        match self {
            ScalingMode::MultiHostSingleChip => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for ScalingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScalingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "multi-host-single-chip" | "single-chip" => Ok(ScalingMode::MultiHostSingleChip),
            "2" | "multi-host-multi-chip" | "multi-chip" => Ok(ScalingMode::MultiHostMultiChip),
            "3" | "mesh-sharded" | "mesh" => Ok(ScalingMode::MeshSharded),
            other => Err(Error::config(
                "mode",
                format!("unknown mode `{other}`; expected 1, 2, 3 or a mode name"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    /// Bytes per second.
    pub bandwidth: f64,
    /// Seconds per transferred tile.
    pub latency: f64,
}

impl LinkParams {
    pub const PCIE: LinkParams = LinkParams {
        bandwidth: 24.0e9,
        latency: 1.0e-7,
    };
    pub const ETHERNET: LinkParams = LinkParams {
        bandwidth: 12.5e9,
        latency: 18.0e-6,
    };

    pub fn validate(&self, key: &str) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::config(&format!("{key}.bandwidth"), "must be > 0"));
        }
        if !(self.latency >= 0.0 && self.latency.is_finite()) {
            return Err(Error::config(&format!("{key}.latency"), "must be >= 0"));
        }
        Ok(())
    }

    /// Time to move `tiles` tiles.
    pub fn transfer_time(&self, tiles: f64) -> f64 {
        tiles * TILE_BYTES as f64 / self.bandwidth + tiles * self.latency
    }
}

/// Per-command dispatch overhead in seconds, by mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispatchOverhead {
    pub single_chip: f64,
    pub multi_chip: f64,
    pub mesh: f64,
}

impl Default for DispatchOverhead {
    fn default() -> Self {
        DispatchOverhead {
            single_chip: 0.0,
            multi_chip: 0.0,
            mesh: 350.0e-6,
        }
    }
}

impl DispatchOverhead {
    pub fn for_mode(&self, mode: ScalingMode) -> f64 {
        match mode {
            ScalingMode::MultiHostSingleChip => self.single_chip,
            ScalingMode::MultiHostMultiChip => self.multi_chip,
            ScalingMode::MeshSharded => self.mesh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerfParams {
    /// Source-tile × target-particle interactions per second per chip.
    pub pair_tiles_per_second: f64,
    /// Host-side predict/correct/tilize cost per particle per evaluation.
    pub host_seconds_per_particle: f64,
    pub dispatch_overhead: DispatchOverhead,
    /// Force evaluations per run: the initial one plus one per step.
    pub evaluations: usize,
}

impl Default for PerfParams {
    fn default() -> Self {
        PerfParams {
            pair_tiles_per_second: 2.3e6,
            host_seconds_per_particle: 7.2e-4,
            dispatch_overhead: DispatchOverhead::default(),
            evaluations: 4,
        }
    }
}

impl PerfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.pair_tiles_per_second > 0.0 && self.pair_tiles_per_second.is_finite()) {
            return Err(Error::config("perf.pair_tiles_per_second", "must be > 0"));
        }
        if !(self.host_seconds_per_particle >= 0.0) {
            return Err(Error::config("perf.host_seconds_per_particle", "must be >= 0"));
        }
        let d = &self.dispatch_overhead;
        for (k, v) in [("single_chip", d.single_chip), ("multi_chip", d.multi_chip), ("mesh", d.mesh)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(&format!("perf.dispatch_overhead.{k}"), "must be >= 0"));
            }
        }
        Ok(())
    }
}

/// The cluster description: what to build and how to cost it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSpec {
    pub mode: ScalingMode,
    pub cards: usize,
    /// Active chips per card; implied by the mode when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chips_per_card: Option<usize>,
    pub cores_per_chip: usize,
    /// Host worker threads per chip; 0 picks the host parallelism.
    pub workers_per_chip: usize,
    pub cb_capacity: usize,
    pub softening: f64,
    pub pcie: LinkParams,
    pub eth: LinkParams,
    pub perf: PerfParams,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec {
            mode: ScalingMode::MultiHostSingleChip,
            cards: 1,
            chips_per_card: None,
            cores_per_chip: MAX_CORES,
            workers_per_chip: 0,
            cb_capacity: DEFAULT_CB_CAPACITY,
            softening: DEFAULT_SOFTENING,
            pcie: LinkParams::PCIE,
            eth: LinkParams::ETHERNET,
            perf: PerfParams::default(),
        }
    }
}

impl ClusterSpec {
    pub fn with_mode(mode: ScalingMode, cards: usize) -> Self {
        ClusterSpec {
            mode,
            cards,
            chips_per_card: Some(mode.active_chips()),
            ..ClusterSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cards == 0 {
            return Err(Error::config("cards", "must be >= 1"));
        }
        if self.chips_per_card.is_some_and(|c| c != self.mode.active_chips()) {
            return Err(Error::config(
                "chips_per_card",
                format!(
                    "mode {} uses {} chip(s) per card, got {}",
                    self.mode,
                    self.mode.active_chips(),
                    self.chips_per_card.unwrap_or_default()
                ),
            ));
        }
        if !(1..=MAX_CORES).contains(&self.cores_per_chip) {
            return Err(Error::config("cores_per_chip", format!("must be in 1..={MAX_CORES}")));
        }
        if self.cb_capacity == 0 {
            return Err(Error::config("cb_capacity", "must be >= 1"));
        }
        if !(self.softening > 0.0 && self.softening.is_finite()) {
            return Err(Error::config("softening", "must be > 0"));
        }
        self.pcie.validate("pcie")?;
        self.eth.validate("eth")?;
        self.perf.validate()
    }

    /// Fills in values implied by others, for echoing.
    pub fn resolved(mut self) -> Self {
        self.chips_per_card = Some(self.mode.active_chips());
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ClusterSpec = toml::from_str(text).map_err(|e| crate::config::toml_error(text, &e, ""))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("cluster spec serializes")
    }
}

/// Best-effort extraction of the offending key from a serde message.
pub(crate) fn first_key(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let end = msg[start..].find('`')? + start;
    Some(msg[start..end].to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChipSide {
    L,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BufferLayout {
    /// A per-device buffer holding only what this device was sent.
    Interleaved,
    /// One shard of a buffer distributed across the mesh.
    Sharded,
    /// A complete copy on every device of the mesh.
    Replicated,
}

/// Where one slice of particles is computed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Placement {
    pub rank: usize,
    pub chip: ChipSide,
    pub range: Range<usize>,
    pub source_layout: BufferLayout,
    pub target_layout: BufferLayout,
}

/// Assigns particle ranges to devices. Ranges are in index order and
/// exactly cover `0..n`.
pub fn decompose(mode: ScalingMode, n: usize, cards: usize) -> Vec<Placement> {
    let (source_layout, target_layout) = match mode {
        ScalingMode::MeshSharded => (BufferLayout::Sharded, BufferLayout::Replicated),
        _ => (BufferLayout::Interleaved, BufferLayout::Interleaved),
    };
    let mut out = Vec::new();
    for (rank, r) in split_work_to_cores(n, cards).into_iter().enumerate() {
        let sides: &[ChipSide] = match mode {
            ScalingMode::MultiHostSingleChip => &[ChipSide::L],
            _ => &[ChipSide::L, ChipSide::R],
        };
        for (side, sub) in sides.iter().zip(split_work_to_cores(r.len(), sides.len())) {
            out.push(Placement {
                rank,
                chip: *side,
                range: r.start + sub.start..r.start + sub.end,
                source_layout,
                target_layout,
            });
        }
    }
    out
}

pub struct Card {
    pub l_chip: SimChip,
    pub r_chip: SimChip,
    pub eth_link: LinkParams,
}

impl Card {
    pub fn chip(&self, side: ChipSide) -> &SimChip {
        match side {
            ChipSide::L => &self.l_chip,
            ChipSide::R => &self.r_chip,
        }
    }
}

pub struct ClusterConfig {
    pub cards: Vec<Card>,
    pub pcie: LinkParams,
    pub mode: ScalingMode,
    pub softening: f64,
}

impl ClusterConfig {
    pub fn new(spec: &ClusterSpec) -> Result<Self> {
        spec.validate()?;
        let chip = |name: String| -> Result<SimChip> {
            let c = SimChip::new(name, spec.cores_per_chip)?.with_cb_capacity(spec.cb_capacity);
            Ok(if spec.workers_per_chip > 0 {
                c.with_workers(spec.workers_per_chip)
            } else {
                c
            })
        };
        let cards = (0..spec.cards)
            .map(|k| {
                Ok(Card {
                    l_chip: chip(format!("card{k}/L"))?,
                    r_chip: chip(format!("card{k}/R"))?,
                    eth_link: spec.eth,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ClusterConfig {
            cards,
            pcie: spec.pcie,
            mode: spec.mode,
            softening: spec.softening,
        })
    }

    pub fn ranks(&self) -> usize {
        self.cards.len()
    }

    pub fn decompose(&self, n: usize) -> Vec<Placement> {
        decompose(self.mode, n, self.ranks())
    }

    /// Sum of every chip's transfer log.
    pub fn transfer_totals(&self) -> TransferLog {
        let mut t = TransferLog::default();
        for c in &self.cards {
            t.merge(&c.l_chip.transfer_log());
            t.merge(&c.r_chip.transfer_log());
        }
        t
    }
}

fn run_placement(
    cluster: &ClusterConfig,
    system: &ParticleSystem,
    p: &Placement,
) -> Result<ForceResult> {
    let chip = cluster.cards[p.rank].chip(p.chip);
    let before = chip.transfer_log();
    let out = run_force_program(chip, system, p.range.clone(), cluster.softening).map_err(|e| {
        Error::Device {
            rank: p.rank,
            device: chip.name().to_string(),
            source: Box::new(e),
        }
    })?;
    if p.chip == ChipSide::R {
        let after = chip.transfer_log();
        let moved = (after.host_to_device_bytes - before.host_to_device_bytes)
            + (after.device_to_host_bytes - before.device_to_host_bytes);
        chip.log_chip_to_chip(moved);
    }
    Ok(out)
}

/// Runs one force evaluation across the cluster and gathers the slices in
/// index order. Ranks run concurrently; within a rank the mesh mode drives
/// both chips at once while the explicit multi-chip mode drives them in turn.
pub fn execute_evaluation(cluster: &ClusterConfig, system: &ParticleSystem) -> Result<ForceResult> {
    let placements = cluster.decompose(system.len());
    let ranks = cluster.ranks();
    let per_rank: Vec<Vec<&Placement>> = (0..ranks)
        .map(|r| placements.iter().filter(|p| p.rank == r).collect())
        .collect();
    let results: Vec<Result<Vec<ForceResult>>> = thread::scope(|s| {
        let handles: Vec<_> = per_rank
            .iter()
            .map(|mine| {
                s.spawn(move || -> Result<Vec<ForceResult>> {
                    if cluster.mode == ScalingMode::MeshSharded {
                        thread::scope(|s2| {
                            let hs: Vec<_> = mine
                                .iter()
                                .map(|p| s2.spawn(move || run_placement(cluster, system, p)))
                                .collect();
                            hs.into_iter()
                                .map(|h| h.join().expect("device thread panicked"))
                                .collect()
                        })
                    } else {
                        mine.iter().map(|p| run_placement(cluster, system, p)).collect()
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rank thread panicked"))
            .collect()
    });
    let mut out = ForceResult::default();
    for r in results {
        for part in r? {
            out.acc.extend(part.acc);
            out.jerk.extend(part.jerk);
        }
    }
    Ok(out)
}

/// Breakdown of an analytic run-time estimate, in seconds over the whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TimeEstimate {
    pub total: f64,
    pub host: f64,
    pub compute: f64,
    pub pcie: f64,
    pub ethernet: f64,
    pub dispatch: f64,
}

/// Analytic time for `perf.evaluations` force evaluations of `n` particles.
///
/// Per rank and evaluation: host work on all `n` particles, PCIe traffic of
/// every active chip on the card, Ethernet traffic of the R-chip, the slowest
/// chip's pair-tile work, and a per-tile-command dispatch overhead. The run
/// time is the slowest rank's.
pub fn estimate_time(
    mode: ScalingMode,
    n: usize,
    cluster: &ClusterSpec,
    perf: &PerfParams,
) -> Result<TimeEstimate> {
    perf.validate()?;
    cluster.pcie.validate("pcie")?;
    cluster.eth.validate("eth")?;
    if cluster.cards == 0 {
        return Err(Error::config("cards", "must be >= 1"));
    }
    let overhead = perf.dispatch_overhead.for_mode(mode);
    let mut worst = TimeEstimate::default();
    for rank in 0..cluster.cards {
        let mut est = TimeEstimate {
            host: n as f64 * perf.host_seconds_per_particle,
            ..TimeEstimate::default()
        };
        let mut commands = 0.0;
        for p in decompose(mode, n, cluster.cards).iter().filter(|p| p.rank == rank) {
            let st = source_tile_count(p.range.len()) as f64;
            let tiles = if p.range.is_empty() {
                0.0
            } else {
                (SRC_ATTRS as f64 * st + TGT_ATTRS as f64 * n as f64) + OUT_ATTRS as f64 * st
            };
            est.pcie += cluster.pcie.transfer_time(tiles);
            if p.chip == ChipSide::R {
                est.ethernet += cluster.eth.transfer_time(tiles);
            }
            est.compute = est.compute.max(st * n as f64 / perf.pair_tiles_per_second);
            commands += tiles;
        }
        est.dispatch = commands * overhead;
        est.total = est.host + est.compute + est.pcie + est.ethernet + est.dispatch;
        if est.total > worst.total {
            worst = est;
        }
    }
    let k = perf.evaluations as f64;
    Ok(TimeEstimate {
        total: worst.total * k,
        host: worst.host * k,
        compute: worst.compute * k,
        pcie: worst.pcie * k,
        ethernet: worst.ethernet * k,
        dispatch: worst.dispatch * k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(mode: ScalingMode, cards: usize, spec: &ClusterSpec) -> f64 {
        estimate_time(mode, 409_600, &ClusterSpec { cards, ..spec.clone() }, &spec.perf)
            .unwrap()
            .total
    }

    #[test]
    fn decompose_examples() {
        let p = decompose(ScalingMode::MultiHostSingleChip, 4096, 2);
        assert_eq!(p.len(), 2);
        assert_eq!((p[0].range.clone(), p[1].range.clone()), (0..2048, 2048..4096));
        assert!(p.iter().all(|p| p.chip == ChipSide::L));

        let p = decompose(ScalingMode::MultiHostMultiChip, 4096, 1);
        assert_eq!((p[0].chip, p[0].range.clone()), (ChipSide::L, 0..2048));
        assert_eq!((p[1].chip, p[1].range.clone()), (ChipSide::R, 2048..4096));

        let p = decompose(ScalingMode::MultiHostSingleChip, 409_600, 4);
        assert!(p.iter().all(|p| p.range.len() == 102_400));

        let p = decompose(ScalingMode::MeshSharded, 10, 1);
        assert!(p.iter().all(|p| p.source_layout == BufferLayout::Sharded
            && p.target_layout == BufferLayout::Replicated));
    }

    #[test]
    fn decompose_tiny_n_leaves_empty_ranges() {
        let p = decompose(ScalingMode::MeshSharded, 3, 2);
        assert_eq!(p.len(), 4);
        let lens: Vec<usize> = p.iter().map(|p| p.range.len()).collect();
        assert_eq!(lens, vec![1, 1, 1, 0]);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("2".parse::<ScalingMode>().unwrap(), ScalingMode::MultiHostMultiChip);
        assert_eq!("mesh".parse::<ScalingMode>().unwrap(), ScalingMode::MeshSharded);
        assert!(matches!("4".parse::<ScalingMode>(), Err(Error::Config { .. })));
    }

    #[test]
    fn chips_per_card_must_match_mode() {
        let mut s = ClusterSpec::with_mode(ScalingMode::MultiHostMultiChip, 1);
        s.validate().unwrap();
        s.chips_per_card = Some(1);
        assert!(matches!(s.validate(), Err(Error::Config { key, .. }) if key == "chips_per_card"));
    }

    #[test]
    fn default_ordering() {
        let s = ClusterSpec::default();
        let m1c2 = est(ScalingMode::MultiHostSingleChip, 2, &s);
        let m1c1 = est(ScalingMode::MultiHostSingleChip, 1, &s);
        let m2 = est(ScalingMode::MultiHostMultiChip, 1, &s);
        let m3 = est(ScalingMode::MeshSharded, 1, &s);
        assert!(m1c2 < m1c1 && m1c1 < m2 && m2 < m3, "{m1c2} {m1c1} {m2} {m3}");
        assert!(m3 >= 5.0 * m1c1);
        for (a, b) in [(m1c2, m1c1), (m1c1, m2)] {
            assert!(b / a >= 1.03, "{a} {b}");
        }
    }

    #[test]
    fn degenerate_links_make_modes_agree() {
        let mut s = ClusterSpec::default();
        s.eth = s.pcie;
        s.perf.dispatch_overhead.mesh = 0.0;
        let m1 = est(ScalingMode::MultiHostSingleChip, 2, &s);
        let m2 = est(ScalingMode::MultiHostMultiChip, 1, &s);
        assert!((m2 - m1).abs() / m1 <= 0.01, "{m1} {m2}");
    }

    #[test]
    fn compute_halves_with_double_devices() {
        let mut s = ClusterSpec::default();
        s.perf.host_seconds_per_particle = 0.0;
        s.pcie.latency = 0.0;
        s.pcie.bandwidth = 1e300;
        let one = estimate_time(ScalingMode::MultiHostSingleChip, 409_600, &s, &s.perf).unwrap();
        s.cards = 2;
        let two = estimate_time(ScalingMode::MultiHostSingleChip, 409_600, &s, &s.perf).unwrap();
        assert_eq!(two.compute * 2.0, one.compute);
    }

    #[test]
    fn eth_latency_monotonicity() {
        let base = ClusterSpec::default();
        let mut slow = base.clone();
        slow.eth.latency *= 10.0;
        for mode in ScalingMode::ALL {
            let a = estimate_time(mode, 50_000, &base, &base.perf).unwrap().total;
            let b = estimate_time(mode, 50_000, &slow, &slow.perf).unwrap().total;
            if mode == ScalingMode::MultiHostSingleChip {
                assert_eq!(a, b);
            } else {
                assert!(b >= a);
            }
        }
    }

    #[test]
    fn non_positive_throughput_is_an_error() {
        let mut s = ClusterSpec::default();
        s.perf.pair_tiles_per_second = 0.0;
        assert!(estimate_time(ScalingMode::MeshSharded, 10, &s, &s.perf).is_err());
    }

    #[test]
    fn cluster_toml_round_trip_and_unknown_key() {
        let s = ClusterSpec::with_mode(ScalingMode::MeshSharded, 2);
        assert_eq!(ClusterSpec::from_toml(&s.to_toml()).unwrap(), s);
        let e = ClusterSpec::from_toml("cardz = 2").unwrap_err();
        assert!(matches!(e, Error::Config { key, .. } if key == "cardz"));
    }
}
