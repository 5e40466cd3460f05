//! Energies, per-particle energy distributions and their comparison.
//!
//! Per-particle specific energy is `e_i = ½|v_i|² + ½ φ_i` with
//! `φ_i = −Σ_{j≠i} G m_j / √(r² + ε²)`. Halving the pair term makes
//! `Σ m_i e_i` equal the total energy.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::ForceResult;
use crate::par::map_range;
use crate::particles::{ParticleSystem, Vec3};

/// `φ_i` for every particle.
pub fn specific_potentials(system: &ParticleSystem, softening: f64) -> Result<Vec<f64>> {
    let eps2 = softening * softening;
    let rows = map_range(system.len(), |i| -> Result<f64> {
        let xi = &system.pos[i];
        let mut phi = 0.0;
        for j in 0..system.len() {
            if j == i {
                continue;
            }
            let xj = &system.pos[j];
            let r2 = (xj[0] - xi[0]).powi(2) + (xj[1] - xi[1]).powi(2) + (xj[2] - xi[2]).powi(2) + eps2;
            if r2 == 0.0 {
                return Err(Error::Singular(i, j));
            }
            phi -= system.mass[j] / r2.sqrt();
        }
        Ok(system.grav_const * phi)
    });
    rows.into_iter().collect()
}

pub fn kinetic_energy(system: &ParticleSystem) -> f64 {
    system
        .mass
        .iter()
        .zip(&system.vel)
        .map(|(m, v)| 0.5 * m * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]))
        .sum()
}

pub fn potential_energy(system: &ParticleSystem, softening: f64) -> Result<f64> {
    let phi = specific_potentials(system, softening)?;
    Ok(0.5 * system.mass.iter().zip(&phi).map(|(m, p)| m * p).sum::<f64>())
}

pub fn total_energy(system: &ParticleSystem, softening: f64) -> Result<f64> {
    Ok(kinetic_energy(system) + potential_energy(system, softening)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// `bins + 1` equally spaced edges spanning `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let w = (hi - lo) / bins as f64;
    (0..=bins)
        .map(|k| if k == bins { hi } else { lo + w * k as f64 })
        .collect()
}

/// Counts `values` into the bins of `edges`. Bins are half-open except the
/// last; values outside the range are counted in the end bins.
pub fn histogram(values: &[f64], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput(
            "histogram edges must be at least two strictly increasing values".into(),
        ));
    }
    let bins = edges.len() - 1;
    let mut counts = vec![0u64; bins];
    for &v in values {
        let k = edges[1..bins].partition_point(|&e| e <= v);
        counts[k] += 1;
    }
    Ok(Histogram {
        edges: edges.to_vec(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
    pub per_particle: Vec<f64>,
    pub histogram: Histogram,
}

impl EnergyReport {
    /// `2K / |W|`; 1 in virial equilibrium.
    pub fn virial_ratio(&self) -> f64 {
        2.0 * self.kinetic / self.potential.abs()
    }
}

/// Energy report with `bins` equal bins spanning the observed range.
pub fn energy_report(system: &ParticleSystem, softening: f64, bins: usize) -> Result<EnergyReport> {
    if bins == 0 {
        return Err(Error::InvalidInput("histogram needs at least one bin".into()));
    }
    let (report, lo, hi) = energies(system, softening)?;
    let edges = uniform_edges(lo, hi, bins);
    finish(report, &edges)
}

/// Energy report binned on caller-supplied edges, for comparing two datasets.
pub fn energy_report_with_edges(
    system: &ParticleSystem,
    softening: f64,
    edges: &[f64],
) -> Result<EnergyReport> {
    let (report, _, _) = energies(system, softening)?;
    finish(report, edges)
}

fn energies(system: &ParticleSystem, softening: f64) -> Result<(EnergyReport, f64, f64)> {
    let phi = specific_potentials(system, softening)?;
    let per_particle: Vec<f64> = system
        .vel
        .iter()
        .zip(&phi)
        .map(|(v, p)| 0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) + 0.5 * p)
        .collect();
    let kinetic = kinetic_energy(system);
    let potential = 0.5 * system.mass.iter().zip(&phi).map(|(m, p)| m * p).sum::<f64>();
    let lo = per_particle.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = per_particle.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let report = EnergyReport {
        kinetic,
        potential,
        total: kinetic + potential,
        per_particle,
        histogram: Histogram {
            edges: vec![],
            counts: vec![],
        },
    };
    Ok((report, lo, hi))
}

fn finish(mut report: EnergyReport, edges: &[f64]) -> Result<EnergyReport> {
    report.histogram = histogram(&report.per_particle, edges)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionComparison {
    pub max_deviation: f64,
    pub worst_bin: usize,
    pub threshold: f64,
    pub passed: bool,
}

/// Max over bins of `|c_a − c_b| / max(1, c_b)`.
pub fn compare_energy_distribution(
    a: &EnergyReport,
    b: &EnergyReport,
    threshold: f64,
) -> Result<DistributionComparison> {
    let (ha, hb) = (&a.histogram, &b.histogram);
    if ha.edges != hb.edges {
        return Err(Error::InvalidInput("energy histograms use different bin edges".into()));
    }
    let mut max_deviation = 0.0;
    let mut worst_bin = 0;
    for (k, (&ca, &cb)) in ha.counts.iter().zip(&hb.counts).enumerate() {
        let d = (ca as f64 - cb as f64).abs() / (cb.max(1) as f64);
        if d > max_deviation {
            max_deviation = d;
            worst_bin = k;
        }
    }
    Ok(DistributionComparison {
        max_deviation,
        worst_bin,
        threshold,
        passed: max_deviation <= threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deviation {
    /// `max_{i,c} |x_ic − y_ic| / |y_i|`: component error relative to the
    /// magnitude of the reference vector.
    pub relative: f64,
    /// `max_{i,c} |x_ic − y_ic| / |y_ic|`, unbounded for components near zero.
    pub componentwise: f64,
    pub worst_particle: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForceDeviation {
    pub acc: Deviation,
    pub jerk: Deviation,
}

/// Deviation of `test` from `reference`, particle by particle.
pub fn force_deviation(test: &ForceResult, reference: &ForceResult) -> Result<ForceDeviation> {
    Ok(ForceDeviation {
        acc: deviation(&test.acc, &reference.acc)?,
        jerk: deviation(&test.jerk, &reference.jerk)?,
    })
}

fn deviation(x: &[Vec3], y: &[Vec3]) -> Result<Deviation> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "comparing {} vectors against {}",
            x.len(),
            y.len()
        )));
    }
    let ratio = |d: f64, r: f64| if d == 0.0 { 0.0 } else { d / r };
    let mut out = Deviation {
        relative: 0.0,
        componentwise: 0.0,
        worst_particle: 0,
    };
    for (i, (a, b)) in x.iter().zip(y).enumerate() {
        let norm = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
        for c in 0..3 {
            let d = (a[c] - b[c]).abs();
            let rel = ratio(d, norm);
            if rel > out.relative || rel.is_nan() {
                out.relative = rel;
                out.worst_particle = i;
            }
            out.componentwise = out.componentwise.max(ratio(d, b[c].abs()));
        }
    }
    Ok(out)
}
