//! Strong-scaling tables, per-run measurements, aggregated bench reports and
//! a synthetic power model for simulated runs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bench::power::{channel_energy, total_power};
use crate::bench::trace::{Channel, EnergyTrace, Window};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub ranks: usize,
    pub time: f64,
    pub speedup: f64,
    pub efficiency: f64,
}

/// Speedup `T(1)/T(k)` and efficiency `speedup/k` for every run.
pub fn scaling_report(runs: &[(usize, f64)]) -> Result<Vec<ScalingRow>> {
    if let Some(&(k, t)) = runs.iter().find(|&&(k, t)| k == 0 || !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidInput(format!("invalid scaling run ({k} ranks, {t} s)")));
    }
    let base = runs
        .iter()
        .find(|r| r.0 == 1)
        .map(|r| r.1)
        .ok_or_else(|| Error::InvalidInput("scaling report needs a 1-rank baseline".into()))?;
    Ok(runs
        .iter()
        .map(|&(ranks, time)| {
            let speedup = base / time;
            ScalingRow {
                ranks,
                time,
                speedup,
                efficiency: speedup / ranks as f64,
            }
        })
        .collect())
}

pub fn scaling_table(rows: &[ScalingRow]) -> String {
    let mut out = String::from("ranks\ttime_s\tspeedup\tefficiency\n");
    for r in rows {
        let _ = writeln!(out, "{}\t{:.6}\t{:.4}\t{:.4}", r.ranks, r.time, r.speedup, r.efficiency);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunStats {
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

pub fn run_stats(values: &[f64]) -> Result<RunStats> {
    if values.is_empty() {
        return Err(Error::InvalidInput("statistics need at least one run".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(RunStats {
        runs: values.len(),
        mean,
        std_dev: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Time, energy and power of one run, taken from its trace window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeasurement {
    pub label: String,
    pub repetition: usize,
    pub time_to_solution: f64,
    pub energy_to_solution: f64,
    pub edp: f64,
    pub peak_power: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub clamped_channels: Vec<String>,
}

pub fn measure_trace(label: &str, repetition: usize, trace: &EnergyTrace) -> Result<RunMeasurement> {
    let time = trace.window.duration();
    let energy = trace
        .channels
        .iter()
        .map(|c| channel_energy(c, &trace.window))
        .sum::<Result<f64>>()?;
    let combined = total_power(&trace.channels, &trace.window)?;
    Ok(RunMeasurement {
        label: label.to_string(),
        repetition,
        time_to_solution: time,
        energy_to_solution: energy,
        edp: energy * time,
        peak_power: combined.peak,
        clamped_channels: combined.clamped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigSummary {
    pub label: String,
    pub time: RunStats,
    pub energy: RunStats,
    pub edp: f64,
    pub peak_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    /// Mean over all runs.
    pub time_to_solution: f64,
    /// Mean over all runs.
    pub energy_to_solution: f64,
    /// `energy_to_solution × time_to_solution`.
    pub edp: f64,
    /// Highest peak over all runs.
    pub peak_power: f64,
    pub time_stats: RunStats,
    pub energy_stats: RunStats,
    pub configs: Vec<ConfigSummary>,
    pub runs: Vec<RunMeasurement>,
}

impl BenchReport {
    pub fn from_runs(runs: Vec<RunMeasurement>) -> Result<Self> {
        let times: Vec<f64> = runs.iter().map(|r| r.time_to_solution).collect();
        let energies: Vec<f64> = runs.iter().map(|r| r.energy_to_solution).collect();
        let time_stats = run_stats(&times)?;
        let energy_stats = run_stats(&energies)?;
        let mut labels: Vec<&str> = Vec::new();
        for r in &runs {
            if !labels.contains(&r.label.as_str()) {
                labels.push(&r.label);
            }
        }
        let configs = labels
            .iter()
            .map(|&label| {
                let mine: Vec<&RunMeasurement> = runs.iter().filter(|r| r.label == label).collect();
                let time = run_stats(&mine.iter().map(|r| r.time_to_solution).collect::<Vec<_>>())?;
                let energy = run_stats(&mine.iter().map(|r| r.energy_to_solution).collect::<Vec<_>>())?;
                Ok(ConfigSummary {
                    label: label.to_string(),
                    edp: time.mean * energy.mean,
                    peak_power: mine.iter().map(|r| r.peak_power).fold(f64::NEG_INFINITY, f64::max),
                    time,
                    energy,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BenchReport {
            time_to_solution: time_stats.mean,
            energy_to_solution: energy_stats.mean,
            edp: time_stats.mean * energy_stats.mean,
            peak_power: runs.iter().map(|r| r.peak_power).fold(f64::NEG_INFINITY, f64::max),
            time_stats,
            energy_stats,
            configs,
            runs,
        })
    }

    /// One row per run, tab separated, for external plotting.
    pub fn to_table(&self) -> String {
        let mut out = String::from("label\trepetition\ttime_s\tenergy_j\tedp_js\tpeak_w\n");
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                r.label, r.repetition, r.time_to_solution, r.energy_to_solution, r.edp, r.peak_power
            );
        }
        out
    }
}

/// Synthetic power draw of a simulated run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerModel {
    /// Draw of every device, busy or not.
    pub idle_watts: f64,
    /// Extra draw of a busy device during the active window.
    pub active_watts: f64,
    pub cpu_idle_watts: f64,
    pub cpu_active_watts: f64,
    pub sample_interval: f64,
    /// Quiet time recorded before and after the active window.
    pub quiescence: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel {
            idle_watts: 55.0,
            active_watts: 45.0,
            cpu_idle_watts: 90.0,
            cpu_active_watts: 110.0,
            sample_interval: 1.0,
            quiescence: 5.0,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("idle_watts", self.idle_watts),
            ("active_watts", self.active_watts),
            ("cpu_idle_watts", self.cpu_idle_watts),
            ("cpu_active_watts", self.cpu_active_watts),
            ("quiescence", self.quiescence),
        ];
        for (k, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(&format!("bench.power.{k}"), "must be >= 0"));
            }
        }
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return Err(Error::config("bench.power.sample_interval", "must be > 0"));
        }
        Ok(())
    }

    /// A trace for `devices` chips, the first `busy` of them active during
    /// an `active_seconds` window, plus one cumulative-energy CPU channel.
    /// Every channel carries samples at the window marks.
    pub fn synthesize(&self, devices: usize, busy: usize, active_seconds: f64) -> Result<EnergyTrace> {
        self.validate()?;
        let start = self.quiescence;
        let window = Window::new(start, start + active_seconds)?;
        let horizon = window.end + self.quiescence;
        let mut times: Vec<f64> = (0..)
            .map(|k| k as f64 * self.sample_interval)
            .take_while(|&t| t < horizon)
            .chain([window.start, window.end, horizon])
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let active = |t: f64| window.start <= t && t <= window.end;
        let mut channels = (0..devices)
            .map(|d| {
                let samples = times
                    .iter()
                    .map(|&t| {
                        let extra = if d < busy && active(t) { self.active_watts } else { 0.0 };
                        (t, self.idle_watts + extra)
                    })
                    .collect();
                Channel::power(format!("chip{d}"), samples)
            })
            .collect::<Result<Vec<_>>>()?;
        let cpu = times
            .iter()
            .map(|&t| {
                let busy_time = (t.min(window.end) - window.start).max(0.0);
                (t, self.cpu_idle_watts * t + self.cpu_active_watts * busy_time)
            })
            .collect();
        channels.push(Channel::energy("cpu", cpu)?);
        EnergyTrace::new(channels, window)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_examples() {
        let r = scaling_report(&[(1, 100.0), (2, 50.0)]).unwrap();
        assert_eq!((r[1].speedup, r[1].efficiency), (2.0, 1.0));
        let r = scaling_report(&[(1, 7.0), (2, 7.0)]).unwrap();
        assert_eq!((r[1].speedup, r[1].efficiency), (1.0, 0.5));
        assert!(scaling_report(&[(2, 1.0)]).is_err());
        assert!(scaling_report(&[(1, 0.0)]).is_err());
    }

    #[test]
    fn stats() {
        let s = run_stats(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.std_dev - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(run_stats(&[3.0]).unwrap().std_dev, 0.0);
        assert!(run_stats(&[]).is_err());
    }

    #[test]
    fn constant_power_edp_is_pt_squared() {
        let model = PowerModel {
            idle_watts: 100.0,
            active_watts: 0.0,
            cpu_idle_watts: 0.0,
            cpu_active_watts: 0.0,
            ..PowerModel::default()
        };
        let m = measure_trace("c", 0, &model.synthesize(1, 1, 2.0).unwrap()).unwrap();
        assert_eq!(m.energy_to_solution, 200.0);
        assert_eq!(m.edp, 400.0);
        assert_eq!(m.peak_power, 100.0);
    }

    #[test]
    fn synthetic_busy_devices() {
        let model = PowerModel::default();
        let m = measure_trace("s", 0, &model.synthesize(2, 1, 3.0).unwrap()).unwrap();
        let expect = 3.0 * (2.0 * 55.0 + 45.0 + 90.0 + 110.0);
        assert!((m.energy_to_solution - expect).abs() <= 1e-12 * expect);
        assert!(m.clamped_channels.is_empty());
    }

    #[test]
    fn report_aggregates() {
        let run = |label: &str, rep, t: f64, e: f64| RunMeasurement {
            label: label.into(),
            repetition: rep,
            time_to_solution: t,
            energy_to_solution: e,
            edp: t * e,
            peak_power: e / t,
            clamped_channels: vec![],
        };
        let r = BenchReport::from_runs(vec![run("a", 0, 1.0, 10.0), run("a", 1, 3.0, 30.0), run("b", 0, 2.0, 5.0)])
            .unwrap();
        assert_eq!(r.time_to_solution, 2.0);
        assert_eq!(r.edp, r.time_to_solution * r.energy_to_solution);
        assert_eq!(r.configs.len(), 2);
        assert_eq!(r.configs[0].time.mean, 2.0);
        assert_eq!(r.to_table().lines().count(), 4);
        assert!(BenchReport::from_runs(vec![]).is_err());
    }
}
