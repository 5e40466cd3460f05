//! Power and cumulative-energy traces, one channel per device.
//!
//! File format, one channel per file:
//!
//! ```text
//! # channel=chip0 kind=power unit=W
//! 0.0 61.5
//! 1.0 98.2
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    /// Instantaneous power in watts.
    Power,
    /// Cumulative energy in joules.
    Energy,
}

impl ChannelKind {
    pub fn unit(self) -> &'static str {
        match self {
            ChannelKind::Power => "W",
            ChannelKind::Energy => "J",
        }
    }

    fn name(self) -> &'static str {
        match self {
            ChannelKind::Power => "power",
            ChannelKind::Energy => "energy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Channel {
    pub name: String,
    pub kind: ChannelKind,
    /// `(timestamp seconds, value)`, strictly increasing in time.
    pub samples: Vec<(f64, f64)>,
}

impl Channel {
    pub fn new(name: impl Into<String>, kind: ChannelKind, samples: Vec<(f64, f64)>) -> Result<Self> {
        let name = name.into();
        if let Some(i) = samples.iter().position(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::Trace(format!("channel `{name}`: non-finite sample {i}")));
        }
        if let Some(i) = samples.windows(2).position(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::Trace(format!(
                "channel `{name}`: timestamps not strictly increasing at sample {}",
                i + 1
            )));
        }
        Ok(Channel { name, kind, samples })
    }

    pub fn power(name: impl Into<String>, samples: Vec<(f64, f64)>) -> Result<Self> {
        Channel::new(name, ChannelKind::Power, samples)
    }

    pub fn energy(name: impl Into<String>, samples: Vec<(f64, f64)>) -> Result<Self> {
        Channel::new(name, ChannelKind::Energy, samples)
    }

    /// `(first, last)` timestamps, if any.
    pub fn extent(&self) -> Option<(f64, f64)> {
        Some((self.samples.first()?.0, self.samples.last()?.0))
    }

    /// Linear interpolation at `t`, clamped to the end samples outside the
    /// extent. The flag is `true` when clamping happened.
    pub fn value_at(&self, t: f64) -> (f64, bool) {
        let s = &self.samples;
        let k = s.partition_point(|&(ts, _)| ts <= t);
        if k == 0 {
            return (s[0].1, t < s[0].0);
        }
        if k == s.len() {
            let last = s[s.len() - 1];
            return (last.1, t > last.0);
        }
        let ((t0, v0), (t1, v1)) = (s[k - 1], s[k]);
        if t == t0 {
            return (v0, false);
        }
        (v0 + (v1 - v0) * ((t - t0) / (t1 - t0)), false)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# channel={} kind={} unit={}\n",
            self.name,
            self.kind.name(),
            self.kind.unit()
        );
        for (t, v) in &self.samples {
            let _ = writeln!(out, "{t:.17e} {v:.17e}");
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty trace file".into()))?;
        let body = header
            .strip_prefix('#')
            .ok_or_else(|| err(1, "missing `# channel=... kind=... unit=...` header".into()))?;
        let (mut name, mut kind, mut unit) = (None, None, None);
        for field in body.split_whitespace() {
            match field.split_once('=') {
                Some(("channel", v)) => name = Some(v.to_string()),
                Some(("kind", "power")) => kind = Some(ChannelKind::Power),
                Some(("kind", "energy")) => kind = Some(ChannelKind::Energy),
                Some(("unit", v)) => unit = Some(v.to_string()),
                _ => return Err(err(1, format!("unexpected header field `{field}`"))),
            }
        }
        let (Some(name), Some(kind), Some(unit)) = (name, kind, unit) else {
            return Err(err(1, "header needs channel, kind and unit".into()));
        };
        if unit != kind.unit() {
            return Err(err(1, format!("unit `{unit}` does not match kind {}", kind.name())));
        }
        let mut samples = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(t)), Some(Ok(v)), None) => samples.push((t, v)),
                _ => return Err(err(i + 1, format!("expected `timestamp value`, got `{line}`"))),
            }
        }
        Channel::new(name, kind, samples).map_err(|e| err(0, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Channel::parse(&std::fs::read_to_string(path)?, path)
    }
}

/// The active simulation interval, from explicit start/stop marks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(Error::Trace(format!("window [{start}, {end}] is empty")));
        }
        Ok(Window { start, end })
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyTrace {
    pub channels: Vec<Channel>,
    pub window: Window,
}

impl EnergyTrace {
    pub fn new(channels: Vec<Channel>, window: Window) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Trace("a trace needs at least one channel".into()));
        }
        for c in &channels {
            match c.extent() {
                Some((a, b)) if a <= window.start && window.end <= b => {}
                _ => {
                    return Err(Error::Trace(format!(
                        "window [{}, {}] lies outside channel `{}`",
                        window.start, window.end, c.name
                    )))
                }
            }
        }
        Ok(EnergyTrace { channels, window })
    }
}
