//! Energy from power traces: trapezoidal integration, discrete derivatives
//! of cumulative-energy counters, and summation of unaligned channels.

use serde::Serialize;

use crate::bench::trace::{Channel, ChannelKind, Window};
use crate::error::{Error, Result};

fn overlap(channel: &Channel, window: &Window) -> Result<(f64, f64)> {
    let (t0, t1) = channel
        .extent()
        .ok_or_else(|| Error::Trace(format!("channel `{}` has no samples", channel.name)))?;
    let (a, b) = (window.start.max(t0), window.end.min(t1));
    if !(a < b) {
        return Err(Error::Trace(format!(
            "channel `{}` does not overlap window [{}, {}]",
            channel.name, window.start, window.end
        )));
    }
    Ok((a, b))
}

/// Trapezoidal integral of a power channel over the part of `window` the
/// channel covers. Interior samples are used as-is; the clipped ends are
/// linearly interpolated.
pub fn integrate_power(channel: &Channel, window: &Window) -> Result<f64> {
    if channel.kind != ChannelKind::Power {
        return Err(Error::Trace(format!("channel `{}` is not a power channel", channel.name)));
    }
    let (a, b) = overlap(channel, window)?;
    let mut prev = (a, channel.value_at(a).0);
    let mut total = 0.0;
    let inner = channel.samples.iter().filter(|&&(t, _)| a < t && t < b).copied();
    for (t, v) in inner.chain(std::iter::once((b, channel.value_at(b).0))) {
        total += 0.5 * (prev.1 + v) * (t - prev.0);
        prev = (t, v);
    }
    Ok(total)
}

/// Increment of a cumulative-energy channel across `window`.
pub fn energy_increment(channel: &Channel, window: &Window) -> Result<f64> {
    if channel.kind != ChannelKind::Energy {
        return Err(Error::Trace(format!("channel `{}` is not an energy channel", channel.name)));
    }
    let (a, b) = overlap(channel, window)?;
    Ok(channel.value_at(b).0 - channel.value_at(a).0)
}

/// Energy a channel accounts for inside `window`, whatever its kind.
pub fn channel_energy(channel: &Channel, window: &Window) -> Result<f64> {
    match channel.kind {
        ChannelKind::Power => integrate_power(channel, window),
        ChannelKind::Energy => energy_increment(channel, window),
    }
}

/// Forward differences of a cumulative-energy channel, placed at interval
/// midpoints.
pub fn energy_channel_to_power(channel: &Channel) -> Result<Channel> {
    if channel.kind != ChannelKind::Energy {
        return Err(Error::Trace(format!("channel `{}` is not an energy channel", channel.name)));
    }
    if channel.samples.len() < 2 {
        return Err(Error::Trace(format!("channel `{}` needs two samples", channel.name)));
    }
    let samples = channel
        .samples
        .windows(2)
        .map(|w| {
            let ((t0, e0), (t1, e1)) = (w[0], w[1]);
            if e1 < e0 {
                return Err(Error::Trace(format!(
                    "channel `{}`: cumulative energy decreases at t = {t1}",
                    channel.name
                )));
            }
            Ok((0.5 * (t0 + t1), (e1 - e0) / (t1 - t0)))
        })
        .collect::<Result<Vec<_>>>()?;
    Channel::power(channel.name.clone(), samples)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinedPower {
    /// Summed power on the union of all sample times inside the window,
    /// plus the window edges.
    pub samples: Vec<(f64, f64)>,
    pub peak: f64,
    pub peak_time: f64,
    /// Channels that had to be extended past their first or last sample.
    pub clamped: Vec<String>,
}

/// Sums channels on the union of their timestamps, each linearly
/// interpolated. Energy channels are clipped to the window and then
/// differentiated, so their power near the window edges only depends on
/// energy readings inside the window.
pub fn total_power(channels: &[Channel], window: &Window) -> Result<CombinedPower> {
    if channels.is_empty() {
        return Err(Error::Trace("total power needs at least one channel".into()));
    }
    let mut clamped = Vec::new();
    let mut flag = |name: &str| {
        if !clamped.iter().any(|c| c == name) {
            clamped.push(name.to_string());
        }
    };
    let mut power = Vec::with_capacity(channels.len());
    for c in channels {
        match c.kind {
            ChannelKind::Power => power.push((c.clone(), true)),
            ChannelKind::Energy => {
                let (e0, c0) = c.value_at(window.start);
                let (e1, c1) = c.value_at(window.end);
                if c0 || c1 {
                    flag(&c.name);
                }
                let clipped: Vec<(f64, f64)> = std::iter::once((window.start, e0))
                    .chain(
                        c.samples
                            .iter()
                            .copied()
                            .filter(|&(t, _)| window.start < t && t < window.end),
                    )
                    .chain([(window.end, e1)])
                    .collect();
                let clipped = Channel::energy(c.name.clone(), clipped)?;
                power.push((energy_channel_to_power(&clipped)?, false));
            }
        }
    }
    let mut grid: Vec<f64> = power
        .iter()
        .flat_map(|(c, _)| c.samples.iter().map(|s| s.0))
        .filter(|&t| window.start < t && t < window.end)
        .chain([window.start, window.end])
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let samples: Vec<(f64, f64)> = grid
        .iter()
        .map(|&t| {
            let mut sum = 0.0;
            for (c, flag_clamp) in &power {
                let (v, was_clamped) = c.value_at(t);
                if was_clamped && *flag_clamp {
                    flag(&c.name);
                }
                sum += v;
            }
            (t, sum)
        })
        .collect();
    let (peak_time, peak) = samples
        .iter()
        .copied()
        .fold((window.start, f64::NEG_INFINITY), |best, s| if s.1 > best.1 { s } else { best });
    Ok(CombinedPower {
        samples,
        peak,
        peak_time,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn win(a: f64, b: f64) -> Window {
        Window::new(a, b).unwrap()
    }

    #[test]
    fn rectangle_and_triangle() {
        let c = Channel::power("c", (0..=4).map(|t| (t as f64, 100.0)).collect()).unwrap();
        assert_eq!(integrate_power(&c, &win(1.0, 3.0)).unwrap(), 200.0);
        let ramp = Channel::power("r", vec![(0.0, 0.0), (1.0, 50.0), (2.0, 100.0)]).unwrap();
        assert_eq!(integrate_power(&ramp, &win(0.0, 2.0)).unwrap(), 100.0);
        assert!(integrate_power(&ramp, &win(5.0, 6.0)).is_err());
    }

    #[test]
    fn sinusoid_within_trapezoid_bound() {
        // P(t) = 100 + 40 sin(0.3 t), sampled at 1 Hz.
        let f = |t: f64| 100.0 + 40.0 * (0.3 * t).sin();
        let c = Channel::power("s", (0..=60).map(|t| (t as f64, f(t as f64))).collect()).unwrap();
        let (a, b) = (3.0f64, 57.0f64);
        let exact = 100.0 * (b - a) - 40.0 / 0.3 * ((0.3 * b).cos() - (0.3 * a).cos());
        let bound = (b - a) * 1.0 * 40.0 * 0.09 / 12.0;
        let got = integrate_power(&c, &win(a, b)).unwrap();
        assert!((got - exact).abs() <= bound, "{got} {exact} {bound}");
    }

    #[test]
    fn derivative_examples() {
        let e = Channel::energy("e", vec![(0.0, 0.0), (1.0, 100.0), (2.0, 200.0)]).unwrap();
        let p = energy_channel_to_power(&e).unwrap();
        assert_eq!(p.samples, vec![(0.5, 100.0), (1.5, 100.0)]);
        let flat = Channel::energy("f", vec![(0.0, 7.0), (1.0, 7.0), (3.0, 7.0)]).unwrap();
        assert!(energy_channel_to_power(&flat).unwrap().samples.iter().all(|s| s.1 == 0.0));
        let down = Channel::energy("d", vec![(0.0, 7.0), (1.0, 6.0)]).unwrap();
        assert!(energy_channel_to_power(&down).is_err());
    }

    #[test]
    fn total_power_examples() {
        let a = Channel::power("a", vec![(0.0, 10.0), (1.0, 20.0), (2.0, 15.0)]).unwrap();
        let b = Channel { name: "b".into(), ..a.clone() };
        let sum = total_power(&[a.clone(), b], &win(0.0, 2.0)).unwrap();
        for (t, v) in &sum.samples {
            assert_eq!(*v, 2.0 * a.value_at(*t).0);
        }
        assert!(sum.clamped.is_empty());

        let c1 = Channel::power("c1", (0..=4).map(|t| (t as f64, 30.0)).collect()).unwrap();
        let c2 = Channel::power("c2", (0..4).map(|t| (t as f64 + 0.5, 12.0)).collect()).unwrap();
        let sum = total_power(&[c1, c2], &win(1.0, 3.0)).unwrap();
        assert!(sum.samples.iter().all(|s| s.1 == 42.0));
        assert_eq!(sum.peak, 42.0);

        let short = Channel::power("short", vec![(1.0, 5.0), (2.0, 5.0)]).unwrap();
        let sum = total_power(&[a, short], &win(0.0, 2.0)).unwrap();
        assert_eq!(sum.clamped, vec!["short".to_string()]);
    }

    proptest! {
        #[test]
        fn window_additive(
            values in prop::collection::vec(0.0f64..500.0, 3..40),
            cut in 0.0f64..1.0,
            lo in 0.0f64..0.5,
        ) {
            let n = values.len();
            let c = Channel::power("p", values.iter().enumerate().map(|(i, &v)| (i as f64 * 0.7, v)).collect()).unwrap();
            let end = (n - 1) as f64 * 0.7;
            let a = lo;
            let b = a + (end - a) * cut.clamp(0.01, 0.99);
            let whole = integrate_power(&c, &win(a, end)).unwrap();
            let parts = integrate_power(&c, &win(a, b)).unwrap() + integrate_power(&c, &win(b, end)).unwrap();
            prop_assert!((whole - parts).abs() <= 1e-9 * whole.abs().max(1.0));
        }

        #[test]
        fn derivative_round_trip_on_uniform_grid(
            incs in prop::collection::vec(0.0f64..300.0, 2..50),
            t0 in -10.0f64..10.0,
        ) {
            let mut e = 0.0;
            let mut samples = vec![(t0, 0.0)];
            for (k, d) in incs.iter().enumerate() {
                e += d;
                samples.push((t0 + (k + 1) as f64, e));
            }
            let ch = Channel::energy("e", samples.clone()).unwrap();
            let p = energy_channel_to_power(&ch).unwrap();
            let (m0, m1) = p.extent().unwrap();
            let w = win(m0, m1);
            let got = integrate_power(&p, &w).unwrap();
            let want = ch.value_at(m1).0 - ch.value_at(m0).0;
            prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{} {}", got, want);
        }

        #[test]
        fn sum_matches_dense_resampling(
            a in prop::collection::vec(0.0f64..100.0, 2..12),
            b in prop::collection::vec(0.0f64..100.0, 2..12),
            off in 0.01f64..0.99,
        ) {
            let ca = Channel::power("a", a.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect()).unwrap();
            let cb = Channel::power("b", b.iter().enumerate().map(|(i, &v)| (i as f64 + off, v)).collect()).unwrap();
            let end = (a.len().min(b.len()) - 1) as f64;
            let w = win(off, end);
            let sum = total_power(&[ca.clone(), cb.clone()], &w).unwrap();
            let combined = Channel::power("sum", sum.samples.clone()).unwrap();
            for k in 0..=400 {
                let t = w.start + (w.end - w.start) * k as f64 / 400.0;
                let want = ca.value_at(t).0 + cb.value_at(t).0;
                prop_assert!((combined.value_at(t).0 - want).abs() <= 1e-9 * want.max(1.0));
            }
        }
    }
}
