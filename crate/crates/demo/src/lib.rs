//! Browser front end for gravtile. Each export takes plain numbers and
//! returns a JSON document for the page to plot.
//!
//! The browser has no threads, so the device path here folds pair tiles
//! serially with the same tile engine the multi-core pipeline uses; results
//! are bit-identical to it.

use gravtile::hermite::{
    compare_energy_distribution, correct, energy_report, energy_report_with_edges, force_deviation,
    generate_initial_conditions, golden_acc_jerk, predict, HermiteOrder, IcModel,
};
use gravtile::kernels::{evaluate_serial, tilize, untilize_forces, ForceResult, DEFAULT_SOFTENING};
use gravtile::topology::{estimate_time, ClusterSpec, LinkParams, ScalingMode};
use gravtile::{ParticleSystem, Result};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Upper bound on particle counts accepted from the page.
pub const MAX_PARTICLES: usize = 4096;

fn bounded(n: usize) -> Result<usize> {
    if (1..=MAX_PARTICLES).contains(&n) {
        Ok(n)
    } else {
        Err(gravtile::Error::InvalidInput(format!(
            "particle count must be in 1..={MAX_PARTICLES}, got {n}"
        )))
    }
}

/// Device forces through the tile engine, one source tile at a time.
pub fn device_forces(system: &ParticleSystem, softening: f64) -> Result<ForceResult> {
    let w = tilize(system, softening)?;
    let tiles = evaluate_serial(&w, 0..w.num_source_tiles())?;
    Ok(untilize_forces(&tiles, system.len(), system.grav_const))
}

/// Analytic run time of each scaling mode for `n` particles on `cards` cards.
pub fn cost_table(n: usize, cards: usize, pcie_gbs: f64, eth_gbs: f64, mesh_overhead_us: f64) -> Result<Value> {
    let mut rows = Vec::new();
    for mode in ScalingMode::ALL {
        let mut spec = ClusterSpec::with_mode(mode, cards);
        spec.pcie = LinkParams {
            bandwidth: pcie_gbs * 1e9,
            ..spec.pcie
        };
        spec.eth = LinkParams {
            bandwidth: eth_gbs * 1e9,
            ..spec.eth
        };
        spec.perf.dispatch_overhead.mesh = mesh_overhead_us * 1e-6;
        let e = estimate_time(mode, n, &spec, &spec.perf)?;
        rows.push(json!({
            "mode": mode.number(),
            "name": mode.name(),
            "total": e.total,
            "host": e.host,
            "compute": e.compute,
            "pcie": e.pcie,
            "ethernet": e.ethernet,
            "dispatch": e.dispatch,
        }));
    }
    Ok(json!({ "particles": n, "cards": cards, "modes": rows }))
}

/// Device against oracle forces for a uniform sphere, with per-particle
/// deviations against radius.
pub fn accuracy(n: usize, seed: u64) -> Result<Value> {
    let s = generate_initial_conditions(bounded(n)?, seed, IcModel::UniformSphere)?;
    let d = device_forces(&s, DEFAULT_SOFTENING)?;
    let o = golden_acc_jerk(&s, DEFAULT_SOFTENING)?;
    let summary = force_deviation(&d, &o)?;
    let rel = |x: &[f64; 3], y: &[f64; 3]| {
        let num = (0..3).map(|c| (x[c] - y[c]).abs()).fold(0.0, f64::max);
        let den = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        if num == 0.0 { 0.0 } else { num / den }
    };
    let points: Vec<[f64; 3]> = (0..s.len())
        .map(|i| {
            let p = s.pos[i];
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            [r, rel(&d.acc[i], &o.acc[i]), rel(&d.jerk[i], &o.jerk[i])]
        })
        .collect();
    Ok(json!({ "particles": n, "summary": summary, "points": points }))
}

fn advance(system: &mut ParticleSystem, steps: usize, dt: f64, device: bool) -> Result<()> {
    let eval = |s: &ParticleSystem| {
        if device {
            device_forces(s, DEFAULT_SOFTENING)
        } else {
            golden_acc_jerk(s, DEFAULT_SOFTENING)
        }
    };
    let f = eval(system)?;
    system.acc = f.acc;
    system.jerk = f.jerk;
    for _ in 0..steps {
        let p = predict(system, dt, HermiteOrder::Hermite4);
        let predicted = ParticleSystem::new(system.mass.clone(), p.pos, p.vel)?.with_grav_const(system.grav_const)?;
        let f = eval(&predicted)?;
        correct(system, dt, HermiteOrder::Hermite4, &f, None)?;
    }
    Ok(())
}

/// Per-particle energy histograms after `steps` steps with each backend,
/// binned on the oracle's edges.
pub fn energy_histograms(n: usize, seed: u64, steps: usize, dt: f64, bins: usize) -> Result<Value> {
    if !(dt > 0.0 && dt.is_finite()) || steps > 50 {
        return Err(gravtile::Error::InvalidInput("need dt > 0 and at most 50 steps".into()));
    }
    let start = generate_initial_conditions(bounded(n)?, seed, IcModel::UniformSphere)?;
    let mut dev = start.clone();
    let mut ora = start;
    advance(&mut dev, steps, dt, true)?;
    advance(&mut ora, steps, dt, false)?;
    let reference = energy_report(&ora, DEFAULT_SOFTENING, bins)?;
    let tested = energy_report_with_edges(&dev, DEFAULT_SOFTENING, &reference.histogram.edges)?;
    let cmp = compare_energy_distribution(&tested, &reference, 0.02)?;
    Ok(json!({
        "edges": reference.histogram.edges,
        "oracle": reference.histogram.counts,
        "device": tested.histogram.counts,
        "comparison": cmp,
        "energy": { "oracle": reference.total, "device": tested.total },
    }))
}

fn to_js(r: Result<Value>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = costTable)]
pub fn cost_table_js(n: u32, cards: u32, pcie_gbs: f64, eth_gbs: f64, mesh_overhead_us: f64) -> Result<String, JsError> {
    to_js(cost_table(n as usize, cards as usize, pcie_gbs, eth_gbs, mesh_overhead_us))
}

#[wasm_bindgen(js_name = forceAccuracy)]
pub fn accuracy_js(n: u32, seed: u32) -> Result<String, JsError> {
    to_js(accuracy(n as usize, seed as u64))
}

#[wasm_bindgen(js_name = energyHistograms)]
pub fn energy_histograms_js(n: u32, seed: u32, steps: u32, dt: f64, bins: u32) -> Result<String, JsError> {
    to_js(energy_histograms(n as usize, seed as u64, steps as usize, dt, bins as usize))
}
