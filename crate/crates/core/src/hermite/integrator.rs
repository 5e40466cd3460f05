//! Prediction, evaluation and correction with a shared fixed timestep.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::diagnostics::total_energy;
use crate::hermite::oracle::{golden_acc_jerk, golden_snap};
use crate::kernels::{ForceResult, DEFAULT_SOFTENING};
use crate::par::map_range;
use crate::particles::{ParticleSystem, Vec3};
use crate::topology::{execute_evaluation, ClusterConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HermiteOrder {
    /// Two-point scheme on acceleration and jerk.
    Hermite4,
    /// Two-point scheme on acceleration, jerk and snap. Needs snap from the
    /// evaluation, which only the oracle backend provides.
    Hermite6,
}

impl fmt::Display for HermiteOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HermiteOrder::Hermite4 => "hermite4",
            HermiteOrder::Hermite6 => "hermite6",
        })
    }
}

impl FromStr for HermiteOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "4" | "hermite4" => Ok(HermiteOrder::Hermite4),
            "6" | "hermite6" => Ok(HermiteOrder::Hermite6),
            other => Err(Error::config("order", format!("unknown order `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub steps: usize,
    pub order: HermiteOrder,
    /// Softening used by the oracle backend; the device backend takes its
    /// own from the cluster.
    pub softening: f64,
    /// Compute the total energy after every step (an O(n²) pass).
    pub record_energy: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: 0.01,
            steps: 3,
            order: HermiteOrder::Hermite4,
            softening: DEFAULT_SOFTENING,
            record_energy: false,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", "must be > 0"));
        }
        if !(self.softening >= 0.0 && self.softening.is_finite()) {
            return Err(Error::config("softening", "must be >= 0"));
        }
        Ok(())
    }
}

/// Where accelerations and jerks come from.
#[derive(Clone, Copy)]
pub enum Backend<'a> {
    GoldenOracle,
    SimDevice(&'a ClusterConfig),
}

impl Backend<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::GoldenOracle => "oracle",
            Backend::SimDevice(_) => "device",
        }
    }

    pub fn evaluate(&self, system: &ParticleSystem, softening: f64) -> Result<ForceResult> {
        match self {
            Backend::GoldenOracle => golden_acc_jerk(system, softening),
            Backend::SimDevice(cluster) => execute_evaluation(cluster, system),
        }
    }
}

/// Predicted positions and velocities; the system itself is untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub pos: Vec<Vec3>,
    pub vel: Vec<Vec3>,
}

/// Taylor prediction from the current derivatives.
pub fn predict(system: &ParticleSystem, dt: f64, order: HermiteOrder) -> Prediction {
    let (h2, h3) = (dt * dt / 2.0, dt * dt * dt / 6.0);
    let (h4, h5) = (dt.powi(4) / 24.0, dt.powi(5) / 120.0);
    let rows = map_range(system.len(), |i| {
        let (x, v) = (&system.pos[i], &system.vel[i]);
        let (a, j) = (&system.acc[i], &system.jerk[i]);
        let mut xp = [0.0; 3];
        let mut vp = [0.0; 3];
        for k in 0..3 {
            xp[k] = x[k] + v[k] * dt + a[k] * h2 + j[k] * h3;
            vp[k] = v[k] + a[k] * dt + j[k] * h2;
            if order == HermiteOrder::Hermite6 {
                let (s, c) = (&system.snap[i], &system.crackle[i]);
                xp[k] += s[k] * h4 + c[k] * h5;
                vp[k] += s[k] * h3 + c[k] * h4;
            }
        }
        (xp, vp)
    });
    let (pos, vel) = rows.into_iter().unzip();
    Prediction { pos, vel }
}

/// Two-point Hermite corrector from the state at `t` (held in `system`) and
/// the derivatives `new` (and `snap` for sixth order) evaluated at `t + dt`.
/// Rotates the derivative history and advances `system.time`.
pub fn correct(
    system: &mut ParticleSystem,
    dt: f64,
    order: HermiteOrder,
    new: &ForceResult,
    snap: Option<&[Vec3]>,
) -> Result<()> {
    let n = system.len();
    if new.len() != n {
        return Err(Error::InvalidInput(format!("{} derivatives for {n} particles", new.len())));
    }
    let snap = match (order, snap) {
        (HermiteOrder::Hermite4, _) => None,
        (HermiteOrder::Hermite6, Some(s)) if s.len() == n => Some(s),
        (HermiteOrder::Hermite6, _) => {
            return Err(Error::InvalidInput("sixth-order correction needs snap".into()))
        }
    };
    let sys = &*system;
    let rows = map_range(n, |i| {
        let (x0, v0) = (&sys.pos[i], &sys.vel[i]);
        let (a0, j0) = (&sys.acc[i], &sys.jerk[i]);
        let (a1, j1) = (&new.acc[i], &new.jerk[i]);
        let mut x1 = [0.0; 3];
        let mut v1 = [0.0; 3];
        let mut c1 = [0.0; 3];
        for k in 0..3 {
            match snap {
                None => {
                    v1[k] = v0[k] + dt / 2.0 * (a0[k] + a1[k]) - dt * dt / 12.0 * (j1[k] - j0[k]);
                    x1[k] = x0[k] + dt / 2.0 * (v0[k] + v1[k]) - dt * dt / 12.0 * (a1[k] - a0[k]);
                }
                Some(s) => {
                    let (s0, s1) = (sys.snap[i][k], s[i][k]);
                    let h3 = dt * dt * dt / 120.0;
                    v1[k] = v0[k] + dt / 2.0 * (a0[k] + a1[k]) - dt * dt / 10.0 * (j1[k] - j0[k])
                        + h3 * (s1 + s0);
                    x1[k] = x0[k] + dt / 2.0 * (v0[k] + v1[k]) - dt * dt / 10.0 * (a1[k] - a0[k])
                        + h3 * (j1[k] + j0[k]);
                    if dt > 0.0 {
                        c1[k] = 60.0 * (a1[k] - a0[k]) / dt.powi(3)
                            - (24.0 * j0[k] + 36.0 * j1[k]) / (dt * dt)
                            + (9.0 * s1 - 3.0 * s0) / dt;
                    }
                }
            }
        }
        (x1, v1, c1)
    });
    system.acc_prev = std::mem::replace(&mut system.acc, new.acc.clone());
    system.jerk_prev = std::mem::replace(&mut system.jerk, new.jerk.clone());
    if let Some(s) = snap {
        system.snap = s.to_vec();
    }
    for (i, (x1, v1, c1)) in rows.into_iter().enumerate() {
        system.pos[i] = x1;
        system.vel[i] = v1;
        if snap.is_some() {
            system.crackle[i] = c1;
        }
    }
    system.time += dt;
    Ok(())
}

fn at_state(system: &ParticleSystem, pos: Vec<Vec3>, vel: Vec<Vec3>) -> Result<ParticleSystem> {
    ParticleSystem::new(system.mass.clone(), pos, vel)?.with_grav_const(system.grav_const)
}

fn check_backend(config: &IntegratorConfig, backend: &Backend<'_>) -> Result<()> {
    config.validate()?;
    if config.order == HermiteOrder::Hermite6 && matches!(backend, Backend::SimDevice(_)) {
        return Err(Error::config(
            "order",
            "hermite6 needs snap, which only the oracle backend evaluates",
        ));
    }
    Ok(())
}

fn evaluate_with_snap(
    system: &ParticleSystem,
    config: &IntegratorConfig,
    backend: &Backend<'_>,
) -> Result<(ForceResult, Option<Vec<Vec3>>)> {
    let f = backend.evaluate(system, config.softening)?;
    let snap = match config.order {
        HermiteOrder::Hermite4 => None,
        HermiteOrder::Hermite6 => Some(golden_snap(system, &f.acc, config.softening)?),
    };
    Ok((f, snap))
}

/// Evaluates derivatives at the current state without moving particles.
pub fn initialize(
    system: &mut ParticleSystem,
    config: &IntegratorConfig,
    backend: &Backend<'_>,
) -> Result<()> {
    check_backend(config, backend)?;
    let (f, snap) = evaluate_with_snap(system, config, backend)?;
    system.acc_prev = f.acc.clone();
    system.jerk_prev = f.jerk.clone();
    system.acc = f.acc;
    system.jerk = f.jerk;
    let n = system.len();
    system.snap = snap.unwrap_or_else(|| vec![[0.0; 3]; n]);
    system.crackle = vec![[0.0; 3]; n];
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub eval_seconds: f64,
    pub step_seconds: f64,
    /// |P(t) − P(0)| / Σ m|v| at the start of the run.
    pub momentum_drift: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
}

/// One predict → evaluate → correct cycle. Returns the evaluation time.
pub fn step(
    system: &mut ParticleSystem,
    config: &IntegratorConfig,
    backend: &Backend<'_>,
) -> Result<f64> {
    check_backend(config, backend)?;
    let p = predict(system, config.dt, config.order);
    let predicted = at_state(system, p.pos, p.vel)?;
    let t = Instant::now();
    let (f, snap) = evaluate_with_snap(&predicted, config, backend)?;
    let eval = t.elapsed().as_secs_f64();
    correct(system, config.dt, config.order, &f, snap.as_deref())?;
    Ok(eval)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub backend: String,
    pub initial_eval_seconds: f64,
    pub total_seconds: f64,
    pub evaluations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_energy: Option<f64>,
    pub records: Vec<StepRecord>,
}

/// Evaluates the initial derivatives, then takes `config.steps` steps.
pub fn run(
    system: &mut ParticleSystem,
    config: &IntegratorConfig,
    backend: &Backend<'_>,
) -> Result<RunReport> {
    let start = Instant::now();
    initialize(system, config, backend).map_err(|e| Error::Step {
        step: 0,
        source: Box::new(e),
    })?;
    let initial_eval_seconds = start.elapsed().as_secs_f64();
    let p0 = system.momentum();
    let scale = system.momentum_scale().max(f64::MIN_POSITIVE);
    let energy = |s: &ParticleSystem| -> Result<Option<f64>> {
        if config.record_energy {
            total_energy(s, config.softening).map(Some)
        } else {
            Ok(None)
        }
    };
    let initial_energy = energy(system)?;
    let mut records = Vec::with_capacity(config.steps);
    for k in 1..=config.steps {
        let t = Instant::now();
        let eval_seconds = step(system, config, backend).map_err(|e| Error::Step {
            step: k,
            source: Box::new(e),
        })?;
        let step_seconds = t.elapsed().as_secs_f64();
        let p = system.momentum();
        let drift = ((p[0] - p0[0]).powi(2) + (p[1] - p0[1]).powi(2) + (p[2] - p0[2]).powi(2)).sqrt()
            / scale;
        records.push(StepRecord {
            step: k,
            time: system.time,
            eval_seconds,
            step_seconds,
            momentum_drift: drift,
            energy: energy(system)?,
        });
    }
    Ok(RunReport {
        backend: backend.name().to_string(),
        initial_eval_seconds,
        total_seconds: start.elapsed().as_secs_f64(),
        evaluations: config.steps + 1,
        initial_energy,
        records,
    })
}
