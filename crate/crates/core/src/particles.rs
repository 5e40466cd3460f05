//! The host-side particle state and its plain-text snapshot format.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Simulation state in host (64-bit) precision.
///
/// `acc`/`jerk` hold the derivatives at `time`; `acc_prev`/`jerk_prev` the
/// ones from the previous step. `snap`/`crackle` are only populated by the
/// sixth-order integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    pub mass: Vec<f64>,
    pub pos: Vec<Vec3>,
    pub vel: Vec<Vec3>,
    pub acc: Vec<Vec3>,
    pub jerk: Vec<Vec3>,
    pub acc_prev: Vec<Vec3>,
    pub jerk_prev: Vec<Vec3>,
    pub snap: Vec<Vec3>,
    pub crackle: Vec<Vec3>,
    pub time: f64,
    pub grav_const: f64,
}

impl ParticleSystem {
    pub fn new(mass: Vec<f64>, pos: Vec<Vec3>, vel: Vec<Vec3>) -> Result<Self> {
        let n = mass.len();
        let sys = ParticleSystem {
            acc: vec![[0.0; 3]; n],
            jerk: vec![[0.0; 3]; n],
            acc_prev: vec![[0.0; 3]; n],
            jerk_prev: vec![[0.0; 3]; n],
            snap: vec![[0.0; 3]; n],
            crackle: vec![[0.0; 3]; n],
            mass,
            pos,
            vel,
            time: 0.0,
            grav_const: 1.0,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn with_grav_const(mut self, g: f64) -> Result<Self> {
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::InvalidInput(format!("G must be finite and > 0, got {g}")));
        }
        self.grav_const = g;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.mass.len();
        if n == 0 {
            return Err(Error::InvalidInput("particle system must hold at least one particle".into()));
        }
        let lens = [
            ("pos", self.pos.len()),
            ("vel", self.vel.len()),
            ("acc", self.acc.len()),
            ("jerk", self.jerk.len()),
            ("acc_prev", self.acc_prev.len()),
            ("jerk_prev", self.jerk_prev.len()),
            ("snap", self.snap.len()),
            ("crackle", self.crackle.len()),
        ];
        for (name, len) in lens {
            if len != n {
                return Err(Error::InvalidInput(format!("{name} has {len} entries, expected {n}")));
            }
        }
        if let Some(i) = self.mass.iter().position(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::InvalidInput(format!("mass[{i}] = {} is not > 0", self.mass[i])));
        }
        if !self.time.is_finite() || !self.grav_const.is_finite() {
            return Err(Error::NonFinite("time or G".into()));
        }
        let vectors = [
            ("pos", &self.pos),
            ("vel", &self.vel),
            ("acc", &self.acc),
            ("jerk", &self.jerk),
            ("acc_prev", &self.acc_prev),
            ("jerk_prev", &self.jerk_prev),
            ("snap", &self.snap),
            ("crackle", &self.crackle),
        ];
        for (name, field) in vectors {
            if let Some(i) = field.iter().position(|v| v.iter().any(|c| !c.is_finite())) {
                return Err(Error::NonFinite(format!("{name}[{i}]")));
            }
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn momentum(&self) -> Vec3 {
        let mut p = [0.0; 3];
        for (m, v) in self.mass.iter().zip(&self.vel) {
            for k in 0..3 {
                p[k] += m * v[k];
            }
        }
        p
    }

    /// Σ m|v|, the natural scale for judging momentum drift.
    pub fn momentum_scale(&self) -> f64 {
        self.mass
            .iter()
            .zip(&self.vel)
            .map(|(m, v)| m * norm(v))
            .sum()
    }

    pub fn center_of_mass(&self) -> (Vec3, Vec3) {
        let mt = self.total_mass();
        let mut x = [0.0; 3];
        let mut v = [0.0; 3];
        for i in 0..self.len() {
            for k in 0..3 {
                x[k] += self.mass[i] * self.pos[i][k];
                v[k] += self.mass[i] * self.vel[i][k];
            }
        }
        for k in 0..3 {
            x[k] /= mt;
            v[k] /= mt;
        }
        (x, v)
    }

    /// Shifts positions and velocities so the centre of mass sits at rest at the origin.
    pub fn to_com_frame(&mut self) {
        let (x, v) = self.center_of_mass();
        for i in 0..self.len() {
            for k in 0..3 {
                self.pos[i][k] -= x[k];
                self.vel[i][k] -= v[k];
            }
        }
    }

    pub fn write_snapshot(&self) -> String {
        let mut out = String::with_capacity(64 + self.len() * 180);
        let _ = writeln!(
            out,
            "# gravtile v1 n={} t={:.16e} G={:.16e}",
            self.len(),
            self.time,
            self.grav_const
        );
        for i in 0..self.len() {
            let [x, y, z] = self.pos[i];
            let [vx, vy, vz] = self.vel[i];
            let _ = writeln!(
                out,
                "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                self.mass[i], x, y, z, vx, vy, vz
            );
        }
        out
    }

    pub fn read_snapshot(reader: impl Read, origin: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut lines = BufReader::new(reader).lines();
        let header = lines
            .next()
            .ok_or_else(|| perr(1, "empty snapshot".into()))??;
        let rest = header
            .strip_prefix("# gravtile v1 ")
            .ok_or_else(|| perr(1, format!("bad header `{header}`")))?;
        let (mut n, mut t, mut g) = (None, None, None);
        for field in rest.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| perr(1, format!("bad header field `{field}`")))?;
            match key {
                "n" => n = value.parse::<usize>().ok(),
                "t" => t = value.parse::<f64>().ok(),
                "G" => g = value.parse::<f64>().ok(),
                _ => return Err(perr(1, format!("unknown header field `{key}`"))),
            }
        }
        let (n, t, g) = match (n, t, g) {
            (Some(n), Some(t), Some(g)) => (n, t, g),
            _ => return Err(perr(1, "header needs n=, t= and G=".into())),
        };

        let mut mass = Vec::with_capacity(n);
        let mut pos = Vec::with_capacity(n);
        let mut vel = Vec::with_capacity(n);
        for (idx, line) in lines.enumerate() {
            let line = line?;
            let lineno = idx + 2;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| perr(lineno, e.to_string()))?;
            if vals.len() != 7 {
                return Err(perr(lineno, format!("expected 7 columns, got {}", vals.len())));
            }
            mass.push(vals[0]);
            pos.push([vals[1], vals[2], vals[3]]);
            vel.push([vals[4], vals[5], vals[6]]);
        }
        if mass.len() != n {
            return Err(perr(1, format!("header says n={n}, found {} particles", mass.len())));
        }
        let mut sys = ParticleSystem::new(mass, pos, vel)?;
        sys.time = t;
        sys.grav_const = g;
        sys.validate()?;
        Ok(sys)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_snapshot(file, path)
    }
}

#[inline]
pub(crate) fn norm(v: &Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}
