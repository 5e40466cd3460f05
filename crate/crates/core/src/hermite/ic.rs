//! Deterministic initial conditions.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::diagnostics::{kinetic_energy, potential_energy};
use crate::kernels::DEFAULT_SOFTENING;
use crate::particles::ParticleSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IcModel {
    /// Uniform in the unit ball, Gaussian velocities scaled to virial
    /// equilibrium (2K = |W|).
    UniformSphere,
    /// Uniform in the unit ball, at rest.
    ColdUniform,
}

impl fmt::Display for IcModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IcModel::UniformSphere => "uniform-sphere",
            IcModel::ColdUniform => "cold-uniform",
        })
    }
}

impl FromStr for IcModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-sphere" => Ok(IcModel::UniformSphere),
            "cold-uniform" => Ok(IcModel::ColdUniform),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

/// `n` equal masses summing to 1, centre of mass at rest at the origin.
pub fn generate_initial_conditions(n: usize, seed: u64, model: IcModel) -> Result<ParticleSystem> {
    if n == 0 {
        return Err(Error::InvalidInput("particle count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = (0..n)
        .map(|_| loop {
            let p: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= 1.0 {
                break p;
            }
        })
        .collect();
    let vel = (0..n)
        .map(|_| match model {
            IcModel::UniformSphere => std::array::from_fn(|_| rng.sample(StandardNormal)),
            IcModel::ColdUniform => [0.0; 3],
        })
        .collect();
    let mut s = ParticleSystem::new(vec![1.0 / n as f64; n], pos, vel)?;
    s.to_com_frame();
    if model == IcModel::UniformSphere {
        let k = kinetic_energy(&s);
        let w = potential_energy(&s, DEFAULT_SOFTENING)?;
        if k > 0.0 && w < 0.0 {
            let f = (w.abs() / (2.0 * k)).sqrt();
            s.vel.iter_mut().flatten().for_each(|v| *v *= f);
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::diagnostics::energy_report;

    #[test]
    fn deterministic() {
        let a = generate_initial_conditions(300, 9, IcModel::UniformSphere).unwrap();
        let b = generate_initial_conditions(300, 9, IcModel::UniformSphere).unwrap();
        assert_eq!(a.write_snapshot(), b.write_snapshot());
        let c = generate_initial_conditions(300, 10, IcModel::UniformSphere).unwrap();
        assert_ne!(a.pos, c.pos);
    }

    #[test]
    fn mass_and_centre() {
        let s = generate_initial_conditions(1000, 1, IcModel::UniformSphere).unwrap();
        assert!((s.total_mass() - 1.0).abs() <= 1e-15);
        let (x, v) = s.center_of_mass();
        assert!(x.iter().chain(&v).all(|c| c.abs() <= 1e-15), "{x:?} {v:?}");
        assert!(s.pos.iter().all(|p| p.iter().map(|c| c * c).sum::<f64>() <= 1.5));
    }

    #[test]
    fn virial_equilibrium() {
        let s = generate_initial_conditions(4096, 2, IcModel::UniformSphere).unwrap();
        let r = energy_report(&s, DEFAULT_SOFTENING, 32).unwrap();
        assert!((0.8..=1.2).contains(&r.virial_ratio()), "{}", r.virial_ratio());
    }

    #[test]
    fn cold_and_unknown() {
        let s = generate_initial_conditions(10, 1, IcModel::ColdUniform).unwrap();
        assert!(s.vel.iter().flatten().all(|&v| v == 0.0));
        assert!(matches!("plummer".parse::<IcModel>(), Err(Error::UnknownModel(_))));
        assert!(generate_initial_conditions(0, 1, IcModel::ColdUniform).is_err());
        generate_initial_conditions(1, 1, IcModel::UniformSphere).unwrap();
    }
}
