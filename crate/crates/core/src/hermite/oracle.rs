//! Golden brute-force reference: binary64, serial in `j` for every `i`.

use crate::error::{Error, Result};
use crate::kernels::ForceResult;
use crate::par::map_range;
use crate::particles::{ParticleSystem, Vec3};

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn diff(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Softened acceleration and jerk of every particle:
/// `a_i = Σ G m_j r/R³`, `ȧ_i = Σ G m_j (v/R³ − 3 (r·v) r/R⁵)` with
/// `R² = |r|² + ε²`, `r = x_j − x_i`, `v = v_j − v_i`.
pub fn golden_acc_jerk(system: &ParticleSystem, softening: f64) -> Result<ForceResult> {
    let eps2 = softening * softening;
    let g = system.grav_const;
    let rows = map_range(system.len(), |i| -> Result<(Vec3, Vec3)> {
        let (xi, vi) = (&system.pos[i], &system.vel[i]);
        let mut a = [0.0; 3];
        let mut jk = [0.0; 3];
        for j in 0..system.len() {
            if j == i {
                continue;
            }
            let r = diff(&system.pos[j], xi);
            let v = diff(&system.vel[j], vi);
            let r2 = dot(&r, &r) + eps2;
            if r2 == 0.0 {
                return Err(Error::Singular(i, j));
            }
            let rinv2 = 1.0 / r2;
            let mr3 = g * system.mass[j] * rinv2 * rinv2.sqrt();
            let alpha = 3.0 * dot(&r, &v) * rinv2;
            for k in 0..3 {
                a[k] += mr3 * r[k];
                jk[k] += mr3 * (v[k] - alpha * r[k]);
            }
        }
        Ok((a, jk))
    });
    let mut out = ForceResult::with_len(system.len());
    for (i, row) in rows.into_iter().enumerate() {
        let (a, j) = row?;
        out.acc[i] = a;
        out.jerk[i] = j;
    }
    Ok(out)
}

/// Snap (second derivative of acceleration), given the accelerations `acc`
/// evaluated at the same state.
pub fn golden_snap(system: &ParticleSystem, acc: &[Vec3], softening: f64) -> Result<Vec<Vec3>> {
    let eps2 = softening * softening;
    let g = system.grav_const;
    let rows = map_range(system.len(), |i| -> Result<Vec3> {
        let mut s = [0.0; 3];
        for j in 0..system.len() {
            if j == i {
                continue;
            }
            let r = diff(&system.pos[j], &system.pos[i]);
            let v = diff(&system.vel[j], &system.vel[i]);
            let a = diff(&acc[j], &acc[i]);
            let r2 = dot(&r, &r) + eps2;
            if r2 == 0.0 {
                return Err(Error::Singular(i, j));
            }
            let rinv2 = 1.0 / r2;
            let mr3 = g * system.mass[j] * rinv2 * rinv2.sqrt();
            let alpha = dot(&r, &v) * rinv2;
            let beta = (dot(&v, &v) + dot(&r, &a)) * rinv2 + alpha * alpha;
            for k in 0..3 {
                let acc_k = mr3 * r[k];
                let jrk_k = mr3 * v[k] - 3.0 * alpha * acc_k;
                s[k] += mr3 * a[k] - 6.0 * alpha * jrk_k - 3.0 * beta * acc_k;
            }
        }
        Ok(s)
    });
    rows.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_body() -> ParticleSystem {
        ParticleSystem::new(
            vec![0.3, 1.1, 0.7],
            vec![[0.1, -0.4, 0.2], [-0.9, 0.3, 0.5], [0.6, 0.8, -0.7]],
            vec![[0.05, 0.1, -0.2], [0.3, -0.1, 0.0], [-0.2, 0.25, 0.15]],
        )
        .unwrap()
    }

    // Textbook form, written independently with powf.
    fn textbook(s: &ParticleSystem, eps: f64) -> (Vec<Vec3>, Vec<Vec3>) {
        let n = s.len();
        let mut acc = vec![[0.0; 3]; n];
        let mut jerk = vec![[0.0; 3]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let r: Vec<f64> = (0..3).map(|k| s.pos[j][k] - s.pos[i][k]).collect();
                let v: Vec<f64> = (0..3).map(|k| s.vel[j][k] - s.vel[i][k]).collect();
                let rr = r.iter().map(|x| x * x).sum::<f64>() + eps * eps;
                let rv: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                for k in 0..3 {
                    acc[i][k] += s.grav_const * s.mass[j] * r[k] / rr.powf(1.5);
                    jerk[i][k] += s.grav_const
                        * s.mass[j]
                        * (v[k] / rr.powf(1.5) - 3.0 * rv * r[k] / rr.powf(2.5));
                }
            }
        }
        (acc, jerk)
    }

    #[test]
    fn single_particle_is_free() {
        let s = ParticleSystem::new(vec![1.0], vec![[1.0, 2.0, 3.0]], vec![[0.5; 3]]).unwrap();
        let f = golden_acc_jerk(&s, 1e-7).unwrap();
        assert_eq!(f.acc[0], [0.0; 3]);
        assert_eq!(f.jerk[0], [0.0; 3]);
    }

    #[test]
    fn unit_pair() {
        let s = ParticleSystem::new(
            vec![1.0, 1.0],
            vec![[0.0; 3], [1.0, 0.0, 0.0]],
            vec![[0.0; 3]; 2],
        )
        .unwrap();
        let f = golden_acc_jerk(&s, 0.0).unwrap();
        assert_eq!(f.acc, vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        assert!(f.jerk.iter().flatten().all(|&j| j == 0.0));
    }

    #[test]
    fn coincident_without_softening_is_singular() {
        let s = ParticleSystem::new(vec![1.0; 2], vec![[0.5; 3]; 2], vec![[0.0; 3]; 2]).unwrap();
        assert!(matches!(golden_acc_jerk(&s, 0.0), Err(Error::Singular(0, 1))));
        assert!(golden_acc_jerk(&s, 1e-3).is_ok());
    }

    #[test]
    fn agrees_with_textbook_form() {
        let s = three_body();
        let f = golden_acc_jerk(&s, 1e-3).unwrap();
        let (a, j) = textbook(&s, 1e-3);
        for i in 0..3 {
            for k in 0..3 {
                assert!((f.acc[i][k] - a[i][k]).abs() <= 8.0 * f64::EPSILON * a[i][k].abs().max(1.0));
                assert!((f.jerk[i][k] - j[i][k]).abs() <= 8.0 * f64::EPSILON * j[i][k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn newton_third_law() {
        let s = three_body();
        let f = golden_acc_jerk(&s, 1e-7).unwrap();
        let mut total = [0.0; 3];
        let mut scale = 0.0;
        for i in 0..3 {
            for k in 0..3 {
                total[k] += s.mass[i] * f.acc[i][k];
            }
            scale += s.mass[i] * crate::particles::norm(&f.acc[i]);
        }
        assert!(total.iter().all(|t| t.abs() <= 1e-12 * scale));
    }

    #[test]
    fn snap_matches_finite_difference_of_jerk() {
        // Advance the state along its own Taylor series and difference the jerk.
        let s = three_body();
        let eps = 1e-3;
        let f = golden_acc_jerk(&s, eps).unwrap();
        let snap = golden_snap(&s, &f.acc, eps).unwrap();
        let h = 1e-5;
        let shifted = |sign: f64| {
            let mut t = s.clone();
            for i in 0..3 {
                for k in 0..3 {
                    t.pos[i][k] += sign * h * s.vel[i][k] + 0.5 * h * h * f.acc[i][k];
                    t.vel[i][k] += sign * h * f.acc[i][k] + 0.5 * h * h * f.jerk[i][k];
                }
            }
            golden_acc_jerk(&t, eps).unwrap().jerk
        };
        let (up, dn) = (shifted(1.0), shifted(-1.0));
        for i in 0..3 {
            for k in 0..3 {
                let fd = (up[i][k] - dn[i][k]) / (2.0 * h);
                assert!((fd - snap[i][k]).abs() <= 1e-5 * snap[i][k].abs().max(1.0), "{fd} {}", snap[i][k]);
            }
        }
    }
}
