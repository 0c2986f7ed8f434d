use rand::Rng;
use serde::{Deserialize, Serialize};

use super::camera::V3;

/// Total power shared by the three point lights of a sampled rig, in watts.
pub const POINT_POWER_TOTAL: f64 = 180.0;
pub const AREA_POWER_RANGE: (f64, f64) = (10.0, 500.0);
pub const ENV_RANGE: (f64, f64) = (0.5, 2.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointLight {
    pub position: [f64; 3],
    /// Radiant power in watts; intensity is `power / 4π` W/sr.
    pub power: f64,
}

impl PointLight {
    pub fn intensity(&self) -> f64 {
        self.power / (4.0 * std::f64::consts::PI)
    }
}

/// One-sided disk emitter facing along `normal`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaLight {
    pub center: [f64; 3],
    pub radius: f64,
    pub normal: [f64; 3],
    pub power: f64,
}

impl AreaLight {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.radius * self.radius
    }

    /// Constant outgoing radiance `power / (π · area)`.
    pub fn radiance(&self) -> f64 {
        let a = self.area();
        if a > 0.0 {
            self.power / (std::f64::consts::PI * a)
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightRig {
    pub point_lights: Vec<PointLight>,
    pub area_light: AreaLight,
    /// Radiance of the constant environment dome.
    pub env_intensity: f64,
}

impl LightRig {
    /// No lights at all; only emissive surfaces contribute.
    pub fn dark() -> Self {
        Self {
            point_lights: Vec::new(),
            area_light: AreaLight { center: [0.0; 3], radius: 0.0, normal: [0.0, -1.0, 0.0], power: 0.0 },
            env_intensity: 0.0,
        }
    }

    pub fn total_point_power(&self) -> f64 {
        self.point_lights.iter().map(|l| l.power).sum()
    }

    /// Checks the ranges a randomly sampled rig must respect.
    pub fn within_protocol(&self) -> bool {
        let total = self.total_point_power();
        self.point_lights.len() == 3
            && (170.0..=190.0).contains(&total)
            && (AREA_POWER_RANGE.0..=AREA_POWER_RANGE.1).contains(&self.area_light.power)
            && (ENV_RANGE.0..=ENV_RANGE.1).contains(&self.env_intensity)
    }
}

fn unit_sphere<R: Rng + ?Sized>(rng: &mut R) -> V3 {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).max(0.0).sqrt();
    V3::new(s * phi.cos(), z, s * phi.sin())
}

/// Draws a randomized rig around an object with bounding sphere
/// (`center`, `radius`).
///
/// Point lights are uniform in the volume of the shell between 2 and 4
/// radii; their powers split [`POINT_POWER_TOTAL`] uniformly on the simplex.
/// The disk light sits on the upper hemisphere at 3 radii facing the centre,
/// with radius U(0.5, 2)·R and power U(10, 500) W. Environment radiance is
/// U(0.5, 2).
pub fn sample_light_rig<R: Rng + ?Sized>(rng: &mut R, center: [f64; 3], radius: f64) -> LightRig {
    let c = V3::from(center);
    let r = radius.max(1e-6);
    let point_lights = {
        let mut cuts = [rng.random::<f64>(), rng.random::<f64>()];
        cuts.sort_by(f64::total_cmp);
        let shares = [cuts[0], cuts[1] - cuts[0], 1.0 - cuts[1]];
        shares
            .iter()
            .map(|&share| {
                let u: f64 = rng.random();
                let shell = (8.0 + u * (64.0 - 8.0)).cbrt() * r;
                let p = c + unit_sphere(rng) * shell;
                PointLight { position: p.into(), power: share * POINT_POWER_TOTAL }
            })
            .collect()
    };
    let mut up = unit_sphere(rng);
    up.y = up.y.abs();
    let area_center = c + up * (3.0 * r);
    let area_light = AreaLight {
        center: area_center.into(),
        radius: rng.random_range(0.5..=2.0) * r,
        normal: (-up).into(),
        power: rng.random_range(AREA_POWER_RANGE.0..=AREA_POWER_RANGE.1),
    };
    let env_intensity = rng.random_range(ENV_RANGE.0..=ENV_RANGE.1);
    LightRig { point_lights, area_light, env_intensity }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_seed_same_rig() {
        let a = sample_light_rig(&mut ChaCha8Rng::seed_from_u64(0), [0.0; 3], 1.0);
        let b = sample_light_rig(&mut ChaCha8Rng::seed_from_u64(0), [0.0; 3], 1.0);
        assert_eq!(a, b);
    }

    #[test]
    fn positions_respect_shell_and_hemisphere() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let rig = sample_light_rig(&mut rng, [1.0, 2.0, 3.0], 0.5);
            assert!(rig.within_protocol());
            for l in &rig.point_lights {
                let d = (V3::from(l.position) - V3::new(1.0, 2.0, 3.0)).norm();
                assert!((1.0 - 1e-9..=2.0 + 1e-9).contains(&d));
            }
            assert!(rig.area_light.center[1] >= 2.0);
            let n = V3::from(rig.area_light.normal);
            assert!((n.norm() - 1.0).abs() < 1e-9 && n.y <= 0.0);
        }
    }
}
