use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::RenderError;

pub type V3 = Vector3<f64>;

/// Elevation of the four diagonal canonical views: the angle between a cube
/// diagonal and the horizontal plane, `atan(1/√2)` ≈ 35.264°.
pub fn diagonal_elevation_deg() -> f64 {
    (1.0 / 2f64.sqrt()).atan().to_degrees()
}

/// Orbit camera looking at the object centre. Azimuth 0 looks from the front
/// (+Z towards the origin), azimuth 90 from the right (+X); Y is up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    pub fov: f64,
    pub resolution: u32,
}

impl ViewSpec {
    pub fn validate(&self) -> Result<(), RenderError> {
        if !(-90.0..=90.0).contains(&self.elevation) {
            return Err(RenderError::InvalidView(format!("elevation {} outside [-90, 90]", self.elevation)));
        }
        if self.resolution < 16 {
            return Err(RenderError::InvalidView(format!("resolution {} below 16", self.resolution)));
        }
        if !(self.fov > 0.0 && self.fov < 180.0) || !(self.distance > 0.0) {
            return Err(RenderError::InvalidView(format!("fov {} / distance {}", self.fov, self.distance)));
        }
        Ok(())
    }

    /// Stable name used in file layouts: `top`, `front`, `front_right_upper`,
    /// ... for canonical directions, otherwise `az<deg>_el<deg>`.
    pub fn name(&self) -> String {
        let near = |a: f64, b: f64| (a - b).abs() < 1e-6;
        let az = self.azimuth.rem_euclid(360.0);
        if near(self.elevation, 90.0) {
            return "top".into();
        }
        if near(self.elevation, -90.0) {
            return "bottom".into();
        }
        let names: &[(f64, &str)] = if near(self.elevation, 0.0) {
            &[(0.0, "front"), (90.0, "right"), (180.0, "back"), (270.0, "left")]
        } else if near(self.elevation, diagonal_elevation_deg()) {
            &[
                (45.0, "front_right_upper"),
                (135.0, "rear_right_upper"),
                (225.0, "rear_left_upper"),
                (315.0, "front_left_upper"),
            ]
        } else {
            &[]
        };
        names
            .iter()
            .find(|(a, _)| near(az, *a))
            .map(|(_, n)| n.to_string())
            .unwrap_or_else(|| format!("az{}_el{}", self.azimuth, self.elevation))
    }

    /// Unit vector from the target towards the camera.
    pub fn direction(&self) -> V3 {
        let (az, el) = (self.azimuth.to_radians(), self.elevation.to_radians());
        V3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos())
    }

    /// Bits of every field, used to key per-view random streams.
    pub(crate) fn key(&self) -> u64 {
        let mut h = 0x9E37_79B9_7F4A_7C15u64;
        for v in [
            self.azimuth.to_bits(),
            self.elevation.to_bits(),
            self.distance.to_bits(),
            self.fov.to_bits(),
            self.resolution as u64,
        ] {
            h = super::mix64(h ^ v);
        }
        h
    }
}

/// The ten canonical views in a fixed order: top, bottom, the four horizontal
/// directions (azimuth 0, 90, 180, 270) and the four diagonal directions
/// (azimuth 45, 135, 225, 315 at [`diagonal_elevation_deg`]).
pub fn canonical_views(distance: f64, fov: f64, resolution: u32) -> Vec<ViewSpec> {
    let v = |azimuth, elevation| ViewSpec { azimuth, elevation, distance, fov, resolution };
    let diag = diagonal_elevation_deg();
    vec![
        v(0.0, 90.0),
        v(0.0, -90.0),
        v(0.0, 0.0),
        v(90.0, 0.0),
        v(180.0, 0.0),
        v(270.0, 0.0),
        v(45.0, diag),
        v(135.0, diag),
        v(225.0, diag),
        v(315.0, diag),
    ]
}

/// Camera distance at which a sphere of `radius` fits the field of view with
/// the given margin factor.
pub fn framing_distance(radius: f64, fov: f64, margin: f64) -> f64 {
    margin * radius.max(1e-9) / (0.5 * fov.to_radians()).sin()
}

/// Pinhole camera frame for a view around `target`.
#[derive(Clone, Copy, Debug)]
pub struct Camera {
    pub origin: V3,
    forward: V3,
    right: V3,
    up: V3,
    tan_half: f64,
    resolution: u32,
}

impl Camera {
    pub fn new(view: &ViewSpec, target: V3) -> Self {
        let dir = view.direction();
        let origin = target + dir * view.distance;
        let forward = -dir;
        // Straight up/down views need an explicit up vector; the image top
        // then points towards the back for `top` and the front for `bottom`.
        let world_up = if view.elevation >= 90.0 - 1e-9 {
            V3::new(0.0, 0.0, -1.0)
        } else if view.elevation <= -90.0 + 1e-9 {
            V3::new(0.0, 0.0, 1.0)
        } else {
            V3::y()
        };
        let right = forward.cross(&world_up).normalize();
        let up = right.cross(&forward);
        Self { origin, forward, right, up, tan_half: (0.5 * view.fov.to_radians()).tan(), resolution: view.resolution }
    }

    /// Ray direction through image position `(px, py)` in pixel units, with
    /// (0, 0) the top-left corner.
    pub fn ray_dir(&self, px: f64, py: f64) -> V3 {
        let n = self.resolution as f64;
        let sx = (2.0 * px / n - 1.0) * self.tan_half;
        let sy = (1.0 - 2.0 * py / n) * self.tan_half;
        (self.forward + self.right * sx + self.up * sy).normalize()
    }

    /// Projects a world point to continuous pixel coordinates and its depth
    /// along the view axis; `None` behind the camera.
    pub fn project(&self, p: V3) -> Option<(f64, f64, f64)> {
        let d = p - self.origin;
        let z = d.dot(&self.forward);
        if z <= 1e-12 {
            return None;
        }
        let sx = d.dot(&self.right) / (z * self.tan_half);
        let sy = d.dot(&self.up) / (z * self.tan_half);
        let n = self.resolution as f64;
        Some(((sx + 1.0) * 0.5 * n, (1.0 - sy) * 0.5 * n, z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_named_views() {
        let views = canonical_views(3.0, 40.0, 64);
        let names: Vec<String> = views.iter().map(ViewSpec::name).collect();
        assert_eq!(
            names,
            [
                "top",
                "bottom",
                "front",
                "right",
                "back",
                "left",
                "front_right_upper",
                "rear_right_upper",
                "rear_left_upper",
                "front_left_upper"
            ]
        );
    }

    #[test]
    fn front_and_right_directions() {
        let v = canonical_views(1.0, 40.0, 64);
        assert!((v[2].direction() - V3::z()).norm() < 1e-12);
        assert!((v[3].direction() - V3::x()).norm() < 1e-12);
        assert!((v[0].direction() - V3::y()).norm() < 1e-12);
    }

    #[test]
    fn project_inverts_ray_dir() {
        for view in canonical_views(4.0, 35.0, 64) {
            let cam = Camera::new(&view, V3::new(0.1, -0.2, 0.3));
            let d = cam.ray_dir(13.25, 40.5);
            let (px, py, z) = cam.project(cam.origin + d * 2.0).unwrap();
            assert!((px - 13.25).abs() < 1e-9 && (py - 40.5).abs() < 1e-9 && z > 0.0);
        }
    }
}
