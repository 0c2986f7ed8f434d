//! glTF metallic-roughness BRDF: Lambert diffuse plus GGX Cook-Torrance
//! specular with Schlick Fresnel and separable Smith masking.

use std::f64::consts::PI;

use super::camera::V3;

/// Lower bound on GGX alpha to keep the distribution finite.
const MIN_ALPHA: f64 = 1e-3;

#[derive(Clone, Copy, Debug)]
pub struct Brdf {
    n: V3,
    t: V3,
    b: V3,
    albedo: V3,
    metallic: f64,
    alpha: f64,
    f0: V3,
    p_spec: f64,
}

fn basis(n: &V3) -> (V3, V3) {
    let a = if n.x.abs() > 0.9 { V3::y() } else { V3::x() };
    let t = n.cross(&a).normalize();
    (t, n.cross(&t))
}

impl Brdf {
    /// `n` must be unit and on the same side as the outgoing direction.
    pub fn new(n: V3, albedo: [f32; 3], metallic: f32, roughness: f32) -> Self {
        let albedo = V3::new(albedo[0] as f64, albedo[1] as f64, albedo[2] as f64);
        let metallic = (metallic as f64).clamp(0.0, 1.0);
        let r = (roughness as f64).clamp(0.0, 1.0);
        let f0 = V3::repeat(0.04) * (1.0 - metallic) + albedo * metallic;
        let (t, b) = basis(&n);
        Self { n, t, b, albedo, metallic, alpha: (r * r).max(MIN_ALPHA), f0, p_spec: 0.2 + 0.8 * metallic }
    }

    fn d(&self, nh: f64) -> f64 {
        let a2 = self.alpha * self.alpha;
        let k = nh * nh * (a2 - 1.0) + 1.0;
        a2 / (PI * k * k)
    }

    fn g1(&self, nx: f64) -> f64 {
        let a2 = self.alpha * self.alpha;
        2.0 * nx / (nx + (a2 + (1.0 - a2) * nx * nx).sqrt())
    }

    fn fresnel(&self, vh: f64) -> V3 {
        let w = (1.0 - vh.clamp(0.0, 1.0)).powi(5);
        self.f0 + (V3::repeat(1.0) - self.f0) * w
    }

    /// BRDF value for unit directions pointing away from the surface.
    pub fn eval(&self, wo: &V3, wi: &V3) -> V3 {
        let nl = self.n.dot(wi);
        let nv = self.n.dot(wo);
        if nl <= 0.0 || nv <= 0.0 {
            return V3::zeros();
        }
        let h = (wi + wo).normalize();
        let nh = self.n.dot(&h).max(0.0);
        let vh = wo.dot(&h).max(0.0);
        let f = self.fresnel(vh);
        let spec = f * (self.d(nh) * self.g1(nl) * self.g1(nv) / (4.0 * nl * nv));
        let kd = (V3::repeat(1.0) - f) * ((1.0 - self.metallic) / PI);
        spec + kd.component_mul(&self.albedo)
    }

    /// Solid-angle density of [`Brdf::sample`].
    pub fn pdf(&self, wo: &V3, wi: &V3) -> f64 {
        let nl = self.n.dot(wi);
        if nl <= 0.0 || self.n.dot(wo) <= 0.0 {
            return 0.0;
        }
        let h = (wi + wo).normalize();
        let nh = self.n.dot(&h).max(0.0);
        let vh = wo.dot(&h).max(1e-12);
        let spec = self.d(nh) * nh / (4.0 * vh);
        self.p_spec * spec + (1.0 - self.p_spec) * nl / PI
    }

    /// Draws an incident direction from the lobe mixture; `None` when the
    /// specular reflection falls below the surface.
    pub fn sample(&self, wo: &V3, u_lobe: f64, u1: f64, u2: f64) -> Option<V3> {
        let local = |x: f64, y: f64, z: f64| self.t * x + self.b * y + self.n * z;
        let wi = if u_lobe < self.p_spec {
            let a2 = self.alpha * self.alpha;
            let cos2 = (1.0 - u2) / (1.0 + (a2 - 1.0) * u2);
            let cos = cos2.max(0.0).sqrt();
            let sin = (1.0 - cos2).max(0.0).sqrt();
            let phi = 2.0 * PI * u1;
            let h = local(sin * phi.cos(), sin * phi.sin(), cos);
            h * (2.0 * wo.dot(&h)) - wo
        } else {
            let r = u1.sqrt();
            let phi = 2.0 * PI * u2;
            local(r * phi.cos(), r * phi.sin(), (1.0 - u1).max(0.0).sqrt())
        };
        (self.n.dot(&wi) > 0.0).then(|| wi.normalize())
    }
}
