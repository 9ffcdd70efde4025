//! The two model surfaces of constant curvature and the maps between
//! them and the stereographic plane.
//!
//! Everything is expressed in the unified sigma notation: `sigma = +1`
//! selects the unit sphere S^2 with the Euclidean inner product,
//! `sigma = -1` the upper sheet of the unit hyperboloid H^2 with the
//! Lorentzian inner product.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for membership in the surface constraint q (.) q = sigma.
pub const SURFACE_TOL: f64 = 1e-12;

/// Slack allowed before `acos`/`acosh` arguments are declared invalid.
pub const CLAMP_TOL: f64 = 1e-9;

/// Curvature selector: S^2 (`sigma = +1`) or H^2 (`sigma = -1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpaceSign {
    #[serde(rename = "s2")]
    Sphere,
    #[serde(rename = "h2")]
    Hyperboloid,
}

impl SpaceSign {
    pub fn sigma(self) -> f64 {
        match self {
            SpaceSign::Sphere => 1.0,
            SpaceSign::Hyperboloid => -1.0,
        }
    }
}

impl std::fmt::Display for SpaceSign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpaceSign::Sphere => write!(f, "s2"),
            SpaceSign::Hyperboloid => write!(f, "h2"),
        }
    }
}

impl std::str::FromStr for SpaceSign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s2" | "S2" | "sphere" => Ok(SpaceSign::Sphere),
            "h2" | "H2" | "hyperboloid" => Ok(SpaceSign::Hyperboloid),
            other => Err(Error::Domain(format!("unknown space `{other}` (use s2 or h2)"))),
        }
    }
}

/// A point of the ambient R^3 lying on the selected surface.
///
/// On H^2 only the upper sheet (z >= 1) is admitted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbientPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl AmbientPoint {
    /// Builds a point and checks the surface constraint to `SURFACE_TOL`.
    pub fn on_surface(space: SpaceSign, x: f64, y: f64, z: f64) -> Result<Self> {
        let p = AmbientPoint { x, y, z };
        let c = dot(space, &p.coords(), &p.coords());
        if (c - space.sigma()).abs() > SURFACE_TOL {
            return Err(Error::Domain(format!(
                "point ({x}, {y}, {z}) violates q.q = {} (got {c})",
                space.sigma()
            )));
        }
        if space == SpaceSign::Hyperboloid && z < 1.0 - SURFACE_TOL {
            return Err(Error::Domain(format!(
                "point ({x}, {y}, {z}) is not on the upper sheet of H^2"
            )));
        }
        Ok(p)
    }

    /// Builds a point without validation. For use where the constraint
    /// is guaranteed by construction (e.g. integrator interiors).
    pub fn new_unchecked(x: f64, y: f64, z: f64) -> Self {
        AmbientPoint { x, y, z }
    }

    pub fn coords(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Stereographic image of a surface point: the whole plane for S^2,
/// the open unit (Poincare) disk for H^2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub u: f64,
    pub v: f64,
}

impl PlanePoint {
    pub fn new(u: f64, v: f64) -> Self {
        PlanePoint { u, v }
    }

    pub fn complex(&self) -> Complex64 {
        Complex64::new(self.u, self.v)
    }

    pub fn from_complex(z: Complex64) -> Self {
        PlanePoint { u: z.re, v: z.im }
    }

    pub fn rho2(&self) -> f64 {
        self.u * self.u + self.v * self.v
    }
}

/// Sigma inner product of two ambient vectors: Euclidean on S^2,
/// Lorentzian (+, +, -) on H^2.
pub fn dot(space: SpaceSign, a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + space.sigma() * a[2] * b[2]
}

/// Geodesic distance between two surface points.
pub fn geodesic_distance(space: SpaceSign, a: &AmbientPoint, b: &AmbientPoint) -> Result<f64> {
    let c = dot(space, &a.coords(), &b.coords());
    match space {
        SpaceSign::Sphere => Ok(c.clamp(-1.0, 1.0).acos()),
        SpaceSign::Hyperboloid => {
            // On the upper sheet a.b <= -1; roundoff may push -a.b slightly below 1.
            let m = -c;
            if m < 1.0 - CLAMP_TOL {
                return Err(Error::Domain(format!(
                    "points are off the hyperboloid sheet (-a.b = {m} < 1)"
                )));
            }
            Ok(m.max(1.0).acosh())
        }
    }
}

/// cot(d) on S^2, coth(d) on H^2.
pub fn cotn(space: SpaceSign, d: f64) -> Result<f64> {
    if d <= 0.0 {
        return Err(Error::Singularity(format!("cotn singular at d = {d}")));
    }
    match space {
        SpaceSign::Sphere => {
            if d >= std::f64::consts::PI {
                return Err(Error::Singularity(format!(
                    "cot singular at d = {d} (antipodal distance pi)"
                )));
            }
            Ok(1.0 / d.tan())
        }
        SpaceSign::Hyperboloid => Ok(1.0 / d.tanh()),
    }
}

/// Stereographic projection from (0, 0, -1): u = x/(1+z), v = y/(1+z).
pub fn project(space: SpaceSign, q: &AmbientPoint) -> Result<PlanePoint> {
    let den = 1.0 + q.z;
    if den.abs() < 1e-14 {
        return Err(Error::Singularity(
            "stereographic projection singular at the south pole".into(),
        ));
    }
    let _ = space;
    Ok(PlanePoint::new(q.x / den, q.y / den))
}

/// Inverse stereographic projection onto the surface.
pub fn unproject(space: SpaceSign, p: &PlanePoint) -> Result<AmbientPoint> {
    let rho2 = p.rho2();
    let den = 1.0 + space.sigma() * rho2;
    if space == SpaceSign::Hyperboloid && rho2 >= 1.0 {
        return Err(Error::Domain(format!(
            "point (u, v) with rho^2 = {rho2} lies outside the Poincare disk"
        )));
    }
    Ok(AmbientPoint::new_unchecked(
        2.0 * p.u / den,
        2.0 * p.v / den,
        (1.0 - space.sigma() * rho2) / den,
    ))
}

/// Tangent map of `unproject`: plane velocity (du, dv) to ambient velocity.
pub fn unproject_tangent(space: SpaceSign, p: &PlanePoint, du: f64, dv: f64) -> Result<[f64; 3]> {
    let sigma = space.sigma();
    let rho2 = p.rho2();
    if space == SpaceSign::Hyperboloid && rho2 >= 1.0 {
        return Err(Error::Domain("outside the Poincare disk".into()));
    }
    let w = 1.0 + sigma * rho2;
    let w2 = w * w;
    let dxi_du = 2.0 / w - 4.0 * sigma * p.u * p.u / w2;
    let dxi_dv = -4.0 * sigma * p.u * p.v / w2;
    let deta_du = -4.0 * sigma * p.u * p.v / w2;
    let deta_dv = 2.0 / w - 4.0 * sigma * p.v * p.v / w2;
    let dth_du = -4.0 * sigma * p.u / w2;
    let dth_dv = -4.0 * sigma * p.v / w2;
    Ok([
        dxi_du * du + dxi_dv * dv,
        deta_du * du + deta_dv * dv,
        dth_du * du + dth_dv * dv,
    ])
}

/// Conformal factor of the projected metric, lambda = 4/(1 + sigma rho^2)^2.
pub fn conformal_factor(space: SpaceSign, p: &PlanePoint) -> Result<f64> {
    let rho2 = p.rho2();
    if space == SpaceSign::Hyperboloid && rho2 >= 1.0 {
        return Err(Error::Domain(format!(
            "point (u, v) with rho^2 = {rho2} lies outside the Poincare disk"
        )));
    }
    let den = 1.0 + space.sigma() * rho2;
    Ok(4.0 / (den * den))
}
