//! Polygonal relative equilibria of the n equal-mass primaries.
//!
//! The primaries sit at the vertices of a regular n-gon on a circle of
//! radius `r` parallel to the xy-plane, at height `zeta`, rotating
//! rigidly about the z-axis with the angular velocity determined by the
//! parity/space branch of the RE condition.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics;
use crate::error::{Error, Result};
use crate::geometry::{AmbientPoint, SpaceSign};

/// Sign choice for the angular velocity; the RE condition only fixes
/// Omega^2, so both rotation senses are valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OmegaSign {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl OmegaSign {
    fn factor(self) -> f64 {
        match self {
            OmegaSign::Positive => 1.0,
            OmegaSign::Negative => -1.0,
        }
    }
}

/// The primary system: a regular polygon relative equilibrium.
///
/// Immutable after construction; the constructors enforce the RE
/// condition, so `omega^2 == omega_squared(space, n, r)` always holds
/// (except for the equatorial family, where any omega is admissible).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolygonConfig {
    space: SpaceSign,
    n: usize,
    r: f64,
    zeta: f64,
    omega: f64,
    equator: bool,
}

impl PolygonConfig {
    /// Polygon RE at height zeta = sqrt(1 - sigma r^2 * sigma) with the
    /// angular velocity from the RE condition.
    pub fn new(space: SpaceSign, n: usize, r: f64, sign: OmegaSign) -> Result<Self> {
        let omega2 = omega_squared(space, n, r)?;
        let zeta = match space {
            SpaceSign::Sphere => (1.0 - r * r).sqrt(),
            SpaceSign::Hyperboloid => (1.0 + r * r).sqrt(),
        };
        Ok(PolygonConfig {
            space,
            n,
            r,
            zeta,
            omega: sign.factor() * omega2.sqrt(),
            equator: false,
        })
    }

    /// Equatorial family on S^2: n odd primaries on the equator form a
    /// relative equilibrium for any angular velocity.
    pub fn equator(n: usize, omega: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain("need at least 2 primaries".into()));
        }
        if n % 2 == 0 {
            return Err(Error::Domain(
                "equatorial polygon requires odd n (even n puts primaries at antipodal pairs)"
                    .into(),
            ));
        }
        Ok(PolygonConfig {
            space: SpaceSign::Sphere,
            n,
            r: 1.0,
            zeta: 0.0,
            omega,
            equator: true,
        })
    }

    pub fn space(&self) -> SpaceSign {
        self.space
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn zeta(&self) -> f64 {
        self.zeta
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn is_equator(&self) -> bool {
        self.equator
    }

    /// Returns a copy with the angular velocity scaled. The result is
    /// no longer a relative equilibrium; used by diagnostic tooling to
    /// confirm that the residual and rigidity checks detect it.
    pub fn with_omega_scaled(mut self, factor: f64) -> Self {
        self.omega *= factor;
        self
    }

    /// Planar components (k_i, h_i) = r (cos, sin)(2 pi (i-1)/n).
    pub fn planar_components(&self) -> Vec<(f64, f64)> {
        (0..self.n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / self.n as f64;
                (self.r * a.cos(), self.r * a.sin())
            })
            .collect()
    }
}

/// Squared angular velocity of the polygon RE, Omega^2 > 0.
pub fn omega_squared(space: SpaceSign, n: usize, r: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain("need at least 2 primaries".into()));
    }
    match space {
        SpaceSign::Sphere => {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Domain(format!(
                    "S^2 polygon requires 0 < r < 1 (got {r}); the equatorial case r = 1 \
                     is handled by PolygonConfig::equator"
                )));
            }
        }
        SpaceSign::Hyperboloid => {
            if r <= 0.0 {
                return Err(Error::Domain(format!("H^2 polygon requires r > 0 (got {r})")));
            }
        }
    }
    let sigma = space.sigma();
    let half = if n % 2 == 1 { (n + 1) / 2 - 1 } else { n / 2 - 1 };
    let mut total = 0.0;
    for j in 1..=half {
        let c = (2.0 * j as f64 * std::f64::consts::PI / n as f64).cos();
        // q_i . q_j = r^2 cos + sigma zeta^2 = r^2 cos + sigma (1 - sigma... )
        let ip = match space {
            SpaceSign::Sphere => r * r * c + 1.0 - r * r,
            SpaceSign::Hyperboloid => r * r * c - 1.0 - r * r,
        };
        total += 2.0 * (1.0 - c) / (sigma - sigma * ip * ip).powf(1.5);
    }
    if n % 2 == 0 {
        // opposite-vertex term
        let zeta2 = match space {
            SpaceSign::Sphere => 1.0 - r * r,
            SpaceSign::Hyperboloid => 1.0 + r * r,
        };
        total += 1.0 / (4.0 * r.powi(3) * zeta2.powf(1.5));
    }
    Ok(total)
}

/// Rotating-frame (time-independent) positions of the primaries.
pub fn primary_positions(config: &PolygonConfig) -> Vec<AmbientPoint> {
    config
        .planar_components()
        .into_iter()
        .map(|(k, h)| AmbientPoint::new_unchecked(k, h, config.zeta()))
        .collect()
}

/// Inertial-frame positions at time t: the polygon rotated by Omega t.
pub fn primary_trajectory(config: &PolygonConfig, t: f64) -> Vec<AmbientPoint> {
    let a = config.omega() * t;
    let (s, c) = a.sin_cos();
    primary_positions(config)
        .into_iter()
        .map(|q| AmbientPoint::new_unchecked(c * q.x - s * q.y, s * q.x + c * q.y, q.z))
        .collect()
}

/// Inertial-frame velocities at time t.
pub fn primary_velocities(config: &PolygonConfig, t: f64) -> Vec<[f64; 3]> {
    let omega = config.omega();
    primary_trajectory(config, t)
        .into_iter()
        .map(|q| [-omega * q.y, omega * q.x, 0.0])
        .collect()
}

/// Stereographic images of the primaries and of their exterior
/// (antipodal, on S^2) counterparts.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPrimaries {
    pub w: Vec<Complex64>,
    pub w_hat: Vec<Complex64>,
}

/// Projected primaries w_i = (k_i + i h_i)/(1 + zeta) and the exterior
/// images w_hat_i = -(k_i + i h_i)/(1 - zeta).
pub fn projected_primaries(config: &PolygonConfig) -> ProjectedPrimaries {
    let zeta = config.zeta();
    let mut w = Vec::with_capacity(config.n());
    let mut w_hat = Vec::with_capacity(config.n());
    for (k, h) in config.planar_components() {
        let c = Complex64::new(k, h);
        w.push(c / (1.0 + zeta));
        w_hat.push(-c / (1.0 - zeta));
    }
    ProjectedPrimaries { w, w_hat }
}

/// Max norm of the residual of the RE ansatz substituted into the
/// equations of motion at t = 0. Near machine precision for a genuine
/// relative equilibrium.
pub fn residual_check(config: &PolygonConfig) -> f64 {
    let omega = config.omega();
    let qs: Vec<[f64; 3]> = primary_positions(config).iter().map(|q| q.coords()).collect();
    let qds: Vec<[f64; 3]> = qs.iter().map(|q| [-omega * q[1], omega * q[0], 0.0]).collect();
    let accs = dynamics::nbody_accel_raw(config.space(), &qs, &qds)
        .expect("RE configuration has no coincident primaries");
    let mut worst: f64 = 0.0;
    for (acc, q) in accs.iter().zip(&qs) {
        let expected = [-omega * omega * q[0], -omega * omega * q[1], 0.0];
        for c in 0..3 {
            worst = worst.max((acc[c] - expected[c]).abs());
        }
    }
    worst
}
