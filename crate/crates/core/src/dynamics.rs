//! Vector fields and energies of the restricted problem.
//!
//! The full constrained n-body field serves as the oracle for the
//! relative equilibria; the restricted particle is evolved through the
//! rotating-frame Hamiltonian in stereographic coordinates. The
//! complex-variable closed form of the potential is the algebraic
//! backbone of the regularizing charts.
//!
//! Sign note: the projected potential carries an overall factor sigma
//! relative to the bare numerator/denominator quotient, i.e.
//! U = sum_j sigma N_j / sqrt(S_j). This is what makes U the pullback of
//! the cotangent potential on both surfaces (on H^2 the quotient without
//! sigma is -coth of the distance, which would flip the force).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::equilibria::{primary_trajectory, projected_primaries, PolygonConfig};
use crate::error::{Error, Result};
use crate::geometry::{dot, AmbientPoint, PlanePoint, SpaceSign};

/// Guard on squared-sine/sinh denominators; crossing it is an error,
/// never a large finite value. Collision handling belongs to the
/// regularization module.
pub const EPS_SING: f64 = 1e-12;

/// Canonical state of the massless particle in stereographic rotating
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedState {
    pub u: f64,
    pub v: f64,
    pub p_u: f64,
    pub p_v: f64,
}

impl ProjectedState {
    pub fn new(u: f64, v: f64, p_u: f64, p_v: f64) -> Self {
        ProjectedState { u, v, p_u, p_v }
    }

    pub fn position(&self) -> PlanePoint {
        PlanePoint::new(self.u, self.v)
    }

    pub fn complex(&self) -> ComplexState {
        ComplexState {
            z: Complex64::new(self.u, self.v),
            big_z: Complex64::new(self.p_u, self.p_v),
        }
    }
}

/// Complex view of a projected state: z = u + iv, Z = p_u + i p_v.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexState {
    pub z: Complex64,
    pub big_z: Complex64,
}

impl ComplexState {
    pub fn new(z: Complex64, big_z: Complex64) -> Self {
        ComplexState { z, big_z }
    }

    pub fn projected(&self) -> ProjectedState {
        ProjectedState::new(self.z.re, self.z.im, self.big_z.re, self.big_z.im)
    }
}

/// Ambient position and velocity of one body, tangent to the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyState {
    pub q: AmbientPoint,
    pub qdot: [f64; 3],
}

impl BodyState {
    /// Checks both the surface constraint and tangency q (.) qdot = 0.
    pub fn new(space: SpaceSign, q: AmbientPoint, qdot: [f64; 3]) -> Result<Self> {
        let c = dot(space, &q.coords(), &q.coords());
        if (c - space.sigma()).abs() > 1e-10 {
            return Err(Error::Domain(format!("q.q = {c}, expected {}", space.sigma())));
        }
        let t = dot(space, &q.coords(), &qdot);
        if t.abs() > 1e-10 {
            return Err(Error::Domain(format!("velocity not tangent: q.qdot = {t}")));
        }
        Ok(BodyState { q, qdot })
    }
}

fn pair_denominator(space: SpaceSign, qi: &[f64; 3], qj: &[f64; 3]) -> Result<(f64, f64)> {
    let sigma = space.sigma();
    let d = dot(space, qi, qj);
    let s = sigma - sigma * d * d;
    if s <= EPS_SING {
        return Err(match space {
            SpaceSign::Sphere if d < 0.0 => {
                Error::Antipodal(format!("bodies at antipodal distance (q_i.q_j = {d})"))
            }
            _ => Error::Collision(format!("bodies at zero distance (q_i.q_j = {d})")),
        });
    }
    Ok((d, s))
}

/// Accelerations of the full constrained n-body field on raw arrays.
pub fn nbody_accel_raw(
    space: SpaceSign,
    qs: &[[f64; 3]],
    qds: &[[f64; 3]],
) -> Result<Vec<[f64; 3]>> {
    let sigma = space.sigma();
    let mut out = Vec::with_capacity(qs.len());
    for (i, qi) in qs.iter().enumerate() {
        let vv = dot(space, &qds[i], &qds[i]);
        let mut acc = [
            -sigma * vv * qi[0],
            -sigma * vv * qi[1],
            -sigma * vv * qi[2],
        ];
        for (j, qj) in qs.iter().enumerate() {
            if j == i {
                continue;
            }
            let (d, s) = pair_denominator(space, qi, qj)?;
            let inv = 1.0 / s.powf(1.5);
            for c in 0..3 {
                acc[c] += (qj[c] - sigma * d * qi[c]) * inv;
            }
        }
        out.push(acc);
    }
    Ok(out)
}

/// Accelerations of the full n-body field (Euler-Lagrange form with the
/// constraint term) for validated body states.
pub fn nbody_field(space: SpaceSign, states: &[BodyState]) -> Result<Vec<[f64; 3]>> {
    let qs: Vec<[f64; 3]> = states.iter().map(|s| s.q.coords()).collect();
    let qds: Vec<[f64; 3]> = states.iter().map(|s| s.qdot).collect();
    nbody_accel_raw(space, &qs, &qds)
}

/// Inertial-frame acceleration of the massless particle attracted by the
/// n rotating primaries at time t.
pub fn restricted_field(config: &PolygonConfig, state: &BodyState, t: f64) -> Result<[f64; 3]> {
    let space = config.space();
    let sigma = space.sigma();
    let q = state.q.coords();
    let vv = dot(space, &state.qdot, &state.qdot);
    let mut acc = [-sigma * vv * q[0], -sigma * vv * q[1], -sigma * vv * q[2]];
    for qi in primary_trajectory(config, t) {
        let qi = qi.coords();
        let (d, s) = pair_denominator(space, &q, &qi)?;
        let inv = 1.0 / s.powf(1.5);
        for c in 0..3 {
            acc[c] += (qi[c] - sigma * d * q[c]) * inv;
        }
    }
    Ok(acc)
}

/// One term of the projected potential with its (u, v) gradient.
struct PotentialTerm {
    value: f64,
    du: f64,
    dv: f64,
}

fn potential_terms(config: &PolygonConfig, u: f64, v: f64) -> Result<Vec<PotentialTerm>> {
    let space = config.space();
    let sigma = space.sigma();
    let zeta = config.zeta();
    let rho2 = u * u + v * v;
    if space == SpaceSign::Hyperboloid && rho2 >= 1.0 {
        return Err(Error::Domain(format!(
            "(u, v) with rho^2 = {rho2} outside the Poincare disk"
        )));
    }
    let a = 1.0 + sigma * rho2;
    let pp = projected_primaries(config);
    let z = Complex64::new(u, v);
    let mut out = Vec::with_capacity(config.n());
    for (j, (k, h)) in config.planar_components().into_iter().enumerate() {
        let n_j = 2.0 * k * u + 2.0 * h * v + sigma * zeta * (1.0 - sigma * rho2);
        let s_j = sigma * a * a - sigma * n_j * n_j;
        if s_j <= EPS_SING {
            let dc = (z - pp.w[j]).norm();
            let da = (z - pp.w_hat[j]).norm();
            return Err(if space == SpaceSign::Sphere && da < dc {
                Error::Antipodal(format!("particle at the antipode of primary {}", j + 1))
            } else {
                Error::Collision(format!("particle at primary {}", j + 1))
            });
        }
        let n_u = 2.0 * k - 2.0 * zeta * u;
        let n_v = 2.0 * h - 2.0 * zeta * v;
        let s_u = 4.0 * u * a - 2.0 * sigma * n_j * n_u;
        let s_v = 4.0 * v * a - 2.0 * sigma * n_j * n_v;
        let d = s_j.sqrt();
        out.push(PotentialTerm {
            value: sigma * n_j / d,
            du: sigma * (n_u / d - n_j * s_u / (2.0 * d * s_j)),
            dv: sigma * (n_v / d - n_j * s_v / (2.0 * d * s_j)),
        });
    }
    Ok(out)
}

/// Projected gravitational potential U(u, v) (pullback of the cotangent
/// potential).
pub fn potential_u(config: &PolygonConfig, u: f64, v: f64) -> Result<f64> {
    Ok(potential_terms(config, u, v)?.iter().map(|t| t.value).sum())
}

/// Gradient of U(u, v).
pub fn potential_u_gradient(config: &PolygonConfig, u: f64, v: f64) -> Result<(f64, f64)> {
    let terms = potential_terms(config, u, v)?;
    Ok((
        terms.iter().map(|t| t.du).sum(),
        terms.iter().map(|t| t.dv).sum(),
    ))
}

/// Effective potential Psi + U governing the rotating-frame dynamics.
pub fn effective_potential(config: &PolygonConfig, p: &PlanePoint) -> Result<f64> {
    let sigma = config.space().sigma();
    let rho2 = p.rho2();
    let omega = config.omega();
    let psi = 2.0 * omega * omega * rho2 / (1.0 + sigma * rho2);
    Ok(psi + potential_u(config, p.u, p.v)?)
}

/// Rotating-frame Hamiltonian in stereographic canonical coordinates.
pub fn hamiltonian(config: &PolygonConfig, s: &ProjectedState) -> Result<f64> {
    let sigma = config.space().sigma();
    let omega = config.omega();
    let rho2 = s.u * s.u + s.v * s.v;
    let a = 1.0 + sigma * rho2;
    let p2 = s.p_u * s.p_u + s.p_v * s.p_v;
    Ok(a * a / 8.0 * p2 + omega * (s.v * s.p_u - s.u * s.p_v) - potential_u(config, s.u, s.v)?)
}

/// Converts rotating-frame plane velocity to conjugate momenta:
/// p_u = lambda (udot - Omega v), p_v = lambda (vdot + Omega u).
pub fn velocity_to_momentum(
    config: &PolygonConfig,
    p: &PlanePoint,
    udot: f64,
    vdot: f64,
) -> Result<ProjectedState> {
    let lambda = crate::geometry::conformal_factor(config.space(), p)?;
    let omega = config.omega();
    Ok(ProjectedState::new(
        p.u,
        p.v,
        lambda * (udot - omega * p.v),
        lambda * (vdot + omega * p.u),
    ))
}

/// Plane velocity recovered from a projected state (the position half of
/// the canonical field).
pub fn momentum_to_velocity(config: &PolygonConfig, s: &ProjectedState) -> (f64, f64) {
    let sigma = config.space().sigma();
    let omega = config.omega();
    let a = 1.0 + sigma * (s.u * s.u + s.v * s.v);
    (
        a * a / 4.0 * s.p_u + omega * s.v,
        a * a / 4.0 * s.p_v - omega * s.u,
    )
}

/// Canonical vector field of the Hamiltonian, all partials analytic.
pub fn hamiltonian_field(config: &PolygonConfig, s: &ProjectedState) -> Result<[f64; 4]> {
    let sigma = config.space().sigma();
    let omega = config.omega();
    let rho2 = s.u * s.u + s.v * s.v;
    let a = 1.0 + sigma * rho2;
    let p2 = s.p_u * s.p_u + s.p_v * s.p_v;
    let (u_u, u_v) = potential_u_gradient(config, s.u, s.v)?;
    let dh_du = sigma * s.u * a / 2.0 * p2 - omega * s.p_v - u_u;
    let dh_dv = sigma * s.v * a / 2.0 * p2 + omega * s.p_u - u_v;
    let dh_dpu = a * a / 4.0 * s.p_u + omega * s.v;
    let dh_dpv = a * a / 4.0 * s.p_v - omega * s.u;
    Ok([dh_dpu, dh_dpv, -dh_du, -dh_dv])
}

/// Closed-form potential in the complex variable,
/// V = sum_j sigma N_j / (r |z - w_j| |z - w_hat_j|).
pub fn potential_closed_form(config: &PolygonConfig, z: Complex64) -> Result<f64> {
    let space = config.space();
    let sigma = space.sigma();
    let zeta = config.zeta();
    let r = config.r();
    let rho2 = z.norm_sqr();
    if space == SpaceSign::Hyperboloid && rho2 >= 1.0 {
        return Err(Error::Domain(format!(
            "z with |z|^2 = {rho2} outside the Poincare disk"
        )));
    }
    let pp = projected_primaries(config);
    let mut total = 0.0;
    for (j, (k, h)) in config.planar_components().into_iter().enumerate() {
        let n_j = 2.0 * k * z.re + 2.0 * h * z.im + sigma * zeta * (1.0 - sigma * rho2);
        let dc = (z - pp.w[j]).norm();
        let da = (z - pp.w_hat[j]).norm();
        let den = r * dc * da;
        if den * den <= EPS_SING {
            return Err(if space == SpaceSign::Sphere && da < dc {
                Error::Antipodal(format!("z at the antipode of primary {}", j + 1))
            } else {
                Error::Collision(format!("z at primary {}", j + 1))
            });
        }
        total += sigma * n_j / den;
    }
    Ok(total)
}

/// Complex-variable Hamiltonian H_c = 2 H.
pub fn complex_hamiltonian(config: &PolygonConfig, cs: &ComplexState) -> Result<f64> {
    let sigma = config.space().sigma();
    let omega = config.omega();
    let a = 1.0 + sigma * cs.z.norm_sqr();
    Ok(a * a / 4.0 * cs.big_z.norm_sqr() + 2.0 * omega * (cs.z * cs.big_z.conj()).im
        - 2.0 * potential_closed_form(config, cs.z)?)
}
