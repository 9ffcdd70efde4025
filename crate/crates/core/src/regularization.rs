//! Regularizing charts for binary collisions between the massless
//! particle and the primaries.
//!
//! The local chart is the Levi-Civita-type quadratic map z = w^2 + w_k
//! centred at primary k; the global chart is the Birkhoff-type rational
//! map z = alpha w + beta / w^(n-1) that fixes every primary and has
//! g'(w_i) = 0 at all of them. In either chart the motion is generated
//! by the shifted Hamiltonian
//! Hhat = |g'(w)|^2 (H + C/2) with C = -2 H(initial state),
//! integrated at the zero energy level in fictitious time s with
//! dt/ds = |g'(w)|^2. The product |g'|^2 V is evaluated in a
//! cancellation-aware form: the vanishing chart factor is divided out of
//! the matching collision denominator symbolically, never as a 0 * inf
//! product, so the field stays finite through collision.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{hamiltonian, ProjectedState, EPS_SING};
use crate::equilibria::{projected_primaries, PolygonConfig};
use crate::error::{Error, Result};
use crate::geometry::SpaceSign;
use crate::roots::polynomial_roots;

/// A regularizing chart. `Identity` is the untransformed stereographic
/// plane; `Local` removes the collision with one primary; `Global`
/// removes all n of them at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Chart {
    Identity,
    Local {
        /// Index (0-based) of the regularized primary.
        k: usize,
    },
    Global {
        alpha: f64,
        beta: Complex64,
    },
}

impl Chart {
    pub fn identity() -> Self {
        Chart::Identity
    }

    pub fn local(k: usize) -> Self {
        Chart::Local { k }
    }

    /// Birkhoff chart for the given polygon: alpha = (n-1)/n,
    /// beta = w_1^n / n.
    pub fn global(config: &PolygonConfig) -> Self {
        let n = config.n();
        let w1 = projected_primaries(config).w[0];
        Chart::Global {
            alpha: (n as f64 - 1.0) / n as f64,
            beta: w1.powu(n as u32) / n as f64,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Chart::Identity => "identity".into(),
            Chart::Local { k } => format!("local:{}", k + 1),
            Chart::Global { .. } => "global".into(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Chart::Identity)
    }
}

/// State in a regularizing chart: chart position and momentum, the orbit
/// energy constant, and the two clocks (fictitious s, physical t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizedState {
    pub w: Complex64,
    /// Chart momentum W (the canonical lift of Z).
    pub w_mom: Complex64,
    /// Energy constant, C = -2 H on the orbit.
    pub c: f64,
    /// Fictitious time.
    pub s: f64,
    /// Accumulated physical time.
    pub t: f64,
}

/// Time derivatives of a regularized state with respect to fictitious
/// time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizedDerivative {
    pub dw: Complex64,
    pub dw_mom: Complex64,
    pub dt_ds: f64,
}

impl RegularizedDerivative {
    pub fn magnitude(&self) -> f64 {
        (self.dw.norm_sqr() + self.dw_mom.norm_sqr()).sqrt()
    }
}

/// z = g(w).
pub fn chart_map(config: &PolygonConfig, chart: &Chart, w: Complex64) -> Result<Complex64> {
    match chart {
        Chart::Identity => Ok(w),
        Chart::Local { k } => Ok(w * w + projected_primaries(config).w[*k]),
        Chart::Global { alpha, beta } => {
            if w.norm() == 0.0 {
                return Err(Error::Domain("global chart undefined at w = 0".into()));
            }
            let n = config.n() as u32;
            Ok(alpha * w + beta / w.powu(n - 1))
        }
    }
}

/// g'(w); vanishes exactly at the chart's collision points.
pub fn chart_derivative(config: &PolygonConfig, chart: &Chart, w: Complex64) -> Result<Complex64> {
    match chart {
        Chart::Identity => Ok(Complex64::new(1.0, 0.0)),
        Chart::Local { .. } => Ok(2.0 * w),
        Chart::Global { alpha, beta } => {
            if w.norm() == 0.0 {
                return Err(Error::Domain("global chart undefined at w = 0".into()));
            }
            let n = config.n() as f64;
            Ok(alpha - beta * (n - 1.0) / w.powu(config.n() as u32))
        }
    }
}

/// g''(w), used by the analytic canonical field.
pub fn chart_second_derivative(
    config: &PolygonConfig,
    chart: &Chart,
    w: Complex64,
) -> Result<Complex64> {
    match chart {
        Chart::Identity => Ok(Complex64::new(0.0, 0.0)),
        Chart::Local { .. } => Ok(Complex64::new(2.0, 0.0)),
        Chart::Global { beta, .. } => {
            if w.norm() == 0.0 {
                return Err(Error::Domain("global chart undefined at w = 0".into()));
            }
            let n = config.n() as f64;
            Ok(beta * n * (n - 1.0) / w.powu(config.n() as u32 + 1))
        }
    }
}

/// Preimage of z under the chart, selected by proximity to
/// `branch_hint` (continuity rule). Errors with `Ambiguity` when two
/// distinct preimages are equidistant from the hint.
pub fn chart_inverse(
    config: &PolygonConfig,
    chart: &Chart,
    z: Complex64,
    branch_hint: Complex64,
) -> Result<Complex64> {
    let candidates: Vec<Complex64> = match chart {
        Chart::Identity => return Ok(z),
        Chart::Local { k } => {
            let s = (z - projected_primaries(config).w[*k]).sqrt();
            vec![s, -s]
        }
        Chart::Global { alpha, beta } => {
            // alpha w^n - z w^(n-1) + beta = 0, scaled by n:
            // (n-1) w^n - n z w^(n-1) + w_1^n = 0
            let n = config.n();
            let mut coeffs = vec![Complex64::new(0.0, 0.0); n + 1];
            coeffs[0] = Complex64::new(*alpha, 0.0);
            coeffs[1] = -z;
            coeffs[n] = *beta;
            polynomial_roots(&coeffs)?
        }
    };

    // collapse nearly-coincident preimages (double roots at collision)
    let cluster_tol = 1e-6 * (1.0 + z.norm());
    let mut reps: Vec<Complex64> = Vec::new();
    for cand in candidates {
        if let Some(r) = reps.iter_mut().find(|r| (**r - cand).norm() < cluster_tol) {
            *r = (*r + cand) / 2.0;
        } else {
            reps.push(cand);
        }
    }

    reps.sort_by(|a, b| {
        (a - branch_hint)
            .norm()
            .partial_cmp(&(b - branch_hint).norm())
            .unwrap()
    });
    if reps.len() > 1 {
        let d0 = (reps[0] - branch_hint).norm();
        let d1 = (reps[1] - branch_hint).norm();
        if (d1 - d0).abs() <= 1e-12 * (1.0 + d0) {
            return Err(Error::Ambiguity(format!(
                "preimages {} and {} equidistant from hint {branch_hint}",
                reps[0], reps[1]
            )));
        }
    }
    let w = reps[0];
    let back = chart_map(config, chart, w)?;
    if (back - z).norm() > 1e-10 * (1.0 + z.norm()) {
        return Err(Error::Convergence(format!(
            "inverse residual {} for z = {z}",
            (back - z).norm()
        )));
    }
    Ok(w)
}

/// Canonical momentum lift: Z = W / conj(g'(w)).
pub fn momentum_map(
    config: &PolygonConfig,
    chart: &Chart,
    w: Complex64,
    w_mom: Complex64,
) -> Result<Complex64> {
    let gp = chart_derivative(config, chart, w)?;
    if gp.norm() == 0.0 {
        return Err(Error::Singularity(
            "momentum map undefined where g'(w) = 0 (collision states live in (w, W) only)"
                .into(),
        ));
    }
    Ok(w_mom / gp.conj())
}

/// Inverse of `momentum_map`: W = Z conj(g'(w)).
pub fn momentum_lift(
    config: &PolygonConfig,
    chart: &Chart,
    w: Complex64,
    big_z: Complex64,
) -> Result<Complex64> {
    Ok(big_z * chart_derivative(config, chart, w)?.conj())
}

/// G(w) = sum_{k=0}^{n-2} ((n-k-1)/n) w^(n-2-k) w_i^k, the cofactor in
/// g(w) - w_i = (w - w_i)^2 G(w) / w^(n-1).
pub fn g_polynomial(n: usize, w_i: Complex64, w: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..=(n - 2) {
        acc += ((n - k - 1) as f64 / n as f64)
            * w.powu((n - 2 - k) as u32)
            * w_i.powu(k as u32);
    }
    acc
}

fn g_polynomial_derivative(n: usize, w_i: Complex64, w: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..=(n - 2) {
        let pow = (n - 2 - k) as u32;
        if pow > 0 {
            acc += ((n - k - 1) as f64 / n as f64)
                * pow as f64
                * w.powu(pow - 1)
                * w_i.powu(k as u32);
        }
    }
    acc
}

/// Energy constant for the orbit through `s0`: C = -2 H(s0), so the
/// induced regularized state sits on the zero level of Hhat.
pub fn energy_constant(config: &PolygonConfig, s0: &ProjectedState) -> Result<f64> {
    Ok(-2.0 * hamiltonian(config, s0)?)
}

/// Lifts a physical state into a chart.
pub fn to_regularized(
    config: &PolygonConfig,
    chart: &Chart,
    state: &ProjectedState,
    c: f64,
    branch_hint: Complex64,
    s: f64,
    t: f64,
) -> Result<RegularizedState> {
    let cs = state.complex();
    let w = chart_inverse(config, chart, cs.z, branch_hint)?;
    let w_mom = momentum_lift(config, chart, w, cs.big_z)?;
    Ok(RegularizedState { w, w_mom, c, s, t })
}

/// Maps a regularized state back to physical coordinates. Fails at
/// collision points, which are representable only in the chart.
pub fn to_projected(
    config: &PolygonConfig,
    chart: &Chart,
    rs: &RegularizedState,
) -> Result<ProjectedState> {
    let z = chart_map(config, chart, rs.w)?;
    let big_z = momentum_map(config, chart, rs.w, rs.w_mom)?;
    Ok(crate::dynamics::ComplexState::new(z, big_z).projected())
}

// ---------------------------------------------------------------------
// first-order jets of real-valued functions of (w, conj w)
// ---------------------------------------------------------------------

/// Value and holomorphic Wirtinger derivative d/dw of a real-valued
/// quantity; d/d(conj w) is the conjugate.
#[derive(Debug, Clone, Copy)]
struct RealJet {
    v: f64,
    d: Complex64,
}

impl RealJet {
    fn constant(v: f64) -> Self {
        RealJet { v, d: Complex64::new(0.0, 0.0) }
    }

    fn add(self, o: RealJet) -> Self {
        RealJet { v: self.v + o.v, d: self.d + o.d }
    }

    fn mul(self, o: RealJet) -> Self {
        RealJet { v: self.v * o.v, d: self.d * o.v + o.d * self.v }
    }

    fn div(self, o: RealJet) -> Self {
        RealJet {
            v: self.v / o.v,
            d: (self.d * o.v - o.d * self.v) / (o.v * o.v),
        }
    }

    fn scale(self, f: f64) -> Self {
        RealJet { v: self.v * f, d: self.d * f }
    }
}

/// |f| for holomorphic f with derivative fp; requires f != 0.
fn abs_jet(f: Complex64, fp: Complex64) -> RealJet {
    let m = f.norm();
    RealJet { v: m, d: f.conj() * fp / (2.0 * m) }
}

/// |f|^2 for holomorphic f with derivative fp.
fn abs2_jet(f: Complex64, fp: Complex64) -> RealJet {
    RealJet { v: f.norm_sqr(), d: f.conj() * fp }
}

// ---------------------------------------------------------------------
// shifted Hamiltonian and its canonical field
// ---------------------------------------------------------------------

struct ChartEval {
    g: Complex64,
    gp: Complex64,
    /// (1 + sigma |g|^2)^2 as a jet in w.
    kin: RealJet,
    /// Omega Im(g conj(g') conj(W)) value and d/dw.
    rot_v: f64,
    rot_d: Complex64,
    /// cancellation-aware |g'|^2 V(g(w)) as a jet in w.
    pot: RealJet,
    /// |g'|^2 as a jet in w.
    gp2: RealJet,
}

/// N_j(z) evaluated at z = g(w) as a jet in w.
fn numerator_jet(
    sigma: f64,
    zeta: f64,
    k: f64,
    h: f64,
    g: Complex64,
    gp: Complex64,
) -> RealJet {
    let v = 2.0 * k * g.re + 2.0 * h * g.im + sigma * zeta * (1.0 - sigma * g.norm_sqr());
    let dn_dz = Complex64::new(k, -h) - zeta * g.conj();
    RealJet { v, d: dn_dz * gp }
}

fn evaluate_chart(
    config: &PolygonConfig,
    chart: &Chart,
    w: Complex64,
    w_mom: Complex64,
) -> Result<ChartEval> {
    let space = config.space();
    let sigma = space.sigma();
    let zeta = config.zeta();
    let r = config.r();
    let omega = config.omega();
    let n = config.n();
    let pp = projected_primaries(config);
    let comps = config.planar_components();

    let g = chart_map(config, chart, w)?;
    let gp = chart_derivative(config, chart, w)?;
    let gpp = chart_second_derivative(config, chart, w)?;

    if space == SpaceSign::Hyperboloid && g.norm_sqr() >= 1.0 {
        return Err(Error::Domain(format!(
            "chart image |g(w)|^2 = {} outside the Poincare disk",
            g.norm_sqr()
        )));
    }

    // (1 + sigma |g|^2)^2
    let one_plus = RealJet::constant(1.0).add(abs2_jet(g, gp).scale(sigma));
    let kin = one_plus.mul(one_plus);

    // Omega Im(g conj(g') conj(W))
    let y = g * gp.conj() * w_mom.conj();
    let rot_v = omega * y.im;
    let rot_d = omega * (gp * gp.conj() * w_mom.conj() - g.conj() * gpp * w_mom)
        / Complex64::new(0.0, 2.0);

    let gp2 = abs2_jet(gp, gpp);

    // cancellation-aware |g'|^2 V(g(w))
    let antipode_guard = |j: usize, dist2: f64| -> Result<()> {
        if dist2 <= EPS_SING {
            return Err(if space == SpaceSign::Sphere {
                Error::Antipodal(format!(
                    "chart image at the antipode of primary {} (not regularized)",
                    j + 1
                ))
            } else {
                Error::Singularity(format!("chart image at exterior image {}", j + 1))
            });
        }
        Ok(())
    };

    let pot = match chart {
        Chart::Identity => {
            // |g'|^2 = 1: the plain closed-form potential with its gradient
            let mut acc = RealJet::constant(0.0);
            for (j, &(k, h)) in comps.iter().enumerate() {
                let dc = g - pp.w[j];
                let da = g - pp.w_hat[j];
                if r * r * dc.norm_sqr() * da.norm_sqr() <= EPS_SING {
                    if da.norm() < dc.norm() {
                        antipode_guard(j, 0.0)?;
                    }
                    return Err(Error::Collision(format!(
                        "particle at primary {} in the identity chart",
                        j + 1
                    )));
                }
                antipode_guard(j, da.norm_sqr())?;
                let num = numerator_jet(sigma, zeta, k, h, g, gp).scale(sigma);
                let den = abs_jet(dc, gp).mul(abs_jet(da, gp)).scale(r);
                acc = acc.add(num.div(den));
            }
            acc
        }
        Chart::Local { k: kk } => {
            let aw2 = abs2_jet(w, Complex64::new(1.0, 0.0)); // |w|^2, |g'|^2 = 4 |w|^2
            let mut acc = RealJet::constant(0.0);
            for (j, &(k, h)) in comps.iter().enumerate() {
                let da = g - pp.w_hat[j];
                antipode_guard(j, da.norm_sqr())?;
                let num = numerator_jet(sigma, zeta, k, h, g, gp).scale(sigma);
                if j == *kk {
                    // |g - w_k| = |w|^2 cancels against |g'|^2 / 4
                    let den = abs_jet(da, gp).scale(r);
                    acc = acc.add(num.div(den).scale(4.0));
                } else {
                    let dc = g - pp.w[j];
                    if dc.norm_sqr() * da.norm_sqr() * r * r <= EPS_SING {
                        return Err(Error::Collision(format!(
                            "local chart around primary {} does not regularize primary {}",
                            kk + 1,
                            j + 1
                        )));
                    }
                    let den = abs_jet(dc, gp).mul(abs_jet(da, gp)).scale(r);
                    acc = acc.add(num.div(den).mul(aw2).scale(4.0));
                }
            }
            acc
        }
        Chart::Global { alpha, .. } => {
            if w.norm_sqr() <= EPS_SING {
                return Err(Error::Singularity(
                    "global chart singular at w = 0 (|z| -> infinity)".into(),
                ));
            }
            let one = Complex64::new(1.0, 0.0);
            // |w^(n+1)|
            let wn1 = abs_jet(w.powu(n as u32 + 1), (n as f64 + 1.0) * w.powu(n as u32));
            let mut acc = RealJet::constant(0.0);
            for (j, &(k, h)) in comps.iter().enumerate() {
                let da = g - pp.w_hat[j];
                antipode_guard(j, da.norm_sqr())?;
                let gj = g_polynomial(n, pp.w[j], w);
                if gj.norm() <= 1e-9 {
                    return Err(Error::Collision(format!(
                        "collision preimage of primary {} on a non-regularized sheet \
                         (G_j(w) = 0)",
                        j + 1
                    )));
                }
                let num = numerator_jet(sigma, zeta, k, h, g, gp).scale(sigma);
                // prod_{m != j} |w - w_m|^2
                let mut prod = RealJet::constant(1.0);
                for (m, wm) in pp.w.iter().enumerate() {
                    if m != j {
                        prod = prod.mul(abs2_jet(w - wm, one));
                    }
                }
                let den = wn1
                    .mul(abs_jet(gj, g_polynomial_derivative(n, pp.w[j], w)))
                    .mul(abs_jet(da, gp))
                    .scale(r);
                acc = acc.add(num.mul(prod).div(den).scale(alpha * alpha));
            }
            acc
        }
    };

    Ok(ChartEval { g, gp, kin, rot_v, rot_d, pot, gp2 })
}

/// Shifted Hamiltonian Hhat = |g'|^2 (H + C/2), finite at the chart's
/// regularized collision points.
pub fn regularized_hamiltonian(
    config: &PolygonConfig,
    chart: &Chart,
    rs: &RegularizedState,
) -> Result<f64> {
    let e = evaluate_chart(config, chart, rs.w, rs.w_mom)?;
    Ok(e.kin.v / 8.0 * rs.w_mom.norm_sqr() + e.rot_v - e.pot.v + e.gp2.v * rs.c / 2.0)
}

/// Canonical field of Hhat together with the physical-time rate
/// dt/ds = |g'(w)|^2.
pub fn regularized_field(
    config: &PolygonConfig,
    chart: &Chart,
    rs: &RegularizedState,
) -> Result<RegularizedDerivative> {
    let e = evaluate_chart(config, chart, rs.w, rs.w_mom)?;
    let dw = e.kin.v / 4.0 * rs.w_mom
        - Complex64::new(0.0, config.omega()) * e.g * e.gp.conj();
    let dh_dw = e.kin.d * (rs.w_mom.norm_sqr() / 8.0) + e.rot_d - e.pot.d
        + e.gp2.d * (rs.c / 2.0);
    Ok(RegularizedDerivative {
        dw,
        dw_mom: -2.0 * dh_dw.conj(),
        dt_ds: e.gp2.v,
    })
}

/// Physical Hamiltonian value recovered from a regularized state:
/// H = Hhat/|g'|^2 - C/2; at a collision point (g' = 0) the on-shell
/// limit -C/2 is returned.
pub fn physical_hamiltonian(
    config: &PolygonConfig,
    chart: &Chart,
    rs: &RegularizedState,
) -> Result<f64> {
    let gp2 = chart_derivative(config, chart, rs.w)?.norm_sqr();
    if gp2 < 1e-12 {
        return Ok(-rs.c / 2.0);
    }
    Ok(regularized_hamiltonian(config, chart, rs)? / gp2 - rs.c / 2.0)
}

/// Chart-switch radius: 0.05 times the minimum pairwise distance among
/// the projected primaries.
pub fn switch_radius(config: &PolygonConfig) -> f64 {
    let pp = projected_primaries(config);
    let mut min = f64::INFINITY;
    for i in 0..pp.w.len() {
        for j in (i + 1)..pp.w.len() {
            min = min.min((pp.w[i] - pp.w[j]).norm());
        }
    }
    0.05 * min
}

/// Hysteresis chart-switch policy. Enters local(k) when the physical
/// position comes within `switch_radius` of primary k; leaves back to
/// `base` only after retreating past twice that radius.
pub fn chart_policy(
    config: &PolygonConfig,
    z: Complex64,
    current: &Chart,
    base: &Chart,
) -> Chart {
    let delta_in = switch_radius(config);
    let pp = projected_primaries(config);
    match current {
        Chart::Local { k } => {
            if (z - pp.w[*k]).norm() > 2.0 * delta_in {
                base.clone()
            } else {
                current.clone()
            }
        }
        _ => {
            let nearest = pp
                .w
                .iter()
                .enumerate()
                .min_by(|a, b| {
                    (z - a.1).norm().partial_cmp(&(z - b.1).norm()).unwrap()
                })
                .expect("config has at least two primaries");
            if (z - nearest.1).norm() < delta_in {
                Chart::Local { k: nearest.0 }
            } else {
                current.clone()
            }
        }
    }
}
