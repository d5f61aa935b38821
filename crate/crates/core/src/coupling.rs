//! Phonon-mediated donor-donor couplings.
//!
//! Closed forms for the resonant transfer constants g¹⁰, g²¹ and the Ising constant J,
//! and the static-limit coupling integral evaluated by direct quadrature in q-space.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envelope::{dot, norm};
use crate::error::{Error, Result};
use crate::levels::{LevelStructure, StateLabel};
use crate::materials::MaterialParams;
use crate::phonons::{cross, MatrixElementOptions, TransitionAmplitude};
use crate::quadrature::Rule;
use crate::rates::decay_rate_closed_form_10;
use crate::units::HBAR;

/// Radial integration extends to this multiple of the window wavenumber.
const RADIAL_EXTENT: f64 = 1.75;

/// Static-limit threshold on ω|R|/u_t.
pub const STATIC_LIMIT_MAX: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DonorPairGeometry {
    /// R_i − R_j, cm.
    pub r_vec: [f64; 3],
    pub in_plane: bool,
}

impl DonorPairGeometry {
    pub fn new(r_vec: [f64; 3]) -> Result<Self> {
        let r = norm(&r_vec);
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Geometry("donor separation must be nonzero".into()));
        }
        Ok(Self { r_vec, in_plane: r_vec[2] == 0.0 })
    }

    /// Separation `r` (cm) in the plane normal to ⟨001⟩ at azimuth `phi` from [100].
    pub fn in_plane(r: f64, phi: f64) -> Result<Self> {
        Self::new([r * phi.cos(), r * phi.sin(), 0.0])
    }

    pub fn distance(&self) -> f64 {
        norm(&self.r_vec)
    }

    fn require_in_plane(&self) -> Result<f64> {
        if !self.in_plane {
            return Err(Error::Geometry("closed forms require separation normal to [001]".into()));
        }
        Ok(self.distance())
    }
}

/// Pairwise couplings, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CouplingSet {
    pub g10: f64,
    pub g21: f64,
    pub j_ising: f64,
}

/// γ = (5/16)(2 + 7(1 − u_t²/u_l²)).
pub fn gamma(p: &MaterialParams) -> f64 {
    let r = (p.u_t / p.u_l).powi(2);
    5.0 / 16.0 * (2.0 + 7.0 * (1.0 - r))
}

/// g¹⁰ = W₁₀·(315/16)(3 − (u_t²/u_l²)(4σ + 5))(u_t/(ω₁₀R))⁵.
pub fn ret_coupling_10(geom: &DonorPairGeometry, epsilon: f64, p: &MaterialParams) -> Result<f64> {
    let r = geom.require_in_plane()?;
    let w10 = decay_rate_closed_form_10(epsilon, p)?.rate;
    let omega = crate::levels::omega10(epsilon, p);
    if omega == 0.0 {
        return Err(Error::Validity("g10 diverges at zero splitting".into()));
    }
    let ratio = (p.u_t / p.u_l).powi(2);
    Ok(w10 * 315.0 / 16.0 * (3.0 - ratio * (4.0 * p.sigma() + 5.0)) * (p.u_t / (omega * r)).powi(5))
}

/// g²¹ = W₂₁·γ·(u_t/(ω₂₁R))³.
pub fn ret_coupling_21(geom: &DonorPairGeometry, epsilon: f64, p: &MaterialParams, w21: f64) -> Result<f64> {
    let r = geom.require_in_plane()?;
    let omega = 2.0 * crate::levels::omega10(epsilon, p);
    if omega == 0.0 {
        return Err(Error::Validity("g21 diverges at zero splitting".into()));
    }
    Ok(w21 * gamma(p) * (p.u_t / (omega * r)).powi(3))
}

/// J = Ξ_u²/(32πħρu_t²R³)·(−1 + (5/3)u_t²/u_l²).
pub fn ising_coupling(geom: &DonorPairGeometry, p: &MaterialParams) -> Result<f64> {
    let r = geom.require_in_plane()?;
    let ratio = (p.u_t / p.u_l).powi(2);
    Ok(p.xi_u * p.xi_u / (32.0 * PI * HBAR * p.rho * p.u_t * p.u_t * r.powi(3)) * (-1.0 + 5.0 / 3.0 * ratio))
}

/// Settings of the q-space coupling quadrature.
///
/// The integrand is multiplied by exp(−(q/q_w)⁸), q_w = `window`/|R|. The removed part is smooth
/// at q = 0, so its transform decays faster than any power of |R| and the long-range couplings
/// are unaffected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingQuadrature {
    pub radial_panels: usize,
    pub radial_order: usize,
    pub polar_panels: usize,
    pub polar_order: usize,
    pub n_phi: usize,
    pub window: f64,
    pub tolerance: f64,
}

impl Default for CouplingQuadrature {
    fn default() -> Self {
        Self {
            radial_panels: 12,
            radial_order: 24,
            polar_panels: 6,
            polar_order: 32,
            n_phi: 32,
            window: 60.0,
            tolerance: 1e-3,
        }
    }
}

impl CouplingQuadrature {
    pub fn fingerprint(&self) -> String {
        format!(
            "coupling(radial={}x{},polar={}x{},phi={},window={},tol={:e})",
            self.radial_panels, self.radial_order, self.polar_panels, self.polar_order, self.n_phi, self.window, self.tolerance
        )
    }

    /// exp(−(q/q_w)⁸) with q_w = window/r.
    fn window_q(&self, r: f64) -> impl Fn(f64) -> f64 {
        let qw = self.window / r;
        move |q| (-(q / qw).powi(8)).exp()
    }

    /// Orders scaled with the window so that the oscillation count per node stays fixed.
    pub fn with_window(window: f64) -> Self {
        let d = Self::default();
        let f = window / d.window;
        Self {
            radial_panels: ((d.radial_panels as f64 * f).ceil() as usize).max(1),
            polar_panels: ((d.polar_panels as f64 * f).ceil() as usize).max(1),
            window,
            ..d
        }
    }

    fn coarser(&self) -> Self {
        Self {
            radial_order: self.radial_order * 3 / 4,
            polar_order: self.polar_order * 3 / 4,
            n_phi: self.n_phi * 3 / 4,
            ..*self
        }
    }
}

/// Which matrix elements enter G^{ij}_{μ_iμ_i', μ_jμ_j'}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingChannel {
    pub i: (StateLabel, StateLabel),
    pub j: (StateLabel, StateLabel),
}

impl CouplingChannel {
    pub fn new(i: (StateLabel, StateLabel), j: (StateLabel, StateLabel)) -> Self {
        Self { i, j }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingEstimate {
    /// Real part of G/ħ, rad/s.
    pub value: f64,
    /// Imaginary part of G/ħ; zero for channels of definite combined parity.
    pub imaginary: f64,
    /// max ω|R|/u_t over the transitions involved.
    pub static_limit_ratio: f64,
    pub convergence_estimate: f64,
    pub warnings: Vec<String>,
}

/// A weighted sum Σ_k c_k G(channel_k)/ħ evaluated on one quadrature grid.
fn windowed_integral(
    amps: &[TransitionAmplitude],
    terms: &[(usize, usize, f64)],
    r_vec: &[f64; 3],
    p: &MaterialParams,
    quad: &CouplingQuadrature,
) -> (f64, f64) {
    let r = norm(r_vec);
    let z = [r_vec[0] / r, r_vec[1] / r, r_vec[2] / r];
    let seed = if z[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let mut e1 = cross(&seed, &z);
    let m = norm(&e1);
    e1.iter_mut().for_each(|x| *x /= m);
    let e2 = cross(&z, &e1);

    let qw = quad.window / r;
    let radial = Rule::composite(quad.radial_order, quad.radial_panels, 0.0, RADIAL_EXTENT * qw);
    let polar = Rule::composite(quad.polar_order, quad.polar_panels, -1.0, 1.0);
    let azimuth = Rule::periodic(quad.n_phi);
    let trig: Vec<(f64, f64)> = azimuth.nodes.iter().map(|f| (f.cos(), f.sin())).collect();
    let (it, il) = (1.0 / (p.u_t * p.u_t), 1.0 / (p.u_l * p.u_l));
    let window_q = quad.window_q(r);

    let rows: Vec<(f64, f64)> = radial
        .nodes
        .par_iter()
        .zip(radial.weights.par_iter())
        .map(|(&q, &wq)| {
            let window = window_q(q);
            let mut v = vec![[0.0; 3]; amps.len()];
            let mut re = 0.0;
            let mut im = 0.0;
            for (&c, &wc) in polar.nodes.iter().zip(&polar.weights) {
                let s = (1.0 - c * c).max(0.0).sqrt();
                let (sn, cs) = (q * r * c).sin_cos();
                let mut ang = 0.0;
                for (&(cf, sf), &wf) in trig.iter().zip(&azimuth.weights) {
                    let n = [
                        s * cf * e1[0] + s * sf * e2[0] + c * z[0],
                        s * cf * e1[1] + s * sf * e2[1] + c * z[1],
                        s * cf * e1[2] + s * sf * e2[2] + c * z[2],
                    ];
                    let qv = [q * n[0], q * n[1], q * n[2]];
                    // v = q̂∘T, so P(q, ê) = q v·ê; the q² cancels against 1/Ω².
                    for (a, out) in amps.iter().zip(v.iter_mut()) {
                        let t = a.tensor(&qv, p);
                        *out = [n[0] * t[0], n[1] * t[1], n[2] * t[2]];
                    }
                    let mut phi = 0.0;
                    for &(i, j, weight) in terms {
                        let (vi, vj) = (&v[i], &v[j]);
                        let li = dot(vi, &n);
                        let lj = dot(vj, &n);
                        phi += weight * ((dot(vi, vj) - li * lj) * it + li * lj * il);
                    }
                    ang += wf * phi;
                }
                re += wc * cs * ang;
                im += wc * sn * ang;
            }
            let f = wq * window * q * q;
            (f * re, f * im)
        })
        .collect();
    let (re, im) = rows.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    // ∫d³q/(2π)³ · 1/(2ρ) · 1/ħ.
    let scale = 1.0 / (8.0 * PI * PI * PI) / (2.0 * p.rho) / HBAR;
    (re * scale, im * scale)
}

/// Largest relative magnitude of the real terms in a weighted sum, used to floor the error estimate.
fn magnitude_floor(amps: &[TransitionAmplitude], terms: &[(usize, usize, f64)], r: f64, p: &MaterialParams) -> f64 {
    // Dipolar scale Ξ²/(ħρu_t²R³) times the largest weight.
    let w = terms
        .iter()
        .map(|t| t.2.abs() * amps[t.0].weight_norm() * amps[t.1].weight_norm())
        .fold(0.0, f64::max);
    let xi = p.xi_u.abs() + p.xi_d.abs();
    w * xi * xi / (HBAR * p.rho * p.u_t * p.u_t * r.powi(3))
}

/// Σ_k c_k G(channel_k)/ħ with convergence and static-limit diagnostics.
pub fn coupling_combination(
    channels: &[(CouplingChannel, f64)],
    geom: &DonorPairGeometry,
    level: &LevelStructure,
    p: &MaterialParams,
    quad: &CouplingQuadrature,
) -> Result<CouplingEstimate> {
    let opts = MatrixElementOptions::default();
    let mut keys: Vec<(StateLabel, StateLabel)> = Vec::new();
    let mut amps = Vec::new();
    let mut index_of = |k: (StateLabel, StateLabel)| -> Result<usize> {
        if let Some(i) = keys.iter().position(|x| *x == k) {
            return Ok(i);
        }
        amps.push(TransitionAmplitude::new(level.state(k.0), level.state(k.1), opts)?);
        keys.push(k);
        Ok(keys.len() - 1)
    };
    let mut terms = Vec::with_capacity(channels.len());
    let mut omega_max: f64 = 0.0;
    for (ch, w) in channels {
        terms.push((index_of(ch.i)?, index_of(ch.j)?, *w));
        omega_max = omega_max
            .max(level.transition_omega(ch.i.0, ch.i.1).abs())
            .max(level.transition_omega(ch.j.0, ch.j.1).abs());
    }
    let r = geom.distance();
    let (re, im) = windowed_integral(&amps, &terms, &geom.r_vec, p, quad);
    let (re2, im2) = windowed_integral(&amps, &terms, &geom.r_vec, p, &quad.coarser());
    let floor = 1e-9 * magnitude_floor(&amps, &terms, r, p);
    let est = ((re - re2).hypot(im - im2)) / re.hypot(im).max(floor);
    if !(est <= quad.tolerance) {
        return Err(Error::Numerical(format!(
            "coupling quadrature not converged: estimate {est:.3e} > {:.1e} at {}",
            quad.tolerance,
            quad.fingerprint()
        )));
    }
    let static_ratio = omega_max * r / p.u_t;
    let mut warnings = Vec::new();
    if static_ratio > STATIC_LIMIT_MAX {
        warnings.push(format!("static-limit ratio {static_ratio:.3} exceeds {STATIC_LIMIT_MAX}"));
    }
    Ok(CouplingEstimate { value: re, imaginary: im, static_limit_ratio: static_ratio, convergence_estimate: est, warnings })
}

/// G^{ij}_{μ_iμ_i', μ_jμ_j'}/ħ, rad/s.
pub fn coupling_integral(
    channel: CouplingChannel,
    geom: &DonorPairGeometry,
    level: &LevelStructure,
    p: &MaterialParams,
    quad: &CouplingQuadrature,
) -> Result<CouplingEstimate> {
    coupling_combination(&[(channel, 1.0)], geom, level, p, quad)
}

/// Resonant transfer on the |0⟩↔|1⟩ transitions, G_{10,01}/ħ.
pub fn g10_channel() -> CouplingChannel {
    CouplingChannel::new((StateLabel::S1, StateLabel::S0), (StateLabel::S0, StateLabel::S1))
}

/// Resonant transfer on the |1⟩↔|2⟩ transitions, G_{21,12}/ħ.
pub fn g21_channel() -> CouplingChannel {
    CouplingChannel::new((StateLabel::S2, StateLabel::S1), (StateLabel::S1, StateLabel::S2))
}

/// Weights giving the Ising constant: the diagonal of H_ij counts G and its conjugate,
/// so J = 2(G_{11,11} + G_{00,00} − 2G_{00,11})/ħ.
pub fn ising_channels() -> Vec<(CouplingChannel, f64)> {
    use StateLabel::{S0, S1};
    vec![
        (CouplingChannel::new((S1, S1), (S1, S1)), 2.0),
        (CouplingChannel::new((S0, S0), (S0, S0)), 2.0),
        (CouplingChannel::new((S0, S0), (S1, S1)), -2.0),
        (CouplingChannel::new((S1, S1), (S0, S0)), -2.0),
    ]
}
