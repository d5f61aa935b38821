//! Phonon-limited transition rates: closed form, golden-rule quadrature, dephasing.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::{manifold, LevelStructure, StateLabel};
use crate::materials::MaterialParams;
use crate::phonons::{Branch, MatrixElementOptions, TransitionAmplitude, TransitionSpec};
use crate::quadrature::Rule;
use crate::units::{HBAR, K_B};

/// Long-wavelength validity threshold for the closed form: 2πu_t/(ω a_∥).
pub const LONG_WAVELENGTH_MIN_RATIO: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEstimate {
    /// 1/s.
    pub rate: f64,
    /// 2πu_t/(ω a_∥).
    pub long_wavelength_ratio: f64,
    pub warning: Option<String>,
}

/// [1 + (a_∥κ₀/2)²].
pub fn umklapp_denominator(p: &MaterialParams) -> f64 {
    let x = p.a_par * p.kappa0() / 2.0;
    1.0 + x * x
}

/// 8a²/35·(a_∥κ₀/2)⁻¹⁰.
pub fn suppression_factor(epsilon: f64, p: &MaterialParams) -> f64 {
    let (a, _) = crate::levels::valley_coefficients(epsilon);
    8.0 * a * a / 35.0 * (p.a_par * p.kappa0() / 2.0).powi(-10)
}

/// Closed-form |1⟩ → |0⟩ rate (transverse phonons, Ξ_u only).
pub fn decay_rate_closed_form_10(epsilon: f64, p: &MaterialParams) -> Result<RateEstimate> {
    let level = manifold(epsilon, p)?;
    let w = level.omega10;
    let a = level.a_coef;
    let ak = p.a_par * p.kappa0();
    let d = umklapp_denominator(p);
    let rate = 2.0 / 35.0 * a * a * ak * ak / d.powi(6) * p.xi_u * p.xi_u * w.powi(5) * p.a_par * p.a_par
        / (PI * HBAR * p.rho * p.u_t.powi(7));
    let ratio = if w > 0.0 { 2.0 * PI * p.u_t / (w * p.a_par) } else { f64::INFINITY };
    let warning = (ratio <= LONG_WAVELENGTH_MIN_RATIO)
        .then(|| format!("long-wavelength ratio {ratio:.3} is not >> 1"));
    Ok(RateEstimate { rate, long_wavelength_ratio: ratio, warning })
}

/// ν₀(T/T₀)¹¹, 1/s.
pub fn dephasing_rate(temperature: f64, p: &MaterialParams) -> f64 {
    p.nu0 * (temperature / p.t0).powi(11)
}

/// Bose occupation of a mode at angular frequency ω and temperature T (K).
pub fn planck_occupation(omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 || omega <= 0.0 {
        return if omega == 0.0 && temperature > 0.0 { f64::INFINITY } else { 0.0 };
    }
    1.0 / (HBAR * omega / (K_B * temperature)).exp_m1()
}

/// Emission and absorption rates at temperature T given the zero-temperature rate.
pub fn thermal_rates(w0: f64, omega: f64, temperature: f64) -> (f64, f64) {
    let n = planck_occupation(omega, temperature);
    ((n + 1.0) * w0, n * w0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellQuadrature {
    pub n_theta: usize,
    pub n_phi: usize,
    /// Relative tolerance on the half-order comparison.
    pub tolerance: f64,
}

impl Default for ShellQuadrature {
    fn default() -> Self {
        Self { n_theta: 64, n_phi: 128, tolerance: 1e-3 }
    }
}

impl ShellQuadrature {
    pub fn fingerprint(&self) -> String {
        format!("shell(theta={},phi={},tol={:e})", self.n_theta, self.n_phi, self.tolerance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchFilter {
    pub l: bool,
    pub t1: bool,
    pub t2: bool,
}

impl BranchFilter {
    pub const ALL: BranchFilter = BranchFilter { l: true, t1: true, t2: true };
    pub const TRANSVERSE: BranchFilter = BranchFilter { l: false, t1: true, t2: true };

    pub fn includes(&self, b: Branch) -> bool {
        match b {
            Branch::L => self.l,
            Branch::T1 => self.t1,
            Branch::T2 => self.t2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRate {
    /// 1/s.
    pub total: f64,
    /// Indexed by [`Branch::index`]; excluded branches are zero.
    pub per_branch: [f64; 3],
    /// |W(n) − W(n/2)|/W(n).
    pub convergence_estimate: f64,
}

fn shell_integral(
    amp: &TransitionAmplitude,
    omega: f64,
    p: &MaterialParams,
    n_theta: usize,
    n_phi: usize,
    filter: BranchFilter,
) -> [f64; 3] {
    let theta = Rule::gauss_legendre(n_theta, -1.0, 1.0);
    let phi = Rule::gauss_legendre(n_phi, 0.0, 2.0 * PI);
    let trig: Vec<(f64, f64)> = phi.nodes.iter().map(|f| (f.cos(), f.sin())).collect();
    let mut out = [0.0; 3];
    for b in Branch::ALL {
        if !filter.includes(b) {
            continue;
        }
        let u = b.speed(p);
        let q = omega / u;
        let rows: Vec<f64> = theta
            .nodes
            .par_iter()
            .zip(theta.weights.par_iter())
            .map(|(&c, &wc)| {
                let s = (1.0 - c * c).max(0.0).sqrt();
                let mut acc = 0.0;
                for (&(cf, sf), &wf) in trig.iter().zip(&phi.weights) {
                    let n = [s * cf, s * sf, c];
                    let qv = [q * n[0], q * n[1], q * n[2]];
                    let e = match b {
                        Branch::L => n,
                        Branch::T1 => [c * cf, c * sf, -s],
                        Branch::T2 => [-sf, cf, 0.0],
                    };
                    let pv = amp.strain(&qv, &e, p);
                    acc += wf * pv * pv;
                }
                wc * acc
            })
            .collect();
        let angular: f64 = rows.iter().sum();
        out[b.index()] = q * q / (8.0 * PI * PI * HBAR * p.rho * omega * u) * angular;
    }
    out
}

/// Rate an O(1) angular factor would give; sets the floor of the convergence estimate.
fn rate_scale(amp: &TransitionAmplitude, omega: f64, p: &MaterialParams) -> f64 {
    let q = omega / p.u_t;
    let c = amp.weight_norm() * (p.xi_u.abs() + p.xi_d.abs()) * q;
    q * q / (8.0 * PI * PI * HBAR * p.rho * omega * p.u_t) * 4.0 * PI * c * c
}

/// Golden-rule rate for `spec` by angular quadrature on the energy shell of each branch.
pub fn decay_rate_oracle(
    spec: &TransitionSpec,
    p: &MaterialParams,
    quad: &ShellQuadrature,
    filter: BranchFilter,
    opts: MatrixElementOptions,
) -> Result<OracleRate> {
    if !(spec.omega > 0.0) {
        return Err(Error::Validation("transition frequency must be positive".into()));
    }
    let amp = TransitionAmplitude::new(&spec.to, &spec.from, opts)?;
    let full = shell_integral(&amp, spec.omega, p, quad.n_theta, quad.n_phi, filter);
    let half = shell_integral(&amp, spec.omega, p, (quad.n_theta / 2).max(1), (quad.n_phi / 2).max(1), filter);
    let total: f64 = full.iter().sum();
    let total_half: f64 = half.iter().sum();
    let est = (total - total_half).abs() / total.abs().max(1e-12 * rate_scale(&amp, spec.omega, p));
    if !(est <= quad.tolerance) {
        return Err(Error::Numerical(format!(
            "shell quadrature not converged: estimate {est:.3e} > {:.1e} at {}",
            quad.tolerance,
            quad.fingerprint()
        )));
    }
    Ok(OracleRate { total, per_branch: full, convergence_estimate: est })
}

pub fn transition(level: &LevelStructure, from: StateLabel, to: StateLabel) -> TransitionSpec {
    TransitionSpec::new(*level.state(from), *level.state(to))
}

/// Oracle |2⟩ → |1⟩ rate at ε, all branches, 1/s.
pub fn w21_oracle(epsilon: f64, p: &MaterialParams, quad: &ShellQuadrature) -> Result<f64> {
    if epsilon == 0.0 {
        return Ok(0.0);
    }
    let level = manifold(epsilon, p)?;
    let spec = transition(&level, StateLabel::S2, StateLabel::S1);
    Ok(decay_rate_oracle(&spec, p, quad, BranchFilter::ALL, MatrixElementOptions::default())?.total)
}

/// Oracle |1⟩ → |0⟩ rate at ε for the given branches, 1/s.
pub fn w10_oracle(epsilon: f64, p: &MaterialParams, quad: &ShellQuadrature, filter: BranchFilter) -> Result<f64> {
    if epsilon == 0.0 {
        return Ok(0.0);
    }
    let level = manifold(epsilon, p)?;
    let spec = transition(&level, StateLabel::S1, StateLabel::S0);
    Ok(decay_rate_oracle(&spec, p, quad, filter, MatrixElementOptions::default())?.total)
}

/// Source of W₁₀ for downstream modules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateModel {
    ClosedForm,
    Oracle,
}

/// W₂₁(ε) tabulated from the oracle on a log grid, interpolated linearly in log-log.
#[derive(Debug, Clone, Serialize)]
pub struct W21Table {
    log_eps: Vec<f64>,
    log_rate: Vec<f64>,
}

impl W21Table {
    pub const EPS_MIN: f64 = 1e-4;
    pub const EPS_MAX: f64 = 2.9;

    pub fn build(p: &MaterialParams, quad: &ShellQuadrature, points: usize) -> Result<W21Table> {
        let grid = crate::quadrature::log_space(Self::EPS_MIN, Self::EPS_MAX, points.max(2));
        let rates: Vec<Result<f64>> = grid.par_iter().map(|&e| w21_oracle(e, p, quad)).collect();
        let mut log_rate = Vec::with_capacity(grid.len());
        for r in rates {
            log_rate.push(r?.ln());
        }
        if log_rate.iter().any(|r| !r.is_finite()) {
            return Err(Error::Numerical("tabulated W21 has a non-positive entry".into()));
        }
        Ok(W21Table { log_eps: grid.iter().map(|e| e.ln()).collect(), log_rate })
    }

    /// 1/s. Outside the grid the end segments are extended.
    pub fn rate(&self, epsilon: f64) -> f64 {
        if epsilon <= 0.0 {
            return 0.0;
        }
        let x = epsilon.ln();
        let n = self.log_eps.len();
        let k = match self.log_eps.iter().position(|&e| e > x) {
            Some(0) => 0,
            Some(i) => i - 1,
            None => n - 2,
        };
        let (x0, x1) = (self.log_eps[k], self.log_eps[k + 1]);
        let (y0, y1) = (self.log_rate[k], self.log_rate[k + 1]);
        (y0 + (y1 - y0) * (x - x0) / (x1 - x0)).exp()
    }
}

/// Rates at a given ε for dynamics and operating-point pipelines.
#[derive(Debug, Clone)]
pub struct RateProvider {
    pub params: MaterialParams,
    pub w10_model: RateModel,
    pub quad: ShellQuadrature,
    w21: W21Source,
}

#[derive(Debug, Clone)]
enum W21Source {
    Table(W21Table),
    Fixed(f64),
}

impl RateProvider {
    pub fn new(p: &MaterialParams, w10_model: RateModel, quad: ShellQuadrature) -> Result<RateProvider> {
        let coarse = ShellQuadrature { n_theta: quad.n_theta.min(32), n_phi: quad.n_phi.min(64), ..quad };
        let table = W21Table::build(p, &coarse, 121)?;
        Ok(RateProvider { params: *p, w10_model, quad, w21: W21Source::Table(table) })
    }

    /// W₂₁ pinned to a fixed value regardless of ε.
    pub fn with_w21_override(p: &MaterialParams, w10_model: RateModel, quad: ShellQuadrature, w21: f64) -> RateProvider {
        RateProvider { params: *p, w10_model, quad, w21: W21Source::Fixed(w21) }
    }

    pub fn w10(&self, epsilon: f64) -> Result<f64> {
        match self.w10_model {
            RateModel::ClosedForm => Ok(decay_rate_closed_form_10(epsilon, &self.params)?.rate),
            RateModel::Oracle => w10_oracle(epsilon, &self.params, &self.quad, BranchFilter::ALL),
        }
    }

    pub fn w21(&self, epsilon: f64) -> f64 {
        match &self.w21 {
            W21Source::Table(t) => t.rate(epsilon),
            W21Source::Fixed(w) => *w,
        }
    }

    pub fn w21_is_override(&self) -> bool {
        matches!(self.w21, W21Source::Fixed(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::manifold;
    use crate::materials::{build_materials, Overrides};
    use crate::units::EV;

    fn p() -> MaterialParams {
        MaterialParams::default()
    }

    #[test]
    fn suppression_factor_scale() {
        // 8 a²/35 with a² ≈ 1/3, a_∥κ₀/2 = 14.2 * 0.34708 / 2
        let x: f64 = 14.2 * 0.6 * PI / 5.431 / 2.0;
        let oracle = 8.0 / 35.0 / 3.0 * x.powi(-10);
        let s = suppression_factor(0.0, &p());
        assert!((s / oracle - 1.0).abs() < 1e-12);
        assert!(s > 5e-6 && s < 2e-5, "{s}");
    }

    #[test]
    fn lifetime_at_two_tenths() {
        let r = decay_rate_closed_form_10(0.2, &p()).unwrap();
        let tau = 1.0 / r.rate;
        assert!((tau / 1.1865 - 1.0).abs() < 2e-3, "{tau}");
        assert!(r.warning.is_none());
    }

    #[test]
    fn fifth_power_scaling() {
        let p = p();
        let (e1, e2) = (0.01, 0.02);
        let r = decay_rate_closed_form_10(e2, &p).unwrap().rate / decay_rate_closed_form_10(e1, &p).unwrap().rate;
        let (a1, _) = crate::levels::valley_coefficients(e1);
        let (a2, _) = crate::levels::valley_coefficients(e2);
        assert!((r / (32.0 * (a2 / a1).powi(2)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dephasing_values() {
        let p = p();
        assert_eq!(dephasing_rate(0.0, &p), 0.0);
        assert!((dephasing_rate(p.t0, &p) - p.nu0).abs() < 1e-3);
        let v = dephasing_rate(0.1, &p);
        assert!((v / (2e14 * (0.1f64 / 19.0).powi(11)) - 1.0).abs() < 1e-12);
        assert!((v / 1.717e-11 - 1.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn planck_limits() {
        assert_eq!(planck_occupation(1e11, 0.0), 0.0);
        let w = 1e11;
        let t = HBAR * w / (K_B * 2f64.ln());
        assert!((planck_occupation(w, t) - 1.0).abs() < 1e-12);
        let (down, up) = thermal_rates(3.0, w, t);
        assert!((down - 6.0).abs() < 1e-12 && (up - 3.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_matches_closed_form_transverse() {
        let p = p();
        for eps in [0.2, 0.5] {
            let cf = decay_rate_closed_form_10(eps, &p).unwrap().rate;
            let or = w10_oracle(eps, &p, &ShellQuadrature::default(), BranchFilter::TRANSVERSE).unwrap();
            assert!((or / cf - 1.0).abs() < 0.15, "{eps}: {or} vs {cf}");
        }
    }

    #[test]
    fn branch_decomposition_sums() {
        let p = p();
        let level = manifold(0.3, &p).unwrap();
        let spec = transition(&level, StateLabel::S2, StateLabel::S1);
        let r = decay_rate_oracle(&spec, &p, &ShellQuadrature::default(), BranchFilter::ALL, MatrixElementOptions::default()).unwrap();
        let sum: f64 = r.per_branch.iter().sum();
        assert_eq!(sum, r.total);
        assert!(r.per_branch.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn quadrature_order_invariance() {
        let p = p();
        let level = manifold(0.2, &p).unwrap();
        for (from, to) in [(StateLabel::S1, StateLabel::S0), (StateLabel::S2, StateLabel::S1)] {
            let spec = transition(&level, from, to);
            let base = ShellQuadrature::default();
            let dbl = ShellQuadrature { n_theta: 128, n_phi: 256, ..base };
            let a = decay_rate_oracle(&spec, &p, &base, BranchFilter::ALL, MatrixElementOptions::default()).unwrap().total;
            let b = decay_rate_oracle(&spec, &p, &dbl, BranchFilter::ALL, MatrixElementOptions::default()).unwrap().total;
            assert!((a / b - 1.0).abs() < 5e-3);
        }
    }

    #[test]
    fn quadratic_in_uniaxial_potential() {
        let mut o = Overrides::new();
        o.insert("xi_d_eV".into(), 0.0);
        let p1 = build_materials(&o).unwrap();
        o.insert("xi_u_eV".into(), 2.0 * 8.77);
        let p2 = build_materials(&o).unwrap();
        let q = ShellQuadrature::default();
        for eps in [0.1, 0.4] {
            let r = w21_oracle(eps, &p2, &q).unwrap() / w21_oracle(eps, &p1, &q).unwrap();
            assert!((r - 4.0).abs() < 1e-9);
            let r = w10_oracle(eps, &p2, &q, BranchFilter::ALL).unwrap() / w10_oracle(eps, &p1, &q, BranchFilter::ALL).unwrap();
            assert!((r - 4.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dilational_only_transverse_vanishes() {
        let mut p = p();
        p.xi_u = 0.0;
        p.xi_d = 1.1 * EV;
        let level = manifold(0.2, &p).unwrap();
        let spec = transition(&level, StateLabel::S1, StateLabel::S0);
        let r = decay_rate_oracle(&spec, &p, &ShellQuadrature::default(), BranchFilter::TRANSVERSE, MatrixElementOptions::default()).unwrap();
        assert!(r.total.abs() < 1e-30, "{}", r.total);
    }

    #[test]
    fn w21_table_interpolates() {
        let p = p();
        let q = ShellQuadrature::default();
        let t = W21Table::build(&p, &ShellQuadrature { n_theta: 32, n_phi: 64, ..q }, 121).unwrap();
        for eps in [0.002, 0.05, 0.5] {
            let direct = w21_oracle(eps, &p, &q).unwrap();
            assert!((t.rate(eps) / direct - 1.0).abs() < 2e-3, "{eps} {}", t.rate(eps) / direct);
        }
        assert_eq!(t.rate(0.0), 0.0);
    }

    #[test]
    fn w21_is_milliseconds_at_low_stress() {
        let tau = 1.0 / w21_oracle(0.002, &p(), &ShellQuadrature::default()).unwrap();
        assert!(tau > 1e-3 && tau < 1e-1, "{tau}");
    }
}
