//! Acoustic phonon modes and deformation-potential matrix elements.

use serde::Serialize;

use crate::envelope::{dot, form_factor, intervalley_form_factor, norm};
use crate::error::{Error, Result};
use crate::levels::{Valley, ValleyState};
use crate::materials::MaterialParams;
use crate::units::HBAR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Branch {
    L,
    T1,
    T2,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::L, Branch::T1, Branch::T2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_transverse(self) -> bool {
        self != Branch::L
    }

    pub fn speed(self, p: &MaterialParams) -> f64 {
        match self {
            Branch::L => p.u_l,
            _ => p.u_t,
        }
    }
}

/// Orthonormal (q̂, ê₁, ê₂) with ê₁ in the plane of q and ẑ (x̂ when q ∥ ẑ).
pub fn polarization_basis(q: &[f64; 3]) -> [[f64; 3]; 3] {
    let n = norm(q);
    let l = [q[0] / n, q[1] / n, q[2] / n];
    let reference = if l[0].hypot(l[1]) < 1e-12 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] };
    // ê₁ = normalised (q̂ × ref) × q̂, flipped so that it points away from `ref` like e_θ.
    let c = dot(&reference, &l);
    let mut t1 = [c * l[0] - reference[0], c * l[1] - reference[1], c * l[2] - reference[2]];
    let m = norm(&t1);
    for x in &mut t1 {
        *x /= m;
    }
    let t2 = cross(&l, &t1);
    [l, t1, t2]
}

pub fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhononMode {
    pub q: [f64; 3],
    pub branch: Branch,
    pub polarization: [f64; 3],
    pub speed: f64,
    pub omega: f64,
}

impl PhononMode {
    /// Mode with the canonical polarization of [`polarization_basis`].
    pub fn new(q: [f64; 3], branch: Branch, p: &MaterialParams) -> Result<PhononMode> {
        let qn = norm(&q);
        if !(qn > 0.0) {
            return Err(Error::Degenerate("zero wavevector has no polarization".into()));
        }
        let basis = polarization_basis(&q);
        Ok(Self::build(q, branch, basis[branch.index()], p))
    }

    /// Mode with an explicit polarization; must be parallel (L) or perpendicular (T) to q.
    pub fn with_polarization(q: [f64; 3], branch: Branch, e: [f64; 3], p: &MaterialParams) -> Result<PhononMode> {
        let qn = norm(&q);
        let en = norm(&e);
        if !(qn > 0.0) || (en - 1.0).abs() > 1e-12 {
            return Err(Error::Validation("polarization must be a unit vector and q nonzero".into()));
        }
        let c = dot(&q, &e) / qn;
        let ok = match branch {
            Branch::L => (c.abs() - 1.0).abs() < 1e-12,
            _ => c.abs() < 1e-12,
        };
        if !ok {
            return Err(Error::Validation(format!("polarization inconsistent with branch {branch:?}")));
        }
        Ok(Self::build(q, branch, e, p))
    }

    fn build(q: [f64; 3], branch: Branch, e: [f64; 3], p: &MaterialParams) -> PhononMode {
        let speed = branch.speed(p);
        PhononMode { q, branch, polarization: e, speed, omega: speed * norm(&q) }
    }
}

/// Ξ_u(k̂_j·q)(k̂_j·ê) + Ξ_d(q·ê), erg/cm.
pub fn strain_coupling(v: Valley, q: &[f64; 3], e: &[f64; 3], p: &MaterialParams) -> f64 {
    let k = v.unit();
    p.xi_u * dot(&k, q) * dot(&k, e) + p.xi_d * dot(q, e)
}

/// Mode normalisation √(ħ/2ρΩ) with the volume absorbed into the continuum measure.
pub fn mode_amplitude(omega: f64, p: &MaterialParams) -> f64 {
    (HBAR / (2.0 * p.rho * omega)).sqrt()
}

/// M^j for one valley and mode.
pub fn deformation_matrix_element(v: Valley, mode: &PhononMode, p: &MaterialParams) -> Result<f64> {
    if !(mode.omega > 0.0) {
        return Err(Error::Degenerate("zero-frequency mode".into()));
    }
    Ok(mode_amplitude(mode.omega, p) * strain_coupling(v, &mode.q, &mode.polarization, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatrixElementOptions {
    pub include_intravalley: bool,
    pub include_intervalley: bool,
}

impl Default for MatrixElementOptions {
    fn default() -> Self {
        Self { include_intravalley: true, include_intervalley: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionSpec {
    pub from: ValleyState,
    pub to: ValleyState,
    /// Bohr frequency of the transition, rad/s.
    pub omega: f64,
}

impl TransitionSpec {
    pub fn new(from: ValleyState, to: ValleyState) -> TransitionSpec {
        TransitionSpec { from, to, omega: (from.energy - to.energy) / HBAR }
    }
}

/// Valley weights of a transition, reducing the valley sum to a diagonal strain tensor.
#[derive(Debug, Clone, Copy)]
pub struct TransitionAmplitude {
    /// α^to_j α^from_j.
    intra: [f64; 6],
    /// α^to_j α^from_{−j}.
    inter: [f64; 6],
}

impl TransitionAmplitude {
    pub fn new(to: &ValleyState, from: &ValleyState, opts: MatrixElementOptions) -> Result<Self> {
        if !opts.include_intravalley && !opts.include_intervalley {
            return Err(Error::Validation("empty term selection".into()));
        }
        let mut intra = [0.0; 6];
        let mut inter = [0.0; 6];
        for v in Valley::ALL {
            let j = v.index();
            if opts.include_intravalley {
                intra[j] = to.alpha[j] * from.alpha[j];
            }
            if opts.include_intervalley {
                inter[j] = to.alpha[j] * from.alpha[v.partner().index()];
            }
        }
        Ok(Self { intra, inter })
    }

    /// Σ_j (|intra_j| + |inter_j|).
    pub fn weight_norm(&self) -> f64 {
        self.intra.iter().chain(&self.inter).map(|w| w.abs()).sum()
    }

    /// Diagonal of T(q) with P(q, ê) = q·T(q)·ê, erg.
    pub fn tensor(&self, q: &[f64; 3], p: &MaterialParams) -> [f64; 3] {
        let mut c_axis = [0.0; 3];
        for v in Valley::ALL {
            let j = v.index();
            let mut c = 0.0;
            if self.intra[j] != 0.0 {
                c += self.intra[j] * form_factor(v.axis(), q, p);
            }
            if self.inter[j] != 0.0 {
                c += self.inter[j] * intervalley_form_factor(v, q, p);
            }
            c_axis[v.axis()] += c;
        }
        let total = c_axis[0] + c_axis[1] + c_axis[2];
        [
            p.xi_u * c_axis[0] + p.xi_d * total,
            p.xi_u * c_axis[1] + p.xi_d * total,
            p.xi_u * c_axis[2] + p.xi_d * total,
        ]
    }

    /// Σ_j M^j(without mode normalisation) α^to_j [α^from_j F_j + α^from_{−j} F_j^umklapp], erg/cm.
    pub fn strain(&self, q: &[f64; 3], e: &[f64; 3], p: &MaterialParams) -> f64 {
        let t = self.tensor(q, p);
        q[0] * t[0] * e[0] + q[1] * t[1] * e[1] + q[2] * t[2] * e[2]
    }
}

/// V^{to,from} for one phonon mode, erg.
pub fn transition_matrix_element(
    spec: &TransitionSpec,
    mode: &PhononMode,
    p: &MaterialParams,
    opts: MatrixElementOptions,
) -> Result<f64> {
    if !(mode.omega > 0.0) {
        return Err(Error::Degenerate("zero-frequency mode".into()));
    }
    let amp = TransitionAmplitude::new(&spec.to, &spec.from, opts)?;
    Ok(mode_amplitude(mode.omega, p) * amp.strain(&mode.q, &mode.polarization, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::{manifold, StateLabel};
    use proptest::prelude::*;

    fn p() -> MaterialParams {
        MaterialParams::default()
    }

    #[test]
    fn basis_is_orthonormal() {
        for q in [[1.0, 2.0, 3.0], [0.0, 0.0, 2.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]] {
            let b = polarization_basis(&q);
            for i in 0..3 {
                assert!((norm(&b[i]) - 1.0).abs() < 1e-12);
                for j in 0..i {
                    assert!(dot(&b[i], &b[j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dispersion_is_linear() {
        let p = p();
        let m = PhononMode::new([1e6, 2e6, 0.0], Branch::T2, &p).unwrap();
        assert_eq!(m.omega, p.u_t * norm(&[1e6, 2e6, 0.0]));
        assert!(PhononMode::new([0.0; 3], Branch::L, &p).is_err());
    }

    #[test]
    fn transverse_perpendicular_geometry_vanishes() {
        let p = p();
        // q ⊥ ẑ valley, ê ⊥ the (ẑ, q) plane.
        let m = PhononMode::with_polarization([1e6, 0.0, 0.0], Branch::T1, [0.0, 1.0, 0.0], &p).unwrap();
        assert_eq!(deformation_matrix_element(Valley::PlusZ, &m, &p).unwrap(), 0.0);
    }

    #[test]
    fn collinear_longitudinal() {
        let p = p();
        let q = 3e6;
        let m = PhononMode::new([0.0, 0.0, q], Branch::L, &p).unwrap();
        let expect = (HBAR / (2.0 * p.rho * m.omega)).sqrt() * (p.xi_u + p.xi_d) * q;
        let got = deformation_matrix_element(Valley::PlusZ, &m, &p).unwrap();
        assert!((got - expect).abs() < 1e-12 * expect.abs());
    }

    #[test]
    fn forty_five_degrees() {
        let p = p();
        let q = 2e6;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let m = PhononMode::with_polarization([q * s, 0.0, q * s], Branch::T1, [-s, 0.0, s], &p).unwrap();
        let got = deformation_matrix_element(Valley::PlusZ, &m, &p).unwrap();
        let expect = (HBAR / (2.0 * p.rho * m.omega)).sqrt() * p.xi_u * q / 2.0;
        assert!((got - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn empty_selection_rejected() {
        let p = p();
        let l = manifold(0.2, &p).unwrap();
        let spec = TransitionSpec::new(*l.state(StateLabel::S1), *l.state(StateLabel::S0));
        let m = PhononMode::new([1e6, 0.0, 0.0], Branch::L, &p).unwrap();
        let opts = MatrixElementOptions { include_intravalley: false, include_intervalley: false };
        assert!(transition_matrix_element(&spec, &m, &p, opts).is_err());
    }

    #[test]
    fn small_q_limit_of_two_to_one() {
        // With F(0) = 1 the intravalley tensor reduces to Σ_j α²_j α¹_j (Ξ_u k̂k̂ + Ξ_d).
        let p = p();
        let l = manifold(0.1, &p).unwrap();
        let (s1, s2) = (l.state(StateLabel::S1), l.state(StateLabel::S2));
        let opts = MatrixElementOptions { include_intravalley: true, include_intervalley: false };
        let amp = TransitionAmplitude::new(s1, s2, opts).unwrap();
        let q = [1e-3, 2e-3, 0.5e-3];
        let e = [0.3, -0.2, 0.9];
        let mut oracle = 0.0;
        for v in Valley::ALL {
            let k = v.unit();
            let w = s1.alpha[v.index()] * s2.alpha[v.index()];
            oracle += w * (p.xi_u * dot(&k, &q) * dot(&k, &e) + p.xi_d * dot(&q, &e));
        }
        let got = amp.strain(&q, &e, &p);
        assert!(oracle.abs() > 0.0);
        assert!((got - oracle).abs() < 1e-9 * oracle.abs());
    }

    proptest! {
        #[test]
        fn parity_selection(
            qx in -1.0f64..1.0, qy in -1.0f64..1.0, qz in -1.0f64..1.0,
            scale in 0.01f64..0.3, b in 0usize..3, eps in 0.0f64..1.0
        ) {
            let p = p();
            prop_assume!(qx * qx + qy * qy + qz * qz > 1e-4);
            let n = (qx * qx + qy * qy + qz * qz).sqrt();
            let k = scale / p.a_par / n;
            let q = [qx * k, qy * k, qz * k];
            let l = manifold(eps, &p).unwrap();
            let intra = MatrixElementOptions { include_intravalley: true, include_intervalley: false };
            let mode = PhononMode::new(q, Branch::ALL[b], &p).unwrap();
            let odd = TransitionSpec::new(*l.state(StateLabel::S1), *l.state(StateLabel::S0));
            let even = TransitionSpec::new(*l.state(StateLabel::S2), *l.state(StateLabel::S1));
            let v_odd = transition_matrix_element(&odd, &mode, &p, intra).unwrap();
            let v_even = transition_matrix_element(&even, &mode, &p, intra).unwrap();
            prop_assert!(v_odd.abs() <= 1e-12 * v_even.abs().max(1e-300) || v_odd == 0.0);
        }
    }
}
