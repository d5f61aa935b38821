//! Stress-split 1s manifold: valley amplitudes, parities and level energies.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::materials::MaterialParams;
use crate::units::HBAR;

/// The six conduction-band valleys, ordered (+x, −x, +y, −y, +z, −z).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Valley {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
    PlusZ,
    MinusZ,
}

impl Valley {
    pub const ALL: [Valley; 6] = [
        Valley::PlusX,
        Valley::MinusX,
        Valley::PlusY,
        Valley::MinusY,
        Valley::PlusZ,
        Valley::MinusZ,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Valley> {
        Self::ALL.get(i).copied()
    }

    /// Cartesian axis 0, 1, 2.
    pub fn axis(self) -> usize {
        self.index() / 2
    }

    pub fn sign(self) -> f64 {
        if self.index() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// The valley at −k_j.
    pub fn partner(self) -> Valley {
        Self::ALL[self.index() ^ 1]
    }

    /// k̂_j.
    pub fn unit(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.axis()] = self.sign();
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StateLabel {
    S0,
    S1,
    S2,
    TOddA,
    TOddB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValleyState {
    pub label: StateLabel,
    pub alpha: [f64; 6],
    pub parity: Parity,
    /// Energy above |0⟩, erg.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelStructure {
    pub epsilon: f64,
    pub a_coef: f64,
    pub b_coef: f64,
    /// |0⟩, |1⟩, |2⟩, then the two odd triplet partners.
    pub states: Vec<ValleyState>,
    pub omega10: f64,
    pub omega21: f64,
}

impl LevelStructure {
    pub fn state(&self, label: StateLabel) -> &ValleyState {
        self.states
            .iter()
            .find(|s| s.label == label)
            .expect("every label is constructed")
    }

    /// Bohr frequency E_from − E_to, rad/s.
    pub fn transition_omega(&self, from: StateLabel, to: StateLabel) -> f64 {
        (self.state(from).energy - self.state(to).energy) / HBAR
    }
}

/// Uniaxial stress parameter ε = Ξ_u(s₁₁ − s₁₂)F/(3Δ_c) for compressive stress F (dyn/cm²).
pub fn epsilon_from_stress(stress: f64, p: &MaterialParams) -> f64 {
    p.xi_u * (p.s11 - p.s12) * stress / (3.0 * p.delta_c)
}

pub fn stress_from_epsilon(epsilon: f64, p: &MaterialParams) -> f64 {
    epsilon * 3.0 * p.delta_c / (p.xi_u * (p.s11 - p.s12))
}

/// ω₁₀ = εΔ_c/ħ.
pub fn omega10(epsilon: f64, p: &MaterialParams) -> f64 {
    epsilon * p.delta_c / HBAR
}

/// ε at which ω₁₀ takes the given value.
pub fn epsilon_from_omega10(omega: f64, p: &MaterialParams) -> f64 {
    omega * HBAR / p.delta_c
}

/// Singlet amplitudes (a, b), normalised so that 2a² + 4b² = 1.
pub fn valley_coefficients(epsilon: f64) -> (f64, f64) {
    let s = 6.0 * 3f64.sqrt();
    let a = (6.0 + epsilon) / s;
    let b = (3.0 - epsilon) / s;
    let n = (2.0 * a * a + 4.0 * b * b).sqrt();
    (a / n, b / n)
}

pub const EPSILON_MAX: f64 = 3.0;

pub fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..EPSILON_MAX).contains(&epsilon) {
        return Err(Error::Validity(format!(
            "stress parameter {epsilon} outside [0, {EPSILON_MAX})"
        )));
    }
    Ok(())
}

pub fn manifold(epsilon: f64, p: &MaterialParams) -> Result<LevelStructure> {
    check_epsilon(epsilon)?;
    let (a, b) = valley_coefficients(epsilon);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let w10 = omega10(epsilon, p);
    let e1 = HBAR * w10;
    let e2 = 3.0 * e1;
    let states = vec![
        ValleyState { label: StateLabel::S0, alpha: [0.0, 0.0, 0.0, 0.0, h, -h], parity: Parity::Odd, energy: 0.0 },
        ValleyState { label: StateLabel::S1, alpha: [b, b, b, b, a, a], parity: Parity::Even, energy: e1 },
        ValleyState { label: StateLabel::S2, alpha: [0.5, 0.5, -0.5, -0.5, 0.0, 0.0], parity: Parity::Even, energy: e2 },
        ValleyState { label: StateLabel::TOddA, alpha: [h, -h, 0.0, 0.0, 0.0, 0.0], parity: Parity::Odd, energy: e2 },
        ValleyState { label: StateLabel::TOddB, alpha: [0.0, 0.0, h, -h, 0.0, 0.0], parity: Parity::Odd, energy: e2 },
    ];
    Ok(LevelStructure { epsilon, a_coef: a, b_coef: b, states, omega10: w10, omega21: 2.0 * w10 })
}

/// Parity under k_j → −k_j of a normalised amplitude vector.
pub fn parity_of_alpha(alpha: &[f64; 6]) -> Result<Parity> {
    const TOL: f64 = 1e-12;
    let even = (0..3).all(|k| (alpha[2 * k] - alpha[2 * k + 1]).abs() <= TOL);
    let odd = (0..3).all(|k| (alpha[2 * k] + alpha[2 * k + 1]).abs() <= TOL);
    match (even, odd) {
        (true, false) => Ok(Parity::Even),
        (false, true) => Ok(Parity::Odd),
        _ => Err(Error::Invariant(format!("amplitudes {alpha:?} have no definite parity"))),
    }
}

pub fn parity_of(state: &ValleyState) -> Result<Parity> {
    parity_of_alpha(&state.alpha)
}
