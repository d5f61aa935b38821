//! Internal unit system (CGS: erg, cm, s, g, K) and conversions at the API boundary.
//!
//! The public surface speaks meV, nm, ns, mK and dyn/cm²; everything inside the
//! crate is CGS. Angular frequencies are rad/s and rates are 1/s.

/// Reduced Planck constant, erg·s.
pub const HBAR: f64 = 1.054_571_817e-27;
/// Boltzmann constant, erg/K.
pub const K_B: f64 = 1.380_649e-16;
/// One electron-volt in erg.
pub const EV: f64 = 1.602_176_634e-12;
/// One milli-electron-volt in erg.
pub const MEV: f64 = 1.0e-3 * EV;
/// One nanometre in cm.
pub const NM: f64 = 1.0e-7;
/// One ångström in cm.
pub const ANGSTROM: f64 = 1.0e-8;
/// One nanosecond in s.
pub const NS: f64 = 1.0e-9;
/// One millikelvin in K.
pub const MK: f64 = 1.0e-3;

/// E/ħ for an energy in erg.
pub fn energy_to_angular_frequency(energy_erg: f64) -> f64 {
    energy_erg / HBAR
}

/// ħω in erg.
pub fn angular_frequency_to_energy(omega: f64) -> f64 {
    omega * HBAR
}

pub fn mev_to_erg(mev: f64) -> f64 {
    mev * MEV
}

pub fn erg_to_mev(erg: f64) -> f64 {
    erg / MEV
}

/// Energy in meV to angular frequency in rad/s.
pub fn mev_to_rad_per_s(mev: f64) -> f64 {
    energy_to_angular_frequency(mev_to_erg(mev))
}

/// Angular frequency in rad/s to energy in meV.
pub fn rad_per_s_to_mev(omega: f64) -> f64 {
    erg_to_mev(angular_frequency_to_energy(omega))
}

pub fn nm_to_cm(nm: f64) -> f64 {
    // 1e7 is exact in binary; 1e-7 is not.
    nm / 1e7
}

pub fn cm_to_nm(cm: f64) -> f64 {
    cm * 1e7
}

pub fn ns_to_s(ns: f64) -> f64 {
    ns * NS
}

pub fn s_to_ns(s: f64) -> f64 {
    s / NS
}

pub fn mk_to_k(mk: f64) -> f64 {
    mk * MK
}

pub fn k_to_mk(k: f64) -> f64 {
    k / MK
}

/// Stress is already CGS at the boundary; kept for symmetry of the API.
pub fn dyn_cm2_to_internal(stress: f64) -> f64 {
    stress
}

pub fn internal_to_dyn_cm2(stress: f64) -> f64 {
    stress
}

/// Angular frequency in rad/ns (schedule files) to rad/s.
pub fn rad_per_ns_to_rad_per_s(w: f64) -> f64 {
    w / NS
}

pub fn rad_per_s_to_rad_per_ns(w: f64) -> f64 {
    w * NS
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_energy_is_zero_frequency() {
        assert_eq!(energy_to_angular_frequency(0.0), 0.0);
    }

    #[test]
    fn quoted_energy_scale() {
        // 0.0661 meV: 0.0661e-3 * 1.602176634e-12 / 1.054571817e-27
        let w = mev_to_rad_per_s(0.0661);
        assert!((w / 1.0042e11 - 1.0).abs() < 1e-4, "{w}");
        assert!((w / 1.0e11 - 1.0).abs() < 0.01);
    }

    #[test]
    fn sixty_micro_ev() {
        let oracle = 0.06e-3 * 1.602_176_634e-12 / 1.054_571_817e-27;
        assert!((mev_to_rad_per_s(0.06) / oracle - 1.0).abs() < 1e-14);
        assert!((oracle / 9.11e10 - 1.0).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn round_trips(x in 1e-9f64..1e9) {
            prop_assert!((rad_per_s_to_mev(mev_to_rad_per_s(x)) / x - 1.0).abs() < 1e-12);
            prop_assert!((cm_to_nm(nm_to_cm(x)) / x - 1.0).abs() < 1e-12);
            prop_assert!((s_to_ns(ns_to_s(x)) / x - 1.0).abs() < 1e-12);
            prop_assert!((k_to_mk(mk_to_k(x)) / x - 1.0).abs() < 1e-12);
            prop_assert!((internal_to_dyn_cm2(dyn_cm2_to_internal(x)) / x - 1.0).abs() < 1e-12);
            prop_assert!((rad_per_s_to_rad_per_ns(rad_per_ns_to_rad_per_s(x)) / x - 1.0).abs() < 1e-12);
        }
    }
}
