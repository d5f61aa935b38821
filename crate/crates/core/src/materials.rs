//! Silicon and Li-donor material constants.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{ANGSTROM, EV, HBAR, K_B, MEV, NM};

/// Physical constants, stored in CGS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    /// Uniaxial deformation potential Ξ_u, erg.
    pub xi_u: f64,
    /// Dilational deformation potential Ξ_d, erg. Any sign.
    pub xi_d: f64,
    /// Mass density, g/cm³.
    pub rho: f64,
    /// Transverse sound speed, cm/s.
    pub u_t: f64,
    /// Longitudinal sound speed, cm/s.
    pub u_l: f64,
    /// Elastic compliance s₁₁, cm²/dyn.
    pub s11: f64,
    /// Elastic compliance s₁₂, cm²/dyn. Any sign; s₁₁ − s₁₂ > 0.
    pub s12: f64,
    /// Lattice constant, cm.
    pub a_si: f64,
    /// Envelope radius along the valley axis, cm.
    pub a_par: f64,
    /// Envelope radius transverse to the valley axis, cm.
    pub a_perp: f64,
    /// Valley-orbit energy unit Δ_c, erg.
    pub delta_c: f64,
    /// Dephasing prefactor, Hz.
    pub nu0: f64,
    /// Dephasing temperature scale, K.
    pub t0: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            xi_u: 8.77 * EV,
            xi_d: 1.1 * EV,
            rho: 2.329,
            u_t: 5.41e5,
            u_l: 9.04e5,
            s11: 7.68e-13,
            s12: -2.14e-13,
            a_si: 5.431 * ANGSTROM,
            a_par: 14.2 * ANGSTROM,
            a_perp: 25.0 * ANGSTROM,
            delta_c: 1.76 / 6.0 * MEV,
            nu0: 2.0e14,
            t0: 19.0,
        }
    }
}

/// One configurable field: its API key, unit, scale to CGS and a source note.
struct FieldSpec {
    key: &'static str,
    unit: &'static str,
    scale: f64,
    note: &'static str,
    get: fn(&MaterialParams) -> f64,
    set: fn(&mut MaterialParams, f64),
}

const FIELDS: &[FieldSpec] = &[
    FieldSpec { key: "xi_u_eV", unit: "eV", scale: EV, note: "standard Si conduction-band value", get: |p| p.xi_u, set: |p, v| p.xi_u = v },
    FieldSpec { key: "xi_d_eV", unit: "eV", scale: EV, note: "standard Si conduction-band value", get: |p| p.xi_d, set: |p, v| p.xi_d = v },
    FieldSpec { key: "rho_g_cm3", unit: "g/cm^3", scale: 1.0, note: "Si mass density", get: |p| p.rho, set: |p, v| p.rho = v },
    FieldSpec { key: "u_t_cm_s", unit: "cm/s", scale: 1.0, note: "isotropic transverse sound speed", get: |p| p.u_t, set: |p, v| p.u_t = v },
    FieldSpec { key: "u_l_cm_s", unit: "cm/s", scale: 1.0, note: "isotropic longitudinal sound speed", get: |p| p.u_l, set: |p, v| p.u_l = v },
    FieldSpec { key: "s11_cm2_dyn", unit: "cm^2/dyn", scale: 1.0, note: "Si elastic compliance", get: |p| p.s11, set: |p, v| p.s11 = v },
    FieldSpec { key: "s12_cm2_dyn", unit: "cm^2/dyn", scale: 1.0, note: "Si elastic compliance", get: |p| p.s12, set: |p, v| p.s12 = v },
    FieldSpec { key: "a_si_nm", unit: "nm", scale: NM, note: "Si lattice constant", get: |p| p.a_si, set: |p, v| p.a_si = v },
    FieldSpec { key: "a_par_nm", unit: "nm", scale: NM, note: "Kohn-Luttinger radius along the valley axis", get: |p| p.a_par, set: |p, v| p.a_par = v },
    FieldSpec { key: "a_perp_nm", unit: "nm", scale: NM, note: "Kohn-Luttinger radius transverse to the valley axis", get: |p| p.a_perp, set: |p, v| p.a_perp = v },
    FieldSpec { key: "delta_c_meV", unit: "meV", scale: MEV, note: "6 delta_c = 1.76 meV", get: |p| p.delta_c, set: |p, v| p.delta_c = v },
    FieldSpec { key: "nu0_Hz", unit: "Hz", scale: 1.0, note: "dephasing prefactor", get: |p| p.nu0, set: |p, v| p.nu0 = v },
    FieldSpec { key: "t0_K", unit: "K", scale: 1.0, note: "dephasing temperature scale", get: |p| p.t0, set: |p, v| p.t0 = v },
];

/// Override set in API units, keyed by field name. Ordered for reproducible echoes.
pub type Overrides = BTreeMap<String, f64>;

/// A row of the constants dump.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantEntry {
    pub key: String,
    pub value: f64,
    pub unit: String,
    pub note: String,
}

/// Defaults merged with `overrides` (API units), then validated.
pub fn build_materials(overrides: &Overrides) -> Result<MaterialParams> {
    let mut p = MaterialParams::default();
    for (key, &value) in overrides {
        let field = FIELDS
            .iter()
            .find(|f| f.key == key)
            .ok_or_else(|| Error::Config(format!("unknown constant key `{key}`")))?;
        if !value.is_finite() {
            return Err(Error::Validation(format!("`{key}` must be finite")));
        }
        (field.set)(&mut p, value * field.scale);
    }
    p.validate()?;
    Ok(p)
}

/// Parses a JSON object of API-unit overrides.
pub fn overrides_from_json(text: &str) -> Result<Overrides> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
    let mut out = Overrides::new();
    for (k, v) in obj {
        let x = v
            .as_f64()
            .ok_or_else(|| Error::Config(format!("`{k}` must be a number")))?;
        out.insert(k.clone(), x);
    }
    Ok(out)
}

pub fn load_overrides(path: &Path) -> Result<Overrides> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    overrides_from_json(&text)
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("xi_u_eV", self.xi_u),
            ("rho_g_cm3", self.rho),
            ("u_t_cm_s", self.u_t),
            ("u_l_cm_s", self.u_l),
            ("s11_cm2_dyn", self.s11),
            ("a_si_nm", self.a_si),
            ("a_par_nm", self.a_par),
            ("a_perp_nm", self.a_perp),
            ("delta_c_meV", self.delta_c),
            ("nu0_Hz", self.nu0),
            ("t0_K", self.t0),
        ];
        for (k, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Validation(format!("`{k}` must be strictly positive")));
            }
        }
        if !(self.u_l > self.u_t) {
            return Err(Error::Validation(
                "longitudinal sound speed must exceed transverse".into(),
            ));
        }
        if !(self.s11 - self.s12 > 0.0) {
            return Err(Error::Validation("s11 - s12 must be positive".into()));
        }
        Ok(())
    }

    /// Closest intervalley separation κ₀ = 0.6π/a_Si, 1/cm.
    pub fn kappa0(&self) -> f64 {
        0.6 * std::f64::consts::PI / self.a_si
    }

    /// Ξ_d/Ξ_u.
    pub fn sigma(&self) -> f64 {
        self.xi_d / self.xi_u
    }

    /// Every field in API units, with its unit and source note.
    pub fn constants_table(&self) -> Vec<ConstantEntry> {
        FIELDS
            .iter()
            .map(|f| ConstantEntry {
                key: f.key.to_string(),
                value: (f.get)(self) / f.scale,
                unit: f.unit.to_string(),
                note: f.note.to_string(),
            })
            .collect()
    }

    /// Compact `key=value` listing in API units for reproducibility headers.
    pub fn fingerprint(&self) -> String {
        FIELDS
            .iter()
            .map(|f| format!("{}={:e}", f.key, (f.get)(self) / f.scale))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Recognised override keys, in canonical order.
pub fn field_keys() -> Vec<&'static str> {
    FIELDS.iter().map(|f| f.key).collect()
}

/// Quantities derived from the constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    /// 1/cm.
    pub kappa0: f64,
    pub sigma: f64,
    /// ħu_t/(a_⊥k_B), K.
    pub t0_check: f64,
}

pub fn derive(p: &MaterialParams) -> DerivedParams {
    DerivedParams {
        kappa0: p.kappa0(),
        sigma: p.sigma(),
        t0_check: HBAR * p.u_t / p.a_perp / K_B,
    }
}

impl DerivedParams {
    pub fn t0_consistent(&self, p: &MaterialParams) -> bool {
        (self.t0_check / p.t0 - 1.0).abs() <= 0.2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_valley_orbit_unit() {
        let p = build_materials(&Overrides::new()).unwrap();
        assert!((6.0 * p.delta_c / MEV - 1.76).abs() < 1e-12);
        assert_eq!(p.nu0, 2.0e14);
        assert_eq!(p.t0, 19.0);
    }

    #[test]
    fn kappa0_default() {
        let d = derive(&MaterialParams::default());
        // 0.6 * pi / 5.431 Å, with pi = 4 atan(1)
        let oracle = 0.6 * 4.0 * 1f64.atan() / 5.431;
        assert!((d.kappa0 * ANGSTROM / oracle - 1.0).abs() < 1e-14);
        assert!((d.kappa0 * ANGSTROM - 0.347).abs() < 1e-3);
    }

    #[test]
    fn sigma_and_t0_check() {
        let p = MaterialParams::default();
        let d = derive(&p);
        assert!((d.sigma - 1.1 / 8.77).abs() < 1e-14);
        assert!((d.sigma - 0.125).abs() < 1e-3);
        // 1.054571817e-27 * 5.41e5 / 25e-8 / 1.380649e-16
        assert!((d.t0_check - 16.53).abs() < 0.01, "{}", d.t0_check);
        assert!(d.t0_consistent(&p));
    }

    #[test]
    fn lattice_constant_doubling_halves_kappa0() {
        let mut o = Overrides::new();
        o.insert("a_si_nm".into(), 2.0 * 0.5431);
        let p = build_materials(&o).unwrap();
        let k = derive(&p).kappa0;
        let k0 = derive(&MaterialParams::default()).kappa0;
        assert!((k / k0 - 0.5).abs() < 1e-14);
    }

    #[test]
    fn equal_sound_speeds_rejected() {
        let mut o = Overrides::new();
        o.insert("u_t_cm_s".into(), 9.04e5);
        assert!(matches!(build_materials(&o), Err(Error::Validation(_))));
    }

    #[test]
    fn unknown_key_rejected() {
        let mut o = Overrides::new();
        o.insert("c_light".into(), 1.0);
        assert!(matches!(build_materials(&o), Err(Error::Config(_))));
    }

    #[test]
    fn negative_dilational_allowed() {
        let mut o = Overrides::new();
        o.insert("xi_d_eV".into(), -2.0);
        assert!(build_materials(&o).is_ok());
    }

    #[test]
    fn json_overrides() {
        let o = overrides_from_json(r#"{"xi_u_eV": 9.0, "a_par_nm": 1.5}"#).unwrap();
        let p = build_materials(&o).unwrap();
        assert!((p.xi_u / EV - 9.0).abs() < 1e-12);
        assert!((p.a_par / NM - 1.5).abs() < 1e-12);
        assert!(overrides_from_json("[1,2]").is_err());
    }

    #[test]
    fn table_round_trips_through_overrides() {
        let p = MaterialParams::default();
        let o: Overrides = p
            .constants_table()
            .into_iter()
            .map(|e| (e.key, e.value))
            .collect();
        let q = build_materials(&o).unwrap();
        for (a, b) in p.constants_table().iter().zip(q.constants_table()) {
            assert!((a.value - b.value).abs() <= 1e-12 * a.value.abs());
        }
    }
}
