//! Quality factors, operating temperature and figure tables.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coupling::{gamma, ising_coupling, ret_coupling_10, ret_coupling_21, DonorPairGeometry};
use crate::error::{Error, Result};
use crate::levels::{check_epsilon, epsilon_from_omega10, omega10};
use crate::materials::MaterialParams;
use crate::rates::{decay_rate_closed_form_10, planck_occupation, umklapp_denominator, RateProvider};
use crate::units::{k_to_mk, nm_to_cm, mev_to_rad_per_s, HBAR, K_B};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub epsilon: f64,
    /// cm.
    pub r_spacing: f64,
    /// K.
    pub temperature: f64,
    pub q2: f64,
    pub q3: f64,
}

fn geometry(r: f64) -> Result<DonorPairGeometry> {
    DonorPairGeometry::in_plane(r, 0.0)
}

/// q = 1/(τ₂W₁₀) with τ₂ = π/|J|.
pub fn quality_two_level(r: f64, epsilon: f64, p: &MaterialParams) -> Result<f64> {
    let j = ising_coupling(&geometry(r)?, p)?;
    let w10 = decay_rate_closed_form_10(epsilon, p)?.rate;
    if w10 <= 0.0 {
        return Err(Error::Degenerate("W10 vanishes at ε = 0".into()));
    }
    Ok(j.abs() / (PI * w10))
}

/// The same quantity written out in material constants.
pub fn quality_two_level_expanded(r: f64, epsilon: f64, p: &MaterialParams) -> Result<f64> {
    check_epsilon(epsilon)?;
    let (a, _) = crate::levels::valley_coefficients(epsilon);
    let ak = p.a_par * p.kappa0();
    let w = omega10(epsilon, p);
    let ratio = (p.u_t / p.u_l).powi(2);
    Ok((35.0 * umklapp_denominator(p).powi(6) * p.u_t.powi(5) * (-1.0 + 5.0 / 3.0 * ratio)
        / (64.0 * PI * a * a * ak * ak * r.powi(3) * w.powi(5) * p.a_par * p.a_par))
        .abs())
}

/// x = u_t/(ω₂₁R).
fn x21(r: f64, epsilon: f64, p: &MaterialParams) -> Result<f64> {
    check_epsilon(epsilon)?;
    let w21 = 2.0 * omega10(epsilon, p);
    if w21 <= 0.0 || r <= 0.0 {
        return Err(Error::Degenerate("ω₂₁R must be positive".into()));
    }
    Ok(p.u_t / (w21 * r))
}

/// Zero-temperature three-level quality γx³.
pub fn quality_three_level_max(r: f64, epsilon: f64, p: &MaterialParams) -> Result<f64> {
    Ok(gamma(p) * x21(r, epsilon, p)?.powi(3))
}

/// q = γx³/(n₂₁(T) + 1); T in K.
pub fn quality_three_level(r: f64, epsilon: f64, temperature: f64, p: &MaterialParams) -> Result<f64> {
    if !(temperature >= 0.0) {
        return Err(Error::Validation(format!("temperature {temperature} K is negative")));
    }
    let w21 = 2.0 * omega10(epsilon, p);
    Ok(quality_three_level_max(r, epsilon, p)? / (planck_occupation(w21, temperature) + 1.0))
}

/// k_BT/ħω₂₁.
pub fn thermal_ratio_21(epsilon: f64, temperature: f64, p: &MaterialParams) -> f64 {
    K_B * temperature / (HBAR * 2.0 * omega10(epsilon, p))
}

/// Highest temperature (K) reaching quality `q`: exact inversion of the three-level quality.
pub fn operating_temperature(q: f64, r: f64, epsilon: f64, p: &MaterialParams) -> Result<f64> {
    let qmax = quality_three_level_max(r, epsilon, p)?;
    if !(q > 0.0) {
        return Err(Error::Validation(format!("target quality {q} must be positive")));
    }
    if q >= qmax {
        return Err(Error::Infeasible(format!("target quality {q:.4e} ≥ zero-temperature maximum {qmax:.4e}")));
    }
    let w21 = 2.0 * omega10(epsilon, p);
    // ln(qmax/(qmax − q)) via ln_1p for small q/qmax.
    let l = -(-q / qmax).ln_1p();
    Ok(HBAR * w21 / (K_B * l))
}

/// The closed form as printed alongside the figure, kept for comparison only.
pub fn operating_temperature_printed(q: f64, r: f64, epsilon: f64, p: &MaterialParams) -> Result<f64> {
    let x = x21(r, epsilon, p)?;
    let arg = 1.0 - q / (3.0 * gamma(p)) / x;
    if !(arg > 0.0 && arg < 1.0) {
        return Err(Error::Infeasible(format!("printed form undefined: log argument {arg:.4e}")));
    }
    let w21 = 2.0 * omega10(epsilon, p);
    Ok(-HBAR * w21 / (3.0 * K_B * arg.ln()))
}

pub fn operating_point(r: f64, epsilon: f64, temperature: f64, p: &MaterialParams) -> Result<OperatingPoint> {
    Ok(OperatingPoint {
        epsilon,
        r_spacing: r,
        temperature,
        q2: quality_two_level(r, epsilon, p)?,
        q3: quality_three_level(r, epsilon, temperature, p)?,
    })
}

/// ħω₂₁ fixed for the temperature figure, meV.
pub const FIG3_HBAR_OMEGA21_MEV: f64 = 0.001;

pub fn epsilon_for_omega21(omega21: f64, p: &MaterialParams) -> f64 {
    epsilon_from_omega10(0.5 * omega21, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Fig1Lifetimes,
    Fig3Temperature,
    CouplingVsR,
    RatesVsOmega,
}

/// Numeric table with a metadata block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub metadata: BTreeMap<String, Value>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table { metadata: BTreeMap::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Dimension { expected: self.columns.len(), got: row.len() });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// `#`-prefixed metadata (one `key: json` line each), header row, then rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "# {k}: {v}");
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|x| format_number(*x)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        let rows: Vec<Vec<Value>> =
            self.rows.iter().map(|r| r.iter().map(|&x| number_value(x)).collect()).collect();
        let v = serde_json::json!({ "metadata": self.metadata, "columns": self.columns, "rows": rows });
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

/// Shortest round-trip representation; non-finite values spelled out.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:e}")
    }
}

fn number_value(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Validation(format!("{name} grid is empty")));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation(format!("{name} grid has a non-finite entry")));
    }
    Ok(())
}

fn sorted(grid: &[f64]) -> Vec<f64> {
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Columns eps, tau10_s, tau21_s.
pub fn fig1_lifetimes(eps: &[f64], rates: &RateProvider) -> Result<Table> {
    check_grid("ε", eps)?;
    let eps = sorted(eps);
    for &e in &eps {
        check_epsilon(e)?;
        if e <= 0.0 {
            return Err(Error::Validity("lifetimes diverge at ε = 0".into()));
        }
    }
    let rows: Vec<Result<Vec<f64>>> =
        eps.par_iter().map(|&e| Ok(vec![e, 1.0 / rates.w10(e)?, 1.0 / rates.w21(e)])).collect();
    let mut t = Table::new(&["eps", "tau10_s", "tau21_s"]);
    for r in rows {
        t.push(r?)?;
    }
    Ok(t)
}

/// Columns R_nm, q, T_star_mK at fixed ħω₂₁, plus T_printed_mK when asked; undefined points are NaN.
pub fn fig3_temperature(r_nm: &[f64], qs: &[f64], omega21: f64, printed: bool, p: &MaterialParams) -> Result<Table> {
    check_grid("R", r_nm)?;
    check_grid("q", qs)?;
    if r_nm.iter().any(|&r| r <= 0.0) {
        return Err(Error::Validation("separations must be positive".into()));
    }
    let eps = epsilon_for_omega21(omega21, p);
    check_epsilon(eps)?;
    let mut t = if printed {
        Table::new(&["R_nm", "q", "T_star_mK", "T_printed_mK"])
    } else {
        Table::new(&["R_nm", "q", "T_star_mK"])
    };
    for &q in &sorted(qs) {
        for &rn in &sorted(r_nm) {
            let r = nm_to_cm(rn);
            let exact = operating_temperature(q, r, eps, p);
            let exact = match exact {
                Ok(v) => k_to_mk(v),
                Err(Error::Infeasible(_)) => f64::NAN,
                Err(e) => return Err(e),
            };
            let mut row = vec![rn, q, exact];
            if printed {
                row.push(operating_temperature_printed(q, r, eps, p).map(k_to_mk).unwrap_or(f64::NAN));
            }
            t.push(row)?;
        }
    }
    Ok(t)
}

/// Closed-form couplings vs separation: R_nm, g10_rad_s, g21_rad_s, J_rad_s.
pub fn coupling_vs_r(r_nm: &[f64], epsilon10: f64, epsilon21: f64, rates: &RateProvider) -> Result<Table> {
    check_grid("R", r_nm)?;
    let p = &rates.params;
    let w21 = rates.w21(epsilon21);
    let mut t = Table::new(&["R_nm", "g10_rad_s", "g21_rad_s", "J_rad_s"]);
    for &rn in &sorted(r_nm) {
        let g = geometry(nm_to_cm(rn))?;
        t.push(vec![
            rn,
            ret_coupling_10(&g, epsilon10, p)?,
            ret_coupling_21(&g, epsilon21, p, w21)?,
            ising_coupling(&g, p)?,
        ])?;
    }
    Ok(t)
}

/// eps, omega10_rad_s, omega21_rad_s, w10_per_s, w21_per_s.
pub fn rates_vs_omega(eps: &[f64], rates: &RateProvider) -> Result<Table> {
    check_grid("ε", eps)?;
    let p = &rates.params;
    let mut t = Table::new(&["eps", "omega10_rad_s", "omega21_rad_s", "w10_per_s", "w21_per_s"]);
    for &e in &sorted(eps) {
        check_epsilon(e)?;
        let w = omega10(e, p);
        t.push(vec![e, w, 2.0 * w, rates.w10(e)?, rates.w21(e)])?;
    }
    Ok(t)
}

/// Grid inputs of [`sweep`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepGrid {
    pub eps: Vec<f64>,
    /// nm.
    pub r: Vec<f64>,
    pub q: Vec<f64>,
    /// ε for the 1–0 coupling column.
    pub epsilon10: f64,
    /// ε for the 2–1 coupling column.
    pub epsilon21: f64,
    /// ħω₂₁ for the temperature figure, meV.
    pub hbar_omega21_mev: f64,
}

pub fn sweep(kind: SweepKind, grid: &SweepGrid, rates: &RateProvider) -> Result<Table> {
    match kind {
        SweepKind::Fig1Lifetimes => fig1_lifetimes(&grid.eps, rates),
        SweepKind::Fig3Temperature => {
            fig3_temperature(&grid.r, &grid.q, mev_to_rad_per_s(grid.hbar_omega21_mev), false, &rates.params)
        }
        SweepKind::CouplingVsR => coupling_vs_r(&grid.r, grid.epsilon10, grid.epsilon21, rates),
        SweepKind::RatesVsOmega => rates_vs_omega(&grid.eps, rates),
    }
}
