//! Control pulses, schedules and schedule builders.
//!
//! Times are seconds, stresses dyn/cm², angular frequencies rad/s. The JSON
//! records use ns and rad/ns.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coupling::{ret_coupling_21, DonorPairGeometry};
use crate::error::{Error, Result};
use crate::levels::{check_epsilon, epsilon_from_omega10, omega10, stress_from_epsilon, LevelStructure};
use crate::materials::MaterialParams;
use crate::units::{ns_to_s, rad_per_ns_to_rad_per_s, rad_per_s_to_rad_per_ns, s_to_ns, HBAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    DcStress,
    AcStress,
    RampEpsilon,
    /// Reserved for electric-field drive; schedules may carry it, the engine refuses it.
    StarkField,
}

impl PulseKind {
    pub fn name(self) -> &'static str {
        match self {
            PulseKind::DcStress => "dc_stress",
            PulseKind::AcStress => "ac_stress",
            PulseKind::RampEpsilon => "ramp_epsilon",
            PulseKind::StarkField => "stark_field",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    One(usize),
    Many(Vec<usize>),
}

impl Target {
    pub fn indices(&self) -> Vec<usize> {
        match self {
            Target::One(i) => vec![*i],
            Target::Many(v) => v.clone(),
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        match self {
            Target::One(j) => *j == i,
            Target::Many(v) => v.contains(&i),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampProfile {
    #[default]
    Linear,
    Cosine,
}

impl RampProfile {
    /// Progress in [0, 1] at fractional time s ∈ [0, 1].
    pub fn shape(self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        match self {
            RampProfile::Linear => s,
            RampProfile::Cosine => 0.5 * (1.0 - (PI * s).cos()),
        }
    }

    /// ∫₀ˢ shape.
    pub fn integral(self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        match self {
            RampProfile::Linear => 0.5 * s * s,
            RampProfile::Cosine => 0.5 * (s - (PI * s).sin() / PI),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pulse {
    pub kind: PulseKind,
    pub target: Target,
    pub t_start: f64,
    pub duration: f64,
    /// dc and ac pulses, dyn/cm².
    pub amplitude: Option<f64>,
    /// ac pulses.
    pub carrier: Option<f64>,
    pub phase: f64,
    /// ramp pulses.
    pub ramp_to: Option<f64>,
    pub profile: RampProfile,
}

impl Pulse {
    pub fn dc_stress(target: Target, t_start: f64, duration: f64, amplitude: f64) -> Pulse {
        Pulse {
            kind: PulseKind::DcStress,
            target,
            t_start,
            duration,
            amplitude: Some(amplitude),
            carrier: None,
            phase: 0.0,
            ramp_to: None,
            profile: RampProfile::Linear,
        }
    }

    pub fn ac_stress(target: Target, t_start: f64, duration: f64, amplitude: f64, carrier: f64, phase: f64) -> Pulse {
        Pulse {
            kind: PulseKind::AcStress,
            target,
            t_start,
            duration,
            amplitude: Some(amplitude),
            carrier: Some(carrier),
            phase,
            ramp_to: None,
            profile: RampProfile::Linear,
        }
    }

    pub fn ramp(target: Target, t_start: f64, duration: f64, ramp_to: f64, profile: RampProfile) -> Pulse {
        Pulse {
            kind: PulseKind::RampEpsilon,
            target,
            t_start,
            duration,
            amplitude: None,
            carrier: None,
            phase: 0.0,
            ramp_to: Some(ramp_to),
            profile,
        }
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.duration
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Schedule(format!("{} pulse: {m}", self.kind.name())));
        if !(self.t_start.is_finite() && self.t_start >= 0.0) {
            return bad(format!("t_start {} must be finite and non-negative", self.t_start));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration {} must be positive", self.duration));
        }
        let idx = self.target.indices();
        if idx.is_empty() {
            return bad("empty target".into());
        }
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != idx.len() {
            return bad("duplicate target index".into());
        }
        if !self.phase.is_finite() {
            return bad("phase must be finite".into());
        }
        match self.kind {
            PulseKind::DcStress => match self.amplitude {
                Some(a) if a.is_finite() => {}
                _ => return bad("needs a finite amplitude".into()),
            },
            PulseKind::AcStress => {
                match self.amplitude {
                    Some(a) if a.is_finite() && a > 0.0 => {}
                    _ => return bad("needs a positive amplitude".into()),
                }
                match self.carrier {
                    Some(c) if c.is_finite() && c > 0.0 => {}
                    _ => return bad("needs a positive carrier".into()),
                }
            }
            PulseKind::RampEpsilon => match self.ramp_to {
                Some(e) => check_epsilon(e).or_else(|e| bad(e.to_string()))?,
                None => return bad("needs ramp_to".into()),
            },
            PulseKind::StarkField => {}
        }
        Ok(())
    }

    pub fn to_record(&self) -> PulseRecord {
        PulseRecord {
            kind: self.kind,
            target: self.target.clone(),
            t_start_ns: s_to_ns(self.t_start),
            duration_ns: s_to_ns(self.duration),
            amplitude_dyn_cm2: self.amplitude,
            carrier_rad_per_ns: self.carrier.map(rad_per_s_to_rad_per_ns),
            phase_rad: self.phase,
            ramp_to: self.ramp_to,
            profile: self.profile,
        }
    }
}

/// A pulse in file units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseRecord {
    pub kind: PulseKind,
    pub target: Target,
    pub t_start_ns: f64,
    pub duration_ns: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_dyn_cm2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carrier_rad_per_ns: Option<f64>,
    #[serde(default)]
    pub phase_rad: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_to: Option<f64>,
    #[serde(default)]
    pub profile: RampProfile,
}

impl PulseRecord {
    pub fn to_pulse(&self) -> Pulse {
        Pulse {
            kind: self.kind,
            target: self.target.clone(),
            t_start: ns_to_s(self.t_start_ns),
            duration: ns_to_s(self.duration_ns),
            amplitude: self.amplitude_dyn_cm2,
            carrier: self.carrier_rad_per_ns.map(rad_per_ns_to_rad_per_s),
            phase: self.phase_rad,
            ramp_to: self.ramp_to,
            profile: self.profile,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseSchedule {
    /// Sorted by t_start.
    pub pulses: Vec<Pulse>,
    pub total_time: f64,
}

impl PulseSchedule {
    pub fn empty(total_time: f64) -> PulseSchedule {
        PulseSchedule { pulses: Vec::new(), total_time }
    }

    /// Validates, then sorts stably by start time. Without `total_time` the
    /// schedule ends with its last pulse.
    pub fn new(pulses: Vec<Pulse>, total_time: Option<f64>) -> Result<PulseSchedule> {
        for (k, p) in pulses.iter().enumerate() {
            p.validate().map_err(|e| Error::Schedule(format!("pulse #{k}: {e}")))?;
        }
        for i in 0..pulses.len() {
            for j in i + 1..pulses.len() {
                let (a, b) = (&pulses[i], &pulses[j]);
                if a.kind != b.kind || !(a.t_start < b.t_end() && b.t_start < a.t_end()) {
                    continue;
                }
                if let Some(d) = a.target.indices().into_iter().find(|d| b.target.contains(*d)) {
                    return Err(Error::Schedule(format!(
                        "pulses #{i} and #{j} ({}) overlap on donor {d}",
                        a.kind.name()
                    )));
                }
            }
        }
        let end = pulses.iter().map(Pulse::t_end).fold(0.0, f64::max);
        let total_time = total_time.unwrap_or(end);
        if !(total_time.is_finite() && total_time >= 0.0) {
            return Err(Error::Schedule(format!("total time {total_time} is not a valid duration")));
        }
        if total_time < end * (1.0 - 1e-12) {
            return Err(Error::Schedule(format!("total time {total_time} s ends before the last pulse ({end} s)")));
        }
        let mut pulses = pulses;
        pulses.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        Ok(PulseSchedule { pulses, total_time: total_time.max(end) })
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    /// Sorted distinct times at which some pulse starts or ends, including 0 and the end.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut t = vec![0.0, self.total_time];
        for p in &self.pulses {
            t.push(p.t_start);
            t.push(p.t_end());
        }
        t.sort_by(f64::total_cmp);
        t.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * b.abs().max(1e-30));
        t
    }

    pub fn max_target(&self) -> Option<usize> {
        self.pulses.iter().flat_map(|p| p.target.indices()).max()
    }

    /// Concatenation; `other` is shifted to start at this schedule's end.
    pub fn then(&self, other: &PulseSchedule) -> Result<PulseSchedule> {
        let shift = self.total_time;
        let mut pulses = self.pulses.clone();
        pulses.extend(other.pulses.iter().cloned().map(|mut p| {
            p.t_start += shift;
            p
        }));
        PulseSchedule::new(pulses, Some(shift + other.total_time))
    }

    pub fn records(&self) -> Vec<PulseRecord> {
        self.pulses.iter().map(Pulse::to_record).collect()
    }
}

/// Resonant Rabi frequency Ω_x of the ac stress drive, rad/s. The Bloch vector turns at 2Ω_x.
pub fn rabi_frequency_x(amplitude: f64, omega10: f64, p: &MaterialParams) -> f64 {
    128.0 * amplitude * omega10 * p.s11 * (p.xi_u + p.xi_d) * p.kappa0() * p.a_par * p.a_par
        / (p.u_l * 6f64.sqrt())
        / HBAR
}

/// τ₁ = angle/(2Ω_x).
pub fn x_rotation_duration(angle: f64, amplitude: f64, omega10: f64, p: &MaterialParams) -> f64 {
    angle / (2.0 * rabi_frequency_x(amplitude, omega10, p))
}

/// Resonant ac pulse rotating the target by `angle` about the axis at azimuth `phase`.
pub fn x_rotation_pulse(
    angle: f64,
    amplitude: f64,
    level: &LevelStructure,
    target: usize,
    t_start: f64,
    phase: f64,
    p: &MaterialParams,
) -> Result<Pulse> {
    if !(angle > 0.0 && angle <= 4.0 * PI) {
        return Err(Error::Validation(format!("rotation angle {angle} outside (0, 4π]")));
    }
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(Error::Validation(format!("drive amplitude {amplitude} must be positive")));
    }
    let w = level.omega10;
    if w <= 0.0 {
        return Err(Error::Validity("no splitting to drive at ε = 0".into()));
    }
    let tau = x_rotation_duration(angle, amplitude, w, p);
    if tau < 2.0 * PI / w {
        return Err(Error::Validity(format!(
            "pulse of {:.3e} s is shorter than one carrier period {:.3e} s",
            tau,
            2.0 * PI / w
        )));
    }
    Ok(Pulse::ac_stress(Target::One(target), t_start, tau, amplitude, w, phase))
}

/// dc pulse producing exp(−iτΔω S_z) on the target in the frame of its baseline.
pub fn phase_gate_pulse(
    delta_omega: f64,
    tau_dc: f64,
    target: usize,
    t_start: f64,
    epsilon0: f64,
    p: &MaterialParams,
) -> Result<Pulse> {
    if !(tau_dc > 0.0 && tau_dc.is_finite()) {
        return Err(Error::Validation(format!("dc pulse duration {tau_dc} must be positive")));
    }
    let d_eps = epsilon_from_omega10(delta_omega, p);
    check_epsilon(epsilon0)?;
    check_epsilon(epsilon0 + d_eps)
        .map_err(|_| Error::Validity(format!("Δω = {delta_omega} rad/s drives ε₀ = {epsilon0} out of range")))?;
    Ok(Pulse::dc_stress(Target::One(target), t_start, tau_dc, stress_from_epsilon(d_eps, p)))
}

/// Δω₁₀ produced by a dc stress increment.
pub fn dc_frequency_shift(amplitude: f64, p: &MaterialParams) -> f64 {
    omega10(crate::levels::epsilon_from_stress(amplitude, p), p)
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// exp(−i·angle·(cos φ S_x + sin φ S_y)) in the (|0⟩, |1⟩) basis.
pub fn ideal_rotation(angle: f64, phase: f64) -> DMatrix<Complex64> {
    let (co, si) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    // S⁺ = |1⟩⟨0|, so cos φ S_x + sin φ S_y has ⟨1|·|0⟩ = e^{−iφ}/2.
    let e = Complex64::from_polar(1.0, phase);
    DMatrix::from_row_slice(2, 2, &[c(co, 0.0), -c(0.0, si) * e, -c(0.0, si) * e.conj(), c(co, 0.0)])
}

/// exp(−iφ S_z) with S_z|1⟩ = +½|1⟩.
pub fn ideal_phase_gate(phi: f64) -> DMatrix<Complex64> {
    DMatrix::from_row_slice(
        2,
        2,
        &[Complex64::from_polar(1.0, phi / 2.0), c(0.0, 0.0), c(0.0, 0.0), Complex64::from_polar(1.0, -phi / 2.0)],
    )
}

/// XY8 carrier phases.
pub const XY8_PHASES: [f64; 8] = [0.0, PI / 2.0, 0.0, PI / 2.0, PI / 2.0, 0.0, PI / 2.0, 0.0];

/// Default coupling range (in chain sites) that the refocusing pattern cancels.
pub const DEFAULT_TRUNCATION: usize = 2;

/// π-pulse count of pattern k.
pub fn pattern_pulse_count(k: usize) -> usize {
    8usize << k
}

fn check_pair(n: usize, pair: (usize, usize)) -> Result<()> {
    if n < 2 {
        return Err(Error::Validation("refocusing needs at least two qubits".into()));
    }
    if pair.1 != pair.0 + 1 || pair.1 >= n {
        return Err(Error::Unsupported(format!(
            "selected pair {pair:?} is not an adjacent pair of a {n}-site chain"
        )));
    }
    Ok(())
}

/// Pattern index per site (None for the selected pair). Sites closer than
/// `truncation` get distinct patterns, so their toggling functions are orthogonal.
pub fn refocusing_patterns(n: usize, pair: (usize, usize), truncation: usize) -> Result<Vec<Option<usize>>> {
    check_pair(n, pair)?;
    let mut out: Vec<Option<usize>> = vec![None; n];
    for j in 0..n {
        if j == pair.0 || j == pair.1 {
            continue;
        }
        let used: Vec<usize> = (0..j).filter(|&i| j - i <= truncation).filter_map(|i| out[i]).collect();
        out[j] = (0..).find(|k| !used.contains(k));
    }
    Ok(out)
}

/// Pulse centres (2i+1)T/(2m) of pattern k within a window T.
pub fn pattern_centers(k: usize, tau2: f64) -> Vec<f64> {
    let m = pattern_pulse_count(k);
    (0..m).map(|i| (2 * i + 1) as f64 * tau2 / (2 * m) as f64).collect()
}

/// π-pulse schedule over a window τ₂ that leaves only the selected pair's Ising phase.
/// `epsilons` are the baseline ε of each site; each pulse lasts τ₁.
pub fn refocusing_sequence(
    n: usize,
    pair: (usize, usize),
    tau2: f64,
    tau1: f64,
    epsilons: &[f64],
    p: &MaterialParams,
    truncation: usize,
) -> Result<PulseSchedule> {
    let patterns = refocusing_patterns(n, pair, truncation)?;
    if epsilons.len() != n {
        return Err(Error::Dimension { expected: n, got: epsilons.len() });
    }
    if !(tau2 > 0.0 && tau1 > 0.0) {
        return Err(Error::Validation("τ₁ and τ₂ must be positive".into()));
    }
    let mut pulses = Vec::new();
    for (j, pat) in patterns.iter().enumerate() {
        let Some(k) = *pat else { continue };
        let m = pattern_pulse_count(k);
        if tau1 * m as f64 > tau2 {
            return Err(Error::Validity(format!(
                "{m} pulses of {tau1:.3e} s do not fit in τ₂ = {tau2:.3e} s"
            )));
        }
        let level = crate::levels::manifold(epsilons[j], p)?;
        let amplitude = PI / (2.0 * tau1 * rabi_frequency_x(1.0, level.omega10, p));
        for (i, t) in pattern_centers(k, tau2).into_iter().enumerate() {
            pulses.push(x_rotation_pulse(PI, amplitude, &level, j, t - tau1 / 2.0, XY8_PHASES[i % 8], p)?);
        }
    }
    PulseSchedule::new(pulses, Some(tau2))
}

/// Minimum ramp_time·ω₂₁(ε₂).
pub const ADIABATIC_MIN: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetGateSpec {
    pub pair: (usize, usize),
    /// cm.
    pub distance: f64,
    /// Population transfer is sin²(angle/2); π swaps one excitation.
    pub angle: f64,
    pub epsilon0: [f64; 2],
    pub epsilon2: f64,
    pub ramp_time: f64,
    pub t_start: f64,
    pub profile: RampProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetGate {
    pub schedule: PulseSchedule,
    /// s.
    pub dwell: f64,
    /// rad/s.
    pub g21: f64,
}

/// Ramp both donors to ε₂, dwell for angle/|g²¹|, ramp back to their baselines.
pub fn ret_gate_schedule(spec: &RetGateSpec, w21: f64, p: &MaterialParams) -> Result<RetGate> {
    let (i, j) = spec.pair;
    if i == j {
        return Err(Error::Validation("RET pair must name two donors".into()));
    }
    check_epsilon(spec.epsilon2)?;
    for e in spec.epsilon0 {
        check_epsilon(e)?;
        if spec.epsilon2 >= e {
            return Err(Error::Validation(format!("ε₂ = {} must lie below the baseline {e}", spec.epsilon2)));
        }
    }
    if !(spec.angle >= 0.0 && spec.angle.is_finite()) {
        return Err(Error::Validation(format!("RET angle {} must be non-negative", spec.angle)));
    }
    let w21_eps2 = 2.0 * omega10(spec.epsilon2, p);
    if spec.ramp_time * w21_eps2 < ADIABATIC_MIN {
        return Err(Error::Validity(format!(
            "ramp of {:.3e} s is not adiabatic: ramp·ω₂₁ = {:.2} < {ADIABATIC_MIN}",
            spec.ramp_time,
            spec.ramp_time * w21_eps2
        )));
    }
    let geom = DonorPairGeometry::in_plane(spec.distance, 0.0)?;
    let g21 = ret_coupling_21(&geom, spec.epsilon2, p, w21)?;
    let dwell = spec.angle / g21.abs();
    let (t0, r) = (spec.t_start, spec.ramp_time);
    let up = t0 + r + dwell;
    let pulses = vec![
        Pulse::ramp(Target::Many(vec![i, j]), t0, r, spec.epsilon2, spec.profile),
        Pulse::ramp(Target::One(i), up, r, spec.epsilon0[0], spec.profile),
        Pulse::ramp(Target::One(j), up, r, spec.epsilon0[1], spec.profile),
    ];
    Ok(RetGate { schedule: PulseSchedule::new(pulses, Some(up + r))?, dwell, g21 })
}
