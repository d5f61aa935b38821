//! Schedule documents: a register description plus pulses, in file units.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{DriveFrame, EvolutionResult, FidelityEntry, Mode, Register, RegisterSpec};
use crate::error::{Error, Result};
use crate::levels::manifold;
use crate::materials::MaterialParams;
use crate::pulses::{ret_gate_schedule, x_rotation_pulse, PulseRecord, PulseSchedule, RampProfile, RetGateSpec};
use crate::units::{nm_to_cm, ns_to_s, s_to_ns};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSpec {
    Uniform(f64),
    PerSite(Vec<f64>),
}

impl EpsilonSpec {
    pub fn expand(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            EpsilonSpec::Uniform(e) => Ok(vec![*e; n]),
            EpsilonSpec::PerSite(v) if v.len() == n => Ok(v.clone()),
            EpsilonSpec::PerSite(v) => Err(Error::Schedule(format!(
                "register.epsilon0 lists {} values for {n} donors",
                v.len()
            ))),
        }
    }
}

/// Donors on a line along [100].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterBlock {
    pub n: usize,
    pub spacing_nm: f64,
    pub epsilon0: EpsilonSpec,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub temperature_mk: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonance_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<usize>>,
    #[serde(default = "yes")]
    pub dissipation: bool,
    #[serde(default)]
    pub frame: DriveFrame,
}

fn yes() -> bool {
    true
}

/// Named product state whose overlap with the final state is reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetState {
    pub name: String,
    pub levels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    pub register: RegisterBlock,
    #[serde(default)]
    pub pulses: Vec<PulseRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_time_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_interval_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<TargetState>,
}

impl ScheduleFile {
    pub fn register_spec(&self) -> Result<RegisterSpec> {
        let r = &self.register;
        if r.n == 0 {
            return Err(Error::Schedule("register.n must be at least 1".into()));
        }
        if !(r.spacing_nm > 0.0 && r.spacing_nm.is_finite()) {
            return Err(Error::Schedule(format!("register.spacing_nm = {} must be positive", r.spacing_nm)));
        }
        let mut spec = RegisterSpec::chain(r.n, r.spacing_nm, 0.0, r.mode, r.temperature_mk);
        spec.baseline_epsilon = r.epsilon0.expand(r.n)?;
        spec.resonance_epsilon = r.resonance_epsilon;
        spec.initial = r.initial.clone();
        spec.dissipation = r.dissipation;
        spec.frame = r.frame;
        Ok(spec)
    }

    pub fn schedule(&self) -> Result<PulseSchedule> {
        let pulses = self.pulses.iter().map(PulseRecord::to_pulse).collect();
        let sched = PulseSchedule::new(pulses, self.total_time_ns.map(ns_to_s))?;
        if let Some(m) = sched.max_target() {
            if m >= self.register.n {
                return Err(Error::Schedule(format!(
                    "pulse targets donor {m} but the register has {} donors",
                    self.register.n
                )));
            }
        }
        for t in &self.targets {
            if t.levels.len() != self.register.n {
                return Err(Error::Schedule(format!(
                    "target state '{}' lists {} levels for {} donors",
                    t.name,
                    t.levels.len(),
                    self.register.n
                )));
            }
        }
        Ok(sched)
    }

    pub fn dt(&self) -> Option<f64> {
        self.dt_ns.map(ns_to_s)
    }

    /// Sorted pulses, expanded ε and an explicit total time.
    pub fn normalized(&self) -> Result<ScheduleFile> {
        self.schedule()?;
        let mut out = self.clone();
        out.register.epsilon0 = EpsilonSpec::PerSite(self.register.epsilon0.expand(self.register.n)?);
        // Kept in file units so that normalizing twice changes nothing.
        out.pulses.sort_by(|a, b| a.t_start_ns.total_cmp(&b.t_start_ns));
        let end = out.pulses.iter().map(|r| r.t_start_ns + r.duration_ns).fold(0.0, f64::max);
        out.total_time_ns = Some(self.total_time_ns.unwrap_or(end));
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Appends the population of each named product state to the fidelity report.
pub fn report_targets(reg: &Register, targets: &[TargetState], result: &mut EvolutionResult) -> Result<()> {
    let l = reg.mode.levels();
    for t in targets {
        if t.levels.len() != reg.n || t.levels.iter().any(|&s| s >= l) {
            return Err(Error::Schedule(format!("target state '{}' does not fit the register", t.name)));
        }
        let k = reg.index_of(&t.levels);
        result.fidelity_report.push(FidelityEntry { gate: t.name.clone(), fidelity: result.rho[(k, k)].re });
    }
    Ok(())
}

/// Parses a schedule document; syntax and schema errors carry line and column.
pub fn parse_schedule_str(text: &str) -> Result<ScheduleFile> {
    let file: ScheduleFile = serde_json::from_str(text)
        .map_err(|e| Error::Schedule(format!("line {}, column {}: {e}", e.line(), e.column())))?;
    file.register_spec()?;
    file.schedule()?;
    Ok(file)
}

pub fn parse_schedule(path: &Path) -> Result<ScheduleFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Schedule(format!("cannot read {}: {e}", path.display())))?;
    parse_schedule_str(&text)
}

/// Two donors at 50 nm: a π pulse lifts donor 1 from |0⟩ to |1⟩ while donor 0 sits in |2⟩,
/// then an RET gate at ε₂ swaps the excitation so that donor 0 ends in |1⟩ and donor 1 in |2⟩.
/// Both baselines stay at small ε, where |2⟩ lives for milliseconds.
pub fn example_pi_then_ret(p: &MaterialParams, w21: f64) -> Result<ScheduleFile> {
    let (eps0, eps2) = ([0.003, 0.004], 0.002);
    let spacing = 50.0;
    let amplitude = 1.0e5;
    let level = manifold(eps0[1], p)?;
    let pi = x_rotation_pulse(PI, amplitude, &level, 1, 0.0, 0.0, p)?;
    let gap = ns_to_s(1.0);
    let gate = ret_gate_schedule(
        &RetGateSpec {
            pair: (0, 1),
            distance: nm_to_cm(spacing),
            angle: PI,
            epsilon0: eps0,
            epsilon2: eps2,
            ramp_time: ns_to_s(6.0),
            t_start: pi.t_end() + gap,
            profile: RampProfile::Cosine,
        },
        w21,
        p,
    )?;
    let mut pulses = vec![pi.to_record()];
    pulses.extend(gate.schedule.records());
    Ok(ScheduleFile {
        register: RegisterBlock {
            n: 2,
            spacing_nm: spacing,
            epsilon0: EpsilonSpec::PerSite(eps0.to_vec()),
            mode: Mode::ThreeLevel,
            temperature_mk: 100.0,
            resonance_epsilon: Some(eps2),
            initial: Some(vec![2, 0]),
            dissipation: true,
            frame: DriveFrame::Rwa,
        },
        pulses,
        total_time_ns: Some(s_to_ns(gate.schedule.total_time + gap)),
        dt_ns: None,
        sample_interval_ns: None,
        targets: vec![TargetState { name: "swapped".into(), levels: vec![1, 2] }],
    })
}
