//! Dense master-equation dynamics of a small donor register.
//!
//! States live in the frame rotating at each donor's baseline level energies.
//! Diagonal terms (level shifts from stress changes and the Ising coupling) are
//! integrated exactly as phases; the remaining generator is stepped with RK4.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{ising_coupling, ret_coupling_10, ret_coupling_21, CouplingSet, DonorPairGeometry};
use crate::envelope::norm;
use crate::error::{Error, Result};
use crate::levels::{check_epsilon, epsilon_from_stress, omega10};
use crate::materials::MaterialParams;
use crate::pulses::{rabi_frequency_x, PulseKind, PulseSchedule, RampProfile};
use crate::rates::{dephasing_rate, planck_occupation, RateProvider};
use crate::units::{k_to_mk, mk_to_k, nm_to_cm, s_to_ns, HBAR};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    TwoLevel,
    ThreeLevel,
}

impl Mode {
    pub fn levels(self) -> usize {
        match self {
            Mode::TwoLevel => 2,
            Mode::ThreeLevel => 3,
        }
    }

    pub fn max_donors(self) -> usize {
        match self {
            Mode::TwoLevel => 8,
            Mode::ThreeLevel => 5,
        }
    }
}

/// How ac stress enters: rotating-wave terms only, or with the counter-rotating terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveFrame {
    #[default]
    Rwa,
    Lab,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterSpec {
    pub positions_nm: Vec<[f64; 3]>,
    #[serde(default)]
    pub mode: Mode,
    pub baseline_epsilon: Vec<f64>,
    #[serde(default)]
    pub temperature_mk: f64,
    /// ε at which pair couplings are evaluated; defaults to the pair's mean baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonance_epsilon: Option<f64>,
    /// Initial level of each donor; all |0⟩ when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<usize>>,
    #[serde(default = "yes")]
    pub dissipation: bool,
    #[serde(default)]
    pub frame: DriveFrame,
}

impl RegisterSpec {
    /// Donors on a line along [100].
    pub fn chain(n: usize, spacing_nm: f64, epsilon: f64, mode: Mode, temperature_mk: f64) -> RegisterSpec {
        RegisterSpec {
            positions_nm: (0..n).map(|i| [i as f64 * spacing_nm, 0.0, 0.0]).collect(),
            mode,
            baseline_epsilon: vec![epsilon; n],
            temperature_mk,
            resonance_epsilon: None,
            initial: None,
            dissipation: true,
            frame: DriveFrame::Rwa,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCoupling {
    pub i: usize,
    pub j: usize,
    /// cm.
    pub distance: f64,
    pub couplings: CouplingSet,
}

/// Minimum donor separation, cm.
pub const MIN_SEPARATION: f64 = 10.0e-7;

#[derive(Debug, Clone)]
pub struct Register {
    pub n: usize,
    /// cm.
    pub positions: Vec<[f64; 3]>,
    pub mode: Mode,
    pub baseline_epsilon: Vec<f64>,
    /// K.
    pub temperature: f64,
    pub couplings: Vec<PairCoupling>,
    pub initial: Vec<usize>,
    pub dissipation: bool,
    pub frame: DriveFrame,
    pub params: MaterialParams,
    pub rates: RateProvider,
}

pub fn build_register(spec: &RegisterSpec, params: &MaterialParams, rates: &RateProvider) -> Result<Register> {
    let n = spec.positions_nm.len();
    let mode = spec.mode;
    if n == 0 {
        return Err(Error::Validation("register needs at least one donor".into()));
    }
    if n > mode.max_donors() {
        return Err(Error::Validation(format!("{n} donors exceed the {mode:?} bound of {}", mode.max_donors())));
    }
    if spec.baseline_epsilon.len() != n {
        return Err(Error::Dimension { expected: n, got: spec.baseline_epsilon.len() });
    }
    for &e in &spec.baseline_epsilon {
        check_epsilon(e)?;
        if e <= 0.0 {
            return Err(Error::Validity("baseline ε must be positive so that the levels are split".into()));
        }
    }
    if !(spec.temperature_mk >= 0.0 && spec.temperature_mk.is_finite()) {
        return Err(Error::Validation(format!("temperature {} mK is invalid", spec.temperature_mk)));
    }
    let initial = spec.initial.clone().unwrap_or_else(|| vec![0; n]);
    if initial.len() != n {
        return Err(Error::Dimension { expected: n, got: initial.len() });
    }
    if let Some(l) = initial.iter().find(|&&l| l >= mode.levels()) {
        return Err(Error::Validation(format!("initial level {l} is outside the {mode:?} space")));
    }
    let positions: Vec<[f64; 3]> = spec.positions_nm.iter().map(|r| r.map(nm_to_cm)).collect();
    let mut couplings = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let r = [
                positions[j][0] - positions[i][0],
                positions[j][1] - positions[i][1],
                positions[j][2] - positions[i][2],
            ];
            let d = norm(&r);
            if d <= MIN_SEPARATION {
                return Err(Error::Geometry(format!("donors {i} and {j} are closer than 10 nm")));
            }
            if r[2] != 0.0 {
                return Err(Error::Geometry(format!("donors {i} and {j} are not in a common (001) plane")));
            }
            let geom = DonorPairGeometry::new(r)?;
            let eps = spec
                .resonance_epsilon
                .unwrap_or(0.5 * (spec.baseline_epsilon[i] + spec.baseline_epsilon[j]));
            check_epsilon(eps)?;
            let set = CouplingSet {
                g10: ret_coupling_10(&geom, eps, params)?,
                g21: match mode {
                    Mode::TwoLevel => 0.0,
                    Mode::ThreeLevel => ret_coupling_21(&geom, eps, params, rates.w21(eps))?,
                },
                j_ising: ising_coupling(&geom, params)?,
            };
            couplings.push(PairCoupling { i, j, distance: d, couplings: set });
        }
    }
    Ok(Register {
        n,
        positions,
        mode,
        baseline_epsilon: spec.baseline_epsilon.clone(),
        temperature: mk_to_k(spec.temperature_mk),
        couplings,
        initial,
        dissipation: spec.dissipation,
        frame: spec.frame,
        params: *params,
        rates: rates.clone(),
    })
}

impl Register {
    pub fn dim(&self) -> usize {
        self.mode.levels().pow(self.n as u32)
    }

    pub fn pair(&self, i: usize, j: usize) -> Option<&PairCoupling> {
        let (i, j) = (i.min(j), i.max(j));
        self.couplings.iter().find(|c| c.i == i && c.j == j)
    }

    pub fn pair_mut(&mut self, i: usize, j: usize) -> Option<&mut PairCoupling> {
        let (i, j) = (i.min(j), i.max(j));
        self.couplings.iter_mut().find(|c| c.i == i && c.j == j)
    }

    /// Full-space index of a product state.
    pub fn index_of(&self, levels: &[usize]) -> usize {
        let l = self.mode.levels();
        levels.iter().fold(0, |acc, &s| acc * l + s)
    }

    /// Full-space indices of the 2ⁿ qubit basis states, in binary order.
    pub fn qubit_indices(&self) -> Vec<usize> {
        (0..1usize << self.n)
            .map(|q| {
                let bits: Vec<usize> = (0..self.n).map(|j| (q >> (self.n - 1 - j)) & 1).collect();
                self.index_of(&bits)
            })
            .collect()
    }
}

/// Level energies in units of εΔ_c.
const LEVEL_COEF: [f64; 3] = [0.0, 1.0, 3.0];
/// Pseudo-spin S_z per level; the auxiliary level carries none.
const SZ: [f64; 3] = [-0.5, 0.5, 0.0];

/// ε(t) of one donor: persistent ramps plus transient dc increments.
#[derive(Debug, Clone)]
struct Track {
    base: f64,
    ramps: Vec<Ramp>,
    dcs: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone)]
struct Ramp {
    s: f64,
    e: f64,
    from: f64,
    to: f64,
    profile: RampProfile,
}

impl Track {
    fn eps(&self, t: f64) -> f64 {
        self.eps_at(t, t)
    }

    /// ε at t with dc pulses switched according to `t_on`, so that a step
    /// never straddles a pulse edge.
    fn eps_at(&self, t: f64, t_on: f64) -> f64 {
        let mut v = self.base;
        for r in &self.ramps {
            if t >= r.e {
                v = r.to;
            } else if t > r.s {
                v = r.from + (r.to - r.from) * r.profile.shape((t - r.s) / (r.e - r.s));
                break;
            } else {
                break;
            }
        }
        v + self.dcs.iter().filter(|d| d.0 <= t_on && t_on < d.1).map(|d| d.2).sum::<f64>()
    }

    /// ∫₀ᵗ (ε − ε_base).
    fn deviation_integral(&self, t: f64) -> f64 {
        let (mut acc, mut cur, mut tc) = (0.0, self.base, 0.0);
        let mut done = false;
        for r in &self.ramps {
            if t <= r.s {
                break;
            }
            acc += (cur - self.base) * (r.s - tc);
            let dur = r.e - r.s;
            let u = ((t - r.s) / dur).min(1.0);
            acc += (r.from - self.base) * dur * u + (r.to - r.from) * dur * r.profile.integral(u);
            if t < r.e {
                done = true;
                break;
            }
            cur = r.to;
            tc = r.e;
        }
        if !done {
            acc += (cur - self.base) * (t - tc).max(0.0);
        }
        acc + self.dcs.iter().map(|d| d.2 * (t.min(d.1) - d.0).max(0.0)).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
struct Drive {
    donor: usize,
    s: f64,
    e: f64,
    amplitude: f64,
    carrier: f64,
    phase: f64,
}

#[derive(Debug, Clone, Copy)]
struct FlipFlop {
    a: usize,
    b: usize,
    /// Half the coupling, rad/s.
    half_g: f64,
    /// Baseline Bohr-frequency mismatch, rad/s.
    detuning: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct DonorRates {
    down10: f64,
    up10: f64,
    down21: f64,
    up21: f64,
    dephase: f64,
}

impl DonorRates {
    fn max(&self) -> f64 {
        [self.down10, self.up10, self.down21, self.up21, self.dephase].into_iter().fold(0.0, f64::max)
    }
}

struct Engine<'r> {
    reg: &'r Register,
    d: usize,
    levels: usize,
    strides: Vec<usize>,
    digits: Vec<Vec<u8>>,
    tracks: Vec<Track>,
    drives: Vec<Drive>,
    flipflops: Vec<FlipFlop>,
    /// Ising phase rate of each basis state, rad/s.
    zz: Vec<f64>,
    base_w10: Vec<f64>,
    /// Δ_c/ħ.
    dc_rate: f64,
}

impl<'r> Engine<'r> {
    fn new(reg: &'r Register, sched: &PulseSchedule) -> Result<Engine<'r>> {
        let n = reg.n;
        let l = reg.mode.levels();
        let d = reg.dim();
        let p = &reg.params;
        let strides: Vec<usize> = (0..n).map(|j| l.pow((n - 1 - j) as u32)).collect();
        let digits: Vec<Vec<u8>> = (0..d).map(|a| (0..n).map(|j| ((a / strides[j]) % l) as u8).collect()).collect();
        let mut tracks: Vec<Track> =
            reg.baseline_epsilon.iter().map(|&b| Track { base: b, ramps: Vec::new(), dcs: Vec::new() }).collect();
        let mut drives = Vec::new();
        for (k, pulse) in sched.pulses.iter().enumerate() {
            for j in pulse.target.indices() {
                if j >= n {
                    return Err(Error::Validation(format!("pulse #{k} targets donor {j} of a {n}-donor register")));
                }
                match pulse.kind {
                    PulseKind::StarkField => {
                        return Err(Error::Unsupported("electric-field (Stark) drive is not simulated".into()))
                    }
                    PulseKind::DcStress => tracks[j].dcs.push((
                        pulse.t_start,
                        pulse.t_end(),
                        epsilon_from_stress(pulse.amplitude.unwrap_or(0.0), p),
                    )),
                    PulseKind::RampEpsilon => {
                        let from = tracks[j].ramps.last().map_or(tracks[j].base, |r| r.to);
                        tracks[j].ramps.push(Ramp {
                            s: pulse.t_start,
                            e: pulse.t_end(),
                            from,
                            to: pulse.ramp_to.unwrap_or(from),
                            profile: pulse.profile,
                        });
                    }
                    PulseKind::AcStress => drives.push(Drive {
                        donor: j,
                        s: pulse.t_start,
                        e: pulse.t_end(),
                        amplitude: pulse.amplitude.unwrap_or(0.0),
                        carrier: pulse.carrier.unwrap_or(0.0),
                        phase: pulse.phase,
                    }),
                }
            }
        }
        let base_w10: Vec<f64> = reg.baseline_epsilon.iter().map(|&e| omega10(e, p)).collect();
        let mut zz = vec![0.0; d];
        let mut flipflops = Vec::new();
        for pc in &reg.couplings {
            let (i, j) = (pc.i, pc.j);
            for (a, dg) in digits.iter().enumerate() {
                zz[a] += 0.5 * pc.couplings.j_ising * SZ[dg[i] as usize] * SZ[dg[j] as usize];
            }
            // (ħ/2)g(S_i⁺S_j⁻ + h.c.) on the 1–0 and, in three-level mode, 2–1 transitions.
            let mut channels = vec![(0u8, 1u8, pc.couplings.g10, base_w10[i] - base_w10[j])];
            if reg.mode == Mode::ThreeLevel {
                channels.push((1, 2, pc.couplings.g21, 2.0 * (base_w10[i] - base_w10[j])));
            }
            for (lo, hi, g, det) in channels {
                if g == 0.0 {
                    continue;
                }
                for (a, dg) in digits.iter().enumerate() {
                    if dg[i] == hi && dg[j] == lo {
                        let b = a - strides[i] + strides[j];
                        flipflops.push(FlipFlop { a, b, half_g: 0.5 * g, detuning: det });
                    }
                }
            }
        }
        Ok(Engine {
            reg,
            d,
            levels: l,
            strides,
            digits,
            tracks,
            drives,
            flipflops,
            zz,
            base_w10,
            dc_rate: p.delta_c / HBAR,
        })
    }

    /// e^{−iθ_a(t)} for every basis state.
    fn frame_phases(&self, t: f64, out: &mut [C]) {
        let dev: Vec<f64> = self.tracks.iter().map(|tr| self.dc_rate * tr.deviation_integral(t)).collect();
        for (a, dg) in self.digits.iter().enumerate() {
            let mut th = self.zz[a] * t;
            for (j, &s) in dg.iter().enumerate() {
                th += LEVEL_COEF[s as usize] * dev[j];
            }
            out[a] = C::from_polar(1.0, -th);
        }
    }

    /// Off-diagonal Hamiltonian entries (H/ħ) in the baseline frame at time t;
    /// pulses count as on when they cover `t_on`.
    fn hamiltonian(&self, t: f64, t_on: f64, out: &mut Vec<(usize, usize, C)>) {
        out.clear();
        let p = &self.reg.params;
        for dr in self.drives.iter().filter(|dr| dr.s <= t_on && t_on < dr.e) {
            let j = dr.donor;
            let wb = self.base_w10[j];
            let om = rabi_frequency_x(dr.amplitude, omega10(self.tracks[j].eps_at(t, t_on), p), p);
            let mut f = C::from_polar(om, -((dr.carrier - wb) * t + dr.phase));
            if self.reg.frame == DriveFrame::Lab {
                f += C::from_polar(om, (dr.carrier + wb) * t + dr.phase);
            }
            let st = self.strides[j];
            for (a, dg) in self.digits.iter().enumerate() {
                if dg[j] == 1 {
                    out.push((a, a - st, f));
                    out.push((a - st, a, f.conj()));
                }
            }
        }
        for ff in &self.flipflops {
            let f = C::from_polar(ff.half_g, ff.detuning * t);
            out.push((ff.a, ff.b, f));
            out.push((ff.b, ff.a, f.conj()));
        }
    }

    fn donor_rates(&self, t: f64) -> Vec<DonorRates> {
        let reg = self.reg;
        if !reg.dissipation {
            return vec![DonorRates::default(); reg.n];
        }
        let p = &reg.params;
        let deph = dephasing_rate(reg.temperature, p);
        self.tracks
            .iter()
            .map(|tr| {
                let e = tr.eps(t).max(0.0);
                let w = omega10(e, p);
                let w10 = reg.rates.w10(e).unwrap_or(0.0);
                let n10 = planck_occupation(w, reg.temperature);
                let mut r = DonorRates { down10: (n10 + 1.0) * w10, up10: n10 * w10, dephase: deph, ..Default::default() };
                if reg.mode == Mode::ThreeLevel {
                    let w21 = reg.rates.w21(e);
                    let n21 = planck_occupation(2.0 * w, reg.temperature);
                    r.down21 = (n21 + 1.0) * w21;
                    r.up21 = n21 * w21;
                }
                r
            })
            .collect()
    }

    /// Largest angular frequency the stepper has to resolve, sampled over each segment.
    fn fastest_frequency(&self, sched: &PulseSchedule) -> f64 {
        let p = &self.reg.params;
        let bp = sched.breakpoints();
        let mut times = Vec::new();
        for w in bp.windows(2) {
            for f in [1e-9, 0.25, 0.5, 0.75, 1.0 - 1e-9] {
                times.push(w[0] + f * (w[1] - w[0]));
            }
        }
        if times.is_empty() {
            times.push(0.0);
        }
        let zz_span = self.zz.iter().fold(0.0f64, |m, z| m.max(z.abs())) * 2.0;
        let mut fmax: f64 = 0.0;
        for &t in &times {
            let eps: Vec<f64> = self.tracks.iter().map(|tr| tr.eps(t)).collect();
            for dr in self.drives.iter().filter(|dr| dr.s <= t && t < dr.e) {
                let j = dr.donor;
                let om = rabi_frequency_x(dr.amplitude, omega10(eps[j], p), p);
                let det = match self.reg.frame {
                    DriveFrame::Rwa => (dr.carrier - omega10(eps[j], p)).abs(),
                    DriveFrame::Lab => dr.carrier + omega10(eps[j], p),
                };
                fmax = fmax.max(det + 2.0 * om + zz_span);
            }
            for pc in &self.reg.couplings {
                let c = &pc.couplings;
                let det = (omega10(eps[pc.i], p) - omega10(eps[pc.j], p)).abs();
                if c.g10 != 0.0 {
                    fmax = fmax.max(det + c.g10.abs() + zz_span);
                }
                if c.g21 != 0.0 && self.reg.mode == Mode::ThreeLevel {
                    fmax = fmax.max(2.0 * det + c.g21.abs() + zz_span);
                }
            }
        }
        fmax
    }

    fn max_rate(&self, sched: &PulseSchedule) -> f64 {
        let mut times = sched.breakpoints();
        let mids: Vec<f64> = times.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        times.extend(mids);
        times
            .iter()
            .flat_map(|&t| self.donor_rates(t))
            .map(|r| r.max() * 2.0)
            .fold(0.0, f64::max)
    }

    /// dρ_I/dt for a d×d row-major operator in the interaction frame.
    fn rhs_density(&self, t: f64, t_on: f64, rates: &[DonorRates], rho: &[C], out: &mut [C], ws: &mut Workspace) {
        let d = self.d;
        self.frame_phases(t, &mut ws.phase);
        for a in 0..d {
            for b in 0..d {
                ws.rs[a * d + b] = ws.phase[a] * rho[a * d + b] * ws.phase[b].conj();
            }
        }
        ws.acc.iter_mut().for_each(|z| *z = ZERO);
        self.hamiltonian(t, t_on, &mut ws.h);
        let mi = C::new(0.0, -1.0);
        for &(a, b, h) in &ws.h {
            let hm = mi * h;
            for c in 0..d {
                ws.acc[a * d + c] += hm * ws.rs[b * d + c];
                ws.acc[c * d + b] -= hm * ws.rs[c * d + a];
            }
        }
        for (j, r) in rates.iter().enumerate() {
            self.dissipate(j, 1, 0, r.down10, &ws.rs, &mut ws.acc);
            self.dissipate(j, 0, 1, r.up10, &ws.rs, &mut ws.acc);
            if self.levels == 3 {
                self.dissipate(j, 2, 1, r.down21, &ws.rs, &mut ws.acc);
                self.dissipate(j, 1, 2, r.up21, &ws.rs, &mut ws.acc);
            }
            if r.dephase > 0.0 {
                // Lindblad operator √(2W̃) S_z.
                for a in 0..d {
                    let sa = SZ[self.digits[a][j] as usize];
                    for b in 0..d {
                        let ds = sa - SZ[self.digits[b][j] as usize];
                        if ds != 0.0 {
                            ws.acc[a * d + b] -= r.dephase * ds * ds * ws.rs[a * d + b];
                        }
                    }
                }
            }
        }
        for a in 0..d {
            for b in 0..d {
                out[a * d + b] = ws.phase[a].conj() * ws.acc[a * d + b] * ws.phase[b];
            }
        }
    }

    /// D[√γ |to⟩⟨from|_j] applied to ρ, accumulated into `acc`.
    fn dissipate(&self, j: usize, from: u8, to: u8, gamma: f64, rho: &[C], acc: &mut [C]) {
        if gamma <= 0.0 {
            return;
        }
        let d = self.d;
        let shift = (from as isize - to as isize) * self.strides[j] as isize;
        for a in 0..d {
            let ma = self.digits[a][j] == from;
            for b in 0..d {
                let mb = self.digits[b][j] == from;
                if !(ma || mb) {
                    continue;
                }
                let v = rho[a * d + b];
                if ma && mb {
                    let (a2, b2) = ((a as isize - shift) as usize, (b as isize - shift) as usize);
                    acc[a2 * d + b2] += gamma * v;
                    acc[a * d + b] -= gamma * v;
                } else {
                    acc[a * d + b] -= 0.5 * gamma * v;
                }
            }
        }
    }

    /// dψ_I/dt for a state vector.
    fn rhs_vector(&self, t: f64, t_on: f64, psi: &[C], out: &mut [C], ws: &mut Workspace) {
        self.frame_phases(t, &mut ws.phase);
        self.hamiltonian(t, t_on, &mut ws.h);
        out.iter_mut().for_each(|z| *z = ZERO);
        let mi = C::new(0.0, -1.0);
        for &(a, b, h) in &ws.h {
            out[a] += mi * h * ws.phase[b] * psi[b];
        }
        for (a, z) in out.iter_mut().enumerate() {
            *z *= ws.phase[a].conj();
        }
    }
}

struct Workspace {
    phase: Vec<C>,
    rs: Vec<C>,
    acc: Vec<C>,
    h: Vec<(usize, usize, C)>,
}

impl Workspace {
    fn new(d: usize) -> Workspace {
        Workspace { phase: vec![ZERO; d], rs: vec![ZERO; d * d], acc: vec![ZERO; d * d], h: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    /// Maximum step, s.
    pub dt: f64,
    /// Trajectory sampling interval, s.
    pub sample_interval: Option<f64>,
    /// Enforce the step-size preconditions.
    pub check_step: bool,
}

impl EvolveOptions {
    pub fn new(dt: f64) -> EvolveOptions {
        EvolveOptions { dt, sample_interval: None, check_step: true }
    }
}

/// Minimum steps per period of the fastest frequency.
pub const STEPS_PER_PERIOD: f64 = 20.0;
/// Upper bound on dt times the largest Lindblad rate.
pub const MAX_RATE_STEP: f64 = 0.1;
pub const TRACE_TOL: f64 = 1e-9;
pub const HERMITICITY_TOL: f64 = 1e-12;
pub const POSITIVITY_TOL: f64 = 1e-9;

/// Step grid aligned with every pulse edge: (t0, h, steps) per segment.
fn step_grid(sched: &PulseSchedule, dt: f64) -> StepGrid {
    sched
        .breakpoints()
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let len = w[1] - w[0];
            let k = (len / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            (w[0], len / k as f64, k)
        })
        .collect()
}

fn check_options(engine: &Engine, sched: &PulseSchedule, opts: &EvolveOptions) -> Result<()> {
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(Error::Validation(format!("time step {} must be positive", opts.dt)));
    }
    if !opts.check_step {
        return Ok(());
    }
    let f = engine.fastest_frequency(sched);
    if f > 0.0 && opts.dt > 2.0 * PI / f / STEPS_PER_PERIOD {
        return Err(Error::Validity(format!(
            "dt = {:.3e} s under-resolves the fastest frequency {:.3e} rad/s (need dt ≤ {:.3e} s)",
            opts.dt,
            f,
            2.0 * PI / f / STEPS_PER_PERIOD
        )));
    }
    let r = engine.max_rate(sched);
    if opts.dt * r >= MAX_RATE_STEP {
        return Err(Error::Validity(format!(
            "dt = {:.3e} s too long for relaxation rate {:.3e} 1/s",
            opts.dt, r
        )));
    }
    Ok(())
}


/// Accuracy margin of [`suggest_dt`] over the resolution floor.
pub const SUGGESTED_REFINEMENT: f64 = 4.0;

/// A step resolving the fastest frequency and rate with margin, and at most 1/100 of the span.
pub fn suggest_dt(reg: &Register, sched: &PulseSchedule) -> Result<f64> {
    let engine = Engine::new(reg, sched)?;
    let f = engine.fastest_frequency(sched);
    let r = engine.max_rate(sched);
    let mut dt = sched.total_time / 100.0;
    if f > 0.0 {
        dt = dt.min(2.0 * PI / f / (STEPS_PER_PERIOD * SUGGESTED_REFINEMENT));
    }
    if r > 0.0 {
        dt = dt.min(MAX_RATE_STEP / (r * SUGGESTED_REFINEMENT));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Validation("schedule has zero length".into()));
    }
    Ok(dt)
}

fn axpy(out: &mut [C], y: &[C], h: f64, k: &[C]) {
    for ((o, a), b) in out.iter_mut().zip(y).zip(k) {
        *o = a + b * h;
    }
}

/// Fourth-order step over the grid, sampling populations when `interval` elapses.
fn integrate(
    engine: &Engine,
    grid: &[(f64, f64, usize)],
    y: &mut [C],
    density: bool,
    hermitize: bool,
    interval: Option<f64>,
    samples: &mut Vec<TrajectoryPoint>,
) -> usize {
    let d = engine.d;
    let len = y.len();
    let mut ws = Workspace::new(if density { d } else { 1 });
    if !density {
        ws.phase = vec![ZERO; d];
    }
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) =
        (vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]);
    let populations = |y: &[C]| -> Vec<f64> {
        if density {
            (0..d).map(|a| y[a * d + a].re).collect()
        } else {
            y.iter().map(|z| z.norm_sqr()).collect()
        }
    };
    let mut next_sample = interval.map(|_| 0.0);
    let mut record = |t: f64, y: &[C], next: &mut Option<f64>| {
        if let (Some(ts), Some(iv)) = (next.as_mut(), interval) {
            if t >= *ts - 1e-12 * iv {
                samples.push(TrajectoryPoint { t_ns: s_to_ns(t), populations: populations(y) });
                while *ts <= t + 1e-12 * iv {
                    *ts += iv;
                }
            }
        }
    };
    record(0.0, y, &mut next_sample);
    let mut steps = 0;
    for &(t0, h, k) in grid {
        let t_on = t0 + 0.5 * h * k as f64;
        for s in 0..k {
            let t = t0 + s as f64 * h;
            let rates = if density { engine.donor_rates(t + 0.5 * h) } else { Vec::new() };
            let f = |t: f64, y: &[C], out: &mut [C], ws: &mut Workspace| {
                if density {
                    engine.rhs_density(t, t_on, &rates, y, out, ws)
                } else {
                    engine.rhs_vector(t, t_on, y, out, ws)
                }
            };
            f(t, y, &mut k1, &mut ws);
            axpy(&mut tmp, y, 0.5 * h, &k1);
            f(t + 0.5 * h, &tmp, &mut k2, &mut ws);
            axpy(&mut tmp, y, 0.5 * h, &k2);
            f(t + 0.5 * h, &tmp, &mut k3, &mut ws);
            axpy(&mut tmp, y, h, &k3);
            f(t + h, &tmp, &mut k4, &mut ws);
            for i in 0..len {
                y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
            }
            if hermitize {
                for a in 0..d {
                    for b in a..d {
                        let m = 0.5 * (y[a * d + b] + y[b * d + a].conj());
                        y[a * d + b] = m;
                        y[b * d + a] = m.conj();
                    }
                }
            }
            steps += 1;
            record(t + h, y, &mut next_sample);
        }
    }
    steps
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t_ns: f64,
    /// Diagonal of the state in the full basis.
    pub populations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityEntry {
    pub gate: String,
    pub fidelity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolutionResult {
    pub n: usize,
    pub mode: Mode,
    pub dim: usize,
    pub total_time_ns: f64,
    pub steps: usize,
    /// Density matrix in the baseline rotating frame, entries as [re, im].
    pub final_state: Vec<Vec<[f64; 2]>>,
    /// Level occupations of each donor.
    pub populations: Vec<Vec<f64>>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub fidelity_report: Vec<FidelityEntry>,
    /// Population outside the qubit subspace.
    pub leakage: f64,
    pub trace_deviation: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub rho: DMatrix<C>,
}

fn to_matrix(d: usize, y: &[C]) -> DMatrix<C> {
    DMatrix::from_row_slice(d, d, y)
}

fn frame_out(engine: &Engine, t: f64, y: &mut [C], density: bool) {
    let d = engine.d;
    let mut ph = vec![ZERO; d];
    engine.frame_phases(t, &mut ph);
    if density {
        for a in 0..d {
            for b in 0..d {
                y[a * d + b] = ph[a] * y[a * d + b] * ph[b].conj();
            }
        }
    } else {
        for a in 0..d {
            y[a] *= ph[a];
        }
    }
}

/// (segment start, step length, step count) per constant-step stretch.
type StepGrid = Vec<(f64, f64, usize)>;

fn prepare<'r>(reg: &'r Register, sched: &PulseSchedule, opts: &EvolveOptions) -> Result<(Engine<'r>, StepGrid)> {
    let engine = Engine::new(reg, sched)?;
    check_options(&engine, sched, opts)?;
    Ok((engine, step_grid(sched, opts.dt)))
}

/// Product state of the register's initial levels.
pub fn initial_state(reg: &Register) -> DMatrix<C> {
    let d = reg.dim();
    let k = reg.index_of(&reg.initial);
    let mut rho = DMatrix::from_element(d, d, ZERO);
    rho[(k, k)] = C::new(1.0, 0.0);
    rho
}

pub fn evolve(reg: &Register, sched: &PulseSchedule, opts: &EvolveOptions) -> Result<EvolutionResult> {
    evolve_from(reg, sched, &initial_state(reg), opts)
}

pub fn evolve_from(reg: &Register, sched: &PulseSchedule, rho0: &DMatrix<C>, opts: &EvolveOptions) -> Result<EvolutionResult> {
    let d = reg.dim();
    if rho0.nrows() != d || rho0.ncols() != d {
        return Err(Error::Dimension { expected: d, got: rho0.nrows() });
    }
    let (engine, grid) = prepare(reg, sched, opts)?;
    let mut y: Vec<C> = (0..d * d).map(|k| rho0[(k / d, k % d)]).collect();
    let mut trajectory = Vec::new();
    let steps = integrate(&engine, &grid, &mut y, true, true, opts.sample_interval, &mut trajectory);
    frame_out(&engine, sched.total_time, &mut y, true);
    let rho = to_matrix(d, &y);
    finish(reg, sched, rho, steps, trajectory)
}

fn finish(
    reg: &Register,
    sched: &PulseSchedule,
    rho: DMatrix<C>,
    steps: usize,
    trajectory: Vec<TrajectoryPoint>,
) -> Result<EvolutionResult> {
    let d = reg.dim();
    if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("state diverged".into()));
    }
    let trace_deviation = (rho.trace() - C::new(1.0, 0.0)).norm();
    let hermiticity_error = (&rho - rho.adjoint()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let min_eigenvalue = rho.clone().symmetric_eigenvalues().iter().fold(f64::INFINITY, |m, &e| m.min(e));
    if trace_deviation > TRACE_TOL {
        return Err(Error::Numerical(format!("trace drifted by {trace_deviation:.3e}")));
    }
    if hermiticity_error > HERMITICITY_TOL {
        return Err(Error::Numerical(format!("hermiticity error {hermiticity_error:.3e}")));
    }
    if min_eigenvalue < -POSITIVITY_TOL {
        return Err(Error::Numerical(format!("negative eigenvalue {min_eigenvalue:.3e}")));
    }
    let l = reg.mode.levels();
    let mut populations = vec![vec![0.0; l]; reg.n];
    let mut leakage = 0.0;
    for a in 0..d {
        let pa = rho[(a, a)].re;
        let mut rest = a;
        let mut outside = false;
        for j in (0..reg.n).rev() {
            let s = rest % l;
            rest /= l;
            populations[j][s] += pa;
            outside |= s >= 2;
        }
        if outside {
            leakage += pa;
        }
    }
    let mut warnings = Vec::new();
    for pc in &reg.couplings {
        let ratio = crate::coupling::STATIC_LIMIT_MAX;
        let wmax = reg.baseline_epsilon.iter().map(|&e| omega10(e, &reg.params)).fold(0.0, f64::max);
        if wmax * pc.distance / reg.params.u_t > ratio && pc.couplings.g10 != 0.0 {
            warnings.push(format!(
                "pair ({}, {}): ω|R|/u_t = {:.3} exceeds the static-limit bound {ratio}",
                pc.i,
                pc.j,
                wmax * pc.distance / reg.params.u_t
            ));
        }
    }
    Ok(EvolutionResult {
        n: reg.n,
        mode: reg.mode,
        dim: d,
        total_time_ns: s_to_ns(sched.total_time),
        steps,
        final_state: (0..d).map(|a| (0..d).map(|b| [rho[(a, b)].re, rho[(a, b)].im]).collect()).collect(),
        populations,
        trajectory,
        fidelity_report: Vec::new(),
        leakage,
        trace_deviation,
        hermiticity_error,
        min_eigenvalue,
        warnings,
        rho,
    })
}

/// Realised map on the qubit subspace, in the baseline frame.
#[derive(Debug, Clone)]
pub struct Channel {
    pub dim: usize,
    /// Full-space indices of the qubit basis.
    pub qubits: Vec<usize>,
    /// Closed evolution: column k is the image of qubit basis state k.
    pub unitary: Option<DMatrix<C>>,
    /// Open evolution: image of |i⟩⟨j| at position i·2ⁿ + j.
    pub outputs: Vec<DMatrix<C>>,
}

/// Evolves the qubit basis (state vectors without dissipation, operator basis with it).
pub fn evolve_channel(reg: &Register, sched: &PulseSchedule, opts: &EvolveOptions) -> Result<Channel> {
    let (engine, grid) = prepare(reg, sched, opts)?;
    let d = reg.dim();
    let qubits = reg.qubit_indices();
    let dq = qubits.len();
    let t_end = sched.total_time;
    if !reg.dissipation {
        let cols: Vec<Vec<C>> = qubits
            .par_iter()
            .map(|&k| {
                let mut y = vec![ZERO; d];
                y[k] = C::new(1.0, 0.0);
                integrate(&engine, &grid, &mut y, false, false, None, &mut Vec::new());
                frame_out(&engine, t_end, &mut y, false);
                y
            })
            .collect();
        let u = DMatrix::from_fn(d, dq, |a, k| cols[k][a]);
        return Ok(Channel { dim: d, qubits, unitary: Some(u), outputs: Vec::new() });
    }
    let pairs: Vec<(usize, usize)> = (0..dq).flat_map(|i| (0..dq).map(move |j| (i, j))).collect();
    let outputs: Vec<DMatrix<C>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mut y = vec![ZERO; d * d];
            y[qubits[i] * d + qubits[j]] = C::new(1.0, 0.0);
            integrate(&engine, &grid, &mut y, true, false, None, &mut Vec::new());
            frame_out(&engine, t_end, &mut y, true);
            to_matrix(d, &y)
        })
        .collect();
    Ok(Channel { dim: d, qubits, unitary: None, outputs })
}

/// Average gate fidelity of the realised channel against an ideal unitary on the qubit subspace.
pub fn gate_fidelity(ch: &Channel, ideal: &DMatrix<C>) -> Result<f64> {
    let dq = ch.qubits.len();
    if ideal.nrows() != dq || ideal.ncols() != dq {
        return Err(Error::Dimension { expected: dq, got: ideal.nrows() });
    }
    let fe = if let Some(u) = &ch.unitary {
        let v = DMatrix::from_fn(dq, dq, |a, k| u[(ch.qubits[a], k)]);
        (ideal.adjoint() * v).trace().norm_sqr() / (dq * dq) as f64
    } else {
        let mut s = ZERO;
        for i in 0..dq {
            for j in 0..dq {
                let e = &ch.outputs[i * dq + j];
                let eq = DMatrix::from_fn(dq, dq, |a, b| e[(ch.qubits[a], ch.qubits[b])]);
                s += (ideal.adjoint() * eq * ideal)[(i, j)];
            }
        }
        s.re / (dq * dq) as f64
    };
    Ok(((dq as f64 * fe + 1.0) / (dq as f64 + 1.0)).clamp(0.0, 1.0))
}

/// ⟨ψ|ρ|ψ⟩ over the full space.
pub fn state_fidelity(result: &EvolutionResult, psi: &[C]) -> Result<f64> {
    if psi.len() != result.dim {
        return Err(Error::Dimension { expected: result.dim, got: psi.len() });
    }
    let v = nalgebra::DVector::from_column_slice(psi);
    Ok((v.adjoint() * &result.rho * &v)[(0, 0)].re)
}

/// 2ⁿ-dimensional embedding of a single-qubit operator on site j.
pub fn embed(u: &DMatrix<C>, j: usize, n: usize) -> DMatrix<C> {
    let mut m = DMatrix::from_element(1, 1, C::new(1.0, 0.0));
    for k in 0..n {
        let f = if k == j { u.clone() } else { DMatrix::identity(2, 2) };
        m = m.kronecker(&f);
    }
    m
}

/// exp(−iτ(J/2)S_zS_z) on the listed pairs, qubit subspace.
pub fn ising_unitary(n: usize, pairs: &[(usize, usize, f64)], tau: f64) -> DMatrix<C> {
    let dq = 1usize << n;
    let mut u = DMatrix::from_element(dq, dq, ZERO);
    for q in 0..dq {
        let sz = |j: usize| if (q >> (n - 1 - j)) & 1 == 1 { 0.5 } else { -0.5 };
        let th: f64 = pairs.iter().map(|&(i, j, jj)| 0.5 * jj * sz(i) * sz(j)).sum::<f64>() * tau;
        u[(q, q)] = C::from_polar(1.0, -th);
    }
    u
}

/// Detailed-balance occupations of each donor with no drive.
pub fn steady_state_populations(reg: &Register) -> Result<Vec<Vec<f64>>> {
    let t = reg.temperature;
    reg.baseline_epsilon
        .iter()
        .map(|&e| {
            let w = omega10(e, &reg.params);
            let boltz = |w: f64| if t > 0.0 { (-HBAR * w / (crate::units::K_B * t)).exp() } else { 0.0 };
            let mut p = vec![1.0, boltz(w)];
            if reg.mode == Mode::ThreeLevel {
                p.push(p[1] * boltz(2.0 * w));
            }
            let z: f64 = p.iter().sum();
            Ok(p.into_iter().map(|x| x / z).collect())
        })
        .collect()
}

/// Temperature in mK, for reporting.
pub fn temperature_mk(reg: &Register) -> f64 {
    k_to_mk(reg.temperature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::{epsilon_from_omega10, manifold};
    use crate::pulses::{ideal_rotation, refocusing_sequence, x_rotation_pulse, Pulse, Target};
    use crate::rates::{RateModel, ShellQuadrature};
    use std::sync::OnceLock;

    fn provider() -> &'static RateProvider {
        static P: OnceLock<RateProvider> = OnceLock::new();
        P.get_or_init(|| RateProvider::new(&MaterialParams::default(), RateModel::ClosedForm, ShellQuadrature::default()).unwrap())
    }

    fn reg(spec: &RegisterSpec) -> Register {
        build_register(spec, &MaterialParams::default(), provider()).unwrap()
    }

    #[test]
    fn bounds_enforced() {
        let p = MaterialParams::default();
        assert!(build_register(&RegisterSpec::chain(9, 100.0, 0.2, Mode::TwoLevel, 0.0), &p, provider()).is_err());
        assert!(build_register(&RegisterSpec::chain(6, 100.0, 0.2, Mode::ThreeLevel, 0.0), &p, provider()).is_err());
        assert!(build_register(&RegisterSpec::chain(2, 5.0, 0.2, Mode::TwoLevel, 0.0), &p, provider()).is_err());
        assert!(build_register(&RegisterSpec::chain(1, 5.0, 0.2, Mode::TwoLevel, 0.0), &p, provider()).is_ok());
    }

    #[test]
    fn single_donor_has_no_couplings() {
        let r = reg(&RegisterSpec::chain(1, 100.0, 0.2, Mode::TwoLevel, 0.0));
        assert!(r.couplings.is_empty());
        assert_eq!(r.dim(), 2);
    }

    #[test]
    fn pair_couplings_populated() {
        let r = reg(&RegisterSpec::chain(2, 100.0, 0.2, Mode::TwoLevel, 0.0));
        let c = r.pair(0, 1).unwrap().couplings;
        assert!(c.g10 > 0.0 && c.j_ising < 0.0);
        let ratio = (c.g10 / c.j_ising).abs();
        assert!(ratio > 1e-8 && ratio < 1e-5, "{ratio}");
    }

    #[test]
    fn ret_block_is_half_g21() {
        let r = reg(&RegisterSpec::chain(2, 50.0, 0.002, Mode::ThreeLevel, 0.0));
        let e = Engine::new(&r, &PulseSchedule::empty(1e-9)).unwrap();
        let mut h = Vec::new();
        e.hamiltonian(0.0, 0.0, &mut h);
        let a = r.index_of(&[2, 1]);
        let b = r.index_of(&[1, 2]);
        let g21 = r.pair(0, 1).unwrap().couplings.g21;
        let entry = h.iter().find(|x| x.0 == a && x.1 == b).unwrap().2;
        assert!((entry - C::new(0.5 * g21, 0.0)).norm() < 1e-9 * g21.abs());
    }

    #[test]
    fn empty_schedule_ground_state_stationary() {
        let r = reg(&RegisterSpec::chain(2, 100.0, 0.2, Mode::TwoLevel, 0.0));
        let out = evolve(&r, &PulseSchedule::empty(1e-6), &EvolveOptions::new(1e-8)).unwrap();
        let rho0 = initial_state(&r);
        assert!((&out.rho - rho0).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn free_phase_matches_ising_unitary() {
        let mut spec = RegisterSpec::chain(2, 100.0, 0.2, Mode::TwoLevel, 0.0);
        spec.dissipation = false;
        let mut r = reg(&spec);
        r.pair_mut(0, 1).unwrap().couplings.g10 = 0.0;
        let tau = 1e-6;
        let ch = evolve_channel(&r, &PulseSchedule::empty(tau), &EvolveOptions::new(1e-8)).unwrap();
        let jj = r.pair(0, 1).unwrap().couplings.j_ising;
        let f = gate_fidelity(&ch, &ising_unitary(2, &[(0, 1, jj)], tau)).unwrap();
        assert!(1.0 - f < 1e-13, "{f}");
    }

    #[test]
    fn pi_pulse_inverts() {
        let p = MaterialParams::default();
        let r = reg(&RegisterSpec::chain(1, 100.0, 0.2, Mode::TwoLevel, 0.0));
        let level = manifold(0.2, &p).unwrap();
        let pulse = x_rotation_pulse(PI, 1e5, &level, 0, 0.0, 0.0, &p).unwrap();
        let s = PulseSchedule::new(vec![pulse.clone()], None).unwrap();
        let out = evolve(&r, &s, &EvolveOptions::new(pulse.duration / 400.0)).unwrap();
        assert!(out.populations[0][1] >= 0.999, "{:?}", out.populations);
        assert!(out.trace_deviation < 1e-9 && out.hermiticity_error < 1e-12);
    }

    #[test]
    fn pi_pulse_error_tiny() {
        let p = MaterialParams::default();
        let eps = epsilon_from_omega10(2.0 * PI * 10e9, &p);
        let mut spec = RegisterSpec::chain(1, 100.0, eps, Mode::TwoLevel, 0.0);
        let level = manifold(eps, &p).unwrap();
        let pulse = x_rotation_pulse(PI, 1e5, &level, 0, 0.0, 0.0, &p).unwrap();
        let s = PulseSchedule::new(vec![pulse.clone()], None).unwrap();
        let opts = EvolveOptions::new(pulse.duration / 400.0);
        let ideal = ideal_rotation(PI, 0.0);
        let open = gate_fidelity(&evolve_channel(&reg(&spec), &s, &opts).unwrap(), &ideal).unwrap();
        spec.dissipation = false;
        let closed = gate_fidelity(&evolve_channel(&reg(&spec), &s, &opts).unwrap(), &ideal).unwrap();
        assert!(1.0 - closed < 1e-12, "{closed}");
        assert!(1.0 - open < 1e-9, "{}", 1.0 - open);
    }

    #[test]
    fn detailed_balance_steady_state() {
        let mut spec = RegisterSpec::chain(1, 100.0, 0.2, Mode::TwoLevel, 1000.0);
        spec.baseline_epsilon = vec![0.5];
        let r = reg(&spec);
        let w = r.rates.w10(0.5).unwrap();
        let n = planck_occupation(omega10(0.5, &r.params), r.temperature);
        let total = (2.0 * n + 1.0) * w;
        let dt = 0.05 / total;
        let out = evolve(&r, &PulseSchedule::empty(40.0 / total), &EvolveOptions::new(dt)).unwrap();
        let ratio = out.populations[0][1] / out.populations[0][0];
        let expect = (-HBAR * omega10(0.5, &r.params) / (crate::units::K_B * r.temperature)).exp();
        assert!((ratio / expect - 1.0).abs() < 1e-6, "{ratio} {expect}");
        let ss = steady_state_populations(&r).unwrap();
        assert!((ss[0][1] - out.populations[0][1]).abs() < 1e-6);
    }

    #[test]
    fn boltzmann_third() {
        let mut spec = RegisterSpec::chain(1, 100.0, 0.2, Mode::TwoLevel, 0.0);
        let w = omega10(0.2, &MaterialParams::default());
        spec.temperature_mk = k_to_mk(HBAR * w / (crate::units::K_B * 2f64.ln()));
        let ss = steady_state_populations(&reg(&spec)).unwrap();
        assert!((ss[0][1] - 1.0 / 3.0).abs() < 1e-12);
        spec.temperature_mk = 0.0;
        assert_eq!(steady_state_populations(&reg(&spec)).unwrap()[0][0], 1.0);
    }

    #[test]
    fn dt_preconditions() {
        let p = MaterialParams::default();
        let r = reg(&RegisterSpec::chain(1, 100.0, 0.2, Mode::TwoLevel, 0.0));
        let level = manifold(0.2, &p).unwrap();
        let pulse = x_rotation_pulse(PI, 1e5, &level, 0, 0.0, 0.0, &p).unwrap();
        let s = PulseSchedule::new(vec![pulse.clone()], None).unwrap();
        assert!(matches!(evolve(&r, &s, &EvolveOptions::new(pulse.duration)), Err(Error::Validity(_))));
        let stark = Pulse { kind: PulseKind::StarkField, ..pulse };
        let s = PulseSchedule::new(vec![stark], None).unwrap();
        assert!(matches!(evolve(&r, &s, &EvolveOptions::new(1e-12)), Err(Error::Unsupported(_))));
    }

    #[test]
    fn halving_dt_converged() {
        let p = MaterialParams::default();
        let r = reg(&RegisterSpec::chain(2, 100.0, 0.2, Mode::TwoLevel, 100.0));
        let level = manifold(0.2, &p).unwrap();
        let a = x_rotation_pulse(PI / 2.0, 1e5, &level, 0, 0.0, 0.0, &p).unwrap();
        let b = x_rotation_pulse(PI, 1e5, &level, 1, a.duration, 0.3, &p).unwrap();
        let s = PulseSchedule::new(vec![a.clone(), b], Some(20e-9)).unwrap();
        let r1 = evolve(&r, &s, &EvolveOptions::new(a.duration / 200.0)).unwrap();
        let r2 = evolve(&r, &s, &EvolveOptions::new(a.duration / 400.0)).unwrap();
        let diff = (&r1.rho - &r2.rho).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn ret_swap_period() {
        let mut spec = RegisterSpec::chain(2, 50.0, 0.002, Mode::ThreeLevel, 0.0);
        spec.initial = Some(vec![2, 1]);
        let r = reg(&spec);
        let g = r.pair(0, 1).unwrap().couplings.g21.abs();
        let period = 2.0 * PI / g;
        let mut opts = EvolveOptions::new(period / 2000.0);
        opts.sample_interval = Some(period / 200.0);
        let out = evolve(&r, &PulseSchedule::empty(1.2 * period), &opts).unwrap();
        let b = r.index_of(&[1, 2]);
        let ts: Vec<f64> = out.trajectory.iter().map(|p| p.t_ns * 1e-9).collect();
        let pb: Vec<f64> = out.trajectory.iter().map(|p| p.populations[b]).collect();
        assert!(pb.iter().cloned().fold(0.0, f64::max) > 0.999);
        // Return time of the initial state, by a parabolic fit around the late minimum.
        let k = (100..pb.len() - 1).min_by(|&x, &y| pb[x].total_cmp(&pb[y])).unwrap();
        let (y0, y1, y2) = (pb[k - 1], pb[k], pb[k + 1]);
        let h = ts[k + 1] - ts[k];
        let tmin = ts[k] + 0.5 * h * (y0 - y2) / (y0 - 2.0 * y1 + y2);
        assert!((tmin / period - 1.0).abs() < 0.01, "{tmin} {period}");
    }

    #[test]
    fn off_resonant_ret_suppressed() {
        let mut spec = RegisterSpec::chain(2, 100.0, 0.2, Mode::TwoLevel, 0.0);
        spec.dissipation = false;
        spec.initial = Some(vec![1, 0]);
        let mut r = reg(&spec);
        let g = 1e7;
        let p = &r.params;
        let delta = 20.0 * g;
        r.baseline_epsilon = vec![0.2, 0.2 + epsilon_from_omega10(delta, p)];
        {
            let c = &mut r.pair_mut(0, 1).unwrap().couplings;
            c.g10 = g;
            c.j_ising = 0.0;
        }
        let mut opts = EvolveOptions::new(2.0 * PI / delta / 400.0);
        opts.sample_interval = Some(2.0 * PI / delta / 10.0);
        let out = evolve(&r, &PulseSchedule::empty(4.0 * PI / g), &opts).unwrap();
        let b = r.index_of(&[0, 1]);
        let pmax = out.trajectory.iter().map(|x| x.populations[b]).fold(0.0, f64::max);
        assert!(pmax <= (g / delta).powi(2) * 1.05, "{pmax}");
    }

    #[test]
    fn refocusing_keeps_only_selected_pair() {
        let p = MaterialParams::default();
        let mut spec = RegisterSpec::chain(3, 100.0, 0.2, Mode::TwoLevel, 0.0);
        spec.dissipation = false;
        let mut r = reg(&spec);
        for c in r.couplings.iter_mut() {
            c.couplings.g10 = 0.0;
        }
        let jj = r.pair(0, 1).unwrap().couplings.j_ising;
        let tau2 = PI / jj.abs();
        let tau1 = tau2 / 200.0;
        let s = refocusing_sequence(3, (0, 1), tau2, tau1, &[0.2; 3], &p, 2).unwrap();
        let ch = evolve_channel(&r, &s, &EvolveOptions::new(tau1 / 200.0)).unwrap();
        let f = gate_fidelity(&ch, &ising_unitary(3, &[(0, 1, jj)], tau2)).unwrap();
        assert!(1.0 - f < 1e-8, "{}", 1.0 - f);
        let bare = gate_fidelity(&ch, &ising_unitary(3, &[(0, 1, jj), (1, 2, jj), (0, 2, jj / 8.0)], tau2)).unwrap();
        assert!(1.0 - bare > 1e-3);
    }

    #[test]
    fn ramp_dc_integrals_exact() {
        let tr = Track {
            base: 0.2,
            ramps: vec![Ramp { s: 1.0, e: 3.0, from: 0.2, to: 0.0, profile: RampProfile::Linear }],
            dcs: vec![(0.5, 1.5, 0.1)],
        };
        assert!((tr.eps(2.0) - 0.1).abs() < 1e-15);
        assert!((tr.eps(1.2) - (0.18 + 0.1)).abs() < 1e-12);
        // −0.2 over the ramp area (0.2) and −0.2 per unit afterwards, plus 0.1 of dc.
        assert!((tr.deviation_integral(4.0) - (-0.2 - 0.2 + 0.1)).abs() < 1e-12);
        let n = 40000;
        let num: f64 = (0..n).map(|k| (tr.eps((k as f64 + 0.5) * 4.0 / n as f64) - 0.2) * 4.0 / n as f64).sum();
        assert!((num - tr.deviation_integral(4.0)).abs() < 1e-6);
    }

    #[test]
    fn target_out_of_range_rejected() {
        let r = reg(&RegisterSpec::chain(1, 100.0, 0.2, Mode::TwoLevel, 0.0));
        let s = PulseSchedule::new(vec![Pulse::dc_stress(Target::One(3), 0.0, 1e-9, 1e3)], None).unwrap();
        assert!(evolve(&r, &s, &EvolveOptions::new(1e-11)).is_err());
    }
}
