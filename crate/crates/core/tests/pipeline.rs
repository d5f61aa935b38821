use std::f64::consts::PI;
use std::path::PathBuf;

use lidonor_core::dynamics::{
    build_register, evolve, evolve_channel, gate_fidelity, ising_unitary, EvolveOptions, Mode, RegisterSpec,
};
use lidonor_core::materials::MaterialParams;
use lidonor_core::pulses::refocusing_sequence;
use lidonor_core::rates::{w21_oracle, RateModel, RateProvider, ShellQuadrature};
use lidonor_core::schedule::{example_pi_then_ret, parse_schedule, report_targets};

fn provider(p: &MaterialParams) -> RateProvider {
    RateProvider::new(p, RateModel::ClosedForm, ShellQuadrature::default()).unwrap()
}

fn bundled() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/schedules/pi_then_ret.json")
}

fn close(a: &serde_json::Value, b: &serde_json::Value) -> bool {
    use serde_json::Value::*;
    match (a, b) {
        (Number(x), Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            (x - y).abs() <= 1e-9 * x.abs().max(y.abs())
        }
        (Array(x), Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(u, v)| close(u, v)),
        (Object(x), Object(y)) => x.len() == y.len() && x.iter().all(|(k, u)| y.get(k).is_some_and(|v| close(u, v))),
        _ => a == b,
    }
}

#[test]
fn bundled_schedule_matches_builder() {
    let p = MaterialParams::default();
    let rates = provider(&p);
    let built = example_pi_then_ret(&p, rates.w21(0.002)).unwrap();
    let file = parse_schedule(&bundled()).unwrap();
    // Same structure; times agree to rounding.
    let (a, b) = (serde_json::to_value(&file).unwrap(), serde_json::to_value(&built).unwrap());
    assert!(close(&a, &b), "{a}\n{b}");
}

#[test]
fn bundled_schedule_swaps_excitation() {
    let p = MaterialParams::default();
    let rates = provider(&p);
    let file = parse_schedule(&bundled()).unwrap();
    let reg = build_register(&file.register_spec().unwrap(), &p, &rates).unwrap();
    let sched = file.schedule().unwrap();
    let dt = lidonor_core::dynamics::suggest_dt(&reg, &sched).unwrap();
    let mut out = evolve(&reg, &sched, &EvolveOptions::new(dt)).unwrap();
    report_targets(&reg, &file.targets, &mut out).unwrap();
    assert!(out.trace_deviation < 1e-9);
    assert!(out.fidelity_report[0].fidelity > 0.98, "{:?}", out.fidelity_report);
    // The |1> moved to donor 0 and the |2> to donor 1.
    assert!(out.populations[0][1] > 0.98 && out.populations[1][2] > 0.98);
}

#[test]
fn four_chain_refocusing_needs_full_reach() {
    let p = MaterialParams::default();
    let rates = provider(&p);
    let mut spec = RegisterSpec::chain(4, 100.0, 0.2, Mode::TwoLevel, 0.0);
    spec.dissipation = false;
    let mut reg = build_register(&spec, &p, &rates).unwrap();
    for c in reg.couplings.iter_mut() {
        c.couplings.g10 = 0.0;
    }
    let j = reg.pair(1, 2).unwrap().couplings.j_ising;
    let tau2 = PI / j.abs();
    let tau1 = tau2 / 200.0;
    let channel = |reach: usize| {
        let s = refocusing_sequence(4, (1, 2), tau2, tau1, &[0.2; 4], &p, reach).unwrap();
        evolve_channel(&reg, &s, &EvolveOptions::new(tau1 / 200.0)).unwrap()
    };
    let selected = ising_unitary(4, &[(1, 2, j)], tau2);
    let full = channel(3);
    assert!(1.0 - gate_fidelity(&full, &selected).unwrap() < 1e-8);
    // Nearest and next-nearest only: the end-to-end J/27 term survives untouched.
    let short = channel(2);
    assert!(1.0 - gate_fidelity(&short, &selected).unwrap() > 1e-4);
    let leftover = ising_unitary(4, &[(1, 2, j), (0, 3, j / 27.0)], tau2);
    assert!(1.0 - gate_fidelity(&short, &leftover).unwrap() < 1e-6);
}

#[test]
fn tabulated_w21_tracks_quadrature() {
    let p = MaterialParams::default();
    let rates = provider(&p);
    let shell = ShellQuadrature::default();
    for eps in [0.0037, 0.041, 0.33] {
        let direct = w21_oracle(eps, &p, &shell).unwrap();
        let table = rates.w21(eps);
        assert!((table / direct - 1.0).abs() < 1e-3, "{eps}: {table} vs {direct}");
    }
}
