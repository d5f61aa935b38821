//! Shared fixtures for the criterion benchmarks in `benches/`.

use lidonor_core::dynamics::{build_register, Mode, Register, RegisterSpec};
use lidonor_core::levels::manifold;
use lidonor_core::materials::MaterialParams;
use lidonor_core::pulses::{x_rotation_pulse, PulseSchedule};
use lidonor_core::rates::{RateModel, RateProvider, ShellQuadrature};
use lidonor_core::Result;

pub struct Fixture {
    pub params: MaterialParams,
    pub rates: RateProvider,
}

impl Fixture {
    pub fn new() -> Result<Fixture> {
        let params = MaterialParams::default();
        let rates = RateProvider::new(&params, RateModel::ClosedForm, ShellQuadrature::default())?;
        Ok(Fixture { params, rates })
    }

    /// A chain at 100 nm and ε = 0.2, 100 mK.
    pub fn chain(&self, n: usize, mode: Mode) -> Result<Register> {
        build_register(&RegisterSpec::chain(n, 100.0, 0.2, mode, 100.0), &self.params, &self.rates)
    }

    /// π pulse on donor 0 at ε = 0.2 with A = 1e5 dyn/cm², and its duration.
    pub fn pi_pulse(&self) -> Result<(PulseSchedule, f64)> {
        let level = manifold(0.2, &self.params)?;
        let pulse = x_rotation_pulse(std::f64::consts::PI, 1e5, &level, 0, 0.0, 0.0, &self.params)?;
        let d = pulse.duration;
        Ok((PulseSchedule::new(vec![pulse], None)?, d))
    }
}
