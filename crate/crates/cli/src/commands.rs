//! Subcommand implementations.

use std::f64::consts::PI;

use anyhow::{bail, Context as _, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use lidonor_core::coupling::{
    coupling_combination, coupling_integral, g10_channel, g21_channel, gamma, ising_channels, ising_coupling,
    CouplingQuadrature, DonorPairGeometry,
};
use lidonor_core::dynamics::{build_register, evolve, suggest_dt, EvolveOptions};
use lidonor_core::levels::{epsilon_from_omega10, epsilon_from_stress, manifold, stress_from_epsilon};
use lidonor_core::materials::{build_materials, derive, load_overrides, MaterialParams, Overrides};
use lidonor_core::operating::{self, SweepGrid, SweepKind, Table};
use lidonor_core::oracle::{self, CouplingKind, OracleReport};
use lidonor_core::pulses::rabi_frequency_x;
use lidonor_core::rates::{suppression_factor, RateModel, RateProvider, ShellQuadrature};
use lidonor_core::schedule::{parse_schedule, report_targets};
use lidonor_core::units::{mev_to_rad_per_s, mk_to_k, nm_to_cm, ns_to_s, rad_per_s_to_mev, s_to_ns, MEV, NM};

use crate::output::{render_json, render_records, render_table, Format, Header, Sink};
use crate::range::parse_grid;
use crate::{Cli, Command, OperatingArgs, RatesArg, SweepArg, VerifyFailed};

/// Resolved settings shared by every subcommand.
pub struct Context {
    pub params: MaterialParams,
    pub shell: ShellQuadrature,
    pub coupling: CouplingQuadrature,
    pub model: RateModel,
    pub w21_override: Option<f64>,
    pub header: Header,
    pub sink: Sink,
}

fn config_path(cli: &Cli) -> Option<std::path::PathBuf> {
    cli.common
        .config
        .clone()
        .or_else(|| std::env::var_os("LIDONOR_CONFIG").filter(|v| !v.is_empty()).map(Into::into))
}

fn overrides(cli: &Cli) -> Result<Overrides> {
    let mut o = match config_path(cli) {
        Some(p) => load_overrides(&p)?,
        None => Overrides::new(),
    };
    for kv in &cli.common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| lidonor_core::Error::Config(format!("--set expects key=value, got `{kv}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| lidonor_core::Error::Config(format!("--set {k}: `{v}` is not a number")))?;
        o.insert(k.trim().to_string(), v);
    }
    Ok(o)
}

impl Context {
    pub fn new(cli: &Cli, command: &str, argv: &[String]) -> Result<Context> {
        let o = overrides(cli)?;
        let params = build_materials(&o)?;
        let mut shell = ShellQuadrature::default();
        if let Some(n) = cli.common.quad_order {
            if n < 4 {
                bail!(lidonor_core::Error::Validation(format!("--quad-order {n} is below 4")));
            }
            shell.n_theta = n;
            shell.n_phi = 2 * n;
        }
        if let Some(w) = cli.common.w21_override {
            if !(w > 0.0 && w.is_finite()) {
                bail!(lidonor_core::Error::Validation(format!("--w21-override {w} must be positive")));
            }
        }
        let model = match cli.common.rates {
            RatesArg::ClosedForm => RateModel::ClosedForm,
            RatesArg::Oracle => RateModel::Oracle,
        };
        let coupling = CouplingQuadrature::default();
        let mut header = Header::new(command, argv);
        header.set("constants", json!(params.fingerprint()));
        header.set("overrides", json!(o));
        header.set("config", json!(config_path(cli).map(|p| p.display().to_string())));
        header.set("shell_quadrature", json!(shell.fingerprint()));
        header.set("coupling_quadrature", json!(coupling.fingerprint()));
        header.set("rates", json!(match model { RateModel::ClosedForm => "closed-form", RateModel::Oracle => "oracle" }));
        header.set("w21_override_per_s", json!(cli.common.w21_override));
        Ok(Context {
            params,
            shell,
            coupling,
            model,
            w21_override: cli.common.w21_override,
            header,
            sink: Sink::new(cli.common.out.clone())?,
        })
    }

    pub fn rates(&self) -> Result<RateProvider> {
        Ok(match self.w21_override {
            Some(w) => RateProvider::with_w21_override(&self.params, self.model, self.shell, w),
            None => RateProvider::new(&self.params, self.model, self.shell)?,
        })
    }

    fn emit_table(&self, table: Table, format: Format) -> Result<()> {
        self.sink.write(&render_table(table, &self.header, format)?)
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Constants => "constants",
        Command::Levels { .. } => "levels",
        Command::Lifetimes { .. } => "lifetimes",
        Command::Coupling { .. } => "coupling",
        Command::Rabi { .. } => "rabi",
        Command::Simulate { .. } => "simulate",
        Command::OperatingPoint(_) => "operating-point",
        Command::Verify { .. } => "verify",
    }
}

pub fn dispatch(cli: &Cli, argv: &[String]) -> Result<()> {
    let name = command_name(&cli.command);
    let ctx = Context::new(cli, name, argv)?;
    let csv_default = cli.common.format.unwrap_or(Format::Csv);
    match &cli.command {
        Command::Constants => constants(&ctx, csv_default),
        Command::Levels { eps } => levels(&ctx, &parse_grid(eps)?, csv_default),
        Command::Lifetimes { eps } => {
            let t = operating::fig1_lifetimes(&parse_grid(eps)?, &ctx.rates()?)?;
            ctx.emit_table(t, csv_default)
        }
        Command::Coupling { r, eps10, eps21, oracle } => coupling(&ctx, &parse_grid(r)?, *eps10, *eps21, *oracle, csv_default),
        Command::Rabi { amplitude, freq_ghz, eps } => rabi(&ctx, &parse_grid(amplitude)?, *freq_ghz, *eps, csv_default),
        Command::Simulate { schedule, dt_ns, sample_ns, validate_only } => simulate(
            &ctx,
            schedule,
            *dt_ns,
            *sample_ns,
            *validate_only,
            cli.common.format.unwrap_or(Format::Json),
        ),
        Command::OperatingPoint(a) => operating_point(&ctx, a, csv_default),
        Command::Verify { skip_couplings } => verify(&ctx, *skip_couplings, csv_default),
    }
}

fn constants(ctx: &Context, format: Format) -> Result<()> {
    let p = &ctx.params;
    let d = derive(p);
    let mut rows: Vec<(String, f64, String, String)> =
        p.constants_table().into_iter().map(|c| (c.key, c.value, c.unit, c.note)).collect();
    let derived = [
        ("kappa0_per_nm", d.kappa0 * NM, "1/nm", "closest intervalley separation 0.6*pi/a_si"),
        ("sigma", d.sigma, "", "xi_d/xi_u"),
        ("t0_check_K", d.t0_check, "K", "hbar*u_t/(a_perp*k_B)"),
        ("suppression_factor", suppression_factor(0.0, p), "", "8a^2/35*(a_par*kappa0/2)^-10 at zero stress"),
        ("gamma", gamma(p), "", "three-level quality prefactor"),
        ("epsilon_per_dyn_cm2", epsilon_from_stress(1.0, p), "cm^2/dyn", "stress parameter per unit stress"),
    ];
    rows.extend(derived.iter().map(|(k, v, u, n)| (k.to_string(), *v, u.to_string(), n.to_string())));
    let text = match format {
        Format::Csv => render_records(
            &ctx.header,
            &["key", "value", "unit", "note"],
            &rows.iter().map(|r| vec![r.0.clone(), operating::format_number(r.1), r.2.clone(), r.3.clone()]).collect::<Vec<_>>(),
        )?,
        Format::Json => render_json(
            &ctx.header,
            "constants",
            Value::Array(rows.iter().map(|r| json!({"key": r.0, "value": r.1, "unit": r.2, "note": r.3})).collect()),
        )?,
    };
    ctx.sink.write(&text)
}

fn levels(ctx: &Context, eps: &[f64], format: Format) -> Result<()> {
    let p = &ctx.params;
    let mut t = Table::new(&["eps", "stress_dyn_cm2", "a_coef", "b_coef", "e1_meV", "e2_meV", "omega10_rad_s", "omega21_rad_s"]);
    for &e in eps {
        let l = manifold(e, p)?;
        t.push(vec![
            e,
            stress_from_epsilon(e, p),
            l.a_coef,
            l.b_coef,
            l.states[1].energy / MEV,
            l.states[2].energy / MEV,
            l.omega10,
            l.omega21,
        ])?;
    }
    ctx.emit_table(t, format)
}

fn coupling(ctx: &Context, r_nm: &[f64], eps10: f64, eps21: f64, with_oracle: bool, format: Format) -> Result<()> {
    let rates = ctx.rates()?;
    let mut t = operating::coupling_vs_r(r_nm, eps10, eps21, &rates)?;
    if with_oracle {
        let p = &ctx.params;
        let l10 = manifold(eps10, p)?;
        let l21 = manifold(eps21, p)?;
        let l0 = manifold(0.0, p)?;
        let extra: Result<Vec<[f64; 3]>> = t
            .rows
            .par_iter()
            .map(|row| {
                let g = DonorPairGeometry::in_plane(nm_to_cm(row[0]), 0.0)?;
                Ok([
                    coupling_integral(g10_channel(), &g, &l10, p, &ctx.coupling)?.value,
                    coupling_integral(g21_channel(), &g, &l21, p, &ctx.coupling)?.value,
                    coupling_combination(&ising_channels(), &g, &l0, p, &ctx.coupling)?.value,
                ])
            })
            .collect();
        for (row, x) in t.rows.iter_mut().zip(extra?) {
            row.extend(x);
        }
        t.columns.extend(["g10_oracle_rad_s", "g21_oracle_rad_s", "J_oracle_rad_s"].map(String::from));
    }
    ctx.emit_table(t, format)
}

fn rabi(ctx: &Context, amplitudes: &[f64], freq_ghz: Option<f64>, eps: Option<f64>, format: Format) -> Result<()> {
    let p = &ctx.params;
    let omega = match (freq_ghz, eps) {
        (Some(f), _) => 2.0 * PI * f * 1e9,
        (None, Some(e)) => manifold(e, p)?.omega10,
        (None, None) => 2.0 * PI * 10e9,
    };
    if !(omega > 0.0 && omega.is_finite()) {
        bail!(lidonor_core::Error::Validation("qubit frequency must be positive".into()));
    }
    let mut t = Table::new(&["amplitude_dyn_cm2", "eps", "omega10_rad_s", "rabi_rad_s", "rabi_over_2pi_hz", "tau_pi_ns", "rabi_over_omega10"]);
    for &a in amplitudes {
        if !(a > 0.0) {
            bail!(lidonor_core::Error::Validation(format!("amplitude {a} must be positive")));
        }
        let om = rabi_frequency_x(a, omega, p);
        t.push(vec![a, epsilon_from_omega10(omega, p), omega, om, om / (2.0 * PI), s_to_ns(PI / (2.0 * om)), om / omega])?;
    }
    ctx.emit_table(t, format)
}

fn simulate(
    ctx: &Context,
    path: &std::path::Path,
    dt_ns: Option<f64>,
    sample_ns: Option<f64>,
    validate_only: bool,
    format: Format,
) -> Result<()> {
    let file = parse_schedule(path)?;
    let normalized = file.normalized()?;
    let mut header = ctx.header.clone();
    header.set("schedule", json!(path.display().to_string()));
    if validate_only {
        return ctx.sink.write(&(normalized.to_json()? + "\n"));
    }
    let rates = ctx.rates()?;
    let reg = build_register(&file.register_spec()?, &ctx.params, &rates)?;
    let sched = file.schedule()?;
    let dt = match dt_ns.map(ns_to_s).or(file.dt()) {
        Some(dt) => dt,
        None => suggest_dt(&reg, &sched)?,
    };
    header.set("dt_ns", json!(s_to_ns(dt)));
    let mut opts = EvolveOptions::new(dt);
    opts.sample_interval = sample_ns.or(file.sample_interval_ns).map(ns_to_s);
    let mut result = evolve(&reg, &sched, &opts)?;
    report_targets(&reg, &file.targets, &mut result)?;
    eprintln!(
        "simulated {} steps; trace deviation {:.3e}, min eigenvalue {:.3e}",
        result.steps, result.trace_deviation, result.min_eigenvalue
    );
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let text = match format {
        Format::Json => render_json(&header, "result", serde_json::to_value(&result)?)?,
        Format::Csv => render_records(
            &header,
            &["gate", "fidelity"],
            &result
                .fidelity_report
                .iter()
                .map(|f| vec![f.gate.clone(), operating::format_number(f.fidelity)])
                .collect::<Vec<_>>(),
        )?,
    };
    ctx.sink.write(&text)
}

fn operating_point(ctx: &Context, a: &OperatingArgs, format: Format) -> Result<()> {
    let p = &ctx.params;
    let r = parse_grid(&a.r)?;
    let eps = parse_grid(&a.eps)?;
    let grid = SweepGrid {
        eps: eps.clone(),
        r: r.clone(),
        q: parse_grid(&a.q)?,
        epsilon10: a.eps10,
        epsilon21: eps[0],
        hbar_omega21_mev: a.hbar_omega21_mev,
    };
    let kind = match a.sweep {
        SweepArg::Point => None,
        SweepArg::Fig1Lifetimes => Some(SweepKind::Fig1Lifetimes),
        SweepArg::Fig3Temperature => Some(SweepKind::Fig3Temperature),
        SweepArg::CouplingVsR => Some(SweepKind::CouplingVsR),
        SweepArg::RatesVsOmega => Some(SweepKind::RatesVsOmega),
    };
    let table = match kind {
        Some(SweepKind::Fig3Temperature) => {
            let mut h = ctx.header.clone();
            h.set("hbar_omega21_meV", json!(a.hbar_omega21_mev));
            let t = operating::fig3_temperature(&grid.r, &grid.q, mev_to_rad_per_s(a.hbar_omega21_mev), a.printed, p)?;
            return ctx.sink.write(&render_table(t, &h, format)?);
        }
        Some(k) => operating::sweep(k, &grid, &ctx.rates()?)?,
        None => {
            let rates = ctx.rates()?;
            let temps = parse_grid(&a.temperature_mk)?;
            let mut t = Table::new(&[
                "R_nm", "eps", "T_mK", "q2", "q3", "q3_max", "kT_over_hbar_omega21", "hbar_omega21_meV", "w10_per_s", "w21_per_s",
                "g21_rad_s", "J_rad_s",
            ]);
            for &rr in &r {
                for &e in &eps {
                    for &tm in &temps {
                        let rc = nm_to_cm(rr);
                        let op = operating::operating_point(rc, e, mk_to_k(tm), p)?;
                        let g = DonorPairGeometry::in_plane(rc, 0.0)?;
                        let w21 = rates.w21(e);
                        t.push(vec![
                            rr,
                            e,
                            tm,
                            op.q2,
                            op.q3,
                            operating::quality_three_level_max(rc, e, p)?,
                            operating::thermal_ratio_21(e, mk_to_k(tm), p),
                            rad_per_s_to_mev(2.0 * manifold(e, p)?.omega10),
                            rates.w10(e)?,
                            w21,
                            lidonor_core::coupling::ret_coupling_21(&g, e, p, w21)?,
                            ising_coupling(&g, p)?,
                        ])?;
                    }
                }
            }
            t
        }
    };
    ctx.emit_table(table, format)
}

/// Reports of the standard verification suite.
pub fn verify_reports(params: &MaterialParams, shell: &ShellQuadrature, coupling: &CouplingQuadrature, skip_couplings: bool) -> Result<Vec<OracleReport>> {
    let mut reports = Vec::new();
    let mut w10 = oracle::verify_rate(0.2, params, shell)?;
    let fit = oracle::rate_exponent(false, 0.01, 0.1, params, shell)?;
    w10.pass &= fit.pass;
    w10.exponent = Some(fit);
    reports.push(w10);
    reports.push(oracle::verify_rate(0.5, params, shell)?);
    if !skip_couplings {
        for (kind, r_nm, eps) in [(CouplingKind::G10, 100.0, 0.2), (CouplingKind::G21, 50.0, 0.002), (CouplingKind::Ising, 100.0, 0.0)] {
            reports.push(oracle::verify_coupling(kind, r_nm * NM, eps, params, coupling, shell)?);
        }
    }
    let j = ising_coupling(&DonorPairGeometry::in_plane(100.0 * NM, 0.0)?, params)?;
    let chain = |n: usize| -> Vec<(usize, usize, f64)> {
        (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b, j / ((b - a) as f64).powi(3)))).collect()
    };
    for (n, pair) in [(2, (0, 1)), (3, (0, 1)), (4, (1, 2))] {
        reports.push(oracle::verify_refocusing(n, pair, &chain(n))?);
    }
    Ok(reports)
}

fn verify(ctx: &Context, skip_couplings: bool, format: Format) -> Result<()> {
    let reports = verify_reports(&ctx.params, &ctx.shell, &ctx.coupling, skip_couplings)?;
    for r in &reports {
        eprintln!("{}", r.summary());
    }
    let text = match format {
        Format::Json => render_json(&ctx.header, "reports", serde_json::to_value(&reports)?)?,
        Format::Csv => {
            let f = operating::format_number;
            let rows: Vec<Vec<String>> = reports
                .iter()
                .map(|r| {
                    let (e, x) = r.exponent.as_ref().map(|x| (f(x.exponent), f(x.expected))).unwrap_or_default();
                    vec![
                        r.quantity.clone(),
                        f(r.production),
                        f(r.oracle),
                        f(r.deviation),
                        f(r.threshold),
                        e,
                        x,
                        if r.pass { "PASS" } else { "FAIL" }.to_string(),
                        r.fingerprint.clone(),
                    ]
                })
                .collect();
            render_records(
                &ctx.header,
                &["quantity", "production", "oracle", "deviation", "threshold", "exponent", "expected_exponent", "status", "fingerprint"],
                &rows,
            )?
        }
    };
    ctx.sink.write(&text).context("writing verification report")?;
    let failed = reports.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(VerifyFailed(failed).into());
    }
    Ok(())
}
