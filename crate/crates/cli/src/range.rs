//! Numeric grid syntax: `v`, `a,b,c`, `start:stop:step` and `logN(start,stop,count)`.

use anyhow::{bail, Context, Result};

/// Upper bound on grid length.
pub const MAX_POINTS: usize = 100_000;

fn number(s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().with_context(|| format!("`{s}` is not a number"))?;
    if !v.is_finite() {
        bail!("`{s}` is not finite");
    }
    Ok(v)
}

/// Rounds to 12 significant digits so that `0.05 + 3·0.15` prints as 0.5.
fn tidy(x: f64) -> f64 {
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Parses a grid, keeping the written order.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let s = spec.trim();
    if let Some(inner) = s.strip_prefix("logN(").and_then(|r| r.strip_suffix(')')) {
        let parts: Vec<&str> = inner.split(',').collect();
        if parts.len() != 3 {
            bail!("logN takes (start,stop,count), got `{s}`");
        }
        let (a, b) = (number(parts[0])?, number(parts[1])?);
        let n: usize = parts[2].trim().parse().with_context(|| format!("count `{}` is not an integer", parts[2]))?;
        if !(a > 0.0 && b > 0.0) {
            bail!("logN bounds must be positive in `{s}`");
        }
        if n == 0 || n > MAX_POINTS {
            bail!("logN count must be in 1..={MAX_POINTS}");
        }
        return Ok(lidonor_core::quadrature::log_space(a, b, n));
    }
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            bail!("range must be start:stop:step, got `{s}`");
        }
        let (a, b, h) = (number(parts[0])?, number(parts[1])?, number(parts[2])?);
        if !(h > 0.0) {
            bail!("range step must be positive in `{s}`");
        }
        if b < a {
            bail!("range stop lies below start in `{s}`");
        }
        // Tolerate the stop value being missed by rounding.
        let count = ((b - a) / h * (1.0 + 1e-12) + 1e-9).floor() as usize + 1;
        if count > MAX_POINTS {
            bail!("range `{s}` has more than {MAX_POINTS} points");
        }
        return Ok((0..count).map(|k| tidy(a + k as f64 * h)).collect());
    }
    let vals: Result<Vec<f64>> = s.split(',').map(number).collect();
    let vals = vals?;
    if vals.is_empty() {
        bail!("empty grid");
    }
    Ok(vals)
}
