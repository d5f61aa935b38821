//! Gauss-Legendre rules on arbitrary intervals and small fitting helpers.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// Nodes and weights of an `n`-point Gauss-Legendre rule mapped to [a, b].
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Rule {
        let n = NonZeroUsize::new(n.max(1)).expect("n >= 1");
        let gl = GaussLegendre::new(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut pairs: Vec<(f64, f64)> = gl.as_node_weight_pairs().to_vec();
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        Rule {
            nodes: pairs.iter().map(|(x, _)| mid + half * x).collect(),
            weights: pairs.iter().map(|(_, w)| half * w).collect(),
        }
    }

    /// Composite rule: `panels` equal sub-intervals of [a, b], `n` points each.
    pub fn composite(n: usize, panels: usize, a: f64, b: f64) -> Rule {
        let panels = panels.max(1);
        let h = (b - a) / panels as f64;
        let base = Rule::gauss_legendre(n, 0.0, h);
        let mut nodes = Vec::with_capacity(n * panels);
        let mut weights = Vec::with_capacity(n * panels);
        for k in 0..panels {
            let x0 = a + h * k as f64;
            nodes.extend(base.nodes.iter().map(|x| x0 + x));
            weights.extend_from_slice(&base.weights);
        }
        Rule { nodes, weights }
    }

    /// Uniform trapezoid rule on a full period [0, 2π); spectrally accurate for periodic integrands.
    pub fn periodic(n: usize) -> Rule {
        let n = n.max(1);
        let h = std::f64::consts::TAU / n as f64;
        Rule {
            nodes: (0..n).map(|k| h * k as f64).collect(),
            weights: vec![h; n],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Least-squares slope of log|y| against log x.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.abs().ln()).collect();
    linear_slope(&lx, &ly)
}

pub fn linear_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `count` log-spaced points from `start` to `stop` inclusive.
pub fn log_space(start: f64, stop: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![start];
    }
    let (l0, l1) = (start.ln(), stop.ln());
    (0..count)
        .map(|k| (l0 + (l1 - l0) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exactness() {
        let r = Rule::gauss_legendre(5, 0.0, 2.0);
        let v = r.integrate(|x| x.powi(9));
        assert!((v - 2f64.powi(10) / 10.0).abs() < 1e-11);
        let c = Rule::composite(4, 3, -1.0, 2.0);
        assert!((c.integrate(|x| x * x) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn periodic_rule() {
        let r = Rule::periodic(16);
        assert!((r.integrate(|x| x.cos().powi(4)) - 0.75 * std::f64::consts::PI).abs() < 1e-13);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = log_space(1.0, 10.0, 7);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-2.5)).collect();
        assert!((log_log_slope(&xs, &ys) + 2.5).abs() < 1e-12);
        assert!((xs[6] - 10.0).abs() < 1e-12);
    }
}
