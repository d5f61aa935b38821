//! Anisotropic 1s envelopes in momentum space and their overlap form factors.
//!
//! The shape function is A(p) = 8√(π a_⊥² a_∥) / [1 + a_⊥²p_⊥² + a_∥²p_∥²]², with ∥ along
//! the valley axis; ∫|A|² d³p/(2π)³ = 1.

use std::f64::consts::PI;

use crate::levels::Valley;
use crate::materials::MaterialParams;
use crate::quadrature::Rule;

/// Valley minimum position as a fraction of the zone-boundary wavevector 2π/a.
pub const VALLEY_FRACTION: f64 = 0.85;

pub fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// k_j.
pub fn valley_center(v: Valley, p: &MaterialParams) -> [f64; 3] {
    let k = VALLEY_FRACTION * 2.0 * PI / p.a_si;
    let u = v.unit();
    [k * u[0], k * u[1], k * u[2]]
}

/// (a_⊥²p_⊥² + a_∥²p_∥²) for a displacement `d` relative to the valley axis `axis`.
fn scaled_sq(axis: usize, d: &[f64; 3], p: &MaterialParams) -> f64 {
    let par = d[axis];
    let perp2 = dot(d, d) - par * par;
    p.a_perp * p.a_perp * perp2 + p.a_par * p.a_par * par * par
}

pub fn envelope_peak(p: &MaterialParams) -> f64 {
    8.0 * (PI * p.a_perp * p.a_perp * p.a_par).sqrt()
}

/// A^j(k), real.
pub fn envelope_k(v: Valley, k: &[f64; 3], p: &MaterialParams) -> f64 {
    let c = valley_center(v, p);
    let d = [k[0] - c[0], k[1] - c[1], k[2] - c[2]];
    let s = 1.0 + scaled_sq(v.axis(), &d, p);
    envelope_peak(p) / (s * s)
}

/// Same-valley overlap ∫A^j(k)A^j(k+q)d³k/(2π)³ = [1 + (a_⊥²q_⊥² + a_∥²q_∥²)/4]⁻².
pub fn form_factor(axis: usize, q: &[f64; 3], p: &MaterialParams) -> f64 {
    let s = 1.0 + 0.25 * scaled_sq(axis, q, p);
    1.0 / (s * s)
}

/// Umklapp overlap between valleys j and −j: the same-valley form factor displaced by κ₀k̂_j.
pub fn intervalley_form_factor(v: Valley, q: &[f64; 3], p: &MaterialParams) -> f64 {
    let k0 = p.kappa0() * v.sign();
    let mut d = *q;
    d[v.axis()] -= k0;
    form_factor(v.axis(), &d, p)
}

/// The overlap integral evaluated by quadrature in scaled coordinates, as an
/// independent check of [`form_factor`]. `n` is the per-panel order.
pub fn form_factor_quadrature(axis: usize, q: &[f64; 3], p: &MaterialParams, n: usize) -> f64 {
    // Scaled momentum transfer; the integrand then depends on |P| and the angle to Q only.
    let mut qs = [q[0] * p.a_perp, q[1] * p.a_perp, q[2] * p.a_perp];
    qs[axis] = q[axis] * p.a_par;
    let big_q = norm(&qs);
    // P = t/(1−t), t ∈ [0, 1).
    let radial = Rule::composite(n, 16, 0.0, 1.0);
    let polar = Rule::composite(n, 4, -1.0, 1.0);
    let mut total = 0.0;
    for (&t, &wt) in radial.nodes.iter().zip(&radial.weights) {
        let r = t / (1.0 - t);
        let jac = 1.0 / ((1.0 - t) * (1.0 - t));
        let a = 1.0 + r * r;
        let inner = polar.integrate(|c| {
            let b = 1.0 + r * r + big_q * big_q + 2.0 * r * big_q * c;
            1.0 / (a * a * b * b)
        });
        total += wt * jac * r * r * inner;
    }
    // 64π/(2π)³ · 2π from the azimuth.
    total * 64.0 * PI / (8.0 * PI * PI * PI) * 2.0 * PI
}
