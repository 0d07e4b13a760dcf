//! Upper-orthant probabilities of the standard bivariate normal.

use super::special::{integrate, normal_pdf, q_function};

// φ(x) is below 1e-19 past this point; the truncated tail is negligible.
const TAIL_CUTOFF: f64 = 9.5;

/// `P(X > a, Y > b)` for standard normals `X, Y` with correlation `corr`.
///
/// Computed by adaptive quadrature of `∫_a^∞ φ(x) Q((b − ρx)/√(1−ρ²)) dx`
/// with a relative tolerance, so tiny orthants keep their significant digits.
/// `|corr| = 1` is handled in closed form.
pub fn bvn_upper_rect(a: f64, b: f64, corr: f64) -> f64 {
    assert!(
        corr.is_finite() && corr.abs() <= 1.0 + 1e-12,
        "correlation {corr} outside [-1, 1]"
    );
    let rho = corr.clamp(-1.0, 1.0);
    if a == f64::INFINITY || b == f64::INFINITY {
        return 0.0;
    }
    if a == f64::NEG_INFINITY {
        return q_function(b);
    }
    if b == f64::NEG_INFINITY {
        return q_function(a);
    }
    if rho == 1.0 {
        return q_function(a.max(b));
    }
    if rho == -1.0 {
        // Y = -X: P(a < X < -b)
        return (q_function(a) - q_function(-b)).max(0.0);
    }
    if rho == 0.0 {
        return q_function(a) * q_function(b);
    }
    // integrate over the variable with the larger threshold so the domain is short
    let (lo, other) = if a >= b { (a, b) } else { (b, a) };
    if lo >= TAIL_CUTOFF {
        return 0.0;
    }
    let s = (1.0 - rho * rho).sqrt();
    let f = |x: f64| normal_pdf(x) * q_function((other - rho * x) / s);
    let start = lo.max(-TAIL_CUTOFF);
    let mut v = 0.0;
    // split at the conditional-mean kink so both panels are smooth
    let kink = other / rho;
    if kink > start && kink < TAIL_CUTOFF {
        v += integrate(f, start, kink, 1e-16, 1e-12);
        v += integrate(f, kink, TAIL_CUTOFF, 1e-16, 1e-12);
    } else {
        v += integrate(f, start, TAIL_CUTOFF, 1e-16, 1e-12);
    }
    v.clamp(0.0, q_function(a).min(q_function(b)))
}
