//! Special functions: Bessel J0, the Gaussian tail, and an adaptive
//! Gauss–Kronrod integrator used by the bivariate normal routine.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;

/// Gaussian tail probability `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    if x == f64::INFINITY {
        return 0.0;
    }
    if x == f64::NEG_INFINITY {
        return 1.0;
    }
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Zeroth-order Bessel function of the first kind.
///
/// Evaluated from `J0(x) = (1/π) ∫₀^π cos(x sin θ) dθ` with the trapezoidal
/// rule. The integrand is smooth and π-periodic, so the rule converges
/// geometrically once the node count exceeds `|x|`; the error is bounded by
/// `2|J_{2N}(x)|`.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax == 0.0 {
        return 1.0;
    }
    let n = 40 + ax.ceil() as usize;
    let h = PI / n as f64;
    let sum: f64 = (0..n).map(|k| (ax * (k as f64 * h).sin()).cos()).sum();
    sum / n as f64
}

// 15-point Kronrod nodes/weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod quadrature on `[a, b]`.
///
/// Subdivides until each panel's error estimate is below its share of
/// `max(abs_tol, rel_tol · |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (whole, err) = gk15(&f, a, b);
    let mut panels = vec![(a, b, whole, err)];
    for _ in 0..2000 {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let total_err: f64 = panels.iter().map(|p| p.3).sum();
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            return total;
        }
        // split the panel with the largest error
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (l, le) = gk15(&f, lo, mid);
        let (r, re) = gk15(&f, mid, hi);
        panels.push((lo, mid, l, le));
        panels.push((mid, hi, r, re));
    }
    panels.iter().map(|p| p.2).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    // power series oracle: sum (-1)^k (x²/4)^k / (k!)²
    fn j0_series(x: f64) -> f64 {
        let q = x * x / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            term *= -q / (k as f64 * k as f64);
            sum += term;
            if term.abs() < 1e-20 {
                break;
            }
        }
        sum
    }

    #[test]
    fn j0_matches_series() {
        for i in 0..=120 {
            let x = i as f64 * 0.1;
            assert!((bessel_j0(x) - j0_series(x)).abs() < 1e-10, "x = {x}");
        }
        assert_eq!(bessel_j0(0.0), 1.0);
    }

    #[test]
    fn j0_first_zero() {
        assert!(bessel_j0(2.404_825_557_695_773).abs() < 1e-6);
        assert!(bessel_j0(2.404826).abs() < 1e-6);
    }

    #[test]
    fn j0_table_one_lag() {
        let fd = 10.0 / (3e8 / 1.8e9);
        let x = 2.0 * PI * fd * 66.7e-6;
        assert!((x - 0.025_145).abs() < 1e-5);
        let v = bessel_j0(x);
        assert!((v - j0_series(x)).abs() < 1e-12);
        assert!((v - 0.99984).abs() < 5e-6);
    }

    #[test]
    fn q_function_values() {
        assert_eq!(q_function(0.0), 0.5);
        assert!((q_function(1.0) - 0.158_655_253_931_457_07).abs() < 1e-15);
        // deep tail keeps relative accuracy
        assert!((q_function(8.0) / 6.220_960_574_271_784e-16 - 1.0).abs() < 1e-12);
        assert!((q_function(-1.96) - 0.975_002_104_851_780).abs() < 1e-12);
        assert_eq!(q_function(f64::INFINITY), 0.0);
        assert_eq!(q_function(f64::NEG_INFINITY), 1.0);
    }

    #[test]
    fn integrator_polynomial_and_gaussian() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-14, 1e-14);
        assert!((v - 9.0).abs() < 1e-12);
        let g = integrate(normal_pdf, -10.0, 10.0, 1e-14, 1e-13);
        assert!((g - 1.0).abs() < 1e-12);
    }
}
