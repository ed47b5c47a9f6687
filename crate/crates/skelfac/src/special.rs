//! Bessel functions J0, J1, Y0, Y1 and Hankel functions of the first kind,
//! double-precision, for the Helmholtz kernel. Power series below the
//! crossover, asymptotic expansions with optimal truncation above it.

use num_complex::Complex64 as C64;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const CROSSOVER: f64 = 12.0;
const FRAC_2_PI: f64 = std::f64::consts::FRAC_2_PI;

pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= CROSSOVER {
        j0_series(ax)
    } else {
        asymptotic(ax, 0).0
    }
}

pub fn bessel_j1(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= CROSSOVER {
        j1_series(ax)
    } else {
        asymptotic(ax, 1).0
    };
    if x < 0.0 {
        -v
    } else {
        v
    }
}

/// Y0, defined for x > 0.
pub fn bessel_y0(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x <= CROSSOVER {
        // Y0 = (2/pi)[(ln(x/2)+gamma) J0 + sum_{m>=1} (-1)^{m+1} H_m (x^2/4)^m/(m!)^2]
        let q = 0.25 * x * x;
        let mut term = 1.0f64;
        let mut h = 0.0f64;
        let mut sum = 0.0f64;
        for m in 1..=40 {
            term *= q / ((m * m) as f64);
            h += 1.0 / m as f64;
            let contrib = term * h;
            if m % 2 == 1 {
                sum += contrib;
            } else {
                sum -= contrib;
            }
            if term * h < 1e-20 * sum.abs().max(1.0) {
                break;
            }
        }
        FRAC_2_PI * (((0.5 * x).ln() + EULER_GAMMA) * j0_series(x) + sum)
    } else {
        asymptotic(x, 0).1
    }
}

/// Y1, defined for x > 0.
pub fn bessel_y1(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x <= CROSSOVER {
        // Y1 = (2/pi) ln(x/2) J1 - 2/(pi x)
        //      - (x/(2 pi)) sum_{k>=0} (psi(k+1)+psi(k+2)) (-x^2/4)^k / (k!(k+1)!)
        let q = 0.25 * x * x;
        let mut term = 1.0f64; // x^2-free part of (x^2/4)^k/(k!(k+1)!)
        let mut psi1 = -EULER_GAMMA; // psi(k+1)
        let mut psi2 = 1.0 - EULER_GAMMA; // psi(k+2)
        let mut sum = 0.0f64;
        let mut sign = 1.0f64;
        for k in 0..=40 {
            if k > 0 {
                term *= q / ((k * (k + 1)) as f64);
                sign = -sign;
                psi1 += 1.0 / k as f64;
                psi2 += 1.0 / (k + 1) as f64;
            }
            let contrib = sign * (psi1 + psi2) * term;
            sum += contrib;
            if term * (psi1 + psi2).abs() < 1e-20 * sum.abs().max(1.0) {
                break;
            }
        }
        FRAC_2_PI * (0.5 * x).ln() * j1_series(x) - FRAC_2_PI / x
            - x / (2.0 * std::f64::consts::PI) * sum
    } else {
        asymptotic(x, 1).1
    }
}

/// H_0^{(1)}(x) = J0(x) + i Y0(x).
pub fn hankel1_0(x: f64) -> C64 {
    C64::new(bessel_j0(x), bessel_y0(x))
}

/// H_1^{(1)}(x) = J1(x) + i Y1(x).
pub fn hankel1_1(x: f64) -> C64 {
    C64::new(bessel_j1(x), bessel_y1(x))
}

fn j0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for m in 1..=40 {
        term *= -q / ((m * m) as f64);
        sum += term;
        if term.abs() < 1e-20 {
            break;
        }
    }
    sum
}

fn j1_series(x: f64) -> f64 {
    // J1(x) = (x/2) sum (-1)^m (x^2/4)^m / (m!(m+1)!)
    let q = 0.25 * x * x;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for m in 1..=40 {
        term *= -q / ((m * (m + 1)) as f64);
        sum += term;
        if term.abs() < 1e-20 {
            break;
        }
    }
    0.5 * x * sum
}

/// Large-argument expansion: returns (J_n, Y_n). Terms are accumulated until
/// they stop decreasing (optimal truncation).
fn asymptotic(x: f64, n: u32) -> (f64, f64) {
    let mu = (4 * n * n) as f64;
    let mut p = 1.0f64;
    let mut q = 0.0f64;
    let mut t = 1.0f64;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        t *= (mu - (2.0 * kf - 1.0).powi(2)) / (8.0 * x * kf);
        if t.abs() >= prev {
            break;
        }
        prev = t.abs();
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * t;
        } else {
            q += sign * t;
        }
    }
    let chi = x - (2.0 * n as f64 + 1.0) * std::f64::consts::FRAC_PI_4;
    let amp = (FRAC_2_PI / x).sqrt();
    let (s, c) = chi.sin_cos();
    (amp * (p * c - q * s), amp * (p * s + q * c))
}
