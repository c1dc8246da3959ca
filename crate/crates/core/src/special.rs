//! Special functions and quadrature rules needed by the sphere integrals.
//!
//! Only the orders that occur for ambient dimension `d ≤ 6` are supported.

use std::f64::consts::PI;

/// Below this argument the power series is used; above it the Hankel expansion.
const SERIES_CUTOFF: f64 = 12.0;

/// `Γ(ν + 1)` for `ν` a non-negative integer or half-integer `≥ -1/2`.
fn gamma_shifted(nu: f64) -> f64 {
    // Γ(z) by downward recursion to Γ(1) = 1 or Γ(1/2) = √π.
    let mut z = nu + 1.0;
    let mut acc = 1.0;
    while z > 1.25 {
        z -= 1.0;
        acc *= z;
    }
    if (z - 0.5).abs() < 1e-12 {
        acc * PI.sqrt()
    } else {
        acc
    }
}

/// Normalized Bessel function `Λ_ν(x) = Γ(ν+1) (2/x)^ν J_ν(x)`, with `Λ_ν(0) = 1`.
///
/// `ν` must be an integer or half-integer in `[-1/2, 5/2]`.
pub fn normalized_bessel(nu: f64, x: f64) -> f64 {
    let x = x.abs();
    if x < SERIES_CUTOFF {
        let q = -(x * x) / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut m = 0.0;
        loop {
            term *= q / ((m + 1.0) * (m + nu + 1.0));
            sum += term;
            m += 1.0;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) && m > x {
                break;
            }
            if m > 200.0 {
                break;
            }
        }
        sum
    } else {
        gamma_shifted(nu) * (2.0 / x).powf(nu) * bessel_j_asymptotic(nu, x)
    }
}

/// Hankel asymptotic expansion of `J_ν(x)` truncated at its smallest term.
fn bessel_j_asymptotic(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut p = 0.0;
    let mut q = 0.0;
    // a_k / x^k with a_k = Π_{j=1..k} (mu - (2j-1)^2) / (k! 8^k)
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..80 {
        if k > 0 {
            let j = k as f64;
            term *= (mu - (2.0 * j - 1.0).powi(2)) / (j * 8.0 * x);
        }
        if term.abs() > last || term == 0.0 {
            break;
        }
        last = term.abs();
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * term;
        } else {
            q += sign * term;
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - (nu / 2.0 + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// `J_0(x)`.
pub fn bessel_j0(x: f64) -> f64 {
    normalized_bessel(0.0, x)
}

/// `J_1(x)`.
pub fn bessel_j1(x: f64) -> f64 {
    // Λ_1(x) = 2 J_1(x) / x
    if x == 0.0 {
        return 0.0;
    }
    normalized_bessel(1.0, x) * x / 2.0
}

/// Fourier transform of the uniform probability measure on the unit sphere
/// `S^{k-1} ⊂ R^k`, evaluated at radius `r`:
/// `∫ exp(-2πi r ω·e) dω = Γ(k/2) (πr)^{1-k/2} J_{k/2-1}(2πr)`.
///
/// For `k = 1` the sphere is `{±1}` and the value is `cos(2πr)`.
pub fn sphere_ft(k: usize, r: f64) -> f64 {
    assert!((1..=6).contains(&k), "sphere_ft supports k in 1..=6, got {k}");
    let x = 2.0 * PI * r.abs();
    match k {
        1 => x.cos(),
        3 => {
            if x < 1e-4 {
                1.0 - x * x / 6.0
            } else {
                x.sin() / x
            }
        }
        5 => {
            if x < 0.5 {
                normalized_bessel(1.5, x)
            } else {
                3.0 * (x.sin() - x * x.cos()) / (x * x * x)
            }
        }
        _ => normalized_bessel(k as f64 / 2.0 - 1.0, x),
    }
}

/// Surface area of the unit sphere `S^n ⊂ R^{n+1}`.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 1.0) * sphere_area(n - 2),
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// Gauss–Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let h = 0.5 * (b - a);
    let c = 0.5 * (b + a);
    (
        x.iter().map(|t| c + h * t).collect(),
        w.iter().map(|t| t * h).collect(),
    )
}
