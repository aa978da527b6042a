//! Gauss–Legendre and Gauss–Lobatto rules on the unit interval.
//!
//! Nodes are computed by Newton iteration in `f64` and cast to the target scalar.

use crate::scalar::Real;

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = if (1.0 - x * x).abs() < 1e-300 {
        // endpoint value of P_n'
        let s = if x > 0.0 { 1.0 } else { (-1.0f64).powi(n as i32 - 1) };
        s * nf * (nf + 1.0) / 2.0
    } else {
        nf * (x * p1 - p0) / (x * x - 1.0)
    };
    (p1, dp)
}

/// `n`-point Gauss–Legendre rule on `[0, 1]`, nodes ascending.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1, "Gauss–Legendre needs at least one point");
    let mut x = vec![0.0f64; n];
    let mut w = vec![0.0f64; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, z);
        x[n - 1 - i] = z;
        w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (
        x.iter().map(|&z| T::of(0.5 * (z + 1.0))).collect(),
        w.iter().map(|&v| T::of(0.5 * v)).collect(),
    )
}

/// `n`-point Gauss–Lobatto rule on `[0, 1]` (includes both endpoints), nodes ascending.
pub fn gauss_lobatto<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 2, "Gauss–Lobatto needs at least two points");
    let order = n - 1;
    let nf = order as f64;
    let mut x = vec![0.0f64; n];
    for i in 0..n {
        // Chebyshev–Gauss–Lobatto initial guess, descending
        let mut z = (std::f64::consts::PI * i as f64 / nf).cos();
        if i == 0 || i == order {
            x[i] = z;
            continue;
        }
        for _ in 0..100 {
            // Newton on (1 - z^2) P_N'(z)
            let (p, dp) = legendre(order, z);
            let f = (1.0 - z * z) * dp;
            // d/dz[(1-z^2)P'] = -N(N+1) P
            let df = -nf * (nf + 1.0) * p;
            let dz = f / df;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
    }
    x.reverse();
    let w: Vec<f64> = x
        .iter()
        .map(|&z| {
            let (p, _) = legendre(order, z);
            2.0 / (nf * (nf + 1.0) * p * p)
        })
        .collect();
    (
        x.iter().map(|&z| T::of(0.5 * (z + 1.0))).collect(),
        w.iter().map(|&v| T::of(0.5 * v)).collect(),
    )
}
