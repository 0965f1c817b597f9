//! Order-1 Bessel function of the first kind.

use std::f64::consts::PI;

/// `J1(x)`: ascending series for `|x| <= 12`, Hankel asymptotic expansion
/// beyond.
pub fn bessel_j1(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= 12.0 { series(ax) } else { asymptotic(ax) };
    if x < 0.0 {
        -v
    } else {
        v
    }
}

fn series(x: f64) -> f64 {
    // sum_m (-1)^m (x/2)^(2m+1) / (m! (m+1)!)
    let half = 0.5 * x;
    let q = half * half;
    let mut term = half;
    let mut sum = term;
    for m in 0..60 {
        let m = m as f64;
        term *= -q / ((m + 1.0) * (m + 2.0));
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

fn asymptotic(x: f64) -> f64 {
    // J1(x) ~ sqrt(2/(pi x)) (P cos chi - Q sin chi), chi = x - 3pi/4,
    // with mu = 4 n^2 = 4.
    let mu = 4.0;
    let z = 8.0 * x;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut k = 1.0;
    let mut prev = f64::INFINITY;
    loop {
        // term_k = prod_{j<=k} (mu - (2j-1)^2) / (k! z^k)
        let odd = 2.0 * k - 1.0;
        let next = term * (mu - odd * odd) / (k * z);
        if next.abs() >= prev || next.abs() < 1e-17 {
            break;
        }
        prev = next.abs();
        term = next;
        // k odd terms feed Q, even terms feed P, with alternating signs
        let kk = k as i64;
        match kk % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        k += 1.0;
        if k > 40.0 {
            break;
        }
    }
    let chi = x - 0.75 * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}
