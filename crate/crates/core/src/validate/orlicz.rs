//! Empirical Orlicz norm for `Ψ_e(x) = (e^x - 1)/(e - 1)`.

use std::f64::consts::E;

pub fn psi_e(x: f64) -> f64 {
    x.exp_m1() / (E - 1.0)
}

/// `inf { c > 0 : mean Ψ_e(|x_i|/c) <= 1 }`, by bisection to relative `1e-10`.
///
/// Jensen gives `mean Ψ_e(|x|/c) >= 1` at `c = mean |x|`, and every term is at
/// most `Ψ_e(1) = 1` at `c = max |x|`, so the root lies between the two.
pub fn orlicz_norm(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "orlicz_norm needs at least one sample");
    let n = samples.len() as f64;
    let abs: Vec<f64> = samples.iter().map(|x| x.abs()).collect();
    let hi0 = abs.iter().copied().fold(0.0, f64::max);
    if hi0 == 0.0 {
        return 0.0;
    }
    let lo0 = abs.iter().sum::<f64>() / n;
    let excess = |c: f64| abs.iter().map(|x| psi_e(x / c)).sum::<f64>() / n - 1.0;
    let (mut lo, mut hi) = (lo0, hi0);
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}
