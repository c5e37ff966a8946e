//! Graded element field and forward sampling of failure loads.
#![allow(dead_code)]

use filpost::weibull::ElementField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn brute_sigma_w(s1: &[f64], v: &[f64], th: f64, m: f64, v0: f64) -> f64 {
    let mut sum = 0.0;
    for (x, vi) in s1.iter().zip(v) {
        if *x > th {
            sum += (x - th).powf(m) * vi / v0;
        }
    }
    th + if sum > 0.0 { sum.powf(1.0 / m) } else { 0.0 }
}

// Gradient field: sigma1 = amp_i * sqrt(J).
pub const N_E: usize = 40;
pub fn amp(i: usize) -> f64 {
    100.0 * (1.0 - 0.6 * i as f64 / N_E as f64)
}
pub fn vol(i: usize) -> f64 {
    0.05 * (1 + i) as f64
}
pub fn field_at(j: f64) -> ElementField {
    ElementField::new(
        j,
        (0..N_E).map(|i| amp(i) * j.sqrt()).collect(),
        (0..N_E).map(vol).collect(),
    )
    .unwrap()
}
pub fn levels() -> Vec<ElementField> {
    (0..400)
        .map(|k| field_at(1.0 + 2499.0 * k as f64 / 399.0))
        .collect()
}
pub fn load_for(target: f64, th: f64, m: f64) -> f64 {
    let sw = |j: f64| {
        let s1: Vec<f64> = (0..N_E).map(|i| amp(i) * j.sqrt()).collect();
        let v: Vec<f64> = (0..N_E).map(vol).collect();
        brute_sigma_w(&s1, &v, th, m, 1.0)
    };
    let (mut lo, mut hi) = (1.0f64, 2500.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sw(mid) < target {
            lo = mid
        } else {
            hi = mid
        }
    }
    0.5 * (lo + hi)
}
pub fn sampled_loads(seed: u64, th: f64, m: f64, u: f64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let q: f64 = rng.gen();
            load_for(th + u * (-(1.0 - q).ln()).powf(1.0 / m), th, m)
        })
        .collect()
}
