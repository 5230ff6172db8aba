#![allow(dead_code)]

use cmkv::model::build_model;
use cmkv::ModelSpec;
use serde_json::json;

pub fn builtin(name: &str) -> ModelSpec {
    ModelSpec::builtin(name).expect("builtin model")
}

/// `b = σ = 0`, `Ψ = 0`, unit rate: every path stays at its initial draw.
pub fn zero_dynamics() -> ModelSpec {
    build_model(&json!({
        "model": "custom", "b": "0", "sigma": "0", "f": "1", "psi": "0", "nu1": "rademacher"
    }))
    .unwrap()
}

/// `b = -x`, `σ = 0`, `Ψ = 0`.
pub fn deterministic_decay() -> ModelSpec {
    build_model(&json!({
        "model": "custom", "b": "-x", "sigma": "0", "f": "1", "psi": "0", "nu1": "rademacher"
    }))
    .unwrap()
}

pub fn custom(b: &str, sigma: &str, f: &str, psi: &str) -> ModelSpec {
    build_model(&json!({"model": "custom", "b": b, "sigma": sigma, "f": f, "psi": psi, "nu1": "rademacher"})).unwrap()
}

/// Minimum of `Σ (a_i − b_π(i))² / L` over all permutations `π` of the
/// samples expanded to a common length `L = lcm(n, m)`. By Birkhoff's
/// theorem this is the minimum over all couplings of the two uniform laws.
pub fn w2_sq_exhaustive(a: &[f64], b: &[f64]) -> f64 {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    let l = a.len() / gcd(a.len(), b.len()) * b.len();
    let xa: Vec<f64> = a.iter().flat_map(|&x| std::iter::repeat_n(x, l / a.len())).collect();
    let xb: Vec<f64> = b.iter().flat_map(|&x| std::iter::repeat_n(x, l / b.len())).collect();
    assert!(l <= 16, "exhaustive coupling limited to 16 points");
    let mut dp = vec![f64::INFINITY; 1 << l];
    dp[0] = 0.0;
    for mask in 0usize..(1 << l) {
        if !dp[mask].is_finite() {
            continue;
        }
        let i = mask.count_ones() as usize;
        if i == l {
            continue;
        }
        for j in 0..l {
            if mask & (1 << j) == 0 {
                let c = dp[mask] + (xa[i] - xb[j]).powi(2);
                let next = mask | (1 << j);
                if c < dp[next] {
                    dp[next] = c;
                }
            }
        }
    }
    dp[(1 << l) - 1] / l as f64
}

pub mod golden;
