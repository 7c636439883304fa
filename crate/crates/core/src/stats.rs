//! Small numerical helpers: summary statistics, Gauss–Hermite rules and
//! the Anderson–Darling normality test.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (denominator `n - 1`).
pub fn sd(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    // shifted by the first value so a constant series gives exactly zero
    let shift = x[0];
    let m = x.iter().map(|v| v - shift).sum::<f64>() / n as f64;
    (x.iter().map(|v| (v - shift - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

fn std_normal() -> Normal {
    Normal::standard()
}

pub fn normal_cdf(z: f64) -> f64 {
    std_normal().cdf(z)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Nodes and weights of the `n`-point Gauss–Hermite rule for the weight
/// `exp(-x^2)`, nodes ascending.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let pim4 = PI.powf(-0.25);
    let half = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..half {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            // normalized Hermite recurrence
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / (pp * pp);
    }
    // the loop produced the nonnegative half in descending order
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..half {
        nodes.push(-x[i]);
        weights.push(w[i]);
    }
    for i in (0..n / 2).rev() {
        nodes.push(x[i]);
        weights.push(w[i]);
    }
    if n % 2 == 1 {
        nodes[half - 1] = 0.0;
    }
    (nodes, weights)
}

/// Nodes and weights for expectations over a standard normal:
/// `E f(Z) ~ sum w_i f(z_i)`.
pub fn normal_quadrature(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_hermite(n);
    let s = PI.sqrt();
    (
        x.iter().map(|v| v * std::f64::consts::SQRT_2).collect(),
        w.iter().map(|v| v / s).collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AndersonDarling {
    /// Raw `A^2` with mean and variance estimated from the data.
    pub statistic: f64,
    /// `A^2 (1 + 0.75/n + 2.25/n^2)`.
    pub adjusted: f64,
    pub p_value: f64,
}

impl AndersonDarling {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

/// Anderson–Darling test of normality with unknown mean and variance.
/// Returns `None` for fewer than 8 points or constant data.
pub fn anderson_darling(x: &[f64]) -> Option<AndersonDarling> {
    let n = x.len();
    if n < 8 {
        return None;
    }
    let m = mean(x);
    let s = sd(x);
    if !(s > 0.0) {
        return None;
    }
    let mut z: Vec<f64> = x.iter().map(|v| (v - m) / s).collect();
    z.sort_by(f64::total_cmp);
    let normal = std_normal();
    let nf = n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let lo = normal.cdf(z[i]).ln();
        let hi = normal.cdf(-z[n - 1 - i]).ln();
        acc += (2.0 * i as f64 + 1.0) * (lo + hi);
    }
    let a2 = -nf - acc / nf;
    let adj = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let p = if adj >= 0.6 {
        (1.2937 - 5.709 * adj + 0.0186 * adj * adj).exp()
    } else if adj >= 0.34 {
        (0.9177 - 4.279 * adj - 1.38 * adj * adj).exp()
    } else if adj >= 0.2 {
        1.0 - (-8.318 + 42.796 * adj - 59.938 * adj * adj).exp()
    } else {
        1.0 - (-13.436 + 101.14 * adj - 223.73 * adj * adj).exp()
    };
    Some(AndersonDarling {
        statistic: a2,
        adjusted: adj,
        p_value: p.clamp(0.0, 1.0),
    })
}

/// Theoretical normal quantiles for `n` ordered points, Blom positions.
pub fn normal_scores(n: usize) -> Vec<f64> {
    let nf = n as f64;
    (1..=n)
        .map(|i| normal_quantile((i as f64 - 0.375) / (nf + 0.25)))
        .collect()
}
