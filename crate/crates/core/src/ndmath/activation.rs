use alloc::format;
use alloc::vec::Vec;

use super::{Rng, Vector};
use crate::{Error, Result};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[inline]
pub fn leaky_relu_scalar(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Derivative of [`leaky_relu_scalar`]; the subgradient at exactly 0 is 1.
#[inline]
pub fn leaky_relu_grad_scalar(x: f64, slope: f64) -> f64 {
    if x < 0.0 {
        slope
    } else {
        1.0
    }
}

pub fn leaky_relu(x: &[f64], slope: f64) -> Vector {
    Vector::from_raw(x.iter().map(|&v| leaky_relu_scalar(v, slope)).collect())
}

pub fn leaky_relu_grad(x: &[f64], slope: f64) -> Vector {
    Vector::from_raw(x.iter().map(|&v| leaky_relu_grad_scalar(v, slope)).collect())
}

/// Max-shifted softmax written into `out`.
pub fn softmax_into(z: &[f64], out: &mut [f64]) {
    debug_assert_eq!(z.len(), out.len());
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &zi) in out.iter_mut().zip(z) {
        *o = libm::exp(zi - max);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn softmax(z: &[f64]) -> Vector {
    let mut out = alloc::vec![0.0; z.len()];
    softmax_into(z, &mut out);
    Vector::from_raw(out)
}

/// `log softmax(z)[i]`, computed without forming the probabilities.
pub fn log_softmax_at(z: &[f64], i: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse: f64 = z.iter().map(|&v| libm::exp(v - max)).sum();
    z[i] - max - libm::log(lse)
}

/// Inverse-CDF draw from `p` using a single uniform variate.
pub fn sample_categorical(p: &[f64], rng: &mut Rng) -> Result<usize> {
    validate_distribution(p)?;
    let u = rng.next_f64();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            last_positive = i;
            cumulative += pi;
            if u < cumulative {
                return Ok(i);
            }
        }
    }
    // u landed in the rounding gap above the final partial sum.
    Ok(last_positive)
}

fn validate_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution("empty".into()));
    }
    if let Some(v) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidDistribution(format!("entry {v}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("sums to {total}")));
    }
    Ok(())
}

/// One-hot vector of length `n`.
pub fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = alloc::vec![0.0; n];
    v[i] = 1.0;
    v
}
