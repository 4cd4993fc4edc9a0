//! Signal quality metrics in decibels.
//!
//! All results are clamped to `[-80, 80]` dB. No mean removal is applied
//! before the scale-invariant metrics.

use alloc::format;

use crate::error::{Error, Result};

pub const DB_CLAMP: f64 = 80.0;

fn clamp_db(num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        return DB_CLAMP;
    }
    if num <= 0.0 {
        return -DB_CLAMP;
    }
    (10.0 * libm::log10(num / den)).clamp(-DB_CLAMP, DB_CLAMP)
}

fn check_pair(reference: &[f32], estimate: &[f32]) -> Result<()> {
    if reference.len() != estimate.len() {
        return Err(Error::invalid(format!(
            "length mismatch: reference {} vs estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::invalid("empty signals"));
    }
    Ok(())
}

fn energy(x: &[f32]) -> f64 {
    x.iter().map(|&v| v as f64 * v as f64).sum()
}

/// `10 log10(|ref|^2 / |ref - est|^2)`.
pub fn snr(reference: &[f32], estimate: &[f32]) -> Result<f64> {
    check_pair(reference, estimate)?;
    let noise: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(&r, &e)| {
            let d = r as f64 - e as f64;
            d * d
        })
        .sum();
    Ok(clamp_db(energy(reference), noise))
}

/// Scale-invariant SNR: the estimate is split into its projection onto the
/// reference, `s = (<est, ref> / |ref|^2) ref`, and the residual `est - s`.
pub fn si_snr(reference: &[f32], estimate: &[f32]) -> Result<f64> {
    check_pair(reference, estimate)?;
    let ref_energy = energy(reference);
    if ref_energy == 0.0 {
        return Err(Error::invalid("si_snr: reference is all zero"));
    }
    let dot: f64 = reference.iter().zip(estimate).map(|(&r, &e)| r as f64 * e as f64).sum();
    let alpha = dot / ref_energy;
    let mut target = 0.0;
    let mut residual = 0.0;
    for (&r, &e) in reference.iter().zip(estimate) {
        let s = alpha * r as f64;
        let d = e as f64 - s;
        target += s * s;
        residual += d * d;
    }
    Ok(clamp_db(target, residual))
}

/// Improvement of the estimate over the unprocessed mixture.
pub fn si_snri(mixture: &[f32], reference: &[f32], estimate: &[f32]) -> Result<f64> {
    check_pair(reference, mixture)?;
    Ok(si_snr(reference, estimate)? - si_snr(reference, mixture)?)
}

/// Training objective value, `-(0.9 SNR + 0.1 SI-SNR)`.
pub fn loss_value(reference: &[f32], estimate: &[f32]) -> Result<f64> {
    Ok(-(0.9 * snr(reference, estimate)? + 0.1 * si_snr(reference, estimate)?))
}
