use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fields::DisplacementField;

/// Noise standard deviation for a displacement field at the given SNR:
/// `|mean / snr|`, where the mean pools both channels.
pub fn noise_sigma(clean: &DisplacementField, snr: f64) -> Result<f64> {
    if !(snr > 0.0) || !snr.is_finite() {
        return Err(Error::Invalid(format!("snr must be positive and finite, got {snr}")));
    }
    let n = (clean.ux.len() + clean.uy.len()) as f64;
    let mean = (clean.ux.values().sum() + clean.uy.values().sum()) / n;
    if mean == 0.0 {
        return Err(Error::DegenerateSignalMean);
    }
    Ok((mean / snr).abs())
}

/// Adds i.i.d. zero-mean Gaussian noise to both channels with a single
/// standard deviation `|mean(u) / snr|`. The same seed always yields the same
/// output.
pub fn add_noise(clean: &DisplacementField, snr: f64, seed: u64) -> Result<DisplacementField> {
    let sigma = noise_sigma(clean, snr)?;
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ux = clean.ux.values().mapv(|v| v + normal.sample(&mut rng));
    let uy = clean.uy.values().mapv(|v| v + normal.sample(&mut rng));
    DisplacementField::new(clean.ux.with_values(ux)?, clean.uy.with_values(uy)?)
}
