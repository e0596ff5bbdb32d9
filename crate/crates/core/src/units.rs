//! Small numeric helpers shared across modules.

use num_complex::Complex64;

/// Gain reported for an all-zero field. Compares below every finite threshold.
pub const NULL_GAIN_DB: f64 = f64::NEG_INFINITY;

/// `10·log10(p)`, with zero power mapped to [`NULL_GAIN_DB`].
pub fn power_to_db(p: f64) -> f64 {
    if p <= 0.0 {
        NULL_GAIN_DB
    } else {
        10.0 * p.log10()
    }
}

pub fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Wraps degrees into (−180, 180].
pub fn wrap_deg(x: f64) -> f64 {
    let r = x.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Wraps radians into (−π, π].
pub fn wrap_rad(x: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = x.rem_euclid(tau);
    if r > std::f64::consts::PI {
        r - tau
    } else {
        r
    }
}

/// `Σ conj(w_i)·e_i`, accumulated left to right from zero.
pub fn inner(w: &[Complex64], e: &[Complex64]) -> Complex64 {
    w.iter()
        .zip(e)
        .fold(Complex64::new(0.0, 0.0), |acc, (w, e)| acc + w.conj() * e)
}

pub fn total_power(e: &[Complex64]) -> f64 {
    e.iter().map(|z| z.norm_sqr()).sum()
}
