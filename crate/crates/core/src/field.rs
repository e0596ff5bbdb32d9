//! Per-antenna complex field maps and the multiplicative blockage model.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Direction, SphericalGrid, ANGLE_TOL_DEG};
use crate::units::{db_to_amplitude, db_to_power};

/// Geometry and element model of the synthetic UE array (linear, along Z).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayConfig {
    pub n_antennas: usize,
    /// Element spacing in wavelengths.
    pub element_spacing: f64,
    pub boresight_theta_deg: f64,
    pub boresight_phi_deg: f64,
    /// Exponent `q` of the cos^q power envelope.
    pub element_exponent: f64,
    pub peak_element_gain_db: f64,
    /// Floor of the envelope relative to the peak, in dB (≤ 0). Keeps back-lobe fields nonzero.
    pub backlobe_floor_db: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            n_antennas: 4,
            element_spacing: 0.5,
            boresight_theta_deg: 90.0,
            boresight_phi_deg: 255.0,
            element_exponent: 1.0,
            peak_element_gain_db: 18.0,
            backlobe_floor_db: -25.0,
        }
    }
}

impl ArrayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_antennas < 1 {
            return Err(Error::InvalidParameter(
                "array needs at least one antenna".into(),
            ));
        }
        if !(self.element_spacing.is_finite() && self.element_spacing > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "element spacing must be > 0, got {}",
                self.element_spacing
            )));
        }
        if !(self.element_exponent.is_finite() && self.element_exponent >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "element exponent must be >= 0, got {}",
                self.element_exponent
            )));
        }
        if !self.peak_element_gain_db.is_finite()
            || self.backlobe_floor_db.is_nan()
            || self.backlobe_floor_db > 0.0
        {
            return Err(Error::InvalidParameter(
                "peak gain must be finite and back-lobe floor <= 0 dB".into(),
            ));
        }
        Ok(())
    }

    pub fn boresight(&self) -> Direction {
        Direction::new(self.boresight_theta_deg, self.boresight_phi_deg)
    }

    /// Linear amplitude envelope `g(θ,φ)` shared by every element.
    pub fn envelope(&self, dir: Direction) -> f64 {
        let gamma = dir.angular_distance_deg(&self.boresight()).to_radians();
        let power = gamma.cos().max(0.0).powf(self.element_exponent);
        let power = power.max(db_to_power(self.backlobe_floor_db));
        db_to_amplitude(self.peak_element_gain_db) * power.sqrt()
    }
}

/// Complex far field of N antennas over a grid, stored antenna-major then θ-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaFieldMap {
    grid: SphericalGrid,
    n_antennas: usize,
    samples: Vec<Complex64>,
    pub label: String,
}

impl AntennaFieldMap {
    pub fn new(
        grid: SphericalGrid,
        n_antennas: usize,
        samples: Vec<Complex64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if n_antennas < 1 {
            return Err(Error::InvalidParameter(
                "field map needs at least one antenna".into(),
            ));
        }
        if samples.len() != n_antennas * grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for {} antennas × {} directions",
                samples.len(),
                n_antennas,
                grid.len()
            )));
        }
        if let Some(k) = samples
            .iter()
            .position(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::NonFinite(format!(
                "sample {} (antenna {}, cell {})",
                k,
                k / grid.len(),
                k % grid.len()
            )));
        }
        Ok(Self {
            grid,
            n_antennas,
            samples,
            label: label.into(),
        })
    }

    /// Builds a map by evaluating `f(antenna, direction)` at every sample.
    pub fn from_fn(
        grid: SphericalGrid,
        n_antennas: usize,
        label: impl Into<String>,
        f: impl Fn(usize, Direction) -> Complex64,
    ) -> Result<Self> {
        let samples = (0..n_antennas)
            .flat_map(|i| grid.directions().map(move |d| (i, d)).collect::<Vec<_>>())
            .map(|(i, d)| f(i, d))
            .collect();
        Self::new(grid, n_antennas, samples, label)
    }

    pub fn grid(&self) -> &SphericalGrid {
        &self.grid
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn get(&self, antenna: usize, cell: usize) -> Complex64 {
        self.samples[antenna * self.grid.len() + cell]
    }

    /// The N-element field vector at a flat cell index.
    pub fn vector(&self, cell: usize) -> Vec<Complex64> {
        (0..self.n_antennas).map(|i| self.get(i, cell)).collect()
    }

    /// The N-element field vector at an on-grid direction.
    pub fn vector_at(&self, dir: Direction) -> Result<Vec<Complex64>> {
        Ok(self.vector(self.grid.locate(dir)?))
    }

    pub(crate) fn check_antenna(&self, i: usize) -> Result<()> {
        if i >= self.n_antennas {
            return Err(Error::InvalidParameter(format!(
                "antenna index {i} out of range for {} antennas",
                self.n_antennas
            )));
        }
        Ok(())
    }

    pub(crate) fn check_compatible(&self, other: &AntennaFieldMap) -> Result<()> {
        if self.grid != other.grid || self.n_antennas != other.n_antennas {
            return Err(Error::DimensionMismatch(format!(
                "field `{}` ({} antennas) and field `{}` ({} antennas) do not share a grid and array",
                self.label, self.n_antennas, other.label, other.n_antennas
            )));
        }
        Ok(())
    }

    /// Multiplies every sample by `c`.
    pub fn scaled(&self, c: Complex64) -> Result<Self> {
        let samples = self.samples.iter().map(|z| z * c).collect();
        Self::new(self.grid, self.n_antennas, samples, self.label.clone())
    }
}

/// Per-antenna, per-direction amplitude factor `A ≥ 0` and phase offset `P ∈ [0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionField {
    grid: SphericalGrid,
    n_antennas: usize,
    amp: Vec<f64>,
    phase: Vec<f64>,
}

impl DistortionField {
    /// Phases are reduced into [0, 2π) on construction.
    pub fn new(
        grid: SphericalGrid,
        n_antennas: usize,
        amp: Vec<f64>,
        phase: Vec<f64>,
    ) -> Result<Self> {
        let n = n_antennas * grid.len();
        if amp.len() != n || phase.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "distortion needs {n} amplitude and phase values, got {} and {}",
                amp.len(),
                phase.len()
            )));
        }
        if amp.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidParameter(
                "distortion amplitudes must be finite and >= 0".into(),
            ));
        }
        if phase.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("distortion phase".into()));
        }
        let tau = std::f64::consts::TAU;
        let phase = phase
            .into_iter()
            .map(|p| {
                let r = p.rem_euclid(tau);
                if r >= tau {
                    0.0
                } else {
                    r
                }
            })
            .collect();
        Ok(Self {
            grid,
            n_antennas,
            amp,
            phase,
        })
    }

    pub fn identity(grid: SphericalGrid, n_antennas: usize) -> Self {
        let n = n_antennas * grid.len();
        Self {
            grid,
            n_antennas,
            amp: vec![1.0; n],
            phase: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> &SphericalGrid {
        &self.grid
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn amp(&self) -> &[f64] {
        &self.amp
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
    }

    pub fn amp_at(&self, antenna: usize, cell: usize) -> f64 {
        self.amp[antenna * self.grid.len() + cell]
    }

    pub fn phase_at(&self, antenna: usize, cell: usize) -> f64 {
        self.phase[antenna * self.grid.len() + cell]
    }
}

/// Synthetic Freespace map: `E_i = g(θ,φ)·exp(j·2π·d·i·cosθ)`.
pub fn synth_freespace_field(cfg: &ArrayConfig, grid: &SphericalGrid) -> Result<AntennaFieldMap> {
    cfg.validate()?;
    let k = std::f64::consts::TAU * cfg.element_spacing;
    AntennaFieldMap::from_fn(*grid, cfg.n_antennas, "free", |i, dir| {
        let g = cfg.envelope(dir);
        let phase = k * i as f64 * dir.theta_deg.to_radians().cos();
        Complex64::from_polar(g, phase)
    })
}

/// `E_blockage,i = E_free,i · A_i·e^{jP_i}` sample by sample.
pub fn apply_distortion(field: &AntennaFieldMap, d: &DistortionField) -> Result<AntennaFieldMap> {
    if field.grid != d.grid || field.n_antennas != d.n_antennas {
        return Err(Error::DimensionMismatch(format!(
            "distortion ({} antennas) does not match field `{}` ({} antennas) or its grid",
            d.n_antennas, field.label, field.n_antennas
        )));
    }
    let samples = field
        .samples
        .iter()
        .zip(d.amp.iter().zip(&d.phase))
        .map(|(&z, (&a, &p))| {
            if a == 1.0 && p == 0.0 {
                z
            } else {
                z * Complex64::from_polar(a, p)
            }
        })
        .collect();
    AntennaFieldMap::new(field.grid, field.n_antennas, samples, "blockage")
}

struct AxisWeight {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn theta_weight(src: &SphericalGrid, theta: f64) -> Result<AxisWeight> {
    let t = (theta - src.theta_start) / src.theta_step;
    let last = (src.n_theta() - 1) as f64;
    if t < -ANGLE_TOL_DEG || t > last + ANGLE_TOL_DEG {
        return Err(Error::OutOfSpan(format!(
            "theta {theta}° outside sampled range [{}, {}]",
            src.theta_start,
            src.theta(src.n_theta() - 1)
        )));
    }
    Ok(split_axis(t.clamp(0.0, last), src.n_theta(), false))
}

fn phi_weight(src: &SphericalGrid, phi: f64) -> Result<AxisWeight> {
    if src.wraps_phi() {
        let u = (phi - src.phi_start).rem_euclid(360.0) / src.phi_step;
        return Ok(split_axis(u, src.n_phi(), true));
    }
    let u = (phi - src.phi_start) / src.phi_step;
    let last = (src.n_phi() - 1) as f64;
    if u < -ANGLE_TOL_DEG || u > last + ANGLE_TOL_DEG {
        return Err(Error::OutOfSpan(format!(
            "phi {phi}° outside sampled range [{}, {}]",
            src.phi_start,
            src.phi(src.n_phi() - 1)
        )));
    }
    Ok(split_axis(u.clamp(0.0, last), src.n_phi(), false))
}

fn split_axis(u: f64, n: usize, wrap: bool) -> AxisWeight {
    let r = u.round();
    if (u - r).abs() < 1e-12 {
        let k = (r as usize) % n;
        return AxisWeight {
            lo: k,
            hi: k,
            frac: 0.0,
        };
    }
    let lo = u.floor() as usize;
    let hi = if wrap {
        (lo + 1) % n
    } else {
        (lo + 1).min(n - 1)
    };
    AxisWeight {
        lo: lo % n,
        hi,
        frac: u - u.floor(),
    }
}

fn lerp(a: Complex64, b: Complex64, f: f64) -> Complex64 {
    if f == 0.0 {
        a
    } else {
        a + (b - a) * f
    }
}

/// Bilinear resampling onto `target`, interpolating re and im independently.
///
/// φ wraps around when the source covers the full circle.
pub fn resample(field: &AntennaFieldMap, target: &SphericalGrid) -> Result<AntennaFieldMap> {
    if *target == field.grid {
        return Ok(field.clone());
    }
    let src = &field.grid;
    let tw = (0..target.n_theta())
        .map(|it| theta_weight(src, target.theta(it)))
        .collect::<Result<Vec<_>>>()?;
    let pw = (0..target.n_phi())
        .map(|ip| phi_weight(src, target.phi(ip)))
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<Complex64> = (0..field.n_antennas)
        .into_par_iter()
        .flat_map_iter(|i| {
            let tw = &tw;
            let pw = &pw;
            (0..target.len()).map(move |c| {
                let (it, ip) = target.split(c);
                let (t, p) = (&tw[it], &pw[ip]);
                let at = |a: usize, b: usize| field.get(i, src.cell(a, b));
                let low = lerp(at(t.lo, p.lo), at(t.lo, p.hi), p.frac);
                if t.frac == 0.0 {
                    low
                } else {
                    let high = lerp(at(t.hi, p.lo), at(t.hi, p.hi), p.frac);
                    lerp(low, high, t.frac)
                }
            })
        })
        .collect();
    AntennaFieldMap::new(*target, field.n_antennas, samples, field.label.clone())
}
